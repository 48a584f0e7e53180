"""Bootstrap and analytic inference: simultaneous bands, classical and
relevant tests, and prediction bands.

All bootstrap decisions are computed in the cancelled form: the rate factor
sqrt(n) * lambda^{(2a+1)/(4D)} multiplies the stored processes for reporting
but divides back out of every band width and threshold, so decisions use the
raw refit deviations directly. The empirical quantile is the order statistic
of rank floor((1 - alpha) Q) + 1 (capped at Q), the smallest value whose
empirical exceedance probability is below alpha.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from .core import Curve, FunctionalSample, Surface
from .eigensystem import EigenSystem, thin_plate_energy
from .estimator import (
    FittedModel,
    MULTIPLIER_HIGH,
    MULTIPLIER_LOW,
    MULTIPLIER_LOW_PROB,
    ScalarFittedModel,
    _argmin_larger_ties,
    _gcv_path,
    _solve_coeffs,
    assemble_surface,
    compute_scores,
    compute_scores_scalar,
    default_lambda_grid,
    ridge_solve,
)
from .exceptions import (
    DegenerateTruncationError,
    FofrError,
    IncompatibleGridsError,
    InvalidMasksError,
    QuantileUnstableError,
    ReplicateFailedError,
)

__all__ = [
    "BootstrapEnsemble",
    "BandResult",
    "ExtremalMasks",
    "TestResult",
    "bootstrap_quantile",
    "bootstrap_ensemble",
    "bootstrap_ensemble_scalar",
    "simultaneous_region",
    "pointwise_interval",
    "classical_test_bt",
    "plrt",
    "extremal_sets",
    "relevant_test",
    "prediction_band",
    "relevant_test_scalar",
]


def bootstrap_quantile(values: np.ndarray, alpha: float) -> float:
    """Empirical (1 - alpha) quantile: order statistic floor((1-alpha)Q) + 1."""
    values = np.asarray(values, dtype=float)
    Q = values.size
    if Q < 1:
        raise ValueError("need at least one value")
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    rank = min(Q, int(np.floor((1.0 - alpha) * Q + 1e-9)) + 1)
    return float(np.sort(values)[rank - 1])


@dataclass(frozen=True)
class BootstrapEnsemble:
    """Multiplier-bootstrap refit deviations around the base fit.

    ``deviations`` stores the raw per-replicate differences (bootstrap fit
    minus base fit) on the grid; ``processes`` is the rate-scaled version.
    """

    Q: int
    deviations: np.ndarray = field(repr=False)  # (Q, G, G) or (Q, G)
    scale: float
    seed: object
    lambdas: np.ndarray = field(repr=False)  # per-replicate GCV choices

    @property
    def processes(self) -> np.ndarray:
        return self.scale * self.deviations

    @property
    def is_scalar(self) -> bool:
        return self.deviations.ndim == 2


def _draw_multiplier_matrix(Q: int, n: int, seed) -> np.ndarray:
    """Per-replicate multiplier rows from spawned substreams of the seed."""
    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    M = np.empty((Q, n))
    for q, child in enumerate(root.spawn(Q)):
        u = np.random.default_rng(child).random(n)
        M[q] = np.where(u < MULTIPLIER_LOW_PROB, MULTIPLIER_LOW, MULTIPLIER_HIGH)
    return M


def _batched_refit(scores, M: np.ndarray, lambda_grid) -> tuple[np.ndarray, np.ndarray]:
    """GCV-selected coefficients per weight row; returns (coeffs, lambdas)."""
    if lambda_grid is None:
        lambda_grid = default_lambda_grid(scores)
    lam = np.sort(np.asarray(lambda_grid, dtype=float))
    gcv = _gcv_path(scores, M, lam)
    bad = ~np.isfinite(gcv).any(axis=1)
    if bad.any():
        q = int(np.nonzero(bad)[0][0])
        raise ReplicateFailedError(q, FofrError("GCV undefined on every grid point"))
    idx = _argmin_larger_ties(gcv)
    try:
        coeffs = _solve_coeffs(scores, M, lam[idx])
    except FofrError as exc:  # pragma: no cover - defensive; solves mirror selection
        raise ReplicateFailedError(-1, exc) from exc
    return coeffs, lam[idx]


def bootstrap_ensemble(
    X: FunctionalSample,
    Y: FunctionalSample,
    fitted: FittedModel,
    Q: int,
    seed,
    lambda_grid=None,
    multiplier_matrix: np.ndarray | None = None,
) -> BootstrapEnsemble:
    """Refit under Q multiplier draws and store the deviations from the fit.

    Each replicate re-selects its own lambda by GCV. ``multiplier_matrix``
    overrides the random draws (diagnostics only, e.g. forcing unit weights).
    """
    if Q < 1:
        raise ValueError(f"need Q >= 1 replicates, got {Q}")
    es = fitted.eigensystem
    scores = compute_scores(X, Y, es)
    M = multiplier_matrix if multiplier_matrix is not None else _draw_multiplier_matrix(Q, X.n, seed)
    M = np.asarray(M, dtype=float)
    if M.shape != (Q, X.n):
        raise ValueError(f"multiplier matrix must be ({Q}, {X.n}), got {M.shape}")
    coeffs, lams = _batched_refit(scores, M, lambda_grid)
    per_l = np.einsum("qkl,klg->qlg", coeffs, es.xfun)
    surfaces = np.einsum("qlg,lh->qgh", per_l, es.eta)
    return BootstrapEnsemble(
        Q=Q,
        deviations=surfaces - fitted.beta_hat.values[None],
        scale=fitted.scale,
        seed=seed,
        lambdas=lams,
    )


def bootstrap_ensemble_scalar(
    X: FunctionalSample,
    y: np.ndarray,
    fitted: ScalarFittedModel,
    Q: int,
    seed,
    lambda_grid=None,
    multiplier_matrix: np.ndarray | None = None,
) -> BootstrapEnsemble:
    """Scalar-response analogue of :func:`bootstrap_ensemble` (curve processes)."""
    if Q < 1:
        raise ValueError(f"need Q >= 1 replicates, got {Q}")
    es = fitted.eigensystem
    scores = compute_scores_scalar(X, y, es)
    M = multiplier_matrix if multiplier_matrix is not None else _draw_multiplier_matrix(Q, X.n, seed)
    M = np.asarray(M, dtype=float)
    if M.shape != (Q, X.n):
        raise ValueError(f"multiplier matrix must be ({Q}, {X.n}), got {M.shape}")
    coeffs, lams = _batched_refit(scores, M, lambda_grid)
    curves = np.einsum("qk,kg->qg", coeffs[:, :, 0], es.xfun[:, 0])
    return BootstrapEnsemble(
        Q=Q,
        deviations=curves - fitted.beta_hat.values[None],
        scale=fitted.scale,
        seed=seed,
        lambdas=lams,
    )


@dataclass(frozen=True)
class BandResult:
    """Equal-width simultaneous band around a center estimate."""

    lower: Surface | Curve
    upper: Surface | Curve
    alpha: float
    quantile: float  # quantile of the rate-scaled sup statistic
    Q: int

    @property
    def halfwidth(self) -> float:
        return float((self.upper.values - self.lower.values).max() / 2)


def simultaneous_region(
    ensemble: BootstrapEnsemble, fitted: FittedModel, alpha: float
) -> BandResult:
    """Sup-norm bootstrap band: center plus/minus the sup-deviation quantile."""
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    if ensemble.Q < np.ceil(1.0 / alpha):
        raise QuantileUnstableError(
            f"Q={ensemble.Q} replicates cannot resolve the {1 - alpha:.3g} quantile"
        )
    sups = np.abs(ensemble.deviations).reshape(ensemble.Q, -1).max(axis=1)
    hw = bootstrap_quantile(sups, alpha)
    grid = fitted.beta_hat.grid
    return BandResult(
        lower=grid.surface(fitted.beta_hat.values - hw),
        upper=grid.surface(fitted.beta_hat.values + hw),
        alpha=alpha,
        quantile=hw * ensemble.scale,
        Q=ensemble.Q,
    )


def pointwise_interval(
    fitted: FittedModel, es: EigenSystem, s_index: int, t_index: int, alpha: float
) -> tuple[float, float]:
    """Pointwise normal interval from the truncated kernel variance."""
    G = es.grid.size
    if not (0 <= s_index < G and 0 <= t_index < G):
        raise ValueError("grid indices out of range")
    phi = es.xfun[:, :, s_index] * es.eta[:, t_index][None, :]  # (k, l)
    var = float(((phi / (1.0 + fitted.lambda_ * es.rho)) ** 2).sum())
    half = norm.ppf(1.0 - alpha / 2.0) * np.sqrt(var / fitted.n)
    center = float(fitted.beta_hat.values[s_index, t_index])
    return center - half, center + half


@dataclass(frozen=True)
class TestResult:
    """Decision record: reject iff statistic strictly exceeds the threshold."""

    statistic: float
    threshold: float
    reject: bool
    kind: str
    diagnostics: dict = field(default_factory=dict, repr=False)


def classical_test_bt(beta_star: Surface, band: BandResult) -> TestResult:
    """Reject when the hypothesized surface exits the simultaneous band."""
    if beta_star.grid != band.lower.grid:
        raise IncompatibleGridsError("surface and band live on different grids")
    above = beta_star.values - band.upper.values
    below = band.lower.values - beta_star.values
    stat = float(max(above.max(), below.max(), 0.0))
    return TestResult(
        statistic=stat,
        threshold=0.0,
        reject=stat > 0.0,
        kind="classical-bt",
        diagnostics={"alpha": band.alpha, "Q": band.Q, "quantile": band.quantile},
    )


def _objective_value(
    beta: np.ndarray, X: FunctionalSample, Y: FunctionalSample, lam: float
) -> float:
    """Penalized loss of an arbitrary surface, entirely by quadrature."""
    w = X.grid.weight
    resid = Y.data - w * X.data @ beta
    loss = w * float((resid**2).sum()) / (2 * X.n)
    if lam == 0.0:
        return loss
    return loss + lam / 2.0 * thin_plate_energy(beta, X.grid)


def plrt(
    beta_star: Surface,
    X: FunctionalSample,
    Y: FunctionalSample,
    es: EigenSystem,
    lam: float,
    alpha: float = 0.05,
) -> TestResult:
    """Penalized likelihood-ratio test with normal calibration.

    The statistic is the drop in penalized loss between the hypothesized
    surface and the fit at the same lambda, normalized by a residual-based
    estimate of the projection noise variance (the displayed limit theorem
    takes unit-variance white noise).
    """
    if lam < 0:
        raise ValueError(f"lambda must be >= 0, got {lam}")
    if beta_star.grid != es.grid:
        raise IncompatibleGridsError("surface and eigensystem grids differ")
    scores = compute_scores(X, Y, es)
    coeffs = ridge_solve(scores, lam)
    beta_hat = assemble_surface(coeffs, es)
    Ln = _objective_value(beta_star.values, X, Y, lam) - _objective_value(
        beta_hat.values, X, Y, lam
    )
    n, v = scores.n, scores.v
    N = n * v
    fitted_y = np.stack([scores.omega[l] @ coeffs[:, l] for l in range(v)], axis=1)
    rss = float(((scores.ytilde - fitted_y) ** 2).sum())
    tr_h = 0.0
    for l in range(v):
        C = scores.omega[l].T @ scores.omega[l]
        A = C + n * lam * np.diag(scores.rho[:, l])
        tr_h += float(np.trace(np.linalg.solve(A, C)))
    shrink = 1.0 / (1.0 + lam * scores.rho)
    sigma2 = rss / (N - tr_h)
    u_n = float(shrink.sum()) ** 2 / float((shrink**2).sum())
    sigma_n2 = float(shrink.sum()) / float((shrink**2).sum())
    if u_n <= 0:
        raise DegenerateTruncationError("u_n <= 0 in truncated sums")
    stat = (2 * n * sigma_n2 * Ln / sigma2 - u_n) / np.sqrt(2 * u_n)
    threshold = float(norm.ppf(1 - alpha))
    return TestResult(
        statistic=float(stat),
        threshold=threshold,
        reject=bool(stat > threshold),
        kind="plrt",
        diagnostics={
            "u_n": u_n,
            "sigma_n2": sigma_n2,
            "L_n": float(Ln),
            "sigma_eps2": sigma2,
            "lambda": lam,
            "alpha": alpha,
        },
    )


@dataclass(frozen=True)
class ExtremalMasks:
    """Grid regions within the cutoff of the extreme positive/negative deviation."""

    plus: np.ndarray = field(repr=False)
    minus: np.ndarray = field(repr=False)
    cutoff: float
    dhat: float
    c: float


def _extremal_masks(diff: np.ndarray, n: int, c: float) -> ExtremalMasks:
    if c <= 0:
        raise ValueError(f"cutoff constant c must be > 0, got {c}")
    dhat = float(np.abs(diff).max())
    cutoff = c * np.log(n) / np.sqrt(n)
    return ExtremalMasks(
        plus=diff >= dhat - cutoff,
        minus=diff <= -dhat + cutoff,
        cutoff=float(cutoff),
        dhat=dhat,
        c=float(c),
    )


def extremal_sets(fitted: FittedModel, beta_star: Surface, c: float | None = None) -> ExtremalMasks:
    """Estimated extremal sets of the difference between fit and hypothesis.

    ``c`` defaults to a quarter of the sup-norm of the fitted surface.
    """
    if beta_star.grid != fitted.beta_hat.grid:
        raise IncompatibleGridsError("surfaces live on different grids")
    if c is None:
        c = float(np.abs(fitted.beta_hat.values).max()) / 4.0
    return _extremal_masks(fitted.beta_hat.values - beta_star.values, fitted.n, c)


def _masked_sup_stats(ensemble: BootstrapEnsemble, masks: ExtremalMasks) -> np.ndarray:
    has_plus = bool(masks.plus.any())
    has_minus = bool(masks.minus.any())
    if not has_plus and not has_minus:
        raise InvalidMasksError("both extremal masks are empty")
    stats = np.full(ensemble.Q, -np.inf)
    if has_plus:
        stats = np.maximum(stats, ensemble.deviations[:, masks.plus].max(axis=1))
    if has_minus:
        stats = np.maximum(stats, (-ensemble.deviations[:, masks.minus]).max(axis=1))
    return stats


def relevant_test(
    beta_star: Surface,
    delta: float,
    alpha: float,
    ensemble: BootstrapEnsemble,
    masks: ExtremalMasks,
) -> TestResult:
    """Bootstrap test of whether the sup deviation exceeds the margin delta."""
    if delta < 0:
        raise ValueError(f"delta must be >= 0, got {delta}")
    stats = _masked_sup_stats(ensemble, masks)
    q = bootstrap_quantile(stats, alpha)
    threshold = delta + q
    return TestResult(
        statistic=masks.dhat,
        threshold=float(threshold),
        reject=bool(masks.dhat > threshold),
        kind="relevant",
        diagnostics={
            "quantile": q * ensemble.scale,
            "cutoff": masks.cutoff,
            "c": masks.c,
            "delta": delta,
            "alpha": alpha,
            "plus_size": int(masks.plus.sum()),
            "minus_size": int(masks.minus.sum()),
        },
    )


def prediction_band(
    x0: Curve, fitted: FittedModel, ensemble: BootstrapEnsemble, alpha: float
) -> BandResult:
    """Simultaneous band for the conditional mean response at predictor x0."""
    grid = fitted.beta_hat.grid
    if x0.grid != grid:
        raise IncompatibleGridsError("predictor curve lives on a different grid")
    if ensemble.Q < np.ceil(1.0 / alpha):
        raise QuantileUnstableError(
            f"Q={ensemble.Q} replicates cannot resolve the {1 - alpha:.3g} quantile"
        )
    w = grid.weight
    mu = w * (x0.values @ fitted.beta_hat.values)
    paths = w * np.einsum("g,qgh->qh", x0.values, ensemble.deviations)
    sups = np.abs(paths).max(axis=1)
    hw = bootstrap_quantile(sups, alpha)
    return BandResult(
        lower=grid.curve(mu - hw),
        upper=grid.curve(mu + hw),
        alpha=alpha,
        quantile=hw * ensemble.scale,
        Q=ensemble.Q,
    )


def relevant_test_scalar(
    beta_star: Curve,
    delta: float,
    alpha: float,
    ensemble: BootstrapEnsemble,
    fitted: ScalarFittedModel,
    c: float | None = None,
) -> TestResult:
    """One-dimensional relevant test for the scalar-response slope curve."""
    if delta < 0:
        raise ValueError(f"delta must be >= 0, got {delta}")
    if beta_star.grid != fitted.beta_hat.grid:
        raise IncompatibleGridsError("curves live on different grids")
    if not ensemble.is_scalar:
        raise ValueError("expected a scalar (curve) bootstrap ensemble")
    if c is None:
        c = float(np.abs(fitted.beta_hat.values).max()) / 4.0
    masks = _extremal_masks(fitted.beta_hat.values - beta_star.values, fitted.n, c)
    stats = _masked_sup_stats(ensemble, masks)
    q = bootstrap_quantile(stats, alpha)
    threshold = delta + q
    return TestResult(
        statistic=masks.dhat,
        threshold=float(threshold),
        reject=bool(masks.dhat > threshold),
        kind="relevant-scalar",
        diagnostics={
            "quantile": q * ensemble.scale,
            "cutoff": masks.cutoff,
            "c": masks.c,
            "delta": delta,
            "alpha": alpha,
            "plus_size": int(masks.plus.sum()),
            "minus_size": int(masks.minus.sum()),
        },
    )
