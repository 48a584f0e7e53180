"""Penalized least-squares fitting in the truncated eigenbasis.

The slope surface is expanded over the v*v products x_{kl} (x) eta_l. Because
the basis diagonalizes the empirical covariance form, the unweighted normal
matrix is exactly n*I and the penalized solve reduces to v independent ridge
systems, one per frequency block l. Bootstrap refits with multiplier weights
reuse the same machinery with a weighted normal matrix.

Lambda is selected by generalized cross-validation. The GCV deflation uses
the stacked scalar-observation count n*v of the flattened block regression
(each of the v response projections contributes n observations).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .core import Curve, FunctionalSample, Surface
from .eigensystem import EigenSystem
from .exceptions import (
    GcvUndefinedError,
    IncompatibleSamplesError,
    NoValidLambdaError,
    SingularSystemError,
)

__all__ = [
    "ScoreDecomposition",
    "MultiplierWeights",
    "FittedModel",
    "ScalarFittedModel",
    "MULTIPLIER_LOW",
    "MULTIPLIER_HIGH",
    "MULTIPLIER_LOW_PROB",
    "compute_scores",
    "compute_scores_scalar",
    "sample_multipliers",
    "ridge_solve",
    "gcv_score",
    "select_lambda",
    "default_lambda_grid",
    "assemble_surface",
    "fit",
    "fit_scalar",
]

# Two-point multiplier law: mean 1 and variance 1.
MULTIPLIER_LOW = 1.0 - 1.0 / np.sqrt(2.0)
MULTIPLIER_HIGH = 1.0 + np.sqrt(2.0)
MULTIPLIER_LOW_PROB = 2.0 / 3.0

DEFAULT_GRID_SIZE = 40
DEFAULT_GRID_SPAN = (-10.0, 6.0)  # log10 range before the n*median(rho) scaling


@dataclass(frozen=True)
class ScoreDecomposition:
    """Projection scores of a paired sample onto the truncated basis.

    ``omega[l-1]`` is the n x v matrix of predictor scores against the
    x_{kl} for frequency block l; ``ytilde[:, l-1]`` holds the response
    projections on eta_l; ``rho[k-1, l-1]`` the penalty eigenvalues.
    """

    n: int
    v: int
    omega: np.ndarray = field(repr=False)  # (L, n, K)
    ytilde: np.ndarray = field(repr=False)  # (n, L)
    rho: np.ndarray = field(repr=False)  # (K, L)

    def Omega(self, l: int) -> np.ndarray:
        return self.omega[l - 1]

    def Ytilde(self, l: int) -> np.ndarray:
        return self.ytilde[:, l - 1]

    def Lambda(self, l: int) -> np.ndarray:
        return np.diag(self.rho[:, l - 1])


@dataclass(frozen=True)
class MultiplierWeights:
    """n i.i.d. draws from the two-point multiplier law."""

    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or v.size < 1:
            raise ValueError("multiplier weights must be a nonempty vector")
        on_support = np.isin(v, (MULTIPLIER_LOW, MULTIPLIER_HIGH))
        if not on_support.all():
            raise ValueError("multiplier weights must come from the two-point support")
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.size


def sample_multipliers(n: int, seed) -> MultiplierWeights:
    """Draw n multipliers: the low value with probability 2/3, else the high."""
    if n < 1:
        raise ValueError(f"need n >= 1 draws, got {n}")
    rng = np.random.default_rng(seed)
    u = rng.random(n)
    return MultiplierWeights(np.where(u < MULTIPLIER_LOW_PROB, MULTIPLIER_LOW, MULTIPLIER_HIGH))


def compute_scores(
    X: FunctionalSample, Y: FunctionalSample, es: EigenSystem
) -> ScoreDecomposition:
    """Quadrature scores of predictors and responses against the basis."""
    if X.n != Y.n:
        raise IncompatibleSamplesError(f"predictor n={X.n} but response n={Y.n}")
    if X.grid != es.grid or Y.grid != es.grid:
        raise IncompatibleSamplesError("samples and eigensystem must share a grid")
    w = es.grid.weight
    v = es.v
    omega = np.empty((v, X.n, v))
    for l in range(v):
        omega[l] = w * X.data @ es.xfun[:, l].T
    ytilde = w * Y.data @ es.eta.T
    return ScoreDecomposition(n=X.n, v=v, omega=omega, ytilde=ytilde, rho=es.rho.copy())


def compute_scores_scalar(
    X: FunctionalSample, y: np.ndarray, es: EigenSystem
) -> ScoreDecomposition:
    """Scores for a scalar response: only the l = 1 block, ytilde = y."""
    y = np.asarray(y, dtype=float)
    if y.shape != (X.n,):
        raise IncompatibleSamplesError(f"response must have shape ({X.n},), got {y.shape}")
    if X.grid != es.grid:
        raise IncompatibleSamplesError("sample and eigensystem must share a grid")
    w = es.grid.weight
    omega = (w * X.data @ es.xfun[:, 0].T)[None]
    return ScoreDecomposition(
        n=X.n, v=es.v, omega=omega, ytilde=y[:, None], rho=es.rho[:, :1].copy()
    )


def _as_weight_matrix(weights, n: int, Q: int = 1) -> np.ndarray:
    """Normalize a weights argument to a (Q, n) float matrix (unit if None)."""
    if weights is None:
        return np.ones((Q, n))
    if isinstance(weights, MultiplierWeights):
        weights = weights.values
    W = np.asarray(weights, dtype=float)
    if W.ndim == 1:
        W = W[None, :]
    if W.shape[1] != n:
        raise IncompatibleSamplesError(f"weights have length {W.shape[1]}, expected {n}")
    return W


def _weighted_blocks(scores: ScoreDecomposition, M: np.ndarray):
    """Per-replicate weighted normal matrices and right-hand sides.

    Returns C (Q, L, K, K) = Omega' diag(M) Omega and d (Q, L, K).
    Contraction order is fixed so results are identical for any batch size.
    """
    Om = scores.omega
    OmM = M[:, None, :, None] * Om[None]  # (Q, L, n, K)
    C = np.einsum("qlnk,lnj->qlkj", OmM, Om)
    d = np.einsum("qlnk,nl->qlk", OmM, scores.ytilde)
    return C, d


def _ridge_matrices(C: np.ndarray, rho: np.ndarray, n: int, lam) -> np.ndarray:
    """C + n * lam * diag(rho_l), broadcasting lam of shape () or (Q,)."""
    K, L = rho.shape
    diag = np.zeros((L, K, K))
    idx = np.arange(K)
    diag[:, idx, idx] = rho.T
    lam = np.asarray(lam, dtype=float)
    if lam.ndim == 0:
        return C + n * float(lam) * diag[None]
    return C + n * lam[:, None, None, None] * diag[None]


def _solve_block_spd(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    """SPD solve with least-squares fallback; SingularSystemError if rank-deficient."""
    try:
        return scipy.linalg.cho_solve(scipy.linalg.cho_factor(A, lower=True), b)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError, ValueError):
        sol, _, rank, _ = np.linalg.lstsq(A, b, rcond=None)
        if rank < A.shape[0]:
            raise SingularSystemError(
                "penalized normal matrix is rank-deficient"
            ) from None
        return sol


def _solve_coeffs(scores, M: np.ndarray, lam: np.ndarray) -> np.ndarray:
    """Final per-replicate coefficients at given lambdas; returns (Q, K, L)."""
    n = scores.n
    C, d = _weighted_blocks(scores, M)
    A = _ridge_matrices(C, scores.rho, n, lam)
    Q, L, K, _ = A.shape
    out = np.empty((Q, K, L))
    for q in range(Q):
        for l in range(L):
            out[q, :, l] = _solve_block_spd(A[q, l], d[q, l])
    return out


def _gcv_path(scores, M: np.ndarray, lam_grid: np.ndarray) -> np.ndarray:
    """GCV scores over a lambda grid for each replicate; returns (Q, n_lam).

    Undefined entries (effective dof >= the stacked observation count) are
    +inf. The residual norm is unweighted, matching the GCV definition; the
    trace term uses the weighted hat matrix.
    """
    n, L = scores.n, scores.omega.shape[0]
    N = n * L
    C, d = _weighted_blocks(scores, M)
    K = scores.rho.shape[0]
    diag = np.zeros((L, K, K))
    idx = np.arange(K)
    diag[:, idx, idx] = scores.rho.T
    lam = np.asarray(lam_grid, dtype=float)
    A = C[:, None] + n * lam[None, :, None, None, None] * diag[None, None]
    rhs = np.concatenate([d[..., None], C], axis=-1)  # (Q, L, K, 1 + K)
    rhs = np.broadcast_to(rhs[:, None], A.shape[:-1] + (K + 1,))
    try:
        sol = np.linalg.solve(A, rhs)
    except np.linalg.LinAlgError:
        raise NoValidLambdaError("ridge systems singular across the grid") from None
    b = sol[..., 0]  # (Q, nl, L, K)
    trH = np.einsum("qmlkk->qm", sol[..., 1:])
    G_l = np.einsum("lnk,lnj->lkj", scores.omega, scores.omega)
    OtY = np.einsum("lnk,nl->lk", scores.omega, scores.ytilde)
    yy = float(np.einsum("nl,nl->", scores.ytilde, scores.ytilde))
    quad = np.einsum("qmlk,lkj,qmlj->qm", b, G_l, b)
    lin = np.einsum("qmlk,lk->qm", b, OtY)
    resid = quad - 2 * lin + yy
    with np.errstate(divide="ignore", invalid="ignore"):
        gcv = (resid / n) / (1.0 - trH / N) ** 2
    return np.where(trH < N, gcv, np.inf)


def _argmin_larger_ties(gcv: np.ndarray) -> np.ndarray:
    """Column index of the minimum per row, ties resolved to the larger lambda."""
    Q, nl = gcv.shape
    idx = np.zeros(Q, dtype=int)
    best = np.full(Q, np.inf)
    for j in range(nl):
        take = gcv[:, j] <= best
        idx[take] = j
        best[take] = gcv[take, j]
    if not np.all(np.isfinite(best)):
        raise NoValidLambdaError("GCV undefined on every grid point")
    return idx


def default_lambda_grid(scores: ScoreDecomposition) -> np.ndarray:
    """Log-spaced lambda grid scaled by 1 / (n * median positive rho)."""
    pos = scores.rho[scores.rho > 0]
    scale = 1.0 / (scores.n * float(np.median(pos))) if pos.size else 1.0 / scores.n
    lo, hi = DEFAULT_GRID_SPAN
    return np.logspace(lo, hi, DEFAULT_GRID_SIZE) * scale


def ridge_solve(scores: ScoreDecomposition, lam: float, weights=None) -> np.ndarray:
    """Closed-form penalized coefficients; returns the (k, l) matrix."""
    if lam < 0:
        raise ValueError(f"lambda must be >= 0, got {lam}")
    M = _as_weight_matrix(weights, scores.n)
    return _solve_coeffs(scores, M, np.asarray(lam, dtype=float))[0]


def gcv_score(scores: ScoreDecomposition, lam: float, weights=None) -> float:
    """GCV score at one lambda.

    Raises
    ------
    GcvUndefinedError
        If the effective dof reaches the stacked observation count.
    """
    if lam < 0:
        raise ValueError(f"lambda must be >= 0, got {lam}")
    M = _as_weight_matrix(weights, scores.n)
    g = float(_gcv_path(scores, M, np.asarray([lam]))[0, 0])
    if not np.isfinite(g):
        raise GcvUndefinedError(f"hat-matrix trace exhausts the dof at lambda={lam:g}")
    return g


def select_lambda(scores: ScoreDecomposition, weights=None, lambda_grid=None) -> float:
    """Grid minimizer of the GCV score, ties resolved toward more smoothing."""
    if lambda_grid is None:
        lambda_grid = default_lambda_grid(scores)
    lam = np.sort(np.asarray(lambda_grid, dtype=float))
    if lam.size == 0 or np.any(lam <= 0):
        raise ValueError("lambda grid must be nonempty and strictly positive")
    M = _as_weight_matrix(weights, scores.n)
    gcv = _gcv_path(scores, M, lam)
    return float(lam[_argmin_larger_ties(gcv)[0]])


def assemble_surface(coeffs: np.ndarray, es: EigenSystem) -> Surface:
    """Surface with values sum_{k,l} b_{kl} x_{kl}(s) eta_l(t)."""
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.shape != (es.v, es.v):
        raise ValueError(f"coefficients must be ({es.v}, {es.v}), got {coeffs.shape}")
    per_l = np.einsum("kl,klg->lg", coeffs, es.xfun)
    return es.grid.surface(np.einsum("lg,lh->gh", per_l, es.eta))


@dataclass(frozen=True)
class FittedModel:
    """A fitted slope surface with its basis coefficients and chosen lambda."""

    eigensystem: EigenSystem
    lambda_: float
    coeffs: np.ndarray = field(repr=False)
    beta_hat: Surface = field(repr=False)
    gcv: float
    n: int

    @property
    def scale(self) -> float:
        """Bootstrap process rate sqrt(n) * lambda^{(2a+1)/(4D)}."""
        return float(np.sqrt(self.n) * self.lambda_ ** self.eigensystem.scale_exponent)

    def penalty_value(self) -> float:
        """Roughness of the fit in the diagonalized form, sum b^2 rho."""
        return float((self.coeffs**2 * self.eigensystem.rho).sum())


@dataclass(frozen=True)
class ScalarFittedModel:
    """Scalar-response fit: a slope curve built from the l = 1 block."""

    eigensystem: EigenSystem
    lambda_: float
    coeffs: np.ndarray = field(repr=False)  # (v,)
    beta_hat: Curve = field(repr=False)
    gcv: float
    n: int

    @property
    def scale(self) -> float:
        return float(np.sqrt(self.n) * self.lambda_ ** self.eigensystem.scale_exponent)


def fit(
    X: FunctionalSample,
    Y: FunctionalSample,
    es: EigenSystem,
    lambda_grid=None,
    weights=None,
) -> FittedModel:
    """Fit the slope surface: scores, GCV lambda, ridge solve, assembly.

    ``weights`` carries bootstrap multipliers; omitted means the plain
    (unweighted) estimator, identical to unit weights.
    """
    scores = compute_scores(X, Y, es)
    lam = select_lambda(scores, weights, lambda_grid)
    coeffs = ridge_solve(scores, lam, weights)
    beta = assemble_surface(coeffs, es)
    g = gcv_score(scores, lam, weights)
    return FittedModel(
        eigensystem=es, lambda_=lam, coeffs=coeffs, beta_hat=beta, gcv=g, n=X.n
    )


def fit_scalar(
    X: FunctionalSample,
    y: np.ndarray,
    es: EigenSystem,
    lambda_grid=None,
    weights=None,
) -> ScalarFittedModel:
    """Scalar-response variant: the response dimension collapses to l = 1."""
    scores = compute_scores_scalar(X, y, es)
    lam = select_lambda(scores, weights, lambda_grid)
    coeffs = ridge_solve(scores, lam, weights)[:, 0]
    beta = es.grid.curve(coeffs @ es.xfun[:, 0])
    g = gcv_score(scores, lam, weights)
    return ScalarFittedModel(
        eigensystem=es, lambda_=lam, coeffs=coeffs, beta_hat=beta, gcv=g, n=X.n
    )
