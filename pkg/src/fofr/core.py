"""Grids, discretized functions, empirical covariance, and error metrics.

Every function of one argument lives on a shared midpoint grid of ``[0, 1]``:
``G`` points ``t_j = (2j - 1) / (2G)`` with uniform quadrature weight ``1/G``.
Surfaces are ``G x G`` matrices indexed ``[s, t]``. All integrals in the
package are midpoint Riemann sums with this single rule, so exact discrete
identities (cosine orthonormality, Parseval-type checks) hold to machine
precision rather than quadrature accuracy.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import (
    IncompatibleGridsError,
    InsufficientSampleError,
    NotCenteredError,
)

__all__ = [
    "Grid",
    "Curve",
    "Surface",
    "FunctionalSample",
    "CovarianceEstimate",
    "make_grid",
    "center_sample",
    "l2_inner",
    "empirical_covariance",
    "metrics",
]


@dataclass(frozen=True)
class Grid:
    """Midpoint discretization of [0, 1].

    Attributes
    ----------
    size : int
        Number of grid points G.
    points : ndarray of shape (G,)
        Strictly increasing midpoints (2j - 1) / (2G).
    weight : float
        Uniform quadrature weight 1/G; the weights sum to one exactly.
    """

    size: int
    points: np.ndarray = field(repr=False)
    weight: float

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Grid)
            and self.size == other.size
            and np.array_equal(self.points, other.points)
        )

    def curve(self, values) -> "Curve":
        return Curve(self, np.asarray(values, dtype=float))

    def surface(self, values) -> "Surface":
        return Surface(self, np.asarray(values, dtype=float))


def make_grid(size: int) -> Grid:
    """Build the midpoint grid with ``size`` points.

    Raises
    ------
    ValueError
        If ``size < 2``.
    """
    if size < 2:
        raise ValueError(f"grid needs at least 2 points, got {size}")
    j = np.arange(1, size + 1)
    return Grid(size=size, points=(2 * j - 1) / (2 * size), weight=1.0 / size)


@dataclass(frozen=True)
class Curve:
    """A function on [0, 1] sampled at the grid points."""

    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.size,):
            raise ValueError(f"expected {self.grid.size} values, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("curve values must be finite")
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class Surface:
    """A function on [0, 1]^2; ``values[i, j]`` is the value at (s_i, t_j)."""

    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        G = self.grid.size
        if v.shape != (G, G):
            raise ValueError(f"expected ({G}, {G}) values, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("surface values must be finite")
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class FunctionalSample:
    """n discretized curves stored row-wise, centered, with the mean kept.

    ``data`` holds the centered curves; ``mean`` is the empirical mean that
    was subtracted. Construct through :func:`center_sample`.
    """

    grid: Grid
    n: int
    data: np.ndarray = field(repr=False)
    mean: Curve = field(repr=False)

    def __post_init__(self):
        if self.n < 2:
            raise InsufficientSampleError(f"need n >= 2 curves, got {self.n}")
        d = np.asarray(self.data, dtype=float)
        if d.shape != (self.n, self.grid.size):
            raise ValueError(f"expected ({self.n}, {self.grid.size}) data, got {d.shape}")
        object.__setattr__(self, "data", d)


def center_sample(raw: np.ndarray, grid: Grid) -> FunctionalSample:
    """Center raw curves (one row per subject) and keep the mean.

    Raises
    ------
    InsufficientSampleError
        If fewer than two rows are supplied.
    """
    raw = np.asarray(raw, dtype=float)
    if raw.ndim != 2:
        raise ValueError("raw sample must be a 2-D array (n rows of G values)")
    if raw.shape[0] < 2:
        raise InsufficientSampleError(f"need n >= 2 curves, got {raw.shape[0]}")
    if raw.shape[1] != grid.size:
        raise IncompatibleGridsError(
            f"rows have {raw.shape[1]} values but grid has {grid.size} points"
        )
    mean = raw.mean(axis=0)
    return FunctionalSample(grid=grid, n=raw.shape[0], data=raw - mean, mean=grid.curve(mean))


def l2_inner(f: Curve, g: Curve) -> float:
    """Midpoint-quadrature L2 inner product of two curves on the same grid."""
    if f.grid != g.grid:
        raise IncompatibleGridsError("curves live on different grids")
    return float(f.grid.weight * (f.values @ g.values))


@dataclass(frozen=True)
class CovarianceEstimate:
    """Empirical covariance matrix of a centered predictor sample."""

    grid: Grid
    matrix: np.ndarray = field(repr=False)


def _is_centered(sample: FunctionalSample) -> bool:
    col = np.abs(sample.data.sum(axis=0))
    scale = max(1.0, float(np.abs(sample.data).max(initial=0.0)))
    return bool(col.max(initial=0.0) <= 1e-10 * sample.n * scale)


def empirical_covariance(sample: FunctionalSample) -> CovarianceEstimate:
    """Pointwise empirical covariance (1/n) X'X of a centered sample.

    Raises
    ------
    NotCenteredError
        If the sample columns do not sum to zero.
    """
    if not _is_centered(sample):
        raise NotCenteredError("sample must be centered; use center_sample first")
    M = sample.data.T @ sample.data / sample.n
    return CovarianceEstimate(grid=sample.grid, matrix=(M + M.T) / 2)


def metrics(
    est: Surface, truth: Surface, cov: CovarianceEstimate
) -> tuple[float, float, float]:
    """Integrated squared error, excess prediction risk, and max deviation.

    ISE is the double quadrature of the squared difference; EPR is the
    covariance-weighted quadratic form of the difference (its squared
    prediction-risk norm); MD is the maximum absolute gridpoint difference.
    """
    if est.grid != truth.grid or est.grid != cov.grid:
        raise IncompatibleGridsError("surfaces and covariance must share a grid")
    w = est.grid.weight
    delta = est.values - truth.values
    ise = w**2 * float((delta**2).sum())
    epr = w**3 * float(np.einsum("ab,at,bt->", cov.matrix, delta, delta))
    md = float(np.abs(delta).max())
    return ise, epr, md
