"""CSV and JSON file formats.

Curve-matrix CSV: one row per subject, G comma-separated values; an optional
first header row carrying the grid points (detected as a strictly increasing
row inside (0, 1)). Mismatched row lengths are a hard error.

Surfaces flatten to ``s,t,value`` triples; curves to ``t,value`` pairs; bands
to ``t_or_st,center,lower,upper`` rows (``s:t`` composite location for
surface bands). Numbers are written in full-precision decimal with dot
separators and LF line endings, so emitted JSON reports parse back to
identical values.
"""

from __future__ import annotations

import dataclasses
import json
from pathlib import Path

import numpy as np

from .core import Curve, FunctionalSample, Grid, Surface, center_sample, make_grid
from .exceptions import DataError

__all__ = [
    "read_curve_matrix",
    "load_functional_sample",
    "load_curve",
    "write_surface_csv",
    "write_curve_csv",
    "write_band_csv",
    "write_curve_matrix_csv",
    "emit_results",
    "load_results",
]


def _format(x: float) -> str:
    return repr(float(x))


def read_curve_matrix(path) -> tuple[np.ndarray, np.ndarray | None]:
    """Read a curve matrix; returns (values, header grid points or None)."""
    path = Path(path)
    try:
        lines = [ln for ln in path.read_text().splitlines() if ln.strip()]
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if not lines:
        raise DataError(f"{path} is empty")
    rows = []
    for i, ln in enumerate(lines):
        cells = ln.split(",")
        try:
            rows.append([float(c) for c in cells])
        except ValueError as exc:
            raise DataError(f"{path} line {i + 1}: non-numeric cell ({exc})") from exc
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise DataError(f"{path}: rows have mismatched lengths {sorted(widths)}")
    data = np.asarray(rows, dtype=float)
    header = None
    first = data[0]
    if (
        data.shape[0] > 1
        and np.all(np.diff(first) > 0)
        and first[0] > 0.0
        and first[-1] < 1.0
    ):
        header, data = first, data[1:]
    return data, header


def load_functional_sample(path) -> FunctionalSample:
    """Read, validate, and center a curve matrix onto the midpoint grid."""
    data, header = read_curve_matrix(path)
    if data.shape[0] < 2:
        raise DataError(f"{path}: need at least 2 subject rows, got {data.shape[0]}")
    grid = make_grid(data.shape[1])
    if header is not None and header.size != grid.size:
        raise DataError(f"{path}: header has {header.size} points for {grid.size} columns")
    if not np.all(np.isfinite(data)):
        raise DataError(f"{path}: non-finite values")
    return center_sample(data, grid)


def load_curve(path, grid: Grid) -> Curve:
    """Read a single curve (one row, or a t,value two-column file)."""
    data, _ = read_curve_matrix(path)
    if data.shape == (1, grid.size):
        return grid.curve(data[0])
    if data.shape[1] == 2 and data.shape[0] == grid.size:
        return grid.curve(data[:, 1])
    raise DataError(
        f"{path}: expected one row of {grid.size} values or {grid.size} t,value rows"
    )


def write_curve_matrix_csv(path, values: np.ndarray) -> None:
    path = Path(path)
    lines = [",".join(_format(x) for x in row) for row in np.atleast_2d(values)]
    path.write_text("\n".join(lines) + "\n")


def write_surface_csv(path, surface: Surface) -> None:
    """Flatten a surface to s,t,value triples (exactly G^2 data rows)."""
    pts = surface.grid.points
    lines = ["s,t,value"]
    for i in range(surface.grid.size):
        for j in range(surface.grid.size):
            lines.append(
                f"{_format(pts[i])},{_format(pts[j])},{_format(surface.values[i, j])}"
            )
    Path(path).write_text("\n".join(lines) + "\n")


def write_curve_csv(path, curve: Curve) -> None:
    lines = ["t,value"]
    for t, val in zip(curve.grid.points, curve.values):
        lines.append(f"{_format(t)},{_format(val)}")
    Path(path).write_text("\n".join(lines) + "\n")


def write_band_csv(path, center_values: np.ndarray, lower, upper) -> None:
    """Band rows t_or_st,center,lower,upper; s:t composite key for surfaces."""
    grid = lower.grid
    lines = ["t_or_st,center,lower,upper"]
    pts = grid.points
    if isinstance(lower, Surface):
        for i in range(grid.size):
            for j in range(grid.size):
                lines.append(
                    f"{_format(pts[i])}:{_format(pts[j])},"
                    f"{_format(center_values[i, j])},"
                    f"{_format(lower.values[i, j])},{_format(upper.values[i, j])}"
                )
    else:
        for j in range(grid.size):
            lines.append(
                f"{_format(pts[j])},{_format(center_values[j])},"
                f"{_format(lower.values[j])},{_format(upper.values[j])}"
            )
    Path(path).write_text("\n".join(lines) + "\n")


def _jsonable(obj):
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return [_jsonable(x) for x in obj.tolist()]
    if isinstance(obj, (list, tuple)):
        return [_jsonable(x) for x in obj]
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return _jsonable(dataclasses.asdict(obj))
    return obj


def emit_results(payload: dict, path) -> None:
    """Write a JSON report; floats keep full repr precision and round-trip."""
    path = Path(path)
    try:
        path.write_text(json.dumps(_jsonable(payload), indent=2) + "\n")
    except OSError as exc:
        raise DataError(f"cannot write {path}: {exc}") from exc


def load_results(path) -> dict:
    path = Path(path)
    try:
        return json.loads(path.read_text())
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON ({exc})") from exc
