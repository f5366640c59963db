"""Distances between gridded density estimates and replication summaries."""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import GridMismatch
from .grids import DensityGrid, check_same_grid, trapezoid

__all__ = [
    "RegionKind",
    "RegionSpec",
    "MetricRecord",
    "hellinger",
    "hellinger_sq",
    "w2_to_point",
    "iad",
    "ParamSummary",
    "param_table",
]


class RegionKind(str, Enum):
    ALL = "all"
    ABS_ABOVE = "abs_above"
    ABS_BELOW = "abs_below"


@dataclass(frozen=True)
class RegionSpec:
    """Integration region; ``abs_above`` is ``|x| > cutoff`` and ``abs_below`` is ``|x| <= cutoff``."""

    kind: RegionKind = RegionKind.ALL
    cutoff: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", RegionKind(self.kind))
        if not self.cutoff >= 0:
            raise ValueError("cutoff must be nonnegative")

    def mask(self, points) -> np.ndarray:
        """Boolean mask over ``points`` (``(N,)`` for 1-D, ``(N, d)`` uses the Euclidean norm)."""
        pts = np.asarray(points, dtype=float)
        r = np.abs(pts) if pts.ndim == 1 else np.linalg.norm(pts, axis=1)
        if self.kind is RegionKind.ABS_ABOVE:
            return r > self.cutoff
        if self.kind is RegionKind.ABS_BELOW:
            return r <= self.cutoff
        return np.ones(r.shape, dtype=bool)

    def label(self) -> str:
        return self.kind.value if self.kind is RegionKind.ALL else f"{self.kind.value}({self.cutoff:g})"


@dataclass(frozen=True)
class MetricRecord:
    metric: str
    region: str
    value: float
    grid_points: int
    extent: tuple = ()

    def to_dict(self) -> dict:
        d = {"metric": self.metric, "region": self.region, "value": self.value, "grid_points": self.grid_points}
        if self.extent:
            d["extent"] = list(self.extent)
        return d

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _values(f: DensityGrid, g: DensityGrid):
    check_same_grid(f.grid, g.grid)
    return np.asarray(f.values, dtype=float), np.asarray(g.values, dtype=float)


def hellinger_sq(f: DensityGrid, g: DensityGrid) -> float:
    a, b = _values(f, g)
    diff = np.sqrt(np.clip(a, 0, None)) - np.sqrt(np.clip(b, 0, None))
    return float(trapezoid(diff * diff, f.grid))


def hellinger(f: DensityGrid, g: DensityGrid) -> float:
    """``{int (sqrt f - sqrt g)^2}^{1/2}``, capped at sqrt(2) against quadrature overshoot."""
    return float(min(np.sqrt(max(hellinger_sq(f, g), 0.0)), np.sqrt(2.0)))


def w2_to_point(draws, f0: DensityGrid) -> float:
    """Square root of the average squared Hellinger distance from each draw to ``f0``.

    ``draws`` is a sequence of DensityGrids or a ChainDraws.
    """
    draws = list(draws)
    if not draws:
        raise ValueError("need at least one draw")
    return float(np.sqrt(np.mean([hellinger_sq(d, f0) for d in draws])))


def iad(f: DensityGrid, g: DensityGrid, region: RegionSpec = RegionSpec()) -> float:
    """Trapezoid integral of ``|f - g|`` with the integrand set to zero outside ``region``.

    Complementary regions add up to the total because the masks partition
    the grid points.  Only the finite grid extent is integrated.
    """
    a, b = _values(f, g)
    grid = f.grid
    mask = region.mask(grid.points() if grid.ndim > 1 else grid.axes[0]).reshape(grid.shape)
    return float(trapezoid(np.where(mask, np.abs(a - b), 0.0), grid))


@dataclass(frozen=True)
class ParamSummary:
    """Bias and standard error per parameter entry, both multiplied by 1000."""

    bias: dict
    se: dict
    n_reps: int

    def rows(self):
        for key in self.bias:
            yield key, np.atleast_1d(self.bias[key]), np.atleast_1d(self.se[key])

    def format(self) -> str:
        lines = ["parameter,bias_x1e3,se_x1e3"]
        for key, b, s in self.rows():
            lines.append(f"{key},{' '.join(f'{v:.2f}' for v in b.ravel())},{' '.join(f'{v:.2f}' for v in s.ravel())}")
        return "\n".join(lines)


def param_table(replications, truth: dict) -> ParamSummary:
    """Mean error across replications and their sample sd (``ddof=1``), each times 1000.

    ``replications`` is a sequence of dicts mapping names to estimates; only
    the names present in ``truth`` are summarized.
    """
    reps = list(replications)
    if len(reps) < 2:
        raise ValueError("need at least two replications")
    bias, se = {}, {}
    for key, true in truth.items():
        est = np.stack([np.asarray(r[key], dtype=float) for r in reps])
        if est.shape[1:] != np.shape(true):
            raise GridMismatch(f"estimate shape {est.shape[1:]} does not match truth {np.shape(true)} for {key}")
        bias[key] = 1e3 * (est.mean(axis=0) - true)
        se[key] = 1e3 * est.std(axis=0, ddof=1)
    return ParamSummary(bias, se, len(reps))
