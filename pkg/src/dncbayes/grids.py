"""Densities tabulated on fixed 1-D or 2-D evaluation grids."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GridMismatch

__all__ = [
    "DensityGrid",
    "GridSpec",
    "trapezoid",
    "robust_scale",
    "default_grid_1d",
    "symmetric_grid",
    "default_grid_2d",
    "check_same_grid",
]


@dataclass(frozen=True)
class GridSpec:
    """Rectangular lattice: one strictly increasing coordinate vector per axis."""

    axes: tuple

    def __post_init__(self):
        axes = tuple(np.asarray(a, dtype=float) for a in self.axes)
        if len(axes) not in (1, 2):
            raise ValueError("only 1-D and 2-D grids are supported")
        for a in axes:
            if a.ndim != 1 or a.size < 2 or not np.all(np.diff(a) > 0):
                raise ValueError("grid axes must be strictly increasing with >= 2 points")
            a.setflags(write=False)
        object.__setattr__(self, "axes", axes)

    @property
    def ndim(self) -> int:
        return len(self.axes)

    @property
    def shape(self) -> tuple:
        return tuple(a.size for a in self.axes)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def points(self) -> np.ndarray:
        """Grid points as an ``(size, ndim)`` array, first axis varying slowest."""
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.column_stack([m.ravel() for m in mesh])

    def __eq__(self, other):
        if not isinstance(other, GridSpec) or self.ndim != other.ndim:
            return False
        return all(np.array_equal(a, b) for a, b in zip(self.axes, other.axes))

    def __hash__(self):
        return hash(tuple(a.tobytes() for a in self.axes))

    def to_dict(self) -> dict:
        return {"axes": [a.tolist() for a in self.axes]}

    @classmethod
    def from_dict(cls, d) -> GridSpec:
        return cls(tuple(np.asarray(a, dtype=float) for a in d["axes"]))


def trapezoid(values, grid: GridSpec) -> np.ndarray:
    """Trapezoid integral over the trailing grid dimensions of ``values``."""
    out = np.asarray(values, dtype=float)
    for axis in reversed(grid.axes):
        out = np.trapezoid(out, axis, axis=-1)
    return out


@dataclass(frozen=True)
class DensityGrid:
    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float).reshape(self.grid.shape)
        object.__setattr__(self, "values", values)

    def integral(self) -> float:
        return float(trapezoid(self.values, self.grid))

    def check(self, tol=1e-3):
        """Raise if the density is negative or not normalized within ``tol``."""
        if np.any(self.values < 0):
            raise ValueError("density has negative values")
        total = self.integral()
        if abs(total - 1.0) > tol:
            raise ValueError(f"density integrates to {total}, not 1")
        return self


def check_same_grid(*grids: GridSpec):
    first = grids[0]
    for g in grids[1:]:
        if g != first:
            raise GridMismatch("densities live on different grids")


def robust_scale(x) -> float:
    """Normal-consistent median absolute deviation, falling back to the sd."""
    x = np.asarray(x, dtype=float)
    mad = 1.4826 * np.median(np.abs(x - np.median(x)))
    if mad > 0:
        return float(mad)
    sd = float(np.std(x))
    return sd if sd > 0 else 1.0


def default_grid_1d(x, points=1001, lo=None, hi=None) -> GridSpec:
    """Data range padded by three robust standard deviations."""
    x = np.asarray(x, dtype=float)
    pad = 3 * robust_scale(x)
    lo = x.min() - pad if lo is None else lo
    hi = x.max() + pad if hi is None else hi
    return GridSpec((np.linspace(lo, hi, points),))


def symmetric_grid(half_width, points=1001) -> GridSpec:
    """Grid on ``[-half_width, half_width]`` whose points are exact negatives of each other."""
    if points % 2 == 0:
        points += 1
    half = np.linspace(0.0, half_width, points // 2 + 1)
    return GridSpec((np.concatenate([-half[:0:-1], half]),))


def default_grid_2d(x, points=101, lo=None, hi=None) -> GridSpec:
    x = np.asarray(x, dtype=float)
    axes = []
    for d in range(x.shape[1]):
        col = x[:, d]
        pad = 3 * robust_scale(col)
        a = col.min() - pad if lo is None else lo[d]
        b = col.max() + pad if hi is None else hi[d]
        axes.append(np.linspace(a, b, points))
    return GridSpec(tuple(axes))
