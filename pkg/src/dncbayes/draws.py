"""Chain configuration and the retained-draws container shared by all samplers."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grids import DensityGrid, GridSpec

__all__ = ["GibbsConfig", "ChainDraws", "retained_sweeps"]


@dataclass(frozen=True)
class GibbsConfig:
    iters: int
    burnin: int = 0
    thin: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.iters < 1 or self.thin < 1:
            raise ValueError("iters and thin must be positive")
        if not 0 <= self.burnin < self.iters:
            raise ValueError("burnin must satisfy 0 <= burnin < iters")
        if (self.iters - self.burnin) // self.thin < 1:
            raise ValueError("configuration retains no draws")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    @property
    def n_retained(self) -> int:
        return (self.iters - self.burnin) // self.thin


def retained_sweeps(config: GibbsConfig):
    """Zero-based sweep indices whose state is kept."""
    return range(config.burnin + config.thin - 1, config.iters, config.thin)


@dataclass
class ChainDraws:
    """Retained draws of one chain.

    ``densities`` has shape ``(n_draws, *grid.shape)``; ``params`` maps a
    parameter name to an array whose first axis indexes draws.
    """

    grid: GridSpec
    densities: np.ndarray
    params: dict | None = None
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        self.densities = np.asarray(self.densities, dtype=float).reshape((-1, *self.grid.shape))
        if self.densities.shape[0] < 1:
            raise ValueError("a chain must retain at least one draw")

    @property
    def n_draws(self) -> int:
        return self.densities.shape[0]

    def __len__(self):
        return self.n_draws

    def __getitem__(self, i) -> DensityGrid:
        return DensityGrid(self.grid, self.densities[i])

    def __iter__(self):
        return (self[i] for i in range(self.n_draws))

    def mean_density(self) -> DensityGrid:
        return DensityGrid(self.grid, self.densities.mean(axis=0))

    def param_means(self) -> dict:
        if not self.params:
            return {}
        return {k: v.mean(axis=0) for k, v in self.params.items()}
