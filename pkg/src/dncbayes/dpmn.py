"""Truncated stick-breaking blocked Gibbs sampler for a Dirichlet-process
location mixture of normals with a common bandwidth.

The base measure is ``N(base_mean, base_var)`` and sigma^2 carries an
inverse-gamma prior, possibly the kernel-only fractionated one; the data
make its conditional proper.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from .draws import ChainDraws, GibbsConfig, retained_sweeps
from .errors import ImproperConditional
from .finite import sample_categorical
from .fraction import DpmnPrior, PriorMode, fractionate_dpmn
from .grids import GridSpec, default_grid_1d
from .kernels import InvGammaParams

log = logging.getLogger(__name__)

__all__ = [
    "DpmnConfig",
    "DpmnState",
    "stick_weights",
    "default_dpmn_prior",
    "update_alloc",
    "update_sticks",
    "update_atoms",
    "update_sigma",
    "dpmn_density",
    "run_chain",
]

TAIL_MASS_FLAG = 1e-4


@dataclass(frozen=True)
class DpmnConfig:
    gibbs: GibbsConfig
    trunc: int = 50

    def __post_init__(self):
        if self.trunc < 2:
            raise ValueError("truncation level must be at least 2")


def stick_weights(sticks) -> np.ndarray:
    """``pi_h = V_h prod_{i<h} (1 - V_i)`` with the last stick closed at one."""
    v = np.array(sticks, dtype=float)
    v[-1] = 1.0
    rest = np.concatenate([[1.0], np.cumprod(1.0 - v[:-1])])
    return v * rest


@dataclass(frozen=True)
class DpmnState:
    sticks: np.ndarray
    atoms: np.ndarray
    sigma: float
    alloc: np.ndarray

    @property
    def weights(self) -> np.ndarray:
        return stick_weights(self.sticks)

    @property
    def H(self) -> int:
        return self.sticks.size


def default_dpmn_prior(x, dp_mass=1.0, shape=2.0, scale=2.0) -> DpmnPrior:
    """Base ``N(0, 10 var(x))`` and ``IG(2, 2)`` on sigma^2."""
    var = float(np.var(x)) if np.size(x) > 1 else 1.0
    return DpmnPrior(dp_mass, 0.0, 10.0 * max(var, 1e-12), InvGammaParams(shape, scale))


def _log_kernel(x, atoms, sigma):
    return -0.5 * ((x[:, None] - atoms[None, :]) / sigma) ** 2 - np.log(sigma) - 0.5 * np.log(2 * np.pi)


def update_alloc(state: DpmnState, data, rng) -> DpmnState:
    with np.errstate(divide="ignore"):
        log_w = np.log(state.weights)[None, :] + _log_kernel(data, state.atoms, state.sigma)
    return replace(state, alloc=sample_categorical(log_w, rng))


def update_sticks(state: DpmnState, dp_mass_effective: float, rng) -> DpmnState:
    """``V_h ~ Beta(1 + n_h, M + sum_{l>h} n_l)`` for ``h < H``; ``V_H = 1``."""
    H = state.H
    counts = np.bincount(state.alloc, minlength=H)
    tail = np.cumsum(counts[::-1])[::-1]
    above = np.concatenate([tail[1:], [0]])
    v = rng.beta(1.0 + counts[:-1], dp_mass_effective + above[:-1])
    return replace(state, sticks=np.append(v, 1.0))


def update_atoms(state: DpmnState, data, base_mean, base_var, rng) -> DpmnState:
    H = state.H
    counts = np.bincount(state.alloc, minlength=H)
    sums = np.bincount(state.alloc, weights=data, minlength=H)
    s2 = state.sigma**2
    prec = 1.0 / base_var + counts / s2
    mean = (base_mean / base_var + sums / s2) / prec
    return replace(state, atoms=mean + rng.standard_normal(H) / np.sqrt(prec))


def update_sigma(state: DpmnState, data, sigma_prior: InvGammaParams, rng, sweep=None) -> DpmnState:
    """Inverse-gamma conditional on sigma^2."""
    shape = sigma_prior.shape + data.size / 2
    if not shape > 0:
        raise ImproperConditional(f"sigma^2 conditional shape {shape:.4g} <= 0", sweep)
    resid = data - state.atoms[state.alloc]
    scale = sigma_prior.scale + 0.5 * float(resid @ resid)
    return replace(state, sigma=float(np.sqrt(scale / rng.standard_gamma(shape))))


def dpmn_density(points, weights, atoms, sigma) -> np.ndarray:
    return np.exp(_log_kernel(points, atoms, sigma)) @ weights


def init_state(data, prior: DpmnPrior, H, dp_mass, rng) -> DpmnState:
    """Sticks from the prior, atoms at randomly chosen data points, sigma at a quarter of the sd."""
    sticks = np.append(rng.beta(1.0, dp_mass, size=H - 1), 1.0)
    atoms = rng.choice(data, size=H, replace=True)
    sd = float(np.std(data)) if data.size > 1 else 1.0
    sigma = max(sd / 4, 1e-3)
    return DpmnState(sticks, atoms, sigma, rng.integers(H, size=data.size))


def run_chain(data, prior: DpmnPrior, mode, J: int, config: DpmnConfig, grid: GridSpec | None = None):
    """Sweep order allocation, sticks, atoms, sigma; one density per retained draw."""
    data = np.asarray(data, dtype=float).ravel()
    if data.size < 1:
        raise ValueError("data must be non-empty")
    mode = PriorMode(mode)
    eff = fractionate_dpmn(prior, mode.power(J))
    gibbs = config.gibbs
    if grid is None:
        grid = default_grid_1d(data)
    if grid.ndim != 1:
        raise ValueError("the DPMN model is univariate")
    points = grid.axes[0]
    rng = np.random.default_rng(gibbs.seed)
    state = init_state(data, eff, config.trunc, eff.dp_mass, rng)
    keep = set(retained_sweeps(gibbs))
    dens = np.empty((gibbs.n_retained, points.size))
    tail = np.empty(gibbs.n_retained)
    sig = np.empty(gibbs.n_retained)
    row = 0
    for sweep in range(gibbs.iters):
        state = update_alloc(state, data, rng)
        state = update_sticks(state, eff.dp_mass, rng)
        state = update_atoms(state, data, eff.base_mean, eff.base_var, rng)
        state = update_sigma(state, data, eff.sigma_prior, rng, sweep=sweep)
        if sweep in keep:
            w = state.weights
            dens[row] = dpmn_density(points, w, state.atoms, state.sigma)
            tail[row] = w[-1]
            sig[row] = state.sigma
            row += 1
    flagged = int((tail > TAIL_MASS_FLAG).sum())
    if flagged:
        log.warning("%d of %d retained draws leave stick mass > %g on the last atom", flagged, row, TAIL_MASS_FLAG)
    return ChainDraws(
        grid=grid,
        densities=dens,
        params={"sigma": sig, "tail_mass": tail},
        diagnostics={"tail_mass_flagged": flagged},
    )
