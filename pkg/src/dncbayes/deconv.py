"""Metropolis-within-Gibbs sampler for shape-constrained density deconvolution.

The latent density of X is a symmetric unimodal mixture of uniforms,
``X | theta ~ Unif(-theta, theta)``, whose half-widths follow a K-component
gamma mixture ``theta | Z=k ~ Ga(alpha_k, beta_k)``.  Observations are
``W_i = X_i + N(0, sigma_i^2)`` with known ``sigma_i``.  The shapes
``alpha_k > t`` get a truncated exponential prior and a Metropolis-Hastings
update; everything else is conjugate.
"""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass, replace

import numpy as np
from scipy import special

from .draws import ChainDraws, GibbsConfig, retained_sweeps
from .errors import ShapeAtBoundary
from .finite import sample_categorical
from .fraction import DeconvPrior, PriorMode, fractionate_deconv
from .grids import DensityGrid, GridSpec, robust_scale, symmetric_grid
from .kernels import dirichlet_rvs, truncgamma_rvs, truncnorm_rvs

log = logging.getLogger(__name__)

__all__ = [
    "NoisyObservation",
    "DeconvState",
    "DeconvConfig",
    "as_arrays",
    "default_deconv_prior",
    "default_deconv_grid",
    "update_x",
    "update_theta",
    "update_alloc",
    "update_weights",
    "update_rates",
    "shape_log_target",
    "proposal_log_density",
    "update_shapes_mh",
    "density_from_state",
    "mixture_of_uniforms_density",
    "init_state",
    "run_chain",
]

ACCEPT_BAND = (0.1, 0.7)
NEGLIGIBLE_HEIGHT = 1e-17


@dataclass(frozen=True)
class NoisyObservation:
    w: float
    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("noise sd must be positive")


@dataclass(frozen=True)
class DeconvState:
    x: np.ndarray
    theta: np.ndarray
    alloc: np.ndarray
    weights: np.ndarray
    shapes: np.ndarray
    rates: np.ndarray

    @property
    def K(self) -> int:
        return self.weights.size


@dataclass(frozen=True)
class DeconvConfig:
    gibbs: GibbsConfig
    fractionate_beta: bool = True


def as_arrays(data):
    """``(w, sigma)`` arrays from NoisyObservations, a pair of arrays, or an ``(n, 2)`` array."""
    if isinstance(data, Sequence) and data and isinstance(data[0], NoisyObservation):
        w = np.array([o.w for o in data], dtype=float)
        sigma = np.array([o.sigma for o in data], dtype=float)
    elif isinstance(data, tuple) and len(data) == 2:
        w, sigma = (np.asarray(a, dtype=float).ravel() for a in data)
    else:
        arr = np.asarray(data, dtype=float)
        w, sigma = arr[:, 0], arr[:, 1]
    if w.size < 1:
        raise ValueError("data must be non-empty")
    if w.shape != sigma.shape or np.any(~(sigma > 0)):
        raise ValueError("need one positive noise sd per observation")
    return w, sigma


def default_deconv_prior(w, K=30, dp_mass=1.0, lam=1.0, t=1.5, xi1=2.0, xi2=None) -> DeconvPrior:
    """Weakly informative defaults; ``xi2`` defaults to twice the robust scale of ``w``."""
    if xi2 is None:
        xi2 = 2.0 * robust_scale(w)
    return DeconvPrior(dp_mass=dp_mass, K=K, lam=lam, t=t, xi1=xi1, xi2=xi2)


def default_deconv_grid(w, points=1001) -> GridSpec:
    half = float(np.max(np.abs(w))) + 3 * robust_scale(w)
    return symmetric_grid(half, points)


def update_x(state: DeconvState, data, rng) -> DeconvState:
    w, sigma = data
    return replace(state, x=truncnorm_rvs(w, sigma, -state.theta, state.theta, rng))


def update_theta(state: DeconvState, rng) -> DeconvState:
    k = state.alloc
    theta = truncgamma_rvs(state.shapes[k] - 1.0, state.rates[k], np.abs(state.x), np.inf, rng)
    return replace(state, theta=theta)


def _alloc_log_weights(theta, weights, shapes, rates):
    with np.errstate(divide="ignore"):
        log_p = np.log(weights)
    head = log_p + shapes * np.log(rates) - special.gammaln(shapes)
    log_t = np.log(theta)[:, None]
    return head[None, :] + (shapes[None, :] - 1.0) * log_t - rates[None, :] * theta[:, None]


def update_alloc(state: DeconvState, rng) -> DeconvState:
    if state.K == 1:
        return replace(state, alloc=np.zeros(state.theta.size, dtype=np.int64))
    log_w = _alloc_log_weights(state.theta, state.weights, state.shapes, state.rates)
    return replace(state, alloc=sample_categorical(log_w, rng))


def update_weights(state: DeconvState, prior: DeconvPrior, J: int, rng) -> DeconvState:
    """``Dir(m/(JK) + r_k)``; pass ``J=1`` for the unfractionated prior."""
    counts = np.bincount(state.alloc, minlength=state.K)
    return replace(state, weights=dirichlet_rvs(prior.dp_mass / (J * prior.K) + counts, rng))


def update_rates(state: DeconvState, prior: DeconvPrior, rng) -> DeconvState:
    """``beta_k ~ Ga(xi1 + alpha_k r_k, xi2 + s_k)``; ``prior`` is the effective (shard) prior."""
    counts = np.bincount(state.alloc, minlength=state.K)
    sums = np.bincount(state.alloc, weights=state.theta, minlength=state.K)
    shape = prior.xi1 + state.shapes * counts
    return replace(state, rates=rng.standard_gamma(shape) / (prior.xi2 + sums))


def shape_log_target(alpha, count, log_theta_sum, rate, lam):
    """Unnormalized log conditional of a component shape on ``(t, inf)``."""
    return -count * special.gammaln(alpha) - alpha * (lam - count * np.log(rate) - log_theta_sum)


def proposal_log_density(new, current, t):
    """Log density of ``Ga(2, 2/current)`` truncated to ``(t, inf)``, evaluated at ``new``."""
    rate = 2.0 / current
    # upper tail of a shape-2 gamma: exp(-u)(1 + u)
    u = rate * t
    log_tail = -u + np.log1p(u)
    return 2.0 * np.log(rate) + np.log(new) - rate * new - log_tail


def update_shapes_mh(state: DeconvState, prior: DeconvPrior, J: int, rng):
    """One Metropolis-Hastings step per component shape.

    ``prior`` is the original prior; the exponential rate used is ``lam/J``.
    Returns the new state and the number of accepted proposals.
    """
    K = state.K
    lam = prior.lam / J
    counts = np.bincount(state.alloc, minlength=K)
    log_sums = np.bincount(state.alloc, weights=np.log(state.theta), minlength=K)
    cur = state.shapes
    prop = truncgamma_rvs(np.full(K, 2.0), 2.0 / cur, prior.t, np.inf, rng)
    prop = np.maximum(prop, np.nextafter(prior.t, np.inf))
    log_ratio = (
        shape_log_target(prop, counts, log_sums, state.rates, lam)
        - shape_log_target(cur, counts, log_sums, state.rates, lam)
        + proposal_log_density(cur, prop, prior.t)
        - proposal_log_density(prop, cur, prior.t)
    )
    accept = np.log(rng.random(K)) < log_ratio
    return replace(state, shapes=np.where(accept, prop, cur)), int(accept.sum())


def mixture_of_uniforms_density(x, weights, shapes, rates) -> np.ndarray:
    """``f(x) = sum_k p_k beta_k / (2(alpha_k - 1)) * P(Ga(alpha_k - 1, beta_k) > |x|)``.

    Component k contributes at most its height to any point, and the heights
    sum to ``f(0)``.  Components whose height is below ``1e-17 f(0)`` cannot
    move the result at double precision and are skipped.
    """
    shapes = np.asarray(shapes, dtype=float)
    if np.any(shapes <= 1):
        raise ShapeAtBoundary("every component shape must exceed 1")
    rates = np.asarray(rates, dtype=float)
    height = np.asarray(weights) * rates / (2.0 * (shapes - 1.0))
    live = height > NEGLIGIBLE_HEIGHT * height.sum()
    ax, inverse = np.unique(np.abs(np.asarray(x, dtype=float)), return_inverse=True)
    tail = special.gammaincc(shapes[live][None, :] - 1.0, np.multiply.outer(ax, rates[live]))
    return (tail @ height[live])[inverse].reshape(np.shape(x))


def density_from_state(state: DeconvState, grid: GridSpec) -> DensityGrid:
    return DensityGrid(grid, mixture_of_uniforms_density(grid.axes[0], state.weights, state.shapes, state.rates))


def init_state(data, prior: DeconvPrior, rng) -> DeconvState:
    """Latent values at the observations; component mean half-widths log-spaced around the data scale."""
    w, _ = data
    K = prior.K
    scale = robust_scale(w)
    shapes = np.full(K, prior.t + 1.0)
    mean_theta = scale * np.geomspace(0.05, 5.0, K) if K > 1 else np.array([scale])
    rates = shapes / mean_theta
    x = w.copy()
    theta = np.abs(x) + scale
    return DeconvState(
        x=x,
        theta=theta,
        alloc=rng.integers(K, size=w.size),
        weights=np.full(K, 1.0 / K),
        shapes=shapes,
        rates=rates,
    )


def run_chain(data, prior: DeconvPrior, mode, J: int, config: DeconvConfig, grid: GridSpec | None = None):
    """Sweep order x, theta, allocation, weights, rates, shapes (MH)."""
    data = as_arrays(data)
    mode = PriorMode(mode)
    power = mode.power(J)
    eff = fractionate_deconv(prior, power, fractionate_beta=config.fractionate_beta)
    gibbs = config.gibbs
    if grid is None:
        grid = default_deconv_grid(data[0])
    points = grid.axes[0]
    rng = np.random.default_rng(gibbs.seed)
    state = init_state(data, eff, rng)
    keep = set(retained_sweeps(gibbs))
    n_keep = gibbs.n_retained
    dens = np.empty((n_keep, points.size))
    w_out = np.empty((n_keep, prior.K))
    a_out = np.empty((n_keep, prior.K))
    b_out = np.empty((n_keep, prior.K))
    accepted = 0
    row = 0
    for sweep in range(gibbs.iters):
        state = update_x(state, data, rng)
        state = update_theta(state, rng)
        state = update_alloc(state, rng)
        state = update_weights(state, prior, power, rng)
        state = update_rates(state, eff, rng)
        state, acc = update_shapes_mh(state, prior, power, rng)
        accepted += acc
        if sweep in keep:
            dens[row] = mixture_of_uniforms_density(points, state.weights, state.shapes, state.rates)
            w_out[row], a_out[row], b_out[row] = state.weights, state.shapes, state.rates
            row += 1
    rate = accepted / (gibbs.iters * prior.K)
    if not ACCEPT_BAND[0] <= rate <= ACCEPT_BAND[1]:
        log.warning("shape MH acceptance rate %.3f outside [%g, %g]", rate, *ACCEPT_BAND)
    return ChainDraws(
        grid=grid,
        densities=dens,
        params={"weights": w_out, "shapes": a_out, "rates": b_out},
        diagnostics={"mh_acceptance": rate},
    )
