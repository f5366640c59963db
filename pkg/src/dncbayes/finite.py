"""Blocked Gibbs sampler for a finite mixture of multivariate normals.

The conditionals are written for a shard that sees the prior raised to the
power ``1/J``; passing ``J=1`` gives the ordinary conjugate sampler.  All
update functions take the *original* prior together with the power J.
Component indices are zero-based.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from .draws import ChainDraws, GibbsConfig, retained_sweeps
from .errors import DegenerateLikelihood, ImproperConditional
from .fraction import FiniteMixturePrior, PriorMode
from .grids import GridSpec, default_grid_1d, default_grid_2d
from .kernels import LOG_2PI, dirichlet_rvs, invwishart_rvs

log = logging.getLogger(__name__)

__all__ = [
    "FiniteMixtureState",
    "sufficient_stats",
    "alloc_log_weights",
    "sample_categorical",
    "covariance_conditional",
    "update_alloc",
    "update_covariance",
    "update_means",
    "update_weights",
    "gibbs_sweep",
    "init_state",
    "mixture_density",
    "relabel",
    "run_chain",
]

DOF_FLOOR_EPS = 1e-3


@dataclass(frozen=True)
class FiniteMixtureState:
    weights: np.ndarray
    comp_means: np.ndarray
    comp_covs: np.ndarray
    alloc: np.ndarray

    @property
    def K(self) -> int:
        return self.weights.size


def sufficient_stats(data, alloc, K):
    """Counts, component means and centred scatter matrices per component.

    Means of empty components are returned as zero vectors, scatters as zeros.
    """
    m, p = data.shape
    counts = np.bincount(alloc, minlength=K)
    sums = np.column_stack([np.bincount(alloc, weights=data[:, d], minlength=K) for d in range(p)])
    means = np.divide(sums, counts[:, None], out=np.zeros_like(sums), where=counts[:, None] > 0)
    centred = data - means[alloc]
    scatter = np.empty((K, p, p))
    for i in range(p):
        for j in range(i + 1):
            s_ij = np.bincount(alloc, weights=centred[:, i] * centred[:, j], minlength=K)
            scatter[:, i, j] = s_ij
            scatter[:, j, i] = s_ij
    return counts, means, scatter


def _mvn_logpdf(data, means, covs):
    """``(m, K)`` matrix of log N_p(x_i; mu_k, Sigma_k)."""
    p = data.shape[1]
    chol = np.linalg.cholesky(covs)
    chol_inv = np.linalg.inv(chol)
    diff = data[None, :, :] - means[:, None, :]
    z = diff @ np.swapaxes(chol_inv, 1, 2)
    quad = np.einsum("kmp,kmp->km", z, z)
    half_logdet = np.log(np.diagonal(chol, axis1=1, axis2=2)).sum(axis=1)
    return (-0.5 * p * LOG_2PI - half_logdet[:, None] - 0.5 * quad).T


def alloc_log_weights(state: FiniteMixtureState, data) -> np.ndarray:
    with np.errstate(divide="ignore"):
        log_pi = np.log(state.weights)
    return log_pi[None, :] + _mvn_logpdf(data, state.comp_means, state.comp_covs)


def sample_categorical(log_w, rng) -> np.ndarray:
    """One categorical draw per row of unnormalized log weights."""
    top = log_w.max(axis=1, keepdims=True)
    if not np.all(np.isfinite(top)):
        bad = int(np.flatnonzero(~np.isfinite(top[:, 0]))[0])
        raise DegenerateLikelihood(f"observation {bad} has zero weight under every component")
    w = np.exp(log_w - top)
    cum = np.cumsum(w, axis=1)
    u = rng.random(log_w.shape[0]) * cum[:, -1]
    return np.minimum((u[:, None] >= cum).sum(axis=1), log_w.shape[1] - 1)


def update_alloc(state: FiniteMixtureState, data, rng) -> FiniteMixtureState:
    if state.K == 1:
        return replace(state, alloc=np.zeros(data.shape[0], dtype=np.int64))
    return replace(state, alloc=sample_categorical(alloc_log_weights(state, data), rng))


def covariance_conditional(counts, means, scatter, prior: FiniteMixturePrior, J: int):
    """Degrees of freedom ``(K,)`` and scale matrices ``(K, p, p)`` of the IW conditionals.

    ``dof = n_k + (nu+1)/J - (p+1)(J-1)/J`` and
    ``scale = V_k + c_k xbar_k xbar_k^T + S/J`` with
    ``c_k = (lJ)^{-1} n_k / ((lJ)^{-1} + n_k)``.
    """
    p = prior.p
    nu, S, l = prior.iw.dof, prior.iw.scale, prior.mean_scale
    dof = counts + (nu + 1) / J - (p + 1) * (J - 1) / J
    kappa = 1.0 / (l * J)
    shrink = kappa * counts / (kappa + counts)
    scale = scatter + shrink[:, None, None] * (means[:, :, None] * means[:, None, :]) + S / J
    return dof, scale


def _draw_covs(dof, scale, p, rng, strict, sweep=None, on_floor=None):
    floor = p + 1
    low = ~(dof > floor)
    if low.any():
        if strict:
            k = int(np.flatnonzero(low)[0])
            raise ImproperConditional(f"IW conditional dof {dof[k]:.4g} <= p+1 for component {k}", sweep)
        log.debug("IW dof %s floored to p+1+%g", dof[low], DOF_FLOOR_EPS)
        if on_floor is not None:
            on_floor(int(low.sum()))
        dof = np.where(low, floor + DOF_FLOOR_EPS, dof)
    return invwishart_rvs(dof, scale, rng)


def update_covariance(state, data, prior: FiniteMixturePrior, J: int, rng, strict=True):
    """Draw every Sigma_k from its inverse-Wishart conditional (mu_k integrated out)."""
    counts, means, scatter = sufficient_stats(data, state.alloc, state.K)
    dof, scale = covariance_conditional(counts, means, scatter, prior, J)
    return replace(state, comp_covs=_draw_covs(dof, scale, prior.p, rng, strict))


def _draw_means(counts, xbar, covs, prior, J, rng):
    kappa = 1.0 / (prior.mean_scale * J)
    prec = kappa + counts
    centre = (counts / prec)[:, None] * xbar
    chol = np.linalg.cholesky(covs / prec[:, None, None])
    z = rng.standard_normal(xbar.shape)
    return centre + np.einsum("kij,kj->ki", chol, z)


def update_means(state, data, prior: FiniteMixturePrior, J: int, rng):
    counts, xbar, _ = sufficient_stats(data, state.alloc, state.K)
    return replace(state, comp_means=_draw_means(counts, xbar, state.comp_covs, prior, J, rng))


def update_weights(state, prior: FiniteMixturePrior, J: int, rng):
    counts = np.bincount(state.alloc, minlength=state.K)
    return replace(state, weights=dirichlet_rvs(counts + prior.dirichlet.alpha / J, rng))


def gibbs_sweep(state, data, prior: FiniteMixturePrior, J: int, rng, strict=False, sweep=None, on_floor=None):
    """One blocked sweep: allocations, then (Sigma, mu) jointly, then weights.

    Sigma_k is drawn with mu_k integrated out and mu_k given Sigma_k, so the
    pair is an exact block update.  With ``strict=False`` improper IW
    conditionals are floored at ``p + 1 + 1e-3`` degrees of freedom.
    """
    K = state.K
    alloc = state.alloc
    if K > 1:
        alloc = sample_categorical(alloc_log_weights(state, data), rng)
    counts, xbar, scatter = sufficient_stats(data, alloc, K)
    dof, scale = covariance_conditional(counts, xbar, scatter, prior, J)
    covs = _draw_covs(dof, scale, prior.p, rng, strict, sweep=sweep, on_floor=on_floor)
    means = _draw_means(counts, xbar, covs, prior, J, rng)
    weights = dirichlet_rvs(counts + prior.dirichlet.alpha / J, rng) if K > 1 else np.ones(1)
    return FiniteMixtureState(weights, means, covs, alloc)


def init_state(data, K, rng) -> FiniteMixtureState:
    """Uniform random allocation; means of the allocated groups; pooled sample covariance."""
    m, p = data.shape
    alloc = rng.integers(K, size=m)
    counts, means, _ = sufficient_stats(data, alloc, K)
    centre = data.mean(axis=0)
    means[counts == 0] = centre
    cov = np.atleast_2d(np.cov(data, rowvar=False)) if m > 1 else np.eye(p)
    if np.linalg.eigvalsh(cov).min() <= 0:
        cov = cov + 1e-6 * np.eye(p)
    return FiniteMixtureState(
        weights=np.full(K, 1.0 / K),
        comp_means=means,
        comp_covs=np.repeat(cov[None], K, axis=0),
        alloc=alloc,
    )


def mixture_density(points, weights, means, covs) -> np.ndarray:
    """``sum_k pi_k N_p(x; mu_k, Sigma_k)`` at each row of ``points``."""
    return np.exp(_mvn_logpdf(points, means, covs)) @ weights


def relabel(weights, means, covs):
    """Sort components by the first coordinate of their means."""
    order = np.argsort(means[:, 0], kind="stable")
    return weights[order], means[order], covs[order]


def run_chain(data, prior: FiniteMixturePrior, mode, J: int, config: GibbsConfig, grid: GridSpec | None = None):
    """Run one shard's chain with sweep order allocation, covariances, means, weights.

    In fraction mode the conditionals use the prior raised to ``1/J``;
    in naive and full mode the original prior is used.
    """
    data = np.asarray(data, dtype=float)
    if data.ndim == 1:
        data = data[:, None]
    if data.shape[0] < 1:
        raise ValueError("data must be non-empty")
    if data.shape[1] != prior.p:
        raise ValueError(f"data dimension {data.shape[1]} does not match prior dimension {prior.p}")
    mode = PriorMode(mode)
    power = mode.power(J)
    if grid is None:
        grid = default_grid_2d(data) if prior.p == 2 else default_grid_1d(data[:, 0])
    if grid.ndim != prior.p:
        raise ValueError("grid dimension must match the data dimension")
    points = grid.points()

    rng = np.random.default_rng(config.seed)
    K = prior.K
    state = init_state(data, K, rng)
    keep = set(retained_sweeps(config))
    n_keep = config.n_retained
    dens = np.empty((n_keep, grid.size))
    w_out = np.empty((n_keep, K))
    mu_out = np.empty((n_keep, K, prior.p))
    cov_out = np.empty((n_keep, K, prior.p, prior.p))
    floored = 0

    def count_floor(n):
        nonlocal floored
        floored += n

    row = 0
    for sweep in range(config.iters):
        state = gibbs_sweep(state, data, prior, power, rng, sweep=sweep, on_floor=count_floor)
        if sweep in keep:
            w_s, mu_s, cov_s = relabel(state.weights, state.comp_means, state.comp_covs)
            w_out[row], mu_out[row], cov_out[row] = w_s, mu_s, cov_s
            dens[row] = mixture_density(points, w_s, mu_s, cov_s)
            row += 1

    if floored:
        log.info("IW dof floored %d times in %d sweeps", floored, config.iters)
    return ChainDraws(
        grid=grid,
        densities=dens,
        params={"weights": w_out, "means": mu_out, "covs": cov_out},
        diagnostics={"dof_floor_events": floored, "final_counts": np.bincount(state.alloc, minlength=K).tolist()},
    )
