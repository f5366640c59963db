"""Density evaluation and random-variate generation for the sampler building blocks.

Every sampler takes an explicit ``numpy.random.Generator`` and is a pure
function of it.  Parameter containers validate themselves on construction;
inverse-Wishart and inverse-gamma containers may hold kernel-only
(improper) values, which can be evaluated as kernels but never sampled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import singledispatch

import numpy as np
from scipy import linalg, special

from .errors import ImproperDistribution, OutOfSupport

__all__ = [
    "DirichletParams",
    "MvNormalParams",
    "InvWishartParams",
    "InvGammaParams",
    "GammaParams",
    "TruncNormalParams",
    "BetaParams",
    "StudentTParams",
    "sample_dirichlet",
    "sample_mvnormal",
    "sample_invwishart",
    "sample_invgamma",
    "sample_truncated_gamma",
    "sample_truncated_normal",
    "sample_beta",
    "sample_student_t",
    "dirichlet_rvs",
    "truncnorm_rvs",
    "truncgamma_rvs",
    "invwishart_rvs",
    "gamma_cdf",
    "log_density",
    "log_kernel",
]

LOG_2PI = math.log(2.0 * math.pi)
SMALL_SHAPE = 0.01
TINY_MASS = 1e-12


# ---------------------------------------------------------------------------
# Parameter containers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DirichletParams:
    alpha: np.ndarray

    def __post_init__(self):
        alpha = np.atleast_1d(np.asarray(self.alpha, dtype=float))
        if alpha.ndim != 1 or alpha.size < 1:
            raise ValueError("Dirichlet alpha must be a non-empty vector")
        if not np.all(alpha > 0):
            raise ValueError(f"Dirichlet alpha must be positive, got {alpha}")
        alpha.setflags(write=False)
        object.__setattr__(self, "alpha", alpha)

    @property
    def K(self) -> int:
        return self.alpha.size


@dataclass(frozen=True)
class MvNormalParams:
    mean: np.ndarray
    cov: np.ndarray
    chol: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if cov.shape != (mean.size, mean.size):
            raise ValueError("covariance shape does not match mean")
        if not np.allclose(cov, cov.T, rtol=0, atol=1e-12):
            raise ValueError("covariance must be symmetric")
        try:
            chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError as exc:
            raise ValueError("covariance must be positive definite") from exc
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "chol", chol)

    @property
    def p(self) -> int:
        return self.mean.size


@dataclass(frozen=True)
class InvWishartParams:
    """Inverse-Wishart ``IW(dof, scale)`` with density proportional to
    ``|X|^{-(dof+p+1)/2} exp(-tr(scale X^{-1})/2)``.

    ``dof`` may be any real number; ``proper`` is true only when the mean
    exists (``dof > p + 1``), which is also the sampling requirement.
    """

    dof: float
    scale: np.ndarray

    def __post_init__(self):
        scale = np.atleast_2d(np.asarray(self.scale, dtype=float))
        if scale.shape[0] != scale.shape[1]:
            raise ValueError("inverse-Wishart scale must be square")
        if not np.allclose(scale, scale.T, rtol=0, atol=1e-12):
            raise ValueError("inverse-Wishart scale must be symmetric")
        if np.any(np.linalg.eigvalsh(scale) <= 0):
            raise ValueError("inverse-Wishart scale must be positive definite")
        object.__setattr__(self, "dof", float(self.dof))
        object.__setattr__(self, "scale", scale)

    @property
    def p(self) -> int:
        return self.scale.shape[0]

    @property
    def proper(self) -> bool:
        return self.dof > self.p + 1


@dataclass(frozen=True)
class InvGammaParams:
    """Inverse-gamma on a positive variable, density ``∝ x^{-shape-1} exp(-scale/x)``."""

    shape: float
    scale: float

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError(f"inverse-gamma scale must be positive, got {self.scale}")
        object.__setattr__(self, "shape", float(self.shape))
        object.__setattr__(self, "scale", float(self.scale))

    @property
    def proper(self) -> bool:
        return self.shape > 0


@dataclass(frozen=True)
class GammaParams:
    """Gamma with shape and rate, optionally truncated to ``(lower, upper)``."""

    shape: float
    rate: float
    lower: float = 0.0
    upper: float = math.inf

    def __post_init__(self):
        if not (self.shape > 0 and self.rate > 0):
            raise ValueError("gamma shape and rate must be positive")
        if not (0 <= self.lower < self.upper):
            raise ValueError("gamma truncation needs 0 <= lower < upper")


@dataclass(frozen=True)
class TruncNormalParams:
    mean: float
    var: float
    lower: float = -math.inf
    upper: float = math.inf

    def __post_init__(self):
        if not self.var > 0:
            raise ValueError("normal variance must be positive")
        if not self.lower < self.upper:
            raise ValueError("truncation needs lower < upper")


@dataclass(frozen=True)
class BetaParams:
    a: float
    b: float

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise ValueError("beta parameters must be positive")


@dataclass(frozen=True)
class StudentTParams:
    df: float
    loc: float = 0.0
    scale: float = 1.0

    def __post_init__(self):
        if not (self.df > 0 and self.scale > 0):
            raise ValueError("student-t df and scale must be positive")


# ---------------------------------------------------------------------------
# Vectorized primitives used by the samplers' hot loops
# ---------------------------------------------------------------------------


def dirichlet_rvs(alpha, rng):
    """Dirichlet draws from normalized gamma variates along the last axis of ``alpha``.

    Shapes below ``SMALL_SHAPE`` go through ``G(a) = G(a+1) U^{1/a}`` in log
    space so that fractionated concentrations do not underflow to zero.
    """
    alpha = np.asarray(alpha, dtype=float)
    small = alpha < SMALL_SHAPE
    if not small.any():
        g = rng.standard_gamma(alpha)
        total = g.sum(axis=-1, keepdims=True)
        if np.all(total > 0):
            return g / total
        # some rows underflowed entirely; redo everything in log space
        small = np.ones_like(small)
    log_g = np.empty_like(alpha)
    big = ~small
    if big.any():
        with np.errstate(divide="ignore"):
            log_g[big] = np.log(rng.standard_gamma(alpha[big]))
    a_small = alpha[small]
    log_g[small] = np.log(rng.standard_gamma(a_small + 1.0)) + np.log(rng.random(a_small.size)) / a_small
    log_g -= log_g.max(axis=-1, keepdims=True)
    w = np.exp(log_g)
    return w / w.sum(axis=-1, keepdims=True)


def truncnorm_rvs(mean, sd, lower, upper, rng):
    """Vectorized truncated normal by inverse CDF evaluated in log space.

    Intervals in the upper tail are reflected into the lower tail, where
    ``log_ndtr``/``ndtri_exp`` stay accurate tens of standard deviations out.
    """
    mean, sd, lower, upper = np.broadcast_arrays(
        np.asarray(mean, float), np.asarray(sd, float), np.asarray(lower, float), np.asarray(upper, float)
    )
    a = (lower - mean) / sd
    b = (upper - mean) / sd
    flip = a > 0
    lo = np.where(flip, -b, a)
    hi = np.where(flip, -a, b)
    u = rng.random(mean.shape)
    log_hi = special.log_ndtr(hi)
    log_lo = special.log_ndtr(lo)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.exp(log_lo - log_hi)
        log_p = log_hi + np.log(ratio + u * (1.0 - ratio))
    z = special.ndtri_exp(np.minimum(log_p, 0.0))
    z = np.clip(z, lo, hi)
    z = np.where(flip, -z, z)
    return mean + sd * z


def _gamma_tail_rejection(shape, lo, hi, rng):
    """Ga(shape, 1) restricted to ``(lo, hi)`` with ``lo`` beyond the mode.

    Shifted-exponential envelope; the acceptance ratio is maximal at ``lo``.
    """
    lam = 1.0 - (shape - 1.0) / lo if shape >= 1.0 else 1.0
    while True:
        y = lo + rng.exponential(1.0 / lam)
        if y >= hi:
            continue
        if shape >= 1.0:
            log_acc = (shape - 1.0) * (math.log(y / lo) - (y - lo) / lo)
        else:
            log_acc = (shape - 1.0) * math.log(y / lo)
        if math.log(rng.random()) <= log_acc:
            return y


def _gamma_interval_rejection(shape, lo, hi, rng):
    """Ga(shape, 1) restricted to a finite ``(lo, hi)``; uniform envelope."""
    mode = max(shape - 1.0, 0.0)
    peak = min(max(mode, lo), hi)
    log_peak = (shape - 1.0) * math.log(peak) - peak if peak > 0 else 0.0
    while True:
        y = lo + (hi - lo) * rng.random()
        if y <= 0:
            continue
        log_acc = (shape - 1.0) * math.log(y) - y - log_peak
        if math.log(rng.random()) <= log_acc:
            return y


def truncgamma_rvs(shape, rate, lower, upper, rng):
    """Vectorized gamma (shape, rate) truncated to ``[lower, upper)``.

    An untruncated proposal is accepted whenever it lands inside the
    interval; remaining entries are drawn by inverse CDF on the truncated
    mass, and intervals whose mass is below ``TINY_MASS`` by rejection.
    """
    shape, rate, lower, upper = np.broadcast_arrays(
        np.asarray(shape, float), np.asarray(rate, float), np.asarray(lower, float), np.asarray(upper, float)
    )
    lo = lower * rate
    hi = upper * rate
    y = rng.standard_gamma(shape)
    todo = ~((y >= lo) & (y < hi))
    if todo.any():
        idx = np.flatnonzero(todo)
        s, l, h = shape.flat[idx], lo.flat[idx], hi.flat[idx]
        u = rng.random(idx.size)
        upper_side = l > s
        out = np.empty(idx.size)
        mass = np.empty(idx.size)
        # upper-tail formulation keeps precision when the interval sits past the bulk
        if upper_side.any():
            q_lo = special.gammaincc(s[upper_side], l[upper_side])
            q_hi = special.gammaincc(s[upper_side], h[upper_side])
            mass[upper_side] = q_lo - q_hi
            out[upper_side] = special.gammainccinv(s[upper_side], q_lo - u[upper_side] * (q_lo - q_hi))
        lower_side = ~upper_side
        if lower_side.any():
            p_lo = special.gammainc(s[lower_side], l[lower_side])
            p_hi = special.gammainc(s[lower_side], h[lower_side])
            mass[lower_side] = p_hi - p_lo
            out[lower_side] = special.gammaincinv(s[lower_side], p_lo + u[lower_side] * (p_hi - p_lo))
        bad = (mass < TINY_MASS) | ~(out >= l) | ~(out <= h) | ~np.isfinite(out)
        for i in np.flatnonzero(bad):
            mode = max(s[i] - 1.0, 0.0)
            if l[i] > mode:
                out[i] = _gamma_tail_rejection(s[i], l[i], h[i], rng)
            elif math.isfinite(h[i]):
                out[i] = _gamma_interval_rejection(s[i], l[i], h[i], rng)
            else:
                # interval holds the mode, so its mass is not small
                while not (l[i] <= (g := rng.standard_gamma(s[i])) < h[i]):
                    pass
                out[i] = g
        y = y.copy() if y.ndim else np.array(y)
        y.flat[idx] = np.clip(out, l, h)
    return y / rate


def invwishart_rvs(dof, scale, rng):
    """Inverse-Wishart draw through the Bartlett factor of the Wishart of the inverse.

    ``dof`` may be a vector with ``scale`` a matching stack of matrices, in
    which case one draw per matrix is returned.
    """
    scale = np.asarray(scale, dtype=float)
    single = scale.ndim == 2
    scale = np.atleast_3d(scale) if not single else scale[None]
    dof = np.atleast_1d(np.asarray(dof, dtype=float))
    k, p, _ = scale.shape
    chol_inv = np.linalg.cholesky(np.linalg.inv(scale))
    a = np.zeros((k, p, p))
    diag = np.arange(p)
    a[:, diag, diag] = np.sqrt(rng.chisquare(dof[:, None] - diag[None, :]))
    low = np.tril_indices(p, -1)
    a[:, low[0], low[1]] = rng.standard_normal((k, len(low[0])))
    m_inv = np.linalg.inv(chol_inv @ a)
    out = np.swapaxes(m_inv, 1, 2) @ m_inv
    out = 0.5 * (out + np.swapaxes(out, 1, 2))
    return out[0] if single else out


# ---------------------------------------------------------------------------
# Parameter-container samplers
# ---------------------------------------------------------------------------


def sample_dirichlet(params: DirichletParams, rng, size=None) -> np.ndarray:
    """One draw of shape ``(K,)``, or ``(size, K)`` draws."""
    shape = (params.K,) if size is None else (size, params.K)
    if params.K == 1:
        return np.ones(shape)
    return dirichlet_rvs(np.broadcast_to(params.alpha, shape), rng)


def sample_mvnormal(params: MvNormalParams, rng, size=None) -> np.ndarray:
    if size is None:
        return params.mean + params.chol @ rng.standard_normal(params.p)
    z = rng.standard_normal((size, params.p))
    return params.mean + z @ params.chol.T


def sample_invwishart(params: InvWishartParams, rng) -> np.ndarray:
    if not params.proper:
        raise ImproperDistribution(f"IW dof {params.dof} <= p + 1 = {params.p + 1}")
    return invwishart_rvs(params.dof, params.scale, rng)


def sample_invgamma(params: InvGammaParams, rng, size=None):
    if not params.proper:
        raise ImproperDistribution(f"IG shape {params.shape} <= 0")
    return params.scale / rng.standard_gamma(params.shape, size=size)


def sample_truncated_gamma(params: GammaParams, rng, size=None):
    shape = () if size is None else size
    out = truncgamma_rvs(
        np.full(shape, params.shape), params.rate, params.lower, params.upper, rng
    )
    return float(out) if size is None else out


def sample_truncated_normal(params: TruncNormalParams, rng, size=None):
    shape = () if size is None else size
    out = truncnorm_rvs(
        np.full(shape, params.mean), math.sqrt(params.var), params.lower, params.upper, rng
    )
    return float(out) if size is None else out


def sample_beta(params: BetaParams, rng, size=None):
    return rng.beta(params.a, params.b, size=size)


def sample_student_t(params: StudentTParams, rng, size=None):
    z = rng.standard_normal(size)
    chi2 = rng.chisquare(params.df, size=size)
    return params.loc + params.scale * z / np.sqrt(chi2 / params.df)


def gamma_cdf(x, params: GammaParams):
    """CDF of a (possibly truncated) gamma; vectorized over ``x``."""
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise OutOfSupport("gamma CDF needs x >= 0")
    p = special.gammainc(params.shape, params.rate * x)
    if params.lower == 0 and math.isinf(params.upper):
        return p
    p_lo = special.gammainc(params.shape, params.rate * params.lower)
    p_hi = special.gammainc(params.shape, params.rate * params.upper)
    return np.clip((p - p_lo) / (p_hi - p_lo), 0.0, 1.0)


# ---------------------------------------------------------------------------
# Log densities
# ---------------------------------------------------------------------------


@singledispatch
def log_kernel(dist, x) -> float:
    """Unnormalized log density; defined for improper parameterizations too."""
    raise TypeError(f"no kernel for {type(dist).__name__}")


@singledispatch
def log_density(dist, x) -> float:
    """Normalized log density of ``dist`` at ``x``."""
    raise TypeError(f"no density for {type(dist).__name__}")


@log_kernel.register
def _(dist: DirichletParams, x):
    x = np.asarray(x, dtype=float)
    if x.shape != (dist.K,) or np.any(x < 0) or abs(x.sum() - 1) > 1e-9:
        raise OutOfSupport("point is not on the simplex")
    with np.errstate(divide="ignore"):
        return float(np.sum((dist.alpha - 1) * np.log(x)))


@log_density.register
def _(dist: DirichletParams, x):
    norm = special.gammaln(dist.alpha.sum()) - special.gammaln(dist.alpha).sum()
    return float(norm + log_kernel(dist, x))


@log_density.register
def _(dist: MvNormalParams, x):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    z = linalg.solve_triangular(dist.chol, x - dist.mean, lower=True)
    half_logdet = np.log(np.diag(dist.chol)).sum()
    return float(-0.5 * dist.p * LOG_2PI - half_logdet - 0.5 * z @ z)


@log_kernel.register
def _(dist: MvNormalParams, x):
    return log_density(dist, x)


def _check_spd(x):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    try:
        chol = np.linalg.cholesky(x)
    except np.linalg.LinAlgError as exc:
        raise OutOfSupport("matrix is not positive definite") from exc
    return x, chol


@log_kernel.register
def _(dist: InvWishartParams, x):
    x, chol = _check_spd(x)
    logdet = 2 * np.log(np.diag(chol)).sum()
    trace = np.trace(linalg.cho_solve((chol, True), dist.scale))
    return float(-0.5 * (dist.dof + dist.p + 1) * logdet - 0.5 * trace)


@log_density.register
def _(dist: InvWishartParams, x):
    p = dist.p
    if not dist.dof > p - 1:
        raise ImproperDistribution(f"IW dof {dist.dof} has no normalizing constant")
    sign, logdet_s = np.linalg.slogdet(dist.scale)
    norm = 0.5 * dist.dof * logdet_s - 0.5 * dist.dof * p * math.log(2) - special.multigammaln(0.5 * dist.dof, p)
    return float(norm + log_kernel(dist, x))


@log_kernel.register
def _(dist: InvGammaParams, x):
    if not x > 0:
        raise OutOfSupport("inverse-gamma support is x > 0")
    return -(dist.shape + 1) * math.log(x) - dist.scale / x


@log_density.register
def _(dist: InvGammaParams, x):
    if not dist.proper:
        raise ImproperDistribution(f"IG shape {dist.shape} <= 0")
    return dist.shape * math.log(dist.scale) - special.gammaln(dist.shape) + log_kernel(dist, x)


@log_kernel.register
def _(dist: GammaParams, x):
    if not (dist.lower <= x <= dist.upper) or x <= 0:
        raise OutOfSupport(f"x={x} outside ({dist.lower}, {dist.upper})")
    return (dist.shape - 1) * math.log(x) - dist.rate * x


@log_density.register
def _(dist: GammaParams, x):
    log_norm = dist.shape * math.log(dist.rate) - special.gammaln(dist.shape)
    if dist.lower > 0 or not math.isinf(dist.upper):
        mass = special.gammainc(dist.shape, dist.rate * dist.upper) - special.gammainc(dist.shape, dist.rate * dist.lower)
        log_norm -= math.log(mass)
    return log_norm + log_kernel(dist, x)


@log_kernel.register
def _(dist: TruncNormalParams, x):
    if not (dist.lower <= x <= dist.upper):
        raise OutOfSupport(f"x={x} outside ({dist.lower}, {dist.upper})")
    return -0.5 * (x - dist.mean) ** 2 / dist.var


@log_density.register
def _(dist: TruncNormalParams, x):
    sd = math.sqrt(dist.var)
    a = (dist.lower - dist.mean) / sd
    b = (dist.upper - dist.mean) / sd
    if a > 0:
        a, b = -b, -a
    log_mass = special.log_ndtr(b) + math.log1p(-math.exp(special.log_ndtr(a) - special.log_ndtr(b)))
    return log_kernel(dist, x) - 0.5 * LOG_2PI - math.log(sd) - log_mass


@log_density.register
def _(dist: BetaParams, x):
    if not 0 < x < 1:
        raise OutOfSupport("beta support is (0, 1)")
    return float((dist.a - 1) * math.log(x) + (dist.b - 1) * math.log1p(-x) - special.betaln(dist.a, dist.b))


@log_density.register
def _(dist: StudentTParams, x):
    nu = dist.df
    z = (x - dist.loc) / dist.scale
    return float(
        special.gammaln((nu + 1) / 2)
        - special.gammaln(nu / 2)
        - 0.5 * math.log(nu * math.pi)
        - math.log(dist.scale)
        - (nu + 1) / 2 * math.log1p(z * z / nu)
    )
