"""Prior families and their 1/J fractionated counterparts.

Fractionating raises each prior density to the power ``1/J`` so that the
product of the J shard priors recovers the original prior.  For the
Dirichlet and Dirichlet-process layers the concentration is divided by J
instead, which keeps the means and inflates the variances.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import numpy as np

from .kernels import DirichletParams, InvGammaParams, InvWishartParams

__all__ = [
    "PriorMode",
    "FiniteMixturePrior",
    "DpmnPrior",
    "DeconvPrior",
    "fractionate_finite",
    "fractionate_dpmn",
    "fractionate_deconv",
    "fractionate",
    "marginal_dirichlet_of_dp",
    "prior_to_dict",
    "prior_from_dict",
]


class PriorMode(str, enum.Enum):
    FULL = "full"
    NAIVE = "naive"
    FRACTION = "fraction"

    def power(self, J: int) -> int:
        """The J used inside conditionals: the shard count in fraction mode, else 1."""
        return J if self is PriorMode.FRACTION else 1


@dataclass(frozen=True)
class FiniteMixturePrior:
    """``pi ~ Dir(alpha)``, ``mu_k | Sigma_k ~ N(0, mean_scale Sigma_k)``, ``Sigma_k ~ IW``."""

    dirichlet: DirichletParams
    mean_scale: float
    iw: InvWishartParams

    def __post_init__(self):
        if not self.mean_scale > 0:
            raise ValueError("mean_scale must be positive")

    @property
    def K(self) -> int:
        return self.dirichlet.K

    @property
    def p(self) -> int:
        return self.iw.p


@dataclass(frozen=True)
class DpmnPrior:
    """``P ~ DP(dp_mass, N(base_mean, base_var))`` and an inverse-gamma prior on sigma^2."""

    dp_mass: float
    base_mean: float
    base_var: float
    sigma_prior: InvGammaParams

    def __post_init__(self):
        if not (self.dp_mass > 0 and self.base_var > 0):
            raise ValueError("dp_mass and base_var must be positive")


@dataclass(frozen=True)
class DeconvPrior:
    """Finite-K approximation of the mixture-of-uniforms deconvolution hierarchy.

    ``p ~ Dir(dp_mass/K, ...)``, ``alpha_k ~ Expon(lam; t, inf)``,
    ``beta_k ~ Ga(xi1, xi2)`` (shape, rate).
    """

    dp_mass: float = 1.0
    K: int = 30
    lam: float = 1.0
    t: float = 1.5
    xi1: float = 2.0
    xi2: float = 2.0

    def __post_init__(self):
        if not self.t > 1:
            raise ValueError("t must exceed 1 for a density finite at zero")
        if not (self.dp_mass > 0 and self.lam > 0 and self.xi1 > 0 and self.xi2 > 0):
            raise ValueError("dp_mass, lam, xi1, xi2 must be positive")
        if int(self.K) < 1:
            raise ValueError("K must be a positive integer")


def _check_J(J):
    if int(J) != J or J < 1:
        raise ValueError(f"J must be a positive integer, got {J}")
    return int(J)


def fractionate_finite(prior: FiniteMixturePrior, J: int) -> FiniteMixturePrior:
    J = _check_J(J)
    if J == 1:
        return prior
    p = prior.p
    iw = InvWishartParams(prior.iw.dof / J - (p + 1) * (J - 1) / J, prior.iw.scale / J)
    return FiniteMixturePrior(
        dirichlet=DirichletParams(prior.dirichlet.alpha / J),
        mean_scale=prior.mean_scale * J,
        iw=iw,
    )


def fractionate_dpmn(prior: DpmnPrior, J: int) -> DpmnPrior:
    J = _check_J(J)
    if J == 1:
        return prior
    a, b = prior.sigma_prior.shape, prior.sigma_prior.scale
    return replace(
        prior,
        dp_mass=prior.dp_mass / J,
        sigma_prior=InvGammaParams(a / J - (J - 1) / J, b / J),
    )


def fractionate_deconv(prior: DeconvPrior, J: int, fractionate_beta: bool = True) -> DeconvPrior:
    """Divide the DP mass and the exponential rate on the shapes by J.

    With ``fractionate_beta`` the gamma prior on the component rates also
    gets the exact 1/J power, ``Ga((xi1 + J - 1)/J, xi2/J)``.
    """
    J = _check_J(J)
    if J == 1:
        return prior
    out = replace(prior, dp_mass=prior.dp_mass / J, lam=prior.lam / J)
    if fractionate_beta:
        out = replace(out, xi1=(prior.xi1 + J - 1) / J, xi2=prior.xi2 / J)
    return out


def fractionate(prior, J: int, **kwargs):
    if isinstance(prior, FiniteMixturePrior):
        return fractionate_finite(prior, J)
    if isinstance(prior, DpmnPrior):
        return fractionate_dpmn(prior, J)
    if isinstance(prior, DeconvPrior):
        return fractionate_deconv(prior, J, **kwargs)
    raise TypeError(f"cannot fractionate {type(prior).__name__}")


def marginal_dirichlet_of_dp(dp_mass: float, base_masses) -> DirichletParams:
    """Dirichlet law of ``(P(A_1), ..., P(A_k))`` for ``P ~ DP(dp_mass, G)``."""
    masses = np.asarray(base_masses, dtype=float)
    if abs(masses.sum() - 1) > 1e-12:
        raise ValueError("base masses must sum to one")
    return DirichletParams(dp_mass * masses)


def prior_to_dict(prior) -> dict:
    if isinstance(prior, FiniteMixturePrior):
        return {
            "family": "finite",
            "alpha": prior.dirichlet.alpha.tolist(),
            "mean_scale": prior.mean_scale,
            "iw_dof": prior.iw.dof,
            "iw_scale": prior.iw.scale.tolist(),
        }
    if isinstance(prior, DpmnPrior):
        return {
            "family": "dpmn",
            "dp_mass": prior.dp_mass,
            "base_mean": prior.base_mean,
            "base_var": prior.base_var,
            "sigma_shape": prior.sigma_prior.shape,
            "sigma_scale": prior.sigma_prior.scale,
        }
    if isinstance(prior, DeconvPrior):
        return {
            "family": "deconv",
            "dp_mass": prior.dp_mass,
            "K": prior.K,
            "lam": prior.lam,
            "t": prior.t,
            "xi1": prior.xi1,
            "xi2": prior.xi2,
        }
    raise TypeError(f"unknown prior {type(prior).__name__}")


def prior_from_dict(d: dict):
    family = d["family"]
    if family == "finite":
        return FiniteMixturePrior(
            DirichletParams(d["alpha"]),
            d["mean_scale"],
            InvWishartParams(d["iw_dof"], np.asarray(d["iw_scale"])),
        )
    if family == "dpmn":
        return DpmnPrior(
            d["dp_mass"], d["base_mean"], d["base_var"], InvGammaParams(d["sigma_shape"], d["sigma_scale"])
        )
    if family == "deconv":
        return DeconvPrior(d["dp_mass"], int(d["K"]), d["lam"], d["t"], d["xi1"], d["xi2"])
    raise ValueError(f"unknown prior family {family!r}")
