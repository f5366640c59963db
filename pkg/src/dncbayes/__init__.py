"""Divide-and-conquer Bayesian density estimation with fractionated priors."""

from .draws import ChainDraws, GibbsConfig
from .engine import (
    RunConfig,
    RunManifest,
    ShardPlan,
    combine_draw_level,
    combine_mean_density,
    combine_param_means,
    make_shard_plan,
    run_shards,
)
from .fraction import DeconvPrior, DpmnPrior, FiniteMixturePrior, PriorMode, fractionate
from .grids import DensityGrid, GridSpec
from .metrics import RegionSpec, hellinger, iad, param_table, w2_to_point

__version__ = "0.1.0"

__all__ = [
    "ChainDraws",
    "DeconvPrior",
    "DensityGrid",
    "DpmnPrior",
    "FiniteMixturePrior",
    "GibbsConfig",
    "GridSpec",
    "PriorMode",
    "RegionSpec",
    "RunConfig",
    "RunManifest",
    "ShardPlan",
    "combine_draw_level",
    "combine_mean_density",
    "combine_param_means",
    "fractionate",
    "hellinger",
    "iad",
    "make_shard_plan",
    "param_table",
    "run_shards",
    "w2_to_point",
]
