"""Divide-and-conquer pipeline: shard the data, fit every shard, average the densities."""

from __future__ import annotations

import hashlib
import json
import logging
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import deconv, dpmn, finite
from .draws import ChainDraws, GibbsConfig
from .errors import GridMismatch, InvalidShardCount, MissingParams, ShardFailure
from .fraction import DeconvPrior, DpmnPrior, FiniteMixturePrior, PriorMode, prior_from_dict, prior_to_dict
from .grids import DensityGrid, GridSpec, check_same_grid

log = logging.getLogger(__name__)

__all__ = [
    "ShardCountWarning",
    "ShardPlan",
    "RunConfig",
    "RunManifest",
    "derive_seed",
    "make_shard_plan",
    "fit_shard",
    "run_shards",
    "combine_mean_density",
    "combine_draw_level",
    "combine_param_means",
    "write_draws",
    "read_draws",
    "write_run",
    "read_run",
    "write_combined",
    "read_combined",
    "hash_array",
]

MODELS = ("finite", "dpmn", "deconv")


class ShardCountWarning(UserWarning):
    """J grows faster than the log n regime the theory covers."""


def derive_seed(master_seed: int, shard: int) -> int:
    """64-bit seed for one shard, hashed from ``(master_seed, shard)``."""
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(shard),))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True)
class ShardPlan:
    J: int
    assignment: np.ndarray
    per_shard_seed: tuple

    def indices(self, j: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == j)

    def sizes(self) -> np.ndarray:
        return np.bincount(self.assignment, minlength=self.J)


def make_shard_plan(n: int, J: int, master_seed: int) -> ShardPlan:
    """Uniformly random balanced partition of ``range(n)`` into J shards."""
    if J < 1 or n < 1:
        raise ValueError("n and J must be positive")
    if J > n:
        raise InvalidShardCount(f"cannot split {n} observations into {J} shards")
    if J > 1 and J > 3 * math.log(n):
        warnings.warn(
            f"J={J} exceeds 3 log n = {3 * math.log(n):.1f}; shards may be too small",
            ShardCountWarning,
            stacklevel=2,
        )
    rng = np.random.default_rng(np.random.SeedSequence(int(master_seed)))
    perm = rng.permutation(n)
    assignment = np.empty(n, dtype=np.int64)
    for j, idx in enumerate(np.array_split(perm, J)):
        assignment[idx] = j
    seeds = tuple(derive_seed(master_seed, j) for j in range(J))
    return ShardPlan(J, assignment, seeds)


@dataclass(frozen=True)
class RunConfig:
    """Everything besides the data that determines a fit."""

    model: str
    mode: PriorMode
    J: int
    iters: int
    burnin: int
    thin: int
    seed: int
    prior: object
    grid: GridSpec
    trunc: int = 50
    fractionate_beta: bool = True

    def __post_init__(self):
        if self.model not in MODELS:
            raise ValueError(f"unknown model {self.model!r}")
        object.__setattr__(self, "mode", PriorMode(self.mode))
        if self.mode is PriorMode.FULL and self.J != 1:
            raise ValueError("full mode fits the whole data set; use J=1")

    def gibbs(self, seed: int) -> GibbsConfig:
        return GibbsConfig(self.iters, self.burnin, self.thin, seed)


@dataclass
class RunManifest:
    config: RunConfig
    per_shard_seed: tuple
    shard_sizes: tuple
    data_sha256: str = ""
    data_path: str = ""
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        c = self.config
        return {
            "model": c.model,
            "mode": c.mode.value,
            "J": c.J,
            "iters": c.iters,
            "burnin": c.burnin,
            "thin": c.thin,
            "seed": c.seed,
            "trunc_H": c.trunc,
            "fractionate_beta": c.fractionate_beta,
            "prior": prior_to_dict(c.prior),
            "grid": c.grid.to_dict(),
            "per_shard_seed": [str(s) for s in self.per_shard_seed],
            "shard_sizes": list(self.shard_sizes),
            "data_path": self.data_path,
            "data_sha256": self.data_sha256,
            **({"extra": self.extra} if self.extra else {}),
        }

    @classmethod
    def from_dict(cls, d) -> RunManifest:
        config = RunConfig(
            model=d["model"],
            mode=d["mode"],
            J=d["J"],
            iters=d["iters"],
            burnin=d["burnin"],
            thin=d["thin"],
            seed=d["seed"],
            prior=prior_from_dict(d["prior"]),
            grid=GridSpec.from_dict(d["grid"]),
            trunc=d.get("trunc_H", 50),
            fractionate_beta=d.get("fractionate_beta", True),
        )
        return cls(
            config=config,
            per_shard_seed=tuple(int(s) for s in d["per_shard_seed"]),
            shard_sizes=tuple(d["shard_sizes"]),
            data_sha256=d.get("data_sha256", ""),
            data_path=d.get("data_path", ""),
            extra=d.get("extra", {}),
        )

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def hash_array(data) -> str:
    arr = np.ascontiguousarray(np.asarray(data, dtype=float))
    return hashlib.sha256(arr.tobytes()).hexdigest()


def fit_shard(model, data, prior, mode, J, gibbs: GibbsConfig, grid, trunc=50, fractionate_beta=True) -> ChainDraws:
    """Run the model's chain on one shard; ``data`` is an array or a ``(w, sigma)`` pair."""
    if model == "finite":
        if not isinstance(prior, FiniteMixturePrior):
            raise TypeError("finite model needs a FiniteMixturePrior")
        return finite.run_chain(data, prior, mode, J, gibbs, grid)
    if model == "dpmn":
        if not isinstance(prior, DpmnPrior):
            raise TypeError("dpmn model needs a DpmnPrior")
        return dpmn.run_chain(data, prior, mode, J, dpmn.DpmnConfig(gibbs, trunc), grid)
    if model == "deconv":
        if not isinstance(prior, DeconvPrior):
            raise TypeError("deconv model needs a DeconvPrior")
        return deconv.run_chain(data, prior, mode, J, deconv.DeconvConfig(gibbs, fractionate_beta), grid)
    raise ValueError(f"unknown model {model!r}")


def _shard_data(data, idx):
    if isinstance(data, tuple):
        return tuple(np.asarray(a)[idx] for a in data)
    return np.asarray(data)[idx]


def _n_obs(data) -> int:
    return len(data[0]) if isinstance(data, tuple) else len(data)


def _run_one(args):
    j, model, shard, prior, mode, J, gibbs, grid, trunc, fractionate_beta = args
    try:
        return j, fit_shard(model, shard, prior, mode, J, gibbs, grid, trunc, fractionate_beta), None
    except Exception as exc:  # re-raised in the parent with the shard index
        return j, None, exc


def run_shards(data, plan: ShardPlan, config: RunConfig, workers: int = 1) -> list[ChainDraws]:
    """Fit every shard; results are ordered by shard index whatever the completion order.

    Fraction mode gives each shard the prior raised to ``1/J``; naive and full
    mode give it the original prior.  Any shard failure fails the run.
    """
    if plan.assignment.size != _n_obs(data):
        raise ValueError("shard plan does not match the data length")
    if plan.J != config.J:
        raise ValueError("shard plan and run configuration disagree on J")
    jobs = [
        (
            j,
            config.model,
            _shard_data(data, plan.indices(j)),
            config.prior,
            config.mode,
            config.J,
            config.gibbs(plan.per_shard_seed[j]),
            config.grid,
            config.trunc,
            config.fractionate_beta,
        )
        for j in range(plan.J)
    ]
    results: list = [None] * plan.J
    if workers <= 1 or plan.J == 1:
        outcomes = map(_run_one, jobs)
        for j, draws, exc in outcomes:
            if exc is not None:
                raise ShardFailure(j, exc) from exc
            results[j] = draws
    else:
        with ProcessPoolExecutor(max_workers=min(workers, plan.J)) as pool:
            for j, draws, exc in pool.map(_run_one, jobs):
                if exc is not None:
                    raise ShardFailure(j, exc) from exc
                results[j] = draws
    return results


def combine_mean_density(shard_draws) -> DensityGrid:
    """Average of the per-shard posterior-mean densities."""
    if not shard_draws:
        raise ValueError("nothing to combine")
    check_same_grid(*(d.grid for d in shard_draws))
    means = np.stack([d.densities.mean(axis=0) for d in shard_draws])
    return DensityGrid(shard_draws[0].grid, means.mean(axis=0))


def combine_draw_level(shard_draws, pairing=None, rng=None, n_out=None) -> np.ndarray:
    """Draws from the distribution of the shard-averaged density.

    Row ``i`` averages draw ``pairing[i, j]`` of every shard ``j``.  Without
    an explicit pairing, shard 0 keeps its own order and every other shard
    is paired through an independent random permutation (or resampling when
    chain lengths differ).
    """
    if not shard_draws:
        raise ValueError("nothing to combine")
    check_same_grid(*(d.grid for d in shard_draws))
    lengths = [d.n_draws for d in shard_draws]
    if pairing is None:
        n_out = lengths[0] if n_out is None else n_out
        rng = np.random.default_rng(0) if rng is None else rng
        cols = [np.arange(n_out) % lengths[0]]
        for n_j in lengths[1:]:
            cols.append(rng.permutation(n_j) if n_j == n_out else rng.integers(n_j, size=n_out))
        pairing = np.column_stack(cols)
    pairing = np.asarray(pairing, dtype=np.int64)
    if pairing.ndim != 2 or pairing.shape[1] != len(shard_draws):
        raise ValueError("pairing needs one column per shard")
    out = np.zeros((pairing.shape[0], *shard_draws[0].grid.shape))
    for j, d in enumerate(shard_draws):
        out += d.densities[pairing[:, j]]
    return out / len(shard_draws)


def combine_param_means(shard_draws) -> dict:
    """Unweighted average over shards of each shard's relabelled posterior means."""
    per_shard = []
    for d in shard_draws:
        if not d.params:
            raise MissingParams("draws carry no parameter summaries")
        per_shard.append(d.param_means())
    keys = per_shard[0].keys()
    return {k: np.mean([s[k] for s in per_shard], axis=0) for k in keys}


# ---------------------------------------------------------------------------
# Run directory I/O
# ---------------------------------------------------------------------------


def _grid_header(grid: GridSpec):
    pts = grid.points()
    if grid.ndim == 1:
        return ["%.17g" % v for v in pts[:, 0]]
    return ["%.17g:%.17g" % (a, b) for a, b in pts]


def write_draws(path, draws: ChainDraws):
    """One row per retained draw; header row holds the grid coordinates."""
    path = Path(path)
    flat = draws.densities.reshape(draws.n_draws, -1)
    with open(path, "w", newline="") as fh:
        fh.write(",".join(_grid_header(draws.grid)) + "\n")
        np.savetxt(fh, flat, delimiter=",", fmt="%.17g")


def read_draws(path, grid: GridSpec | None = None) -> ChainDraws:
    path = Path(path)
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        values = np.loadtxt(fh, delimiter=",", ndmin=2)
    if grid is None:
        if ":" in header[0]:
            pts = np.array([[float(v) for v in h.split(":")] for h in header])
            axes = (np.unique(pts[:, 0]), np.unique(pts[:, 1]))
        else:
            axes = (np.array([float(h) for h in header]),)
        grid = GridSpec(axes)
    elif len(header) != grid.size:
        raise GridMismatch(f"{path} has {len(header)} columns, grid has {grid.size} points")
    return ChainDraws(grid=grid, densities=values)


def _write_params(path, params: dict):
    names, cols = [], []
    for key, arr in sorted(params.items()):
        arr = np.asarray(arr, dtype=float)
        flat = arr.reshape(arr.shape[0], -1)
        for idx in np.ndindex(*arr.shape[1:]):
            names.append(key + "".join(f"[{i}]" for i in idx))
        cols.append(flat)
    with open(path, "w", newline="") as fh:
        fh.write(",".join(names) + "\n")
        np.savetxt(fh, np.hstack(cols), delimiter=",", fmt="%.17g")


def _read_params(path) -> dict:
    with open(path) as fh:
        names = fh.readline().strip().split(",")
        values = np.loadtxt(fh, delimiter=",", ndmin=2)
    grouped: dict = {}
    for col, name in enumerate(names):
        key, _, rest = name.partition("[")
        idx = tuple(int(i) for i in rest.rstrip("]").split("][")) if rest else ()
        grouped.setdefault(key, []).append((idx, col))
    out = {}
    for key, entries in grouped.items():
        if entries[0][0] == ():
            out[key] = values[:, entries[0][1]]
            continue
        shape = tuple(max(e[0][d] for e in entries) + 1 for d in range(len(entries[0][0])))
        arr = np.empty((values.shape[0], *shape))
        for idx, col in entries:
            arr[(slice(None), *idx)] = values[:, col]
        out[key] = arr
    return out


def write_run(out_dir, manifest: RunManifest, shard_draws):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "manifest").write_text(manifest.dumps())
    for j, d in enumerate(shard_draws):
        write_draws(out_dir / f"draws-{j}.csv", d)
        if d.params:
            _write_params(out_dir / f"params-{j}.csv", d.params)
    return out_dir


def read_run(run_dir):
    run_dir = Path(run_dir)
    manifest = RunManifest.from_dict(json.loads((run_dir / "manifest").read_text()))
    grid = manifest.config.grid
    shards = []
    for j in range(manifest.config.J):
        d = read_draws(run_dir / f"draws-{j}.csv", grid)
        ppath = run_dir / f"params-{j}.csv"
        if ppath.exists():
            d.params = _read_params(ppath)
        shards.append(d)
    return manifest, shards


def write_combined(path, density: DensityGrid):
    path = Path(path)
    pts = density.grid.points()
    names = ["x", "y"][: density.grid.ndim] + ["density"]
    cols = [pts[:, d] for d in range(density.grid.ndim)] + [density.values.ravel()]
    with open(path, "w", newline="") as fh:
        fh.write(",".join(names) + "\n")
        np.savetxt(fh, np.column_stack(cols), delimiter=",", fmt="%.17g")


def read_combined(path) -> DensityGrid:
    with open(path) as fh:
        names = [h.strip().lower() for h in fh.readline().strip().split(",")]
        values = np.loadtxt(fh, delimiter=",", ndmin=2)
    if names[-1] != "density" or names[0] != "x":
        raise ValueError(f"{path} is not a combined density file")
    if len(names) == 2:
        grid = GridSpec((values[:, 0],))
    else:
        grid = GridSpec((np.unique(values[:, 0]), np.unique(values[:, 1])))
    return DensityGrid(grid, values[:, -1])
