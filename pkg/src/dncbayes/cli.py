"""Command-line entry point: simulate, fit, combine, score and tabulate."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from . import deconv, dpmn
from .engine import (
    RunConfig,
    RunManifest,
    combine_draw_level,
    combine_mean_density,
    combine_param_means,
    hash_array,
    make_shard_plan,
    read_combined,
    read_run,
    run_shards,
    write_combined,
    write_run,
)
from .errors import DncError
from .fraction import DeconvPrior, FiniteMixturePrior, PriorMode
from .grids import DensityGrid, GridSpec, default_grid_1d, default_grid_2d, symmetric_grid
from .kernels import DirichletParams, InvWishartParams
from .metrics import MetricRecord, RegionSpec, hellinger, iad, param_table, w2_to_point
from .simulate import (
    SIM1_COV,
    SIM1_MEANS,
    SIM1_WEIGHTS,
    Sim1Config,
    Sim2Config,
    gen_sim1,
    gen_sim2,
    ingest_gwas,
    read_csv_columns,
    sim1_density,
    sim2_density,
)

log = logging.getLogger("dncbayes")

EXIT_OK, EXIT_DATA, EXIT_USAGE = 0, 1, 2


def default_finite_prior(p: int, K: int = 2) -> FiniteMixturePrior:
    """``Dir(1/2, ...)``, ``mu | Sigma ~ N(0, 100 Sigma)``, ``Sigma ~ IW(2, 4 I)``."""
    return FiniteMixturePrior(DirichletParams(np.full(K, 0.5)), 100.0, InvWishartParams(2.0, 4.0 * np.eye(p)))


def load_data(path, model):
    """Finite: columns x1[,x2]; dpmn: column x or x1; deconv: w and sigma, or a GWAS id,w,sigma file."""
    path = Path(path)
    with open(path) as fh:
        header = [h.strip().lower() for h in fh.readline().split(",")]
    if model == "deconv":
        if "id" in header:
            recs = ingest_gwas(path)
            return (np.array([r.w for r in recs]), np.array([r.sigma for r in recs]))
        cols = read_csv_columns(path, ["w", "sigma"])
        if np.any(~(cols["sigma"] > 0)):
            raise ValueError("every sigma must be positive")
        return (cols["w"], cols["sigma"])
    if model == "finite":
        names = [n for n in ("x1", "x2") if n in header] or ["x"]
        cols = read_csv_columns(path, names)
        return np.column_stack([cols[n] for n in names])
    name = "x" if "x" in header else "x1"
    return read_csv_columns(path, [name])[name]


def _grid_from_args(args, data, model) -> GridSpec:
    if model == "deconv":
        w = data[0]
        points = args.grid_points or 1001
        if args.grid_min is None and args.grid_max is None:
            return deconv.default_deconv_grid(w, points)
        lo = args.grid_min if args.grid_min is not None else -args.grid_max
        hi = args.grid_max if args.grid_max is not None else -args.grid_min
        if np.isclose(lo, -hi):
            return symmetric_grid(hi, points)
        return GridSpec((np.linspace(lo, hi, points),))
    if model == "finite" and data.shape[1] == 2:
        return default_grid_2d(data, args.grid_points or 101, args.grid_min, args.grid_max)
    x = data[:, 0] if np.ndim(data) == 2 else data
    return default_grid_1d(x, args.grid_points or 1001, args.grid_min, args.grid_max)


def _prior_from_args(args, data, model):
    if model == "finite":
        return default_finite_prior(data.shape[1], args.K or 2)
    if model == "dpmn":
        prior = dpmn.default_dpmn_prior(data)
        if args.dp_mass is not None:
            prior = dpmn.DpmnPrior(args.dp_mass, prior.base_mean, prior.base_var, prior.sigma_prior)
        return prior
    base = deconv.default_deconv_prior(data[0])
    return DeconvPrior(
        dp_mass=base.dp_mass if args.dp_mass is None else args.dp_mass,
        K=args.K or base.K,
        lam=base.lam if args.lam is None else args.lam,
        t=base.t if args.t is None else args.t,
        xi1=base.xi1 if args.xi1 is None else args.xi1,
        xi2=base.xi2 if args.xi2 is None else args.xi2,
    )


def cmd_gen_sim1(args):
    gen_sim1(Sim1Config(args.n, args.seed), args.out)
    return EXIT_OK


def cmd_gen_sim2(args):
    gen_sim2(Sim2Config(args.n, args.seed), args.out)
    return EXIT_OK


def cmd_ingest_check(args):
    recs = ingest_gwas(args.path)
    print(f"{len(recs)} records")
    return EXIT_OK


def cmd_fit(args):
    if args.manifest:
        manifest = RunManifest.from_dict(json.loads(Path(args.manifest).read_text()))
        config = manifest.config
        data_path = args.data or manifest.data_path
        data = load_data(data_path, config.model)
        if manifest.data_sha256 and hash_array(_flat(data)) != manifest.data_sha256:
            raise ValueError(f"{data_path} does not match the data recorded in the manifest")
    else:
        if not args.data:
            raise UsageError("fit needs --data or --manifest")
        mode = PriorMode(args.mode)
        J = args.shards
        if mode is PriorMode.FULL and J != 1:
            raise UsageError("--mode full requires --shards 1")
        data_path = args.data
        data = load_data(data_path, args.model)
        config = RunConfig(
            model=args.model,
            mode=mode,
            J=J,
            iters=args.iters,
            burnin=args.burnin,
            thin=args.thin,
            seed=args.seed,
            prior=_prior_from_args(args, data, args.model),
            grid=_grid_from_args(args, data, args.model),
            trunc=args.trunc_H,
            fractionate_beta=args.fractionate_beta == "on",
        )
    n = len(data[0]) if isinstance(data, tuple) else len(data)
    plan = make_shard_plan(n, config.J, config.seed)
    draws = run_shards(data, plan, config, workers=args.workers)
    manifest = RunManifest(
        config=config,
        per_shard_seed=plan.per_shard_seed,
        shard_sizes=tuple(int(s) for s in plan.sizes()),
        data_sha256=hash_array(_flat(data)),
        data_path=str(data_path),
    )
    write_run(args.out, manifest, draws)
    return EXIT_OK


def _flat(data):
    return np.column_stack(data) if isinstance(data, tuple) else data


def cmd_combine(args):
    manifest, shards = read_run(args.run)
    out = Path(args.out) if args.out else Path(args.run) / "combined.csv"
    write_combined(out, combine_mean_density(shards))
    if manifest.config.model == "finite" and all(d.params for d in shards):
        means = combine_param_means(shards)
        (out.parent / "combined-params.json").write_text(
            json.dumps({k: np.asarray(v).tolist() for k, v in means.items()}, indent=2, sort_keys=True) + "\n"
        )
    return EXIT_OK


def _truth_density(name, grid: GridSpec) -> DensityGrid:
    if name == "sim1":
        return DensityGrid(grid, sim1_density(grid.points()).reshape(grid.shape))
    if name == "sim2":
        return DensityGrid(grid, sim2_density(grid.axes[0]))
    raise UsageError(f"unknown truth {name!r}")


def _reference(args, grid):
    if args.truth:
        return _truth_density(args.truth, grid)
    if args.b:
        return read_combined(args.b)
    raise UsageError("give a reference with --b or --truth")


def cmd_metrics(args):
    records = []
    if args.metric == "w2":
        if not args.run:
            raise UsageError("w2 needs --run")
        _, shards = read_run(args.run)
        grid = shards[0].grid
        ref = _reference(args, grid)
        cloud = combine_draw_level(shards, rng=np.random.default_rng(args.seed))
        value = w2_to_point([DensityGrid(grid, c) for c in cloud], ref)
        records.append(MetricRecord("w2", "all", value, grid.size))
    else:
        if not args.a:
            raise UsageError(f"{args.metric} needs --a")
        f = read_combined(args.a)
        g = _reference(args, f.grid)
        extent = (float(f.grid.axes[0][0]), float(f.grid.axes[0][-1]))
        if args.metric == "hellinger":
            records.append(MetricRecord("hellinger", "all", hellinger(f, g), f.grid.size))
        else:
            regions = [RegionSpec()]
            if args.cutoff is not None:
                regions = [RegionSpec("abs_above", args.cutoff), RegionSpec("abs_below", args.cutoff), RegionSpec()]
            for r in regions:
                records.append(MetricRecord("iad", r.label(), iad(f, g, r), f.grid.size, extent))
    text = "\n".join(r.dumps() for r in records) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_table(args):
    if args.truth != "sim1":
        raise UsageError("parameter tables are available for the sim1 truth only")
    reps = []
    for run in args.runs:
        path = Path(run)
        if path.is_dir():
            path = path / "combined-params.json"
        reps.append({k: np.asarray(v) for k, v in json.loads(path.read_text()).items()})
    truth = {"weights": SIM1_WEIGHTS, "means": SIM1_MEANS, "covs": np.stack([SIM1_COV, SIM1_COV])}
    summary = param_table(reps, truth)
    text = summary.format() + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


class UsageError(Exception):
    pass


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dncbayes", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, fn in (("gen-sim1", cmd_gen_sim1), ("gen-sim2", cmd_gen_sim2)):
        p = sub.add_parser(name, help=f"write a {name[4:]} data set")
        p.add_argument("--n", type=int, required=True)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", required=True)
        p.set_defaults(func=fn)

    p = sub.add_parser("ingest-check", help="validate an id,w,sigma summary-statistics file")
    p.add_argument("path")
    p.set_defaults(func=cmd_ingest_check)

    p = sub.add_parser("fit", help="fit every shard and write a run directory")
    p.add_argument("--data")
    p.add_argument("--model", choices=["finite", "dpmn", "deconv"], default="finite")
    p.add_argument("--mode", choices=[m.value for m in PriorMode], default="fraction")
    p.add_argument("--shards", type=int, default=1)
    p.add_argument("--iters", type=int, default=10000)
    p.add_argument("--burnin", type=int, default=5000)
    p.add_argument("--thin", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--grid-min", type=float)
    p.add_argument("--grid-max", type=float)
    p.add_argument("--grid-points", type=int)
    p.add_argument("--trunc-H", type=int, default=50)
    p.add_argument("--K", type=int, help="mixture components (finite: 2, deconv: 30)")
    p.add_argument("--t", type=float)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--xi1", type=float)
    p.add_argument("--xi2", type=float)
    p.add_argument("--dp-mass", type=float)
    p.add_argument("--fractionate-beta", choices=["on", "off"], default="on")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--manifest", help="re-run exactly the configuration recorded in this manifest")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("combine", help="average the shard posterior-mean densities")
    p.add_argument("run")
    p.add_argument("--out")
    p.set_defaults(func=cmd_combine)

    p = sub.add_parser("metrics", help="compare a combined density with a reference")
    p.add_argument("--metric", choices=["hellinger", "iad", "w2"], required=True)
    p.add_argument("--a", help="combined.csv to score")
    p.add_argument("--b", help="reference combined.csv")
    p.add_argument("--truth", choices=["sim1", "sim2"])
    p.add_argument("--run", help="run directory (w2)")
    p.add_argument("--cutoff", type=float)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("table", help="bias and se (x1e3) of combined parameter means across replications")
    p.add_argument("runs", nargs="+")
    p.add_argument("--truth", default="sim1")
    p.add_argument("--out")
    p.set_defaults(func=cmd_table)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    warnings.simplefilter("default")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"dncbayes: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DncError, ValueError, OSError, KeyError) as exc:
        print(f"dncbayes: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
