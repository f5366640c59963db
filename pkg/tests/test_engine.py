import json
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from dncbayes import engine
from dncbayes.draws import ChainDraws, GibbsConfig
from dncbayes.engine import (
    RunConfig,
    RunManifest,
    ShardCountWarning,
    ShardPlan,
    combine_draw_level,
    combine_mean_density,
    combine_param_means,
    make_shard_plan,
    run_shards,
)
from dncbayes.errors import GridMismatch, InvalidShardCount, MissingParams, ShardFailure
from dncbayes.fraction import DpmnPrior, FiniteMixturePrior
from dncbayes.grids import GridSpec, default_grid_2d, trapezoid
from dncbayes.kernels import DirichletParams, InvGammaParams, InvWishartParams
from dncbayes.metrics import w2_to_point
from dncbayes.simulate import Sim1Config, simulate_sim1

GRID = GridSpec((np.linspace(-4, 4, 81),))


def normal_draws(locs, scale=1.0, params=None):
    x = GRID.axes[0]
    dens = np.array([stats.norm.pdf(x, m, scale) for m in locs])
    dens /= np.array([trapezoid(r, GRID) for r in dens])[:, None]
    return ChainDraws(GRID, dens, params=params or {})


class TestShardPlan:
    def test_single_shard(self):
        plan = make_shard_plan(10, 1, 3)
        assert plan.sizes().tolist() == [10]

    def test_equal_shards(self):
        plan = make_shard_plan(10_000, 10, 3)
        assert plan.sizes().tolist() == [1000] * 10

    def test_remainder(self):
        assert sorted(make_shard_plan(7, 3, 1).sizes().tolist()) == [2, 2, 3]

    @given(st.integers(1, 400), st.integers(1, 40), st.integers(0, 2**63))
    @settings(max_examples=60, deadline=None)
    def test_partition_properties(self, n, J, seed):
        J = min(J, n)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ShardCountWarning)
            plan = make_shard_plan(n, J, seed)
            again = make_shard_plan(n, J, seed)
        sizes = plan.sizes()
        assert sizes.sum() == n and sizes.max() - sizes.min() <= 1
        assert sorted(np.concatenate([plan.indices(j) for j in range(J)]).tolist()) == list(range(n))
        assert np.array_equal(plan.assignment, again.assignment)
        assert plan.per_shard_seed == again.per_shard_seed
        assert len(set(plan.per_shard_seed)) == J

    def test_too_many_shards(self):
        with pytest.raises(InvalidShardCount):
            make_shard_plan(5, 6, 0)

    def test_warns_beyond_log_regime(self):
        with pytest.warns(ShardCountWarning):
            make_shard_plan(100, 14, 0)
        with warnings.catch_warnings():
            warnings.simplefilter("error", ShardCountWarning)
            make_shard_plan(100, 13, 0)

    def test_seed_changes_partition(self):
        assert not np.array_equal(make_shard_plan(100, 4, 1).assignment, make_shard_plan(100, 4, 2).assignment)


class TestCombine:
    def test_identical_shards(self):
        d = normal_draws([0.0, 0.5])
        out = combine_mean_density([d, d, d])
        assert np.allclose(out.values, d.mean_density().values, rtol=1e-14)

    def test_disjoint_shards_give_half_mixture(self):
        a, b = normal_draws([-2.5], 0.3), normal_draws([2.5], 0.3)
        out = combine_mean_density([a, b])
        assert np.allclose(out.values, 0.5 * (a.densities[0] + b.densities[0]))
        assert trapezoid(out.values, GRID) == pytest.approx(1.0, abs=1e-12)

    def test_grid_mismatch(self):
        other = ChainDraws(GridSpec((np.linspace(-4, 4, 82),)), np.ones((1, 82)))
        with pytest.raises(GridMismatch):
            combine_mean_density([normal_draws([0.0]), other])
        with pytest.raises(GridMismatch):
            combine_draw_level([normal_draws([0.0]), other])

    def test_single_draw_matches_mean_combination(self):
        shards = [normal_draws([m]) for m in (-1.0, 0.2, 0.9)]
        draws = combine_draw_level(shards)
        assert draws.shape == (1, GRID.size)
        assert np.allclose(draws[0], combine_mean_density(shards).values, rtol=1e-14)

    def test_single_shard_passes_through(self):
        d = normal_draws([0.0, 0.3, -0.4])
        assert np.array_equal(combine_draw_level([d]), d.densities)

    def test_explicit_pairing(self):
        a, b = normal_draws([0.0, 1.0]), normal_draws([-1.0, 2.0])
        out = combine_draw_level([a, b], pairing=[[0, 1], [1, 0]])
        assert np.allclose(out[0], (a.densities[0] + b.densities[1]) / 2)
        assert np.allclose(out[1], (a.densities[1] + b.densities[0]) / 2)
        with pytest.raises(ValueError):
            combine_draw_level([a, b], pairing=[[0], [1]])

    def test_unequal_lengths_resample(self):
        out = combine_draw_level([normal_draws([0.0, 0.5, 1.0]), normal_draws([0.1])], n_out=5)
        assert out.shape == (5, GRID.size)

    @given(st.lists(st.lists(st.floats(-1.5, 1.5), min_size=1, max_size=6), min_size=1, max_size=5), st.integers(0, 1000))
    @settings(max_examples=40, deadline=None)
    def test_combination_is_normalised(self, locs, seed):
        combined = combine_draw_level([normal_draws(l, 0.7) for l in locs], rng=np.random.default_rng(seed))
        assert np.all(combined >= 0)
        assert np.allclose([trapezoid(r, GRID) for r in combined], 1.0, atol=1e-12)

    @given(st.integers(1, 6), st.lists(st.lists(st.floats(-1.5, 1.5), min_size=6, max_size=6), min_size=1, max_size=5), st.integers(0, 1000))
    @settings(max_examples=40, deadline=None)
    def test_squared_w2_bounded_by_shard_average(self, n, locs, seed):
        # equal lengths: every shard draw is used exactly once, so convexity of h^2 gives the bound
        shards = [normal_draws(l[:n], 0.7) for l in locs]
        combined = combine_draw_level(shards, rng=np.random.default_rng(seed))
        f0 = normal_draws([0.0], 0.7)[0]
        w_comb = w2_to_point([type(f0)(GRID, r) for r in combined], f0)
        assert w_comb**2 <= np.mean([w2_to_point(s, f0) ** 2 for s in shards]) + 1e-9

    def test_param_means(self):
        a = normal_draws([0.0], params={"mu": np.array([[1.0, 2.0]])})
        b = normal_draws([0.0], params={"mu": np.array([[1.2, 2.2]])})
        assert np.allclose(combine_param_means([a, b])["mu"], [1.1, 2.1])
        assert np.allclose(combine_param_means([a])["mu"], [1.0, 2.0])
        with pytest.raises(MissingParams):
            combine_param_means([a, normal_draws([0.0])])


def finite_prior():
    return FiniteMixturePrior(DirichletParams([0.5, 0.5]), 100.0, InvWishartParams(2.0, 4.0 * np.eye(2)))


def finite_config(data, J, mode="fraction", iters=40, burnin=10, thin=3, seed=1):
    grid = default_grid_2d(data, points=31)
    return RunConfig("finite", mode, J, iters, burnin, thin, seed, finite_prior(), grid)


@pytest.fixture(scope="module")
def sim1_small():
    return simulate_sim1(Sim1Config(400, seed=5))


class TestRunShards:
    def test_single_shard_equals_full_fit(self, sim1_small):
        plan = make_shard_plan(len(sim1_small), 1, 9)
        frac = run_shards(sim1_small, plan, finite_config(sim1_small, 1))[0]
        full = run_shards(sim1_small, plan, finite_config(sim1_small, 1, mode="full"))[0]
        assert np.array_equal(frac.densities, full.densities)

    def test_duplicated_halves(self, sim1_small):
        data = np.concatenate([sim1_small, sim1_small])
        n = len(sim1_small)
        plan = ShardPlan(2, np.repeat([0, 1], n), (77, 77))
        a, b = run_shards(data, plan, finite_config(data, 2))
        assert np.array_equal(a.densities, b.densities)

    def test_parallel_matches_serial(self, sim1_small):
        plan = make_shard_plan(len(sim1_small), 3, 4)
        cfg = finite_config(sim1_small, 3)
        serial = run_shards(sim1_small, plan, cfg, workers=1)
        parallel = run_shards(sim1_small, plan, cfg, workers=3)
        for s, p in zip(serial, parallel):
            assert np.array_equal(s.densities, p.densities)

    def test_shard_failure_carries_index(self, sim1_small):
        plan = make_shard_plan(len(sim1_small), 2, 4)
        cfg = RunConfig("dpmn", "fraction", 2, 20, 5, 5, 1, finite_prior(), GRID)
        with pytest.raises(ShardFailure) as info:
            run_shards(sim1_small[:, 0], plan, cfg)
        assert info.value.shard == 0

    def test_plan_mismatch(self, sim1_small):
        with pytest.raises(ValueError):
            run_shards(sim1_small[:10], make_shard_plan(20, 2, 0), finite_config(sim1_small, 2))
        with pytest.raises(ValueError):
            run_shards(sim1_small, make_shard_plan(len(sim1_small), 2, 0), finite_config(sim1_small, 3))

    def test_full_mode_requires_one_shard(self, sim1_small):
        with pytest.raises(ValueError):
            finite_config(sim1_small, 2, mode="full")

    def test_per_shard_weights_at_ten_shards(self):
        data = simulate_sim1(Sim1Config(10_000, seed=44))
        grid = GridSpec((np.linspace(-2, 10, 7), np.linspace(-2, 12, 7)))
        cfg = RunConfig("finite", "fraction", 10, 400, 150, 5, 8, finite_prior(), grid)
        shards = run_shards(data, make_shard_plan(len(data), 10, 8), cfg)
        for d in shards:
            assert np.all(np.abs(d.param_means()["weights"] - [0.3, 0.7]) <= 0.05)


class TestIO:
    def test_draws_round_trip_bitwise(self, tmp_path, rng):
        d = ChainDraws(GRID, rng.random((4, GRID.size)) * 1e-3 + np.pi)
        engine.write_draws(tmp_path / "d.csv", d)
        back = engine.read_draws(tmp_path / "d.csv")
        assert np.array_equal(back.densities, d.densities)
        assert back.grid == GRID

    def test_2d_round_trip(self, tmp_path, rng):
        grid = GridSpec((np.linspace(0, 1, 4), np.linspace(-1, 2, 5)))
        d = ChainDraws(grid, rng.random((2, 4, 5)))
        engine.write_draws(tmp_path / "d.csv", d)
        back = engine.read_draws(tmp_path / "d.csv")
        assert back.grid == grid
        assert np.array_equal(back.densities.reshape(d.densities.shape), d.densities)

    def test_grid_mismatch_on_read(self, tmp_path):
        engine.write_draws(tmp_path / "d.csv", normal_draws([0.0]))
        with pytest.raises(GridMismatch):
            engine.read_draws(tmp_path / "d.csv", GridSpec((np.linspace(0, 1, 5),)))

    def test_run_round_trip(self, tmp_path, sim1_small):
        cfg = finite_config(sim1_small, 2)
        plan = make_shard_plan(len(sim1_small), 2, cfg.seed)
        shards = run_shards(sim1_small, plan, cfg)
        manifest = RunManifest(cfg, plan.per_shard_seed, tuple(plan.sizes().tolist()), engine.hash_array(sim1_small), "sim1.csv")
        engine.write_run(tmp_path / "run", manifest, shards)
        m2, back = engine.read_run(tmp_path / "run")
        assert m2.dumps() == manifest.dumps()
        assert m2.per_shard_seed == plan.per_shard_seed
        for a, b in zip(shards, back):
            assert np.array_equal(a.densities.reshape(len(a), -1), b.densities.reshape(len(b), -1))
            for k in a.params:
                assert np.array_equal(a.params[k], b.params[k])

    def test_manifest_contents(self):
        cfg = RunConfig("dpmn", "naive", 3, 10, 2, 2, 2**64 - 1, DpmnPrior(1.0, 0.0, 2.0, InvGammaParams(2.0, 2.0)), GRID)
        m = RunManifest(cfg, (1, 2, 2**64 - 1), (3, 3, 3), "abc", "x.csv")
        d = json.loads(m.dumps())
        for key in ("model", "mode", "J", "iters", "burnin", "thin", "seed", "prior", "grid", "per_shard_seed", "data_sha256"):
            assert key in d
        assert RunManifest.from_dict(d).per_shard_seed[-1] == 2**64 - 1

    def test_combined_round_trip(self, tmp_path):
        out = combine_mean_density([normal_draws([0.0, 1.0])])
        engine.write_combined(tmp_path / "c.csv", out)
        back = engine.read_combined(tmp_path / "c.csv")
        assert back.grid == GRID and np.array_equal(back.values, out.values)
        assert (tmp_path / "c.csv").read_text().splitlines()[0] == "x,density"


def test_derive_seed_is_stable():
    assert engine.derive_seed(5, 0) == engine.derive_seed(5, 0)
    assert engine.derive_seed(5, 0) != engine.derive_seed(5, 1)
    assert 0 <= engine.derive_seed(2**64 - 1, 3) < 2**64


def test_gibbs_from_run_config():
    cfg = RunConfig("finite", "naive", 2, 30, 10, 4, 0, finite_prior(), GRID)
    assert cfg.gibbs(12) == GibbsConfig(30, 10, 4, 12)
    assert math.isclose(cfg.gibbs(12).n_retained, 5)
