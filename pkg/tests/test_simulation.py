"""Тесты моделирования траекторий"""

import csv
import math

import numpy as np
import pytest

from app.clocks import ExponentialClock, FirstPassageClock, InverseLocalTimeClock
from app.errors import HorizonExceeded
from app.penalization import martingale_M
from app.potential import PotentialTable
from app.simulation import (
    BAND,
    DIFFUSION,
    JUMP_DIFFUSION,
    MCEstimate,
    PathSample,
    SimConfig,
    clock_time,
    estimate_local_time,
    hit_detection,
    increment_scale,
    mc_functional,
    sample_increments,
    sample_path,
    simulate_ensemble,
    stable_variates,
    summarize,
    write_paths_csv,
)
from app.weights import Exponential


def rng(seed=7):
    return np.random.Generator(np.random.PCG64(seed))


def synthetic_path(states, dt=0.1, detection=DIFFUSION):
    states = np.asarray(states, dtype=float)
    times = dt * np.arange(len(states))
    return PathSample(times=times, states=states, local_time_zero=np.zeros_like(times),
                      eps_local=0.05, delta_hit=0.05, detection=detection)


class TestSimConfig:
    @pytest.mark.parametrize("field, value", [
        ("dt", 0.0), ("horizon", -1.0), ("eps_local", 0.0), ("n_paths", 0), ("workers", 0), ("seed", -1),
    ])
    def test_invalid(self, field, value):
        with pytest.raises(ValueError):
            SimConfig(**{field: value})

    def test_batches_and_scaling(self):
        cfg = SimConfig(n_paths=2500, batch_size=1000)
        assert cfg.n_batches == 3
        assert cfg.scaled(4).n_paths == 10_000

    def test_resolution_warning(self, bm):
        assert SimConfig(dt=1e-4, eps_local=0.05, delta_hit=0.05).check_resolution(bm)
        assert not SimConfig(dt=1e-2, eps_local=0.02, delta_hit=0.05).check_resolution(bm)


class TestIncrements:
    def test_detection_kinds(self, bm, drifted, kou, stable_sym):
        assert hit_detection(bm) == DIFFUSION
        assert hit_detection(drifted) == DIFFUSION
        assert hit_detection(kou) == JUMP_DIFFUSION
        assert hit_detection(stable_sym) == BAND

    def test_scale(self, bm, stable_sym):
        assert increment_scale(bm, 0.04) == pytest.approx(0.2)
        assert increment_scale(stable_sym, 1.0) == pytest.approx(stable_sym.c ** (1 / 1.5))

    def test_symmetric_stable_characteristic_function(self):
        sample = stable_variates(1.5, 0.0, 200_000, rng())
        assert np.mean(np.cos(sample)) == pytest.approx(math.exp(-1.0), abs=0.01)
        assert np.mean(np.sin(sample)) == pytest.approx(0.0, abs=0.01)

    def test_skewed_stable_characteristic_function(self):
        # tan(3π/4) = −1: φ(1) = exp(−1 − 0.5i)
        sample = stable_variates(1.5, 0.5, 200_000, rng())
        assert np.mean(np.cos(sample)) == pytest.approx(0.3228, abs=0.01)
        assert np.mean(np.sin(sample)) == pytest.approx(-0.1764, abs=0.01)

    def test_brownian_moments(self, bm):
        x = sample_increments(bm, 0.01, rng(), size=200_000)
        assert np.mean(x) == pytest.approx(0.0, abs=1e-3)
        assert np.var(x) == pytest.approx(0.01, rel=0.02)

    def test_drifted_mean(self, drifted):
        x = sample_increments(drifted, 0.5, rng(), size=200_000)
        assert np.mean(x) == pytest.approx(-0.5, abs=0.01)

    def test_kou_moments(self, kou):
        x = sample_increments(kou, 1.0, rng(), size=200_000)
        assert np.mean(x) == pytest.approx(0.0, abs=0.015)
        assert np.var(x) == pytest.approx(kou.m2, rel=0.03)

    def test_variable_steps(self, bm):
        h = np.array([1e-4, 1.0, 4.0])
        x = sample_increments(bm, h, rng())
        assert x.shape == (3,)


class TestSinglePath:
    def test_local_time_occupation(self):
        path = synthetic_path(np.zeros(11))
        np.testing.assert_allclose(estimate_local_time(path, 0.0, 0.05), path.times / 0.1)

    def test_local_time_away_from_level(self):
        path = synthetic_path(np.full(5, 3.0))
        assert np.all(estimate_local_time(path, 0.0, 0.05) == 0.0)

    def test_local_time_eps(self):
        with pytest.raises(ValueError):
            estimate_local_time(synthetic_path(np.zeros(3)), 0.0, 0.0)

    def test_first_passage_sign_change(self):
        path = synthetic_path([0.0, 0.5, 1.2, 0.3])
        assert clock_time(path, FirstPassageClock(levels=(1.0,))) == pytest.approx(0.2)

    def test_first_passage_band(self):
        path = synthetic_path([0.0, 0.5, 0.97, 1.4], detection=BAND)
        assert clock_time(path, FirstPassageClock(levels=(1.0,))) == pytest.approx(0.2)

    def test_horizon_exceeded(self):
        path = synthetic_path([0.0, 0.1, 0.2])
        with pytest.raises(HorizonExceeded):
            clock_time(path, FirstPassageClock(levels=(1.0,)))

    def test_exponential_clock_needs_generator(self):
        with pytest.raises(ValueError):
            clock_time(synthetic_path([0.0, 0.1]), ExponentialClock(q=1.0))

    def test_inverse_local_time_clock(self):
        path = synthetic_path(np.zeros(11))
        # L^0 растёт со скоростью 10
        assert clock_time(path, InverseLocalTimeClock(a=1e-9, u=4.5)) == pytest.approx(0.5)

    def test_sample_path_grid(self, bm):
        cfg = SimConfig(dt=1e-3, horizon=0.01, seed=1)
        path = sample_path(bm, 0.0, cfg, rng(), levels=(1.0,), clocks=(FirstPassageClock(levels=(5.0,)),))
        assert len(path.times) == 11
        assert path.states[0] == 0.0
        assert set(path.local_time_levels) == {1.0}
        assert path.clock_hits["first-passage"] == math.inf

    def test_csv(self, bm, tmp_path):
        cfg = SimConfig(dt=1e-3, horizon=0.01, seed=1)
        path = sample_path(bm, 0.0, cfg, rng(), levels=(1.0,))
        out = tmp_path / "path.csv"
        assert write_paths_csv(path, out) == 11
        with open(out, encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["t", "x", "L0", "L_1"]
        assert len(rows) == 12


class TestEnsemble:
    def test_reproducible_across_workers(self, bm):
        base = dict(dt=1e-3, horizon=0.1, n_paths=1000, batch_size=250, seed=99)
        one = simulate_ensemble(bm, 0.0, SimConfig(workers=1, **base))
        three = simulate_ensemble(bm, 0.0, SimConfig(workers=3, **base))
        np.testing.assert_array_equal(one.x, three.x)
        np.testing.assert_array_equal(one.l_zero, three.l_zero)

    def test_substreams_differ(self, bm):
        cfg = SimConfig(dt=1e-3, horizon=0.1, n_paths=200, batch_size=100, seed=99, workers=1)
        a = simulate_ensemble(bm, 0.0, cfg, substream=0)
        b = simulate_ensemble(bm, 0.0, cfg, substream=1)
        assert not np.array_equal(a.x, b.x)

    def test_snapshots_and_final_state(self, bm):
        cfg = SimConfig(dt=1e-3, horizon=0.2, n_paths=300, batch_size=100, seed=3, workers=2)
        outcome = simulate_ensemble(bm, 0.5, cfg, observe_times=(0.1,), levels=(1.0,), eps_values=(0.05,))
        assert outcome.n_paths == 300
        assert set(outcome.snapshots) == {0.1}
        snap = outcome.snapshots[0.1]
        assert not np.any(np.isnan(snap.x))
        state = snap.as_state()
        assert state.t == 0.1
        assert set(state.levels) == {1.0}
        assert set(outcome.l_zero_eps) == {0.05}
        assert outcome.censoring_rate == 0.0
        np.testing.assert_allclose(outcome.t, 0.2)

    def test_clock_stops_paths(self, bm):
        cfg = SimConfig(dt=1e-3, horizon=5.0, n_paths=400, batch_size=200, seed=5, workers=2)
        outcome = simulate_ensemble(bm, 0.0, cfg, clock=FirstPassageClock(levels=(0.3, -0.3)))
        stopped = outcome.rang
        assert stopped.mean() > 0.99
        assert np.all(np.isin(outcome.hit_index[stopped], (0, 1)))
        assert np.all(outcome.t[stopped] < 5.0)

    def test_exponential_clock_time_is_exact(self, bm):
        cfg = SimConfig(dt=1e-3, horizon=50.0, n_paths=2000, batch_size=500, seed=11, workers=2)
        outcome = simulate_ensemble(bm, 0.0, cfg, clock=ExponentialClock(q=2.0))
        assert np.mean(outcome.t) == pytest.approx(0.5, rel=0.1)

    def test_observe_time_outside_horizon(self, bm):
        with pytest.raises(ValueError):
            simulate_ensemble(bm, 0.0, SimConfig(horizon=1.0), observe_times=(2.0,))


class TestEstimates:
    def test_summarize(self):
        estimate = summarize(np.array([1.0, 2.0, 3.0]), censoring_rate=0.25)
        assert estimate.mean == 2.0
        assert estimate.stderr == pytest.approx(1 / math.sqrt(3))
        assert estimate.n_used == 3
        mean, stderr = estimate
        assert (mean, stderr) == (estimate.mean, estimate.stderr)

    def test_single_value(self):
        assert math.isinf(summarize(np.array([4.0])).stderr)

    def test_empty(self):
        with pytest.raises(ValueError):
            summarize(np.array([]))

    def test_estimate_is_frozen(self):
        estimate = MCEstimate(1.0, 0.1, 0.0, 10)
        with pytest.raises(AttributeError):
            estimate.mean = 2.0


@pytest.mark.slow
class TestMonteCarloAgreement:
    def test_hit_probability(self, bm, small_sim):
        cfg = SimConfig(dt=1e-3, horizon=10.0, n_paths=small_sim.n_paths, seed=small_sim.seed,
                        batch_size=small_sim.batch_size, workers=small_sim.workers)
        estimate = mc_functional(bm, 0.5, cfg, lambda o: (o.hit_index == 0).astype(float),
                                 clock=FirstPassageClock(levels=(1.0, -1.0)))
        assert estimate.censoring_rate < 1e-3
        assert abs(estimate.mean - 0.75) < 4 * estimate.stderr + 0.01

    def test_hitting_laplace(self, bm, small_sim):
        cfg = SimConfig(dt=1e-3, horizon=20.0, n_paths=small_sim.n_paths, seed=small_sim.seed,
                        batch_size=small_sim.batch_size, workers=small_sim.workers)
        outcome = simulate_ensemble(bm, 1.0, cfg, clock=FirstPassageClock(levels=(0.0,)))
        estimate = summarize(np.where(outcome.rang, np.exp(-0.5 * outcome.t), 0.0))
        assert abs(estimate.mean - math.exp(-1.0)) < 4 * estimate.stderr + 0.01

    def test_martingale_is_constant(self, bm):
        cfg = SimConfig(dt=2.5e-5, horizon=0.5, eps_local=0.01, n_paths=4000, seed=2024,
                        batch_size=1000, workers=2)
        outcome = simulate_ensemble(bm, 0.5, cfg, observe_times=(0.5,))
        table = PotentialTable(bm)
        values = martingale_M(table, Exponential(), outcome.snapshots[0.5].as_state(), gamma=0.0)
        estimate = summarize(values)
        assert abs(estimate.mean - 1.5) < 4 * estimate.stderr + 0.01
