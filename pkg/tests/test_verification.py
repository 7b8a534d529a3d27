"""Тесты строк отчёта и механики проверочного набора"""

import math

import pytest

from app import verification
from app.errors import QuadratureNoConvergence, UnsupportedModel
from app.levy_models import load_model
from app.potential import PotentialTable
from app.simulation import SimConfig
from app.verification import DETERMINISTIC, STATISTICAL, THRESHOLD, MCReport
from app.weights import Exponential


class TestMCReport:
    def test_statistical_pass(self):
        row = MCReport.statistical("x", "bm", {}, estimate=1.1, stderr=0.05, target=1.0)
        assert row.kind == STATISTICAL
        assert row.sigmas == pytest.approx(2.0)
        assert row.passed

    def test_statistical_fail(self):
        row = MCReport.statistical("x", "bm", {}, estimate=1.2, stderr=0.05, target=1.0)
        assert row.sigmas == pytest.approx(4.0)
        assert not row.passed

    def test_custom_sigma_limit(self):
        row = MCReport.statistical("x", "bm", {}, estimate=1.12, stderr=0.05, target=1.0, sigma_limit=2.0)
        assert not row.passed

    def test_zero_stderr(self):
        assert MCReport.statistical("x", "bm", {}, 1.0, 0.0, 1.0).passed
        assert not MCReport.statistical("x", "bm", {}, 1.1, 0.0, 1.0).passed

    def test_deterministic(self):
        row = MCReport.deterministic("y", "bm", {"a": 1.0}, estimate=2.0 + 1e-9, target=2.0, tol=1e-8)
        assert row.kind == DETERMINISTIC
        assert row.passed
        assert row.stderr is None and row.sigmas is None

    def test_threshold(self):
        assert MCReport.threshold("ks", "bm", {}, estimate=0.3, target=0.01).passed
        row = MCReport.threshold("ks", "bm", {}, estimate=0.001, target=0.01)
        assert row.kind == THRESHOLD
        assert not row.passed

    def test_to_dict(self):
        row = MCReport.statistical("z", "bm", {"l": 0.5}, estimate=math.nan, stderr=math.inf, target=0.5)
        data = row.to_dict()
        assert data["estimate"] is None
        assert data["stderr"] is None
        assert data["pass"] is False
        assert "passed" not in data
        assert data["parameters"] == {"l": 0.5}


class TestDeterministicRows:
    def test_brownian_h_properties(self, engine):
        rows = verification.test_h_properties(load_model("bm"), engine, seed=1, n_pairs=200)
        names = {"h_zero", "h_subadditivity", "h_slope", "h_difference_limit"}
        checked = [r for r in rows if r.test_name in names]
        assert len(checked) == 6
        assert all(r.passed for r in checked)

    def test_brownian_clock_limits(self, engine):
        rows = verification.test_clock_limits(load_model("bm"), Exponential(), engine)
        assert [r.parameters["clock"] for r in rows] == ["exp", "hit+", "hit-", "twopoint", "invlt"]
        assert all(r.passed for r in rows)

    def test_stable_clock_limits(self, stable_sym, engine):
        rows = verification.test_clock_limits(stable_sym, Exponential(), engine)
        assert [r.parameters["clock"] for r in rows] == ["exp", "hit+", "hit-", "twopoint", "invlt"]
        assert all(r.passed for r in rows)

    def test_stable_exp_limit_reaches_budget(self, stable_sym, engine):
        table = PotentialTable(stable_sym, engine)
        q = verification._exp_limit_q(table)
        assert q <= 1e-6
        assert table.r_q0(q) >= 500.0

    def test_exp_limit_stops_at_last_resolved_q(self, monkeypatch, engine):
        table = PotentialTable(load_model("bm"), engine)

        def r_q0(q):
            if q < 1e-8:
                raise QuadratureNoConvergence("r_q(0)")
            return 1.0

        monkeypatch.setattr(table, "r_q0", r_q0)
        assert verification._exp_limit_q(table) == pytest.approx(1e-8)

    def test_unresolved_clock_gives_failed_row(self, monkeypatch, engine):
        def fail(*args, **kwargs):
            raise QuadratureNoConvergence("не сошлось")

        monkeypatch.setattr(verification, "clock_conditional", fail)
        rows = verification.test_clock_limits(load_model("bm"), Exponential(), engine)
        assert len(rows) == 5
        assert not any(r.passed for r in rows)
        assert all(r.to_dict()["estimate"] is None for r in rows)

    def test_limit_scale(self, engine):
        table = PotentialTable(load_model("bm"), engine)
        assert verification._limit_scale(table) == 1e3
        assert verification._exp_limit_q(table) == 1e-6

    def test_state_grid(self):
        grid = verification.state_grid()
        assert len(grid) == 9
        assert (0.0, 0.5) in grid


class TestRetry:
    def test_failed_row_is_rerun(self):
        calls = []

        def fn(cfg, substream):
            calls.append((cfg.n_paths, substream))
            estimate = 1.0 if len(calls) > 1 else 2.0
            return [
                MCReport.statistical("flaky", "bm", {"x": 0.0, "censoring": 0.1 * len(calls)},
                                     estimate, 0.1, 1.0),
                MCReport.deterministic("exact", "bm", {}, 1.0, 1.0, 1e-12),
            ]

        rows = verification._with_retry("flaky", fn, SimConfig(n_paths=100, batch_size=100), 10)
        assert calls == [(100, 10), (400, 10 + verification.RETRY_SUBSTREAM)]
        assert rows[0].passed and rows[0].attempts == 2
        assert rows[1].attempts == 1

    def test_passing_rows_are_not_rerun(self):
        calls = []

        def fn(cfg, substream):
            calls.append(substream)
            return [MCReport.statistical("fine", "bm", {}, 1.0, 0.1, 1.0)]

        verification._with_retry("fine", fn, SimConfig(n_paths=100, batch_size=100), 0)
        assert calls == [0]

    def test_failed_deterministic_row_is_final(self):
        calls = []

        def fn(cfg, substream):
            calls.append(substream)
            return [MCReport.deterministic("exact", "bm", {}, 2.0, 1.0, 1e-12)]

        rows = verification._with_retry("exact", fn, SimConfig(n_paths=100, batch_size=100), 0)
        assert calls == [0]
        assert not rows[0].passed


class TestRunSuite:
    def test_unknown_suite(self):
        with pytest.raises(ValueError, match="набор"):
            verification.run_suite("everything")

    def test_paths_budget(self):
        assert verification._paths(load_model("bm"), quick=False) == verification.BROWNIAN_PATHS
        assert verification._paths(load_model("stable-sym-1.5"), quick=True) == verification.STABLE_PATHS // 10

    def test_stable_grid(self):
        grid = verification.stable_grid()
        assert len(grid) == 9
        assert {m.alpha for m in grid} == {1.2, 1.5, 1.8}


class TestPenalizedLaw:
    def test_local_time_tail(self, bm):
        assert verification.brownian_local_time_tail(bm, 1.0, 0.0) == pytest.approx(1.0)
        assert verification.brownian_local_time_tail(bm, 1.0, 1.0) == pytest.approx(0.31731050786)
        assert verification.brownian_local_time_tail(bm, 4.0, 1.0) > verification.brownian_local_time_tail(bm, 1.0, 1.0)

    def test_needs_brownian_model(self, kou, small_sim):
        with pytest.raises(UnsupportedModel):
            verification.test_penalized_L_infty(kou, Exponential(), (0.5,), (1.0,), small_sim)

    @pytest.mark.slow
    def test_weighted_paths_match_finite_horizon_law(self, bm, engine):
        cfg = SimConfig(dt=2.5e-4, eps_local=0.01, n_paths=8000, seed=99, batch_size=1000, workers=2)
        rows = verification.test_penalized_L_infty(bm, Exponential(), (0.25, math.log(2)), (0.5, 1.0),
                                                   cfg, engine=engine)
        assert [(r.parameters["t"], r.parameters["l"]) for r in rows] == \
            [(0.5, 0.25), (0.5, math.log(2)), (1.0, 0.25), (1.0, math.log(2))]
        for row in rows:
            assert row.target < row.parameters["limit"]
            assert abs(row.estimate - row.target) < 4 * row.stderr + 0.02

    @pytest.mark.slow
    def test_stable_closed_form_uses_extrapolation(self, stable_asym, engine):
        rows = verification.test_stable_closed_form(stable_asym, engine, xs=(-1.0, 2.0))
        assert rows[0].test_name == "h_stable_closed_form"
        assert rows[0].passed
        assert rows[0].estimate < 1e-4
