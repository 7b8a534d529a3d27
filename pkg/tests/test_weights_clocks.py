"""Тесты весовых функций и разбора часов"""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from app.clocks import (
    ExponentialClock,
    FirstPassageClock,
    HittingClock,
    InverseLocalTimeClock,
    TwoPointClock,
    parse_clock,
)
from app.errors import InvalidClock, UnnormalizedWeight
from app.weights import (
    Exponential,
    IndicatorZero,
    StepTable,
    exp_tilted_tail,
    parse_weight,
    require_normalized,
    weight_tail,
)

STEP = StepTable(breakpoints=(0.0, 0.5, 2.0), values=(1.4, 0.2))


class TestExponential:
    def test_normalized(self):
        require_normalized(Exponential(beta=3.0))

    def test_tail(self):
        assert weight_tail(Exponential(beta=2.0), 1.0) == pytest.approx(math.exp(-2.0))

    @settings(max_examples=40, deadline=None)
    @given(l=st.floats(0.0, 5.0), rate=st.floats(0.0, 4.0), beta=st.floats(0.1, 5.0))
    def test_tilted_tail_matches_quadrature(self, l, rate, beta):
        f = Exponential(beta=beta)
        numeric, _ = integrate.quad(lambda u: math.exp(-rate * u) * f.value(l + u), 0, np.inf)
        assert exp_tilted_tail(f, l, rate) == pytest.approx(numeric, rel=1e-7, abs=1e-12)

    def test_rejects_nonpositive_beta(self):
        with pytest.raises(ValueError, match="beta"):
            Exponential(beta=0.0)


class TestIndicatorZero:
    def test_value(self):
        f = IndicatorZero()
        assert f.value(0.0) == 1.0
        assert f.value(0.1) == 0.0

    def test_tails_vanish(self):
        f = IndicatorZero()
        assert f.total == 0.0
        assert exp_tilted_tail(f, 0.0, 1.0) == 0.0

    def test_not_normalized(self):
        with pytest.raises(UnnormalizedWeight):
            require_normalized(IndicatorZero())


class TestStepTable:
    def test_normalized(self):
        require_normalized(STEP)

    def test_value_lookup(self):
        np.testing.assert_allclose(STEP.value(np.array([0.0, 0.49, 0.5, 1.9, 2.0, 7.0])),
                                   [1.4, 1.4, 0.2, 0.2, 0.0, 0.0])

    def test_tail_piecewise_linear(self):
        assert STEP.tail(0.25) == pytest.approx(0.25 * 1.4 + 0.3)
        assert STEP.tail(1.0) == pytest.approx(0.2)
        assert STEP.tail(3.0) == 0.0

    @settings(max_examples=30, deadline=None)
    @given(l=st.floats(0.0, 3.0), rate=st.floats(0.01, 3.0))
    def test_tilted_tail_matches_quadrature(self, l, rate):
        jumps = [p - l for p in (0.5, 2.0) if 0 < p - l < 3.0]
        numeric, _ = integrate.quad(lambda u: math.exp(-rate * u) * STEP.value(l + u), 0, 3.0,
                                    points=jumps or None)
        assert exp_tilted_tail(STEP, l, rate) == pytest.approx(numeric, rel=1e-7, abs=1e-12)

    def test_tail_nonincreasing(self):
        ls = np.linspace(0.0, 2.5, 26)
        tails = STEP.tail(ls)
        assert np.all(np.diff(tails) <= 1e-15)

    @pytest.mark.parametrize("breaks, values", [
        ((0.0, 1.0, 1.0), (1.0, 1.0)),
        ((0.5, 1.0), (1.0,)),
        ((0.0, 1.0), (-1.0,)),
        ((0.0, 1.0), (1.0, 2.0)),
    ])
    def test_invalid(self, breaks, values):
        with pytest.raises(ValueError):
            StepTable(breakpoints=breaks, values=values)


class TestWeightHelpers:
    def test_negative_l(self):
        with pytest.raises(ValueError, match="l"):
            weight_tail(Exponential(), -0.1)

    def test_negative_rate(self):
        with pytest.raises(ValueError, match="rate"):
            exp_tilted_tail(Exponential(), 0.0, -1.0)

    def test_parse(self):
        assert parse_weight("exp:beta=2.5") == Exponential(beta=2.5)
        assert parse_weight("zero") == IndicatorZero()
        assert parse_weight("step:breaks=0,0.5,2;values=1.4,0.2") == STEP

    def test_parse_unknown(self):
        with pytest.raises(ValueError, match="Неизвестный вес"):
            parse_weight("gauss:s=1")


class TestClocks:
    def test_parse_each_kind(self):
        assert parse_clock("exp:q=0.5") == ExponentialClock(q=0.5)
        assert parse_clock("hit:a=-2").a == -2.0
        two = parse_clock("twopoint:a=2,b=3")
        assert isinstance(two, TwoPointClock)
        assert two.levels == (2.0, -3.0)
        assert (two.a, two.b) == (2.0, 3.0)
        assert parse_clock("invlt:a=1,u=0.5") == InverseLocalTimeClock(a=1.0, u=0.5)
        assert parse_clock("levels:1,-1,2").levels == (1.0, -1.0, 2.0)

    def test_hitting_clock_is_first_passage(self):
        clock = HittingClock(1.5)
        assert isinstance(clock, FirstPassageClock)
        assert clock.levels == (1.5,)

    @pytest.mark.parametrize("text", [
        "exp:q=0", "hit:a=0", "twopoint:a=1,b=-1", "invlt:a=1,u=0", "invlt:a=0,u=1",
        "levels:1,1", "hit:b=1", "exp:q=fast", "daily:q=1",
    ])
    def test_invalid(self, text):
        with pytest.raises(InvalidClock):
            parse_clock(text)
