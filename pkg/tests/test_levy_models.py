"""Тесты моделей Леви: Ψ, моменты, пресеты, файлы моделей и диагностика."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from app.errors import ModelConfigError, UnsupportedModel
from app.levy_models import (
    PRESETS,
    BrownianDiffusion,
    DriftedBrownian,
    JumpDiffusion,
    StrictlyStable,
    diagnostics,
    drift_of_mean_zero,
    list_presets,
    load_model,
    parse_model_text,
    psi,
    psi_small_lambda_ratio,
    theta_omega,
)

lambdas = st.floats(min_value=-200.0, max_value=200.0, allow_nan=False)


class TestCharacteristicExponent:
    def test_brownian_value(self):
        assert psi(BrownianDiffusion(sigma=2.0), 1.5) == pytest.approx(complex(4.5, 0.0))

    def test_scalar_in_scalar_out(self, kou):
        assert isinstance(psi(kou, 0.3), complex)
        assert psi(kou, np.array([0.1, 0.2])).shape == (2,)

    @pytest.mark.parametrize("name", sorted(PRESETS))
    def test_zero_at_origin(self, name):
        assert abs(psi(PRESETS[name], 0.0)) == 0.0

    @settings(max_examples=60, deadline=None)
    @given(lam=lambdas)
    def test_real_part_nonnegative(self, lam):
        for model in PRESETS.values():
            theta, _ = theta_omega(model, lam)
            assert theta >= -1e-12

    @settings(max_examples=60, deadline=None)
    @given(lam=lambdas)
    def test_hermitian_parity(self, lam):
        for model in PRESETS.values():
            assert psi(model, -lam) == pytest.approx(psi(model, lam).conjugate(), rel=1e-12, abs=1e-12)

    def test_drift_sign_convention(self):
        model = DriftedBrownian(sigma=1.0, drift=1.0)
        _, omega = theta_omega(model, 2.0)
        assert omega == pytest.approx(2.0)
        assert model.mean_velocity == -1.0


class TestMoments:
    def test_brownian(self, bm):
        assert bm.m2 == 1.0
        assert bm.recurrent

    def test_kou_second_moment(self, kou):
        expected = 1.0 + 2 * 0.4 / 9 + 2 * 0.6 / 4
        assert kou.m2 == pytest.approx(expected)

    def test_kou_compensating_drift(self, kou):
        assert kou.mean_jump == pytest.approx(0.4 / 3 - 0.6 / 2)
        # E[J] = −1/6, снос λ_J/6
        assert drift_of_mean_zero(kou) == pytest.approx(1.0 / 6.0)
        assert drift_of_mean_zero(kou) == kou.compensating_drift

    def test_drift_of_mean_zero_other_variants(self, bm, stable_asym, drifted):
        assert drift_of_mean_zero(bm) == 0.0
        assert drift_of_mean_zero(stable_asym) == 0.0
        with pytest.raises(UnsupportedModel):
            drift_of_mean_zero(drifted)

    def test_stable_infinite_variance(self, stable_sym):
        assert math.isinf(stable_sym.m2)
        assert stable_sym.recurrent

    def test_stable_derived_constants(self, stable_asym):
        assert stable_asym.beta == pytest.approx(0.5)
        assert stable_asym.c > 0
        assert stable_asym.K > 0

    def test_stable_closed_form_h_shape(self, stable_sym, stable_asym):
        assert stable_sym.closed_form_h(2.0) == pytest.approx(stable_sym.closed_form_h(-2.0))
        # β > 0: отрицательная полуось «дороже»
        assert stable_asym.closed_form_h(-1.0) > stable_asym.closed_form_h(1.0)
        assert stable_sym.closed_form_h(4.0) == pytest.approx(2.0 * stable_sym.closed_form_h(1.0))

    def test_drifted_is_transient(self, drifted):
        assert not drifted.recurrent
        assert drifted.m2 == pytest.approx(2.0)


class TestValidation:
    def test_stable_alpha_range(self):
        with pytest.raises(ModelConfigError, match="alpha"):
            StrictlyStable(alpha=2.5)

    def test_stable_needs_mass(self):
        with pytest.raises(ModelConfigError):
            StrictlyStable(alpha=1.5, c_plus=0.0, c_minus=0.0)

    def test_brownian_sigma(self):
        with pytest.raises(ModelConfigError, match="sigma"):
            BrownianDiffusion(sigma=0.0)

    def test_kou_needs_gaussian_part(self):
        with pytest.raises(ModelConfigError, match="sigma"):
            JumpDiffusion(sigma=0.0)

    def test_kou_probability(self):
        with pytest.raises(ModelConfigError, match="p"):
            JumpDiffusion(p=1.5)

    def test_zero_drift_rejected(self):
        with pytest.raises(ModelConfigError, match="drift"):
            DriftedBrownian(drift=0.0)


class TestModelFiles:
    def test_presets(self):
        assert set(list_presets()) == {"bm", "stable-sym-1.5", "stable-asym-1.5", "kou", "bm-drift"}
        assert load_model("kou").p == 0.4

    def test_parse_stable(self):
        model = parse_model_text("[model]\nvariant = stable\nalpha = 1.2\nc_plus = 1\nc_minus = 0.5\n")
        assert model == StrictlyStable(alpha=1.2, c_plus=1.0, c_minus=0.5)

    def test_unknown_key_named(self):
        with pytest.raises(ModelConfigError, match="sigma"):
            parse_model_text("[model]\nvariant = stable\nsigma = 1\n")

    def test_non_numeric_value(self):
        with pytest.raises(ModelConfigError, match="alpha"):
            parse_model_text("[model]\nvariant = stable\nalpha = many\n")

    def test_missing_section(self):
        with pytest.raises(ModelConfigError, match="model"):
            parse_model_text("[other]\nvariant = brownian\n")

    def test_unknown_variant(self):
        with pytest.raises(ModelConfigError, match="variant"):
            parse_model_text("[model]\nvariant = cgmy\n")

    def test_load_from_file(self, tmp_path):
        path = tmp_path / "kou.ini"
        path.write_text("[model]\nvariant = kou\nsigma = 0.5\njump_rate = 2\np = 0.5\n", encoding="utf-8")
        model = load_model(path)
        assert isinstance(model, JumpDiffusion)
        assert model.sigma == 0.5 and model.jump_rate == 2.0

    def test_missing_file(self):
        with pytest.raises(ModelConfigError, match="пресет"):
            load_model("no-such-model.ini")


class TestDiagnostics:
    def test_small_lambda_ratio_finite_variance(self, kou):
        ratio = psi_small_lambda_ratio(kou)
        assert np.real(ratio[-1]) == pytest.approx(kou.m2 / 2, rel=1e-4)

    def test_small_lambda_ratio_stable(self, stable_sym):
        ratio = psi_small_lambda_ratio(stable_sym)
        assert ratio[-1] < ratio[0]
        assert ratio[-1] < 1e-3

    def test_brownian(self, bm, engine):
        diag = diagnostics(bm, engine=engine)
        assert diag.recurrent and diag.assumption_A_ok and diag.tsukada_ok
        assert diag.kappa == 0.0
        assert diag.omega_cubic_integral == pytest.approx(0.0, abs=1e-12)
        assert diag.q_resolvent_vanishes
        assert diag.q_resolvent[1e-2] == pytest.approx(math.sqrt(1e-2 / 2))

    def test_transient_kappa(self, drifted, engine):
        diag = diagnostics(drifted, engine=engine)
        assert not diag.recurrent
        assert diag.kappa == pytest.approx(1.0, abs=1e-6)
        assert diag.omega_cubic_integral is None

    def test_uncertified_bound(self, bm, engine, monkeypatch):
        from app import levy_models

        monkeypatch.setattr(levy_models, "_resolvent_abs_integral", lambda model, q: (1.0, 1e-3))
        diag = diagnostics(bm, check_qs=(1.0,), engine=engine)
        assert not diag.assumption_A_ok
        assert diag.recurrent

    def test_check_qs_validation(self, bm):
        with pytest.raises(ValueError):
            diagnostics(bm, check_qs=())
        with pytest.raises(ValueError, match="q"):
            diagnostics(bm, check_qs=(1.0, -1.0))
