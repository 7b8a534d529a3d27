"""
Модели Леви с явной характеристической экспонентой
Экспонента Ψ, моменты, классы возвратности, диагностика условия (A) и разбор файлов моделей
"""

import configparser
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import integrate
from scipy.special import gamma as gamma_fn

from app.errors import ModelConfigError, NonIntegrableResolvent, UnsupportedModel

logger = logging.getLogger(__name__)

# Диагностические сетки: 40 точек на декаду
POINTS_PER_DECADE = 40
DEFAULT_CHECK_QS = (1.0, 1e-1, 1e-2, 1e-3)
# (A) подтверждено, если погрешность головы интеграла не больше этой доли оценки
A_CERT_REL_TOL = 1e-6


class LevyModel:
    """Базовый класс: одномерный процесс Леви с замкнутой Ψ"""

    variant = "abstract"

    def psi(self, lam):
        raise NotImplementedError

    @property
    def m2(self) -> float:
        raise NotImplementedError

    @property
    def recurrent(self) -> bool:
        return True

    @property
    def gaussian_sigma(self) -> float:
        """Коэффициент гауссовской части (0 для устойчивых)"""
        return 0.0

    def theta_lower_bound(self, lam):
        """Нижняя оценка θ(λ), используемая для хвостов интегралов"""
        raise NotImplementedError

    def tail_abs_integral(self, lam0: float) -> float:
        """Оценка сверху ∫_{λ0}^∞ 1/θ_min(λ) dλ"""
        raise NotImplementedError

    @property
    def label(self) -> str:
        params = ", ".join(f"{k}={v:g}" for k, v in self.params().items())
        return f"{self.variant}({params})"

    def params(self) -> Dict[str, float]:
        return {}


@dataclass(frozen=True)
class BrownianDiffusion(LevyModel):
    """Броуновское движение σB_t"""

    sigma: float = 1.0
    variant = "brownian"

    def __post_init__(self):
        if not self.sigma > 0:
            raise ModelConfigError(f"sigma должна быть > 0, получено {self.sigma}")

    def psi(self, lam):
        lam = np.asarray(lam, dtype=float)
        return (0.5 * self.sigma ** 2 * lam ** 2).astype(complex)

    @property
    def m2(self) -> float:
        return self.sigma ** 2

    @property
    def gaussian_sigma(self) -> float:
        return self.sigma

    def theta_lower_bound(self, lam):
        return 0.5 * self.sigma ** 2 * np.asarray(lam, dtype=float) ** 2

    def tail_abs_integral(self, lam0: float) -> float:
        return 2.0 / (self.sigma ** 2 * lam0)

    def params(self) -> Dict[str, float]:
        return {"sigma": self.sigma}


@dataclass(frozen=True)
class StrictlyStable(LevyModel):
    """
    Строго устойчивый процесс индекса α ∈ (1, 2)

    Хранятся (α, c₊, c₋); константы c и β выводятся из них.
    """

    alpha: float = 1.5
    c_plus: float = 1.0
    c_minus: float = 1.0
    variant = "stable"

    def __post_init__(self):
        if not 1.0 < self.alpha < 2.0:
            raise ModelConfigError(f"alpha должна лежать в (1, 2), получено {self.alpha}")
        if self.c_plus < 0 or self.c_minus < 0 or self.c_plus + self.c_minus <= 0:
            raise ModelConfigError("Нужно c_plus ≥ 0, c_minus ≥ 0 и c_plus + c_minus > 0")

    @property
    def c(self) -> float:
        a = self.alpha
        return (self.c_plus + self.c_minus) * math.pi / (2 * a * gamma_fn(a) * math.sin(math.pi * a / 2))

    @property
    def beta(self) -> float:
        return (self.c_plus - self.c_minus) / (self.c_plus + self.c_minus)

    @property
    def tan_term(self) -> float:
        return math.tan(math.pi * self.alpha / 2)

    @property
    def K(self) -> float:
        """Нормировка K(α) в замкнутой форме h"""
        a = self.alpha
        return (-2 * self.c * gamma_fn(a) * math.cos(math.pi * a / 2)
                * (1 + self.beta ** 2 * self.tan_term ** 2))

    def psi(self, lam):
        lam = np.asarray(lam, dtype=float)
        skew = 1 - 1j * self.beta * np.sign(lam) * self.tan_term
        return self.c * np.abs(lam) ** self.alpha * skew

    @property
    def m2(self) -> float:
        return math.inf

    def theta_lower_bound(self, lam):
        return self.c * np.abs(np.asarray(lam, dtype=float)) ** self.alpha

    def tail_abs_integral(self, lam0: float) -> float:
        return lam0 ** (1 - self.alpha) / (self.c * (self.alpha - 1))

    def closed_form_h(self, x):
        x = np.asarray(x, dtype=float)
        return (1 - self.beta * np.sign(x)) * np.abs(x) ** (self.alpha - 1) / self.K

    def closed_form_r0(self, q: float) -> float:
        """r_q(0) = q^{1/α−1}·c^{−1/α}·Re((1 − iβ·tan(πα/2))^{−1/α}) / (α·sin(π/α))"""
        a = self.alpha
        skew = complex(1.0, -self.beta * self.tan_term) ** (-1.0 / a)
        return q ** (1.0 / a - 1.0) * self.c ** (-1.0 / a) * skew.real / (a * math.sin(math.pi / a))

    def params(self) -> Dict[str, float]:
        return {"alpha": self.alpha, "c_plus": self.c_plus, "c_minus": self.c_minus}


@dataclass(frozen=True)
class JumpDiffusion(LevyModel):
    """
    Диффузия со скачками (двусторонние экспоненциальные скачки, модель Коу)

    eta_plus и eta_minus: интенсивности экспоненциальных законов положительных
    и отрицательных скачков, p: доля положительных. Снос выбирается так, чтобы
    среднее X_1 было нулевым.
    """

    sigma: float = 1.0
    jump_rate: float = 1.0
    eta_plus: float = 3.0
    eta_minus: float = 2.0
    p: float = 0.5
    variant = "kou"

    def __post_init__(self):
        if not self.sigma > 0:
            raise ModelConfigError("sigma должна быть > 0 (без гауссовской части (A2) нарушено)")
        if self.jump_rate < 0:
            raise ModelConfigError("jump_rate должна быть ≥ 0")
        if not (self.eta_plus > 0 and self.eta_minus > 0):
            raise ModelConfigError("eta_plus и eta_minus должны быть > 0")
        if not 0.0 <= self.p <= 1.0:
            raise ModelConfigError("p должна лежать в [0, 1]")

    @property
    def mean_jump(self) -> float:
        return self.p / self.eta_plus - (1 - self.p) / self.eta_minus

    @property
    def compensating_drift(self) -> float:
        """Снос, обнуляющий среднее"""
        return -self.jump_rate * self.mean_jump

    def psi(self, lam):
        lam = np.asarray(lam, dtype=float)
        # Компенсированная часть без вычитаний: 1 - φ(λ) + iλE[J] = λ²·(...)
        jumps = (self.p / (self.eta_plus * (self.eta_plus - 1j * lam))
                 + (1 - self.p) / (self.eta_minus * (self.eta_minus + 1j * lam)))
        return 0.5 * self.sigma ** 2 * lam ** 2 + self.jump_rate * lam ** 2 * jumps

    @property
    def m2(self) -> float:
        second = 2 * self.p / self.eta_plus ** 2 + 2 * (1 - self.p) / self.eta_minus ** 2
        return self.sigma ** 2 + self.jump_rate * second

    @property
    def gaussian_sigma(self) -> float:
        return self.sigma

    def theta_lower_bound(self, lam):
        return 0.5 * self.sigma ** 2 * np.asarray(lam, dtype=float) ** 2

    def tail_abs_integral(self, lam0: float) -> float:
        return 2.0 / (self.sigma ** 2 * lam0)

    def params(self) -> Dict[str, float]:
        return {"sigma": self.sigma, "jump_rate": self.jump_rate, "eta_plus": self.eta_plus,
                "eta_minus": self.eta_minus, "p": self.p}


@dataclass(frozen=True)
class DriftedBrownian(LevyModel):
    """
    Броуновское движение со сносом: Ψ(λ) = ivλ + σ²λ²/2

    При таком знаке X_t = σB_t − v·t.
    """

    sigma: float = 1.0
    drift: float = 1.0
    variant = "bm-drift"

    def __post_init__(self):
        if not self.sigma > 0:
            raise ModelConfigError("sigma должна быть > 0")
        if self.drift == 0:
            raise ModelConfigError("drift должен быть ненулевым (иначе это броуновское движение)")

    def psi(self, lam):
        lam = np.asarray(lam, dtype=float)
        return 1j * self.drift * lam + 0.5 * self.sigma ** 2 * lam ** 2

    @property
    def m2(self) -> float:
        return self.sigma ** 2 + self.drift ** 2

    @property
    def recurrent(self) -> bool:
        return False

    @property
    def gaussian_sigma(self) -> float:
        return self.sigma

    @property
    def mean_velocity(self) -> float:
        return -self.drift

    def theta_lower_bound(self, lam):
        return 0.5 * self.sigma ** 2 * np.asarray(lam, dtype=float) ** 2

    def tail_abs_integral(self, lam0: float) -> float:
        return 2.0 / (self.sigma ** 2 * lam0)

    def params(self) -> Dict[str, float]:
        return {"sigma": self.sigma, "drift": self.drift}


@dataclass(frozen=True)
class ModelDiagnostics:
    """Результат диагностики модели"""

    m2: float
    recurrent: bool
    assumption_A_ok: bool
    kappa: float
    tsukada_ok: bool = True
    omega_cubic_integral: Optional[float] = None
    q_resolvent: Dict[float, float] = field(default_factory=dict)

    @property
    def q_resolvent_vanishes(self) -> bool:
        """q·r_q(0) убывает к нулю на контрольной сетке"""
        if len(self.q_resolvent) < 2:
            return True
        values = [self.q_resolvent[q] for q in sorted(self.q_resolvent, reverse=True)]
        return all(b <= a * (1 + 1e-9) for a, b in zip(values, values[1:]))


def psi(model: LevyModel, lam):
    """Характеристическая экспонента Ψ(λ); скаляр на скаляр, массив на массив"""
    value = model.psi(lam)
    if np.ndim(value) == 0:
        return complex(value)
    return value


def theta_omega(model: LevyModel, lam):
    """Пара (θ, ω) = (Re Ψ, Im Ψ)"""
    value = model.psi(lam)
    if np.ndim(value) == 0:
        return float(np.real(value)), float(np.imag(value))
    return np.real(value), np.imag(value)


def drift_of_mean_zero(model: LevyModel) -> float:
    """Снос, при котором E[X_1] = 0: −λ_J·E[J] для скачков Коу, 0 для броуновской и устойчивых моделей"""
    if isinstance(model, JumpDiffusion):
        return model.compensating_drift
    if isinstance(model, DriftedBrownian):
        raise UnsupportedModel(f"{model.label}: среднее ненулевое по построению")
    return 0.0


def geometric_grid(low_decade: float, high_decade: float, per_decade: int = POINTS_PER_DECADE) -> np.ndarray:
    """Геометрическая сетка 10^low … 10^high"""
    n = int(round((high_decade - low_decade) * per_decade)) + 1
    return np.logspace(low_decade, high_decade, n)


def psi_small_lambda_ratio(model: LevyModel, lambdas: Optional[Sequence[float]] = None) -> np.ndarray:
    """
    Диагностика λ → 0

    Для m² < ∞ возвращает Ψ(λ)/λ² (должно стремиться к m²/2),
    для m² = ∞ возвращает λ²/|Ψ(λ)| (должно стремиться к нулю).
    """
    if lambdas is None:
        lambdas = geometric_grid(-6, -1)[::-1]
    lambdas = np.asarray(lambdas, dtype=float)
    values = model.psi(lambdas)
    if math.isfinite(model.m2):
        return values / lambdas ** 2
    return lambdas ** 2 / np.abs(values)


def _resolvent_abs_integral(model: LevyModel, q: float, split: float = 10.0) -> Tuple[float, float]:
    """Оценка ∫₀^∞ |1/(q+Ψ)| dλ: адаптивная голова плюс аналитический хвост; возвращает (оценка, погрешность головы)"""
    head, err, *rest = integrate.quad(lambda lam: 1.0 / abs(q + complex(model.psi(lam))),
                                      0.0, split, limit=500, full_output=1)
    tail = model.tail_abs_integral(split)
    total = head + tail
    if not (math.isfinite(total) and math.isfinite(err)):
        raise NonIntegrableResolvent(f"∫|1/(q+Ψ)| не оценивается для {model.label} при q={q}")
    return total, err


def diagnostics(model: LevyModel, check_qs: Sequence[float] = DEFAULT_CHECK_QS,
                engine=None) -> ModelDiagnostics:
    """
    Диагностика модели: m², возвратность, условие (A), κ

    Args:
        model: модель Леви
        check_qs: контрольные значения q > 0 (условие (A) проверяется только на них)
        engine: QuadratureEngine для κ и q·r_q(0); по умолчанию из конфигурации

    Returns:
        ModelDiagnostics
    """
    if not check_qs:
        raise ValueError("check_qs не может быть пустым")
    # Отложенный импорт: resolvent сам зависит от этого модуля
    from app import resolvent

    if engine is None:
        engine = resolvent.QuadratureEngine()

    assumption_A_ok = True
    for q in check_qs:
        if q <= 0:
            raise ValueError(f"Контрольное q должно быть > 0, получено {q}")
        bound, err = _resolvent_abs_integral(model, q)
        logger.debug(f"{model.label}: ∫|1/(q+Ψ)| ≤ {bound:.6g} ± {err:.2g} при q={q:g}")
        if err > A_CERT_REL_TOL * bound:
            logger.warning(f"{model.label}: условие (A) при q={q:g} не подтверждено, погрешность {err:.3g}")
            assumption_A_ok = False

    tsukada_value, _ = integrate.quad(lambda lam: abs((lam / complex(model.psi(lam))).imag)
                                      if lam > 0 else 0.0, 0.0, 1.0, limit=500)
    tsukada_ok = math.isfinite(tsukada_value)

    omega_integral = None
    if model.recurrent and math.isfinite(model.m2):
        value, _ = integrate.quad(lambda lam: abs(float(np.imag(model.psi(lam)))) / lam ** 3
                                  if lam > 0 else 0.0, 0.0, np.inf, limit=500)
        omega_integral = 2.0 * value

    q_resolvent = {}
    for q in check_qs:
        q_resolvent[q] = q * resolvent.resolvent_density(model, q, 0.0, engine).value

    kappa = 0.0 if model.recurrent else resolvent.killing_rate(model, engine).value

    return ModelDiagnostics(
        m2=model.m2,
        recurrent=model.recurrent,
        assumption_A_ok=assumption_A_ok,
        kappa=kappa,
        tsukada_ok=tsukada_ok,
        omega_cubic_integral=omega_integral,
        q_resolvent=q_resolvent,
    )


# Пресеты для флага --model
PRESETS: Dict[str, LevyModel] = {
    "bm": BrownianDiffusion(sigma=1.0),
    "stable-sym-1.5": StrictlyStable(alpha=1.5, c_plus=1.0, c_minus=1.0),
    "stable-asym-1.5": StrictlyStable(alpha=1.5, c_plus=1.5, c_minus=0.5),
    "kou": JumpDiffusion(sigma=1.0, jump_rate=1.0, eta_plus=3.0, eta_minus=2.0, p=0.4),
    "bm-drift": DriftedBrownian(sigma=1.0, drift=1.0),
}

_VARIANTS = {
    "brownian": (BrownianDiffusion, ("sigma",)),
    "stable": (StrictlyStable, ("alpha", "c_plus", "c_minus")),
    "kou": (JumpDiffusion, ("sigma", "jump_rate", "eta_plus", "eta_minus", "p")),
    "bm-drift": (DriftedBrownian, ("sigma", "drift")),
}


def parse_model_text(text: str) -> LevyModel:
    """
    Разбор описания модели в формате INI

    Ожидается секция [model] с ключом variant и полями варианта, например:
        [model]
        variant = stable
        alpha = 1.5
        c_plus = 1
        c_minus = 1
    """
    parser = configparser.ConfigParser()
    try:
        parser.read_string(text)
    except configparser.Error as e:
        raise ModelConfigError(f"Не удалось разобрать файл модели: {e}") from e

    if "model" not in parser:
        raise ModelConfigError("В файле модели нет секции [model]")
    section = parser["model"]
    variant = section.get("variant", "").strip()
    if variant not in _VARIANTS:
        raise ModelConfigError(f"Неизвестный variant '{variant}', допустимо: {', '.join(_VARIANTS)}")

    cls, allowed = _VARIANTS[variant]
    kwargs = {}
    for key, raw in section.items():
        if key == "variant":
            continue
        if key not in allowed:
            raise ModelConfigError(f"Ключ '{key}' не относится к варианту {variant}")
        try:
            kwargs[key] = float(raw)
        except ValueError as e:
            raise ModelConfigError(f"Ключ '{key}': ожидалось число, получено '{raw}'") from e
    return cls(**kwargs)


def load_model(name_or_path: Union[str, Path]) -> LevyModel:
    """Модель по имени пресета или пути к файлу"""
    key = str(name_or_path)
    if key in PRESETS:
        return PRESETS[key]
    path = Path(key)
    if not path.exists():
        raise ModelConfigError(f"Нет ни пресета, ни файла '{key}'; пресеты: {', '.join(PRESETS)}")
    logger.info(f"Загружаем модель из {path}")
    return parse_model_text(path.read_text(encoding="utf-8"))


def list_presets() -> List[str]:
    return list(PRESETS)
