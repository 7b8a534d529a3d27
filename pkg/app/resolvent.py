"""
Квадратуры для резольвенты
Осциллирующие интегралы Фурье для r_q, h_q, h, h^S, h^D, быстрые замкнутые формы и экстраполяция q → 0
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate

from app import config
from app.errors import ExtrapolationUnstable, NotTransient, QuadratureNoConvergence
from app.levy_models import BrownianDiffusion, DriftedBrownian, LevyModel, StrictlyStable

logger = logging.getLogger(__name__)

CLOSED_FORM = "closed_form"
QUADRATURE = "quadrature"
EXTRAPOLATION = "extrapolation"

# Окно значений для ε-алгоритма Винна
WYNN_WINDOW = 7
MIN_EXTRAP_TERMS = 8


class TailStrategy(str, Enum):
    """Обработка хвоста [Λ, ∞)"""

    ANALYTIC_BOUND = "analytic_bound"
    OSCILLATION_CELLS = "oscillation_cells_with_acceleration"


@dataclass(frozen=True)
class QuadratureEngine:
    """Настройки квадратур; неизменяемы и безопасны для потоков"""

    abs_tol: float = config.QUAD_ABS_TOL
    rel_tol: float = config.QUAD_REL_TOL
    split_point: float = 1.0
    max_subdivisions: int = config.QUAD_MAX_SUBDIVISIONS
    tail_strategy: TailStrategy = TailStrategy.OSCILLATION_CELLS
    extrap_rel_tol: float = config.EXTRAP_REL_TOL
    extrap_q0: float = 1.0
    extrap_max_k: int = 20
    max_cycles: int = 200

    def tolerance(self, value: float) -> float:
        return max(self.abs_tol, self.rel_tol * abs(value))


@dataclass(frozen=True)
class ResolventValue:
    """Значение интеграла с оценкой погрешности и способом вычисления"""

    value: float
    error_estimate: float
    method: str

    def __float__(self):
        return float(self.value)


# Слагаемое хвоста: (коэффициент, 're' | 'im', 'const' | 'cos' | 'sin', частота)
TailTerm = Tuple[float, str, str, float]


def _resolvent_parts(model: LevyModel, q: float) -> Tuple[Callable, Callable]:
    """Вещественная и мнимая части 1/(q+Ψ(λ)) как скалярные функции"""

    def g_re(lam: float) -> float:
        z = q + complex(model.psi(lam))
        return z.real / (z.real ** 2 + z.imag ** 2)

    def g_im(lam: float) -> float:
        z = q + complex(model.psi(lam))
        return -z.imag / (z.real ** 2 + z.imag ** 2)

    return g_re, g_im


def _characteristic_scale(model: LevyModel, q: float) -> Optional[float]:
    """Масштаб λ, где θ_min(λ) ≈ q; служит точкой излома для головы"""
    if q <= 0:
        return None
    if isinstance(model, StrictlyStable):
        return (q / model.c) ** (1 / model.alpha)
    sigma = model.gaussian_sigma
    if sigma > 0:
        return math.sqrt(2 * q) / sigma
    return None


def _quad(func, a, b, engine: QuadratureEngine, **kwargs) -> Tuple[float, float, bool]:
    """scipy.integrate.quad с признаком аварийного завершения"""
    result = integrate.quad(func, a, b, epsabs=engine.abs_tol / 4, epsrel=engine.rel_tol,
                            limit=engine.max_subdivisions, full_output=1, **kwargs)
    value, error = result[0], result[1]
    abnormal = len(result) > 3
    if abnormal:
        logger.debug(f"quad [{a}, {b}] {kwargs.get('weight', '')}: {result[3]}")
    return value, error, abnormal


def _split_point(engine: QuadratureEngine, freqs: Sequence[float]) -> float:
    active = [abs(w) for w in freqs if w != 0]
    if not active:
        return engine.split_point
    return min(engine.split_point, 10 * math.pi / max(active))


def _fourier_integral(model: LevyModel, q: float, head: Callable[[float], float],
                      tail_terms: List[TailTerm], engine: QuadratureEngine,
                      what: str) -> Tuple[float, float]:
    """
    ∫₀^∞ head(λ) dλ, где на [Λ, ∞) подынтегральное выражение разложено в tail_terms

    Голова считается адаптивной квадратурой, хвост по стратегии движка.
    """
    g_re, g_im = _resolvent_parts(model, q)
    parts = {"re": g_re, "im": g_im}
    freqs = [w for _, _, kind, w in tail_terms if kind != "const"]

    if engine.tail_strategy == TailStrategy.ANALYTIC_BOUND:
        return _analytic_bound_integral(model, q, head, tail_terms, parts, engine, what)

    lam_split = _split_point(engine, freqs)
    scale = _characteristic_scale(model, q)
    points = [scale] if scale is not None and 0 < scale < lam_split else None

    total, error, abnormal = _quad(head, 0.0, lam_split, engine, points=points)

    for coef, part, kind, freq in tail_terms:
        if coef == 0 or (kind == "sin" and freq == 0):
            continue
        g = parts[part]
        sign = 1.0
        if kind == "const" or (kind == "cos" and freq == 0):
            value, err, bad = _quad(g, lam_split, np.inf, engine)
        else:
            if kind == "sin" and freq < 0:
                sign = -1.0
            value, err, bad = _quad(g, lam_split, np.inf, engine, weight=kind, wvar=abs(freq),
                                    limlst=engine.max_cycles)
        total += coef * sign * value
        error += abs(coef) * err
        abnormal = abnormal or bad

    if abnormal and error > engine.tolerance(total):
        raise QuadratureNoConvergence(
            f"{what}: погрешность {error:.3g} выше допуска для {model.label}")
    if error > engine.tolerance(total):
        logger.debug(f"{what}: оценка погрешности {error:.3g} выше номинального допуска")
    return total, error


def _analytic_bound_integral(model: LevyModel, q: float, head, tail_terms, parts,
                             engine: QuadratureEngine, what: str) -> Tuple[float, float]:
    """
    Голова до Λ с |Ψ(Λ)| ≥ 10³·max(q, 1); неосциллирующий хвост считается,
    осциллирующий оценивается сверху величиной 2|g(Λ)|/|w|
    """
    lam = 1.0
    while abs(complex(model.psi(lam))) < 1e3 * max(q, 1.0):
        lam *= 2.0

    for _ in range(24):
        total, error, abnormal = _quad(head, 0.0, lam, engine)
        bound = 0.0
        for coef, part, kind, freq in tail_terms:
            g = parts[part]
            if kind == "const" or (kind == "cos" and freq == 0):
                value, err, bad = _quad(g, lam, np.inf, engine)
                total += coef * value
                error += abs(coef) * err
                abnormal = abnormal or bad
            elif freq != 0:
                bound += abs(coef) * 2 * abs(g(lam)) / abs(freq)
        if abnormal:
            break
        if bound <= engine.tolerance(total) / 2:
            return total, error + bound
        lam *= 4.0

    raise QuadratureNoConvergence(
        f"{what}: хвост не удалось оценить с нужной точностью для {model.label}")


# Замкнутые формы


def _brownian_r(model: BrownianDiffusion, q: float, x: float) -> float:
    root = math.sqrt(2 * q)
    return math.exp(-root * abs(x) / model.sigma) / (model.sigma * root)


def _drifted_r(model: DriftedBrownian, q: float, x: float) -> float:
    mu = model.mean_velocity
    s2 = model.sigma ** 2
    root = math.sqrt(mu ** 2 + 2 * q * s2)
    return math.exp((mu * x - root * abs(x)) / s2) / root


def _closed_form_r(model: LevyModel, q: float, x: float) -> Optional[float]:
    if isinstance(model, BrownianDiffusion):
        return _brownian_r(model, q, x)
    if isinstance(model, DriftedBrownian):
        return _drifted_r(model, q, x)
    if isinstance(model, StrictlyStable) and x == 0:
        return model.closed_form_r0(q)
    return None


@lru_cache(maxsize=4096)
def _r_zero(model: LevyModel, q: float, engine: QuadratureEngine) -> ResolventValue:
    return resolvent_density(model, q, 0.0, engine)


def resolvent_density(model: LevyModel, q: float, x: float,
                      engine: QuadratureEngine = None, method: str = "auto") -> ResolventValue:
    """
    Плотность q-резольвенты r_q(x) = (1/π)∫₀^∞ Re(e^{−iλx}/(q+Ψ(λ))) dλ

    Args:
        model: модель Леви
        q: параметр q > 0
        x: точка
        engine: настройки квадратур
        method: "auto" или "quadrature" (без замкнутой формы, для перекрёстной проверки)

    Returns:
        ResolventValue
    """
    if q <= 0:
        raise ValueError(f"q должно быть > 0, получено {q}")
    engine = engine or QuadratureEngine()

    closed = _closed_form_r(model, q, x) if method == "auto" else None
    if closed is not None:
        return ResolventValue(closed, 0.0, CLOSED_FORM)

    g_re, g_im = _resolvent_parts(model, q)

    def head(lam):
        return g_re(lam) * math.cos(lam * x) + g_im(lam) * math.sin(lam * x)

    terms = [(1.0, "re", "cos", x), (1.0, "im", "sin", x)]
    total, error = _fourier_integral(model, q, head, terms, engine, f"r_{q:g}({x:g})")
    value = ResolventValue(total / math.pi, error / math.pi, QUADRATURE)

    if x != 0:
        zero = _r_zero(model, q, engine)
        if value.value > zero.value + value.error_estimate + zero.error_estimate + engine.abs_tol:
            raise QuadratureNoConvergence(
                f"r_q(x) = {value.value:.12g} превышает r_q(0) = {zero.value:.12g}")
    return value


def h_q(model: LevyModel, q: float, x: float, engine: QuadratureEngine = None,
        method: str = "auto") -> ResolventValue:
    """h_q(x) = r_q(0) − r_q(−x), одним интегралом (1/π)∫Re((1−e^{iλx})/(q+Ψ))"""
    if q <= 0:
        raise ValueError(f"q должно быть > 0, получено {q}")
    engine = engine or QuadratureEngine()
    if x == 0:
        return ResolventValue(0.0, 0.0, CLOSED_FORM)
    if method == QUADRATURE:
        return _h_integral(model, q, x, engine)

    if isinstance(model, BrownianDiffusion):
        root = math.sqrt(2 * q)
        value = -math.expm1(-root * abs(x) / model.sigma) / (model.sigma * root)
        return ResolventValue(value, 0.0, CLOSED_FORM)
    if isinstance(model, DriftedBrownian):
        value = _drifted_r(model, q, 0.0) - _drifted_r(model, q, -x)
        return ResolventValue(value, 0.0, CLOSED_FORM)

    return _h_integral(model, q, x, engine)


def _h_integral(model: LevyModel, q: float, x: float, engine: QuadratureEngine) -> ResolventValue:
    g_re, g_im = _resolvent_parts(model, q)

    def head(lam):
        if lam == 0:
            return 0.0
        one_minus_cos = 2.0 * math.sin(0.5 * lam * x) ** 2
        return g_re(lam) * one_minus_cos + g_im(lam) * math.sin(lam * x)

    terms = [(1.0, "re", "const", 0.0), (-1.0, "re", "cos", x), (1.0, "im", "sin", x)]
    label = f"h_{q:g}({x:g})" if q > 0 else f"h({x:g})"
    total, error = _fourier_integral(model, q, head, terms, engine, label)
    return ResolventValue(total / math.pi, error / math.pi, QUADRATURE)


def _wynn_epsilon(sequence: Sequence[float]) -> float:
    """Ускорение сходимости ε-алгоритмом Винна; возвращает последний чётный столбец"""
    previous = [0.0] * (len(sequence) + 1)
    current = list(sequence)
    best = current[-1]
    for k in range(1, len(sequence)):
        following = []
        for j in range(len(current) - 1):
            diff = current[j + 1] - current[j]
            if diff == 0:
                return best
            following.append(previous[j + 1] + 1.0 / diff)
        previous, current = current, following
        if k % 2 == 0 and current:
            best = current[-1]
    return best


def extrapolate_q_to_zero(fn: Callable[[float], float], engine: QuadratureEngine,
                          what: str) -> ResolventValue:
    """
    Предел fn(q) при q → 0 по сетке q_k = q₀·2^{−k}

    Raises:
        ExtrapolationUnstable: если два последних экстраполянта расходятся
    """
    values: List[float] = []
    estimates: List[float] = []
    for k in range(engine.extrap_max_k + 1):
        values.append(fn(engine.extrap_q0 * 2.0 ** (-k)))
        if len(values) >= 3:
            estimates.append(_wynn_epsilon(values[-WYNN_WINDOW:]))
        if len(values) >= MIN_EXTRAP_TERMS and len(estimates) >= 2:
            diff = abs(estimates[-1] - estimates[-2])
            if diff <= engine.extrap_rel_tol * max(abs(estimates[-1]), 1e-3):
                return ResolventValue(estimates[-1], diff, EXTRAPOLATION)

    diff = abs(estimates[-1] - estimates[-2])
    if diff <= 10 * engine.extrap_rel_tol * max(abs(estimates[-1]), 1e-3):
        logger.warning(f"{what}: экстраполяция сошлась лишь в пределах 10·tol ({diff:.3g})")
        return ResolventValue(estimates[-1], diff, EXTRAPOLATION)
    raise ExtrapolationUnstable(f"{what}: последние экстраполянты отличаются на {diff:.3g}")


def h(model: LevyModel, x: float, engine: QuadratureEngine = None,
      method: str = "auto") -> ResolventValue:
    """
    Перенормированная нулевая резольвента h(x) = lim_{q→0} h_q(x)

    Диспетчеризация: для броуновского движения и устойчивых процессов замкнутые формы,
    при m² < ∞ прямой интеграл, при m² = ∞ без замкнутой формы экстраполяция по q.
    Для невозвратной модели делегирует transient_h.
    """
    engine = engine or QuadratureEngine()
    if not model.recurrent:
        return transient_h(model, x, engine)
    if x == 0:
        return ResolventValue(0.0, 0.0, CLOSED_FORM)

    if method == "auto":
        if isinstance(model, (BrownianDiffusion, StrictlyStable)):
            method = CLOSED_FORM
        elif math.isfinite(model.m2):
            method = QUADRATURE
        else:
            method = EXTRAPOLATION

    if method == CLOSED_FORM:
        if isinstance(model, BrownianDiffusion):
            return ResolventValue(abs(x) / model.sigma ** 2, 0.0, CLOSED_FORM)
        if isinstance(model, StrictlyStable):
            return ResolventValue(float(model.closed_form_h(x)), 0.0, CLOSED_FORM)
        raise ValueError(f"Для {model.label} нет замкнутой формы h")
    if method == QUADRATURE:
        if not math.isfinite(model.m2):
            logger.debug(f"Прямой интеграл h при m² = ∞ для {model.label} (условие Цукады)")
        return _h_integral(model, 0.0, x, engine)
    if method == EXTRAPOLATION:
        return extrapolate_q_to_zero(lambda q: h_q(model, q, x, engine).value, engine,
                                     f"h({x:g}) для {model.label}")
    raise ValueError(f"Неизвестный метод '{method}'")


def h_S(model: LevyModel, x: float, engine: QuadratureEngine = None) -> ResolventValue:
    """h^S(x) = (2/π)∫₀^∞ Re((1−cos λx)/Ψ) dλ; должно совпасть с h(x)+h(−x)"""
    engine = engine or QuadratureEngine()
    if x == 0:
        return ResolventValue(0.0, 0.0, CLOSED_FORM)
    g_re, _ = _resolvent_parts(model, 0.0)

    def head(lam):
        if lam == 0:
            return 0.0
        return g_re(lam) * 2.0 * math.sin(0.5 * lam * x) ** 2

    terms = [(1.0, "re", "const", 0.0), (-1.0, "re", "cos", x)]
    total, error = _fourier_integral(model, 0.0, head, terms, engine, f"h^S({x:g})")
    return ResolventValue(2 * total / math.pi, 2 * error / math.pi, QUADRATURE)


def h_D(model: LevyModel, x: float, y: float, engine: QuadratureEngine = None) -> ResolventValue:
    """h^D(x, y) = (2/π)∫₀^∞ Re(e^{iλ(y+x)}(1−cos λx)/Ψ) dλ; вторая разность h"""
    engine = engine or QuadratureEngine()
    if x == 0:
        return ResolventValue(0.0, 0.0, CLOSED_FORM)
    g_re, g_im = _resolvent_parts(model, 0.0)
    s = y + x

    def head(lam):
        if lam == 0:
            return 0.0
        one_minus_cos = 2.0 * math.sin(0.5 * lam * x) ** 2
        return one_minus_cos * (g_re(lam) * math.cos(lam * s) - g_im(lam) * math.sin(lam * s))

    terms = [
        (1.0, "re", "cos", s), (-0.5, "re", "cos", s + x), (-0.5, "re", "cos", s - x),
        (-1.0, "im", "sin", s), (0.5, "im", "sin", s + x), (0.5, "im", "sin", s - x),
    ]
    total, error = _fourier_integral(model, 0.0, head, terms, engine, f"h^D({x:g}, {y:g})")
    return ResolventValue(2 * total / math.pi, 2 * error / math.pi, QUADRATURE)


def killing_rate(model: LevyModel, engine: QuadratureEngine = None) -> ResolventValue:
    """κ = lim_{q→0} 1/r_q(0); ноль для возвратных моделей"""
    engine = engine or QuadratureEngine()
    if model.recurrent:
        return ResolventValue(0.0, 0.0, CLOSED_FORM)
    return extrapolate_q_to_zero(lambda q: 1.0 / _r_zero(model, q, engine).value, engine,
                                 f"κ для {model.label}")


def transient_h(model: LevyModel, x: float, engine: QuadratureEngine = None) -> ResolventValue:
    """h(x) = lim_q h_q(x) = κ^{−1}P_x(T₀ = ∞) для невозвратной модели"""
    engine = engine or QuadratureEngine()
    if model.recurrent:
        raise NotTransient(f"{model.label} возвратна; используйте h()")
    if x == 0:
        return ResolventValue(0.0, 0.0, CLOSED_FORM)
    return extrapolate_q_to_zero(lambda q: h_q(model, q, x, engine).value, engine,
                                 f"h({x:g}) для {model.label}")


def hitting_laplace(model: LevyModel, q: float, x: float,
                    engine: QuadratureEngine = None) -> ResolventValue:
    """P_x[e^{−qT₀}] = r_q(−x)/r_q(0) = 1 − h_q(x)/r_q(0)"""
    engine = engine or QuadratureEngine()
    zero = _r_zero(model, q, engine)
    hq = h_q(model, q, x, engine)
    value = 1.0 - hq.value / zero.value
    error = (hq.error_estimate + abs(hq.value) * zero.error_estimate / zero.value) / zero.value
    method = CLOSED_FORM if hq.method == zero.method == CLOSED_FORM else QUADRATURE
    return ResolventValue(value, error, method)
