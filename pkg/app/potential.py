"""
Теория потенциала для процессов Леви
Наклонённые инвариантные функции h^(γ), h^B, h^C, вероятности достижения, интенсивности экскурсий
"""

import logging
import math
import threading
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np

from app import config
from app.errors import DegenerateDenominator, NotTransient, QuadratureNoConvergence
from app.levy_models import BrownianDiffusion, LevyModel, StrictlyStable
from app.resolvent import QuadratureEngine, ResolventValue, h as h_resolvent, h_q, killing_rate, resolvent_density
from app.weights import WeightFunction

logger = logging.getLogger(__name__)

# Шаг ключа мемо-таблицы
MEMO_DIGITS = 12


@dataclass(frozen=True)
class ExcursionRates:
    """Интенсивности экскурсий: n(T_a < T₀) и n(T_a < T₀ < ∞)"""

    hit_before_zero: float
    hit_then_return: float


class PotentialTable:
    """
    Производные функции от h для одной модели

    Значения h кэшируются по округлённому аргументу; кэш защищён блокировкой на запись.
    Функции состояния принимают как скаляры, так и массивы numpy.
    """

    def __init__(self, model: LevyModel, engine: QuadratureEngine = None, gamma: float = 0.0,
                 grid_step: float = 0.05, clamp_budget: float = config.PROB_CLAMP_BUDGET):
        if not -1.0 <= gamma <= 1.0:
            raise ValueError(f"gamma должна лежать в [−1, 1], получено {gamma}")
        self.model = model
        self.engine = engine or QuadratureEngine()
        self.gamma = gamma
        self.grid_step = grid_step
        self.clamp_budget = clamp_budget
        self.kappa = killing_rate(model, self.engine).value if not model.recurrent else 0.0
        self._memo: Dict[float, ResolventValue] = {}
        self._hq_memo: Dict[Tuple[float, float], float] = {}
        self._lock = threading.Lock()
        self._grid: Optional[Tuple[np.ndarray, np.ndarray]] = None

    @property
    def transient(self) -> bool:
        return self.kappa > 0

    @property
    def tilt_slope(self) -> float:
        """Множитель 1/m² при наклоне; ноль при m² = ∞"""
        m2 = self.model.m2
        return 0.0 if not math.isfinite(m2) or not self.model.recurrent else 1.0 / m2

    # Значения h

    def h_value(self, x: float) -> ResolventValue:
        """h(x) со своей оценкой погрешности (через кэш)"""
        key = round(float(x), MEMO_DIGITS)
        cached = self._memo.get(key)
        if cached is not None:
            return cached
        value = h_resolvent(self.model, key, self.engine)
        with self._lock:
            self._memo.setdefault(key, value)
        return value

    def h(self, x):
        """h(x) для скаляра или массива"""
        if np.ndim(x) == 0:
            return self.h_value(float(x)).value
        return self.h_array(np.asarray(x, dtype=float))

    def h_err(self, x) -> float:
        if np.ndim(x) == 0:
            return self.h_value(float(x)).error_estimate
        if self._closed_form_available():
            return 0.0
        return self.grid_step ** 2

    def _closed_form_available(self) -> bool:
        return isinstance(self.model, (BrownianDiffusion, StrictlyStable))

    def h_array(self, xs: np.ndarray) -> np.ndarray:
        """Векторное h: замкнутая форма или интерполяция по сетке квадратурных значений"""
        if isinstance(self.model, BrownianDiffusion):
            return np.abs(xs) / self.model.sigma ** 2
        if isinstance(self.model, StrictlyStable):
            return self.model.closed_form_h(xs)
        if xs.size == 0:
            return xs.copy()
        grid_x, grid_h = self._ensure_grid(float(np.min(xs)), float(np.max(xs)))
        return np.interp(xs, grid_x, grid_h)

    def _ensure_grid(self, lo: float, hi: float) -> Tuple[np.ndarray, np.ndarray]:
        step = self.grid_step
        lo = math.floor(lo / step) * step
        hi = math.ceil(hi / step) * step
        if self._grid is not None:
            gx, gh = self._grid
            if gx[0] <= lo and gx[-1] >= hi:
                return gx, gh
            lo, hi = min(lo, gx[0]), max(hi, gx[-1])
        n = int(round((hi - lo) / step)) + 1
        grid_x = lo + step * np.arange(n)
        logger.debug(f"Сетка h для {self.model.label}: [{lo:g}, {hi:g}], {n} узлов")
        grid_h = np.array([self.h_value(round(x, 9)).value for x in grid_x])
        with self._lock:
            self._grid = (grid_x, grid_h)
        return grid_x, grid_h

    def h_q(self, q: float, x):
        """h_q(x) для скаляра или массива (поэлементно, с кэшем)"""
        if np.ndim(x) == 0:
            key = (q, round(float(x), MEMO_DIGITS))
            if key not in self._hq_memo:
                value = h_q(self.model, q, key[1], self.engine).value
                with self._lock:
                    self._hq_memo[key] = value
            return self._hq_memo[key]
        xs = np.asarray(x, dtype=float)
        return np.vectorize(lambda v: self.h_q(q, float(v)))(xs)

    def r_q0(self, q: float) -> float:
        return resolvent_density(self.model, q, 0.0, self.engine).value

    # Наклонённая функция и величины, связанные с достижением

    def h_gamma(self, x, gamma: Optional[float] = None):
        """h^(γ)(x) = h(x) + γx/m²; при m² = ∞ наклон равен нулю"""
        gamma = self.gamma if gamma is None else gamma
        if not -1.0 <= gamma <= 1.0:
            raise ValueError(f"gamma должна лежать в [−1, 1], получено {gamma}")
        value = self.h(x) + gamma * self.tilt_slope * np.asarray(x, dtype=float)
        return _scalar(value)

    def h_B(self, a: float) -> float:
        """h^B(a) = P₀[L_{T_a}]"""
        if a == 0:
            raise ValueError("a должно быть ненулевым")
        ha, hma = self.h(a), self.h(-a)
        if self.transient:
            return ha + hma - self.kappa * ha * hma
        return ha + hma

    def _h_B_err(self, a: float) -> float:
        return self.h_err(a) + self.h_err(-a)

    def h_C(self, a: float, b: float) -> float:
        """
        h^C(a, b) = P₀[L_{T_a ∧ T_b}]

        Разложение по первой из точек: P₀(T_a<T_b)·h(a) + P₀(T_b<T_a)·h(b),
        для невозвратной модели плюс P₀(T_a ∧ T_b = ∞)/κ.
        """
        if a == b or a == 0 or b == 0:
            raise ValueError("Нужны a ≠ b, обе ненулевые")
        p_a = self.hit_prob_two(0.0, a, b)
        p_b = self.hit_prob_two(0.0, b, a)
        value = p_a * self.h(a) + p_b * self.h(b)
        if self.transient:
            value += max(1.0 - p_a - p_b, 0.0) / self.kappa
        return float(value)

    def _denominator(self, d: float) -> float:
        den = self.h_B(d)
        tol = max(10 * self.engine.abs_tol, 10 * self._h_B_err(d))
        if den <= tol:
            raise DegenerateDenominator(f"h^B({d:g}) = {den:.3g} не превышает допуска {tol:.3g}")
        return den

    def hit_prob_two(self, x, a: float, b: float):
        """P_x(T_a < T_b)"""
        value, _ = self.hit_prob_two_budget(x, a, b)
        return value

    def hit_prob_two_budget(self, x, a: float, b: float):
        """P_x(T_a < T_b) и бюджет погрешности"""
        if a == b:
            raise ValueError("Нужно a ≠ b")
        den = self._denominator(a - b)
        x_arr = np.asarray(x, dtype=float)
        h = self.h
        num = h(b - a) + h(x_arr - b) - h(x_arr - a)
        if self.transient:
            num = num - self.kappa * h(x_arr - b) * h(b - a)
        value = num / den
        err_num = self.h_err(b - a) + self.h_err(x_arr - b) + self.h_err(x_arr - a)
        budget = max(self.clamp_budget,
                     float(np.max(err_num + np.abs(value) * self._h_B_err(a - b))) / den)
        return self._clamp(value, budget, f"P_x(T_{a:g} < T_{b:g})"), budget

    def hit_prob_three(self, x, a: float, b: float, c: float):
        """P_x(T_a < T_b ∧ T_c) через двухточечные вероятности"""
        if a in (b, c):
            raise ValueError("Нужно a ∉ {b, c}")
        if c == b:
            return self.hit_prob_two(x, a, b)
        p_xab = self.hit_prob_two(x, a, b)
        p_xcb = self.hit_prob_two(x, c, b)
        p_cab = self.hit_prob_two(c, a, b)
        p_acb = self.hit_prob_two(a, c, b)
        den = 1.0 - p_acb * p_cab
        if den <= self.clamp_budget:
            raise DegenerateDenominator(f"1 − P_a(T_c<T_b)P_c(T_a<T_b) = {den:.3g}")
        value = (np.asarray(p_xab) - np.asarray(p_xcb) * p_cab) / den
        return self._clamp(value, 10 * self.clamp_budget, f"P_x(T_{a:g} < T_{b:g} ∧ T_{c:g})")

    def _clamp(self, value, budget: float, what: str):
        arr = np.asarray(value, dtype=float)
        if np.any(arr < -budget) or np.any(arr > 1 + budget):
            raise QuadratureNoConvergence(
                f"{what} = {arr.min():.6g}…{arr.max():.6g} вне [0, 1] больше чем на {budget:.3g}")
        if np.any(arr < 0) or np.any(arr > 1):
            logger.warning(f"{what}: значение обрезано до [0, 1] (бюджет {budget:.3g})")
        return _scalar(np.clip(arr, 0.0, 1.0))

    def excursion_rate(self, a: float) -> ExcursionRates:
        """n(T_a < T₀) и n(T_a < T₀ < ∞); для возвратных обе равны 1/h^B(a)"""
        hB = self._denominator(a)
        if not self.transient:
            return ExcursionRates(hit_before_zero=1.0 / hB, hit_then_return=1.0 / hB)
        return ExcursionRates(
            hit_before_zero=(1.0 - self.kappa * self.h(-a)) / hB,
            hit_then_return=(1.0 - self.kappa * hB) / hB,
        )

    def avoid_zero_prob(self, x):
        """P_x(T₀ = ∞) = κ·h(x)"""
        if not self.transient:
            raise NotTransient(f"{self.model.label} возвратна: P_x(T₀ = ∞) = 0")
        value = self.kappa * np.asarray(self.h(x))
        return self._clamp(value, self.clamp_budget, "κh(x)")

    # Законы локального времени в случайные моменты

    def exp_clock_law(self, q: float, x: float, f: WeightFunction) -> float:
        """P_x[f(L_{e_q})]"""
        r0 = self.r_q0(q)
        hq = self.h_q(q, x)
        return (hq * f.value(0.0) + (1 - hq / r0) * f.tilted_tail(0.0, 1.0 / r0)) / r0

    def hitting_clock_law(self, a: float, x: float, f: WeightFunction) -> float:
        """P_x[f(L_{T_a})]"""
        p_zero = self.hit_prob_two(x, 0.0, a)
        hB = self.h_B(a)
        return (1 - p_zero) * f.value(0.0) + p_zero / hB * f.tilted_tail(0.0, 1.0 / hB)

    def two_point_law(self, a: float, b: float, x: float, f: WeightFunction) -> float:
        """P_x[f(L_{T_a ∧ T_b})]"""
        p_zero = self.hit_prob_three(x, 0.0, a, b)
        hC = self.h_C(a, b)
        return (1 - p_zero) * f.value(0.0) + p_zero / hC * f.tilted_tail(0.0, 1.0 / hC)

    def survival_h_product(self, x, a: float, b: float):
        """h^C(a, b)·P_x(T₀ > T_a ∧ T_b)"""
        return _scalar(self.h_C(a, b) * (1 - np.asarray(self.hit_prob_three(x, 0.0, a, b))))


def two_point_limit_gamma(a: float, b: float) -> float:
    """Наклон, к которому сходятся двухточечные часы с целями a и −b"""
    return (b - a) / (a + b)


def _scalar(arr):
    return float(arr) if np.ndim(arr) == 0 else arr
