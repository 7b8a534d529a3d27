"""
Весовые функции f ∈ L¹₊
Замкнутая алгебра весов с точными хвостами ∫₀^∞ f(l+u) du и их экспоненциальными наклонами
"""

import logging
import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from app.errors import UnnormalizedWeight

logger = logging.getLogger(__name__)


class WeightFunction:
    """Неотрицательная интегрируемая функция с точными хвостами"""

    kind = "abstract"

    def value(self, u):
        raise NotImplementedError

    def tail(self, l):
        """∫₀^∞ f(l+u) du"""
        raise NotImplementedError

    def tilted_tail(self, l, rate: float):
        """∫₀^∞ e^{−rate·u} f(l+u) du"""
        raise NotImplementedError

    @property
    def total(self) -> float:
        return float(self.tail(0.0))

    def pieces(self) -> Tuple[Tuple[float, float, float], ...]:
        """Кусочно-постоянное представление (lo, hi, value), если есть"""
        return ()


@dataclass(frozen=True)
class Exponential(WeightFunction):
    """f(u) = β·e^{−βu}, ∫f = 1"""

    beta: float = 1.0
    kind = "exp"

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError(f"beta должна быть > 0, получено {self.beta}")

    def value(self, u):
        u = np.asarray(u, dtype=float)
        return _scalar(self.beta * np.exp(-self.beta * u))

    def tail(self, l):
        return _scalar(np.exp(-self.beta * np.asarray(l, dtype=float)))

    def tilted_tail(self, l, rate: float):
        l = np.asarray(l, dtype=float)
        return _scalar(self.beta * np.exp(-self.beta * l) / (self.beta + rate))


@dataclass(frozen=True)
class IndicatorZero(WeightFunction):
    """f(u) = 1{u = 0}: хвост равен нулю, вес сосредоточен на событии L = 0"""

    kind = "zero"

    def value(self, u):
        u = np.asarray(u, dtype=float)
        return _scalar((u == 0).astype(float))

    def tail(self, l):
        return _scalar(np.zeros_like(np.asarray(l, dtype=float)))

    def tilted_tail(self, l, rate: float):
        return self.tail(l)


@dataclass(frozen=True)
class StepTable(WeightFunction):
    """
    Ступенчатая функция: values[i] на [breakpoints[i], breakpoints[i+1])

    Первая точка разбиения равна 0, за последней f = 0.
    """

    breakpoints: Tuple[float, ...] = (0.0, 1.0)
    values: Tuple[float, ...] = (1.0,)
    kind = "step"

    def __post_init__(self):
        b = self.breakpoints
        if len(b) != len(self.values) + 1:
            raise ValueError("Точек разбиения должно быть на одну больше, чем значений")
        if b[0] != 0 or any(hi <= lo for lo, hi in zip(b, b[1:])):
            raise ValueError("Точки разбиения должны начинаться с 0 и строго возрастать")
        if any(v < 0 for v in self.values) or not all(math.isfinite(v) for v in self.values):
            raise ValueError("Значения ступенек должны быть конечными и ≥ 0")

    def pieces(self):
        b = self.breakpoints
        return tuple((b[i], b[i + 1], self.values[i]) for i in range(len(self.values)))

    def value(self, u):
        u = np.asarray(u, dtype=float)
        b = np.asarray(self.breakpoints)
        idx = np.searchsorted(b, u, side="right") - 1
        inside = (idx >= 0) & (idx < len(self.values))
        vals = np.asarray(self.values)[np.clip(idx, 0, len(self.values) - 1)]
        return _scalar(np.where(inside, vals, 0.0))

    def tail(self, l):
        return self.tilted_tail(l, 0.0)

    def tilted_tail(self, l, rate: float):
        l = np.asarray(l, dtype=float)
        total = np.zeros_like(l)
        for lo, hi, v in self.pieces():
            start = np.maximum(lo, l)
            active = hi > start
            if rate == 0:
                piece = hi - start
            else:
                piece = (np.exp(-rate * (start - l)) - np.exp(-rate * (hi - l))) / rate
            total = total + np.where(active, v * piece, 0.0)
        return _scalar(total)


def _scalar(arr):
    return float(arr) if np.ndim(arr) == 0 else arr


def weight_tail(f: WeightFunction, l: float) -> float:
    """Точный хвост ∫₀^∞ f(l+u) du; невозрастающий по l"""
    if np.any(np.asarray(l) < 0):
        raise ValueError("l должно быть ≥ 0")
    return f.tail(l)


def exp_tilted_tail(f: WeightFunction, l, rate: float):
    """∫₀^∞ e^{−rate·u} f(l+u) du для любого варианта"""
    if rate < 0:
        raise ValueError("rate должна быть ≥ 0")
    return f.tilted_tail(l, rate)


def require_normalized(f: WeightFunction, tol: float = 1e-12):
    """Проверка ∫f = 1"""
    if abs(f.total - 1.0) > tol:
        raise UnnormalizedWeight(f"∫f = {f.total:.12g}, требуется 1")


def parse_weight(text: str) -> WeightFunction:
    """
    Разбор веса из строки CLI

    Форматы: 'exp:beta=1', 'zero', 'step:breaks=0,1,2;values=1,0.5'
    """
    text = text.strip()
    kind, _, rest = text.partition(":")
    params = {}
    for item in filter(None, rest.split(";")):
        key, _, raw = item.partition("=")
        params[key.strip()] = raw.strip()

    if kind == "exp":
        return Exponential(beta=float(params.get("beta", "1")))
    if kind == "zero":
        return IndicatorZero()
    if kind == "step":
        breaks = tuple(float(v) for v in params["breaks"].split(","))
        values = tuple(float(v) for v in params["values"].split(","))
        return StepTable(breakpoints=breaks, values=values)
    raise ValueError(f"Неизвестный вес '{text}', допустимо exp:beta=…, zero, step:breaks=…;values=…")
