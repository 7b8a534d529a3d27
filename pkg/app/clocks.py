"""
Случайные часы
Экспоненциальные, часы первого достижения уровня(ей) и часы обратного локального времени
"""

import logging
from dataclasses import dataclass
from typing import Tuple

from app.errors import InvalidClock

logger = logging.getLogger(__name__)


class Clock:
    """Базовый класс часов"""

    name = "clock"


@dataclass(frozen=True)
class ExponentialClock(Clock):
    """Независимое экспоненциальное время e_q со средним 1/q"""

    q: float
    name = "exp"

    def __post_init__(self):
        if not self.q > 0:
            raise InvalidClock(f"q должно быть > 0, получено {self.q}")


@dataclass(frozen=True)
class FirstPassageClock(Clock):
    """Первое достижение одного из уровней levels"""

    levels: Tuple[float, ...]
    name = "first-passage"

    def __post_init__(self):
        if not self.levels:
            raise InvalidClock("Нужен хотя бы один уровень")
        if len(set(self.levels)) != len(self.levels):
            raise InvalidClock(f"Уровни должны быть различны: {self.levels}")


class HittingClock(FirstPassageClock):
    """T_a: первое достижение точки a ≠ 0"""

    name = "hit"

    def __init__(self, a: float):
        if a == 0:
            raise InvalidClock("Уровень a должен быть ненулевым")
        super().__init__(levels=(float(a),))

    @property
    def a(self) -> float:
        return self.levels[0]


class TwoPointClock(FirstPassageClock):
    """T_a ∧ T_{−b} при a, b > 0"""

    name = "twopoint"

    def __init__(self, a: float, b: float):
        if not (a > 0 and b > 0):
            raise InvalidClock(f"Для двухточечных часов нужны a, b > 0, получено a={a}, b={b}")
        super().__init__(levels=(float(a), -float(b)))

    @property
    def a(self) -> float:
        return self.levels[0]

    @property
    def b(self) -> float:
        return -self.levels[1]


@dataclass(frozen=True)
class InverseLocalTimeClock(Clock):
    """η^a_u: момент, когда локальное время на уровне a превысит u"""

    a: float
    u: float
    name = "invlt"

    def __post_init__(self):
        if self.a == 0:
            raise InvalidClock("Уровень a должен быть ненулевым")
        if not self.u > 0:
            raise InvalidClock(f"u должно быть > 0, получено {self.u}")


def parse_clock(text: str) -> Clock:
    """
    Разбор часов из строки CLI

    Форматы: 'exp:q=1', 'hit:a=1', 'twopoint:a=1,b=1', 'invlt:a=1,u=1', 'levels:1,-1,2'
    """
    kind, _, rest = text.strip().partition(":")
    if kind == "levels":
        return FirstPassageClock(levels=tuple(float(v) for v in rest.split(",")))
    params = {}
    for item in filter(None, rest.split(",")):
        key, _, raw = item.partition("=")
        try:
            params[key.strip()] = float(raw)
        except ValueError as e:
            raise InvalidClock(f"Параметр '{key}' часов: ожидалось число") from e

    try:
        if kind == "exp":
            return ExponentialClock(q=params["q"])
        if kind == "hit":
            return HittingClock(params["a"])
        if kind == "twopoint":
            return TwoPointClock(params["a"], params["b"])
        if kind == "invlt":
            return InverseLocalTimeClock(a=params["a"], u=params["u"])
    except KeyError as e:
        raise InvalidClock(f"Не хватает параметра {e} для часов '{kind}'") from e
    raise InvalidClock(f"Неизвестные часы '{text}'; допустимо exp, hit, twopoint, invlt, levels")
