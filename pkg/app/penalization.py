"""
Мартингалы пенализации
M^(γ,f), условные ожидания для четырёх типов часов, законы обратного локального времени,
h-преобразование обусловливания и мартингал невозвратного случая
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Tuple, Union

import numpy as np
from scipy import integrate, special

from app.clocks import Clock, ExponentialClock, HittingClock, InverseLocalTimeClock, TwoPointClock
from app.errors import (
    InvalidClock,
    MissingLevelLocalTime,
    NotTransient,
    StartingPointNotInH,
    UnsupportedModel,
)
from app.potential import PotentialTable, two_point_limit_gamma
from app.weights import Exponential, IndicatorZero, WeightFunction, require_normalized, weight_tail

logger = logging.getLogger(__name__)

State = Union[float, np.ndarray]


@dataclass
class MartingaleState:
    """
    Состояние (X_t, L_t, t) траектории или ансамбля траекторий

    levels хранит локальные времена L^a_t на дополнительных уровнях,
    before_clock: признак t < момента срабатывания часов.
    """

    x_t: State
    l_t: State = 0.0
    t: float = 0.0
    alive: Union[bool, np.ndarray] = True
    levels: Dict[float, State] = field(default_factory=dict)
    before_clock: Union[bool, np.ndarray] = True

    def __post_init__(self):
        if np.any(np.asarray(self.l_t) < 0):
            raise ValueError("Локальное время l_t должно быть ≥ 0")
        if self.t < 0:
            raise ValueError("Время t должно быть ≥ 0")

    def level_local_time(self, a: float) -> State:
        try:
            return self.levels[a]
        except KeyError:
            raise MissingLevelLocalTime(f"В состоянии нет локального времени на уровне {a:g}") from None


def _as_output(value):
    return float(value) if np.ndim(value) == 0 else value


def _require_recurrent(table: PotentialTable, what: str):
    if table.transient:
        raise UnsupportedModel(f"{what} определён только для возвратных моделей, {table.model.label} невозвратна")


# Мартингал M^(γ,f)


def martingale_M(table: PotentialTable, f: WeightFunction, s: MartingaleState, gamma: float = None) -> State:
    """M_t^(γ,f) = h^(γ)(X_t)·f(L_t) + ∫₀^∞ f(L_t+u) du"""
    _require_recurrent(table, "M^(γ,f)")
    value = table.h_gamma(s.x_t, gamma) * np.asarray(f.value(s.l_t)) + f.tail(s.l_t)
    return _as_output(value)


# Условные ожидания по часам


def _exp_clock_conditional(table: PotentialTable, clock: ExponentialClock, f: WeightFunction,
                           s: MartingaleState) -> State:
    q = clock.q
    r0 = table.r_q0(q)
    hq = np.asarray(table.h_q(q, s.x_t))
    inner = hq * f.value(s.l_t) + (1 - hq / r0) * f.tilted_tail(s.l_t, 1.0 / r0)
    return math.exp(-q * s.t) * inner * np.asarray(s.before_clock, dtype=float)


def _hitting_clock_conditional(table: PotentialTable, clock: HittingClock, f: WeightFunction,
                               s: MartingaleState) -> State:
    a = clock.a
    hB = table.h_B(a)
    x = np.asarray(s.x_t, dtype=float)
    # h^B(a)·P_x(T_a < T₀) без деления
    weighted_hit = table.h(x) + table.h(-a) - table.h(x - a)
    p_zero_first = 1.0 - np.asarray(table.hit_prob_two(x, a, 0.0))
    inner = weighted_hit * f.value(s.l_t) + p_zero_first * f.tilted_tail(s.l_t, 1.0 / hB)
    return inner * np.asarray(s.before_clock, dtype=float)


def _two_point_clock_conditional(table: PotentialTable, clock: TwoPointClock, f: WeightFunction,
                                 s: MartingaleState) -> State:
    a, b = clock.levels
    hC = table.h_C(a, b)
    survival = np.asarray(table.survival_h_product(s.x_t, a, b))
    p_zero_first = np.asarray(table.hit_prob_three(s.x_t, 0.0, a, b))
    inner = survival * f.value(s.l_t) + p_zero_first * f.tilted_tail(s.l_t, 1.0 / hC)
    return inner * np.asarray(s.before_clock, dtype=float)


def _inverse_local_time_conditional(table: PotentialTable, clock: InverseLocalTimeClock,
                                    f: WeightFunction, s: MartingaleState) -> State:
    remaining = clock.u - np.asarray(s.level_local_time(clock.a), dtype=float)
    hB = table.h_B(clock.a)
    if remaining.ndim == 0:
        if remaining <= 0 or not np.all(s.before_clock):
            return np.zeros_like(np.asarray(s.x_t, dtype=float))
        law = inv_lt_law(table, clock.a, float(remaining), s.x_t, f, l=s.l_t)
        return hB * np.asarray(law)

    # Ансамбль: у каждой траектории своё оставшееся u
    x = np.broadcast_to(np.asarray(s.x_t, dtype=float), remaining.shape)
    l = np.broadcast_to(np.asarray(s.l_t, dtype=float), remaining.shape)
    running = np.broadcast_to(np.asarray(s.before_clock), remaining.shape) & (remaining > 0)
    out = np.zeros(remaining.shape)
    for i in np.flatnonzero(running):
        out[i] = hB * inv_lt_law(table, clock.a, float(remaining[i]), float(x[i]), f, l=float(l[i]))
    return out


def clock_conditional(table: PotentialTable, clock: Clock, f: WeightFunction, s: MartingaleState) -> State:
    """
    Нормированное условное ожидание N_t для часов clock

    Экспоненциальные часы: r_q(0)·P_x[f(L_{e_q}); t < e_q | F_t],
    часы достижения: h^B(a)·P_x[f(L_{T_a}); t < T_a | F_t],
    двухточечные: h^C(a, −b)·P_x[f(L_{T_a ∧ T_{−b}}); t < T_a ∧ T_{−b} | F_t],
    обратное локальное время: h^B(a)·P_x[f(L_{η^a_u}); t < η^a_u | F_t].
    """
    if isinstance(clock, ExponentialClock):
        value = _exp_clock_conditional(table, clock, f, s)
    elif isinstance(clock, TwoPointClock):
        _require_recurrent(table, "N^{a,b}")
        value = _two_point_clock_conditional(table, clock, f, s)
    elif isinstance(clock, HittingClock):
        _require_recurrent(table, "N^a")
        value = _hitting_clock_conditional(table, clock, f, s)
    elif isinstance(clock, InverseLocalTimeClock):
        _require_recurrent(table, "N^{a,u}")
        value = _inverse_local_time_conditional(table, clock, f, s)
    else:
        raise InvalidClock(f"Часы {clock!r} не поддерживаются для условных ожиданий")
    return _as_output(value)


def clock_limit_gamma(clock: Clock) -> float:
    """Наклон γ предельного мартингала для часов"""
    if isinstance(clock, ExponentialClock):
        return 0.0
    if isinstance(clock, TwoPointClock):
        return two_point_limit_gamma(clock.a, clock.b)
    if isinstance(clock, HittingClock):
        return math.copysign(1.0, clock.a)
    if isinstance(clock, InverseLocalTimeClock):
        return math.copysign(1.0, clock.a)
    raise InvalidClock(f"Для часов {clock!r} предел не определён")


def clock_limit(table: PotentialTable, clock: Clock, f: WeightFunction, s: MartingaleState) -> State:
    """Предельный мартингал M^(γ,f), к которому сходится N_t при расходящемся параметре часов"""
    return martingale_M(table, f, s, gamma=clock_limit_gamma(clock))


# Функции Бесселя и законы обратного локального времени


def bessel_I(nu: int, z, scaled: bool = False):
    """Модифицированная функция Бесселя I_ν(z), ν ∈ {0, 1}; scaled=True даёт e^{−z}I_ν(z)"""
    if nu not in (0, 1):
        raise ValueError(f"Поддерживаются только ν ∈ {{0, 1}}, получено {nu}")
    z = np.asarray(z, dtype=float)
    if np.any(z < 0):
        raise ValueError("z должно быть ≥ 0")
    value = special.ive(nu, z) if scaled else special.iv(nu, z)
    return _as_output(value)


def inv_lt_density(hB: float, u: float, y) -> Tuple[State, State]:
    """
    Плотности (ρ, ρ̃) закона L_{η^a_u} с параметром h^B(a) = hB

    Считаются через масштабированные функции Бесселя:
    e^{−(u+y)/a'}I_ν(z) = e^{−(√u−√y)²/a'}·ive(ν, z), z = 2√(uy)/a'.
    """
    if hB <= 0 or u <= 0:
        raise ValueError("Нужны hB > 0 и u > 0")
    y = np.asarray(y, dtype=float)
    if np.any(y < 0):
        raise ValueError("y должно быть ≥ 0")
    z = 2.0 * np.sqrt(u * y) / hB
    envelope = np.exp(-(math.sqrt(u) - np.sqrt(y)) ** 2 / hB)
    rho_tilde = envelope * special.ive(0, z)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(y > 0, special.ive(1, z) * np.sqrt(u / np.where(y > 0, y, 1.0)), 0.0)
    # y → 0+: √(u/y)·I₁(z) → u/a'
    ratio = np.where(y > 0, ratio, u / hB)
    rho = envelope * ratio / hB
    return _as_output(rho), _as_output(rho_tilde)


def _density_integral(f: WeightFunction, l: float, hB: float, u: float, which: int) -> float:
    """∫₀^∞ f(l+y)·ρ(y) dy (which=0) или ∫₀^∞ f(l+y)·ρ̃(y) dy (which=1)"""
    if isinstance(f, IndicatorZero):
        return 0.0
    if isinstance(f, Exponential):
        beta = f.beta
        scale = beta * math.exp(-beta * l)
        decay = math.exp(-u * beta / (1 + beta * hB))
        if which == 0:
            return scale * (decay - math.exp(-u / hB))
        return scale * hB * decay / (1 + beta * hB)

    def density(y):
        return inv_lt_density(hB, u, y)[which]

    pieces = f.pieces()
    if pieces:
        total = 0.0
        for lo, hi, v in pieces:
            lo_y, hi_y = max(lo - l, 0.0), hi - l
            if hi_y <= lo_y or v == 0:
                continue
            value, _ = integrate.quad(density, lo_y, hi_y, limit=200)
            total += v * value
        return total

    value, _ = integrate.quad(lambda y: f.value(l + y) * density(y), 0.0, np.inf, limit=200)
    return value


def inv_lt_law(table: PotentialTable, a: float, u: float, x, f: WeightFunction, l: float = 0.0) -> State:
    """
    P_x[f(l + L_{η^a_u})]

    = P_x(T_a<T₀)·[e^{−u/h^B}f(l) + ∫f(l+y)ρ(y)dy] + P_x(T₀<T_a)/h^B·∫f(l+y)ρ̃(y)dy
    """
    if a == 0:
        raise InvalidClock("Уровень a должен быть ненулевым")
    if u <= 0:
        raise InvalidClock(f"u должно быть > 0, получено {u}")
    hB = table.h_B(a)
    p_a_first = np.asarray(table.hit_prob_two(x, a, 0.0))
    p_zero_first = np.asarray(table.hit_prob_two(x, 0.0, a))
    l_arr = np.asarray(l, dtype=float)

    if l_arr.ndim == 0:
        rho_part = _density_integral(f, float(l_arr), hB, u, 0)
        rho_tilde_part = _density_integral(f, float(l_arr), hB, u, 1)
    else:
        rho_part = np.array([_density_integral(f, float(v), hB, u, 0) for v in l_arr.ravel()]).reshape(l_arr.shape)
        rho_tilde_part = np.array([_density_integral(f, float(v), hB, u, 1) for v in l_arr.ravel()]).reshape(l_arr.shape)

    atom = math.exp(-u / hB) * np.asarray(f.value(l_arr))
    value = p_a_first * (atom + rho_part) + p_zero_first / hB * rho_tilde_part
    return _as_output(value)


def M_beta_a(table: PotentialTable, a: float, beta: float, s: MartingaleState) -> State:
    """
    Предел при u → ∞ мартингала e^{βu/(1+βh^B(a))}·P_x[e^{−βL_{η^a_u}} | F_t]

    Множитель e^{βL^a_t/(1+βh^B(a))} входит в оба слагаемых: при X_t = a значение
    e^{−βL_t}·e^{βL^a_t/(1+βh^B(a))} не зависит от числа уже накопленных возвращений в a.
    """
    if not beta > 0:
        raise ValueError(f"beta должна быть > 0, получено {beta}")
    l_a = np.asarray(s.level_local_time(a), dtype=float)
    hB = table.h_B(a)
    damp = 1.0 + beta * hB
    p_a_first = np.asarray(table.hit_prob_two(s.x_t, a, 0.0))
    p_zero_first = np.asarray(table.hit_prob_two(s.x_t, 0.0, a))
    value = np.exp(-beta * np.asarray(s.l_t) + beta * l_a / damp) * (p_a_first + p_zero_first / damp)
    return _as_output(value)


def M_inf_a(table: PotentialTable, a: float, s: MartingaleState) -> State:
    """e^{L^a_t/h^B(a)}·P_{X_t}(T_a < T₀)·1{t < T₀}"""
    l_a = np.asarray(s.level_local_time(a), dtype=float)
    hB = table.h_B(a)
    p_a_first = np.asarray(table.hit_prob_two(s.x_t, a, 0.0))
    value = np.exp(l_a / hB) * p_a_first * np.asarray(s.alive, dtype=float)
    return _as_output(value)


def inv_u_limit_martingales(table: PotentialTable, a: float, beta: float, s: MartingaleState) -> State:
    """M^{β,a}_t для конечного β, M^{∞,a}_t для β = ∞"""
    _require_recurrent(table, "M^{β,a}")
    if math.isinf(beta):
        return M_inf_a(table, a, s)
    return M_beta_a(table, a, beta, s)


# Обусловливание избегать нуля и невозвратный случай


def avoid_zero_weight(table: PotentialTable, x: float, s: MartingaleState, gamma: float = None) -> State:
    """Плотность P_x^(γ) относительно P_x на F_t: 1{t < T₀}·h^(γ)(X_t)/h^(γ)(x)"""
    start = table.h_gamma(x, gamma)
    if x == 0 or start <= 0:
        raise StartingPointNotInH(f"h^(γ)({x:g}) = {start:.6g}: точка не принадлежит H^(γ)")
    value = np.asarray(s.alive, dtype=float) * np.asarray(table.h_gamma(s.x_t, gamma)) / start
    return _as_output(value)


def transient_martingale(table: PotentialTable, f: WeightFunction, s: MartingaleState) -> State:
    """h(X_t)f(L_t) + (1 − κh(X_t))·∫₀^∞ e^{−κu} f(L_t+u) du"""
    if not table.transient:
        raise NotTransient(f"{table.model.label} возвратна: мартингал невозвратного случая не определён")
    hx = np.asarray(table.h(s.x_t))
    value = hx * f.value(s.l_t) + (1 - table.kappa * hx) * f.tilted_tail(s.l_t, table.kappa)
    return _as_output(value)


def transient_limit_law(table: PotentialTable, f: WeightFunction, x) -> State:
    """P_x[f(L_∞)] = κ·M₀"""
    return _as_output(table.kappa * np.asarray(transient_martingale(table, f, MartingaleState(x_t=x))))


def penalized_local_time_cdf(f: WeightFunction, l) -> State:
    """Q^(γ,f)(L_∞ ≥ l) = ∫_l^∞ f(u) du; не зависит от γ"""
    require_normalized(f)
    return weight_tail(f, l)
