"""
Проверочный набор
Каждое утверждение теории превращается в воспроизводимую строку отчёта: статистическую (3σ)
или детерминированную (допуск)
"""

import logging
import math
from dataclasses import asdict, dataclass, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import stats

from app import config
from app.clocks import ExponentialClock, FirstPassageClock, HittingClock, InverseLocalTimeClock, TwoPointClock
from app.errors import ExtrapolationUnstable, QuadratureNoConvergence, UnsupportedModel
from app.levy_models import BrownianDiffusion, DriftedBrownian, LevyModel, StrictlyStable, load_model
from app.penalization import (
    MartingaleState,
    avoid_zero_weight,
    clock_conditional,
    clock_limit,
    inv_lt_law,
    inv_u_limit_martingales,
    martingale_M,
    penalized_local_time_cdf,
    transient_limit_law,
    transient_martingale,
)
from app.potential import PotentialTable
from app.resolvent import (
    EXTRAPOLATION,
    QUADRATURE,
    QuadratureEngine,
    h as h_value,
    h_D,
    h_q,
    h_S,
    hitting_laplace,
    resolvent_density,
)
from app.simulation import DIFFUSION, SimConfig, hit_detection, simulate_ensemble, summarize
from app.weights import Exponential, WeightFunction

logger = logging.getLogger(__name__)

STATISTICAL = "statistical"
DETERMINISTIC = "deterministic"
THRESHOLD = "threshold"

SIGMA_LIMIT = 3.0
KS_LEVEL = 0.01
RETRY_FACTOR = 4
RETRY_SUBSTREAM = 1000

# Путь для quick-режима уменьшается в 10 раз
QUICK_DIVISOR = 10
BROWNIAN_PATHS = 100_000
STABLE_PATHS = 50_000

SUITES = ("h", "hitting", "martingale", "clocks", "penalized", "transient")


@dataclass
class MCReport:
    """Строка отчёта проверки"""

    test_name: str
    model: str
    parameters: Dict[str, Union[float, str]]
    estimate: float
    stderr: Optional[float]
    target: float
    sigmas: Optional[float]
    deterministic_tol: Optional[float]
    passed: bool
    kind: str = STATISTICAL
    sigma_limit: float = SIGMA_LIMIT
    attempts: int = 1

    @classmethod
    def statistical(cls, test_name: str, model: str, parameters: Dict, estimate: float, stderr: float,
                    target: float, sigma_limit: float = SIGMA_LIMIT) -> "MCReport":
        if stderr > 0:
            sigmas = abs(estimate - target) / stderr
        else:
            sigmas = 0.0 if estimate == target else math.inf
        return cls(test_name, model, parameters, float(estimate), float(stderr), float(target),
                   float(sigmas), None, bool(sigmas <= sigma_limit), STATISTICAL, sigma_limit)

    @classmethod
    def deterministic(cls, test_name: str, model: str, parameters: Dict, estimate: float, target: float,
                      tol: float) -> "MCReport":
        passed = bool(abs(estimate - target) <= tol)
        return cls(test_name, model, parameters, float(estimate), None, float(target), None, float(tol),
                   passed, DETERMINISTIC)

    @classmethod
    def threshold(cls, test_name: str, model: str, parameters: Dict, estimate: float,
                  target: float) -> "MCReport":
        """Проходит, если estimate > target (например, p-значение критерия)"""
        return cls(test_name, model, parameters, float(estimate), None, float(target), None, None,
                   bool(estimate > target), THRESHOLD)

    def to_dict(self) -> Dict:
        data = asdict(self)
        for key in ("estimate", "stderr", "target", "sigmas"):
            value = data[key]
            if value is not None and not math.isfinite(value):
                data[key] = None
        data["pass"] = data.pop("passed")
        return data


def _params(**kwargs) -> Dict[str, Union[float, str]]:
    return {k: (float(v) if isinstance(v, (int, float, np.floating)) else str(v)) for k, v in kwargs.items()}


# Свойства h


def test_h_properties(model: LevyModel, engine: QuadratureEngine = None, seed: int = config.LEVY_SEED,
                      n_pairs: int = 1000) -> List[MCReport]:
    """Субаддитивность, h(0) = 0, наклоны на бесконечности и предел разностей"""
    engine = engine or QuadratureEngine()
    table = PotentialTable(model, engine)
    label = model.label
    rows = [MCReport.deterministic("h_zero", label, {}, table.h(0.0), 0.0, engine.abs_tol)]

    rng = np.random.default_rng(seed)
    pairs = rng.uniform(-5.0, 5.0, size=(n_pairs, 2))
    xs, ys = pairs[:, 0], pairs[:, 1]
    violation = table.h(xs + ys) - table.h(xs) - table.h(ys)
    budget = 3 * table.h_err(xs) + 1e-8
    rows.append(MCReport.deterministic("h_subadditivity", label, _params(pairs=n_pairs),
                                       max(float(np.max(violation)), 0.0), 0.0, budget))

    far = 1e3
    slope = 1.0 / model.m2 if math.isfinite(model.m2) else 0.0
    for sign in (1.0, -1.0):
        estimate = table.h(sign * far) / far
        tol = 0.02 * slope if slope > 0 else 0.02
        rows.append(MCReport.deterministic("h_slope", label, _params(x=sign * far), estimate, slope, tol))
        difference = table.h(sign * far + 1.0) - table.h(sign * far)
        rows.append(MCReport.deterministic("h_difference_limit", label, _params(x=1.0, y=sign * far),
                                           difference, sign * slope, tol))

    for x in (0.5, 1.0, 2.0):
        symmetric = h_S(model, x, engine)
        target = table.h(x) + table.h(-x)
        tol = 10 * (symmetric.error_estimate + table.h_err(x) + table.h_err(-x)) + 1e-7 * max(target, 1)
        rows.append(MCReport.deterministic("h_S_identity", label, _params(x=x), symmetric.value, target, tol))
    for x, y in ((1.0, 0.5), (1.0, -3.0), (0.5, 2.0)):
        second = h_D(model, x, y, engine)
        target = table.h(y + 2 * x) - 2 * table.h(y + x) + table.h(y)
        tol = 10 * (second.error_estimate + 4 * table.h_err(y + x)) + 1e-7
        rows.append(MCReport.deterministic("h_D_identity", label, _params(x=x, y=y), second.value, target, tol))

    if isinstance(model, StrictlyStable):
        rows += test_stable_closed_form(model, engine)
    if isinstance(model, BrownianDiffusion):
        rows += test_brownian_closed_forms(model, engine)
    return rows


def test_stable_closed_form(model: StrictlyStable, engine: QuadratureEngine = None,
                            xs: Sequence[float] = (-4.0, -2.0, -1.0, -0.5, 0.5, 1.0, 2.0, 4.0)) -> List[MCReport]:
    """Замкнутая форма h устойчивого процесса против экстраполяции h_q при q → 0"""
    engine = engine or QuadratureEngine()
    worst = 0.0
    for x in xs:
        closed = float(model.closed_form_h(x))
        try:
            extrapolated = h_value(model, x, engine, method=EXTRAPOLATION).value
        except (QuadratureNoConvergence, ExtrapolationUnstable) as e:
            logger.error(f"❌ h({x:g}) для {model.label}: {e}")
            extrapolated = math.inf
        worst = max(worst, abs(extrapolated - closed) / abs(closed))
    return [MCReport.deterministic("h_stable_closed_form", model.label, _params(points=len(xs)),
                                   worst, 0.0, 1e-4)]


def test_brownian_closed_forms(model: BrownianDiffusion, engine: QuadratureEngine = None,
                               qs: Sequence[float] = (1e-3, 1e-2, 1e-1, 1.0)) -> List[MCReport]:
    """Квадратуры r_q и h_q против замкнутых форм броуновского движения"""
    engine = engine or QuadratureEngine()
    worst_r = worst_h = 0.0
    for q in qs:
        for x in np.linspace(-5.0, 5.0, 11):
            exact_r = resolvent_density(model, q, x, engine).value
            exact_h = h_q(model, q, x, engine).value
            worst_r = max(worst_r, abs(resolvent_density(model, q, x, engine, method=QUADRATURE).value - exact_r))
            worst_h = max(worst_h, abs(h_q(model, q, x, engine, method=QUADRATURE).value - exact_h))
    return [
        MCReport.deterministic("r_q_closed_form", model.label, _params(qs=len(qs)), worst_r, 0.0, 1e-8),
        MCReport.deterministic("h_q_closed_form", model.label, _params(qs=len(qs)), worst_h, 0.0, 1e-8),
    ]


# Достижение точек и локальное время


def test_exponential_local_time(model: LevyModel, a: float, cfg: SimConfig, engine: QuadratureEngine = None,
                                substream: int = 0) -> List[MCReport]:
    """L_{T_a} под P₀ экспоненциально со средним h^B(a): среднее и критерий Колмогорова–Смирнова"""
    table = PotentialTable(model, engine)
    target = table.h_B(a)
    outcome = simulate_ensemble(model, 0.0, cfg, clock=HittingClock(a), substream=substream)
    samples = outcome.l_zero[outcome.rang]
    est = summarize(samples, outcome.censoring_rate)
    params = _params(a=a, n=est.n_used, censoring=outcome.censoring_rate)
    ks = stats.kstest(samples, "expon", args=(0.0, target))
    return [
        MCReport.statistical("local_time_at_hit_mean", model.label, params, est.mean, est.stderr, target),
        MCReport.threshold("local_time_at_hit_ks", model.label, _params(a=a, statistic=ks.statistic),
                           float(ks.pvalue), KS_LEVEL),
        _censoring_row("local_time_at_hit_censoring", model.label, params, outcome.censoring_rate),
    ]


def _censoring_row(name: str, label: str, params: Dict, rate: float) -> MCReport:
    return MCReport.deterministic(name, label, params, rate, 0.0, 0.01)


HitCase = Tuple[float, ...]


def default_hit_cases() -> Dict[str, List[HitCase]]:
    """Набор случаев (x, a, b) и (x, a, b, c) по пресетам"""
    return {
        "bm": [(0.0, -1.0, 2.0), (0.0, 1.0, -1.0), (0.5, 1.0, -1.0)],
        "stable-sym-1.5": [(0.0, 1.0, -1.0), (0.0, -1.0, 2.0), (0.5, 1.0, -1.0), (0.0, 1.0, -1.0, 0.5)],
        "stable-asym-1.5": [(0.0, 1.0, -1.0), (0.0, -1.0, 2.0), (0.0, 1.0, -1.0, 2.0)],
        "kou": [(0.0, 1.0, -1.0), (0.0, -1.0, 2.0), (0.5, 1.0, -1.0)],
    }


def test_hit_probabilities(model: LevyModel, cases: Sequence[HitCase], cfg: SimConfig,
                           engine: QuadratureEngine = None, substream: int = 0) -> List[MCReport]:
    """Частоты P_x(T_a < T_b) и P_x(T_a < T_b ∧ T_c) против формул через h"""
    table = PotentialTable(model, engine)
    rows = []
    for i, case in enumerate(cases):
        x, levels = case[0], tuple(case[1:])
        if len(levels) == 2:
            target = table.hit_prob_two(x, *levels)
        else:
            target = table.hit_prob_three(x, *levels)
        outcome = simulate_ensemble(model, x, cfg, clock=FirstPassageClock(levels=levels), substream=substream + i)
        est = summarize((outcome.hit_index == 0)[outcome.rang].astype(float), outcome.censoring_rate)
        params = _params(x=x, levels=",".join(f"{v:g}" for v in levels), censoring=outcome.censoring_rate)
        rows.append(MCReport.statistical("hit_probability", model.label, params, est.mean, est.stderr, target))
        rows.append(_censoring_row("hit_probability_censoring", model.label, params, outcome.censoring_rate))
    return rows


def test_laplace_hitting_zero(model: LevyModel, x0: float, q: float, cfg: SimConfig,
                              engine: QuadratureEngine = None, substream: int = 0) -> List[MCReport]:
    """P_x[e^{−qT₀}] против 1 − h_q(x)/r_q(0)"""
    target = hitting_laplace(model, q, x0, engine).value
    outcome = simulate_ensemble(model, x0, cfg, clock=FirstPassageClock(levels=(0.0,)), substream=substream)
    values = np.where(outcome.rang, np.exp(-q * outcome.t), 0.0)
    est = summarize(values)
    return [MCReport.statistical("laplace_hitting_zero", model.label, _params(x=x0, q=q),
                                 est.mean, est.stderr, target)]


def test_local_time_halving(model: LevyModel, cfg: SimConfig, substream: int = 0) -> List[MCReport]:
    """Смещение оценки локального времени при ε → ε/2 на общих случайных числах"""
    half = cfg.eps_local / 2
    outcome = simulate_ensemble(model, 0.0, cfg, eps_values=(half,), substream=substream)
    est = summarize(outcome.l_zero - outcome.l_zero_eps[half])
    return [MCReport.statistical("local_time_eps_halving", model.label,
                                 _params(eps=cfg.eps_local, t=cfg.horizon), est.mean, est.stderr, 0.0,
                                 sigma_limit=2.0)]


# Мартингалы


def test_martingales(model: LevyModel, gamma: Union[float, Sequence[float]], f: WeightFunction,
                     t_grid: Sequence[float], cfg: SimConfig, engine: QuadratureEngine = None,
                     substream: int = 0) -> List[MCReport]:
    """Постоянство E₀[M_t^(γ,f)], E₀[X_t f(L_t)] = 0 и инвариантность h^(γ) для убитого процесса"""
    gammas = (gamma,) if np.ndim(gamma) == 0 else tuple(gamma)
    table = PotentialTable(model, engine)
    label = model.label
    cfg = replace(cfg, horizon=max(t_grid))
    outcome = simulate_ensemble(model, 0.0, cfg, observe_times=t_grid, substream=substream)
    rows = []
    for g in gammas:
        m0 = martingale_M(table, f, MartingaleState(x_t=0.0), gamma=g)
        rows.append(MCReport.deterministic("martingale_initial", label, _params(gamma=g), m0, f.total, 1e-12))
        for t in t_grid:
            values = martingale_M(table, f, outcome.snapshots[float(t)].as_state(), gamma=g)
            est = summarize(values)
            rows.append(MCReport.statistical("martingale_constancy", label, _params(gamma=g, t=t, f=f.kind),
                                             est.mean, est.stderr, m0))

    last = outcome.snapshots[float(max(t_grid))]
    est = summarize(last.x * f.value(last.l_zero))
    rows.append(MCReport.statistical("martingale_x_f_l", label, _params(t=max(t_grid), f=f.kind),
                                     est.mean, est.stderr, 0.0))

    # Для моделей с полосой обнаружения нуля гибель наступает раньше T₀; проверка только для диффузий
    if hit_detection(model) == DIFFUSION:
        for g in gammas:
            x_start = 1.0 if g >= 0 else -1.0
            killed = simulate_ensemble(model, x_start, cfg, observe_times=(max(t_grid),),
                                       substream=substream + 1)
            weights = avoid_zero_weight(table, x_start, killed.snapshots[float(max(t_grid))].as_state(), gamma=g)
            est = summarize(weights)
            rows.append(MCReport.statistical("killed_invariance", label, _params(gamma=g, x=x_start),
                                             est.mean, est.stderr, 1.0))
    return rows


# Пределы по часам


def _limit_scale(table: PotentialTable, budget: float = 1e3, start: float = 1e3) -> float:
    """Наименьшее a = start·10^k с h^B(a) ≥ budget"""
    a = start
    while table.h_B(a) < budget and a < 1e12:
        a *= 10
    return a


def _exp_limit_q(table: PotentialTable, budget: float = 500.0) -> float:
    """
    q = 10^{−k} ≤ 10^{−6} с r_q(0) ≥ budget

    Если квадратура r_q(0) перестаёт сходиться, остаётся последнее разрешимое q.
    """
    q = 1e-6
    reached = 0.0
    while q > 1e-15:
        try:
            reached = table.r_q0(q)
        except QuadratureNoConvergence as e:
            if q >= 1e-6:
                raise
            q *= 10
            logger.warning(f"{table.model.label}: {e}; остаёмся на q={q:g}, r_q(0) = {reached:.4g} < {budget:g}")
            return q
        if reached >= budget:
            return q
        q /= 10
    return q


def state_grid() -> List[Tuple[float, float]]:
    return [(x, l) for x in (-1.0, 0.0, 1.0) for l in (0.0, 0.5, 1.0)]


def test_clock_limits(model: LevyModel, f: WeightFunction, engine: QuadratureEngine = None,
                      rel_tol: float = 0.01) -> List[MCReport]:
    """Условные ожидания по часам с большим параметром против предельных мартингалов на сетке состояний"""
    table = PotentialTable(model, engine)
    a = _limit_scale(table)
    q = _exp_limit_q(table)
    clocks = [
        ("exp", ExponentialClock(q)),
        ("hit+", HittingClock(a)),
        ("hit-", HittingClock(-a)),
        ("twopoint", TwoPointClock(2 * a, a)),
        ("invlt", InverseLocalTimeClock(a, 1.0)),
    ]
    rows = []
    for name, clock in clocks:
        params = _params(clock=name, parameter=q if name == "exp" else a)
        worst = 0.0
        try:
            for x, l in state_grid():
                s = MartingaleState(x_t=x, l_t=l, levels={a: 0.0})
                conditional = clock_conditional(table, clock, f, s)
                limit = clock_limit(table, clock, f, s)
                worst = max(worst, abs(conditional - limit) / abs(limit))
        except (QuadratureNoConvergence, ExtrapolationUnstable) as e:
            logger.error(f"❌ Предел часов {name} для {model.label}: {e}")
            worst = math.inf
        rows.append(MCReport.deterministic("clock_limit", model.label, params, worst, 0.0, rel_tol))
    return rows


def test_clock_laws_mc(model: LevyModel, f: WeightFunction, cfg: SimConfig, engine: QuadratureEngine = None,
                       substream: int = 0) -> List[MCReport]:
    """P₀[f(L_clock)] по Монте-Карло против замкнутых законов для каждого типа часов"""
    table = PotentialTable(model, engine)
    cases = [
        (ExponentialClock(1.0), lambda: table.exp_clock_law(1.0, 0.0, f)),
        (HittingClock(1.0), lambda: table.hitting_clock_law(1.0, 0.0, f)),
        (TwoPointClock(1.0, 1.0), lambda: table.two_point_law(1.0, -1.0, 0.0, f)),
        (InverseLocalTimeClock(1.0, 1.0), lambda: inv_lt_law(table, 1.0, 1.0, 0.0, f)),
    ]
    rows = []
    for i, (clock, law) in enumerate(cases):
        outcome = simulate_ensemble(model, 0.0, cfg, clock=clock, substream=substream + i)
        est = summarize(f.value(outcome.l_zero[outcome.rang]), outcome.censoring_rate)
        params = _params(clock=clock.name, censoring=outcome.censoring_rate)
        rows.append(MCReport.statistical("clock_law", model.label, params, est.mean, est.stderr, law()))
        rows.append(_censoring_row("clock_law_censoring", model.label, params, outcome.censoring_rate))
    return rows


def test_inverse_local_time_martingale(model: LevyModel, a: float, beta: float, t_grid: Sequence[float],
                                       cfg: SimConfig, engine: QuadratureEngine = None,
                                       substream: int = 0) -> List[MCReport]:
    """Постоянство E₀[M_t^{β,a}] (предел u → ∞ при фиксированном a)"""
    table = PotentialTable(model, engine)
    start = inv_u_limit_martingales(table, a, beta, MartingaleState(x_t=0.0, levels={a: 0.0}))
    cfg = replace(cfg, horizon=max(t_grid))
    outcome = simulate_ensemble(model, 0.0, cfg, observe_times=t_grid, levels=(a,), substream=substream)
    rows = []
    for t in t_grid:
        values = inv_u_limit_martingales(table, a, beta, outcome.snapshots[float(t)].as_state())
        est = summarize(values)
        rows.append(MCReport.statistical("inverse_local_time_martingale", model.label,
                                         _params(a=a, beta=beta, t=t), est.mean, est.stderr, start))
    return rows


# Закон L_∞ под пенализованной мерой


def brownian_local_time_tail(model: BrownianDiffusion, t: float, l: float) -> float:
    """P₀(L_t ≥ l) = P(|B_t| ≥ lσ) по тождеству Леви L_t ~ |B_t|/σ"""
    return float(2.0 * stats.norm.sf(l * model.sigma / math.sqrt(t)))


def test_penalized_L_infty(model: LevyModel, f: WeightFunction, l_grid: Sequence[float],
                           horizons: Sequence[float], cfg: SimConfig, gamma: float = 0.0,
                           engine: QuadratureEngine = None, substream: int = 0) -> List[MCReport]:
    """
    Q(L_t ≥ l) = E₀[M_t 1{L_t ≥ l}]/M₀ по взвешенным траекториям на растущих горизонтах

    Цель на горизонте t равна ∫_l^∞ f · P₀(L_t ≥ l) и сходится к закону L_∞ под пенализованной мерой.
    Конечный горизонт известен точно только для броуновского движения.
    """
    if not isinstance(model, BrownianDiffusion):
        raise UnsupportedModel(f"{model.label}: закон L_t на конечном горизонте известен только для "
                               f"броуновского движения")
    table = PotentialTable(model, engine)
    m0 = martingale_M(table, f, MartingaleState(x_t=0.0), gamma=gamma)
    horizons = tuple(sorted(float(t) for t in horizons))
    cfg = replace(cfg, horizon=horizons[-1])
    outcome = simulate_ensemble(model, 0.0, cfg, observe_times=horizons, substream=substream)
    rows = []
    for t in horizons:
        snap = outcome.snapshots[t]
        weights = martingale_M(table, f, snap.as_state(), gamma=gamma) / m0
        for l in l_grid:
            limit = float(penalized_local_time_cdf(f, l))
            target = limit * brownian_local_time_tail(model, t, l)
            est = summarize(weights * (snap.l_zero >= l))
            rows.append(MCReport.statistical("penalized_L_infty", model.label,
                                             _params(l=l, t=t, gamma=gamma, limit=limit),
                                             est.mean, est.stderr, target))
    return rows


# Невозвратный случай


def test_transient(model: LevyModel, f: WeightFunction, cfg: SimConfig, engine: QuadratureEngine = None,
                   substream: int = 0, survival_x: float = -1.0) -> List[MCReport]:
    """κ, насыщение h^B, тождества для интенсивностей экскурсий, κM₀ = E[f(L_∞)] и P_x(T₀ = ∞)"""
    engine = engine or QuadratureEngine()
    table = PotentialTable(model, engine)
    label = model.label
    kappa = table.kappa
    rows = []
    if isinstance(model, DriftedBrownian):
        rows.append(MCReport.deterministic("transient_kappa", label, {}, kappa, abs(model.drift), 1e-6))

    saturation = [table.h_B(a) for a in (1.0, 5.0, 20.0)]
    monotone = all(lo <= hi + 1e-12 for lo, hi in zip(saturation, saturation[1:]))
    rows.append(MCReport.deterministic("transient_hB_saturation", label, _params(a=20.0, monotone=monotone),
                                       saturation[-1] if monotone else math.inf, 1.0 / kappa, 1e-5))

    for a in (-1.0, 1.0, 2.0):
        rates = table.excursion_rate(a)
        hB = table.h_B(a)
        rows.append(MCReport.deterministic("transient_rate_sum", label, _params(a=a),
                                           kappa + rates.hit_then_return, 1.0 / hB, 1e-10))
        rows.append(MCReport.deterministic(
            "transient_rate_split", label, _params(a=a),
            rates.hit_before_zero - rates.hit_then_return,
            rates.hit_before_zero * kappa * table.h(a), 1e-10))

    target = transient_limit_law(table, f, 0.0)
    outcome = simulate_ensemble(model, 0.0, cfg, observe_times=(cfg.horizon,), substream=substream)
    est = summarize(f.value(outcome.l_zero))
    rows.append(MCReport.statistical("transient_limit_law", label, _params(f=f.kind, t=cfg.horizon),
                                     est.mean, est.stderr, target))

    m0 = transient_martingale(table, f, MartingaleState(x_t=0.0))
    mid = cfg.horizon / 4
    snap_cfg = replace(cfg, horizon=mid)
    snaps = simulate_ensemble(model, 0.0, snap_cfg, observe_times=(mid,), substream=substream + 1)
    est = summarize(transient_martingale(table, f, snaps.snapshots[float(mid)].as_state()))
    rows.append(MCReport.statistical("transient_martingale_constancy", label, _params(t=mid),
                                     est.mean, est.stderr, m0))

    survival = simulate_ensemble(model, survival_x, cfg, substream=substream + 2)
    est = summarize(survival.alive.astype(float))
    rows.append(MCReport.statistical("transient_survival", label, _params(x=survival_x),
                                     est.mean, est.stderr, table.avoid_zero_prob(survival_x)))
    return rows


# Запуск наборов


def _with_retry(name: str, fn: Callable[[SimConfig, int], List[MCReport]], cfg: SimConfig,
                substream: int) -> List[MCReport]:
    """Строки, не прошедшие статистическую проверку, пересчитываются один раз с 4× траекторий"""
    rows = fn(cfg, substream)
    failed = {r.test_name + repr(r.parameters) for r in rows if r.kind != DETERMINISTIC and not r.passed}
    if not failed:
        return rows
    logger.warning(f"{name}: {len(failed)} строк не прошли, повтор с {RETRY_FACTOR}× траекторий")
    retry = {r.test_name + repr(_stable_params(r)): r
             for r in fn(cfg.scaled(RETRY_FACTOR), substream + RETRY_SUBSTREAM)}
    merged = []
    for row in rows:
        key = row.test_name + repr(row.parameters)
        if key in failed:
            again = retry.get(row.test_name + repr(_stable_params(row)))
            if again is not None:
                logger.info(f"{row.test_name} {row.parameters}: повтор "
                            f"{'прошёл' if again.passed else 'не прошёл'}")
                row = replace(again, attempts=2)
        merged.append(row)
    return merged


def _stable_params(row: MCReport) -> Dict:
    # Доля цензурирования и число траекторий меняются между попытками
    return {k: v for k, v in row.parameters.items() if k not in ("censoring", "n", "statistic")}


def _paths(model: LevyModel, quick: bool) -> int:
    n = STABLE_PATHS if isinstance(model, StrictlyStable) else BROWNIAN_PATHS
    return n // QUICK_DIVISOR if quick else n


def _sim(model: LevyModel, seed: int, quick: bool, horizon: float, workers: int = None, **kwargs) -> SimConfig:
    return SimConfig(n_paths=_paths(model, quick), seed=seed, horizon=horizon,
                     workers=workers or config.SIM_WORKERS, **kwargs)


def stable_grid() -> List[StrictlyStable]:
    models = []
    for alpha in (1.2, 1.5, 1.8):
        for c_plus, c_minus in ((0.5, 1.5), (1.0, 1.0), (1.5, 0.5)):
            models.append(StrictlyStable(alpha=alpha, c_plus=c_plus, c_minus=c_minus))
    return models


def run_suite(name: str = "all", seed: int = config.LEVY_SEED, quick: bool = False,
              engine: QuadratureEngine = None, progress: bool = False, workers: int = None) -> List[MCReport]:
    """
    Запуск набора проверок

    Args:
        name: all, h, hitting, martingale, clocks, penalized или transient
        seed: зерно генератора
        quick: уменьшить число траекторий в 10 раз
        engine: настройки квадратур
        progress: показывать прогресс tqdm
        workers: число потоков моделирования

    Returns:
        Список строк отчёта в порядке выполнения
    """
    if name != "all" and name not in SUITES:
        raise ValueError(f"Неизвестный набор '{name}', допустимо all, {', '.join(SUITES)}")
    engine = engine or QuadratureEngine()
    names = SUITES if name == "all" else (name,)
    rows: List[MCReport] = []
    f = Exponential(1.0)
    counter = iter(range(1, 10_000))

    def sim(model, horizon, **kwargs):
        return _sim(model, seed, quick, horizon, workers, progress=progress, **kwargs)

    def stat(label, fn, cfg):
        return _with_retry(label, fn, cfg, 10 * next(counter))

    for suite in names:
        logger.info(f"Набор '{suite}': старт")
        if suite == "h":
            for preset in ("bm", "kou", "stable-sym-1.5", "stable-asym-1.5"):
                rows += test_h_properties(load_model(preset), engine, seed)
            for model in stable_grid():
                rows += test_stable_closed_form(model, engine)

        elif suite == "hitting":
            for preset, cases in default_hit_cases().items():
                model = load_model(preset)
                horizon = 1e8 if isinstance(model, StrictlyStable) else 1e6
                rows += stat(f"hit {preset}", lambda c, s, m=model, cs=cases: test_hit_probabilities(
                    m, cs, c, engine, s), sim(model, horizon))
            for preset, a in (("bm", 1.0), ("bm", 2.0), ("stable-sym-1.5", 1.0)):
                model = load_model(preset)
                horizon = 1e8 if isinstance(model, StrictlyStable) else 1e6
                rows += stat(f"L_T {preset}", lambda c, s, m=model, a=a: test_exponential_local_time(
                    m, a, c, engine, s), sim(model, horizon))
            bm = load_model("bm")
            rows += stat("laplace", lambda c, s: test_laplace_hitting_zero(bm, 1.0, 1.0, c, engine, s),
                         sim(bm, 50.0))
            rows += stat("eps-halving", lambda c, s: test_local_time_halving(bm, c, s), sim(bm, 1.0))

        elif suite == "martingale":
            for preset in ("bm", "stable-sym-1.5"):
                model = load_model(preset)
                rows += stat(f"M {preset}", lambda c, s, m=model: test_martingales(
                    m, (-1.0, 0.0, 1.0), f, (0.25, 0.5, 1.0, 2.0), c, engine, s), sim(model, 2.0))

        elif suite == "clocks":
            for preset in ("bm", "kou", "stable-sym-1.5"):
                rows += test_clock_limits(load_model(preset), f, engine)
            bm = load_model("bm")
            rows += stat("clock laws", lambda c, s: test_clock_laws_mc(bm, f, c, engine, s), sim(bm, 1e6))
            rows += stat("M^{beta,a}", lambda c, s: test_inverse_local_time_martingale(
                bm, 1.0, 1.0, (0.5, 1.0, 2.0), c, engine, s), sim(bm, 2.0))

        elif suite == "penalized":
            bm = load_model("bm")
            rows += stat("L_infty", lambda c, s: test_penalized_L_infty(
                bm, f, (0.25, math.log(2), 1.5), (1.0, 2.0, 4.0), c, 0.0, engine, s), sim(bm, 4.0))

        elif suite == "transient":
            drifted = load_model("bm-drift")
            rows += stat("transient", lambda c, s: test_transient(drifted, f, c, engine, s), sim(drifted, 40.0))

        logger.info(f"Набор '{suite}': готово, строк {len(rows)}")
    return rows
