"""
Моделирование траекторий методом Монте-Карло
Точные приращения на сетке, локальное время по плотности пребывания, срабатывание часов,
ансамбли с независимыми подпотоками генератора
"""

import csv
import logging
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from tqdm import tqdm

from app import config
from app.clocks import Clock, ExponentialClock, FirstPassageClock, InverseLocalTimeClock
from app.errors import HorizonExceeded, UnsupportedModel
from app.levy_models import (
    BrownianDiffusion,
    DriftedBrownian,
    JumpDiffusion,
    LevyModel,
    StrictlyStable,
    drift_of_mean_zero,
)
from app.penalization import MartingaleState

logger = logging.getLogger(__name__)

# Способ обнаружения попадания в точку
DIFFUSION = "diffusion"
JUMP_DIFFUSION = "jump-diffusion"
BAND = "band"

# Запас в гауссовских стандартных отклонениях для увеличенного шага вдали от уровней
GAUSSIAN_MARGIN = 6.0
TIME_EPS = 1e-12


@dataclass(frozen=True)
class SimConfig:
    """Параметры моделирования"""

    dt: float = config.SIM_DT
    horizon: float = 1.0
    eps_local: float = config.SIM_EPS_LOCAL
    delta_hit: float = config.SIM_DELTA_HIT
    n_paths: int = 10_000
    seed: int = config.LEVY_SEED
    batch_size: int = config.SIM_BATCH_SIZE
    workers: int = config.SIM_WORKERS
    adaptive: bool = True
    dt_max: float = math.inf
    far_tolerance: float = 1e-3
    progress: bool = False

    def __post_init__(self):
        for name in ("dt", "horizon", "eps_local", "delta_hit", "dt_max", "far_tolerance"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} должен быть > 0, получено {getattr(self, name)}")
        for name in ("n_paths", "batch_size", "workers"):
            if not getattr(self, name) >= 1:
                raise ValueError(f"{name} должен быть ≥ 1, получено {getattr(self, name)}")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed должен быть 64-битным неотрицательным целым")

    @property
    def n_batches(self) -> int:
        return -(-self.n_paths // self.batch_size)

    def scaled(self, factor: int) -> "SimConfig":
        """Копия с увеличенным в factor раз числом траекторий"""
        return replace(self, n_paths=self.n_paths * factor)

    def check_resolution(self, model: LevyModel) -> bool:
        """Предупреждает, если полосы уже характерного приращения за dt"""
        scale = increment_scale(model, self.dt)
        ok = True
        if self.eps_local < scale:
            logger.warning(f"eps_local={self.eps_local:g} меньше масштаба приращения {scale:.3g} за dt")
            ok = False
        if self.delta_hit < scale:
            logger.warning(f"delta_hit={self.delta_hit:g} меньше масштаба приращения {scale:.3g} за dt")
            ok = False
        return ok


def increment_scale(model: LevyModel, dt: float) -> float:
    if isinstance(model, StrictlyStable):
        return (model.c * dt) ** (1 / model.alpha)
    return model.gaussian_sigma * math.sqrt(dt)


def hit_detection(model: LevyModel) -> str:
    if isinstance(model, (BrownianDiffusion, DriftedBrownian)):
        return DIFFUSION
    if isinstance(model, JumpDiffusion):
        return JUMP_DIFFUSION
    if isinstance(model, StrictlyStable):
        return BAND
    raise UnsupportedModel(f"Моделирование для {type(model).__name__} не реализовано")


# Генераторы приращений


def stable_variates(alpha: float, beta: float, size, rng: np.random.Generator) -> np.ndarray:
    """
    Стандартные строго устойчивые величины (метод Чамберса–Мэллоуса–Стака)

    Характеристическая функция exp(−|λ|^α(1 − iβ sgn(λ) tan(πα/2))), α ≠ 1.
    """
    tan_term = math.tan(math.pi * alpha / 2)
    shift = math.atan(beta * tan_term) / alpha
    scale = (1 + beta ** 2 * tan_term ** 2) ** (1 / (2 * alpha))
    v = rng.uniform(-math.pi / 2, math.pi / 2, size)
    w = rng.exponential(1.0, size)
    angle = alpha * (v + shift)
    return (scale * np.sin(angle) / np.cos(v) ** (1 / alpha)
            * (np.cos(v - angle) / w) ** ((1 - alpha) / alpha))


def sample_increments(model: LevyModel, h, rng: np.random.Generator, size: int = None) -> np.ndarray:
    """Точные приращения X_{t+h} − X_t; h: скаляр или массив шагов"""
    h = np.asarray(h, dtype=float)
    size = size if size is not None else h.shape
    if isinstance(model, BrownianDiffusion):
        return model.sigma * np.sqrt(h) * rng.standard_normal(size)
    if isinstance(model, DriftedBrownian):
        return model.sigma * np.sqrt(h) * rng.standard_normal(size) + model.mean_velocity * h
    if isinstance(model, JumpDiffusion):
        gauss = model.sigma * np.sqrt(h) * rng.standard_normal(size)
        n_up = rng.poisson(model.jump_rate * model.p * h, size)
        n_down = rng.poisson(model.jump_rate * (1 - model.p) * h, size)
        jumps = rng.gamma(n_up, 1 / model.eta_plus) - rng.gamma(n_down, 1 / model.eta_minus)
        return gauss + jumps + drift_of_mean_zero(model) * h
    if isinstance(model, StrictlyStable):
        return (model.c * h) ** (1 / model.alpha) * stable_variates(model.alpha, model.beta, size, rng)
    raise UnsupportedModel(f"Моделирование для {type(model).__name__} не реализовано")


def _far_step(model: LevyModel, r: np.ndarray, cfg: SimConfig) -> np.ndarray:
    """Шаг, за который процесс почти наверняка не пройдёт расстояние r"""
    steps = []
    sigma = model.gaussian_sigma
    if sigma > 0:
        steps.append((r / (GAUSSIAN_MARGIN * sigma)) ** 2)
    if isinstance(model, DriftedBrownian):
        steps.append(r / (2 * abs(model.drift)))
    if isinstance(model, JumpDiffusion) and model.jump_rate > 0:
        drift = drift_of_mean_zero(model)
        if drift != 0:
            steps.append(r / (2 * abs(drift)))
        tail = model.p * np.exp(-model.eta_plus * r) + (1 - model.p) * np.exp(-model.eta_minus * r)
        steps.append(cfg.far_tolerance / (model.jump_rate * tail))
    if isinstance(model, StrictlyStable):
        steps.append(cfg.far_tolerance * model.alpha * r ** model.alpha / (model.c_plus + model.c_minus))
    return np.minimum.reduce(steps)


def _step_sizes(model: LevyModel, x: np.ndarray, watched: np.ndarray, band: float,
                cfg: SimConfig) -> np.ndarray:
    if not cfg.adaptive:
        return np.full(x.shape, cfg.dt)
    r = np.min(np.abs(x[:, None] - watched[None, :]), axis=1) - band
    far = r > 0
    h = np.full(x.shape, cfg.dt)
    if np.any(far):
        h[far] = np.clip(_far_step(model, r[far], cfg), cfg.dt, cfg.dt_max)
    return h


def _at_point(kind: str, x: np.ndarray, level: float, delta: float) -> np.ndarray:
    if kind == DIFFUSION:
        return x == level
    return np.abs(x - level) < delta


def _crossed(kind: str, sigma: float, x_prev: np.ndarray, x_new: np.ndarray, level: float,
             h: np.ndarray, u: np.ndarray, delta: float) -> np.ndarray:
    """Попадание в точку level за шаг: смена знака, мост или полоса"""
    d1 = x_prev - level
    d2 = x_new - level
    if kind == BAND:
        return np.abs(d2) < delta
    # Вероятность пересечения броуновским мостом между узлами
    bridge = u < np.exp(-2.0 * np.abs(d1) * np.abs(d2) / (sigma ** 2 * h))
    if kind == DIFFUSION:
        return (d1 * d2 <= 0) | bridge
    return (np.abs(d2) < delta) | bridge


# Одна траектория на сетке


@dataclass
class PathSample:
    """Траектория на равномерной сетке с локальными временами и моментами срабатывания часов"""

    times: np.ndarray
    states: np.ndarray
    local_time_zero: np.ndarray
    local_time_levels: Dict[float, np.ndarray] = field(default_factory=dict)
    clock_hits: Dict[str, float] = field(default_factory=dict)
    eps_local: float = config.SIM_EPS_LOCAL
    delta_hit: float = config.SIM_DELTA_HIT
    detection: str = BAND

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])


def estimate_local_time(path: PathSample, level: float, eps: float) -> np.ndarray:
    """L̂_t = (1/2ε)·∫₀^t 1{|X_s − level| < ε} ds по левым точкам сетки"""
    if not eps > 0:
        raise ValueError("eps должно быть > 0")
    inside = np.abs(path.states[:-1] - level) < eps
    increments = inside * np.diff(path.times) / (2 * eps)
    return np.concatenate(([0.0], np.cumsum(increments)))


def sample_path(model: LevyModel, x0: float, cfg: SimConfig, rng: np.random.Generator,
                levels: Sequence[float] = (), clocks: Sequence[Clock] = ()) -> PathSample:
    """
    Траектория на сетке шага dt до горизонта

    Args:
        model: модель Леви
        x0: начальная точка
        cfg: параметры моделирования
        rng: генератор numpy
        levels: уровни, на которых нужно локальное время
        clocks: часы, моменты срабатывания которых записываются в clock_hits

    Returns:
        PathSample
    """
    kind = hit_detection(model)
    n_steps = int(round(cfg.horizon / cfg.dt))
    times = cfg.dt * np.arange(n_steps + 1)
    increments = sample_increments(model, cfg.dt, rng, size=n_steps)
    states = np.concatenate(([x0], x0 + np.cumsum(increments)))
    path = PathSample(times=times, states=states, local_time_zero=np.zeros_like(times),
                      eps_local=cfg.eps_local, delta_hit=cfg.delta_hit, detection=kind)
    path.local_time_zero = estimate_local_time(path, 0.0, cfg.eps_local)
    for level in levels:
        path.local_time_levels[level] = estimate_local_time(path, level, cfg.eps_local)
    for clock in clocks:
        try:
            path.clock_hits[clock.name] = clock_time(path, clock, rng)
        except HorizonExceeded:
            path.clock_hits[clock.name] = math.inf
    return path


def clock_time(path: PathSample, clock: Clock, rng: np.random.Generator = None) -> float:
    """
    Первый узел сетки, в котором срабатывают часы

    Raises:
        HorizonExceeded: часы не сработали до конца траектории
    """
    horizon = float(path.times[-1])
    if isinstance(clock, ExponentialClock):
        if rng is None:
            raise ValueError("Для экспоненциальных часов нужен генератор")
        ring = rng.exponential(1.0 / clock.q)
        if ring > horizon:
            raise HorizonExceeded(f"e_q = {ring:.4g} за горизонтом {horizon:g}")
        return float(path.times[int(math.ceil(ring / path.dt - TIME_EPS))])

    if isinstance(clock, FirstPassageClock):
        hits = np.zeros(len(path.states), dtype=bool)
        for level in clock.levels:
            near = np.abs(path.states - level) < path.delta_hit
            if path.detection == DIFFUSION:
                d = path.states - level
                near = (d == 0)
                near[1:] |= d[:-1] * d[1:] <= 0
            hits |= near
        index = np.flatnonzero(hits)
        if index.size == 0:
            raise HorizonExceeded(f"Уровни {clock.levels} не достигнуты до {horizon:g}")
        return float(path.times[index[0]])

    if isinstance(clock, InverseLocalTimeClock):
        local = path.local_time_levels.get(clock.a)
        if local is None:
            local = estimate_local_time(path, clock.a, path.eps_local)
        index = np.flatnonzero(local >= clock.u)
        if index.size == 0:
            raise HorizonExceeded(f"L^{clock.a:g} не превысило u={clock.u:g} до {horizon:g}")
        return float(path.times[index[0]])

    raise UnsupportedModel(f"Неизвестные часы {clock!r}")


def write_paths_csv(sample: PathSample, path: Union[str, Path]) -> int:
    """Записывает траекторию в CSV: t, x, L0 и L^a по уровням; возвращает число строк"""
    levels = sorted(sample.local_time_levels)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "x", "L0"] + [f"L_{level:g}" for level in levels])
        for i, t in enumerate(sample.times):
            row = [f"{t:.10g}", f"{sample.states[i]:.10g}", f"{sample.local_time_zero[i]:.10g}"]
            row += [f"{sample.local_time_levels[level][i]:.10g}" for level in levels]
            writer.writerow(row)
    return len(sample.times)


# Ансамбли


@dataclass
class Snapshot:
    """Срез ансамбля в момент наблюдения"""

    t: float
    x: np.ndarray
    l_zero: np.ndarray
    l_levels: Dict[float, np.ndarray]
    alive: np.ndarray
    before_clock: np.ndarray

    def as_state(self) -> MartingaleState:
        return MartingaleState(x_t=self.x, l_t=self.l_zero, t=self.t, alive=self.alive,
                               levels=dict(self.l_levels), before_clock=self.before_clock)


@dataclass
class EnsembleOutcome:
    """
    Результат моделирования ансамбля

    x, t, l_zero: значения в момент остановки (срабатывание часов или горизонт);
    l_zero_eps: локальное время в нуле для дополнительных ширин полосы на тех же траекториях.
    """

    x: np.ndarray
    t: np.ndarray
    l_zero: np.ndarray
    l_zero_eps: Dict[float, np.ndarray]
    l_levels: Dict[float, np.ndarray]
    rang: np.ndarray
    hit_index: np.ndarray
    alive: np.ndarray
    snapshots: Dict[float, Snapshot]
    clock: Optional[Clock] = None

    @property
    def n_paths(self) -> int:
        return len(self.x)

    @property
    def censored(self) -> np.ndarray:
        if self.clock is None:
            return np.zeros(self.n_paths, dtype=bool)
        return ~self.rang

    @property
    def censoring_rate(self) -> float:
        return float(np.mean(self.censored)) if self.n_paths else 0.0

    @property
    def final_state(self) -> MartingaleState:
        return MartingaleState(x_t=self.x, l_t=self.l_zero, t=0.0, alive=self.alive,
                               levels=dict(self.l_levels), before_clock=~self.rang)

    @classmethod
    def merge(cls, parts: List["EnsembleOutcome"]) -> "EnsembleOutcome":
        def cat(getter):
            return np.concatenate([getter(p) for p in parts])

        first = parts[0]
        snapshots = {}
        for t, snap in first.snapshots.items():
            snapshots[t] = Snapshot(
                t=t,
                x=cat(lambda p: p.snapshots[t].x),
                l_zero=cat(lambda p: p.snapshots[t].l_zero),
                l_levels={a: cat(lambda p: p.snapshots[t].l_levels[a]) for a in snap.l_levels},
                alive=cat(lambda p: p.snapshots[t].alive),
                before_clock=cat(lambda p: p.snapshots[t].before_clock),
            )
        return cls(
            x=cat(lambda p: p.x),
            t=cat(lambda p: p.t),
            l_zero=cat(lambda p: p.l_zero),
            l_zero_eps={e: cat(lambda p: p.l_zero_eps[e]) for e in first.l_zero_eps},
            l_levels={a: cat(lambda p: p.l_levels[a]) for a in first.l_levels},
            rang=cat(lambda p: p.rang),
            hit_index=cat(lambda p: p.hit_index),
            alive=cat(lambda p: p.alive),
            snapshots=snapshots,
            clock=first.clock,
        )


def _simulate_batch(model: LevyModel, x0: float, cfg: SimConfig, clock: Optional[Clock],
                    observe_times: Tuple[float, ...], levels: Tuple[float, ...],
                    eps_values: Tuple[float, ...], rng: np.random.Generator, n: int) -> EnsembleOutcome:
    kind = hit_detection(model)
    sigma = model.gaussian_sigma
    targets = clock.levels if isinstance(clock, FirstPassageClock) else ()
    level_set = tuple(dict.fromkeys(levels + ((clock.a,) if isinstance(clock, InverseLocalTimeClock) else ())))
    eps_all = tuple(dict.fromkeys((cfg.eps_local,) + eps_values))
    watched = np.array((0.0,) + tuple(targets) + level_set)
    band = max(eps_all + (cfg.delta_hit,))

    x = np.full(n, float(x0))
    t = np.zeros(n)
    l0 = {eps: np.zeros(n) for eps in eps_all}
    lev = {a: np.zeros(n) for a in level_set}
    alive = ~_at_point(kind, x, 0.0, cfg.delta_hit)
    rang = np.zeros(n, dtype=bool)
    hit_index = np.full(n, -1)
    for i, level in enumerate(targets):
        now = _at_point(kind, x, level, cfg.delta_hit) & ~rang
        rang |= now
        hit_index[now] = i
    ring_at = rng.exponential(1.0 / clock.q, n) if isinstance(clock, ExponentialClock) else None

    obs = np.array(sorted(observe_times) + [math.inf])
    snaps = {
        "x": np.full((len(obs) - 1, n), np.nan),
        "l": np.zeros((len(obs) - 1, n)),
        "alive": np.zeros((len(obs) - 1, n), dtype=bool),
        "before": np.zeros((len(obs) - 1, n), dtype=bool),
        "levels": {a: np.zeros((len(obs) - 1, n)) for a in level_set},
    }
    next_obs = np.zeros(n, dtype=int)

    def record(idx: np.ndarray):
        # Записываем все наблюдения, до которых дошли траектории idx
        while idx.size:
            k = next_obs[idx]
            due = t[idx] >= obs[k] - TIME_EPS
            idx = idx[due]
            if not idx.size:
                break
            k = next_obs[idx]
            snaps["x"][k, idx] = x[idx]
            snaps["l"][k, idx] = l0[cfg.eps_local][idx]
            snaps["alive"][k, idx] = alive[idx]
            snaps["before"][k, idx] = ~rang[idx]
            for a in level_set:
                snaps["levels"][a][k, idx] = lev[a][idx]
            next_obs[idx] += 1

    stop = rang.copy()
    record(np.arange(n))

    while True:
        act = np.flatnonzero(~stop & (t < cfg.horizon - TIME_EPS))
        if act.size == 0:
            break
        xa, ta = x[act], t[act]
        h = _step_sizes(model, xa, watched, band, cfg)
        h = np.minimum(h, cfg.horizon - ta)
        h = np.minimum(h, obs[next_obs[act]] - ta)
        if ring_at is not None:
            h = np.minimum(h, ring_at[act] - ta)
        h = np.maximum(h, TIME_EPS)

        xn = xa + sample_increments(model, h, rng)
        for eps, arr in l0.items():
            arr[act] += (np.abs(xa) < eps) * h / (2 * eps)
        for a, arr in lev.items():
            arr[act] += (np.abs(xa - a) < cfg.eps_local) * h / (2 * cfg.eps_local)

        uniforms = rng.random((1 + len(targets), act.size))
        alive[act] &= ~_crossed(kind, sigma, xa, xn, 0.0, h, uniforms[0], cfg.delta_hit)

        ring_now = np.zeros(act.size, dtype=bool)
        for i, level in enumerate(targets):
            crossed = _crossed(kind, sigma, xa, xn, level, h, uniforms[1 + i], cfg.delta_hit) & ~ring_now
            hit_index[act[crossed]] = i
            ring_now |= crossed
        if ring_at is not None:
            ring_now |= ta + h >= ring_at[act] - TIME_EPS
        if isinstance(clock, InverseLocalTimeClock):
            ring_now |= lev[clock.a][act] >= clock.u

        x[act] = xn
        t[act] = ta + h
        if ring_at is not None:
            exact = act[ring_now]
            t[exact] = np.minimum(t[exact], ring_at[exact])
        rang[act] |= ring_now
        stop[act] |= ring_now
        record(act)

    # Остановленные часами траектории замораживаются до оставшихся моментов наблюдения
    for k in range(len(obs) - 1):
        idx = np.flatnonzero(next_obs <= k)
        snaps["x"][k, idx] = x[idx]
        snaps["l"][k, idx] = l0[cfg.eps_local][idx]
        snaps["alive"][k, idx] = alive[idx]
        snaps["before"][k, idx] = ~rang[idx]
        for a in level_set:
            snaps["levels"][a][k, idx] = lev[a][idx]

    snapshots = {
        float(obs[k]): Snapshot(
            t=float(obs[k]), x=snaps["x"][k], l_zero=snaps["l"][k],
            l_levels={a: snaps["levels"][a][k] for a in level_set},
            alive=snaps["alive"][k], before_clock=snaps["before"][k],
        )
        for k in range(len(obs) - 1)
    }
    return EnsembleOutcome(
        x=x, t=t, l_zero=l0[cfg.eps_local], l_zero_eps={e: l0[e] for e in eps_values},
        l_levels=lev, rang=rang, hit_index=hit_index, alive=alive, snapshots=snapshots, clock=clock,
    )


def simulate_ensemble(model: LevyModel, x0: float, cfg: SimConfig, clock: Optional[Clock] = None,
                      observe_times: Sequence[float] = (), levels: Sequence[float] = (),
                      eps_values: Sequence[float] = (), substream: int = 0) -> EnsembleOutcome:
    """
    Ансамбль из cfg.n_paths траекторий, остановленных часами clock или горизонтом

    Каждая партия из batch_size траекторий получает собственный генератор PCG64 из
    SeedSequence(seed, spawn_key=(substream,)); результат не зависит от числа потоков.
    """
    if any(not 0 <= s <= cfg.horizon for s in observe_times):
        raise ValueError(f"Моменты наблюдения должны лежать в [0, {cfg.horizon:g}]")
    hit_detection(model)
    cfg.check_resolution(model)

    seeds = np.random.SeedSequence(cfg.seed, spawn_key=(substream,)).spawn(cfg.n_batches)
    sizes = [min(cfg.batch_size, cfg.n_paths - i * cfg.batch_size) for i in range(cfg.n_batches)]
    observe = tuple(float(s) for s in observe_times)

    def run(i: int) -> EnsembleOutcome:
        rng = np.random.Generator(np.random.PCG64(seeds[i]))
        return _simulate_batch(model, float(x0), cfg, clock, observe, tuple(levels),
                               tuple(eps_values), rng, sizes[i])

    logger.debug(f"Моделирование {cfg.n_paths} траекторий {model.label} из x0={x0:g}, "
                 f"{cfg.n_batches} партий, {cfg.workers} потоков")
    with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
        parts = list(tqdm(pool.map(run, range(cfg.n_batches)), total=cfg.n_batches,
                          desc=f"Траектории {model.label}", file=sys.stderr,
                          disable=not cfg.progress, leave=False))
    outcome = EnsembleOutcome.merge(parts)
    if outcome.censoring_rate > 0.01:
        logger.warning(f"Доля траекторий без срабатывания часов: {outcome.censoring_rate:.2%}")
    return outcome


@dataclass(frozen=True)
class MCEstimate:
    """Выборочное среднее со стандартной ошибкой"""

    mean: float
    stderr: float
    censoring_rate: float
    n_used: int

    def __iter__(self):
        return iter((self.mean, self.stderr))


def summarize(values: np.ndarray, censoring_rate: float = 0.0) -> MCEstimate:
    values = np.asarray(values, dtype=float)
    n = len(values)
    if n == 0:
        raise ValueError("Нет ни одной траектории для оценки")
    stderr = float(np.std(values, ddof=1) / math.sqrt(n)) if n > 1 else math.inf
    return MCEstimate(mean=float(np.mean(values)), stderr=stderr, censoring_rate=censoring_rate, n_used=n)


def mc_functional(model: LevyModel, x0: float, cfg: SimConfig,
                  functional: Callable[[EnsembleOutcome], np.ndarray], clock: Optional[Clock] = None,
                  observe_times: Sequence[float] = (), levels: Sequence[float] = (),
                  substream: int = 0) -> MCEstimate:
    """
    Среднее функционала по траекториям, у которых часы сработали до горизонта

    Распаковывается как (mean, stderr); доля цензурированных траекторий хранится в censoring_rate.
    """
    outcome = simulate_ensemble(model, x0, cfg, clock=clock, observe_times=observe_times,
                                levels=levels, substream=substream)
    values = np.asarray(functional(outcome), dtype=float)
    keep = ~outcome.censored
    return summarize(values[keep], outcome.censoring_rate)
