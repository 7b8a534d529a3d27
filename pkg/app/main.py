"""
Командная строка levy-penal
Таблицы h, вероятности достижения, мартингалы пенализации, моделирование и проверочный набор
"""

import argparse
import csv
import io
import json
import logging
import re
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
from colorama import Fore, Style, init as colorama_init

from app import config
from app.clocks import Clock, ExponentialClock, FirstPassageClock, InverseLocalTimeClock, TwoPointClock, parse_clock
from app.db import VerificationLedger
from app.errors import LevyPenalError
from app.levy_models import list_presets, load_model
from app.penalization import (
    MartingaleState,
    clock_conditional,
    clock_limit,
    clock_limit_gamma,
    inv_lt_law,
    martingale_M,
    transient_limit_law,
    transient_martingale,
)
from app.potential import PotentialTable
from app.resolvent import CLOSED_FORM, EXTRAPOLATION, QUADRATURE, QuadratureEngine, h as h_value
from app.simulation import (
    EnsembleOutcome,
    SimConfig,
    Snapshot,
    sample_path,
    simulate_ensemble,
    summarize,
    write_paths_csv,
)
from app.verification import SUITES, MCReport, run_suite
from app.weights import WeightFunction, parse_weight

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2

# Значение флага, начинающееся с минуса: -3:3:1, -1e-3, -.5
_NEGATIVE_VALUE = re.compile(r"^-(\d|\.\d)")


def parse_range(text: str) -> np.ndarray:
    """'a:b:step' → узлы a, a+step, …, b включительно; одно число даёт одну точку"""
    parts = text.split(":")
    try:
        values = [float(p) for p in parts]
    except ValueError as e:
        raise ValueError(f"Ожидался диапазон a:b:step, получено '{text}'") from e
    if len(values) == 1:
        return np.array(values)
    if len(values) != 3:
        raise ValueError(f"Ожидался диапазон a:b:step, получено '{text}'")
    start, stop, step = values
    if not step > 0 or stop < start:
        raise ValueError(f"Диапазон '{text}': нужны step > 0 и b ≥ a")
    n = int(round((stop - start) / step)) + 1
    return start + step * np.arange(n)


def _join_negative_values(argv: Sequence[str]) -> List[str]:
    """Склеивает '--flag -3:3:1' в '--flag=-3:3:1', иначе argparse примет значение за флаг"""
    joined: List[str] = []
    i = 0
    while i < len(argv):
        token = argv[i]
        if token.startswith("--") and "=" not in token and i + 1 < len(argv) \
                and _NEGATIVE_VALUE.match(argv[i + 1]):
            joined.append(f"{token}={argv[i + 1]}")
            i += 2
            continue
        joined.append(token)
        i += 1
    return joined


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="levy-penal",
        description="Теория потенциала процессов Леви, мартингалы пенализации и их проверка Монте-Карло.",
    )
    parser.add_argument("--log-level", default=None, help="Уровень логирования (по умолчанию LOG_LEVEL или INFO)")
    parser.add_argument("--seed", type=int, default=config.LEVY_SEED, help="Зерно генератора (по умолчанию LEVY_SEED)")
    parser.add_argument("--quiet", action="store_true", help="Без индикатора прогресса")
    parser.add_argument("--no-ledger", action="store_true", help="Не записывать запуск verify в журнал SQLite")
    parser.add_argument("--abs-tol", type=float, default=config.QUAD_ABS_TOL, help="Абсолютный допуск квадратур")
    parser.add_argument("--rel-tol", type=float, default=config.QUAD_REL_TOL, help="Относительный допуск квадратур")

    sub = parser.add_subparsers(dest="command", required=True, metavar="command")
    presets = ", ".join(list_presets())

    p = sub.add_parser("h-table", help="Таблица h(x) в CSV")
    p.add_argument("--model", required=True, help=f"Пресет ({presets}) или путь к файлу модели")
    p.add_argument("--xs", required=True, help="Узлы a:b:step")
    p.add_argument("--method", default="auto", choices=("auto", CLOSED_FORM, QUADRATURE, EXTRAPOLATION))
    p.add_argument("--gamma", type=float, default=None, help="Наклон γ ∈ [−1, 1]: выводится h^(γ)(x)")
    p.add_argument("--out", default=None, help="Файл CSV (по умолчанию stdout)")

    p = sub.add_parser("hitprob", help="P_x(T_a < T_b) или P_x(T_a < T_b ∧ T_c)")
    p.add_argument("--model", required=True)
    p.add_argument("--x", type=float, required=True)
    p.add_argument("--a", type=float, required=True)
    p.add_argument("--b", type=float, required=True)
    p.add_argument("--c", type=float, default=None)

    p = sub.add_parser("excursion", help="h^B(a) и интенсивности экскурсий")
    p.add_argument("--model", required=True)
    p.add_argument("--a", type=float, required=True)
    p.add_argument("--out", default=None, help="Файл JSON (по умолчанию stdout)")

    p = sub.add_parser("penalize", help="Условное ожидание по часам, предельный мартингал и M₀")
    p.add_argument("--model", required=True)
    p.add_argument("--clock", default="hit:a=1", help="exp:q=1 | hit:a=1 | twopoint:a=1,b=1 | invlt:a=1,u=1")
    p.add_argument("--f", default="exp:beta=1", help="exp:beta=1 | zero | step:breaks=0,1;values=1,0")
    p.add_argument("--x0", type=float, default=0.0, help="Состояние X_t")
    p.add_argument("--l0", type=float, default=0.0, help="Локальное время в нуле L_t")
    p.add_argument("--la", type=float, default=0.0, help="Локальное время на уровне часов invlt")
    p.add_argument("--t", type=float, default=0.0, help="Момент t (для экспоненциальных часов)")
    p.add_argument("--out", default=None, help="Файл JSON (по умолчанию stdout)")

    p = sub.add_parser("simulate", help="Траектория в CSV или сводка ансамбля в JSON")
    p.add_argument("--model", required=True)
    p.add_argument("--clock", default=None, help="Часы, останавливающие траектории")
    p.add_argument("--x0", type=float, default=0.0)
    p.add_argument("--paths", type=int, default=10_000)
    p.add_argument("--dt", type=float, default=config.SIM_DT)
    p.add_argument("--horizon", type=float, default=1.0)
    p.add_argument("--eps-local", type=float, default=config.SIM_EPS_LOCAL)
    p.add_argument("--delta-hit", type=float, default=config.SIM_DELTA_HIT)
    p.add_argument("--workers", type=int, default=config.SIM_WORKERS)
    p.add_argument("--fixed-step", action="store_true", help="Без адаптивного шага")
    p.add_argument("--f", default="exp:beta=1", help="Вес f для строки сравнения с законом часов")
    p.add_argument("--out", default=None, help="*.csv: одна траектория; иначе сводка JSON (по умолчанию stdout)")

    p = sub.add_parser("verify", help="Проверочный набор")
    p.add_argument("--suite", default="all", choices=("all",) + SUITES)
    p.add_argument("--quick", action="store_true", help="В 10 раз меньше траекторий")
    p.add_argument("--workers", type=int, default=config.SIM_WORKERS)
    p.add_argument("--out", default=None, help="Файл отчёта JSON")
    return parser


# Вывод


def _emit(text: str, out: Optional[str]):
    if out:
        Path(out).write_text(text, encoding="utf-8")
        logger.info(f"Результат записан в {out}")
    else:
        sys.stdout.write(text)


def _emit_json(data: Dict, out: Optional[str]):
    _emit(json.dumps(data, indent=2, ensure_ascii=False) + "\n", out)


def _engine(args) -> QuadratureEngine:
    return QuadratureEngine(abs_tol=args.abs_tol, rel_tol=args.rel_tol)


def _progress(args) -> bool:
    return not args.quiet and sys.stderr.isatty()


# Подкоманды


def cmd_h_table(args) -> int:
    model = load_model(args.model)
    engine = _engine(args)
    gamma = 0.0 if args.gamma is None else args.gamma
    table = PotentialTable(model, engine, gamma=gamma)
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["x", "h", "error", "method"])
    for x in parse_range(args.xs):
        x = float(x)
        if args.method == "auto":
            value = table.h_value(x)
            h_x = float(table.h_gamma(x))
        else:
            value = h_value(model, x, engine, method=args.method)
            h_x = value.value + gamma * table.tilt_slope * x
        writer.writerow([f"{x:.10g}", f"{h_x:.12g}", f"{value.error_estimate:.3g}", value.method])
    _emit(buffer.getvalue(), args.out)
    return EXIT_OK


def cmd_hitprob(args) -> int:
    table = PotentialTable(load_model(args.model), _engine(args))
    if args.c is None:
        p = table.hit_prob_two(args.x, args.a, args.b)
    else:
        p = table.hit_prob_three(args.x, args.a, args.b, args.c)
    print(f"{p:.6f}")
    return EXIT_OK


def cmd_excursion(args) -> int:
    table = PotentialTable(load_model(args.model), _engine(args))
    rates = table.excursion_rate(args.a)
    _emit_json({
        "model": table.model.label,
        "a": args.a,
        "h_B": table.h_B(args.a),
        "kappa": table.kappa,
        "hit_before_zero": rates.hit_before_zero,
        "hit_then_return": rates.hit_then_return,
    }, args.out)
    return EXIT_OK


def cmd_penalize(args) -> int:
    table = PotentialTable(load_model(args.model), _engine(args))
    f = parse_weight(args.f)
    clock = parse_clock(args.clock)
    levels = {clock.a: args.la} if isinstance(clock, InverseLocalTimeClock) else {}
    state = MartingaleState(x_t=args.x0, l_t=args.l0, t=args.t, levels=levels)

    result = {"model": table.model.label, "weight": args.f, "x": args.x0, "l": args.l0, "t": args.t}
    if table.transient:
        logger.info(f"{table.model.label} невозвратна: часы не нужны, выводим M = h·f + (1−κh)·хвост")
        result.update({
            "kappa": table.kappa,
            "martingale": transient_martingale(table, f, state),
            "limit_law": transient_limit_law(table, f, args.x0),
        })
    else:
        gamma = clock_limit_gamma(clock)
        result.update({
            "clock": args.clock,
            "conditional": clock_conditional(table, clock, f, state),
            "limit": clock_limit(table, clock, f, state),
            "limit_gamma": gamma,
            "M0": martingale_M(table, f, MartingaleState(x_t=args.x0), gamma),
        })
    _emit_json(result, args.out)
    return EXIT_OK


def _clock_levels(clock: Optional[Clock]) -> tuple:
    if isinstance(clock, InverseLocalTimeClock):
        return (clock.a,)
    if isinstance(clock, FirstPassageClock):
        return tuple(clock.levels)
    return ()


def _clock_law_row(table: PotentialTable, clock: Clock, x0: float, f: WeightFunction,
                   outcome: EnsembleOutcome) -> Optional[MCReport]:
    """P_x[f(L_clock)] против закона часов; для часов из нескольких уровней частота первого уровня"""
    label = table.model.label
    params = {"clock": clock.name, "x": x0, "censoring": outcome.censoring_rate}
    stopped = outcome.rang
    if isinstance(clock, FirstPassageClock) and len(clock.levels) > 1 and not isinstance(clock, TwoPointClock):
        if len(clock.levels) == 2:
            target = table.hit_prob_two(x0, *clock.levels)
        elif len(clock.levels) == 3:
            target = table.hit_prob_three(x0, *clock.levels)
        else:
            return None
        est = summarize((outcome.hit_index == 0)[stopped].astype(float), outcome.censoring_rate)
        return MCReport.statistical("hit_probability", label, params, est.mean, est.stderr, target)

    if isinstance(clock, ExponentialClock):
        target = table.exp_clock_law(clock.q, x0, f)
    elif isinstance(clock, TwoPointClock):
        target = table.two_point_law(clock.a, -clock.b, x0, f)
    elif isinstance(clock, FirstPassageClock):
        target = table.hitting_clock_law(clock.levels[0], x0, f)
    elif isinstance(clock, InverseLocalTimeClock):
        target = float(inv_lt_law(table, clock.a, clock.u, x0, f))
    else:
        return None
    est = summarize(f.value(outcome.l_zero[stopped]), outcome.censoring_rate)
    return MCReport.statistical("clock_law", label, params, est.mean, est.stderr, target)


def _martingale_row(table: PotentialTable, x0: float, f: WeightFunction, snapshot: Snapshot) -> MCReport:
    """E_x[M_t] против M₀ на горизонте без часов"""
    martingale = transient_martingale if table.transient else martingale_M
    start = float(martingale(table, f, MartingaleState(x_t=x0)))
    est = summarize(martingale(table, f, snapshot.as_state()))
    return MCReport.statistical("martingale_constancy", table.model.label, {"x": x0, "t": snapshot.t},
                                est.mean, est.stderr, start)


def cmd_simulate(args) -> int:
    model = load_model(args.model)
    clock = parse_clock(args.clock) if args.clock else None
    cfg = SimConfig(dt=args.dt, horizon=args.horizon, eps_local=args.eps_local, delta_hit=args.delta_hit,
                    n_paths=args.paths, seed=args.seed, workers=args.workers,
                    adaptive=not args.fixed_step, progress=_progress(args))

    if args.out and args.out.endswith(".csv"):
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(args.seed)))
        sample = sample_path(model, args.x0, cfg, rng, levels=_clock_levels(clock),
                             clocks=(clock,) if clock else ())
        rows = write_paths_csv(sample, args.out)
        logger.info(f"Траектория {model.label}: {rows} строк в {args.out}, часы {sample.clock_hits}")
        return EXIT_OK

    f = parse_weight(args.f)
    table = PotentialTable(model, _engine(args))
    observe = () if clock else (args.horizon,)
    outcome = simulate_ensemble(model, args.x0, cfg, clock=clock, levels=_clock_levels(clock),
                                observe_times=observe)
    keep = ~outcome.censored
    report = {
        "model": model.label,
        "clock": args.clock,
        "weight": args.f,
        "x0": args.x0,
        "seed": args.seed,
        "n_paths": outcome.n_paths,
        "censoring_rate": outcome.censoring_rate,
    }
    if keep.any():
        for key, values in (("stop_time", outcome.t), ("x", outcome.x), ("local_time_zero", outcome.l_zero)):
            estimate = summarize(values[keep], outcome.censoring_rate)
            report[key] = {"mean": estimate.mean, "stderr": estimate.stderr, "n_used": estimate.n_used}

    rows: List[MCReport] = []
    if clock is None:
        rows.append(_martingale_row(table, args.x0, f, outcome.snapshots[float(args.horizon)]))
    elif table.transient:
        logger.info(f"{model.label} невозвратна: законов часов нет, строки сравнения не строятся")
    elif keep.any():
        row = _clock_law_row(table, clock, args.x0, f, outcome)
        if row is not None:
            rows.append(row)
    report["rows"] = [row.to_dict() for row in rows]
    _emit_json(report, args.out)
    return EXIT_OK


def _format_row(row: MCReport) -> str:
    status = f"{Fore.GREEN}PASS{Style.RESET_ALL}" if row.passed else f"{Fore.RED}FAIL{Style.RESET_ALL}"
    if row.sigmas is not None:
        detail = f"{row.sigmas:.2f}σ"
    elif row.deterministic_tol is not None:
        detail = f"tol={row.deterministic_tol:.1e}"
    else:
        detail = f"> {row.target:g}"
    return (f"{status} {row.test_name:<34} {row.model:<28} "
            f"est={row.estimate:.6g} target={row.target:.6g} {detail}")


def _archive_run(args, rows: List[MCReport]):
    """Запись запуска в журнал; ошибки журнала не влияют на код выхода"""
    if args.no_ledger or not config.DATABASE_PATH:
        return
    try:
        ledger = VerificationLedger(config.DATABASE_PATH)
        run_id = ledger.create_run(args.suite, args.seed, args.quick)
        if not run_id:
            logger.error("Не удалось создать запись о запуске в журнале")
            return
        ledger.insert_reports(run_id, [row.to_dict() for row in rows])
        ledger.finish_run(run_id, len(rows), sum(not row.passed for row in rows))
        logger.info(f"Запуск {run_id} записан в журнал {config.DATABASE_PATH}")
    except Exception as e:
        logger.error(f"Ошибка записи в журнал проверок: {e}")


def cmd_verify(args) -> int:
    colorama_init()
    rows = run_suite(args.suite, seed=args.seed, quick=args.quick, engine=_engine(args),
                     progress=_progress(args), workers=args.workers)
    for row in rows:
        print(_format_row(row))

    failed = [row for row in rows if not row.passed]
    print(f"\nСтрок: {len(rows)}, не прошло: {len(failed)}")
    if args.out:
        _emit_json({
            "suite": args.suite,
            "seed": args.seed,
            "quick": args.quick,
            "n_rows": len(rows),
            "n_failed": len(failed),
            "rows": [row.to_dict() for row in rows],
        }, args.out)
    _archive_run(args, rows)
    return EXIT_FAILED if failed else EXIT_OK


COMMANDS = {
    "h-table": cmd_h_table,
    "hitprob": cmd_hitprob,
    "excursion": cmd_excursion,
    "penalize": cmd_penalize,
    "simulate": cmd_simulate,
    "verify": cmd_verify,
}


def run(argv: Optional[Sequence[str]] = None) -> int:
    """
    Точка входа CLI

    Returns:
        0 при успехе, 1 если проверка не прошла, 2 при ошибке использования или вычисления
    """
    parser = build_parser()
    try:
        args = parser.parse_args(_join_negative_values(list(sys.argv[1:] if argv is None else argv)))
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE

    config.setup_logging(args.log_level)
    try:
        config.validate_config()
    except ValueError as e:
        logger.error(f"❌ Ошибка конфигурации: {e}")
        return EXIT_USAGE

    try:
        return COMMANDS[args.command](args)
    except (ValueError, LevyPenalError) as e:
        logger.error(f"Ошибка команды {args.command}: {e}")
        return EXIT_USAGE
    except OSError as e:
        logger.error(f"Ошибка записи результата: {e}")
        return EXIT_USAGE


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
