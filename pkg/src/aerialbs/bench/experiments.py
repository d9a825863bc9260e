"""Experiment grid: techniques x seeds x (T, E_tot) x location-error level.

Cells sharing ``(seed, T, E_tot, sigma)`` run together so the location-error
techniques can reuse the nominal run and the same sampled error realizations.
"""

from __future__ import annotations

import enum
import itertools
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ..bcd import BcdOptions, SolveReport, Termination, optimize
from ..init_traj import InitKind, build_init
from ..model import RateConvention, SystemParams, coverage, min_mission_energy, total_energy, validate
from ..robust import MedmOptions, UliErrorModel, min_excess, optimize_medm, optimize_wc
from ..schedule import rate_matrix, solve_scheduling
from .baselines import static_fdma_baseline, static_tdma_baseline
from .metrics import CSV_COLUMNS, TIMING_COLUMNS, MetricsRow, write_csv
from .scenarios import ScenarioConfig, generate_scenario, save_scenario

log = logging.getLogger(__name__)


class Technique(str, enum.Enum):
    CIT = "CIT"                  # scheduling on the fixed circle
    DIT = "DIT"                  # one descent iteration from the designed loop
    IA_CIT = "IA-CIT"
    IA_DIT = "IA-DIT"
    STATIC_TDMA = "static-TDMA"
    STATIC_FDMA = "static-FDMA"
    WC = "WC"
    MEDM = "MEDM"


@dataclass
class ExperimentConfig:
    seeds: tuple = tuple(range(20))
    T_values: tuple = (40.0, 60.0, 80.0, 100.0, 120.0)
    E_values: tuple = (1.0e4, 1.5e4, 2.0e4, 2.5e4)
    techniques: tuple = (Technique.IA_CIT, Technique.IA_DIT, Technique.STATIC_TDMA, Technique.STATIC_FDMA)
    sigmas: tuple = (0.0,)
    out_dir: Path | None = None
    cells: tuple | None = None          # explicit (T, E_tot) pairs; default is the full grid
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    rate_convention: RateConvention = RateConvention.PHYSICAL
    bcd: BcdOptions = field(default_factory=BcdOptions)
    robust_init: InitKind = InitKind.DESIGNED
    medm_epsilon: float = 1e-3
    mc_samples: int = 1000
    threads: int = 1
    save_reports: bool = True
    plots: bool = True

    def __post_init__(self):
        self.seeds = tuple(int(s) for s in self.seeds)
        if not self.seeds:
            raise ValueError("need at least one seed")
        self.techniques = tuple(Technique(t) for t in self.techniques)
        self.robust_init = InitKind(self.robust_init)
        self.rate_convention = RateConvention(self.rate_convention)
        self.out_dir = None if self.out_dir is None else Path(self.out_dir)
        dt = SystemParams().delta_t
        for T, _ in self.grid():
            if abs(T / dt - round(T / dt)) > 1e-9:
                raise ValueError(f"T={T} is not a whole number of {dt} s slots")

    def grid(self) -> list[tuple[float, float]]:
        if self.cells is not None:
            return [(float(T), float(E)) for T, E in self.cells]
        return [(float(T), float(E)) for T in self.T_values for E in self.E_values]

    @classmethod
    def cross(cls, T_values, E_values, T_fixed, E_fixed, **kw) -> ExperimentConfig:
        return cls(T_values=tuple(T_values), E_values=tuple(E_values),
                   cells=cross_cells(T_values, E_values, T_fixed, E_fixed), **kw)

    def params(self, T: float, E: float) -> SystemParams:
        return SystemParams.for_mission(T, E, rate_convention=self.rate_convention)


def cross_cells(T_values, E_values, T_fixed, E_fixed) -> tuple:
    """A sweep in T at ``E_fixed`` plus a sweep in E_tot at ``T_fixed``."""
    cells = [(float(T), float(E_fixed)) for T in T_values]
    cells += [(float(T_fixed), float(E)) for E in E_values if (float(T_fixed), float(E)) not in cells]
    return tuple(cells)


@dataclass
class ExperimentResult:
    rows: list
    reports: dict      # row key -> SolveReport for the optimizer techniques
    scenarios: dict    # (seed, T) -> Scenario


def error_samples(seed: int, sigma: float, M: int, count: int) -> np.ndarray:
    """Location errors shared by every technique of a cell (``count x M x 2``)."""
    model = UliErrorModel(sigma)
    rng = np.random.default_rng([seed, int(round(sigma * 1000)), 7])
    return model.sample(count * M, rng).reshape(count, M, 2)


def realized(traj, sched, scenario, params, planned, errors) -> tuple[float, float]:
    """Mean covered fraction and share of realizations keeping every planned user covered."""
    planned = list(planned)
    fracs, kept = [], []
    for e in errors:
        rho = coverage(traj, sched, scenario, params, positions=scenario.positions + e).rho
        fracs.append(rho.mean())
        kept.append(bool(rho[planned].all()) if planned else True)
    return float(np.mean(fracs)), float(np.mean(kept))


def _row_from_report(tech, seed, params, sigma, report: SolveReport, scenario, pad=0.0) -> MetricsRow:
    row = MetricsRow(tech.value, seed, params.T, params.E_tot, sigma, covered=report.coverage, M=scenario.M,
                     energy_used=report.energy_used if report.trajectory is not None else float("nan"),
                     iterations=len(report.iterations), termination=report.termination.value,
                     wall_time=report.wall_time)
    if report.trajectory is not None and report.covered_set:
        row.min_excess = min_excess(report.trajectory, report.schedule, scenario, report.covered_set, params,
                                    pad=pad)
    return row


def _fixed_trajectory_row(tech, seed, params, sigma, scenario, traj, config) -> tuple[MetricsRow, SolveReport | None]:
    """Scheduling only, on a trajectory that is not optimized."""
    start = time.perf_counter()
    res = solve_scheduling(rate_matrix(traj, scenario, params), scenario.demands, config.bcd.schedule)
    rep = validate(traj, res.schedule, scenario, params)
    term = "fixed" if rep.ok else "fixed_violates:" + "+".join(sorted(rep.kinds()))
    covered = res.coverage.covered_set
    row = MetricsRow(tech.value, seed, params.T, params.E_tot, sigma, covered=len(covered), M=scenario.M,
                     energy_used=total_energy(traj, params), iterations=0, termination=term,
                     wall_time=time.perf_counter() - start)
    if covered:
        row.min_excess = min_excess(traj, res.schedule, scenario, covered, params)
    report = SolveReport([], traj, res.schedule, list(covered), Termination.MAX_ITERATIONS, row.wall_time,
                         scenario.M, len(covered), tech.value, {"fixed_trajectory": True, "valid": rep.ok})
    return row, report


def run_group(seed: int, T: float, E: float, sigma: float, config: ExperimentConfig):
    """All requested techniques for one ``(seed, T, E_tot, sigma)`` cell."""
    params = config.params(T, E)
    scenario = generate_scenario(seed, config.scenario, params)
    out: list[tuple[MetricsRow, SolveReport | None]] = []
    nominal: dict[InitKind, SolveReport] = {}
    energy_ok = min_mission_energy(params) <= params.E_tot

    def bcd(kind: InitKind) -> SolveReport:
        if kind not in nominal:
            nominal[kind] = optimize(scenario, params, build_init(kind, scenario, params), config.bcd,
                                     technique=f"IA-{'CIT' if kind is InitKind.CIRCULAR else 'DIT'}")
        return nominal[kind]

    for tech in config.techniques:
        try:
            if tech is Technique.STATIC_TDMA:
                row, report = static_tdma_baseline(scenario, params, config.bcd.schedule, seed), None
            elif tech is Technique.STATIC_FDMA:
                row, report = static_fdma_baseline(scenario, params, seed), None
            elif not energy_ok:
                row = MetricsRow(tech.value, seed, T, E, sigma, covered=0, M=scenario.M,
                                 termination=Termination.INFEASIBLE.value)
                report = None
            elif tech is Technique.CIT:
                row, report = _fixed_trajectory_row(tech, seed, params, sigma, scenario,
                                                    build_init(InitKind.CIRCULAR, scenario, params), config)
            elif tech is Technique.DIT:
                one = replace(config.bcd, max_iterations=1)
                report = optimize(scenario, params, build_init(InitKind.DESIGNED, scenario, params), one,
                                  technique=tech.value)
                row = _row_from_report(tech, seed, params, sigma, report, scenario)
            elif tech in (Technique.IA_CIT, Technique.IA_DIT):
                report = bcd(InitKind.CIRCULAR if tech is Technique.IA_CIT else InitKind.DESIGNED)
                row = _row_from_report(tech, seed, params, sigma, report, scenario)
            elif tech is Technique.WC:
                d_th = 3.0 * sigma
                report = optimize_wc(scenario, params, build_init(config.robust_init, scenario, params), d_th,
                                     config.bcd)
                row = _row_from_report(tech, seed, params, sigma, report, scenario, pad=d_th)
            elif tech is Technique.MEDM:
                warm = bcd(config.robust_init)
                if not warm.covered_set:
                    raise ValueError("nominal run covered nobody")
                report = optimize_medm(scenario, params, warm, config.medm_epsilon,
                                       MedmOptions(epsilon=config.medm_epsilon, bcd=config.bcd))
                row = _row_from_report(tech, seed, params, sigma, report, scenario)
                row.wall_time += warm.wall_time
            else:  # pragma: no cover
                raise ValueError(tech)
        except Exception as exc:  # one failed cell must not stop the sweep
            log.exception("cell %s seed=%d T=%g E=%g sigma=%g failed", tech.value, seed, T, E, sigma)
            row = MetricsRow(tech.value, seed, T, E, sigma, M=scenario.M, termination="error",
                             error=f"{type(exc).__name__}: {exc}")
            report = None
        out.append((row, report))

    if sigma > 0:
        errors = error_samples(seed, sigma, scenario.M, config.mc_samples)
        for row, report in out:
            if report is None or report.trajectory is None:
                continue
            row.realized_coverage, row.all_covered_fraction = realized(
                report.trajectory, report.schedule, scenario, params, report.covered_set, errors)
    return scenario, out


def report_name(row: MetricsRow) -> str:
    return f"{row.technique}_seed{row.seed}_T{row.T:g}_E{row.E_tot:g}_sigma{row.sigma:g}.json"


def _run_group_args(args):
    return args[:4], run_group(*args)


def run_experiments(config: ExperimentConfig) -> ExperimentResult:
    jobs = [(seed, T, E, sigma, config)
            for (T, E), sigma, seed in itertools.product(config.grid(), config.sigmas, config.seeds)]
    log.info("running %d cells x %d techniques", len(jobs), len(config.techniques))
    if config.threads > 1:
        with ProcessPoolExecutor(max_workers=config.threads) as pool:
            done = list(pool.map(_run_group_args, jobs))
    else:
        done = [_run_group_args(j) for j in jobs]
    rows, reports, scenarios = [], {}, {}
    for (seed, T, _E, _sigma), (scenario, out) in done:
        scenarios[(seed, T)] = scenario
        for row, report in out:
            rows.append(row)
            if report is not None:
                reports[row.key] = report
    rows.sort(key=lambda r: r.key)
    result = ExperimentResult(rows, reports, scenarios)
    if config.out_dir is not None:
        write_outputs(result, config)
    return result


def write_outputs(result: ExperimentResult, config: ExperimentConfig) -> None:
    out = config.out_dir
    out.mkdir(parents=True, exist_ok=True)
    write_csv(result.rows, out / "metrics.csv", CSV_COLUMNS)
    write_csv(result.rows, out / "timings.csv", TIMING_COLUMNS)
    (out / "scenarios").mkdir(exist_ok=True)
    for (seed, T), sc in sorted(result.scenarios.items()):
        save_scenario(sc, out / "scenarios" / f"seed{seed}_T{T:g}.json", seed=seed)
    if config.save_reports:
        (out / "reports").mkdir(exist_ok=True)
        for row in result.rows:
            rep = result.reports.get(row.key)
            if rep is not None:
                rep.save(out / "reports" / report_name(row))
    if config.plots:
        from .plots import render_all
        render_all(out)


def mean_by(rows, value, *keys) -> dict:
    """Average ``value(row)`` over rows grouped by the attributes in ``keys``; NaNs are skipped."""
    acc: dict = {}
    for r in rows:
        v = value(r)
        if v is None or (isinstance(v, float) and math.isnan(v)):
            continue
        acc.setdefault(tuple(getattr(r, k) for k in keys), []).append(v)
    return {k: float(np.mean(v)) for k, v in sorted(acc.items())}
