"""Block coordinate descent over scheduling and trajectory.

Each iteration schedules users on the current trajectory, then re-optimizes
the trajectory for that schedule around the current iterate.  The trajectory
step may grow the covered set: it tries the scheduled-but-uncovered users on
top of the covered set, largest additions first, and keeps the first set whose
convexified program is feasible with non-negative rate margin.
"""

from __future__ import annotations

import enum
import itertools
import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .conic import solve as conic_solve
from .model import Scenario, Schedule, SystemParams, Trajectory, coverage, min_mission_energy, total_energy, validate
from .sca import (
    ExtractionError,
    LocalPoint,
    Objective,
    SubproblemSpec,
    Variant,
    anchor_violation,
    build_subproblem,
    extract_trajectory,
    slack_values,
)
from .schedule import ScheduleOptions, rate_matrix, solve_scheduling

log = logging.getLogger(__name__)

REPORT_SCHEMA = 1
ETA_TOL = 1e-9          # accepted rate margin, in units of the largest demand


class Termination(str, enum.Enum):
    CONVERGED = "converged"
    FULL_COVERAGE = "full_coverage"
    MAX_ITERATIONS = "max_iterations"
    INFEASIBLE = "infeasible"
    SOLVER_FAILURE = "solver_failure"


@dataclass
class BcdOptions:
    patience: int = 1
    max_iterations: int = 30
    tol: float = 1e-6
    max_iter_conic: int = 100
    schedule: ScheduleOptions = field(default_factory=ScheduleOptions)
    pad: float = 0.0                  # worst-case distance padding (m)
    max_candidate_solves: int = 8
    restore_iterations: int = 25
    stop_at_full: bool = True
    progress_step: bool = True        # when stuck, move toward the uncovered scheduled users
    dump_dir: Path | None = None


@dataclass
class IterationRecord:
    iteration: int
    coverage: int
    covered_set: list
    energy_used: float
    min_rate_slack: float
    schedule_coverage: int
    candidate_set: list
    statuses: list
    restored: bool = False
    seconds: float = 0.0


@dataclass
class SolveReport:
    iterations: list
    trajectory: Trajectory | None
    schedule: Schedule | None
    covered_set: list
    termination: Termination
    wall_time: float
    M: int
    initial_coverage: int | None = None
    technique: str = ""
    extra: dict = field(default_factory=dict)

    @property
    def coverage(self) -> int:
        return len(self.covered_set)

    @property
    def coverage_probability(self) -> float:
        return self.coverage / self.M

    @property
    def coverage_trace(self) -> list[int]:
        return [it.coverage for it in self.iterations]

    @property
    def energy_used(self) -> float:
        return float("nan") if self.trajectory is None else self.iterations[-1].energy_used

    def to_dict(self) -> dict:
        traj = self.trajectory
        return {
            "schema": REPORT_SCHEMA,
            "technique": self.technique,
            "termination": self.termination.value,
            "M": self.M,
            "coverage": self.coverage,
            "covered_set": list(self.covered_set),
            "initial_coverage": self.initial_coverage,
            "wall_time": self.wall_time,
            "iterations": [asdict(it) for it in self.iterations],
            "trajectory": None if traj is None else {"s": traj.s.tolist(), "v": traj.v.tolist(), "a": traj.a.tolist()},
            "schedule_owner": None if self.schedule is None else self.schedule.owner().tolist(),
            "extra": self.extra,
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    @classmethod
    def from_dict(cls, d: dict) -> SolveReport:
        if d.get("schema") != REPORT_SCHEMA:
            raise ValueError(f"unsupported report schema {d.get('schema')!r}")
        traj = None if d["trajectory"] is None else Trajectory(**{k: np.array(v) for k, v in d["trajectory"].items()})
        sched = None if d["schedule_owner"] is None else Schedule.from_owner(d["schedule_owner"], d["M"])
        its = [IterationRecord(**it) for it in d["iterations"]]
        return cls(its, traj, sched, d["covered_set"], Termination(d["termination"]), d["wall_time"], d["M"],
                   d.get("initial_coverage"), d.get("technique", ""), d.get("extra", {}))

    @classmethod
    def load(cls, path) -> SolveReport:
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass
class BcdState:
    traj: Trajectory
    feasible: bool
    coverage: int = 0
    schedule: Schedule | None = None
    iteration: int = 0


class SolverFailure(RuntimeError):
    pass


class _Context:
    def __init__(self, scenario, params, options: BcdOptions):
        self.scenario = scenario
        self.params = params
        self.options = options
        self.solves = 0

    def solve(self, spec: SubproblemSpec):
        prog = build_subproblem(spec, self.scenario, self.params)
        self.solves += 1
        if self.options.dump_dir is not None:
            path = Path(self.options.dump_dir)
            path.mkdir(parents=True, exist_ok=True)
            (path / f"subproblem_{self.solves:04d}.txt").write_text(prog.dumps())
        sol = conic_solve(prog, tol=self.options.tol, max_iter=self.options.max_iter_conic)
        return prog, sol


def trajectory_feasible(traj: Trajectory, scenario: Scenario, params: SystemParams) -> bool:
    return validate(traj, None, scenario, params).ok


def restore_feasibility(traj: Trajectory, schedule: Schedule, ctx: _Context, statuses: list) -> Trajectory | None:
    """Elastic iterations on the speed floor and energy budget until the iterate is feasible."""
    local = LocalPoint.from_trajectory(traj)
    for _ in range(ctx.options.restore_iterations):
        spec = SubproblemSpec(schedule, (), local, objective=Objective.RESTORE)
        prog, sol = ctx.solve(spec)
        statuses.append(f"restore:{sol.status.value}")
        if not sol.usable:
            return None
        cand = extract_trajectory(sol, prog, ctx.scenario, ctx.params)
        if trajectory_feasible(cand, ctx.scenario, ctx.params):
            return cand
        local = LocalPoint.from_trajectory(cand)
    return None


def _candidate_sets(covered, extra):
    for size in range(len(extra), -1, -1):
        for add in itertools.combinations(extra, size):
            yield tuple(sorted(covered + add))


def trajectory_step(state: BcdState, schedule: Schedule, covered: tuple, ctx: _Context, statuses: list,
                    variant=Variant.NOMINAL):
    """Return ``(trajectory, accepted candidate set, eta_bits, restored)`` or raise SolverFailure."""
    scen, params, opts = ctx.scenario, ctx.params, ctx.options
    scheduled = np.flatnonzero(schedule.alpha.any(axis=1))
    extra = tuple(int(i) for i in scheduled if int(i) not in covered)

    def search(traj, budget):
        local = LocalPoint.from_trajectory(traj)
        refuted: list[set] = []
        for cand in _candidate_sets(tuple(covered), extra):
            if any(bad <= set(cand) for bad in refuted):
                continue
            if budget <= 0 and cand != tuple(covered):
                continue
            budget -= 1
            spec = SubproblemSpec(schedule, cand, local, variant=variant, pad=opts.pad)
            prog, sol = ctx.solve(spec)
            statuses.append(f"{len(cand)}:{sol.status.value}")
            if not sol.usable:
                if sol.status.value == "primal_infeasible":
                    refuted.append(set(cand))
                continue
            eta = slack_values(sol, prog, scen).get("eta_bits", 0.0)
            if cand and eta < -ETA_TOL * prog.names["_scaling"][3]:
                refuted.append(set(cand))
                continue
            try:
                traj_new = extract_trajectory(sol, prog, scen, params)
            except ExtractionError:
                continue
            if trajectory_feasible(traj_new, scen, params):
                return traj_new, cand, eta
            statuses.append(f"{len(cand)}:rejected")
        return None

    def progress(traj, found):
        """No larger set was reached: keep the covered set hard and push the rest toward their demands."""
        if not opts.progress_step or not extra or found[1] != tuple(covered):
            return found
        spec = SubproblemSpec(schedule, covered, LocalPoint.from_trajectory(traj), variant=variant,
                              pad=opts.pad, soft_set=extra)
        prog, sol = ctx.solve(spec)
        statuses.append(f"progress:{sol.status.value}")
        if not sol.usable:
            return found
        traj_new = extract_trajectory(sol, prog, scen, params)
        if not trajectory_feasible(traj_new, scen, params):
            statuses.append("progress:rejected")
            return found
        return traj_new, found[1], found[2]

    # an infeasible anchor gets one direct attempt before restoration
    found = search(state.traj, opts.max_candidate_solves if state.feasible else 1)
    if found is not None:
        return (*progress(state.traj, found), False)
    if state.feasible:
        raise SolverFailure("no candidate set solved from a feasible expansion point")
    restored = restore_feasibility(state.traj, schedule, ctx, statuses)
    if restored is None:
        raise SolverFailure("could not restore a feasible trajectory")
    found = search(restored, opts.max_candidate_solves)
    if found is not None:
        return (*progress(restored, found), True)
    return restored, (), 0.0, True


def min_rate_slack(traj, schedule, scenario, params, covered, pad=0.0) -> float:
    if not covered:
        return float("nan")
    got = coverage(traj, schedule, scenario, params, pad=pad).delivered
    idx = list(covered)
    return float(np.min(got[idx] - scenario.demands[idx]))


def iteration_step(state: BcdState, ctx: _Context, variant=Variant.NOMINAL) -> tuple[BcdState, IterationRecord]:
    """Schedule on the current trajectory, then re-optimize the trajectory."""
    start = time.perf_counter()
    scen, params, opts = ctx.scenario, ctx.params, ctx.options
    rates = rate_matrix(state.traj, scen, params, pad=opts.pad)
    sched_res = solve_scheduling(rates, scen.demands, opts.schedule)
    schedule = sched_res.schedule
    covered = sched_res.coverage.covered_set if state.feasible else ()
    statuses = [f"schedule:gap={sched_res.bound_gap}"]
    if state.feasible:
        before = anchor_violation(state.traj, SubproblemSpec(schedule, covered, LocalPoint.from_trajectory(state.traj),
                                                             pad=opts.pad), scen, params)
        if before["rate_deficit_bits"] > 1.0:
            raise SolverFailure(f"expansion point infeasible for its own covered set: {before}")
    traj, cand, eta, restored = trajectory_step(state, schedule, tuple(covered), ctx, statuses, variant)
    cov = coverage(traj, schedule, scen, params, pad=opts.pad)
    if state.feasible and cov.covered_count < len(covered):
        log.warning("trajectory step lowered coverage %d -> %d; keeping previous iterate",
                    len(covered), cov.covered_count)
        traj = state.traj
        cov = coverage(traj, schedule, scen, params, pad=opts.pad)
    new = BcdState(traj, True, cov.covered_count, schedule, state.iteration + 1)
    rec = IterationRecord(
        iteration=new.iteration,
        coverage=cov.covered_count,
        covered_set=list(cov.covered_set),
        energy_used=total_energy(traj, params),
        min_rate_slack=min_rate_slack(traj, schedule, scen, params, cov.covered_set, opts.pad),
        schedule_coverage=sched_res.coverage.covered_count,
        candidate_set=list(cand),
        statuses=statuses,
        restored=restored,
        seconds=time.perf_counter() - start,
    )
    log.info("iteration %d: coverage %d (schedule %d, candidates %s)%s", rec.iteration, rec.coverage,
             rec.schedule_coverage, cand, " after restoration" if restored else "")
    return new, rec


def optimize(scenario: Scenario, params: SystemParams, init: Trajectory, options: BcdOptions | None = None,
             technique: str = "", variant=Variant.NOMINAL) -> SolveReport:
    options = options or BcdOptions()
    start = time.perf_counter()
    if init.N != params.N:
        raise ValueError(f"initial trajectory has {init.N} slots, expected {params.N}")
    if min_mission_energy(params) > params.E_tot * (1.0 + 1e-9):
        log.info("energy budget %.0f J below the %.0f J any mission needs", params.E_tot, min_mission_energy(params))
        return SolveReport([], None, None, [], Termination.INFEASIBLE, time.perf_counter() - start, scenario.M,
                           technique=technique, extra={"min_mission_energy": min_mission_energy(params)})
    ctx = _Context(scenario, params, options)
    feasible = trajectory_feasible(init, scenario, params)
    state = BcdState(init, feasible)
    initial = None
    if feasible:
        rates = rate_matrix(init, scenario, params, pad=options.pad)
        initial = solve_scheduling(rates, scenario.demands, options.schedule).coverage.covered_count
    records: list[IterationRecord] = []
    termination = Termination.MAX_ITERATIONS
    unchanged = 0
    best = None
    for _ in range(options.max_iterations):
        try:
            state, rec = iteration_step(state, ctx, variant)
        except SolverFailure as exc:
            log.warning("stopping: %s", exc)
            termination = Termination.SOLVER_FAILURE
            break
        prev = records[-1].coverage if records else None
        records.append(rec)
        best = state
        if prev is not None and rec.coverage == prev:
            unchanged += 1
            if unchanged >= options.patience:
                termination = Termination.CONVERGED
                break
        else:
            unchanged = 0
        if options.stop_at_full and rec.coverage == scenario.M:
            termination = Termination.FULL_COVERAGE
            break
    if best is None:
        return SolveReport(records, None, None, [], termination, time.perf_counter() - start, scenario.M,
                           initial, technique, {"conic_solves": ctx.solves})
    return SolveReport(records, best.traj, best.schedule, records[-1].covered_set, termination,
                       time.perf_counter() - start, scenario.M, initial, technique, {"conic_solves": ctx.solves})
