"""Command line: solve, sweep, robust, baseline, plot.

Exit codes: 0 success, 2 infeasible scenario, 3 solver failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from ..bcd import BcdOptions, Termination, optimize
from ..init_traj import InitKind, build_init
from ..model import RateConvention, SystemParams, min_mission_energy, validate
from ..robust import MedmOptions, optimize_medm, optimize_wc
from ..schedule import ScheduleOptions
from .baselines import static_fdma_baseline, static_tdma_baseline
from .experiments import ExperimentConfig, Technique, cross_cells, error_samples, realized, run_experiments
from .metrics import as_dict
from .scenarios import ScenarioConfig, generate_scenario, load_scenario, save_scenario

log = logging.getLogger("aerialbs")

EXIT_OK, EXIT_INFEASIBLE, EXIT_SOLVER = 0, 2, 3
INITS = {"cit": InitKind.CIRCULAR, "dit": InitKind.DESIGNED}
DEFAULT_T, DEFAULT_ETOT = 120.0, 2.5e4


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x]


def _seeds(text: str) -> list[int]:
    """``0-19`` or ``1,4,7``."""
    if "-" in text and "," not in text:
        lo, hi = text.split("-")
        return list(range(int(lo), int(hi) + 1))
    return [int(x) for x in text.split(",") if x]


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("scenario and mission")
    g.add_argument("--scenario", type=Path, help="scenario JSON file (overrides --seed)")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--T", type=float, default=None, help=f"mission time in seconds (default {DEFAULT_T:g})")
    g.add_argument("--etot", type=float, default=None, help=f"on-board energy in joules (default {DEFAULT_ETOT:g})")
    g.add_argument("--init", choices=sorted(INITS), default="dit")
    g.add_argument("--rate-convention", choices=[c.value for c in RateConvention], default=None,
                   help="bits per slot with or without the slot duration (default physical)")
    g.add_argument("--M", type=int, default=8, help="users in generated scenarios")
    g.add_argument("--out", type=Path, default=Path("out"))
    g.add_argument("--threads", type=int, default=1, help="worker processes for sweeps")
    s = p.add_argument_group("solvers")
    ex = s.add_mutually_exclusive_group()
    ex.add_argument("--sched-exact", dest="sched_exact", action="store_true", default=True)
    ex.add_argument("--sched-heuristic", dest="sched_exact", action="store_false")
    s.add_argument("--sched-timeout-s", type=float, default=30.0)
    s.add_argument("--max-iterations", type=int, default=30)
    s.add_argument("--dump-subproblems", type=Path, default=None, metavar="DIR",
                   help="write every conic subproblem to DIR")
    r = p.add_argument_group("location errors")
    r.add_argument("--uli-sigma", type=float, default=0.0, help="per-axis error std in metres")
    r.add_argument("--robust", choices=["none", "wc", "medm", "both"], default="none")
    r.add_argument("--medm-epsilon", type=float, default=1e-3)
    p.add_argument("-v", "--verbose", action="count", default=0)
    return p


def _bcd_options(args) -> BcdOptions:
    sched = ScheduleOptions(exact=args.sched_exact, timeout_s=args.sched_timeout_s)
    return BcdOptions(schedule=sched, max_iterations=args.max_iterations, dump_dir=args.dump_subproblems)


def _problem(args):
    """Scenario and parameters; explicit flags override a scenario file's parameter block."""
    file_params = None
    if args.scenario is not None:
        scenario, file_params = load_scenario(args.scenario)
    base = file_params or SystemParams()
    T = args.T if args.T is not None else (file_params.T if file_params else DEFAULT_T)
    E = args.etot if args.etot is not None else (file_params.E_tot if file_params else DEFAULT_ETOT)
    conv = args.rate_convention or base.rate_convention
    params = base.with_(N=int(round(T / base.delta_t)), E_tot=E, rate_convention=conv)
    if args.scenario is None:
        scenario = generate_scenario(args.seed, ScenarioConfig(M=args.M), params)
    return scenario, params


def _robust_list(choice: str) -> list[Technique]:
    return {"none": [], "wc": [Technique.WC], "medm": [Technique.MEDM],
            "both": [Technique.WC, Technique.MEDM]}[choice]


def cmd_solve(args) -> int:
    scenario, params = _problem(args)
    args.out.mkdir(parents=True, exist_ok=True)
    save_scenario(scenario, args.out / "scenario.json", params)
    if min_mission_energy(params) > params.E_tot:
        print(f"infeasible: flying {params.T:g} s needs at least {min_mission_energy(params):.0f} J")
        return EXIT_INFEASIBLE
    opts = _bcd_options(args)
    kind = INITS[args.init]
    init = build_init(kind, scenario, params)
    name = f"IA-{args.init.upper()}"
    report = optimize(scenario, params, init, opts, technique=name)
    report.save(args.out / f"{name}.json")
    reports = {name: report}
    if report.trajectory is not None:
        d_th = 3.0 * args.uli_sigma
        for tech in _robust_list(args.robust):
            if tech is Technique.WC:
                rep = optimize_wc(scenario, params, init, d_th, opts)
            else:
                rep = optimize_medm(scenario, params, report, args.medm_epsilon,
                                    MedmOptions(epsilon=args.medm_epsilon, bcd=opts))
            rep.save(args.out / f"{tech.value}.json")
            reports[tech.value] = rep
    summary = {}
    for tname, rep in reports.items():
        entry = {"coverage": rep.coverage, "M": rep.M, "covered_set": rep.covered_set,
                 "termination": rep.termination.value, "iterations": len(rep.iterations),
                 "energy_used": rep.energy_used, "wall_time": rep.wall_time}
        if rep.trajectory is not None:
            entry["valid"] = validate(rep.trajectory, rep.schedule, scenario, params).ok
            if args.uli_sigma > 0:
                errs = error_samples(args.seed, args.uli_sigma, scenario.M, 1000)
                entry["realized_coverage"], entry["all_covered_fraction"] = realized(
                    rep.trajectory, rep.schedule, scenario, params, rep.covered_set, errs)
        summary[tname] = entry
    (args.out / "summary.json").write_text(json.dumps(summary, indent=1))
    print(json.dumps(summary, indent=1))
    if report.trajectory is not None:
        from .plots import plot_speed, plot_trajectories
        plot_trajectories(scenario, reports, args.out / "trajectory.svg", title=name)
        plot_speed(report, params.delta_t, args.out / "speed.svg", title=name)
    if report.termination is Termination.INFEASIBLE:
        return EXIT_INFEASIBLE
    if report.termination is Termination.SOLVER_FAILURE:
        return EXIT_SOLVER
    return EXIT_OK


def _config(args, techniques, cells=None, sigmas=(0.0,)) -> ExperimentConfig:
    return ExperimentConfig(
        seeds=tuple(_seeds(args.seeds)), T_values=tuple(_floats(args.T_values)),
        E_values=tuple(_floats(args.etot_values)), techniques=tuple(techniques), sigmas=tuple(sigmas),
        out_dir=args.out, cells=cells, scenario=ScenarioConfig(M=args.M),
        rate_convention=args.rate_convention or RateConvention.PHYSICAL,
        bcd=_bcd_options(args), robust_init=INITS[args.init], medm_epsilon=args.medm_epsilon,
        threads=args.threads)


def cmd_sweep(args) -> int:
    techniques = [Technique(t) for t in args.techniques.split(",")]
    cells = None
    if args.cross:
        T_vals, E_vals = _floats(args.T_values), _floats(args.etot_values)
        cells = cross_cells(T_vals, E_vals, max(T_vals), max(E_vals))
    result = run_experiments(_config(args, techniques, cells))
    failed = sum(1 for r in result.rows if r.error)
    print(f"{len(result.rows)} rows, {failed} failed cells; outputs in {args.out}")
    return EXIT_OK


def cmd_robust(args) -> int:
    sigmas = _floats(args.sigmas) if args.sigmas else [args.uli_sigma]
    if not any(s > 0 for s in sigmas):
        print("the location-error study needs a positive --uli-sigma or --sigmas")
        return EXIT_INFEASIBLE
    nominal = Technique.IA_DIT if args.init == "dit" else Technique.IA_CIT
    chosen = _robust_list(args.robust if args.robust != "none" else "both")
    T = args.T if args.T is not None else DEFAULT_T
    E = args.etot if args.etot is not None else DEFAULT_ETOT
    cells = [(T, e) for e in _floats(args.etot_values)] if args.etot_sweep else [(T, E)]
    cfg = _config(args, [nominal, *chosen], cells=tuple(cells), sigmas=tuple(sigmas))
    result = run_experiments(cfg)
    print(f"{len(result.rows)} rows; outputs in {args.out}")
    return EXIT_OK


def cmd_baseline(args) -> int:
    scenario, params = _problem(args)
    opts = _bcd_options(args).schedule
    rows = [static_tdma_baseline(scenario, params, opts, args.seed), static_fdma_baseline(scenario, params, args.seed)]
    out = [as_dict(r) for r in rows]
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "baselines.json").write_text(json.dumps(out, indent=1))
    print(json.dumps(out, indent=1))
    return EXIT_OK


def cmd_plot(args) -> int:
    from .plots import render_all
    made = render_all(args.out)
    print(f"wrote {len(made)} plots to {args.out / 'plots'}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="aerialbs", description="Coverage maximization for an energy-limited "
                                     "fixed-wing aerial base station.")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("solve", parents=[common], help="optimize one scenario")
    p.set_defaults(func=cmd_solve)
    grid = argparse.ArgumentParser(add_help=False)
    grid.add_argument("--seeds", default="0-19", help="'0-19' or a comma list")
    grid.add_argument("--T-values", default="40,60,80,100,120")
    grid.add_argument("--etot-values", default="10000,15000,20000,25000")
    p = sub.add_parser("sweep", parents=[common, grid], help="grid of techniques, seeds, T and E_tot")
    p.add_argument("--techniques", default="IA-CIT,IA-DIT,static-TDMA,static-FDMA",
                   help="comma list from: " + ",".join(t.value for t in Technique))
    p.add_argument("--cross", action="store_true",
                   help="sweep T at the largest E_tot and E_tot at the largest T instead of the full grid")
    p.set_defaults(func=cmd_sweep)
    p = sub.add_parser("robust", parents=[common, grid], help="location-error study")
    p.add_argument("--sigmas", default="", help="comma list of error std values (default --uli-sigma)")
    p.add_argument("--etot-sweep", action="store_true", help="repeat over --etot-values at --T")
    p.set_defaults(func=cmd_robust)
    p = sub.add_parser("baseline", parents=[common], help="static TDMA and FDMA baselines")
    p.set_defaults(func=cmd_baseline)
    p = sub.add_parser("plot", parents=[common], help="re-render figures from an output directory")
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
