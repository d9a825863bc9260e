"""SVG figures rendered from emitted CSV tables and run reports only."""

from __future__ import annotations

import logging
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from ..bcd import SolveReport
from .metrics import read_csv
from .scenarios import load_scenario

log = logging.getLogger(__name__)

# stable ids and no timestamp so re-rendering gives identical files
matplotlib.rcParams["svg.hashsalt"] = "aerialbs"
_META = {"Date": None, "Creator": None}


def _save(fig, path) -> Path:
    path = Path(path)
    fig.savefig(path, format="svg", metadata=_META)
    plt.close(fig)
    return path


def _mean(rows, technique, x, y, **fixed):
    pts: dict = {}
    for r in rows:
        if r.technique != technique or r.error or any(getattr(r, k) != v for k, v in fixed.items()):
            continue
        val = getattr(r, y)
        if isinstance(val, float) and np.isnan(val):
            continue
        pts.setdefault(getattr(r, x), []).append(val)
    xs = sorted(pts)
    return xs, [float(np.mean(pts[k])) for k in xs]


def plot_trajectories(scenario, reports: dict, path, title="") -> Path:
    """Trajectories over the user layout; covered users are filled."""
    fig, ax = plt.subplots(figsize=(5.5, 5.5))
    pos = scenario.positions
    covered = set()
    for rep in reports.values():
        covered |= set(rep.covered_set)
    filled = np.array([i in covered for i in range(scenario.M)])
    ax.scatter(pos[filled, 0], pos[filled, 1], marker="^", c="tab:green", label="covered user", zorder=3)
    ax.scatter(pos[~filled, 0], pos[~filled, 1], marker="^", facecolors="none", edgecolors="tab:red",
               label="uncovered user", zorder=3)
    for i, (x, y) in enumerate(pos):
        ax.annotate(str(i), (x, y), textcoords="offset points", xytext=(4, 4), fontsize=7)
    ax.plot(*scenario.base_pos, "o", c="red", label="base", zorder=4)
    for name, rep in reports.items():
        if rep.trajectory is not None:
            ax.plot(rep.trajectory.s[:, 0], rep.trajectory.s[:, 1], lw=1.2, label=name)
    ax.set_xlim(0, scenario.area_size)
    ax.set_ylim(0, scenario.area_size)
    ax.set_aspect("equal")
    ax.set_xlabel("x (m)")
    ax.set_ylabel("y (m)")
    ax.set_title(title)
    ax.legend(fontsize=7, loc="upper left")
    return _save(fig, path)


def plot_speed(report: SolveReport, delta_t: float, path, title="") -> Path:
    """Speed over time with the serving user of each slot underneath."""
    traj = report.trajectory
    t = delta_t * np.arange(traj.N + 1)
    fig, (ax, bx) = plt.subplots(2, 1, figsize=(7, 4.5), sharex=True, gridspec_kw={"height_ratios": [3, 1]})
    ax.plot(t, traj.speeds, lw=1.2)
    ax.set_ylabel("speed (m/s)")
    ax.set_title(title)
    if report.schedule is not None:
        owner = report.schedule.owner()
        used = owner >= 0
        bx.scatter(t[1:][used], owner[used], s=4, c=owner[used], cmap="tab10")
        bx.set_ylabel("user")
    bx.set_xlabel("time (s)")
    return _save(fig, path)


def plot_sweep(rows, x: str, y: str, path, techniques=None, title="", ylabel=None, **fixed) -> Path:
    """Mean of ``y`` against ``x`` per technique."""
    techniques = techniques or sorted({r.technique for r in rows})
    fig, ax = plt.subplots(figsize=(6, 4))
    for tech in techniques:
        xs, ys = _mean(rows, tech, x, y, **fixed)
        if xs:
            ax.plot(xs, ys, marker="o", label=tech)
    ax.set_xlabel({"T": "T (s)", "E_tot": "E_tot (J)"}.get(x, x))
    ax.set_ylabel(ylabel or y)
    ax.set_title(title)
    ax.grid(alpha=0.3)
    if ax.get_legend_handles_labels()[1]:
        ax.legend(fontsize=8)
    return _save(fig, path)


def plot_iteration_cdf(rows, path, techniques=("IA-CIT", "IA-DIT"), title="", **fixed) -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    for tech in techniques:
        its = sorted(r.iterations for r in rows if r.technique == tech and not r.error
                     and all(getattr(r, k) == v for k, v in fixed.items()))
        if its:
            ax.step(its, np.arange(1, len(its) + 1) / len(its), where="post", label=tech)
    ax.set_xlabel("iterations to converge")
    ax.set_ylabel("CDF")
    ax.set_title(title)
    ax.grid(alpha=0.3)
    if ax.get_legend_handles_labels()[1]:
        ax.legend(fontsize=8)
    return _save(fig, path)


def plot_robust_bars(rows, path, title="") -> Path:
    """Realized coverage under sampled location errors, one bar group per technique."""
    sigmas = sorted({r.sigma for r in rows if r.sigma > 0})
    techs = sorted({r.technique for r in rows if r.sigma > 0 and not np.isnan(r.realized_coverage)})
    fig, ax = plt.subplots(figsize=(7, 4))
    width = 0.8 / max(1, len(sigmas))
    x = np.arange(len(techs))
    for k, sigma in enumerate(sigmas):
        vals = []
        for tech in techs:
            v = [r.realized_coverage for r in rows if r.technique == tech and r.sigma == sigma
                 and not np.isnan(r.realized_coverage)]
            vals.append(np.mean(v) if v else 0.0)
        ax.bar(x + k * width, vals, width, label=f"sigma={sigma:g} m")
    ax.set_xticks(x + width * (len(sigmas) - 1) / 2, techs)
    ax.set_ylabel("realized coverage probability")
    ax.set_ylim(0, 1.05)
    ax.set_title(title)
    if ax.get_legend_handles_labels()[1]:
        ax.legend(fontsize=8)
    return _save(fig, path)


def render_all(out_dir) -> list[Path]:
    """Re-render every figure from ``metrics.csv`` and the saved reports."""
    out_dir = Path(out_dir)
    rows = read_csv(out_dir / "metrics.csv")
    plots = out_dir / "plots"
    plots.mkdir(exist_ok=True)
    made = []
    nominal = [r for r in rows if r.sigma == 0]
    if nominal:
        Ts = sorted({r.T for r in nominal})
        Es = sorted({r.E_tot for r in nominal})
        E_hi, T_hi = max(Es), max(Ts)
        made.append(plot_sweep(nominal, "T", "coverage_probability", plots / "coverage_vs_T.svg",
                               title=f"E_tot = {E_hi:g} J", ylabel="coverage probability", E_tot=E_hi))
        made.append(plot_sweep(nominal, "E_tot", "coverage_probability", plots / "coverage_vs_E.svg",
                               title=f"T = {T_hi:g} s", ylabel="coverage probability", T=T_hi))
        mobile = [r for r in nominal if r.technique in ("IA-CIT", "IA-DIT", "DIT", "CIT")]
        made.append(plot_sweep(mobile, "T", "energy_used", plots / "energy_vs_T.svg",
                               title=f"E_tot = {E_hi:g} J", ylabel="energy used (J)", E_tot=E_hi))
        made.append(plot_iteration_cdf(nominal, plots / "iteration_cdf.svg", title=f"T = {T_hi:g} s",
                                       T=T_hi, E_tot=E_hi))
    if any(r.sigma > 0 for r in rows):
        made.append(plot_robust_bars(rows, plots / "robust_coverage.svg"))
        robust = [r for r in rows if r.sigma > 0]
        made.append(plot_sweep(robust, "E_tot", "realized_coverage", plots / "robust_vs_E.svg",
                               ylabel="realized coverage probability"))
    made += _render_examples(out_dir, plots)
    log.info("wrote %d plots to %s", len(made), plots)
    return made


def _render_examples(out_dir: Path, plots: Path) -> list[Path]:
    """Trajectory and speed figures for the lowest seed of each (T, E_tot) with a report."""
    rep_dir, sc_dir = out_dir / "reports", out_dir / "scenarios"
    if not rep_dir.is_dir():
        return []
    groups: dict = {}
    for f in sorted(rep_dir.glob("*.json")):
        tech, rest = f.stem.split("_seed", 1)
        seed, T, E, sigma = rest.replace("_T", " ").replace("_E", " ").replace("_sigma", " ").split()
        groups.setdefault((float(T), float(E), float(sigma)), {}).setdefault(int(seed), {})[tech] = f
    made = []
    for (T, E, sigma), by_seed in sorted(groups.items()):
        if sigma != 0:
            continue
        seed = min(by_seed)
        sc_file = sc_dir / f"seed{seed}_T{T:g}.json"
        if not sc_file.exists():
            continue
        scenario, _ = load_scenario(sc_file)
        reps = {tech: SolveReport.load(f) for tech, f in sorted(by_seed[seed].items())}
        reps = {k: v for k, v in reps.items() if v.trajectory is not None}
        if not reps:
            continue
        tag = f"seed{seed}_T{T:g}_E{E:g}"
        made.append(plot_trajectories(scenario, reps, plots / f"trajectory_{tag}.svg",
                                      title=f"seed {seed}, T = {T:g} s, E_tot = {E:g} J"))
        for tech, rep in reps.items():
            if rep.iterations:
                made.append(plot_speed(rep, T / rep.trajectory.N, plots / f"speed_{tech}_{tag}.svg",
                                       title=f"{tech}, seed {seed}"))
    return made

