"""
Artifact writers for simulation, geodesic and certificate runs.

Every figure is produced by a generated ``plot_results.py`` placed next to
the CSV files.  The same script is executed once in-process (Agg backend) so
PNGs exist without a second step, and it can be rerun or edited later.
"""

from __future__ import annotations

import csv
import os
import runpy
from pathlib import Path
from typing import Optional

import numpy as np

from .geodesic import GeodesicSolution
from .sim import TrajectoryLog, containment_time, energy_slope, omega_radius, residual_milestone

__all__ = [
    "write_trajectory",
    "write_energy",
    "write_snapshots",
    "simulation_summary",
    "write_summary",
    "write_plot_script",
    "render_figures",
    "write_simulation",
    "write_geodesic",
    "write_lmi_report",
    "PLOT_SCRIPT",
]

FLOAT_FMT = "{:.17g}"


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return FLOAT_FMT.format(float(v))
    return str(v)


def _write_rows(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def write_trajectory(log: TrajectoryLog, path: Path):
    cols = log.columns()
    _write_rows(path, list(cols), zip(*cols.values()))


def write_energy(log: TrajectoryLog, path: Path):
    _write_rows(path, ["t", "E", "geodesic_residual"], zip(log.t, log.energy, log.residual))


def write_snapshots(log: TrajectoryLog, path: Path):
    n = log.x.shape[1]
    rows = []
    for t, vals in log.snapshots:
        N = vals.shape[1] - 1
        s = np.cos(np.pi * np.arange(N + 1) / N)
        for j in range(N + 1):
            rows.append([t, j, s[j], *vals[:, j]])
    _write_rows(path, ["t", "node", "s", *[f"x{i + 1}" for i in range(n)]], rows)


def simulation_summary(log: TrajectoryLog, runtime: Optional[float] = None) -> dict:
    """Scalar diagnostics of one run, in a stable key order."""
    spec = log.spec
    plant, cert, _ = spec.resolve()
    out = {
        "realization": spec.realization.value,
        "plant": plant.name,
        "steps": log.steps,
        "t_final": float(log.t[-1]),
        "diverged": log.diverged,
    }
    if log.diverged:
        out["divergence_reason"] = log.reason
    try:
        out["energy_slope_0.1_2"] = energy_slope(log)
    except ValueError:
        out["energy_slope_0.1_2"] = float("nan")
    out["energy_initial"] = float(log.energy[0])
    out["energy_final"] = float(log.energy[-1])
    r0 = float(log.residual[0])
    out["residual_initial"] = r0
    k05 = int(round(0.05 / spec.cfg.tau_s))
    if k05 < len(log.t):
        out["residual_at_0.05"] = float(log.residual[k05])
        out["residual_ratio_at_0.05"] = float(log.residual[k05] / r0) if r0 > 0 else 0.0
    hit = residual_milestone(log, 0.05)
    out["residual_5pct_time"] = "never" if hit is None else hit
    # how much faster the path straightens than the plant contracts
    slope = out["energy_slope_0.1_2"]
    if hit and slope < 0:
        out["time_scale_separation"] = (-1.0 / slope) / hit
    out["err_norm_final"] = float(log.err_norm[-1])
    out["xtilde_norm_final"] = float(log.xtilde_norm[-1])
    delta = spec.disturbance.bound
    if delta > 0:
        radius = omega_radius(spec.cfg, cert, delta)
        t_in = containment_time(log, radius)
        out["disturbance_bound"] = delta
        out["overshoot_R"] = cert.overshoot
        out["omega_radius"] = radius
        out["containment_time"] = "never" if t_in is None else t_in
        xt_bound = 2.0 * delta / (spec.cfg.beta_bar + cert.lam)
        tail = log.xtilde_norm[len(log.t) * 4 // 5:]
        out["xtilde_bound"] = xt_bound
        out["xtilde_steady_max"] = float(np.max(tail))
        out["xtilde_bound_ok"] = bool(np.max(tail) <= xt_bound)
    if log.solver_iterations is not None:
        out["solver_iterations_mean"] = float(np.mean(log.solver_iterations))
    if runtime is not None:
        out["runtime_s"] = runtime
    return out


def write_summary(summary: dict, path: Path):
    with open(path, "w") as fh:
        for k, v in summary.items():
            fh.write(f"{k} = {_fmt(v)}\n")


PLOT_SCRIPT = '''\
"""Figures for one run directory.  Usage: python plot_results.py [run_dir]"""
import csv
import os
import sys

import matplotlib

if not os.environ.get("DISPLAY"):
    matplotlib.use("Agg")
import matplotlib.pyplot as plt


def read(path):
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    return {k: [float(r[k]) for r in rows] for k in (rows[0] if rows else [])}


def main(run_dir):
    join = lambda name: os.path.join(run_dir, name)
    traj = read(join("trajectory.csv"))
    energy = read(join("energy.csv"))
    snaps = read(join("path_snapshots.csv"))
    states = sorted(k for k in traj if k[0] == "x" and k[1:].isdigit())

    fig, ax = plt.subplots(1, 2, figsize=(10, 4))
    E = [(t, e) for t, e in zip(energy["t"], energy["E"]) if e > 0]
    ax[0].semilogy([t for t, _ in E], [e for _, e in E])
    ax[0].set_xlabel("t")
    ax[0].set_ylabel("path energy E")
    R = [(t, r) for t, r in zip(energy["t"], energy["geodesic_residual"]) if r > 0]
    ax[1].semilogy([t for t, _ in R], [r for _, r in R])
    ax[1].set_xlabel("t")
    ax[1].set_ylabel("geodesic residual")
    fig.tight_layout()
    fig.savefig(join("energy.png"), dpi=120)

    fig, ax = plt.subplots(2, 1, figsize=(8, 6), sharex=True)
    for k in states:
        ax[0].plot(traj["t"], traj[k], label=k)
    ax[0].legend()
    ax[0].set_ylabel("state")
    ax[1].plot(traj["t"], traj["err_norm"], label="|x - x*|")
    ax[1].plot(traj["t"], traj["xtilde_norm"], label="|x - c(t, measured end)|")
    ax[1].set_yscale("symlog", linthresh=1e-3)
    ax[1].set_xlabel("t")
    ax[1].legend()
    fig.tight_layout()
    fig.savefig(join("trajectory.png"), dpi=120)

    if len(states) >= 2 and snaps:
        a, b = states[0], states[1]
        fig, ax = plt.subplots(figsize=(6, 5))
        times = sorted(set(snaps["t"]))
        for t in times[:: max(1, len(times) // 12)]:
            idx = [i for i, tt in enumerate(snaps["t"]) if tt == t]
            ax.plot([snaps[a][i] for i in idx], [snaps[b][i] for i in idx], ".-", lw=0.8)
        ax.plot(traj[a], traj[b], "k", lw=1.2, label="x(t)")
        ax.set_xlabel(a)
        ax.set_ylabel(b)
        ax.legend()
        fig.tight_layout()
        fig.savefig(join("paths.png"), dpi=120)
    plt.close("all")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else os.path.dirname(os.path.abspath(__file__)))
'''


def write_plot_script(out_dir: Path) -> Path:
    path = Path(out_dir) / "plot_results.py"
    path.write_text(PLOT_SCRIPT)
    return path


def render_figures(out_dir: Path):
    """Run the generated script on ``out_dir`` with a non-interactive backend."""
    import matplotlib

    matplotlib.use("Agg")
    script = write_plot_script(out_dir)
    ns = runpy.run_path(str(script), run_name="ccmpath_plot")
    ns["main"](str(out_dir))


def write_simulation(log: TrajectoryLog, out_dir, runtime=None, figures: bool = True) -> dict:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_trajectory(log, out_dir / "trajectory.csv")
    write_energy(log, out_dir / "energy.csv")
    write_snapshots(log, out_dir / "path_snapshots.csv")
    summary = simulation_summary(log, runtime)
    write_summary(summary, out_dir / "summary.txt")
    write_plot_script(out_dir)
    if figures:
        render_figures(out_dir)
    return summary


def write_geodesic(sol: GeodesicSolution, out_dir) -> dict:
    """``geodesic.csv`` (nodes), ``geodesic_trace.csv`` and ``summary.txt``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    vals = sol.path.values
    n = vals.shape[0]
    s = sol.path.grid.nodes
    _write_rows(out_dir / "geodesic.csv", ["node", "s", *[f"x{i + 1}" for i in range(n)]],
                ([j, s[j], *vals[:, j]] for j in range(vals.shape[1])))
    res = sol.residual_trace or [float("nan")] * len(sol.energy_trace)
    _write_rows(out_dir / "geodesic_trace.csv", ["iteration", "energy", "residual"],
                ([k, e, r] for k, (e, r) in enumerate(zip(sol.energy_trace, res))))
    summary = {
        "energy": sol.energy,
        "residual": sol.residual,
        "iterations": sol.iterations,
        "converged": sol.converged,
        "grad_norm": sol.grad_norm,
    }
    write_summary(summary, out_dir / "summary.txt")
    return summary


def write_lmi_report(x, u, residuals, summary: dict, out_dir):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    n, m = x.shape[1], u.shape[1]
    header = ["sample", *[f"x{i + 1}" for i in range(n)], *[f"u{i + 1}" for i in range(m)],
              "residual"]
    _write_rows(out_dir / "lmi_report.csv", header,
                ([k, *x[k], *u[k], residuals[k]] for k in range(len(residuals))))
    write_summary(summary, out_dir / "summary.txt")


def default_output_root() -> Path:
    return Path(os.environ.get("CCMPATH_OUT", "ccmpath_runs"))
