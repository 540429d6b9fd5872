"""
Command line entry point.

    ccmpath simulate --config FILE [--out DIR] [--realization KIND] [--seed INT]
    ccmpath geodesic --config FILE [--out DIR]
    ccmpath verify   --config FILE [--out DIR]

Exit status: 0 on success (a diverged simulation is still a success),
1 on a usage or configuration error, 2 when ``verify`` finds a violation.
Without ``--out`` results go to ``$CCMPATH_OUT/<name>`` (default root
``ccmpath_runs``).  ``--config`` also accepts the name of a shipped
scenario (``nominal_fig34``, ``robust_fig5``).
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from importlib import resources
from pathlib import Path

import numpy as np

from . import report
from .ccm import certified_rate, lmi_residual
from .config import ConfigError, RunConfig, load_config
from .geodesic import GeodesicProblem, solve_geodesic
from .geometry import euclidean_metric
from .pathdyn import Realization
from .plant import get_certificate, get_plant
from .sim import ExperimentSpec, run

log = logging.getLogger("ccmpath")

EXIT_OK, EXIT_CONFIG, EXIT_VERIFY = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def shipped_scenarios() -> list:
    root = resources.files("ccmpath") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".yaml"))


def resolve_config_path(arg: str) -> Path:
    p = Path(arg)
    if p.exists() or p.suffix:
        return p
    candidate = resources.files("ccmpath") / "scenarios" / f"{arg}.yaml"
    return Path(str(candidate)) if candidate.is_file() else p


def _out_dir(cfg: RunConfig, args) -> Path:
    if args.out:
        return Path(args.out)
    if cfg.output:
        return Path(cfg.output)
    return report.default_output_root() / cfg.name


def experiment(cfg: RunConfig, kind, seed=None) -> ExperimentSpec:
    return ExperimentSpec(
        realization=kind,
        x0=cfg.x0,
        x_star=cfg.xstar,
        horizon=cfg.horizon,
        cfg=cfg.controller,
        plant=cfg.plant,
        disturbance=cfg.disturbance,
        u_star=cfg.ustar,
        seed=cfg.seed if seed is None else seed,
        snapshot_stride=cfg.log_stride,
    )


def cmd_simulate(cfg: RunConfig, args) -> int:
    kinds = [args.realization] if args.realization else list(cfg.realizations)
    kinds = [Realization.parse(k) for k in kinds]
    root = _out_dir(cfg, args)
    for kind in kinds:
        spec = experiment(cfg, kind, args.seed)
        t0 = time.perf_counter()
        tlog = run(spec)
        elapsed = time.perf_counter() - t0
        out = root / kind.value
        summary = report.write_simulation(tlog, out, runtime=elapsed, figures=not args.no_figures)
        print(f"{kind.value}: steps={summary['steps']} diverged={str(summary['diverged']).lower()} "
              f"slope={summary['energy_slope_0.1_2']:.4f} err_final={summary['err_norm_final']:.4g} "
              f"-> {out}")
    return EXIT_OK


def cmd_geodesic(cfg: RunConfig, args) -> int:
    g = cfg.geodesic
    if g is None:
        x_from, x_to, N, opts, metric_name = cfg.xstar, cfg.x0, cfg.controller.N, {}, "benchmark"
    else:
        x_from, x_to, N, metric_name = g.x_from, g.x_to, g.N, g.metric
        opts = {"max_iter": g.max_iter, "gtol": g.gtol}
    if metric_name == "euclidean":
        metric = euclidean_metric(len(x_from))
    else:
        metric = get_certificate(cfg.plant).metric
        if metric.dim != len(x_from):
            raise ConfigError(f"geodesic endpoints have {len(x_from)} entries, "
                              f"the {cfg.plant} metric needs {metric.dim}")
    sol = solve_geodesic(GeodesicProblem(metric, np.asarray(x_from, float),
                                         np.asarray(x_to, float), N=N, **opts))
    out = _out_dir(cfg, args) / "geodesic"
    summary = report.write_geodesic(sol, out)
    print(f"geodesic: energy={summary['energy']:.10g} residual={summary['residual']:.3e} "
          f"iterations={summary['iterations']} converged={str(summary['converged']).lower()} -> {out}")
    return EXIT_OK


def lmi_sweep(cfg: RunConfig):
    """Uniform samples of the state and input boxes and the residual at each."""
    v = cfg.verify
    plant = get_plant(cfg.plant)
    cert = get_certificate(cfg.plant, v.lam)
    rng = np.random.default_rng(v.seed)
    x = rng.uniform(*v.box, size=(v.samples, plant.n))
    u = rng.uniform(*v.u_box, size=(v.samples, plant.m))
    res = np.atleast_1d(lmi_residual(cert, plant, x, u))
    eigW = np.linalg.eigvalsh(cert.metric.W(x))
    alpha1 = float(np.min(1.0 / eigW[:, -1]))
    alpha2 = float(np.max(1.0 / eigW[:, 0]))
    summary = {
        "plant": cfg.plant,
        "samples": v.samples,
        "lam": cert.lam,
        "tol": v.tol,
        "max_residual": float(np.max(res)),
        "violations": int(np.sum(res > v.tol)),
        "alpha1": alpha1,
        "alpha2": alpha2,
        "R": float(np.sqrt(alpha2 / alpha1)),
        "certified_rate": certified_rate(cert, plant, x, u, tol=v.tol),
    }
    summary["passed"] = summary["violations"] == 0
    return x, u, res, summary


def cmd_verify(cfg: RunConfig, args) -> int:
    x, u, res, summary = lmi_sweep(cfg)
    out = _out_dir(cfg, args) / "verify"
    report.write_lmi_report(x, u, res, summary, out)
    print(f"verify: max_residual={summary['max_residual']:.4g} tol={summary['tol']:g} "
          f"violations={summary['violations']}/{summary['samples']} "
          f"certified_rate={summary['certified_rate']:.4f} R={summary['R']:.4g} -> {out}")
    return EXIT_OK if summary["passed"] else EXIT_VERIFY


COMMANDS = {"simulate": cmd_simulate, "geodesic": cmd_geodesic, "verify": cmd_verify}


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ccmpath", description="Path-integrated CCM controller experiments.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        c = sub.add_parser(name)
        c.add_argument("--config", required=True,
                       help=f"YAML file or shipped scenario ({', '.join(shipped_scenarios())})")
        c.add_argument("--out", help="output directory (default $CCMPATH_OUT/<name>)")
        if name == "simulate":
            c.add_argument("--realization", choices=[k.value for k in Realization])
            c.add_argument("--seed", type=int)
            c.add_argument("--no-figures", action="store_true", help="skip PNG rendering")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(resolve_config_path(args.config))
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
