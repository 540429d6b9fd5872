"""
Closed-loop simulation of the benchmark (or any registered plant) under the
forward, nominal, robust and static realizations.

For the dynamic realizations the plant state and the controller's path are
one ODE system stepped by the same RK4 stages, so the control entering the
plant at each stage is the one produced by the path at that stage.  In the
nominal case the measured end of the path then reproduces the plant state
to rounding.  The robust realization samples the measured state once per
interval (zero-order hold).  The static realization solves a geodesic at
each sample, warm-started from the previous one, and holds its control.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .ccm import CcmCertificate, Plant
from .geodesic import static_control
from .geometry import MetricDegeneracyError, PathState, _PathGeometry
from .chebdiff import chebgrid
from .pathdyn import (
    ControllerConfig,
    Realization,
    _rhs,
    _weights,
    initial_path,
)
from .plant import DisturbanceModel, ReferenceSignal, constant_setpoint, get_certificate, get_plant

__all__ = [
    "ExperimentSpec",
    "TrajectoryLog",
    "run",
    "omega_radius",
    "energy_slope",
    "residual_milestone",
    "containment_time",
    "DIVERGENCE_LIMIT",
]

DIVERGENCE_LIMIT = 1e6


@dataclass(frozen=True)
class ExperimentSpec:
    realization: Union[str, Realization]
    x0: tuple
    x_star: tuple = (0.0, 0.0, 0.0)
    horizon: float = 5.0
    cfg: ControllerConfig = field(default_factory=ControllerConfig)
    plant: Union[str, Plant] = "benchmark"
    certificate: Optional[CcmCertificate] = None
    disturbance: DisturbanceModel = field(default_factory=DisturbanceModel)
    u_star: Optional[tuple] = None
    seed: int = 0
    snapshot_stride: int = 50

    def __post_init__(self):
        object.__setattr__(self, "realization", Realization.parse(self.realization))
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        for name in ("x0", "x_star"):
            v = np.asarray(getattr(self, name), dtype=float)
            if not np.all(np.isfinite(v)):
                raise ValueError(f"{name} must be finite")
        if self.snapshot_stride < 1:
            raise ValueError("snapshot_stride must be >= 1")

    def resolve(self):
        plant = get_plant(self.plant) if isinstance(self.plant, str) else self.plant
        if self.certificate is not None:
            cert = self.certificate
        elif isinstance(self.plant, str):
            cert = get_certificate(self.plant)
        else:
            raise ValueError("a certificate is required for a custom plant")
        if self.u_star is None:
            ref = constant_setpoint(plant, self.x_star)
        else:
            xs = np.asarray(self.x_star, dtype=float)
            us = np.asarray(self.u_star, dtype=float)
            ref = ReferenceSignal(lambda t: xs, lambda t: us, constant=True)
        return plant, cert, ref


@dataclass
class TrajectoryLog:
    spec: ExperimentSpec
    t: np.ndarray
    x: np.ndarray
    u: np.ndarray
    x_star: np.ndarray
    energy: np.ndarray
    residual: np.ndarray
    err_norm: np.ndarray
    xtilde_norm: np.ndarray
    snapshots: list
    diverged: bool = False
    reason: str = ""
    solver_iterations: Optional[np.ndarray] = None

    @property
    def steps(self) -> int:
        return len(self.t) - 1

    def columns(self):
        """Per-step records as a dict of 1-D arrays (trajectory schema)."""
        out = {"t": self.t}
        for i in range(self.x.shape[1]):
            out[f"x{i + 1}"] = self.x[:, i]
        for i in range(self.u.shape[1]):
            out[f"u{i + 1}"] = self.u[:, i]
        out["err_norm"] = self.err_norm
        out["xtilde_norm"] = self.xtilde_norm
        return out


def _diverged(x, path_vals):
    return (not np.all(np.isfinite(x)) or np.max(np.abs(x)) > DIVERGENCE_LIMIT
            or not np.all(np.isfinite(path_vals)))


def run(spec: ExperimentSpec) -> TrajectoryLog:
    plant, cert, ref = spec.resolve()
    cfg = spec.cfg
    kind = spec.realization
    dt = cfg.tau_s
    steps = int(round(spec.horizon / dt))
    grid = chebgrid(cfg.N)
    n, m = plant.n, plant.m
    dist = spec.disturbance
    if dist.kind == "random" and dist.seed != spec.seed:
        dist = DisturbanceModel(dist.kind, dist.vector, dist.bound, dist.fn, spec.seed, dist.hold)

    t_arr = np.arange(steps + 1) * dt
    X = np.full((steps + 1, n), np.nan)
    U = np.full((steps + 1, m), np.nan)
    XS = np.full((steps + 1, n), np.nan)
    E = np.full(steps + 1, np.nan)
    R = np.full(steps + 1, np.nan)
    XH = np.full((steps + 1, n), np.nan)
    iters = np.zeros(steps + 1, dtype=int) if kind is Realization.STATIC else None
    snaps = []

    x = np.asarray(spec.x0, dtype=float).copy()
    path = initial_path(x, ref.x_star(0.0), grid)
    diverged, reason = False, ""
    last = steps

    for k in range(steps + 1):
        t = t_arr[k]
        xs = np.asarray(ref.x_star(t), dtype=float)
        us = np.asarray(ref.u_star(t), dtype=float)
        try:
            if kind is Realization.STATIC:
                u, sol = static_control(cert, x, xs, us, N=cfg.N, warm=path,
                                        max_iter=cfg.static_max_iter)
                path = sol.path
                iters[k] = sol.iterations
            geo = _PathGeometry(cert.metric, path)
            E[k] = geo.energy()
            R[k] = geo.residual()
            if kind is not Realization.STATIC:
                alpha, _ = _weights(cfg, cert, path, kind)
                eta = None if alpha is None else alpha / cfg.alpha_bar
                _, u = _rhs(kind, cfg, cert, plant, path, x, us, eta)
        except MetricDegeneracyError as exc:
            diverged, reason, last = True, f"metric degenerate: {exc}", k - 1
            break
        X[k], U[k], XS[k], XH[k] = x, u, xs, path.measured_end
        if k % spec.snapshot_stride == 0 or k == steps:
            snaps.append((t, path.values.copy()))
        if k == steps:
            break

        try:
            if kind is Realization.STATIC:
                x = _rk4_plant(plant, dist, x, u, t, dt)
            else:
                x, path = _rk4_joint(kind, cfg, cert, plant, ref, dist, x, path, t, dt, eta)
        except MetricDegeneracyError as exc:
            diverged, reason, last = True, f"metric degenerate: {exc}", k
            break
        if _diverged(x, path.values):
            diverged, reason, last = True, f"|x_i| exceeded {DIVERGENCE_LIMIT:g} or became non-finite", k
            break

    sl = slice(0, last + 1)
    return TrajectoryLog(
        spec=spec,
        t=t_arr[sl],
        x=X[sl],
        u=U[sl],
        x_star=XS[sl],
        energy=E[sl],
        residual=R[sl],
        err_norm=np.linalg.norm(X[sl] - XS[sl], axis=1),
        xtilde_norm=np.linalg.norm(X[sl] - XH[sl], axis=1),
        snapshots=snaps,
        diverged=diverged,
        reason=reason,
        solver_iterations=None if iters is None else iters[sl],
    )


def _rk4_plant(plant, dist, x, u, t, dt):
    def f(tt, xx):
        return plant.F(xx, u) + dist(tt, plant.n)

    k1 = f(t, x)
    k2 = f(t + 0.5 * dt, x + 0.5 * dt * k1)
    k3 = f(t + 0.5 * dt, x + 0.5 * dt * k2)
    k4 = f(t + dt, x + dt * k3)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _rk4_joint(kind, cfg, cert, plant, ref, dist, x, path, t, dt, eta):
    grid = path.grid
    x_meas = x.copy()

    def f(tt, xx, vals):
        cdot, u = _rhs(kind, cfg, cert, plant, PathState(grid, vals), x_meas,
                       ref.u_star(tt), eta)
        return plant.F(xx, u) + dist(tt, plant.n), cdot

    c = path.values
    if cfg.integrator == "euler":
        kx, kc = f(t, x, c)
        return x + dt * kx, PathState(grid, c + dt * kc)
    k1x, k1c = f(t, x, c)
    k2x, k2c = f(t + 0.5 * dt, x + 0.5 * dt * k1x, c + 0.5 * dt * k1c)
    k3x, k3c = f(t + 0.5 * dt, x + 0.5 * dt * k2x, c + 0.5 * dt * k2c)
    k4x, k4c = f(t + dt, x + dt * k3x, c + dt * k3c)
    x_new = x + (dt / 6.0) * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
    c_new = c + (dt / 6.0) * (k1c + 2.0 * k2c + 2.0 * k3c + k4c)
    return x_new, PathState(grid, c_new)


def omega_radius(cfg: ControllerConfig, cert: CcmCertificate, Delta: float,
                 R: Optional[float] = None) -> float:
    """Radius ``Rbar * Delta / lam`` of the set the robust loop converges to.

    ``Rbar = (1 + sqrt(1 + lam eps^2)) beta/(2 (beta + lam)) R + lam/(beta + lam)``
    with ``R`` the metric overshoot (estimated over the certificate box when
    not given).
    """
    lam = cert.lam
    R = cert.overshoot if R is None else R
    beta = cfg.beta_bar
    eps = cfg.epsilon
    if math.isinf(beta):
        rbar = 0.5 * (1.0 + math.sqrt(1.0 + lam * eps * eps)) * R
    else:
        rbar = ((1.0 + math.sqrt(1.0 + lam * eps * eps)) * beta / (2.0 * (beta + lam)) * R
                + lam / (beta + lam))
    return rbar * Delta / lam


def energy_slope(log: TrajectoryLog, window=(0.1, 2.0)) -> float:
    """Least-squares slope of ``log E`` against time over ``window``."""
    t0, t1 = window
    sel = (log.t >= t0 - 1e-12) & (log.t <= t1 + 1e-12) & (log.energy > 0)
    if sel.sum() < 2:
        raise ValueError(f"fewer than two positive energy samples in {window}")
    return float(np.polyfit(log.t[sel], np.log(log.energy[sel]), 1)[0])


def residual_milestone(log: TrajectoryLog, fraction: float = 0.05) -> Optional[float]:
    """First time the geodesic residual is at or below ``fraction`` of its initial value."""
    r0 = log.residual[0]
    hit = np.nonzero(log.residual <= fraction * r0)[0]
    return float(log.t[hit[0]]) if hit.size else None


def containment_time(log: TrajectoryLog, radius: float) -> Optional[float]:
    """Earliest time after which ``|x - x*|`` stays within ``radius``."""
    outside = np.nonzero(log.err_norm > radius)[0]
    if outside.size == 0:
        return 0.0
    k = outside[-1] + 1
    return float(log.t[k]) if k < len(log.t) else None
