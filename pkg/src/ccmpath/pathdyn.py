"""
Path dynamics of the dynamic CCM controller.

The controller state is a path ``c(t, .)`` from the reference state
(``s = -1``) to the predicted plant state (``s = +1``), sampled at the
Chebyshev nodes.  Every node follows the plant vector field under the
path-integrated control; the nominal variant adds a weighted covariant
derivative term that pulls the path towards a geodesic, and the robust
variant additionally feeds back the prediction error
``x_tilde = x - c(t, +1)``:

    forward   c_t = F(c, kappa_c)
    nominal   c_t = F(c, kappa_c) + alpha(s) D_s c_s
    robust    c_t = F(c, kappa_c) + alpha(s) D_s c_s + beta(s) x_tilde

with ``alpha = alpha_bar * eta`` and ``beta = beta_bar * zeta``.  The
gradient term uses the covariant derivative in the internal parameter
``s`` on [-1, 1].
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .ccm import CcmCertificate, Plant, feedback_along_path
from .chebdiff import ChebSeries, chebgrid, differentiate, evaluate, fit, integrate_cumulative
from .geometry import MetricField, PathState, _PathGeometry, _christoffel_from, metric_at

__all__ = [
    "Realization",
    "ControllerConfig",
    "ConfigError",
    "IntegrationBlowupError",
    "initial_path",
    "fixed_weighting",
    "zeta_profile",
    "smoothstep",
    "Lemma1Weighting",
    "lemma1_weighting",
    "path_rhs",
    "step",
    "stiffness_radius",
]

# RK4 real-axis stability limit is ~2.785, forward Euler's is 2
STABILITY_CEILING = {"rk4": 2.5, "euler": 1.8}
PLATEAU_CLAMP = (0.05, 0.95)
PLATEAU_RESAMPLE = 128  # 129-point Chebyshev resample
ZERO_RESIDUAL_RTOL = 1e-20


class ConfigError(ValueError):
    pass


class IntegrationBlowupError(ArithmeticError):
    def __init__(self, t, message="non-finite path state"):
        self.t = t
        super().__init__(f"{message} at t = {t}")


class Realization(str, enum.Enum):
    FORWARD = "forward"
    NOMINAL = "nominal"
    ROBUST = "robust"
    STATIC = "static"

    @classmethod
    def parse(cls, value) -> "Realization":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "_")
        aliases = {"static_geodesic": "static", "staticgeodesic": "static", "geodesic": "static"}
        key = aliases.get(key, key)
        try:
            return cls(key)
        except ValueError:
            raise ConfigError(
                f"unknown realization {value!r}; choose from {[r.value for r in cls]}"
            ) from None


def stiffness_radius(N: int, eta_mode: str) -> float:
    """Spectral radius of the weighted second-derivative operator on interior nodes.

    Bounds the linear part of the gradient-flow term per unit ``alpha_bar``.
    For the adaptive weighting the weight can reach 1 at every interior node.
    """
    g = chebgrid(N)
    D2 = g.diff2_matrix[1:-1, 1:-1]
    if eta_mode == "fixed":
        D2 = fixed_weighting(g.nodes[1:-1])[:, None] * D2
    return float(np.abs(np.linalg.eigvals(D2)).max())


@dataclass(frozen=True)
class ControllerConfig:
    """Tunables of the dynamic realization.

    ``alpha_bar`` and ``beta_bar`` have units 1/time; ``tau`` is the residual
    fraction captured by the adaptive weighting; ``epsilon`` defaults to its
    smallest admissible value ``sqrt(2/(alpha_bar*tau))``.
    """

    alpha_bar: float = 200.0
    beta_bar: float = 50.0
    tau: float = 0.5
    epsilon: Optional[float] = None
    N: int = 4
    tau_s: float = 1e-3
    eta_mode: str = "fixed"
    zeta: str = "linear"
    integrator: str = "rk4"
    static_max_iter: int = 200

    def __post_init__(self):
        if not self.alpha_bar >= 0:
            raise ConfigError("alpha_bar must be >= 0")
        if not self.beta_bar >= 0:
            raise ConfigError("beta_bar must be >= 0")
        if not 0.0 < self.tau < 1.0:
            raise ConfigError("tau must lie in (0, 1)")
        if int(self.N) != self.N or self.N < 2:
            raise ConfigError("N must be an integer >= 2")
        if not self.tau_s > 0:
            raise ConfigError("tau_s must be positive")
        if self.eta_mode not in ("fixed", "adaptive"):
            raise ConfigError("eta_mode must be 'fixed' or 'adaptive'")
        if self.zeta not in ("linear", "smoothstep"):
            raise ConfigError("zeta must be 'linear' or 'smoothstep'")
        if self.integrator not in STABILITY_CEILING:
            raise ConfigError(f"integrator must be one of {sorted(STABILITY_CEILING)}")
        if self.epsilon is None:
            eps = math.sqrt(2.0 / (self.alpha_bar * self.tau)) if self.alpha_bar > 0 else 1.0
            object.__setattr__(self, "epsilon", eps)
        if not self.epsilon > 0:
            raise ConfigError("epsilon must be positive")
        if self.alpha_bar > 0:
            eps_min = math.sqrt(2.0 / (self.alpha_bar * self.tau))
            if self.epsilon < eps_min * (1 - 1e-12):
                raise ConfigError(
                    f"epsilon = {self.epsilon:g} violates epsilon >= sqrt(2/(alpha_bar*tau)) = {eps_min:g}"
                )
        stiff = self.tau_s * self.alpha_bar * stiffness_radius(self.N, self.eta_mode)
        ceiling = STABILITY_CEILING[self.integrator]
        if stiff > ceiling:
            raise ConfigError(
                f"tau_s*alpha_bar*radius = {stiff:.3f} exceeds the {self.integrator} "
                f"stability ceiling {ceiling}; reduce tau_s or alpha_bar"
            )


def initial_path(x0, xstar0, grid) -> PathState:
    """Straight line from the reference ``xstar0`` to the measured ``x0``."""
    return PathState.straight_line(xstar0, x0, grid)


def fixed_weighting(s):
    """Default gradient-flow weight ``(1 - s^2)^2``; vanishes at both ends."""
    s = np.asarray(s, dtype=float)
    return (1.0 - s * s) ** 2


def smoothstep(x, a: float, b: float):
    """Quintic ramp: 0 for ``x <= a``, 1 for ``x >= b``, C^2 in between."""
    x = np.asarray(x, dtype=float)
    if b <= a:
        return (x >= b).astype(float)
    r = np.clip((x - a) / (b - a), 0.0, 1.0)
    return r * r * r * (10.0 + r * (-15.0 + 6.0 * r))


def zeta_profile(s, kind: str = "linear"):
    """Robust feedback profile on [-1, 1]: 0 at the reference end, 1 at the measured end."""
    sigma = 0.5 * (np.asarray(s, dtype=float) + 1.0)
    if kind == "linear":
        return sigma
    return smoothstep(sigma, 0.0, 1.0)


@dataclass(frozen=True)
class Lemma1Weighting:
    """Plateau weight with ramps ``[0, s0]`` and ``[s1, 1]`` in unit-interval coordinates.

    ``total`` is the unweighted residual mass ``C``; when it is zero the
    weight is identically zero.
    """

    s0: float
    s1: float
    total: float
    nodes: np.ndarray = field(repr=False)

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        if self.total == 0.0:
            return np.zeros_like(s)
        sigma = 0.5 * (s + 1.0)
        return smoothstep(sigma, 0.0, self.s0) * (1.0 - smoothstep(sigma, self.s1, 1.0))


def residual_density(m: MetricField, path: PathState, s):
    """``|D_s c_s|_M^2`` of the interpolated path at arbitrary points ``s``."""
    coeffs = ChebSeries(path.coeffs)
    d1 = differentiate(coeffs)
    d2 = differentiate(d1)
    x = evaluate(coeffs, s).T
    xs = evaluate(d1, s).T
    xss = evaluate(d2, s).T
    M, W = metric_at(m, x)
    G = _christoffel_from(M, W, m.dW(x))
    nab = xss + np.einsum("jkab,ja,jb->jk", G, xs, xs)
    return np.einsum("ja,jab,jb->j", nab, M, nab)


def _invert_first(mu: ChebSeries, target: float, s_fine: np.ndarray, mu_fine: np.ndarray):
    # first s with mu(s) >= target
    idx = int(np.argmax(mu_fine >= target))
    if idx == 0:
        return -1.0
    lo, hi = s_fine[idx - 1], s_fine[idx]
    return _bisect(mu, target, lo, hi)


def _invert_last(mu: ChebSeries, target: float, s_fine: np.ndarray, mu_fine: np.ndarray):
    # last s with mu(s) <= target
    below = np.nonzero(mu_fine <= target)[0]
    idx = int(below[-1]) if below.size else 0
    if idx == len(s_fine) - 1:
        return 1.0
    lo, hi = s_fine[idx], s_fine[idx + 1]
    return _bisect(mu, target, lo, hi)


def _bisect(mu, target, lo, hi, iters=60):
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if evaluate(mu, mid) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def lemma1_weighting(m: MetricField, path: PathState, tau: float) -> Lemma1Weighting:
    """Adaptive weight capturing at least a fraction ``tau`` of the residual mass.

    The cumulative residual ``mu(s)`` is integrated on a 129-point resample
    and inverted at ``(1 - tau) C / 2`` and ``(1 + tau) C / 2``.  The plateau
    ends are clamped to [0.05, 0.95] of the unit interval to keep the ramps
    resolvable on the grid, unless the clamped weight would capture less
    than ``tau * C``; then the unclamped ends are kept.
    """
    if not 0.0 < tau < 1.0:
        raise ValueError("tau must lie in (0, 1)")
    fine = chebgrid(PLATEAU_RESAMPLE)
    dens = np.maximum(residual_density(m, path, fine.nodes), 0.0)
    mu = integrate_cumulative(fit(dens, fine))
    C = float(evaluate(mu, 1.0))
    E = _PathGeometry(m, path).energy()
    if not C > ZERO_RESIDUAL_RTOL * (1.0 + E) ** 2:
        return Lemma1Weighting(0.0, 1.0, 0.0, np.zeros(path.grid.size))
    s_fine = np.linspace(-1.0, 1.0, 2001)
    mu_fine = evaluate(mu, s_fine)
    a = _invert_first(mu, 0.5 * (1.0 - tau) * C, s_fine, mu_fine)
    b = _invert_last(mu, 0.5 * (1.0 + tau) * C, s_fine, mu_fine)
    lo, hi = PLATEAU_CLAMP
    s0, s1 = 0.5 * (a + 1.0), 0.5 * (b + 1.0)
    c0 = float(np.clip(s0, lo, hi))
    c1 = max(float(np.clip(s1, lo, hi)), c0)
    w = Lemma1Weighting(c0, c1, C, np.zeros(path.grid.size))
    if fine.weights @ (w(fine.nodes) * dens) < tau * C:
        # clamping cost too much mass; the exact inversion points always suffice
        w = Lemma1Weighting(float(s0), float(max(s1, s0)), C, np.zeros(path.grid.size))
    s0, s1 = w.s0, w.s1
    nodes = w(path.grid.nodes)
    nodes.setflags(write=False)
    return Lemma1Weighting(s0, s1, C, nodes)


def _weights(cfg: ControllerConfig, cert: CcmCertificate, path: PathState, kind, eta=None):
    nodes = path.grid.nodes
    if kind in (Realization.NOMINAL, Realization.ROBUST) and cfg.alpha_bar > 0:
        if eta is None:
            if cfg.eta_mode == "fixed":
                eta = fixed_weighting(nodes)
            else:
                eta = lemma1_weighting(cert.metric, path, cfg.tau).nodes
        alpha = cfg.alpha_bar * np.asarray(eta, dtype=float)
    else:
        alpha = None
    if kind is Realization.ROBUST and cfg.beta_bar > 0:
        beta = cfg.beta_bar * zeta_profile(nodes, cfg.zeta)
    else:
        beta = None
    return alpha, beta


def _rhs(kind, cfg, cert, plant, path, x_measured, u_star, eta=None):
    """Node velocities and the control output for one path state."""
    kind = Realization.parse(kind)
    if kind is Realization.STATIC:
        raise ValueError("the static realization has no path dynamics")
    kappa, u = feedback_along_path(cert, path, u_star)
    pts = path.values.T
    cdot = plant.F(pts, kappa.T)
    alpha, beta = _weights(cfg, cert, path, kind, eta)
    if alpha is not None:
        cdot = cdot + alpha[:, None] * _PathGeometry(cert.metric, path).nabla
    if beta is not None:
        if x_measured is None:
            raise ValueError("the robust realization needs the measured state")
        x_tilde = np.asarray(x_measured, dtype=float) - path.measured_end
        cdot = cdot + beta[:, None] * x_tilde[None, :]
    return cdot.T, u


def path_rhs(kind, cfg: ControllerConfig, cert: CcmCertificate, plant: Plant,
             path: PathState, x_measured=None, u_star=0.0, eta=None) -> np.ndarray:
    """Time derivative of the node values, shape ``(n, N+1)``.

    ``eta`` overrides the weighting profile at the nodes (e.g. an adaptive
    profile held over a sampling interval).
    """
    cdot, _ = _rhs(kind, cfg, cert, plant, path, x_measured, u_star, eta)
    return cdot


def step(kind, cfg: ControllerConfig, cert: CcmCertificate, plant: Plant,
         path: PathState, x_measured, x_star, u_star, dt: Optional[float] = None,
         t: float = 0.0):
    """Advance the controller state over one sampling interval.

    Returns ``(new_path, u)`` where ``u`` is the control output at the start
    of the interval.  The measured state and ``u_star`` are held constant
    over the interval; the adaptive weighting, if used, is recomputed once
    per call.  For the static realization the new path is a geodesic from
    ``x_star`` to ``x_measured`` warm-started from ``path``.
    """
    from .geodesic import static_control

    kind = Realization.parse(kind)
    dt = cfg.tau_s if dt is None else dt
    if kind is Realization.STATIC:
        u, sol = static_control(cert, x_measured, x_star, u_star, N=path.grid.N, warm=path,
                                max_iter=cfg.static_max_iter)
        return sol.path, u

    alpha, _ = _weights(cfg, cert, path, kind)
    eta = None if alpha is None else alpha / max(cfg.alpha_bar, 1e-300)
    grid = path.grid

    def f(vals):
        p = PathState(grid, vals)
        return _rhs(kind, cfg, cert, plant, p, x_measured, u_star, eta)

    c0 = path.values
    k1, u = f(c0)
    if cfg.integrator == "euler":
        new = c0 + dt * k1
    else:
        k2, _ = f(c0 + 0.5 * dt * k1)
        k3, _ = f(c0 + 0.5 * dt * k2)
        k4, _ = f(c0 + dt * k3)
        new = c0 + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(new)):
        raise IntegrationBlowupError(t + dt)
    return PathState(grid, new), u
