"""
Minimal-energy paths between two states and the static (memoryless)
CCM controller built on them.

The discrete problem minimizes the quadrature energy of the Chebyshev
interpolant over the interior node values; the endpoints are never
variables.  Search directions come from a BFGS inverse-Hessian estimate,
steps from Armijo backtracking with halving.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .ccm import CcmCertificate, feedback_along_path
from .chebdiff import chebgrid
from .geometry import (
    MetricDegeneracyError,
    MetricField,
    PathState,
    _PathGeometry,
    metric_at,
)

__all__ = [
    "GeodesicProblem",
    "GeodesicSolution",
    "solve_geodesic",
    "energy_and_gradient",
    "static_control",
]

ARMIJO_C = 1e-4
# energy changes below this fraction of E are treated as rounding noise
ROUNDING_SLACK = 16 * np.finfo(float).eps


@dataclass(frozen=True)
class GeodesicProblem:
    metric: MetricField
    x_from: np.ndarray
    x_to: np.ndarray
    N: int = 4
    max_iter: int = 500
    gtol: float = 1e-8
    max_halvings: int = 60
    initial: Optional[PathState] = None
    trace: bool = True

    def __post_init__(self):
        a = np.asarray(self.x_from, dtype=float)
        b = np.asarray(self.x_to, dtype=float)
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            raise ValueError("geodesic endpoints must be finite")
        if self.N < 2:
            raise ValueError("a geodesic needs at least one interior node (N >= 2)")
        object.__setattr__(self, "x_from", a)
        object.__setattr__(self, "x_to", b)


@dataclass
class GeodesicSolution:
    path: PathState
    energy: float
    residual: float
    iterations: int
    converged: bool
    grad_norm: float
    energy_trace: list = field(default_factory=list)
    residual_trace: list = field(default_factory=list)


def energy_and_gradient(metric: MetricField, values: np.ndarray, grid):
    """Quadrature energy of the node values and its exact gradient.

    The gradient has the shape of ``values``; the endpoint columns are
    included but are not optimization variables.
    """
    D = grid.diff_matrix
    w = grid.weights
    pts = values.T
    M, _ = metric_at(metric, pts)
    cs = values @ D.T
    Mcs = np.einsum("jab,bj->aj", M, cs)
    E = 2.0 * float(np.sum(w * np.einsum("aj,aj->j", cs, Mcs)))
    dW = metric.dW(pts)
    # d/dx_a of cs^T M cs = -(M cs)^T dW_a (M cs)
    local = -np.einsum("aj,jiab,bj->ij", Mcs, dW, Mcs)
    G = 2.0 * (2.0 * (w * Mcs) @ D + w * local)
    return E, G


def _initial_values(prob: GeodesicProblem, grid):
    if prob.initial is None:
        return PathState.straight_line(prob.x_from, prob.x_to, grid).values.copy()
    init = prob.initial if prob.initial.grid.N == grid.N else prob.initial.resample(grid)
    v = init.values.copy()
    # shift the warm start so its endpoints match, blending linearly in s
    sigma = 0.5 * (grid.nodes + 1.0)
    v += np.outer(prob.x_to - v[:, 0], sigma) + np.outer(prob.x_from - v[:, -1], 1.0 - sigma)
    v[:, 0] = prob.x_to
    v[:, -1] = prob.x_from
    return v


def _small(g, E, gtol):
    return np.max(np.abs(g), initial=0.0) <= gtol * max(1.0, E)


def _frozen_metric_inverse_hessian(metric, values, grid):
    # exact inverse Hessian when the metric is frozen at its node average
    interior = slice(1, grid.N)
    D = grid.diff_matrix
    S = (D.T * grid.weights) @ D
    _, W = metric_at(metric, values.T)
    Wbar = W.mean(axis=0)
    return 0.25 * np.kron(Wbar, np.linalg.inv(S[interior, interior]))


def solve_geodesic(prob: GeodesicProblem) -> GeodesicSolution:
    """Minimize the discrete energy over interior node values.

    Convergence means ``max|grad| <= gtol * max(1, E)``; the scale factor
    keeps the test meaningful when the energy is large and Armijo
    decrements reach rounding level.
    """
    grid = chebgrid(prob.N)
    n = prob.x_from.size
    vals = _initial_values(prob, grid)
    interior = slice(1, grid.N)

    E, G = energy_and_gradient(prob.metric, vals, grid)
    g = G[:, interior].ravel()
    H0 = _frozen_metric_inverse_hessian(prob.metric, vals, grid)
    H = H0.copy()
    e_trace = [E]
    r_trace = [_PathGeometry(prob.metric, PathState(grid, vals)).residual()] if prob.trace else []
    it = 0
    converged = _small(g, E, prob.gtol)
    while not converged and it < prob.max_iter:
        p = -H @ g
        if g @ p >= 0:
            H = H0.copy()
            p = -H @ g
        slope = g @ p
        step = 1.0
        accepted = False
        for _ in range(prob.max_halvings):
            trial = vals.copy()
            trial[:, interior] += step * p.reshape(n, -1)
            try:
                E_new, G_new = energy_and_gradient(prob.metric, trial, grid)
            except MetricDegeneracyError:
                step *= 0.5
                continue
            slack = ROUNDING_SLACK * abs(E)
            if np.isfinite(E_new) and E_new <= E + ARMIJO_C * step * slope + slack:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
        g_new = G_new[:, interior].ravel()
        s_vec = step * p
        y_vec = g_new - g
        sy = s_vec @ y_vec
        if sy > 1e-12 * np.linalg.norm(s_vec) * np.linalg.norm(y_vec):
            rho = 1.0 / sy
            Hy = H @ y_vec
            H = (H - rho * (np.outer(s_vec, Hy) + np.outer(Hy, s_vec))
                 + (rho * rho * (y_vec @ Hy) + rho) * np.outer(s_vec, s_vec))
        vals, E, G, g = trial, E_new, G_new, g_new
        it += 1
        e_trace.append(E)
        if prob.trace:
            r_trace.append(_PathGeometry(prob.metric, PathState(grid, vals)).residual())
        converged = _small(g, E, prob.gtol)

    path = PathState(grid, vals)
    geo = _PathGeometry(prob.metric, path)
    return GeodesicSolution(
        path=path,
        energy=float(E),
        residual=float(geo.residual()),
        iterations=it,
        converged=bool(converged),
        grad_norm=float(np.max(np.abs(g), initial=0.0)),
        energy_trace=e_trace,
        residual_trace=r_trace,
    )


def static_control(cert: CcmCertificate, x, x_star, u_star, N: int = 4,
                   warm: Optional[PathState] = None, **solver_opts):
    """Geodesic-based feedback: solve for a geodesic, integrate ``K`` along it.

    Returns ``(u, solution)``; a non-converged solve still yields the control
    from its best iterate and is flagged in ``solution.converged``.
    """
    solver_opts.setdefault("trace", False)
    prob = GeodesicProblem(cert.metric, np.asarray(x_star, dtype=float),
                           np.asarray(x, dtype=float), N=N, initial=warm, **solver_opts)
    sol = solve_geodesic(prob)
    _, u = feedback_along_path(cert, sol.path, u_star)
    return u, sol
