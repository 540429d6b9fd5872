"""
Riemannian quantities for a metric given through its inverse ``W(x) = M(x)^-1``.

Paths are stored on the internal parameter interval [-1, 1] with the
reference endpoint at ``s = -1`` and the measured endpoint at ``s = +1``.
The functionals returned here are the ones for the same path parameterized
over [0, 1] (``sigma = (s + 1)/2``), so that a straight line between ``x``
and ``y`` under the Euclidean metric has energy ``|y - x|^2``:

    energy            E = int_0^1 |c_sigma|_M^2 dsigma    = 2 int_{-1}^{1} |c_s|_M^2 ds
    length            L = int_0^1 |c_sigma|_M   dsigma    =   int_{-1}^{1} |c_s|_M   ds
    geodesic residual   int_0^1 |D_sigma c_sigma|_M^2     = 8 int_{-1}^{1} |D_s c_s|_M^2 ds

``covariant_derivative`` itself returns ``D_s c_s`` in the internal
parameter; multiply by 4 for the unit-interval value.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Optional

import numpy as np

from .chebdiff import ChebGrid, ChebSeries, evaluate, fit, quad_cc

__all__ = [
    "MetricDegeneracyError",
    "MetricField",
    "PathState",
    "metric_at",
    "christoffel",
    "covariant_derivative",
    "energy",
    "length",
    "geodesic_residual",
    "first_variation",
    "metric_bounds",
    "euclidean_metric",
    "constant_metric",
]


class MetricDegeneracyError(ArithmeticError):
    """W(x) failed to be positive definite at ``x``."""

    def __init__(self, x, message: str = "metric is not positive definite"):
        self.x = np.array(x, dtype=float)
        super().__init__(f"{message} at x = {np.array2string(self.x, precision=6)}")


@dataclass(frozen=True)
class MetricField:
    """Riemannian metric ``M(x) = W(x)^-1`` on R^n.

    Parameters
    ----------
    dim : int
        State dimension n.
    w_eval : callable
        ``x -> W(x)``.  When ``vectorized`` is true it must accept an array of
        shape ``(..., n)`` and return ``(..., n, n)``; otherwise it is called
        once per point.
    w_partials : callable, optional
        ``x -> dW`` with ``dW[..., i, :, :] = dW/dx_i``.  If omitted, central
        differences with step ``1e-6 * max(1, |x_i|)`` are used.
    vectorized : bool
        Whether the callables broadcast over leading axes.
    """

    dim: int
    w_eval: Callable
    w_partials: Optional[Callable] = None
    vectorized: bool = False

    def W(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.vectorized or x.ndim == 1:
            out = np.asarray(self.w_eval(x), dtype=float)
        else:
            flat = x.reshape(-1, self.dim)
            out = np.stack([np.asarray(self.w_eval(p), dtype=float) for p in flat])
        out = out.reshape(x.shape[:-1] + (self.dim, self.dim))
        asym = np.abs(out - np.swapaxes(out, -1, -2)).max(initial=0.0)
        if asym > 1e-12 * max(np.abs(out).max(initial=0.0), 1.0):
            raise ValueError(f"W(x) is not symmetric (max asymmetry {asym:.3e})")
        return out

    def dW(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.w_partials is None:
            return self.dW_fd(x)
        if self.vectorized or x.ndim == 1:
            out = np.asarray(self.w_partials(x), dtype=float)
        else:
            flat = x.reshape(-1, self.dim)
            out = np.stack([np.asarray(self.w_partials(p), dtype=float) for p in flat])
        return out.reshape(x.shape[:-1] + (self.dim,) * 3)

    def dW_fd(self, x) -> np.ndarray:
        """Central-difference partials of W, ignoring ``w_partials``."""
        x = np.asarray(x, dtype=float)
        n = self.dim
        out = np.empty(x.shape[:-1] + (n, n, n))
        for i in range(n):
            h = 1e-6 * np.maximum(1.0, np.abs(x[..., i]))
            xp = x.copy()
            xm = x.copy()
            xp[..., i] += h
            xm[..., i] -= h
            # the actual step after rounding, not the nominal one
            hh = (xp[..., i] - xm[..., i])[..., None, None]
            out[..., i, :, :] = (self.W(xp) - self.W(xm)) / hh
        return out


def euclidean_metric(n: int) -> MetricField:
    return constant_metric(np.eye(n))


def constant_metric(W0) -> MetricField:
    W0 = np.array(W0, dtype=float)
    n = W0.shape[0]

    def w(x):
        x = np.asarray(x)
        return np.broadcast_to(W0, x.shape[:-1] + (n, n)).copy()

    def dw(x):
        x = np.asarray(x)
        return np.zeros(x.shape[:-1] + (n, n, n))

    return MetricField(n, w, dw, vectorized=True)


def _invert_pd(W: np.ndarray, x: np.ndarray) -> np.ndarray:
    try:
        L = np.linalg.cholesky(W)
    except np.linalg.LinAlgError:
        flatW = W.reshape(-1, *W.shape[-2:])
        flatx = np.asarray(x).reshape(-1, W.shape[-1])
        for Wi, xi in zip(flatW, flatx):
            if not np.all(np.isfinite(Wi)) or np.linalg.eigvalsh(Wi)[0] <= 0.0:
                raise MetricDegeneracyError(xi) from None
        raise MetricDegeneracyError(flatx[0]) from None
    eye = np.broadcast_to(np.eye(W.shape[-1]), W.shape)
    Linv = np.linalg.solve(L, eye)
    M = np.swapaxes(Linv, -1, -2) @ Linv
    return 0.5 * (M + np.swapaxes(M, -1, -2))


def metric_at(m: MetricField, x):
    """Return ``(M, W)`` at ``x`` (broadcasting over leading axes)."""
    x = np.asarray(x, dtype=float)
    W = m.W(x)
    M = _invert_pd(W, x)
    return M, W


def _christoffel_from(M, W, dW) -> np.ndarray:
    # dM_i = -M (dW_i) M
    dM = -np.einsum("...ab,...ibc,...cd->...iad", M, dW, M)
    # T[l,i,j] = d_i M_lj + d_j M_il - d_l M_ij
    T = (
        np.einsum("...ilj->...lij", dM)
        + np.einsum("...jil->...lij", dM)
        - dM
    )
    G = 0.5 * np.einsum("...kl,...lij->...kij", W, T)
    return 0.5 * (G + np.swapaxes(G, -1, -2))


def christoffel(m: MetricField, x) -> np.ndarray:
    """Levi-Civita symbols ``G[..., k, i, j]`` of the metric at ``x``."""
    x = np.asarray(x, dtype=float)
    M, W = metric_at(m, x)
    return _christoffel_from(M, W, m.dW(x))


@dataclass(frozen=True, eq=False)
class PathState:
    """Path sampled at the Chebyshev nodes of ``grid``.

    ``values[:, j]`` is the path at ``grid.nodes[j]``; column 0 (s = +1) is
    the measured-state end and the last column (s = -1) the reference end.
    """

    grid: ChebGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 2 or v.shape[1] != self.grid.size:
            raise ValueError(
                f"path values must have shape (n, {self.grid.size}), got {v.shape}"
            )
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def straight_line(cls, x_from, x_to, grid: ChebGrid) -> "PathState":
        """Affine path with ``x_from`` at s = -1 and ``x_to`` at s = +1."""
        a = np.asarray(x_from, dtype=float)
        b = np.asarray(x_to, dtype=float)
        sigma = 0.5 * (grid.nodes + 1.0)
        vals = np.outer(a, 1.0 - sigma) + np.outer(b, sigma)
        vals[:, 0] = b
        vals[:, -1] = a
        return cls(grid, vals)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def measured_end(self) -> np.ndarray:
        return self.values[:, 0]

    @property
    def reference_end(self) -> np.ndarray:
        return self.values[:, -1]

    @cached_property
    def coeffs(self) -> np.ndarray:
        """Coefficient matrix with ``c(s) = coeffs @ T(s)``."""
        return fit(self.values, self.grid).coeffs

    @cached_property
    def cs(self) -> np.ndarray:
        return self.values @ self.grid.diff_matrix.T

    @cached_property
    def css(self) -> np.ndarray:
        return self.values @ self.grid.diff2_matrix.T

    def __call__(self, s) -> np.ndarray:
        return evaluate(ChebSeries(self.coeffs), s)

    def resample(self, grid: ChebGrid) -> "PathState":
        """Same polynomial path sampled on another grid (exact if refining)."""
        return PathState(grid, self(grid.nodes))


class _PathGeometry:
    """Per-node metric data for one path, computed lazily and reused."""

    def __init__(self, m: MetricField, path: PathState):
        self.m = m
        self.path = path
        self.pts = path.values.T

    @cached_property
    def MW(self):
        return metric_at(self.m, self.pts)

    @property
    def M(self):
        return self.MW[0]

    @property
    def W(self):
        return self.MW[1]

    @cached_property
    def gamma(self):
        return _christoffel_from(self.M, self.W, self.m.dW(self.pts))

    @cached_property
    def cs(self):
        return self.path.cs.T

    @cached_property
    def nabla(self):
        cs = self.cs
        return self.path.css.T + np.einsum("jkab,ja,jb->jk", self.gamma, cs, cs)

    def inner(self, a, b):
        """``<a_j, b_j>_M`` at every node; ``a``, ``b`` shaped (N+1, n)."""
        return np.einsum("ja,jab,jb->j", a, self.M, b)

    @cached_property
    def speed2(self):
        return self.inner(self.cs, self.cs)

    @cached_property
    def residual_density(self):
        return self.inner(self.nabla, self.nabla)

    def energy(self):
        return 2.0 * quad_cc(self.speed2, self.path.grid)

    def length(self):
        return quad_cc(np.sqrt(np.maximum(self.speed2, 0.0)), self.path.grid)

    def residual(self):
        return 8.0 * quad_cc(self.residual_density, self.path.grid)


def covariant_derivative(m: MetricField, path: PathState) -> np.ndarray:
    """``D_s c_s`` at the nodes, shape ``(n, N+1)``, internal parameter."""
    return _PathGeometry(m, path).nabla.T.copy()


def energy(m: MetricField, path: PathState) -> float:
    return float(_PathGeometry(m, path).energy())


def length(m: MetricField, path: PathState) -> float:
    return float(_PathGeometry(m, path).length())


def geodesic_residual(m: MetricField, path: PathState) -> float:
    """Integrated squared covariant derivative; zero exactly on geodesics."""
    return float(_PathGeometry(m, path).residual())


def first_variation(m: MetricField, path: PathState, cdot) -> float:
    """Rate of change of ``energy`` when the node values move with ``cdot``.

    Uses the boundary term plus the covariant-derivative integral, not a
    difference quotient.
    """
    geo = _PathGeometry(m, path)
    cd = np.asarray(cdot, dtype=float).T
    if cd.shape != geo.cs.shape:
        raise ValueError(f"cdot must have shape {path.values.shape}, got {cd.T.shape}")
    bdry = geo.inner(cd, geo.cs)
    interior = quad_cc(geo.inner(cd, geo.nabla), path.grid)
    return float(4.0 * ((bdry[0] - bdry[-1]) - interior))


def metric_bounds(m: MetricField, lo, hi, points: int = 21):
    """Extreme eigenvalues ``(alpha1, alpha2)`` of M over a box grid.

    Sampled estimate, not a certificate.
    """
    lo = np.broadcast_to(np.asarray(lo, dtype=float), (m.dim,))
    hi = np.broadcast_to(np.asarray(hi, dtype=float), (m.dim,))
    axes = [np.linspace(a, b, points) for a, b in zip(lo, hi)]
    X = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, m.dim)
    M, _ = metric_at(m, X)
    ev = np.linalg.eigvalsh(M)
    return float(ev[:, 0].min()), float(ev[:, -1].max())
