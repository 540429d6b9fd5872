"""
Control contraction metric feedback: differential gain, path-integrated
control law and pointwise checks of the contraction matrix inequality.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional

import numpy as np

from .geometry import MetricField, PathState, metric_at, metric_bounds

__all__ = [
    "Plant",
    "CcmCertificate",
    "gain",
    "lmi_residual",
    "differential_stability_residual",
    "certified_rate",
    "feedback_along_path",
]


@dataclass(frozen=True)
class Plant:
    """Control-affine system ``xdot = f(x) + B(x) u``.

    All callables broadcast over leading axes of ``x`` (and ``u``) when
    ``vectorized`` is true.  Without ``a_eval`` the Jacobian
    ``A = df/dx + sum_i (db_i/dx) u_i`` is formed by central differences of
    ``F`` in ``x``.
    """

    n: int
    m: int
    f_eval: Callable
    b_eval: Callable
    a_eval: Optional[Callable] = None
    vectorized: bool = False
    name: str = "plant"

    def _call(self, fn, *args):
        if self.vectorized or np.ndim(args[0]) == 1:
            return np.asarray(fn(*args), dtype=float)
        lead = np.shape(args[0])[:-1]
        flat = [np.reshape(a, (-1, np.shape(a)[-1])) for a in args]
        out = np.stack([np.asarray(fn(*row), dtype=float) for row in zip(*flat)])
        return out.reshape(lead + out.shape[1:])

    def f(self, x) -> np.ndarray:
        return self._call(self.f_eval, np.asarray(x, dtype=float))

    def B(self, x) -> np.ndarray:
        return self._call(self.b_eval, np.asarray(x, dtype=float))

    def F(self, x, u) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        return self.f(x) + np.einsum("...ij,...j->...i", self.B(x), u)

    def A(self, x, u) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        if self.a_eval is not None:
            return self._call(self.a_eval, x, np.broadcast_to(u, x.shape[:-1] + u.shape[-1:]))
        return self.A_fd(x, u)

    def A_fd(self, x, u) -> np.ndarray:
        """Central-difference Jacobian of ``F`` with respect to ``x``."""
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        out = np.empty(x.shape[:-1] + (self.n, self.n))
        for i in range(self.n):
            h = 1e-6 * np.maximum(1.0, np.abs(x[..., i]))
            xp = x.copy()
            xm = x.copy()
            xp[..., i] += h
            xm[..., i] -= h
            hh = (xp[..., i] - xm[..., i])[..., None]
            out[..., :, i] = (self.F(xp, u) - self.F(xm, u)) / hh
        return out


@dataclass(frozen=True)
class CcmCertificate:
    """Dual metric ``W``, multiplier ``Y`` and contraction rate ``lam``.

    ``box`` is the state region over which the overshoot
    ``R = sqrt(alpha2/alpha1)`` is estimated.
    """

    metric: MetricField
    y_eval: Callable
    lam: float
    box: tuple = field(default=(-10.0, 10.0))
    vectorized: bool = True
    name: str = "certificate"

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"contraction rate must be positive, got {self.lam!r}")

    def Y(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.vectorized or x.ndim == 1:
            return np.asarray(self.y_eval(x), dtype=float)
        flat = x.reshape(-1, x.shape[-1])
        out = np.stack([np.asarray(self.y_eval(p), dtype=float) for p in flat])
        return out.reshape(x.shape[:-1] + out.shape[1:])

    @cached_property
    def metric_bounds(self) -> tuple:
        lo, hi = self.box
        return metric_bounds(self.metric, lo, hi)

    @property
    def overshoot(self) -> float:
        a1, a2 = self.metric_bounds
        return float(np.sqrt(a2 / a1))

    def with_rate(self, lam: float) -> "CcmCertificate":
        return CcmCertificate(self.metric, self.y_eval, lam, self.box, self.vectorized, self.name)


def gain(cert: CcmCertificate, x) -> np.ndarray:
    """Differential feedback gain ``K(x) = Y(x) W(x)^-1``."""
    x = np.asarray(x, dtype=float)
    M, _ = metric_at(cert.metric, x)
    return cert.Y(x) @ M


def _wdot(cert: CcmCertificate, plant: Plant, x, u):
    xdot = plant.F(x, u)
    return np.einsum("...iab,...i->...ab", cert.metric.dW(x), xdot)


def lmi_residual(cert: CcmCertificate, plant: Plant, x, u, lam: Optional[float] = None):
    """Largest eigenvalue of the contraction matrix inequality at ``(x, u)``.

    The matrix is ``-Wdot + A W + W A^T + B Y + Y^T B^T + 2 lam W`` with
    ``Wdot`` taken along ``F(x, u)``.  The sign of the ``B Y`` terms is the
    one that makes ``A + B K`` with ``K = Y W^-1`` the closed-loop matrix.
    Non-positive means the certificate holds at that point.
    """
    lam = cert.lam if lam is None else lam
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    W = cert.metric.W(x)
    A = plant.A(x, u)
    BY = plant.B(x) @ cert.Y(x)
    L = -_wdot(cert, plant, x, u) + A @ W + BY + 2.0 * lam * W
    L = L + np.swapaxes(A @ W + BY, -1, -2)
    L = 0.5 * (L + np.swapaxes(L, -1, -2))
    out = np.linalg.eigvalsh(L)[..., -1]
    return float(out) if out.ndim == 0 else out


def differential_stability_residual(cert: CcmCertificate, plant: Plant, x, u, lam=None):
    """Largest eigenvalue of ``Mdot + M(A+BK) + (A+BK)^T M + 2 lam M``."""
    lam = cert.lam if lam is None else lam
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    M, _ = metric_at(cert.metric, x)
    Mdot = -M @ _wdot(cert, plant, x, u) @ M
    Acl = plant.A(x, u) + plant.B(x) @ (cert.Y(x) @ M)
    L = Mdot + M @ Acl + np.swapaxes(M @ Acl, -1, -2) + 2.0 * lam * M
    L = 0.5 * (L + np.swapaxes(L, -1, -2))
    out = np.linalg.eigvalsh(L)[..., -1]
    return float(out) if out.ndim == 0 else out


def certified_rate(cert: CcmCertificate, plant: Plant, x, u, tol: float = 0.0,
                   hi: float = 10.0, iters: int = 60) -> float:
    """Largest rate for which ``lmi_residual <= tol`` at every sample.

    Bisection on the rate; returns 0.0 if the inequality fails already at
    rate zero.
    """
    def ok(lam):
        return np.max(lmi_residual(cert, plant, x, u, lam=lam)) <= tol

    if not ok(0.0):
        return 0.0
    lo = 0.0
    while ok(hi):
        lo, hi = hi, 2.0 * hi
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return lo


def feedback_along_path(cert: CcmCertificate, path: PathState, u_star):
    """Integrate the differential feedback along ``path``.

    Returns ``(kappa, u)`` where ``kappa[:, j]`` is
    ``u_star + int_{-1}^{s_j} K(c) c_s ds`` and ``u = kappa[:, 0]`` is the value
    at the measured end.  The integrand is interpolated at the nodes and
    integrated spectrally.
    """
    u_star = np.atleast_1d(np.asarray(u_star, dtype=float))
    pts = path.values.T
    K = gain(cert, pts)
    g = np.einsum("jab,jb->aj", K, path.cs.T)
    kappa = u_star[:, None] + g @ path.grid.cumint_matrix.T
    return kappa, kappa[:, 0].copy()
