"""
Benchmark plant and certificate, references and disturbances.

The benchmark is the three-state, single-input system

    x1' = -x1 + x3
    x2' = x1^2 - x2 - 2 x1 x3 + x3
    x3' = -x2 + u

with dual metric ``W(x) = W0 + W1 x1 + W2 x1^2``, multiplier
``Y(x) = -rho(x)/2 * B^T`` and ``rho(x) = 19.614 + 1.386 x1 + 9.616 x1^2``.
The certificate only verifies for the ``x1 x3`` cross term above; the
``"as_printed"`` variant with ``-2 x1 x2`` is kept for comparison and fails
the matrix inequality by several orders of magnitude.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .ccm import CcmCertificate, Plant
from .geometry import MetricField

__all__ = [
    "W0", "W1", "W2", "B_BENCH",
    "benchmark_f", "benchmark_A", "benchmark_rho",
    "benchmark_plant", "benchmark_metric", "benchmark_certificate",
    "DisturbanceModel", "ReferenceSignal", "constant_setpoint",
    "get_plant", "get_certificate", "PLANTS",
]

W0 = np.array([
    [2.686, 0.237, -1.816],
    [0.237, 16.265, 2.006],
    [-1.816, 2.006, 6.395],
])
W1 = np.array([
    [0.0, -5.373, 0.0],
    [-5.373, -0.948, 3.631],
    [0.0, 3.631, 0.0],
])
W2 = np.array([
    [0.0, 0.0, 0.0],
    [0.0, 10.747, 0.0],
    [0.0, 0.0, 0.0],
])
B_BENCH = np.array([[0.0], [0.0], [1.0]])

VARIANTS = ("certified", "as_printed")


def _check_variant(variant):
    if variant not in VARIANTS:
        raise ValueError(f"unknown benchmark variant {variant!r}; choose from {VARIANTS}")


def benchmark_f(x, variant: str = "certified") -> np.ndarray:
    _check_variant(variant)
    x = np.asarray(x, dtype=float)
    x1, x2, x3 = x[..., 0], x[..., 1], x[..., 2]
    cross = x3 if variant == "certified" else x2
    return np.stack([-x1 + x3, x1**2 - x2 - 2.0 * x1 * cross + x3, -x2], axis=-1)


def benchmark_A(x, variant: str = "certified") -> np.ndarray:
    """Jacobian of the drift (B is constant, so A does not depend on u)."""
    _check_variant(variant)
    x = np.asarray(x, dtype=float)
    x1, x2, x3 = x[..., 0], x[..., 1], x[..., 2]
    A = np.zeros(x.shape[:-1] + (3, 3))
    A[..., 0, 0] = -1.0
    A[..., 0, 2] = 1.0
    A[..., 2, 1] = -1.0
    if variant == "certified":
        A[..., 1, 0] = 2.0 * x1 - 2.0 * x3
        A[..., 1, 1] = -1.0
        A[..., 1, 2] = 1.0 - 2.0 * x1
    else:
        A[..., 1, 0] = 2.0 * x1 - 2.0 * x2
        A[..., 1, 1] = -1.0 - 2.0 * x1
        A[..., 1, 2] = 1.0
    return A


def benchmark_rho(x) -> np.ndarray:
    x1 = np.asarray(x, dtype=float)[..., 0]
    return 19.614 + 1.386 * x1 + 9.616 * x1**2


def _bench_W(x):
    x1 = np.asarray(x, dtype=float)[..., 0][..., None, None]
    return W0 + W1 * x1 + W2 * x1**2


def _bench_dW(x):
    x = np.asarray(x, dtype=float)
    x1 = x[..., 0][..., None, None]
    out = np.zeros(x.shape[:-1] + (3, 3, 3))
    out[..., 0, :, :] = W1 + 2.0 * W2 * x1
    return out


def _bench_Y(x):
    rho = benchmark_rho(x)[..., None, None]
    return -0.5 * rho * B_BENCH.T


def benchmark_plant(variant: str = "certified") -> Plant:
    _check_variant(variant)

    def b(x):
        x = np.asarray(x)
        return np.broadcast_to(B_BENCH, x.shape[:-1] + (3, 1)).copy()

    return Plant(
        n=3,
        m=1,
        f_eval=lambda x: benchmark_f(x, variant),
        b_eval=b,
        a_eval=lambda x, u: benchmark_A(x, variant),
        vectorized=True,
        name="benchmark" if variant == "certified" else "benchmark_printed",
    )


def benchmark_metric() -> MetricField:
    return MetricField(3, _bench_W, _bench_dW, vectorized=True)


def benchmark_certificate(lam: float = 1.0) -> CcmCertificate:
    return CcmCertificate(
        metric=benchmark_metric(),
        y_eval=_bench_Y,
        lam=lam,
        box=(-10.0, 10.0),
        vectorized=True,
        name="benchmark",
    )


PLANTS = {
    "benchmark": lambda: benchmark_plant("certified"),
    "benchmark_printed": lambda: benchmark_plant("as_printed"),
}


def get_plant(name: str) -> Plant:
    try:
        return PLANTS[name]()
    except KeyError:
        raise ValueError(f"unknown plant {name!r}; known: {sorted(PLANTS)}") from None


def get_certificate(name: str, lam: Optional[float] = None) -> CcmCertificate:
    if name in PLANTS:
        return benchmark_certificate(1.0 if lam is None else lam)
    raise ValueError(f"no certificate registered for plant {name!r}")


@dataclass(frozen=True)
class DisturbanceModel:
    """Additive state disturbance ``d(t)`` with ``|d(t)| <= bound``.

    ``kind`` is one of ``none``, ``constant`` (uses ``vector``), ``random``
    (piecewise constant over ``hold`` time units, uniform direction, norm
    ``bound``, seeded) or ``callable`` (uses ``fn``).
    """

    kind: str = "none"
    vector: Optional[tuple] = None
    bound: float = 0.0
    fn: Optional[Callable] = None
    seed: int = 0
    hold: float = 0.1

    def __post_init__(self):
        if self.kind not in ("none", "constant", "random", "callable"):
            raise ValueError(f"unknown disturbance kind {self.kind!r}")
        if self.bound < 0:
            raise ValueError("disturbance bound must be nonnegative")
        if self.kind == "constant":
            if self.vector is None:
                raise ValueError("constant disturbance needs a vector")
            v = np.asarray(self.vector, dtype=float)
            if self.bound == 0.0:
                object.__setattr__(self, "bound", float(np.linalg.norm(v)))
            elif np.linalg.norm(v) > self.bound * (1 + 1e-12):
                raise ValueError("constant disturbance exceeds its declared bound")
        if self.kind == "callable" and self.fn is None:
            raise ValueError("callable disturbance needs fn")

    def __call__(self, t: float, n: int) -> np.ndarray:
        if self.kind == "none":
            return np.zeros(n)
        if self.kind == "constant":
            return np.asarray(self.vector, dtype=float).reshape(n)
        if self.kind == "random":
            k = int(np.floor(t / self.hold + 1e-9))
            rng = np.random.default_rng([self.seed, k])
            v = rng.normal(size=n)
            return self.bound * v / np.linalg.norm(v)
        d = np.asarray(self.fn(t), dtype=float).reshape(n)
        if np.linalg.norm(d) > self.bound * (1 + 1e-12):
            raise ValueError(f"disturbance exceeds bound {self.bound} at t = {t}")
        return d


@dataclass(frozen=True)
class ReferenceSignal:
    """Reference pair ``(x*(t), u*(t))`` solving the nominal dynamics."""

    x_star: Callable
    u_star: Callable
    constant: bool = False


def constant_setpoint(plant: Plant, x_star, tol: float = 1e-8) -> ReferenceSignal:
    """Equilibrium reference: solves ``f(x*) + B(x*) u* = 0`` for ``u*``."""
    xs = np.asarray(x_star, dtype=float).copy()
    Bx = plant.B(xs)
    fx = plant.f(xs)
    us, *_ = np.linalg.lstsq(Bx, -fx, rcond=None)
    res = np.linalg.norm(plant.F(xs, us))
    if res > tol * max(1.0, np.linalg.norm(fx)):
        raise ValueError(f"{xs} is not an equilibrium of {plant.name} (residual {res:.3e})")
    xs.setflags(write=False)
    us.setflags(write=False)
    return ReferenceSignal(lambda t: xs, lambda t: us, constant=True)
