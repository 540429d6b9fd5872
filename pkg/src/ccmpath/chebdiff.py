"""
Chebyshev toolbox on the fixed interval [-1, 1].

A path (or any smooth function of the path parameter) is carried as its
samples at the Chebyshev points ``s_j = cos(j*pi/N)``, ``j = 0..N``, or
equivalently as a coefficient vector ``b`` with ``f(s) = sum_k b_k T_k(s)``.

Coefficient convention
----------------------
Coefficients are *plain*: ``b_0`` multiplies ``T_0`` directly.  The
cosine-series form ``a_0/2 + sum_{k>=1} a_k cos(k theta)`` maps onto it by
``b_0 = a_0/2`` and ``b_k = a_k`` for ``k >= 1``.

Series may be vector valued: the last axis of ``coeffs`` always indexes the
polynomial degree, leading axes are carried along untouched.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np

__all__ = [
    "ChebGrid",
    "ChebSeries",
    "cheb_nodes",
    "chebgrid",
    "fit",
    "evaluate",
    "differentiate",
    "integrate_cumulative",
    "quad_cc",
]

# evaluation outside [-1, 1] is refused; this only absorbs rounding
_DOMAIN_SLACK = 1e-12


def cheb_nodes(N: int) -> np.ndarray:
    """Chebyshev points of the second kind, ``cos(j*pi/N)`` for ``j = 0..N``.

    The order is decreasing: the first node is +1 and the last is -1.
    """
    if int(N) != N or N < 1:
        raise ValueError(f"grid order must be a positive integer, got {N!r}")
    N = int(N)
    x = np.cos(np.pi * np.arange(N + 1) / N)
    # make the symmetry exact so that odd functions integrate to exactly zero
    x = 0.5 * (x - x[::-1])
    return x


@dataclass(frozen=True)
class ChebSeries:
    """Chebyshev series ``sum_k coeffs[..., k] T_k(s)`` on [-1, 1]."""

    coeffs: np.ndarray

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float)
        if c.ndim == 0:
            c = c.reshape(1)
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def degree(self) -> int:
        return self.coeffs.shape[-1] - 1

    def __call__(self, s):
        return evaluate(self, s)


@dataclass(frozen=True, eq=False)
class ChebGrid:
    """Chebyshev grid of order N with the linear maps used on sampled data.

    All matrices act on sample vectors from the left, i.e. for samples ``f``
    of shape ``(N+1,)`` the derivative samples are ``diff_matrix @ f``; for
    an ``(n, N+1)`` matrix of path samples use ``f @ diff_matrix.T``.
    """

    N: int

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise ValueError(f"grid order must be a positive integer, got {self.N!r}")

    @property
    def size(self) -> int:
        return self.N + 1

    @cached_property
    def nodes(self) -> np.ndarray:
        x = cheb_nodes(self.N)
        x.setflags(write=False)
        return x

    @cached_property
    def fit_matrix(self) -> np.ndarray:
        """Samples at the nodes -> plain Chebyshev coefficients (cosine sum)."""
        N = self.N
        j = np.arange(N + 1)
        F = np.cos(np.pi * np.outer(j, j) / N) * (2.0 / N)
        F[:, 0] *= 0.5
        F[:, N] *= 0.5
        F[0, :] *= 0.5
        F[N, :] *= 0.5
        F.setflags(write=False)
        return F

    @cached_property
    def vandermonde(self) -> np.ndarray:
        """``T_k(s_j)``, rows indexed by node, columns by degree."""
        N = self.N
        j = np.arange(N + 1)
        V = np.cos(np.pi * np.outer(j, j) / N)
        V.setflags(write=False)
        return V

    @cached_property
    def weights(self) -> np.ndarray:
        """Clenshaw-Curtis weights, from the exact moments of each T_k."""
        k = np.arange(self.N + 1)
        moments = np.zeros(self.N + 1)
        even = k % 2 == 0
        moments[even] = 2.0 / (1.0 - k[even] ** 2)
        w = self.fit_matrix.T @ moments
        w = 0.5 * (w + w[::-1])
        w.setflags(write=False)
        return w

    @cached_property
    def diff_matrix(self) -> np.ndarray:
        """Spectral first derivative on samples.

        Off-diagonal entries use the barycentric closed form with node gaps
        written as sine products; the diagonal is minus the row sum, so
        constants differentiate to exactly zero.
        """
        N = self.N
        j = np.arange(N + 1)
        c = np.ones(N + 1)
        c[0] = c[N] = 2.0
        c *= (-1.0) ** j
        half = np.pi / (2 * N)
        # s_i - s_j = 2 sin((i + j) h) sin((j - i) h), h = pi/(2N)
        gap = 2.0 * np.sin(np.add.outer(j, j) * half) * np.sin(np.subtract.outer(j, j) * -half)
        np.fill_diagonal(gap, 1.0)
        D = np.outer(c, 1.0 / c) / gap
        np.fill_diagonal(D, 0.0)
        D[j, j] = -D.sum(axis=1)
        D.setflags(write=False)
        return D

    @cached_property
    def diff2_matrix(self) -> np.ndarray:
        D2 = self.diff_matrix @ self.diff_matrix
        D2.setflags(write=False)
        return D2

    @cached_property
    def cumint_matrix(self) -> np.ndarray:
        """Samples -> samples of the antiderivative that vanishes at s = -1."""
        Q = np.empty((self.size, self.size))
        for j, e in enumerate(np.eye(self.size)):
            Q[:, j] = evaluate(integrate_cumulative(fit(e, self)), self.nodes)
        # last node is s = -1 where the antiderivative is zero by construction
        Q[-1, :] = 0.0
        Q.setflags(write=False)
        return Q

    def interp_matrix(self, s) -> np.ndarray:
        """Samples at the nodes -> values of the interpolant at points ``s``."""
        s = _check_domain(np.atleast_1d(np.asarray(s, dtype=float)))
        T = _chebvander(s, self.N)
        return T @ self.fit_matrix


@lru_cache(maxsize=64)
def chebgrid(N: int) -> ChebGrid:
    """Shared, immutable grid of order ``N``."""
    return ChebGrid(int(N))


def _check_domain(s: np.ndarray) -> np.ndarray:
    if np.any(np.abs(s) > 1.0 + _DOMAIN_SLACK):
        bad = s[np.abs(s) > 1.0 + _DOMAIN_SLACK].ravel()[0]
        raise ValueError(f"evaluation point {bad!r} lies outside [-1, 1]")
    return np.clip(s, -1.0, 1.0)


def _chebvander(s: np.ndarray, N: int) -> np.ndarray:
    T = np.empty(s.shape + (N + 1,))
    T[..., 0] = 1.0
    if N >= 1:
        T[..., 1] = s
    for k in range(1, N):
        T[..., k + 1] = 2.0 * s * T[..., k] - T[..., k - 1]
    return T


def fit(samples, grid: ChebGrid) -> ChebSeries:
    """Interpolating series through samples taken at ``grid.nodes``.

    ``samples`` may carry leading axes; the last axis runs over the nodes.
    """
    f = np.asarray(samples, dtype=float)
    if f.shape[-1] != grid.size:
        raise ValueError(
            f"expected {grid.size} samples for a grid of order {grid.N}, got {f.shape[-1]}"
        )
    return ChebSeries(f @ grid.fit_matrix.T)


def evaluate(series: ChebSeries, s):
    """Evaluate ``series`` at ``s`` by Clenshaw's recurrence.

    Points outside [-1, 1] raise ``ValueError``; there is no extrapolation.
    """
    c = series.coeffs
    s_arr = _check_domain(np.asarray(s, dtype=float))
    lead = c.shape[:-1]
    cc = c.reshape(lead + (1,) * s_arr.ndim + (c.shape[-1],))
    b1 = np.zeros(lead + s_arr.shape)
    b2 = np.zeros_like(b1)
    for k in range(c.shape[-1] - 1, 0, -1):
        b1, b2 = cc[..., k] + 2.0 * s_arr * b1 - b2, b1
    out = cc[..., 0] + s_arr * b1 - b2
    if out.ndim == 0:
        return float(out)
    return out


def differentiate(series: ChebSeries) -> ChebSeries:
    """Exact derivative; the result has one coefficient fewer (min. one)."""
    c = series.coeffs
    n = c.shape[-1] - 1
    if n == 0:
        return ChebSeries(np.zeros_like(c))
    d = np.zeros(c.shape[:-1] + (n + 2,))
    for k in range(n, 0, -1):
        d[..., k - 1] = d[..., k + 1] + 2.0 * k * c[..., k]
    d[..., 0] *= 0.5
    return ChebSeries(d[..., :n])


def integrate_cumulative(series: ChebSeries) -> ChebSeries:
    """Antiderivative ``F(s) = int_{-1}^{s} f``, so ``F(-1) = 0``."""
    c = series.coeffs
    n = c.shape[-1] - 1
    ext = np.zeros(c.shape[:-1] + (n + 3,))
    ext[..., : n + 1] = c
    out = np.zeros(c.shape[:-1] + (n + 2,))
    out[..., 1] = ext[..., 0] - 0.5 * ext[..., 2]
    for k in range(2, n + 2):
        out[..., k] = (ext[..., k - 1] - ext[..., k + 1]) / (2.0 * k)
    signs = (-1.0) ** np.arange(n + 2)
    out[..., 0] = -(out[..., 1:] * signs[1:]).sum(axis=-1)
    return ChebSeries(out)


def quad_cc(values, grid: ChebGrid):
    """Clenshaw-Curtis estimate of ``int_{-1}^{1} f ds`` from node samples."""
    v = np.asarray(values, dtype=float)
    if v.shape[-1] != grid.size:
        raise ValueError(
            f"expected {grid.size} samples for a grid of order {grid.N}, got {v.shape[-1]}"
        )
    out = v @ grid.weights
    return float(out) if np.ndim(out) == 0 else out
