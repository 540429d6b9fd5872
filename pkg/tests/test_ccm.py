import numpy as np
import pytest

from ccmpath.ccm import (
    CcmCertificate,
    Plant,
    certified_rate,
    differential_stability_residual,
    feedback_along_path,
    gain,
    lmi_residual,
)
from ccmpath.chebdiff import chebgrid
from ccmpath.geometry import PathState, constant_metric, euclidean_metric
from ccmpath.plant import benchmark_certificate, benchmark_plant


def scalar_plant(a=-1.0):
    return Plant(1, 1, lambda x: a * np.asarray(x), lambda x: np.ones(np.shape(x) + (1,)),
                 vectorized=True, name="scalar")


def zero_y(m):
    return lambda x: np.zeros(np.shape(x)[:-1] + (m, np.shape(x)[-1]))


@pytest.fixture(scope="module")
def samples():
    rng = np.random.default_rng(0)
    return rng.uniform(-10, 10, (1000, 3)), rng.uniform(-30, 30, (1000, 1))


class TestLmiResidual:
    def test_stable_scalar_is_marginal(self):
        # -x with W = 1, Y = 0, lam = 1: -2 + 2 = 0
        cert = CcmCertificate(euclidean_metric(1), zero_y(1), lam=1.0)
        assert lmi_residual(cert, scalar_plant(), np.array([0.3]), np.array([0.0])) == pytest.approx(0.0, abs=1e-15)

    def test_huge_rate_fails(self):
        cert = CcmCertificate(euclidean_metric(3), zero_y(1), lam=1e3)
        assert lmi_residual(cert, benchmark_plant(), np.ones(3), np.zeros(1)) > 0

    def test_batched_matches_pointwise(self, samples):
        x, u = samples
        cert, plant = benchmark_certificate(), benchmark_plant()
        batch = lmi_residual(cert, plant, x[:10], u[:10])
        single = [lmi_residual(cert, plant, x[k], u[k]) for k in range(10)]
        np.testing.assert_allclose(batch, single, rtol=1e-12)

    def test_sign_agrees_with_differential_form(self, samples):
        # M L M is the metric-form inequality, a congruence, so signs match
        x, u = samples
        cert, plant = benchmark_certificate(), benchmark_plant()
        a = lmi_residual(cert, plant, x[:200], u[:200])
        b = differential_stability_residual(cert, plant, x[:200], u[:200])
        assert np.array_equal(a > 0, b > 0)

    def test_holds_at_half_rate(self, samples):
        x, u = samples
        res = lmi_residual(benchmark_certificate(0.5), benchmark_plant(), x, u)
        assert np.max(res) <= 0.0

    def test_certified_rate_benchmark(self, samples):
        x, u = samples
        rate = certified_rate(benchmark_certificate(), benchmark_plant(), x, u, tol=1e-2)
        # frozen from the eigenvalue sweep on this sample set
        assert rate == pytest.approx(0.6031, abs=5e-4)

    def test_printed_dynamics_fail_badly(self, samples):
        x, u = samples
        res = lmi_residual(benchmark_certificate(), benchmark_plant("as_printed"), x, u)
        assert np.max(res) > 1e3
        assert certified_rate(benchmark_certificate(), benchmark_plant("as_printed"), x, u) == 0.0

    def test_nonpositive_rate_rejected(self):
        with pytest.raises(ValueError):
            CcmCertificate(euclidean_metric(1), zero_y(1), lam=0.0)


class TestFeedback:
    def test_gain_is_Y_times_M(self):
        cert = benchmark_certificate()
        x = np.array([1.0, 2.0, -1.0])
        np.testing.assert_allclose(gain(cert, x) @ cert.metric.W(x), cert.Y(x), atol=1e-12)

    def test_constant_gain_is_linear_feedback(self):
        W = np.array([[2.0, 0.5], [0.5, 1.0]])
        Y = np.array([[-1.0, 0.3]])
        cert = CcmCertificate(constant_metric(W), lambda x: np.broadcast_to(Y, np.shape(x)[:-1] + Y.shape),
                              lam=1.0)
        xs, x = np.array([0.5, -1.0]), np.array([2.0, 1.5])
        kappa, u = feedback_along_path(cert, PathState.straight_line(xs, x, chebgrid(4)), [0.7])
        np.testing.assert_allclose(u, 0.7 + Y @ np.linalg.solve(W, x - xs), atol=1e-12)
        np.testing.assert_allclose(kappa[:, -1], 0.7, atol=1e-14)

    def test_constant_path_gives_feedforward(self):
        p = PathState.straight_line(np.ones(3), np.ones(3), chebgrid(4))
        _, u = feedback_along_path(benchmark_certificate(), p, [1.25])
        assert u == pytest.approx([1.25])


class TestPlantJacobian:
    def test_fd_fallback(self):
        p = Plant(2, 1, lambda x: np.array([x[1] ** 2, np.sin(x[0])]), lambda x: np.array([[0.0], [1.0]]))
        x = np.array([0.3, -1.2])
        np.testing.assert_allclose(p.A(x, np.zeros(1)), [[0, -2.4], [np.cos(0.3), 0]], atol=1e-8)
