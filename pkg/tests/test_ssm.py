"""Stochastic-differential model: drift, transitions, implied covariance."""

import numpy as np
import pytest

from nsgpreg import (
    LinkTransform,
    SsNsgpModel,
    discretize,
    implied_covariance,
    sde_drift_diffusion,
)


def _model():
    return SsNsgpModel(
        ell_link=LinkTransform("exp", 0.2),
        sigma_link=LinkTransform("exp", -0.1),
        u_lengthscale=0.8,
        u_magnitude=1.1,
    )


def test_drift_diffusion_frozen_values():
    # reference numbers from 40-digit arithmetic at z = (0.3, 0.1, -0.3)
    drift, diffusion = sde_drift_diffusion(np.array([0.3, 0.1, -0.3]), _model())
    np.testing.assert_allclose(
        drift, [-0.22224546620451536, -0.125, 0.375], rtol=1e-14
    )
    want = np.diag([0.81593024664866978, 1.7392527130926086, 1.7392527130926086])
    np.testing.assert_allclose(diffusion, want, rtol=1e-14, atol=0)


def test_drift_is_zero_at_origin():
    drift, diffusion = sde_drift_diffusion(np.zeros(3), _model())
    np.testing.assert_array_equal(drift, 0.0)
    assert diffusion.shape == (3, 3)
    # off-diagonal couplings are identically zero
    np.testing.assert_array_equal(diffusion - np.diag(np.diag(diffusion)), 0.0)


def test_discretize_exact_scheme_frozen_values():
    # reference numbers from 40-digit arithmetic, step 0.4 from the same state
    z = np.array([0.3, 0.1, -0.3])
    mean, Q = discretize(z, 0.4, _model(), scheme="exact-ou")
    np.testing.assert_allclose(
        mean,
        [0.74354403494963792 * 0.3, 0.60653065971263342 * 0.1,
         0.60653065971263342 * -0.3],
        rtol=1e-14,
    )
    np.testing.assert_allclose(
        np.diag(Q),
        [0.20091397213426937, 0.76486587618255479, 0.76486587618255479],
        rtol=1e-14,
    )


def test_discretize_euler_scheme_frozen_values():
    z = np.array([0.3, 0.1, -0.3])
    mean, Q = discretize(z, 0.4, _model(), scheme="euler-maruyama")
    np.testing.assert_allclose(mean[0], 0.70367271172731285 * 0.3, rtol=1e-14)
    np.testing.assert_allclose(
        np.diag(Q), [0.26629686695846364, 1.21, 1.21], rtol=1e-14
    )


def test_schemes_agree_to_first_order():
    z = np.array([0.2, -0.1, 0.4])
    model = _model()
    gaps = []
    for dt in (1e-2, 5e-3):
        a_ex, _ = discretize(z, dt, model, scheme="exact-ou")
        a_em, _ = discretize(z, dt, model, scheme="euler-maruyama")
        gaps.append(np.max(np.abs(a_ex - a_em)))
    # halving the step shrinks the scheme gap roughly fourfold
    assert gaps[1] < 0.3 * gaps[0]


def test_discretize_rejects_unknown_scheme():
    with pytest.raises(ValueError, match="scheme"):
        discretize(np.zeros(3), 0.1, _model(), scheme="milstein")


def test_initial_cov_default_and_custom():
    model = _model()
    P = model.initial_cov()
    s0 = float(np.exp(-0.1))
    np.testing.assert_allclose(np.diag(P), [s0**2, 1.1**2, 1.1**2], rtol=1e-14)
    custom = SsNsgpModel(P0=np.eye(3) * 2.0)
    np.testing.assert_array_equal(custom.initial_cov(), np.eye(3) * 2.0)
    with pytest.raises(ValueError, match="shape"):
        SsNsgpModel(P0=np.eye(2)).initial_cov()


class TestImpliedCovariance:
    def test_constant_paths_give_exponential_kernel(self):
        # frozen latent paths at zero turn the signal component into a
        # stationary process with time constant exp(0.2) and variance
        # exp(-0.2); the quadrature must reproduce that kernel
        model = _model()
        lam = float(np.exp(0.2))
        var = float(np.exp(-0.2))
        zero = lambda t: np.zeros_like(np.asarray(t, dtype=float))
        for t, s in ((0.5, 0.5), (0.3, 1.2), (2.0, 0.1), (1.7, 1.7)):
            got = implied_covariance(t, s, zero, zero, 0.0, model, nodes=201)
            want = var * np.exp(-abs(t - s) / lam)
            assert got == pytest.approx(want, rel=1e-9)

    def test_symmetry(self):
        model = _model()
        u_ell = lambda t: 0.3 * np.sin(np.asarray(t, dtype=float))
        u_sig = lambda t: 0.2 * np.cos(np.asarray(t, dtype=float))
        a = implied_covariance(0.4, 1.3, u_ell, u_sig, 0.0, model)
        b = implied_covariance(1.3, 0.4, u_ell, u_sig, 0.0, model)
        assert a == pytest.approx(b, rel=1e-12)

    def test_validates_inputs(self):
        model = _model()
        zero = lambda t: np.zeros_like(np.asarray(t, dtype=float))
        with pytest.raises(ValueError, match="odd"):
            implied_covariance(0.5, 0.5, zero, zero, 0.0, model, nodes=200)
        with pytest.raises(ValueError):
            implied_covariance(-0.5, 0.5, zero, zero, 0.0, model)

    def test_variance_tracks_magnitude_path(self):
        # a larger magnitude path must produce a larger marginal variance
        model = _model()
        zero = lambda t: np.zeros_like(np.asarray(t, dtype=float))
        bigger = lambda t: np.full_like(np.asarray(t, dtype=float), 0.5)
        lo = implied_covariance(1.0, 1.0, zero, zero, 0.0, model)
        hi = implied_covariance(1.0, 1.0, zero, bigger, 0.0, model)
        assert hi > lo
