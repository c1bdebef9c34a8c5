import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from polaronlab import decomposition as dc
from polaronlab.bodies import Ball, Slab, box
from polaronlab.gaussian import GaussianPathMeasure, standard_gaussian
from polaronlab.gci import domination_test


@pytest.fixture(scope="module")
def ball_dec():
    return dc.decompose(standard_gaussian(2), Ball(4.0), seed=1)


def test_sigma_tilde_branches():
    R, C1 = 2.0, 3.0
    assert dc.sigma_tilde(0.0, R, C1) == R * R
    assert dc.sigma_tilde(C1 * R + 1, R, C1) == pytest.approx(R * R / 2)
    assert dc.sigma_tilde(2 * C1 * R + 1, R, C1) == 0.0
    assert dc.sigma_tilde(0.5 * (C1 * R + 1) + 0.5, R, C1) == pytest.approx(R * R - (0.5 * C1 * R) ** 2 / (2 * C1 * C1))
    with pytest.raises(ValueError):
        dc.sigma_tilde(1.0, 0.0, 1.0)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.5, 30.0), st.floats(0.5, 20.0))
def test_sigma_tilde_continuity_at_joins(R, C1):
    for r0 in (1.0, C1 * R + 1.0, 2 * C1 * R + 1.0):
        lo, hi = dc.sigma_tilde(r0 - 1e-9, R, C1), dc.sigma_tilde(r0 + 1e-9, R, C1)
        assert abs(lo - hi) <= 1e-6 * max(1.0, R * R)


@pytest.mark.parametrize("R,C1", [(1.0, 10.0), (5.0, 10.0), (28.0, 10.0), (3.0, 2.0), (2.0, 1.0)])
def test_profile_checks_pass(R, C1):
    checks = dc.profile_checks(dc.SigmaProfile(R, C1))
    assert checks["all"], checks


def test_profile_examples():
    p = dc.SigmaProfile(3.0, 10.0)
    r = np.linspace(0.0, 1.0, 101)
    assert np.all(dc.sigma_smooth(r, p) == 9.0)
    assert np.all(dc.sigma_smooth(np.linspace(90.0, 200.0, 50), p) == 0.0)
    assert dc.profile_checks(p)["max_curvature"] <= 1 / 10 + 1e-6
    assert p.width == pytest.approx(0.1)


def test_profile_validation():
    with pytest.raises(ValueError):
        dc.SigmaProfile(-1.0)
    with pytest.raises(ValueError):
        dc.SigmaProfile(1.0, 10.0, width=0.5)
    with pytest.raises(ValueError):
        dc.SigmaProfile.from_delta(1.5)
    assert dc.SigmaProfile.from_delta(math.exp(-4), 10.0).R == pytest.approx(20.0)


def test_degenerate_profile_gives_bad_equal_mu():
    dec = dc.decompose(standard_gaussian(2), Ball(4.0), profile=dc.SigmaProfile(0.0), n_mc=2000)
    assert dec.delta_prime == 1.0
    z = np.random.default_rng(0).standard_normal((50, 2, 1))
    assert np.allclose(dec.bad_density(z), 1.0)


def test_precondition_mu_of_k():
    with pytest.raises(dc.DecompositionError):
        dc.decompose(standard_gaussian(2), Ball(1.0))


def test_delta_prime_below_delta(ball_dec):
    assert ball_dec.delta == pytest.approx(math.exp(-8), rel=1e-12)
    assert ball_dec.delta_prime <= ball_dec.delta + 3 * ball_dec.delta_prime_stderr


def test_good_support_inside_dilation(ball_dec):
    z = ball_dec.sample_good(100_000, 3, whitened=True)
    assert dc.support_violations(ball_dec, z) == 0
    assert ball_dec.support_factor() == pytest.approx(4000.0)


def test_good_density_monotone_on_rays(ball_dec):
    assert dc.ray_monotonicity(ball_dec, rays=1000, seed=2) == 0


def test_mixture_identity(ball_dec):
    z = np.random.default_rng(4).standard_normal((1000, 2, 1)) * 2.0
    assert dc.mixture_identity_error(ball_dec, z) <= 1e-10


def test_inradius(ball_dec):
    assert dc.inradius_check(ball_dec, 1000, 5) == 0


def test_logconcavity_default_and_negative_control():
    mu = standard_gaussian(3)
    dec = dc.decompose(mu, Ball(4.5), seed=2)
    assert dc.logconcavity_check(dec, 1000, 6).violations == 0
    neg = dc.decompose(mu, Ball(4.5), seed=2, C1=0.01, delta=dec.delta)
    assert dc.logconcavity_check(neg, 1000, 6).violations >= 1


def test_radial_segments_hold_with_margin():
    dec = dc.decompose(standard_gaussian(2), Ball(4.0), seed=1, C1=10.0)
    u = np.array([0.6, 0.8])[None, :, None]
    a, b = 0.5 * u, 60.0 * u
    phi = lambda v: dc.sigma_smooth(dec.distance(v), dec.profile) + 0.375 * float(np.sum(v**2))
    assert 0.5 * phi(a) + 0.5 * phi(b) - phi(0.5 * (a + b)) > 0


def test_box_with_correlated_gaussian():
    rng = np.random.default_rng(8)
    a = rng.standard_normal((3, 3))
    cov = a @ a.T / 3 + 0.5 * np.eye(3)
    mu = GaussianPathMeasure.from_covariance(cov)
    K = box(4.0 * np.sqrt(np.diag(cov)))
    dec = dc.decompose(mu, K, seed=3)
    assert dec.delta <= 1e-3
    assert dec.delta_prime <= dec.delta + 3 * dec.delta_prime_stderr
    x = dec.sample_good(20_000, 4)  # original coordinates
    assert np.array_equal(dec.body.contains(dec.whiten(x)), K.contains(x))
    assert dc.logconcavity_check(dec, 400, 5).violations == 0


def test_good_component_dominates_mu(ball_dec):
    mu = standard_gaussian(2)
    bodies = [Slab((1.0, 0.0), 0.5), Slab((1.0, 1.0), 1.0), Ball(1.5), Ball(3.0)]
    sampler = lambda count, seed: ball_dec.sample_good(count, seed)
    for r in domination_test(sampler, mu, bodies, [lambda y: (y**2).sum(axis=(1, 2))], n=2**15, seed=1):
        assert r.verdict != "fail", r


def test_bad_sampler_matches_quadrature():
    from scipy import integrate
    prof = dc.SigmaProfile(2.0, 0.5)
    dec = dc.decompose(standard_gaussian(1), Ball(2.0), profile=prof, n_mc=20_000, seed=1)
    z = dec.sample_bad(20_000, 2, whitened=True)
    w = lambda x: math.exp(-float(dc.sigma_smooth(max(abs(x) - 2.0, 0.0), prof)) - x * x / 2)
    out = 2 * integrate.quad(w, 2.0, 12.0, points=[3.0, 4.0], limit=200)[0]
    total = out + integrate.quad(w, -2.0, 2.0)[0]
    p = out / total
    frac = float(np.mean(np.abs(z) > 2.0))
    assert abs(frac - p) <= 3 * math.sqrt(p * (1 - p) / z.shape[0])


def test_rejection_cap_reported():
    dec = dc.decompose(standard_gaussian(2), Ball(4.0), seed=1)
    dec.max_draws = 2048
    with pytest.raises(dc.RejectionCapExceeded):
        dec.sample_bad(10, 1)


def test_zero_delta_prime_has_no_bad_density(ball_dec):
    if ball_dec.delta_prime == 0:
        with pytest.raises(dc.DecompositionError):
            ball_dec.bad_density(np.zeros((1, 2, 1)))


def test_smallest_passing_c1():
    c = dc.smallest_passing_c1(standard_gaussian(2), Ball(4.0), [0.01, 0.1, 1.0, 2.0, 10.0],
                               n_mc=5000, n_lines=300)
    assert c is not None and c > 0.01


def test_whiten_roundtrip(rng):
    a = rng.standard_normal((4, 4))
    mu = GaussianPathMeasure(a @ a.T + np.eye(4))
    dec = dc.decompose(mu, Slab((1.0, 0.0, 0.0, 0.0), 10.0), n_mc=2000)
    x = rng.standard_normal((5, 4, 1))
    assert np.allclose(dec.unwhiten(dec.whiten(x)), x)
