import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from polaronlab.bodies import (Ball, BlockSumBall, DykstraDidNotConverge, Intersection, OscillationSet,
                               PairBall, Slab, box, distance_to_body, dykstra)

vectors = arrays(np.float64, 4, elements=st.floats(-5, 5))


def _bodies():
    return [Ball(1.5), Slab((1.0, 2.0, 0.0, -1.0), 0.7), box([1.0, 0.5, 2.0, 1.0]),
            Intersection((Ball(2.0), Slab((0.0, 1.0, 1.0, 0.0), 0.5))), OscillationSet(0, 1.0, 4)]


def test_validation():
    with pytest.raises(ValueError):
        Ball(0.0)
    with pytest.raises(ValueError):
        Slab((0.0, 0.0), 1.0)
    with pytest.raises(ValueError):
        Slab((1.0,), -1.0)
    with pytest.raises(ValueError):
        Intersection(())
    with pytest.raises(ValueError):
        OscillationSet(0, 0.0, 4)


def test_slab_normal_normalized():
    s = Slab((3.0, 4.0), 1.0)
    assert np.allclose(s.u, [0.6, 0.8])


def test_distance_examples():
    assert distance_to_body(np.array([0.1, -0.2]), Ball(1.0))[0] == 0.0
    assert distance_to_body(np.array([3.0, 0.0]), Slab((1.0, 0.0), 1.0))[0] == pytest.approx(2.0)
    assert distance_to_body(np.array([3.0, 4.0]), Ball(1.0))[0] == pytest.approx(4.0)


def test_two_point_oscillation_distance():
    osc = OscillationSet(0, 1.0, 1)
    d = osc.path_distance(np.array([[0.0, 2.0]]))[0]
    assert d == pytest.approx(math.sqrt(2) / 2, abs=1e-8)


def test_box_distance_matches_clipping(rng):
    hw = np.array([1.0, 0.5, 2.0])
    x = rng.normal(scale=3.0, size=(50, 3))
    d = box(hw).distance(x)
    exact = np.linalg.norm(x - np.clip(x, -hw, hw), axis=1)
    assert np.allclose(d, exact, atol=1e-7)


@settings(max_examples=40, deadline=None)
@given(vectors)
def test_symmetry(x):
    for b in _bodies():
        assert b.contains(x)[0] == b.contains(-x)[0]


@settings(max_examples=40, deadline=None)
@given(vectors)
def test_projection_lands_inside_and_is_idempotent(x):
    for b in _bodies():
        p = b.project(x)
        assert b.contains(p, tol=1e-6)[0]
        assert np.allclose(b.project(p), p, atol=1e-6)


@settings(max_examples=40, deadline=None)
@given(vectors)
def test_distance_zero_iff_inside(x):
    for b in _bodies():
        d = b.distance(x)[0]
        if b.contains(x)[0]:
            assert d == pytest.approx(0.0, abs=1e-9)
        else:
            assert d > 0


@settings(max_examples=30, deadline=None)
@given(vectors, vectors)
def test_distance_is_one_lipschitz(x, y):
    for b in _bodies():
        assert abs(b.distance(x)[0] - b.distance(y)[0]) <= np.linalg.norm(x - y) + 1e-6


@settings(max_examples=30, deadline=None)
@given(vectors, st.floats(1.1, 5.0))
def test_dilation_contains_original(x, c):
    for b in _bodies():
        if b.contains(x)[0]:
            assert b.dilate(c).contains(x)[0]


def test_oscillation_matches_brute_force(rng):
    x = rng.standard_normal((20, 8, 3))
    osc = OscillationSet(1, 1.0, 4)
    b = np.concatenate([np.zeros((20, 1, 3)), np.cumsum(x[:, 4:8], axis=1)], axis=1)
    brute = np.array([max(np.linalg.norm(p[j] - p[k]) for j in range(5) for k in range(5)) for p in b])
    assert np.allclose(osc.oscillation(x), brute)


def test_oscillation_one_dimensional_range(rng):
    x = rng.standard_normal((10, 4))
    osc = OscillationSet(0, 1.0, 4)
    b = np.concatenate([np.zeros((10, 1)), np.cumsum(x, axis=1)], axis=1)
    assert np.allclose(osc.oscillation(x), b.max(axis=1) - b.min(axis=1))


def test_oscillation_set_distance_against_optimizer():
    from scipy import optimize
    x = np.array([0.9, -1.2, 0.4, 1.1])
    osc = OscillationSet(0, 0.8, 4)
    d = osc.distance(x, tol=1e-12)[0]
    cons = [{"type": "ineq", "fun": (lambda z, a=a, b=b: 0.8**2 - z[a:b].sum() ** 2)}
            for a in range(4) for b in range(a + 1, 5)]
    res = optimize.minimize(lambda z: np.sum((z - x) ** 2), np.zeros(4), constraints=cons,
                            method="SLSQP", options={"ftol": 1e-14, "maxiter": 500})
    assert d == pytest.approx(math.sqrt(res.fun), abs=1e-5)


def test_block_sum_and_pair_ball_projection():
    p = BlockSumBall(0, 2, 1.0).project(np.array([2.0, 2.0, 5.0]))
    assert np.allclose(p[0, :, 0], [0.5, 0.5, 5.0])
    q = PairBall(0, 1, 1.0).project(np.array([0.0, 3.0]))
    assert np.allclose(q[0, :, 0], [1.0, 2.0])


def test_dykstra_reports_non_convergence():
    pieces = OscillationSet(0, 0.1, 6).pieces()
    with pytest.raises(DykstraDidNotConverge):
        dykstra(pieces, np.array([3.0, -2.0, 4.0, 1.0, -5.0, 2.0]), tol=1e-15, max_iter=2)


def test_transformed_slab(rng):
    s = Slab((1.0, -1.0, 0.5), 0.8)
    f = rng.standard_normal((3, 3))
    z = rng.standard_normal((100, 3))
    assert np.array_equal(s.transformed(f).contains(z), s.contains(z @ f.T))


def test_transformed_ball_isotropic_only():
    assert Ball(2.0).transformed(0.5 * np.eye(3)).radius == pytest.approx(4.0)
    with pytest.raises(NotImplementedError):
        Ball(1.0).transformed(np.diag([1.0, 2.0]))
