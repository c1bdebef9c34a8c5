import math
import time

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats

from polaronlab import products
from polaronlab.decomposition import SigmaProfile
from polaronlab.polaron import PolaronConfig


def _split(R=1.0, C1=1.0):
    return products.IntervalSplit(R, SigmaProfile(2.0, C1))


def test_gauss_hermite_moments():
    x, w = products.gauss_hermite(20)
    assert w.sum() == pytest.approx(1.0, abs=1e-14)
    assert w @ x**2 == pytest.approx(1.0, abs=1e-13)
    assert w @ x**4 == pytest.approx(3.0, abs=1e-12)
    nodes, weights = products.tensor_rule(3, 6)
    assert nodes.shape == (216, 3)
    assert weights @ (nodes[:, 0] ** 2 * nodes[:, 2] ** 2) == pytest.approx(1.0, abs=1e-12)


def test_delta_prime_against_quad():
    sp = _split()
    f = lambda t: stats.norm.pdf(t) * sp.bad_factor(np.array([t]))[0]
    ref = 2 * sum(integrate.quad(f, a, b, epsabs=1e-14, limit=200)[0]
                  for a, b in [(0.0, 1.0), (1.0, 2.0), (2.0, 1.0 + sp.profile.support_end), (1.0 + sp.profile.support_end, 12.0)])
    assert sp.delta_prime == pytest.approx(ref, rel=1e-10)
    assert sp.weight("g") + sp.weight("b") == pytest.approx(1.0)


def test_factors_partition_unity():
    sp = _split()
    x = np.linspace(-8, 8, 101)
    assert np.allclose(sp.good_factor(x) + sp.bad_factor(x), 1.0)
    # inside [-R, R] the bad factor is exp(-sigma(0)) = exp(-R_profile^2)
    assert np.allclose(sp.bad_factor(np.linspace(-1, 1, 11)), math.exp(-4.0), rtol=1e-12)
    assert np.all(sp.bad_factor(np.array([-30.0, 30.0])) == 1.0)


def test_product_mixture_weights():
    sp = _split()
    dec = products.product_decomposition(3, sp)
    assert len(dec) == 8
    assert dec.weights.sum() == pytest.approx(1.0, abs=1e-15)
    x = np.random.default_rng(0).normal(size=(5, 3))
    assert np.allclose(dec.density(x), 1.0)


def test_coarse_weight_requires_unit_mesh():
    with pytest.raises(ValueError):
        products.coarse_weight(PolaronConfig(0.5, 2, 0.5, 5.0, d=1))
    with pytest.raises(ValueError):
        products.coarse_weight(PolaronConfig(0.5, 2, 1.0, 5.0, d=3))


def test_coarse_weight_free_case():
    w = products.coarse_weight(PolaronConfig(0.0, 3, 1.0, 5.0, d=1))
    assert np.all(w(np.ones((4, 3))) == 1.0)


@pytest.mark.parametrize("T", [1, 2, 3, 4, 5])
def test_brute_force_matches_direct(T):
    cfg, sp = PolaronConfig(0.5, T, 1.0, 5.0, d=1), _split()
    a = products.brute_force_weights(cfg, sp)
    b = products.direct_weights(cfg, sp)
    assert a.keys() == b.keys()
    assert sum(b.values()) == pytest.approx(1.0, abs=1e-12)
    assert max(abs(a[k] - b[k]) for k in a) <= 1e-8


def test_interaction_shifts_mass_to_good_intervals():
    sp = _split()
    free = products.direct_weights(PolaronConfig(0.0, 3, 1.0, 5.0, d=1), sp)
    coupled = products.direct_weights(PolaronConfig(2.0, 3, 1.0, 5.0, d=1), sp)
    assert coupled["ggg"] > free["ggg"]


def test_bad_count_partition():
    ids = ["gg", "gb", "bg", "bb"]
    assert products.bad_count_partition(ids) == [[0], [1, 2], [3]]


def test_product_commutation():
    T, sp = 3, _split()
    nodes, weights = products.tensor_rule(T, 8)
    dec = products.product_decomposition(T, sp)
    f = products.coarse_weight(PolaronConfig(0.5, T, 1.0, 5.0, d=1))
    err = products.commutation_error(dec, f, products.bad_count_partition(dec.ids),
                                     products.quadrature_expectation(nodes, weights), nodes[:50])
    assert err <= 1e-10


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_random_mixture_commutation(seed):
    assert products.random_commutation_errors(4, seed).max() <= 1e-10


def test_random_mixture_is_normalized():
    rng = np.random.default_rng(1)
    dec = products.random_mixture(rng, 4)
    x, w = products.gauss_hermite(80)
    for c in dec.components:
        assert w @ c.density(x) == pytest.approx(1.0, abs=1e-6)


def test_random_partition_covers():
    rng = np.random.default_rng(2)
    for k in range(1, 9):
        flat = sorted(j for b in products.random_partition(rng, k) for j in b)
        assert flat == list(range(k))
