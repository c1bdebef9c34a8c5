import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import special_ortho_group

from polaronlab.lattice import Lattice
from polaronlab.polaron import (McmcError, PolaronConfig, interaction_energy, mcmc_run,
                                oscillation_stats, potential_VA, write_chain_csv, write_summary_json)


def test_potential_examples():
    assert potential_VA(0.0, 10.0) == pytest.approx(20.0)
    assert potential_VA(0.1, 10.0) == pytest.approx(10.0)
    assert potential_VA(2.0, 10.0) == pytest.approx(0.5)
    assert potential_VA(0.0, 3.0, p=0.5) == 3.0
    assert potential_VA(4.0, 3.0, p=0.5) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        potential_VA(-1.0, 1.0)
    with pytest.raises(ValueError):
        potential_VA(1.0, 0.0)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.1, 100.0), st.floats(1.0, 10.0), st.sampled_from([0.5, 1.0, 1.5]))
def test_potential_shape(A, growth, p):
    r = np.linspace(0.0, 5.0, 2001)
    v = potential_VA(r, A, p)
    assert np.all(np.diff(v) <= 1e-12)
    with np.errstate(divide="ignore"):
        assert np.all(v[1:] <= r[1:] ** -p + 1e-12)
    assert np.all(potential_VA(r, A * growth, p) >= v - 1e-12)
    if p == 1:
        assert np.all(np.diff(v, 2) >= -1e-9)  # convex


def test_potential_increases_to_coulomb():
    r = np.array([0.01, 0.1, 1.0])
    assert np.allclose(potential_VA(r, 1e6), 1 / r)


def test_config_validation():
    with pytest.raises(ValueError):
        PolaronConfig(-1.0, 1, 0.5, 1.0)
    with pytest.raises(ValueError):
        PolaronConfig(1.0, 1, 0.5, 0.0)
    with pytest.raises(ValueError):
        PolaronConfig(1.0, 1, 0.5, 1.0, p=2.0)
    with pytest.raises(ValueError):
        PolaronConfig(1.0, 1, 0.5, 1.0, kernel=lambda t, s: -np.ones(np.broadcast(t, s).shape))


def test_constant_path_energy():
    eta = 1 / 128
    pc = PolaronConfig(0.0, 1, eta, 10.0, d=3)
    e = interaction_energy(np.zeros((pc.lattice.n, 3)), pc)
    assert e == pytest.approx(20.0 * 2 / math.e, abs=40 * eta)


def test_energy_shape_check():
    pc = PolaronConfig(0.0, 1, 1 / 4, 10.0, d=3)
    with pytest.raises(ValueError):
        interaction_energy(np.zeros((4, 2)), pc)


def test_separated_clusters(rng):
    eta = 1 / 8
    lat = Lattice(2, eta, 3)
    block = lambda t, s: (np.floor(t) == np.floor(s)).astype(float)
    pc = PolaronConfig(0.0, 2, eta, 10.0, kernel=block)
    x = rng.standard_normal((lat.n, 3)) * 0.01
    x[lat.per_unit - 1] += np.array([1.001e3, 0.0, 0.0])  # every cross distance exceeds 1e3
    near = interaction_energy(x, pc)
    cross = PolaronConfig(0.0, 2, eta, 10.0, kernel=lambda t, s: np.ones(np.broadcast(t, s).shape))
    total = interaction_energy(x, cross)
    mass = 2 * eta**2 * (lat.per_unit**2)
    assert 0 <= total - near <= 1e-3 * mass


def test_energy_invariances(rng):
    pc = PolaronConfig(0.0, 1, 1 / 16, 5.0, d=3)
    x = rng.standard_normal((16, 3)) * 0.25
    e = interaction_energy(x, pc)
    q = special_ortho_group.rvs(3, random_state=3)
    assert interaction_energy(x @ q.T, pc) == pytest.approx(e, rel=1e-12)
    shifted = x.copy()
    shifted[0] += 4.0  # translating B_t for every t > 0 is not a global shift, so shift all values
    b = np.vstack([np.zeros(3), np.cumsum(x, axis=0)])[:-1] + 4.0
    pc_vals = np.array([[np.linalg.norm(b[j] - b[l]) for l in range(16)] for j in range(16)])
    ref = (pc.lattice.eta**2 * pc.kernel_matrix * potential_VA(pc_vals, 5.0)).sum()
    assert ref == pytest.approx(e, rel=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.5, 50.0), st.floats(1.0, 20.0), st.integers(0, 2**32 - 1))
def test_energy_monotone_in_cutoff(A, growth, seed):
    x = np.random.default_rng(seed).standard_normal((8, 3)) * 0.3
    e1 = interaction_energy(x, PolaronConfig(0.0, 1, 1 / 8, A))
    e2 = interaction_energy(x, PolaronConfig(0.0, 1, 1 / 8, A * growth))
    assert e1 <= e2 + 1e-12


def test_batch_energy_matches_single(rng):
    pc = PolaronConfig(0.0, 2, 1 / 8, 5.0)
    x = rng.standard_normal((4, 16, 3)) * 0.3
    batch = interaction_energy(x, pc)
    assert np.allclose(batch, [interaction_energy(xi, pc) for xi in x])


def test_mcmc_validation():
    pc = PolaronConfig(0.0, 1, 1 / 4, 5.0)
    with pytest.raises(ValueError):
        mcmc_run(pc, 100, 0)
    with pytest.raises(ValueError):
        mcmc_run(pc, 10_000, 0, {"rho": 0.0})
    with pytest.raises(ValueError):
        mcmc_run(pc, 10_000, 0, chains=0)


def test_mcmc_deterministic():
    pc = PolaronConfig(0.5, 1, 1 / 8, 10.0)
    a, ra = mcmc_run(pc, 10_000, 42)
    b, rb = mcmc_run(pc, 10_000, 42)
    assert a.mean == b.mean and np.array_equal(ra[0].energy, rb[0].energy)
    c, _ = mcmc_run(pc, 10_000, 43)
    assert c.mean != a.mean


def test_brownian_chain_moments():
    pc = PolaronConfig(0.0, 4, 1 / 8, 50.0, d=3)
    est, chains = mcmc_run(pc, 40_000, 5, chains=2)
    assert abs(est.mean - 12.0) <= 3 * est.stderr
    assert est.acceptRate == 1.0
    samples = np.concatenate([c.samples for c in chains])
    m = pc.lattice.per_unit
    for t in (1, 2, 4):
        v = (samples[:, : t * m].sum(axis=1) ** 2).sum(axis=1)
        mean, se = v.mean(), v.std(ddof=1) / math.sqrt(v.size)
        # stored samples are thinned far apart, so they are close to independent
        assert abs(mean - 3 * t) <= 4 * se


def test_interacting_chain_below_brownian():
    pc = PolaronConfig(1.0, 2, 1 / 8, 50.0, d=3)
    est, _ = mcmc_run(pc, 20_000, 9, chains=2)
    assert est.mean <= 6.0 + 3 * est.stderr
    assert 0 < est.acceptRate <= 1
    assert est.reportable


def test_stderr_doubling_ratio():
    pc = PolaronConfig(0.0, 2, 1 / 8, 50.0, d=3)
    ratios = [mcmc_run(pc, 10_000, s)[0].stderr / mcmc_run(pc, 20_000, s)[0].stderr for s in range(8)]
    g = math.exp(np.mean(np.log(ratios)))
    assert 1.2 <= g <= 1.7


def test_bridge_moves_preserve_brownian_law():
    pc = PolaronConfig(0.0, 2, 1 / 8, 50.0, d=1)
    est, _ = mcmc_run(pc, 40_000, 3, {"rho": 0.05, "bridgeFraction": 0.9})
    assert abs(est.mean - 2.0) <= 3 * est.stderr


def test_non_finite_energy_raises():
    pc = PolaronConfig(1.0, 1, 1 / 4, 1.0, kernel=lambda t, s: np.full(np.broadcast(t, s).shape, 1e308))
    with pytest.raises(McmcError):
        mcmc_run(pc, 10_000, 0)


def test_oscillation_stats_examples(rng):
    lat = Lattice(2, 1 / 16, 3)
    x = rng.standard_normal((4000, lat.n, 3)) * math.sqrt(lat.eta)
    rows = oscillation_stats(x, lat, [0.5, 1.0, 2.0, 10.0, math.inf])
    for i in range(2):
        freq = [r.frequency for r in rows if r.interval == i]
        assert all(a <= b for a, b in zip(freq, freq[1:]))
        assert freq[-1] == 1.0
        assert freq[-2] >= 0.999
    with pytest.raises(ValueError):
        oscillation_stats(np.zeros((0, lat.n, 3)), lat, [1.0])


def test_estimate_withheld_when_ess_small():
    pc = PolaronConfig(0.0, 1, 1 / 4, 5.0)
    est, _ = mcmc_run(pc, 10_000, 1)
    est.ess = 50.0
    assert not est.reportable


def test_writers(tmp_path):
    pc = PolaronConfig(0.0, 1, 1 / 4, 5.0)
    est, chains = mcmc_run(pc, 10_000, 1)
    write_chain_csv(chains[0], tmp_path / "c.csv")
    lines = (tmp_path / "c.csv").read_text().splitlines()
    assert lines[0] == "step,E,BT2" and len(lines) == 8001
    write_summary_json(pc, est, tmp_path / "s.json")
    payload = json.loads((tmp_path / "s.json").read_text())
    assert set(payload) >= {"config", "estimate", "stderr", "ess", "acceptRate"}
