"""Brute-force product decompositions on a coarse lattice.

With ``eta = 1`` and one spatial coordinate each unit interval carries a
single standard Gaussian increment, so the per-interval good/bad split is a
pair of one-dimensional densities and the ``2^T`` product mixture can be
reweighted by the interaction factor with tensor-product quadrature.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from numpy.polynomial import hermite_e

from .decomposition import SigmaProfile, sigma_smooth
from .gaussian import MixtureComponent, MixtureDecomposition, coarsen, mixture_reweight
from .polaron import PolaronConfig, potential_VA

GOOD, BAD = "g", "b"


def gauss_hermite(q: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights integrating against the standard normal density."""
    x, w = hermite_e.hermegauss(q)
    return x, w / math.sqrt(2.0 * math.pi)


def tensor_rule(dim: int, q: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = gauss_hermite(q)
    nodes = np.array(list(itertools.product(x, repeat=dim)))
    weights = np.prod(np.array(list(itertools.product(w, repeat=dim))), axis=1)
    return nodes, weights


@dataclass(frozen=True)
class IntervalSplit:
    """Good/bad split of ``N(0, 1)`` around ``[-R, R]`` with profile ``sigma``."""

    R: float
    profile: SigmaProfile
    q: int = 40

    def bad_factor(self, x):
        d = np.maximum(np.abs(x) - self.R, 0.0)
        return np.exp(-sigma_smooth(d, self.profile))

    def good_factor(self, x):
        return 1.0 - self.bad_factor(x)

    @cached_property
    def delta_prime(self) -> float:
        # split the line at the kinks so each Gauss-Legendre panel sees a smooth integrand
        x, w = np.polynomial.legendre.leggauss(self.q)
        edges = self.R + np.array([0.0, 1.0, self.profile.support_end])
        edges = np.unique(np.concatenate([-edges[::-1], edges, [-12.0, 12.0]]))
        # the mollified kinks inside each piece still need short panels
        edges = np.unique(np.concatenate([np.linspace(a, b, int(np.ceil((b - a) / 0.25)) + 1)
                                          for a, b in zip(edges[:-1], edges[1:])]))
        total = 0.0
        for a, b in zip(edges[:-1], edges[1:]):
            t = 0.5 * (b - a) * x + 0.5 * (a + b)
            pdf = np.exp(-0.5 * t * t) / math.sqrt(2 * math.pi)
            total += 0.5 * (b - a) * float(w @ (pdf * self.bad_factor(t)))
        return total

    def density(self, label: str):
        dp = self.delta_prime
        if label == GOOD:
            return lambda x: self.good_factor(x) / (1.0 - dp)
        return lambda x: self.bad_factor(x) / dp

    def weight(self, label: str) -> float:
        return 1.0 - self.delta_prime if label == GOOD else self.delta_prime


def _on_unique(f, col: np.ndarray) -> np.ndarray:
    # tensor grids repeat each coordinate value many times
    u, inv = np.unique(col, return_inverse=True)
    return f(u)[inv]


def product_decomposition(T: int, split: IntervalSplit) -> MixtureDecomposition:
    """The ``2^T`` mixture ``sum_gamma w(gamma) prod_i nu_{gamma_i}`` of ``N(0, I_T)``."""
    comps = []
    for gamma in itertools.product((GOOD, BAD), repeat=T):
        dens = [split.density(g) for g in gamma]
        w = math.prod(split.weight(g) for g in gamma)

        def density(x, dens=dens):
            x = np.asarray(x, dtype=float).reshape(-1, len(dens))
            return np.prod([_on_unique(f, x[:, i]) for i, f in enumerate(dens)], axis=0)

        comps.append(MixtureComponent(w, density, "".join(gamma)))
    weights = np.array([c.weight for c in comps])
    # fix float drift in the product weights
    comps = [MixtureComponent(float(c.weight / weights.sum()), c.density, c.id) for c in comps]
    return MixtureDecomposition(tuple(comps))


def coarse_weight(config: PolaronConfig):
    """``W = exp(alpha E)`` on an ``eta = 1``, ``d = 1`` lattice, for increments ``(count, T)``."""
    if config.eta != 1.0 or config.d != 1:
        raise ValueError("coarse weight needs eta = 1 and d = 1")
    T = config.T
    k = config.kernel_matrix  # (T, T) on the left grid

    def W(x):
        x = np.asarray(x, dtype=float).reshape(-1, T)
        b = np.concatenate([np.zeros((x.shape[0], 1)), np.cumsum(x[:, :-1], axis=1)], axis=1)
        r = np.abs(b[:, :, None] - b[:, None, :])
        e = np.einsum("jl,cjl->c", k, potential_VA(r, config.A, config.p))
        return np.exp(config.alpha * e)

    return W


def quadrature_expectation(nodes: np.ndarray, weights: np.ndarray):
    cache: dict[int, tuple] = {}

    def expect(component: MixtureComponent, f) -> float:
        if id(f) not in cache:
            cache[id(f)] = (f, f(nodes))  # keep f alive so its id stays unique
        return float(weights @ (cache[id(f)][1] * component.density(nodes)))

    return expect


def brute_force_weights(config: PolaronConfig, split: IntervalSplit, q: int = 8) -> dict:
    """Reweight the product mixture component by component (Bayes' rule)."""
    nodes, weights = tensor_rule(config.T, q)
    dec = product_decomposition(config.T, split)
    new = mixture_reweight(dec, coarse_weight(config), quadrature_expectation(nodes, weights))
    return dict(zip(new.ids, new.weights))


def direct_weights(config: PolaronConfig, split: IntervalSplit, q: int = 8) -> dict:
    """``E[W prod_i rho_{gamma_i}(x_i)] / E[W]`` with unnormalized factors ``rho``."""
    T = config.T
    nodes, weights = tensor_rule(T, q)
    wv = coarse_weight(config)(nodes) * weights
    b = np.stack([_on_unique(split.bad_factor, nodes[:, i]) for i in range(T)], axis=1)
    g = 1.0 - b
    z = float(wv.sum())
    out = {}
    for gamma in itertools.product((GOOD, BAD), repeat=T):
        f = np.prod([g[:, i] if c == GOOD else b[:, i] for i, c in enumerate(gamma)], axis=0)
        out["".join(gamma)] = float(wv @ f) / z
    return out


def bad_count_partition(ids: list[str]) -> list[list[int]]:
    """Group product labels by their number of bad intervals."""
    groups: dict[int, list[int]] = {}
    for j, s in enumerate(ids):
        groups.setdefault(s.count(BAD), []).append(j)
    return [groups[k] for k in sorted(groups)]


def commutation_error(decomp: MixtureDecomposition, f, partition, expect, points: np.ndarray) -> float:
    """Max discrepancy between reweight-then-coarsen and coarsen-then-reweight.

    Compares weights and component densities at ``points``.
    """
    a = coarsen(mixture_reweight(decomp, f, expect), partition)
    b = mixture_reweight(coarsen(decomp, partition), f, expect)
    err = float(np.max(np.abs(a.weights - b.weights)))
    for ca, cb in zip(a.components, b.components):
        da, db = ca.density(points), cb.density(points)
        scale = max(1.0, float(np.max(np.abs(da))))
        err = max(err, float(np.max(np.abs(da - db))) / scale)
    return err


def random_mixture(rng: np.random.Generator, k: int) -> MixtureDecomposition:
    """Random ``k``-component mixture of normals, as densities against ``N(0, 1)``."""
    means = rng.uniform(-1.0, 1.0, k)
    sds = rng.uniform(0.6, 1.3, k)
    w = rng.dirichlet(np.ones(k))

    def ratio(x, m, s):
        x = np.asarray(x, dtype=float).reshape(-1)
        return np.exp(-0.5 * ((x - m) / s) ** 2 + 0.5 * x * x) / s

    comps = tuple(MixtureComponent(float(wj), (lambda x, m=m, s=s: ratio(x, m, s)), f"c{j}")
                  for j, (wj, m, s) in enumerate(zip(w / w.sum(), means, sds)))
    return MixtureDecomposition(comps)


def random_partition(rng: np.random.Generator, k: int) -> list[list[int]]:
    labels = rng.integers(0, max(1, k // 2), k)
    blocks = [list(np.flatnonzero(labels == b)) for b in np.unique(labels)]
    return [[int(j) for j in b] for b in blocks]


def random_commutation_errors(count: int, seed: int, q: int = 60) -> np.ndarray:
    """Commutation error on ``count`` random mixtures, partitions and weights ``f``."""
    rng = np.random.default_rng(seed)
    nodes, weights = gauss_hermite(q)
    expect = quadrature_expectation(nodes, weights)
    probe = np.linspace(-3.0, 3.0, 13)
    errs = []
    for _ in range(count):
        k = int(rng.integers(2, 7))
        dec = random_mixture(rng, k)
        a, c = rng.uniform(0.1, 2.0), rng.uniform(-1.0, 1.0)
        f = (lambda x, a=a, c=c: np.exp(-a * (np.asarray(x, dtype=float).reshape(-1) - c) ** 2))
        errs.append(commutation_error(dec, f, random_partition(rng, k), expect, probe))
    return np.array(errs)
