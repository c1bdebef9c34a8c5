"""Numerical checks of the Gaussian correlation inequality and of domination.

Probabilities in dimension at most 6 come from scrambled Sobol points,
split into independent replicates; the margin is computed per replicate
and its spread gives the standard error.  Because the joint and marginal
estimates share points, the comparison is paired.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, asdict
from functools import lru_cache
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import linalg, special
from scipy.stats import qmc

from .bodies import Ball, ConvexBody, Intersection, Slab, _flat
from .gaussian import GaussianPathMeasure, batch_means

QMC_MAX_DIM = 6
REPLICATES = 16
TIE_BAND = 3.0


@dataclass
class GciReport:
    lhs: float
    rhs: float
    stderrL: float
    stderrR: float
    margin: float
    stderr: float  # of the margin
    verdict: str
    label: str = ""

    def as_dict(self) -> dict:
        return asdict(self)


ROUNDING_FLOOR = 1e-14


def verdict_for(margin: float, stderr: float) -> str:
    """``fail`` only when the margin is below ``-3`` standard errors.

    A floor of a few ulps keeps exact equalities with zero spread (constant
    functionals, say) from being judged on rounding noise.
    """
    band = max(TIE_BAND * stderr, ROUNDING_FLOOR)
    if margin < -band:
        return "fail"
    if margin > band:
        return "pass"
    return "statistical-tie"


@lru_cache(maxsize=16)
def _normal_points(dim: int, log2_per_rep: int, replicates: int, seed: int) -> np.ndarray:
    # shape (replicates, 2**log2_per_rep, dim); cached because suites reuse them
    ss = np.random.SeedSequence([seed, dim, log2_per_rep])
    out = np.empty((replicates, 2**log2_per_rep, dim))
    for r, child in enumerate(ss.spawn(replicates)):
        u = qmc.Sobol(dim, scramble=True, seed=np.random.default_rng(child)).random_base2(log2_per_rep)
        out[r] = special.ndtri(np.clip(u, 1e-300, 1 - 1e-16))
    out.setflags(write=False)
    return out


def gaussian_points(mu: GaussianPathMeasure, n: int, seed: int) -> np.ndarray:
    """Points of ``mu`` grouped as ``(replicates, per_replicate, n_mu, d)``.

    Quasi-random for total dimension at most 6, pseudo-random otherwise.
    """
    dim = mu.n * mu.d
    per = max(n // REPLICATES, 2)
    if dim <= QMC_MAX_DIM:
        m = max(1, int(round(math.log2(per))))
        z = _normal_points(dim, m, REPLICATES, seed)
    else:
        z = np.random.default_rng(seed).standard_normal((REPLICATES, per, dim))
    r, k, _ = z.shape
    z = z.reshape(r * k, mu.n, mu.d).transpose(1, 0, 2).reshape(mu.n, r * k * mu.d)
    x = linalg.solve_triangular(mu.cholesky, z, lower=True, trans="T")
    return x.reshape(mu.n, r * k, mu.d).transpose(1, 0, 2).reshape(r, k, mu.n, mu.d)


def _rep_stats(per_rep: np.ndarray) -> tuple[float, float]:
    return float(per_rep.mean()), float(per_rep.std(ddof=1) / math.sqrt(per_rep.size))


def _paired(f_joint: np.ndarray, f_a: np.ndarray, f_b: np.ndarray, label: str) -> GciReport:
    # inputs: per-point values, shape (replicates, k)
    joint = f_joint.mean(axis=1)
    prod = f_a.mean(axis=1) * f_b.mean(axis=1)
    lhs, sl = _rep_stats(joint)
    rhs, sr = _rep_stats(prod)
    margin, sm = _rep_stats(joint - prod)
    return GciReport(lhs, rhs, sl, sr, margin, sm, verdict_for(margin, sm), label)


def gci_pair_test(mu: GaussianPathMeasure, k1: ConvexBody, k2: ConvexBody, n: int = 2**20,
                  seed: int = 0, label: str = "") -> GciReport:
    """``mu(K1 ∩ K2)`` against ``mu(K1) mu(K2)`` on shared points."""
    x = gaussian_points(mu, n, seed)
    r, k = x.shape[:2]
    flat = x.reshape(r * k, mu.n, mu.d)
    a = k1.contains(flat).reshape(r, k).astype(float)
    b = k2.contains(flat).reshape(r, k).astype(float)
    return _paired(a * b, a, b, label)


def gci_functional_test(mu: GaussianPathMeasure, fs: Sequence[Callable], m: int, n: int = 2**20,
                        seed: int = 0, label: str = "") -> GciReport:
    """``E[prod_{j<m} f_j] E[prod_{j>=m} f_j]`` against ``E[prod f_j]``.

    Each ``f`` maps a batch ``(count, n, d)`` to values of shape ``(count,)``.
    """
    if not 0 < m < len(fs):
        raise ValueError("split m must leave both groups non-empty")
    x = gaussian_points(mu, n, seed)
    r, k = x.shape[:2]
    flat = x.reshape(r * k, mu.n, mu.d)
    vals = [np.asarray(f(flat), dtype=float).reshape(r, k) for f in fs]
    a = np.prod(vals[:m], axis=0)
    b = np.prod(vals[m:], axis=0)
    return _paired(a * b, a, b, label)


def probability(mu: GaussianPathMeasure, body: ConvexBody, n: int = 2**18, seed: int = 0) -> tuple[float, float]:
    """``mu(K)`` with replicate standard error."""
    x = gaussian_points(mu, n, seed)
    r, k = x.shape[:2]
    inside = body.contains(x.reshape(r * k, mu.n, mu.d)).reshape(r, k).mean(axis=1)
    return _rep_stats(inside)


def expectation(mu: GaussianPathMeasure, f: Callable, n: int = 2**18, seed: int = 0) -> tuple[float, float]:
    x = gaussian_points(mu, n, seed)
    r, k = x.shape[:2]
    v = np.asarray(f(x.reshape(r * k, mu.n, mu.d)), dtype=float).reshape(r, k).mean(axis=1)
    return _rep_stats(v)


def domination_test(nu_sampler: Callable[[int, int], np.ndarray], mu: GaussianPathMeasure,
                    test_bodies: Sequence[ConvexBody] = (), test_convex_fns: Sequence[Callable] = (),
                    n: int = 2**16, seed: int = 0) -> list[GciReport]:
    """Check ``nu(K) >= mu(K)`` and ``E^nu f <= E^mu f``.

    ``nu_sampler(count, seed)`` returns samples in order; their standard
    errors use batch means, so correlated (chain) samples are allowed.
    The reported margin is always "should be non-negative".
    """
    y = np.asarray(nu_sampler(n, seed + 1), dtype=float)
    if y.ndim == 2:
        y = y[:, :, None]
    out = []
    for j, body in enumerate(test_bodies):
        pn, sn = batch_means(body.contains(y).astype(float))
        pm, sm = probability(mu, body, n, seed)
        s = math.hypot(sn, sm)
        out.append(GciReport(pn, pm, sn, sm, pn - pm, s, verdict_for(pn - pm, s), f"body{j}"))
    for j, f in enumerate(test_convex_fns):
        en, sn = batch_means(np.asarray(f(y), dtype=float))
        em, sm = expectation(mu, f, n, seed)
        s = math.hypot(sn, sm)
        out.append(GciReport(em, en, sm, sn, em - en, s, verdict_for(em - en, s), f"fn{j}"))
    return out


def trace_domination(nu: GaussianPathMeasure, mu: GaussianPathMeasure) -> tuple[float, float]:
    """``(E^nu |x|^2, E^mu |x|^2)`` from covariance traces."""
    return nu.d * float(np.trace(nu.covariance)), mu.d * float(np.trace(mu.covariance))


# --- randomized suite ----------------------------------------------------------


def random_gaussian(dim: int, rng) -> GaussianPathMeasure:
    a = rng.standard_normal((dim, dim))
    cov = a @ a.T / dim + 0.2 * np.eye(dim)
    return GaussianPathMeasure.from_covariance(cov, label=f"rand{dim}")


def random_body(dim: int, rng, mu: Optional[GaussianPathMeasure] = None) -> ConvexBody:
    """A slab, ball or box scaled so that its probability is neither tiny nor near one."""
    scale = math.sqrt(np.trace(mu.covariance) / dim) if mu is not None else 1.0
    kind = rng.integers(3)
    if kind == 0:
        u = rng.standard_normal(dim)
        u /= np.linalg.norm(u)
        sd = math.sqrt(u @ mu.covariance @ u) if mu is not None else 1.0
        return Slab(tuple(u), float(sd * rng.uniform(0.3, 2.0)))
    if kind == 1:
        return Ball(float(scale * math.sqrt(dim) * rng.uniform(0.5, 1.5)))
    slabs = []
    for _ in range(rng.integers(2, 4)):
        u = rng.standard_normal(dim)
        u /= np.linalg.norm(u)
        sd = math.sqrt(u @ mu.covariance @ u) if mu is not None else 1.0
        slabs.append(Slab(tuple(u), float(sd * rng.uniform(0.5, 2.0))))
    return Intersection(tuple(slabs))


def random_suite(cases: int = 1000, seed: int = 0, max_dim: int = QMC_MAX_DIM,
                 n: int = 2**20) -> list[GciReport]:
    """Random pairs (two thirds) and triples ``K1`` vs ``K2 ∩ K3`` (one third)."""
    rng = np.random.default_rng(seed)
    out = []
    for c in range(cases):
        dim = int(rng.integers(1, max_dim + 1))
        mu = random_gaussian(dim, rng)
        k1 = random_body(dim, rng, mu)
        k2 = random_body(dim, rng, mu)
        label = f"case{c}:d{dim}:pair"
        if c % 3 == 2:
            k2 = Intersection((k2, random_body(dim, rng, mu)))
            label = f"case{c}:d{dim}:triple"
        out.append(gci_pair_test(mu, k1, k2, n, seed, label))
    return out


def independent_slab_suite(cases: int = 20, seed: int = 0, n: int = 2**20) -> list[GciReport]:
    """Equality cases: slabs on disjoint coordinates of a standard Gaussian."""
    rng = np.random.default_rng(seed)
    out = []
    for c in range(cases):
        dim = int(rng.integers(2, QMC_MAX_DIM + 1))
        mu = GaussianPathMeasure(np.eye(dim))
        j = int(rng.integers(1, dim))
        u1 = np.zeros(dim)
        u1[:j] = rng.standard_normal(j)
        u2 = np.zeros(dim)
        u2[j:] = rng.standard_normal(dim - j)
        k1 = Slab(tuple(u1), float(rng.uniform(0.3, 2.0)))
        k2 = Slab(tuple(u2), float(rng.uniform(0.3, 2.0)))
        out.append(gci_pair_test(mu, k1, k2, n, seed, f"indep{c}:d{dim}"))
    return out


def write_jsonl(reports: Sequence[GciReport], path) -> None:
    with open(path, "w") as fh:
        for r in reports:
            fh.write(json.dumps(r.as_dict(), sort_keys=True) + "\n")
