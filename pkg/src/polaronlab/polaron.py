"""Discretized, cutoff polaron path measure and its Metropolis sampler.

The target is Brownian increment measure tilted by ``exp(alpha * E(B))`` with

    E(B) = eta^2 * sum_{j,l} kappa(t_j, t_l) V_A(|B_{t_j} - B_{t_l}|)

over the left grid ``t_j = j eta``, ``j < n``, diagonal included.  Weights
stay in the log domain.  Both proposals (pCN and single-interval bridge
refresh) are reversible with respect to the Brownian prior, so the
acceptance ratio involves only the energy difference.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, asdict
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.spatial import distance

from .gaussian import N_BATCHES, batch_means
from .lattice import Lattice, path_values

BURN_IN = 0.2
ADAPT_EVERY = 100
TARGET_ACCEPT = (0.25, 0.40)
MIN_REPORTABLE_ESS = 100.0


def exponential_kernel(t, s):
    return np.exp(-np.abs(np.asarray(t, float) - np.asarray(s, float)))


@dataclass(frozen=True, eq=False)
class PolaronConfig:
    alpha: float
    T: int
    eta: float
    A: float
    p: float = 1.0
    kernel: Callable = exponential_kernel
    d: int = 3

    def __post_init__(self):
        if not self.alpha >= 0:
            raise ValueError("alpha must be >= 0")
        if not self.A > 0:
            raise ValueError("A must be positive")
        if not 0 < self.p < 2:
            raise ValueError("p must lie in (0, 2)")
        k = self.kernel_matrix
        if not np.all(np.isfinite(k)) or np.any(k < 0):
            raise ValueError("kernel must be non-negative and bounded")

    @property
    def lattice(self) -> Lattice:
        return Lattice(self.T, self.eta, self.d)

    @property
    def kernel_matrix(self) -> np.ndarray:
        lat = self.lattice
        t = lat.times[:lat.n]
        return np.asarray(self.kernel(t[:, None], t[None, :]), dtype=float)

    def describe(self) -> dict:
        return {"alpha": self.alpha, "T": self.T, "eta": self.eta, "A": self.A, "p": self.p,
                "d": self.d, "kernel": getattr(self.kernel, "__name__", "custom")}


def potential_VA(r, A: float, p: float = 1.0):
    """Bounded, decreasing, convex cutoff of ``r^-p``.

    At ``p = 1`` this is the tangent-line cutoff ``2A - A^2 r`` on ``[0, 1/A]``
    and ``1/r`` beyond.  Other ``p`` use the clamp ``min(A, r^-p)``.
    """
    if not A > 0:
        raise ValueError("A must be positive")
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ValueError("r must be non-negative")
    with np.errstate(divide="ignore"):
        if p == 1:
            return np.where(r <= 1.0 / A, 2.0 * A - A * A * r, 1.0 / np.maximum(r, 1.0 / A))
        return np.minimum(A, np.where(r > 0, r ** -p, np.inf))


class EnergyEvaluator:
    """Precomputed kernel weights for repeated energy evaluations on one lattice.

    Off-diagonal pairs are summed once over the condensed distance vector and
    doubled; the diagonal adds ``V_A(0) * eta^2 * trace(kappa)``.
    """

    def __init__(self, config: PolaronConfig):
        self.config = config
        lat = config.lattice
        self.n = lat.n
        w = lat.eta**2 * config.kernel_matrix
        iu = np.triu_indices(self.n, k=1)
        self.offdiag = w[iu] + w.T[iu]
        self.diag = float(np.trace(w)) * float(potential_VA(0.0, config.A, config.p))

    def _one(self, b: np.ndarray) -> float:
        r = distance.pdist(b)
        return self.diag + float(self.offdiag @ potential_VA(r, self.config.A, self.config.p))

    def __call__(self, increments: np.ndarray):
        x = np.asarray(increments, dtype=float)
        if x.ndim == 2:
            return self._one(path_values(x)[: self.n])
        b = path_values(x)[:, : self.n, :]
        return np.array([self._one(bi) for bi in b])


def interaction_energy(path: np.ndarray, config: PolaronConfig) -> float | np.ndarray:
    """Energy of increments ``(n, d)`` or a batch ``(count, n, d)``."""
    x = np.asarray(path, dtype=float)
    if x.shape[-2:] != (config.lattice.n, config.d):
        raise ValueError(f"path shape {x.shape} does not match lattice ({config.lattice.n}, {config.d})")
    return EnergyEvaluator(config)(x)


@dataclass
class McmcEstimate:
    mean: float
    stderr: float
    ess: float
    acceptRate: float
    steps: int
    seed: int
    sigma2: float = float("nan")
    sigma2_stderr: float = float("nan")
    rho: float = float("nan")

    def __post_init__(self):
        if self.stderr < 0:
            raise ValueError("stderr must be non-negative")
        if not 0 <= self.acceptRate <= 1:
            raise ValueError("acceptRate must lie in [0, 1]")

    @property
    def reportable(self) -> bool:
        return self.ess >= MIN_REPORTABLE_ESS

    def as_dict(self) -> dict:
        d = asdict(self)
        d["reportable"] = self.reportable
        return d


@dataclass
class ChainResult:
    estimate: McmcEstimate
    energy: np.ndarray      # post burn-in trace
    endpoint_sq: np.ndarray  # |B_T|^2 post burn-in
    samples: np.ndarray     # thinned post burn-in increments
    config: PolaronConfig
    chain: int = 0


class McmcError(RuntimeError):
    pass


def _bridge_refresh(x: np.ndarray, lo: int, hi: int, eta: float, rng) -> np.ndarray:
    # exact conditional of i.i.d. N(0, eta) increments given their block sum
    m = hi - lo
    z = rng.standard_normal((m, x.shape[1])) * math.sqrt(eta)
    s = x[lo:hi].sum(axis=0)
    y = x.copy()
    y[lo:hi] = z - z.mean(axis=0) + s / m
    return y


def _run_chain(config: PolaronConfig, steps: int, rng: np.random.Generator, seed: int,
               rho: float, bridge_fraction: float, max_stored: int, chain: int) -> ChainResult:
    lat = config.lattice
    n, d, eta, m = lat.n, config.d, lat.eta, lat.per_unit
    energy = EnergyEvaluator(config)
    alpha = config.alpha
    x = rng.standard_normal((n, d)) * math.sqrt(eta)
    e = float(energy(x))
    if not math.isfinite(e):
        raise McmcError("non-finite energy; check the cutoff A")
    warm = int(BURN_IN * steps)
    kept = steps - warm
    thin = max(1, kept // max_stored)
    energies = np.empty(kept)
    endpoints = np.empty(kept)
    stored = []
    acc_total = 0
    acc_pcn = tried_pcn = 0
    for step in range(steps):
        if rng.random() < bridge_fraction:
            i = int(rng.integers(lat.T))
            y = _bridge_refresh(x, i * m, (i + 1) * m, eta, rng)
            is_pcn = False
        else:
            xi = rng.standard_normal((n, d)) * math.sqrt(eta)
            y = math.sqrt(1.0 - rho * rho) * x + rho * xi
            is_pcn = True
        e_new = float(energy(y))
        if not math.isfinite(e_new):
            raise McmcError("non-finite energy; check the cutoff A")
        log_ratio = alpha * (e_new - e)
        accepted = log_ratio >= 0 or rng.random() < math.exp(log_ratio)
        if accepted:
            x, e = y, e_new
        if is_pcn:
            tried_pcn += 1
            acc_pcn += accepted
        if step < warm:
            if (step + 1) % ADAPT_EVERY == 0 and tried_pcn:
                rate = acc_pcn / tried_pcn
                if rate < TARGET_ACCEPT[0]:
                    rho *= 0.8
                elif rate > TARGET_ACCEPT[1]:
                    rho = min(1.0, rho * 1.25)
                acc_pcn = tried_pcn = 0
            continue
        k = step - warm
        acc_total += accepted
        energies[k] = e
        endpoints[k] = float(x.sum(axis=0) @ x.sum(axis=0))
        if k % thin == 0 and len(stored) < max_stored:
            stored.append(x.copy())
    if kept and acc_total == 0:
        raise McmcError("zero acceptance after the adaptation window")
    mean, se = batch_means(endpoints, N_BATCHES)
    var = float(np.var(endpoints, ddof=1))
    ess = var / se**2 if se > 0 else float(kept)
    scale = d * config.T
    est = McmcEstimate(mean, se, ess, acc_total / kept, steps, seed,
                       sigma2=mean / scale, sigma2_stderr=se / scale, rho=rho)
    return ChainResult(est, energies, endpoints, np.array(stored), config, chain)


def chain_seeds(seed: int, chains: int) -> list[np.random.SeedSequence]:
    return np.random.SeedSequence(seed).spawn(chains)


def pool(estimates: Sequence[McmcEstimate], seed: int) -> McmcEstimate:
    """Inverse-variance pooling of independent chain estimates."""
    if not estimates:
        raise ValueError("nothing to pool")
    if len(estimates) == 1:
        return estimates[0]
    se = np.array([e.stderr for e in estimates])
    if np.any(se == 0):
        w = (se == 0).astype(float)
        se_pool = 0.0
    else:
        w = 1.0 / se**2
        se_pool = float(1.0 / math.sqrt(w.sum()))
    mean = float(np.sum(w * [e.mean for e in estimates]) / w.sum())
    s2 = float(np.sum(w * [e.sigma2 for e in estimates]) / w.sum())
    scale = estimates[0].mean / estimates[0].sigma2 if estimates[0].sigma2 else float("nan")
    return McmcEstimate(
        mean, se_pool, float(sum(e.ess for e in estimates)),
        float(np.mean([e.acceptRate for e in estimates])),
        int(sum(e.steps for e in estimates)), seed,
        sigma2=s2, sigma2_stderr=se_pool / scale if scale == scale else float("nan"),
        rho=float(np.mean([e.rho for e in estimates])),
    )


def mcmc_run(config: PolaronConfig, steps: int, seed: int, proposal: Optional[dict] = None,
             chains: int = 1, max_stored: int = 2048) -> tuple[McmcEstimate, list[ChainResult]]:
    """Run ``chains`` independent chains and pool their ``E|B_T|^2`` estimates.

    Returns the pooled estimate and the per-chain results.  Deterministic in
    ``seed``: chain ``c`` uses the ``c``-th spawned child of ``SeedSequence(seed)``.
    """
    if steps < 10_000:
        raise ValueError("steps must be >= 1e4")
    if chains < 1:
        raise ValueError("chains must be >= 1")
    prop = {"rho": 0.2, "bridgeFraction": 0.5}
    prop.update(proposal or {})
    rho, bf = float(prop["rho"]), float(prop["bridgeFraction"])
    if not 0 < rho <= 1:
        raise ValueError("rho must lie in (0, 1]")
    if not 0 <= bf < 1:
        raise ValueError("bridgeFraction must lie in [0, 1)")
    results = []
    for c, ss in enumerate(chain_seeds(seed, chains)):
        rng = np.random.default_rng(ss)
        results.append(_run_chain(config, steps, rng, seed, rho, bf, max_stored, c))
    return pool([r.estimate for r in results], seed), results


@dataclass
class OscillationRow:
    interval: int
    R: float
    frequency: float
    stderr: float
    count: int


def oscillation_stats(samples: np.ndarray, lattice: Lattice, R_grid: Sequence[float],
                      intervals: Optional[Sequence[int]] = None) -> list[OscillationRow]:
    """Empirical ``P[sup_{s,t in [i,i+1]} |B_t - B_s| <= R]`` per interval and ``R``.

    Samples are taken in chain order; the stderr uses batch means when there
    are enough samples, which accounts for autocorrelation.
    """
    from .bodies import OscillationSet

    x = np.asarray(samples, dtype=float)
    if x.ndim != 3 or x.shape[0] == 0:
        raise ValueError("empty chain")
    intervals = range(lattice.T) if intervals is None else intervals
    rows = []
    for i in intervals:
        osc = OscillationSet(i, 1.0, lattice.per_unit).oscillation(x)
        for R in R_grid:
            ind = (osc <= R).astype(float)
            if ind.size >= 2 * N_BATCHES:
                f, se = batch_means(ind, N_BATCHES)
            else:
                f = float(ind.mean())
                se = math.sqrt(f * (1 - f) / ind.size)
            rows.append(OscillationRow(int(i), float(R), f, se, int(ind.size)))
    return rows


def write_chain_csv(result: ChainResult, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "E", "BT2"])
        for k, (e, b) in enumerate(zip(result.energy, result.endpoint_sq)):
            w.writerow([k, f"{e:.16e}", f"{b:.16e}"])


def write_summary_json(config: PolaronConfig, estimate: McmcEstimate, path) -> None:
    payload = {"config": config.describe(), "estimate": estimate.mean if estimate.reportable else None,
               "stderr": estimate.stderr, "ess": estimate.ess, "acceptRate": estimate.acceptRate,
               "sigma2": estimate.sigma2 if estimate.reportable else None}
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
