"""Centered Gaussian measures on increment coordinates.

Every measure acts coordinatewise: an ``n x n`` precision matrix describes
one spatial coordinate and the ``d`` coordinates are i.i.d. copies.
Quadratic reweighting, dilation, sampling and mixture bookkeeping live here.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import linalg

SYM_TOL = 1e-12
PSD_TOL = 1e-10
N_BATCHES = 32


def symmetrize(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    return 0.5 * (m + m.T)


@dataclass(frozen=True, eq=False)
class QuadraticForm:
    """Non-negative quadratic ``Q(x) = x^T M x`` applied per spatial coordinate.

    For a path with ``d`` coordinates the value is the sum of the ``d``
    coordinate values.
    """

    matrix: np.ndarray
    shift_invariant: bool = False
    name: str = "Q"

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"quadratic form must be square, got shape {m.shape}")
        m = symmetrize(m)
        if m.size:
            evals = np.linalg.eigvalsh(m)
            top = max(abs(evals[-1]), 1.0)
            if evals[0] < -PSD_TOL * top:
                raise ValueError(f"quadratic form is not PSD (min eigenvalue {evals[0]:.3e})")
        object.__setattr__(self, "matrix", m)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def __call__(self, x: np.ndarray) -> np.ndarray:
        """Evaluate on increments of shape ``(..., n, d)``; a 1-D input is one path with d=1."""
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        return np.einsum("...ik,ij,...jk->...", x, self.matrix, x)

    def scaled(self, c: float, name: Optional[str] = None) -> "QuadraticForm":
        if c < 0:
            raise ValueError("scale must be non-negative")
        return QuadraticForm(c * self.matrix, self.shift_invariant, name or f"{c:g}*{self.name}")

    def __add__(self, other: "QuadraticForm") -> "QuadraticForm":
        if other.n != self.n:
            raise ValueError("dimension mismatch")
        return QuadraticForm(self.matrix + other.matrix,
                             self.shift_invariant and other.shift_invariant,
                             f"{self.name}+{other.name}")


@dataclass(frozen=True, eq=False)
class GaussianPathMeasure:
    """Mean-zero Gaussian with per-coordinate precision matrix.

    ``lattice`` is optional so that the same class also covers generic
    small-dimensional Gaussians (GCI tests, decomposition experiments);
    in that case ``d`` gives the number of i.i.d. coordinates.
    """

    precision: np.ndarray
    d: int = 1
    lattice: object = None
    label: str = ""

    def __post_init__(self):
        p = np.asarray(self.precision, dtype=float)
        if p.ndim != 2 or p.shape[0] != p.shape[1]:
            raise ValueError(f"precision must be square, got shape {p.shape}")
        scale = max(np.abs(p).max(), 1.0)
        if np.abs(p - p.T).max() > SYM_TOL * scale:
            raise ValueError("precision matrix is not symmetric")
        object.__setattr__(self, "precision", symmetrize(p))
        if self.lattice is not None:
            if self.lattice.n != p.shape[0]:
                raise ValueError("precision dimension does not match lattice")
            object.__setattr__(self, "d", self.lattice.d)
        if self.d < 1:
            raise ValueError("d must be >= 1")
        _ = self.cholesky  # fail fast on non-PD input

    @property
    def n(self) -> int:
        return self.precision.shape[0]

    @cached_property
    def cholesky(self) -> np.ndarray:
        """Lower Cholesky factor of the precision."""
        try:
            c = np.linalg.cholesky(self.precision)
        except np.linalg.LinAlgError as exc:
            raise ValueError(f"precision is not positive definite ({self.label})") from exc
        if np.any(np.diag(c) <= 0):
            raise ValueError("non-positive Cholesky pivot")
        return c

    @cached_property
    def covariance(self) -> np.ndarray:
        return symmetrize(linalg.cho_solve((self.cholesky, True), np.eye(self.n)))

    @classmethod
    def from_covariance(cls, cov, d: int = 1, label: str = "") -> "GaussianPathMeasure":
        cov = symmetrize(np.atleast_2d(cov))
        return cls(symmetrize(np.linalg.inv(cov)), d=d, label=label)


def standard_gaussian(n: int, d: int = 1) -> GaussianPathMeasure:
    return GaussianPathMeasure(np.eye(n), d=d, label="N(0,I)")


def reweight_quadratic(mu: GaussianPathMeasure, q: QuadraticForm) -> GaussianPathMeasure:
    """Return the measure with density proportional to ``exp(-Q)`` against ``mu``."""
    if q.n != mu.n:
        raise ValueError(f"dimension mismatch: form {q.n} vs measure {mu.n}")
    new = mu.precision + 2.0 * q.matrix
    label = f"{mu.label}<{q.name}>" if mu.label else f"<{q.name}>"
    out = replace(mu, precision=new, label=label)
    assert np.all(np.diag(out.cholesky) > 0)
    return out


def dilate2(mu: GaussianPathMeasure) -> GaussianPathMeasure:
    """Pushforward under ``x -> 2x``: covariance times four."""
    return replace(mu, precision=mu.precision / 4.0, label=f"({mu.label})x2")


def sample(mu: GaussianPathMeasure, count: int, seed: int) -> np.ndarray:
    """Draw ``count`` i.i.d. increment arrays of shape ``(count, n, d)``."""
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((mu.n, count * mu.d))
    # precision = L L^T  =>  x = L^{-T} z has covariance precision^{-1}
    x = linalg.solve_triangular(mu.cholesky, z, lower=True, trans="T")
    return x.reshape(mu.n, count, mu.d).transpose(1, 0, 2)


def batch_means(values, n_batches: int = N_BATCHES) -> tuple[float, float]:
    """Mean and batch-means standard error of a (possibly correlated) series."""
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0:
        raise ValueError("empty series")
    mean = float(v.mean())
    nb = min(n_batches, v.size)
    if nb < 2:
        return mean, 0.0
    size = v.size // nb
    b = v[: nb * size].reshape(nb, size).mean(axis=1)
    return mean, float(b.std(ddof=1) / np.sqrt(nb))


def convex_prob(mu: GaussianPathMeasure, body, count: int, seed: int) -> tuple[float, float]:
    """Monte Carlo estimate of ``mu(K)`` with binomial standard error."""
    x = sample(mu, count, seed)
    inside = body.contains(x)
    p = float(inside.mean())
    return p, float(np.sqrt(p * (1.0 - p) / count))


# --- mixtures --------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class MixtureComponent:
    """One component of a mixture over a shared base measure.

    ``density`` is the normalized density with respect to the base measure;
    ``sampler(count, seed)`` may be ``None`` once a component has been
    reweighted and no exact sampler is known.
    """

    weight: float
    density: Callable[[np.ndarray], np.ndarray]
    id: str
    sampler: Optional[Callable[[int, int], np.ndarray]] = None


@dataclass(frozen=True, eq=False)
class MixtureDecomposition:
    components: tuple[MixtureComponent, ...] = field(default_factory=tuple)

    def __post_init__(self):
        comps = tuple(self.components)
        if not comps:
            raise ValueError("mixture needs at least one component")
        w = np.array([c.weight for c in comps])
        if np.any(w < 0):
            raise ValueError("negative mixture weight")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights sum to {w.sum()!r}, not 1")
        object.__setattr__(self, "components", comps)

    @property
    def weights(self) -> np.ndarray:
        return np.array([c.weight for c in self.components])

    @property
    def ids(self) -> list[str]:
        return [c.id for c in self.components]

    def density(self, x) -> np.ndarray:
        return sum(c.weight * c.density(x) for c in self.components)

    def __len__(self):
        return len(self.components)


def _renormalize(w: np.ndarray) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    return w / w.sum()


def mixture_reweight(decomp: MixtureDecomposition, f, quadrature) -> MixtureDecomposition:
    """Reweight every component by ``f`` and update weights by Bayes' rule.

    ``quadrature(component, f)`` returns ``E^{nu_j}[f]``.  The new weights are
    ``p_j E^{nu_j}[f] / sum_k p_k E^{nu_k}[f]``.
    """
    expectations = np.array([float(quadrature(c, f)) for c in decomp.components])
    if np.any(expectations < 0) or not np.all(np.isfinite(expectations)):
        raise ValueError("component expectations must be finite and non-negative")
    p = decomp.weights
    total = float(p @ expectations)
    if total <= 0:
        raise ValueError("all component expectations are zero")
    q = _renormalize(p * expectations)
    comps = []
    for c, e, qj in zip(decomp.components, expectations, q):
        if e > 0:
            dens = (lambda x, c=c, e=e: f(x) * c.density(x) / e)
        else:
            dens = (lambda x: np.zeros(np.shape(x)[0]))
        comps.append(MixtureComponent(float(qj), dens, c.id))
    return MixtureDecomposition(tuple(comps))


def coarsen(decomp: MixtureDecomposition, partition: Sequence[Sequence[int]]) -> MixtureDecomposition:
    """Merge components along a partition of their indices."""
    k = len(decomp)
    flat = [j for block in partition for j in block]
    if sorted(flat) != list(range(k)) or any(len(b) == 0 for b in partition):
        raise ValueError("partition must cover every component index exactly once")
    p = decomp.weights
    merged = []
    for block in partition:
        block = list(block)
        ps = float(p[block].sum())
        parts = [decomp.components[j] for j in block]
        pw = p[block]
        if ps > 0:
            dens = (lambda x, parts=parts, pw=pw, ps=ps:
                    sum(w * c.density(x) for w, c in zip(pw, parts)) / ps)
        else:
            dens = (lambda x: np.zeros(np.shape(x)[0]))
        sampler = None
        if all(c.sampler is not None for c in parts) and ps > 0:
            sampler = _merged_sampler(parts, pw / ps)
        merged.append(MixtureComponent(ps, dens, "+".join(c.id for c in parts), sampler))
    w = _renormalize([c.weight for c in merged])
    merged = [replace(c, weight=float(wi)) for c, wi in zip(merged, w)]
    return MixtureDecomposition(tuple(merged))


def _merged_sampler(parts, probs):
    def draw(count: int, seed: int) -> np.ndarray:
        rng = np.random.default_rng(seed)
        labels = rng.choice(len(parts), size=count, p=probs)
        out = None
        for j, c in enumerate(parts):
            idx = np.flatnonzero(labels == j)
            if idx.size == 0:
                continue
            draws = c.sampler(idx.size, int(rng.integers(2**63)))
            if out is None:
                out = np.empty((count,) + draws.shape[1:])
            out[idx] = draws
        return out

    return draw
