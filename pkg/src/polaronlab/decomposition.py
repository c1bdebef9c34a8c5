"""Good/bad mixture decomposition of a Gaussian measure around a symmetric convex body.

After whitening ``mu`` to a standard Gaussian, with ``d(x)`` the distance to
the (whitened) body ``K``,

    d nu_bad  ∝ exp(-sigma(d(x))) d mu,
    d nu_good ∝ (1 - exp(-sigma(d(x)))) d mu,

and ``delta' = E_mu[exp(-sigma(d))]`` is the bad weight.  ``sigma`` is a
mollified joining of two quadratics.  Samplers are exact rejection samplers
from ``mu`` because both acceptance functions are bounded by 1.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import linalg, special

from .bodies import ConvexBody, _as_batch, _flat
from .gaussian import GaussianPathMeasure

_NODES, _WEIGHTS = np.polynomial.legendre.leggauss(64)


def _bump_weights() -> tuple[np.ndarray, np.ndarray]:
    # Gauss-Legendre rule against the standard bump exp(-1/(1-u^2)) on (-1, 1)
    w = _WEIGHTS * np.exp(-1.0 / (1.0 - _NODES**2))
    return _NODES.copy(), w / w.sum()


_BUMP_U, _BUMP_W = _bump_weights()


def _check_params(R: float, C1: float):
    if not R > 0 or not C1 > 0:
        raise ValueError("R and C1 must be positive")


def sigma_tilde(r, R: float, C1: float):
    """The C^1 joining of two quadratics: ``R^2`` on ``[0,1]``, zero past ``2 C1 R + 1``."""
    _check_params(R, C1)
    r = np.asarray(r, dtype=float)
    c2 = 2.0 * C1 * C1
    mid = C1 * R + 1.0
    end = 2.0 * C1 * R + 1.0
    out = np.where(r <= 1.0, R * R, 0.0)
    out = np.where((r > 1.0) & (r <= mid), R * R - (r - 1.0) ** 2 / c2, out)
    out = np.where((r > mid) & (r < end), (end - r) ** 2 / c2, out)
    return out


@dataclass(frozen=True)
class SigmaProfile:
    """Level ``R``, smoothing constant ``C1`` and mollifier half-width.

    The mollifier is centred at ``r + width``, so ``sigma`` equals ``R^2``
    exactly on ``[0, 1]`` and vanishes from ``2 C1 R + 1 + 2 width`` on.
    """

    R: float
    C1: float = 10.0
    width: Optional[float] = None

    def __post_init__(self):
        if not self.R >= 0:
            raise ValueError("R must be non-negative")
        if not self.C1 > 0:
            raise ValueError("C1 must be positive")
        w = min(1.0, self.C1) / 10.0 if self.width is None else self.width
        if not 0 < w <= min(1.0, self.C1) / 10.0 + 1e-15:
            raise ValueError("width must lie in (0, min(1, C1)/10]")
        object.__setattr__(self, "width", float(w))

    @classmethod
    def from_delta(cls, delta: float, C1: float = 10.0) -> "SigmaProfile":
        """``R = C1 sqrt(log(1/delta))``."""
        if not 0 < delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        return cls(C1 * math.sqrt(math.log(1.0 / delta)), C1)

    @property
    def support_end(self) -> float:
        return 2.0 * self.C1 * self.R + 1.0 + 2.0 * self.width

    def __call__(self, r):
        return sigma_smooth(r, self)


def sigma_smooth(r, profile: SigmaProfile):
    """Mollified ``sigma_tilde``; a convex combination of shifted copies."""
    r = np.asarray(r, dtype=float)
    if profile.R == 0:
        return np.zeros_like(r)
    R, C1, w = profile.R, profile.C1, profile.width
    shifts = w * (1.0 + _BUMP_U)  # in [0, 2w]
    arg = r[..., None] - shifts
    deficit = R * R - sigma_tilde(np.maximum(arg, 0.0), R, C1)
    out = R * R - deficit @ _BUMP_W
    # the weights sum to one only up to rounding; keep the tail exactly zero
    return np.where(r >= profile.support_end, 0.0, np.maximum(out, 0.0))


def profile_checks(profile: SigmaProfile, points: int = 10_000, slack: float = 1e-6) -> dict:
    """Check monotonicity, the plateau, compact support and the derivative bounds on a grid."""
    R, C1 = profile.R, profile.C1
    hi = max(3.0 * C1 * R, profile.support_end) * 1.05 + 1.0
    r = np.linspace(0.0, hi, points)
    s = sigma_smooth(r, profile)
    h = r[1] - r[0]
    d1 = np.gradient(s, h)
    d2 = (s[2:] - 2 * s[1:-1] + s[:-2]) / h**2
    tail = r >= 3.0 * C1 * R
    past1 = r >= 1.0
    out = {
        "range": bool(np.all(s >= -slack) and np.all(s <= R * R + slack)),
        "non_increasing": bool(np.all(np.diff(s) <= slack)),
        "plateau": bool(np.all(s[r <= 1.0] == R * R)),
        "compact": bool(np.all(np.abs(s[tail]) <= slack)) if tail.any() else True,
        "lipschitz": bool(np.all(np.abs(d1[past1]) <= (r[past1] - 1.0) / C1 + slack + 2 * h / C1**2)),
        "curvature": bool(np.max(np.abs(d2)) <= 1.0 / C1 + slack),
        "max_curvature": float(np.max(np.abs(d2))),
    }
    out["all"] = all(v for k, v in out.items() if k not in ("max_curvature",))
    return out


class DecompositionError(ValueError):
    pass


class RejectionCapExceeded(RuntimeError):
    pass


@dataclass
class Decomposition:
    mu: GaussianPathMeasure
    body: ConvexBody          # in whitened coordinates
    profile: SigmaProfile
    delta: float
    delta_stderr: float
    delta_prime: float
    delta_prime_stderr: float
    seed: int
    max_draws: int = 10_000_000
    dist_tol: float = 1e-9

    # coordinate maps: x = whiten_inverse(z)
    def whiten(self, x: np.ndarray) -> np.ndarray:
        x = _as_batch(x)
        return np.einsum("ji,cjk->cik", self.mu.cholesky, x)

    def unwhiten(self, z: np.ndarray) -> np.ndarray:
        z = _as_batch(z)
        c, n, d = z.shape
        flat = z.transpose(1, 0, 2).reshape(n, c * d)
        x = linalg.solve_triangular(self.mu.cholesky, flat, lower=True, trans="T")
        return x.reshape(n, c, d).transpose(1, 0, 2)

    def distance(self, z: np.ndarray) -> np.ndarray:
        return self.body.distance(z, tol=self.dist_tol)

    def bad_weight(self, z: np.ndarray) -> np.ndarray:
        """``exp(-sigma(d(z)))`` in whitened coordinates."""
        return np.exp(-sigma_smooth(self.distance(z), self.profile))

    def good_density(self, z: np.ndarray) -> np.ndarray:
        """``d nu_good / d mu`` at whitened points."""
        return -np.expm1(-sigma_smooth(self.distance(z), self.profile)) / (1.0 - self.delta_prime)

    def bad_density(self, z: np.ndarray) -> np.ndarray:
        if self.delta_prime <= 0:
            raise DecompositionError("delta' underflows to zero; nu_bad has no usable density")
        return self.bad_weight(z) / self.delta_prime

    def _rejection(self, count: int, seed: int, accept: Callable[[np.ndarray], np.ndarray],
                   whitened: bool) -> np.ndarray:
        rng = np.random.default_rng(seed)
        n, d = self.mu.n, self.mu.d
        got, drawn = [], 0
        have = 0
        batch = max(1024, count)
        while have < count:
            if drawn >= self.max_draws:
                raise RejectionCapExceeded(
                    f"accepted {have}/{count} after {drawn} proposals; acceptance too small")
            z = rng.standard_normal((batch, n, d))
            drawn += batch
            keep = rng.random(batch) < accept(z)
            got.append(z[keep])
            have += int(keep.sum())
        z = np.concatenate(got)[:count]
        return z if whitened else self.unwhiten(z)

    def sample_good(self, count: int, seed: int, whitened: bool = False) -> np.ndarray:
        return self._rejection(count, seed, lambda z: -np.expm1(-sigma_smooth(self.distance(z), self.profile)),
                               whitened)

    def sample_bad(self, count: int, seed: int, whitened: bool = False) -> np.ndarray:
        return self._rejection(count, seed, self.bad_weight, whitened)

    def support_factor(self) -> float:
        """Dilation ``4 C1^3`` containing the good support."""
        return 4.0 * self.profile.C1**3

    def report(self, **extra) -> dict:
        out = {
            "delta": self.delta, "delta_stderr": self.delta_stderr,
            "delta_prime": self.delta_prime, "delta_prime_stderr": self.delta_prime_stderr,
            "R": self.profile.R, "C1": self.profile.C1, "width": self.profile.width,
            "seed": self.seed,
        }
        out.update(extra)
        return out


def whitened_body(mu: GaussianPathMeasure, body: ConvexBody) -> ConvexBody:
    """The body seen in coordinates where ``mu`` is standard: ``{z : L^{-T} z in K}``."""
    linv_t = linalg.solve_triangular(mu.cholesky, np.eye(mu.n), lower=True, trans="T")
    return body.transformed(linv_t)


def measure_of_body(body: ConvexBody, dim: int, n_mc: int, seed: int) -> tuple[float, float]:
    """``P[Z in K]`` for whitened ``K``: closed form for balls, Monte Carlo otherwise."""
    from .bodies import Ball

    if isinstance(body, Ball):
        return float(special.gammainc(dim / 2.0, body.radius**2 / 2.0)), 0.0
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n_mc, dim, 1))
    inside = body.contains(z)
    p = float(inside.mean())
    return p, math.sqrt(max(p * (1 - p), 1.0 / n_mc) / n_mc)


def decompose(mu: GaussianPathMeasure, body: ConvexBody, profile: Optional[SigmaProfile] = None,
              n_mc: int = 100_000, seed: int = 0, C1: float = 10.0,
              delta: Optional[float] = None) -> Decomposition:
    """Build the decomposition and estimate ``delta'`` by Monte Carlo.

    ``delta`` defaults to ``1 - mu(K)`` (closed form for balls, Monte Carlo
    otherwise; a Monte Carlo estimate of zero falls back to the 95% upper
    bound ``3 / n_mc``).  ``profile`` defaults to ``R = C1 sqrt(log 1/delta)``.
    """
    kw = whitened_body(mu, body)
    dim = mu.n * mu.d
    if delta is None:
        pk, se = measure_of_body(kw, dim, n_mc, seed)
        delta = 1.0 - pk
        if delta <= 0:
            delta = 3.0 / n_mc
    else:
        se = 0.0
    if delta > 0.1:
        raise DecompositionError(f"mu(K) = {1 - delta:.4f} < 0.9")
    profile = profile or SigmaProfile.from_delta(delta, C1)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
    dec = Decomposition(mu, kw, profile, delta, se, float("nan"), float("nan"), seed)
    z = rng.standard_normal((n_mc, mu.n, mu.d))
    w = dec.bad_weight(z)
    dec.delta_prime = float(w.mean())
    dec.delta_prime_stderr = float(w.std(ddof=1) / math.sqrt(n_mc))
    return dec


def mixture_identity_error(dec: Decomposition, points: np.ndarray) -> float:
    """``max |(1-delta') g + delta' b - 1|`` over whitened points (densities against ``mu``)."""
    g = dec.good_density(points)
    bw = dec.bad_weight(points)
    return float(np.max(np.abs((1.0 - dec.delta_prime) * g + bw - 1.0)))


def support_violations(dec: Decomposition, samples_whitened: np.ndarray, factor: Optional[float] = None) -> int:
    f = dec.support_factor() if factor is None else factor
    return int(np.sum(~dec.body.dilate(f).contains(samples_whitened, tol=1e-12)))


def inradius_check(dec: Decomposition, count: int = 1000, seed: int = 0) -> int:
    """Points on the sphere of radius ``R / C1^2`` found outside ``K``."""
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((count, dec.mu.n, dec.mu.d))
    z /= np.linalg.norm(_flat(z), axis=1)[:, None, None]
    z *= dec.profile.R / dec.profile.C1**2
    return int(np.sum(~dec.body.contains(z, tol=1e-12)))


def ray_monotonicity(dec: Decomposition, rays: int = 1000, points: int = 64, seed: int = 0) -> int:
    """Rays along which the good density increases (count of violating rays)."""
    rng = np.random.default_rng(seed)
    u = rng.standard_normal((rays, dec.mu.n, dec.mu.d))
    u /= np.linalg.norm(_flat(u), axis=1)[:, None, None]
    top = dec.profile.support_end + 10.0
    ts = np.linspace(0.0, top, points)
    bad = 0
    for ray in u:
        g = dec.good_density(ts[:, None, None] * ray[None])
        bad += bool(np.any(np.diff(g) > 1e-12))
    return bad


@dataclass
class LogConcavityReport:
    segments: int
    violations: int
    worst: float
    tol: float

    def as_dict(self) -> dict:
        return {"segments": self.segments, "violations": self.violations,
                "worst_margin": self.worst, "tol": self.tol}


def _shell_segments(dec: Decomposition, count: int, rng) -> tuple[np.ndarray, np.ndarray]:
    # midpoints spread over the shell where sigma varies, lengths log-uniform
    n, d = dec.mu.n, dec.mu.d
    x0 = rng.standard_normal((count, n, d)) * 3.0
    p = dec.body.project(x0) if dec.body.exact_projection else _dykstra_project(dec, x0)
    normal = x0 - p
    nn = np.linalg.norm(_flat(normal), axis=1)
    rand = rng.standard_normal((count, n, d))
    rand /= np.linalg.norm(_flat(rand), axis=1)[:, None, None]
    normal = np.where(nn[:, None, None] > 1e-12, normal / np.maximum(nn, 1e-300)[:, None, None], rand)
    # half the depths anywhere in the shell, half inside the transition band
    band = dec.profile.support_end - 1.0
    wide = rng.uniform(0.0, dec.profile.support_end + 1.0, count)
    narrow = 1.0 + rng.uniform(0.0, band, count)
    depth = np.where(rng.random(count) < 0.5, wide, narrow)
    y = p + depth[:, None, None] * normal
    mix = rng.random(count)[:, None, None]
    v = np.where(mix < 0.5, normal, rand)
    half = np.exp(rng.uniform(math.log(1e-3 * band), math.log(max(band, 3.0)), count))
    return y - half[:, None, None] * v, y + half[:, None, None] * v


def _dykstra_project(dec, x):
    from .bodies import dykstra

    return dykstra(dec.body.pieces(), x, dec.dist_tol)


def logconcavity_check(dec: Decomposition, n_lines: int = 1000, seed: int = 0,
                       tol: float = 1e-6) -> LogConcavityReport:
    """Midpoint convexity of ``sigma(d(z)) + 3|z|^2/8`` on random segments.

    Half the segments are uniform random chords; half are concentrated in
    the shell where ``sigma`` varies, with lengths down to a thousandth of
    the transition width.
    """
    rng = np.random.default_rng(seed)
    n, d = dec.mu.n, dec.mu.d
    n_shell = n_lines // 2
    n_rand = n_lines - n_shell
    xa = rng.standard_normal((n_rand, n, d)) * 3.0
    za = rng.standard_normal((n_rand, n, d)) * 3.0
    xb, zb = _shell_segments(dec, n_shell, rng)
    x = np.concatenate([xa, xb])
    z = np.concatenate([za, zb])
    y = 0.5 * (x + z)

    def phi(v):
        return sigma_smooth(dec.distance(v), dec.profile) + 0.375 * np.sum(_flat(v) ** 2, axis=1)

    margin = 0.5 * phi(x) + 0.5 * phi(z) - phi(y)
    return LogConcavityReport(n_lines, int(np.sum(margin < -tol)), float(margin.min()), tol)


def smallest_passing_c1(mu: GaussianPathMeasure, body: ConvexBody, grid: Sequence[float],
                        n_mc: int = 20_000, n_lines: int = 1000, seed: int = 0) -> Optional[float]:
    """Smallest ``C1`` in ``grid`` whose decomposition passes every numerical check."""
    for c1 in sorted(grid):
        try:
            dec = decompose(mu, body, n_mc=n_mc, seed=seed, C1=c1)
        except DecompositionError:
            continue
        if dec.delta_prime > dec.delta + 3 * dec.delta_prime_stderr:
            continue
        if not profile_checks(dec.profile)["all"]:
            continue
        if logconcavity_check(dec, n_lines, seed).violations:
            continue
        if inradius_check(dec, 200, seed):
            continue
        return c1
    return None


def write_report(report: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
