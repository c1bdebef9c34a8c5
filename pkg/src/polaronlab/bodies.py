"""Origin-symmetric convex bodies: membership, projection and distance.

Bodies act on batches of increment arrays of shape ``(count, n, d)``; a
``(count, N)`` array is read as ``d = 1``.  Ball and slab projections are
exact; intersections and oscillation sets use Dykstra's alternating
projections.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


class DykstraDidNotConverge(RuntimeError):
    pass


def _as_batch(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        return x[None, :, None]
    if x.ndim == 2:
        return x[:, :, None]
    return x


def _flat(x: np.ndarray) -> np.ndarray:
    return x.reshape(x.shape[0], -1)


class ConvexBody:
    """Base class; subclasses implement ``contains`` and ``project``."""

    exact_projection = True

    def contains(self, x: np.ndarray, tol: float = 0.0) -> np.ndarray:
        raise NotImplementedError

    def project(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def distance(self, x: np.ndarray, tol: float = 1e-9, max_iter: int = 10_000) -> np.ndarray:
        x = _as_batch(x)
        p = self.project(x) if self.exact_projection else dykstra(self.pieces(), x, tol, max_iter)
        return np.linalg.norm(_flat(x - p), axis=1)

    def dilate(self, c: float) -> "ConvexBody":
        raise NotImplementedError

    def pieces(self) -> list["ConvexBody"]:
        return [self]

    def transformed(self, factor: np.ndarray) -> "ConvexBody":
        """The body ``{z : factor @ z in K}`` (per spatial coordinate)."""
        raise NotImplementedError(f"{type(self).__name__} does not support linear maps")


@dataclass(frozen=True)
class Ball(ConvexBody):
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("radius must be positive")

    def contains(self, x, tol=0.0):
        x = _as_batch(x)
        return np.linalg.norm(_flat(x), axis=1) <= self.radius * (1 + tol)

    def project(self, x):
        x = _as_batch(x)
        if np.isinf(self.radius):
            return x.copy()
        r = np.linalg.norm(_flat(x), axis=1)
        scale = np.where(r > self.radius, self.radius / np.maximum(r, 1e-300), 1.0)
        return x * scale[:, None, None]

    def dilate(self, c):
        return Ball(self.radius * c)

    def transformed(self, factor):
        # isotropic maps only: factor = s * I
        f = np.asarray(factor, float)
        s = f[0, 0]
        if not np.allclose(f, s * np.eye(f.shape[0])):
            raise NotImplementedError("ball under a non-isotropic map is an ellipsoid")
        return Ball(self.radius / abs(s))


@dataclass(frozen=True)
class Slab(ConvexBody):
    """``{x : |<u, x>| <= h}`` with ``u`` a unit vector over the flattened coordinates."""

    normal: tuple
    half_width: float

    def __post_init__(self):
        u = np.asarray(self.normal, dtype=float).ravel()
        nu = np.linalg.norm(u)
        if nu == 0:
            raise ValueError("normal must be non-zero")
        if not self.half_width > 0:
            raise ValueError("half-width must be positive")
        object.__setattr__(self, "normal", tuple(u / nu))

    @property
    def u(self) -> np.ndarray:
        return np.asarray(self.normal)

    def contains(self, x, tol=0.0):
        x = _as_batch(x)
        return np.abs(_flat(x) @ self.u) <= self.half_width * (1 + tol)

    def project(self, x):
        x = _as_batch(x)
        v = _flat(x) @ self.u
        excess = v - np.clip(v, -self.half_width, self.half_width)
        return x - (excess[:, None] * self.u[None, :]).reshape(x.shape)

    def dilate(self, c):
        return Slab(self.normal, self.half_width * c)

    def transformed(self, factor):
        # |<u, F z>| <= h  <=>  |<F^T u, z>| <= h
        f = np.asarray(factor, float)
        if self.u.size != f.shape[0]:
            f = np.kron(f, np.eye(self.u.size // f.shape[0]))
        w = f.T @ self.u
        nw = np.linalg.norm(w)
        return Slab(tuple(w / nw), self.half_width / nw)


@dataclass(frozen=True)
class Intersection(ConvexBody):
    bodies: tuple

    exact_projection = False

    def __post_init__(self):
        if not self.bodies:
            raise ValueError("intersection of nothing")
        object.__setattr__(self, "bodies", tuple(self.bodies))

    def contains(self, x, tol=0.0):
        out = None
        for b in self.bodies:
            c = b.contains(x, tol)
            out = c if out is None else out & c
        return out

    def pieces(self):
        return [p for b in self.bodies for p in b.pieces()]

    def project(self, x):
        return dykstra(self.pieces(), _as_batch(x))

    def dilate(self, c):
        return Intersection(tuple(b.dilate(c) for b in self.bodies))

    def transformed(self, factor):
        return Intersection(tuple(b.transformed(factor) for b in self.bodies))


def box(half_widths: Sequence[float]) -> Intersection:
    """Axis-aligned box as an intersection of coordinate slabs."""
    hw = np.asarray(half_widths, dtype=float)
    slabs = []
    for j, h in enumerate(hw):
        e = np.zeros(hw.size)
        e[j] = 1.0
        slabs.append(Slab(tuple(e), float(h)))
    return Intersection(tuple(slabs))


@dataclass(frozen=True)
class BlockSumBall(ConvexBody):
    """``{x : |sum_{a <= j < b} x_j| <= R}``: one pairwise constraint of an oscillation set.

    In increment coordinates ``B_b - B_a`` is the block sum; the Euclidean
    projection spreads the excess equally over the block.
    """

    start: int
    stop: int
    R: float

    def contains(self, x, tol=0.0):
        x = _as_batch(x)
        s = x[:, self.start:self.stop, :].sum(axis=1)
        return np.linalg.norm(s, axis=1) <= self.R * (1 + tol)

    def project(self, x):
        x = _as_batch(x)
        m = self.stop - self.start
        s = x[:, self.start:self.stop, :].sum(axis=1)
        ns = np.linalg.norm(s, axis=1, keepdims=True)
        target = np.where(ns > self.R, s * self.R / np.maximum(ns, 1e-300), s)
        out = x.copy()
        out[:, self.start:self.stop, :] -= ((s - target) / m)[:, None, :]
        return out

    def dilate(self, c):
        return BlockSumBall(self.start, self.stop, self.R * c)

    def transformed(self, factor):
        f = np.asarray(factor, float)
        s = f[0, 0]
        if not np.allclose(f, s * np.eye(f.shape[0])):
            raise NotImplementedError("block-sum ball under a non-isotropic map")
        return BlockSumBall(self.start, self.stop, self.R / abs(s))


@dataclass(frozen=True)
class PairBall(ConvexBody):
    """``{y : |y_a - y_b| <= R}`` on path values; projection moves both points symmetrically."""

    a: int
    b: int
    R: float

    def contains(self, y, tol=0.0):
        y = _as_batch(y)
        return np.linalg.norm(y[:, self.a] - y[:, self.b], axis=1) <= self.R * (1 + tol)

    def project(self, y):
        y = _as_batch(y)
        diff = y[:, self.a] - y[:, self.b]
        nd = np.linalg.norm(diff, axis=1, keepdims=True)
        excess = np.where(nd > self.R, diff * (1 - self.R / np.maximum(nd, 1e-300)), 0.0)
        out = y.copy()
        out[:, self.a] -= excess / 2
        out[:, self.b] += excess / 2
        return out

    def dilate(self, c):
        return PairBall(self.a, self.b, self.R * c)


@dataclass(frozen=True)
class OscillationSet(ConvexBody):
    """Paths whose oscillation on unit interval ``i`` is at most ``R``.

    Membership and the default distance act on increment arrays of a lattice
    with ``per_unit`` steps per unit time (``B_0`` fixed).  ``path_distance``
    measures distance in path-value coordinates where every point is free.
    """

    interval: int
    R: float
    per_unit: int

    exact_projection = False

    def __post_init__(self):
        if not self.R > 0:
            raise ValueError("R must be positive")
        if self.per_unit < 1 or self.interval < 0:
            raise ValueError("invalid interval or mesh")

    @property
    def _span(self) -> tuple[int, int]:
        m = self.per_unit
        return self.interval * m, (self.interval + 1) * m

    def oscillation(self, x: np.ndarray) -> np.ndarray:
        """``sup_{s,t in [i, i+1]} |B_t - B_s|`` per sample."""
        x = _as_batch(x)
        lo, hi = self._span
        seg = np.concatenate([np.zeros((x.shape[0], 1, x.shape[2])),
                              np.cumsum(x[:, lo:hi, :], axis=1)], axis=1)
        if seg.shape[2] == 1:
            return seg[:, :, 0].max(axis=1) - seg[:, :, 0].min(axis=1)
        best = np.zeros(x.shape[0])
        for k in range(seg.shape[1]):
            dk = np.linalg.norm(seg[:, k + 1:, :] - seg[:, k:k + 1, :], axis=2)
            if dk.size:
                best = np.maximum(best, dk.max(axis=1))
        return best

    def contains(self, x, tol=0.0):
        return self.oscillation(x) <= self.R * (1 + tol)

    def pieces(self):
        lo, hi = self._span
        return [BlockSumBall(a, b, self.R) for a in range(lo, hi) for b in range(a + 1, hi + 1)]

    def project(self, x):
        return dykstra(self.pieces(), _as_batch(x))

    def dilate(self, c):
        return OscillationSet(self.interval, self.R * c, self.per_unit)

    def transformed(self, factor):
        f = np.asarray(factor, float)
        s = f[0, 0]
        if not np.allclose(f, s * np.eye(f.shape[0])):
            raise NotImplementedError("oscillation set under a non-isotropic map")
        return OscillationSet(self.interval, self.R / abs(s), self.per_unit)

    def path_distance(self, y: np.ndarray, tol: float = 1e-9, max_iter: int = 10_000) -> np.ndarray:
        """Distance of path values ``y`` (points of the interval, all free) to the set."""
        y = _as_batch(y)
        k = y.shape[1]
        pieces = [PairBall(a, b, self.R) for a in range(k) for b in range(a + 1, k)]
        p = dykstra(pieces, y, tol, max_iter)
        return np.linalg.norm(_flat(y - p), axis=1)


def dykstra(pieces: Sequence[ConvexBody], x: np.ndarray, tol: float = 1e-9,
            max_iter: int = 10_000) -> np.ndarray:
    """Project ``x`` onto the intersection of ``pieces`` by Dykstra's algorithm.

    Stops when a full sweep moves both the iterate and every correction
    term by less than ``tol``; the iterate alone can stall for a sweep
    before it has converged.
    """
    x = _as_batch(x)
    if len(pieces) == 1:
        return pieces[0].project(x)
    y = x.copy()
    incr = [np.zeros_like(x) for _ in pieces]
    for _ in range(max_iter):
        prev = y
        moved = 0.0
        for j, body in enumerate(pieces):
            z = body.project(y + incr[j])
            new = y + incr[j] - z
            moved = max(moved, float(np.abs(new - incr[j]).max()))
            incr[j] = new
            y = z
        moved = max(moved, float(np.abs(_flat(y - prev)).max()))
        if moved < tol:
            return y
    raise DykstraDidNotConverge(f"Dykstra did not converge in {max_iter} sweeps (last move {moved:.3e})")


def distance_to_body(x: np.ndarray, body: ConvexBody, tol: float = 1e-9, max_iter: int = 10_000) -> np.ndarray:
    return body.distance(x, tol, max_iter)
