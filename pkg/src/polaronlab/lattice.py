"""Discretized path space on [0, T] with mesh eta.

Paths are stored as increments ``Delta_j = B_{(j+1)eta} - B_{j eta}`` with
``B_0 = 0``.  Double integrals over unit intervals use left-endpoint Riemann
sums on the half-open grid ``{i, i+eta, ..., i+1-eta}``; interval averages use
the trapezoid rule on the closed grid.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Optional

import numpy as np
from scipy import linalg

from .gaussian import GaussianPathMeasure, QuadraticForm, reweight_quadratic


@dataclass(frozen=True)
class Lattice:
    T: int
    eta: float
    d: int = 3

    def __post_init__(self):
        if int(self.T) != self.T or self.T < 1:
            raise ValueError(f"T must be a positive integer, got {self.T}")
        m = 1.0 / self.eta
        if self.eta <= 0 or abs(m - round(m)) > 1e-9 * m:
            raise ValueError(f"1/eta must be a positive integer, got eta={self.eta}")
        if self.d < 1:
            raise ValueError("d must be >= 1")
        object.__setattr__(self, "T", int(self.T))
        object.__setattr__(self, "eta", 1.0 / round(m))

    @property
    def per_unit(self) -> int:
        """Steps per unit interval, ``1/eta``."""
        return int(round(1.0 / self.eta))

    @property
    def n(self) -> int:
        return self.T * self.per_unit

    @property
    def times(self) -> np.ndarray:
        """The ``n + 1`` grid times ``0, eta, ..., T``."""
        return np.arange(self.n + 1) * self.eta

    @cached_property
    def path_matrix(self) -> np.ndarray:
        """``(n+1) x n`` map from increments to path values."""
        return np.tril(np.ones((self.n + 1, self.n)), k=-1)

    def grid(self, i: int) -> np.ndarray:
        """Half-open grid indices of unit interval ``i``."""
        self._check_interval(i)
        m = self.per_unit
        return np.arange(i * m, (i + 1) * m)

    def closed_grid(self, i: int) -> np.ndarray:
        self._check_interval(i)
        m = self.per_unit
        return np.arange(i * m, (i + 1) * m + 1)

    def _check_interval(self, i: int):
        if not 0 <= i < self.T:
            raise IndexError(f"interval index {i} outside [0, {self.T - 1}]")

    def index(self, t: float) -> int:
        k = t / self.eta
        if abs(k - round(k)) > 1e-9 or not 0 <= round(k) <= self.n:
            raise ValueError(f"time {t} is not a grid point")
        return int(round(k))


def path_values(increments: np.ndarray) -> np.ndarray:
    """Cumulative path values ``(..., n+1, d)`` with ``B_0 = 0``."""
    x = np.asarray(increments, dtype=float)
    zeros = np.zeros(x.shape[:-2] + (1,) + x.shape[-1:])
    return np.concatenate([zeros, np.cumsum(x, axis=-2)], axis=-2)


@dataclass(frozen=True, eq=False)
class LinearFunctional:
    """``a(B) = sum_j c_j Delta_j`` applied to each spatial coordinate."""

    coefficients: np.ndarray
    name: str = "a"

    def __post_init__(self):
        c = np.asarray(self.coefficients, dtype=float)
        if c.ndim != 1 or not np.all(np.isfinite(c)):
            raise ValueError("coefficients must be a finite 1-D vector")
        object.__setattr__(self, "coefficients", c)

    def __call__(self, increments: np.ndarray) -> np.ndarray:
        """Values of shape ``(..., d)``."""
        return np.einsum("j,...jk->...k", self.coefficients, increments)

    def __sub__(self, other: "LinearFunctional") -> "LinearFunctional":
        return LinearFunctional(self.coefficients - other.coefficients, f"{self.name}-{other.name}")

    def __add__(self, other: "LinearFunctional") -> "LinearFunctional":
        return LinearFunctional(self.coefficients + other.coefficients, f"{self.name}+{other.name}")


def _from_path_weights(lat: Lattice, w: np.ndarray) -> np.ndarray:
    # path functional sum_k w_k B_k  ->  increment coefficients
    return lat.path_matrix.T @ w


def endpoint(lat: Lattice, t: float) -> LinearFunctional:
    """Evaluation ``B_t`` at a grid time."""
    w = np.zeros(lat.n + 1)
    w[lat.index(t)] = 1.0
    return LinearFunctional(_from_path_weights(lat, w), f"B_{t:g}")


def interval_average(lat: Lattice, i: int) -> LinearFunctional:
    """Trapezoid approximation of the average of ``B`` over ``[i, i+1]``."""
    idx = lat.closed_grid(i)
    w = np.zeros(lat.n + 1)
    w[idx] = lat.eta
    w[idx[0]] *= 0.5
    w[idx[-1]] *= 0.5
    return LinearFunctional(_from_path_weights(lat, w), f"avg[{i},{i + 1}]")


def riemann_average(lat: Lattice, i: int) -> LinearFunctional:
    """Left-endpoint Riemann average over ``[i, i+1]``, matched to the double-integral forms."""
    w = np.zeros(lat.n + 1)
    w[lat.grid(i)] = lat.eta
    return LinearFunctional(_from_path_weights(lat, w), f"ravg[{i},{i + 1}]")


def _path_form(lat: Lattice, g: np.ndarray, idx: np.ndarray) -> np.ndarray:
    s = lat.path_matrix[idx]
    return s.T @ g @ s


def intra_interval_form(lat: Lattice, i: int) -> QuadraticForm:
    """Riemann sum of the double integral of ``|B_t - B_s|^2`` over ``[i, i+1]^2``."""
    idx = lat.grid(i)
    m, eta = idx.size, lat.eta
    # sum_{j,l} (b_j - b_l)^2 = 2 m sum b^2 - 2 (sum b)^2
    g = eta**2 * (2.0 * m * np.eye(m) - 2.0 * np.ones((m, m)))
    return QuadraticForm(_path_form(lat, g, idx), True, f"Q{i}")


def adjacent_coupling_form(lat: Lattice, i: int) -> QuadraticForm:
    """Riemann sum of the cross double integral over ``[i, i+1] x [i+1, i+2]``."""
    if not 0 <= i <= lat.T - 2:
        raise IndexError(f"coupling index {i} outside [0, {lat.T - 2}]")
    a, b = lat.grid(i), lat.grid(i + 1)
    m, eta = a.size, lat.eta
    idx = np.concatenate([a, b])
    g = np.zeros((2 * m, 2 * m))
    g[:m, :m] = m * np.eye(m)
    g[m:, m:] = m * np.eye(m)
    g[:m, m:] = -1.0
    g[m:, :m] = -1.0
    return QuadraticForm(_path_form(lat, eta**2 * g, idx), True, f"Q{i},{i + 1}")


def brownian(lat: Lattice) -> GaussianPathMeasure:
    return GaussianPathMeasure(np.eye(lat.n) / lat.eta, lattice=lat, label="BM")


def confined_measure(lat: Lattice, beta: float, intervals: Optional[Iterable[int]] = None,
                     couplings: Iterable[int] = ()) -> GaussianPathMeasure:
    """Brownian measure reweighted by ``exp(-beta * (sum Q_i + sum Q_{i,i+1}))``.

    ``intervals`` defaults to every unit interval.  A coupling ``i`` requires
    both ``i`` and ``i + 1`` to be confined intervals.
    """
    if beta < 0:
        raise ValueError("beta must be non-negative")
    intervals = sorted(set(range(lat.T) if intervals is None else intervals))
    couplings = sorted(set(couplings))
    for i in intervals:
        lat._check_interval(i)
    for i in couplings:
        if i not in intervals or i + 1 not in intervals:
            raise ValueError(f"coupling {i} needs intervals {i} and {i + 1} to be confined")
    mu = brownian(lat)
    if beta == 0 or (not intervals and not couplings):
        return mu
    total = np.zeros((lat.n, lat.n))
    for i in intervals:
        total += intra_interval_form(lat, i).matrix
    for i in couplings:
        total += adjacent_coupling_form(lat, i).matrix
    q = QuadraticForm(beta * total, True, f"beta={beta:g}")
    return reweight_quadratic(mu, q)


def block_measure(lat: Lattice, beta: float, a: int = 0, b: Optional[int] = None) -> GaussianPathMeasure:
    """Confinement of every interval in ``[a, b)`` plus every adjacent coupling inside the block."""
    b = lat.T if b is None else b
    return confined_measure(lat, beta, range(a, b), range(a, b - 1))


def second_moment(mu: GaussianPathMeasure, a: LinearFunctional) -> float:
    """Exact ``E|a(B)|^2`` summed over the ``d`` coordinates."""
    if a.coefficients.size != mu.n:
        raise ValueError("functional dimension does not match measure")
    y = linalg.solve_triangular(mu.cholesky, a.coefficients, lower=True)
    return float(mu.d * (y @ y))


def path_variances(mu: GaussianPathMeasure) -> np.ndarray:
    """Per-coordinate ``Var(B_{t_k})`` for every grid time ``k = 0..n``."""
    c = np.cumsum(np.cumsum(mu.covariance, axis=0), axis=1)
    return np.concatenate([[0.0], np.diag(c)])


def path_covariance(mu: GaussianPathMeasure) -> np.ndarray:
    """Per-coordinate covariance of path values ``(n+1) x (n+1)``."""
    c = np.cumsum(np.cumsum(mu.covariance, axis=0), axis=1)
    out = np.zeros((mu.n + 1, mu.n + 1))
    out[1:, 1:] = c
    return out
