"""Series formulas for Brownian motion on [0, 1] confined by ``beta * Q_0``.

The confining form has the Dirichlet Green's function
``theta(t, s) = 2 min(t, s) (1 - max(t, s))`` as kernel, with eigenfunctions
``sqrt(2) sin(pi k t)``.  These routines evaluate the resulting covariance
and variance series independently of any discretization, so they serve as an
oracle for the matrix engine in :mod:`polaronlab.lattice`.

Reweighting by ``exp(-<xi, K xi>)`` turns the covariance into ``(I + 2K)^-1``,
so each mode is damped by ``2 lambda / (1 + 2 lambda)`` with ``lambda`` an
eigenvalue of ``beta * theta``.  Equivalently the textbook ``lambda / (1 + lambda)``
series evaluated at ``2 beta``; every formula below uses ``b2 = 2 beta``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

MAX_TERMS = 50_000_000
_CHUNK = 1 << 20


@dataclass(frozen=True)
class KernelSpec:
    beta: float
    tol: float = 1e-12

    def __post_init__(self):
        if self.beta < 0:
            raise ValueError("beta must be non-negative")
        if self.tol <= 0:
            raise ValueError("tol must be positive")


def green_kernel(t, s):
    """``theta(t, s) = 2 min(t, s) (1 - max(t, s))``."""
    t, s = np.asarray(t, float), np.asarray(s, float)
    return 2.0 * np.minimum(t, s) * (1.0 - np.maximum(t, s))


def eigenpair(k: int, beta: float) -> tuple[float, Callable]:
    """Eigenvalue of ``beta * theta`` and its normalized eigenfunction."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if beta < 0:
        raise ValueError("beta must be non-negative")
    lam = 2.0 * beta / (math.pi**2 * k**2)
    return lam, (lambda t: math.sqrt(2.0) * np.sin(math.pi * k * np.asarray(t, float)))


def tail_bound(beta: float, K: int) -> float:
    """Upper bound on the summed terms ``k > K`` of the correction series.

    Each term is at most ``32 beta / (pi^2 k^2 (4 beta + pi^2 k^2))``; the
    bound is the integral of that envelope from ``K`` to infinity.
    """
    if beta == 0:
        return 0.0
    # closed form of int_K^inf 32 beta / (pi^2 k^2 (4 beta + pi^2 k^2)) dk
    # = 8 / (pi^2 K) * (1 - atan(y) / y) with y = 2 sqrt(beta) / (pi K)
    y = 2.0 * math.sqrt(beta) / (math.pi * K)
    if y < 1e-3:
        gap = y * y / 3.0 - y**4 / 5.0 + y**6 / 7.0
    else:
        gap = 1.0 - math.atan(y) / y
    return 8.0 / (math.pi**2 * K) * gap


def truncation(beta: float, tol: float) -> int:
    """Smallest power-of-two-bracketed ``K`` whose tail bound is below ``tol``."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    if beta == 0:
        return 1
    hi = 1
    while tail_bound(beta, hi) >= tol:
        hi *= 2
        if hi > MAX_TERMS:
            raise ValueError(f"tolerance {tol} needs more than {MAX_TERMS} terms at beta={beta}")
    lo = max(hi // 2, 1)
    while lo < hi:
        mid = (lo + hi) // 2
        if tail_bound(beta, mid) < tol:
            hi = mid
        else:
            lo = mid + 1
    return hi


def _fsum_terms(term, K: int) -> float:
    # chunked so that 1e6+ terms stay within memory; fsum is exactly rounded
    parts = []
    for start in range(1, K + 1, _CHUNK):
        k = np.arange(start, min(start + _CHUNK, K + 1), dtype=float)
        parts.append(math.fsum(term(k)[::-1]))
    return math.fsum(parts)


def _check_t(t: float):
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"t must lie in [0, 1], got {t}")


def covariance_shepp(beta: float, t: float, s: float, tol: float = 1e-12) -> float:
    """Per-coordinate ``Cov(B_t, B_s)`` under the confined measure.

    ``min(t, s)`` minus the double integral of the resolvent kernel, with
    each eigenfunction integrated in closed form.
    """
    kspec = KernelSpec(beta, tol)
    _check_t(t)
    _check_t(s)
    if beta == 0:
        return float(min(t, s))
    K = truncation(beta, kspec.tol)
    pi = math.pi

    def term(k):
        ratio = 4.0 * beta / (4.0 * beta + pi**2 * k**2)  # 2 lambda_k / (1 + 2 lambda_k)
        return ratio * 2.0 * (1 - np.cos(pi * k * t)) * (1 - np.cos(pi * k * s)) / (pi**2 * k**2)

    return float(min(t, s) - _fsum_terms(term, K))


def variance_series(beta: float, t: float, tol: float = 1e-12) -> float:
    """Per-coordinate ``Var(B_t)``; equals ``t`` at ``beta = 0``."""
    kspec = KernelSpec(beta, tol)
    _check_t(t)
    if beta == 0:
        return float(t)
    K = truncation(beta, kspec.tol)
    pi = math.pi

    def term(k):
        return 2.0 * (1 - np.cos(pi * k * t)) ** 2 / (pi**2 * k**2 * (1.0 + pi**2 * k**2 / (4.0 * beta)))

    return float(t - _fsum_terms(term, K))


def variance_profile(beta: float, ts, tol: float = 1e-10) -> np.ndarray:
    """Vectorized :func:`variance_series` over many times (plain summation)."""
    ts = np.asarray(ts, dtype=float)
    for t in ts.ravel():
        _check_t(t)
    if beta == 0:
        return ts.copy()
    K = truncation(beta, tol)
    pi = math.pi
    flat = ts.ravel()
    acc = np.zeros(flat.size)
    for start in range(K, 0, -4096):
        k = np.arange(max(start - 4095, 1), start + 1, dtype=float)[::-1]
        c = 8.0 * beta / (pi**2 * k**2 * (4.0 * beta + pi**2 * k**2))  # no overflow for tiny beta
        acc += ((1 - np.cos(pi * np.outer(flat, k))) ** 2) @ c
    return (flat - acc).reshape(ts.shape)


def confinement_bound(beta: float, tol: float = 1e-12) -> float:
    """``sum_k 1 / (beta + pi^2 k^2 / 2)`` in closed form.

    Uses ``sum_{k>=1} 1/(k^2 + a^2) = (pi a coth(pi a) - 1) / (2 a^2)``.
    """
    if beta < 0:
        raise ValueError("beta must be non-negative")
    if beta == 0:
        return 2.0 / math.pi**2 * math.pi**2 / 6.0
    a = math.sqrt(2.0 * beta) / math.pi
    x = math.pi * a
    coth = 1.0 / math.tanh(x) if x < 350 else 1.0
    return (2.0 / math.pi**2) * (x * coth - 1.0) / (2.0 * a * a)


def fourier_identity_check(t: float, K: int) -> float:
    """Partial sum ``sum_{k<=K} (1 - cos(pi k t))^2 / (pi^2 k^2)``; tends to ``t/2``."""
    _check_t(t)
    if K < 1:
        return 0.0
    pi = math.pi
    return _fsum_terms(lambda k: (1 - np.cos(pi * k * t)) ** 2 / (pi**2 * k**2), int(K))
