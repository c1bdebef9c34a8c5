"""The confinement recursion between fluctuation radius R and coupling beta.

Starting from ``R_1 = C_dec^2 sqrt(log alpha)`` the recursion alternates

    beta_k  = alpha / (C_p R_k^(2+p))
    R_{k+1} = C_dec C_unif (log beta_k)^(1/2) beta_k^(-1/4)              (p = 1)
    R_{k+1} = C_dec C_unif (log alpha)^(1/2) alpha^(-1/4) R_k^((2+p)/4)  (other p)

and stops at the first ``k`` whose next step fails to halve ``R``.  The final
``beta_L`` is the effective-mass lower-bound scale, up to an absolute constant.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict

import numpy as np

DEFAULT_C_P = 16.0 * math.e**2
MAX_STEPS = 10_000


class RecursionError(ValueError):
    """The recursion left the range where its logarithms are defined."""


@dataclass(frozen=True)
class RecursionConstants:
    c_decomp: float = 100.0
    c_unif: float = 10.0
    c_p: float = DEFAULT_C_P
    c_stop: float = 4.0

    def __post_init__(self):
        if self.c_decomp < 100:
            raise ValueError("c_decomp must be >= 100")
        if self.c_unif <= 0 or self.c_p <= 0 or self.c_stop <= 0:
            raise ValueError("constants must be positive")


@dataclass
class RecursionTrace:
    alpha: float
    p: float
    constants: RecursionConstants
    steps: list = field(default_factory=list)  # (k, R_k, beta_k)
    L: int = 0
    next_ratio: float = float("nan")  # R_{L+1} / R_L, the ratio that stopped the run

    @property
    def R(self) -> np.ndarray:
        return np.array([s[1] for s in self.steps])

    @property
    def beta(self) -> np.ndarray:
        return np.array([s[2] for s in self.steps])

    @property
    def R_L(self) -> float:
        return self.steps[self.L - 1][1]

    @property
    def beta_L(self) -> float:
        return self.steps[self.L - 1][2]

    @property
    def mass_lower_bound(self) -> float:
        return self.beta_L

    def as_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "p": self.p,
            "constants": asdict(self.constants),
            "L": self.L,
            "R_L": self.R_L,
            "beta_L": self.beta_L,
            "next_ratio": self.next_ratio,
            "steps": [list(s) for s in self.steps],
        }


def _beta(alpha, R, p, c):
    return alpha / (c.c_p * R ** (2.0 + p))


def _next_R(alpha, R, beta, p, c):
    if p == 1:
        if beta <= 1.0:
            raise RecursionError(
                f"log(beta_k) <= 0 (beta_k = {beta:.3e}); alpha = {alpha:g} is too small "
                f"for constants {c}"
            )
        return c.c_decomp * c.c_unif * math.sqrt(math.log(beta)) * beta ** -0.25
    return c.c_decomp * c.c_unif * math.sqrt(math.log(alpha)) * alpha ** -0.25 * R ** ((2.0 + p) / 4.0)


def desk_constants(p: float = 1.0) -> RecursionConstants:
    """Constants that keep the recursion well defined for ``alpha`` in ``[10, 1e6]``.

    ``c_decomp`` sits at its minimum of 100, ``c_unif = 1 / c_decomp`` makes the
    radius prefactor 1, and ``c_p = c_decomp^(-2(2+p))`` makes
    ``beta_1 = alpha / (log alpha)^((2+p)/2)`` free of constants.  The
    defaults need ``alpha`` near ``1e20`` before ``log beta_1 > 0`` at ``p = 1``.
    """
    c = 100.0
    return RecursionConstants(c, 1.0 / c, c ** (-2.0 * (2.0 + p)))


def recursion_run(alpha: float, p: float = 1.0, constants: RecursionConstants | None = None) -> RecursionTrace:
    if alpha < 2:
        raise ValueError("alpha must be >= 2")
    if not 0 < p < 2:
        raise ValueError("p must lie in (0, 2)")
    c = constants or RecursionConstants()
    trace = RecursionTrace(alpha, p, c)
    R = c.c_decomp**2 * math.sqrt(math.log(alpha))
    for k in range(1, MAX_STEPS + 1):
        beta = _beta(alpha, R, p, c)
        trace.steps.append((k, R, beta))
        R_next = _next_R(alpha, R, beta, p, c)
        ratio = R_next / R
        if ratio > 0.5:
            trace.L = k
            trace.next_ratio = ratio
            return trace
        R = R_next
    raise RecursionError("recursion did not stop within MAX_STEPS")


def first_radius(alpha: float, constants: RecursionConstants | None = None) -> float:
    c = constants or RecursionConstants()
    return c.c_decomp**2 * math.sqrt(math.log(alpha))


def fixed_point_ratios(trace: RecursionTrace) -> tuple[float, float]:
    """``beta_L`` and ``R_L`` divided by their predicted power-log scales."""
    if trace.L < 1:
        raise ValueError("incomplete trace")
    a, p = trace.alpha, trace.p
    la = math.log(a)
    beta_ratio = trace.beta_L * la ** ((4 + 2 * p) / (2 - p)) / a ** (4 / (2 - p))
    R_ratio = trace.R_L * a ** (1 / (2 - p)) / la ** (2 / (2 - p))
    return beta_ratio, R_ratio


def predicted_mass_scale(alpha: float, p: float = 1.0) -> float:
    """``alpha^(4/(2-p)) / (log alpha)^((4+2p)/(2-p))``; ``alpha^4 / (log alpha)^6`` at ``p = 1``."""
    return alpha ** (4 / (2 - p)) / math.log(alpha) ** ((4 + 2 * p) / (2 - p))


def displacement_bound(alpha: float, T: float, p: float = 1.0) -> float:
    """``T / m + 1 / sqrt(m)`` with ``m`` the predicted mass scale.

    At ``p = 1`` this is ``T (log a)^6 / a^4 + (log a)^3 / a^2``.
    """
    m = predicted_mass_scale(alpha, p)
    return T / m + 1.0 / math.sqrt(m)


@dataclass
class FixedPointReport:
    p: float
    alphas: list
    beta_ratios: list
    R_ratios: list
    slope: float
    slope_stderr: float
    expected_slope: float
    band: float
    max_L_over_log_alpha: float
    band_limit: float | None = None

    @property
    def within_band(self) -> bool | None:
        return None if self.band_limit is None else bool(self.band <= self.band_limit)

    def as_dict(self) -> dict:
        return asdict(self)


def fixed_point_check(traces: list[RecursionTrace], band_limit: float | None = None) -> FixedPointReport:
    """Fit ``log beta_L + (4+2p)/(2-p) log log alpha`` against ``log alpha``.

    The traces must share ``p``.  ``band`` is the max/min spread of the
    normalized ``beta_L`` ratio across the grid.
    """
    from .fitting import fit_loglog

    if not traces or any(t.L < 1 for t in traces):
        raise ValueError("incomplete trace")
    p = traces[0].p
    if any(t.p != p for t in traces):
        raise ValueError("traces must share p")
    alphas = [t.alpha for t in traces]
    ratios = [fixed_point_ratios(t) for t in traces]
    corr = (4 + 2 * p) / (2 - p)
    ys = [t.beta_L * math.log(t.alpha) ** corr for t in traces]
    slope, _, err = fit_loglog(alphas, ys)
    br = [r[0] for r in ratios]
    return FixedPointReport(
        p=p,
        alphas=alphas,
        beta_ratios=br,
        R_ratios=[r[1] for r in ratios],
        slope=slope,
        slope_stderr=err,
        expected_slope=4 / (2 - p),
        band=float(max(br) / min(br)),
        max_L_over_log_alpha=max(t.L / math.log(t.alpha) for t in traces),
        band_limit=band_limit,
    )


def check_trace(trace: RecursionTrace) -> list[str]:
    """Invariant violations of a completed trace (empty when sound)."""
    problems = []
    R, beta = trace.R, trace.beta
    if np.any(np.diff(R) >= 0):
        problems.append("R_k not strictly decreasing")
    if np.any(np.diff(beta) <= 0):
        problems.append("beta_k not strictly increasing")
    if trace.L > 1 and R[-1] / R[-2] > 0.5:
        problems.append("R_L / R_(L-1) > 1/2")
    if not trace.next_ratio > 0.5:
        problems.append("stop ratio <= 1/2")
    if trace.L > math.ceil(trace.constants.c_stop * math.log(trace.alpha)):
        problems.append("L > ceil(c_stop log alpha)")
    return problems


def mass_bound(trace: RecursionTrace, T: float = 1.0) -> dict:
    """Effective-mass lower-bound report (absolute constant left symbolic)."""
    p = trace.p
    return {
        "alpha": trace.alpha,
        "p": p,
        "beta_L": trace.beta_L,
        "mass_lower_bound": f"c * {trace.beta_L:.17g}",
        "predicted_scale": predicted_mass_scale(trace.alpha, p),
        "predicted_scale_formula": "alpha^4/(log alpha)^6" if p == 1
        else f"alpha^{4 / (2 - p):g}/(log alpha)^{(4 + 2 * p) / (2 - p):g}",
        "displacement_bound": displacement_bound(trace.alpha, T, p),
        "displacement_formula": "O(T(log a)^6/a^4 + (log a)^3/a^2)" if p == 1
        else "O(T/m_p + m_p^(-1/2))",
        "T": T,
        "delta_budget": trace.L * trace.alpha ** -10.0,
    }
