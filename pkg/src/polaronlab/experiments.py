"""Experiment runners behind the command-line subcommands.

Each runner takes a resolved configuration and a seed and returns an
:class:`Outcome`: named tables for CSV, named JSON payloads, and whether
every assertion held.  Runners never touch the filesystem.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import bodies, decomposition, gci, polaron, recursion, spectral
from .gaussian import standard_gaussian
from .lattice import Lattice, confined_measure, path_variances


@dataclass
class Outcome:
    tables: dict = field(default_factory=dict)  # name -> (header, rows)
    payloads: dict = field(default_factory=dict)  # name -> JSON-able object
    ok: bool = True
    messages: list = field(default_factory=list)
    jsonl: dict = field(default_factory=dict)  # name -> list of dicts

    def fail(self, msg: str):
        self.ok = False
        self.messages.append("FAIL " + msg)

    def warn(self, msg: str):
        self.messages.append("WARN " + msg)


def derived_seed(seed: int, *keys: int) -> int:
    return int(np.random.SeedSequence([seed, *keys]).generate_state(1, dtype=np.uint64)[0] >> 1)


# --- spectral -------------------------------------------------------------------


def spectral_comparison(beta: float, eta: float, series_tol: float = 1e-10):
    lat = Lattice(1, eta, 1)
    matrix = path_variances(confined_measure(lat, beta, [0]))
    series = spectral.variance_profile(beta, lat.times, series_tol)
    return lat.times, series, matrix


def run_spectral(cfg: dict, seed: int) -> Outcome:
    out = Outcome()
    rows, summary = [], []
    for beta in cfg["betas"]:
        t, s, m = spectral_comparison(beta, cfg["eta"], cfg["series_tol"])
        diff = np.abs(s - m)
        rows += [[beta, ti, si, mi, di] for ti, si, mi, di in zip(t, s, m, diff)]
        limit = cfg["zero_tol"] if beta == 0 else cfg["tol"]
        summary.append({"beta": beta, "max_absdiff": float(diff.max()), "limit": limit,
                        "pass": bool(diff.max() <= limit)})
        if diff.max() > limit:
            out.fail(f"beta={beta:g}: max |series - matrix| = {diff.max():.3e} > {limit:g}")
    out.tables["spectral"] = (["beta", "t", "series", "matrix", "absdiff"], rows)
    out.payloads["spectral_summary"] = summary
    return out


# --- recursion ------------------------------------------------------------------


def recursion_constants(cfg: dict, p: float) -> recursion.RecursionConstants:
    if cfg["preset"] == "desk":
        c = recursion.desk_constants(p)
        return recursion.RecursionConstants(c.c_decomp, c.c_unif, c.c_p, cfg["c_stop"])
    if cfg["preset"] == "default":
        return recursion.RecursionConstants(c_stop=cfg["c_stop"])
    return recursion.RecursionConstants(cfg["c_decomp"], cfg["c_unif"], cfg["c_p"], cfg["c_stop"])


def slope_report(traces, lo: float, hi: float, tol: float) -> dict:
    sel = [t for t in traces if lo <= t.alpha * (1 + 1e-12) and t.alpha <= hi * (1 + 1e-12)]
    if len(sel) < 2:
        raise ValueError(f"fewer than two alphas in the fit window [{lo:g}, {hi:g}]")
    rep = recursion.fixed_point_check(sel)
    return {"slope": rep.slope, "slope_stderr": rep.slope_stderr, "expected": rep.expected_slope,
            "tolerance": tol, "pass": abs(rep.slope - rep.expected_slope) <= tol,
            "points": len(sel), "window": [lo, hi]}


def run_recursion(cfg: dict, seed: int) -> Outcome:
    out = Outcome()
    trace_rows, summary_rows, reports = [], [], []
    for p in cfg["ps"]:
        consts = recursion_constants(cfg, p)
        traces = []
        for a in cfg["alphas"]:
            try:
                tr = recursion.recursion_run(a, p, consts)
            except recursion.RecursionError as exc:
                out.fail(f"p={p:g} alpha={a:g}: {exc}")
                continue
            traces.append(tr)
            for k, R, b in tr.steps:
                trace_rows.append([p, a, k, R, b])
            br, rr = recursion.fixed_point_ratios(tr)
            summary_rows.append([p, a, tr.L, tr.R_L, tr.beta_L, br, rr, tr.L / math.log(a), tr.next_ratio])
            for problem in recursion.check_trace(tr):
                out.fail(f"p={p:g} alpha={a:g}: {problem}")
        if not traces:
            continue
        full = recursion.fixed_point_check(traces)
        rep = {"p": p, "constants": consts.__dict__, "band": full.band,
               "max_L_over_log_alpha": full.max_L_over_log_alpha,
               "L_bound_pass": all(t.L <= consts.c_stop * math.log(t.alpha) for t in traces)}
        try:
            rep.update(slope_report(traces, cfg["fit_lo"], cfg["fit_hi"], cfg["slope_tol"]))
            if not rep["pass"]:
                out.fail(f"p={p:g}: slope {rep['slope']:.4f} vs {rep['expected']:.4f} +- {cfg['slope_tol']}")
        except ValueError as exc:
            rep["slope_error"] = str(exc)
            out.fail(f"p={p:g}: {exc}")
        if not rep["L_bound_pass"]:
            out.fail(f"p={p:g}: L exceeds c_stop log alpha")
        reports.append(rep)
    out.tables["recursion_trace"] = (["p", "alpha", "k", "R_k", "beta_k"], trace_rows)
    out.tables["recursion_summary"] = (
        ["p", "alpha", "L", "R_L", "beta_L", "beta_ratio", "R_ratio", "L_over_log_alpha", "stop_ratio"],
        summary_rows)
    out.payloads["recursion_report"] = reports
    return out


# --- mcmc -----------------------------------------------------------------------


def brownian_oscillation_baseline(lat: Lattice, R_grid, count: int, seed: int):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((count, lat.n, lat.d)) * math.sqrt(lat.eta)
    return polaron.oscillation_stats(x, lat, R_grid)


def run_mcmc(cfg: dict, seed: int) -> Outcome:
    out = Outcome()
    summary, osc_rows = [], []
    d, T = cfg["d"], cfg["T"]
    prior = d * T
    estimates = {}
    for idx, a in enumerate(cfg["alphas"]):
        pc = polaron.PolaronConfig(a, T, cfg["eta"], cfg["A"], cfg["p"], d=d)
        s = derived_seed(seed, idx)
        est, chains = polaron.mcmc_run(pc, cfg["steps"], s,
                                       {"rho": cfg["rho"], "bridgeFraction": cfg["bridge_fraction"]},
                                       chains=cfg["chains"])
        estimates[a] = est
        summary.append([a, est.mean if est.reportable else "", est.stderr, est.ess, est.acceptRate,
                        est.sigma2 if est.reportable else "", est.sigma2_stderr, est.rho, int(est.reportable)])
        if not est.reportable:
            out.warn(f"alpha={a:g}: ESS {est.ess:.1f} < 100, estimate withheld")
        if cfg["dump_chains"]:
            for ch in chains:
                out.tables[f"chain_alpha{a:g}_c{ch.chain}"] = (
                    ["step", "E", "BT2"],
                    [[k, e, b] for k, (e, b) in enumerate(zip(ch.energy, ch.endpoint_sq))])
        out.payloads[f"mcmc_alpha{a:g}"] = {"config": pc.describe(), "estimate": est.as_dict()}
        if a == 0:
            if abs(est.sigma2 - 1.0) > 3 * est.sigma2_stderr:
                out.fail(f"alpha=0: sigma^2 = {est.sigma2:.4f} +- {est.sigma2_stderr:.4f}, expected 1")
        elif est.mean > prior + 3 * est.stderr:
            out.fail(f"alpha={a:g}: E|B_T|^2 = {est.mean:.4f} exceeds Brownian {prior} + 3 stderr")
        samples = np.concatenate([c.samples for c in chains])
        lat = pc.lattice
        stats = polaron.oscillation_stats(samples, lat, cfg["R_grid"])
        base = brownian_oscillation_baseline(lat, cfg["R_grid"], 20_000, derived_seed(seed, idx, 7))
        for r, b in zip(stats, base):
            s_comb = math.hypot(r.stderr, b.stderr)
            ok = r.frequency >= b.frequency - 3 * s_comb
            osc_rows.append([a, r.interval, r.R, r.frequency, r.stderr, b.frequency, b.stderr, int(ok)])
            if a > 0 and not ok:
                out.fail(f"alpha={a:g} interval {r.interval} R={r.R:g}: frequency {r.frequency:.4f} "
                         f"below Brownian {b.frequency:.4f} - 3 stderr")
    alphas = sorted(estimates)
    for lo, hi in zip(alphas[:-1], alphas[1:]):
        if estimates[hi].mean > estimates[lo].mean:
            out.warn(f"estimate at alpha={hi:g} exceeds alpha={lo:g} "
                     f"({estimates[hi].mean:.4f} > {estimates[lo].mean:.4f})")
    out.tables["mcmc_summary"] = (["alpha", "mean", "stderr", "ess", "acceptRate", "sigma2",
                                   "sigma2_stderr", "rho", "reportable"], summary)
    out.tables["oscillation"] = (["alpha", "interval", "R", "frequency", "stderr", "brownian",
                                  "brownian_stderr", "dominates"], osc_rows)
    return out


# --- gci ------------------------------------------------------------------------


def run_gci(cfg: dict, seed: int) -> Outcome:
    out = Outcome()
    reps = gci.random_suite(cfg["cases"], seed, cfg["max_dim"], cfg["points"])
    indep = gci.independent_slab_suite(cfg["independent_cases"], seed, cfg["points"])
    for r in reps:
        if r.verdict == "fail":
            out.fail(f"{r.label}: margin {r.margin:.3e} < -3 x {r.stderr:.3e}")
    for r in indep:
        if abs(r.margin) > 3 * r.stderr:
            out.fail(f"{r.label}: independent slabs with |margin| {abs(r.margin):.3e} > 3 x {r.stderr:.3e}")
    out.jsonl["gci"] = [r.as_dict() for r in reps + indep]
    verdicts = [r.verdict for r in reps]
    out.payloads["gci_summary"] = {v: verdicts.count(v) for v in ("pass", "statistical-tie", "fail")}
    return out


# --- decomposition ----------------------------------------------------------------


def decomposition_instance(dim: int, body: str, size: float):
    mu = standard_gaussian(dim)
    k = bodies.Ball(size) if body == "ball" else bodies.box([size] * dim)
    return mu, k


def run_decompose(cfg: dict, seed: int) -> Outcome:
    out = Outcome()
    mu, K = decomposition_instance(cfg["dim"], cfg["body"], cfg["size"])
    dec = decomposition.decompose(mu, K, n_mc=cfg["n_mc"], seed=seed, C1=cfg["C1"])
    negative = cfg["C1"] < 1.0
    rep = dec.report(negative_control=negative, dim=cfg["dim"], body=cfg["body"], size=cfg["size"])
    rep["delta_prime_le_delta"] = dec.delta_prime <= dec.delta + 3 * dec.delta_prime_stderr
    rep["profile_checks"] = decomposition.profile_checks(dec.profile)
    lc = decomposition.logconcavity_check(dec, cfg["lines"], derived_seed(seed, 1))
    rep["logconcavity"] = lc.as_dict()
    rep["inradius_violations"] = decomposition.inradius_check(dec, 1000, derived_seed(seed, 2))
    rng = np.random.default_rng(derived_seed(seed, 3))
    pts = rng.standard_normal((1000, mu.n, mu.d)) * 2.0
    rep["mixture_identity_error"] = decomposition.mixture_identity_error(dec, pts)
    out.payloads["decomposition_report"] = rep
    if negative:
        # outside the regime the construction needs; report, never assert
        rep["support_violations"] = None
        out.warn(f"negative control C1={cfg['C1']:g}: {lc.violations} log-concavity violations; "
                 f"delta' = {dec.delta_prime:.3e} vs delta = {dec.delta:.3e}")
        return out
    try:
        good = dec.sample_good(cfg["good_samples"], derived_seed(seed, 4), whitened=True)
        rep["support_violations"] = decomposition.support_violations(dec, good)
        rep["support_factor"] = dec.support_factor()
    except decomposition.RejectionCapExceeded as exc:
        rep["support_violations"] = None
        rep["sampler_error"] = str(exc)
    rep["smallest_passing_C1"] = decomposition.smallest_passing_c1(
        mu, K, [0.01, 0.1, 0.5, 1.0, 2.0, 5.0, 10.0], n_mc=20_000, n_lines=500, seed=seed)
    if not rep["delta_prime_le_delta"]:
        out.fail(f"delta' = {dec.delta_prime:.3e} exceeds delta = {dec.delta:.3e}")
    if lc.violations:
        out.fail(f"{lc.violations} log-concavity violations")
    if rep["support_violations"]:
        out.fail(f"{rep['support_violations']} good samples outside the dilated body")
    if rep["inradius_violations"]:
        out.fail("in-radius ball not inside K")
    if not rep["profile_checks"]["all"]:
        out.fail("sigma profile fails its checks")
    if rep["mixture_identity_error"] > 1e-10:
        out.fail(f"mixture identity error {rep['mixture_identity_error']:.2e}")
    return out


# --- oracle battery -----------------------------------------------------------------


def _reference_recursion(alpha, p, c_dec, c_unif, c_p):
    # straight-line duplicate of the recursion, kept deliberately naive
    R = c_dec**2 * math.sqrt(math.log(alpha))
    out = []
    while True:
        beta = alpha / (c_p * R ** (2 + p))
        out.append((R, beta))
        if p == 1:
            nxt = c_dec * c_unif * math.sqrt(math.log(beta)) * beta ** -0.25
        else:
            nxt = c_dec * c_unif * math.sqrt(math.log(alpha)) * alpha ** -0.25 * R ** ((2 + p) / 4)
        if nxt / R > 0.5:
            return out
        R = nxt


def run_oracle_check(cfg: dict, seed: int) -> Outcome:
    out = Outcome()
    rows = []

    def record(name, value, reference, tol):
        err = abs(value - reference)
        rows.append([name, value, reference, err, tol, int(err <= tol)])
        if err > tol:
            out.fail(f"{name}: |{value!r} - {reference!r}| = {err:.3e} > {tol:g}")

    eta = cfg["eta"]
    t, s, m = spectral_comparison(0.0, eta)
    record("spectral_beta0_max_diff", float(np.abs(s - m).max()), 0.0, 1e-10)
    for tt in (0.1, 0.5, 1.0):
        record(f"fourier_identity_t{tt:g}", spectral.fourier_identity_check(tt, 10**6), tt / 2, 2e-6)
    pc = polaron.PolaronConfig(0.0, 1, eta, 10.0, d=3)
    lat = pc.lattice
    e = polaron.interaction_energy(np.zeros((lat.n, 3)), pc)
    record("energy_constant_path", float(e), 20.0 * 2.0 / math.e, 40.0 * eta)
    for p in (0.5, 1.0, 1.5):
        c = recursion.desk_constants(p)
        ref = _reference_recursion(1e5, p, c.c_decomp, c.c_unif, c.c_p)
        tr = recursion.recursion_run(1e5, p, c)
        rel = max(abs(a[1] - b[0]) / b[0] + abs(a[2] - b[1]) / b[1] for a, b in zip(tr.steps, ref))
        record(f"recursion_reference_p{p:g}", rel + abs(len(ref) - tr.L), 0.0, 1e-12)
    osc = bodies.OscillationSet(0, 1.0, 1)
    record("dykstra_two_point", float(osc.path_distance(np.array([[0.0, 2.0]]))[0]), math.sqrt(2) / 2, 1e-8)
    from scipy import integrate, stats
    mu2 = standard_gaussian(2)
    u = (1 / math.sqrt(2), 1 / math.sqrt(2))
    rep = gci.gci_pair_test(mu2, bodies.Slab((1.0, 0.0), 1.0), bodies.Slab(u, 1.0), 2**20, seed)
    exact = integrate.quad(lambda x: stats.norm.pdf(x) * (stats.norm.cdf(math.sqrt(2) - x)
                                                          - stats.norm.cdf(-math.sqrt(2) - x)),
                           -1, 1, epsabs=1e-13)[0]
    record("gci_45deg_joint", rep.lhs, exact, max(4 * rep.stderrL, 1e-12))
    out.tables["oracle_check"] = (["check", "value", "reference", "abs_error", "tol", "pass"], rows)
    return out


RUNNERS = {
    "spectral": run_spectral,
    "recursion": run_recursion,
    "mcmc": run_mcmc,
    "gci": run_gci,
    "decompose": run_decompose,
    "oracle-check": run_oracle_check,
}


# --- block scalings -------------------------------------------------------------------


def block_scaling(eta: float, ss, betas) -> dict:
    """Exact block-confinement moments and their fitted exponents.

    ``avg_gap[s][beta]`` is ``E|avg_0 - avg_{s-1}|^2`` and ``endpoint[s][beta]``
    is ``E|B_s - B_0|^2`` under the fully coupled block on ``[0, s]`` (one
    coordinate).  The ``s``-exponents come from an offset power fit because
    both quantities carry an ``s``-independent floor.
    """
    from .fitting import fit_loglog, fit_offset_power
    from .lattice import LinearFunctional, block_measure, endpoint, riemann_average, second_moment

    ss, betas = [int(s) for s in ss], [float(b) for b in betas]
    gap = {s: {} for s in ss}
    end = {s: {} for s in ss}
    for s in ss:
        lat = Lattice(s, eta, 1)
        diff = LinearFunctional(riemann_average(lat, 0).coefficients - riemann_average(lat, s - 1).coefficients)
        e = endpoint(lat, s)
        for b in betas:
            mu = block_measure(lat, b)
            gap[s][b] = second_moment(mu, diff)
            end[s][b] = second_moment(mu, e)
    gap_beta = {s: fit_loglog(betas, [gap[s][b] for b in betas])[0] for s in ss}
    gap_s = {b: fit_offset_power(ss, [gap[s][b] for s in ss])[0] for b in betas}
    end_fits = {b: fit_offset_power(ss, [end[s][b] for s in ss]) for b in betas}
    end_s = {b: f[0] for b, f in end_fits.items()}
    # the linear-in-s coefficient carries the s/beta term
    end_beta = fit_loglog(betas, [end_fits[b][2] for b in betas])[0]
    return {"avg_gap": gap, "endpoint": end, "avg_gap_beta_exponent": gap_beta,
            "avg_gap_s_exponent": gap_s, "endpoint_s_exponent": end_s,
            "endpoint_beta_exponent": end_beta}
