"""Desk-scale limit-theorem experiments: CLT, WLLN, LIL, Choquet moments.

The theorems verified here are asymptotic; every check below is a banded,
frozen-seed, finite-n sanity experiment and is documented as such.  Nothing
in this module claims to verify an almost-sure statement.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError
from .functions import as_test_function
from .gheat import GParams, PdeSolution, auto_grid, gnormal_expect, maximal_expect, solve_g_heat
from .kernels import get_backend
from . import simulate as sim

#: default geometric checkpoint ratio for LIL traces
CHECKPOINT_RATIO = 1.05
#: half-width tolerance band for cluster sandwich verdicts
CLUSTER_BAND = 0.15


def loglog(x):
    """log log with the convention log y = ln(y or e, whichever is larger)."""
    x = np.asarray(x, dtype=float)
    l1 = np.log(np.maximum(x, math.e))
    out = np.log(np.maximum(l1, math.e))
    return float(out) if np.ndim(x) == 0 else out


def lil_norm(n):
    """a_n = sqrt(2 n loglog n); a(e) = sqrt(2e) exactly under the convention."""
    n = np.asarray(n, dtype=float)
    out = np.sqrt(2.0 * n * loglog(n))
    return float(out) if np.ndim(n) == 0 else out


def checkpoint_schedule(n_max: int, ratio: float = CHECKPOINT_RATIO,
                        start: int = 100) -> np.ndarray:
    """Geometric integer checkpoints in [start, n_max], always ending at n_max."""
    if not (1 <= start <= n_max):
        raise ConfigurationError("need 1 <= start <= n_max")
    if ratio <= 1.0:
        raise ConfigurationError("ratio must exceed 1")
    pts = []
    x = float(start)
    while x <= n_max:
        pts.append(int(round(x)))
        x = max(x + 1.0, x * ratio)
    pts.append(n_max)
    return np.unique(np.array(pts, dtype=np.int64))


def kk_schedule(n_max: int) -> np.ndarray:
    """The n_k = k^k subsequence, capped at n_max (small-ball experiments)."""
    pts = []
    k = 1
    while k ** k <= n_max:
        pts.append(k ** k)
        k += 1
    return np.array(pts, dtype=np.int64)


def subsequence_decomposition(s_prev: float, s_cur: float,
                              n_prev: int, n_cur: int) -> float:
    """Two-term recombination of S_{n_k}/a_{n_k} along a subsequence.

    Returns (S_cur - S_prev)/sqrt(2 (n_cur - n_prev) loglog n_cur)
    * sqrt(1 - n_prev/n_cur) + (S_prev/a_prev) * (a_prev/a_cur), which equals
    S_cur / a_cur identically; used as a pure-algebra self-check.
    """
    if not 0 < n_prev < n_cur:
        raise ConfigurationError("need 0 < n_prev < n_cur")
    a_prev = lil_norm(n_prev)
    a_cur = lil_norm(n_cur)
    block = (s_cur - s_prev) / math.sqrt(2.0 * (n_cur - n_prev) * loglog(n_cur))
    return (block * math.sqrt(1.0 - n_prev / n_cur)
            + (s_prev / a_prev) * (a_prev / a_cur))


# ---------------------------------------------------------------------------
# LIL experiment
# ---------------------------------------------------------------------------


@dataclass
class LilTrace:
    checkpoint_ns: np.ndarray
    a_values: np.ndarray
    values: np.ndarray        # (n_paths, n_checkpoints) of S_n / a_n
    running_max: np.ndarray   # per path, over all n in [window_start, n_max]
    running_min: np.ndarray
    window_start: int
    n_max: int


@dataclass
class ClusterEstimate:
    """Tail-window visit statistics standing in for the cluster set.

    Per-path [tail_min, tail_max] estimate the liminf/limsup.  The ensemble
    cluster-interval estimate is the trimmed envelope
    [q05 of tail_min, q95 of tail_max], robust to the few paths with large
    excursions (the running max of S_n/a_n is not concentrated at desk
    scale).  Targets are the outer interval [-sigma_upper, sigma_upper] and
    inner [-sigma_lower, sigma_lower], checked with a +-band allowance.
    """

    tail_start: int
    bin_edges: np.ndarray
    visited: np.ndarray       # (n_paths, n_bins) bool
    tail_min: np.ndarray
    tail_max: np.ndarray
    sigma_lower: float
    sigma_upper: float
    band: float = CLUSTER_BAND
    trim: float = 0.05

    @property
    def liminf_estimate(self) -> float:
        return float(np.quantile(self.tail_min, self.trim))

    @property
    def limsup_estimate(self) -> float:
        return float(np.quantile(self.tail_max, 1.0 - self.trim))

    def outer_ok(self) -> bool:
        return (self.limsup_estimate <= self.sigma_upper + self.band
                and self.liminf_estimate >= -self.sigma_upper - self.band)

    def inner_ok(self) -> bool:
        """Trimmed envelope contains, and the visited bins cover, the inner
        interval [-sigma_lower + band, sigma_lower - band]."""
        lo, hi = -self.sigma_lower + self.band, self.sigma_lower - self.band
        if lo >= hi:
            return True
        if self.liminf_estimate > lo or self.limsup_estimate < hi:
            return False
        centers = 0.5 * (self.bin_edges[:-1] + self.bin_edges[1:])
        inside = (centers >= lo) & (centers <= hi)
        return bool(np.all(self.visited.any(axis=0)[inside]))


@dataclass
class LilResult:
    family: sim.StepFamily
    policy: sim.AdversaryPolicy
    n_max: int
    n_paths: int
    seed: int
    trace: LilTrace
    cluster: ClusterEstimate
    verdicts: dict


def lil_experiment(family: sim.StepFamily, policy: sim.AdversaryPolicy,
                   n_max: int, n_paths: int, seed: int, *,
                   checkpoint_ratio: float = CHECKPOINT_RATIO,
                   window_start: int = 100,
                   tail_fraction: float = 0.1,
                   bin_range: tuple = (-2.0, 2.0),
                   bin_width: float = 0.05,
                   band: float = CLUSTER_BAND,
                   backend: str | None = None) -> LilResult:
    """Trace S_n/a_n to n_max and summarize extremes, visits, and verdicts.

    The hypotheses of the theorem require centered steps (both upper and
    lower means zero) with finite upper variance; families violating either
    are rejected.  The verdict bands are desk-scale sanity checks of an
    asymptotic statement, nothing stronger; see the package README.
    """
    if any(m.mean != 0.0 for m in family.members):
        raise ConfigurationError(
            "LIL hypotheses need E[X] = E[-X] = 0: all member means must be 0"
        )
    if not family.simulatable:
        raise ConfigurationError(
            f"profile {family.profile!r} has no finite variance; the LIL "
            "hypotheses fail (see choquet_moment_check)"
        )
    if n_max < 10 or n_paths < 1:
        raise ConfigurationError("need n_max >= 10 and n_paths >= 1")
    kind, ipar, fpar, table, needs_u = policy.compile(family)
    kern = get_backend(backend)
    means, sigmas = family.means, family.sigmas

    ckpts = checkpoint_schedule(n_max, checkpoint_ratio, window_start)
    tail_start = max(1, int(n_max * tail_fraction))
    n_bins = int(round((bin_range[1] - bin_range[0]) / bin_width))
    bin_edges = bin_range[0] + bin_width * np.arange(n_bins + 1)

    s = np.zeros(n_paths)
    vmax = np.full(n_paths, -np.inf)
    vmin = np.full(n_paths, np.inf)
    tvmax = np.full(n_paths, -np.inf)
    tvmin = np.full(n_paths, np.inf)
    visited = np.zeros((n_paths, n_bins), dtype=bool)
    ck_values = np.empty((n_paths, ckpts.shape[0]))

    for b, lo, hi in sim._blocks(n_paths):
        width = hi - lo
        g = sim._block_stream(seed, b, 0)
        gu = sim._block_stream(seed, b, policy.rng_stream_id) if needs_u else None
        chunk = max(1, min(n_max, sim.CHUNK_CELLS // width))
        k0 = 0
        while k0 < n_max:
            c = min(chunk, n_max - k0)
            z = np.ascontiguousarray(family.draw_innovations(g, (c, width)).T)
            u = (np.ascontiguousarray(gu.random((c, width)).T)
                 if needs_u else np.empty((0, 0)))
            ns = np.arange(k0 + 1, k0 + c + 1, dtype=float)
            inv_a = 1.0 / lil_norm(ns)
            in_chunk = (ckpts > k0) & (ckpts <= k0 + c)
            ck_local = (ckpts[in_chunk] - k0 - 1).astype(np.int64)
            ck_slot = np.nonzero(in_chunk)[0].astype(np.int64)
            kern.fold_lil(z, u, k0, n_max, means, sigmas,
                          kind, ipar, fpar, table, inv_a,
                          window_start, tail_start, ck_local, ck_slot,
                          ck_values[lo:hi], bin_range[0], 1.0 / bin_width,
                          visited[lo:hi],
                          s[lo:hi], vmax[lo:hi], vmin[lo:hi],
                          tvmin[lo:hi], tvmax[lo:hi])
            k0 += c

    trace = LilTrace(ckpts, lil_norm(ckpts), ck_values, vmax, vmin,
                     window_start, n_max)
    s_lo = math.sqrt(family.sigma_sq_bounds[0])
    s_hi = math.sqrt(family.sigma_sq_bounds[1])
    cluster = ClusterEstimate(tail_start, bin_edges, visited, tvmin, tvmax,
                              s_lo, s_hi, band)
    in_band = np.mean((vmax >= 0.8 * s_hi) & (vmax <= 1.1 * s_hi))
    verdicts = {
        "band_low": 0.8 * s_hi,
        "band_high": 1.1 * s_hi,
        "running_max_in_band_fraction": float(in_band),
        "running_max_overall": float(vmax.max()),
        "running_max_never_above": bool(vmax.max() <= (1.0 + band) * s_hi),
        "cluster_outer_ok": cluster.outer_ok(),
        "cluster_inner_ok": cluster.inner_ok(),
    }
    return LilResult(family, policy, n_max, n_paths, seed, trace, cluster,
                     verdicts)


# ---------------------------------------------------------------------------
# CLT / WLLN experiments
# ---------------------------------------------------------------------------


def feedback_policy_from_pde(solution: PdeSolution, family: sim.StepFamily,
                             n_steps: int) -> sim.AdversaryPolicy:
    """Bang-bang volatility policy read off the PDE solution surface.

    At simulation step k with running sum S, the remaining time is
    1 - k/n; the policy picks the max-variance member where the stored
    solution slice has nonnegative discrete second difference at
    x = S / sqrt(n), and the min-variance member elsewhere.  The rule reads
    only observable history, so it is adapted.
    """
    lo_idx = int(np.argmin(family.sigmas))
    hi_idx = int(np.argmax(family.sigmas))
    times = solution.times
    horizon = solution.grid.t_horizon
    values = solution.values
    n_slices = values.shape[0]
    d2 = np.zeros_like(values)
    d2[:, 1:-1] = values[:, 2:] - 2.0 * values[:, 1:-1] + values[:, :-2]
    d2[:, 0] = d2[:, 1]
    d2[:, -1] = d2[:, -2]
    table = np.empty((n_slices, values.shape[1]), dtype=np.int64)
    for i in range(n_slices):
        elapsed_mid = (i + 0.5) / n_slices
        remaining = horizon * (1.0 - elapsed_mid)
        j = int(np.argmin(np.abs(times - remaining)))
        table[i] = np.where(d2[j] >= 0.0, hi_idx, lo_idx)
    return sim.AdversaryPolicy.feedback(
        table, x_scale=1.0 / math.sqrt(n_steps),
        x_origin=solution.grid.x_min, x_bin_width=solution.grid.dx,
        name="pde-feedback")


def _combined_se(se_a: float, se_b: float) -> float:
    return math.sqrt(se_a * se_a + se_b * se_b)


@dataclass
class ConvergenceTable:
    phi_tag: str
    reference: float
    rows: list                      # dicts: n, estimate, se, error, policy
    monotone_within_2se: bool
    final_error: float

    def as_dict(self) -> dict:
        return {"phi": self.phi_tag, "reference": self.reference,
                "rows": self.rows, "monotone_within_2se": self.monotone_within_2se,
                "final_error": self.final_error}


def clt_experiment(phi, family: sim.StepFamily, n_list, n_paths, seed, *,
                   policies=None, include_feedback: bool = True,
                   nx: int = 2001, backend: str | None = None) -> ConvergenceTable:
    """sup-over-policy estimates of E[phi(S_n/sqrt(n))] against the G-normal
    reference, with a nonincreasing-error verdict.

    phi must have growth order <= 2 unless the family has a finite matching
    absolute moment (the moment condition of the theorem).
    """
    tf = as_test_function(phi)
    if any(m.mean != 0.0 for m in family.members):
        raise ConfigurationError("CLT hypotheses need centered steps")
    if tf.growth_order > 2:
        if not math.isfinite(family.abs_moment_upper(tf.growth_order)):
            raise ConfigurationError(
                f"{tf.tag!r} grows like |x|^{tf.growth_order} but the family "
                f"lacks a finite moment of that order (need E|X|^p < inf for "
                f"p = {tf.growth_order})"
            )
    lo_var, hi_var = family.sigma_sq_bounds
    params = GParams(lo_var, hi_var)
    reference = gnormal_expect(tf, params, nx=nx, max_growth=max(2, tf.growth_order),
                               backend=backend)
    base = list(policies) if policies is not None else sim.default_policy_family(family)
    solution = None
    if include_feedback and lo_var != hi_var:
        grid = auto_grid(tf, params, 1.0, nx)
        solution = solve_g_heat(tf, params, grid, backend=backend)

    paths_by_n = n_paths if isinstance(n_paths, dict) else {n: int(n_paths)
                                                            for n in n_list}
    rows = []
    for n in n_list:
        pols = list(base)
        if solution is not None:
            pols.append(feedback_policy_from_pde(solution, family, n))
        m = int(paths_by_n[n])
        best = None
        for pol in pols:
            batch = sim.simulate_paths(family, pol, n, m, seed, backend)
            vals = tf.evaluator(batch.final_sums / math.sqrt(n))
            est = float(np.mean(vals))
            se = float(np.std(vals) / math.sqrt(m))
            if best is None or est > best[0]:
                best = (est, se, pol.name)
        rows.append({"n": int(n), "estimate": best[0], "se": best[1],
                     "policy": best[2], "error": abs(best[0] - reference)})
    monotone = all(
        rows[i + 1]["error"] <= rows[i]["error"]
        + 2.0 * _combined_se(rows[i]["se"], rows[i + 1]["se"])
        for i in range(len(rows) - 1)
    )
    return ConvergenceTable(tf.tag, reference, rows, monotone,
                            rows[-1]["error"])


def wlln_experiment(phi, family: sim.StepFamily, n_list, n_paths, seed, *,
                    policies=None, backend: str | None = None) -> ConvergenceTable:
    """sup-over-policy estimates of E[phi(S_n/n)] against the maximal
    distribution value sup over the mean interval."""
    tf = as_test_function(phi)
    if tf.growth_order > 1 and not math.isfinite(
            family.abs_moment_upper(tf.growth_order)):
        raise ConfigurationError("phi grows beyond the family's finite moments")
    mu_lo, mu_hi = family.mean_bounds
    params = GParams(0.0, family.sigma_sq_bounds[1], mu_lo, mu_hi)
    reference = maximal_expect(tf, params)
    pols = list(policies) if policies is not None else sim.default_policy_family(
        family, kind="mean")
    paths_by_n = n_paths if isinstance(n_paths, dict) else {n: int(n_paths)
                                                            for n in n_list}
    rows = []
    for n in n_list:
        m = int(paths_by_n[n])
        best = None
        for pol in pols:
            batch = sim.simulate_paths(family, pol, n, m, seed, backend)
            vals = tf.evaluator(batch.final_sums / n)
            est = float(np.mean(vals))
            se = float(np.std(vals) / math.sqrt(m))
            if best is None or est > best[0]:
                best = (est, se, pol.name)
        rows.append({"n": int(n), "estimate": best[0], "se": best[1],
                     "policy": best[2], "error": abs(best[0] - reference)})
    monotone = all(
        rows[i + 1]["error"] <= rows[i]["error"]
        + 2.0 * _combined_se(rows[i]["se"], rows[i + 1]["se"])
        for i in range(len(rows) - 1)
    )
    return ConvergenceTable(tf.tag, reference, rows, monotone, rows[-1]["error"])


# ---------------------------------------------------------------------------
# Choquet moment condition
# ---------------------------------------------------------------------------


def _g_lil(x):
    """x^2 / loglog x with the ln(. or e) convention (monotone on [0, inf))."""
    x = np.asarray(x, dtype=float)
    return x * x / loglog(x)


def _decades(values_at_marks):
    return [values_at_marks[i + 1] - values_at_marks[i]
            for i in range(len(values_at_marks) - 1)]


def _classify(total: float, decades, abs_tol: float = 1e-8,
              ratio_tol: float = 0.6) -> str:
    """Plateau-or-geometric-decay rule on successive decade contributions.

    Convergent series either go flat (contributions below abs_tol) or decay
    geometrically across decades (polynomial tails); log-log-corrected
    divergence keeps near-constant decade contributions.
    """
    if not math.isfinite(total):
        return "divergent"
    last = decades[-1]
    if last < abs_tol:
        return "convergent"
    if len(decades) >= 2 and decades[-2] > 0 and last / decades[-2] < ratio_tol:
        return "convergent"
    return "divergent"


def moment_condition_oracle(family: sim.StepFamily) -> str:
    """Analytic tail verdict for the Choquet moment condition."""
    if family.profile in ("two_point", "truncated_gaussian"):
        return "convergent"        # bounded support
    if family.profile in ("gaussian", "laplace"):
        return "convergent"        # super-polynomial tails, all moments finite
    # pareto: X^2/loglog|X| integrable against the tail iff alpha > 2
    return "convergent" if family.tail_alpha > 2 else "divergent"


def choquet_moment_check(family: sim.StepFamily, delta_list=(0.5, 1.0), *,
                         n_truncation: int = 10 ** 6, p: float = 3.0) -> dict:
    """Evaluate both sides of the series/Choquet-integral equivalence.

    Series side: partial sums of sup-member P(|X| >= delta a_n) up to the
    truncation; integral side: the Choquet integral of X^2/loglog|X| as a
    Stieltjes integral of the upper tail, truncated at a matching range.
    Also spot-checks the truncated p-th moment series of the same lemma.
    Classification compares decade contributions against a plateau rule and
    is cross-checked against the analytic oracle.
    """
    if any(m.mean != 0.0 for m in family.members):
        raise ConfigurationError("moment checker expects centered members")
    marks = [10 ** k for k in range(2, int(math.log10(n_truncation)) + 1)]
    ns = np.arange(1, n_truncation + 1, dtype=float)
    a = lil_norm(ns)

    series = {}
    for delta in delta_list:
        tails = family.upper_tail(delta * a)
        csum = np.cumsum(tails)
        at_marks = [float(csum[m - 1]) for m in marks]
        decades = _decades([0.0] + at_marks)
        series[delta] = {
            "partial_sums": dict(zip(marks, at_marks)),
            "decade_contributions": decades,
            "classification": _classify(at_marks[-1], decades),
        }

    # integral side: levels matched to the series truncation scale
    x_hi = float(delta_list[0] * a[-1] * 4.0)
    xs = np.concatenate([[0.0], np.logspace(-3, math.log10(x_hi), 4001)])
    g = _g_lil(xs)
    tail_mid = family.upper_tail(0.5 * (xs[:-1] + xs[1:]))
    contrib = tail_mid * np.diff(g)
    cum = np.concatenate([[0.0], np.cumsum(contrib)])
    g_marks = [g[-1] / 10.0 ** k for k in range(4, -1, -1)]
    at_g_marks = [float(np.interp(gm, g, cum)) for gm in g_marks]
    integral_decades = _decades([0.0] + at_g_marks)
    integral = {
        "truncation_level": g_marks[-1],
        "value_at_truncation": at_g_marks[-1],
        "decade_contributions": integral_decades,
        "classification": _classify(at_g_marks[-1], integral_decades),
    }

    # lemma (ii) spot check: sum of truncated p-th moments over a_n^p
    delta0 = delta_list[0]
    lem2ii = {}
    xs_m = np.concatenate([[0.0], np.logspace(-4, math.log10(x_hi), 2001)])
    per_member_tail = [family.member_tail(i, 0.5 * (xs_m[:-1] + xs_m[1:]))
                       for i in range(family.n_members)]
    dxp = np.diff(xs_m ** p)
    thin = np.unique(np.concatenate(
        [np.arange(1, 1001), np.geomspace(1000, n_truncation, 400).astype(int)]))
    cut = delta0 * lil_norm(thin.astype(float))
    # E[(|X| wedge c)^p] = integral over (0, c) of p x^{p-1} tail(x) dx, per member
    terms = np.zeros(thin.shape[0])
    for i, c in enumerate(cut):
        inside = xs_m[1:] <= c
        per_member = [float(np.sum(t[inside] * dxp[inside]))
                      for t in per_member_tail]
        terms[i] = max(per_member) / lil_norm(float(thin[i])) ** p
    # geometric thinning: weight each sampled n by its gap
    gaps = np.diff(np.concatenate([[0], thin]))
    csum = np.cumsum(terms * gaps)
    at_marks = [float(np.interp(m, thin, csum)) for m in marks]
    decades = _decades([0.0] + at_marks)
    lem2ii = {
        "p": p,
        "partial_sums": dict(zip(marks, at_marks)),
        "decade_contributions": decades,
        "classification": _classify(at_marks[-1], decades, abs_tol=1e-6),
    }

    series_cls = series[delta_list[0]]["classification"]
    oracle = moment_condition_oracle(family)
    return {
        "family_profile": family.profile,
        "series": series,
        "choquet_integral": integral,
        "lem2ii": lem2ii,
        "classification": series_cls,
        "sides_agree": series_cls == integral["classification"],
        "oracle": oracle,
        "matches_oracle": series_cls == oracle,
    }
