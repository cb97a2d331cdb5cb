"""Closed-form exponential/moment bounds and their empirical verification.

Every calculator evaluates one bound exactly from its inputs; ``verify_bound``
runs the adversarial simulator over a canned (or user-supplied) configuration,
estimates the relevant capacity or moment, and reports whether the analytic
value dominates the empirical one within Monte Carlo slack.

The theory guarantees existence of the constants C_p but not their values;
shipped defaults were calibrated once on the canned step families by grid
search and frozen in ``data/calibrated_constants.json``.  No uniformity over
families is claimed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .errors import ConfigurationError
from .functions import smooth_indicator  # noqa: F401  (re-exported op surface)
from . import simulate as sim

#: Monte Carlo slack multiplier for dominance verdicts (~99.7% two-sided)
SE_SLACK = 3.0


def _load_constants() -> dict:
    with resources.files("subexpect").joinpath(
            "data/calibrated_constants.json").open() as fh:
        return json.load(fh)


_CONSTANTS: dict | None = None


def calibrated_constant(name: str, key: str | None = None) -> float:
    """Frozen constant from the golden file, e.g. ('rosenthal_moment_c_p', '4')."""
    global _CONSTANTS
    if _CONSTANTS is None:
        _CONSTANTS = _load_constants()
    entry = _CONSTANTS[name]
    if isinstance(entry, dict):
        return float(entry[str(key)])
    return float(entry)


# ---------------------------------------------------------------------------
# moment summaries
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MomentSummary:
    """Family-level moment inputs for the bound calculators."""

    n: int
    b_n: float          # sum over steps of the upper second moment
    m_np: float         # sum over steps of the upper p-th absolute moment
    p: float
    upper_means: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.b_n < 0 or self.m_np < 0:
            raise ConfigurationError("moment sums must be nonnegative")
        if self.p < 2:
            raise ConfigurationError("p must be >= 2")


def moment_summary(family: sim.StepFamily, n: int, p: float = 2.0) -> MomentSummary:
    mu_lo, mu_hi = family.mean_bounds
    return MomentSummary(
        n=n,
        b_n=n * family.second_moment_upper(),
        m_np=n * family.abs_moment_upper(p),
        p=p,
        upper_means=np.full(n, mu_hi),
    )


# ---------------------------------------------------------------------------
# calculators
# ---------------------------------------------------------------------------


def kolmogorov_upper_bound(x: float, y: float, b_n: float) -> float:
    """Exponential term of the Kolmogorov-type tail bound for V(S_n >= x).

    exp{-x^2 / (2(xy + B_n)) * (1 + 2/3 ln(1 + xy/B_n))}; the companion
    max-step term V(max_k X_k >= y) is estimated separately.
    """
    if x <= 0 or y <= 0 or b_n <= 0:
        raise ConfigurationError("kolmogorov bound needs x, y, B_n > 0")
    r = x * y / b_n
    return math.exp(-(x * x) / (2.0 * (x * y + b_n))
                    * (1.0 + (2.0 / 3.0) * math.log1p(r)))


def fuk_nagaev_bound(x: float, delta: float, p: float, b_n: float,
                     m_np: float, c_p: float) -> float:
    """C_p delta^-2p M_{n,p} / x^p + exp{-x^2 / (2 B_n (1 + delta))}."""
    if not 0 < delta <= 1:
        raise ConfigurationError("need 0 < delta <= 1")
    if p < 2 or x <= 0 or b_n <= 0 or c_p < 1:
        raise ConfigurationError("need p >= 2, x > 0, B_n > 0, C_p >= 1")
    return (c_p * delta ** (-2.0 * p) * m_np / x ** p
            + math.exp(-(x * x) / (2.0 * b_n * (1.0 + delta))))


def chebyshev_bound(x: float, b_n: float, c: float | None = None) -> float:
    """Second-moment tail bound C * B_n / x^2 for the lower capacity.

    This is the p = 2, delta = 1 reduction of the Fuk-Nagaev form after
    absorbing the exponential via u e^-u <= 1/e; C ships calibrated.
    """
    if x <= 0 or b_n < 0:
        raise ConfigurationError("need x > 0 and B_n >= 0")
    if c is None:
        c = calibrated_constant("chebyshev_c")
    return c * b_n / (x * x)


def rosenthal_choquet_bound(p: float, b_n: float, per_step_choquet_pth,
                            c_p: float) -> float:
    """p^p sum_k C_V[(X_k^+)^p] + C_p B_n^{p/2} (Choquet-Rosenthal RHS)."""
    if p < 2:
        raise ConfigurationError("p must be >= 2")
    total = float(np.sum(np.asarray(per_step_choquet_pth, dtype=float)))
    return p ** p * total + c_p * b_n ** (p / 2.0)


def rosenthal_moment_bound(p: float, b_n: float, m_np: float,
                           mean_terms, c_p: float,
                           variant: str = "independent_tail") -> float:
    """Rosenthal-type moment bounds.

    Variants: 'independent_tail' bounds E[(S_n^+)^p]; 'independent_partial_max'
    bounds E[max_k (S_n - S_k)^p] (same right-hand side); 'nd_max' bounds
    E[max_k |S_k|^p] for negatively dependent steps and adds the mean
    correction (sum_k [(conj mean)^- + (upper mean)^+])^p.
    """
    if p < 2:
        raise ConfigurationError("p must be >= 2")
    if c_p < 1:
        raise ConfigurationError("C_p must be >= 1")
    core = m_np + b_n ** (p / 2.0)
    if variant in ("independent_tail", "independent_partial_max"):
        return c_p * core
    if variant == "nd_max":
        if mean_terms is None:
            raise ConfigurationError("nd_max variant needs the mean terms")
        mt = float(np.sum(np.asarray(mean_terms, dtype=float)))
        return c_p * (core + mt ** p)
    raise ConfigurationError(f"unknown variant {variant!r}")


def lower_bound_exponent(b: float, sigma_for_side: float, delta: float,
                         y_n: float) -> float:
    """exp{-((|b|/sigma)^2 + delta) y_n^2 / 2}: small-ball lower bound.

    Side (a) of the theorem pairs sigma_lower with the lower capacity; side
    (b) pairs sigma_upper with the upper capacity.
    """
    if sigma_for_side <= 0 or delta <= 0 or y_n <= 0:
        raise ConfigurationError("need sigma, delta, y_n > 0")
    ratio_sq = (abs(b) / sigma_for_side) ** 2
    if not abs(b) < sigma_for_side or not ratio_sq + delta < 1:
        raise ConfigurationError("need |b| < sigma and (b/sigma)^2 + delta < 1")
    return math.exp(-(ratio_sq + delta) * y_n * y_n / 2.0)


def default_truncation_y(x: float, delta: float, beta: float) -> float:
    """Proof-shaped truncation level y = rho delta x with
    rho = min(1, 1 / (2 (1 + 1/delta) delta log(1/beta)))."""
    if not 0 < delta <= 1 or x <= 0:
        raise ConfigurationError("need x > 0 and 0 < delta <= 1")
    if not 0 < beta < 1:
        return delta * x
    rho = min(1.0, 1.0 / (2.0 * (1.0 + 1.0 / delta) * delta * math.log(1.0 / beta)))
    return rho * delta * x


def step_choquet_positive_pth(family: sim.StepFamily, p: float) -> float:
    """C_V[(X^+)^p] for one step of the family (sup over member tails)."""
    if family.profile == "two_point":
        # (X^+)^p is sigma^p with probability 1/2 for a centered member
        if any(m.mean != 0.0 for m in family.members):
            raise ConfigurationError("closed form needs centered members")
        return 0.5 * float(np.max(family.sigmas)) ** p
    # symmetric profiles: P(X > x) = P(|X| > x) / 2
    hi = float(np.max(family.sigmas))
    x_hi = {"gaussian": 10.0, "truncated_gaussian": 10.0, "laplace": 30.0}.get(
        family.profile, 50.0) * max(hi, 1e-12)
    xs = np.linspace(0.0, x_hi, 200_001)
    integrand = p * np.maximum(xs, 0.0) ** (p - 1.0) * family.upper_tail(xs) / 2.0
    return float(np.trapezoid(integrand, xs))


def empirical_choquet_upper(samples_by_policy, transform=None) -> float:
    """Layer-cake integral of the empirical upper tail envelope.

    samples_by_policy: list of 1-D arrays (one per policy); the upper
    capacity of {Y > t} is estimated by the pointwise max of the per-policy
    empirical tails, and the integral over t >= 0 is computed exactly for
    the resulting step function.  Samples must be nonnegative.
    """
    ys = [np.sort(np.asarray(s, dtype=float)) for s in samples_by_policy]
    if transform is not None:
        ys = [np.sort(transform(y)) for y in ys]
    if any(y[0] < 0 for y in ys if y.size):
        raise ConfigurationError("empirical layer cake needs nonnegative samples")
    grid = np.unique(np.concatenate([[0.0]] + ys))
    env = np.zeros(grid.shape[0])
    for y in ys:
        tail = (y.shape[0] - np.searchsorted(y, grid, side="right")) / y.shape[0]
        np.maximum(env, tail, out=env)
    return float(np.sum(env[:-1] * np.diff(grid)))


# ---------------------------------------------------------------------------
# verification harness
# ---------------------------------------------------------------------------


@dataclass
class BoundReport:
    """Analytic bound vs empirical capacity/moment with a dominance verdict.

    ``dominated`` means the bound held on every cell within SE_SLACK standard
    errors (for lower bounds, that the empirical value stayed above it).
    """

    bound_name: str
    inputs: dict
    analytic_value: float
    empirical_estimate: float
    standard_error: float
    dominated: bool
    cells: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "bound_name": self.bound_name,
            "inputs": self.inputs,
            "analytic_value": self.analytic_value,
            "empirical_estimate": self.empirical_estimate,
            "standard_error": self.standard_error,
            "dominated": self.dominated,
            "cells": self.cells,
            "warnings": self.warnings,
        }


FAMILY_PRESETS = {
    "two_point_var": {"profile": "two_point",
                      "members": [{"sigma": 0.5}, {"sigma": 1.0}]},
    "trunc_gauss_var": {"profile": "truncated_gaussian", "truncation": 3.0,
                        "members": [{"sigma": 0.5}, {"sigma": 1.0}]},
    "laplace_heavy": {"profile": "laplace",
                      "members": [{"sigma": 0.5}, {"sigma": 1.0}]},
    "pm1": {"profile": "two_point", "members": [{"sigma": 1.0}]},
}

CANNED_CONFIGS = {
    "kolmogorov": {
        "families": ["two_point_var", "trunc_gauss_var"],
        "policies": "default",
        "n_steps": 1000,
        "n_paths": 100_000,
        "seed": 20160101,
        "x_over_sqrt_bn": [1.5, 2.0, 2.5, 3.0],
        "y_values": [1.5, 3.0],
        "y_as_x_fraction": [1.0 / 3.0],
    },
    "chebyshev": {
        "families": ["two_point_var"],
        "policies": "default",
        "n_steps": 1000,
        "n_paths": 20_000,
        "seed": 20160102,
        "x_over_sqrt_bn": [0.5, 1.0, 2.0, 3.0],
    },
    "fuk_nagaev": {
        "families": ["laplace_heavy"],
        "policies": "default",
        "n_steps": 1000,
        "n_paths": 50_000,
        "seed": 20160103,
        "x_over_sqrt_bn": [1.5, 2.0, 3.0],
        "deltas": [0.5, 1.0],
        "p_values": [2.0, 3.0, 4.0],
    },
    "lower_bound": {
        "families": ["two_point_var"],
        "policies": "default",
        "n_list": [10_000, 100_000],
        "paths_by_n": {"10000": 5_000, "100000": 3_000},
        "seed": 20160104,
        "b": 0.0,
        "delta": 0.5,
        "epsilon": 0.5,
    },
    "rosenthal_choquet": {
        "families": ["two_point_var"],
        "policies": "default",
        "n_steps": 100,
        "n_paths": 50_000,
        "seed": 20160105,
        "p_values": [2.0, 3.0, 4.0],
    },
    "rosenthal_moment": {
        "families": ["pm1", "two_point_var"],
        "policies": "default",
        "n_steps": 1000,
        "n_paths": 50_000,
        "seed": 20160106,
        "p_values": [2.0, 3.0, 4.0],
        "variant": "nd_max",
    },
}


def _resolve_config(bound_name: str, overrides: dict | None) -> dict:
    if bound_name not in CANNED_CONFIGS:
        raise ConfigurationError(
            f"unknown bound {bound_name!r}; shipped: {sorted(CANNED_CONFIGS)}"
        )
    cfg = dict(CANNED_CONFIGS[bound_name])
    if overrides:
        unknown = set(overrides) - set(cfg) - {"families", "seed"}
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(overrides)
    return cfg


def _families(cfg) -> list[tuple[str, sim.StepFamily]]:
    out = []
    for name in cfg["families"]:
        preset = FAMILY_PRESETS.get(name)
        if preset is None:
            raise ConfigurationError(f"unknown family preset {name!r}")
        out.append((name, sim.family_from_config(preset)))
    return out


def _batches(family, cfg, n_steps, n_paths):
    policies = sim.policies_from_config(cfg.get("policies", "default"), family)
    return [sim.simulate_paths(family, pol, n_steps, n_paths, cfg["seed"])
            for pol in policies]


def verify_bound(bound_name: str, config: dict | None = None) -> BoundReport:
    """Run the canned experiment for ``bound_name`` and report dominance."""
    cfg = _resolve_config(bound_name, config)
    fn = {
        "kolmogorov": _verify_kolmogorov,
        "chebyshev": _verify_chebyshev,
        "fuk_nagaev": _verify_fuk_nagaev,
        "lower_bound": _verify_lower_bound,
        "rosenthal_choquet": _verify_rosenthal_choquet,
        "rosenthal_moment": _verify_rosenthal_moment,
    }[bound_name]
    return fn(cfg)


def _verify_kolmogorov(cfg) -> BoundReport:
    n = cfg["n_steps"]
    n_paths = cfg["n_paths"]
    cells = []
    worst = None
    for fam_name, family in _families(cfg):
        b_n = n * family.second_moment_upper()
        batches = _batches(family, cfg, n, n_paths)
        xs = [u * math.sqrt(b_n) for u in cfg["x_over_sqrt_bn"]]
        for x in xs:
            ys = list(cfg["y_values"]) + [f * x for f in cfg.get("y_as_x_fraction", [])]
            for y in ys:
                bound = kolmogorov_upper_bound(x, y, b_n)
                for batch in batches:
                    hits = int(np.count_nonzero(batch.final_sums >= x))
                    freq = hits / n_paths
                    se = sim.wilson_se(hits, n_paths)
                    max_hits = int(np.count_nonzero(batch.max_steps >= y))
                    max_freq = max_hits / n_paths
                    rhs = bound + max_freq + SE_SLACK * se
                    ok = freq <= rhs
                    cell = {"family": fam_name, "policy": batch.policy.name,
                            "x": x, "y": y, "freq": freq, "se": se,
                            "exp_term": bound, "max_term": max_freq, "ok": ok}
                    cells.append(cell)
                    if worst is None or (cell["freq"] - cell["exp_term"]
                                         - cell["max_term"]) > (
                            worst["freq"] - worst["exp_term"] - worst["max_term"]):
                        worst = cell
    dominated = all(c["ok"] for c in cells)
    return BoundReport("kolmogorov", {"n_steps": n, "n_paths": n_paths},
                       worst["exp_term"] + worst["max_term"], worst["freq"],
                       worst["se"], dominated, cells)


def _verify_chebyshev(cfg) -> BoundReport:
    n = cfg["n_steps"]
    n_paths = cfg["n_paths"]
    c = calibrated_constant("chebyshev_c")
    cells = []
    for fam_name, family in _families(cfg):
        b_n = n * family.second_moment_upper()
        batches = _batches(family, cfg, n, n_paths)
        for u in cfg["x_over_sqrt_bn"]:
            x = u * math.sqrt(b_n)
            hits = [int(np.count_nonzero(b.final_sums >= x)) for b in batches]
            j = int(np.argmin(hits))
            freq = hits[j] / n_paths
            se = sim.wilson_se(hits[j], n_paths)
            bound = chebyshev_bound(x, b_n, c)
            cells.append({"family": fam_name, "x": x, "freq": freq,
                          "se": se, "bound": bound,
                          "ok": freq <= bound + SE_SLACK * se})
    worst = max(cells, key=lambda r: r["freq"] - r["bound"])
    return BoundReport("chebyshev", {"n_steps": n, "n_paths": n_paths, "c": c},
                       worst["bound"], worst["freq"], worst["se"],
                       all(r["ok"] for r in cells), cells)


def _verify_fuk_nagaev(cfg) -> BoundReport:
    n = cfg["n_steps"]
    n_paths = cfg["n_paths"]
    cells = []
    for fam_name, family in _families(cfg):
        b_n = n * family.second_moment_upper()
        batches = _batches(family, cfg, n, n_paths)
        for p in cfg["p_values"]:
            c_p = calibrated_constant("fuk_nagaev_c_p", int(p))
            m_np = n * family.abs_moment_upper(p)
            for u in cfg["x_over_sqrt_bn"]:
                x = u * math.sqrt(b_n)
                for delta in cfg["deltas"]:
                    bound = fuk_nagaev_bound(x, delta, p, b_n, m_np, c_p)
                    for batch in batches:
                        hits = int(np.count_nonzero(batch.final_sums >= x))
                        freq = hits / n_paths
                        se = sim.wilson_se(hits, n_paths)
                        cells.append({"family": fam_name, "policy": batch.policy.name,
                                      "p": p, "x": x, "delta": delta,
                                      "freq": freq, "se": se, "bound": bound,
                                      "ok": freq <= bound + SE_SLACK * se})
    worst = max(cells, key=lambda r: r["freq"] - r["bound"])
    return BoundReport("fuk_nagaev", {"n_steps": n, "n_paths": n_paths},
                       worst["bound"], worst["freq"], worst["se"],
                       all(r["ok"] for r in cells), cells)


def _verify_lower_bound(cfg) -> BoundReport:
    """Small-ball lower bound at b = 0: empirical lower capacity must exceed
    the exponential (the empirical min over policies over-estimates v, so a
    shortfall would flag a bug; the pass direction is >=)."""
    b = cfg["b"]
    delta = cfg["delta"]
    eps = cfg["epsilon"]
    cells = []
    for fam_name, family in _families(cfg):
        sigma_lo = math.sqrt(family.sigma_sq_bounds[0])
        policies = sim.policies_from_config(cfg.get("policies", "default"), family)
        for n in cfg["n_list"]:
            n_paths = int(cfg["paths_by_n"][str(n)])
            y_n = math.sqrt(2.0 * math.log(max(math.log(max(n, math.e)), math.e)))
            bound = lower_bound_exponent(b, sigma_lo, delta, y_n)
            scale = 1.0 / (y_n * math.sqrt(n))
            est = sim.estimate_lower_capacity(
                sim.event_scaled_ball(scale, b, eps), family, policies,
                n, n_paths, cfg["seed"])
            cells.append({"family": fam_name, "n": n, "y_n": y_n,
                          "freq": est.value, "se": est.se, "bound": bound,
                          "ok": est.value + SE_SLACK * est.se >= bound})
    worst = min(cells, key=lambda r: r["freq"] - r["bound"])
    return BoundReport("lower_bound",
                       {"b": b, "delta": delta, "epsilon": eps},
                       worst["bound"], worst["freq"], worst["se"],
                       all(r["ok"] for r in cells), cells)


def _verify_rosenthal_choquet(cfg) -> BoundReport:
    n = cfg["n_steps"]
    n_paths = cfg["n_paths"]
    cells = []
    for fam_name, family in _families(cfg):
        b_n = n * family.second_moment_upper()
        batches = _batches(family, cfg, n, n_paths)
        for p in cfg["p_values"]:
            c_p = calibrated_constant("rosenthal_choquet_c_p", int(p))
            per_step = [step_choquet_positive_pth(family, p)] * n
            rhs = rosenthal_choquet_bound(p, b_n, per_step, c_p)
            samples = [np.maximum(b.final_sums, 0.0) ** p for b in batches]
            lhs = empirical_choquet_upper(samples)
            # jackknife-free rough SE: spread of per-policy plug-in integrals
            per_pol = [float(np.mean(s)) for s in samples]
            se = float(np.std(per_pol) / math.sqrt(max(len(per_pol) - 1, 1))
                       + np.max([np.std(s) / math.sqrt(n_paths) for s in samples]))
            cells.append({"family": fam_name, "p": p, "lhs": lhs, "rhs": rhs,
                          "se": se, "ok": lhs <= rhs + SE_SLACK * se})
    worst = max(cells, key=lambda r: r["lhs"] / max(r["rhs"], 1e-300))
    return BoundReport("rosenthal_choquet", {"n_steps": n, "n_paths": n_paths},
                       worst["rhs"], worst["lhs"], worst["se"],
                       all(r["ok"] for r in cells), cells)


def _verify_rosenthal_moment(cfg) -> BoundReport:
    n = cfg["n_steps"]
    n_paths = cfg["n_paths"]
    variant = cfg.get("variant", "nd_max")
    cells = []
    for fam_name, family in _families(cfg):
        b_n = n * family.second_moment_upper()
        mu_lo, mu_hi = family.mean_bounds
        mean_terms = np.full(n, max(-mu_lo, 0.0) + max(mu_hi, 0.0))
        batches = _batches(family, cfg, n, n_paths)
        for p in cfg["p_values"]:
            c_p = calibrated_constant("rosenthal_moment_c_p", int(p))
            m_np = n * family.abs_moment_upper(p)
            bound = rosenthal_moment_bound(p, b_n, m_np, mean_terms, c_p, variant)
            per_pol = [float(np.mean(b.max_abs_sums ** p)) for b in batches]
            ses = [float(np.std(b.max_abs_sums ** p) / math.sqrt(n_paths))
                   for b in batches]
            j = int(np.argmax(per_pol))
            cells.append({"family": fam_name, "p": p, "empirical": per_pol[j],
                          "se": ses[j], "bound": bound,
                          "ok": per_pol[j] <= bound + SE_SLACK * ses[j]})
    worst = max(cells, key=lambda r: r["empirical"] / max(r["bound"], 1e-300))
    return BoundReport("rosenthal_moment",
                       {"n_steps": n, "n_paths": n_paths, "variant": variant},
                       worst["bound"], worst["empirical"], worst["se"],
                       all(r["ok"] for r in cells), cells)
