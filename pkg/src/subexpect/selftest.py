"""Acceptance suite: one callable per criterion, shared by CLI and pytest.

Each criterion function returns a CriterionResult with the measured numbers
in ``details`` so a failure is diagnosable from the one-line report.  Sizes,
seeds, and tolerances are frozen here; tests must not loosen them.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from . import bounds, limits
from . import simulate as sim
from .functions import get as get_phi
from .gheat import GParams, control_tree_value, dense_gaussian_expect, gauss_hermite_expect, gnormal_expect
from .kernels import backend_name, set_workers
from .scenario import (
    DiscreteDistribution,
    ScenarioSet,
    choquet_integral,
    conjugate_expect,
    independent_product,
    lower_capacity,
    nested_expect,
    sublinear_expect,
    upper_capacity,
)

AXIOM_TOL = 1e-10
PRODUCT_TOL = 1e-10


@dataclass
class CriterionResult:
    index: int
    name: str
    passed: bool
    elapsed: float
    details: str

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] criterion {self.index}: {self.name} " \
               f"({self.elapsed:.1f}s) {self.details}"


def _timed(index, name, fn):
    t0 = time.time()
    passed, details = fn()
    return CriterionResult(index, name, passed, time.time() - t0, details)


# -- random scenario machinery (criterion 1) --------------------------------


def random_scenario_set(rng: np.random.Generator, max_members: int = 5,
                        max_atoms: int = 6) -> ScenarioSet:
    members = []
    for _ in range(rng.integers(1, max_members + 1)):
        k = int(rng.integers(1, max_atoms + 1))
        values = rng.normal(0.0, 2.0, k)
        w = rng.random(k) + 1e-3
        w = w / w.sum()
        w[-1] = 1.0 - w[:-1].sum()  # exact unit mass
        members.append(DiscreteDistribution(values[:, None], w))
    return ScenarioSet(tuple(members))


def _random_poly(rng):
    a, b, c, x0 = rng.normal(0.0, 1.0, 4)
    return lambda x, a=a, b=b, c=c, x0=x0: a * x + b * x * x + c * np.abs(x - x0)


def criterion_1_axioms(n_sets: int = 1000, seed: int = 101) -> CriterionResult:
    def run():
        rng = np.random.default_rng(seed)
        worst = 0.0
        for _ in range(n_sets):
            s = random_scenario_set(rng)
            f = _random_poly(rng)
            g = _random_poly(rng)
            c = float(rng.normal(0.0, 3.0))
            lam = float(rng.random() * 3.0)
            ef, eg = sublinear_expect(s, f), sublinear_expect(s, g)
            t1, t2 = sorted(rng.normal(0.0, 2.0, 2))
            ea = lambda x, t=t1: x >= t
            eb = lambda x, t=t2: x <= t
            union = lambda x: ea(x) | eb(x)
            checks = [
                # (a) monotonicity via a nonnegative bump
                sublinear_expect(s, lambda x: f(x) + np.abs(g(x))) - ef,
                # (b) constant preserving
                AXIOM_TOL - abs(sublinear_expect(s, lambda x: np.full_like(x, c)) - c),
                # (c) sub-additivity
                ef + eg - sublinear_expect(s, lambda x: f(x) + g(x)),
                # (d) positive homogeneity
                AXIOM_TOL - abs(sublinear_expect(s, lambda x: lam * f(x)) - lam * ef),
                # conjugate ordering and cash translation
                ef - conjugate_expect(s, f),
                AXIOM_TOL - abs(sublinear_expect(s, lambda x: f(x) + c) - (ef + c)),
                # Eq. (1.4): v(A u B) <= v(A) + V(B), conj[f+g] <= conj[f] + E[g]
                lower_capacity(s, ea) + upper_capacity(s, eb)
                - lower_capacity(s, union),
                conjugate_expect(s, f) + eg
                - conjugate_expect(s, lambda x: f(x) + g(x)),
            ]
            worst = max(worst, max(-min(checks), 0.0))
            if min(checks) < -AXIOM_TOL:
                return False, f"axiom violation {worst:.2e} beyond {AXIOM_TOL}"
        return True, f"{n_sets} sets, worst slack breach {worst:.2e} <= {AXIOM_TOL}"
    return _timed(1, "sub-linear axioms (a)-(d), conjugacy, Eq. (1.4)", run)


def _grid_sets(values, weight_menu, max_members):
    """Small exhaustive universe of scenario sets over a value grid."""
    dists = []
    for w in weight_menu:
        k = len(w)
        for combo in np.ndindex(*(len(values),) * k):
            vals = np.array([values[i] for i in combo])
            if len(set(combo)) < k:
                continue
            dists.append(DiscreteDistribution(vals[:, None], np.array(w)))
    sets = []
    for m in range(1, max_members + 1):
        for combo in np.ndindex(*(len(dists),) * m):
            if sorted(combo) != list(combo):
                continue
            sets.append(ScenarioSet(tuple(dists[i] for i in combo)))
    return sets


def criterion_2_products(seed: int = 202) -> CriterionResult:
    def run():
        rng = np.random.default_rng(seed)
        sets = _grid_sets(values=(0.0, 0.5, 2.0), weight_menu=((1.0,), (0.5, 0.5)),
                          max_members=2)
        # top up with random nonnegative sets up to 4 members x 5 atoms
        for _ in range(30):
            members = []
            for _m in range(rng.integers(1, 5)):
                k = int(rng.integers(1, 6))
                vals = np.abs(rng.normal(1.0, 1.0, k))
                w = rng.random(k) + 1e-3
                w /= w.sum()
                w[-1] = 1.0 - w[:-1].sum()
                members.append(DiscreteDistribution(vals[:, None], w))
            sets.append(ScenarioSet(tuple(members)))
        worst = 0.0
        count = 0
        prod_f = lambda p: p[:, 0] * p[:, 1]
        for sx in sets:
            for sy in sets:
                count += 1
                prod = independent_product(sx, sy)
                lhs_e = sublinear_expect(prod, prod_f)
                rhs_e = sublinear_expect(sx, lambda x: x) * sublinear_expect(sy, lambda y: y)
                lhs_c = conjugate_expect(prod, prod_f)
                rhs_c = conjugate_expect(sx, lambda x: x) * conjugate_expect(sy, lambda y: y)
                nested = nested_expect(sx, sy, prod_f)
                worst = max(worst, abs(lhs_e - rhs_e), abs(lhs_c - rhs_c),
                            abs(lhs_e - nested))
                if worst > PRODUCT_TOL:
                    return False, (f"product identity off by {worst:.2e} on pair "
                                   f"#{count}")
        return True, (f"{count} set pairs: E[XY]=E[X]E[Y] and conj. within "
                      f"{worst:.2e} <= {PRODUCT_TOL}")
    return _timed(2, "independence product identities Eq. (1.1)/(1.2)", run)


def criterion_3_gnormal() -> CriterionResult:
    def run():
        par = GParams(0.25, 1.0)
        errs = {}
        for t in (1.0, 2.0):
            errs[f"sq(t={t:g})"] = abs(gnormal_expect("sq", par, nx=1601,
                                                      t_horizon=t) - 1.0 * t)
            errs[f"neg_sq(t={t:g})"] = abs(gnormal_expect("neg_sq", par, nx=1601,
                                                          t_horizon=t) + 0.25 * t)
        pde = gnormal_expect("ramp", par, nx=2001)
        tree = control_tree_value("ramp", par, depth=2000)
        errs["tree_vs_pde"] = abs(pde - tree)
        # degenerate interval: Gauss-Hermite for the Lipschitz-smooth phi,
        # dense-grid quadrature where phi has kinks
        errs["quadrature[ramp]"] = abs(gauss_hermite_expect("ramp", 0.7)
                                       - gnormal_expect("ramp", GParams(0.49, 0.49),
                                                        nx=2001))
        errs["quadrature[abs_cap]"] = abs(dense_gaussian_expect("abs_cap", 0.7)
                                          - gnormal_expect("abs_cap",
                                                           GParams(0.49, 0.49),
                                                           nx=2001))
        ok = (errs["sq(t=1)"] <= 1e-3 and errs["neg_sq(t=1)"] <= 1e-3
              and errs["sq(t=2)"] <= 1e-3 and errs["neg_sq(t=2)"] <= 1e-3
              and errs["tree_vs_pde"] <= 1e-2
              and errs["quadrature[ramp]"] <= 1e-3
              and errs["quadrature[abs_cap]"] <= 1e-3)
        detail = " ".join(f"{k}={v:.2e}" for k, v in errs.items())
        return ok, detail
    return _timed(3, "G-normal PDE vs closed forms, tree, quadrature", run)


def criterion_4_kolmogorov() -> CriterionResult:
    def run():
        rep = bounds.verify_bound("kolmogorov")
        bad = [c for c in rep.cells if not c["ok"]]
        return rep.dominated, (f"{len(rep.cells)} cells, {len(bad)} violations; "
                               f"worst freq={rep.empirical_estimate:.4f} vs "
                               f"bound+max={rep.analytic_value:.4f}")
    return _timed(4, "Kolmogorov exponential bound dominance", run)


def criterion_5_chebyshev() -> CriterionResult:
    def run():
        rep = bounds.verify_bound("chebyshev")
        return rep.dominated, (f"{len(rep.cells)} cells; worst "
                               f"freq={rep.empirical_estimate:.4f} vs "
                               f"bound={rep.analytic_value:.4f}")
    return _timed(5, "Chebyshev-form lower-capacity dominance", run)


def criterion_6_lower_bound() -> CriterionResult:
    def run():
        rep = bounds.verify_bound("lower_bound")
        det = "; ".join(f"n={c['n']}: emp={c['freq']:.3f} >= {c['bound']:.3f}"
                        for c in rep.cells)
        return rep.dominated, det
    return _timed(6, "small-ball lower bound exceeded at b=0", run)


def criterion_7_clt() -> CriterionResult:
    def run():
        fam = sim.StepFamily.two_point((0.5, 1.0))
        paths = {100: 30_000, 1000: 30_000, 10_000: 20_000}
        ok = True
        parts = []
        for tag in ("ramp", "abs_cap"):
            tab = limits.clt_experiment(tag, fam, [100, 1000, 10_000], paths,
                                        seed=20160707)
            ok = ok and tab.monotone_within_2se and tab.final_error <= 0.03
            parts.append(f"{tag}: errs=" +
                         "/".join(f"{r['error']:.4f}" for r in tab.rows) +
                         f" monotone={tab.monotone_within_2se}")
        return ok, "; ".join(parts)
    return _timed(7, "CLT errors vs PDE nonincreasing, final <= 0.03", run)


def criterion_8_lil() -> CriterionResult:
    def run():
        ok = True
        parts = []
        configs = [
            ("pm1", sim.StepFamily.two_point((1.0,)),
             sim.AdversaryPolicy.constant(0, "const"), 20160808),
            ("var[0.25,1]", sim.StepFamily.two_point((0.5, 1.0)),
             sim.AdversaryPolicy.constant(1, "max-variance"), 20160809),
        ]
        for name, fam, pol, seed in configs:
            res = limits.lil_experiment(fam, pol, n_max=1_000_000, n_paths=200,
                                        seed=seed)
            v = res.verdicts
            this_ok = (v["running_max_in_band_fraction"] >= 0.9
                       and v["running_max_never_above"])
            ok = ok and this_ok
            parts.append(f"{name}: in-band={v['running_max_in_band_fraction']:.2f} "
                         f"max={v['running_max_overall']:.3f} "
                         f"cluster(outer={v['cluster_outer_ok']},"
                         f"inner={v['cluster_inner_ok']})")
        return ok, "; ".join(parts) + " [asymptotic band check: see README]"
    return _timed(8, "LIL desk-scale running-max band", run)


def criterion_9_moment_classifier() -> CriterionResult:
    def run():
        cases = [
            (sim.StepFamily.two_point((1.0,)), "convergent"),
            (sim.StepFamily("gaussian", (sim.StepMember(0.0, 1.0),)), "convergent"),
            (sim.StepFamily("pareto", (sim.StepMember(0.0, 1.0),), tail_alpha=2.0),
             "divergent"),
        ]
        parts = []
        ok = True
        for fam, expect in cases:
            rep = limits.choquet_moment_check(fam)
            good = (rep["classification"] == expect and rep["sides_agree"]
                    and rep["matches_oracle"])
            ok = ok and good
            parts.append(f"{fam.profile}={rep['classification']}"
                         f"(agree={rep['sides_agree']})")
        return ok, "; ".join(parts)
    return _timed(9, "Choquet moment condition classifier", run)


def criterion_10_determinism() -> CriterionResult:
    def run():
        fam = sim.StepFamily.two_point((0.5, 1.0))
        pols = sim.default_policy_family(fam)
        outputs = []
        for workers in (1, 4):
            if backend_name() == "numba":
                set_workers(workers)
            est = sim.estimate_upper_capacity(
                sim.event_final_at_least(30.0), fam, pols, 1000, 8192, seed=99)
            batch = sim.simulate_paths(fam, pols[2], 2000, 4096, seed=7)
            res = limits.lil_experiment(fam, pols[1], 20_000, 64, seed=5)
            outputs.append((
                tuple(f for _, f, _ in est.per_policy),
                batch.final_sums.tobytes(), batch.max_abs_sums.tobytes(),
                res.trace.running_max.tobytes(),
                res.trace.values.tobytes(),
            ))
        same = outputs[0] == outputs[1]
        return same, ("bit-identical aggregates across worker counts 1 and 4"
                      if same else "outputs differ across worker counts")
    return _timed(10, "bit-identical reproducibility across workers", run)


ALL_CRITERIA = [
    criterion_1_axioms,
    criterion_2_products,
    criterion_3_gnormal,
    criterion_4_kolmogorov,
    criterion_5_chebyshev,
    criterion_6_lower_bound,
    criterion_7_clt,
    criterion_8_lil,
    criterion_9_moment_classifier,
    criterion_10_determinism,
]


def run_quick() -> list[CriterionResult]:
    """Reduced-size smoke suite: axioms, PDE-vs-tree, Kolmogorov."""
    results = [criterion_1_axioms(n_sets=200)]

    def tree_check():
        par = GParams(0.25, 1.0)
        pde = gnormal_expect("ramp", par, nx=1001)
        tree = control_tree_value("ramp", par, depth=400)
        d = abs(pde - tree)
        return d <= 1e-2, f"|tree(400) - pde| = {d:.2e} <= 1e-2"
    results.append(_timed(3, "G-normal PDE vs tree (quick)", tree_check))

    def kolmo_quick():
        rep = bounds.verify_bound("kolmogorov", {"n_paths": 20_000,
                                                 "families": ["two_point_var"]})
        return rep.dominated, f"{len(rep.cells)} cells all dominated"
    results.append(_timed(4, "Kolmogorov bound (quick)", kolmo_quick))
    return results


def run_all() -> list[CriterionResult]:
    return [fn() for fn in ALL_CRITERIA]
