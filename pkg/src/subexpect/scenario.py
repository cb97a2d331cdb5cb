"""Finite scenario sets realizing a sub-linear expectation.

A scenario set is a nonempty finite family of discrete probability
distributions.  The sub-linear expectation of f is the maximum of the member
means of f, the conjugate expectation is the minimum, and the induced
upper/lower capacities evaluate events through member probabilities.  All
operations are exact up to double precision: no quadrature, no sampling.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ConfigurationError, NumericsError
from .functions import as_evaluator

#: equality tolerance for exact engine identities
ENGINE_TOL = 1e-12
#: slack for derived inequalities (Hoelder, ND products, Eq. (1.4) style)
INEQ_SLACK = 1e-10

_PRODUCT_MEMBER_CAP = 200_000


@dataclass(frozen=True)
class DiscreteDistribution:
    """Finitely supported distribution; values shape (n_atoms, dim)."""

    values: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        values = np.atleast_2d(np.asarray(self.values, dtype=float))
        weights = np.asarray(self.weights, dtype=float).ravel()
        if values.shape[0] != weights.shape[0]:
            raise ConfigurationError("values and weights length mismatch")
        if values.shape[0] == 0:
            raise ConfigurationError("a distribution needs at least one atom")
        if not np.all(np.isfinite(values)):
            raise ConfigurationError("atom values must be finite")
        if np.any(weights < -ENGINE_TOL):
            raise ConfigurationError("negative atom weight")
        if abs(weights.sum() - 1.0) > ENGINE_TOL:
            raise ConfigurationError(
                f"weights sum to {weights.sum()!r}, expected 1 within {ENGINE_TOL}"
            )
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "weights", np.maximum(weights, 0.0))

    @classmethod
    def from_atoms(cls, atoms: Iterable[tuple]) -> "DiscreteDistribution":
        """Build from [(value, weight), ...]; value may be scalar or vector."""
        atoms = list(atoms)
        if not atoms:
            raise ConfigurationError("a distribution needs at least one atom")
        values = np.array([np.atleast_1d(v) for v, _ in atoms], dtype=float)
        weights = np.array([w for _, w in atoms], dtype=float)
        return cls(values, weights)

    @classmethod
    def point_mass(cls, value) -> "DiscreteDistribution":
        return cls.from_atoms([(value, 1.0)])

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def _feval(self, f) -> np.ndarray:
        fv = as_evaluator(f)
        x = self.values[:, 0] if self.dim == 1 else self.values
        out = np.asarray(fv(x), dtype=float).ravel()
        if out.shape[0] != self.values.shape[0]:
            raise ConfigurationError(
                "evaluator must map the atom array to one value per atom"
            )
        if not np.all(np.isfinite(out)):
            raise NumericsError("test function produced non-finite atom image")
        return out

    def expectation(self, f) -> float:
        return float(self._feval(f) @ self.weights)

    def probability(self, event) -> float:
        mask = self._event_mask(event)
        return float(self.weights[mask].sum())

    def _event_mask(self, event) -> np.ndarray:
        x = self.values[:, 0] if self.dim == 1 else self.values
        mask = np.asarray(event(x), dtype=bool).ravel()
        if mask.shape[0] != self.values.shape[0]:
            raise ConfigurationError("event must be decidable per atom")
        return mask


@dataclass(frozen=True)
class ScenarioSet:
    """Nonempty family of same-dimension discrete distributions."""

    members: tuple

    def __post_init__(self):
        members = tuple(self.members)
        if not members:
            raise ConfigurationError("scenario set must be nonempty")
        dims = {m.dim for m in members}
        if len(dims) != 1:
            raise ConfigurationError(f"members mix dimensions: {sorted(dims)}")
        object.__setattr__(self, "members", members)

    @classmethod
    def from_members(cls, members: Sequence[DiscreteDistribution]) -> "ScenarioSet":
        return cls(tuple(members))

    @classmethod
    def singleton(cls, dist: DiscreteDistribution) -> "ScenarioSet":
        return cls((dist,))

    @property
    def dim(self) -> int:
        return self.members[0].dim

    @property
    def n_members(self) -> int:
        return len(self.members)

    def support(self) -> np.ndarray:
        """Union of member atoms, shape (n, dim), deduplicated."""
        allv = np.vstack([m.values for m in self.members])
        return np.unique(allv, axis=0)

    # -- JSON wire format: {"members":[{"atoms":[[v, w], ...]}, ...]} --

    def to_json(self) -> str:
        doc = {
            "members": [
                {
                    "atoms": [
                        [v[0] if len(v) == 1 else list(v), float(w)]
                        for v, w in zip(m.values.tolist(), m.weights.tolist())
                    ]
                }
                for m in self.members
            ]
        }
        return json.dumps(doc)

    @classmethod
    def from_json(cls, text: str) -> "ScenarioSet":
        doc = json.loads(text)
        if not isinstance(doc, dict) or "members" not in doc:
            raise ConfigurationError('scenario JSON must be {"members": [...]}')
        members = []
        for m in doc["members"]:
            members.append(DiscreteDistribution.from_atoms(
                [(v, w) for v, w in m["atoms"]]
            ))
        return cls(tuple(members))


def sublinear_expect(scenarios: ScenarioSet, f) -> float:
    """sup over members of the linear expectation of f."""
    return max(m.expectation(f) for m in scenarios.members)


def conjugate_expect(scenarios: ScenarioSet, f) -> float:
    """-E[-f]: the inf over members."""
    return min(m.expectation(f) for m in scenarios.members)


def argmax_member(scenarios: ScenarioSet, f) -> int:
    """Lowest member index attaining the sup (deterministic tie-break)."""
    vals = [m.expectation(f) for m in scenarios.members]
    return int(np.argmax(vals))


def upper_capacity(scenarios: ScenarioSet, event) -> float:
    """V(A) = max member probability of A (indicators are exact on atoms)."""
    return max(m.probability(event) for m in scenarios.members)


def lower_capacity(scenarios: ScenarioSet, event) -> float:
    """v(A) = 1 - V(A^c), which for finite member families is the min probability."""
    return min(m.probability(event) for m in scenarios.members)


@dataclass(frozen=True)
class CapacityPair:
    """The (upper, lower) capacities induced by a scenario set."""

    scenarios: ScenarioSet

    def upper(self, event) -> float:
        return upper_capacity(self.scenarios, event)

    def lower(self, event) -> float:
        return lower_capacity(self.scenarios, event)


def capacity_pair(scenarios: ScenarioSet) -> CapacityPair:
    return CapacityPair(scenarios)


def choquet_integral(scenarios: ScenarioSet, f, capacity: str = "upper") -> float:
    """Layer-cake integral of f against the upper or lower capacity.

    Exact for discrete carriers: the integrand t -> V(f >= t) is a step
    function with breakpoints at the distinct values of f on the union of
    atoms, so the two half-line integrals reduce to finite sums.
    """
    if capacity not in ("upper", "lower"):
        raise ConfigurationError("capacity must be 'upper' or 'lower'")
    per_member = []
    for m in scenarios.members:
        per_member.append((m._feval(f), m.weights))
    levels = np.unique(np.concatenate([fv for fv, _ in per_member]))

    def cap_at_least(t: float) -> float:
        probs = [w[fv >= t].sum() for fv, w in per_member]
        return max(probs) if capacity == "upper" else min(probs)

    def cap_above(t: float) -> float:
        probs = [w[fv > t].sum() for fv, w in per_member]
        return max(probs) if capacity == "upper" else min(probs)

    total = 0.0
    # positive part: on (prev, lv] the event {f >= t} equals {f >= lv}
    pos = levels[levels > 0.0]
    prev = 0.0
    for lv in pos:
        total += (lv - prev) * cap_at_least(lv)
        prev = lv
    # negative part: on (lv, prev) the event {f >= t} equals {f > lv},
    # and below the smallest level the integrand V - 1 vanishes
    neg = levels[levels < 0.0][::-1]  # descending toward -inf
    prev = 0.0
    for lv in neg:
        total += (prev - lv) * (cap_above(lv) - 1.0)
        prev = lv
    return float(total)


def tail_integral(scenarios: ScenarioSet, f, upper_limit: float,
                  capacity: str = "upper") -> float:
    """integral over (0, c) of V(f > t) dt, exact for the discrete carrier."""
    if upper_limit <= 0:
        return 0.0
    per_member = [(m._feval(f), m.weights) for m in scenarios.members]
    levels = np.unique(np.concatenate([fv for fv, _ in per_member]))
    breaks = np.concatenate([[0.0], levels[(levels > 0) & (levels < upper_limit)],
                             [upper_limit]])

    def cap_gt(t: float) -> float:
        probs = [w[fv > t].sum() for fv, w in per_member]
        return max(probs) if capacity == "upper" else min(probs)

    total = 0.0
    for a, b in zip(breaks[:-1], breaks[1:]):
        total += (b - a) * cap_gt(a)  # V(f > t) constant on (a, b)
    return float(total)


def independent_product(set_x: ScenarioSet, set_y: ScenarioSet) -> ScenarioSet:
    """Scenario set realizing "Y independent of X" as a nested supremum.

    Members are all pairs (P, g) of an X-member P and a map g from P's atoms
    to Y-members: the adversary may pick Y's distribution after seeing the
    realized x.  By construction E[phi(X, Y)] computed on the product equals
    E[ E[phi(x, Y)] at x = X ].
    """
    n_members = 0
    for p in set_x.members:
        n = set_y.n_members ** p.values.shape[0]
        n_members += n
        if n_members > _PRODUCT_MEMBER_CAP:
            raise ConfigurationError(
                "independent product would exceed the member cap; "
                "use nested_expect for large sets"
            )
    members = []
    for p in set_x.members:
        n_atoms = p.values.shape[0]
        for assignment in np.ndindex(*(set_y.n_members,) * n_atoms):
            values = []
            weights = []
            for i in range(n_atoms):
                q = set_y.members[assignment[i]]
                for j in range(q.values.shape[0]):
                    values.append(np.concatenate([p.values[i], q.values[j]]))
                    weights.append(p.weights[i] * q.weights[j])
            members.append(DiscreteDistribution(np.array(values), np.array(weights)))
    return ScenarioSet(tuple(members))


def nested_expect(set_x: ScenarioSet, set_y: ScenarioSet, f) -> float:
    """E[ E[phi(x, Y)] at x = X ] computed directly (no product materialized)."""
    fv = as_evaluator(f)
    best = -np.inf
    for p in set_x.members:
        total = 0.0
        for i in range(p.values.shape[0]):
            x = p.values[i]
            inner_best = -np.inf
            for q in set_y.members:
                pts = np.hstack([np.tile(x, (q.values.shape[0], 1)), q.values])
                vals = np.asarray(fv(pts[:, 0] if pts.shape[1] == 1 else pts),
                                  dtype=float).ravel()
                inner_best = max(inner_best, float(vals @ q.weights))
            total += p.weights[i] * inner_best
        best = max(best, total)
    return best


# Monotone test-function pairs for the negative-dependence product check.
# direction "inc": both coordinatewise nondecreasing; "dec": both nonincreasing
# with phi1 >= 0 (the sign condition of the definition is met by construction).
_ND_PAIRS = [
    ("inc", lambda x: x, lambda y: y),
    ("inc", lambda x: np.maximum(x, 0.0), lambda y: np.maximum(y, 0.0)),
    ("inc", lambda x: np.clip(x, -1.0, 1.0), lambda y: np.clip(y, -1.0, 1.0)),
    ("inc", lambda x: np.clip(x, -2.0, 2.0) + 2.0, lambda y: np.clip(y, -2.0, 2.0)),
    ("dec", lambda x: np.maximum(-x, 0.0), lambda y: np.maximum(-y, 0.0)),
    ("dec", lambda x: 1.0 - smoothclip(x), lambda y: 1.0 - smoothclip(y)),
]


def smoothclip(x):
    """Monotone [0, 1] ramp used in the ND pair registry."""
    return 0.5 * (np.clip(x, -1.0, 1.0) + 1.0)


def nd_product_check(joint: ScenarioSet, split: int,
                     pairs=None, slack: float = INEQ_SLACK) -> bool:
    """Check E[phi1(X) phi2(Y)] <= E[phi1(X)] E[phi2(Y)] over monotone pairs.

    ``split`` is the number of leading coordinates forming X; the rest form Y.
    Vector blocks are reduced by their coordinate sum, which preserves
    coordinatewise monotonicity of the registered scalar pairs.
    """
    if not 0 < split < joint.dim:
        raise ConfigurationError("split must cut the joint dimensions in two")
    if pairs is None:
        pairs = _ND_PAIRS

    def block(f, cols):
        def ev(pts):
            pts2 = np.atleast_2d(pts) if joint.dim > 1 else np.asarray(pts)[:, None]
            return f(pts2[:, cols].sum(axis=1))
        return ev

    xc = list(range(split))
    yc = list(range(split, joint.dim))
    for _direction, f1, f2 in pairs:
        g1 = block(f1, xc)
        g2 = block(f2, yc)
        lhs = sublinear_expect(joint, lambda p: g1(p) * g2(p))
        rhs = sublinear_expect(joint, g1) * sublinear_expect(joint, g2)
        if lhs > rhs + slack:
            return False
    return True


def holder_check(scenarios: ScenarioSet, f, g, p: float, q: float,
                 slack: float = INEQ_SLACK) -> bool:
    """E[|fg|] <= (E[|f|^p])^(1/p) (E[|g|^q])^(1/q), with conjugate p, q."""
    if p <= 1 or q <= 1 or abs(1.0 / p + 1.0 / q - 1.0) > ENGINE_TOL:
        raise ConfigurationError("need p, q > 1 with 1/p + 1/q = 1")
    fv, gv = as_evaluator(f), as_evaluator(g)
    lhs = sublinear_expect(scenarios, lambda x: np.abs(fv(x) * gv(x)))
    rf = sublinear_expect(scenarios, lambda x: np.abs(fv(x)) ** p) ** (1.0 / p)
    rg = sublinear_expect(scenarios, lambda x: np.abs(gv(x)) ** q) ** (1.0 / q)
    return lhs <= rf * rg + slack


def capacity_independence_probe(set_x: ScenarioSet, set_y: ScenarioSet,
                                x_events, y_events) -> list[dict]:
    """Compare V(X in A, Y in B) with V(X in A) V(Y in B) on given events.

    Expectation-level independence (the nested product built here) does not
    decide capacity-level independence either way; this probe only reports
    both sides, asserting nothing.
    """
    joint = independent_product(set_x, set_y)
    dx = set_x.dim
    out = []
    for ea in x_events:
        for eb in y_events:
            def joint_event(pts, _ea=ea, _eb=eb):
                pts2 = np.atleast_2d(pts)
                a = np.asarray(_ea(pts2[:, 0] if dx == 1 else pts2[:, :dx]))
                b = np.asarray(_eb(pts2[:, dx] if joint.dim - dx == 1
                                   else pts2[:, dx:]))
                return a & b
            out.append({
                "joint_upper": upper_capacity(joint, joint_event),
                "product_of_uppers": upper_capacity(set_x, ea)
                * upper_capacity(set_y, eb),
            })
    return out
