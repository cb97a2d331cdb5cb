import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from subexpect.errors import ConfigurationError, NumericsError
from subexpect.functions import get as get_phi, smooth_indicator
from subexpect.scenario import (
    ENGINE_TOL,
    CapacityPair,
    DiscreteDistribution,
    ScenarioSet,
    argmax_member,
    capacity_independence_probe,
    choquet_integral,
    conjugate_expect,
    holder_check,
    independent_product,
    lower_capacity,
    nd_product_check,
    nested_expect,
    sublinear_expect,
    tail_integral,
    upper_capacity,
)

from conftest import random_set


# -- construction and validation --------------------------------------------


def test_distribution_validation():
    with pytest.raises(ConfigurationError):
        DiscreteDistribution.from_atoms([])
    with pytest.raises(ConfigurationError):
        DiscreteDistribution.from_atoms([(1.0, 0.6), (2.0, 0.6)])
    with pytest.raises(ConfigurationError):
        DiscreteDistribution.from_atoms([(np.inf, 1.0)])
    with pytest.raises(ConfigurationError):
        DiscreteDistribution.from_atoms([(0.0, -0.2), (1.0, 1.2)])


def test_scenario_set_validation():
    with pytest.raises(ConfigurationError):
        ScenarioSet(())
    d1 = DiscreteDistribution.point_mass(1.0)
    d2 = DiscreteDistribution.from_atoms([((1.0, 2.0), 1.0)])
    with pytest.raises(ConfigurationError):
        ScenarioSet((d1, d2))


def test_non_finite_image_raises(two_member_set):
    with pytest.raises(NumericsError):
        sublinear_expect(two_member_set, lambda x: np.where(x > 0, np.inf, 0.0))


# -- spec examples -----------------------------------------------------------


def test_point_mass_identity():
    s = ScenarioSet.singleton(DiscreteDistribution.point_mass(3.0))
    assert sublinear_expect(s, lambda x: x) == 3.0
    assert conjugate_expect(s, lambda x: x) == 3.0


def test_two_member_examples(two_member_set):
    s = two_member_set
    assert sublinear_expect(s, lambda x: x * x) == pytest.approx(4.0, abs=ENGINE_TOL)
    assert conjugate_expect(s, lambda x: x * x) == pytest.approx(1.0, abs=ENGINE_TOL)
    assert upper_capacity(s, lambda x: np.abs(x) >= 2) == 1.0
    assert lower_capacity(s, lambda x: np.abs(x) >= 2) == 0.0
    assert choquet_integral(s, np.abs, "upper") == pytest.approx(2.0, abs=ENGINE_TOL)
    assert choquet_integral(s, np.abs, "lower") == pytest.approx(1.0, abs=ENGINE_TOL)


def test_constant_preserving(two_member_set):
    for c in (-3.5, 0.0, 2.0):
        got = sublinear_expect(two_member_set, lambda x, c=c: np.full_like(x, c))
        assert got == pytest.approx(c, abs=ENGINE_TOL)


def test_argmax_member_lowest_index():
    d = DiscreteDistribution.point_mass(1.0)
    s = ScenarioSet((d, d, d))
    assert argmax_member(s, lambda x: x) == 0


def test_capacity_pair_basics(two_member_set):
    pair = CapacityPair(two_member_set)
    event = lambda x: x >= 0.5
    comp = lambda x: ~(x >= 0.5)
    assert pair.upper(lambda x: np.ones_like(x, dtype=bool)) == 1.0
    assert pair.upper(lambda x: np.zeros_like(x, dtype=bool)) == 0.0
    assert pair.lower(event) == pytest.approx(1.0 - pair.upper(comp), abs=ENGINE_TOL)


# -- axiom property tests ----------------------------------------------------


@st.composite
def scenario_sets(draw):
    n_members = draw(st.integers(1, 4))
    members = []
    for _ in range(n_members):
        k = draw(st.integers(1, 5))
        vals = draw(st.lists(st.floats(-20, 20), min_size=k, max_size=k))
        raw = draw(st.lists(st.floats(0.05, 1.0), min_size=k, max_size=k))
        w = np.asarray(raw) / np.sum(raw)
        w[-1] = 1.0 - w[:-1].sum()
        members.append(DiscreteDistribution(np.asarray(vals)[:, None], w))
    return ScenarioSet(tuple(members))


@settings(max_examples=150, deadline=None)
@given(scenario_sets(), st.floats(-5, 5), st.floats(0, 4))
def test_axioms_hold(s, c, lam):
    f = lambda x: np.clip(x, -3.0, 3.0) + 0.1 * x
    g = lambda x: np.abs(x) - x * 0.5
    ef, eg = sublinear_expect(s, f), sublinear_expect(s, g)
    # monotonicity
    assert sublinear_expect(s, lambda x: f(x) + np.abs(g(x))) >= ef - 1e-10
    # sub-additivity
    assert sublinear_expect(s, lambda x: f(x) + g(x)) <= ef + eg + 1e-10
    # positive homogeneity
    assert sublinear_expect(s, lambda x: lam * f(x)) == pytest.approx(
        lam * ef, abs=1e-9, rel=1e-9)
    # conjugate ordering and cash translation
    assert conjugate_expect(s, f) <= ef + 1e-12
    assert sublinear_expect(s, lambda x: f(x) + c) == pytest.approx(
        ef + c, abs=1e-9)
    # E[f - g] >= E[f] - E[g]
    assert sublinear_expect(s, lambda x: f(x) - g(x)) >= ef - eg - 1e-10


@settings(max_examples=100, deadline=None)
@given(scenario_sets(), st.floats(-2, 2), st.floats(-2, 2))
def test_capacity_properties(s, t1, t2):
    ea = lambda x: x >= t1
    eb = lambda x: x <= t2
    va, vb = upper_capacity(s, ea), upper_capacity(s, eb)
    assert 0.0 <= va <= 1.0
    # monotone: A subset of A-union-B
    v_union = upper_capacity(s, lambda x: ea(x) | eb(x))
    assert v_union >= max(va, vb) - 1e-12
    # sub-additive
    assert v_union <= va + vb + 1e-12
    # complement identity
    assert lower_capacity(s, ea) == pytest.approx(
        1.0 - upper_capacity(s, lambda x: ~ea(x)), abs=1e-12)
    # Eq. (1.4) mixed form
    assert (lower_capacity(s, lambda x: ea(x) | eb(x))
            <= lower_capacity(s, ea) + upper_capacity(s, eb) + 1e-10)


# -- Choquet integral --------------------------------------------------------


def brute_choquet(s, f, capacity, t_lo=-100.0, t_hi=100.0, n=400_001):
    """Riemann-sum oracle for the layer-cake integral."""
    cap = (upper_capacity if capacity == "upper" else lower_capacity)
    ts = np.linspace(t_lo, t_hi, n)
    dt = ts[1] - ts[0]
    vals = np.array([cap(s, lambda x, t=t: f(x) >= t) for t in ts])
    pos = vals[ts > 0].sum() * dt
    neg = (vals[ts <= 0] - 1.0).sum() * dt
    return pos + neg


@pytest.mark.parametrize("capacity", ["upper", "lower"])
def test_choquet_matches_brute_force(capacity):
    rng = np.random.default_rng(7)
    for _ in range(5):
        s = random_set(rng, max_members=3, max_atoms=4)
        f = lambda x: x  # identity keeps the level structure generic
        exact = choquet_integral(s, f, capacity)
        approx = brute_choquet(s, f, capacity, -8, 8, 160_001)
        assert exact == pytest.approx(approx, abs=2e-4)


def test_choquet_singleton_is_linear():
    rng = np.random.default_rng(11)
    for _ in range(10):
        s = ScenarioSet.singleton(random_set(rng, max_members=1).members[0])
        for f in (np.abs, lambda x: x, lambda x: x ** 2 - 1.0):
            assert choquet_integral(s, f, "upper") == pytest.approx(
                s.members[0].expectation(f), abs=1e-10)
            assert choquet_integral(s, f, "lower") == pytest.approx(
                s.members[0].expectation(f), abs=1e-10)


def test_truncated_expectation_below_tail_integral():
    # E[|X| wedge c] <= integral over (0,c) of V(|X| > x) dx
    rng = np.random.default_rng(13)
    for _ in range(20):
        s = random_set(rng)
        c = float(rng.random() * 4.0 + 0.1)
        lhs = sublinear_expect(s, lambda x: np.minimum(np.abs(x), c))
        rhs = tail_integral(s, np.abs, c, "upper")
        assert lhs <= rhs + 1e-10


def test_choquet_dominates_expectation(two_member_set):
    # E[|X|] <= C_V[|X|] for the discrete carrier
    assert sublinear_expect(two_member_set, np.abs) <= choquet_integral(
        two_member_set, np.abs, "upper") + 1e-12


# -- serialization -----------------------------------------------------------


def test_json_round_trip(two_member_set):
    text = two_member_set.to_json()
    doc = json.loads(text)
    assert set(doc) == {"members"}
    back = ScenarioSet.from_json(text)
    assert back.n_members == two_member_set.n_members
    for a, b in zip(two_member_set.members, back.members):
        np.testing.assert_array_equal(a.values, b.values)
        np.testing.assert_array_equal(a.weights, b.weights)


def test_json_rejects_garbage():
    with pytest.raises(ConfigurationError):
        ScenarioSet.from_json("[1, 2, 3]")


# -- products and independence ----------------------------------------------


def test_singleton_product_is_classical():
    sx = ScenarioSet.singleton(DiscreteDistribution.from_atoms(
        [(0.0, 0.5), (1.0, 0.5)]))
    sy = ScenarioSet.singleton(DiscreteDistribution.from_atoms(
        [(2.0, 0.25), (4.0, 0.75)]))
    prod = independent_product(sx, sy)
    assert prod.n_members == 1
    got = sublinear_expect(prod, lambda p: p[:, 0] * p[:, 1])
    assert got == pytest.approx(0.5 * (0.25 * 2 + 0.75 * 4), abs=1e-12)


def test_product_matches_nested(two_member_set):
    rng = np.random.default_rng(3)
    for _ in range(5):
        sx = random_set(rng, max_members=2, max_atoms=3)
        sy = random_set(rng, max_members=2, max_atoms=3)
        f = lambda p: np.abs(p[:, 0] + p[:, 1]) - 0.3 * p[:, 1]
        prod = independent_product(sx, sy)
        assert sublinear_expect(prod, f) == pytest.approx(
            nested_expect(sx, sy, f), abs=1e-10)


def test_product_identities_nonnegative():
    rng = np.random.default_rng(5)
    for _ in range(10):
        sx = random_set(rng, max_members=2, max_atoms=3, nonnegative=True)
        sy = random_set(rng, max_members=2, max_atoms=3, nonnegative=True)
        prod = independent_product(sx, sy)
        f = lambda p: p[:, 0] * p[:, 1]
        assert sublinear_expect(prod, f) == pytest.approx(
            sublinear_expect(sx, lambda x: x) * sublinear_expect(sy, lambda y: y),
            abs=1e-10)
        assert conjugate_expect(prod, f) == pytest.approx(
            conjugate_expect(sx, lambda x: x) * conjugate_expect(sy, lambda y: y),
            abs=1e-10)


def test_independence_order_asymmetry_witness():
    # Y independent to X differs from X independent to Y for phi = x y^2
    sx = ScenarioSet.singleton(DiscreteDistribution.from_atoms(
        [(-1.0, 0.5), (1.0, 0.5)]))
    sy = ScenarioSet.from_members([
        DiscreteDistribution.from_atoms([(-0.5, 0.5), (0.5, 0.5)]),
        DiscreteDistribution.from_atoms([(-1.0, 0.5), (1.0, 0.5)]),
    ])
    y_after_x = nested_expect(sx, sy, lambda p: p[:, 0] * p[:, 1] ** 2)
    x_after_y = nested_expect(sy, sx, lambda p: p[:, 1] * p[:, 0] ** 2)
    assert y_after_x == pytest.approx(0.375, abs=1e-12)
    assert x_after_y == pytest.approx(0.0, abs=1e-12)


def test_product_cap_guard():
    d = DiscreteDistribution.from_atoms([(float(k), 1.0 / 8) for k in range(8)])
    big = ScenarioSet(tuple([d] * 8))
    with pytest.raises(ConfigurationError):
        independent_product(big, big)


def test_capacity_independence_probe_shapes(two_member_set):
    out = capacity_independence_probe(
        two_member_set, two_member_set,
        [lambda x: x >= 0.0], [lambda y: y >= 1.0])
    assert len(out) == 1
    row = out[0]
    assert 0.0 <= row["joint_upper"] <= 1.0
    assert 0.0 <= row["product_of_uppers"] <= 1.0


# -- negative dependence and Hoelder ----------------------------------------


def _pair_joint(mode):
    sign = {"antithetic": -1.0, "comonotone": 1.0}[mode]
    members = []
    for sigma in (0.5, 1.0):
        vals = np.array([[-sigma, -sign * sigma], [sigma, sign * sigma]])
        members.append(DiscreteDistribution(vals, np.array([0.5, 0.5])))
    return ScenarioSet(tuple(members))


def test_nd_check_modes(two_member_set):
    ind = independent_product(two_member_set, two_member_set)
    assert nd_product_check(ind, split=1)
    assert nd_product_check(_pair_joint("antithetic"), split=1)
    assert not nd_product_check(_pair_joint("comonotone"), split=1)


def test_holder_inequality():
    rng = np.random.default_rng(17)
    for _ in range(25):
        s = random_set(rng)
        assert holder_check(s, lambda x: x, lambda x: np.abs(x) - 1.0, 2.0, 2.0)
        assert holder_check(s, lambda x: x, lambda x: x * 0.5 + 1.0, 3.0, 1.5)
    single = ScenarioSet.singleton(DiscreteDistribution.from_atoms(
        [(1.0, 0.25), (2.0, 0.75)]))
    assert holder_check(single, lambda x: x, lambda x: x, 2.0, 2.0)
    with pytest.raises(ConfigurationError):
        holder_check(single, np.abs, np.abs, 1.0, 2.0)


def test_smooth_indicator_sandwich_exact():
    xs = np.linspace(-1.0, 2.0, 20_001)
    for eps in (0.25, 0.5, 0.9):
        g = smooth_indicator(xs, eps)
        assert np.all(g >= (xs >= 1.0) - 0.0)
        assert np.all(g <= (xs > 1.0 - eps) + 0.0)
        assert np.all(np.diff(g) >= -1e-15)
    with pytest.raises(ConfigurationError):
        smooth_indicator(0.5, 1.5)


def test_registry_rejects_unknown_tag():
    with pytest.raises(ConfigurationError):
        get_phi("no_such_phi")
