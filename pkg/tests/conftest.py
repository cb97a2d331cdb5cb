import numpy as np
import pytest

from subexpect.scenario import DiscreteDistribution, ScenarioSet


@pytest.fixture
def two_member_set():
    """The canonical two-member example used across the engine tests."""
    return ScenarioSet.from_members([
        DiscreteDistribution.from_atoms([(-1.0, 0.5), (1.0, 0.5)]),
        DiscreteDistribution.from_atoms([(-2.0, 0.5), (2.0, 0.5)]),
    ])


def random_set(rng: np.random.Generator, max_members=4, max_atoms=5,
               nonnegative=False) -> ScenarioSet:
    members = []
    for _ in range(rng.integers(1, max_members + 1)):
        k = int(rng.integers(1, max_atoms + 1))
        vals = rng.normal(0.0, 1.5, k)
        if nonnegative:
            vals = np.abs(vals)
        w = rng.random(k) + 1e-3
        w /= w.sum()
        w[-1] = 1.0 - w[:-1].sum()
        members.append(DiscreteDistribution(vals[:, None], w))
    return ScenarioSet(tuple(members))
