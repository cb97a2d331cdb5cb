"""Tagged test functions with growth metadata.

Every operation that takes a "phi" accepts either a plain vectorized callable
or a :class:`TestFunction`.  Operations that must reason about growth (the
G-normal evaluator, the CLT experiment) require a TestFunction so the growth
order and far-field behaviour are available.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConfigurationError


@dataclass(frozen=True)
class TestFunction:
    """A named map R -> R (vectorized) with growth metadata.

    ``growth_order`` is the smallest m with |phi(x)| <= C(1+|x|^m);
    ``lipschitz_like`` marks globally Lipschitz (hence bounded-increment)
    functions; ``support_radius`` is a radius beyond which phi is affine
    (flat for bounded phi), used to size PDE domains.  0 means "no special
    structure beyond the growth bound".
    """

    tag: str
    evaluator: Callable[[np.ndarray], np.ndarray]
    growth_order: int
    lipschitz_like: bool
    support_radius: float = 0.0

    def __call__(self, x):
        return self.evaluator(np.asarray(x, dtype=float))


def smoothstep(u):
    """Quintic smoothstep: 0 below 0, 1 above 1, C^2 monotone ramp between."""
    u = np.clip(np.asarray(u, dtype=float), 0.0, 1.0)
    return u * u * u * (u * (6.0 * u - 15.0) + 10.0)


def smooth_indicator(x, epsilon):
    """Smooth ramp g with 1{x >= 1} <= g(x) <= 1{x > 1 - epsilon}.

    g is 0 for x <= 1 - epsilon, 1 for x >= 1, and a quintic smoothstep in
    between, so the sandwich holds exactly and g is monotone with bounded
    derivatives.
    """
    if not 0.0 < epsilon < 1.0:
        raise ConfigurationError(f"epsilon must lie in (0, 1), got {epsilon}")
    return smoothstep((np.asarray(x, dtype=float) - (1.0 - epsilon)) / epsilon)


def small_ball(epsilon: float, smoothing: float = 0.5) -> TestFunction:
    """Smooth bump equal to 1 on |x| <= eps(1-smoothing)/... and 0 for |x| >= eps.

    This is the smoothed indicator of the ball {|x| <= eps}: it equals
    1 - g(2|x|/eps) with g the smooth ramp, hence sits between
    1{|x| <= eps(1 - smoothing/2)} and 1{|x| < eps}.
    """

    def _eval(x, _eps=float(epsilon), _s=float(smoothing)):
        return 1.0 - smooth_indicator(2.0 * np.abs(x) / _eps, _s)

    return TestFunction(
        tag=f"ball[{epsilon:g}]",
        evaluator=_eval,
        growth_order=0,
        lipschitz_like=True,
        support_radius=float(epsilon),
    )


def scaled_input(phi: TestFunction, scale: float) -> TestFunction:
    """phi(. / scale) with metadata adjusted (support radius scales along)."""
    if scale <= 0:
        raise ConfigurationError("scale must be positive")

    def _eval(x, _f=phi.evaluator, _s=float(scale)):
        return _f(np.asarray(x, dtype=float) / _s)

    return TestFunction(
        tag=f"{phi.tag}/scale[{scale:g}]",
        evaluator=_eval,
        growth_order=phi.growth_order,
        lipschitz_like=phi.lipschitz_like,
        support_radius=phi.support_radius * scale,
    )


_REGISTRY: dict[str, TestFunction] = {}


def register(fn: TestFunction) -> TestFunction:
    _REGISTRY[fn.tag] = fn
    return fn


def get(tag: str) -> TestFunction:
    try:
        return _REGISTRY[tag]
    except KeyError:
        raise ConfigurationError(
            f"unknown test function {tag!r}; known: {sorted(_REGISTRY)}"
        ) from None


def tags() -> list[str]:
    return sorted(_REGISTRY)


register(TestFunction("identity", lambda x: x, 1, True))
register(TestFunction("abs", np.abs, 1, True))
register(TestFunction("neg_abs", lambda x: -np.abs(x), 1, True))
register(TestFunction("sq", lambda x: x * x, 2, False))
register(TestFunction("neg_sq", lambda x: -(x * x), 2, False))
# Bounded Lipschitz ramp: the workhorse phi for CLT / PDE-vs-tree checks.
register(TestFunction("ramp", lambda x: np.clip(x, -1.0, 1.0), 0, True, 1.0))
register(TestFunction("abs_cap", lambda x: np.minimum(np.abs(x), 2.0), 0, True, 2.0))
register(small_ball(2.0))      # tag ball[2]
register(small_ball(0.5))      # tag ball[0.5]


def as_evaluator(phi) -> Callable[[np.ndarray], np.ndarray]:
    """Accept a TestFunction, a registry tag, or a plain callable."""
    if isinstance(phi, TestFunction):
        return phi.evaluator
    if isinstance(phi, str):
        return get(phi).evaluator
    if callable(phi):
        return phi
    raise ConfigurationError(f"not a test function: {phi!r}")


def as_test_function(phi) -> TestFunction:
    if isinstance(phi, TestFunction):
        return phi
    if isinstance(phi, str):
        return get(phi)
    raise ConfigurationError(
        "this operation needs growth metadata: pass a TestFunction or registry tag"
    )
