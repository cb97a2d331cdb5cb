"""subexpect: executable sub-linear expectation theory at desk scale.

Scenario envelopes for sub-linear expectations, capacities and Choquet
integrals; G-normal evaluation by PDE and control tree; adversarial path
simulation; exponential-inequality calculators with empirical verification;
and limit-theorem experiments (CLT, WLLN, LIL).
"""

from .errors import ConfigurationError, NumericsError, PolicyBoundsError
from .functions import TestFunction, smooth_indicator, small_ball
from .scenario import (
    DiscreteDistribution,
    ScenarioSet,
    CapacityPair,
    sublinear_expect,
    conjugate_expect,
    upper_capacity,
    lower_capacity,
    choquet_integral,
    independent_product,
    nested_expect,
    nd_product_check,
    holder_check,
)
from .gheat import (
    GParams,
    PdeGrid,
    PdeSolution,
    ControlTree,
    g_function,
    solve_g_heat,
    gnormal_expect,
    control_tree_value,
    maximal_expect,
)

__version__ = "0.1.0"
