"""G-normal expectations via the nonlinear heat equation and a control tree.

The generator is G(a) = (upper_var * a+ - lower_var * a-) / 2.  The PDE
solver marches u_t = G(u_xx), u(0, x) = phi(x) with an explicit monotone
finite-difference scheme; the control tree evaluates the same expectation as
a dynamic program over per-step volatility choices on a recombining
trinomial lattice.  The two are mutual oracles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, NumericsError
from .functions import TestFunction, as_evaluator, as_test_function
from .kernels import get_backend

#: stability margin: dt <= dx^2 / (upper_var * (1 + margin))
STABILITY_MARGIN = 0.1
#: half-width of the spatial domain in units of sigma_upper * sqrt(t)
DOMAIN_STDS = 8.0


@dataclass(frozen=True)
class GParams:
    """Variance interval [sigma_lower_sq, sigma_upper_sq] and mean interval."""

    sigma_lower_sq: float
    sigma_upper_sq: float
    mu_lower: float = 0.0
    mu_upper: float = 0.0

    def __post_init__(self):
        if not (0.0 <= self.sigma_lower_sq <= self.sigma_upper_sq < math.inf):
            raise ConfigurationError(
                "need 0 <= sigma_lower_sq <= sigma_upper_sq < inf, got "
                f"[{self.sigma_lower_sq}, {self.sigma_upper_sq}]"
            )
        if not self.mu_lower <= self.mu_upper:
            raise ConfigurationError("need mu_lower <= mu_upper")

    @property
    def sigma_lower(self) -> float:
        return math.sqrt(self.sigma_lower_sq)

    @property
    def sigma_upper(self) -> float:
        return math.sqrt(self.sigma_upper_sq)


def g_function(alpha, params: GParams):
    """G(a) = (upper_var * a+ - lower_var * a-) / 2, vectorized in a."""
    a = np.asarray(alpha, dtype=float)
    out = 0.5 * (params.sigma_upper_sq * np.maximum(a, 0.0)
                 + params.sigma_lower_sq * np.minimum(a, 0.0))
    return float(out) if np.ndim(alpha) == 0 else out


def mean_g_function(alpha, params: GParams):
    """First-order envelope mu_upper * a+ - mu_lower * a- (WLLN generator)."""
    a = np.asarray(alpha, dtype=float)
    out = (params.mu_upper * np.maximum(a, 0.0)
           + params.mu_lower * np.minimum(a, 0.0))
    return float(out) if np.ndim(alpha) == 0 else out


@dataclass(frozen=True)
class PdeGrid:
    x_min: float
    x_max: float
    nx: int
    t_horizon: float
    nt: int

    def __post_init__(self):
        if not self.x_min < self.x_max:
            raise ConfigurationError("x_min must be < x_max")
        if self.nx < 3:
            raise ConfigurationError("nx must be >= 3")
        if self.nt < 1:
            raise ConfigurationError("nt must be >= 1")
        if self.t_horizon <= 0:
            raise ConfigurationError("t_horizon must be positive")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / (self.nx - 1)

    @property
    def dt(self) -> float:
        return self.t_horizon / self.nt

    @property
    def x(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.nx)


def stable_dt(dx: float, params: GParams, margin: float = STABILITY_MARGIN) -> float:
    """Largest stable/monotone time step for the explicit scheme."""
    if params.sigma_upper_sq == 0.0:
        return math.inf
    return dx * dx / (params.sigma_upper_sq * (1.0 + margin))


def auto_grid(phi, params: GParams, t_horizon: float = 1.0,
              nx: int = 2001) -> PdeGrid:
    """Symmetric grid wide enough that boundary influence is negligible.

    Half-width = max(8 sigma_upper sqrt(t), support_radius + 6 sigma_upper);
    at eight standard deviations the Gaussian mass outside is ~1e-15, far
    below the 1e-6 accuracy target of the evaluator.
    """
    tf = as_test_function(phi) if isinstance(phi, (TestFunction, str)) else None
    support = tf.support_radius if tf is not None else 0.0
    su = params.sigma_upper
    half = max(DOMAIN_STDS * su * math.sqrt(t_horizon), support + 6.0 * su)
    if half <= 0.0:  # degenerate sigma_upper = 0: any bracket of the origin works
        half = max(support, 1.0)
    if nx % 2 == 0:
        nx += 1  # keep the origin on-grid
    dx = 2.0 * half / (nx - 1)
    dt_max = stable_dt(dx, params)
    nt = 1 if math.isinf(dt_max) else max(1, math.ceil(t_horizon / dt_max))
    return PdeGrid(-half, half, nx, t_horizon, nt)


@dataclass(frozen=True)
class PdeSolution:
    grid: PdeGrid
    params: GParams
    times: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)  # (n_stored, nx)

    def value_at(self, x: float, t_index: int = -1) -> float:
        xs = self.grid.x
        row = self.values[t_index]
        if not xs[0] <= x <= xs[-1]:
            raise ConfigurationError(f"x={x} outside the grid")
        j = int(np.searchsorted(xs, x))
        if j == 0 or math.isclose(xs[j], x, rel_tol=0.0, abs_tol=1e-12 * self.grid.dx):
            return float(row[j])
        w = (x - xs[j - 1]) / (xs[j] - xs[j - 1])
        return float((1.0 - w) * row[j - 1] + w * row[j])

    def value_at_origin(self) -> float:
        return self.value_at(0.0)

    def terminal(self) -> np.ndarray:
        return self.values[-1]


def solve_g_heat(phi, params: GParams, grid: PdeGrid,
                 max_stored: int = 201, backend: str | None = None) -> PdeSolution:
    """March the initial-value G-heat problem on ``grid``.

    The diffusion coefficient at each node follows the sign of the discrete
    second difference (upper variance on convex nodes, lower on concave),
    which is the monotone scheme for this generator.  Boundary nodes keep
    their initial value; the domain must be wide enough for that to be
    irrelevant (see auto_grid).  Time slices are stored on an evenly thinned
    schedule including 0 and t_horizon.
    """
    dt_max = stable_dt(grid.dx, params)
    if grid.dt > dt_max * (1.0 + 1e-12):
        raise ConfigurationError(
            f"unstable grid: dt={grid.dt:.3e} exceeds the monotone limit "
            f"{dt_max:.3e}; increase nt or coarsen dx"
        )
    u0 = np.asarray(as_evaluator(phi)(grid.x), dtype=float)
    if u0.shape != (grid.nx,) or not np.all(np.isfinite(u0)):
        raise NumericsError("initial condition not finite on the grid")
    n_stored = min(grid.nt + 1, max_stored)
    store_at = np.unique(np.linspace(0, grid.nt, n_stored).round().astype(np.int64))
    out = np.empty((store_at.shape[0], grid.nx))
    kern = get_backend(backend)
    kern.gheat_march(u0.copy(), grid.dt / grid.dx ** 2,
                     params.sigma_lower_sq, params.sigma_upper_sq,
                     grid.nt, store_at, out)
    if not np.all(np.isfinite(out)):
        bad = int(np.argmax(~np.all(np.isfinite(out), axis=1)))
        raise NumericsError(
            f"solution lost finiteness near step {int(store_at[bad])}"
        )
    return PdeSolution(grid, params, store_at * grid.dt, out)


def gnormal_expect(phi, params: GParams, nx: int = 2001,
                   t_horizon: float = 1.0, max_growth: int = 2,
                   backend: str | None = None) -> float:
    """E_tilde[phi(xi)] for xi ~ N(0, [lower_var, upper_var]) at the origin."""
    tf = as_test_function(phi)
    if tf.growth_order > max_growth:
        raise ConfigurationError(
            f"{tf.tag!r} grows like |x|^{tf.growth_order}, beyond the moment "
            f"order {max_growth} this evaluation is entitled to"
        )
    grid = auto_grid(tf, params, t_horizon, nx)
    return solve_g_heat(tf, params, grid, backend=backend).value_at_origin()


@dataclass(frozen=True)
class ControlTree:
    depth: int
    vol_choices: tuple
    t_horizon: float
    value: float


def control_tree(phi, params: GParams, depth: int, n_vol_choices: int = 2,
                 t_horizon: float = 1.0, backend: str | None = None) -> ControlTree:
    """Backward induction over adapted volatility choices on a trinomial lattice.

    Space step h = sigma_upper * sqrt(3 dt) keeps all one-step transition
    probabilities valid.  The one-step objective is linear in the chosen
    variance, so interior choices between the endpoints are never optimal;
    n_vol_choices >= 2 is accepted but only the endpoints matter.
    """
    if depth < 1:
        raise ConfigurationError("depth must be >= 1")
    if n_vol_choices < 2:
        raise ConfigurationError("need at least the two endpoint choices")
    fv = as_evaluator(phi)
    choices = tuple(np.sqrt(np.linspace(params.sigma_lower_sq,
                                        params.sigma_upper_sq, n_vol_choices)))
    if params.sigma_upper_sq == 0.0:
        return ControlTree(depth, choices, t_horizon, float(fv(np.zeros(1))[0]))
    dt = t_horizon / depth
    h = params.sigma_upper * math.sqrt(3.0 * dt)
    x = (np.arange(2 * depth + 1) - depth) * h
    v = np.asarray(fv(x), dtype=float)
    if not np.all(np.isfinite(v)):
        raise NumericsError("terminal values not finite on the lattice")
    q_hi = 1.0 / 6.0  # sigma_upper_sq * dt / (2 h^2)
    q_lo = params.sigma_lower_sq / (6.0 * params.sigma_upper_sq)
    kern = get_backend(backend)
    value = float(kern.tree_backward(v.copy(), depth, q_lo, q_hi))
    return ControlTree(depth, choices, t_horizon, value)


def control_tree_value(phi, params: GParams, depth: int,
                       n_vol_choices: int = 2, t_horizon: float = 1.0,
                       backend: str | None = None) -> float:
    return control_tree(phi, params, depth, n_vol_choices, t_horizon,
                        backend=backend).value


def maximal_expect(phi, params: GParams, n_grid: int = 4097,
                   refine_iters: int = 80) -> float:
    """sup of phi over the mean interval [mu_lower, mu_upper].

    Dense grid scan followed by golden-section refinement on the bracketing
    neighborhood of the best grid point.
    """
    fv = as_evaluator(phi)
    lo, hi = params.mu_lower, params.mu_upper
    if lo == hi:
        return float(np.asarray(fv(np.array([lo])), dtype=float)[0])
    xs = np.linspace(lo, hi, n_grid)
    vals = np.asarray(fv(xs), dtype=float)
    j = int(np.argmax(vals))
    a = xs[max(j - 1, 0)]
    b = xs[min(j + 1, n_grid - 1)]
    best = float(vals[j])
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    c, d = b - invphi * (b - a), a + invphi * (b - a)
    fc = float(np.asarray(fv(np.array([c])), dtype=float)[0])
    fd = float(np.asarray(fv(np.array([d])), dtype=float)[0])
    for _ in range(refine_iters):
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = float(np.asarray(fv(np.array([c])), dtype=float)[0])
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = float(np.asarray(fv(np.array([d])), dtype=float)[0])
        best = max(best, fc, fd)
    return best


def gauss_hermite_expect(phi, sigma: float, n_nodes: int = 96) -> float:
    """Classical E[phi(sigma Z)], Z ~ N(0,1), by Gauss-Hermite quadrature.

    Independent oracle for the degenerate sigma_lower = sigma_upper case.
    Accurate for smooth phi; for kinked phi prefer dense_gaussian_expect.
    """
    nodes, weights = np.polynomial.hermite.hermgauss(n_nodes)
    fv = as_evaluator(phi)
    vals = np.asarray(fv(sigma * math.sqrt(2.0) * nodes), dtype=float)
    return float((weights * vals).sum() / math.sqrt(math.pi))


def dense_gaussian_expect(phi, sigma: float, half_width_stds: float = 10.0,
                          n_points: int = 200_001) -> float:
    """E[phi(sigma Z)] by trapezoid quadrature on a dense grid.

    Second independent classical oracle; robust to kinks in phi where
    Gauss-Hermite loses digits.
    """
    if sigma == 0.0:
        return float(np.asarray(as_evaluator(phi)(np.zeros(1)), dtype=float)[0])
    xs = np.linspace(-half_width_stds * sigma, half_width_stds * sigma, n_points)
    dens = np.exp(-0.5 * (xs / sigma) ** 2) / (sigma * math.sqrt(2.0 * math.pi))
    vals = np.asarray(as_evaluator(phi)(xs), dtype=float)
    return float(np.trapezoid(vals * dens, xs))


def convergence_table(phi, params: GParams, depths=(125, 250, 500, 1000, 2000),
                      nx_values=(251, 501, 1001, 2001), t_horizon: float = 1.0):
    """Joint-refinement log: |tree - PDE| along matched resolution ladders.

    Returns a list of dict rows; agreement is expected to tighten as both
    sides refine (validated empirically, no rate is claimed).
    """
    rows = []
    for depth, nx in zip(depths, list(nx_values) + [nx_values[-1]] *
                         max(0, len(depths) - len(nx_values))):
        tree = control_tree_value(phi, params, depth, t_horizon=t_horizon)
        pde = gnormal_expect(phi, params, nx=nx, t_horizon=t_horizon)
        rows.append({"depth": depth, "nx": nx, "tree": tree, "pde": pde,
                     "abs_diff": abs(tree - pde)})
    return rows
