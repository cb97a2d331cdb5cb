"""Adversarial path simulation under variance/mean uncertainty.

Per-step distributions are chosen by an adapted policy from a finite family
of members sharing one innovation profile; the policy sees only the running
history.  Capacities of path events are estimated from below (upper) or
above (lower) by optimizing over a finite policy family and reported with
Wilson-style standard errors.

Randomness is counter-based: fixed-size path blocks own disjoint Philox
counter ranges keyed by the seed, and draws are step-major, so results are
bit-identical across runs, worker counts, and internal chunk sizes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import stats as _stats

from .errors import ConfigurationError, PolicyBoundsError
from .kernels import get_backend
from .scenario import DiscreteDistribution, ScenarioSet, independent_product, nd_product_check

#: fixed path-block width; part of the output definition, never tied to workers
PATH_BLOCK = 1024
#: target innovations per generation chunk
CHUNK_CELLS = 4_000_000

_LAPLACE_B = 1.0 / math.sqrt(2.0)  # unit-variance Laplace scale

PROFILES = ("two_point", "gaussian", "truncated_gaussian", "laplace", "pareto")


@dataclass(frozen=True)
class StepMember:
    """One selectable step law: X = mean + sigma * Z with standardized Z."""

    mean: float
    sigma: float

    def __post_init__(self):
        if not (math.isfinite(self.mean) and math.isfinite(self.sigma)):
            raise ConfigurationError("member mean/sigma must be finite")
        if self.sigma < 0:
            raise ConfigurationError("member sigma must be >= 0")


@lru_cache(maxsize=64)
def _clipped_normal_sd(c: float) -> float:
    # sd of clip(Z, -c, c) for Z ~ N(0,1)
    F = _stats.norm.cdf(c)
    f = _stats.norm.pdf(c)
    var = (2.0 * F - 1.0) - 2.0 * c * f + 2.0 * c * c * (1.0 - F)
    return math.sqrt(var)


@dataclass(frozen=True)
class StepFamily:
    """Finite family of step laws sharing one innovation profile.

    For simulatable profiles Z is standardized (mean 0, variance 1), so each
    member has mean ``mean`` exactly and variance ``sigma**2`` exactly.  The
    ``pareto`` profile has infinite variance and is accepted only by the
    Choquet-moment machinery, never by the simulator.
    """

    profile: str
    members: tuple
    truncation: float | None = None   # clip level for truncated_gaussian
    tail_alpha: float | None = None   # exponent for pareto

    def __post_init__(self):
        if self.profile not in PROFILES:
            raise ConfigurationError(f"unknown profile {self.profile!r}")
        members = tuple(self.members)
        if not members:
            raise ConfigurationError("a step family needs at least one member")
        if self.profile == "truncated_gaussian":
            if not (self.truncation and self.truncation > 0):
                raise ConfigurationError("truncated_gaussian needs truncation > 0")
        if self.profile == "pareto":
            if not (self.tail_alpha and self.tail_alpha > 0):
                raise ConfigurationError("pareto needs tail_alpha > 0")
            if any(m.mean != 0.0 for m in members):
                raise ConfigurationError("pareto members must be centered")
        object.__setattr__(self, "members", members)

    @classmethod
    def two_point(cls, sigmas, means=(0.0,)) -> "StepFamily":
        """All (mean, sigma) combinations of +-sigma coin-flip steps."""
        return cls("two_point",
                   tuple(StepMember(m, s) for m in means for s in sigmas))

    @property
    def n_members(self) -> int:
        return len(self.members)

    @property
    def means(self) -> np.ndarray:
        return np.array([m.mean for m in self.members])

    @property
    def sigmas(self) -> np.ndarray:
        return np.array([m.sigma for m in self.members])

    @property
    def simulatable(self) -> bool:
        return self.profile != "pareto"

    @property
    def sigma_sq_bounds(self) -> tuple[float, float]:
        s = self.sigmas
        return float((s ** 2).min()), float((s ** 2).max())

    @property
    def mean_bounds(self) -> tuple[float, float]:
        m = self.means
        return float(m.min()), float(m.max())

    def second_moment(self, i: int) -> float:
        m = self.members[i]
        if self.profile == "pareto":
            return math.inf if (self.tail_alpha or 0) <= 2 else (
                m.sigma ** 2 * self.tail_alpha / (self.tail_alpha - 2.0))
        return m.mean ** 2 + m.sigma ** 2

    def second_moment_upper(self) -> float:
        return max(self.second_moment(i) for i in range(self.n_members))

    def second_moment_lower(self) -> float:
        return min(self.second_moment(i) for i in range(self.n_members))

    def abs_moment(self, i: int, p: float) -> float:
        """E|X_i|^p, analytic where clean, Gauss-Hermite otherwise."""
        m = self.members[i]
        if p < 0:
            raise ConfigurationError("p must be >= 0")
        if self.profile == "two_point":
            return 0.5 * (abs(m.mean + m.sigma) ** p + abs(m.mean - m.sigma) ** p)
        if self.profile == "pareto":
            a = self.tail_alpha
            if p >= a:
                return math.inf
            return m.sigma ** p * a / (a - p)
        if self.profile == "laplace" and m.mean == 0.0:
            return m.sigma ** p * math.gamma(p + 1.0) * _LAPLACE_B ** p
        nodes, weights = np.polynomial.hermite.hermgauss(160)
        z = math.sqrt(2.0) * nodes
        if self.profile == "truncated_gaussian":
            z = np.clip(z, -self.truncation, self.truncation) / _clipped_normal_sd(self.truncation)
        elif self.profile == "laplace":
            # |mean| != 0 Laplace via inverse-normal transform is not exact;
            # integrate the Laplace density on a dense grid instead
            zz = np.linspace(-40.0, 40.0, 400_001) * _LAPLACE_B
            dens = np.exp(-np.abs(zz) / _LAPLACE_B) / (2.0 * _LAPLACE_B)
            vals = np.abs(m.mean + m.sigma * zz) ** p * dens
            return float(np.trapezoid(vals, zz))
        vals = np.abs(m.mean + m.sigma * z) ** p
        return float((weights * vals).sum() / math.sqrt(math.pi))

    def abs_moment_upper(self, p: float) -> float:
        return max(self.abs_moment(i, p) for i in range(self.n_members))

    def member_tail(self, i: int, x) -> np.ndarray:
        """P(|X_i| > x) for a centered member; analytic per profile."""
        m = self.members[i]
        if m.mean != 0.0:
            raise ConfigurationError("tails are defined for centered members")
        x = np.asarray(x, dtype=float)
        if m.sigma == 0.0:
            return np.zeros_like(x)
        if self.profile == "two_point":
            return np.where(x < m.sigma, 1.0, 0.0)
        if self.profile == "gaussian":
            return 2.0 * _stats.norm.sf(x / m.sigma)
        if self.profile == "truncated_gaussian":
            sd = _clipped_normal_sd(self.truncation)
            t = x * sd / m.sigma
            return np.where(t < self.truncation, 2.0 * _stats.norm.sf(t), 0.0)
        if self.profile == "laplace":
            return np.exp(-np.maximum(x, 0.0) / (m.sigma * _LAPLACE_B))
        # pareto: support |X| >= sigma with P(|X| > x) = (x / sigma)^-alpha
        with np.errstate(divide="ignore"):
            return np.minimum(1.0, (np.maximum(x, 0.0) / m.sigma) ** (-self.tail_alpha))

    def upper_tail(self, x) -> np.ndarray:
        """sup over members of P(|X| > x): the capacity of the step tail."""
        tails = np.stack([self.member_tail(i, x) for i in range(self.n_members)])
        return tails.max(axis=0)

    def draw_innovations(self, rng: np.random.Generator, shape) -> np.ndarray:
        if self.profile == "two_point":
            return np.where(rng.random(shape) < 0.5, -1.0, 1.0)
        if self.profile == "gaussian":
            return rng.standard_normal(shape)
        if self.profile == "truncated_gaussian":
            c = self.truncation
            return np.clip(rng.standard_normal(shape), -c, c) / _clipped_normal_sd(c)
        if self.profile == "laplace":
            return rng.laplace(0.0, _LAPLACE_B, shape)
        raise ConfigurationError(f"profile {self.profile!r} is not simulatable")

    def member_distribution(self, i: int) -> DiscreteDistribution:
        if self.profile != "two_point":
            raise ConfigurationError("exact atoms exist only for two_point members")
        m = self.members[i]
        if m.sigma == 0.0:
            return DiscreteDistribution.point_mass(m.mean)
        return DiscreteDistribution.from_atoms(
            [(m.mean - m.sigma, 0.5), (m.mean + m.sigma, 0.5)]
        )

    def marginal_scenario_set(self) -> ScenarioSet:
        return ScenarioSet(tuple(self.member_distribution(i)
                                 for i in range(self.n_members)))


# ---------------------------------------------------------------------------
# policies
# ---------------------------------------------------------------------------

KIND_CODES = {"constant": 0, "threshold": 1, "randomized": 2,
              "scripted": 3, "feedback": 4}

_EMPTY_I = np.empty(0, dtype=np.int64)
_EMPTY_F = np.empty(0, dtype=np.float64)
_EMPTY_TABLE = np.empty((0, 0), dtype=np.int64)


@dataclass(frozen=True, eq=False)
class AdversaryPolicy:
    """Adapted rule selecting a family member index at every step.

    The rule may read only the observable history: the running sum and the
    step counter (plus its own uniform stream for randomized policies), which
    enforces adaptedness structurally.
    """

    kind: str
    name: str = ""
    member_index: int = 0
    cutoff: float = 0.0
    below_index: int = 0
    above_index: int = 0
    weights: tuple = ()
    script: tuple = ()
    table: np.ndarray | None = field(default=None, repr=False)
    x_scale: float = 1.0
    x_origin: float = 0.0
    x_bin_width: float = 1.0
    rng_stream_id: int = 1

    @classmethod
    def constant(cls, member_index: int, name: str = "") -> "AdversaryPolicy":
        return cls("constant", name or f"const[{member_index}]",
                   member_index=member_index)

    @classmethod
    def threshold(cls, cutoff: float, below_index: int, above_index: int,
                  name: str = "") -> "AdversaryPolicy":
        return cls("threshold",
                   name or f"thr[S<{cutoff:g}->{below_index},else->{above_index}]",
                   cutoff=cutoff, below_index=below_index, above_index=above_index)

    @classmethod
    def randomized(cls, weights, name: str = "") -> "AdversaryPolicy":
        w = tuple(float(x) for x in weights)
        return cls("randomized", name or f"mix{w}", weights=w)

    @classmethod
    def scripted(cls, script, name: str = "") -> "AdversaryPolicy":
        return cls("scripted", name or "scripted", script=tuple(int(i) for i in script))

    @classmethod
    def feedback(cls, table: np.ndarray, x_scale: float, x_origin: float,
                 x_bin_width: float, name: str = "") -> "AdversaryPolicy":
        return cls("feedback", name or "feedback",
                   table=np.ascontiguousarray(table, dtype=np.int64),
                   x_scale=x_scale, x_origin=x_origin, x_bin_width=x_bin_width)

    def compile(self, family: StepFamily):
        """Validate against the family and encode for the kernels."""
        nm = family.n_members

        def chk(i):
            if not 0 <= i < nm:
                raise PolicyBoundsError(
                    f"policy {self.name!r} selects member {i}, outside the "
                    f"family of {nm} members"
                )
            return int(i)

        kind = KIND_CODES[self.kind]
        ipar, fpar, table = _EMPTY_I, _EMPTY_F, _EMPTY_TABLE
        needs_u = False
        if self.kind == "constant":
            ipar = np.array([chk(self.member_index)], dtype=np.int64)
        elif self.kind == "threshold":
            ipar = np.array([chk(self.below_index), chk(self.above_index)],
                            dtype=np.int64)
            fpar = np.array([self.cutoff], dtype=np.float64)
        elif self.kind == "randomized":
            w = np.asarray(self.weights, dtype=np.float64)
            if w.shape[0] != nm or np.any(w < 0) or w.sum() <= 0:
                raise PolicyBoundsError(
                    "randomized policy needs one nonnegative weight per member"
                )
            fpar = np.cumsum(w / w.sum())
            needs_u = True
        elif self.kind == "scripted":
            if not self.script:
                raise PolicyBoundsError("scripted policy needs a nonempty script")
            ipar = np.array([chk(i) for i in self.script], dtype=np.int64)
        elif self.kind == "feedback":
            table = self.table
            if table is None or table.ndim != 2 or table.size == 0:
                raise PolicyBoundsError("feedback policy needs a 2-D index table")
            if table.min() < 0 or table.max() >= nm:
                raise PolicyBoundsError("feedback table indexes outside the family")
            if self.x_bin_width <= 0:
                raise PolicyBoundsError("feedback bin width must be positive")
            fpar = np.array([self.x_scale, self.x_origin, 1.0 / self.x_bin_width],
                            dtype=np.float64)
        else:
            raise ConfigurationError(f"unknown policy kind {self.kind!r}")
        return kind, ipar, fpar, table, needs_u


def default_policy_family(family: StepFamily, kind: str = "variance",
                          mixture_grid=(0.5,)) -> list[AdversaryPolicy]:
    """Constant endpoints, both threshold orientations, coarse mixtures.

    ``kind`` picks the member attribute that defines the endpoints: variance
    for CLT/bound experiments, mean for WLLN experiments.
    """
    key = (np.abs(family.sigmas) if kind == "variance" else family.means)
    lo = int(np.argmin(key))
    hi = int(np.argmax(key))
    pols = [AdversaryPolicy.constant(lo, f"const-{kind}-lo"),
            AdversaryPolicy.constant(hi, f"const-{kind}-hi")]
    if lo != hi:
        pols.append(AdversaryPolicy.threshold(0.0, hi, lo, f"thr-{kind}-hi-below"))
        pols.append(AdversaryPolicy.threshold(0.0, lo, hi, f"thr-{kind}-lo-below"))
        for w in mixture_grid:
            weights = np.zeros(family.n_members)
            weights[lo] = 1.0 - w
            weights[hi] = w
            pols.append(AdversaryPolicy.randomized(weights, f"mix-{kind}[{w:g}]"))
    return pols


# ---------------------------------------------------------------------------
# path batches
# ---------------------------------------------------------------------------


def _block_stream(seed: int, block: int, channel: int = 0) -> np.random.Generator:
    key = int(seed) & ((1 << 128) - 1)
    counter = (block << 128) + (channel << 64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


def _blocks(n_paths: int):
    for b in range(0, (n_paths + PATH_BLOCK - 1) // PATH_BLOCK):
        lo = b * PATH_BLOCK
        yield b, lo, min(lo + PATH_BLOCK, n_paths)


@dataclass
class PathBatch:
    """Streamed fold of one policy over n_paths sample paths."""

    family: StepFamily
    policy: AdversaryPolicy
    n_steps: int
    n_paths: int
    seed: int
    final_sums: np.ndarray
    max_steps: np.ndarray      # per path max_k X_k
    max_abs_sums: np.ndarray   # per path max_k |S_k|
    bn_realized: np.ndarray    # per path sum of chosen-member E[X^2]

    @property
    def b_n(self) -> float:
        """Family-level B_n = n * sup_member E[X^2] (what the bounds use)."""
        return self.n_steps * self.family.second_moment_upper()

    def m_np(self, p: float) -> float:
        return self.n_steps * self.family.abs_moment_upper(p)


def simulate_paths(family: StepFamily, policy: AdversaryPolicy, n_steps: int,
                   n_paths: int, seed: int, backend: str | None = None) -> PathBatch:
    """Deterministic Monte Carlo fold; see the module docstring for the RNG
    contract.  Raises PolicyBoundsError if the policy can select outside the
    family."""
    if n_steps < 1 or n_paths < 1:
        raise ConfigurationError("need n_steps >= 1 and n_paths >= 1")
    if not family.simulatable:
        raise ConfigurationError(f"profile {family.profile!r} is not simulatable")
    kind, ipar, fpar, table, needs_u = policy.compile(family)
    kern = get_backend(backend)
    means = family.means
    sigmas = family.sigmas
    em2 = np.array([family.second_moment(i) for i in range(family.n_members)])
    s = np.zeros(n_paths)
    maxstep = np.full(n_paths, -np.inf)
    maxabs = np.zeros(n_paths)
    bn = np.zeros(n_paths)
    for b, lo, hi in _blocks(n_paths):
        width = hi - lo
        g = _block_stream(seed, b, 0)
        gu = _block_stream(seed, b, policy.rng_stream_id) if needs_u else None
        chunk = max(1, min(n_steps, CHUNK_CELLS // width))
        k0 = 0
        while k0 < n_steps:
            c = min(chunk, n_steps - k0)
            z = np.ascontiguousarray(family.draw_innovations(g, (c, width)).T)
            u = (np.ascontiguousarray(gu.random((c, width)).T)
                 if needs_u else np.empty((0, 0)))
            kern.fold_final(z, u, k0, n_steps, means, sigmas, em2,
                            kind, ipar, fpar, table,
                            s[lo:hi], maxstep[lo:hi], maxabs[lo:hi], bn[lo:hi])
            k0 += c
    return PathBatch(family, policy, n_steps, n_paths, seed,
                     s, maxstep, maxabs, bn)


# ---------------------------------------------------------------------------
# capacity estimates
# ---------------------------------------------------------------------------


def wilson_se(hits: int, n: int, z: float = 1.0) -> float:
    """Wilson-adjusted standard error; strictly positive even at 0 or n hits."""
    if n < 1:
        raise ConfigurationError("need n >= 1")
    center = (hits + z * z / 2.0) / (n + z * z)
    return math.sqrt(center * (1.0 - center) / (n + z * z))


@dataclass(frozen=True)
class CapacityEstimate:
    value: float
    se: float
    side: str                   # "upper" or "lower"
    per_policy: tuple           # ((name, freq, se), ...) in policy order
    n_paths: int

    def as_dict(self) -> dict:
        return {"value": self.value, "se": self.se, "side": self.side,
                "n_paths": self.n_paths,
                "per_policy": [{"policy": n, "freq": f, "se": s}
                               for n, f, s in self.per_policy]}


def _estimate(event, family, policies, n_steps, n_paths, seed, side, backend):
    if not policies:
        raise ConfigurationError("need a nonempty policy family")
    rows = []
    for pol in policies:
        batch = simulate_paths(family, pol, n_steps, n_paths, seed, backend)
        hits = int(np.count_nonzero(event(batch)))
        rows.append((pol.name, hits / n_paths, wilson_se(hits, n_paths)))
    freqs = [r[1] for r in rows]
    j = int(np.argmax(freqs)) if side == "upper" else int(np.argmin(freqs))
    return CapacityEstimate(rows[j][1], rows[j][2], side, tuple(rows), n_paths)


def estimate_upper_capacity(event, family: StepFamily, policies, n_steps: int,
                            n_paths: int, seed: int,
                            backend: str | None = None) -> CapacityEstimate:
    """max over policies of the empirical frequency: a LOWER estimate of the
    upper capacity (the true V is a sup over all adapted scenarios)."""
    return _estimate(event, family, policies, n_steps, n_paths, seed,
                     "upper", backend)


def estimate_lower_capacity(event, family: StepFamily, policies, n_steps: int,
                            n_paths: int, seed: int,
                            backend: str | None = None) -> CapacityEstimate:
    """min over policies of the empirical frequency: an UPPER estimate of the
    lower capacity v(A) = 1 - V(A^c)."""
    return _estimate(event, family, policies, n_steps, n_paths, seed,
                     "lower", backend)


# event builders over PathBatch columns


def event_true():
    return lambda batch: np.ones(batch.n_paths, dtype=bool)


def event_final_at_least(x: float):
    return lambda batch: batch.final_sums >= x


def event_max_step_at_least(y: float):
    return lambda batch: batch.max_steps >= y


def event_scaled_ball(scale: float, center: float, eps: float):
    """|S_n * scale - center| <= eps."""
    return lambda batch: np.abs(batch.final_sums * scale - center) <= eps


def event_scaled_abs_at_most(scale: float, bound: float):
    return lambda batch: np.abs(batch.final_sums) * scale <= bound


# ---------------------------------------------------------------------------
# negative-dependence couplers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CoupledStepFamily:
    """Two-step coupling mechanism emitted by :func:`nd_coupler`."""

    base: StepFamily
    mode: str

    def two_step_joint(self) -> ScenarioSet:
        """Exact joint scenario set of (X1, X2) under the coupling."""
        if self.mode == "independent":
            marg = self.base.marginal_scenario_set()
            return independent_product(marg, marg)
        sign = -1.0 if self.mode == "antithetic" else 1.0
        members = []
        for i in range(self.base.n_members):
            d = self.base.member_distribution(i)
            vals = np.hstack([d.values, sign * d.values])
            members.append(DiscreteDistribution(vals, d.weights))
        return ScenarioSet(tuple(members))

    def passes_nd_check(self) -> bool:
        return nd_product_check(self.two_step_joint(), split=1)


def nd_coupler(family: StepFamily, correlation_mode: str) -> CoupledStepFamily:
    """Build a 2-step coupling; 'independent' and 'antithetic' are ND,
    'comonotone' is shipped as the negative control."""
    if correlation_mode not in ("independent", "antithetic", "comonotone"):
        raise ConfigurationError(f"unknown correlation mode {correlation_mode!r}")
    if family.profile != "two_point":
        raise ConfigurationError("couplers need exact atoms: use two_point")
    return CoupledStepFamily(family, correlation_mode)


# ---------------------------------------------------------------------------
# config parsing shared with the CLI
# ---------------------------------------------------------------------------


def family_from_config(cfg: dict) -> StepFamily:
    allowed = {"profile", "members", "truncation", "tail_alpha"}
    unknown = set(cfg) - allowed
    if unknown:
        raise ConfigurationError(f"unknown family keys: {sorted(unknown)}")
    members = tuple(StepMember(float(m.get("mean", 0.0)), float(m["sigma"]))
                    for m in cfg.get("members", ()))
    return StepFamily(cfg.get("profile", "two_point"), members,
                      truncation=cfg.get("truncation"),
                      tail_alpha=cfg.get("tail_alpha"))


def policy_from_config(cfg: dict) -> AdversaryPolicy:
    kind = cfg.get("kind")
    if kind == "constant":
        return AdversaryPolicy.constant(int(cfg["member"]), cfg.get("name", ""))
    if kind == "threshold":
        return AdversaryPolicy.threshold(float(cfg.get("cutoff", 0.0)),
                                         int(cfg["below"]), int(cfg["above"]),
                                         cfg.get("name", ""))
    if kind == "randomized":
        return AdversaryPolicy.randomized(cfg["weights"], cfg.get("name", ""))
    if kind == "scripted":
        return AdversaryPolicy.scripted(cfg["script"], cfg.get("name", ""))
    raise ConfigurationError(f"unknown policy kind {kind!r} in config")


def policies_from_config(cfg, family: StepFamily) -> list[AdversaryPolicy]:
    if cfg in (None, "default", {"kind": "default"}):
        return default_policy_family(family)
    if isinstance(cfg, dict) and cfg.get("kind") == "default":
        return default_policy_family(family, cfg.get("attribute", "variance"))
    return [policy_from_config(c) for c in cfg]
