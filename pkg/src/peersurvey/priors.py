"""Population priors: exchangeable bit/cost generation and derived quantities.

A prior couples three ingredients: a mixing distribution over a latent
Bernoulli parameter theta, conditional on which agents' bits are i.i.d., and
one cost distribution per bit value.  From it we derive the posterior
predictive bit probabilities p0/p1, their noisy clamped counterparts used by
the payment rule, and the participation cost threshold tau used to size the
truthfulness premium.
"""

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri
from scipy.stats import binom

from ._util import as_generator, check_seed, chunk_sizes, subseed_rng
from .privacy import NoiseSpec, noise_draw

FAMILIES = ("conditional_iid", "independent_bits")

DEFAULT_POSTERIOR_SAMPLES = 1_000_000

# Resolution of the cost-axis grid searched for tau, and the quantile used to
# cap the search range.
COST_GRID = 1e-4
COST_SEARCH_QUANTILE = 1.0 - 1e-6


class CostSearchError(ValueError):
    """The threshold condition is not met anywhere within the search cap."""


# ---------------------------------------------------------------------------
# Cost distributions.  All sampling goes through the quantile function so a
# single uniform stream drives every family identically.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Uniform:
    lo: float
    hi: float

    kind = "uniform"

    def __post_init__(self):
        if not 0.0 <= self.lo <= self.hi:
            raise ValueError(f"uniform needs 0 <= lo <= hi, got [{self.lo}, {self.hi}]")

    def cdf(self, x):
        x = np.asarray(x, dtype=np.float64)
        if self.hi == self.lo:
            return np.where(x >= self.lo, 1.0, 0.0)
        return np.clip((x - self.lo) / (self.hi - self.lo), 0.0, 1.0)

    def quantile(self, q):
        return self.lo + np.asarray(q, dtype=np.float64) * (self.hi - self.lo)

    def to_dict(self):
        return {"kind": "uniform", "lo": self.lo, "hi": self.hi}


@dataclass(frozen=True)
class PointMass:
    value: float

    kind = "point_mass"

    def __post_init__(self):
        if self.value < 0.0:
            raise ValueError(f"cost point mass must be nonnegative, got {self.value}")

    def cdf(self, x):
        return np.where(np.asarray(x, dtype=np.float64) >= self.value, 1.0, 0.0)

    def quantile(self, q):
        return np.full_like(np.asarray(q, dtype=np.float64), self.value)

    def to_dict(self):
        return {"kind": "point_mass", "value": self.value}


@dataclass(frozen=True)
class Exponential:
    rate: float

    kind = "exponential"

    def __post_init__(self):
        if not self.rate > 0.0:
            raise ValueError(f"exponential rate must be positive, got {self.rate}")

    def cdf(self, x):
        x = np.asarray(x, dtype=np.float64)
        return np.where(x > 0.0, -np.expm1(-self.rate * x), 0.0)

    def quantile(self, q):
        return -np.log1p(-np.asarray(q, dtype=np.float64)) / self.rate

    def to_dict(self):
        return {"kind": "exponential", "rate": self.rate}


@dataclass(frozen=True)
class TruncatedLogNormal:
    """Log-normal conditioned on not exceeding `cap`."""

    mu: float
    sigma: float
    cap: float

    kind = "log_normal"

    def __post_init__(self):
        if not self.sigma > 0.0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if not self.cap > 0.0:
            raise ValueError(f"cap must be positive, got {self.cap}")

    def _z_cap(self):
        return (math.log(self.cap) - self.mu) / self.sigma

    def cdf(self, x):
        x = np.asarray(x, dtype=np.float64)
        mass = ndtr(self._z_cap())
        with np.errstate(divide="ignore"):
            z = (np.log(np.maximum(x, np.finfo(np.float64).tiny)) - self.mu) / self.sigma
        val = np.where(x <= 0.0, 0.0, np.where(x >= self.cap, 1.0, ndtr(z) / mass))
        return val

    def quantile(self, q):
        mass = ndtr(self._z_cap())
        q = np.asarray(q, dtype=np.float64)
        return np.exp(self.mu + self.sigma * ndtri(np.clip(q, 0.0, 1.0) * mass))

    def to_dict(self):
        return {"kind": "log_normal", "mu": self.mu, "sigma": self.sigma, "cap": self.cap}


_COST_KINDS = {
    "uniform": lambda d: Uniform(lo=float(d["lo"]), hi=float(d["hi"])),
    "point_mass": lambda d: PointMass(value=float(d["value"])),
    "exponential": lambda d: Exponential(rate=float(d["rate"])),
    "log_normal": lambda d: TruncatedLogNormal(
        mu=float(d["mu"]), sigma=float(d["sigma"]), cap=float(d["cap"])
    ),
}


def cost_distribution_from_dict(d):
    if not isinstance(d, dict) or "kind" not in d:
        raise ValueError("cost distribution must be an object with a 'kind' key")
    kind = d["kind"]
    if kind not in _COST_KINDS:
        raise ValueError(f"unknown cost distribution kind {kind!r}")
    try:
        return _COST_KINDS[kind](d)
    except KeyError as exc:
        raise ValueError(f"cost distribution {kind!r} is missing key {exc}") from exc


# ---------------------------------------------------------------------------
# Mixing distributions over the latent Bernoulli parameter.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BetaMixing:
    a: float
    b: float

    kind = "beta"

    def __post_init__(self):
        if not (self.a > 0.0 and self.b > 0.0):
            raise ValueError(f"beta parameters must be positive, got ({self.a}, {self.b})")

    def to_dict(self):
        return {"kind": "beta", "a": self.a, "b": self.b}


@dataclass(frozen=True)
class AtomMixing:
    """Finite mixture of point masses: ((weight, theta), ...)."""

    atoms: tuple

    kind = "atoms"

    def __post_init__(self):
        atoms = tuple((float(w), float(t)) for w, t in self.atoms)
        if not atoms:
            raise ValueError("atom mixture needs at least one atom")
        total = sum(w for w, _ in atoms)
        if any(w <= 0.0 for w, _ in atoms):
            raise ValueError("atom weights must be positive")
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"atom weights must sum to 1, got {total}")
        if any(not 0.0 <= t <= 1.0 for _, t in atoms):
            raise ValueError("atom locations must lie in [0, 1]")
        object.__setattr__(self, "atoms", atoms)

    def to_dict(self):
        return {"kind": "atoms", "atoms": [[w, t] for w, t in self.atoms]}


@dataclass(frozen=True)
class PointMixing:
    theta: float

    kind = "point"

    def __post_init__(self):
        if not 0.0 <= self.theta <= 1.0:
            raise ValueError(f"theta must lie in [0, 1], got {self.theta}")

    def to_dict(self):
        return {"kind": "point", "theta": self.theta}


def _mixing_from_dict(d):
    if not isinstance(d, dict) or "kind" not in d:
        raise ValueError("mixing must be an object with a 'kind' key")
    kind = d["kind"]
    if kind == "beta":
        return BetaMixing(a=float(d["a"]), b=float(d["b"]))
    if kind == "atoms":
        return AtomMixing(atoms=tuple((w, t) for w, t in d["atoms"]))
    if kind == "point":
        return PointMixing(theta=float(d["theta"]))
    raise ValueError(f"unknown mixing kind {kind!r}")


# ---------------------------------------------------------------------------
# Prior specification and populations.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PriorSpec:
    """Joint prior over agent types (bit, cost).

    family "conditional_iid" draws theta from the mixing distribution once
    per population; "independent_bits" fixes theta to a constant (a
    degenerate case kept for negative tests).  Costs are drawn independently
    per agent from cost0 or cost1 according to the agent's bit.
    """

    family: str
    mixing: object
    cost0: object
    cost1: object

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"family must be one of {FAMILIES}, got {self.family!r}")
        if self.family == "independent_bits" and not isinstance(self.mixing, PointMixing):
            raise ValueError("independent_bits requires point mixing")

    # -- serialization ------------------------------------------------------

    def to_dict(self):
        return {
            "family": self.family,
            "mixing": self.mixing.to_dict(),
            "cost0": self.cost0.to_dict(),
            "cost1": self.cost1.to_dict(),
        }

    @classmethod
    def from_dict(cls, d):
        if not isinstance(d, dict):
            raise ValueError("prior must be an object")
        missing = [k for k in ("family", "mixing", "cost0", "cost1") if k not in d]
        if missing:
            raise ValueError(f"prior is missing keys: {', '.join(missing)}")
        return cls(
            family=d["family"],
            mixing=_mixing_from_dict(d["mixing"]),
            cost0=cost_distribution_from_dict(d["cost0"]),
            cost1=cost_distribution_from_dict(d["cost1"]),
        )

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))

    # -- latent-parameter helpers ------------------------------------------

    @property
    def is_degenerate(self):
        """True when the mixing distribution is a single point mass."""
        return isinstance(self.mixing, (PointMixing,)) or (
            isinstance(self.mixing, AtomMixing) and len(self.mixing.atoms) == 1
        )

    def theta_sample(self, rng, size=None):
        """Draw theta from the (unconditional) mixing distribution."""
        m = self.mixing
        if isinstance(m, BetaMixing):
            return rng.beta(m.a, m.b, size)
        if isinstance(m, PointMixing):
            return m.theta if size is None else np.full(size, m.theta)
        weights = np.array([w for w, _ in m.atoms])
        values = np.array([t for _, t in m.atoms])
        idx = rng.choice(len(values), size=size, p=weights)
        return values[idx]

    def posterior_theta_sample(self, bit, rng, size=None):
        """Draw theta from the mixing distribution conditioned on one bit."""
        if bit not in (0, 1):
            raise ValueError(f"bit must be 0 or 1, got {bit}")
        m = self.mixing
        if isinstance(m, BetaMixing):
            return rng.beta(m.a + (bit == 1), m.b + (bit == 0), size)
        if isinstance(m, PointMixing):
            return m.theta if size is None else np.full(size, m.theta)
        weights = np.array([w for w, _ in m.atoms])
        values = np.array([t for _, t in m.atoms])
        like = values if bit == 1 else 1.0 - values
        post = weights * like
        total = post.sum()
        if total <= 0.0:
            raise ValueError(f"conditioning on bit={bit} has zero prior probability")
        idx = rng.choice(len(values), size=size, p=post / total)
        return values[idx]


@dataclass(frozen=True)
class Population:
    """One sampled survey population: bits and costs, index-aligned."""

    bits: np.ndarray
    costs: np.ndarray

    def __post_init__(self):
        bits = np.asarray(self.bits, dtype=np.int8)
        costs = np.asarray(self.costs, dtype=np.float64)
        if bits.ndim != 1 or costs.shape != bits.shape:
            raise ValueError("bits and costs must be 1-d arrays of equal length")
        if not np.all((bits == 0) | (bits == 1)):
            raise ValueError("bits must be 0/1")
        if np.any(costs < 0.0):
            raise ValueError("costs must be nonnegative")
        bits.setflags(write=False)
        costs.setflags(write=False)
        object.__setattr__(self, "bits", bits)
        object.__setattr__(self, "costs", costs)

    @property
    def n(self):
        return self.bits.size

    def agents(self):
        """Iterate over (bit, cost) pairs in index order."""
        for b, c in zip(self.bits.tolist(), self.costs.tolist()):
            yield int(b), float(c)


# ---------------------------------------------------------------------------
# Posterior predictive bit probabilities.
# ---------------------------------------------------------------------------


def posterior_bit_prob(prior, bit, require_informative=False):
    """Closed-form Pr[peer's bit = 1 | own bit = `bit`].

    With Beta(a, b) mixing this is (a + 1) / (a + b + 1) conditioned on a
    one and a / (a + b + 1) conditioned on a zero.  For atom mixtures the
    posterior reweights atoms by their likelihood.  With
    `require_informative`, a degenerate (single point mass) mixing
    distribution is rejected because it forces p0 == p1.
    """
    if bit not in (0, 1):
        raise ValueError(f"bit must be 0 or 1, got {bit}")
    if require_informative and prior.is_degenerate:
        raise ValueError(
            "mixing distribution is a single point mass, so p0 == p1; "
            "the payment rule needs distinct predictions"
        )
    m = prior.mixing
    if isinstance(m, BetaMixing):
        if bit == 1:
            return (m.a + 1.0) / (m.a + m.b + 1.0)
        return m.a / (m.a + m.b + 1.0)
    if isinstance(m, PointMixing):
        return m.theta
    weights = np.array([w for w, _ in m.atoms])
    values = np.array([t for _, t in m.atoms])
    like = values if bit == 1 else 1.0 - values
    denom = float(np.sum(weights * like))
    if denom <= 0.0:
        raise ValueError(f"conditioning on bit={bit} has zero prior probability")
    return float(np.sum(weights * like * values) / denom)


def posterior_clamped_mean(
    prior,
    bit,
    n,
    epsilon,
    samples=DEFAULT_POSTERIOR_SAMPLES,
    seed=0,
    noise_disabled=False,
):
    """Monte Carlo mean of the clamped noisy leave-one-out estimate.

    Estimates E[clamp((K + X) / (n - 1))] where K counts ones among n - 1
    peers drawn from the posterior given one's own bit and X is Laplace
    noise of scale 1/epsilon (exactly zero when `noise_disabled`, a hook for
    deterministic tests).  This is the prediction target actually paid
    against, and differs from `posterior_bit_prob` by the noise and clamping
    bias; callers should treat the two as distinct quantities.
    """
    if n < 2:
        raise ValueError(f"n must be at least 2, got {n}")
    samples = int(samples)
    if samples < 1:
        raise ValueError("samples must be positive")
    noise = NoiseSpec(epsilon=epsilon, mode="disabled" if noise_disabled else "sample")
    seed = check_seed(seed)
    total = 0.0
    for chunk, size in chunk_sizes(samples, 1 << 19):
        rng = subseed_rng(seed, chunk)
        theta = prior.posterior_theta_sample(bit, rng, size)
        k = rng.binomial(n - 1, theta)
        x = noise_draw(noise, rng, size)
        total += float(np.sum(np.clip((k + x) / (n - 1), 0.0, 1.0)))
    return total / samples


def sample_population(prior, n, seed):
    """Draw one population of n agents; bit-identical for identical inputs."""
    if n < 1:
        raise ValueError(f"n must be positive, got {n}")
    rng = as_generator(seed)
    theta = prior.theta_sample(rng)
    bits = (rng.random(n) < theta).astype(np.int8)
    u = rng.random(n)
    costs = np.where(bits == 1, prior.cost1.quantile(u), prior.cost0.quantile(u))
    return Population(bits=bits, costs=costs)


# ---------------------------------------------------------------------------
# Participation cost threshold.
# ---------------------------------------------------------------------------


def _bit_marginal_cost_cdf(prior, bit, taus):
    """CDF of a peer's cost conditioned on one's own bit."""
    p_b = posterior_bit_prob(prior, bit)
    taus = np.asarray(taus, dtype=np.float64)
    return p_b * prior.cost1.cdf(taus) + (1.0 - p_b) * prior.cost0.cdf(taus)


def _mixture_quantile(prior, bit, q, cap):
    """Generalized inverse of the bit-conditional cost CDF at level q."""
    if prior.cost0 == prior.cost1:
        return float(np.asarray(prior.cost0.quantile(q)))
    lo, hi = 0.0, float(cap)
    if _bit_marginal_cost_cdf(prior, bit, hi) < q:
        raise CostSearchError(
            f"cost quantile at level {q} exceeds the search cap {cap}"
        )
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if _bit_marginal_cost_cdf(prior, bit, mid) >= q:
            hi = mid
        else:
            lo = mid
    # Snap to a point-mass atom when bisection lands next to one.
    for dist in (prior.cost0, prior.cost1):
        if isinstance(dist, PointMass) and abs(dist.value - hi) <= 1e-9:
            if _bit_marginal_cost_cdf(prior, bit, dist.value) >= q:
                return dist.value
    return hi


def cost_threshold_parts(prior, alpha, delta, n, trials=100_000, seed=0):
    """Compute (tau, tau_group, tau_marginal).

    tau_group is the smallest grid cost level such that, with probability at
    least 1 - delta over populations, at least (1 - alpha) * n agents have
    cost at or below it.  tau_marginal makes each bit-conditional marginal
    cost CDF reach 1 - alpha.  The threshold is their maximum.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    if n < 2:
        raise ValueError(f"n must be at least 2, got {n}")
    trials = int(trials)
    if trials < 1:
        raise ValueError("trials must be positive")

    cap = float(
        max(
            np.asarray(prior.cost0.quantile(COST_SEARCH_QUANTILE)),
            np.asarray(prior.cost1.quantile(COST_SEARCH_QUANTILE)),
        )
    )

    tau_marginal = max(
        _mixture_quantile(prior, 0, 1.0 - alpha, cap),
        _mixture_quantile(prior, 1, 1.0 - alpha, cap),
    )

    # Count threshold: at least (1 - alpha) * n agents must participate.
    need = math.ceil((1.0 - alpha) * n)
    equal_costs = prior.cost0 == prior.cost1
    if equal_costs:
        thetas = None
    else:
        # One shared theta sample keeps the search predicate monotone in tau.
        thetas = prior.theta_sample(subseed_rng(check_seed(seed), 0), trials)

    def group_prob(tau):
        if need <= 0:
            return 1.0
        if equal_costs:
            f = float(np.asarray(prior.cost0.cdf(tau)))
            return float(binom.sf(need - 1, n, f))
        g = thetas * np.asarray(prior.cost1.cdf(tau)) + (1.0 - thetas) * np.asarray(
            prior.cost0.cdf(tau)
        )
        return float(np.mean(binom.sf(need - 1, n, g)))

    # Grid points are k / 10000 so decimal costs land on exact grid values.
    per_unit = round(1.0 / COST_GRID)
    grid_hi = int(math.floor(cap * per_unit + 1e-9))
    grid_max = grid_hi / per_unit
    search_top = cap if cap > grid_max else grid_max
    if group_prob(search_top) < 1.0 - delta:
        raise CostSearchError(
            "participation threshold not reachable within the cost search cap "
            f"{cap}; the (1 - alpha) group quantile appears unbounded"
        )
    if group_prob(grid_max) < 1.0 - delta:
        tau_group = search_top
    else:
        lo, hi = -1, grid_hi  # grid index of the smallest passing tau
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if group_prob(mid / per_unit) >= 1.0 - delta:
                hi = mid
            else:
                lo = mid
        tau_group = hi / per_unit

    return max(tau_group, tau_marginal), tau_group, tau_marginal


def cost_threshold(prior, alpha, delta, n, trials=100_000, seed=0):
    """Participation cost threshold tau: see `cost_threshold_parts`."""
    return cost_threshold_parts(prior, alpha, delta, n, trials, seed)[0]
