"""Agent types, reporting strategies and expected-utility estimation.

An agent privately holds a bit and a unit privacy cost.  Utility from one
survey round is payment minus the privacy-loss value, which the analyzed
cost models bound by eta * epsilon * cost (linear regime) or by
eta * 4 * cost * epsilon**2 (quadratic regime, valid for epsilon <= 1).
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from ._util import chunk_sizes, check_seed, subseed_rng, trials_per_chunk
from .mechanism import Report, payment_pair
from .privacy import noise_draw

TRUTH = "truth"
LIE = "lie"
ABSTAIN = "abstain"
ACTIONS = (TRUTH, LIE, ABSTAIN)

OFF_BEHAVIORS = (ABSTAIN, LIE, TRUTH)

COST_MODEL_KINDS = ("linear", "chen")

_MIN_UTILITY_TRIALS = 1_000


@dataclass(frozen=True)
class AgentType:
    bit: int
    cost: float

    def __post_init__(self):
        if self.bit not in (0, 1):
            raise ValueError(f"bit must be 0 or 1, got {self.bit}")
        if self.cost < 0.0:
            raise ValueError(f"cost must be nonnegative, got {self.cost}")


@dataclass(frozen=True)
class CostModel:
    """Privacy-loss model: bound kind plus a realization fraction eta.

    eta = 1 prices the worst case; smaller values model agents whose
    realized loss sits below the bound.
    """

    kind: str
    eta: float = 1.0

    def __post_init__(self):
        if self.kind not in COST_MODEL_KINDS:
            raise ValueError(f"kind must be one of {COST_MODEL_KINDS}, got {self.kind!r}")
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError(f"eta must lie in [0, 1], got {self.eta}")

    def to_dict(self):
        return {"kind": self.kind, "eta": self.eta}

    @classmethod
    def from_dict(cls, d):
        if not isinstance(d, dict) or "kind" not in d:
            raise ValueError("cost_model must be an object with a 'kind' key")
        return cls(kind=d["kind"], eta=float(d.get("eta", 1.0)))


def privacy_cost_bound(model, cost, epsilon):
    """Upper bound on the utility lost to an epsilon-private release."""
    if cost < 0.0:
        raise ValueError(f"cost must be nonnegative, got {cost}")
    if not epsilon > 0.0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    if model.kind == "linear":
        return model.eta * epsilon * cost
    if epsilon > 1.0:
        raise ValueError(
            f"the quadratic cost bound requires epsilon <= 1, got {epsilon}"
        )
    return model.eta * 4.0 * cost * epsilon**2


# ---------------------------------------------------------------------------
# Strategies.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Threshold:
    """Report truthfully when cost <= tau; otherwise apply `off`."""

    tau: float
    off: str = ABSTAIN

    def __post_init__(self):
        if self.tau < 0.0:
            raise ValueError(f"tau must be nonnegative, got {self.tau}")
        if self.off not in OFF_BEHAVIORS:
            raise ValueError(f"off must be one of {OFF_BEHAVIORS}, got {self.off!r}")

    def to_dict(self):
        return {"kind": "threshold", "tau": self.tau, "off": self.off}


@dataclass(frozen=True)
class AlwaysTruth:
    def to_dict(self):
        return {"kind": "always_truth"}


@dataclass(frozen=True)
class AlwaysLie:
    def to_dict(self):
        return {"kind": "always_lie"}


@dataclass(frozen=True)
class AlwaysAbstain:
    def to_dict(self):
        return {"kind": "always_abstain"}


@dataclass(frozen=True)
class ConstantBit:
    value: int

    def __post_init__(self):
        if self.value not in (0, 1):
            raise ValueError(f"value must be 0 or 1, got {self.value}")

    def to_dict(self):
        return {"kind": "constant_bit", "value": self.value}


def strategy_from_dict(d):
    if not isinstance(d, dict) or "kind" not in d:
        raise ValueError("strategy must be an object with a 'kind' key")
    kind = d["kind"]
    if kind == "threshold":
        return Threshold(tau=float(d["tau"]), off=d.get("off", ABSTAIN))
    if kind == "always_truth":
        return AlwaysTruth()
    if kind == "always_lie":
        return AlwaysLie()
    if kind == "always_abstain":
        return AlwaysAbstain()
    if kind == "constant_bit":
        return ConstantBit(value=int(d["value"]))
    raise ValueError(f"unknown strategy kind {kind!r}")


def _bit_report(bit):
    return Report.ONE if bit == 1 else Report.ZERO


def apply_strategy(strategy, agent):
    """Map one agent's type to a report under the given strategy."""
    if isinstance(strategy, AlwaysTruth):
        return _bit_report(agent.bit)
    if isinstance(strategy, AlwaysLie):
        return _bit_report(1 - agent.bit)
    if isinstance(strategy, AlwaysAbstain):
        return Report.ABSTAIN
    if isinstance(strategy, ConstantBit):
        return _bit_report(strategy.value)
    if isinstance(strategy, Threshold):
        if agent.cost <= strategy.tau:
            return _bit_report(agent.bit)
        if strategy.off == ABSTAIN:
            return Report.ABSTAIN
        if strategy.off == LIE:
            return _bit_report(1 - agent.bit)
        return _bit_report(agent.bit)
    raise TypeError(f"unknown strategy {strategy!r}")


def strategy_arrays(strategy, bits, costs):
    """Vectorized apply_strategy: (contributions, participation) arrays."""
    bits = np.asarray(bits)
    costs = np.asarray(costs)
    if isinstance(strategy, AlwaysTruth):
        return bits.astype(np.int8), np.ones(bits.shape, dtype=bool)
    if isinstance(strategy, AlwaysLie):
        return (1 - bits).astype(np.int8), np.ones(bits.shape, dtype=bool)
    if isinstance(strategy, AlwaysAbstain):
        return np.zeros(bits.shape, dtype=np.int8), np.zeros(bits.shape, dtype=bool)
    if isinstance(strategy, ConstantBit):
        return (
            np.full(bits.shape, strategy.value, dtype=np.int8),
            np.ones(bits.shape, dtype=bool),
        )
    if isinstance(strategy, Threshold):
        truthful = costs <= strategy.tau
        if strategy.off == ABSTAIN:
            values = np.where(truthful, bits, 0).astype(np.int8)
            return values, truthful.copy()
        if strategy.off == LIE:
            values = np.where(truthful, bits, 1 - bits).astype(np.int8)
        else:
            values = bits.astype(np.int8)
        return values, np.ones(bits.shape, dtype=bool)
    raise TypeError(f"unknown strategy {strategy!r}")


@dataclass(frozen=True)
class StrategyProfile:
    """A strategy per agent; a single shared strategy means symmetric play."""

    shared: object = None
    per_agent: tuple = ()

    def __post_init__(self):
        if (self.shared is None) == (not self.per_agent):
            raise ValueError("provide exactly one of a shared strategy or a per-agent tuple")

    @classmethod
    def symmetric(cls, strategy):
        return cls(shared=strategy)

    @classmethod
    def of(cls, strategies):
        return cls(per_agent=tuple(strategies))

    def strategy_for(self, i):
        return self.shared if self.shared is not None else self.per_agent[i]

    def report_arrays(self, bits, costs):
        """Contributions and participation for a (trials, n) type matrix."""
        bits = np.atleast_2d(np.asarray(bits))
        costs = np.atleast_2d(np.asarray(costs))
        if self.shared is not None:
            return strategy_arrays(self.shared, bits, costs)
        if len(self.per_agent) != bits.shape[1]:
            raise ValueError(
                f"profile covers {len(self.per_agent)} agents, population has {bits.shape[1]}"
            )
        values = np.empty(bits.shape, dtype=np.int8)
        mask = np.empty(bits.shape, dtype=bool)
        for j, strat in enumerate(self.per_agent):
            values[:, j], mask[:, j] = strategy_arrays(strat, bits[:, j], costs[:, j])
        return values, mask


# ---------------------------------------------------------------------------
# Expected utility of one agent's deviation.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class UtilityEstimate:
    """Monte Carlo payment estimate and the privacy-cost lower bound on utility."""

    mean_payment: float
    payment_ci_halfwidth: float
    privacy_cost: float
    utility_lower_bound: float
    mean_peer_estimate: float = float("nan")


def expected_utility(
    agent,
    action,
    others,
    prior,
    config,
    cost_model,
    trials,
    seed,
    ci_level=0.99,
):
    """Estimate one agent's expected payment and worst-case utility.

    Draws the other n - 1 agents' types from the prior's posterior given
    the agent's own bit, applies `others` (a StrategyProfile or a single
    strategy) to them, runs the payment rule against the resulting noisy
    sum, and averages.  Abstaining earns exactly zero payment, so no
    sampling happens in that case.  utility_lower_bound subtracts the
    privacy-cost bound from the mean payment.
    """
    if action not in ACTIONS:
        raise ValueError(f"action must be one of {ACTIONS}, got {action!r}")
    trials = int(trials)
    if trials < _MIN_UTILITY_TRIALS:
        raise ValueError(f"trials must be at least {_MIN_UTILITY_TRIALS}, got {trials}")
    if not 0.0 < ci_level < 1.0:
        raise ValueError(f"ci_level must lie in (0, 1), got {ci_level}")
    seed = check_seed(seed)
    if not isinstance(others, StrategyProfile):
        others = StrategyProfile.symmetric(others)

    pc = privacy_cost_bound(cost_model, agent.cost, config.epsilon)
    if action == ABSTAIN:
        return UtilityEstimate(
            mean_payment=0.0,
            payment_ci_halfwidth=0.0,
            privacy_cost=pc,
            utility_lower_bound=-pc,
        )

    own_value = agent.bit if action == TRUTH else 1 - agent.bit
    n = config.n
    total = 0.0
    total_sq = 0.0
    total_pm = 0.0
    for chunk, size in chunk_sizes(trials, trials_per_chunk(n - 1)):
        rng = subseed_rng(seed, chunk)
        theta = prior.posterior_theta_sample(agent.bit, rng, size)
        peer_bits = (rng.random((size, n - 1)) < theta[:, None]).astype(np.int8)
        u = rng.random((size, n - 1))
        peer_costs = np.where(
            peer_bits == 1, prior.cost1.quantile(u), prior.cost0.quantile(u)
        )
        values, _ = others.report_arrays(peer_bits, peer_costs)
        b_bar = values.sum(axis=1) + own_value + noise_draw(config.noise, rng, size)
        pay_one, pay_zero = payment_pair(config, b_bar)
        pay = pay_one if own_value == 1 else pay_zero
        pm = np.clip((b_bar - own_value) / (n - 1), 0.0, 1.0)
        total += float(pay.sum())
        total_sq += float((pay**2).sum())
        total_pm += float(pm.sum())

    mean = total / trials
    var = max(0.0, total_sq / trials - mean**2)
    z = float(ndtri(0.5 + ci_level / 2.0))
    halfwidth = z * (var / trials) ** 0.5
    return UtilityEstimate(
        mean_payment=mean,
        payment_ci_halfwidth=halfwidth,
        privacy_cost=pc,
        utility_lower_bound=mean - pc,
        mean_peer_estimate=total_pm / trials,
    )
