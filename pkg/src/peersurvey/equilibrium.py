"""Equilibrium, accuracy and cost-scaling experiments.

The survey design promises three things when beta is set from the
participation threshold: threshold agents cannot gain by lying or abstaining
(best-response audit), the published estimate tracks the true bit fraction
up to a noise-widened band (accuracy experiment), and the expected total
spend shrinks like 1/n under the quadratic privacy-cost model (cost-scaling
experiment).  Each driver here measures one of those claims on simulated
populations and returns a report with explicit verdicts.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from ._util import check_seed, chunk_sizes, derive_seed, subseed_rng, trials_per_chunk
from .agents import (
    ABSTAIN,
    LIE,
    TRUTH,
    AgentType,
    CostModel,
    StrategyProfile,
    Threshold,
    expected_utility,
    privacy_cost_bound,
)
from .mechanism import MechanismConfig, payment_pair
from .priors import (
    DEFAULT_POSTERIOR_SAMPLES,
    cost_threshold,
    posterior_clamped_mean,
)
from .privacy import FAIL, PASS, NoiseSpec, noise_draw

INCONCLUSIVE = "Inconclusive"

DEFAULT_THRESHOLD_TRIALS = 100_000


# ---------------------------------------------------------------------------
# Parameter rules.
# ---------------------------------------------------------------------------


def beta_rule(kind, epsilon, tau):
    """Truthfulness premium matching the privacy-cost model.

    Linear model: beta = epsilon * tau.  Quadratic ("chen") model:
    beta = 4 * epsilon**2 * tau, valid only for epsilon <= 1.  tau = 0 is
    rejected: it yields no premium and a degenerate payment scale.
    """
    if kind not in ("linear", "chen"):
        raise ValueError(f"kind must be 'linear' or 'chen', got {kind!r}")
    if not epsilon > 0.0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    if tau <= 0.0:
        raise ValueError(f"tau must be positive, got {tau}")
    if kind == "linear":
        return epsilon * tau
    if epsilon > 1.0:
        raise ValueError(f"the quadratic rule requires epsilon <= 1, got {epsilon}")
    return 4.0 * epsilon**2 * tau


def epsilon_rule(alpha, delta, n):
    """Privacy level ln(1/delta) / (alpha * n) sized for the accuracy target."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    if n < 1:
        raise ValueError(f"n must be positive, got {n}")
    return math.log(1.0 / delta) / (alpha * n)


def accuracy_radius(alpha, delta, epsilon, n):
    """Error band alpha' = ln(2/delta) / (epsilon * n) + alpha."""
    return math.log(2.0 / delta) / (epsilon * n) + alpha


def config_lint(alpha, delta, epsilon, n):
    """Check whether the configured epsilon meets the 2*alpha error target."""
    alpha_prime = accuracy_radius(alpha, delta, epsilon, n)
    needed = math.log(2.0 / delta) / (alpha * n)
    return {
        "alpha_prime": alpha_prime,
        "two_alpha_target": 2.0 * alpha,
        "meets_two_alpha": alpha_prime <= 2.0 * alpha,
        "epsilon_for_two_alpha": needed,
    }


# ---------------------------------------------------------------------------
# Batched survey simulation shared by the experiment drivers and the CLI.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TrialRecords:
    """Per-trial survey statistics, one array entry per trial."""

    p_hat: np.ndarray
    p_tilde: np.ndarray
    b_bar: np.ndarray
    ones: np.ndarray
    zeros: np.ndarray
    participants: np.ndarray
    mismatches: np.ndarray

    @property
    def trials(self):
        return self.p_hat.size

    @property
    def abs_error(self):
        return np.abs(self.p_hat - self.p_tilde)


@dataclass(frozen=True)
class PaymentRecords:
    """TrialRecords plus the two distinct participant payments per trial."""

    base: TrialRecords
    pay_one: np.ndarray
    pay_zero: np.ndarray
    pm_one: np.ndarray
    pm_zero: np.ndarray
    total_payment: np.ndarray
    min_payment: np.ndarray
    max_payment: np.ndarray


def simulate_estimates(prior, n, noise, profile, trials, seed):
    """Sample populations, apply a strategy profile, run the noisy estimate.

    Returns TrialRecords; trial t is a pure function of (inputs, seed)
    regardless of chunking.
    """
    if n < 2:
        raise ValueError(f"n must be at least 2, got {n}")
    trials = int(trials)
    if trials < 1:
        raise ValueError("trials must be positive")
    seed = check_seed(seed)
    if not isinstance(profile, StrategyProfile):
        profile = StrategyProfile.symmetric(profile)

    out = {k: [] for k in ("p_hat", "p_tilde", "b_bar", "ones", "zeros",
                           "participants", "mismatches")}
    for chunk, size in chunk_sizes(trials, trials_per_chunk(n)):
        rng = subseed_rng(seed, chunk)
        theta = np.atleast_1d(prior.theta_sample(rng, size))
        bits = (rng.random((size, n)) < theta[:, None]).astype(np.int8)
        u = rng.random((size, n))
        costs = np.where(bits == 1, prior.cost1.quantile(u), prior.cost0.quantile(u))
        values, mask = profile.report_arrays(bits, costs)
        ones = values.sum(axis=1, dtype=np.int64)
        participants = mask.sum(axis=1, dtype=np.int64)
        draw = noise_draw(noise, rng, size)
        b_bar = ones + draw
        out["p_hat"].append(bits.mean(axis=1))
        out["p_tilde"].append(np.clip(b_bar / n, 0.0, 1.0))
        out["b_bar"].append(b_bar)
        out["ones"].append(ones)
        out["zeros"].append(participants - ones)
        out["participants"].append(participants)
        out["mismatches"].append((values != bits).sum(axis=1, dtype=np.int64))
    return TrialRecords(**{k: np.concatenate(v) for k, v in out.items()})


def simulate_survey(prior, config, profile, trials, seed):
    """simulate_estimates plus payments under the mechanism's payment rule."""
    records = simulate_estimates(
        prior, config.n, config.noise, profile, trials, seed
    )
    pay_one, pay_zero = payment_pair(config, records.b_bar)
    pm_one = np.clip((records.b_bar - 1.0) / (config.n - 1), 0.0, 1.0)
    pm_zero = np.clip(records.b_bar / (config.n - 1), 0.0, 1.0)
    total = records.ones * pay_one + records.zeros * pay_zero

    abstainers = config.n - records.participants
    pos_inf = np.full_like(pay_one, np.inf)
    neg_inf = np.full_like(pay_one, -np.inf)
    mins = np.minimum.reduce([
        np.where(records.ones > 0, pay_one, pos_inf),
        np.where(records.zeros > 0, pay_zero, pos_inf),
        np.where(abstainers > 0, 0.0, pos_inf),
    ])
    maxs = np.maximum.reduce([
        np.where(records.ones > 0, pay_one, neg_inf),
        np.where(records.zeros > 0, pay_zero, neg_inf),
        np.where(abstainers > 0, 0.0, neg_inf),
    ])
    return PaymentRecords(
        base=records,
        pay_one=pay_one,
        pay_zero=pay_zero,
        pm_one=pm_one,
        pm_zero=pm_zero,
        total_payment=total,
        min_payment=mins,
        max_payment=maxs,
    )


# ---------------------------------------------------------------------------
# Best-response (equilibrium) audit.
# ---------------------------------------------------------------------------


def _interval_verdict(lo, hi, bound, side):
    """Verdict for 'estimate side bound' given a CI [lo, hi]."""
    if side == "ge":
        if lo >= bound:
            return PASS
        return FAIL if hi < bound else INCONCLUSIVE
    if hi <= bound:
        return PASS
    return FAIL if lo > bound else INCONCLUSIVE


def _combine(verdicts):
    if any(v == FAIL for v in verdicts):
        return FAIL
    if all(v == PASS for v in verdicts):
        return PASS
    return INCONCLUSIVE


@dataclass(frozen=True)
class EquilibriumAuditReport:
    """Worst-case (over the probe's bit value) best-response audit results."""

    beta: float
    tau: float
    epsilon: float
    p0: float
    p1: float
    probe_cost: float
    trials: int
    truth_payment_mean: float
    truth_payment_ci: float
    lie_payment_mean: float
    lie_payment_ci: float
    abstain_utility_bound: float
    verdicts: dict
    per_bit: dict = field(default_factory=dict, repr=False)
    detail: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        required = {"truth_ge_beta", "lie_le_zero", "beta_covers_cost_bound",
                    "truth_dominates"}
        if set(self.verdicts) != required:
            raise ValueError(f"verdicts must have keys {sorted(required)}")
        both = (self.verdicts["truth_ge_beta"], self.verdicts["lie_le_zero"])
        if self.verdicts["truth_dominates"] == PASS and any(v != PASS for v in both):
            raise ValueError(
                "truth_dominates can only Pass when truth_ge_beta and "
                "lie_le_zero both Pass"
            )

    @property
    def overall(self):
        return self.verdicts["truth_dominates"]

    def to_dict(self):
        return {
            "beta": self.beta,
            "tau": self.tau,
            "epsilon": self.epsilon,
            "p0": self.p0,
            "p1": self.p1,
            "probe_cost": self.probe_cost,
            "trials": self.trials,
            "truth_payment_mean": self.truth_payment_mean,
            "truth_payment_ci": self.truth_payment_ci,
            "lie_payment_mean": self.lie_payment_mean,
            "lie_payment_ci": self.lie_payment_ci,
            "abstain_utility_bound": self.abstain_utility_bound,
            "verdicts": dict(self.verdicts),
            "per_bit": self.per_bit,
            "detail": self.detail,
        }


def best_response_audit(
    prior,
    n,
    alpha,
    delta,
    epsilon,
    cost_model,
    trials,
    seed,
    samples=DEFAULT_POSTERIOR_SAMPLES,
    threshold_trials=DEFAULT_THRESHOLD_TRIALS,
    beta_override=None,
    off=ABSTAIN,
    ci_level=0.99,
):
    """Audit whether truthful participation is a best response at threshold tau.

    Everyone else plays the threshold strategy; a probe agent with cost just
    below tau tries truth, lie and abstain for both possible bit values.
    The report carries the worst case over bits.  beta_override exists to
    study misconfigured premia; when used, the beta_covers_cost_bound
    diagnostic flags premia below the privacy-cost bound at tau.
    """
    seed = check_seed(seed)
    tau = cost_threshold(
        prior, alpha, delta / 2.0, n, threshold_trials, derive_seed(seed, 0)
    )
    beta = beta_rule(cost_model.kind, epsilon, tau) if beta_override is None else float(beta_override)
    p0 = posterior_clamped_mean(prior, 0, n, epsilon, samples, derive_seed(seed, 1))
    p1 = posterior_clamped_mean(prior, 1, n, epsilon, samples, derive_seed(seed, 2))
    config = MechanismConfig(
        n=n, alpha=alpha, beta=beta, epsilon=epsilon, p0=p0, p1=p1
    )
    others = StrategyProfile.symmetric(Threshold(tau=tau, off=off))
    probe_cost = tau * (1.0 - 1e-6)

    per_bit = {}
    for bit in (0, 1):
        agent = AgentType(bit=bit, cost=probe_cost)
        side = {}
        for k, action in enumerate((TRUTH, LIE, ABSTAIN)):
            est = expected_utility(
                agent, action, others, prior, config, cost_model,
                trials, derive_seed(seed, 3, bit, k), ci_level,
            )
            side[action] = est
        per_bit[bit] = side

    truth_v = _combine([
        _interval_verdict(
            per_bit[b][TRUTH].mean_payment - per_bit[b][TRUTH].payment_ci_halfwidth,
            per_bit[b][TRUTH].mean_payment + per_bit[b][TRUTH].payment_ci_halfwidth,
            beta, "ge",
        )
        for b in (0, 1)
    ])
    lie_v = _combine([
        _interval_verdict(
            per_bit[b][LIE].mean_payment - per_bit[b][LIE].payment_ci_halfwidth,
            per_bit[b][LIE].mean_payment + per_bit[b][LIE].payment_ci_halfwidth,
            0.0, "le",
        )
        for b in (0, 1)
    ])
    tau_cost_bound = privacy_cost_bound(cost_model, tau, epsilon)
    margin = beta - tau_cost_bound
    cover_v = PASS if margin >= -1e-12 * max(1.0, abs(beta)) else FAIL
    dominates = _combine([truth_v, lie_v, cover_v])

    worst_truth = min((0, 1), key=lambda b: per_bit[b][TRUTH].mean_payment)
    worst_lie = max((0, 1), key=lambda b: per_bit[b][LIE].mean_payment)
    report_bits = {
        str(b): {
            a: {
                "mean_payment": per_bit[b][a].mean_payment,
                "ci_halfwidth": per_bit[b][a].payment_ci_halfwidth,
                "utility_lower_bound": per_bit[b][a].utility_lower_bound,
                "mean_peer_estimate": per_bit[b][a].mean_peer_estimate,
            }
            for a in (TRUTH, LIE, ABSTAIN)
        }
        for b in (0, 1)
    }
    return EquilibriumAuditReport(
        beta=beta,
        tau=tau,
        epsilon=epsilon,
        p0=p0,
        p1=p1,
        probe_cost=probe_cost,
        trials=int(trials),
        truth_payment_mean=per_bit[worst_truth][TRUTH].mean_payment,
        truth_payment_ci=per_bit[worst_truth][TRUTH].payment_ci_halfwidth,
        lie_payment_mean=per_bit[worst_lie][LIE].mean_payment,
        lie_payment_ci=per_bit[worst_lie][LIE].payment_ci_halfwidth,
        abstain_utility_bound=-per_bit[0][ABSTAIN].privacy_cost,
        verdicts={
            "truth_ge_beta": truth_v,
            "lie_le_zero": lie_v,
            "beta_covers_cost_bound": cover_v,
            "truth_dominates": dominates,
        },
        per_bit=report_bits,
        detail={
            "cost_model": cost_model.to_dict(),
            "beta_rule_value": beta_rule(cost_model.kind, epsilon, tau),
            "privacy_cost_bound_at_tau": tau_cost_bound,
            "beta_margin_over_cost_bound": margin,
            "posterior_samples": int(samples),
            "off_behavior": off,
            "ci_level": ci_level,
        },
    )


# ---------------------------------------------------------------------------
# Accuracy experiment.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AccuracyReport:
    alpha_prime: float
    success_fraction: float
    trials: int
    delta: float
    verdict: str
    detail: dict = field(default_factory=dict, repr=False)

    def to_dict(self):
        return {
            "alpha_prime": self.alpha_prime,
            "success_fraction": self.success_fraction,
            "trials": self.trials,
            "delta": self.delta,
            "verdict": self.verdict,
            "detail": self.detail,
        }


def accuracy_experiment(
    prior,
    n,
    alpha,
    delta,
    epsilon,
    profile,
    trials,
    seed,
    alpha_prime=None,
    noise_mode="sample",
):
    """Fraction of trials whose estimate lands within alpha' of the truth.

    Passing requires success_fraction >= 1 - delta minus a three-sigma
    binomial allowance at sample size `trials`.  alpha_prime defaults to
    the noise-widened radius ln(2/delta)/(epsilon*n) + alpha.
    """
    if int(trials) < 100:
        raise ValueError(f"need at least 100 trials for a verdict, got {trials}")
    if alpha_prime is None:
        alpha_prime = accuracy_radius(alpha, delta, epsilon, n)
    noise = NoiseSpec(epsilon=epsilon, mode=noise_mode)
    records = simulate_estimates(prior, n, noise, profile, trials, seed)
    success = records.abs_error <= alpha_prime
    fraction = float(success.mean())
    allowance = 3.0 * math.sqrt(delta * (1.0 - delta) / records.trials)
    verdict = PASS if fraction >= 1.0 - delta - allowance else FAIL
    return AccuracyReport(
        alpha_prime=float(alpha_prime),
        success_fraction=fraction,
        trials=records.trials,
        delta=float(delta),
        verdict=verdict,
        detail={
            "alpha": alpha,
            "epsilon": epsilon,
            "n": n,
            "mean_abs_error": float(records.abs_error.mean()),
            "max_abs_error": float(records.abs_error.max()),
            "mean_mismatch_fraction": float(records.mismatches.mean() / n),
            "pass_floor": 1.0 - delta - allowance,
            "lint": config_lint(alpha, delta, epsilon, n),
        },
    )


# ---------------------------------------------------------------------------
# Cost-scaling experiment.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CostRow:
    n: int
    total_payment_mean: float
    theorem_bound: float
    epsilon: float
    beta: float
    tau: float
    p0: float
    p1: float
    total_payment_sem: float
    mean_pay_one: float
    mean_pay_zero: float
    mean_pm_one: float
    mean_pm_zero: float
    records: object = field(default=None, repr=False, compare=False)

    def to_dict(self):
        return {
            "n": self.n,
            "total_payment_mean": self.total_payment_mean,
            "theorem_bound": self.theorem_bound,
            "epsilon": self.epsilon,
            "beta": self.beta,
            "tau": self.tau,
            "p0": self.p0,
            "p1": self.p1,
            "total_payment_sem": self.total_payment_sem,
            "mean_pay_one": self.mean_pay_one,
            "mean_pay_zero": self.mean_pay_zero,
            "mean_pm_one": self.mean_pm_one,
            "mean_pm_zero": self.mean_pm_zero,
        }


@dataclass(frozen=True)
class CostScalingReport:
    rows: tuple
    slope: float

    def __post_init__(self):
        for row in self.rows:
            if not row.total_payment_mean >= 0.0:
                raise ValueError(
                    f"negative mean total payment at n={row.n}; "
                    "equilibrium play should never produce one"
                )

    def to_dict(self):
        return {"rows": [r.to_dict() for r in self.rows], "slope": self.slope}


def total_payment_bound(params, n):
    """Expected-total upper bound n * (beta + 4 * rho * alpha * gap)."""
    return n * (params.beta + 4.0 * params.rho * params.alpha * params.gap)


def cost_scaling_experiment(
    prior,
    alpha,
    delta,
    ns,
    trials,
    seed,
    samples=DEFAULT_POSTERIOR_SAMPLES,
    threshold_trials=DEFAULT_THRESHOLD_TRIALS,
    eta=1.0,
    off=ABSTAIN,
):
    """Mean total payment per survey size under the quadratic cost model.

    For each n: epsilon follows epsilon_rule, beta the quadratic premium
    rule, and everyone plays the threshold strategy.  Any n that drives
    epsilon above 1 is rejected, because the quadratic bound is invalid
    there.  The fitted log-log slope should approach -1.
    """
    ns = [int(n) for n in ns]
    if len(ns) < 2:
        raise ValueError("need at least two population sizes")
    trials = int(trials)
    if trials < 1:
        raise ValueError("trials must be positive")
    seed = check_seed(seed)

    rows = []
    for n in ns:
        epsilon = epsilon_rule(alpha, delta, n)
        if epsilon > 1.0:
            raise ValueError(
                f"n={n} gives epsilon={epsilon:.4g} > 1; the quadratic "
                "cost model does not apply"
            )
        tau = cost_threshold(
            prior, alpha, delta / 2.0, n, threshold_trials, derive_seed(seed, n, 0)
        )
        beta = beta_rule("chen", epsilon, tau)
        p0 = posterior_clamped_mean(prior, 0, n, epsilon, samples, derive_seed(seed, n, 1))
        p1 = posterior_clamped_mean(prior, 1, n, epsilon, samples, derive_seed(seed, n, 2))
        config = MechanismConfig(
            n=n, alpha=alpha, beta=beta, epsilon=epsilon, p0=p0, p1=p1
        )
        profile = StrategyProfile.symmetric(Threshold(tau=tau, off=off))
        recs = simulate_survey(prior, config, profile, trials, derive_seed(seed, n, 3))
        totals = recs.total_payment
        ones_total = float(recs.base.ones.sum())
        zeros_total = float(recs.base.zeros.sum())
        rows.append(CostRow(
            n=n,
            total_payment_mean=float(totals.mean()),
            theorem_bound=float(total_payment_bound(config.scoring, n)),
            epsilon=epsilon,
            beta=beta,
            tau=tau,
            p0=p0,
            p1=p1,
            total_payment_sem=float(totals.std(ddof=1) / math.sqrt(trials)),
            mean_pay_one=float((recs.base.ones * recs.pay_one).sum() / max(ones_total, 1.0)),
            mean_pay_zero=float((recs.base.zeros * recs.pay_zero).sum() / max(zeros_total, 1.0)),
            mean_pm_one=float((recs.base.ones * recs.pm_one).sum() / max(ones_total, 1.0)),
            mean_pm_zero=float((recs.base.zeros * recs.pm_zero).sum() / max(zeros_total, 1.0)),
            records=recs,
        ))

    log_n = np.log([r.n for r in rows])
    log_mean = np.log([r.total_payment_mean for r in rows])
    slope = float(np.polyfit(log_n, log_mean, 1)[0])
    return CostScalingReport(rows=tuple(rows), slope=slope)
