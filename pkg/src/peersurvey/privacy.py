"""Laplace perturbation of the report sum and empirical privacy auditing.

The mechanism protects participants by adding a single Laplace draw of scale
1/epsilon to the report sum (sensitivity 1) and publishing only clamped
functions of the noisy sum.  `dp_audit` estimates the worst observed
count-ratio between two neighboring report vectors; it can refute a privacy
claim but can never prove one.
"""

import math
from dataclasses import dataclass

import numpy as np

from ._util import as_generator, chunk_sizes, subseed_rng

NOISE_MODES = ("sample", "disabled")

PASS = "Pass"
FAIL = "Fail"

# Histogram bins with fewer pooled counts than this are too noisy to compare.
DEFAULT_BIN_FLOOR = 50.0
DEFAULT_TOLERANCE = 0.05

_AUDIT_MIN_TRIALS = 100_000


class AuditDataError(RuntimeError):
    """Raised when every histogram bin is below the audit's count floor."""


@dataclass(frozen=True)
class NoiseSpec:
    """Noise configuration: epsilon > 0 and a sampling mode.

    Mode "disabled" replaces the draw with exactly zero; it exists for
    deterministic tests and is never the default.
    """

    epsilon: float
    mode: str = "sample"

    def __post_init__(self):
        if not self.epsilon > 0.0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if self.mode not in NOISE_MODES:
            raise ValueError(f"mode must be one of {NOISE_MODES}, got {self.mode!r}")

    @property
    def scale(self):
        return 1.0 / self.epsilon


def laplace_inverse_cdf(u, scale):
    """Map uniform u in (0, 1) to a Laplace(0, scale) variate; u=0.5 -> 0."""
    if scale <= 0.0:
        raise ValueError(f"scale must be positive, got {scale}")
    u = np.asarray(u, dtype=np.float64)
    with np.errstate(divide="ignore"):
        val = np.where(
            u < 0.5,
            scale * np.log(2.0 * u),
            -scale * np.log(2.0 - 2.0 * u),
        )
    return float(val) if val.ndim == 0 else val


def laplace_sample(scale, rng, size=None):
    """Laplace(0, scale) draws via the inverse-CDF transform of rng.random()."""
    rng = as_generator(rng)
    u = rng.random(size)
    # rng.random() can return exactly 0.0; nudge to keep the transform finite.
    u = np.maximum(u, np.finfo(np.float64).tiny)
    return laplace_inverse_cdf(u, scale)


def noise_draw(noise, rng, size=None):
    """One noise draw per trial: Laplace(1/epsilon) or exact zeros."""
    if noise.mode == "disabled":
        return 0.0 if size is None else np.zeros(size)
    return laplace_sample(noise.scale, rng, size)


def clamp_estimates(b_bar, own_report_bit, n):
    """Clamp the noisy sum into the population and leave-one-out estimates."""
    if n < 2:
        raise ValueError(f"n must be at least 2, got {n}")
    b_bar = np.asarray(b_bar, dtype=np.float64)
    p_tilde = np.clip(b_bar / n, 0.0, 1.0)
    p_minus = np.clip((b_bar - np.asarray(own_report_bit)) / (n - 1), 0.0, 1.0)
    if p_tilde.ndim == 0:
        p_tilde = float(p_tilde)
    if p_minus.ndim == 0:
        p_minus = float(p_minus)
    return p_tilde, p_minus


def perturb_and_clamp(bhat_sum, own_report_bit, n, noise, rng):
    """Perturb the report sum with one shared draw and clamp the estimates.

    Returns (p_tilde, p_tilde_minus_i, b_bar).  The same b_bar must be used
    for every agent in a run; callers subtract their own contribution only.
    """
    if not 0 <= bhat_sum <= n:
        raise ValueError(f"bhat_sum must lie in [0, n], got {bhat_sum}")
    if own_report_bit not in (0, 1):
        raise ValueError(f"own_report_bit must be 0 or 1, got {own_report_bit}")
    draw = noise_draw(noise, as_generator(rng))
    b_bar = bhat_sum + draw
    p_tilde, p_minus = clamp_estimates(b_bar, own_report_bit, n)
    return p_tilde, p_minus, b_bar


def max_log_count_ratio(counts_a, counts_b, min_expected=DEFAULT_BIN_FLOOR):
    """Largest |log(count_a / count_b)| over bins with enough pooled mass.

    A bin enters the comparison when its average count across the two
    histograms is at least `min_expected`; a retained bin that is empty on
    one side yields an infinite ratio.  Raises AuditDataError when no bin
    qualifies.
    """
    counts_a = np.asarray(counts_a, dtype=np.float64)
    counts_b = np.asarray(counts_b, dtype=np.float64)
    if counts_a.shape != counts_b.shape:
        raise ValueError("count arrays must have identical shapes")
    retained = (counts_a + counts_b) / 2.0 >= min_expected
    if not retained.any():
        raise AuditDataError(
            "no histogram bin reaches the count floor; "
            "increase trials or reduce bins"
        )
    with np.errstate(divide="ignore"):
        log_ratio = np.abs(np.log(counts_a[retained]) - np.log(counts_b[retained]))
    return float(np.max(log_ratio)), retained


@dataclass(frozen=True)
class DpAuditReport:
    """Outcome of an empirical privacy audit on one pair of neighbors.

    A Pass only means the histogram test found no violation at this sample
    size; a Fail is a genuine refutation of the claimed epsilon (up to the
    additive tolerance).
    """

    epsilon_claimed: float
    max_log_ratio: float
    bins: int
    trials: int
    tolerance: float
    verdict: str
    bin_table: tuple = ()

    def __post_init__(self):
        expected = PASS if self.max_log_ratio <= self.epsilon_claimed + self.tolerance else FAIL
        if self.verdict != expected:
            raise ValueError("verdict inconsistent with max_log_ratio and tolerance")

    def to_dict(self):
        return {
            "epsilon_claimed": self.epsilon_claimed,
            "max_log_ratio": self.max_log_ratio,
            "bins": self.bins,
            "trials": self.trials,
            "tolerance": self.tolerance,
            "verdict": self.verdict,
        }


def dp_audit(
    mech,
    reports,
    i,
    flipped_bit,
    epsilon_claimed,
    trials,
    bins,
    seed,
    tolerance=DEFAULT_TOLERANCE,
    bin_range=(0.0, 1.0),
    min_expected=DEFAULT_BIN_FLOOR,
):
    """Histogram two neighboring runs of `mech` and compare bin counts.

    Parameters
    ----------
    mech : callable (reports, rng, size) -> array of shape (size,)
        Vectorized randomized map from a report vector to the observable
        output being audited (by default a value in [0, 1]).
    reports : sequence of 0/1 report bits.
    i, flipped_bit : the single index to flip and the value to flip it to.
    epsilon_claimed : privacy level under test.
    trials, bins, seed : sample size, equal-width bin count over
        `bin_range`, and the audit seed (both runs share noise streams).

    Passing means max_log_ratio <= epsilon_claimed + tolerance.
    """
    reports = np.asarray(reports, dtype=np.int64)
    if not np.all((reports == 0) | (reports == 1)):
        raise ValueError("reports must be 0/1 bits")
    if not 0 <= i < reports.size:
        raise ValueError(f"index i out of range, got {i}")
    if flipped_bit not in (0, 1):
        raise ValueError(f"flipped_bit must be 0 or 1, got {flipped_bit}")
    if reports[i] == flipped_bit:
        raise ValueError("flipped_bit must differ from reports[i]")
    trials = int(trials)
    if trials < _AUDIT_MIN_TRIALS:
        raise ValueError(f"trials must be at least {_AUDIT_MIN_TRIALS}, got {trials}")
    bins = int(bins)
    if bins < 2:
        raise ValueError(f"bins must be at least 2, got {bins}")
    if not epsilon_claimed > 0.0:
        raise ValueError(f"epsilon_claimed must be positive, got {epsilon_claimed}")

    neighbor = reports.copy()
    neighbor[i] = flipped_bit

    counts_a = np.zeros(bins)
    counts_b = np.zeros(bins)
    for chunk, size in chunk_sizes(trials, 1 << 20):
        # Identical generator states: both runs see the same noise stream.
        out_a = np.asarray(mech(reports, subseed_rng(seed, chunk), size))
        out_b = np.asarray(mech(neighbor, subseed_rng(seed, chunk), size))
        counts_a += np.histogram(out_a, bins=bins, range=bin_range)[0]
        counts_b += np.histogram(out_b, bins=bins, range=bin_range)[0]

    max_log_ratio, retained = max_log_count_ratio(counts_a, counts_b, min_expected)
    verdict = PASS if max_log_ratio <= epsilon_claimed + tolerance else FAIL

    edges = np.linspace(bin_range[0], bin_range[1], bins + 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        per_bin = np.log(counts_a) - np.log(counts_b)
    table = tuple(
        (float(edges[k]), float(edges[k + 1]), float(counts_a[k]),
         float(counts_b[k]), bool(retained[k]),
         float(per_bin[k]) if not math.isnan(per_bin[k]) else 0.0)
        for k in range(bins)
    )
    return DpAuditReport(
        epsilon_claimed=float(epsilon_claimed),
        max_log_ratio=max_log_ratio,
        bins=bins,
        trials=trials,
        tolerance=float(tolerance),
        verdict=verdict,
        bin_table=table,
    )
