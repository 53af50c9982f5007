import json
import math

import numpy as np
import pytest
from scipy import stats

from peersurvey import (
    CostSearchError,
    Exponential,
    PointMass,
    Population,
    PriorSpec,
    TruncatedLogNormal,
    Uniform,
    cost_distribution_from_dict,
    cost_threshold,
    cost_threshold_parts,
    posterior_bit_prob,
    posterior_clamped_mean,
    sample_population,
)


class TestCostDistributions:
    def test_uniform_quantiles(self):
        d = Uniform(lo=0.0, hi=1.0)
        assert d.quantile(0.3) == pytest.approx(0.3)
        assert d.cdf(0.25) == 0.25
        wide = Uniform(lo=2.0, hi=5.0)
        assert wide.quantile(0.5) == pytest.approx(3.5)

    def test_exponential_quantile(self):
        d = Exponential(rate=2.0)
        assert d.quantile(0.9) == pytest.approx(math.log(10.0) / 2.0)
        assert d.cdf(d.quantile(0.37)) == pytest.approx(0.37)

    def test_point_mass_step(self):
        d = PointMass(value=0.7)
        assert d.quantile(0.01) == 0.7
        assert d.quantile(0.99) == 0.7
        assert d.cdf(0.6999) == 0.0
        assert d.cdf(0.7) == 1.0

    def test_log_normal_median_and_cap(self):
        d = TruncatedLogNormal(mu=0.0, sigma=0.5, cap=100.0)
        assert d.quantile(0.5) == pytest.approx(1.0, rel=1e-4)
        assert d.cdf(100.0) == pytest.approx(1.0)
        tight = TruncatedLogNormal(mu=0.0, sigma=1.0, cap=2.0)
        assert tight.quantile(0.999999) <= 2.0 + 1e-9

    @pytest.mark.parametrize("spec", [
        {"kind": "uniform", "lo": 0.0, "hi": 2.0},
        {"kind": "point_mass", "value": 0.4},
        {"kind": "exponential", "rate": 1.5},
        {"kind": "log_normal", "mu": -1.0, "sigma": 0.3, "cap": 10.0},
    ])
    def test_round_trip(self, spec):
        dist = cost_distribution_from_dict(spec)
        assert dist.to_dict() == spec
        assert cost_distribution_from_dict(dist.to_dict()) == dist

    def test_cdf_quantile_consistency(self):
        us = np.linspace(0.01, 0.99, 25)
        for dist in (Uniform(0.0, 3.0), Exponential(0.7),
                     TruncatedLogNormal(0.2, 0.8, 50.0)):
            np.testing.assert_allclose(dist.cdf(dist.quantile(us)), us, atol=1e-9)

    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError, match="kind"):
            cost_distribution_from_dict({"kind": "gamma", "shape": 2.0})

    def test_invalid_parameters_rejected(self):
        with pytest.raises(ValueError):
            Uniform(lo=1.0, hi=0.5)
        with pytest.raises(ValueError):
            Exponential(rate=0.0)
        with pytest.raises(ValueError):
            PointMass(value=-0.1)
        with pytest.raises(ValueError):
            TruncatedLogNormal(mu=0.0, sigma=-1.0, cap=10.0)


class TestPriorSpec:
    def test_json_round_trip(self, uniform_prior):
        blob = uniform_prior.to_json()
        assert PriorSpec.from_json(blob) == uniform_prior
        parsed = json.loads(blob)
        assert set(parsed) == {"family", "mixing", "cost0", "cost1"}

    def test_atom_round_trip(self, atom_prior):
        assert PriorSpec.from_dict(atom_prior.to_dict()) == atom_prior

    def test_missing_key_named(self):
        with pytest.raises((KeyError, ValueError), match="cost1"):
            PriorSpec.from_dict({
                "family": "conditional_iid",
                "mixing": {"kind": "point", "theta": 0.5},
                "cost0": {"kind": "point_mass", "value": 0.1},
            })

    def test_bad_family_rejected(self):
        with pytest.raises(ValueError):
            PriorSpec.from_dict({
                "family": "correlated_pairs",
                "mixing": {"kind": "point", "theta": 0.5},
                "cost0": {"kind": "point_mass", "value": 0.1},
                "cost1": {"kind": "point_mass", "value": 0.1},
            })

    def test_independent_bits_requires_point_mixing(self):
        with pytest.raises(ValueError):
            PriorSpec.from_dict({
                "family": "independent_bits",
                "mixing": {"kind": "beta", "a": 1.0, "b": 1.0},
                "cost0": {"kind": "point_mass", "value": 0.1},
                "cost1": {"kind": "point_mass", "value": 0.1},
            })

    def test_atom_weights_must_sum_to_one(self):
        with pytest.raises(ValueError):
            PriorSpec.from_dict({
                "family": "conditional_iid",
                "mixing": {"kind": "atoms", "atoms": [[0.5, 0.2], [0.4, 0.8]]},
                "cost0": {"kind": "point_mass", "value": 0.1},
                "cost1": {"kind": "point_mass", "value": 0.1},
            })

    def test_degeneracy_flag(self, uniform_prior, point_prior):
        assert not uniform_prior.is_degenerate
        assert point_prior.is_degenerate


class TestPosteriorBitProb:
    def test_flat_mixing(self, uniform_prior):
        assert posterior_bit_prob(uniform_prior, 1) == pytest.approx(2.0 / 3.0)
        assert posterior_bit_prob(uniform_prior, 0) == pytest.approx(1.0 / 3.0)

    def test_beta22_mixing(self):
        prior = PriorSpec.from_dict({
            "family": "conditional_iid",
            "mixing": {"kind": "beta", "a": 2.0, "b": 2.0},
            "cost0": {"kind": "uniform", "lo": 0.0, "hi": 1.0},
            "cost1": {"kind": "uniform", "lo": 0.0, "hi": 1.0},
        })
        assert posterior_bit_prob(prior, 1) == pytest.approx(3.0 / 5.0)
        assert posterior_bit_prob(prior, 0) == pytest.approx(2.0 / 5.0)

    def test_point_mixing_is_uninformative(self, point_prior):
        assert posterior_bit_prob(point_prior, 1) == 0.5
        assert posterior_bit_prob(point_prior, 0) == 0.5

    def test_atom_reweighting(self, atom_prior):
        # E[theta^2]/E[theta] and E[theta(1-theta)]/E[1-theta] for the
        # half/half mixture over {0.2, 0.8}.
        assert posterior_bit_prob(atom_prior, 1) == pytest.approx(0.68)
        assert posterior_bit_prob(atom_prior, 0) == pytest.approx(0.32)

    def test_informative_requirement(self, point_prior):
        with pytest.raises(ValueError):
            posterior_bit_prob(point_prior, 1, require_informative=True)

    def test_posterior_gap_positive_for_beta(self):
        for a, b in ((1.0, 1.0), (2.0, 5.0), (0.5, 0.5), (3.0, 1.0)):
            prior = PriorSpec.from_dict({
                "family": "conditional_iid",
                "mixing": {"kind": "beta", "a": a, "b": b},
                "cost0": {"kind": "uniform", "lo": 0.0, "hi": 1.0},
                "cost1": {"kind": "uniform", "lo": 0.0, "hi": 1.0},
            })
            assert posterior_bit_prob(prior, 1) > posterior_bit_prob(prior, 0)

    def test_sampled_frequency_matches_closed_form(self, uniform_prior):
        # Pairs of bits drawn through the latent rate: the conditional
        # frequency of a peer one must match the closed form.
        rng = np.random.default_rng(99)
        m = 400_000
        theta = uniform_prior.theta_sample(rng, m)
        first = rng.random(m) < theta
        second = rng.random(m) < theta
        freq = second[first].mean()
        p1 = posterior_bit_prob(uniform_prior, 1)
        sigma = math.sqrt(p1 * (1 - p1) / first.sum())
        assert abs(freq - p1) <= 3 * sigma


class TestPosteriorClampedMean:
    def test_against_quadrature_oracle(self, uniform_prior):
        # Independent oracle: exact beta-binomial mixture of the clamped
        # Laplace location family, integrated by quadrature.
        n, eps = 20, 0.2
        oracle = _clamped_mean_oracle(1.0, 1.0, bit=1, n=n, eps=eps)
        est = posterior_clamped_mean(uniform_prior, 1, n, eps, samples=400_000, seed=11)
        assert est == pytest.approx(oracle, abs=0.0025)
        oracle0 = _clamped_mean_oracle(1.0, 1.0, bit=0, n=n, eps=eps)
        est0 = posterior_clamped_mean(uniform_prior, 0, n, eps, samples=400_000, seed=12)
        assert est0 == pytest.approx(oracle0, abs=0.0025)

    def test_noise_free_limit(self, uniform_prior):
        est = posterior_clamped_mean(uniform_prior, 1, 10_000, 1e6, samples=20_000, seed=4)
        assert abs(est - 2.0 / 3.0) < 0.01

    def test_disabled_noise_point_rate(self, point_prior):
        est = posterior_clamped_mean(point_prior, 1, 500, 1.0, samples=50_000,
                                     seed=2, noise_disabled=True)
        assert abs(est - 0.5) < 0.01

    def test_deterministic_given_seed(self, uniform_prior):
        a = posterior_clamped_mean(uniform_prior, 1, 50, 0.5, samples=10_000, seed=7)
        b = posterior_clamped_mean(uniform_prior, 1, 50, 0.5, samples=10_000, seed=7)
        assert a == b


class TestSamplePopulation:
    def test_degenerate_population(self):
        prior = PriorSpec.from_dict({
            "family": "conditional_iid",
            "mixing": {"kind": "point", "theta": 1.0},
            "cost0": {"kind": "point_mass", "value": 0.9},
            "cost1": {"kind": "point_mass", "value": 0.2},
        })
        pop = sample_population(prior, 3, seed=0)
        assert pop.bits.tolist() == [1, 1, 1]
        assert pop.costs.tolist() == [0.2, 0.2, 0.2]

    def test_determinism(self, uniform_prior):
        a = sample_population(uniform_prior, 50, seed=123)
        b = sample_population(uniform_prior, 50, seed=123)
        assert np.array_equal(a.bits, b.bits)
        assert np.array_equal(a.costs, b.costs)

    def test_mean_bit_fraction(self, uniform_prior):
        # Averaged over many populations the bit fraction centers on the
        # mixing mean 1/2; per-population variance is dominated by the
        # latent rate, so average across populations.
        fractions = [
            sample_population(uniform_prior, 200, seed=s).bits.mean()
            for s in range(500)
        ]
        sigma = math.sqrt(1.0 / 12.0 / len(fractions))
        assert abs(np.mean(fractions) - 0.5) <= 3 * sigma

    def test_costs_follow_bit_conditional_distribution(self):
        prior = PriorSpec.from_dict({
            "family": "conditional_iid",
            "mixing": {"kind": "point", "theta": 0.3},
            "cost0": {"kind": "uniform", "lo": 0.0, "hi": 1.0},
            "cost1": {"kind": "uniform", "lo": 2.0, "hi": 3.0},
        })
        pop = sample_population(prior, 20_000, seed=5)
        ones = pop.bits == 1
        assert np.all(pop.costs[ones] >= 2.0)
        assert np.all(pop.costs[~ones] <= 1.0)
        sigma = math.sqrt(1.0 / 12.0 / ones.sum())
        assert abs(pop.costs[ones].mean() - 2.5) <= 3 * sigma

    def test_exchangeability_of_fixed_indices(self, atom_prior):
        first_bits, last_bits, first_costs, last_costs = [], [], [], []
        for s in range(4000):
            pop = sample_population(atom_prior, 4, seed=s)
            first_bits.append(pop.bits[0])
            last_bits.append(pop.bits[-1])
            first_costs.append(pop.costs[0])
            last_costs.append(pop.costs[-1])
        m = len(first_bits)
        rate_sigma = math.sqrt(0.25 / m)
        assert abs(np.mean(first_bits) - np.mean(last_bits)) <= 3 * rate_sigma * math.sqrt(2)
        cost_sigma = np.std(first_costs) / math.sqrt(m)
        assert abs(np.mean(first_costs) - np.mean(last_costs)) <= 3 * cost_sigma * math.sqrt(2)

    def test_population_arrays_read_only(self, uniform_prior):
        pop = sample_population(uniform_prior, 10, seed=1)
        with pytest.raises(ValueError):
            pop.bits[0] = 0
        with pytest.raises(ValueError):
            pop.costs[0] = 0.0

    def test_population_validation(self):
        with pytest.raises(ValueError):
            Population(bits=np.array([0, 2]), costs=np.array([0.1, 0.2]))
        with pytest.raises(ValueError):
            Population(bits=np.array([0, 1]), costs=np.array([0.1, -0.2]))

    def test_agents_iterator(self, uniform_prior):
        pop = sample_population(uniform_prior, 5, seed=2)
        agents = list(pop.agents())
        assert len(agents) == 5
        assert agents[0] == (int(pop.bits[0]), float(pop.costs[0]))


class TestCostThreshold:
    def test_zero_costs(self):
        prior = _equal_cost_prior({"kind": "point_mass", "value": 0.0})
        assert cost_threshold(prior, 0.1, 0.1, 100, 1000, 0) == 0.0

    def test_point_mass_costs_exact(self):
        prior = _equal_cost_prior({"kind": "point_mass", "value": 0.7})
        assert cost_threshold(prior, 0.1, 0.1, 50, 1000, 0) == 0.7

    def test_uniform_costs_against_binomial_oracle(self, uniform_prior):
        n, alpha, delta = 100, 0.1, 0.1
        tau, tau_group, tau_marginal = cost_threshold_parts(
            uniform_prior, alpha, delta, n, trials=1000, seed=0
        )
        assert tau_marginal == pytest.approx(0.9)
        # Oracle: smallest grid multiple of 1e-4 where at least 90 of 100
        # uniform costs land below it with probability >= 0.9.
        need = math.ceil((1 - alpha) * n)
        k = next(
            k for k in range(1, 10001)
            if stats.binom.sf(need - 1, n, k / 10000.0) >= 1 - delta
        )
        assert tau_group == pytest.approx(k / 10000.0, abs=1e-12)
        assert tau == max(tau_group, tau_marginal)

    def test_degenerate_rate_mixed_costs_exact(self):
        # With a degenerate latent rate the participation probability is an
        # exact binomial in the half/half cost mixture, so the Monte Carlo
        # path must land on the same grid point as direct computation.
        prior = PriorSpec.from_dict({
            "family": "conditional_iid",
            "mixing": {"kind": "point", "theta": 0.5},
            "cost0": {"kind": "uniform", "lo": 0.0, "hi": 1.0},
            "cost1": {"kind": "uniform", "lo": 0.0, "hi": 2.0},
        })
        n, alpha, delta = 60, 0.1, 0.1
        _, tau_group, _ = cost_threshold_parts(prior, alpha, delta, n,
                                               trials=20_000, seed=3)
        need = math.ceil((1 - alpha) * n)

        def mixture_cdf(t):
            return 0.5 * min(t, 1.0) + 0.5 * min(t / 2.0, 1.0)

        k = next(
            k for k in range(1, 20001)
            if stats.binom.sf(need - 1, n, mixture_cdf(k / 10000.0)) >= 1 - delta
        )
        assert tau_group == pytest.approx(k / 10000.0, abs=1e-12)

    def test_atom_rate_close_to_exact_mixture(self, atom_prior):
        n, alpha, delta = 50, 0.1, 0.1
        _, tau_group, _ = cost_threshold_parts(atom_prior, alpha, delta, n,
                                               trials=100_000, seed=9)
        need = math.ceil((1 - alpha) * n)

        def group_prob(t):
            total = 0.0
            for w, theta in ((0.5, 0.2), (0.5, 0.8)):
                g = theta * min(t / 2.0, 1.0) + (1 - theta) * min(t, 1.0)
                total += w * stats.binom.sf(need - 1, n, g)
            return total

        k = next(
            k for k in range(1, 20001)
            if group_prob(k / 10000.0) >= 1 - delta
        )
        assert abs(tau_group - k / 10000.0) <= 0.01

    def test_monotone_in_alpha_and_delta(self, uniform_prior):
        taus_alpha = [
            cost_threshold(uniform_prior, a, 0.1, 100, 1000, 0)
            for a in (0.05, 0.1, 0.2)
        ]
        assert taus_alpha == sorted(taus_alpha, reverse=True)
        taus_delta = [
            cost_threshold(uniform_prior, 0.1, d, 100, 1000, 0)
            for d in (0.01, 0.05, 0.2)
        ]
        assert taus_delta == sorted(taus_delta, reverse=True)

    def test_unreachable_participation_level(self):
        prior = _equal_cost_prior({"kind": "exponential", "rate": 1.0})
        with pytest.raises(CostSearchError):
            cost_threshold(prior, 1e-9, 0.001, 20_000, 1000, 0)


def _equal_cost_prior(cost_spec):
    return PriorSpec.from_dict({
        "family": "conditional_iid",
        "mixing": {"kind": "beta", "a": 1.0, "b": 1.0},
        "cost0": cost_spec,
        "cost1": cost_spec,
    })


def _clamped_mean_oracle(a, b, bit, n, eps):
    m = n - 1
    aa = a + (1 if bit == 1 else 0)
    bb = b + (1 if bit == 0 else 0)
    scale = 1.0 / eps
    total = 0.0
    for k in range(m + 1):
        w = stats.betabinom.pmf(k, m, aa, bb)
        upper = stats.laplace.sf(m - k, scale=scale)
        integral, _ = stats.laplace.expect(
            lambda x: (k + x) / m, scale=scale, lb=-k, ub=m - k
        ), None
        total += w * (upper + integral)
    return total
