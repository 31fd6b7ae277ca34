import itertools
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from tvo_gpbandit.core.errors import InvalidArgumentError, NumericError
from tvo_gpbandit.models.bernoulli import BernoulliLatentModel
from tvo_gpbandit.schedule import linear_schedule, log_schedule, random_schedule
from tvo_gpbandit.tvo.batch import ENUMERATED, LogWeightBatch
from tvo_gpbandit.tvo.moments import moments_schedule
from tvo_gpbandit.tvo.objective import (
    batch_log_evidence,
    exact_log_evidence,
    exact_path_expectation,
    path_distribution,
    path_expectations,
    snis_expectation,
    snis_standard_error,
    snis_weights,
    tvo_lower,
    tvo_upper,
)


def posterior_encoder_model():
    """One latent bit whose encoder equals the exact posterior for both pixel values."""
    prior = np.array([0.3])
    weights = np.array([[1.2]])
    bias = np.array([-0.4])
    model = BernoulliLatentModel(prior, weights, bias, np.zeros((1, 1)), np.zeros(1))
    data = np.array([[0.0], [1.0]])
    batch = model.enumerate_latents(data)
    posterior_one = np.exp(batch.log_q[:, 1] + batch.log_w[:, 1] - batch_log_evidence(batch))
    logits = np.log(posterior_one) - np.log1p(-posterior_one)
    # encoder logits are x U + b, so b is the x=0 logit and U the difference
    encoded = BernoulliLatentModel(
        prior, weights, bias, np.array([[logits[1] - logits[0]]]), np.array([logits[0]])
    )
    return encoded, data


class TestSnis:
    def test_zero_beta_is_arithmetic_mean(self, rng):
        batch = LogWeightBatch(rng.standard_normal((3, 7)))
        assert_allclose(snis_expectation(batch, 0.0), batch.log_w.mean(axis=1))

    @pytest.mark.parametrize("beta", [0.0, 0.3, 1.0])
    def test_weights_normalised(self, rng, beta):
        batch = LogWeightBatch(5 * rng.standard_normal((4, 9)))
        assert_allclose(snis_weights(batch, beta).sum(axis=1), 1.0)

    def test_degenerate_proposal(self):
        batch = LogWeightBatch(np.array([[-np.inf, -np.inf], [0.0, 1.0]]))
        with pytest.raises(NumericError):
            snis_expectation(batch, 0.5)

    def test_zero_weight_draws_are_ignored(self):
        batch = LogWeightBatch(np.array([[-np.inf, 0.5, 0.5]]))
        assert snis_expectation(batch, 1.0)[0] == pytest.approx(0.5)

    def test_zero_weight_draw_sends_zero_beta_mean_to_minus_infinity(self):
        batch = LogWeightBatch(np.array([[-np.inf, -1.0]]))
        assert snis_expectation(batch, 0.0)[0] == -np.inf
        assert snis_standard_error(batch, 0.0)[0] == np.inf
        assert snis_expectation(batch, 0.5)[0] == pytest.approx(-1.0)
        assert np.isfinite(snis_standard_error(batch, 0.5)[0])

    def test_rejects_enumerated_batch(self, small_bernoulli, bernoulli_data):
        with pytest.raises(InvalidArgumentError):
            snis_expectation(small_bernoulli.enumerate_latents(bernoulli_data), 0.5)

    @pytest.mark.parametrize("beta", [-0.1, 1.1, np.nan])
    def test_rejects_beta_outside_unit_interval(self, rng, beta):
        with pytest.raises(InvalidArgumentError):
            snis_expectation(LogWeightBatch(rng.standard_normal((1, 3))), beta)

    def test_matches_enumeration_within_three_standard_errors(self):
        model = BernoulliLatentModel.random(2, 3, seed=21, scale=1.0)
        datum = model.sample_data(1, seed=22)
        batch = model.sample_latents(datum, 100_000, seed=23)
        for beta in (0.0, 0.5, 1.0):
            estimate = snis_expectation(batch, beta)[0]
            error = snis_standard_error(batch, beta)[0]
            exact = exact_path_expectation(model, datum, beta)
            assert abs(estimate - exact) <= 3 * error + 1e-12


class TestBatch:
    def test_rejects_nan_and_positive_infinity(self):
        with pytest.raises(InvalidArgumentError):
            LogWeightBatch(np.array([[0.0, np.nan]]))
        with pytest.raises(InvalidArgumentError):
            LogWeightBatch(np.array([[0.0, np.inf]]))

    def test_enumerated_masses_must_sum_to_one(self):
        with pytest.raises(InvalidArgumentError):
            LogWeightBatch(np.zeros((1, 2)), ENUMERATED, np.log([[0.5, 0.6]]))

    def test_enumerated_needs_masses(self):
        with pytest.raises(InvalidArgumentError):
            LogWeightBatch(np.zeros((1, 2)), ENUMERATED)


class TestExactQuantities:
    def test_two_state_evidence(self):
        log_q = np.log([[0.5, 0.5]])
        log_joint = np.log([[0.5 * 0.2, 0.5 * 0.6]])
        batch = LogWeightBatch(log_joint - log_q, ENUMERATED, log_q)
        assert batch_log_evidence(batch)[0] == pytest.approx(math.log(0.4), abs=1e-12)

    def test_brute_force_evidence_for_eight_latents(self):
        model = BernoulliLatentModel.random(8, 5, seed=2, scale=1.0)
        datum = model.sample_data(1, seed=3)[0]

        def log_bernoulli(bits, logits):
            return sum(b * l - math.log1p(math.exp(l)) for b, l in zip(bits, logits))

        total = 0.0
        for z in itertools.product([0.0, 1.0], repeat=8):
            logits = np.asarray(z) @ model.decoder_weights + model.decoder_bias
            total += math.exp(
                log_bernoulli(z, model.prior_logits) + log_bernoulli(datum, logits)
            )
        assert exact_log_evidence(model, datum) == pytest.approx(math.log(total), abs=1e-12)

    def test_deterministic_likelihood_gives_zero(self):
        log_q = np.log([[0.25, 0.75]])
        log_prior = np.log([[0.4, 0.6]])
        batch = LogWeightBatch(log_prior - log_q, ENUMERATED, log_q)
        assert batch_log_evidence(batch)[0] == pytest.approx(0.0, abs=1e-12)

    def test_endpoints(self, small_bernoulli, bernoulli_data):
        datum = bernoulli_data[0]
        batch = small_bernoulli.enumerate_latents(datum)
        assert exact_path_expectation(small_bernoulli, datum, 0.0) == pytest.approx(
            small_bernoulli.elbo(datum)[0]
        )
        posterior = np.exp(batch.log_q + batch.log_w - batch_log_evidence(batch)[:, None])
        assert exact_path_expectation(small_bernoulli, datum, 1.0) == pytest.approx(
            float(np.sum(posterior * batch.log_w))
        )

    def test_path_distribution_at_one_is_posterior(self, small_bernoulli, bernoulli_data):
        batch = small_bernoulli.enumerate_latents(bernoulli_data)
        posterior = np.exp(batch.log_q + batch.log_w - batch_log_evidence(batch)[:, None])
        assert_allclose(path_distribution(batch, 1.0), posterior, atol=1e-12)

    def test_zero_likelihood_state_at_zero_beta(self):
        batch = LogWeightBatch([[-np.inf, 0.0]], ENUMERATED, np.log([[0.5, 0.5]]))
        assert_allclose(path_distribution(batch, 0.0), [[0.5, 0.5]])
        assert_allclose(path_distribution(batch, 0.5), [[0.0, 1.0]])
        values = path_expectations(batch, [0.0, 0.5])
        assert not np.any(np.isnan(values))
        assert values[0, 0] == -np.inf
        assert values[0, 1] == 0.0

    def test_flat_integrand_when_encoder_is_posterior(self):
        model, data = posterior_encoder_model()
        values = model.path_expectations(data, np.linspace(0, 1, 11))
        assert_allclose(values, model.log_evidence(data)[:, None].repeat(11, axis=1), atol=1e-10)

    def test_integrand_nondecreasing(self, small_bernoulli, bernoulli_data):
        values = path_expectations(
            small_bernoulli.enumerate_latents(bernoulli_data), np.linspace(0, 1, 101)
        )
        assert np.all(np.diff(values, axis=1) >= -1e-10)


class TestBounds:
    def test_single_interval_lower_is_elbo(self, small_bernoulli, bernoulli_data):
        assert tvo_lower(small_bernoulli, [0.0, 1.0], bernoulli_data) == pytest.approx(
            float(np.mean(small_bernoulli.elbo(bernoulli_data)))
        )

    def test_single_interval_upper_is_posterior_expectation(self, small_bernoulli, bernoulli_data):
        expected = np.mean(small_bernoulli.path_expectations(bernoulli_data, [1.0]))
        assert tvo_upper(small_bernoulli, [0.0, 1.0], bernoulli_data) == pytest.approx(expected)

    @pytest.mark.parametrize("seed", range(5))
    def test_sandwich(self, seed):
        model = BernoulliLatentModel.random(8, 6, seed=seed, scale=1.0)
        data = model.sample_data(5, seed=seed + 100)
        evidence = float(np.mean(model.log_evidence(data)))
        for partition in (linear_schedule(1), linear_schedule(5), log_schedule(10)):
            assert tvo_lower(model, partition, data) <= evidence + 1e-10
            assert tvo_upper(model, partition, data) >= evidence - 1e-10

    def test_refining_tightens(self, small_bernoulli, bernoulli_data):
        coarse = tvo_lower(small_bernoulli, linear_schedule(2), bernoulli_data)
        fine = tvo_lower(small_bernoulli, linear_schedule(4), bernoulli_data)
        assert fine >= coarse - 1e-12

    def test_flat_integrand_bounds_coincide(self):
        model, data = posterior_encoder_model()
        evidence = float(np.mean(model.log_evidence(data)))
        assert tvo_lower(model, log_schedule(5), data) == pytest.approx(evidence, abs=1e-10)
        assert tvo_upper(model, log_schedule(5), data) == pytest.approx(evidence, abs=1e-10)

    def test_batch_source_matches_model_source(self, small_bernoulli, bernoulli_data):
        batch = small_bernoulli.enumerate_latents(bernoulli_data)
        assert tvo_lower(batch, linear_schedule(3)) == pytest.approx(
            tvo_lower(small_bernoulli, linear_schedule(3), bernoulli_data)
        )

    def test_model_source_needs_data(self, small_bernoulli):
        with pytest.raises(InvalidArgumentError):
            tvo_lower(small_bernoulli, [0.0, 1.0])


def sweep_model(seed):
    rng = np.random.default_rng(seed)
    model = BernoulliLatentModel.random(int(rng.integers(1, 9)), 6, seed=seed, scale=1.5)
    return model, model.sample_data(4, seed=seed + 1)


@pytest.mark.slow
class TestBoundsAtScale:
    @pytest.mark.parametrize("seed", range(50))
    def test_sandwich_over_schedules(self, seed):
        model, data = sweep_model(seed)
        evidence = float(np.mean(model.log_evidence(data)))
        rng = np.random.default_rng(seed)
        for d in (1, 2, 5, 10):
            schedules = [linear_schedule(d), moments_schedule(model, data, d)]
            if d >= 2:
                schedules.append(log_schedule(d, 0.025))
                schedules += [random_schedule(d - 1, rng) for _ in range(20)]
            for schedule in schedules:
                assert tvo_lower(model, schedule, data) <= evidence + 1e-10
                assert tvo_upper(model, schedule, data) >= evidence - 1e-10

    @pytest.mark.parametrize("seed", range(10))
    def test_doubling_the_partition_never_loosens(self, seed):
        model, data = sweep_model(100 + seed)
        d = 1
        previous = tvo_lower(model, linear_schedule(d), data)
        while d < 512:
            d *= 2
            current = tvo_lower(model, linear_schedule(d), data)
            assert current >= previous - 1e-12
            previous = current

    @pytest.mark.parametrize("seed", range(20))
    def test_snis_matches_enumeration(self, seed):
        model, _ = sweep_model(200 + seed)
        datum = model.sample_data(1, seed=300 + seed)
        beta = float(np.random.default_rng(seed).uniform(0.0, 1.0))
        batch = model.sample_latents(datum, 100_000, seed=400 + seed)
        estimate = snis_expectation(batch, beta)[0]
        error = snis_standard_error(batch, beta)[0]
        assert abs(estimate - exact_path_expectation(model, datum, beta)) <= 3 * error + 1e-12
