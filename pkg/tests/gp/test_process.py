import numpy as np
import pytest
from numpy.testing import assert_allclose

from tvo_gpbandit.core.errors import InvalidArgumentError
from tvo_gpbandit.gp.kernel import KernelHyperparams, cross_covariance, gram_matrix
from tvo_gpbandit.gp.process import (
    GPState,
    HyperparamBounds,
    fit_map,
    grad_hyperparams,
    log_marginal_likelihood,
    posterior,
    predict,
    predict_with_gradient,
)


def dense_posterior(state, query):
    system = gram_matrix(state.points, state.hyp) + state.hyp.noise_variance * np.eye(state.n)
    k_star = cross_covariance(query[None, :], state.points, state.hyp)[0]
    inverse = np.linalg.inv(system)
    return k_star @ inverse @ state.targets, 1.0 - k_star @ inverse @ k_star


def dense_log_marginal(state):
    system = gram_matrix(state.points, state.hyp) + state.hyp.noise_variance * np.eye(state.n)
    y = state.targets
    return (
        -0.5 * y @ np.linalg.inv(system) @ y
        - 0.5 * np.linalg.slogdet(system)[1]
        - 0.5 * state.n * np.log(2 * np.pi)
    )


class TestPosterior:
    def test_prior_on_empty_history(self):
        assert posterior(GPState(), [0.3, 0.6], 1) == (0.0, 1.0)

    def test_interpolates_noiseless_observation(self):
        state = GPState(KernelHyperparams(noise_variance=1e-12))
        state.add_observation([0.4], 1, 2.0)
        mean, variance = posterior(state, [0.4], 1)
        assert mean == pytest.approx(2.0, abs=1e-6)
        assert variance == pytest.approx(0.0, abs=1e-6)

    def test_matches_dense_solve(self, make_gp_state):
        state = make_gp_state(n=5, dim=3)
        query = np.array([0.2, 0.5, 0.8])
        mean, variance = posterior(state, query, 6)
        expected_mean, expected_variance = dense_posterior(state, np.append(query, 6))
        assert mean == pytest.approx(expected_mean, rel=1e-8)
        assert variance == pytest.approx(expected_variance, rel=1e-8)

    def test_batch_predict_matches_single_queries(self, gp_state, rng):
        queries = rng.uniform(0.05, 0.95, (4, 2))
        means, variances = predict(gp_state, queries, 7)
        for query, mean, variance in zip(queries, means, variances):
            assert (mean, variance) == pytest.approx(posterior(gp_state, query, 7))

    def test_dimension_mismatch(self, gp_state):
        with pytest.raises(InvalidArgumentError):
            gp_state.add_observation([0.1, 0.2, 0.3], 7, 0.0)

    def test_variance_at_training_inputs_stays_below_prior(self, gp_state):
        _, variances = predict(gp_state, gp_state.points[:, :-1], gp_state.points[:, -1])
        assert np.all(variances <= 1.0 + 1e-8)
        assert np.all(variances >= 0.0)

    def test_observation_order_does_not_matter(self, rng):
        rows = [(rng.uniform(0.05, 0.95, 3), t, rng.standard_normal()) for t in range(1, 7)]
        forward, shuffled = GPState(), GPState()
        for beta, t, y in rows:
            forward.add_observation(beta, t, y)
        for k in rng.permutation(len(rows)):
            shuffled.add_observation(*rows[k])
        queries = rng.uniform(0.05, 0.95, (10, 3))
        for first, second in zip(predict(forward, queries, 7), predict(shuffled, queries, 7)):
            assert_allclose(first, second, rtol=1e-9, atol=1e-12)

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_new_observation_never_increases_variance(self, make_gp_state, rng, seed):
        state = make_gp_state(n=5, dim=2)
        queries = rng.uniform(0.05, 0.95, (50, 2))
        _, before = predict(state, queries, 6)
        state.add_observation(np.random.default_rng(seed).uniform(0.05, 0.95, 2), 6, 0.3)
        _, after = predict(state, queries, 6)
        assert np.all(after <= before + 1e-10)


class TestLogMarginal:
    def test_single_point_closed_form(self):
        state = GPState(KernelHyperparams(noise_variance=0.25))
        state.add_observation([0.5], 1, 1.0)
        assert log_marginal_likelihood(state) == pytest.approx(-1.43051031, abs=1e-7)

    def test_zero_targets_leave_determinant_term(self, make_gp_state):
        state = make_gp_state(n=4)
        state.set_targets(np.zeros(4))
        system = gram_matrix(state.points, state.hyp) + state.hyp.noise_variance * np.eye(4)
        expected = -0.5 * np.linalg.slogdet(system)[1] - 2.0 * np.log(2 * np.pi)
        assert log_marginal_likelihood(state) == pytest.approx(expected, rel=1e-10)

    def test_matches_dense_oracle(self, make_gp_state):
        state = make_gp_state(n=6)
        assert log_marginal_likelihood(state) == pytest.approx(dense_log_marginal(state), rel=1e-8)

    def test_needs_observations(self):
        with pytest.raises(InvalidArgumentError):
            log_marginal_likelihood(GPState())

    def test_gradient_matches_finite_differences(self, make_gp_state):
        state = make_gp_state(n=8)
        grad = grad_hyperparams(state)
        base = state.hyp.as_vector()
        h = 1e-5
        for i in range(3):
            step = np.zeros(3)
            step[i] = h
            up = log_marginal_likelihood(state.with_hyperparams(state.hyp.with_vector(base + step)))
            down = log_marginal_likelihood(
                state.with_hyperparams(state.hyp.with_vector(base - step))
            )
            assert grad[i] == pytest.approx((up - down) / (2 * h), rel=1e-4, abs=1e-7)


class TestFitMap:
    def test_never_worse_than_generating_values(self):
        truth = KernelHyperparams(lengthscale=0.3, omega=0.05, noise_variance=0.01)
        rng = np.random.default_rng(5)
        points = np.column_stack([rng.uniform(0, 1, 60), np.arange(1, 61)])
        gram = gram_matrix(points, truth) + truth.noise_variance * np.eye(60)
        targets = np.linalg.cholesky(gram) @ rng.standard_normal(60)
        state = GPState(truth, points, targets)

        fitted = fit_map(state, seed=0)
        assert HyperparamBounds().contains(fitted)
        assert log_marginal_likelihood(state.with_hyperparams(fitted)) >= (
            log_marginal_likelihood(state) - 1e-9
        )

    def test_duplicated_noiseless_data_pushes_noise_to_lower_bound(self):
        state = GPState(KernelHyperparams(noise_variance=0.1))
        state.add_observation([0.5], 1, 0.7)
        state.add_observation([0.5], 1, 0.7)
        fitted = fit_map(state, seed=0)
        lower = HyperparamBounds().noise_variance[0]
        assert fitted.noise_variance == pytest.approx(lower, rel=1e-3)

    def test_fewer_than_two_observations_keeps_current(self):
        state = GPState(KernelHyperparams(lengthscale=0.7))
        state.add_observation([0.5], 1, 0.3)
        assert fit_map(state) == state.hyp

    def test_warm_start_at_optimum(self, make_gp_state):
        state = make_gp_state(n=10)
        first = fit_map(state, seed=0)
        state.set_hyperparams(first)
        second = fit_map(state, seed=1)
        assert log_marginal_likelihood(state.with_hyperparams(second)) >= (
            log_marginal_likelihood(state) - 1e-9
        )


class TestPredictWithGradient:
    def test_gradients_match_finite_differences(self, gp_state):
        beta = np.array([0.3, 0.65])
        mean, variance, d_mean, d_variance = predict_with_gradient(gp_state, beta, 7)
        h = 1e-6
        for i in range(2):
            step = np.zeros(2)
            step[i] = h
            mean_up, var_up = posterior(gp_state, beta + step, 7)
            mean_down, var_down = posterior(gp_state, beta - step, 7)
            assert d_mean[i] == pytest.approx((mean_up - mean_down) / (2 * h), abs=1e-6)
            assert d_variance[i] == pytest.approx((var_up - var_down) / (2 * h), abs=1e-6)
        assert (mean, variance) == pytest.approx(posterior(gp_state, beta, 7))


class TestSerialization:
    def test_state_snapshot_round_trip(self, gp_state):
        restored = GPState.from_dict(gp_state.to_dict())
        assert restored.hyp == gp_state.hyp
        assert_allclose(restored.points, gp_state.points)
        assert posterior(restored, [0.4, 0.6], 7) == pytest.approx(
            posterior(gp_state, [0.4, 0.6], 7)
        )

    def test_empty_state_round_trip(self):
        restored = GPState.from_dict(GPState().to_dict())
        assert restored.n == 0
        assert restored.dim is None


@pytest.mark.slow
class TestAgainstDenseOraclesAtScale:
    @staticmethod
    def random_instance(seed, n_max=50):
        rng = np.random.default_rng(seed)
        hyp = KernelHyperparams(
            lengthscale=rng.uniform(0.1, 1.0),
            omega=rng.uniform(0.01, 0.5),
            noise_variance=rng.uniform(0.01, 0.5),
        )
        dim = int(rng.integers(1, 6))
        state = GPState(hyp)
        for t in range(1, int(rng.integers(1, n_max + 1)) + 1):
            state.add_observation(rng.uniform(0.05, 0.95, dim), t, rng.standard_normal())
        return state, rng.uniform(0.05, 0.95, dim), state.n + 1

    @pytest.mark.parametrize("seed", range(100))
    def test_posterior_and_evidence(self, seed):
        state, query, t = self.random_instance(seed)
        mean, variance = posterior(state, query, t)
        expected_mean, expected_variance = dense_posterior(state, np.append(query, t))
        assert mean == pytest.approx(expected_mean, rel=1e-8, abs=1e-12)
        assert variance == pytest.approx(expected_variance, rel=1e-8, abs=1e-12)
        assert log_marginal_likelihood(state) == pytest.approx(dense_log_marginal(state), rel=1e-8)

    @pytest.mark.parametrize("seed", range(20))
    def test_hyperparameter_gradient(self, seed):
        state, _, _ = self.random_instance(1000 + seed, n_max=20)
        grad = grad_hyperparams(state)
        base = state.hyp.as_vector()
        h = 1e-6
        for i in range(3):
            step = np.zeros(3)
            step[i] = h * max(abs(base[i]), 1.0)
            up = log_marginal_likelihood(state.with_hyperparams(state.hyp.with_vector(base + step)))
            down = log_marginal_likelihood(
                state.with_hyperparams(state.hyp.with_vector(base - step))
            )
            assert grad[i] == pytest.approx((up - down) / (2 * step[i]), rel=1e-4, abs=1e-6)
