import logging

import numpy as np
import pytest

from tvo_gpbandit.core.log import PACKAGE_LOGGER
from tvo_gpbandit.gp.kernel import KernelHyperparams
from tvo_gpbandit.gp.process import GPState
from tvo_gpbandit.models.bernoulli import BernoulliLatentModel
from tvo_gpbandit.models.linear_gaussian import LinearGaussianModel


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_bernoulli():
    """K=4 latents, D=6 pixels, parameters large enough for a curved integrand."""
    return BernoulliLatentModel.random(4, 6, seed=7, scale=1.0)


@pytest.fixture
def bernoulli_data(small_bernoulli):
    return small_bernoulli.sample_data(10, seed=8)


@pytest.fixture
def linear_gaussian():
    return LinearGaussianModel.random(2, 4, seed=3)


@pytest.fixture
def gaussian_data(linear_gaussian):
    return linear_gaussian.sample_data(20, seed=4)


def _random_gp_state(rng, n=6, dim=2, hyp=None) -> GPState:
    hyp = hyp or KernelHyperparams(lengthscale=0.4, omega=0.1, noise_variance=0.05)
    state = GPState(hyp)
    for t in range(1, n + 1):
        state.add_observation(rng.uniform(0.05, 0.95, size=dim), t, rng.standard_normal())
    return state


@pytest.fixture
def make_gp_state(rng):
    """Factory for GP states with ``n`` random observations in rounds 1..n."""

    def make(n=6, dim=2, hyp=None):
        return _random_gp_state(rng, n, dim, hyp)

    return make


@pytest.fixture
def gp_state(make_gp_state):
    return make_gp_state()


@pytest.fixture(autouse=True)
def _reset_package_logger():
    """Undo configure_logging so caplog sees package records in every test."""
    yield
    logger = logging.getLogger(PACKAGE_LOGGER)
    for handler in list(logger.handlers):
        if getattr(handler, "_tvo_gpbandit", False):
            logger.removeHandler(handler)
    logger.propagate = True
    logger.setLevel(logging.NOTSET)
