from typing import Optional, Protocol, Sequence, Union

import numpy as np

from tvo_gpbandit.core.errors import InvalidArgumentError
from tvo_gpbandit.schedule import Schedule


class TVOModel(Protocol):
    """What training, the bounds and the bandit need from a generative model."""

    def log_evidence(self, data: np.ndarray) -> np.ndarray: ...

    def elbo(self, data: np.ndarray) -> np.ndarray: ...

    def kl(self, data: np.ndarray) -> np.ndarray: ...

    def path_expectations(
        self, data: np.ndarray, betas: Sequence[float]
    ) -> np.ndarray: ...

    def tvo_gradient(
        self, data: np.ndarray, partition: Union[Schedule, Sequence[float]]
    ) -> np.ndarray: ...

    def to_vector(self) -> np.ndarray: ...

    def with_vector(self, values: np.ndarray) -> "TVOModel": ...

    def to_dict(self) -> dict: ...


def enumerate_latents(model, datum):
    """Every latent state of ``datum`` with its exact log q mass."""
    if not hasattr(model, "enumerate_latents"):
        raise InvalidArgumentError(f"{type(model).__name__} has no enumerable latent space")
    return model.enumerate_latents(datum)


def sample_latents(model, datum, S: int, seed: Optional[int] = None):
    return model.sample_latents(datum, S, seed=seed)


def tvo_gradient_exact(
    model: TVOModel, data: np.ndarray, partition: Union[Schedule, Sequence[float]]
) -> np.ndarray:
    return model.tvo_gradient(np.atleast_2d(data), partition)
