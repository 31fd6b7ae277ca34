"""
Linear-Gaussian model with the encoder tied to the analytic posterior.

``z ~ N(0, I_m)`` and ``x | z ~ N(A z + c, diag(psi))``. The evidence is
``N(c, A A^T + diag(psi))`` and ``q(z | x)`` is always the exact posterior,
so the path integrand is flat at ``log p(x)`` and every training step
moves only the generative parameters.
"""

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from scipy import linalg
from scipy.stats import multivariate_normal

from tvo_gpbandit.core.errors import CapacityError, InvalidArgumentError
from tvo_gpbandit.schedule import Schedule, as_partition
from tvo_gpbandit.tvo.batch import SAMPLED, LogWeightBatch

MAX_LATENT_DIM = 4
MAX_OBSERVED_DIM = 8


@dataclass(frozen=True, eq=False)
class LinearGaussianModel:
    loading: np.ndarray
    offset: np.ndarray
    noise_variances: np.ndarray

    def __post_init__(self):
        loading = np.array(self.loading, dtype=float, ndmin=2)
        offset = np.array(self.offset, dtype=float).reshape(-1)
        noise = np.array(self.noise_variances, dtype=float).reshape(-1)
        n, m = loading.shape
        if m > MAX_LATENT_DIM or n > MAX_OBSERVED_DIM:
            raise CapacityError(
                f"dimensions (m={m}, n={n}) exceed ({MAX_LATENT_DIM}, {MAX_OBSERVED_DIM})"
            )
        if offset.shape != (n,) or noise.shape != (n,):
            raise InvalidArgumentError("offset and noise_variances need one entry per observed dim")
        if not (np.all(np.isfinite(loading)) and np.all(np.isfinite(offset))):
            raise InvalidArgumentError("loading and offset must be finite")
        if not np.all(np.isfinite(noise) & (noise > 0.0)):
            raise InvalidArgumentError("noise variances must be positive")
        for name, value in (("loading", loading), ("offset", offset), ("noise_variances", noise)):
            value.setflags(write=False)
            object.__setattr__(self, name, value)

    @property
    def m(self) -> int:
        return int(self.loading.shape[1])

    @property
    def n(self) -> int:
        return int(self.loading.shape[0])

    @classmethod
    def random(
        cls, m: int, n: int, seed: Optional[int] = None, scale: float = 1.0
    ) -> "LinearGaussianModel":
        rng = np.random.default_rng(seed)
        return cls(
            loading=scale * rng.standard_normal((n, m)),
            offset=scale * rng.standard_normal(n),
            noise_variances=np.exp(0.5 * rng.standard_normal(n)) * 0.5,
        )

    def _check_data(self, data) -> np.ndarray:
        data = np.atleast_2d(np.asarray(data, dtype=float))
        if data.shape[1] != self.n:
            raise InvalidArgumentError(f"data has {data.shape[1]} columns, model has n={self.n}")
        return data

    def evidence_covariance(self) -> np.ndarray:
        return self.loading @ self.loading.T + np.diag(self.noise_variances)

    def posterior(self, data) -> Tuple[np.ndarray, np.ndarray]:
        """Posterior means (one row per datum) and the shared posterior covariance."""
        data = self._check_data(data)
        scaled = self.loading / self.noise_variances[:, None]
        precision = np.eye(self.m) + self.loading.T @ scaled
        covariance = linalg.inv(precision)
        means = (data - self.offset) @ scaled @ covariance
        return means, 0.5 * (covariance + covariance.T)

    def log_evidence(self, data) -> np.ndarray:
        data = self._check_data(data)
        return np.atleast_1d(
            multivariate_normal.logpdf(data, mean=self.offset, cov=self.evidence_covariance())
        )

    def log_joint(self, data, z) -> np.ndarray:
        data = self._check_data(data)
        z = np.atleast_2d(z)
        prior = multivariate_normal.logpdf(z, mean=np.zeros(self.m), cov=np.eye(self.m))
        residual = data - z @ self.loading.T - self.offset
        lik = -0.5 * np.sum(
            residual**2 / self.noise_variances + np.log(2.0 * np.pi * self.noise_variances),
            axis=1,
        )
        return np.atleast_1d(prior) + lik

    def elbo(self, data) -> np.ndarray:
        return self.log_evidence(data)

    def kl(self, data) -> np.ndarray:
        return np.zeros(self._check_data(data).shape[0])

    def path_expectations(self, data, betas: Sequence[float]) -> np.ndarray:
        evidence = self.log_evidence(data)
        return np.repeat(evidence[:, None], len(np.atleast_1d(betas)), axis=1)

    def sample_latents(self, data, S: int, seed: Optional[int] = None) -> LogWeightBatch:
        """``S`` posterior draws per datum; their log weights all equal ``log p(x)``."""
        if S < 1:
            raise InvalidArgumentError(f"S must be >= 1, got {S}")
        data = self._check_data(data)
        rng = np.random.default_rng(seed)
        means, covariance = self.posterior(data)
        log_w = np.empty((data.shape[0], S))
        for i, (x, mean) in enumerate(zip(data, means)):
            z = rng.multivariate_normal(mean, covariance, size=S)
            log_q = multivariate_normal.logpdf(z, mean=mean, cov=covariance)
            log_w[i] = self.log_joint(np.repeat(x[None, :], S, axis=0), z) - log_q
        return LogWeightBatch(log_w=log_w, provenance=SAMPLED)

    def tvo_gradient(self, data, partition: Union[Schedule, Sequence[float]]) -> np.ndarray:
        """
        Gradient of the mean log evidence in the ordering of ``to_vector``.

        The integrand is flat, so every partition yields the same objective.
        Noise variances are differentiated in log coordinates.
        """
        as_partition(partition, allow_ties=True)
        data = self._check_data(data)
        covariance = self.evidence_covariance()
        factor = linalg.cho_factor(covariance, lower=True)
        precision = linalg.cho_solve(factor, np.eye(self.n))
        residual = data - self.offset
        scatter = residual.T @ residual / data.shape[0]
        d_cov = -0.5 * precision + 0.5 * precision @ scatter @ precision
        d_loading = 2.0 * d_cov @ self.loading
        d_offset = precision @ residual.mean(axis=0)
        d_log_noise = np.diag(d_cov) * self.noise_variances
        return np.concatenate([d_loading.ravel(), d_offset, d_log_noise])

    def to_vector(self) -> np.ndarray:
        return np.concatenate(
            [self.loading.ravel(), self.offset, np.log(self.noise_variances)]
        )

    def with_vector(self, values) -> "LinearGaussianModel":
        values = np.asarray(values, dtype=float)
        n, m = self.n, self.m
        if values.size != n * m + 2 * n:
            raise InvalidArgumentError(f"expected {n * m + 2 * n} parameters, got {values.size}")
        return LinearGaussianModel(
            loading=values[: n * m].reshape(n, m),
            offset=values[n * m : n * m + n],
            noise_variances=np.exp(values[n * m + n :]),
        )

    def to_dict(self) -> dict:
        return {
            "kind": "linear-gaussian",
            "loading": self.loading.tolist(),
            "offset": self.offset.tolist(),
            "noise_variances": self.noise_variances.tolist(),
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "LinearGaussianModel":
        return cls(payload["loading"], payload["offset"], payload["noise_variances"])

    def sample_data(self, N: int, seed: Optional[int] = None) -> np.ndarray:
        rng = np.random.default_rng(seed)
        z = rng.standard_normal((N, self.m))
        noise = rng.standard_normal((N, self.n)) * np.sqrt(self.noise_variances)
        return z @ self.loading.T + self.offset + noise
