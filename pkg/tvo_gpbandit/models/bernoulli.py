"""
Binary latent-variable model small enough to enumerate.

``p(z)`` is a factorised Bernoulli prior over ``K`` bits, ``p(x | z)`` a
factorised Bernoulli over ``D`` pixels with logits ``z W + c``, and
``q(z | x)`` a factorised Bernoulli encoder with logits ``x U + b``.
"""

from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np
from scipy.special import expit, logsumexp

from tvo_gpbandit.core.errors import CapacityError, InvalidArgumentError
from tvo_gpbandit.schedule import Schedule, as_partition
from tvo_gpbandit.tvo.batch import ENUMERATED, SAMPLED, LogWeightBatch, check_capacity
from tvo_gpbandit.tvo.objective import path_distribution, path_expectations

MAX_LATENTS = 12
MAX_OBSERVED = 16


def _softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


def _bernoulli_log_prob(bits: np.ndarray, logits: np.ndarray) -> np.ndarray:
    return np.sum(bits * logits - _softplus(logits), axis=-1)


def latent_states(K: int) -> np.ndarray:
    """All ``2 ** K`` bit vectors, row ``m`` holding the binary digits of ``m``."""
    check_capacity(2**K)
    return ((np.arange(2**K)[:, None] >> np.arange(K)[None, :]) & 1).astype(float)


@dataclass(frozen=True, eq=False)
class BernoulliLatentModel:
    prior_logits: np.ndarray
    decoder_weights: np.ndarray
    decoder_bias: np.ndarray
    encoder_weights: np.ndarray
    encoder_bias: np.ndarray

    def __post_init__(self):
        fields = {}
        for name in (
            "prior_logits",
            "decoder_weights",
            "decoder_bias",
            "encoder_weights",
            "encoder_bias",
        ):
            value = np.array(getattr(self, name), dtype=float)
            if not np.all(np.isfinite(value)):
                raise InvalidArgumentError(f"{name} must be finite")
            value.setflags(write=False)
            fields[name] = value
        K, D = fields["decoder_weights"].shape
        if K > MAX_LATENTS:
            raise CapacityError(f"K={K} exceeds the enumerable limit of {MAX_LATENTS}")
        if D > MAX_OBSERVED:
            raise CapacityError(f"D={D} exceeds the limit of {MAX_OBSERVED} observed bits")
        expected = {
            "prior_logits": (K,),
            "decoder_bias": (D,),
            "encoder_weights": (D, K),
            "encoder_bias": (K,),
        }
        for name, shape in expected.items():
            if fields[name].shape != shape:
                raise InvalidArgumentError(
                    f"{name} has shape {fields[name].shape}, expected {shape}"
                )
        for name, value in fields.items():
            object.__setattr__(self, name, value)

    @property
    def K(self) -> int:
        return int(self.decoder_weights.shape[0])

    @property
    def D(self) -> int:
        return int(self.decoder_weights.shape[1])

    @classmethod
    def random(
        cls, K: int, D: int, seed: Optional[int] = None, scale: float = 1.0
    ) -> "BernoulliLatentModel":
        rng = np.random.default_rng(seed)
        return cls(
            prior_logits=scale * rng.standard_normal(K),
            decoder_weights=scale * rng.standard_normal((K, D)),
            decoder_bias=scale * rng.standard_normal(D),
            encoder_weights=scale * rng.standard_normal((D, K)),
            encoder_bias=scale * rng.standard_normal(K),
        )

    def _check_data(self, data) -> np.ndarray:
        data = np.atleast_2d(np.asarray(data, dtype=float))
        if data.shape[1] != self.D:
            raise InvalidArgumentError(f"data has {data.shape[1]} columns, model has D={self.D}")
        return data

    # enumeration

    def _log_joint_table(self, data: np.ndarray):
        states = latent_states(self.K)
        log_prior = _bernoulli_log_prob(states, self.prior_logits)
        pixel_logits = states @ self.decoder_weights + self.decoder_bias
        log_lik = data @ pixel_logits.T - np.sum(_softplus(pixel_logits), axis=1)
        encoder_logits = data @ self.encoder_weights + self.encoder_bias
        log_q = encoder_logits @ states.T - np.sum(_softplus(encoder_logits), axis=1)[:, None]
        return states, log_prior[None, :] + log_lik, log_q

    def enumerate_latents(self, data) -> LogWeightBatch:
        data = self._check_data(data)
        _, log_joint, log_q = self._log_joint_table(data)
        return LogWeightBatch(log_w=log_joint - log_q, provenance=ENUMERATED, log_q=log_q)

    def sample_latents(self, data, S: int, seed: Optional[int] = None) -> LogWeightBatch:
        """``S`` draws per datum from the encoder, deterministic for a given seed."""
        if S < 1:
            raise InvalidArgumentError(f"S must be >= 1, got {S}")
        data = self._check_data(data)
        rng = np.random.default_rng(seed)
        encoder_logits = data @ self.encoder_weights + self.encoder_bias
        draws = (rng.random((data.shape[0], S, self.K)) < expit(encoder_logits)[:, None, :])
        z = draws.astype(float)
        log_q = _bernoulli_log_prob(z, encoder_logits[:, None, :])
        log_prior = _bernoulli_log_prob(z, self.prior_logits)
        pixel_logits = z @ self.decoder_weights + self.decoder_bias
        log_lik = _bernoulli_log_prob(data[:, None, :], pixel_logits)
        return LogWeightBatch(log_w=log_prior + log_lik - log_q, provenance=SAMPLED)

    # exact quantities, one value per datum

    def log_evidence(self, data) -> np.ndarray:
        data = self._check_data(data)
        _, log_joint, _ = self._log_joint_table(data)
        return logsumexp(log_joint, axis=1)

    def elbo(self, data) -> np.ndarray:
        return self.path_expectations(data, [0.0])[:, 0]

    def kl(self, data) -> np.ndarray:
        """``KL(q(z | x) || p(z | x)) = log p(x) - ELBO``."""
        data = self._check_data(data)
        return np.maximum(self.log_evidence(data) - self.elbo(data), 0.0)

    def path_expectations(self, data, betas: Sequence[float]) -> np.ndarray:
        return path_expectations(self.enumerate_latents(data), betas)

    def tvo_gradient(
        self, data, partition: Union[Schedule, Sequence[float]]
    ) -> np.ndarray:
        """
        Exact gradient of the left-Riemann TVO (averaged over data) in the
        ordering of ``to_vector``.

        With ``s = log w`` and ``E_j`` its mean under ``pi_j``, every state
        gets a decoder-side weight ``sum_j delta_j pi_j (1 + beta_j (s - E_j))``
        and an encoder-side weight ``sum_j delta_j pi_j (-1 + (1 - beta_j)(s - E_j))``,
        which multiply the score functions of ``log p(x, z)`` and ``log q(z | x)``.
        """
        data = self._check_data(data)
        knots = as_partition(partition, allow_ties=True)
        states, log_joint, log_q = self._log_joint_table(data)
        batch = LogWeightBatch(log_w=log_joint - log_q, provenance=ENUMERATED, log_q=log_q)
        s = batch.log_w

        coef_p = np.zeros_like(s)
        coef_q = np.zeros_like(s)
        for beta, width in zip(knots[:-1], np.diff(knots)):
            if width == 0.0:
                continue
            pi = path_distribution(batch, beta)
            centred = s - np.sum(pi * s, axis=1, keepdims=True)
            coef_p += width * pi * (1.0 + beta * centred)
            coef_q += width * pi * (-1.0 + (1.0 - beta) * centred)

        n = data.shape[0]
        state_mass = coef_p.sum(axis=0)
        pixel_probs = expit(states @ self.decoder_weights + self.decoder_bias)

        grad_prior = (state_mass @ states - state_mass.sum() * expit(self.prior_logits)) / n
        grad_dec_w = states.T @ (coef_p.T @ data - state_mass[:, None] * pixel_probs) / n
        grad_dec_b = (coef_p.sum(axis=1) @ data - state_mass @ pixel_probs) / n

        encoder_probs = expit(data @ self.encoder_weights + self.encoder_bias)
        encoder_score = coef_q @ states - coef_q.sum(axis=1)[:, None] * encoder_probs
        grad_enc_w = data.T @ encoder_score / n
        grad_enc_b = encoder_score.sum(axis=0) / n

        return np.concatenate(
            [
                grad_prior,
                grad_dec_w.ravel(),
                grad_dec_b,
                grad_enc_w.ravel(),
                grad_enc_b,
            ]
        )

    # parameter vector

    def to_vector(self) -> np.ndarray:
        return np.concatenate(
            [
                self.prior_logits,
                self.decoder_weights.ravel(),
                self.decoder_bias,
                self.encoder_weights.ravel(),
                self.encoder_bias,
            ]
        )

    def with_vector(self, values) -> "BernoulliLatentModel":
        values = np.asarray(values, dtype=float)
        K, D = self.K, self.D
        sizes = [K, K * D, D, D * K, K]
        if values.size != sum(sizes):
            raise InvalidArgumentError(f"expected {sum(sizes)} parameters, got {values.size}")
        parts = np.split(values, np.cumsum(sizes)[:-1])
        return BernoulliLatentModel(
            prior_logits=parts[0],
            decoder_weights=parts[1].reshape(K, D),
            decoder_bias=parts[2],
            encoder_weights=parts[3].reshape(D, K),
            encoder_bias=parts[4],
        )

    def to_dict(self) -> dict:
        return {
            "kind": "bernoulli",
            "prior_logits": self.prior_logits.tolist(),
            "decoder_weights": self.decoder_weights.tolist(),
            "decoder_bias": self.decoder_bias.tolist(),
            "encoder_weights": self.encoder_weights.tolist(),
            "encoder_bias": self.encoder_bias.tolist(),
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "BernoulliLatentModel":
        return cls(
            prior_logits=payload["prior_logits"],
            decoder_weights=payload["decoder_weights"],
            decoder_bias=payload["decoder_bias"],
            encoder_weights=payload["encoder_weights"],
            encoder_bias=payload["encoder_bias"],
        )

    def sample_data(self, N: int, seed: Optional[int] = None) -> np.ndarray:
        """Ancestral draws of ``N`` binary observations from ``p(z) p(x | z)``."""
        rng = np.random.default_rng(seed)
        z = (rng.random((N, self.K)) < expit(self.prior_logits)).astype(float)
        pixel_probs = expit(z @ self.decoder_weights + self.decoder_bias)
        return (rng.random((N, self.D)) < pixel_probs).astype(float)
