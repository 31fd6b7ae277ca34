"""
Thermodynamic variational objective: path integrand and Riemann bounds.

The integrand at inverse temperature ``beta`` is the expectation of
``log w = log p(x, z) - log q(z | x)`` under the geometric mixture
``pi_beta(z | x) proportional to q(z | x) w(z) ** beta``. Sampled batches
estimate it by self-normalised importance sampling with ``q`` as proposal;
enumerated batches and models compute it exactly.
"""

import logging
from typing import Any, Optional, Sequence, Union

import numpy as np
from scipy.special import logsumexp, softmax

from tvo_gpbandit.core.errors import InvalidArgumentError, NumericError
from tvo_gpbandit.schedule import Schedule, as_partition
from tvo_gpbandit.tvo.batch import LogWeightBatch

logger = logging.getLogger(__name__)

# a LogWeightBatch or any model exposing path_expectations(data, betas)
Source = Union[LogWeightBatch, Any]


def _check_beta(betas) -> np.ndarray:
    betas = np.atleast_1d(np.asarray(betas, dtype=float))
    if np.any(~np.isfinite(betas)) or np.any(betas < 0.0) or np.any(betas > 1.0):
        raise InvalidArgumentError(f"beta must lie in [0, 1], got {betas.tolist()}")
    return betas


def _check_degenerate(log_w: np.ndarray) -> None:
    dead = np.all(np.isneginf(log_w), axis=1)
    if np.any(dead):
        raise NumericError(
            "every importance weight is zero for some datum",
            {"rows": np.flatnonzero(dead).tolist()},
        )


def snis_weights(batch: LogWeightBatch, beta: float) -> np.ndarray:
    """Normalised weights ``softmax(beta * log_w)`` per datum."""
    (beta,) = _check_beta(beta)
    _check_degenerate(batch.log_w)
    if beta == 0.0:
        return np.full(batch.log_w.shape, 1.0 / batch.S)
    return softmax(beta * batch.log_w, axis=1)


def _weighted_mean(weights: np.ndarray, log_w: np.ndarray) -> np.ndarray:
    # zero-weight states drop out; a weighted state with log w = -inf makes the mean -inf
    values = np.where(weights > 0.0, log_w, 0.0)
    return np.sum(weights * values, axis=1)


def snis_expectation(batch: LogWeightBatch, beta: float) -> np.ndarray:
    """Self-normalised estimate of the integrand at ``beta``, one value per datum."""
    if batch.is_enumerated:
        raise InvalidArgumentError("snis_expectation expects a sampled batch")
    return _weighted_mean(snis_weights(batch, beta), batch.log_w)


def snis_standard_error(batch: LogWeightBatch, beta: float) -> np.ndarray:
    """Delta-method standard error of ``snis_expectation`` per datum."""
    weights = snis_weights(batch, beta)
    mean = _weighted_mean(weights, batch.log_w)
    unbounded = np.isneginf(mean)
    values = np.where(weights > 0.0, batch.log_w, 0.0)
    centred = values - np.where(unbounded, 0.0, mean)[:, None]
    error = np.sqrt(np.sum(weights**2 * centred**2, axis=1))
    return np.where(unbounded, np.inf, error)


def path_distribution(batch: LogWeightBatch, beta: float) -> np.ndarray:
    """Exact ``pi_beta`` masses over an enumerated batch."""
    if not batch.is_enumerated:
        raise InvalidArgumentError("exact path masses need an enumerated batch")
    (beta,) = _check_beta(beta)
    _check_degenerate(batch.log_w)
    if beta == 0.0:
        return np.exp(batch.log_q)
    return softmax(batch.log_q + beta * batch.log_w, axis=1)


def path_expectations(batch: LogWeightBatch, betas: Sequence[float]) -> np.ndarray:
    """
    Integrand values for every datum and every beta, shape ``(n_data, len(betas))``.

    Enumerated batches are exact; sampled batches use SNIS.
    """
    betas = _check_beta(betas)
    out = np.empty((batch.n_data, betas.size))
    for j, beta in enumerate(betas):
        if batch.is_enumerated:
            weights = path_distribution(batch, beta)
        else:
            weights = snis_weights(batch, beta)
        out[:, j] = _weighted_mean(weights, batch.log_w)
    return out


def batch_log_evidence(batch: LogWeightBatch) -> np.ndarray:
    """``log sum_z q(z | x) w(z) = log p(x)`` per datum of an enumerated batch."""
    if not batch.is_enumerated:
        raise InvalidArgumentError("exact evidence needs an enumerated batch")
    return logsumexp(batch.log_q + batch.log_w, axis=1)


def _integrand(source: Source, data, betas: np.ndarray) -> np.ndarray:
    if isinstance(source, LogWeightBatch):
        return path_expectations(source, betas)
    if data is None:
        raise InvalidArgumentError("a model source needs data")
    return source.path_expectations(np.atleast_2d(data), betas)


def exact_path_expectation(model, datum, beta: float) -> float:
    (beta,) = _check_beta(beta)
    return float(model.path_expectations(np.atleast_2d(datum), [beta])[0, 0])


def exact_log_evidence(model, datum) -> float:
    return float(model.log_evidence(np.atleast_2d(datum))[0])


def tvo_lower(
    source: Source,
    partition: Union[Schedule, Sequence[float]],
    data: Optional[np.ndarray] = None,
) -> float:
    """Left Riemann sum of the integrand over ``partition``, averaged over data."""
    knots = as_partition(partition)
    integrand = _integrand(source, data, knots[:-1])
    return float(np.mean(integrand @ np.diff(knots)))


def tvo_upper(
    source: Source,
    partition: Union[Schedule, Sequence[float]],
    data: Optional[np.ndarray] = None,
) -> float:
    """Right Riemann sum of the integrand over ``partition``, averaged over data."""
    knots = as_partition(partition)
    integrand = _integrand(source, data, knots[1:])
    return float(np.mean(integrand @ np.diff(knots)))


def mean_integrand(model, data, beta: float) -> float:
    return float(np.mean(model.path_expectations(np.atleast_2d(data), [beta])[:, 0]))
