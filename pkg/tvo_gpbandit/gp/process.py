"""Exact Gaussian-process inference over the (schedule, round) history."""

import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy import linalg
from scipy.optimize import minimize

from tvo_gpbandit.core.errors import BoundaryError, InvalidArgumentError, NumericError
from tvo_gpbandit.core.numeric import cholesky_lower, log_det_from_cholesky
from tvo_gpbandit.gp.kernel import (
    KernelHyperparams,
    cross_covariance,
    gram_gradients,
    gram_matrix,
    make_row,
)

logger = logging.getLogger(__name__)

LOG_2PI = float(np.log(2.0 * np.pi))
NOISE_JITTER_FLOOR = 1e-8
VARIANCE_TOLERANCE = 1e-10


@dataclass(frozen=True)
class HyperparamBounds:
    lengthscale: Tuple[float, float] = (0.05, 2.0)
    omega: Tuple[float, float] = (1e-4, 0.5)
    noise_variance: Tuple[float, float] = (1e-6, 1.0)

    def as_array(self) -> np.ndarray:
        return np.array([self.lengthscale, self.omega, self.noise_variance], dtype=float)

    def clip(self, hyp: KernelHyperparams) -> KernelHyperparams:
        box = self.as_array()
        return hyp.with_vector(np.clip(hyp.as_vector(), box[:, 0], box[:, 1]))

    def contains(self, hyp: KernelHyperparams) -> bool:
        box = self.as_array()
        values = hyp.as_vector()
        return bool(np.all(values >= box[:, 0]) and np.all(values <= box[:, 1]))


@dataclass(frozen=True)
class GPFactor:
    lower: np.ndarray
    alpha: np.ndarray


def effective_noise(hyp: KernelHyperparams) -> float:
    jitter = NOISE_JITTER_FLOOR if hyp.noise_variance < NOISE_JITTER_FLOOR else 0.0
    return hyp.noise_variance + jitter


def _factorize(points: np.ndarray, targets: np.ndarray, hyp: KernelHyperparams) -> GPFactor:
    system = gram_matrix(points, hyp)
    system[np.diag_indices_from(system)] += effective_noise(hyp)
    lower = cholesky_lower(system)
    alpha = linalg.cho_solve((lower, True), targets, check_finite=False)
    return GPFactor(lower=lower, alpha=alpha)


class GPState:
    """
    Observation history plus hyperparameters of the time-varying surrogate.

    Single writer: every mutation drops the cached factorization. Readers that
    run concurrently should work on ``snapshot()``.
    """

    def __init__(
        self,
        hyp: Optional[KernelHyperparams] = None,
        points: Optional[np.ndarray] = None,
        targets: Optional[Sequence[float]] = None,
    ):
        self._hyp = hyp or KernelHyperparams()
        self._points = None if points is None else np.array(points, dtype=float, ndmin=2)
        self._targets = np.zeros(0) if targets is None else np.array(targets, dtype=float)
        if self._points is not None and self._points.shape[0] != self._targets.size:
            raise InvalidArgumentError(
                f"{self._points.shape[0]} inputs but {self._targets.size} targets"
            )
        self._factor: Optional[GPFactor] = None

    @property
    def hyp(self) -> KernelHyperparams:
        return self._hyp

    @property
    def n(self) -> int:
        return int(self._targets.size)

    @property
    def points(self) -> np.ndarray:
        if self._points is None:
            return np.zeros((0, 0))
        return self._points.copy()

    @property
    def targets(self) -> np.ndarray:
        return self._targets.copy()

    @property
    def dim(self) -> Optional[int]:
        """Schedule dimension of the stored rows, ``None`` while empty."""
        return None if self._points is None else self._points.shape[1] - 1

    def add_observation(self, beta: Sequence[float], t: float, y: float) -> None:
        row = make_row(beta, t)
        if self._points is None:
            self._points = row[None, :]
        else:
            if row.size != self._points.shape[1]:
                raise InvalidArgumentError(
                    f"schedule dimension {row.size - 1} does not match history {self.dim}"
                )
            self._points = np.vstack([self._points, row])
        self._targets = np.append(self._targets, float(y))
        self._factor = None

    def set_targets(self, targets: Sequence[float]) -> None:
        targets = np.asarray(targets, dtype=float)
        if targets.size != self.n:
            raise InvalidArgumentError(f"expected {self.n} targets, got {targets.size}")
        self._targets = targets.copy()
        self._factor = None

    def set_hyperparams(self, hyp: KernelHyperparams) -> None:
        self._hyp = hyp
        self._factor = None

    def factor(self) -> GPFactor:
        if self._factor is None:
            self._factor = _factorize(self._points, self._targets, self._hyp)
        return self._factor

    def snapshot(self) -> "GPState":
        clone = GPState(self._hyp, self._points, self._targets)
        clone._factor = self._factor
        return clone

    def with_hyperparams(self, hyp: KernelHyperparams) -> "GPState":
        return GPState(hyp, self._points, self._targets)

    def to_dict(self) -> dict:
        return {
            "points": [] if self._points is None else self._points.tolist(),
            "targets": self._targets.tolist(),
            "hyperparams": self._hyp.to_dict(),
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "GPState":
        points = payload.get("points") or None
        return cls(
            KernelHyperparams.from_dict(payload["hyperparams"]),
            None if points is None else np.asarray(points, dtype=float),
            payload.get("targets", []),
        )


def predict(state: GPState, betas, t) -> Tuple[np.ndarray, np.ndarray]:
    """Posterior mean and variance of f at every row of ``betas`` and round ``t``."""
    betas = np.atleast_2d(np.asarray(betas, dtype=float))
    times = np.broadcast_to(np.asarray(t, dtype=float), (betas.shape[0],))
    queries = np.column_stack([betas, times])
    if state.n == 0:
        return np.zeros(betas.shape[0]), np.ones(betas.shape[0])

    factor = state.factor()
    k_star = cross_covariance(queries, state._points, state.hyp)
    mean = k_star @ factor.alpha
    v = linalg.solve_triangular(factor.lower, k_star.T, lower=True, check_finite=False)
    variance = 1.0 - np.sum(v * v, axis=0)
    if np.any(variance < -VARIANCE_TOLERANCE):
        logger.warning(
            f"posterior variance {variance.min():.3e} below tolerance, clamping to 0"
        )
    return mean, np.maximum(variance, 0.0)


def posterior(state: GPState, beta: Sequence[float], t: float) -> Tuple[float, float]:
    mean, variance = predict(state, np.asarray(beta, dtype=float)[None, :], t)
    return float(mean[0]), float(variance[0])


def _evidence(
    points: np.ndarray, targets: np.ndarray, hyp: KernelHyperparams, with_grad: bool
):
    factor = _factorize(points, targets, hyp)
    n = targets.size
    value = (
        -0.5 * float(targets @ factor.alpha)
        - 0.5 * log_det_from_cholesky(factor.lower)
        - 0.5 * n * LOG_2PI
    )
    if not with_grad:
        return value, None

    system_inv = linalg.cho_solve((factor.lower, True), np.eye(n), check_finite=False)
    inner = np.outer(factor.alpha, factor.alpha) - system_inv
    d_lengthscale, d_omega = gram_gradients(points, hyp)
    grad = 0.5 * np.array(
        [
            np.sum(inner * d_lengthscale),
            np.sum(inner * d_omega),
            np.trace(inner),
        ]
    )
    return value, grad


def log_marginal_likelihood(state: GPState) -> float:
    if state.n == 0:
        raise InvalidArgumentError("log marginal likelihood needs at least one observation")
    value, _ = _evidence(state._points, state._targets, state.hyp, with_grad=False)
    return value


def grad_hyperparams(state: GPState) -> np.ndarray:
    """Gradient of the log marginal likelihood w.r.t. (lengthscale, omega, noise_variance)."""
    if state.n == 0:
        raise InvalidArgumentError("gradient needs at least one observation")
    _, grad = _evidence(state._points, state._targets, state.hyp, with_grad=True)
    return grad


def fit_map(
    state: GPState,
    bounds: Optional[HyperparamBounds] = None,
    seed: Optional[int] = 0,
    n_restarts: int = 2,
    max_iters: int = 100,
) -> KernelHyperparams:
    """
    Type-II maximum likelihood (flat hyperprior) over the three hyperparameters.

    L-BFGS-B in log coordinates, warm-started at the current hyperparameters
    plus ``n_restarts`` random starts inside ``bounds``. The result is never
    worse than the warm start on the training objective; when the objective
    cannot be evaluated at all the current hyperparameters are returned.
    """
    bounds = bounds or HyperparamBounds()
    previous = state.hyp
    if state.n < 2:
        return previous

    points, targets = state._points, state._targets
    log_box = np.log(bounds.as_array())

    def negative_evidence(z):
        hyp = previous.with_vector(np.exp(z))
        try:
            value, grad = _evidence(points, targets, hyp, with_grad=True)
        except (NumericError, BoundaryError, InvalidArgumentError):
            return 1e25, np.zeros_like(z)
        if not (np.isfinite(value) and np.all(np.isfinite(grad))):
            return 1e25, np.zeros_like(z)
        return -value, -grad * np.exp(z)

    warm = np.log(bounds.clip(previous).as_vector())
    best_z, best_value = warm, negative_evidence(warm)[0]
    if best_value >= 1e25:
        logger.warning("hyperparameter fit failed at the warm start, keeping previous values")
        return previous

    rng = np.random.default_rng(seed)
    starts = [warm] + [rng.uniform(log_box[:, 0], log_box[:, 1]) for _ in range(n_restarts)]
    for start in starts:
        try:
            result = minimize(
                negative_evidence,
                start,
                jac=True,
                method="L-BFGS-B",
                bounds=log_box,
                options={"maxiter": max_iters},
            )
        except (ValueError, FloatingPointError, NumericError) as e:
            logger.warning(f"hyperparameter restart failed: {e}")
            continue
        if np.isfinite(result.fun) and result.fun < best_value:
            best_z, best_value = result.x, float(result.fun)

    return previous.with_vector(
        np.clip(np.exp(best_z), bounds.as_array()[:, 0], bounds.as_array()[:, 1])
    )


def predict_with_gradient(
    state: GPState, beta: Sequence[float], t: float
) -> Tuple[float, float, np.ndarray, np.ndarray]:
    """
    Posterior mean and variance at one query with their gradients in ``beta``.

    The gradient is taken with respect to the query exactly as given; callers
    that sort the query first must map the gradient back through the sort.
    """
    beta = np.asarray(beta, dtype=float).reshape(-1)
    if state.n == 0:
        return 0.0, 1.0, np.zeros_like(beta), np.zeros_like(beta)

    hyp = state.hyp
    factor = state.factor()
    query = make_row(beta, t)[None, :]
    k_star = cross_covariance(query, state._points, hyp)[0]

    stored = state._points[:, :-1]
    if hyp.permutation_invariant:
        stored = np.sort(stored, axis=1)
    # d k_i / d beta = k_i (beta_i - beta) / lengthscale^2
    dk = k_star[:, None] * (stored - beta[None, :]) / hyp.lengthscale**2

    mean = float(k_star @ factor.alpha)
    d_mean = dk.T @ factor.alpha

    solved = linalg.cho_solve((factor.lower, True), k_star, check_finite=False)
    variance = 1.0 - float(k_star @ solved)
    d_variance = -2.0 * dk.T @ solved
    return mean, max(variance, 0.0), d_mean, d_variance
