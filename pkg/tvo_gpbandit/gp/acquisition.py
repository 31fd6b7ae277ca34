"""GP-UCB acquisition over schedules and its theoretical exploration weight."""

import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np
from scipy.optimize import approx_fprime, minimize

from tvo_gpbandit.core.errors import DomainError, InvalidArgumentError
from tvo_gpbandit.gp.process import GPState, predict, predict_with_gradient
from tvo_gpbandit.schedule import DEFAULT_HI, DEFAULT_LO, Schedule, project_sorted

logger = logging.getLogger(__name__)

TIE_TOLERANCE = 1e-6
SIGMA_FLOOR = 1e-12


@dataclass(frozen=True)
class AcquisitionConfig:
    delta: float = 0.1
    a: float = 1.0
    b: float = 1.0
    T: int = 600
    w: int = 6
    d: int = 1
    kappa_override: Optional[float] = None
    n_starts: int = 10
    max_iters: int = 100

    def __post_init__(self):
        if not (0.0 < self.delta < 1.0):
            raise InvalidArgumentError(f"delta must lie in (0, 1), got {self.delta}")
        if self.a <= 0.0 or self.b <= 0.0:
            raise InvalidArgumentError(f"a and b must be positive, got a={self.a}, b={self.b}")
        if self.T < 1 or self.w < 1 or self.d < 1:
            raise InvalidArgumentError("T, w and d must all be >= 1")
        if self.kappa_override is not None and self.kappa_override < 0.0:
            raise InvalidArgumentError(
                f"kappa_override must be >= 0, got {self.kappa_override}"
            )
        if self.n_starts < 1 or self.max_iters < 1:
            raise InvalidArgumentError("n_starts and max_iters must be >= 1")


def kappa_formula(rounds: float, d: int, delta: float, a: float, b: float) -> float:
    """
    ``2 log(pi^2 R^2 / 2 delta) + 2 d log(d b R^2 sqrt(log(d a pi^2 R^2 / 2 delta)))``
    where ``R`` is the number of bandit rounds (``T / w`` at the horizon).
    """
    if rounds <= 0:
        raise DomainError(f"round count must be positive, got {rounds}")
    core = math.pi**2 * rounds**2 / (2.0 * delta)
    inner = d * a * core
    if inner <= 1.0:
        raise DomainError(
            f"kappa inner log argument {inner:.4g} <= 1; use a larger T/w or kappa_override"
        )
    value = 2.0 * math.log(core) + 2.0 * d * math.log(
        d * b * rounds**2 * math.sqrt(math.log(inner))
    )
    if value <= 0.0:
        raise DomainError(
            f"kappa evaluates to {value:.4g} <= 0; use a larger T/w or kappa_override"
        )
    return value


def kappa(t: int, cfg: AcquisitionConfig) -> float:
    """Per-round exploration weight: the horizon formula with ``t`` in place of ``T/w``."""
    if cfg.kappa_override is not None:
        return float(cfg.kappa_override)
    return kappa_formula(t, cfg.d, cfg.delta, cfg.a, cfg.b)


def kappa_horizon(cfg: AcquisitionConfig) -> float:
    if cfg.kappa_override is not None:
        return float(cfg.kappa_override)
    return kappa_formula(cfg.T / cfg.w, cfg.d, cfg.delta, cfg.a, cfg.b)


def _query(beta: Union[Schedule, Sequence[float]], state: GPState) -> np.ndarray:
    values = beta.interior if isinstance(beta, Schedule) else beta
    values = np.asarray(values, dtype=float).reshape(-1)
    return np.sort(values) if state.hyp.permutation_invariant else values


def ucb_value(
    state: GPState, beta: Union[Schedule, Sequence[float]], t: float, kappa_t: float
) -> float:
    """``mu(beta) + sqrt(kappa) * sigma(beta)`` at round ``t``."""
    if kappa_t < 0.0:
        raise InvalidArgumentError(f"kappa must be >= 0, got {kappa_t}")
    mean, variance = predict(state, _query(beta, state)[None, :], t)
    return float(mean[0] + math.sqrt(kappa_t) * math.sqrt(variance[0]))


def _negative_ucb(state: GPState, t: float, kappa_t: float):
    root_kappa = math.sqrt(kappa_t)
    invariant = state.hyp.permutation_invariant

    def value_only(x):
        return -ucb_value(state, x, t, kappa_t)

    def objective(x):
        if invariant:
            order = np.argsort(x, kind="stable")
            query = x[order]
            if query.size > 1 and np.min(np.diff(query)) < TIE_TOLERANCE:
                return value_only(x), approx_fprime(x, value_only, 1e-8)
        else:
            order = np.arange(x.size)
            query = x

        mean, variance, d_mean, d_variance = predict_with_gradient(state, query, t)
        sigma = math.sqrt(variance)
        grad_query = d_mean.copy()
        if sigma > SIGMA_FLOOR:
            grad_query += root_kappa * d_variance / (2.0 * sigma)
        grad = np.empty_like(x)
        grad[order] = grad_query
        return -(mean + root_kappa * sigma), -grad

    return objective


def maximize_acquisition(
    state: GPState,
    t: float,
    kappa_t: float,
    lo: float = DEFAULT_LO,
    hi: float = DEFAULT_HI,
    seed: Optional[int] = 0,
    dim: Optional[int] = None,
    n_starts: int = 10,
    max_iters: int = 100,
    previous: Optional[Schedule] = None,
) -> Schedule:
    """
    Multi-start projected ascent of the UCB over the ordered box.

    Starts are the previous schedule (when given) followed by uniform box
    draws from ``seed``. Each start runs L-BFGS-B inside the box on the UCB
    evaluated at the sorted iterate, so the sorting projection is applied at
    every step. The best point seen, starts included, is returned sorted.
    """
    if previous is not None:
        dim = previous.d
    dim = dim or state.dim
    if not dim:
        raise InvalidArgumentError("schedule dimension unknown: pass dim or previous")
    if not (0.0 <= lo < hi <= 1.0):
        raise InvalidArgumentError(f"invalid box [{lo}, {hi}]")

    rng = np.random.default_rng(seed)
    starts = []
    if previous is not None:
        starts.append(np.clip(np.asarray(previous.interior, dtype=float), lo, hi))
    n_random = max(n_starts - len(starts), 0)
    if n_random:
        starts.extend(rng.uniform(lo, hi, size=(n_random, dim)))

    objective = _negative_ucb(state, t, kappa_t)
    box = [(lo, hi)] * dim

    best_x = starts[0]
    best_value = objective(best_x)[0]
    for start in starts:
        start_value = objective(start)[0]
        if start_value < best_value:
            best_x, best_value = start, start_value
        result = minimize(
            objective,
            start,
            jac=True,
            method="L-BFGS-B",
            bounds=box,
            options={"maxiter": max_iters},
        )
        candidate = np.clip(result.x, lo, hi)
        candidate_value = objective(candidate)[0]
        if candidate_value < best_value:
            best_x, best_value = candidate, candidate_value

    logger.debug(f"acquisition maximum {-best_value:.6g} at round {t}")
    return project_sorted(best_x, lo=lo, hi=hi)
