"""
Space-time covariance for the schedule surrogate.

Inputs are rows ``x = [beta_1, ..., beta_d, t]``: the schedule knots followed
by the raw bandit-round index. The spatial factor is an exponentiated
quadratic on the knots, optionally sorted first so the kernel cannot tell a
schedule from any permutation of it. The time factor is
``(1 - omega) ** (|t - t'| / 2)``.
"""

from dataclasses import asdict, dataclass, replace
from typing import Sequence, Tuple

import numpy as np
from scipy.spatial.distance import cdist

from tvo_gpbandit.core.errors import BoundaryError, InvalidArgumentError


@dataclass(frozen=True)
class KernelHyperparams:
    lengthscale: float = 0.3
    omega: float = 0.05
    noise_variance: float = 0.01
    permutation_invariant: bool = True

    def __post_init__(self):
        if not (np.isfinite(self.lengthscale) and self.lengthscale > 0.0):
            raise InvalidArgumentError(f"lengthscale must be > 0, got {self.lengthscale}")
        if not (0.0 <= self.omega <= 1.0):
            raise InvalidArgumentError(f"omega must lie in [0, 1], got {self.omega}")
        if not (np.isfinite(self.noise_variance) and self.noise_variance > 0.0):
            raise InvalidArgumentError(
                f"noise_variance must be > 0, got {self.noise_variance}"
            )

    def as_vector(self) -> np.ndarray:
        return np.array([self.lengthscale, self.omega, self.noise_variance])

    def with_vector(self, values: Sequence[float]) -> "KernelHyperparams":
        lengthscale, omega, noise_variance = (float(v) for v in values)
        return replace(
            self, lengthscale=lengthscale, omega=omega, noise_variance=noise_variance
        )

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, payload: dict) -> "KernelHyperparams":
        return cls(**payload)


def make_row(beta: Sequence[float], t: float) -> np.ndarray:
    return np.append(np.asarray(beta, dtype=float), float(t))


def _split(points) -> Tuple[np.ndarray, np.ndarray]:
    rows = np.atleast_2d(np.asarray(points, dtype=float))
    return rows[:, :-1], rows[:, -1]


def _canonical(beta: np.ndarray, permutation_invariant: bool) -> np.ndarray:
    return np.sort(beta, axis=-1) if permutation_invariant else beta


def spatial_kernel(
    beta, beta_other, lengthscale: float, permutation_invariant: bool = True
) -> float:
    a = np.asarray(beta, dtype=float).reshape(-1)
    b = np.asarray(beta_other, dtype=float).reshape(-1)
    if a.shape != b.shape:
        raise InvalidArgumentError(
            f"schedule dimensions differ: {a.size} vs {b.size}"
        )
    a = _canonical(a, permutation_invariant)
    b = _canonical(b, permutation_invariant)
    return float(np.exp(-np.sum((a - b) ** 2) / (2.0 * lengthscale**2)))


def time_kernel(t: float, t_other: float, omega: float) -> float:
    if not (0.0 <= omega <= 1.0):
        raise InvalidArgumentError(f"omega must lie in [0, 1], got {omega}")
    return float((1.0 - omega) ** (abs(t - t_other) / 2.0))


def product_kernel(x, x_other, hyp: KernelHyperparams) -> float:
    x = np.asarray(x, dtype=float)
    x_other = np.asarray(x_other, dtype=float)
    return spatial_kernel(
        x[:-1], x_other[:-1], hyp.lengthscale, hyp.permutation_invariant
    ) * time_kernel(x[-1], x_other[-1], hyp.omega)


def _squared_distances(beta_a, beta_b, permutation_invariant):
    if beta_a.shape[1] != beta_b.shape[1]:
        raise InvalidArgumentError(
            f"schedule dimensions differ: {beta_a.shape[1]} vs {beta_b.shape[1]}"
        )
    return cdist(
        _canonical(beta_a, permutation_invariant),
        _canonical(beta_b, permutation_invariant),
        "sqeuclidean",
    )


def _time_lags(t_a, t_b) -> np.ndarray:
    return np.abs(t_a[:, None] - t_b[None, :]) / 2.0


def cross_covariance(points_a, points_b, hyp: KernelHyperparams) -> np.ndarray:
    beta_a, t_a = _split(points_a)
    beta_b, t_b = _split(points_b)
    d2 = _squared_distances(beta_a, beta_b, hyp.permutation_invariant)
    k_beta = np.exp(-d2 / (2.0 * hyp.lengthscale**2))
    k_time = np.power(1.0 - hyp.omega, _time_lags(t_a, t_b))
    return k_beta * k_time


def gram_matrix(points, hyp: KernelHyperparams) -> np.ndarray:
    gram = cross_covariance(points, points, hyp)
    # exactly symmetric
    return 0.5 * (gram + gram.T)


def gram_gradients(points, hyp: KernelHyperparams) -> Tuple[np.ndarray, np.ndarray]:
    """Derivatives of the Gram matrix with respect to lengthscale and omega."""
    beta, t = _split(points)
    d2 = _squared_distances(beta, beta, hyp.permutation_invariant)
    k_beta = np.exp(-d2 / (2.0 * hyp.lengthscale**2))
    lags = _time_lags(t, t)
    k_time = np.power(1.0 - hyp.omega, lags)

    d_lengthscale = k_beta * k_time * d2 / hyp.lengthscale**3
    d_omega = k_beta * time_kernel_domega(lags, hyp.omega)
    return d_lengthscale, d_omega


def time_kernel_domega(lags: np.ndarray, omega: float) -> np.ndarray:
    """
    ``d/d omega (1 - omega) ** v = -v (1 - omega) ** (v - 1)`` with ``v`` the
    half lag. Entries with ``v = 0`` are exactly zero.
    """
    lags = np.asarray(lags, dtype=float)
    out = np.zeros_like(lags)
    positive = lags > 0.0
    if omega >= 1.0 and np.any(positive & (lags < 1.0)):
        raise BoundaryError("omega derivative is unbounded at omega = 1 for lags below 2")
    out[positive] = -lags[positive] * np.power(1.0 - omega, lags[positive] - 1.0)
    return out
