import functools
import logging

import numpy as np
from scipy import linalg

from tvo_gpbandit.core.errors import NumericError

logger = logging.getLogger(__name__)


def with_jitter_escalation(
    start: float = 1e-10, factor: float = 10.0, max_jitter: float = 1e-4
):
    """
    Decorator to retry a factorization on near-singular matrices.

    The wrapped function takes a square matrix as its first argument. When it
    raises ``LinAlgError`` the call is repeated with ``jitter * I`` added to
    the matrix, escalating from ``start`` by ``factor`` up to ``max_jitter``.

    Args:
        start: First jitter tried after the plain attempt fails
        factor: Multiplier applied between attempts
        max_jitter: Largest jitter tried before giving up
    """

    def decorator(func):
        @functools.wraps(func)
        def wrapper(matrix, *args, **kwargs):
            try:
                return func(matrix, *args, **kwargs)
            except linalg.LinAlgError as e:
                last_exception = e

            identity = np.eye(matrix.shape[0])
            jitter = start
            while jitter <= max_jitter * (1.0 + 1e-9):
                logger.warning(
                    f"factorization failed, retrying with jitter {jitter:.0e} "
                    f"(n={matrix.shape[0]})"
                )
                try:
                    return func(matrix + jitter * identity, *args, **kwargs)
                except linalg.LinAlgError as e:
                    last_exception = e
                jitter *= factor

            raise NumericError(
                "matrix is not positive definite after jitter escalation",
                diagnostics={
                    "n": matrix.shape[0],
                    "max_jitter": max_jitter,
                    "condition": _condition_estimate(matrix),
                },
            ) from last_exception

        return wrapper

    return decorator


def _condition_estimate(matrix: np.ndarray) -> float:
    try:
        return float(np.linalg.cond(matrix))
    except np.linalg.LinAlgError:
        return float("inf")


@with_jitter_escalation()
def cholesky_lower(matrix: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor of a symmetric positive-definite matrix."""
    if not np.all(np.isfinite(matrix)):
        raise NumericError("matrix has non-finite entries", {"n": matrix.shape[0]})
    return linalg.cholesky(matrix, lower=True, check_finite=False)


def log_det_from_cholesky(lower: np.ndarray) -> float:
    return float(2.0 * np.sum(np.log(np.diag(lower))))
