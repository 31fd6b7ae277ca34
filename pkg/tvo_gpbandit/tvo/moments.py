import logging
from typing import Dict, Iterable, List

import numpy as np

from tvo_gpbandit.core.errors import InvalidArgumentError
from tvo_gpbandit.schedule import (
    DEFAULT_BETA1,
    Schedule,
    linear_schedule,
    log_schedule,
    project_sorted,
)
from tvo_gpbandit.tvo.objective import mean_integrand, tvo_lower, tvo_upper

logger = logging.getLogger(__name__)

FLAT_TOLERANCE = 1e-10
BISECTION_TOLERANCE = 1e-8
MAX_BISECTIONS = 200

BOUND_CURVE_COLUMNS = ["partition_size", "schedule_kind", "lower", "upper", "exact"]


def _invert(model, data, target: float) -> float:
    lo, hi = 0.0, 1.0
    mid = 0.5
    for _ in range(MAX_BISECTIONS):
        mid = 0.5 * (lo + hi)
        value = mean_integrand(model, data, mid)
        if abs(value - target) <= BISECTION_TOLERANCE:
            return mid
        if value < target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= np.finfo(float).eps:
            break
    logger.debug(f"bisection stopped at beta={mid:.3e} short of target {target:.6g}")
    return mid


def moments_schedule(model, data, d: int) -> Schedule:
    """
    Knots spaced uniformly along the integrand axis.

    With ``y0`` and ``y1`` the averaged integrand at beta 0 and 1, knot ``j``
    solves ``E_pi_beta[log w] = y0 + (j / d)(y1 - y0)``. The integrand is
    nondecreasing in beta, so each knot is found by bisection on [0, 1].
    A flat integrand falls back to the linear schedule.
    """
    if d < 1:
        raise InvalidArgumentError(f"d must be >= 1, got {d}")
    if d == 1:
        return linear_schedule(1)

    data = np.atleast_2d(data)
    y0 = mean_integrand(model, data, 0.0)
    y1 = mean_integrand(model, data, 1.0)
    if y1 - y0 < FLAT_TOLERANCE:
        logger.info(f"integrand is flat ({y1 - y0:.2e}), using the linear schedule")
        return linear_schedule(d)

    knots = [_invert(model, data, y0 + (j / d) * (y1 - y0)) for j in range(1, d)]
    return project_sorted(knots, lo=0.0, hi=1.0)


def bound_curve(
    model,
    data,
    partition_sizes: Iterable[int],
    kinds: Iterable[str] = ("linear", "log", "moments"),
    beta1: float = DEFAULT_BETA1,
) -> List[Dict]:
    """Exact lower / upper bounds per (partition size, schedule kind) against log p(x)."""
    data = np.atleast_2d(data)
    exact = float(np.mean(model.log_evidence(data)))
    builders = {
        "linear": lambda d: linear_schedule(d),
        "log": lambda d: log_schedule(d, beta1) if d >= 2 else linear_schedule(d),
        "moments": lambda d: moments_schedule(model, data, d),
    }
    rows = []
    for size in partition_sizes:
        for kind in kinds:
            if kind not in builders:
                raise InvalidArgumentError(f"unknown schedule kind {kind!r}")
            schedule = builders[kind](size)
            rows.append(
                {
                    "partition_size": int(size),
                    "schedule_kind": kind,
                    "lower": tvo_lower(model, schedule, data),
                    "upper": tvo_upper(model, schedule, data),
                    "exact": exact,
                }
            )
    return rows
