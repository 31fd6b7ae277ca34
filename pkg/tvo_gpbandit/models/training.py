import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from tvo_gpbandit.core.errors import InvalidArgumentError
from tvo_gpbandit.models.base import TVOModel
from tvo_gpbandit.schedule import Schedule
from tvo_gpbandit.tvo.objective import tvo_lower

logger = logging.getLogger(__name__)


@dataclass
class Adam:
    """Adaptive-moment ascent on a flat parameter vector."""

    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    steps: int = 0
    first_moment: Optional[np.ndarray] = field(default=None, repr=False)
    second_moment: Optional[np.ndarray] = field(default=None, repr=False)

    def update(self, params: np.ndarray, grad: np.ndarray, learning_rate: float) -> np.ndarray:
        if self.first_moment is None or self.first_moment.shape != grad.shape:
            self.first_moment = np.zeros_like(grad)
            self.second_moment = np.zeros_like(grad)
            self.steps = 0
        self.steps += 1
        self.first_moment = self.beta1 * self.first_moment + (1.0 - self.beta1) * grad
        self.second_moment = self.beta2 * self.second_moment + (1.0 - self.beta2) * grad**2
        m_hat = self.first_moment / (1.0 - self.beta1**self.steps)
        v_hat = self.second_moment / (1.0 - self.beta2**self.steps)
        return params + learning_rate * m_hat / (np.sqrt(v_hat) + self.eps)


@dataclass(frozen=True)
class StepResult:
    model: TVOModel
    log_evidence: float
    objective: float
    skipped: bool = False


def train_step(
    model: TVOModel,
    data: np.ndarray,
    partition: Union[Schedule, Sequence[float]],
    learning_rate: float = 1e-3,
    optimizer: Optional[Adam] = None,
) -> StepResult:
    """
    One Adam ascent step on the left-Riemann TVO over ``partition``.

    Returns the updated model with the mean exact log evidence after the step.
    A non-finite gradient leaves the model untouched and flags the step.
    """
    if not (learning_rate >= 0.0 and np.isfinite(learning_rate)):
        raise InvalidArgumentError(f"learning rate must be >= 0, got {learning_rate}")
    optimizer = optimizer if optimizer is not None else Adam()
    data = np.atleast_2d(data)

    grad = model.tvo_gradient(data, partition)
    skipped = not np.all(np.isfinite(grad))
    if skipped:
        logger.warning(
            f"non-finite TVO gradient ({np.count_nonzero(~np.isfinite(grad))} entries), "
            "skipping step"
        )
        updated = model
    elif learning_rate == 0.0:
        updated = model
    else:
        updated = model.with_vector(optimizer.update(model.to_vector(), grad, learning_rate))

    return StepResult(
        model=updated,
        log_evidence=float(np.mean(updated.log_evidence(data))),
        objective=tvo_lower(updated, partition, data),
        skipped=skipped,
    )
