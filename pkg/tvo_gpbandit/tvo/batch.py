from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import logsumexp

from tvo_gpbandit.core.errors import CapacityError, InvalidArgumentError

SAMPLED = "sampled"
ENUMERATED = "enumerated"

MAX_ENUMERATION = 2**20
MASS_TOLERANCE = 1e-12


def check_capacity(n_states: int) -> None:
    if n_states > MAX_ENUMERATION:
        raise CapacityError(
            f"{n_states} latent states exceed the enumeration limit of {MAX_ENUMERATION}"
        )


@dataclass(frozen=True, eq=False)
class LogWeightBatch:
    """
    Log importance weights ``log p(x, z) - log q(z | x)``, one row per datum.

    Sampled batches hold ``S`` draws from the proposal per datum. Enumerated
    batches hold every latent state and carry its exact ``log q`` mass in
    ``log_q``; those masses sum to one per row.
    """

    log_w: np.ndarray
    provenance: str = SAMPLED
    log_q: Optional[np.ndarray] = None

    def __post_init__(self):
        log_w = np.atleast_2d(np.asarray(self.log_w, dtype=float))
        if np.any(np.isnan(log_w)) or np.any(log_w == np.inf):
            raise InvalidArgumentError("log weights must not be NaN or +inf")
        object.__setattr__(self, "log_w", log_w)

        if self.provenance == SAMPLED:
            if self.log_q is not None:
                raise InvalidArgumentError("sampled batches carry no log q masses")
            return
        if self.provenance != ENUMERATED:
            raise InvalidArgumentError(f"unknown provenance {self.provenance!r}")

        if self.log_q is None:
            raise InvalidArgumentError("enumerated batches need per-state log q masses")
        log_q = np.atleast_2d(np.asarray(self.log_q, dtype=float))
        if log_q.shape != log_w.shape:
            raise InvalidArgumentError(
                f"log q shape {log_q.shape} does not match log w shape {log_w.shape}"
            )
        totals = np.exp(logsumexp(log_q, axis=1))
        if np.any(np.abs(totals - 1.0) > MASS_TOLERANCE):
            worst = totals[np.argmax(np.abs(totals - 1.0))]
            raise InvalidArgumentError(f"q masses must sum to 1 per datum, worst total {worst!r}")
        object.__setattr__(self, "log_q", log_q)

    @property
    def n_data(self) -> int:
        return int(self.log_w.shape[0])

    @property
    def S(self) -> int:
        return int(self.log_w.shape[1])

    @property
    def is_enumerated(self) -> bool:
        return self.provenance == ENUMERATED
