"""
Integration schedules: the bandit's arm and the static baseline generators.

A schedule stores only its free interior knots. The Riemann partition used
for evaluation always starts at 0 and ends at 1; those two endpoints are
materialised by ``Schedule.partition`` and never stored.
"""

import json
from dataclasses import dataclass
from typing import Iterable, Sequence, Union

import numpy as np

from tvo_gpbandit.core.errors import InvalidArgumentError

DEFAULT_LO = 0.05
DEFAULT_HI = 0.95
DEFAULT_BETA1 = 0.025

SeedLike = Union[int, np.random.Generator, None]


@dataclass(frozen=True, eq=False)
class Schedule:
    interior: np.ndarray
    lo: float = DEFAULT_LO
    hi: float = DEFAULT_HI

    def __post_init__(self):
        interior = np.asarray(self.interior, dtype=float).reshape(-1)
        if not (0.0 <= self.lo <= self.hi <= 1.0):
            raise InvalidArgumentError(
                f"box bounds must satisfy 0 <= lo <= hi <= 1, got [{self.lo}, {self.hi}]"
            )
        if not np.all(np.isfinite(interior)):
            raise InvalidArgumentError("schedule knots must be finite")
        if interior.size and (interior.min() < self.lo or interior.max() > self.hi):
            raise InvalidArgumentError(
                f"schedule knots must lie in [{self.lo}, {self.hi}]"
            )
        interior.setflags(write=False)
        object.__setattr__(self, "interior", interior)

    @property
    def d(self) -> int:
        """Number of free knots."""
        return int(self.interior.size)

    @property
    def is_sorted(self) -> bool:
        return bool(np.all(np.diff(self.interior) >= 0.0))

    def partition(self) -> np.ndarray:
        """Evaluation form ``[0, knots..., 1]`` with duplicate knots collapsed."""
        knots = np.concatenate(([0.0], np.sort(self.interior), [1.0]))
        return np.unique(knots)

    @property
    def partition_size(self) -> int:
        """Number of Riemann intervals in the evaluation form."""
        return int(self.partition().size - 1)

    def to_list(self) -> list:
        return [float(b) for b in self.interior]

    def to_json(self) -> str:
        return json.dumps(self.to_list())

    @classmethod
    def from_json(
        cls, payload: str, lo: float = DEFAULT_LO, hi: float = DEFAULT_HI
    ) -> "Schedule":
        return cls(np.asarray(json.loads(payload), dtype=float), lo=lo, hi=hi)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Schedule):
            return NotImplemented
        return (
            self.lo == other.lo
            and self.hi == other.hi
            and np.array_equal(self.interior, other.interior)
        )

    def __hash__(self) -> int:
        return hash((self.lo, self.hi, self.interior.tobytes()))

    def __repr__(self) -> str:
        return f"Schedule({self.to_list()}, lo={self.lo}, hi={self.hi})"


def project_sorted(
    raw: Iterable[float], lo: float = DEFAULT_LO, hi: float = DEFAULT_HI
) -> Schedule:
    """
    Sorting projection onto the ordered box.

    Sorting happens before clamping so the clamp cannot break the order. The
    map is idempotent and invariant to permutations of ``raw``.
    """
    values = np.asarray(list(raw), dtype=float).reshape(-1)
    if values.size < 1:
        raise InvalidArgumentError("a schedule needs at least one knot")
    if not np.all(np.isfinite(values)):
        raise InvalidArgumentError(f"schedule knots must be finite, got {values.tolist()}")
    return Schedule(np.clip(np.sort(values), lo, hi), lo=lo, hi=hi)


def linear_schedule(d: int) -> Schedule:
    """Uniform partition ``{0, 1/d, ..., 1}``; ``d`` counts Riemann intervals."""
    if d < 1:
        raise InvalidArgumentError(f"d must be >= 1, got {d}")
    return Schedule(np.arange(1, d) / d, lo=0.0, hi=1.0)


def log_schedule(d: int, beta1: float = DEFAULT_BETA1) -> Schedule:
    """
    Log-uniform partition: ``0`` followed by a geometric ladder from ``beta1``
    to ``1`` with ``d`` rungs. The last rung is the terminal 1, so the left
    sum's final knot is the penultimate rung.
    """
    if d < 2:
        raise InvalidArgumentError(f"log schedule needs d >= 2, got {d}")
    if not (0.0 < beta1 < 1.0):
        raise InvalidArgumentError(f"beta1 must lie in (0, 1), got {beta1}")
    ladder = np.geomspace(beta1, 1.0, d)
    return Schedule(ladder[:-1], lo=0.0, hi=1.0)


def random_schedule(
    d: int, seed: SeedLike = None, lo: float = DEFAULT_LO, hi: float = DEFAULT_HI
) -> Schedule:
    """``d`` uniform draws on ``[lo, hi]`` passed through the sorting projection."""
    if d < 1:
        raise InvalidArgumentError(f"d must be >= 1, got {d}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return project_sorted(rng.uniform(lo, hi, size=d), lo=lo, hi=hi)


def as_partition(
    schedule_or_partition: Union[Schedule, Sequence[float]], allow_ties: bool = False
) -> np.ndarray:
    """
    Accept a Schedule or an explicit partition and validate the latter.

    With ``allow_ties`` repeated knots (zero-width intervals) are accepted.
    """
    if isinstance(schedule_or_partition, Schedule):
        return schedule_or_partition.partition()
    partition = np.asarray(schedule_or_partition, dtype=float).reshape(-1)
    if partition.size < 2 or partition[0] != 0.0 or partition[-1] != 1.0:
        raise InvalidArgumentError(
            f"a partition must start at 0 and end at 1, got {partition.tolist()}"
        )
    steps = np.diff(partition)
    if np.any(steps < 0.0) or (not allow_ties and np.any(steps == 0.0)):
        order = "nondecreasing" if allow_ties else "strictly increasing"
        raise InvalidArgumentError(f"partition knots must be {order}")
    return partition


def initial_arm(partition_size: int, lo: float = DEFAULT_LO, hi: float = DEFAULT_HI) -> Schedule:
    """Linear knots for a bandit arm with ``partition_size - 1`` free points."""
    if partition_size < 2:
        raise InvalidArgumentError(
            f"a bandit arm needs partition size >= 2, got {partition_size}"
        )
    return project_sorted(np.arange(1, partition_size) / partition_size, lo=lo, hi=hi)
