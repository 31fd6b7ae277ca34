"""
Synthetic time-varying objectives for checking regret and information-gain
claims numerically.

An objective is one exact joint draw of ``f_t(x)`` over a grid of arms and a
range of rounds from the zero-mean GP with the space-time product kernel.
Policies play on the grid, and the per-round optimum is found by scanning the
grid.
"""

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Union

import numpy as np
from scipy import linalg

from tvo_gpbandit.core.errors import CapacityError, InvalidArgumentError
from tvo_gpbandit.core.numeric import cholesky_lower, log_det_from_cholesky
from tvo_gpbandit.gp.acquisition import AcquisitionConfig, kappa, kappa_horizon
from tvo_gpbandit.gp.kernel import KernelHyperparams, gram_matrix
from tvo_gpbandit.gp.process import GPState, predict

logger = logging.getLogger(__name__)

MAX_ARMS = 256
MAX_JOINT = 8192
EIGEN_FLOOR = 1e-12
EXHAUSTIVE_BLOCKS = 64
APPROXIMATE_BLOCK_COUNT = 32

POLICIES = ("gp-ucb", "random", "fixed-best-initial")
REGRET_COLUMNS = ["seed", "policy", "round", "instantaneous_regret", "cumulative_regret"]


@dataclass(frozen=True)
class GridSpec:
    d: int = 1
    points: int = 64

    def __post_init__(self):
        if self.d not in (1, 2):
            raise InvalidArgumentError(f"grid dimension must be 1 or 2, got {self.d}")
        if self.points < 1:
            raise InvalidArgumentError(f"points must be >= 1, got {self.points}")
        if self.points**self.d > MAX_ARMS:
            raise CapacityError(f"{self.points**self.d} arms exceed the limit of {MAX_ARMS}")

    def arms(self) -> np.ndarray:
        axis = np.linspace(0.0, 1.0, self.points)
        if self.d == 1:
            return axis[:, None]
        first, second = np.meshgrid(axis, axis, indexing="ij")
        return np.column_stack([first.ravel(), second.ravel()])


@dataclass(frozen=True, eq=False)
class SyntheticTVObjective:
    arms: np.ndarray
    values: np.ndarray
    omega: float
    lengthscale: float
    noise_variance: float
    seed: Optional[int] = None

    @property
    def rounds(self) -> int:
        return int(self.values.shape[0])

    @property
    def n_arms(self) -> int:
        return int(self.arms.shape[0])

    @property
    def hyp(self) -> KernelHyperparams:
        """Hyperparameters that generated the draw; arms are not schedules, so no sorting."""
        return KernelHyperparams(
            lengthscale=self.lengthscale,
            omega=self.omega,
            noise_variance=self.noise_variance,
            permutation_invariant=False,
        )

    def optimum(self) -> np.ndarray:
        return self.values.max(axis=1)

    def gaps(self) -> np.ndarray:
        """``max_x f_t - f_t(x)`` for every round and arm."""
        return self.optimum()[:, None] - self.values

    def arm_index(self, location) -> int:
        location = np.asarray(location, dtype=float).reshape(-1)
        if location.size != self.arms.shape[1]:
            raise InvalidArgumentError(
                f"arm has dimension {location.size}, grid has {self.arms.shape[1]}"
            )
        hits = np.flatnonzero(np.all(np.abs(self.arms - location) <= 1e-12, axis=1))
        if hits.size == 0:
            raise InvalidArgumentError(f"arm {location.tolist()} is not on the grid")
        return int(hits[0])


def _kernel_root(matrix: np.ndarray) -> np.ndarray:
    eigenvalues, vectors = linalg.eigh(matrix)
    eigenvalues[eigenvalues < EIGEN_FLOOR * max(eigenvalues.max(), 0.0)] = 0.0
    return vectors * np.sqrt(np.maximum(eigenvalues, 0.0))


def sample_tv_objective(
    grid: GridSpec,
    omega: float,
    lengthscale: float,
    rounds: int,
    seed: Optional[int] = None,
    noise_variance: float = 0.01,
) -> SyntheticTVObjective:
    """
    Exact joint draw over arms x rounds.

    The space-time Gram is a Kronecker product, so the draw is
    ``S_time Z S_space^T`` with ``S`` eigen square roots of the two factors.
    With ``omega = 0`` every round repeats the same spatial draw.
    """
    arms = grid.arms()
    if rounds < 1:
        raise InvalidArgumentError(f"rounds must be >= 1, got {rounds}")
    if arms.shape[0] * rounds > MAX_JOINT:
        raise CapacityError(
            f"joint draw of {arms.shape[0]} arms x {rounds} rounds exceeds {MAX_JOINT}"
        )
    hyp = KernelHyperparams(
        lengthscale=lengthscale,
        omega=omega,
        noise_variance=noise_variance,
        permutation_invariant=False,
    )
    rng = np.random.default_rng(seed)
    space_rows = np.column_stack([arms, np.zeros(arms.shape[0])])
    space_root = _kernel_root(gram_matrix(space_rows, hyp))

    if omega == 0.0:
        values = np.tile(rng.standard_normal(arms.shape[0]) @ space_root.T, (rounds, 1))
    else:
        times = np.arange(1, rounds + 1, dtype=float)
        lags = np.abs(times[:, None] - times[None, :]) / 2.0
        time_root = _kernel_root(np.power(1.0 - omega, lags))
        values = time_root @ rng.standard_normal((rounds, arms.shape[0])) @ space_root.T

    return SyntheticTVObjective(
        arms=arms,
        values=values,
        omega=omega,
        lengthscale=lengthscale,
        noise_variance=noise_variance,
        seed=seed,
    )


def _regret_from_indices(indices: Sequence[int], objective: SyntheticTVObjective) -> np.ndarray:
    indices = np.asarray(indices, dtype=int)
    if indices.size > objective.rounds:
        raise InvalidArgumentError(
            f"{indices.size} plays but the objective has {objective.rounds} rounds"
        )
    gaps = objective.gaps()[np.arange(indices.size), indices]
    return np.cumsum(gaps)


def cumulative_regret(chosen_arms, objective: SyntheticTVObjective) -> np.ndarray:
    """``R_t`` for a sequence of arm locations played in rounds ``1..len(chosen_arms)``."""
    chosen = np.asarray(chosen_arms, dtype=float)
    if chosen.ndim == 1:
        chosen = chosen[:, None] if objective.arms.shape[1] == 1 else chosen[None, :]
    return _regret_from_indices([objective.arm_index(a) for a in chosen], objective)


def information_gain(gram: np.ndarray, noise_variance: float) -> float:
    """``1/2 log det(I + K / sigma^2)`` through a Cholesky factor."""
    gram = np.atleast_2d(np.asarray(gram, dtype=float))
    if gram.shape[0] != gram.shape[1]:
        raise InvalidArgumentError(f"gram must be square, got {gram.shape}")
    if not np.allclose(gram, gram.T, atol=1e-10):
        raise InvalidArgumentError("gram must be symmetric")
    if noise_variance <= 0.0:
        raise InvalidArgumentError(f"noise variance must be > 0, got {noise_variance}")
    system = np.eye(gram.shape[0]) + gram / noise_variance
    return 0.5 * log_det_from_cholesky(cholesky_lower(system))


@dataclass
class BoundReport:
    n_rounds: int
    gamma: float
    block_sizes: List[int]
    gamma_beta: List[float]
    rhs_log_form: List[float]
    rhs_tight: List[float]
    rhs_loose: List[float]
    best_block_size: int
    rhs_min: float
    C1: float
    kappa: float
    regret_bound: float
    omega: float
    noise_variance: float
    approximate: bool = False
    violations: List[str] = field(default_factory=list)

    @property
    def holds(self) -> bool:
        return not self.violations

    def to_dict(self) -> Dict:
        payload = asdict(self)
        payload["holds"] = self.holds
        payload["gamma_beta_kind"] = "realized-design"
        return payload


def _block_sizes(n: int) -> List[int]:
    if n <= EXHAUSTIVE_BLOCKS:
        return list(range(1, n + 1))
    sizes = np.unique(np.round(np.geomspace(1, n, APPROXIMATE_BLOCK_COUNT)).astype(int))
    return [int(s) for s in sizes]


def bound_report(
    arms,
    rounds: Sequence[float],
    hyp: KernelHyperparams,
    cfg: AcquisitionConfig,
    noise_variance: Optional[float] = None,
    tolerance: float = 1e-10,
) -> BoundReport:
    """
    Check the information-gain bound on a realized design.

    ``gamma`` is the gain of all pulled (arm, round) rows under the product
    kernel. For each block length ``N`` the rounds are cut into consecutive
    blocks and ``gamma_beta`` is the largest spatial-only gain of a block.
    The right-hand sides are ``(1 + n / N)(gamma_beta + penalty)`` with penalty
    ``N log(1 + N^1.5 omega / sigma^2)``, ``N^2.5 omega / sigma^2`` and
    ``N^3 omega / sigma^2``. Violations are reported, never raised.
    """
    arms = np.atleast_2d(np.asarray(arms, dtype=float))
    if arms.shape[0] == 1 and len(rounds) > 1:
        arms = arms.T
    rounds = np.asarray(rounds, dtype=float)
    if arms.shape[0] != rounds.size or rounds.size == 0:
        raise InvalidArgumentError("need one round index per pulled arm")
    sigma2 = hyp.noise_variance if noise_variance is None else noise_variance
    n = rounds.size

    rows = np.column_stack([arms, rounds])
    gamma = information_gain(gram_matrix(rows, hyp), sigma2)
    spatial = gram_matrix(np.column_stack([arms, np.zeros(n)]), hyp)

    sizes = _block_sizes(n)
    gamma_beta, log_form, tight, loose = [], [], [], []
    for size in sizes:
        best = max(
            information_gain(spatial[start : start + size, start : start + size], sigma2)
            for start in range(0, n, size)
        )
        scale = 1.0 + n / size
        gamma_beta.append(best)
        log_form.append(scale * (best + size * math.log1p(size**1.5 * hyp.omega / sigma2)))
        tight.append(scale * (best + size**2.5 * hyp.omega / sigma2))
        loose.append(scale * (best + size**3 * hyp.omega / sigma2))

    violations = []
    for size, lf, rt, rl in zip(sizes, log_form, tight, loose):
        if gamma > lf + tolerance:
            violations.append(f"gamma {gamma:.6g} > log-form rhs {lf:.6g} at N={size}")
        if lf > rt + tolerance:
            violations.append(f"log-form rhs {lf:.6g} > N^2.5 rhs {rt:.6g} at N={size}")
        if rt > rl + tolerance:
            violations.append(f"N^2.5 rhs {rt:.6g} > N^3 rhs {rl:.6g} at N={size}")
    for message in violations:
        logger.warning(f"bound violation: {message}")

    best_index = int(np.argmin(tight))
    C1 = 8.0 / math.log1p(sigma2)
    kappa_value = kappa_horizon(cfg)
    return BoundReport(
        n_rounds=n,
        gamma=gamma,
        block_sizes=sizes,
        gamma_beta=gamma_beta,
        rhs_log_form=log_form,
        rhs_tight=tight,
        rhs_loose=loose,
        best_block_size=sizes[best_index],
        rhs_min=tight[best_index],
        C1=C1,
        kappa=kappa_value,
        regret_bound=math.sqrt(gamma * C1 * kappa_value * n) + 2.0,
        omega=hyp.omega,
        noise_variance=sigma2,
        approximate=n > EXHAUSTIVE_BLOCKS,
        violations=violations,
    )


def _noise(seed: Optional[int], rounds: int) -> np.ndarray:
    return np.random.default_rng([0 if seed is None else seed, 1]).standard_normal(rounds)


def play_policy(
    objective: SyntheticTVObjective,
    policy: str,
    seed: Optional[int] = 0,
    acquisition: Optional[AcquisitionConfig] = None,
) -> np.ndarray:
    """Arm indices chosen in rounds ``1..R``; noise draws are shared across policies."""
    R, M = objective.rounds, objective.n_arms
    if policy == "random":
        return np.random.default_rng([0 if seed is None else seed, 2]).integers(M, size=R)
    if policy == "fixed-best-initial":
        return np.full(R, int(np.argmax(objective.values[0])))
    if policy != "gp-ucb":
        raise InvalidArgumentError(f"unknown policy {policy!r}")

    acquisition = acquisition or AcquisitionConfig(d=objective.arms.shape[1], T=R, w=1)
    noise = np.sqrt(objective.noise_variance) * _noise(seed, R)
    state = GPState(objective.hyp)
    chosen = np.empty(R, dtype=int)
    for t in range(1, R + 1):
        mean, variance = predict(state, objective.arms, t)
        scores = mean + math.sqrt(kappa(t, acquisition)) * np.sqrt(variance)
        arm = int(np.argmax(scores))
        chosen[t - 1] = arm
        state.add_observation(objective.arms[arm], t, objective.values[t - 1, arm] + noise[t - 1])
    return chosen


@dataclass
class PolicyComparison:
    seeds: List[int]
    curves: Dict[str, np.ndarray]
    # arm indices per policy, one row per seed
    choices: Dict[str, np.ndarray] = field(default_factory=dict)

    def mean_curve(self, policy: str) -> np.ndarray:
        return self.curves[policy].mean(axis=0)

    def final_mean(self, policy: str) -> float:
        return float(self.curves[policy][:, -1].mean())

    def rows(self) -> List[Dict]:
        rows = []
        for policy, curves in self.curves.items():
            for seed, curve in zip(self.seeds, curves):
                instantaneous = np.diff(curve, prepend=0.0)
                for t, (inst, total) in enumerate(zip(instantaneous, curve), start=1):
                    rows.append(
                        {
                            "seed": seed,
                            "policy": policy,
                            "round": t,
                            "instantaneous_regret": float(inst),
                            "cumulative_regret": float(total),
                        }
                    )
        return rows


ObjectiveSource = Union[SyntheticTVObjective, Callable[[int], SyntheticTVObjective]]


def compare_policies(
    objective: ObjectiveSource,
    policies: Iterable[str] = POLICIES,
    seeds: Sequence[int] = (0,),
    acquisition: Optional[AcquisitionConfig] = None,
) -> PolicyComparison:
    """
    Cumulative regret curves per policy and seed.

    ``objective`` is either one shared objective or a factory called with each
    seed; in both cases all policies see the same objective and noise per seed.
    """
    policies = list(policies)
    curves = {policy: [] for policy in policies}
    choices = {policy: [] for policy in policies}
    for seed in seeds:
        instance = objective(seed) if callable(objective) else objective
        for policy in policies:
            chosen = play_policy(instance, policy, seed=seed, acquisition=acquisition)
            choices[policy].append(chosen)
            curves[policy].append(_regret_from_indices(chosen, instance))
        logger.debug(f"policies compared on seed {seed}")
    return PolicyComparison(
        seeds=list(seeds),
        curves={p: np.vstack(c) for p, c in curves.items()},
        choices={p: np.vstack(c) for p, c in choices.items()},
    )
