"""
Schedule selection during training.

Training runs one full-batch step per epoch. Epochs are grouped into
windows; when a window closes the improvement of the evidence estimate over
that window becomes the reward of the schedule used during it. The GP-bandit
adds the observation, refits its surrogate and picks the next schedule by
maximizing the UCB; baselines keep a fixed (or periodically refreshed)
schedule but emit the same records.
"""

import logging
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from tvo_gpbandit.core.errors import InvalidArgumentError, NumericError
from tvo_gpbandit.gp.acquisition import AcquisitionConfig, kappa, maximize_acquisition
from tvo_gpbandit.gp.kernel import KernelHyperparams
from tvo_gpbandit.gp.process import GPState, HyperparamBounds, fit_map
from tvo_gpbandit.models.base import TVOModel
from tvo_gpbandit.models.training import Adam, train_step
from tvo_gpbandit.schedule import (
    DEFAULT_BETA1,
    DEFAULT_HI,
    DEFAULT_LO,
    Schedule,
    initial_arm,
    linear_schedule,
    log_schedule,
    random_schedule,
)
from tvo_gpbandit.tvo.moments import moments_schedule
from tvo_gpbandit.tvo.objective import tvo_lower

logger = logging.getLogger(__name__)

STANDARDIZE_EPS = 1e-8
SNIS_PARTITION_SIZE = 50

FIT_STREAM = 1
ACQUISITION_STREAM = 2
RANDOM_STREAM = 3

EPOCH_COLUMNS = [
    "epoch",
    "round",
    "schedule",
    "log_evidence",
    "elbo",
    "kl",
    "objective",
    "reward_estimate",
    "skipped",
]
ROUND_COLUMNS = [
    "round",
    "epoch",
    "window",
    "schedule",
    "reward",
    "standardized_reward",
    "L_start",
    "L_end",
    "kappa",
    "lengthscale",
    "omega",
    "noise_variance",
    "early",
    "skipped",
]


@dataclass(frozen=True)
class WindowPolicy:
    """
    Epochs per bandit round: ``initial_w`` plus one per ``growth_every``
    completed rounds, unless ``fixed_w`` pins it. A per-epoch drop of the
    evidence estimate to ``early_threshold`` or below closes the window early.
    """

    initial_w: int = 6
    growth_every: int = 10
    early_threshold: Optional[float] = -0.05
    fixed_w: Optional[int] = None

    def __post_init__(self):
        if self.initial_w < 1:
            raise InvalidArgumentError(f"initial_w must be >= 1, got {self.initial_w}")
        if self.fixed_w is not None and self.fixed_w < 1:
            raise InvalidArgumentError(f"fixed_w must be >= 1, got {self.fixed_w}")
        if self.growth_every < 1:
            raise InvalidArgumentError(f"growth_every must be >= 1, got {self.growth_every}")

    def window(self, rounds_done: int) -> int:
        if self.fixed_w is not None:
            return self.fixed_w
        return self.initial_w + rounds_done // self.growth_every

    def closes_early(self, previous: float, current: float) -> bool:
        return self.early_threshold is not None and current - previous <= self.early_threshold


@dataclass(frozen=True)
class BanditConfig:
    d: int = 5
    learning_rate: float = 1e-3
    lo: float = DEFAULT_LO
    hi: float = DEFAULT_HI
    hyp: KernelHyperparams = field(default_factory=KernelHyperparams)
    bounds: HyperparamBounds = field(default_factory=HyperparamBounds)
    acquisition: AcquisitionConfig = field(default_factory=AcquisitionConfig)
    fit_hyperparams: bool = True
    reward_estimator: str = "exact"
    snis_samples: int = 100

    def __post_init__(self):
        if self.d < 1:
            raise InvalidArgumentError(f"d must be >= 1, got {self.d}")
        if self.reward_estimator not in ("exact", "snis"):
            raise InvalidArgumentError(
                f"reward_estimator must be 'exact' or 'snis', got {self.reward_estimator!r}"
            )
        if self.snis_samples < 1:
            raise InvalidArgumentError(f"snis_samples must be >= 1, got {self.snis_samples}")


@dataclass
class EpochRecord:
    epoch: int
    round: int
    schedule: List[float]
    log_evidence: float
    elbo: float
    kl: float
    objective: float
    reward_estimate: float
    skipped: bool = False
    wallclock: float = 0.0


@dataclass
class RoundRecord:
    round: int
    epoch: int
    window: int
    schedule: List[float]
    reward: float
    standardized_reward: float
    L_start: float
    L_end: float
    kappa: Optional[float]
    hyperparams: Dict
    next_schedule: Optional[List[float]]
    early: bool = False
    skipped: bool = False
    wallclock: float = 0.0


@dataclass
class BanditTrace:
    kind: str
    seed: Optional[int]
    initial_estimate: float
    epochs: List[EpochRecord] = field(default_factory=list)
    rounds: List[RoundRecord] = field(default_factory=list)
    gp_state: Optional[Dict] = None
    final_model: Optional[Dict] = None
    failure: Optional[str] = None
    wallclock: float = 0.0

    @property
    def estimates(self) -> List[float]:
        """``L_0, L_1, ..., L_T`` of the reward estimator."""
        return [self.initial_estimate] + [e.reward_estimate for e in self.epochs]

    @property
    def schedules(self) -> List[List[float]]:
        return [r.schedule for r in self.rounds]

    @property
    def final_log_evidence(self) -> float:
        return self.epochs[-1].log_evidence if self.epochs else float("nan")

    def telescoping_gap(self) -> float:
        """``sum(rewards) - (L_T - L_0)``, zero up to rounding."""
        if not self.rounds:
            return 0.0
        total = float(np.sum([r.reward for r in self.rounds]))
        return total - (self.rounds[-1].L_end - self.initial_estimate)

    def epoch_rows(self) -> List[Dict]:
        rows = []
        for e in self.epochs:
            row = {k: v for k, v in asdict(e).items() if k in EPOCH_COLUMNS}
            row["schedule"] = " ".join(f"{b:.10g}" for b in e.schedule)
            rows.append(row)
        return rows

    def round_rows(self) -> List[Dict]:
        rows = []
        for r in self.rounds:
            row = {k: v for k, v in asdict(r).items() if k in ROUND_COLUMNS}
            row["schedule"] = " ".join(f"{b:.10g}" for b in r.schedule)
            for name in ("lengthscale", "omega", "noise_variance"):
                row[name] = r.hyperparams.get(name, "")
            row["kappa"] = "" if r.kappa is None else r.kappa
            rows.append(row)
        return rows

    def to_dict(self) -> Dict:
        return {
            "kind": self.kind,
            "seed": self.seed,
            "initial_estimate": self.initial_estimate,
            "final_log_evidence": self.final_log_evidence,
            "telescoping_gap": self.telescoping_gap(),
            "epochs": [asdict(e) for e in self.epochs],
            "rounds": [asdict(r) for r in self.rounds],
            "gp_state": self.gp_state,
            "final_model": self.final_model,
            "failure": self.failure,
            "wallclock": self.wallclock,
        }


def standardize_reward(history: Sequence[float], new: float) -> float:
    """``(y - mean) / (std + 1e-8)`` with population statistics over history plus ``y``."""
    values = np.append(np.asarray(history, dtype=float), float(new))
    return float((new - values.mean()) / (values.std() + STANDARDIZE_EPS))


def standardize_all(raw: Sequence[float]) -> np.ndarray:
    values = np.asarray(raw, dtype=float)
    return (values - values.mean()) / (values.std() + STANDARDIZE_EPS)


def _reward_estimator(
    cfg: BanditConfig, seed: Optional[int]
) -> Callable[[TVOModel, np.ndarray, int], float]:
    if cfg.reward_estimator == "exact":
        return lambda model, data, epoch: float(np.mean(model.log_evidence(data)))

    partition = linear_schedule(SNIS_PARTITION_SIZE)

    def snis(model, data, epoch):
        batch = model.sample_latents(data, cfg.snis_samples, seed=[seed or 0, epoch])
        return tvo_lower(batch, partition)

    return snis


# (round t, epoch i, GP state, schedule used during the window) -> next schedule
Selector = Callable[[int, int, GPState, Schedule], Schedule]
# (epoch i, current model, current schedule) -> schedule for epoch i
Refresher = Callable[[int, TVOModel, Schedule], Schedule]


def _run_loop(
    kind: str,
    model: TVOModel,
    data: np.ndarray,
    T: int,
    policy: WindowPolicy,
    cfg: BanditConfig,
    seed: Optional[int],
    first: Schedule,
    select: Optional[Selector] = None,
    refresh: Optional[Refresher] = None,
    uses_gp: bool = False,
) -> BanditTrace:
    if T < 1:
        raise InvalidArgumentError(f"T must be >= 1, got {T}")
    data = np.atleast_2d(data)
    started = time.perf_counter()
    estimate = _reward_estimator(cfg, seed)
    optimizer = Adam()

    state = GPState(cfg.hyp)
    raw_rewards: List[float] = []
    observed: List[float] = []
    schedule = first
    trace = BanditTrace(kind=kind, seed=seed, initial_estimate=estimate(model, data, 0))
    estimates = [trace.initial_estimate]
    window_start = 0
    window_skipped = False
    round_started = time.perf_counter()

    try:
        for i in range(1, T + 1):
            if refresh is not None:
                schedule = refresh(i, model, schedule)
            epoch_started = time.perf_counter()
            step = train_step(model, data, schedule, cfg.learning_rate, optimizer)
            model = step.model
            window_skipped |= step.skipped
            estimates.append(estimate(model, data, i))
            trace.epochs.append(
                EpochRecord(
                    epoch=i,
                    round=len(trace.rounds) + 1,
                    schedule=schedule.to_list(),
                    log_evidence=step.log_evidence,
                    elbo=float(np.mean(model.elbo(data))),
                    kl=float(np.mean(model.kl(data))),
                    objective=step.objective,
                    reward_estimate=estimates[-1],
                    skipped=step.skipped,
                    wallclock=time.perf_counter() - epoch_started,
                )
            )

            w = policy.window(len(trace.rounds))
            early = policy.closes_early(estimates[-2], estimates[-1])
            if not (i - window_start >= w or early or i == T):
                continue

            t = len(trace.rounds) + 1
            reward = estimates[-1] - estimates[window_start]
            raw_rewards.append(reward)
            standardized = standardize_reward(raw_rewards[:-1], reward)

            kappa_t = None
            next_schedule = schedule
            if uses_gp and not window_skipped:
                observed.append(reward)
                state.add_observation(schedule.interior, t, reward)
                state.set_targets(standardize_all(observed))
                standardized = float(state.targets[-1])
                if cfg.fit_hyperparams and state.n >= 2:
                    state.set_hyperparams(
                        fit_map(state, cfg.bounds, seed=_child_seed(seed, FIT_STREAM, t))
                    )
                kappa_t = kappa(t, cfg.acquisition)
            if select is not None and not window_skipped and i < T:
                next_schedule = select(t, i, state, schedule)
            if window_skipped:
                logger.warning(f"round {t} had a skipped training step, keeping {schedule!r}")

            trace.rounds.append(
                RoundRecord(
                    round=t,
                    epoch=i,
                    window=i - window_start,
                    schedule=schedule.to_list(),
                    reward=reward,
                    standardized_reward=standardized,
                    L_start=estimates[window_start],
                    L_end=estimates[-1],
                    kappa=kappa_t,
                    hyperparams=state.hyp.to_dict() if uses_gp else {},
                    next_schedule=None if i == T else next_schedule.to_list(),
                    early=early and i - window_start < w,
                    skipped=window_skipped,
                    wallclock=time.perf_counter() - round_started,
                )
            )
            logger.debug(f"{kind} round {t} epoch {i}: reward {reward:.6g}")
            schedule = next_schedule
            window_start = i
            window_skipped = False
            round_started = time.perf_counter()
    except NumericError as e:
        trace.failure = str(e)
        trace.wallclock = time.perf_counter() - started
        e.trace = trace
        raise

    trace.gp_state = state.to_dict() if uses_gp else None
    trace.final_model = model.to_dict()
    trace.wallclock = time.perf_counter() - started
    return trace


def _child_seed(seed: Optional[int], stream: int, t: int = 0) -> int:
    key = [0 if seed is None else int(seed), stream, t]
    return int(np.random.default_rng(key).integers(2**31))


def run_bandit(
    model: TVOModel,
    data: np.ndarray,
    T: int,
    policy: Optional[WindowPolicy] = None,
    cfg: Optional[BanditConfig] = None,
    seed: Optional[int] = 0,
) -> BanditTrace:
    """
    Train for ``T`` epochs while a GP-UCB bandit picks the schedule.

    The arm holds ``cfg.d - 1`` free knots in ``[cfg.lo, cfg.hi]``; the first
    arm is the linear schedule projected into that box.
    """
    policy = policy or WindowPolicy()
    cfg = cfg or BanditConfig()
    if cfg.d < 2:
        raise InvalidArgumentError(f"the bandit needs d >= 2 intervals, got {cfg.d}")
    cfg = replace(cfg, acquisition=replace(cfg.acquisition, d=cfg.d - 1))
    if T < policy.window(0):
        raise InvalidArgumentError(f"T={T} is shorter than the first window {policy.window(0)}")

    def select(t, i, state, schedule):
        return maximize_acquisition(
            state,
            t + 1,
            kappa(t, cfg.acquisition),
            lo=cfg.lo,
            hi=cfg.hi,
            seed=_child_seed(seed, ACQUISITION_STREAM, t),
            n_starts=cfg.acquisition.n_starts,
            max_iters=cfg.acquisition.max_iters,
            previous=schedule,
        )

    first = initial_arm(cfg.d, lo=cfg.lo, hi=cfg.hi)
    return _run_loop(
        "gp-bandit", model, data, T, policy, cfg, seed, first, select=select, uses_gp=True
    )


def run_baseline(
    model: TVOModel,
    data: np.ndarray,
    T: int,
    schedule_kind: str,
    seed: Optional[int] = 0,
    cfg: Optional[BanditConfig] = None,
    policy: Optional[WindowPolicy] = None,
    beta1: float = DEFAULT_BETA1,
    refresh_every: int = 100,
) -> BanditTrace:
    """
    The same training loop with a static schedule.

    ``linear`` and ``log`` stay fixed; ``moments`` is recomputed from the
    current model every ``refresh_every`` epochs; ``random`` draws a new
    schedule each time a window closes.
    """
    policy = policy or WindowPolicy()
    cfg = cfg or BanditConfig()
    d = cfg.d
    data = np.atleast_2d(data)

    select = None
    refresh = None
    if schedule_kind == "linear":
        first = linear_schedule(d)
    elif schedule_kind == "log":
        first = log_schedule(d, beta1) if d >= 2 else linear_schedule(d)
    elif schedule_kind == "moments":
        first = moments_schedule(model, data, d)

        def refresh(i, current_model, schedule):
            if i > 1 and (i - 1) % refresh_every == 0:
                return moments_schedule(current_model, data, d)
            return schedule

    elif schedule_kind == "random":
        if d < 2:
            raise InvalidArgumentError("random schedules need d >= 2")
        rng = np.random.default_rng(_child_seed(seed, RANDOM_STREAM))
        first = random_schedule(d - 1, rng, lo=cfg.lo, hi=cfg.hi)

        def select(t, i, state, schedule):
            return random_schedule(d - 1, rng, lo=cfg.lo, hi=cfg.hi)

    else:
        raise InvalidArgumentError(f"unknown schedule kind {schedule_kind!r}")
    return _run_loop(schedule_kind, model, data, T, policy, cfg, seed, first, select, refresh)
