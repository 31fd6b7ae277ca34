"""Experiment configuration files: JSON validated against pydantic models."""

import json
from pathlib import Path
from typing import List, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from tvo_gpbandit.bandit import BanditConfig, WindowPolicy
from tvo_gpbandit.core.errors import ConfigError, InvalidArgumentError
from tvo_gpbandit.gp.acquisition import AcquisitionConfig
from tvo_gpbandit.gp.kernel import KernelHyperparams
from tvo_gpbandit.models import fixtures
from tvo_gpbandit.regret_lab import MAX_ARMS, MAX_JOINT


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ModelSpec(StrictModel):
    kind: Optional[Literal["bernoulli", "linear-gaussian"]] = None
    fixture: str = fixtures.DEFAULT_FIXTURE
    init_scale: float = Field(default=0.1, gt=0.0)

    @field_validator("fixture")
    @classmethod
    def fixture_exists(cls, value: str) -> str:
        try:
            fixtures.read_spec(value)
        except (InvalidArgumentError, OSError, TypeError) as e:
            raise ValueError(f"fixture {value!r} cannot be loaded: {e}") from e
        return value

    @model_validator(mode="after")
    def kind_matches_fixture(self) -> "ModelSpec":
        fixture_kind = fixtures.read_spec(self.fixture).kind
        if self.kind is None:
            self.kind = fixture_kind
        elif self.kind != fixture_kind:
            raise ValueError(
                f"model kind {self.kind!r} does not match fixture kind {fixture_kind!r}"
            )
        return self


class SchedulerSpec(StrictModel):
    name: Literal["gp-bandit", "linear", "log", "moments", "random"] = "gp-bandit"
    beta1: float = Field(default=0.025, gt=0.0, lt=1.0)
    refresh_every: int = Field(default=100, ge=1)


class WindowPolicySpec(StrictModel):
    initial_w: int = Field(default=6, ge=1)
    growth_every: int = Field(default=10, ge=1)
    early_threshold: Optional[float] = -0.05
    fixed_w: Optional[int] = Field(default=None, ge=1)

    def build(self) -> WindowPolicy:
        return WindowPolicy(**self.model_dump())


class AcquisitionSpec(StrictModel):
    delta: float = Field(default=0.1, gt=0.0, lt=1.0)
    a: float = Field(default=1.0, gt=0.0)
    b: float = Field(default=1.0, gt=0.0)
    kappa_override: Optional[float] = Field(default=None, ge=0.0)
    n_starts: int = Field(default=10, ge=1)
    max_iters: int = Field(default=100, ge=1)
    lengthscale: float = Field(default=0.3, gt=0.0)
    omega: float = Field(default=0.05, ge=0.0, le=1.0)
    noise_variance: float = Field(default=0.01, gt=0.0)
    permutation_invariant: bool = True
    fit_hyperparams: bool = True


class RegretSpec(StrictModel):
    grid_d: Literal[1, 2] = 1
    grid_points: int = Field(default=64, ge=1)
    omega: float = Field(default=0.01, ge=0.0, le=1.0)
    lengthscale: float = Field(default=0.2, gt=0.0)
    noise_variance: float = Field(default=0.01, gt=0.0)
    rounds: int = Field(default=100, ge=1)
    policies: List[Literal["gp-ucb", "random", "fixed-best-initial"]] = Field(
        default_factory=lambda: ["gp-ucb", "random", "fixed-best-initial"], min_length=1
    )


class AblationSpec(StrictModel):
    permutation_invariance: List[bool] = Field(default_factory=lambda: [True, False])
    reward_estimator: List[Literal["exact", "snis"]] = Field(
        default_factory=lambda: ["exact", "snis"]
    )
    kappa_override: List[Optional[float]] = Field(default_factory=lambda: [None])
    d_values: List[int] = Field(default_factory=list)
    budgets: List[int] = Field(default_factory=list)

    @field_validator("budgets")
    @classmethod
    def positive_budgets(cls, values: List[int]) -> List[int]:
        if any(b < 1 for b in values):
            raise ValueError("every budget must be >= 1")
        return values

    @field_validator("d_values")
    @classmethod
    def bandit_partitions(cls, values: List[int]) -> List[int]:
        if any(d < 2 for d in values):
            raise ValueError("every d must be >= 2 for the bandit")
        return values

    @field_validator("kappa_override")
    @classmethod
    def nonnegative_kappa(cls, values: List[Optional[float]]) -> List[Optional[float]]:
        if any(v is not None and v < 0.0 for v in values):
            raise ValueError("kappa overrides must be >= 0")
        return values


class LogSweepSpec(StrictModel):
    beta1_grid: List[float] = Field(
        default_factory=lambda: [float(b) for b in np.linspace(0.01, 0.9, 20)], min_length=1
    )
    d_values: List[int] = Field(default_factory=list)

    @field_validator("beta1_grid")
    @classmethod
    def inside_unit_interval(cls, values: List[float]) -> List[float]:
        if any(not (0.0 < b < 1.0) for b in values):
            raise ValueError("every beta1 must lie in (0, 1)")
        return values

    @field_validator("d_values")
    @classmethod
    def bandit_partitions(cls, values: List[int]) -> List[int]:
        if any(d < 2 for d in values):
            raise ValueError("every d must be >= 2 for the bandit")
        return values


class ExperimentConfig(StrictModel):
    experiment: Literal["tvo-train", "regret-lab", "bound-check", "ablation", "log-sweep"]
    model: ModelSpec = Field(default_factory=ModelSpec)
    scheduler: SchedulerSpec = Field(default_factory=SchedulerSpec)
    d: int = Field(default=5, ge=1)
    S: int = Field(default=100, ge=1)
    T: int = Field(default=600, ge=1)
    learning_rate: float = Field(default=1e-3, ge=0.0)
    reward_estimator: Literal["exact", "snis"] = "exact"
    window: WindowPolicySpec = Field(default_factory=WindowPolicySpec)
    acquisition: AcquisitionSpec = Field(default_factory=AcquisitionSpec)
    regret: RegretSpec = Field(default_factory=RegretSpec)
    ablation: AblationSpec = Field(default_factory=AblationSpec)
    log_sweep: LogSweepSpec = Field(default_factory=LogSweepSpec)
    bound_curve_sizes: List[int] = Field(default_factory=lambda: [1, 2, 5, 10])
    seeds: List[int] = Field(default_factory=lambda: [0], min_length=1)
    output_dir: Optional[Path] = None

    @field_validator("seeds")
    @classmethod
    def distinct_seeds(cls, values: List[int]) -> List[int]:
        if len(set(values)) != len(values):
            raise ValueError("seeds must be distinct")
        return values

    @property
    def first_window(self) -> int:
        return self.window.fixed_w or self.window.initial_w

    def _bandit_d_errors(self, field: str, d_values: List[int], who: str) -> List[dict]:
        if d_values or self.d >= 2:
            return []
        return [{"field": field, "message": f"{who} needs d >= 2, got {self.d}"}]

    def run_errors(self) -> List[dict]:
        """Field combinations the validators accept but the requested run cannot execute."""
        errors = []
        w = self.first_window
        horizons = []
        if self.experiment == "tvo-train":
            name = self.scheduler.name
            if name in ("gp-bandit", "random"):
                errors += self._bandit_d_errors("d", [], f"scheduler {name!r}")
            if name == "gp-bandit":
                horizons.append(("T", self.T))
        elif self.experiment == "ablation":
            errors += self._bandit_d_errors("d", self.ablation.d_values, "the ablation bandit")
            budgets = self.ablation.budgets
            horizons.append(("ablation.budgets", max(budgets)) if budgets else ("T", self.T))
        elif self.experiment == "log-sweep":
            errors += self._bandit_d_errors("d", self.log_sweep.d_values, "the log sweep bandit")
            horizons.append(("T", self.T))
        for field, horizon in horizons:
            if horizon < w:
                message = f"{horizon} epochs are shorter than the first window {w}"
                errors.append({"field": field, "message": message})

        if self.experiment in ("regret-lab", "bound-check"):
            regret = self.regret
            arms = regret.grid_points**regret.grid_d
            if arms > MAX_ARMS:
                errors.append(
                    {
                        "field": "regret.grid_points",
                        "message": f"{arms} grid arms exceed the limit of {MAX_ARMS}",
                    }
                )
            else:
                if self.experiment == "regret-lab":
                    field, rounds = "regret.rounds", regret.rounds
                else:
                    field, rounds = "T", max(self.T // w, 1)
                if arms * rounds > MAX_JOINT:
                    message = f"{arms} arms x {rounds} rounds exceed the joint limit {MAX_JOINT}"
                    errors.append({"field": field, "message": message})
        return errors

    def bandit_config(self, **overrides) -> BanditConfig:
        acq = self.acquisition
        hyp = KernelHyperparams(
            lengthscale=acq.lengthscale,
            omega=acq.omega,
            noise_variance=acq.noise_variance,
            permutation_invariant=overrides.pop("permutation_invariant", acq.permutation_invariant),
        )
        d = overrides.pop("d", self.d)
        acquisition = AcquisitionConfig(
            delta=acq.delta,
            a=acq.a,
            b=acq.b,
            T=self.T,
            w=self.window.fixed_w or self.window.initial_w,
            d=max(d - 1, 1),
            kappa_override=overrides.pop("kappa_override", acq.kappa_override),
            n_starts=acq.n_starts,
            max_iters=acq.max_iters,
        )
        return BanditConfig(
            d=d,
            learning_rate=self.learning_rate,
            hyp=hyp,
            acquisition=acquisition,
            fit_hyperparams=acq.fit_hyperparams,
            reward_estimator=overrides.pop("reward_estimator", self.reward_estimator),
            snis_samples=self.S,
        )


def _field_errors(error: ValidationError) -> List[dict]:
    return [
        {"field": ".".join(str(part) for part in e["loc"]) or "<root>", "message": e["msg"]}
        for e in error.errors()
    ]


def parse_config(payload: Union[dict, str]) -> ExperimentConfig:
    try:
        if isinstance(payload, str):
            config = ExperimentConfig.model_validate_json(payload)
        else:
            config = ExperimentConfig.model_validate(payload)
    except ValidationError as e:
        errors = _field_errors(e)
        fields = ", ".join(err["field"] for err in errors)
        raise ConfigError(f"invalid experiment config ({fields})", errors) from e
    ensure_runnable(config)
    return config


def ensure_runnable(config: ExperimentConfig) -> None:
    errors = config.run_errors()
    if errors:
        fields = ", ".join(err["field"] for err in errors)
        raise ConfigError(f"experiment cannot run as configured ({fields})", errors)


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(
            f"cannot read config {path}", [{"field": "<file>", "message": str(e)}]
        ) from e
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(
            f"config {path} is not valid JSON", [{"field": "<file>", "message": str(e)}]
        ) from e
    return parse_config(payload)


def resolved(config: ExperimentConfig) -> dict:
    """The config with every default materialised, ready to dump as JSON."""
    return config.model_dump(mode="json")
