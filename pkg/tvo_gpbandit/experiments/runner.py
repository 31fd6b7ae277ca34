"""
Experiment orchestration: one process-safe worker per (seed, variant) and a
runner that fans the work out and writes the run directory.
"""

import itertools
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from tvo_gpbandit.bandit import EPOCH_COLUMNS, ROUND_COLUMNS, run_bandit, run_baseline
from tvo_gpbandit.core.config import settings
from tvo_gpbandit.core.errors import NumericError
from tvo_gpbandit.experiments import plots
from tvo_gpbandit.experiments.artifacts import prefixed, write_csv, write_json
from tvo_gpbandit.experiments.schema import ExperimentConfig, ensure_runnable, resolved
from tvo_gpbandit.gp.acquisition import AcquisitionConfig
from tvo_gpbandit.models import fixtures
from tvo_gpbandit.regret_lab import (
    REGRET_COLUMNS,
    GridSpec,
    bound_report,
    compare_policies,
    play_policy,
    sample_tv_objective,
)
from tvo_gpbandit.tvo.moments import BOUND_CURVE_COLUMNS, bound_curve

logger = logging.getLogger(__name__)

AGGREGATE_COLUMNS = [
    "seed",
    "scheduler",
    "final_log_evidence",
    "final_elbo",
    "final_kl",
    "rounds",
    "telescoping_gap",
]
ABLATION_COLUMNS = [
    "permutation_invariant",
    "reward_estimator",
    "kappa_override",
    "d",
    "budget",
    "seed",
    "log_evidence",
    "kl",
]
REGRET_AGGREGATE_COLUMNS = ["policy", "mean_final_regret", "median_final_regret", "seeds"]
LOG_SWEEP_COLUMNS = ["d", "method", "beta1", "median_log_evidence", "median_kl"]
LOG_SWEEP_SUMMARY_COLUMNS = [
    "d",
    "best_beta1",
    "log_best_log_evidence",
    "log_best_kl",
    "bandit_log_evidence",
    "bandit_kl",
]
BOUND_COLUMNS = [
    "seed",
    "n_rounds",
    "gamma",
    "rhs_min",
    "best_block_size",
    "holds",
    "regret_bound",
    "approximate",
]


def training_setup(config: ExperimentConfig, seed: int):
    """Fixture data plus a freshly initialised model of the same shape."""
    spec = fixtures.read_spec(config.model.fixture)
    _, data = fixtures.materialize(spec)
    model = fixtures.build_model(
        spec.kind, spec.K, spec.D, seed=seed, scale=config.model.init_scale
    )
    return model, data


def train_seed(payload: dict, seed: int, scheduler: str, overrides: Optional[dict] = None) -> dict:
    """Train one model for one seed; numeric failures come back with the partial trace."""
    config = ExperimentConfig.model_validate(payload)
    overrides = dict(overrides or {})
    model, data = training_setup(config, seed)
    cfg = config.bandit_config(**overrides)
    policy = config.window.build()
    try:
        if scheduler == "gp-bandit":
            trace = run_bandit(model, data, config.T, policy, cfg, seed)
        else:
            trace = run_baseline(
                model,
                data,
                config.T,
                scheduler,
                seed,
                cfg,
                policy,
                beta1=overrides.get("beta1", config.scheduler.beta1),
                refresh_every=config.scheduler.refresh_every,
            )
    except NumericError as e:
        partial = getattr(e, "trace", None)
        return {
            "seed": seed,
            "trace": None if partial is None else partial.to_dict(),
            "epoch_rows": [] if partial is None else partial.epoch_rows(),
            "round_rows": [] if partial is None else partial.round_rows(),
            "error": {"message": str(e), "diagnostics": e.diagnostics},
        }
    return {
        "seed": seed,
        "trace": trace.to_dict(),
        "epoch_rows": trace.epoch_rows(),
        "round_rows": trace.round_rows(),
        "error": None,
    }


def _regret_acquisition(config: ExperimentConfig, rounds: int, w: int = 1) -> AcquisitionConfig:
    acq = config.acquisition
    return AcquisitionConfig(
        delta=acq.delta,
        a=acq.a,
        b=acq.b,
        T=rounds * w,
        w=w,
        d=config.regret.grid_d,
        kappa_override=acq.kappa_override,
    )


def regret_seed(payload: dict, seed: int) -> dict:
    config = ExperimentConfig.model_validate(payload)
    spec = config.regret
    grid = GridSpec(d=spec.grid_d, points=spec.grid_points)
    objective = sample_tv_objective(
        grid, spec.omega, spec.lengthscale, spec.rounds, seed, spec.noise_variance
    )
    acquisition = _regret_acquisition(config, spec.rounds)
    comparison = compare_policies(objective, spec.policies, [seed], acquisition)
    result = {
        "seed": seed,
        "rows": comparison.rows(),
        "curves": {p: c[0].tolist() for p, c in comparison.curves.items()},
        "bound_report": None,
    }
    if "gp-ucb" in spec.policies:
        chosen = comparison.choices["gp-ucb"][0]
        report = bound_report(
            objective.arms[chosen],
            np.arange(1, spec.rounds + 1),
            objective.hyp,
            acquisition,
        )
        result["bound_report"] = report.to_dict()
        result["chosen"] = chosen.tolist()
    return result


def bound_seed(payload: dict, seed: int) -> dict:
    config = ExperimentConfig.model_validate(payload)
    spec = config.regret
    w = config.window.fixed_w or config.window.initial_w
    n_rounds = max(config.T // w, 1)
    objective = sample_tv_objective(
        GridSpec(d=spec.grid_d, points=spec.grid_points),
        spec.omega,
        spec.lengthscale,
        n_rounds,
        seed,
        spec.noise_variance,
    )
    acquisition = _regret_acquisition(config, n_rounds, w)
    chosen = play_policy(objective, "gp-ucb", seed, acquisition)
    report = bound_report(
        objective.arms[chosen], np.arange(1, n_rounds + 1), objective.hyp, acquisition
    )
    return {"seed": seed, "chosen": chosen.tolist(), "report": report.to_dict()}


class ExperimentRunner:
    def __init__(
        self,
        config: ExperimentConfig,
        out_dir: Optional[Path] = None,
        jobs: Optional[int] = None,
        seeds: Optional[Sequence[int]] = None,
    ):
        if seeds:
            config = config.model_copy(update={"seeds": list(seeds)})
        self.config = config

        # Determine output directory with fallback hierarchy
        if out_dir:
            self.out_dir = Path(out_dir)
        elif config.output_dir:
            self.out_dir = Path(config.output_dir)
        else:
            self.out_dir = Path(settings.OUT_DIR) / config.experiment

        self.jobs = max(int(jobs or settings.JOBS), 1)
        self.timing: Dict[str, float] = {}

    @property
    def payload(self) -> dict:
        return resolved(self.config)

    def _map(self, func: Callable, tasks: List[Tuple]) -> List:
        """Run ``func(*task)`` for every task, in task order."""
        if self.jobs == 1 or len(tasks) <= 1:
            return [func(*task) for task in tasks]
        with ProcessPoolExecutor(max_workers=self.jobs) as pool:
            return list(pool.map(func, *zip(*tasks)))

    def write(self, relative_path: str, payload) -> Path:
        path = self.out_dir / relative_path
        print(f"📝 Writing: {relative_path}")
        return write_json(path, payload)

    def write_table(self, relative_path: str, rows, columns) -> Path:
        path = self.out_dir / relative_path
        print(f"📝 Writing: {relative_path}")
        return write_csv(path, rows, columns)

    def write_trace(self, variant: str, result: dict) -> None:
        """Trace of one worker result, partial when the run failed."""
        if result["trace"] is not None:
            self.write(f"traces/{variant}/seed_{result['seed']}.json", result["trace"])

    def run(self) -> Path:
        """Run the configured experiment and write its artifacts"""
        ensure_runnable(self.config)
        kind = self.config.experiment
        print(f"\n🚀 Running {kind} with seeds {self.config.seeds}")
        print(f"📍 Output: {self.out_dir}\n")
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.write("resolved_config.json", self.payload)

        started = time.perf_counter()
        handlers = {
            "tvo-train": self.run_training,
            "regret-lab": self.run_regret_lab,
            "bound-check": self.run_bound_check,
            "ablation": self.run_ablation,
            "log-sweep": self.run_log_sweep,
        }
        handlers[kind]()
        self.timing["total"] = time.perf_counter() - started
        self.write("timing.json", self.timing)

        print(f"\n✅ {kind} complete!")
        print(f"\n📂 Artifacts: {self.out_dir}")
        return self.out_dir

    def ablate(self) -> Path:
        self.config = self.config.model_copy(update={"experiment": "ablation"})
        return self.run()

    # tvo-train

    def run_training(self):
        scheduler = self.config.scheduler.name
        results = self._map(
            train_seed, [(self.payload, seed, scheduler) for seed in self.config.seeds]
        )
        failures = self._write_training(results, scheduler)
        if failures:
            raise NumericError(
                f"{len(failures)} of {len(results)} runs failed", {"seeds": failures}
            )

    def _write_training(self, results: List[dict], scheduler: str) -> List[int]:
        epochs, rounds, aggregate, failures = [], [], [], []
        series = {}
        for result in results:
            seed = result["seed"]
            trace = result["trace"]
            if trace is not None:
                self.write(f"traces/seed_{seed}.json", trace)
                self.timing[f"seed_{seed}"] = trace["wallclock"]
            epochs += prefixed(result["epoch_rows"], seed=seed)
            rounds += prefixed(result["round_rows"], seed=seed)
            if result["error"] is not None:
                print(f"❌ Seed {seed} failed: {result['error']['message']}")
                failures.append(seed)
                continue
            last = trace["epochs"][-1]
            aggregate.append(
                {
                    "seed": seed,
                    "scheduler": scheduler,
                    "final_log_evidence": last["log_evidence"],
                    "final_elbo": last["elbo"],
                    "final_kl": last["kl"],
                    "rounds": len(trace["rounds"]),
                    "telescoping_gap": trace["telescoping_gap"],
                }
            )
            series[f"seed {seed}"] = (
                [e["epoch"] for e in trace["epochs"]],
                [e["log_evidence"] for e in trace["epochs"]],
            )
            print(f"✔️  Seed {seed}: final log p(x) {last['log_evidence']:.4f}")

        self.write_table("epochs.csv", epochs, ["seed"] + EPOCH_COLUMNS)
        self.write_table("rounds.csv", rounds, ["seed"] + ROUND_COLUMNS)
        self.write_table("aggregate.csv", aggregate, AGGREGATE_COLUMNS)
        if series:
            plots.line_plot(
                self.out_dir / "evidence.svg", series, "epoch", "log p(x)", f"{scheduler} training"
            )
        if aggregate and self.config.bound_curve_sizes:
            first = next(r for r in results if r["error"] is None)
            model = fixtures.model_from_dict(first["trace"]["final_model"])
            _, data = training_setup(self.config, first["seed"])
            rows = bound_curve(
                model, data, self.config.bound_curve_sizes, beta1=self.config.scheduler.beta1
            )
            self.write_table("bound_curve.csv", rows, BOUND_CURVE_COLUMNS)
        return failures

    # regret-lab / bound-check

    def run_regret_lab(self):
        results = self._map(regret_seed, [(self.payload, seed) for seed in self.config.seeds])
        rows, reports = [], []
        for result in results:
            self.write(f"traces/seed_{result['seed']}.json", result)
            rows += result["rows"]
            if result["bound_report"] is not None:
                reports.append({"seed": result["seed"], **result["bound_report"]})
        self.write_table("regret.csv", rows, REGRET_COLUMNS)

        policies = self.config.regret.policies
        aggregate, series = [], {}
        for policy in policies:
            curves = np.array([r["curves"][policy] for r in results])
            mean = curves.mean(axis=0)
            aggregate.append(
                {
                    "policy": policy,
                    "mean_final_regret": float(mean[-1]),
                    "median_final_regret": float(np.median(curves[:, -1])),
                    "seeds": len(results),
                }
            )
            series[policy] = (list(range(1, mean.size + 1)), mean.tolist())
            print(f"✔️  {policy}: mean final regret {mean[-1]:.4f}")
        self.write_table("aggregate.csv", aggregate, REGRET_AGGREGATE_COLUMNS)
        if reports:
            self.write("bound_report.json", reports)
        plots.line_plot(
            self.out_dir / "regret.svg", series, "round", "cumulative regret", "policy comparison"
        )

    def run_bound_check(self):
        results = self._map(bound_seed, [(self.payload, seed) for seed in self.config.seeds])
        reports, aggregate = [], []
        for result in results:
            report = result["report"]
            self.write(f"traces/seed_{result['seed']}.json", result)
            reports.append({"seed": result["seed"], **report})
            aggregate.append({"seed": result["seed"], **report})
            mark = "✔️ " if report["holds"] else "⚠️ "
            print(
                f"{mark} Seed {result['seed']}: "
                f"gamma {report['gamma']:.4f} <= {report['rhs_min']:.4f}"
            )
        self.write("bound_report.json", reports)
        self.write_table("aggregate.csv", aggregate, BOUND_COLUMNS)

        first = reports[0]
        sizes = first["block_sizes"]
        plots.line_plot(
            self.out_dir / "bound.svg",
            {
                "gamma": (sizes, [first["gamma"]] * len(sizes)),
                "log form": (sizes, first["rhs_log_form"]),
                "N^2.5": (sizes, first["rhs_tight"]),
                "N^3": (sizes, first["rhs_loose"]),
            },
            "block length",
            "information gain",
            f"seed {first['seed']}",
        )

    # ablation

    def run_ablation(self):
        spec = self.config.ablation
        d_values = spec.d_values or [self.config.d]
        budgets = sorted(spec.budgets or [self.config.T])
        horizon = self.config.model_copy(update={"T": budgets[-1]})
        payload = resolved(horizon)

        variants = list(
            itertools.product(
                spec.permutation_invariance, spec.reward_estimator, spec.kappa_override, d_values
            )
        )
        tasks = []
        for invariant, estimator, kappa_override, d in variants:
            overrides = {
                "permutation_invariant": invariant,
                "reward_estimator": estimator,
                "kappa_override": kappa_override,
                "d": d,
            }
            tasks += [(payload, seed, "gp-bandit", overrides) for seed in self.config.seeds]
        results = self._map(train_seed, tasks)

        rows, failures = [], []
        for (_, seed, _, overrides), result in zip(tasks, results):
            variant = (
                f"invariant={overrides['permutation_invariant']}"
                f"_reward={overrides['reward_estimator']}"
                f"_kappa={overrides['kappa_override']}_d={overrides['d']}"
            )
            self.write_trace(variant, result)
            if result["error"] is not None:
                failures.append({"variant": variant, "seed": seed})
                continue
            epochs = result["trace"]["epochs"]
            for budget in budgets:
                rows.append(
                    {
                        "permutation_invariant": overrides["permutation_invariant"],
                        "reward_estimator": overrides["reward_estimator"],
                        "kappa_override": overrides["kappa_override"],
                        "d": overrides["d"],
                        "budget": budget,
                        "seed": seed,
                        "log_evidence": epochs[budget - 1]["log_evidence"],
                        "kl": epochs[budget - 1]["kl"],
                    }
                )
        self.write_table("ablation.csv", rows, ABLATION_COLUMNS)
        self.write_table(*self._ablation_table(rows, budgets))
        if failures:
            raise NumericError(f"{len(failures)} ablation runs failed", {"runs": failures})

    @staticmethod
    def _ablation_table(rows: List[dict], budgets: List[int]):
        columns = ["variant", "d"] + [f"T={b}" for b in budgets]
        groups: Dict[Tuple, Dict[int, List[float]]] = {}
        for row in rows:
            key = (
                f"invariant={row['permutation_invariant']} "
                f"reward={row['reward_estimator']} kappa={row['kappa_override']}",
                row["d"],
            )
            groups.setdefault(key, {}).setdefault(row["budget"], []).append(row["log_evidence"])
        table = []
        for (variant, d), by_budget in groups.items():
            entry = {"variant": variant, "d": d}
            for b in budgets:
                entry[f"T={b}"] = float(np.median(by_budget[b]))
            table.append(entry)
        return "ablation_table.csv", table, columns

    # log-sweep

    def run_log_sweep(self):
        spec = self.config.log_sweep
        d_values = spec.d_values or [self.config.d]
        tasks, labels = [], []
        for d in d_values:
            for seed in self.config.seeds:
                tasks.append((self.payload, seed, "gp-bandit", {"d": d}))
                labels.append((d, "gp-bandit", None))
                for beta1 in spec.beta1_grid:
                    tasks.append((self.payload, seed, "log", {"d": d, "beta1": beta1}))
                    labels.append((d, "log", beta1))
        results = self._map(train_seed, tasks)

        grouped: Dict[Tuple, List[Tuple[float, float, float]]] = {}
        failures = []
        for (d, method, beta1), result in zip(labels, results):
            variant = f"d={d}_{method}" + ("" if beta1 is None else f"_beta1={beta1:.6g}")
            self.write_trace(variant, result)
            if result["error"] is not None:
                failures.append(
                    {"variant": variant, "seed": result["seed"], **result["error"]}
                )
                continue
            label = (d, method, beta1)
            trace = result["trace"]
            last = trace["epochs"][-1]
            grouped.setdefault(label, []).append(
                (last["log_evidence"], last["kl"], trace["wallclock"])
            )

        rows, summary = [], []
        for d in d_values:
            best = None
            for (group_d, method, beta1), values in grouped.items():
                if group_d != d:
                    continue
                evidence, kl, wallclock = map(np.array, zip(*values))
                key = f"d={d} {method}" + ("" if beta1 is None else f" beta1={beta1:.6g}")
                self.timing[key] = float(wallclock.sum())
                row = {
                    "d": d,
                    "method": method,
                    "beta1": beta1,
                    "median_log_evidence": float(np.median(evidence)),
                    "median_kl": float(np.median(kl)),
                }
                rows.append(row)
                better = best is None or row["median_log_evidence"] > best["median_log_evidence"]
                if method == "log" and better:
                    best = row
            bandit = next(
                (r for r in rows if r["d"] == d and r["method"] == "gp-bandit"), None
            )
            if best is None or bandit is None:
                continue
            summary.append(
                {
                    "d": d,
                    "best_beta1": best["beta1"],
                    "log_best_log_evidence": best["median_log_evidence"],
                    "log_best_kl": best["median_kl"],
                    "bandit_log_evidence": bandit["median_log_evidence"],
                    "bandit_kl": bandit["median_kl"],
                }
            )
            print(
                f"✔️  d={d}: best log beta1={best['beta1']:.4g} "
                f"({best['median_log_evidence']:.4f}) vs bandit {bandit['median_log_evidence']:.4f}"
            )
        self.write_table("log_sweep.csv", rows, LOG_SWEEP_COLUMNS)
        self.write_table("aggregate.csv", summary, LOG_SWEEP_SUMMARY_COLUMNS)
        if failures:
            first = failures[0]
            raise NumericError(
                f"{len(failures)} log sweep runs failed, first: {first['message']}",
                {"runs": [{"variant": f["variant"], "seed": f["seed"]} for f in failures]},
            )
