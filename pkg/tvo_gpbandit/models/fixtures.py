"""
Synthetic datasets shipped as seed specifications.

A fixture JSON names the generating model, its size and two seeds. The
ground-truth parameters are always rebuilt from the truth seed. The
observations come from the optional "data" array when the fixture carries
one and are otherwise sampled from the data seed; ``save_dataset`` writes a
fixture with its observations pinned.
"""

import json
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np

from tvo_gpbandit.core.errors import InvalidArgumentError
from tvo_gpbandit.models.bernoulli import BernoulliLatentModel
from tvo_gpbandit.models.linear_gaussian import LinearGaussianModel

DEFAULT_FIXTURE = "bernoulli_k8_d12"
MAX_DATA = 64

Model = Union[BernoulliLatentModel, LinearGaussianModel]


@dataclass(frozen=True)
class FixtureSpec:
    name: str
    kind: str
    K: int
    D: int
    N: int
    truth_seed: int
    truth_scale: float
    data_seed: int
    data: Optional[List[List[float]]] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in ("bernoulli", "linear-gaussian"):
            raise InvalidArgumentError(f"unknown fixture kind {self.kind!r}")
        if not (1 <= self.N <= MAX_DATA):
            raise InvalidArgumentError(f"fixture N must lie in [1, {MAX_DATA}], got {self.N}")
        if self.data is None:
            return
        shape = np.shape(self.data)
        if shape != (self.N, self.D):
            raise InvalidArgumentError(
                f"fixture {self.name!r} data has shape {shape}, expected {(self.N, self.D)}"
            )
        if self.kind == "bernoulli" and not np.isin(self.data, (0.0, 1.0)).all():
            raise InvalidArgumentError(f"fixture {self.name!r} data must be binary")


def build_model(
    kind: str, K: int, D: int, seed: Optional[int] = None, scale: float = 1.0
) -> Model:
    if kind == "bernoulli":
        return BernoulliLatentModel.random(K, D, seed=seed, scale=scale)
    if kind == "linear-gaussian":
        return LinearGaussianModel.random(K, D, seed=seed, scale=scale)
    raise InvalidArgumentError(f"unknown model kind {kind!r}")


def model_from_dict(payload: dict) -> Model:
    kind = payload.get("kind")
    if kind == "bernoulli":
        return BernoulliLatentModel.from_dict(payload)
    if kind == "linear-gaussian":
        return LinearGaussianModel.from_dict(payload)
    raise InvalidArgumentError(f"unknown model kind {kind!r}")


def read_spec(name_or_path: Union[str, Path] = DEFAULT_FIXTURE) -> FixtureSpec:
    path = Path(name_or_path)
    if path.suffix == ".json" and path.exists():
        payload = json.loads(path.read_text())
    else:
        resource = resources.files("tvo_gpbandit.models").joinpath("data", f"{name_or_path}.json")
        if not resource.is_file():
            raise InvalidArgumentError(f"no fixture named {name_or_path!r}")
        payload = json.loads(resource.read_text())
    try:
        return FixtureSpec(**payload)
    except TypeError as e:
        raise InvalidArgumentError(f"malformed fixture {name_or_path!r}: {e}") from e


def materialize(spec: FixtureSpec) -> Tuple[Model, np.ndarray]:
    truth = build_model(spec.kind, spec.K, spec.D, seed=spec.truth_seed, scale=spec.truth_scale)
    if spec.data is not None:
        return truth, np.asarray(spec.data, dtype=float)
    return truth, truth.sample_data(spec.N, seed=spec.data_seed)


def load_fixture(name_or_path: Union[str, Path] = DEFAULT_FIXTURE) -> Tuple[Model, np.ndarray]:
    """Ground-truth model and dataset for a shipped fixture name or a JSON path."""
    return materialize(read_spec(name_or_path))


def save_dataset(path: Union[str, Path], spec: FixtureSpec) -> Path:
    """Write ``spec`` as a fixture JSON whose observations are pinned in ``data``."""
    _, data = materialize(spec)
    payload = {**asdict(spec), "data": data.tolist()}
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2) + "\n")
    return path
