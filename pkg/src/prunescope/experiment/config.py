"""Experiment configuration: JSON in, strictly validated dataclasses out.

Unknown keys are rejected everywhere — a silently ignored typo is the main
way a "reproducible" run stops being one. The master seed is the single
source of randomness; every stream the pipeline uses is derived from it.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from ..errors import ConfigError
from ..pruning import Strategy
from ..trainer import Hyperparams


@dataclass(frozen=True)
class SpiralsSource:
    kind: str = "spirals"
    train_per_class: int = 500
    test_per_class: int = 250
    classes: int = 3
    noise_std: float = 0.15


@dataclass(frozen=True)
class CsvSource:
    kind: str = "csv"
    train_path: str = ""
    test_path: str = ""


@dataclass(frozen=True)
class IdxSource:
    kind: str = "idx"
    train_images: str = ""
    train_labels: str = ""
    test_images: str = ""
    test_labels: str = ""


@dataclass(frozen=True)
class TrainingSettings:
    epochs: int = 60
    batch_size: int = 32
    lr0: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 1e-4
    decay_epochs: tuple[int, ...] = (30, 45)
    decay_factor: float = 0.1
    rewind_step: int = 200


@dataclass(frozen=True)
class ImpSettings:
    levels: int = 10
    prune_fraction_per_round: float = 0.2
    strategy: str = "weight_rewind"
    ft_lr: float = 0.001
    ft_epochs: int = 40
    per_layer: bool = False

    def __post_init__(self):
        Strategy(self.strategy)  # validates the name


@dataclass(frozen=True)
class AnalysisSettings:
    k: int = 20
    n_directions: int = 500
    interp_points: int = 501
    grid_rows: int = 60
    grid_cols: int = 70
    grid_margin: float = 0.3
    taylor_probes: int = 100
    loss_cap: float = 10.0


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: SpiralsSource | CsvSource | IdxSource = field(default_factory=SpiralsSource)
    network: tuple[int, ...] = (2, 24, 24, 3)
    training: TrainingSettings = field(default_factory=TrainingSettings)
    imp: ImpSettings = field(default_factory=ImpSettings)
    analysis: AnalysisSettings = field(default_factory=AnalysisSettings)
    master_seed: int = 1
    out_dir: str = "."

    def hyperparams(self, seed: int) -> Hyperparams:
        t = self.training
        return Hyperparams(
            epochs=t.epochs,
            batch_size=t.batch_size,
            lr0=t.lr0,
            momentum=t.momentum,
            weight_decay=t.weight_decay,
            decay_epochs=t.decay_epochs,
            decay_factor=t.decay_factor,
            rewind_step=t.rewind_step,
            seed=seed,
        )


_DATASET_KINDS = {"spirals": SpiralsSource, "csv": CsvSource, "idx": IdxSource}


def _build(cls, data: dict, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object, got {type(data).__name__}")
    fields = {f for f in cls.__dataclass_fields__}
    unknown = set(data) - fields
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    coerced = dict(data)
    for key, value in coerced.items():
        if isinstance(value, list):
            coerced[key] = tuple(value)
    try:
        return cls(**coerced)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def config_from_dict(data: dict) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("config root must be a JSON object")
    known = set(ExperimentConfig.__dataclass_fields__)
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"config: unknown keys {sorted(unknown)}")

    kwargs = {}
    if "dataset" in data:
        ds = data["dataset"]
        if not isinstance(ds, dict) or "kind" not in ds:
            raise ConfigError("dataset: must be an object with a 'kind' key")
        cls = _DATASET_KINDS.get(ds["kind"])
        if cls is None:
            raise ConfigError(
                f"dataset.kind: {ds['kind']!r} is not one of {sorted(_DATASET_KINDS)}"
            )
        kwargs["dataset"] = _build(cls, ds, "dataset")
    if "network" in data:
        net = data["network"]
        if not isinstance(net, list) or not all(isinstance(s, int) for s in net):
            raise ConfigError("network: must be a list of integer layer sizes")
        kwargs["network"] = tuple(net)
    for key, cls in (
        ("training", TrainingSettings),
        ("imp", ImpSettings),
        ("analysis", AnalysisSettings),
    ):
        if key in data:
            kwargs[key] = _build(cls, data[key], key)
    if "master_seed" in data:
        if not isinstance(data["master_seed"], int):
            raise ConfigError("master_seed: must be an integer")
        kwargs["master_seed"] = data["master_seed"]
    if "out_dir" in data:
        if not isinstance(data["out_dir"], str):
            raise ConfigError("out_dir: must be a string")
        kwargs["out_dir"] = data["out_dir"]
    return ExperimentConfig(**kwargs)


def load_config(path) -> ExperimentConfig:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    return config_from_dict(data)


def config_to_dict(cfg: ExperimentConfig, normalize_out_dir: bool = True) -> dict:
    """Plain-dict form of a config. ``out_dir`` is normalized to "." by
    default so an echoed config hashes identically wherever the run lives."""
    data = asdict(cfg)
    if normalize_out_dir:
        data["out_dir"] = "."
    data["network"] = list(data["network"])
    data["training"]["decay_epochs"] = list(data["training"]["decay_epochs"])
    return data


def save_config(cfg: ExperimentConfig, path) -> None:
    Path(path).write_text(
        json.dumps(config_to_dict(cfg), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
