"""Run configuration: one YAML file drives the whole pipeline.

Only seed and output directory may be overridden on the command line;
everything else lives in the file so a run is reproducible from config +
seed alone.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path

import yaml

from .ais import NavStatus
from .dataset import OutlierCaps
from .errors import ConfigError
from .net import TrainConfig
from .synth import PRESETS, BehaviorModel, ContextPlan, SynthConfig
from .thresholds import DEFAULT_LAMBDA


@dataclass(frozen=True)
class DatasetParams:
    window_len: int = 50
    stride: int = 50
    ratios: tuple[float, float, float] = (0.6, 0.2, 0.2)
    max_time_gap_s: float = 9503.0
    max_dist_gap_m: float = 3556.0
    min_span_s: float = 180.0
    port_radius_m: float = 5000.0
    max_train_per_context: int = 50_000
    max_eval_per_context: int = 5_000
    anomalous_to_test: bool = True

    def caps(self) -> OutlierCaps:
        return OutlierCaps(max_time_gap_s=self.max_time_gap_s,
                           max_dist_gap_m=self.max_dist_gap_m,
                           min_span_s=self.min_span_s)

    def __post_init__(self):
        if self.window_len < 2 or self.stride < 1:
            raise ConfigError("window_len must be >= 2 and stride >= 1")
        if len(self.ratios) != 3 or abs(sum(self.ratios) - 1.0) > 1e-9 \
                or min(self.ratios) < 0:
            raise ConfigError("split ratios must be three non-negatives summing to 1")


@dataclass(frozen=True)
class ThresholdParams:
    lam: float = DEFAULT_LAMBDA
    fit_split: str = "train"

    def __post_init__(self):
        if self.lam <= 0:
            raise ConfigError("lambda must be positive")
        if self.fit_split not in ("train", "val"):
            raise ConfigError("fit_split must be 'train' or 'val'")


@dataclass(frozen=True)
class GroupingParams:
    strategy: str = "full"
    delta: float | None = None      # None: one std of the matrix diagonal
    tau_dit: float | None = None    # None: per-context threshold caps

    def __post_init__(self):
        if self.strategy not in ("full", "contextual-only"):
            raise ConfigError(f"unknown grouping strategy {self.strategy!r}")
        if self.delta is not None and self.delta <= 0:
            raise ConfigError("delta must be positive")
        if self.tau_dit is not None and self.tau_dit <= 0:
            raise ConfigError("tau_dit must be positive")


@dataclass(frozen=True)
class ArchParams:
    latent: int = 75

    def __post_init__(self):
        if self.latent < 1:
            raise ConfigError("latent size must be positive")


MODEL_KINDS = ("ae", "moe", "cae", "gcae")


@dataclass
class RunConfig:
    seed: int
    out_dir: Path
    synth: SynthConfig | None = None
    records: Path | None = None
    ports: Path | None = None
    truth: Path | None = None
    dataset: DatasetParams = field(default_factory=DatasetParams)
    train: TrainConfig = field(default_factory=TrainConfig)
    arch: ArchParams = field(default_factory=ArchParams)
    thresholds: ThresholdParams = field(default_factory=ThresholdParams)
    grouping: GroupingParams = field(default_factory=GroupingParams)
    models: tuple[str, ...] = MODEL_KINDS

    def __post_init__(self):
        if self.synth is None and self.records is None:
            raise ConfigError("config needs either a synth section or a records path")
        bad = [m for m in self.models if m not in MODEL_KINDS]
        if bad:
            raise ConfigError(f"unknown model kinds: {bad}")


def _build_behavior(raw: dict) -> BehaviorModel:
    name = raw.get("behavior")
    if name not in PRESETS:
        raise ConfigError(f"unknown behavior preset {name!r}")
    preset = PRESETS[name]
    overrides = {k: v for k, v in raw.items()
                 if k not in ("behavior", "id", "vessels", "falsify_to")}
    known = {f.name for f in fields(BehaviorModel)}
    bad = set(overrides) - known
    if bad:
        raise ConfigError(f"unknown behavior parameters: {sorted(bad)}")
    try:
        return BehaviorModel(**{**preset.__dict__, **overrides})
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def _build_synth(raw: dict, seed: int) -> SynthConfig:
    if "contexts" not in raw or not raw["contexts"]:
        raise ConfigError("synth section needs a non-empty contexts list")
    plans = []
    for entry in raw["contexts"]:
        falsify = entry.get("falsify_to")
        if falsify is not None:
            try:
                falsify = NavStatus(falsify)
            except ValueError as exc:
                raise ConfigError(f"unknown nav status {entry['falsify_to']!r}") from exc
        plans.append(ContextPlan(
            context_id=int(entry["id"]),
            behavior=_build_behavior(entry),
            vessels=int(entry.get("vessels", 10)),
            falsify_to=falsify,
        ))
    known = {"contexts", "messages_per_vessel", "window_len", "contextual_rate",
             "collective_rate", "collective_span", "collective_magnitude_m",
             "ports", "base_mmsi"}
    bad = set(raw) - known
    if bad:
        raise ConfigError(f"unknown synth parameters: {sorted(bad)}")
    kwargs = {k: raw[k] for k in known - {"contexts", "ports"} if k in raw}
    if "ports" in raw:
        kwargs["ports"] = tuple((float(p[0]), float(p[1])) for p in raw["ports"])
    return SynthConfig(seed=seed, plans=tuple(plans), **kwargs)


def _section(raw: dict, key: str, cls, **extra):
    data = raw.get(key) or {}
    if not isinstance(data, dict):
        raise ConfigError(f"section {key!r} must be a mapping")
    known = {f.name for f in fields(cls)}
    bad = set(data) - known
    if bad:
        raise ConfigError(f"unknown keys in section {key!r}: {sorted(bad)}")
    if key == "dataset" and "ratios" in data:
        data = {**data, "ratios": tuple(data["ratios"])}
    try:
        return cls(**{**data, **extra})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid section {key!r}: {exc}") from exc


TOP_LEVEL_KEYS = {"seed", "out_dir", "synth", "records", "ports", "truth",
                  "dataset", "train", "arch", "thresholds", "grouping", "models"}


def config_from_dict(raw: dict, seed: int | None = None,
                     out_dir: Path | str | None = None) -> RunConfig:
    bad = set(raw) - TOP_LEVEL_KEYS
    if bad:
        raise ConfigError(f"unknown top-level config keys: {sorted(bad)}")
    if seed is None:
        seed = raw.get("seed")
    if seed is None:
        raise ConfigError("seed is mandatory")
    seed = int(seed)
    out = out_dir or raw.get("out_dir")
    if out is None:
        raise ConfigError("out_dir is mandatory")

    synth = _build_synth(raw["synth"], seed) if raw.get("synth") else None
    train = _section(raw, "train", TrainConfig, seed=seed)
    models = tuple(raw.get("models", MODEL_KINDS))
    return RunConfig(
        seed=seed,
        out_dir=Path(out),
        synth=synth,
        records=Path(raw["records"]) if raw.get("records") else None,
        ports=Path(raw["ports"]) if raw.get("ports") else None,
        truth=Path(raw["truth"]) if raw.get("truth") else None,
        dataset=_section(raw, "dataset", DatasetParams),
        train=train,
        arch=_section(raw, "arch", ArchParams),
        thresholds=_section(raw, "thresholds", ThresholdParams),
        grouping=_section(raw, "grouping", GroupingParams),
        models=models,
    )


def load_config(path: Path | str, seed: int | None = None,
                out_dir: Path | str | None = None) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"config root must be a mapping: {path}")
    return config_from_dict(raw, seed=seed, out_dir=out_dir)
