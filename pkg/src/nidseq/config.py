"""Pipeline configuration: one JSON document, every leaf flag-overridable.

Precedence is flag > file > default. All randomness in the pipeline flows
from the named seeds here; nothing reads the wall clock.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

from nidseq.trajectory import POLICIES, RewardConfig


@dataclass
class PathsConfig:
    capture: str = ""
    ground_truth: str = ""
    workdir: str = "work"


@dataclass
class IngestConfig:
    n_p: int = 1500
    gap_timeout: float = 60.0


@dataclass
class SynthConfig:
    n_flows: int = 2000
    max_len: int = 16
    pattern_byte: int = 170
    plant_density: float = 1.0
    mean_gap: float = 0.5


@dataclass
class AutoencoderConfig:
    h: int = 256
    n_b: int = 100
    activation: str = "sigmoid"
    learning_rate: float = 1e-3
    epochs: int = 10
    batch_size: int = 64


@dataclass
class SamplingConfig:
    policy: str = "expert"
    test_fraction: float = 0.2
    oversample: bool = True

    def __post_init__(self) -> None:
        if self.policy not in POLICIES:
            raise ValueError(f"policy must be one of {POLICIES}, got {self.policy!r}")
        if not 0.0 <= self.test_fraction <= 1.0:
            raise ValueError(f"test_fraction must be in [0, 1], got {self.test_fraction}")


@dataclass
class SeqModelConfig:
    """Sequence-model architecture; obs_dim is derived from n_b at build time."""

    k: int = 20
    d_time: int = 32
    d_value: int = 64
    d_type: int = 32
    n_layers: int = 3
    n_heads: int = 4
    d_ff: int = 256
    c: float = 10000.0
    n_decisions: int = 3
    action_mode: str = "discrete"
    lambda_wait: float = 0.1


@dataclass
class TrainConfig:
    learning_rate: float = 1e-4
    batch_size: int = 64
    steps: int = 1000
    grad_clip: float = 1.0


@dataclass
class BaselineTrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 64
    steps: int = 2000
    grad_clip: float = 1.0


@dataclass
class EvalConfig:
    n_replicates: int = 8


@dataclass
class SeedsConfig:
    synth: int = 1
    autoencoder: int = 2
    split: int = 3
    trajectory: int = 4
    model: int = 5
    bc: int = 6
    dnn: int = 7
    eval: int = 8


@dataclass
class PipelineConfig:
    paths: PathsConfig = field(default_factory=PathsConfig)
    ingest: IngestConfig = field(default_factory=IngestConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)
    autoencoder: AutoencoderConfig = field(default_factory=AutoencoderConfig)
    reward: RewardConfig = field(default_factory=RewardConfig)
    sampling: SamplingConfig = field(default_factory=SamplingConfig)
    model: SeqModelConfig = field(default_factory=SeqModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    bc: BaselineTrainConfig = field(default_factory=BaselineTrainConfig)
    dnn: BaselineTrainConfig = field(default_factory=BaselineTrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    seeds: SeedsConfig = field(default_factory=SeedsConfig)


_SECTIONS = {f.name: f.type for f in dataclasses.fields(PipelineConfig)}


def to_dict(cfg: PipelineConfig) -> dict:
    return dataclasses.asdict(cfg)


def from_dict(data: dict) -> PipelineConfig:
    """Build a config from a (possibly partial) nested dict; unknown keys fail."""
    kwargs = {}
    defaults = PipelineConfig()
    for section_field in dataclasses.fields(PipelineConfig):
        name = section_field.name
        sub = data.get(name, {})
        if not isinstance(sub, dict):
            raise ValueError(f"config section {name!r} must be an object")
        default_section = getattr(defaults, name)
        valid = {f.name for f in dataclasses.fields(default_section)}
        unknown = set(sub) - valid
        if unknown:
            raise ValueError(f"unknown config key {name}.{sorted(unknown)[0]}")
        merged = {**dataclasses.asdict(default_section), **sub}
        kwargs[name] = type(default_section)(**merged)
    unknown_sections = set(data) - set(kwargs)
    if unknown_sections:
        raise ValueError(f"unknown config section {sorted(unknown_sections)[0]!r}")
    return PipelineConfig(**kwargs)


def load_config(path: str | None) -> PipelineConfig:
    if path is None:
        return PipelineConfig()
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ValueError(f"{path}: config must be a JSON object")
    return from_dict(data)


def save_config(path: str, cfg: PipelineConfig) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(to_dict(cfg), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _cast(raw: str, target_type: type):
    if target_type is bool:
        low = raw.lower()
        if low in ("true", "1", "yes"):
            return True
        if low in ("false", "0", "no"):
            return False
        raise ValueError(f"expected a boolean, got {raw!r}")
    if target_type is int:
        return int(raw)
    if target_type is float:
        return float(raw)
    return raw


def dotted_fields() -> list[tuple[str, type]]:
    """All (section.field, type) pairs, for generating CLI flags."""
    out = []
    defaults = PipelineConfig()
    for section_field in dataclasses.fields(PipelineConfig):
        section = getattr(defaults, section_field.name)
        for leaf in dataclasses.fields(section):
            out.append((f"{section_field.name}.{leaf.name}", type(getattr(section, leaf.name))))
    return out


def apply_overrides(cfg: PipelineConfig, overrides: dict[str, str]) -> PipelineConfig:
    """Apply dotted-path string overrides, rebuilding the affected sections."""
    data = to_dict(cfg)
    types = dict(dotted_fields())
    for dotted, raw in overrides.items():
        if dotted not in types:
            raise ValueError(f"unknown config field {dotted!r}")
        section, leaf = dotted.split(".", 1)
        try:
            data[section][leaf] = _cast(raw, types[dotted])
        except ValueError as exc:
            raise ValueError(f"bad value for {dotted}: {exc}") from exc
    return from_dict(data)
