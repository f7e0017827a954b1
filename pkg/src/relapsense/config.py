"""Pipeline configuration: nested dataclasses, file loading, strict keys.

A config file (YAML or JSON) holds one mapping per section; unknown keys
are rejected so typos never silently fall back to defaults. Every CLI
stage writes the fully resolved config next to its outputs.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .errors import UsageError


@dataclass
class HampelConfig:
    """Sliding-median outlier removal / imputation over 1-hour ranges."""

    window_seconds: float = 3600.0
    n_sigmas: float = 3.0
    mad_scale: float = 1.4826  # Gaussian consistency factor
    impute_quorum: float = 0.25

    def validate(self) -> None:
        if self.window_seconds <= 0 or self.n_sigmas <= 0 or self.mad_scale <= 0:
            raise UsageError("hampel: window_seconds, n_sigmas, mad_scale must be > 0")
        if not 0.0 < self.impute_quorum <= 1.0:
            raise UsageError("hampel: impute_quorum must be in (0, 1]")


@dataclass
class FeatureConfig:
    interval_seconds: int = 300
    lf_band: tuple[float, float] = (0.04, 0.15)
    hf_band: tuple[float, float] = (0.15, 0.40)
    welch_segment: int = 256
    welch_overlap: float = 0.5
    remove_gravity: bool = False

    def validate(self) -> None:
        if self.interval_seconds <= 0:
            raise UsageError("features: interval_seconds must be > 0")
        if not 0.0 <= self.welch_overlap < 1.0:
            raise UsageError("features: welch_overlap must be in [0, 1)")
        for name, band in (("lf_band", self.lf_band), ("hf_band", self.hf_band)):
            lo, hi = band
            if not 0.0 <= lo < hi:
                raise UsageError(f"features: {name} must satisfy 0 <= lo < hi")


@dataclass
class DatasetConfig:
    require_steps: bool = False
    per_subject_scaling: bool = False


@dataclass
class ModelConfig:
    n_trees: int = 100
    psi: int = 256
    day_pooling: str = "mean"  # or "max"

    def validate(self) -> None:
        if self.n_trees < 1 or self.psi < 2:
            raise UsageError("model: need n_trees >= 1 and psi >= 2")
        if self.day_pooling not in ("mean", "max"):
            raise UsageError("model: day_pooling must be 'mean' or 'max'")


@dataclass
class EvalConfig:
    aggregate_mode: str = "mean_of_hmeans"  # or "hmean_of_hmeans"
    awake_fallback: bool = True

    def validate(self) -> None:
        if self.aggregate_mode not in ("mean_of_hmeans", "hmean_of_hmeans"):
            raise UsageError("eval: unknown aggregate_mode")


@dataclass
class AnomalyProfile:
    """How relapse days perturb sleep-period physiology in generated data.

    sleep_hr_shift is in multiples of the night-to-night baseline HR std;
    sleep_fragmentation is extra movement bursts per relapse night;
    activity_var_multiplier scales sleep motion noise; lf_hf_shift scales
    the LF oscillation amplitude (and shrinks HF) during episodes;
    awake_leak applies the same fraction of the perturbation to awake data.
    """

    sleep_hr_shift: float = 5.9
    sleep_fragmentation: int = 2
    activity_var_multiplier: float = 3.8
    lf_hf_shift: float = 2.25
    awake_leak: float = 0.0

    def validate(self) -> None:
        if self.activity_var_multiplier <= 0 or self.lf_hf_shift <= 0:
            raise UsageError("anomaly_profile: multipliers must be > 0")
        if self.sleep_fragmentation < 0 or not 0.0 <= self.awake_leak <= 1.0:
            raise UsageError("anomaly_profile: bad fragmentation or awake_leak")


@dataclass
class GenConfig:
    """Synthetic cohort generator settings (desk-scale by default).

    Streams are emitted at nominal device rates (20 Hz motion, 5 Hz RR)
    but only inside daily coverage blocks: one block inside the sleep
    period and one awake block, each a run of whole 5-minute intervals,
    with per-interval sensor bursts. This keeps a 10-subject, 180-day
    cohort small enough to run end to end in minutes.
    """

    n_subjects: int = 10
    n_days: int = 180
    relapse_fraction: float = 0.1
    seed: int = 42
    anomaly_profile: AnomalyProfile = field(default_factory=AnomalyProfile)
    motion_hz: float = 20.0
    rr_hz: float = 5.0
    sleep_block_minutes: int = 60
    awake_block_minutes: int = 30
    rr_burst_seconds: float = 60.0
    motion_burst_seconds: float = 5.0
    missing_fraction: float = 0.02
    train_fraction: float = 0.6
    validation_fraction: float = 0.2

    def validate(self) -> None:
        if not 0.0 <= self.relapse_fraction < 0.5:
            raise UsageError("generator: relapse_fraction must be in [0, 0.5)")
        if self.n_subjects < 1 or self.n_days < 1:
            raise UsageError("generator: need n_subjects >= 1 and n_days >= 1")
        if self.train_fraction + self.validation_fraction >= 1.0:
            raise UsageError("generator: train + validation fractions must be < 1")
        if not 0.0 <= self.missing_fraction < 1.0:
            raise UsageError("generator: missing_fraction must be in [0, 1)")
        self.anomaly_profile.validate()


@dataclass
class PipelineConfig:
    """Merged configuration for every stage plus the run seed."""

    seed: int = 42
    threads: int = 1
    day_offset_seconds: float = 0.0  # fixed per-run local-midnight offset
    hampel: HampelConfig = field(default_factory=HampelConfig)
    features: FeatureConfig = field(default_factory=FeatureConfig)
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    generator: GenConfig = field(default_factory=GenConfig)

    def validate(self) -> None:
        if self.threads < 1:
            raise UsageError("threads must be >= 1")
        self.hampel.validate()
        self.features.validate()
        self.model.validate()
        self.eval.validate()
        self.generator.validate()

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def write_resolved(self, out_dir: Path) -> Path:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        path = out_dir / "resolved_config.json"
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
        return path


def _build(cls, data: dict, context: str):
    """Instantiate a config dataclass, rejecting unknown keys."""
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(fields)
    if unknown:
        raise UsageError(f"unknown config key(s) under '{context}': {sorted(unknown)}")
    kwargs = {}
    for key, value in data.items():
        ftype = fields[key].type
        if dataclasses.is_dataclass(_DATACLASS_FIELDS.get((cls, key), None)):
            value = _build(_DATACLASS_FIELDS[(cls, key)], dict(value), f"{context}.{key}")
        elif isinstance(value, list):
            value = tuple(value)
        kwargs[key] = value
    return cls(**kwargs)


# Nested dataclass fields that need recursive construction.
_DATACLASS_FIELDS = {
    (PipelineConfig, "hampel"): HampelConfig,
    (PipelineConfig, "features"): FeatureConfig,
    (PipelineConfig, "dataset"): DatasetConfig,
    (PipelineConfig, "model"): ModelConfig,
    (PipelineConfig, "eval"): EvalConfig,
    (PipelineConfig, "generator"): GenConfig,
    (GenConfig, "anomaly_profile"): AnomalyProfile,
}


def load_config(path: str | Path | None = None, overrides: dict | None = None) -> PipelineConfig:
    """Load a PipelineConfig from YAML/JSON, applying top-level overrides."""
    data: dict = {}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise UsageError(f"config file not found: {path}")
        text = path.read_text()
        loaded = yaml.safe_load(text) if path.suffix in (".yml", ".yaml") else json.loads(text)
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise UsageError(f"config root must be a mapping: {path}")
        data = loaded
    cfg = _build(PipelineConfig, data, "root")
    for key, value in (overrides or {}).items():
        if value is not None:
            setattr(cfg, key, value)
    cfg.validate()
    return cfg
