"""Pipeline configuration: defaults, JSON loading, ``key=value`` overrides and validation."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields, replace

from .switching import SegmentationConfig


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"config key {key!r}: {message}")
        self.key = key


@dataclass(frozen=True)
class PipelineConfig:
    # preprocessing
    sample_rate: float = 50.0
    lambda0: float = 0.01
    trend_lambda: float | None = None
    max_gap_s: float = 2.0
    # AR models and segmentation
    ar_order: int = 12
    prior_shape: float = 2.0
    ard_init: float = 1.0
    alpha: float = 1.0
    gamma: float = 1.0
    kappa: float | None = None
    expected_dwell_s: float = 1.0
    new_state_penalty: float = 0.0
    init_block_s: float = 2.0
    max_iter: int = 100
    min_duration_s: float = 0.5
    # gait labelling
    band_lo: float = 0.5
    band_hi: float = 10.0
    energy_threshold: float | None = None
    # baseline detectors; None thresholds are fitted on annotated subjects
    std_window_s: float = 1.0
    std_threshold: float | None = None
    stft_window_s: float = 1.0
    stft_threshold: float | None = None
    nasc_window_s: float = 2.0
    nasc_std_threshold: float = 0.1
    nasc_threshold: float | None = None
    cwt_window_s: float = 1.0
    walk_band_lo: float = 0.5
    walk_band_hi: float = 3.0
    cwt_threshold: float | None = None
    # medication-phase classification
    classify_features: tuple = ("band_energy", "peak_position", "peak_height")
    classify_multi: bool = False
    classify_min_segment_s: float = 3.0
    l2_weight: float = 1e-3
    min_gait_seconds: float = 120.0
    # synthetic data
    synth_subjects: int = 4
    synth_duration_s: float = 120.0
    synth_walk_fraction: float = 0.2
    synth_bout_s: float = 30.0
    synth_medication: bool = False
    synth_activity_fraction: float = 0.1
    synth_bump_rate_hz: float = 0.05
    # provenance
    seed: int = 0
    cohort: str = "synthetic"

    def segmentation(self) -> SegmentationConfig:
        return SegmentationConfig(
            order=self.ar_order,
            alpha=self.alpha,
            gamma=self.gamma,
            kappa=self.kappa,
            expected_dwell_s=self.expected_dwell_s,
            new_state_penalty=self.new_state_penalty,
            init_block_s=self.init_block_s,
            max_iter=self.max_iter,
            min_duration_s=self.min_duration_s,
            prior_shape=self.prior_shape,
            ard_init=self.ard_init,
            seed=self.seed,
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["classify_features"] = list(self.classify_features)
        return d


_POSITIVE = {
    "sample_rate", "max_gap_s", "prior_shape", "ard_init", "alpha", "gamma", "expected_dwell_s",
    "init_block_s", "min_duration_s", "std_window_s", "stft_window_s", "nasc_window_s", "cwt_window_s",
    "synth_duration_s", "synth_bout_s",
}
_NON_NEGATIVE = {"lambda0", "trend_lambda", "kappa", "band_lo", "walk_band_lo", "l2_weight", "min_gait_seconds", "classify_min_segment_s",
                 "nasc_std_threshold", "synth_activity_fraction", "synth_bump_rate_hz"}
_FEATURES = {"band_energy", "peak_position", "peak_height"}


def _coerce(name: str, value, default):
    kind = {f.name: f.type for f in fields(PipelineConfig)}[name]
    if value is None:
        if "None" in str(kind):
            return None
        raise ConfigError(name, "may not be null")
    if name == "classify_features":
        if isinstance(value, str):
            value = [v for v in value.split(",") if v]
        if not isinstance(value, (list, tuple)) or not value:
            raise ConfigError(name, "expected a non-empty list of feature names")
        bad = [v for v in value if v not in _FEATURES]
        if bad:
            raise ConfigError(name, f"unknown features {bad}")
        return tuple(value)
    if isinstance(default, bool) or "bool" in str(kind):
        if isinstance(value, bool):
            return value
        raise ConfigError(name, f"expected true/false, got {value!r}")
    if "int" in str(kind) and "float" not in str(kind):
        if isinstance(value, bool) or not isinstance(value, int):
            if isinstance(value, float) and value.is_integer():
                return int(value)
            raise ConfigError(name, f"expected an integer, got {value!r}")
        return value
    if "float" in str(kind):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(name, f"expected a number, got {value!r}")
        value = float(value)
        if not math.isfinite(value):
            raise ConfigError(name, "must be finite")
        return value
    if "str" in str(kind):
        if not isinstance(value, str):
            raise ConfigError(name, f"expected a string, got {value!r}")
        return value
    return value


def validate(cfg: PipelineConfig) -> PipelineConfig:
    for name in _POSITIVE:
        if not getattr(cfg, name) > 0:
            raise ConfigError(name, "must be positive")
    for name in _NON_NEGATIVE:
        v = getattr(cfg, name)
        if v is not None and v < 0:
            raise ConfigError(name, "must be non-negative")
    if cfg.ar_order < 0 or cfg.ar_order > 64:
        raise ConfigError("ar_order", "must lie in [0, 64]")
    if cfg.max_iter < 1:
        raise ConfigError("max_iter", "must be at least 1")
    if not cfg.band_lo < cfg.band_hi <= cfg.sample_rate / 2:
        raise ConfigError("band_hi", "band must satisfy band_lo < band_hi <= sample_rate/2")
    if not cfg.walk_band_lo < cfg.walk_band_hi <= cfg.sample_rate / 2:
        raise ConfigError("walk_band_hi", "walking band must satisfy walk_band_lo < walk_band_hi <= sample_rate/2")
    if cfg.synth_subjects < 1:
        raise ConfigError("synth_subjects", "must be at least 1")
    if not 0 < cfg.synth_walk_fraction < 1:
        raise ConfigError("synth_walk_fraction", "must lie in (0, 1)")
    if cfg.synth_walk_fraction + cfg.synth_activity_fraction >= 1:
        raise ConfigError("synth_activity_fraction", "walking plus activity must leave rest time")
    return cfg


def from_mapping(values: dict, base: PipelineConfig | None = None) -> PipelineConfig:
    base = base or PipelineConfig()
    known = {f.name for f in fields(PipelineConfig)}
    updates = {}
    for key, value in values.items():
        if key not in known:
            raise ConfigError(key, "unknown key")
        updates[key] = _coerce(key, value, getattr(base, key))
    return validate(replace(base, **updates))


def load_config(path=None, overrides=()) -> PipelineConfig:
    """Defaults, then the JSON file at ``path``, then ``key=value`` overrides (values parsed as JSON)."""
    cfg = PipelineConfig()
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        if not isinstance(data, dict):
            raise ConfigError("<root>", "config file must hold a JSON object")
        cfg = from_mapping(data, cfg)
    parsed = {}
    for item in overrides:
        if "=" not in item:
            raise ConfigError(item, "overrides must look like key=value")
        key, raw = item.split("=", 1)
        try:
            parsed[key.strip()] = json.loads(raw)
        except json.JSONDecodeError:
            parsed[key.strip()] = raw
    return from_mapping(parsed, cfg) if parsed else validate(cfg)
