"""Pipeline configuration: one flat, human-editable mapping.

Defaults reproduce the reference protocol (run selection, filter band
edges, analysis windows, grids). Every key can be overridden from a YAML
file or a CLI flag; the effective configuration is embedded in the run
manifest so results stay reproducible.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .dsp import FRONTAL_LABELS, MONTAGE_LABELS
from .errors import ConfigError

DATA_DIR_ENV = "MOTORDECODE_DATA"


@dataclass
class PipelineConfig:
    # data selection
    data_dir: str = "data"
    out_dir: str = "out"
    cache_dir: str = "out/cache"
    subjects: list[str] = field(default_factory=lambda: [f"S{i:03d}" for i in range(1, 7)])
    runs: list[int] = field(default_factory=lambda: [3, 7, 11])

    # preprocessing
    bandpass_low_hz: float = 0.5
    bandpass_high_hz: float = 90.0
    bandpass_order: int = 4
    notch_hz: float = 50.0
    notch_q: float = 35.0
    rhythm_order: int = 4

    # montage + artifact removal
    montage: list[str] = field(default_factory=lambda: list(MONTAGE_LABELS))
    frontal: list[str] = field(default_factory=lambda: list(FRONTAL_LABELS))
    aar_scope: str = "montage"  # montage | full
    eog_threshold: float = 0.6
    emg_threshold: float = 0.6
    aar_lags: int = 50

    # analyses / ICA
    analyses: list[str] = field(default_factory=lambda: ["ERD", "ERS", "MRCP"])
    ica_max_iterations: int = 4096

    # features + evaluation
    normalization: str = "full"  # full | train-only
    subsets: list[str] = field(
        default_factory=lambda: ["All", "PX", "MX", "EX", "PMX", "MEX", "PEX"]
    )
    classifiers: list[str] = field(default_factory=lambda: ["NN", "SVM"])
    nn_hidden_max: int = 20
    nn_learning_rate: float = 0.1
    nn_max_epochs: int = 2000
    svm_degree_max: int = 10
    svm_gamma_max: int = 10
    svm_c: float = 1.0
    stratify: bool = True

    # global seed for every stochastic stage
    seed: int = 7

    # synthetic mode (None = real data); keys: depth, subjects, runs,
    # events, noise, mu_amplitude
    synthetic: dict | None = None

    def __post_init__(self):
        if self.aar_scope not in ("montage", "full"):
            raise ConfigError(f"aar_scope must be montage|full, got {self.aar_scope!r}")
        if self.normalization not in ("full", "train-only"):
            raise ConfigError(
                f"normalization must be full|train-only, got {self.normalization!r}"
            )
        for sub in self.subsets:
            if sub.upper() not in ("ALL", "PX", "MX", "EX", "PMX", "MEX", "PEX"):
                raise ConfigError(f"unknown feature subset {sub!r}")
        for clf in self.classifiers:
            if clf.upper() not in ("NN", "SVM"):
                raise ConfigError(f"unknown classifier {clf!r}")
        if not 0 < self.nn_hidden_max <= 64:
            raise ConfigError("nn_hidden_max must be in 1..64")
        if not (0 < self.svm_degree_max <= 20 and 0 < self.svm_gamma_max <= 20):
            raise ConfigError("svm grids must be in 1..20")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, payload: dict) -> "PipelineConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(payload) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        return cls(**payload)

    @classmethod
    def load(cls, path: Path | str) -> "PipelineConfig":
        try:
            payload = yaml.safe_load(Path(path).read_text())
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse config file {path}: {exc}") from None
        if payload is None:
            payload = {}
        if not isinstance(payload, dict):
            raise ConfigError(f"config file {path} must contain a mapping")
        return cls.from_dict(payload)

    def dump(self, path: Path | str) -> None:
        Path(path).write_text(yaml.safe_dump(self.to_dict(), sort_keys=True))

    def with_overrides(self, **overrides) -> "PipelineConfig":
        payload = self.to_dict()
        for key, value in overrides.items():
            if value is None:
                continue
            if key not in payload:
                raise ConfigError(f"unknown config key {key!r}")
            payload[key] = value
        return PipelineConfig.from_dict(payload)

    def resolve_data_dir(self) -> Path:
        return Path(os.environ.get(DATA_DIR_ENV, self.data_dir))


def parse_synthetic_option(text: str) -> dict:
    """Parse 'depth=0.6,subjects=6,...' into synthetic-mode settings."""
    settings: dict = {}
    if text.strip() in ("", "on", "default"):
        return settings
    casts = {
        "depth": float,
        "noise": float,
        "mu_amplitude": float,
        "subjects": int,
        "runs": int,
        "events": int,
    }
    for part in text.split(","):
        if "=" not in part:
            raise ConfigError(f"synthetic option {part!r} is not key=value")
        key, value = (s.strip() for s in part.split("=", 1))
        if key not in casts:
            raise ConfigError(
                f"unknown synthetic key {key!r} (expected one of {', '.join(casts)})"
            )
        try:
            settings[key] = casts[key](value)
        except ValueError:
            raise ConfigError(f"bad value for synthetic key {key}: {value!r}") from None
    return settings
