"""Run configuration: one JSON file drives every pipeline command."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, asdict

from .data import SyntheticConfig
from .reconstructor import ReconstructorConfig
from .predictors import PREDICTOR_KINDS, DOMAIN_MODES, default_config
from .predictors.api import _CONFIG_TYPES


@dataclass
class ComparisonConfig:
    kinds: tuple = PREDICTOR_KINDS
    modes: tuple = DOMAIN_MODES
    seeds: tuple = (0, 1, 2, 3, 4)

    def __post_init__(self):
        for kind in self.kinds:
            if kind not in PREDICTOR_KINDS:
                raise ValueError(f"unknown predictor kind {kind!r}")
        for mode in self.modes:
            if mode not in DOMAIN_MODES:
                raise ValueError(f"unknown domain mode {mode!r}")
        if not self.seeds:
            raise ValueError("comparison needs at least one seed")


@dataclass
class RunConfig:
    run_dir: str = "run"
    synthetic: SyntheticConfig = field(default_factory=SyntheticConfig)
    reconstructor: ReconstructorConfig = field(default_factory=ReconstructorConfig)
    predictors: dict = field(default_factory=dict)  # kind -> config dataclass
    comparison: ComparisonConfig = field(default_factory=ComparisonConfig)
    report_formats: tuple = ("json", "csv")

    def predictor_config(self, kind):
        return self.predictors.get(kind) or default_config(kind)


def _tuplify(obj):
    if isinstance(obj, list):
        return tuple(_tuplify(v) for v in obj)
    return obj


def _build(cls, record):
    return cls(**{k: _tuplify(v) for k, v in record.items()})


def load_config(path=None, overrides=None):
    """Load a RunConfig from JSON; missing sections fall back to defaults."""
    raw = {}
    if path is not None:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    if overrides:
        raw = {**raw, **overrides}
    known = {"run_dir", "synthetic", "reconstructor", "predictors",
             "comparison", "report_formats"}
    unknown = set(raw) - known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    predictors = {}
    for kind, record in raw.get("predictors", {}).items():
        if kind not in _CONFIG_TYPES:
            raise ValueError(f"unknown predictor kind {kind!r} in config")
        predictors[kind] = _build(_CONFIG_TYPES[kind], record)
    return RunConfig(
        run_dir=raw.get("run_dir", "run"),
        synthetic=_build(SyntheticConfig, raw.get("synthetic", {})),
        reconstructor=_build(ReconstructorConfig, raw.get("reconstructor", {})),
        predictors=predictors,
        comparison=_build(ComparisonConfig, raw.get("comparison", {})),
        report_formats=_tuplify(raw.get("report_formats", ["json", "csv"])),
    )


def config_to_dict(config):
    return {
        "run_dir": config.run_dir,
        "synthetic": asdict(config.synthetic),
        "reconstructor": asdict(config.reconstructor),
        "predictors": {k: asdict(v) for k, v in sorted(config.predictors.items())},
        "comparison": asdict(config.comparison),
        "report_formats": list(config.report_formats),
    }


def run_config_digest(config):
    blob = json.dumps(config_to_dict(config), sort_keys=True, default=list)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]
