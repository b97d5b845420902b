"""Run configuration.

One YAML file drives every command; CLI flags override file values.
Sections: paths, columns, encoder, traces, model, scoring, ingest,
attack, eval. Unknown keys are rejected so typos fail loudly instead
of silently running with defaults.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Any, Mapping

import yaml

from .attacks import ATTACK_KINDS, AttackSpec
from .flows import OPTIONAL_FIELDS, REQUIRED_FIELDS, ColumnMapping, ConfigError

DEFAULT_CLUSTERS = 20
DEFAULT_BINS = 10
DEFAULT_RESTARTS = 10

_SECTIONS = ("paths", "columns", "encoder", "traces", "model", "scoring",
             "ingest", "attack", "eval")


def identity_mapping() -> ColumnMapping:
    """Columns named exactly like the semantic fields."""
    names = REQUIRED_FIELDS + OPTIONAL_FIELDS
    return ColumnMapping(
        columns={name: name for name in names},
        timestamp_format="epoch_us",
        label_map={"benign": "benign", "malicious": "malicious"},
    )


@dataclass
class PipelineConfig:
    train_path: str | None = None
    test_path: str | None = None
    out_dir: str = "out"
    column_mapping: ColumnMapping = field(default_factory=identity_mapping)
    clusters: dict[str, int] = field(default_factory=dict)
    bins: int = DEFAULT_BINS
    restarts: int = DEFAULT_RESTARTS
    seed: int = 0
    window: int = 10
    stride: int = 1
    merge_alpha: float = 0.05
    alpha_smooth: float = 1.0
    threshold: float | None = None
    threshold_quantile: float = 0.95
    benign_filter: bool = False
    max_row_errors: int = 1000
    attack_kind: str | None = None
    attack_seed: int = 0
    frequency_threshold: int = 100
    attack_window_length: int = 10
    repetitions: int = 10

    def __post_init__(self) -> None:
        if self.window < 1 or self.stride < 1:
            raise ConfigError(f"window and stride must be >= 1, got {self.window}/{self.stride}")
        if self.bins < 1:
            raise ConfigError(f"bins must be >= 1, got {self.bins}")
        if self.restarts < 1:
            raise ConfigError(f"restarts must be >= 1, got {self.restarts}")
        for feature, k in self.clusters.items():
            if k < 1:
                raise ConfigError(f"cluster count for {feature!r} must be >= 1, got {k}")
        if not (0.0 < self.merge_alpha <= 1.0):
            raise ConfigError(f"merge_alpha must be in (0, 1], got {self.merge_alpha}")
        if self.alpha_smooth < 0:
            raise ConfigError(f"alpha_smooth must be >= 0, got {self.alpha_smooth}")
        if not (0.0 <= self.threshold_quantile <= 1.0):
            raise ConfigError(f"threshold_quantile must be in [0, 1], got {self.threshold_quantile}")
        if self.repetitions < 1:
            raise ConfigError(f"repetitions must be >= 1, got {self.repetitions}")
        if self.attack_kind is not None and self.attack_kind not in ATTACK_KINDS:
            raise ConfigError(
                f"unknown attack kind {self.attack_kind!r}, expected one of {', '.join(ATTACK_KINDS)}"
            )

    def attack_spec(self) -> AttackSpec:
        if self.attack_kind is None:
            raise ConfigError("no attack kind configured")
        return AttackSpec(
            kind=self.attack_kind,
            seed=self.attack_seed,
            frequency_threshold=self.frequency_threshold,
            window_length=self.attack_window_length,
        )


def _require_keys(section: str, data: Mapping[str, Any], allowed: tuple[str, ...]) -> None:
    unknown = [k for k in data if k not in allowed]
    if unknown:
        raise ConfigError(f"config section {section!r} has unknown keys: {', '.join(sorted(unknown))}")


def _mapping_from_dict(data: Mapping[str, Any]) -> ColumnMapping:
    _require_keys("columns", data, REQUIRED_FIELDS + OPTIONAL_FIELDS
                  + ("timestamp_format", "protocol_map", "label_map"))
    columns = {name: str(data[name]) for name in REQUIRED_FIELDS + OPTIONAL_FIELDS if name in data}
    return ColumnMapping(
        columns=columns,
        timestamp_format=str(data.get("timestamp_format", "epoch")),
        protocol_map={str(k): str(v) for k, v in (data.get("protocol_map") or {}).items()},
        label_map={str(k): str(v) for k, v in (data.get("label_map") or {}).items()},
    )


def config_from_dict(data: Mapping[str, Any]) -> PipelineConfig:
    if not isinstance(data, Mapping):
        raise ConfigError("config root must be a mapping")
    _require_keys("<root>", data, _SECTIONS)
    kwargs: dict[str, Any] = {}

    paths = data.get("paths") or {}
    _require_keys("paths", paths, ("train", "test", "out_dir"))
    if "train" in paths:
        kwargs["train_path"] = str(paths["train"])
    if "test" in paths:
        kwargs["test_path"] = str(paths["test"])
    if "out_dir" in paths:
        kwargs["out_dir"] = str(paths["out_dir"])

    if "columns" in data and data["columns"]:
        kwargs["column_mapping"] = _mapping_from_dict(data["columns"])

    encoder = data.get("encoder") or {}
    _require_keys("encoder", encoder, ("clusters", "bins", "restarts", "seed"))
    if "clusters" in encoder:
        raw = encoder["clusters"]
        if isinstance(raw, Mapping):
            kwargs["clusters"] = {str(k): int(v) for k, v in raw.items()}
        else:
            kwargs["clusters"] = {f: int(raw) for f in ("duration", "num_bytes", "num_packets")}
    if "bins" in encoder:
        kwargs["bins"] = int(encoder["bins"])
    if "restarts" in encoder:
        kwargs["restarts"] = int(encoder["restarts"])
    if "seed" in encoder:
        kwargs["seed"] = int(encoder["seed"])

    traces = data.get("traces") or {}
    _require_keys("traces", traces, ("window", "stride"))
    if "window" in traces:
        kwargs["window"] = int(traces["window"])
    if "stride" in traces:
        kwargs["stride"] = int(traces["stride"])

    model = data.get("model") or {}
    _require_keys("model", model, ("merge_alpha", "alpha_smooth"))
    if "merge_alpha" in model:
        kwargs["merge_alpha"] = float(model["merge_alpha"])
    if "alpha_smooth" in model:
        kwargs["alpha_smooth"] = float(model["alpha_smooth"])

    scoring = data.get("scoring") or {}
    _require_keys("scoring", scoring, ("threshold", "threshold_quantile"))
    if "threshold" in scoring and scoring["threshold"] is not None:
        kwargs["threshold"] = float(scoring["threshold"])
    if "threshold_quantile" in scoring:
        kwargs["threshold_quantile"] = float(scoring["threshold_quantile"])

    ingest = data.get("ingest") or {}
    _require_keys("ingest", ingest, ("benign_filter", "max_row_errors"))
    if "benign_filter" in ingest:
        kwargs["benign_filter"] = bool(ingest["benign_filter"])
    if "max_row_errors" in ingest:
        kwargs["max_row_errors"] = int(ingest["max_row_errors"])

    attack = data.get("attack") or {}
    _require_keys("attack", attack, ("kind", "seed", "frequency_threshold", "window_length"))
    if "kind" in attack and attack["kind"] is not None:
        kwargs["attack_kind"] = str(attack["kind"])
    if "seed" in attack:
        kwargs["attack_seed"] = int(attack["seed"])
    if "frequency_threshold" in attack:
        kwargs["frequency_threshold"] = int(attack["frequency_threshold"])
    if "window_length" in attack:
        kwargs["attack_window_length"] = int(attack["window_length"])

    ev = data.get("eval") or {}
    _require_keys("eval", ev, ("repetitions",))
    if "repetitions" in ev:
        kwargs["repetitions"] = int(ev["repetitions"])

    return PipelineConfig(**kwargs)


def load_config(path: str) -> PipelineConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if data is None:
        data = {}
    return config_from_dict(data)


def with_overrides(cfg: PipelineConfig, **overrides: Any) -> PipelineConfig:
    """New config with the given fields replaced; None values are skipped."""
    changes = {k: v for k, v in overrides.items() if v is not None}
    return replace(cfg, **changes) if changes else cfg
