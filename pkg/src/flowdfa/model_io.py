"""Model persistence.

One JSON bundle holds the encodings, the merged machine and the
scoring settings. Keys are sorted and separators fixed, so saving
the same model twice produces identical bytes; state ids are already
canonical after merging, which keeps the transition list stable too.
"""

from __future__ import annotations

import json
from pathlib import Path

from .automaton import Automaton
from .encoding import FeatureEncoding
from .flows import ConfigError
from .pipeline import TrainedModel

FORMAT_VERSION = 1


def _encoding_payload(enc: FeatureEncoding) -> dict:
    return {
        "feature": enc.feature,
        "prev_edges": list(enc.prev_edges),
        "next_edges": list(enc.next_edges),
        "labels": sorted([v, lab] for v, lab in enc.labels.items()),
        "k": enc.k,
        "silhouette": enc.silhouette,
        "seed": enc.seed,
    }


def _encoding_from_payload(data: dict) -> FeatureEncoding:
    return FeatureEncoding(
        feature=data["feature"],
        prev_edges=tuple(data["prev_edges"]),
        next_edges=tuple(data["next_edges"]),
        labels={float(v): int(lab) for v, lab in data["labels"]},
        k=int(data["k"]),
        silhouette=data["silhouette"],
        seed=int(data["seed"]),
    )


def _machine_payload(machine: Automaton) -> dict:
    quads = []
    for state, row in enumerate(machine.transitions):
        for symbol in sorted(row):
            quads.append(
                [state, symbol, row[symbol], machine.transition_train_count[state][symbol]]
            )
    return {
        "alphabet": sorted(machine.alphabet),
        "state_train_count": list(machine.state_train_count),
        "final_train_count": list(machine.final_train_count),
        "transitions": quads,
    }


def _machine_from_payload(data: dict) -> Automaton:
    n = len(data["state_train_count"])
    machine = Automaton(
        transitions=[{} for _ in range(n)],
        state_train_count=[int(c) for c in data["state_train_count"]],
        transition_train_count=[{} for _ in range(n)],
        final_train_count=[int(c) for c in data["final_train_count"]],
        alphabet=frozenset(data["alphabet"]),
    )
    for state, symbol, target, count in data["transitions"]:
        machine.transitions[state][symbol] = int(target)
        machine.transition_train_count[state][symbol] = int(count)
    return machine


def model_to_bytes(model: TrainedModel) -> bytes:
    payload = {
        "format_version": FORMAT_VERSION,
        "feature_order": list(model.feature_order),
        "window": model.window,
        "stride": model.stride,
        "merge_alpha": model.merge_alpha,
        "alpha_smooth": model.alpha_smooth,
        "default_threshold": model.default_threshold,
        "encodings": {f: _encoding_payload(e) for f, e in model.encodings.items()},
        "machine": _machine_payload(model.machine),
        "train_stats": model.train_stats,
    }
    return json.dumps(payload, sort_keys=True, separators=(",", ":")).encode("utf-8")


def model_from_bytes(data: bytes) -> TrainedModel:
    try:
        payload = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"model bundle is not valid JSON: {exc}") from exc
    if not isinstance(payload, dict):
        raise ConfigError("model bundle must be a JSON object")
    version = payload.get("format_version")
    if version != FORMAT_VERSION:
        raise ConfigError(
            f"model bundle format version {version!r} is not supported, expected {FORMAT_VERSION}"
        )
    try:
        return TrainedModel(
            encodings={
                f: _encoding_from_payload(e) for f, e in payload["encodings"].items()
            },
            machine=_machine_from_payload(payload["machine"]),
            window=int(payload["window"]),
            stride=int(payload["stride"]),
            merge_alpha=payload["merge_alpha"],
            alpha_smooth=payload["alpha_smooth"],
            default_threshold=payload["default_threshold"],
            feature_order=tuple(payload["feature_order"]),
            train_stats=payload["train_stats"],
        )
    except (KeyError, IndexError, TypeError, ValueError) as exc:
        raise ConfigError(f"model bundle is malformed: {exc!r}") from exc


def save_model(model: TrainedModel, path: str | Path) -> None:
    Path(path).write_bytes(model_to_bytes(model))


def load_model(path: str | Path) -> TrainedModel:
    try:
        data = Path(path).read_bytes()
    except FileNotFoundError:
        raise ConfigError(f"model file not found: {path}") from None
    return model_from_bytes(data)
