"""Adversarial rewrites of malicious test flows for robustness checks.

Each attack mimics an adversary who has observed benign traffic and
reshapes the scored features of their own flows to blend in. Only the
scored features change: timestamps, endpoints, ports, labels, and line
numbers stay put so evaluation can still tell which flows were bad.
"""

from __future__ import annotations

import bisect
from collections import Counter
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np

from .flows import ConfigError, FlowRecord, group_by_connection

ATTACK_PADDING = "padding"
ATTACK_RANDOM = "random_replacement"
ATTACK_WINDOW = "window_replacement"
ATTACK_FREQUENCY = "frequency_replacement"
ATTACK_KINDS = (ATTACK_PADDING, ATTACK_RANDOM, ATTACK_WINDOW, ATTACK_FREQUENCY)

NUMERIC_ATTACK_FEATURES = ("duration", "num_bytes", "num_packets")


@dataclass(frozen=True)
class AttackSpec:
    kind: str
    seed: int = 0
    frequency_threshold: int = 100
    window_length: int = 10

    def __post_init__(self) -> None:
        if self.kind not in ATTACK_KINDS:
            raise ConfigError(f"unknown attack {self.kind!r}, expected one of {ATTACK_KINDS}")
        if self.frequency_threshold < 1:
            raise ConfigError(f"frequency threshold must be >= 1, got {self.frequency_threshold}")
        if self.window_length < 1:
            raise ConfigError(f"window length must be >= 1, got {self.window_length}")


def feature_tuple(flow: FlowRecord) -> tuple:
    return (flow.duration, flow.protocol, flow.num_bytes, flow.num_packets)


def _with_features(flow: FlowRecord, features: tuple) -> FlowRecord:
    duration, protocol, num_bytes, num_packets = features
    return replace(
        flow,
        duration=duration,
        protocol=protocol,
        num_bytes=num_bytes,
        num_packets=num_packets,
    )


def _nearest(sorted_values: Sequence[float], value: float) -> float:
    """Closest entry; on a distance tie the smaller value wins."""
    position = bisect.bisect_left(sorted_values, value)
    if position == 0:
        return sorted_values[0]
    if position == len(sorted_values):
        return sorted_values[-1]
    left, right = sorted_values[position - 1], sorted_values[position]
    return left if value - left <= right - value else right


def padding_attack(
    malicious: Sequence[FlowRecord], pool: Sequence[FlowRecord], seed: int = 0
) -> list[FlowRecord]:
    """Snap each scored feature to its nearest benign value.

    Deterministic regardless of seed; the seed parameter exists only so
    all attacks share one call shape.
    """
    if not pool:
        raise ConfigError("padding needs a nonempty benign pool")
    sorted_values = {
        feature: sorted({float(getattr(f, feature)) for f in pool})
        for feature in NUMERIC_ATTACK_FEATURES
    }
    protocols = Counter(f.protocol for f in pool)
    # most frequent pool protocol, ties broken alphabetically
    fallback = min(protocols, key=lambda p: (-protocols[p], p))
    out = []
    for flow in malicious:
        protocol = flow.protocol if flow.protocol in protocols else fallback
        out.append(
            _with_features(
                flow,
                (
                    _nearest(sorted_values["duration"], flow.duration),
                    protocol,
                    int(_nearest(sorted_values["num_bytes"], flow.num_bytes)),
                    int(_nearest(sorted_values["num_packets"], flow.num_packets)),
                ),
            )
        )
    return out


def random_replacement_attack(
    malicious: Sequence[FlowRecord], pool: Sequence[FlowRecord], seed: int = 0
) -> list[FlowRecord]:
    """Swap each flow's features for those of a random pool flow,
    drawn with replacement."""
    if not pool:
        raise ConfigError("random replacement needs a nonempty benign pool")
    rng = np.random.default_rng(seed)
    picks = rng.integers(0, len(pool), size=len(malicious))
    return [
        _with_features(flow, feature_tuple(pool[int(pick)]))
        for flow, pick in zip(malicious, picks)
    ]


def _pool_windows(pool: Sequence[FlowRecord], length: int) -> list[tuple[FlowRecord, ...]]:
    """Contiguous per-connection runs of the given length, left to right,
    connections in first-appearance order."""
    windows = []
    for flows in group_by_connection(pool).values():
        for start in range(len(flows) - length + 1):
            windows.append(tuple(flows[start : start + length]))
    return windows


def window_replacement_attack(
    malicious: Sequence[FlowRecord],
    pool: Sequence[FlowRecord],
    window_length: int = 10,
    seed: int = 0,
) -> list[FlowRecord]:
    """Replace consecutive blocks of the malicious stream with distinct
    benign windows; a trailing short block takes a window prefix."""
    if window_length < 1:
        raise ConfigError(f"window length must be >= 1, got {window_length}")
    if not malicious:
        return []
    needed = -(-len(malicious) // window_length)
    disjoint_capacity = sum(
        len(flows) // window_length for flows in group_by_connection(pool).values()
    )
    if disjoint_capacity < needed:
        raise ConfigError(
            f"window replacement needs {needed} disjoint benign windows of "
            f"length {window_length}, pool provides {disjoint_capacity}"
        )
    candidates = _pool_windows(pool, window_length)
    rng = np.random.default_rng(seed)
    chosen = rng.choice(len(candidates), size=needed, replace=False)
    out = []
    for block_index in range(needed):
        window = candidates[int(chosen[block_index])]
        block = malicious[block_index * window_length : (block_index + 1) * window_length]
        for flow, source in zip(block, window):
            out.append(_with_features(flow, feature_tuple(source)))
    return out


def frequency_replacement_attack(
    malicious: Sequence[FlowRecord],
    pool: Sequence[FlowRecord],
    min_count: int = 100,
    seed: int = 0,
) -> list[FlowRecord]:
    """Swap features for tuples that occur at least min_count times in
    the pool, drawn uniformly over the distinct frequent tuples."""
    if min_count < 1:
        raise ConfigError(f"frequency threshold must be >= 1, got {min_count}")
    counts = Counter(feature_tuple(f) for f in pool)
    frequent = sorted(
        (t for t, c in counts.items() if c >= min_count),
        key=lambda t: (t[0], t[2], t[3], t[1]),
    )
    if not frequent:
        raise ConfigError(
            f"no benign feature tuple occurs at least {min_count} times "
            f"(most common: {counts.most_common(1)})"
        )
    rng = np.random.default_rng(seed)
    picks = rng.integers(0, len(frequent), size=len(malicious))
    return [_with_features(flow, frequent[int(pick)]) for flow, pick in zip(malicious, picks)]


def apply_attack(
    spec: AttackSpec, malicious: Sequence[FlowRecord], pool: Sequence[FlowRecord]
) -> list[FlowRecord]:
    if spec.kind == ATTACK_PADDING:
        return padding_attack(malicious, pool, spec.seed)
    if spec.kind == ATTACK_RANDOM:
        return random_replacement_attack(malicious, pool, spec.seed)
    if spec.kind == ATTACK_WINDOW:
        return window_replacement_attack(malicious, pool, spec.window_length, spec.seed)
    return frequency_replacement_attack(malicious, pool, spec.frequency_threshold, spec.seed)
