"""Turn discretized flows into event symbols and sliding-window traces.

Each flow becomes one symbol: its discretized feature values joined by
underscores in a fixed feature order. A sliding window over each
connection's symbol sequence then yields fixed-length traces that keep
enough provenance (connection key, CSV line numbers) to walk an alert
back to the raw input.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, NamedTuple, Sequence

from .encoding import FeatureEncoding, encode_feature_value
from .flows import (
    LABEL_BENIGN,
    LABEL_MALICIOUS,
    LABEL_UNKNOWN,
    ConfigError,
    ConnectionKey,
    FlowRecord,
)

# order of feature components inside a symbol; recorded with the model
FEATURE_ORDER = ("duration", "protocol", "num_bytes", "num_packets")

DEFAULT_WINDOW = 10
DEFAULT_STRIDE = 1


class Event(NamedTuple):
    symbol: str
    line_index: int
    label: str = LABEL_UNKNOWN


@dataclass(frozen=True, slots=True)
class Trace:
    symbols: tuple[str, ...]
    connection: ConnectionKey
    line_span: tuple[int, ...]
    seq_no: int
    label: str = LABEL_UNKNOWN

    def __post_init__(self) -> None:
        if len(self.symbols) != len(self.line_span):
            raise ValueError(
                f"trace {self.seq_no}: {len(self.symbols)} symbols but "
                f"{len(self.line_span)} line numbers"
            )

    def __len__(self) -> int:
        return len(self.symbols)


def event_symbol(
    flow: FlowRecord,
    encodings: Mapping[str, FeatureEncoding],
    features: Sequence[str] = FEATURE_ORDER,
) -> str:
    """Build the symbol for one flow: feature labels joined by "_".

    The protocol goes in verbatim; numeric features are looked up in
    their encodings. With a single selected feature the symbol is the
    bare label, no separator.
    """
    parts = []
    for feature in features:
        if feature == "protocol":
            if "_" in flow.protocol:
                raise ConfigError(
                    f"protocol {flow.protocol!r} contains '_', which is the "
                    "symbol separator; remap it during ingest"
                )
            parts.append(flow.protocol)
        else:
            enc = encodings.get(feature)
            if enc is None:
                raise ConfigError(f"no encoding for feature {feature!r}")
            parts.append(str(encode_feature_value(enc, float(getattr(flow, feature)))))
    return "_".join(parts)


def _symbol_cache_key(flow: FlowRecord) -> tuple:
    # every field a symbol can depend on; equal keys always mean equal symbols
    return (flow.duration, flow.protocol, flow.num_bytes, flow.num_packets)


def flows_to_events(
    flows: Iterable[FlowRecord],
    encodings: Mapping[str, FeatureEncoding],
    features: Sequence[str] = FEATURE_ORDER,
) -> list[tuple[str, int]]:
    """One (symbol, line_index) pair per flow, in input order."""
    cache: dict[tuple, str] = {}
    out = []
    for f in flows:
        key = _symbol_cache_key(f)
        sym = cache.get(key)
        if sym is None:
            sym = cache[key] = event_symbol(f, encodings, features)
        out.append((sym, f.line_index))
    return out


def connection_events(
    groups: Mapping[ConnectionKey, Sequence[FlowRecord]],
    encodings: Mapping[str, FeatureEncoding],
    features: Sequence[str] = FEATURE_ORDER,
) -> dict[ConnectionKey, list[Event]]:
    """Per-connection event lists, keeping the flow label for evaluation."""
    cache: dict[tuple, str] = {}
    out: dict[ConnectionKey, list[Event]] = {}
    for key, flows in groups.items():
        events = []
        for f in flows:
            ck = _symbol_cache_key(f)
            sym = cache.get(ck)
            if sym is None:
                sym = cache[ck] = event_symbol(f, encodings, features)
            events.append(Event(sym, f.line_index, f.label))
        out[key] = events
    return out


def _window_label(labels: Sequence[str]) -> str:
    # ground truth for evaluation only: one bad flow taints the window
    if any(lab == LABEL_MALICIOUS for lab in labels):
        return LABEL_MALICIOUS
    if all(lab == LABEL_BENIGN for lab in labels):
        return LABEL_BENIGN
    return LABEL_UNKNOWN


def sliding_windows(
    events: Mapping[ConnectionKey, Sequence[tuple]],
    window: int = DEFAULT_WINDOW,
    stride: int = DEFAULT_STRIDE,
) -> list[Trace]:
    """Fixed-length windows per connection; short connections yield none.

    A connection with M events produces max(0, floor((M - window) / stride) + 1)
    traces. seq_no follows iteration order: connections as first seen,
    windows left to right. Event entries are (symbol, line_index) pairs or
    Event triples with a label.
    """
    if window < 1:
        raise ConfigError(f"window length must be >= 1, got {window}")
    if stride < 1:
        raise ConfigError(f"stride must be >= 1, got {stride}")
    traces: list[Trace] = []
    seq_no = 0
    for key, evs in events.items():
        if len(evs) < window:
            continue
        symbols = tuple(e[0] for e in evs)
        lines = tuple(e[1] for e in evs)
        labels = [e[2] if len(e) > 2 else LABEL_UNKNOWN for e in evs]
        # connections are usually single-label, in which case every window
        # shares that label and the per-window scan can be skipped
        uniform = _window_label(labels) if len(set(labels)) == 1 else None
        for start in range(0, len(evs) - window + 1, stride):
            end = start + window
            traces.append(
                Trace(
                    symbols=symbols[start:end],
                    connection=key,
                    line_span=lines[start:end],
                    seq_no=seq_no,
                    label=uniform if uniform is not None else _window_label(labels[start:end]),
                )
            )
            seq_no += 1
    return traces


def write_trace_file(traces: Iterable[Trace], path) -> None:
    """Debug dump, one trace per line, symbols space-separated."""
    with open(path, "w", encoding="utf-8") as fh:
        for trace in traces:
            fh.write(" ".join(trace.symbols) + "\n")
