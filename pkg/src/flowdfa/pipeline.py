"""End-to-end wiring: flows in, fitted model out, scored stream out.

train_pipeline owns the benign-only contract and the default alert
threshold (a quantile of the model's own scores on its training
stream). score_with_model replays any flow list against a fitted
model. Both leave file handling to the CLI so experiments can stay
in memory.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .automaton import Automaton, MarkovChain, build_pta, merge_states
from .config import DEFAULT_CLUSTERS, PipelineConfig
from .encoding import NUMERIC_FEATURES, FeatureEncoding, fit_all_encodings
from .flows import (
    LABEL_BENIGN,
    LABEL_MALICIOUS,
    ConnectionKey,
    FlowRecord,
    group_by_connection,
    sort_flows,
)
from .scoring import PipelineError, ScoreLedger, TraceVerdict, score_stream
from .tracing import FEATURE_ORDER, Trace, connection_events, sliding_windows


@dataclass
class TrainedModel:
    """Everything needed to score new traffic, plus training stats."""

    encodings: dict[str, FeatureEncoding]
    machine: Automaton
    window: int
    stride: int
    merge_alpha: float
    alpha_smooth: float
    default_threshold: float
    feature_order: tuple[str, ...] = FEATURE_ORDER
    train_stats: dict = field(default_factory=dict)
    # in-memory only; persistence rebuilds nothing from these
    train_traces: list[Trace] = field(default_factory=list, repr=False)


@dataclass
class ScoredStream:
    """Scored test traffic with enough context to group, link and evaluate."""

    traces: list[Trace]
    verdicts: list[TraceVerdict]
    flows: list[FlowRecord]

    @property
    def labels(self) -> dict[int, str]:
        return {t.seq_no: t.label for t in self.traces}

    @property
    def scores(self) -> list[float]:
        return [v.anomaly_score for v in self.verdicts]


def traces_from_flows(
    flows: Sequence[FlowRecord],
    encodings: Mapping[str, FeatureEncoding],
    window: int,
    stride: int,
) -> list[Trace]:
    """Sort, group by connection, encode, window."""
    groups = group_by_connection(sort_flows(flows))
    events = connection_events(groups, encodings)
    return sliding_windows(events, window=window, stride=stride)


def check_benign_training(flows: Sequence[FlowRecord], benign_filter: bool) -> list[FlowRecord]:
    """Enforce the benign-only training contract.

    Without the filter, any malicious row is an error. With it, only
    rows labeled benign survive. Unlabeled rows pass unfiltered input
    through on the caller's word.
    """
    n_malicious = sum(1 for f in flows if f.label == LABEL_MALICIOUS)
    if benign_filter:
        return [f for f in flows if f.label == LABEL_BENIGN]
    if n_malicious:
        raise PipelineError(
            f"training data contains {n_malicious} malicious rows; "
            "enable the benign filter or clean the file"
        )
    return list(flows)


def _quantile_threshold(scores: Sequence[float], q: float) -> float:
    if not scores:
        return 0.0
    ordered = sorted(scores)
    idx = max(0, min(len(ordered) - 1, math.ceil(q * len(ordered)) - 1))
    return ordered[idx]


def train_pipeline(flows: Sequence[FlowRecord], cfg: PipelineConfig) -> TrainedModel:
    """Fit encodings and the merged machine from benign flows.

    The default alert threshold is the configured quantile of the
    model's scores on its own training stream, scored with a fresh
    ledger in training order.
    """
    usable = check_benign_training(flows, cfg.benign_filter)
    groups = group_by_connection(sort_flows(usable))
    if not groups:
        raise PipelineError(f"no traces of length {cfg.window}: training input is empty")

    clusters = {f: cfg.clusters.get(f, DEFAULT_CLUSTERS) for f in NUMERIC_FEATURES}
    encodings = fit_all_encodings(
        groups, clusters, bins=cfg.bins, restarts=cfg.restarts, seed=cfg.seed
    )
    events = connection_events(groups, encodings)
    traces = sliding_windows(events, window=cfg.window, stride=cfg.stride)
    if not traces:
        raise PipelineError(
            f"no traces of length {cfg.window}: every connection is shorter than the window"
        )

    pta = build_pta(traces)
    machine = merge_states(pta, alpha=cfg.merge_alpha)

    if cfg.threshold is not None:
        threshold = cfg.threshold
    else:
        ledger = ScoreLedger.from_machine(machine, alpha_smooth=cfg.alpha_smooth)
        self_verdicts = score_stream(machine, ledger, traces)
        threshold = _quantile_threshold(
            [v.anomaly_score for v in self_verdicts], cfg.threshold_quantile
        )

    stats = {
        "n_flows": len(usable),
        "n_connections": len(groups),
        "n_traces": len(traces),
        "n_states": machine.n_states,
        "n_pta_states": pta.n_states,
        "alphabet_size": len(machine.alphabet),
        "silhouettes": {f: encodings[f].silhouette for f in sorted(encodings)},
    }
    return TrainedModel(
        encodings=encodings,
        machine=machine,
        window=cfg.window,
        stride=cfg.stride,
        merge_alpha=cfg.merge_alpha,
        alpha_smooth=cfg.alpha_smooth,
        default_threshold=threshold,
        train_stats=stats,
        train_traces=traces,
    )


def score_with_model(model: TrainedModel, flows: Sequence[FlowRecord]) -> ScoredStream:
    """Replay and score a test stream in arrival order."""
    ordered = sort_flows(flows)
    traces = traces_from_flows(ordered, model.encodings, model.window, model.stride)
    ledger = ScoreLedger.from_machine(model.machine, alpha_smooth=model.alpha_smooth)
    verdicts = score_stream(model.machine, ledger, traces)
    return ScoredStream(traces=traces, verdicts=verdicts, flows=ordered)


def markov_from_traces(traces: Iterable[Trace]) -> MarkovChain:
    return MarkovChain.fit(traces)
