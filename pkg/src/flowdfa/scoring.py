"""Rolling state-frequency anomaly scores, root causes, grouping, linking.

The ledger tracks how often each machine state has been visited by test
traces so far. A state's positional score compares that running count
against the count you would expect from the training distribution,
scaled by how much test data has been seen (the UC accumulator). States
visited far more often than expected score high; the per-trace score
sums the final scores of the states the trace visited, and the single
worst state becomes the trace's root cause.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .automaton import Automaton, ReplayResult, replay
from .flows import FlowRecord
from .tracing import Trace

VERDICT_UNREVIEWED = "unreviewed"
VERDICT_FALSE_POSITIVE = "false_positive"
VERDICT_MALICIOUS = "malicious"
VERDICTS = (VERDICT_UNREVIEWED, VERDICT_FALSE_POSITIVE, VERDICT_MALICIOUS)


class PipelineError(RuntimeError):
    """Internal invariant broke; indicates a bug, not bad input."""


@dataclass
class ScoreLedger:
    """Sequential test-time bookkeeping. One writer, trace order matters."""

    train_count: list[int]
    train_total: int
    n_states: int
    alpha_smooth: float = 1.0
    observed: dict[int, int] = field(default_factory=dict)
    uc: int = 0
    _ratios: list[float] | None = field(default=None, repr=False, compare=False)

    @classmethod
    def from_machine(cls, machine: Automaton, alpha_smooth: float = 1.0) -> "ScoreLedger":
        counts = list(machine.state_train_count)
        return cls(
            train_count=counts,
            train_total=sum(counts),
            n_states=machine.n_states,
            alpha_smooth=alpha_smooth,
        )

    def ratio_table(self) -> list[float]:
        """Smoothed training ratio per state, cached. The train-side fields
        are fixed once scoring starts, so the cache never goes stale."""
        if self._ratios is None:
            denom = self.train_total + self.alpha_smooth * self.n_states
            alpha = self.alpha_smooth
            self._ratios = [(c + alpha) / denom for c in self.train_count]
        return self._ratios


@dataclass(frozen=True)
class TraceVerdict:
    seq_no: int
    anomaly_score: float
    root_cause: int
    per_state_scores: dict[int, float]
    root_cause_flow_line: int
    state_sequence: tuple[int, ...]


@dataclass(frozen=True)
class AnomalyGroup:
    root_cause: int
    members: tuple[int, ...]
    verdict: str = VERDICT_UNREVIEWED

    @property
    def size(self) -> int:
        return len(self.members)


def state_score(
    observed_count: int,
    train_count: int,
    train_total: int,
    n_states: int,
    alpha_smooth: float,
    uc_after: int,
) -> float:
    """ln(observed / expected) for one state at one position.

    Expected count = smoothed training ratio of the state times the UC
    accumulator (total unique-state observations so far), floored at 1
    so the very first trace is scored against a nonzero expectation.
    """
    ratio = (train_count + alpha_smooth) / (train_total + alpha_smooth * n_states)
    expected = ratio * max(uc_after, 1)
    return math.log((observed_count + alpha_smooth) / expected)


def root_cause_position(
    state_sequence: Sequence[int], positional_scores: Sequence[float]
) -> tuple[int, int]:
    """State with the largest positional score; ties go to the earliest
    position. Returns (state, position)."""
    if len(state_sequence) != len(positional_scores):
        raise PipelineError(
            f"{len(state_sequence)} states but {len(positional_scores)} scores"
        )
    best = 0
    for i in range(1, len(positional_scores)):
        if positional_scores[i] > positional_scores[best]:
            best = i
    return state_sequence[best], best


def score_trace(ledger: ScoreLedger, result: ReplayResult, trace: Trace) -> TraceVerdict:
    """Score one trace and advance the ledger.

    UC is bumped by the trace's unique state count up front, so the
    expectation stays constant across the trace's own positions.
    """
    sequence = result.state_sequence
    if len(sequence) != len(trace.symbols):
        raise PipelineError(
            f"trace {trace.seq_no}: replay covers {len(sequence)} of "
            f"{len(trace.symbols)} symbols"
        )
    ledger.uc += len(result.visited_set)
    uc_after = ledger.uc
    # Inlined state_score with the ratio table hoisted; same arithmetic,
    # called once per position on the hot path.
    observed = ledger.observed
    ratios = ledger.ratio_table()
    alpha = ledger.alpha_smooth
    uc_floor = uc_after if uc_after > 1 else 1
    log = math.log
    positional: list[float] = []
    for state in sequence:
        count = observed.get(state, 0) + 1
        observed[state] = count
        positional.append(log((count + alpha) / (ratios[state] * uc_floor)))
    per_state: dict[int, float] = {}
    for state, score in zip(sequence, positional):
        per_state[state] = score
    cause, position = root_cause_position(sequence, positional)
    return TraceVerdict(
        seq_no=trace.seq_no,
        anomaly_score=sum(per_state.values()),
        root_cause=cause,
        per_state_scores=per_state,
        root_cause_flow_line=trace.line_span[position],
        state_sequence=tuple(sequence),
    )


def score_stream(
    machine: Automaton, ledger: ScoreLedger, traces: Iterable[Trace]
) -> list[TraceVerdict]:
    """Replay and score traces in order; the ledger carries across."""
    return [score_trace(ledger, replay(machine, t), t) for t in traces]


def group_anomalies(verdicts: Iterable[TraceVerdict], threshold: float) -> list[AnomalyGroup]:
    """Alerts (score >= threshold) bucketed by root cause, biggest first,
    equal sizes ordered by state id."""
    buckets: dict[int, list[int]] = {}
    for v in verdicts:
        if v.anomaly_score >= threshold:
            buckets.setdefault(v.root_cause, []).append(v.seq_no)
    groups = [
        AnomalyGroup(root_cause=cause, members=tuple(members))
        for cause, members in buckets.items()
    ]
    groups.sort(key=lambda g: (-g.size, g.root_cause))
    return groups


def link_flows(
    group: AnomalyGroup,
    verdicts: Mapping[int, TraceVerdict] | Iterable[TraceVerdict],
    flows: Iterable[FlowRecord],
    k: int = 10,
) -> list[FlowRecord]:
    """The flow behind each member's root cause, most anomalous first,
    truncated to k."""
    if not isinstance(verdicts, Mapping):
        verdicts = {v.seq_no: v for v in verdicts}
    by_line = {f.line_index: f for f in flows}
    ranked = []
    for seq_no in group.members:
        verdict = verdicts.get(seq_no)
        if verdict is None:
            raise PipelineError(f"group references unknown trace {seq_no}")
        ranked.append(verdict)
    ranked.sort(key=lambda v: (-v.anomaly_score, v.seq_no))
    out = []
    for verdict in ranked[:k]:
        flow = by_line.get(verdict.root_cause_flow_line)
        if flow is None:
            raise PipelineError(
                f"trace {verdict.seq_no} points at CSV line "
                f"{verdict.root_cause_flow_line} but no such flow was loaded"
            )
        out.append(flow)
    return out


def write_verdicts_csv(
    verdicts: Iterable[TraceVerdict], path, labels: Mapping[int, str] | None = None
) -> None:
    """seq_no, score, root_cause, flow_line (plus label when known)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        header = ["seq_no", "score", "root_cause", "flow_line"]
        if labels is not None:
            header.append("label")
        writer.writerow(header)
        for v in verdicts:
            row = [v.seq_no, repr(v.anomaly_score), v.root_cause, v.root_cause_flow_line]
            if labels is not None:
                row.append(labels.get(v.seq_no, ""))
            writer.writerow(row)


def write_groups_csv(groups: Iterable[AnomalyGroup], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["root_cause", "size", "verdict"])
        for g in groups:
            writer.writerow([g.root_cause, g.size, g.verdict])
