"""HTTP triage service.

Serves the scored outputs read-only: ranked groups, member traces,
linked flows and state context. The only mutation is the analyst
verdict on a group, which goes through an append-only journal before
it touches memory; restarting the service replays the journal, so
verdicts outlive the process. The model bundle and the scores are
never modified.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Literal

from fastapi import FastAPI, HTTPException, Query, Response
from pydantic import BaseModel

from .cli import JOURNAL_NAME, SCORE_DETAILS_NAME
from .evaluation import roc_auc
from .flows import (
    LABEL_BENIGN,
    LABEL_MALICIOUS,
    ColumnMapping,
    ConfigError,
    FlowRecord,
    ingest_csv,
)
from .model_io import load_model
from .pipeline import TrainedModel
from .scoring import VERDICT_FALSE_POSITIVE, VERDICT_UNREVIEWED, VERDICTS


@dataclass(frozen=True)
class StoredVerdict:
    """One scored trace as persisted by the score command."""

    seq_no: int
    score: float
    root_cause: int
    flow_line: int
    state_sequence: tuple[int, ...]
    per_state_scores: dict[int, float]
    line_span: tuple[int, ...]
    label: str


@dataclass
class GroupState:
    root_cause: int
    members: tuple[int, ...]
    verdict: str = VERDICT_UNREVIEWED


@dataclass
class ServiceState:
    model: TrainedModel
    verdicts: dict[int, StoredVerdict]
    groups: list[GroupState]
    flows_by_line: dict[int, FlowRecord]
    threshold: float
    journal_path: Path
    lock: threading.Lock = field(default_factory=threading.Lock)

    def group(self, root_cause: int) -> GroupState | None:
        for g in self.groups:
            if g.root_cause == root_cause:
                return g
        return None

    def ranked_members(self, group: GroupState) -> list[StoredVerdict]:
        members = [self.verdicts[seq] for seq in group.members]
        members.sort(key=lambda v: (-v.score, v.seq_no))
        return members


def _parse_details(data: dict, source: str) -> tuple[dict, list, float]:
    if not isinstance(data, dict) or data.get("format_version") != 1:
        raise ConfigError(f"{source}: unsupported score details format")
    try:
        verdicts = {}
        for entry in data["verdicts"]:
            v = StoredVerdict(
                seq_no=int(entry["seq_no"]),
                score=float(entry["score"]),
                root_cause=int(entry["root_cause"]),
                flow_line=int(entry["flow_line"]),
                state_sequence=tuple(int(s) for s in entry["state_sequence"]),
                per_state_scores={
                    int(s): float(x) for s, x in entry["per_state_scores"].items()
                },
                line_span=tuple(int(x) for x in entry["line_span"]),
                label=str(entry["label"]),
            )
            verdicts[v.seq_no] = v
        groups = [
            GroupState(
                root_cause=int(g["root_cause"]),
                members=tuple(int(m) for m in g["members"]),
            )
            for g in data["groups"]
        ]
        threshold = float(data["threshold"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{source}: malformed score details: {exc!r}") from exc
    return verdicts, groups, threshold


def _replay_journal(path: Path, groups: list[GroupState]) -> None:
    if not path.exists():
        return
    by_id = {g.root_cause: g for g in groups}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
                root_cause = int(record["group"])
                verdict = record["verdict"]
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ConfigError(f"{path}:{lineno}: corrupt journal entry: {exc!r}") from exc
            if verdict not in VERDICTS:
                raise ConfigError(f"{path}:{lineno}: unknown verdict {verdict!r}")
            group = by_id.get(root_cause)
            if group is not None:
                group.verdict = verdict


def _append_journal(path: Path, root_cause: int, verdict: str, actor: str) -> None:
    record = {
        "timestamp": datetime.now(timezone.utc).isoformat(),
        "group": root_cause,
        "verdict": verdict,
        "actor": actor,
    }
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(json.dumps(record, sort_keys=True) + "\n")


def load_service_state(
    model_path,
    test_path: str,
    scores_dir,
    mapping: ColumnMapping,
    max_row_errors: int = 1000,
    journal_path=None,
) -> ServiceState:
    scores_dir = Path(scores_dir)
    model = load_model(model_path)
    details_path = scores_dir / SCORE_DETAILS_NAME
    try:
        with open(details_path, encoding="utf-8") as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(
            f"{details_path} not found: run the score command first"
        ) from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{details_path}: not valid JSON: {exc}") from exc
    verdicts, groups, threshold = _parse_details(data, str(details_path))

    flows = ingest_csv(test_path, mapping, max_errors=max_row_errors).records
    flows_by_line = {f.line_index: f for f in flows}
    for v in verdicts.values():
        if v.flow_line not in flows_by_line:
            raise ConfigError(
                f"{test_path} does not match the scored outputs: "
                f"trace {v.seq_no} points at missing line {v.flow_line}"
            )

    journal = Path(journal_path) if journal_path else scores_dir / JOURNAL_NAME
    _replay_journal(journal, groups)
    return ServiceState(
        model=model,
        verdicts=verdicts,
        groups=groups,
        flows_by_line=flows_by_line,
        threshold=threshold,
        journal_path=journal,
    )


class VerdictRequest(BaseModel):
    verdict: Literal["false_positive", "malicious"]
    actor: str = "analyst"


def _verdict_row(v: StoredVerdict) -> dict:
    return {
        "seq_no": v.seq_no,
        "score": v.score,
        "root_cause": v.root_cause,
        "flow_line": v.flow_line,
        "label": v.label,
    }


def _flow_row(f: FlowRecord) -> dict:
    return {
        "line_index": f.line_index,
        "timestamp": f.timestamp,
        "duration": f.duration,
        "protocol": f.protocol,
        "num_bytes": f.num_bytes,
        "num_packets": f.num_packets,
        "src_ip": f.src_ip,
        "dst_ip": f.dst_ip,
        "src_port": f.src_port,
        "dst_port": f.dst_port,
        "label": f.label,
    }


def create_app(state: ServiceState, frontend_dir=None) -> FastAPI:
    app = FastAPI(title="flow anomaly triage", version="1")

    def _group_or_404(root_cause: int) -> GroupState:
        group = state.group(root_cause)
        if group is None:
            raise HTTPException(status_code=404, detail=f"no group {root_cause}")
        return group

    @app.get("/groups")
    def get_groups(min_score: float | None = None):
        rows = []
        for g in state.groups:
            top = max(state.verdicts[seq].score for seq in g.members)
            if min_score is not None and top < min_score:
                continue
            rows.append(
                {
                    "root_cause": g.root_cause,
                    "size": len(g.members),
                    "verdict": g.verdict,
                    "top_score": top,
                }
            )
        return rows

    @app.get("/groups/{root_cause}/traces")
    def get_group_traces(root_cause: int, limit: int = Query(default=10, ge=1)):
        group = _group_or_404(root_cause)
        return [_verdict_row(v) for v in state.ranked_members(group)[:limit]]

    @app.get("/groups/{root_cause}/flows")
    def get_group_flows(root_cause: int, limit: int = Query(default=10, ge=1)):
        group = _group_or_404(root_cause)
        return [
            _flow_row(state.flows_by_line[v.flow_line])
            for v in state.ranked_members(group)[:limit]
        ]

    @app.get("/traces/{seq_no}")
    def get_trace(seq_no: int):
        v = state.verdicts.get(seq_no)
        if v is None:
            raise HTTPException(status_code=404, detail=f"no trace {seq_no}")
        row = _verdict_row(v)
        row["state_sequence"] = list(v.state_sequence)
        row["per_state_scores"] = {str(s): x for s, x in sorted(v.per_state_scores.items())}
        row["line_span"] = list(v.line_span)
        return row

    @app.get("/model/states/{state_id}")
    def get_state(state_id: int):
        machine = state.model.machine
        if not 0 <= state_id < machine.n_states:
            raise HTTPException(status_code=404, detail=f"no state {state_id}")
        outgoing = [
            {
                "symbol": symbol,
                "target": machine.transitions[state_id][symbol],
                "count": machine.transition_train_count[state_id][symbol],
            }
            for symbol in sorted(machine.transitions[state_id])
        ]
        incoming = []
        for source, row in enumerate(machine.transitions):
            for symbol in sorted(row):
                if row[symbol] == state_id:
                    incoming.append(
                        {
                            "source": source,
                            "symbol": symbol,
                            "count": machine.transition_train_count[source][symbol],
                        }
                    )
        return {
            "state": state_id,
            "train_count": machine.state_train_count[state_id],
            "final_count": machine.final_train_count[state_id],
            "incoming": incoming,
            "outgoing": outgoing,
        }

    @app.post("/groups/{root_cause}/verdict", status_code=204)
    def post_verdict(root_cause: int, body: VerdictRequest):
        with state.lock:
            group = _group_or_404(root_cause)
            _append_journal(state.journal_path, root_cause, body.verdict, body.actor)
            group.verdict = body.verdict
        return Response(status_code=204)

    @app.get("/alerts")
    def get_alerts(min_score: float | None = None):
        rows = []
        for g in state.groups:
            if g.verdict == VERDICT_FALSE_POSITIVE:
                continue
            for v in state.ranked_members(g):
                if min_score is not None and v.score < min_score:
                    continue
                rows.append(
                    {"seq_no": v.seq_no, "score": v.score, "root_cause": v.root_cause}
                )
        rows.sort(key=lambda r: (-r["score"], r["seq_no"]))
        return rows

    @app.get("/roc")
    def get_roc():
        labeled = [
            (v.score, v.label)
            for v in state.verdicts.values()
            if v.label in (LABEL_BENIGN, LABEL_MALICIOUS)
        ]
        labels = [lab for _, lab in labeled]
        if LABEL_BENIGN not in labels or LABEL_MALICIOUS not in labels:
            return {"available": False, "auc": None, "points": []}
        curve = roc_auc([s for s, _ in labeled], labels)
        return {
            "available": True,
            "auc": curve.auc,
            "points": [list(p) for p in curve.points],
        }

    if frontend_dir is not None:
        frontend_dir = Path(frontend_dir)
        if frontend_dir.is_dir():
            from fastapi.staticfiles import StaticFiles

            app.mount("/", StaticFiles(directory=frontend_dir, html=True), name="ui")
    return app
