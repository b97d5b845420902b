"""Command line entry points.

Five subcommands: train, score, attack, eval, serve. A YAML config
file supplies defaults; flags override it. Every failure is reported
with the stage that produced it, so a bad column mapping reads as an
ingest problem and a bad alpha as a train problem.
"""

from __future__ import annotations

import argparse
import json
import socket
import sys
from pathlib import Path

from .attacks import ATTACK_KINDS, apply_attack
from .config import PipelineConfig, load_config, with_overrides
from .evaluation import run_experiment
from .flows import (
    LABEL_BENIGN,
    LABEL_MALICIOUS,
    ConfigError,
    IngestError,
    ingest_csv,
    write_flow_csv,
)
from .model_io import load_model, save_model
from .pipeline import PipelineError, score_with_model, train_pipeline
from .report import summary_table, write_report
from .scoring import group_anomalies, write_groups_csv, write_verdicts_csv

SCORE_DETAILS_NAME = "score_details.json"
JOURNAL_NAME = "verdict_journal.ndjson"


def _fail(stage: str, message) -> int:
    print(f"error [{stage}]: {message}", file=sys.stderr)
    return 2


def _ingest(path: str, cfg: PipelineConfig, verbose: bool):
    result = ingest_csv(path, cfg.column_mapping, max_errors=cfg.max_row_errors)
    if result.errors:
        print(
            f"warning [ingest]: {path}: skipped {len(result.errors)} malformed rows",
            file=sys.stderr,
        )
        if verbose:
            for err in result.errors[:10]:
                print(f"  line {err.line_index}: {err.message}", file=sys.stderr)
    return result.records


def _model_path(args, cfg: PipelineConfig) -> Path:
    if getattr(args, "model", None):
        return Path(args.model)
    return Path(cfg.out_dir) / "model.json"


def cmd_train(args, cfg: PipelineConfig) -> int:
    cfg = with_overrides(cfg, train_path=args.train, benign_filter=args.benign_filter)
    if not cfg.train_path:
        return _fail("config", "no training file: pass --train or set paths.train")
    try:
        records = _ingest(cfg.train_path, cfg, args.verbose)
    except (ConfigError, IngestError, OSError) as exc:
        return _fail("ingest", exc)
    try:
        model = train_pipeline(records, cfg)
    except (ConfigError, PipelineError) as exc:
        return _fail("train", exc)
    out = _model_path(args, cfg)
    try:
        out.parent.mkdir(parents=True, exist_ok=True)
        save_model(model, out)
    except OSError as exc:
        return _fail("persist", exc)
    stats = model.train_stats
    print(f"states: {stats['n_states']}")
    print(f"alphabet: {stats['alphabet_size']}")
    for feature, silhouette in sorted(stats["silhouettes"].items()):
        print(f"silhouette {feature}: {silhouette:.4f}")
    print(f"model: {out}")
    return 0


def _score_details(stream, groups, threshold: float) -> dict:
    verdicts = []
    for verdict, trace in zip(stream.verdicts, stream.traces):
        verdicts.append(
            {
                "seq_no": verdict.seq_no,
                "score": verdict.anomaly_score,
                "root_cause": verdict.root_cause,
                "flow_line": verdict.root_cause_flow_line,
                "state_sequence": list(verdict.state_sequence),
                "per_state_scores": {
                    str(s): x for s, x in sorted(verdict.per_state_scores.items())
                },
                "line_span": list(trace.line_span),
                "label": trace.label,
            }
        )
    return {
        "format_version": 1,
        "threshold": threshold,
        "verdicts": verdicts,
        "groups": [
            {"root_cause": g.root_cause, "members": list(g.members)} for g in groups
        ],
    }


def cmd_score(args, cfg: PipelineConfig) -> int:
    cfg = with_overrides(
        cfg, test_path=args.test, out_dir=args.out_dir, threshold=args.threshold
    )
    if not cfg.test_path:
        return _fail("config", "no test file: pass --test or set paths.test")
    try:
        model = load_model(_model_path(args, cfg))
    except ConfigError as exc:
        return _fail("model", exc)
    try:
        records = _ingest(cfg.test_path, cfg, args.verbose)
    except (ConfigError, IngestError, OSError) as exc:
        return _fail("ingest", exc)
    try:
        stream = score_with_model(model, records)
    except (ConfigError, PipelineError) as exc:
        return _fail("score", exc)
    threshold = cfg.threshold if cfg.threshold is not None else model.default_threshold
    groups = group_anomalies(stream.verdicts, threshold)
    out_dir = Path(cfg.out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        write_verdicts_csv(stream.verdicts, out_dir / "verdicts.csv", labels=stream.labels)
        write_groups_csv(groups, out_dir / "groups.csv")
        with open(out_dir / SCORE_DETAILS_NAME, "w", encoding="utf-8") as fh:
            json.dump(_score_details(stream, groups, threshold), fh, sort_keys=True)
    except OSError as exc:
        return _fail("persist", exc)
    alerts = sum(1 for v in stream.verdicts if v.anomaly_score >= threshold)
    print(f"traces: {len(stream.verdicts)}")
    print(f"alerts: {alerts} (threshold {threshold:.4f})")
    print(f"groups: {len(groups)}")
    if groups:
        print(f"top group: state {groups[0].root_cause} ({groups[0].size} traces)")
    print(f"outputs: {out_dir}")
    return 0


def cmd_attack(args, cfg: PipelineConfig) -> int:
    cfg = with_overrides(
        cfg,
        test_path=args.test,
        attack_kind=args.kind,
        attack_seed=args.attack_seed,
        frequency_threshold=args.frequency_threshold,
        attack_window_length=args.window_length,
    )
    if not cfg.test_path:
        return _fail("config", "no test file: pass --test or set paths.test")
    if cfg.attack_kind is None:
        return _fail("config", "no attack kind: pass --kind or set attack.kind")
    try:
        spec = cfg.attack_spec()
    except ConfigError as exc:
        return _fail("config", exc)
    try:
        records = _ingest(cfg.test_path, cfg, args.verbose)
    except (ConfigError, IngestError, OSError) as exc:
        return _fail("ingest", exc)
    malicious = [f for f in records if f.label == LABEL_MALICIOUS]
    pool = [f for f in records if f.label == LABEL_BENIGN]
    if malicious and not pool:
        return _fail(
            "attack",
            "the benign rows of the test file form the mimicry pool, but none were found",
        )
    try:
        transformed = iter(apply_attack(spec, malicious, pool))
    except (ConfigError, PipelineError) as exc:
        return _fail("attack", exc)
    merged = [next(transformed) if f.label == LABEL_MALICIOUS else f for f in records]
    out = Path(args.out) if args.out else Path(cfg.out_dir) / f"attack_{spec.kind}.csv"
    provenance = out.with_name(out.name + ".provenance.json")
    try:
        out.parent.mkdir(parents=True, exist_ok=True)
        write_flow_csv(merged, out)
        with open(provenance, "w", encoding="utf-8") as fh:
            json.dump(
                {
                    "kind": spec.kind,
                    "seed": spec.seed,
                    "frequency_threshold": spec.frequency_threshold,
                    "window_length": spec.window_length,
                    "source": cfg.test_path,
                    "transformed_rows": len(malicious),
                },
                fh,
                sort_keys=True,
                indent=2,
            )
    except OSError as exc:
        return _fail("persist", exc)
    print(f"transformed {len(malicious)} of {len(merged)} rows")
    print(f"output: {out}")
    print(f"provenance: {provenance}")
    return 0


def cmd_eval(args, cfg: PipelineConfig) -> int:
    cfg = with_overrides(
        cfg,
        train_path=args.train,
        test_path=args.test,
        out_dir=args.out_dir,
        repetitions=args.repetitions,
    )
    if not cfg.train_path or not cfg.test_path:
        return _fail("config", "eval needs both a train and a test file")
    try:
        train_records = _ingest(cfg.train_path, cfg, args.verbose)
        test_records = _ingest(cfg.test_path, cfg, args.verbose)
    except (ConfigError, IngestError, OSError) as exc:
        return _fail("ingest", exc)
    try:
        result = run_experiment(train_records, test_records, cfg)
    except (ConfigError, PipelineError) as exc:
        return _fail("experiment", exc)
    try:
        write_report(result, cfg.out_dir)
    except OSError as exc:
        return _fail("report", exc)
    print(summary_table(result))
    print(f"report: {cfg.out_dir}")
    return 0


def cmd_serve(args, cfg: PipelineConfig) -> int:
    from .service import create_app, load_service_state

    cfg = with_overrides(cfg, test_path=args.test)
    if not cfg.test_path:
        return _fail("config", "no test file: pass --test or set paths.test")
    scores_dir = Path(args.scores) if args.scores else Path(cfg.out_dir)
    try:
        state = load_service_state(
            model_path=_model_path(args, cfg),
            test_path=cfg.test_path,
            scores_dir=scores_dir,
            mapping=cfg.column_mapping,
            max_row_errors=cfg.max_row_errors,
        )
    except (ConfigError, IngestError, OSError) as exc:
        return _fail("load", exc)
    probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    try:
        probe.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        probe.bind((args.host, args.port))
    except OSError as exc:
        return _fail("serve", f"cannot bind {args.host}:{args.port}: {exc}")
    finally:
        probe.close()
    frontend = Path(args.frontend) if args.frontend else None
    app = create_app(state, frontend_dir=frontend)
    import uvicorn

    uvicorn.run(
        app,
        host=args.host,
        port=args.port,
        log_level="info" if args.verbose else "warning",
    )
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flowdfa",
        description=(
            "NetFlow anomaly detection from a learned state machine: train on "
            "benign flows, score test streams, stress the model with evasion "
            "transformations, compare against baselines, and serve alert triage."
        ),
    )
    parser.add_argument(
        "--config", help="YAML config file; any flag below overrides its value"
    )
    parser.add_argument("--seed", type=int, help="override encoder/experiment seed")
    parser.add_argument("--verbose", action="store_true", help="print per-stage detail")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fit a model from benign flows")
    p.add_argument("--train", help="training CSV (config: paths.train)")
    p.add_argument("--model", help="output bundle path (default <out_dir>/model.json)")
    p.add_argument(
        "--benign-filter",
        action="store_const",
        const=True,
        default=None,
        help="drop non-benign training rows instead of failing",
    )
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("score", help="score a test stream against a saved model")
    p.add_argument("--model", help="model bundle (default <out_dir>/model.json)")
    p.add_argument("--test", help="test CSV (config: paths.test)")
    p.add_argument("--out-dir", help="output directory (config: paths.out_dir)")
    p.add_argument(
        "--threshold",
        type=float,
        help="alert threshold (default: the quantile stored at train time)",
    )
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("attack", help="rewrite malicious test rows to mimic benign ones")
    p.add_argument("--test", help="test CSV (config: paths.test)")
    p.add_argument("--out", help="transformed CSV path (default <out_dir>/attack_<kind>.csv)")
    p.add_argument("--kind", choices=ATTACK_KINDS, help="transformation to apply")
    p.add_argument("--attack-seed", type=int, help="attack sampling seed")
    p.add_argument(
        "--frequency-threshold",
        type=int,
        help="minimum pool count for frequency replacement",
    )
    p.add_argument("--window-length", type=int, help="window size for window replacement")
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser(
        "eval", help="run the model/condition matrix and write the report"
    )
    p.add_argument("--train", help="training CSV (config: paths.train)")
    p.add_argument("--test", help="test CSV (config: paths.test)")
    p.add_argument("--out-dir", help="report directory (config: paths.out_dir)")
    p.add_argument("--repetitions", type=int, help="seeded repetitions per cell")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("serve", help="serve the triage API over scored outputs")
    p.add_argument("--model", help="model bundle (default <out_dir>/model.json)")
    p.add_argument("--test", help="scored test CSV (config: paths.test)")
    p.add_argument("--scores", help="directory with score outputs (default <out_dir>)")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--frontend", help="directory with built UI assets to serve at /")
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else PipelineConfig()
        cfg = with_overrides(cfg, seed=args.seed)
    except ConfigError as exc:
        return _fail("config", exc)
    return args.func(args, cfg)


if __name__ == "__main__":
    sys.exit(main())
