"""ROC/AUC computation, the boxplot baseline, and the experiment runner.

AUC uses a descending threshold sweep with tied scores collapsed into a
single step, which makes the trapezoid area equal the probability that
a random malicious item outscores a random benign one (ties count
half). The boxplot baseline scores individual flows by how many
features fall outside the usual quartile fences; flow scores lift to
traces by taking the worst flow in the window.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .attacks import ATTACK_KINDS, AttackSpec, apply_attack
from .flows import LABEL_BENIGN, LABEL_MALICIOUS, ConfigError, FlowRecord, sort_flows

CONDITION_CLEAN = "clean"
CONDITIONS = (CONDITION_CLEAN, *ATTACK_KINDS)

MODEL_STATE_FREQUENCY = "state_frequency"
MODEL_MARKOV = "markov"
MODEL_BOXPLOT = "boxplot"
MODELS = (MODEL_STATE_FREQUENCY, MODEL_MARKOV, MODEL_BOXPLOT)


@dataclass(frozen=True)
class RocCurve:
    points: tuple[tuple[float, float], ...]
    auc: float


def roc_auc(scores: Sequence[float], labels: Sequence[str]) -> RocCurve:
    """Threshold sweep over distinct scores, highest first.

    Needs both classes present; collapsing ties into one step makes the
    trapezoid area match the Mann-Whitney statistic.
    """
    if len(scores) != len(labels):
        raise ConfigError(f"{len(scores)} scores but {len(labels)} labels")
    n_pos = sum(1 for lab in labels if lab == LABEL_MALICIOUS)
    n_neg = sum(1 for lab in labels if lab == LABEL_BENIGN)
    if n_pos + n_neg != len(labels):
        bad = next(lab for lab in labels if lab not in (LABEL_MALICIOUS, LABEL_BENIGN))
        raise ConfigError(
            f"labels must be {LABEL_BENIGN!r} or {LABEL_MALICIOUS!r}, got {bad!r}"
        )
    if n_pos == 0 or n_neg == 0:
        raise ConfigError(
            f"ROC needs both classes, got {n_pos} malicious and {n_neg} benign"
        )
    order = sorted(range(len(scores)), key=lambda i: -scores[i])
    points = [(0.0, 0.0)]
    auc = 0.0
    tp = fp = 0
    i = 0
    while i < len(order):
        j = i
        while j < len(order) and scores[order[j]] == scores[order[i]]:
            j += 1
        step_tp = sum(1 for k in order[i:j] if labels[k] == LABEL_MALICIOUS)
        step_fp = (j - i) - step_tp
        prev = (fp / n_neg, tp / n_pos)
        tp += step_tp
        fp += step_fp
        current = (fp / n_neg, tp / n_pos)
        auc += (current[0] - prev[0]) * (prev[1] + current[1]) / 2.0
        points.append(current)
        i = j
    return RocCurve(points=tuple(points), auc=auc)


def pair_count_auc(scores: Sequence[float], labels: Sequence[str]) -> float:
    """Quadratic oracle: wins plus half ties over all (pos, neg) pairs."""
    pos = [s for s, lab in zip(scores, labels) if lab == LABEL_MALICIOUS]
    neg = [s for s, lab in zip(scores, labels) if lab == LABEL_BENIGN]
    if len(pos) + len(neg) != len(labels):
        raise ConfigError("labels must be benign or malicious")
    if not pos or not neg:
        raise ConfigError("pair counting needs both classes")
    wins = 0.0
    for p in pos:
        for n in neg:
            if p > n:
                wins += 1.0
            elif p == n:
                wins += 0.5
    return wins / (len(pos) * len(neg))


@dataclass(frozen=True)
class BoxplotModel:
    """Per-feature quartile fences fitted on benign flows."""

    fences: dict[str, tuple[float, float]]

    features = ("duration", "num_bytes", "num_packets")

    @classmethod
    def fit(cls, flows: Iterable[FlowRecord]) -> "BoxplotModel":
        columns: dict[str, list[float]] = {f: [] for f in cls.features}
        for flow in flows:
            for f in cls.features:
                columns[f].append(float(getattr(flow, f)))
        fences = {}
        for f, values in columns.items():
            if not values:
                raise ConfigError("boxplot fit needs at least one flow")
            q1, q3 = np.percentile(values, [25, 75])
            iqr = q3 - q1
            fences[f] = (q1 - 1.5 * iqr, q3 + 1.5 * iqr)
        return cls(fences=fences)

    def score_flow(self, flow: FlowRecord) -> int:
        """Number of features outside their fences."""
        out = 0
        for f in self.features:
            low, high = self.fences[f]
            value = float(getattr(flow, f))
            if value < low or value > high:
                out += 1
        return out

    def score_trace(self, flows_by_line: Mapping[int, FlowRecord], line_span: Sequence[int]) -> int:
        """Worst flow in the window; one bad flow taints the trace."""
        return max(self.score_flow(flows_by_line[line]) for line in line_span)


@dataclass
class ExperimentResult:
    """Per-run AUC records plus one representative ROC curve per cell."""

    rows: list[dict] = field(default_factory=list)
    curves: dict[tuple[str, str], RocCurve] = field(default_factory=dict)

    def mean_auc(self, model: str, condition: str) -> float:
        aucs = [r["auc"] for r in self.rows if r["model"] == model and r["condition"] == condition]
        if not aucs:
            raise ConfigError(f"no runs recorded for {model}/{condition}")
        return sum(aucs) / len(aucs)

    def cells(self) -> list[tuple[str, str]]:
        seen: list[tuple[str, str]] = []
        for r in self.rows:
            cell = (r["model"], r["condition"])
            if cell not in seen:
                seen.append(cell)
        return seen


def _scores_for_model(model_name, trained, markov, boxplot, stream, traces):
    from .automaton import replay
    from .scoring import ScoreLedger, score_stream

    if model_name == MODEL_STATE_FREQUENCY:
        ledger = ScoreLedger.from_machine(trained.machine, alpha_smooth=trained.alpha_smooth)
        return [v.anomaly_score for v in score_stream(trained.machine, ledger, traces)]
    if model_name == MODEL_MARKOV:
        return [markov.score(t) for t in traces]
    if model_name == MODEL_BOXPLOT:
        by_line = {f.line_index: f for f in stream}
        return [float(boxplot.score_trace(by_line, t.line_span)) for t in traces]
    raise ConfigError(f"unknown model {model_name!r}")


def run_experiment(
    train_flows: Sequence[FlowRecord],
    test_flows: Sequence[FlowRecord],
    cfg,
    models: Sequence[str] = MODELS,
    conditions: Sequence[str] = CONDITIONS,
) -> ExperimentResult:
    """Score every model under every test condition, R times over.

    The data split is fixed; repetitions vary the seeds that feed
    KMeans initialization and attack sampling. Attack conditions
    transform only the malicious rows of the test file, using the
    benign rows as the mimicry pool. Traces whose window mixes labeled
    and unlabeled flows are left out of the AUC.
    """
    from dataclasses import replace as dc_replace

    from .pipeline import (
        check_benign_training,
        markov_from_traces,
        traces_from_flows,
        train_pipeline,
    )

    for model_name in models:
        if model_name not in MODELS:
            raise ConfigError(f"unknown model {model_name!r}")
    for condition in conditions:
        if condition not in CONDITIONS:
            raise ConfigError(f"unknown condition {condition!r}")

    benign_test = [f for f in test_flows if f.label == LABEL_BENIGN]
    malicious_test = [f for f in test_flows if f.label == LABEL_MALICIOUS]
    usable_train = check_benign_training(train_flows, cfg.benign_filter)
    boxplot = BoxplotModel.fit(usable_train)

    result = ExperimentResult()
    for run in range(cfg.repetitions):
        seed = cfg.seed + run
        trained = train_pipeline(train_flows, dc_replace(cfg, seed=seed))
        markov = markov_from_traces(trained.train_traces)

        for condition in conditions:
            if condition == CONDITION_CLEAN:
                stream = list(test_flows)
            else:
                spec = AttackSpec(
                    kind=condition,
                    seed=seed,
                    frequency_threshold=cfg.frequency_threshold,
                    window_length=cfg.attack_window_length,
                )
                transformed = apply_attack(spec, malicious_test, benign_test)
                stream = benign_test + transformed
            stream = sort_flows(stream)
            traces = traces_from_flows(stream, trained.encodings, cfg.window, cfg.stride)
            labels = [t.label for t in traces]
            keep = [i for i, lab in enumerate(labels) if lab in (LABEL_BENIGN, LABEL_MALICIOUS)]
            for model_name in models:
                scores = _scores_for_model(model_name, trained, markov, boxplot, stream, traces)
                curve = roc_auc([scores[i] for i in keep], [labels[i] for i in keep])
                result.rows.append(
                    {"model": model_name, "condition": condition, "run": run, "auc": curve.auc}
                )
                if run == 0:
                    result.curves[(model_name, condition)] = curve
    return result
