"""Tests for ROC computation, the two baselines, and the experiment runner."""

import dataclasses
import math
import random

import pytest

from flowdfa.config import PipelineConfig, identity_mapping
from flowdfa.evaluation import (
    CONDITIONS,
    MODELS,
    BoxplotModel,
    RocCurve,
    pair_count_auc,
    roc_auc,
    run_experiment,
)
from flowdfa.flows import ConfigError
from flowdfa.pipeline import PipelineError
from flowdfa.synth import generate_benign, generate_bulk_flood

from .test_flows import make_flow

M = "malicious"
B = "benign"


def rank_oracle(scores, labels):
    """Independent quadratic AUC: wins plus half ties over all pairs."""
    pos = [s for s, lab in zip(scores, labels) if lab == M]
    neg = [s for s, lab in zip(scores, labels) if lab == B]
    wins = 0.0
    for p in pos:
        for n in neg:
            if p > n:
                wins += 1.0
            elif p == n:
                wins += 0.5
    return wins / (len(pos) * len(neg))


def quantile_oracle(values, q):
    """Sorted linear interpolation, same convention as the default percentile."""
    ordered = sorted(values)
    pos = (len(ordered) - 1) * q
    lo, hi = math.floor(pos), math.ceil(pos)
    frac = pos - lo
    return ordered[lo] * (1.0 - frac) + ordered[hi] * frac


class TestRocAuc:
    def test_hand_computed_case(self):
        curve = roc_auc([3.0, 2.0, 1.0], [M, B, M])
        assert curve.auc == pytest.approx(0.5, abs=1e-12)
        assert curve.points == ((0.0, 0.0), (0.0, 0.5), (1.0, 0.5), (1.0, 1.0))

    def test_perfect_separation(self):
        curve = roc_auc([9.0, 8.0, 1.0, 0.5], [M, M, B, B])
        assert curve.auc == 1.0

    def test_reversed_separation(self):
        curve = roc_auc([9.0, 8.0, 1.0, 0.5], [B, B, M, M])
        assert curve.auc == 0.0

    def test_all_tied_is_chance(self):
        curve = roc_auc([4.0, 4.0, 4.0, 4.0], [M, B, M, B])
        assert curve.auc == pytest.approx(0.5, abs=1e-12)
        assert curve.points == ((0.0, 0.0), (1.0, 1.0))

    def test_tied_scores_collapse_into_one_step(self):
        curve = roc_auc([2.0, 2.0, 1.0, 1.0], [M, B, M, B])
        assert curve.auc == pytest.approx(0.5, abs=1e-12)
        assert len(curve.points) == 3

    def test_matches_rank_oracle_on_random_instances(self):
        rng = random.Random(20260826)
        for trial in range(100):
            n = rng.randint(2, 1000)
            # coarse grid forces plenty of tied scores
            scores = [rng.randint(0, 12) / 4.0 for _ in range(n)]
            labels = [M if rng.random() < 0.4 else B for _ in range(n)]
            if M not in labels:
                labels[0] = M
            if B not in labels:
                labels[-1] = B
            curve = roc_auc(scores, labels)
            assert abs(curve.auc - rank_oracle(scores, labels)) < 1e-9, f"trial {trial}"

    def test_curve_shape(self):
        rng = random.Random(5)
        scores = [rng.randint(0, 20) / 2.0 for _ in range(300)]
        labels = [M if rng.random() < 0.5 else B for _ in range(300)]
        curve = roc_auc(scores, labels)
        assert curve.points[0] == (0.0, 0.0)
        assert curve.points[-1] == (1.0, 1.0)
        for (x0, y0), (x1, y1) in zip(curve.points, curve.points[1:]):
            assert x1 >= x0 and y1 >= y0
        assert len(curve.points) <= len(set(scores)) + 1

    def test_invariant_under_monotone_transforms(self):
        rng = random.Random(6)
        scores = [rng.randint(0, 10) / 3.0 for _ in range(200)]
        labels = [M if rng.random() < 0.3 else B for _ in range(200)]
        base = roc_auc(scores, labels).auc
        assert roc_auc([2.0 * s + 7.0 for s in scores], labels).auc == base
        assert roc_auc([math.exp(s) for s in scores], labels).auc == base

    def test_length_mismatch_is_error(self):
        with pytest.raises(ConfigError):
            roc_auc([1.0, 2.0], [M])

    def test_single_class_is_error(self):
        with pytest.raises(ConfigError):
            roc_auc([1.0, 2.0], [M, M])
        with pytest.raises(ConfigError):
            roc_auc([1.0, 2.0], [B, B])

    def test_foreign_label_is_error(self):
        with pytest.raises(ConfigError):
            roc_auc([1.0, 2.0, 3.0], [M, B, "unknown"])


class TestPairCountAuc:
    def test_agrees_with_local_oracle(self):
        scores = [3.0, 2.0, 2.0, 1.0]
        labels = [M, B, M, B]
        assert pair_count_auc(scores, labels) == rank_oracle(scores, labels)

    def test_single_class_is_error(self):
        with pytest.raises(ConfigError):
            pair_count_auc([1.0], [M])

    def test_foreign_label_is_error(self):
        with pytest.raises(ConfigError):
            pair_count_auc([1.0, 2.0, 3.0], [M, B, "spam"])


class TestBoxplotModel:
    def flows(self):
        rows = [
            (1.0, 10, 1),
            (2.0, 20, 1),
            (3.0, 30, 1),
            (4.0, 40, 1),
        ]
        return [
            make_flow(duration=d, num_bytes=nb, num_packets=np_)
            for d, nb, np_ in rows
        ]

    def test_fences_from_known_quartiles(self):
        model = BoxplotModel.fit(self.flows())
        # quartiles 1.75 / 3.25, iqr 1.5
        assert model.fences["duration"] == pytest.approx((-0.5, 5.5), abs=1e-12)
        assert model.fences["num_bytes"] == pytest.approx((-5.0, 55.0), abs=1e-12)
        # constant feature: zero iqr pins both fences to the value
        assert model.fences["num_packets"] == pytest.approx((1.0, 1.0), abs=1e-12)

    def test_fences_match_quantile_oracle(self):
        rng = random.Random(99)
        values = [rng.uniform(0, 50) for _ in range(137)]
        flows = [make_flow(duration=v) for v in values]
        model = BoxplotModel.fit(flows)
        q1 = quantile_oracle(values, 0.25)
        q3 = quantile_oracle(values, 0.75)
        low, high = model.fences["duration"]
        assert low == pytest.approx(q1 - 1.5 * (q3 - q1), abs=1e-9)
        assert high == pytest.approx(q3 + 1.5 * (q3 - q1), abs=1e-9)

    def test_score_flow_counts_features_outside(self):
        model = BoxplotModel.fit(self.flows())
        assert model.score_flow(make_flow(duration=2.0, num_bytes=25, num_packets=1)) == 0
        assert model.score_flow(make_flow(duration=9.0, num_bytes=25, num_packets=1)) == 1
        assert model.score_flow(make_flow(duration=9.0, num_bytes=999, num_packets=4)) == 3

    def test_fence_boundary_is_inside(self):
        model = BoxplotModel.fit(self.flows())
        assert model.score_flow(make_flow(duration=5.5, num_bytes=55, num_packets=1)) == 0

    def test_score_trace_takes_the_worst_flow(self):
        model = BoxplotModel.fit(self.flows())
        by_line = {
            1: make_flow(duration=2.0, num_bytes=25, num_packets=1),
            2: make_flow(duration=9.0, num_bytes=999, num_packets=1),
        }
        assert model.score_trace(by_line, [1, 2]) == 2
        assert model.score_trace(by_line, [1]) == 0

    def test_empty_fit_is_error(self):
        with pytest.raises(ConfigError):
            BoxplotModel.fit([])


def experiment_config(repetitions=1):
    return PipelineConfig(
        train_path="train",
        test_path="test",
        column_mapping=identity_mapping(),
        clusters={"duration": 8, "num_bytes": 8, "num_packets": 8},
        bins=10,
        restarts=1,
        seed=0,
        threshold=0.0,
        frequency_threshold=50,
        repetitions=repetitions,
    )


@pytest.fixture(scope="module")
def experiment_flows():
    # large enough that the rare bulk-run states survive merging on any seed
    train = generate_benign(20_000, seed=40)
    benign_test = generate_benign(1200, seed=41, start_line=50_000, t0=10**9)
    flood = generate_bulk_flood(240, seed=42, start_line=200_000, t0=2 * 10**9)
    return train, benign_test + flood


@pytest.fixture(scope="module")
def experiment_result(experiment_flows):
    train, test = experiment_flows
    return run_experiment(train, test, experiment_config(repetitions=2))


class TestRunExperiment:
    def test_full_matrix_of_cells(self, experiment_result):
        cells = experiment_result.cells()
        assert len(cells) == len(MODELS) * len(CONDITIONS)
        assert set(cells) == {(m, c) for m in MODELS for c in CONDITIONS}

    def test_rows_cover_every_cell_and_run(self, experiment_result):
        assert len(experiment_result.rows) == 2 * len(MODELS) * len(CONDITIONS)
        for row in experiment_result.rows:
            assert set(row) == {"model", "condition", "run", "auc"}
            assert 0.0 <= row["auc"] <= 1.0

    def test_mean_auc_is_the_arithmetic_mean(self, experiment_result):
        for model, condition in experiment_result.cells():
            aucs = [
                r["auc"]
                for r in experiment_result.rows
                if r["model"] == model and r["condition"] == condition
            ]
            expected = sum(aucs) / len(aucs)
            assert abs(experiment_result.mean_auc(model, condition) - expected) < 1e-12

    def test_mean_auc_unknown_cell_is_error(self, experiment_result):
        with pytest.raises(ConfigError):
            experiment_result.mean_auc("state_frequency", "no_such_condition")

    def test_curves_cover_every_cell(self, experiment_result):
        assert set(experiment_result.curves) == set(experiment_result.cells())
        for curve in experiment_result.curves.values():
            assert isinstance(curve, RocCurve)
            assert curve.points[0] == (0.0, 0.0)
            assert curve.points[-1] == (1.0, 1.0)

    def test_state_frequency_beats_markov_on_the_flood(self, experiment_result):
        sf = experiment_result.mean_auc("state_frequency", "clean")
        mk = experiment_result.mean_auc("markov", "clean")
        bx = experiment_result.mean_auc("boxplot", "clean")
        assert sf > 0.9
        # the pair (bulk, bulk) is the most likely transition, so the chain
        # ranks the flood as highly normal
        assert mk < 0.3
        # flood feature values sit inside the benign fences, all scores tie
        assert bx == pytest.approx(0.5, abs=1e-12)

    def test_deterministic(self, experiment_flows):
        train, test = experiment_flows
        first = run_experiment(train, test, experiment_config())
        second = run_experiment(train, test, experiment_config())
        assert first.rows == second.rows

    def test_unknown_model_is_error(self, experiment_flows):
        train, test = experiment_flows
        with pytest.raises(ConfigError):
            run_experiment(train, test, experiment_config(), models=("parzen",))

    def test_unknown_condition_is_error(self, experiment_flows):
        train, test = experiment_flows
        with pytest.raises(ConfigError):
            run_experiment(train, test, experiment_config(), conditions=("replay",))

    def test_malicious_training_rows_are_rejected(self, experiment_flows):
        train, test = experiment_flows
        poisoned = train + generate_bulk_flood(60, seed=1, start_line=900_000, t0=3 * 10**9)
        with pytest.raises(PipelineError):
            run_experiment(poisoned, test, experiment_config())

    def test_unlabeled_windows_are_excluded_from_the_sweep(self, experiment_flows):
        train, test = experiment_flows
        extra = [
            dataclasses.replace(f, label="unknown", src_ip="10.150.0.9")
            for f in generate_benign(60, seed=43, start_line=700_000, t0=4 * 10**9)
        ]
        result = run_experiment(
            train, test + extra, experiment_config(), conditions=("clean",)
        )
        for row in result.rows:
            assert 0.0 <= row["auc"] <= 1.0
