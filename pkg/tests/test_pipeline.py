"""Tests for end-to-end training and scoring wiring."""

import dataclasses
import math

import pytest

from flowdfa.config import PipelineConfig, identity_mapping
from flowdfa.pipeline import (
    PipelineError,
    check_benign_training,
    markov_from_traces,
    score_with_model,
    train_pipeline,
)
from flowdfa.synth import ALPHABET, generate_benign, generate_bulk_flood


def make_config(**overrides):
    base = dict(
        train_path="train.csv",
        test_path="test.csv",
        column_mapping=identity_mapping(),
        clusters={"duration": 8, "num_bytes": 8, "num_packets": 8},
        bins=10,
        restarts=1,
        seed=0,
    )
    base.update(overrides)
    return PipelineConfig(**base)


@pytest.fixture(scope="module")
def train_flows():
    return generate_benign(3000, seed=17)


@pytest.fixture(scope="module")
def model(train_flows):
    return train_pipeline(train_flows, make_config())


class TestCheckBenignTraining:
    def test_benign_rows_pass_through(self, train_flows):
        assert check_benign_training(train_flows, benign_filter=False) == list(train_flows)

    def test_malicious_rows_without_filter_are_an_error(self, train_flows):
        bad = list(train_flows) + generate_bulk_flood(30, seed=0, t0=10**9)
        with pytest.raises(PipelineError, match="30 malicious rows"):
            check_benign_training(bad, benign_filter=False)

    def test_filter_drops_everything_but_benign(self, train_flows):
        mixed = list(train_flows) + generate_bulk_flood(30, seed=0, t0=10**9)
        mixed.append(dataclasses.replace(train_flows[0], label="unknown", line_index=10**6))
        kept = check_benign_training(mixed, benign_filter=True)
        assert kept == list(train_flows)

    def test_unlabeled_rows_pass_without_filter(self, train_flows):
        rows = [dataclasses.replace(f, label="unknown") for f in train_flows[:5]]
        assert check_benign_training(rows, benign_filter=False) == rows


class TestTrainPipeline:
    def test_stats_describe_the_fit(self, model, train_flows):
        stats = model.train_stats
        assert stats["n_flows"] == len(train_flows)
        assert stats["n_connections"] == 50
        assert stats["n_traces"] == 50 * 51
        assert 0 < stats["n_states"] < stats["n_pta_states"]
        assert stats["alphabet_size"] <= len(ALPHABET)
        assert set(stats["silhouettes"]) == {"duration", "num_bytes", "num_packets"}

    def test_machine_alphabet_comes_from_the_data(self, model):
        assert len(model.machine.alphabet) == model.train_stats["alphabet_size"]

    def test_explicit_threshold_wins(self, train_flows):
        fitted = train_pipeline(train_flows, make_config(threshold=1.5))
        assert fitted.default_threshold == 1.5

    def test_quantile_one_is_the_training_maximum(self, train_flows):
        fitted = train_pipeline(train_flows, make_config(threshold_quantile=1.0))
        replayed = score_with_model(fitted, train_flows)
        assert fitted.default_threshold == max(replayed.scores)

    def test_quantile_is_nearest_rank(self, train_flows):
        fitted = train_pipeline(train_flows, make_config(threshold_quantile=0.5))
        replayed = score_with_model(fitted, train_flows)
        ordered = sorted(replayed.scores)
        rank = math.ceil(0.5 * len(ordered)) - 1
        assert fitted.default_threshold == ordered[rank]

    def test_empty_input_is_an_error(self):
        with pytest.raises(PipelineError, match="training input is empty"):
            train_pipeline([], make_config())

    def test_short_connections_are_an_error(self):
        flows = generate_benign(5, seed=1)
        with pytest.raises(PipelineError, match="shorter than the window"):
            train_pipeline(flows, make_config())

    def test_same_seed_trains_the_same_model(self, train_flows, model):
        again = train_pipeline(train_flows, make_config())
        assert again == model

    def test_malicious_training_rows_are_rejected(self, train_flows):
        bad = list(train_flows) + generate_bulk_flood(10, seed=2, t0=10**9)
        with pytest.raises(PipelineError):
            train_pipeline(bad, make_config())

    def test_filter_makes_mixed_training_usable(self, train_flows):
        bad = list(train_flows) + generate_bulk_flood(10, seed=2, t0=10**9)
        fitted = train_pipeline(bad, make_config(benign_filter=True))
        assert fitted.train_stats["n_flows"] == len(train_flows)


class TestScoreWithModel:
    def test_one_verdict_per_trace_in_order(self, model):
        stream = score_with_model(model, generate_benign(600, seed=30, t0=10**9))
        assert len(stream.verdicts) == len(stream.traces) == 10 * 51
        assert [v.seq_no for v in stream.verdicts] == [t.seq_no for t in stream.traces]
        assert [t.seq_no for t in stream.traces] == list(range(len(stream.traces)))

    def test_labels_follow_the_traces(self, model):
        stream = score_with_model(model, generate_bulk_flood(60, seed=3, t0=10**9))
        assert set(stream.labels.values()) == {"malicious"}

    def test_empty_stream_scores_to_empty_output(self, model):
        stream = score_with_model(model, [])
        assert stream.traces == [] and stream.verdicts == [] and stream.flows == []

    def test_scores_are_finite(self, model):
        stream = score_with_model(model, generate_benign(600, seed=31, t0=10**9))
        assert all(math.isfinite(s) for s in stream.scores)


class TestMarkovFromTraces:
    def test_fits_on_training_traces(self, model):
        chain = markov_from_traces(model.train_traces)
        assert chain.alphabet == model.machine.alphabet
        score = chain.score(model.train_traces[0])
        assert math.isfinite(score) and score > 0
