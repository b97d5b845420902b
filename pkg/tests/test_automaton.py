"""Tests for PTA construction, state merging, replay, and the Markov baseline."""

import math
import random

import pytest

from flowdfa.automaton import (
    ROOT,
    Automaton,
    MarkovChain,
    build_pta,
    canonical_renumber,
    frequencies_compatible,
    hoeffding_bound,
    merge_states,
    replay,
)
from flowdfa.flows import ConfigError


def trie_of(traces):
    trie = {}
    for symbols in traces:
        node = trie
        for s in symbols:
            node = node.setdefault(s, {})
    return trie


def machine_paths(machine, state=ROOT, prefix=()):
    """All root paths of a tree-shaped machine, as symbol tuples."""
    out = []
    for symbol, target in machine.transitions[state].items():
        path = prefix + (symbol,)
        out.append(path)
        out.extend(machine_paths(machine, target, path))
    return out


def all_prefixes(traces):
    out = set()
    for symbols in traces:
        for i in range(1, len(symbols) + 1):
            out.add(tuple(symbols[:i]))
    return out


def assert_count_invariant(machine, n_traces):
    """state count = incoming transition counts, plus trace starts at root."""
    incoming = [0] * machine.n_states
    for state in range(machine.n_states):
        for symbol, target in machine.transitions[state].items():
            incoming[target] += machine.transition_train_count[state][symbol]
    for state in range(machine.n_states):
        expected = incoming[state] + (n_traces if state == ROOT else 0)
        assert machine.state_train_count[state] == expected, f"state {state}"


class TestBuildPta:
    def test_two_trace_tree(self):
        machine = build_pta([["a", "b"], ["a", "c"]])
        assert machine.n_states == 4
        assert machine.transitions[ROOT] == {"a": 1}
        assert machine.transitions[1] == {"b": 2, "c": 3}
        assert machine.state_train_count == [2, 2, 1, 1]
        assert machine.transition_train_count[ROOT]["a"] == 2
        assert machine.transition_train_count[1] == {"b": 1, "c": 1}
        assert machine.alphabet == {"a", "b", "c"}

    def test_empty_trace_list(self):
        machine = build_pta([])
        assert machine.n_states == 1
        assert machine.n_transitions == 0
        assert machine.state_train_count == [0]

    def test_random_traces_against_trie_oracle(self):
        rng = random.Random(23)
        traces = [[rng.choice("xyz") for _ in range(5)] for _ in range(100)]
        machine = build_pta(traces)
        assert set(machine_paths(machine)) == all_prefixes(traces)
        # shape matches an independently built trie
        trie = trie_of(traces)
        assert machine.n_transitions == sum(
            1 for _ in _iter_trie_nodes(trie)
        )

    def test_counts_are_prefix_multiplicities(self):
        rng = random.Random(5)
        traces = [[rng.choice("xy") for _ in range(4)] for _ in range(60)]
        machine = build_pta(traces)
        for path in set(machine_paths(machine)):
            state = ROOT
            for s in path:
                state = machine.transitions[state][s]
            expected = sum(1 for t in traces if tuple(t[: len(path)]) == path)
            assert machine.state_train_count[state] == expected
        assert_count_invariant(machine, 60)

    def test_training_traces_replay_without_resets(self):
        rng = random.Random(7)
        traces = [[rng.choice("pq") for _ in range(6)] for _ in range(40)]
        machine = build_pta(traces)
        for t in traces:
            result = replay(machine, t)
            assert result.reset_positions == ()
            assert len(result.state_sequence) == 6


def _iter_trie_nodes(trie):
    for child in trie.values():
        yield child
        yield from _iter_trie_nodes(child)


def two_state_traces(n, length, seed):
    """Random walks on a tiny cyclic generator: state 0 emits a (to 1)
    or b (stay) with equal odds, state 1 always emits c back to 0."""
    rng = random.Random(seed)
    out = []
    for _ in range(n):
        state, symbols = 0, []
        for _ in range(length):
            if state == 0:
                if rng.random() < 0.5:
                    symbols.append("a")
                    state = 1
                else:
                    symbols.append("b")
            else:
                symbols.append("c")
                state = 0
        out.append(symbols)
    return out


class TestMerge:
    def test_two_state_generator_collapses(self):
        traces = two_state_traces(200, 10, seed=3)
        pta = build_pta(traces)
        merged = merge_states(pta, alpha=0.05)
        assert merged.n_states <= 6
        assert merged.n_states < pta.n_states
        for t in traces:
            assert replay(merged, t).reset_positions == ()

    def test_merge_is_deterministic(self):
        traces = two_state_traces(200, 10, seed=3)
        a = merge_states(build_pta(traces), alpha=0.05)
        b = merge_states(build_pta(traces), alpha=0.05)
        assert a == b

    def test_count_conservation(self):
        traces = two_state_traces(150, 10, seed=11)
        pta = build_pta(traces)
        merged = merge_states(pta, alpha=0.05)
        assert sum(merged.state_train_count) == sum(pta.state_train_count)
        assert sum(
            sum(t.values()) for t in merged.transition_train_count
        ) == sum(sum(t.values()) for t in pta.transition_train_count)
        assert sum(merged.final_train_count) == 150

    def test_merged_machine_is_deterministic_map(self):
        traces = two_state_traces(100, 8, seed=2)
        merged = merge_states(build_pta(traces), alpha=0.05)
        # dict representation enforces one successor per symbol; check
        # reachability and count bookkeeping instead
        reachable = {ROOT}
        queue = [ROOT]
        while queue:
            q = queue.pop()
            for target in merged.transitions[q].values():
                if target not in reachable:
                    reachable.add(target)
                    queue.append(target)
        assert reachable == set(range(merged.n_states))
        assert_count_invariant(merged, 100)

    def test_identical_distributions_merge(self):
        traces = (
            [["x", "a"]] * 50 + [["x", "b"]] * 50 + [["y", "a"]] * 50 + [["y", "b"]] * 50
        )
        merged = merge_states(build_pta(traces), alpha=0.05)
        assert merged.transitions[ROOT]["x"] == merged.transitions[ROOT]["y"]

    def test_no_merge_extreme_is_isomorphic_to_pta(self):
        traces = two_state_traces(50, 6, seed=9)
        pta = build_pta(traces)
        merged = merge_states(pta, alpha=1.0)
        assert merged == canonical_renumber(pta)
        assert merged.n_states == pta.n_states
        assert merged.n_transitions == pta.n_transitions

    def test_alpha_validation(self):
        pta = build_pta([["a"]])
        for bad in (0.0, -0.5, 1.5, 2.0):
            with pytest.raises(ConfigError):
                merge_states(pta, alpha=bad)
        merge_states(pta, alpha=0.5)
        merge_states(pta, alpha=1.0)


class TestHoeffding:
    def test_bound_formula_direct(self):
        # sqrt(0.5 ln(2/alpha)) (1/sqrt(n1) + 1/sqrt(n2)) by hand
        expected = math.sqrt(0.5 * math.log(2 / 0.05)) * (1 / math.sqrt(200) + 1 / math.sqrt(100))
        assert hoeffding_bound(200, 100, 0.05) == pytest.approx(expected, abs=1e-15)

    def test_identical_large_counts_compatible(self):
        counts = {"a": 50, "b": 50}
        assert frequencies_compatible(counts, 100, dict(counts), 100, 0.05)

    def test_clear_difference_rejected(self):
        assert not frequencies_compatible({"a": 100}, 100, {"b": 100}, 100, 0.05)

    def test_threshold_arithmetic(self):
        # n1 = n2 = 100, alpha = 0.05: bound = 1.3581... * 0.2 = 0.27162...
        bound = hoeffding_bound(100, 100, 0.05)
        assert frequencies_compatible({"a": 50, "b": 50}, 100, {"a": 40, "b": 60}, 100, 0.05) == (
            0.1 < bound
        )
        assert not frequencies_compatible({"a": 50, "b": 50}, 100, {"a": 20, "b": 80}, 100, 0.05)

    def test_no_evidence_always_passes(self):
        assert frequencies_compatible({}, 0, {"a": 100}, 100, 0.05)
        assert frequencies_compatible({"a": 100}, 100, {}, 0, 0.05)


class TestReplay:
    def machine(self):
        return build_pta([["a", "b", "c"]])

    def test_known_prefix_then_unknown_then_root_restart(self):
        result = replay(self.machine(), ["a", "b", "c", "z", "a"])
        assert result.state_sequence == (1, 2, 3, 0, 1)
        assert result.reset_positions == (3,)
        assert result.visited_set == {0, 1, 2, 3}

    def test_all_unknown_symbols(self):
        result = replay(self.machine(), ["z", "z", "z"])
        assert result.state_sequence == (0, 0, 0)
        assert result.reset_positions == (0, 1, 2)
        assert result.visited_set == {0}

    def test_training_trace_is_tree_path(self):
        result = replay(self.machine(), ["a", "b", "c"])
        assert result.state_sequence == (1, 2, 3)
        assert result.reset_positions == ()

    def test_reset_then_continue_from_root(self):
        machine = build_pta([["a", "b"], ["b", "a"]])
        # miss at state reached by a->b (no outgoing), restart hits root's b
        result = replay(machine, ["a", "b", "b", "a"])
        assert result.reset_positions == (2,)
        assert result.state_sequence[2] == machine.transitions[ROOT]["b"]

    def test_replay_never_modifies_counts(self):
        machine = self.machine()
        before = (list(machine.state_train_count), [dict(t) for t in machine.transition_train_count])
        replay(machine, ["z", "a", "b", "q"])
        assert machine.state_train_count == before[0]
        assert [dict(t) for t in machine.transition_train_count] == before[1]

    def test_replay_deterministic(self):
        machine = self.machine()
        trace = ["a", "z", "a", "b"]
        assert replay(machine, trace) == replay(machine, trace)

    def test_visited_set_matches_sequence(self):
        result = replay(self.machine(), ["a", "a", "b", "c"])
        assert result.visited_set == set(result.state_sequence)


class TestMarkov:
    def test_alternating_scores_lower_than_constant(self):
        chain = MarkovChain.fit([["a", "b"] * 5] * 20)
        assert chain.score(["a", "b"] * 2) < chain.score(["a"] * 4)

    def test_direct_probability_oracle(self):
        chain = MarkovChain.fit([["a", "b"], ["a", "a"]])
        # alphabet {a, b}: denominators n(a)=2 plus |alphabet|+1 = 3
        assert chain.transition_probability("a", "b") == pytest.approx(2 / 5)
        assert chain.transition_probability("a", "a") == pytest.approx(2 / 5)
        assert chain.transition_probability("a", "z") == pytest.approx(1 / 5)
        assert chain.transition_probability("b", "a") == pytest.approx(1 / 3)
        assert chain.score(["a", "b"]) == pytest.approx(-math.log(2 / 5))
        assert chain.score(["b", "a"]) == pytest.approx(-math.log(1 / 3))

    def test_single_symbol_alphabet_score_depends_on_length_only(self):
        chain = MarkovChain.fit([["a", "a", "a"]])
        p = chain.transition_probability("a", "a")
        assert chain.score(["a"] * 4) == pytest.approx(-3 * math.log(p))

    def test_unseen_symbols_score_finite(self):
        chain = MarkovChain.fit([["a", "a", "a"]])
        score = chain.score(["z", "w", "a"])
        assert math.isfinite(score)
        assert score > chain.score(["a", "a", "a"])
