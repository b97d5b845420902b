"""Deterministic state machine learning over event-symbol traces.

Training builds a prefix tree acceptor (PTA) from the traces, then
shrinks it by evidence-driven state merging: a red core grows from the
root and blue frontier states are folded into compatible red states.
Compatibility is a recursive Hoeffding-bound test on outgoing symbol
frequencies. Replay at test time never modifies the machine; a symbol
with no outgoing transition resets the walk to the root.

Also provides the first-order Markov chain used as a likelihood
baseline in the evaluation.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .flows import ConfigError

ROOT = 0


@dataclass
class Automaton:
    """States 0..n-1 with 0 as root. Deterministic by construction:
    transitions[q] maps each symbol to at most one successor."""

    transitions: list[dict[str, int]] = field(default_factory=lambda: [{}])
    state_train_count: list[int] = field(default_factory=lambda: [0])
    transition_train_count: list[dict[str, int]] = field(default_factory=lambda: [{}])
    final_train_count: list[int] = field(default_factory=lambda: [0])
    alphabet: frozenset[str] = frozenset()

    @property
    def n_states(self) -> int:
        return len(self.transitions)

    @property
    def n_transitions(self) -> int:
        return sum(len(t) for t in self.transitions)

    def successor(self, state: int, symbol: str) -> int | None:
        return self.transitions[state].get(symbol)

@dataclass(frozen=True)
class ReplayResult:
    state_sequence: tuple[int, ...]
    reset_positions: tuple[int, ...]
    visited_set: frozenset[int]


def _symbols_of(trace) -> Sequence[str]:
    return trace.symbols if hasattr(trace, "symbols") else tuple(trace)


def build_pta(traces: Iterable) -> Automaton:
    """Prefix tree acceptor with traversal counts.

    Identical traces are collapsed first and inserted with their
    multiplicity, which keeps insertion linear in distinct prefixes.
    State ids follow insertion order; the root is 0.
    """
    weighted = Counter(tuple(_symbols_of(t)) for t in traces)
    machine = Automaton()
    alphabet: set[str] = set()
    transitions = machine.transitions
    state_count = machine.state_train_count
    trans_count = machine.transition_train_count
    final_count = machine.final_train_count
    state_count[ROOT] = sum(weighted.values())
    for symbols, weight in weighted.items():
        alphabet.update(symbols)
        state = ROOT
        row = transitions[ROOT]
        crow = trans_count[ROOT]
        for symbol in symbols:
            nxt = row.get(symbol)
            if nxt is None:
                nxt = len(transitions)
                row[symbol] = nxt
                crow[symbol] = weight
                row = {}
                crow = {}
                transitions.append(row)
                trans_count.append(crow)
                state_count.append(weight)
                final_count.append(0)
            else:
                crow[symbol] += weight
                state_count[nxt] += weight
                row = transitions[nxt]
                crow = trans_count[nxt]
            state = nxt
        final_count[state] += weight
    machine.alphabet = frozenset(alphabet)
    return machine


def hoeffding_bound(n1: int, n2: int, alpha: float) -> float:
    return math.sqrt(0.5 * math.log(2.0 / alpha)) * (1.0 / math.sqrt(n1) + 1.0 / math.sqrt(n2))


def frequencies_compatible(
    counts1: dict[str, int], n1: int, counts2: dict[str, int], n2: int, alpha: float
) -> bool:
    """Hoeffding test per symbol on outgoing frequencies.

    A state with no outgoing evidence is compatible with anything:
    fixed-length windows censor what happens after the last event, so
    absence of outgoing counts is lack of data, not disagreement.
    """
    if n1 == 0 or n2 == 0:
        return True
    bound = hoeffding_bound(n1, n2, alpha)
    inv1 = 1.0 / n1
    inv2 = 1.0 / n2
    for symbol, c1 in counts1.items():
        if abs(c1 * inv1 - counts2.get(symbol, 0) * inv2) >= bound:
            return False
    for symbol, c2 in counts2.items():
        if symbol not in counts1 and c2 * inv2 >= bound:
            return False
    return True


def _states_compatible(machine: Automaton, q1: int, q2: int, scale: float, seen: set) -> bool:
    # hot path: iterative pair walk with the machine fields hoisted out of
    # the loop. `scale` is the precomputed sqrt(ln(2/alpha)/2) factor, and
    # outgoing totals come from the count invariant (through minus ending)
    # instead of summing the transition dicts. Visited pairs are memoized
    # as single ints; the check per pair is order-independent, so the walk
    # order does not affect the verdict.
    state_count = machine.state_train_count
    final_count = machine.final_train_count
    trans_count = machine.transition_train_count
    transitions = machine.transitions
    width = len(transitions)
    # a pair auto-passes when either side has no outgoing evidence or the
    # bound exceeds 1 (frequencies differ by at most 1, and counts only
    # shrink down the tree, so no descendant can fail either); such pairs
    # are filtered before they are pushed, and the whole subtree below
    # them is skipped. Counts never change during one walk.
    if q1 == q2:
        return True
    n1 = state_count[q1] - final_count[q1]
    n2 = state_count[q2] - final_count[q2]
    if n1 == 0 or n2 == 0 or scale * (n1**-0.5 + n2**-0.5) > 1.0:
        return True
    stack = [(q1, q2)]
    while stack:
        a, b = stack.pop()
        key = a * width + b
        if key in seen:
            continue
        seen.add(key)
        n1 = state_count[a] - final_count[a]
        n2 = state_count[b] - final_count[b]
        bound = scale * (n1**-0.5 + n2**-0.5)
        counts1 = trans_count[a]
        counts2 = trans_count[b]
        inv1 = 1.0 / n1
        inv2 = 1.0 / n2
        for symbol, c1 in counts1.items():
            if abs(c1 * inv1 - counts2.get(symbol, 0) * inv2) >= bound:
                return False
        for symbol, c2 in counts2.items():
            if symbol not in counts1 and c2 * inv2 >= bound:
                return False
        row2 = transitions[b]
        for symbol, target1 in transitions[a].items():
            target2 = row2.get(symbol)
            if target2 is None or target2 == target1:
                continue
            t1 = state_count[target1] - final_count[target1]
            t2 = state_count[target2] - final_count[target2]
            if t1 == 0 or t2 == 0 or scale * (t1**-0.5 + t2**-0.5) > 1.0:
                continue
            stack.append((target1, target2))
    return True


def _fold(machine: Automaton, red: int, blue: int) -> None:
    """Sum blue's counts into red and graft its subtree, recursively
    resolving collisions on shared symbols."""
    state_count = machine.state_train_count
    final_count = machine.final_train_count
    transitions = machine.transitions
    trans_count = machine.transition_train_count

    def go(red: int, blue: int) -> None:
        state_count[red] += state_count[blue]
        final_count[red] += final_count[blue]
        state_count[blue] = 0
        final_count[blue] = 0
        for symbol, blue_target in list(transitions[blue].items()):
            weight = trans_count[blue][symbol]
            row_red = transitions[red]
            red_target = row_red.get(symbol)
            if red_target is None:
                row_red[symbol] = blue_target
                trans_count[red][symbol] = weight
            else:
                trans_count[red][symbol] += weight
                if red_target != blue_target:
                    go(red_target, blue_target)
        transitions[blue] = {}
        trans_count[blue] = {}

    go(red, blue)


def canonical_renumber(machine: Automaton) -> Automaton:
    """Stable ids: BFS from the root, outgoing symbols in sorted order.

    Unreachable (folded-away) states are dropped. Two runs that learn
    the same machine serialize identically after this pass.
    """
    order: dict[int, int] = {ROOT: 0}
    queue = [ROOT]
    while queue:
        state = queue.pop(0)
        for symbol in sorted(machine.transitions[state]):
            target = machine.transitions[state][symbol]
            if target not in order:
                order[target] = len(order)
                queue.append(target)
    out = Automaton(
        transitions=[{} for _ in order],
        state_train_count=[0] * len(order),
        transition_train_count=[{} for _ in order],
        final_train_count=[0] * len(order),
        alphabet=machine.alphabet,
    )
    for old, new in order.items():
        out.state_train_count[new] = machine.state_train_count[old]
        out.final_train_count[new] = machine.final_train_count[old]
        for symbol in sorted(machine.transitions[old]):
            out.transitions[new][symbol] = order[machine.transitions[old][symbol]]
            out.transition_train_count[new][symbol] = machine.transition_train_count[old][symbol]
    return out


def _copy(machine: Automaton) -> Automaton:
    return Automaton(
        transitions=[dict(t) for t in machine.transitions],
        state_train_count=list(machine.state_train_count),
        transition_train_count=[dict(t) for t in machine.transition_train_count],
        final_train_count=list(machine.final_train_count),
        alphabet=machine.alphabet,
    )


def merge_states(pta: Automaton, alpha: float = 0.05) -> Automaton:
    """Red-blue merge loop over the PTA.

    The highest-count blue state (ties to the lowest id) is tested
    against red states in promotion order and folded into the first
    compatible one; with no match it is promoted to red. alpha in (0, 1) sets the
    Hoeffding significance; alpha == 1.0 is accepted as an explicit
    no-merge switch and returns the renumbered PTA unchanged.
    """
    if not (0.0 < alpha < 1.0 or alpha == 1.0):
        raise ConfigError(f"merge significance must be in (0, 1) or exactly 1.0, got {alpha}")
    machine = _copy(pta)
    if alpha == 1.0:
        return canonical_renumber(machine)
    scale = math.sqrt(0.5 * math.log(2.0 / alpha))
    red: list[int] = [ROOT]
    while True:
        in_red = set(red)
        frontier = {
            target
            for r in red
            for target in machine.transitions[r].values()
            if target not in in_red
        }
        if not frontier:
            break
        blue = max(frontier, key=lambda q: (machine.state_train_count[q], -q))
        for r in red:
            if _states_compatible(machine, r, blue, scale, set()):
                for parent in red:
                    for symbol, target in machine.transitions[parent].items():
                        if target == blue:
                            machine.transitions[parent][symbol] = r
                _fold(machine, r, blue)
                break
        else:
            red.append(blue)
    return canonical_renumber(machine)


def replay(machine: Automaton, trace) -> ReplayResult:
    """Walk the machine over the trace, resetting to root on a missing
    transition. Never modifies counts or adds states."""
    symbols = _symbols_of(trace)
    state_sequence: list[int] = []
    resets: list[int] = []
    current = ROOT
    for index, symbol in enumerate(symbols):
        nxt = machine.transitions[current].get(symbol)
        if nxt is None and current != ROOT:
            resets.append(index)
            current = ROOT
            nxt = machine.transitions[current].get(symbol)
        elif nxt is None:
            resets.append(index)
        if nxt is None:
            state_sequence.append(ROOT)
            current = ROOT
        else:
            state_sequence.append(nxt)
            current = nxt
    return ReplayResult(
        state_sequence=tuple(state_sequence),
        reset_positions=tuple(resets),
        visited_set=frozenset(state_sequence),
    )


@dataclass(frozen=True)
class MarkovChain:
    """First-order chain over event symbols with add-one smoothing.

    Smoothing spreads mass over the training alphabet plus one bucket
    for symbols never seen in training, so every score is finite.
    """

    pair_counts: dict[str, dict[str, int]]
    context_totals: dict[str, int]
    alphabet: frozenset[str]
    _table: tuple | None = field(default=None, repr=False, compare=False)

    @classmethod
    def fit(cls, traces: Iterable) -> "MarkovChain":
        pair_counter: Counter = Counter()
        alphabet: set[str] = set()
        for trace in traces:
            symbols = _symbols_of(trace)
            alphabet.update(symbols)
            pair_counter.update(zip(symbols, symbols[1:]))
        pairs: dict[str, dict[str, int]] = {}
        totals: dict[str, int] = {}
        for (a, b), count in pair_counter.items():
            pairs.setdefault(a, {})[b] = count
            totals[a] = totals.get(a, 0) + count
        return cls(pair_counts=pairs, context_totals=totals, alphabet=frozenset(alphabet))

    def transition_probability(self, a: str, b: str) -> float:
        smooth_denominator = len(self.alphabet) + 1
        n = self.context_totals.get(a, 0)
        count = self.pair_counts.get(a, {}).get(b, 0) if b in self.alphabet else 0
        return (count + 1) / (n + smooth_denominator)

    def _score_table(self) -> tuple:
        # per-context rows of precomputed -log p, a fallback per context for
        # unseen successors, and one value for contexts with no evidence
        smooth = len(self.alphabet) + 1
        log = math.log
        rows: dict[str, dict[str, float]] = {}
        fallback: dict[str, float] = {}
        for a, row in self.pair_counts.items():
            n = self.context_totals.get(a, 0) + smooth
            fallback[a] = -log(1 / n)
            rows[a] = {b: -log((c + 1) / n) for b, c in row.items()}
        return rows, fallback, -log(1 / smooth)

    def score(self, trace) -> float:
        """Negative log-likelihood of the adjacent symbol pairs; higher
        means less like the training sequences."""
        symbols = _symbols_of(trace)
        table = self._table
        if table is None:
            table = self._score_table()
            object.__setattr__(self, "_table", table)
        rows, fallback, unseen = table
        total = 0.0
        for a, b in zip(symbols, symbols[1:]):
            row = rows.get(a)
            if row is None:
                total += unseen
            else:
                v = row.get(b)
                total += fallback[a] if v is None else v
        return total
