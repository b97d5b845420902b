"""Synthetic NetFlow generators for experiments and benchmarks.

The benign generator is a 5-state machine over 8 symbols. State 0 is
idle chatter; states 1 through 4 track how many times the bulk symbol
s7 has repeated. Short s7 bursts are routine (so first-order models
see nothing odd about an s7 pair) but long runs are rare, and each run
position exits with its own flavor of follow-up traffic. The flood
generator emits nothing but s7 flows, which drags the learned machine
through its rarely visited deep-run states over and over.

Every symbol owns one distinct row of flow features, so a discretizer
fitted on this traffic recovers the alphabet exactly.
"""

from __future__ import annotations

import numpy as np

from .flows import LABEL_BENIGN, LABEL_MALICIOUS, FlowRecord

# symbol -> (duration, protocol, num_bytes, num_packets)
SYMBOL_FEATURES: dict[str, tuple[float, str, int, int]] = {
    "s0": (0.05, "TCP", 100, 1),
    "s1": (0.10, "TCP", 200, 2),
    "s2": (0.15, "TCP", 300, 3),
    "s3": (0.20, "TCP", 400, 4),
    "s4": (0.25, "UDP", 500, 5),
    "s5": (0.30, "UDP", 600, 6),
    "s6": (0.35, "UDP", 700, 7),
    "s7": (0.40, "UDP", 800, 8),
}

BULK_SYMBOL = "s7"

# state -> list of (symbol, probability, next state)
BENIGN_MACHINE: dict[int, list[tuple[str, float, int]]] = {
    0: [
        ("s7", 0.30, 1),
        ("s0", 0.30, 0),
        ("s5", 0.22, 0),
        ("s6", 0.11, 0),
        ("s1", 0.07, 0),
    ],
    1: [
        ("s7", 0.50, 2),
        ("s1", 0.30, 0),
        ("s0", 0.12, 0),
        ("s5", 0.08, 0),
    ],
    2: [
        ("s7", 0.45, 3),
        ("s2", 0.30, 0),
        ("s0", 0.12, 0),
        ("s6", 0.13, 0),
    ],
    3: [
        ("s7", 0.15, 4),
        ("s3", 0.45, 0),
        ("s5", 0.20, 0),
        ("s6", 0.20, 0),
    ],
    4: [
        ("s7", 0.05, 4),
        ("s4", 0.60, 0),
        ("s6", 0.35, 0),
    ],
}

N_STATES = len(BENIGN_MACHINE)
ALPHABET = tuple(sorted(SYMBOL_FEATURES))

_FLOW_INTERVAL_US = 1000


def _flow(symbol: str, src_ip: str, dst_ip: str, timestamp: int, line_index: int,
          label: str) -> FlowRecord:
    duration, protocol, num_bytes, num_packets = SYMBOL_FEATURES[symbol]
    return FlowRecord(
        src_ip=src_ip,
        dst_ip=dst_ip,
        timestamp=timestamp,
        duration=duration,
        protocol=protocol,
        num_bytes=num_bytes,
        num_packets=num_packets,
        src_port=40000,
        dst_port=8080,
        label=label,
        line_index=line_index,
    )


def _cumulative_rules(machine: dict[int, list[tuple[str, float, int]]]):
    """Per state: list of (cumulative probability, symbol, next state)."""
    table = {}
    for state, rules in machine.items():
        acc = 0.0
        rows = []
        for symbol, p, nxt in rules:
            acc += p
            rows.append((acc, symbol, nxt))
        # guard against float drift so the last bucket always catches
        rows[-1] = (1.0 + 1e-9, rows[-1][1], rows[-1][2])
        table[state] = rows
    return table


_BENIGN_CUMULATIVE = _cumulative_rules(BENIGN_MACHINE)


def _walk(table, n_symbols: int, rng: np.random.Generator) -> list[str]:
    symbols = []
    state = 0
    draws = rng.random(n_symbols)
    for r in draws:
        for acc, symbol, nxt in table[state]:
            if r < acc:
                symbols.append(symbol)
                state = nxt
                break
    return symbols


def walk_benign(n_symbols: int, rng: np.random.Generator) -> list[str]:
    """Sample a symbol sequence from the benign machine, starting idle."""
    return _walk(_BENIGN_CUMULATIVE, n_symbols, rng)


def generate_benign(n_flows: int, seed: int, *, connection_length: int = 60,
                    start_line: int = 2, t0: int = 0) -> list[FlowRecord]:
    """Benign flows split over connections of fixed length.

    Each connection restarts the machine from idle and gets its own
    source address. Timestamps tick globally so the stream interleaves
    the way a capture would.
    """
    rng = np.random.default_rng(seed)
    flows = []
    conn = 0
    emitted = 0
    while emitted < n_flows:
        length = min(connection_length, n_flows - emitted)
        src = f"10.{(conn >> 8) & 255}.{conn & 255}.1"
        symbols = walk_benign(length, rng)
        for symbol in symbols:
            flows.append(_flow(
                symbol,
                src_ip=src,
                dst_ip="10.200.0.1",
                timestamp=t0 + emitted * _FLOW_INTERVAL_US,
                line_index=start_line + emitted,
                label=LABEL_BENIGN,
            ))
            emitted += 1
        conn += 1
    return flows


def generate_bulk_flood(n_flows: int, seed: int, *, connections: int = 4,
                        start_line: int = 200_000, t0: int = 0) -> list[FlowRecord]:
    """Flood of the single most common benign symbol.

    Spread over a few dedicated connections, every flow carrying the
    s7 feature row. The seed only shuffles connection assignment so
    runs stay reproducible under different splits.
    """
    rng = np.random.default_rng(seed)
    per_conn = [n_flows // connections] * connections
    for i in range(n_flows % connections):
        per_conn[i] += 1
    offsets = rng.permutation(connections)
    flows = []
    emitted = 0
    for rank, conn in enumerate(offsets):
        for _ in range(per_conn[rank]):
            flows.append(_flow(
                BULK_SYMBOL,
                src_ip=f"10.99.{int(conn)}.1",
                dst_ip="10.200.0.1",
                timestamp=t0 + emitted * _FLOW_INTERVAL_US,
                line_index=start_line + emitted,
                label=LABEL_MALICIOUS,
            ))
            emitted += 1
    return flows


TWO_STATE_MACHINE: dict[int, list[tuple[str, float, int]]] = {
    0: [("a", 0.5, 1), ("b", 0.5, 0)],
    1: [("c", 1.0, 0)],
}


_TWO_STATE_CUMULATIVE = _cumulative_rules(TWO_STATE_MACHINE)


def generate_two_state_traces(n_traces: int, length: int, seed: int) -> list[tuple[str, ...]]:
    """Fixed-length symbol traces from a tiny 2-state machine."""
    rng = np.random.default_rng(seed)
    return [tuple(_walk(_TWO_STATE_CUMULATIVE, length, rng)) for _ in range(n_traces)]
