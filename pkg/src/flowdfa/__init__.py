"""NetFlow anomaly detection from learned state machines.

Learns a deterministic state machine from benign NetFlow traces and scores
test traces by comparing state-visit frequencies against the expectations
derived from training. Alerts are ranked, grouped by root-cause state and
linked back to the source flows for triage.
"""

__version__ = "0.1.0"

from .flows import ColumnMapping, ConnectionKey, FlowRecord, group_by_connection, ingest_csv, sort_flows

__all__ = [
    "ColumnMapping",
    "ConnectionKey",
    "FlowRecord",
    "group_by_connection",
    "ingest_csv",
    "sort_flows",
    "__version__",
]
