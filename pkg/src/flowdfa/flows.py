"""Flow record data model, CSV ingestion, sorting and connection grouping."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Iterable, NamedTuple

LABEL_BENIGN = "benign"
LABEL_MALICIOUS = "malicious"
LABEL_UNKNOWN = "unknown"

REQUIRED_FIELDS = ("timestamp", "duration", "protocol", "num_bytes", "num_packets", "src_ip", "dst_ip")
OPTIONAL_FIELDS = ("src_port", "dst_port", "label")


class ConfigError(ValueError):
    """Raised for bad column mappings or out-of-range parameters."""


class IngestError(RuntimeError):
    """Raised when a file accumulates more row errors than the configured cap."""


class ConnectionKey(NamedTuple):
    """Directed (source, destination) host pair. No canonicalization."""

    src_ip: str
    dst_ip: str


@dataclass(frozen=True, slots=True)
class FlowRecord:
    """One NetFlow row.

    ``timestamp`` is integer microseconds since the epoch so records admit a
    total order. ``line_index`` is the 1-based physical row number in the
    source file and must stay attached to the record through the whole
    pipeline: alert linking resolves back to it.
    """

    src_ip: str
    dst_ip: str
    timestamp: int
    duration: float
    protocol: str
    num_bytes: int
    num_packets: int
    src_port: int | None = None
    dst_port: int | None = None
    label: str = LABEL_UNKNOWN
    line_index: int = 0

    def __post_init__(self) -> None:
        if self.duration < 0:
            raise ValueError(f"negative duration {self.duration}")
        if self.num_bytes < 0:
            raise ValueError(f"negative num_bytes {self.num_bytes}")
        if self.num_packets < 0:
            raise ValueError(f"negative num_packets {self.num_packets}")
        for name in ("src_port", "dst_port"):
            port = getattr(self, name)
            if port is not None and not 0 <= port <= 65535:
                raise ValueError(f"{name} {port} outside 0..65535")
        if self.label not in (LABEL_BENIGN, LABEL_MALICIOUS, LABEL_UNKNOWN):
            raise ValueError(f"bad label {self.label!r}")

    @property
    def connection(self) -> ConnectionKey:
        return ConnectionKey(self.src_ip, self.dst_ip)


@dataclass(frozen=True)
class ColumnMapping:
    """Maps semantic flow fields onto the columns of a concrete CSV schema.

    ``columns`` maps semantic names (``timestamp``, ``duration``, ...) to
    source column headers. ``timestamp_format`` is one of ``epoch`` (seconds,
    possibly fractional), ``epoch_ms``, ``epoch_us`` or a strptime pattern.
    ``protocol_map`` optionally normalizes protocol tokens; ``label_map``
    translates source label values to benign/malicious (unmapped values become
    unknown).
    """

    columns: dict[str, str]
    timestamp_format: str = "epoch"
    protocol_map: dict[str, str] = field(default_factory=dict)
    label_map: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        missing = [f for f in REQUIRED_FIELDS if f not in self.columns]
        if missing:
            raise ConfigError(f"column mapping missing required fields: {', '.join(missing)}")
        unknown = [f for f in self.columns if f not in REQUIRED_FIELDS + OPTIONAL_FIELDS]
        if unknown:
            raise ConfigError(f"column mapping has unknown fields: {', '.join(unknown)}")
        for value in self.label_map.values():
            if value not in (LABEL_BENIGN, LABEL_MALICIOUS, LABEL_UNKNOWN):
                raise ConfigError(f"label_map target {value!r} must be benign/malicious/unknown")


@dataclass(frozen=True)
class RowError:
    """A single unparseable CSV row."""

    line_index: int
    message: str


@dataclass
class IngestResult:
    records: list[FlowRecord]
    errors: list[RowError]


def parse_timestamp(raw: str, fmt: str) -> int:
    """Parse a timestamp cell to integer microseconds since the epoch.

    Sub-microsecond precision is truncated.
    """
    raw = raw.strip()
    if fmt == "epoch":
        return int(float(raw) * 1_000_000)
    if fmt == "epoch_ms":
        return int(float(raw) * 1_000)
    if fmt == "epoch_us":
        return int(float(raw))
    dt = datetime.strptime(raw, fmt)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(dt.timestamp() * 1_000_000)


def _parse_port(raw: str) -> int | None:
    raw = raw.strip()
    if raw == "":
        return None
    # some exporters emit ports as floats ("80.0") or hex ICMP codes
    try:
        return int(raw)
    except ValueError:
        return int(float(raw))


def _parse_row(row: dict[str, str], mapping: ColumnMapping, line_index: int) -> FlowRecord:
    cols = mapping.columns

    def cell(name: str) -> str:
        return row[cols[name]].strip()

    protocol = cell("protocol")
    protocol = mapping.protocol_map.get(protocol, protocol)

    label = LABEL_UNKNOWN
    if "label" in cols:
        label = mapping.label_map.get(cell("label"), LABEL_UNKNOWN)

    src_port = _parse_port(cell("src_port")) if "src_port" in cols else None
    dst_port = _parse_port(cell("dst_port")) if "dst_port" in cols else None

    return FlowRecord(
        src_ip=cell("src_ip"),
        dst_ip=cell("dst_ip"),
        timestamp=parse_timestamp(cell("timestamp"), mapping.timestamp_format),
        duration=float(cell("duration")),
        protocol=protocol,
        num_bytes=int(float(cell("num_bytes"))),
        num_packets=int(float(cell("num_packets"))),
        src_port=src_port,
        dst_port=dst_port,
        label=label,
        line_index=line_index,
    )


def ingest_csv(path: str, mapping: ColumnMapping, max_errors: int = 1000) -> IngestResult:
    """Read an RFC-4180 CSV file of flows into FlowRecords.

    The header row occupies line 1, so the first data row gets line_index 2.
    Rows that fail to parse are collected into the error report instead of
    being silently dropped; more than ``max_errors`` of them aborts the
    ingest. A missing mapped column raises ConfigError immediately. An empty
    file yields an empty result.
    """
    records: list[FlowRecord] = []
    errors: list[RowError] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            return IngestResult(records, errors)
        header = set(reader.fieldnames)
        missing = [col for col in mapping.columns.values() if col not in header]
        if missing:
            raise ConfigError(f"{path}: mapped columns not in header: {', '.join(missing)}")
        for line_index, row in enumerate(reader, start=2):
            try:
                records.append(_parse_row(row, mapping, line_index))
            except (ValueError, KeyError, TypeError) as exc:
                errors.append(RowError(line_index, str(exc)))
                if len(errors) > max_errors:
                    raise IngestError(
                        f"{path}: more than {max_errors} malformed rows "
                        f"(first: line {errors[0].line_index}: {errors[0].message})"
                    ) from exc
    return IngestResult(records, errors)


def write_flow_csv(flows: Iterable[FlowRecord], path) -> None:
    """Write flows in the canonical column layout.

    Timestamps go out as integer microseconds, so the file reads back
    with the default column mapping regardless of the source schema.
    """
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(REQUIRED_FIELDS + OPTIONAL_FIELDS)
        for f in flows:
            writer.writerow(
                [
                    f.timestamp,
                    repr(f.duration),
                    f.protocol,
                    f.num_bytes,
                    f.num_packets,
                    f.src_ip,
                    f.dst_ip,
                    "" if f.src_port is None else f.src_port,
                    "" if f.dst_port is None else f.dst_port,
                    f.label,
                ]
            )


def sort_flows(flows: Iterable[FlowRecord]) -> list[FlowRecord]:
    """Order flows by (timestamp, connection key), stable for full ties."""
    return sorted(flows, key=lambda f: (f.timestamp, f.src_ip, f.dst_ip))


def group_by_connection(flows: Iterable[FlowRecord]) -> dict[ConnectionKey, list[FlowRecord]]:
    """Group flows by directed connection, preserving order.

    Group iteration order is first-appearance order; within a group the
    flows keep their input order.
    """
    groups: dict[ConnectionKey, list[FlowRecord]] = {}
    for flow in flows:
        groups.setdefault(flow.connection, []).append(flow)
    return groups
