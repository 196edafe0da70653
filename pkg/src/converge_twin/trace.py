"""Timestamped, space-referenced trace records and their canonical wire form.

Every record carries a session timebase timestamp and a position. Export files
are newline-delimited JSON with a header line carrying the schema version and
a CRC-64 checksum of the record bytes in order; serialization is canonical
(sorted keys, compact separators, floats rounded to 6 decimals) so equal
inputs produce byte-identical files on any platform.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable

from .errors import ParseError, ValidationError

TRACE_SCHEMA_VERSION = 1
CHECKSUM_ALGORITHM = "crc64-xz"

RECORD_KINDS = ("RADIO", "DETECTION", "EVENT", "RIS_PROFILE")


def _crc64_table() -> list[int]:
    poly = 0xC96C5795D7870F42  # reflected ECMA-182 polynomial
    table = []
    for i in range(256):
        crc = i
        for _ in range(8):
            crc = (crc >> 1) ^ poly if crc & 1 else crc >> 1
        table.append(crc)
    return table


_TABLE = _crc64_table()


def crc64(data: bytes, crc: int = 0) -> int:
    crc ^= 0xFFFFFFFFFFFFFFFF
    for byte in data:
        crc = _TABLE[(crc ^ byte) & 0xFF] ^ (crc >> 8)
    return crc ^ 0xFFFFFFFFFFFFFFFF


def _round6(value):
    if isinstance(value, float):
        r = round(value, 6)
        return 0.0 if r == 0 else r  # avoid -0.0 leaking into the wire form
    if isinstance(value, (list, tuple)):
        return [_round6(v) for v in value]
    if isinstance(value, dict):
        return {k: _round6(v) for k, v in value.items()}
    return value


@dataclass(frozen=True)
class TraceRecord:
    session_id: str
    timestamp_s: float
    kind: str
    device_id: str
    position_m: tuple[float, float, float]
    payload: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in RECORD_KINDS:
            raise ValidationError(f"unknown record kind {self.kind!r}")

    def to_dict(self) -> dict:
        return {
            "session_id": self.session_id,
            "timestamp_s": _round6(self.timestamp_s),
            "kind": self.kind,
            "device_id": self.device_id,
            "position_m": _round6(list(self.position_m)),
            "payload": _round6(self.payload),
        }

    @staticmethod
    def from_dict(doc: dict) -> "TraceRecord":
        return TraceRecord(
            session_id=doc["session_id"],
            timestamp_s=doc["timestamp_s"],
            kind=doc["kind"],
            device_id=doc["device_id"],
            position_m=tuple(doc["position_m"]),
            payload=doc.get("payload", {}),
        )


def canonical_line(record: TraceRecord) -> str:
    return json.dumps(record.to_dict(), sort_keys=True, separators=(",", ":"),
                      allow_nan=False)


def export_lines(records: Iterable[TraceRecord],
                 schema_version: int = TRACE_SCHEMA_VERSION) -> list[str]:
    """Header line plus one canonical record line per record."""
    body = [canonical_line(r) for r in records]
    crc = 0
    for line in body:
        crc = crc64((line + "\n").encode("utf-8"), crc)
    header = json.dumps(
        {
            "schema_version": schema_version,
            "checksum_algorithm": CHECKSUM_ALGORITHM,
            "checksum": f"{crc:016x}",
            "record_count": len(body),
        },
        sort_keys=True,
        separators=(",", ":"),
    )
    return [header] + body


def export_bytes(records: Iterable[TraceRecord]) -> bytes:
    return ("\n".join(export_lines(records)) + "\n").encode("utf-8")


def parse_export(data: bytes) -> tuple[dict, list[TraceRecord]]:
    """Parse an export stream, verifying count and checksum."""
    lines = data.decode("utf-8").splitlines()
    if not lines:
        raise ParseError("empty export stream")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise ParseError(f"bad export header: {exc}") from exc
    body = lines[1:]
    if header.get("record_count") != len(body):
        raise ParseError(
            f"record count mismatch: header says {header.get('record_count')}, got {len(body)}"
        )
    crc = 0
    records = []
    for i, line in enumerate(body):
        crc = crc64((line + "\n").encode("utf-8"), crc)
        try:
            records.append(TraceRecord.from_dict(json.loads(line)))
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ParseError(f"bad record on line {i + 2}: {exc}") from exc
    if f"{crc:016x}" != header.get("checksum"):
        raise ParseError("checksum mismatch")
    return header, records
