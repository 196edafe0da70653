"""Append-only trace repository with sealed, checksummed dataset export.

One directory per session holding `meta.json`, an append-only `records.log`
of canonical record lines (flushed and fsynced on every acknowledged append),
and, once sealed, a `dataset.json`. Sealed datasets are immutable and export
byte-identically across restarts and platforms.
"""
from __future__ import annotations

import json
import os
import threading
from pathlib import Path
from typing import Iterator, Optional

from ..errors import (
    NonMonotonicTimestamp,
    SessionNotRunning,
    UnknownDataset,
    UnknownSession,
    Unsealed,
)
from ..trace import (
    CHECKSUM_ALGORITHM,
    TRACE_SCHEMA_VERSION,
    TraceRecord,
    canonical_line,
    crc64,
)


def dataset_id_for(session_id: str) -> str:
    return f"ds-{session_id}"


def session_id_for(dataset_id: str) -> str:
    if not dataset_id.startswith("ds-"):
        raise UnknownDataset(dataset_id)
    return dataset_id[3:]


class TraceStore:
    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._last_ts: dict[str, dict[tuple[str, str], float]] = {}
        self._counts: dict[str, int] = {}
        self.recovered: list[str] = []
        self._recover()

    # -- session metadata

    def _session_dir(self, session_id: str) -> Path:
        return self.root / "sessions" / session_id

    def create_session(self, session_id: str, meta: dict) -> None:
        d = self._session_dir(session_id)
        d.mkdir(parents=True, exist_ok=False)
        self._write_meta(session_id, meta)
        self._last_ts[session_id] = {}
        self._counts[session_id] = 0

    def _write_meta(self, session_id: str, meta: dict) -> None:
        path = self._session_dir(session_id) / "meta.json"
        tmp = path.with_suffix(".tmp")
        tmp.write_text(json.dumps(meta, sort_keys=True, indent=2))
        os.replace(tmp, path)

    def read_meta(self, session_id: str) -> dict:
        path = self._session_dir(session_id) / "meta.json"
        if not path.exists():
            raise UnknownSession(session_id)
        return json.loads(path.read_text())

    def update_meta(self, session_id: str, changes: dict) -> dict:
        meta = self.read_meta(session_id)
        meta.update(changes)
        self._write_meta(session_id, meta)
        return meta

    def session_ids(self) -> list[str]:
        base = self.root / "sessions"
        if not base.exists():
            return []
        return sorted(p.name for p in base.iterdir() if p.is_dir())

    def _recover(self) -> None:
        """After an unclean stop, any session left RUNNING becomes ABORTED;
        every durably acked record stays intact."""
        for sid in self.session_ids():
            try:
                meta = self.read_meta(sid)
            except UnknownSession:
                continue
            if meta.get("state") == "RUNNING":
                self.update_meta(sid, {"state": "ABORTED"})
                self.recovered.append(sid)
            self._last_ts[sid] = {}
            count = 0
            for record in self.records(sid):
                self._last_ts[sid][(record.kind, record.device_id)] = record.timestamp_s
                count += 1
            self._counts[sid] = count

    # -- append-only record log

    def _log_path(self, session_id: str) -> Path:
        return self._session_dir(session_id) / "records.log"

    def append(self, session_id: str, records: list[TraceRecord]) -> int:
        """Durable append; returns the cumulative record count (the ack)."""
        with self._lock:
            meta = self.read_meta(session_id)
            if meta.get("state") != "RUNNING":
                raise SessionNotRunning(f"session {session_id} is {meta.get('state')}")
            last = self._last_ts.setdefault(session_id, {})
            for record in records:
                key = (record.kind, record.device_id)
                if key in last and record.timestamp_s < last[key]:
                    raise NonMonotonicTimestamp(
                        f"stream {key}: {record.timestamp_s} < {last[key]}"
                    )
            lines = [canonical_line(r) for r in records]
            with open(self._log_path(session_id), "a", encoding="utf-8") as fh:
                for line in lines:
                    fh.write(line + "\n")
                fh.flush()
                os.fsync(fh.fileno())
            for record in records:
                last[(record.kind, record.device_id)] = record.timestamp_s
            self._counts[session_id] = self._counts.get(session_id, 0) + len(records)
            return self._counts[session_id]

    def records(self, session_id: str) -> Iterator[TraceRecord]:
        path = self._log_path(session_id)
        if not path.exists():
            if not (self._session_dir(session_id) / "meta.json").exists():
                raise UnknownSession(session_id)
            return
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    yield TraceRecord.from_dict(json.loads(line))

    def record_count(self, session_id: str) -> int:
        return self._counts.get(session_id, 0)

    # -- datasets

    def _dataset_path(self, session_id: str) -> Path:
        return self._session_dir(session_id) / "dataset.json"

    def seal(self, session_id: str) -> dict:
        """Freeze the session's record log into an immutable dataset."""
        meta = self.read_meta(session_id)
        crc = 0
        count = 0
        path = self._log_path(session_id)
        if path.exists():
            with open(path, "rb") as fh:
                for line in fh:
                    crc = crc64(line, crc)
                    count += 1
        dataset = {
            "dataset_id": dataset_id_for(session_id),
            "session_id": session_id,
            "schema_version": TRACE_SCHEMA_VERSION,
            "record_count": count,
            "checksum": f"{crc:016x}",
            "checksum_algorithm": CHECKSUM_ALGORITHM,
            "immutable": True,
        }
        self._dataset_path(session_id).write_text(
            json.dumps(dataset, sort_keys=True, indent=2))
        self.update_meta(session_id, {"result_dataset_id": dataset["dataset_id"]})
        return dataset

    def dataset(self, dataset_id: str) -> dict:
        sid = session_id_for(dataset_id)
        path = self._dataset_path(sid)
        if not path.exists():
            if (self._session_dir(sid) / "meta.json").exists():
                raise Unsealed(dataset_id)
            raise UnknownDataset(dataset_id)
        return json.loads(path.read_text())

    def export(self, dataset_id: str) -> bytes:
        """Deterministic export: header line plus the stored canonical lines."""
        info = self.dataset(dataset_id)
        header = json.dumps(
            {
                "schema_version": info["schema_version"],
                "checksum_algorithm": info["checksum_algorithm"],
                "checksum": info["checksum"],
                "record_count": info["record_count"],
            },
            sort_keys=True,
            separators=(",", ":"),
        )
        path = self._log_path(info["session_id"])
        body = path.read_bytes() if path.exists() else b""
        return header.encode("utf-8") + b"\n" + body

    def query(self, dataset_id: str, t0: Optional[float] = None,
              t1: Optional[float] = None, kind: Optional[str] = None,
              device_id: Optional[str] = None) -> list[TraceRecord]:
        info = self.dataset(dataset_id)
        out = []
        for record in self.records(info["session_id"]):
            if t0 is not None and record.timestamp_s < t0:
                continue
            if t1 is not None and record.timestamp_s > t1:
                continue
            if kind is not None and record.kind != kind:
                continue
            if device_id is not None and record.device_id != device_id:
                continue
            out.append(record)
        out.sort(key=lambda r: r.timestamp_s)
        return out
