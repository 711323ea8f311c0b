"""Durable journaled storage for the generation service.

Three journal-backed structures: the approved-description store (a map from
(sku, model version) to the approved artifact), the screening audit log, and
the behavioural event log. Every mutation is one checksummed JSON line
appended and fsynced before the call returns, so an acknowledged write
survives a crash. Replay tolerates a torn final line (a partial append that
was never acknowledged) and refuses damage anywhere earlier.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from pathlib import Path


class StoreError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Journal
# ---------------------------------------------------------------------------


def _pack_line(record: dict) -> bytes:
    body = json.dumps(record, ensure_ascii=False, sort_keys=True,
                      separators=(",", ":"))
    digest = hashlib.sha256(body.encode("utf-8")).hexdigest()[:12]
    return f"{digest} {body}\n".encode("utf-8")


def _unpack_line(raw: bytes) -> dict | None:
    """Parsed record, or None when the line is damaged."""
    try:
        digest, body = raw.decode("utf-8").split(" ", 1)
    except (UnicodeDecodeError, ValueError):
        return None
    if hashlib.sha256(body.encode("utf-8")).hexdigest()[:12] != digest:
        return None
    try:
        record = json.loads(body)
    except json.JSONDecodeError:
        return None
    return record if isinstance(record, dict) else None


def _replay(raw: bytes, path: Path) -> tuple[list[dict], int]:
    """(records, clean byte length).

    Bytes past the clean length are a torn final append: only the last line
    can be cut short, because each append writes its newline last.
    """
    if not raw:
        return [], 0
    lines = raw.split(b"\n")
    torn = lines[-1] != b""
    clean_len = len(raw) - (len(lines[-1]) if torn else 0)
    lines.pop()
    records: list[dict] = []
    for i, line in enumerate(lines):
        record = _unpack_line(line)
        if record is None:
            raise StoreError(f"journal corrupt at line {i + 1}: {path}")
        records.append(record)
    return records, clean_len


def replay_journal(path: str | Path) -> list[dict]:
    """All acknowledged records in append order; [] for a missing file."""
    path = Path(path)
    if not path.exists():
        return []
    return _replay(path.read_bytes(), path)[0]


class Journal:
    """Append-only checksummed JSONL file; append returns only after fsync."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        if self.path.exists():
            raw = self.path.read_bytes()
            self.records, clean_len = _replay(raw, self.path)
            if clean_len != len(raw):
                with open(self.path, "r+b") as fh:
                    fh.truncate(clean_len)
        else:
            self.records = []
        self._fh = open(self.path, "ab")
        self._lock = threading.Lock()

    def append(self, record: dict) -> dict:
        line = _pack_line(record)
        with self._lock:
            self._fh.write(line)
            self._fh.flush()
            os.fsync(self._fh.fileno())
            self.records.append(record)
        return record

    def close(self) -> None:
        self._fh.close()


# ---------------------------------------------------------------------------
# Description store
# ---------------------------------------------------------------------------


class DescriptionStore:
    """Durable map from (sku, model version) to the approved artifact.

    At most one artifact per key; a later put for the same key replaces the
    earlier one. Reads after an acknowledged put see the put.
    """

    def __init__(self, path: str | Path):
        self._journal = Journal(path)
        self._lock = threading.Lock()
        self._map: dict[tuple[str, str], tuple[dict, int]] = {}
        for seq, rec in enumerate(self._journal.records):
            self._apply(rec, seq)

    def _apply(self, rec: dict, seq: int) -> None:
        self._map[(rec["sku"], rec["model_version"])] = (rec["artifact"], seq)

    def put(self, sku: str, model_version: str, artifact: dict) -> None:
        rec = {"sku": str(sku), "model_version": str(model_version),
               "artifact": artifact}
        with self._lock:
            self._journal.append(rec)
            self._apply(rec, len(self._journal.records) - 1)

    def get(self, sku: str, model_version: str) -> dict | None:
        entry = self._map.get((sku, model_version))
        return entry[0] if entry else None

    def latest(self, sku: str) -> dict | None:
        """Most recently written artifact for the sku across model versions."""
        best, best_seq = None, -1
        for (s, _), (art, seq) in self._map.items():
            if s == sku and seq > best_seq:
                best, best_seq = art, seq
        return best

    def keys(self) -> list[tuple[str, str]]:
        return sorted(self._map)

    def __len__(self) -> int:
        return len(self._map)

    def close(self) -> None:
        self._journal.close()


# ---------------------------------------------------------------------------
# Event log
# ---------------------------------------------------------------------------


EVENT_KINDS = ("pv", "click", "purchase")


class EventLog:
    """Append-only behavioural events; timestamps never move backwards."""

    def __init__(self, path: str | Path):
        self._journal = Journal(path)
        self._lock = threading.Lock()
        self._last_ts = max((r["ts"] for r in self._journal.records),
                            default=float("-inf"))

    def append(self, sku: str, event: str, bucket: str = "default",
               ts: float | None = None) -> dict:
        if event not in EVENT_KINDS:
            raise StoreError(f"unknown event kind: {event!r}")
        with self._lock:
            if ts is None:
                ts = max(time.time(), self._last_ts)
            ts = float(ts)
            if ts < self._last_ts:
                raise StoreError("event timestamp moved backwards")
            rec = {"ts": ts, "sku": str(sku), "event": event,
                   "bucket": str(bucket)}
            self._journal.append(rec)
            self._last_ts = ts
        return rec

    def records(self, bucket: str | None = None) -> list[dict]:
        recs = list(self._journal.records)
        if bucket is not None:
            recs = [r for r in recs if r["bucket"] == bucket]
        return recs

    def __len__(self) -> int:
        return len(self._journal.records)

    def close(self) -> None:
        self._journal.close()


# ---------------------------------------------------------------------------
# Audit log
# ---------------------------------------------------------------------------


class AuditLog:
    """Append-only record of every screening transition."""

    def __init__(self, path: str | Path):
        self._journal = Journal(path)
        self._lock = threading.Lock()

    def append(self, *, ts: float, artifact_id: str, sku: str,
               from_state: str, to_state: str, edited: bool) -> dict:
        rec = {"ts": float(ts), "artifact_id": str(artifact_id),
               "sku": str(sku), "from": from_state, "to": to_state,
               "edited": bool(edited)}
        with self._lock:
            self._journal.append(rec)
        return rec

    def records(self) -> list[dict]:
        return list(self._journal.records)

    def close(self) -> None:
        self._journal.close()
