"""Per-worker annotation persistence and task assignment.

Storage is a JSON-lines append log with an in-memory latest-wins index
rebuilt at startup; resubmission by the same (report, worker) pair replaces
the earlier record in the view but every revision stays in the log.
"""

from __future__ import annotations

import datetime as dt
import json
import string
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

from .labels import LengthMismatch, is_valid_tag

_PUNCT = set(string.punctuation)


class AnnostoreError(ValueError):
    pass


class EmptyText(AnnostoreError):
    pass


class UnknownReport(AnnostoreError):
    pass


class UnknownWorker(AnnostoreError):
    pass


class InvalidTags(AnnostoreError):
    pass


class TokenMismatch(AnnostoreError):
    pass


def tokenize(description: str) -> list[str]:
    """Whitespace split, then detach leading/trailing punctuation as separate
    tokens. Intra-word punctuation (hyphens, ampersands, slashes) stays put so
    tokens like "N/A", "self-driving" and a lone "&" survive intact."""
    if not description.strip():
        raise EmptyText("nothing to tokenize")
    tokens: list[str] = []
    for chunk in description.split():
        lead: list[str] = []
        trail: list[str] = []
        while len(chunk) > 1 and chunk[0] in _PUNCT:
            lead.append(chunk[0])
            chunk = chunk[1:]
        while len(chunk) > 1 and chunk[-1] in _PUNCT:
            trail.append(chunk[-1])
            chunk = chunk[:-1]
        tokens.extend(lead)
        tokens.append(chunk)
        tokens.extend(reversed(trail))
    return tokens


@dataclass(frozen=True)
class AnnotationRecord:
    report_id: str
    worker_id: str
    tokens: tuple[str, ...]
    tags: tuple[str, ...]
    submitted_at: str = ""

    def to_json_dict(self) -> dict:
        return {
            "report_id": self.report_id,
            "worker_id": self.worker_id,
            "tokens": list(self.tokens),
            "tags": list(self.tags),
            "submitted_at": self.submitted_at,
        }

    @classmethod
    def from_json_dict(cls, obj: Mapping) -> "AnnotationRecord":
        return cls(
            report_id=str(obj["report_id"]),
            worker_id=str(obj["worker_id"]),
            tokens=tuple(obj["tokens"]),
            tags=tuple(obj["tags"]),
            submitted_at=str(obj.get("submitted_at", "")),
        )


@dataclass(frozen=True)
class TaskAssignment:
    report_id: str
    tokens: tuple[str, ...]
    assigned_workers: frozenset[str]
    required_redundancy: int = 3


class AnnotationStore:
    """Append-only annotation log plus latest-wins view and task queue."""

    def __init__(
        self,
        log_path: str | Path,
        reports: Mapping[str, Sequence[str]],
        workers: Iterable[str] = (),
        redundancy: int = 3,
    ) -> None:
        if redundancy < 1:
            raise AnnostoreError("redundancy must be >= 1")
        self.log_path = Path(log_path)
        self.reports = {rid: tuple(tokens) for rid, tokens in reports.items()}
        self.redundancy = redundancy
        self.workers: set[str] = set(workers)
        self._latest: dict[tuple[str, str], AnnotationRecord] = {}
        self._history: list[dict] = []
        self._revision = 0
        self._write_lock = threading.Lock()
        if self.log_path.exists():
            self._replay()

    def _replay(self) -> None:
        with open(self.log_path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                entry = json.loads(line)
                record = AnnotationRecord.from_json_dict(entry)
                self._history.append(entry)
                self._revision = max(self._revision, int(entry["revision"]))
                self._latest[(record.report_id, record.worker_id)] = record
                self.workers.add(record.worker_id)

    def register_worker(self, worker_id: str) -> None:
        self.workers.add(worker_id)

    def validate(self, record: AnnotationRecord) -> None:
        if record.report_id not in self.reports:
            raise UnknownReport(f"no such report: {record.report_id!r}")
        if len(record.tokens) != len(record.tags):
            raise LengthMismatch(
                f"{len(record.tokens)} tokens vs {len(record.tags)} tags"
            )
        expected = self.reports[record.report_id]
        if tuple(record.tokens) != expected:
            raise TokenMismatch(
                f"tokens differ from the stored tokenization of {record.report_id}"
            )
        bad = [t for t in record.tags if not is_valid_tag(t)]
        if bad:
            raise InvalidTags(f"invalid tags: {sorted(set(bad))}")

    def submit(self, record: AnnotationRecord) -> int:
        """Validate and append; returns the stored revision id."""
        self.validate(record)
        if not record.submitted_at:
            record = AnnotationRecord(
                report_id=record.report_id,
                worker_id=record.worker_id,
                tokens=record.tokens,
                tags=record.tags,
                submitted_at=dt.datetime.now(dt.timezone.utc).isoformat(),
            )
        with self._write_lock:
            self._revision += 1
            entry = {"revision": self._revision, **record.to_json_dict()}
            with open(self.log_path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(entry, ensure_ascii=False) + "\n")
                fh.flush()
            self._history.append(entry)
            self._latest[(record.report_id, record.worker_id)] = record
            self.workers.add(record.worker_id)
            return self._revision

    def latest_for_report(self, report_id: str) -> list[AnnotationRecord]:
        if report_id not in self.reports:
            raise UnknownReport(f"no such report: {report_id!r}")
        records = [
            rec for (rid, _), rec in self._latest.items() if rid == report_id
        ]
        return sorted(records, key=lambda r: r.worker_id)

    def all_latest(self) -> list[AnnotationRecord]:
        return sorted(
            self._latest.values(), key=lambda r: (r.report_id, r.worker_id)
        )

    def history(self, report_id: Optional[str] = None) -> list[dict]:
        if report_id is None:
            return list(self._history)
        return [e for e in self._history if e["report_id"] == report_id]

    def _submitted_workers(self, report_id: str) -> set[str]:
        return {wid for (rid, wid) in self._latest if rid == report_id}

    def pending_tasks(self, worker_id: str) -> list[TaskAssignment]:
        """Reports this worker has not annotated and whose redundancy target
        is not yet met, in stable report-id order."""
        if worker_id not in self.workers:
            raise UnknownWorker(f"unregistered worker: {worker_id!r}")
        tasks = []
        for rid in sorted(self.reports):
            done = self._submitted_workers(rid)
            if worker_id in done or len(done) >= self.redundancy:
                continue
            tasks.append(
                TaskAssignment(
                    report_id=rid,
                    tokens=self.reports[rid],
                    assigned_workers=frozenset(done),
                    required_redundancy=self.redundancy,
                )
            )
        return tasks
