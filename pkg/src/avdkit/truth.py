"""Aggregate multi-worker token annotations into ground truth.

Fixed-point scheme over three mutually-recursive quality scores: per-unit
(UQS), per-worker (WQS), and per-tag (AQS). Worker votes are one-hot over the
tag vocabulary, so the cosine agreements collapse to weighted vote-match
indicators. All scores start at 1 and iterate UQS -> WQS -> AQS until the
largest change drops below epsilon.

Degenerate denominators (a single annotator overall, a tag never co-judged,
a unit with no second opinion) score 1.0: absence of disagreement evidence is
not counted against anyone.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

from .annostore import AnnotationRecord
from .labels import tag_sort_key

Unit = tuple[str, int]  # (report_id, token index)


class AggregationError(ValueError):
    pass


class EmptyInput(AggregationError):
    pass


class TokenizationMismatch(AggregationError):
    pass


class NoVotes(AggregationError):
    pass


@dataclass(frozen=True)
class AggregationConfig:
    max_iter: int = 50
    epsilon: float = 1e-6


@dataclass(frozen=True)
class UnitVector:
    """One annotated token position: which worker voted which tag."""

    unit_id: Unit
    worker_tags: tuple[tuple[str, str], ...]  # (worker_id, tag), worker-sorted

    @classmethod
    def from_votes(cls, unit_id: Unit, votes: Mapping[str, str]) -> "UnitVector":
        return cls(unit_id=unit_id, worker_tags=tuple(sorted(votes.items())))

    @property
    def votes(self) -> dict[str, str]:
        return dict(self.worker_tags)

    def weighted_counts(self, wqs: Mapping[str, float]) -> dict[str, float]:
        counts: dict[str, float] = {}
        for worker, tag in self.worker_tags:
            counts[tag] = counts.get(tag, 0.0) + wqs.get(worker, 1.0)
        return counts


@dataclass
class QualityScores:
    uqs: dict[Unit, float]
    wqs: dict[str, float]
    aqs: dict[str, float]


@dataclass
class TruthResult:
    ground_truth: dict[Unit, str]
    scores: QualityScores
    iterations: int
    converged: bool


def select_ground_truth(unit: UnitVector, wqs: Mapping[str, float]) -> str:
    """Argmax of WQS-weighted votes. Ties go to the tag backed by the
    highest-WQS voter; any remainder resolves by canonical tag order."""
    if not unit.worker_tags:
        raise NoVotes(f"unit {unit.unit_id} has no votes")
    counts = unit.weighted_counts(wqs)
    top = max(counts.values())
    tied = [t for t, c in counts.items() if c == top]
    if len(tied) == 1:
        return tied[0]
    best_voter = {
        tag: max(wqs.get(w, 1.0) for w, t in unit.worker_tags if t == tag)
        for tag in tied
    }
    strongest = max(best_voter.values())
    tied = [t for t in tied if best_voter[t] == strongest]
    return min(tied, key=tag_sort_key)


def _collect_units(
    records: Sequence[AnnotationRecord],
) -> tuple[dict[Unit, dict[str, str]], dict[str, tuple[str, ...]]]:
    tokens_by_report: dict[str, tuple[str, ...]] = {}
    units: dict[Unit, dict[str, str]] = {}
    for rec in records:
        seen = tokens_by_report.get(rec.report_id)
        if seen is None:
            tokens_by_report[rec.report_id] = tuple(rec.tokens)
        elif seen != tuple(rec.tokens):
            raise TokenizationMismatch(
                f"report {rec.report_id} annotated over differing token lists"
            )
        for i, tag in enumerate(rec.tags):
            units.setdefault((rec.report_id, i), {})[rec.worker_id] = tag
    return units, tokens_by_report


def _compute_uqs(
    units: dict[Unit, dict[str, str]], wqs: Mapping[str, float]
) -> dict[Unit, float]:
    out: dict[Unit, float] = {}
    for unit in sorted(units):
        votes = units[unit]
        workers = sorted(votes)
        if len(workers) == 1:
            out[unit] = 1.0
            continue
        num = den = 0.0
        for i, w in enumerate(workers):
            for w2 in workers[i + 1 :]:
                pair = wqs[w] * wqs[w2]
                den += pair
                if votes[w] == votes[w2]:
                    num += pair
        out[unit] = num / den if den > 0 else 1.0
    return out


def _compute_wqs(
    units: dict[Unit, dict[str, str]],
    worker_units: dict[str, list[Unit]],
    uqs: Mapping[Unit, float],
    wqs: Mapping[str, float],
) -> dict[str, float]:
    workers = sorted(worker_units)
    new: dict[str, float] = {}
    for w in workers:
        # worker-unit agreement: cosine of the worker's one-hot against the
        # unit vector with the worker's own contribution removed
        num = den = 0.0
        for unit in worker_units[w]:
            votes = units[unit]
            rest: dict[str, float] = {}
            for w2 in sorted(votes):
                if w2 == w:
                    continue
                rest[votes[w2]] = rest.get(votes[w2], 0.0) + wqs[w2]
            norm = math.sqrt(sum(v * v for v in rest.values()))
            if norm == 0.0:
                continue  # no second opinion here: no evidence either way
            cos = rest.get(votes[w], 0.0) / norm
            num += uqs[unit] * cos
            den += uqs[unit]
        wua = num / den if den > 0 else 1.0

        # worker-worker agreement: WQS-weighted mean pairwise vote match
        num = den = 0.0
        for w2 in workers:
            if w2 == w:
                continue
            shared = [u for u in worker_units[w] if w2 in units[u]]
            if not shared:
                continue
            agree = sum(1.0 for u in shared if units[u][w] == units[u][w2]) / len(shared)
            num += wqs[w2] * agree
            den += wqs[w2]
        wwa = num / den if den > 0 else 1.0
        new[w] = wua * wwa
    return new


def _compute_aqs(
    units: dict[Unit, dict[str, str]], vocabulary: Sequence[str], wqs: Mapping[str, float]
) -> dict[str, float]:
    num = {a: 0.0 for a in vocabulary}
    den = {a: 0.0 for a in vocabulary}
    for unit in sorted(units):
        votes = units[unit]
        workers = sorted(votes)
        for w in workers:
            a = votes[w]
            for w2 in workers:
                if w2 == w:
                    continue
                pair = wqs[w] * wqs[w2]
                den[a] += pair
                if votes[w2] == a:
                    num[a] += pair
    return {a: (num[a] / den[a] if den[a] > 0 else 1.0) for a in vocabulary}


def aggregate(
    records: Sequence[AnnotationRecord], config: AggregationConfig | None = None
) -> TruthResult:
    """Run the fixed-point aggregation over a batch of annotation records.

    Deterministic and order-independent: every sum iterates sorted workers,
    units, and tags, so permuting the input records cannot change the result.
    """
    config = config or AggregationConfig()
    if not records:
        raise EmptyInput("no annotation records")
    units, _ = _collect_units(records)
    vocabulary = sorted({t for votes in units.values() for t in votes.values()}, key=tag_sort_key)
    worker_units: dict[str, list[Unit]] = {}
    for unit in sorted(units):
        for w in units[unit]:
            worker_units.setdefault(w, []).append(unit)

    uqs = {u: 1.0 for u in units}
    wqs = {w: 1.0 for w in worker_units}
    aqs = {a: 1.0 for a in vocabulary}

    iterations = 0
    converged = False
    for _ in range(config.max_iter):
        iterations += 1
        new_uqs = _compute_uqs(units, wqs)
        new_wqs = _compute_wqs(units, worker_units, new_uqs, wqs)
        new_aqs = _compute_aqs(units, vocabulary, new_wqs)
        delta = 0.0
        for key in uqs:
            delta = max(delta, abs(new_uqs[key] - uqs[key]))
        for w in wqs:
            delta = max(delta, abs(new_wqs[w] - wqs[w]))
        for a in aqs:
            delta = max(delta, abs(new_aqs[a] - aqs[a]))
        uqs, wqs, aqs = new_uqs, new_wqs, new_aqs
        if delta < config.epsilon:
            converged = True
            break

    ground_truth = {
        u: select_ground_truth(UnitVector.from_votes(u, units[u]), wqs)
        for u in sorted(units)
    }
    return TruthResult(
        ground_truth=ground_truth,
        scores=QualityScores(uqs=uqs, wqs=wqs, aqs=aqs),
        iterations=iterations,
        converged=converged,
    )


def write_truth(path: str | Path, result: TruthResult, records: Sequence[AnnotationRecord]) -> None:
    """Persist ground truth as the sentence exchange format, one report per line."""
    _, tokens_by_report = _collect_units(records)
    with open(path, "w", encoding="utf-8") as fh:
        for rid in sorted(tokens_by_report):
            tokens = tokens_by_report[rid]
            tags = [result.ground_truth[(rid, i)] for i in range(len(tokens))]
            fh.write(
                json.dumps(
                    {"report_id": rid, "tokens": list(tokens), "tags": tags},
                    ensure_ascii=False,
                    sort_keys=True,
                )
                + "\n"
            )


def write_quality(path: str | Path, result: TruthResult) -> None:
    payload = {
        "uqs": {f"{rid}#{idx}": v for (rid, idx), v in sorted(result.scores.uqs.items())},
        "wqs": dict(sorted(result.scores.wqs.items())),
        "aqs": dict(sorted(result.scores.aqs.items(), key=lambda kv: tag_sort_key(kv[0]))),
        "iterations": result.iterations,
        "converged": result.converged,
    }
    Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
