"""Cause-effect sequence taggers: an in-repo averaged perceptron baseline
plus the wire protocol for plugging in external model backends.

Two run modes mirror the two task framings: Chained (7-tag span tagger
followed by a span category classifier that never sees sentence context) and
EndToEnd (a single 55-tag tagger with categories inline).
"""

from __future__ import annotations

import enum
import json
import math
import random
import selectors
import subprocess
import urllib.error
import urllib.request
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Protocol, Sequence

from .labels import (
    CauseCategory,
    Span,
    SpanKind,
    TagMode,
    decode_spans,
    tagset,
    validate_and_repair,
)

PROTOCOL_VERSION = "1"


class TaggerError(ValueError):
    pass


class EmptyCorpus(TaggerError):
    pass


class TagModeMismatch(TaggerError):
    pass


class EmptyTrainingSet(TaggerError):
    pass


class ModelApproachMismatch(TaggerError):
    pass


class BackendError(TaggerError):
    pass


class BackendUnavailable(BackendError):
    pass


class BackendProtocolError(BackendError):
    pass


class TagsetMismatch(BackendError):
    pass


class HandshakeTimeout(BackendError):
    pass


class Approach(enum.Enum):
    CHAINED = "Chained"
    END_TO_END = "EndToEnd"


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 15
    seed: int = 0
    tag_mode: TagMode = TagMode.BASE7


class _AveragedPerceptron:
    """Multiclass averaged perceptron over sparse string features."""

    def __init__(self, classes: Sequence[str]) -> None:
        self.classes = list(classes)
        self._rank = {c: i for i, c in enumerate(self.classes)}
        self.weights: dict[str, dict[str, float]] = {}
        self._totals: dict[tuple[str, str], float] = {}
        self._tstamps: dict[tuple[str, str], int] = {}
        self._i = 0

    def predict(self, features: Sequence[str]) -> str:
        scores: dict[str, float] = {}
        for feat in features:
            table = self.weights.get(feat)
            if not table:
                continue
            for cls, weight in table.items():
                scores[cls] = scores.get(cls, 0.0) + weight
        if not scores:
            return self.classes[0]
        return min(scores, key=lambda c: (-scores[c], self._rank[c]))

    def update(self, truth: str, guess: str, features: Sequence[str]) -> None:
        self._i += 1
        if truth == guess:
            return
        for feat in features:
            table = self.weights.setdefault(feat, {})
            self._bump(feat, truth, 1.0, table)
            self._bump(feat, guess, -1.0, table)

    def _bump(self, feat: str, cls: str, delta: float, table: dict[str, float]) -> None:
        key = (feat, cls)
        current = table.get(cls, 0.0)
        self._totals[key] = self._totals.get(key, 0.0) + (self._i - self._tstamps.get(key, 0)) * current
        self._tstamps[key] = self._i
        table[cls] = current + delta

    def averaged_weights(self) -> dict[str, dict[str, float]]:
        out: dict[str, dict[str, float]] = {}
        for feat, table in self.weights.items():
            kept = {}
            for cls, weight in table.items():
                key = (feat, cls)
                total = self._totals.get(key, 0.0) + (self._i - self._tstamps.get(key, 0)) * weight
                averaged = total / self._i if self._i else 0.0
                if averaged != 0.0:
                    kept[cls] = averaged
            if kept:
                out[feat] = kept
        return out


def _score(weights: dict[str, dict[str, float]], features: Sequence[str],
           classes: Sequence[str], rank: dict[str, int]) -> str:
    scores: dict[str, float] = {}
    for feat in features:
        table = weights.get(feat)
        if not table:
            continue
        for cls, weight in table.items():
            scores[cls] = scores.get(cls, 0.0) + weight
    if not scores:
        return classes[0]
    return min(scores, key=lambda c: (-scores[c], rank[c]))


def _word_shape(word: str) -> str:
    shape = []
    for ch in word:
        if ch.isupper():
            shape.append("X")
        elif ch.islower():
            shape.append("x")
        elif ch.isdigit():
            shape.append("d")
        else:
            shape.append(ch)
    collapsed = []
    for ch in shape:
        if not collapsed or collapsed[-1] != ch:
            collapsed.append(ch)
    return "".join(collapsed)


def _token_features(tokens: Sequence[str], i: int, prev_tag: str) -> list[str]:
    word = tokens[i]
    lower = word.lower()
    prev_word = tokens[i - 1].lower() if i > 0 else "<s>"
    next_word = tokens[i + 1].lower() if i + 1 < len(tokens) else "</s>"
    return [
        "bias",
        f"w={word}",
        f"lw={lower}",
        f"p1={lower[:1]}",
        f"p2={lower[:2]}",
        f"p3={lower[:3]}",
        f"s1={lower[-1:]}",
        f"s2={lower[-2:]}",
        f"s3={lower[-3:]}",
        f"shape={_word_shape(word)}",
        f"digit={word.isdigit()}",
        f"pw={prev_word}",
        f"nw={next_word}",
        f"pt={prev_tag}",
        f"pt+lw={prev_tag}+{lower}",
    ]


@dataclass
class TaggerModel:
    """Trained baseline tagger (greedy left-to-right decoding)."""

    tag_mode: TagMode
    weights: dict[str, dict[str, float]]
    seed: int
    epochs_trained: int
    kind: str = "BaselineLinear"
    repairs_applied: int = 0  # telemetry: model-output violations fixed

    def __post_init__(self) -> None:
        self._classes = list(tagset(self.tag_mode))
        self._rank = {c: i for i, c in enumerate(self._classes)}

    def predict(self, tokens: Sequence[str]) -> list[str]:
        raw: list[str] = []
        prev = "<start>"
        for i in range(len(tokens)):
            tag = _score(self.weights, _token_features(tokens, i, prev), self._classes, self._rank)
            raw.append(tag)
            prev = tag
        repaired, violations = validate_and_repair(raw)
        self.repairs_applied += len(violations)
        return repaired

    def save(self, path: str | Path) -> None:
        payload = {
            "format": "avdkit-tagger",
            "version": 1,
            "kind": self.kind,
            "tag_mode": self.tag_mode.value,
            "seed": self.seed,
            "epochs_trained": self.epochs_trained,
            "weights": self.weights,
        }
        Path(path).write_text(json.dumps(payload, sort_keys=True), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "TaggerModel":
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        if payload.get("format") != "avdkit-tagger" or payload.get("version") != 1:
            raise TaggerError(f"not a recognized tagger file: {path}")
        return cls(
            tag_mode=TagMode(payload["tag_mode"]),
            weights=payload["weights"],
            seed=payload["seed"],
            epochs_trained=payload["epochs_trained"],
            kind=payload.get("kind", "BaselineLinear"),
        )


def train_baseline(
    corpus: Sequence[tuple[list[str], list[str]]], config: TrainConfig | None = None
) -> TaggerModel:
    """Averaged-perceptron training with greedy decoding; the per-epoch
    shuffle is driven solely by the seed, so equal inputs give equal models."""
    config = config or TrainConfig()
    if not corpus:
        raise EmptyCorpus("no training sentences")
    valid = set(tagset(config.tag_mode))
    for tokens, tags in corpus:
        bad = [t for t in tags if t not in valid]
        if bad:
            raise TagModeMismatch(
                f"tags {sorted(set(bad))[:3]} not in the {config.tag_mode.value} tagset"
            )
        if len(tokens) != len(tags):
            raise TaggerError("tokens/tags length mismatch in training corpus")

    model = _AveragedPerceptron(tagset(config.tag_mode))
    rng = random.Random(config.seed)
    order = list(range(len(corpus)))
    for _ in range(config.epochs):
        rng.shuffle(order)
        for idx in order:
            tokens, gold = corpus[idx]
            prev = "<start>"
            for i in range(len(tokens)):
                features = _token_features(tokens, i, prev)
                guess = model.predict(features)
                model.update(gold[i], guess, features)
                prev = guess
    weights = model.averaged_weights()
    for table in weights.values():
        for value in table.values():
            if not math.isfinite(value):
                raise TaggerError("non-finite weight after training")
    return TaggerModel(
        tag_mode=config.tag_mode,
        weights=weights,
        seed=config.seed,
        epochs_trained=config.epochs,
    )


# ---------------------------------------------------------------------------
# Span category classifier (Chained approach, no sentence context)
# ---------------------------------------------------------------------------

def _span_features(tokens: Sequence[str]) -> list[str]:
    lowers = [t.lower() for t in tokens]
    feats = ["bias"] + [f"tok={t}" for t in lowers]
    feats += [f"bi={a}_{b}" for a, b in zip(lowers, lowers[1:])]
    feats.append(f"len={len(tokens)}")
    return feats


@dataclass
class SpanClassifier:
    weights: dict[str, dict[str, float]]
    seed: int
    epochs_trained: int

    def __post_init__(self) -> None:
        self._classes = [str(int(c)) for c in CauseCategory]
        self._rank = {c: i for i, c in enumerate(self._classes)}

    def predict(self, tokens: Sequence[str]) -> CauseCategory:
        cls = _score(self.weights, _span_features(tokens), self._classes, self._rank)
        return CauseCategory(int(cls))

    def save(self, path: str | Path) -> None:
        payload = {
            "format": "avdkit-span-classifier",
            "version": 1,
            "seed": self.seed,
            "epochs_trained": self.epochs_trained,
            "weights": self.weights,
        }
        Path(path).write_text(json.dumps(payload, sort_keys=True), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "SpanClassifier":
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        if payload.get("format") != "avdkit-span-classifier" or payload.get("version") != 1:
            raise TaggerError(f"not a recognized span classifier file: {path}")
        return cls(
            weights=payload["weights"],
            seed=payload["seed"],
            epochs_trained=payload["epochs_trained"],
        )


def train_span_classifier(
    examples: Sequence[tuple[Sequence[str], CauseCategory]],
    config: TrainConfig | None = None,
) -> SpanClassifier:
    config = config or TrainConfig()
    if not examples:
        raise EmptyTrainingSet("no span examples")
    model = _AveragedPerceptron([str(int(c)) for c in CauseCategory])
    rng = random.Random(config.seed)
    order = list(range(len(examples)))
    for _ in range(config.epochs):
        rng.shuffle(order)
        for idx in order:
            tokens, category = examples[idx]
            features = _span_features(tokens)
            guess = model.predict(features)
            model.update(str(int(category)), guess, features)
    return SpanClassifier(
        weights=model.averaged_weights(), seed=config.seed, epochs_trained=config.epochs
    )


def span_examples_from_corpus(
    corpus: Sequence[tuple[list[str], list[str]]]
) -> list[tuple[list[str], CauseCategory]]:
    """Harvest categorized cause/embedded-cause spans from combined-tag gold."""
    examples = []
    for tokens, tags in corpus:
        for span in decode_spans(tokens, tags):
            if span.kind in (SpanKind.CAUSE, SpanKind.EMBEDDED_CAUSE) and span.category is not None:
                examples.append((tokens[span.start : span.end], span.category))
    return examples


# ---------------------------------------------------------------------------
# Extraction pipeline
# ---------------------------------------------------------------------------

class SequenceTagger(Protocol):
    tag_mode: TagMode

    def predict(self, tokens: Sequence[str]) -> list[str]: ...


@dataclass
class ExtractionRecord:
    report_id: str
    effects: list[Span]
    causes: list[Span]
    embedded_causes: list[Span]
    approach: Approach

    def to_json_dict(self) -> dict:
        def spans(items: list[Span]) -> list[dict]:
            return [
                {
                    "start": s.start,
                    "end": s.end,
                    "text": s.text,
                    "category": None if s.category is None else int(s.category),
                }
                for s in items
            ]

        return {
            "report_id": self.report_id,
            "approach": self.approach.value,
            "effects": spans(self.effects),
            "causes": spans(self.causes),
            "embedded_causes": spans(self.embedded_causes),
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "ExtractionRecord":
        def spans(kind: SpanKind, items: list[dict]) -> list[Span]:
            return [
                Span(
                    kind=kind,
                    start=s["start"],
                    end=s["end"],
                    category=None if s.get("category") is None else CauseCategory(s["category"]),
                    text=s["text"],
                )
                for s in items
            ]

        return cls(
            report_id=obj["report_id"],
            effects=spans(SpanKind.EFFECT, obj.get("effects", [])),
            causes=spans(SpanKind.CAUSE, obj.get("causes", [])),
            embedded_causes=spans(SpanKind.EMBEDDED_CAUSE, obj.get("embedded_causes", [])),
            approach=Approach(obj.get("approach", "EndToEnd")),
        )


def write_extractions(path: str | Path, records: Sequence[ExtractionRecord]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record.to_json_dict(), ensure_ascii=False, sort_keys=True) + "\n")


def read_extractions(path: str | Path) -> list[ExtractionRecord]:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(ExtractionRecord.from_json_dict(json.loads(line)))
    return records


def run_pipeline(
    approach: Approach,
    corpus: Sequence[tuple[str, list[str]]],
    tagger: SequenceTagger,
    span_classifier: Optional[SpanClassifier] = None,
) -> list[ExtractionRecord]:
    """Extract spans for every (report_id, tokens) pair; one record each."""
    if approach is Approach.CHAINED:
        if tagger.tag_mode is not TagMode.BASE7 or span_classifier is None:
            raise ModelApproachMismatch("Chained needs a Base7 tagger plus a span classifier")
    elif approach is Approach.END_TO_END:
        if tagger.tag_mode is not TagMode.COMBINED55:
            raise ModelApproachMismatch("EndToEnd needs a Combined55 tagger")
    else:
        raise ModelApproachMismatch(f"unknown approach: {approach!r}")

    records = []
    for report_id, tokens in corpus:
        tags = tagger.predict(tokens)
        spans = decode_spans(tokens, tags)
        effects, causes, embedded = [], [], []
        for span in spans:
            if span.kind is SpanKind.EFFECT:
                effects.append(replace(span, category=None) if approach is Approach.CHAINED else span)
            elif span.kind is SpanKind.CAUSE:
                if approach is Approach.CHAINED:
                    span = replace(span, category=span_classifier.predict(tokens[span.start : span.end]))
                causes.append(span)
            else:
                if approach is Approach.CHAINED:
                    span = replace(span, category=span_classifier.predict(tokens[span.start : span.end]))
                embedded.append(span)
        records.append(
            ExtractionRecord(
                report_id=report_id,
                effects=effects,
                causes=causes,
                embedded_causes=embedded,
                approach=approach,
            )
        )
    return records


# ---------------------------------------------------------------------------
# External backend protocol: newline-delimited JSON over a spawned command's
# stdio, or HTTP. Handshake pins protocol version and the exact tagset.
# ---------------------------------------------------------------------------

def _check_handshake(reply: dict, tag_mode: TagMode) -> None:
    if reply.get("protocol_version") != PROTOCOL_VERSION:
        raise BackendProtocolError(
            f"backend speaks protocol {reply.get('protocol_version')!r}, need {PROTOCOL_VERSION!r}"
        )
    expected = list(tagset(tag_mode))
    if reply.get("tag_mode") != tag_mode.value or reply.get("tagset") != expected:
        raise TagsetMismatch(
            f"backend tagset does not match local {tag_mode.value} tagset exactly"
        )


class SubprocessBackend:
    """Line-oriented JSON over a spawned command's stdin/stdout."""

    def __init__(self, command: Sequence[str], tag_mode: TagMode, timeout: float = 10.0) -> None:
        self.tag_mode = tag_mode
        self.timeout = timeout
        try:
            self._proc = subprocess.Popen(
                list(command),
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise BackendUnavailable(f"cannot spawn backend: {exc}") from None
        try:
            reply = self._roundtrip(
                {"op": "handshake", "protocol_version": PROTOCOL_VERSION, "tag_mode": tag_mode.value},
                timeout_error=HandshakeTimeout,
            )
        except BackendError:
            self.close()
            raise
        try:
            _check_handshake(reply, tag_mode)
        except BackendError:
            self.close()
            raise

    def _roundtrip(self, request: dict, timeout_error: type = BackendUnavailable) -> dict:
        if self._proc.poll() is not None:
            raise BackendUnavailable("backend process exited")
        try:
            self._proc.stdin.write(json.dumps(request) + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError):
            raise BackendUnavailable("backend pipe closed") from None
        sel = selectors.DefaultSelector()
        sel.register(self._proc.stdout, selectors.EVENT_READ)
        try:
            if not sel.select(self.timeout):
                raise timeout_error(f"no reply within {self.timeout}s")
        finally:
            sel.close()
        line = self._proc.stdout.readline()
        if not line:
            raise BackendUnavailable("backend closed its output")
        try:
            return json.loads(line)
        except json.JSONDecodeError as exc:
            raise BackendProtocolError(f"malformed backend reply: {exc}") from None

    def tag(self, tokens: Sequence[str]) -> list[str]:
        reply = self._roundtrip({"op": "tag", "tokens": list(tokens)})
        tags = reply.get("tags")
        if not isinstance(tags, list):
            raise BackendProtocolError("reply lacks a tags list")
        return tags

    def close(self) -> None:
        if self._proc.poll() is None:
            self._proc.terminate()
            try:
                self._proc.wait(timeout=2)
            except subprocess.TimeoutExpired:
                self._proc.kill()


class HttpBackend:
    """Handshake via GET /handshake, tagging via POST /tag."""

    def __init__(self, base_url: str, tag_mode: TagMode, timeout: float = 10.0) -> None:
        self.base_url = base_url.rstrip("/")
        self.tag_mode = tag_mode
        self.timeout = timeout
        try:
            with urllib.request.urlopen(f"{self.base_url}/handshake", timeout=timeout) as resp:
                reply = json.loads(resp.read())
        except TimeoutError:
            raise HandshakeTimeout(f"handshake exceeded {timeout}s") from None
        except (urllib.error.URLError, OSError) as exc:
            if isinstance(getattr(exc, "reason", None), TimeoutError):
                raise HandshakeTimeout(f"handshake exceeded {timeout}s") from None
            raise BackendUnavailable(f"backend unreachable: {exc}") from None
        _check_handshake(reply, tag_mode)

    def tag(self, tokens: Sequence[str]) -> list[str]:
        body = json.dumps({"tokens": list(tokens)}).encode("utf-8")
        request = urllib.request.Request(
            f"{self.base_url}/tag", data=body, headers={"Content-Type": "application/json"}
        )
        try:
            with urllib.request.urlopen(request, timeout=self.timeout) as resp:
                reply = json.loads(resp.read())
        except (urllib.error.URLError, OSError) as exc:
            raise BackendUnavailable(f"backend unreachable: {exc}") from None
        tags = reply.get("tags")
        if not isinstance(tags, list):
            raise BackendProtocolError("reply lacks a tags list")
        return tags

    def close(self) -> None:
        pass


@dataclass
class ExternalTagger:
    """Adapter giving a backend the local tagger surface, with the length
    contract and repair accounting enforced on every reply."""

    backend: SubprocessBackend | HttpBackend
    tag_mode: TagMode
    repairs_applied: int = 0
    kind: str = "ExternalBackend"

    def predict(self, tokens: Sequence[str]) -> list[str]:
        tags = self.backend.tag(tokens)
        if len(tags) != len(tokens):
            raise BackendProtocolError(
                f"backend returned {len(tags)} tags for {len(tokens)} tokens"
            )
        valid = set(tagset(self.tag_mode))
        bad = [t for t in tags if t not in valid]
        if bad:
            raise BackendProtocolError(f"backend returned foreign tags: {sorted(set(bad))[:3]}")
        repaired, violations = validate_and_repair(tags)
        self.repairs_applied += len(violations)
        return repaired

    def close(self) -> None:
        self.backend.close()
