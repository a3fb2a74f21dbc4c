"""IOB cause/effect tag schema, the combined-label codec, and span decoding.

Tag universe: 7 base tags (O plus B-/I- for causes, effects, and embedded
causes) and 55 combined tags where every non-O tag carries one of 9 cause
categories, e.g. ``B-C-2``. Sequences are exchanged as plain strings; this
module owns parsing, validation/repair, and span encoding/decoding.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Optional, Sequence


class TagError(ValueError):
    pass


class UnknownTag(TagError):
    pass


class CategoryRequired(TagError):
    pass


class CategoryForbidden(TagError):
    pass


class LengthMismatch(TagError):
    pass


class OverlappingSpans(TagError):
    pass


class SpanKind(enum.Enum):
    CAUSE = "C"
    EFFECT = "E"
    EMBEDDED_CAUSE = "CE"


# Kind order used everywhere a deterministic tag order is needed.
_KIND_ORDER = (SpanKind.CAUSE, SpanKind.EFFECT, SpanKind.EMBEDDED_CAUSE)


class BaseTag(enum.Enum):
    O = "O"
    B_C = "B-C"
    I_C = "I-C"
    B_E = "B-E"
    I_E = "I-E"
    B_CE = "B-CE"
    I_CE = "I-CE"

    @property
    def kind(self) -> Optional[SpanKind]:
        if self is BaseTag.O:
            return None
        return SpanKind(self.value.split("-", 1)[1])

    @property
    def is_begin(self) -> bool:
        return self.value.startswith("B-")

    @property
    def is_inside(self) -> bool:
        return self.value.startswith("I-")


class MainGroup(enum.Enum):
    AV_SYSTEM = "AV System"
    HUMAN_FACTORS = "Human Factors"
    ENV_OTHERS = "Environmental Factors & Others"


class CauseCategory(enum.IntEnum):
    PERCEPTION = 0
    LOCALIZATION_MAPPING = 1
    PLANNING = 2
    CONTROL = 3
    AV_DRIVER = 4
    OTHER_DRIVER_VEHICLE = 5
    ENVIRONMENT = 6
    SYSTEM_GENERAL = 7
    OTHERS = 8

    @property
    def label(self) -> str:
        return _CATEGORY_LABELS[self]

    @property
    def main_group(self) -> MainGroup:
        if self <= CauseCategory.CONTROL:
            return MainGroup.AV_SYSTEM
        if self <= CauseCategory.OTHER_DRIVER_VEHICLE:
            return MainGroup.HUMAN_FACTORS
        return MainGroup.ENV_OTHERS


_CATEGORY_LABELS = {
    CauseCategory.PERCEPTION: "perception",
    CauseCategory.LOCALIZATION_MAPPING: "localization & mapping",
    CauseCategory.PLANNING: "planning",
    CauseCategory.CONTROL: "control",
    CauseCategory.AV_DRIVER: "AV driver",
    CauseCategory.OTHER_DRIVER_VEHICLE: "other driver & vehicle",
    CauseCategory.ENVIRONMENT: "environment",
    CauseCategory.SYSTEM_GENERAL: "system general",
    CauseCategory.OTHERS: "others",
}


class TagMode(enum.Enum):
    BASE7 = "Base7"
    COMBINED55 = "Combined55"


@dataclass(frozen=True)
class CombinedTag:
    """A base tag fused with an optional cause category.

    O never carries a category; every other base tag must.
    """

    base: BaseTag
    category: Optional[CauseCategory] = None

    def __post_init__(self) -> None:
        if self.base is BaseTag.O:
            if self.category is not None:
                raise CategoryForbidden("O cannot carry a category")
        elif self.category is None:
            raise CategoryRequired(f"{self.base.value} requires a category")

    @property
    def text(self) -> str:
        if self.category is None:
            return self.base.value
        return f"{self.base.value}-{self.category.value}"

    def __str__(self) -> str:
        return self.text


def combine(base: BaseTag, category: Optional[CauseCategory] = None) -> CombinedTag:
    if not isinstance(base, BaseTag):
        raise UnknownTag(f"not a base tag: {base!r}")
    if category is not None:
        category = CauseCategory(category)
    return CombinedTag(base, category)


def split(tag: str) -> tuple[BaseTag, Optional[CauseCategory]]:
    """Strict codec inverse over the 55 combined tag strings."""
    try:
        return _COMBINED55_INDEX[tag]
    except KeyError:
        raise UnknownTag(f"not a combined tag: {tag!r}") from None


def parse_tag(tag: str) -> tuple[BaseTag, Optional[CauseCategory]]:
    """Lenient parse accepting both base-7 and combined-55 strings."""
    found = _ANY_TAG_INDEX.get(tag)
    if found is None:
        raise UnknownTag(f"unknown tag: {tag!r}")
    return found


def is_valid_tag(tag: str) -> bool:
    return tag in _ANY_TAG_INDEX


def tagset(mode: TagMode) -> tuple[str, ...]:
    """Stable tag vocabulary for a mode: O first, kinds C/E/CE, B before I,
    categories ascending."""
    if mode is TagMode.BASE7:
        return _BASE7
    if mode is TagMode.COMBINED55:
        return _COMBINED55
    raise ValueError(f"unknown tag mode: {mode!r}")


def _build_tagsets() -> tuple[tuple[str, ...], tuple[str, ...]]:
    base = ["O"]
    for kind in _KIND_ORDER:
        for bi in ("B", "I"):
            base.append(f"{bi}-{kind.value}")
    combined = ["O"]
    for kind in _KIND_ORDER:
        for bi in ("B", "I"):
            for cat in CauseCategory:
                combined.append(f"{bi}-{kind.value}-{cat.value}")
    return tuple(base), tuple(combined)


_BASE7, _COMBINED55 = _build_tagsets()

_COMBINED55_INDEX: dict[str, tuple[BaseTag, Optional[CauseCategory]]] = {"O": (BaseTag.O, None)}
for _kind in _KIND_ORDER:
    for _bi in ("B", "I"):
        for _cat in CauseCategory:
            _COMBINED55_INDEX[f"{_bi}-{_kind.value}-{_cat.value}"] = (
                BaseTag(f"{_bi}-{_kind.value}"),
                _cat,
            )

_ANY_TAG_INDEX: dict[str, tuple[BaseTag, Optional[CauseCategory]]] = dict(_COMBINED55_INDEX)
for _t in BaseTag:
    _ANY_TAG_INDEX[_t.value] = (_t, None)

# Canonical total order over every valid tag string: the 7 base tags, then
# the 54 categorized ones. Used for deterministic tie-breaking.
_TAG_ORDER: dict[str, int] = {t: i for i, t in enumerate(_BASE7 + _COMBINED55[1:])}


def tag_sort_key(tag: str) -> tuple[int, int | str]:
    """Sort key placing known tags in canonical order, unknown ones after."""
    if tag in _TAG_ORDER:
        return (0, _TAG_ORDER[tag])
    return (1, tag)


def _tag_text(base: BaseTag, category: Optional[CauseCategory]) -> str:
    # Formats both vocabularies; CombinedTag itself enforces the 55-tag invariant.
    return base.value if category is None else f"{base.value}-{category.value}"


@dataclass(frozen=True)
class Violation:
    """A repaired IOB well-formedness break at a token position."""

    index: int
    original: str
    repaired: str
    reason: str


def validate_and_repair(tags: Sequence[str]) -> tuple[list[str], list[Violation]]:
    """Repair dangling I- tags: an I-X whose predecessor is not a B-X/I-X of
    the same kind and category becomes B-X (rule R1). Category switches count
    as breaks too. Well-formed input comes back unchanged."""
    repaired: list[str] = []
    violations: list[Violation] = []
    prev: Optional[tuple[BaseTag, Optional[CauseCategory]]] = None
    for i, tag in enumerate(tags):
        base, cat = parse_tag(tag)
        if base.is_inside:
            ok = (
                prev is not None
                and prev[0] is not BaseTag.O
                and prev[0].kind == base.kind
                and prev[1] == cat
            )
            if not ok:
                fixed = _tag_text(BaseTag(f"B-{base.kind.value}"), cat)
                violations.append(
                    Violation(index=i, original=tag, repaired=fixed, reason="dangling-inside")
                )
                repaired.append(fixed)
                prev = parse_tag(fixed)
                continue
        repaired.append(tag)
        prev = (base, cat)
    return repaired, violations


@dataclass(frozen=True)
class Span:
    kind: SpanKind
    start: int
    end: int  # exclusive
    category: Optional[CauseCategory]
    text: str

    def __post_init__(self) -> None:
        if not 0 <= self.start < self.end:
            raise TagError(f"bad span bounds [{self.start}, {self.end})")


def decode_spans(tokens: Sequence[str], tags: Sequence[str]) -> list[Span]:
    """Turn a well-formed tag sequence into spans. A span's category is the
    category of its B- token. Run validate_and_repair first on model output."""
    if len(tokens) != len(tags):
        raise LengthMismatch(f"{len(tokens)} tokens vs {len(tags)} tags")
    spans: list[Span] = []
    open_start = -1
    open_kind: Optional[SpanKind] = None
    open_cat: Optional[CauseCategory] = None

    def close(end: int) -> None:
        nonlocal open_start, open_kind, open_cat
        if open_kind is not None:
            spans.append(
                Span(
                    kind=open_kind,
                    start=open_start,
                    end=end,
                    category=open_cat,
                    text=" ".join(tokens[open_start:end]),
                )
            )
        open_start, open_kind, open_cat = -1, None, None

    for i, tag in enumerate(tags):
        base, cat = parse_tag(tag)
        if base is BaseTag.O:
            close(i)
        elif base.is_begin:
            close(i)
            open_start, open_kind, open_cat = i, base.kind, cat
        else:  # inside; well-formedness guarantees it continues the open span
            if open_kind != base.kind or open_cat != cat:
                raise TagError(f"ill-formed sequence at {i}: {tag} continues nothing")
    close(len(tags))
    return spans


def encode_spans(spans: Iterable[Span], length: int) -> list[str]:
    """Inverse of decode_spans: lay disjoint spans onto an all-O sequence."""
    tags = ["O"] * length
    occupied = [False] * length
    for span in spans:
        if span.end > length:
            raise LengthMismatch(f"span ends at {span.end} but sequence has {length} tokens")
        if any(occupied[span.start : span.end]):
            raise OverlappingSpans(f"span [{span.start}, {span.end}) overlaps another")
        for i in range(span.start, span.end):
            occupied[i] = True
            bi = "B" if i == span.start else "I"
            tags[i] = _tag_text(BaseTag(f"{bi}-{span.kind.value}"), span.category)
    return tags


def strip_categories(tags: Sequence[str]) -> list[str]:
    """Project combined tags down to the base-7 vocabulary."""
    return [parse_tag(t)[0].value for t in tags]


# Annotated-corpus exchange format: JSON lines, one sentence per line,
# {report_id, tokens, tags, worker_id optional}.


def write_sentences(path: str | Path, rows: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False, sort_keys=True) + "\n")


def read_sentences(path: str | Path) -> Iterator[dict]:
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                yield json.loads(line)
