"""Parse raw disengagement report files into a canonical corpus, apply the
filtering rules, and persist the consolidated database.

Three input shapes are supported: the consolidated delimited release
(header-bearing CSV), a headerless legacy table with the fixed column order
manufacturer/date/initiator/location/description, and plain-text dumps of
``Key: value`` blocks separated by blank lines. Output is one canonical
``corpus.csv`` plus a JSON sidecar with the filter tally.
"""

from __future__ import annotations

import csv
import datetime as dt
import enum
import hashlib
import io
import json
import subprocess
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

PLACEHOLDER = "N/A"
EARLIEST_REPORT_DATE = dt.date(2014, 1, 1)

CORPUS_HEADER = ["id", "manufacturer", "date", "initiator", "location", "description"]


class IngestError(ValueError):
    pass


class UndecodableFile(IngestError):
    pass


class UnknownFormat(IngestError):
    pass


class EmptyFile(IngestError):
    pass


class MissingDescription(IngestError):
    pass


class DateUnparseable(IngestError):
    pass


class DateOutOfRange(IngestError):
    pass


class AllSourcesFailed(IngestError):
    pass


class Initiator(enum.Enum):
    AV_SYSTEM = "AVSystem"
    TEST_DRIVER = "TestDriver"
    UNKNOWN = "Unknown"


class Location(enum.Enum):
    STREET = "Street"
    HIGHWAY = "Highway"
    FREEWAY = "Freeway"
    INTERSTATE = "Interstate"
    PARKING = "Parking"
    RURAL = "Rural"
    UNKNOWN = "Unknown"


class ReportFormat(enum.Enum):
    CONSOLIDATED_TABLE = "ConsolidatedTable"
    LEGACY_TABLE = "LegacyTable"
    PLAIN_TEXT = "PlainText"


_INITIATOR_SYNONYMS = {
    "av system": Initiator.AV_SYSTEM,
    "avsystem": Initiator.AV_SYSTEM,
    "av": Initiator.AV_SYSTEM,
    "system": Initiator.AV_SYSTEM,
    "vehicle": Initiator.AV_SYSTEM,
    "test driver": Initiator.TEST_DRIVER,
    "test operator": Initiator.TEST_DRIVER,
    "testdriver": Initiator.TEST_DRIVER,
    "driver": Initiator.TEST_DRIVER,
    "operator": Initiator.TEST_DRIVER,
    "safety driver": Initiator.TEST_DRIVER,
}

_LOCATION_SYNONYMS = {
    "street": Location.STREET,
    "streets": Location.STREET,
    "road": Location.STREET,
    "roads": Location.STREET,
    "downtown": Location.STREET,
    "urban": Location.STREET,
    "highway": Location.HIGHWAY,
    "freeway": Location.FREEWAY,
    "interstate": Location.INTERSTATE,
    "parking": Location.PARKING,
    "parking lot": Location.PARKING,
    "parking facility": Location.PARKING,
    "rural": Location.RURAL,
    "rural road": Location.RURAL,
}

# Header synonyms for the consolidated release; matched case-insensitively.
_FIELD_SYNONYMS = {
    "id": "id",
    "manufacturer": "manufacturer",
    "date": "date",
    "initiator": "initiator",
    "disengagement initiated by": "initiator",
    "location": "location",
    "disengagement location": "location",
    "description": "description",
    "description of facts causing disengagement": "description",
}


@dataclass(frozen=True)
class Report:
    id: str
    manufacturer: str
    date: Optional[dt.date]
    initiator: Initiator
    location: Location
    description: str

    @property
    def date_unknown(self) -> bool:
        return self.date is None

    @property
    def year(self) -> Optional[int]:
        return None if self.date is None else self.date.year


@dataclass(frozen=True)
class FilterPolicy:
    min_description_words: int = 5
    excluded_manufacturers: frozenset[str] = frozenset({"Apple", "Uber"})
    dedup_enabled: bool = False

    def __post_init__(self) -> None:
        if self.min_description_words < 0:
            raise ValueError("min_description_words must be >= 0")


@dataclass
class FilterLog:
    kept: int = 0
    removed_short: int = 0
    removed_excluded: int = 0
    removed_duplicate: int = 0
    per_year_kept: dict[Optional[int], int] = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        per_year = {("unknown" if y is None else str(y)): c for y, c in sorted(
            self.per_year_kept.items(), key=lambda kv: (kv[0] is None, kv[0] or 0))}
        return {
            "kept": self.kept,
            "removed_short": self.removed_short,
            "removed_excluded": self.removed_excluded,
            "removed_duplicate": self.removed_duplicate,
            "per_year_kept": per_year,
        }


@dataclass(frozen=True)
class RejectedRow:
    row: str
    reason: str
    line: int


@dataclass
class ParsedFile:
    reports: list[Report]
    rejects: list[RejectedRow]


def _normalize_whitespace(text: str) -> str:
    return " ".join(text.split())


def _parse_date(raw: str) -> Optional[dt.date]:
    value = raw.strip()
    if not value or value.upper() == PLACEHOLDER:
        return None
    for fmt, two_digit in (("%m/%d/%Y", False), ("%Y-%m-%d", False), ("%m/%d/%y", True)):
        try:
            parsed = dt.datetime.strptime(value, fmt).date()
        except ValueError:
            continue
        if two_digit and parsed.year < 2000:
            parsed = parsed.replace(year=parsed.year + 100)
        return parsed
    raise DateUnparseable(f"unparseable date: {raw!r}")


def normalize(raw: Mapping[str, str], report_id: str = "r0") -> Report:
    """Map a loose field dict onto a canonical Report.

    Initiator/location strings are matched case-insensitively against the
    synonym tables; dates are tried as MM/DD/YYYY, YYYY-MM-DD, then M/D/YY
    (two-digit years land in 20xx). Missing fields become the N/A placeholder.
    """
    lowered = {k.strip().lower(): v for k, v in raw.items() if v is not None}
    if "description" not in lowered or not str(lowered["description"]).strip():
        raise MissingDescription("report has no description")

    manufacturer = _normalize_whitespace(str(lowered.get("manufacturer", ""))) or PLACEHOLDER

    initiator_raw = _normalize_whitespace(str(lowered.get("initiator", ""))).lower()
    initiator = _INITIATOR_SYNONYMS.get(initiator_raw, Initiator.UNKNOWN)
    if initiator_raw in ("n/a", "na", "unknown", ""):
        initiator = Initiator.UNKNOWN

    location_raw = _normalize_whitespace(str(lowered.get("location", ""))).lower()
    location = _LOCATION_SYNONYMS.get(location_raw, Location.UNKNOWN)

    date = _parse_date(str(lowered.get("date", "")))
    if date is not None and not (EARLIEST_REPORT_DATE <= date <= dt.date.today()):
        raise DateOutOfRange(f"date {date.isoformat()} outside 2014-01-01..today")

    rid = str(lowered.get("id", "")).strip() or report_id
    return Report(
        id=rid,
        manufacturer=manufacturer,
        date=date,
        initiator=initiator,
        location=location,
        description=_normalize_whitespace(str(lowered["description"])),
    )


def _decode(data: bytes) -> str:
    try:
        return data.decode("utf-8-sig")
    except UnicodeDecodeError as exc:
        raise UndecodableFile(str(exc)) from None


def _map_header(header: Sequence[str]) -> dict[int, str]:
    mapping = {}
    for i, col in enumerate(header):
        canon = _FIELD_SYNONYMS.get(col.strip().lower())
        if canon is not None and canon not in mapping.values():
            mapping[i] = canon
    return mapping


def parse_report_file(
    data: bytes,
    format_hint: ReportFormat,
    id_prefix: str = "r",
) -> ParsedFile:
    """Parse one raw file. Unparseable rows land in the rejects list with a
    reason; they are never silently dropped."""
    text = _decode(data)
    if not text.strip():
        raise EmptyFile("file holds no data")
    if format_hint is ReportFormat.CONSOLIDATED_TABLE:
        return _parse_consolidated(text, id_prefix)
    if format_hint is ReportFormat.LEGACY_TABLE:
        return _parse_legacy(text, id_prefix)
    if format_hint is ReportFormat.PLAIN_TEXT:
        return _parse_plain_text(text, id_prefix)
    raise UnknownFormat(f"unsupported format: {format_hint!r}")


def _row_to_report(
    fields: Mapping[str, str], raw_row: str, line: int, rid: str, out: ParsedFile
) -> None:
    try:
        out.reports.append(normalize(fields, report_id=rid))
    except (MissingDescription, DateUnparseable, DateOutOfRange) as exc:
        out.rejects.append(RejectedRow(row=raw_row, reason=type(exc).__name__, line=line))


def _parse_consolidated(text: str, id_prefix: str) -> ParsedFile:
    rows = list(csv.reader(io.StringIO(text)))
    rows = [r for r in rows if any(cell.strip() for cell in r)]
    if not rows:
        raise EmptyFile("no rows")
    header_map = _map_header(rows[0])
    if "description" not in header_map.values():
        raise UnknownFormat("no recognizable description column in header")
    out = ParsedFile(reports=[], rejects=[])
    for line_no, row in enumerate(rows[1:], start=2):
        fields = {name: row[i] if i < len(row) else "" for i, name in header_map.items()}
        _row_to_report(fields, ",".join(row), line_no, f"{id_prefix}{line_no - 1:06d}", out)
    return out


def _parse_legacy(text: str, id_prefix: str) -> ParsedFile:
    out = ParsedFile(reports=[], rejects=[])
    columns = ["manufacturer", "date", "initiator", "location", "description"]
    for line_no, row in enumerate(csv.reader(io.StringIO(text)), start=1):
        if not any(cell.strip() for cell in row):
            continue
        if len(row) < len(columns):
            out.rejects.append(
                RejectedRow(row=",".join(row), reason="TooFewColumns", line=line_no)
            )
            continue
        fields = dict(zip(columns, row))
        _row_to_report(fields, ",".join(row), line_no, f"{id_prefix}{line_no:06d}", out)
    return out


def _parse_plain_text(text: str, id_prefix: str) -> ParsedFile:
    out = ParsedFile(reports=[], rejects=[])
    blocks = [b for b in text.replace("\r\n", "\n").split("\n\n") if b.strip()]
    for i, block in enumerate(blocks, start=1):
        fields: dict[str, str] = {}
        for line in block.splitlines():
            if ":" not in line:
                continue
            key, value = line.split(":", 1)
            fields[key.strip().lower()] = value.strip()
        _row_to_report(fields, block, i, f"{id_prefix}{i:06d}", out)
    return out


def run_text_extractor(command: Sequence[str], path: str | Path) -> bytes:
    """External text-extraction hook: run a configured command on a file and
    capture plain text from its standard output."""
    result = subprocess.run(
        [*command, str(path)], capture_output=True, check=False
    )
    if result.returncode != 0:
        raise IngestError(
            f"text extractor failed ({result.returncode}): {result.stderr.decode(errors='replace')[:200]}"
        )
    return result.stdout


def description_word_count(description: str) -> int:
    # A word is a maximal run of non-whitespace; punctuation stays attached.
    return len(description.split())


def filter_corpus(
    reports: Sequence[Report], policy: FilterPolicy | None = None
) -> tuple[list[Report], FilterLog]:
    """Apply the exclusion, minimum-length, and optional dedup rules.

    Removal precedence: excluded manufacturer > short description > duplicate.
    """
    policy = policy or FilterPolicy()
    excluded = {m.lower() for m in policy.excluded_manufacturers}
    log = FilterLog()
    kept: list[Report] = []
    seen: set[tuple] = set()
    for report in reports:
        if report.manufacturer.lower() in excluded:
            log.removed_excluded += 1
            continue
        if description_word_count(report.description) < policy.min_description_words:
            log.removed_short += 1
            continue
        if policy.dedup_enabled:
            key = (report.manufacturer, report.date, report.initiator, report.description)
            if key in seen:
                log.removed_duplicate += 1
                continue
            seen.add(key)
        kept.append(report)
        log.kept += 1
        log.per_year_kept[report.year] = log.per_year_kept.get(report.year, 0) + 1
    return kept, log


def yearly_counts(corpus: Iterable[Report]) -> dict[Optional[int], int]:
    counts: dict[Optional[int], int] = {}
    for report in corpus:
        counts[report.year] = counts.get(report.year, 0) + 1
    return counts


def write_corpus(path: str | Path, reports: Iterable[Report]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CORPUS_HEADER)
        for r in reports:
            writer.writerow(
                [
                    r.id,
                    r.manufacturer,
                    r.date.isoformat() if r.date else PLACEHOLDER,
                    r.initiator.value,
                    r.location.value,
                    r.description,
                ]
            )


def read_corpus(path: str | Path) -> list[Report]:
    parsed = parse_report_file(Path(path).read_bytes(), ReportFormat.CONSOLIDATED_TABLE)
    if parsed.rejects:
        bad = parsed.rejects[0]
        raise IngestError(f"canonical corpus has invalid row at line {bad.line}: {bad.reason}")
    return parsed.reports


def write_filter_log(path: str | Path, log: FilterLog) -> None:
    Path(path).write_text(json.dumps(log.to_json_dict(), indent=2) + "\n", encoding="utf-8")


@dataclass(frozen=True)
class SourceSpec:
    url: str
    year: Optional[int] = None
    format_hint: ReportFormat = ReportFormat.CONSOLIDATED_TABLE


@dataclass(frozen=True)
class FetchedSource:
    url: str
    year: Optional[int]
    format_hint: ReportFormat
    path: Path
    sha256: str
    from_cache: bool


@dataclass(frozen=True)
class FetchFailure:
    url: str
    year: Optional[int]
    error: str


@dataclass
class FetchResult:
    fetched: list[FetchedSource]
    failures: list[FetchFailure]


def load_manifest(path: str | Path) -> list[SourceSpec]:
    entries = json.loads(Path(path).read_text(encoding="utf-8"))
    specs = []
    for e in entries:
        specs.append(
            SourceSpec(
                url=e["url"],
                year=e.get("year"),
                format_hint=ReportFormat(e.get("format_hint", "ConsolidatedTable")),
            )
        )
    return specs


def fetch_sources(
    manifest: Sequence[SourceSpec], cache_dir: str | Path, timeout: float = 30.0
) -> FetchResult:
    """Fetch every manifest entry into a local cache. The cache is keyed by
    URL digest; a repeated URL is served from cache without re-fetching, and
    the content hash is recorded in the cache index. Per-entry failures are
    reported; only a fully failed manifest raises."""
    if not manifest:
        raise IngestError("empty source manifest")
    cache = Path(cache_dir)
    cache.mkdir(parents=True, exist_ok=True)
    index_path = cache / "index.json"
    index: dict[str, dict] = {}
    if index_path.exists():
        index = json.loads(index_path.read_text(encoding="utf-8"))

    result = FetchResult(fetched=[], failures=[])
    for spec in manifest:
        key = hashlib.sha256(spec.url.encode("utf-8")).hexdigest()[:24]
        entry = index.get(spec.url)
        if entry is not None and (cache / entry["filename"]).exists():
            result.fetched.append(
                FetchedSource(
                    url=spec.url,
                    year=spec.year,
                    format_hint=spec.format_hint,
                    path=cache / entry["filename"],
                    sha256=entry["sha256"],
                    from_cache=True,
                )
            )
            continue
        try:
            with urllib.request.urlopen(spec.url, timeout=timeout) as resp:
                data = resp.read()
        except (urllib.error.URLError, OSError, ValueError) as exc:
            result.failures.append(FetchFailure(url=spec.url, year=spec.year, error=str(exc)))
            continue
        digest = hashlib.sha256(data).hexdigest()
        filename = f"{key}.dat"
        (cache / filename).write_bytes(data)
        index[spec.url] = {"filename": filename, "sha256": digest, "year": spec.year}
        index_path.write_text(json.dumps(index, indent=2, sort_keys=True), encoding="utf-8")
        result.fetched.append(
            FetchedSource(
                url=spec.url,
                year=spec.year,
                format_hint=spec.format_hint,
                path=cache / filename,
                sha256=digest,
                from_cache=False,
            )
        )
    if not result.fetched:
        raise AllSourcesFailed(
            "; ".join(f"{f.url}: {f.error}" for f in result.failures) or "nothing fetched"
        )
    return result
