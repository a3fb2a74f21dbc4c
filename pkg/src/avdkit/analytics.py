"""Corpus analysis: taxonomy counts, contingency tables, Pearson chi-square
independence tests, and visualization-data exports (word cloud, time series,
Sankey flows).

The chi-square tail probability is computed in-repo via the regularized upper
incomplete gamma Q(df/2, x/2), series/continued-fraction split at x = a + 1.
"""

from __future__ import annotations

import csv
import datetime as dt
import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

from .ingest import Initiator, Report
from .labels import CauseCategory, MainGroup
from .stopwords import STOPWORDS
from .tagger import ExtractionRecord


class AnalyticsError(ValueError):
    pass


class NoCauses(AnalyticsError):
    pass


class DegenerateTable(AnalyticsError):
    pass


class Level(enum.Enum):
    MAIN_CATEGORY = "MainCategory"
    SUB_CATEGORY = "SubCategory"


class Granularity(enum.Enum):
    MONTH = "Month"
    QUARTER = "Quarter"
    YEAR = "Year"


MAIN_GROUP_ORDER = [MainGroup.AV_SYSTEM, MainGroup.HUMAN_FACTORS, MainGroup.ENV_OTHERS]
INITIATOR_COLUMNS = [Initiator.AV_SYSTEM, Initiator.TEST_DRIVER]


def sub_row_label(category: CauseCategory) -> str:
    return f"{int(category)} - {category.label}"


@dataclass
class ContingencyTable:
    row_labels: list[str]
    col_labels: list[str]
    counts: list[list[int]]
    n: int
    excluded_unknown: int = 0


@dataclass(frozen=True)
class ChiSquareResult:
    chi2: float
    df: int
    n: int
    p_value: float

    @property
    def p_display(self) -> str:
        if self.p_value < 0.001:
            return "p < 0.001"
        return f"p = {self.p_value:.3g}"

    def to_json_dict(self) -> dict:
        return {
            "chi2": self.chi2,
            "df": self.df,
            "n": self.n,
            "p_value": self.p_value,
            "p_display": self.p_display,
        }


def _gamma_p_series(a: float, x: float) -> float:
    term = 1.0 / a
    total = term
    denom = a
    for _ in range(1000):
        denom += 1.0
        term *= x / denom
        total += term
        if abs(term) < abs(total) * 1e-16:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _gamma_q_continued_fraction(a: float, x: float) -> float:
    # modified Lentz
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b if b != 0 else 1.0 / tiny
    h = d
    for i in range(1, 1000):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            break
    return h * math.exp(-x + a * math.log(x) - math.lgamma(a))


def regularized_gamma_q(a: float, x: float) -> float:
    """Upper regularized incomplete gamma Q(a, x) for a > 0, x >= 0."""
    if a <= 0.0:
        raise ValueError("a must be positive")
    if x < 0.0:
        raise ValueError("x must be non-negative")
    if x == 0.0:
        return 1.0
    if x < a + 1.0:
        return 1.0 - _gamma_p_series(a, x)
    return _gamma_q_continued_fraction(a, x)


def chi_square(table: ContingencyTable) -> ChiSquareResult:
    """Pearson independence test, no continuity correction."""
    counts = table.counts
    rows, cols = len(counts), len(counts[0]) if counts else 0
    if rows < 2 or cols < 2:
        raise DegenerateTable("need at least a 2x2 table")
    row_sums = [sum(row) for row in counts]
    col_sums = [sum(row[j] for row in counts) for j in range(cols)]
    n = sum(row_sums)
    if any(s == 0 for s in row_sums) or any(s == 0 for s in col_sums):
        raise DegenerateTable("zero marginal row or column")
    stat = 0.0
    for i in range(rows):
        for j in range(cols):
            expected = row_sums[i] * col_sums[j] / n
            stat += (counts[i][j] - expected) ** 2 / expected
    df = (rows - 1) * (cols - 1)
    p = regularized_gamma_q(df / 2.0, stat / 2.0)
    return ChiSquareResult(chi2=stat, df=df, n=n, p_value=p)


def build_contingency(
    records: Sequence[ExtractionRecord],
    initiators: Mapping[str, Initiator],
    level: Level = Level.SUB_CATEGORY,
) -> ContingencyTable:
    """Cross-tabulate extracted cause categories against report initiators.
    Reports with Unknown initiator are excluded and tallied."""
    if level is Level.SUB_CATEGORY:
        row_labels = [sub_row_label(c) for c in CauseCategory]
        row_of = {c: i for i, c in enumerate(CauseCategory)}
    else:
        row_labels = [g.value for g in MAIN_GROUP_ORDER]
        row_of = {c: MAIN_GROUP_ORDER.index(c.main_group) for c in CauseCategory}
    col_of = {init: j for j, init in enumerate(INITIATOR_COLUMNS)}
    counts = [[0] * len(INITIATOR_COLUMNS) for _ in row_labels]
    excluded = 0
    total = 0
    for record in records:
        initiator = initiators.get(record.report_id, Initiator.UNKNOWN)
        for span in record.causes:
            if span.category is None:
                continue
            if initiator not in col_of:
                excluded += 1
                continue
            counts[row_of[span.category]][col_of[initiator]] += 1
            total += 1
    if total == 0:
        raise NoCauses("no categorized cause spans with known initiators")
    return ContingencyTable(
        row_labels=row_labels,
        col_labels=[i.value for i in INITIATOR_COLUMNS],
        counts=counts,
        n=total,
        excluded_unknown=excluded,
    )


def fold_to_main(table: ContingencyTable) -> ContingencyTable:
    """Row-fold a SubCategory table into the three main groups."""
    if len(table.counts) != 9:
        raise AnalyticsError("expected a 9-row subcategory table")
    counts = [[0] * len(table.col_labels) for _ in MAIN_GROUP_ORDER]
    for category in CauseCategory:
        target = MAIN_GROUP_ORDER.index(category.main_group)
        for j in range(len(table.col_labels)):
            counts[target][j] += table.counts[int(category)][j]
    return ContingencyTable(
        row_labels=[g.value for g in MAIN_GROUP_ORDER],
        col_labels=list(table.col_labels),
        counts=counts,
        n=table.n,
        excluded_unknown=table.excluded_unknown,
    )


@dataclass
class CauseInventory:
    per_category: dict[CauseCategory, set[str]]

    @property
    def total_unique(self) -> int:
        return sum(len(texts) for texts in self.per_category.values())

    def counts_in_taxonomy_order(self) -> list[tuple[str, int]]:
        return [(sub_row_label(c), len(self.per_category[c])) for c in CauseCategory]


def normalize_cause_text(text: str) -> str:
    return " ".join(text.lower().split())


def cause_inventory(records: Sequence[ExtractionRecord]) -> CauseInventory:
    per_category: dict[CauseCategory, set[str]] = {c: set() for c in CauseCategory}
    for record in records:
        for span in record.causes:
            if span.category is not None:
                per_category[span.category].add(normalize_cause_text(span.text))
    return CauseInventory(per_category=per_category)


def word_frequencies(
    records: Sequence[ExtractionRecord], category: CauseCategory
) -> list[tuple[str, int]]:
    """Word counts over cause spans of one category: lowercased, stopwords and
    bare punctuation dropped, sorted by count descending then alphabetically."""
    counts: dict[str, int] = {}
    for record in records:
        for span in record.causes:
            if span.category is not category:
                continue
            for word in span.text.lower().split():
                if word in STOPWORDS or not any(ch.isalnum() for ch in word):
                    continue
                counts[word] = counts.get(word, 0) + 1
    return sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))


@dataclass
class TimeSeries:
    granularity: Granularity
    points: list[tuple[str, int]]
    unknown_dates_excluded: int


def _period_key(date: dt.date, granularity: Granularity) -> tuple[int, int]:
    if granularity is Granularity.MONTH:
        return (date.year, date.month)
    if granularity is Granularity.QUARTER:
        return (date.year, (date.month - 1) // 3 + 1)
    return (date.year, 0)


def _period_label(key: tuple[int, int], granularity: Granularity) -> str:
    year, sub = key
    if granularity is Granularity.MONTH:
        return f"{year}-{sub:02d}"
    if granularity is Granularity.QUARTER:
        return f"{year}-Q{sub}"
    return str(year)


def _next_period(key: tuple[int, int], granularity: Granularity) -> tuple[int, int]:
    year, sub = key
    if granularity is Granularity.MONTH:
        return (year + 1, 1) if sub == 12 else (year, sub + 1)
    if granularity is Granularity.QUARTER:
        return (year + 1, 1) if sub == 4 else (year, sub + 1)
    return (year + 1, 0)


def time_series(
    corpus: Sequence[Report],
    manufacturer: Optional[str] = None,
    granularity: Granularity = Granularity.MONTH,
) -> TimeSeries:
    """Report counts per period, zero-filled between the first and last
    observation; Unknown dates are excluded and tallied."""
    unknown = 0
    counts: dict[tuple[int, int], int] = {}
    for report in corpus:
        if manufacturer is not None and report.manufacturer != manufacturer:
            continue
        if report.date is None:
            unknown += 1
            continue
        key = _period_key(report.date, granularity)
        counts[key] = counts.get(key, 0) + 1
    if not counts:
        return TimeSeries(granularity=granularity, points=[], unknown_dates_excluded=unknown)
    points = []
    key = min(counts)
    last = max(counts)
    while True:
        points.append((_period_label(key, granularity), counts.get(key, 0)))
        if key == last:
            break
        key = _next_period(key, granularity)
    return TimeSeries(granularity=granularity, points=points, unknown_dates_excluded=unknown)


def top_manufacturers(corpus: Sequence[Report], n: int = 5) -> list[str]:
    counts: dict[str, int] = {}
    for report in corpus:
        counts[report.manufacturer] = counts.get(report.manufacturer, 0) + 1
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return [name for name, _ in ranked[:n]]


@dataclass(frozen=True)
class Flow:
    source: str
    target: str
    value: int


def sankey_flows(
    records: Sequence[ExtractionRecord], initiators: Mapping[str, Initiator]
) -> list[Flow]:
    """Two flow layers sharing the main-category nodes: subcategory -> main
    group and main group -> initiator. Weights are cause counts, so the totals
    into and out of every main node match by construction."""
    sub_to_main: dict[tuple[str, str], int] = {}
    main_to_init: dict[tuple[str, str], int] = {}
    for record in records:
        initiator = initiators.get(record.report_id, Initiator.UNKNOWN)
        if initiator not in INITIATOR_COLUMNS:
            continue
        for span in record.causes:
            if span.category is None:
                continue
            sub = sub_row_label(span.category)
            main = span.category.main_group.value
            init = f"Initiator: {initiator.value}"
            sub_to_main[(sub, main)] = sub_to_main.get((sub, main), 0) + 1
            main_to_init[(main, init)] = main_to_init.get((main, init), 0) + 1
    flows = [Flow(s, t, v) for (s, t), v in sorted(sub_to_main.items())]
    flows += [Flow(s, t, v) for (s, t), v in sorted(main_to_init.items())]
    return flows


def initiator_shares(
    corpus: Sequence[Report], records: Sequence[ExtractionRecord]
) -> dict:
    """Two distinct ratios that are easy to conflate: the share of reports per
    initiator, and the share of categorized causes per initiator."""
    report_counts = {i.value: 0 for i in Initiator}
    for report in corpus:
        report_counts[report.initiator.value] += 1
    initiators = {r.id: r.initiator for r in corpus}
    cause_counts = {i.value: 0 for i in Initiator}
    for record in records:
        initiator = initiators.get(record.report_id, Initiator.UNKNOWN)
        for span in record.causes:
            if span.category is not None:
                cause_counts[initiator.value] += 1

    def shares(counts: dict[str, int]) -> dict:
        total = sum(counts.values())
        return {
            "counts": counts,
            "shares": {k: (v / total if total else 0.0) for k, v in counts.items()},
        }

    return {
        "share_of_reports": shares(report_counts),
        "share_of_categorized_causes": shares(cause_counts),
    }


# ---------------------------------------------------------------------------
# File exports consumed by the UI and external plotting tools
# ---------------------------------------------------------------------------

def _chi_square_pruned(table: ContingencyTable) -> dict:
    # unobserved categories carry no degrees of freedom; drop all-zero rows
    # before testing so sparse corpora still get a result
    keep = [i for i, row in enumerate(table.counts) if any(row)]
    pruned = ContingencyTable(
        row_labels=[table.row_labels[i] for i in keep],
        col_labels=list(table.col_labels),
        counts=[list(table.counts[i]) for i in keep],
        n=table.n,
        excluded_unknown=table.excluded_unknown,
    )
    try:
        payload = chi_square(pruned).to_json_dict()
    except DegenerateTable as exc:
        return {"error": str(exc), "n": table.n}
    payload["rows_tested"] = pruned.row_labels
    return payload


def _write_contingency_csv(path: Path, table: ContingencyTable) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["category", *table.col_labels])
        for label, row in zip(table.row_labels, table.counts):
            writer.writerow([label, *row])


def read_contingency_csv(path: str | Path) -> ContingencyTable:
    with open(path, "r", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    header, data = rows[0], rows[1:]
    counts = [[int(c) for c in row[1:]] for row in data]
    return ContingencyTable(
        row_labels=[row[0] for row in data],
        col_labels=header[1:],
        counts=counts,
        n=sum(sum(row) for row in counts),
    )


def write_analytics_exports(
    out_dir: str | Path,
    records: Sequence[ExtractionRecord],
    corpus: Sequence[Report],
    granularity: Granularity = Granularity.MONTH,
) -> dict[str, Path]:
    """Emit every analysis artifact into out_dir; returns name -> path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    initiators = {r.id: r.initiator for r in corpus}
    written: dict[str, Path] = {}

    sub = build_contingency(records, initiators, Level.SUB_CATEGORY)
    main = build_contingency(records, initiators, Level.MAIN_CATEGORY)
    _write_contingency_csv(out / "contingency_sub.csv", sub)
    _write_contingency_csv(out / "contingency_main.csv", main)
    written["contingency_sub"] = out / "contingency_sub.csv"
    written["contingency_main"] = out / "contingency_main.csv"

    chi = {
        "main": _chi_square_pruned(main),
        "sub": _chi_square_pruned(sub),
    }
    (out / "chi_square.json").write_text(json.dumps(chi, indent=2) + "\n", encoding="utf-8")
    written["chi_square"] = out / "chi_square.json"

    for category in CauseCategory:
        freqs = word_frequencies(records, category)
        payload = [{"word": w, "count": c} for w, c in freqs]
        path = out / f"wordcloud_{int(category)}.json"
        path.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
        written[f"wordcloud_{int(category)}"] = path

    overall = time_series(corpus, granularity=granularity)
    series_payload = {
        "granularity": granularity.value,
        "overall": [{"period": p, "count": c} for p, c in overall.points],
        "unknown_dates_excluded": overall.unknown_dates_excluded,
        "top_manufacturers": {
            name: [
                {"period": p, "count": c}
                for p, c in time_series(corpus, manufacturer=name, granularity=granularity).points
            ]
            for name in top_manufacturers(corpus)
        },
    }
    (out / "timeseries.json").write_text(
        json.dumps(series_payload, indent=2) + "\n", encoding="utf-8"
    )
    written["timeseries"] = out / "timeseries.json"

    flows = sankey_flows(records, initiators)
    sankey_payload = [{"source": f.source, "target": f.target, "value": f.value} for f in flows]
    (out / "sankey.json").write_text(json.dumps(sankey_payload, indent=2) + "\n", encoding="utf-8")
    written["sankey"] = out / "sankey.json"

    inventory = cause_inventory(records)
    inventory_payload = {
        "per_category": {
            label: count for label, count in inventory.counts_in_taxonomy_order()
        },
        "total_unique": inventory.total_unique,
    }
    (out / "cause_inventory.json").write_text(
        json.dumps(inventory_payload, indent=2) + "\n", encoding="utf-8"
    )
    written["cause_inventory"] = out / "cause_inventory.json"

    (out / "initiator_shares.json").write_text(
        json.dumps(initiator_shares(corpus, records), indent=2) + "\n", encoding="utf-8"
    )
    written["initiator_shares"] = out / "initiator_shares.json"
    return written
