import datetime as dt
import re

import pytest
from hypothesis import given, settings
import hypothesis.strategies as st

from avdkit.ingest import (
    AllSourcesFailed,
    EmptyFile,
    FilterPolicy,
    Initiator,
    Location,
    MissingDescription,
    Report,
    ReportFormat,
    SourceSpec,
    UndecodableFile,
    UnknownFormat,
    description_word_count,
    fetch_sources,
    filter_corpus,
    normalize,
    parse_report_file,
    read_corpus,
    write_corpus,
    yearly_counts,
)

# The six sample rows of the consolidated release format.
SAMPLE_ROWS = [
    ("EasyMile", "11/30/2020", "AV System", "Street",
     "A collision hazard in the environment ahead was detected by the software, "
     "which triggered an emergency stop"),
    ("Apple", "06/19/2019", "AV System", "Street", "Motion planning timed out"),
    ("Uber", "03/01/2018", "Test Driver", "Street",
     "Precautionary Takeover or Operator Discretion"),
    ("Waymo", "09/01/2017", "N/A", "Highway", "Disengage for a software discrepancy"),
    ("Tesla", "10/15/2016", "AV System", "Freeway", "Follower Output Invalid"),
    ("Volkswagen", "06/12/2015", "N/A", "N/A", "Planner not ready"),
]


def sample_csv() -> bytes:
    lines = ["manufacturer,date,initiator,location,description"]
    for man, date, init, loc, desc in SAMPLE_ROWS:
        lines.append(f'{man},{date},{init},{loc},"{desc}"')
    return ("\n".join(lines) + "\n").encode("utf-8")


def test_parse_consolidated_sample():
    parsed = parse_report_file(sample_csv(), ReportFormat.CONSOLIDATED_TABLE)
    assert len(parsed.reports) == 6
    assert parsed.rejects == []
    first = parsed.reports[0]
    assert first.manufacturer == "EasyMile"
    assert first.date == dt.date(2020, 11, 30)
    assert first.initiator is Initiator.AV_SYSTEM
    assert first.location is Location.STREET
    ids = [r.id for r in parsed.reports]
    assert len(set(ids)) == 6


def test_parse_header_only():
    parsed = parse_report_file(
        b"manufacturer,date,initiator,location,description\n",
        ReportFormat.CONSOLIDATED_TABLE,
    )
    assert parsed.reports == []
    assert parsed.rejects == []


def test_parse_bad_date_rejected():
    data = (
        b"manufacturer,date,initiator,location,description\n"
        b"Acme,13/45/2020,AV System,Street,some long enough description here\n"
    )
    parsed = parse_report_file(data, ReportFormat.CONSOLIDATED_TABLE)
    assert parsed.reports == []
    assert len(parsed.rejects) == 1
    assert parsed.rejects[0].reason == "DateUnparseable"


def test_parse_missing_description_rejected():
    data = (
        b"manufacturer,date,initiator,location,description\n"
        b"Acme,01/02/2020,AV System,Street,\n"
    )
    parsed = parse_report_file(data, ReportFormat.CONSOLIDATED_TABLE)
    assert [r.reason for r in parsed.rejects] == ["MissingDescription"]


def test_parse_errors():
    with pytest.raises(UndecodableFile):
        parse_report_file(b"\xff\xfe\x00ab", ReportFormat.CONSOLIDATED_TABLE)
    with pytest.raises(EmptyFile):
        parse_report_file(b"   \n ", ReportFormat.CONSOLIDATED_TABLE)
    with pytest.raises(UnknownFormat):
        parse_report_file(b"a,b\n1,2\n", ReportFormat.CONSOLIDATED_TABLE)


def test_parse_bom_tolerated():
    data = b"\xef\xbb\xbf" + sample_csv()
    parsed = parse_report_file(data, ReportFormat.CONSOLIDATED_TABLE)
    assert len(parsed.reports) == 6


def test_parse_legacy_table():
    data = b'Acme,06/12/2015,Test Driver,Street,"Planner was not ready at all"\n'
    parsed = parse_report_file(data, ReportFormat.LEGACY_TABLE)
    assert len(parsed.reports) == 1
    assert parsed.reports[0].initiator is Initiator.TEST_DRIVER


def test_parse_plain_text_blocks():
    data = (
        "Manufacturer: Acme\nDate: 06/12/2015\nInitiator: AV System\n"
        "Location: Highway\nDescription: something went quite wrong today\n"
        "\n"
        "Manufacturer: Other\nDescription: a second report with enough words\n"
    ).encode()
    parsed = parse_report_file(data, ReportFormat.PLAIN_TEXT)
    assert len(parsed.reports) == 2
    assert parsed.reports[1].date is None


def test_normalize_placeholders():
    report = normalize(
        {"manufacturer": "Volkswagen", "date": "06/12/2015", "initiator": "N/A",
         "location": "N/A", "description": "Planner not ready"}
    )
    assert report.initiator is Initiator.UNKNOWN
    assert report.location is Location.UNKNOWN


def test_normalize_case_insensitive_initiator():
    report = normalize({"initiator": "test driver", "description": "x y z"})
    assert report.initiator is Initiator.TEST_DRIVER
    report = normalize({"initiator": "Test Operator", "description": "x y z"})
    assert report.initiator is Initiator.TEST_DRIVER


def test_normalize_date_formats():
    assert normalize({"date": "06/19/2019", "description": "d"}).date == dt.date(2019, 6, 19)
    assert normalize({"date": "2019-06-19", "description": "d"}).date == dt.date(2019, 6, 19)
    assert normalize({"date": "6/9/19", "description": "d"}).date == dt.date(2019, 6, 9)


def test_normalize_requires_description():
    with pytest.raises(MissingDescription):
        normalize({"manufacturer": "Acme"})


def make_corpus() -> list[Report]:
    return parse_report_file(sample_csv(), ReportFormat.CONSOLIDATED_TABLE).reports


def test_filter_defaults_match_hand_counts():
    corpus = make_corpus()
    kept, log = filter_corpus(corpus)
    # Apple + Uber rows excluded; Volkswagen (3 words) and Tesla (3 words) short.
    assert log.removed_excluded == 2
    assert log.removed_short == 2
    assert log.removed_duplicate == 0
    assert log.kept == 2
    assert {r.manufacturer for r in kept} == {"EasyMile", "Waymo"}
    assert log.kept + log.removed_excluded + log.removed_short + log.removed_duplicate == len(corpus)


def test_filter_precedence_excluded_over_short():
    corpus = [
        Report(id="a", manufacturer="Apple", date=None, initiator=Initiator.UNKNOWN,
               location=Location.UNKNOWN, description="too short"),
    ]
    _, log = filter_corpus(corpus)
    assert log.removed_excluded == 1
    assert log.removed_short == 0


def test_filter_dedup():
    base = make_corpus()[0]
    dup = Report(id="z", manufacturer=base.manufacturer, date=base.date,
                 initiator=base.initiator, location=base.location,
                 description=base.description)
    kept, log = filter_corpus([base, dup], FilterPolicy(dedup_enabled=True))
    assert log.removed_duplicate == 1
    assert len(kept) == 1


def test_filter_idempotent():
    corpus = make_corpus()
    kept, _ = filter_corpus(corpus)
    again, log = filter_corpus(kept)
    assert again == kept
    assert log.removed_excluded == log.removed_short == log.removed_duplicate == 0


def test_filter_log_year_partition():
    corpus = make_corpus()
    kept, log = filter_corpus(corpus)
    assert sum(log.per_year_kept.values()) == log.kept
    assert log.per_year_kept == yearly_counts(kept)


def test_yearly_counts():
    assert yearly_counts([]) == {}
    reports = [
        normalize({"date": "01/01/2020", "description": "a"}, report_id=str(i))
        for i in range(3)
    ] + [normalize({"date": "01/01/2019", "description": "a"}, report_id="x")]
    assert yearly_counts(reports) == {2020: 3, 2019: 1}


def test_corpus_round_trip(tmp_path):
    corpus = make_corpus()
    path = tmp_path / "corpus.csv"
    write_corpus(path, corpus)
    again = read_corpus(path)
    assert again == corpus
    # serialize -> parse -> serialize is byte identical
    path2 = tmp_path / "corpus2.csv"
    write_corpus(path2, again)
    assert path.read_bytes() == path2.read_bytes()


@given(st.text(alphabet=st.characters(blacklist_categories=("Cs",)), max_size=200))
@settings(max_examples=200)
def test_word_count_matches_independent_splitter(text):
    assert description_word_count(text) == len(re.findall(r"\S+", text))


def test_text_extractor_hook(tmp_path):
    import sys

    from avdkit.ingest import IngestError, run_text_extractor

    source = tmp_path / "scan.dat"
    source.write_text("Manufacturer: Acme\nDescription: extracted text with five words\n")
    out = run_text_extractor([sys.executable, "-c",
                              "import sys; sys.stdout.write(open(sys.argv[1]).read())"],
                             source)
    parsed = parse_report_file(out, ReportFormat.PLAIN_TEXT)
    assert len(parsed.reports) == 1
    with pytest.raises(IngestError):
        run_text_extractor([sys.executable, "-c", "raise SystemExit(3)"], source)


def test_fetch_sources_cache_and_partial_failure(tmp_path):
    src = tmp_path / "a.csv"
    src.write_bytes(sample_csv())
    live = src.as_uri()
    dead = (tmp_path / "missing.csv").as_uri()
    cache = tmp_path / "cache"

    result = fetch_sources([SourceSpec(url=live, year=2020)], cache)
    assert len(result.fetched) == 1 and not result.fetched[0].from_cache
    assert result.failures == []

    # same URL again: served from cache
    result2 = fetch_sources([SourceSpec(url=live, year=2020)], cache)
    assert result2.fetched[0].from_cache
    assert result2.fetched[0].sha256 == result.fetched[0].sha256

    # one dead + one live: partial failure reported, fetch still succeeds
    result3 = fetch_sources([SourceSpec(url=dead), SourceSpec(url=live)], cache)
    assert len(result3.fetched) == 1
    assert len(result3.failures) == 1
    assert result3.failures[0].url == dead

    with pytest.raises(AllSourcesFailed):
        fetch_sources([SourceSpec(url=dead)], cache)
