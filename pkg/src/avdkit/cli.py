"""Command-line entry points for every pipeline stage.

Exit codes: 0 success, 1 validation failure (bad data or arguments the
domain layer rejected), 2 I/O or config failure. With --json, errors print
as one JSON object on stderr.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import time
from pathlib import Path

from . import analytics as ana
from . import ingest as ing
from .annostore import AnnotationRecord, tokenize
from .config import PipelineConfig
from .evaluation import cross_validate, weighted_f1
from .labels import TagMode, read_sentences, strip_categories, write_sentences
from .tagger import (
    Approach,
    ExternalTagger,
    HttpBackend,
    SpanClassifier,
    SubprocessBackend,
    TaggerModel,
    TrainConfig,
    run_pipeline,
    span_examples_from_corpus,
    train_baseline,
    train_span_classifier,
    write_extractions,
)
from .truth import AggregationConfig, aggregate, write_quality, write_truth


def _emit_error(args, exc: Exception) -> None:
    if getattr(args, "json", False):
        payload = {"error": type(exc).__name__, "message": str(exc)}
        print(json.dumps(payload), file=sys.stderr)
    else:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)


def _config(args) -> PipelineConfig:
    return PipelineConfig.load(getattr(args, "config", None))


def _load_gold(path: str) -> list[tuple[list[str], list[str]]]:
    corpus = []
    for row in read_sentences(path):
        corpus.append((list(row["tokens"]), list(row["tags"])))
    if not corpus:
        raise ValueError(f"no sentences in {path}")
    return corpus


# -- command handlers ---------------------------------------------------------

def cmd_ingest(args) -> int:
    config = _config(args).override(cache_dir=args.cache, raw_corpus_path=args.out)
    manifest = ing.load_manifest(args.manifest)
    result = ing.fetch_sources(manifest, config.cache_dir)
    reports: list[ing.Report] = []
    rejects = []
    for idx, source in enumerate(result.fetched):
        parsed = ing.parse_report_file(
            source.path.read_bytes(), source.format_hint, id_prefix=f"s{idx:02d}-"
        )
        reports.extend(parsed.reports)
        rejects.extend(
            {"source": source.url, "line": r.line, "reason": r.reason, "row": r.row}
            for r in parsed.rejects
        )
    ing.write_corpus(config.raw_corpus_path, reports)
    Path(config.rejects_path).write_text(
        json.dumps(
            {
                "rejects": rejects,
                "fetch_failures": [
                    {"url": f.url, "year": f.year, "error": f.error} for f in result.failures
                ],
            },
            indent=2,
        )
        + "\n",
        encoding="utf-8",
    )
    print(f"ingested {len(reports)} reports from {len(result.fetched)} sources "
          f"({len(rejects)} rejects, {len(result.failures)} fetch failures)")
    return 0


def cmd_filter(args) -> int:
    config = _config(args)
    source = args.input or config.raw_corpus_path
    policy = ing.FilterPolicy(
        min_description_words=(
            args.min_words if args.min_words is not None else config.min_description_words
        ),
        excluded_manufacturers=frozenset(
            args.exclude if args.exclude else config.excluded_manufacturers
        ),
        dedup_enabled=args.dedup or config.dedup_enabled,
    )
    reports = ing.read_corpus(source)
    kept, log = ing.filter_corpus(reports, policy)
    ing.write_corpus(args.out or config.corpus_path, kept)
    ing.write_filter_log(args.log or config.filter_log_path, log)
    print(f"kept {log.kept} of {len(reports)} reports "
          f"(excluded {log.removed_excluded}, short {log.removed_short}, "
          f"duplicate {log.removed_duplicate})")
    return 0


def cmd_annotate_export(args) -> int:
    config = _config(args)
    reports = ing.read_corpus(args.corpus or config.corpus_path)
    rows = [
        {"report_id": r.id, "tokens": tokenize(r.description)}
        for r in reports
    ]
    write_sentences(args.out or config.tasks_path, rows)
    print(f"exported {len(rows)} annotation tasks")
    return 0


def cmd_aggregate(args) -> int:
    config = _config(args)
    records = [
        AnnotationRecord.from_json_dict(row)
        for row in read_sentences(args.annotations or config.annotations_log)
    ]
    result = aggregate(
        records, AggregationConfig(max_iter=args.max_iter, epsilon=args.epsilon)
    )
    write_truth(args.out_truth or config.truth_path, result, records)
    write_quality(args.out_quality or config.quality_path, result)
    print(f"aggregated {len(records)} records over {len(result.ground_truth)} units "
          f"(converged={result.converged} after {result.iterations} iterations)")
    return 0


def cmd_train(args) -> int:
    config = _config(args)
    seed = args.seed if args.seed is not None else config.seed
    epochs = args.epochs if args.epochs is not None else config.epochs
    gold = _load_gold(args.gold or config.truth_path)
    approach = Approach(args.approach)
    if approach is Approach.CHAINED:
        base = [(tokens, strip_categories(tags)) for tokens, tags in gold]
        model = train_baseline(base, TrainConfig(epochs=epochs, seed=seed, tag_mode=TagMode.BASE7))
        model.save(args.out or config.model_path)
        examples = span_examples_from_corpus(gold)
        classifier = train_span_classifier(examples, TrainConfig(epochs=epochs, seed=seed))
        classifier.save(args.span_out or config.span_model_path)
        print(f"trained Base7 tagger on {len(gold)} sentences and span classifier "
              f"on {len(examples)} spans (seed={seed})")
    else:
        model = train_baseline(
            gold, TrainConfig(epochs=epochs, seed=seed, tag_mode=TagMode.COMBINED55)
        )
        model.save(args.out or config.model_path)
        print(f"trained Combined55 tagger on {len(gold)} sentences (seed={seed})")
    return 0


def _make_tagger(args, config: PipelineConfig):
    if args.backend_url or config.backend_url:
        url = args.backend_url or config.backend_url
        mode = TagMode(args.tag_mode or config.tag_mode)
        return ExternalTagger(HttpBackend(url, mode), mode)
    if args.backend_cmd or config.backend_command:
        command = args.backend_cmd.split() if args.backend_cmd else config.backend_command
        mode = TagMode(args.tag_mode or config.tag_mode)
        return ExternalTagger(SubprocessBackend(command, mode), mode)
    return TaggerModel.load(args.model or config.model_path)


def cmd_predict(args) -> int:
    config = _config(args)
    tagger = _make_tagger(args, config)
    sentences = [(row["report_id"], list(row["tokens"])) for row in read_sentences(args.input)]
    rows = []
    for report_id, tokens in sentences:
        tags = tagger.predict(tokens)
        rows.append({"report_id": report_id, "tokens": tokens, "tags": tags})
    write_sentences(args.out or config.predictions_path, rows)
    if args.records:
        if tagger.tag_mode is TagMode.BASE7:
            classifier = SpanClassifier.load(args.span_model or config.span_model_path)
            records = run_pipeline(Approach.CHAINED, sentences, tagger, classifier)
        else:
            records = run_pipeline(Approach.END_TO_END, sentences, tagger)
        write_extractions(args.records, records)
    repaired = getattr(tagger, "repairs_applied", 0)
    print(f"tagged {len(rows)} sentences ({repaired} IOB repairs applied)")
    return 0


def cmd_evaluate(args) -> int:
    config = _config(args)
    gold_rows = {row["report_id"]: row for row in read_sentences(args.gold)}
    pred_rows = {row["report_id"]: row for row in read_sentences(args.pred)}
    missing = sorted(set(gold_rows) ^ set(pred_rows))
    if missing:
        raise ValueError(f"gold/pred report ids differ, e.g. {missing[:3]}")
    ids = sorted(gold_rows)
    report = weighted_f1(
        [gold_rows[i]["tags"] for i in ids], [pred_rows[i]["tags"] for i in ids]
    )
    payload = report.to_json_dict()
    Path(args.out or config.eval_path).write_text(
        json.dumps(payload, indent=2) + "\n", encoding="utf-8"
    )
    print(f"weighted F1 = {report.weighted_f1:.4f} over {len(ids)} sentences")
    return 0


def cmd_cross_validate(args) -> int:
    config = _config(args)
    seed = args.seed if args.seed is not None else config.seed
    epochs = args.epochs if args.epochs is not None else config.epochs
    mode = TagMode(args.tag_mode or config.tag_mode)
    gold = _load_gold(args.gold or config.truth_path)
    if mode is TagMode.BASE7:
        gold = [(tokens, strip_categories(tags)) for tokens, tags in gold]

    def trainer(train):
        return train_baseline(train, TrainConfig(epochs=epochs, seed=seed, tag_mode=mode))

    result = cross_validate(trainer, gold, k=args.k, seed=seed)
    payload = result.to_json_dict()
    payload["meta"] = {"seed": seed, "tag_mode": mode.value, "epochs": epochs, "k": args.k}
    Path(args.out or config.cv_path).write_text(
        json.dumps(payload, indent=2) + "\n", encoding="utf-8"
    )
    table_path = Path(args.table or config.cv_table_path)
    minutes, seconds = divmod(result.total_training_time, 60)
    with open(table_path, "w", encoding="utf-8") as fh:
        fh.write("model\tweighted_f1\ttraining_time\n")
        fh.write(
            f"baseline-perceptron ({mode.value})\t{result.mean_weighted_f1:.4f}\t"
            f"{int(minutes)}min {seconds:.0f}s\n"
        )
    print(f"mean weighted F1 = {result.mean_weighted_f1:.4f} over {args.k} folds "
          f"({result.total_training_time:.1f}s training)")
    return 0


def cmd_analyze(args) -> int:
    config = _config(args)
    from .tagger import read_extractions

    records = read_extractions(args.records or config.extractions_path)
    corpus = ing.read_corpus(args.corpus or config.corpus_path)
    written = ana.write_analytics_exports(
        args.out_dir or config.analytics_dir,
        records,
        corpus,
        granularity=ana.Granularity(args.granularity),
    )
    print(f"wrote {len(written)} analytics artifacts to {args.out_dir or config.analytics_dir}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app, store_from_corpus

    config = _config(args)
    store, descriptions = store_from_corpus(
        args.corpus or config.corpus_path,
        args.annotations or config.annotations_log,
        workers=config.workers,
        redundancy=args.redundancy if args.redundancy is not None else config.redundancy,
    )
    app = create_app(
        store,
        descriptions=descriptions,
        analytics_dir=args.analytics_dir or config.analytics_dir,
        quality_path=config.quality_path,
        cors_origins=config.cors_origins,
    )
    port = args.port if args.port is not None else config.port
    uvicorn.run(app, host=config.host, port=port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="avdkit",
        description="Disengagement-report pipeline: ingest, annotate, aggregate, "
        "train, extract, analyze, serve.",
    )
    parser.add_argument("--config", help="JSON config file; flags override it")
    parser.add_argument("--json", action="store_true", help="machine-readable errors on stderr")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("ingest", help="fetch sources and build the raw corpus")
    p.add_argument("--manifest", required=True, help="JSON array of {url, year, format_hint}")
    p.add_argument("--cache", help="download cache directory")
    p.add_argument("--out", help="raw corpus CSV path")
    p.set_defaults(handler=cmd_ingest)

    p = sub.add_parser("filter", help="apply the filtering rules to a corpus")
    p.add_argument("--in", dest="input", help="raw corpus CSV")
    p.add_argument("--out", help="filtered corpus CSV")
    p.add_argument("--log", help="filter log JSON")
    p.add_argument("--min-words", type=int, default=None)
    p.add_argument("--exclude", action="append", help="manufacturer to exclude (repeatable)")
    p.add_argument("--dedup", action="store_true")
    p.set_defaults(handler=cmd_filter)

    p = sub.add_parser("annotate-export", help="export tokenized annotation tasks")
    p.add_argument("--corpus", help="filtered corpus CSV")
    p.add_argument("--out", help="tasks JSONL")
    p.set_defaults(handler=cmd_annotate_export)

    p = sub.add_parser("aggregate", help="aggregate worker annotations into ground truth")
    p.add_argument("--annotations", help="annotation log JSONL")
    p.add_argument("--out-truth", help="ground truth JSONL")
    p.add_argument("--out-quality", help="quality scores JSON")
    p.add_argument("--max-iter", type=int, default=50)
    p.add_argument("--epsilon", type=float, default=1e-6)
    p.set_defaults(handler=cmd_aggregate)

    p = sub.add_parser("train", help="train the baseline models")
    p.add_argument("--gold", help="gold sentences JSONL (combined tags)")
    p.add_argument("--approach", choices=[a.value for a in Approach], default="EndToEnd")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", help="tagger model path")
    p.add_argument("--span-out", help="span classifier path (Chained)")
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("predict", help="tag sentences with a model or backend")
    p.add_argument("--in", dest="input", required=True, help="sentences JSONL")
    p.add_argument("--model", help="baseline model path")
    p.add_argument("--span-model", help="span classifier path (chained extraction)")
    p.add_argument("--backend-cmd", help="external backend command line")
    p.add_argument("--backend-url", help="external backend base URL")
    p.add_argument("--tag-mode", choices=[m.value for m in TagMode])
    p.add_argument("--out", help="predictions JSONL")
    p.add_argument("--records", help="also write extraction records JSONL here")
    p.set_defaults(handler=cmd_predict)

    p = sub.add_parser("evaluate", help="score predictions against gold")
    p.add_argument("--gold", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--out", help="eval report JSON")
    p.set_defaults(handler=cmd_evaluate)

    p = sub.add_parser("cross-validate", help="stratified k-fold cross-validation")
    p.add_argument("--gold", help="gold sentences JSONL")
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--tag-mode", choices=[m.value for m in TagMode])
    p.add_argument("--out", help="cross-validation JSON")
    p.add_argument("--table", help="summary table (TSV)")
    p.set_defaults(handler=cmd_cross_validate)

    p = sub.add_parser("analyze", help="emit all analytics exports")
    p.add_argument("--records", help="extraction records JSONL")
    p.add_argument("--corpus", help="filtered corpus CSV")
    p.add_argument("--out-dir", help="analytics output directory")
    p.add_argument("--granularity", choices=[g.value for g in ana.Granularity], default="Month")
    p.set_defaults(handler=cmd_analyze)

    p = sub.add_parser("serve", help="host the annotation API and analytics endpoints")
    p.add_argument("--corpus", help="filtered corpus CSV")
    p.add_argument("--annotations", help="annotation log JSONL")
    p.add_argument("--analytics-dir", help="directory of analytics exports")
    p.add_argument("--port", type=int, default=None)
    p.add_argument("--redundancy", type=int, default=None)
    p.set_defaults(handler=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not hasattr(args, "handler"):
        parser.print_help()
        return 2
    try:
        return args.handler(args)
    except json.JSONDecodeError as exc:
        _emit_error(args, exc)
        return 2
    except OSError as exc:
        _emit_error(args, exc)
        return 2
    except ValueError as exc:
        _emit_error(args, exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
