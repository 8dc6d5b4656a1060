"""Command-line entry point.

Exit codes: 0 success, 1 user error (bad arguments, config or input files),
2 environment or transport error (network, API, disk).
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .anomaly import AnomalyParams, detect_anomalies, pooled_positive_rate, positive_rate, zscore_series
from .core import ONE_DAY, SignalError, export_plot, idxmax, to_row_table, to_tick
from .dataset import (
    ArchiveError,
    BuildError,
    ConfigError,
    build_dataset,
    cached_load,
    load_config,
    save_dataset,
    sources_from_config,
)
from .dataset.build import FEED_NAME
from .sources.http import HttpClient, SourceError
from .sources.sparql import EntityRecord, run_sparql
from .summarize import centroid_select
from .tasks import (
    TaskError,
    Vocabulary,
    audit_vocabulary,
    balance_sample,
    build_vocab_from_examples,
    chrono_split,
    evaluate,
    featurize_many,
    format_table,
    load_model,
    make_examples,
    predict,
    random_target,
    random_uniform,
    read_examples,
    save_model,
    train_forest,
    write_examples,
)
from .tasks.examples import TaskSplits, write_split_manifest

log = logging.getLogger("textsignals")

EXIT_OK, EXIT_USER, EXIT_ENV = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; usage errors are user errors here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USER, f"{self.prog}: error: {message}\n")


def _emit(args, payload, text: str) -> None:
    if args.json:
        print(json.dumps(payload, indent=2, sort_keys=True, default=str))
    elif not args.quiet:
        print(text)


def _http(args) -> HttpClient:
    return HttpClient(cache_dir=args.cache_dir, seed=args.seed)


def _load(args):
    return cached_load(args.dataset, args.cache_dir, http=_http(args))


def _signal(ds, qid: str | None):
    if qid is None:
        if len(ds) != 1:
            raise UsageError(f"dataset has {len(ds)} signals; pass --qid (one of {', '.join(ds.signals)})")
        return next(iter(ds))
    if qid not in ds.signals:
        raise UsageError(f"no signal {qid!r} in dataset (have {', '.join(ds.signals)})")
    return ds[qid]


def _window(signal, args):
    if args.start or args.end:
        return signal.slice(args.start or signal.start, args.end or signal.end)
    return signal


# ---------------------------------------------------------------------------
# subcommands


def cmd_fetch_entities(args) -> int:
    if bool(args.sparql) == bool(args.qids):
        raise UsageError("pass exactly one of --sparql FILE or --qids LIST")
    if args.qids:
        records = [EntityRecord(q.strip(), q.strip()) for q in args.qids.split(",") if q.strip()]
    else:
        query = Path(args.sparql).read_text(encoding="utf-8")
        records = run_sparql(args.endpoint, query, http=_http(args), qid_var=args.qid_var,
                             label_var=args.label_var, article_var=args.article_var)
    with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_dict(), ensure_ascii=False, sort_keys=True) + "\n")
    _emit(args, [r.to_dict() for r in records], f"wrote {len(records)} entities to {args.out}")
    return EXIT_OK


def cmd_build_dataset(args) -> int:
    config = load_config(args.config)
    http = _http(args)
    sources = sources_from_config(config, http)
    ds = build_dataset(config, sources, jobs=args.jobs, strict=args.strict, built_at=args.built_at)
    out = Path(args.out) if args.out else config.output
    save_dataset(ds, out)
    rows = []
    for signal in ds:
        row = {"qid": signal.id, "name": signal.name, "ticks": len(signal.ticks),
               "stories": sum(len(b) for b in signal.feeds[FEED_NAME].buckets.values())}
        for name, ts in signal.series.items():
            row[name] = float(ts.values.sum())
        rows.append(row)
    lines = [f"dataset {ds.name!r}: {len(ds)} signals, {ds.start} to {ds.end} -> {out}"]
    for row in rows:
        extras = "  ".join(f"{k}={v:g}" for k, v in row.items() if k not in ("qid", "name", "ticks", "stories"))
        lines.append(f"  {row['qid']:<10} {row['name'][:24]:<24} ticks={row['ticks']} "
                     f"stories={row['stories']}  {extras}")
    if ds.warnings:
        lines.append(f"{len(ds.warnings)} warning(s):")
        lines.extend(f"  {w}" for w in ds.warnings)
    _emit(args, {"output": str(out), "signals": rows, "warnings": ds.warnings}, "\n".join(lines))
    return EXIT_OK


def cmd_make_task(args) -> int:
    ds = _load(args)
    params = AnomalyParams(args.threshold)
    examples = make_examples(ds, args.target, params, horizon=args.horizon)
    splits = chrono_split(examples, args.train, args.val, args.test, per_entity=args.per_entity)
    splits.check_order()
    sample = balance_sample(splits.train, args.n_pos, args.n_neg, seed=args.seed)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_examples(sample.examples, out / "train.jsonl")
    write_examples(splits.val, out / "val.jsonl")
    write_examples(splits.test, out / "test.jsonl")
    anomalies = [detect_anomalies(s.series[args.target], params) for s in ds]
    per_signal = {s.id: positive_rate(a) for s, a in zip(ds, anomalies)}
    manifest = {
        "dataset": ds.name, "target": args.target, "threshold": args.threshold, "horizon": args.horizon,
        "seed": args.seed, "sampling": sample.stats,
        "positive_rate": {"pooled": pooled_positive_rate(anomalies), "per_signal": per_signal},
    }
    write_split_manifest(splits, out / "manifest.json", **manifest)
    for name in ("positive", "negative"):
        if sample.stats.get(f"{name}_with_replacement") and sample.stats[f"{name}_requested"]:
            log.warning("%s pool (%d) smaller than requested %d; sampled with replacement",
                        name, sample.stats[f"{name}_pool"], sample.stats[f"{name}_requested"])
    text = (f"train={len(sample)} (balanced) val={len(splits.val)} test={len(splits.test)} "
            f"cuts={splits.val_start}/{splits.test_start} pooled positive rate="
            f"{manifest['positive_rate']['pooled']:.4f} -> {out}")
    _emit(args, splits.manifest() | manifest, text)
    return EXIT_OK


def cmd_train_rf(args) -> int:
    task = Path(args.task_dir)
    train = read_examples(task / "train.jsonl")
    vocab = build_vocab_from_examples(train, args.vocab_size)
    manifest_path = task / "manifest.json"
    if manifest_path.exists():
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
        if manifest.get("val_start"):
            audit_vocabulary(vocab, TaskSplits([], [], [], val_start=to_tick(manifest["val_start"])))
    X = featurize_many([e.text for e in train], vocab)
    model = train_forest(X, [e.label for e in train], n_trees=args.n_trees, max_depth=args.max_depth,
                         seed=args.seed, n_jobs=args.jobs)
    save_model(model, args.out, vocabulary=vocab.to_dict())
    depth = max((t.depth for t in model.trees), default=0)
    _emit(args, {"model": args.out, "n_trees": model.n_trees, "vocabulary": len(vocab), "max_tree_depth": depth},
          f"trained {model.n_trees} trees (max depth {depth}) on {len(train)} examples, "
          f"vocabulary {len(vocab)} -> {args.out}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    model, extra = load_model(args.model)
    vocab = Vocabulary.from_dict(extra["vocabulary"])
    examples = read_examples(Path(args.task_dir) / f"{args.split}.jsonl")
    if not examples:
        raise UsageError(f"split {args.split!r} is empty")
    gold = [e.label for e in examples]
    base_rate = sum(gold) / len(gold)
    rows = {
        "Random - uniform": evaluate(random_uniform(len(gold), args.seed), gold),
        "Random - target": evaluate(random_target(len(gold), base_rate, args.seed), gold),
        "Sparse + RF": evaluate(predict(model, featurize_many([e.text for e in examples], vocab), vote=args.vote),
                                gold),
    }
    report = {"split": args.split, "n": len(gold), "base_rate": base_rate, "vote": args.vote,
              "rows": {name: r.to_dict() for name, r in rows.items()}}
    if args.out:
        Path(args.out).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    _emit(args, report, format_table(rows))
    return EXIT_OK


def cmd_summarize(args) -> int:
    ds = _load(args)
    signals = [_signal(ds, args.qid)] if args.qid else list(ds)
    lines = []
    for signal in signals:
        signal = _window(signal, args)
        feed = signal.feeds[args.feed]
        for tick, docs in feed.buckets.items():
            if not docs:
                continue
            try:
                sentences = centroid_select(docs, k=args.k)
            except ValueError:
                continue
            lines.append(json.dumps({"qid": signal.id, "date": tick.isoformat(), "sentences": sentences},
                                    ensure_ascii=False))
    text = "".join(line + "\n" for line in lines)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_plot(args) -> int:
    ds = _load(args)
    signal = _window(_signal(ds, args.qid), args)
    csv_path, svg_path = export_plot(signal, args.out_dir)
    _emit(args, {"csv": str(csv_path), "svg": str(svg_path)}, f"wrote {csv_path} and {svg_path}")
    return EXIT_OK


def cmd_inspect(args) -> int:
    ds = _load(args)
    signal = _signal(ds, args.qid)
    if args.top_anomaly:
        if args.series not in signal.series:
            raise UsageError(f"signal {signal.id} has no series {args.series!r}")
        z = zscore_series(_window(signal, args).series[args.series])
        top = idxmax(z)
        signal = signal.slice(top, top + ONE_DAY)
    else:
        signal = _window(signal, args)
    table = to_row_table(signal)
    payload = []
    lines = []
    for tick, values, feeds in table.rows:
        titles = {name: [d.title for d in docs] for name, docs in feeds.items()}
        payload.append({"date": tick.isoformat(), **values, **titles})
        head = "  ".join(f"{k}={v:g}" for k, v in values.items())
        lines.append(f"{tick}  {head}")
        for name, ts in titles.items():
            lines.extend(f"    [{name}] {t}" for t in ts)
    if args.top_anomaly:
        lines.insert(0, f"top anomaly for {signal.id} ({signal.name}) by {args.series} z-score:")
    _emit(args, payload, "\n".join(lines))
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    common.add_argument("--cache-dir", default=None, help="HTTP and dataset cache directory "
                        "(default $NEWS_SIGNALS_CACHE_DIR)")
    common.add_argument("--quiet", action="store_true", help="only print errors")
    common.add_argument("--json", action="store_true", help="machine-readable output")
    common.add_argument("--jobs", type=int, default=4, help="parallel workers (default 4)")

    parser = _Parser(prog="textsignals", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fetch-entities", parents=[common], help="resolve an entity set to JSONL")
    p.add_argument("--sparql", metavar="FILE", help="SPARQL query file")
    p.add_argument("--qids", metavar="LIST", help="comma-separated QIDs")
    p.add_argument("--endpoint", default=None, help="SPARQL endpoint (default $SPARQL_ENDPOINT or Wikidata)")
    p.add_argument("--qid-var", default="item")
    p.add_argument("--label-var", default="itemLabel")
    p.add_argument("--article-var", default="article")
    p.add_argument("--out", required=True, metavar="FILE")
    p.set_defaults(func=cmd_fetch_entities)

    p = sub.add_parser("build-dataset", parents=[common], help="build and save a dataset from a YAML config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None, help="archive path (overrides the config's output)")
    p.add_argument("--strict", action="store_true", help="fail on any per-entity fetch error")
    p.add_argument("--built-at", default=None, help="pin the archive's built_at timestamp")
    p.set_defaults(func=cmd_build_dataset)

    p = sub.add_parser("make-task", parents=[common], help="create anomaly-classification splits")
    p.add_argument("--dataset", required=True, help="archive path, directory or URL")
    p.add_argument("--target", default="news_volume")
    p.add_argument("--threshold", type=float, default=3.0, help="z-score threshold (default 3)")
    p.add_argument("--horizon", type=int, default=0, help="label offset in days")
    p.add_argument("--train", type=float, default=0.8)
    p.add_argument("--val", type=float, default=0.1)
    p.add_argument("--test", type=float, default=0.1)
    p.add_argument("--per-entity", action="store_true", help="separate cut dates per entity")
    p.add_argument("--n-pos", type=int, default=10_000)
    p.add_argument("--n-neg", type=int, default=10_000)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_make_task)

    p = sub.add_parser("train-rf", parents=[common], help="train the sparse random-forest baseline")
    p.add_argument("--task-dir", required=True)
    p.add_argument("--out", required=True, help="model JSON path")
    p.add_argument("--n-trees", type=int, default=100)
    p.add_argument("--max-depth", type=int, default=20)
    p.add_argument("--vocab-size", type=int, default=10_000)
    p.set_defaults(func=cmd_train_rf)

    p = sub.add_parser("evaluate", parents=[common], help="score the model and random baselines")
    p.add_argument("--model", required=True)
    p.add_argument("--task-dir", required=True)
    p.add_argument("--split", default="test", choices=["val", "test"])
    p.add_argument("--out", default=None, help="write the report JSON here")
    p.add_argument("--vote", default="soft", choices=["soft", "hard"],
                   help="average leaf probabilities (soft, default) or count tree labels (hard)")
    p.set_defaults(func=cmd_evaluate)

    window = argparse.ArgumentParser(add_help=False)
    window.add_argument("--dataset", required=True, help="archive path, directory or URL")
    window.add_argument("--qid", default=None)
    window.add_argument("--start", default=None)
    window.add_argument("--end", default=None)

    p = sub.add_parser("summarize", parents=[common, window], help="extractive daily summaries as JSONL")
    p.add_argument("--feed", default=FEED_NAME)
    p.add_argument("--k", type=int, default=5, help="sentences per day (default 5)")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_summarize)

    p = sub.add_parser("plot", parents=[common, window], help="write plot.csv and plot.svg for a signal")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("inspect", parents=[common, window], help="print a signal's rows for a date range")
    p.add_argument("--top-anomaly", action="store_true", help="show only the day with the largest z-score")
    p.add_argument("--series", default="news_volume")
    p.set_defaults(func=cmd_inspect)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER
    except SourceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ENV
    except (ArchiveError, BuildError, TaskError, SignalError, ValueError, FileNotFoundError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ENV


if __name__ == "__main__":
    sys.exit(main())
