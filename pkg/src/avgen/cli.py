"""Command-line entry point: ``avgen {prepare,train,predict,evaluate,crosseval,costs}``.

Every command reads and writes plain files under ``--out``. Settings come
from flags, then from a flat ``key=value`` file given with ``--config``,
then from the built-in defaults.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from avgen import backend, ingest, strategies
from avgen.backend import ConfigurationError
from avgen.evaluation import (
    ConsistencyError,
    build_cost_report,
    cross_eval,
    fingerprint_of,
    score,
    summarize_diagnostics,
)
from avgen.serdes import Strategy

logger = logging.getLogger("avgen")


class JsonFormatter(logging.Formatter):
    def format(self, record: logging.LogRecord) -> str:
        return json.dumps({"level": record.levelname, "logger": record.name, "message": record.getMessage()})


def _setup_logging(out: Path) -> logging.Handler:
    out.mkdir(parents=True, exist_ok=True)
    handler = logging.FileHandler(out / "avgen.log", mode="w", encoding="utf-8")
    handler.setFormatter(JsonFormatter())
    root = logging.getLogger()
    root.addHandler(handler)
    root.setLevel(logging.INFO)
    return handler


def read_config(path) -> dict[str, str]:
    """Flat ``key = value`` lines; ``#`` starts a comment; dashes in keys become underscores."""
    config = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        config[key.replace("-", "_")] = value
    return config


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n", encoding="utf-8")


def _run_meta(args, out: Path) -> None:
    skip = {"func", "config", "parser"}
    params = {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items() if k not in skip}
    _write_json(out / "run.json", {"command": args.command, "seed": args.seed, "args": params})


def _named_paths(items, flag: str) -> dict[str, Path]:
    out = {}
    for item in items or []:
        name, sep, path = item.partition("=")
        if not sep or not name or not path:
            raise ConfigurationError(f"{flag} expects NAME=PATH, got {item!r}")
        out[name] = Path(path)
    return out


def _require(path: Path) -> Path:
    if not path.exists():
        raise FileNotFoundError(f"missing input: {path}")
    return path


def cmd_prepare(args) -> int:
    out = Path(args.out)
    try:
        ratios = ingest.parse_ratios(args.ratios)
    except ValueError as exc:
        args.parser.error(str(exc))
    load_report = ingest.LoadReport()
    records = list(ingest.load(_require(Path(args.input)), args.format, load_report))
    split = ingest.stratified_split(records, ratios, args.seed)
    for name in ("train", "val", "test"):
        ingest.write_records(getattr(split, name), out / f"{name}.jsonl")
    stats = ingest.compute_stats(records)
    report = dict(split.report, load=load_report.to_dict(), stats=stats.__dict__, format=args.format)
    _write_json(out / "split_report.json", report)
    for msg in load_report.malformed[:50]:
        logger.warning("skipped %s", msg)
    print(
        f"{len(records)} records ({stats.n_pairs} pairs, {stats.n_categories} categories) -> "
        f"train {len(split.train)} / val {len(split.val)} / test {len(split.test)}; "
        f"{len(load_report.malformed)} malformed rows skipped"
    )
    return 0


def _backend_config_for(args):
    def config_for(role: str):
        return backend.default_config(
            args.model,
            role,
            epochs=args.epochs,
            learning_rate=args.lr,
            batch_size=args.batch_size,
            max_input_tokens=args.max_input_tokens,
            max_output_tokens=args.max_output_tokens,
            early_stop_patience=args.patience,
            decode_mode=args.decode,
            beam_width=args.beam_width,
            seed=args.seed,
        )

    return config_for


def cmd_train(args) -> int:
    data = Path(args.data)
    train_records = ingest.read_records(_require(data / "train.jsonl"))
    val_path = data / "val.jsonl"
    val_records = ingest.read_records(val_path) if val_path.exists() else []
    predictor = strategies.train_strategy(args.strategy, train_records, val_records, _backend_config_for(args))
    paths = strategies.save_predictor(predictor, args.out)
    for role, model in predictor.models.items():
        r = model.report
        logger.info("%s: %d examples, %d epochs, %d truncated", role, r.n_examples, r.epochs_completed, r.truncated_sources)
        print(f"{role}: {r.n_examples} examples, {r.epochs_completed} epochs -> {Path(args.out) / paths[role]}")
    return 0


def cmd_predict(args) -> int:
    predictor = strategies.load_predictor(_require(Path(args.run)))
    records = ingest.read_records(_require(Path(args.input)))
    predictions = strategies.predict(predictor, records)
    strategies.write_predictions(predictions, Path(args.out) / "predictions.jsonl")
    diag = summarize_diagnostics(predictions)
    logger.info("diagnostics %s", json.dumps(diag))
    n_pairs = sum(len(p.pairs) for p in predictions)
    print(f"{len(predictions)} records, {n_pairs} predicted pairs ({predictor.name}); diagnostics {diag}")
    return 0


def cmd_evaluate(args) -> int:
    out = Path(args.out)
    gold = ingest.read_records(_require(Path(args.gold)))
    kw = dict(discard=not args.no_discard, macro=args.macro)
    if args.ensemble:
        members = {p: strategies.read_predictions(_require(Path(p))) for p in args.ensemble}
        by_member = {p: {x.record_id: x for x in preds} for p, preds in members.items()}
        ids = list(dict.fromkeys(x.record_id for preds in members.values() for x in preds))
        predictions = [
            strategies.ensemble_combine([m[i] for m in by_member.values() if i in m]) for i in ids
        ]
        member_reports = {p: score(preds, gold, **kw) for p, preds in members.items()}
        sources = list(args.ensemble)
    else:
        predictions = strategies.read_predictions(_require(Path(args.pred)))
        member_reports = {}
        sources = [args.pred]
    report = score(predictions, gold, fingerprint=fingerprint_of(sources, kw, args.seed), **kw)
    doc = report.to_dict(seed=args.seed)
    if member_reports:
        doc["members"] = {p: r.to_dict() for p, r in member_reports.items()}
    _write_json(out / "eval_report.json", doc)
    if not args.no_plots:
        from avgen.plotting import plot_scores

        label = "ensemble" if args.ensemble else Path(args.pred).stem
        plot_scores({**{Path(p).parent.name or p: r for p, r in member_reports.items()}, label: report}, out / "scores.png")
    print(f"P={doc['precision']:.2f} R={doc['recall']:.2f} F1={doc['f1']:.2f} ({report.counts.discarded} discarded)")
    return 0


def cmd_crosseval(args) -> int:
    out = Path(args.out)
    runs = _named_paths(args.run, "--run")
    tests = _named_paths(args.test, "--test")
    models = {name: strategies.load_predictor(_require(path)) for name, path in runs.items()}
    splits = {name: ingest.read_records(_require(path)) for name, path in tests.items()}
    matrix = cross_eval(models, splits)
    (out / "crosseval.tsv").write_text(matrix.to_tsv(), encoding="utf-8")
    if not args.no_plots:
        from avgen.plotting import plot_cross_eval

        plot_cross_eval(matrix, out / "crosseval.png")
    print(matrix.to_tsv(), end="")
    return 0


def cmd_costs(args) -> int:
    out = Path(args.out)
    runs = _named_paths(args.run, "--run")
    records = ingest.read_records(_require(Path(args.input)))
    probes = {
        name: strategies.probe_strategy(strategies.load_predictor(_require(path)), records, args.repeats)
        for name, path in runs.items()
    }
    report = build_cost_report(probes)
    (out / "costs.tsv").write_text(report.to_tsv(), encoding="utf-8")
    _write_json(out / "costs.json", {"raw": report.raw, "normalized": report.normalized, "flags": report.flags, "seed": args.seed})
    if not args.no_plots:
        from avgen.plotting import plot_cost_report

        plot_cost_report(report, out / "costs.png")
    for flag in report.flags:
        logger.warning(flag)
    print(report.to_tsv(), end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key=value settings file")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", help="output directory (required; may come from --config)")
    common.add_argument("--no-plots", action="store_true", help="skip figure rendering")

    parser = argparse.ArgumentParser(prog="avgen", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", parents=[common], help="load, clean and split a corpus")
    p.add_argument("--format", required=True, choices=ingest.FORMATS)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--ratios", default="8:1:1")
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", parents=[common], help="train the models of one strategy")
    p.add_argument("--data", required=True, help="directory with train.jsonl (and val.jsonl)")
    p.add_argument("--strategy", required=True, choices=[s.value for s in Strategy])
    p.add_argument("--model", default=backend.MOCK, help="'mock', a hub checkpoint name or a local directory")
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--max-input-tokens", type=int)
    p.add_argument("--max-output-tokens", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--decode", choices=["greedy", "beam"])
    p.add_argument("--beam-width", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", parents=[common], help="write predictions for a record file")
    p.add_argument("--run", required=True, help="directory written by train")
    p.add_argument("--input", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", parents=[common], help="score predictions against gold records")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--pred")
    src.add_argument("--ensemble", nargs="+", metavar="PRED")
    p.add_argument("--gold", required=True)
    p.add_argument("--macro", action="store_true", help="average P/R over products")
    p.add_argument("--no-discard", action="store_true", help="keep pairs with unlabeled attributes")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("crosseval", parents=[common], help="train-on-A / test-on-B F1 matrix")
    p.add_argument("--run", action="append", required=True, metavar="NAME=DIR")
    p.add_argument("--test", action="append", required=True, metavar="NAME=FILE")
    p.set_defaults(func=cmd_crosseval)

    p = sub.add_parser("costs", parents=[common], help="cost table normalized to end2end")
    p.add_argument("--run", action="append", required=True, metavar="STRATEGY=DIR")
    p.add_argument("--input", required=True)
    p.add_argument("--repeats", type=int, default=3)
    p.set_defaults(func=cmd_costs)

    return parser


def _subparsers(parser):
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices
    return {}


def main(argv=None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)

    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if known.config:
        try:
            config = read_config(known.config)
        except (OSError, ConfigurationError) as exc:
            parser.error(str(exc))
        for sp in _subparsers(parser).values():
            valid = {a.dest for a in sp._actions}
            sp.set_defaults(**{k: v for k, v in config.items() if k in valid})

    args = parser.parse_args(argv)
    args.parser = _subparsers(parser)[args.command]
    if not args.out:
        args.parser.error("--out is required")
    out = Path(args.out)
    handler = _setup_logging(out)
    try:
        code = args.func(args)
        _run_meta(args, out)
        return code
    except (ConfigurationError, ConsistencyError, ingest.IngestError, FileNotFoundError, KeyError) as exc:
        logger.error("%s: %s", type(exc).__name__, exc)
        print(f"error: {exc}", file=sys.stderr)
        return 1
    finally:
        logging.getLogger().removeHandler(handler)
        handler.close()


if __name__ == "__main__":
    sys.exit(main())
