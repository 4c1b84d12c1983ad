"""korpus command line: one subcommand per pipeline stage plus the runner.

Exit codes: 0 success, 2 config error, 3 stage failure, 4 integrity error.
"""

from __future__ import annotations

import argparse
import glob as globmod
import json
import sys
from dataclasses import asdict
from pathlib import Path

from . import chunker, dedup, langid, mixer, qualfilter, report as report_mod
from .core import PipelineConfig, merge_shards, read_shard, write_shard
from .errors import ConfigError, IntegrityError, KorpusError, ShardFormatError, StageError
from .pipeline import run_pipeline, validate_config
from .preprocess import clean_shard


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


def _write_json(path: str | Path, payload) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(
        json.dumps(payload, ensure_ascii=False, sort_keys=True, indent=2) + "\n",
        encoding="utf-8",
    )


def _glob_sorted(patterns: list[str]) -> list[str]:
    out: list[str] = []
    for pat in patterns:
        matches = sorted(globmod.glob(pat))
        if not matches:
            raise ConfigError(f"no files match {pat!r}")
        out.extend(matches)
    return out


def cmd_preprocess(args) -> int:
    shard = merge_shards([read_shard(p) for p in _glob_sorted(args.inputs)])
    cleaned, stats = clean_shard(shard, args.min_words)
    write_shard(cleaned, args.out)
    if args.stats:
        _write_json(args.stats, asdict(stats))
    _log(f"[preprocess] kept {stats.output_docs}/{stats.input_docs} docs, "
         f"removed {stats.urls_removed} urls")
    return 0


def cmd_langid_train(args) -> int:
    corpora = {}
    for spec in args.lang:
        lang, _, pattern = spec.partition("=")
        if not pattern:
            raise ConfigError(f"--lang expects LANG=GLOB, got {spec!r}")
        corpora[lang] = merge_shards([read_shard(p) for p in _glob_sorted([pattern])],
                                     source=lang)
    model = langid.train_langid(
        corpora, epochs=args.epochs, learning_rate=args.learning_rate, seed=args.seed,
    )
    langid.save_model(model, args.model)
    _log(f"[langid] trained on {sorted(corpora)}; "
         f"final loss {model.loss_history[-1]:.4f}" if model.loss_history else "[langid] trained")
    return 0


def cmd_langid_filter(args) -> int:
    model = langid.load_model(args.model)
    shard = merge_shards([read_shard(p) for p in _glob_sorted(args.inputs)])
    filtered = langid.filter_language(model, shard, args.target, args.threshold)
    write_shard(filtered, args.out)
    _log(f"[langid] kept {filtered.manifest.doc_count}/{shard.manifest.doc_count} docs")
    return 0


def cmd_dedup(args) -> int:
    stage_groups = []
    for spec in args.group:
        name, _, pattern = spec.partition("=")
        if not pattern:
            raise ConfigError(f"--group expects NAME=GLOB, got {spec!r}")
        stage_groups.append((name, [read_shard(p) for p in _glob_sorted([pattern])]))
    policy = args.policy.replace("-", "_")
    final, reports = dedup.staged_dedup(stage_groups, args.min_match, policy)
    outdir = Path(args.out_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    # One output file per surviving input shard, numbered in stream order.
    for i, shard in enumerate(final):
        write_shard(shard, outdir / f"shard-{i:04d}.jsonl")
    if args.report:
        _write_json(args.report, [json.loads(report_mod.render(r, "json")) for r in reports])
    for rep in reports:
        _log(f"[dedup] stage {rep.stage}: {rep.duplicate_tokens}/{rep.input_tokens} "
             f"duplicate tokens, removed {rep.removed_docs} docs")
    return 0


def cmd_lm_train(args) -> int:
    reference = [read_shard(p) for p in _glob_sorted(args.inputs)]
    model = qualfilter.train_ngram(reference, order=args.order, min_count=args.min_count)
    qualfilter.write_arpa(model, args.model)
    _log(f"[lm] trained order-{args.order} model over {len(model.vocab)} vocabulary entries")
    return 0


def cmd_lm_score(args) -> int:
    model = qualfilter.read_arpa(args.model)
    shard = merge_shards([read_shard(p) for p in _glob_sorted(args.inputs)])
    scores = []
    for doc in shard.documents:
        try:
            scores.append(asdict(qualfilter.score_perplexity(model, doc)))
        except KorpusError:
            continue
    _write_json(args.out, scores)
    _log(f"[lm] scored {len(scores)} documents")
    return 0


def cmd_quality_filter(args) -> int:
    model = qualfilter.read_arpa(args.model)
    shard = merge_shards([read_shard(p) for p in _glob_sorted(args.inputs)])
    kept, scores = qualfilter.filter_top_k([shard], model, args.top_k)
    write_shard(kept[0], args.out)
    if args.scores:
        _write_json(args.scores, [asdict(s) for s in scores])
    _log(f"[quality-filter] kept {kept[0].manifest.doc_count}/{shard.manifest.doc_count} docs")
    return 0


def cmd_chunk(args) -> int:
    shard = merge_shards([read_shard(p) for p in _glob_sorted(args.inputs)])
    translator = None
    if args.translator_cmd:
        translator = chunker.SubprocessTranslator(args.translator_cmd)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    n_chunks = 0
    with open(out, "w", encoding="utf-8", newline="\n") as fh:
        for doc in shard.documents:
            chunks = chunker.chunk_document(doc, args.budget)
            results = None
            if translator is not None:
                results = chunker.translate_chunks(chunks, translator)
            for i, c in enumerate(chunks):
                record = {
                    "doc_id": c.doc_id, "index": c.index, "text": c.text,
                    "token_count": c.token_count, "oversized": c.oversized,
                }
                if results is not None:
                    record["translation"] = results[i].text
                    if results[i].error is not None:
                        record["error"] = results[i].error
                fh.write(json.dumps(record, ensure_ascii=False) + "\n")
                n_chunks += 1
    _log(f"[chunk] wrote {n_chunks} chunks at budget {args.budget}")
    return 0


def cmd_mix(args) -> int:
    spec = mixer.DatasetSpec.from_json(args.spec)
    shards, composition = mixer.assemble(spec)
    outdir = Path(args.out_dir)
    for src, shard in zip(spec.sources, shards):
        write_shard(shard, outdir / f"{src.source}.jsonl")
    if args.report:
        _write_json(args.report, json.loads(report_mod.render(composition, "json")))
    docs, tokens = composition.totals()
    _log(f"[mix] dataset {spec.name}: {docs} docs, {tokens} tokens")
    return 0


def cmd_report(args) -> int:
    rendered = []
    for p in args.inputs:
        rep = report_mod.parse_report(Path(p).read_text(encoding="utf-8"))
        rendered.append(report_mod.render(rep, args.format))
    sep = "\n" if args.format == "markdown" else ""
    sys.stdout.write(sep.join(rendered))
    return 0


def cmd_pipeline(args) -> int:
    run_pipeline(
        args.config,
        args.workspace,
        force=args.force,
        stop_after=args.stop_after,
        seed_override=args.seed_override,
    )
    return 0


def cmd_validate(args) -> int:
    diags = validate_config(args.config)
    for d in diags:
        print(d)
    if diags:
        raise ConfigError(f"{len(diags)} problem(s) found")
    _log("[validate] config is runnable")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="korpus", description=__doc__)
    parser.add_argument("--threads", type=int, default=1,
                        help="worker hint; stages currently run deterministically in-process")
    parser.add_argument("--seed-override", type=int, default=None,
                        help="replace every configured seed (pipeline subcommand)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="clean text and drop short documents")
    p.add_argument("--in", dest="inputs", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--min-words", type=int, default=20)
    p.add_argument("--stats", default=None)
    p.set_defaults(fn=cmd_preprocess)

    p = sub.add_parser("langid", help="language identification")
    lid = p.add_subparsers(dest="subcommand", required=True)
    t = lid.add_parser("train")
    t.add_argument("--model", required=True)
    t.add_argument("--lang", action="append", required=True, metavar="LANG=GLOB")
    t.add_argument("--epochs", type=int, default=10)
    t.add_argument("--learning-rate", type=float, default=1.0)
    t.add_argument("--seed", type=int, default=0)
    t.set_defaults(fn=cmd_langid_train)
    f = lid.add_parser("filter")
    f.add_argument("--model", required=True)
    f.add_argument("--target", required=True)
    f.add_argument("--threshold", type=float, default=0.9)
    f.add_argument("--in", dest="inputs", nargs="+", required=True)
    f.add_argument("--out", required=True)
    f.set_defaults(fn=cmd_langid_filter)

    p = sub.add_parser("dedup", help="exact-substring deduplication")
    p.add_argument("--group", action="append", required=True, metavar="NAME=GLOB")
    p.add_argument("--min-match", type=int, default=100)
    p.add_argument("--policy", choices=["remove-all", "keep-first"], default="remove-all")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--report", default=None)
    p.set_defaults(fn=cmd_dedup)

    p = sub.add_parser("lm", help="n-gram language model")
    lm = p.add_subparsers(dest="subcommand", required=True)
    t = lm.add_parser("train")
    t.add_argument("--in", dest="inputs", nargs="+", required=True)
    t.add_argument("--model", required=True)
    t.add_argument("--order", type=int, default=5)
    t.add_argument("--min-count", type=int, default=2)
    t.set_defaults(fn=cmd_lm_train)
    s = lm.add_parser("score")
    s.add_argument("--model", required=True)
    s.add_argument("--in", dest="inputs", nargs="+", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_lm_score)

    p = sub.add_parser("quality-filter", help="keep the k lowest-perplexity documents")
    p.add_argument("--model", required=True)
    p.add_argument("--in", dest="inputs", nargs="+", required=True)
    p.add_argument("--top-k", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--scores", default=None)
    p.set_defaults(fn=cmd_quality_filter)

    p = sub.add_parser("chunk", help="sentence-split and pack into token budgets")
    p.add_argument("--in", dest="inputs", nargs="+", required=True)
    p.add_argument("--budget", type=int, default=128)
    p.add_argument("--out", required=True)
    p.add_argument("--translator-cmd", default=None,
                   help="shell command speaking the line protocol (adds a translation field)")
    p.set_defaults(fn=cmd_chunk)

    p = sub.add_parser("mix", help="assemble a dataset from a spec file")
    p.add_argument("--spec", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--report", default=None)
    p.set_defaults(fn=cmd_mix)

    p = sub.add_parser("report", help="render stage reports")
    p.add_argument("--in", dest="inputs", nargs="+", required=True)
    p.add_argument("--format", choices=["json", "markdown"], default="markdown")
    p.set_defaults(fn=cmd_report)

    p = sub.add_parser("pipeline", help="run all stages from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--workspace", required=True)
    p.add_argument("--force", action="store_true")
    p.add_argument("--stop-after", default=None,
                   help="halt after the named stage (for debugging and resume tests)")
    p.set_defaults(fn=cmd_pipeline)

    p = sub.add_parser("validate", help="check a pipeline config")
    p.add_argument("--config", required=True)
    p.set_defaults(fn=cmd_validate)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, ShardFormatError) as exc:
        _log(f"error: {exc}")
        return 2
    except IntegrityError as exc:
        _log(f"integrity error: {exc}")
        return 4
    except KorpusError as exc:
        _log(f"stage failure: {exc}")
        return 3
    except OSError as exc:
        _log(f"stage failure: {exc}")
        return 3


if __name__ == "__main__":
    sys.exit(main())
