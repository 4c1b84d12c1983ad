"""Declarative pipeline runner.

Stages run in a fixed order: preprocess -> langid -> dedup -> qualfilter ->
chunk -> mix -> report. Every output file is written deterministically, so an
identical config over identical inputs yields a byte-identical workspace. A
completed stage drops a marker file (content checksums, no timestamps) and is
skipped on resume unless --force; an interrupted run resumed later is
indistinguishable from an uninterrupted one.
"""

from __future__ import annotations

import glob as globmod
import json
import sys
from dataclasses import dataclass, field, asdict
from importlib import resources
from pathlib import Path

import jsonschema

from . import chunker, dedup, langid, mixer, qualfilter, report as report_mod
from .core import (
    CorpusShard, PipelineConfig, fnv1a_bytes, merge_shards, read_shard, write_shard,
)
from .errors import ConfigError, IntegrityError, KorpusError, StageError
from .preprocess import clean_shard

STAGES = ("preprocess", "langid", "dedup", "qualfilter", "chunk", "mix", "report")


@dataclass
class SourceConfig:
    name: str
    domain: str
    paths: list[str]
    dedup_group: str | None = None
    preprocess: bool = False
    langid: bool = False
    quality_filter: bool = False
    chunk_translate: bool = False


@dataclass
class DatasetConfig:
    name: str
    sources: list[str]
    budget_tokens: int | None = None
    trim_source: str | None = None
    seed: int | None = None


@dataclass
class RunConfig:
    params: PipelineConfig
    sources: list[SourceConfig]
    datasets: list[DatasetConfig]
    langid_cfg: dict | None
    quality_lm: dict | None
    translator: dict | None
    base_dir: Path


def load_schema() -> dict:
    with resources.files("korpus").joinpath("config_schema.json").open("rb") as fh:
        return json.load(fh)


def _schema_diagnostics(obj: dict) -> list[str]:
    validator = jsonschema.Draft202012Validator(load_schema())
    out = []
    for err in sorted(validator.iter_errors(obj), key=lambda e: list(e.absolute_path)):
        loc = "$" + "".join(
            f"[{p}]" if isinstance(p, int) else f".{p}" for p in err.absolute_path
        )
        out.append(f"{loc}: {err.message}")
    return out


def _resolve_paths(patterns: list[str], base: Path) -> list[Path]:
    """Globs resolve relative to the config file directory, sorted for determinism."""
    out: list[Path] = []
    for pat in patterns:
        p = Path(pat)
        if not p.is_absolute():
            p = base / p
        matches = sorted(globmod.glob(str(p)))
        out.extend(Path(m) for m in matches)
    return out


def parse_config(path: str | Path) -> tuple[RunConfig | None, list[str]]:
    """Parse and validate; returns (config or None, diagnostics)."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        return None, [f"$: invalid JSON: {exc.msg} (line {exc.lineno})"]
    diags = _schema_diagnostics(obj)
    if diags:
        return None, diags

    params = PipelineConfig(**obj.get("params", {}))
    diags.extend(params.validate())

    sources = []
    for s in obj["sources"]:
        steps = s.get("steps", {})
        sources.append(SourceConfig(
            name=s["name"],
            domain=s["domain"],
            paths=list(s["paths"]),
            dedup_group=s.get("dedup_group"),
            preprocess=steps.get("preprocess", False),
            langid=steps.get("langid", False),
            quality_filter=steps.get("quality_filter", False),
            chunk_translate=steps.get("chunk_translate", False),
        ))
    names = [s.name for s in sources]
    if len(set(names)) != len(names):
        diags.append("$.sources: source names must be unique")

    datasets = []
    for i, d in enumerate(obj["datasets"]):
        ds = DatasetConfig(
            name=d["name"],
            sources=list(d["sources"]),
            budget_tokens=d.get("budget_tokens"),
            trim_source=d.get("trim_source"),
            seed=d.get("seed"),
        )
        datasets.append(ds)
        for srcname in ds.sources:
            if srcname not in names:
                diags.append(f"$.datasets[{i}].sources: unknown source {srcname!r}")
        if ds.trim_source is not None and ds.trim_source not in ds.sources:
            diags.append(f"$.datasets[{i}].trim_source: {ds.trim_source!r} not among dataset sources")
        if (ds.budget_tokens is None) != (ds.trim_source is None):
            diags.append(f"$.datasets[{i}]: budget_tokens and trim_source must be set together")

    langid_cfg = obj.get("langid")
    if any(s.langid for s in sources) and langid_cfg is None:
        diags.append("$.langid: required because a source enables the langid step")
    if langid_cfg is not None and langid_cfg["target"] not in langid_cfg["train"]:
        diags.append("$.langid.target: target language missing from training corpora")

    quality_lm = obj.get("quality_lm")
    if any(s.quality_filter for s in sources) and quality_lm is None:
        diags.append("$.quality_lm: required because a source enables the quality_filter step")

    base = path.parent
    for i, s in enumerate(sources):
        if not _resolve_paths(s.paths, base):
            diags.append(f"$.sources[{i}].paths: no files match {s.paths}")
    if langid_cfg is not None:
        for lang, pats in langid_cfg["train"].items():
            if not _resolve_paths(list(pats), base):
                diags.append(f"$.langid.train.{lang}: no files match {pats}")
    if quality_lm is not None and not _resolve_paths(list(quality_lm["reference"]), base):
        diags.append("$.quality_lm.reference: no files match")

    if diags:
        return None, diags
    return RunConfig(
        params=params,
        sources=sources,
        datasets=datasets,
        langid_cfg=langid_cfg,
        quality_lm=quality_lm,
        translator=obj.get("translator"),
        base_dir=base,
    ), []


def validate_config(path: str | Path) -> list[str]:
    """Empty list iff the config is runnable; diagnostics carry JSON paths."""
    _, diags = parse_config(path)
    return diags


def _write_json(path: Path, payload) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(
        json.dumps(payload, ensure_ascii=False, sort_keys=True, indent=2) + "\n",
        encoding="utf-8",
    )
    tmp.replace(path)


def _checksum_file(path: Path) -> str:
    return f"{fnv1a_bytes(path.read_bytes()):016x}"


class PipelineRun:
    """Stage executor bound to one config and workspace."""

    def __init__(self, config: RunConfig, workspace: str | Path,
                 force: bool = False, seed_override: int | None = None,
                 log=lambda msg: print(msg, file=sys.stderr)):
        self.cfg = config
        self.ws = Path(workspace)
        self.force = force
        self.log = log
        self.seed_override = seed_override
        self.state: dict[str, list[Path]] = {}
        for src in config.sources:
            self.state[src.name] = _resolve_paths(src.paths, config.base_dir)

    # -- marker bookkeeping ------------------------------------------------

    def _marker_path(self, stage: str) -> Path:
        return self.ws / "markers" / f"{stage}.json"

    def _stage_done(self, stage: str) -> bool:
        return not self.force and self._marker_path(stage).exists()

    def _finish_stage(self, stage: str, written: list[Path]) -> None:
        outputs = {
            str(p.relative_to(self.ws)): _checksum_file(p)
            for p in sorted(set(written))
        }
        _write_json(self._marker_path(stage), {"stage": stage, "outputs": outputs})

    def _verify_outputs(self, stage: str, expected: list[Path]) -> None:
        missing = [str(p) for p in expected if not p.exists()]
        if missing:
            raise IntegrityError(
                f"stage {stage} is marked complete but outputs are missing "
                f"({', '.join(missing)}); re-run with --force"
            )

    # -- seeds ---------------------------------------------------------------

    def _mix_seed(self, dataset: DatasetConfig) -> int:
        if self.seed_override is not None:
            return self.seed_override
        if dataset.seed is not None:
            return dataset.seed
        return self.cfg.params.mix_seed

    def _langid_seed(self) -> int:
        if self.seed_override is not None:
            return self.seed_override
        return int(self.cfg.langid_cfg.get("seed", 0)) if self.cfg.langid_cfg else 0

    # -- stages --------------------------------------------------------------

    def run(self, stop_after: str | None = None) -> dict:
        if stop_after is not None and stop_after not in STAGES:
            raise ConfigError(f"unknown stage {stop_after!r}")
        self.ws.mkdir(parents=True, exist_ok=True)
        summary: dict = {}
        for stage in STAGES:
            fn = getattr(self, f"_stage_{stage}")
            if self._stage_done(stage):
                self.log(f"[pipeline] {stage}: cached")
                expected = fn(execute=False)
                self._verify_outputs(stage, expected)
            else:
                self.log(f"[pipeline] {stage}: running")
                try:
                    written = fn(execute=True)
                except KorpusError:
                    raise
                except Exception as exc:
                    raise StageError(f"stage {stage} failed: {exc}") from exc
                self._finish_stage(stage, written)
            if stage == stop_after:
                self.log(f"[pipeline] stopped after {stage}")
                return summary
        summary_path = self.ws / "report" / "summary.json"
        summary = json.loads(summary_path.read_text(encoding="utf-8"))
        return summary

    def _stage_preprocess(self, execute: bool) -> list[Path]:
        outdir = self.ws / "preprocess"
        written: list[Path] = []
        for src in self.cfg.sources:
            if not src.preprocess:
                continue
            out = outdir / f"{src.name}.jsonl"
            stats_path = outdir / f"{src.name}.stats.json"
            if execute:
                shard = merge_shards([read_shard(p) for p in self.state[src.name]],
                                     source=src.name)
                cleaned, stats = clean_shard(shard, self.cfg.params.min_words)
                write_shard(cleaned, out)
                _write_json(stats_path, asdict(stats))
            self.state[src.name] = [out]
            written += [out, stats_path]
        return written

    def _stage_langid(self, execute: bool) -> list[Path]:
        cfg = self.cfg.langid_cfg
        flagged = [s for s in self.cfg.sources if s.langid]
        if not flagged or cfg is None:
            return []
        outdir = self.ws / "langid"
        model_path = outdir / "model.bin"
        written = [model_path]
        model = None
        if execute:
            corpora = {
                lang: merge_shards(
                    [read_shard(p) for p in _resolve_paths(list(pats), self.cfg.base_dir)],
                    source=lang,
                )
                for lang, pats in cfg["train"].items()
            }
            model = langid.train_langid(
                corpora,
                epochs=int(cfg.get("epochs", 10)),
                learning_rate=float(cfg.get("learning_rate", 1.0)),
                seed=self._langid_seed(),
                feature_buckets=int(cfg.get("feature_buckets", langid.DEFAULT_BUCKETS)),
            )
            langid.save_model(model, model_path)
        for src in flagged:
            out = outdir / f"{src.name}.jsonl"
            if execute:
                shard = merge_shards([read_shard(p) for p in self.state[src.name]],
                                     source=src.name)
                filtered = langid.filter_language(
                    model, shard, cfg["target"], self.cfg.params.langid_threshold,
                )
                write_shard(filtered, out)
            self.state[src.name] = [out]
            written.append(out)
        return written

    def _stage_dedup(self, execute: bool) -> list[Path]:
        groups: dict[str, list[str]] = {}
        for src in self.cfg.sources:
            if src.dedup_group:
                groups.setdefault(src.dedup_group, []).append(src.name)
        if not groups:
            return []
        outdir = self.ws / "dedup"
        written: list[Path] = []
        sourcenames = [name for members in groups.values() for name in members]
        if execute:
            stage_groups = []
            shard_owner: list[str] = []
            for gname, members in groups.items():
                shards = []
                for name in members:
                    for p in self.state[name]:
                        shards.append(read_shard(p))
                        shard_owner.append(name)
                stage_groups.append((gname, shards))
            final, reports = dedup.staged_dedup(
                stage_groups,
                self.cfg.params.min_match_tokens,
                self.cfg.params.dedup_policy,
            )
            per_source: dict[str, list[CorpusShard]] = {}
            for owner, shard in zip(shard_owner, final):
                per_source.setdefault(owner, []).append(shard)
            for name in sourcenames:
                merged = merge_shards(per_source.get(name, []), source=name)
                write_shard(merged, outdir / f"{name}.jsonl")
            for rep in reports:
                _write_json(outdir / f"report-{rep.stage}.json",
                            json.loads(report_mod.render(rep, "json")))
                written.append(outdir / f"report-{rep.stage}.json")
        else:
            for gname in groups:
                written.append(outdir / f"report-{gname}.json")
            written.append(outdir / "report-combined.json")
        for name in sourcenames:
            out = outdir / f"{name}.jsonl"
            self.state[name] = [out]
            written.append(out)
        return written

    def _stage_qualfilter(self, execute: bool) -> list[Path]:
        flagged = [s for s in self.cfg.sources if s.quality_filter]
        if not flagged or self.cfg.quality_lm is None:
            return []
        outdir = self.ws / "qualfilter"
        model_path = outdir / "model.arpa"
        written = [model_path]
        model = None
        if execute:
            ref_paths = _resolve_paths(list(self.cfg.quality_lm["reference"]), self.cfg.base_dir)
            reference = [read_shard(p) for p in ref_paths]
            model = qualfilter.train_ngram(
                reference,
                order=self.cfg.params.ngram_order,
                min_count=int(self.cfg.quality_lm.get("min_count", 2)),
            )
            qualfilter.write_arpa(model, model_path)
        for src in flagged:
            out = outdir / f"{src.name}.jsonl"
            scores_path = outdir / f"{src.name}.scores.json"
            if execute:
                shard = merge_shards([read_shard(p) for p in self.state[src.name]],
                                     source=src.name)
                kept, scores = qualfilter.filter_top_k(
                    [shard], model, self.cfg.params.quality_top_k,
                )
                write_shard(kept[0], out)
                _write_json(scores_path, [asdict(s) for s in scores])
            self.state[src.name] = [out]
            written += [out, scores_path]
        return written

    def _stage_chunk(self, execute: bool) -> list[Path]:
        flagged = [s for s in self.cfg.sources if s.chunk_translate]
        if not flagged:
            return []
        outdir = self.ws / "chunk"
        written: list[Path] = []
        translator = None
        if execute:
            tcfg = self.cfg.translator or {}
            if tcfg.get("command"):
                translator = chunker.SubprocessTranslator(
                    tcfg["command"],
                    beam_size=int(tcfg.get("beam_size", 1)),
                    max_context=int(tcfg.get("max_context", 156)),
                )
            else:
                translator = chunker.identity_translator()
        for src in flagged:
            chunks_path = outdir / f"{src.name}.chunks.jsonl"
            out = outdir / f"{src.name}.jsonl"
            failures_path = outdir / f"{src.name}.failures.json"
            if execute:
                shard = merge_shards([read_shard(p) for p in self.state[src.name]],
                                     source=src.name)
                budget = self.cfg.params.chunk_budget_tokens
                all_lines = []
                out_docs = []
                failures = []
                for doc in shard.documents:
                    chunks = chunker.chunk_document(doc, budget)
                    results = chunker.translate_chunks(chunks, translator)
                    for c in chunks:
                        all_lines.append({
                            "doc_id": c.doc_id, "index": c.index, "text": c.text,
                            "token_count": c.token_count, "oversized": c.oversized,
                        })
                    bad = [r for r in results if r.error is not None]
                    if bad:
                        failures.append({
                            "doc_id": doc.id,
                            "errors": [{"index": r.chunk.index, "error": r.error} for r in bad],
                        })
                        continue  # a document with failed chunks is dropped, and reported
                    text = " ".join(r.text for r in results)
                    out_docs.append(type(doc)(
                        id=doc.id, source=doc.source, domain=doc.domain, text=text,
                    ))
                chunks_path.parent.mkdir(parents=True, exist_ok=True)
                tmp = chunks_path.with_name(chunks_path.name + ".tmp")
                with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
                    for line in all_lines:
                        fh.write(json.dumps(line, ensure_ascii=False) + "\n")
                tmp.replace(chunks_path)
                write_shard(CorpusShard.from_documents(out_docs, source=src.name), out)
                _write_json(failures_path, failures)
            self.state[src.name] = [out]
            written += [chunks_path, out, failures_path]
        return written

    def _stage_mix(self, execute: bool) -> list[Path]:
        written: list[Path] = []
        src_by_name = {s.name: s for s in self.cfg.sources}
        for ds in self.cfg.datasets:
            dsdir = self.ws / "datasets" / ds.name
            comp_path = dsdir / "composition.json"
            outs = [dsdir / f"{name}.jsonl" for name in ds.sources]
            if execute:
                spec = mixer.DatasetSpec(
                    name=ds.name,
                    sources=tuple(
                        mixer.SourceSpec(
                            source=name,
                            domain=src_by_name[name].domain,
                            paths=tuple(str(p) for p in self.state[name]),
                        )
                        for name in ds.sources
                    ),
                    budget_tokens=ds.budget_tokens,
                    trim_source=ds.trim_source,
                    seed=self._mix_seed(ds),
                )
                shards, composition = mixer.assemble(spec)
                for shard, out in zip(shards, outs):
                    write_shard(shard, out)
                _write_json(comp_path, json.loads(report_mod.render(composition, "json")))
            written += outs + [comp_path]
        return written

    def _stage_report(self, execute: bool) -> list[Path]:
        outdir = self.ws / "report"
        summary_json = outdir / "summary.json"
        summary_md = outdir / "summary.md"
        if execute:
            payload: dict = {"datasets": {}, "dedup": [], "preprocess": {}}
            md: list[str] = ["# Pipeline summary", ""]
            pre_dir = self.ws / "preprocess"
            for src in self.cfg.sources:
                stats_path = pre_dir / f"{src.name}.stats.json"
                if stats_path.exists():
                    payload["preprocess"][src.name] = json.loads(
                        stats_path.read_text(encoding="utf-8"))
            dedup_dir = self.ws / "dedup"
            if dedup_dir.exists():
                md.append("## Deduplication")
                md.append("")
                for p in sorted(dedup_dir.glob("report-*.json")):
                    obj = json.loads(p.read_text(encoding="utf-8"))
                    payload["dedup"].append(obj)
                    rep = report_mod.parse_report(json.dumps(obj))
                    md.append(report_mod.render(rep, "markdown"))
            for ds in self.cfg.datasets:
                comp_path = self.ws / "datasets" / ds.name / "composition.json"
                obj = json.loads(comp_path.read_text(encoding="utf-8"))
                payload["datasets"][ds.name] = obj
                md += [f"## Dataset: {ds.name}", ""]
                md.append(report_mod.render(report_mod.parse_report(json.dumps(obj)), "markdown"))
            _write_json(summary_json, payload)
            tmp = summary_md.with_name(summary_md.name + ".tmp")
            tmp.write_text("\n".join(md) + "\n", encoding="utf-8")
            tmp.replace(summary_md)
        return [summary_json, summary_md]


def run_pipeline(
    config_path: str | Path,
    workspace: str | Path,
    force: bool = False,
    stop_after: str | None = None,
    seed_override: int | None = None,
) -> dict:
    """Parse, validate, and execute; raises ConfigError on a bad config."""
    config, diags = parse_config(config_path)
    if config is None:
        raise ConfigError("; ".join(diags))
    run = PipelineRun(config, workspace, force=force, seed_override=seed_override)
    return run.run(stop_after=stop_after)
