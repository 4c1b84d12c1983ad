"""Dataset assembly with token-budget matching.

A dataset spec names its sources (with a declared domain and shard paths) and
optionally a token budget together with the single source to down-sample.
Budget trimming removes whole documents of the trim source, drawn by a seeded
SplitMix64 permutation, until the total token count is at or below budget;
removing one document fewer would exceed it. All other sources pass through
untouched.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .core import CorpusShard, merge_shards, read_shard
from .errors import ConfigError
from .report import CompositionReport, CompositionRow
from .rng import SplitMix64


@dataclass(frozen=True)
class SourceSpec:
    source: str
    domain: str
    paths: tuple[str, ...]


@dataclass(frozen=True)
class DatasetSpec:
    name: str
    sources: tuple[SourceSpec, ...]
    budget_tokens: int | None = None
    trim_source: str | None = None
    seed: int = 0

    def __post_init__(self):
        if self.budget_tokens is not None and self.budget_tokens < 0:
            raise ConfigError("budget_tokens must be >= 0")
        if self.trim_source is not None:
            if self.trim_source not in {s.source for s in self.sources}:
                raise ConfigError(
                    f"trim_source {self.trim_source!r} is not among the dataset sources"
                )

    @classmethod
    def from_json(cls, path: str | Path) -> "DatasetSpec":
        with open(path, encoding="utf-8") as fh:
            obj = json.load(fh)
        try:
            sources = tuple(
                SourceSpec(source=s["source"], domain=s["domain"], paths=tuple(s["paths"]))
                for s in obj["sources"]
            )
            return cls(
                name=obj["name"],
                sources=sources,
                budget_tokens=obj.get("budget_tokens"),
                trim_source=obj.get("trim_source"),
                seed=int(obj.get("seed", 0)),
            )
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"{path}: malformed dataset spec ({exc})") from None


def trim_to_budget(
    shards: list[CorpusShard],
    source: str,
    budget_tokens: int,
    seed: int,
) -> list[CorpusShard]:
    """Seeded removal of whole documents labeled `source` until within budget."""
    total = sum(s.manifest.token_count for s in shards)
    if total <= budget_tokens:
        return list(shards)
    candidates = []  # (shard_idx, doc_idx, token_count)
    for si, shard in enumerate(shards):
        for di, doc in enumerate(shard.documents):
            if doc.source == source:
                candidates.append((si, di, doc.token_count))
    floor = total - sum(c[2] for c in candidates)
    if floor > budget_tokens:
        raise ConfigError(
            f"budget {budget_tokens} unreachable by trimming {source!r}; "
            f"achievable minimum is {floor} tokens"
        )
    order = list(range(len(candidates)))
    SplitMix64(seed).shuffle(order)
    removed: set[tuple[int, int]] = set()
    running = total
    for idx in order:
        if running <= budget_tokens:
            break
        si, di, tc = candidates[idx]
        removed.add((si, di))
        running -= tc
    out = []
    for si, shard in enumerate(shards):
        if not any(r[0] == si for r in removed):
            out.append(shard)  # untouched shards pass through bit-identically
            continue
        kept = [d for di, d in enumerate(shard.documents) if (si, di) not in removed]
        out.append(CorpusShard.from_documents(kept, source=shard.manifest.source))
    return out


def assemble(spec: DatasetSpec) -> tuple[list[CorpusShard], CompositionReport]:
    """Read all source shards, trim to budget if requested, and report composition.

    Returns one merged shard per source, in spec order.
    """
    per_source: list[tuple[SourceSpec, CorpusShard]] = []
    for src in spec.sources:
        shards = []
        for p in src.paths:
            if not Path(p).exists():
                raise ConfigError(f"source {src.source!r}: missing shard {p}")
            shards.append(read_shard(p))
        per_source.append((src, merge_shards(shards, source=src.source)))

    shards = [shard for _, shard in per_source]
    if spec.budget_tokens is not None and spec.trim_source is not None:
        shards = trim_to_budget(shards, spec.trim_source, spec.budget_tokens, spec.seed)

    rows = []
    total_tokens = sum(s.manifest.token_count for s in shards)
    for (src, _), shard in zip(per_source, shards):
        share = shard.manifest.token_count / total_tokens if total_tokens else 0.0
        rows.append(CompositionRow(
            domain=src.domain,
            source=src.source,
            doc_count=shard.manifest.doc_count,
            token_count=shard.manifest.token_count,
            share=share,
        ))
    return shards, CompositionReport(rows=tuple(rows))
