"""Stage statistics rendered as canonical JSON or markdown tables.

Rendered numbers are always re-derivable from the raw counts; token counts
appear both raw and in billions with one decimal.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

from .dedup import DedupReport


@dataclass(frozen=True)
class CompositionRow:
    domain: str
    source: str
    doc_count: int
    token_count: int
    share: float


@dataclass(frozen=True)
class CompositionReport:
    rows: tuple[CompositionRow, ...]

    def totals(self) -> tuple[int, int]:
        return (
            sum(r.doc_count for r in self.rows),
            sum(r.token_count for r in self.rows),
        )


def duplicate_ratio(report: DedupReport) -> float:
    if report.input_tokens <= 0:
        raise ValueError("duplicate ratio undefined for zero input tokens")
    return report.duplicate_tokens / report.input_tokens


def _billions(tokens: int) -> str:
    return f"{tokens / 1e9:.1f}"


def _composition_json(report: CompositionReport) -> str:
    docs, tokens = report.totals()
    payload = {
        "type": "composition",
        "rows": [asdict(r) for r in report.rows],
        "totals": {"doc_count": docs, "token_count": tokens},
    }
    return json.dumps(payload, ensure_ascii=False, sort_keys=True, indent=2) + "\n"


def _composition_markdown(report: CompositionReport) -> str:
    docs, tokens = report.totals()
    lines = [
        "| domain | source | documents | tokens | tokens (B) | share |",
        "|---|---|---:|---:|---:|---:|",
    ]
    for r in report.rows:
        lines.append(
            f"| {r.domain} | {r.source} | {r.doc_count} | {r.token_count} "
            f"| {_billions(r.token_count)} | {r.share:.4f} |"
        )
    lines.append(f"| **total** | | {docs} | {tokens} | {_billions(tokens)} | 1.0000 |"
                 if report.rows else
                 f"| **total** | | {docs} | {tokens} | {_billions(tokens)} | |")
    return "\n".join(lines) + "\n"


def _dedup_json(report: DedupReport) -> str:
    payload = {"type": "dedup", **asdict(report)}
    return json.dumps(payload, ensure_ascii=False, sort_keys=True, indent=2) + "\n"


def _dedup_markdown(report: DedupReport) -> str:
    ratio = duplicate_ratio(report) if report.input_tokens > 0 else 0.0
    lines = [
        f"| stage | {report.stage} |",
        "|---|---:|",
        f"| input tokens | {report.input_tokens} |",
        f"| input tokens (B) | {_billions(report.input_tokens)} |",
        f"| duplicate tokens | {report.duplicate_tokens} |",
        f"| duplicate tokens (B) | {_billions(report.duplicate_tokens)} |",
        f"| duplicate ratio | {ratio:.4f} |",
        f"| merged spans | {report.spans} |",
        f"| removed documents | {report.removed_docs} |",
        f"| removed tokens | {report.removed_tokens} |",
    ]
    return "\n".join(lines) + "\n"


def render(report: CompositionReport | DedupReport, format: str = "json") -> str:
    if format not in ("json", "markdown"):
        raise ValueError(f"unknown format {format!r}")
    if isinstance(report, CompositionReport):
        return _composition_json(report) if format == "json" else _composition_markdown(report)
    if isinstance(report, DedupReport):
        return _dedup_json(report) if format == "json" else _dedup_markdown(report)
    raise TypeError(f"cannot render {type(report).__name__}")


def parse_report(text: str) -> CompositionReport | DedupReport:
    """Inverse of render(..., 'json'); render(parse(x), 'json') is a fixed point."""
    obj = json.loads(text)
    kind = obj.get("type")
    if kind == "composition":
        rows = tuple(CompositionRow(**r) for r in obj["rows"])
        return CompositionReport(rows=rows)
    if kind == "dedup":
        fields = {k: v for k, v in obj.items() if k != "type"}
        return DedupReport(**fields)
    raise ValueError(f"unknown report type {kind!r}")
