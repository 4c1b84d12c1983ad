"""Text cleaning applied before language identification.

Order is fixed: HTML entity unescaping, URL removal, then the minimum-word
filter measured on the cleaned text. Cleaning never touches document ids,
sources, or domains.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, replace

from .core import CorpusShard, Document, tokenize

_NAMED_ENTITIES = {
    "amp": "&",
    "lt": "<",
    "gt": ">",
    "quot": '"',
    "apos": "'",
    "nbsp": " ",
}

_ENTITY_RE = re.compile(r"&(#[0-9]+|#[xX][0-9a-fA-F]+|amp|lt|gt|quot|apos|nbsp);")

# Schemes match anywhere; bare "www." only at the start of a whitespace-delimited word.
_URL_RE = re.compile(r"(?:(?:https?|ftp)://|(?<!\S)www\.)\S*", re.IGNORECASE)


def _decode_entity(match: re.Match) -> str:
    body = match.group(1)
    if body[0] == "#":
        try:
            cp = int(body[2:], 16) if body[1] in "xX" else int(body[1:], 10)
        except ValueError:
            return match.group(0)
        # Refuse surrogates and out-of-range codepoints; they cannot round-trip UTF-8.
        if cp > 0x10FFFF or 0xD800 <= cp <= 0xDFFF:
            return match.group(0)
        return chr(cp)
    return _NAMED_ENTITIES[body]


def unescape_html(text: str) -> str:
    """Decode the standard named entities plus numeric (decimal/hex) references.

    Malformed entities pass through unchanged. Like any entity decoder, the
    function is idempotent only on text whose output contains no further
    entities (decoding "&amp;lt;" twice would yield "<").
    """
    return _ENTITY_RE.sub(_decode_entity, text)


def strip_urls(text: str) -> tuple[str, int]:
    """Delete URL substrings up to the next whitespace; collapse the hole to one space.

    Covers http/https/ftp schemes anywhere and bare "www." word prefixes.
    Returns the cleaned text and the number of URLs removed. Whitespace not
    adjacent to a removed URL is preserved.
    """
    pieces = []
    last = 0
    count = 0
    for m in _URL_RE.finditer(text):
        pieces.append(text[last:m.start()])
        last = m.end()
        count += 1
    if count == 0:
        return text, 0
    pieces.append(text[last:])
    result = pieces[0]
    for nxt in pieces[1:]:
        left = result.rstrip()
        right = nxt.lstrip()
        if left and right:
            result = left + " " + right
        else:
            result = left or right
    return result, count


@dataclass(frozen=True)
class CleanStats:
    input_docs: int
    unescaped_docs: int
    urls_removed: int
    dropped_short: int
    output_docs: int


def clean_document(doc: Document) -> tuple[Document, bool, int]:
    """Unescape entities, then strip URLs; token_count is recomputed."""
    unescaped = unescape_html(doc.text)
    changed = unescaped != doc.text
    cleaned, n_urls = strip_urls(unescaped)
    if cleaned != doc.text:
        doc = replace(doc, text=cleaned, token_count=len(tokenize(cleaned)))
    return doc, changed, n_urls


def filter_short(shard: CorpusShard, min_words: int) -> tuple[CorpusShard, CleanStats]:
    """Drop documents with fewer than min_words whitespace tokens (order preserved)."""
    if min_words < 0:
        raise ValueError("min_words must be >= 0")
    kept = [d for d in shard.documents if d.token_count >= min_words]
    stats = CleanStats(
        input_docs=len(shard.documents),
        unescaped_docs=0,
        urls_removed=0,
        dropped_short=len(shard.documents) - len(kept),
        output_docs=len(kept),
    )
    return CorpusShard.from_documents(kept, source=shard.manifest.source), stats


def clean_shard(shard: CorpusShard, min_words: int) -> tuple[CorpusShard, CleanStats]:
    """Full cleaning pass: unescape -> strip URLs -> min-word filter."""
    cleaned_docs = []
    unescaped_docs = 0
    urls_removed = 0
    for doc in shard.documents:
        doc, changed, n_urls = clean_document(doc)
        unescaped_docs += int(changed)
        urls_removed += n_urls
        cleaned_docs.append(doc)
    cleaned = CorpusShard.from_documents(cleaned_docs, source=shard.manifest.source)
    filtered, fstats = filter_short(cleaned, min_words)
    stats = CleanStats(
        input_docs=len(shard.documents),
        unescaped_docs=unescaped_docs,
        urls_removed=urls_removed,
        dropped_short=fstats.dropped_short,
        output_docs=fstats.output_docs,
    )
    return filtered, stats
