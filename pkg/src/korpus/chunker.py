"""Sentence segmentation and token-budget chunking ahead of translation.

Splitting operates on whitespace-normalized text: a boundary is sentence-final
punctuation (. ! ? or an ellipsis) followed by a space and an uppercase letter
or digit, unless the word ending at the punctuation is a known German
abbreviation. Chunks are packed greedily in order; a single sentence larger
than the budget becomes its own chunk flagged oversized rather than being cut
mid-sentence.
"""

from __future__ import annotations

import subprocess
from dataclasses import dataclass
from typing import Callable, Sequence

from .core import Document, tokenize

# Lowercased, with trailing period; matched against the word before a split candidate.
GERMAN_ABBREVIATIONS = frozenset({
    "z.b.", "dr.", "bzw.", "ca.", "nr.", "usw.", "etc.", "prof.", "d.h.",
    "u.a.", "vgl.", "bspw.", "ggf.", "evtl.", "inkl.", "mio.", "mrd.",
    "abs.", "art.", "hr.", "fr.", "st.", "s.", "o.ä.", "u.ä.", "z.t.",
})

_TERMINALS = ".!?…"


@dataclass(frozen=True)
class Chunk:
    doc_id: str
    index: int
    sentences: tuple[str, ...]
    token_count: int
    oversized: bool = False

    @property
    def text(self) -> str:
        return " ".join(self.sentences)


@dataclass(frozen=True)
class TranslatorSpec:
    name: str
    beam_size: int = 1
    max_context: int = 156

    def __post_init__(self):
        if self.beam_size < 1:
            raise ValueError("beam_size must be >= 1")


@dataclass(frozen=True)
class TranslationResult:
    chunk: Chunk
    text: str | None
    error: str | None


def split_sentences(text: str) -> list[str]:
    """Rule-based sentence split; joining the result with spaces reproduces the
    whitespace-normalized input exactly."""
    norm = " ".join(text.split())
    if not norm:
        return []
    boundaries = []
    for i, ch in enumerate(norm):
        if ch != " " or i + 1 >= len(norm):
            continue
        prev = norm[i - 1]
        nxt = norm[i + 1]
        if prev not in _TERMINALS:
            continue
        if not (nxt.isupper() or nxt.isdigit()):
            continue
        word = norm[:i].rsplit(" ", 1)[-1]
        if word.lower() in GERMAN_ABBREVIATIONS:
            continue
        boundaries.append(i)
    sentences = []
    start = 0
    for b in boundaries:
        sentences.append(norm[start:b])
        start = b + 1
    sentences.append(norm[start:])
    return sentences


def chunk_sentences(
    sentences: Sequence[str],
    budget: int,
    token_counter: Callable[[str], int] | None = None,
    doc_id: str = "",
) -> list[Chunk]:
    """Greedy first-fit packing in order; lossless over the input sentences."""
    if budget < 1:
        raise ValueError("budget must be >= 1")
    counter = token_counter or (lambda s: len(tokenize(s)))
    chunks: list[Chunk] = []
    current: list[str] = []
    current_tokens = 0

    def flush(oversized: bool = False):
        nonlocal current, current_tokens
        if current:
            chunks.append(Chunk(
                doc_id=doc_id,
                index=len(chunks),
                sentences=tuple(current),
                token_count=current_tokens,
                oversized=oversized,
            ))
            current = []
            current_tokens = 0

    for sentence in sentences:
        n = counter(sentence)
        if n > budget:
            flush()
            current = [sentence]
            current_tokens = n
            flush(oversized=True)
            continue
        if current_tokens + n > budget:
            flush()
        current.append(sentence)
        current_tokens += n
    flush()
    return chunks


def chunk_document(
    doc: Document,
    budget: int,
    token_counter: Callable[[str], int] | None = None,
) -> list[Chunk]:
    return chunk_sentences(split_sentences(doc.text), budget, token_counter, doc_id=doc.id)


class Translator:
    """Base translator: a spec plus a text -> text callable."""

    def __init__(self, spec: TranslatorSpec, fn: Callable[[str], str]):
        self.spec = spec
        self._fn = fn

    def translate(self, text: str) -> str:
        return self._fn(text)

    def translate_many(self, texts: Sequence[str]) -> list[str | Exception]:
        out: list[str | Exception] = []
        for t in texts:
            try:
                out.append(self.translate(t))
            except Exception as exc:  # per-chunk failures are recorded, not raised
                out.append(exc)
        return out


def identity_translator() -> Translator:
    return Translator(TranslatorSpec(name="identity"), lambda s: s)


class SubprocessTranslator(Translator):
    """Line protocol: one chunk text per stdin line, one translation per stdout line."""

    def __init__(self, command: str | list[str], name: str | None = None,
                 beam_size: int = 1, max_context: int = 156):
        self.command = command
        spec = TranslatorSpec(
            name=name or (command if isinstance(command, str) else " ".join(command)),
            beam_size=beam_size,
            max_context=max_context,
        )
        super().__init__(spec, self._translate_one)

    def _translate_one(self, text: str) -> str:
        result = self.translate_many([text])[0]
        if isinstance(result, Exception):
            raise result
        return result

    def translate_many(self, texts: Sequence[str]) -> list[str | Exception]:
        if not texts:
            return []
        payload = "\n".join(t.replace("\n", " ") for t in texts) + "\n"
        proc = subprocess.run(
            self.command,
            input=payload,
            capture_output=True,
            text=True,
            shell=isinstance(self.command, str),
        )
        if proc.returncode != 0:
            err = RuntimeError(f"translator exited {proc.returncode}: {proc.stderr.strip()}")
            return [err] * len(texts)
        lines = proc.stdout.split("\n")
        out: list[str | Exception] = []
        for i in range(len(texts)):
            if i < len(lines) and (lines[i] or i < len(lines) - 1):
                out.append(lines[i])
            else:
                out.append(RuntimeError(f"translator produced no output for chunk {i}"))
        return out


def translate_chunks(chunks: Sequence[Chunk], translator: Translator) -> list[TranslationResult]:
    """One result per chunk, in order; failures are recorded per chunk."""
    outputs = translator.translate_many([c.text for c in chunks])
    results = []
    for chunk, out in zip(chunks, outputs):
        if isinstance(out, Exception):
            results.append(TranslationResult(chunk=chunk, text=None, error=str(out)))
        else:
            results.append(TranslationResult(chunk=chunk, text=out, error=None))
    return results
