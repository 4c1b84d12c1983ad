"""Character-n-gram language identification with threshold filtering.

A linear softmax classifier over hashed character 3-5-grams (FNV-1a modulo a
fixed bucket count), trained by per-example SGD. Text is lowercased and
whitespace-normalized before n-gram extraction. Training sorts the examples
canonically before applying its own seeded shuffle, so the resulting model is
independent of input document order.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import CorpusShard, fnv1a_bytes
from .errors import ConfigError, UnscorableError
from .rng import SplitMix64

DEFAULT_BUCKETS = 2**18
NGRAM_MIN = 3
NGRAM_MAX = 5

_MAGIC = b"KORPUSLID\x01"


@dataclass
class LangIdModel:
    labels: tuple[str, ...]
    feature_buckets: int
    weights: np.ndarray  # [labels, buckets]
    bias: np.ndarray  # [labels]
    ngram_min: int = NGRAM_MIN
    ngram_max: int = NGRAM_MAX
    loss_history: tuple[float, ...] = ()


@dataclass(frozen=True)
class LangScore:
    label: str
    prob: float


def _normalize(text: str) -> str:
    return " ".join(text.split()).lower()


def extract_features(text: str, buckets: int = DEFAULT_BUCKETS,
                     ngram_min: int = NGRAM_MIN, ngram_max: int = NGRAM_MAX):
    """Hashed n-gram counts, L2-normalized so the per-example SGD step size is
    independent of text length. Returns (bucket_ids, values) arrays."""
    norm = _normalize(text)
    counts: Counter[int] = Counter()
    for n in range(ngram_min, ngram_max + 1):
        for i in range(len(norm) - n + 1):
            counts[fnv1a_bytes(norm[i:i + n].encode("utf-8")) % buckets] += 1
    if not counts:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.float64)
    idx = np.fromiter(counts.keys(), dtype=np.int64, count=len(counts))
    vals = np.fromiter(counts.values(), dtype=np.float64, count=len(counts))
    vals /= np.sqrt(vals @ vals)
    return idx, vals


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max()
    e = np.exp(z)
    return e / e.sum()


def train_langid(
    corpora: dict[str, CorpusShard],
    epochs: int = 10,
    learning_rate: float = 1.0,
    seed: int = 0,
    feature_buckets: int = DEFAULT_BUCKETS,
) -> LangIdModel:
    """Train a softmax classifier; deterministic for a given seed."""
    if len(corpora) < 2:
        raise ConfigError("language identification needs at least 2 languages")
    labels = tuple(sorted(corpora))
    examples = []
    for li, label in enumerate(labels):
        shard = corpora[label]
        non_empty = 0
        for doc in shard.documents:
            idx, vals = extract_features(doc.text, feature_buckets)
            if idx.size == 0:
                continue
            non_empty += 1
            examples.append((label, doc.text, li, idx, vals))
        if non_empty == 0:
            raise ConfigError(f"language {label!r} has no non-empty documents")
    # Canonical order first, then the seeded shuffle: input permutation cannot
    # change the model.
    examples.sort(key=lambda e: (e[0], e[1]))
    rng = SplitMix64(seed)
    weights = np.zeros((len(labels), feature_buckets), dtype=np.float64)
    bias = np.zeros(len(labels), dtype=np.float64)

    def mean_loss() -> float:
        total = 0.0
        for _, _, li, idx, vals in examples:
            probs = _softmax(weights[:, idx] @ vals + bias)
            total -= float(np.log(max(probs[li], 1e-300)))
        return total / len(examples)

    losses = []
    best = mean_loss()
    total_updates = max(1, max(0, epochs) * len(examples))
    done = 0
    for _ in range(max(0, epochs)):
        rng.shuffle(examples)
        prev_w = weights.copy()
        prev_b = bias.copy()
        for _, _, li, idx, vals in examples:
            lr = learning_rate * (1.0 - done / total_updates)  # linear decay
            done += 1
            logits = weights[:, idx] @ vals + bias
            probs = _softmax(logits)
            grad = probs.copy()
            grad[li] -= 1.0
            weights[:, idx] -= lr * np.outer(grad, vals)
            bias -= lr * grad
        loss = mean_loss()
        if loss > best:
            # Backtrack: an epoch that worsened the evaluated loss is dropped,
            # keeping the recorded epoch losses non-increasing.
            weights = prev_w
            bias = prev_b
            loss = best
        best = loss
        losses.append(loss)
    return LangIdModel(
        labels=labels,
        feature_buckets=feature_buckets,
        weights=weights,
        bias=bias,
        loss_history=tuple(losses),
    )


def score_probs(model: LangIdModel, text: str) -> np.ndarray:
    """Full softmax distribution over labels; raises UnscorableError on no features."""
    idx, vals = extract_features(text, model.feature_buckets, model.ngram_min, model.ngram_max)
    if idx.size == 0:
        raise UnscorableError("no character n-grams extracted; text is unscorable")
    return _softmax(model.weights[:, idx] @ vals + model.bias)


def score(model: LangIdModel, text: str) -> LangScore:
    probs = score_probs(model, text)
    best = int(np.argmax(probs))
    return LangScore(label=model.labels[best], prob=float(probs[best]))


def filter_language(
    model: LangIdModel,
    shard: CorpusShard,
    target: str,
    threshold: float,
) -> CorpusShard:
    """Keep documents scored as `target` with probability >= threshold."""
    if not 0.0 <= threshold <= 1.0:
        raise ConfigError("threshold must lie in [0, 1]")
    if target not in model.labels:
        raise ConfigError(f"target language {target!r} not among model labels {model.labels}")
    kept = []
    for doc in shard.documents:
        try:
            s = score(model, doc.text)
        except UnscorableError:
            continue
        if s.label == target and s.prob >= threshold:
            kept.append(doc)
    return CorpusShard.from_documents(kept, source=shard.manifest.source)


def save_model(model: LangIdModel, path: str | Path) -> None:
    """Byte-deterministic binary serialization (little-endian float64)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = json.dumps({
        "labels": list(model.labels),
        "feature_buckets": model.feature_buckets,
        "ngram_min": model.ngram_min,
        "ngram_max": model.ngram_max,
        "loss_history": list(model.loss_history),
    }, ensure_ascii=False, sort_keys=True)
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(header.encode("utf-8"))
        fh.write(b"\n")
        fh.write(model.weights.astype("<f8").tobytes())
        fh.write(model.bias.astype("<f8").tobytes())


def load_model(path: str | Path) -> LangIdModel:
    with open(path, "rb") as fh:
        magic = fh.read(len(_MAGIC))
        if magic != _MAGIC:
            raise ConfigError(f"{path}: not a language-id model file")
        header = json.loads(fh.readline().decode("utf-8"))
        labels = tuple(header["labels"])
        buckets = int(header["feature_buckets"])
        weights = np.frombuffer(
            fh.read(len(labels) * buckets * 8), dtype="<f8"
        ).reshape(len(labels), buckets).astype(np.float64)
        bias = np.frombuffer(fh.read(len(labels) * 8), dtype="<f8").astype(np.float64)
    return LangIdModel(
        labels=labels,
        feature_buckets=buckets,
        weights=weights,
        bias=bias,
        ngram_min=int(header["ngram_min"]),
        ngram_max=int(header["ngram_max"]),
        loss_history=tuple(header.get("loss_history", ())),
    )
