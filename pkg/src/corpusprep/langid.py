"""Hashed character n-gram language scoring and the keep/drop language gate.

The reference classifier is a multinomial logistic regression over hashed
character n-gram counts, trained by full-batch gradient descent. It stands in
for an external identifier; a pass-through scorer that reads precomputed
scores is provided for corpora labeled elsewhere.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Protocol

import numpy as np
from scipy import sparse

from .documents import Document, FilterDecision

MODEL_FORMAT_VERSION = 1

_POLY_MULT = np.uint64(0x100000001B3)  # rolling-hash multiplier over codepoints
_SHIFT_MULT = np.uint64(0x9E3779B97F4A7C15)  # odd multiplier for multiply-shift bucketing


class ModelError(Exception):
    """Model is missing, malformed or inconsistent with its inputs."""


@dataclass
class LangPrediction:
    lang: str
    score: float


@dataclass
class LangIdModel:
    classes: list[str]
    weights: np.ndarray  # (n_classes, hash_buckets)
    ngram_range: tuple[int, int]
    hash_buckets: int
    window_chars: int = 4000

    def __post_init__(self) -> None:
        min_n, max_n = self.ngram_range
        if not (1 <= min_n <= max_n):
            raise ModelError(f"invalid ngram_range {self.ngram_range}")
        if self.hash_buckets < 2 or self.hash_buckets & (self.hash_buckets - 1):
            raise ModelError("hash_buckets must be a power of two >= 2")
        if self.weights.shape != (len(self.classes), self.hash_buckets):
            raise ModelError(
                f"weight matrix {self.weights.shape} does not match "
                f"{len(self.classes)} classes x {self.hash_buckets} buckets"
            )


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def _feature_counts(
    text: str, min_n: int, max_n: int, hash_buckets: int, window_chars: int
) -> dict[int, float]:
    """Hashed n-gram counts via a vectorized rolling polynomial hash."""
    window = text[:window_chars]
    if not window:
        return {}
    bits = hash_buckets.bit_length() - 1
    shift = np.uint64(64 - bits)
    codes = np.frombuffer(window.encode("utf-32-le"), dtype="<u4").astype(np.uint64)
    pieces = []
    for n in range(min_n, max_n + 1):
        m = len(codes) - n + 1
        if m <= 0:
            break
        h = np.zeros(m, dtype=np.uint64)
        for j in range(n):
            h = h * _POLY_MULT + codes[j : j + m]
        pieces.append((_mix(h) * _SHIFT_MULT) >> shift)
    if not pieces:
        return {}
    buckets, counts = np.unique(np.concatenate(pieces), return_counts=True)
    vec = counts.astype(np.float64)
    vec /= np.linalg.norm(vec)
    return {int(b): float(v) for b, v in zip(buckets, vec)}


def featurize(text: str, model: LangIdModel) -> dict[int, float]:
    """L2-normalized hashed n-gram counts over the model's character window."""
    min_n, max_n = model.ngram_range
    return _feature_counts(text, min_n, max_n, model.hash_buckets, model.window_chars)


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def predict_scores(text: str, model: LangIdModel) -> np.ndarray:
    """Class probabilities for one text, aligned with model.classes."""
    feats = featurize(text, model)
    logits = np.zeros(len(model.classes))
    if feats:
        idx = np.fromiter(feats.keys(), dtype=np.int64, count=len(feats))
        vals = np.fromiter(feats.values(), dtype=np.float64, count=len(feats))
        logits = model.weights[:, idx] @ vals
    return _softmax(logits)


def predict(text: str, model: LangIdModel) -> LangPrediction:
    """Most probable language and its probability."""
    probs = predict_scores(text, model)
    best = int(np.argmax(probs))
    return LangPrediction(lang=model.classes[best], score=float(probs[best]))


def _build_matrix(
    texts: Iterable[str], min_n: int, max_n: int, hash_buckets: int, window_chars: int
) -> sparse.csr_matrix:
    data: list[float] = []
    indices: list[int] = []
    indptr = [0]
    for text in texts:
        feats = _feature_counts(text, min_n, max_n, hash_buckets, window_chars)
        for b in sorted(feats):
            indices.append(b)
            data.append(feats[b])
        indptr.append(len(indices))
    return sparse.csr_matrix(
        (np.array(data), np.array(indices, dtype=np.int64), np.array(indptr, dtype=np.int64)),
        shape=(len(indptr) - 1, hash_buckets),
    )


def loss_and_grad(
    weights: np.ndarray, X: sparse.csr_matrix, y: np.ndarray, l2: float
) -> tuple[float, np.ndarray]:
    """Mean cross-entropy with L2 penalty, and its gradient in the weights."""
    n = X.shape[0]
    probs = _softmax(X @ weights.T)
    loss = -float(np.mean(np.log(probs[np.arange(n), y] + 1e-300)))
    loss += 0.5 * l2 * float(np.sum(weights * weights))
    err = probs
    err[np.arange(n), y] -= 1.0
    grad = (X.T @ err).T / n + l2 * weights
    return loss, np.asarray(grad)


def train(
    corpus: list[tuple[str, str]],
    ngram_range: tuple[int, int] = (1, 3),
    hash_buckets: int = 2**18,
    window_chars: int = 4000,
    iterations: int = 200,
    learning_rate: float = 2.0,
    l2: float = 1e-4,
    seed: int = 0,
) -> LangIdModel:
    """Fit the hashed n-gram logistic classifier on (text, lang) pairs.

    Deterministic for a fixed seed and iteration count.
    """
    if not corpus:
        raise ModelError("training corpus is empty")
    classes = sorted({lang for _, lang in corpus})
    if len(classes) < 2:
        raise ModelError(f"need at least 2 distinct labels, got {classes}")
    class_index = {c: i for i, c in enumerate(classes)}
    min_n, max_n = ngram_range
    X = _build_matrix(
        (text for text, _ in corpus), min_n, max_n, hash_buckets, window_chars
    )
    y = np.array([class_index[lang] for _, lang in corpus], dtype=np.int64)
    rng = np.random.default_rng(seed)
    weights = rng.normal(0.0, 0.01, size=(len(classes), hash_buckets))
    for _ in range(iterations):
        _, grad = loss_and_grad(weights, X, y, l2)
        weights -= learning_rate * grad
    return LangIdModel(
        classes=classes,
        weights=weights,
        ngram_range=ngram_range,
        hash_buckets=hash_buckets,
        window_chars=window_chars,
    )


def save_model(model: LangIdModel, path: str | Path) -> None:
    """Serialize to a single versioned .npz file."""
    with open(path, "wb") as fh:
        np.savez(
            fh,
            format_version=np.array([MODEL_FORMAT_VERSION], dtype=np.int64),
            classes=np.array(model.classes, dtype="U"),
            ngram_range=np.array(model.ngram_range, dtype=np.int64),
            hash_buckets=np.array([model.hash_buckets], dtype=np.int64),
            window_chars=np.array([model.window_chars], dtype=np.int64),
            weights=model.weights,
        )


def load_model(path: str | Path) -> LangIdModel:
    try:
        payload = np.load(path, allow_pickle=False)
    except (OSError, ValueError) as exc:
        raise ModelError(f"cannot load language model from {path}: {exc}") from exc
    if "format_version" not in payload:
        raise ModelError(f"{path}: not a language model file (missing version)")
    version = int(payload["format_version"][0])
    if version != MODEL_FORMAT_VERSION:
        raise ModelError(f"{path}: unsupported model format version {version}")
    return LangIdModel(
        classes=[str(c) for c in payload["classes"]],
        weights=payload["weights"],
        ngram_range=(int(payload["ngram_range"][0]), int(payload["ngram_range"][1])),
        hash_buckets=int(payload["hash_buckets"][0]),
        window_chars=int(payload["window_chars"][0]),
    )


# -- scorers and the gate ----------------------------------------------------


class LanguageScorer(Protocol):
    def score_document(self, doc: Document) -> LangPrediction: ...


class HashedNgramScorer:
    """Scores documents with the reference classifier."""

    def __init__(self, model: LangIdModel):
        self.model = model

    def score_document(self, doc: Document) -> LangPrediction:
        return predict(doc.text, self.model)


class PrecomputedScorer:
    """Reads (lang, score) computed by an external identifier.

    The score table maps document id or URL to a prediction; a document with
    neither key present is a data error.
    """

    def __init__(self, scores: dict[str, tuple[str, float]]):
        self.scores = scores

    @classmethod
    def from_jsonl(cls, path: str | Path) -> "PrecomputedScorer":
        scores: dict[str, tuple[str, float]] = {}
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                rec = json.loads(line)
                lang, score = rec["lang"], float(rec["score"])
                if not 0.0 <= score <= 1.0:
                    raise ModelError(f"{path}:{lineno}: score {score} outside [0,1]")
                for key in ("id", "url"):
                    if key in rec:
                        scores[rec[key]] = (lang, score)
        return cls(scores)

    def score_document(self, doc: Document) -> LangPrediction:
        hit = self.scores.get(doc.id) or self.scores.get(doc.url)
        if hit is None:
            raise KeyError(f"no precomputed language score for document {doc.id} ({doc.url})")
        return LangPrediction(lang=hit[0], score=hit[1])


def gate(
    doc: Document,
    pred: LangPrediction,
    target: str = "ro",
    threshold: float = 0.5,
) -> FilterDecision:
    """Keep the document iff it is the target language with score strictly above threshold."""
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold {threshold} outside [0,1]")
    metadata = {"lang": pred.lang, "score": pred.score}
    if pred.lang != target:
        return FilterDecision(
            id=doc.id, stage="langid", kept=False, reasons=["wrong_language"], metadata=metadata
        )
    if pred.score <= threshold:
        return FilterDecision(
            id=doc.id,
            stage="langid",
            kept=False,
            reasons=["langid_below_threshold"],
            metadata=metadata,
        )
    return FilterDecision(id=doc.id, stage="langid", kept=True, metadata=metadata)
