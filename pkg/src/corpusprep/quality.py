"""Repetition, length and line-shape signals with threshold-based rejection.

Two n-gram families are measured: the character share of the single most
frequent n-gram (n = 2..4, every occurrence counted) and the character share
of positions covered by any n-gram that occurs more than once (n = 5..10,
each position counted at most once). All threshold comparisons are strict, so
a document sitting exactly on a bound is kept.
"""
from __future__ import annotations

import statistics
from collections import Counter
from dataclasses import dataclass, field

from .documents import Document, FilterDecision

BULLET_CHARS = frozenset("•‣▪·-*")
PUNCT_TERMINAL_CHARS = frozenset('.!?"»')
ELLIPSIS_SUFFIXES = ("...", "…")

TOP_NGRAM_SIZES = (2, 3, 4)
DUP_NGRAM_SIZES = (5, 6, 7, 8, 9, 10)


def tokenize_words(text: str) -> list[str]:
    """Split on Unicode whitespace, keeping tokens verbatim."""
    return text.split()


@dataclass
class QualitySignals:
    word_count: int
    median_word_length: float
    top_ngram_char_fraction: dict[int, float]
    dup_ngram_char_fraction: dict[int, float]
    bullet_line_fraction: float
    ellipsis_line_fraction: float
    punct_terminal_line_fraction: float

    def to_json_dict(self) -> dict:
        return {
            "word_count": self.word_count,
            "median_word_length": self.median_word_length,
            "top_ngram_char_fraction": {str(n): v for n, v in self.top_ngram_char_fraction.items()},
            "dup_ngram_char_fraction": {str(n): v for n, v in self.dup_ngram_char_fraction.items()},
            "bullet_line_fraction": self.bullet_line_fraction,
            "ellipsis_line_fraction": self.ellipsis_line_fraction,
            "punct_terminal_line_fraction": self.punct_terminal_line_fraction,
        }


@dataclass
class QualityThresholds:
    top_ngram_max: dict[int, float] = field(
        default_factory=lambda: {2: 0.20, 3: 0.18, 4: 0.16}
    )
    dup_ngram_max: dict[int, float] = field(
        default_factory=lambda: {5: 0.15, 6: 0.14, 7: 0.13, 8: 0.12, 9: 0.11, 10: 0.10}
    )
    min_words: int = 50
    max_words: int = 100_000
    min_median_wordlen: float = 3.0
    max_median_wordlen: float = 10.0
    max_bullet_frac: float = 0.90
    max_ellipsis_frac: float = 0.30
    min_punct_frac: float = 0.30


def top_ngram_fraction(words: list[str], n: int) -> float:
    """Character share of the single most frequent word n-gram.

    Every occurrence contributes the n-gram's character mass (overlapping
    occurrences included), capped at 1. Ties on count break toward the larger
    character mass. Fewer than n words gives 0.
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    if len(words) < n:
        return 0.0
    total_chars = sum(len(w) for w in words)
    if total_chars == 0:
        return 0.0
    counts: Counter[tuple[str, ...]] = Counter(
        tuple(words[i : i + n]) for i in range(len(words) - n + 1)
    )
    top_count = max(counts.values())
    best = max(
        count * sum(len(w) for w in gram)
        for gram, count in counts.items()
        if count == top_count
    )
    return min(1.0, best / total_chars)


def dup_ngram_fraction(words: list[str], n: int) -> float:
    """Character share of word positions inside any repeated n-gram.

    Each word position counts once even when covered by several duplicated
    windows. Fewer than n words gives 0.
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    if len(words) < n:
        return 0.0
    total_chars = sum(len(w) for w in words)
    if total_chars == 0:
        return 0.0
    grams = [tuple(words[i : i + n]) for i in range(len(words) - n + 1)]
    counts = Counter(grams)
    covered = [False] * len(words)
    for i, gram in enumerate(grams):
        if counts[gram] > 1:
            for j in range(i, i + n):
                covered[j] = True
    dup_chars = sum(len(w) for w, hit in zip(words, covered) if hit)
    return dup_chars / total_chars


def line_fractions(
    text: str,
    bullet_chars: frozenset[str] = BULLET_CHARS,
    punct_chars: frozenset[str] = PUNCT_TERMINAL_CHARS,
) -> tuple[float, float, float]:
    """(bullet, ellipsis, punctuation-terminal) fractions over non-empty lines.

    Ellipsis-terminated lines are not counted as punctuation-terminal.
    """
    lines = [ln for ln in text.split("\n") if ln.strip()]
    if not lines:
        return 0.0, 0.0, 0.0
    bullets = ellipses = punct = 0
    for line in lines:
        stripped = line.strip()
        if stripped[0] in bullet_chars:
            bullets += 1
        if stripped.endswith(ELLIPSIS_SUFFIXES):
            ellipses += 1
        elif stripped[-1] in punct_chars:
            punct += 1
    n = len(lines)
    return bullets / n, ellipses / n, punct / n


def compute_signals(text: str) -> QualitySignals:
    """All quality signals for one document text."""
    words = tokenize_words(text)
    lengths = [len(w) for w in words]
    median_len = float(statistics.median(lengths)) if lengths else 0.0
    bullet, ellipsis, punct = line_fractions(text)
    return QualitySignals(
        word_count=len(words),
        median_word_length=median_len,
        top_ngram_char_fraction={n: top_ngram_fraction(words, n) for n in TOP_NGRAM_SIZES},
        dup_ngram_char_fraction={n: dup_ngram_fraction(words, n) for n in DUP_NGRAM_SIZES},
        bullet_line_fraction=bullet,
        ellipsis_line_fraction=ellipsis,
        punct_terminal_line_fraction=punct,
    )


def violated_rules(signals: QualitySignals, thresholds: QualityThresholds) -> list[str]:
    """Reason codes for every threshold the signals break (strict comparisons)."""
    reasons: list[str] = []
    if signals.word_count < thresholds.min_words:
        reasons.append("too_few_words")
    if signals.word_count > thresholds.max_words:
        reasons.append("too_many_words")
    if signals.word_count > 0 and not (
        thresholds.min_median_wordlen <= signals.median_word_length <= thresholds.max_median_wordlen
    ):
        reasons.append("median_word_length")
    for n in TOP_NGRAM_SIZES:
        if signals.top_ngram_char_fraction[n] > thresholds.top_ngram_max[n]:
            reasons.append(f"top_ngram_{n}")
    for n in DUP_NGRAM_SIZES:
        if signals.dup_ngram_char_fraction[n] > thresholds.dup_ngram_max[n]:
            reasons.append(f"dup_ngram_{n}")
    if signals.bullet_line_fraction > thresholds.max_bullet_frac:
        reasons.append("bullet_lines")
    if signals.ellipsis_line_fraction > thresholds.max_ellipsis_frac:
        reasons.append("ellipsis_lines")
    if signals.punct_terminal_line_fraction < thresholds.min_punct_frac:
        reasons.append("punct_lines")
    return reasons


def evaluate(
    doc: Document, thresholds: QualityThresholds | None = None
) -> tuple[QualitySignals, FilterDecision]:
    """Compute signals for a document and decide keep/remove."""
    if thresholds is None:
        thresholds = QualityThresholds()
    signals = compute_signals(doc.text)
    reasons = violated_rules(signals, thresholds)
    decision = FilterDecision(
        id=doc.id, stage="quality", kept=not reasons, reasons=reasons
    )
    return signals, decision
