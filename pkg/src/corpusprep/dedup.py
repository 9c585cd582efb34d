"""Duplicate removal at three granularities: paragraphs, exact, fuzzy.

Exact dedup hashes digit/case/whitespace-normalized text. Fuzzy dedup builds
MinHash signatures over word shingles, finds candidate pairs with LSH banding
and keeps only edges whose exact shingle-set Jaccard clears the threshold, so
removal precision is exact and banding only affects recall.
"""
from __future__ import annotations

import dataclasses
import hashlib
import re
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .documents import Document, FilterDecision

_DIGITS = re.compile(r"\d")
_WHITESPACE = re.compile(r"\s+")

_U64 = np.uint64
_MASK64 = (1 << 64) - 1


def normalize_for_hash(text: str) -> str:
    """Lowercase, map decimal digits to 0, collapse whitespace runs, strip."""
    text = text.lower()
    text = _DIGITS.sub("0", text)
    text = _WHITESPACE.sub(" ", text)
    return text.strip()


def normalized_digest(text: str) -> bytes:
    """128-bit digest of the normalized text."""
    return hashlib.blake2b(normalize_for_hash(text).encode("utf-8"), digest_size=16).digest()


def _hash64(data: bytes) -> int:
    return int.from_bytes(hashlib.blake2b(data, digest_size=8).digest(), "little")


def shingle(text: str, width: int) -> set[int]:
    """Hashes of each `width`-word window of the normalized text.

    Documents shorter than `width` words yield a single whole-text shingle;
    text that normalizes to nothing yields the empty set.
    """
    if width < 1:
        raise ValueError("shingle width must be >= 1")
    words = normalize_for_hash(text).split(" ")
    words = [w for w in words if w]
    if not words:
        return set()
    if len(words) < width:
        return {_hash64(" ".join(words).encode("utf-8"))}
    return {
        _hash64(" ".join(words[i : i + width]).encode("utf-8"))
        for i in range(len(words) - width + 1)
    }


def jaccard(a: set[int], b: set[int]) -> float:
    """Exact Jaccard similarity of two shingle sets."""
    if not a or not b:
        return 0.0
    inter = len(a & b)
    return inter / (len(a) + len(b) - inter)


# -- MinHash ---------------------------------------------------------------


def _splitmix64(state: int) -> tuple[int, int]:
    state = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31), state


@dataclass(frozen=True)
class MinHashParams:
    """Seeded hash family and banding geometry for fuzzy dedup."""

    seed: int = 117117
    num_permutations: int = 117
    bands: int = 9
    rows: int = 13
    shingle_width: int = 13

    def __post_init__(self) -> None:
        if self.bands * self.rows != self.num_permutations:
            raise ValueError(
                f"bands*rows must equal num_permutations "
                f"({self.bands}*{self.rows} != {self.num_permutations})"
            )
        if self.shingle_width < 1:
            raise ValueError("shingle_width must be >= 1")

    def offsets(self) -> np.ndarray:
        """Per-permutation 64-bit offsets derived from the global seed."""
        out = np.empty(self.num_permutations, dtype=_U64)
        state = self.seed & _MASK64
        for i in range(self.num_permutations):
            value, state = _splitmix64(state)
            out[i] = value
        return out


def _mix64(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> _U64(30))) * _U64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> _U64(27))) * _U64(0x94D049BB133111EB)
    return z ^ (z >> _U64(31))


def minhash_signature(
    shingles: set[int], params: MinHashParams, offsets: np.ndarray | None = None
) -> np.ndarray:
    """Per-permutation minima of the seeded multiply-xor-shift hash family."""
    if not shingles:
        raise ValueError("cannot sign an empty shingle set")
    if offsets is None:
        offsets = params.offsets()
    arr = np.fromiter(shingles, dtype=_U64, count=len(shingles))
    mixed = _mix64(arr[None, :] ^ offsets[:, None])
    return mixed.min(axis=1)


def signature_agreement(a: np.ndarray, b: np.ndarray) -> float:
    """Fraction of matching signature slots; unbiased Jaccard estimator."""
    if a.shape != b.shape:
        raise ValueError("signature length mismatch")
    return float(np.mean(a == b))


def lsh_candidates(
    signatures: Iterable[tuple[str, np.ndarray]], params: MinHashParams
) -> set[tuple[str, str]]:
    """Candidate id pairs sharing at least one full band of signature rows."""
    buckets: dict[tuple[int, bytes], list[str]] = {}
    for doc_id, sig in signatures:
        if sig.shape != (params.num_permutations,):
            raise ValueError(
                f"signature for {doc_id} has length {sig.shape}, "
                f"expected {params.num_permutations}"
            )
        for band in range(params.bands):
            key = (band, sig[band * params.rows : (band + 1) * params.rows].tobytes())
            buckets.setdefault(key, []).append(doc_id)
    pairs: set[tuple[str, str]] = set()
    for members in buckets.values():
        if len(members) < 2:
            continue
        for i in range(len(members)):
            for j in range(i + 1, len(members)):
                a, b = members[i], members[j]
                pairs.add((a, b) if a < b else (b, a))
    return pairs


@dataclass
class DuplicateCluster:
    """Connected component of verified near-duplicates; representative is kept."""

    member_ids: set[str]
    representative: str


class UnionFind:
    """Disjoint sets over string ids with path compression."""

    def __init__(self) -> None:
        self.parent: dict[str, str] = {}

    def find(self, x: str) -> str:
        if x not in self.parent:
            self.parent[x] = x
            return x
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, x: str, y: str) -> None:
        rx, ry = self.find(x), self.find(y)
        if rx != ry:
            self.parent[max(rx, ry)] = min(rx, ry)


def verify_and_cluster(
    candidates: Iterable[tuple[str, str]],
    shingle_sets: dict[str, set[int]],
    threshold: float = 0.8,
) -> list[DuplicateCluster]:
    """Keep candidate edges with exact Jaccard >= threshold, return components.

    Only components of two or more members are returned; the representative is
    the lexicographically smallest member id.
    """
    uf = UnionFind()
    for a, b in sorted(candidates):
        if jaccard(shingle_sets[a], shingle_sets[b]) >= threshold:
            uf.union(a, b)
    groups: dict[str, set[str]] = {}
    for member in uf.parent:
        groups.setdefault(uf.find(member), set()).add(member)
    clusters = [
        DuplicateCluster(member_ids=members, representative=min(members))
        for members in groups.values()
        if len(members) >= 2
    ]
    clusters.sort(key=lambda c: c.representative)
    return clusters


# -- streaming dedupers ----------------------------------------------------


class ParagraphDeduper:
    """First-occurrence paragraph filter over one processing group.

    Paragraphs are newline-separated segments; a later occurrence of an
    already-seen normalized paragraph is deleted from its document. Documents
    left without any non-empty paragraph are dropped.
    """

    stage = "paragraph_dedup"

    def __init__(self) -> None:
        self._seen: set[bytes] = set()
        self.paragraphs_removed = 0

    def process(self, doc: Document) -> tuple[Document | None, FilterDecision | None]:
        kept_lines: list[str] = []
        removed_here = 0
        survivors = 0
        for line in doc.text.split("\n"):
            norm = normalize_for_hash(line)
            if not norm:
                kept_lines.append(line)
                continue
            digest = hashlib.blake2b(norm.encode("utf-8"), digest_size=16).digest()
            if digest in self._seen:
                removed_here += 1
                continue
            self._seen.add(digest)
            kept_lines.append(line)
            survivors += 1
        self.paragraphs_removed += removed_here
        if survivors == 0:
            return None, FilterDecision(
                id=doc.id,
                stage=self.stage,
                kept=False,
                reasons=["all_paragraphs_duplicated"],
                metadata={"paragraphs_removed": removed_here},
            )
        if removed_here == 0:
            return doc, None
        return dataclasses.replace(doc, text="\n".join(kept_lines)), None


def dedup_paragraphs(docs: Iterable[Document]) -> Iterator[Document]:
    """Stream documents through a fresh paragraph-dedup group."""
    deduper = ParagraphDeduper()
    for doc in docs:
        kept, _ = deduper.process(doc)
        if kept is not None:
            yield kept


class ExactDeduper:
    """Keep the first document per normalized-text digest, in stream order."""

    stage = "exact_dedup"

    def __init__(self) -> None:
        self._winners: dict[bytes, str] = {}

    def process(self, doc: Document) -> FilterDecision | None:
        """Return a removal decision for duplicates, None when the doc is kept."""
        digest = normalized_digest(doc.text)
        winner = self._winners.get(digest)
        if winner is None:
            self._winners[digest] = doc.id
            return None
        return FilterDecision(
            id=doc.id,
            stage=self.stage,
            kept=False,
            reasons=["exact_duplicate"],
            metadata={"winner_id": winner},
        )


def dedup_exact(docs: Iterable[Document]) -> tuple[list[Document], list[FilterDecision]]:
    """One pass of exact dedup; returns (kept documents, removal log)."""
    deduper = ExactDeduper()
    kept: list[Document] = []
    removals: list[FilterDecision] = []
    for doc in docs:
        decision = deduper.process(doc)
        if decision is None:
            kept.append(doc)
        else:
            removals.append(decision)
    return kept, removals


# -- signature cache file --------------------------------------------------

_CACHE_MAGIC = b"CPSC"
_CACHE_VERSION = 1
_HEADER = struct.Struct("<4sIQIIII")


def write_signature_cache(
    path: str | Path,
    params: MinHashParams,
    items: Iterable[tuple[str, np.ndarray]],
) -> int:
    """Write (id, signature) records behind a fixed parameter header."""
    count = 0
    with open(path, "wb") as fh:
        fh.write(
            _HEADER.pack(
                _CACHE_MAGIC,
                _CACHE_VERSION,
                params.seed & _MASK64,
                params.num_permutations,
                params.bands,
                params.rows,
                params.shingle_width,
            )
        )
        for doc_id, sig in items:
            raw = bytes.fromhex(doc_id)
            if len(raw) != 16:
                raise ValueError(f"document id {doc_id!r} is not a 128-bit hex digest")
            fh.write(raw)
            fh.write(sig.astype("<u8", copy=False).tobytes())
            count += 1
    return count


def read_signature_cache(path: str | Path) -> tuple[MinHashParams, list[tuple[str, np.ndarray]]]:
    """Read a signature cache written by write_signature_cache."""
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise ValueError(f"signature cache {path} too short for header")
    magic, version, seed, perms, bands, rows, width = _HEADER.unpack_from(data, 0)
    if magic != _CACHE_MAGIC or version != _CACHE_VERSION:
        raise ValueError(f"unrecognized signature cache format in {path}")
    params = MinHashParams(
        seed=seed, num_permutations=perms, bands=bands, rows=rows, shingle_width=width
    )
    record = 16 + perms * 8
    body = data[_HEADER.size :]
    if len(body) % record:
        raise ValueError(f"signature cache {path} has a partial record")
    items: list[tuple[str, np.ndarray]] = []
    for off in range(0, len(body), record):
        doc_id = body[off : off + 16].hex()
        sig = np.frombuffer(body, dtype="<u8", count=perms, offset=off + 16)
        items.append((doc_id, sig.astype(_U64)))
    return params, items
