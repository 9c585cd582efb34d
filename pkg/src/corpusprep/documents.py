"""Shared document and decision records used by every pipeline stage."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field


@dataclass
class Document:
    """One web-page text record flowing through the pipeline."""

    id: str
    url: str
    snapshot: str
    text: str
    fetch_date: str
    lang: str | None = None
    lang_score: float | None = None

    def to_json_line(self) -> str:
        # Field order is part of the corpus file contract.
        return json.dumps(
            {
                "id": self.id,
                "url": self.url,
                "snapshot": self.snapshot,
                "fetch_date": self.fetch_date,
                "lang": self.lang,
                "lang_score": self.lang_score,
                "text": self.text,
            },
            ensure_ascii=False,
        )

    @classmethod
    def from_json_line(cls, line: str) -> "Document":
        d = json.loads(line)
        return cls(
            id=d["id"],
            url=d["url"],
            snapshot=d["snapshot"],
            text=d["text"],
            fetch_date=d["fetch_date"],
            lang=d.get("lang"),
            lang_score=d.get("lang_score"),
        )


@dataclass
class FilterDecision:
    """Kept/removed verdict with machine-readable reason codes for one stage."""

    id: str
    stage: str
    kept: bool
    reasons: list[str] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.kept and not self.reasons:
            raise ValueError("removed decision must carry at least one reason")

    def to_json_line(self) -> str:
        rec: dict = {
            "id": self.id,
            "stage": self.stage,
            "kept": self.kept,
            "reason": self.reasons[0] if self.reasons else None,
            "reasons": self.reasons,
        }
        rec.update(self.metadata)
        return json.dumps(rec, ensure_ascii=False, sort_keys=True)


def document_id(snapshot: str, url: str, offset: int) -> str:
    """Deterministic 128-bit hex id for a (snapshot, url, record offset) triple."""
    key = f"{snapshot}\x1f{url}\x1f{offset}".encode("utf-8")
    return hashlib.blake2b(key, digest_size=16).hexdigest()
