"""Per-shard stage bookkeeping enabling resumable runs."""
from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

VALID_STATUS = ("pending", "running", "done", "failed")


@dataclass
class StageRecord:
    status: str = "pending"
    runs: int = 0
    input_docs: int = 0
    output_docs: int = 0
    input_bytes: int = 0
    output_bytes: int = 0
    output_words: int = 0
    removed_docs: int = 0
    checksum: str = ""
    fingerprint: str = ""
    error: str = ""
    extra: dict = field(default_factory=dict)

    def begin(self) -> None:
        self.status = "running"
        self.runs += 1
        self.error = ""

    def complete(self, **fields) -> None:
        for name, value in fields.items():
            setattr(self, name, value)
        if self.output_docs > self.input_docs:
            raise ValueError(
                f"stage output_docs {self.output_docs} exceeds input_docs {self.input_docs}"
            )
        self.status = "done"

    def fail(self, error: str) -> None:
        self.status = "failed"
        self.error = error


@dataclass
class ShardManifest:
    shard_id: str
    wet_path: str = ""
    stages: dict[str, StageRecord] = field(default_factory=dict)

    def stage(self, name: str) -> StageRecord:
        if name not in self.stages:
            self.stages[name] = StageRecord()
        return self.stages[name]

    def to_dict(self) -> dict:
        return {
            "shard_id": self.shard_id,
            "wet_path": self.wet_path,
            "stages": {name: dataclasses.asdict(rec) for name, rec in self.stages.items()},
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "ShardManifest":
        stages = {}
        for name, rec in raw.get("stages", {}).items():
            if rec.get("status") not in VALID_STATUS:
                rec["status"] = "pending"
            stages[name] = StageRecord(**rec)
        return cls(shard_id=raw["shard_id"], wet_path=raw.get("wet_path", ""), stages=stages)


def manifest_path(manifest_dir: str | Path, shard_id: str) -> Path:
    return Path(manifest_dir) / f"{shard_id}.json"


def save_manifest(man: ShardManifest, manifest_dir: str | Path) -> None:
    """Write atomically (temp file then rename)."""
    path = manifest_path(manifest_dir, man.shard_id)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".json.tmp")
    tmp.write_text(json.dumps(man.to_dict(), sort_keys=True, indent=1), encoding="utf-8")
    os.replace(tmp, path)


def load_manifest(manifest_dir: str | Path, shard_id: str) -> ShardManifest | None:
    path = manifest_path(manifest_dir, shard_id)
    if not path.exists():
        return None
    try:
        return ShardManifest.from_dict(json.loads(path.read_text(encoding="utf-8")))
    except (json.JSONDecodeError, KeyError, TypeError):
        return None
