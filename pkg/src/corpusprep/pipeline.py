"""Stage DAG execution over sharded inputs: batching, parallel maps, resume.

Per-shard stages (ingest, langid, per-shard paragraph dedup, content filter,
quality) run as parallel map jobs, at most ``batch_size`` shards per
submission. Stages needing corpus-wide state (exact/fuzzy dedup) run as a
sequential reduction over shards in sorted order, which pins the
first-occurrence-wins semantics and makes output independent of worker count.
"""
from __future__ import annotations

import dataclasses
import gzip
import hashlib
import json
import logging
import multiprocessing
import os
import re as _re
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Iterator

from . import contentfilter as cf
from . import langid as li
from .config import (
    ConfigError,
    PipelineConfig,
    expand_wet_paths,
    load_artifact_rules_file,
    stage_settings_fingerprint_payload,
)
from .dedup import (
    ExactDeduper,
    MinHashParams,
    ParagraphDeduper,
    lsh_candidates,
    minhash_signature,
    read_signature_cache,
    shingle,
    verify_and_cluster,
    write_signature_cache,
)
from .documents import Document, FilterDecision
from .manifest import ShardManifest, load_manifest, save_manifest
from .quality import evaluate
from .wet import WetReader, record_to_document

logger = logging.getLogger("corpusprep")

STAGE_ORDER = (
    "ingest",
    "langid",
    "paragraph_dedup",
    "exact_dedup",
    "fuzzy_dedup",
    "content_filter",
    "quality",
)


@dataclass(frozen=True)
class Shard:
    shard_id: str
    wet_path: str


def plan_batches(shards: list, batch_size: int) -> list[list]:
    """Partition in order; every batch except possibly the last is full."""
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    return [shards[i : i + batch_size] for i in range(0, len(shards), batch_size)]


def shard_id_from_path(path: str) -> str:
    name = Path(path).name
    for suffix in (".gz", ".wet", ".warc"):
        if name.endswith(suffix):
            name = name[: -len(suffix)]
    return _re.sub(r"[^A-Za-z0-9._-]", "_", name) or "shard"


def discover_shards(cfg: PipelineConfig) -> list[Shard]:
    paths = expand_wet_paths(cfg)
    shards = [Shard(shard_id_from_path(p), p) for p in paths]
    seen: dict[str, str] = {}
    for s in shards:
        if s.shard_id in seen:
            raise ConfigError(
                f"duplicate shard id {s.shard_id!r} from {seen[s.shard_id]} and {s.wet_path}"
            )
        seen[s.shard_id] = s.wet_path
    return sorted(shards, key=lambda s: s.shard_id)


def enabled_stages(cfg: PipelineConfig) -> list[str]:
    stages = ["ingest"]
    if cfg.langid.enabled:
        stages.append("langid")
    if cfg.dedup.paragraph_enabled:
        stages.append("paragraph_dedup")
    if cfg.dedup.exact_enabled:
        stages.append("exact_dedup")
    if cfg.dedup.fuzzy_enabled:
        stages.append("fuzzy_dedup")
    if cfg.content_filter.enabled:
        stages.append("content_filter")
    if cfg.quality.enabled:
        stages.append("quality")
    return stages


# -- corpus file IO ----------------------------------------------------------


def _sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class _CorpusWriter:
    """Streams documents to a gzip JSONL file; atomic rename on close."""

    def __init__(self, path: Path):
        self.path = path
        self.tmp = path.with_name(path.name + ".tmp")
        path.parent.mkdir(parents=True, exist_ok=True)
        self._raw = open(self.tmp, "wb")
        # filename='' and mtime=0 keep the compressed bytes deterministic
        self._gz = gzip.GzipFile(filename="", mode="wb", fileobj=self._raw, mtime=0)
        self.docs = 0
        self.text_bytes = 0
        self.words = 0

    def write(self, doc: Document) -> None:
        self._gz.write((doc.to_json_line() + "\n").encode("utf-8"))
        self.docs += 1
        self.text_bytes += len(doc.text.encode("utf-8"))
        self.words += len(doc.text.split())

    def close(self) -> str:
        self._gz.close()
        self._raw.close()
        checksum = _sha256_file(self.tmp)
        os.replace(self.tmp, self.path)
        return checksum


def read_corpus_file(path: str | Path) -> Iterator[Document]:
    with gzip.open(path, "rt", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                yield Document.from_json_line(line)


def _write_decisions(path: Path, decisions: Iterable[FilterDecision]) -> int:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    count = 0
    with open(tmp, "w", encoding="utf-8") as fh:
        for dec in decisions:
            fh.write(dec.to_json_line() + "\n")
            count += 1
    os.replace(tmp, path)
    return count


# -- per-shard stage jobs ------------------------------------------------------
# Each job returns a plain dict so results survive the process pool unchanged.


def _job_result(shard_id: str, **fields) -> dict:
    out = {
        "shard_id": shard_id,
        "ok": True,
        "error": "",
        "input_docs": 0,
        "output_docs": 0,
        "input_bytes": 0,
        "output_bytes": 0,
        "output_words": 0,
        "removed_docs": 0,
        "checksum": "",
        "extra": {},
    }
    out.update(fields)
    return out


def _job_ingest(args: dict) -> dict:
    try:
        reader = WetReader(args["wet_path"])
        writer = _CorpusWriter(Path(args["out_path"]))
        input_bytes = 0
        empty_dropped = 0
        for rec in reader:
            input_bytes += rec.content_length
            doc = record_to_document(rec, args["snapshot"], rec.offset)
            if doc is None:
                empty_dropped += 1
                continue
            writer.write(doc)
        checksum = writer.close()
        stats = reader.stats
        return _job_result(
            args["shard_id"],
            input_docs=stats.conversion_records,
            output_docs=writer.docs,
            input_bytes=input_bytes,
            output_bytes=writer.text_bytes,
            output_words=writer.words,
            removed_docs=stats.conversion_records - writer.docs,
            checksum=checksum,
            extra={
                "empty_body_dropped": empty_dropped,
                "wet_records": stats.records,
                "wet_skipped_non_conversion": stats.skipped_non_conversion,
                "wet_malformed_records": stats.malformed_records,
                "wet_truncated_records": stats.truncated_records,
                "wet_corrupt_members": stats.corrupt_members,
            },
        )
    except Exception as exc:  # shard-level failure, run continues
        return _job_result(args["shard_id"], ok=False, error=f"{type(exc).__name__}: {exc}")


def _job_langid(args: dict) -> dict:
    try:
        if args["scorer"] == "hashed_ngram":
            scorer: li.LanguageScorer = li.HashedNgramScorer(li.load_model(args["model_path"]))
        else:
            scorer = li.PrecomputedScorer.from_jsonl(args["scores_path"])
        writer = _CorpusWriter(Path(args["out_path"]))
        decisions: list[FilterDecision] = []
        input_docs = 0
        input_bytes = 0
        for doc in read_corpus_file(args["in_path"]):
            input_docs += 1
            input_bytes += len(doc.text.encode("utf-8"))
            pred = scorer.score_document(doc)
            decision = li.gate(doc, pred, target=args["target"], threshold=args["threshold"])
            if decision.kept:
                writer.write(
                    dataclasses.replace(doc, lang=pred.lang, lang_score=pred.score)
                )
            else:
                decisions.append(decision)
        checksum = writer.close()
        _write_decisions(Path(args["dec_path"]), decisions)
        return _job_result(
            args["shard_id"],
            input_docs=input_docs,
            output_docs=writer.docs,
            input_bytes=input_bytes,
            output_bytes=writer.text_bytes,
            output_words=writer.words,
            removed_docs=len(decisions),
            checksum=checksum,
        )
    except Exception as exc:
        return _job_result(args["shard_id"], ok=False, error=f"{type(exc).__name__}: {exc}")


def _job_paragraph(args: dict) -> dict:
    try:
        deduper = ParagraphDeduper()
        writer = _CorpusWriter(Path(args["out_path"]))
        decisions: list[FilterDecision] = []
        input_docs = 0
        input_bytes = 0
        for doc in read_corpus_file(args["in_path"]):
            input_docs += 1
            input_bytes += len(doc.text.encode("utf-8"))
            kept, decision = deduper.process(doc)
            if kept is not None:
                writer.write(kept)
            if decision is not None:
                decisions.append(decision)
        checksum = writer.close()
        _write_decisions(Path(args["dec_path"]), decisions)
        return _job_result(
            args["shard_id"],
            input_docs=input_docs,
            output_docs=writer.docs,
            input_bytes=input_bytes,
            output_bytes=writer.text_bytes,
            output_words=writer.words,
            removed_docs=len(decisions),
            checksum=checksum,
            extra={"paragraphs_removed": deduper.paragraphs_removed},
        )
    except Exception as exc:
        return _job_result(args["shard_id"], ok=False, error=f"{type(exc).__name__}: {exc}")


def _job_content(args: dict) -> dict:
    try:
        rules = (
            cf.compile_artifact_rules(args["artifact_rules"])
            if args["artifact_rules"] is not None
            else cf.default_artifact_rules()
        )
        blocklist = (
            cf.load_blocklist(args["blocklist_path"]) if args["blocklist_path"] else cf.Blocklist()
        )
        pii_rules = cf.default_pii_rules() if args["mask_pii"] else None
        writer = _CorpusWriter(Path(args["out_path"]))
        decisions: list[FilterDecision] = []
        input_docs = 0
        input_bytes = 0
        lines_stripped = 0
        pii_counts = {"email": 0, "url": 0, "phone": 0}
        for doc in read_corpus_file(args["in_path"]):
            input_docs += 1
            input_bytes += len(doc.text.encode("utf-8"))
            text = cf.strip_artifacts(doc.text, rules)
            lines_stripped += doc.text.count("\n") - text.count("\n")
            if text != doc.text:
                doc = dataclasses.replace(doc, text=text)
            decision = cf.blocklist_filter(doc, blocklist)
            if not decision.kept:
                decisions.append(decision)
                continue
            if pii_rules is not None:
                masked, counts = cf.mask_pii(doc.text, pii_rules)
                for key, value in counts.items():
                    pii_counts[key] += value
                if masked != doc.text:
                    doc = dataclasses.replace(doc, text=masked)
            writer.write(doc)
        checksum = writer.close()
        _write_decisions(Path(args["dec_path"]), decisions)
        return _job_result(
            args["shard_id"],
            input_docs=input_docs,
            output_docs=writer.docs,
            input_bytes=input_bytes,
            output_bytes=writer.text_bytes,
            output_words=writer.words,
            removed_docs=len(decisions),
            checksum=checksum,
            extra={"lines_stripped": lines_stripped, "pii_masked": pii_counts},
        )
    except Exception as exc:
        return _job_result(args["shard_id"], ok=False, error=f"{type(exc).__name__}: {exc}")


def _job_quality(args: dict) -> dict:
    try:
        thresholds = args["thresholds"]
        writer = _CorpusWriter(Path(args["out_path"]))
        decisions: list[FilterDecision] = []
        signals_path = Path(args["signals_path"])
        signals_path.parent.mkdir(parents=True, exist_ok=True)
        signals_tmp = signals_path.with_name(signals_path.name + ".tmp")
        input_docs = 0
        input_bytes = 0
        with open(signals_tmp, "w", encoding="utf-8") as sig_fh:
            for doc in read_corpus_file(args["in_path"]):
                input_docs += 1
                input_bytes += len(doc.text.encode("utf-8"))
                signals, decision = evaluate(doc, thresholds)
                sig_record = {"id": doc.id}
                sig_record.update(signals.to_json_dict())
                sig_record["kept"] = decision.kept
                sig_record["violated_rules"] = decision.reasons
                sig_fh.write(json.dumps(sig_record, ensure_ascii=False, sort_keys=True) + "\n")
                if decision.kept:
                    writer.write(doc)
                else:
                    decisions.append(decision)
        os.replace(signals_tmp, signals_path)
        checksum = writer.close()
        _write_decisions(Path(args["dec_path"]), decisions)
        return _job_result(
            args["shard_id"],
            input_docs=input_docs,
            output_docs=writer.docs,
            input_bytes=input_bytes,
            output_bytes=writer.text_bytes,
            output_words=writer.words,
            removed_docs=len(decisions),
            checksum=checksum,
        )
    except Exception as exc:
        return _job_result(args["shard_id"], ok=False, error=f"{type(exc).__name__}: {exc}")


def _job_fuzzy_signatures(args: dict) -> dict:
    try:
        params: MinHashParams = args["params"]
        offsets = params.offsets()
        count = 0

        def signatures():
            nonlocal count
            for doc in read_corpus_file(args["in_path"]):
                shingles = shingle(doc.text, params.shingle_width)
                if shingles:
                    count += 1
                    yield doc.id, minhash_signature(shingles, params, offsets)

        write_signature_cache(args["sig_path"], params, signatures())
        return _job_result(args["shard_id"], extra={"signatures": count})
    except Exception as exc:
        return _job_result(args["shard_id"], ok=False, error=f"{type(exc).__name__}: {exc}")


# -- runner -------------------------------------------------------------------


class PipelineRunner:
    def __init__(self, cfg: PipelineConfig):
        self.cfg = cfg
        self.out = Path(cfg.output_dir)
        self.manifest_dir = self.out / "manifests"
        self.shards = discover_shards(cfg)
        self.stages = enabled_stages(cfg)
        self.manifests: dict[str, ShardManifest] = {}
        self.failed: set[str] = set()
        self.dirty: set[str] = set()
        self._fingerprints = self._compute_fingerprints()

    # paths ------------------------------------------------------------------

    def stage_out_path(self, stage: str, shard_id: str) -> Path:
        return self.out / "stages" / stage / f"{shard_id}.jsonl.gz"

    def decisions_path(self, stage: str, shard_id: str) -> Path:
        return self.out / "decisions" / stage / f"{shard_id}.jsonl"

    def signals_path(self, shard_id: str) -> Path:
        return self.out / "signals" / f"{shard_id}.jsonl"

    def sigcache_path(self, shard_id: str) -> Path:
        return self.out / "sigcache" / f"{shard_id}.sig"

    def _stage_input(self, stage: str, shard_id: str) -> Path:
        prev = self.stages[self.stages.index(stage) - 1]
        return self.stage_out_path(prev, shard_id)

    # fingerprints -------------------------------------------------------------

    def _global_stages(self) -> set[str]:
        out = {"exact_dedup", "fuzzy_dedup"}
        if self.cfg.dedup.paragraph_scope == "global":
            out.add("paragraph_dedup")
        return out

    def _compute_fingerprints(self) -> dict[tuple[str, str], str]:
        fps: dict[tuple[str, str], str] = {}
        prev: dict[str, str] = {}
        global_stages = self._global_stages()
        for stage in self.stages:
            payload = json.dumps(
                stage_settings_fingerprint_payload(self.cfg, stage), sort_keys=True
            )
            current: dict[str, str] = {}
            if stage == "ingest":
                for s in self.shards:
                    try:
                        size = os.stat(s.wet_path).st_size
                    except OSError:
                        size = -1
                    current[s.shard_id] = _h(f"ingest|{payload}|{s.wet_path}|{size}")
            elif stage in global_stages:
                combined = _h(payload + "|" + "|".join(prev[s.shard_id] for s in self.shards))
                for s in self.shards:
                    current[s.shard_id] = _h(f"{stage}|{combined}|{s.shard_id}")
            else:
                for s in self.shards:
                    current[s.shard_id] = _h(f"{stage}|{payload}|{prev[s.shard_id]}")
            for shard_id, fp in current.items():
                fps[(stage, shard_id)] = fp
            prev = current
        return fps

    # resume validity -----------------------------------------------------------

    def _load_manifests(self) -> None:
        for s in self.shards:
            man = load_manifest(self.manifest_dir, s.shard_id)
            if man is None:
                man = ShardManifest(shard_id=s.shard_id, wet_path=s.wet_path)
            man.wet_path = s.wet_path
            self.manifests[s.shard_id] = man

    def _stage_valid(self, stage: str, shard_id: str) -> bool:
        rec = self.manifests[shard_id].stages.get(stage)
        if rec is None or rec.status != "done":
            return False
        if rec.fingerprint != self._fingerprints[(stage, shard_id)]:
            logger.info("%s/%s: settings changed, re-running", stage, shard_id)
            return False
        out_path = self.stage_out_path(stage, shard_id)
        if not out_path.exists():
            logger.info("%s/%s: output missing, re-running", stage, shard_id)
            return False
        if _sha256_file(out_path) != rec.checksum:
            logger.warning("%s/%s: output checksum mismatch, re-running", stage, shard_id)
            return False
        return True

    # execution -------------------------------------------------------------------

    def _apply_result(self, stage: str, result: dict) -> None:
        man = self.manifests[result["shard_id"]]
        rec = man.stage(stage)
        if result["ok"]:
            rec.complete(
                input_docs=result["input_docs"],
                output_docs=result["output_docs"],
                input_bytes=result["input_bytes"],
                output_bytes=result["output_bytes"],
                output_words=result["output_words"],
                removed_docs=result["removed_docs"],
                checksum=result["checksum"],
                fingerprint=self._fingerprints[(stage, result["shard_id"])],
                extra=result["extra"],
            )
        else:
            rec.fail(result["error"])
            self.failed.add(result["shard_id"])
            logger.error("%s/%s failed: %s", stage, result["shard_id"], result["error"])
        save_manifest(man, self.manifest_dir)

    def _execute_jobs(self, job: Callable[[dict], dict], arg_list: list[dict]) -> list[dict]:
        if not arg_list:
            return []
        if self.cfg.workers == 1 or len(arg_list) == 1:
            return [job(args) for args in arg_list]
        results: list[dict] = []
        for batch in plan_batches(arg_list, self.cfg.batch_size):
            with multiprocessing.Pool(min(self.cfg.workers, len(batch))) as pool:
                results.extend(pool.map(job, batch))
        return results

    def _run_per_shard_stage(self, stage: str, job: Callable, args_fn: Callable[[Shard], dict]) -> None:
        alive = [s for s in self.shards if s.shard_id not in self.failed]
        to_run = [
            s for s in alive if s.shard_id in self.dirty or not self._stage_valid(stage, s.shard_id)
        ]
        if not to_run:
            logger.info("%s: all %d shards up to date", stage, len(alive))
            return
        logger.info("%s: running %d/%d shards", stage, len(to_run), len(alive))
        for s in to_run:
            rec = self.manifests[s.shard_id].stage(stage)
            rec.begin()
            save_manifest(self.manifests[s.shard_id], self.manifest_dir)
        for result in self._execute_jobs(job, [args_fn(s) for s in to_run]):
            self._apply_result(stage, result)
            self.dirty.add(result["shard_id"])

    def _stage_needs_global_run(self, stage: str) -> bool:
        alive = [s for s in self.shards if s.shard_id not in self.failed]
        return any(
            s.shard_id in self.dirty or not self._stage_valid(stage, s.shard_id) for s in alive
        )

    def _run_sequential_reduce(
        self, stage: str, make_processor: Callable[[], Callable[[Document], FilterDecision | None]]
    ) -> None:
        """Shared shape of exact dedup and global paragraph dedup."""
        if not self._stage_needs_global_run(stage):
            logger.info("%s: all shards up to date", stage)
            return
        alive = [s for s in self.shards if s.shard_id not in self.failed]
        logger.info("%s: sequential pass over %d shards", stage, len(alive))
        process = make_processor()
        for s in alive:
            man = self.manifests[s.shard_id]
            rec = man.stage(stage)
            rec.begin()
            save_manifest(man, self.manifest_dir)
            try:
                writer = _CorpusWriter(self.stage_out_path(stage, s.shard_id))
                decisions: list[FilterDecision] = []
                input_docs = 0
                input_bytes = 0
                extra: dict = {}
                for doc in read_corpus_file(self._stage_input(stage, s.shard_id)):
                    input_docs += 1
                    input_bytes += len(doc.text.encode("utf-8"))
                    outcome = process(doc)
                    if isinstance(outcome, tuple):  # paragraph dedup: (doc|None, decision|None)
                        kept_doc, decision = outcome
                        if kept_doc is not None:
                            writer.write(kept_doc)
                        if decision is not None:
                            decisions.append(decision)
                        continue
                    if outcome is None:
                        writer.write(doc)
                    else:
                        decisions.append(outcome)
                checksum = writer.close()
                _write_decisions(self.decisions_path(stage, s.shard_id), decisions)
                rec.complete(
                    input_docs=input_docs,
                    output_docs=writer.docs,
                    input_bytes=input_bytes,
                    output_bytes=writer.text_bytes,
                    output_words=writer.words,
                    removed_docs=len(decisions),
                    checksum=checksum,
                    fingerprint=self._fingerprints[(stage, s.shard_id)],
                    extra=extra,
                )
            except Exception as exc:
                rec.fail(f"{type(exc).__name__}: {exc}")
                self.failed.add(s.shard_id)
                logger.error("%s/%s failed: %s", stage, s.shard_id, exc)
            save_manifest(man, self.manifest_dir)
            self.dirty.add(s.shard_id)

    def _run_fuzzy(self) -> None:
        stage = "fuzzy_dedup"
        if not self._stage_needs_global_run(stage):
            logger.info("%s: all shards up to date", stage)
            return
        alive = [s for s in self.shards if s.shard_id not in self.failed]
        dd = self.cfg.dedup
        params = MinHashParams(
            seed=dd.seed,
            num_permutations=dd.num_permutations,
            bands=dd.bands,
            rows=dd.rows,
            shingle_width=dd.shingle_width,
        )
        logger.info("%s: signatures for %d shards", stage, len(alive))
        for s in alive:
            rec = self.manifests[s.shard_id].stage(stage)
            rec.begin()
            save_manifest(self.manifests[s.shard_id], self.manifest_dir)
        (self.out / "sigcache").mkdir(parents=True, exist_ok=True)
        sig_args = [
            {
                "shard_id": s.shard_id,
                "in_path": str(self._stage_input(stage, s.shard_id)),
                "sig_path": str(self.sigcache_path(s.shard_id)),
                "params": params,
            }
            for s in alive
        ]
        sig_results = {
            r["shard_id"]: r for r in self._execute_jobs(_job_fuzzy_signatures, sig_args)
        }
        for s in list(alive):
            r = sig_results[s.shard_id]
            if not r["ok"]:
                self._apply_result(stage, r)
        alive = [s for s in alive if s.shard_id not in self.failed]

        def all_signatures():
            for s in alive:
                cached_params, items = read_signature_cache(self.sigcache_path(s.shard_id))
                if cached_params != params:
                    raise RuntimeError(f"signature cache {s.shard_id} params mismatch")
                yield from items

        candidates = lsh_candidates(all_signatures(), params)
        candidate_ids = {a for a, _ in candidates} | {b for _, b in candidates}
        logger.info(
            "%s: %d candidate pairs over %d documents", stage, len(candidates), len(candidate_ids)
        )
        shingle_sets: dict[str, set[int]] = {}
        if candidates:
            for s in alive:
                for doc in read_corpus_file(self._stage_input(stage, s.shard_id)):
                    if doc.id in candidate_ids:
                        shingle_sets[doc.id] = shingle(doc.text, params.shingle_width)
        clusters = verify_and_cluster(candidates, shingle_sets, threshold=dd.jaccard_threshold)
        removed: dict[str, str] = {}
        for cluster in clusters:
            for member in cluster.member_ids:
                if member != cluster.representative:
                    removed[member] = cluster.representative
        logger.info("%s: %d clusters, %d documents to remove", stage, len(clusters), len(removed))

        for s in alive:
            man = self.manifests[s.shard_id]
            rec = man.stage(stage)
            try:
                writer = _CorpusWriter(self.stage_out_path(stage, s.shard_id))
                decisions: list[FilterDecision] = []
                input_docs = 0
                input_bytes = 0
                for doc in read_corpus_file(self._stage_input(stage, s.shard_id)):
                    input_docs += 1
                    input_bytes += len(doc.text.encode("utf-8"))
                    winner = removed.get(doc.id)
                    if winner is None:
                        writer.write(doc)
                    else:
                        decisions.append(
                            FilterDecision(
                                id=doc.id,
                                stage=stage,
                                kept=False,
                                reasons=["fuzzy_duplicate"],
                                metadata={"winner_id": winner},
                            )
                        )
                checksum = writer.close()
                _write_decisions(self.decisions_path(stage, s.shard_id), decisions)
                rec.complete(
                    input_docs=input_docs,
                    output_docs=writer.docs,
                    input_bytes=input_bytes,
                    output_bytes=writer.text_bytes,
                    output_words=writer.words,
                    removed_docs=len(decisions),
                    checksum=checksum,
                    fingerprint=self._fingerprints[(stage, s.shard_id)],
                    extra={"signatures": sig_results[s.shard_id]["extra"].get("signatures", 0)},
                )
            except Exception as exc:
                rec.fail(f"{type(exc).__name__}: {exc}")
                self.failed.add(s.shard_id)
                logger.error("%s/%s failed: %s", stage, s.shard_id, exc)
            save_manifest(man, self.manifest_dir)
            self.dirty.add(s.shard_id)

    # stage table -------------------------------------------------------------

    def _run_stage(self, stage: str) -> None:
        cfg = self.cfg
        if stage == "ingest":
            self._run_per_shard_stage(
                stage,
                _job_ingest,
                lambda s: {
                    "shard_id": s.shard_id,
                    "wet_path": s.wet_path,
                    "snapshot": cfg.snapshot,
                    "out_path": str(self.stage_out_path(stage, s.shard_id)),
                },
            )
        elif stage == "langid":
            self._run_per_shard_stage(
                stage,
                _job_langid,
                lambda s: {
                    "shard_id": s.shard_id,
                    "in_path": str(self._stage_input(stage, s.shard_id)),
                    "out_path": str(self.stage_out_path(stage, s.shard_id)),
                    "dec_path": str(self.decisions_path(stage, s.shard_id)),
                    "scorer": cfg.langid.scorer,
                    "model_path": cfg.langid.model_path,
                    "scores_path": cfg.langid.scores_path,
                    "target": cfg.langid.target_lang,
                    "threshold": cfg.langid.threshold,
                },
            )
        elif stage == "paragraph_dedup":
            if cfg.dedup.paragraph_scope == "shard":
                self._run_per_shard_stage(
                    stage,
                    _job_paragraph,
                    lambda s: {
                        "shard_id": s.shard_id,
                        "in_path": str(self._stage_input(stage, s.shard_id)),
                        "out_path": str(self.stage_out_path(stage, s.shard_id)),
                        "dec_path": str(self.decisions_path(stage, s.shard_id)),
                    },
                )
            else:
                deduper = ParagraphDeduper()
                self._run_sequential_reduce(stage, lambda: deduper.process)
        elif stage == "exact_dedup":
            deduper = ExactDeduper()
            self._run_sequential_reduce(stage, lambda: deduper.process)
        elif stage == "fuzzy_dedup":
            self._run_fuzzy()
        elif stage == "content_filter":
            artifact_rules = (
                load_artifact_rules_file(cfg.content_filter.artifact_rules_path)
                if cfg.content_filter.artifact_rules_path
                else None
            )
            self._run_per_shard_stage(
                stage,
                _job_content,
                lambda s: {
                    "shard_id": s.shard_id,
                    "in_path": str(self._stage_input(stage, s.shard_id)),
                    "out_path": str(self.stage_out_path(stage, s.shard_id)),
                    "dec_path": str(self.decisions_path(stage, s.shard_id)),
                    "blocklist_path": cfg.content_filter.blocklist_path,
                    "artifact_rules": artifact_rules,
                    "mask_pii": cfg.content_filter.mask_pii,
                },
            )
        elif stage == "quality":
            self._run_per_shard_stage(
                stage,
                _job_quality,
                lambda s: {
                    "shard_id": s.shard_id,
                    "in_path": str(self._stage_input(stage, s.shard_id)),
                    "out_path": str(self.stage_out_path(stage, s.shard_id)),
                    "dec_path": str(self.decisions_path(stage, s.shard_id)),
                    "signals_path": str(self.signals_path(s.shard_id)),
                    "thresholds": cfg.quality.thresholds,
                },
            )
        else:
            raise ValueError(f"unknown stage {stage!r}")

    def run(self, stop_after: str | None = None) -> dict:
        if stop_after is not None and stop_after not in self.stages:
            raise ConfigError(
                f"stop_after={stop_after!r} is not an enabled stage (choose from {self.stages})"
            )
        self.out.mkdir(parents=True, exist_ok=True)
        self.manifest_dir.mkdir(parents=True, exist_ok=True)
        self._load_manifests()
        for stage in self.stages:
            self._run_stage(stage)
            if stage == stop_after:
                logger.info("stopping after stage %s", stage)
                break
        report = self.build_report(partial=stop_after is not None and stop_after != self.stages[-1])
        report_path = self.out / "report.json"
        tmp = report_path.with_suffix(".json.tmp")
        tmp.write_text(json.dumps(report, sort_keys=True, indent=1), encoding="utf-8")
        os.replace(tmp, report_path)
        return report

    # reporting -----------------------------------------------------------------

    def build_report(self, partial: bool = False) -> dict:
        return build_report(
            stages=self.stages,
            shards=self.shards,
            manifests=self.manifests,
            failed=self.failed,
            decisions_dir=self.out / "decisions",
            partial=partial,
        )


def _h(payload: str) -> str:
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def _reduction_pct(before: int, after: int) -> float:
    if before <= 0:
        return 0.0
    return 100.0 * (before - after) / before


def build_report(
    stages: list[str],
    shards: list[Shard],
    manifests: dict[str, ShardManifest],
    failed: set[str],
    decisions_dir: Path,
    partial: bool = False,
) -> dict:
    stage_rows = []
    removed_total = 0
    for stage in stages:
        input_docs = output_docs = input_bytes = output_bytes = output_words = removed = 0
        done_shards = 0
        for s in shards:
            rec = manifests.get(s.shard_id, ShardManifest(s.shard_id)).stages.get(stage)
            if rec is None or rec.status != "done":
                continue
            done_shards += 1
            input_docs += rec.input_docs
            output_docs += rec.output_docs
            input_bytes += rec.input_bytes
            output_bytes += rec.output_bytes
            output_words += rec.output_words
            removed += rec.removed_docs
        reasons: dict[str, int] = {}
        stage_dec_dir = decisions_dir / stage
        for s in shards:
            dec_file = stage_dec_dir / f"{s.shard_id}.jsonl"
            if not dec_file.exists():
                continue
            with open(dec_file, encoding="utf-8") as fh:
                for line in fh:
                    if not line.strip():
                        continue
                    for reason in json.loads(line).get("reasons", []):
                        reasons[reason] = reasons.get(reason, 0) + 1
        if stage != "ingest":
            removed_total += removed
        stage_rows.append(
            {
                "stage": stage,
                "shards_done": done_shards,
                "input_docs": input_docs,
                "output_docs": output_docs,
                "input_bytes": input_bytes,
                "output_bytes": output_bytes,
                "output_words": output_words,
                "removed_docs": removed,
                "reduction_docs_pct": _reduction_pct(input_docs, output_docs),
                "reduction_bytes_pct": _reduction_pct(input_bytes, output_bytes),
                "removal_reasons": dict(sorted(reasons.items(), key=lambda kv: (-kv[1], kv[0]))),
            }
        )
    ingest_row = stage_rows[0] if stage_rows else None
    final_row = stage_rows[-1] if stage_rows else None
    ingested = ingest_row["output_docs"] if ingest_row else 0
    final_docs = final_row["output_docs"] if final_row else 0
    report = {
        "stages": stage_rows,
        "totals": {
            "ingested_docs": ingested,
            "final_docs": final_docs,
            "final_bytes": final_row["output_bytes"] if final_row else 0,
            "final_words": final_row["output_words"] if final_row else 0,
            "removed_docs": removed_total,
        },
        "accounting_identity_holds": (ingested == final_docs + removed_total)
        and not failed
        and not partial,
        "final_stage": stages[-1] if stages else None,
        "partial": partial,
        "failed_shards": sorted(failed),
    }
    return report


def run_pipeline(cfg: PipelineConfig, stop_after: str | None = None) -> dict:
    """Execute the stage DAG; manifest-driven, so finished work is skipped."""
    return PipelineRunner(cfg).run(stop_after=stop_after)


def resume_pipeline(cfg: PipelineConfig, stop_after: str | None = None) -> dict:
    """Like run_pipeline, but requires an existing manifest directory."""
    manifest_dir = Path(cfg.output_dir) / "manifests"
    if not manifest_dir.is_dir():
        raise ConfigError(f"cannot resume: manifest directory {manifest_dir} does not exist")
    return run_pipeline(cfg, stop_after=stop_after)


def rebuild_report(cfg: PipelineConfig) -> dict:
    """Reconstruct the statistics document from manifests and decision logs."""
    runner = PipelineRunner(cfg)
    runner._load_manifests()
    failed = {
        s.shard_id
        for s in runner.shards
        for rec in runner.manifests[s.shard_id].stages.values()
        if rec.status == "failed"
    }
    runner.failed = failed
    return runner.build_report()
