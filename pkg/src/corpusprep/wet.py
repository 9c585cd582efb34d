"""WET (WARC conversion) archive reading, writing and document extraction.

WET shards are gzip files made of concatenated gzip members. Each member
holds one or more WARC/1.0 records: CRLF-terminated ``Name: value`` header
lines, a blank line, ``Content-Length`` payload bytes, then two CRLFs.
"""
from __future__ import annotations

import gzip
import io
import urllib.request
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

from .documents import Document, document_id

GZIP_MAGIC = b"\x1f\x8b\x08"
_RECORD_START = b"WARC/"
_HEADER_END = b"\r\n\r\n"


class WetReadError(Exception):
    """Unrecoverable problem with a WET input (unreadable file, no valid data)."""


@dataclass
class WetRecord:
    """One WARC conversion record extracted from a WET shard."""

    target_uri: str
    warc_date: str
    content_length: int
    body: str
    offset: int = 0  # sequential record index within the shard


@dataclass
class WetStats:
    """Counters accumulated while reading one WET stream."""

    records: int = 0
    conversion_records: int = 0
    skipped_non_conversion: int = 0
    malformed_records: int = 0
    truncated_records: int = 0
    corrupt_members: int = 0


def _fetch_bytes(path_or_url: str) -> bytes:
    if path_or_url.startswith(("http://", "https://")):
        with urllib.request.urlopen(path_or_url) as resp:
            return resp.read()
    try:
        return Path(path_or_url).read_bytes()
    except OSError as exc:
        raise WetReadError(f"cannot read WET input {path_or_url!r}: {exc}") from exc


class WetReader:
    """Iterate conversion records of one WET shard, tolerating damaged members.

    A contiguous undecodable region (one or more damaged gzip members) is
    skipped and counted once in ``stats.corrupt_members``; reading resumes at
    the next member that actually decompresses. A stream that ends mid-record
    counts one truncated record and stops cleanly.
    """

    def __init__(self, path_or_url: str | Path):
        self.source = str(path_or_url)
        self.stats = WetStats()

    def __iter__(self) -> Iterator[WetRecord]:
        data = _fetch_bytes(self.source)
        for member, truncated in self._iter_members(data):
            yield from self._parse_records(member, truncated)

    # -- gzip member layer ------------------------------------------------

    def _iter_members(self, data: bytes) -> Iterator[tuple[bytes, bool]]:
        pos = 0
        n = len(data)
        while pos < n:
            if data[pos : pos + 3] != GZIP_MAGIC:
                pos = self._skip_corrupt_region(data, pos)
                continue
            decomp = zlib.decompressobj(wbits=47)
            try:
                out = decomp.decompress(data[pos:])
            except zlib.error:
                pos = self._skip_corrupt_region(data, pos + 3)
                continue
            if decomp.eof:
                pos = n - len(decomp.unused_data)
                yield out, False
            else:
                # Input exhausted inside this member: truncated shard tail.
                yield out, True
                return

    def _skip_corrupt_region(self, data: bytes, start: int) -> int:
        """Count one corrupt region, return offset of the next readable member."""
        self.stats.corrupt_members += 1
        scan = start
        while True:
            nxt = data.find(GZIP_MAGIC, scan)
            if nxt == -1:
                return len(data)
            probe = zlib.decompressobj(wbits=47)
            try:
                probe.decompress(data[nxt:])
            except zlib.error:
                scan = nxt + 1
                continue
            return nxt

    # -- WARC record layer -------------------------------------------------

    def _parse_records(self, blob: bytes, truncated_member: bool) -> Iterator[WetRecord]:
        pos = 0
        n = len(blob)
        tail_loss_counted = False
        while pos < n:
            start = blob.find(_RECORD_START, pos)
            if start == -1:
                break
            pos = start
            head_end = blob.find(_HEADER_END, pos)
            if head_end == -1:
                if truncated_member:
                    self.stats.truncated_records += 1
                    tail_loss_counted = True
                else:
                    self.stats.malformed_records += 1
                break
            headers = self._parse_headers(blob[pos:head_end])
            body_start = head_end + len(_HEADER_END)

            length_raw = headers.get("content-length")
            if length_raw is None or not length_raw.isdigit():
                self.stats.malformed_records += 1
                pos = self._resync(blob, body_start)
                continue
            length = int(length_raw)
            if body_start + length > n:
                if truncated_member:
                    self.stats.truncated_records += 1
                    tail_loss_counted = True
                else:
                    self.stats.malformed_records += 1
                break
            payload = blob[body_start : body_start + length]
            pos = body_start + length
            if blob[pos : pos + 4] == b"\r\n\r\n":
                pos += 4

            offset = self.stats.records
            self.stats.records += 1
            rec_type = headers.get("warc-type", "")
            if rec_type != "conversion":
                self.stats.skipped_non_conversion += 1
                continue
            uri = headers.get("warc-target-uri")
            if not uri:
                self.stats.malformed_records += 1
                continue
            self.stats.conversion_records += 1
            yield WetRecord(
                target_uri=uri,
                warc_date=headers.get("warc-date", ""),
                content_length=length,
                body=payload.decode("utf-8", errors="replace"),
                offset=offset,
            )
        if truncated_member and not tail_loss_counted:
            self.stats.truncated_records += 1

    @staticmethod
    def _parse_headers(block: bytes) -> dict[str, str]:
        headers: dict[str, str] = {}
        for line in block.split(b"\r\n")[1:]:  # drop the WARC/1.0 version line
            name, sep, value = line.partition(b":")
            if not sep:
                continue
            headers[name.strip().decode("utf-8", "replace").lower()] = (
                value.strip().decode("utf-8", "replace")
            )
        return headers

    @staticmethod
    def _resync(blob: bytes, pos: int) -> int:
        """Find the next record start, preferring one behind a record separator."""
        nxt = blob.find(_HEADER_END[:4] + _RECORD_START, pos)
        if nxt != -1:
            return nxt + 4
        nxt = blob.find(_RECORD_START, pos)
        return len(blob) if nxt == -1 else nxt


def open_wet_stream(path_or_url: str | Path) -> WetReader:
    """Open a WET shard for reading; iterate the result to get WetRecords."""
    return WetReader(path_or_url)


def record_to_document(rec: WetRecord, snapshot: str, offset: int) -> Document | None:
    """Build a Document from a conversion record; None for all-whitespace bodies."""
    if not rec.body.strip():
        return None
    return Document(
        id=document_id(snapshot, rec.target_uri, offset),
        url=rec.target_uri,
        snapshot=snapshot,
        text=rec.body,
        fetch_date=rec.warc_date,
    )


def _record_bytes(headers: list[tuple[str, str]], payload: bytes) -> bytes:
    buf = io.BytesIO()
    buf.write(b"WARC/1.0\r\n")
    for name, value in headers:
        buf.write(f"{name}: {value}\r\n".encode("utf-8"))
    buf.write(f"Content-Length: {len(payload)}\r\n".encode("ascii"))
    buf.write(b"\r\n")
    buf.write(payload)
    buf.write(b"\r\n\r\n")
    return buf.getvalue()


def write_wet_file(
    path: str | Path,
    records: list[WetRecord],
    include_warcinfo: bool = True,
    member_per_record: bool = True,
) -> None:
    """Write records as a WET shard, bit-exactly reproducible for fixed input.

    Each record becomes its own gzip member (the layout real WET shards use)
    unless ``member_per_record`` is False, in which case the whole shard is a
    single member.
    """
    members: list[bytes] = []
    if include_warcinfo:
        info_payload = b"software: corpusprep fixture generator\r\n"
        members.append(
            _record_bytes(
                [("WARC-Type", "warcinfo"), ("Content-Type", "application/warc-fields")],
                info_payload,
            )
        )
    for rec in records:
        members.append(
            _record_bytes(
                [
                    ("WARC-Type", "conversion"),
                    ("WARC-Target-URI", rec.target_uri),
                    ("WARC-Date", rec.warc_date),
                    ("Content-Type", "text/plain"),
                ],
                rec.body.encode("utf-8"),
            )
        )

    out = io.BytesIO()
    if member_per_record:
        for member in members:
            with gzip.GzipFile(fileobj=out, mode="wb", mtime=0) as gz:
                gz.write(member)
    else:
        with gzip.GzipFile(fileobj=out, mode="wb", mtime=0) as gz:
            for member in members:
                gz.write(member)
    Path(path).write_bytes(out.getvalue())
