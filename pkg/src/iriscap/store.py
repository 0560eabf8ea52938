"""Append-only, checkpointed score store.

Layout::

    "IRSS" | u32 version | u32 header_len | header JSON (utf-8)
    repeated: "CHNK" | u32 chunk_index | u32 n_records | u32 crc32 | records
    "WMRK" | u64 watermark | u32 crc32(watermark bytes)

A chunk is committed by writing it after the last valid chunk, rewriting the
footer and fsyncing. On open, chunks are scanned in order and the first
truncated, out-of-sequence or checksum-failing chunk ends the valid prefix;
anything after it is discarded on the next write.
"""

from __future__ import annotations

import csv
import json
import os
import struct
import zlib
from pathlib import Path

import numpy as np

MAGIC = b"IRSS"
CHUNK_MAGIC = b"CHNK"
FOOTER_MAGIC = b"WMRK"
VERSION = 1

IMPOSTER, GENUINE = 0, 1
KIND_NAMES = {IMPOSTER: "imposter", GENUINE: "genuine"}

RECORD = np.dtype([
    ("kind", "u1"),
    ("a", "<u4"),
    ("b", "<u4"),
    ("hd", "<f8"),
    ("best_shift", "<i2"),
    ("compared_bits", "<u4"),
    ("disagreeing_bits", "<u4"),
])

_CHUNK_HEAD = struct.Struct("<4sIII")
_FOOTER = struct.Struct("<4sQI")


class StoreError(RuntimeError):
    pass


class ConfigMismatchError(StoreError):
    pass


class IncompleteStoreError(StoreError):
    pass


def _footer(watermark: int) -> bytes:
    wm = struct.pack("<Q", watermark)
    return _FOOTER.pack(FOOTER_MAGIC, watermark, zlib.crc32(wm))


class ScoreStore:
    def __init__(self, path, header: dict, records: np.ndarray, watermark: int, data_end: int):
        self.path = Path(path)
        self.header = header
        self.records = records
        self.watermark = watermark
        self._data_end = data_end

    # -- creation / opening -------------------------------------------------

    @classmethod
    def create(cls, path, header: dict) -> "ScoreStore":
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        blob = json.dumps(header, sort_keys=True).encode("utf-8")
        head = MAGIC + struct.pack("<II", VERSION, len(blob)) + blob
        tmp = path.with_name(path.name + ".tmp")
        with open(tmp, "wb") as fh:
            fh.write(head + _footer(0))
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
        return cls(path, header, np.zeros(0, dtype=RECORD), 0, len(head))

    @classmethod
    def open(cls, path) -> "ScoreStore":
        path = Path(path)
        data = path.read_bytes()
        if data[:4] != MAGIC:
            raise StoreError(f"{path}: not a score store (magic {data[:4]!r})")
        version, hlen = struct.unpack_from("<II", data, 4)
        if version != VERSION:
            raise StoreError(f"{path}: unsupported store version {version}")
        try:
            header = json.loads(data[12:12 + hlen].decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise StoreError(f"{path}: corrupt header: {exc}") from None
        pos = 12 + hlen
        parts = []
        index = 0
        while pos + _CHUNK_HEAD.size <= len(data):
            magic, chunk_index, n, crc = _CHUNK_HEAD.unpack_from(data, pos)
            body_start = pos + _CHUNK_HEAD.size
            body_end = body_start + n * RECORD.itemsize
            if magic != CHUNK_MAGIC or chunk_index != index or body_end > len(data):
                break
            body = data[body_start:body_end]
            if zlib.crc32(body) != crc:
                break
            parts.append(np.frombuffer(body, dtype=RECORD))
            index += 1
            pos = body_end
        records = np.concatenate(parts) if parts else np.zeros(0, dtype=RECORD)
        return cls(path, header, records.copy(), index, pos)

    # -- writing ------------------------------------------------------------

    def commit_chunk(self, chunk_index: int, records: np.ndarray):
        if chunk_index != self.watermark:
            raise StoreError(f"chunk {chunk_index} committed out of order "
                             f"(watermark {self.watermark})")
        body = np.ascontiguousarray(records, dtype=RECORD).tobytes()
        blob = _CHUNK_HEAD.pack(CHUNK_MAGIC, chunk_index, len(records), zlib.crc32(body)) + body
        with open(self.path, "r+b") as fh:
            fh.seek(self._data_end)
            fh.write(blob)
            fh.write(_footer(chunk_index + 1))
            fh.truncate()
            fh.flush()
            os.fsync(fh.fileno())
        self._data_end += len(blob)
        self.watermark = chunk_index + 1
        self.records = np.concatenate([self.records, np.asarray(records, dtype=RECORD)])

    # -- views --------------------------------------------------------------

    @property
    def config(self) -> dict:
        return self.header["config"]

    @property
    def n_chunks(self) -> int:
        return int(self.header["n_chunks"])

    @property
    def complete(self) -> bool:
        return self.watermark >= self.n_chunks

    @property
    def sample_ids(self) -> list[str]:
        return [s for _, s in self.header["samples"]]

    @property
    def identity_ids(self) -> list[str]:
        return [i for i, _ in self.header["samples"]]

    @property
    def M(self) -> int:
        return int(self.header["M"])

    @property
    def imposters(self) -> np.ndarray:
        return self.records[self.records["kind"] == IMPOSTER]

    @property
    def genuine(self) -> np.ndarray:
        return self.records[self.records["kind"] == GENUINE]

    def require_complete(self):
        if not self.complete:
            raise IncompleteStoreError(
                f"{self.path}: {self.watermark}/{self.n_chunks} chunks committed")

    def sorted_records(self) -> np.ndarray:
        order = np.lexsort((self.records["b"], self.records["a"], self.records["kind"]))
        return self.records[order]

    def to_csv(self, path):
        ids = self.identity_ids
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["identity_a", "identity_b", "kind", "hd", "best_shift",
                             "compared_bits"])
            for rec in self.sorted_records():
                hd = "" if rec["compared_bits"] == 0 else repr(float(rec["hd"]))
                writer.writerow([ids[rec["a"]], ids[rec["b"]], KIND_NAMES[int(rec["kind"])],
                                 hd, int(rec["best_shift"]), int(rec["compared_bits"])])
