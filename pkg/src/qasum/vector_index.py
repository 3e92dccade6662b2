"""Exact cosine k-nearest-neighbor index with binary persistence.

Search is a full scan over a cached matrix, so every result is an exact
cosine and can be checked against a brute-force oracle. The on-disk format
is little-endian: magic ``QASUMIDX``, version u16, dim u16, entry count
u64, then one record per entry (length-prefixed para_id, doc_id and
note_type, float32 vector components), and a trailing CRC32 over all
preceding bytes. Vectors are float64 in memory and float32 on disk, so
reloaded scores agree within 1e-6 and rankings are preserved.

Concurrency: many readers or one writer. insert/save take the internal
lock; search only reads the cached matrix (rebuilt under the lock).
"""

from __future__ import annotations

import struct
import threading
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Collection

import numpy as np

from .errors import (
    CorruptIndexError,
    DimensionMismatchError,
    EmptyIndexError,
    IoError,
    PreconditionError,
)

MAGIC = b"QASUMIDX"
FORMAT_VERSION = 1

_HEADER = struct.Struct("<8sHHQ")

NoteFilter = Collection[str] | Callable[[str], bool] | None


@dataclass(frozen=True)
class IndexEntry:
    para_id: str
    vector: np.ndarray
    doc_id: str
    note_type: str


@dataclass(frozen=True)
class SearchHit:
    para_id: str
    score: float
    rank: int


class VectorIndex:
    def __init__(self, dim: int | None = None):
        self._dim = dim
        self._ids: list[str] = []
        self._pos: dict[str, int] = {}
        self._vectors: list[np.ndarray] = []
        self._doc_ids: list[str] = []
        self._note_types: list[str] = []
        self._matrix: np.ndarray | None = None
        self._norms: np.ndarray | None = None
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return len(self._ids)

    @property
    def dim(self) -> int | None:
        return self._dim

    def insert(self, entry: IndexEntry) -> None:
        """Add an entry; re-inserting an existing para_id replaces its vector."""
        vector = np.asarray(entry.vector, dtype=np.float64)
        if vector.ndim != 1:
            raise PreconditionError("index vectors must be 1-D")
        with self._lock:
            if self._dim is None:
                self._dim = int(vector.shape[0])
            elif vector.shape[0] != self._dim:
                raise DimensionMismatchError(
                    f"entry dim {vector.shape[0]} does not match index dim {self._dim}"
                )
            if entry.para_id in self._pos:
                i = self._pos[entry.para_id]
                self._vectors[i] = vector
                self._doc_ids[i] = entry.doc_id
                self._note_types[i] = entry.note_type
            else:
                self._pos[entry.para_id] = len(self._ids)
                self._ids.append(entry.para_id)
                self._vectors.append(vector)
                self._doc_ids.append(entry.doc_id)
                self._note_types.append(entry.note_type)
            self._matrix = None
            self._norms = None

    def _ensure_matrix(self) -> tuple[np.ndarray, np.ndarray]:
        with self._lock:
            if self._matrix is None:
                self._matrix = np.vstack(self._vectors)
                self._norms = np.linalg.norm(self._matrix, axis=1)
            return self._matrix, self._norms

    def search(self, query: np.ndarray, k: int, note_filter: NoteFilter = None) -> list[SearchHit]:
        """Exact top-k by cosine; ties broken by para_id ascending, ranks from 1."""
        if k < 1:
            raise PreconditionError(f"k must be positive, got {k}")
        if not self._ids:
            raise EmptyIndexError("search on an empty index")
        query = np.asarray(query, dtype=np.float64)
        if query.shape != (self._dim,):
            raise DimensionMismatchError(
                f"query dim {query.shape[0] if query.ndim == 1 else query.shape} "
                f"does not match index dim {self._dim}"
            )
        matrix, norms = self._ensure_matrix()
        if callable(note_filter):
            keep = [i for i, nt in enumerate(self._note_types) if note_filter(nt)]
        elif note_filter is not None:
            allowed = set(note_filter)
            keep = [i for i, nt in enumerate(self._note_types) if nt in allowed]
        else:
            keep = range(len(self._ids))

        qnorm = float(np.linalg.norm(query))
        dots = matrix @ query
        scored = []
        for i in keep:
            denom = float(norms[i]) * qnorm
            score = 0.0 if denom == 0.0 else max(-1.0, min(1.0, float(dots[i]) / denom))
            scored.append((self._ids[i], score))
        scored.sort(key=lambda hit: (-hit[1], hit[0]))
        return [
            SearchHit(para_id=pid, score=score, rank=rank)
            for rank, (pid, score) in enumerate(scored[:k], start=1)
        ]

    def entries(self) -> list[IndexEntry]:
        """Snapshot of all entries in insertion order."""
        return [
            IndexEntry(pid, self._vectors[i].copy(), self._doc_ids[i], self._note_types[i])
            for i, pid in enumerate(self._ids)
        ]

    def save(self, path: str | Path) -> None:
        with self._lock:
            dim = self._dim if self._dim is not None else 0
            parts = [_HEADER.pack(MAGIC, FORMAT_VERSION, dim, len(self._ids))]
            for i, para_id in enumerate(self._ids):
                parts.append(_pack_str16(para_id))
                parts.append(_pack_str16(self._doc_ids[i]))
                parts.append(_pack_str8(self._note_types[i]))
                parts.append(self._vectors[i].astype("<f4").tobytes())
            payload = b"".join(parts)
        blob = payload + struct.pack("<I", zlib.crc32(payload))
        try:
            Path(path).write_bytes(blob)
        except OSError as exc:
            raise IoError(f"cannot write index to {path}: {exc}") from exc

    @classmethod
    def load(cls, path: str | Path) -> "VectorIndex":
        try:
            blob = Path(path).read_bytes()
        except OSError as exc:
            raise IoError(f"cannot read index from {path}: {exc}") from exc

        if len(blob) < _HEADER.size + 4:
            raise CorruptIndexError(f"index file {path} is truncated (too short for header)")
        magic, version, dim, count = _HEADER.unpack_from(blob, 0)
        if magic != MAGIC:
            raise CorruptIndexError(f"index file {path} has bad magic bytes {magic!r}")
        if version != FORMAT_VERSION:
            raise CorruptIndexError(f"index file {path} has unsupported version {version}")

        index = cls(dim=dim if dim > 0 else None)
        offset = _HEADER.size
        end = len(blob) - 4
        reader = _Reader(blob, offset, end, path)
        for _ in range(count):
            para_id = reader.read_str16()
            doc_id = reader.read_str16()
            note_type = reader.read_str8()
            vector = reader.read_floats(dim)
            index._pos[para_id] = len(index._ids)
            index._ids.append(para_id)
            index._vectors.append(vector)
            index._doc_ids.append(doc_id)
            index._note_types.append(note_type)
        if reader.offset != end:
            raise CorruptIndexError(f"index file {path} has unexpected trailing bytes")
        (stored_crc,) = struct.unpack_from("<I", blob, end)
        if zlib.crc32(blob[:end]) != stored_crc:
            raise CorruptIndexError(f"index file {path} failed its checksum (CRC32 mismatch)")
        return index


class _Reader:
    def __init__(self, blob: bytes, offset: int, end: int, path):
        self.blob = blob
        self.offset = offset
        self.end = end
        self.path = path

    def _take(self, n: int) -> bytes:
        if self.offset + n > self.end:
            raise CorruptIndexError(f"index file {self.path} is truncated mid-record")
        chunk = self.blob[self.offset : self.offset + n]
        self.offset += n
        return chunk

    def read_str16(self) -> str:
        (length,) = struct.unpack("<H", self._take(2))
        return self._take(length).decode("utf-8")

    def read_str8(self) -> str:
        (length,) = struct.unpack("<B", self._take(1))
        return self._take(length).decode("utf-8")

    def read_floats(self, dim: int) -> np.ndarray:
        raw = self._take(4 * dim)
        return np.frombuffer(raw, dtype="<f4").astype(np.float64)


def _pack_str16(s: str) -> bytes:
    raw = s.encode("utf-8")
    if len(raw) > 0xFFFF:
        raise PreconditionError(f"string too long for index record: {s[:40]!r}...")
    return struct.pack("<H", len(raw)) + raw


def _pack_str8(s: str) -> bytes:
    raw = s.encode("utf-8")
    if len(raw) > 0xFF:
        raise PreconditionError(f"string too long for index record: {s[:40]!r}...")
    return struct.pack("<B", len(raw)) + raw
