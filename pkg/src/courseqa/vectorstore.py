"""Flat exact-scan vector index with a compact binary file format.

Every query scores every stored vector; there is no approximate structure,
so results are exact by construction and the interesting guarantees are
deterministic ordering and a lossless (bit-exact payload) file round trip.
"""

from __future__ import annotations

import os
import struct
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .embedding import (
    EmbeddingVector,
    QuantizedVector,
    ZeroVectorError,
    dequantize,
    quantize_absmax,
)

_MAGIC = b"QAVX"
_VERSION = 1
_METRICS = ("cosine", "dot")
_MARKER_PAYLOAD = 0
_MARKER_RAW_ZERO = 1


class VectorStoreError(Exception):
    """Base class for index failures."""


class DuplicateChunkIdError(VectorStoreError):
    pass


class DimensionMismatchError(VectorStoreError):
    pass


class IndexFormatError(VectorStoreError):
    """The on-disk index is malformed; byte_offset points at the problem."""

    def __init__(self, message: str, byte_offset: int | None = None):
        if byte_offset is not None:
            message = f"{message} (byte offset {byte_offset})"
        super().__init__(message)
        self.byte_offset = byte_offset


@dataclass(frozen=True)
class SearchHit:
    chunk_id: str
    score: float
    rank: int


@dataclass(frozen=True, eq=False)
class _Entry:
    chunk_id: str
    payload: EmbeddingVector | QuantizedVector
    values64: np.ndarray
    norm: float


class VectorIndex:
    """Append-only flat index over float32 or int8-quantized vectors."""

    def __init__(self, dim: int, metric: str = "cosine", quantized: bool = False):
        if dim < 1:
            raise VectorStoreError("dim must be >= 1")
        if metric not in _METRICS:
            raise VectorStoreError(f"unknown metric: {metric!r}")
        self.dim = dim
        self.metric = metric
        self.quantized = quantized
        self._entries: list[_Entry] = []
        self._ids: set[str] = set()
        self._matrix: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, chunk_id: str) -> bool:
        return chunk_id in self._ids

    def chunk_ids(self) -> list[str]:
        return [entry.chunk_id for entry in self._entries]

    def add(self, chunk_id: str, vector: EmbeddingVector) -> None:
        """Store a vector under a new id; quantizes it if the index does.

        All-zero vectors cannot be absmax-coded, so a quantized index keeps
        them raw and marks them as such when persisted.
        """
        if not chunk_id:
            raise VectorStoreError("chunk_id must be non-empty")
        if chunk_id in self._ids:
            raise DuplicateChunkIdError(f"chunk id already present: {chunk_id!r}")
        if vector.dim != self.dim:
            raise DimensionMismatchError(f"vector dim {vector.dim} != index dim {self.dim}")
        payload: EmbeddingVector | QuantizedVector
        if self.quantized:
            try:
                payload = quantize_absmax(vector)
            except ZeroVectorError:
                payload = EmbeddingVector(values=vector.values.copy(), normalized=False)
        else:
            payload = EmbeddingVector(values=vector.values.copy(), normalized=vector.normalized)
        self._append(chunk_id, payload)

    def _append(self, chunk_id: str, payload: EmbeddingVector | QuantizedVector) -> None:
        if isinstance(payload, QuantizedVector):
            values = dequantize(payload).values
        else:
            values = payload.values
        values64 = values.astype(np.float64)
        self._entries.append(
            _Entry(
                chunk_id=chunk_id,
                payload=payload,
                values64=values64,
                norm=float(np.linalg.norm(values64)),
            )
        )
        self._ids.add(chunk_id)
        self._matrix = None

    def entries(self) -> list[tuple[str, EmbeddingVector | QuantizedVector]]:
        return [(entry.chunk_id, entry.payload) for entry in self._entries]

    def _scores(self, query: EmbeddingVector) -> np.ndarray:
        if self._matrix is None:
            self._matrix = np.stack([entry.values64 for entry in self._entries])
        q = query.values.astype(np.float64)
        dots = self._matrix @ q
        if self.metric == "dot":
            return dots
        qnorm = float(np.linalg.norm(q))
        norms = np.array([entry.norm for entry in self._entries])
        scores = np.zeros(len(self._entries))
        # Zero-norm on either side pins the cosine score to 0.0.
        if qnorm != 0.0:
            nonzero = norms != 0.0
            scores[nonzero] = dots[nonzero] / (norms[nonzero] * qnorm)
        return np.clip(scores, -1.0, 1.0)

    def search_topk(self, query: EmbeddingVector, k: int) -> list[SearchHit]:
        """Exact top-k: score descending, ties broken by ascending chunk id."""
        if k < 1:
            raise VectorStoreError("k must be >= 1")
        if query.dim != self.dim:
            raise DimensionMismatchError(f"query dim {query.dim} != index dim {self.dim}")
        if not self._entries:
            return []
        scores = self._scores(query)
        order = sorted(
            range(len(self._entries)),
            key=lambda i: (-scores[i], self._entries[i].chunk_id),
        )
        return [
            SearchHit(chunk_id=self._entries[i].chunk_id, score=float(scores[i]), rank=rank)
            for rank, i in enumerate(order[:k], start=1)
        ]

    def save(self, path: str | Path) -> None:
        """Write the index atomically (temp file + rename in the same dir)."""
        path = Path(path)
        blob = self._serialize()
        fd, tmp_name = tempfile.mkstemp(dir=path.parent or Path("."), suffix=".tmp")
        try:
            with os.fdopen(fd, "wb") as handle:
                handle.write(blob)
            os.replace(tmp_name, path)
        except BaseException:
            if os.path.exists(tmp_name):
                os.unlink(tmp_name)
            raise

    def _serialize(self) -> bytes:
        out = bytearray()
        out += struct.pack(
            "<4sHBBIQ",
            _MAGIC,
            _VERSION,
            _METRICS.index(self.metric),
            1 if self.quantized else 0,
            self.dim,
            len(self._entries),
        )
        for entry in self._entries:
            encoded_id = entry.chunk_id.encode("utf-8")
            if len(encoded_id) > 0xFFFF:
                raise VectorStoreError(f"chunk id too long: {entry.chunk_id[:32]!r}...")
            out += struct.pack("<H", len(encoded_id))
            out += encoded_id
            payload = entry.payload
            if isinstance(payload, QuantizedVector):
                out += struct.pack("<B", _MARKER_PAYLOAD)
                out += struct.pack("<f", float(payload.quant_constant))
                out += payload.codes.tobytes()
            else:
                marker = _MARKER_RAW_ZERO if self.quantized else _MARKER_PAYLOAD
                out += struct.pack("<B", marker)
                out += payload.values.astype("<f4").tobytes()
        return bytes(out)

    @classmethod
    def load(cls, path: str | Path) -> "VectorIndex":
        blob = Path(path).read_bytes()
        reader = _Reader(blob)
        magic = reader.take(4, "magic")
        if magic != _MAGIC:
            raise IndexFormatError(f"bad magic {magic!r}, expected {_MAGIC!r}", 0)
        (version,) = struct.unpack("<H", reader.take(2, "version"))
        if version != _VERSION:
            raise IndexFormatError(f"unsupported version {version}", 4)
        (metric_code,) = struct.unpack("<B", reader.take(1, "metric"))
        (quant_flag,) = struct.unpack("<B", reader.take(1, "quantized flag"))
        (dim,) = struct.unpack("<I", reader.take(4, "dim"))
        (count,) = struct.unpack("<Q", reader.take(8, "entry count"))
        if metric_code >= len(_METRICS):
            raise IndexFormatError(f"unknown metric code {metric_code}", 6)
        if quant_flag not in (0, 1):
            raise IndexFormatError(f"invalid quantized flag {quant_flag}", 7)
        if dim < 1:
            raise IndexFormatError("dim must be >= 1", 8)
        index = cls(dim=dim, metric=_METRICS[metric_code], quantized=bool(quant_flag))
        for _ in range(count):
            (id_len,) = struct.unpack("<H", reader.take(2, "id length"))
            try:
                chunk_id = reader.take(id_len, "chunk id").decode("utf-8")
            except UnicodeDecodeError as exc:
                raise IndexFormatError(f"chunk id is not valid UTF-8: {exc}", reader.offset) from exc
            (marker,) = struct.unpack("<B", reader.take(1, "payload marker"))
            if marker == _MARKER_RAW_ZERO and not index.quantized:
                raise IndexFormatError("raw-vector marker in an unquantized index", reader.offset)
            if index.quantized and marker == _MARKER_PAYLOAD:
                (constant,) = struct.unpack("<f", reader.take(4, "quantization constant"))
                codes = np.frombuffer(reader.take(dim, "codes"), dtype=np.int8).copy()
                try:
                    payload: EmbeddingVector | QuantizedVector = QuantizedVector(
                        codes=codes, quant_constant=np.float32(constant)
                    )
                except Exception as exc:
                    raise IndexFormatError(str(exc), reader.offset) from exc
            elif marker == _MARKER_PAYLOAD or marker == _MARKER_RAW_ZERO:
                raw = reader.take(4 * dim, "vector payload")
                values = np.frombuffer(raw, dtype="<f4").astype(np.float32)
                try:
                    payload = EmbeddingVector(values=values, normalized=False)
                except Exception as exc:
                    raise IndexFormatError(str(exc), reader.offset) from exc
            else:
                raise IndexFormatError(f"unknown payload marker {marker}", reader.offset)
            if chunk_id in index._ids:
                raise IndexFormatError(f"duplicate chunk id {chunk_id!r}", reader.offset)
            index._append(chunk_id, payload)
        if reader.offset != len(blob):
            raise IndexFormatError(
                f"{len(blob) - reader.offset} trailing bytes after the last entry",
                reader.offset,
            )
        return index


class _Reader:
    """Byte cursor that reports the offset of any truncation."""

    def __init__(self, blob: bytes):
        self.blob = blob
        self.offset = 0

    def take(self, n: int, what: str) -> bytes:
        if self.offset + n > len(self.blob):
            raise IndexFormatError(
                f"truncated while reading {what}: need {n} bytes", self.offset
            )
        chunk = self.blob[self.offset : self.offset + n]
        self.offset += n
        return chunk
