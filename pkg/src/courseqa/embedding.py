"""Text embedding providers and int8 absmax vector coding.

The local provider is a seeded feature-hashing embedder: it needs no model
weights, produces the same vector for the same (text, seed, dim) on every
platform, and is good enough to exercise retrieval and scoring end to end.
A remote provider speaks a minimal JSON protocol for real encoder models.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
import requests

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF

ENV_EMBED_ENDPOINT = "QA_EMBED_ENDPOINT"

DEFAULT_DIM = 768


class EmbeddingError(Exception):
    """Base class for embedding failures."""


class EmbeddingConfigError(EmbeddingError):
    """Fatal misconfiguration, e.g. a dimension mismatch. Not retryable."""


class ZeroVectorError(EmbeddingError):
    """A vector with zero (or vanishingly small) magnitude cannot be used here.

    For quantization this also covers subnormal absmax values whose scaling
    constant would overflow float32; callers store such vectors raw.
    """


class CorruptQuantizationError(EmbeddingError):
    """A quantized vector carries an unusable quantization constant."""


class RemoteEmbeddingError(EmbeddingError):
    """Transport or decode failure talking to a remote embedding endpoint."""

    def __init__(self, message: str, endpoint: str, status: int | None = None):
        super().__init__(message)
        self.endpoint = endpoint
        self.status = status
        self.retryable = True


@dataclass(frozen=True, eq=False)
class EmbeddingVector:
    """A finite float32 vector plus a flag recording whether it is unit-norm."""

    values: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float32)
        if values.ndim != 1 or values.size == 0:
            raise EmbeddingConfigError("embedding must be a non-empty 1-D vector")
        if not np.all(np.isfinite(values)):
            raise EmbeddingConfigError("embedding contains non-finite values")
        object.__setattr__(self, "values", values)

    @property
    def dim(self) -> int:
        return int(self.values.shape[0])


@dataclass(frozen=True, eq=False)
class QuantizedVector:
    """int8 codes in [-127, 127] plus the constant that maps them back."""

    codes: np.ndarray
    quant_constant: np.float32

    def __post_init__(self):
        codes = np.asarray(self.codes)
        if codes.dtype != np.int8 or codes.ndim != 1 or codes.size == 0:
            raise CorruptQuantizationError("codes must be a non-empty int8 vector")
        if codes.min() < -127 or codes.max() > 127:
            raise CorruptQuantizationError("codes out of [-127, 127]")
        constant = np.float32(self.quant_constant)
        if not np.isfinite(constant) or constant <= 0:
            raise CorruptQuantizationError(
                f"quantization constant must be finite and > 0, got {constant!r}"
            )
        object.__setattr__(self, "codes", codes)
        object.__setattr__(self, "quant_constant", constant)

    @property
    def dim(self) -> int:
        return int(self.codes.shape[0])


@dataclass(frozen=True)
class EmbeddingProviderConfig:
    """Which embedder to use and how to reach it.

    ``deterministic_local`` ignores endpoint/model and hashes locally;
    ``remote_http`` posts to ``endpoint`` (QA_EMBED_ENDPOINT overrides it).
    """

    kind: str = "deterministic_local"
    dim: int = DEFAULT_DIM
    endpoint: str | None = None
    model_name: str | None = None
    seed: int = 0
    timeout: float = 10.0

    def __post_init__(self):
        if self.kind not in ("deterministic_local", "remote_http"):
            raise EmbeddingConfigError(f"unknown embedder kind: {self.kind!r}")
        if self.dim < 1:
            raise EmbeddingConfigError("dim must be >= 1")

    def resolved_endpoint(self) -> str | None:
        return os.environ.get(ENV_EMBED_ENDPOINT) or self.endpoint

    def provider_id(self) -> str:
        if self.kind == "deterministic_local":
            return f"local:fnv1a:d{self.dim}:s{self.seed}"
        return f"remote:{self.model_name or self.resolved_endpoint() or 'unconfigured'}"


def fnv1a64(data: bytes, seed: int = 0) -> int:
    """64-bit FNV-1a over 8 little-endian seed bytes followed by the data."""
    h = _FNV_OFFSET
    for byte in (seed & _MASK64).to_bytes(8, "little"):
        h = ((h ^ byte) * _FNV_PRIME) & _MASK64
    for byte in data:
        h = ((h ^ byte) * _FNV_PRIME) & _MASK64
    return h


def _hashed_features(text: str) -> list[str]:
    # Tokens plus adjacent-token bigrams; tokens never contain whitespace,
    # so the joining space cannot collide a bigram with a unigram.
    tokens = text.lower().split()
    features = list(tokens)
    features.extend(f"{a} {b}" for a, b in zip(tokens, tokens[1:]))
    return features


def _embed_local(text: str, config: EmbeddingProviderConfig) -> EmbeddingVector:
    accum = np.zeros(config.dim, dtype=np.int64)
    for feature in _hashed_features(text):
        h = fnv1a64(feature.encode("utf-8"), config.seed)
        bucket = h % config.dim
        accum[bucket] += 1 if (h >> 63) == 0 else -1
    return _normalized(accum.astype(np.float32))


def _normalized(values: np.ndarray) -> EmbeddingVector:
    norm = np.linalg.norm(values)
    if norm == 0.0:
        return EmbeddingVector(values=values, normalized=False)
    return EmbeddingVector(values=values / norm, normalized=True)


def _embed_remote(text: str, config: EmbeddingProviderConfig) -> EmbeddingVector:
    endpoint = config.resolved_endpoint()
    if not endpoint:
        raise EmbeddingConfigError("remote_http embedder requires an endpoint")
    body = {"model": config.model_name or "", "input": [text]}
    try:
        resp = requests.post(endpoint, json=body, timeout=config.timeout)
    except requests.RequestException as exc:
        raise RemoteEmbeddingError(f"embedding request failed: {exc}", endpoint) from exc
    if resp.status_code != 200:
        raise RemoteEmbeddingError(
            f"embedding endpoint returned HTTP {resp.status_code}", endpoint, resp.status_code
        )
    try:
        payload = resp.json()
        raw = payload["data"][0]["embedding"]
        values = np.asarray(raw, dtype=np.float32)
    except (ValueError, KeyError, IndexError, TypeError) as exc:
        raise RemoteEmbeddingError(f"malformed embedding response: {exc}", endpoint) from exc
    if values.ndim != 1 or values.shape[0] != config.dim:
        raise EmbeddingConfigError(
            f"embedding endpoint returned dim {values.shape}, expected ({config.dim},)"
        )
    return _normalized(values)


def embed_text(text: str, config: EmbeddingProviderConfig) -> EmbeddingVector:
    """Embed one text and L2-normalize it; all-zero outputs stay unnormalized."""
    if config.kind == "deterministic_local":
        return _embed_local(text, config)
    return _embed_remote(text, config)


def _round_half_away(x: np.ndarray) -> np.ndarray:
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def quantize_absmax(vector: EmbeddingVector) -> QuantizedVector:
    """Map a nonzero vector to int8 codes with constant 127 / absmax.

    The constant is computed with a single float32 division. Routing it
    through float64 double-rounds the reciprocal and breaks the guarantee
    that re-quantizing a dequantized vector reproduces the same codes.
    """
    values = vector.values
    absmax = np.float32(np.max(np.abs(values)))
    if absmax == 0:
        raise ZeroVectorError("cannot quantize an all-zero vector")
    with np.errstate(over="ignore"):
        constant = np.float32(127.0) / absmax
    if not np.isfinite(constant):
        raise ZeroVectorError(
            f"absmax {float(absmax):g} is too small to quantize; store the vector raw"
        )
    scaled = values.astype(np.float64) * float(constant)
    codes = np.clip(_round_half_away(scaled), -127, 127).astype(np.int8)
    return QuantizedVector(codes=codes, quant_constant=constant)


def dequantize(quantized: QuantizedVector) -> EmbeddingVector:
    """Invert the int8 coding up to rounding error; result is not normalized."""
    constant = np.float32(quantized.quant_constant)
    if not np.isfinite(constant) or constant <= 0:
        raise CorruptQuantizationError(
            f"quantization constant must be finite and > 0, got {constant!r}"
        )
    values = quantized.codes.astype(np.float32) / constant
    return EmbeddingVector(values=values, normalized=False)


def cosine_similarity(a: EmbeddingVector, b: EmbeddingVector) -> float:
    """Cosine of the angle between two vectors, accumulated in float64."""
    if a.dim != b.dim:
        raise EmbeddingConfigError(f"dimension mismatch: {a.dim} vs {b.dim}")
    x = a.values.astype(np.float64)
    y = b.values.astype(np.float64)
    nx = float(np.linalg.norm(x))
    ny = float(np.linalg.norm(y))
    if nx == 0.0 or ny == 0.0:
        raise ZeroVectorError("cosine similarity is undefined for zero-norm vectors")
    value = float(np.dot(x, y) / (nx * ny))
    return min(1.0, max(-1.0, value))
