"""Low-rank adapter math over small dense matrices.

A frozen base weight W (optionally stored as int8 codes) is adapted by a
rank-r pair L1 (h x r) and L2 (r x o), scaled by alpha / rank. The adapted
product is always computed as (X @ L1) @ L2 so the full h x o update matrix
is never materialized except by an explicit merge.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .embedding import CorruptQuantizationError, _round_half_away


class ShapeMismatchError(Exception):
    """Incompatible matrix shapes; the message names both operands."""


@dataclass(frozen=True, eq=False)
class DenseMatrix:
    """A finite float32 matrix."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float32)
        if data.ndim != 2 or data.size == 0:
            raise ShapeMismatchError("matrix must be 2-D and non-empty")
        if not np.all(np.isfinite(data)):
            raise ShapeMismatchError("matrix contains non-finite values")
        object.__setattr__(self, "data", data)

    @property
    def rows(self) -> int:
        return int(self.data.shape[0])

    @property
    def cols(self) -> int:
        return int(self.data.shape[1])

    @property
    def nbytes(self) -> int:
        return int(self.data.nbytes)


@dataclass(frozen=True, eq=False)
class QuantizedLinear:
    """int8 base weights with one absmax constant for the whole matrix."""

    codes: np.ndarray
    quant_constant: np.float32

    def __post_init__(self):
        codes = np.asarray(self.codes)
        if codes.dtype != np.int8 or codes.ndim != 2 or codes.size == 0:
            raise CorruptQuantizationError("codes must be a non-empty int8 matrix")
        constant = np.float32(self.quant_constant)
        if not np.isfinite(constant) or constant <= 0:
            raise CorruptQuantizationError(
                f"quantization constant must be finite and > 0, got {constant!r}"
            )
        object.__setattr__(self, "codes", codes)
        object.__setattr__(self, "quant_constant", constant)

    @property
    def rows(self) -> int:
        return int(self.codes.shape[0])

    @property
    def cols(self) -> int:
        return int(self.codes.shape[1])

    @property
    def nbytes(self) -> int:
        # int8 codes plus the single float32 constant.
        return int(self.codes.nbytes) + 4


def effective_scale(alpha: float, rank: int) -> float:
    if rank < 1:
        raise ValueError("rank must be >= 1")
    return alpha / rank


@dataclass(frozen=True, eq=False)
class LowRankAdapter:
    """The trainable pair (L1, L2) plus its scaling."""

    l1: DenseMatrix
    l2: DenseMatrix
    rank: int
    alpha: float
    scale: float | None = None

    def __post_init__(self):
        if self.rank < 1:
            raise ValueError("rank must be >= 1")
        if self.l1.cols != self.rank or self.l2.rows != self.rank:
            raise ShapeMismatchError(
                f"adapter rank {self.rank} does not match L1 {self.l1.data.shape} / "
                f"L2 {self.l2.data.shape}"
            )
        if self.scale is None:
            object.__setattr__(self, "scale", effective_scale(self.alpha, self.rank))

    @property
    def in_dim(self) -> int:
        return self.l1.rows

    @property
    def out_dim(self) -> int:
        return self.l2.cols


def _check_adapter_fits(w_rows: int, w_cols: int, adapter: LowRankAdapter, w_desc: str):
    if adapter.in_dim != w_rows or adapter.out_dim != w_cols:
        raise ShapeMismatchError(
            f"adapter ({adapter.in_dim} x {adapter.out_dim}) does not fit "
            f"{w_desc} ({w_rows} x {w_cols})"
        )


def adapted_forward(x: DenseMatrix, w: DenseMatrix, adapter: LowRankAdapter) -> DenseMatrix:
    """X @ W plus the scaled low-rank update, without forming L1 @ L2."""
    if x.cols != w.rows:
        raise ShapeMismatchError(f"X ({x.rows} x {x.cols}) does not match W ({w.rows} x {w.cols})")
    _check_adapter_fits(w.rows, w.cols, adapter, "W")
    base = x.data @ w.data
    low = (x.data @ adapter.l1.data) @ adapter.l2.data
    return DenseMatrix(base + np.float32(adapter.scale) * low)


def merge(w: DenseMatrix, adapter: LowRankAdapter) -> DenseMatrix:
    """Fold the adapter into the base weights: W + scale * (L1 @ L2)."""
    _check_adapter_fits(w.rows, w.cols, adapter, "W")
    return DenseMatrix(w.data + np.float32(adapter.scale) * (adapter.l1.data @ adapter.l2.data))


def quantize_weights(w: DenseMatrix) -> QuantizedLinear:
    """absmax int8 coding of a weight matrix with one shared constant."""
    absmax = np.float32(np.max(np.abs(w.data)))
    if absmax == 0:
        raise CorruptQuantizationError("cannot quantize an all-zero weight matrix")
    with np.errstate(over="ignore"):
        constant = np.float32(127.0) / absmax
    if not np.isfinite(constant):
        raise CorruptQuantizationError(
            f"weight absmax {float(absmax):g} is too small to quantize"
        )
    scaled = w.data.astype(np.float64) * float(constant)
    codes = np.clip(_round_half_away(scaled), -127, 127).astype(np.int8)
    return QuantizedLinear(codes=codes, quant_constant=constant)


def dequantize_weights(wq: QuantizedLinear) -> DenseMatrix:
    return DenseMatrix(wq.codes.astype(np.float32) / np.float32(wq.quant_constant))


def quantized_forward(x: DenseMatrix, wq: QuantizedLinear, adapter: LowRankAdapter) -> DenseMatrix:
    """Forward through dequantized base weights; the adapter stays float32."""
    if x.cols != wq.rows:
        raise ShapeMismatchError(
            f"X ({x.rows} x {x.cols}) does not match quantized W ({wq.rows} x {wq.cols})"
        )
    _check_adapter_fits(wq.rows, wq.cols, adapter, "quantized W")
    return adapted_forward(x, dequantize_weights(wq), adapter)


def trainable_fraction(h: int, o: int, rank: int) -> float:
    """Adapter parameters relative to the h x o base matrix: r(h + o) / (h o)."""
    if h < 1 or o < 1:
        raise ValueError("h and o must be >= 1")
    if rank < 1:
        raise ValueError("rank must be >= 1")
    return rank * (h + o) / (h * o)


def save_adapter(adapter: LowRankAdapter, path: str | Path) -> None:
    """JSON header, blank line, then L1 and L2 as little-endian float32."""
    header = {
        "h": adapter.in_dim,
        "o": adapter.out_dim,
        "rank": adapter.rank,
        "alpha": adapter.alpha,
    }
    blob = json.dumps(header).encode("utf-8") + b"\n\n"
    blob += adapter.l1.data.astype("<f4").tobytes()
    blob += adapter.l2.data.astype("<f4").tobytes()
    Path(path).write_bytes(blob)


def load_adapter(path: str | Path) -> LowRankAdapter:
    blob = Path(path).read_bytes()
    sep = blob.find(b"\n\n")
    if sep < 0:
        raise ShapeMismatchError("adapter file has no header/payload separator")
    try:
        header = json.loads(blob[:sep].decode("utf-8"))
        h, o, rank, alpha = header["h"], header["o"], int(header["rank"]), float(header["alpha"])
    except (ValueError, KeyError, TypeError) as exc:
        raise ShapeMismatchError(f"bad adapter header: {exc}") from exc
    payload = blob[sep + 2 :]
    expected = 4 * (h * rank + rank * o)
    if len(payload) != expected:
        raise ShapeMismatchError(
            f"adapter payload is {len(payload)} bytes, expected {expected} for "
            f"h={h} o={o} rank={rank}"
        )
    l1 = np.frombuffer(payload[: 4 * h * rank], dtype="<f4").reshape(h, rank)
    l2 = np.frombuffer(payload[4 * h * rank :], dtype="<f4").reshape(rank, o)
    return LowRankAdapter(
        l1=DenseMatrix(l1.copy()), l2=DenseMatrix(l2.copy()), rank=rank, alpha=alpha
    )
