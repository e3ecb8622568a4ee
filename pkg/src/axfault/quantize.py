"""Symmetric per-tensor int8 quantization.

scale = max(|t|) / 127 (1.0 when that comes out zero), codes are rounded
half away from zero and clamped to [-127, 127]. Code -128 is never
produced, so every code has an exact negation and the multiplier tables
see a symmetric operand range.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(eq=False)
class QTensor:
    data: np.ndarray
    scale: float

    def __post_init__(self):
        self.data = np.ascontiguousarray(self.data, dtype=np.int8)
        self.scale = float(self.scale)


def quantize(t: np.ndarray) -> QTensor:
    t = np.asarray(t, dtype=np.float64)
    if not np.all(np.isfinite(t)):
        raise ValueError("cannot quantize non-finite values")
    amax = float(np.max(np.abs(t))) if t.size else 0.0
    scale = amax / 127.0
    if scale == 0.0:
        # all-zero tensor, or amax so small the division underflowed;
        # either way every code is 0 and any positive scale is consistent
        scale = 1.0
    # round half away from zero: numpy's round() is half-to-even, so build
    # it from floor(|x| + 0.5)
    x = t / scale
    codes = np.sign(x) * np.floor(np.abs(x) + 0.5)
    codes = np.clip(codes, -127, 127)
    return QTensor(codes.astype(np.int8), scale)


def dequantize(q: QTensor) -> np.ndarray:
    return q.data.astype(np.float64) * q.scale


def requantize_accum(acc: np.ndarray, w_scale: float, a_scale: float) -> np.ndarray:
    """Map int32 accumulator values back to float: acc * w_scale * a_scale."""
    return acc.astype(np.float64) * (float(w_scale) * float(a_scale))
