"""Convolution via im2col + GEMM, and a direct convolution to check it against.

Tensors are channel-last: (b, h, w, c).  Filters are given as a
c_o x (h_f*w_f*c_i) matrix whose columns follow the im2col row order
(filter row, filter column, channel), channel fastest.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .macro_kernel import BlockingParams, gemm
from .matrix_core import ContractError
from .micro_kernels import MicroKernel


@dataclass(frozen=True)
class ConvSpec:
    c_o: int
    h_f: int
    w_f: int
    c_i: int
    stride: int = 1
    pad: int = 0

    def output_hw(self, h_i: int, w_i: int) -> tuple[int, int]:
        out = []
        for size, f in ((h_i, self.h_f), (w_i, self.w_f)):
            span = size + 2 * self.pad - f
            if span < 0 or span % self.stride:
                raise ContractError(
                    f"filter {f} with stride {self.stride}, pad {self.pad} does not tile input extent {size}"
                )
            out.append(span // self.stride + 1)
        return out[0], out[1]

    def gemm_dims(self, b: int, h_i: int, w_i: int) -> tuple[int, int, int]:
        """(m, n, k) = (c_o, b*h_o*w_o, c_i*h_f*w_f) of the lowered GEMM."""
        h_o, w_o = self.output_hw(h_i, w_i)
        return self.c_o, b * h_o * w_o, self.c_i * self.h_f * self.w_f


def _check_input(I: np.ndarray, spec: ConvSpec):
    if I.ndim != 4:
        raise ContractError(f"input must be (b, h, w, c), got shape {I.shape}")
    if I.shape[3] != spec.c_i:
        raise ContractError(f"input has {I.shape[3]} channels, spec expects {spec.c_i}")


def im2col(I: np.ndarray, spec: ConvSpec) -> np.ndarray:
    """Lower (b, h, w, c_i) input to a (c_i*h_f*w_f) x (b*h_o*w_o) matrix.

    Column (n, y, x) holds the receptive field of output pixel (y, x) of
    image n; padded positions are zero.
    """
    _check_input(I, spec)
    b, h, w, c = I.shape
    h_o, w_o = spec.output_hw(h, w)
    p, s = spec.pad, spec.stride
    padded = np.zeros((b, h + 2 * p, w + 2 * p, c), I.dtype)
    padded[:, p : p + h, p : p + w, :] = I
    cols = np.empty((spec.h_f, spec.w_f, c, b, h_o, w_o), I.dtype)
    for fy in range(spec.h_f):
        for fx in range(spec.w_f):
            win = padded[:, fy : fy + s * (h_o - 1) + 1 : s, fx : fx + s * (w_o - 1) + 1 : s, :]
            cols[fy, fx] = win.transpose(3, 0, 1, 2)
    return cols.reshape(spec.h_f * spec.w_f * c, b * h_o * w_o)


def flatten_filters(F4: np.ndarray) -> np.ndarray:
    """(c_o, h_f, w_f, c_i) filter tensor -> c_o x (h_f*w_f*c_i) matrix in im2col row order."""
    return np.ascontiguousarray(F4.reshape(F4.shape[0], -1))


def conv_lowered(F: np.ndarray, I: np.ndarray, spec: ConvSpec, kernel: MicroKernel,
                 params: BlockingParams | None = None, workers: int = 1) -> np.ndarray:
    """Convolution as one GEMM: O^T = F @ im2col(I); returns (b, h_o, w_o, c_o)."""
    b, h, w, _ = I.shape
    m, n, k = spec.gemm_dims(b, h, w)
    if F.shape != (m, k):
        raise ContractError(f"filter matrix shape {F.shape}, expected {(m, k)}")
    cols = im2col(I, spec)
    assert cols.shape == (k, n)
    out = np.zeros((m, n), kernel.spec.acc_elem.dtype)
    gemm(out, F, cols, kernel, params, workers)
    h_o, w_o = spec.output_hw(h, w)
    return np.ascontiguousarray(out.T).reshape(b, h_o, w_o, m)


def direct_conv(F: np.ndarray, I: np.ndarray, spec: ConvSpec) -> np.ndarray:
    """Seven-loop convolution; int8 inputs accumulate exactly into int32."""
    _check_input(I, spec)
    b, h, w, c = I.shape
    h_o, w_o = spec.output_hw(h, w)
    F4 = F.reshape(spec.c_o, spec.h_f, spec.w_f, c)
    integer = np.issubdtype(I.dtype, np.integer)
    acc_t = np.int64 if integer else np.float64
    out = np.zeros((b, h_o, w_o, spec.c_o), acc_t)
    for n in range(b):
        for y in range(h_o):
            for x in range(w_o):
                for fy in range(spec.h_f):
                    iy = y * spec.stride + fy - spec.pad
                    if not 0 <= iy < h:
                        continue
                    for fx in range(spec.w_f):
                        ix = x * spec.stride + fx - spec.pad
                        if not 0 <= ix < w:
                            continue
                        # remaining loops (output channel, input channel) as one product
                        out[n, y, x, :] += F4[:, fy, fx, :].astype(acc_t) @ I[n, iy, ix, :].astype(acc_t)
    return out.astype(np.int32 if integer else np.float32)
