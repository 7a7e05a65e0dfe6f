"""Dynamic per-tensor symmetric int8 quantization and the scaled integer GEMM."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .macro_kernel import BlockingParams, gemm
from .matrix_core import ContractError, ElementType, check_k_bound
from .micro_kernels import MicroKernel

QMAX = 127
_TINY = np.float32(np.finfo(np.float32).smallest_subnormal)


class NonFiniteInputError(ValueError):
    pass


@dataclass
class QuantizedMatrix:
    data: np.ndarray  # int8, entries in [-127, 127]
    scale: np.float32

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    def dequantize(self) -> np.ndarray:
        return self.data.astype(np.float32) * self.scale


def round_half_away(x: np.ndarray) -> np.ndarray:
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def quantize_dynamic(M: np.ndarray) -> QuantizedMatrix:
    """Quantize with scale max|M|/127 (1 for an all-zero matrix).

    Codes are ``round(M / scale)`` with ties away from zero, clamped to
    [-127, 127] so negation stays symmetric.
    """
    M = np.asarray(M, dtype=np.float32)
    if not np.all(np.isfinite(M)):
        raise NonFiniteInputError("quantize_dynamic needs finite input")
    amax = np.float32(np.max(np.abs(M))) if M.size else np.float32(0)
    scale = max(amax / np.float32(QMAX), _TINY) if amax > 0 else np.float32(1)
    # For subnormal amax the division loses precision (or underflows to 0);
    # step the scale up until the largest code no longer needs clamping.
    while np.float64(amax) / np.float64(scale) >= QMAX + 0.5:
        scale = np.nextafter(scale, np.float32(np.inf))
    q = round_half_away(M.astype(np.float64) / np.float64(scale))
    q = np.clip(q, -QMAX, QMAX).astype(np.int8)
    return QuantizedMatrix(q, np.float32(scale))


def qgemm(Aq: QuantizedMatrix, Bq: QuantizedMatrix, kernel: MicroKernel,
          params: BlockingParams | None = None, workers: int = 1) -> np.ndarray:
    """Approximate A @ B as (s_A * s_B) * (A^q @ B^q), the integer part on *kernel*."""
    if Aq.cols != Bq.rows:
        raise ContractError(f"inner dimensions differ: {Aq.cols} vs {Bq.rows}")
    if kernel.spec.in_elem is not ElementType.I8:
        raise ContractError(f"{kernel.name} is not an int8 kernel")
    check_k_bound(Aq.cols)
    Cq = np.zeros((Aq.rows, Bq.cols), np.int32)
    gemm(Cq, Aq.data, Bq.data, kernel, params, workers)
    return rescale(Cq, Aq.scale, Bq.scale)


def rescale(Cq: np.ndarray, s_a, s_b) -> np.ndarray:
    return Cq.astype(np.float32) * (np.float32(s_a) * np.float32(s_b))


# Weight-to-activation GEMMs of the encoder block are quantized; the two
# activation-to-activation products are not.
_ENCODER_ELIGIBILITY = {
    "M1": True, "M2": True, "M3": True, "M9": True, "F11": True, "F13": True,
    "M5": False, "M7": False,
}


def eligible_for_quantization(case) -> bool:
    """Whether a workload case runs through the quantized integer path.

    Convolution layers and the encoder's weight GEMMs are eligible; the
    attention score / context products and the final FC matvec are not.
    Free-form ``gemm`` cases carry their own ``quantize`` flag.
    """
    kind = getattr(case, "kind", None)
    label = getattr(case, "label", case)
    if kind == "conv":
        return True
    if kind == "matvec":
        return False
    if label in _ENCODER_ELIGIBILITY:
        return _ENCODER_ELIGIBILITY[label]
    if kind == "gemm" and str(label).startswith("gemm"):
        return bool(case.quantize)
    raise KeyError(f"no quantization rule for workload label {label!r}")
