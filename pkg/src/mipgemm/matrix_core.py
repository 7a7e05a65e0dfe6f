"""Element types, strided matrix views and the brute-force reference GEMMs.

Matrices are plain 2-D numpy arrays in row-major order.  Rows may be strided
(``row_stride >= cols``) but columns are always unit-stride.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np


class ElementType(enum.Enum):
    F32 = "f32"
    I8 = "i8"
    I32 = "i32"

    @property
    def dtype(self) -> np.dtype:
        return np.dtype(_DTYPES[self])

    @property
    def bits(self) -> int:
        return self.dtype.itemsize * 8

    @property
    def nbytes(self) -> int:
        return self.dtype.itemsize

    @classmethod
    def of(cls, arr) -> "ElementType":
        dt = np.asarray(arr).dtype
        for tag, name in _DTYPES.items():
            if dt == np.dtype(name):
                return tag
        raise TypeError(f"unsupported element dtype {dt}")


_DTYPES = {ElementType.F32: "<f4", ElementType.I8: "i1", ElementType.I32: "<i4"}

I8_MIN, I8_MAX = -128, 127

# Largest k for which k products of magnitude 128*128 still fit in int32.
OVERFLOW_SAFE_K = (2**31 - 1) // (128 * 128)


class ContractError(ValueError):
    """Operands violate a dimension or type contract."""


class OverflowRiskError(ContractError):
    """Reduction length could overflow the 32-bit accumulator."""


def matrix_view(storage, rows: int, cols: int, row_stride: int | None = None, offset: int = 0) -> np.ndarray:
    """Row-major view of ``rows x cols`` elements over a flat buffer.

    Element (i, j) lives at ``storage[offset + i*row_stride + j]``.  The result
    shares memory with *storage*.
    """
    buf = np.asarray(storage)
    if buf.ndim != 1:
        raise ContractError("storage must be a flat buffer")
    row_stride = cols if row_stride is None else row_stride
    if row_stride < cols:
        raise ContractError(f"row_stride {row_stride} < cols {cols}")
    if rows and cols and offset + (rows - 1) * row_stride + cols > buf.size:
        raise ContractError("storage too small for requested view")
    item = buf.itemsize
    return np.lib.stride_tricks.as_strided(
        buf[offset:], shape=(rows, cols), strides=(row_stride * item, item), writeable=buf.flags.writeable
    )


def row_stride(view: np.ndarray) -> int:
    """Leading dimension of a view, in elements."""
    if view.ndim != 2:
        raise ContractError("expected a 2-D view")
    if view.shape[1] > 1 and view.strides[1] != view.itemsize:
        raise ContractError("columns must be unit-stride")
    return view.strides[0] // view.itemsize if view.shape[0] > 1 else view.shape[1]


@dataclass(frozen=True)
class GemmProblem:
    m: int
    n: int
    k: int
    transpose_a: bool = False
    transpose_b: bool = False
    accumulate: bool = False

    @classmethod
    def from_operands(cls, C, A, B, transpose_a=False, transpose_b=False, accumulate=False) -> "GemmProblem":
        for name, x in (("C", C), ("A", A), ("B", B)):
            if np.ndim(x) != 2:
                raise ContractError(f"{name} must be 2-D, got shape {np.shape(x)}")
        m, ka = A.shape[::-1] if transpose_a else A.shape
        kb, n = B.shape[::-1] if transpose_b else B.shape
        if ka != kb:
            raise ContractError(f"inner dimensions differ: A gives k={ka}, B gives k={kb}")
        if C.shape != (m, n):
            raise ContractError(f"C has shape {C.shape}, expected {(m, n)}")
        return cls(m, n, ka, transpose_a, transpose_b, accumulate)


def _check_types(C, A, B, c_elem, ab_elem):
    for name, x, want in (("C", C, c_elem), ("A", A, ab_elem), ("B", B, ab_elem)):
        if ElementType.of(x) is not want:
            raise ContractError(f"{name} must be {want.name}, got {x.dtype}")
    if np.shares_memory(C, A) or np.shares_memory(C, B):
        raise ContractError("C must not alias A or B")


def naive_gemm_f32(C: np.ndarray, A: np.ndarray, B: np.ndarray, accumulate: bool = False) -> None:
    """C (+)= A @ B in float32, each element summed over k in ascending order.

    Every step is an unfused multiply followed by an add, both rounded to
    float32, so results are reproducible bit for bit.
    """
    GemmProblem.from_operands(C, A, B)
    _check_types(C, A, B, ElementType.F32, ElementType.F32)
    acc = C.copy() if accumulate else np.zeros_like(C)
    for p in range(A.shape[1]):
        acc += A[:, p : p + 1] * B[p : p + 1, :]
    C[...] = acc


def naive_gemm_i8_i32(C: np.ndarray, A: np.ndarray, B: np.ndarray, accumulate: bool = False) -> None:
    """Exact int8 x int8 -> int32 GEMM.

    Products are summed in int64 and added to C with 32-bit wraparound, which
    is what any int32 accumulator produces regardless of summation order.
    """
    prob = GemmProblem.from_operands(C, A, B)
    _check_types(C, A, B, ElementType.I32, ElementType.I8)
    check_k_bound(prob.k)
    prod = A.astype(np.int64) @ B.astype(np.int64)
    if accumulate:
        prod += C
    C[...] = prod.astype(np.int32)


def check_k_bound(k: int) -> None:
    if k > OVERFLOW_SAFE_K:
        raise OverflowRiskError(
            f"k={k} exceeds {OVERFLOW_SAFE_K}; int8 products could overflow the int32 accumulator"
        )


def naive_matvec_f32(y: np.ndarray, A: np.ndarray, x: np.ndarray, accumulate: bool = False) -> None:
    """y (+)= A @ x with x, y given as single-column views."""
    if x.ndim != 2 or y.ndim != 2 or x.shape[1] != 1 or y.shape[1] != 1:
        raise ContractError("x and y must be single-column matrices")
    if A.shape[1] != x.shape[0] or A.shape[0] != y.shape[0]:
        raise ContractError(f"matvec shapes disagree: A {A.shape}, x {x.shape}, y {y.shape}")
    naive_gemm_f32(y, A, x, accumulate)
