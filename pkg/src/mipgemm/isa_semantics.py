"""Executable lane-level models of the SIMD and tile instructions used by the micro-kernels.

Registers are numpy arrays whose last axis (or last two, for tiles) holds the
lanes; any leading axes are a batch, so a kernel can drive many micro-tiles
through one call.  Lane 0 is the lowest-addressed element (little-endian), and
``reinterpret`` reuses the raw bytes the way a register cast does.

Integer adds wrap in two's complement, as the non-saturating NEON forms do.
FP32 multiply-accumulate is unfused: the product is rounded to float32 before
the add.
"""
from __future__ import annotations

import numpy as np

VECN_WIDTHS = (128, 256, 512, 1024, 2048)

I8 = np.dtype("i1")
I16 = np.dtype("<i2")
I32 = np.dtype("<i4")
F32 = np.dtype("<f4")


class WidthError(ValueError):
    pass


def vec(values, dtype, width_bits: int = 128) -> np.ndarray:
    """Build a register from lane values, checking the total width."""
    v = np.asarray(values, dtype=dtype)
    if v.shape[-1] * v.itemsize * 8 != width_bits:
        raise WidthError(f"{v.shape[-1]} lanes of {v.dtype} do not fill {width_bits} bits")
    return v


def reinterpret(v: np.ndarray, dtype) -> np.ndarray:
    """Byte-preserving cast of the lane axis (e.g. 16 x i8 -> 4 x i32)."""
    return np.ascontiguousarray(v).view(np.dtype(dtype))


def width_bits(v: np.ndarray) -> int:
    return v.shape[-1] * v.itemsize * 8


def _check_vecn(*vs: np.ndarray) -> int:
    widths = {width_bits(v) for v in vs}
    if len(widths) != 1:
        raise WidthError(f"operand widths differ: {sorted(widths)}")
    (w,) = widths
    if w not in VECN_WIDTHS:
        raise WidthError(f"unsupported vector length {w}")
    return w


def _check_lane(lane: int) -> None:
    if not 0 <= lane < 4:
        raise IndexError(f"lane {lane} out of range 0..3")


# -- AXPY-style FP32 --------------------------------------------------------

def fma_lane_f32(acc, v1, v2, lane: int) -> np.ndarray:
    """vfmaq_laneq_f32: ``acc[i] + v1[i] * v2[lane]`` for four float32 lanes."""
    _check_lane(lane)
    acc = np.asarray(acc, F32)
    prod = np.asarray(v1, F32) * np.asarray(v2, F32)[..., lane : lane + 1]
    return acc + prod


# -- ARMv8.0 NEON -----------------------------------------------------------

def mull_s8(v0, v1) -> np.ndarray:
    """vmull_s8: widening 8 x i8 product into 8 x i16."""
    return np.asarray(v0, I8).astype(I16) * np.asarray(v1, I8).astype(I16)


def mlal_s8(acc, v1, v2) -> np.ndarray:
    """vmlal_s8: ``acc[i] + v1[i]*v2[i]`` in i16; the add wraps."""
    return np.asarray(acc, I16) + mull_s8(v1, v2)


def padal_s16(acc, v1) -> np.ndarray:
    """vpadalq_s16: add adjacent i16 pairs of *v1* into four i32 lanes."""
    v1 = np.asarray(v1, I16).astype(I32)
    return np.asarray(acc, I32) + v1[..., 0::2] + v1[..., 1::2]


def padd_s32(v0, v1) -> np.ndarray:
    """vpaddq_s32: pairwise sums of *v0* then *v1*."""
    v0 = np.asarray(v0, I32)
    v1 = np.asarray(v1, I32)
    return np.concatenate([v0[..., 0::2] + v0[..., 1::2], v1[..., 0::2] + v1[..., 1::2]], axis=-1)


# -- ARMv8.2 NEON / SVE2 dot products ---------------------------------------

def _group_dot(a, b) -> np.ndarray:
    # a, b: (..., n, 4) int8, broadcastable -> (..., n) int32
    return (a.astype(I32) * b.astype(I32)).sum(axis=-1, dtype=I32)


def dot_lane_s32(acc, v1, v2, lane: int) -> np.ndarray:
    """vdotq_laneq_s32: each i32 lane gains a 4-way dot with group *lane* of *v2*."""
    _check_lane(lane)
    v1 = np.asarray(v1, I8)
    v2 = np.asarray(v2, I8)
    groups = v1.reshape(v1.shape[:-1] + (4, 4))
    sel = v2[..., None, 4 * lane : 4 * lane + 4]
    return np.asarray(acc, I32) + _group_dot(groups, sel)


def svdot_lane_s32(acc, v1, v2, lane: int) -> np.ndarray:
    """svdot_lane_s32 over n i32 lanes.

    *v2* is a tuple of four vectors stacked on axis -2; ``v2[lane]`` is dotted
    group-by-group with *v1*.
    """
    _check_lane(lane)
    acc = np.asarray(acc, I32)
    v1 = np.asarray(v1, I8)
    v2 = np.asarray(v2, I8)
    if v2.shape[-2] != 4:
        raise WidthError("v2 must be a 4-tuple of vectors")
    _check_vecn(acc, v1, v2[..., lane, :])
    n = acc.shape[-1]
    a = v1.reshape(v1.shape[:-1] + (n, 4))
    b = v2[..., lane, :].reshape(v2.shape[:-2] + (n, 4))
    return acc + _group_dot(a, b)


def dup_word_s8(src, n: int) -> np.ndarray:
    """Replicate a 4-byte group into every 32-bit slot of an n-lane vector (LD1RW)."""
    src = np.asarray(src, I8)
    return np.broadcast_to(src[..., None, :], src.shape[:-1] + (n, 4)).reshape(src.shape[:-1] + (4 * n,))


# -- Matrix engines ----------------------------------------------------------

def vmadot(acc, a, b) -> np.ndarray:
    """SpacemiT IME vmadot: a 4x4x8 int8 GEMM accumulated into int32.

    *acc* is two 256-bit registers, shape (..., 2, 8): register r holds grid
    rows 2r (lanes 0-3) and 2r+1 (lanes 4-7).  *a* is 32 bytes, a 4x8 tile in
    row-major order; *b* is 32 bytes, an 8x4 tile in column-major order.
    """
    acc = np.asarray(acc, I32)
    a = np.asarray(a, I8).reshape(np.shape(a)[:-1] + (4, 8)).astype(I32)
    bt = np.asarray(b, I8).reshape(np.shape(b)[:-1] + (4, 8)).astype(I32)  # bt[j, t] = B(t, j)
    grid = acc.reshape(acc.shape[:-2] + (4, 4))
    out = grid + np.einsum("...it,...jt->...ij", a, bt)
    return out.reshape(acc.shape)


def tile_dpbssd(c, a, b) -> np.ndarray:
    """AMX _tile_dpbssd for 16x16 int32 += (16x64 int8) @ (64x16 int8).

    *c* is the accumulator tile viewed as (..., 16, 16) int32, *a* a (..., 16, 64)
    row-major int8 tile.  *b* holds B(t, j) at byte row t // 4, byte column
    4*j + t % 4.
    """
    c = np.asarray(c, I32)
    a = np.asarray(a, I8).astype(I32)
    b = np.asarray(b, I8).astype(I32)
    # b[..., r, 4j + s] -> (..., r, j, s) ; logical k = 4r + s
    b4 = b.reshape(b.shape[:-1] + (16, 4))
    a4 = a.reshape(a.shape[:-1] + (16, 4))  # (..., i, r, s)
    return c + np.einsum("...irs,...rjs->...ij", a4, b4)


def smopa_s8(za, zn, zm) -> np.ndarray:
    """SME smopa (int8 -> int32): sum of four outer products added into the ZA tile.

    ``za[i, j] += sum_t zn[4i+t] * zm[4j+t]`` with i, j < svl/32.
    """
    za = np.asarray(za, I32)
    zn = np.asarray(zn, I8)
    zm = np.asarray(zm, I8)
    svl = _check_vecn(zn, zm)
    n = svl // 32
    if za.shape[-2:] != (n, n):
        raise WidthError(f"ZA tile {za.shape[-2:]} does not match SVL {svl}")
    a = zn.reshape(zn.shape[:-1] + (n, 4)).astype(I32)
    b = zm.reshape(zm.shape[:-1] + (n, 4)).astype(I32)
    return za + np.einsum("...it,...jt->...ij", a, b)


def tile_i32_view(tile: np.ndarray) -> np.ndarray:
    """View a 1024-byte tile register (16 x 64 bytes) as 16 x 16 int32."""
    return reinterpret(tile, I32)
