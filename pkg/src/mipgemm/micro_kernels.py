"""Micro-kernels: Cr += Ar @ Br over packed micro-panels.

Every kernel is written against :mod:`mipgemm.isa_semantics` only and follows
the register structure of the corresponding hand-written kernel.  Kernels are
pure functions ``kernel(c_tile, a_panel, b_panel, kc) -> c_tile`` where
``c_tile`` is an (..., mr, nr) accumulator and the panels are flat
(..., mr*kc_pad) / (..., nr*kc_pad) buffers.  Leading axes broadcast, so the
macro-kernel can hand over a whole grid of micro-tiles at once.  Passing a
:class:`MicroTileRef` instead of an array loads the tile from C and writes
back only its live region.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable

import numpy as np

from . import isa_semantics as isa
from .matrix_core import ElementType
from .packing import PackLayoutA, PackLayoutB, offset_a, offset_b, round_up


@dataclass(frozen=True)
class MicroKernelSpec:
    name: str
    mr: int
    nr: int
    kr: int
    t: int
    in_elem: ElementType
    acc_elem: ElementType
    register_budget: int
    register_file: int = 32

    @property
    def layout_a(self) -> PackLayoutA:
        return PackLayoutA(self.mr, self.kr)

    @property
    def layout_b(self) -> PackLayoutB:
        return PackLayoutB(self.nr, self.kr, self.t)

    def within_register_file(self) -> bool:
        return self.register_budget <= self.register_file


@dataclass
class MicroTileRef:
    """Window of C at (row, col) holding ``live_rows x live_cols`` of an mr x nr tile."""

    c: np.ndarray
    row: int
    col: int
    live_rows: int
    live_cols: int

    def load(self, mr: int, nr: int) -> np.ndarray:
        tile = np.zeros((mr, nr), self.c.dtype)
        tile[: self.live_rows, : self.live_cols] = self.c[
            self.row : self.row + self.live_rows, self.col : self.col + self.live_cols
        ]
        return tile

    def store(self, tile: np.ndarray) -> None:
        self.c[self.row : self.row + self.live_rows, self.col : self.col + self.live_cols] = tile[
            : self.live_rows, : self.live_cols
        ]


class _Cursor:
    """Sequential reader over a packed panel; optionally logs (tag, offset, length)."""

    __slots__ = ("panel", "pos", "tag", "log")

    def __init__(self, panel, tag, log):
        self.panel = panel
        self.pos = 0
        self.tag = tag
        self.log = log

    def load(self, n: int) -> np.ndarray:
        v = self.panel[..., self.pos : self.pos + n]
        if self.log is not None:
            self.log.append((self.tag, self.pos, n))
        self.pos += n
        return v


@dataclass(frozen=True)
class MicroKernel:
    spec: MicroKernelSpec
    fn: Callable

    @property
    def name(self) -> str:
        return self.spec.name

    def __call__(self, c_tile, a_panel, b_panel, kc: int, log: list | None = None):
        if isinstance(c_tile, MicroTileRef):
            ref = c_tile
            out = self.fn(ref.load(self.spec.mr, self.spec.nr), a_panel, b_panel, kc, log)
            ref.store(out)
            return out
        return self.fn(np.asarray(c_tile), a_panel, b_panel, kc, log)


def _groups(kc: int, kr: int) -> int:
    return round_up(kc, kr) // kr


# -- FP32, AXPY-oriented 4x8 (NEON, VL=128) ---------------------------------

def _f32_axpy_4x8(c, a_panel, b_panel, kc, log=None):
    ra, rb = _Cursor(a_panel, "A", log), _Cursor(b_panel, "B", log)
    # C[r][h]: row r, columns 4h..4h+3
    C = [[c[..., r, 4 * h : 4 * h + 4].astype(isa.F32) for h in range(2)] for r in range(4)]
    for _ in range(kc):  # loop L6
        A0 = ra.load(4)
        B0 = rb.load(4)
        B1 = rb.load(4)
        for r in range(4):
            C[r][0] = isa.fma_lane_f32(C[r][0], B0, A0, r)
            C[r][1] = isa.fma_lane_f32(C[r][1], B1, A0, r)
    return np.stack([np.concatenate(C[r], axis=-1) for r in range(4)], axis=-2)


# -- INT8, ARMv8.0 NEON 2x8 (vmull / vmlal / vpadal) ------------------------

def _i8_v80_2x8(c, a_panel, b_panel, kc, log=None, cadence="split"):
    ra, rb = _Cursor(a_panel, "A", log), _Cursor(b_panel, "B", log)
    batch = np.broadcast_shapes(c.shape[:-2], a_panel.shape[:-1], b_panel.shape[:-1])
    zero = np.zeros(batch + (4,), isa.I32)
    # Partial tiles: C[r][j] collects row r, column j spread over four lanes.
    C = [[zero for _ in range(8)] for _ in range(2)]
    for _ in range(_groups(kc, 16)):  # loop L6, stride kr=16
        A0, A1, A2, A3 = (ra.load(8) for _ in range(4))  # row 0 lo/hi, row 1 lo/hi
        for p in range(4):  # column pairs (2p, 2p+1)
            B0, B1, B2, B3 = (rb.load(8) for _ in range(4))  # col 2p lo/hi, col 2p+1 lo/hi
            if cadence == "mlal":
                T00 = isa.mlal_s8(isa.mull_s8(A0, B0), A1, B1)
                T01 = isa.mlal_s8(isa.mull_s8(A0, B2), A1, B3)
                T10 = isa.mlal_s8(isa.mull_s8(A2, B0), A3, B1)
                T11 = isa.mlal_s8(isa.mull_s8(A2, B2), A3, B3)
                C[0][2 * p] = isa.padal_s16(C[0][2 * p], T00)
                C[0][2 * p + 1] = isa.padal_s16(C[0][2 * p + 1], T01)
                C[1][2 * p] = isa.padal_s16(C[1][2 * p], T10)
                C[1][2 * p + 1] = isa.padal_s16(C[1][2 * p + 1], T11)
            else:
                # One product per i16 lane before each widening add.
                for r, (lo, hi) in enumerate(((A0, A1), (A2, A3))):
                    for q, (blo, bhi) in enumerate(((B0, B1), (B2, B3))):
                        j = 2 * p + q
                        C[r][j] = isa.padal_s16(C[r][j], isa.mull_s8(lo, blo))
                        C[r][j] = isa.padal_s16(C[r][j], isa.mull_s8(hi, bhi))
    rows = []
    for r in range(2):
        lo = isa.padd_s32(isa.padd_s32(C[r][0], C[r][1]), isa.padd_s32(C[r][2], C[r][3]))
        hi = isa.padd_s32(isa.padd_s32(C[r][4], C[r][5]), isa.padd_s32(C[r][6], C[r][7]))
        rows.append(np.concatenate([lo, hi], axis=-1))
    return c.astype(isa.I32) + np.stack(rows, axis=-2)


# -- INT8, ARMv8.2 NEON 4x16 (vdotq_laneq) ----------------------------------

def _i8_v82_4x16(c, a_panel, b_panel, kc, log=None):
    ra, rb = _Cursor(a_panel, "A", log), _Cursor(b_panel, "B", log)
    C = [[c[..., r, 4 * q : 4 * q + 4].astype(isa.I32) for q in range(4)] for r in range(4)]
    for _ in range(_groups(kc, 16)):  # loop L6, stride kr=16
        A = [ra.load(16) for _ in range(4)]
        for lane in range(4):
            B = [rb.load(16) for _ in range(4)]
            for r in range(4):
                for q in range(4):
                    C[r][q] = isa.dot_lane_s32(C[r][q], B[q], A[r], lane)
    return np.stack([np.concatenate(C[r], axis=-1) for r in range(4)], axis=-2)


# -- INT8, SVE2 4 x (2*VL/32) (svdot_lane) ----------------------------------

SVE_WIDTHS = (128, 256, 512)


def _i8_sve_dot(c, a_panel, b_panel, kc, log=None, vl_bits=128):
    n = vl_bits // 32  # i32 lanes per vector
    kr = 4 * n
    ra, rb = _Cursor(a_panel, "A", log), _Cursor(b_panel, "B", log)
    C = [[c[..., r, h * n : (h + 1) * n].astype(isa.I32) for h in range(2)] for r in range(4)]
    for _ in range(_groups(kc, kr)):  # loop L6, stride kr=VL/8
        A = [ra.load(kr) for _ in range(4)]
        for g in range(n // 4):  # each 4-tuple covers 16 k values
            tuples = [
                np.stack([isa.dup_word_s8(A[r][..., 16 * g + 4 * l : 16 * g + 4 * l + 4], n) for l in range(4)], axis=-2)
                for r in range(4)
            ]
            for lane in range(4):
                B = [rb.load(4 * n) for _ in range(2)]
                for r in range(4):
                    for h in range(2):
                        C[r][h] = isa.svdot_lane_s32(C[r][h], B[h], tuples[r], lane)
    return np.stack([np.concatenate(C[r], axis=-1) for r in range(4)], axis=-2)


# -- INT8, SpacemiT IME 4x8 (vmadot) ----------------------------------------

def _i8_ime_4x8(c, a_panel, b_panel, kc, log=None):
    ra, rb = _Cursor(a_panel, "A", log), _Cursor(b_panel, "B", log)
    c = c.astype(isa.I32)

    def pair(cols):
        # Two 256-bit registers: rows (0, 1) and (2, 3), lower row in the low half.
        return np.stack([np.concatenate([c[..., 2 * r, cols], c[..., 2 * r + 1, cols]], axis=-1) for r in range(2)], axis=-2)

    left, right = pair(slice(0, 4)), pair(slice(4, 8))  # C010/C230, C011/C231
    for _ in range(_groups(kc, 8)):  # loop L6, stride kr=8
        A0123 = ra.load(32)
        B0123 = rb.load(32)
        B4567 = rb.load(32)
        left = isa.vmadot(left, A0123, B0123)
        right = isa.vmadot(right, A0123, B4567)
    grid_l = left.reshape(left.shape[:-2] + (4, 4))
    grid_r = right.reshape(right.shape[:-2] + (4, 4))
    return np.concatenate([grid_l, grid_r], axis=-1)


# -- INT8, Intel AMX 16x16 (_tile_dpbssd) -----------------------------------

def _i8_amx_16x16(c, a_panel, b_panel, kc, log=None):
    ra, rb = _Cursor(a_panel, "A", log), _Cursor(b_panel, "B", log)
    tile_c = c.astype(isa.I32)
    for _ in range(_groups(kc, 64)):  # loop L6, stride kr=64
        a = ra.load(1024)
        b = rb.load(1024)
        tile_c = isa.tile_dpbssd(tile_c, a.reshape(a.shape[:-1] + (16, 64)), b.reshape(b.shape[:-1] + (16, 64)))
    return tile_c


# -- INT8, ARM SME (smopa into ZA) ------------------------------------------

SME_WIDTHS = isa.VECN_WIDTHS


def _i8_sme_mopa(c, a_panel, b_panel, kc, log=None, svl_bits=512):
    n = svl_bits // 32
    ra, rb = _Cursor(a_panel, "A", log), _Cursor(b_panel, "B", log)
    za = c.astype(isa.I32)  # micro-tile of C moved into the ZA tile
    for _ in range(_groups(kc, 4)):  # loop L6, stride kr=4
        zn = ra.load(4 * n)
        zm = rb.load(4 * n)
        za = isa.smopa_s8(za, zn, zm)
    return za


# -- Generic scalar reference -----------------------------------------------

def ukr_scalar_ref(c_tile, a_panel, b_panel, kc: int, spec: MicroKernelSpec):
    """Reference micro-kernel for any spec, reading panels through the layout formulas."""
    ref = c_tile if isinstance(c_tile, MicroTileRef) else None
    c = ref.load(spec.mr, spec.nr) if ref else np.asarray(c_tile)
    acc_dtype = spec.acc_elem.dtype
    a_panel = np.asarray(a_panel)
    b_panel = np.asarray(b_panel)
    ii = np.arange(spec.mr)
    jj = np.arange(spec.nr)
    acc = c.astype(acc_dtype)
    for k in range(kc):
        a = a_panel[..., offset_a(spec.layout_a, kc, ii, k)].astype(acc_dtype)
        b = b_panel[..., offset_b(spec.layout_b, kc, k, jj)].astype(acc_dtype)
        acc = acc + a[..., :, None] * b[..., None, :]
    if ref:
        ref.store(acc)
    return acc


# -- Registry ----------------------------------------------------------------

F32, I8, I32 = ElementType.F32, ElementType.I8, ElementType.I32


def sve_spec(vl_bits: int) -> MicroKernelSpec:
    if vl_bits not in SVE_WIDTHS:
        raise ValueError(f"unsupported SVE vector length {vl_bits}")
    n = vl_bits // 32
    # 8 accumulators + 4x4 replicated A vectors + 2 B vectors
    return MicroKernelSpec(f"i8_sve_dot_vl{vl_bits}", 4, 2 * n, 4 * n, 4, I8, I32, register_budget=26)


def sme_spec(svl_bits: int = 512) -> MicroKernelSpec:
    if svl_bits not in SME_WIDTHS:
        raise ValueError(f"unsupported SVL {svl_bits}")
    n = svl_bits // 32
    # zn, zm vectors; the accumulator lives in the separate ZA array
    return MicroKernelSpec(f"i8_sme_mopa_svl{svl_bits}", n, n, 4, 4, I8, I32, register_budget=2)


SPEC_F32_AXPY_4X8 = MicroKernelSpec("f32_axpy_4x8", 4, 8, 1, 1, F32, F32, register_budget=11)
SPEC_I8_V80_2X8 = MicroKernelSpec("i8_v80_2x8", 2, 8, 16, 16, I8, I32, register_budget=28)
SPEC_I8_V82_4X16 = MicroKernelSpec("i8_v82_4x16", 4, 16, 16, 4, I8, I32, register_budget=24)
SPEC_I8_IME_4X8 = MicroKernelSpec("i8_ime_4x8", 4, 8, 8, 8, I8, I32, register_budget=8)
SPEC_I8_AMX_16X16 = MicroKernelSpec("i8_amx_16x16", 16, 16, 64, 4, I8, I32, register_budget=3, register_file=8)


def _kernel(spec, fn):
    return MicroKernel(spec, fn)


ukr_f32_axpy_4x8 = _kernel(SPEC_F32_AXPY_4X8, _f32_axpy_4x8)
ukr_i8_v80_2x8 = _kernel(SPEC_I8_V80_2X8, _i8_v80_2x8)
ukr_i8_v80_2x8_mlal = _kernel(SPEC_I8_V80_2X8, functools.partial(_i8_v80_2x8, cadence="mlal"))
ukr_i8_v82_4x16 = _kernel(SPEC_I8_V82_4X16, _i8_v82_4x16)
ukr_i8_ime_4x8 = _kernel(SPEC_I8_IME_4X8, _i8_ime_4x8)
ukr_i8_amx_16x16 = _kernel(SPEC_I8_AMX_16X16, _i8_amx_16x16)


def ukr_i8_sve_dot(vl_bits: int = 128) -> MicroKernel:
    return MicroKernel(sve_spec(vl_bits), functools.partial(_i8_sve_dot, vl_bits=vl_bits))


def ukr_i8_sme_mopa(svl_bits: int = 512) -> MicroKernel:
    return MicroKernel(sme_spec(svl_bits), functools.partial(_i8_sme_mopa, svl_bits=svl_bits))


def scalar_kernel(spec: MicroKernelSpec) -> MicroKernel:
    """Wrap :func:`ukr_scalar_ref` as a kernel for *spec*."""
    return MicroKernel(spec, lambda c, a, b, kc, log=None: ukr_scalar_ref(c, a, b, kc, spec))


KERNELS: dict[str, MicroKernel] = {
    k.name: k
    for k in (
        ukr_f32_axpy_4x8,
        ukr_i8_v80_2x8,
        ukr_i8_v82_4x16,
        ukr_i8_sve_dot(128),
        ukr_i8_sve_dot(256),
        ukr_i8_sve_dot(512),
        ukr_i8_ime_4x8,
        ukr_i8_amx_16x16,
        ukr_i8_sme_mopa(512),
    )
}


def get_kernel(name: str) -> MicroKernel:
    try:
        return KERNELS[name]
    except KeyError:
        raise KeyError(f"unknown backend {name!r}; choose from {', '.join(KERNELS)}") from None


def integer_kernels() -> list[MicroKernel]:
    return [k for k in KERNELS.values() if k.spec.in_elem is ElementType.I8]


# -- Micro-tile sizing -------------------------------------------------------

def arithmetic_intensity(mr: int, nr: int, kc: int) -> Fraction:
    """Useful ops per element moved: 2*mr*nr*kc over (2*mr*nr + mr*kc + kc*nr)."""
    if min(mr, nr, kc) <= 0:
        raise ValueError("dimensions must be positive")
    return Fraction(2 * mr * nr * kc, 2 * mr * nr + mr * kc + kc * nr)


def registers_needed(mr: int, nr: int, vl_bits: int, elem: ElementType) -> int:
    """Vector registers for Cr plus one column of Ar and one row of Br."""
    acc_bits = 32
    return (
        math.ceil(mr * nr * acc_bits / vl_bits)
        + math.ceil(mr * elem.bits / vl_bits)
        + math.ceil(nr * elem.bits / vl_bits)
    )


def tile_objective(mr: int, nr: int, kc: int | None = None) -> Fraction:
    """Intensity at a given kc, or its kc -> infinity limit 2*mr*nr/(mr+nr)."""
    if kc is None:
        return Fraction(2 * mr * nr, mr + nr)
    return arithmetic_intensity(mr, nr, kc)


def _tile_key(mr, nr, kc):
    return (tile_objective(mr, nr, kc), mr <= nr, -mr)


def select_microtile_dims(register_count: int, vl_bits: int, elem: ElementType,
                          kc: int | None = None, max_dim: int = 16) -> tuple[int, int]:
    """Largest-intensity (mr, nr) whose micro-tile fits the register file.

    Ties go to mr <= nr, then to the smaller mr.  For a fixed mr the intensity
    grows with nr, so only the widest feasible nr per mr is a candidate.
    """
    if register_count < 3:
        raise ValueError(f"no micro-tile fits in {register_count} registers")
    best = None
    for mr in range(1, max_dim + 1):
        nr = max_dim
        while nr >= 1 and registers_needed(mr, nr, vl_bits, elem) > register_count:
            nr -= 1
        if nr == 0:
            break  # larger mr only needs more registers
        if best is None or _tile_key(mr, nr, kc) > _tile_key(*best, kc):
            best = (mr, nr)
    if best is None:
        raise ValueError(f"no micro-tile fits in {register_count} registers at VL={vl_bits}")
    return best
