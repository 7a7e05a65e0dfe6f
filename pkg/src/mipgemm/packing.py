"""Packing of A and B blocks into contiguous micro-panel buffers.

All layouts come from one address function parameterized by the micro-tile
side (mr or nr), the k-group size kr and, for B, an interleave factor t:

* A element (i, k) of an mc x kc block lands at
  ``(i//mr)*mr*kc_pad + (k//kr)*mr*kr + (i%mr)*kr + k%kr``.
* B element (k, j) of a kc x nc block lands at
  ``(j//nr)*nr*kc_pad + (k//kr)*nr*kr + ((k%kr)//t)*nr*t + (j%nr)*t + k%t``.

kr=1 (and t=1) gives the classic GotoBLAS column-of-mr / row-of-nr panels,
t=kr keeps each column's k-group contiguous, and t=4 is the VNNI-style
interleave.  Partial panels and partial k-groups are zero-filled.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .matrix_core import ContractError


@dataclass(frozen=True)
class PackLayoutA:
    mr: int
    kr: int = 1

    def __post_init__(self):
        if self.mr < 1 or self.kr < 1:
            raise ValueError(f"invalid A layout {self}")


@dataclass(frozen=True)
class PackLayoutB:
    nr: int
    kr: int = 1
    t: int = 1

    def __post_init__(self):
        if self.nr < 1 or self.kr < 1 or self.t < 1 or self.kr % self.t:
            raise ValueError(f"invalid B layout {self}")


def round_up(x: int, m: int) -> int:
    return -(-x // m) * m


def offset_a(layout: PackLayoutA, kc: int, i, k):
    mr, kr = layout.mr, layout.kr
    kc_pad = round_up(kc, kr)
    return (i // mr) * (mr * kc_pad) + (k // kr) * (mr * kr) + (i % mr) * kr + k % kr


def offset_b(layout: PackLayoutB, kc: int, k, j):
    nr, kr, t = layout.nr, layout.kr, layout.t
    kc_pad = round_up(kc, kr)
    return (j // nr) * (nr * kc_pad) + (k // kr) * (nr * kr) + ((k % kr) // t) * (nr * t) + (j % nr) * t + k % t


@dataclass
class PackedBlock:
    """A packed block of A (rows x kc) or B (kc x cols) plus its layout.

    ``extent`` is the logical row count of an A block or column count of a B
    block; ``buffer`` is flat and holds ``panels`` micro-panels of
    ``panel_len`` elements each.
    """

    layout: PackLayoutA | PackLayoutB
    extent: int
    kc: int
    buffer: np.ndarray

    @property
    def side(self) -> int:
        return self.layout.mr if isinstance(self.layout, PackLayoutA) else self.layout.nr

    @property
    def kc_pad(self) -> int:
        return round_up(self.kc, self.layout.kr)

    @property
    def panels(self) -> int:
        return -(-self.extent // self.side)

    @property
    def extent_pad(self) -> int:
        return self.panels * self.side

    @property
    def panel_len(self) -> int:
        return self.side * self.kc_pad

    def panel_view(self) -> np.ndarray:
        """Buffer reshaped to (panels, panel_len)."""
        return self.buffer.reshape(self.panels, self.panel_len)


@lru_cache(maxsize=256)
def _index_a(layout: PackLayoutA, mc: int, kc: int) -> np.ndarray:
    i, k = np.meshgrid(np.arange(mc), np.arange(kc), indexing="ij")
    idx = offset_a(layout, kc, i, k)
    idx.setflags(write=False)
    return idx


@lru_cache(maxsize=256)
def _index_b(layout: PackLayoutB, kc: int, nc: int) -> np.ndarray:
    k, j = np.meshgrid(np.arange(kc), np.arange(nc), indexing="ij")
    idx = offset_b(layout, kc, k, j)
    idx.setflags(write=False)
    return idx


def _block(src: np.ndarray, r0: int, c0: int, rows: int, cols: int, transpose: bool) -> np.ndarray:
    # Logical block of op(src), op = transpose or identity.
    logical_shape = src.shape[::-1] if transpose else src.shape
    if r0 < 0 or c0 < 0 or r0 + rows > logical_shape[0] or c0 + cols > logical_shape[1]:
        raise ContractError(
            f"block ({r0}:{r0 + rows}, {c0}:{c0 + cols}) outside operand of shape {logical_shape}"
        )
    if transpose:
        return src[c0 : c0 + cols, r0 : r0 + rows].T
    return src[r0 : r0 + rows, c0 : c0 + cols]


def pack_a(src, block, layout: PackLayoutA, transpose: bool = False, out: PackedBlock | None = None,
           panels: range | None = None) -> PackedBlock:
    """Pack ``op(src)[ic:ic+mc, pc:pc+kc]``; *block* is ``(ic, pc, mc, kc)``.

    With *out* and *panels* given, only those micro-panels of *out* are
    written, so several workers can fill one buffer.
    """
    ic, pc, mc, kc = block
    data = _block(np.asarray(src), ic, pc, mc, kc, transpose)
    if out is None:
        out = PackedBlock(layout, mc, kc, np.zeros(round_up(mc, layout.mr) * round_up(kc, layout.kr), data.dtype))
    idx = _index_a(layout, mc, kc)
    if panels is None:
        out.buffer[idx] = data
    else:
        rows = slice(panels.start * layout.mr, min(panels.stop * layout.mr, mc))
        out.buffer[idx[rows]] = data[rows]
    return out


def pack_b(src, block, layout: PackLayoutB, transpose: bool = False) -> PackedBlock:
    """Pack ``op(src)[pc:pc+kc, jc:jc+nc]``; *block* is ``(pc, jc, kc, nc)``."""
    pc, jc, kc, nc = block
    data = _block(np.asarray(src), pc, jc, kc, nc, transpose)
    out = PackedBlock(layout, nc, kc, np.zeros(round_up(nc, layout.nr) * round_up(kc, layout.kr), data.dtype))
    out.buffer[_index_b(layout, kc, nc)] = data
    return out


def unpack_a(p: PackedBlock) -> np.ndarray:
    """Recover the logical extent x kc block; padding is dropped."""
    return p.buffer[_index_a(p.layout, p.extent, p.kc)].copy()


def unpack_b(p: PackedBlock) -> np.ndarray:
    """Recover the logical kc x extent block; padding is dropped."""
    return p.buffer[_index_b(p.layout, p.kc, p.extent)].copy()
