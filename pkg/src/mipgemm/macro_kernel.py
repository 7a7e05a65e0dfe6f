"""Blocked GEMM macro-kernel: loops jc -> pc -> ic -> jr -> ir around a micro-kernel.

B is packed once per (jc, pc), A once per (pc, ic).  Loop L4 (jr) is split
statically across workers; each worker packs its share of the A micro-panels
into the shared buffer, waits for the others, then updates its own column of
micro-tiles.  The ir loop and a worker's jr range are handed to the
micro-kernel as one batch of tiles, which is semantically identical to
calling it tile by tile.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .matrix_core import ContractError, ElementType, GemmProblem, check_k_bound
from .micro_kernels import MicroKernel, MicroKernelSpec
from .packing import PackedBlock, pack_a, pack_b, round_up


@dataclass(frozen=True)
class BlockingParams:
    mc: int
    nc: int
    kc: int

    def fitted(self, spec: MicroKernelSpec) -> "BlockingParams":
        """Round each block size up to a whole number of micro-tiles / k-groups."""
        if min(self.mc, self.nc, self.kc) < 1:
            raise ValueError(f"block sizes must be positive: {self}")
        return BlockingParams(round_up(self.mc, spec.mr), round_up(self.nc, spec.nr), round_up(self.kc, spec.kr))

    @classmethod
    def minimal(cls, spec: MicroKernelSpec) -> "BlockingParams":
        return cls(spec.mr, spec.nr, spec.kr)


@dataclass(frozen=True)
class CacheModel:
    l1_bytes: int = 32 * 1024
    l2_bytes: int = 512 * 1024
    l3_bytes: int = 4 * 1024 * 1024
    line_bytes: int = 64

    def __post_init__(self):
        if self.l1_bytes <= 0 or self.l2_bytes < self.l1_bytes:
            raise ValueError(f"inconsistent cache sizes: {self}")
        if self.l3_bytes and self.l3_bytes < self.l2_bytes:
            raise ValueError(f"inconsistent cache sizes: {self}")

    @classmethod
    def from_env(cls, environ=None) -> "CacheModel":
        """Defaults overridden by CACHE_L1 / CACHE_L2 / CACHE_L3 (bytes)."""
        env = os.environ if environ is None else environ
        base = cls()
        return cls(
            int(env.get("CACHE_L1", base.l1_bytes)),
            int(env.get("CACHE_L2", base.l2_bytes)),
            int(env.get("CACHE_L3", base.l3_bytes)),
            base.line_bytes,
        )


class CacheTooSmallError(ValueError):
    pass


def default_blocking(cache: CacheModel, spec: MicroKernelSpec, occupancy: float = 0.5) -> BlockingParams:
    """Analytical block sizes filling *occupancy* of each cache level.

    kc: Ar + Br micro-panels in L1; mc: the A_c block in L2; nc: the B_c block
    in L3 (8 micro-panels when there is no L3).
    """
    nbytes = spec.in_elem.nbytes
    kc = int(cache.l1_bytes * occupancy) // ((spec.mr + spec.nr) * nbytes)
    kc -= kc % spec.kr
    if kc < spec.kr:
        raise CacheTooSmallError(
            f"L1 of {cache.l1_bytes} bytes cannot hold one {spec.mr}x{spec.nr}x{spec.kr} k-group"
        )
    mc = int(cache.l2_bytes * occupancy) // (kc * nbytes)
    mc = max(spec.mr, mc - mc % spec.mr)
    if cache.l3_bytes:
        nc = int(cache.l3_bytes * occupancy) // (kc * nbytes)
        nc = max(spec.nr, nc - nc % spec.nr)
    else:
        nc = 8 * spec.nr
    return BlockingParams(mc, nc, kc)


@dataclass
class GemmStats:
    """Instrumentation filled in by :func:`gemm` when passed in."""

    trace: list = field(default_factory=list)  # (jc, pc, ic, jr, ir) per micro-kernel call
    record_trace: bool = True
    pack_a_calls: int = 0
    pack_b_calls: int = 0
    a_panel_reads: int = 0
    kernel_tiles: int = 0


def _partition(n: int, parts: int) -> list[range]:
    """Split range(n) into *parts* contiguous, nearly equal chunks (some may be empty)."""
    q, r = divmod(n, parts)
    out, start = [], 0
    for w in range(parts):
        stop = start + q + (w < r)
        out.append(range(start, stop))
        start = stop
    return out


def gemm(C: np.ndarray, A: np.ndarray, B: np.ndarray, kernel: MicroKernel,
         params: BlockingParams | None = None, workers: int = 1, accumulate: bool = False,
         transpose_a: bool = False, transpose_b: bool = False, c_col_major: bool = False,
         cache: CacheModel | None = None, stats: GemmStats | None = None) -> None:
    """C (+)= op(A) @ op(B) using *kernel* as the micro-kernel.

    With ``c_col_major`` the buffer *C* holds the result transposed (n x m,
    i.e. column-major C); this is served by swapping the roles of A and B.
    """
    if c_col_major:
        gemm(C, B, A, kernel, params, workers, accumulate, not transpose_b, not transpose_a,
             False, cache, stats)
        return
    spec = kernel.spec
    prob = GemmProblem.from_operands(C, A, B, transpose_a, transpose_b, accumulate)
    want_c = spec.acc_elem
    for name, x, want in (("A", A, spec.in_elem), ("B", B, spec.in_elem), ("C", C, want_c)):
        if ElementType.of(x) is not want:
            raise ContractError(f"{spec.name} needs {name} of type {want.name}, got {x.dtype}")
    if np.shares_memory(C, A) or np.shares_memory(C, B):
        raise ContractError("C must not alias A or B")
    if spec.in_elem is ElementType.I8:
        check_k_bound(prob.k)
    if workers < 1:
        raise ValueError("workers must be >= 1")
    if params is None:
        params = default_blocking(cache or CacheModel.from_env(), spec)
    bp = params.fitted(spec)

    m, n, k = prob.m, prob.n, prob.k
    if not accumulate:
        C[...] = 0
    if m == 0 or n == 0 or k == 0:
        return

    pool = ThreadPoolExecutor(workers) if workers > 1 else None
    try:
        for jc in range(0, n, bp.nc):  # L1
            nc = min(bp.nc, n - jc)
            for pc in range(0, k, bp.kc):  # L2
                kc = min(bp.kc, k - pc)
                Bc = pack_b(B, (pc, jc, kc, nc), spec.layout_b, transpose_b)
                if stats is not None:
                    stats.pack_b_calls += 1
                for ic in range(0, m, bp.mc):  # L3
                    mc = min(bp.mc, m - ic)
                    _block_update(C, A, Bc, kernel, ic, mc, jc, nc, pc, kc, transpose_a, workers, pool, stats)
    finally:
        if pool:
            pool.shutdown()


def _block_update(C, A, Bc: PackedBlock, kernel, ic, mc, jc, nc, pc, kc, transpose_a, workers, pool, stats):
    spec = kernel.spec
    mr, nr = spec.mr, spec.nr
    Ac = PackedBlock(spec.layout_a, mc, kc, np.zeros(round_up(mc, mr) * round_up(kc, spec.kr), A.dtype))
    n_a, n_b = Ac.panels, Bc.panels
    a_parts = _partition(n_a, workers)
    b_parts = _partition(n_b, workers)

    def pack_part(panels):
        if len(panels):
            pack_a(A, (ic, pc, mc, kc), spec.layout_a, transpose_a, out=Ac, panels=panels)

    def compute_part(jrs):
        if not len(jrs):
            return
        j0, j1 = jrs.start * nr, min(jrs.stop * nr, nc)
        width = len(jrs) * nr
        cblk = C[ic : ic + mc, jc + j0 : jc + j1]
        tiles = np.zeros((n_a * mr, width), C.dtype)
        tiles[:mc, : j1 - j0] = cblk  # load live part of each Cr
        tiles = tiles.reshape(n_a, mr, len(jrs), nr).transpose(0, 2, 1, 3)
        a_pan = Ac.panel_view()[:, None, :]
        b_pan = Bc.panel_view()[jrs.start : jrs.stop][None, :, :]
        out = kernel(tiles, a_pan, b_pan, kc)
        out = np.asarray(out).transpose(0, 2, 1, 3).reshape(n_a * mr, width)
        cblk[...] = out[:mc, : j1 - j0]  # masked write-back

    if pool is None:
        pack_part(range(n_a))
        compute_part(range(n_b))
    else:
        list(pool.map(pack_part, a_parts))  # barrier: A_c complete before compute
        list(pool.map(compute_part, b_parts))

    if stats is not None:
        stats.pack_a_calls += 1
        stats.a_panel_reads += n_a * n_b
        stats.kernel_tiles += n_a * n_b
        if stats.record_trace:
            stats.trace.extend(
                (jc, pc, ic, jr * nr, ir * mr) for jr in range(n_b) for ir in range(n_a)
            )
