"""Batched differential harness for the instruction models.

Each oracle evaluates the per-lane formula literally with explicit index
arithmetic in int64 / float64 and wraps only at the end, so it shares no code
path with the models under test.  ``run_differential(name, n, rng)`` draws n
random cases and returns the number of mismatches.
"""
import numpy as np

from mipgemm import isa_semantics as isa


def wrap(x, bits):
    half = 1 << (bits - 1)
    return ((x.astype(np.int64) + half) % (1 << bits)) - half


def i8(rng, *shape):
    return rng.integers(-128, 128, shape, dtype=np.int8)


def i32(rng, *shape):
    return rng.integers(-(2**31), 2**31, shape, dtype=np.int64).astype(np.int32)


def f32(rng, *shape):
    mant = rng.uniform(-2, 2, shape)
    return (mant * 2.0 ** rng.integers(-20, 20, shape)).astype(np.float32)


# ---- oracles ---------------------------------------------------------------

def o_fma_lane(acc, v1, v2, lane):
    n = acc.shape[0]
    out = np.empty_like(acc)
    for i in range(4):
        prod = (v1[:, i].astype(np.float64) * v2[np.arange(n), lane].astype(np.float64)).astype(np.float32)
        out[:, i] = (acc[:, i].astype(np.float64) + prod.astype(np.float64)).astype(np.float32)
    return out


def o_mull(v0, v1):
    return np.stack([v0[:, i].astype(np.int64) * v1[:, i] for i in range(8)], axis=1)


def o_mlal(acc, v1, v2):
    return wrap(np.stack([acc[:, i].astype(np.int64) + v1[:, i].astype(np.int64) * v2[:, i] for i in range(8)], 1), 16)


def o_padal(acc, v1):
    v = v1.astype(np.int64)
    return wrap(np.stack([acc[:, i].astype(np.int64) + v[:, 2 * i] + v[:, 2 * i + 1] for i in range(4)], 1), 32)


def o_padd(v0, v1):
    a, b = v0.astype(np.int64), v1.astype(np.int64)
    return wrap(np.stack([a[:, 0] + a[:, 1], a[:, 2] + a[:, 3], b[:, 0] + b[:, 1], b[:, 2] + b[:, 3]], 1), 32)


def o_dot_lane(acc, v1, v2, lane):
    rows = np.arange(acc.shape[0])
    out = acc.astype(np.int64)
    for i in range(4):
        for j in range(4):
            out[:, i] += v1[:, i * 4 + j].astype(np.int64) * v2[rows, lane * 4 + j]
    return wrap(out, 32)


def o_svdot_lane(acc, v1, v2, lane):
    # v2: (N, 4, 4n)
    rows = np.arange(acc.shape[0])
    n = acc.shape[1]
    out = acc.astype(np.int64)
    for i in range(n):
        for j in range(4):
            out[:, i] += v1[:, i * 4 + j].astype(np.int64) * v2[rows, lane, i * 4 + j]
    return wrap(out, 32)


def o_vmadot(acc, a, b):
    # acc (N,2,8): grid row r lives in register r//2, lanes 4*(r%2)..+3
    grid = np.empty((acc.shape[0], 4, 4), np.int64)
    for r in range(4):
        grid[:, r] = acc[:, r // 2, 4 * (r % 2) : 4 * (r % 2) + 4]
    A = np.empty((a.shape[0], 4, 8), np.int64)
    B = np.empty((b.shape[0], 8, 4), np.int64)
    for i in range(4):
        for t in range(8):
            A[:, i, t] = a[:, i * 8 + t]  # row-major 4x8
    for t in range(8):
        for j in range(4):
            B[:, t, j] = b[:, j * 8 + t]  # column-major 8x4
    grid = wrap(grid + np.matmul(A, B), 32)
    out = np.empty_like(acc)
    for r in range(4):
        out[:, r // 2, 4 * (r % 2) : 4 * (r % 2) + 4] = grid[:, r]
    return out


_T = np.arange(64)
_J = np.arange(16)
_ROW = (_T // 4)[:, None]
_COL = 4 * _J[None, :] + (_T % 4)[:, None]


def o_dpbssd(c, a, b):
    B = b[:, _ROW, _COL].astype(np.int64)  # logical (t, j)
    return wrap(c.astype(np.int64) + np.matmul(a.astype(np.int64), B), 32)


def o_smopa(za, zn, zm):
    n = za.shape[-1]
    out = za.astype(np.int64)
    for i in range(n):
        for j in range(n):
            for t in range(4):
                out[:, i, j] += zn[:, 4 * i + t].astype(np.int64) * zm[:, 4 * j + t]
    return wrap(out, 32)


# ---- per-op differential drivers -------------------------------------------

def _lanes(rng, n):
    return rng.integers(0, 4, n)


def _per_lane(fn, lane, *args):
    # models take a scalar lane; group the batch by lane value
    out = None
    for l in range(4):
        sel = lane == l
        if not sel.any():
            continue
        r = fn(*(x[sel] for x in args), l)
        if out is None:
            out = np.empty((len(lane),) + r.shape[1:], r.dtype)
        out[sel] = r
    return out


def _fma(rng, n):
    acc, v1, v2, lane = f32(rng, n, 4), f32(rng, n, 4), f32(rng, n, 4), _lanes(rng, n)
    got = _per_lane(isa.fma_lane_f32, lane, acc, v1, v2)
    return got.view(np.uint32), o_fma_lane(acc, v1, v2, lane).view(np.uint32)


def _mull(rng, n):
    v0, v1 = i8(rng, n, 8), i8(rng, n, 8)
    return isa.mull_s8(v0, v1), o_mull(v0, v1)


def _mlal(rng, n):
    acc = rng.integers(-(2**15), 2**15, (n, 8)).astype(np.int16)
    v1, v2 = i8(rng, n, 8), i8(rng, n, 8)
    return isa.mlal_s8(acc, v1, v2), o_mlal(acc, v1, v2)


def _padal(rng, n):
    acc = i32(rng, n, 4)
    v1 = rng.integers(-(2**15), 2**15, (n, 8)).astype(np.int16)
    return isa.padal_s16(acc, v1), o_padal(acc, v1)


def _padd(rng, n):
    v0, v1 = i32(rng, n, 4), i32(rng, n, 4)
    return isa.padd_s32(v0, v1), o_padd(v0, v1)


def _dot(rng, n):
    acc, v1, v2, lane = i32(rng, n, 4), i8(rng, n, 16), i8(rng, n, 16), _lanes(rng, n)
    return _per_lane(isa.dot_lane_s32, lane, acc, v1, v2), o_dot_lane(acc, v1, v2, lane)


def _svdot(rng, n):
    got, want = [], []
    for w in (128, 256, 512):
        m = n // 3
        lanes = w // 32
        acc, v1, v2, lane = i32(rng, m, lanes), i8(rng, m, 4 * lanes), i8(rng, m, 4, 4 * lanes), _lanes(rng, m)
        got.append(_per_lane(isa.svdot_lane_s32, lane, acc, v1, v2).ravel())
        want.append(o_svdot_lane(acc, v1, v2, lane).ravel())
    return np.concatenate(got), np.concatenate(want)


def _vmadot(rng, n):
    acc, a, b = i32(rng, n, 2, 8), i8(rng, n, 32), i8(rng, n, 32)
    return isa.vmadot(acc, a, b), o_vmadot(acc, a, b)


def _dpbssd(rng, n):
    got, want = [], []
    for start in range(0, n, 5000):
        m = min(5000, n - start)
        c, a, b = i32(rng, m, 16, 16), i8(rng, m, 16, 64), i8(rng, m, 16, 64)
        got.append(isa.tile_dpbssd(c, a, b))
        want.append(o_dpbssd(c, a, b))
    return np.concatenate(got), np.concatenate(want)


def _smopa(rng, n):
    got, want = [], []
    for svl in (128, 512):
        m = n // 2
        side = svl // 32
        za, zn, zm = i32(rng, m, side, side), i8(rng, m, 4 * side), i8(rng, m, 4 * side)
        got.append(isa.smopa_s8(za, zn, zm).ravel())
        want.append(o_smopa(za, zn, zm).ravel())
    return np.concatenate(got), np.concatenate(want)


CASES = {
    "fma_lane_f32": _fma,
    "mull_s8": _mull,
    "mlal_s8": _mlal,
    "padal_s16": _padal,
    "padd_s32": _padd,
    "dot_lane_s32": _dot,
    "svdot_lane_s32": _svdot,
    "vmadot": _vmadot,
    "tile_dpbssd": _dpbssd,
    "smopa_s8": _smopa,
}


def run_differential(name, n, rng):
    """Mismatching output elements over n random cases of op *name*."""
    got, want = CASES[name](rng, n)
    got = np.asarray(got).astype(np.int64)
    want = np.asarray(want).astype(np.int64)
    assert got.shape == want.shape, (name, got.shape, want.shape)
    return int((got != want).sum())
