import numpy as np
import pytest

from conftest import adversarial_i8
from mipgemm.macro_kernel import (
    BlockingParams,
    CacheModel,
    CacheTooSmallError,
    GemmStats,
    default_blocking,
    gemm,
)
from mipgemm.matrix_core import ContractError, ElementType, naive_gemm_f32, naive_gemm_i8_i32
from mipgemm.micro_kernels import (
    KERNELS,
    MicroKernelSpec,
    ukr_f32_axpy_4x8,
    ukr_i8_amx_16x16,
    ukr_i8_ime_4x8,
    ukr_i8_v82_4x16,
)

INT = [k for k in KERNELS.values() if k.spec.in_elem is ElementType.I8]
EPS32 = float(np.finfo(np.float32).eps)


def int_case(rng, m, n, k):
    A = adversarial_i8(rng, (m, k))
    B = adversarial_i8(rng, (k, n))
    want = np.zeros((m, n), np.int32)
    naive_gemm_i8_i32(want, A, B)
    return A, B, want


def run(kernel, A, B, **kw):
    C = np.zeros((A.shape[0], B.shape[1]), kernel.spec.acc_elem.dtype)
    gemm(C, A, B, kernel, **kw)
    return C


@pytest.mark.parametrize("kernel", list(KERNELS.values()), ids=lambda k: k.name)
def test_scalar_problem(kernel):
    dt = kernel.spec.in_elem.dtype
    for params in (None, BlockingParams.minimal(kernel.spec), BlockingParams(1, 1, 1)):
        C = run(kernel, np.array([[3]], dt), np.array([[-4]], dt), params=params)
        assert C.tolist() == [[-12]]


@pytest.mark.parametrize("kernel", INT, ids=lambda k: k.name)
def test_edge_heavy_blocking_int(kernel, rng):
    A, B, want = int_case(rng, 100, 100, 100)
    assert np.array_equal(run(kernel, A, B, params=BlockingParams(32, 64, 48)), want)


def test_edge_heavy_blocking_f32(rng):
    A = rng.uniform(-1, 1, (100, 100)).astype(np.float32)
    B = rng.uniform(-1, 1, (100, 100)).astype(np.float32)
    want = np.zeros((100, 100), np.float32)
    naive_gemm_f32(want, A, B)
    got = run(ukr_f32_axpy_4x8, A, B, params=BlockingParams(32, 64, 48))
    bound = 4 * 100 * EPS32 * np.abs(A).max() * np.abs(B).max()
    assert np.abs(got.astype(np.float64) - want).max() <= bound


def test_small_dims_below_tile(rng):
    for kernel in INT:
        s = kernel.spec
        m, n, k = max(1, s.mr - 1), max(1, s.nr - 1), max(1, s.kr - 1)
        A, B, want = int_case(rng, m, n, k)
        assert np.array_equal(run(kernel, A, B), want)


def test_bert_m1_shape(rng):
    A = rng.integers(-128, 128, (1024, 1024), dtype=np.int8)
    B = rng.integers(-128, 128, (1024, 512), dtype=np.int8)
    want = np.zeros((1024, 512), np.int32)
    naive_gemm_i8_i32(want, A, B)
    assert np.array_equal(run(ukr_i8_amx_16x16, A, B), want)


def test_accumulate_and_transposes(rng):
    A, B, want = int_case(rng, 23, 31, 40)
    C0 = rng.integers(-1000, 1000, (23, 31)).astype(np.int32)
    C = C0.copy()
    gemm(C, A, B, ukr_i8_v82_4x16, accumulate=True)
    assert np.array_equal(C, C0 + want)
    At, Bt = np.ascontiguousarray(A.T), np.ascontiguousarray(B.T)
    assert np.array_equal(run(ukr_i8_v82_4x16, At.T, B), want)  # strided view, no flag
    C = np.zeros((23, 31), np.int32)
    gemm(C, At, Bt, ukr_i8_v82_4x16, transpose_a=True, transpose_b=True)
    assert np.array_equal(C, want)


def test_column_major_c(rng):
    A, B, want = int_case(rng, 13, 29, 17)
    Ct = np.zeros((29, 13), np.int32)  # column-major storage of a 13x29 C
    gemm(Ct, A, B, ukr_i8_ime_4x8, c_col_major=True)
    assert np.array_equal(Ct.T, want)


def test_strided_c_view(rng):
    A, B, want = int_case(rng, 9, 10, 11)
    big = np.full((12, 20), 5, np.int32)
    gemm(big[1:10, 3:13], A, B, ukr_i8_v82_4x16)
    assert np.array_equal(big[1:10, 3:13], want)
    big[1:10, 3:13] = 5
    assert np.all(big == 5)  # nothing outside the view was touched


def test_contract_errors(rng):
    A = np.zeros((4, 4), np.int8)
    with pytest.raises(ContractError):
        gemm(np.zeros((4, 4), np.float32), A, A, ukr_i8_v82_4x16)
    with pytest.raises(ContractError):
        gemm(np.zeros((4, 4), np.int32), A, np.zeros((5, 4), np.int8), ukr_i8_v82_4x16)
    with pytest.raises(ContractError):
        gemm(np.zeros((4, 4), np.float32), A.astype(np.float32), A, ukr_f32_axpy_4x8)
    with pytest.raises(ValueError):
        gemm(np.zeros((4, 4), np.int32), A, A, ukr_i8_v82_4x16, workers=0)


def test_zero_extent_dims():
    C = np.full((3, 0), 1, np.int32)
    gemm(C, np.zeros((3, 5), np.int8), np.zeros((5, 0), np.int8), ukr_i8_v82_4x16)
    C = np.full((3, 4), 9, np.int32)
    gemm(C, np.zeros((3, 0), np.int8), np.zeros((0, 4), np.int8), ukr_i8_v82_4x16)
    assert not C.any()


# blocking

def test_default_blocking_examples():
    cache = CacheModel(32 * 1024, 512 * 1024, 4 * 1024 * 1024)
    assert default_blocking(cache, ukr_f32_axpy_4x8.spec).kc == 341
    grouped = MicroKernelSpec("f32_grouped", 4, 8, 16, 16, ElementType.F32, ElementType.F32, 11)
    assert default_blocking(cache, grouped).kc == 336
    no_l3 = CacheModel(32 * 1024, 512 * 1024, 0)
    assert default_blocking(no_l3, ukr_i8_v82_4x16.spec).nc == 8 * 16


def test_default_blocking_fits_half_caches():
    cache = CacheModel()
    for kernel in KERNELS.values():
        s = kernel.spec
        p = default_blocking(cache, s)
        b = s.in_elem.nbytes
        assert p.kc % s.kr == 0 and p.mc % s.mr == 0 and p.nc % s.nr == 0
        assert (s.mr + s.nr) * p.kc * b <= cache.l1_bytes // 2
        assert p.mc * p.kc * b <= cache.l2_bytes // 2 or p.mc == s.mr
        assert p.nc * p.kc * b <= cache.l3_bytes // 2 or p.nc == s.nr
        # largest such multiple
        assert (s.mr + s.nr) * (p.kc + s.kr) * b > cache.l1_bytes // 2


def test_cache_too_small():
    with pytest.raises(CacheTooSmallError):
        default_blocking(CacheModel(1024, 2048, 0), ukr_i8_amx_16x16.spec)
    with pytest.raises(ValueError):
        CacheModel(4096, 1024, 0)


def test_cache_from_env():
    c = CacheModel.from_env({"CACHE_L1": "65536", "CACHE_L3": "0"})
    assert (c.l1_bytes, c.l2_bytes, c.l3_bytes) == (65536, CacheModel().l2_bytes, 0)


def test_blocking_rounded_to_tiles():
    p = BlockingParams(30, 50, 40).fitted(ukr_i8_v82_4x16.spec)
    assert (p.mc, p.nc, p.kc) == (32, 64, 48)


# parallel partition

def test_workers_bitwise_identical(rng):
    A, B, want = int_case(rng, 97, 131, 75)
    for kernel in (ukr_i8_v82_4x16, ukr_i8_ime_4x8):
        outs = [run(kernel, A, B, workers=w, params=BlockingParams(32, 64, 48)) for w in (1, 2, 4, 8)]
        for o in outs:
            assert np.array_equal(o, want)


def test_more_workers_than_tiles(rng):
    A, B, want = int_case(rng, 5, 3, 7)
    assert np.array_equal(run(ukr_i8_v82_4x16, A, B, workers=8), want)


def test_f32_deterministic_per_params(rng):
    A = rng.standard_normal((50, 40)).astype(np.float32)
    B = rng.standard_normal((40, 60)).astype(np.float32)
    p = BlockingParams(16, 16, 16)
    a = run(ukr_f32_axpy_4x8, A, B, params=p, workers=3)
    b = run(ukr_f32_axpy_4x8, A, B, params=p, workers=3)
    assert np.array_equal(a, b)


# instrumentation

def test_loop_order_trace():
    spec = ukr_i8_v82_4x16.spec
    m, n, k = 40, 70, 50
    p = BlockingParams(16, 32, 32)
    stats = GemmStats()
    run(ukr_i8_v82_4x16, np.ones((m, k), np.int8), np.ones((k, n), np.int8), params=p, stats=stats)
    want = []
    for jc in range(0, n, p.nc):
        for pc in range(0, k, p.kc):
            for ic in range(0, m, p.mc):
                for jr in range(0, min(p.nc, n - jc), spec.nr):
                    for ir in range(0, min(p.mc, m - ic), spec.mr):
                        want.append((jc, pc, ic, jr, ir))
    assert stats.trace == want


def test_packing_amortization_counters():
    spec = ukr_i8_ime_4x8.spec
    m, n, k = 50, 45, 30
    p = BlockingParams(24, 40, 16)
    stats = GemmStats(record_trace=False)
    run(ukr_i8_ime_4x8, np.ones((m, k), np.int8), np.ones((k, n), np.int8), params=p, stats=stats)
    n_jc, n_pc, n_ic = -(-n // p.nc), -(-k // p.kc), -(-m // p.mc)
    assert stats.pack_b_calls == n_jc * n_pc
    assert stats.pack_a_calls == n_jc * n_pc * n_ic
    reads = 0
    for jc in range(0, n, p.nc):
        for ic in range(0, m, p.mc):
            reads += -(-min(p.mc, m - ic) // spec.mr) * -(-min(p.nc, n - jc) // spec.nr)
    assert stats.a_panel_reads == reads * n_pc
    assert stats.trace == []
