"""Blocked mixed-precision GEMM with executable models of SIMD and matrix-engine micro-kernels."""
from .bench import BenchResult, WorkloadCase, bert_encoder_shapes, load_conv_workload, run_benchmark
from .lowering import ConvSpec, conv_lowered, direct_conv, im2col
from .macro_kernel import BlockingParams, CacheModel, default_blocking, gemm
from .matrix_core import ContractError, ElementType, OverflowRiskError, naive_gemm_f32, naive_gemm_i8_i32
from .micro_kernels import KERNELS, get_kernel, select_microtile_dims
from .packing import PackLayoutA, PackLayoutB, pack_a, pack_b, unpack_a, unpack_b
from .quantization import QuantizedMatrix, qgemm, quantize_dynamic

__version__ = "0.1.0"
