"""Workloads, timing protocol, GOPS accounting and result emission."""
from __future__ import annotations

import csv
import io
import json
import time
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .lowering import ConvSpec, im2col
from .macro_kernel import BlockingParams, CacheModel, gemm
from .matrix_core import ContractError, ElementType
from .micro_kernels import KERNELS, MicroKernel, get_kernel, ukr_f32_axpy_4x8
from .quantization import eligible_for_quantization, quantize_dynamic, rescale

FULL_PROTOCOL_SECONDS = 50.0
COLUMNS = ("label", "backend", "m", "n", "k", "instances", "reps", "wall_seconds", "gops", "checksum")


@dataclass
class WorkloadCase:
    label: str
    kind: str  # "gemm" | "matvec" | "conv"
    m: int
    n: int
    k: int
    instances: int = 1
    quantize: bool = True
    conv: ConvSpec | None = None
    input_bhw: tuple[int, int, int] | None = None

    def __post_init__(self):
        if self.kind not in ("gemm", "matvec", "conv"):
            raise ValueError(f"unknown workload kind {self.kind!r}")
        if min(self.m, self.n, self.k) < 1 or self.instances < 1:
            raise ValueError(f"{self.label}: dimensions and instances must be positive")

    @property
    def useful_ops(self) -> int:
        """2*m*n*k per GEMM instance (a matvec is stored as n=1, giving 2*m*k)."""
        return 2 * self.m * self.n * self.k * self.instances


@dataclass
class BenchResult:
    label: str
    backend: str
    m: int
    n: int
    k: int
    instances: int
    reps: int
    wall_seconds: float
    gops: float
    checksum: int
    useful_ops: int = field(default=0)


def gops(useful_ops: int, reps: int, wall_seconds: float) -> float:
    return useful_ops * reps / wall_seconds / 1e9


def checksum(out: np.ndarray) -> int:
    """Order-independent sum of the output's 32-bit words, modulo 2**64."""
    words = np.ascontiguousarray(out).view(np.uint32).astype(np.uint64)
    return int(words.sum(dtype=np.uint64))


# -- Workload definitions ----------------------------------------------------

def bert_encoder_shapes(d: int = 1024, h: int = 16, f: int = 4096, l: int = 512, b: int = 1) -> list[WorkloadCase]:
    """GEMMs of one transformer encoder block (softmax / norm / GELU rows excluded)."""
    if d % h:
        raise ValueError(f"head count {h} does not divide model width {d}")
    lb = l * b
    return [
        WorkloadCase("M1", "gemm", d, lb, d, quantize=True),
        WorkloadCase("M2", "gemm", d, lb, d, quantize=True),
        WorkloadCase("M3", "gemm", d, lb, d, quantize=True),
        WorkloadCase("M5", "gemm", l, l, d // h, instances=h * b, quantize=False),
        WorkloadCase("M7", "gemm", d // h, l, l, instances=h * b, quantize=False),
        WorkloadCase("M9", "gemm", d, lb, d, quantize=True),
        WorkloadCase("F11", "gemm", f, lb, d, quantize=True),
        WorkloadCase("F13", "gemm", d, lb, f, quantize=True),
    ]


class WorkloadFormatError(ValueError):
    pass


CONV_FIELDS = ("label", "c_i", "h_i", "w_i", "c_o", "h_f", "w_f", "stride", "pad", "b")


def parse_conv_workload(text: str, source: str = "<string>") -> list[WorkloadCase]:
    """Parse comma-separated conv records; ``#`` starts a comment.

    Each record is ``label, c_i, h_i, w_i, c_o, h_f, w_f, stride, pad, b``.  A
    label starting with ``FC`` describes the fully connected layer: it needs
    1x1 spatial extents and becomes a matrix-vector case.
    """
    cases = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = [p.strip() for p in line.split(",")]
        where = f"{source}:{lineno}"
        if len(parts) != len(CONV_FIELDS):
            raise WorkloadFormatError(f"{where}: expected {len(CONV_FIELDS)} fields {CONV_FIELDS}, got {len(parts)}")
        label, vals = parts[0], {}
        if not label:
            raise WorkloadFormatError(f"{where}: field 'label' is empty")
        for name, tok in zip(CONV_FIELDS[1:], parts[1:]):
            try:
                v = int(tok)
            except ValueError:
                raise WorkloadFormatError(f"{where}: field '{name}' is not an integer: {tok!r}") from None
            lo = 0 if name == "pad" else 1
            if v < lo:
                raise WorkloadFormatError(f"{where}: field '{name}' must be >= {lo}, got {v}")
            vals[name] = v
        if label.upper().startswith("FC"):
            for name in ("h_i", "w_i", "h_f", "w_f"):
                if vals[name] != 1:
                    raise WorkloadFormatError(f"{where}: field '{name}' must be 1 for an FC record")
            cases.append(WorkloadCase(label, "matvec", vals["c_o"], vals["b"], vals["c_i"], quantize=False))
            continue
        spec = ConvSpec(vals["c_o"], vals["h_f"], vals["w_f"], vals["c_i"], vals["stride"], vals["pad"])
        try:
            m, n, k = spec.gemm_dims(vals["b"], vals["h_i"], vals["w_i"])
        except ContractError as exc:
            raise WorkloadFormatError(f"{where}: {exc}") from None
        cases.append(WorkloadCase(label, "conv", m, n, k, quantize=True, conv=spec,
                                  input_bhw=(vals["b"], vals["h_i"], vals["w_i"])))
    return cases


SAMPLE_RESNET50 = Path(__file__).with_name("data") / "resnet50_v15.txt"


def load_conv_workload(path) -> list[WorkloadCase]:
    path = Path(path)
    return parse_conv_workload(path.read_text(), str(path))


# -- Timing ------------------------------------------------------------------

def _rng(label: str, seed: int) -> np.random.Generator:
    return np.random.default_rng([zlib.crc32(label.encode()), seed])


def _prepare(case: WorkloadCase, kernel: MicroKernel, mode: str, workers, params, cache, seed):
    """Build operands and return a closure computing one repetition.

    mode: ``fp32`` (float operands, float kernel), ``raw`` (int8 operands) or
    ``quant`` (float operands; weights quantized up front, activations per rep).
    """
    rng = _rng(case.label, seed)
    if mode == "raw":
        def draw(shape):
            return rng.integers(-128, 128, shape, dtype=np.int8)
    else:
        def draw(shape):
            return rng.uniform(-1, 1, shape).astype(np.float32)

    def mm(W, X):
        if mode == "quant":
            Xq = quantize_dynamic(X)
            Cq = np.zeros((W.rows, Xq.cols), np.int32)
            gemm(Cq, W.data, Xq.data, kernel, params, workers, cache=cache)
            return rescale(Cq, W.scale, Xq.scale)
        C = np.zeros((W.shape[0], X.shape[1]), kernel.spec.acc_elem.dtype)
        gemm(C, W, X, kernel, params, workers, cache=cache)
        return C

    W = draw((case.m, case.k))
    if mode == "quant":
        W = quantize_dynamic(W)  # weights are static; only activations are quantized per run
    if case.kind == "conv":
        b, h, w = case.input_bhw
        I = draw((b, h, w, case.conv.c_i))

        def run():
            return mm(W, im2col(I, case.conv))  # lowering is part of the timed work
    else:
        X = draw((case.k, case.n))

        def run():
            out = None
            for _ in range(case.instances):
                out = mm(W, X)
            return out

    return run


def run_benchmark(cases: Iterable[WorkloadCase], backend: str, workers: int = 1, min_seconds: float = 1.0,
                  quantize_mode: str = "auto", params: BlockingParams | None = None,
                  cache: CacheModel | None = None, seed: int = 0) -> list[BenchResult]:
    """Time each case on *backend*, repeating until *min_seconds* have elapsed.

    quantize_mode: ``auto`` quantizes eligible cases and runs the rest in FP32
    on int8 backends; ``force`` quantizes everything; ``off`` feeds raw int8
    operands to int8 backends.  Timing covers packing, im2col and dynamic
    quantization of activations.
    """
    if quantize_mode not in ("auto", "off", "force"):
        raise ValueError(f"unknown quantize mode {quantize_mode!r}")
    kernel = get_kernel(backend)
    integer = kernel.spec.in_elem is ElementType.I8
    if quantize_mode == "force" and not integer:
        raise ContractError(f"backend {backend} is floating point; cannot force quantization")
    cache = cache or CacheModel.from_env()
    results = []
    for case in cases:
        run_kernel, mode = kernel, "fp32"
        if integer:
            if quantize_mode == "off":
                mode = "raw"
            elif quantize_mode == "force" or eligible_for_quantization(case):
                mode = "quant"
            else:
                run_kernel = ukr_f32_axpy_4x8
        run = _prepare(case, run_kernel, mode, workers, params, cache, seed)
        reps, wall, out = 0, 0.0, None
        while True:
            t0 = time.perf_counter()
            out = run()
            wall += time.perf_counter() - t0
            reps += 1
            if wall >= min_seconds:
                break
        results.append(BenchResult(case.label, run_kernel.name, case.m, case.n, case.k, case.instances, reps,
                                   wall, gops(case.useful_ops, reps, wall), checksum(out), case.useful_ops))
    return results


# -- Output ------------------------------------------------------------------

def format_results(results: list[BenchResult], fmt: str = "csv") -> str:
    if fmt == "json":
        return json.dumps([{**{c: getattr(r, c) for c in COLUMNS}, "useful_ops": r.useful_ops} for r in results],
                          indent=2) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in results:
            w.writerow([getattr(r, c) for c in COLUMNS])
        return buf.getvalue()
    raise ValueError(f"unknown format {fmt!r}")


def emit_results(results: list[BenchResult], fmt: str = "csv", path=None, stream=None) -> None:
    """Write results to *path*, or to *stream* (stdout by default)."""
    text = format_results(results, fmt)
    if path is not None:
        Path(path).write_text(text)
    else:
        import sys

        (stream or sys.stdout).write(text)


def parse_results(text: str, fmt: str = "json") -> list[BenchResult]:
    if fmt == "json":
        return [BenchResult(**d) for d in json.loads(text)]
    rows = list(csv.DictReader(io.StringIO(text)))
    out = []
    for row in rows:
        out.append(BenchResult(
            row["label"], row["backend"], int(row["m"]), int(row["n"]), int(row["k"]), int(row["instances"]),
            int(row["reps"]), float(row["wall_seconds"]), float(row["gops"]), int(row["checksum"]),
        ))
    return out


def list_backends() -> list[str]:
    return list(KERNELS)
