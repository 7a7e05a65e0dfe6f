"""Command-line front end: ``bench --backend ... --workload ...``."""
from __future__ import annotations

import argparse
import sys

from . import bench
from .macro_kernel import CacheModel
from .micro_kernels import get_kernel
from .matrix_core import ElementType


def _workload(args) -> list[bench.WorkloadCase]:
    w = args.workload
    if w == "bert":
        return bench.bert_encoder_shapes(l=args.tokens, b=args.batch)
    if w == "gemm":
        return [bench.WorkloadCase("gemm", "gemm", args.m, args.n, args.k)]
    if w.startswith("conv:"):
        path = w[len("conv:"):]
        if path == "resnet50":
            path = bench.SAMPLE_RESNET50
        return bench.load_conv_workload(path)
    raise ValueError(f"unknown workload {w!r} (expected bert, gemm or conv:<path>)")


def _backends(args) -> list[str]:
    if args.backend != "all":
        get_kernel(args.backend)  # fail early on unknown names
        return [args.backend]
    names = bench.list_backends()
    if args.quantize == "force":
        # forcing int8 makes no sense for the float backend
        names = [b for b in names if get_kernel(b).spec.in_elem is ElementType.I8]
    return names


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bench", description="Time blocked GEMM backends on GEMM, encoder and conv workloads.")
    p.add_argument("--backend", default="all", help="registered backend name, or 'all' (default)")
    p.add_argument("--workload", default="gemm", help="bert | gemm | conv:<path> (conv:resnet50 uses the bundled sample)")
    p.add_argument("--m", type=int, default=256)
    p.add_argument("--n", type=int, default=256)
    p.add_argument("--k", type=int, default=256)
    p.add_argument("--tokens", type=int, choices=(256, 512, 1024), default=512, help="sequence length for bert")
    p.add_argument("--batch", type=int, default=1)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--min-seconds", type=float, default=1.0)
    p.add_argument("--full-protocol", action="store_true",
                   help=f"repeat each case for at least {bench.FULL_PROTOCOL_SECONDS:g} s")
    p.add_argument("--quantize", choices=("auto", "off", "force"), default="auto")
    p.add_argument("--format", choices=("json", "csv"), default="csv")
    p.add_argument("--out", default=None, help="write results here instead of stdout")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--list-backends", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.list_backends:
        for name in bench.list_backends():
            spec = get_kernel(name).spec
            print(f"{name}\t{spec.in_elem.name}->{spec.acc_elem.name}\tmr={spec.mr} nr={spec.nr} kr={spec.kr}")
        return 0
    try:
        if args.workers < 1 or args.batch < 1:
            raise ValueError("--workers and --batch must be >= 1")
        if args.min_seconds < 0:
            raise ValueError("--min-seconds must be >= 0")
        min_seconds = bench.FULL_PROTOCOL_SECONDS if args.full_protocol else args.min_seconds
        cache = CacheModel.from_env()
        cases = _workload(args)
        results = []
        for name in _backends(args):
            results += bench.run_benchmark(cases, name, args.workers, min_seconds, args.quantize, cache=cache,
                                           seed=args.seed)
        bench.emit_results(results, args.format, args.out)
    except (ValueError, KeyError, OSError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"bench: error: {msg}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
