"""``poolbench`` command line.

Subcommands: pool, video-pool, compare, bench, gradcheck, corpus.

Exit codes: 0 on success, 1 for I/O and file-format problems, 2 for bad
arguments or geometry.  Scientific outcomes never change the exit code,
with one exception: ``gradcheck`` in exact mode exits 3 when the analytic
gradient disagrees with the finite-difference oracle.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import __version__, rng
from .media import (
    MediaError,
    frames_to_tensor,
    image_to_tensor,
    load_frames,
    load_image,
    save_image,
    tensor_to_frames,
    tensor_to_image,
)
from .metrics import downsample_area, upsample_nearest
from .pooling import (
    BACKWARD_METHODS,
    METHODS,
    PoolSpec,
    finite_difference_gradient,
    max_relative_error,
    pool_backward,
    pool_forward,
)
from .pooling.spec import default_threads
from .tensor import DTYPES, GeometryError, PoolGeometry, PrecisionError, output_shape, read_tensor, write_tensor

GRADCHECK_TOLERANCE = 1e-6
EXIT_IO = 1
EXIT_USAGE = 2
EXIT_GRADIENT = 3


class UsageError(ValueError):
    pass


def _int_list(text: str) -> list[int]:
    try:
        vals = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _name_list(text: str) -> list[str]:
    names = [v.strip() for v in text.split(",") if v.strip()]
    bad = [n for n in names if n not in METHODS]
    if bad or not names:
        raise argparse.ArgumentTypeError(f"unknown method(s) {bad}; choose from {', '.join(METHODS)}")
    return names


def _shape(text: str) -> tuple[int, ...]:
    try:
        dims = tuple(int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"shape must look like CxHxW, got {text!r}") from None
    if len(dims) not in (3, 4) or min(dims) < 1:
        raise argparse.ArgumentTypeError(f"shape must have 3 or 4 positive extents, got {text!r}")
    return dims


def _shape_list(text: str) -> list[tuple[int, ...]]:
    return [_shape(t) for t in text.split(",") if t.strip()]


def _seed(text: str) -> int:
    try:
        return rng.check_seed(int(text))
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e)) from None


def _metadata(args: argparse.Namespace, seed: int | None) -> dict:
    """Report header: tool version, every effective flag, RNG identity."""
    flags = " ".join(f"--{k.replace('_', '-')}={_flag_value(v)}" for k, v in sorted(vars(args).items())
                     if k not in ("func", "command"))
    meta = {"tool": f"poolbench {__version__}", "command": args.command, "flags": flags}
    if seed is not None:
        meta["rng"] = rng.describe(seed)
    return meta


def _flag_value(v) -> str:
    if isinstance(v, (list, tuple)):
        if v and isinstance(v[0], tuple):
            return ",".join("x".join(map(str, s)) for s in v)
        return ",".join(map(str, v))
    return str(v)


def _print_meta(meta: dict, stream=None) -> None:
    stream = stream or sys.stdout
    for k, v in meta.items():
        print(f"# {k}: {v}", file=stream)


def _spec(args, method: str | None = None, **extra) -> PoolSpec:
    return PoolSpec(method or args.method, p=args.p, alpha=args.alpha, seed=args.seed, **extra)


def _geometry(k: int, stride, padding: int, kt: int | None, ndim: int) -> PoolGeometry:
    if ndim == 2:
        if kt is not None:
            raise UsageError("--kt needs a 4-D (C,T,H,W) input")
        s = stride if stride is not None else [k]
        if len(s) not in (1, 2):
            raise UsageError("--stride takes one value (or h,w) for 2-D pooling")
        return PoolGeometry.make((k, k), tuple(s) if len(s) == 2 else s[0], padding, ndim=2)
    kt = 1 if kt is None else kt
    if stride is None:
        s = (kt, k, k)
    elif len(stride) == 1:
        s = (stride[0],) * 3
    elif len(stride) == 3:
        s = tuple(stride)
    else:
        raise UsageError("--stride takes one value or t,h,w for 3-D pooling")
    return PoolGeometry.make((kt, k, k), s, padding, ndim=3)


def cmd_pool(args) -> int:
    src = Path(args.input)
    dtype = DTYPES[args.precision]
    tensor_input = src.suffix.lower() == ".ptns"
    if tensor_input:
        x = read_tensor(src).astype(dtype, copy=False)
    else:
        x = image_to_tensor(load_image(src), normalize=True, dtype=dtype)
    geom = _geometry(args.k, args.stride, args.padding, args.kt, x.ndim - 1)
    spec = _spec(args)
    out = pool_forward(x, geom, spec, threads=args.threads).output
    if args.upsample:
        if x.ndim != 3:
            raise UsageError("--upsample applies to 2-D images only")
        out = (upsample_nearest(out, x.shape) if args.upsample == "nearest"
               else downsample_area(out, x.shape))
    dst = Path(args.output)
    if dst.suffix.lower() == ".ptns":
        write_tensor(dst, np.ascontiguousarray(out, dtype=dtype))
    else:
        if out.ndim != 3:
            raise UsageError("4-D results can only be written as .ptns")
        save_image(dst, tensor_to_image(out, denormalize=not tensor_input))
    meta = _metadata(args, spec.seed)
    meta["input_shape"] = "x".join(map(str, x.shape))
    meta["output_shape"] = "x".join(map(str, out.shape))
    _print_meta(meta)
    return 0


def cmd_video_pool(args) -> int:
    seq = load_frames(args.frames, args.pattern)
    x = frames_to_tensor(seq, normalize=True, dtype=DTYPES[args.precision])
    geom = _geometry(args.k, args.stride, args.padding, args.kt, 3)
    spec = _spec(args)
    out = pool_forward(x, geom, spec, threads=args.threads).output
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    ext = args.format
    digits = max(4, len(str(out.shape[1])))
    for i, frame in enumerate(tensor_to_frames(out).frames):
        save_image(out_dir / f"frame_{i:0{digits}d}.{ext}", frame)
    meta = _metadata(args, spec.seed)
    meta["frames_in"] = x.shape[1]
    meta["frames_out"] = out.shape[1]
    _print_meta(meta)
    return 0


def cmd_compare(args) -> int:
    from .compare import PROTOCOL, evaluate_corpus

    threads = args.threads if args.threads is not None else default_threads()
    report = evaluate_corpus(args.corpus, args.methods, args.k, seed=args.seed, p=args.p,
                             alpha=args.alpha, threads=threads)
    report.metadata = {**_metadata(args, args.seed), **PROTOCOL, "images": report.metadata["images"]}
    text = report.to_csv()
    _emit(text, args.out)
    if args.out != "-":
        for r in report.aggregates():
            print(f"{r.method:>12}  k={r.k}  ssim={r.ssim:.4f}  psnr={r.psnr:.3f}")
    return 0


def cmd_bench(args) -> int:
    from .bench import BenchConfig, run_suite

    cfg = BenchConfig(methods=args.methods, shapes=args.shape, kernels=args.k, strides=args.stride,
                      iterations=args.iters, warmup=args.warmup, precision=args.precision,
                      threads=args.threads, seed=args.seed, p=args.p, alpha=args.alpha)
    report = run_suite(cfg)
    report.metadata = {**_metadata(args, args.seed), **{k: v for k, v in report.metadata.items()
                                                        if k not in ("tool", "rng")}}
    _emit(report.to_csv(), args.out)
    return 0


def cmd_gradcheck(args) -> int:
    if len(args.shape) != 3:
        raise UsageError("--shape must be CxHxW")
    mode = {"paper": "paper_proportional", "exact": "exact_jacobian"}[args.mode]
    if args.method != "softpool" and args.mode == "paper":
        raise UsageError("--mode paper only applies to softpool")
    spec = PoolSpec(args.method, seed=args.seed, grad_mode=mode)
    geom = PoolGeometry.make(args.k, args.stride, args.padding, ndim=2)
    x = rng.uniforms(args.seed, rng.TESTING, int(np.prod(args.shape))).reshape(args.shape)
    analytic = pool_backward(x, np.ones(output_shape(x.shape, geom)), geom, spec)
    numeric = finite_difference_gradient(x, geom, spec, epsilon=args.eps)
    err = max_relative_error(analytic, numeric)
    _print_meta(_metadata(args, args.seed))
    print(f"max_relative_error: {err:.3e}")
    if args.method == "softpool" and args.mode == "paper":
        print("notice: the weight-proportional rule is not the derivative of the forward map; "
              "a large error here is expected and not a failure")
        return 0
    ok = err < GRADCHECK_TOLERANCE
    print(f"result: {'PASS' if ok else 'FAIL'} (tolerance {GRADCHECK_TOLERANCE:g})")
    return 0 if ok else EXIT_GRADIENT


def cmd_corpus(args) -> int:
    from .corpus import build_corpus

    files = build_corpus(args.out, minimum=args.minimum)
    print(f"wrote {len(files)} images to {args.out}")
    return 0


def _emit(text: str, out: str) -> None:
    if out == "-":
        sys.stdout.write(text)
        return
    with open(out, "w", encoding="utf-8", newline="\n") as f:
        f.write(text)


def _pool_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--method", choices=METHODS, default="softpool")
    p.add_argument("--k", type=int, default=2, help="spatial kernel size")
    p.add_argument("--stride", type=_int_list, default=None, help="stride (default: kernel)")
    p.add_argument("--padding", type=int, default=0)
    p.add_argument("--p", type=float, default=None, help="exponent for lp / pow_average")
    p.add_argument("--alpha", type=float, default=0.5, help="gate mix weight")
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--precision", choices=tuple(DTYPES), default="f32")
    p.add_argument("--threads", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="poolbench", description="Pooling operators and their evaluation.")
    parser.add_argument("--version", action="version", version=f"poolbench {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pool", help="pool one image or .ptns tensor")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True, help=".png/.pgm/.ppm image or .ptns tensor")
    p.add_argument("--kt", type=int, default=None, help="temporal kernel (4-D .ptns input)")
    p.add_argument("--upsample", choices=("nearest", "area"), default=None,
                   help="resize the result back to the input size")
    _pool_options(p)
    p.set_defaults(func=cmd_pool)

    p = sub.add_parser("video-pool", help="spatio-temporal pooling of a frame directory")
    p.add_argument("--frames", required=True)
    p.add_argument("--pattern", default="*")
    p.add_argument("--kt", type=int, default=2)
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=("png", "pgm", "ppm"), default="png")
    _pool_options(p)
    p.set_defaults(func=cmd_video_pool)

    p = sub.add_parser("compare", help="SSIM/PSNR of pooled-and-restored images")
    p.add_argument("--corpus", required=True)
    p.add_argument("--methods", type=_name_list, default=["softpool", "average", "maximum", "stochastic"])
    p.add_argument("--k", type=_int_list, default=[2, 3, 5])
    p.add_argument("--out", default="-")
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--p", type=float, default=None)
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--threads", type=int, default=None)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("bench", help="forward/backward latency")
    p.add_argument("--methods", type=_name_list, default=["average", "maximum", "softpool"])
    p.add_argument("--shape", type=_shape_list, default=[(64, 224, 224)])
    p.add_argument("--k", type=_int_list, default=[2])
    p.add_argument("--stride", type=_int_list, default=None, help="strides to sweep (default: k)")
    p.add_argument("--iters", type=int, default=200)
    p.add_argument("--warmup", type=int, default=50)
    p.add_argument("--precision", choices=tuple(DTYPES), default="f32")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--p", type=float, default=None)
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("gradcheck", help="analytic gradient vs central differences")
    p.add_argument("--method", choices=BACKWARD_METHODS, default="softpool")
    p.add_argument("--mode", choices=("paper", "exact"), default="exact")
    p.add_argument("--shape", type=_shape, default=(2, 6, 6))
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--stride", type=int, default=None)
    p.add_argument("--padding", type=int, default=0)
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--eps", type=float, default=1e-5)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("corpus", help="write the bundled sample photographs as PNG")
    p.add_argument("--out", required=True)
    p.add_argument("--minimum", type=int, default=20)
    p.set_defaults(func=cmd_corpus)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (MediaError, OSError) as e:
        print(f"poolbench: error: {e}", file=sys.stderr)
        return EXIT_IO
    except (UsageError, GeometryError, PrecisionError, ValueError, RuntimeError) as e:
        print(f"poolbench: error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
