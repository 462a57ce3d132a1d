"""``fof`` command-line interface."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import codec, experiments
from .geometry import load_mesh, save_mesh
from .metrics import MetricReport, evaluate
from .surface import extract_mesh


def _size(text: str) -> tuple:
    try:
        w, h = (int(x) for x in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected WxH, got {text!r}") from None
    if w < 1 or h < 1:
        raise argparse.ArgumentTypeError("sizes must be positive")
    return w, h


def _int_list(text: str) -> list:
    try:
        return [int(x) for x in text.split(",") if x]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _float_list(text: str) -> list:
    try:
        return [float(x) for x in text.split(",") if x]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _intervals(text: str) -> list:
    pairs = []
    for item in filter(None, text.split(",")):
        a, sep, b = item.partition(":")
        if not sep:
            raise argparse.ArgumentTypeError(f"expected z_in:z_out, got {item!r}")
        pairs.append((float(a), float(b)))
    return pairs


def _add_source(p: argparse.ArgumentParser) -> None:
    p.add_argument("mesh", nargs="?", help="OBJ or PLY file (normalized into the canonical cube)")
    p.add_argument("--shape", help="synthetic shape, e.g. sphere:r=0.6 or torus:R=0.5,r=0.2")
    p.add_argument("--margin", type=float, default=0.05, help="normalization margin")


def _config(args, **kw) -> experiments.ExperimentConfig:
    return experiments.ExperimentConfig(shape=args.shape, mesh_path=args.mesh,
                                        margin=args.margin, **kw)


def _write_table(header: str, rows, out_dir, name: str) -> None:
    text = header + "\n" + "".join(r.csv_row() + "\n" for r in rows)
    sys.stdout.write(text)
    if out_dir:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        (Path(out_dir) / name).write_text(text)


def cmd_encode(args) -> int:
    mesh = _config(args).load()
    w, h = args.grid
    fof, warnings = experiments.mesh_to_fof(mesh, w, h, args.order)
    codec.write_fof(fof, args.out)
    print(f"wrote {args.out}: {w}x{h}x{2 * args.order + 1}, warnings {warnings}")
    return 0


def cmd_decode(args) -> int:
    fof = codec.read_fof(args.fof)
    w, h = args.grid or (fof.width, fof.height)
    mesh = extract_mesh(fof, (w, h, args.zsamples))
    if mesh.is_empty():
        print("warning: decoded occupancy never crosses 0.5, mesh is empty", file=sys.stderr)
    save_mesh(mesh, args.out)
    print(f"wrote {args.out}: {mesh.n_vertices} vertices, {mesh.n_faces} faces")
    return 0


def cmd_ablate_n(args) -> int:
    cfg = _config(args, grid=args.grid, orders=args.orders, zsamples=args.zsamples,
                  seed=args.seed, sample_count=args.count, image_size=args.image)
    rows = experiments.ablate_orders(cfg)
    _write_table(experiments.SweepRow.HEADER, rows, args.out, "ablate_n.csv")
    return 0


def cmd_noise_sweep(args) -> int:
    cfg = _config(args, grid=args.grid, order=args.order, noise_levels=args.levels,
                  zsamples=args.zsamples, seed=args.seed, sample_count=args.count,
                  image_size=args.image)
    rows = experiments.noise_sweep(cfg)
    _write_table(experiments.SweepRow.HEADER, rows, args.out, "noise_sweep.csv")
    return 0


def cmd_curves(args) -> int:
    curves = codec.occupancy_curves(args.intervals, args.orders, args.samples)
    codec.write_curves_csv(curves, args.out)
    peaks = ", ".join(f"max fhat_{n} = {curves[f'fhat_{n}'].max():.4f}" for n in args.orders)
    print(f"wrote {args.out}: {args.samples} samples; {peaks}")
    return 0


def cmd_metrics(args) -> int:
    pred = load_mesh(args.pred)
    gt = load_mesh(args.gt)
    report = evaluate(pred, gt, args.count, args.seed, args.image, p2s_vertices=args.p2s_vertices)
    text = MetricReport.HEADER + "\n" + report.csv_row() + "\n"
    sys.stdout.write(text)
    if args.out:
        Path(args.out).write_text(text)
    return 0


def cmd_bench(args) -> int:
    mesh = _config(args).load()
    results = experiments.bench(mesh, args.grid, args.zsamples, args.orders, args.repeats)
    _write_table(experiments.BenchResult.HEADER, results, args.out, "bench.csv")
    r2 = experiments.linear_fit_r2([2 * r.order + 1 for r in results], [r.decode_s for r in results])
    print(f"decode time vs channels: R^2 = {r2:.4f}", file=sys.stderr)
    return 0


class _Parser(argparse.ArgumentParser):
    """Reports usage errors as a single stderr line."""

    def error(self, message):
        self.exit(2, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fof", description="Fourier occupancy field tools")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("encode", help="mesh -> FOF file")
    _add_source(p)
    p.add_argument("--grid", type=_size, default=(256, 256))
    p.add_argument("--order", type=int, default=15)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode", help="FOF file -> OBJ mesh")
    p.add_argument("fof")
    p.add_argument("--grid", type=_size, help="resize the field to WxH before decoding")
    p.add_argument("--zsamples", type=int, default=256)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_decode)

    for name, func, out in (("ablate-n", cmd_ablate_n, "ablate_n.csv"),
                            ("noise-sweep", cmd_noise_sweep, "noise_sweep.csv")):
        p = sub.add_parser(name, help=f"sweep, writes {out}")
        _add_source(p)
        p.add_argument("--grid", type=_size, default=(256, 256))
        p.add_argument("--zsamples", type=int, default=256)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--count", type=int, default=100_000, help="surface samples per mesh")
        p.add_argument("--image", type=_size, default=(256, 256), help="normal image size")
        p.add_argument("--out", help="output directory")
        if name == "ablate-n":
            p.add_argument("--orders", type=_int_list, default=[3, 7, 15, 31])
        else:
            p.add_argument("--order", type=int, default=15)
            p.add_argument("--levels", type=_float_list,
                           default=list(experiments.DEFAULT_NOISE_LEVELS))
        p.set_defaults(func=func)

    p = sub.add_parser("curves", help="1D exact vs truncated occupancy curves")
    p.add_argument("--intervals", type=_intervals, required=True,
                   help="inside intervals, e.g. --intervals=-0.5:0.5,0.6:0.7")
    p.add_argument("--orders", type=_int_list, default=[7, 15, 31])
    p.add_argument("--samples", type=int, default=512)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_curves)

    p = sub.add_parser("metrics", help="Chamfer / P2S / normal error of pred vs gt")
    p.add_argument("pred")
    p.add_argument("gt")
    p.add_argument("--count", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--image", type=_size, default=(512, 512))
    p.add_argument("--p2s-vertices", action="store_true",
                   help="measure P2S from mesh vertices instead of surface samples")
    p.add_argument("--out")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("bench", help="time rasterize / encode / decode per order")
    _add_source(p)
    p.add_argument("--grid", type=_size, default=(256, 256))
    p.add_argument("--zsamples", type=int, default=256)
    p.add_argument("--orders", type=_int_list, default=[7, 15, 31, 63])
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, IndexError, RuntimeError) as exc:
        print(f"fof {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
