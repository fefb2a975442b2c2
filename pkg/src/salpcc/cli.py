"""Command-line interface.

Subcommands: encode, decode, evaluate, sweep, bdpsnr, saliency.
Exit codes: 0 ok, 1 usage, 2 data error, 3 numerical failure.
SALPCC_THREADS provides the default for --threads.
"""

import argparse
import csv
import json
import os
import sys
from dataclasses import replace

import numpy as np

from . import __version__
from .codec import decode_stream, measure_bpp
from .config import CodecConfig, load_config
from .errors import DataError, NumericalError, PlyError, StreamError
from .metrics import (
    bd_psnr,
    d_p2plane,
    d_rms,
    error_heatmap,
    layer_partition,
    layer_report,
    psnr_geom,
    ramp_colors,
    symmetric,
)
from .pipeline import (
    decode_pipeline,
    decode_report,
    encode_prepared,
    encode_report,
    prepare_cloud,
)
from .ply import load_ply, save_ply
from .pointcloud import PointCloud, voxelize


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _triple(text: str) -> tuple:
    parts = [p for p in text.replace(",", " ").split() if p]
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"expected x,y,z, got {text!r}")
    return tuple(float(p) for p in parts)


def _size(text: str) -> tuple:
    parts = [p for p in text.replace("x", " ").replace(",", " ").split() if p]
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"expected WxH, got {text!r}")
    return tuple(int(p) for p in parts)


def _float_list(text: str) -> list:
    parts = [p for p in text.replace(",", " ").split() if p]
    if not parts:
        raise argparse.ArgumentTypeError("empty list")
    return [float(p) for p in parts]


def _add_config_flags(p: _Parser) -> None:
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--depth", type=int, help="voxel depth (grid 2^depth)")
    p.add_argument("--k-n", type=int, dest="k_n", help="graph neighbors")
    p.add_argument("--k-a", type=int, dest="k_a", help="visibility window")
    p.add_argument("--k-g", type=int, dest="k_g", help="saliency neighbors")
    p.add_argument("--s-thresh", type=float, dest="s_thresh",
                   help="quantization scale")
    p.add_argument("--weights", type=_float_list,
                   help="four saliency weights w1,w2,w3,w4")
    p.add_argument("--m", type=float, help="focus falloff exponent")
    p.add_argument("--strict-paper-mode", action="store_true", default=None,
                   dest="strict_paper_mode")
    p.add_argument("--uniform", action="store_true", default=None,
                   help="constant quantization scale, no saliency")
    p.add_argument("--uniform-value", type=float, dest="uniform_value")
    p.add_argument("--camera-eye", type=_triple, dest="camera_eye")
    p.add_argument("--camera-dir", type=_triple, dest="camera_dir")
    p.add_argument("--camera-near", type=float, dest="camera_near")
    p.add_argument("--camera-far", type=float, dest="camera_far")
    p.add_argument("--fov", type=float, dest="fov_deg")
    p.add_argument("--image-size", type=_size, dest="image_size")
    p.add_argument("--threads", type=int)


def _add_solver_flags(p: _Parser) -> None:
    p.add_argument("--backend", choices=["auto", "direct", "cg"])
    p.add_argument("--tol", type=float)
    p.add_argument("--maxiter", type=int)


_CONFIG_KEYS = (
    "depth", "k_n", "k_a", "k_g", "s_thresh", "m", "strict_paper_mode",
    "uniform", "uniform_value", "camera_eye", "camera_dir", "camera_near",
    "camera_far", "fov_deg", "image_size", "backend", "tol", "maxiter",
)


def _resolve_config(args) -> CodecConfig:
    config = load_config(args.config) if getattr(args, "config", None) \
        else CodecConfig()
    overrides = {}
    for key in _CONFIG_KEYS:
        val = getattr(args, key, None)
        if val is not None:
            overrides[key] = tuple(val) if isinstance(val, list) else val
    weights = getattr(args, "weights", None)
    if weights is not None:
        if len(weights) != 4:
            raise UsageError("--weights needs exactly four values")
        overrides.update(
            w1=weights[0], w2=weights[1], w3=weights[2], w4=weights[3]
        )
    threads = getattr(args, "threads", None)
    if threads is None:
        env = os.environ.get("SALPCC_THREADS")
        if env is not None:
            try:
                threads = int(env)
            except ValueError:
                raise UsageError(f"bad SALPCC_THREADS value {env!r}")
    if threads is not None:
        if threads < 1:
            raise UsageError("--threads must be >= 1")
        overrides["threads"] = threads
    return replace(config, **overrides)


def _emit(report: dict, path=None) -> None:
    text = json.dumps(report, indent=2, sort_keys=True)
    print(text)
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")


def cmd_encode(args) -> int:
    config = _resolve_config(args)
    cloud = load_ply(args.input)
    prep = prepare_cloud(cloud.points, config)
    result = encode_prepared(prep, config)
    with open(args.output, "wb") as fh:
        fh.write(result.stream)
    if args.save_voxelized:
        save_ply(args.save_voxelized, prep.voxels.astype(np.float64))
    _emit(encode_report(result, config), args.report)
    return 0


def cmd_decode(args) -> int:
    config = _resolve_config(args)
    with open(args.input, "rb") as fh:
        stream = fh.read()
    result = decode_pipeline(stream, config)
    save_ply(args.output, result.points)
    _emit(decode_report(result, config), args.report)
    return 0


def _load_saliency_csv(path):
    indices = []
    scores = []
    with open(path, encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "index" not in reader.fieldnames \
                or "s" not in reader.fieldnames:
            raise DataError(f"{path}: expected columns 'index' and 's'")
        for row in reader:
            indices.append(int(row["index"]))
            scores.append(float(row["s"]))
    return np.asarray(indices, dtype=np.int64), np.asarray(scores)


def cmd_evaluate(args) -> int:
    ref = load_ply(args.reference)
    deg = load_ply(args.degraded)
    report = {
        "version": __version__,
        "n_reference": ref.n,
        "n_degraded": deg.n,
        "bandwidth_from": args.bandwidth_from,
    }
    ref_pts = ref.points
    deg_pts = deg.points
    restricted = False
    if args.stream:
        with open(args.stream, "rb") as fh:
            stream = fh.read()
        dec = decode_stream(stream)
        report["bpp"] = measure_bpp(stream, dec.n)
        # sizes matching the stream: score the visible portion only
        if dec.n == ref.n and not args.no_mask_restrict:
            mask = dec.visible_mask
            ref_pts = ref.points[mask]
            if deg.n == dec.n:
                deg_pts = deg.points[mask]
            restricted = True
    report["restricted_to_visible"] = restricted
    report["d1_psnr"] = psnr_geom(
        ref_pts, deg_pts, "d1", bandwidth_from=args.bandwidth_from,
        workers=args.threads or 1,
    )
    report["d2_psnr"] = psnr_geom(
        ref_pts, deg_pts, "d2", bandwidth_from=args.bandwidth_from,
        workers=args.threads or 1,
    )
    heat, mean_dist = error_heatmap(ref_pts, deg_pts,
                                    workers=args.threads or 1)
    report["mean_euclid"] = mean_dist
    if args.heatmap:
        save_ply(args.heatmap, heat.points, heat.colors)
    if args.saliency_csv:
        idx, scores = _load_saliency_csv(args.saliency_csv)
        if idx.size and (idx.min() < 0 or idx.max() >= ref.n):
            raise DataError("saliency csv indices out of range")
        vis = np.zeros(ref.n, dtype=bool)
        vis[idx] = True
        order = np.argsort(idx)
        labels = layer_partition(scores[order], vis)
        layers = layer_report(labels, ref.points, deg.points,
                              workers=args.threads or 1)
        report["layers"] = {str(k): v for k, v in layers.items()}
    _emit(report, args.report)
    return 0


def cmd_sweep(args) -> int:
    if len(args.thresholds) < 2:
        raise UsageError("sweep needs at least two --thresholds")
    config = _resolve_config(args)
    cloud = load_ply(args.input)
    prep = prepare_cloud(cloud.points, config)
    ref = prep.voxels.astype(np.float64)
    vis = prep.visible_mask
    rows = []
    for s_thresh in args.thresholds:
        cfg = replace(config, s_thresh=float(s_thresh))
        try:
            enc = encode_prepared(prep, cfg)
            dec = decode_pipeline(enc.stream, cfg)
            n = prep.voxels.shape[0]
            # scored on the visible portion, matching evaluate --stream
            row = {
                "s_thresh": float(s_thresh),
                "bpp": enc.bpp,
                "delta_bpp": 8.0 * enc.sections["deltas"] / n,
                "d1_psnr": psnr_geom(ref[vis], dec.points[vis], "d1"),
                "d2_psnr": psnr_geom(ref[vis], dec.points[vis], "d2"),
                "status": "ok",
            }
        except (DataError, StreamError, NumericalError) as exc:
            row = {
                "s_thresh": float(s_thresh), "bpp": "", "delta_bpp": "",
                "d1_psnr": "", "d2_psnr": "", "status": f"error: {exc}",
            }
        rows.append(row)
    fieldnames = ["s_thresh", "bpp", "delta_bpp", "d1_psnr", "d2_psnr",
                  "status"]
    with open(args.output, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        for row in rows:
            writer.writerow({
                k: (f"{v:.17g}" if isinstance(v, float) else v)
                for k, v in row.items()
            })
    ok = [r for r in rows if r["status"] == "ok"]
    _emit({
        "version": __version__,
        "rows": len(rows),
        "ok": len(ok),
        "output": args.output,
        "config": config.to_dict(),
    }, args.report)
    return 0


def _load_sweep_csv(path, metric):
    rates = []
    psnrs = []
    with open(path, encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        need = {"bpp", metric, "status"}
        if reader.fieldnames is None or not need <= set(reader.fieldnames):
            raise DataError(f"{path}: not a sweep csv (missing {need})")
        for row in reader:
            if row["status"] != "ok":
                continue
            rates.append(float(row["bpp"]))
            psnrs.append(float(row[metric]))
    return np.asarray(rates), np.asarray(psnrs)


def cmd_bdpsnr(args) -> int:
    metric = f"{args.metric}_psnr"
    ra, pa = _load_sweep_csv(args.curve_a, metric)
    rb, pb = _load_sweep_csv(args.curve_b, metric)
    value = bd_psnr(ra, pa, rb, pb)
    _emit({
        "version": __version__,
        "metric": args.metric,
        "bd_psnr": value,
        "curve_a": args.curve_a,
        "curve_b": args.curve_b,
    }, args.report)
    return 0


def cmd_saliency(args) -> int:
    config = _resolve_config(args)
    if config.uniform:
        raise UsageError("saliency command requires saliency mode")
    cloud = load_ply(args.input)
    prep = prepare_cloud(cloud.points, config)
    bundle = prep.saliency
    idx = np.flatnonzero(prep.visible_mask)
    with open(args.output, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "a", "s1", "s2", "s3", "s4", "s"])
        for row in zip(idx, prep.a[idx], bundle.s1, bundle.s2, bundle.s3,
                       bundle.s4, bundle.s):
            writer.writerow([int(row[0])] + [f"{v:.17g}" for v in row[1:]])
    if args.heatmap:
        full = np.zeros(prep.voxels.shape[0])
        full[idx] = bundle.s
        colors = ramp_colors(full)
        colors[~prep.visible_mask] = (128, 128, 128)
        save_ply(args.heatmap, prep.voxels.astype(np.float64), colors)
    if args.save_voxelized:
        save_ply(args.save_voxelized, prep.voxels.astype(np.float64))
    _emit({
        "version": __version__,
        "n": int(prep.voxels.shape[0]),
        "n_visible": int(prep.visible_mask.sum()),
        "s_mean": float(bundle.s.mean()),
        "output": args.output,
        "config": config.to_dict(),
    }, args.report)
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="salpcc", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("encode", help="PLY to .sapc stream")
    p.add_argument("input")
    p.add_argument("output")
    _add_config_flags(p)
    p.add_argument("--save-voxelized", dest="save_voxelized",
                   help="write the voxelized reference PLY")
    p.add_argument("--report", help="also write the JSON report here")
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode", help=".sapc stream to PLY")
    p.add_argument("input")
    p.add_argument("output")
    _add_solver_flags(p)
    p.add_argument("--threads", type=int)
    p.add_argument("--report")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("evaluate", help="quality metrics for two PLYs")
    p.add_argument("reference")
    p.add_argument("degraded")
    p.add_argument("--stream", help=".sapc for bpp and the visibility mask")
    p.add_argument("--no-mask-restrict", action="store_true",
                   help="keep the full reference even when a stream is given")
    p.add_argument("--saliency-csv", dest="saliency_csv",
                   help="per-point saliency for the layer table")
    p.add_argument("--heatmap", help="write an error heatmap PLY")
    p.add_argument("--bandwidth-from", dest="bandwidth_from",
                   choices=["degraded", "reference"], default="degraded")
    p.add_argument("--threads", type=int)
    p.add_argument("--report")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", help="rate-distortion sweep over s_thresh")
    p.add_argument("input")
    p.add_argument("output", help="CSV path")
    p.add_argument("--thresholds", type=_float_list, required=True,
                   help="comma-separated s_thresh values (need >= 2)")
    _add_config_flags(p)
    _add_solver_flags(p)
    p.add_argument("--report")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("bdpsnr", help="curve gap between two sweep CSVs")
    p.add_argument("curve_a")
    p.add_argument("curve_b")
    p.add_argument("--metric", choices=["d1", "d2"], default="d1")
    p.add_argument("--report")
    p.set_defaults(func=cmd_bdpsnr)

    p = sub.add_parser("saliency", help="per-point saliency CSV and heatmap")
    p.add_argument("input")
    p.add_argument("output", help="CSV path")
    _add_config_flags(p)
    p.add_argument("--heatmap", help="write a saliency-colored PLY")
    p.add_argument("--save-voxelized", dest="save_voxelized")
    p.add_argument("--report")
    p.set_defaults(func=cmd_saliency)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"salpcc: error: {exc}", file=sys.stderr)
        return 1
    except (DataError, PlyError, StreamError, FileNotFoundError,
            IsADirectoryError, PermissionError) as exc:
        print(f"salpcc: error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"salpcc: numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
