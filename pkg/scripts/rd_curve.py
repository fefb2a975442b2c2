#!/usr/bin/env python3
"""Rate-distortion sweep over precision thresholds, printed as a table.

Analysis stages run once; each threshold only re-quantizes and re-codes.
Quality is D1/D2 PSNR on the visible portion (hidden points decode from
the smoothness prior alone, by design). Rates are reported both for the
whole stream and for the delta section, which is the only part the
threshold controls.
"""

import argparse
import csv
import sys
from dataclasses import replace
from pathlib import Path

from salpcc.codec import section_sizes
from salpcc.config import CodecConfig, load_config
from salpcc.metrics import psnr_geom
from salpcc.pipeline import decode_pipeline, encode_prepared, prepare_cloud
from salpcc.ply import load_ply

DEFAULT_THRESHOLDS = (0.05, 0.1, 0.2, 0.5, 1.0)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("input", type=Path, help="point cloud (PLY)")
    ap.add_argument("--thresholds", type=float, nargs="+",
                    default=list(DEFAULT_THRESHOLDS))
    ap.add_argument("--config", type=Path, help="codec config file")
    ap.add_argument("--threads", type=int)
    ap.add_argument("--csv", type=Path, help="also write rows to a CSV")
    args = ap.parse_args()

    cfg = load_config(args.config) if args.config else CodecConfig()
    if args.threads is not None:
        cfg = replace(cfg, threads=args.threads)

    cloud = load_ply(args.input)
    prep = prepare_cloud(cloud.points, cfg)
    ref = prep.voxels.astype(float)
    vis = prep.visible_mask
    print(f"{args.input}: {ref.shape[0]} voxels, "
          f"{int(vis.sum())} visible", file=sys.stderr)

    rows = []
    for s_thresh in args.thresholds:
        cfg_i = replace(cfg, s_thresh=s_thresh)
        enc = encode_prepared(prep, cfg_i)
        dec = decode_pipeline(enc.stream, cfg_i)
        dbpp = 8.0 * section_sizes(enc.stream)["deltas"] / ref.shape[0]
        rows.append({
            "s_thresh": s_thresh,
            "bpp": enc.bpp,
            "delta_bpp": dbpp,
            "d1_psnr": psnr_geom(ref[vis], dec.points[vis], "d1"),
            "d2_psnr": psnr_geom(ref[vis], dec.points[vis], "d2"),
        })

    header = f"{'s_thresh':>9} {'bpp':>8} {'delta_bpp':>9} " \
             f"{'d1_psnr':>8} {'d2_psnr':>8}"
    print(header)
    for r in rows:
        print(f"{r['s_thresh']:>9.4g} {r['bpp']:>8.2f} "
              f"{r['delta_bpp']:>9.3f} {r['d1_psnr']:>8.2f} "
              f"{r['d2_psnr']:>8.2f}")

    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
            writer.writeheader()
            writer.writerows(rows)
        print(f"wrote {args.csv}", file=sys.stderr)


if __name__ == "__main__":
    main()
