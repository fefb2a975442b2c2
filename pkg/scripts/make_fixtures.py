#!/usr/bin/env python3
"""Write the synthetic benchmark clouds as PLY files.

The five named clouds match the ones the test suite scores; blob100k is
the throughput fixture.
"""

import argparse
from pathlib import Path

import numpy as np

from salpcc import synth
from salpcc.ply import save_ply


def jittered_cube():
    rng = np.random.default_rng(11)
    pts = synth.cube_faces()
    return pts + rng.normal(scale=0.001, size=pts.shape)


MAKERS = {
    "plane": synth.plane_grid,
    "sphere": synth.fibonacci_sphere,
    "cube": jittered_cube,
    "torus": synth.noisy_torus,
    "scene": synth.two_object_scene,
    "blob100k": lambda: synth.noisy_blob(100_000, seed=0),
}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("outdir", nargs="?", default="fixtures", type=Path)
    ap.add_argument("--only", choices=sorted(MAKERS), action="append",
                    help="write just these clouds (repeatable)")
    ap.add_argument("--ascii", action="store_true",
                    help="write ascii PLY instead of binary")
    args = ap.parse_args()

    names = args.only or sorted(MAKERS)
    args.outdir.mkdir(parents=True, exist_ok=True)
    fmt = "ascii" if args.ascii else "binary"
    for name in names:
        pts = MAKERS[name]()
        path = args.outdir / f"{name}.ply"
        save_ply(path, pts, fmt=fmt)
        print(f"{path}  {pts.shape[0]} points")


if __name__ == "__main__":
    main()
