"""End-to-end encode and decode pipelines with per-stage timing.

The geometry stages (voxelize, graph, normals, visibility, saliency) do
not depend on s_thresh, so a sweep reuses them across thresholds via
PreparedCloud.
"""

import time
from dataclasses import dataclass

import numpy as np

from . import __version__
from .codec import (
    AnchorSet,
    anchor_count,
    encode_stream,
    measure_bpp,
    quantize_deltas,
    quantize_scales,
    section_sizes,
    select_anchors,
)
from .config import CodecConfig
from .errors import DataError
from .geometry import delta_coordinates, estimate_normals, knn_indices
from .reconstruct import assemble_problem, reconstruct
from .saliency import SaliencyBundle, compute_saliency
from .view import CameraPose, classify_visible, project, visibility_operator


@dataclass
class PreparedCloud:
    """Everything before quantization; s_thresh-independent."""

    voxels: np.ndarray  # (n, 3) int64
    neighbors: np.ndarray  # (n, k_n) int64
    normals: np.ndarray  # (n, 3)
    cam: CameraPose
    a: np.ndarray  # (n,) visibility scores
    visible_mask: np.ndarray  # (n,) bool
    depths: np.ndarray  # (n,)
    saliency: SaliencyBundle | None  # None in uniform mode
    scales_visible: np.ndarray  # (n_v,) float in [0, 1]
    deltas: np.ndarray  # (n, 3)
    anchors: AnchorSet
    timings: dict


@dataclass
class EncodeResult:
    stream: bytes
    prepared: PreparedCloud
    bpp: float
    sections: dict
    timings: dict


def prepare_cloud(points, config: CodecConfig) -> PreparedCloud:
    """Voxelize and run the geometry stages once."""
    from .pointcloud import voxelize

    timings = {}
    t0 = time.perf_counter()
    vox = voxelize(points, config.depth)
    pts = vox.astype(np.float64)
    n = vox.shape[0]
    timings["voxelize"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    k_eff = min(config.k_n, n - 1)
    if k_eff >= 1:
        neighbors = knn_indices(pts, k_eff, workers=config.threads)
    else:
        neighbors = np.zeros((n, 0), dtype=np.int64)
    timings["graph"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    if k_eff >= 1:
        normals = estimate_normals(pts, neighbors)
    else:
        normals = np.tile(np.array([0.0, 0.0, 1.0]), (n, 1))
    timings["normals"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    cam = config.camera_for(pts)
    proj = project(pts, cam)
    if n == 1:
        a = proj.in_frustum.astype(np.float64)
    else:
        k_a_eff = min(config.k_a, n - 1)
        a = visibility_operator(proj, k_a=k_a_eff, workers=config.threads)
    mask = classify_visible(a).visible_mask
    timings["visibility"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    if config.uniform:
        bundle = None
        scales = np.full(int(mask.sum()), float(config.uniform_value))
    else:
        bundle = compute_saliency(
            pts[mask], normals[mask], a[mask], proj.depths[mask], cam,
            k_g=config.k_g, m=config.m, weights=config.weights(),
            strict_paper_mode=config.strict_paper_mode,
            workers=config.threads,
        )
        scales = bundle.s
    timings["saliency"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    if k_eff >= 1:
        deltas = delta_coordinates(pts, neighbors)
    else:
        deltas = pts.copy()
    anchors = select_anchors(vox, anchor_count(n))
    timings["deltas"] = time.perf_counter() - t0

    return PreparedCloud(
        voxels=vox, neighbors=neighbors, normals=normals, cam=cam, a=a,
        visible_mask=mask, depths=proj.depths, saliency=bundle,
        scales_visible=scales, deltas=deltas, anchors=anchors,
        timings=timings,
    )


def encode_prepared(prep: PreparedCloud, config: CodecConfig) -> EncodeResult:
    """Quantize and serialize a prepared cloud at config.s_thresh."""
    timings = dict(prep.timings)
    t0 = time.perf_counter()
    codes = quantize_scales(prep.scales_visible, config.s_thresh)
    quant = quantize_deltas(
        prep.deltas, prep.visible_mask, codes, config.s_thresh
    )
    timings["quantize"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    stream = encode_stream(
        prep.voxels, prep.neighbors, prep.visible_mask, quant, prep.anchors
    )
    timings["entropy"] = time.perf_counter() - t0

    n = prep.voxels.shape[0]
    return EncodeResult(
        stream=stream, prepared=prep, bpp=measure_bpp(stream, n),
        sections=section_sizes(stream), timings=timings,
    )


def encode_pipeline(points, config: CodecConfig) -> EncodeResult:
    return encode_prepared(prepare_cloud(points, config), config)


@dataclass
class DecodeResult:
    points: np.ndarray  # (n, 3) float64 in voxel units
    n: int
    solve: "object"  # SolveReport
    timings: dict


def decode_pipeline(stream: bytes, config: CodecConfig) -> DecodeResult:
    from .codec import decode_stream

    timings = {}
    t0 = time.perf_counter()
    dec = decode_stream(stream)
    timings["parse"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    problem = assemble_problem(dec, tol=config.tol, maxiter=config.maxiter)
    timings["assemble"] = time.perf_counter() - t0

    points, report = reconstruct(problem, backend=config.backend)
    timings["solve"] = report.wall_time

    return DecodeResult(points=points, n=dec.n, solve=report, timings=timings)


def encode_report(result: EncodeResult, config: CodecConfig) -> dict:
    n = result.prepared.voxels.shape[0]
    return {
        "version": __version__,
        "n": int(n),
        "n_visible": int(result.prepared.visible_mask.sum()),
        "bpp": result.bpp,
        "bytes": len(result.stream),
        "sections": result.sections,
        "timings": {k: round(v, 6) for k, v in result.timings.items()},
        "config": config.to_dict(),
    }


def decode_report(result: DecodeResult, config: CodecConfig) -> dict:
    return {
        "version": __version__,
        "n": result.n,
        "backend": result.solve.backend,
        "iterations": result.solve.iterations,
        "residual": result.solve.residual,
        "converged": result.solve.converged,
        "unanchored_components": result.solve.unanchored_components,
        "timings": {k: round(v, 6) for k, v in result.timings.items()},
        "config": config.to_dict(),
    }
