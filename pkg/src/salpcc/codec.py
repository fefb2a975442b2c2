"""Saliency-scaled delta quantization and the coded stream format.

Stream layout, all multi-byte fields little-endian:

    "SAPC" | version u8 | k_n u8 | n u32 | k_c u32 | s_thresh f32
    | 5 section lengths u32
    | anchors (k_c x (index u32 + 3 coords u32))
    | visibility bitmask (1 bit per point, LSB-first, byte-padded)
    | entropy(scale codes, one byte per visible point)
    | entropy(adjacency, zigzag(j - i) varints, n * k_n values)
    | entropy(quantized deltas, zigzag varints, 3n values)

File extension: .sapc
"""

import struct
from dataclasses import dataclass

import numpy as np

from .entropy import (
    arithmetic_decode,
    arithmetic_encode,
    decode_zigzag_varints,
    encode_zigzag_varints,
)
from .errors import DataError, StreamError

MAGIC = b"SAPC"
VERSION = 1
HEADER = struct.Struct("<4sBBIIf5I")
_ANCHOR_BYTES = 16  # u32 index + 3 u32 coords


def round_half_away(x) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    return np.copysign(np.floor(np.abs(arr) + 0.5), arr)


def morton_codes(coords) -> np.ndarray:
    """Z-order code per row; x occupies the least significant bit lane.

    Coordinates must be non-negative and below 2^21 per axis (63 bits
    interleaved), which covers every voxelization depth we accept.
    """
    c = np.asarray(coords)
    if c.ndim != 2 or c.shape[1] != 3:
        raise DataError(f"expected (n, 3) coordinates, got {c.shape}")
    if c.size and (c.min() < 0 or c.max() >= (1 << 21)):
        raise DataError("coordinates must be in [0, 2^21)")
    out = np.zeros(c.shape[0], dtype=np.uint64)
    for axis in range(3):
        x = c[:, axis].astype(np.uint64)
        x = (x | (x << np.uint64(32))) & np.uint64(0x1F00000000FFFF)
        x = (x | (x << np.uint64(16))) & np.uint64(0x1F0000FF0000FF)
        x = (x | (x << np.uint64(8))) & np.uint64(0x100F00F00F00F00F)
        x = (x | (x << np.uint64(4))) & np.uint64(0x10C30C30C30C30C3)
        x = (x | (x << np.uint64(2))) & np.uint64(0x1249249249249249)
        out |= x << np.uint64(axis)
    return out


def anchor_count(n: int) -> int:
    """1% of the points, round-half-up, at least one."""
    return max(1, int(np.floor(0.01 * n + 0.5)))


@dataclass
class AnchorSet:
    indices: np.ndarray  # (k_c,) int64, strictly increasing
    coords: np.ndarray  # (k_c, 3) int64 voxel coordinates


def select_anchors(voxels, k_c: int) -> AnchorSet:
    """Every floor(n/k_c)-th vertex of the Morton-sorted order.

    The stride walk runs over the space-filling order, so anchors come
    out spatially spread; they are then stored by ascending index.
    """
    vox = np.asarray(voxels, dtype=np.int64)
    n = vox.shape[0]
    if k_c < 1:
        raise DataError(f"k_c must be >= 1, got {k_c}")
    if k_c > n:
        raise DataError(f"k_c = {k_c} exceeds point count {n}")
    codes = morton_codes(vox)
    order = np.argsort(codes, kind="stable")
    stride = n // k_c
    picked = order[::stride][:k_c]
    idx = np.sort(picked)
    return AnchorSet(indices=idx, coords=vox[idx])


def quantize_scales(s, s_thresh: float) -> np.ndarray:
    """8-bit scale codes; the floor clamp keeps every scale positive."""
    if s_thresh <= 0:
        raise DataError(f"s_thresh must be positive, got {s_thresh}")
    arr = np.asarray(s, dtype=np.float64)
    if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
        raise DataError("saliency values must lie in [0, 1]")
    return np.clip(round_half_away(255.0 * arr), 1, 255).astype(np.uint8)


def sigma_hat(scale_codes, s_thresh: float) -> np.ndarray:
    """Per-point quantization scale as the decoder computes it.

    s_thresh passes through the f32 header field, so both sides start
    from the same rounded value.
    """
    s32 = float(np.float32(s_thresh))
    return s32 * scale_codes.astype(np.float64) / 255.0


@dataclass
class QuantizedDeltas:
    q: np.ndarray  # (n, 3) int64, zero on non-visible rows
    scale_codes: np.ndarray  # (n_v,) uint8 in mask order
    s_thresh: float


def quantize_deltas(deltas, visible_mask, scale_codes, s_thresh: float) -> QuantizedDeltas:
    d = np.asarray(deltas, dtype=np.float64)
    mask = np.asarray(visible_mask, dtype=bool)
    codes = np.asarray(scale_codes, dtype=np.uint8)
    if codes.shape[0] != int(mask.sum()):
        raise DataError("one scale code per visible point required")
    q = np.zeros(d.shape, dtype=np.int64)
    sig = sigma_hat(codes, s_thresh)
    q[mask] = round_half_away(sig[:, None] * d[mask]).astype(np.int64)
    return QuantizedDeltas(q=q, scale_codes=codes, s_thresh=s_thresh)


@dataclass
class DecodedStream:
    n: int
    k_n: int
    s_thresh: float
    anchors: AnchorSet
    visible_mask: np.ndarray  # (n,) bool
    scale_codes: np.ndarray  # (n_v,) uint8
    neighbors: np.ndarray  # (n, k_n) int64
    q: np.ndarray  # (n, 3) int64


def encode_stream(voxels, neighbors, visible_mask, quant: QuantizedDeltas,
                  anchors: AnchorSet) -> bytes:
    vox = np.asarray(voxels, dtype=np.int64)
    nbr = np.asarray(neighbors, dtype=np.int64)
    mask = np.asarray(visible_mask, dtype=bool)
    n = vox.shape[0]
    k_n = nbr.shape[1] if nbr.ndim == 2 else 0
    if n < 1:
        raise DataError("cannot encode an empty cloud")
    if n >= 1 << 32:
        raise DataError(f"point count {n} exceeds the u32 header field")
    if k_n > 255:
        raise DataError(f"k_n = {k_n} exceeds the u8 header field")
    if quant.s_thresh <= 0:
        raise DataError("s_thresh must be positive")

    k_c = anchors.indices.shape[0]
    packed = np.empty((k_c, 4), dtype="<u4")
    packed[:, 0] = anchors.indices
    packed[:, 1:] = anchors.coords
    anchor_bytes = packed.tobytes()

    mask_bytes = np.packbits(mask.astype(np.uint8), bitorder="little").tobytes()
    scales_enc = arithmetic_encode(quant.scale_codes.tobytes())
    adj = (nbr - np.arange(n, dtype=np.int64)[:, None]).ravel()
    adj_enc = encode_zigzag_varints(adj)
    deltas_enc = encode_zigzag_varints(quant.q.ravel())

    header = HEADER.pack(
        MAGIC, VERSION, k_n, n, k_c, quant.s_thresh,
        len(anchor_bytes), len(mask_bytes), len(scales_enc),
        len(adj_enc), len(deltas_enc),
    )
    return b"".join(
        [header, anchor_bytes, mask_bytes, scales_enc, adj_enc, deltas_enc]
    )


def decode_stream(data: bytes) -> DecodedStream:
    if len(data) < HEADER.size:
        raise StreamError(f"stream shorter than the {HEADER.size}-byte header")
    magic, version, k_n, n, k_c, s_thresh, *lengths = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise StreamError(f"bad magic {magic!r}")
    if version != VERSION:
        raise StreamError(f"unsupported version {version}")
    if n < 1:
        raise StreamError("empty stream payload")
    if len(data) != HEADER.size + sum(lengths):
        raise StreamError(
            f"stream length {len(data)} does not match header sections "
            f"{HEADER.size} + {sum(lengths)}"
        )
    off = HEADER.size
    sections = []
    for length in lengths:
        sections.append(data[off:off + length])
        off += length
    anchor_raw, mask_raw, scales_enc, adj_enc, deltas_enc = sections

    if k_c == 0:
        raise StreamError("at least one anchor required")
    if len(anchor_raw) != k_c * _ANCHOR_BYTES:
        raise StreamError("anchor section length mismatch")
    packed = np.frombuffer(anchor_raw, dtype="<u4").reshape(k_c, 4)
    idx = packed[:, 0].astype(np.int64)
    if (np.diff(idx) <= 0).any() or idx[-1] >= n:
        raise StreamError("anchor indices must be strictly increasing and < n")
    anchors = AnchorSet(indices=idx, coords=packed[:, 1:].astype(np.int64))

    if len(mask_raw) != (n + 7) // 8:
        raise StreamError("visibility mask length mismatch")
    bits = np.unpackbits(
        np.frombuffer(mask_raw, dtype=np.uint8), bitorder="little"
    )
    mask = bits[:n].astype(bool)
    if bits[n:].any():
        raise StreamError("visibility mask has padding bits set")
    n_v = int(mask.sum())

    scale_codes = np.frombuffer(
        arithmetic_decode(scales_enc, n_v), dtype=np.uint8
    )
    if n_v and scale_codes.min() < 1:
        raise StreamError("scale code 0 is not decodable")

    adj = decode_zigzag_varints(adj_enc, n * k_n)
    neighbors = adj.reshape(n, k_n) + np.arange(n, dtype=np.int64)[:, None]
    if k_n:
        if neighbors.min() < 0 or neighbors.max() >= n:
            raise StreamError("neighbor index out of range")
        if (neighbors == np.arange(n)[:, None]).any():
            raise StreamError("self-loop in adjacency")

    q = decode_zigzag_varints(deltas_enc, 3 * n).reshape(n, 3)

    return DecodedStream(
        n=n, k_n=k_n, s_thresh=float(s_thresh), anchors=anchors,
        visible_mask=mask, scale_codes=scale_codes, neighbors=neighbors, q=q,
    )


def measure_bpp(stream: bytes, n: int) -> float:
    if n < 1:
        raise DataError(f"need n >= 1, got {n}")
    return 8.0 * len(stream) / n


def section_sizes(stream: bytes) -> dict:
    """Byte count per stream section, header included."""
    if len(stream) < HEADER.size:
        raise StreamError(f"stream shorter than the {HEADER.size}-byte header")
    *_, l_anchor, l_mask, l_scales, l_adj, l_deltas = HEADER.unpack_from(stream)
    return {
        "header": HEADER.size,
        "anchors": l_anchor,
        "mask": l_mask,
        "scales": l_scales,
        "adjacency": l_adj,
        "deltas": l_deltas,
    }
