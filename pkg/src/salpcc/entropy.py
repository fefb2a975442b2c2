"""Adaptive binary arithmetic coder and zig-zag varint packing.

Bytes are coded bit by bit (MSB first) through a 255-node context tree:
the context of a bit is the value of the bits already coded from the same
byte, so the model is an adaptive order-0 byte model. Encoder and decoder
carry a 32-bit range with the usual E1/E2 carry and E3 underflow handling.

Every stream ends with a 32-bit marker coded at fixed p=1/2. The marker
costs four bytes and lets the decoder reject truncated or corrupt input
(false accept probability 2^-32).
"""

import numpy as np
from numba import njit

from .errors import StreamError

_FULL = 0xFFFFFFFF
_HALF = 0x80000000
_QUARTER = 0x40000000
_THREEQ = 0xC0000000
_RESCALE = 1 << 16
_MARKER = 0xA55A5AA5


@njit(cache=True)
def _encode_core(data):
    n = data.size
    cap = 2 * n + 4096
    out = np.zeros(cap, np.uint8)
    c0 = np.ones(256, np.int64)
    c1 = np.ones(256, np.int64)
    low = 0
    high = _FULL
    pending = 0
    pos = 0
    acc = 0
    nacc = 0
    for i in range(n + 4):
        if i < n:
            sym = int(data[i])
            nbits = 8
            adapt = True
        else:
            # fixed-probability end marker, one byte per loop step
            sym = (_MARKER >> (8 * (n + 3 - i))) & 0xFF
            nbits = 8
            adapt = False
        ctx = 1
        for t in range(nbits):
            bit = (sym >> (7 - t)) & 1
            rng = high - low + 1
            if adapt:
                total = c0[ctx] + c1[ctx]
                split = low + rng * c0[ctx] // total - 1
            else:
                split = low + rng // 2 - 1
            if bit == 0:
                high = split
            else:
                low = split + 1
            if adapt:
                if bit == 0:
                    c0[ctx] += 1
                else:
                    c1[ctx] += 1
                if c0[ctx] + c1[ctx] > _RESCALE:
                    c0[ctx] = (c0[ctx] + 1) >> 1
                    c1[ctx] = (c1[ctx] + 1) >> 1
                ctx = (ctx << 1) | bit
            while True:
                if high < _HALF:
                    outbit = 0
                elif low >= _HALF:
                    outbit = 1
                    low -= _HALF
                    high -= _HALF
                elif low >= _QUARTER and high < _THREEQ:
                    pending += 1
                    low -= _QUARTER
                    high -= _QUARTER
                    low = low << 1
                    high = (high << 1) | 1
                    continue
                else:
                    break
                acc = (acc << 1) | outbit
                nacc += 1
                if nacc == 8:
                    out[pos] = acc
                    pos += 1
                    acc = 0
                    nacc = 0
                inv = 1 - outbit
                while pending > 0:
                    acc = (acc << 1) | inv
                    nacc += 1
                    if nacc == 8:
                        out[pos] = acc
                        pos += 1
                        acc = 0
                        nacc = 0
                    pending -= 1
                low = low << 1
                high = (high << 1) | 1
            if pos + 16 >= cap:
                grown = np.zeros(cap * 2, np.uint8)
                grown[:pos] = out[:pos]
                out = grown
                cap = cap * 2
    # disambiguating tail
    pending += 1
    outbit = 0 if low < _QUARTER else 1
    acc = (acc << 1) | outbit
    nacc += 1
    if nacc == 8:
        out[pos] = acc
        pos += 1
        acc = 0
        nacc = 0
    inv = 1 - outbit
    while pending > 0:
        acc = (acc << 1) | inv
        nacc += 1
        if nacc == 8:
            out[pos] = acc
            pos += 1
            acc = 0
            nacc = 0
        pending -= 1
    if nacc > 0:
        out[pos] = (acc << (8 - nacc)) & 0xFF
        pos += 1
    return out[:pos]


@njit(cache=True)
def _decode_core(buf, count):
    nbuf = buf.size
    c0 = np.ones(256, np.int64)
    c1 = np.ones(256, np.int64)
    low = 0
    high = _FULL
    idx = 0
    value = 0
    for _ in range(32):
        nextbit = 0
        if idx < 8 * nbuf:
            nextbit = (buf[idx >> 3] >> (7 - (idx & 7))) & 1
        idx += 1
        value = (value << 1) | nextbit
    out = np.empty(count, np.uint8)
    for i in range(count + 4):
        adapt = i < count
        ctx = 1
        sym = 0
        for t in range(8):
            rng = high - low + 1
            if adapt:
                total = c0[ctx] + c1[ctx]
                split = low + rng * c0[ctx] // total - 1
            else:
                split = low + rng // 2 - 1
            if value <= split:
                bit = 0
                high = split
            else:
                bit = 1
                low = split + 1
            if adapt:
                if bit == 0:
                    c0[ctx] += 1
                else:
                    c1[ctx] += 1
                if c0[ctx] + c1[ctx] > _RESCALE:
                    c0[ctx] = (c0[ctx] + 1) >> 1
                    c1[ctx] = (c1[ctx] + 1) >> 1
                ctx = (ctx << 1) | bit
            sym = (sym << 1) | bit
            while True:
                if high < _HALF:
                    pass
                elif low >= _HALF:
                    low -= _HALF
                    high -= _HALF
                    value -= _HALF
                elif low >= _QUARTER and high < _THREEQ:
                    low -= _QUARTER
                    high -= _QUARTER
                    value -= _QUARTER
                else:
                    break
                nextbit = 0
                if idx < 8 * nbuf:
                    nextbit = (buf[idx >> 3] >> (7 - (idx & 7))) & 1
                idx += 1
                low = low << 1
                high = (high << 1) | 1
                value = (value << 1) | nextbit
        if adapt:
            out[i] = sym
        elif sym != (_MARKER >> (8 * (count + 3 - i))) & 0xFF:
            return out, False
    return out, True


@njit(cache=True)
def _varint_pack(values):
    out = np.empty(10 * values.size + 16, np.uint8)
    pos = 0
    for i in range(values.size):
        v = values[i]
        z = (v << 1) ^ (v >> 63)  # zig-zag, non-negative
        while z >= 0x80:
            out[pos] = 0x80 | (z & 0x7F)
            pos += 1
            z >>= 7
        out[pos] = z
        pos += 1
    return out[:pos]


@njit(cache=True)
def _varint_unpack(data, count):
    out = np.empty(count, np.int64)
    pos = 0
    n = data.size
    for i in range(count):
        z = 0
        shift = 0
        while True:
            if pos >= n:
                return out, False
            b = int(data[pos])
            pos += 1
            z |= (b & 0x7F) << shift
            if b < 0x80:
                break
            shift += 7
            if shift > 63:
                return out, False
        out[i] = (z >> 1) ^ -(z & 1)
    return out, pos == n


@njit(cache=True)
def _decode_varints_core(buf, count):
    """Fused arithmetic decode + varint parse; stops after `count` values."""
    nbuf = buf.size
    c0 = np.ones(256, np.int64)
    c1 = np.ones(256, np.int64)
    low = 0
    high = _FULL
    idx = 0
    value = 0
    for _ in range(32):
        nextbit = 0
        if idx < 8 * nbuf:
            nextbit = (buf[idx >> 3] >> (7 - (idx & 7))) & 1
        idx += 1
        value = (value << 1) | nextbit
    out = np.empty(count, np.int64)
    done = 0
    z = 0
    shift = 0
    markpos = 0
    while True:
        adapt = done < count
        ctx = 1
        sym = 0
        for t in range(8):
            rng = high - low + 1
            if adapt:
                total = c0[ctx] + c1[ctx]
                split = low + rng * c0[ctx] // total - 1
            else:
                split = low + rng // 2 - 1
            if value <= split:
                bit = 0
                high = split
            else:
                bit = 1
                low = split + 1
            if adapt:
                if bit == 0:
                    c0[ctx] += 1
                else:
                    c1[ctx] += 1
                if c0[ctx] + c1[ctx] > _RESCALE:
                    c0[ctx] = (c0[ctx] + 1) >> 1
                    c1[ctx] = (c1[ctx] + 1) >> 1
                ctx = (ctx << 1) | bit
            sym = (sym << 1) | bit
            while True:
                if high < _HALF:
                    pass
                elif low >= _HALF:
                    low -= _HALF
                    high -= _HALF
                    value -= _HALF
                elif low >= _QUARTER and high < _THREEQ:
                    low -= _QUARTER
                    high -= _QUARTER
                    value -= _QUARTER
                else:
                    break
                nextbit = 0
                if idx < 8 * nbuf:
                    nextbit = (buf[idx >> 3] >> (7 - (idx & 7))) & 1
                idx += 1
                low = low << 1
                high = (high << 1) | 1
                value = (value << 1) | nextbit
        if adapt:
            z |= (sym & 0x7F) << shift
            if sym < 0x80:
                out[done] = (z >> 1) ^ -(z & 1)
                done += 1
                z = 0
                shift = 0
            else:
                shift += 7
                if shift > 63:
                    return out, False
        else:
            if sym != (_MARKER >> (8 * (3 - markpos))) & 0xFF:
                return out, False
            markpos += 1
            if markpos == 4:
                return out, True


def arithmetic_encode(data) -> bytes:
    """Compress a byte sequence; always decodable by arithmetic_decode."""
    arr = np.frombuffer(bytes(data), np.uint8) if not isinstance(data, np.ndarray) else data
    return _encode_core(np.ascontiguousarray(arr, dtype=np.uint8)).tobytes()


def arithmetic_decode(data, count: int) -> bytes:
    """Recover exactly `count` bytes; raises StreamError on bad input."""
    if count < 0:
        raise ValueError("count must be non-negative")
    buf = np.frombuffer(bytes(data), np.uint8)
    out, ok = _decode_core(buf, count)
    if not ok:
        raise StreamError("entropy section truncated or corrupt")
    return out.tobytes()


def encode_zigzag_varints(values) -> bytes:
    """Zig-zag + LEB128 the integers, then arithmetic-code the bytes.

    Values must satisfy |v| < 2**62 (zig-zag needs one spare bit).
    """
    arr = np.ascontiguousarray(values, dtype=np.int64)
    return _encode_core(_varint_pack(arr)).tobytes()


def decode_zigzag_varints(data, count: int) -> np.ndarray:
    """Recover `count` signed integers from an encode_zigzag_varints stream."""
    if count < 0:
        raise ValueError("count must be non-negative")
    buf = np.frombuffer(bytes(data), np.uint8)
    out, ok = _decode_varints_core(buf, count)
    if not ok:
        raise StreamError("varint section truncated or corrupt")
    return out
