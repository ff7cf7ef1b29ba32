"""8x8 block-DCT image codec with zigzag run-length and fixed Huffman tables.

Stands in for a conventional still-image codec in the classical chain. Each
channel is coded independently; DC coefficients are sent as differences
from the previous block of the same channel.
"""

from __future__ import annotations

import heapq
import struct
import zlib
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.fft import dctn, idctn

BLOCK = 8
MAGIC = 0xDC7C
HEADER_BITS = 128
MAX_SIZE = 12  # amplitude categories 0..11 cover |coef| < 2048

# standard luminance quantization matrix, scaled by quality
BASE_QTABLE = np.array([
    [16, 11, 10, 16, 24, 40, 51, 61],
    [12, 12, 14, 19, 26, 58, 60, 55],
    [14, 13, 16, 24, 40, 57, 69, 56],
    [14, 17, 22, 29, 51, 87, 80, 62],
    [18, 22, 37, 56, 68, 109, 103, 77],
    [24, 35, 55, 64, 81, 104, 113, 92],
    [49, 64, 78, 87, 103, 121, 120, 101],
    [72, 92, 95, 98, 112, 100, 103, 99],
], dtype=np.float64)


class DecodeFailure(Exception):
    """The bitstream cannot be decoded into an image."""


def quant_table(quality: int) -> np.ndarray:
    if not 1 <= quality <= 100:
        raise ValueError(f"quality must be in [1, 100], got {quality}")
    scale = 5000.0 / quality if quality < 50 else 200.0 - 2.0 * quality
    return np.clip(np.floor((BASE_QTABLE * scale + 50.0) / 100.0), 1, 255)


@lru_cache(maxsize=None)
def zigzag_order() -> np.ndarray:
    idx = sorted(((i, j) for i in range(BLOCK) for j in range(BLOCK)),
                 key=lambda p: (p[0] + p[1], p[1] if (p[0] + p[1]) % 2 == 0 else p[0]))
    return np.array([i * BLOCK + j for i, j in idx])


# ---------------------------------------------------------------------------
# fixed Huffman tables
# ---------------------------------------------------------------------------

EOB = (0, 0)
ZRL = (15, 0)


def _canonical(weights: dict) -> dict:
    """Canonical Huffman code {symbol: (length, code)} from integer weights."""
    heap = [(w, i, (sym,)) for i, (sym, w) in enumerate(sorted(weights.items()))]
    heapq.heapify(heap)
    depth = {sym: 0 for sym in weights}
    tie = len(heap)
    while len(heap) > 1:
        w1, _, s1 = heapq.heappop(heap)
        w2, _, s2 = heapq.heappop(heap)
        for s in s1 + s2:
            depth[s] += 1
        heapq.heappush(heap, (w1 + w2, tie, s1 + s2))
        tie += 1
    code, prev_len, table = 0, 0, {}
    for sym in sorted(weights, key=lambda s: (depth[s], s)):
        code <<= depth[sym] - prev_len
        table[sym] = (depth[sym], code)
        prev_len = depth[sym]
        code += 1
    return table


@lru_cache(maxsize=None)
def dc_table() -> dict:
    weights = {s: max(1, 4096 >> abs(s - 3)) for s in range(MAX_SIZE)}
    weights[0] = 8192  # repeated DC (flat regions) is the most common case
    return _canonical(weights)


@lru_cache(maxsize=None)
def ac_table() -> dict:
    weights = {EOB: 1 << 20, ZRL: 64}
    for run in range(16):
        for size in range(1, MAX_SIZE):
            weights[(run, size)] = max(1, int(1e6 * 0.55 ** run * 0.5 ** size))
    return _canonical(weights)


def _decoder_map(table: dict) -> dict:
    return {(length, code): sym for sym, (length, code) in table.items()}


# ---------------------------------------------------------------------------
# bit I/O
# ---------------------------------------------------------------------------

class _BitWriter:
    def __init__(self):
        self.bits: list = []

    def put(self, value: int, length: int) -> None:
        for k in range(length - 1, -1, -1):
            self.bits.append((value >> k) & 1)

    def array(self) -> np.ndarray:
        return np.array(self.bits, dtype=np.uint8)


class _BitReader:
    def __init__(self, bits: np.ndarray):
        self.bits = bits
        self.pos = 0

    def get(self, length: int) -> int:
        if self.pos + length > self.bits.size:
            raise DecodeFailure("unexpected end of bitstream")
        v = 0
        for b in self.bits[self.pos:self.pos + length]:
            v = (v << 1) | int(b)
        self.pos += length
        return v

    def symbol(self, dmap: dict, max_len: int):
        code = 0
        for length in range(1, max_len + 1):
            code = (code << 1) | self.get(1)
            sym = dmap.get((length, code))
            if sym is not None:
                return sym
        raise DecodeFailure("invalid Huffman code")


def _size(v: int) -> int:
    return int(abs(v)).bit_length()


def _amp_bits(v: int, s: int) -> int:
    return v if v >= 0 else v + (1 << s) - 1


def _amp_value(bits: int, s: int) -> int:
    return bits if bits >> (s - 1) else bits - (1 << s) + 1


# ---------------------------------------------------------------------------
# stream container
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CodecStream:
    height: int
    width: int
    channels: int
    quality: int
    payload: np.ndarray  # uint8 bits

    @property
    def bit_length(self) -> int:
        return int(self.payload.size)

    def _header_fields(self) -> bytes:
        return struct.pack("<HHHBBI", MAGIC, self.height, self.width, self.channels, self.quality, self.bit_length)

    def to_bits(self) -> np.ndarray:
        w = _BitWriter()
        w.put(MAGIC, 16)
        w.put(self.height, 16)
        w.put(self.width, 16)
        w.put(self.channels, 8)
        w.put(self.quality, 8)
        w.put(self.bit_length, 32)
        w.put(zlib.crc32(self._header_fields()) & 0xFFFF, 16)
        w.put(0, 16)
        return np.concatenate([w.array(), self.payload.astype(np.uint8)])

    @classmethod
    def from_bits(cls, bits: np.ndarray) -> "CodecStream":
        """Parse header + payload; trailing padding bits are ignored."""
        bits = np.asarray(bits, dtype=np.uint8)
        r = _BitReader(bits)
        if r.get(16) != MAGIC:
            raise DecodeFailure("bad magic")
        h, w, c, q, n = r.get(16), r.get(16), r.get(8), r.get(8), r.get(32)
        crc = r.get(16)
        r.get(16)
        fields = struct.pack("<HHHBBI", MAGIC, h, w, c, q, n)
        if zlib.crc32(fields) & 0xFFFF != crc:
            raise DecodeFailure("header checksum mismatch")
        if h % BLOCK or w % BLOCK or not h or not w or not c or not 1 <= q <= 100:
            raise DecodeFailure("header fields out of range")
        if HEADER_BITS + n > bits.size:
            raise DecodeFailure(f"bit length {n} exceeds available {bits.size - HEADER_BITS}")
        return cls(h, w, c, q, bits[HEADER_BITS:HEADER_BITS + n].copy())


# ---------------------------------------------------------------------------
# encode / decode
# ---------------------------------------------------------------------------

def _blocks(channel: np.ndarray) -> np.ndarray:
    h, w = channel.shape
    return channel.reshape(h // BLOCK, BLOCK, w // BLOCK, BLOCK).transpose(0, 2, 1, 3).reshape(-1, BLOCK, BLOCK)


def _unblocks(blocks: np.ndarray, h: int, w: int) -> np.ndarray:
    return blocks.reshape(h // BLOCK, w // BLOCK, BLOCK, BLOCK).transpose(0, 2, 1, 3).reshape(h, w)


def dct_codec_encode(x: np.ndarray, quality: int = 75) -> CodecStream:
    """Encode a normalized [C, H, W] image in [-1, 1]."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3 or x.shape[1] % BLOCK or x.shape[2] % BLOCK:
        raise ValueError(f"image sides must be multiples of {BLOCK}, got {x.shape}")
    c, h, w = x.shape
    pix = np.round((np.clip(x, -1.0, 1.0) + 1.0) * 127.5) - 128.0
    q = quant_table(quality)
    zz = zigzag_order()
    dct, act = dc_table(), ac_table()
    wr = _BitWriter()
    for ch in range(c):
        coefs = np.round(dctn(_blocks(pix[ch]), axes=(1, 2), norm="ortho") / q).astype(np.int64)
        prev_dc = 0
        for blk in coefs.reshape(-1, BLOCK * BLOCK)[:, zz]:
            diff = int(blk[0]) - prev_dc
            prev_dc = int(blk[0])
            s = _size(diff)
            wr.put(dct[s][1], dct[s][0])
            if s:
                wr.put(_amp_bits(diff, s), s)
            run = 0
            nz = np.flatnonzero(blk[1:])
            last = nz[-1] + 1 if nz.size else 0
            for v in blk[1:last + 1]:
                v = int(v)
                if v == 0:
                    run += 1
                    continue
                while run > 15:
                    wr.put(act[ZRL][1], act[ZRL][0])
                    run -= 16
                s = _size(v)
                length, code = act[(run, s)]
                wr.put(code, length)
                wr.put(_amp_bits(v, s), s)
                run = 0
            if last < BLOCK * BLOCK - 1:
                wr.put(act[EOB][1], act[EOB][0])
    return CodecStream(h, w, c, int(quality), wr.array())


def dct_codec_decode(stream: CodecStream, strict: bool = True) -> np.ndarray:
    """Decode to a normalized [C, H, W] image.

    With ``strict=False`` a corrupt body does not raise: decoding stops at the
    first bad symbol and the remaining blocks are left flat (garbled output).
    """
    c, h, w = stream.channels, stream.height, stream.width
    nblk = (h // BLOCK) * (w // BLOCK)
    q = quant_table(stream.quality)
    zz = zigzag_order()
    dmap, amap = _decoder_map(dc_table()), _decoder_map(ac_table())
    dmax = max(v[0] for v in dc_table().values())
    amax = max(v[0] for v in ac_table().values())
    coefs = np.zeros((c, nblk, BLOCK * BLOCK))
    r = _BitReader(stream.payload)
    try:
        for ch in range(c):
            prev_dc = 0
            for b in range(nblk):
                zzblk = np.zeros(BLOCK * BLOCK)
                s = r.symbol(dmap, dmax)
                diff = _amp_value(r.get(s), s) if s else 0
                prev_dc += diff
                zzblk[0] = prev_dc
                pos = 1
                while pos < BLOCK * BLOCK:
                    run, s = r.symbol(amap, amax)
                    if (run, s) == EOB:
                        break
                    if (run, s) == ZRL:
                        pos += 16
                        continue
                    pos += run
                    if pos >= BLOCK * BLOCK:
                        raise DecodeFailure("run past end of block")
                    zzblk[pos] = _amp_value(r.get(s), s)
                    pos += 1
                if pos > BLOCK * BLOCK:
                    raise DecodeFailure("run past end of block")
                blk = np.zeros(BLOCK * BLOCK)
                blk[zz] = zzblk
                coefs[ch, b] = blk
        if r.pos != stream.bit_length:
            raise DecodeFailure(f"consumed {r.pos} of {stream.bit_length} payload bits")
    except DecodeFailure:
        if strict:
            raise
    out = np.empty((c, h, w))
    for ch in range(c):
        blocks = idctn(coefs[ch].reshape(-1, BLOCK, BLOCK) * q, axes=(1, 2), norm="ortho")
        out[ch] = _unblocks(blocks, h, w)
    pix = np.clip(np.round(out + 128.0), 0.0, 255.0)
    return pix / 127.5 - 1.0
