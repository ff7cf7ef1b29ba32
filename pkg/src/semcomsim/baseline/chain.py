"""Classical chain: DCT codec -> LDPC -> QAM -> AWGN -> LLR -> min-sum -> codec."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..channel import awgn, sigma_squared
from .codec import CodecStream, DecodeFailure, dct_codec_decode, dct_codec_encode
from .ldpc import LDPCCode, ldpc_decode, ldpc_encode
from .qam import qam_demodulate_llr, qam_modulate

# demodulating a noiseless channel still needs a finite noise variance
_NOISELESS_SIGMA2 = 1e-12


@dataclass(frozen=True)
class BaselineOutcome:
    image: Optional[np.ndarray]
    blocks: int
    failed_blocks: int
    reason: str = ""

    @property
    def failed(self) -> bool:
        return self.image is None


def transmit_bits(bits: np.ndarray, code: LDPCCode, order: int, snr_db: float,
                  rng: np.random.Generator, max_iters: int = 50):
    """Send a bit string through LDPC + QAM + AWGN; returns (bits, per-block success)."""
    bits = np.asarray(bits, dtype=np.uint8)
    nblocks = -(-bits.size // code.k)
    padded = np.zeros(nblocks * code.k, dtype=np.uint8)
    padded[:bits.size] = bits
    words = ldpc_encode(padded.reshape(nblocks, code.k), code)
    symbols = qam_modulate(words.ravel(), order)
    s2 = sigma_squared(snr_db, 1.0)
    rx = awgn(symbols, s2, rng)
    llr = qam_demodulate_llr(rx, max(s2, _NOISELESS_SIGMA2), order).reshape(nblocks, code.n)
    out, ok = ldpc_decode(llr, code, max_iters=max_iters)
    return out.reshape(-1)[:bits.size], np.atleast_1d(ok)


def baseline_transmit(x: np.ndarray, quality: int, code: LDPCCode, order: int, snr_db: float,
                      rng: np.random.Generator, max_iters: int = 50) -> BaselineOutcome:
    """Full classical transmission of one normalized [C, H, W] image.

    The image is lost when the block carrying the codec header fails to
    decode or the recovered header does not parse; other failed blocks only
    garble the picture.
    """
    stream = dct_codec_encode(x, quality)
    bits = stream.to_bits()
    rx_bits, ok = transmit_bits(bits, code, order, snr_db, rng, max_iters)
    nfail = int((~ok).sum())
    if not ok[0]:
        return BaselineOutcome(None, ok.size, nfail, "header block failed")
    try:
        rx_stream = CodecStream.from_bits(rx_bits)
    except DecodeFailure as exc:
        return BaselineOutcome(None, ok.size, nfail, str(exc))
    return BaselineOutcome(dct_codec_decode(rx_stream, strict=False), ok.size, nfail)
