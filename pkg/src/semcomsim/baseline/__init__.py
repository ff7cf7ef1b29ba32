"""Conventional benchmark: transform codec + rate-1/2 LDPC + QAM over AWGN."""

from .chain import BaselineOutcome, baseline_transmit, transmit_bits
from .codec import CodecStream, DecodeFailure, dct_codec_decode, dct_codec_encode
from .ldpc import LDPCCode, extended_hamming_8, ldpc_decode, ldpc_encode, min_sum, peg_code
from .qam import qam_demodulate_llr, qam_modulate

__all__ = [
    "BaselineOutcome", "baseline_transmit", "transmit_bits",
    "CodecStream", "DecodeFailure", "dct_codec_decode", "dct_codec_encode",
    "LDPCCode", "extended_hamming_8", "ldpc_decode", "ldpc_encode", "min_sum", "peg_code",
    "qam_demodulate_llr", "qam_modulate",
]
