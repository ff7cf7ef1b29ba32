"""Binary LDPC codes: PEG construction, systematic encoding, min-sum decoding.

LLR sign convention: positive favours bit 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np


def gf2_rref(mat: np.ndarray):
    """Reduced row echelon form over GF(2); returns (R, pivot_columns)."""
    r = (np.asarray(mat) % 2).astype(np.uint8).copy()
    rows, cols = r.shape
    pivots = []
    row = 0
    for c in range(cols):
        if row == rows:
            break
        hits = np.nonzero(r[row:, c])[0]
        if hits.size == 0:
            continue
        p = row + hits[0]
        if p != row:
            r[[row, p]] = r[[p, row]]
        mask = r[:, c].astype(bool)
        mask[row] = False
        r[mask] ^= r[row]
        pivots.append(c)
        row += 1
    return r[:row], pivots


def gf2_rank(mat: np.ndarray) -> int:
    return len(gf2_rref(mat)[1])


@dataclass(frozen=True, eq=False)
class LDPCCode:
    """Parity-check matrix ``H`` [m, n] and derived systematic generator ``G`` [k, n].

    Message bits occupy ``info_positions`` of each codeword unchanged.
    """

    H: np.ndarray
    G: np.ndarray = field(init=False)
    info_positions: np.ndarray = field(init=False)

    def __post_init__(self):
        H = (np.asarray(self.H) % 2).astype(np.uint8)
        m, n = H.shape
        R, pivots = gf2_rref(H)
        if len(pivots) != m:
            raise ValueError(f"parity-check matrix is rank deficient ({len(pivots)} < {m})")
        free = np.array([c for c in range(n) if c not in set(pivots)], dtype=np.int64)
        k = n - m
        G = np.zeros((k, n), dtype=np.uint8)
        G[np.arange(k), free] = 1
        G[:, pivots] = R[:, free].T
        if ((G.astype(np.int64) @ H.T.astype(np.int64)) % 2).any():
            raise AssertionError("G H^T != 0 over GF(2)")
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "G", G)
        object.__setattr__(self, "info_positions", free)
        self.H.setflags(write=False)
        self.G.setflags(write=False)

    @property
    def n(self) -> int:
        return self.H.shape[1]

    @property
    def m(self) -> int:
        return self.H.shape[0]

    @property
    def k(self) -> int:
        return self.n - self.m

    @property
    def rate(self) -> float:
        return self.k / self.n

    def syndrome(self, words: np.ndarray) -> np.ndarray:
        # float matmul goes through BLAS; counts stay exact far below 2**53
        return (np.asarray(words, dtype=np.float64) @ self._Hf.T).astype(np.int64) % 2

    @property
    def _Hf(self) -> np.ndarray:
        hf = self.__dict__.get("_hf_cache")
        if hf is None:
            hf = self.H.astype(np.float64)
            object.__setattr__(self, "_hf_cache", hf)
        return hf

    @property
    def _edges(self):
        cache = self.__dict__.get("_edge_cache")
        if cache is None:
            cache = _EdgeLayout(self.H)
            object.__setattr__(self, "_edge_cache", cache)
        return cache


class _EdgeLayout:
    """Padded per-check and per-variable edge index tables for vectorized BP."""

    def __init__(self, H: np.ndarray):
        chk, var = np.nonzero(H)  # row-major: edges grouped by check
        self.n_edges = chk.size
        self.edge_var = var
        m, n = H.shape
        dc = np.bincount(chk, minlength=m)
        dv = np.bincount(var, minlength=n)
        pad = self.n_edges  # index of a dummy edge
        self.check_edges = np.full((m, dc.max()), pad, dtype=np.int64)
        self.var_edges = np.full((n, dv.max()), pad, dtype=np.int64)
        fill_c = np.zeros(m, dtype=np.int64)
        fill_v = np.zeros(n, dtype=np.int64)
        for e, (c, v) in enumerate(zip(chk, var)):
            self.check_edges[c, fill_c[c]] = e
            fill_c[c] += 1
            self.var_edges[v, fill_v[v]] = e
            fill_v[v] += 1


def peg_code(n: int, var_degree: int = 3, check_degree: int = 6, seed: int = 0,
             max_tries: int = 20) -> LDPCCode:
    """Regular (var_degree, check_degree) code by progressive edge growth.

    Each new edge of a variable node goes to a check node as far away as
    possible in the current graph (lowest current degree among the
    candidates, ties broken by ``seed``), which keeps short cycles out.
    """
    return _peg_cached(int(n), int(var_degree), int(check_degree), int(seed), int(max_tries))


@lru_cache(maxsize=8)
def _peg_cached(n, dv, dc, seed, max_tries):
    if (n * dv) % dc:
        raise ValueError(f"n*dv must be divisible by dc, got n={n}, dv={dv}, dc={dc}")
    m = n * dv // dc
    for attempt in range(max_tries):
        H = _peg_matrix(n, m, dv, dc, np.random.default_rng([seed, attempt]))
        if gf2_rank(H) == m:
            return LDPCCode(H)
    raise RuntimeError(f"PEG failed to produce a full-rank ({dv},{dc}) code with n={n}")


def _peg_matrix(n, m, dv, dc, rng):
    H = np.zeros((m, n), dtype=np.uint8)
    deg = np.zeros(m, dtype=np.int64)
    Hb = np.zeros((m, n), dtype=bool)
    for j in range(n):
        for e in range(dv):
            open_ = (deg < dc) & ~Hb[:, j]
            if e == 0:
                cand = open_
            else:
                reached = Hb[:, j].copy()
                while True:
                    vars_ = Hb[reached].any(axis=0)
                    nxt = Hb[:, vars_].any(axis=1) | reached
                    if nxt.sum() == reached.sum() or (open_ & ~nxt).sum() == 0:
                        break
                    reached = nxt
                cand = open_ & ~reached
                if not cand.any():
                    cand = open_
            idx = np.flatnonzero(cand)
            best = idx[deg[idx] == deg[idx].min()]
            c = best[rng.integers(best.size)]
            H[c, j] = 1
            Hb[c, j] = True
            deg[c] += 1
    return H


def extended_hamming_8() -> LDPCCode:
    """[8, 4, 4] extended Hamming code, the n=8 toy code for exhaustive checks.

    A 4x8 (3,6)-regular matrix necessarily repeats columns (minimum distance
    2), so the toy code is irregular. This basis of weight-4 checks is one
    on which scaled min-sum corrects every single-bit error.
    """
    H = np.array([
        [0, 0, 0, 0, 1, 1, 1, 1],
        [0, 0, 1, 1, 0, 0, 1, 1],
        [0, 1, 0, 1, 0, 1, 0, 1],
        [1, 0, 0, 1, 0, 1, 1, 0],
    ], dtype=np.uint8)
    return LDPCCode(H)


def ldpc_encode(bits: np.ndarray, code: LDPCCode) -> np.ndarray:
    """Encode ``bits`` [k] or [B, k] into codewords [n] or [B, n]."""
    bits = np.asarray(bits)
    if bits.shape[-1] != code.k:
        raise ValueError(f"ldpc_encode: expected {code.k} message bits, got {bits.shape[-1]}")
    return ((bits.astype(np.float64) @ code.G.astype(np.float64)).astype(np.int64) % 2).astype(np.uint8)


def min_sum(llr: np.ndarray, code: LDPCCode, max_iters: int = 50, scale: float = 0.75):
    """Scaled (normalized) min-sum belief propagation.

    Returns ``(hard codewords, success flags, iterations used)``. A block
    succeeds once its hard decision has zero syndrome; iteration count 0 means
    the channel decision was already a codeword.
    """
    llr = np.asarray(llr, dtype=np.float64)
    single = llr.ndim == 1
    L = np.atleast_2d(llr)
    if L.shape[1] != code.n:
        raise ValueError(f"min_sum: expected {code.n} LLRs per block, got {L.shape[1]}")
    ed = code._edges
    B = L.shape[0]
    hard = (L < 0).astype(np.uint8)
    success = ~code.syndrome(hard).any(axis=1)
    iters = np.zeros(B, dtype=np.int64)
    active = np.flatnonzero(~success)
    r = np.zeros((active.size, ed.n_edges + 1))  # last column: dummy edge
    for it in range(1, max_iters + 1):
        if active.size == 0:
            break
        La = L[active]
        # variable -> check
        total = La + r[:, ed.var_edges].sum(axis=2)
        q = total[:, ed.edge_var] - r[:, :-1]
        # check -> variable, in [block, check, slot] layout
        qc = np.concatenate([q, np.full((active.size, 1), np.inf)], axis=1)[:, ed.check_edges]
        mag = np.abs(qc)
        neg = qc < 0
        arg1 = mag.argmin(axis=2)[:, :, None]
        min1 = np.take_along_axis(mag, arg1, axis=2)
        np.put_along_axis(mag, arg1, np.inf, axis=2)
        min2 = mag.min(axis=2, keepdims=True)
        ext = np.broadcast_to(min1, mag.shape).copy()
        np.put_along_axis(ext, arg1, min2, axis=2)
        # sign of the product over the other edges: parity of negatives excluding self
        odd = (neg.sum(axis=2, keepdims=True) % 2).astype(bool) ^ neg
        msg = np.where(odd, -scale, scale) * ext
        r[:, ed.check_edges] = msg
        r[:, -1] = 0.0
        post = La + r[:, ed.var_edges].sum(axis=2)
        h = (post < 0).astype(np.uint8)
        ok = ~code.syndrome(h).any(axis=1)
        hard[active] = h
        iters[active] = it
        success[active[ok]] = True
        active = active[~ok]
        r = r[~ok]
    if single:
        return hard[0], bool(success[0]), int(iters[0])
    return hard, success, iters


def ldpc_decode(llr: np.ndarray, code: LDPCCode, max_iters: int = 50, scale: float = 0.75):
    """Decode LLRs to message bits; returns ``(bits, success)``."""
    hard, success, _ = min_sum(llr, code, max_iters, scale)
    return hard[..., code.info_positions], success
