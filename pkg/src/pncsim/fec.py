"""LDPC codes (alist I/O, PEG construction, encoding, BP decoding) and interleaving.

LLR sign convention throughout: positive means bit 0 is more likely.
"""

from __future__ import annotations

import io
import math
import os
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from importlib import resources
from typing import IO

import numpy as np
from scipy import sparse

DESK_CODES = {
    "1/5": "peg_n2160_r1-5.alist",
    "2/5": "peg_n2160_r2-5.alist",
    "1/2": "peg_n2160_r1-2.alist",
    "11/15": "peg_n2160_r11-15.alist",
}
TOY_CODE = "peg_n16_r1-2.alist"
# n divisible by 2*N_b for N_b in {1, 2, 3}, for end-to-end chain tests
TOY_CODE_24 = "peg_n24_r1-2.alist"

_LLR_CLIP = 60.0
_PHI_MIN = 1e-15


class AlistError(ValueError):
    """Malformed or inconsistent alist file."""


class UnsupportedCodeError(ValueError):
    """Parity-check structure that cannot be used for encoding/decoding."""


# ---------------------------------------------------------------------------
# alist I/O


def parse_alist(text: str) -> tuple[int, int, list[list[int]]]:
    """Parse alist text into ``(n, m, column_lists)`` with 0-based row indices.

    Layout (all indices 1-based, zero entries are padding)::

        n m
        max_col_degree max_row_degree
        n column degrees
        m row degrees
        n lines: row indices of each column
        m lines: column indices of each row

    The row and column lists must describe the same matrix.
    """
    tokens = text.split()
    try:
        vals = [int(t) for t in tokens]
    except ValueError as exc:
        raise AlistError(f"non-integer token in alist: {exc}") from None
    pos = 0

    def take(count):
        nonlocal pos
        if pos + count > len(vals):
            raise AlistError("alist file truncated")
        out = vals[pos:pos + count]
        pos += count
        return out

    n, m = take(2)
    if n <= 0 or m <= 0:
        raise AlistError("dimensions must be positive")
    max_cd, max_rd = take(2)
    col_deg = take(n)
    row_deg = take(m)
    if max(col_deg) > max_cd or max(row_deg) > max_rd:
        raise AlistError("declared maximum degree smaller than an actual degree")
    if sum(col_deg) != sum(row_deg):
        raise AlistError("column and row degree sums differ")

    # Column lists may be padded to max_cd entries with zeros, or not padded.
    # Try padded first and fall back to exact-degree layout.
    def read_lists(degs, maxdeg, limit, what):
        nonlocal pos
        start = pos
        for padded in (True, False):
            pos = start
            lists = []
            ok = True
            for d in degs:
                width = maxdeg if padded else d
                if pos + width > len(vals):
                    ok = False
                    break
                entries = vals[pos:pos + width]
                pos += width
                nz = [e for e in entries if e != 0]
                if len(nz) != d or any(e < 0 for e in entries):
                    ok = False
                    break
                lists.append(nz)
            if ok:
                for idx, lst in enumerate(lists):
                    bad = [e for e in lst if e > limit]
                    if bad:
                        raise AlistError(f"{what} {idx + 1} lists index {bad[0]} > {limit}")
                    if len(set(lst)) != len(lst):
                        raise AlistError(f"{what} {idx + 1} repeats an index")
                return lists
        raise AlistError(f"{what} lists do not match declared degrees")

    cols = read_lists(col_deg, max_cd, m, "column")
    rows = read_lists(row_deg, max_rd, n, "row")
    pairs_c = {(r - 1, j) for j, lst in enumerate(cols) for r in lst}
    pairs_r = {(i, c - 1) for i, lst in enumerate(rows) for c in lst}
    if pairs_c != pairs_r:
        raise AlistError("row and column lists describe different matrices")
    return n, m, [[r - 1 for r in lst] for lst in cols]


def format_alist(H: sparse.spmatrix) -> str:
    H = sparse.csc_matrix(H)
    m, n = H.shape
    cols = [sorted(H.indices[H.indptr[j]:H.indptr[j + 1]].tolist()) for j in range(n)]
    Hr = H.tocsr()
    rows = [sorted(Hr.indices[Hr.indptr[i]:Hr.indptr[i + 1]].tolist()) for i in range(m)]
    cd = [len(c) for c in cols]
    rd = [len(r) for r in rows]
    mc, mr = max(cd), max(rd)
    out = io.StringIO()
    out.write(f"{n} {m}\n{mc} {mr}\n")
    out.write(" ".join(map(str, cd)) + "\n")
    out.write(" ".join(map(str, rd)) + "\n")
    for c in cols:
        out.write(" ".join(str(x + 1) for x in c + [-1] * (mc - len(c))) + "\n")
    for r in rows:
        out.write(" ".join(str(x + 1) for x in r + [-1] * (mr - len(r))) + "\n")
    return out.getvalue()


def write_alist(path: str | os.PathLike, H: sparse.spmatrix) -> None:
    with open(path, "w") as fh:
        fh.write(format_alist(H))


# ---------------------------------------------------------------------------
# GF(2) helpers


def gf2_rref_right(H: np.ndarray) -> tuple[np.ndarray, list[int]]:
    """Row-reduce ``H`` over GF(2), choosing pivot columns from the right.

    Returns the reduced matrix (only the first ``rank`` rows are meaningful)
    and the list of pivot columns, one per reduced row.
    """
    m, n = H.shape
    # reversed column order so the leftmost packed column is the original last one
    A = np.packbits(H[:, ::-1].astype(np.uint8), axis=1)
    pivots = []
    r = 0
    for col in range(n):
        if r == m:
            break
        byte, bit = divmod(col, 8)
        mask = np.uint8(0x80 >> bit)
        colbits = (A[r:, byte] & mask) != 0
        hits = np.flatnonzero(colbits)
        if hits.size == 0:
            continue
        p = r + hits[0]
        if p != r:
            A[[r, p]] = A[[p, r]]
        others = np.flatnonzero((A[:, byte] & mask) != 0)
        others = others[others != r]
        if others.size:
            A[others] ^= A[r]
        pivots.append(n - 1 - col)
        r += 1
    R = np.unpackbits(A, axis=1, count=n)[:, ::-1]
    return R, pivots


# ---------------------------------------------------------------------------
# Code object


@dataclass(frozen=True, eq=False)
class LdpcCode:
    """Binary LDPC code given by a sparse parity-check matrix ``H`` (m x n)."""

    H: sparse.csr_matrix
    name: str = ""
    _enc: dict = field(init=False, repr=False)

    def __post_init__(self):
        H = sparse.csr_matrix(self.H, dtype=np.uint8)
        H.sum_duplicates()
        H.sort_indices()
        m, n = H.shape
        if np.any(np.diff(H.indptr) == 0):
            raise UnsupportedCodeError("parity-check matrix has an empty row")
        if np.any(np.bincount(H.indices, minlength=n) == 0):
            raise UnsupportedCodeError("parity-check matrix has an empty column")
        R, pivots = gf2_rref_right(H.toarray())
        rank = len(pivots)
        if rank < m:
            warnings.warn(f"parity-check matrix is rank deficient ({rank} < {m} rows)",
                          stacklevel=3)
        k = n - rank
        if k <= 0:
            raise UnsupportedCodeError("code has no information bits")
        piv = np.array(pivots, dtype=np.int64)
        free = np.setdiff1d(np.arange(n), piv)
        enc = {"pivots": piv, "info_pos": free, "A": R[:rank][:, free].astype(np.int64)}
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "_enc", enc)

    @property
    def n(self) -> int:
        return self.H.shape[1]

    @property
    def m(self) -> int:
        return self.H.shape[0]

    @property
    def k(self) -> int:
        return self._enc["info_pos"].size

    @property
    def rate(self) -> float:
        return self.k / self.n

    @property
    def info_positions(self) -> np.ndarray:
        return self._enc["info_pos"]

    @property
    def is_systematic_prefix(self) -> bool:
        return bool(np.array_equal(self.info_positions, np.arange(self.k)))

    @cached_property
    def graph(self) -> "_TannerGraph":
        return _TannerGraph(self.H)

    def syndrome(self, bits: np.ndarray) -> np.ndarray:
        bits = np.atleast_2d(np.asarray(bits, dtype=np.int64))
        return np.asarray((self.H @ bits.T) % 2).T.astype(np.uint8)

    def is_codeword(self, bits: np.ndarray) -> np.ndarray | bool:
        ok = ~self.syndrome(bits).any(axis=1)
        return bool(ok[0]) if np.ndim(bits) == 1 else ok


class _TannerGraph:
    """Edge arrays for vectorized message passing, edges sorted by check."""

    def __init__(self, H: sparse.csr_matrix):
        m, n = H.shape
        self.edge_chk = np.repeat(np.arange(m), np.diff(H.indptr))
        self.edge_var = H.indices.astype(np.int64)
        self.chk_starts = H.indptr[:-1].astype(np.int64)
        self.var_perm = np.argsort(self.edge_var, kind="stable")
        counts = np.bincount(self.edge_var, minlength=n)
        self.var_starts = np.concatenate([[0], np.cumsum(counts)[:-1]]).astype(np.int64)


def load_code(source: str | os.PathLike | IO[str], name: str | None = None) -> LdpcCode:
    """Load an LDPC code from an alist file path or open text stream."""
    if hasattr(source, "read"):
        text = source.read()
        label = name or getattr(source, "name", "stream")
    else:
        with open(source) as fh:
            text = fh.read()
        label = name or os.path.basename(os.fspath(source))
    n, m, cols = parse_alist(text)
    rows = np.concatenate([np.array(c, dtype=np.int64) for c in cols])
    colidx = np.repeat(np.arange(n), [len(c) for c in cols])
    H = sparse.csr_matrix((np.ones(rows.size, dtype=np.uint8), (rows, colidx)), shape=(m, n))
    return LdpcCode(H, name=label)


def load_desk_code(rate: str = "1/2") -> LdpcCode:
    """One of the bundled n=2160 PEG codes, keyed by nominal rate string."""
    try:
        fname = DESK_CODES[rate]
    except KeyError:
        raise ValueError(f"no bundled code for rate {rate!r}; have {sorted(DESK_CODES)}") from None
    return _load_bundled(fname)


def load_toy_code(n: int = 16) -> LdpcCode:
    """Bundled (3,6)-regular toy code, n = 16 or 24, for exhaustive tests."""
    if n not in (16, 24):
        raise UnsupportedCodeError(f"no bundled toy code of length {n}")
    return _load_bundled(TOY_CODE if n == 16 else TOY_CODE_24)


def _load_bundled(fname: str) -> LdpcCode:
    with resources.files("pncsim").joinpath("data").joinpath(fname).open("r") as fh:
        return load_code(fh, name=fname)


# ---------------------------------------------------------------------------
# PEG construction


def peg_matrix(n: int, m: int, col_degree: int = 3, seed: int = 0) -> sparse.csr_matrix:
    """Progressive-edge-growth parity-check matrix with constant column degree.

    Each new edge of a variable node goes to a check node at maximum graph
    distance from it (lowest current degree among those, random tie-break).
    """
    if col_degree > m:
        raise ValueError("col_degree exceeds number of checks")
    rng = np.random.default_rng(seed)
    var_adj: list[list[int]] = [[] for _ in range(n)]
    chk_adj: list[list[int]] = [[] for _ in range(m)]
    chk_deg = np.zeros(m, dtype=np.int64)

    def pick(cands: np.ndarray) -> int:
        d = chk_deg[cands]
        best = cands[d == d.min()]
        return int(best[rng.integers(best.size)])

    for j in range(n):
        for e in range(col_degree):
            if e == 0:
                c = pick(np.arange(m))
            else:
                reached = np.zeros(m, dtype=bool)
                reached[var_adj[j]] = True
                frontier_c = list(var_adj[j])
                seen_v = {j}
                while True:
                    prev = reached.copy()
                    nxt_v = {v for cc in frontier_c for v in chk_adj[cc]} - seen_v
                    seen_v |= nxt_v
                    new_c = {cc for v in nxt_v for cc in var_adj[v] if not reached[cc]}
                    if not new_c:
                        cands = np.flatnonzero(~reached)
                        break
                    reached[list(new_c)] = True
                    if reached.all():
                        cands = np.flatnonzero(~prev)
                        break
                    frontier_c = list(new_c)
                if cands.size == 0:
                    cands = np.setdiff1d(np.arange(m), var_adj[j])
                c = pick(cands)
            var_adj[j].append(c)
            chk_adj[c].append(j)
            chk_deg[c] += 1
    rows = np.concatenate([np.array(a) for a in var_adj])
    cols = np.repeat(np.arange(n), col_degree)
    return sparse.csr_matrix((np.ones(rows.size, dtype=np.uint8), (rows, cols)), shape=(m, n))


# ---------------------------------------------------------------------------
# Encoding


def encode(code: LdpcCode, info: np.ndarray) -> np.ndarray:
    """Encode ``k`` info bits (or a batch of shape (B, k)) into codewords."""
    info = np.asarray(info)
    single = info.ndim == 1
    info2 = np.atleast_2d(info).astype(np.int64)
    if info2.shape[1] != code.k:
        raise ValueError(f"expected {code.k} info bits, got {info2.shape[1]}")
    enc = code._enc
    cw = np.zeros((info2.shape[0], code.n), dtype=np.uint8)
    cw[:, enc["info_pos"]] = info2
    cw[:, enc["pivots"]] = (info2 @ enc["A"].T) & 1
    return cw[0] if single else cw


# ---------------------------------------------------------------------------
# Decoding


@dataclass
class DecodeResult:
    bits: np.ndarray
    converged: np.ndarray | bool
    iters_used: np.ndarray | int


def _phi(x: np.ndarray) -> np.ndarray:
    # phi(x) = -log(tanh(x/2)), its own inverse
    x = np.clip(x, _PHI_MIN, _LLR_CLIP)
    e = np.exp(-x)
    return np.log1p(e) - np.log1p(-e)


def decode(code: LdpcCode, llrs: np.ndarray, max_iters: int = 50,
           method: str = "sum_product", min_sum_scale: float = 1.0) -> DecodeResult:
    """Flooding belief-propagation decoding of one frame or a batch (B, n).

    A frame converges once every parity check is satisfied by the hard
    decisions and no bit has exactly zero reliability. Converged frames exit
    early; ``iters_used`` counts completed iterations.
    """
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    if method not in ("sum_product", "min_sum"):
        raise ValueError(f"unknown decoder method {method!r}")
    llrs = np.asarray(llrs, dtype=float)
    single = llrs.ndim == 1
    L = np.atleast_2d(llrs)
    if L.shape[1] != code.n:
        raise ValueError(f"expected {code.n} LLRs per frame, got {L.shape[1]}")
    if not np.all(np.isfinite(L)):
        raise ValueError("LLRs must be finite")
    L = np.clip(L, -_LLR_CLIP, _LLR_CLIP)

    g = code.graph
    B = L.shape[0]
    out_bits = (L < 0).astype(np.uint8)
    converged = np.zeros(B, dtype=bool)
    iters = np.full(B, max_iters, dtype=np.int64)

    active = np.arange(B)
    Lc = L
    c2v = np.zeros((B, g.edge_var.size))
    total = Lc.copy()
    for it in range(1, max_iters + 1):
        v2c = total[:, g.edge_var] - c2v
        mag = np.abs(v2c)
        neg = v2c < 0
        parity = np.add.reduceat(neg.astype(np.int64), g.chk_starts, axis=1) & 1
        sign = 1.0 - 2.0 * (parity[:, g.edge_chk] ^ neg)
        zero = mag == 0.0
        nzero = np.add.reduceat(zero.astype(np.int64), g.chk_starts, axis=1)
        others_zero = (nzero[:, g.edge_chk] - zero) > 0
        if method == "sum_product":
            ph = np.where(zero, 0.0, _phi(mag))
            S = np.add.reduceat(ph, g.chk_starts, axis=1)
            ext = _phi(np.maximum(S[:, g.edge_chk] - ph, 0.0))
        else:
            m1 = np.minimum.reduceat(mag, g.chk_starts, axis=1)
            is_min = mag == m1[:, g.edge_chk]
            nmin = np.add.reduceat(is_min.astype(np.int64), g.chk_starts, axis=1)
            m2 = np.minimum.reduceat(np.where(is_min, np.inf, mag), g.chk_starts, axis=1)
            unique_min = is_min & (nmin[:, g.edge_chk] == 1)
            ext = np.where(unique_min, m2[:, g.edge_chk], m1[:, g.edge_chk])
            ext = min_sum_scale * np.minimum(ext, _LLR_CLIP)
        c2v = np.where(others_zero, 0.0, sign * ext)
        total = Lc + np.add.reduceat(c2v[:, g.var_perm], g.var_starts, axis=1)

        hard = total < 0
        synd = np.add.reduceat(hard[:, g.edge_var].astype(np.int64), g.chk_starts, axis=1) & 1
        done = ~synd.any(axis=1) & np.all(total != 0.0, axis=1)
        idx = active[done]
        out_bits[idx] = hard[done]
        converged[idx] = True
        iters[idx] = it
        if it == max_iters:
            out_bits[active[~done]] = hard[~done]
            break
        if done.any():
            keep = ~done
            active, Lc, c2v, total = active[keep], Lc[keep], c2v[keep], total[keep]
            if active.size == 0:
                break
    if single:
        return DecodeResult(out_bits[0], bool(converged[0]), int(iters[0]))
    return DecodeResult(out_bits, converged, iters)


# ---------------------------------------------------------------------------
# Interleaving


@dataclass(frozen=True)
class Interleaver:
    """Seeded pseudo-random bit interleaver.

    The permutation is a Fisher-Yates shuffle of ``0..length-1`` driven by
    NumPy's PCG64 generator seeded with ``seed``. ``interleave(v)[t] = v[perm[t]]``.
    """

    length: int
    seed: int = 0

    @cached_property
    def permutation(self) -> np.ndarray:
        perm = np.random.Generator(np.random.PCG64(self.seed)).permutation(self.length)
        perm.setflags(write=False)
        return perm

    @cached_property
    def inverse(self) -> np.ndarray:
        inv = np.empty(self.length, dtype=np.int64)
        inv[self.permutation] = np.arange(self.length)
        inv.setflags(write=False)
        return inv

    def _check(self, v: np.ndarray) -> None:
        if v.shape[-1] != self.length:
            raise ValueError(f"expected length {self.length}, got {v.shape[-1]}")

    def interleave(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v)
        self._check(v)
        return v[..., self.permutation]

    def deinterleave(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v)
        self._check(v)
        return v[..., self.inverse]


def interleave(v: np.ndarray, ilv: Interleaver) -> np.ndarray:
    return ilv.interleave(v)


def deinterleave(v: np.ndarray, ilv: Interleaver) -> np.ndarray:
    return ilv.deinterleave(v)


def ml_decode_exhaustive(code: LdpcCode, llrs: np.ndarray) -> np.ndarray:
    """Maximum-likelihood codeword by enumerating all ``2**k`` codewords (small k only)."""
    if code.k > 20:
        raise ValueError("exhaustive ML limited to k <= 20")
    infos = ((np.arange(2**code.k)[:, None] >> np.arange(code.k)[None, :]) & 1).astype(np.uint8)
    cws = encode(code, infos)
    metric = (1 - 2 * cws.astype(float)) @ np.asarray(llrs, dtype=float)
    return cws[int(np.argmax(metric))]
