"""Iterative erasure decoding of SCC blocks and coupled SCC chains.

Messages are ``int8`` arrays with values 0, 1 or ``ERASED`` (-1).  Component
codes are decoded exactly with the set-propagation BCJR kernel; the outer
and inner decoders exchange extrinsic messages until nothing changes.

Schedules are Gauss-Seidel: within a sweep, a decoder always sees the
newest messages produced earlier in the same sweep.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .construction import Chain, Section
from .errors import ConfigError, InconsistentObservation
from .trellis import Trellis

ERASED = np.int8(-1)


# -- message algebra -------------------------------------------------------

def erased(n) -> np.ndarray:
    return np.full(n, ERASED, dtype=np.int8)


def combine(*msgs) -> np.ndarray:
    """Variable-node rule: a bit is known if any message knows it.

    Two messages that know opposite values cannot happen on the BEC with a
    correct decoder, so that case raises :class:`InconsistentObservation`.
    """
    out = np.array(msgs[0], dtype=np.int8, copy=True)
    for m in msgs[1:]:
        m = np.asarray(m, dtype=np.int8)
        if np.any((out >= 0) & (m >= 0) & (out != m)):
            raise InconsistentObservation("conflicting known messages")
        np.copyto(out, m, where=out < 0)
    return out


def count_erased(msg) -> int:
    return int(np.count_nonzero(np.asarray(msg) < 0))


# -- component decoder -----------------------------------------------------

def bcjr_erasure(trellis: Trellis, sys_obs, par_obs, terminated: bool = True):
    """Extrinsic messages of one convolutional code on the BEC.

    For ``terminated=True`` the observation sequences must include the
    ``nu`` tail steps; the trellis then starts and ends in state 0.  The
    tail inputs need no special handling: with a feedback encoder the only
    path of length ``nu`` into state 0 uses exactly the termination inputs.
    """
    sys_obs = np.ascontiguousarray(sys_obs, dtype=np.int8)
    par_obs = np.ascontiguousarray(par_obs, dtype=np.int8)
    if sys_obs.shape != par_obs.shape or sys_obs.ndim != 1:
        raise ValueError("sys_obs and par_obs must be 1-D and of equal length")
    full = np.uint64((1 << trellis.num_states) - 1)
    mask = np.uint64(1) if terminated else full
    return kernels.bcjr_erasure(trellis.next_state, trellis.parity, sys_obs, par_obs, mask, mask)


# -- observations ----------------------------------------------------------

@dataclass
class SectionObs:
    """Channel view of one section; punctured bits appear as erased."""

    sys: np.ndarray
    outer_par: np.ndarray
    inner_par: np.ndarray
    outer_tail: np.ndarray
    inner_tail: np.ndarray

    @classmethod
    def from_section(cls, sec: Section, channel_erasures=None) -> "SectionObs":
        """``channel_erasures`` is a boolean mask over the stream
        ``sys | outer_par | inner_par | outer_tail | inner_tail`` (see
        :func:`stream_length`).  Tails are never punctured."""
        streams = [sec.sys, sec.outer_par, sec.inner_par,
                   sec.outer_tail.ravel(), sec.inner_tail.ravel()]
        keeps = [sec.keep_sys, sec.keep_outer_par, sec.keep_inner_par,
                 np.ones(sec.outer_tail.size, bool), np.ones(sec.inner_tail.size, bool)]
        flat = np.concatenate(streams).astype(np.int8)
        keep = np.concatenate(keeps)
        if channel_erasures is not None:
            channel_erasures = np.asarray(channel_erasures, dtype=bool)
            if channel_erasures.shape != flat.shape:
                raise ValueError("channel erasure mask has the wrong length")
            keep = keep & ~channel_erasures
        flat[~keep] = ERASED
        cuts = np.cumsum([s.size for s in streams])[:-1]
        s, op, ip, ot, it = np.split(flat, cuts)
        return cls(s, op, ip, ot.reshape(-1, 2), it.reshape(-1, 2))

    def erased_count(self) -> int:
        return sum(count_erased(a) for a in
                   (self.sys, self.outer_par, self.inner_par, self.outer_tail, self.inner_tail))


def stream_length(sec: Section) -> int:
    return sec.sys.size + sec.outer_par.size + sec.inner_par.size + sec.outer_tail.size + sec.inner_tail.size


# -- schedules -------------------------------------------------------------

@dataclass(frozen=True)
class DecoderSchedule:
    """``inner_iterations`` is the number of inner/outer passes per position
    activation; ``max_iters`` caps sweeps (full chain) or sweeps per window."""

    mode: str = "full"
    window: int = 3
    inner_iterations: int = 1
    max_iters: int = 10_000

    def __post_init__(self):
        if self.mode not in ("full", "window"):
            raise ConfigError(f"unknown decoder mode {self.mode!r}")
        if self.mode == "window" and self.window < 2:
            raise ConfigError("window size must be at least m + 1 = 2")
        if self.inner_iterations < 1 or self.max_iters < 1:
            raise ConfigError("iteration counts must be positive")

    def latency(self, K: int) -> int:
        """Decoding latency in information bits."""
        return K * self.window if self.mode == "window" else math.inf


# -- single block ----------------------------------------------------------

@dataclass
class BlockResult:
    u_hat: np.ndarray
    resolved: bool
    iterations: int


def decode_scc_block(obs: SectionObs, perm, outer: Trellis, inner: Trellis | None = None,
                     max_iters: int = 10_000) -> BlockResult:
    """Alternate inner and outer BCJR passes through ``perm`` to a fixed point.

    ``iterations`` counts passes that changed at least one message; the
    final confirming pass is not included.
    """
    inner = inner or outer
    perm = np.asarray(perm, dtype=np.int64)
    K = obs.sys.size
    n = 2 * K
    if perm.size != n:
        raise ConfigError(f"interleaver length {perm.size} != 2K = {n}")
    chan_word = np.concatenate([obs.sys, obs.outer_par])
    outer_ext = erased(n)  # word order
    inner_ext = erased(n)  # word order
    it_sys = obs.inner_tail[:, 0]
    it_par = np.concatenate([obs.inner_par, obs.inner_tail[:, 1]])
    ot_sys, ot_par = obs.outer_tail[:, 0], obs.outer_tail[:, 1]
    iterations = 0
    for iterations in range(1, max_iters + 1):
        prior = combine(chan_word, outer_ext)[perm]
        es, _ = bcjr_erasure(inner, np.concatenate([prior, it_sys]), it_par)
        new_inner = erased(n)
        new_inner[perm] = es[:n]
        oprior = combine(chan_word, new_inner)
        es, ep = bcjr_erasure(outer, np.concatenate([oprior[:K], ot_sys]),
                              np.concatenate([oprior[K:], ot_par]))
        new_outer = np.concatenate([es[:K], ep[:K]])
        changed = not (np.array_equal(new_inner, inner_ext) and np.array_equal(new_outer, outer_ext))
        inner_ext, outer_ext = new_inner, new_outer
        if not changed:
            iterations -= 1
            break
    u_hat = combine(chan_word, inner_ext, outer_ext)[:K]
    return BlockResult(u_hat, bool(np.all(u_hat >= 0)), iterations)


# -- coupled chain ---------------------------------------------------------

@dataclass
class ChainResult:
    u_hat: list[np.ndarray]
    resolved: np.ndarray
    iterations: int
    trace: list[tuple[int, int, int]] = field(default_factory=list)

    def erased_bits(self) -> int:
        return sum(count_erased(u) for u in self.u_hat)


class _ChainState:
    """Messages of a chain decoder, indexed by position ``t = 0..L``.

    Word order is ``(u_t, outer_par_t)``; ``inner_ext[t]`` is stored in the
    inner input order of position ``t``.  Position 0 and position ``L``
    carry all-zero words known to the decoder.
    """

    def __init__(self, chain: Chain, obs: list[SectionObs]):
        cfg = chain.cfg
        K, L = cfg.K, cfg.L
        if len(obs) != L:
            raise ConfigError(f"expected observations for {L} positions, got {len(obs)}")
        self.K, self.L, self.n = K, L, 2 * K
        self.outer, self.inner = chain.outer, chain.inner
        self.wirings = chain.wirings
        self.obs = obs
        zero = np.zeros(self.n, dtype=np.int8)
        self.chan = [zero] + [np.concatenate([o.sys, o.outer_par]) for o in obs[:-1]] + [zero]
        self.outer_ext = [zero.copy()] + [erased(self.n) for _ in range(L - 1)] + [zero.copy()]
        self.inner_ext = [None] + [erased(self.n) for _ in range(L)]
        # consumers[s] = (positions, indices) of the inner inputs reading word s
        # in word order, for s = 1..L-1
        self.consumers = [None] * (L + 1)
        for s in range(1, L):
            pos = np.empty(self.n, dtype=np.int64)
            j_of = np.empty(self.n, dtype=np.int64)
            for t in (s, s + 1):
                w = self.wirings[t - 1]
                sel = np.flatnonzero((t + w.off) == s)
                pos[w.idx[sel]] = t
                j_of[w.idx[sel]] = sel
            self.consumers[s] = (pos, j_of)

    def inner_prior(self, t: int) -> np.ndarray:
        w = self.wirings[t - 1]
        prior = np.empty(self.n, dtype=np.int8)
        for off in (0, -1):
            sel = w.off == off
            s = t + off
            prior[sel] = combine(self.chan[s][w.idx[sel]], self.outer_ext[s][w.idx[sel]])
        return prior

    def inner_to_word(self, s: int) -> np.ndarray:
        pos, j_of = self.consumers[s]
        out = np.empty(self.n, dtype=np.int8)
        for t in (s, s + 1):
            sel = pos == t
            out[sel] = self.inner_ext[t][j_of[sel]]
        return out

    def update_inner(self, t: int) -> bool:
        o = self.obs[t - 1]
        es, _ = bcjr_erasure(self.inner, np.concatenate([self.inner_prior(t), o.inner_tail[:, 0]]),
                             np.concatenate([o.inner_par, o.inner_tail[:, 1]]))
        new = es[: self.n]
        changed = not np.array_equal(new, self.inner_ext[t])
        self.inner_ext[t] = new
        return changed

    def update_outer(self, s: int) -> bool:
        if s < 1 or s >= self.L:
            return False
        o = self.obs[s - 1]
        K = self.K
        prior = combine(self.chan[s], self.inner_to_word(s))
        es, ep = bcjr_erasure(self.outer, np.concatenate([prior[:K], o.outer_tail[:, 0]]),
                              np.concatenate([prior[K:], o.outer_tail[:, 1]]))
        new = np.concatenate([es[:K], ep[:K]])
        changed = not np.array_equal(new, self.outer_ext[s])
        self.outer_ext[s] = new
        return changed

    def sweep(self, lo: int, hi: int, passes: int) -> bool:
        """Activate positions ``lo..hi``: inner at ``t`` then outer at ``t - 1``."""
        changed = False
        for _ in range(passes):
            for t in range(lo, hi + 1):
                changed |= self.update_inner(t)
                if t - 1 >= lo:
                    changed |= self.update_outer(t - 1)
            changed |= self.update_outer(hi)
        return changed

    def estimate(self, s: int) -> np.ndarray:
        return combine(self.chan[s], self.inner_to_word(s), self.outer_ext[s])[: self.K]


def decode_chain(chain: Chain, obs: list[SectionObs],
                 schedule: DecoderSchedule = DecoderSchedule(), trace: bool = False) -> ChainResult:
    """Decode the ``L - 1`` information blocks of a coupled chain.

    Full mode sweeps all positions until a sweep changes nothing.  Window
    mode decodes positions ``t0..t0+W-1`` to a local fixed point, emits
    ``t0`` and slides by one; messages of emitted positions stay frozen and
    positions beyond the window contribute nothing yet.  ``iterations``
    counts sweeps that changed at least one message.
    """
    st = _ChainState(chain, obs)
    L = st.L
    rows: list[tuple[int, int, int]] = []

    def record(step):
        if trace:
            for s in range(1, L):
                rows.append((step, s, count_erased(st.estimate(s))))

    total = 0
    if schedule.mode == "full":
        for total in range(1, schedule.max_iters + 1):
            changed = st.sweep(1, L, schedule.inner_iterations)
            if not changed:
                total -= 1
                break
            record(total)
        u_hat = [st.estimate(s) for s in range(1, L)]
    else:
        W = schedule.window
        u_hat = []
        for t0 in range(1, L):
            hi = min(L, t0 + W - 1)
            for _ in range(schedule.max_iters):
                changed = st.sweep(t0, hi, schedule.inner_iterations)
                if not changed:
                    break
                total += 1
                record(total)
            u_hat.append(st.estimate(t0))
    resolved = np.array([bool(np.all(u >= 0)) for u in u_hat])
    return ChainResult(u_hat, resolved, total, rows)


TRACE_COLUMNS = ("iteration", "position", "erased_info_bits")


def write_trace_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        w.writerows(rows)


# -- oracles ---------------------------------------------------------------

def gf2_rank_solve(A: np.ndarray, y: np.ndarray):
    """Reduced row echelon form of ``[A | y]`` over GF(2).

    Returns ``(known, values)``: ``known[i]`` is true when unknown ``i`` is
    pinned down by the equations, in which case ``values[i]`` is its value.
    """
    A = np.asarray(A, dtype=bool).copy()
    y = np.asarray(y, dtype=bool).copy()
    rows, cols = A.shape
    pivots = []
    r = 0
    for c in range(cols):
        if r == rows:
            break
        hit = np.flatnonzero(A[r:, c])
        if hit.size == 0:
            continue
        p = r + hit[0]
        if p != r:
            A[[r, p]] = A[[p, r]]
            y[[r, p]] = y[[p, r]]
        others = np.flatnonzero(A[:, c])
        others = others[others != r]
        A[others] ^= A[r]
        y[others] ^= y[r]
        pivots.append(c)
        r += 1
    if np.any(y[r:]):
        raise InconsistentObservation("observations are not consistent with any codeword")
    known = np.zeros(cols, dtype=bool)
    values = np.zeros(cols, dtype=np.int8)
    pivot_cols = np.array(pivots, dtype=np.int64)
    free = np.ones(cols, dtype=bool)
    free[pivot_cols] = False
    for row, c in enumerate(pivots):
        if not np.any(A[row] & free):
            known[c] = True
            values[c] = y[row]
    return known, values


def scc_generator_matrix(K: int, perm, outer: Trellis, inner: Trellis | None = None,
                         punct=None) -> np.ndarray:
    """Rows are the transmitted streams (flattened as in ``SectionObs``) of unit inputs."""
    from .construction import Puncturing, encode_scc_block
    punct = punct or Puncturing()
    rows = []
    for i in range(K):
        u = np.zeros(K, dtype=np.int8)
        u[i] = 1
        sec = encode_scc_block(u, perm, punct, outer, inner)
        rows.append(np.concatenate([sec.sys, sec.outer_par, sec.inner_par,
                                    sec.outer_tail.ravel(), sec.inner_tail.ravel()]))
    return np.array(rows, dtype=np.int8)


def ml_erasure_decode(G: np.ndarray, received) -> np.ndarray:
    """Maximum-likelihood BEC decoding of ``u`` from ``u @ G`` with erasures."""
    received = np.asarray(received, dtype=np.int8)
    known = received >= 0
    ok, vals = gf2_rank_solve(G[:, known].T, received[known] == 1)
    out = erased(G.shape[0])
    out[ok] = vals[ok]
    return out


def conv_codebook(trellis: Trellis, K: int) -> np.ndarray:
    """All ``2**K`` terminated codewords as rows ``(sys_0, par_0, sys_1, ...)``."""
    from .trellis import encode
    words = []
    for bits in itertools.product((0, 1), repeat=K):
        s, p, _ = encode(trellis, np.array(bits, dtype=np.int8), terminate=True)
        words.append(np.stack([s, p], axis=1).ravel())
    return np.array(words, dtype=np.int8)


def enumeration_extrinsic(codebook: np.ndarray, obs) -> np.ndarray:
    """Extrinsic message of every code bit by exhaustive enumeration.

    Bit ``i`` is known iff all codewords that agree with the observations
    at every other known position share the same value at ``i``.
    """
    obs = np.asarray(obs, dtype=np.int8)
    known = obs >= 0
    agree = (codebook == obs) | ~known  # (words, bits)
    mismatches = (~agree).sum(axis=1)
    out = erased(obs.size)
    for i in range(obs.size):
        # ignore the bit's own observation
        ok = (mismatches - (~agree[:, i])) == 0
        vals = codebook[ok, i]
        if vals.size == 0:
            raise InconsistentObservation("no codeword matches the observations")
        if np.all(vals == vals[0]):
            out[i] = vals[0]
    return out
