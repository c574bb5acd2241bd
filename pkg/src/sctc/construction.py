"""Finite-length code construction: interleavers, puncturing, SCC blocks and
spatially coupled SCC chains with coupling memory 1.

Bit streams of one SCC section (outer code feeding the inner code through
an interleaver):

``sys``        information bits ``u`` (length K), punctured by P0
``outer_par``  outer parity (length K), punctured by P1
``inner_par``  inner parity (length 2K), punctured by P2
``outer_tail`` / ``inner_tail``  ``(nu, 2)`` arrays of (systematic, parity)
               termination symbols, always transmitted

The inner encoder input is described by a *wiring*: inner input bit ``j`` of
position ``t`` is bit ``idx[j]`` of the outer codeword ``(u, outer_par)`` of
position ``t + off[j]``, with ``off`` in ``{0, -1}``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import ConfigError
from .trellis import Trellis, build_trellis, encode

log = logging.getLogger(__name__)


# -- interleavers ----------------------------------------------------------

def _conflicts(perm: np.ndarray, S: int) -> np.ndarray:
    """Per index, the number of neighbours within S that map closer than S."""
    c = np.zeros(perm.size, dtype=np.int64)
    for d in range(1, S + 1):
        close = np.abs(perm[d:] - perm[:-d]) < S
        c[d:] += close
        c[:-d] += close
    return c


def s_random_interleaver(K: int, S: int, seed: int, max_steps: int | None = None,
                         restarts: int = 5) -> np.ndarray:
    """Random permutation with ``|pi(i) - pi(j)| >= S`` whenever ``0 < |i - j| <= S``.

    A uniform random permutation is repaired by min-conflicts search: a
    violating index is swapped with the partner that leaves the fewest
    violations (random tie-break).  Restarts from a fresh draw after
    ``max_steps`` swaps.
    """
    if K < 1:
        raise ConfigError("interleaver length must be positive")
    if S > max(1, math.isqrt(K // 2)):
        raise ConfigError(f"spread S={S} too large for K={K} (use S <= sqrt(K/2))")
    rng = np.random.default_rng(seed)
    if S <= 1:
        return rng.permutation(K).astype(np.int64)
    max_steps = max_steps or 20 * K
    kernel = np.ones(2 * S + 1)
    for _ in range(restarts):
        perm = rng.permutation(K).astype(np.int64)
        conf = _conflicts(perm, S)
        for _ in range(max_steps):
            bad = np.flatnonzero(conf)
            if bad.size == 0:
                return perm
            i = int(rng.choice(bad))
            lo, hi = max(0, i - S), min(K, i + S + 1)
            nb = np.delete(perm[lo:hi], i - lo)
            # violations of value perm[j] placed at i, and of perm[i] placed at j
            at_i = (np.abs(perm[:, None] - nb[None, :]) < S).sum(axis=1)
            near = (np.abs(perm - perm[i]) < S).astype(float)
            at_j = np.convolve(near, kernel, mode="same") - near
            delta = at_i + at_j - conf
            delta[i] = np.iinfo(np.int64).max
            j = int(rng.choice(np.flatnonzero(delta == delta.min())))
            perm[i], perm[j] = perm[j], perm[i]
            conf = _conflicts(perm, S)
    raise ConfigError(f"no S-random permutation found for K={K}, S={S}; try a smaller S")


def is_s_random(perm, S: int) -> bool:
    perm = np.asarray(perm)
    for d in range(1, S + 1):
        if np.any(np.abs(perm[d:] - perm[:-d]) < S):
            return False
    return True


# -- puncturing ------------------------------------------------------------

@dataclass(frozen=True)
class PuncturingPattern:
    """Periodic puncturing pattern; ``pattern[j] == 0`` punctures slot ``j``.

    ``order`` lists the 1-based slots in the order they get punctured.
    """

    pattern: tuple[int, ...]
    order: tuple[int, ...] = ()

    @property
    def period(self) -> int:
        return len(self.pattern)

    @property
    def rho(self) -> float:
        return sum(self.pattern) / self.period

    def keep_mask(self, n: int) -> np.ndarray:
        p = np.asarray(self.pattern, dtype=bool)
        return p[np.arange(n) % self.period]

    def __str__(self) -> str:
        return "[" + " ".join(map(str, self.pattern)) + "]"


FULL = PuncturingPattern((1,))


def nested_pattern(order, rho: float) -> PuncturingPattern:
    """Pattern obtained by puncturing the first slots listed in ``order``.

    Patterns built from one order are nested: a lower ``rho`` only adds
    punctured slots.
    """
    order = tuple(int(x) for x in order)
    n = len(order)
    if sorted(order) != list(range(1, n + 1)):
        raise ConfigError(f"puncturing order {order} is not a permutation of 1..{n}")
    if not 0.0 <= rho <= 1.0:
        raise ConfigError(f"permeability {rho} outside [0, 1]")
    exact = rho * n
    keep = round(exact)
    if abs(exact - keep) > 1.0 / (2 * n):
        keep = math.floor(exact)
        log.warning("rho=%g not representable with period %d; rounded down to %d/%d", rho, n, keep, n)
    pattern = [1] * n
    for slot in order[: n - keep]:
        pattern[slot - 1] = 0
    return PuncturingPattern(tuple(pattern), order)


def spread_order(n: int) -> tuple[int, ...]:
    """Nested order of ``n`` slots that keeps punctured slots evenly spaced
    at every prefix (slots ranked by the bit-reversed value of ``j / n``)."""
    bits = max(1, (n - 1).bit_length())

    def radical_inverse(j):
        return int(format(j, f"0{bits}b")[::-1], 2)

    ranked = sorted(range(n), key=lambda j: (radical_inverse(j * (1 << bits) // n), j))
    return tuple(j + 1 for j in ranked)


def _period_for(rho: float, max_period: int = 128) -> int:
    return Fraction(rho).limit_denominator(max_period).denominator


@dataclass(frozen=True)
class Puncturing:
    """Patterns for the information bits (P0), outer parity (P1) and inner parity (P2)."""

    p0: PuncturingPattern = FULL
    p1: PuncturingPattern = FULL
    p2: PuncturingPattern = FULL

    @classmethod
    def from_orders(cls, order1, rho1: float, order2, rho2: float) -> "Puncturing":
        p1 = FULL if rho1 >= 1.0 else nested_pattern(order1, rho1)
        p2 = FULL if rho2 >= 1.0 else nested_pattern(order2, rho2)
        return cls(FULL, p1, p2)

    @classmethod
    def for_rates(cls, rho1: float, rho2: float, period: int | None = None) -> "Puncturing":
        """Patterns for target permeabilities using :func:`spread_order`.

        Without an explicit ``period`` each pattern uses the smallest period
        (at most 128) that represents its ``rho``.
        """
        n1 = period or _period_for(rho1)
        n2 = period or _period_for(rho2)
        return cls.from_orders(spread_order(n1), rho1, spread_order(n2), rho2)

    @property
    def rates(self) -> tuple[float, float, float]:
        return self.p0.rho, self.p1.rho, self.p2.rho


# -- SCC sections ------------------------------------------------------------

@dataclass
class Section:
    """Code bits of one SCC section (one block, or one chain position)."""

    sys: np.ndarray
    outer_par: np.ndarray
    inner_par: np.ndarray
    outer_tail: np.ndarray
    inner_tail: np.ndarray
    keep_sys: np.ndarray
    keep_outer_par: np.ndarray
    keep_inner_par: np.ndarray

    @property
    def outer_word(self) -> np.ndarray:
        return np.concatenate([self.sys, self.outer_par])

    def transmitted_bits(self) -> int:
        """Payload bits sent on the channel (termination tails excluded)."""
        return int(self.keep_sys.sum() + self.keep_outer_par.sum() + self.keep_inner_par.sum())

    def tail_bits(self) -> int:
        return int(self.outer_tail.size + self.inner_tail.size)

    def punctured(self):
        """Transmitted streams ``(sys, outer_par, inner_par)`` after puncturing."""
        return (
            self.sys[self.keep_sys],
            self.outer_par[self.keep_outer_par],
            self.inner_par[self.keep_inner_par],
        )


@dataclass(frozen=True)
class Wiring:
    off: np.ndarray
    idx: np.ndarray


def block_wiring(perm) -> Wiring:
    perm = np.asarray(perm, dtype=np.int64)
    return Wiring(np.zeros(perm.size, dtype=np.int64), perm)


def _encode_outer(trellis: Trellis, u: np.ndarray):
    sys, par, _ = encode(trellis, u, terminate=True)
    K = u.size
    tail = np.stack([sys[K:], par[K:]], axis=1)
    return par[:K], tail


def _encode_inner(trellis: Trellis, x: np.ndarray):
    sys, par, _ = encode(trellis, x, terminate=True)
    n = x.size
    tail = np.stack([sys[n:], par[n:]], axis=1)
    return par[:n], tail


def encode_scc_block(u, perm, punct: Puncturing = Puncturing(), outer: Trellis | None = None,
                     inner: Trellis | None = None) -> Section:
    """Encode one SCC block: outer code, interleave ``(u, outer_par)``, inner code."""
    u = np.asarray(u, dtype=np.int8)
    perm = np.asarray(perm, dtype=np.int64)
    K = u.size
    if perm.size != 2 * K:
        raise ConfigError(f"interleaver length {perm.size} != 2K = {2 * K}")
    outer = outer or build_trellis("1,5/7")
    inner = inner or outer
    opar, otail = _encode_outer(outer, u)
    x = np.concatenate([u, opar])[perm]
    ipar, itail = _encode_inner(inner, x)
    return Section(
        u.copy(), opar, ipar, otail, itail,
        punct.p0.keep_mask(K), punct.p1.keep_mask(K), punct.p2.keep_mask(2 * K),
    )


# -- coupled chains ----------------------------------------------------------

@dataclass(frozen=True)
class CouplingConfig:
    K: int
    L: int
    m: int = 1
    seed: int = 0
    spread: int = 0
    mode: str = "simplified"
    split: str = "alternate"
    generator: str = "1,5/7"
    puncturing: Puncturing = field(default_factory=Puncturing)

    def __post_init__(self):
        if self.K < 2 or self.K % 2:
            raise ConfigError("K must be even and at least 2")
        if self.L < 2:
            raise ConfigError("coupling length L must be at least 2")
        if self.m != 1:
            raise ConfigError("finite-length chains support coupling memory m = 1 only")
        if self.mode not in ("simplified", "random"):
            raise ConfigError(f"unknown chain mode {self.mode!r}")
        if self.split not in ("alternate", "random"):
            raise ConfigError(f"unknown split {self.split!r}")

    @property
    def info_bits(self) -> int:
        return (self.L - 1) * self.K

    @property
    def split_fraction(self) -> float:
        return 1.0 / (self.m + 1)

    def rate_sc(self) -> float:
        rho0, rho1, rho2 = self.puncturing.rates
        return 1.0 / ((rho0 + rho1 + 2.0 * rho2) + 2.0 / (self.L - 1))


@dataclass
class Chain:
    """A coupled chain: its wirings and per-position sections (positions 1..L)."""

    cfg: CouplingConfig
    outer: Trellis
    inner: Trellis
    wirings: list[Wiring]
    sections: list[Section] = field(default_factory=list)

    def transmitted_bits(self) -> int:
        return sum(s.transmitted_bits() for s in self.sections)


def chain_wirings(cfg: CouplingConfig) -> list[Wiring]:
    """Inner-input wiring of every position ``t = 1..L`` (list index ``t - 1``)."""
    K, L = cfg.K, cfg.L
    n = 2 * K
    rng = np.random.default_rng(cfg.seed)
    if cfg.mode == "simplified":
        spread = cfg.spread or max(1, math.isqrt(K))
        spread = min(spread, max(1, math.isqrt(n // 2)))
        pi = s_random_interleaver(n, spread, cfg.seed)
        perms1 = [pi] * (L + 1)
    else:
        perms1 = [rng.permutation(n) for _ in range(L + 1)]
    if cfg.split == "alternate":
        a_sel = np.arange(0, n, 2)
        b_sel = np.arange(1, n, 2)
    else:
        chosen = np.sort(rng.choice(n, K, replace=False))
        a_sel = chosen
        b_sel = np.setdiff1d(np.arange(n), chosen)

    wirings = []
    for t in range(1, L + 1):
        # perms1[t] is Pi^(1)_t; part A of t and part B of t-1
        a_idx = perms1[t][a_sel]
        b_idx = perms1[t - 1][b_sel]
        off = np.empty(n, dtype=np.int64)
        idx = np.empty(n, dtype=np.int64)
        if cfg.mode == "simplified":
            off[0::2], idx[0::2] = 0, a_idx
            off[1::2], idx[1::2] = -1, b_idx
        else:
            cat_off = np.concatenate([np.zeros(K, np.int64), -np.ones(K, np.int64)])
            cat_idx = np.concatenate([a_idx, b_idx])
            pi2 = rng.permutation(n)
            off, idx = cat_off[pi2], cat_idx[pi2]
        wirings.append(Wiring(off, idx))
    return wirings


def build_chain(cfg: CouplingConfig) -> Chain:
    outer = build_trellis(cfg.generator)
    return Chain(cfg, outer, outer, chain_wirings(cfg))


def encode_chain(u_blocks, chain: Chain | CouplingConfig) -> Chain:
    """Encode ``L - 1`` information blocks; block ``L`` is forced to zero.

    Position ``L`` transmits only the inner parity, unpunctured, plus the
    inner termination tail.
    """
    if isinstance(chain, CouplingConfig):
        chain = build_chain(chain)
    cfg = chain.cfg
    K, L = cfg.K, cfg.L
    blocks = [np.asarray(b, dtype=np.int8) for b in u_blocks]
    if len(blocks) != L - 1 or any(b.shape != (K,) for b in blocks):
        raise ConfigError(f"expected {L - 1} information blocks of {K} bits")
    blocks.append(np.zeros(K, dtype=np.int8))

    words = [np.zeros(2 * K, dtype=np.int8)]  # position 0
    outer_parts = []
    for u in blocks:
        opar, otail = _encode_outer(chain.outer, u)
        words.append(np.concatenate([u, opar]))
        outer_parts.append((opar, otail))

    punct = cfg.puncturing
    sections = []
    for t in range(1, L + 1):
        w = chain.wirings[t - 1]
        src = np.where(w.off == 0, words[t][w.idx], words[t - 1][w.idx])
        ipar, itail = _encode_inner(chain.inner, src)
        opar, otail = outer_parts[t - 1]
        if t < L:
            keeps = (punct.p0.keep_mask(K), punct.p1.keep_mask(K), punct.p2.keep_mask(2 * K))
        else:
            keeps = (np.zeros(K, bool), np.zeros(K, bool), np.ones(2 * K, bool))
        sections.append(Section(blocks[t - 1].copy(), opar, ipar, otail, itail, *keeps))
    chain.sections = sections
    return chain


def expected_chain_bits(cfg: CouplingConfig) -> float:
    """Payload bits implied by the coupled rate formula."""
    return cfg.info_bits / cfg.rate_sc()
