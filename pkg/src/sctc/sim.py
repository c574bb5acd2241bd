"""Monte Carlo BER simulation on the BEC.

Every trial draws its information bits and channel uniforms from its own
generator seeded with ``seed_base + trial_index``.  Erasures are
``uniform < eps``, so the same trial index sees nested erasure patterns at
different ``eps`` and different codes can share trial seeds (common random
numbers).  Results therefore do not depend on how trials are distributed
over workers.
"""

from __future__ import annotations

import csv
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .codec import DecoderSchedule, SectionObs, decode_chain, decode_scc_block, stream_length
from .construction import (Chain, CouplingConfig, Puncturing, build_chain, encode_chain,
                           encode_scc_block, s_random_interleaver)
from .errors import ConfigError
from .trellis import build_trellis


class DecodingError(RuntimeError):
    """A decoder produced a known but wrong bit; on the BEC this is a bug."""


def bec_transmit(bits, eps: float, seed) -> np.ndarray:
    """Erase each bit independently with probability ``eps`` (-1 = erased)."""
    if not 0.0 <= eps <= 1.0:
        raise ConfigError(f"erasure probability {eps} outside [0, 1]")
    bits = np.asarray(bits, dtype=np.int8)
    rng = np.random.default_rng(seed)
    out = bits.copy()
    out[rng.random(bits.shape) < eps] = -1
    return out


@dataclass
class TrialResult:
    seed: int
    info_bits: int
    bit_errors: int
    resolved: bool
    iterations: int
    wall_time: float = field(default=0.0, compare=False)


@dataclass(frozen=True)
class StopRule:
    min_errors: int = 100
    max_trials: int = 10_000

    def done(self, trials: int, errors: int) -> bool:
        return errors >= self.min_errors or trials >= self.max_trials


@dataclass
class BERPoint:
    """BER estimate with a 95% normal-approximation half-width.

    With no observed errors ``upper`` is the rule-of-three bound
    ``3 / info_bits``, otherwise ``ber + half_width``.
    """

    epsilon: float
    trials: int
    info_bits: int
    error_bits: int
    ber: float
    half_width: float
    upper: float
    block_errors: int = 0

    @classmethod
    def from_counts(cls, eps, trials, info_bits, error_bits, block_errors=0) -> "BERPoint":
        ber = error_bits / info_bits if info_bits else 0.0
        hw = 1.96 * math.sqrt(ber * (1.0 - ber) / info_bits) if info_bits else 0.0
        upper = 3.0 / info_bits if error_bits == 0 and info_bits else min(1.0, ber + hw)
        return cls(float(eps), trials, info_bits, error_bits, ber, hw, upper, block_errors)


BER_COLUMNS = ("epsilon", "trials", "info_bits", "error_bits", "block_errors", "ber", "half_width", "upper")


def write_ber_csv(path, points, extra: dict | None = None) -> None:
    extra = extra or {}
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(tuple(extra) + BER_COLUMNS)
        for p in points:
            w.writerow(tuple(extra.values()) + (
                f"{p.epsilon:.6f}", p.trials, p.info_bits, p.error_bits, p.block_errors,
                f"{p.ber:.6e}", f"{p.half_width:.6e}", f"{p.upper:.6e}"))


# -- codes under test ------------------------------------------------------

def _count_errors(u_hat: np.ndarray, u: np.ndarray) -> int:
    known = u_hat >= 0
    if np.any(u_hat[known] != u[known]):
        raise DecodingError("decoder returned a wrong known bit")
    return int(np.count_nonzero(~known))


class BlockCode:
    """Uncoupled SCC block code with an S-random interleaver."""

    def __init__(self, K: int, seed: int = 0, spread: int = 0, generator: str = "1,5/7",
                 puncturing: Puncturing = Puncturing()):
        self.K = K
        self.trellis = build_trellis(generator)
        n = 2 * K
        spread = spread or max(1, min(math.isqrt(K), math.isqrt(n // 2)))
        self.perm = s_random_interleaver(n, spread, seed)
        self.puncturing = puncturing

    @property
    def info_bits(self) -> int:
        return self.K

    def trial(self, eps: float, seed: int) -> TrialResult:
        t0 = time.perf_counter()
        rng = np.random.default_rng(seed)
        u = rng.integers(0, 2, self.K, dtype=np.int8)
        sec = encode_scc_block(u, self.perm, self.puncturing, self.trellis)
        mask = rng.random(stream_length(sec)) < eps
        res = decode_scc_block(SectionObs.from_section(sec, mask), self.perm, self.trellis)
        errs = _count_errors(res.u_hat, u)
        return TrialResult(seed, self.K, errs, res.resolved, res.iterations, time.perf_counter() - t0)


class ChainCode:
    """Coupled SCC chain (coupling memory 1) decoded with ``schedule``."""

    def __init__(self, cfg: CouplingConfig, schedule: DecoderSchedule = DecoderSchedule()):
        self.cfg = cfg
        self.schedule = schedule
        self.chain: Chain = build_chain(cfg)

    @property
    def info_bits(self) -> int:
        return self.cfg.info_bits

    def trial(self, eps: float, seed: int) -> TrialResult:
        t0 = time.perf_counter()
        rng = np.random.default_rng(seed)
        K, L = self.cfg.K, self.cfg.L
        blocks = [rng.integers(0, 2, K, dtype=np.int8) for _ in range(L - 1)]
        encode_chain(blocks, self.chain)
        obs = []
        for sec in self.chain.sections:
            mask = rng.random(stream_length(sec)) < eps
            obs.append(SectionObs.from_section(sec, mask))
        res = decode_chain(self.chain, obs, self.schedule)
        errs = sum(_count_errors(a, b) for a, b in zip(res.u_hat, blocks))
        return TrialResult(seed, self.info_bits, errs, bool(res.resolved.all()), res.iterations,
                           time.perf_counter() - t0)


# -- sweeps ----------------------------------------------------------------

def _run_batch(args):
    code, eps, seeds = args
    return [code.trial(eps, s) for s in seeds]


def run_point(code, eps: float, stop: StopRule = StopRule(), seed_base: int = 0,
              workers: int = 1, batch: int = 16) -> tuple[BERPoint, list[TrialResult]]:
    """Trials at one ``eps`` until the stop rule fires.

    Trials are evaluated in batches (in parallel when ``workers > 1``) but
    folded strictly in index order, and surplus trials past the stopping
    index are discarded, so the result matches a serial run.
    """
    results: list[TrialResult] = []
    errors = 0
    pool = ProcessPoolExecutor(workers) if workers > 1 else None
    try:
        idx = 0
        while True:
            n = min(batch * max(1, workers), stop.max_trials - idx)
            seeds = [seed_base + i for i in range(idx, idx + n)]
            if pool is None:
                chunk = _run_batch((code, eps, seeds))
            else:
                parts = [seeds[k::workers] for k in range(workers)]
                outs = list(pool.map(_run_batch, [(code, eps, p) for p in parts]))
                chunk = sorted((r for o in outs for r in o), key=lambda r: r.seed)
            for r in chunk:
                results.append(r)
                errors += r.bit_errors
                if stop.done(len(results), errors):
                    break
            idx += n
            if stop.done(len(results), errors):
                break
    finally:
        if pool is not None:
            pool.shutdown()
    bits = sum(r.info_bits for r in results)
    blocks = sum(not r.resolved for r in results)
    return BERPoint.from_counts(eps, len(results), bits, errors, blocks), results


def run_ber_sweep(code, eps_list, stop: StopRule = StopRule(), seed_base: int = 0,
                  workers: int = 1) -> list[BERPoint]:
    """One :class:`BERPoint` per ``eps``; every point reuses trial seeds
    ``seed_base, seed_base + 1, ...``."""
    return [run_point(code, float(e), stop, seed_base, workers)[0] for e in eps_list]
