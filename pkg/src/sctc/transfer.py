"""Exact BCJR extrinsic erasure probabilities of a component code on the BEC.

On the erasure channel the forward (backward) BCJR metric is uniform over a
set of states that are still possible given the past (future) observations.
Assuming the all-zero codeword, which is without loss of generality for a
linear code, that set is a subspace of the state space and evolves as a
Markov chain whose transitions are driven by the erasure pattern of each
trellis step.  The stationary laws of the forward and backward chains,
together with the observation of the companion symbol, give the exact
steady-state extrinsic erasure probabilities.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np

from .trellis import Trellis, encode
from .kernels import bcjr_erasure, transfer_batch

# observation patterns of one trellis step: (systematic known, parity known)
_PATTERNS = ((True, True), (True, False), (False, True), (False, False))

POWER_TOL = 1e-12
POWER_MAX_ITERS = 10**6


class ConvergenceError(RuntimeError):
    pass


def _forward_step(trellis: Trellis, mask: int, sys_known: bool, par_known: bool) -> int:
    out = 0
    for s in range(trellis.num_states):
        if not (mask >> s) & 1:
            continue
        for u in (0, 1):
            if sys_known and u:
                continue
            if par_known and trellis.parity[s, u]:
                continue
            out |= 1 << int(trellis.next_state[s, u])
    return out


def _backward_step(trellis: Trellis, mask: int, sys_known: bool, par_known: bool) -> int:
    out = 0
    for s in range(trellis.num_states):
        for u in (0, 1):
            if sys_known and u:
                continue
            if par_known and trellis.parity[s, u]:
                continue
            if (mask >> int(trellis.next_state[s, u])) & 1:
                out |= 1 << s
                break
    return out


def _pattern_weights(p_sys, p_par):
    ks, kp = 1.0 - p_sys, 1.0 - p_par
    return np.stack([ks * kp, ks * p_par, p_sys * kp, p_sys * p_par], axis=-1)


@dataclass(frozen=True)
class SubsetChain:
    """Parameter-free structure of the forward or backward subset chain.

    ``moves[o, i]`` is the node reached from node ``i`` under observation
    pattern ``o``.  Node 0 is always the full state set.
    """

    direction: str
    nodes: tuple[int, ...]
    moves: np.ndarray

    @property
    def size(self) -> int:
        return len(self.nodes)

    def transition_matrix(self, p_sys, p_par) -> np.ndarray:
        """Row-stochastic matrix; batched over leading axes of the inputs."""
        w = _pattern_weights(np.asarray(p_sys, float), np.asarray(p_par, float))
        n = self.size
        P = np.zeros(w.shape[:-1] + (n, n))
        rows = np.arange(n)
        for o in range(4):
            P[..., rows, self.moves[o]] += w[..., o, None]
        return P


def subset_chain(trellis: Trellis, direction: str) -> SubsetChain:
    if direction not in ("forward", "backward"):
        raise ValueError("direction must be 'forward' or 'backward'")
    step = _forward_step if direction == "forward" else _backward_step
    full = (1 << trellis.num_states) - 1
    index = {full: 0}
    nodes = [full]
    edges: dict[tuple[int, int], int] = {}
    i = 0
    while i < len(nodes):
        for o, (sk, pk) in enumerate(_PATTERNS):
            nxt = step(trellis, nodes[i], sk, pk)
            if nxt not in index:
                index[nxt] = len(nodes)
                nodes.append(nxt)
            edges[o, i] = index[nxt]
        i += 1
    moves = np.zeros((4, len(nodes)), dtype=np.int64)
    for (o, j), k in edges.items():
        moves[o, j] = k
    moves.setflags(write=False)
    return SubsetChain(direction, tuple(nodes), moves)


@dataclass(frozen=True)
class MetricChain:
    direction: str
    nodes: tuple[int, ...]
    transition_matrix: np.ndarray
    stationary: np.ndarray
    iterations: int


def power_stationary(P: np.ndarray, tol: float = POWER_TOL, max_iters: int = POWER_MAX_ITERS):
    """Power iteration started from the full-set node (index 0).

    Starting from the full set rather than an arbitrary vector selects the
    physically meaningful limit when the chain is reducible (edge cases
    where a probability is exactly 0 or 1).
    """
    pi = np.zeros(P.shape[0])
    pi[0] = 1.0
    for it in range(1, max_iters + 1):
        nxt = pi @ P
        if np.abs(nxt - pi).sum() <= tol:
            return nxt, it
        pi = nxt
    raise ConvergenceError(f"power iteration did not converge in {max_iters} steps")


def build_metric_chain(trellis: Trellis, p_sys: float, p_par: float, direction: str) -> MetricChain:
    _check_prob(p_sys, p_par)
    chain = subset_chain(trellis, direction)
    P = chain.transition_matrix(p_sys, p_par)
    pi, it = power_stationary(P)
    return MetricChain(direction, chain.nodes, P, pi, it)


def _check_prob(*ps):
    for p in ps:
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"probability {p} outside [0, 1]")


def _extrinsic_tables(trellis: Trellis, fwd: SubsetChain, bwd: SubsetChain):
    """Indicator tensors ``(n_fwd, n_bwd, 2)``; last axis = companion known."""
    nf, nb = fwd.size, bwd.size
    e_sys = np.zeros((nf, nb, 2))
    e_par = np.zeros((nf, nb, 2))
    for i, fm in enumerate(fwd.nodes):
        for j, bm in enumerate(bwd.nodes):
            for s in range(trellis.num_states):
                if not (fm >> s) & 1:
                    continue
                for u in (0, 1):
                    if not (bm >> int(trellis.next_state[s, u])) & 1:
                        continue
                    p = int(trellis.parity[s, u])
                    if u:
                        e_sys[i, j, 0] = 1.0
                        if not p:
                            e_sys[i, j, 1] = 1.0
                    if p:
                        e_par[i, j, 0] = 1.0
                        if not u:
                            e_par[i, j, 1] = 1.0
    return e_sys, e_par


class TransferFunction:
    """Exact extrinsic erasure probabilities ``(ext_sys, ext_par)``.

    Calling the object evaluates on arrays (broadcast); :meth:`evaluate` is
    the scalar entry point and is memoized.  Interior points go through the
    batched stationary solve of :mod:`sctc.kernels`; points on the boundary
    of the unit square, where the chains may be reducible, use power
    iteration from the full-set node and are cached.
    """

    def __init__(self, trellis: Trellis):
        self.trellis = trellis
        self.forward = subset_chain(trellis, "forward")
        self.backward = subset_chain(trellis, "backward")
        self._e_sys, self._e_par = _extrinsic_tables(trellis, self.forward, self.backward)
        self._cache: dict[tuple[float, float], tuple[float, float]] = {}
        self._edge_cache: dict[tuple[float, float], tuple[float, float]] = {}
        self._lock = threading.Lock()

    def _power_point(self, ps: float, pp: float) -> tuple[float, float]:
        key = (ps, pp)
        with self._lock:
            hit = self._edge_cache.get(key)
        if hit is not None:
            return hit
        pf = power_stationary(self.forward.transition_matrix(ps, pp))[0]
        pb = power_stationary(self.backward.transition_matrix(ps, pp))[0]
        val = _contract(pf, pb, self._e_sys, self._e_par, ps, pp)
        with self._lock:
            return self._edge_cache.setdefault(key, val)

    def __call__(self, p_sys, p_par):
        ps = np.asarray(p_sys, float)
        pp = np.asarray(p_par, float)
        if ps.shape != pp.shape:
            ps, pp = np.broadcast_arrays(ps, pp)
        shape = ps.shape
        ps = np.ascontiguousarray(ps.ravel())
        pp = np.ascontiguousarray(pp.ravel())
        if ps.size == 0:
            return ps.reshape(shape), pp.reshape(shape)
        lo = min(ps.min(), pp.min())
        hi = max(ps.max(), pp.max())
        if lo < 0.0 or hi > 1.0:
            raise ValueError("probabilities must lie in [0, 1]")
        if lo > 0.0 and hi < 1.0:
            ext_s, ext_p, ok = transfer_batch(
                self.forward.moves, self.backward.moves, self._e_sys, self._e_par, ps, pp
            )
            edge = ok == 0
        else:
            ext_s = np.empty(ps.size)
            ext_p = np.empty(ps.size)
            edge = (ps <= 0.0) | (ps >= 1.0) | (pp <= 0.0) | (pp >= 1.0)
            inner = np.flatnonzero(~edge)
            if inner.size:
                s, p, ok = transfer_batch(
                    self.forward.moves, self.backward.moves,
                    self._e_sys, self._e_par, ps[inner], pp[inner],
                )
                ext_s[inner] = s
                ext_p[inner] = p
                edge[inner[ok == 0]] = True
        if edge.any():
            for i in np.flatnonzero(edge):
                ext_s[i], ext_p[i] = self._power_point(float(ps[i]), float(pp[i]))
        np.clip(ext_s, 0.0, 1.0, out=ext_s)
        np.clip(ext_p, 0.0, 1.0, out=ext_p)
        return ext_s.reshape(shape), ext_p.reshape(shape)

    def evaluate(self, p_sys: float, p_par: float) -> tuple[float, float]:
        _check_prob(p_sys, p_par)
        key = (round(p_sys, 12), round(p_par, 12))
        with self._lock:
            hit = self._cache.get(key)
        if hit is not None:
            return hit
        es, ep = self(p_sys, p_par)
        val = (float(es), float(ep))
        with self._lock:
            return self._cache.setdefault(key, val)


def _contract(pf, pb, e_sys, e_par, ps, pp):
    joint = np.outer(pf, pb)
    ext_sys = (1 - pp) * (joint * e_sys[..., 1]).sum() + pp * (joint * e_sys[..., 0]).sum()
    ext_par = (1 - ps) * (joint * e_par[..., 1]).sum() + ps * (joint * e_par[..., 0]).sum()
    return float(np.clip(ext_sys, 0, 1)), float(np.clip(ext_par, 0, 1))


def exact_extrinsic(trellis: Trellis, p_sys: float, p_par: float) -> tuple[float, float]:
    """Steady-state extrinsic erasure probabilities via power-iterated chains.

    Reference path that does not use the batched kernel.
    """
    fwd = build_metric_chain(trellis, p_sys, p_par, "forward")
    bwd = build_metric_chain(trellis, p_sys, p_par, "backward")
    e_sys, e_par = _tables_for(trellis)
    return _contract(fwd.stationary, bwd.stationary, e_sys, e_par, p_sys, p_par)


_TABLES: dict = {}


def _tables_for(trellis: Trellis):
    key = str(trellis.generator)
    if key not in _TABLES:
        _TABLES[key] = _extrinsic_tables(
            trellis, subset_chain(trellis, "forward"), subset_chain(trellis, "backward")
        )
    return _TABLES[key]


def mc_extrinsic(trellis: Trellis, p_sys: float, p_par: float, n_steps: int, seed: int):
    """Monte Carlo estimate of the extrinsic erasure rates.

    Encodes a random sequence, erases the observations, runs BCJR
    set-propagation with unknown start and end states and counts erased
    extrinsic outputs, discarding ``10 * nu`` steps at either end.

    Returns ``(est_sys, est_par, (se_sys, se_par))``.  The standard errors
    use batch means over blocks of 1000 steps, since extrinsic outcomes of
    neighbouring steps are correlated.
    """
    if n_steps < 10**4:
        raise ValueError("n_steps must be at least 1e4")
    _check_prob(p_sys, p_par)
    rng = np.random.default_rng(seed)
    burn = 10 * trellis.memory
    n = n_steps + 2 * burn
    u = rng.integers(0, 2, n, dtype=np.int8)
    sys, par, _ = encode(trellis, u)
    sys_obs = np.where(rng.random(n) < p_sys, -1, sys).astype(np.int8)
    par_obs = np.where(rng.random(n) < p_par, -1, par).astype(np.int8)
    full = (1 << trellis.num_states) - 1
    es, ep = bcjr_erasure(trellis.next_state, trellis.parity, sys_obs, par_obs, full, full)
    es = (es[burn : n - burn] < 0).astype(float)
    ep = (ep[burn : n - burn] < 0).astype(float)
    return float(es.mean()), float(ep.mean()), (_batch_se(es), _batch_se(ep))


def _batch_se(x: np.ndarray, batch: int = 1000) -> float:
    nb = x.size // batch
    means = x[: nb * batch].reshape(nb, batch).mean(axis=1)
    return float(means.std(ddof=1) / np.sqrt(nb))


def binomial_se(p: float, n: int) -> float:
    return float(np.sqrt(p * (1 - p) / n))
