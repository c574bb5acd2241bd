"""Pure-Python versions of the compiled trellis kernels.

Same signatures and semantics as ``sctc._kernels``.  BCJR set updates are
memoized per (mask, observation) pair, which keeps the interpreter cost
per trellis step roughly constant for small trellises.
"""

from __future__ import annotations

import numpy as np

from .errors import InconsistentObservation


def encode_parity(next_state, parity, u, state):
    nxt = next_state.tolist()
    par = parity.tolist()
    s = int(state)
    out = []
    for b in np.asarray(u).tolist():
        out.append(par[s][b])
        s = nxt[s][b]
    return np.array(out, dtype=np.int8), s


def _allowed(so, po, s, par):
    for u in (0, 1):
        if so >= 0 and so != u:
            continue
        p = par[s][u]
        if po >= 0 and po != p:
            continue
        yield u, p


def bcjr_erasure(next_state, parity, sys_obs, par_obs, start_mask, end_mask):
    n = len(sys_obs)
    if len(par_obs) != n:
        raise ValueError("observation lengths differ")
    ns = next_state.shape[0]
    nxt = next_state.tolist()
    par = parity.tolist()
    so_l = np.asarray(sys_obs).tolist()
    po_l = np.asarray(par_obs).tolist()

    fcache: dict = {}
    bcache: dict = {}
    fwd = [0] * (n + 1)
    bwd = [0] * (n + 1)

    fwd[0] = int(start_mask)
    for k in range(n):
        key = (fwd[k], so_l[k], po_l[k])
        acc = fcache.get(key)
        if acc is None:
            fm, so, po = key
            acc = 0
            for s in range(ns):
                if (fm >> s) & 1:
                    for u, _ in _allowed(so, po, s, par):
                        acc |= 1 << nxt[s][u]
            fcache[key] = acc
        if acc == 0:
            raise InconsistentObservation(f"empty forward state set at step {k}")
        fwd[k + 1] = acc

    bwd[n] = int(end_mask)
    for k in range(n - 1, -1, -1):
        key = (bwd[k + 1], so_l[k], po_l[k])
        acc = bcache.get(key)
        if acc is None:
            bm, so, po = key
            acc = 0
            for s in range(ns):
                for u, _ in _allowed(so, po, s, par):
                    if (bm >> nxt[s][u]) & 1:
                        acc |= 1 << s
                        break
            bcache[key] = acc
        if acc == 0:
            raise InconsistentObservation(f"empty backward state set at step {k}")
        bwd[k] = acc

    ecache: dict = {}
    es = [0] * n
    ep = [0] * n
    for k in range(n):
        key = (fwd[k], bwd[k + 1], so_l[k], po_l[k])
        res = ecache.get(key)
        if res is None:
            fm, bm, so, po = key
            seen_u = seen_p = 0
            for s in range(ns):
                if not (fm >> s) & 1:
                    continue
                for u in (0, 1):
                    if not (bm >> nxt[s][u]) & 1:
                        continue
                    p = par[s][u]
                    if po < 0 or po == p:
                        seen_u |= 1 << u
                    if so < 0 or so == u:
                        seen_p |= 1 << p
            if seen_u == 0 or seen_p == 0:
                raise InconsistentObservation(f"no surviving transition at step {k}")
            res = (-1 if seen_u == 3 else seen_u >> 1, -1 if seen_p == 3 else seen_p >> 1)
            ecache[key] = res
        es[k], ep[k] = res
    return np.array(es, dtype=np.int8), np.array(ep, dtype=np.int8)


def _incidence(moves):
    n = moves.shape[1]
    inc = np.zeros((4, n, n))
    for o in range(4):
        inc[o, np.arange(n), moves[o]] = 1.0
    return inc.reshape(4, n * n)


def transfer_batch(fwd_moves, bwd_moves, e_sys, e_par, ps, pp):
    ps = np.asarray(ps, float)
    pp = np.asarray(pp, float)
    ks, kp = 1.0 - ps, 1.0 - pp
    w = np.stack([ks * kp, ks * pp, ps * kp, ps * pp], axis=-1)
    ok = np.ones(ps.size, dtype=np.int8)

    def solve(moves):
        n = moves.shape[1]
        inc = _incidence(moves)
        P = (w @ inc).reshape(-1, n, n)
        A = np.swapaxes(np.eye(n) - P, -1, -2).copy()
        A[:, -1, :] = 1.0
        b = np.zeros((ps.size, n, 1))
        b[:, -1] = 1.0
        try:
            return np.linalg.solve(A, b)[..., 0]
        except np.linalg.LinAlgError:
            out = np.zeros((ps.size, n))
            for i in range(ps.size):
                try:
                    out[i] = np.linalg.solve(A[i], b[i])[:, 0]
                except np.linalg.LinAlgError:
                    ok[i] = 0
            return out

    xf = solve(fwd_moves)
    xb = solve(bwd_moves)
    joint = xf[:, :, None] * xb[:, None, :]
    sk = np.einsum("tij,ij->t", joint, e_sys[..., 1])
    se = np.einsum("tij,ij->t", joint, e_sys[..., 0])
    pk = np.einsum("tij,ij->t", joint, e_par[..., 1])
    pe = np.einsum("tij,ij->t", joint, e_par[..., 0])
    return kp * sk + pp * se, ks * pk + ps * pe, ok
