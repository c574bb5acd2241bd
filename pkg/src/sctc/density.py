"""Exact density evolution for (coupled) turbo-like ensembles on the BEC.

Serial concatenation (SCC / SC-SCC) with random puncturing of the outer
parity (``rho1``) and inner parity (``rho2``), and parallel concatenation
(PCC / SC-PCC) with both parities punctured alike (``rho2``).

Arrays are indexed by coupling position ``t``.  Coupled chains store the
positions ``t = -m .. L + m``; position ``t`` lives at index ``t + m``.
For the PCC ensemble the ``x_O_*`` arrays hold the upper decoder and the
``x_I_*`` arrays the lower decoder.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction

import numpy as np

from .errors import ConfigError
from .transfer import TransferFunction
from .trellis import build_trellis

DEFAULT_GENERATOR = "1,5/7"


@functools.lru_cache(maxsize=None)
def default_transfer(generator: str = DEFAULT_GENERATOR) -> TransferFunction:
    return TransferFunction(build_trellis(generator))


def epsilon_punctured(eps, rho):
    """Erasure probability of a BEC(eps) followed by random puncturing."""
    return 1.0 - (1.0 - eps) * rho


@dataclass(frozen=True)
class DEConfig:
    ensemble: str = "scc"
    coupled: bool = False
    L: int = 1
    m: int = 0
    epsilon: float = 0.0
    rho0: float = 1.0
    rho1: float = 1.0
    rho2: float = 1.0
    outer_tf: TransferFunction = field(default_factory=default_transfer, repr=False, compare=False)
    inner_tf: TransferFunction = field(default_factory=default_transfer, repr=False, compare=False)
    max_iters: int = 100_000
    conv_tol: float = 1e-10
    stall_tol: float = 1e-12
    stall_window: int = 100

    def __post_init__(self):
        if self.ensemble not in ("scc", "pcc"):
            raise ConfigError(f"unknown ensemble {self.ensemble!r}")
        if self.rho0 != 1.0:
            raise ConfigError("only systematic ensembles (rho0 = 1) are supported")
        for name in ("rho1", "rho2", "epsilon"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name}={v} outside [0, 1]")
        if self.coupled:
            if self.L < 2 or self.m < 1:
                raise ConfigError("coupled ensembles need L >= 2 and m >= 1")
        elif self.m != 0:
            raise ConfigError("uncoupled ensembles have m = 0")

    @property
    def rate(self) -> float:
        if self.ensemble == "pcc":
            return 1.0 / (1.0 + 2.0 * self.rho2)
        return 1.0 / (1.0 + self.rho1 + 2.0 * self.rho2)

    @property
    def rate_sc(self) -> float:
        if not self.coupled:
            return self.rate
        return 1.0 / (1.0 / self.rate + 2.0 / (self.L - 1))

    @property
    def span(self) -> int:
        return self.L + 2 * self.m + 1 if self.coupled else 1


@dataclass
class DEState:
    x_O_s: np.ndarray
    x_O_p: np.ndarray
    x_I_s: np.ndarray
    x_I_p: np.ndarray
    p_app: np.ndarray
    iteration: int = 0

    def copy(self) -> "DEState":
        return DEState(
            self.x_O_s.copy(), self.x_O_p.copy(), self.x_I_s.copy(),
            self.x_I_p.copy(), self.p_app.copy(), self.iteration,
        )

    def arrays(self):
        return (self.x_O_s, self.x_O_p, self.x_I_s, self.x_I_p)


def positions(cfg: DEConfig) -> np.ndarray:
    """Coupling position ``t`` of every array index."""
    if not cfg.coupled:
        return np.array([1])
    return np.arange(-cfg.m, cfg.L + cfg.m + 1)


def _masks(cfg: DEConfig):
    """Boolean masks of updated entries for the outer (upper) and inner (lower) arrays."""
    t = positions(cfg)
    if not cfg.coupled:
        on = np.ones(1, bool)
        return on, on, on
    if cfg.ensemble == "scc":
        outer = (t >= 1) & (t < cfg.L)
    else:
        outer = (t >= 1) & (t <= cfg.L)
    inner = (t >= 1) & (t <= cfg.L)
    info = outer
    return outer, inner, info


def init_de(cfg: DEConfig) -> DEState:
    outer, inner, info = _masks(cfg)
    xo = outer.astype(float)
    xi = inner.astype(float)
    return DEState(xo.copy(), xo.copy(), xi.copy(), xi.copy(), info.astype(float) * cfg.epsilon)


def _window(x: np.ndarray, m: int, ahead: bool) -> np.ndarray:
    """Mean of ``x[t .. t+m]`` (``ahead``) or ``x[t-m .. t]``; zero outside."""
    if m == 0:
        return x
    c = np.concatenate([[0.0], np.cumsum(x)])
    n = x.size
    idx = np.arange(n)
    if ahead:
        hi = np.minimum(idx + m + 1, n)
        return (c[hi] - c[idx]) / (m + 1)
    lo = np.maximum(idx - m, 0)
    return (c[idx + 1] - c[lo]) / (m + 1)


def de_iterate_scc(cfg: DEConfig, state: DEState) -> DEState:
    """One parallel (Jacobi) DE sweep of the serially concatenated ensemble."""
    eps = cfg.epsilon
    e1 = epsilon_punctured(eps, cfg.rho1)
    e2 = epsilon_punctured(eps, cfg.rho2)
    m = cfg.m if cfg.coupled else 0
    outer, inner, info = _masks(cfg)

    # inner decoder: its input bits are the outer code bits of t-m .. t
    q_o = (eps * _window(state.x_O_s, m, ahead=False) + e1 * _window(state.x_O_p, m, ahead=False)) / 2.0
    # outer decoder: its code bits went to the inner decoders of t .. t+m
    w_i = _window(state.x_I_s, m, ahead=True)
    q_i = eps * w_i
    q_i_par = e1 * w_i

    new = state.copy()
    if inner.any():
        s, p = cfg.inner_tf(q_o[inner], e2)
        new.x_I_s[inner] = s
        new.x_I_p[inner] = p
    if outer.any():
        s, p = cfg.outer_tf(q_i[outer], q_i_par[outer])
        new.x_O_s[outer] = s
        new.x_O_p[outer] = p
    new.p_app = np.where(info, eps * new.x_O_s * _window(new.x_I_s, m, ahead=True), 0.0)
    new.iteration = state.iteration + 1
    return new


def de_iterate_pcc(cfg: DEConfig, state: DEState) -> DEState:
    """One parallel DE sweep of the parallel concatenated ensemble.

    Information bit ``u_t`` enters the upper encoders of ``t .. t+m`` and
    the lower encoders of ``t .. t+m``.  A decoder at ``t`` therefore sees,
    for each of its input bits, the companion decoder's extrinsic averaged
    over the ``m+1`` positions that bit reached.
    """
    eps = cfg.epsilon
    e2 = epsilon_punctured(eps, cfg.rho2)
    m = cfg.m if cfg.coupled else 0
    outer, inner, info = _masks(cfg)

    a_up = _window(state.x_O_s, m, ahead=True)
    a_lo = _window(state.x_I_s, m, ahead=True)
    # prior of an input bit of the decoder at t: its info position tau in
    # t-m .. t, and the companion extrinsic averaged over tau .. tau+m
    q_up = eps * _window(a_lo, m, ahead=False)
    q_lo = eps * _window(a_up, m, ahead=False)

    new = state.copy()
    s, p = cfg.outer_tf(q_up[outer], e2)
    new.x_O_s[outer] = s
    new.x_O_p[outer] = p
    s, p = cfg.inner_tf(q_lo[inner], e2)
    new.x_I_s[inner] = s
    new.x_I_p[inner] = p
    new.p_app = np.where(
        info, eps * _window(new.x_O_s, m, ahead=True) * _window(new.x_I_s, m, ahead=True), 0.0
    )
    new.iteration = state.iteration + 1
    return new


def de_iterate(cfg: DEConfig, state: DEState) -> DEState:
    if cfg.ensemble == "scc":
        return de_iterate_scc(cfg, state)
    return de_iterate_pcc(cfg, state)


@dataclass
class DEResult:
    success: bool
    state: DEState
    iterations: int
    trace: list[float]


def de_run(cfg: DEConfig, state: DEState | None = None, trace: bool = False) -> DEResult:
    """Iterate to success (max p_app < conv_tol), stall or the iteration cap.

    Stall is declared when the total a-posteriori erasure mass over all
    positions decreased by less than ``stall_tol`` (relative) over the last
    ``stall_window`` iterations.  The total rather than the maximum is
    tracked because in a coupled chain the maximum stays flat while the
    decoding wave travels inward.
    """
    st = init_de(cfg) if state is None else state
    history: list[float] = []
    totals: list[float] = []
    for _ in range(cfg.max_iters):
        st = de_iterate(cfg, st)
        mx = float(st.p_app.max())
        if trace:
            history.append(mx)
        if mx < cfg.conv_tol:
            return DEResult(True, st, st.iteration, history)
        totals.append(float(st.p_app.sum()))
        if len(totals) > cfg.stall_window:
            old = totals[-cfg.stall_window - 1]
            if old - totals[-1] <= cfg.stall_tol * old:
                return DEResult(False, st, st.iteration, history)
    return DEResult(False, st, st.iteration, history)


def de_trace(cfg: DEConfig) -> list[float]:
    """Per-iteration max over positions of the a-posteriori erasure probability."""
    return de_run(cfg, trace=True).trace


def bp_threshold(cfg: DEConfig, bisect_tol: float = 1e-4, lo: float = 0.0, hi: float | None = None,
                 expand: bool = True) -> float:
    """Largest channel erasure probability for which DE succeeds.

    Bisection to a bracket of half-width ``bisect_tol``; returns the
    bracket midpoint.  ``lo`` must succeed and ``hi`` (default slightly
    above the Shannon limit ``1 - R``) must fail.  Both ends are checked;
    with ``expand`` an invalid end is pushed outward (doubling the step)
    instead of raising, so bracket hints only affect run time.
    """
    if hi is None:
        hi = min(1.0, 1.0 - cfg.rate + 0.01)

    def ok(e):
        return de_run(replace(cfg, epsilon=e)).success

    step = max(hi - lo, 4 * bisect_tol)
    while lo > 0.0 and not ok(lo):
        if not expand:
            raise ConfigError(f"DE fails at lower bracket end {lo}")
        lo, hi, step = max(0.0, lo - step), lo, 2 * step
    while ok(hi):
        if not expand or hi >= 1.0:
            raise ConfigError(f"DE succeeds at upper bracket end {hi}; bracket invalid")
        lo, hi, step = hi, min(1.0, hi + step), 2 * step
    while (hi - lo) / 2.0 > bisect_tol:
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def exit_value(cfg: DEConfig, state: DEState) -> float:
    """Average extrinsic erasure probability over transmitted bits (uncoupled)."""
    xos, xop, xis, xip = (float(a[0]) for a in state.arrays())
    if cfg.ensemble == "scc":
        num = xos * xis + cfg.rho1 * xop * xis + 2.0 * cfg.rho2 * xip
        return num / (1.0 + cfg.rho1 + 2.0 * cfg.rho2)
    num = xos * xis + cfg.rho2 * (xop + xip)
    return num / (1.0 + 2.0 * cfg.rho2)


def exit_curve_de(cfg: DEConfig, eps_grid) -> np.ndarray:
    """BP EXIT values at the DE fixed points, swept downward with warm starts."""
    eps_grid = np.asarray(eps_grid, float)
    order = np.argsort(eps_grid)[::-1]
    out = np.empty_like(eps_grid)
    st = None
    for k in order:
        c = replace(cfg, epsilon=float(eps_grid[k]))
        if st is not None:
            st = st.copy()
        res = de_run(c, st)
        out[k] = 0.0 if res.success else exit_value(c, res.state)
        st = res.state
    return out


def area_threshold(eps: np.ndarray, h: np.ndarray, rate: float) -> float:
    """Solve ``integral_{e}^{1} h = rate`` on an ascending grid ending at 1.

    Uses the trapezoidal rule and linear interpolation of the cumulative
    area between grid points.
    """
    eps = np.asarray(eps, float)
    h = np.asarray(h, float)
    seg = 0.5 * (h[1:] + h[:-1]) * np.diff(eps)
    # area from eps[k] up to 1
    tail = np.concatenate([np.cumsum(seg[::-1])[::-1], [0.0]])
    if tail[0] < rate:
        # a curve whose full area is the rate (e.g. a lone trellis code, where
        # BCJR is already MAP) has threshold 0; allow trapezoid error there
        if eps[0] == 0.0 and rate - tail[0] <= 10.0 * float(np.max(np.diff(eps))) ** 2:
            return 0.0
        raise ValueError("EXIT-curve anomaly: area over the grid is below the rate")
    k = int(np.nonzero(tail >= rate)[0][-1])
    if tail[k] == rate or k == len(eps) - 1:
        return float(eps[k])
    frac = (tail[k] - rate) / (tail[k] - tail[k + 1])
    return float(eps[k] + frac * (eps[k + 1] - eps[k]))


def map_threshold(cfg: DEConfig, grid_step: float = 1e-3, eps_bp: float | None = None) -> float:
    """MAP threshold of an uncoupled ensemble from the area theorem.

    The BP EXIT curve is evaluated on a grid from 1 downward; the sweep
    stops once the accumulated area exceeds the rate (or at ``eps_bp``).
    """
    if cfg.coupled:
        raise ConfigError("map_threshold expects an uncoupled ensemble")
    rate = cfg.rate
    n = int(round(1.0 / grid_step))
    grid = 1.0 - grid_step * np.arange(n + 1)
    floor = 0.0 if eps_bp is None else eps_bp
    hs: list[float] = []
    area = 0.0
    st = None
    for k, e in enumerate(grid):
        if e < floor:
            break
        c = replace(cfg, epsilon=float(e))
        res = de_run(c, st.copy() if st is not None else None)
        if res.success:
            hs.append(0.0)
            grid = grid[: k + 1]
            break
        st = res.state
        hs.append(exit_value(c, st))
        if k:
            area += 0.5 * (hs[-1] + hs[-2]) * grid_step
            if area >= rate:
                grid = grid[: k + 1]
                break
    else:
        grid = grid[: len(hs)]
    grid = grid[: len(hs)]
    return area_threshold(grid[::-1], np.array(hs[::-1]), rate)


def rho_for_rate(rate: float, rho2: float) -> float:
    """Outer parity permeability ``rho1`` implied by ``rate`` and ``rho2``."""
    return 1.0 / rate - 1.0 - 2.0 * rho2


def feasible_rho2(rate: float, grid_step: float) -> np.ndarray:
    lo = max(0.0, (1.0 / rate - 2.0) / 2.0)
    hi = min(1.0, (1.0 / rate - 1.0) / 2.0)
    if lo > hi + 1e-12:
        return np.array([])
    n = int(math.floor((hi - lo) / grid_step + 1e-9))
    pts = lo + grid_step * np.arange(n + 1)
    if hi - pts[-1] > 1e-12:
        pts = np.append(pts, hi)
    return pts


def optimize_rho2(rate: float, grid_step: float = 0.05, map_grid_step: float = 2e-3):
    """Grid search for the ``rho2`` maximizing the uncoupled SCC MAP threshold.

    Returns ``(rho2, rho1, eps_map)``; ties go to the larger ``rho2``.
    """
    if not 0.25 <= rate < 1.0:
        raise ConfigError("rate must lie in [1/4, 1)")
    cands = feasible_rho2(rate, grid_step)
    if cands.size == 0:
        raise ConfigError(f"no feasible rho2 for rate {rate}")
    best = None
    for r2 in cands:
        r1 = min(1.0, max(0.0, rho_for_rate(rate, r2)))
        cfg = DEConfig("scc", rho1=r1, rho2=float(r2))
        e = map_threshold(cfg, map_grid_step)
        if best is None or e >= best[2] - 1e-9:
            best = (float(r2), r1, e)
    return best


def parse_rate(text: str | float) -> float:
    if isinstance(text, (int, float)):
        return float(text)
    return float(Fraction(text.strip()))


def table_config(ensemble: str, rate: float, coupled: bool = False, L: int = 100, m: int = 0, **kw) -> DEConfig:
    """Configuration of the rate-compatible family (outer parity fully punctured
    above rate 1/3, as in the reported thresholds)."""
    if ensemble == "pcc":
        rho2 = (1.0 / rate - 1.0) / 2.0
        rho1 = 1.0
    else:
        if rate <= 1.0 / 3.0 + 1e-12:
            rho1 = 1.0 / rate - 3.0
            rho2 = 1.0
        else:
            rho1 = 0.0
            rho2 = (1.0 / rate - 1.0) / 2.0
    if not (0.0 <= rho1 <= 1.0 and 0.0 <= rho2 <= 1.0):
        raise ConfigError(f"rate {rate} not reachable by puncturing")
    if coupled:
        return DEConfig(ensemble, True, L, m, rho1=rho1, rho2=rho2, **kw)
    return DEConfig(ensemble, rho1=rho1, rho2=rho2, **kw)
