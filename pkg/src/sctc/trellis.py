"""Rate-1/2 systematic recursive convolutional encoders and their trellises.

Polynomials are given in octal, read MSB first, with the lowest bit being
the constant term: ``7 -> 1 + D + D^2`` and ``5 -> 1 + D^2``.  The state
realization is the controller canonical form, where the state holds the
last ``nu`` values of the feedback register ``w``::

    w_k = u_k + sum_{i=1..nu} g_fb[i] w_{k-i}
    p_k = sum_{i=0..nu} g_ff[i] w_{k-i}

State bit ``i - 1`` stores ``w_{k-i}``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

MAX_MEMORY = 6


class TrellisError(ValueError):
    """Invalid generator polynomials or trellis construction."""


def _parity(x: int) -> int:
    return bin(x).count("1") & 1


@dataclass(frozen=True)
class GeneratorPair:
    feedforward: int
    feedback: int

    def __post_init__(self):
        if self.feedforward <= 0 or self.feedback <= 0:
            raise TrellisError("generator polynomials must be nonzero")
        if not self.feedback & 1:
            raise TrellisError(
                f"feedback polynomial {self.feedback:o} has zero constant term"
            )
        if self.memory < 1:
            raise TrellisError("encoder memory must be at least 1")
        if self.memory > MAX_MEMORY:
            raise TrellisError(f"encoder memory above {MAX_MEMORY} is not supported")

    @property
    def memory(self) -> int:
        return max(self.feedforward.bit_length(), self.feedback.bit_length()) - 1

    @classmethod
    def parse(cls, text: str) -> "GeneratorPair":
        """Parse ``"1,5/7"``, ``"5/7"`` or ``"(1, 5/7)"`` (octal)."""
        s = text.strip().strip("()").replace(" ", "")
        if "," in s:
            head, s = s.split(",", 1)
            if head != "1":
                raise TrellisError("only systematic encoders (1, ff/fb) are supported")
        try:
            ff, fb = s.split("/")
            return cls(int(ff, 8), int(fb, 8))
        except ValueError as exc:
            raise TrellisError(f"cannot parse generator {text!r}") from exc

    def __str__(self) -> str:
        return f"1,{self.feedforward:o}/{self.feedback:o}"


@dataclass(frozen=True)
class Trellis:
    """Immutable trellis of a systematic recursive encoder.

    ``next_state[s, u]`` and ``parity[s, u]`` give the transition taken from
    state ``s`` on input ``u``; the systematic output equals ``u``.
    ``termination[s]`` lists the ``nu`` inputs driving ``s`` back to 0.
    """

    generator: GeneratorPair
    num_states: int
    next_state: np.ndarray = field(repr=False)
    parity: np.ndarray = field(repr=False)
    termination: np.ndarray = field(repr=False)

    @property
    def memory(self) -> int:
        return self.generator.memory

    def step(self, state: int, u: int) -> tuple[int, int]:
        return int(self.next_state[state, u]), int(self.parity[state, u])


def build_trellis(gen: GeneratorPair | str) -> Trellis:
    if isinstance(gen, str):
        gen = GeneratorPair.parse(gen)
    nu = gen.memory
    n = 1 << nu
    mask = n - 1
    fb_taps = gen.feedback >> 1
    ff_taps = gen.feedforward >> 1
    ff0 = gen.feedforward & 1

    next_state = np.zeros((n, 2), dtype=np.int64)
    parity = np.zeros((n, 2), dtype=np.int8)
    for s in range(n):
        for u in (0, 1):
            w = u ^ _parity(s & fb_taps)
            parity[s, u] = (ff0 & w) ^ _parity(s & ff_taps)
            next_state[s, u] = ((s << 1) | w) & mask

    termination = np.zeros((n, nu), dtype=np.int8)
    for s in range(n):
        state = s
        for k in range(nu):
            # input that makes the register feed a zero
            u = _parity(state & fb_taps)
            termination[s, k] = u
            state = int(next_state[state, u])
        if state != 0:
            raise TrellisError("termination table does not reach the zero state")

    for arr in (next_state, parity, termination):
        arr.setflags(write=False)
    return Trellis(gen, n, next_state, parity, termination)


def encode(trellis: Trellis, bits, terminate: bool = False):
    """Encode ``bits`` from the zero state.

    Returns ``(systematic, parity, final_state)``.  With ``terminate`` the
    ``nu`` tail inputs are appended to the systematic stream and the final
    state is 0.
    """
    from .kernels import encode_parity

    u = np.asarray(bits, dtype=np.int8)
    if u.ndim != 1 or u.size == 0:
        raise ValueError("input must be a nonempty 1-D bit sequence")
    par, state = encode_parity(trellis.next_state, trellis.parity, u, 0)
    if not terminate:
        return u.copy(), par, state
    tail = trellis.termination[state].copy()
    tail_par, state = encode_parity(trellis.next_state, trellis.parity, tail, state)
    return np.concatenate([u, tail]), np.concatenate([par, tail_par]), state
