"""Compare the compiled and pure-Python trellis kernels.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Prints the best-of-N time per call for each kernel and backend, and checks
that both backends return identical results on the benchmark inputs.
"""

import argparse
import timeit

import numpy as np

from sctc import _pykernels
from sctc.transfer import TransferFunction, _extrinsic_tables, subset_chain
from sctc.trellis import build_trellis, encode

try:
    from sctc import _kernels
except ImportError:  # extension not built
    _kernels = None


def cases(trellis, rng):
    n = 2048
    u = rng.integers(0, 2, n, dtype=np.int8)
    ts, tp, _ = encode(trellis, u, terminate=True)
    obs_s = np.where(rng.random(ts.size) < 0.4, -1, ts).astype(np.int8)
    obs_p = np.where(rng.random(tp.size) < 0.4, -1, tp).astype(np.int8)
    fwd = subset_chain(trellis, "forward")
    bwd = subset_chain(trellis, "backward")
    e_sys, e_par = _extrinsic_tables(trellis, fwd, bwd)
    ps = rng.random(200)
    pp = rng.random(200)
    one = np.uint64(1)
    return {
        "encode_parity (n=2048)": lambda k: k.encode_parity(trellis.next_state, trellis.parity, u, 0),
        "bcjr_erasure (n=2050)": lambda k: k.bcjr_erasure(trellis.next_state, trellis.parity,
                                                          obs_s, obs_p, one, one),
        "transfer_batch (200 points)": lambda k: k.transfer_batch(fwd.moves, bwd.moves, e_sys, e_par,
                                                                  ps, pp),
    }


def same(a, b):
    if isinstance(a, tuple):
        return all(same(x, y) for x, y in zip(a, b))
    if isinstance(a, np.ndarray):
        return np.allclose(a, b, rtol=0, atol=1e-12)
    return a == b


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--generator", default="1,5/7")
    args = ap.parse_args()
    trellis = build_trellis(args.generator)
    rng = np.random.default_rng(0)
    backends = {"python": _pykernels}
    if _kernels is not None:
        backends["cython"] = _kernels
    else:
        print("compiled extension not available; timing the fallback only")
    print(f"{'kernel':30s}" + "".join(f"{b:>14s}" for b in backends) + "   speedup")
    for name, fn in cases(trellis, rng).items():
        if _kernels is not None and not same(fn(_kernels), fn(_pykernels)):
            raise SystemExit(f"{name}: backends disagree")
        times = {}
        for b, mod in backends.items():
            number = 3 if b == "python" else 50
            t = min(timeit.repeat(lambda: fn(mod), number=number, repeat=args.repeat)) / number
            times[b] = t
        row = f"{name:30s}" + "".join(f"{times[b] * 1e3:11.3f} ms" for b in backends)
        if "cython" in times:
            row += f"   {times['python'] / times['cython']:7.1f}x"
        print(row)
    # end-to-end: the DE transfer function call used by every DE iteration
    tf = TransferFunction(trellis)
    xs = rng.random(400)
    t = min(timeit.repeat(lambda: tf(xs, xs[::-1]), number=20, repeat=args.repeat)) / 20
    print(f"TransferFunction call (400 points, active backend): {t * 1e3:.3f} ms")


if __name__ == "__main__":
    main()
