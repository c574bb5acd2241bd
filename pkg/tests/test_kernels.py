"""The compiled kernels and the pure-Python fallback must agree exactly."""

import importlib
import os
import subprocess
import sys

import numpy as np
import pytest

from sctc import _pykernels, kernels
from sctc.errors import InconsistentObservation
from sctc.transfer import _extrinsic_tables, subset_chain
from sctc.trellis import encode

compiled = pytest.importorskip("sctc._kernels")


@pytest.fixture(params=["rsc57", "acc"])
def trellis(request):
    return request.getfixturevalue(request.param)


class TestBackendAgreement:
    def test_encode_parity(self, trellis, rng):
        u = rng.integers(0, 2, 300, dtype=np.int8)
        a = compiled.encode_parity(trellis.next_state, trellis.parity, u, 0)
        b = _pykernels.encode_parity(trellis.next_state, trellis.parity, u, 0)
        np.testing.assert_array_equal(a[0], b[0])
        assert a[1] == b[1]

    @pytest.mark.parametrize("eps", [0.0, 0.3, 0.7, 1.0])
    def test_bcjr(self, trellis, rng, eps):
        u = rng.integers(0, 2, 400, dtype=np.int8)
        s, p, _ = encode(trellis, u, terminate=True)
        so = np.where(rng.random(s.size) < eps, -1, s).astype(np.int8)
        po = np.where(rng.random(p.size) < eps, -1, p).astype(np.int8)
        one = np.uint64(1)
        for res in zip(compiled.bcjr_erasure(trellis.next_state, trellis.parity, so, po, one, one),
                       _pykernels.bcjr_erasure(trellis.next_state, trellis.parity, so, po, one, one)):
            np.testing.assert_array_equal(*res)

    def test_transfer_batch(self, trellis, rng):
        fwd, bwd = subset_chain(trellis, "forward"), subset_chain(trellis, "backward")
        es, ep = _extrinsic_tables(trellis, fwd, bwd)
        ps, pp = rng.random(50), rng.random(50)
        a = compiled.transfer_batch(fwd.moves, bwd.moves, es, ep, ps, pp)
        b = _pykernels.transfer_batch(fwd.moves, bwd.moves, es, ep, ps, pp)
        np.testing.assert_allclose(a[0], b[0], atol=1e-13)
        np.testing.assert_allclose(a[1], b[1], atol=1e-13)
        np.testing.assert_array_equal(a[2], b[2])

    @pytest.mark.parametrize("backend", [compiled, _pykernels])
    def test_inconsistent_observation_raises(self, rsc57, backend):
        # state 0 with u=0 must give parity 0
        so = np.array([0, 0], dtype=np.int8)
        po = np.array([1, -1], dtype=np.int8)
        with pytest.raises(InconsistentObservation):
            backend.bcjr_erasure(rsc57.next_state, rsc57.parity, so, po, np.uint64(1), np.uint64(15))


class TestSelection:
    def test_compiled_backend_is_default(self):
        assert kernels.BACKEND == "cython"

    def test_env_forces_fallback(self):
        env = dict(os.environ, SCTC_PURE_PYTHON="1")
        out = subprocess.run([sys.executable, "-c", "from sctc import kernels; print(kernels.BACKEND)"],
                             env=env, capture_output=True, text=True, check=True)
        assert out.stdout.strip() == "python"

    def test_reload_keeps_api(self):
        mod = importlib.reload(kernels)
        for name in ("encode_parity", "bcjr_erasure", "transfer_batch"):
            assert callable(getattr(mod, name))
