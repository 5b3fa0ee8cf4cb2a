import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, strategies as st

from arot import _kernels_py as py_kernels
from arot import kernels

try:
    from arot import _kernels as c_kernels
except ImportError:  # pragma: no cover
    c_kernels = None

needs_ext = pytest.mark.skipif(c_kernels is None, reason="compiled kernels not built")


def _data(seed, n, p, levels):
    rng = np.random.default_rng(seed)
    X = np.ascontiguousarray(rng.integers(0, levels, size=(n, p)).astype(np.float64))
    y = np.ascontiguousarray(rng.normal(0, 10, size=n).round(2))
    return X, y


def test_backend_selected():
    assert kernels.BACKEND in ("cython", "python")
    if c_kernels is not None:
        assert kernels.BACKEND == c_kernels.BACKEND


def test_env_forces_python_backend():
    env = dict(os.environ, AROT_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "from arot import kernels; print(kernels.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


@needs_ext
@given(st.integers(0, 10**6), st.integers(2, 40), st.integers(1, 4), st.integers(1, 6), st.integers(1, 4))
def test_best_split_backends_agree(seed, n, p, levels, min_leaf):
    X, y = _data(seed, n, p, levels)
    idx = np.ascontiguousarray(np.random.default_rng(seed + 1).permutation(n)[: max(2, n - 3)].astype(np.intp))
    feats = np.arange(p, dtype=np.intp)
    a = py_kernels.best_split(X, y, idx, feats, min_leaf)
    b = c_kernels.best_split(X, y, idx, feats, min_leaf)
    assert a[0] == b[0]
    if a[0] >= 0:
        assert a[1:] == b[1:]


@needs_ext
@given(st.integers(0, 10**6), st.integers(2, 40), st.integers(1, 4))
def test_random_split_backends_agree(seed, n, p):
    X, y = _data(seed, n, p, 5)
    idx = np.arange(n, dtype=np.intp)
    feats = np.arange(p, dtype=np.intp)
    thr = np.random.default_rng(seed).uniform(-0.5, 4.5, size=p)
    thr[0] = np.nan
    a = py_kernels.random_split(X, y, idx, feats, np.ascontiguousarray(thr), 1)
    b = c_kernels.random_split(X, y, idx, feats, np.ascontiguousarray(thr), 1)
    assert a[0] == b[0]
    if a[0] >= 0:
        assert a[1:] == b[1:]


@needs_ext
def test_predict_backends_agree():
    from arot.cart import TreeParams, fit_tree
    X, y = _data(11, 300, 4, 20)
    t = fit_tree(X, y, TreeParams(max_depth=6))
    Q = np.random.default_rng(2).uniform(-1, 21, size=(500, 4))
    args = (t.feature, t.threshold, t.left, t.right, t.value)
    assert np.array_equal(py_kernels.predict(Q, *args), c_kernels.predict(Q, *args))
