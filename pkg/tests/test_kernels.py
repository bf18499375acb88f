import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rauc import _accel, kernels


def _tableau(rng, m, n):
    A = rng.uniform(0, 1, (m, n))
    tab = np.zeros((m + 1, n + m + 1))
    tab[:m, :n] = A
    tab[:m, n:n + m] = np.eye(m)
    tab[:m, -1] = rng.uniform(1, 2, m)
    tab[m, :n] = -rng.uniform(0, 1, n)
    return tab, np.arange(n, n + m, dtype=np.int64)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 12), st.integers(1, 12))
def test_simplex_kernels_agree(seed, m, n):
    tab, basis = _tableau(np.random.default_rng(seed), m, n)
    t1, b1 = tab.copy(), basis.copy()
    t2, b2 = tab.copy(), basis.copy()
    s1, _ = kernels.simplex_jit(t1, b1, n + m, 10_000)
    s2, _ = kernels.simplex_numpy(t2, b2, n + m, 10_000)
    assert s1 == s2 == 0
    # same optimal value; vertices may differ only on ties
    assert t1[m, -1] == pytest.approx(t2[m, -1], abs=1e-9)


def test_unbounded_column_detected():
    # min -x with x free to grow: the only column has no positive entry
    tab = np.array([[-1.0, 1.0, 1.0], [-1.0, 0.0, 0.0]])
    basis = np.array([1], dtype=np.int64)
    assert kernels.simplex_numpy(tab.copy(), basis.copy(), 2, 100)[0] == 1
    assert kernels.simplex_jit(tab.copy(), basis.copy(), 2, 100)[0] == 1


def test_chain_reduces_to_sum():
    ptr = np.array([0, 1, 2, 3], dtype=np.int64)
    parent = np.array([-1, 0, 1], dtype=np.int64)
    p = np.ones(3)
    c = np.array([1.0, 2.0, 3.0])
    for fn in (kernels.nested_musd_jit, kernels.nested_musd_numpy):
        assert fn(ptr, parent, p, c, 0.7)[0] == pytest.approx(6.0)


def test_flag_selects_numpy_path():
    code = "import rauc._accel as a, rauc.kernels as k; print(a.backend_name(), k.nested_musd is k.nested_musd_numpy)"
    env = dict(os.environ, RAUC_NUMBA="0")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.split() == ["numpy", "True"]


def test_default_path_matches_flag():
    expected = kernels.nested_musd_jit if _accel.USE_NUMBA else kernels.nested_musd_numpy
    assert kernels.nested_musd is expected
