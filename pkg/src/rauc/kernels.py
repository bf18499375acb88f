"""Numeric hot loops, each in a numba-loop flavour and a vectorized numpy flavour.

The public names at the bottom are bound once at import according to
``rauc._accel.USE_NUMBA``; both flavours stay importable for the benchmark and
for cross-checking in tests.
"""

from __future__ import annotations

import numpy as np

from ._accel import njit, pick

# ---------------------------------------------------------------------------
# nested mean-upper-semideviation over a breadth-first tree
# ---------------------------------------------------------------------------


def _nested_musd_loops(period_ptr, parent, cond_prob, cost, lam):
    n = cost.shape[0]
    val = cost.copy()
    mean = np.zeros(n)
    dev = np.zeros(n)
    n_levels = period_ptr.shape[0] - 1
    for k in range(n_levels - 1, 0, -1):
        lo = period_ptr[k]
        hi = period_ptr[k + 1]
        for c in range(lo, hi):
            mean[parent[c]] += cond_prob[c] * val[c]
        for c in range(lo, hi):
            p = parent[c]
            d = val[c] - mean[p]
            if d > 0.0:
                dev[p] += cond_prob[c] * d
        plo = period_ptr[k - 1]
        for p in range(plo, lo):
            val[p] = cost[p] + mean[p] + lam * dev[p]
    return val


def _nested_musd_numpy(period_ptr, parent, cond_prob, cost, lam):
    n = cost.shape[0]
    val = cost.astype(np.float64).copy()
    n_levels = period_ptr.shape[0] - 1
    for k in range(n_levels - 1, 0, -1):
        lo, hi = period_ptr[k], period_ptr[k + 1]
        plo = period_ptr[k - 1]
        par = parent[lo:hi]
        w = cond_prob[lo:hi]
        v = val[lo:hi]
        mean = np.bincount(par - plo, weights=w * v, minlength=lo - plo)
        up = np.maximum(v - mean[par - plo], 0.0)
        dev = np.bincount(par - plo, weights=w * up, minlength=lo - plo)
        val[plo:lo] = cost[plo:lo] + mean + lam * dev
    return val[:n]


# ---------------------------------------------------------------------------
# dense tableau simplex (standard form: min c x, A x = b, x >= 0, b >= 0)
# ---------------------------------------------------------------------------
# Tableau layout: rows 0..m-1 constraints, row m objective (reduced costs),
# last column right-hand side. Status codes: 0 optimal, 1 unbounded, 2 iteration limit.

_EPS = 1e-9


def _simplex_loops(tab, basis, n_cols, max_iter):
    m = tab.shape[0] - 1
    rhs = tab.shape[1] - 1
    degenerate = 0
    for it in range(max_iter):
        # entering column: most negative reduced cost, Bland's rule after stalls
        col = -1
        best = -_EPS
        for j in range(n_cols):
            r = tab[m, j]
            if r < best:
                col = j
                if degenerate > 50:
                    break
                best = r
        if col < 0:
            return 0, it
        row = -1
        ratio = np.inf
        for i in range(m):
            a = tab[i, col]
            if a > _EPS:
                q = tab[i, rhs] / a
                if q < ratio - 1e-12 or (q <= ratio + 1e-12 and row >= 0 and basis[i] < basis[row]):
                    ratio = q
                    row = i
        if row < 0:
            return 1, it
        degenerate = degenerate + 1 if ratio < _EPS else 0
        piv = tab[row, col]
        for j in range(tab.shape[1]):
            tab[row, j] /= piv
        for i in range(m + 1):
            if i != row:
                f = tab[i, col]
                if f != 0.0:
                    for j in range(tab.shape[1]):
                        tab[i, j] -= f * tab[row, j]
        basis[row] = col
    return 2, max_iter


def _simplex_numpy(tab, basis, n_cols, max_iter):
    m = tab.shape[0] - 1
    degenerate = 0
    for it in range(max_iter):
        red = tab[m, :n_cols]
        cand = np.flatnonzero(red < -_EPS)
        if cand.size == 0:
            return 0, it
        col = int(cand[0]) if degenerate > 50 else int(cand[np.argmin(red[cand])])
        colv = tab[:m, col]
        pos = colv > _EPS
        if not pos.any():
            return 1, it
        ratios = np.full(m, np.inf)
        ratios[pos] = tab[:m, -1][pos] / colv[pos]
        rmin = ratios.min()
        ties = np.flatnonzero(ratios <= rmin + 1e-12)
        row = int(ties[np.argmin(basis[ties])])
        degenerate = degenerate + 1 if rmin < _EPS else 0
        tab[row] /= tab[row, col]
        f = tab[:, col].copy()
        f[row] = 0.0
        tab -= np.outer(f, tab[row])
        basis[row] = col
    return 2, max_iter


nested_musd_jit = njit(_nested_musd_loops)
simplex_jit = njit(_simplex_loops)

nested_musd = pick(nested_musd_jit, _nested_musd_numpy)
simplex_iterate = pick(simplex_jit, _simplex_numpy)

nested_musd_numpy = _nested_musd_numpy
simplex_numpy = _simplex_numpy
