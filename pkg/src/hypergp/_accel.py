"""Hot inner loops with a numba path and a pure-numpy fallback.

Every kernel exists twice: ``*_loop`` is written as plain loops and is
compiled with ``numba.njit`` when numba is importable, ``*_numpy`` is the
vectorised reference. The public name is bound to one of them at import
time. Set ``HYPERGP_DISABLE_NUMBA=1`` to force the numpy path.
"""
import math
import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - numba is an install dependency
    numba = None


def _numba_requested():
    flag = os.environ.get("HYPERGP_DISABLE_NUMBA", "").strip().lower()
    return flag not in ("1", "true", "yes", "on")


USE_NUMBA = numba is not None and _numba_requested()


def _jit(fn):
    if numba is None:
        return fn
    return numba.njit(cache=True, nogil=True)(fn)


# ---------------------------------------------------------------------------
# k-means assignment step


def _kmeans_assign_loop(points, centroids):
    n, d = points.shape
    k = centroids.shape[0]
    labels = np.empty(n, dtype=np.int64)
    best = np.empty(n, dtype=np.float64)
    for i in range(n):
        bi = 0
        bd = np.inf
        for c in range(k):
            acc = 0.0
            for t in range(d):
                diff = points[i, t] - centroids[c, t]
                acc += diff * diff
            if acc < bd:
                bd = acc
                bi = c
        labels[i] = bi
        best[i] = bd
    return labels, best


def _kmeans_assign_numpy(points, centroids):
    diff = points[:, None, :] - centroids[None, :, :]
    d2 = np.einsum("nkd,nkd->nk", diff, diff)
    labels = np.argmin(d2, axis=1).astype(np.int64)
    return labels, d2[np.arange(points.shape[0]), labels]


# ---------------------------------------------------------------------------
# pairwise squared distances


def _sq_dists_loop(x):
    n, d = x.shape
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            acc = 0.0
            for t in range(d):
                diff = x[i, t] - x[j, t]
                acc += diff * diff
            out[i, j] = acc
            out[j, i] = acc
    return out


def _sq_dists_numpy(x):
    diff = x[:, None, :] - x[None, :, :]
    out = np.einsum("ijd,ijd->ij", diff, diff)
    np.fill_diagonal(out, 0.0)
    return out


# ---------------------------------------------------------------------------
# masked matrix-factorisation terms over observed (row, col) triples


def _pair_dots_loop(rows, cols, u, w):
    n = rows.shape[0]
    d = u.shape[1]
    out = np.empty(n)
    for t in range(n):
        r = rows[t]
        c = cols[t]
        acc = 0.0
        for k in range(d):
            acc += u[r, k] * w[c, k]
        out[t] = acc
    return out


def _pair_dots_numpy(rows, cols, u, w):
    return np.einsum("nd,nd->n", u[rows], w[cols])


def _pair_scatter_loop(rows, cols, coef, u, w):
    gu = np.zeros_like(u)
    gw = np.zeros_like(w)
    d = u.shape[1]
    for t in range(rows.shape[0]):
        r = rows[t]
        c = cols[t]
        a = coef[t]
        for k in range(d):
            gu[r, k] += a * w[c, k]
            gw[c, k] += a * u[r, k]
    return gu, gw


def _pair_scatter_numpy(rows, cols, coef, u, w):
    gu = np.zeros_like(u)
    gw = np.zeros_like(w)
    np.add.at(gu, rows, coef[:, None] * w[cols])
    np.add.at(gw, cols, coef[:, None] * u[rows])
    return gu, gw


# ---------------------------------------------------------------------------
# contingency table and expected mutual information


def _contingency_loop(a, b, na, nb):
    table = np.zeros((na, nb), dtype=np.int64)
    for t in range(a.shape[0]):
        table[a[t], b[t]] += 1
    return table


def _contingency_numpy(a, b, na, nb):
    flat = np.bincount(a * nb + b, minlength=na * nb)
    return flat.reshape(na, nb).astype(np.int64)


def _emi_loop(table):
    rows = table.sum(axis=1)
    cols = table.sum(axis=0)
    n = rows.sum()
    lgn = math.lgamma(n + 1.0)
    emi = 0.0
    for i in range(rows.shape[0]):
        ai = rows[i]
        for j in range(cols.shape[0]):
            bj = cols[j]
            lo = max(1, ai + bj - n)
            hi = min(ai, bj)
            if lo > hi:
                continue
            base = (math.lgamma(ai + 1.0) + math.lgamma(bj + 1.0)
                    + math.lgamma(n - ai + 1.0) + math.lgamma(n - bj + 1.0) - lgn)
            for nij in range(lo, hi + 1):
                logp = (base - math.lgamma(nij + 1.0) - math.lgamma(ai - nij + 1.0)
                        - math.lgamma(bj - nij + 1.0)
                        - math.lgamma(n - ai - bj + nij + 1.0))
                term = nij / n * math.log(n * nij / (ai * bj))
                emi += term * math.exp(logp)
    return emi


def _emi_numpy(table):
    from scipy.special import gammaln

    rows = table.sum(axis=1).astype(np.int64)
    cols = table.sum(axis=0).astype(np.int64)
    n = int(rows.sum())
    emi = 0.0
    for ai in rows:
        for bj in cols:
            lo = max(1, ai + bj - n)
            hi = min(ai, bj)
            if lo > hi:
                continue
            nij = np.arange(lo, hi + 1, dtype=np.float64)
            logp = (gammaln(ai + 1.0) + gammaln(bj + 1.0) + gammaln(n - ai + 1.0)
                    + gammaln(n - bj + 1.0) - gammaln(n + 1.0) - gammaln(nij + 1.0)
                    - gammaln(ai - nij + 1.0) - gammaln(bj - nij + 1.0)
                    - gammaln(n - ai - bj + nij + 1.0))
            term = nij / n * np.log(n * nij / (float(ai) * float(bj)))
            emi += float(np.sum(term * np.exp(logp)))
    return emi


# ---------------------------------------------------------------------------
# calibration binning


def _calibration_bins_loop(conf, correct, n_bins):
    counts = np.zeros(n_bins, dtype=np.int64)
    sum_conf = np.zeros(n_bins)
    sum_acc = np.zeros(n_bins)
    for t in range(conf.shape[0]):
        b = int(math.ceil(conf[t] * n_bins)) - 1
        if b < 0:
            b = 0
        elif b > n_bins - 1:
            b = n_bins - 1
        counts[b] += 1
        sum_conf[b] += conf[t]
        sum_acc[b] += correct[t]
    return counts, sum_conf, sum_acc


def _calibration_bins_numpy(conf, correct, n_bins):
    idx = np.clip(np.ceil(conf * n_bins).astype(np.int64) - 1, 0, n_bins - 1)
    counts = np.bincount(idx, minlength=n_bins).astype(np.int64)
    sum_conf = np.bincount(idx, weights=conf, minlength=n_bins)
    sum_acc = np.bincount(idx, weights=correct.astype(np.float64), minlength=n_bins)
    return counts, sum_conf, sum_acc


KERNELS = {
    "kmeans_assign": (_kmeans_assign_loop, _kmeans_assign_numpy),
    "sq_dists": (_sq_dists_loop, _sq_dists_numpy),
    "pair_dots": (_pair_dots_loop, _pair_dots_numpy),
    "pair_scatter": (_pair_scatter_loop, _pair_scatter_numpy),
    "contingency": (_contingency_loop, _contingency_numpy),
    "emi": (_emi_loop, _emi_numpy),
    "calibration_bins": (_calibration_bins_loop, _calibration_bins_numpy),
}

JITTED = {name: _jit(loop) for name, (loop, _) in KERNELS.items()}
NUMPY = {name: ref for name, (_, ref) in KERNELS.items()}


def get_kernel(name, backend=None):
    """Return kernel ``name`` for ``backend`` ('numba', 'numpy' or None = active)."""
    if backend is None:
        backend = "numba" if USE_NUMBA else "numpy"
    if backend == "numba":
        return JITTED[name]
    if backend == "numpy":
        return NUMPY[name]
    raise ValueError(f"unknown backend {backend!r}")


def backend_name():
    return "numba" if USE_NUMBA else "numpy"


_active = JITTED if USE_NUMBA else NUMPY

kmeans_assign = _active["kmeans_assign"]
sq_dists = _active["sq_dists"]
pair_dots = _active["pair_dots"]
pair_scatter = _active["pair_scatter"]
contingency = _active["contingency"]
expected_mutual_info = _active["emi"]
calibration_bins = _active["calibration_bins"]
