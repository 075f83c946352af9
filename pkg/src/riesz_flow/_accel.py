"""Hot numeric kernels: numba-jitted implementations with a pure-numpy fallback.

The backend is chosen once at import time from the environment flag
``RIESZ_FLOW_NUMBA``:

* ``auto`` (default): use numba when importable, else numpy,
* ``1`` / ``on`` / ``true``: require numba (ConfigError if missing),
* ``0`` / ``off`` / ``false``: force the pure-numpy path.

``RIESZ_FLOW_WORKERS`` caps the numba thread count. Row-parallel kernels keep a
fixed summation order within each row and scalar reductions are sequential, so
results are bit-identical regardless of the worker count.

``benchmarks/bench_accel.py`` times both paths side by side.
"""

from __future__ import annotations

import os

import numpy as np

from .errors import ConfigError

_FLAG = os.environ.get("RIESZ_FLOW_NUMBA", "auto").strip().lower()
if _FLAG in ("0", "off", "false", "no"):
    _HAVE_NUMBA = False
elif _FLAG in ("1", "on", "true", "yes", "auto", ""):
    try:
        import numba  # noqa: F401

        _HAVE_NUMBA = True
    except ImportError:
        if _FLAG not in ("auto", ""):
            raise ConfigError("RIESZ_FLOW_NUMBA=%s but numba is not importable" % _FLAG)
        _HAVE_NUMBA = False
else:
    raise ConfigError("unrecognized RIESZ_FLOW_NUMBA value: %r" % _FLAG)


def backend() -> str:
    return "numba" if _HAVE_NUMBA else "numpy"


def worker_count() -> int:
    if _HAVE_NUMBA:
        from numba import get_num_threads

        return int(get_num_threads())
    return 1


# ---------------------------------------------------------------- numpy path

def _np_pairwise_dist(nodes):
    # chunked so the (chunk, N, dim) temporary stays ~50 MB at desk scale
    N = nodes.shape[0]
    out = np.empty((N, N))
    step = max(1, (1 << 21) // max(N, 1))
    for i0 in range(0, N, step):
        diff = nodes[i0:i0 + step, None, :] - nodes[None, :, :]
        out[i0:i0 + step] = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    return out


def _np_pairwise_gram(nodes):
    g = nodes @ nodes.T
    np.clip(g, -1.0, 1.0, out=g)
    return g


def _np_power_entries(dist, expo, amp):
    K = np.zeros_like(dist)
    off = ~np.eye(dist.shape[0], dtype=bool)
    K[off] = amp * dist[off] ** expo
    return K


def _np_matvec_weighted(K, f, w):
    return K @ (f * w)


def _np_weighted_inner(w, f, g):
    return float(np.dot(w, f * g))


def _np_weighted_pow_sum(w, u, p):
    return float(np.dot(w, u ** p))


def _np_abs_dev_pow_sum(w, q_field, a, expo_q, u, expo_u):
    return float(np.dot(w, np.abs(q_field - a) ** expo_q * u ** expo_u))


# ---------------------------------------------------------------- numba path

if _HAVE_NUMBA:
    import numba
    from numba import njit, prange

    numba.config.THREADING_LAYER = "workqueue"
    _workers = os.environ.get("RIESZ_FLOW_WORKERS", "").strip()
    if _workers:
        try:
            n = int(_workers)
        except ValueError:
            raise ConfigError("RIESZ_FLOW_WORKERS must be an integer, got %r" % _workers)
        if n < 1:
            raise ConfigError("RIESZ_FLOW_WORKERS must be >= 1")
        numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))

    # the parallel kernels pay a thread-launch cost per call; below the size
    # threshold the serial twins win by a wide margin
    PARALLEL_MIN_N = 768

    @njit(cache=True, parallel=True)
    def _nb_pairwise_dist_par(nodes):
        N, dim = nodes.shape
        out = np.empty((N, N))
        for i in prange(N):
            out[i, i] = 0.0
            for j in range(i + 1, N):
                acc = 0.0
                for k in range(dim):
                    d = nodes[i, k] - nodes[j, k]
                    acc += d * d
                out[i, j] = np.sqrt(acc)
        for i in prange(N):
            for j in range(i):
                out[i, j] = out[j, i]
        return out

    @njit(cache=True)
    def _nb_pairwise_dist_ser(nodes):
        N, dim = nodes.shape
        out = np.empty((N, N))
        for i in range(N):
            out[i, i] = 0.0
            for j in range(i + 1, N):
                acc = 0.0
                for k in range(dim):
                    d = nodes[i, k] - nodes[j, k]
                    acc += d * d
                out[i, j] = np.sqrt(acc)
        for i in range(N):
            for j in range(i):
                out[i, j] = out[j, i]
        return out

    def _nb_pairwise_dist(nodes):
        if nodes.shape[0] >= PARALLEL_MIN_N:
            return _nb_pairwise_dist_par(nodes)
        return _nb_pairwise_dist_ser(nodes)

    @njit(cache=True, parallel=True)
    def _nb_pairwise_gram_par(nodes):
        N, dim = nodes.shape
        out = np.empty((N, N))
        for i in prange(N):
            for j in range(N):
                acc = 0.0
                for k in range(dim):
                    acc += nodes[i, k] * nodes[j, k]
                out[i, j] = min(1.0, max(-1.0, acc))
        return out

    @njit(cache=True)
    def _nb_pairwise_gram_ser(nodes):
        N, dim = nodes.shape
        out = np.empty((N, N))
        for i in range(N):
            for j in range(N):
                acc = 0.0
                for k in range(dim):
                    acc += nodes[i, k] * nodes[j, k]
                out[i, j] = min(1.0, max(-1.0, acc))
        return out

    def _nb_pairwise_gram(nodes):
        if nodes.shape[0] >= PARALLEL_MIN_N:
            return _nb_pairwise_gram_par(nodes)
        return _nb_pairwise_gram_ser(nodes)

    @njit(cache=True, parallel=True)
    def _nb_power_entries_par(dist, expo, amp):
        N = dist.shape[0]
        K = np.empty((N, N))
        for i in prange(N):
            for j in range(N):
                K[i, j] = amp * dist[i, j] ** expo if i != j else 0.0
        return K

    @njit(cache=True)
    def _nb_power_entries_ser(dist, expo, amp):
        N = dist.shape[0]
        K = np.empty((N, N))
        for i in range(N):
            for j in range(N):
                K[i, j] = amp * dist[i, j] ** expo if i != j else 0.0
        return K

    def _nb_power_entries(dist, expo, amp):
        if dist.shape[0] >= PARALLEL_MIN_N:
            return _nb_power_entries_par(dist, expo, amp)
        return _nb_power_entries_ser(dist, expo, amp)

    @njit(cache=True, parallel=True)
    def _nb_matvec_weighted_par(K, f, w):
        N = K.shape[0]
        fw = f * w
        out = np.empty(N)
        for i in prange(N):
            acc = 0.0
            for j in range(N):
                acc += K[i, j] * fw[j]
            out[i] = acc
        return out

    @njit(cache=True)
    def _nb_matvec_weighted_ser(K, f, w):
        N = K.shape[0]
        fw = f * w
        out = np.empty(N)
        for i in range(N):
            acc = 0.0
            for j in range(N):
                acc += K[i, j] * fw[j]
            out[i] = acc
        return out

    def _nb_matvec_weighted(K, f, w):
        if K.shape[0] >= PARALLEL_MIN_N:
            return _nb_matvec_weighted_par(K, f, w)
        return _nb_matvec_weighted_ser(K, f, w)

    # reductions stay sequential: O(N) work, and a fixed summation order keeps
    # every scalar diagnostic bit-identical across worker counts
    @njit(cache=True)
    def _nb_weighted_inner(w, f, g):
        acc = 0.0
        for i in range(w.shape[0]):
            acc += w[i] * f[i] * g[i]
        return acc

    @njit(cache=True)
    def _nb_weighted_pow_sum(w, u, p):
        acc = 0.0
        for i in range(w.shape[0]):
            acc += w[i] * u[i] ** p
        return acc

    @njit(cache=True)
    def _nb_abs_dev_pow_sum(w, q_field, a, expo_q, u, expo_u):
        acc = 0.0
        for i in range(w.shape[0]):
            acc += w[i] * np.abs(q_field[i] - a) ** expo_q * u[i] ** expo_u
        return acc

    pairwise_dist = _nb_pairwise_dist
    pairwise_gram = _nb_pairwise_gram
    power_entries = _nb_power_entries
    matvec_weighted = _nb_matvec_weighted
    weighted_inner = _nb_weighted_inner
    weighted_pow_sum = _nb_weighted_pow_sum
    abs_dev_pow_sum = _nb_abs_dev_pow_sum
else:
    pairwise_dist = _np_pairwise_dist
    pairwise_gram = _np_pairwise_gram
    power_entries = _np_power_entries
    matvec_weighted = _np_matvec_weighted
    weighted_inner = _np_weighted_inner
    weighted_pow_sum = _np_weighted_pow_sum
    abs_dev_pow_sum = _np_abs_dev_pow_sum
