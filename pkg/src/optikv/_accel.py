"""Hot numeric kernels.

Every kernel exists twice: a numba ``@njit`` loop version and a numpy
version.  ``OPTIKV_DISABLE_JIT=1`` in the environment (read at import time)
selects the numpy path; so does a missing numba install.
"""

from __future__ import annotations

import os

import numpy as np

_DISABLED = os.environ.get("OPTIKV_DISABLE_JIT", "").strip().lower() in ("1", "true", "yes")

try:
    from numba import njit as _njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

USE_JIT = HAVE_NUMBA and not _DISABLED


def _jit(fn):
    if HAVE_NUMBA:
        return _njit(cache=True, nogil=True)(fn)
    return fn


# --------------------------------------------------------------------------
# vector clock replay
# --------------------------------------------------------------------------


def _replay_loop(proc, send_of, n_procs):
    n_ev = proc.shape[0]
    out = np.zeros((n_ev, n_procs), dtype=np.int32)
    cur = np.zeros((n_procs, n_procs), dtype=np.int32)
    for i in range(n_ev):
        p = proc[i]
        s = send_of[i]
        if s >= 0:
            for k in range(n_procs):
                if out[s, k] > cur[p, k]:
                    cur[p, k] = out[s, k]
        cur[p, p] += 1
        for k in range(n_procs):
            out[i, k] = cur[p, k]
    return out


_replay_jit = _jit(_replay_loop)


def _replay_numpy(proc, send_of, n_procs):
    n_ev = proc.shape[0]
    out = np.zeros((n_ev, n_procs), dtype=np.int32)
    cur = np.zeros((n_procs, n_procs), dtype=np.int32)
    for i in range(n_ev):
        p = proc[i]
        s = send_of[i]
        if s >= 0:
            np.maximum(cur[p], out[s], out=cur[p])
        cur[p, p] += 1
        out[i] = cur[p]
    return out


def replay_vector_clocks(proc, send_of, n_procs: int) -> np.ndarray:
    """Plain Fidge/Mattern clocks for an event sequence.

    ``proc[i]`` is the process of event ``i``; ``send_of[i]`` is the index of
    the matching send when event ``i`` is a receive, else -1.  Events must be
    listed in an order where every send precedes its receive.
    """
    proc = np.ascontiguousarray(proc, dtype=np.int64)
    send_of = np.ascontiguousarray(send_of, dtype=np.int64)
    if USE_JIT:
        return _replay_jit(proc, send_of, int(n_procs))
    return _replay_numpy(proc, send_of, int(n_procs))


# --------------------------------------------------------------------------
# strict dominance between two stacks of vectors
# --------------------------------------------------------------------------


def _less_loop(x, y):
    m = x.shape[0]
    k = y.shape[0]
    n = x.shape[1]
    out = np.zeros((m, k), dtype=np.bool_)
    for i in range(m):
        for j in range(k):
            le = True
            strict = False
            for c in range(n):
                a = x[i, c]
                b = y[j, c]
                if a > b:
                    le = False
                    break
                if a < b:
                    strict = True
            out[i, j] = le and strict
    return out


_less_jit = _jit(_less_loop)


def _less_numpy(x, y):
    le = np.all(x[:, None, :] <= y[None, :, :], axis=2)
    lt = np.any(x[:, None, :] < y[None, :, :], axis=2)
    return le & lt


def strictly_less(x, y) -> np.ndarray:
    """``out[i, j]`` is True iff ``x[i] <= y[j]`` elementwise with one strict."""
    x = np.ascontiguousarray(x, dtype=np.int64)
    y = np.ascontiguousarray(y, dtype=np.int64)
    if USE_JIT:
        return _less_jit(x, y)
    return _less_numpy(x, y)


# --------------------------------------------------------------------------
# greedy graph colouring over a CSR adjacency
# --------------------------------------------------------------------------


def _greedy_loop(indptr, indices, order, colors):
    out = colors.copy()
    max_deg = 0
    for v in range(indptr.shape[0] - 1):
        d = indptr[v + 1] - indptr[v]
        if d > max_deg:
            max_deg = d
    mark = np.full(max_deg + 2, -1, dtype=np.int64)
    for t in range(order.shape[0]):
        v = order[t]
        for e in range(indptr[v], indptr[v + 1]):
            c = out[indices[e]]
            if 0 <= c < mark.shape[0]:
                mark[c] = v
        c = 0
        while c < mark.shape[0] and mark[c] == v:
            c += 1
        out[v] = c
    return out


_greedy_jit = _jit(_greedy_loop)


def _greedy_numpy(indptr, indices, order, colors):
    out = colors.copy()
    for v in order:
        nb = out[indices[indptr[v]:indptr[v + 1]]]
        nb = nb[nb >= 0]
        if nb.size == 0:
            out[v] = 0
            continue
        used = np.zeros(nb.max() + 2, dtype=bool)
        used[nb] = True
        out[v] = int(np.argmin(used))
    return out


def greedy_color(indptr, indices, order, colors) -> np.ndarray:
    """Colour the vertices in ``order`` with the smallest colour absent among
    neighbours.  Pre-assigned colours (``>= 0``) in ``colors`` are kept for
    vertices not listed in ``order``."""
    indptr = np.ascontiguousarray(indptr, dtype=np.int64)
    indices = np.ascontiguousarray(indices, dtype=np.int64)
    order = np.ascontiguousarray(order, dtype=np.int64)
    colors = np.ascontiguousarray(colors, dtype=np.int64)
    if USE_JIT:
        return _greedy_jit(indptr, indices, order, colors)
    return _greedy_numpy(indptr, indices, order, colors)


def backend() -> str:
    return "numba" if USE_JIT else "numpy"
