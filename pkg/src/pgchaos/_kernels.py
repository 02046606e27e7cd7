"""Hot inner loops, compiled with numba when available.

Every kernel has a pure-numpy twin (``*_np``) and a numba twin (``*_nb``).
The public name is bound to the numba twin unless numba is missing or the
environment variable ``PGCHAOS_NO_NUMBA`` is set to a non-empty value other
than ``0``. Both twins are always importable so they can be checked against
each other.
"""
from __future__ import annotations

import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None

HAVE_NUMBA = numba is not None
USE_NUMBA = HAVE_NUMBA and os.environ.get("PGCHAOS_NO_NUMBA", "0") in ("", "0")


def _njit(func):
    if not HAVE_NUMBA:
        return func
    return numba.njit(cache=True, nogil=True)(func)


# --- piecewise-linear load evaluation ------------------------------------

def pwl_eval_many_np(times, values, offsets, t):
    """Evaluate many PWL waveforms on one time grid.

    Waveform ``i`` owns ``times[offsets[i]:offsets[i+1]]`` (and matching
    ``values``). Returns an array of shape ``(len(t), n_waveforms)``.
    """
    n = len(offsets) - 1
    out = np.empty((len(t), n))
    for i in range(n):
        a, b = offsets[i], offsets[i + 1]
        out[:, i] = np.interp(t, times[a:b], values[a:b])
    return out


@_njit
def pwl_eval_many_nb(times, values, offsets, t):
    n = len(offsets) - 1
    out = np.empty((len(t), n))
    for i in range(n):
        a = offsets[i]
        b = offsets[i + 1]
        seg = a
        for k in range(len(t)):
            tk = t[k]
            if tk <= times[a]:
                out[k, i] = values[a]
                continue
            if tk >= times[b - 1]:
                out[k, i] = values[b - 1]
                continue
            # t is usually sorted, so resume the scan from the last segment
            if tk < times[seg]:
                seg = a
            while times[seg + 1] < tk:
                seg += 1
            t0 = times[seg]
            t1 = times[seg + 1]
            v0 = values[seg]
            out[k, i] = v0 + (values[seg + 1] - v0) * (tk - t0) / (t1 - t0)
    return out


# --- streaming moments ----------------------------------------------------

def welford_update_np(count, mean, m2, x):
    """Fold one sample ``x`` into running ``mean``/``m2`` in place.

    ``count`` is the sample count *after* this update.
    """
    delta = x - mean
    mean += delta / count
    m2 += delta * (x - mean)


@_njit
def welford_update_nb(count, mean, m2, x):
    mf = mean.ravel()
    sf = m2.ravel()
    xf = x.ravel()
    inv = 1.0 / count
    for i in range(xf.size):
        d = xf[i] - mf[i]
        mf[i] += d * inv
        sf[i] += d * (xf[i] - mf[i])


def welford_merge(n_a, mean_a, m2_a, n_b, mean_b, m2_b):
    """Combine two partial accumulators (Chan et al.); returns a new triple."""
    n = n_a + n_b
    if n_a == 0:
        return n_b, mean_b.copy(), m2_b.copy()
    if n_b == 0:
        return n_a, mean_a.copy(), m2_a.copy()
    delta = mean_b - mean_a
    mean = mean_a + delta * (n_b / n)
    m2 = m2_a + m2_b + delta * delta * (n_a * n_b / n)
    return n, mean, m2


# --- Hermite basis tables -------------------------------------------------

def eval_basis_table_np(indices, xi):
    """Values of every multivariate Hermite term at every sample: ``(S, N+1)``."""
    S, n = xi.shape
    pmax = int(indices.max()) if indices.size else 0
    he = np.empty((pmax + 1, S, n))
    he[0] = 1.0
    if pmax >= 1:
        he[1] = xi
    for k in range(1, pmax):
        he[k + 1] = xi * he[k] - k * he[k - 1]
    out = np.ones((S, len(indices)))
    for j, alpha in enumerate(indices):
        for m, a in enumerate(alpha):
            if a:
                out[:, j] *= he[a, :, m]
    return out


@_njit
def eval_basis_table_nb(indices, xi):
    S, n = xi.shape
    T = indices.shape[0]
    pmax = 0
    for j in range(T):
        for m in range(n):
            if indices[j, m] > pmax:
                pmax = indices[j, m]
    out = np.ones((S, T))
    he = np.empty((pmax + 1, n))
    for s in range(S):
        for m in range(n):
            he[0, m] = 1.0
            if pmax >= 1:
                he[1, m] = xi[s, m]
            for k in range(1, pmax):
                he[k + 1, m] = xi[s, m] * he[k, m] - k * he[k - 1, m]
        for j in range(T):
            v = 1.0
            for m in range(n):
                a = indices[j, m]
                if a:
                    v *= he[a, m]
            out[s, j] = v
    return out


if USE_NUMBA:
    pwl_eval_many = pwl_eval_many_nb
    welford_update = welford_update_nb
    eval_basis_table = eval_basis_table_nb
else:
    pwl_eval_many = pwl_eval_many_np
    welford_update = welford_update_np
    eval_basis_table = eval_basis_table_np


def warm_up() -> None:
    """Trigger JIT compilation so that later timings exclude it."""
    if not USE_NUMBA:
        return
    pwl_eval_many(np.array([0.0, 1.0]), np.array([0.0, 1.0]), np.array([0, 2], dtype=np.int64), np.array([0.5]))
    welford_update(1, np.zeros((2, 2)), np.zeros((2, 2)), np.ones((2, 2)))
    eval_basis_table(np.zeros((1, 1), dtype=np.int64), np.zeros((1, 1)))
