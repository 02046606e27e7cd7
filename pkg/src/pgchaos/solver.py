"""Sparse direct solves and fixed-step backward-Euler integration."""
from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla


class SingularMatrixError(RuntimeError):
    """The matrix has a zero (or numerically negligible) pivot."""


@dataclass(frozen=True)
class SparseTriplets:
    dimension: int
    rows: np.ndarray
    cols: np.ndarray
    values: np.ndarray

    @classmethod
    def from_entries(cls, dimension: int, entries) -> "SparseTriplets":
        entries = list(entries)
        if not entries:
            return cls(dimension, np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(0))
        r, c, v = zip(*entries)
        return cls(dimension, np.asarray(r, np.int64), np.asarray(c, np.int64), np.asarray(v, float))

    def scaled(self, factor: float) -> "SparseTriplets":
        return SparseTriplets(self.dimension, self.rows, self.cols, self.values * factor)


def compress(t: SparseTriplets) -> sp.csc_matrix:
    """Sum duplicates and return a canonical CSC matrix without explicit zeros."""
    n = t.dimension
    if t.rows.size and (t.rows.min() < 0 or t.cols.min() < 0 or t.rows.max() >= n or t.cols.max() >= n):
        raise IndexError(f"triplet index out of bounds for dimension {n}")
    m = sp.coo_matrix((t.values, (t.rows, t.cols)), shape=(n, n)).tocsc()
    m.sum_duplicates()
    m.eliminate_zeros()
    m.sort_indices()
    return m


def _as_csc(m) -> sp.csc_matrix:
    return m if sp.issparse(m) and m.format == "csc" else sp.csc_matrix(m)


# Factorizations performed in this process; tests use it to check reuse.
factor_count = 0
_count_lock = threading.Lock()


class Factorization:
    """Reusable sparse LU factors (SuperLU, symmetric fill-reducing ordering)."""

    def __init__(self, m):
        global factor_count
        m = _as_csc(m)
        if m.shape[0] != m.shape[1]:
            raise ValueError("matrix must be square")
        self.dimension = m.shape[0]
        try:
            self._lu = spla.splu(m, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                                 options={"SymmetricMode": True})
        except RuntimeError as exc:
            raise SingularMatrixError(str(exc)) from None
        pivots = np.abs(self._lu.U.diagonal())
        scale = float(np.abs(m.data).max()) if m.nnz else 0.0
        if pivots.size and (scale == 0.0 or pivots.min() <= 1e-13 * scale):
            raise SingularMatrixError("numerically singular matrix (floating node or bad step?)")
        with _count_lock:
            factor_count += 1

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """Solve for one right-hand side ``(dim,)`` or several ``(dim, k)``."""
        return self._lu.solve(np.asarray(rhs, dtype=float))


def factor(m) -> Factorization:
    return Factorization(m)


def time_grid(h: float, t_end: float) -> np.ndarray:
    """Uniform grid ``0, h, ..., K*h`` with ``K = round(t_end / h)``."""
    if not h > 0:
        raise ValueError("time step must be positive")
    if t_end < h * (1 - 1e-9):
        raise ValueError("t_end must be at least one step")
    steps = int(round(t_end / h))
    return h * np.arange(steps + 1)


def transient(
    G,
    C,
    u: Callable[[float], np.ndarray] | np.ndarray,
    h: float,
    t_end: float,
    x0: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Backward-Euler transient of ``G x + C dx/dt = u(t)``.

    ``u`` is a callable of time or a precomputed array with one row per
    point of :func:`time_grid`. Rows of a 2-D ``u`` may themselves be
    matrices (several right-hand sides sharing ``G`` and ``C``). Without
    ``x0`` the state starts at the DC solution for ``u(0)``.

    Returns ``(times, X)`` with ``X[k]`` the state at ``times[k]``.
    """
    times = time_grid(h, t_end)
    if callable(u):
        rhs = lambda k: u(times[k])  # noqa: E731
    else:
        u = np.asarray(u, dtype=float)
        if len(u) != len(times):
            raise ValueError(f"u has {len(u)} rows, time grid has {len(times)}")
        rhs = lambda k: u[k]  # noqa: E731
    G = _as_csc(G)
    Ch = _as_csc(C) / h
    if x0 is None:
        x = factor(G).solve(rhs(0))
    else:
        x = np.array(x0, dtype=float)
    lu = factor(G + Ch)
    X = np.empty((len(times),) + x.shape)
    X[0] = x
    for k in range(1, len(times)):
        x = lu.solve(rhs(k) + Ch @ x)
        X[k] = x
    return times, X
