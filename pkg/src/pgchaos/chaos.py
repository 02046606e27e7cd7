"""Hermite polynomial chaos: multi-indices, basis evaluation, norms, triple products.

Polynomials are the probabilists' Hermite family He_k, left unnormalized;
the squared norm of the multivariate term with exponents ``alpha`` is
``prod(alpha_i!)``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from numpy.polynomial.hermite_e import hermegauss

from . import _kernels

MAX_TERMS = 200_000


def term_count(n: int, p: int) -> int:
    """Number of multivariate terms of total degree <= p in n variables."""
    if n < 1 or p < 0:
        raise ValueError(f"need n >= 1 and p >= 0, got n={n}, p={p}")
    count = math.comb(n + p, p)
    if count > MAX_TERMS:
        raise OverflowError(f"{count} chaos terms exceeds the supported bound {MAX_TERMS}")
    return count


def multi_indices(n: int, p: int) -> np.ndarray:
    """Graded multi-indices, constant term first.

    Within one total degree the tuples run in descending lexicographic order,
    so for two variables the order is 1, x, y, x^2, xy, y^2.
    """
    term_count(n, p)
    out = []
    for degree in range(p + 1):
        block = [a for a in itertools.product(range(degree, -1, -1), repeat=n) if sum(a) == degree]
        out.extend(block)
    return np.array(out, dtype=np.int64).reshape(-1, n)


def hermite_uni(k: int, x):
    """Probabilists' Hermite polynomial He_k at ``x`` via the three-term recurrence."""
    if k < 0:
        raise ValueError("order must be non-negative")
    x = np.asarray(x, dtype=float)
    prev, cur = np.ones_like(x), x.copy()
    if k == 0:
        return prev if prev.ndim else float(prev)
    for j in range(1, k):
        prev, cur = cur, x * cur - j * prev
    return cur if cur.ndim else float(cur)


def eval_basis(alpha, xi) -> float:
    """Evaluate the multivariate term ``prod He_{alpha_i}(xi_i)``."""
    alpha = tuple(int(a) for a in alpha)
    xi = np.asarray(xi, dtype=float).ravel()
    if len(alpha) != xi.size:
        raise ValueError(f"multi-index has {len(alpha)} variables but xi has {xi.size}")
    return float(np.prod([hermite_uni(a, x) for a, x in zip(alpha, xi)]))


def norm_sq(alpha) -> float:
    """<psi_alpha^2> = prod(alpha_i!)."""
    return float(math.prod(math.factorial(int(a)) for a in alpha))


def _uni_triple(a: int, b: int) -> float:
    # <x He_a He_b> = a! [b = a-1] + b! [b = a+1]
    if b == a - 1:
        return float(math.factorial(a))
    if b == a + 1:
        return float(math.factorial(b))
    return 0.0


def triple_value(m: int, alpha, beta) -> float:
    """<xi_m psi_alpha psi_beta> from the exact univariate product formula."""
    val = 1.0
    for i, (a, b) in enumerate(zip(alpha, beta)):
        if i == m:
            val *= _uni_triple(int(a), int(b))
        elif a == b:
            val *= math.factorial(int(a))
        else:
            return 0.0
        if val == 0.0:
            return 0.0
    return val


@dataclass(frozen=True, eq=False)
class ChaosBasis:
    """Total-degree Hermite basis in ``n`` variables up to order ``p``."""

    n: int
    p: int
    indices: np.ndarray = field(init=False, repr=False)
    norms: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        idx = multi_indices(self.n, self.p)
        idx.flags.writeable = False
        norms = np.array([norm_sq(a) for a in idx])
        norms.flags.writeable = False
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "norms", norms)

    def __len__(self) -> int:
        return len(self.indices)

    @cached_property
    def position(self) -> dict[tuple[int, ...], int]:
        return {tuple(int(v) for v in a): j for j, a in enumerate(self.indices)}

    def index_of(self, alpha) -> int:
        try:
            return self.position[tuple(int(a) for a in alpha)]
        except KeyError:
            raise KeyError(f"multi-index {tuple(alpha)} not in order-{self.p} basis over {self.n} variables") from None

    def unit(self, m: int) -> int:
        """Position of the first-degree term xi_m."""
        e = [0] * self.n
        e[m] = 1
        return self.index_of(e)

    @cached_property
    def triples(self) -> np.ndarray:
        """``T[m, j, k] = <xi_m psi_j psi_k>``, shape ``(n, N+1, N+1)``."""
        size = len(self)
        T = np.zeros((self.n, size, size))
        pos = self.position
        for k, beta in enumerate(self.indices):
            for m in range(self.n):
                # xi_m psi_beta only touches beta +/- e_m
                for step in (-1, 1):
                    alpha = list(beta)
                    alpha[m] += step
                    if alpha[m] < 0:
                        continue
                    j = pos.get(tuple(int(a) for a in alpha))
                    if j is not None:
                        T[m, j, k] = triple_value(m, alpha, beta)
        T.flags.writeable = False
        return T

    def linear_triple(self, m: int, j: int, k: int) -> float:
        return float(self.triples[m, j, k])

    def evaluate(self, xi: np.ndarray) -> np.ndarray:
        """Basis values at sample points ``xi`` of shape ``(S, n)`` -> ``(S, N+1)``."""
        xi = np.atleast_2d(np.asarray(xi, dtype=float))
        if xi.shape[1] != self.n:
            raise ValueError(f"samples have {xi.shape[1]} variables, basis has {self.n}")
        return _kernels.eval_basis_table(self.indices, xi)

    def block_density(self) -> float:
        """Fraction of nonzero (j, k) blocks in the pattern of the linear Galerkin operator."""
        pattern = np.eye(len(self), dtype=bool) | np.any(self.triples != 0, axis=0)
        return float(pattern.mean())


def lognormal_coeffs(mu: float, sigma: float, p: int) -> np.ndarray:
    """Coefficients of ``exp(mu + sigma*xi)`` on He_0..He_p."""
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    k = np.arange(p + 1)
    scale = math.exp(mu + 0.5 * sigma * sigma)
    return scale * np.array([sigma**int(j) / math.factorial(int(j)) for j in k])


def gauss_hermite(level: int, n: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Tensor Gauss-Hermite rule for the standard normal in ``n`` dimensions.

    Returns nodes of shape ``(level**n, n)`` and weights summing to one.
    """
    x, w = hermegauss(level)
    w = w / w.sum()
    nodes = np.array(list(itertools.product(x, repeat=n))).reshape(-1, n)
    weights = np.prod(np.array(list(itertools.product(w, repeat=n))).reshape(-1, n), axis=1)
    return nodes, weights
