"""Stochastic Galerkin projection of the perturbed MNA system.

Block (j, k) of the augmented conductance matrix is
``<psi_j psi_k> Ga + <xi_G psi_j psi_k> Gg``; the capacitance matrix is
built the same way from Ca, Cc and xi_L. Blocks are kept as weight tables
over the four base matrices and only materialized (via Kronecker products)
when a factorization needs them. Unknowns are ordered term-major:
coefficient ``a_j`` occupies rows ``j*M:(j+1)*M``.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp

from .chaos import ChaosBasis
from .mna import PerturbedSystem


@dataclass(frozen=True, eq=False)
class AugmentedSystem:
    system: PerturbedSystem
    basis: ChaosBasis
    weights: dict  # source label -> (N+1, N+1) weight table

    @property
    def M(self) -> int:
        return self.system.M

    @property
    def size(self) -> int:
        return len(self.basis) * self.M

    def _sources(self):
        s = self.system
        return {"Ga": s.Ga, "Gg": s.Gg, "Ca": s.Ca, "Cc": s.Cc}

    def _combine(self, labels, scale=1.0) -> sp.csr_matrix:
        src = self._sources()
        out = sp.csr_matrix((self.size, self.size))
        for label in labels:
            W = self.weights[label]
            if np.any(W) and src[label].nnz:
                out = out + scale * sp.kron(sp.csr_matrix(W), src[label], format="csr")
        out.eliminate_zeros()
        return out

    def G_tilde(self) -> sp.csr_matrix:
        return self._combine(("Ga", "Gg"))

    def C_tilde(self) -> sp.csr_matrix:
        return self._combine(("Ca", "Cc"))

    def step_matrix(self, h: float) -> sp.csc_matrix:
        """``G~ + C~/h`` as one flat sparse matrix."""
        return (self.G_tilde() + self.C_tilde() / h).tocsc()

    def blocks(self, which: str) -> list[list[list[tuple[float, str]]]]:
        """Block references ``[(scale, source), ...]`` for ``which`` in {"G", "C"}."""
        labels = ("Ga", "Gg") if which.upper() == "G" else ("Ca", "Cc")
        n = len(self.basis)
        out = [[[] for _ in range(n)] for _ in range(n)]
        for label in labels:
            W = self.weights[label]
            for j, k in zip(*np.nonzero(W)):
                out[j][k].append((float(W[j, k]), label))
        return out

    def block_pattern(self, which: str) -> str:
        """Text dump of the block pattern, one row of labels per line (``0`` = empty)."""
        def cell(terms):
            if not terms:
                return "0"
            return "+".join(("" if s == 1 else f"{s:g}") + label for s, label in terms)

        return "\n".join(" ".join(cell(t) for t in row) for row in self.blocks(which))

    def rhs(self, times: np.ndarray, currents: np.ndarray | None = None) -> np.ndarray:
        """Projected right-hand sides ``<U psi_j>`` stacked term-major: ``(T, (N+1) M)``."""
        U = self.system.rhs_coefficients(times, self.basis, currents)
        U *= self.basis.norms[None, :, None]
        return U.reshape(len(U), -1)


def assemble_augmented(sys_: PerturbedSystem, basis: ChaosBasis) -> AugmentedSystem:
    """Galerkin-project ``sys_`` onto ``basis``."""
    if basis.n != sys_.n_vars:
        raise ValueError(f"basis has {basis.n} variables but the system depends on {sys_.n_vars}")
    for var, name in ((sys_.g_var, "xi_G"), (sys_.l_var, "xi_L")):
        if var is not None and not 0 <= var < basis.n:
            raise ValueError(f"{name} maps to variable {var}, outside a {basis.n}-variable basis")
    D = np.diag(basis.norms)
    zero = np.zeros_like(D)
    weights = {
        "Ga": D,
        "Gg": basis.triples[sys_.g_var] if sys_.g_var is not None else zero,
        "Ca": D,
        "Cc": basis.triples[sys_.l_var] if sys_.l_var is not None else zero,
    }
    return AugmentedSystem(sys_, basis, weights)


@dataclass(frozen=True, eq=False)
class DecoupledSystem:
    """N+1 independent systems ``(G + sC) x_n = U_n`` sharing one matrix pair."""

    G: sp.csc_matrix
    C: sp.csc_matrix
    system: PerturbedSystem
    basis: ChaosBasis

    def __len__(self) -> int:
        return len(self.basis)

    def rhs(self, times: np.ndarray, currents: np.ndarray | None = None) -> np.ndarray:
        """All right-hand sides at once: ``(T, M, N+1)`` (column n is U_n)."""
        return self.system.rhs_coefficients(times, self.basis, currents).transpose(0, 2, 1)

    def __getitem__(self, n: int):
        if not -len(self) <= n < len(self):
            raise IndexError(n)
        return self.G, self.C, lambda times: self.rhs(np.atleast_1d(times))[:, :, n]


def assemble_rhs_only(sys_: PerturbedSystem, load_coef=None, p: int | None = None) -> DecoupledSystem:
    """Decoupled path for deterministic G, C and a stochastic right-hand side.

    ``load_coef`` (multi-index -> per-load coefficients, e.g. from
    :func:`pgchaos.mna.rhs_expansion`) replaces the system's own rhs model.
    The basis order defaults to the highest degree present in the rhs.
    """
    if sys_.Gg.count_nonzero() or sys_.Cc.count_nonzero():
        raise ValueError("decoupled solve needs deterministic matrices (Gg = Cc = 0)")
    if load_coef is not None:
        n = len(next(iter(load_coef)))
        sys_ = sys_.with_load_coefficients(load_coef, n)
        if any(len(a) != n for a in sys_.inj_coef):
            if any(any(a) for a in sys_.inj_coef):
                raise ValueError("stochastic injections cannot be remapped onto a new variable set")
            sys_ = replace(sys_, inj_coef={(0,) * n: sum(sys_.inj_coef.values())})
    if p is None:
        p = max(sum(a) for a in list(sys_.load_coef) + list(sys_.inj_coef))
    basis = ChaosBasis(sys_.n_vars, p)
    return DecoupledSystem(sys_.Ga.tocsc(), sys_.Ca.tocsc(), sys_, basis)


def reconstruct(basis: ChaosBasis, a: np.ndarray, xi) -> np.ndarray:
    """Evaluate the expansion with stacked coefficients ``a`` ((N+1) M,) at ``xi``."""
    psi = basis.evaluate(np.atleast_2d(xi))[0]
    return psi @ np.asarray(a).reshape(len(basis), -1)


def residual_check(
    aug: AugmentedSystem,
    a: np.ndarray,
    xi,
    t: float,
    a_prev: np.ndarray | None = None,
    h: float | None = None,
) -> float:
    """Norm of the truncation residual ``G(xi) x + C(xi) dx/dt - U(xi)`` at one sample.

    Without ``a_prev`` the DC residual is returned; otherwise the time
    derivative is the backward difference ``(x - x_prev) / h``.
    """
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    sys_ = aug.system
    x = reconstruct(aug.basis, a, xi)
    G, C = sys_.matrices_at(xi)
    U_coef = sys_.rhs_coefficients(np.array([t]), aug.basis)[0]
    U = aug.basis.evaluate(xi[None, :])[0] @ U_coef
    r = G @ x - U
    if a_prev is not None:
        if not h:
            raise ValueError("a positive step h is needed with a_prev")
        r = r + C @ (x - reconstruct(aug.basis, a_prev, xi)) / h
    return float(np.linalg.norm(r))
