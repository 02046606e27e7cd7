"""Nominal and first-order sensitivity MNA matrices of a grid.

Vdd pins with a package resistance are Norton-transformed (conductance on
the diagonal, Vdd/RPKG injected), which keeps G symmetric positive
definite. Ideal pins (RPKG=0) fix their node and are eliminated.

The stochastic model in full mode has two normalized Gaussian variables,
xi_G (interconnect width/thickness) and xi_L (channel length)::

    G(xi) = Ga + Gg xi_G,          Gg = sigma_g Ga
    C(xi) = Ca + Cc xi_L,          Cc = gate_cap_fraction sigma_l Ca
    U(t, xi) = inj (1 + sigma_g xi_G) + B i(t) (1 + s_L xi_L)

In rhs-only mode G and C are deterministic and every load depends on the
threshold variable of its region.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np
import scipy.sparse as sp

from . import _kernels
from .chaos import ChaosBasis, lognormal_coeffs
from .netlist import GROUND, Grid
from .solver import SparseTriplets, compress


def combine_width_thickness(sigma_w: float, sigma_t: float) -> float:
    """1-sigma of the single conductance variable for G proportional to W*T."""
    if sigma_w < 0 or sigma_t < 0:
        raise ValueError("sigmas must be non-negative")
    return math.hypot(sigma_w, sigma_t)


@dataclass(frozen=True, eq=False)
class PerturbedSystem:
    """Linear stochastic MNA model over the free (non-fixed) nodes.

    Right-hand sides are kept as polynomial-chaos coefficients keyed by
    multi-index: ``inj_coef[alpha]`` scales the constant injection vector and
    ``load_coef[alpha][l]`` scales load ``l``'s waveform.
    """

    Ga: sp.csc_matrix
    Gg: sp.csc_matrix
    Ca: sp.csc_matrix
    Cc: sp.csc_matrix
    inj: np.ndarray
    load_matrix: sp.csr_matrix  # (M, L): stamps +-1 of each load
    load_times: np.ndarray
    load_values: np.ndarray
    load_offsets: np.ndarray
    inj_coef: Mapping[tuple, float]
    load_coef: Mapping[tuple, np.ndarray]
    n_vars: int
    g_var: int | None
    l_var: int | None
    sigma_g: float
    sigma_l: float
    vdd: float
    node_names: tuple[str, ...] = ()
    free_nodes: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    fixed_nodes: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    fixed_voltage: np.ndarray = field(default_factory=lambda: np.zeros(0))
    rhs_only: bool = False
    load_region: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    leak_fraction: float = 0.0
    leak_sigma: float = 0.0
    drain_sigma: float = 0.0
    load_sens_l: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def M(self) -> int:
        return self.Ga.shape[0]

    @property
    def n_loads(self) -> int:
        return self.load_matrix.shape[1]

    @property
    def n_grid_nodes(self) -> int:
        return len(self.free_nodes) + len(self.fixed_nodes)

    def load_currents(self, times: np.ndarray) -> np.ndarray:
        """Load waveforms on ``times``: ``(T, L)`` amperes."""
        t = np.asarray(times, dtype=float)
        if self.n_loads == 0:
            return np.zeros((len(t), 0))
        return _kernels.pwl_eval_many(self.load_times, self.load_values, self.load_offsets, t)

    def rhs_coefficients(self, times: np.ndarray, basis: ChaosBasis, currents: np.ndarray | None = None) -> np.ndarray:
        """Chaos coefficients of U(t, xi) on ``basis``: ``(T, N+1, M)``."""
        if basis.n != self.n_vars:
            raise ValueError(f"basis has {basis.n} variables, system has {self.n_vars}")
        I = self.load_currents(times) if currents is None else currents
        out = np.zeros((len(I), len(basis), self.M))
        for alpha, c in self.inj_coef.items():
            out[:, basis.index_of(alpha)] += c * self.inj
        for alpha, coef in self.load_coef.items():
            j = basis.index_of(alpha)
            if np.any(coef):
                out[:, j] += (self.load_matrix @ (I * coef).T).T
        return out

    # --- realizations at a fixed sample of the random variables ----------

    def matrices_at(self, xi) -> tuple[sp.csc_matrix, sp.csc_matrix]:
        xi = np.asarray(xi, dtype=float)
        G = self.Ga if self.g_var is None else self.Ga + xi[self.g_var] * self.Gg
        C = self.Ca if self.l_var is None else self.Ca + xi[self.l_var] * self.Cc
        return G.tocsc(), C.tocsc()

    def load_multiplier(self, xi) -> np.ndarray:
        """Exact per-load current scale at ``xi`` (not truncated)."""
        xi = np.asarray(xi, dtype=float)
        if self.rhs_only:
            z = xi[self.load_region]
            f = self.leak_fraction
            return (1 - f) * (1 + self.drain_sigma * z) + f * np.exp(self.leak_sigma * z)
        m = np.ones(self.n_loads)
        if self.l_var is not None:
            m = m + self.load_sens_l * xi[self.l_var]
        return m

    def inj_scale(self, xi) -> float:
        if self.g_var is None:
            return 1.0
        return 1.0 + self.sigma_g * float(np.asarray(xi)[self.g_var])

    def rhs_at(self, xi, currents: np.ndarray) -> np.ndarray:
        """U(t_k, xi) for every row of ``currents``: ``(T, M)``."""
        scaled = currents * self.load_multiplier(xi)
        return self.inj_scale(xi) * self.inj + (self.load_matrix @ scaled.T).T

    def expand(self, x: np.ndarray, fixed_fill: np.ndarray | float | None = None) -> np.ndarray:
        """Scatter free-node values ``(..., M)`` into all grid nodes.

        Fixed nodes take ``fixed_fill`` (their pin voltage by default).
        """
        x = np.asarray(x)
        out = np.empty(x.shape[:-1] + (self.n_grid_nodes,), dtype=x.dtype)
        out[..., self.free_nodes] = x
        out[..., self.fixed_nodes] = self.fixed_voltage if fixed_fill is None else fixed_fill
        return out

    def with_load_coefficients(self, load_coef: Mapping[tuple, np.ndarray], n_vars: int | None = None) -> "PerturbedSystem":
        return replace(self, load_coef=dict(load_coef), n_vars=self.n_vars if n_vars is None else n_vars)


def _pack_waveforms(loads) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    offsets = np.zeros(len(loads) + 1, dtype=np.int64)
    for i, e in enumerate(loads):
        offsets[i + 1] = offsets[i] + len(e.waveform.times)
    times = np.array([t for e in loads for t in e.waveform.times], dtype=float)
    values = np.array([v for e in loads for v in e.waveform.values], dtype=float)
    return times, values, offsets


def assemble(grid: Grid) -> PerturbedSystem:
    """Stamp nominal matrices and their sensitivities for ``grid``."""
    var = grid.variation
    n_all = len(grid.nodes)

    fixed: dict[int, float] = {}
    for e in grid.of_kind("V"):
        if e.rpkg == 0:
            i = grid.nodes[e.node_a]
            if i in fixed and fixed[i] != e.value:
                raise ValueError(f"ideal pins at node {e.node_a} disagree: {fixed[i]} V vs {e.value} V")
            fixed[i] = e.value
    fixed_nodes = np.array(sorted(fixed), dtype=np.int64)
    free_mask = np.ones(n_all, dtype=bool)
    free_mask[fixed_nodes] = False
    free_nodes = np.flatnonzero(free_mask)
    pos = -np.ones(n_all, dtype=np.int64)
    pos[free_nodes] = np.arange(len(free_nodes))
    M = len(free_nodes)

    def idx(name: str) -> int:
        return -1 if name == GROUND else int(pos[grid.nodes[name]])

    def voltage(name: str) -> float:
        return 0.0 if name == GROUND else fixed.get(grid.nodes[name], 0.0)

    g_entries: list[tuple[int, int, float]] = []
    c_entries: list[tuple[int, int, float]] = []
    inj = np.zeros(M)

    def stamp_two_terminal(entries, a, b, val, va=0.0, vb=0.0):
        ia, ib = idx(a), idx(b)
        if ia >= 0:
            entries.append((ia, ia, val))
        if ib >= 0:
            entries.append((ib, ib, val))
        if ia >= 0 and ib >= 0:
            entries.append((ia, ib, -val))
            entries.append((ib, ia, -val))
        elif ia >= 0:
            inj[ia] += val * vb
        elif ib >= 0:
            inj[ib] += val * va

    for e in grid.of_kind("R"):
        stamp_two_terminal(g_entries, e.node_a, e.node_b, 1.0 / e.value, voltage(e.node_a), voltage(e.node_b))
    for e in grid.of_kind("V"):
        i = idx(e.node_a)
        if e.rpkg > 0 and i >= 0:
            g_entries.append((i, i, 1.0 / e.rpkg))
            inj[i] += e.value / e.rpkg
    # pinned-node capacitors see a constant voltage, so they add nothing to U
    for e in grid.of_kind("C"):
        stamp_two_terminal(c_entries, e.node_a, e.node_b, e.value)

    loads = grid.loads
    rows, cols, vals = [], [], []
    for l, e in enumerate(loads):
        for node, sign in ((e.node_a, -1.0), (e.node_b, 1.0)):
            i = idx(node)
            if i >= 0:
                rows.append(i)
                cols.append(l)
                vals.append(sign)
    B = sp.csr_matrix((vals, (rows, cols)), shape=(M, len(loads)))
    times, values, offsets = _pack_waveforms(loads)

    Ga = compress(SparseTriplets.from_entries(M, g_entries))
    Ca = compress(SparseTriplets.from_entries(M, c_entries))

    common = dict(
        Ga=Ga, Ca=Ca, inj=inj, load_matrix=B, load_times=times, load_values=values, load_offsets=offsets,
        vdd=grid.vdd, node_names=tuple(grid.node_names), free_nodes=free_nodes, fixed_nodes=fixed_nodes,
        fixed_voltage=np.array([fixed[i] for i in fixed_nodes], dtype=float),
    )
    if var.rhs_only:
        node_region = {grid.nodes[n]: r for n, r in grid.regions.items()}
        region = np.zeros(len(loads), dtype=np.int64)
        for l, e in enumerate(loads):
            node = e.node_a if e.node_a != GROUND else e.node_b
            if grid.nodes[node] not in node_region:
                raise ValueError(f"load {e.name} at node {node} has no .REGION assignment")
            region[l] = node_region[grid.nodes[node]]
        n_regions = max(node_region.values(), default=-1) + 1
        if n_regions < 1:
            raise ValueError("rhs-only mode needs at least one .REGION")
        zero = (0,) * n_regions
        return PerturbedSystem(
            Gg=Ga * 0.0, Cc=Ca * 0.0, inj_coef={zero: 1.0}, load_coef={zero: np.ones(len(loads))},
            n_vars=n_regions, g_var=None, l_var=None, sigma_g=0.0, sigma_l=0.0, rhs_only=True,
            load_region=region, leak_fraction=var.leak_fraction, leak_sigma=var.leak_sigma,
            drain_sigma=var.drain_sigma, **common,
        )

    sigma_g = combine_width_thickness(var.sigma_w, var.sigma_t)
    sigma_l = var.sigma_l
    sens_l = np.full(len(loads), var.current_sensitivity * sigma_l)
    return PerturbedSystem(
        Gg=compress(SparseTriplets.from_entries(M, g_entries).scaled(sigma_g)),
        Cc=compress(SparseTriplets.from_entries(M, c_entries).scaled(var.gate_cap_fraction * sigma_l)),
        inj_coef={(0, 0): 1.0, (1, 0): sigma_g},
        load_coef={(0, 0): np.ones(len(loads)), (0, 1): sens_l},
        n_vars=2, g_var=0, l_var=1, sigma_g=sigma_g, sigma_l=sigma_l, load_sens_l=sens_l, **common,
    )


def rhs_expansion(grid: Grid, p: int, system: PerturbedSystem | None = None) -> dict[tuple, np.ndarray]:
    """Hermite coefficients (per load) of the rhs-only current model up to order ``p``.

    Each load scales as ``(1-f)(1 + d z) + f exp(s z)`` where ``z`` is the
    threshold variable of its region, ``f`` the leakage share, ``d`` the
    drain sensitivity and ``s`` the leakage log-sigma. Returns a mapping from
    multi-index to a length-L coefficient array.
    """
    sys_ = assemble(grid) if system is None else system
    if not sys_.rhs_only:
        raise ValueError("rhs_expansion needs a grid in rhs-only mode")
    n, L = sys_.n_vars, sys_.n_loads
    f = sys_.leak_fraction
    c = lognormal_coeffs(0.0, sys_.leak_sigma, p)
    out: dict[tuple, np.ndarray] = {(0,) * n: np.full(L, (1 - f) + f * c[0])}
    for r in range(n):
        mask = sys_.load_region == r
        for k in range(1, p + 1):
            alpha = [0] * n
            alpha[r] = k
            coef = f * c[k] + ((1 - f) * sys_.drain_sigma if k == 1 else 0.0)
            out[tuple(alpha)] = np.where(mask, coef, 0.0)
    return out


def node_coefficient_waveforms(system: PerturbedSystem, coef: Mapping[tuple, np.ndarray], basis: ChaosBasis,
                               times: np.ndarray) -> np.ndarray:
    """Per-node rhs coefficient waveforms U_0..U_N on ``times``: ``(T, N+1, M)``."""
    return system.with_load_coefficients(coef, basis.n).rhs_coefficients(times, basis)
