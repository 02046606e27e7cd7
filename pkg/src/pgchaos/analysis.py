"""End-to-end engines: polynomial chaos, Monte Carlo and tensor quadrature.

All engines report the voltage *drop* ``Vdd - v`` at every grid node on a
uniform backward-Euler time grid.
"""
from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _kernels, solver
from .chaos import ChaosBasis, gauss_hermite
from .galerkin import assemble_augmented, assemble_rhs_only
from .mna import PerturbedSystem, assemble, rhs_expansion
from .netlist import Grid
from .solver import SingularMatrixError, time_grid, transient

TRUNCATION = 4.0
QUAD_POINT_CAP = 4096
MC_CHUNK = 32


@dataclass
class Moments:
    """Per-node mean and variance of the drop on a time grid."""

    times: np.ndarray
    node_names: list[str]
    mean: np.ndarray  # (T, nodes)
    var: np.ndarray
    vdd: float
    elapsed_s: float = 0.0
    nominal: np.ndarray | None = None
    engine: str = ""

    @property
    def std(self) -> np.ndarray:
        return np.sqrt(np.maximum(self.var, 0.0))


@dataclass
class PcResult:
    basis: ChaosBasis
    times: np.ndarray
    coeffs: np.ndarray  # (T, N+1, nodes) drop coefficients
    node_names: list[str]
    vdd: float
    elapsed_s: float = 0.0
    nominal: np.ndarray | None = None
    factorizations: int = 0

    @property
    def mean(self) -> np.ndarray:
        return self.coeffs[:, 0, :]

    @property
    def variance(self) -> np.ndarray:
        w = self.basis.norms[1:]
        return np.einsum("tjn,j->tn", self.coeffs[:, 1:, :] ** 2, w)

    def moments(self) -> Moments:
        return Moments(self.times, self.node_names, self.mean, self.variance, self.vdd,
                       self.elapsed_s, self.nominal, "pc")


@dataclass
class McResult:
    times: np.ndarray
    node_names: list[str]
    count: int
    mean: np.ndarray
    m2: np.ndarray
    seed: int
    samples: int
    vdd: float
    failures: int = 0
    elapsed_s: float = 0.0
    nominal: np.ndarray | None = None
    tracked: dict = field(default_factory=dict)  # (node, step) -> per-sample drops

    @property
    def variance(self) -> np.ndarray:
        return self.m2 / max(self.count - 1, 1)

    def moments(self) -> Moments:
        return Moments(self.times, self.node_names, self.mean, self.variance, self.vdd,
                       self.elapsed_s, self.nominal, "mc")


@dataclass
class ComparisonReport:
    avg_pct_err_mu: float
    max_pct_err_mu: float
    avg_pct_err_sigma: float
    max_pct_err_sigma: float
    pm3sigma_pct_of_nominal: float
    time_ref_s: float
    time_pc_s: float
    speedup: float
    excluded_sigma_cells: int = 0

    FIELDS = ("avg_pct_err_mu", "max_pct_err_mu", "avg_pct_err_sigma", "max_pct_err_sigma",
              "pm3sigma_pct_of_nominal", "time_ref_s", "time_pc_s", "speedup")

    def as_dict(self) -> dict:
        out = {k: float(getattr(self, k)) for k in self.FIELDS}
        out["excluded_sigma_cells"] = int(self.excluded_sigma_cells)
        return out


# --- shared plumbing -------------------------------------------------------

def _setup(grid, h, t_end):
    if isinstance(grid, PerturbedSystem):
        sys_ = grid
        if h is None or t_end is None:
            raise ValueError("h and t_end are required when passing a PerturbedSystem")
    else:
        sys_ = assemble(grid)
        h = grid.default_step() if h is None else h
        t_end = grid.default_horizon() if t_end is None else t_end
    times = time_grid(h, t_end)
    return sys_, h, t_end, times, sys_.load_currents(times)


def _node_names(sys_: PerturbedSystem) -> list[str]:
    if sys_.node_names:
        return list(sys_.node_names)
    return [str(i) for i in range(sys_.n_grid_nodes)]


def _drop(sys_: PerturbedSystem, volts: np.ndarray) -> np.ndarray:
    return sys_.vdd - sys_.expand(volts)


def _sample_drop(sys_, xi, times, currents, h, t_end):
    G, C = sys_.matrices_at(xi)
    if G.diagonal().min(initial=1.0) <= 0 or C.diagonal().min(initial=0.0) < 0:
        raise SingularMatrixError(f"sample {xi} makes G or C indefinite")
    _, X = transient(G, C, sys_.rhs_at(xi, currents), h, t_end)
    return _drop(sys_, X)


def nominal_drop(grid, h=None, t_end=None) -> np.ndarray:
    """Drop with every random variable at zero: ``(T, nodes)``."""
    sys_, h, t_end, times, currents = _setup(grid, h, t_end)
    return _sample_drop(sys_, np.zeros(sys_.n_vars), times, currents, h, t_end)


def truncated_normal(rng: np.random.Generator, size, bound: float = TRUNCATION) -> np.ndarray:
    """Standard normal draws rejected outside ``[-bound, bound]``."""
    x = rng.standard_normal(size)
    bad = np.abs(x) > bound
    while bad.any():
        x[bad] = rng.standard_normal(int(bad.sum()))
        bad = np.abs(x) > bound
    return x


# --- polynomial chaos --------------------------------------------------------

def run_pc(grid: Grid | PerturbedSystem, p: int = 2, h: float | None = None, t_end: float | None = None,
           init: str = "dc") -> PcResult:
    """Galerkin polynomial-chaos transient.

    ``init="dc"`` starts from the Galerkin DC solution at t=0;
    ``init="rest"`` starts every node at Vdd with zero spread, which is exact
    when the loads are zero at t=0 and all pins share one voltage.
    """
    if p < 1:
        raise ValueError("expansion order must be at least 1")

    _kernels.warm_up()
    sys_, h, t_end, times, currents = _setup(grid, h, t_end)
    f0 = solver.factor_count
    t0 = time.perf_counter()
    if sys_.rhs_only:
        dec = assemble_rhs_only(sys_, rhs_expansion(None, p, sys_), p)
        basis = dec.basis
        x0 = _rest_state(sys_, (sys_.M, len(basis)), axis=1) if init == "rest" else None
        _, X = transient(dec.G, dec.C, dec.rhs(times, currents), h, t_end, x0)
        volts = X.transpose(0, 2, 1)
    else:
        basis = ChaosBasis(sys_.n_vars, p)
        aug = assemble_augmented(sys_, basis)
        x0 = _rest_state(sys_, (len(basis), sys_.M), axis=0).ravel() if init == "rest" else None
        _, X = transient(aug.G_tilde(), aug.C_tilde(), aug.rhs(times, currents), h, t_end, x0)
        volts = X.reshape(len(times), len(basis), sys_.M)
    elapsed = time.perf_counter() - t0
    nfact = solver.factor_count - f0

    coeffs = -sys_.expand(volts, 0.0)
    coeffs[:, 0, :] = sys_.vdd - sys_.expand(volts[:, 0, :])
    nominal = _sample_drop(sys_, np.zeros(sys_.n_vars), times, currents, h, t_end)
    return PcResult(basis, times, coeffs, _node_names(sys_), sys_.vdd, elapsed, nominal, nfact)


def _rest_state(sys_: PerturbedSystem, shape, axis: int) -> np.ndarray:
    rest = sys_.Ga @ np.full(sys_.M, sys_.vdd)
    if not np.allclose(rest, sys_.inj, rtol=1e-12, atol=1e-12 * max(1.0, np.abs(sys_.inj).max(initial=0.0))):
        raise ValueError("init='rest' needs every pin at the same voltage")
    x0 = np.zeros(shape)
    if axis == 0:
        x0[0, :] = sys_.vdd
    else:
        x0[:, 0] = sys_.vdd
    return x0


def _resolve(node_names, times, node, t):
    if isinstance(node, str):
        try:
            n = node_names.index(node)
        except ValueError:
            raise KeyError(f"unknown node {node!r}") from None
    else:
        n = int(node)
        if not 0 <= n < len(node_names):
            raise IndexError(f"node index {n} out of range")
    k = int(np.argmin(np.abs(times - t)))
    h = times[1] - times[0] if len(times) > 1 else 1.0
    if abs(times[k] - t) > 0.5 * h + 1e-15:
        raise ValueError(f"time {t} is outside the simulated grid")
    return n, k


def pc_mean(r: PcResult, node, t: float) -> float:
    n, k = _resolve(r.node_names, r.times, node, t)
    return float(r.coeffs[k, 0, n])


def pc_variance(r: PcResult, node, t: float) -> float:
    n, k = _resolve(r.node_names, r.times, node, t)
    a = r.coeffs[k, 1:, n]
    return float(np.sum(a * a * r.basis.norms[1:]))


def pc_moment(r: PcResult, node, t: float, k: int) -> float:
    """Raw moment E[x^k] of the expansion by exact Gauss-Hermite quadrature."""
    if k < 1:
        raise ValueError("moment order must be >= 1")
    n, step = _resolve(r.node_names, r.times, node, t)
    if k == 1:
        return float(r.coeffs[step, 0, n])
    level = math.ceil((k * r.basis.p + 1) / 2)
    nodes, weights = gauss_hermite(level, r.basis.n)
    x = r.basis.evaluate(nodes) @ r.coeffs[step, :, n]
    return float(weights @ x**k)


def sample_distribution(r: PcResult, node, t: float, samples: int = 10_000, seed: int = 0,
                        bins: int = 50, range: tuple[float, float] | None = None):
    """Histogram of the expansion at one node/time under truncated Gaussian inputs.

    Returns ``(edges, counts)``.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    if bins < 1:
        raise ValueError("bins must be >= 1")
    n, k = _resolve(r.node_names, r.times, node, t)
    xi = truncated_normal(np.random.default_rng(seed), (samples, r.basis.n))
    values = r.basis.evaluate(xi) @ r.coeffs[k, :, n]
    counts, edges = np.histogram(values, bins=bins, range=range)
    return edges, counts


def sample_expansion(r: PcResult, node, t: float, samples: int, seed: int = 0) -> np.ndarray:
    n, k = _resolve(r.node_names, r.times, node, t)
    xi = truncated_normal(np.random.default_rng(seed), (samples, r.basis.n))
    return r.basis.evaluate(xi) @ r.coeffs[k, :, n]


# --- Monte Carlo -------------------------------------------------------------

def sample_xi(seed: int, index: int, n: int) -> np.ndarray:
    """Inputs of MC sample ``index``; depends only on ``(seed, index)``."""
    return truncated_normal(np.random.default_rng([seed, index]), n)


def run_mc(grid: Grid | PerturbedSystem, samples: int = 1000, h: float | None = None, t_end: float | None = None,
           seed: int = 0, threads: int = 1, track=()) -> McResult:
    """Monte Carlo over full deterministic transients, one per sample.

    Moments are accumulated in fixed chunks of samples that are merged in
    index order, so results are bit-identical for any ``threads``.
    ``track`` lists ``(node, step)`` cells whose per-sample drops are kept.
    """
    if samples < 2:
        raise ValueError("Monte Carlo needs at least 2 samples")
    _kernels.warm_up()
    sys_, h, t_end, times, currents = _setup(grid, h, t_end)
    names = _node_names(sys_)
    track = [(names.index(nd) if isinstance(nd, str) else int(nd), int(st)) for nd, st in track]
    shape = (len(times), sys_.n_grid_nodes)

    def run_chunk(start):
        count, mean, m2 = 0, np.zeros(shape), np.zeros(shape)
        kept, failed = {c: [] for c in track}, 0
        for i in range(start, min(start + MC_CHUNK, samples)):
            xi = sample_xi(seed, i, sys_.n_vars)
            try:
                d = _sample_drop(sys_, xi, times, currents, h, t_end)
            except SingularMatrixError:
                failed += 1
                continue
            count += 1
            _kernels.welford_update(count, mean, m2, d)
            for c in track:
                kept[c].append(d[c[1], c[0]])
        return count, mean, m2, kept, failed

    t0 = time.perf_counter()
    starts = range(0, samples, MC_CHUNK)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(run_chunk, starts))
    else:
        parts = [run_chunk(s) for s in starts]
    count, mean, m2 = 0, np.zeros(shape), np.zeros(shape)
    tracked = {c: [] for c in track}
    failures = 0
    for c_n, c_mean, c_m2, kept, failed in parts:
        count, mean, m2 = _kernels.welford_merge(count, mean, m2, c_n, c_mean, c_m2)
        failures += failed
        for c in track:
            tracked[c].extend(kept[c])
    elapsed = time.perf_counter() - t0
    nominal = _sample_drop(sys_, np.zeros(sys_.n_vars), times, currents, h, t_end)
    return McResult(times, names, count, mean, m2, seed, samples, sys_.vdd, failures, elapsed, nominal,
                    {c: np.array(v) for c, v in tracked.items()})


# --- quadrature oracle -------------------------------------------------------

def run_quadrature(grid: Grid | PerturbedSystem, level: int = 12, h: float | None = None,
                   t_end: float | None = None, max_points: int = QUAD_POINT_CAP) -> Moments:
    """Tensor Gauss-Hermite mean/variance; one deterministic transient per node."""
    if level < 2:
        raise ValueError("quadrature level must be >= 2")
    _kernels.warm_up()
    sys_, h, t_end, times, currents = _setup(grid, h, t_end)
    n = sys_.n_vars
    if n > 3 or level**n > max_points:
        raise ValueError(f"tensor grid of {level}^{n} points exceeds the cap of {max_points} (n <= 3 supported)")
    nodes, weights = gauss_hermite(level, n)
    if sys_.g_var is not None and np.any(1 + sys_.sigma_g * nodes[:, sys_.g_var] <= 0):
        raise ValueError("quadrature nodes reach non-positive conductance; lower the level")
    t0 = time.perf_counter()
    shape = (len(times), sys_.n_grid_nodes)
    wsum, mean, s = 0.0, np.zeros(shape), np.zeros(shape)
    for xi, w in zip(nodes, weights):
        d = _sample_drop(sys_, xi, times, currents, h, t_end)
        # weighted incremental mean/variance (West 1979)
        wsum += w
        delta = d - mean
        mean += (w / wsum) * delta
        s += w * delta * (d - mean)
    elapsed = time.perf_counter() - t0
    nominal = _sample_drop(sys_, np.zeros(n), times, currents, h, t_end)
    return Moments(times, _node_names(sys_), mean, s / wsum, sys_.vdd, elapsed, nominal, "quad")


# --- comparison --------------------------------------------------------------

def compare(pc, ref, sigma_floor: float = 1e-12) -> ComparisonReport:
    """Error and speed metrics of ``pc`` against a reference result.

    The mean error is a percentage of Vdd; the sigma error is relative to the
    reference sigma, skipping cells where that sigma is below
    ``sigma_floor * Vdd``. The spread statistic is 3 sigma over the nominal
    drop at each node's peak nominal-drop time, averaged over nodes.
    """
    a = pc.moments() if hasattr(pc, "moments") else pc
    b = ref.moments() if hasattr(ref, "moments") else ref
    if a.mean.shape != b.mean.shape or not np.allclose(a.times, b.times, rtol=1e-9, atol=0):
        raise ValueError("results are on different grids or time grids")
    vdd = a.vdd
    err_mu = np.abs(a.mean - b.mean) / vdd * 100.0
    sig_a, sig_b = a.std, b.std
    ok = sig_b > sigma_floor * vdd
    err_sig = np.abs(sig_a[ok] - sig_b[ok]) / sig_b[ok] * 100.0
    nominal = a.nominal if a.nominal is not None else b.nominal
    spread = float("nan")
    if nominal is not None:
        peak = np.argmax(nominal, axis=0)
        cols = np.arange(nominal.shape[1])
        mu0 = nominal[peak, cols]
        live = mu0 > sigma_floor * vdd
        if live.any():
            spread = float(np.mean(3.0 * sig_a[peak, cols][live] / mu0[live]) * 100.0)
    speedup = b.elapsed_s / a.elapsed_s if a.elapsed_s > 0 else float("nan")
    return ComparisonReport(
        avg_pct_err_mu=float(err_mu.mean()),
        max_pct_err_mu=float(err_mu.max()),
        avg_pct_err_sigma=float(err_sig.mean()) if err_sig.size else 0.0,
        max_pct_err_sigma=float(err_sig.max()) if err_sig.size else 0.0,
        pm3sigma_pct_of_nominal=spread,
        time_ref_s=float(b.elapsed_s),
        time_pc_s=float(a.elapsed_s),
        speedup=float(speedup),
        excluded_sigma_cells=int((~ok).sum()),
    )
