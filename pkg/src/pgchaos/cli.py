"""Command-line front end.

    pgchaos generate --rows 32 --cols 32 --seed 7 --output grid.sp
    pgchaos run --input grid.sp --engine pc --p 2 --output out/pc
    pgchaos run --input grid.sp --engine mc --samples 1000 --seed 1 --output out/mc
    pgchaos compare --pc out/pc --ref out/mc --output out/report
    pgchaos hist --input out/pc --node n3_4 --time 0.5n --output hist.csv
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import Moments, PcResult, compare, run_mc, run_pc, run_quadrature, sample_distribution
from .chaos import ChaosBasis
from .netlist import LoadSpec, NetlistError, VariationSpec, format_netlist, generate_mesh, parse_netlist, parse_value
from .solver import time_grid

STATS_HEADER = ["node", "time_s", "mean_drop_v", "std_drop_v"]
EXIT_FAILED_SAMPLES = 3


class UsageError(Exception):
    pass


def _value(text: str) -> float:
    try:
        return parse_value(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _positive_int(text: str) -> int:
    n = int(text)
    if n < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return n


def _fmt(x: float) -> str:
    return repr(float(x))


# --- generate ----------------------------------------------------------------

def cmd_generate(args) -> int:
    if args.rows < 2 or args.cols < 2:
        raise UsageError("--rows and --cols must be >= 2")
    loads = LoadSpec(peak=args.load_peak, density=args.load_density) if args.load_density > 0 else None
    try:
        variation = VariationSpec.from_3sigma_percent(args.sw3, args.st3, args.sl3)
        grid = generate_mesh(args.rows, args.cols, args.r_seg, args.c_node, args.pin_spacing, loads,
                             vdd=args.vdd, rpkg=args.rpkg, variation=variation, seed=args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    text = format_netlist(grid)
    if args.output in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(args.output).write_text(text)
    return 0


# --- run ---------------------------------------------------------------------

def _check_engine_flags(args) -> None:
    allowed = {"pc": {"p", "init", "no_coeffs"}, "mc": {"samples", "seed", "threads"}, "quad": {"level"}}
    for flag in ("p", "init", "samples", "seed", "threads", "level", "no_coeffs"):
        if getattr(args, flag) not in (None, False) and flag not in allowed[args.engine]:
            raise UsageError(f"--{flag.replace('_', '-')} does not apply to --engine {args.engine}")


def write_stats(path: Path, m: Moments, fmt: str = "csv") -> None:
    std = m.std
    if fmt == "json":
        records = [
            {"node": name, "time_s": float(t), "mean_drop_v": float(m.mean[k, n]), "std_drop_v": float(std[k, n])}
            for n, name in enumerate(m.node_names) for k, t in enumerate(m.times)
        ]
        (path / "stats.json").write_text(json.dumps(records))
        return
    with open(path / "stats.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(STATS_HEADER)
        for n, name in enumerate(m.node_names):
            for k, t in enumerate(m.times):
                w.writerow([name, _fmt(t), _fmt(m.mean[k, n]), _fmt(std[k, n])])


def _write_nominal(path: Path, m: Moments) -> None:
    with open(path / "nominal.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["node", "time_s", "nominal_drop_v"])
        for n, name in enumerate(m.node_names):
            for k, t in enumerate(m.times):
                w.writerow([name, _fmt(t), _fmt(m.nominal[k, n])])


def _write_coeffs(path: Path, r: PcResult) -> None:
    with open(path / "coeffs.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["node", "time_s", "term", "value"])
        for n, name in enumerate(r.node_names):
            for k, t in enumerate(r.times):
                for j in range(len(r.basis)):
                    w.writerow([name, _fmt(t), j, _fmt(r.coeffs[k, j, n])])


def cmd_run(args) -> int:
    _check_engine_flags(args)
    grid = parse_netlist(Path(args.input).read_text())
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    meta = {"engine": args.engine, "input": str(args.input), "version": __version__, "vdd": grid.vdd,
            "nodes": len(grid.nodes)}
    status = 0
    if args.engine == "pc":
        p = 2 if args.p is None else args.p
        r = run_pc(grid, p, args.h, args.t_end, init=args.init or "dc")
        m = r.moments()
        meta.update(p=p, basis_terms=len(r.basis), basis_vars=r.basis.n, factorizations=r.factorizations)
        if not args.no_coeffs:
            _write_coeffs(out, r)
    elif args.engine == "mc":
        samples = 1000 if args.samples is None else args.samples
        seed = 0 if args.seed is None else args.seed
        r = run_mc(grid, samples, args.h, args.t_end, seed, threads=args.threads or 1)
        m = r.moments()
        meta.update(samples=samples, seed=seed, failed_samples=r.failures)
        status = EXIT_FAILED_SAMPLES if r.failures else 0
    else:
        level = 12 if args.level is None else args.level
        try:
            m = run_quadrature(grid, level, args.h, args.t_end)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        meta.update(level=level)
    h = float(m.times[1] - m.times[0]) if len(m.times) > 1 else None
    meta.update(h=h, t_end=float(m.times[-1]), steps=len(m.times) - 1, elapsed_s=m.elapsed_s, format=args.format)
    write_stats(out, m, args.format)
    _write_nominal(out, m)
    (out / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True))
    return status


# --- compare -----------------------------------------------------------------

def load_moments(path: Path) -> Moments:
    """Read a result directory written by ``run`` back into :class:`Moments`."""
    path = Path(path)
    meta = json.loads((path / "meta.json").read_text())
    if (path / "stats.csv").exists():
        with open(path / "stats.csv", newline="") as f:
            rows = list(csv.reader(f))
        if rows[0] != STATS_HEADER:
            raise ValueError(f"{path / 'stats.csv'}: unexpected header {rows[0]}")
        rows = [(r[0], float(r[1]), float(r[2]), float(r[3])) for r in rows[1:]]
    else:
        recs = json.loads((path / "stats.json").read_text())
        rows = [(r["node"], r["time_s"], r["mean_drop_v"], r["std_drop_v"]) for r in recs]
    names = list(dict.fromkeys(r[0] for r in rows))
    T = len(rows) // len(names)
    arr = np.array([r[1:] for r in rows]).reshape(len(names), T, 3)
    times = arr[0, :, 0]
    nominal = None
    if (path / "nominal.csv").exists():
        nom = np.loadtxt(path / "nominal.csv", delimiter=",", skiprows=1, usecols=2)
        nominal = nom.reshape(len(names), T).T
    return Moments(times, names, arr[:, :, 1].T.copy(), (arr[:, :, 2].T) ** 2, meta["vdd"],
                   meta.get("elapsed_s", 0.0), nominal, meta["engine"])


def cmd_compare(args) -> int:
    a, b = load_moments(args.pc), load_moments(args.ref)
    if a.node_names != b.node_names:
        raise UsageError("result directories describe different grids")
    report = compare(a, b)
    d = report.as_dict()
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(json.dumps(d, indent=2))
    with open(out / "report.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(list(d))
        w.writerow(list(d.values()))
    return 0


# --- hist --------------------------------------------------------------------

def _load_pc_result(path: Path) -> PcResult:
    meta = json.loads((path / "meta.json").read_text())
    if meta.get("engine") != "pc" or not (path / "coeffs.csv").exists():
        raise UsageError(f"{path} is not a pc result directory with coeffs.csv")
    basis = ChaosBasis(meta["basis_vars"], meta["p"])
    data = np.loadtxt(path / "coeffs.csv", delimiter=",", skiprows=1, usecols=(1, 3))
    with open(path / "coeffs.csv", newline="") as f:
        names = list(dict.fromkeys(row[0] for i, row in enumerate(csv.reader(f)) if i))
    T = len(data) // (len(names) * len(basis))
    vals = data[:, 1].reshape(len(names), T, len(basis))
    times = data[:: len(basis), 0][:T]
    return PcResult(basis, times, vals.transpose(1, 2, 0).copy(), names, meta["vdd"])


def histogram_for(args):
    """Bin edges and counts for the ``hist`` command."""
    path = Path(args.input)
    rng = tuple(args.range) if args.range else None
    if path.is_dir():
        r = _load_pc_result(path)
        if args.node not in r.node_names:
            raise UsageError(f"unknown node {args.node!r}")
        return sample_distribution(r, args.node, args.time, args.samples, args.seed, args.bins, rng)
    grid = parse_netlist(path.read_text())
    if args.node not in grid.nodes:
        raise UsageError(f"unknown node {args.node!r}")
    if args.engine == "pc":
        r = run_pc(grid, args.p, args.h, args.t_end)
        return sample_distribution(r, args.node, args.time, args.samples, args.seed, args.bins, rng)
    h = grid.default_step() if args.h is None else args.h
    t_end = grid.default_horizon() if args.t_end is None else args.t_end
    step = int(np.argmin(np.abs(time_grid(h, t_end) - args.time)))
    r = run_mc(grid, args.samples, h, t_end, args.seed, track=[(args.node, step)])
    (values,) = r.tracked.values()
    counts, edges = np.histogram(values, bins=args.bins, range=rng)
    return edges, counts


def cmd_hist(args) -> int:
    if args.bins < 1:
        raise UsageError("--bins must be >= 1")
    edges, counts = histogram_for(args)
    centers = 0.5 * (edges[:-1] + edges[1:])
    lines = ["bin_center,count"] + [f"{_fmt(c)},{int(n)}" for c, n in zip(centers, counts)]
    text = "\n".join(lines) + "\n"
    if args.output in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(args.output).write_text(text)
    return 0


# --- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pgchaos", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic mesh netlist")
    g.add_argument("--rows", type=int, required=True)
    g.add_argument("--cols", type=int, required=True)
    g.add_argument("--r-seg", type=_value, default=1.0, help="segment resistance (ohms)")
    g.add_argument("--c-node", type=_value, default=100e-12, help="node capacitance (farads)")
    g.add_argument("--pin-spacing", type=int, default=8)
    g.add_argument("--rpkg", type=_value, default=0.05)
    g.add_argument("--vdd", type=_value, default=1.2)
    g.add_argument("--load-peak", type=_value, default=40e-3)
    g.add_argument("--load-density", type=float, default=0.25)
    g.add_argument("--sw3", type=float, default=20.0, help="3-sigma width variation, percent")
    g.add_argument("--st3", type=float, default=15.0, help="3-sigma thickness variation, percent")
    g.add_argument("--sl3", type=float, default=20.0, help="3-sigma channel-length variation, percent")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--output")
    g.set_defaults(func=cmd_generate)

    r = sub.add_parser("run", help="run an analysis engine on a netlist")
    r.add_argument("--input", required=True)
    r.add_argument("--output", required=True, help="result directory")
    r.add_argument("--engine", choices=("pc", "mc", "quad"), default="pc")
    r.add_argument("--p", type=_positive_int)
    r.add_argument("--init", choices=("dc", "rest"))
    r.add_argument("--no-coeffs", action="store_true", help="skip coeffs.csv (pc)")
    r.add_argument("--h", type=_value)
    r.add_argument("--t-end", type=_value)
    r.add_argument("--samples", type=int)
    r.add_argument("--seed", type=int)
    r.add_argument("--threads", type=_positive_int)
    r.add_argument("--level", type=int)
    r.add_argument("--format", choices=("csv", "json"), default="csv")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("compare", help="compare a pc result with a reference result")
    c.add_argument("--pc", required=True)
    c.add_argument("--ref", required=True)
    c.add_argument("--output", required=True)
    c.set_defaults(func=cmd_compare)

    hs = sub.add_parser("hist", help="histogram of the drop at one node and time")
    hs.add_argument("--input", required=True, help="pc result directory or netlist")
    hs.add_argument("--engine", choices=("pc", "mc"), default="pc")
    hs.add_argument("--node", required=True)
    hs.add_argument("--time", type=_value, required=True)
    hs.add_argument("--samples", type=_positive_int, default=10_000)
    hs.add_argument("--seed", type=int, default=0)
    hs.add_argument("--bins", type=int, default=30)
    hs.add_argument("--range", type=float, nargs=2, metavar=("LO", "HI"))
    hs.add_argument("--p", type=_positive_int, default=2)
    hs.add_argument("--h", type=_value)
    hs.add_argument("--t-end", type=_value)
    hs.add_argument("--output")
    hs.set_defaults(func=cmd_hist)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.error(str(exc))
    except (NetlistError, ValueError, KeyError, OSError) as exc:
        print(f"pgchaos: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
