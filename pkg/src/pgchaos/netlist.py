"""Grid description: netlist grammar, synthetic meshes and PWL load waveforms.

Grammar (one element per line, ``#`` starts a comment, keywords are
case-insensitive)::

    R<name> <nodeA> <nodeB> <ohms>
    C<name> <nodeA> <nodeB> <farads>
    I<name> <nodeA> <nodeB> PWL(<t1> <i1> <t2> <i2> ...)   # current flows A->B
    V<name> <node> 0 <volts> [RPKG=<ohms>]
    .VARIATION SW3=<pct> ST3=<pct> SL3=<pct> [GCF=<frac>] [ISENS=<coef>]
    .REGION <node> <region-index>

``.VARIATION`` also accepts ``SW``/``ST``/``SL`` (1-sigma fractions, used by
the serializer so that round trips are exact), ``RHSONLY=1`` and the
leakage keys ``LEAKF``, ``LEAKS``, ``DRAINS`` of the rhs-only mode.
"""
from __future__ import annotations

import math
import re
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np

GROUND = "0"

_SI = {"f": 1e-15, "p": 1e-12, "n": 1e-9, "u": 1e-6, "m": 1e-3, "k": 1e3}
_NUMBER = re.compile(r"^([+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)([fpnumkFPNUMK]?)$")


class NetlistError(ValueError):
    """Raised for malformed or electrically invalid grid descriptions."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


def parse_value(token: str) -> float:
    """Parse a number with an optional SI suffix (``1.5n`` -> ``1.5e-9``)."""
    m = _NUMBER.match(token.strip())
    if m is None:
        raise ValueError(f"bad numeric value {token!r}")
    value = float(m.group(1))
    if m.group(2):
        value *= _SI[m.group(2).lower()]
    return value


@dataclass(frozen=True)
class Waveform:
    """Piecewise-linear current waveform; holds its end values outside the range."""

    times: tuple[float, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "times", tuple(float(t) for t in self.times))
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if not self.times:
            raise ValueError("waveform needs at least one point")
        if len(self.times) != len(self.values):
            raise ValueError("waveform times and values differ in length")
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise ValueError("waveform times must be strictly increasing")

    @classmethod
    def from_points(cls, points: Iterable[tuple[float, float]]) -> "Waveform":
        pts = list(points)
        return cls(tuple(p[0] for p in pts), tuple(p[1] for p in pts))

    @property
    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.times, self.values))

    def min_spacing(self) -> float:
        if len(self.times) < 2:
            return math.inf
        return float(np.min(np.diff(self.times)))

    def scaled(self, gain: float, shift: float = 0.0) -> "Waveform":
        return Waveform(tuple(t + shift for t in self.times), tuple(v * gain for v in self.values))


def eval_waveform(w: Waveform, t):
    """Evaluate ``w`` at ``t`` (scalar or array) by linear interpolation."""
    # np.interp already holds the boundary values outside [t0, tn]
    out = np.interp(t, w.times, w.values)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class Element:
    kind: str  # one of "R", "C", "I", "V"
    name: str
    node_a: str
    node_b: str
    value: float = 0.0
    waveform: Waveform | None = None
    rpkg: float = 0.0

    def __post_init__(self):
        if self.kind not in ("R", "C", "I", "V"):
            raise ValueError(f"unknown element kind {self.kind!r}")
        if self.kind in ("R", "C") and not self.value > 0:
            raise ValueError(f"{self.name}: value must be positive, got {self.value}")
        if self.kind == "V":
            if not self.value > 0:
                raise ValueError(f"{self.name}: Vdd must be positive, got {self.value}")
            if self.rpkg < 0:
                raise ValueError(f"{self.name}: RPKG must be non-negative")
            if self.node_b != GROUND:
                raise ValueError(f"{self.name}: Vdd pin must return to ground")
        if self.kind == "I" and self.waveform is None:
            raise ValueError(f"{self.name}: current load needs a waveform")


@dataclass(frozen=True)
class VariationSpec:
    """1-sigma fractional deviations of W, T, L_eff and the load models.

    ``leak_fraction``, ``leak_sigma`` and ``drain_sigma`` only matter in
    rhs-only mode, where each region carries its own threshold variable.
    """

    sigma_w: float = 0.0
    sigma_t: float = 0.0
    sigma_l: float = 0.0
    gate_cap_fraction: float = 0.4
    current_sensitivity: float = -1.0
    rhs_only: bool = False
    leak_fraction: float = 0.05
    leak_sigma: float = 0.0
    drain_sigma: float = 0.0

    def __post_init__(self):
        for name in ("sigma_w", "sigma_t", "sigma_l", "drain_sigma"):
            s = getattr(self, name)
            if not 0.0 <= s < 1.0 / 3.0:
                raise ValueError(f"{name} must lie in [0, 1/3), got {s}")
        if self.leak_sigma < 0:
            raise ValueError("leak_sigma must be non-negative")
        if not 0.0 <= self.gate_cap_fraction <= 1.0:
            raise ValueError("gate_cap_fraction must lie in [0, 1]")
        if not 0.0 <= self.leak_fraction <= 1.0:
            raise ValueError("leak_fraction must lie in [0, 1]")

    @classmethod
    def from_3sigma_percent(cls, sw3: float = 0.0, st3: float = 0.0, sl3: float = 0.0, **kw) -> "VariationSpec":
        """Build from 3-sigma percentages, e.g. ``(20, 15, 20)``."""
        return cls(sigma_w=sw3 / 300.0, sigma_t=st3 / 300.0, sigma_l=sl3 / 300.0, **kw)


@dataclass(frozen=True)
class Grid:
    elements: tuple[Element, ...]
    nodes: Mapping[str, int]
    variation: VariationSpec = field(default_factory=VariationSpec)
    regions: Mapping[str, int] = field(default_factory=dict)

    def __eq__(self, other):
        if not isinstance(other, Grid):
            return NotImplemented
        return (
            self.elements == other.elements
            and dict(self.nodes) == dict(other.nodes)
            and self.variation == other.variation
            and dict(self.regions) == dict(other.regions)
        )

    __hash__ = None

    @property
    def node_names(self) -> list[str]:
        names = [""] * len(self.nodes)
        for name, i in self.nodes.items():
            names[i] = name
        return names

    @cached_property
    def vdd(self) -> float:
        """Reference supply voltage: the largest pin voltage."""
        return max(e.value for e in self.elements if e.kind == "V")

    def of_kind(self, kind: str) -> list[Element]:
        return [e for e in self.elements if e.kind == kind]

    @property
    def loads(self) -> list[Element]:
        return self.of_kind("I")

    def default_step(self) -> float:
        """Smallest PWL breakpoint spacing over all loads, divided by 4."""
        spacing = min((e.waveform.min_spacing() for e in self.loads), default=math.inf)
        if not math.isfinite(spacing):
            raise ValueError("no PWL breakpoints to derive a default step from; pass h explicitly")
        return spacing / 4.0

    def default_horizon(self) -> float:
        t_end = max((e.waveform.times[-1] for e in self.loads), default=0.0)
        if t_end <= 0:
            raise ValueError("loads define no positive horizon; pass t_end explicitly")
        return t_end


def _check_connectivity(elements: Sequence[Element], nodes: Mapping[str, int]) -> None:
    adjacency: dict[str, list[str]] = {n: [] for n in nodes}
    for e in elements:
        if e.kind == "R" and GROUND not in (e.node_a, e.node_b):
            adjacency[e.node_a].append(e.node_b)
            adjacency[e.node_b].append(e.node_a)
    seen = {e.node_a for e in elements if e.kind == "V"}
    queue = deque(seen)
    while queue:
        for nb in adjacency[queue.popleft()]:
            if nb not in seen:
                seen.add(nb)
                queue.append(nb)
    dangling = [n for n in nodes if n not in seen]
    if dangling:
        raise NetlistError(f"dangling node(s) without a resistive path to a Vdd pin: {', '.join(dangling[:5])}")


def build_grid(
    elements: Sequence[Element],
    variation: VariationSpec | None = None,
    regions: Mapping[str, int] | None = None,
) -> Grid:
    """Index nodes in first-appearance order and validate the topology."""
    nodes: dict[str, int] = {}
    names: set[str] = set()
    for e in elements:
        key = e.name.upper()
        if key in names:
            raise NetlistError(f"duplicate element name {e.name}")
        names.add(key)
        for n in (e.node_a, e.node_b):
            if n != GROUND and n not in nodes:
                nodes[n] = len(nodes)
    if not any(e.kind == "V" for e in elements):
        raise NetlistError("no Vdd pin")
    _check_connectivity(elements, nodes)
    regions = dict(regions or {})
    unknown = [n for n in regions if n not in nodes]
    if unknown:
        raise NetlistError(f".REGION refers to unknown node {unknown[0]}")
    return Grid(tuple(elements), nodes, variation or VariationSpec(), regions)


def _parse_keywords(tokens: Sequence[str], lineno: int) -> dict[str, str]:
    out = {}
    for tok in tokens:
        key, sep, val = tok.partition("=")
        if not sep or not val:
            raise NetlistError(f"expected KEY=VALUE, got {tok!r}", lineno)
        out[key.upper()] = val
    return out


def _parse_variation(tokens: Sequence[str], lineno: int) -> VariationSpec:
    kw = _parse_keywords(tokens, lineno)
    args: dict[str, object] = {}
    try:
        for short, name in (("SW", "sigma_w"), ("ST", "sigma_t"), ("SL", "sigma_l")):
            if short + "3" in kw:
                args[name] = float(kw.pop(short + "3")) / 300.0
            if short in kw:
                args[name] = float(kw.pop(short))
        for key, name in (("GCF", "gate_cap_fraction"), ("ISENS", "current_sensitivity"),
                          ("LEAKF", "leak_fraction"), ("LEAKS", "leak_sigma"), ("DRAINS", "drain_sigma")):
            if key in kw:
                args[name] = float(kw.pop(key))
        if "RHSONLY" in kw:
            args["rhs_only"] = kw.pop("RHSONLY").lower() in ("1", "true", "yes")
    except ValueError as exc:
        raise NetlistError(str(exc), lineno) from None
    if kw:
        raise NetlistError(f"unknown .VARIATION key(s): {', '.join(kw)}", lineno)
    try:
        return VariationSpec(**args)
    except ValueError as exc:
        raise NetlistError(str(exc), lineno) from None


def _parse_pwl(text: str, lineno: int) -> Waveform:
    m = re.fullmatch(r"PWL\s*\((.*)\)", text.strip(), flags=re.IGNORECASE)
    if m is None:
        raise NetlistError("current load needs PWL(...)", lineno)
    nums = m.group(1).replace(",", " ").split()
    if not nums or len(nums) % 2:
        raise NetlistError("PWL needs an even, non-zero count of numbers", lineno)
    try:
        vals = [parse_value(v) for v in nums]
        return Waveform(tuple(vals[0::2]), tuple(vals[1::2]))
    except ValueError as exc:
        raise NetlistError(str(exc), lineno) from None


def parse_netlist(text: str) -> Grid:
    """Parse netlist text into a validated :class:`Grid`."""
    elements: list[Element] = []
    variation = None
    regions: dict[str, int] = {}
    seen: set[str] = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        head = tokens[0].upper()
        if head == ".VARIATION":
            variation = _parse_variation(tokens[1:], lineno)
            continue
        if head == ".REGION":
            if len(tokens) != 3:
                raise NetlistError(".REGION needs <node> <region-index>", lineno)
            try:
                idx = int(tokens[2])
            except ValueError:
                raise NetlistError(f"bad region index {tokens[2]!r}", lineno) from None
            if idx < 0:
                raise NetlistError("region index must be non-negative", lineno)
            regions[tokens[1]] = idx
            continue
        if head.startswith("."):
            raise NetlistError(f"unknown directive {tokens[0]}", lineno)
        kind = head[0]
        if kind not in "RCIV":
            raise NetlistError(f"unknown element type {tokens[0]!r}", lineno)
        if len(tokens) < 4:
            raise NetlistError(f"{tokens[0]}: expected at least 4 fields", lineno)
        name, a, b = tokens[0], tokens[1], tokens[2]
        if name.upper() in seen:
            raise NetlistError(f"duplicate element name {name}", lineno)
        seen.add(name.upper())
        try:
            if kind in "RC":
                if len(tokens) != 4:
                    raise NetlistError(f"{name}: expected 4 fields", lineno)
                el = Element(kind, name, a, b, parse_value(tokens[3]))
            elif kind == "I":
                el = Element(kind, name, a, b, waveform=_parse_pwl(" ".join(tokens[3:]), lineno))
            else:
                kw = _parse_keywords(tokens[4:], lineno)
                rpkg = parse_value(kw.pop("RPKG")) if "RPKG" in kw else 0.0
                if kw:
                    raise NetlistError(f"{name}: unknown key(s) {', '.join(kw)}", lineno)
                el = Element(kind, name, a, b, parse_value(tokens[3]), rpkg=rpkg)
        except NetlistError:
            raise
        except ValueError as exc:
            raise NetlistError(str(exc), lineno) from None
        elements.append(el)
    return build_grid(elements, variation, regions)


def format_netlist(grid: Grid) -> str:
    """Serialize ``grid`` in the netlist grammar; ``parse_netlist`` inverts it exactly."""
    lines = []
    for e in grid.elements:
        if e.kind in "RC":
            lines.append(f"{e.name} {e.node_a} {e.node_b} {e.value!r}")
        elif e.kind == "I":
            pts = " ".join(f"{t!r} {v!r}" for t, v in e.waveform.points)
            lines.append(f"{e.name} {e.node_a} {e.node_b} PWL({pts})")
        else:
            lines.append(f"{e.name} {e.node_a} {e.node_b} {e.value!r} RPKG={e.rpkg!r}")
    v = grid.variation
    lines.append(
        f".VARIATION SW={v.sigma_w!r} ST={v.sigma_t!r} SL={v.sigma_l!r} GCF={v.gate_cap_fraction!r} "
        f"ISENS={v.current_sensitivity!r} LEAKF={v.leak_fraction!r} LEAKS={v.leak_sigma!r} "
        f"DRAINS={v.drain_sigma!r} RHSONLY={int(v.rhs_only)}"
    )
    for node, idx in grid.regions.items():
        lines.append(f".REGION {node} {idx}")
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class LoadSpec:
    """Template for synthetic loads: a normalized PWL shape scaled per load.

    Each chosen node gets ``peak * U(min_gain, 1)`` times the template,
    delayed by a whole number of ``shift_step`` between 0 and ``max_shifts``.
    """

    template: Waveform = Waveform((0.0, 0.2e-9, 0.5e-9, 0.8e-9, 1.2e-9), (0.0, 1.0, 0.4, 0.9, 0.0))
    peak: float = 2e-3
    density: float = 0.25
    min_gain: float = 0.5
    shift_step: float = 0.1e-9
    max_shifts: int = 4


def generate_mesh(
    rows: int,
    cols: int,
    r_seg: float,
    c_node: float,
    pin_spacing: int,
    load_spec: LoadSpec | None = None,
    *,
    vdd: float = 1.2,
    rpkg: float = 0.05,
    variation: VariationSpec | None = None,
    seed: int = 0,
) -> Grid:
    """Generate a ``rows x cols`` resistive mesh with pins on a regular subgrid.

    Pins sit at every ``pin_spacing``-th row and column, offset by half a
    spacing so they are centered. Loads are placed at a seeded random subset
    of nodes.
    """
    if rows < 2 or cols < 2:
        raise ValueError(f"mesh needs rows, cols >= 2, got {rows}x{cols}")
    if pin_spacing < 1 or pin_spacing > min(rows, cols):
        raise ValueError(f"pin_spacing {pin_spacing} does not fit a {rows}x{cols} grid")
    if not (r_seg > 0 and c_node > 0):
        raise ValueError("r_seg and c_node must be positive")

    def node(r, c):
        return f"n{r}_{c}"

    els: list[Element] = []
    k = 0
    for r in range(rows):
        for c in range(cols):
            if c + 1 < cols:
                els.append(Element("R", f"R{k}", node(r, c), node(r, c + 1), r_seg))
                k += 1
            if r + 1 < rows:
                els.append(Element("R", f"R{k}", node(r, c), node(r + 1, c), r_seg))
                k += 1
    for i, (r, c) in enumerate(np.ndindex(rows, cols)):
        els.append(Element("C", f"C{i}", node(r, c), GROUND, c_node))
    off = pin_spacing // 2
    pins = [(r, c) for r in range(off, rows, pin_spacing) for c in range(off, cols, pin_spacing)]
    for i, (r, c) in enumerate(pins):
        els.append(Element("V", f"V{i}", node(r, c), GROUND, vdd, rpkg=rpkg))
    if load_spec is not None and load_spec.density > 0:
        rng = np.random.default_rng(seed)
        n_loads = max(1, int(round(load_spec.density * rows * cols)))
        chosen = np.sort(rng.choice(rows * cols, size=n_loads, replace=False))
        gains = load_spec.peak * rng.uniform(load_spec.min_gain, 1.0, size=n_loads)
        shifts = load_spec.shift_step * rng.integers(0, load_spec.max_shifts + 1, size=n_loads)
        for i, (flat, g, s) in enumerate(zip(chosen, gains, shifts)):
            r, c = divmod(int(flat), cols)
            els.append(Element("I", f"I{i}", node(r, c), GROUND, waveform=load_spec.template.scaled(float(g), float(s))))
    return build_grid(els, variation)
