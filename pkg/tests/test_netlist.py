import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pgchaos.netlist import (
    LoadSpec,
    NetlistError,
    VariationSpec,
    Waveform,
    eval_waveform,
    format_netlist,
    generate_mesh,
    parse_netlist,
    parse_value,
)

from _grids import ACCEPT_VARIATION, small_mesh

BASIC = "R1 n1 n2 1.0\nC1 n2 0 1e-12\nI1 n2 0 PWL(0 0 1n 1e-3)\nV1 n1 0 1.2 RPKG=0.5\n"


@pytest.mark.parametrize(
    "token, expected",
    [("1.5n", 1.5e-9), ("2p", 2e-12), ("3u", 3e-6), ("4m", 4e-3), ("5k", 5e3), ("7f", 7e-15),
     ("1e-3", 1e-3), ("-.5", -0.5), ("10", 10.0), ("2.5K", 2.5e3)],
)
def test_parse_value_suffixes(token, expected):
    assert parse_value(token) == pytest.approx(expected, rel=1e-15)


@pytest.mark.parametrize("token", ["", "abc", "1x", "1.2.3", "n"])
def test_parse_value_rejects_garbage(token):
    with pytest.raises(ValueError):
        parse_value(token)


def test_basic_netlist():
    g = parse_netlist(BASIC)
    assert len(g.nodes) == 2
    assert len(g.elements) == 4
    assert g.nodes == {"n1": 0, "n2": 1}
    (v,) = g.of_kind("V")
    assert v.rpkg == 0.5 and v.value == 1.2
    (i,) = g.loads
    assert i.waveform.points == [(0.0, 0.0), (1e-9, 1e-3)]
    assert g.vdd == 1.2


def test_comments_blank_lines_and_case():
    text = "# header\n\nr1 n1 n2 1.0  # trailing\nv1 n1 0 1.2\n.variation sw3=20 st3=15 sl3=20\n"
    g = parse_netlist(text)
    assert g.variation == VariationSpec.from_3sigma_percent(20, 15, 20)
    assert len(g.elements) == 2


def test_empty_text_has_no_pin():
    with pytest.raises(NetlistError, match="no Vdd pin"):
        parse_netlist("")


def test_nonpositive_value_reports_line():
    with pytest.raises(NetlistError, match="positive") as exc:
        parse_netlist("V1 n1 0 1.2\nR1 n1 n2 -1.0\n")
    assert exc.value.line == 2


def test_syntax_error_reports_line():
    with pytest.raises(NetlistError) as exc:
        parse_netlist("V1 n1 0 1.2\nR1 n1 n2\n")
    assert exc.value.line == 2
    assert "line 2" in str(exc.value)


@pytest.mark.parametrize(
    "text, message",
    [
        ("V1 a 0 1.2\nR1 a b 1\nR1 b a 2\n", "duplicate"),
        ("V1 a 0 1.2\nR1 a b 1\nC1 c 0 1p\n", "dangling"),
        ("V1 a 0 1.2\nX1 a b 1\n", "unknown element"),
        ("V1 a 0 1.2\n.FOO\n", "unknown directive"),
        ("V1 a 0 1.2\nI1 a 0 3\n", "PWL"),
        ("V1 a 0 1.2\nI1 a 0 PWL(0 1 2)\n", "even"),
        ("V1 a 0 1.2\nI1 a 0 PWL(1 0 0 1)\n", "increasing"),
        ("V1 a 0 1.2 FOO=1\n", "unknown key"),
        ("V1 a 0 1.2\n.VARIATION SW3=150\n", "sigma_w"),
        ("V1 a 0 1.2\n.VARIATION XX=1\n", "unknown .VARIATION"),
        ("V1 a 0 1.2\n.REGION zz 0\n", "unknown node"),
        ("V1 a 0 1.2\n.REGION a -1\n", "non-negative"),
        ("V1 a b 1.2\n", "ground"),
    ],
)
def test_malformed_inputs(text, message):
    with pytest.raises(NetlistError, match=message):
        parse_netlist(text)


def test_dangling_node_connected_only_by_capacitor():
    # a capacitor gives no DC path to a pin
    with pytest.raises(NetlistError, match="dangling"):
        parse_netlist("V1 a 0 1.2\nR1 a b 1\nC1 b c 1p\n")


@pytest.mark.parametrize("t, expected", [(0.5, 1.0), (5.0, 2.0), (-1.0, 0.0), (0.0, 0.0), (1.0, 2.0)])
def test_eval_waveform_interpolates_and_holds(t, expected):
    w = Waveform.from_points([(0, 0), (1, 2)])
    assert eval_waveform(w, t) == pytest.approx(expected)


def test_eval_waveform_single_point_holds():
    assert eval_waveform(Waveform((1.0,), (3.0,)), 0.0) == 3.0
    assert eval_waveform(Waveform((1.0,), (3.0,)), 9.0) == 3.0


def test_eval_waveform_vectorized():
    w = Waveform.from_points([(0, 0), (1, 2), (2, 0)])
    np.testing.assert_allclose(eval_waveform(w, np.array([0.25, 1.0, 1.5, 3.0])), [0.5, 2.0, 1.0, 0.0])


def test_mesh_2x2():
    g = generate_mesh(2, 2, 1.0, 1e-12, 1)
    assert len(g.nodes) == 4
    rs = g.of_kind("R")
    assert len(rs) == 4 and all(r.value == 1.0 for r in rs)


def test_mesh_32x32_counts():
    g = generate_mesh(32, 32, 1.0, 100e-12, 8, LoadSpec(), seed=1)
    assert len(g.nodes) == 1024
    assert len(g.of_kind("R")) == 2 * 32 * 31
    assert len(g.of_kind("C")) == 1024
    assert len(g.of_kind("V")) == 16
    assert len(g.loads) == 256


@pytest.mark.parametrize("rows, cols, ps", [(1, 5, 1), (5, 1, 1), (4, 4, 5), (4, 4, 0)])
def test_mesh_rejects_bad_shape(rows, cols, ps):
    with pytest.raises(ValueError):
        generate_mesh(rows, cols, 1.0, 1e-12, ps)


def test_mesh_is_seeded():
    a = generate_mesh(8, 8, 1.0, 1e-12, 4, LoadSpec(), seed=5)
    b = generate_mesh(8, 8, 1.0, 1e-12, 4, LoadSpec(), seed=5)
    c = generate_mesh(8, 8, 1.0, 1e-12, 4, LoadSpec(), seed=6)
    assert a == b
    assert a != c


def test_default_step_and_horizon():
    g = small_mesh()
    assert g.default_step() == pytest.approx(0.2e-9 / 4)
    assert g.default_horizon() <= 1.2e-9 + 4 * 0.1e-9 + 1e-21


def test_round_trip_exact():
    g = small_mesh(6, 5, variation=ACCEPT_VARIATION)
    text = format_netlist(g)
    g2 = parse_netlist(text)
    assert g2 == g
    assert format_netlist(g2) == text


@settings(max_examples=40, deadline=None)
@given(
    rows=st.integers(2, 6),
    cols=st.integers(2, 6),
    r_seg=st.floats(1e-3, 1e3),
    seed=st.integers(0, 2**16),
    sw=st.floats(0, 0.3),
    sl=st.floats(0, 0.3),
)
def test_round_trip_property(rows, cols, r_seg, seed, sw, sl):
    g = generate_mesh(rows, cols, r_seg, 1e-13, 1, LoadSpec(density=0.5), seed=seed,
                      variation=VariationSpec(sigma_w=sw, sigma_l=sl))
    assert parse_netlist(format_netlist(g)) == g


def test_variation_keys():
    v = parse_netlist("V1 a 0 1\n.VARIATION SW=0.05 ST3=15 SL=0.02 GCF=0.3 ISENS=-0.5\n").variation
    assert v.sigma_w == 0.05 and v.sigma_t == pytest.approx(0.05) and v.sigma_l == 0.02
    assert v.gate_cap_fraction == 0.3 and v.current_sensitivity == -0.5


def test_variation_bounds():
    with pytest.raises(ValueError):
        VariationSpec(sigma_w=1 / 3)
    with pytest.raises(ValueError):
        VariationSpec(gate_cap_fraction=1.5)
    assert VariationSpec(leak_sigma=0.5).leak_sigma == 0.5


def test_waveform_validation():
    with pytest.raises(ValueError):
        Waveform((), ())
    with pytest.raises(ValueError):
        Waveform((0.0, 1.0), (1.0,))
    assert math.isinf(Waveform((0.0,), (1.0,)).min_spacing())
    assert Waveform((0.0, 1.0), (1.0, 2.0)).scaled(2.0, 0.5).points == [(0.5, 2.0), (1.5, 4.0)]
