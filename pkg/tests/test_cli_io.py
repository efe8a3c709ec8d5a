import csv
import io
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from relustep import io as rio
from relustep.cli import cli_dispatch
from relustep.construct import convex_indicator, halfspace_ramp
from relustep.geometry import Hyperplane, SimplePolygon
from relustep.network import (AffineLayer, ReluNetwork, eval_batch, first_layer_segments_2d,
                              second_layer_breaklines_2d)
from relustep.render import render_2d, to_svg
from relustep.sampling import uniform_points
from relustep.scenarios import H_VERTICES, circle_construction, hypercube_construction

BOX = ((0.0, 1.0), (0.0, 1.0))


def ramp():
    return halfspace_ramp(Hyperplane([1, 0], 0.5), 0.1)


# -- number formatting and networks ------------------------------------------------

@settings(max_examples=200, deadline=None)
@given(st.floats(allow_nan=False, allow_infinity=False))
def test_fmt_round_trips(x):
    assert float(rio.fmt(x)) == x


def test_fmt_rejects_nonfinite():
    with pytest.raises(ValueError):
        rio.fmt(float("nan"))


def test_network_round_trip_bitwise(tmp_path):
    rng = np.random.default_rng(0)
    net = ReluNetwork(tuple(AffineLayer(rng.normal(size=(m, n)), rng.normal(size=m))
                            for n, m in ((2, 7), (7, 3), (3, 1))))
    path = tmp_path / "net.json"
    rio.save_network(net, path, {"construction": "random"})
    back = rio.load_network(path)
    x = rng.uniform(-1, 1, (10**4, 2))
    np.testing.assert_array_equal(eval_batch(back, x), eval_batch(net, x))
    assert rio.load_provenance(path) == {"construction": "random"}


def test_sparse_network_round_trip(tmp_path):
    net = hypercube_construction(300, 0.05)[0].network
    path = tmp_path / "cube.json"
    rio.save_network(net, path)
    doc = json.loads(path.read_text())
    assert doc["shape"] == [300, 300, 1, 1]
    assert doc["layers"][0]["storage"] == "sparse"
    assert doc["layers"][0]["weights"][:2] == [[0, 0, 1], [1, 1, 1]]
    back = rio.load_network(path)
    x = uniform_points([[0, 1]] * 300, 0, 2000) * 0.1 + 0.45
    np.testing.assert_array_equal(back(x), net(x))


def test_save_is_deterministic(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    rio.save_network(ramp(), a, {"eps": 0.1})
    rio.save_network(ramp(), b, {"eps": 0.1})
    assert a.read_bytes() == b.read_bytes()


def test_malformed_network(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{"shape": [2, 1, 1, 1]}')
    with pytest.raises(ValueError):
        rio.load_network(p)
    p.write_text("not json")
    with pytest.raises(ValueError):
        rio.load_network(p)
    p.write_text(rio.dumps({"shape": [2, 2, 1, 1], "layers": rio.network_to_dict(ramp())["layers"]}))
    with pytest.raises(ValueError):
        rio.load_network(p)


# -- geometry documents -----------------------------------------------------------------

def test_hyperplane_round_trip(tmp_path):
    hs = [Hyperplane([1, 2], 0.3), Hyperplane([-1, 0.5], 0.1)]
    p = tmp_path / "hs.json"
    rio.save_hyperplanes(hs, p)
    doc = json.loads(p.read_text())
    assert set(doc) == {"dim", "normals", "offsets"}
    back = rio.load_hyperplanes(p)
    for h, g in zip(hs, back):
        np.testing.assert_array_equal(h.normal, g.normal)
        assert h.offset == g.offset


def test_polygon_and_region_documents(tmp_path):
    p = tmp_path / "h.json"
    rio.save_polygon(SimplePolygon(H_VERTICES), p)
    kind, poly = rio.load_geometry(p)
    assert kind == "polygon" and poly.area() == pytest.approx(7.0)
    r = tmp_path / "r.json"
    r.write_text(json.dumps({"box": [[0, 1], [0, 1]],
                             "region": {"type": "ball", "center": [0.5, 0.5], "radius": 0.25}}))
    reg = rio.load_region(r)
    assert reg.contains([[0.5, 0.5]])[0] and not reg.contains([[0.1, 0.1]])[0]
    r.write_text(json.dumps({"box": [[0, 1], [0, 1]], "region": {"type": "blob"}}))
    with pytest.raises(ValueError):
        rio.load_region(r)


def test_points_file(tmp_path):
    p = tmp_path / "pts.txt"
    p.write_text("# header\n0.1 0.2\n0.3, 0.4\n\n")
    np.testing.assert_array_equal(rio.load_points(p, 2), [[0.1, 0.2], [0.3, 0.4]])
    p.write_text("0.1 0.2\n0.3\n")
    with pytest.raises(ValueError):
        rio.load_points(p)


# -- fields ---------------------------------------------------------------------------

def test_field_constant_2x2(tmp_path):
    f = rio.GridField(BOX, (2, 2), np.ones(4))
    p = tmp_path / "f.txt"
    rio.save_field(f, p)
    lines = p.read_text().splitlines()
    assert lines[0].startswith("# field ")
    assert lines[1:] == ["1 1", "1 1"]
    back = rio.load_field(p)
    np.testing.assert_array_equal(back.values, [1.0] * 4)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 2**31))
def test_field_round_trip(nx, ny, seed):
    import tempfile, os
    vals = np.random.default_rng(seed).normal(size=nx * ny) * 10.0 ** np.random.default_rng(
        seed).integers(-300, 300, nx * ny)
    f = rio.GridField([[-1, 2], [0, 0.3]], (nx, ny), vals, {"dim": 3, "axes": [0, 1], "fixed": 0.205})
    with tempfile.TemporaryDirectory() as d:
        p = os.path.join(d, "f.txt")
        rio.save_field(f, p)
        back = rio.load_field(p)
    np.testing.assert_array_equal(back.values, f.values)
    np.testing.assert_array_equal(back.box, f.box)
    assert back.resolution == (nx, ny) and back.slice == f.slice


def test_field_validation(tmp_path):
    with pytest.raises(ValueError):
        rio.GridField(BOX, (2, 3), np.zeros(5))
    p = tmp_path / "f.txt"
    p.write_text("1 2\n3 4\n")
    with pytest.raises(ValueError):
        rio.load_field(p)
    p.write_text("# field {broken\n1 2\n")
    with pytest.raises(ValueError):
        rio.load_field(p)


def test_sample_field_orientation():
    f = rio.sample_field(lambda x: x[:, 0] + 10 * x[:, 1], BOX, (4, 2))
    g = f.grid()
    assert g.shape == (2, 4)
    assert g[0, 0] == pytest.approx(0.125 + 2.5) and g[1, 3] == pytest.approx(0.875 + 7.5)


# -- break lines and rendering ------------------------------------------------------------

def _breaklines(net):
    return rio.Breaklines(np.array(BOX), first_layer_segments_2d(net, BOX),
                          second_layer_breaklines_2d(net, BOX))


def test_breaklines_round_trip(tmp_path):
    cons, _ = circle_construction(6, 0.04)
    bl = _breaklines(cons.network)
    p = tmp_path / "bl.json"
    rio.save_breaklines(bl, p)
    back = rio.load_breaklines(p)
    assert len(back.first_layer) == 6
    for a, b in zip(bl.second_layer[0], back.second_layer[0]):
        np.testing.assert_array_equal(a.start, b.start)
        assert a.cell == b.cell


def _polylines(svg):
    out = []
    for line in svg.splitlines():
        if line.startswith("<polyline"):
            pts = line.split('points="')[1].split('"')[0]
            stroke = line.split('stroke="')[1].split('"')[0]
            xy = np.array([[float(t) for t in p.split(",")] for p in pts.split()])
            out.append((stroke, xy))
    return out


def test_render_ramp_two_parallel_lines():
    lines = _polylines(to_svg(_breaklines(ramp())))
    assert len(lines) == 2
    (s1, a), (s2, b) = lines
    assert s1 != s2
    # x = 0.5 and x = 0.6 on a 512-pixel canvas of the unit square
    np.testing.assert_allclose(a[:, 0], 256.0)
    np.testing.assert_allclose(b[:, 0], 0.6 * 512, rtol=1e-6)


def test_render_hexagon_concentric():
    eps = 0.04
    cons, hs = circle_construction(6, eps)
    lines = _polylines(to_svg(_breaklines(cons.network)))
    first = [xy for s, xy in lines if s == lines[0][0]]
    second = [xy for s, xy in lines if s != lines[0][0]]
    assert len(first) == 6 and len(second) == 12
    # the second-layer polygon sits eps outside the hexagon along each normal
    pts = np.concatenate(second) / 512.0
    pts[:, 1] = 1.0 - pts[:, 1]
    s = np.stack([h(pts) for h in hs], axis=1)
    np.testing.assert_allclose(np.maximum(s, 0).sum(axis=1), eps, atol=1e-5)


def test_render_empty_and_deterministic(tmp_path):
    empty = rio.Breaklines(np.array(BOX), [], [])
    svg = to_svg(empty)
    assert svg.startswith("<svg") and svg.rstrip().endswith("</svg>")
    assert "<polyline" not in svg
    f = rio.sample_field(ramp(), BOX, 16)
    a, b = tmp_path / "a.svg", tmp_path / "b.svg"
    render_2d(f, a)
    render_2d(f, b)
    assert a.read_bytes() == b.read_bytes()
    assert "rgb(0,0,0)" in a.read_text() and "rgb(255,255,255)" in a.read_text()


def test_render_rejects_non_2d():
    with pytest.raises(ValueError):
        to_svg(rio.Breaklines(np.zeros((3, 2)), [], []))
    with pytest.raises(TypeError):
        to_svg(np.zeros(3))


# -- error rows -----------------------------------------------------------------------

def test_error_rows_format():
    from relustep.analysis import ErrorReport
    rep = ErrorReport(2, 0.25, "mc", 0.01, 0.5)
    text = rio.format_error_rows([rio.error_row("s", 0.1, rep, True)])
    rows = list(csv.reader(io.StringIO(text)))
    assert rows[0] == ["scenario", "p", "eps", "method", "estimate", "ci", "bound", "pass"]
    assert rows[1] == ["s", "2", "0.10000000000000001", "mc", "0.25", "0.01", "0.5", "true"]


# -- command line -------------------------------------------------------------------------

def _write(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


@pytest.fixture
def ramp_files(tmp_path):
    geom = _write(tmp_path / "hp.json", {"dim": 2, "normals": [[1, 0]], "offsets": [0.5]})
    region = _write(tmp_path / "reg.json", {"box": [[0, 1], [0, 1]], "region": {
        "type": "halfspaces", "normals": [[1, 0]], "offsets": [0.5]}})
    net = str(tmp_path / "ramp.json")
    assert cli_dispatch(["build", geom, "--eps", "0.1", "--out", net]) == 0
    return tmp_path, net, region


def test_cli_build_and_eval(ramp_files, capsys):
    tmp, net, _ = ramp_files
    assert rio.load_network(net).shape == "2–1–1–1"
    pts = tmp / "pts.txt"
    pts.write_text("0.55 0.2\n0.3 0.7\n0.9 0.1\n")
    capsys.readouterr()
    assert cli_dispatch(["eval", net, str(pts)]) == 0
    vals = [float(v) for v in capsys.readouterr().out.split()]
    np.testing.assert_allclose(vals, [0.5, 0.0, 1.0], atol=1e-15)


def test_cli_eval_empty(ramp_files, capsys):
    tmp, net, _ = ramp_files
    (tmp / "empty.txt").write_text("")
    capsys.readouterr()
    assert cli_dispatch(["eval", net, str(tmp / "empty.txt")]) == 0
    assert capsys.readouterr().out == ""


def test_cli_error(ramp_files, capsys):
    tmp, net, region = ramp_files
    capsys.readouterr()
    assert cli_dispatch(["error", net, region, "--p", "1", "--method", "grid",
                         "--resolution", "1000"]) == 0
    row = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))[0]
    assert float(row["estimate"]) == pytest.approx(0.05, abs=1e-4)
    assert cli_dispatch(["error", net, region, "--p", "1", "--samples", "200000",
                         "--seed", "7"]) == 0
    row = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))[0]
    assert abs(float(row["estimate"]) - 0.05) <= 3 * float(row["ci"])


def test_cli_error_rows_deterministic(ramp_files, capsys):
    tmp, net, region = ramp_files
    outs = []
    for k in range(2):
        out = tmp / f"e{k}.csv"
        assert cli_dispatch(["error", net, region, "--p", "2", "--samples", "50000",
                             "--seed", "11", "--out", str(out)]) == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]


def test_cli_breaklines_and_render(ramp_files):
    tmp, net, _ = ramp_files
    bl = tmp / "bl.json"
    assert cli_dispatch(["breaklines", net, "--out", str(bl)]) == 0
    assert cli_dispatch(["render", str(bl), "--out", str(tmp / "bl.svg")]) == 0
    assert len(_polylines((tmp / "bl.svg").read_text())) == 2


def test_cli_example_circle(tmp_path, capsys):
    out = tmp_path / "out"
    assert cli_dispatch(["example", "circle", "--n", "6", "--eps", "0.04", "--samples", "20000",
                         "--resolution", "32", "--out", str(out)]) == 0
    assert rio.load_network(out / "circle" / "n6" / "network.json").shape == "2–6–1–1"
    assert cli_dispatch(["render", str(out / "circle" / "n6" / "field.txt")]) == 0
    assert (out / "circle" / "n6" / "field.svg").exists()


def test_cli_exit_codes(tmp_path, ramp_files, capsys):
    tmp, net, region = ramp_files
    assert cli_dispatch(["frobnicate"]) == 2
    assert "usage" in capsys.readouterr().err
    assert cli_dispatch([]) == 2
    assert cli_dispatch(["build", str(tmp / "hp.json"), "--eps", "-1"]) == 2
    assert cli_dispatch(["eval", str(tmp / "missing.json"), "x"]) == 2
    assert cli_dispatch(["error", net, region, "--p", "0.5"]) == 2
    bad = _write(tmp / "bad.json", {"dim": 2, "vertices": [[0, 0], [1, 1], [1, 0], [0, 1]]})
    assert cli_dispatch(["build", bad, "--eps", "0.1"]) == 2


def test_cli_runtime_failure(tmp_path, monkeypatch, ramp_files):
    tmp, net, region = ramp_files
    import relustep.cli as cli

    def boom(*a, **k):
        raise MemoryError("out of memory")

    monkeypatch.setattr(cli, "lp_error_mc", boom)
    assert cli_dispatch(["error", net, region]) == 1
