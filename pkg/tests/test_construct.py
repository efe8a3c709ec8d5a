import json
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from relustep.analysis import predicted_residuals
from relustep.construct import (ConstructionReport, PiecewiseConstantSpec, convex_bump,
                                convex_indicator, decomposition_composite, geometry_digest,
                                halfspace_ramp, hull_composite, hull_composite_polytopes,
                                piecewise_composite, shared_faces)
from relustep.geometry import (ConvexPolytope, Hyperplane, RegionSpec, SimplePolygon,
                               convex_decomposition_2d, hull_pockets)
from relustep.network import eval_batch, evaluate
from relustep.sampling import uniform_points
from relustep.scenarios import H_BOX, H_VERTICES, circle_construction, h_rectangles

BOX = ((0.0, 1.0), (0.0, 1.0))


def rect(x0, x1, y0, y1):
    return [(x0, y0), (x1, y0), (x1, y1), (x0, y1)]


def box_faces(x0, x1, y0, y1):
    return [Hyperplane([1, 0], x1), Hyperplane([-1, 0], -x0), Hyperplane([0, 1], y1),
            Hyperplane([0, -1], -y0)]


# -- half-space ramp -------------------------------------------------------------

def test_ramp_examples():
    h = Hyperplane([1, 0], 0.5)
    net = halfspace_ramp(h, 0.1)
    assert net.shape == "2–1–1–1"
    assert evaluate(net, [0.55, 0.3]) == pytest.approx(0.5, abs=1e-15)
    # exactly eps past the plane (0.25 + 0.5 is exact in binary)
    assert evaluate(halfspace_ramp(h, 0.25), [0.75, 0.1]) == 1.0


def test_ramp_lp_norm_p2():
    net = halfspace_ramp(Hyperplane([1, 0], 0.5), 0.01)
    # column-wise exact: the ramp depends on x only, integrate on a fine 1D grid
    m = 200000
    x = (np.arange(m) + 0.5) / m
    pts = np.stack([x, np.full(m, 0.5)], axis=1)
    step = (x >= 0.5).astype(float)
    err = np.sqrt(np.mean((step - net(pts)) ** 2))
    assert err == pytest.approx(0.0577350, abs=1e-6)
    assert err == pytest.approx(np.sqrt(0.01 / 3), abs=1e-6)


def test_eps_validation():
    h = Hyperplane([1, 0], 0.5)
    for bad in (0.0, -0.1):
        with pytest.raises(ValueError):
            halfspace_ramp(h, bad)
        with pytest.raises(ValueError):
            convex_indicator([h], bad)
    with pytest.raises(ValueError):
        convex_indicator([], 0.1)
    with pytest.raises(ValueError):
        ConstructionReport(halfspace_ramp(h, 0.1), 0.0, "2–1–1–1")


# -- convex indicator --------------------------------------------------------------

def test_convex_indicator_wedge(wedge):
    hs, chi_hat = wedge
    net = convex_indicator(hs, 0.1)
    assert net.shape == "2–2–1–1"
    assert evaluate(net, [0.65, 0.3]) == pytest.approx(0.5, abs=1e-14)
    assert chi_hat.step([[0.65, 0.3]])[0] - evaluate(net, [0.65, 0.3]) == \
        pytest.approx(0.5, abs=1e-14)
    assert evaluate(net, [0.63, 0.64]) == pytest.approx(0.7, abs=1e-14)


def test_convex_indicator_hypercube_interior():
    d = 10000
    hs = [Hyperplane.axis(d, i, 0.5) for i in range(d)]
    net = convex_indicator(hs, 0.05)
    assert evaluate(net, np.full(d, 0.255)) == 0.0


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 8), st.floats(0.01, 2.0))
def test_convex_range_and_plateaus(seed, n, eps):
    rng = np.random.default_rng(seed)
    t = rng.uniform(0, 2 * np.pi, n)
    hs = [Hyperplane([np.cos(a), np.sin(a)], rng.uniform(0.05, 0.4) + 0.5 * np.cos(a) +
                     0.5 * np.sin(a)) for a in t]
    net = convex_indicator(hs, eps)
    x = uniform_points(BOX, 0, 20000, seed=seed % 1000)
    v = net(x)
    assert np.all((v >= 0) & (v <= 1))
    s = np.stack([h(x) for h in hs], axis=1)
    inside = np.all(s < 0, axis=1)
    assert np.all(v[inside] == 0.0)
    deep = np.maximum(s, 0).sum(axis=1) >= eps
    assert np.all(v[deep] == 1.0)


def test_convex_range_on_scenario_points():
    cons, hs = circle_construction(6, 1 / 25)
    v = cons.network(uniform_points(BOX, 0, 10**6))
    assert v.min() >= 0.0 and v.max() <= 1.0


def test_bump_is_complement(wedge):
    hs, _ = wedge
    x = uniform_points(BOX, 0, 5000, seed=6)
    np.testing.assert_allclose(convex_bump(hs, 0.1)(x), 1 - convex_indicator(hs, 0.1)(x),
                               atol=1e-15)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31))
def test_residual_identity_random_chain(seed):
    """Convex polygon chains: chi_hat - N equals the closed-form residual."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(3, 9))
    t = np.sort(rng.uniform(0, 2 * np.pi, n))
    if np.max(np.diff(np.concatenate([t, [t[0] + 2 * np.pi]]))) >= np.pi * 0.9:
        return
    hs = [Hyperplane([np.cos(a), np.sin(a)], 0.5 * (np.cos(a) + np.sin(a)) + 0.3) for a in t]
    eps = float(rng.uniform(0.005, 0.05))
    chi_hat = RegionSpec.from_hyperplanes(hs, BOX)
    x = uniform_points(BOX, 0, 20000, seed=1)
    s = np.stack([h(x) for h in hs], axis=1)
    band = np.any(np.abs(s) <= 1e-9, axis=1) | (np.abs(np.maximum(s, 0).sum(axis=1) - eps) <= 1e-9)
    pred = predicted_residuals(x, hs, eps, chi_hat, closed=True)
    ok = ~band & np.isfinite(pred)
    err = chi_hat.step(x) - convex_indicator(hs, eps)(x)
    assert np.all(np.abs(err[ok] - pred[ok]) <= 1e-12)


# -- hull composite ---------------------------------------------------------------

def test_hull_convex_region():
    sq = SimplePolygon(rect(0.2, 0.8, 0.2, 0.7))
    rep = hull_composite(sq, 0.05)
    assert rep.shape == "2–4–1–1"
    assert rep.provenance["pockets"] == []
    x = uniform_points(BOX, 0, 5000, seed=1)
    np.testing.assert_array_equal(rep.network(x), convex_indicator(sq.edge_hyperplanes(), 0.05)(x))


@pytest.mark.parametrize("eps", [1 / 12, 1 / 200])
def test_hull_h_shape(eps):
    rep = hull_composite(SimplePolygon(H_VERTICES), eps)
    assert rep.shape == "2–12–3–1"
    assert rep.epsilon == eps and rep.provenance["construction"] == "hull"
    x = uniform_points(H_BOX, 0, 10**5, seed=2)
    v = rep.network(x)
    assert v.min() >= -1e-12 and v.max() <= 1 + 1e-12


def test_hull_shape_accounting():
    poly = SimplePolygon([(0, 0), (4, 0), (4, 4), (3, 4), (2, 1), (1, 4), (0, 4)])
    hull, pockets = hull_pockets(poly)
    rep = hull_composite(poly, 0.05)
    f = len(hull) + sum(len(p) for p in pockets)
    assert rep.shape == f"2–{f}–{1 + len(pockets)}–1"


def test_hull_recursive_pocket():
    # a spiral-like notch whose pocket is itself non-convex
    poly = SimplePolygon([(0, 0), (6, 0), (6, 6), (5, 6), (5, 2), (2, 2), (2, 4), (4, 4),
                          (4, 6), (0, 6)])
    hull, pockets = hull_pockets(poly)
    assert any(not p.is_convex() for p in pockets)
    rep = hull_composite(poly, 0.01)
    box = ((-0.5, 6.5), (-0.5, 6.5))
    x = uniform_points(box, 0, 10**5, seed=3)
    v = rep.network(x)
    chi_hat = RegionSpec.from_polygon(poly, box).step(x)
    # away from the interface the composite reproduces the step exactly
    far = np.ones(len(x), dtype=bool)
    for a, b in poly.edges():
        d = _seg_dist(x, a, b)
        far &= d > 0.05
    np.testing.assert_allclose(v[far], chi_hat[far], atol=1e-12)
    with pytest.raises(RecursionError):
        hull_composite(poly, 0.01, max_recursion=0)


def _seg_dist(x, a, b):
    ab = b - a
    t = np.clip(((x - a) @ ab) / (ab @ ab), 0, 1)
    return np.linalg.norm(x - (a + t[:, None] * ab), axis=1)


def test_hull_polytopes_any_dim():
    cube = ConvexPolytope([Hyperplane.axis(3, i, 1.0) for i in range(3)] +
                          [Hyperplane.axis(3, i, 0.0, sign=-1.0) for i in range(3)])
    notch = ConvexPolytope([Hyperplane.axis(3, 0, 1.0), Hyperplane.axis(3, 0, -0.6, sign=-1.0),
                            Hyperplane.axis(3, 1, 1.0), Hyperplane.axis(3, 1, -0.6, sign=-1.0),
                            Hyperplane.axis(3, 2, 1.0), Hyperplane.axis(3, 2, 0.0, sign=-1.0)])
    rep = hull_composite_polytopes(cube, [notch], 0.05)
    assert rep.shape == "3–12–2–1"
    assert evaluate(rep.network, [0.8, 0.8, 0.5]) == pytest.approx(1.0, abs=1e-12)
    assert evaluate(rep.network, [0.2, 0.2, 0.5]) == 0.0


# -- decomposition composite -----------------------------------------------------

def test_decomposition_single_piece():
    piece = ConvexPolytope.from_polygon(rect(0.2, 0.8, 0.3, 0.6))
    rep = decomposition_composite([piece], eps=0.05)
    x = uniform_points(BOX, 0, 5000, seed=2)
    np.testing.assert_allclose(rep.network(x), convex_indicator(piece.faces, 0.05)(x),
                               atol=1e-15)


def test_decomposition_two_halves_gap_slab():
    eps = 0.05
    k1 = ConvexPolytope.from_polygon(rect(0, 0.5, 0, 1))
    k2 = ConvexPolytope.from_polygon(rect(0.5, 1, 0, 1))
    rep = decomposition_composite([k1, k2], eps=eps)
    assert rep.provenance["pieces"][1]["shrunk"] == [3]
    n1 = convex_bump(k1.faces, eps)
    shrunk = [h.shifted(-eps) if i == 3 else h for i, h in enumerate(k2.faces)]
    n2 = convex_bump(shrunk, eps)
    rng = np.random.default_rng(0)
    slab = np.stack([rng.uniform(0.5 + 1e-9, 0.5 + eps - 1e-9, 10**4),
                     rng.uniform(0.2, 0.8, 10**4)], axis=1)
    # the two ramps add up to one on the gap slab, so N reproduces chi_hat = 0 there
    assert np.max(np.abs(n1(slab) + n2(slab) - 1.0)) <= 1e-12
    assert np.max(np.abs(rep.network(slab))) <= 1e-12


def test_decomposition_h_shape():
    pieces = h_rectangles()
    assert shared_faces(pieces) == [(2, 1, 1), (2, 3, 0)]
    for eps in (1 / 12, 1 / 200):
        rep = decomposition_composite(pieces, eps=eps)
        assert rep.shape == "2–12–3–1"
        x = uniform_points(H_BOX, 0, 10**5, seed=4)
        v = rep.network(x)
        assert v.min() >= -1e-12 and v.max() <= 1 + 1e-12


def test_decomposition_overlap_rejected():
    a = ConvexPolytope.from_polygon(rect(0, 0.6, 0, 1))
    b = ConvexPolytope.from_polygon(rect(0.4, 1, 0, 1))
    with pytest.raises(ValueError):
        decomposition_composite([a, b], eps=0.1)


def test_decomposition_bad_internal_face():
    a = ConvexPolytope.from_polygon(rect(0, 0.5, 0, 1))
    b = ConvexPolytope.from_polygon(rect(0.5, 1, 0, 1))
    with pytest.raises(ValueError):
        decomposition_composite([a, b], internal_faces=[(1, 0, 0)], eps=0.1)
    with pytest.raises(ValueError):
        decomposition_composite([a, b], internal_faces=[(0, 1, 1)], eps=0.1)


def test_decomposition_partial_face_warns():
    a = ConvexPolytope.from_polygon(rect(0, 0.5, 0, 0.5))
    b = ConvexPolytope.from_polygon(rect(0.5, 1, 0, 1))
    with pytest.warns(RuntimeWarning):
        decomposition_composite([a, b], eps=0.05)


def test_composites_agree_on_h_shape():
    eps = 1 / 50
    hull = hull_composite(SimplePolygon(H_VERTICES), eps).network
    dec = decomposition_composite(convex_decomposition_2d(SimplePolygon(H_VERTICES)),
                                  eps=eps).network
    x = uniform_points(H_BOX, 0, 10**5, seed=7)
    diff = np.mean(np.abs(hull(x) - dec(x))) * 16.0
    # each composite ramps only inside strips of width eps along its faces
    assert diff <= 2 * 20 * eps


# -- piecewise constant ------------------------------------------------------------

def test_piecewise_single_term(wedge):
    hs, chi_hat = wedge
    net = convex_bump(hs, 0.1)
    spec = PiecewiseConstantSpec([(1.0, chi_hat)], BOX)
    comb = piecewise_composite(spec, [net])
    x = uniform_points(BOX, 0, 5000)
    np.testing.assert_allclose(comb(x), net(x), atol=1e-15)


def test_piecewise_two_boxes():
    r1 = RegionSpec.from_hyperplanes(box_faces(0.1, 0.4, 0.1, 0.4), BOX)
    r2 = RegionSpec.from_hyperplanes(box_faces(0.6, 0.9, 0.5, 0.9), BOX)
    spec = PiecewiseConstantSpec([(2.0, r1), (-3.0, r2)], BOX)
    nets = [convex_bump(r.geometry, 0.02) for r in (r1, r2)]
    comb = piecewise_composite(spec, nets)
    assert evaluate(comb, [0.25, 0.25]) == pytest.approx(2.0, abs=1e-12)
    assert evaluate(comb, [0.75, 0.7]) == pytest.approx(-3.0, abs=1e-12)
    assert evaluate(comb, [0.5, 0.05]) == 0.0
    zero = piecewise_composite(PiecewiseConstantSpec([(0.0, r1), (0.0, r2)], BOX), nets)
    assert np.all(zero(uniform_points(BOX, 0, 1000)) == 0.0)
    with pytest.raises(ValueError):
        piecewise_composite(spec, nets[:1])


def test_piecewise_spec_checks():
    r1 = RegionSpec.from_hyperplanes(box_faces(0.1, 0.6, 0.1, 0.6), BOX)
    r2 = RegionSpec.from_hyperplanes(box_faces(0.4, 0.9, 0.4, 0.9), BOX)
    with pytest.raises(ValueError):
        PiecewiseConstantSpec([(1.0, r1), (1.0, r2)], BOX)
    with pytest.raises(ValueError):
        PiecewiseConstantSpec([], BOX)


# -- provenance ----------------------------------------------------------------

def test_provenance_digest_stable():
    poly = SimplePolygon(H_VERTICES)
    a = hull_composite(poly, 0.1).provenance
    b = hull_composite(SimplePolygon(H_VERTICES), 0.1).provenance
    assert a == b and len(a["digest"]) == 64
    json.dumps(a)
    assert geometry_digest([Hyperplane([1, 0], 0.5)]) != geometry_digest([Hyperplane([1, 0], 0.6)])


def test_large_eps_warns_without_plateau():
    h = [Hyperplane([1, 0], 0.5)]
    with pytest.warns(RuntimeWarning):
        net = convex_indicator(h, 0.8, box=BOX)
    assert net(uniform_points(BOX, 0, 1000)).max() < 1.0
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        convex_indicator(h, 0.3, box=BOX)
