"""The four worked examples as named presets.

``*_construction`` functions only build the network; ``*_example`` functions
also estimate errors, check the strip bound and optionally write artifacts
under ``out/<scenario>/<preset>/``.
"""

import math
import os
import time
from dataclasses import dataclass, field

import numpy as np

from relustep import io as rio
from relustep.analysis import (ErrorReport, lp_error_grid, lp_error_mc, strip_measure_2d,
                               transition_measure, verify_bound)
from relustep.construct import (ConstructionReport, convex_indicator, decomposition_composite,
                                geometry_digest, hull_composite)
from relustep.geometry import (Hyperplane, RegionSpec, SimplePolygon, convex_decomposition_2d,
                               inscribed_polygon, polygonalize_circle_inscribed,
                               polygonalize_convex_tangent, sphere_octant_points,
                               symm_diff_measure)
from relustep.network import (first_layer_breaklines, first_layer_segments_2d,
                              restrict_to_slice, second_layer_breaklines_2d)
from relustep.sampling import DEFAULT_SEED

UNIT_SQUARE = ((0.0, 1.0), (0.0, 1.0))
UNIT_CUBE = ((0.0, 1.0),) * 3
H_BOX = ((-2.0, 2.0), (-2.0, 2.0))

CIRCLE_CENTER = (0.5, 0.5)
CIRCLE_RADIUS = 0.25
SPHERE_RADIUS = 0.7
SPHERE_SLICE_Z = 0.205
HYPERCUBE_SLICE = 0.255

# H-shaped region: legs [-1.5,-0.5]x[-1.5,1.5] and [0.5,1.5]x[-1.5,1.5],
# crossbar [-0.5,0.5]x[-0.5,0.5]; counterclockwise from the lower-left corner.
H_VERTICES = (
    (-1.5, -1.5), (-0.5, -1.5), (-0.5, -0.5), (0.5, -0.5), (0.5, -1.5), (1.5, -1.5),
    (1.5, 1.5), (0.5, 1.5), (0.5, 0.5), (-0.5, 0.5), (-0.5, 1.5), (-1.5, 1.5),
)

PRESETS = {
    "circle": [dict(n=6, eps=1 / 25), dict(n=50, eps=1 / 2000)],
    "sphere": [dict(n=9, eps=1 / 15), dict(n=100, eps=1 / 100)],
    "hypercube": [dict(d=10000, eps=1 / 20), dict(d=10000, eps=1 / 200)],
    "hshape": [dict(method="hull", eps=1 / 12), dict(method="hull", eps=1 / 200),
               dict(method="decomposition", eps=1 / 12),
               dict(method="decomposition", eps=1 / 200)],
}


@dataclass
class ScenarioReport:
    name: str
    preset: str
    shape: str
    eps: float
    reports: list = field(default_factory=list)
    artifacts: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)

    def rows(self):
        return [rio.error_row(f"{self.name}/{self.preset}:{label}", self.eps, rep, check)
                for label, rep, check in self.reports]


def h_polygon():
    return SimplePolygon(H_VERTICES)


def h_rectangles():
    """The legs and the crossbar, legs first so only the crossbar gets shrunk."""
    return convex_decomposition_2d(h_polygon())


def sphere_surface(x):
    return float(np.dot(x, x)) - SPHERE_RADIUS ** 2


def sphere_gradient(x):
    return 2.0 * np.asarray(x, dtype=float)


def sphere_hyperplanes(n):
    pts = sphere_octant_points(n, SPHERE_RADIUS)
    return polygonalize_convex_tangent(sphere_surface, sphere_gradient, pts)


def circle_construction(n, eps):
    hs = polygonalize_circle_inscribed(CIRCLE_CENTER, CIRCLE_RADIUS, n, box=UNIT_SQUARE)
    net = convex_indicator(hs, eps, box=UNIT_SQUARE)
    prov = {"construction": "convex", "eps": eps, "n": n, "digest": geometry_digest(hs)}
    return ConstructionReport(net, eps, net.shape, prov), hs


def sphere_construction(n, eps):
    hs = sphere_hyperplanes(n)
    net = convex_indicator(hs, eps, box=UNIT_CUBE)
    prov = {"construction": "convex", "eps": eps, "n": n, "digest": geometry_digest(hs)}
    return ConstructionReport(net, eps, net.shape, prov), hs


def hypercube_hyperplanes(d):
    return [Hyperplane.axis(d, i, 0.5) for i in range(d)]


def hypercube_construction(d, eps):
    if d < 2:
        raise ValueError("need d >= 2")
    hs = hypercube_hyperplanes(d)
    net = convex_indicator(hs, eps, box=((0.0, 1.0),) * d)
    prov = {"construction": "convex", "eps": eps, "d": d, "planes": "x_i = 1/2"}
    return ConstructionReport(net, eps, net.shape, prov), hs


def hypercube_closed_form(xs, eps):
    """``1 - s(1 - (1/eps) sum_i s(x_i - 1/2))`` evaluated directly."""
    s = np.maximum(np.asarray(xs, dtype=float) - 0.5, 0.0).sum(axis=1)
    return 1.0 - np.maximum(1.0 - s / eps, 0.0)


def hshape_construction(method, eps):
    if method == "hull":
        return hull_composite(h_polygon(), eps)
    if method == "decomposition":
        return decomposition_composite(h_rectangles(), eps=eps)
    raise ValueError(f"unknown method {method!r}")


def component_groups(net):
    """First-layer hyperplanes grouped by the second-layer neuron they feed."""
    planes = first_layer_breaklines(net)
    w2 = net.layers[1].to_dense()
    return [[planes[j] for j in np.flatnonzero(w2[k])] for k in range(w2.shape[0])]


def preset_name(scenario, **kw):
    if scenario in ("circle", "sphere"):
        return f"n{kw['n']}"
    if scenario == "hypercube":
        return f"d{kw['d']}_e{1 / kw['eps']:g}"
    return f"{kw['method']}_e{1 / kw['eps']:g}"


def _chi_bound_check(rep, gap, strip, p):
    bound = gap ** (1.0 / p) + strip ** (1.0 / p)
    passed = rep.estimate <= bound + 3.0 * rep.half_width_95
    return rep.with_bound(bound), passed


def _reports_2d(chi_hat, chi, net, box, strip, gap, samples, seed):
    out = []
    for p in (1, 2):
        rep = lp_error_mc(chi_hat.step, net, p, box, samples, seed)
        check = verify_bound(rep, strip.estimate, strip.half_width_95)
        out.append((f"chi_hat/p{p}", rep.with_bound(strip.estimate ** (1.0 / p)), check.passed))
        if chi is not None:
            rep = lp_error_mc(chi.step, net, p, box, samples, seed)
            rep, passed = _chi_bound_check(rep, gap.estimate, strip.estimate, p)
            out.append((f"chi/p{p}", rep, passed))
    return out


def _write_artifacts(report, construction, out, field_net, field_box, field_slice,
                     resolution, break_net=None):
    """Network, error rows, field dump and break lines (plus SVG renderings)."""
    from relustep.render import render_2d

    folder = os.path.join(out, report.name, report.preset)
    os.makedirs(folder, exist_ok=True)
    paths = {}
    paths["network"] = os.path.join(folder, "network.json")
    rio.save_network(construction.network, paths["network"], construction.provenance)
    paths["errors"] = os.path.join(folder, "errors.csv")
    rio.write_error_rows(paths["errors"], report.rows())
    fld = rio.sample_field(field_net, field_box, resolution, field_slice)
    paths["field"] = os.path.join(folder, "field.txt")
    rio.save_field(fld, paths["field"])
    paths["field_svg"] = os.path.join(folder, "field.svg")
    render_2d(fld, paths["field_svg"])
    bnet = break_net if break_net is not None else field_net
    bl = rio.Breaklines(np.asarray(field_box, dtype=float),
                        first_layer_segments_2d(bnet, field_box),
                        second_layer_breaklines_2d(bnet, field_box), field_slice)
    paths["breaklines"] = os.path.join(folder, "breaklines.json")
    rio.save_breaklines(bl, paths["breaklines"])
    paths["breaklines_svg"] = os.path.join(folder, "breaklines.svg")
    render_2d(bl, paths["breaklines_svg"])
    report.artifacts.update(paths)


def circle_example(n, eps, out=None, samples=10**6, seed=DEFAULT_SEED, resolution=256):
    """Disk of radius 0.25 in the unit square, inscribed ``n``-gon."""
    t0 = time.perf_counter()
    cons, hs = circle_construction(n, eps)
    t1 = time.perf_counter()
    chi = RegionSpec.ball(CIRCLE_CENTER, CIRCLE_RADIUS, UNIT_SQUARE)
    chi_hat = RegionSpec.from_polygon(inscribed_polygon(CIRCLE_CENTER, CIRCLE_RADIUS, n),
                                      UNIT_SQUARE)
    gap = symm_diff_measure(chi, chi_hat, samples, seed)
    strip = strip_measure_2d(hs, eps, UNIT_SQUARE, samples, seed, closed=True)
    rep = ScenarioReport("circle", preset_name("circle", n=n), cons.shape, eps)
    rep.reports = _reports_2d(chi_hat, chi, cons.network, UNIT_SQUARE, strip, gap,
                              samples, seed)
    rep.timings = {"build": t1 - t0, "errors": time.perf_counter() - t1}
    if out:
        _write_artifacts(rep, cons, out, cons.network, UNIT_SQUARE, None, resolution)
    return rep


def sphere_example(n, eps, out=None, samples=10**6, seed=DEFAULT_SEED, resolution=256):
    """Octant of the radius-0.7 ball in the unit cube, ``n`` tangent planes."""
    t0 = time.perf_counter()
    cons, hs = sphere_construction(n, eps)
    t1 = time.perf_counter()
    chi = RegionSpec.ball((0.0, 0.0, 0.0), SPHERE_RADIUS, UNIT_CUBE)
    chi_hat = RegionSpec.from_hyperplanes(hs, UNIT_CUBE)
    gap = symm_diff_measure(chi, chi_hat, samples, seed)
    strip = transition_measure([hs], eps, UNIT_CUBE, samples, seed)
    rep = ScenarioReport("sphere", preset_name("sphere", n=n), cons.shape, eps)
    rep.reports = _reports_2d(chi_hat, chi, cons.network, UNIT_CUBE, strip, gap, samples, seed)
    rep.timings = {"build": t1 - t0, "errors": time.perf_counter() - t1}
    if out:
        sl = {"dim": 3, "axes": [0, 1], "fixed": SPHERE_SLICE_Z}
        snet = restrict_to_slice(cons.network, [0, 1], SPHERE_SLICE_Z)
        _write_artifacts(rep, cons, out, snet, UNIT_SQUARE, sl, resolution)
    return rep


def hypercube_example(d, eps, out=None, resolution=2000, field_resolution=256):
    """Cube ``{x_i < 1/2}`` in ``(0,1)^d``; errors on the slice ``x_i = 0.255, i >= 3``.

    Monte Carlo over the full cube is uninformative in high dimension (almost
    every sample saturates), so the reported errors are grid quadratures on the
    two-dimensional slice used for the figures.
    """
    t0 = time.perf_counter()
    cons, _ = hypercube_construction(d, eps)
    t1 = time.perf_counter()
    snet = restrict_to_slice(cons.network, [0, 1], HYPERCUBE_SLICE)
    wedge = [Hyperplane([1.0, 0.0], 0.5), Hyperplane([0.0, 1.0], 0.5)]
    chi_hat = RegionSpec.from_hyperplanes(wedge, UNIT_SQUARE)
    strip = strip_measure_2d(wedge, eps, UNIT_SQUARE, 10**6)
    rep = ScenarioReport("hypercube", preset_name("hypercube", d=d, eps=eps), cons.shape, eps)
    for p in (1, 2):
        r = lp_error_grid(chi_hat.step, snet, p, UNIT_SQUARE, resolution)
        r = ErrorReport(r.p, r.estimate, r.method, 0.0, strip.estimate ** (1.0 / p),
                        r.samples_or_resolution, r.power, 0.0,
                        {"slice": f"x_i={HYPERCUBE_SLICE} for i>=3"})
        rep.reports.append((f"slice/p{p}", r, verify_bound(r, strip.estimate,
                                                            strip.half_width_95).passed))
    rep.timings = {"build": t1 - t0, "errors": time.perf_counter() - t1}
    if out:
        sl = {"dim": d, "axes": [0, 1], "fixed": HYPERCUBE_SLICE}
        _write_artifacts(rep, cons, out, snet, UNIT_SQUARE, sl, field_resolution)
    return rep


def hshape_example(method, eps, out=None, samples=10**6, seed=DEFAULT_SEED, resolution=256):
    """H-shaped region in ``(-2,2)^2`` by the hull or the decomposition construction."""
    t0 = time.perf_counter()
    cons = hshape_construction(method, eps)
    t1 = time.perf_counter()
    chi_hat = RegionSpec.from_polygon(h_polygon(), H_BOX)
    strip = transition_measure(component_groups(cons.network), eps, H_BOX, samples, seed)
    rep = ScenarioReport("hshape", preset_name("hshape", method=method, eps=eps),
                         cons.shape, eps)
    rep.reports = _reports_2d(chi_hat, None, cons.network, H_BOX, strip, None, samples, seed)
    rep.timings = {"build": t1 - t0, "errors": time.perf_counter() - t1}
    if out:
        _write_artifacts(rep, cons, out, cons.network, H_BOX, None, resolution)
    return rep


EXAMPLES = {
    "circle": circle_example,
    "sphere": sphere_example,
    "hypercube": hypercube_example,
    "hshape": hshape_example,
}

CONSTRUCTIONS = {
    "circle": lambda n, eps: circle_construction(n, eps)[0],
    "sphere": lambda n, eps: sphere_construction(n, eps)[0],
    "hypercube": lambda d, eps: hypercube_construction(d, eps)[0],
    "hshape": hshape_construction,
}


def preset_shapes():
    """``(scenario, preset, shape)`` for all eight presets (construction only)."""
    out = []
    for name, presets in PRESETS.items():
        for kw in presets:
            cons = CONSTRUCTIONS[name](**kw)
            out.append((name, preset_name(name, **kw), cons.shape))
    return out


def polygon_perimeter(vertices):
    v = np.asarray(vertices, dtype=float)
    return float(np.sum(np.linalg.norm(np.roll(v, -1, axis=0) - v, axis=1)))


def circle_gap_exact(n, radius=CIRCLE_RADIUS):
    """Area between a circle and its inscribed regular ``n``-gon."""
    return radius ** 2 * (math.pi - 0.5 * n * math.sin(2 * math.pi / n))
