"""Closed-form weights for step functions with polyhedral interfaces.

Two building blocks, both ``d-n-1-1``:

* :func:`convex_indicator` ``1 - s(1 - (1/eps) sum_i s(a_i . x - b_i))`` is 0 on the
  polytope ``{a_i . x < b_i}`` and 1 once the summed violation reaches ``eps``;
* :func:`convex_bump` ``s(1 - (1/eps) sum_i s(a_i . x - b_i))`` is its complement,
  1 on the polytope.

The composites for non-convex regions are affine combinations of these.
"""

import hashlib
import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from relustep.geometry import ConvexPolytope, SimplePolygon, _chebyshev_radius, hull_pockets
from relustep.network import AffineLayer, ReluNetwork, affine_combine, layer_from_rows
from relustep.sampling import DEFAULT_SEED, as_box, uniform_points

MAX_RECURSION = 4


@dataclass(frozen=True)
class ConstructionReport:
    network: ReluNetwork
    epsilon: float
    shape: str
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")


def geometry_digest(obj):
    """SHA-256 of a canonical JSON rendering of nested geometry data."""
    def canon(o):
        if isinstance(o, SimplePolygon):
            return canon(o.vertices)
        if isinstance(o, ConvexPolytope):
            return [canon(h) for h in o.faces]
        if hasattr(o, "support") and hasattr(o, "offset"):
            idx, val = o.support()
            return {"dim": o.dim, "idx": idx.tolist(), "val": [format(v, ".17g") for v in val],
                    "offset": format(o.offset, ".17g")}
        if isinstance(o, np.ndarray):
            return canon(o.tolist())
        if isinstance(o, (list, tuple)):
            return [canon(x) for x in o]
        if isinstance(o, float):
            return format(o, ".17g")
        return o
    text = json.dumps(canon(obj), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


def _check_eps(eps):
    if not eps > 0:
        raise ValueError("eps must be positive")


def _first_layer(hyperplanes):
    hs = list(hyperplanes)
    if not hs:
        raise ValueError("need at least one hyperplane")
    d = hs[0].dim
    if any(h.dim != d for h in hs):
        raise ValueError("hyperplanes have mixed dimensions")
    return layer_from_rows(d, [h.support() for h in hs], [h.offset for h in hs])


def _ramp_layers(hyperplanes, eps):
    _check_eps(eps)
    l1 = _first_layer(hyperplanes)
    # second layer: 1 - (1/eps) * sum  ==  (-1/eps) . h - (-1)
    l2 = AffineLayer(np.full((1, l1.n_out), -1.0 / eps), [-1.0])
    return l1, l2


def _warn_no_plateau(hyperplanes, eps, box):
    """Warn when ``sum s(h(x)) < eps`` on the whole box, so the value 1 is never reached."""
    box = as_box(box)
    lo, hi = box[:, 0], box[:, 1]
    top = 0.0
    for h in hyperplanes:
        idx, val = h.support()
        top += max(0.0, float(np.sum(np.where(val > 0, val * hi[idx], val * lo[idx]))) - h.offset)
    if top < eps:
        warnings.warn(f"eps={eps:g} exceeds the largest summed violation {top:.6g} in the box; "
                      "the network never reaches 1 there", RuntimeWarning, stacklevel=3)


def convex_indicator(hyperplanes, eps, box=None):
    """``d-n-1-1`` network that is 0 on ``{all h(x) < 0}`` and 1 where ``sum s(h) >= eps``.

    Normals must point away from the zero region.  With ``box`` given, warn if
    ``eps`` is so large that the plateau at 1 misses the box entirely.
    """
    l1, l2 = _ramp_layers(hyperplanes, eps)
    if box is not None:
        _warn_no_plateau(hyperplanes, eps, box)
    return ReluNetwork((l1, l2, AffineLayer([[-1.0]], [-1.0])))


def convex_bump(hyperplanes, eps):
    """``d-n-1-1`` network equal to ``1 - convex_indicator``: 1 on the polytope."""
    l1, l2 = _ramp_layers(hyperplanes, eps)
    return ReluNetwork((l1, l2, AffineLayer([[1.0]], [0.0])))


def halfspace_ramp(h, eps):
    """``1 - s(1 - s(a . x - b) / eps)``: 0 behind the plane, 1 past ``a . x - b = eps``."""
    return convex_indicator([h], eps)


def _hull_terms(polygon, eps, depth, max_recursion):
    """Terms ``(coeff, net)`` and constant approximating the step of ``polygon``."""
    hull, pockets = hull_pockets(polygon)
    terms = [(1.0, convex_indicator(hull.edge_hyperplanes(), eps))]
    constant = 0.0
    info = {"hull_faces": len(hull), "pockets": []}
    for pocket in pockets:
        if pocket.is_convex():
            terms.append((1.0, convex_bump(pocket.edge_hyperplanes(), eps)))
            info["pockets"].append({"faces": len(pocket), "convex": True})
            continue
        if depth >= max_recursion:
            raise RecursionError(
                f"non-convex pocket nesting exceeds max_recursion={max_recursion}")
        # indicator of the pocket = 1 - (step of the pocket)
        sub_terms, sub_const, sub_info = _hull_terms(pocket, eps, depth + 1, max_recursion)
        terms.extend((-c, net) for c, net in sub_terms)
        constant += 1.0 - sub_const
        info["pockets"].append({"faces": len(pocket), "convex": False, "inner": sub_info})
    return terms, constant, info


def hull_composite(region, eps, max_recursion=MAX_RECURSION):
    """Convex-hull construction ``N = N_0 + sum_i N_i`` for a non-convex polygon.

    ``N_0`` is the step of the convex hull and each ``N_i`` is the bump of one
    pocket between the hull and the polygon.  Non-convex pockets are handled by
    applying the same procedure to them, at most ``max_recursion`` levels deep.
    The result approximates the step function that is 0 on ``region``.
    """
    _check_eps(eps)
    region = region if isinstance(region, SimplePolygon) else SimplePolygon(region)
    terms, constant, info = _hull_terms(region, eps, 0, max_recursion)
    net = affine_combine(terms, constant)
    prov = {"construction": "hull", "eps": eps, "digest": geometry_digest(region), **info}
    return ConstructionReport(net, eps, net.shape, prov)


def hull_composite_polytopes(hull, pockets, eps):
    """Hull construction from caller-supplied convex hull and convex pockets (any ``d``)."""
    _check_eps(eps)
    terms = [(1.0, convex_indicator(hull.faces, eps))]
    terms += [(1.0, convex_bump(p.faces, eps)) for p in pockets]
    net = affine_combine(terms, 0.0)
    prov = {"construction": "hull", "eps": eps, "hull_faces": len(hull.faces),
            "pockets": [{"faces": len(p.faces), "convex": True} for p in pockets],
            "digest": geometry_digest([hull] + list(pockets))}
    return ConstructionReport(net, eps, net.shape, prov)


def _opposite(h, g):
    return h.flipped().isclose(g, tol=1e-9)


def shared_faces(pieces):
    """Internal faces as ``(later, face_index, earlier)`` triples.

    A face of piece ``j`` is internal when an earlier piece has the same plane
    with opposite orientation and the two faces overlap in a relatively open
    set of that plane.
    """
    out = []
    for j, pj in enumerate(pieces):
        for f, h in enumerate(pj.faces):
            for i in range(j):
                pi = pieces[i]
                for g in pi.faces:
                    if not _opposite(h, g):
                        continue
                    others = [x for x in pj.faces if x is not h] + \
                             [x for x in pi.faces if x is not g]
                    r, _ = _chebyshev_radius(others, pj.box, equality=h)
                    if r > 1e-9:
                        out.append((j, f, i))
    return out


def _check_disjoint(pieces):
    for i in range(len(pieces)):
        for j in range(i):
            r, _ = _chebyshev_radius(list(pieces[i].faces) + list(pieces[j].faces))
            if r > 1e-9:
                raise ValueError(f"pieces {j} and {i} overlap")


def decomposition_composite(pieces, internal_faces=None, eps=None):
    """Convex-decomposition construction ``N = 1 - sum_j N_j``.

    Pieces are processed in order.  Piece ``j`` is shrunk by ``eps`` across every
    internal face it shares with an earlier piece and ``N_j`` is the bump of the
    shrunk piece.  In each gap slab the bumps of the two neighbours add up to
    exactly 1, so ``N`` matches the step function there.

    ``internal_faces`` is a list of ``(later, face_index, earlier)`` triples; it
    is detected with :func:`shared_faces` when omitted.
    """
    _check_eps(eps)
    pieces = list(pieces)
    if not pieces:
        raise ValueError("need at least one piece")
    _check_disjoint(pieces)
    if internal_faces is None:
        internal_faces = shared_faces(pieces)
    shrink = {}
    for j, f, i in internal_faces:
        if not i < j:
            raise ValueError("internal faces must reference an earlier piece")
        h = pieces[j].faces[f]
        if not any(_opposite(h, g) for g in pieces[i].faces):
            raise ValueError(f"face {f} of piece {j} is not a face of piece {i}")
        shrink.setdefault(j, set()).add(f)
    terms = []
    for j, piece in enumerate(pieces):
        faces = [h.shifted(-eps) if f in shrink.get(j, ()) else h
                 for f, h in enumerate(piece.faces)]
        _warn_partial(pieces, j, shrink.get(j, ()))
        terms.append((-1.0, convex_bump(faces, eps)))
    net = affine_combine(terms, 1.0)
    prov = {"construction": "decomposition", "eps": eps,
            "pieces": [{"faces": len(p.faces), "shrunk": sorted(shrink.get(j, ()))}
                       for j, p in enumerate(pieces)],
            "digest": geometry_digest(pieces)}
    return ConstructionReport(net, eps, net.shape, prov)


def _warn_partial(pieces, j, faces):
    """Warn when a shrunk planar face is only partly shared (the shrink then moves the interface)."""
    poly = pieces[j].polygon
    if poly is None:
        return
    others = [p.polygon for k, p in enumerate(pieces) if k < j and p.polygon is not None]
    for f in faces:
        h = pieces[j].faces[f]
        p, q = poly.edges()[f] if len(poly) == len(pieces[j].faces) else (None, None)
        if p is None:
            return
        t = np.array([-h.normal[1], h.normal[0]])
        lo, hi = sorted((float(p @ t), float(q @ t)))
        covered = 0.0
        for other in others:
            for a, b in other.edges():
                if abs(h(a)) <= 1e-9 and abs(h(b)) <= 1e-9:
                    s0, s1 = sorted((float(a @ t), float(b @ t)))
                    covered += max(0.0, min(hi, s1) - max(lo, s0))
        if covered < (hi - lo) - 1e-9:
            warnings.warn(f"face {f} of piece {j} is only partly shared; "
                          "shrinking it moves part of the interface", RuntimeWarning,
                          stacklevel=3)


@dataclass(frozen=True)
class PiecewiseConstantSpec:
    """``sum_i alpha_i 1_{region_i}`` over disjoint regions."""

    terms: tuple
    ambient_box: np.ndarray
    check_samples: int = 10_000

    def __post_init__(self):
        terms = tuple((float(a), r) for a, r in self.terms)
        if not terms:
            raise ValueError("need at least one term")
        object.__setattr__(self, "terms", terms)
        x = uniform_points(self.ambient_box, 0, self.check_samples, DEFAULT_SEED)
        count = sum(r.contains(x).astype(int) for _, r in terms)
        if np.any(count > 1):
            raise ValueError("regions overlap")

    def __call__(self, points):
        x = np.atleast_2d(np.asarray(points, dtype=float))
        return sum(a * r.indicator(x) for a, r in self.terms)


def piecewise_composite(spec, per_region_nets):
    """Combine per-region indicator approximations with the spec's coefficients."""
    nets = list(per_region_nets)
    if len(nets) != len(spec.terms):
        raise ValueError("need one network per term")
    return affine_combine([(a, net) for (a, _), net in zip(spec.terms, nets)], 0.0)
