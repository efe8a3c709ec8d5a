"""Hyperplanes, polytopes and the planar polygon machinery behind the constructions.

Orientation convention used throughout: a hyperplane ``a . x - b = 0`` bounds the
region ``{a . x - b < 0}`` and its unit normal ``a`` points away from that region.
"""

import math
from collections import namedtuple
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.optimize import linprog

from relustep.sampling import DEFAULT_SEED, as_box, box_volume, iter_uniform

TOL = 1e-12

Estimate = namedtuple("Estimate", ["estimate", "half_width_95"])


class Hyperplane:
    """Oriented hyperplane ``normal . x - offset = 0`` with a unit normal.

    The constructor renormalizes: ``Hyperplane(w, c)`` describes the same set
    and orientation as ``w . x - c = 0`` but with ``|normal| = 1``.  Very sparse
    normals (axis-aligned faces in high dimension) can be built with
    :meth:`sparse` to avoid storing a dense vector.
    """

    __slots__ = ("_dim", "_offset", "_dense", "_idx", "_val")

    def __init__(self, normal, offset):
        w = np.array(normal, dtype=float).ravel()
        if w.size < 1:
            raise ValueError("hyperplane needs dimension >= 1")
        offset = float(offset)
        if not (np.all(np.isfinite(w)) and math.isfinite(offset)):
            raise ValueError("hyperplane coefficients must be finite")
        nrm = float(np.linalg.norm(w))
        if nrm == 0.0:
            raise ValueError("zero normal")
        if abs(nrm - 1.0) <= 4 * np.finfo(float).eps:
            nrm = 1.0              # already unit: keep the stored digits exactly
        w = w / nrm
        w.flags.writeable = False
        self._dim = w.size
        self._offset = offset / nrm
        self._dense = w
        self._idx = None
        self._val = None

    @classmethod
    def sparse(cls, dim, indices, values, offset):
        idx = np.asarray(indices, dtype=np.int64).ravel()
        val = np.asarray(values, dtype=float).ravel()
        if idx.shape != val.shape or idx.size == 0:
            raise ValueError("indices and values must be non-empty and aligned")
        if np.any(idx < 0) or np.any(idx >= dim) or len(set(idx.tolist())) != idx.size:
            raise ValueError("invalid or duplicate sparse indices")
        offset = float(offset)
        if not (np.all(np.isfinite(val)) and math.isfinite(offset)):
            raise ValueError("hyperplane coefficients must be finite")
        nrm = float(np.linalg.norm(val))
        if nrm == 0.0:
            raise ValueError("zero normal")
        if abs(nrm - 1.0) <= 4 * np.finfo(float).eps:
            nrm = 1.0
        h = cls.__new__(cls)
        h._dim = int(dim)
        h._offset = offset / nrm
        h._dense = None
        val = val / nrm
        idx.flags.writeable = False
        val.flags.writeable = False
        h._idx, h._val = idx, val
        return h

    @classmethod
    def axis(cls, dim, i, offset, sign=1.0):
        """The plane ``sign * x_i = offset``."""
        return cls.sparse(dim, [i], [sign], offset * abs(sign))

    @classmethod
    def through_points_2d(cls, p, q):
        """Line through ``p`` and ``q`` with the normal on the right of ``p -> q``."""
        p = np.asarray(p, dtype=float)
        q = np.asarray(q, dtype=float)
        n = np.array([q[1] - p[1], p[0] - q[0]])
        return cls(n, float(n @ p))

    @property
    def dim(self):
        return self._dim

    @property
    def offset(self):
        return self._offset

    @property
    def is_sparse(self):
        return self._dense is None

    @property
    def normal(self):
        if self._dense is not None:
            return self._dense
        w = np.zeros(self._dim)
        w[self._idx] = self._val
        return w

    def support(self):
        """``(indices, values)`` of the nonzero normal entries."""
        if self._dense is None:
            return self._idx, self._val
        idx = np.flatnonzero(self._dense)
        return idx, self._dense[idx]

    def __call__(self, points):
        """Signed values ``normal . x - offset`` for one point or a batch."""
        x = np.asarray(points, dtype=float)
        if x.shape[-1] != self._dim:
            raise ValueError(f"dimension mismatch: {x.shape[-1]} != {self._dim}")
        if self._dense is not None:
            return x @ self._dense - self._offset
        return x[..., self._idx] @ self._val - self._offset

    def shifted(self, delta):
        """Same normal, offset moved by ``delta`` (the plane moves along the normal)."""
        if self._dense is not None:
            return Hyperplane(self._dense, self._offset + delta)
        return Hyperplane.sparse(self._dim, self._idx, self._val, self._offset + delta)

    def flipped(self):
        if self._dense is not None:
            return Hyperplane(-self._dense, -self._offset)
        return Hyperplane.sparse(self._dim, self._idx, -self._val, -self._offset)

    def isclose(self, other, tol=TOL):
        if self._dim != other.dim:
            return False
        return bool(abs(self._offset - other.offset) <= tol
                    and np.max(np.abs(self.normal - other.normal)) <= tol)

    def __repr__(self):
        if self._dense is not None and self._dim <= 8:
            return f"Hyperplane(normal={self._dense.tolist()}, offset={self._offset!r})"
        idx, val = self.support()
        return f"Hyperplane(dim={self._dim}, nnz={idx.size}, offset={self._offset!r})"


def signed_eval(h, x):
    """Return ``h.normal . x - h.offset`` for a single point."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError("signed_eval takes a single point")
    return float(h(x))


def _chebyshev_radius(faces, box=None, equality=None):
    """Largest ball radius inside ``{h(x) < 0 for h in faces}`` (capped at 1e3).

    ``equality`` optionally pins the centre onto a hyperplane; the radius is then
    measured within that plane.
    """
    dim = faces[0].dim if faces else equality.dim
    rows, rhs = [], []
    for h in faces:
        a = h.normal
        if equality is not None:
            # distance to h within the plane uses the tangential part of a
            a_t = a - (a @ equality.normal) * equality.normal
            scale = float(np.linalg.norm(a_t))
        else:
            scale = 1.0
        rows.append(np.append(a, scale))
        rhs.append(h.offset)
    if box is not None:
        box = as_box(box)
        for i in range(dim):
            e = np.zeros(dim + 1)
            e[i], e[-1] = 1.0, 1.0
            rows.append(e)
            rhs.append(box[i, 1])
            e = np.zeros(dim + 1)
            e[i], e[-1] = -1.0, 1.0
            rows.append(e)
            rhs.append(-box[i, 0])
    c = np.zeros(dim + 1)
    c[-1] = -1.0
    a_eq = b_eq = None
    if equality is not None:
        a_eq = np.append(equality.normal, 0.0)[None, :]
        b_eq = [equality.offset]
    bounds = [(None, None)] * dim + [(0.0, 1e3)]
    res = linprog(c, A_ub=np.array(rows), b_ub=np.array(rhs), A_eq=a_eq, b_eq=b_eq,
                  bounds=bounds, method="highs")
    if res.status != 0:
        return 0.0, None
    return float(res.x[-1]), res.x[:-1]


@dataclass(frozen=True)
class ConvexPolytope:
    """Convex polytope in H-representation: interior ``{h(x) < 0 for all faces}``.

    ``polygon`` is the planar outline when the polytope came from a 2D polygon.
    """

    faces: tuple
    label: Optional[str] = None
    box: Optional[np.ndarray] = field(default=None, repr=False, compare=False)
    polygon: Optional["SimplePolygon"] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        faces = []
        for h in self.faces:
            if not any(h.isclose(g) for g in faces):
                faces.append(h)
        if not faces:
            raise ValueError("polytope needs at least one face")
        dims = {h.dim for h in faces}
        if len(dims) != 1:
            raise ValueError("faces have mixed dimensions")
        object.__setattr__(self, "faces", tuple(faces))
        box = None if self.box is None else as_box(self.box)
        object.__setattr__(self, "box", box)
        r, _ = _chebyshev_radius(faces, box)
        if r <= TOL:
            raise ValueError("polytope interior is empty")

    @classmethod
    def from_polygon(cls, polygon, label=None, box=None):
        polygon = polygon if isinstance(polygon, SimplePolygon) else SimplePolygon(polygon)
        if not polygon.is_convex():
            raise ValueError("polygon is not convex")
        return cls(tuple(polygon.edge_hyperplanes()), label=label, box=box, polygon=polygon)

    @property
    def dim(self):
        return self.faces[0].dim

    def values(self, points):
        """Signed face values, shape ``(m, n_faces)``."""
        x = np.atleast_2d(np.asarray(points, dtype=float))
        return np.stack([h(x) for h in self.faces], axis=-1)

    def contains(self, points):
        return np.all(self.values(points) < 0.0, axis=-1)

    def interior_point(self):
        _, x = _chebyshev_radius(list(self.faces), self.box)
        return x

    def area(self):
        if self.polygon is None:
            raise ValueError("area is only available for planar polytopes")
        return self.polygon.area()


def _cross(o, a, b):
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def shoelace(vertices):
    v = np.asarray(vertices, dtype=float)
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def _segments_cross(p1, p2, q1, q2):
    d1 = _cross(q1, q2, p1)
    d2 = _cross(q1, q2, p2)
    d3 = _cross(p1, p2, q1)
    d4 = _cross(p1, p2, q2)
    if ((d1 > TOL and d2 < -TOL) or (d1 < -TOL and d2 > TOL)) and \
            ((d3 > TOL and d4 < -TOL) or (d3 < -TOL and d4 > TOL)):
        return True

    def on_seg(a, b, c, d):
        return abs(d) <= TOL and min(a[0], b[0]) - TOL <= c[0] <= max(a[0], b[0]) + TOL \
            and min(a[1], b[1]) - TOL <= c[1] <= max(a[1], b[1]) + TOL

    return (on_seg(q1, q2, p1, d1) or on_seg(q1, q2, p2, d2)
            or on_seg(p1, p2, q1, d3) or on_seg(p1, p2, q2, d4))


def _simplify(vertices):
    v = [np.asarray(p, dtype=float) for p in vertices]
    changed = True
    while changed and len(v) >= 3:
        changed = False
        for i in range(len(v)):
            a, b, c = v[i - 1], v[i], v[(i + 1) % len(v)]
            ab, bc = b - a, c - b
            if np.linalg.norm(ab) <= TOL:
                del v[i]
                changed = True
                break
            if abs(_cross(a, b, c)) <= TOL * np.linalg.norm(ab) * np.linalg.norm(bc) \
                    and np.dot(ab, bc) > 0:
                del v[i]
                changed = True
                break
    return v


class SimplePolygon:
    """Simple planar polygon with counterclockwise vertices.

    Duplicate and collinear vertices are dropped and clockwise input is
    reoriented; self-intersecting or zero-area input raises ``ValueError``.
    """

    def __init__(self, vertices):
        v = np.asarray(vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or not np.all(np.isfinite(v)):
            raise ValueError("polygon vertices must be finite 2-vectors")
        v = _simplify(list(v))
        if len(v) < 3:
            raise ValueError("degenerate polygon")
        v = np.array(v)
        if shoelace(v) < 0:
            v = v[::-1].copy()
        if shoelace(v) <= TOL:
            raise ValueError("degenerate polygon")
        n = len(v)
        for i in range(n):
            for j in range(i + 1, n):
                if j == i + 1 or (i == 0 and j == n - 1):
                    continue
                if _segments_cross(v[i], v[(i + 1) % n], v[j], v[(j + 1) % n]):
                    raise ValueError("polygon is self-intersecting")
        v.flags.writeable = False
        self.vertices = v

    def __len__(self):
        return len(self.vertices)

    def __repr__(self):
        return f"SimplePolygon({self.vertices.tolist()})"

    def area(self):
        return shoelace(self.vertices)

    def edges(self):
        v = self.vertices
        return [(v[i], v[(i + 1) % len(v)]) for i in range(len(v))]

    def edge_hyperplanes(self):
        """Edge lines with outward normals, in vertex order."""
        return [Hyperplane.through_points_2d(p, q) for p, q in self.edges()]

    def is_convex(self):
        v = self.vertices
        n = len(v)
        return all(_cross(v[i - 1], v[i], v[(i + 1) % n]) > 0 for i in range(n))

    def contains(self, points):
        """Strict even-odd membership; boundary points are unspecified."""
        p = np.atleast_2d(np.asarray(points, dtype=float))
        x, y = p[:, 0], p[:, 1]
        inside = np.zeros(len(p), dtype=bool)
        for a, b in self.edges():
            crosses = (a[1] > y) != (b[1] > y)
            with np.errstate(divide="ignore", invalid="ignore"):
                xs = a[0] + (y - a[1]) * (b[0] - a[0]) / (b[1] - a[1])
            inside ^= crosses & (x < xs)
        return inside


@dataclass(frozen=True)
class RegionSpec:
    """A region given by a deterministic membership oracle inside an ambient box."""

    membership: Callable
    ambient_box: np.ndarray
    geometry: object = None

    def __post_init__(self):
        object.__setattr__(self, "ambient_box", as_box(self.ambient_box))

    @property
    def dim(self):
        return self.ambient_box.shape[0]

    def contains(self, points):
        x = np.atleast_2d(np.asarray(points, dtype=float))
        return np.asarray(self.membership(x), dtype=bool)

    def indicator(self, points):
        return self.contains(points).astype(float)

    def step(self, points):
        """0 inside the region, 1 outside (the step function with this region as its zero set)."""
        return 1.0 - self.indicator(points)

    @classmethod
    def from_polygon(cls, polygon, box):
        polygon = polygon if isinstance(polygon, SimplePolygon) else SimplePolygon(polygon)
        return cls(polygon.contains, box, polygon)

    @classmethod
    def from_polytope(cls, polytope, box):
        return cls(polytope.contains, box, polytope)

    @classmethod
    def from_hyperplanes(cls, hyperplanes, box):
        """Intersection of the negative sides of ``hyperplanes``."""
        hs = tuple(hyperplanes)

        def member(x):
            out = np.ones(len(x), dtype=bool)
            for h in hs:
                out &= h(x) < 0.0
            return out

        return cls(member, box, hs)

    @classmethod
    def ball(cls, center, radius, box):
        c = np.asarray(center, dtype=float)
        r2 = float(radius) ** 2

        def member(x):
            return np.sum((x - c) ** 2, axis=1) < r2

        return cls(member, box, ("ball", c, float(radius)))

    @classmethod
    def union(cls, regions, box):
        regions = tuple(regions)

        def member(x):
            out = np.zeros(len(x), dtype=bool)
            for r in regions:
                out |= r.contains(x)
            return out

        return cls(member, box, regions)


def polygonalize_circle_inscribed(center, radius, n, box=None):
    """Edges of the regular ``n``-gon inscribed in a circle, normals pointing outward.

    Vertex ``k`` sits at angle ``2 pi k / n``; edge ``k`` joins vertices ``k`` and
    ``k + 1`` and its normal points along the mid-angle ``(2k + 1) pi / n``.
    """
    if n < 3:
        raise ValueError("need n >= 3")
    if radius <= 0:
        raise ValueError("radius must be positive")
    c = np.asarray(center, dtype=float)
    if box is not None:
        box = as_box(box)
        if np.any(c - radius <= box[:, 0]) or np.any(c + radius >= box[:, 1]):
            raise ValueError("circle must lie strictly inside the box")
    apothem = radius * math.cos(math.pi / n)
    out = []
    for k in range(n):
        phi = (2 * k + 1) * math.pi / n
        u = np.array([math.cos(phi), math.sin(phi)])
        out.append(Hyperplane(u, float(u @ c) + apothem))
    return out


def inscribed_polygon(center, radius, n):
    c = np.asarray(center, dtype=float)
    t = 2 * math.pi * np.arange(n) / n
    return c + radius * np.stack([np.cos(t), np.sin(t)], axis=1)


def polygonalize_convex_tangent(surface, gradient, sample_points, tol=1e-9):
    """One tangent hyperplane per sample point of the level set ``surface(x) = 0``.

    Normals follow the gradient, so with ``surface < 0`` inside they point to the
    exterior and the hyperplanes circumscribe the (convex) interior.
    """
    out = []
    for x in np.atleast_2d(np.asarray(sample_points, dtype=float)):
        if abs(float(surface(x))) > tol:
            raise ValueError(f"sample point {x} is not on the surface")
        g = np.asarray(gradient(x), dtype=float)
        if not np.any(g):
            raise ValueError(f"zero gradient at {x}")
        g = g / np.linalg.norm(g)
        out.append(Hyperplane(g, float(g @ x)))
    return out


GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def sphere_octant_points(n, radius, center=(0.0, 0.0, 0.0)):
    """Quasi-uniform points on the positive-octant patch of a sphere.

    Heights are stratified, ``z_k = (k + 1/2) / n``, and azimuths follow the
    golden-ratio sequence folded into ``[0, pi/2)``; by Archimedes' theorem
    uniform height and azimuth give uniform surface density.
    """
    if n < 1:
        raise ValueError("need n >= 1")
    k = np.arange(n)
    z = (k + 0.5) / n
    phi = np.mod(k * GOLDEN, 1.0) * (math.pi / 2)
    rho = np.sqrt(1.0 - z * z)
    pts = np.stack([rho * np.cos(phi), rho * np.sin(phi), z], axis=1)
    return np.asarray(center, dtype=float) + radius * pts


def _hull_indices(points):
    order = sorted(range(len(points)), key=lambda i: (points[i][0], points[i][1]))
    lower, upper = [], []
    for i in order:
        while len(lower) >= 2 and _cross(points[lower[-2]], points[lower[-1]], points[i]) <= TOL:
            lower.pop()
        lower.append(i)
    for i in reversed(order):
        while len(upper) >= 2 and _cross(points[upper[-2]], points[upper[-1]], points[i]) <= TOL:
            upper.pop()
        upper.append(i)
    return lower[:-1] + upper[:-1]


def convex_hull_2d(points):
    """Counterclockwise convex hull (monotone chain), collinear points dropped."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 3:
        raise ValueError("need at least three 2D points")
    idx = _hull_indices(pts)
    if len(idx) < 3:
        raise ValueError("points are collinear")
    return SimplePolygon(pts[idx])


def hull_pockets(region):
    """Split the convex hull of ``region`` into the region and its pockets.

    Each pocket is bounded by one hull edge and the polygon chain it skips.
    """
    v = region.vertices
    n = len(v)
    idx = _hull_indices(v)
    hull = SimplePolygon(v[idx])
    pockets = []
    # both orders are counterclockwise, so hull indices increase cyclically
    for k in range(len(idx)):
        i, j = idx[k], idx[(k + 1) % len(idx)]
        a, b = v[i], v[j]
        scale = TOL * float(np.dot(b - a, b - a))
        # polygon vertices lying on the hull edge itself do not bound the pocket
        while (j - i) % n > 1 and abs(_cross(a, b, v[(i + 1) % n])) <= scale:
            i = (i + 1) % n
        while (j - i) % n > 1 and abs(_cross(a, b, v[(j - 1) % n])) <= scale:
            j = (j - 1) % n
        span = (j - i) % n
        if span <= 1:
            continue
        chain = [v[(i + s) % n] for s in range(span, 0, -1)]
        pockets.append(SimplePolygon([v[i]] + chain))
    return hull, pockets


def _triangulate(v):
    n = len(v)
    idx = list(range(n))
    tris = []
    while len(idx) > 3:
        m = len(idx)
        for k in range(m):
            a, b, c = idx[k - 1], idx[k], idx[(k + 1) % m]
            if _cross(v[a], v[b], v[c]) <= TOL:
                continue
            blocked = False
            for o in idx:
                if o in (a, b, c):
                    continue
                p = v[o]
                if _cross(v[a], v[b], p) >= -TOL and _cross(v[b], v[c], p) >= -TOL \
                        and _cross(v[c], v[a], p) >= -TOL:
                    blocked = True
                    break
            if not blocked:
                tris.append([a, b, c])
                del idx[k]
                break
        else:
            raise ValueError("ear clipping failed; polygon is degenerate")
    tris.append(idx)
    return tris


def _convex_ring(v, ring):
    m = len(ring)
    return all(_cross(v[ring[i - 1]], v[ring[i]], v[ring[(i + 1) % m]]) >= -TOL
               for i in range(m))


def _merge_rings(a, b, u, w):
    """Merge rings ``a`` (holding edge u->w) and ``b`` (holding w->u) across that edge."""
    ia = a.index(u)
    a_rot = a[ia:] + a[:ia]          # starts u, w, ...
    ib = b.index(w)
    b_rot = b[ib:] + b[:ib]          # starts w, u, ...
    return [u] + b_rot[2:] + [w] + a_rot[2:]


def convex_decomposition_2d(region):
    """Convex pieces of a simple polygon.

    Ear-clipping triangulation followed by greedy removal of diagonals whose two
    sides merge into a convex piece (Hertel-Mehlhorn).  Longer diagonals are
    tried first, so the surviving cuts tend to be short.
    """
    if region.is_convex():
        return [ConvexPolytope.from_polygon(region)]
    v = region.vertices
    n = len(v)
    rings = _triangulate(v)
    while True:
        edges = {}
        for r_i, ring in enumerate(rings):
            for k in range(len(ring)):
                edges[(ring[k], ring[(k + 1) % len(ring)])] = r_i
        diagonals = [(u, w) for (u, w) in edges
                     if (w, u) in edges and u < w and (w - u) % n not in (1, n - 1)]
        diagonals.sort(key=lambda e: (-float(np.linalg.norm(v[e[0]] - v[e[1]])), e))
        for u, w in diagonals:
            ra, rb = edges[(u, w)], edges[(w, u)]
            merged = _merge_rings(rings[ra], rings[rb], u, w)
            if _convex_ring(v, merged):
                rings = [r for k, r in enumerate(rings) if k not in (ra, rb)]
                rings.insert(min(ra, rb), merged)
                break
        else:
            break
    return [ConvexPolytope.from_polygon(SimplePolygon(v[ring]), label=f"piece{k}")
            for k, ring in enumerate(rings)]


def symm_diff_measure(a, b, samples, seed=DEFAULT_SEED):
    """Monte Carlo estimate of ``|A \\ B| + |B \\ A|`` with a 95% half-width.

    With no (or all) disagreeing samples the rule-of-three bound ``3 / samples``
    is used for the half-width.
    """
    if samples <= 0:
        raise ValueError("samples must be positive")
    if not np.array_equal(a.ambient_box, b.ambient_box):
        raise ValueError("regions live in different boxes")
    box = a.ambient_box
    hits = 0
    for _, x in iter_uniform(box, samples, seed):
        hits += int(np.count_nonzero(a.contains(x) != b.contains(x)))
    return binomial_estimate(hits, samples, box_volume(box))


def binomial_estimate(hits, samples, volume):
    frac = hits / samples
    if hits in (0, samples):
        hw = 3.0 / samples
    else:
        hw = 1.96 * math.sqrt(frac * (1.0 - frac) / samples)
    return Estimate(volume * frac, volume * hw)
