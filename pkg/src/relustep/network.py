"""Three-layer ReLU networks ``N(x) = W3 s(W2 s(W1 x - b1) - b2) - b3``.

Layer products are computed as an elementwise product followed by a sum over
the contiguous input axis.  That keeps the summation order of every output a
function of the weights alone, so a point evaluates to the same bits whether
it is alone or inside a batch of any size.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from relustep.geometry import TOL, Hyperplane
from relustep.sampling import as_box

SPARSE_DENSITY = 0.01
# elements per temporary product block
_BLOCK = 1 << 20


def relu(t):
    return np.maximum(t, 0.0)


class AffineLayer:
    """Dense affine map ``x -> W x - b``."""

    storage = "dense"

    def __init__(self, weights, biases):
        w = np.array(weights, dtype=float)
        b = np.array(biases, dtype=float).ravel()
        if w.ndim != 2 or w.shape[0] < 1 or w.shape[1] < 1:
            raise ValueError("weights must be a non-empty matrix")
        if b.shape != (w.shape[0],):
            raise ValueError("bias length must match the number of rows")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise ValueError("layer entries must be finite")
        w.flags.writeable = False
        b.flags.writeable = False
        self.weights, self.biases = w, b

    @property
    def n_out(self):
        return self.weights.shape[0]

    @property
    def n_in(self):
        return self.weights.shape[1]

    def apply(self, x):
        w = self.weights
        rows = max(1, _BLOCK // w.size)
        out = np.empty((x.shape[0], self.n_out))
        for s in range(0, x.shape[0], rows):
            blk = x[s:s + rows]
            out[s:s + rows] = (blk[:, None, :] * w[None, :, :]).sum(axis=-1)
        return out - self.biases

    def to_dense(self):
        return self.weights

    def row(self, i):
        idx = np.flatnonzero(self.weights[i])
        return idx, self.weights[i, idx]

    def scaled(self, row_scale=None, col_scale=None):
        w = self.weights
        b = self.biases
        if row_scale is not None:
            w = w * row_scale[:, None]
            b = b * row_scale
        if col_scale is not None:
            w = w * col_scale[None, :]
        return AffineLayer(w, b)


class SparseAffineLayer:
    """Row-sparse affine map ``x -> W x - b``; row ``i`` is a list of ``(column, value)``."""

    storage = "sparse"

    def __init__(self, n_in, rows, biases):
        b = np.array(biases, dtype=float).ravel()
        if len(rows) != b.size or b.size < 1:
            raise ValueError("need one bias per row and at least one row")
        width = max(1, max((len(r) for r in rows), default=1))
        cols = np.zeros((len(rows), width), dtype=np.int64)
        vals = np.zeros((len(rows), width))
        for i, r in enumerate(rows):
            if not r:
                continue
            c, v = zip(*r)
            if len(set(c)) != len(c):
                raise ValueError(f"duplicate column index in row {i}")
            c = np.asarray(c, dtype=np.int64)
            if np.any(c < 0) or np.any(c >= n_in):
                raise ValueError(f"column index out of range in row {i}")
            cols[i, :len(c)] = c
            vals[i, :len(c)] = v
        if not (np.all(np.isfinite(vals)) and np.all(np.isfinite(b))):
            raise ValueError("layer entries must be finite")
        self._n_in = int(n_in)
        self.nnz = np.array([len(r) for r in rows], dtype=np.int64)
        for a in (cols, vals, b):
            a.flags.writeable = False
        self.cols, self.vals, self.biases = cols, vals, b

    @classmethod
    def from_dense(cls, weights, biases):
        w = np.asarray(weights, dtype=float)
        rows = [[(int(j), float(w[i, j])) for j in np.flatnonzero(w[i])] for i in range(w.shape[0])]
        return cls(w.shape[1], rows, biases)

    @property
    def n_out(self):
        return self.cols.shape[0]

    @property
    def n_in(self):
        return self._n_in

    def apply(self, x):
        rows = max(1, _BLOCK // self.cols.size)
        out = np.empty((x.shape[0], self.n_out))
        if self.cols.shape[1] == 1:
            # one entry per row: the sum of a single product is the product itself
            c, v = self.cols[:, 0], self.vals[:, 0]
            diagonal = self.n_out == self.n_in and np.array_equal(c, np.arange(self.n_in))
            unit = bool(np.all(v == 1.0))
            for s in range(0, x.shape[0], rows):
                blk = out[s:s + rows]
                if diagonal:
                    blk[...] = x[s:s + rows]
                else:
                    np.take(x[s:s + rows], c, axis=1, out=blk)
                if not unit:
                    blk *= v
        else:
            for s in range(0, x.shape[0], rows):
                blk = x[s:s + rows]
                out[s:s + rows] = (blk[:, self.cols] * self.vals[None, :, :]).sum(axis=-1)
        out -= self.biases
        return out

    def to_dense(self):
        w = np.zeros((self.n_out, self.n_in))
        for i in range(self.n_out):
            k = self.nnz[i]
            w[i, self.cols[i, :k]] = self.vals[i, :k]
        return w

    def row(self, i):
        k = self.nnz[i]
        return self.cols[i, :k], self.vals[i, :k]

    def rows(self):
        return [list(zip(*(a.tolist() for a in self.row(i)))) for i in range(self.n_out)]

    def scaled(self, row_scale=None, col_scale=None):
        vals = self.vals.copy()
        b = self.biases.copy()
        if row_scale is not None:
            vals *= row_scale[:, None]
            b *= row_scale
        if col_scale is not None:
            vals *= col_scale[self.cols]
        rows = [list(zip(self.cols[i, :k].tolist(), vals[i, :k].tolist()))
                for i, k in enumerate(self.nnz)]
        return SparseAffineLayer(self.n_in, rows, b)


def make_layer(weights, biases):
    """Dense layer, or sparse storage when fewer than 1% of the entries are nonzero."""
    w = np.asarray(weights, dtype=float)
    if w.ndim == 2 and np.count_nonzero(w) < SPARSE_DENSITY * w.size:
        return SparseAffineLayer.from_dense(w, biases)
    return AffineLayer(w, biases)


def layer_from_rows(n_in, rows, biases):
    """Build from ``(indices, values)`` rows, choosing storage by density."""
    nnz = sum(len(r[0]) for r in rows)
    if nnz < SPARSE_DENSITY * n_in * len(rows):
        return SparseAffineLayer(n_in, [list(zip(np.asarray(i).tolist(), np.asarray(v).tolist()))
                                        for i, v in rows], biases)
    w = np.zeros((len(rows), n_in))
    for k, (i, v) in enumerate(rows):
        w[k, i] = v
    return AffineLayer(w, biases)


@dataclass(frozen=True)
class ReluNetwork:
    """Exactly three affine layers with ReLU after the first two."""

    layers: tuple

    def __post_init__(self):
        layers = tuple(self.layers)
        if len(layers) != 3:
            raise ValueError("a three-layer network needs exactly three layers")
        for a, b in zip(layers, layers[1:]):
            if b.n_in != a.n_out:
                raise ValueError("layer dimensions do not chain")
        if layers[-1].n_out != 1:
            raise ValueError("output dimension must be 1")
        object.__setattr__(self, "layers", layers)

    @property
    def dim(self):
        return self.layers[0].n_in

    @property
    def widths(self):
        return (self.dim,) + tuple(l.n_out for l in self.layers)

    @property
    def shape(self):
        return "–".join(str(n) for n in self.widths)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            return evaluate(self, x)
        return eval_batch(self, x)

    def hidden(self, xs):
        """Post-activation values of both hidden layers."""
        h1 = self.layers[0].apply(xs)
        np.maximum(h1, 0.0, out=h1)
        h2 = self.layers[1].apply(h1)
        np.maximum(h2, 0.0, out=h2)
        return h1, h2


def eval_batch(net, xs):
    """Evaluate ``net`` at each row of ``xs``."""
    xs = np.asarray(xs, dtype=float)
    if xs.ndim == 1 and xs.size == 0:
        return np.empty(0)
    if xs.ndim != 2 or xs.shape[1] != net.dim:
        raise ValueError(f"expected points of dimension {net.dim}")
    if xs.shape[0] == 0:
        return np.empty(0)
    _, h2 = net.hidden(xs)
    return net.layers[2].apply(h2)[:, 0]


def evaluate(net, x):
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size != net.dim:
        raise ValueError(f"expected a point of dimension {net.dim}")
    return float(eval_batch(net, x[None, :])[0])


def _block_diag(mats):
    n = sum(m.shape[0] for m in mats)
    k = sum(m.shape[1] for m in mats)
    out = np.zeros((n, k))
    r = c = 0
    for m in mats:
        out[r:r + m.shape[0], c:c + m.shape[1]] = m
        r += m.shape[0]
        c += m.shape[1]
    return out


def affine_combine(terms, constant=0.0):
    """One network computing ``constant + sum(coeff * net(x))``.

    Hidden layers are stacked block-diagonally; only the output layer mixes.
    """
    terms = list(terms)
    if not terms:
        raise ValueError("need at least one term")
    dims = {net.dim for _, net in terms}
    if len(dims) != 1:
        raise ValueError("networks have different input dimensions")
    d = dims.pop()
    rows, b1 = [], []
    for _, net in terms:
        l1 = net.layers[0]
        rows.extend(l1.row(i) for i in range(l1.n_out))
        b1.append(l1.biases)
    layer1 = layer_from_rows(d, rows, np.concatenate(b1))
    layer2 = make_layer(_block_diag([net.layers[1].to_dense() for _, net in terms]),
                        np.concatenate([net.layers[1].biases for _, net in terms]))
    w3 = np.concatenate([c * net.layers[2].to_dense()[0] for c, net in terms])
    b3 = sum(c * float(net.layers[2].biases[0]) for c, net in terms) - constant
    return ReluNetwork((layer1, layer2, AffineLayer(w3[None, :], [b3])))


def normalize_first_layer(net):
    """Rescale first-layer rows to unit length, compensating in layer 2.

    Uses ``s(c t) = c s(t)`` for ``c > 0``: row ``i`` and bias ``b1_i`` are divided
    by ``|w_i|`` and column ``i`` of layer 2 is multiplied by it.
    """
    l1, l2, l3 = net.layers
    norms = np.array([np.linalg.norm(l1.row(i)[1]) for i in range(l1.n_out)])
    if np.any(norms == 0.0):
        raise ValueError("first layer has a zero row")
    if np.all(np.abs(norms - 1.0) <= TOL):
        return net
    return ReluNetwork((l1.scaled(row_scale=1.0 / norms), l2.scaled(col_scale=norms), l3))


def first_layer_breaklines(net):
    """First-layer breaking hyperplanes ``{w_i x - b_i = 0}`` in neuron order."""
    l1 = net.layers[0]
    out = []
    for i in range(l1.n_out):
        idx, val = l1.row(i)
        if not np.any(val):
            raise ValueError(f"first-layer row {i} is zero")
        if l1.storage == "sparse":
            out.append(Hyperplane.sparse(net.dim, idx, val, l1.biases[i]))
        else:
            out.append(Hyperplane(l1.weights[i], l1.biases[i]))
    return out


def restrict_to_slice(net, axes, fixed, prune=True):
    """Network on the plane where every coordinate outside ``axes`` equals ``fixed``.

    With ``prune`` the first-layer neurons that are constant on the slice are
    folded into the second-layer biases (agreement up to rounding).
    """
    l1, l2, l3 = net.layers
    axes = list(axes)
    w = np.zeros((l1.n_out, len(axes)))
    b = np.array(l1.biases, dtype=float)
    pos = {a: k for k, a in enumerate(axes)}
    for i in range(l1.n_out):
        idx, val = l1.row(i)
        for j, v in zip(idx.tolist(), val.tolist()):
            if j in pos:
                w[i, pos[j]] = v
            else:
                b[i] -= v * fixed
    if not prune:
        return ReluNetwork((AffineLayer(w, b), l2, l3))
    live = np.any(w != 0, axis=1)
    if not np.any(live):
        live[0] = True
    w2 = l2.to_dense()
    b2 = l2.biases - w2[:, ~live] @ relu(-b[~live])
    return ReluNetwork((AffineLayer(w[live], b[live]), make_layer(w2[:, live], b2), l3))


@dataclass(frozen=True)
class Segment:
    start: np.ndarray
    end: np.ndarray
    cell: int


def _split(poly, a, c):
    """Split convex polygon by ``a . x = c`` into (negative, positive) parts."""
    vals = poly @ a - c
    if np.all(vals >= -TOL) or np.all(vals <= TOL):
        return None
    neg, pos = [], []
    m = len(poly)
    for k in range(m):
        p, q = poly[k], poly[(k + 1) % m]
        vp, vq = vals[k], vals[(k + 1) % m]
        if vp <= 0:
            neg.append(p)
        if vp >= 0:
            pos.append(p)
        if (vp < 0 < vq) or (vq < 0 < vp):
            x = p + (q - p) * (vp / (vp - vq))
            neg.append(x)
            pos.append(x)
    return np.array(neg), np.array(pos)


def arrangement_cells(lines, box):
    """Convex cells cut from a 2D box by the lines ``a . x = c``."""
    box = as_box(box)
    (x0, x1), (y0, y1) = box
    cells = [np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]])]
    for a, c in lines:
        nxt = []
        for poly in cells:
            parts = _split(poly, a, c)
            if parts is None:
                nxt.append(poly)
            else:
                nxt.extend(p for p in parts if len(p) >= 3 and abs(_area(p)) > TOL)
        cells = nxt
    return cells


def _area(p):
    x, y = p[:, 0], p[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def second_layer_breaklines_2d(net, box):
    """Zero sets of the second-layer pre-activations inside ``box``.

    The first-layer lines cut the box into cells where every first-layer neuron
    is either on or off, so each second-layer pre-activation is affine there and
    its zero set is a clipped line segment.  Returns one list of
    :class:`Segment` per second-layer neuron.
    """
    if net.dim != 2:
        raise ValueError("second-layer break lines are extracted in 2D only")
    l1, l2, _ = net.layers
    w1 = l1.to_dense()
    b1 = l1.biases
    w2 = l2.to_dense()
    b2 = l2.biases
    lines = [(w1[i], b1[i]) for i in range(l1.n_out) if np.any(w1[i])]
    cells = arrangement_cells(lines, box)
    out = [[] for _ in range(l2.n_out)]
    flat = []
    for ci, poly in enumerate(cells):
        centroid = poly.mean(axis=0)
        active = (w1 @ centroid - b1) > 0
        g = (w2[:, active] @ w1[active])            # (n2, 2)
        c = w2[:, active] @ b1[active] + b2         # zero set: g . x = c
        for i in range(l2.n_out):
            z = poly @ g[i] - c[i]
            scale = TOL * (1.0 + float(np.max(np.abs(poly @ g[i]))) + abs(c[i]))
            if np.all(np.abs(z) <= scale):
                flat.append((i, ci))
                continue
            pts = []
            m = len(poly)
            for k in range(m):
                zp, zq = z[k], z[(k + 1) % m]
                if abs(zp) <= scale:
                    pts.append(poly[k])
                elif (zp < 0 < zq or zq < 0 < zp) and abs(zq) > scale:
                    pts.append(poly[k] + (poly[(k + 1) % m] - poly[k]) * (zp / (zp - zq)))
            if len(pts) < 2:
                continue
            pts = np.array(pts)
            d = np.array([-g[i][1], g[i][0]])
            t = pts @ d
            p, q = pts[np.argmin(t)], pts[np.argmax(t)]
            if np.linalg.norm(q - p) > 1e-12:
                out[i].append(Segment(p, q, ci))
    if flat:
        warnings.warn(f"second-layer pre-activation vanishes identically on {len(flat)} cell(s)",
                      RuntimeWarning, stacklevel=2)
    return [_dedupe(segs) for segs in out]


def _dedupe(segs):
    seen = set()
    out = []
    for s in segs:
        key = tuple(sorted([tuple(np.round(s.start, 9)), tuple(np.round(s.end, 9))]))
        if key not in seen:
            seen.add(key)
            out.append(s)
    return out


def first_layer_segments_2d(net, box):
    """First-layer lines clipped to ``box``, one segment (or ``None``) per neuron."""
    box = as_box(box)
    (x0, x1), (y0, y1) = box
    poly = np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]])
    l1 = net.layers[0]
    w1 = l1.to_dense()
    out = []
    for i in range(l1.n_out):
        a, c = w1[i], l1.biases[i]
        if not np.any(a):
            out.append(None)
            continue
        z = poly @ a - c
        pts = []
        for k in range(4):
            zp, zq = z[k], z[(k + 1) % 4]
            if zp == 0:
                pts.append(poly[k])
            elif zp * zq < 0:
                pts.append(poly[k] + (poly[(k + 1) % 4] - poly[k]) * (zp / (zp - zq)))
        if len(pts) < 2:
            out.append(None)
            continue
        pts = np.array(pts)
        d = np.array([-a[1], a[0]])
        t = pts @ d
        out.append((pts[np.argmin(t)], pts[np.argmax(t)]))
    return out


def chain_segments(segments, tol=1e-9):
    """Join segments sharing endpoints into polylines (lists of points)."""
    pending = [(np.asarray(s.start), np.asarray(s.end)) if isinstance(s, Segment)
               else (np.asarray(s[0]), np.asarray(s[1])) for s in segments if s is not None]
    lines = []
    while pending:
        p, q = pending.pop(0)
        line = [p, q]
        grown = True
        while grown:
            grown = False
            for k, (a, b) in enumerate(pending):
                if np.linalg.norm(a - line[-1]) <= tol:
                    line.append(b)
                elif np.linalg.norm(b - line[-1]) <= tol:
                    line.append(a)
                elif np.linalg.norm(b - line[0]) <= tol:
                    line.insert(0, a)
                elif np.linalg.norm(a - line[0]) <= tol:
                    line.insert(0, b)
                else:
                    continue
                pending.pop(k)
                grown = True
                break
        lines.append(np.array(line))
    return lines
