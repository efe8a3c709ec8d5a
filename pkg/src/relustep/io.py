"""Text file formats: networks, hyperplane sets, polygons, fields, break lines, error rows.

All numbers are written with 17 significant digits so doubles round-trip
exactly; JSON documents use a fixed key order so identical inputs give
byte-identical files.
"""

import csv
import io as _io
import json
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from relustep.geometry import Hyperplane, SimplePolygon
from relustep.network import AffineLayer, ReluNetwork, SparseAffineLayer, eval_batch
from relustep.sampling import as_box


def fmt(x):
    x = float(x)
    if not math.isfinite(x):
        raise ValueError("cannot serialize a non-finite number")
    return format(x, ".17g")


def _encode(obj, indent=0, depth=0):
    pad = "\n" + " " * (indent * (depth + 1)) if indent else ""
    end = "\n" + " " * (indent * depth) if indent else ""
    sep = ", " if not indent else ","
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_encode(v, indent, depth + 1)}" for k, v in obj.items()]
        return "{" + sep.join(items) + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        # numeric leaves stay on one line
        flat = all(not isinstance(v, (list, tuple, dict)) for v in obj)
        if flat or not indent:
            return "[" + ", ".join(_encode(v) for v in obj) + "]"
        return "[" + sep.join(pad + _encode(v, indent, depth + 1) for v in obj) + end + "]"
    if isinstance(obj, np.ndarray):
        return _encode(obj.tolist(), indent, depth)
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return fmt(obj)
    if obj is None:
        return "null"
    return json.dumps(str(obj))


def dumps(obj):
    return _encode(obj, indent=1) + "\n"


def _write(path, text):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _read_json(path):
    with open(path, encoding="utf-8") as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: not a valid document ({exc})") from None


# -- networks ---------------------------------------------------------------

def network_to_dict(net, provenance=None):
    layers = []
    for layer in net.layers:
        if layer.storage == "sparse":
            trip = []
            for i in range(layer.n_out):
                idx, val = layer.row(i)
                trip.extend([i, int(j), float(v)] for j, v in zip(idx, val))
            layers.append({"storage": "sparse", "n_in": layer.n_in, "weights": trip,
                           "biases": layer.biases})
        else:
            layers.append({"storage": "dense", "weights": layer.weights, "biases": layer.biases})
    doc = {"shape": list(net.widths), "layers": layers}
    if provenance:
        doc["provenance"] = provenance
    return doc


def network_from_dict(doc):
    try:
        shape = [int(n) for n in doc["shape"]]
        raw = doc["layers"]
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed network document: {exc}") from None
    if len(shape) != 4 or len(raw) != 3:
        raise ValueError("network document must describe exactly three layers")
    layers = []
    for k, spec in enumerate(raw):
        storage = spec.get("storage", "dense")
        if storage == "sparse":
            rows = [[] for _ in range(shape[k + 1])]
            for i, j, v in spec["weights"]:
                rows[int(i)].append((int(j), float(v)))
            layers.append(SparseAffineLayer(int(spec.get("n_in", shape[k])), rows, spec["biases"]))
        elif storage == "dense":
            layers.append(AffineLayer(spec["weights"], spec["biases"]))
        else:
            raise ValueError(f"unknown storage {storage!r}")
    net = ReluNetwork(tuple(layers))
    if list(net.widths) != shape:
        raise ValueError(f"shape {shape} does not match layers {net.widths}")
    return net


def save_network(net, path, provenance=None):
    _write(path, dumps(network_to_dict(net, provenance)))


def load_network(path):
    return network_from_dict(_read_json(path))


def load_provenance(path):
    return _read_json(path).get("provenance")


# -- hyperplane sets and polygons -------------------------------------------

def hyperplanes_to_dict(hyperplanes):
    hs = list(hyperplanes)
    if not hs:
        raise ValueError("empty hyperplane set")
    return {"dim": hs[0].dim, "normals": [h.normal for h in hs], "offsets": [h.offset for h in hs]}


def hyperplanes_from_dict(doc):
    try:
        dim = int(doc["dim"])
        normals = doc["normals"]
        offsets = doc["offsets"]
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed hyperplane document: {exc}") from None
    if len(normals) != len(offsets):
        raise ValueError("normals and offsets differ in length")
    out = []
    for w, c in zip(normals, offsets):
        if len(w) != dim:
            raise ValueError("normal has the wrong dimension")
        out.append(Hyperplane(w, c))
    return out


def save_hyperplanes(hyperplanes, path):
    _write(path, dumps(hyperplanes_to_dict(hyperplanes)))


def load_hyperplanes(path):
    return hyperplanes_from_dict(_read_json(path))


def save_polygon(polygon, path):
    _write(path, dumps({"dim": 2, "vertices": polygon.vertices}))


def load_polygon(path):
    doc = _read_json(path)
    if "vertices" not in doc:
        raise ValueError("polygon document needs 'vertices'")
    return SimplePolygon(doc["vertices"])


def load_geometry(path):
    """Hyperplane set, polygon or list of convex pieces, by the keys present."""
    doc = _read_json(path)
    if "normals" in doc:
        return "hyperplanes", hyperplanes_from_dict(doc)
    if "pieces" in doc:
        return "pieces", [SimplePolygon(p) for p in doc["pieces"]]
    if "vertices" in doc:
        return "polygon", SimplePolygon(doc["vertices"])
    raise ValueError("geometry document needs 'normals', 'vertices' or 'pieces'")


def load_region(path):
    """Region document ``{"box": ..., "region": {"type": ..., ...}}``.

    Types: ``halfspaces`` (``normals``/``offsets``; inside = all negative),
    ``polygon`` (``vertices``), ``ball`` (``center``/``radius``).
    """
    from relustep.geometry import RegionSpec

    doc = _read_json(path)
    try:
        box = as_box(doc["box"])
        reg = doc["region"]
        kind = reg["type"]
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed region document: {exc}") from None
    if kind == "halfspaces":
        hs = hyperplanes_from_dict({"dim": box.shape[0], **reg})
        return RegionSpec.from_hyperplanes(hs, box)
    if kind == "polygon":
        return RegionSpec.from_polygon(SimplePolygon(reg["vertices"]), box)
    if kind == "ball":
        return RegionSpec.ball(reg["center"], reg["radius"], box)
    raise ValueError(f"unknown region type {kind!r}")


# -- points -----------------------------------------------------------------

def load_points(path, dim=None):
    rows = []
    with open(path, encoding="utf-8") as fh:
        for ln, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            try:
                rows.append([float(t) for t in line.replace(",", " ").split()])
            except ValueError:
                raise ValueError(f"{path}:{ln}: not a list of numbers") from None
    if not rows:
        return np.empty((0, dim or 0))
    if len({len(r) for r in rows}) != 1:
        raise ValueError(f"{path}: rows have different lengths")
    pts = np.array(rows)
    if dim is not None and pts.shape[1] != dim:
        raise ValueError(f"{path}: expected {dim} coordinates per point")
    return pts


# -- grid fields ------------------------------------------------------------

@dataclass(frozen=True)
class GridField:
    """Values on a cell-centred ``nx`` by ``ny`` grid, row-major with ``x`` fastest.

    ``slice`` records how the 2D grid sits in a higher-dimensional domain:
    ``{"dim": d, "axes": [i, j], "fixed": value}`` (all other coordinates equal
    ``value``).
    """

    box: np.ndarray
    resolution: tuple
    values: np.ndarray
    slice: Optional[dict] = None

    def __post_init__(self):
        object.__setattr__(self, "box", as_box(self.box))
        res = tuple(int(r) for r in self.resolution)
        vals = np.asarray(self.values, dtype=float).ravel()
        if len(res) != 2 or vals.size != res[0] * res[1]:
            raise ValueError("value count must equal nx * ny")
        object.__setattr__(self, "resolution", res)
        object.__setattr__(self, "values", vals)

    def grid(self):
        return self.values.reshape(self.resolution[1], self.resolution[0])


def cell_centres(box, resolution):
    box = as_box(box)
    nx, ny = resolution
    xs = box[0, 0] + (np.arange(nx) + 0.5) * (box[0, 1] - box[0, 0]) / nx
    ys = box[1, 0] + (np.arange(ny) + 0.5) * (box[1, 1] - box[1, 0]) / ny
    gx, gy = np.meshgrid(xs, ys)
    return np.stack([gx.ravel(), gy.ravel()], axis=1)


def sample_field(f, box, resolution, slice_meta=None):
    """Sample a 2D function (a network or any vectorized callable) on a grid."""
    if isinstance(resolution, int):
        resolution = (resolution, resolution)
    pts = cell_centres(box, resolution)
    vals = eval_batch(f, pts) if isinstance(f, ReluNetwork) else np.asarray(f(pts), dtype=float)
    return GridField(box, resolution, vals, slice_meta)


def save_field(field, path):
    header = {"box": field.box, "resolution": list(field.resolution), "slice": field.slice}
    lines = ["# field " + _encode(header)]
    g = field.grid()
    lines.extend(" ".join(fmt(v) for v in row) for row in g)
    _write(path, "\n".join(lines) + "\n")


def load_field(path):
    with open(path, encoding="utf-8") as fh:
        first = fh.readline()
        if not first.startswith("# field "):
            raise ValueError(f"{path}: missing field header")
        try:
            header = json.loads(first[len("# field "):])
            box, res = header["box"], header["resolution"]
        except (json.JSONDecodeError, KeyError) as exc:
            raise ValueError(f"{path}: malformed field header ({exc})") from None
        vals = [float(t) for line in fh for t in line.split()]
    return GridField(box, res, np.array(vals), header.get("slice"))


# -- break lines ------------------------------------------------------------

@dataclass(frozen=True)
class Breaklines:
    """First-layer segments (``None`` when a line misses the box) and
    second-layer segments per neuron, inside a 2D box."""

    box: np.ndarray
    first_layer: list
    second_layer: list
    slice: Optional[dict] = None


def save_breaklines(bl, path):
    doc = {
        "box": bl.box,
        "slice": bl.slice,
        "first_layer": [None if s is None else [s[0], s[1]] for s in bl.first_layer],
        "second_layer": [[{"start": s.start, "end": s.end, "cell": s.cell} for s in segs]
                         for segs in bl.second_layer],
    }
    _write(path, dumps(doc))


def load_breaklines(path):
    from relustep.network import Segment

    doc = _read_json(path)
    try:
        first = [None if s is None else (np.array(s[0]), np.array(s[1]))
                 for s in doc["first_layer"]]
        second = [[Segment(np.array(s["start"]), np.array(s["end"]), int(s["cell"]))
                   for s in segs] for segs in doc["second_layer"]]
        return Breaklines(np.array(doc["box"], dtype=float), first, second, doc.get("slice"))
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed break-line document: {exc}") from None


# -- error rows -------------------------------------------------------------

ERROR_HEADER = ("scenario", "p", "eps", "method", "estimate", "ci", "bound", "pass")


def error_row(scenario, eps, report, passed=None):
    return {
        "scenario": scenario,
        "p": fmt(report.p),
        "eps": fmt(eps),
        "method": report.method,
        "estimate": fmt(report.estimate),
        "ci": fmt(report.half_width_95),
        "bound": "" if report.bound is None else fmt(report.bound),
        "pass": "" if passed is None else ("true" if passed else "false"),
    }


def format_error_rows(rows, header=True):
    buf = _io.StringIO()
    w = csv.DictWriter(buf, fieldnames=ERROR_HEADER, lineterminator="\n")
    if header:
        w.writeheader()
    w.writerows(rows)
    return buf.getvalue()


def write_error_rows(path, rows):
    _write(path, format_error_rows(rows))
