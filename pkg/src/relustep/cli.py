"""Command-line interface: ``relustep <command> ...``.

Exit status is 0 on success, 2 for invalid input and 1 when a computation fails.
"""

import argparse
import os
import sys

import numpy as np

from relustep import io as rio
from relustep.analysis import lp_error_grid, lp_error_mc
from relustep.construct import (convex_indicator, decomposition_composite, geometry_digest,
                                halfspace_ramp, hull_composite, ConstructionReport)
from relustep.geometry import ConvexPolytope, convex_decomposition_2d
from relustep.network import (eval_batch, first_layer_segments_2d, restrict_to_slice,
                              second_layer_breaklines_2d)
from relustep.sampling import DEFAULT_SEED


class UsageError(Exception):
    pass


def _emit(text, out):
    if out:
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _build(args):
    kind, geom = rio.load_geometry(args.geometry)
    method = args.construction
    if kind == "hyperplanes":
        if method not in ("auto", "convex"):
            raise UsageError(f"construction {method!r} needs a polygon, got hyperplanes")
        net = halfspace_ramp(geom[0], args.eps) if len(geom) == 1 else \
            convex_indicator(geom, args.eps)
        cons = ConstructionReport(net, args.eps, net.shape,
                                  {"construction": "convex", "eps": args.eps,
                                   "digest": geometry_digest(geom)})
    elif kind == "polygon":
        if method == "auto":
            method = "convex" if geom.is_convex() else "hull"
        if method == "convex":
            if not geom.is_convex():
                raise UsageError("polygon is not convex; use --construction hull or decomposition")
            net = convex_indicator(geom.edge_hyperplanes(), args.eps)
            cons = ConstructionReport(net, args.eps, net.shape,
                                      {"construction": "convex", "eps": args.eps,
                                       "digest": geometry_digest(geom)})
        elif method == "hull":
            cons = hull_composite(geom, args.eps)
        else:
            cons = decomposition_composite(convex_decomposition_2d(geom), eps=args.eps)
    else:
        if method not in ("auto", "decomposition"):
            raise UsageError("a list of pieces needs --construction decomposition")
        pieces = [ConvexPolytope.from_polygon(p) for p in geom]
        cons = decomposition_composite(pieces, eps=args.eps)
    out = args.out or "network.json"
    rio.save_network(cons.network, out, cons.provenance)
    print(f"{cons.shape} -> {out}")


def _eval(args):
    net = rio.load_network(args.network)
    pts = rio.load_points(args.points, net.dim)
    vals = eval_batch(net, pts) if len(pts) else np.empty(0)
    _emit("".join(rio.fmt(v) + "\n" for v in vals), args.out)


def _error(args):
    net = rio.load_network(args.network)
    region = rio.load_region(args.region)
    if region.ambient_box.shape[0] != net.dim:
        raise UsageError("region and network dimensions differ")
    if args.method == "grid":
        rep = lp_error_grid(region.step, net, args.p, region.ambient_box, args.resolution)
    else:
        rep = lp_error_mc(region.step, net, args.p, region.ambient_box, args.samples, args.seed)
    eps = (rio.load_provenance(args.network) or {}).get("eps", float("nan"))
    row = rio.error_row(os.path.basename(args.network), eps if eps == eps else 0.0, rep)
    _emit(rio.format_error_rows([row]), args.out)


def _breaklines(args):
    net = rio.load_network(args.network)
    box = np.array(args.box, dtype=float).reshape(2, 2)
    sl = None
    if net.dim != 2:
        if args.fixed is None:
            raise UsageError("networks with d > 2 need --fixed for the 2D slice")
        sl = {"dim": net.dim, "axes": [0, 1], "fixed": args.fixed}
        net = restrict_to_slice(net, [0, 1], args.fixed)
    bl = rio.Breaklines(box, first_layer_segments_2d(net, box),
                        second_layer_breaklines_2d(net, box), sl)
    rio.save_breaklines(bl, args.out or "breaklines.json")


def _example(args):
    from relustep import scenarios

    name = args.name
    kw = {"eps": args.eps}
    if name in ("circle", "sphere"):
        kw["n"] = args.n
    elif name == "hypercube":
        kw["d"] = args.d
    else:
        kw["method"] = args.method
    defaults = scenarios.PRESETS[name][0]
    kw = {k: (defaults[k] if v is None else v) for k, v in kw.items()}
    opts = {"out": args.out or "out"}
    if name == "hypercube":
        if args.resolution:
            opts["field_resolution"] = args.resolution
    else:
        opts.update(samples=args.samples, seed=args.seed)
        if args.resolution:
            opts["resolution"] = args.resolution
    rep = scenarios.EXAMPLES[name](**kw, **opts)
    sys.stdout.write(rio.format_error_rows(rep.rows()))
    print(f"# {rep.shape} -> {os.path.dirname(rep.artifacts['network'])}")


def _render(args):
    from relustep.render import render_2d

    with open(args.input, encoding="utf-8") as fh:
        head = fh.read(8)
    obj = rio.load_field(args.input) if head.startswith("# field") else \
        rio.load_breaklines(args.input)
    out = args.out or os.path.splitext(args.input)[0] + ".svg"
    render_2d(obj, out)


def _positive(kind):
    def check(text):
        v = kind(text)
        if not v > 0:
            raise argparse.ArgumentTypeError("must be positive")
        return v
    return check


def make_parser():
    ap = argparse.ArgumentParser(prog="relustep",
                                 description="Three-layer ReLU networks for step functions.")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, eps=False, p_flag=False, sampling=False):
        if eps:
            p.add_argument("--eps", type=_positive(float), required=eps == "required")
        if p_flag:
            p.add_argument("--p", type=float, default=1.0)
        if sampling:
            p.add_argument("--samples", type=_positive(int), default=10**6)
            p.add_argument("--seed", type=int, default=DEFAULT_SEED)
            p.add_argument("--resolution", type=_positive(int), default=None)
        p.add_argument("--out", default=None)

    b = sub.add_parser("build", help="geometry file -> network file")
    b.add_argument("geometry")
    b.add_argument("--construction", default="auto",
                   choices=("auto", "convex", "hull", "decomposition"))
    common(b, eps="required")
    b.set_defaults(func=_build)

    e = sub.add_parser("eval", help="evaluate a network on a points file")
    e.add_argument("network")
    e.add_argument("points")
    common(e)
    e.set_defaults(func=_eval)

    r = sub.add_parser("error", help="L^p distance between a network and a region's step")
    r.add_argument("network")
    r.add_argument("region")
    r.add_argument("--method", default="mc", choices=("mc", "grid"))
    common(r, p_flag=True, sampling=True)
    r.set_defaults(func=_error)

    k = sub.add_parser("breaklines", help="first- and second-layer break lines in a 2D box")
    k.add_argument("network")
    k.add_argument("--box", type=float, nargs=4, default=[0.0, 1.0, 0.0, 1.0],
                   metavar=("X0", "X1", "Y0", "Y1"))
    k.add_argument("--fixed", type=float, default=None,
                   help="value of the remaining coordinates when d > 2")
    common(k)
    k.set_defaults(func=_breaklines)

    x = sub.add_parser("example", help="run a scenario preset")
    x.add_argument("name", choices=("circle", "sphere", "hypercube", "hshape"))
    x.add_argument("--n", type=_positive(int), default=None)
    x.add_argument("--d", type=_positive(int), default=None)
    x.add_argument("--method", choices=("hull", "decomposition"), default=None)
    common(x, eps=True, sampling=True)
    x.set_defaults(func=_example)

    v = sub.add_parser("render", help="field or break-line file -> SVG")
    v.add_argument("input")
    common(v)
    v.set_defaults(func=_render)
    return ap


def cli_dispatch(argv=None):
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if getattr(args, "p", 1.0) < 1:
        parser.print_usage(sys.stderr)
        print("relustep: error: --p must be >= 1", file=sys.stderr)
        return 2
    try:
        args.func(args)
    except (UsageError, ValueError, FileNotFoundError, TypeError) as exc:
        print(f"relustep: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - report, do not trace back
        print(f"relustep: failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


def main():
    sys.exit(cli_dispatch())


if __name__ == "__main__":
    main()
