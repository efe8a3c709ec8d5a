"""Exact three-layer ReLU constructions for piecewise constant functions."""

from relustep.geometry import (
    ConvexPolytope,
    Hyperplane,
    RegionSpec,
    SimplePolygon,
    convex_decomposition_2d,
    convex_hull_2d,
    hull_pockets,
    polygonalize_circle_inscribed,
    polygonalize_convex_tangent,
    signed_eval,
    symm_diff_measure,
)
from relustep.network import (
    AffineLayer,
    ReluNetwork,
    SparseAffineLayer,
    affine_combine,
    eval_batch,
    evaluate,
    first_layer_breaklines,
    normalize_first_layer,
    second_layer_breaklines_2d,
)
from relustep.construct import (
    ConstructionReport,
    PiecewiseConstantSpec,
    convex_bump,
    convex_indicator,
    decomposition_composite,
    halfspace_ramp,
    hull_composite,
    piecewise_composite,
)

__version__ = "0.1.0"
