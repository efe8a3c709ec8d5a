"""Transition-region bookkeeping and L^p error estimates for the constructions.

For a chain of hyperplanes ``s_i(x) = a_i . x - b_i`` the convex construction
ramps from 0 to 1 inside the transition strip.  In 2D the strip splits into
quadrilaterals ``Upsilon1(i)`` (only plane ``i`` violated, by less than eps) and
triangles ``Upsilon2(i)`` (planes ``i`` and ``i+1`` violated, summed violation
below eps), on which the residual is affine and known in closed form.
"""

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from relustep.geometry import Estimate, binomial_estimate
from relustep.sampling import DEFAULT_SEED, as_box, box_volume, iter_uniform

OMEGA_HAT1 = "OmegaHat1"
UPSILON1 = "Upsilon1"
UPSILON2 = "Upsilon2"
OMEGA_HAT3 = "OmegaHat3"
UNKNOWN = "Unknown"

_KINDS = (OMEGA_HAT1, UPSILON1, UPSILON2, OMEGA_HAT3, UNKNOWN)


@dataclass(frozen=True)
class TransitionLabel:
    kind: str
    index: Optional[int] = None
    diagnostics: str = ""

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown label kind {self.kind!r}")

    def __str__(self):
        return self.kind if self.index is None else f"{self.kind}({self.index})"


def _values(points, hyperplanes):
    x = np.atleast_2d(np.asarray(points, dtype=float))
    return np.stack([h(x) for h in hyperplanes], axis=-1)


def classify_points(points, hyperplanes, eps, closed=False):
    """Vectorized classification.

    Returns ``(kind, index)`` integer arrays; ``kind`` indexes
    ``(OmegaHat1, Upsilon1, Upsilon2, OmegaHat3, Unknown)`` and ``index`` is the
    1-based plane index for the two Upsilon kinds (``-1`` otherwise).  With
    ``closed=True`` the last and first planes are neighbours as well.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    s = _values(points, hyperplanes)
    n = s.shape[1]
    pos = s > 0
    npos = pos.sum(axis=1)
    total = np.where(pos, s, 0.0).sum(axis=1)
    kind = np.full(len(s), 4, dtype=np.int8)
    index = np.full(len(s), -1, dtype=np.int64)
    kind[npos == 0] = 0
    strip = (npos > 0) & (total < eps)
    kind[(npos > 0) & ~strip] = 3
    one = strip & (npos == 1)
    kind[one] = 1
    index[one] = np.argmax(pos[one], axis=1) + 1
    two = strip & (npos == 2)
    if np.any(two):
        first = np.argmax(pos[two], axis=1)
        last = n - 1 - np.argmax(pos[two][:, ::-1], axis=1)
        adjacent = last - first == 1
        wrap = closed & (first == 0) & (last == n - 1) & (n > 2)
        k2 = np.where(two)[0]
        ok = adjacent | wrap
        kind[k2[ok]] = 2
        index[k2[ok]] = np.where(wrap[ok], n, first[ok] + 1)
    return kind, index


def classify_transition(x, hyperplanes, eps, closed=False):
    """Label of one 2D point with respect to a chain of hyperplanes."""
    x = np.asarray(x, dtype=float)
    if x.shape != (2,):
        raise ValueError("classify_transition works on 2D points")
    kind, index = classify_points(x[None, :], hyperplanes, eps, closed)
    k, i = int(kind[0]), int(index[0])
    if k == 4:
        s = _values(x, hyperplanes)[0]
        return TransitionLabel(UNKNOWN, None,
                               f"positive planes {np.flatnonzero(s > 0) + 1} are not a chain pair")
    return TransitionLabel(_KINDS[k], i if i > 0 else None)


def predicted_residuals(points, hyperplanes, eps, chi_hat, closed=False):
    """Closed-form ``chi_hat - N`` at each point; ``nan`` where the label is Unknown.

    ``chi_hat`` is the region on which the step function vanishes.
    """
    x = np.atleast_2d(np.asarray(points, dtype=float))
    kind, index = classify_points(x, hyperplanes, eps, closed)
    step = chi_hat.step(x)
    out = np.zeros(len(x))
    n = len(hyperplanes)
    a = np.array([h.normal for h in hyperplanes])
    b = np.array([h.offset for h in hyperplanes])
    m1 = kind == 1
    if np.any(m1):
        i = index[m1] - 1
        out[m1] = step[m1] - (np.einsum("ij,ij->i", a[i], x[m1]) - b[i]) / eps
    m2 = kind == 2
    if np.any(m2):
        i = index[m2] - 1
        j = (i + 1) % n
        out[m2] = step[m2] - (np.einsum("ij,ij->i", a[i] + a[j], x[m2]) - (b[i] + b[j])) / eps
    out[kind == 4] = np.nan
    return out


def predicted_residual(x, hyperplanes, eps, chi_hat, closed=False):
    """Closed-form value of ``chi_hat(x) - N(x)`` for the convex construction."""
    label = classify_transition(x, hyperplanes, eps, closed)
    if label.kind == UNKNOWN:
        raise ValueError(f"cannot predict residual: {label.diagnostics}")
    return float(predicted_residuals(np.asarray(x)[None, :], hyperplanes, eps, chi_hat, closed)[0])


@dataclass(frozen=True)
class ErrorReport:
    """An ``L^p`` error estimate; ``power`` fields refer to ``estimate ** p``."""

    p: float
    estimate: float
    method: str
    half_width_95: float = 0.0
    bound: Optional[float] = None
    samples_or_resolution: int = 0
    power: float = 0.0
    power_half_width: float = 0.0
    extra: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.method not in ("mc", "grid", "exact2d"):
            raise ValueError(f"unknown method {self.method!r}")
        if not self.p >= 1:
            raise ValueError("p must be >= 1")
        if self.estimate < 0 or self.half_width_95 < 0:
            raise ValueError("estimates and half-widths are non-negative")

    def with_bound(self, bound):
        return ErrorReport(self.p, self.estimate, self.method, self.half_width_95, bound,
                           self.samples_or_resolution, self.power, self.power_half_width,
                           self.extra)


def _check_p(p):
    if not (p >= 1 and math.isfinite(p)):
        raise ValueError("p must lie in [1, inf)")


def _diff_power(f, g, x, p):
    v = np.abs(np.asarray(f(x), dtype=float) - np.asarray(g(x), dtype=float)) ** p
    if not np.all(np.isfinite(v)):
        raise ValueError("non-finite sample encountered")
    return v


def lp_error_mc(f, g, p, box, samples, seed=DEFAULT_SEED):
    """Monte Carlo ``||f - g||_p`` over ``box``.

    The 95% half-width of the p-th power is ``1.96 * vol * sd / sqrt(n)``; the
    half-width of the norm follows by the delta method.
    """
    _check_p(p)
    if samples < 1:
        raise ValueError("samples must be >= 1")
    box = as_box(box)
    vol = box_volume(box)
    s1 = s2 = 0.0
    for _, x in iter_uniform(box, samples, seed):
        v = _diff_power(f, g, x, p)
        s1 += float(v.sum())
        s2 += float((v * v).sum())
    mean = s1 / samples
    var = max(0.0, s2 / samples - mean * mean)
    power = vol * mean
    power_hw = 1.96 * vol * math.sqrt(var / samples)
    if power > 0:
        hw = power_hw * power ** (1.0 / p - 1.0) / p
    else:
        hw = power_hw ** (1.0 / p)
    return ErrorReport(p, power ** (1.0 / p), "mc", hw, None, samples, power, power_hw)


def lp_error_grid(f, g, p, box, resolution):
    """Midpoint-rule tensor quadrature of ``|f - g|^p``, then the p-th root (d <= 3).

    ``resolution`` is a cell count per axis, either one integer or one per axis.
    """
    _check_p(p)
    box = as_box(box)
    d = box.shape[0]
    if d > 3:
        raise ValueError("grid quadrature supports d <= 3")
    res = np.broadcast_to(np.asarray(resolution, dtype=np.int64), (d,))
    if np.any(res < 2):
        raise ValueError("resolution must be >= 2")
    h = (box[:, 1] - box[:, 0]) / res
    axes = [box[k, 0] + (np.arange(res[k]) + 0.5) * h[k] for k in range(d)]
    total = 0.0
    # slabs along the first axis keep memory bounded
    rest = np.stack(np.meshgrid(*axes[1:], indexing="ij"), axis=-1).reshape(-1, d - 1) \
        if d > 1 else np.empty((1, 0))
    step = max(1, (1 << 21) // len(rest))
    for s in range(0, int(res[0]), step):
        x0 = axes[0][s:s + step]
        pts = np.concatenate([np.repeat(x0, len(rest))[:, None],
                              np.tile(rest, (len(x0), 1))], axis=1)
        total += float(_diff_power(f, g, pts, p).sum())
    power = total * float(np.prod(h))
    return ErrorReport(p, power ** (1.0 / p), "grid", 0.0, None, int(res.max()), power, 0.0,
                       {"resolution": res.tolist()})


def strip_measure_2d(hyperplanes, eps, box, samples=10**7, seed=DEFAULT_SEED, closed=False):
    """Area of the transition strip (all Upsilon cells) by Monte Carlo."""
    box = as_box(box)
    if box.shape[0] != 2:
        raise ValueError("strip_measure_2d works in 2D")
    hits = 0
    for _, x in iter_uniform(box, samples, seed):
        kind, _ = classify_points(x, hyperplanes, eps, closed)
        hits += int(np.count_nonzero((kind == 1) | (kind == 2)))
    return binomial_estimate(hits, samples, box_volume(box))


def transition_measure(groups, eps, box, samples=10**6, seed=DEFAULT_SEED):
    """Measure of the union of the ramps ``{0 < sum_i s(h_i(x)) < eps}`` of each group.

    Works in any dimension; for a single convex chain in 2D it equals the strip
    area of :func:`strip_measure_2d`.
    """
    box = as_box(box)
    groups = [list(g) for g in groups]
    hits = 0
    for _, x in iter_uniform(box, samples, seed):
        inside = np.zeros(len(x), dtype=bool)
        for g in groups:
            total = np.maximum(_values(x, g), 0.0).sum(axis=1)
            inside |= (total > 0) & (total < eps)
        hits += int(np.count_nonzero(inside))
    return binomial_estimate(hits, samples, box_volume(box))


@dataclass(frozen=True)
class BoundCheck:
    passed: bool
    lhs: float
    rhs: float
    margin: float


def verify_bound(report, strip, strip_half_width=0.0):
    """Check ``||chi_hat - N||_p^p <= |strip|`` allowing three half-widths of slack."""
    strip = float(strip)
    slack = 3.0 * (report.power_half_width + strip_half_width)
    rhs = strip + slack
    return BoundCheck(bool(report.power <= rhs), report.power, rhs, rhs - report.power)


@dataclass(frozen=True)
class ScalingFit:
    slope: float
    intercept: float
    eps: tuple
    errors: tuple


def scaling_study(construction, p, eps_list, estimator):
    """Least-squares slope of ``log error`` against ``log eps``.

    ``construction(eps)`` builds whatever ``estimator(built, eps, p)`` needs and
    the estimator returns an error (a float or an :class:`ErrorReport`).
    """
    eps = np.asarray(sorted(eps_list), dtype=float)
    if len(eps) < 3 or math.log10(eps[-1] / eps[0]) < 2 - 1e-9:
        raise ValueError("need at least 3 eps values spanning two decades")
    errs = []
    for e in eps:
        r = estimator(construction(e), e, p)
        errs.append(float(getattr(r, "estimate", r)))
    errs = np.array(errs)
    if np.any(errs <= 0) or not np.all(np.isfinite(errs)):
        raise ValueError("degenerate fit: errors must be positive and finite")
    slope, intercept = np.polyfit(np.log(eps), np.log(errs), 1)
    return ScalingFit(float(slope), float(intercept), tuple(eps.tolist()), tuple(errs.tolist()))


def strip_ratio(strip, interface_length, eps):
    """Measured ``|strip| / (|interface| * eps)``: the constant in the strip bound."""
    return float(strip) / (float(interface_length) * float(eps))
