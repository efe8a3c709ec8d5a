"""Counter-based uniform sampling.

Sample ``i`` of a stream in dimension ``d`` depends only on ``(seed, d, i)``.
Points are produced in blocks of :func:`points_per_chunk` and block ``c`` is
drawn from a Philox generator whose counter is offset by ``c``, so any
partition of the index range reproduces the same points.
"""

import numpy as np

CHUNK_VALUES = 1 << 20
DEFAULT_SEED = 0x5EED


def as_box(box):
    box = np.asarray(box, dtype=float)
    if box.ndim != 2 or box.shape[1] != 2:
        raise ValueError("box must be an array of (low, high) pairs")
    if not np.all(np.isfinite(box)) or not np.all(box[:, 1] > box[:, 0]):
        raise ValueError("box must be finite with positive volume")
    return box


def box_volume(box):
    box = as_box(box)
    return float(np.prod(box[:, 1] - box[:, 0]))


def points_per_chunk(dim):
    return max(1, CHUNK_VALUES // dim)


def _chunk(box, seed, index, count):
    counter = np.array([0, 0, index, 0], dtype=np.uint64)
    gen = np.random.Generator(np.random.Philox(key=int(seed), counter=counter))
    u = gen.random((count, box.shape[0]))
    return box[:, 0] + u * (box[:, 1] - box[:, 0])


def uniform_points(box, start, stop, seed=DEFAULT_SEED):
    """Uniform points with sample indices ``start..stop-1``."""
    box = as_box(box)
    per = points_per_chunk(box.shape[0])
    parts = []
    i = start
    while i < stop:
        c, off = divmod(i, per)
        take = min(per - off, stop - i)
        parts.append(_chunk(box, seed, c, off + take)[off:])
        i += take
    if not parts:
        return np.empty((0, box.shape[0]))
    return parts[0] if len(parts) == 1 else np.concatenate(parts)


def iter_uniform(box, samples, seed=DEFAULT_SEED):
    """Yield ``(start, points)`` blocks covering indices ``0..samples-1``."""
    if samples < 0:
        raise ValueError("samples must be non-negative")
    box = as_box(box)
    per = points_per_chunk(box.shape[0])
    for start in range(0, samples, per):
        stop = min(samples, start + per)
        yield start, _chunk(box, seed, start // per, stop - start)
