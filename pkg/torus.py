"""Geometry of the flat torus R^d / Z^d."""
import logging

import numpy as np
from scipy.spatial import cKDTree

from errors import InputError
from models.torus import TorusCube, TorusPoint

logger = logging.getLogger(__name__)

_SHIFTS = np.array([-1.0, 0.0, 1.0])


def as_array(points, d=None):
    """Coerce TorusPoints, tuples or arrays to a reduced (N, d) float array."""
    if isinstance(points, TorusPoint):
        arr = points.as_array()[None, :]
    elif isinstance(points, np.ndarray):
        arr = points.astype(float, copy=True)
        if arr.ndim == 1:
            arr = arr.reshape(-1, 1) if d == 1 else arr.reshape(1, -1)
    else:
        rows = [p.coords if isinstance(p, TorusPoint) else tuple(np.atleast_1d(p)) for p in points]
        arr = np.array(rows, dtype=float)
        if arr.ndim == 1:
            arr = arr.reshape(-1, 1)
    arr = np.mod(arr, 1.0)
    arr[arr >= 1.0] = 0.0
    if d is not None and arr.size and arr.shape[1] != d:
        raise InputError("point dimension mismatch", expected=d, got=int(arr.shape[1]))
    return arr


def axis_gaps(x, y):
    """Per-axis wrap-around gaps min_k |x - y + k|, k in {-1, 0, 1}; broadcasts."""
    diff = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    return np.min(np.abs(diff[..., None] + _SHIFTS), axis=-1)


def tdist_many(x, y):
    """Torus distance along the last axis of two broadcastable coordinate arrays."""
    return np.sqrt(np.sum(axis_gaps(x, y) ** 2, axis=-1))


def tdist(x, y):
    if x.d != y.d:
        raise InputError("dimension mismatch", left=x.d, right=y.d)
    return float(tdist_many(x.as_array(), y.as_array()))


def hausdorff_distance(A, B):
    a = as_array(A) if len(A) else np.empty((0, 1))
    b = as_array(B) if len(B) else np.empty((0, 1))
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise InputError("hausdorff distance of an empty set")
    if a.shape[1] != b.shape[1]:
        raise InputError("dimension mismatch", left=int(a.shape[1]), right=int(b.shape[1]))
    # cKDTree with boxsize computes the minimum-image metric
    d_ab, _ = cKDTree(b, boxsize=1.0).query(a, k=1)
    d_ba, _ = cKDTree(a, boxsize=1.0).query(b, k=1)
    return float(max(d_ab.max(), d_ba.max()))


def double_cube(Q):
    return Q.scaled(2.0)


def cube_distance(Q, R):
    """Distance between two closed axis-parallel cubes on the torus."""
    gap = axis_gaps(Q.center.as_array(), R.center.as_array()) - (Q.sidelength + R.sidelength) / 2.0
    return float(np.sqrt(np.sum(np.clip(gap, 0.0, None) ** 2)))


def sample_in_cube(rng, cube, count):
    offsets = rng.uniform(-0.5, 0.5, size=(count, cube.d)) * cube.sidelength
    return np.mod(cube.center.as_array() + offsets, 1.0)


def cube(center, sidelength):
    return TorusCube(TorusPoint(tuple(np.atleast_1d(center))), sidelength)
