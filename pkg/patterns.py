"""Pattern relations, thickened membership and exact tuple scans.

The three pattern kinds share one contract: given n slot arrays of candidate
points and a tolerance, return every index tuple whose concatenated points
satisfy the relation within the tolerance. The rough kind looks up hashed grid
cells, the surface and translational kinds pair KD-tree neighbours and then
recheck each candidate with the canonical distance so results agree with a
naive n-fold loop.
"""
import logging
from dataclasses import replace
from itertools import product
from math import prod

import numpy as np
from scipy.spatial import cKDTree

import settings
from errors import InputError, ResourceError
from models.patterns import RoughPattern, SurfacePattern, TranslationalPattern
from torus import as_array, tdist_many

logger = logging.getLogger(__name__)

CHUNK = 1 << 16


# Helpers

def _tuple_chunks(sizes, chunk=CHUNK):
    total = prod(sizes)
    if total == 0:
        return
    if len(sizes) == 0:
        yield np.empty((1, 0), dtype=np.int64)
        return
    for start in range(0, total, chunk):
        lin = np.arange(start, min(start + chunk, total), dtype=np.int64)
        yield np.stack(np.unravel_index(lin, sizes), axis=1).astype(np.int64)


def _distinct_mask(idx):
    ok = np.ones(idx.shape[0], dtype=bool)
    for i in range(idx.shape[1]):
        for j in range(i + 1, idx.shape[1]):
            ok &= idx[:, i] != idx[:, j]
    return ok


def _separated_mask(pts, separation):
    """pts has shape (T, n, d); pairwise torus distance >= separation."""
    ok = np.ones(pts.shape[0], dtype=bool)
    for i in range(pts.shape[1]):
        for j in range(i + 1, pts.shape[1]):
            ok &= tdist_many(pts[:, i], pts[:, j]) >= separation
    return ok


def _cell_gaps(coords, cells, g):
    """Per-axis torus distance from coordinates to closed cells [c/g, (c+1)/g]."""
    h = 1.0 / g
    t = np.mod(coords - cells * h, 1.0)
    return np.where(t <= h, 0.0, np.minimum(t - h, 1.0 - t))


def _lookup_offsets(eps, g, k_axes):
    reach = int(np.floor(eps * g)) + 1
    if 2 * reach + 1 >= g:
        per_axis = np.arange(g)
        absolute = True
    else:
        per_axis = np.arange(-reach, reach + 1)
        absolute = False
    return per_axis, absolute, len(per_axis) ** k_axes


def _hits_sorted(keys, table):
    if table.size == 0:
        return np.zeros(keys.shape, dtype=bool)
    pos = np.clip(np.searchsorted(table, keys), 0, table.size - 1)
    return table[pos] == keys


def _near_cells(coords, table, g, eps, exact=True):
    """Which rows of ``coords`` (T, k) lie within eps of a cell whose linear index is in ``table``."""
    T, k = coords.shape
    hit = np.zeros(T, dtype=bool)
    if T == 0 or table.size == 0:
        return hit
    shape = (g,) * k
    per_axis, absolute, lookups = _lookup_offsets(eps, g, k)
    if lookups > table.size:
        cells = np.stack(np.unravel_index(table, shape), axis=1)
        for start in range(0, T, max(1, CHUNK // max(1, table.size))):
            block = coords[start:start + max(1, CHUNK // max(1, table.size))]
            gaps = _cell_gaps(block[:, None, :], cells[None, :, :], g)
            dist = np.sqrt(np.sum(gaps ** 2, axis=-1)) if exact else np.max(gaps, axis=-1)
            hit[start:start + block.shape[0]] = np.any(dist <= eps + settings.MARGIN_ATOL, axis=1)
        return hit
    base = np.minimum(np.floor(coords * g).astype(np.int64), g - 1)
    for off in product(per_axis, repeat=k):
        cand = np.asarray(off, dtype=np.int64) if absolute else (base + np.asarray(off)) % g
        cand = np.broadcast_to(cand, base.shape)
        found = _hits_sorted(np.ravel_multi_index(cand.T, shape), table)
        if not found.any():
            continue
        gaps = _cell_gaps(coords[found], cand[found], g)
        dist = np.sqrt(np.sum(gaps ** 2, axis=-1)) if exact else np.max(gaps, axis=-1)
        idx = np.flatnonzero(found)
        hit[idx[dist <= eps + settings.MARGIN_ATOL]] = True
    return hit


def _slot_arrays(slots, n, d):
    if isinstance(slots, np.ndarray) or not isinstance(slots, (list, tuple)):
        arr = as_array(slots, d)
        return [arr] * n, True
    if len(slots) == 1:
        arr = as_array(slots[0], d)
        return [arr] * n, True
    if len(slots) != n:
        raise InputError("need one point array per tuple slot", n=n, slots=len(slots))
    arrays = [as_array(s, d) if len(s) else np.empty((0, d)) for s in slots]
    shared = all(s is slots[0] for s in slots)
    return arrays, shared


def _budget(budget):
    return settings.TUPLE_BUDGET if budget is None else int(budget)


# Rough kind

def thickened_membership(Z, tup, eps):
    if eps < 0:
        raise InputError("eps must be nonnegative", eps=eps)
    flat = np.concatenate([np.atleast_1d(p.as_array() if hasattr(p, "as_array") else p) for p in tup])
    if flat.size != Z.dn:
        raise InputError("tuple dimension does not match the pattern", expected=Z.dn, got=int(flat.size))
    coords = np.mod(flat.astype(float), 1.0)[None, :]
    return bool(_near_cells(coords, Z.cells, Z.g, eps)[0])


def _projection(Z, blocks):
    coords = Z.cell_coords()[:, blocks]
    if coords.shape[0] == 0:
        return np.empty(0, dtype=np.int64)
    return np.unique(np.ravel_multi_index(coords.T, (Z.g,) * coords.shape[1]))


def rough_tuples(slots, Z, eps, budget=None, separation=None):
    """Index tuples (k_1..k_n) of distinct points within eps of the occupied cells."""
    arrays, shared = _slot_arrays(slots, Z.n, Z.d)
    budget = _budget(budget)
    empty = np.empty((0, Z.n), dtype=np.int64)
    if Z.cells.size == 0 or any(a.shape[0] == 0 for a in arrays):
        return empty
    _, _, lookups = _lookup_offsets(eps, Z.g, Z.dn)
    lookups = min(lookups, Z.cells.size)
    sizes = tuple(a.shape[0] for a in arrays)
    work = prod(sizes) * lookups
    last_ids = np.arange(sizes[-1])
    prefix_source = None
    if work > budget and Z.n >= 2:
        d, n = Z.d, Z.n
        last_block = list(range(d * (n - 1), d * n))
        live_last = _near_cells(arrays[-1], _projection(Z, last_block), Z.g, eps, exact=False)
        last_ids = np.flatnonzero(live_last)
        prefix_table = _projection(Z, list(range(d * (n - 1))))
        _, _, prefix_lookups = _lookup_offsets(eps, Z.g, d * (n - 1))
        live_prefixes = []
        for idx in _tuple_chunks(sizes[:-1]):
            if shared:
                idx = idx[_distinct_mask(idx)]
            coords = np.concatenate([arrays[i][idx[:, i]] for i in range(n - 1)], axis=1)
            live_prefixes.append(idx[_near_cells(coords, prefix_table, Z.g, eps, exact=False)])
        prefix_source = np.concatenate(live_prefixes) if live_prefixes else np.empty((0, n - 1), np.int64)
        work = prod(sizes[:-1]) * min(prefix_lookups, max(1, prefix_table.size)) \
            + prefix_source.shape[0] * last_ids.size * lookups
        logger.debug("rough scan pruned to %d live prefixes x %d live tails", prefix_source.shape[0], last_ids.size)
        if work > budget:
            raise ResourceError("tuple budget exhausted even with pruning", work=int(work), budget=budget)
    elif work > budget:
        raise ResourceError("tuple budget exhausted", work=int(work), budget=budget)

    found = []
    for idx in _candidate_tuples(sizes, prefix_source, last_ids):
        if shared:
            idx = idx[_distinct_mask(idx)]
        if idx.shape[0] == 0:
            continue
        pts = np.stack([arrays[i][idx[:, i]] for i in range(Z.n)], axis=1)
        if separation is not None:
            keep = _separated_mask(pts, separation)
            idx, pts = idx[keep], pts[keep]
        hit = _near_cells(pts.reshape(pts.shape[0], -1), Z.cells, Z.g, eps)
        found.append(idx[hit])
    return np.concatenate(found) if found else empty


def _candidate_tuples(sizes, prefix_source, last_ids):
    if prefix_source is None:
        yield from _tuple_chunks(sizes)
        return
    if prefix_source.shape[0] == 0 or last_ids.size == 0:
        return
    per = max(1, CHUNK // last_ids.size)
    for start in range(0, prefix_source.shape[0], per):
        pre = prefix_source[start:start + per]
        rep = np.repeat(pre, last_ids.size, axis=0)
        tail = np.tile(last_ids, pre.shape[0])[:, None]
        yield np.concatenate([rep, tail], axis=1)


# Surface and translational kinds

def _pair_candidates(sources, targets, radius, boxsize=1.0):
    """(i, j) pairs with torus distance <= radius between sources[i] and targets[j]."""
    empty = np.empty(0, dtype=np.int64)
    if sources.shape[0] == 0 or targets.shape[0] == 0:
        return empty, empty
    src = np.mod(sources, boxsize)
    src[src >= boxsize] = 0.0
    tgt = np.mod(targets, boxsize)
    tgt[tgt >= boxsize] = 0.0
    tree = cKDTree(tgt, boxsize=boxsize)
    nearest, _ = tree.query(src, k=1, distance_upper_bound=radius * (1.0 + 1e-9))
    rows = np.flatnonzero(np.isfinite(nearest))
    if rows.size == 0:
        return empty, empty
    lists = tree.query_ball_point(src[rows], radius * (1.0 + 1e-9))
    lengths = np.array([len(l) for l in lists], dtype=np.int64)
    if lengths.sum() == 0:
        return empty, empty
    i = np.repeat(rows, lengths)
    j = np.concatenate([np.asarray(l, dtype=np.int64) for l in lists if len(l)])
    return i, j


def surface_tuples(slots, P, eps, budget=None):
    arrays, _ = _slot_arrays(slots, P.n, P.d)
    budget = _budget(budget)
    sizes = tuple(a.shape[0] for a in arrays)
    if prod(sizes[:-1]) > budget:
        raise ResourceError("tuple budget exhausted", work=prod(sizes[:-1]), budget=budget)
    radius = eps * (1.0 + 1e-9) + 2 * settings.MARGIN_ATOL
    found = []
    for idx in _tuple_chunks(sizes[:-1]):
        prefixes = np.stack([arrays[i][idx[:, i]] for i in range(P.n - 1)], axis=1)
        values = P.evaluate(prefixes)
        valid = ~np.isnan(values).any(axis=1)
        if not valid.any():
            continue
        rows = np.flatnonzero(valid)
        i, j = _pair_candidates(values[rows], arrays[-1], radius)
        if i.size == 0:
            continue
        dist = tdist_many(arrays[-1][j], values[rows[i]])
        keep = dist <= eps + settings.MARGIN_ATOL
        found.append(np.concatenate([idx[rows[i[keep]]], j[keep, None]], axis=1))
    return np.concatenate(found) if found else np.empty((0, P.n), dtype=np.int64)


def translational_distance(pattern, prefix_points, penultimate, last):
    """Distance from x_n - a*x_{n-1} to the target set of the prefix (closure applied when periodized)."""
    v = np.mod(last - float(pattern.a) * penultimate, 1.0)
    targets = pattern.raw_targets(prefix_points)
    m = pattern.period_m if pattern.periodized else 1
    w = np.mod(m * (v[:, None, :] - targets) + 0.5, 1.0) - 0.5
    return np.min(np.sqrt(np.sum(w ** 2, axis=-1)), axis=1) / m


def translational_tuples(slots, P, eps, budget=None):
    arrays, _ = _slot_arrays(slots, P.n, P.d)
    budget = _budget(budget)
    sizes = tuple(a.shape[0] for a in arrays)
    m = P.period_m if P.periodized else 1
    a = float(P.a)
    radius = m * eps * (1.0 + 1e-9) + 2 * m * settings.MARGIN_ATOL
    scaled_last = np.mod(m * arrays[-1], 1.0)
    found = []
    for idx in _tuple_chunks(sizes[:-2]):
        prefixes = np.stack([arrays[i][idx[:, i]] for i in range(P.n - 2)], axis=1) \
            if P.n > 2 else np.empty((idx.shape[0], 0, P.d))
        targets = P.raw_targets(prefixes)
        K = targets.shape[1]
        work = idx.shape[0] * K * sizes[-2]
        if work > budget:
            raise ResourceError("tuple budget exhausted", work=int(work), budget=budget)
        if K == 0 or sizes[-2] == 0:
            continue
        # bad positions for x_n: u + a*x_{n-1}, reduced mod 1/m and scaled to the unit torus
        bad = targets[:, :, None, :] + a * arrays[-2][None, None, :, :]
        bad = np.mod(m * bad.reshape(-1, P.d), 1.0)
        i, j = _pair_candidates(bad, scaled_last, radius)
        if i.size == 0:
            continue
        p_row, _, pen = np.unravel_index(i, (idx.shape[0], K, sizes[-2]))
        cand = np.unique(np.stack([p_row, pen, j], axis=1), axis=0)
        dist = translational_distance(P, prefixes[cand[:, 0]], arrays[-2][cand[:, 1]], arrays[-1][cand[:, 2]])
        keep = dist <= eps + settings.MARGIN_ATOL
        cand = cand[keep]
        found.append(np.concatenate([idx[cand[:, 0]], cand[:, 1:]], axis=1))
    return np.concatenate(found) if found else np.empty((0, P.n), dtype=np.int64)


def relation_tuples(slots, pattern, eps, budget=None):
    if isinstance(pattern, RoughPattern):
        return rough_tuples(slots, pattern, eps, budget)
    if isinstance(pattern, SurfacePattern):
        return surface_tuples(slots, pattern, eps, budget)
    if isinstance(pattern, TranslationalPattern):
        return translational_tuples(slots, pattern, eps, budget)
    raise InputError("unknown pattern kind", kind=type(pattern).__name__)


# Operations

def periodize(pattern):
    if pattern.period_m < 1:
        raise InputError("period_m must be a positive integer")
    if pattern.periodized:
        return pattern
    return replace(pattern, periodized=True)


def _window_for(config, pattern):
    if isinstance(pattern, SurfacePattern):
        return pattern.domain_cubes
    if isinstance(pattern, TranslationalPattern) and config.window is not None:
        if len(config.window) == pattern.n:
            return config.window
    return None


def violation_scan(config, pattern, separation_s, margin, budget=None, window="auto"):
    """Sorted list of index tuples of s-separated points satisfying the relation within margin."""
    if margin < 0:
        raise InputError("margin must be nonnegative", margin=margin)
    if not separation_s > 0:
        raise InputError("separation_s must be positive", separation_s=separation_s)
    if config.d != pattern.d:
        raise InputError("configuration and pattern dimensions differ", config=config.d, pattern=pattern.d)
    budget = _budget(budget)
    n = pattern.n
    if config.N < n:
        return []
    if config.N ** n > budget:
        logger.warning("violation scan over %d^%d tuples exceeds the configured budget %d", config.N, n, budget)
    points = config.points
    cubes = _window_for(config, pattern) if window == "auto" else window
    if cubes is None:
        ids = [np.arange(config.N)] * n
    else:
        ids = [np.flatnonzero(c.contains(points)) for c in cubes]
    slots = [points[i] for i in ids]
    if isinstance(pattern, RoughPattern):
        if cubes is None:
            raw = rough_tuples(points, pattern, margin, budget=max(budget, 1), separation=separation_s)
            return sorted(tuple(int(k) for k in row) for row in raw)
        raw = rough_tuples(slots, pattern, margin, budget=max(budget, 1), separation=None)
    else:
        raw = relation_tuples(slots, pattern, margin, budget=max(budget, 1))
    if raw.shape[0] == 0:
        return []
    tuples = np.stack([ids[i][raw[:, i]] for i in range(n)], axis=1)
    tuples = tuples[_distinct_mask(tuples)]
    pts = points[tuples]
    tuples = tuples[_separated_mask(pts, separation_s)]
    return sorted(set(tuple(int(k) for k in row) for row in tuples))


def isosceles_functional(gamma, t1, t2, t3):
    g1, g2, g3 = (np.asarray(gamma(t), dtype=float) for t in (t1, t2, t3))
    return np.sum((g1 - g2) ** 2, axis=-1) - np.sum((g2 - g3) ** 2, axis=-1)
