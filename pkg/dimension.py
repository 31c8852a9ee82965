import logging
import math

import numpy as np

from errors import InputError
from expsum import exp_sums, sampled_annulus, annulus_sup
from measures import bump_transform
from models.configuration import WeightedConfiguration
from models.measure import GridMeasure
from models.patterns import RoughPattern
from models.reports import DimensionEstimate
from torus import as_array

logger = logging.getLogger(__name__)

ZERO_SUP = 1e-12


def _box_counts(source, scales):
    if isinstance(source, RoughPattern):
        coords = source.cell_coords()
        ambient = source.dn
        rows = []
        for eps in scales:
            factor = max(1, int(round(eps * source.g)))
            coarse = coords // factor
            count = np.unique(coarse, axis=0).shape[0] if coarse.shape[0] else 0
            rows.append((factor / source.g, count))
        return ambient, rows
    pts = source.points if isinstance(source, WeightedConfiguration) else as_array(source)
    ambient = pts.shape[1]
    rows = []
    for eps in scales:
        g = max(1, int(round(1.0 / eps)))
        cells = np.minimum(np.floor(pts * g).astype(np.int64), g - 1)
        rows.append((1.0 / g, np.unique(cells, axis=0).shape[0] if cells.shape[0] else 0))
    return ambient, rows


def box_dimension(source, scales, method="slope"):
    """Box-counting estimate on the torus; ``method`` is "slope" or "minkowski"."""
    scales = sorted({float(s) for s in scales}, reverse=True)
    if len(scales) < 4:
        raise InputError("box counting needs at least four scales", scales=len(scales))
    if any(not 0 < s <= 1 for s in scales):
        raise InputError("scales must lie in (0, 1]")
    ambient, rows = _box_counts(source, scales)
    if any(count == 0 for _, count in rows):
        raise InputError("box counting of an empty set")
    x = np.array([math.log(1.0 / eps) for eps, _ in rows])
    y = np.array([math.log(count) for _, count in rows])
    table = []
    for (eps, count), lx, ly in zip(rows, x, y):
        table.append({"scale": eps, "count": int(count), "log_inv_scale": float(lx),
                      "local": float(ly / lx) if lx > 0 else float("nan")})
    if np.ptp(x) == 0:
        raise InputError("scales collapse onto one grid; choose distinct scales")
    slope, intercept = np.polyfit(x, y, 1)
    residual = float(np.sqrt(np.mean((y - (slope * x + intercept)) ** 2)))
    if method == "slope":
        value = float(slope)
    elif method == "minkowski":
        local = [row["local"] for row in table if row["log_inv_scale"] > 0]
        value = min(local) if local else 0.0
    else:
        raise InputError("unknown box-dimension method", method=method)
    value = float(np.clip(value, 0.0, ambient))
    return DimensionEstimate(f"box-{method}", value, tuple(eps for eps, _ in rows), tuple(table), residual)


def content_surrogate(config, alpha):
    """N * r^alpha, the covering sum of the configuration's r-balls."""
    return config.N * config.radius_r ** alpha


def _annulus_sups(source, j_range, radius, sample_size):
    sups = []
    if isinstance(source, GridMeasure):
        for j in j_range:
            sup, xi = annulus_sup(source, j)
            sups.append((j, sup / source.mass, xi.entries))
        return sups
    for j in j_range:
        freqs = sampled_annulus(j, source.d, size=sample_size)
        if freqs.shape[0] == 0:
            sups.append((j, 0.0, (0,) * source.d))
            continue
        norms = np.sqrt(np.sum(freqs.astype(float) ** 2, axis=1))
        values = np.abs(exp_sums(source.points, source.weights, freqs, source.N))
        values *= np.abs(bump_transform(radius * norms, source.d))
        k = int(np.argmax(values))
        sups.append((j, float(values[k]), tuple(int(v) for v in freqs[k])))
    return sups


def fourier_dimension(source, j_range=None, radius=None, sample_size=1 << 12):
    """Liminf surrogate of the Fourier decay exponent over dyadic annuli."""
    if not isinstance(source, (GridMeasure, WeightedConfiguration)):
        raise InputError("fourier_dimension needs a grid measure or a configuration")
    d = source.d
    if isinstance(source, GridMeasure):
        top = int(math.log2(source.G // 2)) - 1
        j_range = range(1, top + 1) if j_range is None else j_range
        if any(2 ** (j + 1) > source.G // 2 for j in j_range):
            raise InputError("annulus range exceeds the grid Nyquist band", G=source.G)
    else:
        radius = source.radius_r if radius is None else radius
        if not radius or radius <= 0:
            raise InputError("a configuration needs a positive mollification radius")
        if j_range is None:
            j_range = range(1, min(48, int(math.ceil(math.log2(64.0 / radius)))) + 1)
    j_range = [j for j in j_range if j >= 1]
    table = []
    usable = []
    notes = []
    for j, sup, xi in _annulus_sups(source, j_range, radius, sample_size):
        s_j = 2.0 * math.log(1.0 / sup) / (j * math.log(2.0)) if sup > ZERO_SUP else float("nan")
        table.append({"j": j, "sup": sup, "argmax": list(xi), "s_j": s_j})
        if sup > ZERO_SUP:
            usable.append((j, s_j))
        else:
            notes.append(f"annulus {j} excluded: zero supremum")
    window = usable[2:-2] if len(usable) >= 5 else usable
    if not window:
        notes.append("no nonzero coefficient in range; capped at ambient dimension")
        value = float(d)
    else:
        value = float(np.clip(min(s for _, s in window), 0.0, d))
    scales = tuple(2.0 ** -j for j in j_range)
    logger.debug("fourier_dimension: %d usable annuli, value %.4g", len(usable), value)
    return DimensionEstimate("fourier", value, scales, tuple(table), 0.0, tuple(notes))
