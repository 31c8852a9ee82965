"""Builtin patterns: 3-term progressions, isosceles triangles on curves, linear equations."""
import logging
from fractions import Fraction
from itertools import product
from math import ceil, lcm, log2, sqrt

import numpy as np
from scipy.optimize import brentq

import settings
from errors import DemoError, InputError, ResourceError
from models.patterns import RoughPattern, SurfacePattern, TranslationalPattern
from patterns import isosceles_functional, periodize
from sampler import required_period
from torus import cube, double_cube

logger = logging.getLogger(__name__)

BISECTION_STEPS = 64
MAX_CELL_EXPONENT = 20

# removal fraction stays well under 1/2 at these sizes
DEMO_M = {"ap3": 2048, "linear-eq": 512, "isosceles": 512}
DEMO_LAMBDA = {"ap3": 1.0 / 3.0, "linear-eq": 0.25, "isosceles": 0.25}


# 3-term arithmetic progressions

def _negate_first(prefixes):
    return -prefixes[:, :1, :]


def ap3_pattern(d=1, period_m=None):
    """x1 - 2 x2 + x3 = 0 as x3 - 2 x2 in {-x1}, periodized."""
    m = required_period(3, [2]) if period_m is None else period_m
    P = TranslationalPattern(3, d, Fraction(2), _negate_first, lipschitz_L=1.0, period_m=m, pattern_id="ap3")
    return periodize(P)


def ap3_surface(side=1.0 / 40):
    """The same relation as a surface x3 = 2 x2 - x1 over three separated intervals."""
    cubes = tuple(cube(c, side) for c in (1.0 / 6, 0.5, 5.0 / 6))

    def f(prefixes):
        return 2.0 * prefixes[:, 1, :] - prefixes[:, 0, :]

    return SurfacePattern(3, 1, cubes, f, lipschitz_L=sqrt(5.0), pattern_id="ap3-surface")


# Isosceles triangles on curves

def parabola(t):
    t = np.asarray(t, dtype=float)
    return np.stack([t, t * t], axis=-1)


def line(t):
    t = np.asarray(t, dtype=float)
    return np.stack([t, np.zeros_like(t)], axis=-1)


CURVES = {"parabola": parabola, "line": line}


def curve_constant(gamma, samples=4097):
    """C with |gamma'| in [1/C, C] on [0, 1], from finite differences."""
    t = np.linspace(0.0, 1.0, samples)
    steps = np.linalg.norm(np.diff(gamma(t), axis=0), axis=-1) * (samples - 1)
    if steps.min() <= 0:
        raise InputError("curve speed vanishes on [0, 1]")
    return float(max(steps.max(), 1.0 / steps.min(), 1.0))


def isosceles_layout(gamma):
    """Working interval [0, eps] with eps = 1/(2 C^3) and three cubes inside it."""
    C = curve_constant(gamma)
    eps = 1.0 / (2.0 * C ** 3)
    s = eps / 30.0
    middle, left, right = (cube(c, s) for c in (eps / 2, eps / 2 - 11 * s, eps / 2 + 11 * s))
    return {"C": C, "eps": eps, "s": s, "cubes": (middle, left, right)}


def _solve_apex(gamma, t2, t3):
    """t1 > t2 with |gamma(t1) - gamma(t2)| = |gamma(t2) - gamma(t3)|, NaN when unbracketed."""
    reach = np.linalg.norm(gamma(t2) - gamma(t3), axis=-1)
    lo, hi = t2.copy(), t2 + reach
    ok = isosceles_functional(gamma, hi, t2, t3) >= 0
    for _ in range(BISECTION_STEPS):
        mid = 0.5 * (lo + hi)
        up = isosceles_functional(gamma, mid, t2, t3) >= 0
        hi = np.where(up, mid, hi)
        lo = np.where(up, lo, mid)
    return np.where(ok, 0.5 * (lo + hi), np.nan)


def _check_solver(gamma, cubes, count=4):
    rng = np.random.default_rng(0x150)
    t2 = cubes[0].center.coords[0] + (rng.random(count) - 0.5) * cubes[0].sidelength
    t3 = cubes[1].center.coords[0] + (rng.random(count) - 0.5) * cubes[1].sidelength
    fast = _solve_apex(gamma, t2, t3)
    for a, b, got in zip(t2, t3, fast):
        top = a + float(np.linalg.norm(gamma(a) - gamma(b)))
        try:
            root = brentq(lambda t: float(isosceles_functional(gamma, t, a, b)), a, top, xtol=1e-14)
        except ValueError as e:
            raise DemoError("isosceles solver did not bracket a root", t2=float(a), t3=float(b),
                            detail=str(e)) from e
        if not abs(root - got) <= 1e-9:
            raise DemoError("isosceles solver disagrees with the reference root",
                            t2=float(a), t3=float(b), bisection=float(got), brentq=root)


def _lipschitz_estimate(f, cubes, pairs=512):
    rng = np.random.default_rng(0x11F)

    def draw():
        return np.stack([c.center.as_array() + (rng.random((pairs, 1)) - 0.5) * c.sidelength for c in cubes], axis=1)

    x, y = draw(), draw()
    num = np.abs(f(x) - f(y)).reshape(-1)
    den = np.sqrt(np.sum((x - y) ** 2, axis=(1, 2)))
    ok = np.isfinite(num) & (den > 0)
    return float(1.25 * np.max(num[ok] / den[ok]))


def isosceles_surface(curve="parabola"):
    """Surface t1 = f(t2, t3) of isosceles triples near the start of the curve.

    Slots are (t2, t3, t1): the apex t2 lives in the middle cube, t3 to its
    left and t1 to its right.
    """
    if curve not in CURVES:
        raise InputError("unknown curve", curve=curve, known=sorted(CURVES))
    gamma = CURVES[curve]
    layout = isosceles_layout(gamma)
    cubes = layout["cubes"]
    _check_solver(gamma, cubes)

    def f(prefixes):
        return _solve_apex(gamma, prefixes[:, 0, 0], prefixes[:, 1, 0]).reshape(-1, 1)

    L = _lipschitz_estimate(f, cubes[:2])
    logger.info("isosceles %s: C=%.4g eps=%.4g s=%.3g L=%.4g", curve, layout["C"], layout["eps"], layout["s"], L)
    return SurfacePattern(3, 1, cubes, f, lipschitz_L=L, pattern_id=f"isosceles-{curve}")


def rough_from_relation(n, d, g, parametrization, parameter_cubes, claimed_alpha, pattern_id="rough"):
    """Rasterize a parametrized relation: lattice of spacing 1/(2g) over the parameter cubes."""
    axes = []
    for c in parameter_cubes:
        count = max(2, int(ceil(2 * g * c.sidelength)) + 1)
        for k in range(c.d):
            lo = c.center.coords[k] - c.sidelength / 2
            axes.append(np.linspace(lo, lo + c.sidelength, count))
    total = int(np.prod([a.size for a in axes]))
    if total > settings.TUPLE_BUDGET:
        raise ResourceError("rasterization lattice exceeds the tuple budget", samples=total,
                            budget=settings.TUPLE_BUDGET)
    params = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(axes))
    points = np.asarray(parametrization(params), dtype=float)
    points = points[np.all(np.isfinite(points), axis=1)]
    return RoughPattern.from_points(n, d, g, points, claimed_alpha=claimed_alpha, pattern_id=pattern_id)


def isosceles_rough(curve, r):
    """Rough version of the isosceles relation at cell size about r, on the doubled windows."""
    P = isosceles_surface(curve)
    g = 2 ** min(MAX_CELL_EXPONENT, max(1, int(ceil(log2(1.0 / r)))))
    windows = tuple(double_cube(c) for c in P.domain_cubes[:2])

    def sheet(params):
        apex = P.f(params.reshape(-1, 2, 1))
        return np.concatenate([params, apex], axis=1)

    return rough_from_relation(3, 1, g, sheet, windows, claimed_alpha=2.0, pattern_id=f"isosceles-{curve}-rough")


# Linear equations

def _normalized_vectors(n, bound):
    seen = []
    for m in product(range(-bound, bound + 1), repeat=n):
        nz = [v for v in m if v]
        if nz and nz[0] > 0:
            seen.append(m)
    return seen


def _signed_targets(S, d):
    targets = []
    for s in S:
        v = np.mod(np.broadcast_to(np.asarray(s, dtype=float), (d,)), 1.0)
        targets.extend([tuple(v), tuple(np.mod(-v, 1.0))])
    return np.unique(np.round(np.array(targets), 15) % 1.0, axis=0)


def _equation_offsets(signed, m_q, d):
    k = np.array(list(product(range(abs(m_q)), repeat=d)), dtype=float)
    return ((signed[:, None, :] + k[None, :, :]) / m_q).reshape(-1, d)


def _linear_T(coeffs, m_q, offsets):
    coeffs = np.asarray(coeffs, dtype=float)

    def T(prefixes):
        base = -np.tensordot(prefixes, coeffs, axes=([1], [0])) / m_q if coeffs.size else \
            np.zeros((prefixes.shape[0], prefixes.shape[2]))
        return base[:, None, :] + offsets[None, :, :]

    return T


def linear_equation_family(n, d, coeff_bound, S, r, period_m=None):
    """Patterns covering m.x = s for all nonzero m in [-B, B]^n and s in S.

    Returns (translational patterns, arity-one point filters, covered equations).
    Equations with one nonzero coefficient are x_q in a finite set and become
    point filters; the rest become translational patterns sharing one period.
    """
    if coeff_bound < 1:
        raise InputError("coeff_bound must be at least 1", coeff_bound=coeff_bound)
    if n < 2:
        raise InputError("linear equations need at least two variables", n=n)
    if not S:
        raise InputError("the target set S is empty")
    signed = _signed_targets(S, d)
    vectors = _normalized_vectors(n, coeff_bound)
    plans, filters, covered = [], [], []
    g = 2 ** min(62 // d - 1, max(2, int(ceil(log2(1.0 / r))) + 2))
    for m in vectors:
        nz = [i for i, v in enumerate(m) if v]
        q = nz[-1]
        if len(nz) == 1:
            pts = _equation_offsets(signed, m[q], d)
            filters.append(RoughPattern.from_points(1, d, g, pts, pattern_id=f"eq{m}"))
            covered.append({"coefficients": list(m), "kind": "point-filter", "order": [q]})
            continue
        p = nz[-2]
        order = [i for i in range(n) if i not in (p, q)] + [p, q]
        plans.append((m, order, p, q, Fraction(-m[p], m[q])))
    patterns = []
    if plans:
        a_values = [a for *_, a in plans]
        base = lcm(*[abs(m[q]) for m, _, _, q, _ in plans])
        m_common = required_period(n, a_values, base) if period_m is None else period_m
        for m, order, p, q, a in plans:
            offsets = _equation_offsets(signed, m[q], d)
            others = [m[i] for i in order[:-2]]
            L = sum(abs(c) for c in others) / abs(m[q])
            P = TranslationalPattern(n, d, a, _linear_T(others, m[q], offsets), lipschitz_L=L,
                                     period_m=m_common, pattern_id=f"eq{m}")
            patterns.append(periodize(P))
            covered.append({"coefficients": list(m), "kind": "translational", "order": order, "a": str(a)})
    logger.info("linear family B=%d: %d translational patterns, %d point filters", coeff_bound, len(patterns),
                len(filters))
    return patterns, filters, covered


PATTERNS = {
    "ap3": lambda d=1, **_: ap3_pattern(d),
    "ap3-surface": lambda **_: ap3_surface(),
    "isosceles-parabola": lambda **_: isosceles_surface("parabola"),
    "isosceles-line": lambda **_: isosceles_surface("line"),
    "empty": lambda n=3, d=1, **_: RoughPattern.empty_pattern(n, d),
}


def get_pattern(name, **kwargs):
    if name not in PATTERNS:
        raise InputError("unknown pattern id", pattern=name, known=sorted(PATTERNS))
    return PATTERNS[name](**kwargs)
