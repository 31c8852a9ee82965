import logging
from fractions import Fraction
from math import ceil, lcm, sqrt

import numpy as np
from scipy.stats import binomtest

import settings
from errors import ConstructionFailure, InputError, ResourceError
from models.configuration import WeightedConfiguration
from models.patterns import RoughPattern, SurfacePattern, TranslationalPattern
from patterns import periodize, relation_tuples, rough_tuples, violation_scan
from torus import axis_gaps, cube, double_cube, sample_in_cube

logger = logging.getLogger(__name__)

MAX_DRAW_ROUNDS = 4096


def derive_radius(M, lambda_):
    if not lambda_ > 0:
        raise InputError("lambda must be positive", lambda_=lambda_)
    if M < 2:
        raise InputError("M must be at least 2", M=M)
    return float(M) ** (-1.0 / lambda_)


def beta0_rough(n, d, alpha):
    return min(float(d), (d * n - alpha) / (n - 0.5))


def beta0_surface(n, d):
    return float(d) if n == 2 else min(float(d), d / (n - 0.75))


def beta0_translational(n, d, alpha):
    return min(float(d), (d * n - alpha) / (n - 1))


def _check_beta0(params, beta0, label):
    if params.lambda_ >= beta0:
        logger.warning("%s: lambda=%.4g is not below beta0=%.4g; proceeding anyway", label, params.lambda_, beta0)


def wilson_interval(successes, trials, confidence=0.95):
    if trials == 0:
        return (0.0, 1.0)
    ci = binomtest(int(successes), int(trials)).proportion_ci(confidence_level=confidence, method="wilson")
    return (float(ci.low), float(ci.high))


def stream(seed, stratum):
    """Independent generator for one stratum; depends only on (seed, stratum)."""
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=(int(stratum),)))


def _draw(rng, count, d, propose, accept=None, support=None, label="stratum"):
    """Rejection sampler: proposals from ``propose(rng, k)``, kept with probability ``accept(x)``."""
    kept = []
    have = 0
    batch = max(64, count)
    for _ in range(MAX_DRAW_ROUNDS):
        x = propose(rng, batch)
        u = rng.random(batch)
        mask = np.ones(batch, dtype=bool)
        if accept is not None:
            mask &= u < accept(x)
        if support is not None:
            mask &= support(x)
        kept.append(x[mask])
        have += int(mask.sum())
        if have >= count:
            return np.concatenate(kept)[:count]
        batch = min(batch * 2, 1 << 20)
    raise ConstructionFailure("rejection sampling did not fill the stratum", stratum=label, wanted=count, got=have)


def _uniform(d):
    return lambda rng, k: rng.random((k, d))


def incidence_index_set(strata, pattern, threshold, budget=None):
    """Indices of last-slot candidates taking part in a near-occurrence of the pattern."""
    if not threshold > 0:
        raise InputError("threshold must be positive", threshold=threshold)
    tuples = relation_tuples(strata, pattern, threshold, budget)
    return set(int(k) for k in np.unique(tuples[:, -1])) if tuples.shape[0] else set()


def _finish(d, blocks, labels, raw_weights, params, removed, provenance, window=None):
    points = np.concatenate(blocks) if blocks else np.empty((0, d))
    raw = np.concatenate(raw_weights) if raw_weights else np.empty(0)
    strata = np.concatenate(labels) if labels else np.empty(0, dtype=np.int64)
    scale = points.shape[0] / raw.sum() if raw.size else 1.0
    provenance = dict(provenance, params=params.to_dict(), weight_scale=float(scale))
    return WeightedConfiguration(
        d, points, raw * scale, params.radius, removed_count=removed,
        provenance=provenance, window=window, strata=strata,
    )


def build_rough(params, Z, support=None):
    if not Z.claimed_alpha < Z.dn:
        raise InputError("claimed_alpha must be below dn")
    beta0 = beta0_rough(Z.n, Z.d, Z.claimed_alpha)
    _check_beta0(params, beta0, Z.pattern_id)
    r = derive_radius(params.M, params.lambda_)
    threshold = 2.0 * sqrt(Z.n) * r
    X = _draw(stream(params.seed, 0), params.M, Z.d, _uniform(Z.d), support=support, label=0)
    removed = incidence_index_set(X, Z, threshold, params.budget)
    keep = np.setdiff1d(np.arange(params.M), np.fromiter(removed, dtype=np.int64, count=len(removed)))
    diagnostics = {
        "pattern": Z.pattern_id, "M": params.M, "removed": len(removed), "threshold": threshold,
        "expected_removed_scale": sqrt(params.M), "beta0": beta0,
    }
    if keep.size < params.M / 2:
        raise ConstructionFailure("more than half of the candidates were removed", **diagnostics)
    config = _finish(
        Z.d, [X[keep]], [np.zeros(keep.size, dtype=np.int64)], [np.ones(keep.size)], params,
        len(removed), dict(diagnostics, kind="rough"),
    )
    try:
        leftover = violation_scan(config, Z, params.separation, sqrt(Z.n) * r, budget=params.budget)
    except ResourceError as err:
        logger.warning("skipping post-filter scan for %s: %s", Z.pattern_id, err.message)
        config.provenance["post_filter_skipped"] = True
    else:
        config.provenance["post_filter_skipped"] = False
        if leftover:
            raise ConstructionFailure("post-filter scan found a surviving tuple", tuple=list(leftover[0]))
    logger.info("build_rough %s: M=%d retained=%d removed=%d", Z.pattern_id, params.M, keep.size, len(removed))
    return config


# Partition of unity for the surface construction

def smoothstep(t):
    t = np.clip(t, 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)
        b = np.where(t < 1, np.exp(-1.0 / np.where(t < 1, 1.0 - t, 1.0)), 0.0)
    return a / (a + b)


def cube_bump(R, x):
    """Equals 1 on 1.5*R, 0 off 2*R, smooth in between; R has sidelength s."""
    s = R.sidelength
    u = axis_gaps(np.atleast_2d(x), R.center.as_array())
    return np.prod(smoothstep((s - u) / (0.25 * s)), axis=-1)


def bump_volume(R):
    # the transition integrates to half its width, so each axis contributes 1.5s + 0.25s
    return (1.75 * R.sidelength) ** R.d


def partition_of_unity(cubes):
    def psi(i, x):
        if i > 0:
            return cube_bump(cubes[i - 1], x)
        return 1.0 - sum(cube_bump(R, x) for R in cubes)

    volumes = [bump_volume(R) for R in cubes]
    return psi, [1.0 - sum(volumes)] + volumes


def build_surface(params, P, support=None):
    beta0 = beta0_surface(P.n, P.d)
    _check_beta0(params, beta0, P.pattern_id)
    r = derive_radius(params.M, params.lambda_)
    if r >= 0.5 * P.sidelength:
        logger.warning("%s: radius %.3g is not small against the cube sidelength", P.pattern_id, r)
    threshold = 2.0 * sqrt(P.n) * (P.lipschitz_L + 1.0) * r
    cubes = P.domain_cubes
    psi, volumes = partition_of_unity(cubes)
    strata = []
    for i in range(P.n + 1):
        if i == 0:
            propose = _uniform(P.d)
        else:
            Q = double_cube(cubes[i - 1])
            propose = (lambda Q: lambda rng, k: sample_in_cube(rng, Q, k))(Q)
        accept = (lambda i: lambda x: psi(i, x))(i)
        strata.append(_draw(stream(params.seed, i), params.M, P.d, propose, accept, support, label=i))
    removed = incidence_index_set(strata[1:], P, threshold, params.budget)
    removed_ids = np.fromiter(sorted(removed), dtype=np.int64, count=len(removed))
    keep = np.setdiff1d(np.arange(params.M), removed_ids)
    diagnostics = {
        "pattern": P.pattern_id, "M": params.M, "removed": len(removed), "threshold": threshold,
        "beta0": beta0, "stratum_weights": volumes,
    }
    if keep.size < params.M / 2:
        raise ConstructionFailure("stratum n retained fewer than M/2 points", **diagnostics)
    blocks = strata[:-1] + [strata[-1][keep]]
    labels = [np.full(b.shape[0], i, dtype=np.int64) for i, b in enumerate(blocks)]
    raw = [np.full(b.shape[0], volumes[i]) for i, b in enumerate(blocks)]
    provenance = dict(diagnostics, kind="surface", removed_points=strata[-1][removed_ids].tolist())
    logger.info("build_surface %s: M=%d removed=%d", P.pattern_id, params.M, len(removed))
    return _finish(P.d, blocks, labels, raw, params, len(removed), provenance, window=cubes)


# Translational construction

def required_period(n, a_values, base=1):
    """Smallest m (a multiple of ``base`` and of every denominator) fitting n cubes with 10/(am) gaps."""
    a_abs = [abs(Fraction(a)) for a in a_values]
    step = lcm(int(base), *[a.denominator for a in a_abs])
    lo = (10.0 / float(min(a_abs)) + 1.0 / (2.0 * float(max(a_abs)))) * n
    return step * max(1, ceil(lo / step - 1e-12))


def translational_layout(n, d, a_values, m):
    a_abs = [abs(Fraction(a)) for a in a_values]
    side = 1.0 / (2.0 * float(max(a_abs)) * m)
    gap = 1.0 / n - side
    if gap < 10.0 / (float(min(a_abs)) * m) - 1e-12:
        raise InputError("cube layout violates the 10/(am) separation; increase period_m",
                         period_m=m, required=required_period(n, a_values))
    return tuple(cube([(i + 0.5) / n] + [0.5] * (d - 1), side) for i in range(n))


def _rough_point_filter(blocks, Z, eps, budget):
    dropped = []
    for X in blocks:
        hits = rough_tuples(X, Z, eps, budget)
        dropped.append(np.unique(hits[:, 0]) if hits.shape[0] else np.empty(0, dtype=np.int64))
    return dropped


def build_translational_family(params, patterns, point_filters=(), support=None):
    """One configuration avoiding every translational pattern of the family.

    ``point_filters`` holds arity-one rough patterns (equations of the form
    x in S); points within 2r of them are dropped from every stratum.
    """
    patterns = list(patterns)
    if not patterns:
        raise InputError("need at least one translational pattern")
    n, d = patterns[0].n, patterns[0].d
    if any(P.n != n or P.d != d for P in patterns):
        raise InputError("family members must share arity and dimension")
    if any(not P.periodized for P in patterns):
        raise InputError("translational patterns must be periodized before building")
    m = patterns[0].period_m
    if any(P.period_m != m for P in patterns):
        raise InputError("family members must share period_m")
    beta0 = min(beta0_translational(n, d, P.claimed_alpha) for P in patterns)
    _check_beta0(params, beta0, patterns[0].pattern_id)
    r = derive_radius(params.M, params.lambda_)
    cubes = translational_layout(n, d, [P.a for P in patterns], m)
    doubled = [double_cube(R) for R in cubes]

    def outside_all(x):
        return ~np.any([Q.contains(x) for Q in doubled], axis=0)

    strata = [_draw(stream(params.seed, 0), params.M, d, _uniform(d),
                    accept=lambda x: outside_all(x).astype(float), support=support, label=0)]
    for i, Q in enumerate(doubled, start=1):
        strata.append(_draw(stream(params.seed, i), params.M, d,
                            (lambda Q: lambda rng, k: sample_in_cube(rng, Q, k))(Q), support=support, label=i))

    removed = set()
    for P in patterns:
        removed |= incidence_index_set(strata[1:], P, 2.0 * sqrt(n) * (P.lipschitz_L + 1.0) * r, params.budget)
    p_hat = len(removed) / params.M
    ci = wilson_interval(len(removed), params.M)
    comp_volume = 1.0 - sum(Q.volume for Q in doubled)
    volumes = [comp_volume * (1.0 - p_hat)] + [Q.volume * (1.0 - p_hat) for Q in doubled[:-1]] + [doubled[-1].volume]
    diagnostics = {
        "pattern": patterns[0].pattern_id if len(patterns) == 1 else f"family[{len(patterns)}]",
        "M": params.M, "removed": len(removed), "p_hat": p_hat, "p_hat_ci": list(ci),
        "beta0": beta0, "period_m": m, "stratum_weights": volumes,
    }
    if p_hat > 0.5:
        raise ConstructionFailure("removal fraction exceeds 1/2", **diagnostics)
    removed_ids = np.fromiter(sorted(removed), dtype=np.int64, count=len(removed))
    keep = np.setdiff1d(np.arange(params.M), removed_ids)
    blocks = strata[:-1] + [strata[-1][keep]]
    extra = 0
    for Z in point_filters:
        for i, drop in enumerate(_rough_point_filter(blocks, Z, 2.0 * r, params.budget)):
            if drop.size:
                blocks[i] = np.delete(blocks[i], drop, axis=0)
                extra += int(drop.size)
    labels = [np.full(b.shape[0], i, dtype=np.int64) for i, b in enumerate(blocks)]
    raw = [np.full(b.shape[0], volumes[i]) for i, b in enumerate(blocks)]
    provenance = dict(diagnostics, kind="translational", point_filter_removed=extra,
                      removed_points=strata[-1][removed_ids].tolist())
    logger.info("build_translational %s: M=%d removed=%d p_hat=%.4g", diagnostics["pattern"], params.M,
                len(removed), p_hat)
    return _finish(d, blocks, labels, raw, params, len(removed) + extra, provenance, window=cubes)


def build_translational(params, P, support=None):
    return build_translational_family(params, [P], support=support)


def build(params, pattern, support=None):
    if isinstance(pattern, RoughPattern):
        return build_rough(params, pattern, support)
    if isinstance(pattern, SurfacePattern):
        return build_surface(params, pattern, support)
    if isinstance(pattern, TranslationalPattern):
        return build_translational(params, periodize(pattern), support)
    raise InputError("unknown pattern kind", kind=type(pattern).__name__)


def post_filter_margin(pattern, r):
    if isinstance(pattern, RoughPattern):
        return sqrt(pattern.n) * r
    return sqrt(pattern.n) * (pattern.lipschitz_L + 1.0) * r
