import logging
from dataclasses import dataclass, field, replace
from fractions import Fraction
from itertools import product
from typing import Callable

import numpy as np

from errors import InputError
from torus import axis_gaps, cube_distance

logger = logging.getLogger(__name__)

# g^(dn) must fit a signed 64-bit linear index
_MAX_LINEAR = 1 << 62


@dataclass(frozen=True, eq=False)
class RoughPattern:
    n: int
    d: int
    g: int
    cells: np.ndarray
    claimed_alpha: float = 0.0
    empty: bool = False
    pattern_id: str = "rough"
    kind: str = field(default="rough", init=False)

    def __post_init__(self):
        if self.n < 1 or self.d < 1:
            raise InputError("arity and dimension must be positive", n=self.n, d=self.d)
        if self.g < 2:
            raise InputError("cell resolution must be 1/g with g >= 2", g=self.g)
        if float(self.g) ** self.dn >= _MAX_LINEAR:
            raise InputError("grid too fine for linear cell indices", g=self.g, dn=self.dn)
        if not 0.0 <= self.claimed_alpha < self.dn:
            raise InputError("claimed_alpha must lie in [0, dn)", claimed_alpha=self.claimed_alpha)
        cells = np.unique(np.asarray(self.cells, dtype=np.int64).reshape(-1))
        if cells.size and (cells[0] < 0 or cells[-1] >= self.g ** self.dn):
            raise InputError("cell index out of range")
        if cells.size == 0 and not self.empty:
            raise InputError("occupied cell set is empty; pass empty=True for the empty pattern")
        cells.setflags(write=False)
        object.__setattr__(self, "cells", cells)

    @property
    def dn(self):
        return self.d * self.n

    @property
    def cell_resolution(self):
        return 1.0 / self.g

    @property
    def shape(self):
        return (self.g,) * self.dn

    @classmethod
    def empty_pattern(cls, n, d, g=2, pattern_id="empty"):
        return cls(n, d, g, np.empty(0, dtype=np.int64), empty=True, pattern_id=pattern_id)

    @classmethod
    def from_cell_coords(cls, n, d, g, coords, **kwargs):
        coords = np.asarray(coords, dtype=np.int64).reshape(-1, n * d) % g
        if coords.shape[0] == 0:
            return cls(n, d, g, np.empty(0, dtype=np.int64), empty=True, **kwargs)
        linear = np.ravel_multi_index(coords.T, (g,) * (n * d))
        return cls(n, d, g, linear, **kwargs)

    @classmethod
    def from_points(cls, n, d, g, points, **kwargs):
        """Occupied cells are the cells containing the given (K, dn) points."""
        pts = np.mod(np.asarray(points, dtype=float).reshape(-1, n * d), 1.0)
        coords = np.minimum(np.floor(pts * g).astype(np.int64), g - 1)
        return cls.from_cell_coords(n, d, g, coords, **kwargs)

    @classmethod
    def full(cls, n, d, g, **kwargs):
        return cls(n, d, g, np.arange(g ** (n * d), dtype=np.int64), **kwargs)

    def cell_coords(self):
        if self.cells.size == 0:
            return np.empty((0, self.dn), dtype=np.int64)
        return np.stack(np.unravel_index(self.cells, self.shape), axis=1).astype(np.int64)

    def to_dict(self):
        return {
            "kind": self.kind,
            "id": self.pattern_id,
            "n": self.n,
            "d": self.d,
            "g": self.g,
            "occupied": int(self.cells.size),
            "claimed_alpha": self.claimed_alpha,
        }


def _sample_cube_tuples(rng, cubes, count):
    parts = []
    for c in cubes:
        offs = rng.uniform(-0.5, 0.5, size=(count, c.d)) * c.sidelength
        parts.append(np.mod(c.center.as_array() + offs, 1.0))
    return np.stack(parts, axis=1)


@dataclass(frozen=True, eq=False)
class SurfacePattern:
    n: int
    d: int
    domain_cubes: tuple
    f: Callable
    lipschitz_L: float
    pattern_id: str = "surface"
    spot_checks: int = 256
    kind: str = field(default="surface", init=False)

    def __post_init__(self):
        if self.n < 2:
            raise InputError("surface patterns need arity at least 2", n=self.n)
        cubes = tuple(self.domain_cubes)
        if len(cubes) != self.n:
            raise InputError("need one domain cube per tuple slot", n=self.n, cubes=len(cubes))
        if any(c.d != self.d for c in cubes):
            raise InputError("cube dimension mismatch")
        if self.lipschitz_L < 0:
            raise InputError("lipschitz_L must be nonnegative")
        object.__setattr__(self, "domain_cubes", cubes)
        side = max(c.sidelength for c in cubes)
        for i, j in product(range(self.n), repeat=2):
            if i < j and cube_distance(cubes[i], cubes[j]) < 10.0 * side - 1e-12:
                raise InputError(
                    "domain cubes must be at distance at least 10 sidelengths",
                    cubes=(i, j),
                    distance=cube_distance(cubes[i], cubes[j]),
                )
        self._spot_check_lipschitz()
        self._check_jacobian()

    @property
    def sidelength(self):
        return max(c.sidelength for c in self.domain_cubes)

    def evaluate(self, prefixes):
        """f on an (P, n-1, d) array; rows outside f's domain come back as NaN."""
        prefixes = np.asarray(prefixes, dtype=float).reshape(-1, self.n - 1, self.d)
        out = np.asarray(self.f(prefixes), dtype=float).reshape(-1, self.d)
        return np.where(np.isnan(out), np.nan, np.mod(out, 1.0))

    def _spot_check_lipschitz(self):
        rng = np.random.default_rng(0x5EED)
        x = _sample_cube_tuples(rng, self.domain_cubes[:-1], self.spot_checks)
        y = _sample_cube_tuples(rng, self.domain_cubes[:-1], self.spot_checks)
        fx, fy = self.evaluate(x), self.evaluate(y)
        ok = ~(np.isnan(fx).any(axis=1) | np.isnan(fy).any(axis=1))
        if not ok.any():
            return
        lhs = np.sqrt(np.sum(axis_gaps(fx[ok], fy[ok]) ** 2, axis=1))
        rhs = np.sqrt(np.sum(axis_gaps(x[ok], y[ok]) ** 2, axis=(1, 2)))
        ratio = lhs / np.maximum(rhs, 1e-300)
        worst = float(ratio.max())
        if worst > self.lipschitz_L * (1.0 + 1e-6) + 1e-12:
            raise InputError("lipschitz_L is not an upper bound on sampled pairs",
                             lipschitz_L=self.lipschitz_L, observed=worst)

    def _check_jacobian(self, count=16, h=1e-6):
        rng = np.random.default_rng(0x7AC0)
        base = _sample_cube_tuples(rng, self.domain_cubes[:-1], count)
        f0 = self.evaluate(base)
        for block in range(self.n - 1):
            cols = []
            for axis in range(self.d):
                step = base.copy()
                step[:, block, axis] += h
                delta = self.evaluate(step) - f0
                cols.append((delta - np.round(delta)) / h)
            jac = np.stack(cols, axis=-1)
            dets = np.abs(np.linalg.det(jac))
            dets = dets[~np.isnan(dets)]
            if dets.size and dets.min() < 1e-8:
                logger.warning("pattern %s: Jacobian block %d nearly singular (|det| = %.3g)",
                               self.pattern_id, block, dets.min())

    def to_dict(self):
        return {
            "kind": self.kind,
            "id": self.pattern_id,
            "n": self.n,
            "d": self.d,
            "lipschitz_L": self.lipschitz_L,
            "domain_cubes": [c.to_dict() for c in self.domain_cubes],
        }


@dataclass(frozen=True, eq=False)
class TranslationalPattern:
    n: int
    d: int
    a: Fraction
    T: Callable
    lipschitz_L: float
    period_m: int = 1
    claimed_alpha: float = None
    periodized: bool = False
    pattern_id: str = "translational"
    kind: str = field(default="translational", init=False)

    def __post_init__(self):
        if self.n < 2:
            raise InputError("translational patterns need arity at least 2", n=self.n)
        a = Fraction(self.a).limit_denominator(10 ** 6)
        if a == 0:
            raise InputError("the coefficient a must be nonzero")
        if self.period_m < 1:
            raise InputError("period_m must be a positive integer", period_m=self.period_m)
        if (a * self.period_m).denominator != 1:
            raise InputError("period_m * a must be an integer for x - a*y to be defined mod 1/m",
                             a=str(a), period_m=self.period_m)
        object.__setattr__(self, "a", a)
        alpha = self.d * (self.n - 1) if self.claimed_alpha is None else self.claimed_alpha
        if not self.d * (self.n - 1) <= alpha < self.d * self.n:
            raise InputError("claimed_alpha must lie in [d(n-1), dn)", claimed_alpha=alpha)
        object.__setattr__(self, "claimed_alpha", float(alpha))

    def raw_targets(self, prefixes):
        """T on an (P, n-2, d) array, as a (P, K, d) array of targets."""
        prefixes = np.asarray(prefixes, dtype=float)
        if prefixes.ndim != 3:
            prefixes = prefixes.reshape(1 if self.n == 2 else -1, self.n - 2, self.d)
        out = np.asarray(self.T(prefixes), dtype=float)
        if out.size == 0:
            return np.empty((prefixes.shape[0], 0, self.d))
        return np.mod(out.reshape(prefixes.shape[0], -1, self.d), 1.0)

    def targets(self, prefixes):
        """Target arrays with the 1/m closure applied when the pattern is periodized."""
        raw = self.raw_targets(prefixes)
        if not self.periodized or self.period_m == 1:
            return raw
        shifts = np.array(list(product(range(self.period_m), repeat=self.d)), dtype=float) / self.period_m
        closed = raw[:, :, None, :] + shifts[None, None, :, :]
        return np.mod(closed.reshape(raw.shape[0], -1, self.d), 1.0)

    def target_set(self, prefix=()):
        """Deduplicated targets for one prefix tuple, sorted lexicographically."""
        arr = self.targets(np.asarray(prefix, dtype=float).reshape(1, self.n - 2, self.d))[0]
        keys = np.round(arr, 12) % 1.0
        return [tuple(row) for row in np.unique(keys, axis=0)]

    def with_period(self, m):
        return replace(self, period_m=m, periodized=False)

    def to_dict(self):
        return {
            "kind": self.kind,
            "id": self.pattern_id,
            "n": self.n,
            "d": self.d,
            "a": str(self.a),
            "period_m": self.period_m,
            "periodized": self.periodized,
            "lipschitz_L": self.lipschitz_L,
            "claimed_alpha": self.claimed_alpha,
        }
