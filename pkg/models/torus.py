from dataclasses import dataclass
from math import isqrt, sqrt

import numpy as np

from errors import InputError


def _reduce(values):
    arr = np.mod(np.asarray(values, dtype=float), 1.0)
    # mod of a tiny negative number rounds up to exactly 1.0
    arr[arr >= 1.0] = 0.0
    return arr


@dataclass(frozen=True)
class TorusPoint:
    coords: tuple

    def __post_init__(self):
        if len(self.coords) < 1:
            raise InputError("a torus point needs at least one coordinate")
        object.__setattr__(self, "coords", tuple(float(c) for c in _reduce(self.coords)))

    @classmethod
    def of(cls, *coords):
        return cls(tuple(coords))

    @property
    def d(self):
        return len(self.coords)

    def as_array(self):
        return np.array(self.coords, dtype=float)

    def to_dict(self):
        return {"coords": list(self.coords)}


@dataclass(frozen=True)
class Frequency:
    entries: tuple

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(int(e) for e in self.entries))

    @classmethod
    def of(cls, *entries):
        return cls(tuple(entries))

    @property
    def d(self):
        return len(self.entries)

    @property
    def norm_sq(self):
        return sum(e * e for e in self.entries)

    @property
    def norm(self):
        n2 = self.norm_sq
        root = isqrt(n2)
        return float(root) if root * root == n2 else sqrt(n2)

    def is_zero(self):
        return all(e == 0 for e in self.entries)

    def as_array(self):
        return np.array(self.entries, dtype=np.int64)

    def to_dict(self):
        return {"entries": list(self.entries), "norm": self.norm}


@dataclass(frozen=True)
class TorusCube:
    center: TorusPoint
    sidelength: float

    def __post_init__(self):
        if not 0.0 < self.sidelength <= 1.0:
            raise InputError("cube sidelength must lie in (0, 1]", sidelength=self.sidelength)

    @property
    def d(self):
        return self.center.d

    @property
    def volume(self):
        return self.sidelength ** self.d

    def scaled(self, factor):
        return TorusCube(self.center, min(self.sidelength * factor, 1.0))

    def contains(self, points):
        """Boolean mask of the (N, d) array ``points`` lying in the closed cube."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        diff = np.abs(pts - self.center.as_array())
        wrapped = np.minimum(diff, 1.0 - diff)
        return np.all(wrapped <= self.sidelength / 2.0 + 1e-15, axis=1)

    def to_dict(self):
        return {"center": list(self.center.coords), "sidelength": self.sidelength}
