from dataclasses import dataclass, field, replace

import numpy as np

from errors import InputError


@dataclass(frozen=True)
class ConstructionParams:
    M: int
    lambda_: float
    kappa: float = 0.2
    delta: float = 0.0
    seed: int = 0
    separation_s: float = None
    budget: int = None

    def __post_init__(self):
        if int(self.M) < 2:
            raise InputError("M must be at least 2", M=self.M)
        if not self.lambda_ > 0:
            raise InputError("lambda must be positive", lambda_=self.lambda_)
        if not self.kappa > 0:
            raise InputError("kappa must be positive", kappa=self.kappa)
        if self.delta < 0:
            raise InputError("delta must be nonnegative", delta=self.delta)
        if self.separation_s is not None and not self.separation_s > 0:
            raise InputError("separation_s must be positive", separation_s=self.separation_s)
        object.__setattr__(self, "M", int(self.M))
        object.__setattr__(self, "seed", int(self.seed) % (1 << 64))

    @property
    def radius(self):
        return float(self.M) ** (-1.0 / self.lambda_)

    @property
    def separation(self):
        return self.separation_s if self.separation_s is not None else self.radius

    def with_seed(self, seed):
        return replace(self, seed=seed)

    def to_dict(self):
        return {
            "M": self.M,
            "lambda": self.lambda_,
            "kappa": self.kappa,
            "delta": self.delta,
            "seed": self.seed,
            "separation_s": self.separation,
            "budget": self.budget,
            "r": self.radius,
        }


@dataclass(frozen=True, eq=False)
class WeightedConfiguration:
    d: int
    points: np.ndarray
    weights: np.ndarray
    radius_r: float
    removed_count: int = 0
    provenance: dict = field(default_factory=dict)
    # cube layout R_1..R_n the construction certified, if any
    window: tuple = None
    # stratum label per point (0..n), -1 when not stratified
    strata: np.ndarray = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, self.d)
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        if pts.shape[0] != w.shape[0]:
            raise InputError("points and weights differ in length", points=pts.shape[0], weights=w.shape[0])
        if np.any(w <= 0):
            raise InputError("weights must be positive")
        pts = np.mod(pts, 1.0)
        pts[pts >= 1.0] = 0.0
        pts.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)
        if self.strata is None:
            labels = np.full(pts.shape[0], -1, dtype=np.int64)
        else:
            labels = np.asarray(self.strata, dtype=np.int64).reshape(-1)
        labels.setflags(write=False)
        object.__setattr__(self, "strata", labels)

    @classmethod
    def unit(cls, points, radius_r=0.0, **kwargs):
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1)
        return cls(pts.shape[1], pts, np.ones(pts.shape[0]), radius_r, **kwargs)

    @property
    def N(self):
        return int(self.points.shape[0])

    @property
    def total_weight(self):
        return float(self.weights.sum())

    def satisfies_weight_floor(self):
        return self.total_weight >= self.N / 2.0

    def shifted(self, t):
        return replace(self, points=np.mod(self.points + np.asarray(t, dtype=float), 1.0))

    def to_dict(self):
        return {
            "d": self.d,
            "N": self.N,
            "r": self.radius_r,
            "removed_count": self.removed_count,
            "total_weight": self.total_weight,
            "window": [c.to_dict() for c in self.window] if self.window else None,
            "provenance": self.provenance,
        }
