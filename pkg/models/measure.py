from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from errors import InputError


@dataclass(frozen=True, eq=False)
class GridMeasure:
    d: int
    G: int
    density: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        dens = np.array(self.density, dtype=float)
        if dens.shape != (self.G,) * self.d:
            raise InputError("density shape does not match (G,)*d", shape=list(dens.shape), G=self.G, d=self.d)
        if np.any(dens < 0) or not np.all(np.isfinite(dens)):
            raise InputError("density must be finite and nonnegative")
        dens.setflags(write=False)
        object.__setattr__(self, "density", dens)

    @property
    def nyquist(self):
        return self.G // 2 - 1

    @property
    def mass(self):
        return float(self.density.mean())

    @property
    def masses(self):
        return self.density / float(self.G) ** self.d

    def normalized(self):
        return GridMeasure(self.d, self.G, self.density / self.mass, dict(self.provenance))

    def is_probability(self, tol=1e-9):
        return abs(self.mass - 1.0) <= tol

    def cell_centers(self, mask=None):
        idx = np.argwhere(np.ones(self.density.shape, dtype=bool) if mask is None else mask)
        return (idx + 0.5) / self.G

    def cell_of(self, points):
        pts = np.atleast_2d(points)
        return tuple(np.minimum(np.floor(pts * self.G).astype(np.int64), self.G - 1).T)

    @cached_property
    def spectrum(self):
        return np.fft.fftn(self.masses)

    def transform(self, freqs):
        """Transform at integer frequencies (F, d), atoms at cell centres."""
        freqs = np.atleast_2d(np.asarray(freqs, dtype=np.int64))
        if np.any(np.abs(freqs) > self.nyquist):
            raise InputError("frequency beyond the grid Nyquist band", nyquist=self.nyquist)
        vals = self.spectrum[tuple((freqs % self.G).T)]
        return vals * np.exp(-1j * np.pi * freqs.sum(axis=1) / self.G)

    def direct_transform(self, freqs):
        """Slow reference: explicit sum over all cells."""
        freqs = np.atleast_2d(np.asarray(freqs, dtype=np.int64))
        centers = self.cell_centers()
        m = self.masses.reshape(-1)
        phase = np.mod(freqs @ centers.T, 1.0)
        return np.exp(-2j * np.pi * phase) @ m

    def to_dict(self):
        return {"d": self.d, "G": self.G, "mass": self.mass, "provenance": self.provenance}


@dataclass(frozen=True)
class SeminormValue:
    lambda_: float
    xi_max: int
    value: float
    argmax: tuple

    def to_dict(self):
        return {"lambda": self.lambda_, "xi_max": self.xi_max, "value": self.value, "argmax": list(self.argmax)}
