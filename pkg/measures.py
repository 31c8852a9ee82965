"""Grid measures, mollification, the perturbation step and the iterated driver."""
import logging
from dataclasses import dataclass, field
from functools import lru_cache
from math import ceil, gamma as gamma_fn, pi

import numpy as np
from scipy import integrate, special

from errors import ConstructionFailure, DegenerateOverlapError, InputError, ResourceError
from expsum import sweep
from models.configuration import ConstructionParams
from models.measure import GridMeasure, SeminormValue
from patterns import violation_scan
from sampler import build, post_filter_margin
from torus import hausdorff_distance

logger = logging.getLogger(__name__)

BUMP_RADIUS = 0.4
DEGENERATE_MASS = 1e-6
DEFAULT_G = 2048
GRID_FLOOR = 4.0


def bump(u):
    """Unnormalized radial profile exp(-1/(1-|2.5u|^2)) on |u| < 2/5."""
    u = np.asarray(u, dtype=float)
    s = (u / BUMP_RADIUS) ** 2
    with np.errstate(divide="ignore", over="ignore"):
        return np.where(s < 1.0, np.exp(-1.0 / np.where(s < 1.0, 1.0 - s, 1.0)), 0.0)


@lru_cache(maxsize=None)
def bump_integral(d):
    """Integral of the unnormalized bump over R^d."""
    radial, _ = integrate.quad(lambda p: float(bump(p)) * p ** (d - 1), 0.0, BUMP_RADIUS)
    sphere = 2.0 * pi ** (d / 2.0) / gamma_fn(d / 2.0)
    return sphere * radial


def _bump_transform_exact(eta, d):
    if eta == 0.0:
        return 1.0
    if d == 1:
        val, _ = integrate.quad(lambda x: float(bump(x)), 0.0, BUMP_RADIUS, weight="cos", wvar=2 * pi * eta)
        return 2.0 * val / bump_integral(1)
    nu = d / 2.0 - 1.0
    val, _ = integrate.quad(lambda p: float(bump(p)) * special.jv(nu, 2 * pi * eta * p) * p ** (d / 2.0),
                            0.0, BUMP_RADIUS, limit=200)
    return 2.0 * pi * eta ** (1.0 - d / 2.0) * val / bump_integral(d)


@lru_cache(maxsize=None)
def _bump_table(d, top=64.0, samples=4097):
    grid = np.linspace(0.0, top, samples)
    return grid, np.array([_bump_transform_exact(float(e), d) for e in grid])


def bump_transform(eta, d=1):
    """Transform of the unit-mass bump at radial frequency |eta|; zero beyond the tabulated band."""
    grid, table = _bump_table(d)
    eta = np.abs(np.asarray(eta, dtype=float))
    return np.where(eta <= grid[-1], np.interp(eta, grid, table), 0.0)


def _kernel_offsets(G, d, subsamples):
    """Offsets (in torus units) from the kernel centre for every subsample of every cell, per axis."""
    c = np.arange(G)
    c = np.where(c >= G // 2, c - G, c)
    sub = (np.arange(subsamples) + 0.5) / subsamples - 0.5
    return (c[:, None] + sub[None, :]) / G


def mollifier_density(r, G, d=1, subsamples=4):
    """Cell-averaged phi_r centred on cell 0, as a probability GridMeasure."""
    if not 1.0 / G < r:
        raise InputError("grid does not resolve the mollifier (1/G >= r)", r=r, G=G)
    if r > 1.0:
        raise InputError("mollifier radius must be at most 1", r=r)
    axis = _kernel_offsets(G, d, subsamples)
    sq = np.zeros([G, subsamples] * d)
    for k in range(d):
        shape = [1] * (2 * d)
        shape[2 * k], shape[2 * k + 1] = G, subsamples
        sq = sq + (axis ** 2).reshape(shape)
    values = bump(np.sqrt(sq) / r)
    cell_avg = values.reshape([G, subsamples] * d).mean(axis=tuple(range(1, 2 * d, 2)))
    density = cell_avg * r ** (-d) / bump_integral(d)
    discrete_mass = float(density.mean())
    provenance = {"kind": "mollifier", "r": r, "discretization_error": abs(discrete_mass - 1.0)}
    return GridMeasure(d, G, density / discrete_mass, provenance)


def mollifier_decay_profile(radii, orders=(2, 4), G=None):
    """sup over 2/r <= |xi| <= 8/r of |phi_r^(xi)| |xi|^T r^T, per (r, T), in d = 1.

    The grid is refined with 1/r so the band stays well inside Nyquist.
    """
    table = {}
    for r in radii:
        grid = max(G or DEFAULT_G, 1 << int(ceil(np.log2(32.0 / r))))
        mu = mollifier_density(r, grid, 1)
        xi = np.arange(int(ceil(2.0 / r)), int(8.0 / r) + 1).reshape(-1, 1)
        mags = np.abs(mu.transform(xi))
        for T in orders:
            table[(r, T)] = float(np.max(mags * (xi[:, 0] * r) ** T))
    spread = {}
    for T in orders:
        vals = [table[(r, T)] for r in radii]
        spread[T] = max(vals) / min(vals)
    return table, spread


def uniform_measure(G, d=1):
    return GridMeasure(d, G, np.ones((G,) * d), {"kind": "uniform"})


def bump_measure(center, radius, G, d=1):
    """Normalized smooth bump of the given radius around ``center``."""
    center = np.atleast_1d(np.asarray(center, dtype=float))
    axis = (np.arange(G) + 0.5) / G
    grids = np.meshgrid(*([axis] * d), indexing="ij")
    sq = 0.0
    for k in range(d):
        diff = np.abs(grids[k] - center[k])
        sq = sq + np.minimum(diff, 1.0 - diff) ** 2
    dens = bump(np.sqrt(sq) / radius)
    if dens.sum() == 0:
        raise InputError("bump radius too small for the grid", radius=radius, G=G)
    return GridMeasure(d, G, dens / dens.mean(), {"kind": "bump", "center": center.tolist(), "radius": radius})


def _box_frequencies(d, xi_max):
    axis = np.arange(-xi_max, xi_max + 1)
    freqs = np.stack(np.meshgrid(*([axis] * d), indexing="ij"), axis=-1).reshape(-1, d)
    return freqs[np.any(freqs != 0, axis=1)]


def _seminorm_of_masses(masses, G, d, lambda_, xi_max):
    if xi_max > G // 2 - 1:
        raise InputError("xi_max beyond the grid Nyquist band", xi_max=xi_max, nyquist=G // 2 - 1)
    if xi_max < 1:
        raise InputError("xi_max must be at least 1", xi_max=xi_max)
    spectrum = np.abs(np.fft.fftn(masses))
    freqs = _box_frequencies(d, xi_max)
    values = spectrum[tuple((freqs % G).T)] * np.sum(freqs.astype(float) ** 2, axis=1) ** (lambda_ / 4.0)
    k = int(np.argmax(values))
    return SeminormValue(lambda_, int(xi_max), float(values[k]), tuple(int(v) for v in freqs[k]))


def seminorm(mu, lambda_, xi_max=None):
    xi_max = mu.nyquist if xi_max is None else int(xi_max)
    return _seminorm_of_masses(mu.masses, mu.G, mu.d, lambda_, xi_max)


def difference_seminorm(mu, nu, lambda_, xi_max=None):
    if mu.G != nu.G or mu.d != nu.d:
        raise InputError("grids differ")
    xi_max = mu.nyquist if xi_max is None else int(xi_max)
    return _seminorm_of_masses(mu.masses - nu.masses, mu.G, mu.d, lambda_, xi_max)


def deposit(config, G):
    """Rasterize eta = (1/N) sum a_k delta_{x_k}: each atom's mass goes to its containing cell."""
    masses = np.zeros((G,) * config.d)
    if config.N:
        cells = tuple(np.minimum(np.floor(config.points * G).astype(np.int64), G - 1).T)
        np.add.at(masses, cells, config.weights / config.N)
    return masses


def perturb(mu0, config, gammas=None, radius=None, xi_max=None):
    if config.N == 0:
        raise InputError("cannot perturb with an empty configuration")
    if config.d != mu0.d:
        raise InputError("configuration and measure dimensions differ")
    if not mu0.is_probability(1e-6):
        raise InputError("mu0 must be a probability measure", mass=mu0.mass)
    G, d = mu0.G, mu0.d
    r = config.radius_r if radius is None else radius
    gammas = tuple(gammas) if gammas else (float(config.provenance.get("params", {}).get("lambda", d / 2.0)),)
    xi_max = mu0.nyquist if xi_max is None else xi_max
    kernel = mollifier_density(r, G, d)
    eta = deposit(config, G)
    # cell masses against a mean-1 kernel: already a density
    f_density = np.real(np.fft.ifftn(np.fft.fftn(eta) * np.fft.fftn(kernel.density)))
    f = GridMeasure(d, G, np.clip(f_density, 0.0, None), {"kind": "mollified-configuration", "r": r})
    rho_density = f.density * mu0.density
    mass_rho = float(rho_density.mean())
    if mass_rho < DEGENERATE_MASS:
        raise DegenerateOverlapError("configuration support misses supp(mu0)", mass_rho=mass_rho)
    rho = GridMeasure(d, G, rho_density)
    mu = GridMeasure(d, G, rho_density / mass_rho, {"kind": "perturbed", "r": r, "N": config.N})
    mu0_3d = seminorm(mu0, 3.0 * d, xi_max).value
    diagnostics = {"mass_rho": mass_rho, "r": r, "xi_max": xi_max, "mu0_M3d": mu0_3d, "gammas": {}}
    for g in gammas:
        f_norm = seminorm(f, g, xi_max).value
        rho_diff = difference_seminorm(rho, mu0, g, xi_max).value
        mu_diff = difference_seminorm(mu, mu0, g, xi_max).value
        rho_norm = seminorm(rho, g, xi_max).value
        chain = abs(1.0 / mass_rho - 1.0) * rho_norm + rho_diff
        if mu_diff > chain * (1 + 1e-9) + 1e-12:
            logger.error("triangle chain violated for gamma=%g: %.6g > %.6g", g, mu_diff, chain)
        denom = mu0_3d * f_norm
        diagnostics["gammas"][g] = {
            "f": f_norm,
            "rho_minus_mu0": rho_diff,
            "mu_minus_mu0": mu_diff,
            "chain_bound": chain,
            "chain_ok": mu_diff <= chain * (1 + 1e-9) + 1e-12,
            "K_d": rho_diff / denom if denom > 0 else float("nan"),
        }
        logger.debug("perturb gamma=%g: |f|=%.4g |rho-mu0|=%.4g K_d=%.4g", g, f_norm, rho_diff,
                     diagnostics["gammas"][g]["K_d"])
    return mu, diagnostics


def support_mask(mu, threshold):
    return mu.density > threshold * mu.density.mean()


def support_distance(mu, mu0, threshold):
    if not threshold > 0:
        raise InputError("threshold must be positive", threshold=threshold)
    a = mu.cell_centers(support_mask(mu, threshold))
    b = mu0.cell_centers(support_mask(mu0, threshold))
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise InputError("support is empty at this threshold", threshold=threshold)
    return hausdorff_distance(a, b)


def support_predicate(mu, threshold=1e-9):
    mask = support_mask(mu, threshold)
    return lambda x: mask[mu.cell_of(x)]


def geometric_schedule(lambda_, M0, stages, factor=8.0, **params):
    """ConstructionParams whose radii shrink by ``factor`` per stage."""
    r0 = float(M0) ** (-1.0 / lambda_)
    schedule = []
    for t in range(stages):
        M = max(2, int(ceil((r0 / factor ** t) ** (-lambda_) - 1e-9)))
        if schedule and M <= schedule[-1].M:
            M = schedule[-1].M + 1
        schedule.append(ConstructionParams(M=M, lambda_=lambda_, seed=params.get("seed", 0) + t,
                                           **{k: v for k, v in params.items() if k != "seed"}))
    return schedule


@dataclass
class IterationStage:
    stage: int
    measure: GridMeasure
    sweep: object
    config: object
    violations: int
    step_seminorm: float
    within_delta0: bool
    diagnostics: dict = field(default_factory=dict)

    def __iter__(self):
        return iter((self.measure, self.sweep))

    def to_dict(self):
        return {
            "stage": self.stage,
            "N": self.config.N,
            "r": self.config.radius_r,
            "mass": self.measure.mass,
            "verdict": self.sweep.verdict,
            "violations": self.violations,
            "step_seminorm": self.step_seminorm,
            "within_delta0": self.within_delta0,
        }


def salem_iterate(pattern, schedule, G, mu_init=None, gamma=None, delta0=1.0, C=4.0, threads=1):
    schedule = list(schedule)
    if not schedule:
        raise InputError("empty schedule")
    radii = [p.radius for p in schedule]
    if any(b >= a for a, b in zip(radii, radii[1:])):
        raise InputError("schedule radii must be strictly decreasing", radii=radii)
    for t, p in enumerate(schedule[:-1]):
        if post_filter_margin(pattern, p.radius) < schedule[t + 1].radius:
            raise InputError("stage margin does not dominate the next radius", stage=t)
    mu = uniform_measure(G, pattern.d) if mu_init is None else mu_init
    gamma = schedule[0].lambda_ if gamma is None else gamma
    stages = []
    for t, params in enumerate(schedule):
        try:
            config = build(params, pattern, support=support_predicate(mu))
            # r below the grid floor is mollified at 4 cells
            new_mu, diagnostics = perturb(mu, config, gammas=(gamma,), radius=max(params.radius, GRID_FLOOR / G))
        except ConstructionFailure as err:
            raise ConstructionFailure(err.message, stage=t, **err.diagnostics) from err
        report = sweep(config, kappa=params.kappa, C=C, delta=params.delta, lambda_=params.lambda_, threads=threads)
        try:
            violations = len(violation_scan(config, pattern, params.separation, post_filter_margin(pattern, params.radius)))
        except ResourceError:
            violations = -1
        step = difference_seminorm(new_mu, mu, gamma).value
        stages.append(IterationStage(t, new_mu, report, config, violations, step, step <= delta0, diagnostics))
        logger.info("stage %d: N=%d r=%.3g mass(rho)=%.4g step=%.4g", t, config.N, params.radius,
                    diagnostics["mass_rho"], step)
        mu = new_mu
    return stages
