"""Weighted exponential sums, annulus suprema and the cancellation sweep."""
import logging
import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from scipy.stats import qmc

import settings
from errors import InputError
from models.configuration import WeightedConfiguration
from models.measure import GridMeasure
from models.reports import AnnulusRecord, SweepReport
from models.torus import Frequency

logger = logging.getLogger(__name__)

EXHAUSTIVE_CUTOFF = 1 << 12
SAMPLE_SIZE = 1 << 16
REANCHOR = 256
BLOCK_ELEMENTS = 1 << 22


def weighted_exp_sum(config, xi):
    xi = xi if isinstance(xi, Frequency) else Frequency(tuple(np.atleast_1d(xi)))
    if xi.d != config.d:
        raise InputError("frequency dimension does not match the configuration", xi=xi.d, config=config.d)
    if config.N == 0:
        return 0j
    phase = np.mod(config.points @ xi.as_array().astype(float), 1.0)
    terms = config.weights * np.exp(2j * np.pi * phase)
    return complex(math.fsum(terms.real), math.fsum(terms.imag)) / config.N


def exp_sums(points, weights, freqs, N=None):
    """(1/N) sum_k a_k e(xi . x_k) for every row of the integer array ``freqs``; blocked direct evaluation."""
    freqs = np.atleast_2d(np.asarray(freqs, dtype=np.int64))
    N = points.shape[0] if N is None else N
    out = np.empty(freqs.shape[0], dtype=complex)
    if points.shape[0] == 0:
        out[:] = 0
        return out
    block = max(1, BLOCK_ELEMENTS // points.shape[0])
    pts_t = points.T
    for start in range(0, freqs.shape[0], block):
        f = freqs[start:start + block].astype(float)
        phase = np.mod(f @ pts_t, 1.0)
        out[start:start + block] = np.exp(2j * np.pi * phase) @ weights
    return out / N


def consecutive_sums(x, weights, start, count, N=None):
    """Sums at xi = start..start+count-1 in d=1 by the per-point phase recurrence."""
    x = np.asarray(x, dtype=float).reshape(-1)
    N = x.size if N is None else N
    out = np.empty(count, dtype=complex)
    if x.size == 0:
        out[:] = 0
        return out
    step = np.exp(2j * np.pi * x)
    for base in range(0, count, REANCHOR):
        cur = weights * np.exp(2j * np.pi * np.mod((start + base) * x, 1.0))
        for k in range(min(REANCHOR, count - base)):
            out[base + k] = cur.sum()
            cur = cur * step
    return out / N


def _first_nonzero_positive(v):
    nz = v != 0
    first = np.argmax(nz, axis=1)
    vals = v[np.arange(v.shape[0]), first]
    return nz.any(axis=1) & (vals > 0)


def lattice_annulus(j, d, upper=None, half=True):
    """Integer vectors with 2^j <= |xi| < 2^(j+1) (and |xi| <= upper); one of each +-pair when ``half``."""
    lo, hi = float(2 ** j), float(2 ** (j + 1))
    R = 2 ** (j + 1)
    chunks = []
    rng = np.arange(-R, R + 1)
    for x0 in range(0 if half else -R, R + 1):
        if d == 1:
            rest = np.empty((1, 0), dtype=np.int64)
        else:
            rest = np.stack(np.meshgrid(*([rng] * (d - 1)), indexing="ij"), axis=-1).reshape(-1, d - 1)
        pts = np.concatenate([np.full((rest.shape[0], 1), x0), rest], axis=1).astype(np.int64)
        n2 = np.sum(pts.astype(float) ** 2, axis=1)
        mask = (n2 >= lo * lo) & (n2 < hi * hi)
        if upper is not None:
            mask &= n2 <= upper * upper
        if half:
            mask &= _first_nonzero_positive(pts)
        if mask.any():
            chunks.append(pts[mask])
    return np.concatenate(chunks) if chunks else np.empty((0, d), dtype=np.int64)


def sampled_annulus(j, d, upper=None, size=SAMPLE_SIZE):
    """Deterministic low-discrepancy subsample of the half annulus."""
    hi = 2.0 ** (j + 1)
    lo = 2.0 ** j
    u = qmc.Sobol(d, scramble=True, seed=j).random(size)
    pts = np.round((2.0 * u - 1.0) * hi).astype(np.int64)
    pts[:, 0] = np.abs(pts[:, 0])
    n2 = np.sum(pts.astype(float) ** 2, axis=1)
    mask = (n2 >= lo * lo) & (n2 < hi * hi) & _first_nonzero_positive(pts)
    if upper is not None:
        mask &= n2 <= upper * upper
    return np.unique(pts[mask], axis=0)


def annulus_frequencies(j, d, upper=None, exhaustive_cutoff=EXHAUSTIVE_CUTOFF, sample_size=SAMPLE_SIZE):
    if d == 1:
        top = 2 ** (j + 1) - 1 if upper is None else min(2 ** (j + 1) - 1, int(math.floor(upper)))
        return np.arange(2 ** j, top + 1, dtype=np.int64).reshape(-1, 1), "exhaustive"
    if exhaustive_cutoff is None or 2 ** (j + 1) <= exhaustive_cutoff:
        return lattice_annulus(j, d, upper), "exhaustive"
    return sampled_annulus(j, d, upper, sample_size), "sampled"


def _config_values(config, freqs):
    if config.d == 1 and freqs.shape[0] > 1 and np.all(np.diff(freqs[:, 0]) == 1):
        return consecutive_sums(config.points[:, 0], config.weights, int(freqs[0, 0]), freqs.shape[0], config.N)
    return exp_sums(config.points, config.weights, freqs, config.N)


def annulus_sup(source, j, exhaustive=True, sample_size=SAMPLE_SIZE):
    """Supremum of |transform| over the annulus 2^j <= |xi| < 2^(j+1) with a witness frequency."""
    if j < 0:
        raise InputError("annulus index must be nonnegative", j=j)
    d = source.d
    if isinstance(source, GridMeasure):
        if 2 ** (j + 1) > source.G // 2:
            raise InputError("annulus beyond the grid Nyquist band", j=j, G=source.G)
        freqs = lattice_annulus(j, d)
        values = np.abs(source.transform(freqs))
    elif isinstance(source, WeightedConfiguration):
        cutoff = None if exhaustive else EXHAUSTIVE_CUTOFF
        freqs, _ = annulus_frequencies(j, d, exhaustive_cutoff=cutoff, sample_size=sample_size)
        values = np.abs(_config_values(source, freqs))
    else:
        raise InputError("annulus_sup needs a configuration or a grid measure")
    if freqs.shape[0] == 0:
        return 0.0, Frequency((0,) * d)
    k = int(np.argmax(values))
    return float(values[k]), Frequency(tuple(freqs[k]))


def bound_constant_term(N, C):
    return C * N ** -0.5 * math.log(N) if N > 1 else 0.0


def calibrate_C(N, d, kappa=0.2, trials=50, seed=0, quantile=0.9, threads=1):
    """Empirical constant sup|sum| * sqrt(N)/log N over uniform random configurations."""
    if N < 2:
        raise InputError("calibration needs N >= 2", N=N)
    upper = N ** (1.0 + kappa)

    def one(t):
        rng = np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=(0xCA11B, t)))
        config = WeightedConfiguration.unit(rng.random((N, d)))
        top = 0.0
        for j in range(int(math.floor(math.log2(upper))) + 1):
            freqs, _ = annulus_frequencies(j, d, upper)
            if freqs.shape[0]:
                top = max(top, float(np.abs(_config_values(config, freqs)).max()))
        return top * math.sqrt(N) / math.log(N)

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        constants = list(pool.map(one, range(trials)))
    C = float(np.quantile(constants, quantile))
    logger.info("calibrated C=%.4g from %d pilot trials (N=%d, d=%d)", C, trials, N, d)
    return C


def _check_conjugate_symmetry(config, freqs):
    sample = freqs[: min(4, freqs.shape[0])]
    if sample.shape[0] == 0:
        return
    plus = exp_sums(config.points, config.weights, sample, config.N)
    minus = exp_sums(config.points, config.weights, -sample, config.N)
    if not np.allclose(minus, np.conj(plus), atol=1e-9):
        logger.error("conjugate symmetry failed on %s", sample.tolist())


def sweep(config, kappa=0.2, C=None, delta=0.0, lambda_=None, threads=None,
          exhaustive_cutoff=EXHAUSTIVE_CUTOFF, sample_size=SAMPLE_SIZE, calibration_trials=50):
    N = config.N
    if N == 0:
        raise InputError("cannot sweep an empty configuration")
    threads = settings.THREADS if threads is None else threads
    lambda_ = config.provenance.get("params", {}).get("lambda", 1.0) if lambda_ is None else lambda_
    provenance = {}
    if C is None:
        C = calibrate_C(max(N, 2), config.d, kappa, trials=calibration_trials, threads=threads)
        provenance["C_calibrated"] = True
    if not C > 0:
        raise InputError("C must be positive", C=C)
    upper = float(N) ** (1.0 + kappa)
    if config.radius_r > 0:
        other = (1.0 / config.radius_r) ** (1.0 + kappa)
        if abs(other - upper) > 0.5:
            logger.info("sweep covers |xi| <= N^(1+kappa) = %.4g; (1/r)^(1+kappa) = %.4g", upper, other)
    constant = bound_constant_term(N, C)
    top_j = int(math.floor(math.log2(upper))) if upper >= 1 else -1

    def scan(j):
        freqs, mode = annulus_frequencies(j, config.d, upper, exhaustive_cutoff, sample_size)
        if freqs.shape[0] == 0:
            return AnnulusRecord(j, 2.0 ** j, min(2.0 ** (j + 1), upper), 0, 0.0, (0,) * config.d, mode, 0.0), []
        values = np.abs(_config_values(config, freqs))
        norms = np.sqrt(np.sum(freqs.astype(float) ** 2, axis=1))
        bounds = constant + delta * norms ** (-lambda_ / 2.0)
        ratio = values / bounds if np.all(bounds > 0) else np.where(values > 0, np.inf, 0.0)
        k = int(np.argmax(values))
        bad = np.flatnonzero(values > bounds)
        record = AnnulusRecord(j, 2.0 ** j, min(2.0 ** (j + 1), upper), int(freqs.shape[0]), float(values[k]),
                               tuple(int(v) for v in freqs[k]), mode, float(np.max(ratio)))
        return record, [(tuple(int(v) for v in freqs[b]), float(values[b]), float(bounds[b])) for b in bad]

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        results = list(pool.map(scan, range(top_j + 1)))
    _check_conjugate_symmetry(config, np.array([r.argmax for r, _ in results if r.count], dtype=np.int64))
    annuli = tuple(r for r, _ in results)
    violating = tuple(v for _, vs in results for v in vs)
    report = SweepReport(N, kappa, float(C), delta, lambda_, upper, annuli, violating, provenance)
    logger.info("sweep N=%d: %d annuli, verdict=%s, max ratio %.3g", N, len(annuli), report.verdict,
                report.max_ratio)
    return report
