"""Trial batteries, concentration checks and the builtin demos."""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import pandas as pd
from scipy.stats import binomtest

import settings
import storage
from demos import (CURVES, DEMO_LAMBDA, DEMO_M, get_pattern, isosceles_layout, isosceles_rough, isosceles_surface,
                   linear_equation_family)
from dimension import box_dimension, fourier_dimension
from errors import ConstructionFailure, InputError, SalemError
from expsum import calibrate_C, exp_sums, sweep, weighted_exp_sum
from measures import GRID_FLOOR, bump_measure, perturb, support_distance
from models.configuration import ConstructionParams
from models.reports import TrialReport, TrialRow
from patterns import isosceles_functional, rough_tuples, violation_scan
from sampler import build, build_translational_family, wilson_interval

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
MIN_HOEFFDING_SAMPLES = 200
MIN_SPLIT_TRIALS = 50

_SECTIONS = {
    "pattern": {"id", "cells", "n", "d", "claimed_alpha"},
    "construction": {"M", "lambda", "kappa", "delta", "seed", "separation_s", "budget"},
    "sweep": {"C", "calibration_trials", "exhaustive_cutoff", "sample_size"},
    "dimension": {"box", "fourier", "fourier_samples"},
}
_TOP = {"schema_version", "trials", "grid_G", "perturbation", "out_dir", "threads", "artifacts"} | set(_SECTIONS)


def _strict(section, data, allowed):
    if not isinstance(data, dict):
        raise InputError(f"'{section}' must be an object")
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise InputError(f"unknown keys in '{section}'", keys=unknown)
    return data


@dataclass(frozen=True)
class ExperimentConfig:
    pattern: dict
    construction: ConstructionParams
    trials: int = 1
    sweep: dict = field(default_factory=dict)
    dimension: dict = field(default_factory=lambda: {"box": True, "fourier": False, "fourier_samples": 512})
    grid_G: int = 2048
    perturbation: bool = False
    out_dir: str = None
    threads: int = 1
    artifacts: bool = True
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        if self.trials < 1:
            raise InputError("trial count must be at least 1", trials=self.trials)
        if self.threads < 1:
            raise InputError("threads must be at least 1", threads=self.threads)

    @classmethod
    def from_dict(cls, data):
        data = _strict("config", data, _TOP)
        if data.get("schema_version") != SCHEMA_VERSION:
            raise InputError("unsupported schema_version", schema_version=data.get("schema_version"),
                             expected=SCHEMA_VERSION)
        for key in ("pattern", "construction"):
            if key not in data:
                raise InputError("missing required key", key=key)
        sections = {k: _strict(k, data.get(k, {}), allowed) for k, allowed in _SECTIONS.items()}
        c = sections["construction"]
        for key in ("M", "lambda"):
            if key not in c:
                raise InputError("missing required key", key=f"construction.{key}")
        if "id" not in sections["pattern"] and "cells" not in sections["pattern"]:
            raise InputError("pattern needs an 'id' or a 'cells' file")
        params = ConstructionParams(
            M=c["M"], lambda_=c["lambda"], kappa=c.get("kappa", 0.2), delta=c.get("delta", 0.0),
            seed=c.get("seed", 0), separation_s=c.get("separation_s"), budget=c.get("budget"),
        )
        dims = {"box": True, "fourier": False, "fourier_samples": 512, **sections["dimension"]}
        return cls(
            pattern=sections["pattern"], construction=params, trials=int(data.get("trials", 1)),
            sweep=sections["sweep"], dimension=dims, grid_G=int(data.get("grid_G", 2048)),
            perturbation=bool(data.get("perturbation", False)), out_dir=data.get("out_dir"),
            threads=int(data.get("threads", 1)), artifacts=bool(data.get("artifacts", True)),
        )

    def override(self, trials=None, seed=None, threads=None, out_dir=None):
        cfg = self
        if trials is not None:
            cfg = replace(cfg, trials=trials)
        if seed is not None:
            cfg = replace(cfg, construction=cfg.construction.with_seed(seed))
        if threads is not None:
            cfg = replace(cfg, threads=threads)
        if out_dir is not None:
            cfg = replace(cfg, out_dir=str(out_dir))
        return cfg

    def to_dict(self):
        c = self.construction
        return {
            "schema_version": self.schema_version,
            "pattern": dict(self.pattern),
            "construction": {"M": c.M, "lambda": c.lambda_, "kappa": c.kappa, "delta": c.delta, "seed": c.seed,
                             "separation_s": c.separation_s, "budget": c.budget},
            "trials": self.trials,
            "sweep": dict(self.sweep),
            "dimension": dict(self.dimension),
            "grid_G": self.grid_G,
            "perturbation": self.perturbation,
            "out_dir": self.out_dir,
            "threads": self.threads,
            "artifacts": self.artifacts,
        }


def load_config(path):
    return ExperimentConfig.from_dict(storage.read_json(path))


def pattern_from_spec(spec):
    if "cells" in spec:
        return storage.load_cells(spec["cells"], spec.get("n", 3), spec.get("claimed_alpha", 0.0))
    kwargs = {k: spec[k] for k in ("n", "d") if k in spec}
    return get_pattern(spec["id"], **kwargs)


# Battery plumbing

def _dimensions(config, dims):
    alpha = beta = float("nan")
    r = config.radius_r
    if dims.get("box", True) and r > 0 and config.N:
        scales = [r * 2 ** k for k in range(5) if r * 2 ** k <= 1.0]
        if len(scales) >= 4:
            alpha = box_dimension(config, scales, method="minkowski").value
    if dims.get("fourier", False) and r > 0 and config.N:
        beta = fourier_dimension(config, sample_size=int(dims.get("fourier_samples", 512))).value
    return alpha, beta


def _sweep_kwargs(params, sweep_cfg, C):
    return {
        "kappa": params.kappa, "C": C, "delta": params.delta, "lambda_": params.lambda_,
        "exhaustive_cutoff": sweep_cfg.get("exhaustive_cutoff", 1 << 12),
        "sample_size": sweep_cfg.get("sample_size", 1 << 16),
    }


def _pilot_C(params, d, sweep_cfg, threads, make_config=None):
    """Explicit C, or one calibrated at the N of a pilot build with the base seed."""
    C = sweep_cfg.get("C")
    if C is not None:
        return float(C)
    N = params.M
    if make_config is not None:
        try:
            N = make_config(params).N
        except SalemError as err:
            logger.warning("pilot build failed (%s); calibrating at N=M=%d", err.message, params.M)
    return calibrate_C(max(N, 2), d, params.kappa, trials=sweep_cfg.get("calibration_trials", 50),
                       seed=params.seed, threads=threads)


def _trial(t, params, make_config, check, sweep_kwargs, dims):
    seed = params.seed
    try:
        config = make_config(params)
        violations, extra = check(config)
        report = sweep(config, threads=1, **sweep_kwargs)
        alpha, beta = _dimensions(config, dims)
    except SalemError as err:
        logger.warning("trial %d (seed %d) failed: %s", t, seed, err.message)
        return TrialRow(t, seed, "failed", error=f"{type(err).__name__}: {err.message}"), None
    row = TrialRow(
        trial=t, seed=seed, status="ok", N=config.N, removed_count=config.removed_count,
        p_hat=float(config.provenance.get("p_hat", float("nan"))), sweep_verdict=report.verdict,
        sweep_max_ratio=report.max_ratio, violations=violations, alpha_hat=alpha, beta_hat=beta,
    )
    logger.info("trial %d: N=%d removed=%d violations=%d sweep=%s", t, config.N, config.removed_count,
                violations, report.verdict)
    return row, {"config": config, "sweep": report, **extra}


def run_battery(trials, base_params, make_config, check, sweep_kwargs, dims, threads=1):
    """Run independent trials with seeds base+t; stops once more than half have failed."""
    results = []
    failed = 0
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        futures = [
            pool.submit(_trial, t, base_params.with_seed(base_params.seed + t), make_config, check, sweep_kwargs, dims)
            for t in range(trials)
        ]
        for fut in futures:
            row, artifact = fut.result()
            failed += not row.ok
            if failed > trials / 2:
                for rest in futures:
                    rest.cancel()
                raise ConstructionFailure("more than half of the trials failed", failed=failed, trials=trials,
                                          last_error=row.error)
            results.append((row, artifact))
    return results


def _persist(report, results, out_dir, artifacts):
    if not out_dir:
        return
    out = storage.save_trial_report(report, out_dir)
    if not artifacts:
        return
    for row, art in results:
        if art is None:
            continue
        storage.save_configuration(art["config"], out / "trials" / f"trial-{row.trial:04d}.csv")
        storage.save_sweep(art["sweep"], out / "trials" / f"sweep-{row.trial:04d}.csv")


def _summary_extra(rows, C):
    ok = [r for r in rows if r.ok]
    passed = sum(r.sweep_verdict for r in ok)
    extra = {"C": C}
    if ok:
        extra["sweep_pass_ci"] = list(wilson_interval(passed, len(ok)))
        # one-sided test of pass-rate >= 0.9
        extra["sweep_pass_pvalue"] = float(binomtest(passed, len(ok), 0.9, alternative="less").pvalue)
    return extra


def _perturbation_extra(results, G):
    configs = [art["config"] for _, art in results if art is not None]
    if not configs:
        return {}
    table, spread = perturbation_check(configs, G)
    return {"runs": table.to_dict(orient="records"), "K_spread": spread}


def run_experiment(cfg):
    pattern = pattern_from_spec(cfg.pattern)
    params = cfg.construction
    margin = 0.0

    def make(p):
        return build(p, pattern)

    def check(config):
        return len(violation_scan(config, pattern, params.separation, margin, budget=params.budget)), {}

    C = _pilot_C(params, pattern.d, cfg.sweep, cfg.threads, make)
    results = run_battery(cfg.trials, params, make, check,
                          _sweep_kwargs(params, cfg.sweep, C), cfg.dimension, cfg.threads)
    rows = tuple(row for row, _ in results)
    extra = _summary_extra(rows, C)
    if cfg.perturbation:
        extra["perturbation"] = _perturbation_extra(results, cfg.grid_G)
    report = TrialReport(rows, cfg.to_dict(), extra)
    _persist(report, results, cfg.out_dir, cfg.artifacts)
    logger.info("experiment %s: %d trials, verdict=%s", pattern.pattern_id, cfg.trials, report.verdict)
    return report


# Concentration checks

def _tail_table(samples, t_grid, bound, mean):
    samples = np.asarray(samples)
    if samples.shape[0] < MIN_HOEFFDING_SAMPLES:
        raise InputError("need at least 200 Monte Carlo samples", samples=samples.shape[0])
    centre = samples.mean() if mean is None else mean
    dev = np.abs(samples - centre)
    t_grid = np.asarray(t_grid, dtype=float)
    empirical = np.array([(dev >= t).mean() for t in t_grid])
    bounds = np.array([bound(t) for t in t_grid])
    table = pd.DataFrame({"t": t_grid, "empirical": empirical, "bound": bounds, "exceeds": empirical > bounds})
    if table["exceeds"].any():
        logger.error("empirical tail exceeds the analytic bound at t=%s", table.loc[table["exceeds"], "t"].tolist())
    return table


def hoeffding_check(A, samples, t_grid, mean=None):
    """Empirical P(|S - ES| >= t) against 4 exp(-t^2 / (2 sum A_i^2))."""
    s2 = float(np.sum(np.asarray(A, dtype=float) ** 2))

    def bound(t):
        if s2 == 0:
            return 0.0 if t > 0 else 1.0
        return min(1.0, 4.0 * math.exp(-t * t / (2.0 * s2)))

    return _tail_table(samples, t_grid, bound, mean)


def mcdiarmid_check(A, samples, t_grid, mean=None):
    """Same table for a function with bounded differences A_i: 4 exp(-2 t^2 / sum A_i^2)."""
    s2 = float(np.sum(np.asarray(A, dtype=float) ** 2))

    def bound(t):
        if s2 == 0:
            return 0.0 if t > 0 else 1.0
        return min(1.0, 4.0 * math.exp(-2.0 * t * t / s2))

    return _tail_table(samples, t_grid, bound, mean)


def phase_sum_samples(A, samples, seed=0):
    """Samples of sum_i A_i e(theta_i) with independent uniform phases."""
    A = np.asarray(A, dtype=float)
    rng = np.random.default_rng(seed)
    out = np.empty(samples, dtype=complex)
    block = max(1, (1 << 22) // max(1, A.size))
    for start in range(0, samples, block):
        k = min(block, samples - start)
        out[start:start + k] = np.exp(2j * np.pi * rng.random((k, A.size))) @ A
    return out


def _split_parts(config, freqs):
    """F from the stored weights, G over every candidate at its stratum weight, H over the removed ones."""
    scale = float(config.provenance.get("weight_scale", 1.0))
    labels = np.maximum(config.strata, 0)
    top = int(labels.max()) if config.N else 0
    stratum_weights = np.asarray(config.provenance.get("stratum_weights", [1.0] * (top + 1)), dtype=float)
    removed = np.asarray(config.provenance.get("removed_points", []), dtype=float).reshape(-1, config.d)
    A_n = float(stratum_weights[top])
    F = np.array([weighted_exp_sum(config, xi) for xi in freqs]) * (config.N / scale)
    H = exp_sums(removed, np.full(removed.shape[0], A_n), freqs, 1)
    candidates = np.concatenate([config.points, removed])
    G = exp_sums(candidates, np.concatenate([stratum_weights[labels], np.full(removed.shape[0], A_n)]), freqs, 1)
    return F, G, H, int((labels == top).sum()) + removed.shape[0]


def split_sum_check(configs, freqs=None, C=1.0, count=20, seed=0):
    """Split F = G - H over stratified trials and the cross-trial behaviour of H."""
    configs = list(configs)
    if len(configs) < MIN_SPLIT_TRIALS:
        raise InputError("need at least 50 trials", trials=len(configs))
    d = configs[0].d
    M = int(configs[0].provenance.get("M", configs[0].N))
    if freqs is None:
        rng = np.random.default_rng(seed)
        upper = max(2, int(M ** 1.2))
        freqs = rng.integers(1, upper + 1, size=(count, d)) * rng.choice([-1, 1], size=(count, d))
    freqs = np.atleast_2d(np.asarray(freqs, dtype=np.int64))
    Hs, recon = [], 0.0
    for config in configs:
        F, G, H, _ = _split_parts(config, freqs)
        recon = max(recon, float(np.max(np.abs(G - H - F) / np.maximum(1.0, np.abs(G)))))
        Hs.append(H)
    Hs = np.array(Hs)
    mean = Hs.mean(axis=0)
    se_re = Hs.real.std(axis=0, ddof=1) / math.sqrt(len(configs))
    se_im = Hs.imag.std(axis=0, ddof=1) / math.sqrt(len(configs))
    z_re = np.where(se_re > 0, np.abs(mean.real) / np.where(se_re > 0, se_re, 1.0), 0.0)
    z_im = np.where(se_im > 0, np.abs(mean.imag) / np.where(se_im > 0, se_im, 1.0), 0.0)
    table = pd.DataFrame({
        **{f"xi{k}": freqs[:, k] for k in range(d)},
        "mean_re": mean.real, "mean_im": mean.imag, "z_re": z_re, "z_im": z_im,
        "within_3sigma": (z_re <= 3.0) & (z_im <= 3.0),
    })
    bound = C * math.sqrt(M) * math.sqrt(math.log(M))
    tails = np.max(np.abs(Hs - mean[None, :]), axis=1)
    pass_rate = float(np.mean(tails <= bound))
    if recon > 1e-10:
        logger.error("split reconstruction error %.3g", recon)
    return {
        "table": table,
        "reconstruction_error": recon,
        "bound": bound,
        "tail_pass_rate": pass_rate,
        "max_abs_H": float(np.max(np.abs(Hs))) if Hs.size else 0.0,
        "trials": len(configs),
    }


def perturbation_record(mu0, config, gamma=None, radius=None):
    """One perturbation run: K_d ratio and support drift against r + 2/G."""
    G = mu0.G
    r = max(config.radius_r, GRID_FLOOR / G) if radius is None else radius
    gamma = config.provenance.get("params", {}).get("lambda", 0.5) if gamma is None else gamma
    mu, diag = perturb(mu0, config, gammas=(gamma,), radius=r)
    stats = diag["gammas"][gamma]
    drift = support_distance(mu, mu0, 1e-9)
    return {
        "N": config.N, "r": r, "gamma": gamma, "K_d": stats["K_d"], "chain_ok": stats["chain_ok"],
        "support_distance": drift, "support_ok": drift <= r + 2.0 / G + 1e-12,
    }


def perturbation_check(configs, G=2048, gamma=None, radius=None):
    """K_d across runs; stable when max/min stays below 2."""
    mu0 = bump_measure([0.5] * configs[0].d, 0.45, G, configs[0].d)
    table = pd.DataFrame([perturbation_record(mu0, c, gamma, radius) for c in configs])
    K = table["K_d"].to_numpy()
    spread = float(K.max() / K.min()) if K.size and K.min() > 0 else float("inf")
    return table, spread


# Demos

def demo_linear_equations(coeff_bound, S, params, n=3, d=1, trials=1, C=None, period_m=None, threads=1,
                          out_dir=None):
    if params.lambda_ > d / (n - 1) + 0.05:
        raise ConstructionFailure("lambda exceeds d/(n-1) for linear equations", lambda_=params.lambda_,
                                  limit=d / (n - 1))
    patterns, filters, covered = linear_equation_family(n, d, coeff_bound, S, params.radius, period_m)
    def make(p):
        return build_translational_family(p, patterns, point_filters=filters)

    C = _pilot_C(params, d, {"C": C}, threads, make)

    def check(config):
        hits = 0
        for P in patterns:
            hits += len(violation_scan(config, P, params.separation, 0.0, budget=params.budget))
        for Z in filters:
            hits += int(rough_tuples(config.points, Z, 0.0, params.budget).shape[0])
        return hits, {}

    results = run_battery(trials, params, make, check, _sweep_kwargs(params, {}, C), {"box": True}, threads)
    rows = tuple(row for row, _ in results)
    extra = {
        **_summary_extra(rows, C), "coeff_bound": coeff_bound, "S": [list(np.atleast_1d(s)) for s in S],
        "equations": covered, "period_m": patterns[0].period_m if patterns else None,
    }
    config = {"demo": "linear-eq", "n": n, "d": d, "params": params.to_dict(), "trials": trials}
    report = TrialReport(rows, config, extra)
    _persist(report, results, out_dir, True)
    return report


def isosceles_min_abs(gamma, config, cubes):
    """min |F(t1, t2, t3)| over retained t2 in the middle cube, t3 left, t1 right."""
    pts = config.points[:, 0]
    middle, left, right = (pts[c.contains(config.points)] for c in cubes)
    if not (middle.size and left.size and right.size):
        return float("inf")
    best = float("inf")
    for t2 in middle:
        F = isosceles_functional(gamma, right[:, None], t2, left[None, :])
        best = min(best, float(np.min(np.abs(F))))
    return best


def demo_isosceles(curve="parabola", params=None, route="surface", trials=1, C=None, threads=1, out_dir=None):
    if curve not in CURVES:
        raise InputError("unknown curve", curve=curve, known=sorted(CURVES))
    params = params or ConstructionParams(M=DEMO_M["isosceles"], lambda_=DEMO_LAMBDA["isosceles"])
    if route == "surface":
        if params.lambda_ > 4.0 / 9.0 + 1e-12:
            raise InputError("the surface route needs lambda <= 4/9", lambda_=params.lambda_)
        pattern = isosceles_surface(curve)
    elif route == "rough":
        pattern = isosceles_rough(curve, params.radius)
    else:
        raise InputError("route must be 'surface' or 'rough'", route=route)
    gamma = CURVES[curve]
    cubes = isosceles_layout(gamma)["cubes"]
    def make(p):
        return build(p, pattern)

    def check(config):
        hits = len(violation_scan(config, pattern, params.separation, 0.0, budget=params.budget))
        smallest = isosceles_min_abs(gamma, config, cubes)
        return hits + int(smallest == 0.0), {"min_abs_F": smallest}

    C = _pilot_C(params, 1, {"C": C}, threads, make)
    results = run_battery(trials, params, make, check, _sweep_kwargs(params, {}, C),
                          {"box": True}, threads)
    rows = tuple(row for row, _ in results)
    extra = {
        **_summary_extra(rows, C), "curve": curve, "route": route,
        "min_abs_F": [art["min_abs_F"] if art else None for _, art in results],
    }
    config = {"demo": f"isosceles-{curve}", "route": route, "params": params.to_dict(), "trials": trials}
    report = TrialReport(rows, config, extra)
    _persist(report, results, out_dir, True)
    return report


def default_out_dir(name):
    return str(Path(settings.OUT_DIR) / name)
