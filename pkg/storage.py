import json
import logging
import struct
from fractions import Fraction
from pathlib import Path

import numpy as np
import pandas as pd

from errors import InputError
from models.configuration import WeightedConfiguration
from models.measure import GridMeasure
from models.patterns import RoughPattern
from models.reports import TRIAL_COLUMNS, TrialReport, TrialRow, aggregate
from torus import cube

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"
MEASURE_MAGIC = b"SFGM"
TRIALS_CSV = "trials.csv"
AGGREGATE_JSON = "aggregate.json"


def _default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, (np.ndarray, tuple, set)):
        return list(o.tolist() if isinstance(o, np.ndarray) else o)
    if isinstance(o, (np.bool_,)):
        return bool(o)
    if isinstance(o, Fraction):
        return str(o)
    return str(o)


def dumps(payload):
    return json.dumps(payload, default=_default, sort_keys=True, indent=2)


def write_json(path, payload):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(payload) + "\n", encoding="utf-8")
    return path


def read_json(path):
    path = Path(path)
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as e:
        raise InputError("file not found", path=str(path)) from e
    except json.JSONDecodeError as e:
        raise InputError("invalid JSON", path=str(path), detail=str(e)) from e


def sidecar(path):
    path = Path(path)
    return path.with_name(path.name + ".json")


# Point sets

def save_configuration(config, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    df = pd.DataFrame(config.points, columns=[f"x{k}" for k in range(config.d)])
    df["w"] = config.weights
    df.to_csv(path, index=False, float_format=FLOAT_FORMAT)
    write_json(sidecar(path), config.to_dict())
    logger.info("wrote %d points to %s", config.N, path)
    return path


def load_configuration(path, radius_r=None):
    """Point CSV with header x0..x{d-1}[,w]; r comes from the sidecar when present."""
    path = Path(path)
    try:
        df = pd.read_csv(path)
    except FileNotFoundError as e:
        raise InputError("file not found", path=str(path)) from e
    coords = [c for c in df.columns if c.startswith("x")]
    expected = [f"x{k}" for k in range(len(coords))]
    if not coords or coords != expected or set(df.columns) - set(coords) - {"w"}:
        raise InputError("point CSV header must be x0,...,x{d-1}[,w]", columns=list(df.columns))
    points = df[coords].to_numpy(dtype=float)
    if not np.all(np.isfinite(points)):
        raise InputError("non-finite coordinate in point CSV", path=str(path))
    weights = df["w"].to_numpy(dtype=float) if "w" in df.columns else np.ones(len(df))
    meta = read_json(sidecar(path)) if sidecar(path).exists() else {}
    r = meta.get("r", 0.0) if radius_r is None else radius_r
    window = meta.get("window")
    if window:
        window = tuple(cube(c["center"], c["sidelength"]) for c in window)
    return WeightedConfiguration(len(coords), points, weights, r or 0.0,
                                 removed_count=meta.get("removed_count", 0),
                                 provenance=meta.get("provenance", {}), window=window or None)


# Grid measures

def save_measure(mu, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as fh:
        fh.write(MEASURE_MAGIC)
        fh.write(struct.pack("<ii", mu.d, mu.G))
        fh.write(np.ascontiguousarray(mu.density, dtype="<f8").tobytes(order="C"))
    write_json(sidecar(path), mu.to_dict())
    return path


def load_measure(path):
    path = Path(path)
    try:
        raw = path.read_bytes()
    except FileNotFoundError as e:
        raise InputError("file not found", path=str(path)) from e
    if raw[:4] != MEASURE_MAGIC or len(raw) < 12:
        raise InputError("not a grid measure file", path=str(path))
    d, G = struct.unpack("<ii", raw[4:12])
    if d < 1 or G < 2 or len(raw) != 12 + 8 * G ** d:
        raise InputError("grid measure header does not match the payload", d=d, G=G, size=len(raw))
    density = np.frombuffer(raw[12:], dtype="<f8").reshape((G,) * d)
    meta = read_json(sidecar(path)) if sidecar(path).exists() else {}
    return GridMeasure(d, G, density.copy(), meta.get("provenance", {}))


# Rough pattern cell lists

def save_cells(Z, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    body = "\n".join(str(int(c)) for c in Z.cells)
    path.write_text(f"{Z.dn} {Z.g}\n" + (body + "\n" if body else ""), encoding="utf-8")
    return path


def load_cells(path, n, claimed_alpha=0.0, pattern_id=None):
    """Cell-list file: header ``dn g`` then one linear cell index per line."""
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").split()
    except FileNotFoundError as e:
        raise InputError("file not found", path=str(path)) from e
    if len(lines) < 2:
        raise InputError("cell list needs a 'dn g' header", path=str(path))
    try:
        dn, g = int(lines[0]), int(lines[1])
        cells = np.array([int(v) for v in lines[2:]], dtype=np.int64)
    except ValueError as e:
        raise InputError("cell list entries must be integers", path=str(path)) from e
    if dn % n:
        raise InputError("dn is not a multiple of the arity", dn=dn, n=n)
    return RoughPattern(n, dn // n, g, cells, claimed_alpha=claimed_alpha, empty=cells.size == 0,
                        pattern_id=pattern_id or path.stem)


# Sweep reports

def save_sweep(report, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame(report.csv_rows()).to_csv(path, index=False, float_format=FLOAT_FORMAT)
    write_json(sidecar(path), report.to_dict())
    return path


# Trial reports

def save_trial_report(report, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    df = pd.DataFrame([row.to_dict() for row in report.rows], columns=list(TRIAL_COLUMNS))
    df.to_csv(out / TRIALS_CSV, index=False, float_format=FLOAT_FORMAT, na_rep="nan")
    write_json(out / AGGREGATE_JSON, report.to_dict())
    return out


def _row_from_record(rec):
    return TrialRow(
        trial=int(rec["trial"]),
        seed=int(rec["seed"]),
        status=str(rec["status"]),
        N=int(rec["N"]),
        removed_count=int(rec["removed_count"]),
        p_hat=float(rec["p_hat"]),
        sweep_verdict=str(rec["sweep_verdict"]) == "True",
        sweep_max_ratio=float(rec["sweep_max_ratio"]),
        violations=int(rec["violations"]),
        alpha_hat=float(rec["alpha_hat"]),
        beta_hat=float(rec["beta_hat"]),
        error="" if pd.isna(rec["error"]) else str(rec["error"]),
    )


def load_trial_report(out_dir):
    """Reload a battery; the stored aggregate must match the one recomputed from the rows."""
    out = Path(out_dir)
    stored = read_json(out / AGGREGATE_JSON)
    try:
        df = pd.read_csv(out / TRIALS_CSV, dtype={"status": str, "error": str, "sweep_verdict": str},
                         keep_default_na=False)
    except FileNotFoundError as e:
        raise InputError("file not found", path=str(out / TRIALS_CSV)) from e
    missing = [c for c in TRIAL_COLUMNS if c not in df.columns]
    if missing:
        raise InputError("trial CSV is missing columns", missing=missing)
    rows = tuple(_row_from_record(rec) for rec in df.to_dict(orient="records"))
    recomputed = json.loads(dumps(aggregate(rows)))
    if recomputed != stored.get("aggregate"):
        raise InputError("stored aggregate does not match the per-trial rows", path=str(out))
    return TrialReport(rows, stored.get("config", {}), stored.get("extra", {}))
