from dataclasses import asdict, dataclass, field

import numpy as np

from errors import InputError


@dataclass(frozen=True)
class AnnulusRecord:
    j: int
    lo: float
    hi: float
    count: int
    sup: float
    argmax: tuple
    mode: str
    max_ratio: float

    def to_dict(self):
        return {**asdict(self), "argmax": list(self.argmax)}


@dataclass(frozen=True)
class SweepReport:
    N: int
    kappa: float
    C: float
    delta: float
    lambda_: float
    xi_max: float
    annuli: tuple
    violating: tuple = ()
    provenance: dict = field(default_factory=dict)

    @property
    def verdict(self):
        return len(self.violating) == 0

    @property
    def sup(self):
        return max((a.sup for a in self.annuli), default=0.0)

    @property
    def max_ratio(self):
        return max((a.max_ratio for a in self.annuli), default=0.0)

    def csv_rows(self):
        rows = []
        for a in self.annuli:
            row = {"j": a.j, "lo": a.lo, "hi": a.hi, "count": a.count, "sup": a.sup, "mode": a.mode}
            for k, v in enumerate(a.argmax):
                row[f"argmax{k}"] = v
            rows.append(row)
        return rows

    def to_dict(self):
        return {
            "verdict": self.verdict,
            "N": self.N,
            "kappa": self.kappa,
            "C": self.C,
            "delta": self.delta,
            "lambda": self.lambda_,
            "xi_max": self.xi_max,
            "annuli": [a.to_dict() for a in self.annuli],
            "violating": [{"xi": list(x), "value": v, "bound": b} for x, v, b in self.violating],
            "provenance": self.provenance,
        }


@dataclass(frozen=True)
class DimensionEstimate:
    kind: str
    value: float
    scales: tuple
    table: tuple
    residual: float
    notes: tuple = ()

    def __post_init__(self):
        if len(self.table) < 4:
            raise InputError("a dimension table needs at least four scales", scales=len(self.table))

    def to_dict(self):
        return {
            "kind": self.kind,
            "value": self.value,
            "scales": list(self.scales),
            "table": [dict(row) for row in self.table],
            "residual": self.residual,
            "notes": list(self.notes),
        }


TRIAL_COLUMNS = (
    "trial", "seed", "status", "N", "removed_count", "p_hat", "sweep_verdict",
    "sweep_max_ratio", "violations", "alpha_hat", "beta_hat", "error",
)


@dataclass(frozen=True)
class TrialRow:
    trial: int
    seed: int
    status: str
    N: int = 0
    removed_count: int = 0
    p_hat: float = float("nan")
    sweep_verdict: bool = False
    sweep_max_ratio: float = float("nan")
    violations: int = -1
    alpha_hat: float = float("nan")
    beta_hat: float = float("nan")
    error: str = ""

    @property
    def ok(self):
        return self.status == "ok"

    @property
    def passed(self):
        return self.ok and self.sweep_verdict and self.violations == 0

    def to_dict(self):
        return asdict(self)


def aggregate(rows):
    """Aggregate statistics; a pure function of the per-trial rows."""
    ok = [r for r in rows if r.ok]
    ratios = np.array([r.sweep_max_ratio for r in ok if np.isfinite(r.sweep_max_ratio)])
    quantiles = {}
    if ratios.size:
        for q in (0.5, 0.9, 0.99):
            quantiles[f"q{int(q * 100)}"] = float(np.quantile(ratios, q))
    return {
        "trials": len(rows),
        "failed": len(rows) - len(ok),
        "pass_rate": (sum(r.passed for r in rows) / len(rows)) if rows else 0.0,
        "sweep_pass_rate": (sum(r.sweep_verdict for r in ok) / len(ok)) if ok else 0.0,
        "violation_free": all(r.violations == 0 for r in ok),
        "max_ratio_quantiles": quantiles,
    }


@dataclass(frozen=True)
class TrialReport:
    rows: tuple
    config: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    @property
    def summary(self):
        return aggregate(self.rows)

    @property
    def verdict(self):
        s = self.summary
        return s["failed"] == 0 and s["violation_free"] and s["sweep_pass_rate"] >= 0.9

    def to_dict(self):
        return {"config": self.config, "aggregate": self.summary, "verdict": self.verdict, "extra": self.extra}
