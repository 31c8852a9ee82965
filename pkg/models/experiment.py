import json

from database import db


class Experiment(db.Model):
    id = db.Column(db.Integer, primary_key=True)
    name = db.Column(db.String(100), nullable=False)
    kind = db.Column(db.String(40), nullable=False)
    created_at = db.Column(db.DateTime, nullable=False, default=db.func.current_timestamp())
    verdict = db.Column(db.Boolean, default=False)
    out_dir = db.Column(db.String(300))
    config_json = db.Column(db.Text, nullable=False, default="{}")
    aggregate_json = db.Column(db.Text, nullable=False, default="{}")
    trials = db.relationship("Trial", backref="experiment", lazy=True, cascade="all, delete-orphan",
                             order_by="Trial.trial")

    def to_dict(self, with_trials=False):
        payload = {
            "id": self.id,
            "name": self.name,
            "kind": self.kind,
            # ISO 8601 string for the JSON body
            "created_at": self.created_at.isoformat() if self.created_at is not None else None,
            "verdict": self.verdict,
            "out_dir": self.out_dir,
            "config": json.loads(self.config_json),
            "aggregate": json.loads(self.aggregate_json),
        }
        if with_trials:
            payload["trials"] = [t.to_dict() for t in self.trials]
        return payload


class Trial(db.Model):
    id = db.Column(db.Integer, primary_key=True)
    experiment_id = db.Column(db.Integer, db.ForeignKey("experiment.id"), nullable=False)
    trial = db.Column(db.Integer, nullable=False)
    # u64 seeds overflow signed SQL integers
    seed = db.Column(db.String(24), nullable=False)
    status = db.Column(db.String(20), nullable=False)
    N = db.Column(db.Integer, default=0)
    removed_count = db.Column(db.Integer, default=0)
    p_hat = db.Column(db.Float)
    sweep_verdict = db.Column(db.Boolean, default=False)
    sweep_max_ratio = db.Column(db.Float)
    violations = db.Column(db.Integer, default=-1)
    alpha_hat = db.Column(db.Float)
    beta_hat = db.Column(db.Float)
    error = db.Column(db.String(300))

    @classmethod
    def from_row(cls, row):
        fields = row.to_dict()
        for key in ("p_hat", "sweep_max_ratio", "alpha_hat", "beta_hat"):
            if fields[key] != fields[key]:
                fields[key] = None
        fields["error"] = fields["error"][:300]
        fields["seed"] = str(fields["seed"])
        return cls(**fields)

    def to_dict(self):
        return {
            "trial": self.trial,
            "seed": int(self.seed),
            "status": self.status,
            "N": self.N,
            "removed_count": self.removed_count,
            "p_hat": self.p_hat,
            "sweep_verdict": self.sweep_verdict,
            "sweep_max_ratio": self.sweep_max_ratio,
            "violations": self.violations,
            "alpha_hat": self.alpha_hat,
            "beta_hat": self.beta_hat,
            "error": self.error,
        }
