import functools
import logging
import sys
from pathlib import Path

import click
from flask import Flask, jsonify
from flasgger import Swagger

import settings
import storage
from database import db
from demos import DEMO_LAMBDA, DEMO_M, get_pattern
from dimension import box_dimension, content_surrogate, fourier_dimension
from errors import InputError, SalemError
from expsum import sweep as run_sweep
from harness import (ExperimentConfig, default_out_dir, demo_isosceles, demo_linear_equations, load_config,
                     pattern_from_spec, run_experiment)
from measures import geometric_schedule, salem_iterate
from models.configuration import ConstructionParams
from models.experiment import Experiment, Trial
from patterns import violation_scan
from sampler import build

logging.basicConfig(level=settings.LOG_LEVEL, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
logger = logging.getLogger(__name__)

app = Flask(__name__)

app.config['SQLALCHEMY_DATABASE_URI'] = settings.DATABASE_URI

template = {
  "swagger": "2.0",
  "info": {
    "title": "Salem Sets - Experimentos",
    "description": "Consulta dos experimentos de Monte Carlo gravados pela linha de comando",
    "version": "1.0.0"
  },
  "tags": [
    {
      "name": "Experimentos",
      "description": "Baterias de tentativas e seus resultados"
    }
  ]
}

swagger = Swagger(app, template=template)

db.init_app(app)


@app.errorhandler(SalemError)
def handle_salem_error(err):
  return jsonify(err.to_dict()), err.status_code


@app.route('/experiments', methods=["GET"])
def list_experiments():
  """
    Listar experimentos gravados
    ---
    tags:
      - Experimentos
    responses:
      200:
        description: Lista de experimentos, do mais recente ao mais antigo
        schema:
          type: array
          items:
            type: object
            properties:
              id:
                type: integer
                example: 1
              name:
                type: string
                example: ap3
              kind:
                type: string
                example: montecarlo
              verdict:
                type: boolean
                example: true
    """
  experiments = Experiment.query.order_by(Experiment.id.desc())
  return jsonify([e.to_dict() for e in experiments]), 200


@app.route('/experiment/<int:id_experiment>', methods=["GET"])
def get_experiment(id_experiment):
  """
    Obter um experimento pelo ID, com as tentativas
    ---
    tags:
      - Experimentos
    parameters:
      - name: id_experiment
        in: path
        type: integer
        required: true
        description: ID do experimento
    responses:
      200:
        description: Experimento encontrado
        schema:
          type: object
      404:
        description: Experimento não encontrado
    """
  experiment = db.session.get(Experiment, id_experiment)

  if experiment:
    return jsonify(experiment.to_dict(with_trials=True)), 200

  return jsonify({"error": "Experiment not found"}), 404


# CLI

def exit_codes(command):
  """Map SalemError to its exit code; a command returns True for a passing verdict."""
  @functools.wraps(command)
  def wrapper(*args, **kwargs):
    try:
      passed = command(*args, **kwargs)
    except SalemError as err:
      click.echo(storage.dumps(err.to_dict()), err=True)
      sys.exit(err.exit_code)
    sys.exit(0 if passed else 1)
  return wrapper


def record_experiment(name, kind, report, out_dir):
  db.create_all()
  experiment = Experiment(
    name=name, kind=kind, verdict=report.verdict, out_dir=out_dir,
    config_json=storage.dumps(report.config), aggregate_json=storage.dumps(report.summary),
  )
  experiment.trials = [Trial.from_row(row) for row in report.rows]
  db.session.add(experiment)
  db.session.commit()
  return experiment


def _pattern(pattern_id, cells, n, d):
  if cells:
    return pattern_from_spec({"cells": cells, "n": n})
  return get_pattern(pattern_id, n=n, d=d)


@app.cli.command("init-db")
def init_db():
  """Create the experiment tables."""
  db.create_all()
  click.echo("database ready")


@app.cli.command("build")
@click.option("--pattern", "pattern_id", default="ap3")
@click.option("--cells", type=click.Path(exists=True), default=None)
@click.option("--n", type=int, default=3)
@click.option("--d", type=int, default=1)
@click.option("--M", "M", type=int, required=True)
@click.option("--lambda", "lambda_", type=float, required=True)
@click.option("--seed", type=int, default=0)
@click.option("--out", type=click.Path(), default="config.csv")
@exit_codes
def build_command(pattern_id, cells, n, d, M, lambda_, seed, out):
  """Build one pattern-avoiding configuration and write it as CSV plus sidecar."""
  pattern = _pattern(pattern_id, cells, n, d)
  config = build(ConstructionParams(M=M, lambda_=lambda_, seed=seed), pattern)
  storage.save_configuration(config, out)
  click.echo(storage.dumps({"N": config.N, "removed_count": config.removed_count, "r": config.radius_r,
                            "p_hat": config.provenance.get("p_hat"), "out": out}))
  return True


@app.cli.command("sweep")
@click.option("--input", "input_path", type=click.Path(exists=True), required=True)
@click.option("--kappa", type=float, default=0.2)
@click.option("--C", "C", type=float, default=None)
@click.option("--delta", type=float, default=0.0)
@click.option("--threads", type=int, default=settings.THREADS)
@click.option("--out", type=click.Path(), default="sweep.csv")
@exit_codes
def sweep_command(input_path, kappa, C, delta, threads, out):
  """Frequency sweep of a stored configuration; exit 1 when the bound is violated."""
  config = storage.load_configuration(input_path)
  report = run_sweep(config, kappa=kappa, C=C, delta=delta, threads=threads)
  storage.save_sweep(report, out)
  click.echo(storage.dumps({"verdict": report.verdict, "C": report.C, "max_ratio": report.max_ratio,
                            "violating": len(report.violating)}))
  return report.verdict


@app.cli.command("check")
@click.option("--input", "input_path", type=click.Path(exists=True), required=True)
@click.option("--pattern", "pattern_id", default="ap3")
@click.option("--cells", type=click.Path(exists=True), default=None)
@click.option("--n", type=int, default=3)
@click.option("--margin", type=float, default=0.0)
@click.option("--separation", type=float, default=None)
@exit_codes
def check_command(input_path, pattern_id, cells, n, margin, separation):
  """Scan a stored configuration for pattern tuples; exit 1 when any is found."""
  config = storage.load_configuration(input_path)
  pattern = _pattern(pattern_id, cells, n, config.d)
  s = separation or config.radius_r
  if not s:
    raise InputError("no separation given and the configuration has no radius")
  found = violation_scan(config, pattern, s, margin)
  click.echo(storage.dumps({"violations": len(found), "tuples": [list(t) for t in found[:20]]}))
  return not found


@app.cli.command("estimate-dim")
@click.option("--input", "input_path", type=click.Path(exists=True), required=True)
@click.option("--kind", type=click.Choice(["box", "fourier"]), default="box")
@click.option("--method", type=click.Choice(["slope", "minkowski"]), default="slope")
@click.option("--scale", "scales", type=float, multiple=True)
@exit_codes
def estimate_dim_command(input_path, kind, method, scales):
  """Box-counting or Fourier dimension of a stored configuration or grid measure."""
  if input_path.endswith(".sfgm"):
    source = storage.load_measure(input_path)
  else:
    source = storage.load_configuration(input_path)
  if kind == "box":
    r = getattr(source, "radius_r", 0.0)
    if not scales and not r:
      raise InputError("pass --scale at least four times or a configuration with a radius")
    scales = scales or [r * 2 ** k for k in range(5)]
    estimate = box_dimension(source, scales, method=method)
    payload = estimate.to_dict()
    if r:
      payload["content"] = content_surrogate(source, estimate.value)
  else:
    payload = fourier_dimension(source).to_dict()
  click.echo(storage.dumps(payload))
  return True


@app.cli.command("montecarlo")
@click.option("--config", "config_path", type=click.Path(exists=True), required=True)
@click.option("--trials", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--threads", type=int, default=None)
@click.option("--out", type=click.Path(), default=None)
@exit_codes
def montecarlo_command(config_path, trials, seed, threads, out):
  """Run a trial battery from a JSON config and store the aggregate."""
  cfg = load_config(config_path).override(trials=trials, seed=seed, threads=threads, out_dir=out)
  if cfg.out_dir is None:
    cfg = cfg.override(out_dir=default_out_dir(Path(config_path).stem))
  report = run_experiment(cfg)
  record_experiment(cfg.pattern.get("id", "cells"), "montecarlo", report, cfg.out_dir)
  click.echo(storage.dumps(report.to_dict()))
  return report.verdict


@app.cli.command("iterate")
@click.option("--pattern", "pattern_id", default="ap3")
@click.option("--lambda", "lambda_", type=float, required=True)
@click.option("--M0", "M0", type=int, default=64)
@click.option("--stages", type=int, default=3)
@click.option("--factor", type=float, default=8.0)
@click.option("--G", "G", type=int, default=2048)
@click.option("--C", "C", type=float, default=4.0)
@click.option("--seed", type=int, default=0)
@click.option("--threads", type=int, default=settings.THREADS)
@click.option("--out", type=click.Path(), default=None)
@exit_codes
def iterate_command(pattern_id, lambda_, M0, stages, factor, G, C, seed, threads, out):
  """Multi-stage refinement; every stage's measure is written as an SFGM file."""
  pattern = get_pattern(pattern_id)
  schedule = geometric_schedule(lambda_, M0, stages, factor=factor, seed=seed)
  result = salem_iterate(pattern, schedule, G, C=C, threads=threads)
  out_dir = Path(out or default_out_dir(f"iterate-{pattern_id}"))
  for stage in result:
    storage.save_measure(stage.measure, out_dir / f"stage-{stage.stage:02d}.sfgm")
  storage.write_json(out_dir / "stages.json", [stage.to_dict() for stage in result])
  click.echo(storage.dumps([stage.to_dict() for stage in result]))
  return all(stage.sweep.verdict and stage.violations == 0 for stage in result)


@app.cli.command("demo")
@click.argument("name", type=click.Choice(["ap3", "linear-eq", "isosceles-parabola"]))
@click.option("--trials", type=int, default=1)
@click.option("--seed", type=int, default=0)
@click.option("--threads", type=int, default=settings.THREADS)
@click.option("--out", type=click.Path(), default=None)
@click.option("--M", "M", type=int, default=None)
@click.option("--lambda", "lambda_", type=float, default=None)
@click.option("--C", "C", type=float, default=None)
@click.option("--coeff-bound", type=int, default=2)
@click.option("--route", type=click.Choice(["surface", "rough"]), default="surface")
@exit_codes
def demo_command(name, trials, seed, threads, out, M, lambda_, C, coeff_bound, route):
  """Builtin demos: 3-term progressions, linear equations, isosceles triangles on the parabola."""
  out = out or default_out_dir(f"demo-{name}")
  if name == "ap3":
    cfg = ExperimentConfig.from_dict({
      "schema_version": 1,
      "pattern": {"id": "ap3"},
      "construction": {"M": M or DEMO_M["ap3"], "lambda": lambda_ or DEMO_LAMBDA["ap3"], "seed": seed},
      "sweep": {"C": C},
      "trials": trials, "threads": threads, "out_dir": out,
    })
    report = run_experiment(cfg)
  elif name == "linear-eq":
    params = ConstructionParams(M=M or DEMO_M["linear-eq"], lambda_=lambda_ or DEMO_LAMBDA["linear-eq"], seed=seed)
    report = demo_linear_equations(coeff_bound, [0.0], params, trials=trials, C=C, threads=threads, out_dir=out)
  else:
    params = ConstructionParams(M=M or DEMO_M["isosceles"], lambda_=lambda_ or DEMO_LAMBDA["isosceles"], seed=seed)
    report = demo_isosceles("parabola", params, route=route, trials=trials, C=C, threads=threads, out_dir=out)
  record_experiment(name, "demo", report, out)
  click.echo(storage.dumps(report.to_dict()))
  return report.verdict


if __name__ == "__main__":
  app.run(debug=True)
