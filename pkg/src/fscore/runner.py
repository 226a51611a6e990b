"""Turn a validated config into result rows, files and a run manifest."""

import csv
import datetime as _dt
import io
import json
import math
import os
from pathlib import Path

import numpy as np

from . import __version__
from .config import VERIFY_KINDS, build_directions, build_init, build_pair
from .divergence import divergence_mc, divergence_quadrature, parse_generator
from .errors import ConfigError, DivergingObjective, NonFiniteEstimate, NotPositiveDefinite, UnresolvedQuadrature
from .fisher import estimate_generalized_fisher
from .identity import (
    EstimatorConfig,
    VerificationCase,
    VerificationRecord,
    run_cases,
    verify_debruijn,
    verify_heat_equation,
    verify_kl_corollary,
    verify_theorem1,
)
from .channel import pushforward
from .mixtures import GaussianMixture
from .optimize import DescentOptions, fit_covariance, fit_model_fsm

SCHEMA_VERSION = 1

VERIFY_COLUMNS = [
    "config_hash", "case", "group", "experiment", "pair", "generator", "point", "direction",
    "fd_step", "method", "n", "seed", "lhs", "rhs", "residual", "tolerance", "passed",
    "trunc_estimate", "se_combined", "rhs_alt", "residual_alt", "constant", "error",
]
ESTIMATE_COLUMNS = [
    "config_hash", "case", "pair", "generator", "quantity", "entry", "value", "std_error", "method",
]


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _estimator(cfg, workers=1):
    e = cfg.estimator
    return EstimatorConfig(e.method, e.n, e.seed, e.nodes_per_axis, workers)


def _resolve_workers(cfg):
    env = os.environ.get("FSL_THREADS")
    if env:
        from ._mc import default_workers
        return default_workers()
    if cfg.workers is not None:
        return cfg.workers
    return os.cpu_count() or 1


# ---------------------------------------------------------------- verification


def _verification_tasks(cfg):
    est = _estimator(cfg)
    tasks = []
    group = 0
    for pi, pair in enumerate(cfg.pairs):
        p, q, ch = build_pair(pair)
        name = pair.name or f"pair{pi}"
        dirs = build_directions(cfg.fd.directions, ch.output_dim, cfg.estimator.seed)
        if cfg.experiment == "verify_heat":
            points = pair.points or [[0.0] * ch.output_dim]
            for yi, y in enumerate(points):
                for di, V in enumerate(dirs):
                    for h in cfg.fd.steps:
                        meta = dict(group=group, pair=name, point=yi, direction=di, fd_step=h)
                        tasks.append((meta, lambda p=p, ch=ch, y=y, V=V, h=h:
                                      verify_heat_equation(p, ch, y, V, h, richardson=cfg.fd.richardson)))
                    group += 1
        elif cfg.experiment == "verify_debruijn":
            for di, V in enumerate(dirs):
                for h in cfg.fd.steps:
                    meta = dict(group=group, pair=name, direction=di, fd_step=h)
                    tasks.append((meta, lambda p=p, ch=ch, V=V, h=h:
                                  verify_debruijn(p, ch, V, h, est, cfg.fd.richardson)))
                group += 1
        else:
            gens = ["kl"] if cfg.experiment == "verify_kl" else cfg.generators
            fn = verify_kl_corollary if cfg.experiment == "verify_kl" else verify_theorem1
            for g in gens:
                for di, V in enumerate(dirs):
                    for h in cfg.fd.steps:
                        try:
                            case = VerificationCase(p, q, ch, g, V, h, est, cfg.fd.richardson)
                        except NotPositiveDefinite as exc:
                            raise ConfigError(f"{name}: direction {di} with step {h}: {exc}") from None
                        meta = dict(group=group, pair=name, generator=parse_generator(g).spec,
                                    direction=di, fd_step=h)
                        tasks.append((meta, lambda case=case, fn=fn: fn(case)))
                    group += 1
    return tasks


def _run_task(task):
    try:
        return task[1]()
    except (NonFiniteEstimate, UnresolvedQuadrature, NotPositiveDefinite) as exc:
        nan = float("nan")
        return VerificationRecord("error", nan, nan, nan, nan, False,
                                  {"error": f"{type(exc).__name__}: {exc}"})


def _run_verification(cfg, config_hash, workers):
    tasks = _verification_tasks(cfg)
    records = run_cases(_run_task, tasks, workers)
    rows = []
    for i, ((meta, _), rec) in enumerate(zip(tasks, records)):
        d = rec.diagnostics
        rows.append({
            "config_hash": config_hash, "case": i, "experiment": cfg.experiment,
            "method": d.get("method"), "n": d.get("n"), "seed": d.get("seed"),
            "lhs": rec.lhs, "rhs": rec.rhs, "residual": rec.residual,
            "tolerance": rec.tolerance, "passed": rec.passed,
            "trunc_estimate": d.get("trunc_estimate"), "se_combined": d.get("se_combined"),
            "rhs_alt": d.get("rhs_alt"), "residual_alt": d.get("residual_alt"),
            "constant": d.get("constant"), "error": d.get("error"), **meta,
        })
    failed = [r["case"] for r in rows if not r["passed"]]
    summary = {"cases": len(rows), "passed": len(rows) - len(failed), "failed_cases": failed}
    return VERIFY_COLUMNS, rows, summary, (0 if not failed else 1)


# ---------------------------------------------------------------- optimization


def _descent_options(cfg):
    o, e = cfg.optimizer, cfg.estimator
    method = "mc_q" if e.method == "mc" else e.method
    return DescentOptions(
        step_size=o.step_size, max_iters=o.max_iters, psd_floor=o.psd_floor, method=method,
        n=e.n, seed=e.seed, nodes_per_axis=e.nodes_per_axis, stop_tol=o.stop_tol,
        fd_step=o.fd_step, consistency_every=o.consistency_every, workers=1,
    )


def _trajectory_rows(traj, config_hash):
    rows, param_cols = [], []
    for it in traj.iterates:
        row = {"config_hash": config_hash, "iter": it.index, "objective": it.objective.value,
               "std_error": it.objective.std_error, "grad_norm": it.grad_norm}
        for key, val in it.params.items():
            flat = np.atleast_1d(val)
            if flat.ndim == 1:
                for i, x in enumerate(flat):
                    row[f"{key}_{i}"] = x
            else:
                for i in range(flat.shape[0]):
                    for j in range(flat.shape[1]):
                        row[f"{key}_{i}_{j}"] = flat[i, j]
        if not param_cols:
            param_cols = [k for k in row if k not in ("config_hash", "iter", "objective", "std_error", "grad_norm")]
        rows.append(row)
    cols = ["config_hash", "iter", "objective", "std_error", "grad_norm"] + param_cols
    return cols, rows


def _run_fit(cfg, config_hash):
    opts = _descent_options(cfg)
    p, q, ch = build_pair(cfg.pairs[0])
    try:
        if cfg.experiment == "fit_covariance":
            traj = fit_covariance(p, q, ch, opts)
        else:
            traj = fit_model_fsm(p, build_init(cfg.optimizer.init), cfg.generators[0], opts)
    except DivergingObjective as exc:
        summary = {"converged": False, "stop_reason": f"diverging: {exc}", "iterations": 0}
        return ["config_hash", "iter", "objective", "std_error", "grad_norm"], [], summary, 1
    cols, rows = _trajectory_rows(traj, config_hash)
    checks = [c.passed for c in traj.checks]
    summary = {
        "converged": traj.converged, "stop_reason": traj.stop_reason,
        "iterations": len(traj.iterates) - 1, "final_objective": traj.final.objective.value,
        "consistency_checks": len(checks), "consistency_failed": checks.count(False),
    }
    return cols, rows, summary, (0 if traj.converged else 1)


# ---------------------------------------------------------------- estimates


def _run_estimate(cfg, config_hash):
    e = cfg.estimator
    method = "mc_q" if e.method == "mc" else e.method
    rows = []
    for pi, pair in enumerate(cfg.pairs):
        p, q, ch = build_pair(pair)
        name = pair.name or f"pair{pi}"
        p_y, q_y = pushforward(p, ch), pushforward(q, ch)
        for g in cfg.generators:
            gen = parse_generator(g)
            if method == "quadrature":
                D = divergence_quadrature(p_y, q_y, gen, e.nodes_per_axis)
            else:
                D = divergence_mc(p_y, q_y, gen, e.n, e.seed, 1)
            base = {"config_hash": config_hash, "pair": name, "generator": gen.spec}
            rows.append({**base, "quantity": "divergence", "entry": "", "value": D.value,
                         "std_error": D.std_error, "method": D.method})
            I = estimate_generalized_fisher(p_y, q_y, gen, method, e.n, e.seed, e.nodes_per_axis, 1)
            m = I.mean.shape[0]
            for i in range(m):
                for j in range(m):
                    rows.append({**base, "quantity": "fisher", "entry": f"{i}_{j}",
                                 "value": I.mean[i, j], "std_error": I.std_error[i, j],
                                 "method": I.method})
    for i, r in enumerate(rows):
        r["case"] = i
    return ESTIMATE_COLUMNS, rows, {"rows": len(rows)}, 0


# ---------------------------------------------------------------- files


def results_csv_text(columns, rows, config_hash, experiment):
    buf = io.StringIO()
    buf.write(f"# fscore-results schema={SCHEMA_VERSION} config_hash={config_hash} experiment={experiment}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r.get(c)) for c in columns])
    return buf.getvalue()


def _jsonable(v):
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else None
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def run_experiment(cfg, out_dir=None):
    """Execute ``cfg``; write results CSV/JSON and manifest. Returns ``(exit_code, paths)``."""
    started = _dt.datetime.now(_dt.timezone.utc).isoformat()
    config_hash = cfg.config_hash()
    workers = _resolve_workers(cfg)
    if cfg.experiment in VERIFY_KINDS:
        cols, rows, summary, code = _run_verification(cfg, config_hash, workers)
    elif cfg.experiment.startswith("fit_"):
        cols, rows, summary, code = _run_fit(cfg, config_hash)
    else:
        cols, rows, summary, code = _run_estimate(cfg, config_hash)

    out = Path(out_dir if out_dir is not None else cfg.output.dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "results.csv"
    csv_path.write_text(results_csv_text(cols, rows, config_hash, cfg.experiment))
    json_path = out / "results.json"
    json_path.write_text(json.dumps({
        "schema": SCHEMA_VERSION, "config_hash": config_hash, "experiment": cfg.experiment,
        "columns": cols, "rows": [{c: _jsonable(r.get(c)) for c in cols} for r in rows],
    }, indent=1))
    manifest = {
        "config_hash": config_hash, "experiment": cfg.experiment, "seed": cfg.estimator.seed,
        "started": started, "finished": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        "version": __version__, "workers": workers, "summary": summary, "exit_code": code,
        "files": [csv_path.name, json_path.name],
    }
    manifest_path = out / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=1, default=_jsonable))
    return code, {"results_csv": csv_path, "results_json": json_path, "manifest": manifest_path}
