"""
End-to-end experiments: build every component from a config, run the
Monte Carlo, evaluate bounds, and persist CSVs plus a JSON manifest.
"""

import dataclasses
import datetime
import json
import logging
import math
import os
import shutil
import tempfile

import numpy as np

from . import __version__
from .analysis import (BoundInapplicable, InfeasibleStepSize, alpha_closed_form, alpha_max,
                       alpha_scan, build_error_system, lemma2_bound, replay_errors,
                       stability_diagnostics, theorem1_bound, tune_alpha)
from .config import config_hash, validate
from .engine import (KEY_SENSING, KEY_TOPOLOGY, KEY_TRAJECTORY, SimulationSetup, derive_seed,
                     run_monte_carlo, run_replica)
from .sensing import (ObservationModel, anchored_matrices, assemble_system,
                      coordinate_selectors, gaussian_matrices)
from .topology import MixingMatrix, build_graph, build_mixing_matrix, validate_mixing
from .trajectory import generate_trajectory, path_length, write_csv

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_BOUND_VIOLATION = 3
ORACLE_TOL = 1e-9
SCAN_POINTS = 20


class ExperimentError(RuntimeError):
    pass


def fmt(x):
    return format(float(x), ".17g")


def write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(v if isinstance(v, str) else fmt(v) for v in row) + "\n")


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def write_json(path, data):
    with open(path, "w") as fh:
        json.dump(_jsonable(data), fh, indent=2, sort_keys=True)
        fh.write("\n")


# building blocks ---------------------------------------------------------------

def build_topology(cfg):
    top = cfg.topology
    if top.kind == "matrix":
        return MixingMatrix.from_array(top.matrix)
    g = build_graph(top.kind, cfg.n, seed=derive_seed(cfg.seed, KEY_TOPOLOGY),
                    p=top.p, edges=top.edges)
    return build_mixing_matrix(g, top.weights)


def build_sensing(cfg):
    sen = cfg.sensing
    n, d = cfg.n, cfg.d
    rng = np.random.default_rng(derive_seed(cfg.seed, KEY_SENSING))
    if sen.kind == "identity":
        Hs = [np.eye(d) for _ in range(n)]
    elif sen.kind == "explicit":
        Hs = [np.atleast_2d(np.array(H, dtype=float)) for H in sen.H]
    elif sen.kind == "coordinate":
        Hs = coordinate_selectors(n, d, sen.m, rng)
    elif sen.kind == "gaussian":
        Hs = gaussian_matrices(n, d, sen.m, rng, scale=sen.gain)
    else:
        Hs = anchored_matrices(n, d, sen.m, rng, gain=sen.gain)
    sig = sen.noise.sigma
    sig = sig if isinstance(sig, list) else [sig] * n
    models = [ObservationModel(i, H, sen.noise_scale * s, sen.noise.family)
              for i, (H, s) in enumerate(zip(Hs, sig))]
    return assemble_system(models, require_identifiable=not cfg.flags.allow_unidentifiable)


def build_trajectory(cfg):
    return generate_trajectory(cfg.trajectory, cfg.d, cfg.T,
                               seed=derive_seed(cfg.seed, KEY_TRAJECTORY))


def resolve_alpha(cfg, P, system, C_T):
    """Returns ``(alpha, alpha_max or None, policy or None)``."""
    try:
        amax = alpha_max(P, system)
    except InfeasibleStepSize as exc:
        if isinstance(cfg.alpha, str):
            raise ExperimentError(f"policy {cfg.alpha!r} needs alpha_max: {exc}") from exc
        amax = None
    if isinstance(cfg.alpha, str):
        return tune_alpha(cfg.alpha, C_T, cfg.T, amax), amax, cfg.alpha
    return float(cfg.alpha), amax, None


@dataclasses.dataclass
class Built:
    P: MixingMatrix
    system: object
    traj: object
    C_T: float
    alpha: float
    alpha_max: float
    policy: str
    error_system: object
    setup: SimulationSetup


def build(cfg):
    P = build_topology(cfg)
    system = build_sensing(cfg)
    if system.d != cfg.d or system.n != cfg.n:
        raise ExperimentError("sensing dimensions disagree with config n/d")
    traj = build_trajectory(cfg)
    C_T = path_length(traj).value
    alpha, amax, policy = resolve_alpha(cfg, P, system, C_T)
    es = build_error_system(P, system, alpha)
    if not es.stable and not cfg.flags.allow_unstable:
        raise ExperimentError(
            f"step size {alpha:.6g} gives ||Q|| = {es.q_norm:.6g} >= 1; "
            "set flags.allow_unstable to run it anyway")
    setup = SimulationSetup(P, system, alpha, dict(cfg.init))
    return Built(P, system, traj, C_T, alpha, amax, policy, es, setup)


# run ---------------------------------------------------------------------------

def _trace_writer(directory, n):
    header = ["t", "r_t", "msd_t"] + [f"err_norm_{i}" for i in range(n)]

    def write(tr):
        rows = ([t + 1, tr.regret[t], tr.msd[t], *tr.agent_error_norms[t]]
                for t in range(tr.rounds))
        write_rows(os.path.join(directory, f"replica_{tr.replica_id:05d}.csv"), header, rows)
    return write


def evaluate(cfg, b, mc):
    """Bounds, nesting checks and stability for a finished Monte Carlo."""
    T = b.traj.T
    tol_reg = 3.0 * mc.reg_stderr
    l2_samples = mc.lemma2_per_replica
    l2 = lemma2_bound(mc.esq_mean, b.system) if not mc.unstable else float(np.mean(l2_samples))
    l2_se = float(np.std(l2_samples, ddof=1) / np.sqrt(len(l2_samples))) if len(l2_samples) > 1 else 0.0

    bounds = {"lemma2": l2, "lemma2_stderr": l2_se, "theorem1": None, "inapplicable": None}
    checks = {}
    try:
        rep = theorem1_bound(b.alpha, b.error_system.q_norm, b.system, b.C_T, T)
        rep.lemma2_rhs = l2
        bounds["theorem1"] = rep.to_dict()
        checks["dominance"] = {
            "pass": bool(mc.reg_mean <= rep.total + tol_reg),
            "reg_T_mean": mc.reg_mean, "bound_total": rep.total, "tolerance": tol_reg}
        checks["lemma2_nesting"] = {
            "pass": bool(mc.reg_mean <= l2 + tol_reg and l2 <= rep.total + 3.0 * l2_se),
            "reg_T_mean": mc.reg_mean, "lemma2": l2, "bound_total": rep.total}
    except BoundInapplicable as exc:
        bounds["inapplicable"] = str(exc)
    stab = stability_diagnostics(mc.msd_mean, b.error_system.q_norm, mc.msd_stderr)
    return bounds, checks, stab


def run_experiment(cfg, out=None, threads=1, timestamp=None):
    """
    Run a full experiment and return its manifest (a dict).

    With ``out`` set, writes ``aggregate.csv``, ``trajectory.csv``,
    ``alpha_scan.csv``, ``manifest.json`` and per-replica
    ``traces/replica_XXXXX.csv`` (unless ``flags.traces == "none"``).
    Files are staged and only moved into ``out`` once everything succeeded.
    """
    validate(cfg)
    out = out if out is not None else cfg.output
    b = build(cfg)

    stage = None
    if out is not None:
        parent = os.path.dirname(os.path.abspath(out))
        os.makedirs(parent, exist_ok=True)
        stage = tempfile.mkdtemp(prefix=".partial-", dir=parent)
    try:
        on_trace = None
        if stage is not None and cfg.flags.traces == "all":
            os.makedirs(os.path.join(stage, "traces"))
            on_trace = _trace_writer(os.path.join(stage, "traces"), cfg.n)
        mc = run_monte_carlo(b.setup, b.traj, cfg.replicas, cfg.seed, threads=threads,
                             exclude_diverged=cfg.flags.exclude_diverged, on_trace=on_trace)
        bounds, checks, stab = evaluate(cfg, b, mc)

        files = {}
        if stage is not None:
            files = _write_outputs(stage, cfg, b, mc)
        manifest = {
            "tool": "netrack",
            "version": __version__,
            "config_hash": config_hash(cfg),
            "config": {k: v for k, v in cfg.to_dict().items() if k != "output"},
            "seeds": {"master": cfg.seed,
                      "replica_scheme": "SeedSequence(master, spawn_key=(1, replica, 0, agent))"},
            "n": cfg.n, "d": cfg.d, "T": cfg.T,
            "alpha": b.alpha,
            "alpha_policy": b.policy,
            "alpha_max": b.alpha_max,
            "alpha_closed_form": alpha_closed_form(b.P, b.system),
            "q_norm": b.error_system.q_norm,
            "stable": b.error_system.stable,
            "lambda_2_P": b.P.lambda_2,
            "lambda_n_P": b.P.lambda_n,
            "sensing": b.system.diagnostics(),
            "C_T": b.C_T,
            "bounds": bounds,
            "checks": checks,
            "aggregate": mc.summary(),
            "stability": stab,
            "files": files,
            "timestamp": timestamp or datetime.datetime.now(datetime.timezone.utc).isoformat(),
        }
        manifest["bound_violation"] = not all(c["pass"] for c in checks.values())
        if stage is not None:
            manifest["files"]["manifest"] = "manifest.json"
            write_json(os.path.join(stage, "manifest.json"), manifest)
            _commit(stage, out)
        return _jsonable(manifest)
    except BaseException:
        if stage is not None:
            shutil.rmtree(stage, ignore_errors=True)
        raise


def _write_outputs(stage, cfg, b, mc):
    T = b.traj.T
    write_rows(os.path.join(stage, "aggregate.csv"),
               ["t", "r_mean", "r_stderr", "msd_mean", "msd_stderr", "esq_mean", "esq_stderr"],
               ([t + 1, mc.r_mean[t], mc.r_stderr[t], mc.msd_mean[t], mc.msd_stderr[t],
                 mc.esq_mean[t], mc.esq_stderr[t]] for t in range(T)))
    write_csv(b.traj, os.path.join(stage, "trajectory.csv"))
    files = {"aggregate": "aggregate.csv", "trajectory": "trajectory.csv"}
    try:
        a_hi = alpha_closed_form(b.P, b.system)
        grid = np.linspace(a_hi / SCAN_POINTS, a_hi, SCAN_POINTS)
        write_rows(os.path.join(stage, "alpha_scan.csv"),
                   ["alpha", "q_norm", "contraction_target"], alpha_scan(b.P, b.system, grid))
        files["alpha_scan"] = "alpha_scan.csv"
    except ZeroDivisionError:
        pass
    write_rows(os.path.join(stage, "replicas.csv"), ["replica", "reg_T"],
               ([r, v] for r, v in enumerate(mc.reg_T)))
    files["replicas"] = "replicas.csv"
    if cfg.flags.traces == "all":
        files["traces"] = "traces/"
    return files


def _commit(stage, out):
    os.makedirs(out, exist_ok=True)
    for name in os.listdir(stage):
        dst = os.path.join(out, name)
        if os.path.isdir(dst):
            shutil.rmtree(dst)
        os.replace(os.path.join(stage, name), dst)
    os.rmdir(stage)


# sweep -------------------------------------------------------------------------

SWEEP_AXES = ("T", "alpha", "noise_scale", "path_scale")


def apply_axis(cfg, axis, value):
    if axis == "T":
        return dataclasses.replace(cfg, T=int(value))
    if axis == "alpha":
        return dataclasses.replace(cfg, alpha=float(value))
    if axis == "noise_scale":
        return dataclasses.replace(
            cfg, sensing=dataclasses.replace(cfg.sensing, noise_scale=float(value)))
    if axis == "path_scale":
        traj = dict(cfg.trajectory)
        # path length scales with the square of a uniform point scaling
        traj["scale"] = float(traj.get("scale", 1.0)) * math.sqrt(float(value))
        return dataclasses.replace(cfg, trajectory=traj)
    raise ValueError(f"unknown sweep axis {axis!r}; expected one of {SWEEP_AXES}")


def loglog_slope(x, y):
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    ok = np.isfinite(x) & np.isfinite(y) & (x > 0) & (y > 0)
    if ok.sum() < 2:
        return None
    return float(np.polyfit(np.log(x[ok]), np.log(y[ok]), 1)[0])


def sweep(cfg, axis, values, out=None, threads=1, timestamp=None):
    """
    One experiment per axis value; failures are recorded and the sweep
    goes on. Writes ``sweep.csv`` and ``sweep.json`` when ``out`` is set.
    """
    if axis not in SWEEP_AXES:
        raise ValueError(f"unknown sweep axis {axis!r}; expected one of {SWEEP_AXES}")
    values = list(values)
    if any(b <= a for a, b in zip(values, values[1:])):
        raise ValueError("sweep values must be strictly increasing")
    out = out if out is not None else cfg.output
    points = []
    for k, v in enumerate(values):
        sub = None if out is None else os.path.join(out, f"point_{k:03d}")
        try:
            m = run_experiment(validate(apply_axis(cfg, axis, v)), out=sub, threads=threads,
                               timestamp=timestamp)
            th = m["bounds"]["theorem1"]
            points.append({"value": v, "status": "ok",
                           "reg_T_mean": m["aggregate"]["reg_T_mean"],
                           "reg_T_stderr": m["aggregate"]["reg_T_stderr"],
                           "bound_total": th["total"] if th else None,
                           "lemma2": m["bounds"]["lemma2"],
                           "alpha": m["alpha"], "q_norm": m["q_norm"], "C_T": m["C_T"],
                           "bound_violation": m["bound_violation"]})
        except Exception as exc:  # recorded per point
            log.warning("sweep point %s=%s failed: %s", axis, v, exc)
            points.append({"value": v, "status": f"error: {exc}"})

    good = [p for p in points if p["status"] == "ok"]
    xs = [p["value"] for p in good]
    report = {
        "axis": axis,
        "points": points,
        "slope_reg_T": loglog_slope(xs, [p["reg_T_mean"] for p in good]),
        "slope_bound": loglog_slope(xs, [p["bound_total"] if p["bound_total"] is not None
                                         else float("nan") for p in good]),
    }
    if out is not None:
        os.makedirs(out, exist_ok=True)
        cols = ["reg_T_mean", "reg_T_stderr", "bound_total", "lemma2", "alpha", "q_norm", "C_T"]
        rows = []
        for p in points:
            vals = [p.get(c) for c in cols]
            rows.append([axis, p["value"], *[("" if x is None else x) for x in vals],
                         p["status"]])
        write_rows(os.path.join(out, "sweep.csv"), ["axis", "value", *cols, "status"], rows)
        write_json(os.path.join(out, "sweep.json"), report)
    return _jsonable(report)


# oracle / validate -------------------------------------------------------------

def relative_deviation(a, b):
    """``max_t ||a_t - b_t|| / max_t ||a_t||`` (0 when both vanish)."""
    diff = np.max(np.linalg.norm(a - b, axis=1)) if len(a) else 0.0
    scale = np.max(np.linalg.norm(a, axis=1)) if len(a) else 0.0
    if scale == 0.0:
        return 0.0 if diff == 0.0 else math.inf
    return float(diff / scale)


def oracle_check(cfg, replica=0):
    """Replay replica ``replica`` through the error recursion and compare."""
    b = build(cfg)
    tr = run_replica(b.setup, b.traj, cfg.seed, replica, retain_noise=True)
    k = tr.rounds
    ref = replay_errors(b.error_system, tr.errors[0], b.traj, tr.noise, b.system)[:k]
    dev = relative_deviation(tr.errors, ref)
    return {"replica": replica, "rounds": k, "diverged": tr.diverged,
            "max_relative_deviation": dev, "tolerance": ORACLE_TOL,
            "pass": bool(dev <= ORACLE_TOL), "q_norm": b.error_system.q_norm}


def validate_experiment(cfg):
    """Config, mixing matrix and identifiability checks only (no simulation)."""
    report = {"config_hash": config_hash(cfg)}
    P = None
    try:
        P = build_topology(cfg)
        report["mixing"] = validate_mixing(P.entries)
        report["lambda_2_P"], report["lambda_n_P"] = P.lambda_2, P.lambda_n
    except Exception as exc:
        report["mixing"] = {"valid": False, "error": str(exc)}
        if cfg.topology.kind == "matrix":
            report["mixing"] = validate_mixing(np.array(cfg.topology.matrix, dtype=float))
    cfg_u = dataclasses.replace(cfg, flags=dataclasses.replace(cfg.flags,
                                                               allow_unidentifiable=True))
    system = build_sensing(cfg_u)
    report["sensing"] = system.diagnostics()
    if P is not None and system.identifiable:
        report["alpha_closed_form"] = alpha_closed_form(P, system)
        try:
            report["alpha_max"] = alpha_max(P, system)
        except InfeasibleStepSize as exc:
            report["alpha_max"] = None
            report["alpha_max_error"] = str(exc)
    report["valid"] = bool(report["mixing"].get("valid") and system.identifiable)
    return _jsonable(report)
