"""Configuration-driven experiment runner.

Configs are INI files (``configparser``)::

    [experiment]
    kind = sweep_epsilon
    seed = 7

    [mesh]
    n_cells = 100

    [problem]
    kind = A
    eps_grid = 1e-1, 3e-2, 1e-2, 3e-3, 1e-3

    [time]
    T = 2
    dt = 1e-3

Every experiment writes CSV tables, whitespace-separated plot data and a
``summary.json`` into the output directory.  Exit status is 0 when all
thresholds pass, 2 when a threshold fails and 1 on any error.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import json
import logging
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import dynamics as dyn
from .integrate import (StateA, StateR, StepFailure, decomposition_run, initial_data_A,
                        random_state_A, random_state_R, simulate)
from .mesh import build_mesh, inner, norm_phase
from .model import Problem, builtin, calibrate_c2
from .operators import adjoint_defect, assemble, dump_triplets, eigenpairs, gram

__all__ = ["ConfigError", "ExperimentConfig", "RunSummary", "load_config", "parse_config",
           "run", "run_check", "emit_plot_data", "main"]

log = logging.getLogger(__name__)

KINDS = ("simulate", "eigen", "sweep_epsilon", "lipschitz", "absorbing", "attractor",
         "decompose", "check")
NEEDS_TIME = {"simulate", "sweep_epsilon", "lipschitz", "absorbing", "attractor", "decompose"}


class ConfigError(ValueError):
    pass


def _floats(text):
    return tuple(float(x) for x in text.replace(",", " ").split())


# section -> key -> (parser, default); a default of ... marks a required key
SCHEMA = {
    "experiment": {"kind": (str, ...), "seed": (int, 0), "out": (str, "out")},
    "mesh": {"n_cells": (int, 64), "length": (float, 1.0)},
    "problem": {"kind": (str, "R"), "eps": (float, 1.0), "eps_grid": (_floats, ())},
    "nonlinearity": {"name": (str, "cubic"), "lam": (float, 0.0)},
    "boundary": {"name": (str, "zero"), "rho": (float, 0.0)},
    "time": {"T": (float, ...), "dt": (float, ...), "burn_in": (float, 0.0), "stride": (int, 1),
             "t_cal": (float, 5.0), "fit_start": (float, 1.0)},
    "solver": {"tol": (float, 1e-11), "max_iter": (int, 50)},
    "constants": {"eta": (float, 0.25), "m0": (float, 0.1), "m1": (float, 0.1),
                  "C1": (float, 0.25), "C2": (float, 0.0), "iota": (float, 0.0),
                  "beta": (float, 1.0)},
    "initial": {"norm": (float, 1.0), "max_norm": (float, 5.0), "count": (int, 4),
                "pair_distance": (float, 1e-2)},
    "eigen": {"k": (int, 5)},
    "output": {"snapshots": (str, "none")},
}


@dataclass
class ExperimentConfig:
    values: dict  # section -> key -> parsed value
    source: str = "<default>"

    def __getitem__(self, section):
        return self.values[section]

    @property
    def kind(self) -> str:
        return self.values["experiment"]["kind"]

    @property
    def seed(self) -> int:
        return self.values["experiment"]["seed"]

    def canonical(self) -> str:
        """Canonical JSON of the semantic fields (the output directory is excluded)."""
        v = {s: dict(d) for s, d in self.values.items()}
        v["experiment"] = {k: x for k, x in v["experiment"].items() if k != "out"}
        return json.dumps(v, sort_keys=True, default=list, separators=(",", ":"))

    def digest(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()


def parse_config(text: str, source: str = "<string>") -> ExperimentConfig:
    cp = configparser.ConfigParser()
    cp.optionxform = str  # keys are case sensitive (T, C1, ...)
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    for sec in cp.sections():
        if sec not in SCHEMA:
            raise ConfigError(f"{source}: unknown section [{sec}]")
        for key in cp[sec]:
            if key not in SCHEMA[sec]:
                raise ConfigError(f"{source}: unknown field [{sec}] {key}")
    kind = cp.get("experiment", "kind", fallback=None)
    if kind not in KINDS:
        raise ConfigError(f"{source}: [experiment] kind must be one of {', '.join(KINDS)}, got {kind!r}")
    values = {}
    for sec, keys in SCHEMA.items():
        values[sec] = {}
        for key, (conv, default) in keys.items():
            if cp.has_option(sec, key):
                raw = cp.get(sec, key)
                try:
                    values[sec][key] = conv(raw)
                except ValueError as exc:
                    raise ConfigError(f"{source}: field [{sec}] {key}: cannot parse {raw!r}") from exc
            elif default is ...:
                if sec == "time" and kind not in NEEDS_TIME:
                    values[sec][key] = None
                    continue
                raise ConfigError(f"{source}: field [{sec}] {key} is required")
            else:
                values[sec][key] = default
    cfg = ExperimentConfig(values, source)
    _validate(cfg)
    return cfg


def _validate(cfg: ExperimentConfig):
    def need(cond, msg):
        if not cond:
            raise ConfigError(f"{cfg.source}: {msg}")

    v = cfg.values
    need(v["mesh"]["n_cells"] >= 2, "field [mesh] n_cells must be >= 2")
    need(math.isfinite(v["mesh"]["length"]) and v["mesh"]["length"] > 0,
         "field [mesh] length must be positive")
    need(v["problem"]["kind"] in ("R", "A"), "field [problem] kind must be R or A")
    need(0 < v["problem"]["eps"] <= 1, "field [problem] eps must lie in (0, 1]")
    need(all(0 < e <= 1 for e in v["problem"]["eps_grid"]), "field [problem] eps_grid entries must lie in (0, 1]")
    t = v["time"]
    if cfg.kind in NEEDS_TIME:
        need(t["T"] > 0, "field [time] T must be positive")
        need(t["dt"] > 0, "field [time] dt must be positive")
        n = round(t["T"] / t["dt"])
        need(abs(n * t["dt"] - t["T"]) <= 1e-9 * max(t["T"], 1), "field [time] T must be a multiple of dt")
        need(0 <= t["burn_in"] < t["T"], "field [time] burn_in must lie in [0, T)")
    need(t["stride"] >= 1, "field [time] stride must be >= 1")
    need(v["solver"]["tol"] > 0, "field [solver] tol must be positive")
    need(v["solver"]["max_iter"] >= 1, "field [solver] max_iter must be >= 1")
    for key in ("eta", "m0", "m1", "C1"):
        need(v["constants"][key] > 0, f"field [constants] {key} must be positive")
    need(v["constants"]["C2"] >= 0, "field [constants] C2 must be >= 0 (0 means calibrate)")
    need(v["constants"]["iota"] >= 0, "field [constants] iota must be >= 0 (0 means default)")
    need(v["initial"]["norm"] > 0 and v["initial"]["max_norm"] > 0, "field [initial] norms must be positive")
    need(v["initial"]["count"] >= 1, "field [initial] count must be >= 1")
    need(v["eigen"]["k"] >= 1, "field [eigen] k must be >= 1")
    need(v["output"]["snapshots"] in ("none", "csv", "npy"), "field [output] snapshots must be none, csv or npy")
    try:
        _nonlinearities(cfg)
    except ValueError as exc:
        raise ConfigError(f"{cfg.source}: {exc}") from exc
    if cfg.kind == "sweep_epsilon":
        need(len(set(v["problem"]["eps_grid"])) >= 4, "field [problem] eps_grid needs at least 4 values")


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, str(path))


DEFAULT_CHECK = """
[experiment]
kind = check
[mesh]
n_cells = 64
[time]
T = 1
dt = 1e-2
"""


def _nonlinearities(cfg):
    nv = cfg["nonlinearity"]
    params = {"lam": nv["lam"]} if nv["name"] == "cubic_minus_linear" else {}
    nl = builtin(nv["name"], **params)
    bv = cfg["boundary"]
    bparams = {"rho": bv["rho"]} if bv["name"] == "bounded_sine" else {}
    bnl = builtin(bv["name"], boundary=True, **bparams)
    return nl, bnl


# -- outputs ----------------------------------------------------------------

@dataclass
class RunSummary:
    kind: str
    config_hash: str
    wall_time: float
    metrics: dict = field(default_factory=dict)
    passed: bool = True
    files: list = field(default_factory=list)
    error: str | None = None

    def to_json(self) -> str:
        d = {"kind": self.kind, "config_hash": self.config_hash, "wall_time": self.wall_time,
             "metrics": self.metrics, "pass": self.passed, "files": self.files, "error": self.error}
        return json.dumps(_plain(d), sort_keys=True, indent=2, ensure_ascii=False) + "\n"

    @property
    def exit_code(self) -> int:
        if self.error is not None:
            return 1
        return 0 if self.passed else 2


def _plain(x):
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def _fmt(x):
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return x


def write_csv(path: Path, header, rows) -> Path:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, quoting=csv.QUOTE_MINIMAL, lineterminator="\r\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])
    return path


def _write_columns(path: Path, header, rows) -> Path:
    with path.open("w", encoding="utf-8") as fh:
        fh.write("# " + " ".join(header) + "\n")
        for row in rows:
            fh.write(" ".join(f"{float(x):.17g}" for x in row) + "\n")
    return path


def emit_plot_data(data, style: str, path, mesh=None) -> Path:
    """Whitespace-separated columns for external plotting.

    ``energy``: a TrajectoryRecord -> ``t E dissipation residual`` (the
    last two are the largest values over the steps since the previous
    sample).  ``gap``: a GapResult -> ``t gap_Heps gap_H0``.  ``cloud``: a
    Cloud -> ``norm u_mid v_mid`` per point (needs ``mesh``).
    """
    path = Path(path)
    if style == "energy":
        rec = data
        k = _stride_of(rec)
        rows = [(rec.times[0], rec.energy_total[0], 0.0, 0.0)]
        for i in range(1, len(rec.times)):
            sl = slice((i - 1) * k, i * k)
            rows.append((rec.times[i], rec.energy_total[i], float(np.max(rec.dissipation[sl])),
                         float(np.max(np.abs(rec.balance_residuals[sl])))))
        return _write_columns(path, ["t", "E", "dissipation", "residual"], rows)
    if style == "gap":
        return _write_columns(path, ["t", "gap_Heps", "gap_H0"],
                              zip(data.times, data.lifted, data.projected))
    if style == "cloud":
        if mesh is None:
            raise ValueError("cloud style needs the mesh")
        nrm = data.norm(mesh)
        mid = mesh.n_nodes // 2
        return _write_columns(path, ["norm", "u_mid", "v_mid"],
                              [(nrm(p), p.u[mid], p.v[mid]) for p in data.points])
    raise ValueError(f"unknown plot style {style!r}")


def _stride_of(rec):
    if len(rec.times) < 2:
        return max(len(rec.balance_residuals), 1)
    return max(round((rec.times[1] - rec.times[0]) / rec.dt), 1)


# -- experiments ---------------------------------------------------------------

def _problem(cfg, eps=None):
    p = cfg["problem"]
    return Problem("R") if p["kind"] == "R" else Problem("A", p["eps"] if eps is None else eps)


def _random_state(problem, mesh, rng, norm):
    if problem.kind == "R":
        return random_state_R(mesh, rng, norm)
    return random_state_A(mesh, rng, problem.eps, norm)


def _exp_simulate(cfg, mesh, out, ctx):
    nl, bnl = _nonlinearities(cfg)
    problem = _problem(cfg)
    rng = np.random.default_rng(cfg.seed)
    s0 = _random_state(problem, mesh, rng, cfg["initial"]["norm"])
    t = cfg["time"]
    try:
        rec = simulate(problem, s0, t["T"], t["dt"], mesh, nl, bnl, stride=t["stride"],
                       tol=cfg["solver"]["tol"], max_iter=cfg["solver"]["max_iter"])
    except StepFailure:
        raise
    k = _stride_of(rec)
    rows = []
    for i, (tt, e, nrm) in enumerate(zip(rec.times, rec.energies, rec.norms)):
        sl = slice(max(i - 1, 0) * k, i * k)
        diss = float(np.max(rec.dissipation[sl])) if i else 0.0
        res = float(np.max(np.abs(rec.balance_residuals[sl]))) if i else 0.0
        rows.append((tt, e.total, e.quadratic, e.potential, e.boundary_potential, diss, res, nrm))
    files = [write_csv(out / "trajectory.csv",
                       ["t", "E_total", "E_quadratic", "E_potential", "E_boundary", "dissipation",
                        "balance_residual", "norm"], rows),
             emit_plot_data(rec, "energy", out / "energy.dat")]
    files += _write_snapshots(rec, cfg["output"]["snapshots"], out)
    maxres = float(np.max(np.abs(rec.balance_residuals)))
    tol = cfg["solver"]["tol"]
    monotone = bool(np.all(np.diff(rec.energy_total) <= 10 * tol))
    metrics = {"max_balance_residual": maxres, "energy_nonincreasing": monotone,
               "final_norm": float(rec.norms[-1]), "steps": int(rec.balance_residuals.size)}
    return metrics, maxres <= 10 * tol and monotone, files


def _write_snapshots(rec, mode, out):
    """Sampled states, one row per sample: ``t`` then the stacked state vector."""
    if mode == "none":
        return []
    data = np.array([np.concatenate([[t], s.flat()]) for t, s in zip(rec.times, rec.states)])
    if mode == "npy":
        path = out / "states.npy"
        np.save(path, data)
        return [path]
    n = (data.shape[1] - 1)
    return [write_csv(out / "states.csv", ["t"] + [f"y{j}" for j in range(n)], data.tolist())]


def _exp_eigen(cfg, mesh, out, ctx):
    k = min(cfg["eigen"]["k"], mesh.n_nodes)
    ev = eigenpairs(mesh, k)
    files = [write_csv(out / "eigen.csv", ["j", "lambda", "residual"],
                       [(j + 1, lam, r) for j, (lam, r) in enumerate(zip(ev.eigenvalues, ev.residuals))])]
    metrics = {"lambda_1": float(ev.eigenvalues[0]), "poincare_constant": ev.poincare_constant,
               "max_residual": float(ev.residuals.max())}
    return metrics, True, files


def _sweep_ic(cfg, mesh):
    rng = np.random.default_rng(cfg.seed)
    phi = random_state_R(mesh, rng, cfg["initial"]["norm"])
    d0 = rng.uniform(-1, 1, 2)
    d1 = rng.uniform(-1, 1, 2)
    return phi, d0, d1


def _exp_sweep(cfg, mesh, out, ctx):
    nl, bnl = _nonlinearities(cfg)
    t = cfg["time"]
    phi, d0, d1 = _sweep_ic(cfg, mesh)
    grid = cfg["problem"]["eps_grid"]
    entries = dyn.epsilon_sweep(grid, phi.u, phi.v, d0, d1, t["T"], t["dt"], mesh, nl, bnl,
                                stride=t["stride"], tol=cfg["solver"]["tol"], threads=ctx["threads"])
    eps = [e.eps for e in entries]
    fits = {"lifted": dyn.epsilon_sweep_fit(eps, [e.sup_gap for e in entries]),
            "projected": dyn.epsilon_sweep_fit(eps, [e.sup_gap_projected for e in entries])}
    mono = {"lifted": dyn.monotone_within(eps, [e.sup_gap for e in entries]),
            "projected": dyn.monotone_within(eps, [e.sup_gap_projected for e in entries])}
    files = [write_csv(out / "sweep.csv",
                       ["eps", "sup_gap", "gap_at_T", "runtime", "sup_gap_H0", "gap_at_T_H0"],
                       [(e.eps, e.sup_gap, e.gap_at_T, e.runtime, e.sup_gap_projected,
                         e.gap_at_T_projected) for e in entries])]
    files += [emit_plot_data(e.series, "gap", out / f"gap_eps{e.eps:g}.dat") for e in entries]
    metrics, ok = {}, True
    for mode, f in fits.items():
        good = f.rate >= 0.45 and f.residual <= 0.3 and mono[mode]
        ok &= good
        metrics[mode] = {"slope": f.rate, "prefactor": f.prefactor, "residual": f.residual,
                         "monotone": mono[mode], "pass": good}
    return metrics, ok, files


def _exp_lipschitz(cfg, mesh, out, ctx):
    nl, bnl = _nonlinearities(cfg)
    problem = _problem(cfg)
    rng = np.random.default_rng(cfg.seed)
    ini = cfg["initial"]
    pairs = []
    for _ in range(ini["count"]):
        x = _random_state(problem, mesh, rng, ini["norm"])
        pairs.append((x, x + _random_state(problem, mesh, rng, ini["pair_distance"])))
    t = cfg["time"]
    res = dyn.lipschitz_fit(problem, pairs, t["T"], t["dt"], mesh, nl, bnl, stride=t["stride"],
                            tol=cfg["solver"]["tol"])
    rows = [[tt] + [r[i] for r in res.ratios] for i, tt in enumerate(res.times)]
    files = [write_csv(out / "lipschitz.csv", ["t"] + [f"r{j}" for j in range(len(pairs))], rows)]
    metrics = {"nu_hat": res.fit.rate, "slope_max": res.slope_max,
               "worst_violation": res.worst_violation}
    return metrics, res.worst_violation <= 1e-6, files


def _exp_absorbing(cfg, mesh, out, ctx):
    nl, bnl = _nonlinearities(cfg)
    problem = Problem("R")
    c = cfg["constants"]
    ini = cfg["initial"]
    rng = np.random.default_rng(cfg.seed)
    C2 = c["C2"] or calibrate_c2(mesh, nl, rng)
    iota = c["iota"] or None
    specR = dyn.absorbing_spec(problem, ini["max_norm"], C1=c["C1"], C2=C2, eta=c["eta"],
                               m0=c["m0"], kappa_f=nl.kappa_f, iota=iota)
    specA = dyn.absorbing_spec(Problem("A", cfg["problem"]["eps"]), ini["max_norm"], C1=c["C1"],
                               C2=C2, m1=c["m1"], kappa_f=nl.kappa_f, kappa_g=bnl.kappa_g)
    t = cfg["time"]
    recs = []
    for _ in range(ini["count"]):
        s0 = random_state_R(mesh, rng, rng.uniform(0.0, 1.0) * ini["max_norm"])
        recs.append(simulate(problem, s0, t["T"], t["dt"], mesh, nl, stride=t["stride"],
                             tol=cfg["solver"]["tol"]))
    radius = dyn.energy_radius(recs, t["t_cal"])
    checks = [dyn.invariance_check(r, radius) for r in recs]
    files = [write_csv(out / "invariance.csv", ["ic", "initial_norm", "entry_time", "violations"],
                       [(j, r.norms[0], "" if ch.entry_time is None else ch.entry_time, ch.violations)
                        for j, (r, ch) in enumerate(zip(recs, checks))])]
    ok = all(ch.entry_index is not None and ch.violations == 0 for ch in checks)
    metrics = {"calibrated_radius": radius, "C2": C2,
               "R0": specR.radius, "t0": specR.entry_time,
               "R1eps": specA.radius,
               "t1eps": "undefined" if specA.entry_time is None else specA.entry_time,
               "total_violations": sum(ch.violations for ch in checks)}
    return metrics, ok, files


def _exp_attractor(cfg, mesh, out, ctx):
    nl, bnl = _nonlinearities(cfg)
    t = cfg["time"]
    eps = cfg["problem"]["eps"]
    rng = np.random.default_rng(cfg.seed)
    ini = cfg["initial"]
    ics = [random_state_R(mesh, rng, ini["norm"]) for _ in range(ini["count"])]
    d = [(rng.uniform(-1, 1, 2), rng.uniform(-1, 1, 2)) for _ in ics]
    common = dict(burn_in=t["burn_in"], T=t["T"], stride=t["stride"], dt=t["dt"], mesh=mesh,
                  nl=nl, tol=cfg["solver"]["tol"], threads=ctx["threads"])
    cR = dyn.omega_cloud(Problem("R"), ics, description="random smooth R data", **common)
    cA = dyn.omega_cloud(Problem("A", eps), [initial_data_A(s.u, s.v, a, b, eps, mesh)
                                             for s, (a, b) in zip(ics, d)], bnl=bnl,
                         description="matching A data", **common)
    lifted = [dyn.lift(p) for p in cR.points]
    nrm = lambda z: norm_phase("Heps", z, mesh, eps)
    semi = dyn.hausdorff_semidist(cA.points, lifted, nrm)
    nR = cR.norm(mesh)
    max_norm = max(nR(p) for p in cR.points)
    metrics = {"cloud_size": len(cR), "max_norm_R": max_norm, "semidist_A_to_LR": semi,
               "semidist_LR_to_A": dyn.hausdorff_semidist(lifted, cA.points, nrm)}
    X = cR.coordinates(mesh)
    diam = float(np.max(np.linalg.norm(X - X[0], axis=1)))
    # a cloud that has collapsed below solver noise has no meaningful dimension
    if len(cR) >= 10 and diam > 1e-6:
        fit = dyn.box_counting_dim(X, diam * np.logspace(-2, -0.5, 6))
        metrics["box_dimension"] = fit.rate
    else:
        metrics["box_dimension"] = 0.0
        metrics["box_dimension_flag"] = "degenerate"
    files = [write_csv(out / "cloud.csv", ["index", "norm", "u_mid", "v_mid"],
                       [(j, nR(p), p.u[mesh.n_nodes // 2], p.v[mesh.n_nodes // 2])
                        for j, p in enumerate(cR.points)]),
             emit_plot_data(cR, "cloud", out / "cloud.dat", mesh)]
    return metrics, True, files


def _exp_decompose(cfg, mesh, out, ctx):
    nl, _ = _nonlinearities(cfg)
    eps = cfg["problem"]["eps"]
    t = cfg["time"]
    rng = np.random.default_rng(cfg.seed)
    z0 = random_state_A(mesh, rng, eps, cfg["initial"]["norm"])
    res = decomposition_run(z0, eps, cfg["constants"]["beta"], t["T"], t["dt"], mesh, nl,
                            stride=t["stride"], tol=cfg["solver"]["tol"])
    files = [write_csv(out / "decomposition.csv", ["t", "norm_full", "norm_K", "norm_Z"],
                       zip(res.times, res.norm_full, res.norm_k, res.norm_z))]
    metrics = {"residual": res.residual}
    ok = res.residual <= 1e-8
    try:
        fit = dyn.exp_attraction_fit(res.times, res.norm_z, t_min=t["fit_start"])
        metrics["z_decay_rate"] = fit.rate
        ok &= fit.rate > 0
    except ValueError as exc:
        metrics["z_decay_rate"] = str(exc)
        ok = False
    runmax = np.maximum.accumulate(res.norm_k)
    half = runmax[len(runmax) // 2]
    metrics["k_running_max_half"] = float(half)
    metrics["k_running_max_end"] = float(runmax[-1])
    ok &= runmax[-1] <= half * (1 + 1e-9)
    return metrics, bool(ok), files


def run_check(cfg: ExperimentConfig, mesh, out: Path, ctx) -> tuple[dict, bool, list]:
    """Invariant suite: energy identity, adjoints, dissipativity, Poincare, Pi o L."""
    rng = np.random.default_rng(cfg.seed)
    nl, bnl = _nonlinearities(cfg)
    tol = cfg["solver"]["tol"]
    t = cfg["time"]
    T = t["T"] if t["T"] is not None else 1.0
    dt = t["dt"] if t["dt"] is not None else 1e-2
    eps = cfg["problem"]["eps"]
    rows = []

    def add(name, value, threshold):
        rows.append((name, float(value), float(threshold), bool(value <= threshold)))

    for problem in (Problem("R"), Problem("A", eps)):
        s0 = _random_state(problem, mesh, rng, cfg["initial"]["norm"])
        rec = simulate(problem, s0, T, dt, mesh, nl, bnl, tol=tol)
        add(f"energy_identity_{problem.kind}", np.max(np.abs(rec.balance_residuals)), 10 * tol)
    add("adjoint_R", adjoint_defect(assemble(mesh, "generator_R"), mesh), 1e-10)
    add("adjoint_A", adjoint_defect(assemble(mesh, "generator_A", eps), mesh), 1e-10)

    GR, WR = assemble(mesh, "generator_R").matrix, gram(mesh, "H0")
    GA, WA = assemble(mesh, "generator_A", eps).matrix, gram(mesh, "Heps", eps)
    dR = dA = 0.0
    for _ in range(50):
        y = random_state_R(mesh, rng, 1.0).flat()
        v = y[mesh.n_nodes:]
        dR = max(dR, abs((GR @ y) @ (WR @ y) + inner("L2", v, v, mesh)))
        z = random_state_A(mesh, rng, eps, 1.0)
        y = z.flat()
        dA = max(dA, abs((GA @ y) @ (WA @ y) + inner("L2", z.v, z.v, mesh) + eps * z.gamma @ z.gamma))
    add("dissipativity_R", dR, 1e-10)
    add("dissipativity_A", dA, 1e-10)

    lam1 = eigenpairs(mesh, 1).eigenvalues[0]
    worst = 0.0
    for _ in range(200):
        u = rng.standard_normal(mesh.n_nodes)
        lhs = math.sqrt(inner("L2", u, u, mesh))
        rhs = math.sqrt(inner("H1", u, u, mesh) - inner("L2", u, u, mesh)
                        + inner("L2Gamma", u, u, mesh)) / math.sqrt(lam1)
        worst = max(worst, lhs / rhs - 1.0)
    add("poincare_excess", max(worst, 0.0), 1e-8)

    pl = 0.0
    for _ in range(20):
        phi = random_state_R(mesh, rng, 1.0)
        back = dyn.project(dyn.lift(phi))
        pl = max(pl, float(np.max(np.abs(back.flat() - phi.flat()))))
    add("project_lift_identity", pl, 0.0)

    files = [write_csv(out / "check.csv", ["check", "value", "threshold", "pass"], rows)]
    metrics = {name: {"value": val, "pass": ok} for name, val, _, ok in rows}
    return metrics, all(r[3] for r in rows), files


EXPERIMENTS = {
    "simulate": _exp_simulate,
    "eigen": _exp_eigen,
    "sweep_epsilon": _exp_sweep,
    "lipschitz": _exp_lipschitz,
    "absorbing": _exp_absorbing,
    "attractor": _exp_attractor,
    "decompose": _exp_decompose,
    "check": run_check,
}


def run(cfg: ExperimentConfig, out=None, threads: int = 1, dump_matrices: bool = False) -> RunSummary:
    """Run one experiment and write its outputs plus ``summary.json``."""
    out = Path(out if out is not None else cfg["experiment"]["out"])
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    summary = RunSummary(cfg.kind, cfg.digest(), 0.0)
    try:
        mesh = build_mesh(cfg["mesh"]["n_cells"], cfg["mesh"]["length"])
        files = []
        if dump_matrices:
            eps = cfg["problem"]["eps"]
            files += [dump_triplets(assemble(mesh, "robin_laplacian").stiffness, out / "robin_laplacian.txt"),
                      dump_triplets(assemble(mesh, "generator_R").matrix, out / "generator_R.txt"),
                      dump_triplets(assemble(mesh, "generator_A", eps).matrix, out / "generator_A.txt")]
        metrics, ok, more = EXPERIMENTS[cfg.kind](cfg, mesh, out, {"threads": threads})
        summary.metrics, summary.passed = metrics, bool(ok)
        summary.files = sorted(str(Path(f).name) for f in files + more)
    except StepFailure as exc:
        summary.error = f"step failure at t={exc.time}: {exc} (residual {exc.residual:.3e})"
        summary.passed = False
    except (ValueError, ArithmeticError, RuntimeError, OSError) as exc:
        summary.error = f"{type(exc).__name__}: {exc}"
        summary.passed = False
    summary.wall_time = time.perf_counter() - t0
    (out / "summary.json").write_text(summary.to_json(), encoding="utf-8")
    return summary


def _build_parser():
    p = argparse.ArgumentParser(prog="robin-acoustic", description=__doc__.splitlines()[0])
    p.add_argument("--out", help="output directory (overrides the config)")
    p.add_argument("--threads", type=int, default=1, help="worker threads for sweeps and clouds")
    p.add_argument("--seed", type=int, help="random seed (overrides the config)")
    p.add_argument("--dump-matrices", action="store_true",
                   help="write operator matrices as 'row col value' triplets")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run the experiment described by a config file")
    r.add_argument("config")
    c = sub.add_parser("check", help="run the invariant suite")
    c.add_argument("config", nargs="?", help="optional config (default: built-in)")
    return p


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return 1
    try:
        if args.command == "run":
            cfg = load_config(args.config)
        elif args.config:
            cfg = load_config(args.config)
            cfg.values["experiment"]["kind"] = "check"
        else:
            cfg = parse_config(DEFAULT_CHECK, "<default check>")
        if args.seed is not None:
            cfg.values["experiment"]["seed"] = args.seed
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    summary = run(cfg, args.out, args.threads, args.dump_matrices)
    status = {0: "PASS", 2: "FAIL", 1: "ERROR"}[summary.exit_code]
    print(f"{cfg.kind}: {status} ({summary.wall_time:.2f}s) -> {Path(args.out or cfg['experiment']['out'])}")
    if summary.error:
        print(f"error: {summary.error}", file=sys.stderr)
    return summary.exit_code


if __name__ == "__main__":
    sys.exit(main())
