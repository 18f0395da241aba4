"""Command line front end.

    nleig run <config> [--output-dir D] [--seed S] [--quiet]
    nleig validate <field> <config>
    nleig sweep <config> <param> <v1,v2,...> [--jobs N]

Exit codes: 0 converged, 1 finished without converging, 2 input error,
3 solver failure (degenerate trajectory, inner solver breakdown, ...).
"""
from __future__ import annotations

import argparse
import configparser
import csv
import datetime as _dt
import hashlib
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import core, evaluation, flows, functionals, physics, power

EXIT_CONVERGED = 0
EXIT_NOT_CONVERGED = 1
EXIT_INPUT_ERROR = 2
EXIT_SOLVER_ERROR = 3

ALGORITHMS = ("ng", "agp", "fagp", "cg", "bhpg", "linear_power")
FUNCTIONALS = ("tv_aniso", "tv_iso", "l1", "dirichlet")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    algorithm: str
    seed: int
    domain: dict
    functional: dict
    operator: dict
    numerics: dict
    init: dict
    output: dict = field(default_factory=dict)
    source: str = ""
    base_dir: str = "."

    def text(self) -> str:
        """Canonical form, used for hashing and saved next to the outputs."""
        cp = configparser.ConfigParser(interpolation=None)
        cp["run"] = {"algorithm": self.algorithm, "seed": str(self.seed)}
        for name in ("domain", "functional", "operator", "numerics", "init", "output"):
            cp[name] = {k: str(v) for k, v in sorted(getattr(self, name).items())}
        import io
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    def digest(self) -> str:
        return hashlib.sha256(self.text().encode()).hexdigest()[:12]


def _getf(sec, key, default=None, positive=False):
    if key not in sec or str(sec[key]).strip() == "":
        return default
    try:
        v = float(sec[key])
    except ValueError:
        raise ConfigError(f"[{sec.name if hasattr(sec, 'name') else ''}] {key}: "
                          f"expected a number, got {sec[key]!r}") from None
    if positive and not v > 0:
        raise ConfigError(f"{key} must be positive")
    return v


def _geti(sec, key, default=None):
    v = _getf(sec, key, None)
    if v is None:
        return default
    if v != int(v):
        raise ConfigError(f"{key}: expected an integer, got {sec[key]!r}")
    return int(v)


def parse_config_text(text: str, source="<string>", base_dir=".") -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    known = {"run", "domain", "functional", "operator", "numerics", "init", "output"}
    for s in cp.sections():
        if s not in known:
            raise ConfigError(f"{source}: unknown section [{s}]")
    sec = {s: (dict(cp[s]) if cp.has_section(s) else {}) for s in known}
    run = sec["run"]
    algo = run.get("algorithm", "").strip().lower()
    if algo not in ALGORITHMS:
        raise ConfigError(f"{source}: [run] algorithm must be one of {ALGORITHMS}, got {algo!r}")
    seed = _geti(run, "seed", 0)
    cfg = RunConfig(algo, seed, sec["domain"], sec["functional"], sec["operator"],
                    sec["numerics"], sec["init"], sec["output"], source, base_dir)
    validate_config(cfg)
    return cfg


def load_config(path) -> RunConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config_text(text, str(path), os.path.dirname(os.path.abspath(path)))


def validate_config(cfg: RunConfig):
    d, f, op, num, ini = cfg.domain, cfg.functional, cfg.operator, cfg.numerics, cfg.init
    dtype = d.get("type", "grid")
    if dtype not in ("grid", "point_cloud", "two_moons", "matrix"):
        raise ConfigError(f"[domain] type {dtype!r} not recognised")
    if dtype == "grid":
        if _geti(d, "width", 0) < 1 or _geti(d, "height", 1) < 1:
            raise ConfigError("[domain] grid needs a positive width (and height)")
        _getf(d, "spacing", 1.0, positive=True)
    if dtype == "point_cloud" and not d.get("points"):
        raise ConfigError("[domain] point_cloud needs points = <csv file>")
    if dtype in ("point_cloud", "two_moons"):
        if _geti(d, "k", 10) < 1:
            raise ConfigError("[domain] k must be >= 1")
        _getf(d, "sigma", None, positive=True)
    ftype = f.get("type", "dirichlet" if cfg.algorithm == "cg" else "tv_aniso")
    if ftype not in FUNCTIONALS:
        raise ConfigError(f"[functional] type must be one of {FUNCTIONALS}")
    if cfg.algorithm in ("ng", "agp", "fagp") and ftype not in ("tv_aniso", "tv_iso", "l1"):
        raise ConfigError(f"{cfg.algorithm} needs a one-homogeneous functional")
    if cfg.algorithm == "cg" and ftype != "dirichlet":
        raise ConfigError("cg solves the Dirichlet-energy problem; set [functional] type = dirichlet")
    if cfg.algorithm == "cg" and dtype != "grid":
        raise ConfigError("cg needs a grid domain")
    if cfg.algorithm == "fagp" and f.get("h", "l1") not in ("l1", "tv_aniso", "tv_iso"):
        raise ConfigError("[functional] h must be l1, tv_aniso or tv_iso")
    if cfg.algorithm == "bhpg":
        kind = op.get("type", "prox")
        if kind not in ("prox", "median", "matrix", "custom"):
            raise ConfigError(f"[operator] type {kind!r} not recognised")
        if kind == "prox":
            _getf(op, "prox_t", 1.0, positive=True)
        if kind == "median":
            w = _geti(op, "median_window", 3)
            if w < 3 or w % 2 == 0:
                raise ConfigError("[operator] median_window must be odd and >= 3")
        if kind == "custom" and not op.get("command"):
            raise ConfigError("[operator] custom needs command = ...")
        if kind == "matrix" and not op.get("matrix"):
            raise ConfigError("[operator] matrix needs matrix = <csv file>")
    if cfg.algorithm == "linear_power" and not op.get("matrix"):
        raise ConfigError("linear_power needs [operator] matrix = <csv file>")
    if cfg.algorithm == "cg":
        if op.get("q_kind", "kdv") not in ("kdv", "cubic_schrodinger", "polynomial"):
            raise ConfigError("[operator] q_kind must be kdv, cubic_schrodinger or polynomial")
        if op.get("q_kind") == "polynomial" and not op.get("coeffs"):
            raise ConfigError("[operator] polynomial Q needs coeffs = a0,a1,...")
        mode = op.get("comp_weight_mode", "adaptive_step")
        if mode not in ("adaptive_step", "merged"):
            raise ConfigError("[operator] comp_weight_mode must be adaptive_step or merged")
    for key in ("dt", "epsilon", "prox_tolerance", "alpha", "energy_tolerance"):
        _getf(num, key, None, positive=True)
    if _geti(num, "max_iter", 500) < 1:
        raise ConfigError("[numerics] max_iter must be >= 1")
    _geti(num, "prox_max_iter", 100000)
    ts = num.get("theta_stop", "")
    if ts and ts != "eigen":
        _getf(num, "theta_stop", None, positive=True)
    itype = ini.get("type", "noise")
    if itype not in ("noise", "file", "rectangle", "gaussian_bump"):
        raise ConfigError(f"[init] type {itype!r} not recognised")
    if itype == "file" and not ini.get("file"):
        raise ConfigError("[init] file init needs file = <csv or pgm>")
    if itype == "rectangle" and dtype != "grid":
        raise ConfigError("[init] rectangle needs a grid domain")
    if itype == "rectangle" and ini.get("rect"):
        parts = ini["rect"].split(",")
        if len(parts) != 4:
            raise ConfigError("[init] rect must be r0,r1,c0,c1")
    bits = _geti(cfg.output, "pgm_bits", 8)
    if bits not in (8, 16):
        raise ConfigError("[output] pgm_bits must be 8 or 16")


# ------------------------------------------------------------- problem setup

@dataclass
class Problem:
    cfg: RunConfig
    n: int
    grid: core.GridDomain | None = None
    graph: core.WeightedGraph | None = None
    J: object = None
    H: object = None
    T: object = None
    Q: object = None
    matrix: np.ndarray | None = None
    labels: np.ndarray | None = None


def _path(cfg, p):
    return p if os.path.isabs(p) else os.path.join(cfg.base_dir, p)


def build_problem(cfg: RunConfig) -> Problem:
    d = cfg.domain
    dtype = d.get("type", "grid")
    pb = Problem(cfg, 0)
    if dtype == "grid":
        pb.grid = core.GridDomain(_geti(d, "width"), _geti(d, "height", 1), _getf(d, "spacing", 1.0))
        pb.n = pb.grid.n
        if cfg.algorithm not in ("cg",):
            pb.graph = core.build_grid_graph(pb.grid, _getf(d, "weight", 1.0))
    elif dtype in ("point_cloud", "two_moons"):
        if dtype == "point_cloud":
            X = core.read_points_csv(_path(cfg, d["points"]))
        else:
            from sklearn.datasets import make_moons
            X, pb.labels = make_moons(_geti(d, "n_points", 500), noise=_getf(d, "noise", 0.1),
                                      random_state=_geti(d, "data_seed", 0))
        pb.graph = core.build_knn_graph(X, _geti(d, "k", 10), _getf(d, "sigma", None))
        pb.n = pb.graph.n
    op = cfg.operator
    if op.get("matrix"):
        pb.matrix = core.read_matrix_csv(_path(cfg, op["matrix"]))
        if pb.n and pb.matrix.shape[0] != pb.n:
            raise ConfigError(f"matrix is {pb.matrix.shape[0]}x{pb.matrix.shape[0]} "
                              f"but the domain has {pb.n} nodes")
        pb.n = pb.n or pb.matrix.shape[0]
    if pb.n == 0:
        raise ConfigError("domain has no nodes (matrix domain needs [operator] matrix)")
    ftype = cfg.functional.get("type", "dirichlet" if cfg.algorithm == "cg" else "tv_aniso")
    needs_J = cfg.algorithm in ("ng", "agp", "fagp") or (
        cfg.algorithm == "bhpg" and op.get("type", "prox") == "prox")
    if ftype in ("tv_aniso", "tv_iso") and pb.graph is None and not needs_J:
        pass  # matrix problems have no functional
    elif ftype in ("tv_aniso", "tv_iso"):
        if pb.graph is None:
            raise ConfigError("TV needs a grid or point-cloud domain")
        pb.J = functionals.GraphTV(pb.graph, 1 if ftype == "tv_aniso" else 2)
    elif ftype == "l1":
        pb.J = functionals.L1Functional(pb.n)
    if cfg.algorithm == "fagp":
        h = cfg.functional.get("h", "l1")
        pb.H = (functionals.L1Functional(pb.n) if h == "l1"
                else functionals.GraphTV(pb.graph, 1 if h == "tv_aniso" else 2))
    pcfg = prox_config(cfg)
    if cfg.algorithm == "bhpg":
        kind = op.get("type", "prox")
        if kind == "prox":
            if pb.J is None:
                raise ConfigError("prox operator needs a TV or l1 functional")
            pb.T = power.OperatorT.prox_denoiser(pb.J, _getf(op, "prox_t", 1.0), pcfg)
        elif kind == "median":
            if pb.grid is None:
                raise ConfigError("median operator needs a grid domain")
            pb.T = power.OperatorT.median(pb.grid, _geti(op, "median_window", 3))
        elif kind == "matrix":
            pb.T = power.OperatorT.from_matrix(pb.matrix)
        else:
            pb.T = power.OperatorT.custom(op["command"], n=pb.n)
    if cfg.algorithm == "cg":
        coeffs = [float(x) for x in op["coeffs"].split(",")] if op.get("coeffs") else None
        pb.Q = physics.PointwiseQ(op.get("q_kind", "kdv"), _getf(op, "c", 1.0), coeffs)
    return pb


def prox_config(cfg: RunConfig) -> functionals.ProxConfig:
    num = cfg.numerics
    return functionals.ProxConfig(max_inner_iterations=_geti(num, "prox_max_iter", 100000),
                                  dual_tolerance=_getf(num, "prox_tolerance", 1e-10),
                                  step_rule=num.get("prox_step_rule", "fixed"))


def _theta_stop(cfg):
    ts = cfg.numerics.get("theta_stop", "")
    if ts == "eigen":
        return evaluation.THETA_EIGEN
    return _getf(cfg.numerics, "theta_stop", None)


def flow_config(cfg: RunConfig) -> flows.FlowConfig:
    num = cfg.numerics
    return flows.FlowConfig(dt=_getf(num, "dt", None), epsilon=_getf(num, "epsilon", 1e-6),
                            max_outer_iterations=_geti(num, "max_iter", 500),
                            theta_stop=_theta_stop(cfg), prox=prox_config(cfg))


def build_init(pb: Problem, seed: int) -> np.ndarray:
    cfg = pb.cfg
    ini = cfg.init
    itype = ini.get("type", "noise")
    rng = np.random.default_rng(seed)
    amp = _getf(ini, "noise", 1.0)
    if itype == "file":
        p = _path(cfg, ini["file"])
        if p.lower().endswith(".pgm"):
            u, dom = core.read_pgm(p)
            if pb.grid is not None and dom.shape != pb.grid.shape:
                raise ConfigError(f"init image is {dom.width}x{dom.height}, grid is "
                                  f"{pb.grid.width}x{pb.grid.height}")
        else:
            u = core.read_signal_csv(p)
        if u.size != pb.n:
            raise ConfigError(f"init field has {u.size} values, domain has {pb.n}")
        return u
    if itype == "rectangle":
        g = pb.grid
        if ini.get("rect"):
            r0, r1, c0, c1 = (int(x) for x in ini["rect"].split(","))
        else:
            r0, r1, c0, c1 = g.height // 4, 3 * g.height // 4, g.width // 4, 3 * g.width // 4
        u = evaluation.rectangle_indicator(g, (r0, r1), (c0, c1))
        return u + _getf(ini, "noise", 0.0) * rng.standard_normal(pb.n)
    if itype == "gaussian_bump":
        if pb.grid is None:
            raise ConfigError("gaussian_bump needs a grid domain")
        c = _getf(cfg.operator, "c", 1.0)
        return physics.kdv_initial_bump(pb.grid, c, _getf(ini, "width", 1.5),
                                        _getf(ini, "noise", 1e-4), seed)
    return _getf(ini, "offset", 0.0) + amp * rng.standard_normal(pb.n)


def execute(pb: Problem, u0):
    cfg = pb.cfg
    a = cfg.algorithm
    if a == "ng":
        return flows.ng_run(pb.J, u0, flow_config(cfg))
    if a == "agp":
        return flows.agp_run(pb.J, u0, flow_config(cfg))
    if a == "fagp":
        return flows.fagp_run(pb.J, pb.H, u0, flow_config(cfg))
    if a == "bhpg":
        fc = flow_config(cfg)
        if "max_iter" not in cfg.numerics:
            fc.max_outer_iterations = 3000
        return power.bhpg_run(pb.T, u0, fc)
    if a == "linear_power":
        fc = flow_config(cfg)
        if "max_iter" not in cfg.numerics:
            fc.max_outer_iterations = 10000
        return power.linear_power_run(pb.matrix, u0, fc)
    num, op = cfg.numerics, cfg.operator
    cc = physics.CGConfig(epsilon=_getf(num, "epsilon", 1e-8),
                          max_iterations=_geti(num, "max_iter", 20000),
                          comp_weight_mode=op.get("comp_weight_mode", "adaptive_step"),
                          alpha=_getf(op, "alpha", 1.0), theta_stop=_theta_stop(cfg),
                          energy_tolerance=_getf(num, "energy_tolerance", None))
    return physics.cg_run(u0, pb.Q, pb.grid, cc)


def apply_T(pb: Problem, u):
    """(x, T(x), reference) for post-hoc diagnostics of a stored field u.

    reference is None for T(x) = lambda x problems, Q(u) or q for the
    double-nonlinear ones. For one-homogeneous J, T(u) is the subgradient
    (u - prox(u, t))/t at a small t, which returns lambda u exactly when u
    is an eigenfunction with t < 1/lambda.
    """
    a = pb.cfg.algorithm
    if a in ("ng", "agp", "fagp"):
        J = pb.J
        Ju = J(u)
        if not Ju > 0:
            raise core.DegenerateInputError("field lies in the nullspace of J")
        t = 0.1 * float(u @ u) / Ju
        p = (u - J.prox_solve(u, t, prox_config(pb.cfg)).v) / t
        return u, p, (pb.H.subgradient(u) if a == "fagp" else None)
    if a == "cg":
        return u, physics.T_op(u, pb.grid), pb.Q(u)
    if a == "bhpg":
        Tu = pb.T(u)
        return u - u.mean(), Tu - Tu.mean(), None
    return u, pb.matrix @ u, None


def diagnostics_for(pb: Problem, u, delta=None) -> evaluation.DiagnosticsReport:
    x, Tx, ref = apply_T(pb, u)
    return evaluation.diagnose(x, Tx, delta, against=ref)


# ------------------------------------------------------------------ outputs

def _history_rows(res):
    if isinstance(res, power.RelaxedEigenResult):
        return [flows.IterationRecord(r.k, r.J, r.centered_norm, r.R_dagger, float("nan"),
                                      r.R_dagger, r.step_displacement) for r in res.history]
    return res.history


def write_outputs(run_dir, pb: Problem, res, u0, bits=8):
    flows.write_history_csv(os.path.join(run_dir, "history.csv"), _history_rows(res))
    u = res.u_star
    core.write_signal_csv(os.path.join(run_dir, "final_field.csv"), u)
    if pb.grid is not None and pb.grid.height > 1:
        core.write_pgm(os.path.join(run_dir, "final_field.pgm"), u, pb.grid, bits)
    try:
        rep = diagnostics_for(pb, u)
        diag = rep.to_text()
        if np.isfinite(rep.ratio_map).any():
            core.write_signal_csv(os.path.join(run_dir, "ratio_map.csv"),
                                  np.nan_to_num(rep.ratio_map, nan=0.0))
    except (core.DegenerateInputError, ValueError) as exc:
        diag = f"diagnostics_error={exc}\n"
    extra = [f"algorithm={pb.cfg.algorithm}", f"stop_reason={res.stop_reason}",
             f"iterations={res.iterations}", f"converged={res.converged}",
             f"lambda_star={float(res.lambda_star)!r}", f"run_residual={float(res.residual)!r}"]
    if pb.labels is not None:
        agree = float(np.mean((u > 0) == (pb.labels == 0)))
        extra.append(f"cluster_agreement={max(agree, 1 - agree)!r}")
    with open(os.path.join(run_dir, "diagnostics.txt"), "w") as fh:
        fh.write(diag)
        fh.write("\n".join(extra) + "\n")
    summary = {
        "algorithm": pb.cfg.algorithm,
        "lambda": _num(res.lambda_star),
        "theta": _num(res.theta_final),
        "residual": _num(res.residual),
        "iterations": int(res.iterations),
        "converged": bool(res.converged),
        "stop_reason": res.stop_reason,
        "seed": pb.cfg.seed,
        "config_hash": pb.cfg.digest(),
        "nodes": pb.n,
    }
    with open(os.path.join(run_dir, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return summary


def _num(x):
    x = float(x)
    return x if math.isfinite(x) else None


def make_run_dir(parent, cfg: RunConfig):
    stamp = _dt.datetime.now().strftime("%Y%m%d-%H%M%S-%f")
    base = os.path.join(parent, f"{cfg.digest()}_{stamp}")
    path, k = base, 1
    while os.path.exists(path):
        path = f"{base}.{k}"
        k += 1
    os.makedirs(path)
    return path


def run_config(cfg: RunConfig, output_dir, quiet=False):
    """Runs one config; returns (exit_code, run_dir or None, summary or None)."""
    try:
        pb = build_problem(cfg)
        u0 = build_init(pb, cfg.seed)
    except (ConfigError, core.DomainError, OSError, ValueError) as exc:
        _err(f"input error: {exc}")
        return EXIT_INPUT_ERROR, None, None
    run_dir = make_run_dir(output_dir, cfg)
    with open(os.path.join(run_dir, "config.ini"), "w") as fh:
        fh.write(cfg.text())
    try:
        res = execute(pb, u0)
    except (core.DegenerateInputError, core.ConvergenceError, RuntimeError, ValueError) as exc:
        with open(os.path.join(run_dir, "ERROR.txt"), "w") as fh:
            fh.write(f"{type(exc).__name__}: {exc}\n")
        _err(f"solver error: {exc}")
        return EXIT_SOLVER_ERROR, run_dir, None
    summary = write_outputs(run_dir, pb, res, u0, _geti(cfg.output, "pgm_bits", 8))
    if not quiet:
        print(f"{cfg.algorithm}: lambda={summary['lambda']} theta={summary['theta']} "
              f"iterations={summary['iterations']} converged={summary['converged']}")
        print(f"run_dir={run_dir}")
    return (EXIT_CONVERGED if res.converged else EXIT_NOT_CONVERGED), run_dir, summary


def _err(msg):
    print(msg, file=sys.stderr)


def cmd_run(args):
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
    except ConfigError as exc:
        _err(f"config error: {exc}")
        return EXIT_INPUT_ERROR
    code, _, _ = run_config(cfg, args.output_dir, args.quiet)
    return code


def cmd_validate(args):
    try:
        cfg = load_config(args.config)
        pb = build_problem(cfg)
        if args.field.lower().endswith(".pgm"):
            u, dom = core.read_pgm(args.field)
            if pb.grid is None or dom.shape != pb.grid.shape:
                raise core.DomainError(f"field is {dom.width}x{dom.height}, config domain differs")
        else:
            u = core.read_signal_csv(args.field)
        if u.size != pb.n:
            raise core.DomainError(f"field has {u.size} values, config domain has {pb.n} nodes")
        rep = diagnostics_for(pb, u)
    except (ConfigError, core.DomainError, OSError, ValueError) as exc:
        _err(f"input error: {exc}")
        return EXIT_INPUT_ERROR
    text = rep.to_text()
    if args.output_dir:
        os.makedirs(args.output_dir, exist_ok=True)
        with open(os.path.join(args.output_dir, "diagnostics.txt"), "w") as fh:
            fh.write(text)
    if not args.quiet:
        sys.stdout.write(text)
    return EXIT_CONVERGED


def _set_param(cfg: RunConfig, param: str, value: str) -> RunConfig:
    import copy
    new = copy.deepcopy(cfg)
    if param == "seed":
        new.seed = int(float(value))
        return new
    if "." in param:
        sec, key = param.split(".", 1)
        sections = [sec]
    else:
        key = param
        sections = [s for s in ("numerics", "operator", "domain", "init", "functional")
                    if key in getattr(new, s)] or ["numerics"]
    try:
        float(value)
    except ValueError:
        raise ConfigError(f"sweep value {value!r} is not numeric") from None
    for s in sections:
        if s not in ("numerics", "operator", "domain", "init", "functional", "output"):
            raise ConfigError(f"unknown section {s!r} in sweep parameter")
        getattr(new, s)[key] = value
    validate_config(new)
    return new


def _sweep_one(args):
    cfg, out, value = args
    try:
        code, run_dir, summary = run_config(cfg, out, quiet=True)
    except Exception as exc:  # keep the sweep going
        return value, EXIT_SOLVER_ERROR, None, f"{type(exc).__name__}: {exc}"
    return value, code, summary, run_dir


def cmd_sweep(args):
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    if not values:
        _err("input error: empty value list")
        return EXIT_INPUT_ERROR
    try:
        base = load_config(args.config)
        if args.seed is not None:
            base.seed = args.seed
        cfgs = [_set_param(base, args.param, v) for v in values]
    except ConfigError as exc:
        _err(f"config error: {exc}")
        return EXIT_INPUT_ERROR
    out = os.path.join(args.output_dir, f"sweep_{base.digest()}_"
                       f"{_dt.datetime.now().strftime('%Y%m%d-%H%M%S-%f')}")
    os.makedirs(out)
    jobs = [(c, out, v) for c, v in zip(cfgs, values)]
    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as ex:
            results = list(ex.map(_sweep_one, jobs))
    else:
        results = [_sweep_one(j) for j in jobs]
    with open(os.path.join(out, "comparison.csv"), "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["value", "lambda", "theta", "iterations", "status", "run_dir"])
        for value, code, summary, info in results:
            if summary is None:
                wr.writerow([value, "", "", "", f"error({code})", info or ""])
            else:
                wr.writerow([value, summary["lambda"], summary["theta"], summary["iterations"],
                             "converged" if summary["converged"] else "not_converged",
                             os.path.basename(info)])
    if not args.quiet:
        for value, code, summary, _ in results:
            lam = summary["lambda"] if summary else None
            print(f"{args.param}={value}: exit={code} lambda={lam}")
        print(f"sweep_dir={out}")
    return EXIT_CONVERGED if all(c == EXIT_CONVERGED for _, c, _, _ in results) else EXIT_NOT_CONVERGED


def build_parser():
    ap = argparse.ArgumentParser(prog="nleig", description="Nonlinear eigenpair solvers.")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--output-dir", default="runs", help="parent directory for run outputs")
        p.add_argument("--quiet", action="store_true")
        p.add_argument("--seed", type=int, default=None, help="overrides [run] seed")

    p = sub.add_parser("run", help="run one configuration")
    p.add_argument("config")
    common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("validate", help="diagnostics for a stored field")
    p.add_argument("field")
    p.add_argument("config")
    common(p)
    p.set_defaults(func=cmd_validate, output_dir=None)

    p = sub.add_parser("sweep", help="run one config per parameter value")
    p.add_argument("config")
    p.add_argument("param")
    p.add_argument("values", help="comma-separated values")
    p.add_argument("--jobs", type=int, default=1)
    common(p)
    p.set_defaults(func=cmd_sweep)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
