"""End-to-end acceptance checks, one test per criterion. Each prints a
PASS/FAIL line (collected again in the terminal summary) before asserting."""
import csv
import filecmp
import json
import math
import os

import numpy as np
import pytest

from nleig import (GraphTV, GridDomain, L1Functional, WeightedGraph, build_grid_graph, cli,
                   moreau_project, prox, zero_mean)
from nleig.evaluation import (THETA_EIGEN, diagnose, gradflow_decay_oracle, kdv_soliton,
                              prox_shrinkage_oracle, threshold_cut_sweep)
from nleig.flows import FlowConfig, agp_run, fagp_run, ng_run
from nleig.functionals import ProxConfig
from nleig.physics import CGConfig, PointwiseQ, T_op, cg_run, kdv_initial_bump
from nleig.power import OperatorT, bhpg_run
from conftest import agreement
from oracles import dense_top_eig, prox_tv1_bvls, prox_tv2_slsqp

ACC = ProxConfig().accuracy  # relative primal accuracy of one prox call
TOL2 = 2 * ACC               # "2x prox tolerance"

_runs = {}  # converged one-homogeneous runs, reused by the cross-estimator check


def _nonincreasing(x, tol=TOL2):
    x = np.asarray(x, float)
    return float(np.max(np.diff(x) - tol * np.abs(x[:-1]), initial=-np.inf)) <= 0


def _nondecreasing(x, tol=TOL2):
    return _nonincreasing(-np.asarray(x, float), tol)


def _ng_runs(grid64):
    if "ng" not in _runs:
        g, J = grid64
        _runs["ng"] = [(J, ng_run(J, np.random.default_rng(s).standard_normal(g.n),
                                  FlowConfig(max_outer_iterations=500)))
                       for s in (1, 2)]
    return _runs["ng"]


def _agp_runs(grid64, moons):
    if "agp" not in _runs:
        g, J = grid64
        G, _, u0 = moons
        Jm = GraphTV(G, 1)
        _runs["agp"] = [
            (J, agp_run(J, np.random.default_rng(1).standard_normal(g.n),
                        FlowConfig(max_outer_iterations=2000))),
            (Jm, agp_run(Jm, u0, FlowConfig(max_outer_iterations=2000))),
        ]
    return _runs["agp"]


def test_ac1_prox_shrinkage(report, rect_eig, grid64):
    f, lam = rect_eig
    _, J = grid64
    errs = []
    for a in (0.1, 0.5, 0.9):
        c = 1 - a
        v = prox(J, f, a / lam)
        errs.append(np.linalg.norm(v - c * f) / np.linalg.norm(c * f))
    zeros = [np.linalg.norm(prox(J, f, a / lam)) / np.linalg.norm(f) for a in (1.0, 1.5, 3.0)]
    ok = max(errs) <= 1e-3 and max(zeros) <= 1e-3
    report("AC1 prox shrinkage", ok,
           f"max collinearity err {max(errs):.2e} (<=1e-3), max |v|/|f| for t>=1/lam {max(zeros):.1e}")
    assert ok


def test_ac2_gradient_flow_decay(report, rect_eig, grid64):
    f, lam = rect_eig
    _, J = grid64
    errs = [gradflow_decay_oracle(J, f, lam, a / lam, steps=20)[2] for a in (0.1, 0.3, 0.5, 0.7, 0.9)]
    sim, _, _ = gradflow_decay_oracle(J, f, lam, 1.2 / lam, steps=24)
    ext = np.linalg.norm(sim) / np.linalg.norm(f)
    ok = max(errs) <= 0.02 and ext <= 1e-3
    report("AC2 gradient-flow decay", ok,
           f"max rel L2 err up to 0.9/lam {max(errs):.2e} (<=2%), |u|/|f| at 1.2/lam {ext:.1e}")
    assert ok


def test_ac3_ng_invariants(report, grid64):
    g, _ = grid64
    details, ok = [], True
    for J, res in _ng_runs(grid64):
        h = res.history
        mean_ok = max(abs(r.sum_u) for r in h) <= 1e-8 * math.sqrt(g.n)
        p_ok = _nonincreasing([r.norm2_p for r in h])
        u_ok = _nondecreasing([r.norm2_u for r in h])
        r_ok = _nonincreasing([r.J / r.norm2_u for r in h])
        hit = next((r.k + 1 for r in h if r.theta < THETA_EIGEN), None)
        conv = res.converged and hit is not None and hit <= 500
        ok &= mean_ok and p_ok and u_ok and r_ok and conv
        details.append(f"[sum_u {mean_ok}, |p| {p_ok}, |u| {u_ok}, J/|u| {r_ok}, "
                       f"theta<pi/360 at k={hit}, stop {res.stop_reason}@{res.iterations}]")
    report("AC3 NG invariants", ok, " ".join(details))
    assert ok


def test_ac4_agp_invariants(report, grid64, moons):
    details, ok = [], True
    for J, res in _agp_runs(grid64, moons):
        h = res.history
        norm_ok = max(abs(r.norm2_u - 1) for r in h) <= 1e-12
        J_ok = _nonincreasing([r.J for r in h])
        eps_ok = res.stop_reason == "epsilon" and h[-1].step_displacement < 1e-6
        res_ok = res.residual <= 1e-2
        ok &= norm_ok and J_ok and eps_ok and res_ok
        details.append(f"[n={J.n}: |u|=1 {norm_ok}, J {J_ok}, disp<1e-6 {eps_ok}@{res.iterations}, "
                       f"residual {res.residual:.1e}]")
    report("AC4 AGP invariants", ok, " ".join(details))
    assert ok


def test_ac5_fagp_two_moons(report, moons):
    G, lab, u0 = moons
    J, H = GraphTV(G, 1), L1Functional(G.n)
    res = fagp_run(J, H, u0, FlowConfig(max_outer_iterations=500, theta_stop=THETA_EIGEN))
    R = [J(u0 - u0.mean()) / H(u0 - u0.mean())] + [r.R for r in res.history]
    mono = _nonincreasing(R)
    agree = agreement(res.u_star, lab)
    best, _, _ = threshold_cut_sweep(G, res.u_star)
    cut_ok = res.lambda_star <= 1.05 * best
    ok = res.converged and mono and agree >= 0.95 and cut_ok
    report("AC5 FAGP two moons", ok,
           f"R nonincreasing {mono}, sign agreement {agree:.3f} (>=0.95), "
           f"R(u*)={res.lambda_star:.6f} vs 1.05*best cut {1.05 * best:.6f}, stop {res.stop_reason}")
    assert ok


def test_ac6_cg_kdv_soliton(report):
    dom = GridDomain(256, 1, 0.125)
    Q = PointwiseQ("kdv", c=1.0)
    res = cg_run(kdv_initial_bump(dom, 1.0, seed=0), Q, dom, CGConfig())
    h = res.history
    u = res.u_star
    lam = res.lambda_star
    if lam > 0 and np.all(np.isfinite(u)):
        x = dom.coords()[:, 0]
        shift = x[np.argmax(u)]
        ana = 3.0 / np.cosh(math.sqrt(lam) * (x - shift) / 2) ** 2
        prof = np.linalg.norm(u - ana) / np.linalg.norm(ana)
    else:
        prof = math.inf
    prof_ok = res.converged and prof <= 0.05
    J_ok = _nonincreasing([r.J for r in h], 1e-12)
    E_ok = max(r.E / r.norm2_u ** 2 for r in h) <= 1e-8
    orth = max(r.orthogonality for r in h)
    orth_ok = orth <= 1e-10
    ok = prof_ok and J_ok and E_ok and orth_ok
    report("AC6 CG KdV soliton", ok,
           f"stop {res.stop_reason}@{res.iterations}, lambda {lam:.4g}, profile err {prof:.3g} (<=5%) "
           f"{prof_ok}, J nonincreasing {J_ok}, max E/|u|^2 {max(r.E / r.norm2_u ** 2 for r in h):.2e} "
           f"{E_ok}, orthogonality {orth:.1e} {orth_ok}")
    assert ok


def test_ac7_bhpg(report, grid64):
    g, J = grid64
    u0 = np.random.default_rng(3).standard_normal(g.n) + 0.5
    res = bhpg_run(OperatorT.prox_denoiser(J, 1.0), u0, FlowConfig(max_outer_iterations=3000))
    r0 = np.linalg.norm(u0 - u0.mean())
    cn = max(abs(r.centered_norm - r0) for r in res.history) / r0
    J_ok = _nonincreasing([J(u0)] + [r.J for r in res.history])
    prox_ok = res.converged and res.residual <= 1e-2 and 0 < res.lambda_star < 1 and cn <= 1e-12

    n = 8
    Qm, _ = np.linalg.qr(np.column_stack([np.ones(n), np.random.default_rng(0).standard_normal((n, n - 1))]))
    A = Qm @ np.diag([1.0, 5.0, 3.0, 2.5, 2.0, 1.5, 1.2, 0.8]) @ Qm.T
    lam, v = dense_top_eig(A)
    lin = bhpg_run(OperatorT.from_matrix(A), np.random.default_rng(1).standard_normal(n),
                   FlowConfig(epsilon=1e-12, max_outer_iterations=20000))
    c = lin.u_star - lin.u_star.mean()
    c /= np.linalg.norm(c)
    vec_err = min(np.linalg.norm(c - v), np.linalg.norm(c + v))
    lin_ok = abs(lin.lambda_star - lam) <= 1e-6 and vec_err <= 1e-6
    ok = prox_ok and J_ok and lin_ok
    report("AC7 BHPG", ok,
           f"centred-norm drift {cn:.1e}, J nonincreasing {J_ok}, residual {res.residual:.1e}, "
           f"lambda* {res.lambda_star:.4f}, matrix: |dlam| {abs(lin.lambda_star - lam):.1e} "
           f"|dv| {vec_err:.1e}")
    assert ok


def test_ac8_cross_estimators(report, grid64, moons):
    details, ok = [], True
    for J, res in _ng_runs(grid64) + _agp_runs(grid64, moons):
        if not res.converged:
            continue
        u = res.u_star
        lam = J(u) / (u @ u)
        lh, is_eig, _ = prox_shrinkage_oracle(J, u, 0.5 / lam)
        rel = abs(lam - lh) / lam
        # subgradient at u from a prox step well below the extinction time
        t = 0.1 / lam
        p = (u - prox(J, u, t)) / t
        dev = diagnose(u, p).ratio_deviation
        this = is_eig and rel <= 0.01 and dev <= 1e-3 * lam
        ok &= this
        details.append(f"[{res.algorithm} n={J.n}: rel diff {rel:.1e}, ratio dev {dev / lam:.1e}*lam]")
    report("AC8 cross-estimator lambda", ok, " ".join(details))
    assert ok


def _random_graph(rng, n):
    I, J = np.triu_indices(n, 1)
    keep = rng.random(I.size) < 0.6
    keep[: n - 1] = True
    return WeightedGraph(n, I[keep], J[keep], rng.uniform(0.2, 2.0, int(keep.sum())))


def test_ac9_small_brute_force(report):
    rng = np.random.default_rng(2024)
    worst = 0.0
    for trial in range(40):
        n = int(rng.integers(2, 7))
        G = _random_graph(rng, n)
        f = rng.standard_normal(n)
        t = float(rng.uniform(0.05, 2.0))
        for q, oracle in ((1, prox_tv1_bvls), (2, prox_tv2_slsqp)):
            worst = max(worst, float(np.max(np.abs(prox(GraphTV(G, q), f, t) - oracle(G, f, t)))))
    prox_ok = worst <= 1e-4

    # eigenpairs validated by the shrinkage oracle: a split path and a split 2x3 grid
    path = WeightedGraph(6, np.arange(5), np.arange(1, 6), np.ones(5))
    grid = build_grid_graph(GridDomain(3, 2))
    pairs = [(GraphTV(path), zero_mean(np.r_[np.ones(3), -np.ones(3)])),
             (GraphTV(grid), np.r_[np.ones(3), -np.ones(3)])]
    mp_worst = 0.0
    for J, u in pairs:
        lam = J(u) / (u @ u)
        lh, is_eig, _ = prox_shrinkage_oracle(J, u, 0.5 / lam)
        assert is_eig and abs(lh - lam) <= 1e-4 * lam
        for mu in (lam, 2 * lam, 10 * lam):
            P = moreau_project(J, mu * u)
            mp_worst = max(mp_worst, np.linalg.norm(P - lam * u) / np.linalg.norm(lam * u))
    mp_ok = mp_worst <= 1e-3
    ok = prox_ok and mp_ok
    report("AC9 small-instance brute force", ok,
           f"max |prox - oracle| {worst:.1e} (<=1e-4), moreau projection rel err {mp_worst:.1e} (<=1e-3)")
    assert ok


CLI_INI = """[run]
algorithm = ng
seed = 5
[domain]
type = grid
width = 32
height = 32
[functional]
type = tv_aniso
[numerics]
theta_stop = eigen
max_iter = 300
[init]
type = noise
"""

EXPECTED = ("history.csv", "final_field.csv", "final_field.pgm", "diagnostics.txt",
            "summary.json", "config.ini")


def test_ac10_cli_determinism(report, tmp_path):
    cfg = tmp_path / "run.ini"
    cfg.write_text(CLI_INI)
    dirs = []
    for name in ("a", "b"):
        out = tmp_path / name
        cli.main(["run", str(cfg), "--output-dir", str(out), "--quiet"])
        (d,) = os.listdir(out)
        dirs.append(out / d)
    same = filecmp.cmp(dirs[0] / "history.csv", dirs[1] / "history.csv", shallow=False)

    out = tmp_path / "sweep"
    cli.main(["sweep", str(cfg), "seed", "1,2,3,4,5", "--output-dir", str(out), "--quiet",
              "--jobs", "2"])
    (sweep,) = os.listdir(out)
    sweep = out / sweep
    rows = list(csv.DictReader(open(sweep / "comparison.csv")))
    complete = 0
    lams = []
    for r in rows:
        d = sweep / r["run_dir"]
        if r["run_dir"] and all((d / f).exists() for f in EXPECTED):
            s = json.load(open(d / "summary.json"))
            complete += 1
            lams.append(s["lambda"])
    ok = same and len(rows) == 5 and complete == 5
    report("AC10 CLI determinism", ok,
           f"bit-identical history {same}, sweep complete result sets {complete}/5, "
           f"lambdas {[round(x, 5) for x in lams]}")
    assert ok
