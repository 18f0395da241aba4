"""Eigensolvers for one-homogeneous functionals built on the prox.

ng_*   : norm-increasing flow, u grows while p shrinks, steady state p = lambda u
agp_*  : unit-norm flow, J decreases, steady state p = lambda u
fagp_* : Rayleigh quotient J/H descent, steady state p = R(u) q, q in dH(u)
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .core import DegenerateInputError, as_signal, norm2, normalize, zero_mean
from .evaluation import theta as theta_angle
from .functionals import DEFAULT_PROX, ProxConfig

HISTORY_COLUMNS = ("k", "J", "norm2_u", "lambda", "theta", "R", "step_displacement")


@dataclass
class FlowConfig:
    dt: float | None = None  # None picks the algorithm default
    epsilon: float = 1e-6
    max_outer_iterations: int = 500
    theta_stop: float | None = None
    record_history: bool = True
    prox: ProxConfig = field(default_factory=lambda: DEFAULT_PROX)
    warm_start: bool = True

    def __post_init__(self):
        if self.dt is not None and not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.max_outer_iterations < 1:
            raise ValueError("max_outer_iterations must be >= 1")


@dataclass
class IterationRecord:
    """State after outer step k, i.e. of u^{k+1}."""
    k: int
    J: float
    norm2_u: float
    lam: float
    theta: float
    R: float
    step_displacement: float
    norm2_p: float = float("nan")
    sum_u: float = float("nan")

    def row(self):
        return (self.k, self.J, self.norm2_u, self.lam, self.theta, self.R, self.step_displacement)


@dataclass
class EigenpairResult:
    u_star: np.ndarray
    lambda_star: float
    theta_final: float
    residual: float
    iterations: int
    history: list
    converged: bool
    p_star: np.ndarray | None = None
    q_star: np.ndarray | None = None
    stop_reason: str = ""
    algorithm: str = ""


def write_history_csv(path, history):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(HISTORY_COLUMNS)
        for rec in history:
            wr.writerow([rec.k] + [repr(float(x)) for x in rec.row()[1:]])


def recover_eigen_residual(u, p, mode="single", q=None, lam=0.0) -> float:
    p = np.asarray(p, float)
    if mode == "single":
        r = p - lam * np.asarray(u, float)
    elif mode == "double":
        if q is None:
            raise ValueError("double mode needs q")
        r = p - lam * np.asarray(q, float)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return norm2(r) / max(norm2(p), 1e-300)


def _safe_theta(a, b):
    if norm2(a) == 0 or norm2(b) == 0:
        return float("nan")
    return theta_angle(a, b)


class _Stopper:
    def __init__(self, cfg: FlowConfig):
        self.cfg = cfg

    def __call__(self, disp, th):
        if disp < self.cfg.epsilon:
            return "epsilon"
        if self.cfg.theta_stop is not None and th == th and th < self.cfg.theta_stop:
            return "theta"
        return ""


# ------------------------------------------------------------------ NG

def ng_step(func, u_k, p_k, dt, prox_cfg: ProxConfig = DEFAULT_PROX, warm=None):
    nu, npk = norm2(u_k), norm2(p_k)
    if not 0 < dt < nu:
        raise ValueError(f"NG needs 0 < dt < ||u|| (dt={dt:g}, ||u||={nu:g})")
    if not npk > 0:
        raise DegenerateInputError("NG needs a nonzero subgradient")
    r = 1.0 - dt / nu
    a = u_k / r
    t_eff = dt / (npk * r)
    res = func.prox_solve(a, t_eff, prox_cfg, None if warm is None else warm.get("y"))
    if warm is not None:
        warm["y"] = res.dual
    u_next = res.v
    p_next = (npk / dt) * (u_k - r * u_next)
    return u_next, p_next


def ng_run(func, u0, cfg: FlowConfig | None = None) -> EigenpairResult:
    cfg = cfg or FlowConfig()
    u = zero_mean(as_signal(u0, func.n))
    if not norm2(u) > 0:
        raise DegenerateInputError("NG initial condition is constant")
    J0 = func(u)
    if not J0 > 0:
        raise DegenerateInputError("NG initial condition lies in the nullspace of J")
    # Start from a slightly smoothed u0 so that p0 is an exact subgradient at u^0.
    t0 = 1e-2 * norm2(u) ** 2 / J0
    f = u
    u = func.prox_solve(f, t0, cfg.prox).v
    p = (f - u) / t0
    dt = cfg.dt if cfg.dt is not None else 0.5 * norm2(u)
    warm = {} if cfg.warm_start else None
    stop = _Stopper(cfg)
    hist = []
    reason = ""
    th = _safe_theta(u, p)
    k = 0
    for k in range(cfg.max_outer_iterations):
        u_next, p_next = ng_step(func, u, p, dt, cfg.prox, warm)
        disp = norm2(u_next - u)
        u, p = u_next, p_next
        Ju, nu = func(u), norm2(u)
        th = _safe_theta(u, p)
        if cfg.record_history:
            hist.append(IterationRecord(k, Ju, nu, Ju / nu ** 2, th, float("nan"), disp,
                                        norm2(p), float(u.sum())))
        reason = stop(disp, th)
        if reason:
            break
    lam = func(u) / norm2(u) ** 2
    return EigenpairResult(u, lam, th, recover_eigen_residual(u, p, "single", lam=lam),
                           k + 1, hist, bool(reason), p_star=p,
                           stop_reason=reason or "max_iter", algorithm="ng")


# ------------------------------------------------------------------ AGP

def agp_step(func, u_k, dt, prox_cfg: ProxConfig = DEFAULT_PROX, warm=None):
    nu2 = float(u_k @ u_k)
    lam_k = func(u_k) / nu2
    beta = 1.0 / dt - lam_k
    if not beta > 0:
        raise ValueError(f"AGP needs dt < ||u||^2/J(u) (dt={dt:g}, bound={1 / lam_k:g})")
    res = func.prox_solve(u_k / (beta * dt), 1.0 / beta, prox_cfg,
                          None if warm is None else warm.get("y"))
    if warm is not None:
        warm["y"] = res.dual
    u_half = res.v
    nh = norm2(u_half)
    if nh <= 1e-12 * math.sqrt(nu2):
        raise DegenerateInputError("AGP half step collapsed to zero")
    p_half = (u_k - u_half) / dt + lam_k * u_half
    return u_half / nh, p_half, u_half


def agp_run(func, u0, cfg: FlowConfig | None = None) -> EigenpairResult:
    cfg = cfg or FlowConfig()
    u = zero_mean(as_signal(u0, func.n))
    if not norm2(u) > 0:
        raise DegenerateInputError("AGP initial condition is constant")
    u = normalize(u)
    J0 = func(u)
    if not J0 > 0:
        raise DegenerateInputError("AGP initial condition lies in the nullspace of J")
    dt = cfg.dt if cfg.dt is not None else 0.5 / J0
    warm = {} if cfg.warm_start else None
    stop = _Stopper(cfg)
    hist, reason = [], ""
    th, res, p = float("nan"), float("nan"), None
    k = 0
    for k in range(cfg.max_outer_iterations):
        u_next, p, u_half = agp_step(func, u, dt, cfg.prox, warm)
        disp = norm2(u_next - u)
        u = u_next
        Ju = func(u)
        th = _safe_theta(u_half, p)
        lam_h = func(u_half) / float(u_half @ u_half)
        res = recover_eigen_residual(u_half, p, "single", lam=lam_h)
        if cfg.record_history:
            hist.append(IterationRecord(k, Ju, norm2(u), Ju, th, float("nan"), disp,
                                        norm2(p), float(u.sum())))
        reason = stop(disp, th)
        if reason:
            break
    return EigenpairResult(u, func(u), th, res, k + 1, hist, bool(reason), p_star=p,
                           stop_reason=reason or "max_iter", algorithm="agp")


# ------------------------------------------------------------------ FAGP

def fagp_step(J_func, u_k, q_k, R_k, dt, prox_cfg: ProxConfig = DEFAULT_PROX, warm=None):
    if not dt > 0:
        raise ValueError("FAGP needs dt > 0")
    res = J_func.prox_solve(u_k + dt * R_k * q_k, dt, prox_cfg,
                            None if warm is None else warm.get("y"))
    if warm is not None:
        warm["y"] = res.dual
    u_half = res.v
    nh = norm2(u_half)
    if nh <= 1e-12:
        raise DegenerateInputError("FAGP half step collapsed to zero")
    p_half = R_k * q_k - (u_half - u_k) / dt
    return u_half / nh, p_half, u_half


def fagp_run(J_func, H_func, u0, cfg: FlowConfig | None = None) -> EigenpairResult:
    cfg = cfg or FlowConfig()
    u = zero_mean(as_signal(u0, J_func.n))
    if not norm2(u) > 0:
        raise DegenerateInputError("FAGP initial condition is constant")
    u = normalize(u)
    H0 = H_func(u)
    if not H0 > 0:
        raise DegenerateInputError("FAGP initial condition lies in the nullspace of H")
    R = J_func(u) / H0
    dt = cfg.dt if cfg.dt is not None else (1.0 / R if R > 0 else 1.0)
    warm = {} if cfg.warm_start else None
    stop = _Stopper(cfg)
    hist, reason = [], ""
    th, res, p, q = float("nan"), float("nan"), None, None
    k = 0
    for k in range(cfg.max_outer_iterations):
        Hu = H_func(u)
        if not Hu > 0:
            raise DegenerateInputError(f"H(u) vanished at outer step {k}")
        R = J_func(u) / Hu
        q = H_func.subgradient(u)
        u_next, p, _ = fagp_step(J_func, u, q, R, dt, cfg.prox, warm)
        disp = norm2(u_next - u)
        th = _safe_theta(p, q)
        res = recover_eigen_residual(u, p, "double", q=q, lam=R)
        u = u_next
        Ju, Hn = J_func(u), H_func(u)
        if cfg.record_history:
            hist.append(IterationRecord(k, Ju, norm2(u), Ju / Hn, th, Ju / Hn, disp,
                                        norm2(p), float(u.sum())))
        reason = stop(disp, th)
        if reason:
            break
    Rf = J_func(u) / H_func(u)
    return EigenpairResult(u, Rf, th, res, k + 1, hist, bool(reason), p_star=p, q_star=q,
                           stop_reason=reason or "max_iter", algorithm="fagp")
