"""Eigenpairs of -Laplace(u) = lambda Q(u) with Neumann boundaries.

An explicit scheme alternates a main step along
    M(u) = s Q(u)/||Q(u)|| - T(u)/||T(u)||,   T = -Laplace, s = sign<Q, T>,
with a complementary step along
    C(u) = -dE + (<dE, T>/||T||^2) T,         E(u) = 0.5 * (sum Q(u))^2,
which keeps the iterate away from the constants.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import DegenerateInputError, GridDomain, as_signal, norm2
from .evaluation import theta as theta_angle
from .flows import EigenpairResult, IterationRecord


class PointwiseQ:
    """Componentwise nonlinearity with its exact derivative.

    kinds: 'kdv' (-c u + u^2/2), 'cubic_schrodinger' (u^3 - u),
    'polynomial' (sum_k coeffs[k] u^k).
    """

    def __init__(self, kind="kdv", c=1.0, coeffs=None):
        if kind == "kdv":
            coeffs = (0.0, -float(c), 0.5)
        elif kind == "cubic_schrodinger":
            coeffs = (0.0, -1.0, 0.0, 1.0)
        elif kind in ("polynomial", "custom"):
            if not coeffs:
                raise ValueError("polynomial Q needs coefficients")
            kind = "polynomial"
        else:
            raise ValueError(f"unknown Q kind {kind!r}")
        self.kind = kind
        self.c = float(c)
        self.coeffs = np.asarray(coeffs, dtype=float)
        self._p = np.polynomial.Polynomial(self.coeffs)
        self._dp = self._p.deriv()

    def __repr__(self):
        return f"PointwiseQ({self.kind!r}, coeffs={self.coeffs.tolist()})"

    def __call__(self, u):
        return self._p(np.asarray(u, float))

    q_apply = __call__

    def q_prime(self, u):
        return self._dp(np.asarray(u, float))


@dataclass
class CGConfig:
    epsilon: float = 1e-8
    max_iterations: int = 20000
    comp_weight_mode: str = "adaptive_step"  # or "merged"
    alpha: float = 1.0  # weight of C in merged mode
    theta_stop: float | None = None
    # None: one complementary step per iteration. A float repeats the
    # complementary step (at most comp_max_repeats times) until E <= tol*||u||^2.
    energy_tolerance: float | None = None
    comp_max_repeats: int = 50
    record_history: bool = True

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.comp_weight_mode not in ("adaptive_step", "merged"):
            raise ValueError(f"unknown comp_weight_mode {self.comp_weight_mode!r}")


def _grid(u, domain: GridDomain):
    return as_signal(u, domain.n).reshape(domain.shape)


def laplacian_neumann(u, domain: GridDomain) -> np.ndarray:
    """Cell-centred 5-point (3-point in 1D) Laplacian with mirrored ghosts."""
    g = _grid(u, domain)
    h2 = domain.spacing ** 2
    out = np.zeros_like(g)
    axes = (1,) if domain.height == 1 else (0, 1)
    for ax in axes:
        if g.shape[ax] < 2:
            continue
        d = np.diff(g, axis=ax)
        flux = np.zeros_like(g)
        # net forward-difference flux into each cell
        sl_hi = [slice(None)] * 2
        sl_lo = [slice(None)] * 2
        sl_hi[ax] = slice(0, -1)
        sl_lo[ax] = slice(1, None)
        flux[tuple(sl_hi)] += d
        flux[tuple(sl_lo)] -= d
        out += flux
    return (out / h2).ravel()


def grad_norm_sq(v, domain: GridDomain) -> float:
    g = _grid(v, domain)
    s = 0.0
    axes = (1,) if domain.height == 1 else (0, 1)
    for ax in axes:
        if g.shape[ax] > 1:
            s += float((np.diff(g, axis=ax) ** 2).sum())
    return s / domain.spacing ** 2


def T_op(u, domain):
    return -laplacian_neumann(u, domain)


def dirichlet_energy(u, domain) -> float:
    return 0.5 * grad_norm_sq(u, domain)


def M_op(u, Q: PointwiseQ, domain) -> np.ndarray:
    Qu = Q(u)
    Tu = T_op(u, domain)
    nq, nt = norm2(Qu), norm2(Tu)
    if nq == 0 or nt == 0:
        raise DegenerateInputError("M(u) needs Q(u) != 0 and T(u) != 0")
    s = 1.0 if float(Qu @ Tu) >= 0 else -1.0
    return s * Qu / nq - Tu / nt


def E_energy(u, Q: PointwiseQ) -> float:
    return 0.5 * float(Q(u).sum()) ** 2


def E_grad(u, Q: PointwiseQ) -> np.ndarray:
    return float(Q(u).sum()) * Q.q_prime(u)


def C_op(u, Q: PointwiseQ, domain) -> np.ndarray:
    Tu = T_op(u, domain)
    tt = float(Tu @ Tu)
    if tt == 0:
        raise DegenerateInputError("C(u) needs T(u) != 0")
    dE = E_grad(u, Q)
    return -dE + (float(dE @ Tu) / tt) * Tu


def dt_main(u_k, M_k, domain, fallback=True):
    """2<Lap u, M>/||grad M||^2. Returns (dt, used_fallback)."""
    g = grad_norm_sq(M_k, domain)
    dt = 2.0 * float(laplacian_neumann(u_k, domain) @ M_k) / g if g > 0 else math.nan
    if fallback and not (math.isfinite(dt) and dt > 0):
        nm = norm2(M_k)
        if nm == 0:
            return 0.0, True
        return 0.1 * domain.spacing ** 2 * norm2(u_k) / nm, True
    return dt, False


def dt_comp(u_half, Q: PointwiseQ, domain, C=None) -> float:
    E = E_energy(u_half, Q)
    if E == 0:
        return 0.0
    if C is None:
        C = C_op(u_half, Q, domain)
    den = float(E_grad(u_half, Q) @ C)
    if den == 0 or not math.isfinite(den):
        return 0.0
    return -E / den


@dataclass
class CGRecord(IterationRecord):
    E: float = float("nan")  # after the complementary step
    orthogonality: float = float("nan")  # max |<T,C>|/(||T|| ||C||) seen this step
    descent: float = float("nan")  # max <dE, C> seen this step
    dt_M: float = float("nan")
    dt_C: float = float("nan")
    fallback: bool = False
    residual: float = float("nan")


def _complement(u, Q, domain, stats, cfg: CGConfig):
    """One complementary step (or several, if an energy tolerance is set)."""
    reps = 1 if cfg.energy_tolerance is None else cfg.comp_max_repeats
    dtc_total = 0.0
    for _ in range(reps):
        Tu = T_op(u, domain)
        C = C_op(u, Q, domain)
        nc = norm2(C)
        if nc > 0:
            stats["orth"] = max(stats["orth"], abs(float(Tu @ C)) / (norm2(Tu) * nc))
            stats["descent"] = max(stats["descent"], float(E_grad(u, Q) @ C))
        dtc = dt_comp(u, Q, domain, C)
        u = u + dtc * C
        dtc_total += dtc
        if cfg.energy_tolerance is None or E_energy(u, Q) <= cfg.energy_tolerance * float(u @ u):
            break
    return u, dtc_total


def eigen_quotient(u, Q, domain) -> float:
    qu = float(Q(u) @ u)
    return float(T_op(u, domain) @ u) / qu if qu != 0 else math.nan


def cg_run(u0, Q: PointwiseQ, domain: GridDomain, cfg: CGConfig | None = None) -> EigenpairResult:
    cfg = cfg or CGConfig()
    u = as_signal(u0, domain.n).copy()
    stats = {"orth": 0.0, "descent": -math.inf}
    u, _ = _complement(u, Q, domain, stats, cfg)
    if norm2(T_op(u, domain)) == 0:
        raise DegenerateInputError("initial condition is in the Laplacian nullspace")
    hist, reason = [], ""
    k = 0
    for k in range(cfg.max_iterations):
        stats = {"orth": 0.0, "descent": -math.inf}
        if cfg.comp_weight_mode == "adaptive_step":
            M = M_op(u, Q, domain)
            if norm2(M) == 0:
                reason = "steady"
                break
            dtm, fb = dt_main(u, M, domain)
            u_half = u + dtm * M
            u_next, dtc = _complement(u_half, Q, domain, stats, cfg)
        else:
            D = M_op(u, Q, domain) + cfg.alpha * C_op(u, Q, domain)
            if norm2(D) == 0:
                reason = "steady"
                break
            dtm, fb = dt_main(u, D, domain)
            u_next, dtc = u + dtm * D, 0.0
        disp = norm2(u_next - u)
        u = u_next
        if not np.all(np.isfinite(u)):
            reason = "diverged"
            break
        Tu, Qu = T_op(u, domain), Q(u)
        lam = eigen_quotient(u, Q, domain)
        th = theta_angle(Qu, Tu) if norm2(Tu) > 0 and norm2(Qu) > 0 else math.nan
        res = norm2(Tu - lam * Qu) / max(norm2(Tu), 1e-300)
        if cfg.record_history:
            hist.append(CGRecord(k, dirichlet_energy(u, domain), norm2(u), lam, th,
                                 float("nan"), disp, float("nan"), float(u.sum()),
                                 E=E_energy(u, Q), orthogonality=stats["orth"],
                                 descent=stats["descent"], dt_M=dtm, dt_C=dtc,
                                 fallback=fb, residual=res))
        if _is_degenerate(u, Tu, lam):
            reason = "degenerate"
            break
        if disp < cfg.epsilon:
            reason = "epsilon"
            break
        if cfg.theta_stop is not None and th == th and th < cfg.theta_stop:
            reason = "theta"
            break
    Tu, Qu = T_op(u, domain), Q(u)
    lam = eigen_quotient(u, Q, domain)
    th = theta_angle(Qu, Tu) if norm2(Tu) > 0 and norm2(Qu) > 0 else math.nan
    res = norm2(Tu - lam * Qu) / max(norm2(Tu), 1e-300)
    ok = reason in ("epsilon", "theta", "steady")
    return EigenpairResult(u, lam, th, res, k + 1, hist, ok, p_star=Tu, q_star=Qu,
                           stop_reason=reason or "max_iter", algorithm="cg")


def _is_degenerate(u, Tu, lam):
    c = u - u.mean()
    return norm2(c) <= 1e-8 * max(norm2(u), 1e-300) or (abs(lam) < 1e-12 and norm2(Tu) < 1e-12)


def kdv_initial_bump(domain: GridDomain, c=1.0, width=1.5, noise=1e-4, seed=0):
    """Gaussian bump scaled so that sum Q(u) = 0 for the KdV nonlinearity,
    plus small Gaussian noise."""
    x = domain.coords()
    r2 = (x ** 2).sum(1)
    g = np.exp(-r2 / (2 * width ** 2))
    A = 2 * c * g.sum() / (g ** 2).sum()
    rng = np.random.default_rng(seed)
    return A * g + noise * rng.standard_normal(domain.n)
