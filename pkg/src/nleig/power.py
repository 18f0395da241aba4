"""Power iterations: the linear baseline, the plain nonlinear version, and a
mean- and norm-controlled variant for non-homogeneous operators such as
denoisers."""
from __future__ import annotations

import io
import math
import subprocess
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import median_filter

from .core import DegenerateInputError, DomainError, GridDomain, as_signal, norm2
from .evaluation import theta as theta_angle
from .flows import EigenpairResult, FlowConfig, IterationRecord
from .functionals import DEFAULT_PROX, ProxConfig


class OperatorT:
    """A black-box map Signal -> Signal of fixed length.

    Build with one of the classmethods. `functional` is set for prox kinds so
    callers can monitor J along a run.
    """

    def __init__(self, kind, fn, n=None, functional=None, matrix=None, reset=None):
        self.kind = kind
        self._fn = fn
        self.n = n
        self.functional = functional
        self.matrix = matrix
        self._reset = reset

    def __repr__(self):
        return f"OperatorT(kind={self.kind!r}, n={self.n})"

    def __call__(self, u):
        u = as_signal(u, self.n)
        out = np.asarray(self._fn(u), dtype=float).ravel()
        if out.size != u.size:
            raise DomainError(f"operator returned {out.size} values for {u.size} inputs")
        if not np.all(np.isfinite(out)):
            raise DomainError("operator returned NaN/Inf")
        return out

    apply = __call__

    def reset(self):
        if self._reset is not None:
            self._reset()

    @classmethod
    def from_matrix(cls, A):
        A = np.asarray(A, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise DomainError("matrix operator must be square")
        return cls("matrix", lambda u: A @ u, n=A.shape[0], matrix=A)

    @classmethod
    def prox_denoiser(cls, func, t: float, cfg: ProxConfig = DEFAULT_PROX, warm_start=True):
        """u -> prox_t^J(u). The dual of the previous call seeds the next one,
        which changes only the speed, not the result beyond cfg accuracy."""
        state = {}

        def fn(u):
            r = func.prox_solve(u, t, cfg, state.get("y") if warm_start else None)
            state["y"] = r.dual
            return r.v

        return cls("prox", fn, n=func.n, functional=func, reset=state.clear)

    @classmethod
    def median(cls, domain: GridDomain, window: int = 3):
        if window < 3 or window % 2 == 0:
            raise ValueError("median window must be odd and >= 3")
        return cls("median", lambda u: median_filter_apply(u, domain, window), n=domain.n)

    @classmethod
    def custom(cls, command, n=None, timeout=60.0):
        """External command: the signal goes to its stdin as CSV
        (node_id,value with a header line), the output is read back from
        stdout in the same format (a bare column of values is also accepted)."""
        if isinstance(command, str):
            import shlex
            command = shlex.split(command)

        def fn(u):
            buf = io.StringIO()
            buf.write("node_id,value\n")
            for k, val in enumerate(u.tolist()):
                buf.write(f"{k},{val!r}\n")
            proc = subprocess.run(command, input=buf.getvalue(), capture_output=True,
                                  text=True, timeout=timeout)
            if proc.returncode != 0:
                raise RuntimeError(f"custom operator exited with {proc.returncode}: "
                                   f"{proc.stderr.strip()[:200]}")
            return parse_signal_text(proc.stdout, u.size)

        return cls("custom", fn, n=n)


def parse_signal_text(text: str, n: int) -> np.ndarray:
    rows = [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    if rows and not _is_number(rows[0].split(",")[-1]):
        rows = rows[1:]
    vals = np.empty(len(rows))
    ids = np.empty(len(rows), dtype=int)
    for k, ln in enumerate(rows):
        parts = ln.split(",")
        vals[k] = float(parts[-1])
        ids[k] = int(float(parts[0])) if len(parts) > 1 else k
    if len(rows) != n:
        raise DomainError(f"expected {n} values from operator, got {len(rows)}")
    out = np.empty(n)
    out[ids] = vals
    return out


def _is_number(s):
    try:
        float(s)
        return True
    except ValueError:
        return False


def median_filter_apply(u, domain: GridDomain, window: int = 3) -> np.ndarray:
    if window < 3 or window % 2 == 0:
        raise ValueError("median window must be odd and >= 3")
    img = as_signal(u, domain.n).reshape(domain.shape)
    size = (1, window) if domain.height == 1 else window
    return median_filter(img, size=size, mode="nearest").ravel()


def rayleigh_dagger(u, Tu) -> float:
    u = np.asarray(u, float)
    Tu = np.asarray(Tu, float)
    c = u - u.mean()
    cc = float(c @ c)
    if cc == 0:
        raise DegenerateInputError("R-dagger is undefined for constant u")
    return float(c @ (Tu - Tu.mean())) / cc


def relaxed_residual(u, Tu) -> float:
    c = u - u.mean()
    lam = rayleigh_dagger(u, Tu)
    return norm2((Tu - Tu.mean()) - lam * c) / norm2(c)


def linear_power_step(L, u) -> np.ndarray:
    v = np.asarray(L, float) @ np.asarray(u, float)
    nv = norm2(v)
    if nv == 0:
        raise DegenerateInputError("L u vanished")
    return v / nv


def naive_nonlinear_power_step(T, u) -> np.ndarray:
    v = T(u)
    nv = norm2(v)
    if nv == 0:
        raise DegenerateInputError("T(u) vanished")
    return v / nv


def linear_power_run(L, u0, cfg: FlowConfig | None = None) -> EigenpairResult:
    cfg = cfg or FlowConfig(max_outer_iterations=10000)
    L = np.asarray(L, float)
    u = np.asarray(u0, float) / norm2(u0)
    hist = []
    reason = ""
    k = 0
    for k in range(cfg.max_outer_iterations):
        un = linear_power_step(L, u)
        disp = norm2(un - u)
        u = un
        Lu = L @ u
        lam = float(u @ Lu)
        th = theta_angle(u, Lu)
        if cfg.record_history:
            hist.append(IterationRecord(k, float("nan"), 1.0, lam, th, float("nan"), disp))
        if disp < cfg.epsilon:
            reason = "epsilon"
        elif cfg.theta_stop is not None and th < cfg.theta_stop:
            reason = "theta"
        if reason:
            break
    Lu = L @ u
    lam = float(u @ Lu)
    res = norm2(Lu - lam * u) / max(norm2(Lu), 1e-300)
    return EigenpairResult(u, lam, theta_angle(u, Lu), res, k + 1, hist, bool(reason),
                           p_star=Lu, stop_reason=reason or "max_iter",
                           algorithm="linear_power")


@dataclass
class PowerRecord:
    k: int
    R_dagger: float
    step_displacement: float
    centered_norm: float
    mean: float
    J: float = float("nan")


@dataclass
class RelaxedEigenResult:
    u_star: np.ndarray
    lambda_star: float
    residual: float
    history: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    theta_final: float = float("nan")
    stop_reason: str = ""
    algorithm: str = "bhpg"


def bhpg_run(T: OperatorT, u0, cfg: FlowConfig | None = None, monitor_J=None) -> RelaxedEigenResult:
    """Power method with the mean and the centred norm of u0 held fixed.

    Each step: v = T(u); v -= mean(v); v *= ||u0 - mean u0|| / ||v||;
    u <- v + mean(u). The last step re-adds the mean of the current iterate,
    so the mean only changes there.
    """
    cfg = cfg or FlowConfig(max_outer_iterations=3000)
    u = as_signal(u0, T.n).copy()
    r0 = norm2(u - u.mean())
    if not r0 > 0:
        raise DegenerateInputError("BHPG initial condition is constant")
    J = monitor_J if monitor_J is not None else T.functional
    T.reset()
    hist, reason = [], ""
    k = 0
    for k in range(cfg.max_outer_iterations):
        Tu = T(u)
        v = Tu - Tu.mean()
        nv = norm2(v)
        if nv == 0:
            raise DegenerateInputError(f"centred T(u) vanished at step {k}")
        un = v * (r0 / nv) + u.mean()
        disp = norm2(un - u)
        lam = rayleigh_dagger(u, Tu)
        th = theta_angle(u - u.mean(), v)
        u = un
        if cfg.record_history:
            hist.append(PowerRecord(k, lam, disp, norm2(u - u.mean()), float(u.mean()),
                                    J(u) if J is not None else float("nan")))
        if disp < cfg.epsilon:
            reason = "epsilon"
            break
        if cfg.theta_stop is not None and th < cfg.theta_stop:
            reason = "theta"
            break
    Tu = T(u)
    c = u - u.mean()
    ct = Tu - Tu.mean()
    th = theta_angle(c, ct) if norm2(ct) > 0 else math.nan
    return RelaxedEigenResult(u, rayleigh_dagger(u, Tu), relaxed_residual(u, Tu), hist, k + 1,
                              bool(reason), th, reason or "max_iter")
