"""Convergence measures and analytic reference solutions."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import DegenerateInputError, GridDomain, WeightedGraph, as_signal, norm2
from .functionals import DEFAULT_PROX, ProxConfig

THETA_EIGEN = math.pi / 360  # half a degree


def theta(u, Tu) -> float:
    """Angle between u and T(u), in [0, pi]."""
    u = np.asarray(u, float).ravel()
    Tu = np.asarray(Tu, float).ravel()
    nu, nt = norm2(u), norm2(Tu)
    if nu == 0 or nt == 0:
        raise DegenerateInputError("theta needs two nonzero vectors")
    c = float(u @ Tu) / (nu * nt)
    return math.acos(min(1.0, max(-1.0, c)))


def local_ratio_map(u, Tu, delta: float | None = None):
    """Pointwise ratio T(u)/u on the mask |u| > delta (NaN elsewhere).

    Returns (ratio_map, max |ratio - median(ratio)| over the mask, delta).
    """
    u = np.asarray(u, float).ravel()
    Tu = np.asarray(Tu, float).ravel()
    if delta is None:
        delta = 0.05 * float(np.abs(u).max())
    if not delta > 0:
        raise ValueError("delta must be positive")
    mask = np.abs(u) > delta
    if not mask.any():
        raise DegenerateInputError("ratio mask is empty")
    lam = np.full(u.size, np.nan)
    lam[mask] = Tu[mask] / u[mask]
    dev = float(np.max(np.abs(lam[mask] - np.median(lam[mask]))))
    return lam, dev, delta


@dataclass
class DiagnosticsReport:
    theta: float
    lambda_hat: float
    ratio_map: np.ndarray
    mask_threshold: float
    residual: float
    ratio_deviation: float = float("nan")

    def to_text(self) -> str:
        lines = [
            f"theta={float(self.theta)!r}",
            f"theta_degrees={float(math.degrees(self.theta))!r}",
            f"numerical_eigenfunction={self.theta < THETA_EIGEN}",
            f"lambda_hat={float(self.lambda_hat)!r}",
            f"residual={float(self.residual)!r}",
            f"mask_threshold={float(self.mask_threshold)!r}",
            f"ratio_max_deviation={float(self.ratio_deviation)!r}",
            f"mask_size={int(np.isfinite(self.ratio_map).sum())}",
        ]
        return "\n".join(lines) + "\n"


def diagnose(u, Tu, delta: float | None = None, against=None) -> DiagnosticsReport:
    """theta, ratio map and residual of T(u) = lambda * w, where w = u unless
    `against` is given (double-nonlinear problems pass Q(u) there)."""
    u = np.asarray(u, float).ravel()
    Tu = np.asarray(Tu, float).ravel()
    w = u if against is None else np.asarray(against, float).ravel()
    th = theta(w, Tu)
    lam = float(Tu @ u) / float(w @ u) if float(w @ u) != 0 else float("nan")
    res = norm2(Tu - lam * w) / max(norm2(Tu), 1e-300)
    try:
        lm, dev, d = local_ratio_map(w, Tu, delta)
    except DegenerateInputError:
        lm, dev, d = np.full(u.size, np.nan), float("nan"), float(delta or 0.0)
    return DiagnosticsReport(th, lam, lm, d, res, dev)


def gradflow_decay_oracle(func, f, lam: float, t: float, steps: int = 20,
                          cfg: ProxConfig = DEFAULT_PROX):
    """Implicit Euler for u_t = -p run to time t, against (1 - lam t)^+ f.

    The error is ||sim - ana|| / ||ana|| while the analytic solution is alive
    and ||sim|| / ||f|| after extinction. Iterates below the prox accuracy
    count as extinct.
    """
    f = as_signal(f)
    if t < 0:
        raise ValueError("t must be nonnegative")
    ana = max(1.0 - lam * t, 0.0) * f
    u = f.copy()
    if t > 0:
        h = t / steps
        y = None
        floor = cfg.accuracy * norm2(f)
        for _ in range(steps):
            r = func.prox_solve(u, h, cfg, y)
            u, y = r.v, r.dual
            if norm2(u) <= floor:
                # extinct up to prox accuracy
                u = np.zeros_like(u)
                break
    na = norm2(ana)
    err = norm2(u - ana) / na if na > 0 else norm2(u) / max(norm2(f), 1e-300)
    return u, ana, err


def prox_shrinkage_oracle(func, f, t: float, cfg: ProxConfig = DEFAULT_PROX):
    """Tests whether prox(f, t) = c f with c in (0, 1]. Returns (lambda_hat,
    is_eigen, error) where lambda_hat = (1 - c)/t and error = ||v - c f||/||c f||.

    Collinearity is judged by the angle between f and v against THETA_EIGEN.
    Full shrinkage (v = 0) gives lambda_hat = nan, is_eigen = False.
    """
    f = as_signal(f)
    if not t > 0:
        raise ValueError("t must be positive")
    if norm2(f) == 0:
        raise DegenerateInputError("oracle needs f != 0")
    v = func.prox_solve(f, t, cfg).v
    if norm2(v) <= cfg.accuracy * norm2(f):
        # indistinguishable from full shrinkage at this prox accuracy
        return float("nan"), False, float("nan")
    c = float(v @ f) / float(f @ f)
    err = norm2(v - c * f) / max(abs(c) * norm2(f), 1e-300)
    ok = 0 < c <= 1 + 1e-12 and theta(f, v) < THETA_EIGEN
    return (1.0 - c) / t, bool(ok), err


def calibrable_lambda(indicator, func) -> float:
    """Weighted cut of C over |C|."""
    ind = np.asarray(indicator, float).ravel()
    if not np.all((ind == 0) | (ind == 1)):
        raise ValueError("indicator must be binary")
    size = ind.sum()
    if size == 0:
        raise DegenerateInputError("empty set")
    return func(ind) / size


def rectangle_indicator(domain: GridDomain, rows, cols) -> np.ndarray:
    """1 on rows[0]:rows[1] x cols[0]:cols[1] (half-open), 0 elsewhere."""
    m = np.zeros(domain.shape)
    m[rows[0]:rows[1], cols[0]:cols[1]] = 1.0
    return m.ravel()


def zero_mean_indicator_lambda(indicator, func) -> float:
    """Eigenvalue of 1_C - |C|/N when that signal is an eigenfunction of a
    one-homogeneous J with constants in its nullspace: cut * N / (|C| (N-|C|))."""
    ind = np.asarray(indicator, float).ravel()
    N, c = ind.size, ind.sum()
    if c == 0 or c == N:
        raise DegenerateInputError("set must be nonempty and proper")
    return func(ind) * N / (c * (N - c))


def kdv_soliton(domain: GridDomain, c: float, lam: float) -> np.ndarray:
    """3c sech^2(sqrt(c lam) x / 2), centred on the domain midpoint."""
    if not (c > 0 and lam > 0):
        raise ValueError("c and lambda must be positive")
    x = domain.coords()[:, 0]
    return 3 * c / np.cosh(math.sqrt(c * lam) * x / 2) ** 2


def threshold_cut_sweep(graph: WeightedGraph, u):
    """Best cut(S)/|S| over the level sets S of u that appear in the l1 coarea
    formula: {u >= v} for levels v > 0 and {u <= v} for levels v < 0.

    Returns (best_ratio, level, side) with side '+' or '-'.
    """
    u = as_signal(u, graph.n)
    N = graph.n
    lo = np.minimum(u[graph.i], u[graph.j])
    hi = np.maximum(u[graph.i], u[graph.j])
    w = graph.w
    levels = np.unique(u)
    us = np.sort(u)
    best = (np.inf, float("nan"), "")

    # {u >= v}: edge cut iff lo < v <= hi
    o = np.argsort(hi)
    hs, whs = hi[o], np.cumsum(w[o][::-1])[::-1]
    o = np.argsort(lo)
    ls, wls = lo[o], np.cumsum(w[o][::-1])[::-1]

    def tail(sorted_vals, cum, v, strict):
        k = np.searchsorted(sorted_vals, v, side="right" if strict else "left")
        out = np.zeros(v.size)
        ok = k < sorted_vals.size
        out[ok] = cum[k[ok]]
        return out

    pos = levels[levels > 0]
    if pos.size:
        cut = tail(hs, whs, pos, False) - tail(ls, wls, pos, False)
        size = N - np.searchsorted(us, pos, side="left")
        ok = (size > 0) & (size < N)
        if ok.any():
            r = cut[ok] / size[ok]
            a = int(np.argmin(r))
            if r[a] < best[0]:
                best = (float(r[a]), float(pos[ok][a]), "+")

    # {u <= v}: edge cut iff lo <= v < hi
    neg = levels[levels < 0]
    if neg.size:
        cut = tail(hs, whs, neg, True) - tail(ls, wls, neg, True)
        size = np.searchsorted(us, neg, side="right")
        ok = (size > 0) & (size < N)
        if ok.any():
            r = cut[ok] / size[ok]
            a = int(np.argmin(r))
            if r[a] < best[0]:
                best = (float(r[a]), float(neg[ok][a]), "-")
    return best
