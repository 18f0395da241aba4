"""Domains, signals and small vector utilities shared by every solver.

Signals are plain 1-D float numpy arrays indexed by node id. A 2-D grid of
width w and height h stores node (row r, col c) at index r*w + c.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree


class DomainError(ValueError):
    """Signal/domain size mismatch or malformed domain description."""


class DegenerateInputError(ValueError):
    """Input that makes an operation undefined (zero norm, constant field, ...)."""


class ConvergenceError(RuntimeError):
    def __init__(self, msg, residual=float("nan")):
        super().__init__(f"{msg} (residual={residual:.3e})")
        self.residual = residual


def as_signal(u, n=None) -> np.ndarray:
    u = np.asarray(u, dtype=float).ravel()
    if n is not None and u.size != n:
        raise DomainError(f"signal has {u.size} entries, domain has {n} nodes")
    if not np.all(np.isfinite(u)):
        raise DomainError("signal contains NaN or Inf")
    return u


@dataclass(frozen=True)
class GridDomain:
    width: int
    height: int = 1
    spacing: float = 1.0

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise DomainError("grid dimensions must be positive")
        if not self.spacing > 0:
            raise DomainError("grid spacing must be positive")

    @property
    def n(self) -> int:
        return self.width * self.height

    @property
    def shape(self):
        return (self.height, self.width)

    @property
    def ndim(self) -> int:
        return 1 if self.height == 1 else 2

    def coords(self) -> np.ndarray:
        """Cell-centre coordinates, origin at the domain centre."""
        h = self.spacing
        x = (np.arange(self.width) + 0.5) * h - self.width * h / 2
        if self.height == 1:
            return x[:, None]
        y = (np.arange(self.height) + 0.5) * h - self.height * h / 2
        X, Y = np.meshgrid(x, y)
        return np.column_stack([X.ravel(), Y.ravel()])


@dataclass(frozen=True, eq=False)
class WeightedGraph:
    """Undirected graph, each edge stored once as (i, j, w) with i < j."""
    n: int
    i: np.ndarray
    j: np.ndarray
    w: np.ndarray
    coords: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        i = np.asarray(self.i, dtype=np.int64).ravel()
        j = np.asarray(self.j, dtype=np.int64).ravel()
        w = np.asarray(self.w, dtype=float).ravel()
        if self.n < 1:
            raise DomainError("graph needs at least one node")
        if not (i.size == j.size == w.size):
            raise DomainError("edge arrays differ in length")
        if i.size:
            if np.any(i >= j):
                raise DomainError("edges must satisfy i < j (no self-loops)")
            if i.min() < 0 or j.max() >= self.n:
                raise DomainError("edge endpoint out of range")
            if np.any(~np.isfinite(w)) or np.any(w < 0):
                raise DomainError("edge weights must be finite and nonnegative")
            key = i * self.n + j
            if np.unique(key).size != key.size:
                raise DomainError("duplicate edge")
        for name, a in (("i", i), ("j", j), ("w", w)):
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    @property
    def edge_count(self) -> int:
        return self.i.size

    def edges(self):
        return list(zip(self.i.tolist(), self.j.tolist(), self.w.tolist()))

    def degree(self, power=1.0) -> np.ndarray:
        """Per-node sum of w**power over incident edges."""
        wp = self.w ** power
        return np.bincount(self.i, wp, self.n) + np.bincount(self.j, wp, self.n)


def inner(u, v) -> float:
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape:
        raise DomainError(f"length mismatch {u.shape} vs {v.shape}")
    return float(np.dot(u.ravel(), v.ravel()))


def norm2(u) -> float:
    return float(np.linalg.norm(np.asarray(u, dtype=float).ravel()))


def norm1(u) -> float:
    return float(np.abs(np.asarray(u, dtype=float)).sum())


def zero_mean(u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    return u - u.mean()


def normalize(u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    nrm = norm2(u)
    if not nrm > 0:
        raise DegenerateInputError("cannot normalize a zero signal")
    return u / nrm


def build_grid_graph(domain: GridDomain, weight: float = 1.0) -> WeightedGraph:
    if not weight > 0:
        raise DomainError("grid weight must be positive")
    idx = np.arange(domain.n).reshape(domain.shape)
    i = np.concatenate([idx[:, :-1].ravel(), idx[:-1, :].ravel()])
    j = np.concatenate([idx[:, 1:].ravel(), idx[1:, :].ravel()])
    order = np.lexsort((j, i))
    return WeightedGraph(domain.n, i[order], j[order], np.full(i.size, float(weight)))


def build_knn_graph(points, k: int = 10, sigma: float | None = None) -> WeightedGraph:
    """Symmetrised kNN graph with Gaussian weights exp(-d^2 / (2 sigma^2)).

    sigma defaults to the mean distance to the k nearest neighbours.
    """
    X = np.asarray(points, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    N = X.shape[0]
    if k < 1:
        raise DomainError("k must be at least 1")
    if k >= N:
        raise DomainError(f"k={k} needs at least k+1 points, got {N}")
    if not np.all(np.isfinite(X)):
        raise DomainError("point coordinates must be finite")
    # query extra neighbours so self-matches and duplicates never eat a slot
    d, nb = cKDTree(X).query(X, k + 1)
    rows = np.repeat(np.arange(N), k + 1)
    cols = nb.ravel()
    dist = d.ravel()
    keep = rows != cols
    rows, cols, dist = rows[keep], cols[keep], dist[keep]
    # coincident points can push self out of the first slot; cap k per row
    _, first, cnt = np.unique(rows, return_index=True, return_counts=True)
    rank = np.arange(rows.size) - np.repeat(first, cnt)
    rows, cols, dist = rows[rank < k], cols[rank < k], dist[rank < k]
    if sigma is None:
        sigma = float(dist.mean()) if dist.mean() > 0 else 1.0
    if not sigma > 0:
        raise DomainError("sigma must be positive")
    lo, hi = np.minimum(rows, cols), np.maximum(rows, cols)
    _, idx = np.unique(lo * N + hi, return_index=True)
    i, j = lo[idx], hi[idx]
    w = np.exp(-((X[i] - X[j]) ** 2).sum(1) / (2 * sigma ** 2))
    return WeightedGraph(N, i, j, w, coords=X)


def connected_components(graph: WeightedGraph) -> np.ndarray:
    """Component label per node (edges with w > 0 only)."""
    from scipy.sparse import coo_matrix
    from scipy.sparse.csgraph import connected_components as cc
    m = graph.w > 0
    A = coo_matrix((np.ones(m.sum()), (graph.i[m], graph.j[m])), shape=(graph.n, graph.n))
    return cc(A, directed=False)[1]


# ---------------------------------------------------------------- file io

def read_points_csv(path) -> np.ndarray:
    pts = np.loadtxt(path, delimiter=",", ndmin=2, comments="#")
    return pts


def read_matrix_csv(path) -> np.ndarray:
    A = np.loadtxt(path, delimiter=",", ndmin=2, comments="#")
    if A.shape[0] != A.shape[1]:
        raise DomainError(f"matrix must be square, got {A.shape}")
    return A


def write_signal_csv(path, u):
    u = np.asarray(u, dtype=float).ravel()
    with open(path, "w") as fh:
        fh.write("node_id,value\n")
        for k, val in enumerate(u.tolist()):
            fh.write(f"{k},{val!r}\n")


def read_signal_csv(path) -> np.ndarray:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    order = np.argsort(data[:, 0], kind="stable")
    ids = data[order, 0].astype(int)
    if not np.array_equal(ids, np.arange(ids.size)):
        raise DomainError(f"{path}: node ids must be 0..N-1")
    return data[order, 1].copy()


def write_pgm(path, u, domain: GridDomain, bits: int = 8):
    """Min-max scaled binary PGM plus a '<path>.scale.txt' sidecar."""
    if bits not in (8, 16):
        raise ValueError("bits must be 8 or 16")
    u = as_signal(u, domain.n)
    lo, hi = float(u.min()), float(u.max())
    maxval = 255 if bits == 8 else 65535
    span = hi - lo
    s = np.zeros_like(u) if span == 0 else (u - lo) / span
    px = np.rint(s * maxval).astype(">u2" if bits == 16 else np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{domain.width} {domain.height}\n{maxval}\n".encode())
        fh.write(px.tobytes())
    with open(str(path) + ".scale.txt", "w") as fh:
        fh.write(f"min={lo!r}\nmax={hi!r}\nbits={bits}\n")


def _pgm_tokens(data: bytes, count: int):
    toks, pos = [], 0
    while len(toks) < count:
        while data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while data[pos:pos + 1] not in (b"\n", b""):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        toks.append(data[start:pos])
    return toks, pos + 1


def read_pgm(path):
    """Returns (signal, GridDomain). Values are mapped back through the
    scaling sidecar when one exists, otherwise scaled to [0, 1]."""
    with open(path, "rb") as fh:
        data = fh.read()
    toks, pos = _pgm_tokens(data, 4)
    magic = toks[0]
    w, h, maxval = int(toks[1]), int(toks[2]), int(toks[3])
    if magic == b"P5":
        dt = np.uint8 if maxval < 256 else ">u2"
        px = np.frombuffer(data[pos:], dtype=dt, count=w * h).astype(float)
    elif magic == b"P2":
        px = np.array(data[pos:].split()[: w * h], dtype=float)
    else:
        raise DomainError(f"{path}: not a PGM file")
    if px.size != w * h:
        raise DomainError(f"{path}: truncated pixel data")
    s = px / maxval
    side = str(path) + ".scale.txt"
    if os.path.exists(side):
        meta = dict(line.strip().split("=", 1) for line in open(side) if "=" in line)
        lo, hi = float(meta["min"]), float(meta["max"])
        s = lo + s * (hi - lo)
    return s, GridDomain(w, h)
