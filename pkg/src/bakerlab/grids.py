"""Grid carriers for densities on the square and test functions on leaves.

``GridFunction`` holds values on a tensor grid: the horizontal (s) nodes are
always uniform, while the vertical (t) nodes may be non-uniform and may
contain *duplicated* entries.  A duplicated t-node encodes a jump: the first
copy carries the left limit, the second the right limit, and evaluation at
that t is right-continuous.  Between nodes the function is bilinear.  This
representation lets the transfer operator land exactly on the image-strip
partition (piecewise bilinear inside strips, identically zero in the gaps)
without smearing discontinuities.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Optional, Union

import numpy as np

from .maps import StableLeaf


@dataclass(frozen=True)
class HolderParams:
    """Exponents for the anisotropic norms; beta <= 1 - alpha is required."""

    alpha: float = 0.5
    beta: float = 0.5
    beta_prime: float = 0.75

    def __post_init__(self):
        if not (0 < self.alpha < 1):
            raise ValueError("alpha must lie in (0,1)")
        if not (0 < self.beta < 1):
            raise ValueError("beta must lie in (0,1)")
        if self.beta > 1 - self.alpha + 1e-12:
            raise ValueError("beta <= 1 - alpha is required")
        if not (self.beta < self.beta_prime <= 1):
            raise ValueError("beta_prime must lie in (beta, 1]")


class ResolutionError(ValueError):
    """A grid is too coarse for the requested operation."""


def _check_t_nodes(t_nodes: np.ndarray) -> None:
    d = np.diff(t_nodes)
    if np.any(d < 0):
        raise ValueError("t_nodes must be sorted")
    # at most double nodes: a triple would make evaluation ambiguous
    if t_nodes.size >= 3:
        trip = (t_nodes[2:] == t_nodes[:-2])
        if np.any(trip):
            raise ValueError("t_nodes may repeat at most twice")


@dataclass
class GridFunction:
    """Piecewise-bilinear function on [0,1]^2; see module docstring."""

    s_nodes: np.ndarray
    t_nodes: np.ndarray
    values: np.ndarray  # shape (len(s_nodes), len(t_nodes))
    regularity: Optional[str] = None

    def __post_init__(self):
        self.s_nodes = np.asarray(self.s_nodes, dtype=float)
        self.t_nodes = np.asarray(self.t_nodes, dtype=float)
        if self.values.shape != (self.s_nodes.size, self.t_nodes.size):
            raise ValueError("values shape must be (len(s_nodes), len(t_nodes))")
        ns = self.s_nodes.size
        if ns < 2 or not np.allclose(self.s_nodes, np.linspace(0.0, 1.0, ns), atol=1e-14):
            raise ValueError("s_nodes must be the uniform grid on [0,1]")
        if self.t_nodes[0] != 0.0 or self.t_nodes[-1] != 1.0:
            raise ValueError("t_nodes must span [0,1]")
        _check_t_nodes(self.t_nodes)
        if not np.all(np.isfinite(np.abs(self.values))):
            raise ValueError("values must be finite")

    # -- constructors -------------------------------------------------------

    @staticmethod
    def from_callable(fn: Callable[[np.ndarray, np.ndarray], np.ndarray],
                      n_s: int = 128, n_t: int = 128,
                      regularity: Optional[str] = None) -> "GridFunction":
        s = np.linspace(0.0, 1.0, n_s + 1)
        t = np.linspace(0.0, 1.0, n_t + 1)
        S, T = np.meshgrid(s, t, indexing="ij")
        vals = np.asarray(fn(S, T), dtype=float)
        if vals.shape != S.shape:
            vals = np.broadcast_to(vals, S.shape).astype(float)
        return GridFunction(s, t, vals.copy(), regularity)

    @staticmethod
    def constant(c: float, n_s: int = 128, n_t: int = 128) -> "GridFunction":
        s = np.linspace(0.0, 1.0, n_s + 1)
        t = np.linspace(0.0, 1.0, n_t + 1)
        return GridFunction(s, t, np.full((n_s + 1, n_t + 1), float(c)), "C1_M")

    # -- basic queries -------------------------------------------------------

    @property
    def n_s(self) -> int:
        return self.s_nodes.size - 1

    def t_cell_count(self) -> int:
        return int(np.count_nonzero(np.diff(self.t_nodes) > 0))

    def is_uniform_t(self) -> bool:
        nt = self.t_nodes.size
        return bool(np.allclose(self.t_nodes, np.linspace(0.0, 1.0, nt), atol=1e-14))

    def _t_cell_index(self, t: np.ndarray) -> np.ndarray:
        idx = np.searchsorted(self.t_nodes, t, side="right") - 1
        return np.clip(idx, 0, self.t_nodes.size - 2)

    def _s_cell_index(self, s: np.ndarray) -> np.ndarray:
        idx = np.floor(np.asarray(s) * self.n_s).astype(int)
        return np.clip(idx, 0, self.n_s - 1)

    def evaluate(self, s, t) -> np.ndarray:
        """Pointwise evaluation; right-continuous across duplicated t-nodes."""
        s = np.asarray(s, dtype=float)
        t = np.asarray(t, dtype=float)
        s, t = np.broadcast_arrays(s, t)
        js = self._s_cell_index(s)
        jt = self._t_cell_index(t)
        hs = 1.0 / self.n_s
        ts = self.t_nodes
        wt_den = ts[jt + 1] - ts[jt]
        # zero-width cell cannot be selected by right-searchsorted except at t=1
        with np.errstate(invalid="ignore", divide="ignore"):
            wt = np.where(wt_den > 0, (t - ts[jt]) / np.where(wt_den > 0, wt_den, 1.0), 1.0)
        ws = (s - js * hs) / hs
        v00 = self.values[js, jt]
        v01 = self.values[js, jt + 1]
        v10 = self.values[js + 1, jt]
        v11 = self.values[js + 1, jt + 1]
        return ((1 - ws) * (1 - wt) * v00 + (1 - ws) * wt * v01
                + ws * (1 - wt) * v10 + ws * wt * v11)

    def column(self, s_W: Union[float, Fraction]) -> np.ndarray:
        """Values along the stable leaf s = s_W, on this function's t-nodes."""
        s = float(s_W)
        j = min(int(np.floor(s * self.n_s)), self.n_s - 1)
        w = s * self.n_s - j
        return (1 - w) * self.values[j, :] + w * self.values[j + 1, :]

    # -- calculus ------------------------------------------------------------

    def column_masses(self) -> np.ndarray:
        """Exact per-column integral over t (one value per s-node)."""
        dt = np.diff(self.t_nodes)
        mid = 0.5 * (self.values[:, :-1] + self.values[:, 1:])
        return mid @ dt

    def integral(self) -> float:
        """Exact integral over the square (trapezoid is exact for bilinear)."""
        col = self.column_masses()
        hs = 1.0 / self.n_s
        return float(np.sum((col[:-1] + col[1:]) * 0.5 * hs))

    def abs(self) -> "GridFunction":
        return GridFunction(self.s_nodes, self.t_nodes.copy(), np.abs(self.values))

    def scale(self, c: complex) -> "GridFunction":
        return GridFunction(self.s_nodes, self.t_nodes.copy(), self.values * c, self.regularity)

    def resample_t(self, new_t: np.ndarray) -> "GridFunction":
        """Exact resampling onto a refined t-node multiset (must contain ours)."""
        vals = _sample_with_sides(self.t_nodes, self.values, new_t)
        return GridFunction(self.s_nodes, new_t.copy(), vals, self.regularity)

    def combine(self, other: "GridFunction", ca: float = 1.0, cb: float = 1.0) -> "GridFunction":
        """ca*self + cb*other, exact on the merged t-node multiset."""
        if self.s_nodes.size != other.s_nodes.size:
            raise ValueError("combine requires matching s resolution")
        merged = merge_t_nodes(self.t_nodes, other.t_nodes)
        a = _sample_with_sides(self.t_nodes, self.values, merged)
        b = _sample_with_sides(other.t_nodes, other.values, merged)
        return GridFunction(self.s_nodes, merged, ca * a + cb * b)

    def __add__(self, other: "GridFunction") -> "GridFunction":
        return self.combine(other, 1.0, 1.0)

    def __sub__(self, other: "GridFunction") -> "GridFunction":
        return self.combine(other, 1.0, -1.0)

    # -- plain-text round trip (uniform grids) -------------------------------

    def to_csv(self) -> str:
        if not self.is_uniform_t():
            raise ValueError("CSV round trip is defined for uniform grids only")
        buf = io.StringIO()
        buf.write(f"{self.n_s},{self.t_nodes.size - 1}\n")
        for row in self.values:
            buf.write(",".join(repr(float(v)) for v in row) + "\n")
        return buf.getvalue()

    @staticmethod
    def from_csv(text: str) -> "GridFunction":
        lines = [ln for ln in text.strip().splitlines() if ln.strip()]
        n_s, n_t = (int(x) for x in lines[0].split(","))
        vals = np.array([[float(x) for x in ln.split(",")] for ln in lines[1:]])
        if vals.shape != (n_s + 1, n_t + 1):
            raise ValueError("CSV body does not match declared grid size")
        return GridFunction(np.linspace(0, 1, n_s + 1), np.linspace(0, 1, n_t + 1), vals)


# ---------------------------------------------------------------------------
# t-node multiset helpers
# ---------------------------------------------------------------------------


def _counts(t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    vals, counts = np.unique(t, return_counts=True)
    return vals, counts


def merge_t_nodes(t1: np.ndarray, t2: np.ndarray) -> np.ndarray:
    """Union multiset: each value appears max(multiplicity) times (<= 2)."""
    v1, c1 = _counts(t1)
    v2, c2 = _counts(t2)
    allv = np.union1d(v1, v2)
    m1 = np.zeros(allv.size, dtype=int)
    m2 = np.zeros(allv.size, dtype=int)
    m1[np.searchsorted(allv, v1)] = c1
    m2[np.searchsorted(allv, v2)] = c2
    mult = np.maximum(m1, m2)
    return np.repeat(allv, mult)


def _side_flags(new_t: np.ndarray) -> np.ndarray:
    """True where an occurrence is the first of a duplicated pair (left limit)."""
    first_of_pair = np.zeros(new_t.size, dtype=bool)
    first_of_pair[:-1] = new_t[:-1] == new_t[1:]
    return first_of_pair


def _sample_with_sides(t_nodes: np.ndarray, values: np.ndarray, new_t: np.ndarray) -> np.ndarray:
    """Sample columns at new_t, honoring left/right limits at duplicated nodes."""
    left_flag = _side_flags(new_t)
    out = np.empty((values.shape[0], new_t.size), dtype=values.dtype)
    nt = t_nodes.size
    # right-continuous batch for the non-left occurrences
    idx_r = np.clip(np.searchsorted(t_nodes, new_t, side="right") - 1, 0, nt - 2)
    # left-limit batch: the cell *ending* at the node
    idx_l = np.clip(np.searchsorted(t_nodes, new_t, side="left") - 1, 0, nt - 2)
    idx = np.where(left_flag, idx_l, idx_r)
    den = t_nodes[idx + 1] - t_nodes[idx]
    with np.errstate(invalid="ignore", divide="ignore"):
        w = np.where(den > 0, (new_t - t_nodes[idx]) / np.where(den > 0, den, 1.0), 1.0)
    w = np.clip(w, 0.0, 1.0)
    out[:, :] = values[:, idx] * (1 - w) + values[:, idx + 1] * w
    return out


# ---------------------------------------------------------------------------
# leaf functions and Holder seminorms
# ---------------------------------------------------------------------------


@dataclass
class LeafFunction:
    """Test-function carrier on one stable leaf: values on a t-grid."""

    leaf: StableLeaf
    t_nodes: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.t_nodes = np.asarray(self.t_nodes, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.t_nodes.shape != self.values.shape:
            raise ValueError("t_nodes and values must have equal length")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("values must be finite")


def holder_seminorm(phi: LeafFunction, alpha: float) -> tuple[float, float]:
    """(H^alpha seminorm, full C^alpha norm) over all grid-node pairs."""
    if not (0 < alpha <= 1):
        raise ValueError("alpha must lie in (0,1]")
    t = phi.t_nodes
    v = phi.values
    dt = np.abs(t[:, None] - t[None, :])
    dv = np.abs(v[:, None] - v[None, :])
    mask = dt > 0
    with np.errstate(invalid="ignore", divide="ignore"):
        ratios = np.where(mask, dv / np.where(mask, dt, 1.0) ** alpha, 0.0)
    semi = float(ratios.max()) if ratios.size else 0.0
    return semi, semi + float(np.max(np.abs(v)))


def holder_norm_rows(f: GridFunction, gamma: float) -> tuple[float, float]:
    """(seminorm, norm) of f in C^gamma along horizontal (unstable) leaves."""
    t = f.t_nodes
    s = f.s_nodes
    ds = np.abs(s[:, None] - s[None, :])
    mask = ds > 0
    dpow = np.where(mask, ds, 1.0) ** gamma
    semi = 0.0
    for j in range(t.size):
        col = f.values[:, j].real if np.iscomplexobj(f.values) else f.values[:, j]
        dv = np.abs(col[:, None] - col[None, :])
        r = np.where(mask, dv / dpow, 0.0)
        semi = max(semi, float(r.max()))
    return semi, semi + float(np.max(np.abs(f.values)))


def lipschitz_norm_M(g: GridFunction) -> float:
    """|g|_{C^1(M)} = sup|g| + Lipschitz estimate from adjacent grid slopes."""
    v = g.values.real if np.iscomplexobj(g.values) else g.values
    hs = 1.0 / g.n_s
    dt = np.diff(g.t_nodes)
    lip = 0.0
    slopes_s = np.abs(np.diff(v, axis=0)) / hs
    lip = max(lip, float(slopes_s.max()))
    pos = dt > 0
    if np.any(pos):
        slopes_t = np.abs(np.diff(v, axis=1))[:, pos] / dt[pos]
        lip = max(lip, float(slopes_t.max()))
        # diagonal slopes, Euclidean distance
        diag = np.abs(v[1:, 1:] - v[:-1, :-1])[:, pos] / np.sqrt(hs ** 2 + dt[pos] ** 2)
        lip = max(lip, float(diag.max()))
    return float(np.max(np.abs(v))) + lip


# ---------------------------------------------------------------------------
# mollification and products
# ---------------------------------------------------------------------------


def bump_kernel(u: np.ndarray) -> np.ndarray:
    """Smooth bump supported on (-1,1); normalization is applied discretely."""
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    inside = np.abs(u) < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - u[inside] ** 2))
    return out


def _reflect_index(idx: np.ndarray, n: int) -> np.ndarray:
    idx = np.abs(idx)
    idx = np.where(idx > n, 2 * n - idx, idx)
    return np.clip(idx, 0, n)


def mollify(f: GridFunction, eps: float, params: HolderParams) -> GridFunction:
    """Horizontal convolution with the scaled bump; reflecting boundaries.

    Per-node weight normalization keeps constants exactly constant.
    """
    if not (0 < eps < 0.5):
        raise ValueError("eps must lie in (0, 1/2)")
    n = f.n_s
    h = 1.0 / n
    r = int(np.floor(eps / h))
    if r < 2:
        raise ResolutionError("eps smaller than 2 grid cells cannot be resolved")
    offs = np.arange(-r, r + 1)
    w = bump_kernel(offs * h / eps)
    cols = np.empty((n + 1, f.t_nodes.size), dtype=f.values.dtype)
    mat = np.zeros((n + 1, n + 1))
    for j in range(n + 1):
        src = _reflect_index(j + offs, n)
        np.add.at(mat[j], src, w)
    mat /= mat.sum(axis=1, keepdims=True)
    cols = mat @ f.values
    return GridFunction(f.s_nodes, f.t_nodes.copy(), cols, "C1_Wu")


def multiply(g: GridFunction, f: GridFunction) -> GridFunction:
    """Nodewise product g*f on f's grid; g is sampled where needed."""
    if g.s_nodes.size != f.s_nodes.size or not np.array_equal(g.t_nodes, f.t_nodes):
        gv = _sample_with_sides(g.t_nodes, g.values, f.t_nodes) \
            if g.s_nodes.size == f.s_nodes.size else None
        if gv is None:
            raise ValueError("multiply requires matching s resolution")
    else:
        gv = g.values
    return GridFunction(f.s_nodes, f.t_nodes.copy(), gv * f.values)


def restrict_to_leaf(f: GridFunction, W: StableLeaf, n: int) -> LeafFunction:
    """Sample f along s = s_W on a uniform (n+1)-point t-grid."""
    t = np.linspace(0.0, 1.0, n + 1)
    vals = f.evaluate(np.full(t.shape, float(W.s_W)), t)
    vals = vals.real if np.iscomplexobj(vals) else vals
    return LeafFunction(W, t, np.asarray(vals, dtype=float))


# ---------------------------------------------------------------------------
# exact inner product of two carriers
# ---------------------------------------------------------------------------


def inner(f: GridFunction, g: GridFunction) -> float:
    """Exact integral of f*g over the square (bilinear x bilinear per cell)."""
    if f.s_nodes.size != g.s_nodes.size:
        raise ValueError("inner requires matching s resolution")
    merged = merge_t_nodes(f.t_nodes, g.t_nodes)
    A = _sample_with_sides(f.t_nodes, f.values, merged)
    B = _sample_with_sides(g.t_nodes, g.values, merged)
    hs = 1.0 / f.n_s
    dt = np.diff(merged)
    # 1-D mass weights for linear x linear on a cell: [[1/3,1/6],[1/6,1/3]]
    total = 0.0
    w = {(0, 0): 1 / 3, (1, 1): 1 / 3, (0, 1): 1 / 6, (1, 0): 1 / 6}
    for a in (0, 1):
        for b in (0, 1):
            for c in (0, 1):
                for d in (0, 1):
                    Fa = A[a: A.shape[0] - 1 + a, b: A.shape[1] - 1 + b]
                    Gc = B[c: B.shape[0] - 1 + c, d: B.shape[1] - 1 + d]
                    coef = w[(a, c)] * w[(b, d)]
                    total += coef * float(((Fa * Gc) @ dt).sum()) * hs
    return total
