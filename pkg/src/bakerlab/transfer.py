"""Transfer operator, Koopman operator, and the twisted operator.

``apply_transfer`` realizes L f = (f o T^{-1}) / (kappa*lam) on T(M), zero
outside, *exactly* within the carrier class: the output lives on the t-node
multiset adapted to the image strips, with duplicated nodes encoding the
jumps at strip boundaries.  Because every branch is affine and the kinks of
the composed function land on grid nodes, no interpolation error is made,
so conformality holds to rounding.  Deep iterates are kept tractable by a
mass-preserving vertical coarsening once the t-cell count passes a cap.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .grids import GridFunction, ResolutionError
from .maps import BakerMap

DEFAULT_CELL_CAP = 16384


@dataclass(frozen=True)
class TransferOperator:
    map: BakerMap
    n: int = 1

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("iterate order must be >= 1")

    def __call__(self, f: GridFunction, cell_cap: int = DEFAULT_CELL_CAP) -> GridFunction:
        out = f
        for _ in range(self.n):
            out = apply_transfer(self.map, out, cell_cap=cell_cap)
        return out


def _interp_columns_at_s(f: GridFunction, s_points: np.ndarray) -> np.ndarray:
    """Rows of f sampled at arbitrary s (PL in s); shape (len(s_points), nt)."""
    n = f.n_s
    j = np.clip(np.floor(s_points * n).astype(int), 0, n - 1)
    w = (s_points * n - j)[:, None]
    return (1 - w) * f.values[j, :] + w * f.values[j + 1, :]


def apply_transfer(map_: BakerMap, f: GridFunction,
                   cell_cap: Optional[int] = DEFAULT_CELL_CAP) -> GridFunction:
    """One application of the transfer operator; exact on the carrier class."""
    lam = float(map_.lam)
    if f.t_cell_count() < 4.0 / lam - 1e-9:
        raise ResolutionError(
            f"t grid with {f.t_cell_count()} cells cannot resolve strips of width {lam}")
    kappa = map_.kappa
    jac = float(map_.jacobian)
    s = f.s_nodes
    u = f.t_nodes
    dtype = f.values.dtype
    strips = map_.strips()  # (lo, hi, branch), sorted by lo

    node_blocks: list[np.ndarray] = []
    value_blocks: list[np.ndarray] = []
    zero_col = np.zeros((s.size, 1), dtype=dtype)

    prev_hi = 0.0
    for lo, hi, i in strips:
        lo_f, hi_f = float(lo), float(hi)
        pl = map_.layout[i]
        # source s for each output s node (kinks land on grid nodes: exact)
        if pl.flip_horizontal:
            src = (i + 1 - s) / kappa
        else:
            src = (s + i) / kappa
        block = _interp_columns_at_s(f, src) / jac
        if pl.flip_vertical:
            tprime = lo_f + lam * (1.0 - u[::-1])
            block = block[:, ::-1]
        else:
            tprime = lo_f + lam * u
        # pin strip endpoints to the exact rational boundaries: for
        # non-dyadic lam the float products can overshoot by one ulp
        tprime = np.minimum(np.maximum(tprime, lo_f), hi_f)
        tprime[0], tprime[-1] = lo_f, hi_f
        # gap before this strip (zero, with duplicated nodes at both ends)
        if lo_f > prev_hi:
            node_blocks.append(np.array([prev_hi, lo_f]))
            value_blocks.append(np.concatenate([zero_col, zero_col], axis=1))
        node_blocks.append(tprime)
        value_blocks.append(block)
        prev_hi = hi_f
    if prev_hi < 1.0:
        node_blocks.append(np.array([prev_hi, 1.0]))
        value_blocks.append(np.concatenate([zero_col, zero_col], axis=1))

    t_out = np.concatenate(node_blocks)
    v_out = np.concatenate(value_blocks, axis=1)
    # collapse exact triples at shared block boundaries (touching strips with
    # equal one-sided values keep both copies; identical copies are legal)
    out = GridFunction(f.s_nodes, t_out, v_out)
    if cell_cap is not None and out.t_cell_count() > cell_cap:
        out = compress_t(out, cell_cap)
    return out


def transfer_iterates(map_: BakerMap, f: GridFunction, n_max: int,
                      cell_cap: Optional[int] = DEFAULT_CELL_CAP) -> list[GridFunction]:
    """[L f, L^2 f, ..., L^{n_max} f]."""
    out = []
    cur = f
    for _ in range(n_max):
        cur = apply_transfer(map_, cur, cell_cap=cell_cap)
        out.append(cur)
    return out


def compress_t(f: GridFunction, max_cells: int) -> GridFunction:
    """Mass-preserving vertical coarsening onto ~max_cells cells.

    Each coarse cell gets a linear piece whose integral matches the exact
    fine-grid mass per column; nonnegative columns stay nonnegative.
    """
    m = max(2, max_cells // 2)
    edges = np.linspace(0.0, 1.0, m + 1)
    t = f.t_nodes
    dt = np.diff(t)
    # per-column cumulative integral at fine nodes (piecewise quadratic)
    mid = 0.5 * (f.values[:, :-1] + f.values[:, 1:])
    cum = np.concatenate([np.zeros((f.values.shape[0], 1), dtype=f.values.dtype),
                          np.cumsum(mid * dt, axis=1)], axis=1)

    def cum_at(x: float) -> np.ndarray:
        k = np.clip(np.searchsorted(t, x, side="right") - 1, 0, t.size - 2)
        den = t[k + 1] - t[k]
        if den <= 0:
            return cum[:, k + 1]
        w = (x - t[k]) / den
        fx = f.values[:, k] * (1 - w) + f.values[:, k + 1] * w
        return cum[:, k] + (x - t[k]) * 0.5 * (f.values[:, k] + fx)

    cume = np.stack([cum_at(x) for x in edges], axis=1)
    masses = np.diff(cume, axis=1)
    widths = np.diff(edges)

    nodes = np.empty(2 * m)
    nodes[0::2] = edges[:-1]
    nodes[1::2] = edges[1:]
    vals = np.empty((f.values.shape[0], 2 * m), dtype=f.values.dtype)
    for k in range(m):
        left = f.evaluate(f.s_nodes, np.full(f.s_nodes.shape, edges[k]))
        avg2 = 2.0 * masses[:, k] / widths[k]
        right = avg2 - left
        if not np.iscomplexobj(vals):
            neg = (right < 0) & (masses[:, k] >= 0) & (left >= 0)
            left = np.where(neg, avg2, left)
            right = np.where(neg, 0.0, right)
            neg2 = (left < 0) & (masses[:, k] >= 0)
            right = np.where(neg2, avg2, right)
            left = np.where(neg2, 0.0, left)
        vals[:, 2 * k] = left
        vals[:, 2 * k + 1] = right
    nodes[0] = 0.0
    nodes[-1] = 1.0
    return GridFunction(f.s_nodes, nodes, vals)


# ---------------------------------------------------------------------------
# Koopman operator
# ---------------------------------------------------------------------------


def koopman(map_: BakerMap, phi: GridFunction, n: int = 1) -> GridFunction:
    """phi o T^n sampled nodewise on phi's own grid."""
    S, T = np.meshgrid(phi.s_nodes, phi.t_nodes, indexing="ij")
    s, t = S.ravel(), T.ravel()
    for _ in range(n):
        s, t = _forward_arrays(map_, s, t)
    vals = phi.evaluate(s, t).reshape(S.shape)
    return GridFunction(phi.s_nodes, phi.t_nodes.copy(), vals)


def _forward_arrays(map_: BakerMap, s: np.ndarray, t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    kappa = map_.kappa
    lam = float(map_.lam)
    i = np.clip(np.floor(s * kappa).astype(int), 0, kappa - 1)
    y = np.array([float(pl.y_offset) for pl in map_.layout])[i]
    fh = np.array([pl.flip_horizontal for pl in map_.layout])[i]
    fv = np.array([pl.flip_vertical for pl in map_.layout])[i]
    local = kappa * s - i
    s_out = np.where(fh, 1.0 - local, local)
    t_out = y + np.where(fv, lam * (1.0 - t), lam * t)
    return s_out, t_out


# ---------------------------------------------------------------------------
# twisted operator
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TwistedOperator:
    """L_{zg} f = L(e^{zg} f); coincides with L at z = 0."""

    map: BakerMap
    g: GridFunction
    z: complex

    def __call__(self, f: GridFunction, cell_cap: int = DEFAULT_CELL_CAP) -> GridFunction:
        return twisted_apply(self, f, cell_cap=cell_cap)


def twisted_apply(op: TwistedOperator, f: GridFunction,
                  cell_cap: Optional[int] = DEFAULT_CELL_CAP) -> GridFunction:
    g = op.g
    sup_g = float(np.max(np.abs(g.values.real)))
    if abs(op.z.real) * sup_g > 40.0:
        raise OverflowError("`|Re z| * sup|g|` too large; e^{zg} would overflow")
    from .grids import _sample_with_sides  # local import avoids cycle at module load
    gv = _sample_with_sides(g.t_nodes, g.values, f.t_nodes)
    weight = np.exp(op.z * gv)
    fv = f.values * weight
    weighted = GridFunction(f.s_nodes, f.t_nodes.copy(), fv)
    return apply_transfer(op.map, weighted, cell_cap=cell_cap)


def birkhoff_weight_grid(map_: BakerMap, g: GridFunction, n: int) -> GridFunction:
    """S_n g = sum_{j<n} g o T^j sampled on g's grid."""
    S, T = np.meshgrid(g.s_nodes, g.t_nodes, indexing="ij")
    s, t = S.ravel(), T.ravel()
    acc = np.zeros(s.shape)
    for _ in range(n):
        acc += g.evaluate(s, t)
        s, t = _forward_arrays(map_, s, t)
    return GridFunction(g.s_nodes, g.t_nodes.copy(), acc.reshape(S.shape))
