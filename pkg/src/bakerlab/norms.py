"""Anisotropic norm estimation by linear programming over test-function balls.

The weak / strong-stable / strong-unstable norms are suprema of leaf
integrals over balls of test functions.  Discretized on a node set, each
ball is a polytope: |phi(t_i)| <= a, |phi(t_i) - phi(t_j)| <= b |t_i-t_j|^g,
a + b <= 1 (with g = 1 for the Lipschitz ball, g = alpha for the Holder
ball), and the supremum becomes a linear program.  Any feasible nodal vector
extends to a genuine ball element (McShane extension), so the LP value is
the exact supremum of the discretized functional; values converge to the
norms from below as nodes and sampled leaves are refined.

For the Lipschitz ball the adjacent-difference constraints imply all pairs,
so the chain LP is exact.  For the Holder ball the pair set is pruned to a
band plus geometric strides plus seeded random long-range pairs; pruning
only enlarges the feasible set, and the pruning level is recorded in the
report.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional, Sequence, Union

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .grids import GridFunction, HolderParams, merge_t_nodes, _sample_with_sides
from .maps import BakerMap, as_fraction


@dataclass(frozen=True)
class LpConfig:
    """Resolution and pruning knobs for the norm estimators."""

    leaf_grid: int = 128          # base uniform probe nodes per leaf
    witness_leaves: int = 6       # midpoint leaf samples
    kadic_level: int = 2          # include all kappa-adic leaves to this level
    near_pair_depth: int = 10     # pair separations 2^-k, k <= depth
    max_pairs: int = 40
    band: int = 16                # Holder-ball pruning: all |i-j| <= band
    stride_growth: float = 1.2    # geometric ladder of long-range pairs
    cut_rounds: int = 0           # optional constraint-generation passes
    cut_tol: float = 1e-9
    n_random_pairs: int = 32
    rng_seed: int = 20240811
    max_nodes: int = 320          # functional nodes fed to one LP
    merge_tol: Optional[float] = None

    def tol(self) -> float:
        return self.merge_tol if self.merge_tol is not None else 0.25 / self.leaf_grid


@dataclass(frozen=True)
class TestBall:
    """A discretized test-function ball: node positions plus the kind.

    kind 'c1' caps sup|phi| + Lip(phi) <= 1; kind 'holder' caps
    sup|phi| + H^alpha(phi) <= 1.  All constraints are |phi(t_i)| <= a and
    |phi(t_i) - phi(t_j)| <= b |t_i - t_j|^gamma with a + b <= 1.
    """

    kind: str
    nodes: np.ndarray
    alpha: float = 1.0

    def __post_init__(self):
        if self.kind not in ("c1", "holder"):
            raise ValueError("kind must be 'c1' or 'holder'")
        object.__setattr__(self, "nodes", np.asarray(self.nodes, dtype=float))

    @property
    def grid_size(self) -> int:
        return self.nodes.size - 1

    @staticmethod
    def c1(nodes: np.ndarray) -> "TestBall":
        return TestBall("c1", nodes, 1.0)

    @staticmethod
    def holder(nodes: np.ndarray, alpha: float) -> "TestBall":
        return TestBall("holder", nodes, alpha)


@dataclass
class LeafFunctional:
    """A linear functional phi -> sum_i w_i phi(t_i) on one leaf (or pair)."""

    nodes: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.nodes = np.asarray(self.nodes, dtype=float)
        self.weights = np.asarray(self.weights, dtype=float)

    def combine(self, other: "LeafFunctional", sign: float = 1.0) -> "LeafFunctional":
        nodes = np.concatenate([self.nodes, other.nodes])
        weights = np.concatenate([self.weights, sign * other.weights])
        return LeafFunctional(nodes, weights).collapsed()

    def collapsed(self) -> "LeafFunctional":
        order = np.argsort(self.nodes, kind="stable")
        n = self.nodes[order]
        w = self.weights[order]
        uniq, inv = np.unique(n, return_inverse=True)
        acc = np.zeros(uniq.size)
        np.add.at(acc, inv, w)
        return LeafFunctional(uniq, acc)

    def clustered(self, tol: float, max_nodes: int) -> "LeafFunctional":
        """Merge nodes closer than tol; iterate until below the node cap."""
        fn = self.collapsed()
        while True:
            nodes, weights = fn.nodes, fn.weights
            keep = np.abs(weights) > 0.0
            nodes, weights = nodes[keep], weights[keep]
            if nodes.size == 0:
                return LeafFunctional(nodes, weights)
            groups = np.zeros(nodes.size, dtype=int)
            gid = 0
            start = nodes[0]
            for k in range(1, nodes.size):
                if nodes[k] - nodes[k - 1] >= tol or nodes[k] - start >= 4 * tol:
                    gid += 1
                    start = nodes[k]
                groups[k] = gid
            n_groups = gid + 1
            gw = np.zeros(n_groups)
            glo = np.full(n_groups, np.inf)
            ghi = np.full(n_groups, -np.inf)
            np.add.at(gw, groups, weights)
            np.minimum.at(glo, groups, nodes)
            np.maximum.at(ghi, groups, nodes)
            fn = LeafFunctional(0.5 * (glo + ghi), gw)
            if fn.nodes.size <= max_nodes:
                return fn
            tol *= 2.0


def functional_from_grid(f: GridFunction, s_W: Union[float, Fraction],
                         cfg: LpConfig) -> LeafFunctional:
    """Exact quadrature weights of phi -> int_W f phi dm_W for PL phi.

    The node multiset is the union of f's own t-nodes (so jumps are kept
    exact) and a uniform probe grid; per cell the linear-times-linear
    integral is exact.
    """
    probe = np.linspace(0.0, 1.0, cfg.leaf_grid + 1)
    nodes = merge_t_nodes(f.t_nodes, probe)
    vals = np.abs(f.values) if np.iscomplexobj(f.values) else f.values
    col = _sample_with_sides(f.t_nodes, vals, nodes)  # (ns, nn)
    # interpolate in s
    n = f.n_s
    s = float(s_W)
    j = min(int(np.floor(s * n)), n - 1)
    w = s * n - j
    c = (1 - w) * col[j, :] + w * col[j + 1, :]
    h = np.diff(nodes)
    wts = np.zeros(nodes.size)
    wts[:-1] += h * (c[:-1] / 3.0 + c[1:] / 6.0)
    wts[1:] += h * (c[:-1] / 6.0 + c[1:] / 3.0)
    return LeafFunctional(nodes, wts).clustered(cfg.tol(), cfg.max_nodes)


def pair_functional_from_grid(f: GridFunction, s1, s2, cfg: LpConfig) -> LeafFunctional:
    """phi -> int_{W1} f phi - int_{W2} f phi with one shared phi (d0 = 0)."""
    probe = np.linspace(0.0, 1.0, cfg.leaf_grid + 1)
    nodes = merge_t_nodes(f.t_nodes, probe)
    vals = np.abs(f.values) if np.iscomplexobj(f.values) else f.values
    col = _sample_with_sides(f.t_nodes, vals, nodes)
    n = f.n_s

    def col_at(sv: float) -> np.ndarray:
        j = min(int(np.floor(sv * n)), n - 1)
        w = sv * n - j
        return (1 - w) * col[j, :] + w * col[j + 1, :]

    c = col_at(float(s1)) - col_at(float(s2))
    h = np.diff(nodes)
    wts = np.zeros(nodes.size)
    wts[:-1] += h * (c[:-1] / 3.0 + c[1:] / 6.0)
    wts[1:] += h * (c[:-1] / 6.0 + c[1:] / 3.0)
    return LeafFunctional(nodes, wts).clustered(cfg.tol(), cfg.max_nodes)


# ---------------------------------------------------------------------------
# the ball LP
# ---------------------------------------------------------------------------


def _pair_indices(n: int, kind: str, cfg: LpConfig) -> np.ndarray:
    if n <= 1:
        return np.empty((0, 2), dtype=int)
    pairs = [(i, i + 1) for i in range(n - 1)]
    if kind == "holder":
        for off in range(2, min(cfg.band, n - 1) + 1):
            pairs.extend((i, i + off) for i in range(n - off))
        # geometric ladder with dense anchors: long-range pairs at every
        # scale keep chained local constraints from inflating the ball
        off = cfg.band
        while True:
            off = max(off + 1, int(off * cfg.stride_growth))
            if off >= n:
                break
            pairs.extend((i, i + off) for i in range(n - off))
        rng = np.random.default_rng(cfg.rng_seed + 7919 * n)
        for _ in range(cfg.n_random_pairs):
            i, j = rng.integers(0, n, size=2)
            if i != j:
                pairs.append((min(i, j), max(i, j)))
    return np.unique(np.array(pairs, dtype=int), axis=0)


def _solve_ball_lp(weights: np.ndarray, nodes: np.ndarray, pairs: np.ndarray,
                   gamma: float) -> tuple[float, np.ndarray, float, float]:
    n = nodes.size
    npair = pairs.shape[0]
    nrow = 2 * n + 2 * npair + 1
    # box rows: phi_i - a <= 0 and -phi_i - a <= 0
    r_box = np.repeat(np.arange(2 * n), 2)
    c_box = np.empty(4 * n, dtype=int)
    d_box = np.empty(4 * n)
    c_box[0::4] = np.arange(n); d_box[0::4] = 1.0
    c_box[1::4] = n;            d_box[1::4] = -1.0
    c_box[2::4] = np.arange(n); d_box[2::4] = -1.0
    c_box[3::4] = n;            d_box[3::4] = -1.0
    rows = [r_box]; cols = [c_box]; data = [d_box]
    if npair:
        d = np.abs(nodes[pairs[:, 0]] - nodes[pairs[:, 1]]) ** gamma
        base = 2 * n + 2 * np.arange(npair)
        r_p = np.repeat(np.concatenate([base, base + 1]), 3)
        c_p = np.concatenate([
            np.stack([pairs[:, 0], pairs[:, 1], np.full(npair, n + 1)], 1).ravel(),
            np.stack([pairs[:, 1], pairs[:, 0], np.full(npair, n + 1)], 1).ravel()])
        d_p = np.tile(np.array([1.0, -1.0, 0.0]), 2 * npair)
        d_p[2::3] = -np.concatenate([d, d])
        rows.append(r_p); cols.append(c_p); data.append(d_p)
    rows.append(np.array([nrow - 1, nrow - 1]))
    cols.append(np.array([n, n + 1]))
    data.append(np.array([1.0, 1.0]))
    A = sp.csr_matrix((np.concatenate(data),
                       (np.concatenate(rows), np.concatenate(cols))),
                      shape=(nrow, n + 2))
    rhs = np.zeros(nrow)
    rhs[-1] = 1.0
    c = np.concatenate([-weights, [0.0, 0.0]])
    bounds = [(-1.0, 1.0)] * n + [(0.0, 1.0), (0.0, 1.0)]
    res = linprog(c, A_ub=A, b_ub=rhs, bounds=bounds, method="highs")
    if res.status != 0:
        raise RuntimeError(f"ball LP did not converge: {res.message}")
    return max(0.0, float(-res.fun)), res.x[:n], float(res.x[n]), float(res.x[n + 1])


def maximize_over_ball(weights: np.ndarray, nodes, kind: str = "c1",
                       alpha: float = 1.0, cfg: LpConfig = LpConfig()
                       ) -> tuple[float, np.ndarray]:
    """max sum_i w_i phi(t_i) over the discretized C^1 or C^alpha unit ball.

    `nodes` may be a TestBall (which then fixes kind and alpha) or a plain
    node array.  kind is 'c1' (gamma = 1) or 'holder' (gamma = alpha).  For
    the Lipschitz ball the adjacent constraints are exact.  For the Holder
    ball the LP is pruned (band + geometric ladder + seeded random pairs);
    optional constraint-generation rounds re-add violated pairs until the
    full nodal ball is satisfied.  phi = 0 is always feasible, so the value
    is >= 0; solver failure raises.
    """
    if isinstance(nodes, TestBall):
        kind, alpha, nodes = nodes.kind, nodes.alpha, nodes.nodes
    weights = np.asarray(weights, dtype=float)
    nodes = np.asarray(nodes, dtype=float)
    n = nodes.size
    if n == 0 or np.all(weights == 0.0):
        return 0.0, np.zeros(n)
    gamma = 1.0 if kind == "c1" else float(alpha)
    pairs = _pair_indices(n, kind, cfg)
    val, phi, a, b = _solve_ball_lp(weights, nodes, pairs, gamma)
    if kind == "c1":
        return val, phi  # chain constraints imply all pairs exactly
    dmat = np.abs(nodes[:, None] - nodes[None, :]) ** gamma
    for _ in range(cfg.cut_rounds):
        viol = np.abs(phi[:, None] - phi[None, :]) - b * dmat
        np.fill_diagonal(viol, -1.0)
        worst = float(viol.max())
        if worst <= cfg.cut_tol:
            break
        flat = np.argsort(viol, axis=None)[::-1][: max(64, n // 2)]
        ii, jj = np.unravel_index(flat, viol.shape)
        keep = viol[ii, jj] > cfg.cut_tol
        extra = np.stack([np.minimum(ii[keep], jj[keep]),
                          np.maximum(ii[keep], jj[keep])], axis=1)
        pairs = np.unique(np.concatenate([pairs, extra], axis=0), axis=0)
        val, phi, a, b = _solve_ball_lp(weights, nodes, pairs, gamma)
    return val, phi


def functional_sup(fn: LeafFunctional, kind: str, alpha: float,
                   cfg: LpConfig) -> tuple[float, np.ndarray, np.ndarray]:
    val, phi = maximize_over_ball(fn.weights, fn.nodes, kind, alpha, cfg)
    return val, phi, fn.nodes


# ---------------------------------------------------------------------------
# leaf and pair sampling
# ---------------------------------------------------------------------------


def sample_leaves(kappa: int, cfg: LpConfig) -> list[Fraction]:
    pts = set()
    level = cfg.kadic_level
    base = kappa ** level
    for j in range(base + 1):
        pts.add(Fraction(j, base))
    m = cfg.witness_leaves
    for j in range(m):
        pts.add(Fraction(2 * j + 1, 2 * m))
    return sorted(pts)


def sample_leaf_pairs(cfg: LpConfig) -> list[tuple[Fraction, Fraction]]:
    bases = [Fraction(0), Fraction(1, 12), Fraction(1, 8), Fraction(1, 6),
             Fraction(1, 4), Fraction(1, 3), Fraction(5, 12), Fraction(1, 2),
             Fraction(7, 12), Fraction(2, 3), Fraction(3, 4)]
    seps = [Fraction(1), Fraction(3, 4), Fraction(2, 3), Fraction(1, 2),
            Fraction(1, 3), Fraction(1, 4), Fraction(3, 16)]
    seps += [Fraction(1, 2 ** k) for k in range(3, cfg.near_pair_depth + 1)]
    pairs = []
    seen = set()
    for sep in seps:
        for b in bases:
            if b + sep <= 1:
                key = (b, b + sep)
                if key not in seen:
                    seen.add(key)
                    pairs.append(key)
                break
    for b in bases:
        for sep in (Fraction(1, 2), Fraction(1, 4), Fraction(1, 3)):
            if b + sep <= 1 and (b, b + sep) not in seen:
                seen.add((b, b + sep))
                pairs.append((b, b + sep))
    return pairs[: cfg.max_pairs]


def preimage_leaves(map_: BakerMap, leaves: Sequence[Fraction], depth: int) -> list[Fraction]:
    out = set(leaves)
    for s in leaves:
        cur = [as_fraction(s)]
        for _ in range(depth):
            cur = [map_.branch_preimage_s(x, i) for x in cur for i in range(map_.kappa)]
            out.update(cur)
    return sorted(out)


def preimage_pairs(map_: BakerMap, pairs: Sequence[tuple[Fraction, Fraction]],
                   depth: int) -> list[tuple[Fraction, Fraction]]:
    out = list(pairs)
    seen = set(pairs)
    for s1, s2 in pairs:
        cur = [(as_fraction(s1), as_fraction(s2))]
        for _ in range(depth):
            cur = [(map_.branch_preimage_s(a, i), map_.branch_preimage_s(b, i))
                   for a, b in cur for i in range(map_.kappa)]
            for p in cur:
                key = tuple(sorted(p))
                if key not in seen:
                    seen.add(key)
                    out.append(key)
    return out


# ---------------------------------------------------------------------------
# the three norms and the report
# ---------------------------------------------------------------------------


FunctionalSource = Callable[[Union[float, Fraction]], LeafFunctional]
PairSource = Callable[[Union[float, Fraction], Union[float, Fraction]], LeafFunctional]


def grid_source(f: GridFunction, cfg: LpConfig) -> tuple[FunctionalSource, PairSource]:
    return (lambda s: functional_from_grid(f, s, cfg),
            lambda s1, s2: pair_functional_from_grid(f, s1, s2, cfg))


def source_of(obj, cfg: LpConfig) -> tuple[FunctionalSource, PairSource]:
    """Leaf/pair functional builders for any weak-norm-evaluable object."""
    if isinstance(obj, GridFunction):
        return grid_source(obj, cfg)
    if hasattr(obj, "leaf_functional") and hasattr(obj, "pair_functional"):
        return obj.leaf_functional, obj.pair_functional
    raise TypeError(f"cannot evaluate norms of {type(obj)!r}")


@dataclass
class Difference:
    """Formal difference a - b of two weak-norm-evaluable objects."""

    a: object
    b: object
    cfg: LpConfig = field(default_factory=LpConfig)

    def leaf_functional(self, s_W) -> LeafFunctional:
        fa, _ = source_of(self.a, self.cfg)
        fb, _ = source_of(self.b, self.cfg)
        return fa(s_W).combine(fb(s_W), sign=-1.0)

    def pair_functional(self, s1, s2) -> LeafFunctional:
        _, pa = source_of(self.a, self.cfg)
        _, pb = source_of(self.b, self.cfg)
        return pa(s1, s2).combine(pb(s1, s2), sign=-1.0)


@dataclass
class Witness:
    leaf: Optional[float]
    pair: Optional[tuple[float, float]]
    nodes: np.ndarray
    phi: np.ndarray
    value: float

    def to_dict(self) -> dict:
        return {
            "leaf": self.leaf,
            "pair": list(self.pair) if self.pair else None,
            "nodes": [float(x) for x in self.nodes],
            "phi": [float(x) for x in self.phi],
            "value": self.value,
        }


@dataclass
class NormReport:
    weak: float
    strong_stable: float
    strong_unstable: float
    strong_total: float
    witnesses: dict
    resolution: dict

    def to_dict(self) -> dict:
        return {
            "weak": self.weak,
            "strong_stable": self.strong_stable,
            "strong_unstable": self.strong_unstable,
            "strong_total": self.strong_total,
            "witnesses": {k: w.to_dict() for k, w in self.witnesses.items()},
            "resolution": self.resolution,
        }


def _sup_over_leaves(source: FunctionalSource, leaves: Sequence, kind: str,
                     alpha: float, cfg: LpConfig) -> Witness:
    best = Witness(None, None, np.empty(0), np.empty(0), 0.0)
    for s in leaves:
        fn = source(s)
        val, phi, nodes = functional_sup(fn, kind, alpha, cfg)
        if val > best.value:
            best = Witness(float(s), None, nodes, phi, val)
    return best


def weak_norm(obj, leaves: Sequence, cfg: LpConfig = LpConfig()) -> float:
    src, _ = source_of(obj, cfg)
    return _sup_over_leaves(src, leaves, "c1", 1.0, cfg).value


def strong_stable_norm(obj, leaves: Sequence, alpha: float,
                       cfg: LpConfig = LpConfig()) -> float:
    src, _ = source_of(obj, cfg)
    return _sup_over_leaves(src, leaves, "holder", alpha, cfg).value


def strong_unstable_norm(obj, pairs: Sequence[tuple], beta: float,
                         cfg: LpConfig = LpConfig()) -> float:
    _, psrc = source_of(obj, cfg)
    best = 0.0
    for s1, s2 in pairs:
        d = abs(float(s1) - float(s2))
        if d == 0:
            continue
        fn = psrc(s1, s2)
        val, _, _ = functional_sup(fn, "c1", 1.0, cfg)
        best = max(best, val / d ** beta)
    return best


def norm_report(obj, params: HolderParams, cfg: LpConfig = LpConfig(),
                kappa: int = 2,
                leaves: Optional[Sequence] = None,
                pairs: Optional[Sequence[tuple]] = None) -> NormReport:
    """Full (weak, strong stable, strong unstable) report with witnesses."""
    leaves = sample_leaves(kappa, cfg) if leaves is None else leaves
    pairs = sample_leaf_pairs(cfg) if pairs is None else pairs
    src, psrc = source_of(obj, cfg)
    w_wit = _sup_over_leaves(src, leaves, "c1", 1.0, cfg)
    s_wit = _sup_over_leaves(src, leaves, "holder", params.alpha, cfg)
    u_best = Witness(None, None, np.empty(0), np.empty(0), 0.0)
    for s1, s2 in pairs:
        d = abs(float(s1) - float(s2))
        if d == 0:
            continue
        fn = psrc(s1, s2)
        val, phi, nodes = functional_sup(fn, "c1", 1.0, cfg)
        scaled = val / d ** params.beta
        if scaled > u_best.value:
            u_best = Witness(None, (float(s1), float(s2)), nodes, phi, scaled)
    ss = max(s_wit.value, w_wit.value)  # C^alpha ball contains the C^1 ball
    return NormReport(
        weak=w_wit.value,
        strong_stable=ss,
        strong_unstable=u_best.value,
        strong_total=ss + u_best.value,
        witnesses={"weak": w_wit, "strong_stable": s_wit, "strong_unstable": u_best},
        resolution={
            "leaf_grid": cfg.leaf_grid,
            "leaf_count": len(list(leaves)),
            "pair_count": len(list(pairs)),
            "band": cfg.band,
            "stride_growth": cfg.stride_growth,
            "cut_rounds": cfg.cut_rounds,
            "random_pairs": cfg.n_random_pairs,
            "rng_seed": cfg.rng_seed,
        },
    )


def triple_operator_norm(apply_fn: Callable, family: Sequence[tuple[str, GridFunction]],
                         params: HolderParams, cfg: LpConfig = LpConfig(),
                         kappa: int = 2) -> tuple[float, list[dict]]:
    """Lower-bound estimate of sup{ |A f|_w : ||f||_B <= 1 } over a family.

    Each family member is normalized by its measured strong norm.
    """
    leaves = sample_leaves(kappa, cfg)
    pairs = sample_leaf_pairs(cfg)
    rows = []
    best = 0.0
    for name, f in family:
        rep = norm_report(f, params, cfg, kappa, leaves, pairs)
        nb = rep.strong_total
        if nb <= 0:
            continue
        image = apply_fn(f)
        wv = weak_norm(image, leaves, cfg)
        rows.append({"f": name, "weak_of_image": wv, "strong_of_f": nb,
                     "ratio": wv / nb})
        best = max(best, wv / nb)
    return best, rows
