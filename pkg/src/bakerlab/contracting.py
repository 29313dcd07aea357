"""The warm-up model: a smooth contraction of the interval.

The transfer operator acts on distributions by duality, mu -> mu(. o T),
and contracts every normalized distribution to the point mass at the fixed
point, at rate governed by the contraction factor raised to the Holder
exponent of the test-function ball.  Measures are carried as a density
part plus atoms; pushforwards keep the density and atoms and compose the
map lazily, so delta at the fixed point stays machine-exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .norms import LpConfig, maximize_over_ball


@dataclass(frozen=True)
class ContractionMap:
    name: str
    T: Callable[[np.ndarray], np.ndarray]
    lambda_bound: float

    def __post_init__(self):
        if not (0 < self.lambda_bound < 1):
            raise ValueError("lambda_bound must lie in (0,1)")
        x = np.linspace(0.0, 1.0, 4097)
        y = np.asarray(self.T(x), dtype=float)
        if y.min() < -1e-12 or y.max() > 1 + 1e-12:
            raise ValueError("T must map [0,1] into itself")
        slopes = np.abs(np.diff(y)) / np.diff(x)
        if slopes.max() > self.lambda_bound + 1e-9:
            raise ValueError("T is not a lambda_bound-contraction on the grid")


NAMED_MAPS = {
    "half": ContractionMap("half", lambda x: 0.5 * x, 0.5),
    "affine": ContractionMap("affine", lambda x: 0.5 * x + 0.25, 0.5),
    "quad": ContractionMap("quad", lambda x: (x * x + 1.0) / 4.0, 0.5),
}


def fixed_point(map_: ContractionMap, tol: float = 1e-12) -> float:
    x = 0.5
    for _ in range(100_000):
        y = float(map_.T(np.array([x]))[0])
        if abs(y - x) <= tol:
            return y
        x = y
    return x


@dataclass
class DualMeasure:
    """density part on a grid, atoms, and a lazily composed transport chain.

    Pairing with a test function: mu(phi) = int density(x) phi(T_chain x) dx
    + sum_j w_j phi(loc_j); atom locations are moved eagerly (exact for the
    fixed point), the density is never pushed through a change of variables.
    """

    density_nodes: np.ndarray
    density_values: np.ndarray
    atoms: list[tuple[float, float]] = field(default_factory=list)  # (location, weight)
    chain: int = 0
    map: Optional[ContractionMap] = None

    @staticmethod
    def lebesgue(n: int = 512) -> "DualMeasure":
        x = np.linspace(0.0, 1.0, n + 1)
        return DualMeasure(x, np.ones(n + 1))

    @staticmethod
    def point_mass(a: float, weight: float = 1.0, n: int = 512) -> "DualMeasure":
        x = np.linspace(0.0, 1.0, n + 1)
        return DualMeasure(x, np.zeros(n + 1), [(float(a), float(weight))])

    def total_mass(self) -> float:
        h = self.density_nodes[1] - self.density_nodes[0]
        dens = float(np.trapezoid(self.density_values, dx=h))
        return dens + sum(w for _, w in self.atoms)

    def transported_nodes(self) -> np.ndarray:
        x = self.density_nodes
        for _ in range(self.chain):
            x = np.asarray(self.map.T(x), dtype=float)
        return x

    def pair_with_table(self, phi_nodes: np.ndarray, phi_vals: np.ndarray) -> float:
        """mu(phi) for a piecewise-linear phi given by a value table."""
        w = self.functional_weights(phi_nodes)
        return float(np.dot(w, phi_vals))

    def functional_weights(self, phi_nodes: np.ndarray) -> np.ndarray:
        """Weights w with mu(phi) = sum w_j phi(node_j) for PL phi."""
        n = phi_nodes.size
        out = np.zeros(n)
        x = self.transported_nodes()
        h = self.density_nodes[1] - self.density_nodes[0]
        q = self.density_values * h
        q[0] *= 0.5
        q[-1] *= 0.5
        _scatter_interp(out, phi_nodes, x, q)
        if self.atoms:
            locs = np.array([l for l, _ in self.atoms])
            ws = np.array([w for _, w in self.atoms])
            _scatter_interp(out, phi_nodes, locs, ws)
        return out


def _scatter_interp(out: np.ndarray, grid: np.ndarray, x: np.ndarray, w: np.ndarray) -> None:
    n = grid.size - 1
    j = np.clip(np.floor(x * n).astype(int), 0, n - 1)
    frac = x * n - j
    np.add.at(out, j, w * (1 - frac))
    np.add.at(out, j + 1, w * frac)


def push(map_: ContractionMap, mu: DualMeasure) -> DualMeasure:
    """The transfer operator: atoms move to T(location), density composes."""
    if mu.map is not None and mu.map is not map_:
        raise ValueError("a measure may only be pushed through one map")
    atoms = [(float(map_.T(np.array([loc]))[0]), w) for loc, w in mu.atoms]
    return DualMeasure(mu.density_nodes, mu.density_values, atoms,
                       chain=mu.chain + 1, map=map_)


def dual_norm(mu: DualMeasure, alpha: float, cfg: LpConfig = LpConfig(),
              phi_grid: int = 512, reference: Optional[DualMeasure] = None
              ) -> float:
    """sup of (mu - reference)(phi) over the discretized C^alpha unit ball."""
    nodes = np.linspace(0.0, 1.0, phi_grid + 1)
    w = mu.functional_weights(nodes)
    if reference is not None:
        w = w - reference.functional_weights(nodes)
    kind = "c1" if alpha >= 1.0 else "holder"
    val, _ = maximize_over_ball(w, nodes, kind, alpha, cfg)
    return val


@dataclass
class DecayRow:
    n: int
    distance: float


@dataclass
class DecayReport:
    rows: list[DecayRow]
    fitted_rate: Optional[float]
    rate_bound: float


def decay_to_delta(map_: ContractionMap, mu: DualMeasure, alpha: float, n_max: int,
                   cfg: LpConfig = LpConfig(), phi_grid: int = 512,
                   floor: float = 1e-9) -> DecayReport:
    """Dual-norm distances of the pushforward iterates to the fixed point mass."""
    if abs(mu.total_mass() - 1.0) > 1e-9:
        raise ValueError("decay_to_delta requires a normalized measure")
    a = fixed_point(map_)
    delta_a = DualMeasure.point_mass(a, 1.0, mu.density_nodes.size - 1)
    rows = []
    cur = mu
    for n in range(1, n_max + 1):
        cur = push(map_, cur)
        rows.append(DecayRow(n, dual_norm(cur, alpha, cfg, phi_grid, reference=delta_a)))
    usable = [(r.n, r.distance) for r in rows if r.distance > floor]
    rate = None
    if len(usable) >= 3:
        ns = np.array([n for n, _ in usable], dtype=float)
        ls = np.log([d for _, d in usable])
        rate = float(np.exp(np.polyfit(ns, ls, 1)[0]))
    return DecayReport(rows, rate, map_.lambda_bound ** alpha)


def ly_dual_check(map_: ContractionMap, mu: DualMeasure, alpha: float, n_max: int,
                  cfg: LpConfig = LpConfig(), slack: float = 1.05) -> list[dict]:
    """||L^n mu||_alpha <= lambda^{alpha n} ||mu||_alpha + ||mu||_1 rows."""
    norm_a = dual_norm(mu, alpha, cfg)
    norm_1 = dual_norm(mu, 1.0, cfg)
    rows = []
    cur = mu
    for n in range(1, n_max + 1):
        cur = push(map_, cur)
        lhs = dual_norm(cur, alpha, cfg)
        lhs_1 = dual_norm(cur, 1.0, cfg)
        rhs = map_.lambda_bound ** (alpha * n) * norm_a + norm_1
        rows.append({"n": n, "lhs": lhs, "rhs": rhs,
                     "passed": bool(lhs <= rhs * slack + 1e-12),
                     "weak_lhs": lhs_1, "weak_rhs": norm_1,
                     "weak_passed": bool(lhs_1 <= norm_1 * slack + 1e-12)})
    return rows


def koopman_holder_contraction(map_: ContractionMap, phi_fn: Callable, alpha: float,
                               n_max: int, grid: int = 512) -> list[dict]:
    """|phi o T^n|_{C^alpha} <= lambda^{alpha n}|phi|_{C^alpha} + |phi|_{C0} rows."""
    x = np.linspace(0.0, 1.0, grid + 1)
    base = np.asarray(phi_fn(x), dtype=float)

    def holder(v: np.ndarray) -> tuple[float, float]:
        dx = np.abs(x[:, None] - x[None, :])
        dv = np.abs(v[:, None] - v[None, :])
        mask = dx > 0
        semi = float(np.max(np.where(mask, dv / np.where(mask, dx, 1.0) ** alpha, 0.0)))
        return semi, float(np.max(np.abs(v)))

    semi0, sup0 = holder(base)
    rows = []
    y = x.copy()
    for n in range(1, n_max + 1):
        y = np.asarray(map_.T(y), dtype=float)
        semi, _ = holder(np.asarray(phi_fn(y), dtype=float))
        bound = map_.lambda_bound ** (alpha * n) * semi0
        rows.append({"n": n, "holder_seminorm": semi, "bound": bound + 0.0,
                     "passed": bool(semi <= bound * 1.05 + 1e-12)})
    return rows
