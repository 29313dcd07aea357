"""The singular limit of vanishing vertical contraction.

A family of baker maps shares its branch rectangles and, for every lambda in
the schedule, maps the i-th branch onto a strip containing the fixed
unstable leaf U_i.  As lambda -> 0 the transfer operators converge (in the
strong-to-weak operator norm) to the limit operator

    (limit op) f  =  sum_i kappa^{-1} (fbar o pre_i) delta_{U_i},

where fbar is the leaf average of f.  Its range is a finite sum of standard
pairs: densities on the fixed unstable leaves.  Pair densities are carried
as piecewise-linear profiles in s, and every evaluation below composes
affine maps with that fixed profile, so iterating the operator agrees with
the closed-form iterate to rounding.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .grids import GridFunction
from .maps import BakerMap, UnstableLeaf, as_fraction
from .norms import LeafFunctional, LpConfig


def eval_profile(s_nodes: np.ndarray, values: np.ndarray, x) -> np.ndarray:
    """Piecewise-linear profile evaluation on the uniform s grid."""
    x = np.asarray(x, dtype=float)
    n = s_nodes.size - 1
    j = np.clip(np.floor(x * n).astype(int), 0, n - 1)
    w = x * n - j
    return values[..., j] * (1 - w) + values[..., j + 1] * w


@dataclass
class StandardPair:
    leaf: UnstableLeaf
    coefficient: float
    density: np.ndarray  # values on the shared uniform s grid


@dataclass
class StandardPairSum:
    """Finite sum  sum_i c_i f_i delta_{U_i}  of densities on unstable leaves."""

    s_nodes: np.ndarray
    terms: list[StandardPair]
    cfg: LpConfig = field(default_factory=LpConfig)

    def __post_init__(self):
        self.s_nodes = np.asarray(self.s_nodes, dtype=float)
        seen = set()
        for term in self.terms:
            if term.leaf.t_U in seen:
                raise ValueError("pair leaves must be distinct")
            seen.add(term.leaf.t_U)
            term.density = np.asarray(term.density, dtype=float)
            if term.density.shape != self.s_nodes.shape:
                raise ValueError("density must live on the shared s grid")
            if not np.all(np.isfinite(term.density)):
                raise ValueError("density must be finite")

    def total_mass(self) -> float:
        h = 1.0 / (self.s_nodes.size - 1)
        return float(sum(t.coefficient * np.trapezoid(t.density, dx=h) for t in self.terms))

    def pairing(self, psi: Callable) -> float:
        """Integral of psi against the measure (trapezoid per leaf)."""
        h = 1.0 / (self.s_nodes.size - 1)
        out = 0.0
        for t in self.terms:
            vals = psi(self.s_nodes, np.full(self.s_nodes.shape, float(t.leaf.t_U)))
            out += t.coefficient * np.trapezoid(vals * t.density, dx=h)
        return float(out)

    # weak-norm protocol: a pair acts on a leaf test function as a weighted
    # point evaluation at the crossing points
    def leaf_functional(self, s_W) -> LeafFunctional:
        nodes = np.array([float(t.leaf.t_U) for t in self.terms])
        weights = np.array([
            t.coefficient * float(eval_profile(self.s_nodes, t.density, float(s_W)))
            for t in self.terms])
        return LeafFunctional(nodes, weights).collapsed()

    def pair_functional(self, s1, s2) -> LeafFunctional:
        a = self.leaf_functional(s1)
        b = self.leaf_functional(s2)
        return a.combine(b, sign=-1.0)


@dataclass(frozen=True)
class SingularFamily:
    """Shared branch rectangles, fixed unstable leaves, and a lambda schedule."""

    kappa: int
    u_positions: tuple[Fraction, ...]
    schedule: tuple[Fraction, ...]

    def __post_init__(self):
        ups = tuple(as_fraction(u) for u in self.u_positions)
        object.__setattr__(self, "u_positions", ups)
        sched = tuple(as_fraction(x) for x in self.schedule)
        object.__setattr__(self, "schedule", sched)
        if len(ups) != self.kappa:
            raise ValueError("need one unstable leaf per branch")
        if any(not (0 < u < 1) for u in ups):
            raise ValueError("unstable leaves must be interior")
        for lam in sched:
            if lam == 0:
                continue
            self._validate_lambda(lam)

    def _validate_lambda(self, lam: Fraction) -> None:
        ups = sorted(self.u_positions)
        if lam <= 0 or lam > Fraction(1, self.kappa):
            raise ValueError("lambda must lie in (0, 1/kappa]")
        if ups[0] - lam / 2 < 0 or ups[-1] + lam / 2 > 1:
            raise ValueError("strip around an edge leaf leaves the square")
        for a, b in zip(ups, ups[1:]):
            if b - a < lam:
                raise ValueError(f"lambda={lam} exceeds the gap between leaves")

    @staticmethod
    def default(kappa: int, schedule: Sequence = (Fraction(1, 5), Fraction(1, 10),
                                                  Fraction(1, 20), Fraction(1, 40))
                ) -> "SingularFamily":
        ups = tuple(Fraction(2 * i - 1, 2 * kappa) for i in range(1, kappa + 1))
        return SingularFamily(kappa, ups, tuple(schedule))

    def map_at(self, lam: Union[Fraction, float]) -> BakerMap:
        """The baker map with strips centered on the fixed leaves."""
        lam = as_fraction(lam)
        self._validate_lambda(lam)
        offsets = [u - lam / 2 for u in self.u_positions]
        return BakerMap.with_offsets(self.kappa, lam, offsets)

    def leaves(self) -> list[UnstableLeaf]:
        return [UnstableLeaf(u) for u in self.u_positions]


# ---------------------------------------------------------------------------
# leaf averaging and the limit operator
# ---------------------------------------------------------------------------


def leaf_average(f: GridFunction) -> np.ndarray:
    """fbar(s) = integral of f over the stable leaf at s (exact trapezoid)."""
    vals = np.abs(f.values) if np.iscomplexobj(f.values) else f.values
    dt = np.diff(f.t_nodes)
    return (0.5 * (vals[:, :-1] + vals[:, 1:])) @ dt


def _average_profile(family: SingularFamily, x, s_nodes: np.ndarray) -> np.ndarray:
    """The leaf-average profile of a GridFunction or StandardPairSum."""
    if isinstance(x, GridFunction):
        return leaf_average(x)
    if isinstance(x, StandardPairSum):
        out = np.zeros(s_nodes.size)
        for t in x.terms:
            out += t.coefficient * t.density
        return out
    raise TypeError(f"cannot leaf-average {type(x)!r}")


def apply_limit_operator(family: SingularFamily, x) -> StandardPairSum:
    """One application of the lambda -> 0 transfer operator.

    Input may be a GridFunction (density) or a StandardPairSum; the output
    is always a StandardPairSum on the family's leaves.
    """
    if isinstance(x, GridFunction):
        s_nodes = x.s_nodes
    else:
        s_nodes = x.s_nodes
    fbar = _average_profile(family, x, s_nodes)
    kap = family.kappa
    terms = []
    for i, u in enumerate(family.u_positions):
        src = (s_nodes + i) / kap
        dens = eval_profile(s_nodes, fbar, src)
        terms.append(StandardPair(UnstableLeaf(u), 1.0 / kap, dens))
    return StandardPairSum(s_nodes, terms)


def iterate_limit_operator(family: SingularFamily, x, n: int) -> StandardPairSum:
    out = apply_limit_operator(family, x)
    for _ in range(n - 1):
        out = apply_limit_operator(family, out)
    return out


def closed_form_iterate(family: SingularFamily, f: GridFunction, n: int) -> StandardPairSum:
    """L^n f via the kappa^{n-1}-fold preimage sum, evaluated directly."""
    if n < 1:
        raise ValueError("n must be >= 1")
    s_nodes = f.s_nodes
    fbar = leaf_average(f)
    kap = family.kappa
    terms = []
    for j, u in enumerate(family.u_positions):
        acc = np.zeros(s_nodes.size)
        for r in range(kap ** (n - 1)):
            src = (s_nodes + j + kap * r) / (kap ** n)
            acc += eval_profile(s_nodes, fbar, src)
        dens = acc * (kap ** (-(n - 1)))
        terms.append(StandardPair(UnstableLeaf(u), 1.0 / kap, dens))
    return StandardPairSum(s_nodes, terms)


def limit_invariant_measure(family: SingularFamily, n_s: int = 128) -> StandardPairSum:
    """mu0 = kappa^{-1} sum_i delta_{U_i} as a standard pair sum."""
    s_nodes = np.linspace(0.0, 1.0, n_s + 1)
    terms = [StandardPair(UnstableLeaf(u), 1.0 / family.kappa, np.ones(n_s + 1))
             for u in family.u_positions]
    return StandardPairSum(s_nodes, terms)


# ---------------------------------------------------------------------------
# mollified standard pairs
# ---------------------------------------------------------------------------


def standard_pair_mollify(pair: StandardPair, eps: float, s_nodes: np.ndarray
                          ) -> GridFunction:
    """Smear a pair onto the eps-strip around its leaf, constant in t.

    The density is f/eps on the strip and 0 outside, so the total mass and
    the weak action against test functions converge to the pair's.
    """
    t_u = float(pair.leaf.t_U)
    a, b = t_u - eps / 2.0, t_u + eps / 2.0
    if a < 0.0 or b > 1.0:
        raise ValueError("eps-strip around the leaf leaves the square")
    if eps <= 0:
        raise ValueError("eps must be positive")
    col = pair.coefficient * pair.density / eps
    zero = np.zeros_like(col)
    nodes = [0.0, a, a, b, b, 1.0]
    cols = [zero, zero, col, col, zero, zero]
    if a == 0.0:
        nodes, cols = nodes[2:], cols[2:]
    if b == 1.0:
        nodes, cols = nodes[:-2], cols[:-2]
    return GridFunction(s_nodes, np.array(nodes), np.stack(cols, axis=1))


# ---------------------------------------------------------------------------
# inequality checkers and the perturbation scan
# ---------------------------------------------------------------------------


@dataclass
class LimitLyRow:
    f_name: str
    n: int
    inequality: str
    lhs: float
    rhs: float
    passed: bool

    def to_dict(self) -> dict:
        return {"f": self.f_name, "n": self.n, "inequality": self.inequality,
                "lhs": self.lhs, "rhs": self.rhs, "passed": self.passed}


def limit_ly_check(family: SingularFamily, suite: Sequence[tuple[str, GridFunction]],
                   n_max: int, alpha: float, beta: float,
                   cfg: LpConfig = LpConfig(), slack: float = 1.05) -> list[LimitLyRow]:
    """Weak / strong-stable / strong-unstable bounds for the limit operator."""
    from .norms import (sample_leaf_pairs, sample_leaves, strong_stable_norm,
                        strong_unstable_norm, weak_norm)
    kap = family.kappa
    leaves = sample_leaves(kap, cfg)
    pairs = sample_leaf_pairs(cfg)
    rows: list[LimitLyRow] = []
    for name, f in suite:
        w0 = weak_norm(f, leaves, cfg)
        u0 = strong_unstable_norm(f, pairs, beta, cfg)
        cur: Union[GridFunction, StandardPairSum] = f
        for n in range(1, n_max + 1):
            cur = apply_limit_operator(family, cur)
            wn = weak_norm(cur, leaves, cfg)
            sn = strong_stable_norm(cur, leaves, alpha, cfg)
            un = strong_unstable_norm(cur, pairs, beta, cfg)
            rhs_u = kap ** (-beta * n) * u0
            rows.append(LimitLyRow(name, n, "weak", wn, w0, wn <= w0 * slack + 1e-12))
            rows.append(LimitLyRow(name, n, "strong_stable", sn, w0,
                                   sn <= w0 * slack + 1e-12))
            rows.append(LimitLyRow(name, n, "strong_unstable", un, rhs_u,
                                   un <= rhs_u * slack + 1e-12))
    return rows


@dataclass
class PerturbationRow:
    lam: float
    estimate: float
    bound: float
    passed: bool
    mu_weak_distance: Optional[float] = None

    def to_dict(self) -> dict:
        return {"lambda": self.lam, "estimate": self.estimate, "bound": self.bound,
                "passed": self.passed, "mu_weak_distance": self.mu_weak_distance}


def perturbation_scan(family: SingularFamily, suite: Sequence[tuple[str, GridFunction]],
                      alpha: float, params_beta: float, cfg: LpConfig = LpConfig(),
                      ulam_p: int = 6, ulam_q: int = 2, ulam_refine: int = 64,
                      mu_dist: bool = True) -> list[PerturbationRow]:
    """Estimate the strong-to-weak norm of (limit op - L_lambda) per lambda.

    The estimate is the max over the suite of |(A f)|_w / ||f||_B with both
    factors measured by the LP estimators; beside it, the weak distance from
    the Ulam invariant measure to the atomic limit measure is reported.
    """
    from .grids import HolderParams
    from .norms import Difference, norm_report, sample_leaves, weak_norm
    from .spectral import UlamMeasure, build_ulam, invariant_measure
    from .transfer import apply_transfer

    params = HolderParams(alpha=alpha, beta=params_beta,
                          beta_prime=min(1.0, 1.0 - alpha + 1e-9) if params_beta >= 1 - alpha
                          else (params_beta + 1) / 2)
    leaves = sample_leaves(family.kappa, cfg)
    reports = [(name, f, norm_report(f, params, cfg, family.kappa)) for name, f in suite]
    mu0 = limit_invariant_measure(family)
    rows = []
    for lam in family.schedule:
        if lam == 0:
            continue
        map_lam = family.map_at(lam)
        best = 0.0
        for name, f, rep in reports:
            if rep.strong_total <= 0:
                continue
            limit_image = apply_limit_operator(family, f)
            lam_image = apply_transfer(map_lam, f, cell_cap=None)
            diff = Difference(limit_image, lam_image, cfg)
            val = weak_norm(diff, leaves, cfg)
            best = max(best, val / rep.strong_total)
        bound = float(lam) ** (1.0 - alpha)
        mu_d = None
        if mu_dist:
            model = build_ulam(map_lam, ulam_p, ulam_q, t_refine=ulam_refine)
            vec, _ = invariant_measure(model)
            mu_lam = UlamMeasure(model, vec, cfg)
            mu_d = weak_norm(Difference(mu_lam, mu0, cfg), leaves, cfg)
        rows.append(PerturbationRow(float(lam), best, bound, best <= bound, mu_d))
    return rows


# ---------------------------------------------------------------------------
# the expanding interval restriction of the collapsed map
# ---------------------------------------------------------------------------


@dataclass
class ExpandingRestriction:
    """The full-branch expanding map induced on the union of the fixed leaves."""

    kappa: int
    branch_count_per_leaf: int
    slope: float
    invariant_density: np.ndarray  # per (leaf, cell)
    uniform_deviation: float


def expanding_restriction(family: SingularFamily, cells_per_leaf: int = 64,
                          tol: float = 1e-13, it_cap: int = 100_000
                          ) -> ExpandingRestriction:
    """Transfer data of the collapsed map restricted to its image leaves.

    The state (i, x) on leaf i moves to (branch(x), kappa*x mod 1); each leaf
    carries kappa full affine branches of slope kappa.  The 1-D Ulam matrix
    on kappa-adic cells is exact, and its fixed density is uniform.
    """
    kap = family.kappa
    m = cells_per_leaf
    n = kap * m
    P = np.zeros((n, n))
    for i in range(kap):
        for c in range(m):
            # cell c on leaf i maps onto leaf j = branch(cell), stretched by kappa
            j = (c * kap) // m
            lo = c * kap - j * m
            for dc in range(kap):
                P[i * m + c, j * m + lo + dc] = 1.0 / kap
    v = np.full(n, 1.0 / n)
    for _ in range(it_cap):
        w = v @ P
        w /= w.sum()
        if np.abs(w - v).sum() < tol:
            v = w
            break
        v = w
    dens = v * n  # density w.r.t. normalized length
    dev = float(np.max(np.abs(dens - 1.0)))
    return ExpandingRestriction(kap, kap, float(kap), dens.reshape(kap, m), dev)
