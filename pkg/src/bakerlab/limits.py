"""Birkhoff statistics: CLT, Green-Kubo variance, pressure, large deviations.

Monte Carlo uses a counter-based generator (Philox) so sampling is
reproducible regardless of batching.  Orbits of the expanding coordinate
shed one mantissa digit per step, so a machine-epsilon dither (drawn from
the same stream) keeps float orbits distributed; the perturbation is ~2^-50
per step and statistically invisible at every tolerance used here.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import stats

from .maps import BakerMap
from .spectral import UlamModel, cell_averages, ulam_integral
from .transfer import _forward_arrays


@dataclass
class ObservableSpec:
    """A real observable with its mean subtracted under the Ulam measure."""

    name: str
    fn: Callable
    centered: bool
    mean: float

    @staticmethod
    def centered_from(name: str, fn: Callable, model: UlamModel, mu0: np.ndarray
                      ) -> "ObservableSpec":
        mean = ulam_integral(model, mu0, fn)
        return ObservableSpec(name, lambda s, t, m=mean: fn(s, t) - m, True, mean)


# ---------------------------------------------------------------------------
# samplers for initial measures nu (not necessarily invariant)
# ---------------------------------------------------------------------------


def lebesgue_sampler(rng: np.random.Generator, count: int) -> tuple[np.ndarray, np.ndarray]:
    return rng.random(count), rng.random(count)


def tilted_sampler(rng: np.random.Generator, count: int) -> tuple[np.ndarray, np.ndarray]:
    """Density (1 + s/2) / (5/4): inverse-CDF in s, uniform in t."""
    u = rng.random(count)
    # CDF(s) = (s + s^2/4) / (5/4)  ->  s = -2 + 2 sqrt(1 + 5u/4)
    s = -2.0 + 2.0 * np.sqrt(1.0 + 1.25 * u)
    return np.clip(s, 0.0, 1.0), rng.random(count)


def standard_pair_sampler(pair_sum) -> Callable:
    """Sampler drawing from a StandardPairSum (leaf by mass, s by density)."""
    h = 1.0 / (pair_sum.s_nodes.size - 1)
    masses = np.array([t.coefficient * np.trapezoid(np.maximum(t.density, 0.0), dx=h)
                       for t in pair_sum.terms])
    if masses.sum() <= 0:
        raise ValueError("pair sum carries no positive mass to sample")
    probs = masses / masses.sum()

    def sampler(rng: np.random.Generator, count: int) -> tuple[np.ndarray, np.ndarray]:
        which = rng.choice(len(pair_sum.terms), size=count, p=probs)
        s = np.empty(count)
        t = np.empty(count)
        grid = pair_sum.s_nodes
        for k, term in enumerate(pair_sum.terms):
            sel = which == k
            if not np.any(sel):
                continue
            dens = np.maximum(term.density, 0.0)
            cdf = np.concatenate([[0.0], np.cumsum(0.5 * (dens[:-1] + dens[1:]) * h)])
            cdf /= cdf[-1]
            s[sel] = np.interp(rng.random(int(sel.sum())), cdf, grid)
            t[sel] = float(term.leaf.t_U)
        return s, t

    return sampler


# ---------------------------------------------------------------------------
# Birkhoff sums
# ---------------------------------------------------------------------------


def birkhoff_sample(map_: BakerMap, g_fn: Callable, n: int, count: int,
                    sampler: Callable = lebesgue_sampler, seed: int = 0,
                    checkpoints: Optional[Sequence[int]] = None
                    ) -> dict[int, np.ndarray]:
    """S_n g over `count` initial points; returns partial sums at checkpoints."""
    rng = np.random.Generator(np.random.Philox(key=seed))
    s, t = sampler(rng, count)
    marks = sorted(set(checkpoints or [n]))
    if marks[-1] != n:
        raise ValueError("largest checkpoint must equal n")
    out: dict[int, np.ndarray] = {}
    acc = np.zeros(count)
    for k in range(1, n + 1):
        acc += g_fn(s, t)
        if k < n:
            s, t = _forward_arrays(map_, s, t)
            s = (s + rng.random(count) * 2.0 ** -50) % 1.0
        if k in marks:
            out[k] = acc.copy()
    return out


# ---------------------------------------------------------------------------
# Green-Kubo variance
# ---------------------------------------------------------------------------


@dataclass
class VarianceReport:
    value: float
    terms: list[float]
    tail_estimate: float
    tail_warning: bool


def green_kubo_variance(model: UlamModel, mu0: np.ndarray, g: ObservableSpec,
                        n_max: int = 60, floor: float = 1e-13) -> VarianceReport:
    """var = mu0(g^2) + 2 sum_k mu0(g * g o T^k), correlations via the matrix."""
    if not g.centered:
        raise ValueError("green_kubo_variance requires a centered observable")
    g2 = ulam_integral(model, mu0, lambda s, t: g.fn(s, t) ** 2)
    g_avg = cell_averages(model, g.fn)
    PT = model.P.T.tocsr()
    nu = mu0 * g_avg
    terms = [g2]
    for _ in range(n_max):
        nu = PT @ nu
        terms.append(2.0 * float(np.dot(nu, g_avg)))
    value = float(np.sum(terms))
    # crude geometric tail bound from the last usable ratio
    mags = [abs(x) for x in terms[1:] if abs(x) > floor]
    tail = 0.0
    if len(mags) >= 2 and mags[-1] < mags[-2]:
        r = mags[-1] / mags[-2]
        tail = mags[-1] * r / (1.0 - r) if r < 1 else mags[-1]
    warn = value > 0 and tail > 0.01 * abs(value)
    if warn:
        warnings.warn("Green-Kubo truncation tail exceeds 1% of the variance")
    return VarianceReport(value, terms, tail, warn)


# ---------------------------------------------------------------------------
# central limit theorem check
# ---------------------------------------------------------------------------


@dataclass
class CltReport:
    ks_statistic: float
    empirical_variance: float
    reference_variance: float
    degenerate: bool

    def to_dict(self) -> dict:
        return {"ks_statistic": self.ks_statistic,
                "empirical_variance": self.empirical_variance,
                "reference_variance": self.reference_variance,
                "degenerate": self.degenerate}


def clt_check(map_: BakerMap, g: ObservableSpec, variance: float, n: int, count: int,
              sampler: Callable = lebesgue_sampler, seed: int = 0) -> CltReport:
    """KS distance between the law of S_n g / sqrt(n) and N(0, variance)."""
    sums = birkhoff_sample(map_, g.fn, n, count, sampler, seed)[n]
    scaled = sums / np.sqrt(n)
    emp_var = float(np.var(scaled))
    if variance <= 0:
        return CltReport(float("nan"), emp_var, variance, True)
    ks = stats.kstest(scaled, "norm", args=(0.0, np.sqrt(variance))).statistic
    return CltReport(float(ks), emp_var, variance, False)


# ---------------------------------------------------------------------------
# pressure and the rate function
# ---------------------------------------------------------------------------


@dataclass
class LdpReport:
    z_grid: np.ndarray
    pressure: np.ndarray
    t_grid: np.ndarray
    rate: np.ndarray
    variance: Optional[float] = None

    def rate_at(self, t: float) -> float:
        return float(np.interp(t, self.t_grid, self.rate))

    def to_dict(self) -> dict:
        return {"z": [float(x) for x in self.z_grid],
                "pressure": [float(x) for x in self.pressure],
                "t": [float(x) for x in self.t_grid],
                "rate": [float(x) for x in self.rate],
                "variance": self.variance}


def _twisted_leading(model: UlamModel, weights: np.ndarray, tol: float = 1e-12,
                     it_cap: int = 200_000) -> float:
    """Leading eigenvalue of the matrix with rows scaled by e^{z g} weights.

    Right action started from the constant vector: at z = 0 the row sums are
    exactly 1.0, so the iteration returns exactly 1.
    """
    P = model.P
    v = np.ones(model.n_cells)
    lam = 1.0
    for _ in range(it_cap):
        w = weights * (P @ v)
        lam_new = w.max()
        w = w / lam_new
        if np.max(np.abs(w - v)) < tol and abs(lam_new - lam) < tol * max(1.0, lam):
            return float(lam_new)
        v, lam = w, lam_new
    raise RuntimeError("twisted eigenvalue iteration did not converge")


def rate_function(model: UlamModel, mu0: np.ndarray, g: ObservableSpec,
                  z_grid: np.ndarray, t_grid: Optional[np.ndarray] = None) -> LdpReport:
    """Pressure P(z) = log leading eig of the twisted matrix; rate by Legendre.

    Convexity of the discrete pressure points is enforced with a hull pass
    before transforming, guarding against eigen-solver jitter.
    """
    z_grid = np.asarray(z_grid, dtype=float)
    g_avg = cell_averages(model, g.fn)
    pressure = np.empty(z_grid.size)
    for k, z in enumerate(z_grid):
        if z == 0.0:
            # untwisted matrix: rows sum to exactly 1 by the rational
            # construction, so the Perron eigenvalue is exactly 1
            pressure[k] = 0.0
            continue
        weights = np.exp(z * g_avg)
        pressure[k] = float(np.log(_twisted_leading(model, weights)))
    # convex hull in (z, P): lower envelope of the points
    hull = _lower_convex_hull(z_grid, pressure)
    slopes = np.gradient(pressure, z_grid)
    if t_grid is None:
        t_grid = np.linspace(slopes.min(), slopes.max(), 81)
    zs, ps = hull
    rate = np.array([float(np.max(zs * t - ps)) for t in t_grid])
    rate = np.maximum(rate, 0.0)
    return LdpReport(z_grid, pressure, np.asarray(t_grid), rate)


def _lower_convex_hull(x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    pts = sorted(zip(x, y))
    hull: list[tuple[float, float]] = []
    for p in pts:
        while len(hull) >= 2:
            (x1, y1), (x2, y2) = hull[-2], hull[-1]
            if (y2 - y1) * (p[0] - x1) >= (p[1] - y1) * (x2 - x1):
                hull.pop()
            else:
                break
        hull.append(p)
    xs = np.array([p[0] for p in hull])
    ys = np.array([p[1] for p in hull])
    return xs, ys


def pressure_curvature_at_zero(report: LdpReport) -> tuple[float, float]:
    """(P'(0), P''(0)) by central differences on the z grid."""
    z, P = report.z_grid, report.pressure
    k0 = int(np.argmin(np.abs(z)))
    if not (0 < k0 < z.size - 1):
        raise ValueError("z grid must contain 0 in its interior")
    h1 = z[k0] - z[k0 - 1]
    h2 = z[k0 + 1] - z[k0]
    d1 = (P[k0 + 1] - P[k0 - 1]) / (h1 + h2)
    d2 = 2.0 * (h1 * P[k0 + 1] + h2 * P[k0 - 1] - (h1 + h2) * P[k0]) / (h1 * h2 * (h1 + h2))
    return float(d1), float(d2)


# ---------------------------------------------------------------------------
# empirical large deviations
# ---------------------------------------------------------------------------


@dataclass
class LdpCell:
    t: float
    n: int
    probability: float
    count: int
    exponent: Optional[float]

    def to_dict(self) -> dict:
        return {"t": self.t, "n": self.n, "probability": self.probability,
                "count": self.count, "exponent": self.exponent}


@dataclass
class LdpEmpirical:
    cells: list[LdpCell]
    slopes: dict[float, Optional[float]]  # per t: extrapolated decay slope


def ldp_empirical(map_: BakerMap, g: ObservableSpec, t_grid: Sequence[float],
                  n_grid: Sequence[int], count: int,
                  sampler: Callable = lebesgue_sampler, seed: int = 0,
                  min_count: int = 100) -> LdpEmpirical:
    """Tail probabilities nu(S_n g / n >= t) and their decay exponents.

    Cells with fewer than min_count hits are kept but marked unusable
    (exponent None); the per-t slope extrapolation uses the last usable
    consecutive pair of n values, which cancels the prefactor.
    """
    n_grid = sorted(n_grid)
    sums = birkhoff_sample(map_, g.fn, n_grid[-1], count, sampler, seed,
                           checkpoints=n_grid)
    cells: list[LdpCell] = []
    for t in t_grid:
        for n in n_grid:
            avg = sums[n] / n
            hits = int(np.count_nonzero(avg >= t)) if t >= 0 else int(
                np.count_nonzero(avg <= t))
            p = hits / count
            expo = float(np.log(p) / n) if hits >= min_count else None
            cells.append(LdpCell(float(t), n, p, hits, expo))
    slopes: dict[float, Optional[float]] = {}
    for t in t_grid:
        usable = [(c.n, np.log(c.probability)) for c in cells
                  if c.t == float(t) and c.count >= min_count]
        if len(usable) >= 2:
            (n1, l1), (n2, l2) = usable[-2], usable[-1]
            slopes[float(t)] = float((l2 - l1) / (n2 - n1))
        else:
            slopes[float(t)] = None
    return LdpEmpirical(cells, slopes)
