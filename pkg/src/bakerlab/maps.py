"""Exact geometry of generalized baker transformations of the unit square.

A map is determined by an integer horizontal expansion factor ``kappa >= 2``,
a rational vertical contraction ``lam`` with ``0 < lam <= 1/kappa``, and a
layout: for each of the ``kappa`` vertical branch rectangles, the vertical
offset of its image strip and optional horizontal/vertical flips.  All
coordinates are carried as exact :class:`fractions.Fraction` values so that
leaf pullbacks, image strips and cell intersections have zero arithmetic
error; floats passed in are promoted exactly (binary expansion).
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence, Union

Scalar = Union[int, float, str, Fraction]

ZERO = Fraction(0)
ONE = Fraction(1)


def as_fraction(x: Scalar) -> Fraction:
    """Promote a number to an exact Fraction (floats via their binary value)."""
    if isinstance(x, Fraction):
        return x
    return Fraction(x)


class LeafBudgetError(RuntimeError):
    """Raised when a pullback would enumerate more leaves than the cap allows."""


@dataclass(frozen=True)
class BranchPlacement:
    """Where one branch image strip sits and how it is oriented."""

    y_offset: Fraction
    flip_horizontal: bool = False
    flip_vertical: bool = False


@dataclass(frozen=True)
class Point:
    s: Fraction  # horizontal (unstable) coordinate
    t: Fraction  # vertical (stable) coordinate

    def __post_init__(self):
        object.__setattr__(self, "s", as_fraction(self.s))
        object.__setattr__(self, "t", as_fraction(self.t))
        if not (ZERO <= self.s <= ONE and ZERO <= self.t <= ONE):
            raise ValueError(f"point ({self.s}, {self.t}) outside the unit square")

    def as_floats(self) -> tuple[float, float]:
        return float(self.s), float(self.t)


@dataclass(frozen=True)
class StableLeaf:
    """A full vertical segment {s = s_W}."""

    s_W: Fraction

    def __post_init__(self):
        object.__setattr__(self, "s_W", as_fraction(self.s_W))
        if not (ZERO <= self.s_W <= ONE):
            raise ValueError(f"stable leaf s={self.s_W} outside [0,1]")


@dataclass(frozen=True)
class UnstableLeaf:
    """A full horizontal segment {t = t_U}."""

    t_U: Fraction

    def __post_init__(self):
        object.__setattr__(self, "t_U", as_fraction(self.t_U))
        if not (ZERO <= self.t_U <= ONE):
            raise ValueError(f"unstable leaf t={self.t_U} outside [0,1]")


@dataclass(frozen=True)
class BakerMap:
    """A (kappa, lam) baker transformation with an explicit strip layout.

    Branch ``i`` acts on the rectangle ``R_i = [i/kappa, (i+1)/kappa] x [0,1]``
    by an affine map with horizontal derivative ``+-kappa`` and vertical
    derivative ``+-lam``; its image is ``[0,1] x [y_i, y_i + lam]``.
    """

    kappa: int
    lam: Fraction
    layout: tuple[BranchPlacement, ...]

    def __post_init__(self):
        object.__setattr__(self, "lam", as_fraction(self.lam))
        if self.kappa < 2:
            raise ValueError("kappa must be an integer >= 2")
        if not (ZERO < self.lam <= Fraction(1, self.kappa)):
            raise ValueError("lam must lie in (0, 1/kappa]")
        if len(self.layout) != self.kappa:
            raise ValueError("layout must list one placement per branch")
        layout = tuple(
            BranchPlacement(as_fraction(pl.y_offset), pl.flip_horizontal, pl.flip_vertical)
            for pl in self.layout
        )
        object.__setattr__(self, "layout", layout)
        for pl in layout:
            if not (ZERO <= pl.y_offset <= ONE - self.lam):
                raise ValueError(f"strip offset {pl.y_offset} outside [0, 1-lam]")
        # image strips must be pairwise disjoint up to boundary
        offsets = sorted(pl.y_offset for pl in layout)
        for a, b in zip(offsets, offsets[1:]):
            if b < a + self.lam:
                raise ValueError("image strips overlap on a set of positive measure")

    # -- constructors -------------------------------------------------------

    @staticmethod
    def stacked(kappa: int, lam: Scalar) -> "BakerMap":
        """Default layout: strips stacked bottom-up in branch order, no flips."""
        lamf = as_fraction(lam)
        return BakerMap(kappa, lamf, tuple(BranchPlacement(i * lamf) for i in range(kappa)))

    @staticmethod
    def with_offsets(kappa: int, lam: Scalar, offsets: Sequence[Scalar]) -> "BakerMap":
        lamf = as_fraction(lam)
        return BakerMap(kappa, lamf, tuple(BranchPlacement(as_fraction(y)) for y in offsets))

    # -- basic data ---------------------------------------------------------

    @property
    def jacobian(self) -> Fraction:
        """|det DT| = kappa * lam, constant on all of M."""
        return self.kappa * self.lam

    def branch_of_s(self, s: Fraction) -> int:
        """Branch index i = floor(kappa*s); boundaries go to the right branch."""
        i = int(self.kappa * s)  # floor for s >= 0
        return min(i, self.kappa - 1)

    def branch_preimage_s(self, s: Fraction, i: int) -> Fraction:
        """The s-coordinate in branch i mapping onto s."""
        pl = self.layout[i]
        if pl.flip_horizontal:
            return Fraction(i + 1 - s, self.kappa)
        return Fraction(s + i, self.kappa)

    def strips(self) -> list[tuple[Fraction, Fraction, int]]:
        """Image strips (t_lo, t_hi, branch) sorted by vertical position."""
        out = [(pl.y_offset, pl.y_offset + self.lam, i) for i, pl in enumerate(self.layout)]
        out.sort()
        return out

    def image_strips(self, n: int) -> list[tuple[Fraction, Fraction]]:
        """The kappa^n strips (t-ranges) making up T^n(M), sorted, exact."""
        cur = [(ZERO, ONE)]
        for _ in range(n):
            nxt = []
            for lo, hi in cur:
                for i, pl in enumerate(self.layout):
                    if pl.flip_vertical:
                        nxt.append((pl.y_offset + self.lam * (1 - hi), pl.y_offset + self.lam * (1 - lo)))
                    else:
                        nxt.append((pl.y_offset + self.lam * lo, pl.y_offset + self.lam * hi))
            nxt.sort()
            cur = nxt
        return cur

    # -- serialization (consumed by the CLI config) -------------------------

    def describe(self) -> str:
        parts = [f"kappa={self.kappa}", f"lambda={self.lam}"]
        lay = ";".join(
            f"{pl.y_offset},{int(pl.flip_horizontal)},{int(pl.flip_vertical)}" for pl in self.layout
        )
        parts.append(f"layout={lay}")
        return " ".join(parts)

    @staticmethod
    def parse(text: str) -> "BakerMap":
        fields = dict(tok.split("=", 1) for tok in text.split())
        kappa = int(fields["kappa"])
        lam = Fraction(fields["lambda"])
        if "layout" not in fields or fields["layout"] == "stacked":
            return BakerMap.stacked(kappa, lam)
        placements = []
        for chunk in fields["layout"].split(";"):
            y, fh, fv = chunk.split(",")
            placements.append(BranchPlacement(Fraction(y), bool(int(fh)), bool(int(fv))))
        return BakerMap(kappa, lam, tuple(placements))


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------


def forward(map_: BakerMap, p: Point) -> Point:
    """Apply T once.  Exact on rational input."""
    i = map_.branch_of_s(p.s)
    pl = map_.layout[i]
    local = map_.kappa * p.s - i
    s_out = 1 - local if pl.flip_horizontal else local
    t_out = pl.y_offset + (map_.lam * (1 - p.t) if pl.flip_vertical else map_.lam * p.t)
    return Point(s_out, t_out)


def forward_n(map_: BakerMap, p: Point, n: int) -> Point:
    for _ in range(n):
        p = forward(map_, p)
    return p


def inverse_on_image(map_: BakerMap, p: Point) -> Optional[tuple[Point, int]]:
    """Invert T at p if p lies in T(M); None means "outside image" (not a fault).

    Points on a shared strip boundary resolve to the lowest branch index.
    """
    for i, pl in enumerate(map_.layout):
        if pl.y_offset <= p.t <= pl.y_offset + map_.lam:
            u = (p.t - pl.y_offset) / map_.lam
            if pl.flip_vertical:
                u = 1 - u
            s_loc = 1 - p.s if pl.flip_horizontal else p.s
            return Point(Fraction(s_loc + i, map_.kappa), u), i
    return None


def pullback_leaves(map_: BakerMap, W: StableLeaf, n: int, cap: int = 1_000_000) -> list[StableLeaf]:
    """The n-th generation of W: the kappa^n components of T^{-n}W.

    Leaves are returned in branch-lexicographic order so that the
    generations of two input leaves are paired positionally.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if map_.kappa ** n > cap:
        raise LeafBudgetError(f"kappa^n = {map_.kappa ** n} exceeds the cap {cap}")
    coords = [W.s_W]
    for _ in range(n):
        coords = [map_.branch_preimage_s(s, i) for s in coords for i in range(map_.kappa)]
    return [StableLeaf(s) for s in coords]


def leaf_distance(W1: StableLeaf, W2: StableLeaf) -> Fraction:
    return abs(W1.s_W - W2.s_W)


# ---------------------------------------------------------------------------
# exact rectangle bookkeeping (shared with the Ulam construction)
# ---------------------------------------------------------------------------


def interval_overlap(a0: Fraction, a1: Fraction, b0: Fraction, b1: Fraction) -> Fraction:
    lo = max(a0, b0)
    hi = min(a1, b1)
    return hi - lo if hi > lo else ZERO


def rect_image(map_: BakerMap, s0: Fraction, s1: Fraction, t0: Fraction, t1: Fraction
               ) -> list[tuple[Fraction, Fraction, Fraction, Fraction]]:
    """T(R) for an axis rectangle R, as a list of exact rectangles.

    R may straddle branch boundaries; one rectangle is emitted per branch met.
    """
    out = []
    kap = map_.kappa
    for i, pl in enumerate(map_.layout):
        bs0, bs1 = Fraction(i, kap), Fraction(i + 1, kap)
        lo, hi = max(s0, bs0), min(s1, bs1)
        if hi <= lo:
            continue
        if pl.flip_horizontal:
            ss0, ss1 = i + 1 - kap * hi, i + 1 - kap * lo
        else:
            ss0, ss1 = kap * lo - i, kap * hi - i
        if pl.flip_vertical:
            tt0, tt1 = pl.y_offset + map_.lam * (1 - t1), pl.y_offset + map_.lam * (1 - t0)
        else:
            tt0, tt1 = pl.y_offset + map_.lam * t0, pl.y_offset + map_.lam * t1
        out.append((ss0, ss1, tt0, tt1))
    return out


def preimage_area(map_: BakerMap, s0: Scalar, s1: Scalar, t0: Scalar, t1: Scalar) -> Fraction:
    """Exact Lebesgue area of T^{-1}R for the rectangle R = [s0,s1]x[t0,t1]."""
    s0, s1, t0, t1 = map(as_fraction, (s0, s1, t0, t1))
    total = ZERO
    for i, pl in enumerate(map_.layout):
        h = interval_overlap(t0, t1, pl.y_offset, pl.y_offset + map_.lam)
        if h > 0:
            total += (s1 - s0) / map_.kappa * (h / map_.lam)
    return total


def image_area(map_: BakerMap, s0: Scalar, s1: Scalar, t0: Scalar, t1: Scalar) -> Fraction:
    """Exact area of R ∩ T(M)."""
    s0, s1, t0, t1 = map(as_fraction, (s0, s1, t0, t1))
    total = ZERO
    for lo, hi, _ in map_.strips():
        total += (s1 - s0) * interval_overlap(t0, t1, lo, hi)
    return total


def strip_index_of_t(map_: BakerMap, t: Fraction) -> Optional[int]:
    """Branch whose image strip contains t (lowest index on shared boundaries)."""
    for i, pl in enumerate(map_.layout):
        if pl.y_offset <= t <= pl.y_offset + map_.lam:
            return i
    return None
