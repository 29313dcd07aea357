import pytest
from fractions import Fraction
from hypothesis import given, settings, strategies as st

from bakerlab.maps import (BakerMap, BranchPlacement, LeafBudgetError, Point,
                           StableLeaf, forward, forward_n, image_area,
                           inverse_on_image, leaf_distance, preimage_area,
                           pullback_leaves)


def test_forward_examples():
    m = BakerMap.stacked(2, Fraction(1, 2))
    assert forward(m, Point(0.25, 0.5)).as_floats() == (0.5, 0.25)
    p = forward(m, Point(0, 0))
    assert p.s == 0 and p.t == 0
    m4 = BakerMap.with_offsets(4, Fraction(1, 8),
                               [0, Fraction(1, 4), Fraction(1, 2), Fraction(3, 4)])
    s, t = forward(m4, Point(0.3, 0.8)).as_floats()
    assert s == pytest.approx(0.2, abs=1e-12)
    assert t == pytest.approx(0.35, abs=1e-12)


def test_branch_boundary_right_continuous():
    m = BakerMap.stacked(2, Fraction(1, 2))
    # s = 1/2 belongs to the right branch; s = 1 clamps into the last branch
    assert forward(m, Point(Fraction(1, 2), 0)).t == Fraction(1, 2)
    assert forward(m, Point(1, 0)).s == 1


def test_flips_have_unit_derivative_magnitudes():
    m = BakerMap(2, Fraction(1, 2),
                 (BranchPlacement(Fraction(0), True, False),
                  BranchPlacement(Fraction(1, 2), False, True)))
    a = forward(m, Point(Fraction(1, 8), Fraction(1, 4)))
    b = forward(m, Point(Fraction(1, 8) + Fraction(1, 64), Fraction(1, 4)))
    assert abs(b.s - a.s) == Fraction(2, 64)          # |ds'/ds| = kappa
    c = forward(m, Point(Fraction(5, 8), Fraction(1, 4) + Fraction(1, 16)))
    d = forward(m, Point(Fraction(5, 8), Fraction(1, 4)))
    assert abs(c.t - d.t) == Fraction(1, 32)          # |dt'/dt| = lam


def test_inverse_examples():
    m = BakerMap.stacked(2, Fraction(1, 2))
    got = inverse_on_image(m, Point(0.5, 0.25))
    assert got is not None
    assert got[0].as_floats() == (0.25, 0.5)
    assert got[1] == 0
    gapmap = BakerMap.with_offsets(2, Fraction(1, 4), [0, Fraction(1, 2)])
    assert inverse_on_image(gapmap, Point(0.5, 0.4)) is None


@given(st.fractions(min_value=0, max_value=1).filter(lambda x: 0 < x < 1),
       st.fractions(min_value=0, max_value=1).filter(lambda x: 0 < x < 1))
@settings(max_examples=30, deadline=None)
def test_forward_inverse_roundtrip(s, t):
    m = BakerMap.stacked(2, Fraction(1, 4))
    p = Point(s, t)
    q = forward(m, p)
    back = inverse_on_image(m, q)
    assert back is not None
    assert back[0].s == p.s and back[0].t == p.t


def test_pullback_counts_and_positions():
    m = BakerMap.stacked(2, Fraction(1, 2))
    assert len(pullback_leaves(m, StableLeaf(0.3), 3)) == 8
    leaves = pullback_leaves(m, StableLeaf(Fraction(1, 2)), 1)
    assert [l.s_W for l in leaves] == [Fraction(1, 4), Fraction(3, 4)]


def test_pullback_pairing_contracts_exactly():
    m = BakerMap.stacked(3, Fraction(1, 8))
    W1, W2 = StableLeaf(Fraction(1, 5)), StableLeaf(Fraction(4, 5))
    d = leaf_distance(W1, W2)
    for n in (1, 2, 3):
        g1 = pullback_leaves(m, W1, n)
        g2 = pullback_leaves(m, W2, n)
        for a, b in zip(g1, g2):
            assert leaf_distance(a, b) == d / 3 ** n


def test_pullback_composition_same_set():
    m = BakerMap.stacked(2, Fraction(1, 4))
    W = StableLeaf(Fraction(1, 3))
    once = {l.s_W for l in pullback_leaves(m, W, 3)}
    twice = set()
    for mid in pullback_leaves(m, W, 1):
        twice.update(l.s_W for l in pullback_leaves(m, mid, 2))
    assert once == twice


def test_pullback_budget():
    m = BakerMap.stacked(3, Fraction(1, 8))
    with pytest.raises(LeafBudgetError):
        pullback_leaves(m, StableLeaf(0), 10, cap=100)


def test_leaf_distance_basics():
    assert leaf_distance(StableLeaf(0.25), StableLeaf(0.75)) == Fraction(1, 2)
    assert leaf_distance(StableLeaf(0.3), StableLeaf(0.3)) == 0


@given(st.fractions(min_value=0, max_value=1), st.fractions(min_value=0, max_value=1),
       st.integers(min_value=1, max_value=12))
@settings(max_examples=25, deadline=None)
def test_forward_iterates_stay_in_square_and_in_strips(s, t, n):
    m = BakerMap.stacked(2, Fraction(1, 4))
    p = forward_n(m, Point(s, t), n)
    assert 0 <= p.s <= 1 and 0 <= p.t <= 1
    strips = m.image_strips(min(n, 8))
    assert any(lo <= p.t <= hi for lo, hi in strips)


def test_image_strips_structure():
    m = BakerMap.stacked(2, Fraction(1, 4))
    strips = m.image_strips(3)
    assert len(strips) == 8
    widths = {hi - lo for lo, hi in strips}
    assert widths == {Fraction(1, 64)}
    for (a, b), (c, d) in zip(strips, strips[1:]):
        assert b <= c


def test_preimage_area_matches_image_area():
    m = BakerMap.stacked(2, Fraction(1, 4))
    rects = [(0, Fraction(1, 3), 0, Fraction(1, 5)),
             (Fraction(1, 7), Fraction(2, 7), Fraction(1, 8), Fraction(7, 8)),
             (0, 1, 0, 1)]
    for r in rects:
        assert preimage_area(m, *r) == image_area(m, *r) / m.jacobian


def test_map_description_roundtrip():
    m = BakerMap(3, Fraction(1, 5),
                 (BranchPlacement(Fraction(0)), BranchPlacement(Fraction(2, 5), True),
                  BranchPlacement(Fraction(4, 5), False, True)))
    m2 = BakerMap.parse(m.describe())
    assert m2 == m


def test_invalid_maps_rejected():
    with pytest.raises(ValueError):
        BakerMap.stacked(1, Fraction(1, 2))
    with pytest.raises(ValueError):
        BakerMap.stacked(2, Fraction(2, 3))
    with pytest.raises(ValueError):
        BakerMap.with_offsets(2, Fraction(1, 2), [0, Fraction(1, 4)])  # overlap
