import numpy as np
import pytest
from fractions import Fraction

from bakerlab import BakerMap, GridFunction
from bakerlab.grids import ResolutionError, inner, restrict_to_leaf
from bakerlab.maps import StableLeaf
from bakerlab.transfer import (TransferOperator, TwistedOperator, apply_transfer,
                               compress_t, koopman, twisted_apply)

from _oracles import birkhoff_pairing


def test_measure_preserving_case_fixes_constants():
    m = BakerMap.stacked(2, Fraction(1, 2))
    one = GridFunction.constant(1.0, 32, 32)
    L1 = apply_transfer(m, one)
    assert np.allclose(L1.values, 1.0, atol=1e-15)
    assert L1.integral() == pytest.approx(1.0, abs=1e-14)


def test_dissipative_case_strip_values_and_mass():
    m = BakerMap.stacked(2, Fraction(1, 4))
    one = GridFunction.constant(1.0, 32, 32)
    L1 = apply_transfer(m, one)
    assert L1.values.max() == pytest.approx(2.0)
    assert L1.evaluate(0.3, 0.05) == pytest.approx(2.0)   # inside a strip
    assert L1.evaluate(0.3, 0.7) == 0.0                   # in the gap
    assert L1.integral() == pytest.approx(1.0, abs=1e-14)


def test_resolution_guard():
    m = BakerMap.stacked(2, Fraction(1, 64))
    f = GridFunction.constant(1.0, 16, 16)
    with pytest.raises(ResolutionError):
        apply_transfer(m, f)


@pytest.mark.parametrize("key", ["2_12", "2_14", "3_18"])
def test_mass_conservation_n8(maps3, key):
    m = maps3[key]
    f = GridFunction.from_callable(lambda s, t: 1 + 0.3 * np.sin(2 * np.pi * s) * (1 + t),
                                   64, 64)
    base = f.integral()
    cur = f
    for n in range(8):
        cur = apply_transfer(m, cur)
        assert abs(cur.integral() - base) <= 1e-10


def test_positivity_and_support(maps3):
    m = maps3["2_14"]
    f = GridFunction.from_callable(lambda s, t: 1 + 0.9 * np.sin(7 * s + 3 * t), 64, 64)
    cur = f
    for n in range(1, 5):
        cur = apply_transfer(m, cur)
        assert cur.values.min() >= -1e-14
        strips = m.image_strips(n)
        # probe a point in every gap between consecutive strips
        for (lo1, hi1), (lo2, _) in zip(strips, strips[1:]):
            if lo2 > hi1:
                mid = float(hi1 + lo2) / 2.0
                assert abs(cur.evaluate(0.37, mid)) == 0.0


def test_iterate_operator_wrapper(maps3):
    m = maps3["2_12"]
    f = GridFunction.from_callable(lambda s, t: s + t, 32, 32)
    two_step = TransferOperator(m, 2)(f)
    manual = apply_transfer(m, apply_transfer(m, f))
    assert np.array_equal(two_step.values, manual.values)


@pytest.mark.parametrize("key,n", [("2_12", 1), ("2_12", 3), ("2_14", 2), ("3_18", 2)])
def test_duality_against_quadrature_oracle(maps3, key, n):
    m = maps3[key]
    rng = np.random.default_rng(42)
    fv = rng.standard_normal((513, 513))
    # random smooth-ish fields: low-pass the noise for stable interpolation
    from scipy.ndimage import gaussian_filter
    fv = gaussian_filter(fv, 24.0, mode="reflect")
    pv = gaussian_filter(rng.standard_normal((513, 513)), 24.0, mode="reflect")
    f = GridFunction(np.linspace(0, 1, 513), np.linspace(0, 1, 513), fv)
    phi = GridFunction(np.linspace(0, 1, 513), np.linspace(0, 1, 513), pv)
    lhs_f = f
    for _ in range(n):
        lhs_f = apply_transfer(m, lhs_f, cell_cap=None)
    lhs = inner(lhs_f, phi)
    rhs = birkhoff_pairing(m, fv, pv, n)
    assert lhs == pytest.approx(rhs, abs=1e-8)


def test_duality_full_iterate_n4_measure_preserving(maps3):
    m = maps3["2_12"]
    rng = np.random.default_rng(3)
    from scipy.ndimage import gaussian_filter
    fv = gaussian_filter(rng.standard_normal((513, 513)), 24.0, mode="reflect")
    pv = gaussian_filter(rng.standard_normal((513, 513)), 24.0, mode="reflect")
    f = GridFunction(np.linspace(0, 1, 513), np.linspace(0, 1, 513), fv)
    phi = GridFunction(np.linspace(0, 1, 513), np.linspace(0, 1, 513), pv)
    lhs_f = f
    for _ in range(4):
        lhs_f = apply_transfer(m, lhs_f, cell_cap=None)
    assert inner(lhs_f, phi) == pytest.approx(birkhoff_pairing(m, fv, pv, 4), abs=1e-8)


def test_koopman_examples(maps3):
    m = maps3["2_14"]
    one = GridFunction.constant(1.0, 64, 64)
    assert np.allclose(koopman(m, one, 3).values, 1.0)
    # multiplicativity is exact when the product is itself bilinear,
    # i.e. representable in the carrier class
    phi1 = GridFunction.from_callable(lambda s, t: 0.2 + 0.7 * s, 64, 64)
    phi2 = GridFunction.from_callable(lambda s, t: 0.1 + 0.5 * t, 64, 64)
    k1 = koopman(m, phi1, 2)
    k2 = koopman(m, phi2, 2)
    prod = GridFunction.from_callable(lambda s, t: (0.2 + 0.7 * s) * (0.1 + 0.5 * t),
                                      64, 64)
    kprod = koopman(m, prod, 2)
    assert np.allclose(kprod.values, k1.values * k2.values, atol=1e-13)


@pytest.mark.parametrize("key", ["2_12", "2_14"])
def test_koopman_contracts_along_stable_leaves(maps3, key):
    m = maps3[key]
    lam = float(m.lam)
    phi = GridFunction.from_callable(lambda s, t: np.sin(2 * np.pi * t) + 0.2 * s, 128, 128)
    base_slope = 2 * np.pi
    for n in (1, 2, 3):
        kn = koopman(m, phi, n)
        for sW in (0.1, 0.55, 0.9):
            leaf = restrict_to_leaf(kn, StableLeaf(sW), 128)
            slopes = np.abs(np.diff(leaf.values)) * 128
            assert slopes.max() <= lam ** n * base_slope * (1 + 1e-9)


def test_twisted_at_zero_matches_untwisted(maps3):
    m = maps3["2_14"]
    f = GridFunction.from_callable(lambda s, t: 1 + 0.5 * np.sin(2 * np.pi * s) * t, 64, 64)
    g = GridFunction.from_callable(lambda s, t: np.cos(2 * np.pi * s), 64, 64, "C1_M")
    tw = TwistedOperator(m, g, 0.0)
    assert np.array_equal(twisted_apply(tw, f).values, apply_transfer(m, f).values)


def test_twisted_constant_weight_factors_out(maps3):
    m = maps3["2_12"]
    f = GridFunction.from_callable(lambda s, t: 1 + s * t, 64, 64)
    g = GridFunction.constant(0.7, 64, 64)
    z = 0.3 + 0.2j
    tw = twisted_apply(TwistedOperator(m, g, z), f)
    ref = apply_transfer(m, f).scale(np.exp(z * 0.7))
    assert np.allclose(tw.values, ref.values, atol=1e-13)


def test_twisted_overflow_guard(maps3):
    m = maps3["2_12"]
    f = GridFunction.constant(1.0, 16, 16)
    g = GridFunction.constant(50.0, 16, 16)
    with pytest.raises(OverflowError):
        twisted_apply(TwistedOperator(m, g, 1.0), f)


def test_twisted_duality_small_z(maps3):
    """Birkhoff-weighted duality at n=2; modeling error is linear in z."""
    m = maps3["2_12"]
    rng = np.random.default_rng(11)
    from scipy.ndimage import gaussian_filter
    fv = gaussian_filter(rng.standard_normal((513, 513)), 32.0, mode="reflect")
    pv = gaussian_filter(rng.standard_normal((513, 513)), 32.0, mode="reflect")
    gv = np.sin(2 * np.pi * np.linspace(0, 1, 513))[:, None] * np.ones((1, 513))
    f = GridFunction(np.linspace(0, 1, 513), np.linspace(0, 1, 513), fv)
    phi = GridFunction(np.linspace(0, 1, 513), np.linspace(0, 1, 513), pv)
    g = GridFunction(np.linspace(0, 1, 513), np.linspace(0, 1, 513), gv, "C1_M")
    z = 1e-3
    tw = TwistedOperator(m, g, z)
    lhs_f = twisted_apply(tw, twisted_apply(tw, f, cell_cap=None), cell_cap=None)
    lhs = inner(lhs_f, phi)
    rhs = birkhoff_pairing(m, fv, pv, 2, z=z, g_vals=gv)
    assert lhs == pytest.approx(rhs, abs=1e-8)


def test_compress_preserves_column_masses():
    m = BakerMap.stacked(3, Fraction(1, 8))
    f = GridFunction.from_callable(lambda s, t: 1 + 0.5 * np.sin(2 * np.pi * s) * t,
                                   32, 64)
    cur = f
    for _ in range(4):
        cur = apply_transfer(m, cur, cell_cap=None)
    comp = compress_t(cur, 256)
    assert comp.t_cell_count() <= 256
    assert np.allclose(comp.column_masses(), cur.column_masses(), atol=1e-13)
    assert comp.values.min() >= -1e-14
