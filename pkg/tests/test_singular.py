import numpy as np
import pytest
from fractions import Fraction

from bakerlab import GridFunction
from bakerlab.maps import UnstableLeaf
from bakerlab.norms import sample_leaf_pairs, sample_leaves, strong_stable_norm, \
    strong_unstable_norm, weak_norm
from bakerlab.singular import (SingularFamily, StandardPair, StandardPairSum,
                               apply_limit_operator, closed_form_iterate,
                               expanding_restriction, iterate_limit_operator,
                               leaf_average, limit_invariant_measure,
                               limit_ly_check, perturbation_scan,
                               standard_pair_mollify)
from bakerlab.suite import DENSITY_SUITE, build_suite


@pytest.fixture(scope="module")
def fam():
    return SingularFamily.default(2)


def test_family_validation():
    SingularFamily.default(3)
    with pytest.raises(ValueError):
        # lambda larger than the gap between the default leaves
        SingularFamily(2, (Fraction(1, 4), Fraction(3, 4)), (Fraction(3, 5),))
    with pytest.raises(ValueError):
        SingularFamily(2, (Fraction(1, 4),), (Fraction(1, 10),))


def test_family_maps_cover_leaves(fam):
    for lam in fam.schedule:
        m = fam.map_at(lam)
        for i, u in enumerate(fam.u_positions):
            lo = m.layout[i].y_offset
            assert lo <= u <= lo + m.lam


def test_leaf_average_examples():
    c = GridFunction.constant(2.5, 32, 32)
    assert np.allclose(leaf_average(c), 2.5)
    f = GridFunction.from_callable(lambda s, t: t, 32, 32)
    assert np.allclose(leaf_average(f), 0.5, atol=1e-12)


def test_leaf_average_bounds(fam, lp_cfg_fast, params):
    """sup|fbar| <= weak norm and the beta-Holder ratios of fbar <= u-norm.

    Both sides are one-sided estimators, so fbar is probed on the same
    leaves and leaf pairs the norms were sampled on (phi = 1 and the
    transported constant are feasible test functions, which makes the
    inequalities structural).
    """
    leaves = sample_leaves(2, lp_cfg_fast)
    pairs = sample_leaf_pairs(lp_cfg_fast)
    for name, fn in DENSITY_SUITE[:10]:
        f = GridFunction.from_callable(fn, 64, 64)
        fbar = leaf_average(f)
        w = weak_norm(f, leaves, lp_cfg_fast)
        u = strong_unstable_norm(f, pairs, params.beta, lp_cfg_fast)
        from bakerlab.singular import eval_profile
        sup_sampled = max(abs(float(eval_profile(f.s_nodes, fbar, float(s))))
                          for s in leaves)
        assert sup_sampled <= w * 1.05 + 1e-9, name
        for s1, s2 in pairs:
            d = abs(float(s1) - float(s2))
            if d == 0:
                continue
            dv = abs(float(eval_profile(f.s_nodes, fbar, float(s1)))
                     - float(eval_profile(f.s_nodes, fbar, float(s2))))
            assert dv / d ** params.beta <= u * 1.05 + 1e-9, (name, s1, s2)


def test_limit_operator_of_one_is_invariant(fam):
    one = GridFunction.constant(1.0, 64, 64)
    out = apply_limit_operator(fam, one)
    assert [t.coefficient for t in out.terms] == [0.5, 0.5]
    assert all(np.allclose(t.density, 1.0) for t in out.terms)


def test_invariant_measure_is_exact_fixed_point(fam):
    mu0 = limit_invariant_measure(fam)
    out = apply_limit_operator(fam, mu0)
    for a, b in zip(out.terms, mu0.terms):
        assert a.coefficient == b.coefficient
        assert np.array_equal(a.density, b.density)
        assert a.leaf.t_U == b.leaf.t_U


def test_iterate_matches_closed_form(fam):
    f = GridFunction.from_callable(lambda s, t: np.sin(2 * np.pi * s) * (1 + t) / 2,
                                   128, 128)
    for n in (1, 2, 3, 4):
        it = iterate_limit_operator(fam, f, n)
        cf = closed_form_iterate(fam, f, n)
        for a, b in zip(it.terms, cf.terms):
            assert np.max(np.abs(a.density - b.density)) <= 1e-10


def test_limit_operator_conserves_mass(fam):
    f = GridFunction.from_callable(lambda s, t: 1 + 0.4 * np.cos(2 * np.pi * s) * t,
                                   64, 64)
    out = apply_limit_operator(fam, f)
    assert out.total_mass() == pytest.approx(f.integral(), abs=1e-12)


def test_pair_sum_leaf_functional(fam):
    mu0 = limit_invariant_measure(fam)
    fn = mu0.leaf_functional(0.3)
    assert np.allclose(sorted(fn.nodes), [0.25, 0.75])
    assert np.allclose(fn.weights, 0.5)


def test_mollified_pair_mass_and_weak_action(fam):
    s_nodes = np.linspace(0, 1, 129)
    dens = 1 + 0.5 * s_nodes
    pair = StandardPair(UnstableLeaf(Fraction(1, 4)), 1.0, dens)
    pair_sum = StandardPairSum(s_nodes, [pair])
    masses = []
    actions = []
    for eps in (1 / 16, 1 / 64, 1 / 256):
        g = standard_pair_mollify(pair, eps, s_nodes)
        masses.append(g.integral())
        # weak action on a stable leaf against a fixed smooth test function
        col = g.column(0.4)
        phi = np.cos(g.t_nodes)
        dt = np.diff(g.t_nodes)
        actions.append(float(np.sum(0.5 * (col[:-1] * phi[:-1] + col[1:] * phi[1:]) * dt)))
    target_mass = float(np.trapezoid(dens, dx=1 / 128))
    assert all(m == pytest.approx(target_mass, abs=1e-12) for m in masses)
    point = (1 + 0.5 * 0.4) * np.cos(0.25)
    errs = [abs(a - point) for a in actions]
    assert errs[2] < errs[1] < errs[0]
    assert errs[2] <= 1e-4


def test_mollified_pair_cauchy_bound(fam, lp_cfg_fast, params):
    s_nodes = np.linspace(0, 1, 129)
    dens = 1 + 0.5 * s_nodes
    pair = StandardPair(UnstableLeaf(Fraction(1, 4)), 1.0, dens)
    g1 = standard_pair_mollify(pair, 1 / 64, s_nodes)
    g2 = standard_pair_mollify(pair, 1 / 16, s_nodes)
    diff = g1.combine(g2, 1.0, -1.0)
    leaves = sample_leaves(2, lp_cfg_fast)
    val = strong_stable_norm(diff, leaves, params.alpha, lp_cfg_fast)
    bound = 2.0 * (1 / 32) ** params.alpha * float(np.max(np.abs(dens)))
    assert val <= bound * 1.05


def test_limit_ly_rows(fam, lp_cfg_fast):
    suite = build_suite(DENSITY_SUITE[:6], 64, 64)
    rows = limit_ly_check(fam, suite, 4, 0.5, 0.5, lp_cfg_fast)
    assert all(r.passed for r in rows)
    horiz = [r for r in rows if r.f_name == "t" and r.inequality == "strong_unstable"]
    assert all(r.lhs <= 1e-10 for r in horiz)


def test_perturbation_scan_rows(fam, lp_cfg_fast):
    probe = [("one", GridFunction.constant(1.0, 64, 256)),
             ("poly", GridFunction.from_callable(lambda s, t: (1 + 0.5 * s) * (1 + t) / 2,
                                                 64, 256))]
    rows = perturbation_scan(fam, probe, 0.5, 0.5, lp_cfg_fast, ulam_p=5, ulam_q=2,
                             ulam_refine=32)
    assert [r.lam for r in rows] == [0.2, 0.1, 0.05, 0.025]
    assert all(r.passed for r in rows)
    dists = [r.mu_weak_distance for r in rows]
    assert all(a > b for a, b in zip(dists, dists[1:]))
    assert dists[-1] <= 0.2


def test_constant_on_horizontals_perturbation_identity(fam, lp_cfg_fast, params):
    """For f = f(t) the operator difference acts through the leaf averages."""
    from bakerlab.norms import Difference
    from bakerlab.transfer import apply_transfer
    f = GridFunction.from_callable(lambda s, t: 1 + 0.5 * np.cos(np.pi * t), 64, 512)
    lam = Fraction(1, 20)
    leaves = sample_leaves(2, lp_cfg_fast)
    l0f = apply_limit_operator(fam, f)
    llf = apply_transfer(fam.map_at(lam), f, cell_cap=None)
    diff_val = weak_norm(Difference(l0f, llf, lp_cfg_fast), leaves, lp_cfg_fast)
    s_norm = strong_stable_norm(f, leaves, params.alpha, lp_cfg_fast)
    assert diff_val <= s_norm * float(lam) ** (1 - params.alpha)


def test_expanding_restriction(fam):
    er = expanding_restriction(fam)
    assert er.branch_count_per_leaf == 2
    assert er.slope == 2.0
    assert er.uniform_deviation <= 1e-10
    er3 = expanding_restriction(SingularFamily.default(3))
    assert er3.branch_count_per_leaf == 3
    assert er3.uniform_deviation <= 1e-10
