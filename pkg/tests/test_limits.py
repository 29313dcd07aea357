import numpy as np
import pytest
from scipy import stats

from bakerlab.limits import (ObservableSpec, birkhoff_sample, clt_check,
                             green_kubo_variance, ldp_empirical, lebesgue_sampler,
                             pressure_curvature_at_zero, rate_function,
                             standard_pair_sampler, tilted_sampler)
from bakerlab.spectral import ulam_integral


@pytest.fixture(scope="module")
def sin_obs(ulam_models):
    model, mu0, _ = ulam_models["2_12"]
    return ObservableSpec.centered_from("sin_s", lambda s, t: np.sin(2 * np.pi * s),
                                        model, mu0)


def test_centering_invariant(ulam_models):
    model, mu0, _ = ulam_models["2_12"]
    g = ObservableSpec.centered_from("shift", lambda s, t: s + 0.3, model, mu0)
    assert abs(ulam_integral(model, mu0, g.fn)) <= 1e-8


def test_birkhoff_constant_observable(maps3):
    sums = birkhoff_sample(maps3["2_12"], lambda s, t: np.full_like(s, 2.5),
                           n=7, count=100, seed=1)
    assert np.allclose(sums[7], 17.5)


def test_birkhoff_n1_distribution_matches_direct(maps3):
    g = lambda s, t: np.sin(2 * np.pi * s)
    sums = birkhoff_sample(maps3["2_12"], g, n=1, count=50_000, seed=5)[1]
    rng = np.random.Generator(np.random.Philox(key=99))
    direct = g(rng.random(50_000), rng.random(50_000))
    ks = stats.ks_2samp(sums, direct).statistic
    assert ks <= 0.015


def test_birkhoff_deterministic(maps3):
    g = lambda s, t: s * t
    a = birkhoff_sample(maps3["2_14"], g, 50, 1000, seed=7)[50]
    b = birkhoff_sample(maps3["2_14"], g, 50, 1000, seed=7)[50]
    assert np.array_equal(a, b)


def test_birkhoff_mean_converges(maps3, sin_obs):
    sums = birkhoff_sample(maps3["2_12"], sin_obs.fn, 400, 4000, seed=13)[400]
    # standard error of the grand mean is sigma / sqrt(n * count)
    assert abs(sums.mean() / 400) <= 5 * np.sqrt(0.5 / (400 * 4000))


def test_green_kubo_examples(ulam_models, sin_obs):
    model, mu0, _ = ulam_models["2_12"]
    rep = green_kubo_variance(model, mu0, sin_obs)
    assert rep.value == pytest.approx(0.5, rel=1e-3)
    assert all(abs(t) <= 1e-10 for t in rep.terms[1:6])
    zero = ObservableSpec("zero", lambda s, t: np.zeros_like(s), True, 0.0)
    assert green_kubo_variance(model, mu0, zero).value == 0.0


def test_green_kubo_requires_centering(ulam_models):
    model, mu0, _ = ulam_models["2_12"]
    g = ObservableSpec("raw", lambda s, t: s, False, 0.5)
    with pytest.raises(ValueError):
        green_kubo_variance(model, mu0, g)


def test_clt_smoke_and_degenerate(maps3, ulam_models, sin_obs):
    model, mu0, _ = ulam_models["2_12"]
    var = green_kubo_variance(model, mu0, sin_obs).value
    rep = clt_check(maps3["2_12"], sin_obs, var, n=2000, count=20_000, seed=21)
    assert rep.ks_statistic <= 0.02
    assert abs(rep.empirical_variance - var) / var <= 0.05
    zero = ObservableSpec("zero", lambda s, t: np.zeros_like(s), True, 0.0)
    deg = clt_check(maps3["2_12"], zero, 0.0, n=100, count=100, seed=2)
    assert deg.degenerate


def test_clt_noninvariant_initial_measure(maps3, ulam_models, sin_obs):
    model, mu0, _ = ulam_models["2_12"]
    var = green_kubo_variance(model, mu0, sin_obs).value
    rep = clt_check(maps3["2_12"], sin_obs, var, n=2000, count=20_000,
                    sampler=tilted_sampler, seed=22)
    assert rep.ks_statistic <= 0.02


def test_pressure_properties(ulam_models, sin_obs):
    model, mu0, _ = ulam_models["2_12"]
    z = np.linspace(-1.6, 1.6, 33)
    lr = rate_function(model, mu0, sin_obs, z)
    k0 = int(np.argmin(np.abs(z)))
    assert lr.pressure[k0] == 0.0
    d1, d2 = pressure_curvature_at_zero(lr)
    assert abs(d1) <= 1e-3
    var = green_kubo_variance(model, mu0, sin_obs).value
    assert abs(d2 - var) / var <= 0.05
    # convexity of the pressure points and of the rate function
    assert np.all(np.diff(lr.pressure, 2) >= -1e-9)
    assert np.all(np.diff(lr.rate, 2) >= -1e-9)
    assert np.all(lr.rate >= 0)
    assert lr.rate_at(0.0) <= 1e-9  # I(mean) = 0


def test_ldp_empirical_bulk(maps3, ulam_models, sin_obs):
    model, mu0, _ = ulam_models["2_12"]
    z = np.linspace(-1.6, 1.6, 33)
    lr = rate_function(model, mu0, sin_obs, z)
    emp = ldp_empirical(maps3["2_12"], sin_obs, [0.0, 0.2], [60, 120],
                        count=200_000, seed=31)
    # at the mean the exponent vanishes
    mean_cells = [c for c in emp.cells if c.t == 0.0]
    assert all(abs(c.exponent) <= 0.02 for c in mean_cells if c.exponent is not None)
    slope = emp.slopes[0.2]
    assert slope is not None
    assert abs(slope - (-lr.rate_at(0.2))) / lr.rate_at(0.2) <= 0.25


def test_ldp_insufficient_counts_marked(maps3, sin_obs):
    emp = ldp_empirical(maps3["2_12"], sin_obs, [0.9], [50], count=2000, seed=1)
    assert emp.cells[0].exponent is None
    assert emp.slopes[0.9] is None


def test_standard_pair_sampler_support(maps3):
    from bakerlab.singular import SingularFamily, limit_invariant_measure
    fam = SingularFamily.default(2)
    mu0 = limit_invariant_measure(fam)
    sampler = standard_pair_sampler(mu0)
    rng = np.random.Generator(np.random.Philox(key=3))
    s, t = sampler(rng, 1000)
    assert set(np.unique(t)) == {0.25, 0.75}
    assert 0 <= s.min() and s.max() <= 1
