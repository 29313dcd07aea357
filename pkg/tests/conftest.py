import pytest
from fractions import Fraction

from bakerlab import BakerMap, LpConfig
from bakerlab.grids import HolderParams


@pytest.fixture(scope="session")
def maps3():
    """The three shipped maps."""
    return {
        "2_12": BakerMap.stacked(2, Fraction(1, 2)),
        "2_14": BakerMap.stacked(2, Fraction(1, 4)),
        "3_18": BakerMap.stacked(3, Fraction(1, 8)),
    }


@pytest.fixture(scope="session")
def params():
    return HolderParams(alpha=0.5, beta=0.5, beta_prime=0.75)


@pytest.fixture(scope="session")
def lp_cfg():
    return LpConfig()


@pytest.fixture(scope="session")
def lp_cfg_fast():
    """Cheaper settings for tests that only need qualitative resolution."""
    return LpConfig(leaf_grid=64, witness_leaves=4, kadic_level=1, max_pairs=24,
                    band=8, n_random_pairs=16, max_nodes=220)


@pytest.fixture(scope="session")
def ulam_models(maps3):
    from bakerlab.spectral import build_ulam, invariant_measure
    out = {}
    spec = {"2_12": (7, 7, None), "2_14": (7, 7, 64), "3_18": (4, 4, 64)}
    for key, (p, q, tr) in spec.items():
        model = build_ulam(maps3[key], p, q, t_refine=tr)
        mu0, lam1 = invariant_measure(model)
        out[key] = (model, mu0, lam1)
    return out


@pytest.fixture(scope="session")
def second_moduli(ulam_models):
    from bakerlab.spectral import second_eigenvalue_modulus
    return {key: second_eigenvalue_modulus(model, mu0, restarts=64)
            for key, (model, mu0, _) in ulam_models.items()}
