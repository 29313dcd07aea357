"""The shipped test-function families used by the inequality checkers."""

from __future__ import annotations

from typing import Callable

import numpy as np

from .grids import GridFunction


def _tp(name: str, fn: Callable) -> tuple[str, Callable]:
    return name, fn

# 20 smooth densities f in C^1(W^u); used by the Lasota-Yorke and
# conformality suites.
DENSITY_SUITE: list[tuple[str, Callable]] = [
    _tp("one", lambda s, t: np.ones_like(s)),
    _tp("s", lambda s, t: s),
    _tp("t", lambda s, t: t),
    _tp("st", lambda s, t: s * t),
    _tp("sin_s", lambda s, t: np.sin(2 * np.pi * s)),
    _tp("cos_s", lambda s, t: np.cos(2 * np.pi * s)),
    _tp("sin_t", lambda s, t: np.sin(2 * np.pi * t)),
    _tp("cos_t", lambda s, t: np.cos(2 * np.pi * t)),
    _tp("sin_s_sin_t", lambda s, t: np.sin(2 * np.pi * s) * np.sin(2 * np.pi * t)),
    _tp("sin_2s", lambda s, t: np.sin(4 * np.pi * s)),
    _tp("poly_s", lambda s, t: s * s - s + 1.0 / 6.0),
    _tp("poly_st", lambda s, t: (1 + 0.5 * s) * (1 + t) / 2),
    _tp("gauss", lambda s, t: np.exp(-8 * ((s - 0.4) ** 2 + (t - 0.6) ** 2))),
    _tp("ridge_s", lambda s, t: np.exp(-12 * (s - 0.5) ** 2)),
    _tp("ridge_t", lambda s, t: np.exp(-12 * (t - 0.5) ** 2)),
    _tp("kink_s", lambda s, t: np.sqrt((s - 0.5) ** 2 + 1.0 / 64.0)),
    _tp("kink_t", lambda s, t: np.sqrt((t - 0.5) ** 2 + 1.0 / 64.0)),
    _tp("mix_wave", lambda s, t: 1 + np.sin(2 * np.pi * s) + 0.5 * np.cos(2 * np.pi * t)),
    _tp("tanh_front", lambda s, t: np.tanh(6 * (s - 0.5))),
    _tp("shear", lambda s, t: s + 0.5 * t),
]

# globally Lipschitz multipliers g in C^1(M) for the product bound
MULTIPLIER_SUITE: list[tuple[str, Callable]] = [
    _tp("one", lambda s, t: np.ones_like(s)),
    _tp("s", lambda s, t: s),
    _tp("t", lambda s, t: t),
    _tp("cos_st", lambda s, t: np.cos(np.pi * s * t)),
    _tp("plane", lambda s, t: 0.3 + 0.4 * s - 0.2 * t),
]

# family used to probe operator norms from the strong to the weak space
OPERATOR_PROBE_SUITE: list[tuple[str, Callable]] = [
    _tp("one", lambda s, t: np.ones_like(s)),
    _tp("sin_s", lambda s, t: np.sin(2 * np.pi * s)),
    _tp("cos_s", lambda s, t: np.cos(2 * np.pi * s)),
    _tp("poly_st", lambda s, t: (1 + 0.5 * s) * (1 + t) / 2),
    _tp("gauss", lambda s, t: np.exp(-8 * ((s - 0.4) ** 2 + (t - 0.6) ** 2))),
    _tp("kink_s", lambda s, t: np.sqrt((s - 0.5) ** 2 + 1.0 / 64.0)),
]


def build_suite(entries: list[tuple[str, Callable]], n_s: int = 128,
                n_t: int = 128) -> list[tuple[str, GridFunction]]:
    return [(name, GridFunction.from_callable(fn, n_s, n_t, "C1_Wu"))
            for name, fn in entries]
