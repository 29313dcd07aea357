"""Independent quadrature oracles used by the tests.

Everything here is written from scratch on purpose: a small standalone
forward map, standalone bilinear interpolation, and panel-exact Gauss
quadrature of f(x) e^{z S_n g(x)} phi(T^n x) over the square.  Panels are
aligned with every kink line of the integrand, and Gauss-3 per axis is
exact for the bilinear-times-bilinear parts, so for z = 0 the oracle value
is the exact integral of the carrier integrand up to rounding.
"""

from __future__ import annotations

import numpy as np

_G3 = (np.array([-np.sqrt(3.0 / 5.0), 0.0, np.sqrt(3.0 / 5.0)]),
       np.array([5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0]))


def forward_pts(map_, s, t):
    kappa = map_.kappa
    lam = float(map_.lam)
    i = np.clip(np.floor(s * kappa).astype(int), 0, kappa - 1)
    y = np.array([float(pl.y_offset) for pl in map_.layout])[i]
    fh = np.array([pl.flip_horizontal for pl in map_.layout])[i]
    fv = np.array([pl.flip_vertical for pl in map_.layout])[i]
    local = kappa * s - i
    return np.where(fh, 1.0 - local, local), y + np.where(fv, lam * (1.0 - t), lam * t)


def bilinear(grid_vals, s, t):
    """Standalone bilinear interpolation on the uniform unit grid."""
    ns = grid_vals.shape[0] - 1
    nt = grid_vals.shape[1] - 1
    js = np.clip(np.floor(s * ns).astype(int), 0, ns - 1)
    jt = np.clip(np.floor(t * nt).astype(int), 0, nt - 1)
    ws = s * ns - js
    wt = t * nt - jt
    return ((1 - ws) * (1 - wt) * grid_vals[js, jt]
            + (1 - ws) * wt * grid_vals[js, jt + 1]
            + ws * (1 - wt) * grid_vals[js + 1, jt]
            + ws * wt * grid_vals[js + 1, jt + 1])


def _gauss_points(panels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mid = 0.5 * (panels[:-1] + panels[1:])
    half = 0.5 * np.diff(panels)
    xs, ws = _G3
    pts = (mid[:, None] + half[:, None] * xs[None, :]).ravel()
    wts = (half[:, None] * ws[None, :]).ravel()
    return pts, wts


def birkhoff_pairing(map_, f_vals, phi_vals, n, z=0.0, g_vals=None):
    """Oracle for integral of f * exp(z S_n g) * (phi o T^n) over the square."""
    kappa = map_.kappa
    lam = float(map_.lam)
    nf = f_vals.shape[0] - 1
    nphi = phi_vals.shape[0] - 1
    total = 0.0
    n_cyl = kappa ** n
    uniform = np.linspace(0.0, 1.0, max(nf, nphi) + 1)
    for mcyl in range(n_cyl):
        lo, hi = mcyl / n_cyl, (mcyl + 1) / n_cyl
        # affine coefficients of T^n on the cylinder, from three samples
        sa, sb = lo + 0.3 * (hi - lo), lo + 0.7 * (hi - lo)
        s0, t0 = np.array([sa, sb, sa]), np.array([0.25, 0.25, 0.75])
        su, tu = s0.copy(), t0.copy()
        for _ in range(n):
            su, tu = forward_pts(map_, su, tu)
        a_s = (su[1] - su[0]) / (sb - sa)
        b_s = su[0] - a_s * sa
        a_t = (tu[2] - tu[0]) / 0.5
        b_t = tu[0] - a_t * 0.25
        # panels aligned with all kink lines
        s_kinks = [uniform[(uniform >= lo) & (uniform <= hi)]]
        pb = (uniform - b_s) / a_s
        s_kinks.append(pb[(pb >= lo) & (pb <= hi)])
        s_panels = np.unique(np.concatenate([[lo, hi]] + s_kinks))
        pt = (uniform - b_t) / a_t
        t_panels = np.unique(np.concatenate(
            [uniform, pt[(pt >= 0.0) & (pt <= 1.0)], [0.0, 1.0]]))
        sp, sw = _gauss_points(s_panels)
        tp, tw = _gauss_points(t_panels)
        S, T = np.meshgrid(sp, tp, indexing="ij")
        vals = bilinear(f_vals, S, T)
        if z != 0.0 and g_vals is not None:
            ss, tt = S.copy(), T.copy()
            acc = np.zeros_like(S)
            for _ in range(n):
                acc += bilinear(g_vals, ss, tt)
                ss, tt = forward_pts(map_, ss, tt)
            vals = vals * np.exp(z * acc)
        vals = vals * bilinear(phi_vals, a_s * S + b_s, a_t * T + b_t)
        total += float(sw @ vals @ tw)
    return total
