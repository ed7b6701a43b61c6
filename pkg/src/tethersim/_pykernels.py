"""Pure numpy implementation of the stepper's hot kernels.

Vectors use the reduced layout of length 3N+10:
    x (0:3) | eta (3:6) | s_p (6) | nodes 1..N (7:7+3N) | eta_s (last 3)
Node 0 is eliminated through r_0 = x + R rho; its contributions are folded
into the x and eta slots.

All rotation-slot derivatives are left-trivialized: the eta slot of a
gradient is d/de F(R exp(e hat(eta))).

The Jacobian is returned in LAPACK general-band storage for the unknowns
with the s_p slot removed (x, eta, nodes, eta_s), plus a border column/row
and corner for s_p.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import solve_banded

KL = 8
KU = 8

_cache: dict = {}


class _Params:
    __slots__ = ("m", "mr", "ms", "mu", "EA", "GM", "kappa2", "L", "h", "N", "rho", "rho_hat",
                 "rho_s", "rho_s_hat", "Jd", "Jsd", "alpha", "b23", "b31", "nj")


def _hat(v):
    return np.array([[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]])


def _skv(B):
    return np.array([B[2, 1] - B[1, 2], B[0, 2] - B[2, 0], B[1, 0] - B[0, 1]])


def _unpack(kp):
    key = kp.tobytes()
    p = _cache.get(key)
    if p is not None:
        return p
    p = _Params()
    p.m, p.mr, p.ms, p.mu, p.EA, p.GM, p.kappa2, p.L, p.h = (float(v) for v in kp[:9])
    N = p.N = int(kp[9])
    p.rho = np.array([kp[10], 0.0, kp[11]])
    p.rho_hat = _hat(p.rho)
    p.Jd = np.array(kp[12:21]).reshape(3, 3)
    p.Jsd = np.array(kp[21:30]).reshape(3, 3)
    p.rho_s = np.array(kp[30:33])
    p.rho_s_hat = _hat(p.rho_s)
    a = np.arange(1, N + 1, dtype=float)
    p.alpha = (3 * N * N + 3 * N + 1 - 6 * N * a - 3 * a + 3 * a * a) / (N * N)
    p.b23 = (1 + 3 * N - 3 * a) / (6.0 * N)
    p.b31 = (2 + 3 * N - 3 * a) / (6.0 * N)
    nj = np.full(N + 1, 2.0)
    nj[0] = nj[N] = 1.0
    p.nj = nj
    if len(_cache) > 64:
        _cache.clear()
    _cache[key] = p
    return p


def potential(x, R, s, r, Rs, kp):
    """Return (V_gravity, V_elastic, reduced gradient of V)."""
    p = _unpack(kp)
    N, GM, mu, EA = p.N, p.GM, p.mu, p.EA
    l = (p.L - s) / N
    mb = p.m + p.mr + mu * s

    nx = np.sqrt(x @ x)
    sig = r[:-1] + r[1:]
    nsig = np.sqrt(np.einsum("ij,ij->i", sig, sig))
    u = r[1:] - r[:-1]
    dist = np.sqrt(np.einsum("ij,ij->i", u, u))
    c = r[N] + Rs @ p.rho_s
    nc = np.sqrt(c @ c)

    Vg = -GM * mb / nx - np.sum(2.0 * GM * mu * l / nsig) - GM * p.ms / nc
    strain = dist - l
    Ve = float(np.sum(0.5 * EA / l * strain * strain))

    gr = np.zeros((N + 1, 3))
    ge = (2.0 * GM * mu * l / nsig ** 3)[:, None] * sig
    tau = (EA / l * strain / dist)[:, None] * u
    gr[:-1] += ge - tau
    gr[1:] += ge + tau
    gc = GM * p.ms / nc ** 3 * c
    gr[N] += gc

    out = np.empty(3 * N + 10)
    out[0:3] = GM * mb / nx ** 3 * x + gr[0]
    out[3:6] = p.rho_hat @ (R.T @ gr[0])
    out[6] = (-GM * mu / nx + np.sum(2.0 * GM * mu / nsig) / N
              + np.sum(0.5 * EA / (l * l) * strain * strain + EA / l * strain) / N)
    out[7:7 + 3 * N] = gr[1:].ravel()
    out[-3:] = p.rho_s_hat @ (Rs.T @ gc)
    return Vg, Ve, out


def _kin_common(p, x, R, s, r, Rs, dx, F, ds, dr, Fs):
    N, mu = p.N, p.mu
    l = (p.L - s) / N
    M1 = mu * l / 3.0
    M12 = mu * l / 6.0
    e = r[:-1] - r[1:]
    drf = dr.copy()
    drf[0] = dx + R @ ((F @ p.rho) - p.rho)
    cvec = np.zeros((N + 1, 3))
    cvec[1:] += mu * p.b23[:, None] * e
    cvec[:-1] += mu * p.b31[:, None] * e
    P = M1 * p.nj[:, None] * drf + ds * cvec
    P[:-1] += M12 * drf[1:]
    P[1:] += M12 * drf[:-1]
    P[N] += p.ms * drf[N] + p.ms * (Rs @ ((Fs @ p.rho_s) - p.rho_s))
    wv = ds * mu * (p.b23[:, None] * drf[1:] + p.b31[:, None] * drf[:-1])
    G = np.zeros((N + 1, 3))
    G[:-1] += wv
    G[1:] -= wv
    return l, M1, M12, drf, cvec, P, G


def kinetic(x, R, s, r, Rs, dx, F, ds, dr, Fs, kp):
    """Kinetic parts of the discrete Euler-Lagrange residual.

    Returns (phi, B) in units of h^2 T: ``B`` is the trivialized derivative of
    h^2 T_k with respect to the increment f_k and ``phi = A - Ad*_{f^-1} B``
    with ``A`` the derivative with respect to g_k at fixed f_k.
    """
    p = _unpack(kp)
    N, mu = p.N, p.mu
    l, M1, M12, drf, cvec, P, G = _kin_common(p, x, R, s, r, Rs, dx, F, ds, dr, Fs)
    mb = p.m + p.mr + mu * s
    ms0 = mu * s + p.kappa2
    drN = drf[N]

    dK_dds = (ms0 + mu * (p.L - s) / 3.0) * ds + float(np.sum(cvec * drf))
    sq = np.einsum("ij,ij->i", drf, drf)
    dK_ds = (0.5 * mu * (dx @ dx) + 0.5 * mu * ds * ds
             - mu / (6.0 * N) * (float(p.nj @ sq) + float(np.sum(drf[:-1] * drf[1:])))
             - mu * ds * ds / 6.0)

    B = np.empty(3 * N + 10)
    B[0:3] = mb * dx + P[0]
    B[3:6] = _skv(p.Jd @ F) + p.rho_hat @ (F.T @ (R.T @ P[0]))
    B[6] = dK_dds
    B[7:7 + 3 * N] = P[1:].ravel()
    B[-3:] = _skv(p.Jsd @ Fs) + p.ms * (p.rho_s_hat @ (Fs.T @ (Rs.T @ drN)))

    phi = np.empty(3 * N + 10)
    gp0 = G[0] - P[0]
    phi[0:3] = gp0 - mb * dx
    phi[3:6] = p.rho_hat @ (R.T @ gp0) - _skv(F @ p.Jd)
    phi[6] = dK_ds - dK_dds
    phi[7:7 + 3 * N] = (G[1:] - P[1:]).ravel()
    phi[-3:] = -p.ms * (p.rho_s_hat @ (Rs.T @ drN)) - _skv(Fs @ p.Jsd)
    return phi, B


def _rot_jac(F, Jd):
    """Columns k: vee-part of (F hat(e_k) Jd + Jd hat(e_k) F^T)."""
    out = np.empty((3, 3))
    for k in range(3):
        E = np.zeros((3, 3))
        i, j = (k + 1) % 3, (k + 2) % 3
        E[j, i] = 1.0
        E[i, j] = -1.0
        M = F @ E @ Jd + Jd @ E @ F.T
        out[:, k] = 0.5 * _skv(M)
    return out


def kinetic_jacobian(x, R, s, r, Rs, dx, F, ds, dr, Fs, kp):
    """(phi, B, band, col, row, corner): phi and B as in :func:`kinetic` plus
    d(phi)/d(unknowns) with rotation unknowns acting as F -> F exp(hat(psi))."""
    p = _unpack(kp)
    N, mu = p.N, p.mu
    phi, B = kinetic(x, R, s, r, Rs, dx, F, ds, dr, Fs, kp)
    l, M1, M12, drf, cvec, P, G = _kin_common(p, x, R, s, r, Rs, dx, F, ds, dr, Fs)
    mb = p.m + p.mr + mu * s
    ms0 = mu * s + p.kappa2
    I3 = np.eye(3)
    n = 3 * N + 10
    Jm = np.zeros((n, n))

    # coefficient of dr_j, dr_{j+1}, dr_{j-1} in (G - P)_j
    b31_ext = np.zeros(N + 1)
    b31_ext[:N] = p.b31
    b23_prev = np.zeros(N + 1)
    b23_prev[1:] = p.b23
    diag = -M1 * p.nj + ds * mu * (b31_ext - b23_prev)
    diag[N] -= p.ms
    up = -M12 + ds * mu * p.b23          # j = 0..N-1, couples dr_{j+1}
    lo = -M12 - ds * mu * p.b31          # j = 1..N, couples dr_{j-1} (index j-1)
    # d(G - P)_j / d ds
    Wg = np.zeros((N + 1, 3))
    wds = mu * (p.b23[:, None] * drf[1:] + p.b31[:, None] * drf[:-1])
    Wg[:-1] += wds
    Wg[1:] -= wds
    W = Wg - cvec

    D_psi = -R @ F @ p.rho_hat           # d dr_0 / d psi
    rhoRt = p.rho_hat @ R.T

    # x row
    Jm[0:3, 0:3] = (diag[0] - mb) * I3
    Jm[0:3, 3:6] = diag[0] * D_psi
    Jm[0:3, 6] = W[0]
    # eta row
    Jm[3:6, 0:3] = diag[0] * rhoRt
    Jm[3:6, 3:6] = diag[0] * (rhoRt @ D_psi) - _rot_jac(F, p.Jd)
    Jm[3:6, 6] = rhoRt @ W[0]
    if N >= 1:
        Jm[0:3, 7:10] = up[0] * I3
        Jm[3:6, 7:10] = up[0] * rhoRt
    # node rows j = 1..N at offset 7 + 3 (j - 1)
    idx = np.arange(3)
    for j in range(1, N + 1):
        o = 7 + 3 * (j - 1)
        Jm[o + idx, o + idx] = diag[j]
        if j < N:
            Jm[o + idx, o + 3 + idx] = up[j]
        if j == 1:
            Jm[o:o + 3, 0:3] = lo[0] * I3
            Jm[o:o + 3, 3:6] = lo[0] * D_psi
        else:
            Jm[o + idx, o - 3 + idx] = lo[j - 1]
        Jm[o:o + 3, 6] = W[j]
    oN = 7 + 3 * (N - 1)
    Jm[oN:oN + 3, n - 3:] = p.ms * (Rs @ Fs @ p.rho_s_hat)
    # eta_s row
    Jm[n - 3:, oN:oN + 3] = -p.ms * (p.rho_s_hat @ Rs.T)
    Jm[n - 3:, n - 3:] = -_rot_jac(Fs, p.Jsd)
    # s row: d(dK/ds - dK/dds)
    nb = -mu / (6.0 * N)
    S = nb * 2.0 * p.nj[:, None] * drf - cvec
    S[:-1] += nb * drf[1:]
    S[1:] += nb * drf[:-1]
    Jm[6, 0:3] = mu * dx + S[0]
    Jm[6, 3:6] = S[0] @ D_psi
    Jm[6, 7:7 + 3 * N] = S[1:].ravel()
    Jm[6, 6] = mu * ds - mu * ds / 3.0 - (ms0 + mu * (p.L - s) / 3.0)

    return (phi, B) + dense_to_bordered(Jm)


_band_index: dict = {}


def _band_indices(nb):
    ix = _band_index.get(nb)
    if ix is None:
        rows, cols = [], []
        for j in range(nb):
            for i in range(max(0, j - KU), min(nb, j + KL + 1)):
                rows.append(i)
                cols.append(j)
        rows = np.array(rows)
        cols = np.array(cols)
        ix = (rows, cols, KL + KU + rows - cols)
        _band_index[nb] = ix
    return ix


def _band_part(n):
    return np.r_[0:6, 7:n]


def dense_to_bordered(Jm):
    """Split a dense reduced Jacobian into (band, col, row, corner)."""
    n = Jm.shape[0]
    keep = _band_part(n)
    A = Jm[np.ix_(keep, keep)]
    nb = n - 1
    rows, cols, brow = _band_indices(nb)
    band = np.zeros((2 * KL + KU + 1, nb))
    band[brow, cols] = A[rows, cols]
    return band, Jm[keep, 6].copy(), Jm[6, keep].copy(), float(Jm[6, 6])


def bordered_to_dense(band, col, row, corner):
    nb = band.shape[1]
    n = nb + 1
    rows, cols, brow = _band_indices(nb)
    A = np.zeros((nb, nb))
    A[rows, cols] = band[brow, cols]
    keep = _band_part(n)
    Jm = np.zeros((n, n))
    Jm[np.ix_(keep, keep)] = A
    Jm[keep, 6] = col
    Jm[6, keep] = row
    Jm[6, 6] = corner
    return Jm


def solve_bordered(band, col, row, corner, rhs, free_s):
    """Solve the bordered banded system; with ``free_s`` false the s_p
    unknown and residual row are dropped and the s slot of the result is 0."""
    n = rhs.shape[0]
    keep = _band_part(n)
    ab = band[KL:]
    out = np.zeros(n)
    if free_s:
        Y = solve_banded((KL, KU), ab, np.column_stack([rhs[keep], col]),
                         overwrite_ab=False, check_finite=False)
        denom = corner - row @ Y[:, 1]
        z = (rhs[6] - row @ Y[:, 0]) / denom
        out[keep] = Y[:, 0] - Y[:, 1] * z
        out[6] = z
    else:
        out[keep] = solve_banded((KL, KU), ab, rhs[keep], overwrite_ab=False, check_finite=False)
    return out
