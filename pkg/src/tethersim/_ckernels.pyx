# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled twin of ``_pykernels``: same signatures, same layouts."""

import numpy as np
from libc.math cimport sqrt
from libc.stdlib cimport malloc, free
from scipy.linalg.cython_lapack cimport dgbsv

cdef enum:
    CKL = 8
    CKU = 8

KL = CKL
KU = CKU


cdef struct Par:
    double m, mr, ms, mu, EA, GM, kappa2, L, h
    int N
    double rho[3]
    double rhos[3]
    double Jd[9]
    double Jsd[9]


cdef Par _unpack(const double[::1] kp):
    cdef Par p
    cdef int i
    p.m = kp[0]; p.mr = kp[1]; p.ms = kp[2]; p.mu = kp[3]; p.EA = kp[4]
    p.GM = kp[5]; p.kappa2 = kp[6]; p.L = kp[7]; p.h = kp[8]; p.N = <int>kp[9]
    p.rho[0] = kp[10]; p.rho[1] = 0.0; p.rho[2] = kp[11]
    for i in range(9):
        p.Jd[i] = kp[12 + i]
        p.Jsd[i] = kp[21 + i]
    for i in range(3):
        p.rhos[i] = kp[30 + i]
    return p


cdef inline void mv(const double* A, const double* v, double* o) noexcept nogil:
    o[0] = A[0] * v[0] + A[1] * v[1] + A[2] * v[2]
    o[1] = A[3] * v[0] + A[4] * v[1] + A[5] * v[2]
    o[2] = A[6] * v[0] + A[7] * v[1] + A[8] * v[2]


cdef inline void mtv(const double* A, const double* v, double* o) noexcept nogil:
    o[0] = A[0] * v[0] + A[3] * v[1] + A[6] * v[2]
    o[1] = A[1] * v[0] + A[4] * v[1] + A[7] * v[2]
    o[2] = A[2] * v[0] + A[5] * v[1] + A[8] * v[2]


cdef inline void mm(const double* A, const double* B, double* o) noexcept nogil:
    cdef int i, j
    for i in range(3):
        for j in range(3):
            o[3 * i + j] = A[3 * i] * B[j] + A[3 * i + 1] * B[3 + j] + A[3 * i + 2] * B[6 + j]


cdef inline void cross(const double* a, const double* b, double* o) noexcept nogil:
    o[0] = a[1] * b[2] - a[2] * b[1]
    o[1] = a[2] * b[0] - a[0] * b[2]
    o[2] = a[0] * b[1] - a[1] * b[0]


cdef inline void skv(const double* B, double* o) noexcept nogil:
    o[0] = B[7] - B[5]
    o[1] = B[2] - B[6]
    o[2] = B[3] - B[1]


cdef inline void hatm(const double* v, double* o) noexcept nogil:
    o[0] = 0.0; o[1] = -v[2]; o[2] = v[1]
    o[3] = v[2]; o[4] = 0.0; o[5] = -v[0]
    o[6] = -v[1]; o[7] = v[0]; o[8] = 0.0


cdef inline double dot(const double* a, const double* b) noexcept nogil:
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]


def potential(x, R, double s, r, Rs, kp):
    """Return (V_gravity, V_elastic, reduced gradient of V)."""
    cdef const double[::1] kpv = np.ascontiguousarray(kp, dtype=float)
    cdef Par p = _unpack(kpv)
    cdef int N = p.N
    cdef const double[::1] xv = np.ascontiguousarray(x, dtype=float)
    cdef const double[:, ::1] Rv = np.ascontiguousarray(R, dtype=float)
    cdef const double[:, ::1] rv = np.ascontiguousarray(r, dtype=float)
    cdef const double[:, ::1] Rsv = np.ascontiguousarray(Rs, dtype=float)
    out_arr = np.zeros(3 * N + 10)
    cdef double[::1] out = out_arr
    cdef double* gr = <double*>malloc(3 * (N + 1) * sizeof(double))
    cdef double l = (p.L - s) / N
    cdef double mb = p.m + p.mr + p.mu * s
    cdef double GM = p.GM, mu = p.mu, EA = p.EA
    cdef double sig[3]
    cdef double u[3]
    cdef double c[3]
    cdef double t[3]
    cdef double nx, nsig, dist, strain, coef, nc, Vg, Ve, s_slot
    cdef int i, k
    for i in range(3 * (N + 1)):
        gr[i] = 0.0
    nx = sqrt(dot(&xv[0], &xv[0]))
    Vg = -GM * mb / nx
    Ve = 0.0
    s_slot = -GM * mu / nx
    for i in range(N):
        for k in range(3):
            sig[k] = rv[i, k] + rv[i + 1, k]
            u[k] = rv[i + 1, k] - rv[i, k]
        nsig = sqrt(dot(sig, sig))
        dist = sqrt(dot(u, u))
        strain = dist - l
        Vg -= 2.0 * GM * mu * l / nsig
        Ve += 0.5 * EA / l * strain * strain
        s_slot += 2.0 * GM * mu / nsig / N + (0.5 * EA / (l * l) * strain * strain + EA / l * strain) / N
        coef = 2.0 * GM * mu * l / (nsig * nsig * nsig)
        for k in range(3):
            gr[3 * i + k] += coef * sig[k] - EA / l * strain / dist * u[k]
            gr[3 * (i + 1) + k] += coef * sig[k] + EA / l * strain / dist * u[k]
    mv(&Rsv[0, 0], p.rhos, c)
    for k in range(3):
        c[k] += rv[N, k]
    nc = sqrt(dot(c, c))
    Vg -= GM * p.ms / nc
    coef = GM * p.ms / (nc * nc * nc)
    for k in range(3):
        c[k] *= coef
        gr[3 * N + k] += c[k]
    for k in range(3):
        out[k] = GM * mb / (nx * nx * nx) * xv[k] + gr[k]
    mtv(&Rv[0, 0], gr, t)
    cross(p.rho, t, &out[3])
    out[6] = s_slot
    for i in range(3 * N):
        out[7 + i] = gr[3 + i]
    mtv(&Rsv[0, 0], c, t)
    cross(p.rhos, t, &out[3 * N + 7])
    free(gr)
    return Vg, Ve, out_arr


cdef void _rot_jac(const double* F, const double* Jd, double* out) noexcept nogil:
    """Column k: half of vee(M - M^T) with M = F hat(e_k) Jd + Jd hat(e_k) F^T."""
    cdef double e[3]
    cdef double E[9]
    cdef double T1[9]
    cdef double T2[9]
    cdef double Ft[9]
    cdef double M[9]
    cdef double w[3]
    cdef int k, i, j
    for i in range(3):
        for j in range(3):
            Ft[3 * i + j] = F[3 * j + i]
    for k in range(3):
        e[0] = 0.0; e[1] = 0.0; e[2] = 0.0
        e[k] = 1.0
        hatm(e, E)
        mm(F, E, T1)
        mm(T1, Jd, M)
        mm(Jd, E, T1)
        mm(T1, Ft, T2)
        for i in range(9):
            M[i] += T2[i]
        skv(M, w)
        for i in range(3):
            out[3 * i + k] = 0.5 * w[i]


cdef class _Band:
    """Writes reduced-index Jacobian entries into the bordered band storage."""
    cdef double[:, ::1] band
    cdef double[::1] col
    cdef double[::1] row
    cdef double corner

    cdef inline void add(self, int i, int j, double v) noexcept:
        cdef int bi, bj
        if i == 6:
            if j == 6:
                self.corner += v
            else:
                bj = j if j < 6 else j - 1
                self.row[bj] += v
            return
        bi = i if i < 6 else i - 1
        if j == 6:
            self.col[bi] += v
            return
        bj = j if j < 6 else j - 1
        self.band[CKL + CKU + bi - bj, bj] += v

    cdef void add_block(self, int i0, int j0, const double* A) noexcept:
        cdef int a, b
        for a in range(3):
            for b in range(3):
                self.add(i0 + a, j0 + b, A[3 * a + b])

    cdef void add_diag(self, int i0, int j0, double v) noexcept:
        cdef int a
        for a in range(3):
            self.add(i0 + a, j0 + a, v)


cdef object _kinetic_impl(x, R, double s, r, Rs, dx, F, double ds, dr, Fs, kp, bint want_jac):
    cdef const double[::1] kpv = np.ascontiguousarray(kp, dtype=float)
    cdef Par p = _unpack(kpv)
    cdef int N = p.N
    cdef const double[::1] xv = np.ascontiguousarray(x, dtype=float)
    cdef const double[:, ::1] Rv = np.ascontiguousarray(R, dtype=float)
    cdef const double[:, ::1] rv = np.ascontiguousarray(r, dtype=float)
    cdef const double[:, ::1] Rsv = np.ascontiguousarray(Rs, dtype=float)
    cdef const double[::1] dxv = np.ascontiguousarray(dx, dtype=float)
    cdef const double[:, ::1] Fv = np.ascontiguousarray(F, dtype=float)
    cdef const double[:, ::1] drv = np.ascontiguousarray(dr, dtype=float)
    cdef const double[:, ::1] Fsv = np.ascontiguousarray(Fs, dtype=float)
    cdef int n = 3 * N + 10
    phi_arr = np.empty(n)
    B_arr = np.empty(n)
    cdef double[::1] phi = phi_arr
    cdef double[::1] B = B_arr
    cdef double mu = p.mu
    cdef double l = (p.L - s) / N
    cdef double M1 = mu * l / 3.0, M12 = mu * l / 6.0
    cdef double mb = p.m + p.mr + mu * s
    cdef double ms0 = mu * s + p.kappa2
    cdef double* drf = <double*>malloc(3 * (N + 1) * sizeof(double))
    cdef double* cv = <double*>malloc(3 * (N + 1) * sizeof(double))
    cdef double* P = <double*>malloc(3 * (N + 1) * sizeof(double))
    cdef double* G = <double*>malloc(3 * (N + 1) * sizeof(double))
    cdef double* Wd = <double*>malloc(3 * (N + 1) * sizeof(double))
    cdef double* nj = <double*>malloc((N + 1) * sizeof(double))
    cdef double* b23 = <double*>malloc(N * sizeof(double))
    cdef double* b31 = <double*>malloc(N * sizeof(double))
    cdef double t[3]
    cdef double t2[3]
    cdef double e[3]
    cdef double A9[9]
    cdef double B9[9]
    cdef double C9[9]
    cdef double Dpsi[9]
    cdef double rhoRt[9]
    cdef double a, w, dK_dds, dK_ds, sq, adj, nbf, diag_j
    cdef int i, j, k, o, oN
    try:
        for i in range(N):
            a = i + 1.0
            b23[i] = (1.0 + 3.0 * N - 3.0 * a) / (6.0 * N)
            b31[i] = (2.0 + 3.0 * N - 3.0 * a) / (6.0 * N)
        for j in range(N + 1):
            nj[j] = 1.0 if (j == 0 or j == N) else 2.0
            for k in range(3):
                drf[3 * j + k] = drv[j, k]
                cv[3 * j + k] = 0.0
                G[3 * j + k] = 0.0
                Wd[3 * j + k] = 0.0
        # attachment-implied node-0 increment dx + R (F rho - rho)
        mv(&Fv[0, 0], p.rho, t)
        for k in range(3):
            t[k] -= p.rho[k]
        mv(&Rv[0, 0], t, t2)
        for k in range(3):
            drf[k] = dxv[k] + t2[k]
        for i in range(N):
            for k in range(3):
                e[k] = rv[i, k] - rv[i + 1, k]
                cv[3 * (i + 1) + k] += mu * b23[i] * e[k]
                cv[3 * i + k] += mu * b31[i] * e[k]
                w = mu * (b23[i] * drf[3 * (i + 1) + k] + b31[i] * drf[3 * i + k])
                Wd[3 * i + k] += w
                Wd[3 * (i + 1) + k] -= w
                G[3 * i + k] += ds * w
                G[3 * (i + 1) + k] -= ds * w
        for j in range(N + 1):
            for k in range(3):
                P[3 * j + k] = M1 * nj[j] * drf[3 * j + k] + ds * cv[3 * j + k]
                if j < N:
                    P[3 * j + k] += M12 * drf[3 * (j + 1) + k]
                if j > 0:
                    P[3 * j + k] += M12 * drf[3 * (j - 1) + k]
        mv(&Fsv[0, 0], p.rhos, t)
        for k in range(3):
            t[k] -= p.rhos[k]
        mv(&Rsv[0, 0], t, t2)
        for k in range(3):
            P[3 * N + k] += p.ms * drf[3 * N + k] + p.ms * t2[k]

        dK_dds = (ms0 + mu * (p.L - s) / 3.0) * ds
        sq = 0.0
        adj = 0.0
        for j in range(N + 1):
            dK_dds += dot(&cv[3 * j], &drf[3 * j])
            sq += nj[j] * dot(&drf[3 * j], &drf[3 * j])
            if j < N:
                adj += dot(&drf[3 * j], &drf[3 * j + 3])
        dK_ds = (0.5 * mu * dot(&dxv[0], &dxv[0]) + 0.5 * mu * ds * ds
                 - mu / (6.0 * N) * (sq + adj) - mu * ds * ds / 6.0)

        # B
        for k in range(3):
            B[k] = mb * dxv[k] + P[k]
        mm(p.Jd, &Fv[0, 0], A9)
        skv(A9, &B[3])
        mtv(&Rv[0, 0], P, t)
        mtv(&Fv[0, 0], t, t2)
        cross(p.rho, t2, t)
        for k in range(3):
            B[3 + k] += t[k]
        B[6] = dK_dds
        for i in range(3 * N):
            B[7 + i] = P[3 + i]
        mm(p.Jsd, &Fsv[0, 0], A9)
        skv(A9, &B[n - 3])
        mtv(&Rsv[0, 0], &drf[3 * N], t)
        mtv(&Fsv[0, 0], t, t2)
        cross(p.rhos, t2, t)
        for k in range(3):
            B[n - 3 + k] += p.ms * t[k]

        # phi
        for k in range(3):
            e[k] = G[k] - P[k]
            phi[k] = e[k] - mb * dxv[k]
        mtv(&Rv[0, 0], e, t)
        cross(p.rho, t, &phi[3])
        mm(&Fv[0, 0], p.Jd, A9)
        skv(A9, t)
        for k in range(3):
            phi[3 + k] -= t[k]
        phi[6] = dK_ds - dK_dds
        for i in range(3 * N):
            phi[7 + i] = G[3 + i] - P[3 + i]
        mtv(&Rsv[0, 0], &drf[3 * N], t)
        cross(p.rhos, t, t2)
        mm(&Fsv[0, 0], p.Jsd, A9)
        skv(A9, t)
        for k in range(3):
            phi[n - 3 + k] = -p.ms * t2[k] - t[k]

        if not want_jac:
            return phi_arr, B_arr

        nb = n - 1
        band_arr = np.zeros((2 * CKL + CKU + 1, nb))
        col_arr = np.zeros(nb)
        row_arr = np.zeros(nb)
        J = _Band()
        J.band = band_arr
        J.col = col_arr
        J.row = row_arr
        J.corner = 0.0

        # d dr_0 / d psi = -R F hat(rho)
        mm(&Rv[0, 0], &Fv[0, 0], A9)
        hatm(p.rho, B9)
        mm(A9, B9, Dpsi)
        for i in range(9):
            Dpsi[i] = -Dpsi[i]
        # hat(rho) R^T
        for i in range(3):
            for j in range(3):
                A9[3 * i + j] = Rv[j, i]
        mm(B9, A9, rhoRt)

        # x row
        diag_j = -M1 * nj[0] + ds * mu * b31[0]
        J.add_diag(0, 0, diag_j - mb)
        for i in range(9):
            C9[i] = diag_j * Dpsi[i]
        J.add_block(0, 3, C9)
        for k in range(3):
            J.add(k, 6, Wd[k] - cv[k])
        # eta row
        for i in range(9):
            C9[i] = diag_j * rhoRt[i]
        J.add_block(3, 0, C9)
        mm(rhoRt, Dpsi, A9)
        _rot_jac(&Fv[0, 0], p.Jd, B9)
        for i in range(9):
            C9[i] = diag_j * A9[i] - B9[i]
        J.add_block(3, 3, C9)
        for k in range(3):
            t[k] = Wd[k] - cv[k]
        mv(rhoRt, t, t2)
        for k in range(3):
            J.add(3 + k, 6, t2[k])
        # x, eta rows against node 1
        w = -M12 + ds * mu * b23[0]
        J.add_diag(0, 7, w)
        for i in range(9):
            C9[i] = w * rhoRt[i]
        J.add_block(3, 7, C9)

        for j in range(1, N + 1):
            o = 7 + 3 * (j - 1)
            diag_j = -M1 * nj[j] - ds * mu * b23[j - 1]
            if j < N:
                diag_j += ds * mu * b31[j]
            else:
                diag_j -= p.ms
            J.add_diag(o, o, diag_j)
            if j < N:
                J.add_diag(o, o + 3, -M12 + ds * mu * b23[j])
            w = -M12 - ds * mu * b31[j - 1]
            if j == 1:
                J.add_diag(o, 0, w)
                for i in range(9):
                    C9[i] = w * Dpsi[i]
                J.add_block(o, 3, C9)
            else:
                J.add_diag(o, o - 3, w)
            for k in range(3):
                J.add(o + k, 6, Wd[3 * j + k] - cv[3 * j + k])
        oN = 7 + 3 * (N - 1)
        mm(&Rsv[0, 0], &Fsv[0, 0], A9)
        hatm(p.rhos, B9)
        mm(A9, B9, C9)
        for i in range(9):
            C9[i] *= p.ms
        J.add_block(oN, n - 3, C9)
        for i in range(3):
            for j in range(3):
                A9[3 * i + j] = Rsv[j, i]
        mm(B9, A9, C9)
        for i in range(9):
            C9[i] *= -p.ms
        J.add_block(n - 3, oN, C9)
        _rot_jac(&Fsv[0, 0], p.Jsd, B9)
        for i in range(9):
            B9[i] = -B9[i]
        J.add_block(n - 3, n - 3, B9)

        # s row
        nbf = -mu / (6.0 * N)
        for j in range(N + 1):
            for k in range(3):
                t[k] = nbf * 2.0 * nj[j] * drf[3 * j + k] - cv[3 * j + k]
                if j < N:
                    t[k] += nbf * drf[3 * (j + 1) + k]
                if j > 0:
                    t[k] += nbf * drf[3 * (j - 1) + k]
            if j == 0:
                for k in range(3):
                    J.add(6, k, mu * dxv[k] + t[k])
                mtv(Dpsi, t, t2)
                for k in range(3):
                    J.add(6, 3 + k, t2[k])
            else:
                for k in range(3):
                    J.add(6, 7 + 3 * (j - 1) + k, t[k])
        J.add(6, 6, mu * ds - mu * ds / 3.0 - (ms0 + mu * (p.L - s) / 3.0))
        return phi_arr, B_arr, band_arr, col_arr, row_arr, J.corner
    finally:
        free(drf); free(cv); free(P); free(G); free(Wd); free(nj); free(b23); free(b31)


def kinetic(x, R, double s, r, Rs, dx, F, double ds, dr, Fs, kp):
    """Kinetic parts (phi, B) of the discrete Euler-Lagrange residual."""
    return _kinetic_impl(x, R, s, r, Rs, dx, F, ds, dr, Fs, kp, False)


def kinetic_jacobian(x, R, double s, r, Rs, dx, F, double ds, dr, Fs, kp):
    """(phi, B, band, col, row, corner) in bordered band storage."""
    return _kinetic_impl(x, R, s, r, Rs, dx, F, ds, dr, Fs, kp, True)


def solve_bordered(band, col, row, double corner, rhs, bint free_s):
    """Bordered banded solve by LAPACK dgbsv and a Schur complement on s_p."""
    cdef int n = rhs.shape[0]
    cdef int nb = n - 1
    cdef int kl = CKL, ku = CKU, ldab = 2 * CKL + CKU + 1, info = 0
    cdef int nrhs = 2 if free_s else 1
    cdef int ldb = nb
    ab_arr = np.array(band, dtype=float, order="F", copy=True)
    cdef double[::1, :] ab = ab_arr
    rhs_v = np.asarray(rhs, dtype=float)
    Y_arr = np.empty((nb, nrhs), order="F")
    cdef double[::1, :] Y = Y_arr
    Y_arr[:6, 0] = rhs_v[:6]
    Y_arr[6:, 0] = rhs_v[7:]
    if free_s:
        Y_arr[:, 1] = col
    ipiv_arr = np.empty(nb, dtype=np.intc)
    cdef int[::1] ipiv = ipiv_arr
    dgbsv(&nb, &kl, &ku, &nrhs, &ab[0, 0], &ldab, &ipiv[0], &Y[0, 0], &ldb, &info)
    if info != 0:
        raise np.linalg.LinAlgError(f"singular banded matrix (dgbsv info={info})")
    out = np.zeros(n)
    cdef double z
    if free_s:
        rowv = np.asarray(row, dtype=float)
        z = (rhs_v[6] - rowv @ Y_arr[:, 0]) / (corner - rowv @ Y_arr[:, 1])
        sol = Y_arr[:, 0] - Y_arr[:, 1] * z
        out[6] = z
    else:
        sol = Y_arr[:, 0]
    out[:6] = sol[:6]
    out[7:] = sol[6:]
    return out
