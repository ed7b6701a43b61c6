"""SO(3) kernel and the product configuration group of the discretized model.

The configuration group is R^3 x SO(3) x R x (R^3)^(N+1) x SO(3) acting on
itself componentwise: addition on the abelian factors, right multiplication on
the two rotation factors. Rotations are always stored as full 3x3 matrices and
only ever updated by multiplication with exponentials, so they stay on SO(3)
up to round-off without any projection.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, NonSkewInput, StateInvalid

_EYE = np.eye(3)
_SMALL_ANGLE = 1e-6


def hat(v):
    """Map a 3-vector to the skew matrix with ``hat(v) @ w == cross(v, w)``."""
    v = np.asarray(v, dtype=float)
    return np.array([[0.0, -v[2], v[1]],
                     [v[2], 0.0, -v[0]],
                     [-v[1], v[0], 0.0]])


def vee(S, atol=1e-9):
    """Inverse of :func:`hat`. Raises NonSkewInput if ``S`` is not skew."""
    S = np.asarray(S, dtype=float)
    if S.shape != (3, 3):
        raise DimensionMismatch(f"vee expects a 3x3 matrix, got {S.shape}")
    if np.max(np.abs(S + S.T)) > atol:
        raise NonSkewInput("matrix is not skew-symmetric")
    return np.array([S[2, 1], S[0, 2], S[1, 0]])


def skew_part_vee(B):
    """vee(B - B^T) for an arbitrary 3x3 matrix, no skewness check."""
    return np.array([B[2, 1] - B[1, 2], B[0, 2] - B[2, 0], B[1, 0] - B[0, 1]])


def exp_so3(v):
    """Rodrigues formula; series coefficients below a 1e-6 rad rotation angle."""
    v = np.asarray(v, dtype=float)
    th2 = float(v @ v)
    K = hat(v)
    if th2 < _SMALL_ANGLE * _SMALL_ANGLE:
        a = 1.0 - th2 / 6.0
        b = 0.5 - th2 / 24.0
    else:
        th = np.sqrt(th2)
        a = np.sin(th) / th
        b = (1.0 - np.cos(th)) / th2
    return _EYE + a * K + b * (K @ K)


def log_so3(R):
    """Principal logarithm, returned as a rotation vector with angle in [0, pi]."""
    R = np.asarray(R, dtype=float)
    w = skew_part_vee(R)
    # atan2 keeps the angle accurate near both 0 and pi, unlike arccos
    th = float(np.arctan2(0.5 * np.linalg.norm(w), 0.5 * (np.trace(R) - 1.0)))
    if th < 1e-6:
        return 0.5 * (1.0 + th * th / 6.0) * w
    if np.pi - th > 1e-6:
        return th / (2.0 * np.sin(th)) * w
    # near pi: recover the axis from the symmetric part
    B = 0.5 * (R + _EYE)
    k = int(np.argmax(np.diag(B)))
    axis = B[:, k] / np.sqrt(B[k, k])
    if axis @ w < 0.0:
        axis = -axis
    return th * axis / np.linalg.norm(axis)


def trace_pairing(eta, B):
    """tr(hat(eta) @ B), evaluated as ``-eta . vee(B - B^T)``."""
    return -float(np.asarray(eta, dtype=float) @ skew_part_vee(np.asarray(B, dtype=float)))


def ortho_error(R):
    """max-abs entry of ``I - R^T R``."""
    R = np.asarray(R, dtype=float)
    return float(np.max(np.abs(_EYE - R.T @ R)))


def polar_project(R):
    """Nearest rotation in the Frobenius norm (used by the RK4 oracle only)."""
    U, _, Vt = np.linalg.svd(np.asarray(R, dtype=float))
    Q = U @ Vt
    if np.linalg.det(Q) < 0.0:
        U[:, -1] = -U[:, -1]
        Q = U @ Vt
    return Q


# ---------------------------------------------------------------------------
# Product group elements


@dataclass
class GroupConfig:
    """One configuration g_k: base position/attitude, drum arc length, tether
    nodes r[0..N] (node 0 is the guideway exit, node N carries the
    sub-spacecraft) and sub-spacecraft attitude."""

    x: np.ndarray
    R: np.ndarray
    s_p: float
    r: np.ndarray
    R_s: np.ndarray

    @property
    def N(self) -> int:
        return self.r.shape[0] - 1

    def copy(self) -> "GroupConfig":
        return GroupConfig(self.x.copy(), self.R.copy(), float(self.s_p),
                           self.r.copy(), self.R_s.copy())


@dataclass
class GroupIncrement:
    """Relative update f_k with g_{k+1} = g_k f_k."""

    dx: np.ndarray
    F: np.ndarray
    ds: float
    dr: np.ndarray
    F_s: np.ndarray

    @property
    def N(self) -> int:
        return self.dr.shape[0] - 1

    def copy(self) -> "GroupIncrement":
        return GroupIncrement(self.dx.copy(), self.F.copy(), float(self.ds),
                              self.dr.copy(), self.F_s.copy())

    @classmethod
    def identity(cls, N: int) -> "GroupIncrement":
        return cls(np.zeros(3), np.eye(3), 0.0, np.zeros((N + 1, 3)), np.eye(3))


@dataclass
class VelocityState:
    """Velocities paired with a GroupConfig; angular rates in body frames."""

    xdot: np.ndarray
    Omega: np.ndarray
    sdot: float
    rdot: np.ndarray
    Omega_s: np.ndarray

    @property
    def N(self) -> int:
        return self.rdot.shape[0] - 1

    def copy(self) -> "VelocityState":
        return VelocityState(self.xdot.copy(), self.Omega.copy(), float(self.sdot),
                             self.rdot.copy(), self.Omega_s.copy())


def group_compose(g: GroupConfig, f: GroupIncrement, ortho_tol: float = 1e-10) -> GroupConfig:
    """Right action g f, componentwise."""
    if g.r.shape != f.dr.shape:
        raise DimensionMismatch(f"node arrays differ: {g.r.shape} vs {f.dr.shape}")
    R = g.R @ f.F
    R_s = g.R_s @ f.F_s
    if ortho_error(R) > ortho_tol or ortho_error(R_s) > ortho_tol:
        raise StateInvalid("rotation factor left SO(3)")
    return GroupConfig(g.x + f.dx, R, g.s_p + f.ds, g.r + f.dr, R_s)


def increment_compose(f1: GroupIncrement, f2: GroupIncrement) -> GroupIncrement:
    """Group product of two increments (same componentwise rule)."""
    if f1.dr.shape != f2.dr.shape:
        raise DimensionMismatch(f"node arrays differ: {f1.dr.shape} vs {f2.dr.shape}")
    return GroupIncrement(f1.dx + f2.dx, f1.F @ f2.F, f1.ds + f2.ds, f1.dr + f2.dr,
                          f1.F_s @ f2.F_s)


def increment_inverse(f: GroupIncrement) -> GroupIncrement:
    return GroupIncrement(-f.dx, f.F.T.copy(), -f.ds, -f.dr, f.F_s.T.copy())


def relative_increment(g0: GroupConfig, g1: GroupConfig) -> GroupIncrement:
    """The increment f with g0 f = g1."""
    if g0.r.shape != g1.r.shape:
        raise DimensionMismatch("configurations built for different N")
    return GroupIncrement(g1.x - g0.x, g0.R.T @ g1.R, g1.s_p - g0.s_p, g1.r - g0.r,
                          g0.R_s.T @ g1.R_s)


# ---------------------------------------------------------------------------
# Lie-algebra coordinates


def algebra_size(N: int) -> int:
    """Length of an algebra vector (dx, phi, ds, dr_0..dr_N, phi_s)."""
    return 3 * N + 13


class AlgebraLayout:
    """Slices into an algebra vector of length 3N+13.

    Order: x (3), phi (3), s_p (1), r_0 .. r_N (3 each), phi_s (3).
    """

    def __init__(self, N: int):
        self.N = N
        self.size = algebra_size(N)
        self.x = slice(0, 3)
        self.phi = slice(3, 6)
        self.s = 6
        self.r = slice(7, 7 + 3 * (N + 1))
        self.phi_s = slice(self.size - 3, self.size)

    def node(self, a: int) -> slice:
        return slice(7 + 3 * a, 10 + 3 * a)

    def check(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if v.shape != (self.size,):
            raise DimensionMismatch(f"algebra vector must have length {self.size}, got {v.shape}")
        return v


def reduced_to_full(vr, N: int) -> np.ndarray:
    """Insert a zero node-0 block into a reduced (3N+10) vector."""
    vr = np.asarray(vr, dtype=float)
    if vr.shape != (3 * N + 10,):
        raise DimensionMismatch(f"reduced vector must have length {3 * N + 10}")
    return np.concatenate([vr[:7], np.zeros(3), vr[7:]])


def full_to_reduced(v, N: int) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape != (algebra_size(N),):
        raise DimensionMismatch(f"algebra vector must have length {algebra_size(N)}")
    return np.concatenate([v[:7], v[10:]])
