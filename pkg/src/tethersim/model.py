"""Physical parameters, energies and the discrete Lagrangian of the tethered
spacecraft: two rigid bodies joined by an N-element elastic tether that is
paid out from a drum inside the base body.

Everything here is a direct, readable evaluation of the energy formulas. The
hot derivative kernels used by the time stepper live in ``_pykernels`` /
``_ckernels`` and are cross-checked against these functions in the tests.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DimensionMismatch, FullyReeled, SingularRadius, ZeroLengthElement
from .liegroup import GroupConfig, GroupIncrement, VelocityState, hat

EARTH_GM = 3.986004418e14
EARTH_RADIUS = 6378137.0


def _diag(*v):
    return np.diag(np.asarray(v, dtype=float))


@dataclass(frozen=True)
class PhysParams:
    """Model constants in SI units.

    ``kappa2`` is the drum's effective inertia for reeling (kg); the default
    treats the drum as a solid cylinder, kappa2 = m_r / 2.
    """

    m: float = 490.0
    m_r: float = 10.0
    m_s: float = 150.0
    J: np.ndarray = field(default_factory=lambda: _diag(5675.8, 5675.8, 6125.0))
    J_s: np.ndarray = field(default_factory=lambda: _diag(500.0, 500.0, 300.0))
    d: float = 0.5
    b: float = 1.0
    rho_s: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))
    kappa2: float = 5.0
    L: float = 120e3
    mu_bar: float = 24.7e-3
    EA: float = 659700.0
    GM: float = EARTH_GM
    N: int = 20
    h: float = 0.05
    earth_radius: float = EARTH_RADIUS

    def __post_init__(self):
        object.__setattr__(self, "J", np.array(self.J, dtype=float).reshape(3, 3))
        object.__setattr__(self, "J_s", np.array(self.J_s, dtype=float).reshape(3, 3))
        object.__setattr__(self, "rho_s", np.array(self.rho_s, dtype=float).reshape(3))
        object.__setattr__(self, "N", int(self.N))
        for name in ("m", "m_r", "m_s", "d", "b", "kappa2", "L", "mu_bar", "EA", "h"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be strictly positive")
        # GM = 0 is allowed: it switches gravity off for the rest/translation checks
        if self.GM < 0.0:
            raise ValueError("GM must be non-negative")
        if self.N < 1:
            raise ValueError("N must be at least 1")
        for name in ("J", "J_s"):
            M = getattr(self, name)
            if not np.allclose(M, M.T, rtol=0.0, atol=1e-12 * np.abs(M).max()):
                raise ValueError(f"{name} must be symmetric")
            if np.linalg.eigvalsh(M).min() <= 0.0:
                raise ValueError(f"{name} must be positive definite")

    @property
    def rho(self) -> np.ndarray:
        """Base centre of mass to guideway entrance, body frame: (d, 0, b)."""
        return np.array([self.d, 0.0, self.b])

    @property
    def J_d(self) -> np.ndarray:
        return nonstandard_inertia(self.J)

    @property
    def J_sd(self) -> np.ndarray:
        return nonstandard_inertia(self.J_s)

    @property
    def total_mass(self) -> float:
        return self.m + self.m_r + self.mu_bar * self.L + self.m_s

    def replace(self, **changes) -> "PhysParams":
        kw = self.to_dict()
        kw.update(changes)
        return PhysParams(**kw)

    def to_dict(self) -> dict:
        out = asdict(self)
        for k, v in out.items():
            if isinstance(v, np.ndarray):
                out[k] = v.tolist()
        return out


@dataclass(frozen=True)
class InertiaCoeffs:
    M1: float
    M2: float
    M12: float
    M3: np.ndarray      # (N,)
    M23: np.ndarray     # (N, 3)
    M31: np.ndarray     # (N, 3)


def element_length(s_p: float, params: PhysParams) -> float:
    """Unstretched element length (L - s_p) / N."""
    if s_p >= params.L:
        raise FullyReeled(f"s_p = {s_p} leaves no deployed tether (L = {params.L})")
    return (params.L - s_p) / params.N


def nonstandard_inertia(J) -> np.ndarray:
    """J_d = tr(J)/2 I - J, so that Omega.J.Omega/2 = tr(hat(Om) J_d hat(Om)^T)/2."""
    J = np.asarray(J, dtype=float)
    return 0.5 * np.trace(J) * np.eye(3) - J


def element_weights(N: int):
    """Node-position-independent factors of M3, M23 and M31 for a = 1..N."""
    a = np.arange(1, N + 1, dtype=float)
    alpha = (3 * N * N + 3 * N + 1 - 6 * N * a - 3 * a + 3 * a * a) / (N * N)
    beta23 = (1 + 3 * N - 3 * a) / (6.0 * N)
    beta31 = (2 + 3 * N - 3 * a) / (6.0 * N)
    return alpha, beta23, beta31


def inertia_coeffs(params: PhysParams, s_p: float, r) -> InertiaCoeffs:
    r = np.asarray(r, dtype=float)
    N = params.N
    if r.shape != (N + 1, 3):
        raise DimensionMismatch(f"expected {(N + 1, 3)} node array, got {r.shape}")
    l = element_length(s_p, params)
    mu = params.mu_bar
    alpha, b23, b31 = element_weights(N)
    e = r[:-1] - r[1:]
    M1 = mu * l / 3.0
    return InertiaCoeffs(
        M1=M1,
        M2=M1,
        M12=mu * l / 6.0,
        M3=mu * l * alpha / 3.0,
        M23=mu * b23[:, None] * e,
        M31=mu * b31[:, None] * e,
    )


def tension(r_a, r_b, l_k: float, EA: float) -> np.ndarray:
    """Element tension EA (|r'| - 1)/|r'| r' with r' = (r_b - r_a)/l_k.

    Compression follows the same formula; there is no slack model.
    """
    u = np.asarray(r_b, dtype=float) - np.asarray(r_a, dtype=float)
    dist = np.linalg.norm(u)
    if dist < 1e-12 * l_k:
        raise ZeroLengthElement("element collapsed to zero length")
    return EA * (dist - l_k) / (l_k * dist) * u


def _check_dims(g: GroupConfig, f: GroupIncrement | None, params: PhysParams):
    if g.r.shape != (params.N + 1, 3):
        raise DimensionMismatch(f"configuration has {g.r.shape[0] - 1} elements, params say {params.N}")
    if f is not None and f.dr.shape != g.r.shape:
        raise DimensionMismatch("increment and configuration sizes differ")


def discrete_kinetic(g: GroupConfig, f: GroupIncrement, params: PhysParams):
    """Kinetic energy of one step as (T_base, T_elements[N], T_sub, T_total).

    The increments are taken as stored in ``f`` (including dr[0]).
    """
    _check_dims(g, f, params)
    h2 = params.h * params.h
    mu = params.mu_bar
    I3 = np.eye(3)
    m_base = params.m + params.m_r + mu * g.s_p
    T_b = (0.5 * m_base * (f.dx @ f.dx)
           + 0.5 * (mu * g.s_p + params.kappa2) * f.ds ** 2
           + np.trace((I3 - f.F) @ params.J_d)) / h2

    c = inertia_coeffs(params, g.s_p, g.r)
    d0, d1 = f.dr[:-1], f.dr[1:]
    T_a = (0.5 * c.M1 * np.einsum("ij,ij->i", d0, d0)
           + 0.5 * c.M2 * np.einsum("ij,ij->i", d1, d1)
           + 0.5 * c.M3 * f.ds ** 2
           + c.M12 * np.einsum("ij,ij->i", d0, d1)
           + f.ds * np.einsum("ij,ij->i", c.M23, d1)
           + f.ds * np.einsum("ij,ij->i", c.M31, d0)) / h2

    drN = f.dr[-1]
    T_s = (0.5 * params.m_s * (drN @ drN)
           + np.trace((I3 - f.F_s) @ params.J_sd)
           + params.m_s * drN @ (g.R_s @ ((f.F_s - I3) @ params.rho_s))) / h2
    return T_b, T_a, T_s, T_b + T_a.sum() + T_s


def discrete_potential(g: GroupConfig, params: PhysParams):
    """(V_gravity, V_elastic, V_total) with midpoint gravity on each element."""
    _check_dims(g, None, params)
    GM, mu = params.GM, params.mu_bar
    l = element_length(g.s_p, params)
    nx = np.linalg.norm(g.x)
    sig = np.linalg.norm(g.r[:-1] + g.r[1:], axis=1)
    c = g.r[-1] + g.R_s @ params.rho_s
    nc = np.linalg.norm(c)
    if nx < 1.0 or sig.min() < 1.0 or nc < 1.0:
        raise SingularRadius("a gravitating point is within 1 m of the origin")
    dist = np.linalg.norm(g.r[1:] - g.r[:-1], axis=1)
    V_grav = (-GM * (params.m + params.m_r + mu * g.s_p) / nx
              - np.sum(2.0 * GM * mu * l / sig)
              - GM * params.m_s / nc)
    V_el = float(np.sum(0.5 * params.EA / l * (dist - l) ** 2))
    return V_grav, V_el, V_grav + V_el


def discrete_lagrangian(g: GroupConfig, f: GroupIncrement, params: PhysParams) -> float:
    """Trapezoidal discrete Lagrangian h T(g, f) - h/2 V(g) - h/2 V(g f)."""
    h = params.h
    T = discrete_kinetic(g, f, params)[3]
    g1 = GroupConfig(g.x + f.dx, g.R @ f.F, g.s_p + f.ds, g.r + f.dr, g.R_s @ f.F_s)
    return h * T - 0.5 * h * discrete_potential(g, params)[2] - 0.5 * h * discrete_potential(g1, params)[2]


def attachment_point(g: GroupConfig, params: PhysParams) -> np.ndarray:
    """Guideway exit x + R rho, where tether node 0 must sit."""
    return g.x + g.R @ params.rho


def enforce_attachment(g: GroupConfig, params: PhysParams) -> GroupConfig:
    g.r[0] = attachment_point(g, params)
    return g


def attachment_increment(g: GroupConfig, dx, F, params: PhysParams) -> np.ndarray:
    """dr[0] implied by the attachment constraint: dx + R (F - I) rho."""
    return dx + g.R @ ((F - np.eye(3)) @ params.rho)


# ---------------------------------------------------------------------------
# Continuous kinetic form on the FEM-discretized state


def kinetic_parts(g: GroupConfig, v: VelocityState, params: PhysParams):
    """(T_base, T_tether, T_sub) with velocities in place of difference quotients.

    T_base includes the drum and the stored tether; node 0's velocity is the
    constrained one, xdot + R hat(Omega) rho.
    """
    _check_dims(g, None, params)
    mu = params.mu_bar
    m_base = params.m + params.m_r + mu * g.s_p
    T_base = (0.5 * m_base * (v.xdot @ v.xdot)
              + 0.5 * (mu * g.s_p + params.kappa2) * v.sdot ** 2
              + 0.5 * v.Omega @ params.J @ v.Omega)
    rdot = v.rdot.copy()
    rdot[0] = v.xdot + g.R @ np.cross(v.Omega, params.rho)
    c = inertia_coeffs(params, g.s_p, g.r)
    d0, d1 = rdot[:-1], rdot[1:]
    T_tether = float(np.sum(
        0.5 * c.M1 * np.einsum("ij,ij->i", d0, d0)
        + 0.5 * c.M2 * np.einsum("ij,ij->i", d1, d1)
        + 0.5 * c.M3 * v.sdot ** 2
        + c.M12 * np.einsum("ij,ij->i", d0, d1)
        + v.sdot * np.einsum("ij,ij->i", c.M23, d1)
        + v.sdot * np.einsum("ij,ij->i", c.M31, d0)))
    rN = rdot[-1]
    # J_s is taken about the tether end, so the first mass moment there is m_s rho_s
    T_sub = (0.5 * params.m_s * (rN @ rN)
             + params.m_s * rN @ (g.R_s @ np.cross(v.Omega_s, params.rho_s))
             + 0.5 * v.Omega_s @ params.J_s @ v.Omega_s)
    return T_base, T_tether, T_sub


def continuous_energy(g: GroupConfig, v: VelocityState, params: PhysParams):
    """(T, V, E) of the FEM-discretized continuous model."""
    T = sum(kinetic_parts(g, v, params))
    V = discrete_potential(g, params)[2]
    return T, V, T + V


def reduced_size(N: int) -> int:
    """Length of the reduced vectors (node 0 eliminated): 3N + 10."""
    return 3 * N + 10


def velocity_to_reduced(v: VelocityState) -> np.ndarray:
    """Pack (xdot, Omega, sdot, rdot[1..N], Omega_s)."""
    return np.concatenate([v.xdot, v.Omega, [v.sdot], v.rdot[1:].ravel(), v.Omega_s])


def reduced_to_velocity(q, g: GroupConfig, params: PhysParams) -> VelocityState:
    q = np.asarray(q, dtype=float)
    N = params.N
    xdot, Om, Oms = q[0:3].copy(), q[3:6].copy(), q[-3:].copy()
    rdot = np.empty((N + 1, 3))
    rdot[1:] = q[7:7 + 3 * N].reshape(N, 3)
    rdot[0] = xdot + g.R @ np.cross(Om, params.rho)
    return VelocityState(xdot, Om, float(q[6]), rdot, Oms)


def mass_matrix(g: GroupConfig, params: PhysParams) -> np.ndarray:
    """Mass matrix of the continuous kinetic form in reduced velocities.

    Built on the full coordinates (node 0 independent) and then reduced
    through rdot_0 = xdot - R hat(rho) Omega.
    """
    N = params.N
    mu = params.mu_bar
    nf = 3 * N + 13
    M = np.zeros((nf, nf))
    I3 = np.eye(3)
    c = inertia_coeffs(params, g.s_p, g.r)
    m_base = params.m + params.m_r + mu * g.s_p
    M[0:3, 0:3] = m_base * I3
    M[3:6, 3:6] = params.J
    M[6, 6] = mu * g.s_p + params.kappa2 + c.M3.sum()
    o = 7
    for j in range(N + 1):
        nj = 1.0 if j in (0, N) else 2.0
        blk = slice(o + 3 * j, o + 3 * j + 3)
        M[blk, blk] += nj * c.M1 * I3
        if j < N:
            nxt = slice(o + 3 * j + 3, o + 3 * j + 6)
            M[blk, nxt] += c.M12 * I3
            M[nxt, blk] += c.M12 * I3
        cj = np.zeros(3)
        if j >= 1:
            cj += c.M23[j - 1]
        if j <= N - 1:
            cj += c.M31[j]
        M[6, blk] += cj
        M[blk, 6] += cj
    last = slice(o + 3 * N, o + 3 * N + 3)
    M[last, last] += params.m_s * I3
    cross = -params.m_s * g.R_s @ hat(params.rho_s)
    M[last, nf - 3:] += cross
    M[nf - 3:, last] += cross.T
    M[nf - 3:, nf - 3:] = params.J_s

    nr = 3 * N + 10
    T = np.zeros((nf, nr))
    T[0:7, 0:7] = np.eye(7)
    T[7:10, 0:3] = I3
    T[7:10, 3:6] = -g.R @ hat(params.rho)
    T[10:, 7:] = np.eye(nr - 7)
    return T.T @ M @ T
