"""Classical reference integrator for the locked-drum case.

The continuous equations of motion are assembled as M(g) a = rhs with the
same kinetic form as the diagnostics (node 0 eliminated through
r_0 = x + R rho), and advanced with a fourth-order Runge-Kutta-Munthe-Kaas
scheme: positions and velocities by classical RK4, attitudes by exponential
increments driven by a truncated inverse dexp.
"""

from __future__ import annotations

import numpy as np

from .errors import SingularMassMatrix
from .liegroup import GroupConfig, VelocityState, exp_so3, polar_project
from .model import PhysParams, element_length, mass_matrix, tension


def potential_gradient(g: GroupConfig, params: PhysParams) -> np.ndarray:
    """Reduced, body-trivialized gradient of the potential with the s_p slot
    omitted: (x, eta, r_1..r_N, eta_s), length 3N+9."""
    N = params.N
    GM, mu = params.GM, params.mu_bar
    l = element_length(g.s_p, params)
    grad_r = np.zeros((N + 1, 3))
    for i in range(N):
        sig = g.r[i] + g.r[i + 1]
        ge = 2.0 * GM * mu * l * sig / np.linalg.norm(sig) ** 3
        T = tension(g.r[i], g.r[i + 1], l, params.EA)
        grad_r[i] += ge - T
        grad_r[i + 1] += ge + T
    c = g.r[N] + g.R_s @ params.rho_s
    gc = GM * params.m_s * c / np.linalg.norm(c) ** 3
    grad_r[N] += gc
    mb = params.m + params.m_r + mu * g.s_p
    out = np.empty(3 * N + 9)
    out[0:3] = GM * mb * g.x / np.linalg.norm(g.x) ** 3 + grad_r[0]
    out[3:6] = np.cross(params.rho, g.R.T @ grad_r[0])
    out[6:6 + 3 * N] = grad_r[1:].ravel()
    out[-3:] = np.cross(params.rho_s, g.R_s.T @ gc)
    return out


def _drop_s(M):
    keep = np.r_[0:6, 7:M.shape[0]]
    return M[np.ix_(keep, keep)]


def continuous_rhs(g: GroupConfig, v: VelocityState, params: PhysParams) -> np.ndarray:
    """Accelerations (xddot, Omega_dot, rddot_1..N, Omega_s_dot) with the drum locked."""
    N = params.N
    l = element_length(g.s_p, params)
    M1 = params.mu_bar * l / 3.0
    M12 = params.mu_bar * l / 6.0
    ms = params.m_s
    rho, rho_s = params.rho, params.rho_s
    R, Rs, Om, Oms = g.R, g.R_s, v.Omega, v.Omega_s

    rdot = v.rdot.copy()
    rdot[0] = v.xdot + R @ np.cross(Om, rho)
    P0 = M1 * rdot[0] + M12 * rdot[1]
    p_Om = params.J @ Om + np.cross(rho, R.T @ P0)
    p_Oms = params.J_s @ Oms + ms * np.cross(rho_s, Rs.T @ rdot[N])
    acc0 = R @ np.cross(Om, np.cross(Om, rho))          # velocity part of rddot_0
    accN = Rs @ np.cross(Oms, np.cross(Oms, rho_s))

    rhs = -potential_gradient(g, params)
    rhs[0:3] -= M1 * acc0
    rhs[3:6] -= np.cross(rho, -np.cross(Om, R.T @ P0) + M1 * (R.T @ acc0))
    rhs[3:6] -= np.cross(Om, p_Om)
    rhs[3:6] += np.cross(np.cross(Om, rho), R.T @ P0)
    rhs[6:9] -= M12 * acc0
    o = 6 + 3 * (N - 1)
    rhs[o:o + 3] -= ms * accN
    rhs[-3:] -= -ms * np.cross(rho_s, np.cross(Oms, Rs.T @ rdot[N]))
    rhs[-3:] -= np.cross(Oms, p_Oms)
    rhs[-3:] += ms * np.cross(np.cross(Oms, rho_s), Rs.T @ rdot[N])

    M = _drop_s(mass_matrix(g, params))
    try:
        return np.linalg.solve(M, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularMassMatrix(str(exc)) from exc


def _dexpinv(theta, w):
    """Body-frame rate of the exponential coordinates of R_n^T R(t)."""
    tw = np.cross(theta, w)
    return w + 0.5 * tw + np.cross(theta, tw) / 12.0


def _stage(g0: GroupConfig, v0: VelocityState, dq, dv, N, params_rho) -> tuple:
    """State at g0 displaced by algebra increment dq and velocity increment dv."""
    x = g0.x + dq[0:3]
    R = g0.R @ exp_so3(dq[3:6])
    r = g0.r.copy()
    r[1:] += dq[6:6 + 3 * N].reshape(N, 3)
    Rs = g0.R_s @ exp_so3(dq[-3:])
    r[0] = x + R @ params_rho
    q = velocity_to_flat(v0) + dv
    return GroupConfig(x, R, g0.s_p, r, Rs), q


def velocity_to_flat(v: VelocityState) -> np.ndarray:
    """(xdot, Omega, rdot_1..N, Omega_s): the refsim velocity vector."""
    return np.concatenate([v.xdot, v.Omega, v.rdot[1:].ravel(), v.Omega_s])


def flat_to_velocity(q, g: GroupConfig, params: PhysParams) -> VelocityState:
    N = params.N
    rdot = np.empty((N + 1, 3))
    rdot[1:] = q[6:6 + 3 * N].reshape(N, 3)
    rdot[0] = q[0:3] + g.R @ np.cross(q[3:6], params.rho)
    return VelocityState(q[0:3].copy(), q[3:6].copy(), 0.0, rdot, q[-3:].copy())


def _derivs(g, q, dq, params):
    """(d dq/dt, dq_vel/dt) at a stage."""
    N = params.N
    v = flat_to_velocity(q, g, params)
    a = continuous_rhs(g, v, params)
    rate = q.copy()
    rate[3:6] = _dexpinv(dq[3:6], q[3:6])
    rate[-3:] = _dexpinv(dq[-3:], q[-3:])
    return rate, a


def rk4_step(g: GroupConfig, v: VelocityState, h: float, params: PhysParams):
    """One RKMK4 step of size h; rotations are re-orthonormalized once."""
    N = params.N
    n = 3 * N + 9
    z = np.zeros(n)
    k1q, k1v = _derivs(*_stage(g, v, z, z, N, params.rho), z, params)
    d2 = 0.5 * h * k1q
    k2q, k2v = _derivs(*_stage(g, v, d2, 0.5 * h * k1v, N, params.rho), d2, params)
    d3 = 0.5 * h * k2q
    k3q, k3v = _derivs(*_stage(g, v, d3, 0.5 * h * k2v, N, params.rho), d3, params)
    d4 = h * k3q
    k4q, k4v = _derivs(*_stage(g, v, d4, h * k3v, N, params.rho), d4, params)
    dq = h / 6.0 * (k1q + 2.0 * k2q + 2.0 * k3q + k4q)
    dv = h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
    g1, q1 = _stage(g, v, dq, dv, N, params.rho)
    g1.R = polar_project(g1.R)
    g1.R_s = polar_project(g1.R_s)
    return g1, flat_to_velocity(q1, g1, params)


def run(g: GroupConfig, v: VelocityState, h: float, n_steps: int, params: PhysParams, callback=None):
    """Advance n_steps; ``callback(k, g, v)`` is called after every step."""
    for k in range(n_steps):
        g, v = rk4_step(g, v, h, params)
        if callback is not None:
            callback(k + 1, g, v)
    return g, v


# ---------------------------------------------------------------------------
# Point mass on a Kepler orbit


def kepler_accel(x, GM):
    return -GM * x / np.linalg.norm(x) ** 3


def kepler_rk4_step(x, xdot, h, GM):
    k1x, k1v = xdot, kepler_accel(x, GM)
    k2x, k2v = xdot + 0.5 * h * k1v, kepler_accel(x + 0.5 * h * k1x, GM)
    k3x, k3v = xdot + 0.5 * h * k2v, kepler_accel(x + 0.5 * h * k2x, GM)
    k4x, k4v = xdot + h * k3v, kepler_accel(x + h * k3x, GM)
    return (x + h / 6.0 * (k1x + 2 * k2x + 2 * k3x + k4x),
            xdot + h / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v))


def kepler_verlet_step(x, xdot, h, GM):
    """Variational step of a point mass (trapezoidal discrete Lagrangian)."""
    vh = xdot + 0.5 * h * kepler_accel(x, GM)
    x1 = x + h * vh
    return x1, vh + 0.5 * h * kepler_accel(x1, GM)


def orbit_period(x0, v0, h, GM, t_max, stepper=kepler_rk4_step):
    """Time of the first return to the initial angular position, by linear
    interpolation of the signed angle swept through 2 pi."""
    x, v = np.asarray(x0, float), np.asarray(v0, float)
    n = np.cross(x, v)
    n = n / np.linalg.norm(n)
    e1 = x / np.linalg.norm(x)
    e2 = np.cross(n, e1)
    angle_prev, total, t = 0.0, 0.0, 0.0
    while t < t_max:
        x, v = stepper(x, v, h, GM)
        t += h
        ang = np.arctan2(x @ e2, x @ e1)
        dang = (ang - angle_prev + np.pi) % (2.0 * np.pi) - np.pi
        if total + dang >= 2.0 * np.pi:
            frac = (2.0 * np.pi - total) / dang
            return t - h + frac * h
        total += dang
        angle_prev = ang
    raise RuntimeError("orbit did not close within t_max")
