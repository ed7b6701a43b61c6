"""Per-step observables and drift statistics.

For stepper output the velocities are recovered from the discrete momentum
at g_k (see ``lgvi.discrete_momentum``) through the continuous mass matrix,
v = M(g)^-1 p. This reproduces the continuous velocities to O(h^2), so the
reported energy carries no first-order offset.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InsufficientData, SingularMassMatrix
from .liegroup import GroupConfig, GroupIncrement, VelocityState, ortho_error
from .model import (PhysParams, discrete_potential, element_length, kinetic_parts, mass_matrix,
                    reduced_to_velocity, velocity_to_reduced)

CSV_COLUMNS = ["t", "E_total", "dE", "T_base_sub", "T_tether", "V_gravity", "V_elastic",
               "Wx", "Wy", "Wz", "Wsx", "Wsy", "Wsz", "s_p", "len_unstretched",
               "len_stretched", "ortho_err", "Lx", "Ly", "Lz", "carnot_balance"]


@dataclass
class DiagRecord:
    t: float
    T_base_sub: float
    T_tether: float
    V_gravity: float
    V_elastic: float
    E_total: float
    dE: float
    Omega: np.ndarray
    Omega_s: np.ndarray
    s_p: float
    len_unstretched: float
    len_stretched: float
    strain: np.ndarray
    ortho_err: float
    ang_mom: np.ndarray
    carnot_balance: float = 0.0

    def row(self) -> list:
        """Values in CSV column order."""
        return [self.t, self.E_total, self.dE, self.T_base_sub, self.T_tether, self.V_gravity,
                self.V_elastic, *self.Omega, *self.Omega_s, self.s_p, self.len_unstretched,
                self.len_stretched, self.ortho_err, *self.ang_mom, self.carnot_balance]


@dataclass
class DriftStats:
    max_rel_dE: float
    trend: float
    max_ortho_err: float


def angular_momentum(g: GroupConfig, p_red: np.ndarray) -> np.ndarray:
    """Momentum map of rotations about the origin for a reduced,
    body-trivialized momentum vector."""
    N = g.N
    out = np.cross(g.x, p_red[0:3]) + g.R @ p_red[3:6] + g.R_s @ p_red[-3:]
    pr = p_red[7:7 + 3 * N].reshape(N, 3)
    return out + np.cross(g.r[1:], pr).sum(axis=0)


def linear_momentum(p_red: np.ndarray, N: int) -> np.ndarray:
    return p_red[0:3] + p_red[7:7 + 3 * N].reshape(N, 3).sum(axis=0)


def velocity_from_momentum(g: GroupConfig, p_red: np.ndarray, params: PhysParams,
                           locked: bool = False) -> VelocityState:
    """v = M^-1 p. With ``locked`` the drum rate is known to be zero, so the
    s_p row and column are dropped and the s_p momentum entry is ignored."""
    M = mass_matrix(g, params)
    q = np.zeros_like(p_red)
    keep = np.r_[0:6, 7:len(p_red)] if locked else np.arange(len(p_red))
    try:
        q[keep] = np.linalg.solve(M[np.ix_(keep, keep)], p_red[keep])
    except np.linalg.LinAlgError as exc:
        raise SingularMassMatrix(str(exc)) from exc
    return reduced_to_velocity(q, g, params)


def momentum_of(g: GroupConfig, v_or_f, params: PhysParams, u: float = 0.0) -> np.ndarray:
    """Reduced momentum from a VelocityState or a forward increment."""
    if isinstance(v_or_f, VelocityState):
        return mass_matrix(g, params) @ velocity_to_reduced(v_or_f)
    if isinstance(v_or_f, GroupIncrement):
        from .lgvi import discrete_momentum
        return discrete_momentum(g, v_or_f, u, params)
    raise TypeError("expected VelocityState or GroupIncrement")


def carnot_balance(E_prev: float, E_next: float, q_force: float, u: float, d: float, ds: float) -> float:
    """E_{k+1} - E_k - (Q + u/d) ds: the energy not accounted for by drum
    work and guideway loss over one step."""
    return E_next - E_prev - (q_force + u / d) * ds


def observe(g: GroupConfig, v_or_f, params: PhysParams, t: float, *, u: float = 0.0,
            E0: float | None = None, balance: float = 0.0) -> DiagRecord:
    """Diagnostics at one instant. ``v_or_f`` is either the velocities or the
    stepper's forward increment from g."""
    p_red = momentum_of(g, v_or_f, params, u)
    if isinstance(v_or_f, VelocityState):
        v = v_or_f
    else:
        # an exactly zero reeling increment means the drum is locked
        v = velocity_from_momentum(g, p_red, params, locked=v_or_f.ds == 0.0)
    T_base, T_tether, T_sub = kinetic_parts(g, v, params)
    Vg, Ve, _ = discrete_potential(g, params)
    E = T_base + T_sub + T_tether + Vg + Ve
    l = element_length(g.s_p, params)
    d = np.linalg.norm(g.r[1:] - g.r[:-1], axis=1)
    return DiagRecord(
        t=float(t), T_base_sub=T_base + T_sub, T_tether=T_tether, V_gravity=Vg, V_elastic=Ve,
        E_total=E, dE=0.0 if E0 is None else E - E0,
        Omega=v.Omega.copy(), Omega_s=v.Omega_s.copy(), s_p=float(g.s_p),
        len_unstretched=params.L - g.s_p, len_stretched=float(d.sum()), strain=d / l - 1.0,
        ortho_err=max(ortho_error(g.R), ortho_error(g.R_s)),
        ang_mom=angular_momentum(g, p_red), carnot_balance=float(balance))


def drift_stats(records) -> DriftStats:
    """(max |dE|/|E(0)|, least-squares slope of dE over t, max ortho_err)."""
    records = list(records)
    if len(records) < 100:
        raise InsufficientData(f"need at least 100 records, got {len(records)}")
    t = np.array([r.t for r in records])
    dE = np.array([r.dE for r in records])
    E0 = records[0].E_total - records[0].dE
    tc = t - t.mean()
    denom = float(tc @ tc)
    trend = float(tc @ (dE - dE.mean()) / denom) if denom > 0.0 else 0.0
    return DriftStats(float(np.max(np.abs(dE)) / abs(E0)), trend,
                      float(max(r.ortho_err for r in records)))
