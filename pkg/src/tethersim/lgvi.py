"""Implicit Lie group variational stepper.

One step solves the forced discrete Euler-Lagrange equations for the
increment f_k given g_k and f_{k-1}, then sets g_{k+1} = g_k f_k. The residual
of step k is

    B(g_{k-1}, f_{k-1}) / h - h grad V(g_k) + phi(g_k, f_k) / h + forcing

where B and phi are the kinetic derivatives from the kernels (in units of
h^2 T). The potential only enters through g_k, so the Newton Jacobian is the
kinetic one: analytic, block-banded, and independent of the elastic
stiffness.

Node 0 is tied to the base by r_0 = x + R rho and is eliminated from the
unknowns; the public residual is returned in the full algebra layout with a
zero node-0 block.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import DimensionMismatch, NoConvergence, StateInvalid
from .liegroup import (GroupConfig, GroupIncrement, VelocityState, exp_so3, increment_inverse, log_so3,
                       reduced_to_full)
from .model import PhysParams, attachment_increment, element_length, mass_matrix, velocity_to_reduced

DEFAULT_TOL = 1e-13
DEFAULT_MAX_ITER = 25
_MAX_HALVINGS = 8


@dataclass
class StepProblem:
    """Inputs of one step: current configuration, previous increment, drum moment."""

    g_k: GroupConfig
    f_prev: GroupIncrement | None
    u_k: float
    params: PhysParams

    def __post_init__(self):
        N = self.params.N
        if self.g_k.r.shape != (N + 1, 3):
            raise DimensionMismatch("configuration size does not match params.N")
        if self.f_prev is not None and self.f_prev.dr.shape != (N + 1, 3):
            raise DimensionMismatch("previous increment size does not match params.N")


@dataclass
class NewtonReport:
    iterations: int
    residual: float
    converged: bool
    residual_vector: np.ndarray | None = field(default=None, repr=False)


# ---------------------------------------------------------------------------
# Building blocks


def _cfg_args(g: GroupConfig):
    return g.x, g.R, g.s_p, g.r, g.R_s


def _inc_args(f: GroupIncrement):
    return f.dx, f.F, f.ds, f.dr, f.F_s


def previous_config(g_k: GroupConfig, f_prev: GroupIncrement) -> GroupConfig:
    """g_{k-1} = g_k f_{k-1}^{-1}."""
    fi = increment_inverse(f_prev)
    return GroupConfig(g_k.x + fi.dx, g_k.R @ fi.F, g_k.s_p + fi.ds, g_k.r + fi.dr, g_k.R_s @ fi.F_s)


def carnot_forcing(g_k: GroupConfig, f_k: GroupIncrement, params: PhysParams) -> float:
    """Guideway energy-loss force on the s_p slot, already multiplied by h.

    Depends on the first element's strain at g_k and the reeling rate ds/h.
    """
    h = params.h
    l = element_length(g_k.s_p, params)
    strain = np.linalg.norm(g_k.r[1] - g_k.r[0]) - l
    return -(h / (2.0 * l * l)) * (params.mu_bar * f_k.ds ** 2 / h ** 2 + params.EA) * strain ** 2


def _carnot_dds(g_k: GroupConfig, ds: float, params: PhysParams) -> float:
    h = params.h
    l = element_length(g_k.s_p, params)
    strain = np.linalg.norm(g_k.r[1] - g_k.r[0]) - l
    return -(h / (2.0 * l * l)) * (2.0 * params.mu_bar * ds / h ** 2) * strain ** 2


def forcing_vector(g_k: GroupConfig, f_k: GroupIncrement, u_k: float, params: PhysParams) -> np.ndarray:
    """Reduced forcing of one step: drum moment plus guideway loss."""
    out = np.zeros(3 * params.N + 10)
    h = params.h
    out[6] = h * u_k / params.d + carnot_forcing(g_k, f_k, params)
    out[4] = -h * u_k
    return out


def residual_scales(params: PhysParams) -> np.ndarray:
    """Per-slot multipliers that make the residual dimensionless."""
    n = 3 * params.N + 10
    sc = np.full(n, params.h / (params.total_mass * params.L))
    rot = params.h / np.trace(params.J)
    sc[3:6] = rot
    sc[-3:] = rot
    return sc


def scaled_norm(res_reduced: np.ndarray, params: PhysParams, free_s: bool = True) -> float:
    v = np.abs(res_reduced * residual_scales(params))
    if not free_s:
        v[6] = 0.0
    return float(v.max())


def _with_attachment(g_k: GroupConfig, f: GroupIncrement, params: PhysParams) -> GroupIncrement:
    f.dr[0] = attachment_increment(g_k, f.dx, f.F, params)
    return f


def _fresh(F):
    # re-exponentiate so F is always exp(phi) and round-off cannot accumulate
    return exp_so3(log_so3(F))


def _apply_update(f: GroupIncrement, delta: np.ndarray, g_k: GroupConfig, params: PhysParams,
                  free_s: bool) -> GroupIncrement:
    N = params.N
    dr = f.dr.copy()
    dr[1:] += delta[7:7 + 3 * N].reshape(N, 3)
    out = GroupIncrement(f.dx + delta[0:3], _fresh(f.F @ exp_so3(delta[3:6])),
                         f.ds + (delta[6] if free_s else 0.0), dr, _fresh(f.F_s @ exp_so3(delta[-3:])))
    return _with_attachment(g_k, out, params)


def _collapsed(g_k: GroupConfig, f: GroupIncrement, params: PhysParams) -> bool:
    r = g_k.r + f.dr
    l = (params.L - g_k.s_p - f.ds) / params.N
    d = np.linalg.norm(r[1:] - r[:-1], axis=1)
    return bool(d.min() < 1e-9 * l) or not np.all(np.isfinite(d))


def _known_term(problem: StepProblem, kp, gradV, forcing: str) -> np.ndarray:
    """Everything in the step-k residual that does not depend on f_k."""
    g, p = problem.g_k, problem.params
    out = -p.h * gradV
    if problem.f_prev is not None:
        gp = previous_config(g, problem.f_prev)
        _, B = kernels.kinetic(*_cfg_args(gp), *_inc_args(problem.f_prev), kp)
        out = out + B / p.h
        if forcing == "split":
            out = out + 0.5 * forcing_vector(gp, problem.f_prev, problem.u_k, p)
    return out


def _newton(g: GroupConfig, guess: GroupIncrement, known: np.ndarray, force_weight: float,
            u_k: float, params: PhysParams, kp, free_s: bool, tol: float, max_iter: int,
            polish: bool = True):
    """Solve known + phi(f)/h + w * forcing(f) = 0 for f.

    Once the scaled residual is below ``tol`` one more Newton correction is
    taken (quadratic convergence puts it at round-off) and the better of the
    two iterates is returned.
    """
    h = params.h
    f = guess.copy()
    if not free_s:
        f.ds = 0.0
    f = _with_attachment(g, f, params)
    res = None
    nrm = np.inf
    best = None
    for it in range(max_iter + 1):
        phi, _, band, col, row, corner = kernels.kinetic_jacobian(*_cfg_args(g), *_inc_args(f), kp)
        res = known + phi / h + force_weight * forcing_vector(g, f, u_k, params)
        nrm = scaled_norm(res, params, free_s)
        if best is not None:
            # polishing iterate: keep whichever of the last two is smaller
            if nrm <= best[1].residual:
                return f, NewtonReport(it, nrm, True, res)
            return best
        if nrm <= tol:
            if not polish:
                return f, NewtonReport(it, nrm, True, res)
            best = (f, NewtonReport(it, nrm, True, res))
        elif it == max_iter:
            break
        # Jacobian of h * res; forcing depends on f only through ds
        corner = corner + h * force_weight * _carnot_dds(g, f.ds, params)
        delta = kernels.solve_bordered(band, col, row, corner, -h * res, free_s)
        cand = _apply_update(f, delta, g, params, free_s)
        halvings = 0
        while _collapsed(g, cand, params):
            halvings += 1
            if halvings > _MAX_HALVINGS:
                raise NoConvergence("element collapsed during Newton iteration",
                                    NewtonReport(it, nrm, False, res))
            delta = 0.5 * delta
            cand = _apply_update(f, delta, g, params, free_s)
        f = cand
    report = NewtonReport(max_iter, nrm, False, res)
    raise NoConvergence(f"Newton did not converge in {max_iter} iterations "
                        f"(scaled residual {nrm:.3e})", report)


# ---------------------------------------------------------------------------
# Public operations


def del_residual(g_k: GroupConfig, f_prev: GroupIncrement | None, f_k: GroupIncrement, u_k: float,
                 params: PhysParams, forcing: str = "rectangle") -> np.ndarray:
    """Forced discrete Euler-Lagrange residual of step k, full algebra layout.

    The node-0 entries are zero: node 0 is slaved to the base and its
    generalized force is folded into the x and attitude slots. ``f_k.dr[0]``
    is ignored and recomputed from the attachment constraint.
    """
    problem = StepProblem(g_k, f_prev, u_k, params)
    if f_k.dr.shape != g_k.r.shape:
        raise DimensionMismatch("increment size does not match configuration")
    kp = kernels.pack_params(params)
    gradV = kernels.potential(*_cfg_args(g_k), kp)[2]
    known = _known_term(problem, kp, gradV, forcing)
    f = _with_attachment(g_k, f_k.copy(), params)
    phi, _ = kernels.kinetic(*_cfg_args(g_k), *_inc_args(f), kp)
    w = 0.5 if forcing == "split" else 1.0
    res = known + phi / params.h + w * forcing_vector(g_k, f, u_k, params)
    return reduced_to_full(res, params.N)


def step(problem: StepProblem, guess: GroupIncrement, *, tol: float = DEFAULT_TOL,
         max_iter: int = DEFAULT_MAX_ITER, free_s: bool = False, forcing: str = "rectangle"):
    """Solve for f_k. Returns (f_k, NewtonReport).

    With ``free_s`` false the drum is locked: ds is held at 0 and the s_p row
    is dropped.
    """
    p = problem.params
    kp = kernels.pack_params(p)
    gradV = kernels.potential(*_cfg_args(problem.g_k), kp)[2]
    known = _known_term(problem, kp, gradV, forcing)
    w = 0.5 if forcing == "split" else 1.0
    f, report = _newton(problem.g_k, guess, known, w, problem.u_k, p, kp, free_s, tol, max_iter)
    s_new = problem.g_k.s_p + f.ds
    if not (p.b <= s_new <= p.L):
        raise StateInvalid(f"s_p = {s_new} left [{p.b}, {p.L}]")
    return f, report


def velocity_increment(v0: VelocityState, h: float) -> GroupIncrement:
    """Increment from velocities by the exponential map."""
    return GroupIncrement(h * v0.xdot, exp_so3(h * v0.Omega), h * v0.sdot, h * v0.rdot,
                          exp_so3(h * v0.Omega_s))


def continuous_momentum(g: GroupConfig, v: VelocityState, params: PhysParams) -> np.ndarray:
    """Reduced momentum M(g) v of the continuous kinetic form."""
    return mass_matrix(g, params) @ velocity_to_reduced(v)


def initialize(g0: GroupConfig, v0: VelocityState, params: PhysParams, mode: str = "velocity",
               u0: float = 0.0, *, free_s: bool = False, tol: float = DEFAULT_TOL,
               max_iter: int = DEFAULT_MAX_ITER, forcing: str = "rectangle") -> GroupIncrement:
    """First increment f_0.

    ``velocity``: exponential map of h v0. ``legendre``: match the discrete
    momentum at g0 (average of the two one-sided forms) to the continuous
    momentum M(g0) v0.
    """
    f = velocity_increment(v0, params.h)
    if not free_s:
        f.ds = 0.0
    f = _with_attachment(g0, f, params)
    if mode == "velocity":
        return f
    if mode != "legendre":
        raise ValueError(f"unknown initialization mode {mode!r}")
    kp = kernels.pack_params(params)
    gradV = kernels.potential(*_cfg_args(g0), kp)[2]
    known = continuous_momentum(g0, v0, params) - 0.5 * params.h * gradV
    f, _ = _newton(g0, f, known, 0.5, u0, params, kp, free_s, tol, max_iter)
    return f


def discrete_momentum(g_k: GroupConfig, f_k: GroupIncrement, u_k: float, params: PhysParams,
                      kp=None) -> np.ndarray:
    """Reduced momentum at g_k from the forward increment,
    -phi/h + (h/2) grad V - forcing/2; equals M(g) v to O(h^2)."""
    if kp is None:
        kp = kernels.pack_params(params)
    f = _with_attachment(g_k, f_k.copy(), params)
    gradV = kernels.potential(*_cfg_args(g_k), kp)[2]
    phi, _ = kernels.kinetic(*_cfg_args(g_k), *_inc_args(f), kp)
    return -phi / params.h + 0.5 * params.h * gradV - 0.5 * forcing_vector(g_k, f, u_k, params)


def compose(g: GroupConfig, f: GroupIncrement, params: PhysParams) -> GroupConfig:
    """g f with node 0 put back on the attachment point."""
    g1 = GroupConfig(g.x + f.dx, g.R @ f.F, g.s_p + f.ds, g.r + f.dr, g.R_s @ f.F_s)
    g1.r[0] = g1.x + g1.R @ params.rho
    return g1


class Stepper:
    """Advances one trajectory. ``u`` is a constant or a function of time."""

    def __init__(self, params: PhysParams, g0: GroupConfig, v0: VelocityState, *, u=0.0,
                 free_s: bool = False, init: str = "velocity", tol: float = DEFAULT_TOL,
                 max_iter: int = DEFAULT_MAX_ITER, forcing: str = "rectangle"):
        self.params = params
        self.free_s = free_s
        self.tol = tol
        self.max_iter = max_iter
        self.forcing = forcing
        self._u = u if callable(u) else (lambda t, _u=float(u): _u)
        self.k = 0
        self.g = g0.copy()
        self.g.r[0] = self.g.x + self.g.R @ params.rho
        self.f_prev = None
        self.f = initialize(self.g, v0, params, init, self.u(0.0), free_s=free_s, tol=tol,
                            max_iter=max_iter, forcing=forcing)
        self.reports: list[NewtonReport] = []

    @property
    def t(self) -> float:
        return self.k * self.params.h

    def u(self, t: float) -> float:
        return float(self._u(t))

    def advance(self) -> NewtonReport:
        """Move to g_{k+1} = g_k f_k and solve for the next increment."""
        p = self.params
        g_next = compose(self.g, self.f, p)
        if not (p.b <= g_next.s_p <= p.L):
            raise StateInvalid(f"s_p = {g_next.s_p} left [{p.b}, {p.L}]")
        self.g, self.f_prev, self.k = g_next, self.f, self.k + 1
        problem = StepProblem(self.g, self.f_prev, self.u(self.t), p)
        self.f, report = step(problem, self.f_prev, tol=self.tol, max_iter=self.max_iter,
                              free_s=self.free_s, forcing=self.forcing)
        self.reports.append(report)
        return report
