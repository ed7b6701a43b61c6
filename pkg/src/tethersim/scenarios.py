"""Scenario presets and initial-state construction."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigInvalid
from .liegroup import GroupConfig, VelocityState
from .model import PhysParams, element_length

ALTITUDE = 300e3
S_P0 = 100e3


@dataclass
class Perturbation:
    """Velocity perturbation: in-plane speeds of base and sub-spacecraft are
    scaled by ``scale``; the sub-spacecraft also gets an out-of-plane
    component of ``out_of_plane`` times its circular speed."""

    scale: float = 1.15
    out_of_plane: float = 0.15


@dataclass
class Scenario:
    name: str = "case1"
    h: float = 0.05
    t_f: float = 6000.0
    N: int = 20
    drum: str = "fixed"              # fixed | free
    u: float = 0.0
    perturbation: Perturbation | None = None
    altitude: float = ALTITUDE
    s_p0: float = S_P0
    sub_below: bool = True           # sub-spacecraft toward Earth
    stop_when_deployed: bool = False
    point_mass: bool = False

    def __post_init__(self):
        if isinstance(self.perturbation, dict):
            self.perturbation = Perturbation(**self.perturbation)
        if self.drum not in ("fixed", "free"):
            raise ConfigInvalid(f"drum must be 'fixed' or 'free', got {self.drum!r}")
        if not (self.h > 0.0 and self.t_f > 0.0):
            raise ConfigInvalid("h and t_f must be positive")
        if int(self.N) != self.N or self.N < 1:
            raise ConfigInvalid("N must be a positive integer")
        self.N = int(self.N)

    @property
    def n_steps(self) -> int:
        return int(round(self.t_f / self.h))

    def to_dict(self) -> dict:
        return asdict(self)


PRESETS = {
    "case1": Scenario("case1", h=0.05, t_f=6000.0, N=20, drum="fixed"),
    "case2": Scenario("case2", h=0.05, t_f=3848.0, N=20, drum="free"),
    "case3": Scenario("case3", h=0.01, t_f=500.0, N=20, drum="fixed", perturbation=Perturbation()),
    "custom": Scenario("custom", h=0.05, t_f=600.0, N=20, drum="fixed"),
    "point-mass": Scenario("point-mass", h=1.0, t_f=6000.0, N=20, drum="fixed", point_mass=True),
}


def preset(name: str) -> Scenario:
    try:
        base = PRESETS[name]
    except KeyError:
        raise ConfigInvalid(f"unknown scenario {name!r}; choose from {sorted(PRESETS)}") from None
    return Scenario(**base.to_dict())


def build_initial_state(scenario: Scenario, params: PhysParams):
    """Radial tether on a circular orbit; every node moves at the circular speed of its radius.

    Node 0 sits at the guideway exit x + rho (R = I); its velocity is the
    base's, as the attachment requires.
    """
    if scenario.N != params.N:
        raise ConfigInvalid(f"scenario N={scenario.N} but params N={params.N}")
    if not (params.b <= scenario.s_p0 < params.L):
        raise ConfigInvalid(f"s_p0 = {scenario.s_p0} outside [b, L)")
    N = params.N
    GM = params.GM
    R0 = params.earth_radius + scenario.altitude
    e1 = np.array([1.0, 0.0, 0.0])
    e2 = np.array([0.0, 1.0, 0.0])
    e3 = np.array([0.0, 0.0, 1.0])
    x = R0 * e1
    l = element_length(scenario.s_p0, params)
    sign = -1.0 if scenario.sub_below else 1.0
    r = np.empty((N + 1, 3))
    r[0] = x + params.rho
    for j in range(1, N + 1):
        r[j] = r[0] + sign * j * l * e1
    g = GroupConfig(x, np.eye(3), float(scenario.s_p0), r, np.eye(3))

    def vcirc(p):
        return np.sqrt(GM / np.linalg.norm(p)) if GM > 0.0 else 0.0

    xdot = vcirc(x) * e2
    rdot = np.empty((N + 1, 3))
    rdot[0] = xdot
    for j in range(1, N + 1):
        rdot[j] = vcirc(r[j]) * e2
    pert = scenario.perturbation
    if pert is not None:
        xdot = pert.scale * xdot
        rdot[0] = xdot
        vs = vcirc(r[N])
        rdot[N] = pert.scale * rdot[N] + pert.out_of_plane * vs * e3
    v = VelocityState(xdot, np.zeros(3), 0.0, rdot, np.zeros(3))
    return g, v


def params_for(scenario: Scenario, base: PhysParams | None = None, **overrides) -> PhysParams:
    """PhysParams with the scenario's h and N applied."""
    base = base or PhysParams()
    kw = {"h": scenario.h, "N": scenario.N}
    kw.update(overrides)
    return base.replace(**kw)
