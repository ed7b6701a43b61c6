"""Random states and small-system fixtures shared by the tests."""

import numpy as np

from tethersim.liegroup import GroupConfig, exp_so3
from tethersim.model import PhysParams


def small_params(N=4, **kw):
    """A short tether with scaled-down gravity so finite differences stay well conditioned."""
    base = dict(N=N, L=100.0, EA=5000.0, GM=3.986e8, h=0.1)
    base.update(kw)
    return PhysParams(**base)


def random_config(rng, p: PhysParams, radius=7e3, stretch=1.05, jitter=0.1) -> GroupConfig:
    N = p.N
    x = np.array([radius, 10.0, 5.0]) + rng.normal(size=3)
    R = exp_so3(rng.normal(size=3))
    Rs = exp_so3(rng.normal(size=3))
    s = 0.2 * p.L * (1.0 + 0.05 * rng.normal())
    l = (p.L - s) / N
    d = np.array([1.0, 0.1, 0.0])
    r = np.array([x + R @ p.rho - j * l * stretch * d for j in range(N + 1)])
    r += jitter * rng.normal(size=(N + 1, 3))
    r[0] = x + R @ p.rho
    return GroupConfig(x, R, s, r, Rs)


def perturb(g: GroupConfig, v, p: PhysParams) -> GroupConfig:
    """Right-translate g along a reduced algebra vector, keeping node 0 attached."""
    N = p.N
    x = g.x + v[0:3]
    R = g.R @ exp_so3(v[3:6])
    r = g.r.copy()
    r[1:] += v[7:7 + 3 * N].reshape(N, 3)
    r[0] = x + R @ p.rho
    return GroupConfig(x, R, g.s_p + v[6], r, g.R_s @ exp_so3(v[-3:]))


def random_direction(rng, p: PhysParams, scale=0.3):
    n = 3 * p.N + 10
    w = np.ones(n)
    w[6] = 10.0
    return scale * rng.normal(size=n) * w


def central_gradient(fun, n, eps):
    out = np.zeros(n)
    for i in range(n):
        e = np.zeros(n)
        e[i] = eps
        out[i] = (fun(e) - fun(-e)) / (2.0 * eps)
    return out
