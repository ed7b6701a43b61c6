import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import random_config, small_params
from tethersim import lgvi
from tethersim.diagnostics import (CSV_COLUMNS, DiagRecord, angular_momentum, carnot_balance, drift_stats,
                                   linear_momentum, momentum_of, observe, velocity_from_momentum)
from tethersim.errors import InsufficientData
from tethersim.liegroup import VelocityState
from tethersim.model import PhysParams, element_length
from tethersim.scenarios import build_initial_state, params_for, preset


def _record(t, dE, E0=-1e6, ortho=0.0):
    z = np.zeros(3)
    return DiagRecord(t, 0.0, 0.0, 0.0, 0.0, E0 + dE, dE, z, z, 0.0, 0.0, 0.0, np.zeros(1), ortho, z)


def test_row_matches_columns():
    assert len(_record(0.0, 0.0).row()) == len(CSV_COLUMNS)
    assert CSV_COLUMNS[0] == "t" and CSV_COLUMNS[-1] == "carnot_balance"


def test_rest_state_observables():
    sc = preset("case1")
    p = params_for(sc).replace(GM=0.0)
    g, v = build_initial_state(sc, p)
    rec = observe(g, v, p, 0.0, E0=None)
    assert rec.T_base_sub == 0.0 and rec.T_tether == 0.0 and rec.dE == 0.0
    assert rec.E_total == rec.V_gravity + rec.V_elastic


def test_unstretched_tether_lengths():
    sc = preset("case1")
    p = params_for(sc)
    g, v = build_initial_state(sc, p)
    rec = observe(g, v, p, 0.0)
    assert np.allclose(rec.strain, 0.0, atol=1e-12)
    assert rec.len_stretched == pytest.approx(rec.len_unstretched, rel=1e-14)
    assert rec.len_unstretched == p.L - g.s_p
    assert rec.ortho_err == 0.0


def test_initial_energy_is_sum_of_two_body_energies():
    """Closed form from the node radii and circular speeds."""
    sc = preset("case1")
    p = params_for(sc)
    g, v = build_initial_state(sc, p)
    GM, mu = p.GM, p.mu_bar
    l = element_length(g.s_p, p)
    m_base = p.m + p.m_r + mu * g.s_p
    rad = np.linalg.norm(g.r, axis=1)
    spd = np.sqrt(GM / rad)
    spd[0] = np.sqrt(GM / np.linalg.norm(g.x))
    E = 0.5 * m_base * GM / np.linalg.norm(g.x) - GM * m_base / np.linalg.norm(g.x)
    for a in range(p.N):
        E += mu * l / 6.0 * (spd[a] ** 2 + spd[a + 1] ** 2 + spd[a] * spd[a + 1])
        E -= 2.0 * GM * mu * l / (rad[a] + rad[a + 1])
    E += 0.5 * p.m_s * spd[-1] ** 2 - GM * p.m_s / np.linalg.norm(g.r[-1] + p.rho_s)
    rec = observe(g, v, p, 0.0)
    assert rec.V_elastic == 0.0
    assert rec.E_total == pytest.approx(E, rel=1e-10)


def test_energy_parts_add_up():
    sc = preset("case3")
    p = params_for(sc)
    g, v = build_initial_state(sc, p)
    rec = observe(g, lgvi.initialize(g, v, p), p, 0.0)
    assert rec.E_total == rec.T_base_sub + rec.T_tether + rec.V_gravity + rec.V_elastic


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_angular_momentum_pairs_with_rotation_generator(seed):
    """xi . L(g, p) equals p applied to the infinitesimal rotation xi of the whole system."""
    rng = np.random.default_rng(seed)
    p = small_params()
    g = random_config(rng, p)
    pr = rng.normal(size=3 * p.N + 10)
    xi = rng.normal(size=3)
    gen = np.concatenate([np.cross(xi, g.x), g.R.T @ xi, [0.0],
                          np.cross(xi, g.r[1:]).ravel(), g.R_s.T @ xi])
    assert xi @ angular_momentum(g, pr) == pytest.approx(pr @ gen, rel=1e-12, abs=1e-12 * np.abs(pr).max())


def test_linear_momentum_of_uniform_motion():
    p = small_params(GM=0.0)
    g = random_config(np.random.default_rng(2), p)
    vel = np.array([1.0, -2.0, 0.5])
    v = VelocityState(vel, np.zeros(3), 0.0, np.tile(vel, (p.N + 1, 1)), np.zeros(3))
    P = linear_momentum(momentum_of(g, v, p), p.N)
    assert np.allclose(P, p.total_mass * vel, rtol=1e-13)


def test_velocity_recovery_inverts_mass_matrix():
    p = small_params()
    rng = np.random.default_rng(6)
    g = random_config(rng, p)
    q = rng.normal(size=3 * p.N + 10)
    from tethersim.model import reduced_to_velocity, velocity_to_reduced
    v = reduced_to_velocity(q, g, p)
    w = velocity_from_momentum(g, momentum_of(g, v, p), p)
    assert np.allclose(velocity_to_reduced(w), q, rtol=1e-10, atol=1e-10)
    q[6] = 0.0
    v = reduced_to_velocity(q, g, p)
    pm = momentum_of(g, v, p)
    pm[6] += 123.0                          # ignored when the drum is locked
    w = velocity_from_momentum(g, pm, p, locked=True)
    assert np.allclose(velocity_to_reduced(w), q, rtol=1e-10, atol=1e-10)


def test_momentum_of_rejects_other_types():
    p = small_params()
    g = random_config(np.random.default_rng(0), p)
    with pytest.raises(TypeError):
        momentum_of(g, np.zeros(3), p)


def test_carnot_balance_formula():
    assert carnot_balance(10.0, 12.0, -4.0, 1.0, 0.5, -0.5) == pytest.approx(12.0 - 10.0 - (-4.0 + 2.0) * -0.5)


def test_drift_stats_constant_series():
    recs = [_record(0.1 * k, 0.0) for k in range(200)]
    ds = drift_stats(recs)
    assert ds.trend == 0.0 and ds.max_rel_dE == 0.0


def test_drift_stats_linear_series():
    alpha = 3.7e-4
    recs = [_record(0.5 * k, alpha * 0.5 * k, ortho=1e-15 * k) for k in range(300)]
    ds = drift_stats(recs)
    assert ds.trend == pytest.approx(alpha, abs=1e-12)
    assert ds.max_rel_dE == pytest.approx(alpha * 0.5 * 299 / 1e6)
    assert ds.max_ortho_err == pytest.approx(299e-15)


def test_drift_stats_needs_100_records():
    with pytest.raises(InsufficientData):
        drift_stats([_record(k, 0.0) for k in range(99)])
