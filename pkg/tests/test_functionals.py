"""State container and the scalar functionals over the combined measure."""

import math

import numpy as np
import pytest

import oracles
from helpers import constant_state, make_model, roll_x
from pfstrip import LatentHeat, Potential, State, StepperConfig, run
from pfstrip.errors import DomainError
from pfstrip.functionals import (DiagnosticsRow, dissipation_increment, dm_mean,
                                 dm_std, energy, energy_identity_residual,
                                 entropy, mass_mu)
from pfstrip.timestepper import preset_field


def random_state(model, rng, theta_span=(0.5, 2.0), chi_span=(-0.8, 0.8)):
    n = model.grid.n_nodes
    theta = rng.uniform(*theta_span, size=n)
    chi = rng.uniform(*chi_span, size=n)
    return State(0.0, -1.0 / theta, chi)


def test_state_theta_roundtrip():
    m = make_model()
    s = constant_state(m, 2.0, 0.1)
    assert np.allclose(s.theta, 2.0, rtol=1e-15)


def test_state_validate_rejects_bad_fields():
    m = make_model()
    s = constant_state(m, 1.0, 0.0)
    ok = lambda st: st.validate(m.p_bulk, m.p_surf, m.surf_mask)
    ok(s)
    with pytest.raises(DomainError):
        ok(State(0.0, np.abs(s.u), s.chi))
    with pytest.raises(DomainError):
        ok(State(0.0, s.u, np.full_like(s.chi, 1.5)))
    bad = s.u.copy()
    bad[3] = np.nan
    with pytest.raises(DomainError):
        ok(State(0.0, bad, s.chi))


def test_dm_mean_and_std_constants():
    m = make_model()
    v = np.full(m.grid.n_nodes, 0.7)
    assert dm_mean(v, m.masses) == pytest.approx(0.7, rel=1e-14)
    assert dm_std(v, m.masses) <= 1e-14


def test_mass_constant_examples():
    lz = LatentHeat(0.0, 0.0, 0.0)
    m = make_model(nx=8, ny=4, l_bulk=lz)
    s = constant_state(m, 1.0, 0.0)
    assert mass_mu(s, m.l_bulk, m.l_surf, m.masses) == pytest.approx(3.0, rel=1e-14)
    m2 = make_model(nx=8, ny=4, l_bulk=LatentHeat(0.0, 0.0, 1.0),
                    l_surf=LatentHeat(0.0, 0.0, 2.0))
    s2 = constant_state(m2, 1.0, 0.0)
    # 3 + 1*(lx*ly) + 2*(2*lx)
    assert mass_mu(s2, m2.l_bulk, m2.l_surf, m2.masses) == pytest.approx(8.0, rel=1e-14)


def test_mass_matches_summation_oracle(rng):
    m = make_model(nx=16, ny=16, l_bulk=LatentHeat(0.7, -0.3, 0.2),
                   l_surf=LatentHeat(-0.4, 0.1, 1.0))
    s = random_state(m, rng)
    ref = oracles.mass_oracle(m.grid, s.theta, s.chi, m.l_bulk, m.l_surf)
    assert mass_mu(s, m.l_bulk, m.l_surf, m.masses) == pytest.approx(ref, rel=1e-12)


def test_mass_without_latent_is_theta_mean(rng):
    m = make_model(nx=8, ny=6)
    s = random_state(m, rng)
    ref = float(np.sum(m.masses.m_comb * s.theta))
    assert mass_mu(s, m.l_bulk, m.l_surf, m.masses) == pytest.approx(ref, rel=1e-14)


def test_energy_constant_examples():
    m = make_model(nx=8, ny=4)
    s = constant_state(m, 1.0, 0.0)
    args = (m.p_bulk, m.p_surf, m.l_bulk, m.l_surf, m.masses, m.stiffness)
    assert energy(s, *args) == pytest.approx(3.0, rel=1e-14)
    m2 = make_model(nx=8, ny=4, l_bulk=LatentHeat(0.0, 0.0, 1.0),
                    l_surf=LatentHeat(0.0, 0.0, 0.0))
    assert energy(s, m2.p_bulk, m2.p_surf, m2.l_bulk, m2.l_surf,
                  m2.masses, m2.stiffness) == pytest.approx(4.0, rel=1e-14)


def test_energy_matches_summation_oracle(rng):
    m = make_model(nx=16, ny=8, p_bulk=Potential.logarithmic(1.5),
                   p_surf=Potential.logarithmic(0.5),
                   l_bulk=LatentHeat(0.6, 0.1, -0.2), l_surf=LatentHeat(0.2, 0.0, 0.3))
    g = m.grid
    s = State(0.0, -1.0 / (1.0 + 0.3 * np.sin(2.0 * np.pi * g.x)),
              0.4 * np.sin(2.0 * np.pi * g.x) * np.cos(np.pi * g.y))
    ref = oracles.energy_oracle(g, s.theta, s.chi, m.p_bulk, m.p_surf,
                                m.l_bulk, m.l_surf)
    val = energy(s, m.p_bulk, m.p_surf, m.l_bulk, m.l_surf, m.masses, m.stiffness)
    assert val == pytest.approx(ref, rel=1e-12)


def test_energy_rejects_invalid_state():
    m = make_model()
    s = constant_state(m, 1.0, 0.0)
    bad = State(0.0, -s.u, s.chi)
    with pytest.raises(DomainError):
        energy(bad, m.p_bulk, m.p_surf, m.l_bulk, m.l_surf, m.masses, m.stiffness)


def test_entropy_constant_examples():
    m = make_model(nx=8, ny=4)
    args = (m.p_bulk, m.p_surf, m.masses, m.stiffness)
    assert abs(entropy(constant_state(m, 1.0, 0.0), *args)) <= 1e-14
    assert entropy(constant_state(m, math.e, 0.0), *args) == pytest.approx(3.0, rel=1e-13)


def test_entropy_matches_summation_oracle(rng):
    m = make_model(nx=16, ny=8, p_bulk=Potential.quartic(2.0),
                   p_surf=Potential.quartic(1.0))
    s = random_state(m, rng, chi_span=(-1.5, 1.5))
    ref = oracles.entropy_oracle(m.grid, s.theta, s.chi, m.p_bulk, m.p_surf)
    val = entropy(s, m.p_bulk, m.p_surf, m.masses, m.stiffness)
    assert val == pytest.approx(ref, rel=1e-12)


@pytest.mark.parametrize("kind", ["logarithmic", "quartic"])
def test_energy_is_mass_minus_entropy(kind, rng):
    p = getattr(Potential, kind)(1.3)
    m = make_model(nx=12, ny=6, p_bulk=p, l_bulk=LatentHeat(0.5, -0.2, 0.4))
    for _ in range(5):
        s = random_state(m, rng)
        e = energy(s, m.p_bulk, m.p_surf, m.l_bulk, m.l_surf, m.masses, m.stiffness)
        mu = mass_mu(s, m.l_bulk, m.l_surf, m.masses)
        ent = entropy(s, m.p_bulk, m.p_surf, m.masses, m.stiffness)
        assert e == pytest.approx(mu - ent, rel=1e-12)


def test_functionals_invariant_under_x_translation(rng):
    m = make_model(nx=12, ny=6, l_bulk=LatentHeat(0.4, 0.1, 0.0))
    s = random_state(m, rng)
    shifted = State(0.0, roll_x(m.grid, s.u, 5), roll_x(m.grid, s.chi, 5))
    args = (m.p_bulk, m.p_surf, m.l_bulk, m.l_surf, m.masses, m.stiffness)
    assert energy(shifted, *args) == pytest.approx(energy(s, *args), rel=1e-12)
    assert entropy(shifted, m.p_bulk, m.p_surf, m.masses, m.stiffness) == pytest.approx(
        entropy(s, m.p_bulk, m.p_surf, m.masses, m.stiffness), rel=1e-12)
    assert mass_mu(shifted, m.l_bulk, m.l_surf, m.masses) == pytest.approx(
        mass_mu(s, m.l_bulk, m.l_surf, m.masses), rel=1e-12)


def test_dissipation_trivial_cases():
    m = make_model(nx=8, ny=4)
    n = m.grid.n_nodes
    chi = np.full(n, 0.2)
    u = np.full(n, -1.0)
    assert dissipation_increment(u, chi, chi, 0.1, m.masses, m.stiffness) == 0.0
    tau = 0.25
    val = dissipation_increment(np.zeros(n), chi, chi + tau, tau, m.masses, m.stiffness)
    assert val == pytest.approx(tau * 3.0, rel=1e-13)


def test_dissipation_matches_summation_oracle(rng):
    m = make_model(nx=10, ny=6)
    n = m.grid.n_nodes
    u = -np.exp(rng.standard_normal(n))
    chi_old = rng.uniform(-0.5, 0.5, size=n)
    chi_new = chi_old + 0.01 * rng.standard_normal(n)
    tau = 0.02
    ref = oracles.dissipation_oracle(m.grid, u, chi_old, chi_new, tau)
    val = dissipation_increment(u, chi_old, chi_new, tau, m.masses, m.stiffness)
    assert val == pytest.approx(ref, rel=1e-12)


def _row(step, t, e, diss, src):
    return DiagnosticsRow(step=step, t=t, mu=0.0, energy=e, entropy=0.0,
                          dissipation_cum=diss, source_cum=src,
                          energy_id_residual=0.0, theta_min=1.0, theta_max=1.0,
                          chi_min=0.0, chi_max=0.0, u_spatial_std=0.0,
                          newton_iters_chi=0, newton_iters_theta=0)


def test_energy_identity_residual_trivial_rows():
    assert energy_identity_residual([_row(0, 0.0, 5.0, 0.0, 0.0)]) == 0.0
    rows = [_row(0, 0.0, 5.0, 0.0, 0.0), _row(1, 0.1, 5.0, 0.0, 0.0)]
    assert energy_identity_residual(rows) == 0.0
    rows = [_row(0, 0.0, 5.0, 0.0, 0.0), _row(1, 0.1, 4.2, 0.5, -0.1)]
    assert energy_identity_residual(rows) == pytest.approx(4.2 + 0.5 - 5.0 + 0.1, rel=1e-14)


def test_energy_identity_residual_is_first_order_in_tau():
    m = make_model(nx=16, ny=8, l_bulk=LatentHeat(0.5, 0.2, 0.0))
    g = m.grid
    theta0 = preset_field(g, "sinusoid", value=1.0, amplitude=0.2, kx=1)
    chi0 = preset_field(g, "tanh_stripe", amplitude=0.4, width=0.25)
    s0 = State(0.0, -1.0 / theta0, chi0)
    resid = {}
    for tau, nsteps in ((2e-3, 100), (1e-3, 200)):
        rows, _ = run(m, StepperConfig(tau=tau), s0, tau * nsteps)
        resid[tau] = rows[-1].energy_id_residual
    assert 1.5 <= resid[2e-3] / resid[1e-3] <= 2.7
