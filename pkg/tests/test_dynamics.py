from dataclasses import replace

import numpy as np
import pytest

from rieszflow import (
    CflViolation,
    DomainMismatch,
    FlowConfig,
    FlowState,
    GridMeasure,
    Kernel,
    ParticleCollision,
    ParticleMeasure,
    confinement_check,
    eulerian_step_torus,
    lagrangian_rhs,
    mmd_energy,
    run_flow,
    step,
)

TORUS = Kernel.coulomb(1, torus=True)


def cosine_grid(mode, n, amp=0.5):
    return GridMeasure.from_function(lambda x: 1.0 + amp * np.cos(2 * np.pi * mode * x[..., 0]), (n,))


def test_rhs_vanishes_when_mu_equals_nu():
    rng = np.random.default_rng(0)
    mu = ParticleMeasure.uniform(rng.normal(size=(20, 3)))
    v = lagrangian_rhs(Kernel.coulomb(3), FlowState.from_particles(mu), mu)
    np.testing.assert_allclose(v, 0.0, atol=1e-14)


def test_rhs_two_particle_repulsion():
    r = 0.7
    s = FlowState.from_particles(ParticleMeasure([[0.0, 0, 0], [r, 0, 0]], [1.0, 1.0]))
    v = lagrangian_rhs(Kernel.coulomb(3), s, ParticleMeasure.empty(3))
    np.testing.assert_allclose(v, [[-1 / r**2, 0, 0], [1 / r**2, 0, 0]], rtol=1e-14)


def test_rhs_energy_distance_attraction():
    s = FlowState.from_particles(ParticleMeasure.uniform([[0.8]]))
    v = lagrangian_rhs(Kernel.energy_distance(1), s, ParticleMeasure.uniform([[0.0]]))
    np.testing.assert_allclose(v, [[-1.0]])


def test_rhs_errors():
    s = FlowState.from_particles(ParticleMeasure.uniform([[0.0, 0, 0], [0.0, 0, 0]]))
    with pytest.raises(ParticleCollision):
        lagrangian_rhs(Kernel.coulomb(3), s, ParticleMeasure.empty(3))
    with pytest.raises(DomainMismatch):
        lagrangian_rhs(Kernel.coulomb(2), s, ParticleMeasure.empty(2))


def uniform_state_with_densities(n, f0):
    s = FlowState.from_density(GridMeasure.on_torus(np.ones(n)))
    return replace(s, densities=f0.copy(), initial_density=f0.copy())


def test_logistic_density_update():
    # uniform particles against a uniform target stay put; f follows f' = f (1 - f)
    f0 = np.linspace(0.2, 1.8, 64)
    s = uniform_state_with_densities(64, f0)
    nu = GridMeasure.on_torus(np.ones(64))
    for _ in range(1000):
        s = step(s, TORUS, nu, 1e-3)
    np.testing.assert_allclose(s.positions, uniform_state_with_densities(64, f0).positions, atol=1e-12)
    exact = f0 / (f0 + (1 - f0) * np.exp(-1.0))
    np.testing.assert_allclose(s.densities, exact, atol=1e-8)
    assert s.time == pytest.approx(1.0)


def test_fixed_point_density_unchanged():
    f0 = np.ones(32)
    s = uniform_state_with_densities(32, f0)
    out = step(s, TORUS, GridMeasure.on_torus(np.ones(32)), 1e-2)
    np.testing.assert_allclose(out.densities, 1.0, atol=1e-14)


def test_transport_identity_short_run():
    s = FlowState.from_density(cosine_grid(1, 128))
    nu = cosine_grid(2, 128)
    for _ in range(1000):
        s = step(s, TORUS, nu, 1e-3)
    assert s.transport_defect() <= 1e-6


def test_cfl_guard():
    s = FlowState.from_density(cosine_grid(1, 16))
    with pytest.raises(CflViolation):
        step(s, TORUS, cosine_grid(2, 16), 0.1, sup_dv=10.0)
    with pytest.raises(ValueError):
        step(s, TORUS, cosine_grid(2, 16), 0.0)


def test_stationary_run():
    nu = cosine_grid(1, 128, amp=0.3)
    s0 = FlowState.from_density(nu)
    traj = run_flow(FlowConfig(TORUS, nu, s0, dt=0.01, t_end=1.0, record_every=10))
    assert traj.error is None
    assert np.max(traj.energies) <= 1e-10
    moved = np.abs(((traj.final_state.positions - s0.positions) + 0.5) % 1.0 - 0.5)
    assert moved.max() <= 1e-8


def test_energy_dissipation_and_density_bounds():
    nu, mu0 = cosine_grid(2, 128), cosine_grid(1, 128)
    traj = run_flow(FlowConfig(TORUS, nu, FlowState.from_density(mu0), dt=0.01, t_end=2.0, record_every=5))
    assert traj.error is None
    e = traj.energies
    assert np.all(np.diff(e) <= 1e-12 * e[0])
    for r in traj.records:
        assert 0.5 - 1e-3 <= r.report.min_density and r.report.max_density <= 1.5 + 1e-3
        assert r.report.energy <= r.report.grad_norm_sq / r.report.min_density


def test_energy_distance_rate_small():
    n = 64
    from scipy.stats import norm

    q = norm.ppf((np.arange(n) + 0.5) / n)
    mu, nu = ParticleMeasure.uniform(q[:, None]), ParticleMeasure.uniform(q[:, None] + 2)
    traj = run_flow(FlowConfig(Kernel.energy_distance(1), nu, FlowState.from_particles(mu), dt=0.01, t_end=3.0, record_every=10, monitor=False))
    e0 = mmd_energy(Kernel.energy_distance(1), mu, nu)
    for r in traj.records:
        assert r.report.energy <= e0 + 1e-12
        if r.t >= 1:
            assert r.report.energy <= 2.0 / (2 * r.t) * 1.05


def test_collision_ends_run_with_error():
    # two atoms pulled together onto a single target atom
    mu = ParticleMeasure.uniform([[-1.0], [1.0]])
    nu = ParticleMeasure.uniform([[0.0]])
    traj = run_flow(FlowConfig(Kernel.energy_distance(1), nu, FlowState.from_particles(mu), dt=0.01, t_end=3.0, monitor=False))
    assert isinstance(traj.error, ParticleCollision)
    assert traj.times[-1] < 2.0 + 1e-9
    assert np.all(np.isfinite(traj.final_state.positions))


def test_eulerian_fixed_point_and_mode_decay():
    nu = GridMeasure.on_torus(np.ones(128))
    assert np.allclose(eulerian_step_torus(nu, nu, TORUS, 0.01).values, 1.0, atol=1e-14)
    eps = 1e-3
    mu = cosine_grid(1, 128, amp=eps)
    for _ in range(100):
        mu = eulerian_step_torus(mu, nu, TORUS, 0.01)
    amp = 2 * np.abs(np.fft.rfft(mu.values)[1]) / 128
    rate = -np.log(amp / eps)
    assert rate == pytest.approx(1.0, rel=0.1)


def test_eulerian_cross_scheme():
    nu, mu0 = cosine_grid(2, 128), cosine_grid(1, 128)
    lag = run_flow(FlowConfig(TORUS, nu, FlowState.from_density(mu0), dt=0.01, t_end=1.0, record_every=10, monitor=False))
    eul = run_flow(FlowConfig(TORUS, nu, mu0, dt=0.01, t_end=1.0, record_every=10, scheme="eulerian", monitor=False))
    np.testing.assert_allclose(eul.energies, lag.energies, rtol=1e-2)


def test_confinement_checks():
    rng = np.random.default_rng(1)
    k = Kernel.coulomb(3)
    mu = ParticleMeasure.uniform(0.3 * rng.normal(size=(40, 3)))
    stationary = run_flow(FlowConfig(k, mu, FlowState.from_particles(mu), dt=0.01, t_end=0.2, record_every=5))
    rep = confinement_check(stationary)
    assert abs(rep["slope"]) < 1e-9 and rep["ok"]

    broad = ParticleMeasure.uniform(2.0 * rng.normal(size=(200, 3)))
    run = run_flow(FlowConfig(k, broad, FlowState.from_particles(mu), dt=5e-4, t_end=0.05, record_every=10))
    assert run.error is None
    assert confinement_check(run)["ok"]

    far = ParticleMeasure.uniform(rng.normal(size=(5, 3)) * 0.1 + [50.0, 0, 0])
    rep = confinement_check(run_flow(FlowConfig(k, far, FlowState.from_particles(mu), dt=5e-4, t_end=0.05, record_every=10)))
    assert rep["nondecreasing"]
