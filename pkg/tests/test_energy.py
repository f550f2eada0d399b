import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rieszflow import (
    DiagonalSingularity,
    DomainMismatch,
    GridMeasure,
    Kernel,
    NonzeroMean,
    ParticleMeasure,
    ZeroDensityCell,
    mmd_energy,
    pl_report,
    potential,
    signed_energy,
    solve_potential,
    torus_green,
    velocity_field,
    velocity_grid,
)

T1 = Kernel.coulomb(1, torus=True)
T2 = Kernel.coulomb(2, torus=True)


def cos_grid(n, amp=1.0, mode=1):
    x = (np.arange(n) + 0.5) / n
    return GridMeasure.on_torus(1 + amp * np.cos(2 * np.pi * mode * x))


def smooth_field(rng, n, modes=3):
    x = (np.arange(n) + 0.5) / n
    X, Y = np.meshgrid(x, x, indexing="ij")
    f = np.zeros((n, n))
    for a in range(-modes, modes + 1):
        for b in range(-modes, modes + 1):
            if (a, b) != (0, 0):
                f += rng.normal() * np.cos(2 * np.pi * (a * X + b * Y) + rng.uniform(0, 2 * np.pi)) / (a * a + b * b)
    return f


def test_energy_distance_two_diracs():
    k = Kernel.energy_distance(1)
    assert mmd_energy(k, ParticleMeasure.uniform([[0.0]]), ParticleMeasure.uniform([[1.0]])) == pytest.approx(1.0)
    assert mmd_energy(k, ParticleMeasure.uniform([[0.0]]), ParticleMeasure.uniform([[1.0]]), diagonal="include") == pytest.approx(1.0)


def test_equal_measures_have_zero_energy():
    rng = np.random.default_rng(0)
    mu = ParticleMeasure.uniform(rng.normal(size=(30, 3)))
    assert mmd_energy(Kernel.coulomb(3), mu, mu) == 0.0
    g = cos_grid(64, 0.3)
    assert mmd_energy(T1, g, g) == 0.0


def test_single_mode_torus_energy():
    assert mmd_energy(T1, cos_grid(256), cos_grid(256, 0.0)) == pytest.approx(1 / (16 * np.pi**2), rel=1e-12)


def test_singular_diagonal_policy():
    mu = ParticleMeasure.uniform([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
    nu = ParticleMeasure.uniform([[0.0, 2.0, 0.0]])
    with pytest.raises(DiagonalSingularity):
        mmd_energy(Kernel.coulomb(3), mu, nu, diagonal="include")
    with pytest.raises(ValueError):
        mmd_energy(Kernel.coulomb(3), mu, nu, diagonal="maybe")
    with pytest.raises(DomainMismatch):
        mmd_energy(Kernel.coulomb(3), mu, ParticleMeasure.uniform([[0.0, 0.0]]))


def test_particle_energy_matches_pair_sum():
    rng = np.random.default_rng(1)
    k = Kernel.riesz(0.5, 3)
    a, b = rng.normal(size=(7, 3)), rng.normal(size=(5, 3)) + 1
    wa, wb = np.full(7, 1 / 7), np.full(5, 1 / 5)
    pts, w = np.vstack([a, b]), np.concatenate([wa, -wb])
    r = np.linalg.norm(pts[:, None] - pts[None], axis=-1)
    np.fill_diagonal(r, np.inf)
    G = r**-0.5 / 0.5
    ref = 0.5 * w @ G @ w
    assert mmd_energy(k, ParticleMeasure(a, wa), ParticleMeasure(b, wb)) == pytest.approx(ref, rel=1e-12)


@settings(max_examples=30, deadline=None)
@given(a=st.sampled_from([2.0, -1.0, 0.5]), seed=st.integers(0, 1000))
def test_energy_is_quadratic(a, seed):
    rng = np.random.default_rng(seed)
    rho = GridMeasure.on_torus(smooth_field(rng, 16), signed=True)
    e1 = signed_energy(T2, rho)
    e2 = signed_energy(T2, rho.with_values(a * rho.values))
    assert e2 == pytest.approx(a * a * e1, rel=1e-9)
    assert e1 >= 0


def test_velocity_examples():
    k = Kernel.coulomb(3)
    v = velocity_field(k, ParticleMeasure.uniform([[0.0, 0, 0]]), ParticleMeasure.uniform([[2.0, 0, 0]]), [1.0, 0, 0])
    np.testing.assert_allclose(v, [2.0, 0.0, 0.0])
    mu = ParticleMeasure.uniform([[0.3, 0.1, 0.2]])
    np.testing.assert_array_equal(velocity_field(k, mu, mu, [[1.0, 1.0, 1.0]]), [[0.0, 0.0, 0.0]])


def test_velocity_on_torus_grid():
    n = 256
    mu, nu = cos_grid(n), cos_grid(n, 0.0)
    x = (np.arange(n) + 0.5) / n
    v = velocity_field(T1, mu, nu, x[:, None])[:, 0]
    np.testing.assert_allclose(v, np.sin(2 * np.pi * x) / (2 * np.pi), atol=1e-6)
    np.testing.assert_allclose(velocity_grid(T1, mu, nu)[:, 0], np.sin(2 * np.pi * x) / (2 * np.pi), atol=1e-12)


def test_velocity_matches_gradient_of_energy():
    # moving one atom along v decreases the energy at rate |v|^2 w
    rng = np.random.default_rng(2)
    k = Kernel.coulomb(3)
    pts = rng.normal(size=(6, 3))
    nu = ParticleMeasure.uniform(rng.normal(size=(6, 3)) + 0.5)
    mu = ParticleMeasure.uniform(pts)
    v = velocity_field(k, mu, nu, pts[:1], exclude_coincident=True)[0]
    h = 1e-6
    shifted = pts.copy()
    shifted[0] += h * v
    rate = (mmd_energy(k, ParticleMeasure.uniform(shifted), nu) - mmd_energy(k, mu, nu)) / h
    assert rate == pytest.approx(-np.dot(v, v) / 6, rel=1e-4)


def test_solve_potential_single_mode():
    n = 128
    x = (np.arange(n) + 0.5) / n
    phi = solve_potential(T1, cos_grid(n), cos_grid(n, 0.0))
    np.testing.assert_allclose(phi.values, -np.cos(2 * np.pi * x) / (4 * np.pi**2), atol=1e-14)
    assert np.all(solve_potential(T1, cos_grid(n), cos_grid(n)).values == 0)


def test_solve_potential_finite_difference_laplacian():
    rng = np.random.default_rng(3)
    n = 64
    rho = smooth_field(rng, n)
    mu = GridMeasure.on_torus(2.0 + rho - rho.min())
    nu = GridMeasure.on_torus(np.full((n, n), mu.values.mean()))
    phi = solve_potential(T2, mu, nu).values
    # fourth-order five-point stencil per axis
    lap = -5.0 * phi
    for ax in (0, 1):
        for s in (-1, 1):
            lap += 4 / 3 * np.roll(phi, s, axis=ax) - 1 / 12 * np.roll(phi, 2 * s, axis=ax)
    lap *= n * n
    target = mu.values - nu.values
    assert np.linalg.norm(lap - target) <= 1e-3 * np.linalg.norm(target)


def test_solve_potential_errors():
    with pytest.raises(NonzeroMean):
        solve_potential(T1, cos_grid(32), GridMeasure.on_torus(np.full(32, 2.0)))
    with pytest.raises(DomainMismatch):
        solve_potential(Kernel.coulomb(3), cos_grid(32), cos_grid(32))


def test_torus_potential_matches_green_quadrature():
    n = 256
    mu = cos_grid(n, 0.4)
    x = np.array([[0.1], [0.45], [0.8]])
    pts, w = mu.atoms()
    quad = np.array([np.sum(w * torus_green(T1, xi - pts)) for xi in x])
    np.testing.assert_allclose(potential(T1, mu, x), quad, atol=1e-5)


def test_pl_report_uniform_and_bound():
    n = 128
    rep = pl_report(T1, cos_grid(n, 0.0), cos_grid(n, 0.4, mode=2))
    assert rep.grad_norm_sq == pytest.approx(2 * rep.energy, rel=1e-6)
    rng = np.random.default_rng(4)
    for _ in range(10):
        a, b = rng.uniform(-0.8, 0.8, 2)
        r = pl_report(T1, cos_grid(n, a, 1), cos_grid(n, b, 3))
        assert r.energy <= r.grad_norm_sq / r.min_density
    same = pl_report(T1, cos_grid(n, 0.3), cos_grid(n, 0.3))
    assert same.energy == 0 and same.pl_ratio == float("inf")
    with pytest.raises(ZeroDensityCell):
        pl_report(T1, GridMeasure.on_torus(np.r_[0.0, np.full(7, 8 / 7)]), cos_grid(8, 0.0))
