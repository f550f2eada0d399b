import numpy as np
import pytest

from rieszflow import (
    GridMeasure,
    HeatKernelSpec,
    Kernel,
    NoDescentSet,
    NonpositiveTime,
    ParticleMeasure,
    ProbeCurve,
    criticality_exponent,
    energy_derivative,
    hahn_jordan,
    heat_kernel,
    lagrangian_critical_check,
    mmd_energy,
    no_local_min_scan,
    select_descent_set,
    velocity_grid,
    w2_exact,
)
from rieszflow.kernels import coulomb_constant

T1 = Kernel.coulomb(1, torus=True)


def grid(f, n=128):
    return GridMeasure.from_function(f, (n,))


def cos_pair(n=128):
    mu = grid(lambda x: 1 + 0.3 * np.cos(2 * np.pi * x[..., 0]), n)
    nu = grid(lambda x: 1 - 0.3 * np.cos(2 * np.pi * x[..., 0]), n)
    return mu, nu


def test_derivative_zero_when_measures_agree():
    mu, _ = cos_pair()
    hj = hahn_jordan(mu, mu)
    curve = ProbeCurve(mu, hj.plus)
    assert energy_derivative(T1, curve, mu, 1e-2) == 0.0
    with pytest.raises(NonpositiveTime):
        energy_derivative(T1, curve, mu, 0.0)


def test_derivative_matches_finite_differences():
    mu, nu = cos_pair()
    hj = hahn_jordan(mu, nu)
    curve = ProbeCurve(mu, select_descent_set(hj.plus, hj.minus, 1e-2).rho)
    t, h = 1e-2, 1e-4
    fd = (mmd_energy(T1, curve.at(t + h), nu) - mmd_energy(T1, curve.at(t - h), nu)) / (2 * h)
    assert energy_derivative(T1, curve, nu, t) == pytest.approx(fd, rel=1e-3)
    assert curve.at(0.0) is mu


def test_derivative_dominated_by_self_term():
    rng = np.random.default_rng(0)
    k = Kernel.coulomb(3)
    plus = rng.normal(size=(20, 3)) * 0.1
    far = rng.normal(size=(20, 3)) * 0.1 + [50.0, 0, 0]
    mu = ParticleMeasure.uniform(plus)
    nu = ParticleMeasure.uniform(far)
    t = 1e-2
    curve = ProbeCurve(mu, mu)
    spec = HeatKernelSpec(3)
    K = heat_kernel(spec, 2 * t, plus[:, None, :], plus[None, :, :])
    self_term = -coulomb_constant(k) * np.full(20, 0.05) @ K @ np.full(20, 0.05)
    d = energy_derivative(k, curve, nu, t)
    assert d < 0
    assert d == pytest.approx(self_term, rel=1e-9)


def test_descent_set_without_negative_part():
    mu, _ = cos_pair()
    zero = mu.with_values(np.zeros(mu.shape))
    sel = select_descent_set(mu, zero, 1e-3)
    assert sel.retained_fraction == 1.0


def test_descent_set_parallel_segments():
    s = np.linspace(0, 1, 200)
    plus = ParticleMeasure.uniform(np.column_stack([s, np.zeros(200)]))
    minus = ParticleMeasure.uniform(np.column_stack([s, np.full(200, 0.2)]))
    sel = select_descent_set(plus, minus, 1e-3)
    assert sel.retained_fraction == 1.0 and sel.t0 == 1e-3


def test_descent_set_interleaved_atoms():
    x = np.arange(200) * 1e-3
    plus = ParticleMeasure.uniform(x[::2, None])
    minus = ParticleMeasure.uniform(x[1::2, None])
    sel = select_descent_set(plus, minus, 1.0)
    assert sel.t0 < 1.0
    assert sel.retained_fraction >= 0.5


def test_descent_set_overlap_raises():
    atom = ParticleMeasure.uniform([[0.0]])
    with pytest.raises(NoDescentSet):
        select_descent_set(atom, atom, 1.0)


def test_scan_identical_measures():
    mu, _ = cos_pair()
    rep = no_local_min_scan(T1, mu, mu, np.geomspace(1e-5, 1e-2, 6))
    assert rep.status == "no decomposition mass" and rep.t_star == 0.0


def test_scan_smooth_pair_and_records():
    mu, nu = cos_pair()
    rep = no_local_min_scan(T1, mu, nu, np.geomspace(1e-5, 1e-2, 6))
    assert rep.t_star > 0 and rep.status == "descent"
    rows = list(rep.records())
    assert set(rows[0]) == {"t", "derivative", "certificate_lhs", "certificate_rhs"}
    assert all(r["derivative"] <= r["certificate_rhs"] < 0 for r in rows if r["t"] <= rep.t_star)


def test_scan_torus_2d_pair():
    g = lambda a: GridMeasure.from_function(
        lambda x: 1 + a * np.cos(2 * np.pi * x[..., 0]) * np.sin(2 * np.pi * x[..., 1]), (32, 32)
    )
    rep = no_local_min_scan(Kernel.coulomb(2, torus=True), g(0.4), g(-0.4), np.geomspace(1e-5, 1e-2, 6))
    assert rep.t_star > 0


def test_scan_dirac_vs_density_in_r3():
    rng = np.random.default_rng(1)
    k = Kernel.coulomb(3)
    atoms = ParticleMeasure.uniform(rng.normal(size=(3, 3)))
    cloud = ParticleMeasure.uniform(rng.normal(size=(1000, 3)))
    rep = no_local_min_scan(k, atoms, cloud, np.geomspace(1e-4, 1e-2, 5))
    assert rep.derivative[0] < 0
    assert rep.energy_infinite


def test_exponent_sphere():
    rng = np.random.default_rng(2)
    z = rng.normal(size=(2000, 3))
    sphere = z / np.linalg.norm(z, axis=1, keepdims=True)
    u = rng.normal(size=(2000, 3))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    shell = u * ((8 + rng.random(2000) * 19) ** (1 / 3))[:, None]
    ex = criticality_exponent(Kernel.coulomb(3), ParticleMeasure.uniform(sphere), ParticleMeasure.uniform(shell), np.geomspace(3e-3, 3e-2, 6))
    assert ex.delta_hat == pytest.approx(1.0, abs=0.15)
    assert ex.consistent
    assert not ex.flags


def test_exponent_segment_is_flagged():
    rng = np.random.default_rng(3)
    seg = np.column_stack([np.linspace(-1, 1, 1500), np.zeros(1500), np.zeros(1500)])
    u = rng.normal(size=(1500, 3))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    shell = u * ((8 + rng.random(1500) * 19) ** (1 / 3))[:, None]
    ex = criticality_exponent(Kernel.coulomb(3), ParticleMeasure.uniform(seg), ParticleMeasure.uniform(shell), np.geomspace(3e-3, 3e-2, 6))
    assert ex.delta_hat == pytest.approx(2.0, abs=0.15)
    assert any("delta >= 2" in f for f in ex.flags)


def test_exponent_smooth_density():
    bump = lambda c: (lambda x: 1 + np.exp(-(((x[..., 0] - c) / 0.05) ** 2)))
    ex = criticality_exponent(T1, grid(bump(0.25), 1024), grid(bump(0.75), 1024), np.geomspace(1e-6, 1e-4, 8))
    assert ex.delta_hat == pytest.approx(0.0, abs=0.1)


def test_curve_half_holder_bound():
    rng = np.random.default_rng(4)
    base = ParticleMeasure.uniform(rng.normal(size=(10, 2)))
    rho = base.restrict(np.arange(10) < 4)
    curve = ProbeCurve(base, rho)
    z = rng.normal(size=(40, 2))
    ts = [1e-3, 4e-3, 1e-2, 3e-2]
    samples = {t: curve.sample(t, z) for t in ts}
    for i, t in enumerate(ts):
        for s in ts[i + 1 :]:
            w2 = w2_exact(samples[t], samples[s]).w2
            assert w2 <= curve.holder_constant() * np.sqrt(abs(t - s)) + 1e-12


def test_lagrangian_critical_check():
    mu, nu = cos_pair()
    same = lagrangian_critical_check(T1, mu, mu)
    assert same["residual"] == 0 and same["witness"] == 0
    assert lagrangian_critical_check(T1, mu, nu)["residual"] > 0


def test_lagrangian_critical_check_localizes_at_boundary():
    # nu uniform; mu = nu on the interior of [1/4, 3/4] plus extra mass on the two edge cells,
    # so phi is linear and odd about 1/2 on the interior and its gradient vanishes there
    n = 128
    x = (np.arange(n) + 0.5) / n
    inside = (x > 0.25) & (x < 0.75)
    mu = np.where(inside, 1.0, 0.0)
    mu[np.flatnonzero(inside)[[0, -1]]] += 0.25 * n
    rep = lagrangian_critical_check(T1, GridMeasure.on_torus(mu), GridMeasure.on_torus(np.ones(n)))
    assert rep["interior_cells"] == inside.sum() - 2
    assert rep["residual"] > 0.1
    assert rep["residual_interior"] < 0.25 * rep["residual_boundary"]
    assert rep["witness"] is None
    speed = np.abs(velocity_grid(T1, GridMeasure.on_torus(mu), GridMeasure.on_torus(np.ones(n)))[:, 0])
    deep = (x > 0.3) & (x < 0.7)
    assert speed[deep].max() < 0.05 * rep["residual_boundary"]
