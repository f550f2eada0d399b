import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rieszflow import (
    DiagonalSingularity,
    DomainMismatch,
    HeatKernelSpec,
    Kernel,
    NonpositiveTime,
    ParticleMeasure,
    TruncationTooSmall,
    eval_kernel,
    grad_kernel,
    heat_kernel,
    riesz_potential_moment,
    torus_green,
)
from rieszflow.kernels import coulomb_constant, sphere_area, torus_green_grad

EUCLIDEAN = [
    Kernel.coulomb(3), Kernel.energy_distance(1), Kernel.energy_distance(2), Kernel.log(2),
    Kernel.riesz(0.5, 3), Kernel.riesz(-0.5, 2), Kernel.riesz(1.5, 4),
]
TORUS = [Kernel.coulomb(1, torus=True), Kernel.coulomb(2, torus=True), Kernel.coulomb(3, torus=True)]


def test_kernel_values():
    assert eval_kernel(Kernel.energy_distance(1), [0.0], [3.0]) == -3.0
    assert eval_kernel(Kernel.coulomb(3), [0, 0, 0], [2, 0, 0]) == pytest.approx(0.5)
    assert eval_kernel(Kernel.log(2), [0, 0], [1, 0]) == 0.0
    assert eval_kernel(Kernel.riesz(0.5, 3), [0, 0, 0], [4, 0, 0]) == pytest.approx(1 / (0.5 * 2))


def test_kernel_gradients():
    np.testing.assert_allclose(grad_kernel(Kernel.coulomb(3), [2, 0, 0], [0, 0, 0]), [-0.25, 0, 0])
    np.testing.assert_allclose(grad_kernel(Kernel.energy_distance(2), [0, 3], [0, 0]), [0, -1])


def test_constructor_aliases():
    assert Kernel.coulomb(1).name == "energy_distance"
    assert Kernel.coulomb(2).name == "log"
    assert Kernel.riesz(0, 3).name == "log"
    assert Kernel.riesz(1, 3).name == "coulomb"
    with pytest.raises(ValueError):
        Kernel.riesz(2.5, 3)
    with pytest.raises(TruncationTooSmall):
        Kernel.coulomb(2, torus=True, fourier_truncation=0)


def test_errors():
    with pytest.raises(DiagonalSingularity):
        eval_kernel(Kernel.coulomb(3), [1, 1, 1], [1, 1, 1])
    with pytest.raises(DiagonalSingularity):
        grad_kernel(Kernel.energy_distance(1), [1.0], [1.0])
    with pytest.raises(DomainMismatch):
        eval_kernel(Kernel.coulomb(3), [1, 1], [0, 0])
    # energy distance is bounded on the diagonal
    assert eval_kernel(Kernel.energy_distance(2), [1, 1], [1, 1]) == 0.0


@pytest.mark.parametrize("k", EUCLIDEAN + TORUS, ids=lambda k: k.describe())
def test_symmetry(k):
    rng = np.random.default_rng(1)
    x, y = rng.uniform(0, 1, (1000, k.dim)), rng.uniform(0, 1, (1000, k.dim))
    np.testing.assert_array_equal(eval_kernel(k, x, y), eval_kernel(k, y, x))


@pytest.mark.parametrize("k", EUCLIDEAN + TORUS, ids=lambda k: k.describe())
def test_gradient_matches_finite_differences(k):
    rng = np.random.default_rng(2)
    h = 1e-5
    checked = 0
    while checked < 10:
        x, y = rng.uniform(0, 1, k.dim), rng.uniform(0, 1, k.dim)
        diff = x - y
        if k.torus:
            diff -= np.round(diff)
        if np.linalg.norm(diff) < 0.1:
            continue
        fd = np.array([(eval_kernel(k, x + e, y) - eval_kernel(k, x - e, y)) / (2 * h) for e in np.eye(k.dim) * h])
        g = grad_kernel(k, x, y)
        assert np.linalg.norm(g - fd) <= 1e-6 * np.linalg.norm(g)
        checked += 1


def test_torus_green_1d_values():
    k = Kernel.coulomb(1, torus=True)
    assert torus_green(k, [0.0]) == pytest.approx(1 / 12, abs=1e-15)
    assert torus_green(k, [0.5]) == pytest.approx(-1 / 24, abs=1e-15)
    # periodic
    assert torus_green(k, [1.3]) == pytest.approx(torus_green(k, [0.3]))


def test_torus_green_1d_matches_fourier():
    k = Kernel.coulomb(1, torus=True)
    u = np.linspace(0, 1, 41)[1:-1]
    modes = np.arange(1, 10_001)
    fourier = (np.cos(2 * np.pi * np.outer(u, modes)) / (2 * np.pi**2 * modes**2)).sum(axis=1)
    np.testing.assert_allclose(torus_green(k, u[:, None]), fourier, atol=1e-6)


@pytest.mark.parametrize("d", [2, 3])
def test_torus_green_matches_lattice_sum(d):
    k = Kernel.coulomb(d, torus=True)
    n = 40 if d == 2 else 14
    axes = [np.arange(-n, n + 1)] * d
    modes = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, d)
    modes = modes[np.any(modes != 0, axis=1)]
    coef = 1 / (4 * np.pi**2 * np.sum(modes**2, axis=1))
    u = np.array([[0.31, 0.47, 0.12][:d], [0.5] * d])
    # brute-force truncated sums converge slowly; compare in a smoothed sense via the mode count
    direct = (np.cos(2 * np.pi * u @ modes.T) * coef).sum(axis=1)
    tail = 1.0 / n if d == 2 else 1.0 / n
    np.testing.assert_allclose(torus_green(k, u), direct, atol=0.05 * tail)


@pytest.mark.parametrize("d", [2, 3])
def test_torus_green_symmetries(d):
    k = Kernel.coulomb(d, torus=True)
    rng = np.random.default_rng(d)
    u = rng.uniform(size=(20, d))
    g = torus_green(k, u)
    np.testing.assert_allclose(torus_green(k, -u), g, rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(torus_green(k, u[:, ::-1]), g, rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(torus_green(k, u + 1), g, rtol=1e-12, atol=1e-14)


@pytest.mark.parametrize("d", [1, 2])
def test_torus_green_zero_mean(d):
    # the integral mean is zero; the midpoint mean is the aliased lattice sum
    # -sum_{m != 0} (-1)^{|m|_1} / (4 pi^2 n^2 |m|^2), i.e. -1/(24 n^2) in d=1 and -ln 2/(4 pi n^2) in d=2
    k = Kernel.coulomb(d, torus=True)
    expected = {1: -1 / 24, 2: -np.log(2) / (4 * np.pi)}[d]
    for n in (4, 8, 16):
        c = (np.arange(n) + 0.5) / n
        pts = np.stack(np.meshgrid(*[c] * d, indexing="ij"), -1).reshape(-1, d)
        assert np.mean(torus_green(k, pts)) * n * n == pytest.approx(expected, rel=1e-5)


def test_torus_green_laplacian():
    # -Laplace G = -1 away from the origin
    k = Kernel.coulomb(2, torus=True)
    x, h = np.array([0.3, 0.4]), 1e-3
    lap = sum(torus_green(k, x + e) + torus_green(k, x - e) - 2 * torus_green(k, x) for e in np.eye(2) * h) / h**2
    assert lap == pytest.approx(1.0, abs=1e-4)


def test_torus_green_1d_grad():
    k = Kernel.coulomb(1, torus=True)
    np.testing.assert_allclose(torus_green_grad(k, np.array([[0.25]])), [[-0.25]])


def test_heat_kernel_values():
    assert heat_kernel(HeatKernelSpec(1), 1 / (4 * np.pi), [0.3], [0.3]) == pytest.approx(1.0)
    spec = HeatKernelSpec(1, torus=True)
    for x in (0.0, 0.2, 0.5, 0.9):
        assert heat_kernel(spec, 10.0, [x], [0.1]) == pytest.approx(1.0, abs=1e-6)
    with pytest.raises(NonpositiveTime):
        heat_kernel(spec, 0.0, [0.0], [0.0])


def test_torus_heat_matches_fourier_series():
    spec = HeatKernelSpec(1, torus=True)
    x = np.linspace(0, 1, 17)[:, None]
    for t in (1e-3, 0.1, 0.3, 1.0):
        j = np.arange(1, 200)
        ref = 1 + 2 * (np.exp(-4 * np.pi**2 * j**2 * t) * np.cos(2 * np.pi * np.outer(x[:, 0], j))).sum(axis=1)
        np.testing.assert_allclose(heat_kernel(spec, t, x, np.zeros(1)), ref, rtol=1e-10, atol=1e-13)


def test_heat_kernel_torus_product():
    spec2, spec1 = HeatKernelSpec(2, torus=True), HeatKernelSpec(1, torus=True)
    v = heat_kernel(spec2, 0.02, [0.1, 0.7], [0.0, 0.0])
    assert v == pytest.approx(heat_kernel(spec1, 0.02, [0.1], [0.0]) * heat_kernel(spec1, 0.02, [0.7], [0.0]))


@settings(max_examples=200, deadline=None)
@given(
    d=st.integers(1, 3),
    logt=st.floats(-4, 0),
    x=st.lists(st.floats(-2, 2), min_size=3, max_size=3),
)
def test_heat_growth_bound(d, logt, x):
    spec = HeatKernelSpec(d)
    t, x = 10**logt, np.array(x[:d])
    assert heat_kernel(spec, t, x, np.zeros(d)) <= 2 ** (d / 2) * heat_kernel(spec, 2 * t, x, np.zeros(d)) * (1 + 1e-12)


def test_riesz_potential_moment():
    delta = ParticleMeasure.uniform(np.zeros((1, 3)))
    assert riesz_potential_moment(delta, 1, [2, 0, 0]) == pytest.approx(0.5)
    delta5 = ParticleMeasure.uniform(np.zeros((1, 5)))
    assert riesz_potential_moment(delta5, 3, [2, 0, 0, 0, 0]) == pytest.approx(0.125)
    with pytest.raises(DiagonalSingularity):
        riesz_potential_moment(delta, 1, [0, 0, 0])
    with pytest.raises(ValueError):
        riesz_potential_moment(delta, 2, [1, 0, 0])


def test_iterated_laplacian_identity():
    rng = np.random.default_rng(5)
    d = 5
    pts = rng.normal(size=(100, d))
    pts *= (rng.uniform(size=100) ** (1 / d) / np.linalg.norm(pts, axis=1))[:, None]
    cloud = ParticleMeasure.uniform(pts)
    x, h = np.full(d, 1.0), 1e-3
    lap = -2 * d * riesz_potential_moment(cloud, 1, x)
    for e in np.eye(d) * h:
        lap += riesz_potential_moment(cloud, 1, x + e) + riesz_potential_moment(cloud, 1, x - e)
    lap /= h * h
    assert lap == pytest.approx(-2 * riesz_potential_moment(cloud, 3, x), rel=1e-3)


def test_constants():
    assert sphere_area(3) == pytest.approx(4 * np.pi)
    assert sphere_area(2) == pytest.approx(2 * np.pi)
    assert coulomb_constant(Kernel.coulomb(3)) == pytest.approx(4 * np.pi)
