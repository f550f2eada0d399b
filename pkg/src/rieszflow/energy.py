"""MMD energies, potentials, velocity fields and the Polyak-Lojasiewicz report.

How a measure is read
---------------------
* ``ParticleMeasure``: sum of Dirac masses.  For kernels that are singular on
  the diagonal the self-interaction is dropped (``diagonal="exclude"``); the
  resulting particle energy is a relative quantity and may be negative.
* ``GridMeasure`` on the torus: the trigonometric interpolant of the cell
  values; energies and potentials are computed mode by mode.
* ``GridMeasure`` on a Euclidean box: cell masses at cell centers, with the
  kernel flat-capped below the cell width ``h`` (``G_h(r) = G(max(r, h))``).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .errors import DiagonalSingularity, DomainMismatch, LatticeMismatch, NonzeroMean, ZeroDensityCell
from .kernels import BLOCK, Kernel, torus_green, torus_green_grad, wrap_difference
from .measures import GridMeasure, ParticleMeasure, atoms_of

__all__ = [
    "EnergyReport",
    "mmd_energy",
    "signed_energy",
    "potential",
    "grad_potential",
    "velocity_field",
    "velocity_grid",
    "solve_potential",
    "pl_report",
    "tophat_energy_1d",
    "write_reports_jsonl",
]


@dataclass
class EnergyReport:
    energy: float
    grad_norm_sq: float
    pl_ratio: float
    min_density: float = float("nan")
    max_density: float = float("nan")
    t: float = 0.0

    def to_record(self) -> dict:
        rec = asdict(self)
        return {key: rec[key] for key in ("t", "energy", "grad_norm_sq", "pl_ratio", "min_density", "max_density")}


def write_reports_jsonl(reports, path) -> None:
    with open(path, "w") as fh:
        for r in reports:
            fh.write(json.dumps(r.to_record()) + "\n")


def _check_same_domain(k: Kernel, *measures):
    for m in measures:
        if m.dim != k.dim or m.torus != k.torus:
            raise DomainMismatch(f"measure on {m.domain} {m.dim} does not match {k.describe()}")


# --- raw kernel values on difference vectors ---------------------------------


def _kernel_of_diff(k: Kernel, diff, cap=0.0):
    """Kernel at difference vectors; zero differences must be filtered by the caller."""
    if k.torus:
        return np.asarray(torus_green(k, wrap_difference(diff)))
    r = np.sqrt(np.sum(diff * diff, axis=-1))
    if cap > 0:
        r = np.maximum(r, cap)
    if k.s == 0:
        return -np.log(r)
    if k.s == -1:
        return -r
    return r ** (-k.s) / k.s


def _kernel_grad_of_diff(k: Kernel, diff, cap=0.0):
    if k.torus:
        return torus_green_grad(k, wrap_difference(diff))
    r = np.sqrt(np.sum(diff * diff, axis=-1))
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = r ** (-k.s - 2.0)
    if cap > 0:
        scale = np.where(r < cap, 0.0, scale)
    return -diff * scale[..., None]


def _zero_value(k: Kernel, cap=0.0):
    """Kernel value on the diagonal, or None if infinite."""
    if cap > 0:
        return float(_kernel_of_diff(k, np.zeros((1, k.dim)), cap)[0])
    if k.torus:
        return None if k.dim >= 2 else 1.0 / 12.0
    return 0.0 if k.s < 0 else None


def _cap_of(m):
    if isinstance(m, GridMeasure) and not m.torus:
        return float(max(m.spacing))
    return 0.0


def _pair_sum(k, a_pts, a_w, b_pts, b_w, cap=0.0, same=False, diagonal="exclude"):
    """``sum_ij a_i b_j G(x_i - y_j)``; coincident pairs follow ``diagonal``."""
    total = 0.0
    if len(a_pts) == 0 or len(b_pts) == 0:
        return total
    g0 = _zero_value(k, cap)
    step = max(1, BLOCK // len(b_pts))
    for start in range(0, len(a_pts), step):
        diff = a_pts[start : start + step, None, :] - b_pts[None, :, :]
        if k.torus:
            coincide = np.all(wrap_difference(diff) == 0, axis=-1)
        else:
            coincide = np.all(diff == 0, axis=-1)
        G = np.zeros(coincide.shape)
        off = ~coincide
        G[off] = _kernel_of_diff(k, diff[off], cap)
        if np.any(coincide):
            if diagonal == "include":
                if g0 is None:
                    raise DiagonalSingularity(f"{k.describe()} is infinite on the diagonal")
                G[coincide] = g0
            elif not same:
                # coincident atoms of different measures are merged upstream
                raise DiagonalSingularity("coincident atoms in a cross term")
        total += a_w[start : start + step] @ (G @ b_w)
    return float(total)


# --- spectral machinery on torus grids ------------------------------------------


def _int_freqs(shape):
    return [np.fft.fftfreq(n, 1.0 / n) for n in shape]


def _spectrum(values):
    """Fourier coefficients of the trigonometric interpolant through cell-centered values."""
    c = np.fft.fftn(values) / values.size
    for ax, (n, f) in enumerate(zip(values.shape, _int_freqs(values.shape))):
        shape = [1] * values.ndim
        shape[ax] = n
        c = c * np.exp(-1j * np.pi * f / n).reshape(shape)
    return c


def _k2(shape):
    grids = np.meshgrid(*_int_freqs(shape), indexing="ij")
    return sum(g * g for g in grids), grids


def _nyquist_mask(shape):
    grids = np.meshgrid(*_int_freqs(shape), indexing="ij")
    mask = np.ones(shape, dtype=bool)
    for n, g in zip(shape, grids):
        if n % 2 == 0:
            mask &= g != -n // 2
    return mask


def _trig_eval(coef, x):
    """Evaluate ``sum_k coef_k exp(2 pi i k.x)`` at points ``x`` (real part)."""
    shape = coef.shape
    grids = np.meshgrid(*_int_freqs(shape), indexing="ij")
    keep = coef != 0
    kv = np.stack([g[keep] for g in grids], axis=-1)
    cv = coef[keep]
    x = np.asarray(x, float).reshape(-1, len(shape))
    out = np.empty(len(x))
    step = max(1, BLOCK // max(len(cv), 1))
    for a in range(0, len(x), step):
        ph = np.exp(2j * np.pi * (x[a : a + step] @ kv.T))
        out[a : a + step] = np.real(ph @ cv)
    return out


def _grid_diff(mu: GridMeasure, nu: GridMeasure):
    if not mu.same_lattice(nu):
        raise LatticeMismatch("grid measures must share a lattice")
    return mu.values - nu.values


def _torus_grid_energy(rho_values):
    c = _spectrum(rho_values)
    k2, _ = _k2(rho_values.shape)
    nz = k2 > 0
    return 0.5 * float(np.sum(np.abs(c[nz]) ** 2 / (4.0 * np.pi**2 * k2[nz])))


# --- public operations ----------------------------------------------------------


def signed_energy(k: Kernel, rho, diagonal="exclude") -> float:
    """``1/2 <rho, G * rho>`` of a signed grid (``rho.signed`` allowed) or signed atom list."""
    if isinstance(rho, GridMeasure):
        if rho.torus:
            return _torus_grid_energy(rho.values)
        pts, w = rho.atoms()
        return 0.5 * _pair_sum(k, pts, w, pts, w, cap=_cap_of(rho), same=True, diagonal="include")
    pts, w = rho
    return 0.5 * _pair_sum(k, pts, w, pts, w, same=True, diagonal=diagonal)


def mmd_energy(k: Kernel, mu, nu, diagonal: str = "exclude") -> float:
    """``E_nu(mu) = 1/2 <mu - nu, G * (mu - nu)>``.

    ``diagonal="include"`` keeps self-interaction of particle atoms and is only
    allowed for kernels that are finite on the diagonal.
    """
    if diagonal not in ("include", "exclude"):
        raise ValueError("diagonal must be 'include' or 'exclude'")
    _check_same_domain(k, mu, nu)
    if diagonal == "include" and _zero_value(k) is None and (
        isinstance(mu, ParticleMeasure) or isinstance(nu, ParticleMeasure)
    ):
        raise DiagonalSingularity(f"{k.describe()} has infinite self-energy on atoms")
    if isinstance(mu, GridMeasure) and isinstance(nu, GridMeasure):
        diff = _grid_diff(mu, nu)
        return signed_energy(k, mu.with_values(diff, signed=True))
    if isinstance(mu, ParticleMeasure) and isinstance(nu, ParticleMeasure):
        pts = np.concatenate([mu.points, nu.points])
        w = np.concatenate([mu.weights, -nu.weights])
        uniq, inv = np.unique(pts, axis=0, return_inverse=True)
        merged = np.zeros(len(uniq))
        np.add.at(merged, inv.reshape(-1), w)
        keep = merged != 0
        return signed_energy(k, (uniq[keep], merged[keep]), diagonal=diagonal)
    # particles against a grid: three-term expansion
    if isinstance(mu, GridMeasure):
        mu, nu = nu, mu
    p_pts, p_w = mu.points, mu.weights
    self_p = _pair_sum(k, p_pts, p_w, p_pts, p_w, same=True, diagonal=diagonal)
    if nu.torus:
        self_g = 2.0 * _torus_grid_energy(nu.values)
        cross = float(p_w @ potential(k, nu, p_pts))
    else:
        g_pts, g_w = nu.atoms()
        cap = _cap_of(nu)
        self_g = _pair_sum(k, g_pts, g_w, g_pts, g_w, cap=cap, same=True, diagonal="include")
        # the cell cap keeps G finite where an atom sits on a cell center
        cross = _pair_sum(k, p_pts, p_w, g_pts, g_w, cap=cap, diagonal="include")
    return 0.5 * (self_p - 2.0 * cross + self_g)


def potential(k: Kernel, m, x, exclude_coincident: bool = False) -> np.ndarray:
    """``(G * m)(x)`` at points ``x`` of shape ``(n, d)``."""
    x = np.asarray(x, float).reshape(-1, k.dim)
    if isinstance(m, GridMeasure) and m.torus:
        c = _spectrum(m.values)
        k2, _ = _k2(m.shape)
        phi = np.where(k2 > 0, c / (4.0 * np.pi**2 * np.where(k2 > 0, k2, 1.0)), 0.0)
        return _trig_eval(phi, x)
    pts, w = atoms_of(m)
    cap = _cap_of(m)
    g0 = _zero_value(k, cap)
    out = np.empty(len(x))
    step = max(1, BLOCK // max(len(pts), 1))
    for a in range(0, len(x), step):
        diff = x[a : a + step, None, :] - pts[None, :, :]
        coincide = np.all((wrap_difference(diff) if k.torus else diff) == 0, axis=-1)
        G = np.zeros(coincide.shape)
        G[~coincide] = _kernel_of_diff(k, diff[~coincide], cap)
        if np.any(coincide) and not exclude_coincident:
            if g0 is None:
                raise DiagonalSingularity("potential evaluated on an atom of a singular kernel")
            G[coincide] = g0
        out[a : a + step] = G @ w
    return out


def grad_potential(k: Kernel, m, x, exclude_coincident: bool = False) -> np.ndarray:
    """``grad (G * m)(x)``; coincident atoms raise unless ``exclude_coincident`` (principal value)."""
    x = np.asarray(x, float).reshape(-1, k.dim)
    if isinstance(m, GridMeasure) and m.torus:
        c = _spectrum(m.values)
        k2, grids = _k2(m.shape)
        phi = np.where(k2 > 0, c / (4.0 * np.pi**2 * np.where(k2 > 0, k2, 1.0)), 0.0)
        phi = phi * _nyquist_mask(m.shape)
        return np.stack([_trig_eval(2j * np.pi * g * phi, x) for g in grids], axis=-1)
    pts, w = atoms_of(m)
    cap = _cap_of(m)
    out = np.zeros((len(x), k.dim))
    step = max(1, BLOCK // max(len(pts), 1))
    for a in range(0, len(x), step):
        diff = x[a : a + step, None, :] - pts[None, :, :]
        coincide = np.all((wrap_difference(diff) if k.torus else diff) == 0, axis=-1)
        if np.any(coincide) and not exclude_coincident and cap == 0:
            raise DiagonalSingularity("gradient evaluated on an atom")
        g = np.zeros(diff.shape)
        g[~coincide] = _kernel_grad_of_diff(k, diff[~coincide], cap)
        out[a : a + step] = np.einsum("ijk,j->ik", g, w)
    return out


def velocity_field(k: Kernel, mu, nu, x, exclude_coincident: bool = False) -> np.ndarray:
    """Transport velocity ``v = -grad G * (mu - nu)`` at points ``x``.

    Returns an array of shape ``(n, d)``; a single point gives shape ``(d,)``.
    """
    _check_same_domain(k, mu, nu)
    x_arr = np.asarray(x, float)
    single = x_arr.ndim <= 1 and (k.dim > 1 or x_arr.ndim == 0)
    pts = x_arr.reshape(-1, k.dim)
    if isinstance(mu, GridMeasure) and isinstance(nu, GridMeasure) and mu.torus:
        diff = mu.with_values(_grid_diff(mu, nu), signed=True)
        v = -grad_potential(k, diff, pts)
    else:
        v = -(grad_potential(k, mu, pts, exclude_coincident) - grad_potential(k, nu, pts, exclude_coincident))
    return v[0] if single else v


def solve_potential(k: Kernel, mu: GridMeasure, nu: GridMeasure) -> GridMeasure:
    """Torus Poisson solve ``Laplace phi = mu - nu`` with zero-mean ``phi``."""
    if not k.torus:
        raise DomainMismatch("solve_potential works on torus grids")
    _check_same_domain(k, mu, nu)
    diff = _grid_diff(mu, nu)
    if abs(diff.mean()) > 1e-9:
        raise NonzeroMean(f"mean(mu - nu) = {diff.mean():.3e}")
    F = np.fft.fftn(diff)
    k2, _ = _k2(diff.shape)
    phi = np.where(k2 > 0, -F / (4.0 * np.pi**2 * np.where(k2 > 0, k2, 1.0)), 0.0)
    return mu.with_values(np.real(np.fft.ifftn(phi)), signed=True)


def velocity_grid(k: Kernel, mu: GridMeasure, nu: GridMeasure) -> np.ndarray:
    """``grad phi`` at cell centers, shape ``grid.shape + (d,)``, by spectral differentiation."""
    phi = solve_potential(k, mu, nu)
    F = np.fft.fftn(phi.values) * _nyquist_mask(phi.shape)
    _, grids = _k2(phi.shape)
    comps = [np.real(np.fft.ifftn(2j * np.pi * g * F)) for g in grids]
    return np.stack(comps, axis=-1)


def pl_report(k: Kernel, mu: GridMeasure, nu: GridMeasure, t: float = 0.0) -> EnergyReport:
    """Energy, ``|grad phi|^2_{L^2(mu)}`` and their ratio on a torus grid."""
    if not (isinstance(mu, GridMeasure) and mu.torus):
        raise DomainMismatch("pl_report expects torus grid measures")
    lo, hi = float(mu.values.min()), float(mu.values.max())
    if lo <= 0:
        raise ZeroDensityCell("mu vanishes on a cell; the PL constant degenerates")
    energy = mmd_energy(k, mu, nu)
    v = velocity_grid(k, mu, nu)
    g2 = float(np.sum(np.sum(v * v, axis=-1) * mu.values) * mu.cell_volume)
    ratio = g2 / energy if energy > 0 else float("inf")
    return EnergyReport(energy, g2, ratio, lo, hi, t)


# --- cell (top-hat) reconstruction on the circle ---------------------------------


def _bernoulli4(u):
    f = u - np.floor(u)
    return (f**4 - 2.0 * f**3 + f**2 - 1.0 / 30.0) / 24.0


def _tophat_gram(a_lo, a_hi, b_lo, b_hi):
    """``int_{A} int_{B} G(x - y) dy dx`` for intervals on the circle, G the torus Green function."""
    H = _bernoulli4
    return (
        H(a_hi[:, None] - b_lo[None, :]) - H(a_hi[:, None] - b_hi[None, :])
        - H(a_lo[:, None] - b_lo[None, :]) + H(a_lo[:, None] - b_hi[None, :])
    )


def tophat_energy_1d(centers, widths, masses, nu: GridMeasure | None = None) -> float:
    """Energy on the circle of uniform cells (``masses`` spread over ``widths``) minus a cell-wise ``nu``.

    Exact for piecewise-constant densities: uses the periodic Bernoulli
    polynomial ``B_4 / 24`` as second antiderivative of the Green function.
    """
    lo = np.asarray(centers) - 0.5 * np.asarray(widths)
    hi = np.asarray(centers) + 0.5 * np.asarray(widths)
    dens = np.asarray(masses) / np.asarray(widths)
    if nu is not None:
        h = nu.spacing[0]
        g_lo = nu.lower[0] + np.arange(nu.shape[0]) * h
        lo = np.concatenate([lo, g_lo])
        hi = np.concatenate([hi, g_lo + h])
        dens = np.concatenate([dens, -nu.values])
    total = 0.0
    step = max(1, BLOCK // len(lo))
    for a in range(0, len(lo), step):
        gram = _tophat_gram(lo[a : a + step], hi[a : a + step], lo, hi)
        total += dens[a : a + step] @ (gram @ dens)
    return 0.5 * float(total)
