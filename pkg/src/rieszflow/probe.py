"""Heat-diffusion descent probe.

Given the Hahn-Jordan split ``mu - nu = mu_+ - nu_-`` and a part ``rho`` of
``mu_+``, the curve ``mu_t = mu + K_t * rho - rho`` keeps the mass of ``mu``
and moves it by heat diffusion.  For the Coulomb energy

    dE/dt = -c <rho, K_2t * rho + K_t * (mu - rho) - K_t * nu>,

with ``c`` the Coulomb normalization (the unit-sphere area on R^d, 1 on the
torus).  A negative value on ``(0, t*]`` certifies that ``mu`` is not a local
minimizer.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .energy import _spectrum, mmd_energy, velocity_field, velocity_grid
from .errors import DegenerateFit, NoDescentSet, NonpositiveTime
from .kernels import BLOCK, Kernel, _torus_heat_1d, coulomb_constant, wrap_difference
from .measures import GridMeasure, ParticleMeasure, atoms_of, hahn_jordan, local_dimension_estimate, rasterize

__all__ = [
    "ProbeCurve",
    "DescentSelection",
    "ScanReport",
    "ExponentReport",
    "heat_grid",
    "pairing",
    "energy_derivative",
    "select_descent_set",
    "no_local_min_scan",
    "criticality_exponent",
    "proximal_decrease",
    "lagrangian_critical_check",
]


# --- heat operators ---------------------------------------------------------------


def _torus_grids(*ms) -> bool:
    first = ms[0]
    return all(isinstance(m, GridMeasure) and m.torus and m.same_lattice(first) for m in ms)


def _heat_multiplier(shape, t):
    grids = np.meshgrid(*[np.fft.fftfreq(n, 1.0 / n) for n in shape], indexing="ij")
    k2 = sum(g * g for g in grids)
    return np.exp(-4.0 * np.pi**2 * k2 * t)


def heat_grid(g: GridMeasure, t: float) -> GridMeasure:
    """Exact heat flow of the trigonometric interpolant of a torus grid, sampled at the cells."""
    if not t > 0:
        raise NonpositiveTime("t must be positive")
    vals = np.real(np.fft.ifftn(np.fft.fftn(g.values) * _heat_multiplier(g.shape, t)))
    return g.with_values(vals, signed=True)


def _smooth_atoms(src_pts, src_w, x, ts, torus=False, skip_coincident=False):
    """``(K_t * src)(x)`` for every ``t``; shape ``(len(ts), len(x))``."""
    d = x.shape[1]
    out = np.zeros((len(ts), len(x)))
    if len(src_pts) == 0:
        return out
    step = max(1, BLOCK // len(src_pts))
    for a in range(0, len(x), step):
        diff = x[a : a + step, None, :] - src_pts[None, :, :]
        if torus:
            diff = wrap_difference(diff)
        r2 = np.einsum("ijk,ijk->ij", diff, diff)
        for n, t in enumerate(ts):
            if torus:
                K = np.prod(_torus_heat_1d(t, diff), axis=-1)
            else:
                K = (4.0 * np.pi * t) ** (-d / 2) * np.exp(-r2 / (4.0 * t))
            if skip_coincident:
                K[r2 == 0] = 0.0
            out[n, a : a + step] = K @ src_w
    return out


def pairing(a, b, ts, diagonal: str = "include") -> np.ndarray:
    """``<a, K_t * b>`` for each ``t``.

    Torus grids on one lattice use Parseval; anything else is summed over
    atoms.  ``diagonal="exclude"`` drops coincident atom pairs, which reads
    a particle cloud as a sample of a diffuse measure.
    """
    ts = np.atleast_1d(np.asarray(ts, float))
    if np.any(ts <= 0):
        raise NonpositiveTime("heat times must be positive")
    if _torus_grids(a, b):
        ca, cb = _spectrum(a.values), _spectrum(b.values)
        prod = np.real(ca * np.conj(cb))
        return np.array([float(np.sum(prod * _heat_multiplier(a.shape, t))) for t in ts])
    return _pair_atoms(a, b, ts, diagonal)


# --- curve ------------------------------------------------------------------------


@dataclass
class ProbeCurve:
    base: object
    rho: object
    t_grid: np.ndarray = field(default_factory=lambda: np.array([]))
    derivative_values: np.ndarray | None = None

    @property
    def rho_mass(self) -> float:
        return float(self.rho.mass)

    def at(self, t: float):
        """``mu_t`` as a grid (torus grids only; particle curves are not closed under heat flow)."""
        if not _torus_grids(self.base, self.rho):
            raise TypeError("explicit curve points exist for torus grids only")
        if t == 0:
            return self.base
        return self.base.with_values(self.base.values + heat_grid(self.rho, t).values - self.rho.values, signed=True)

    def sample(self, t: float, z: np.ndarray) -> ParticleMeasure:
        """Discretize ``mu_t`` by pushing each atom of ``rho`` along the shared Gaussian draws ``z``.

        Using the same ``z`` at every ``t`` realizes the coupling behind
        ``W_2(mu_t, mu_s) <= sqrt(2 d m) sqrt(|t - s|)``.
        """
        bp, bw = atoms_of(self.base)
        rp, rw = atoms_of(self.rho)
        L = len(z)
        moved = (rp[:, None, :] + np.sqrt(2.0 * t) * z[None, :, :]).reshape(-1, rp.shape[1])
        pts = np.concatenate([bp, rp, moved])
        w = np.concatenate([bw, -rw, np.repeat(rw / L, L)])
        uniq, inv = np.unique(pts, axis=0, return_inverse=True)
        merged = np.zeros(len(uniq))
        np.add.at(merged, inv.reshape(-1), w)
        keep = merged > 1e-15
        return ParticleMeasure(uniq[keep], merged[keep], self.base.torus)

    def holder_constant(self) -> float:
        return float(np.sqrt(2.0 * self.rho.dim * self.rho_mass))


def energy_derivative(k: Kernel, curve: ProbeCurve, nu, t, diagonal: str = "include"):
    """``d/dt E_nu(mu_t)`` for the Coulomb energy; ``t`` may be an array."""
    c = coulomb_constant(k)
    ts = np.atleast_1d(np.asarray(t, float))
    if np.any(ts <= 0):
        raise NonpositiveTime("t must be positive")
    rho = curve.rho
    if rho.mass == 0:
        out = np.zeros(len(ts))
    elif _torus_grids(rho, curve.base, nu):
        rest = curve.base.with_values(curve.base.values - rho.values - nu.values, signed=True)
        out = -c * (pairing(rho, rho, 2 * ts) + pairing(rho, rest, ts))
    else:
        bp, bw = atoms_of(curve.base)
        rp, rw = atoms_of(rho)
        rest = _merged(np.concatenate([bp, rp]), np.concatenate([bw, -rw]), rho.torus)
        out = -c * (
            _pair_atoms(rho, rho, 2 * ts, diagonal) + _pair_atoms(rho, rest, ts, diagonal) - _pair_atoms(rho, nu, ts, diagonal)
        )
    return float(out[0]) if np.ndim(t) == 0 else out


def _merged(points, weights, torus):
    """Signed atom list with coincident atoms combined and zeros dropped."""
    uniq, inv = np.unique(points, axis=0, return_inverse=True)
    merged = np.zeros(len(uniq))
    np.add.at(merged, inv.reshape(-1), weights)
    keep = merged != 0
    return _Atoms(uniq[keep], merged[keep], torus)


@dataclass
class _Atoms:
    points: np.ndarray
    weights: np.ndarray
    torus: bool


def _pair_atoms(a, b, ts, diagonal):
    pa, wa = atoms_of(a)
    pb, wb = (b.points, b.weights) if isinstance(b, _Atoms) else atoms_of(b)
    keep = wa != 0
    return wa[keep] @ _smooth_atoms(pb, wb, pa[keep], ts, a.torus, diagonal == "exclude").T


# --- descent set ---------------------------------------------------------------------


@dataclass
class DescentSelection:
    rho: object
    t0: float
    mask: np.ndarray
    retained_fraction: float


def _restrict(m, mask):
    if isinstance(m, GridMeasure):
        return m.with_values(np.where(mask.reshape(m.shape), m.values, 0.0), signed=False)
    return m.restrict(mask)


def select_descent_set(
    mu_plus, nu_minus, t0: float, levels: int = 24, min_fraction: float = 0.5, t_floor: float = 1e-12
) -> DescentSelection:
    """Keep the atoms/cells of ``mu_plus`` where ``K_t * nu_minus < K_2t * mu_plus / 2`` for
    every ``t = t0 / 2^j``, ``j < levels``.

    ``t0`` is halved until at least ``min_fraction`` of the mass survives.
    """
    if not t0 > 0:
        raise NonpositiveTime("t0 must be positive")
    total = float(mu_plus.mass)
    if total == 0:
        return DescentSelection(mu_plus, t0, np.zeros(0, dtype=bool), 0.0)
    if nu_minus.mass == 0:
        return DescentSelection(mu_plus, t0, np.ones(len(atoms_of(mu_plus)[1]), dtype=bool), 1.0)
    pts, w = atoms_of(mu_plus)
    support = w > 0
    grids = _torus_grids(mu_plus, nu_minus)
    npts, nw = atoms_of(nu_minus)
    cache: list[np.ndarray] = []
    # atoms where K_t * nu_minus underflowed; it only shrinks further as t decreases
    settled = ~support

    def ok_at(j):
        nonlocal settled
        while len(cache) <= j:
            t = t0 * 0.5 ** len(cache)
            if grids:
                a = heat_grid(nu_minus, t).values.reshape(-1)
                b = heat_grid(mu_plus, 2 * t).values.reshape(-1)
                cache.append(a < 0.5 * b)
                continue
            ok = np.ones(len(w), dtype=bool)
            live = ~settled
            if np.any(live):
                a = _smooth_atoms(npts, nw, pts[live], [t], mu_plus.torus)[0]
                b = _smooth_atoms(pts, w, pts[live], [2 * t], mu_plus.torus)[0]
                ok[live] = a < 0.5 * b
                newly = np.zeros(len(w), dtype=bool)
                newly[live] = a == 0
                settled = settled | newly
            cache.append(ok)
        return cache[j]

    start = 0
    while t0 * 0.5**start >= t_floor:
        mask = support.copy()
        for j in range(start, start + levels):
            mask &= ok_at(j)
        frac = float(w[mask].sum() / total)
        if frac >= min_fraction:
            return DescentSelection(_restrict(mu_plus, mask), t0 * 0.5**start, mask, frac)
        start += 1
    raise NoDescentSet(f"no descent set above t = {t_floor:g}: mu_+ and nu_- overlap at this resolution")


# --- scans and fits --------------------------------------------------------------------


@dataclass
class ScanReport:
    status: str
    t_star: float
    t: np.ndarray
    derivative: np.ndarray
    certificate_rhs: np.ndarray
    rho_mass: float
    t0: float = float("nan")
    energy_infinite: bool = False

    def records(self):
        for t, d, r in zip(self.t, self.derivative, self.certificate_rhs):
            yield {"t": float(t), "derivative": float(d), "certificate_lhs": float(d), "certificate_rhs": float(r)}


def _energy_infinite(k: Kernel, mu, nu) -> bool:
    singular = k.singular and not (k.torus and k.dim == 1)
    return singular and any(isinstance(m, ParticleMeasure) and len(m) > 0 for m in (mu, nu))


def _same_carrier(mu, nu):
    """Rasterize a particle measure paired with a grid, so that ``mu``, ``rho`` and
    ``nu`` are compared on the same cells."""
    if isinstance(mu, ParticleMeasure) and isinstance(nu, GridMeasure):
        mu = rasterize(mu, nu)
    elif isinstance(mu, GridMeasure) and isinstance(nu, ParticleMeasure):
        nu = rasterize(nu, mu)
    return mu, nu


def _split(mu, nu, t0, min_fraction=0.5):
    hj = hahn_jordan(mu, nu)
    if hj.plus.mass <= 1e-9:
        return hj, None
    sel = select_descent_set(hj.plus, hj.minus, t0, min_fraction=min_fraction)
    return hj, sel


def no_local_min_scan(k: Kernel, mu, nu, t_grid, t0: float | None = None, diagonal: str = "include") -> ScanReport:
    """Largest ``t*`` on ``t_grid`` below which the derivative is negative and satisfies
    ``dE/dt <= -c <rho, K_2t * rho> / 2``."""
    t_grid = np.sort(np.asarray(t_grid, float))
    inf = _energy_infinite(k, mu, nu)
    mu, nu = _same_carrier(mu, nu)
    hj, sel = _split(mu, nu, t0 or float(t_grid[-1]))
    if sel is None:
        z = np.zeros(len(t_grid))
        return ScanReport("no decomposition mass", 0.0, t_grid, z, z, 0.0, energy_infinite=inf)
    curve = ProbeCurve(mu, sel.rho, t_grid)
    deriv = energy_derivative(k, curve, nu, t_grid, diagonal)
    curve.derivative_values = deriv
    rhs = -0.5 * coulomb_constant(k) * _self_pairing(sel.rho, 2 * t_grid, diagonal)
    good = (deriv < 0) & (deriv <= rhs + 1e-12 * np.abs(rhs))
    bad = np.nonzero(~good)[0]
    n_ok = len(t_grid) if len(bad) == 0 else bad[0]
    t_star = float(t_grid[n_ok - 1]) if n_ok > 0 else 0.0
    status = "descent" if t_star > 0 else "no descent found"
    return ScanReport(status, t_star, t_grid, deriv, rhs, float(sel.rho.mass), sel.t0, inf)


def _self_pairing(rho, ts, diagonal):
    if _torus_grids(rho):
        return pairing(rho, rho, ts)
    return _pair_atoms(rho, rho, ts, diagonal)


@dataclass
class ExponentReport:
    delta_hat: float
    prefactor: float
    q_hat: float
    dim: int
    t: np.ndarray
    derivative: np.ndarray
    rho_mass: float
    flags: list = field(default_factory=list)

    @property
    def consistent(self) -> bool:
        return bool(np.isfinite(self.q_hat) and abs(self.delta_hat - (self.dim - self.q_hat)) <= 0.25)


def criticality_exponent(
    k: Kernel,
    mu,
    nu,
    t_grid,
    t0: float | None = None,
    diagonal: str = "exclude",
    q_points: int = 16,
    q_grid=None,
    seed: int = 0,
) -> ExponentReport:
    """Fit ``-dE/dt ~ a t^{-delta/2}`` along the heat probe and return ``delta``.

    Particle clouds are read as samples (coincident pairs dropped).  The
    local dimension ``q`` of ``rho`` is estimated at up to ``q_points`` atoms
    with the atom itself left out, for the cross-check ``delta ~ d - q``;
    ``q_grid`` defaults to two decades upward from the smallest fit time.
    """
    t_grid = np.sort(np.asarray(t_grid, float))
    mu, nu = _same_carrier(mu, nu)
    hj, sel = _split(mu, nu, t0 or float(t_grid[-1]))
    if sel is None:
        raise DegenerateFit("mu and nu agree; nothing to fit")
    curve = ProbeCurve(mu, sel.rho, t_grid)
    deriv = energy_derivative(k, curve, nu, t_grid, diagonal)
    if np.any(deriv >= 0) or not np.all(np.isfinite(deriv)):
        raise DegenerateFit("derivative is not negative on the whole t grid")
    beta, icpt = np.polyfit(np.log(t_grid), np.log(-deriv), 1)
    delta = -2.0 * beta
    q_hat = float("nan")
    if q_grid is None:
        q_grid = np.geomspace(t_grid[0], 100.0 * t_grid[0], 8)
    if isinstance(sel.rho, ParticleMeasure) and len(sel.rho) > q_points:
        rng = np.random.default_rng(seed)
        idx = rng.choice(len(sel.rho), size=q_points, replace=False)
        qs = []
        for i in idx:
            keep = np.ones(len(sel.rho), dtype=bool)
            keep[i] = False
            qs.append(local_dimension_estimate(sel.rho.restrict(keep), sel.rho.points[i], q_grid))
        q_hat = float(np.mean(qs))
    flags = []
    if delta >= 2.0 - 0.15:
        flags.append("delta >= 2: the set carries infinite Coulomb energy; exponent outside the admissible range")
    if delta < 0.2:
        flags.append("delta ~ 0: rho behaves like a density")
    return ExponentReport(float(delta), float(np.exp(icpt)), q_hat, k.dim, t_grid, deriv, float(sel.rho.mass), flags)


def proximal_decrease(k: Kernel, mu, nu, tau_grid, t_grid=None, t0=None, diagonal="exclude") -> dict:
    """Upper bound ``Delta(tau)`` on the proximal gain along the heat probe.

    ``Delta(tau) = min_t [E(mu_t) - E(mu) + d t m / tau]``, using
    ``W_2^2(mu, mu_t) <= 2 d t m``.  Torus grids evaluate ``E(mu_t)`` exactly
    on a fine geometric ``t`` grid and also use the kinetic bound of
    ``_kinetic_bound`` when it is smaller.  Otherwise the energy gain is the
    integral of the derivative: fitted power law ``-a s^{-delta/2}`` below
    the resolved range, trapezoidal quadrature of the computed derivative
    inside it; ``t_tau = (a tau / (d m))^{2 / delta}`` is the optimal time
    for the power law.  A smooth ``rho`` (``delta < 0.2``) switches to the
    transport direction ``(id + tau v)_# mu``.
    """
    tau_grid = np.sort(np.asarray(tau_grid, float))
    if tau_grid[-1] / tau_grid[0] < 100 - 1e-9:
        raise ValueError("tau_grid must span at least two decades")
    d = k.dim
    mu, nu = _same_carrier(mu, nu)
    hj = hahn_jordan(mu, nu)
    report = {"tau": tau_grid, "mode": "heat", "delta_hat": float("nan"), "exponent": float("nan")}
    if hj.plus.mass <= 1e-9:
        report.update(delta=np.zeros(len(tau_grid)), t_tau=np.zeros(len(tau_grid)), status="no descent found")
        return report
    if _torus_grids(mu, nu):
        sel = select_descent_set(hj.plus, hj.minus, t0 or 1e-2)
        curve = ProbeCurve(mu, sel.rho)
        m = sel.rho.mass
        ts = np.geomspace(1e-9, 1.0, 721) if t_grid is None else np.asarray(t_grid, float)
        e0 = mmd_energy(k, mu, nu)
        gains = np.array([mmd_energy(k, curve.at(t), nu) for t in ts]) - e0
        cost = np.minimum(2.0 * d * ts * m, _kinetic_bound(curve, ts))
        vals = gains[None, :] + cost[None, :] / (2.0 * tau_grid[:, None])
        j = np.argmin(vals, axis=1)
        delta = np.minimum(vals[np.arange(len(tau_grid)), j], 0.0)
        report.update(delta=delta, t_tau=ts[j], extrapolated=np.zeros(len(tau_grid), dtype=bool))
    else:
        if t_grid is None:
            raise ValueError("particle probes need a resolved t_grid for the exponent fit")
        ex = criticality_exponent(k, mu, nu, t_grid, t0=t0, diagonal=diagonal)
        report["delta_hat"] = ex.delta_hat
        report["q_hat"] = ex.q_hat
        if ex.delta_hat < 0.2:
            report = _transport_decrease(k, mu, nu, tau_grid, report)
        elif ex.delta_hat >= 2.0:
            raise DegenerateFit("delta >= 2: the power-law gain is not integrable at t = 0")
        else:
            a, dl, m = ex.prefactor, ex.delta_hat, ex.rho_mass
            p = 1.0 - dl / 2.0
            t_lo = float(ex.t[0])
            t_tau = (a * tau_grid / (d * m)) ** (2.0 / dl)
            sel = select_descent_set(hj.plus, hj.minus, t0 or float(ex.t[-1]))
            curve = ProbeCurve(mu, sel.rho)
            gain = np.empty(len(tau_grid))
            for i, tt in enumerate(t_tau):
                head = min(tt, t_lo)
                g = -a * head**p / p
                if tt > t_lo:
                    s = np.geomspace(t_lo, tt, 33)
                    g += np.trapezoid(energy_derivative(k, curve, nu, s, diagonal), s)
                gain[i] = g
            delta = gain + d * t_tau * m / tau_grid
            report.update(delta=delta, t_tau=t_tau, extrapolated=t_tau <= t_lo)
            report["expected_exponent"] = (2.0 - dl) / dl
    neg = report["delta"] < 0
    report["status"] = "descent" if np.any(neg) else "no descent found"
    if np.sum(neg) >= 2:
        report["exponent"] = float(np.polyfit(np.log(tau_grid[neg]), np.log(-report["delta"][neg]), 1)[0])
    return report


def _kinetic_bound(curve: ProbeCurve, ts) -> np.ndarray:
    """Benamou-Brenier bound ``W_2^2(mu, mu_t) <= t int_0^t int |grad K_s rho|^2 / mu_s``.

    The heat curve is driven by the momentum ``-grad K_s rho``; any momentum
    gives an upper bound, and for diffuse ``rho`` this one scales like ``t^2``.
    """
    rho = curve.rho
    F_rho = np.fft.fftn(rho.values)
    grids = np.meshgrid(*[np.fft.fftfreq(n, 1.0 / n) for n in rho.shape], indexing="ij")
    fisher = np.empty(len(ts))
    for i, t in enumerate(ts):
        hk = F_rho * _heat_multiplier(rho.shape, t)
        grad2 = sum(np.real(np.fft.ifftn(2j * np.pi * g * hk)) ** 2 for g in grids)
        dens = curve.at(t).values
        if np.any(dens <= 0):
            fisher[i] = np.inf
            continue
        fisher[i] = float(np.sum(grad2 / dens) * rho.cell_volume)
    integral = np.concatenate([[fisher[0] * ts[0]], 0.5 * (fisher[1:] + fisher[:-1]) * np.diff(ts)])
    return ts * np.cumsum(integral)


def _transport_decrease(k, mu, nu, tau_grid, report):
    """Proximal gain along ``(id + tau v)_# mu``: ``E(push) - E(mu) + tau |v|^2 / 2``."""
    pts, w = atoms_of(mu)
    v = velocity_field(k, mu, nu, pts, exclude_coincident=True)
    v2 = float(w @ np.sum(v * v, axis=1))
    # baseline in the same atom representation as the pushed measures
    e0 = mmd_energy(k, ParticleMeasure(pts, w, mu.torus), nu)
    delta = np.array(
        [mmd_energy(k, ParticleMeasure(pts + tau * v, w, mu.torus), nu) - e0 + tau * v2 / 2.0 for tau in tau_grid]
    )
    report.update(mode="transport", delta=delta, t_tau=np.full(len(tau_grid), np.nan), velocity_norm_sq=v2)
    report["expected_ratio"] = -v2 / 2.0
    return report


def lagrangian_critical_check(k: Kernel, mu: GridMeasure, nu: GridMeasure, tol: float = 1e-8, support_tol: float = 1e-12) -> dict:
    """Transport residual ``max |grad phi|`` on ``supp mu`` and, when it vanishes, ``max |mu - nu|``
    over the interior cells of the support."""
    supp = mu.values > support_tol
    if mu.torus:
        speed = np.linalg.norm(velocity_grid(k, mu, nu), axis=-1)
    else:
        pts = mu.centers().reshape(-1, mu.dim)
        speed = np.linalg.norm(velocity_field(k, mu, nu, pts), axis=-1).reshape(mu.shape)
    interior = supp.copy()
    for ax in range(mu.dim):
        for sh in (-1, 1):
            if mu.torus:
                interior &= np.roll(supp, sh, axis=ax)
            else:
                shifted = np.zeros_like(supp)
                src = [slice(None)] * mu.dim
                dst = [slice(None)] * mu.dim
                src[ax] = slice(max(sh, 0), supp.shape[ax] + min(sh, 0))
                dst[ax] = slice(max(-sh, 0), supp.shape[ax] + min(-sh, 0))
                shifted[tuple(dst)] = supp[tuple(src)]
                interior &= shifted
    residual = float(speed[supp].max()) if np.any(supp) else 0.0
    boundary = supp & ~interior
    out = {
        "residual": residual,
        "residual_interior": float(speed[interior].max()) if np.any(interior) else float("nan"),
        "residual_boundary": float(speed[boundary].max()) if np.any(boundary) else float("nan"),
        "interior_cells": int(interior.sum()),
        "critical": residual < tol,
        "witness": None,
    }
    if residual < tol and np.any(interior):
        out["witness"] = float(np.max(np.abs(mu.values - nu.values)[interior]))
    return out
