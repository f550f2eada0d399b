"""Lagrangian particle flow, Eulerian torus scheme and regularity monitors.

The particle state carries, for each label ``alpha_i``, its position
``psi_i``, the transported density ``f_i = mu_t(psi_i)`` and the Jacobian
``J_i``.  Along characteristics

    d psi / dt = v_t(psi),   df/dt = f (nu(psi) - f),   dJ/dt = J (f - nu(psi)),

so ``J f`` is conserved.  On the circle the interaction sums reduce to
cumulative sums after sorting, which keeps each right-hand side at
``O(n log n)``.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from .energy import EnergyReport, _kernel_grad_of_diff, grad_potential, mmd_energy, pl_report, tophat_energy_1d, velocity_grid
from .errors import (
    BlowupDetected,
    CflViolation,
    DomainMismatch,
    IoError,
    MassDriftExceeded,
    NonzeroMean,
    ParticleCollision,
    RieszFlowError,
    ZeroDensityCell,
)
from .kernels import Kernel, wrap_difference
from .measures import GridMeasure, ParticleMeasure, holder_seminorm, scattered_holder_seminorm, support_radius

log = logging.getLogger(__name__)

COLLISION_TOL = 1e-12

__all__ = [
    "FlowState",
    "RegularityMonitor",
    "FlowConfig",
    "Trajectory",
    "lagrangian_rhs",
    "step",
    "run_flow",
    "eulerian_step_torus",
    "confinement_check",
    "state_energy",
    "state_report",
    "regularity_monitor",
    "density_on_grid",
    "nu_at",
]


@dataclass(frozen=True, eq=False)
class FlowState:
    labels: np.ndarray
    positions: np.ndarray
    initial_weights: np.ndarray
    densities: np.ndarray | None = None
    jacobians: np.ndarray | None = None
    initial_density: np.ndarray | None = None
    time: float = 0.0
    torus: bool = False

    @classmethod
    def from_density(cls, density: GridMeasure) -> "FlowState":
        """One particle per cell center, carrying the cell's density and mass."""
        pts, w = density.atoms()
        f0 = density.values.reshape(-1).astype(float)
        if np.any(f0 <= 0):
            raise ZeroDensityCell("initial density must be strictly positive")
        return cls(pts.copy(), pts.copy(), w, f0.copy(), np.ones_like(f0), f0.copy(), 0.0, density.torus)

    @classmethod
    def from_particles(cls, mu: ParticleMeasure) -> "FlowState":
        pts = np.array(mu.points)
        return cls(pts.copy(), pts, np.array(mu.weights), torus=mu.torus)

    @property
    def dim(self) -> int:
        return self.positions.shape[1]

    @property
    def tracks_density(self) -> bool:
        return self.densities is not None

    def measure(self) -> ParticleMeasure:
        return ParticleMeasure(self.positions, self.initial_weights, self.torus)

    def transport_defect(self) -> float:
        """``max |J f - mu_0| / mu_0`` over particles."""
        if not self.tracks_density:
            return 0.0
        return float(np.max(np.abs(self.jacobians * self.densities - self.initial_density) / self.initial_density))


@dataclass
class RegularityMonitor:
    sup_dv: float
    holder_dv: float
    sup_dpsi: float
    holder_dpsi: float
    support_radius: float
    gamma: float
    sup_v: float = float("nan")
    holder_mu: float = float("nan")

    def check_finite(self):
        vals = (self.sup_dv, self.holder_dv, self.sup_dpsi, self.holder_dpsi, self.sup_v)
        if not all(np.isfinite(v) for v in vals):
            raise BlowupDetected(f"regularity monitor became non-finite: {self}")


# --- fast sums on the circle ---------------------------------------------------


def _circle_grad_atoms(pts, w, x):
    """``sum_j w_j G'(x - p_j)`` on the circle, skipping ``p_j == x``; ``G'(u) = frac(u) - 1/2``."""
    order = np.argsort(pts)
    p, ww = pts[order], w[order]
    cw = np.concatenate([[0.0], np.cumsum(ww)])
    W, M1 = cw[-1], float(ww @ p)
    lo = np.searchsorted(p, x, side="left")
    hi = np.searchsorted(p, x, side="right")
    above = W - cw[hi]
    same = cw[hi] - cw[lo]
    # coincident atoms contribute frac(0) - 1/2 = -1/2 in the closed form; remove them
    return W * x - M1 - 0.5 * W + above + 0.5 * same


def _circle_grad_cells(nu: GridMeasure, x):
    """``int G'(x - y) nu(y) dy`` for a cell-wise constant density on the circle."""
    h = nu.spacing[0]
    edges = nu.lower[0] + h * np.arange(nu.shape[0] + 1)
    cell_mass = nu.values * h
    cum = np.concatenate([[0.0], np.cumsum(cell_mass)])
    M = cum[-1]
    M1 = float(cell_mass @ (edges[:-1] + 0.5 * h))
    below = np.interp(np.mod(x - nu.lower[0], 1.0) + nu.lower[0], edges, cum)
    return M * x - M1 - 0.5 * M + (M - below)


def _line_grad_atoms(pts, w, x):
    """``sum_j w_j G'(x - p_j)`` on the line for ``G(z) = -|z|``, skipping ``p_j == x``."""
    order = np.argsort(pts)
    p = pts[order]
    cw = np.concatenate([[0.0], np.cumsum(w[order])])
    below = cw[np.searchsorted(p, x, side="left")]
    above = cw[-1] - cw[np.searchsorted(p, x, side="right")]
    return above - below


def _is_circle(k: Kernel) -> bool:
    return k.torus and k.dim == 1


def nu_at(nu, x) -> np.ndarray | None:
    """Pointwise target density at ``x`` (linear interpolation between cell centers); None for particles."""
    if not isinstance(nu, GridMeasure):
        return None
    x = np.asarray(x, float).reshape(-1, nu.dim)
    coords = [(x[:, a] - nu.lower[a]) / nu.spacing[a] - 0.5 for a in range(nu.dim)]
    mode = "grid-wrap" if nu.torus else "nearest"
    vals = ndimage.map_coordinates(nu.values, coords, order=1, mode=mode)
    if not nu.torus:
        outside = np.zeros(len(x), dtype=bool)
        for a in range(nu.dim):
            outside |= (coords[a] < -0.5) | (coords[a] > nu.shape[a] - 0.5)
        vals = np.where(outside, 0.0, vals)
    return vals


def _check_collisions(k: Kernel, pos):
    if len(pos) < 2:
        return
    if _is_circle(k):
        p = np.sort(pos[:, 0])
        gaps = np.diff(np.concatenate([p, [p[0] + 1.0]]))
        dmin = float(gaps.min())
    else:
        tree = cKDTree(np.mod(pos, 1.0) if k.torus else pos, boxsize=1.0 if k.torus else None)
        dmin = float(tree.query(np.mod(pos, 1.0) if k.torus else pos, k=2)[0][:, 1].min())
    if dmin < COLLISION_TOL:
        raise ParticleCollision(f"particles collided (min distance {dmin:.3e})")


def _velocity(k: Kernel, pos, w, nu, x, spectral: bool = False):
    """``-sum_j w_j grad G(x - pos_j) + (grad G * nu)(x)``, coincident atoms skipped.

    Torus grids act as cell-constant densities unless ``spectral``, which uses
    their trigonometric interpolant (the exact gradient of ``mmd_energy``).
    """
    if _is_circle(k):
        xs = np.mod(x[:, 0], 1.0)
        self_term = _circle_grad_atoms(pos[:, 0], w, xs)
        if isinstance(nu, GridMeasure) and spectral:
            nu_term = grad_potential(k, nu, xs[:, None])[:, 0]
        elif isinstance(nu, GridMeasure):
            nu_term = _circle_grad_cells(nu, xs)
        else:
            nu_term = _circle_grad_atoms(nu.points[:, 0], nu.weights, xs)
        return (nu_term - self_term)[:, None]
    if k.dim == 1 and k.s == -1 and not k.torus and isinstance(nu, ParticleMeasure):
        xs = x[:, 0]
        nu_term = _line_grad_atoms(nu.points[:, 0], nu.weights, xs)
        return (nu_term - _line_grad_atoms(pos[:, 0], w, xs))[:, None]
    mu = ParticleMeasure(pos, w, k.torus)
    return grad_potential(k, nu, x, exclude_coincident=True) - grad_potential(k, mu, x, exclude_coincident=True)


def lagrangian_rhs(k: Kernel, s: FlowState, nu) -> np.ndarray:
    """Velocity of every particle, self-interaction omitted."""
    if s.dim != k.dim or s.torus != k.torus:
        raise DomainMismatch("state and kernel live on different domains")
    _check_collisions(k, s.positions)
    return _velocity(k, s.positions, s.initial_weights, nu, s.positions)


def _derivs(k, s: FlowState, nu):
    dpsi = lagrangian_rhs(k, s, nu)
    if not s.tracks_density:
        return dpsi, None, None
    target = nu_at(nu, s.positions)
    df = s.densities * (target - s.densities)
    dJ = s.jacobians * (s.densities - target)
    return dpsi, df, dJ


def _advance(s: FlowState, dt, d):
    dpsi, df, dJ = d
    pos = s.positions + dt * dpsi
    if s.torus:
        pos = np.mod(pos, 1.0)
    if s.tracks_density:
        return replace(s, positions=pos, densities=s.densities + dt * df, jacobians=s.jacobians + dt * dJ)
    return replace(s, positions=pos)


def step(s: FlowState, k: Kernel, nu, dt: float, sup_dv: float | None = None) -> FlowState:
    """One classical RK4 step of positions, densities and Jacobians.

    If ``sup_dv`` (an estimate of ``|dv|_inf``) is given, ``dt * sup_dv <= 0.5``
    is enforced.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    if sup_dv is not None and dt * sup_dv > 0.5:
        raise CflViolation(f"dt * |dv| = {dt * sup_dv:.3g} exceeds 0.5")
    k1 = _derivs(k, s, nu)
    k2 = _derivs(k, _advance(s, 0.5 * dt, k1), nu)
    k3 = _derivs(k, _advance(s, 0.5 * dt, k2), nu)
    k4 = _derivs(k, _advance(s, dt, k3), nu)

    def comb(i):
        if k1[i] is None:
            return None
        return (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) / 6.0

    out = _advance(s, dt, (comb(0), comb(1), comb(2)))
    out = replace(out, time=s.time + dt)
    bad = not np.all(np.isfinite(out.positions))
    if out.tracks_density:
        bad |= not (np.all(np.isfinite(out.densities)) and np.all(np.isfinite(out.jacobians)))
        bad |= bool(np.any(out.densities <= 0) or np.any(out.jacobians <= 0))
    if bad:
        raise BlowupDetected(f"state became non-finite or non-positive at t={out.time:.6g}")
    return out


# --- diagnostics -----------------------------------------------------------------


def state_energy(k: Kernel, s: FlowState, nu) -> float:
    """MMD energy of the particle state.

    On the circle with a grid target and tracked densities, each particle is
    read as a uniform cell of width ``w_i / f_i`` around its position, so the
    energy is that of a piecewise-constant density.
    """
    if _is_circle(k) and s.tracks_density and isinstance(nu, GridMeasure):
        return tophat_energy_1d(s.positions[:, 0], s.initial_weights / s.densities, s.initial_weights, nu)
    return mmd_energy(k, s.measure(), nu)


def state_report(k: Kernel, s: FlowState, nu, velocity=None) -> EnergyReport:
    if velocity is None:
        velocity = _velocity(k, s.positions, s.initial_weights, nu, s.positions)
    e = state_energy(k, s, nu)
    g2 = float(s.initial_weights @ np.sum(velocity**2, axis=1))
    ratio = g2 / e if e > 0 else float("inf")
    if s.tracks_density:
        lo, hi = float(s.densities.min()), float(s.densities.max())
    else:
        lo = hi = float("nan")
    return EnergyReport(e, g2, ratio, lo, hi, s.time)


def _min_spacing(k, pos):
    if len(pos) < 2:
        return 1.0
    if _is_circle(k):
        p = np.sort(pos[:, 0])
        return float(np.diff(np.concatenate([p, [p[0] + 1.0]])).min())
    tree = cKDTree(np.mod(pos, 1.0) if k.torus else pos, boxsize=1.0 if k.torus else None)
    return float(tree.query(np.mod(pos, 1.0) if k.torus else pos, k=2)[0][:, 1].min())


def _velocity_jacobians(k: Kernel, s: FlowState, nu) -> np.ndarray:
    """Central differences of the velocity around each particle with its own atom removed."""
    pos, w = s.positions, s.initial_weights
    n, d = pos.shape
    if _is_circle(k) and n >= 3:
        # point atoms hide the density between them from sub-spacing probes;
        # difference across neighbours instead
        v = _velocity(k, pos, w, nu, pos)[:, 0]
        order = np.argsort(pos[:, 0])
        x, vs = pos[order, 0], v[order]
        dx = np.mod(np.roll(x, -1) - np.roll(x, 1), 1.0)
        slope = np.empty(n)
        slope[order] = (np.roll(vs, -1) - np.roll(vs, 1)) / dx
        return slope[:, None, None]
    h = 0.5 * _min_spacing(k, pos)
    jac = np.empty((n, d, d))
    for a in range(d):
        e = np.zeros(d)
        e[a] = h
        vp = _velocity(k, pos, w, nu, pos + e)
        vm = _velocity(k, pos, w, nu, pos - e)
        # remove the particle's own atom, which is only skipped when it coincides with the probe
        vp = vp + w[:, None] * _kernel_grad_of_diff(k, e[None, :])
        vm = vm + w[:, None] * _kernel_grad_of_diff(k, -e[None, :])
        jac[:, :, a] = (vp - vm) / (2.0 * h)
    return jac


def _local_stretch(s: FlowState, torus: bool):
    """Per-particle estimate of ``|d psi|`` from label neighbours."""
    n, d = s.labels.shape
    if n < 2:
        return np.ones(n)
    kq = min(n - 1, 2 * d)
    tree = cKDTree(s.labels, boxsize=1.0 if torus else None)
    dl, idx = tree.query(s.labels, k=kq + 1)
    dl, idx = dl[:, 1:], idx[:, 1:]
    dp = s.positions[idx] - s.positions[:, None, :]
    if torus:
        dp = wrap_difference(dp)
    ratio = np.linalg.norm(dp, axis=-1) / dl
    return ratio.max(axis=1)


def regularity_monitor(k: Kernel, s: FlowState, nu, gamma: float = 0.5, velocity=None) -> RegularityMonitor:
    jac = _velocity_jacobians(k, s, nu)
    norms = np.linalg.norm(jac, ord=2, axis=(1, 2))
    if velocity is None:
        velocity = _velocity(k, s.positions, s.initial_weights, nu, s.positions)
    stretch = s.jacobians if (s.tracks_density and s.dim == 1) else _local_stretch(s, s.torus)
    mon = RegularityMonitor(
        sup_dv=float(norms.max()),
        holder_dv=scattered_holder_seminorm(s.positions, jac, gamma, torus=s.torus),
        sup_dpsi=float(np.max(stretch)),
        holder_dpsi=scattered_holder_seminorm(s.labels, stretch, gamma, torus=s.torus),
        support_radius=float("nan") if s.torus else support_radius(s.measure()),
        gamma=gamma,
        sup_v=float(np.max(np.linalg.norm(velocity, axis=1))),
        holder_mu=(
            scattered_holder_seminorm(s.positions, s.densities, gamma, torus=s.torus)
            if s.tracks_density
            else float("nan")
        ),
    )
    mon.check_finite()
    return mon


def density_on_grid(s: FlowState, grid: GridMeasure) -> GridMeasure:
    """Push-forward density of a circle state, interpolated from particle values onto ``grid``."""
    if not (s.torus and s.dim == 1 and s.tracks_density):
        raise DomainMismatch("density_on_grid needs a circle state with tracked densities")
    order = np.argsort(s.positions[:, 0])
    p, f = s.positions[order, 0], s.densities[order]
    x = grid.centers()[:, 0]
    return grid.with_values(np.interp(x, p, f, period=1.0), signed=False)


# --- Eulerian scheme on the torus ------------------------------------------------


def _interp(values, coords, order):
    return ndimage.map_coordinates(values, coords, order=order, mode="grid-wrap", prefilter=order > 1)


def _departure_coords(grid: GridMeasure, disp):
    """Index coordinates of ``center - disp`` for a displacement field of shape ``shape + (d,)``."""
    idx = np.meshgrid(*[np.arange(n, dtype=float) for n in grid.shape], indexing="ij")
    return [idx[a] - disp[..., a] / grid.spacing[a] for a in range(grid.dim)]


def eulerian_step_torus(mu: GridMeasure, nu: GridMeasure, k: Kernel, dt: float, order: int = 1) -> GridMeasure:
    """Semi-Lagrangian step of the continuity equation with velocity ``grad phi``.

    Characteristics are traced back with a predictor-corrector (trapezoidal)
    rule; ``log mu`` is interpolated at departure points (``order=1``
    multilinear, ``order=3`` cubic spline) and updated by the trapezoidal
    rule for ``d log mu / dt = nu - mu``.  Mass is renormalized afterwards.
    """
    if not k.torus:
        raise DomainMismatch("eulerian_step_torus needs a torus kernel")
    if np.any(mu.values <= 0):
        raise ZeroDensityCell("mu must be strictly positive")
    if abs(mu.mass - nu.mass) > 1e-9 * max(1.0, nu.mass):
        raise NonzeroMean(f"mass(mu) - mass(nu) = {mu.mass - nu.mass:.3e}")
    logmu = np.log(mu.values)
    v0 = velocity_grid(k, mu, nu)

    def transport(v_arrival):
        # departure point X = x - dt/2 (v_n(X) + v_arrival(x))
        coords = _departure_coords(mu, dt * v_arrival)
        v_dep = np.stack([_interp(v0[..., a], coords, order) for a in range(mu.dim)], axis=-1)
        coords = _departure_coords(mu, 0.5 * dt * (v_dep + v_arrival))
        return coords

    # predictor with the current field
    coords = transport(v0)
    lm_dep = _interp(logmu, coords, order)
    nu_dep = _interp(nu.values, coords, order)
    src_dep = nu_dep - np.exp(lm_dep)
    pred = np.exp(lm_dep + dt * src_dep)
    pred *= mu.mass / (pred.sum() * mu.cell_volume)
    mu_pred = mu.with_values(pred)
    # corrector with the predicted field at the arrival time
    v1 = velocity_grid(k, mu_pred, nu)
    coords = transport(v1)
    lm_dep = _interp(logmu, coords, order)
    nu_dep = _interp(nu.values, coords, order)
    src_dep = nu_dep - np.exp(lm_dep)
    src_arr = nu.values - pred
    new = np.exp(lm_dep + 0.5 * dt * (src_dep + src_arr))
    factor = mu.mass / (new.sum() * mu.cell_volume)
    log.debug("mass renormalization factor %.12f", factor)
    if abs(factor - 1.0) > 1e-4:
        raise MassDriftExceeded(f"renormalization factor {factor:.6f} outside 1 +- 1e-4")
    return mu.with_values(new * factor)


# --- driver ------------------------------------------------------------------------


@dataclass
class FlowConfig:
    kernel: Kernel
    nu: object
    init: object  # FlowState (lagrangian) or GridMeasure (eulerian)
    dt: float
    t_end: float
    record_every: int = 1
    gamma: float = 0.5
    scheme: str = "lagrangian"
    order: int = 1
    monitor: bool = True


@dataclass
class TrajectoryRecord:
    t: float
    state: object
    report: EnergyReport
    monitor: RegularityMonitor | None


@dataclass
class Trajectory:
    records: list = field(default_factory=list)
    error: RieszFlowError | None = None

    def __len__(self):
        return len(self.records)

    @property
    def times(self) -> np.ndarray:
        return np.array([r.t for r in self.records])

    @property
    def energies(self) -> np.ndarray:
        return np.array([r.report.energy for r in self.records])

    @property
    def final_state(self):
        return self.records[-1].state if self.records else None

    def rows(self):
        for r in self.records:
            m = r.monitor
            yield {
                "t": r.t,
                "energy": r.report.energy,
                "grad_norm_sq": r.report.grad_norm_sq,
                "pl_ratio": r.report.pl_ratio,
                "min_f": r.report.min_density,
                "max_f": r.report.max_density,
                "sup_dv": m.sup_dv if m else float("nan"),
                "holder_mu": m.holder_mu if m else float("nan"),
                "support_radius": m.support_radius if m else float("nan"),
            }

    def to_csv(self, path) -> None:
        cols = ["t", "energy", "grad_norm_sq", "pl_ratio", "min_f", "max_f", "sup_dv", "holder_mu", "support_radius"]
        try:
            with open(path, "w", newline="") as fh:
                wr = csv.writer(fh)
                wr.writerow(cols)
                for row in self.rows():
                    wr.writerow([repr(float(row[c])) for c in cols])
        except OSError as exc:
            raise IoError(str(exc)) from exc


def _eulerian_monitor(mu: GridMeasure, k, nu, gamma):
    v = velocity_grid(k, mu, nu)
    jac = np.empty(mu.shape + (mu.dim, mu.dim))
    for a in range(mu.dim):
        for b in range(mu.dim):
            jac[..., a, b] = (np.roll(v[..., a], -1, axis=b) - np.roll(v[..., a], 1, axis=b)) / (2 * mu.spacing[b])
    norms = np.linalg.norm(jac.reshape(-1, mu.dim, mu.dim), ord=2, axis=(1, 2))
    dv = mu.with_values(norms.reshape(mu.shape), signed=True)
    return RegularityMonitor(
        sup_dv=float(norms.max()),
        holder_dv=holder_seminorm(dv, gamma),
        sup_dpsi=float("nan"),
        holder_dpsi=float("nan"),
        support_radius=float("nan"),
        gamma=gamma,
        sup_v=float(np.max(np.linalg.norm(v, axis=-1))),
        holder_mu=holder_seminorm(mu, gamma),
    )


def run_flow(cfg: FlowConfig, progress=None) -> Trajectory:
    """Integrate to ``t_end`` and record diagnostics every ``record_every`` steps.

    A collision, blow-up or mass-drift abort ends the run early; the
    trajectory keeps every record up to the last valid state and stores the
    exception in ``error``.
    """
    k, nu, dt = cfg.kernel, cfg.nu, cfg.dt
    n_steps = int(round(cfg.t_end / dt))
    traj = Trajectory()
    state = cfg.init
    sup_dv = None

    def record(st, t):
        nonlocal sup_dv
        if cfg.scheme == "eulerian":
            rep = pl_report(k, st, nu, t=t)
            mon = _eulerian_monitor(st, k, nu, cfg.gamma) if cfg.monitor else None
        else:
            vel = _velocity(k, st.positions, st.initial_weights, nu, st.positions)
            rep = state_report(k, st, nu, velocity=vel)
            mon = regularity_monitor(k, st, nu, cfg.gamma, velocity=vel) if cfg.monitor else None
        if mon is not None:
            sup_dv = mon.sup_dv
        if not np.isfinite(rep.energy):
            raise BlowupDetected(f"energy became non-finite at t={t}")
        traj.records.append(TrajectoryRecord(t, st, rep, mon))
        if progress:
            progress(traj.records[-1])

    try:
        record(state, 0.0)
        for i in range(1, n_steps + 1):
            if cfg.scheme == "eulerian":
                state = eulerian_step_torus(state, nu, k, dt, order=cfg.order)
                t = i * dt
            else:
                state = step(state, k, nu, dt, sup_dv=sup_dv)
                state = replace(state, time=i * dt)
                t = state.time
            if i % cfg.record_every == 0 or i == n_steps:
                record(state, t)
    except (ParticleCollision, BlowupDetected, MassDriftExceeded, CflViolation) as exc:
        log.warning("run aborted: %s", exc)
        traj.error = exc
    return traj


def confinement_check(traj: Trajectory, C: float | None = None) -> dict:
    """Fit the support radius against time and test ``R(t) <= R_0 + C t``.

    Without an explicit ``C`` the bound uses the largest particle speed seen
    along the run, which dominates the growth rate of the support radius.
    """
    t = traj.times
    R = np.array([r.monitor.support_radius for r in traj.records])
    if np.any(~np.isfinite(R)):
        raise DomainMismatch("confinement_check needs a Euclidean run with monitors")
    if C is None:
        C = float(max(r.monitor.sup_v for r in traj.records))
    slope = float(np.polyfit(t, R, 1)[0]) if len(t) > 1 else 0.0
    bound = R[0] + C * (t - t[0])
    violations = [float(ti) for ti, ri, bi in zip(t, R, bound) if ri > bi + 1e-12]
    return {
        "slope": slope,
        "C": C,
        "R0": float(R[0]),
        "ok": not violations and slope <= C + 1e-12,
        "violations": violations,
        "nondecreasing": bool(np.all(np.diff(R) >= -1e-12)),
    }
