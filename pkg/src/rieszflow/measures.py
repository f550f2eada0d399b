"""Particle and grid measures, Hahn-Jordan splitting, heat smoothing and local statistics."""

from __future__ import annotations

import csv
import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .errors import (
    DegenerateFit,
    DomainMismatch,
    IoError,
    LatticeMismatch,
    NonpositiveTime,
    TorusUnsupported,
)
from .kernels import BLOCK, HeatKernelSpec, _torus_heat_1d, heat_kernel, wrap_difference

__all__ = [
    "ParticleMeasure",
    "GridMeasure",
    "SignedDecomposition",
    "hahn_jordan",
    "rasterize",
    "heat_smooth",
    "heat_pairing",
    "local_dimension_estimate",
    "holder_seminorm",
    "scattered_holder_seminorm",
    "support_radius",
    "save_particles_csv",
    "load_particles_csv",
    "save_grid",
    "load_grid",
]


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ParticleMeasure:
    """Weighted point cloud ``sum_i w_i delta_{x_i}``.

    Torus points are reduced to ``[0, 1)^d`` on construction.  Arrays are
    read-only; build a new measure instead of mutating one.
    """

    points: np.ndarray
    weights: np.ndarray
    torus: bool = False
    mass: float = field(init=False)

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        w = np.array(self.weights, dtype=float).reshape(-1)
        if len(w) != len(pts):
            raise ValueError(f"{len(pts)} points but {len(w)} weights")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("particle weights must be finite and >= 0")
        if self.torus:
            pts = pts - np.floor(pts)
            pts[pts >= 1.0] = 0.0
        object.__setattr__(self, "points", _frozen(pts))
        object.__setattr__(self, "weights", _frozen(w))
        object.__setattr__(self, "mass", float(np.sum(w)))

    @classmethod
    def uniform(cls, points, torus=False, mass=1.0):
        points = np.asarray(points, dtype=float)
        if points.ndim == 1:
            points = points[:, None]
        n = len(points)
        return cls(points, np.full(n, mass / n), torus=torus)

    @classmethod
    def empty(cls, dim, torus=False):
        return cls(np.zeros((0, dim)), np.zeros(0), torus=torus)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def domain(self) -> str:
        return "torus" if self.torus else "euclidean"

    def __len__(self):
        return len(self.weights)

    def scaled(self, c: float) -> "ParticleMeasure":
        return ParticleMeasure(self.points, self.weights * c, torus=self.torus)

    def restrict(self, mask) -> "ParticleMeasure":
        mask = np.asarray(mask, dtype=bool)
        return ParticleMeasure(self.points[mask], self.weights[mask], torus=self.torus)


@dataclass(frozen=True, eq=False)
class GridMeasure:
    """Cell-wise density on a regular lattice.

    On the torus the lattice covers ``[0, 1)^d`` with cell centers at
    ``(i + 1/2) / n``.  Euclidean grids cover the box starting at ``lower``.
    ``values`` is a density with respect to volume; ``signed=True`` lifts the
    nonnegativity check (potentials, differences).
    """

    values: np.ndarray
    spacing: tuple
    lower: tuple
    torus: bool = True
    signed: bool = False

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        spacing = tuple(float(h) for h in np.broadcast_to(self.spacing, (v.ndim,)))
        lower = tuple(float(a) for a in np.broadcast_to(self.lower, (v.ndim,)))
        if any(h <= 0 for h in spacing):
            raise ValueError("cell spacing must be positive")
        if not self.signed and np.any(v < 0):
            raise ValueError("grid densities must be >= 0 (pass signed=True for signed data)")
        if not np.all(np.isfinite(v)):
            raise ValueError("grid values must be finite")
        object.__setattr__(self, "values", _frozen(v))
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "lower", lower)

    @classmethod
    def on_torus(cls, values, signed=False):
        v = np.asarray(values, dtype=float)
        return cls(v, tuple(1.0 / n for n in v.shape), (0.0,) * v.ndim, torus=True, signed=signed)

    @classmethod
    def on_box(cls, values, lower, upper, signed=False):
        v = np.asarray(values, dtype=float)
        lower = np.broadcast_to(np.asarray(lower, float), (v.ndim,))
        upper = np.broadcast_to(np.asarray(upper, float), (v.ndim,))
        spacing = (upper - lower) / np.array(v.shape)
        return cls(v, tuple(spacing), tuple(lower), torus=False, signed=signed)

    @classmethod
    def from_function(cls, func, shape, torus=True, lower=0.0, upper=1.0, normalize=True):
        """Sample ``func`` at cell centers; optionally rescale to unit mass."""
        shape = tuple(np.atleast_1d(shape))
        if torus:
            g = cls.on_torus(np.zeros(shape), signed=True)
        else:
            g = cls.on_box(np.zeros(shape), lower, upper, signed=True)
        vals = np.asarray(func(g.centers()), dtype=float).reshape(shape)
        if normalize:
            vals = vals / (vals.sum() * g.cell_volume)
        return cls(vals, g.spacing, g.lower, torus=torus)

    @property
    def shape(self):
        return self.values.shape

    @property
    def dim(self) -> int:
        return self.values.ndim

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def mass(self) -> float:
        return float(self.values.sum() * self.cell_volume)

    @property
    def domain(self) -> str:
        return "torus" if self.torus else "euclidean"

    def centers(self) -> np.ndarray:
        """Cell centers as an array of shape ``shape + (d,)``."""
        axes = [a + (np.arange(n) + 0.5) * h for a, n, h in zip(self.lower, self.shape, self.spacing)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def atoms(self):
        """Cells as (centers, masses) flattened in row-major order."""
        return self.centers().reshape(-1, self.dim), self.values.reshape(-1) * self.cell_volume

    def same_lattice(self, other) -> bool:
        return (
            isinstance(other, GridMeasure)
            and self.shape == other.shape
            and self.torus == other.torus
            and np.allclose(self.spacing, other.spacing, rtol=1e-12, atol=0)
            and np.allclose(self.lower, other.lower, rtol=0, atol=1e-12)
        )

    def with_values(self, values, signed=None) -> "GridMeasure":
        return GridMeasure(
            values, self.spacing, self.lower, torus=self.torus,
            signed=self.signed if signed is None else signed,
        )


@dataclass(frozen=True)
class SignedDecomposition:
    plus: object
    minus: object

    @property
    def mass(self) -> float:
        return self.plus.mass


def atoms_of(m):
    """(points, masses) view of any measure."""
    if isinstance(m, ParticleMeasure):
        return np.asarray(m.points), np.asarray(m.weights)
    return m.atoms()


def rasterize(mu: ParticleMeasure, grid: GridMeasure) -> GridMeasure:
    """Deposit particle masses into the containing cell of ``grid``'s lattice."""
    if mu.dim != grid.dim or mu.torus != grid.torus:
        raise DomainMismatch("particle measure and grid live on different domains")
    idx = np.floor((mu.points - np.asarray(grid.lower)) / np.asarray(grid.spacing)).astype(int)
    shape = np.asarray(grid.shape)
    if grid.torus:
        idx %= shape
    elif np.any(idx < 0) or np.any(idx >= shape):
        raise DomainMismatch("particles fall outside the grid box")
    vals = np.zeros(grid.shape)
    np.add.at(vals, tuple(idx.T), mu.weights / grid.cell_volume)
    return grid.with_values(vals, signed=False)


def _merge_signed_atoms(points, weights):
    uniq, inv = np.unique(points, axis=0, return_inverse=True)
    w = np.zeros(len(uniq))
    np.add.at(w, inv.reshape(-1), weights)
    return uniq, w


def hahn_jordan(mu, nu) -> SignedDecomposition:
    """Split ``mu - nu`` into mutually singular nonnegative parts ``plus - minus``."""
    if mu.torus != nu.torus or mu.dim != nu.dim:
        raise DomainMismatch("measures live on different domains")
    if isinstance(mu, ParticleMeasure) and isinstance(nu, ParticleMeasure):
        pts = np.concatenate([mu.points, nu.points])
        w = np.concatenate([mu.weights, -nu.weights])
        uniq, merged = _merge_signed_atoms(pts, w)
        pos, neg = merged > 0, merged < 0
        return SignedDecomposition(
            ParticleMeasure(uniq[pos], merged[pos], torus=mu.torus),
            ParticleMeasure(uniq[neg], -merged[neg], torus=mu.torus),
        )
    if isinstance(mu, ParticleMeasure):
        mu = rasterize(mu, nu)
    if isinstance(nu, ParticleMeasure):
        nu = rasterize(nu, mu)
    if not mu.same_lattice(nu):
        raise LatticeMismatch("grid measures must share a lattice")
    diff = mu.values - nu.values
    return SignedDecomposition(
        mu.with_values(np.maximum(diff, 0.0), signed=False),
        mu.with_values(np.maximum(-diff, 0.0), signed=False),
    )


def _sq_or_wrapped(diff, torus):
    return wrap_difference(diff) if torus else diff


def heat_pairing(a_pts, a_w, b_pts, b_w, ts, torus=False, exclude_diagonal=False):
    """``<a, K_t * b>`` for every ``t`` in ``ts`` by direct pair summation.

    With ``exclude_diagonal`` the index pairs ``i == j`` are skipped (``a`` and
    ``b`` must then be the same atom list); this is the unbiased estimate of the
    continuum pairing when the atoms are samples of a diffuse measure.
    """
    ts = np.atleast_1d(np.asarray(ts, dtype=float))
    if np.any(ts <= 0):
        raise NonpositiveTime("heat times must be positive")
    a_pts = np.asarray(a_pts, float)
    b_pts = np.asarray(b_pts, float)
    d = a_pts.shape[1]
    out = np.zeros(len(ts))
    if len(a_pts) == 0 or len(b_pts) == 0:
        return out
    step = max(1, BLOCK // len(b_pts))
    for start in range(0, len(a_pts), step):
        diff = a_pts[start : start + step, None, :] - b_pts[None, :, :]
        if torus:
            diff = wrap_difference(diff)
        else:
            r2 = np.einsum("ijk,ijk->ij", diff, diff)
        wa = a_w[start : start + step]
        for n, t in enumerate(ts):
            if torus:
                K = np.prod(_torus_heat_1d(t, diff), axis=-1)
            else:
                K = (4.0 * np.pi * t) ** (-d / 2) * np.exp(-r2 / (4.0 * t))
            if exclude_diagonal:
                rows = np.arange(K.shape[0])
                K[rows, start + rows] = 0.0
            out[n] += wa @ (K @ b_w)
    return out


def heat_smooth(rho, t: float, x) -> float | np.ndarray:
    """``(K_t * rho)(x)``: exact atom sum for particles, midpoint quadrature for grids."""
    if not t > 0:
        raise NonpositiveTime(f"t must be positive, got {t}")
    pts, w = atoms_of(rho)
    x = np.asarray(x, dtype=float)
    if x.ndim == 0 or (x.ndim == 1 and rho.dim > 1):
        x = x.reshape(-1, rho.dim) if x.ndim else x.reshape(1, 1)
        squeeze = True
    else:
        squeeze = False
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[-1] != rho.dim:
        raise DomainMismatch("evaluation points have the wrong dimension")
    flat = x.reshape(-1, rho.dim)
    spec = HeatKernelSpec(rho.dim, torus=rho.torus)
    out = np.empty(len(flat))
    step = max(1, BLOCK // max(len(pts), 1))
    for a in range(0, len(flat), step):
        K = heat_kernel(spec, t, flat[a : a + step, None, :], pts[None, :, :])
        out[a : a + step] = np.asarray(K).reshape(-1, len(pts)) @ w
    if squeeze:
        return float(out[0]) if out.size == 1 else out
    return out.reshape(x.shape[:-1])


def local_dimension_estimate(mu: ParticleMeasure, x, t_grid) -> float:
    """Heat-kernel estimate of the local dimension of ``mu`` at ``x``.

    Fits ``log (K_t * mu)(x) = beta log t + c`` by least squares and returns
    ``d + 2 beta``, since ``K_t * mu(x)`` scales like ``t^{-(d - q)/2}`` for
    a measure of local dimension ``q``.
    """
    t_grid = np.sort(np.asarray(t_grid, dtype=float))
    if len(t_grid) < 4 or np.any(t_grid <= 0) or t_grid[-1] / t_grid[0] < 100.0:
        raise ValueError("t_grid needs >= 4 positive times spanning at least two decades")
    x = np.asarray(x, dtype=float).reshape(1, -1)
    vals = np.array([heat_smooth(mu, t, x)[0] for t in t_grid])
    if np.any(~np.isfinite(vals)) or np.any(vals <= 0):
        raise DegenerateFit("heat-smoothed density vanishes on part of the t grid")
    beta = np.polyfit(np.log(t_grid), np.log(vals), 1)[0]
    return float(mu.dim + 2.0 * beta)


def _offsets(d, max_l1):
    rng = range(-max_l1, max_l1 + 1)
    for o in itertools.product(rng, repeat=d):
        if 0 < sum(abs(c) for c in o) <= max_l1:
            first = next(c for c in o if c != 0)
            if first > 0:
                yield o


def holder_seminorm(f: GridMeasure, gamma: float, max_offset: int = 8) -> float:
    """Largest ``|f(x) - f(y)| / |x - y|^gamma`` over lattice pairs within ``max_offset`` graph steps."""
    if not 0 < gamma <= 1:
        raise ValueError("gamma must lie in (0, 1]")
    v = f.values
    h = np.asarray(f.spacing)
    best = 0.0
    for o in _offsets(f.dim, max_offset):
        dist = float(np.linalg.norm(np.asarray(o) * h))
        if f.torus:
            diff = v - np.roll(v, shift=o, axis=tuple(range(f.dim)))
        else:
            if any(abs(c) >= n for c, n in zip(o, v.shape)):
                continue
            src = tuple(slice(max(c, 0), n + min(c, 0)) for c, n in zip(o, v.shape))
            dst = tuple(slice(max(-c, 0), n + min(-c, 0)) for c, n in zip(o, v.shape))
            diff = v[src] - v[dst]
        best = max(best, float(np.max(np.abs(diff))) / dist**gamma)
    return best


def scattered_holder_seminorm(points, values, gamma, neighbours=None, torus=False) -> float:
    """Hoelder quotient over nearest-neighbour pairs of a scattered sample.

    ``values`` may carry trailing axes (matrices per point); the difference is
    measured in the Frobenius norm.
    """
    points = np.asarray(points, float)
    values = np.asarray(values, float).reshape(len(points), -1)
    if len(points) < 2:
        return 0.0
    k = min(len(points) - 1, neighbours or 2 * points.shape[1])
    tree = cKDTree(points, boxsize=1.0 if torus else None)
    dist, idx = tree.query(points, k=k + 1)
    dist, idx = dist[:, 1:], idx[:, 1:]
    ok = dist > 0
    diff = np.linalg.norm(values[:, None, :] - values[idx], axis=-1)
    q = np.where(ok, diff / np.where(ok, dist, 1.0) ** gamma, 0.0)
    return float(q.max())


def support_radius(mu: ParticleMeasure) -> float:
    if mu.torus:
        raise TorusUnsupported("support radius is only defined on R^d")
    if len(mu) == 0:
        raise ValueError("empty measure")
    return float(np.sqrt(np.max(np.sum(mu.points**2, axis=1))))


# --- persistence ---------------------------------------------------------


def save_particles_csv(mu: ParticleMeasure, path) -> None:
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"x_{i + 1}" for i in range(mu.dim)] + ["w"])
            for p, m in zip(mu.points, mu.weights):
                w.writerow([repr(float(c)) for c in p] + [repr(float(m))])
    except OSError as exc:
        raise IoError(str(exc)) from exc


def load_particles_csv(path, torus=False) -> ParticleMeasure:
    try:
        with Path(path).open(newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise IoError(str(exc)) from exc
    header, body = rows[0], rows[1:]
    if not header or header[-1] != "w" or any(h != f"x_{i + 1}" for i, h in enumerate(header[:-1])):
        raise IoError(f"unexpected particle CSV header {header}")
    data = np.array(body, dtype=float).reshape(-1, len(header))
    return ParticleMeasure(data[:, :-1], data[:, -1], torus=torus)


def save_grid(g: GridMeasure, path) -> None:
    """Row-major float64 values at ``path`` plus a JSON sidecar ``path + '.json'``."""
    path = Path(path)
    meta = {
        "shape": list(g.shape),
        "cell_volume": g.cell_volume,
        "domain": f"{g.domain} {g.dim}",
        "spacing": list(g.spacing),
        "lower": list(g.lower),
        "signed": g.signed,
    }
    try:
        np.ascontiguousarray(g.values, dtype="<f8").tofile(path)
        Path(str(path) + ".json").write_text(json.dumps(meta, indent=1))
    except OSError as exc:
        raise IoError(str(exc)) from exc


def load_grid(path) -> GridMeasure:
    path = Path(path)
    try:
        meta = json.loads(Path(str(path) + ".json").read_text())
        vals = np.fromfile(path, dtype="<f8")
    except (OSError, ValueError) as exc:
        raise IoError(str(exc)) from exc
    shape = tuple(meta["shape"])
    if vals.size != math.prod(shape):
        raise IoError(f"{path}: {vals.size} values for shape {shape}")
    kind = meta["domain"].split()[0]
    spacing = meta.get("spacing")
    if spacing is None:
        if kind != "torus":
            raise IoError("euclidean grids need 'spacing' in the sidecar")
        spacing = [1.0 / n for n in shape]
    return GridMeasure(
        vals.reshape(shape), tuple(spacing), tuple(meta.get("lower", [0.0] * len(shape))),
        torus=(kind == "torus"), signed=meta.get("signed", False),
    )
