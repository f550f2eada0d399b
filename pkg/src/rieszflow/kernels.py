"""Riesz-family interaction kernels, the flat-torus Green function and heat kernels.

Kernels are evaluated pointwise with broadcasting over leading axes: ``x`` and
``y`` are arrays of shape ``(..., d)``.  Gradients are always taken in the
first argument.

Conventions
-----------
* Euclidean Riesz kernel ``k_s(x, y) = 1 / (s |x - y|^s)`` for ``s != 0`` and
  ``-log |x - y|`` for ``s = 0``.  ``s = -1`` is the energy distance
  ``-|x - y|`` and ``s = d - 2`` the Coulomb kernel.
* The torus ``T^d = [0, 1)^d`` carries the zero-mean Green function with
  Fourier multiplier ``+1 / (4 pi^2 |k|^2)``, i.e. ``-Laplace G = delta - 1``.
  This is the positive-definite sign, so MMD energies are nonnegative.
* Heat kernels solve ``d_t K = Laplace K`` (no factor 1/2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.special import gamma as gamma_fn

from .errors import DiagonalSingularity, DomainMismatch, NonpositiveTime, TruncationTooSmall

__all__ = [
    "Kernel",
    "HeatKernelSpec",
    "eval_kernel",
    "grad_kernel",
    "torus_green",
    "torus_green_grad",
    "heat_kernel",
    "riesz_potential_moment",
    "coulomb_constant",
    "sphere_area",
    "wrap_difference",
]

# pairs processed per block in dense sums; fixed so reductions are bit-stable
BLOCK = 1 << 20


@dataclass(frozen=True)
class Kernel:
    """Kernel descriptor.

    Use the constructors :meth:`riesz`, :meth:`coulomb`,
    :meth:`energy_distance` and :meth:`log` rather than the raw fields.
    """

    s: float
    dim: int
    torus: bool = False
    fourier_truncation: int = 64
    name: str = "riesz"

    def __post_init__(self):
        if self.dim < 1:
            raise DomainMismatch(f"dimension must be >= 1, got {self.dim}")
        if self.torus:
            if self.name != "coulomb":
                raise DomainMismatch("only the Coulomb (Green) kernel is defined on the torus")
            if self.fourier_truncation < 1:
                raise TruncationTooSmall(f"fourier_truncation={self.fourier_truncation} < 1")
            return
        if self.name == "log":
            if self.s != 0:
                raise ValueError("log kernel has s = 0")
            return
        if self.s == 0:
            raise ValueError("s = 0 is the log kernel; use Kernel.log")
        if not (-1 <= self.s <= self.dim - 2):
            raise ValueError(
                f"Riesz exponent s={self.s} outside the admissible range [-1, {self.dim - 2}]"
            )

    @classmethod
    def riesz(cls, s: float, dim: int) -> "Kernel":
        if s == 0:
            return cls.log(dim)
        name = "energy_distance" if s == -1 else ("coulomb" if s == dim - 2 else "riesz")
        return cls(s=float(s), dim=dim, name=name)

    @classmethod
    def coulomb(cls, dim: int, torus: bool = False, fourier_truncation: int = 64) -> "Kernel":
        """Coulomb kernel of ``R^dim`` (energy distance for d=1, log for d=2), or the torus Green function."""
        s = float(dim - 2)
        if torus:
            return cls(s=s, dim=dim, torus=True, fourier_truncation=fourier_truncation, name="coulomb")
        if dim == 2:
            return cls(s=0.0, dim=2, name="log")
        if dim == 1:
            return cls(s=-1.0, dim=1, name="energy_distance")
        return cls(s=s, dim=dim, name="coulomb")

    @classmethod
    def energy_distance(cls, dim: int) -> "Kernel":
        return cls(s=-1.0, dim=dim, name="energy_distance")

    @classmethod
    def log(cls, dim: int) -> "Kernel":
        return cls(s=0.0, dim=dim, name="log")

    @property
    def family(self) -> str:
        return "green" if self.torus else self.name

    @property
    def singular(self) -> bool:
        """True when the kernel is unbounded on the diagonal."""
        if self.torus:
            return self.dim >= 2
        return self.s >= 0

    @property
    def domain(self) -> str:
        return "torus" if self.torus else "euclidean"

    @cached_property
    def _modes(self):
        # half-space of nonzero transverse frequencies (d-1 axes, |k|_inf <= N) and their norms
        n, m = self.fourier_truncation, self.dim - 1
        k = np.stack(np.meshgrid(*[np.arange(-n, n + 1)] * m, indexing="ij"), axis=-1).reshape(-1, m)
        first_nonzero = np.argmax(k != 0, axis=1)
        k = k[k[np.arange(len(k)), first_nonzero] > 0].astype(float)
        return k, np.sqrt(np.sum(k * k, axis=1))

    def describe(self) -> str:
        if self.torus:
            return f"green(torus {self.dim})"
        if self.name in ("energy_distance", "log"):
            return f"{self.name}(R^{self.dim})"
        return f"riesz(s={self.s:g}, R^{self.dim})"


@dataclass(frozen=True)
class HeatKernelSpec:
    dim: int
    torus: bool = False
    periodization_terms: int | None = None

    def __post_init__(self):
        if self.periodization_terms is not None and self.periodization_terms < 1:
            raise ValueError("periodization_terms must be >= 1")


def sphere_area(d: int) -> float:
    """Surface measure of the unit sphere in R^d (omega_{d-1})."""
    return 2.0 * math.pi ** (d / 2) / gamma_fn(d / 2)


def coulomb_constant(k: Kernel) -> float:
    """Positive constant ``c_d`` with ``-Laplace G = c_d delta`` (minus the mean on the torus)."""
    if k.torus:
        return 1.0
    if k.s != k.dim - 2:
        raise ValueError(f"{k.describe()} is not the Coulomb kernel of its dimension")
    return sphere_area(k.dim)


def _as_points(k_dim: int, x):
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x.reshape(1)
    if x.shape[-1] != k_dim:
        raise DomainMismatch(f"point dimension {x.shape[-1]} != kernel dimension {k_dim}")
    return x


def wrap_difference(diff):
    """Map coordinate differences to the fundamental cell [-1/2, 1/2)."""
    return diff - np.floor(diff + 0.5)


def _scalar(v):
    v = np.asarray(v)
    return float(v) if v.ndim == 0 else v


def _line_sums(a, f):
    """``sum_j e^{2 pi i j f} / (j^2 + a^2)`` over all integers and its ``f``-derivative."""
    e0, e1, den = np.exp(-2 * np.pi * a * f), np.exp(-2 * np.pi * a * (1 - f)), -np.expm1(-2 * np.pi * a)
    return np.pi / a * (e0 + e1) / den, -2 * np.pi**2 * (e0 - e1) / den


def _torus_green_series(k: Kernel, u, grad: bool):
    # G is even in every coordinate: evaluate at |u| in [0, 1/2]^d so that G(u) == G(-u) bitwise.
    # Exact sum along the axis farthest from the lattice, truncated sum over the other axes.
    modes, norms = k._modes
    signed = wrap_difference(u.reshape(-1, k.dim))
    flat = frac = np.abs(signed)
    axis = np.argmax(frac, axis=1)
    val = np.empty(len(flat))
    gr = np.empty_like(flat)
    step = max(1, BLOCK // len(modes))
    for j in range(k.dim):
        rows = np.flatnonzero(axis == j)
        perp = [i for i in range(k.dim) if i != j]
        for a in range(0, len(rows), step):
            r = rows[a : a + step]
            f = frac[r, j][:, None]
            s, ds = _line_sums(norms, f)
            phase = 2 * np.pi * flat[r][:, perp] @ modes.T
            c, sn = np.cos(phase), np.sin(phase)
            fj = f[:, 0]
            val[r] = 2 * np.sum(c * s, axis=1) + 2 * np.pi**2 * (fj * fj - fj + 1 / 6)
            if grad:
                gr[r, j] = 2 * np.sum(c * ds, axis=1) + 2 * np.pi**2 * (2 * fj - 1)
                gr[np.ix_(r, perp)] = -2 * (sn * s) @ (2 * np.pi * modes)
    scale = 1 / (4 * np.pi**2)
    if grad:
        return (np.sign(signed) * gr * scale).reshape(u.shape)
    return _scalar((val * scale).reshape(u.shape[:-1]))


def torus_green(k: Kernel, u) -> float | np.ndarray:
    """Zero-mean Green function of the flat torus at coordinate difference ``u``.

    d=1 uses the closed form ``f^2/2 - f/2 + 1/12`` with ``f = |u|`` reduced to [0, 1/2].
    For d>=2 the lattice sum is done in closed form along the coordinate axis
    farthest from the lattice and truncated at ``|k|_inf <= N`` over the other
    axes, whose terms then decay exponentially.
    """
    if not k.torus:
        raise DomainMismatch("torus_green needs a torus kernel")
    if k.fourier_truncation < 1:
        raise TruncationTooSmall("fourier truncation must be >= 1")
    u = _as_points(k.dim, u)
    if k.dim == 1:
        f = np.abs(wrap_difference(u[..., 0]))
        return _scalar(0.5 * f * f - 0.5 * f + 1.0 / 12.0)
    return _torus_green_series(k, u, grad=False)


def torus_green_grad(k: Kernel, u) -> np.ndarray:
    """Gradient of :func:`torus_green` in ``u``; d=1 gives ``frac(u) - 1/2``."""
    u = _as_points(k.dim, u)
    if k.dim == 1:
        w = wrap_difference(u)
        return np.sign(w) * (np.abs(w) - 0.5)
    return _torus_green_series(k, u, grad=True)


def _check_diagonal(k: Kernel, r, what="kernel"):
    if np.any(r == 0):
        raise DiagonalSingularity(f"{what} of {k.describe()} evaluated at coincident points")


def eval_kernel(k: Kernel, x, y) -> float | np.ndarray:
    """Kernel value ``G(x, y)``; broadcasts over leading axes."""
    x = _as_points(k.dim, x)
    y = _as_points(k.dim, y)
    diff = x - y
    if k.torus:
        diff = wrap_difference(diff)
        if k.singular:
            _check_diagonal(k, np.max(np.abs(diff), axis=-1))
        return torus_green(k, diff)
    r = np.sqrt(np.sum(diff * diff, axis=-1))
    if k.singular:
        _check_diagonal(k, r)
    if k.s == 0:
        return _scalar(-np.log(r))
    if k.s == -1:
        return _scalar(-r)
    return _scalar(r ** (-k.s) / k.s)


def grad_kernel(k: Kernel, x, y) -> np.ndarray:
    """Gradient of ``G(x, y)`` with respect to ``x``.

    Every kernel in the family is non-differentiable on the diagonal, so
    ``x == y`` always raises :class:`DiagonalSingularity`.
    """
    x = _as_points(k.dim, x)
    y = _as_points(k.dim, y)
    diff = x - y
    if k.torus:
        diff = wrap_difference(diff)
        _check_diagonal(k, np.max(np.abs(diff), axis=-1), "gradient")
        return torus_green_grad(k, diff)
    r = np.sqrt(np.sum(diff * diff, axis=-1))
    _check_diagonal(k, r, "gradient")
    return -diff * (r ** (-k.s - 2.0))[..., None]


def _periodization_terms(t: float) -> int:
    # Gaussian images beyond distance M - 1/2 contribute less than 1e-14
    return int(math.ceil(0.5 + math.sqrt(4.0 * t * 32.3))) + 1


def heat_kernel(h: HeatKernelSpec, t: float, x, y) -> float | np.ndarray:
    """Heat kernel ``K_t(x, y)`` on ``R^d`` or the flat torus ``T^d``."""
    if not t > 0:
        raise NonpositiveTime(f"t must be positive, got {t}")
    x = _as_points(h.dim, x)
    y = _as_points(h.dim, y)
    diff = x - y
    if not h.torus:
        r2 = np.sum(diff * diff, axis=-1)
        return _scalar((4.0 * np.pi * t) ** (-h.dim / 2) * np.exp(-r2 / (4.0 * t)))
    u = wrap_difference(diff)
    return _scalar(np.prod(_torus_heat_1d(t, u, h.periodization_terms), axis=-1))


def _torus_heat_1d(t, u, terms=None):
    if terms is None and t > 0.25:
        # Fourier side converges after a couple of modes at large times
        kmax = int(math.ceil(math.sqrt(37.0 / (4.0 * np.pi**2 * t)))) + 1
        out = np.ones_like(u)
        for j in range(1, kmax + 1):
            out += 2.0 * np.exp(-4.0 * np.pi**2 * j * j * t) * np.cos(2.0 * np.pi * j * u)
        return out
    m = terms if terms is not None else _periodization_terms(t)
    out = np.zeros_like(u)
    norm = (4.0 * np.pi * t) ** -0.5
    for n in range(-m, m + 1):
        out += np.exp(-((u + n) ** 2) / (4.0 * t))
    return norm * out


def riesz_potential_moment(mu, k_order: int, x) -> float | np.ndarray:
    """``sum_i w_i |x - y_i|^(-k_order)`` for a Euclidean particle measure."""
    points = np.asarray(mu.points)
    d = points.shape[1]
    if k_order < 1 or k_order % 2 == 0 or k_order > d - 2:
        raise ValueError(f"k_order must be odd with 1 <= k_order <= d-2 = {d - 2}")
    x = _as_points(d, x)
    flat = x.reshape(-1, d)
    out = np.empty(len(flat))
    step = max(1, BLOCK // len(points))
    for a in range(0, len(flat), step):
        diff = flat[a : a + step, None, :] - points[None, :, :]
        r = np.sqrt(np.sum(diff * diff, axis=-1))
        if np.any(r == 0):
            raise DiagonalSingularity("evaluation point coincides with a support point")
        out[a : a + step] = (r ** (-float(k_order))) @ mu.weights
    return _scalar(out.reshape(x.shape[:-1]))
