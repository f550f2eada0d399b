"""Optimal transport between particle clouds and minimizing-movement steps."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.optimize import linear_sum_assignment, linprog, minimize
from scipy.special import logsumexp

from .dynamics import _velocity
from .energy import mmd_energy
from .errors import LineSearchFailure, MassMismatch, NonConvergence, SizeExceeded
from .kernels import Kernel, wrap_difference
from .measures import ParticleMeasure

__all__ = ["TransportPlan", "JkoResult", "cost_matrix", "w2_exact", "w2_entropic", "jko_step", "stationarity_probe"]

MAX_ENTRIES = 4_000_000

log = logging.getLogger(__name__)


@dataclass
class TransportPlan:
    """Sparse coupling: mass ``mass[k]`` moves from ``src[k]`` to ``dst[k]``."""

    src: np.ndarray
    dst: np.ndarray
    mass: np.ndarray
    cost: float
    shape: tuple

    def dense(self) -> np.ndarray:
        out = np.zeros(self.shape)
        np.add.at(out, (self.src, self.dst), self.mass)
        return out

    def marginals(self):
        a = np.bincount(self.src, weights=self.mass, minlength=self.shape[0])
        b = np.bincount(self.dst, weights=self.mass, minlength=self.shape[1])
        return a, b

    @property
    def w2(self) -> float:
        return float(np.sqrt(max(self.cost, 0.0)))


def cost_matrix(x, y, torus=False) -> np.ndarray:
    diff = np.asarray(x, float)[:, None, :] - np.asarray(y, float)[None, :, :]
    if torus:
        diff = wrap_difference(diff)
    return np.einsum("ijk,ijk->ij", diff, diff)


def _check(mu: ParticleMeasure, nu: ParticleMeasure):
    if abs(mu.mass - nu.mass) > 1e-9 * max(1.0, mu.mass):
        raise MassMismatch(f"masses differ: {mu.mass} vs {nu.mass}")
    if len(mu) * len(nu) > MAX_ENTRIES:
        raise SizeExceeded(f"{len(mu)} x {len(nu)} cost matrix exceeds {MAX_ENTRIES} entries")


def w2_exact(mu: ParticleMeasure, nu: ParticleMeasure) -> TransportPlan:
    """Optimal plan for the squared distance; ``cost`` is ``W_2^2``.

    Equal-size clouds with equal weights reduce to an assignment problem;
    everything else is solved as a transportation LP with HiGHS.
    """
    _check(mu, nu)
    C = cost_matrix(mu.points, nu.points, mu.torus)
    n, m = C.shape
    a, b = np.asarray(mu.weights), np.asarray(nu.weights)
    if n == m and np.ptp(a) == 0 and np.ptp(b) == 0 and np.allclose(a, b, rtol=1e-12, atol=0):
        rows, cols = linear_sum_assignment(C)
        mass = a[rows]
        return TransportPlan(rows, cols, mass, float(mass @ C[rows, cols]), (n, m))
    # equality constraints: row sums = a, column sums = b (last one redundant)
    rows_op = sparse.kron(sparse.eye(n), np.ones((1, m)), format="csr")
    cols_op = sparse.kron(np.ones((1, n)), sparse.eye(m), format="csr")
    A = sparse.vstack([rows_op, cols_op[:-1]]).tocsr()
    rhs = np.concatenate([a, b[:-1] * (a.sum() / b.sum())])
    res = linprog(C.ravel(), A_eq=A, b_eq=rhs, bounds=(0, None), method="highs")
    if res.status != 0:
        raise NonConvergence(f"transport LP failed: {res.message}")
    x = res.x.reshape(n, m)
    src, dst = np.nonzero(x > 1e-15)
    mass = x[src, dst]
    return TransportPlan(src, dst, mass, float(mass @ C[src, dst]), (n, m))


def _entropic_solve(C, a, b, epsilon, max_iter=5000):
    """Optimal entropic plan and dual value ``OT_eps`` for cost ``C``.

    The target potential ``g`` maximizes ``<b, g> + <a, f(g)>`` where ``f`` is
    the soft c-transform; L-BFGS replaces plain Sinkhorn sweeps, which stall
    when ``epsilon`` is small against the cost range.  ``epsilon`` is reached
    by continuation from the cost scale.  Row marginals are exact.
    """
    loga, logb = np.log(a), np.log(b)

    def logits(g, eps):
        return (g[None, :] - C) / eps + logb[None, :]

    def objective(g, eps):
        K = logits(g, eps)
        lse = logsumexp(K, axis=1, keepdims=True)
        P = np.exp(K - lse + loga[:, None])
        return -(b @ g - eps * (a @ lse[:, 0])), -(b - P.sum(axis=0))

    g = np.zeros(len(b))
    eps = max(epsilon, float(C.max()))
    while True:
        res = minimize(
            objective, g, args=(eps,), jac=True, method="L-BFGS-B",
            options={"maxiter": max_iter, "gtol": 1e-14, "ftol": 1e-16, "maxcor": 30},
        )
        g = res.x - res.x.mean()
        if eps <= epsilon:
            break
        eps = max(epsilon, eps / 4.0)
    K = logits(g, eps)
    lse = logsumexp(K, axis=1, keepdims=True)
    P = np.exp(K - lse + loga[:, None])
    value = float(b @ g - eps * (a @ lse[:, 0]))
    return P, value


def w2_entropic(
    mu: ParticleMeasure, nu: ParticleMeasure, epsilon: float, max_iter: int = 5000, tol: float = 1e-7
) -> TransportPlan:
    """Entropic plan between ``mu`` and ``nu`` with the debiased cost.

    ``cost`` is the Sinkhorn divergence
    ``OT_eps(mu, nu) - OT_eps(mu, mu) / 2 - OT_eps(nu, nu) / 2``, which
    vanishes for identical clouds and is within ``O(epsilon log n)`` of
    ``W_2^2``.  Raises ``NonConvergence`` when the column marginal is off by
    more than ``10 tol`` (relative to the mass).
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    _check(mu, nu)
    a, b = np.asarray(mu.weights), np.asarray(nu.weights)
    P, v_ab = _entropic_solve(cost_matrix(mu.points, nu.points, mu.torus), a, b, epsilon, max_iter)
    violation = float(np.abs(P.sum(axis=0) - b).sum())
    if violation > tol * max(1.0, mu.mass) * 10:
        raise NonConvergence(f"entropic solve left marginal violation {violation:.2e}")
    _, v_aa = _entropic_solve(cost_matrix(mu.points, mu.points, mu.torus), a, a, epsilon, max_iter)
    _, v_bb = _entropic_solve(cost_matrix(nu.points, nu.points, mu.torus), b, b, epsilon, max_iter)
    src, dst = np.nonzero(P > 0)
    return TransportPlan(src, dst, P[src, dst], v_ab - 0.5 * (v_aa + v_bb), P.shape)


@dataclass
class JkoResult:
    measure: ParticleMeasure
    stationary: bool
    proximal_value: float
    start_value: float
    energy: float
    w2_cost: float
    iterations: int


def jko_step(
    k: Kernel,
    mu: ParticleMeasure,
    nu,
    tau: float,
    solver: str = "exact",
    epsilon: float = 1e-3,
    max_outer: int = 20,
    max_inner: int = 200,
    gtol: float = 1e-8,
    raise_on_failure: bool = False,
) -> JkoResult:
    """Free-support proximal step ``argmin_rho E_nu(rho) + W_2^2(rho, mu) / (2 tau)``.

    Weights stay fixed; positions move by preconditioned gradient descent
    (step ``tau / w_i``) with Armijo backtracking.  The transport term is
    differentiated through a plan that is recomputed between inner solves;
    the entropic solver descends the debiased cost.
    If no decreasing step exists, ``mu`` is returned with ``stationary=True``
    (or ``LineSearchFailure`` is raised when ``raise_on_failure``).
    """
    if not tau > 0:
        raise ValueError("tau must be positive")
    if solver not in ("exact", "entropic"):
        raise ValueError("solver must be 'exact' or 'entropic'")
    w = np.asarray(mu.weights)
    x0 = np.array(mu.points)

    v_mu = None
    if solver == "entropic":
        _, v_mu = _entropic_solve(cost_matrix(x0, x0, mu.torus), w, w, epsilon)

    def bary_of(P, y, x):
        diff = x[None, :, :] - y[:, None, :]
        if mu.torus:
            diff = wrap_difference(diff)
        return y + np.einsum("ij,ijk->ik", P, diff) / w[:, None]

    def transport(y):
        """Transport cost to ``mu`` and the point each particle is pulled towards."""
        if solver == "exact":
            plan = w2_exact(ParticleMeasure(y, w, mu.torus), mu)
            return plan.cost, bary_of(plan.dense(), y, x0)
        # debiased: the self-transport of rho offsets the entropic blur
        P, v_ab = _entropic_solve(cost_matrix(y, x0, mu.torus), w, w, epsilon)
        Q, v_aa = _entropic_solve(cost_matrix(y, y, mu.torus), w, w, epsilon)
        return v_ab - 0.5 * (v_aa + v_mu), bary_of(P, y, x0) + y - bary_of(Q, y, y)

    def velocity(y):
        if mu.torus:
            y = np.mod(y, 1.0)
        return _velocity(k, y, w, nu, y, spectral=True)

    def energy(y):
        return mmd_energy(k, ParticleMeasure(y, w, mu.torus), nu)

    start = energy(x0)
    y = x0.copy()
    iterations = 0
    moved = False
    for _ in range(max_outer):
        cost, bary = transport(y)
        const = cost - float(w @ np.sum((y - bary) ** 2, axis=1))

        def surrogate(z):
            return energy(z) + (float(w @ np.sum((z - bary) ** 2, axis=1)) + const) / (2.0 * tau)

        val = val_outer = surrogate(y)
        changed = False
        n_inner, alpha, gnorm2 = 0, 0.0, 0.0
        for n_inner in range(1, max_inner + 1):
            iterations += 1
            v = velocity(y)
            g = -v + (y - bary) / tau
            gnorm2 = float(w @ np.sum(g * g, axis=1))
            if gnorm2 <= gtol**2 * max(1.0, float(w @ np.sum(v * v, axis=1))):
                break
            alpha = tau
            while alpha > 1e-12 * tau:
                # torus positions stay unwrapped here so that |z - bary| is continuous
                z = y - alpha * g
                try:
                    new = surrogate(z)
                except ArithmeticError:
                    new = np.inf
                if new <= val - 1e-4 * alpha * gnorm2:
                    break
                alpha *= 0.5
            else:
                break
            stalled = val - new <= 1e-15 * abs(val)
            y, val, changed = z, new, True
            if stalled:
                break
        log.debug("jko outer: %d inner steps, surrogate %.15g, last step %.3g tau, |g|^2 %.3g",
                  n_inner, val, alpha / tau, gnorm2)
        moved |= changed
        if not changed or val_outer - val <= 1e-13 * abs(val):
            break
    if not moved:
        if raise_on_failure and not np.allclose(velocity(x0), 0.0):
            raise LineSearchFailure("no decreasing step found")
        return JkoResult(mu, True, start, start, start, 0.0, iterations)
    cost = transport(y)[0]
    e = energy(y)
    if e + cost / (2.0 * tau) > start:
        # the fixed-plan surrogate decreased but the true objective did not
        return JkoResult(mu, True, start, start, start, 0.0, iterations)
    return JkoResult(ParticleMeasure(y, w, mu.torus), False, e + cost / (2.0 * tau), start, e, cost, iterations)


def stationarity_probe(k: Kernel, mu, nu, tau_grid, t_grid=None, t0=None, diagonal="exclude") -> dict:
    """Proximal decrease along the heat-probe curve for each ``tau``.

    ``Delta(tau) = min_t E(mu_t) - E(mu) + d t m / tau`` where the transport
    term is the Gaussian-coupling bound ``W_2^2(mu, mu_t) <= 2 d t m`` with
    ``m = mass(rho)``.  Negative values refute stationarity; the report never
    certifies a critical point, only "no descent found".
    """
    from . import probe

    return probe.proximal_decrease(k, mu, nu, tau_grid, t_grid=t_grid, t0=t0, diagonal=diagonal)
