"""Heat-flow probe of a non-minimizing measure.

A uniform measure on the unit sphere against a shell target: the energy
derivative along the probe curve is negative, and its size near t=0 gives
the criticality exponent.
"""

import numpy as np

from rieszflow import Kernel, ParticleMeasure, criticality_exponent, local_dimension_estimate, no_local_min_scan


def main():
    rng = np.random.default_rng(0)
    z = rng.normal(size=(2000, 3))
    sphere = z / np.linalg.norm(z, axis=1, keepdims=True)
    u = rng.normal(size=(2000, 3))
    shell = u / np.linalg.norm(u, axis=1, keepdims=True) * ((8 + rng.random(2000) * 19) ** (1 / 3))[:, None]
    mu, nu = ParticleMeasure.uniform(sphere), ParticleMeasure.uniform(shell)
    k = Kernel.coulomb(3)
    t_grid = np.geomspace(3e-3, 3e-2, 6)
    scan = no_local_min_scan(k, mu, nu, t_grid)
    print(f"scan status: {scan.status}, t* = {scan.t_star:.2e}")
    for t, d in zip(scan.t, scan.derivative):
        print(f"  t={t:.2e}  dE/dt={d:+.4e}")
    ex = criticality_exponent(k, mu, nu, t_grid)
    print(f"criticality exponent {ex.delta_hat:.3f}, local dimension {ex.q_hat:.2f}")
    z = rng.normal(size=(20000, 3))
    dense = ParticleMeasure.uniform(z / np.linalg.norm(z, axis=1, keepdims=True))
    q = local_dimension_estimate(dense, dense.points[0], np.geomspace(1e-3, 1e-1, 9))
    print(f"heat-kernel dimension of the sphere at a point: {q:.2f}")


if __name__ == "__main__":
    main()
