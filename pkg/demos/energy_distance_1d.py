"""Energy-distance flow of 200 particles on the line toward a shifted copy.

The energy decays slower than exponentially once the clouds start to overlap.
"""

import numpy as np

from rieszflow import FlowConfig, FlowState, Kernel, ParticleMeasure, run_flow


def main():
    q = (np.arange(200) + 0.5) / 200
    mu, nu = ParticleMeasure.uniform(q[:, None]), ParticleMeasure.uniform(q[:, None] + 2.0)
    traj = run_flow(FlowConfig(Kernel.energy_distance(1), nu, FlowState.from_particles(mu), dt=0.01, t_end=6.0, record_every=50, monitor=False))
    for t, e in zip(traj.times, traj.energies):
        print(f"t={t:5.2f}  E={e:.4e}")
    shift = traj.final_state.positions.mean() - q.mean()
    print(f"mean displacement {shift:.3f} of the 2.0 needed")


if __name__ == "__main__":
    main()
