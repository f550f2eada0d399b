"""Wasserstein gradient flows of Riesz-kernel MMD energies on R^d and the flat torus."""

from .config import MeasureSpec, RunConfig, parse_config, serialize
from .dynamics import (
    FlowConfig,
    FlowState,
    RegularityMonitor,
    Trajectory,
    confinement_check,
    density_on_grid,
    eulerian_step_torus,
    lagrangian_rhs,
    regularity_monitor,
    run_flow,
    state_energy,
    step,
)
from .energy import (
    EnergyReport,
    grad_potential,
    mmd_energy,
    pl_report,
    potential,
    signed_energy,
    solve_potential,
    velocity_field,
    velocity_grid,
)
from .errors import *  # noqa: F401,F403
from .jko import JkoResult, TransportPlan, jko_step, stationarity_probe, w2_entropic, w2_exact
from .kernels import (
    HeatKernelSpec,
    Kernel,
    coulomb_constant,
    eval_kernel,
    grad_kernel,
    heat_kernel,
    riesz_potential_moment,
    torus_green,
)
from .measures import (
    GridMeasure,
    ParticleMeasure,
    hahn_jordan,
    heat_pairing,
    heat_smooth,
    holder_seminorm,
    load_grid,
    load_particles_csv,
    local_dimension_estimate,
    rasterize,
    save_grid,
    save_particles_csv,
    support_radius,
)
from .plotdata import emit_plotdata
from .probe import (
    ProbeCurve,
    criticality_exponent,
    energy_derivative,
    lagrangian_critical_check,
    no_local_min_scan,
    proximal_decrease,
    select_descent_set,
)

__version__ = "0.1.0"
