"""Sparse steering of cooperative kinetic ensembles to velocity consensus.

The package simulates weighted particle ensembles whose velocities relax
toward each other through a nonnegative communication kernel, and
synthesizes a sparsity-constrained control (bounded amplitude, supported
on a small-mass region of phase space) that provably drives every
velocity into a prescribed band around a target.  A finite-volume solver
on phase-space grids cross-checks the particle runs, and a verification
layer re-derives every invariant the construction promises from recorded
run traces.

Layout:
  measures   weighted atom ensembles, quantile slabs, 1-d transport metric
  dynamics   interaction kernels and the mean-field particle integrator
  control    the braking-step synthesis and the outer alignment loop
  verify     invariant checks over recorded traces and reports
  pdegrid    donor-cell finite-volume transport on phase-space grids
  scenario   declarative run descriptions (INI files) and samplers
  cli        sparsealign command-line entry point
"""

from .control import (
    AlignmentConfig,
    AlignmentReport,
    ControlField,
    FrameMap,
    FundamentalStepPlan,
    PassRecord,
    StepRecord,
    build_step_plan,
    compute_delta,
    compute_n,
    eval_control,
    reduce_frame,
    run_alignment,
    run_fundamental_step,
    select_parameters,
)
from .dynamics import (
    IntegratorConfig,
    InteractionKernel,
    constant_kernel,
    inverse_power_kernel,
    mean_field_force,
    read_checkpoint_csv,
    reflect_kernel,
    simulate,
    validate_kernel,
    write_trajectory,
)
from .errors import (
    BoundaryError,
    ConfigError,
    ConstraintBreachError,
    DegenerateConcentrationError,
    DegenerateSupportError,
    DivergenceError,
    FrameError,
    InfeasiblePartitionError,
    KernelContractError,
    SchemaError,
    SchemeError,
    SlotError,
    SparseAlignError,
    StepSizeError,
)
from .measures import (
    EmpiricalMeasure,
    Interval,
    PhaseRegion,
    SupportBox,
    estimate_density_sup,
    marginal,
    mass_in_box,
    quantile_partition,
    read_measure_csv,
    support_box,
    w1_from_samples,
    wasserstein1_1d,
    write_measure_csv,
)
from .pdegrid import (
    PhaseGrid,
    from_function,
    grid_for_step,
    grid_marginal,
    grid_step,
    grid_vs_particle,
    run_grid,
    sample_particles,
    write_grid_csv,
)
from .scenario import (
    Scenario,
    build_kernel,
    build_measure,
    parse_scenario,
    scenario_density,
    with_overrides,
)
from .verify import (
    CheckResult,
    ConstraintTrace,
    check_amplitude,
    check_delta_floor,
    check_density_growth,
    check_divergence_bound,
    check_equivariance,
    check_horizon_budget,
    check_lipschitz,
    check_partial_sum,
    check_sparsity,
    check_step_contraction,
    run_report_checks,
)

__version__ = "0.1.0"
