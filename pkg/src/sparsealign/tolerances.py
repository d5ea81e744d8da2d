"""Central tolerance table.

All numerical slack used by runtime checks, the verification suite, and the
acceptance tests lives here, so a tolerance is never re-derived ad hoc at a
call site.  Version the table when any value changes.
"""

from __future__ import annotations

TOLERANCE_TABLE_VERSION = 1

# -- measure bookkeeping ------------------------------------------------------
#: total particle weight must equal 1 within this absolute slack
MASS_TOL = 1e-12
#: partitions of the support must carry total mass 1 within this slack
PARTITION_MASS_TOL = 1e-12

# -- metric sanity ------------------------------------------------------------
#: triangle-inequality slack for the 1d transport distance on sampled triples
W1_TRIANGLE_TOL = 1e-10
#: translation covariance slack for the 1d transport distance
W1_TRANSLATION_TOL = 1e-12
#: agreement between the quantile implementation and the small-instance
#: transport linear program
W1_LP_TOL = 1e-9

# -- control synthesis --------------------------------------------------------
#: extra control-region mass allowed beyond the budget c, in units of 1/N
#: (two boundary atoms can enter through closed/open interval edges)
SPARSITY_EXTRA_ATOMS = 2.0
#: control amplitude bound is exact; no slack
AMPLITUDE_TOL = 0.0
#: slack on finite-difference slopes of the control field
CONTROL_LIPSCHITZ_TOL = 1e-9
#: measured one-step contraction may exceed the prediction by this much
#: (4th-order integrator at dt <= 1e-3)
CONTRACTION_TOL = 1e-4
#: slack on the running lower bound linking step durations to the initial
#: velocity-support height
PARTIAL_SUM_TOL = 1e-9
#: canonical-frame check: velocities may undershoot 0 by this relative amount
FRAME_NEGATIVE_V_TOL = 1e-9
#: frame maps must invert to the identity within this
FRAME_ROUNDTRIP_TOL = 1e-14
#: integer snapping when computing slab counts from the mass budget
SLAB_COUNT_SNAP = 1e-9

# -- dynamics -----------------------------------------------------------------
#: support boxes of uncontrolled runs may grow by 10 * dt^2 * (force bound)
SUPPORT_GROWTH_DT2_FACTOR = 10.0
#: hard ceiling used by the acceptance suite for support growth
SUPPORT_GROWTH_TOL = 1e-4
#: translation / boost equivariance of simulated trajectories
EQUIVARIANCE_TOL = 1e-9
#: slack added to L*d for the sampled divergence bound (finite differences)
DIVERGENCE_TOL = 1e-3
#: relative slack multiplier for the density-growth warning check
DENSITY_GROWTH_SLACK = 0.5
#: fraction of the mass budget that the concentration lower bound
#: 12 * density_sup * delta * V >= c may miss before a warning is emitted
#: (histogram density estimates are biased low at coarse resolution)
DELTA_FLOOR_SLACK = 0.5

# -- grid reference solver ----------------------------------------------------
#: grid mass must be conserved to this absolute tolerance
GRID_MASS_TOL = 1e-12
#: densities below this are treated as numerically empty cells
GRID_SUPPORT_THRESHOLD = 1e-12
#: total mass allowed in the protective wall ring before a run aborts;
#: first-order upwind fronts leak exponentially small mass ahead of the true
#: support (<= ~1e-7 over one braking step on the domains built by
#: grid_for_step), while genuine support arrival deposits at least one
#: bulk-density cell (>= ~5e-5 up to 256x256), so this value separates the
#: two regimes by orders of magnitude in both directions
GRID_WALL_MASS_TOL = 1e-6
#: CFL number ceiling for the split upwind scheme
GRID_CFL_MAX = 0.9
#: per-coordinate transport distance allowed between the grid reference run
#: and the particle run in the cross-validation scenario
GRID_PARTICLE_W1_TOL = 0.02
