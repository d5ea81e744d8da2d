import numpy as np
import pytest

from sparsealign import (
    AlignmentConfig,
    BoundaryError,
    ConfigError,
    EmpiricalMeasure,
    InteractionKernel,
    PhaseGrid,
    StepSizeError,
    build_step_plan,
    constant_kernel,
    from_function,
    grid_for_step,
    grid_marginal,
    grid_step,
    grid_vs_particle,
    inverse_power_kernel,
    run_grid,
    sample_particles,
    support_box,
    w1_from_samples,
    write_grid_csv,
)
from conftest import make_measure
from oracles import free_streaming_density

SILENT = constant_kernel(0.0)


def gaussian_blob(X, V):
    return np.exp(-((X - 0.5) ** 2) / 0.02 - ((V - 0.2) ** 2) / 0.005)


def blob_grid(nx=96, nv=96, x_span=(-0.6, 1.6), v_span=(-0.45, 0.6)):
    return from_function(gaussian_blob, x_span, v_span, nx, nv)


# -- the grid container ---------------------------------------------------------


def test_grid_validation():
    with pytest.raises(ConfigError):
        PhaseGrid(np.array([0.0, 1.0, 1.5]), np.array([0.0, 1.0]), np.zeros((2, 1)))
    with pytest.raises(ConfigError):
        PhaseGrid(np.array([1.0, 0.0]), np.array([0.0, 1.0]), np.zeros((1, 1)))
    with pytest.raises(ConfigError):
        PhaseGrid(np.array([0.0, 1.0]), np.array([0.0, 1.0]), np.zeros((2, 2)))
    with pytest.raises(ConfigError):
        PhaseGrid(np.array([0.0, 1.0]), np.array([0.0, 1.0]), np.array([[-1.0]]))


def test_grid_geometry_properties():
    g = PhaseGrid(np.linspace(0, 1, 5), np.linspace(-1, 1, 3), np.ones((4, 2)))
    assert (g.nx, g.nv) == (4, 2)
    assert g.dx == 0.25 and g.dv == 1.0
    assert np.allclose(g.x_centers, [0.125, 0.375, 0.625, 0.875])
    assert g.total_mass() == pytest.approx(8 * 0.25 * 1.0)


def test_from_function_normalises_and_validates():
    g = blob_grid(32, 32)
    assert g.total_mass() == pytest.approx(1.0, abs=1e-14)
    with pytest.raises(ConfigError):
        from_function(lambda X, V: X[0], (0, 1), (0, 1), 4, 4)
    with pytest.raises(ConfigError):
        from_function(lambda X, V: -np.ones_like(X), (0, 1), (0, 1), 4, 4)
    with pytest.raises(ConfigError):
        from_function(lambda X, V: np.zeros_like(X), (0, 1), (0, 1), 4, 4)
    with pytest.raises(ConfigError):
        from_function(gaussian_blob, (1, 0), (0, 1), 4, 4)


# -- scheme invariants ------------------------------------------------------------


def test_pure_transport_leaves_velocity_marginal_unchanged():
    g = blob_grid()
    gf = run_grid(g, SILENT, None, 0.0, 0.5)
    before = g.cell_masses().sum(axis=0)
    after = gf.cell_masses().sum(axis=0)
    assert np.abs(before - after).max() <= 1e-14


def test_constant_brake_translates_velocity_marginal():
    tau = 0.2
    g = blob_grid(128, 128)
    gf = run_grid(g, SILENT, lambda t, x, v: -np.ones_like(x), 0.0, tau)
    v0, w0 = grid_marginal(g, "v")
    v1, w1 = grid_marginal(gf, "v")
    assert w1_from_samples(v1, w1, v0 - tau, w0) <= g.dv


def test_long_interior_run_conserves_mass_and_positivity():
    g = from_function(
        lambda X, V: np.exp(-(X**2) / 0.02 - (V**2) / 0.0002),
        (-1.0, 1.0), (-0.1, 0.1), 64, 64,
    )
    dt = 2e-4  # far below the CFL limit; drift stays deep inside the walls
    cur = g
    for step in range(1000):
        cur = grid_step(cur, SILENT, None, t=step * dt, dt=dt)
        if step % 200 == 0:
            assert cur.density.min() >= -1e-12
    assert abs(cur.total_mass() - 1.0) <= 1e-12
    assert cur.density.min() >= -1e-12


def test_velocity_support_grows_at_most_one_cell_per_substep():
    kernel = inverse_power_kernel(1.0, 1.0, 1.0)
    cur = blob_grid()

    def v_support(grid):
        cols = np.nonzero(grid.cell_masses().sum(axis=0) > 1e-12)[0]
        return cols[0], cols[-1]

    lo, hi = v_support(cur)
    for step in range(30):
        cur = grid_step(cur, kernel, None, t=0.002 * step, dt=0.002)
        new_lo, new_hi = v_support(cur)
        assert new_lo >= lo - 1
        assert new_hi <= hi + 1
        lo, hi = new_lo, new_hi


def test_first_order_convergence_on_free_streaming():
    t1 = 0.3
    exact_fn = free_streaming_density(gaussian_blob, t1)
    errors = []
    for nres in (48, 96, 192):
        g = from_function(gaussian_blob, (-0.6, 1.6), (-0.2, 0.6), nres, nres)
        gf = run_grid(g, SILENT, None, 0.0, t1)
        X, V = np.meshgrid(gf.x_centers, gf.v_centers, indexing="ij")
        exact = exact_fn(X, V)
        exact = exact / (exact.sum() * gf.dx * gf.dv)
        errors.append(float(np.abs(gf.density - exact).sum() * gf.dx * gf.dv))
    for coarse, fine in zip(errors, errors[1:]):
        assert 1.6 <= coarse / fine <= 2.4


def test_cfl_violation_raises():
    g = blob_grid(32, 32)
    with pytest.raises(StepSizeError):
        grid_step(g, SILENT, None, t=0.0, dt=10.0)


def test_wall_contact_raises():
    # support closer than the protective two-cell ring to the left wall
    g = from_function(
        gaussian_blob, (0.45, 1.6), (-0.45, 0.6), 64, 64
    )
    with pytest.raises(BoundaryError):
        grid_step(g, SILENT, None, t=0.0, dt=1e-4)


def test_factorised_field_matches_generic_double_sum():
    fast = inverse_power_kernel(1.2, 1.0, 2.0)
    slow = InteractionKernel(name="unfactorised", xi=fast.xi, lipschitz_L=fast.lipschitz_L)
    g = blob_grid(32, 32)
    a = grid_step(g, fast, None, t=0.0, dt=1e-3)
    b = grid_step(g, slow, None, t=0.0, dt=1e-3)
    assert np.abs(a.density - b.density).max() <= 1e-12


# -- particles from cells -----------------------------------------------------------


def test_sampling_is_deterministic_and_uniformly_weighted():
    g = blob_grid(48, 48)
    mu1 = sample_particles(g, 500)
    mu2 = sample_particles(g, 500)
    assert np.array_equal(mu1.positions, mu2.positions)
    assert np.array_equal(mu1.velocities, mu2.velocities)
    assert np.all(mu1.weights == 1.0 / 500)
    assert mu1.n_particles == 500


def test_sampling_matches_grid_within_a_cell():
    g = blob_grid(64, 64)
    mu = sample_particles(g, 4000)
    dists = grid_vs_particle(g, mu)
    assert dists["x"] <= g.dx
    assert dists["v"] <= g.dv


def test_sampling_spreads_atoms_when_ties_abound():
    # uniform density, fewer atoms than cells: remainder ties must not
    # clump the winners into a corner of the grid
    g = from_function(lambda X, V: np.ones_like(X), (0.0, 1.0), (0.0, 1.0), 64, 64)
    mu = sample_particles(g, 1000)
    assert mu.positions.min() < 0.1 and mu.positions.max() > 0.9
    assert mu.velocities.min() < 0.1 and mu.velocities.max() > 0.9


def test_sampling_validates_input():
    g = blob_grid(16, 16)
    with pytest.raises(ConfigError):
        sample_particles(g, 0)


# -- marginals and comparison --------------------------------------------------------


def test_grid_marginals_are_normalised():
    g = blob_grid(32, 32)
    for kind in ("x", "v"):
        vals, wts = grid_marginal(g, kind)
        assert wts.sum() == pytest.approx(1.0, abs=1e-12)
        assert vals.size == 32
    with pytest.raises(ConfigError):
        grid_marginal(g, "y")


def test_grid_vs_particle_requires_one_dimension():
    g = blob_grid(8, 8)
    mu = EmpiricalMeasure(np.zeros((3, 2)), np.zeros((3, 2)), np.full(3, 1 / 3))
    with pytest.raises(ConfigError):
        grid_vs_particle(g, mu)


def test_grid_csv_roundtrips_floats(tmp_path):
    g = blob_grid(4, 3)
    path = tmp_path / "grid.csv"
    write_grid_csv(g, path)
    rows = path.read_text().strip().splitlines()
    assert rows[0] == "i,j,x_center,v_center,density"
    assert len(rows) == 1 + 4 * 3
    i, j, xc, vc, dens = rows[1].split(",")
    assert (int(i), int(j)) == (0, 0)
    assert float(xc) == g.x_centers[0]
    assert float(dens) == g.density[0, 0]


# -- domain sizing -------------------------------------------------------------------


def test_domain_for_step_covers_the_action(eight_atoms):
    cfg = AlignmentConfig(c=0.5, epsilon=0.1, v_star=np.zeros(1), lipschitz_L=1.0)
    plan = build_step_plan(eight_atoms, cfg, 0)
    box = support_box(eight_atoms)
    x_span, v_span = grid_for_step(plan, box)
    assert x_span[0] <= box.x_lo[0] - 3 * plan.delta
    assert x_span[1] >= box.x_hi[0] + 3 * plan.delta + plan.T * plan.V
    assert v_span[0] <= -(2 * plan.delta + plan.eta)
    assert v_span[1] >= plan.V + 2 * plan.delta + plan.eta
    # resolution-aware margins add the numerical-diffusion allowance
    x_wide, v_wide = grid_for_step(plan, box, nx=64, nv=64)
    assert x_wide[0] < x_span[0] and x_wide[1] > x_span[1]
    assert v_wide[0] < v_span[0] and v_wide[1] > v_span[1]


def test_braking_step_on_grid_stays_in_sized_domain(eight_atoms):
    kernel = inverse_power_kernel(1.0, 1.0, 2.0)
    cfg = AlignmentConfig(
        c=0.5, epsilon=0.1, v_star=np.zeros(1), lipschitz_L=kernel.lipschitz_L
    )
    plan = build_step_plan(eight_atoms, cfg, 0)
    box = support_box(eight_atoms)
    x_span, v_span = grid_for_step(plan, box, nx=96, nv=96)

    def smooth(X, V):
        inside_x = np.exp(-(((X - 0.45) / 0.12) ** 2))
        inside_v = np.exp(-(((V - 0.55) / 0.08) ** 2))
        return inside_x * inside_v

    g0 = from_function(smooth, x_span, v_span, 96, 96)
    from sparsealign import ControlField

    gf = run_grid(g0, kernel, ControlField(plan), 0.0, plan.T)
    assert abs(gf.total_mass() - 1.0) <= 1e-12
    assert gf.density.min() >= -1e-12
    # braking moved the velocity marginal downward
    v0, w0 = grid_marginal(g0, "v")
    v1, w1 = grid_marginal(gf, "v")
    assert float(np.dot(v1, w1)) < float(np.dot(v0, w0))
