from types import SimpleNamespace

import numpy as np
import pytest

from sparsealign import (
    AlignmentConfig,
    ConfigError,
    ConstraintTrace,
    FundamentalStepPlan,
    IntegratorConfig,
    InteractionKernel,
    build_step_plan,
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
    constant_kernel,
    inverse_power_kernel,
    run_alignment,
    run_report_checks,
)
from conftest import make_measure, random_measure
from oracles import divergence_central


@pytest.fixture(scope="module")
def small_run():
    rng = np.random.default_rng(31)
    mu = make_measure(rng.uniform(0, 1, 50), rng.uniform(0, 1, 50))
    kernel = inverse_power_kernel(1.0, 1.0, 2.0)
    cfg = AlignmentConfig(
        c=0.4,
        epsilon=0.12,
        v_star=np.zeros(1),
        lipschitz_L=kernel.lipschitz_L,
        integrator=IntegratorConfig("rk4", 2e-3),
    )
    report = run_alignment(mu, kernel, cfg)
    assert report.terminated
    return mu, kernel, cfg, report


def flat_trace(mass=0.3, n=5):
    return ConstraintTrace(
        times=np.linspace(0.0, 1.0, n),
        omega_mass=np.full(n, mass),
        u_sup=np.full(n, 1.0),
        v_support_height=np.full(n, 0.5),
        density_sup=np.full(n, 2.0),
    )


# -- the trace container ---------------------------------------------------------


def test_trace_validation():
    tr = flat_trace()
    assert len(tr) == 5
    with pytest.raises(ConfigError):
        ConstraintTrace(
            times=np.array([0.0, 1.0]),
            omega_mass=np.array([0.1]),
            u_sup=np.array([1.0, 1.0]),
            v_support_height=np.array([0.5, 0.5]),
            density_sup=np.array([1.0, 1.0]),
        )
    with pytest.raises(ConfigError):
        flat_trace(mass=-0.1)
    with pytest.raises(ConfigError):
        ConstraintTrace(
            times=np.array([1.0, 0.0]),
            omega_mass=np.array([0.1, 0.1]),
            u_sup=np.array([1.0, 1.0]),
            v_support_height=np.array([0.5, 0.5]),
            density_sup=np.array([1.0, 1.0]),
        )


def test_trace_arrays_are_locked():
    tr = flat_trace()
    with pytest.raises(ValueError):
        tr.omega_mass[0] = 9.9


# -- individual checks -------------------------------------------------------------


def test_sparsity_accepts_budgeted_trace():
    res = check_sparsity(flat_trace(mass=0.3), c=0.4, n_atoms=8)
    assert res.passed
    assert res.value == 0.3
    assert res.limit == pytest.approx(0.4 + 2.0 / 8)


def test_sparsity_flags_injected_mass():
    tr = ConstraintTrace(
        times=np.array([0.0, 0.5, 1.0]),
        omega_mass=np.array([0.3, 1.0, 0.3]),
        u_sup=np.ones(3),
        v_support_height=np.ones(3),
        density_sup=np.ones(3),
    )
    res = check_sparsity(tr, c=0.4, n_atoms=8)
    assert not res.passed
    assert res.value == 1.0
    assert "t=0.5" in res.witness
    assert str(res).startswith("[FAIL] sparsity")


def test_amplitude_on_a_real_plan(eight_atoms):
    cfg = AlignmentConfig(c=0.5, epsilon=0.1, v_star=np.zeros(1), lipschitz_L=1.0)
    plan = build_step_plan(eight_atoms, cfg, 0)
    res = check_amplitude(plan, n_samples=5000)
    assert res.passed
    assert res.value <= 1.0
    assert "core value 1" in res.witness


def test_degenerate_band_is_refused_upstream(eight_atoms):
    # a plan with a collapsed velocity band cannot even be constructed,
    # so the amplitude check never sees one
    cfg = AlignmentConfig(c=0.5, epsilon=0.1, v_star=np.zeros(1), lipschitz_L=1.0)
    plan = build_step_plan(eight_atoms, cfg, 0)
    with pytest.raises(ConfigError):
        FundamentalStepPlan(
            axis=plan.axis, c=plan.c, n=plan.n, partition=plan.partition,
            delta=plan.delta, eta=0.0, T=plan.T, V=plan.V, X=plan.X,
            lipschitz_L=plan.lipschitz_L, epsilon=plan.epsilon, alpha=plan.alpha,
        )


def test_lipschitz_on_a_real_plan(eight_atoms):
    cfg = AlignmentConfig(c=0.5, epsilon=0.1, v_star=np.zeros(1), lipschitz_L=1.0)
    plan = build_step_plan(eight_atoms, cfg, 0)
    res = check_lipschitz(plan, n_pairs=5000)
    assert res.passed
    assert res.limit == pytest.approx(max(1 / plan.delta, 1 / plan.eta), rel=1e-9)


def test_contraction_pass_and_fail():
    good = SimpleNamespace(V_meas=0.9, V_pred=0.95, X_meas=1.0, X_pred=1.1)
    bad = SimpleNamespace(V_meas=0.96, V_pred=0.95, X_meas=1.0, X_pred=1.1)
    assert check_step_contraction(good).passed
    res = check_step_contraction(bad)
    assert not res.passed
    assert res.value == pytest.approx(0.01)


def test_partial_sum_pass_and_fail():
    ok = check_partial_sum([0.1, 0.2, 0.1], V0=1.0, alpha=8.5, n=4)
    assert ok.passed
    too_long = check_partial_sum([100.0], V0=1.0, alpha=8.5, n=4)
    assert not too_long.passed


def test_horizon_budget_pass_and_fail():
    good = SimpleNamespace(horizon=3.0, horizon_bound=4.0, axis=0, reflected=False)
    bad = SimpleNamespace(horizon=4.5, horizon_bound=4.0, axis=0, reflected=True)
    assert check_horizon_budget(good).passed
    res = check_horizon_budget(bad)
    assert not res.passed
    assert "mirrored" in res.witness


def test_density_growth_constant_density_passes():
    res = check_density_growth(flat_trace(), F_bar=1.0)
    assert res.passed and res.warning


def test_density_growth_flags_blowup():
    tr = ConstraintTrace(
        times=np.array([0.0, 1e-3]),
        omega_mass=np.zeros(2),
        u_sup=np.zeros(2),
        v_support_height=np.ones(2),
        density_sup=np.array([1.0, 10.0]),
    )
    res = check_density_growth(tr, F_bar=1.0)
    assert not res.passed
    assert res.warning


def test_density_growth_skips_degenerate_start():
    tr = ConstraintTrace(
        times=np.array([0.0, 1.0]),
        omega_mass=np.zeros(2),
        u_sup=np.zeros(2),
        v_support_height=np.ones(2),
        density_sup=np.array([0.0, 5.0]),
    )
    res = check_density_growth(tr, F_bar=1.0)
    assert res.passed
    assert "skipped" in res.witness


def test_divergence_constant_kernel_attains_bound(rng):
    # a constant rate K makes the force divergence exactly -K d everywhere
    mu = random_measure(rng, 30, d=2)
    res = check_divergence_bound(mu, constant_kernel(2.0))
    assert res.passed
    assert res.value == pytest.approx(4.0, abs=1e-6)
    assert res.limit == pytest.approx(4.0 + 1e-3)


def test_divergence_flags_understated_constant(rng):
    mu = random_measure(rng, 30, d=2)
    honest = constant_kernel(2.0)
    liar = InteractionKernel(name="liar", xi=honest.xi, lipschitz_L=1.0)
    res = check_divergence_bound(mu, liar)
    assert not res.passed


def test_divergence_matches_central_difference_oracle(rng):
    mu = random_measure(rng, 20, d=1, v_span=(-1.0, 1.0))
    kernel = inverse_power_kernel(1.0, 1.0, 3.0)
    from sparsealign import mean_field_force

    x0 = np.array([0.4])

    def force_at(v):
        return mean_field_force(mu, kernel, x0, v)

    div = divergence_central(force_at, np.array([0.2]), 1, 1e-5)
    assert abs(div) <= kernel.lipschitz_L * 1 + 1e-3


def test_equivariance_zero_shift_is_exact(rng):
    mu = random_measure(rng, 20)
    res = check_equivariance(
        mu, constant_kernel(1.0), [0.0], [0.0], 0.5, IntegratorConfig("rk4", 1e-2)
    )
    assert res.passed
    assert res.value == 0.0


def test_equivariance_translation_and_boost(rng):
    mu = random_measure(rng, 30, d=2)
    k = inverse_power_kernel(1.0, 1.0, 3.0)
    cfg = IntegratorConfig("rk4", 1e-2)
    assert check_equivariance(mu, k, [5.0, -2.0], [0.0, 0.0], 1.0, cfg).passed
    assert check_equivariance(mu, k, [0.0, 0.0], [0.7, -0.3], 1.0, cfg).passed
    assert check_equivariance(mu, k, [1.0, 2.0], [0.5, 0.25], 1.0, cfg).passed


def test_equivariance_validates_dimensions(rng):
    mu = random_measure(rng, 5, d=2)
    with pytest.raises(ConfigError):
        check_equivariance(
            mu, constant_kernel(1.0), [1.0], [0.0, 0.0], 0.1, IntegratorConfig()
        )


def test_delta_floor_pass_and_fail():
    good = SimpleNamespace(
        delta=0.1, x_density_sup_start=1.0, plan=SimpleNamespace(c=0.4)
    )
    bad = SimpleNamespace(
        delta=1e-6, x_density_sup_start=1.0, plan=SimpleNamespace(c=0.4)
    )
    assert check_delta_floor(good).passed
    res = check_delta_floor(bad)
    assert not res.passed and res.warning


# -- aggregation --------------------------------------------------------------------


def test_report_checks_on_a_real_run(small_run):
    mu, kernel, cfg, report = small_run
    results = run_report_checks(report, kernel=kernel, mu0=mu)
    names = [r.name for r in results]
    for expected in (
        "sparsity",
        "amplitude",
        "control-lipschitz",
        "step-contraction",
        "density-growth",
        "delta-floor",
        "partial-sum",
        "horizon-budget",
        "divergence-bound",
    ):
        assert expected in names
    hard = [r for r in results if not r.warning]
    assert all(r.passed for r in hard), [str(r) for r in results if not r.passed]
    # one aggregated row per per-step check
    assert names.count("sparsity") == 1
    assert names.count("partial-sum") == len([p for p in report.passes if p.n_steps])


def test_report_checks_respect_per_pass_accounting(small_run):
    _, _, cfg, report = small_run
    for p in report.passes:
        if p.n_steps == 0:
            continue
        T_values = [s.T for s in report.steps if p.t_start <= s.t_start < p.t_end]
        # prefix sums stay under budget while the pass is still running
        for k in range(1, len(T_values) + 1):
            res = check_partial_sum(T_values[:k], p.V0, p.alpha, p.n)
            assert res.passed


def test_check_result_labels():
    ok = check_partial_sum([0.1], V0=1.0, alpha=8.5, n=4)
    assert str(ok).startswith("[PASS]")
    warn = check_density_growth(flat_trace(), F_bar=0.0)
    assert str(warn).startswith("[PASS]")  # warnings only tag when failing
    bad = SimpleNamespace(
        delta=1e-9, x_density_sup_start=1.0, plan=SimpleNamespace(c=0.4)
    )
    assert str(check_delta_floor(bad)).startswith("[WARN]")
