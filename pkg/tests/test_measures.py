import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sparsealign import (
    ConfigError,
    EmpiricalMeasure,
    InfeasiblePartitionError,
    Interval,
    PhaseRegion,
    estimate_density_sup,
    mass_in_box,
    quantile_partition,
    support_box,
    w1_from_samples,
    wasserstein1_1d,
)
from conftest import make_measure, random_measure
from oracles import quantile_points_scan, w1_lp

# -- construction -----------------------------------------------------------------


def test_measure_rejects_weight_sum_off():
    with pytest.raises(ConfigError):
        make_measure([0.0, 1.0], [0.0, 1.0], w=[0.5, 0.6])


def test_measure_rejects_nan_coordinates():
    with pytest.raises(ConfigError):
        make_measure([0.0, np.nan], [0.0, 1.0])


def test_measure_rejects_negative_weights():
    with pytest.raises(ConfigError):
        make_measure([0.0, 1.0], [0.0, 1.0], w=[1.5, -0.5])


def test_measure_rejects_length_mismatch():
    with pytest.raises(ConfigError):
        EmpiricalMeasure(
            np.zeros((3, 1)), np.zeros((2, 1)), np.array([0.5, 0.5])
        )


def test_measure_arrays_are_locked():
    mu = make_measure([0.0, 1.0], [0.0, 1.0])
    with pytest.raises(ValueError):
        mu.positions[0, 0] = 5.0


# -- support box ------------------------------------------------------------------


def test_support_box_single_particle_degenerate():
    mu = make_measure([0.5], [0.2], w=[1.0])
    box = support_box(mu)
    assert box.x_lo[0] == box.x_hi[0] == 0.5
    assert box.v_lo[0] == box.v_hi[0] == 0.2


def test_support_box_extremes():
    mu = make_measure([0.0, 1.0], [0.0, 2.0])
    box = support_box(mu)
    assert box.x_lo[0] == 0.0 and box.x_hi[0] == 1.0
    assert box.v_lo[0] == 0.0 and box.v_hi[0] == 2.0


def test_support_box_matches_exhaustive_scan(rng):
    mu = random_measure(rng, 100)
    box = support_box(mu)
    # exhaustive scan oracle
    xs = sorted(float(p) for p in mu.positions[:, 0])
    vs = sorted(float(v) for v in mu.velocities[:, 0])
    assert box.x_lo[0] == xs[0] and box.x_hi[0] == xs[-1]
    assert box.v_lo[0] == vs[0] and box.v_hi[0] == vs[-1]
    assert 0.0 <= box.x_lo[0] and box.x_hi[0] <= 1.0


def test_support_box_ignores_zero_weight_atoms():
    mu = make_measure([0.0, 5.0], [0.0, 9.0], w=[1.0, 0.0])
    box = support_box(mu)
    assert box.x_hi[0] == 0.0 and box.v_hi[0] == 0.0


# -- region mass ------------------------------------------------------------------


def test_mass_full_box_is_one(eight_atoms):
    region = PhaseRegion(x=(Interval(0.0, 1.0),), v=(Interval(0.0, 1.0),))
    assert mass_in_box(eight_atoms, region) == 1.0


def test_mass_disjoint_region_is_zero(eight_atoms):
    region = PhaseRegion(x=(Interval(2.0, 3.0),))
    assert mass_in_box(eight_atoms, region) == 0.0


def test_mass_closed_interval_counts_endpoints(eight_atoms):
    region = PhaseRegion(x=(Interval(0.2, 0.4),))
    assert mass_in_box(eight_atoms, region) == pytest.approx(3.0 / 8.0, abs=1e-15)


def test_open_interval_excludes_endpoints(eight_atoms):
    region = PhaseRegion(
        x=(Interval(0.2, 0.4, closed_lo=False, closed_hi=False),)
    )
    assert mass_in_box(eight_atoms, region) == pytest.approx(1.0 / 8.0, abs=1e-15)


@given(st.integers(min_value=1, max_value=40), st.integers(min_value=1, max_value=6))
@settings(max_examples=60, deadline=None)
def test_mass_over_partition_sums_to_one(n, cuts):
    rng = np.random.default_rng(n * 1000 + cuts)
    mu = random_measure(rng, n, weighted=True)
    edges = np.sort(rng.uniform(0.0, 1.0, size=cuts))
    edges = np.concatenate([[-1e9], edges, [1e9]])
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        # half-open cells tile the line with no overlap
        region = PhaseRegion(x=(Interval(lo, hi, closed_hi=False),))
        total += mass_in_box(mu, region)
    assert abs(total - 1.0) <= 1e-12


# -- slab partition ----------------------------------------------------------------


def test_partition_eight_atoms_reference(eight_atoms):
    # n = 4 slabs of mass 0.25 over 0.1 ... 0.8
    points = quantile_partition(eight_atoms, 0, 0.25, 4)
    assert np.array_equal(points, [0.1, 0.2, 0.4, 0.6, 0.8])


def test_partition_single_slab_is_support(eight_atoms):
    assert np.array_equal(quantile_partition(eight_atoms, 0, 1.0, 1), [0.1, 0.8])


def test_partition_atom_concentration_collapses():
    mu = make_measure([0.3, 0.3, 0.3], [0.0, 0.5, 1.0])
    points = quantile_partition(mu, 0, 0.5, 2)
    assert np.array_equal(points, [0.3, 0.3, 0.3])


def test_partition_infeasible_mass_raises(eight_atoms):
    with pytest.raises(InfeasiblePartitionError):
        quantile_partition(eight_atoms, 0, 0.9, 3)


@given(
    st.integers(min_value=2, max_value=12),
    st.integers(min_value=1, max_value=5),
    st.integers(min_value=0, max_value=10_000),
)
@settings(max_examples=120, deadline=None)
def test_partition_matches_scan_oracle(n_atoms, n_slabs, seed):
    rng = np.random.default_rng(seed)
    mu = random_measure(rng, n_atoms, weighted=(seed % 2 == 0))
    slab = min(1.0, 1.0 / n_slabs)
    points = quantile_partition(mu, 0, slab, n_slabs)
    expect = quantile_points_scan(mu.positions[:, 0], mu.weights, slab, n_slabs)
    assert np.array_equal(points, expect)
    assert np.all(np.diff(points) >= 0.0)


@given(st.integers(min_value=0, max_value=5000))
@settings(max_examples=80, deadline=None)
def test_partition_slab_mass_bracket(seed):
    """Interior slabs (open-left, closed-right) of an equal-weight measure
    with distinct coordinates carry mass in [target, target + 1/N]."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(8, 40))
    x = rng.permutation(np.linspace(0.0, 1.0, n))
    mu = make_measure(x, rng.uniform(size=n))
    c = float(rng.uniform(0.15, 0.9))
    n_slabs = int(np.ceil(2.0 / c))
    slab = c / 2.0
    points = quantile_partition(mu, 0, slab, n_slabs)
    target = np.ceil(n * slab - 1e-12) / n
    xs = np.sort(x)
    for i in range(1, n_slabs):  # slabs that are actually filled to target
        lo, hi = points[i - 1], points[i]
        got = np.sum((xs > lo) & (xs <= hi)) / n
        if i == 1:
            got += np.sum(xs == points[0]) / n  # left edge is closed
        if hi >= points[-1]:
            break  # ran out of mass; trailing slabs are remainder
        assert target - 1e-12 <= got <= target + 1.0 / n + 1e-12


# -- transport distance --------------------------------------------------------------


def test_w1_identity(eight_atoms):
    assert wasserstein1_1d(eight_atoms, eight_atoms, "x") == 0.0


def test_w1_unit_atoms():
    mu = make_measure([0.0], [0.0], w=[1.0])
    nu = make_measure([1.0], [0.0], w=[1.0])
    assert wasserstein1_1d(mu, nu, "x") == pytest.approx(1.0, abs=1e-15)


def test_w1_split_vs_center():
    # frozen from the transference-plan LP oracle: 0.5
    mu = make_measure([0.0, 1.0], [0.0, 0.0], w=[0.5, 0.5])
    nu = make_measure([0.5], [0.0], w=[1.0])
    assert wasserstein1_1d(mu, nu, "x") == pytest.approx(0.5, abs=1e-15)


@given(st.integers(min_value=0, max_value=10_000))
@settings(max_examples=100, deadline=None)
def test_w1_agrees_with_transport_lp(seed):
    rng = np.random.default_rng(seed)
    na, nb = int(rng.integers(1, 7)), int(rng.integers(1, 7))
    av = rng.uniform(-2.0, 2.0, size=na)
    bv = rng.uniform(-2.0, 2.0, size=nb)
    aw = rng.uniform(0.1, 1.0, size=na)
    bw = rng.uniform(0.1, 1.0, size=nb)
    aw, bw = aw / aw.sum(), bw / bw.sum()
    assert w1_from_samples(av, aw, bv, bw) == pytest.approx(
        w1_lp(av, aw, bv, bw), abs=1e-9
    )


@given(st.integers(min_value=0, max_value=10_000))
@settings(max_examples=60, deadline=None)
def test_w1_symmetry_and_triangle(seed):
    rng = np.random.default_rng(seed)
    ms = [random_measure(rng, int(rng.integers(2, 12)), weighted=True) for _ in range(3)]
    d01 = wasserstein1_1d(ms[0], ms[1], "v")
    d10 = wasserstein1_1d(ms[1], ms[0], "v")
    d12 = wasserstein1_1d(ms[1], ms[2], "v")
    d02 = wasserstein1_1d(ms[0], ms[2], "v")
    assert d01 == d10
    assert d02 <= d01 + d12 + 1e-10


@given(
    st.integers(min_value=0, max_value=10_000),
    st.floats(min_value=-5.0, max_value=5.0, allow_nan=False),
)
@settings(max_examples=60, deadline=None)
def test_w1_translation_covariance(seed, a):
    rng = np.random.default_rng(seed)
    mu = random_measure(rng, 9, weighted=True)
    nu = random_measure(rng, 7, weighted=True)
    base = wasserstein1_1d(mu, nu, "x")
    mu2 = EmpiricalMeasure(mu.positions + a, mu.velocities, mu.weights)
    nu2 = EmpiricalMeasure(nu.positions + a, nu.velocities, nu.weights)
    assert abs(wasserstein1_1d(mu2, nu2, "x") - base) <= 1e-12


# -- density histogram ---------------------------------------------------------------


def test_density_single_bin_is_inverse_volume(rng):
    mu = random_measure(rng, 50, x_span=(0.0, 2.0), v_span=(0.0, 0.5))
    est = estimate_density_sup(mu, 1)
    box = support_box(mu)
    vol = box.x_width(0) * box.v_width(0)
    assert est.sup_density == pytest.approx(1.0 / vol, rel=1e-12)


def test_density_concentrated_quarter():
    # (essentially) all mass in one of 4 equal bins: sup = 4 / support volume
    eps = 1e-15
    x = np.array([0.25, 0.75, 0.25, 0.75])
    v = np.array([0.25, 0.25, 0.75, 0.75])
    w = np.array([1.0 - 3 * eps, eps, eps, eps])
    mu = make_measure(x, v, w)
    est = estimate_density_sup(mu, 2)
    vol = 0.5 * 0.5
    assert est.sup_density == pytest.approx(4.0 / vol, rel=1e-9)


def test_density_uniform_cloud_concentration(rng):
    mu = random_measure(rng, 10_000)
    est = estimate_density_sup(mu, 10)
    assert 0.5 <= est.sup_density <= 2.0


def test_density_permutation_invariant(rng):
    mu = random_measure(rng, 64, weighted=True)
    perm = rng.permutation(64)
    nu = EmpiricalMeasure(
        mu.positions[perm], mu.velocities[perm], mu.weights[perm]
    )
    a = estimate_density_sup(mu, 4)
    b = estimate_density_sup(nu, 4)
    assert a.sup_density == b.sup_density
