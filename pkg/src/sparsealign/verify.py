"""Invariant checks for steering runs.

Every check returns a CheckResult holding the measured value, the limit it
was held against, and a human-readable witness.  Checks marked warning
monitor heuristics (histogram densities, widening floors); the remaining
ones are hard guarantees of the construction and a failure means a bug.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dynamics import mean_field_force, simulate
from .errors import ConfigError
from .tolerances import (
    AMPLITUDE_TOL,
    CONTRACTION_TOL,
    CONTROL_LIPSCHITZ_TOL,
    DELTA_FLOOR_SLACK,
    DENSITY_GROWTH_SLACK,
    DIVERGENCE_TOL,
    EQUIVARIANCE_TOL,
    PARTIAL_SUM_TOL,
    SPARSITY_EXTRA_ATOMS,
)

__all__ = [
    "ConstraintTrace",
    "CheckResult",
    "check_sparsity",
    "check_amplitude",
    "check_lipschitz",
    "check_step_contraction",
    "check_partial_sum",
    "check_horizon_budget",
    "check_density_growth",
    "check_divergence_bound",
    "check_equivariance",
    "check_delta_floor",
    "run_report_checks",
]


@dataclass(frozen=True)
class ConstraintTrace:
    """Per-substep monitoring samples collected while a step integrates:
    global time, mass inside the active control region, largest control
    magnitude over the atoms, velocity-support height on the braked axis,
    and a histogram estimate of the phase-density sup (0 when the support
    box is degenerate)."""

    times: np.ndarray
    omega_mass: np.ndarray
    u_sup: np.ndarray
    v_support_height: np.ndarray
    density_sup: np.ndarray

    def __post_init__(self):
        fields = {
            "times": self.times,
            "omega_mass": self.omega_mass,
            "u_sup": self.u_sup,
            "v_support_height": self.v_support_height,
            "density_sup": self.density_sup,
        }
        n = None
        for name, raw in fields.items():
            arr = np.asarray(raw, dtype=float)
            if arr.ndim != 1 or arr.size == 0:
                raise ConfigError(f"trace field {name} must be a non-empty vector")
            if not np.all(np.isfinite(arr)) or np.any(arr < 0.0):
                raise ConfigError(f"trace field {name} must be finite and non-negative")
            if n is None:
                n = arr.size
            elif arr.size != n:
                raise ConfigError("trace fields must share one length")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if np.any(np.diff(self.times) < 0.0):
            raise ConfigError("trace times must be non-decreasing")

    def __len__(self) -> int:
        return self.times.size


@dataclass(frozen=True)
class CheckResult:
    """Outcome of one invariant check: `value` is the measured quantity,
    `limit` what it must not exceed (value <= limit passes unless the
    docstring of the check says otherwise)."""

    name: str
    passed: bool
    value: float
    limit: float
    witness: str = ""
    warning: bool = False

    def __str__(self) -> str:
        tag = "WARN" if self.warning and not self.passed else (
            "PASS" if self.passed else "FAIL"
        )
        return f"[{tag}] {self.name}: value={self.value:.6g} limit={self.limit:.6g} {self.witness}".rstrip()


def check_sparsity(trace: ConstraintTrace, c: float, n_atoms: int) -> CheckResult:
    """Control-region mass never exceeds c + 2/N (the extra term covers
    atoms sitting exactly on region boundaries)."""
    limit = c + SPARSITY_EXTRA_ATOMS / n_atoms
    worst_i = int(np.argmax(trace.omega_mass))
    value = float(trace.omega_mass[worst_i])
    return CheckResult(
        name="sparsity",
        passed=value <= limit,
        value=value,
        limit=limit,
        witness=f"worst at t={trace.times[worst_i]:.6g}",
    )


def _plan_sample_box(plan):
    """Phase box (on the braked axis) covering the control region with a
    margin, so amplitude/Lipschitz sampling sees the bump edges."""
    x_lo = float(plan.partition[0] - 3.0 * plan.delta)
    x_hi = float(plan.partition[-1] + 3.0 * plan.delta)
    v_lo = -plan.eta
    v_hi = plan.V + 2.0 * plan.eta
    return x_lo, x_hi, v_lo, v_hi


def check_amplitude(plan, n_samples: int = 10_000, seed: int = 0) -> CheckResult:
    """Bump values stay in [0, 1] over a sampled phase box around the
    control region, and the value 1 is attained at each slab's core."""
    rng = np.random.default_rng(seed)
    x_lo, x_hi, v_lo, v_hi = _plan_sample_box(plan)
    xs = rng.uniform(x_lo, x_hi, size=n_samples)
    vs = rng.uniform(v_lo, v_hi, size=n_samples)
    worst = 0.0
    attained = 0.0
    v_core = 0.5 * (plan.eta + plan.V)
    for i in range(1, plan.n + 1):
        vals = plan.bump(i, xs, vs)
        worst = max(worst, float(vals.max(initial=0.0)))
        lo, hi = plan.core_x_interval(i)
        core_val = float(plan.bump(i, np.array([0.5 * (lo + hi)]), np.array([v_core]))[0])
        attained = max(attained, core_val)
    limit = 1.0 + AMPLITUDE_TOL
    passed = worst <= limit and attained >= 1.0 - 1e-12
    return CheckResult(
        name="amplitude",
        passed=passed,
        value=worst,
        limit=limit,
        witness=f"core value {attained:.12g}",
    )


def check_lipschitz(plan, n_pairs: int = 10_000, seed: int = 1) -> CheckResult:
    """Finite-difference slopes of each slab's bump stay at or below
    max(1/delta, 1/eta), measured over random nearby point pairs in the
    (position, velocity) plane of the braked axis."""
    rng = np.random.default_rng(seed)
    x_lo, x_hi, v_lo, v_hi = _plan_sample_box(plan)
    scale = 1e-3 * min(plan.delta, plan.eta)
    xs = rng.uniform(x_lo, x_hi, size=n_pairs)
    vs = rng.uniform(v_lo, v_hi, size=n_pairs)
    ang = rng.uniform(0.0, 2.0 * math.pi, size=n_pairs)
    rad = rng.uniform(0.1, 1.0, size=n_pairs) * scale
    xs2 = xs + rad * np.cos(ang)
    vs2 = vs + rad * np.sin(ang)
    dist = np.hypot(xs2 - xs, vs2 - vs)
    worst = 0.0
    for i in range(1, plan.n + 1):
        a = plan.bump(i, xs, vs)
        b = plan.bump(i, xs2, vs2)
        worst = max(worst, float(np.max(np.abs(a - b) / dist)))
    limit = max(1.0 / plan.delta, 1.0 / plan.eta) + CONTROL_LIPSCHITZ_TOL
    return CheckResult(
        name="control-lipschitz",
        passed=worst <= limit,
        value=worst,
        limit=limit,
    )


def check_step_contraction(record) -> CheckResult:
    """Measured end-of-step supports obey the one-step predictions:
    V_meas <= V_pred and X_meas <= X_pred, both up to CONTRACTION_TOL.
    `value` is the larger overshoot (negative when both hold strictly)."""
    over_v = record.V_meas - record.V_pred
    over_x = record.X_meas - record.X_pred
    value = max(over_v, over_x)
    return CheckResult(
        name="step-contraction",
        passed=value <= CONTRACTION_TOL,
        value=value,
        limit=CONTRACTION_TOL,
        witness=f"V overshoot {over_v:.3g}, X overshoot {over_x:.3g}",
    )


def check_partial_sum(T_values, V0: float, alpha: float, n: int) -> CheckResult:
    """Step durations of one pass satisfy exp(-1/alpha)/n * sum(T) <= V0,
    the accounting identity behind the horizon bound."""
    total = float(np.sum(np.asarray(T_values, dtype=float)))
    value = math.exp(-1.0 / alpha) / n * total
    return CheckResult(
        name="partial-sum",
        passed=value <= V0 + PARTIAL_SUM_TOL,
        value=value,
        limit=V0 + PARTIAL_SUM_TOL,
        witness=f"{len(np.atleast_1d(np.asarray(T_values)))} steps, horizon {total:.6g}",
    )


def check_horizon_budget(pass_record) -> CheckResult:
    """A pass uses control time at most exp(1/alpha) * n * V0."""
    return CheckResult(
        name="horizon-budget",
        passed=pass_record.horizon <= pass_record.horizon_bound + PARTIAL_SUM_TOL,
        value=pass_record.horizon,
        limit=pass_record.horizon_bound + PARTIAL_SUM_TOL,
        witness=f"axis {pass_record.axis}"
        + (" mirrored" if pass_record.reflected else ""),
    )


def check_density_growth(trace: ConstraintTrace, F_bar: float) -> CheckResult:
    """Warning-level: the histogram density sup should obey
    density_sup(t) <= density_sup(0) * exp(F_bar * t) * (1 + slack), with
    F_bar = L d + 1/eta supplied by the caller and a 50% histogram slack.
    Skipped (passes vacuously) when the starting estimate is degenerate."""
    d0 = float(trace.density_sup[0])
    if d0 <= 0.0:
        return CheckResult(
            name="density-growth",
            passed=True,
            value=0.0,
            limit=1.0,
            witness="degenerate starting density, skipped",
            warning=True,
        )
    dt = trace.times - trace.times[0]
    allowed = d0 * np.exp(F_bar * dt) * (1.0 + DENSITY_GROWTH_SLACK)
    ratio = trace.density_sup / allowed
    value = float(ratio.max())
    return CheckResult(
        name="density-growth",
        passed=value <= 1.0,
        value=value,
        limit=1.0,
        witness=f"growth-rate bound {F_bar:.4g}",
        warning=True,
    )


def check_divergence_bound(
    mu, kernel, n_points: int = 100, seed: int = 2, h: float = 1e-5
) -> CheckResult:
    """|div_v of the mean-field force| <= L * d at sampled phase points,
    estimated by central differences of width h."""
    rng = np.random.default_rng(seed)
    d = mu.dim
    pos = mu.positions
    vel = mu.velocities
    x_lo, x_hi = pos.min(axis=0), pos.max(axis=0)
    v_lo, v_hi = vel.min(axis=0), vel.max(axis=0)
    step = h
    xs = rng.uniform(x_lo, x_hi + 1e-300, size=(n_points, d))
    vs = rng.uniform(v_lo, v_hi + 1e-300, size=(n_points, d))
    worst = 0.0
    witness = ""
    for x, v in zip(xs, vs):
        div = 0.0
        for a in range(d):
            e = np.zeros(d)
            e[a] = step
            fp = mean_field_force(mu, kernel, x, v + e)[a]
            fm = mean_field_force(mu, kernel, x, v - e)[a]
            div += (fp - fm) / (2.0 * step)
        if abs(div) > worst:
            worst = abs(div)
            witness = f"at x={np.round(x, 4)}, v={np.round(v, 4)}"
    limit = kernel.lipschitz_L * d + DIVERGENCE_TOL
    return CheckResult(
        name="divergence-bound",
        passed=worst <= limit,
        value=worst,
        limit=limit,
        witness=witness,
    )


def check_equivariance(
    mu0, kernel, shift, boost, horizon: float, integrator
) -> CheckResult:
    """Uncontrolled dynamics commute with rigid translations in position
    and with velocity boosts: shifting the initial state by (s, u) turns
    the trajectory (x(t), v(t)) into (x(t) + s + u t, v(t) + u)."""
    shift = np.asarray(shift, dtype=float).ravel()
    boost = np.asarray(boost, dtype=float).ravel()
    if shift.size != mu0.dim or boost.size != mu0.dim:
        raise ConfigError("shift and boost must match the measure dimension")
    t1 = float(horizon)
    base = simulate(mu0, kernel, None, 0.0, t1, integrator)
    moved0 = mu0.with_state(mu0.positions + shift, mu0.velocities + boost)
    moved = simulate(moved0, kernel, None, 0.0, t1, integrator)
    worst = 0.0
    for (t, ma), (_, mb) in zip(base, moved):
        dx = np.abs(mb.positions - (ma.positions + shift + boost * t)).max()
        dv = np.abs(mb.velocities - (ma.velocities + boost)).max()
        worst = max(worst, float(dx), float(dv))
    return CheckResult(
        name="equivariance",
        passed=worst <= EQUIVARIANCE_TOL,
        value=worst,
        limit=EQUIVARIANCE_TOL,
        witness=f"horizon {t1}",
    )


def check_delta_floor(record) -> CheckResult:
    """Warning-level: the chosen widening should not fall below (half of)
    c / (12 * position-marginal density sup), the value any density-bounded
    profile admits.  `value` is the measured widening, `limit` the floor
    it must stay above (check passes when value >= limit)."""
    rho = record.x_density_sup_start
    if rho <= 0.0:
        return CheckResult(
            name="delta-floor",
            passed=True,
            value=record.delta,
            limit=0.0,
            witness="degenerate marginal density, skipped",
            warning=True,
        )
    floor = record.plan.c / (12.0 * rho) * DELTA_FLOOR_SLACK
    return CheckResult(
        name="delta-floor",
        passed=record.delta >= floor,
        value=record.delta,
        limit=floor,
        witness=f"marginal density sup {rho:.4g}",
        warning=True,
    )


def run_report_checks(report, kernel=None, mu0=None, dim: int | None = None):
    """All applicable checks for an alignment report, hard checks first.

    Per-step checks aggregate to the single worst step.  If `kernel` and
    `mu0` are given, the divergence bound is checked at the initial state
    as well.  Returns a list of CheckResult.
    """
    results: list[CheckResult] = []
    steps = report.steps
    if steps:
        d = dim if dim is not None else steps[0].v_box_lo_before.size
        n_atoms = report.final_measure.n_particles
        results.append(
            _worst(
                [check_sparsity(s.trace, s.plan.c, n_atoms) for s in steps]
            )
        )
        results.append(_worst([check_amplitude(s.plan) for s in steps]))
        results.append(_worst([check_lipschitz(s.plan) for s in steps]))
        results.append(_worst([check_step_contraction(s) for s in steps]))
        results.append(
            _worst(
                [
                    check_density_growth(
                        s.trace, s.plan.lipschitz_L * d + 1.0 / s.eta
                    )
                    for s in steps
                ]
            )
        )
        results.append(_worst([check_delta_floor(s) for s in steps]))
    for p in report.passes:
        if p.n_steps == 0:
            continue
        T_values = [s.T for s in steps if p.t_start <= s.t_start < p.t_end]
        results.append(check_partial_sum(T_values, p.V0, p.alpha, p.n))
        results.append(check_horizon_budget(p))
    if kernel is not None and mu0 is not None:
        results.append(check_divergence_bound(mu0, kernel))
    return results


def _worst(results):
    """The result with the smallest margin to its limit (any failure wins
    over any pass); assumes all results share a name."""
    fails = [r for r in results if not r.passed]
    pool = fails if fails else results
    return min(pool, key=lambda r: r.limit - r.value)
