"""Synthesis of sparse bounded controls that steer a cooperative particle
ensemble to approximate velocity consensus.

The construction works on one coordinate axis at a time, in a frame where
that axis's velocity marginal lies in [0, V]:

* split the position marginal into n = ceil(2/c) slabs of mass c/2, where
  c is the mass budget a control region may cover;
* widen each slab three times by delta, the largest widening for which
  every widened slab still carries mass at most c;
* brake with a trapezoidal bump of unit amplitude supported on the twice-
  widened slab times the velocity band [0, V + eta], equal to 1 on the
  once-widened slab times [eta, V];
* cycle through the slabs in n equal time slots of total length T.

One such step provably shrinks the velocity support height from V to
max(V - exp(-L T) T / n, eta (1 - L T) + L T V); iterating while the
measured height stays above the precision threshold yields consensus in
total control time at most exp(1/alpha) * n * V0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .dynamics import (
    IntegratorConfig,
    InteractionKernel,
    reflect_kernel,
    simulate,
)
from .errors import (
    ConfigError,
    ConstraintBreachError,
    DegenerateConcentrationError,
    FrameError,
    SlotError,
)
from .measures import EmpiricalMeasure, quantile_partition, support_box
from .tolerances import (
    FRAME_NEGATIVE_V_TOL,
    MASS_TOL,
    SLAB_COUNT_SNAP,
    SPARSITY_EXTRA_ATOMS,
)
from .verify import ConstraintTrace

__all__ = [
    "AlignmentConfig",
    "FundamentalStepPlan",
    "ControlField",
    "FrameMap",
    "StepRecord",
    "PassRecord",
    "AlignmentReport",
    "compute_n",
    "compute_delta",
    "select_parameters",
    "build_step_plan",
    "eval_control",
    "reduce_frame",
    "run_fundamental_step",
    "run_alignment",
]

#: hard ceiling on the outer-iteration budget
MAX_STEPS_CEILING = 100_000


def compute_n(c: float) -> int:
    """Number of slabs, ceil(2/c), with the quotient snapped to the nearest
    integer first so that budgets like 1/3 do not pick up a spurious extra
    slab from floating-point division."""
    if not (isinstance(c, (int, float)) and math.isfinite(c) and 0.0 < c <= 1.0):
        raise ConfigError(f"mass budget c must lie in (0, 1], got {c!r}")
    q = 2.0 / float(c)
    nearest = round(q)
    if abs(q - nearest) <= SLAB_COUNT_SNAP * max(1.0, abs(q)):
        return int(nearest)
    return int(math.ceil(q))


def compute_delta(
    mu: EmpiricalMeasure, partition: np.ndarray, c: float, axis: int
) -> float:
    """Largest widening delta such that every open interval
    (p_{i-1} - 3 delta, p_i + 3 delta), all other coordinates free, carries
    mass at most c.

    Mass as a function of delta is piecewise constant with jumps exactly
    where an atom enters an interval, so the supremum is found by scanning
    atom-distance breakpoints; no search tolerance is involved.  Atoms
    sitting exactly on a widened endpoint do not count (the interval is
    open).  The result is capped at the position-support width and is 0
    when some unwidened closed slab already exceeds the budget.
    """
    partition = np.asarray(partition, dtype=float)
    if partition.ndim != 1 or partition.size < 2 or np.any(np.diff(partition) < 0):
        raise ConfigError("partition must be a non-decreasing vector of cut points")
    if not (0.0 < c <= 1.0):
        raise ConfigError(f"mass budget c must lie in (0, 1], got {c!r}")
    live = mu.weights > 0.0
    coords = mu.positions[live, axis]
    weights = mu.weights[live]
    cap = float(coords.max() - coords.min())

    best = math.inf
    for i in range(partition.size - 1):
        lo, hi = float(partition[i]), float(partition[i + 1])
        inside = (coords >= lo) & (coords <= hi)
        base = float(np.sum(weights[inside]))
        if base > c + MASS_TOL:
            return 0.0
        # distance (in 3*delta units) at which each outside atom enters
        dist = np.where(coords < lo, lo - coords, coords - hi)[~inside]
        w_out = weights[~inside]
        if dist.size == 0:
            continue
        order = np.argsort(dist, kind="stable")
        dist = dist[order]
        w_out = w_out[order]
        uniq, start = np.unique(dist, return_index=True)
        grp = np.add.reduceat(w_out, start)
        cum = base + np.cumsum(grp)
        breaking = np.nonzero(cum > c + MASS_TOL)[0]
        if breaking.size:
            best = min(best, float(uniq[breaking[0]]))
    delta = cap if best == math.inf else min(best / 3.0, cap)
    return max(delta, 0.0)


def select_parameters(V: float, delta: float, L: float, n: int, epsilon: float):
    """Step duration, band height, and the rate constant alpha.

        alpha = 1 + 3 / (n L epsilon)
        T     = min(delta / V, 1 / (alpha L))
        eta   = (V - exp(-L T) T / (n (1 - L T))) / 2

    Requires V >= epsilon / 2, which guarantees 0 < eta < V and L T < 1.
    Returns (T, eta, alpha).
    """
    if not (math.isfinite(L) and L > 0.0):
        raise ConfigError(f"Lipschitz constant must be finite and > 0, got {L}")
    if not (math.isfinite(epsilon) and epsilon > 0.0):
        raise ConfigError(f"precision must be finite and > 0, got {epsilon}")
    if n < 1:
        raise ConfigError(f"need n >= 1 slabs, got {n}")
    if not (math.isfinite(delta) and delta > 0.0):
        raise ConfigError(f"widening must be finite and > 0, got {delta}")
    if not (math.isfinite(V) and V >= epsilon / 2.0):
        raise ConfigError(
            f"support height {V} below epsilon/2 = {epsilon / 2.0}; nothing to steer"
        )
    alpha = 1.0 + 3.0 / (n * L * epsilon)
    T = min(delta / V, 1.0 / (alpha * L))
    eta = 0.5 * (V - math.exp(-L * T) * T / (n * (1.0 - L * T)))
    assert 0.0 < eta < V and L * T < 1.0
    return T, eta, alpha


@dataclass(frozen=True)
class AlignmentConfig:
    """Parameters of a full steering run.

    c: mass budget for the active control region; epsilon: target radius of
    the final velocity support around v_star; lipschitz_L: validated bound
    for the interaction kernel on the run's support box.
    """

    c: float
    epsilon: float
    v_star: np.ndarray
    lipschitz_L: float
    integrator: IntegratorConfig = IntegratorConfig()
    max_steps: int | None = None
    trace_density_bins: int = 16

    def __post_init__(self):
        if not (math.isfinite(self.c) and 0.0 < self.c <= 1.0):
            raise ConfigError(f"mass budget c must lie in (0, 1], got {self.c}")
        if not (math.isfinite(self.epsilon) and self.epsilon > 0.0):
            raise ConfigError(f"precision must be finite and > 0, got {self.epsilon}")
        if not (math.isfinite(self.lipschitz_L) and self.lipschitz_L >= 0.0):
            raise ConfigError("lipschitz_L must be finite and >= 0")
        vs = np.asarray(self.v_star, dtype=float).ravel()
        if vs.size == 0 or not np.all(np.isfinite(vs)):
            raise ConfigError("v_star must be a finite vector")
        object.__setattr__(self, "v_star", vs)
        if self.max_steps is not None and self.max_steps < 1:
            raise ConfigError(f"max_steps must be >= 1, got {self.max_steps}")
        if self.trace_density_bins < 1:
            raise ConfigError("trace_density_bins must be >= 1")


@dataclass(frozen=True)
class FundamentalStepPlan:
    """Frozen geometry of one braking step along one axis.

    partition holds the n+1 slab cut points; slab i (1-based) covers
    (p_{i-1}, p_i], is braked during slot i = [(i-1) T / n, i T / n), and
    its control region spans [p_{i-1} - 2 delta, p_i + 2 delta] in position
    and [0, V + eta] in velocity.
    """

    axis: int
    c: float
    n: int
    partition: np.ndarray
    delta: float
    eta: float
    T: float
    V: float
    X: float
    lipschitz_L: float
    epsilon: float
    alpha: float

    def __post_init__(self):
        part = np.asarray(self.partition, dtype=float)
        part.setflags(write=False)
        object.__setattr__(self, "partition", part)
        if self.n != compute_n(self.c):
            raise ConfigError(f"n = {self.n} inconsistent with budget c = {self.c}")
        if part.size != self.n + 1 or np.any(np.diff(part) < 0):
            raise ConfigError("partition must hold n+1 non-decreasing points")
        if not (self.delta > 0.0):
            raise DegenerateConcentrationError(
                "no positive widening exists for this plan"
            )
        if not (0.0 < self.eta < self.V):
            raise ConfigError(f"band height eta = {self.eta} outside (0, V = {self.V})")
        if not (0.0 < self.T <= self.delta / self.V + 1e-15):
            raise ConfigError(
                f"step duration T = {self.T} outside (0, delta/V = {self.delta / self.V}]"
            )
        if self.X < 0.0:
            raise ConfigError("position-support width must be non-negative")

    # -- schedule ------------------------------------------------------------

    def slot_of(self, t: float, clamp: bool = False) -> int:
        """1-based index of the slab braked at time t in [0, T)."""
        if clamp:
            t = min(max(t, 0.0), self.T * (1.0 - 1e-15))
        if not (0.0 <= t < self.T):
            raise SlotError(f"t = {t} outside the active window [0, {self.T})")
        return min(int(t * self.n / self.T) + 1, self.n)

    def slot_interval(self, i: int):
        self._check_slab(i)
        return ((i - 1) * self.T / self.n, i * self.T / self.n)

    def slot_edges(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.n + 1)

    # -- geometry ------------------------------------------------------------

    def _check_slab(self, i: int):
        if not (1 <= i <= self.n):
            raise SlotError(f"slab index {i} outside 1..{self.n}")

    def core_x_interval(self, i: int):
        self._check_slab(i)
        return (self.partition[i - 1] - self.delta, self.partition[i] + self.delta)

    def omega_x_interval(self, i: int):
        self._check_slab(i)
        return (
            self.partition[i - 1] - 2.0 * self.delta,
            self.partition[i] + 2.0 * self.delta,
        )

    def v_band(self):
        return (0.0, self.V + self.eta)

    # -- predictions ----------------------------------------------------------

    def predicted_next_V(self) -> float:
        decay = math.exp(-self.lipschitz_L * self.T) * self.T / self.n
        drift = (
            self.eta * (1.0 - self.lipschitz_L * self.T)
            + self.lipschitz_L * self.T * self.V
        )
        return max(self.V - decay, drift)

    def predicted_next_X(self) -> float:
        return self.X + self.T * self.V

    # -- control values --------------------------------------------------------

    def bump(self, i: int, x_coords, v_coords) -> np.ndarray:
        """Value of the braking bump of slab i at axis coordinates
        (x_coords, v_coords): the smaller of a position trapezoid (ramp
        width delta) and a velocity trapezoid (ramp width eta), each
        clipped to [0, 1].  Lipschitz constant max(1/delta, 1/eta)."""
        self._check_slab(i)
        x_coords = np.asarray(x_coords, dtype=float)
        v_coords = np.asarray(v_coords, dtype=float)
        lo, hi = self.partition[i - 1], self.partition[i]
        x_up = (x_coords - (lo - 2.0 * self.delta)) / self.delta
        x_down = ((hi + 2.0 * self.delta) - x_coords) / self.delta
        v_up = v_coords / self.eta
        v_down = ((self.V + self.eta) - v_coords) / self.eta
        r = np.minimum(np.minimum(x_up, x_down), np.minimum(v_up, v_down))
        return np.clip(r, 0.0, 1.0)

    def control_at(self, t: float, x, v) -> np.ndarray:
        """Full control vector at time t in [0, T): -bump on this plan's
        axis, zero elsewhere."""
        i = self.slot_of(t)
        return self._slot_control(i, x, v)

    def _slot_control(self, i: int, x, v) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        if x.shape != v.shape or x.shape[-1] < self.axis + 1:
            raise ConfigError("state arrays must share shape (..., d)")
        out = np.zeros_like(x)
        out[..., self.axis] = -self.bump(i, x[..., self.axis], v[..., self.axis])
        return out


def eval_control(plan: FundamentalStepPlan, t: float, x, v) -> np.ndarray:
    """Control vector field of the plan at time t, points (x, v)."""
    return plan.control_at(t, x, v)


@dataclass(frozen=True)
class ControlField:
    """A step plan placed on the global time axis."""

    plan: FundamentalStepPlan
    t_offset: float = 0.0

    def eval(self, t: float, x, v) -> np.ndarray:
        return self.plan.control_at(t - self.t_offset, x, v)

    def time_breakpoints(self) -> np.ndarray:
        return self.t_offset + self.plan.slot_edges()

    def segment_evaluator(self, ta: float, tb: float):
        """Evaluator frozen to the slab active on (ta, tb); the slab owning
        the midpoint also serves integrator stages landing exactly on the
        segment's right edge."""
        i = self.plan.slot_of(0.5 * (ta + tb) - self.t_offset, clamp=True)
        return lambda t, x, v: self.plan._slot_control(i, x, v)


def build_step_plan(
    mu: EmpiricalMeasure, cfg: AlignmentConfig, axis: int = 0
) -> FundamentalStepPlan:
    """Measure the current support, partition it, and pick the step
    parameters.  The measure must be in the canonical frame on `axis`:
    velocity marginal inside [0, V] for some V >= epsilon / 2."""
    if not (0 <= axis < mu.dim):
        raise ConfigError(f"axis {axis} out of range for dimension {mu.dim}")
    box = support_box(mu)
    V = float(box.v_hi[axis])
    v_lo = float(box.v_lo[axis])
    if v_lo < -FRAME_NEGATIVE_V_TOL * max(1.0, abs(V)):
        raise FrameError(
            f"velocity marginal dips to {v_lo}; reduce the frame before planning"
        )
    if V <= 0.0:
        raise FrameError("velocity support height is not positive; nothing to brake")
    X = box.x_width(axis)
    n = compute_n(cfg.c)
    partition = quantile_partition(mu, axis, cfg.c / 2.0, n)
    delta = compute_delta(mu, partition, cfg.c, axis)
    if delta <= 0.0:
        raise DegenerateConcentrationError(
            "mass is too concentrated: every positive widening of some slab "
            f"exceeds the budget c = {cfg.c}"
        )
    T, eta, alpha = select_parameters(V, delta, cfg.lipschitz_L, n, cfg.epsilon)
    return FundamentalStepPlan(
        axis=axis,
        c=cfg.c,
        n=n,
        partition=partition,
        delta=delta,
        eta=eta,
        T=T,
        V=V,
        X=X,
        lipschitz_L=cfg.lipschitz_L,
        epsilon=cfg.epsilon,
        alpha=alpha,
    )


# -- frame reduction -------------------------------------------------------------


@dataclass(frozen=True)
class FrameMap:
    """Invertible affine change of frame acting on one axis.

    Reduced coordinates at pass-local time tau:
        v' = sigma * v + v_shift
        x' = sigma * x + x_shift + v_shift * tau
    with sigma = +1 (Galilean boost) or -1 (mirror plus boost).  The mirror
    case must be paired with the mirrored kernel (see reflect_kernel).
    """

    axis: int
    sigma: float
    v_shift: float
    x_shift: float

    def __post_init__(self):
        if self.sigma not in (1.0, -1.0):
            raise ConfigError("sigma must be +1 or -1")

    @property
    def reflected(self) -> bool:
        return self.sigma < 0.0

    def reduce_arrays(self, x: np.ndarray, v: np.ndarray, tau: float = 0.0):
        x = np.array(x, dtype=float, copy=True)
        v = np.array(v, dtype=float, copy=True)
        x[..., self.axis] = self.sigma * x[..., self.axis] + self.x_shift + self.v_shift * tau
        v[..., self.axis] = self.sigma * v[..., self.axis] + self.v_shift
        return x, v

    def restore_arrays(self, x: np.ndarray, v: np.ndarray, tau: float = 0.0):
        x = np.array(x, dtype=float, copy=True)
        v = np.array(v, dtype=float, copy=True)
        x[..., self.axis] = self.sigma * (
            x[..., self.axis] - self.x_shift - self.v_shift * tau
        )
        v[..., self.axis] = self.sigma * (v[..., self.axis] - self.v_shift)
        return x, v

    def to_reduced(self, mu: EmpiricalMeasure, tau: float = 0.0) -> EmpiricalMeasure:
        x, v = self.reduce_arrays(mu.positions, mu.velocities, tau)
        return mu.with_state(x, v)

    def to_original(self, mu: EmpiricalMeasure, tau: float = 0.0) -> EmpiricalMeasure:
        x, v = self.restore_arrays(mu.positions, mu.velocities, tau)
        return mu.with_state(x, v)


def reduce_frame(
    mu: EmpiricalMeasure, v_star, axis: int, reflect: bool = False
) -> tuple:
    """Move one axis into the canonical frame for braking.

    Direct pass (reflect=False): boost by the target velocity plus any
    undershoot, so the axis marginal lands in [0, V] and braking steers the
    slow edge toward the target from above.  Mirror pass (reflect=True):
    flip the axis around the target raised by any overshoot, so that what
    was the slow edge becomes the top of a canonical frame.  Positions are
    translated to start at 0.  Returns (reduced measure, FrameMap); the
    map's restore_arrays/to_original invert the construction at any
    pass-local time.
    """
    v_star = np.asarray(v_star, dtype=float).ravel()
    if not (0 <= axis < mu.dim):
        raise ConfigError(f"axis {axis} out of range for dimension {mu.dim}")
    if v_star.size != mu.dim:
        raise ConfigError(f"v_star must have {mu.dim} components")
    vs = float(v_star[axis])
    rel = mu.velocities[:, axis] - vs
    if not reflect:
        sigma = 1.0
        v_shift = -(vs + min(float(rel.min()), 0.0))
        x_shift = -float(mu.positions[:, axis].min())
    else:
        sigma = -1.0
        v_shift = vs + max(float(rel.max()), 0.0)
        x_shift = float(mu.positions[:, axis].max())
    fmap = FrameMap(axis=axis, sigma=sigma, v_shift=v_shift, x_shift=x_shift)
    return fmap.to_reduced(mu), fmap


# -- one fundamental step ----------------------------------------------------------


@dataclass(frozen=True)
class StepRecord:
    """Everything measured while executing one step."""

    index: int
    axis: int
    t_start: float
    t_end: float
    n: int
    alpha: float
    epsilon: float
    X: float
    V: float
    delta: float
    eta: float
    T: float
    V_pred: float
    V_meas: float
    X_pred: float
    X_meas: float
    omega_mass_max: float
    u_sup_max: float
    density_sup_start: float
    x_density_sup_start: float
    v_box_lo_before: np.ndarray
    v_box_hi_before: np.ndarray
    v_box_lo_after: np.ndarray
    v_box_hi_after: np.ndarray
    trace: ConstraintTrace = field(repr=False)
    plan: FundamentalStepPlan = field(repr=False)


def _hist_density_sup(x, v, weights, bins: int) -> float:
    """Sup of a fixed-resolution histogram density over the current support
    box; 0.0 when the box is degenerate along some axis (untracked)."""
    sample = np.hstack([x, v])
    lo = sample.min(axis=0)
    hi = sample.max(axis=0)
    widths = hi - lo
    if np.any(widths <= 0.0):
        return 0.0
    hist, _ = np.histogramdd(
        sample, bins=sample.shape[1] * [bins], range=list(zip(lo, hi)), weights=weights
    )
    vol = float(np.prod(widths / bins))
    return float(hist.max() / vol)


def run_fundamental_step(
    mu: EmpiricalMeasure,
    kernel: InteractionKernel,
    plan: FundamentalStepPlan,
    cfg: AlignmentConfig,
    step_index: int = 0,
    t_start: float = 0.0,
):
    """Integrate one braking step and record its constraint trace.

    The control-region mass is checked against c + 2/N at every substep
    boundary; a violation aborts with ConstraintBreachError.  Returns
    (measure at T, StepRecord).
    """
    axis = plan.axis
    w = mu.weights
    n_atoms = mu.n_particles
    cap = plan.c + SPARSITY_EXTRA_ATOMS / n_atoms
    v_lo, v_hi = plan.v_band()

    times, om_mass, u_sup, v_height, dens = [], [], [], [], []

    def monitor(t, x, v):
        i = plan.slot_of(t, clamp=True)
        xl, xr = plan.omega_x_interval(i)
        xa = x[:, axis]
        va = v[:, axis]
        inside = (xa >= xl) & (xa <= xr) & (va >= v_lo) & (va <= v_hi)
        m = float(np.sum(w[inside]))
        times.append(t_start + t)
        om_mass.append(m)
        u_sup.append(float(plan.bump(i, xa, va).max(initial=0.0)))
        v_height.append(float(va.max() - va.min()))
        dens.append(_hist_density_sup(x, v, w, cfg.trace_density_bins))
        if m > cap:
            raise ConstraintBreachError(
                f"control-region mass {m} exceeds budget {plan.c} + {SPARSITY_EXTRA_ATOMS}/N"
                f" at t = {t_start + t}",
                t=t_start + t,
                value=m,
            )

    xa0 = mu.positions[mu.weights > 0.0, axis]
    x_width = float(xa0.max() - xa0.min())
    if x_width > 0.0:
        hist, _ = np.histogram(xa0, bins=64, weights=w[mu.weights > 0.0])
        x_dens = float(hist.max() * 64 / x_width)
    else:
        x_dens = 0.0

    box_before = support_box(mu)
    traj = simulate(
        mu,
        kernel,
        ControlField(plan),
        t0=0.0,
        t1=plan.T,
        config=cfg.integrator,
        monitor=monitor,
    )
    mu_end = traj[-1][1]
    box_after = support_box(mu_end)

    trace = ConstraintTrace(
        times=np.asarray(times),
        omega_mass=np.asarray(om_mass),
        u_sup=np.asarray(u_sup),
        v_support_height=np.asarray(v_height),
        density_sup=np.asarray(dens),
    )
    record = StepRecord(
        index=step_index,
        axis=axis,
        t_start=t_start,
        t_end=t_start + plan.T,
        n=plan.n,
        alpha=plan.alpha,
        epsilon=plan.epsilon,
        X=plan.X,
        V=plan.V,
        delta=plan.delta,
        eta=plan.eta,
        T=plan.T,
        V_pred=plan.predicted_next_V(),
        V_meas=float(box_after.v_hi[axis]),
        X_pred=plan.predicted_next_X(),
        X_meas=box_after.x_width(axis),
        omega_mass_max=float(max(om_mass)),
        u_sup_max=float(max(u_sup)),
        density_sup_start=dens[0],
        x_density_sup_start=x_dens,
        v_box_lo_before=np.array(box_before.v_lo),
        v_box_hi_before=np.array(box_before.v_hi),
        v_box_lo_after=np.array(box_after.v_lo),
        v_box_hi_after=np.array(box_after.v_hi),
        trace=trace,
        plan=plan,
    )
    return mu_end, record


# -- the outer loop -----------------------------------------------------------------


@dataclass(frozen=True)
class PassRecord:
    """One reduction pass: a frame, its precision threshold, and the steps
    taken inside it."""

    axis: int
    reflected: bool
    frame: FrameMap
    eps_pass: float
    alpha: float
    n: int
    V0: float
    n_steps: int
    horizon: float
    horizon_bound: float
    t_start: float
    t_end: float


@dataclass(frozen=True)
class AlignmentReport:
    steps: tuple
    passes: tuple
    terminated: bool
    total_horizon: float
    final_measure: EmpiricalMeasure
    max_velocity_deviation: float
    breach: dict | None = None
    diagnostics: str = ""

    def pass_steps(self, pass_index: int):
        p = self.passes[pass_index]
        return [
            s for s in self.steps if p.t_start <= s.t_start < p.t_end or (
                p.t_start == s.t_start == p.t_end
            )
        ]


def _default_max_steps(spread: float, dim: int, cfg: AlignmentConfig) -> int:
    """Ten times the step count a worst-case run would need if every step
    lasted the duration cap 1/(alpha L); capped at MAX_STEPS_CEILING."""
    n = compute_n(cfg.c)
    eps_hat = cfg.epsilon / math.sqrt(dim)
    L = max(cfg.lipschitz_L, 1e-12)
    alpha = 1.0 + 3.0 / (n * L * eps_hat)
    per_pass = spread * n * math.exp(1.0 / alpha) * alpha * L
    est = 10.0 * (math.ceil(per_pass) + 1) * 2 * dim
    return int(min(est, MAX_STEPS_CEILING))


def run_alignment(
    mu0: EmpiricalMeasure, kernel: InteractionKernel, cfg: AlignmentConfig
) -> AlignmentReport:
    """Steer every velocity into the epsilon-ball around v_star.

    Axes are processed in order; each axis gets a direct pass (braking the
    fast edge down toward the target) and, if mass still sits more than
    epsilon/sqrt(d) below the target, a mirrored pass.  Inside a pass,
    steps repeat while the reduced support height is at or above the pass
    threshold.  Returns a report with per-step records; terminated=False
    with diagnostics if the step budget runs out, and an attached breach
    descriptor if a step aborted on the mass constraint.
    """
    d = mu0.dim
    if cfg.v_star.size != d:
        raise ConfigError(f"v_star has {cfg.v_star.size} components, measure has {d}")
    eps_hat = cfg.epsilon / math.sqrt(d)
    rel0 = mu0.velocities - cfg.v_star
    spread = float(np.max(rel0.max(axis=0) - rel0.min(axis=0))) if mu0.n_particles else 0.0
    budget = cfg.max_steps if cfg.max_steps is not None else _default_max_steps(
        max(spread, cfg.epsilon), d, cfg
    )

    mu = mu0
    steps: list[StepRecord] = []
    passes: list[PassRecord] = []
    t_global = 0.0
    breach = None
    diagnostics = ""
    terminated = True

    for axis in range(d):
        if breach or not terminated:
            break
        for reflect in (False, True):
            rel = mu.velocities[:, axis] - cfg.v_star[axis]
            a, b = float(rel.min()), float(rel.max())
            if not reflect:
                if b < eps_hat:
                    continue
                eps_pass = eps_hat - min(a, 0.0)
            else:
                if a > -eps_hat:
                    continue
                eps_pass = eps_hat + max(b, 0.0)
            mu_red, fmap = reduce_frame(mu, cfg.v_star, axis, reflect=reflect)
            kernel_red = reflect_kernel(kernel, axis) if reflect else kernel
            pass_cfg = replace(cfg, epsilon=eps_pass, max_steps=None)
            alpha_pass = 1.0 + 3.0 / (
                compute_n(cfg.c) * max(cfg.lipschitz_L, 1e-300) * eps_pass
            )
            V0 = float(mu_red.velocities[:, axis].max())
            t_pass_start = t_global
            tau = 0.0
            n_steps_pass = 0
            while True:
                V_red = float(mu_red.velocities[:, axis].max())
                if V_red < eps_pass:
                    break
                if len(steps) >= budget:
                    terminated = False
                    diagnostics = (
                        f"step budget {budget} exhausted on axis {axis} "
                        f"({'mirrored' if reflect else 'direct'} pass) with reduced "
                        f"height {V_red} above threshold {eps_pass}"
                    )
                    break
                plan = build_step_plan(mu_red, pass_cfg, axis)
                try:
                    mu_red, rec = run_fundamental_step(
                        mu_red, kernel_red, plan, cfg,
                        step_index=len(steps), t_start=t_global,
                    )
                except ConstraintBreachError as err:
                    breach = {"t": err.t, "value": err.value, "step_index": len(steps)}
                    terminated = False
                    diagnostics = str(err)
                    break
                steps.append(rec)
                tau += plan.T
                t_global += plan.T
                n_steps_pass += 1
            mu = fmap.to_original(mu_red, tau)
            passes.append(
                PassRecord(
                    axis=axis,
                    reflected=reflect,
                    frame=fmap,
                    eps_pass=eps_pass,
                    alpha=alpha_pass,
                    n=compute_n(cfg.c),
                    V0=V0,
                    n_steps=n_steps_pass,
                    horizon=tau,
                    horizon_bound=math.exp(1.0 / alpha_pass) * compute_n(cfg.c) * V0,
                    t_start=t_pass_start,
                    t_end=t_global,
                )
            )
            if breach or not terminated:
                break

    deviation = float(
        np.max(np.linalg.norm(mu.velocities - cfg.v_star, axis=1))
    )
    if terminated and breach is None and deviation > cfg.epsilon:
        # defensive: should be unreachable if the pass logic is right
        terminated = False
        diagnostics = diagnostics or (
            f"passes completed but a velocity still sits {deviation} from the target"
        )
    return AlignmentReport(
        steps=tuple(steps),
        passes=tuple(passes),
        terminated=terminated and breach is None,
        total_horizon=t_global,
        final_measure=mu,
        max_velocity_deviation=deviation,
        breach=breach,
        diagnostics=diagnostics,
    )
