"""Interaction kernels and the particle-level transport dynamics.

The mean-field velocity field at a phase point (x, v) is the weighted sum
over atoms of psi(x_j - x, v_j - v) with psi(dx, dv) = xi(dx, dv) * dv and
xi >= 0.  Pair interactions are evaluated exactly in O(N^2); there is no
binning, truncation, or multipole acceleration, so repeated runs are
bit-identical.  Summation order is fixed (ascending particle index).
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import ConfigError, DivergenceError, KernelContractError
from .measures import EmpiricalMeasure, SupportBox, _csv_header

__all__ = [
    "InteractionKernel",
    "constant_kernel",
    "inverse_power_kernel",
    "reflect_kernel",
    "validate_kernel",
    "psi",
    "mean_field_force",
    "IntegratorConfig",
    "simulate",
    "write_trajectory",
    "read_checkpoint_csv",
]

# dispatch tags for compiled pair loops
_KIND_GENERIC = -1
_KIND_CONSTANT = 0
_KIND_INVERSE_POWER = 1


@dataclass(frozen=True)
class InteractionKernel:
    """Communication rate xi plus its declared Lipschitz constant.

    xi maps difference vectors (dx, dv), shaped (M, d), to non-negative
    rates shaped (M,).  lipschitz_L bounds |psi(a) - psi(b)| / |a - b| for
    psi(dx, dv) = xi(dx, dv) * dv on the box the kernel was declared for;
    the bound is validated by sampling (validate_kernel), never assumed.

    kind/params are dispatch hints for the compiled pair loops; kernels
    built by hand run through the generic vectorised path.
    """

    name: str
    xi: callable = field(repr=False)
    lipschitz_L: float
    kind: int = _KIND_GENERIC
    params: tuple = ()
    isotropic: bool = False

    def __post_init__(self):
        if not (math.isfinite(self.lipschitz_L) and self.lipschitz_L >= 0.0):
            raise ConfigError(f"lipschitz_L must be finite and >= 0, got {self.lipschitz_L}")


def constant_kernel(strength: float, name: str = "constant") -> InteractionKernel:
    """xi == strength everywhere.  Valid on all of phase space with
    L = strength, since psi differences reduce to strength * dv."""
    if not (math.isfinite(strength) and strength >= 0.0):
        raise ConfigError(f"strength must be finite and >= 0, got {strength}")
    K = float(strength)

    def xi(dx, dv):
        dx = np.asarray(dx, dtype=float)
        return np.full(dx.shape[:-1], K) if dx.ndim > 1 else K

    return InteractionKernel(
        name=name, xi=xi, lipschitz_L=K, kind=_KIND_CONSTANT, params=(K,), isotropic=True
    )


def inverse_power_kernel(
    strength: float, beta: float, v_max: float, name: str = "inverse-power"
) -> InteractionKernel:
    """xi(dx, dv) = strength / (1 + |dx|^2)^beta.

    The Lipschitz constant is derived analytically and is valid whenever
    velocity differences stay below v_max in Euclidean norm (positions are
    unrestricted):

        |psi(a) - psi(b)| <= K |dv_a - dv_b| + sup|grad xi| * v_max * |dx_a - dx_b|
                          <= sqrt(K^2 + (C v_max)^2) * |a - b|

    where C = sup_r 2 beta K r / (1 + r^2)^(beta+1), attained at
    r = 1 / sqrt(2 beta + 1).
    """
    if not (math.isfinite(strength) and strength >= 0.0):
        raise ConfigError(f"strength must be finite and >= 0, got {strength}")
    if not (math.isfinite(beta) and beta > 0.0):
        raise ConfigError(f"beta must be finite and > 0, got {beta}")
    if not (math.isfinite(v_max) and v_max > 0.0):
        raise ConfigError(f"v_max must be finite and > 0, got {v_max}")
    K, b = float(strength), float(beta)
    r_star = 1.0 / math.sqrt(2.0 * b + 1.0)
    grad_sup = 2.0 * b * K * r_star / (1.0 + r_star * r_star) ** (b + 1.0)
    L = math.sqrt(K * K + (grad_sup * float(v_max)) ** 2)

    def xi(dx, dv):
        dx = np.asarray(dx, dtype=float)
        r2 = np.sum(dx * dx, axis=-1)
        return K / (1.0 + r2) ** b

    return InteractionKernel(
        name=name, xi=xi, lipschitz_L=L, kind=_KIND_INVERSE_POWER, params=(K, b),
        isotropic=True,
    )


def reflect_kernel(kernel: InteractionKernel, axis: int) -> InteractionKernel:
    """Kernel seen in a frame where coordinate `axis` is mirrored.

    The mirrored dynamics uses psi'(dx, dv) = R psi(R dx, R dv) with R the
    reflection, which for psi = xi * dv means xi'(dx, dv) = xi(R dx, R dv).
    Positivity and the Lipschitz constant survive because R is an isometry.
    Kernels that only depend on |dx| and not on dv are unchanged.
    """
    if kernel.isotropic:
        return kernel
    base = kernel.xi

    def xi(dx, dv):
        dx = np.array(dx, dtype=float, copy=True)
        dv = np.array(dv, dtype=float, copy=True)
        dx[..., axis] *= -1.0
        dv[..., axis] *= -1.0
        return base(dx, dv)

    return InteractionKernel(
        name=f"{kernel.name}|mirrored{axis}", xi=xi, lipschitz_L=kernel.lipschitz_L,
        kind=_KIND_GENERIC, params=(), isotropic=False,
    )


def psi(kernel: InteractionKernel, dx, dv) -> np.ndarray:
    """Single-pair interaction psi(dx, dv) = xi(dx, dv) * dv."""
    dx = np.asarray(dx, dtype=float).ravel()
    dv = np.asarray(dv, dtype=float).ravel()
    s = float(kernel.xi(dx, dv))
    if not math.isfinite(s) or s < 0.0:
        raise KernelContractError(f"kernel {kernel.name!r} returned rate {s!r}")
    return s * dv


def validate_kernel(
    kernel: InteractionKernel, box: SupportBox, n_samples: int = 200, seed: int = 0
) -> None:
    """Sample difference vectors inside the box and check the kernel
    contract: xi finite and >= 0, and the declared Lipschitz bound for psi.
    Raises KernelContractError on the first violation."""
    rng = np.random.default_rng(seed)
    d = box.x_lo.shape[0]
    dx_span = np.asarray(box.x_hi) - np.asarray(box.x_lo)
    dv_span = np.asarray(box.v_hi) - np.asarray(box.v_lo)
    # difference vectors of points in the box live in [-span, span]
    dxs = rng.uniform(-dx_span, dx_span, size=(2 * n_samples, d))
    dvs = rng.uniform(-dv_span, dv_span, size=(2 * n_samples, d))
    rates = np.asarray(kernel.xi(dxs, dvs), dtype=float)
    if rates.shape != (2 * n_samples,):
        raise KernelContractError(
            f"kernel {kernel.name!r} returned shape {rates.shape} for {2 * n_samples} pairs"
        )
    if not np.all(np.isfinite(rates)) or np.any(rates < 0.0):
        raise KernelContractError(f"kernel {kernel.name!r} produced a negative or non-finite rate")
    pa = rates[:n_samples, None] * dvs[:n_samples]
    pb = rates[n_samples:, None] * dvs[n_samples:]
    gap = np.linalg.norm(pa - pb, axis=1)
    dist = np.sqrt(
        np.sum((dxs[:n_samples] - dxs[n_samples:]) ** 2, axis=1)
        + np.sum((dvs[:n_samples] - dvs[n_samples:]) ** 2, axis=1)
    )
    bad = gap > kernel.lipschitz_L * dist * (1.0 + 1e-12) + 1e-15
    if np.any(bad):
        i = int(np.argmax(bad))
        raise KernelContractError(
            f"kernel {kernel.name!r} breaks its Lipschitz bound {kernel.lipschitz_L}: "
            f"|psi gap| = {gap[i]} over distance {dist[i]}"
        )


def mean_field_force(mu: EmpiricalMeasure, kernel: InteractionKernel, x, v) -> np.ndarray:
    """Velocity field of the measure at one phase point:
    sum_j w_j psi(x_j - x, v_j - v), accumulated in ascending atom order."""
    x = np.asarray(x, dtype=float).ravel()
    v = np.asarray(v, dtype=float).ravel()
    if x.shape != (mu.dim,) or v.shape != (mu.dim,):
        raise ConfigError(f"query point must be two {mu.dim}-vectors")
    dx = mu.positions - x
    dv = mu.velocities - v
    s = np.asarray(kernel.xi(dx, dv), dtype=float)
    if not np.all(np.isfinite(s)) or np.any(s < 0.0):
        raise KernelContractError(f"kernel {kernel.name!r} produced a negative or non-finite rate")
    return np.add.reduce((mu.weights * s)[:, None] * dv, axis=0)


# -- compiled pair loops -------------------------------------------------------
# Each loop accumulates the force on atom i over j = 0..N-1 in order, so the
# result is a deterministic function of the atom ordering.


@njit(cache=True)
def _pairs_const_d1(x, v, w, K, out):
    n = x.shape[0]
    for i in range(n):
        s0 = 0.0
        s1 = 0.0
        for j in range(n):
            q = w[j] * K
            s0 += q
            s1 += q * v[j]
        out[i] = s1 - v[i] * s0


@njit(cache=True)
def _pairs_invpow1_d1(x, v, w, K, out):
    n = x.shape[0]
    for i in range(n):
        s0 = 0.0
        s1 = 0.0
        xi_ = x[i]
        for j in range(n):
            dx = x[j] - xi_
            q = w[j] * (K / (1.0 + dx * dx))
            s0 += q
            s1 += q * v[j]
        out[i] = s1 - v[i] * s0


@njit(cache=True)
def _pairs_invpow_d1(x, v, w, K, beta, out):
    n = x.shape[0]
    for i in range(n):
        s0 = 0.0
        s1 = 0.0
        xi_ = x[i]
        for j in range(n):
            dx = x[j] - xi_
            q = w[j] * (K / (1.0 + dx * dx) ** beta)
            s0 += q
            s1 += q * v[j]
        out[i] = s1 - v[i] * s0


@njit(cache=True)
def _pairs_const_dn(v, w, K, out):
    n, d = v.shape
    for i in range(n):
        for k in range(d):
            out[i, k] = 0.0
        for j in range(n):
            q = w[j] * K
            for k in range(d):
                out[i, k] += q * (v[j, k] - v[i, k])


@njit(cache=True)
def _pairs_invpow1_dn(x, v, w, K, out):
    n, d = x.shape
    for i in range(n):
        for k in range(d):
            out[i, k] = 0.0
        for j in range(n):
            r2 = 0.0
            for k in range(d):
                t = x[j, k] - x[i, k]
                r2 += t * t
            q = w[j] * (K / (1.0 + r2))
            for k in range(d):
                out[i, k] += q * (v[j, k] - v[i, k])


@njit(cache=True)
def _pairs_invpow_dn(x, v, w, K, beta, out):
    n, d = x.shape
    for i in range(n):
        for k in range(d):
            out[i, k] = 0.0
        for j in range(n):
            r2 = 0.0
            for k in range(d):
                t = x[j, k] - x[i, k]
                r2 += t * t
            q = w[j] * (K / (1.0 + r2) ** beta)
            for k in range(d):
                out[i, k] += q * (v[j, k] - v[i, k])


def _pair_forces_generic(x, v, w, kernel) -> np.ndarray:
    """Chunked vectorised fallback for hand-built kernels."""
    n, d = x.shape
    out = np.empty_like(x)
    block = max(1, int(2_000_000 // max(n, 1)))
    for i0 in range(0, n, block):
        i1 = min(i0 + block, n)
        dx = x[None, :, :] - x[i0:i1, None, :]
        dv = v[None, :, :] - v[i0:i1, None, :]
        s = np.asarray(
            kernel.xi(dx.reshape(-1, d), dv.reshape(-1, d)), dtype=float
        ).reshape(i1 - i0, n)
        if not np.all(np.isfinite(s)) or np.any(s < 0.0):
            raise KernelContractError(
                f"kernel {kernel.name!r} produced a negative or non-finite rate"
            )
        out[i0:i1] = np.einsum("bn,n,bnd->bd", s, w, dv)
    return out


def _pair_forces(x, v, w, kernel) -> np.ndarray:
    """Mean-field force on every atom; dispatches to a compiled loop for
    the built-in kernel families."""
    n, d = x.shape
    out = np.empty_like(x)
    if kernel.kind == _KIND_CONSTANT:
        (K,) = kernel.params
        if d == 1:
            _pairs_const_d1(x[:, 0], v[:, 0], w, K, out[:, 0])
        else:
            _pairs_const_dn(v, w, K, out)
        return out
    if kernel.kind == _KIND_INVERSE_POWER:
        K, beta = kernel.params
        if d == 1:
            if beta == 1.0:
                _pairs_invpow1_d1(x[:, 0], v[:, 0], w, K, out[:, 0])
            else:
                _pairs_invpow_d1(x[:, 0], v[:, 0], w, K, beta, out[:, 0])
        else:
            if beta == 1.0:
                _pairs_invpow1_dn(x, v, w, K, out)
            else:
                _pairs_invpow_dn(x, v, w, K, beta, out)
        return out
    return _pair_forces_generic(x, v, w, kernel)


# -- time integration ----------------------------------------------------------


@dataclass(frozen=True)
class IntegratorConfig:
    scheme: str = "rk4"
    dt_max: float = 1e-3
    snap_to_slots: bool = True

    def __post_init__(self):
        if self.scheme not in ("rk4", "explicit-euler"):
            raise ConfigError(f"unknown scheme {self.scheme!r}")
        if not (math.isfinite(self.dt_max) and self.dt_max > 0.0):
            raise ConfigError(f"dt_max must be finite and > 0, got {self.dt_max}")


class _CallableControl:
    """Adapter giving plain (t, x, v) callables the control interface."""

    def __init__(self, fn):
        self._fn = fn

    def time_breakpoints(self):
        return ()

    def segment_evaluator(self, ta: float, tb: float):
        return self._fn


def _as_control(control):
    if control is None:
        return None
    if hasattr(control, "segment_evaluator") and hasattr(control, "time_breakpoints"):
        return control
    if callable(control):
        return _CallableControl(control)
    raise ConfigError(f"cannot interpret {control!r} as a control field")


def simulate(
    mu0: EmpiricalMeasure,
    kernel: InteractionKernel,
    control=None,
    t0: float = 0.0,
    t1: float = 1.0,
    config: IntegratorConfig = IntegratorConfig(),
    checkpoints=(),
    monitor=None,
):
    """Integrate the atoms from t0 to t1 under mean field plus control.

    Returns the trajectory as a list of (t, EmpiricalMeasure) at t0, every
    requested checkpoint time, and t1.  Weights never change (the flow is
    pure transport).  Steps are sized so that control switching times and
    checkpoints are hit exactly: the interval is cut at every breakpoint
    and each piece is subdivided uniformly at or below dt_max.  `monitor`,
    if given, is called as monitor(t, x, v) at every substep boundary; the
    arrays are live views and must not be mutated.
    """
    if not (math.isfinite(t0) and math.isfinite(t1) and t1 >= t0):
        raise ConfigError(f"bad time interval [{t0}, {t1}]")
    ctrl = _as_control(control)

    cuts = {float(t0), float(t1)}
    for t in checkpoints:
        t = float(t)
        if not (t0 <= t <= t1):
            raise ConfigError(f"checkpoint {t} outside [{t0}, {t1}]")
        cuts.add(t)
    if ctrl is not None and config.snap_to_slots:
        for t in ctrl.time_breakpoints():
            t = float(t)
            if t0 < t < t1:
                cuts.add(t)
    cuts = sorted(cuts)
    record_at = {float(t0), float(t1), *(float(t) for t in checkpoints)}

    x = np.array(mu0.positions, dtype=float, copy=True)
    v = np.array(mu0.velocities, dtype=float, copy=True)
    w = np.array(mu0.weights, dtype=float, copy=True)

    euler = config.scheme == "explicit-euler"
    traj = []

    def snapshot(t):
        traj.append((t, EmpiricalMeasure(x, v, w)))

    if monitor is not None:
        monitor(cuts[0], x, v)
    snapshot(cuts[0])

    for ta, tb in zip(cuts[:-1], cuts[1:]):
        if tb <= ta:
            continue
        ev = ctrl.segment_evaluator(ta, tb) if ctrl is not None else None

        def rhs(t, xs, vs):
            a = _pair_forces(xs, vs, w, kernel)
            if ev is not None:
                a += ev(t, xs, vs)
            return a

        m = max(1, int(math.ceil((tb - ta) / config.dt_max - 1e-12)))
        h = (tb - ta) / m
        for s in range(m):
            t = ta + s * h
            if euler:
                a = rhs(t, x, v)
                x += h * v
                v += h * a
            else:
                h2 = 0.5 * h
                k1x, k1v = v.copy(), rhs(t, x, v)
                k2x = v + h2 * k1v
                k2v = rhs(t + h2, x + h2 * k1x, v + h2 * k1v)
                k3x = v + h2 * k2v
                k3v = rhs(t + h2, x + h2 * k2x, v + h2 * k2v)
                k4x = v + h * k3v
                k4v = rhs(t + h, x + h * k3x, v + h * k3v)
                x += (h / 6.0) * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
                v += (h / 6.0) * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
            t_next = tb if s == m - 1 else ta + (s + 1) * h
            if not (np.all(np.isfinite(x)) and np.all(np.isfinite(v))):
                raise DivergenceError(f"state became non-finite at t = {t_next}", t=t_next)
            if monitor is not None:
                monitor(t_next, x, v)
        if tb in record_at:
            snapshot(tb)
    return traj


# -- trajectory output ----------------------------------------------------------


def write_trajectory(traj, directory, manifest: dict | None = None) -> None:
    """Write checkpoints as atom CSVs (one file per time, a trailing t
    column) plus a manifest of run metadata."""
    os.makedirs(directory, exist_ok=True)
    for idx, (t, mu) in enumerate(traj):
        path = os.path.join(directory, f"ckpt_{idx:04d}.csv")
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(_csv_header(mu.dim) + ["t"])
            for i in range(mu.n_particles):
                row = [str(i), repr(float(mu.weights[i]))]
                row += [repr(float(c)) for c in mu.positions[i]]
                row += [repr(float(c)) for c in mu.velocities[i]]
                row.append(repr(float(t)))
                writer.writerow(row)
    if manifest is not None:
        with open(os.path.join(directory, "manifest.txt"), "w") as fh:
            for key in sorted(manifest):
                fh.write(f"{key} = {manifest[key]}\n")


def read_checkpoint_csv(path):
    """Read one trajectory checkpoint; returns (t, EmpiricalMeasure)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if len(header) < 5 or header[-1] != "t" or (len(header) - 3) % 2:
            raise ConfigError(f"{path}: malformed checkpoint header {header!r}")
        d = (len(header) - 3) // 2
        if header != _csv_header(d) + ["t"]:
            raise ConfigError(f"{path}: malformed checkpoint header {header!r}")
        pos, vel, wts, ts = [], [], [], []
        for row in reader:
            if not row:
                continue
            wts.append(float(row[1]))
            pos.append([float(c) for c in row[2 : 2 + d]])
            vel.append([float(c) for c in row[2 + d : 2 + 2 * d]])
            ts.append(float(row[-1]))
    if not wts:
        raise ConfigError(f"{path}: no atoms")
    if len(set(ts)) != 1:
        raise ConfigError(f"{path}: inconsistent timestamps")
    return ts[0], EmpiricalMeasure(np.array(pos), np.array(vel), np.array(wts))
