"""Independent reference implementations used to pin expected values.

Every oracle here recomputes a quantity the package also computes, but by a
different algorithm taken straight from the mathematical definition (a
transport linear program instead of quantile functions, a dense breakpoint
scan instead of a sorted walk, closed-form ODE solutions instead of the
integrator).  Agreement between the two is then evidence of correctness
rather than a tautology.  Test modules freeze small expected values as
literals computed from these oracles.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.optimize import linprog


def w1_lp(a_vals, a_wts, b_vals, b_wts) -> float:
    """First-order transport distance by solving the transference-plan
    linear program directly: minimise sum |a_i - b_j| * plan_ij subject to
    the plan's marginals matching the two weight vectors.  Intended for
    small instances (the plan has len(a) * len(b) unknowns)."""
    a_vals = np.asarray(a_vals, dtype=float).ravel()
    b_vals = np.asarray(b_vals, dtype=float).ravel()
    a_wts = np.asarray(a_wts, dtype=float).ravel()
    b_wts = np.asarray(b_wts, dtype=float).ravel()
    a_wts = a_wts / a_wts.sum()
    b_wts = b_wts / b_wts.sum()
    na, nb = a_vals.size, b_vals.size
    cost = np.abs(a_vals[:, None] - b_vals[None, :]).ravel()
    # row-sum constraints (source marginal) and column sums (target marginal);
    # one redundant equality is dropped so the system has full row rank
    rows = []
    rhs = []
    for i in range(na):
        r = np.zeros(na * nb)
        r[i * nb : (i + 1) * nb] = 1.0
        rows.append(r)
        rhs.append(a_wts[i])
    for j in range(nb - 1):
        r = np.zeros(na * nb)
        r[j::nb] = 1.0
        rows.append(r)
        rhs.append(b_wts[j])
    res = linprog(
        cost,
        A_eq=np.asarray(rows),
        b_eq=np.asarray(rhs),
        bounds=(0.0, None),
        method="highs",
    )
    if not res.success:  # pragma: no cover - LP on a feasible polytope
        raise RuntimeError(f"transport LP failed: {res.message}")
    return float(res.fun)


def quantile_points_scan(values, weights, slab_mass: float, n: int) -> np.ndarray:
    """Order-statistics oracle for the slab partition: interior point i is
    the smallest atom coordinate whose cumulative weight reaches i slabs of
    the discretised target mass ceil(N * slab_mass) / N.  Runs a plain
    linear scan over the sorted atoms."""
    values = np.asarray(values, dtype=float).ravel()
    weights = np.asarray(weights, dtype=float).ravel()
    keep = weights > 0.0
    values, weights = values[keep], weights[keep]
    order = np.argsort(values, kind="stable")
    values, weights = values[order], weights[order]
    n_atoms = values.size
    target = math.ceil(n_atoms * slab_mass - 1e-12) / n_atoms

    points = [float(values[0])]
    acc = 0.0
    for _ in range(n - 1):
        want = acc + target
        cum = 0.0
        chosen = None
        for val in np.unique(values):
            cum = float(weights[values <= val].sum())
            if cum >= want - 1e-12:
                chosen = float(val)
                break
        if chosen is None:
            points.append(float(values[-1]))
            acc = float(weights.sum())
        else:
            points.append(chosen)
            acc = float(weights[values <= chosen].sum())
    points.append(float(values[-1]))
    return np.asarray(points)


def delta_breakpoint_scan(values, weights, partition, c: float) -> float:
    """Brute-force widening oracle: evaluates the open-interval mass of
    every slab at every candidate widening (all atom-to-edge distances plus
    the support width) and returns the largest widening for which every
    slab's mass stays at or below the budget.

    Mass is piecewise constant in the widening, jumping exactly when an
    interval endpoint crosses an atom, so checking the candidate set is
    exhaustive.  Matches the open-interval convention: an atom exactly on a
    widened endpoint does not count.
    """
    values = np.asarray(values, dtype=float).ravel()
    weights = np.asarray(weights, dtype=float).ravel()
    keep = weights > 0.0
    values, weights = values[keep], weights[keep]
    partition = np.asarray(partition, dtype=float).ravel()
    cap = float(values.max() - values.min())
    tol = 1e-12

    def slab_open_mass(lo: float, hi: float, r: float) -> float:
        if r == 0.0:
            inside = (values >= lo) & (values <= hi)
        else:
            inside = (values > lo - r) & (values < hi + r)
        return float(weights[inside].sum())

    # closed slabs must already fit the budget
    for i in range(partition.size - 1):
        if slab_open_mass(partition[i], partition[i + 1], 0.0) > c + tol:
            return 0.0

    candidates = {3.0 * cap}
    for i in range(partition.size - 1):
        lo, hi = partition[i], partition[i + 1]
        for x in values:
            if x < lo:
                candidates.add(lo - x)
            elif x > hi:
                candidates.add(x - hi)
    best = 0.0
    for r in sorted(candidates):
        ok = all(
            slab_open_mass(partition[i], partition[i + 1], r) <= c + tol
            for i in range(partition.size - 1)
        )
        if ok:
            best = r
        else:
            break
    return min(best / 3.0, cap)


def mass_in_interval_count(values, weights, lo, hi) -> float:
    """Direct closed-interval mass by counting atoms."""
    values = np.asarray(values, dtype=float).ravel()
    weights = np.asarray(weights, dtype=float).ravel()
    return float(weights[(values >= lo) & (values <= hi)].sum())


def two_particle_gap(g0: float, K: float, t: float) -> float:
    """Closed form for the velocity gap of two equal-weight particles under
    a constant rate K: the gap obeys g' = -K g, so g(t) = g0 exp(-K t)."""
    return g0 * math.exp(-K * t)


def braking_parameters(V: float, delta: float, L: float, n: int, epsilon: float):
    """Hand transcription of the step-parameter formulas:

        alpha = 1 + 3 / (n L eps)
        T     = min(delta / V, 1 / (alpha L))
        eta   = (V - exp(-L T) * T / (n (1 - L T))) / 2

    Written out independently so tests can freeze the arithmetic.
    """
    alpha = 1.0 + 3.0 / (n * L * epsilon)
    T = min(delta / V, 1.0 / (alpha * L))
    eta = (V - math.exp(-L * T) * T / (n * (1.0 - L * T))) / 2.0
    return T, eta, alpha


def predicted_height(V: float, eta: float, T: float, L: float, n: int) -> float:
    """One-step support-height prediction:
    max(V - exp(-L T) T / n, eta (1 - L T) + L T V)."""
    return max(
        V - math.exp(-L * T) * T / n,
        eta * (1.0 - L * T) + L * T * V,
    )


def trapezoid_value(
    x: float,
    v: float,
    x_core_lo: float,
    x_core_hi: float,
    delta: float,
    eta: float,
    V: float,
) -> float:
    """Pointwise bump oracle: unit value on the core box
    [x_core_lo, x_core_hi] x [eta, V], falling linearly to zero across a
    width-delta position ramp and width-eta velocity ramps, zero outside
    the region [x_core_lo - delta, x_core_hi + delta] x [0, V + eta]."""
    if x <= x_core_lo - delta or x >= x_core_hi + delta:
        px = 0.0
    elif x < x_core_lo:
        px = (x - (x_core_lo - delta)) / delta
    elif x > x_core_hi:
        px = ((x_core_hi + delta) - x) / delta
    else:
        px = 1.0
    if v <= 0.0 or v >= V + eta:
        pv = 0.0
    elif v < eta:
        pv = v / eta
    elif v > V:
        pv = ((V + eta) - v) / eta
    else:
        pv = 1.0
    return max(0.0, min(1.0, min(px, pv)))


def free_streaming_density(f0, t: float):
    """Exact solution of pure transport: f(x, v, t) = f0(x - v t, v)."""

    def fn(X, V):
        return f0(X - V * t, V)

    return fn


def divergence_central(force_at, v, d: int, h: float) -> float:
    """Central-difference divergence in the velocity variables of a field
    v -> force_at(v) (R^d -> R^d)."""
    div = 0.0
    for a in range(d):
        e = np.zeros(d)
        e[a] = h
        div += (force_at(v + e)[a] - force_at(v - e)[a]) / (2.0 * h)
    return div
