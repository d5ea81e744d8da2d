"""Weighted particle ensembles on phase space and the measure-level
operations the controller is built from: support boxes, box masses,
mass-quantile partitions, one-dimensional transport distance, and a
histogram density estimate.

A measure is a finite set of weighted atoms (x_i, v_i, w_i) with the
weights summing to one.  Everything here is exact arithmetic on the atoms;
no binning or approximation is introduced except in the explicitly named
histogram estimator.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DegenerateSupportError, InfeasiblePartitionError
from .tolerances import MASS_TOL

__all__ = [
    "EmpiricalMeasure",
    "SupportBox",
    "Interval",
    "PhaseRegion",
    "DensityEstimate",
    "support_box",
    "mass_in_box",
    "marginal",
    "quantile_partition",
    "wasserstein1_1d",
    "w1_from_samples",
    "estimate_density_sup",
    "write_measure_csv",
    "read_measure_csv",
]

# cumulative-weight comparisons tolerate this much accumulated rounding
_CUM_WEIGHT_SLACK = 1e-12


def _locked_array(a, dtype=float) -> np.ndarray:
    out = np.array(a, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class EmpiricalMeasure:
    """Weighted atoms in d-dimensional phase space.

    positions, velocities: arrays of shape (N, d); weights: shape (N,),
    non-negative, summing to 1.  Arrays are copied and marked read-only,
    so instances can be shared freely.
    """

    positions: np.ndarray
    velocities: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pos = np.atleast_2d(np.asarray(self.positions, dtype=float))
        vel = np.atleast_2d(np.asarray(self.velocities, dtype=float))
        w = np.asarray(self.weights, dtype=float).ravel()
        if pos.ndim != 2 or vel.ndim != 2:
            raise ConfigError("positions and velocities must be (N, d) arrays")
        if pos.shape != vel.shape:
            raise ConfigError(
                f"positions {pos.shape} and velocities {vel.shape} disagree"
            )
        if pos.shape[0] != w.shape[0]:
            raise ConfigError(
                f"{pos.shape[0]} states but {w.shape[0]} weights"
            )
        if pos.shape[0] == 0:
            raise ConfigError("a measure needs at least one atom")
        if not (np.all(np.isfinite(pos)) and np.all(np.isfinite(vel))):
            raise ConfigError("non-finite coordinates")
        if not np.all(np.isfinite(w)) or np.any(w < 0.0):
            raise ConfigError("weights must be finite and non-negative")
        total = float(np.sum(w))
        if abs(total - 1.0) > MASS_TOL:
            raise ConfigError(f"weights sum to {total!r}, expected 1")
        object.__setattr__(self, "positions", _locked_array(pos))
        object.__setattr__(self, "velocities", _locked_array(vel))
        object.__setattr__(self, "weights", _locked_array(w))

    @property
    def dim(self) -> int:
        return self.positions.shape[1]

    @property
    def n_particles(self) -> int:
        return self.positions.shape[0]

    def with_state(self, positions=None, velocities=None) -> "EmpiricalMeasure":
        """New measure with replaced coordinate arrays, same weights."""
        return EmpiricalMeasure(
            self.positions if positions is None else positions,
            self.velocities if velocities is None else velocities,
            self.weights,
        )


@dataclass(frozen=True)
class SupportBox:
    """Componentwise bounding box of the weighted support."""

    x_lo: np.ndarray
    x_hi: np.ndarray
    v_lo: np.ndarray
    v_hi: np.ndarray

    def __post_init__(self):
        for name in ("x_lo", "x_hi", "v_lo", "v_hi"):
            object.__setattr__(self, name, _locked_array(getattr(self, name)))
        if np.any(self.x_lo > self.x_hi) or np.any(self.v_lo > self.v_hi):
            raise ConfigError("box lower bounds exceed upper bounds")

    def x_width(self, axis: int) -> float:
        return float(self.x_hi[axis] - self.x_lo[axis])

    def v_width(self, axis: int) -> float:
        return float(self.v_hi[axis] - self.v_lo[axis])


@dataclass(frozen=True)
class Interval:
    """One-dimensional interval with explicit endpoint conventions."""

    lo: float
    hi: float
    closed_lo: bool = True
    closed_hi: bool = True

    def __post_init__(self):
        if not (self.lo <= self.hi):
            raise ConfigError(f"empty interval [{self.lo}, {self.hi}]")

    def contains(self, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        lo_ok = values >= self.lo if self.closed_lo else values > self.lo
        hi_ok = values <= self.hi if self.closed_hi else values < self.hi
        return lo_ok & hi_ok


@dataclass(frozen=True)
class PhaseRegion:
    """Axis-aligned phase-space region: one optional Interval per position
    axis and per velocity axis; None leaves that axis unrestricted."""

    x: tuple = ()
    v: tuple = ()

    def mask(self, mu: EmpiricalMeasure) -> np.ndarray:
        if (self.x and len(self.x) != mu.dim) or (self.v and len(self.v) != mu.dim):
            raise ConfigError(
                f"region was built for a different dimension than {mu.dim}"
            )
        keep = np.ones(mu.n_particles, dtype=bool)
        for axis, iv in enumerate(self.x):
            if iv is not None:
                keep &= iv.contains(mu.positions[:, axis])
        for axis, iv in enumerate(self.v):
            if iv is not None:
                keep &= iv.contains(mu.velocities[:, axis])
        return keep


@dataclass(frozen=True)
class DensityEstimate:
    """Histogram estimate of the phase-space density."""

    bin_widths_x: np.ndarray
    bin_widths_v: np.ndarray
    bin_counts: tuple
    hist: np.ndarray = field(repr=False)
    sup_density: float = 0.0


def support_box(mu: EmpiricalMeasure) -> SupportBox:
    """Componentwise min/max over atoms carrying positive weight."""
    live = mu.weights > 0.0
    if not np.any(live):
        raise ConfigError("measure has no atom with positive weight")
    pos = mu.positions[live]
    vel = mu.velocities[live]
    return SupportBox(pos.min(axis=0), pos.max(axis=0), vel.min(axis=0), vel.max(axis=0))


def mass_in_box(mu: EmpiricalMeasure, region: PhaseRegion) -> float:
    """Total weight of atoms inside the region, honouring each interval's
    open/closed endpoint flags exactly."""
    return float(np.sum(mu.weights[region.mask(mu)]))


def marginal(mu: EmpiricalMeasure, kind: str, axis: int = 0):
    """(values, weights) of the 1d marginal along a position ('x') or
    velocity ('v') axis."""
    if kind == "x":
        coords = mu.positions
    elif kind == "v":
        coords = mu.velocities
    else:
        raise ConfigError(f"marginal kind must be 'x' or 'v', got {kind!r}")
    if not (0 <= axis < mu.dim):
        raise ConfigError(f"axis {axis} out of range for dimension {mu.dim}")
    return coords[:, axis], mu.weights


def quantile_partition(
    mu: EmpiricalMeasure, axis: int, slab_mass: float, n: int
) -> np.ndarray:
    """Split the position marginal along `axis` into n slabs of prescribed
    mass.

    Returns n+1 non-decreasing cut points.  The first point is the left edge
    of the support and the last the right edge.  Interior point i is the
    smallest atom coordinate such that the slab reaching back to point i-1
    (closed at the support's left edge, open-left otherwise) carries at
    least ceil(N * slab_mass) / N where N counts the atoms with positive
    weight.  The final slab keeps whatever mass remains.  If the running
    mass is exhausted early the remaining cut points collapse onto the
    right edge.
    """
    if n < 1:
        raise ConfigError(f"need at least one slab, got n={n}")
    if not (0.0 < slab_mass <= 1.0):
        raise ConfigError(f"slab_mass must lie in (0, 1], got {slab_mass}")
    if slab_mass * (n - 1) > 1.0 + _CUM_WEIGHT_SLACK:
        raise InfeasiblePartitionError(
            f"{n - 1} interior slabs of mass {slab_mass} exceed total mass 1"
        )
    if not (0 <= axis < mu.dim):
        raise ConfigError(f"axis {axis} out of range for dimension {mu.dim}")

    live = mu.weights > 0.0
    coords = mu.positions[live, axis]
    weights = mu.weights[live]
    if coords.size == 0:
        raise ConfigError("measure has no atom with positive weight")

    order = np.argsort(coords, kind="stable")
    coords = coords[order]
    weights = weights[order]
    uniq, start = np.unique(coords, return_index=True)
    group_mass = np.add.reduceat(weights, start)
    cum = np.cumsum(group_mass)

    n_atoms = int(np.count_nonzero(live))
    target_mass = np.ceil(n_atoms * slab_mass - _CUM_WEIGHT_SLACK) / n_atoms

    left = float(uniq[0])
    right = float(uniq[-1])
    points = [left]
    acc = 0.0  # mass at or left of the running cut point
    for _ in range(n - 1):
        want = acc + target_mass
        nxt = int(np.searchsorted(cum, want - _CUM_WEIGHT_SLACK, side="left"))
        if nxt >= uniq.size:
            points.append(right)
            acc = float(cum[-1])
        else:
            points.append(float(uniq[nxt]))
            acc = float(cum[nxt])
    points.append(right)
    return np.asarray(points, dtype=float)


def _weighted_cdf_pair(av, aw, bv, bw):
    """Common-grid CDFs of two weighted 1d samples."""
    grid = np.union1d(av, bv)
    a_sorted = np.sort(av, kind="stable")
    b_sorted = np.sort(bv, kind="stable")
    a_cum = np.cumsum(aw[np.argsort(av, kind="stable")])
    b_cum = np.cumsum(bw[np.argsort(bv, kind="stable")])
    ia = np.searchsorted(a_sorted, grid, side="right")
    ib = np.searchsorted(b_sorted, grid, side="right")
    fa = np.where(ia > 0, a_cum[ia - 1], 0.0)
    fb = np.where(ib > 0, b_cum[ib - 1], 0.0)
    return grid, fa, fb


def w1_from_samples(av, aw, bv, bw) -> float:
    """Exact first-order transport distance between two weighted 1d samples,
    computed as the area between their distribution functions."""
    av = np.asarray(av, dtype=float).ravel()
    bv = np.asarray(bv, dtype=float).ravel()
    aw = np.asarray(aw, dtype=float).ravel()
    bw = np.asarray(bw, dtype=float).ravel()
    grid, fa, fb = _weighted_cdf_pair(av, aw, bv, bw)
    if grid.size < 2:
        return 0.0
    return float(np.sum(np.abs(fa[:-1] - fb[:-1]) * np.diff(grid)))


def wasserstein1_1d(
    mu: EmpiricalMeasure, nu: EmpiricalMeasure, kind: str = "v", axis: int = 0
) -> float:
    """First-order transport distance between matching 1d marginals."""
    av, aw = marginal(mu, kind, axis)
    bv, bw = marginal(nu, kind, axis)
    return w1_from_samples(av, aw, bv, bw)


def estimate_density_sup(mu: EmpiricalMeasure, bins) -> DensityEstimate:
    """Histogram over the support box; sup density = max bin mass / bin
    volume.  Degenerate boxes (zero width on a binned axis) are refused."""
    d = mu.dim
    if np.isscalar(bins):
        counts = (int(bins),) * (2 * d)
    else:
        counts = tuple(int(b) for b in bins)
        if len(counts) != 2 * d:
            raise ConfigError(
                f"need {2 * d} bin counts (positions then velocities), got {len(counts)}"
            )
    if any(b < 1 for b in counts):
        raise ConfigError("bin counts must be positive")

    box = support_box(mu)
    lows = np.concatenate([box.x_lo, box.v_lo])
    highs = np.concatenate([box.x_hi, box.v_hi])
    widths = highs - lows
    if np.any(widths <= 0.0):
        raise DegenerateSupportError(
            "support box has zero width along a binned axis"
        )
    sample = np.hstack([mu.positions, mu.velocities])
    hist, _ = np.histogramdd(
        sample, bins=counts, range=list(zip(lows, highs)), weights=mu.weights
    )
    bin_widths = widths / np.asarray(counts, dtype=float)
    bin_volume = float(np.prod(bin_widths))
    sup_density = float(hist.max() / bin_volume)
    return DensityEstimate(
        bin_widths_x=bin_widths[:d],
        bin_widths_v=bin_widths[d:],
        bin_counts=counts,
        hist=hist,
        sup_density=sup_density,
    )


# -- CSV atom format ----------------------------------------------------------
# header: id,weight,x_0..x_{d-1},v_0..v_{d-1}; floats as shortest exact repr


def _csv_header(d: int) -> list:
    return (
        ["id", "weight"]
        + [f"x_{k}" for k in range(d)]
        + [f"v_{k}" for k in range(d)]
    )


def write_measure_csv(mu: EmpiricalMeasure, path) -> None:
    """Write atoms in the exchange format; floats round-trip bit-exactly."""
    d = mu.dim
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_csv_header(d))
        for i in range(mu.n_particles):
            row = [str(i), repr(float(mu.weights[i]))]
            row += [repr(float(c)) for c in mu.positions[i]]
            row += [repr(float(c)) for c in mu.velocities[i]]
            writer.writerow(row)


def read_measure_csv(path) -> EmpiricalMeasure:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ConfigError(f"{path}: empty atom file") from None
        if len(header) < 4 or header[:2] != ["id", "weight"] or (len(header) - 2) % 2:
            raise ConfigError(f"{path}: malformed atom header {header!r}")
        d = (len(header) - 2) // 2
        if header != _csv_header(d):
            raise ConfigError(f"{path}: malformed atom header {header!r}")
        pos, vel, wts = [], [], []
        for row in reader:
            if not row:
                continue
            if len(row) != 2 + 2 * d:
                raise ConfigError(f"{path}: row has {len(row)} fields, expected {2 + 2 * d}")
            wts.append(float(row[1]))
            pos.append([float(c) for c in row[2 : 2 + d]])
            vel.append([float(c) for c in row[2 + d :]])
    if not wts:
        raise ConfigError(f"{path}: no atoms")
    return EmpiricalMeasure(np.array(pos), np.array(vel), np.array(wts))
