"""Scenario files: a flat, versioned key = value format describing one
steering experiment end to end (initial ensemble, kernel, budgets,
integrator, outputs).

The format is INI-style with one level of sections.  Parsing reports
schema violations (unknown keys, bad types, out-of-range values) with the
offending file line, and every run is fully determined by the file plus
the seed it contains.
"""

from __future__ import annotations

import configparser
import math
import os
from dataclasses import dataclass, replace

import numpy as np

from .dynamics import IntegratorConfig, constant_kernel, inverse_power_kernel
from .errors import SchemaError
from .measures import EmpiricalMeasure, read_measure_csv, support_box

__all__ = [
    "SCHEMA_ID",
    "Scenario",
    "parse_scenario",
    "build_measure",
    "build_kernel",
    "scenario_density",
]

SCHEMA_ID = "sparsealign-scenario-v1"

_SAMPLERS = ("uniform-box", "truncated-gaussian", "two-cluster")
_KERNELS = ("constant", "inverse-power")

# section -> known keys
_KNOWN_KEYS = {
    "scenario": {"schema", "name"},
    "initial": {
        "dimension", "n_particles", "seed", "sampler", "atoms",
        "x_low", "x_high", "v_low", "v_high",
        "x_mean", "x_std", "v_mean", "v_std",
        "fraction", "x_low_2", "x_high_2", "v_low_2", "v_high_2",
    },
    "kernel": {"name", "strength", "beta", "lipschitz", "v_max"},
    "control": {"mass_budget", "precision", "target_velocity", "max_steps"},
    "integrator": {"scheme", "dt_max"},
    "run": {"horizon", "checkpoints", "output"},
    "grid": {"nx", "nv", "particles"},
}

_SAMPLER_KEYS = {
    "uniform-box": {"x_low", "x_high", "v_low", "v_high"},
    "truncated-gaussian": {
        "x_low", "x_high", "v_low", "v_high",
        "x_mean", "x_std", "v_mean", "v_std",
    },
    "two-cluster": {
        "x_low", "x_high", "v_low", "v_high",
        "fraction", "x_low_2", "x_high_2", "v_low_2", "v_high_2",
    },
}


@dataclass(frozen=True)
class Scenario:
    """Validated contents of a scenario file."""

    path: str
    name: str
    dimension: int
    n_particles: int
    seed: int
    sampler: str | None
    sampler_params: dict
    atoms_path: str | None
    kernel_name: str
    kernel_strength: float
    kernel_beta: float
    kernel_lipschitz: float | None
    kernel_v_max: float | None
    mass_budget: float
    precision: float
    target_velocity: np.ndarray
    max_steps: int | None
    integrator: IntegratorConfig
    horizon: float
    checkpoints: tuple
    output: str
    grid_nx: int
    grid_nv: int
    grid_particles: int


class _Lines:
    """Maps (section, key) to the 1-based file line carrying that key."""

    def __init__(self, path: str):
        self.path = path
        self.by_key: dict = {}
        self.section_line: dict = {}
        section = None
        with open(path) as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.split("#", 1)[0].split(";", 1)[0].strip()
                if not line:
                    continue
                if line.startswith("[") and line.endswith("]"):
                    section = line[1:-1].strip()
                    self.section_line[section] = lineno
                elif "=" in line and section is not None:
                    key = line.split("=", 1)[0].strip()
                    self.by_key[(section, key)] = lineno

    def err(self, section: str, key: str | None, message: str) -> SchemaError:
        if key is not None and (section, key) in self.by_key:
            where = f"{self.path}:{self.by_key[(section, key)]}"
        elif section in self.section_line:
            where = f"{self.path}:{self.section_line[section]}"
        else:
            where = self.path
        return SchemaError(f"{where}: {message}")


def _float_list(raw: str, d: int, what: str):
    parts = [p.strip() for p in raw.split(",") if p.strip()]
    vals = [float(p) for p in parts]
    if len(vals) == 1:
        vals = vals * d
    if len(vals) != d:
        raise ValueError(f"{what} needs 1 or {d} comma-separated values")
    return np.asarray(vals, dtype=float)


def parse_scenario(path: str) -> Scenario:
    """Read and validate a scenario file; every violation raises
    SchemaError with the offending line."""
    if not os.path.exists(path):
        raise SchemaError(f"{path}: scenario file not found")
    lines = _Lines(path)
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        with open(path) as fh:
            cp.read_file(fh, source=path)
    except configparser.Error as exc:
        raise SchemaError(f"{path}: {exc}") from None

    for section in cp.sections():
        if section not in _KNOWN_KEYS:
            raise lines.err(section, None, f"unknown section [{section}]")
        for key in cp[section]:
            if key not in _KNOWN_KEYS[section]:
                raise lines.err(section, key, f"unknown key {key!r} in [{section}]")

    def need(section: str, key: str) -> str:
        if not cp.has_option(section, key):
            raise lines.err(section, None, f"[{section}] is missing required key {key!r}")
        return cp.get(section, key)

    def opt(section: str, key: str, default=None):
        if cp.has_option(section, key):
            raw = cp.get(section, key).strip()
            return raw if raw else default
        return default

    def conv(section: str, key: str, raw: str, fn, what: str):
        try:
            return fn(raw)
        except (TypeError, ValueError) as exc:
            raise lines.err(section, key, f"{key} = {raw!r}: {what} ({exc})") from None

    schema = need("scenario", "schema").strip()
    if schema != SCHEMA_ID:
        raise lines.err(
            "scenario", "schema",
            f"schema is {schema!r}, this tool reads {SCHEMA_ID!r}",
        )
    name = opt("scenario", "name") or os.path.splitext(os.path.basename(path))[0]

    d = conv("initial", "dimension", need("initial", "dimension"), int, "expected an integer")
    if d < 1:
        raise lines.err("initial", "dimension", f"dimension must be >= 1, got {d}")

    atoms_path = opt("initial", "atoms")
    sampler = opt("initial", "sampler")
    sampler_params: dict = {}
    if atoms_path is not None:
        if sampler is not None:
            raise lines.err("initial", "sampler", "give either atoms or a sampler, not both")
        atoms_path = os.path.join(os.path.dirname(os.path.abspath(path)), atoms_path)
        n_particles = 0
        seed = 0
    else:
        if sampler is None:
            raise lines.err("initial", None, "[initial] needs a sampler or an atoms path")
        if sampler not in _SAMPLERS:
            raise lines.err(
                "initial", "sampler",
                f"unknown sampler {sampler!r}; choose from {', '.join(_SAMPLERS)}",
            )
        n_particles = conv(
            "initial", "n_particles", need("initial", "n_particles"), int,
            "expected an integer",
        )
        if n_particles < 1:
            raise lines.err("initial", "n_particles", "n_particles must be >= 1")
        seed = conv("initial", "seed", need("initial", "seed"), int, "expected an integer")
        for key in sorted(_SAMPLER_KEYS[sampler]):
            raw = need("initial", key)
            if key == "fraction":
                val = conv("initial", key, raw, float, "expected a number")
                if not (0.0 <= val <= 1.0):
                    raise lines.err("initial", key, f"fraction must lie in [0, 1], got {val}")
                sampler_params[key] = val
            else:
                sampler_params[key] = conv(
                    "initial", key, raw, lambda r: _float_list(r, d, key),
                    f"expected 1 or {d} numbers",
                )
        for lo_key, hi_key in (
            ("x_low", "x_high"), ("v_low", "v_high"),
            ("x_low_2", "x_high_2"), ("v_low_2", "v_high_2"),
        ):
            if lo_key in sampler_params and np.any(
                sampler_params[lo_key] > sampler_params[hi_key]
            ):
                raise lines.err("initial", lo_key, f"{lo_key} exceeds {hi_key}")
        for std_key in ("x_std", "v_std"):
            if std_key in sampler_params and np.any(sampler_params[std_key] <= 0.0):
                raise lines.err("initial", std_key, f"{std_key} must be positive")

    kname = need("kernel", "name").strip()
    if kname not in _KERNELS:
        raise lines.err(
            "kernel", "name", f"unknown kernel {kname!r}; choose from {', '.join(_KERNELS)}"
        )
    strength = conv("kernel", "strength", need("kernel", "strength"), float, "expected a number")
    if not (math.isfinite(strength) and strength >= 0.0):
        raise lines.err("kernel", "strength", f"strength must be finite and >= 0, got {strength}")
    beta_raw = opt("kernel", "beta", "1.0")
    beta = conv("kernel", "beta", beta_raw, float, "expected a number")
    if kname == "inverse-power" and not (math.isfinite(beta) and beta > 0.0):
        raise lines.err("kernel", "beta", f"beta must be finite and > 0, got {beta}")
    lip_raw = opt("kernel", "lipschitz")
    lipschitz = None if lip_raw is None else conv(
        "kernel", "lipschitz", lip_raw, float, "expected a number"
    )
    if lipschitz is not None and not (math.isfinite(lipschitz) and lipschitz > 0.0):
        raise lines.err("kernel", "lipschitz", "lipschitz must be finite and > 0")
    vmax_raw = opt("kernel", "v_max")
    v_max = None if vmax_raw is None else conv(
        "kernel", "v_max", vmax_raw, float, "expected a number"
    )
    if v_max is not None and not (math.isfinite(v_max) and v_max > 0.0):
        raise lines.err("kernel", "v_max", "v_max must be finite and > 0")

    c = conv("control", "mass_budget", need("control", "mass_budget"), float, "expected a number")
    if not (math.isfinite(c) and 0.0 < c <= 1.0):
        raise lines.err("control", "mass_budget", f"mass_budget must lie in (0, 1], got {c}")
    eps = conv("control", "precision", need("control", "precision"), float, "expected a number")
    if not (math.isfinite(eps) and eps > 0.0):
        raise lines.err("control", "precision", f"precision must be > 0, got {eps}")
    v_star = conv(
        "control", "target_velocity", need("control", "target_velocity"),
        lambda r: _float_list(r, d, "target_velocity"), f"expected 1 or {d} numbers",
    )
    ms_raw = opt("control", "max_steps")
    max_steps = None if ms_raw is None else conv(
        "control", "max_steps", ms_raw, int, "expected an integer"
    )
    if max_steps is not None and max_steps < 1:
        raise lines.err("control", "max_steps", f"max_steps must be >= 1, got {max_steps}")

    scheme = opt("integrator", "scheme", "rk4")
    if scheme not in ("rk4", "explicit-euler"):
        raise lines.err(
            "integrator", "scheme",
            f"unknown scheme {scheme!r}; choose rk4 or explicit-euler",
        )
    dt_raw = opt("integrator", "dt_max", "1e-3")
    dt_max = conv("integrator", "dt_max", dt_raw, float, "expected a number")
    if not (math.isfinite(dt_max) and dt_max > 0.0):
        raise lines.err("integrator", "dt_max", f"dt_max must be > 0, got {dt_max}")

    horizon = conv("run", "horizon", opt("run", "horizon", "1.0"), float, "expected a number")
    if not (math.isfinite(horizon) and horizon >= 0.0):
        raise lines.err("run", "horizon", f"horizon must be >= 0, got {horizon}")
    ckpt_raw = opt("run", "checkpoints")
    if ckpt_raw is None:
        checkpoints: tuple = ()
    else:
        checkpoints = tuple(
            conv("run", "checkpoints", p.strip(), float, "expected numbers")
            for p in ckpt_raw.split(",") if p.strip()
        )
    output = need("run", "output").strip()
    if not output:
        raise lines.err("run", "output", "output directory must not be empty")

    grid_nx = conv("grid", "nx", opt("grid", "nx", "128"), int, "expected an integer") \
        if cp.has_section("grid") else 128
    grid_nv = conv("grid", "nv", opt("grid", "nv", "128"), int, "expected an integer") \
        if cp.has_section("grid") else 128
    grid_particles = conv(
        "grid", "particles", opt("grid", "particles", "4000"), int, "expected an integer"
    ) if cp.has_section("grid") else 4000
    for key, val in (("nx", grid_nx), ("nv", grid_nv), ("particles", grid_particles)):
        if val < 1:
            raise lines.err("grid", key, f"{key} must be >= 1, got {val}")

    return Scenario(
        path=os.path.abspath(path),
        name=name,
        dimension=d,
        n_particles=n_particles,
        seed=seed,
        sampler=sampler,
        sampler_params=sampler_params,
        atoms_path=atoms_path,
        kernel_name=kname,
        kernel_strength=strength,
        kernel_beta=beta,
        kernel_lipschitz=lipschitz,
        kernel_v_max=v_max,
        mass_budget=c,
        precision=eps,
        target_velocity=v_star,
        max_steps=max_steps,
        integrator=IntegratorConfig(scheme=scheme, dt_max=dt_max),
        horizon=horizon,
        checkpoints=checkpoints,
        output=output,
        grid_nx=grid_nx,
        grid_nv=grid_nv,
        grid_particles=grid_particles,
    )


def with_overrides(scn: Scenario, **kwargs) -> Scenario:
    """Scenario with some fields replaced (used for CLI flag overrides);
    values of None are ignored."""
    updates = {k: v for k, v in kwargs.items() if v is not None}
    return replace(scn, **updates) if updates else scn


# -- initial ensembles ----------------------------------------------------------


def _sample_box(rng, lo, hi, n, d):
    return rng.uniform(lo, hi, size=(n, d))


def build_measure(scn: Scenario) -> EmpiricalMeasure:
    """Draw (or load) the initial ensemble; equal weights 1/N."""
    if scn.atoms_path is not None:
        return read_measure_csv(scn.atoms_path)
    rng = np.random.default_rng(scn.seed)
    p = scn.sampler_params
    n, d = scn.n_particles, scn.dimension
    if scn.sampler == "uniform-box":
        x = _sample_box(rng, p["x_low"], p["x_high"], n, d)
        v = _sample_box(rng, p["v_low"], p["v_high"], n, d)
    elif scn.sampler == "truncated-gaussian":
        x = _truncated_normal(rng, p["x_mean"], p["x_std"], p["x_low"], p["x_high"], n, d)
        v = _truncated_normal(rng, p["v_mean"], p["v_std"], p["v_low"], p["v_high"], n, d)
    else:  # two-cluster
        n1 = int(round(p["fraction"] * n))
        x = np.vstack(
            [
                _sample_box(rng, p["x_low"], p["x_high"], n1, d),
                _sample_box(rng, p["x_low_2"], p["x_high_2"], n - n1, d),
            ]
        )
        v = np.vstack(
            [
                _sample_box(rng, p["v_low"], p["v_high"], n1, d),
                _sample_box(rng, p["v_low_2"], p["v_high_2"], n - n1, d),
            ]
        )
    return EmpiricalMeasure(x, v, np.full(n, 1.0 / n))


def _truncated_normal(rng, mean, std, lo, hi, n, d):
    out = np.empty((n, d))
    filled = 0
    while filled < n:
        draw = rng.normal(mean, std, size=(2 * (n - filled) + 16, d))
        keep = draw[np.all((draw >= lo) & (draw <= hi), axis=1)]
        take = min(keep.shape[0], n - filled)
        out[filled : filled + take] = keep[:take]
        filled += take
    return out


def scenario_density(scn: Scenario):
    """Analytic phase density of the sampler (d = 1 only), for seeding the
    grid solver with the same initial condition as the particles.  Returns
    an unnormalised fn(X, V); grid construction normalises."""
    if scn.dimension != 1:
        raise SchemaError("grid comparison requires a one-dimensional scenario")
    if scn.sampler is None:
        raise SchemaError("grid comparison requires a sampler-based scenario")
    p = {k: float(np.asarray(v).ravel()[0]) for k, v in scn.sampler_params.items()}

    if scn.sampler == "uniform-box":
        def fn(X, V):
            return (
                (X >= p["x_low"]) & (X <= p["x_high"])
                & (V >= p["v_low"]) & (V <= p["v_high"])
            ).astype(float)
        return fn
    if scn.sampler == "truncated-gaussian":
        def fn(X, V):
            inside = (
                (X >= p["x_low"]) & (X <= p["x_high"])
                & (V >= p["v_low"]) & (V <= p["v_high"])
            )
            gx = np.exp(-0.5 * ((X - p["x_mean"]) / p["x_std"]) ** 2)
            gv = np.exp(-0.5 * ((V - p["v_mean"]) / p["v_std"]) ** 2)
            return np.where(inside, gx * gv, 0.0)
        return fn
    # two-cluster
    def fn(X, V):
        in1 = (
            (X >= p["x_low"]) & (X <= p["x_high"])
            & (V >= p["v_low"]) & (V <= p["v_high"])
        )
        in2 = (
            (X >= p["x_low_2"]) & (X <= p["x_high_2"])
            & (V >= p["v_low_2"]) & (V <= p["v_high_2"])
        )
        a1 = max(
            (p["x_high"] - p["x_low"]) * (p["v_high"] - p["v_low"]), 1e-300
        )
        a2 = max(
            (p["x_high_2"] - p["x_low_2"]) * (p["v_high_2"] - p["v_low_2"]), 1e-300
        )
        return p["fraction"] * in1 / a1 + (1.0 - p["fraction"]) * in2 / a2
    return fn


def resolved_v_max(scn: Scenario, mu: EmpiricalMeasure) -> float:
    """Velocity-difference bound used to derive the inverse-power kernel's
    Lipschitz constant: the scenario's explicit v_max if given, otherwise
    the initial velocity-box Euclidean diameter (floored at the precision
    so a pre-aligned ensemble still yields a usable bound)."""
    if scn.kernel_v_max is not None:
        return scn.kernel_v_max
    box = support_box(mu)
    diam = float(np.linalg.norm(np.asarray(box.v_hi) - np.asarray(box.v_lo)))
    return max(diam, scn.precision)


def build_kernel(scn: Scenario, mu: EmpiricalMeasure):
    """Interaction kernel for the scenario.

    For the inverse-power family the Lipschitz constant needs a bound on
    velocity differences; by default the initial ensemble's velocity-box
    diameter is used (interactions keep velocities inside their convex
    hull, and the control's small excursions are absorbed by the verified
    per-step contraction margins).  Scenario keys v_max and lipschitz
    override."""
    if scn.kernel_name == "constant":
        kernel = constant_kernel(scn.kernel_strength)
    else:
        kernel = inverse_power_kernel(
            scn.kernel_strength, scn.kernel_beta, resolved_v_max(scn, mu)
        )
    if scn.kernel_lipschitz is not None:
        kernel = replace(kernel, lipschitz_L=scn.kernel_lipschitz)
    return kernel
