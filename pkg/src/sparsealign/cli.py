"""Command-line entry points.

Subcommands:
  simulate      integrate a scenario's ensemble without control
  align         synthesize and execute the sparse steering law
  verify        re-run the invariant checks on a finished run directory
  sweep         grid of align runs over mass budget / precision / ensemble size
  grid-compare  one braking step on the finite-volume solver vs particles

Exit codes: 0 success, 1 failed invariant or internal error, 2 sparsity
constraint breach, 3 non-termination (step budget), 4 malformed scenario.
All artifacts are plain CSV/text with floats written as exact reprs, so
repeated runs of the same scenario are byte-identical (the sweep table's
wall-time column is the single deliberate exception).
"""

from __future__ import annotations

import argparse
import csv
import os
import shutil
import sys
import time

import numpy as np

from .control import (
    AlignmentConfig,
    AlignmentReport,
    ControlField,
    FrameMap,
    FundamentalStepPlan,
    PassRecord,
    StepRecord,
    build_step_plan,
    run_alignment,
)
from .dynamics import (
    IntegratorConfig,
    constant_kernel,
    inverse_power_kernel,
    read_checkpoint_csv,
    simulate,
    validate_kernel,
    write_trajectory,
)
from .errors import ConfigError, SchemaError, SparseAlignError
from .measures import support_box
from .pdegrid import (
    from_function,
    grid_for_step,
    grid_vs_particle,
    run_grid,
    sample_particles,
    write_grid_csv,
)
from .scenario import (
    Scenario,
    build_kernel,
    build_measure,
    parse_scenario,
    resolved_v_max,
    scenario_density,
    with_overrides,
)
from .verify import ConstraintTrace, run_report_checks

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_BREACH = 2
EXIT_NONTERM = 3
EXIT_SCHEMA = 4

#: environment variable prepended to relative output paths
OUTPUT_ROOT_ENV = "SPARSEALIGN_OUTPUT_ROOT"


def _fmt(x) -> str:
    return repr(float(x))


def _fmt_vec(arr) -> str:
    return ";".join(repr(float(v)) for v in np.asarray(arr, dtype=float).ravel())


def _parse_vec(raw: str) -> np.ndarray:
    return np.asarray([float(p) for p in raw.split(";") if p], dtype=float)


def _resolve_output(scn_output: str, flag_output) -> str:
    out = flag_output if flag_output else scn_output
    root = os.environ.get(OUTPUT_ROOT_ENV)
    if root and not os.path.isabs(out):
        out = os.path.join(root, out)
    return out


# -- artifact writers -----------------------------------------------------------

_REPORT_COLUMNS = [
    "k", "axis", "X_k", "V_k", "delta_k", "eta_k", "T_k",
    "V_pred", "V_meas", "omega_mass_max", "u_sup",
    # extras beyond the required columns
    "n", "alpha", "epsilon_pass", "t_start", "t_end", "X_pred", "X_meas",
    "density_sup_start", "x_density_sup_start",
    "v_box_lo_before", "v_box_hi_before", "v_box_lo_after", "v_box_hi_after",
]


def _write_report_csv(path: str, steps) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(_REPORT_COLUMNS)
        for s in steps:
            w.writerow(
                [
                    str(s.index), str(s.axis), _fmt(s.X), _fmt(s.V), _fmt(s.delta),
                    _fmt(s.eta), _fmt(s.T), _fmt(s.V_pred), _fmt(s.V_meas),
                    _fmt(s.omega_mass_max), _fmt(s.u_sup_max),
                    str(s.n), _fmt(s.alpha), _fmt(s.epsilon), _fmt(s.t_start),
                    _fmt(s.t_end), _fmt(s.X_pred), _fmt(s.X_meas),
                    _fmt(s.density_sup_start), _fmt(s.x_density_sup_start),
                    _fmt_vec(s.v_box_lo_before), _fmt_vec(s.v_box_hi_before),
                    _fmt_vec(s.v_box_lo_after), _fmt_vec(s.v_box_hi_after),
                ]
            )


def _write_plans_csv(path: str, steps) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(
            ["k", "axis", "c", "n", "delta", "eta", "T", "V", "X",
             "lipschitz_L", "epsilon", "alpha", "partition"]
        )
        for s in steps:
            p = s.plan
            w.writerow(
                [str(s.index), str(p.axis), _fmt(p.c), str(p.n), _fmt(p.delta),
                 _fmt(p.eta), _fmt(p.T), _fmt(p.V), _fmt(p.X), _fmt(p.lipschitz_L),
                 _fmt(p.epsilon), _fmt(p.alpha), _fmt_vec(p.partition)]
            )


def _write_passes_csv(path: str, passes) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(
            ["pass", "axis", "reflected", "sigma", "v_shift", "x_shift",
             "eps_pass", "alpha", "n", "V0", "n_steps", "horizon",
             "horizon_bound", "t_start", "t_end"]
        )
        for i, p in enumerate(passes):
            w.writerow(
                [str(i), str(p.axis), str(int(p.reflected)), _fmt(p.frame.sigma),
                 _fmt(p.frame.v_shift), _fmt(p.frame.x_shift), _fmt(p.eps_pass),
                 _fmt(p.alpha), str(p.n), _fmt(p.V0), str(p.n_steps),
                 _fmt(p.horizon), _fmt(p.horizon_bound), _fmt(p.t_start),
                 _fmt(p.t_end)]
            )


def _write_trace_csv(path: str, steps) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "t", "omega_mass", "u_sup", "v_support_height", "density_sup"])
        for s in steps:
            tr = s.trace
            for i in range(len(tr)):
                w.writerow(
                    [str(s.index), _fmt(tr.times[i]), _fmt(tr.omega_mass[i]),
                     _fmt(tr.u_sup[i]), _fmt(tr.v_support_height[i]),
                     _fmt(tr.density_sup[i])]
                )


def _write_plotdata_csv(path: str, steps) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "v_support_height", "omega_mass", "u_sup"])
        for s in steps:
            tr = s.trace
            for i in range(len(tr)):
                w.writerow(
                    [_fmt(tr.times[i]), _fmt(tr.v_support_height[i]),
                     _fmt(tr.omega_mass[i]), _fmt(tr.u_sup[i])]
                )


def _write_verify_csv(path: str, results) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["check", "passed", "worst_value", "threshold", "warning", "witness"])
        for r in results:
            w.writerow(
                [r.name, str(int(r.passed)), _fmt(r.value), _fmt(r.limit),
                 str(int(r.warning)), r.witness]
            )


def _write_manifest(path: str, entries: dict) -> None:
    with open(path, "w") as fh:
        for key in sorted(entries):
            fh.write(f"{key} = {entries[key]}\n")


def _read_manifest(path: str) -> dict:
    out = {}
    with open(path) as fh:
        for line in fh:
            if "=" in line:
                key, val = line.split("=", 1)
                out[key.strip()] = val.strip()
    return out


def _write_summary(path: str, scn: Scenario, report: AlignmentReport, results, code: int) -> None:
    with open(path, "w") as fh:
        fh.write(f"scenario = {scn.name}\n")
        fh.write(f"terminated = {report.terminated}\n")
        fh.write(f"steps = {len(report.steps)}\n")
        fh.write(f"total_horizon = {_fmt(report.total_horizon)}\n")
        fh.write(f"max_velocity_deviation = {_fmt(report.max_velocity_deviation)}\n")
        if report.breach is not None:
            fh.write(
                f"breach = mass {_fmt(report.breach['value'])} at "
                f"t = {_fmt(report.breach['t'])} (step {report.breach['step_index']})\n"
            )
        if report.diagnostics:
            fh.write(f"diagnostics = {report.diagnostics}\n")
        for i, p in enumerate(report.passes):
            kind = "mirrored" if p.reflected else "direct"
            slack = p.horizon / p.horizon_bound if p.horizon_bound > 0 else 0.0
            fh.write(
                f"pass {i} (axis {p.axis}, {kind}): steps = {p.n_steps}, "
                f"horizon = {_fmt(p.horizon)}, bound = {_fmt(p.horizon_bound)}, "
                f"slack_ratio = {_fmt(slack)}\n"
            )
        fh.write("checks:\n")
        for r in results:
            fh.write(f"  {r}\n")
        fh.write(f"exit = {code}\n")


# -- shared pipeline --------------------------------------------------------------


def _scenario_manifest(scn: Scenario, kernel, mu0, extras: dict | None = None) -> dict:
    man = {
        "schema": "sparsealign-run-v1",
        "name": scn.name,
        "dimension": str(scn.dimension),
        "n_particles": str(scn.n_particles),
        "seed": str(scn.seed),
        "sampler": scn.sampler or "",
        "atoms": scn.atoms_path or "",
        "kernel_name": scn.kernel_name,
        "kernel_strength": _fmt(scn.kernel_strength),
        "kernel_beta": _fmt(scn.kernel_beta),
        "kernel_lipschitz": _fmt(kernel.lipschitz_L),
        "mass_budget": _fmt(scn.mass_budget),
        "precision": _fmt(scn.precision),
        "target_velocity": _fmt_vec(scn.target_velocity),
        "max_steps": "" if scn.max_steps is None else str(scn.max_steps),
        "scheme": scn.integrator.scheme,
        "dt_max": _fmt(scn.integrator.dt_max),
    }
    if scn.kernel_name == "inverse-power":
        man["kernel_v_max"] = _fmt(resolved_v_max(scn, mu0))
    if extras:
        man.update(extras)
    return man


def _align_pipeline(scn: Scenario, outdir: str):
    """Run alignment and write the full artifact set.  Returns
    (exit code, report, check results)."""
    mu0 = build_measure(scn)
    kernel = build_kernel(scn, mu0)
    validate_kernel(kernel, support_box(mu0))
    cfg = AlignmentConfig(
        c=scn.mass_budget,
        epsilon=scn.precision,
        v_star=scn.target_velocity,
        lipschitz_L=kernel.lipschitz_L,
        integrator=scn.integrator,
        max_steps=scn.max_steps,
    )
    report = run_alignment(mu0, kernel, cfg)
    results = run_report_checks(report, kernel=kernel, mu0=mu0, dim=mu0.dim)

    hard_fail = any(not r.passed and not r.warning for r in results)
    if report.breach is not None:
        code = EXIT_BREACH
    elif not report.terminated:
        code = EXIT_NONTERM
    elif hard_fail:
        code = EXIT_FAILURE
    else:
        code = EXIT_OK

    os.makedirs(outdir, exist_ok=True)
    shutil.copyfile(scn.path, os.path.join(outdir, "scenario.ini"))
    _write_report_csv(os.path.join(outdir, "report.csv"), report.steps)
    _write_plans_csv(os.path.join(outdir, "plans.csv"), report.steps)
    _write_passes_csv(os.path.join(outdir, "passes.csv"), report.passes)
    _write_trace_csv(os.path.join(outdir, "trace.csv"), report.steps)
    _write_plotdata_csv(os.path.join(outdir, "plotdata.csv"), report.steps)
    _write_verify_csv(os.path.join(outdir, "verify.csv"), results)
    traj = [(0.0, mu0), (report.total_horizon, report.final_measure)]
    write_trajectory(traj, os.path.join(outdir, "trajectory"))
    man = _scenario_manifest(
        scn,
        kernel,
        mu0,
        {
            "terminated": str(report.terminated),
            "steps": str(len(report.steps)),
            "total_horizon": _fmt(report.total_horizon),
            "max_velocity_deviation": _fmt(report.max_velocity_deviation),
            "exit_code": str(code),
        },
    )
    if report.breach is not None:
        man["breach_t"] = _fmt(report.breach["t"])
        man["breach_value"] = _fmt(report.breach["value"])
        man["breach_step"] = str(report.breach["step_index"])
    _write_manifest(os.path.join(outdir, "manifest.txt"), man)
    _write_summary(os.path.join(outdir, "summary.txt"), scn, report, results, code)
    return code, report, results


# -- subcommands ---------------------------------------------------------------


def _cmd_simulate(args) -> int:
    scn = parse_scenario(args.scenario)
    if args.horizon is not None:
        scn = with_overrides(scn, horizon=args.horizon)
    if args.dt is not None:
        scn = with_overrides(
            scn, integrator=IntegratorConfig(scn.integrator.scheme, args.dt)
        )
    outdir = _resolve_output(scn.output, args.output)
    mu0 = build_measure(scn)
    kernel = build_kernel(scn, mu0)
    validate_kernel(kernel, support_box(mu0))
    traj = simulate(
        mu0, kernel, None, 0.0, scn.horizon, scn.integrator,
        checkpoints=scn.checkpoints,
    )
    os.makedirs(outdir, exist_ok=True)
    shutil.copyfile(scn.path, os.path.join(outdir, "scenario.ini"))
    write_trajectory(traj, os.path.join(outdir, "trajectory"))
    _write_manifest(
        os.path.join(outdir, "manifest.txt"),
        _scenario_manifest(
            scn, kernel, mu0,
            {"horizon": _fmt(scn.horizon), "snapshots": str(len(traj))},
        ),
    )
    print(f"simulated {scn.name}: {len(traj)} snapshots -> {outdir}")
    return EXIT_OK


def _apply_align_overrides(scn: Scenario, args) -> Scenario:
    scn = with_overrides(
        scn,
        mass_budget=args.c,
        precision=args.epsilon,
        n_particles=args.n_particles,
        seed=args.seed,
        max_steps=args.max_steps,
        kernel_name=args.kernel,
    )
    if args.v_star is not None:
        vs = np.asarray([float(p) for p in args.v_star.split(",") if p.strip()])
        if vs.size == 1:
            vs = np.repeat(vs, scn.dimension)
        if vs.size != scn.dimension:
            raise SchemaError(
                f"--v-star needs 1 or {scn.dimension} comma-separated values"
            )
        scn = with_overrides(scn, target_velocity=vs)
    if args.dt is not None:
        scn = with_overrides(
            scn, integrator=IntegratorConfig(scn.integrator.scheme, args.dt)
        )
    return scn


def _cmd_align(args) -> int:
    scn = _apply_align_overrides(parse_scenario(args.scenario), args)
    outdir = _resolve_output(scn.output, args.output)
    code, report, _ = _align_pipeline(scn, outdir)
    status = {
        EXIT_OK: "aligned",
        EXIT_FAILURE: "finished with failed checks",
        EXIT_BREACH: "aborted on sparsity breach",
        EXIT_NONTERM: "stopped at step budget",
    }[code]
    print(
        f"{scn.name}: {status}; steps = {len(report.steps)}, "
        f"horizon = {report.total_horizon:.6g}, "
        f"deviation = {report.max_velocity_deviation:.6g} -> {outdir}"
    )
    return code


def _rebuild_kernel(man: dict):
    if man["kernel_name"] == "constant":
        kernel = constant_kernel(float(man["kernel_strength"]))
    else:
        kernel = inverse_power_kernel(
            float(man["kernel_strength"]),
            float(man["kernel_beta"]),
            float(man["kernel_v_max"]),
        )
    declared = float(man["kernel_lipschitz"])
    if abs(declared - kernel.lipschitz_L) > 1e-9 * max(1.0, declared):
        from dataclasses import replace

        kernel = replace(kernel, lipschitz_L=declared)
    return kernel


def _load_run(rundir: str):
    """Reconstruct the alignment report (and kernel, initial measure) from
    a run directory's artifacts."""
    man_path = os.path.join(rundir, "manifest.txt")
    if not os.path.exists(man_path):
        raise ConfigError(f"{rundir}: not a run directory (no manifest.txt)")
    man = _read_manifest(man_path)

    plans: dict[int, FundamentalStepPlan] = {}
    with open(os.path.join(rundir, "plans.csv"), newline="") as fh:
        for row in csv.DictReader(fh):
            plans[int(row["k"])] = FundamentalStepPlan(
                axis=int(row["axis"]), c=float(row["c"]), n=int(row["n"]),
                partition=_parse_vec(row["partition"]), delta=float(row["delta"]),
                eta=float(row["eta"]), T=float(row["T"]), V=float(row["V"]),
                X=float(row["X"]), lipschitz_L=float(row["lipschitz_L"]),
                epsilon=float(row["epsilon"]), alpha=float(row["alpha"]),
            )

    rows_by_step: dict[int, list] = {}
    with open(os.path.join(rundir, "trace.csv"), newline="") as fh:
        for row in csv.DictReader(fh):
            rows_by_step.setdefault(int(row["k"]), []).append(row)
    traces = {
        k: ConstraintTrace(
            times=np.asarray([float(r["t"]) for r in rows]),
            omega_mass=np.asarray([float(r["omega_mass"]) for r in rows]),
            u_sup=np.asarray([float(r["u_sup"]) for r in rows]),
            v_support_height=np.asarray(
                [float(r["v_support_height"]) for r in rows]
            ),
            density_sup=np.asarray([float(r["density_sup"]) for r in rows]),
        )
        for k, rows in rows_by_step.items()
    }

    steps = []
    with open(os.path.join(rundir, "report.csv"), newline="") as fh:
        for row in csv.DictReader(fh):
            k = int(row["k"])
            steps.append(
                StepRecord(
                    index=k, axis=int(row["axis"]), t_start=float(row["t_start"]),
                    t_end=float(row["t_end"]), n=int(row["n"]),
                    alpha=float(row["alpha"]), epsilon=float(row["epsilon_pass"]),
                    X=float(row["X_k"]), V=float(row["V_k"]),
                    delta=float(row["delta_k"]), eta=float(row["eta_k"]),
                    T=float(row["T_k"]), V_pred=float(row["V_pred"]),
                    V_meas=float(row["V_meas"]), X_pred=float(row["X_pred"]),
                    X_meas=float(row["X_meas"]),
                    omega_mass_max=float(row["omega_mass_max"]),
                    u_sup_max=float(row["u_sup"]),
                    density_sup_start=float(row["density_sup_start"]),
                    x_density_sup_start=float(row["x_density_sup_start"]),
                    v_box_lo_before=_parse_vec(row["v_box_lo_before"]),
                    v_box_hi_before=_parse_vec(row["v_box_hi_before"]),
                    v_box_lo_after=_parse_vec(row["v_box_lo_after"]),
                    v_box_hi_after=_parse_vec(row["v_box_hi_after"]),
                    trace=traces[k], plan=plans[k],
                )
            )
    steps.sort(key=lambda s: s.index)

    passes = []
    with open(os.path.join(rundir, "passes.csv"), newline="") as fh:
        for row in csv.DictReader(fh):
            passes.append(
                PassRecord(
                    axis=int(row["axis"]), reflected=bool(int(row["reflected"])),
                    frame=FrameMap(
                        axis=int(row["axis"]), sigma=float(row["sigma"]),
                        v_shift=float(row["v_shift"]), x_shift=float(row["x_shift"]),
                    ),
                    eps_pass=float(row["eps_pass"]), alpha=float(row["alpha"]),
                    n=int(row["n"]), V0=float(row["V0"]),
                    n_steps=int(row["n_steps"]), horizon=float(row["horizon"]),
                    horizon_bound=float(row["horizon_bound"]),
                    t_start=float(row["t_start"]), t_end=float(row["t_end"]),
                )
            )

    traj_dir = os.path.join(rundir, "trajectory")
    ckpts = sorted(f for f in os.listdir(traj_dir) if f.endswith(".csv"))
    _, mu0 = read_checkpoint_csv(os.path.join(traj_dir, ckpts[0]))
    _, final = read_checkpoint_csv(os.path.join(traj_dir, ckpts[-1]))

    breach = None
    if "breach_t" in man:
        breach = {
            "t": float(man["breach_t"]),
            "value": float(man["breach_value"]),
            "step_index": int(man["breach_step"]),
        }
    report = AlignmentReport(
        steps=tuple(steps),
        passes=tuple(passes),
        terminated=man.get("terminated") == "True",
        total_horizon=float(man["total_horizon"]),
        final_measure=final,
        max_velocity_deviation=float(man["max_velocity_deviation"]),
        breach=breach,
    )
    return report, _rebuild_kernel(man), mu0


def _cmd_verify(args) -> int:
    report, kernel, mu0 = _load_run(args.rundir)
    results = run_report_checks(report, kernel=kernel, mu0=mu0, dim=mu0.dim)
    _write_verify_csv(os.path.join(args.rundir, "verify.csv"), results)
    for r in results:
        print(r)
    if any(not r.passed and not r.warning for r in results):
        return EXIT_FAILURE
    return EXIT_OK


def _float_grid(raw: str | None, fallback):
    if raw is None:
        return [fallback]
    return [float(p) for p in raw.split(",") if p.strip()]


def _cmd_sweep(args) -> int:
    scn = parse_scenario(args.scenario)
    outdir = _resolve_output(scn.output, args.output)
    cs = _float_grid(args.c, scn.mass_budget)
    epss = _float_grid(args.epsilon, scn.precision)
    ns = (
        [int(p) for p in args.n_particles.split(",") if p.strip()]
        if args.n_particles
        else [scn.n_particles]
    )
    os.makedirs(outdir, exist_ok=True)
    rows = []
    for c in cs:
        for eps in epss:
            for n in ns:
                cell = with_overrides(scn, mass_budget=c, precision=eps, n_particles=n)
                cell_dir = os.path.join(outdir, f"c{c:g}_eps{eps:g}_n{n}")
                started = time.perf_counter()
                try:
                    code, report, _ = _align_pipeline(cell, cell_dir)
                    wall = time.perf_counter() - started
                    horizon = report.total_horizon
                    bound = sum(p.horizon_bound for p in report.passes)
                    slack = horizon / bound if bound > 0.0 else 0.0
                    rows.append(
                        [f"{c:g}", f"{eps:g}", str(n), _fmt(horizon), _fmt(bound),
                         _fmt(slack), str(len(report.steps)),
                         str(report.terminated), str(code), f"{wall:.3f}", ""]
                    )
                except SparseAlignError as exc:
                    wall = time.perf_counter() - started
                    rows.append(
                        [f"{c:g}", f"{eps:g}", str(n), "", "", "", "", "False",
                         str(EXIT_FAILURE), f"{wall:.3f}", str(exc)]
                    )
    with open(os.path.join(outdir, "sweep.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(
            ["c", "epsilon", "n_particles", "T_bar", "bound", "slack_ratio",
             "steps", "terminated", "exit_code", "wall_time_s", "error"]
        )
        w.writerows(rows)
    print(f"sweep over {len(rows)} cells -> {os.path.join(outdir, 'sweep.csv')}")
    return EXIT_OK


def _cmd_grid_compare(args) -> int:
    scn = parse_scenario(args.scenario)
    if args.nx is not None or args.nv is not None or args.grid_particles is not None:
        scn = with_overrides(
            scn,
            grid_nx=args.nx,
            grid_nv=args.nv,
            grid_particles=args.grid_particles,
        )
    outdir = _resolve_output(scn.output, args.output)
    density = scenario_density(scn)
    p = scn.sampler_params
    core = from_function(
        density,
        (float(np.min(p["x_low"])), float(np.max(p["x_high"]))),
        (float(np.min(p["v_low"])), float(np.max(p["v_high"]))),
        scn.grid_nx, scn.grid_nv,
    )
    mu0 = sample_particles(core, scn.grid_particles)
    kernel = build_kernel(scn, mu0)
    validate_kernel(kernel, support_box(mu0))
    cfg = AlignmentConfig(
        c=scn.mass_budget, epsilon=scn.precision, v_star=scn.target_velocity,
        lipschitz_L=kernel.lipschitz_L, integrator=scn.integrator,
    )
    plan = build_step_plan(mu0, cfg, axis=0)
    x_span, v_span = grid_for_step(plan, support_box(mu0), scn.grid_nx, scn.grid_nv)
    grid0 = from_function(density, x_span, v_span, scn.grid_nx, scn.grid_nv)
    field = ControlField(plan)
    grid_end = run_grid(grid0, kernel, field, 0.0, plan.T, dt_max=scn.integrator.dt_max)
    traj = simulate(mu0, kernel, field, 0.0, plan.T, scn.integrator)
    mu_end = traj[-1][1]

    w1_start = grid_vs_particle(grid0, mu0)
    w1_end = grid_vs_particle(grid_end, mu_end)
    mass_drift = abs(grid_end.total_mass() - grid0.total_mass())
    min_density = float(grid_end.density.min())

    os.makedirs(outdir, exist_ok=True)
    shutil.copyfile(scn.path, os.path.join(outdir, "scenario.ini"))
    write_grid_csv(grid0, os.path.join(outdir, "grid_initial.csv"))
    write_grid_csv(grid_end, os.path.join(outdir, "grid_final.csv"))
    with open(os.path.join(outdir, "compare.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["quantity", "value"])
        w.writerow(["w1_x_initial", _fmt(w1_start["x"])])
        w.writerow(["w1_v_initial", _fmt(w1_start["v"])])
        w.writerow(["w1_x_final", _fmt(w1_end["x"])])
        w.writerow(["w1_v_final", _fmt(w1_end["v"])])
        w.writerow(["mass_drift", _fmt(mass_drift)])
        w.writerow(["min_density", _fmt(min_density)])
        w.writerow(["step_duration", _fmt(plan.T)])
    _write_manifest(
        os.path.join(outdir, "manifest.txt"),
        _scenario_manifest(
            scn, kernel, mu0,
            {
                "grid_nx": str(scn.grid_nx), "grid_nv": str(scn.grid_nv),
                "grid_particles": str(scn.grid_particles),
                "step_duration": _fmt(plan.T),
            },
        ),
    )
    print(
        f"one step ({plan.T:.6g}s) on {scn.grid_nx}x{scn.grid_nv} grid vs "
        f"{scn.grid_particles} particles: W1_x = {w1_end['x']:.4g}, "
        f"W1_v = {w1_end['v']:.4g} -> {outdir}"
    )
    return EXIT_OK


# -- argument parsing --------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sparsealign",
        description=(
            "Sparse steering of cooperative particle ensembles to velocity "
            "consensus, with built-in invariant verification."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("scenario", help="scenario file (key = value sections)")
        p.add_argument("--output", help="output directory (default: scenario's)")

    p_sim = sub.add_parser("simulate", help="integrate the ensemble without control")
    add_common(p_sim)
    p_sim.add_argument("--horizon", type=float, help="override the run horizon")
    p_sim.add_argument("--dt", type=float, help="override the integrator step cap")
    p_sim.set_defaults(func=_cmd_simulate)

    p_align = sub.add_parser("align", help="synthesize and execute the steering law")
    add_common(p_align)
    p_align.add_argument("--c", type=float, help="override the control mass budget")
    p_align.add_argument("--epsilon", type=float, help="override the target precision")
    p_align.add_argument("--v-star", help="override the target velocity (comma-separated)")
    p_align.add_argument("--kernel", choices=["constant", "inverse-power"],
                         help="override the kernel family")
    p_align.add_argument("--n-particles", type=int, help="override the ensemble size")
    p_align.add_argument("--seed", type=int, help="override the sampling seed")
    p_align.add_argument("--dt", type=float, help="override the integrator step cap")
    p_align.add_argument("--max-steps", type=int, help="override the step budget")
    p_align.set_defaults(func=_cmd_align)

    p_verify = sub.add_parser("verify", help="re-check invariants on a run directory")
    p_verify.add_argument("rundir", help="directory written by a previous align run")
    p_verify.set_defaults(func=_cmd_verify)

    p_sweep = sub.add_parser("sweep", help="grid of align runs")
    add_common(p_sweep)
    p_sweep.add_argument("--c", help="comma-separated mass budgets")
    p_sweep.add_argument("--epsilon", help="comma-separated precisions")
    p_sweep.add_argument("--n-particles", help="comma-separated ensemble sizes")
    p_sweep.set_defaults(func=_cmd_sweep)

    p_grid = sub.add_parser(
        "grid-compare", help="cross-validate one braking step against the grid solver"
    )
    add_common(p_grid)
    p_grid.add_argument("--nx", type=int, help="position cells")
    p_grid.add_argument("--nv", type=int, help="velocity cells")
    p_grid.add_argument("--grid-particles", type=int, help="particle count for the comparison")
    p_grid.set_defaults(func=_cmd_grid_compare)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SchemaError as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except SparseAlignError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
