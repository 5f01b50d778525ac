"""Command line entry point: ``fracflow {verify,flow,compare,minimize,sweep}``.

Exit codes: 0 success, 1 a checked property failed, 2 usage or configuration
error, 3 the flow produced non-finite values.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from pathlib import Path

import numpy as np
import scipy
import sympy

from . import __version__
from .aubry_mather import (RotationVector, birkhoff_check, correction_sup, find_minimizer,
                           golden_convergents, oscillation, sweep)
from .config import RunConfig, dump_config, load_config
from .expressions import compile_expression, position_symbols
from .field import Field, constant_field, field_from_fn, load_field, save_field
from .flow import FlowDivergence, StepScheme, check_comparison, evolve, linear_flow_closed_form
from .operator import band_limited_field
from .suites import run_suites

EXIT_OK, EXIT_FAILED, EXIT_USAGE, EXIT_DIVERGED = 0, 1, 2, 3


class Run:
    """Output directory plus the resolved configuration for one invocation."""

    def __init__(self, command: str, config: RunConfig, json_stdout: bool):
        self.command = command
        self.config = config
        self.json_stdout = json_stdout
        self.out = Path(config.run.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.rng = np.random.default_rng(config.run.seed)

    def write_text(self, name: str, text: str):
        (self.out / name).write_text(text)

    def write_json(self, name: str, payload):
        self.write_text(name, json.dumps(payload, indent=2, sort_keys=True, default=_jsonable) + "\n")

    def manifest(self):
        versions = {"fracflow": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                    "sympy": sympy.__version__}
        self.write_json("manifest.json", {"command": self.command, "config": self.config.to_dict(),
                                          "versions": versions})
        self.write_text("config.ini", dump_config(self.config))

    def report(self, payload, lines):
        if self.json_stdout:
            print(json.dumps(payload, indent=2, sort_keys=True, default=_jsonable))
        else:
            for line in lines:
                print(line)


def _jsonable(value):
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, RotationVector):
        return str(value)
    raise TypeError(f"cannot serialize {type(value).__name__}")


def _finite_or_none(x):
    return None if x is None or not math.isfinite(x) else float(x)


# -- subcommands ---------------------------------------------------------


def cmd_verify(run: Run) -> int:
    cfg = run.config
    op = cfg.build_operator()
    params = cfg.build_params()
    checks = run_suites(op, params.gamma, params.lam, cfg.run.seed, only=cfg.verify.only or None,
                        count=cfg.verify.fields, tolerance=cfg.verify.tolerance)
    failures = [c for c in checks if c.asserted and not c.passed]
    payload = {"checks": [c.to_dict() for c in checks], "failures": len(failures), "passed": not failures}
    run.write_json("verify.json", payload)
    lines = [f"{'PASS' if c.passed else ('FAIL' if c.asserted else 'INFO')} {c.suite}/{c.name} "
             f"error={c.error:.3e} tol={c.tolerance:.1e}" for c in checks]
    lines.append(f"{len(checks) - len(failures)}/{len(checks)} checks passed")
    run.report(payload, lines)
    return EXIT_FAILED if failures else EXIT_OK


def initial_state(spec: str, op, rng, amplitude: float) -> Field:
    """``random`` | ``zero`` | ``constant:<c>`` | ``expr:<f(x)>`` | path to a field CSV."""
    grid = op.grid
    spec = spec.strip()
    if spec == "random":
        return band_limited_field(op, rng, amplitude)
    if spec == "zero":
        return constant_field(grid, 0.0)
    kind, _, body = spec.partition(":")
    if kind == "constant":
        return constant_field(grid, float(body))
    if kind == "expr":
        return field_from_fn(grid, compile_expression(body, position_symbols(grid.dim)))
    u = load_field(spec)
    if u.grid != grid:
        raise ValueError(f"field in {spec} lives on {u.grid}, expected {grid}")
    return u


def cmd_flow(run: Run) -> int:
    cfg = run.config
    op = cfg.build_operator()
    params = cfg.build_params()
    potential = cfg.build_potential()
    u0 = initial_state(cfg.flow.u0, op, run.rng, cfg.flow.amplitude)
    save_field(u0, run.out / "initial_state.csv")
    scheme = StepScheme.parse(cfg.flow.scheme)
    start = time.perf_counter()
    try:
        traj = evolve(u0, scheme, op, params, potential)
    except FlowDivergence as exc:
        if exc.last_good is not None:
            save_field(Field(op.grid, exc.last_good), run.out / "last_good_state.csv")
        payload = {"diverged": True, "message": str(exc), "last_good_step": exc.step}
        run.write_json("summary.json", payload)
        run.report(payload, [f"DIVERGED {exc}; last good state written to {run.out / 'last_good_state.csv'}"])
        return EXIT_DIVERGED
    wall = time.perf_counter() - start
    run.write_text("trajectory.csv", traj.to_csv())
    save_field(traj.final, run.out / "final_state.csv")
    summary = {
        "diverged": False,
        "scheme": scheme.label(),
        "steps": len(traj.times) - 1,
        "final_time": traj.times[-1],
        "final_energy": traj.energy[-1],
        "final_residual": traj.residual[-1],
        "final_max_norm": traj.max_norm[-1],
        "converged": traj.converged,
        "energy_increases": len(traj.energy_increases),
    }
    if potential.name == "zero":
        exact = linear_flow_closed_form(u0, op, params, traj.times[-1])
        summary["linear_oracle_error"] = float(np.max(np.abs(traj.final.values - exact.values)))
    run.write_json("summary.json", summary)
    # wall time is kept apart so the other outputs stay byte-identical across runs
    run.write_json("timing.json", {"wall_seconds": wall})
    run.report({**summary, "wall_seconds": wall}, [
        f"{summary['steps']} steps to t={summary['final_time']:.4g} ({scheme.label()})",
        f"energy {traj.energy[0]:.10g} -> {summary['final_energy']:.10g}",
        f"residual {summary['final_residual']:.3e}, converged={traj.converged}",
        f"wall time {wall:.2f}s",
    ])
    return EXIT_OK


def ordered_pair(op, rng, amplitude: float = 1.0) -> tuple[Field, Field]:
    """v0 band-limited random, u0 = v0 + |band-limited random|."""
    v0 = band_limited_field(op, rng, amplitude)
    bump = band_limited_field(op, rng, amplitude)
    return v0.with_values(v0.values + np.abs(bump.values)), v0


def cmd_compare(run: Run) -> int:
    cfg = run.config
    op = cfg.build_operator()
    params = cfg.build_params()
    potential = cfg.build_potential()
    scheme = StepScheme.parse(cfg.flow.scheme)
    spec = cfg.compare
    rows, violations = [], 0
    for k in range(spec.pairs):
        u0, v0 = ordered_pair(op, run.rng, cfg.flow.amplitude)
        rep = check_comparison(u0, v0, scheme, op, params, potential, spec.horizon, exploratory=spec.exploratory)
        violations += not rep.passed
        rows.append((k, rep.min_gap, rep.tolerance, rep.first_violation))
    lines = ["pair,min_gap,tolerance,violation_time,violation_node"]
    for k, gap, tol, first in rows:
        where = f"{first[0]!r},{first[1]}" if first else ","
        lines.append(f"{k},{gap!r},{tol!r},{where}")
    run.write_text("pair_gaps.csv", "\n".join(lines) + "\n")
    payload = {
        "pairs": spec.pairs,
        "violations": violations,
        "min_gap": min((r[1] for r in rows), default=None),
        "exploratory": spec.exploratory,
        "gamma": params.gamma,
    }
    run.write_json("compare.json", payload)
    run.report(payload, [f"{spec.pairs} pairs, {violations} violations, min gap {payload['min_gap']}"])
    if violations and not spec.exploratory:
        return EXIT_FAILED
    return EXIT_OK


def _tilted_period(cfg: RunConfig, omega: RotationVector) -> int:
    if omega.dim != cfg.grid.d:
        raise ValueError(f"omega {omega} has dimension {omega.dim}, grid has d={cfg.grid.d}")
    return math.lcm(cfg.grid.N, omega.denominator)


def cmd_minimize(run: Run) -> int:
    cfg = run.config
    omega = RotationVector.parse(cfg.minimize.omega)
    period = _tilted_period(cfg, omega)
    op = cfg.build_operator(period)
    params = cfg.build_params(t_end=cfg.minimize.t_end)
    potential = cfg.build_potential()
    scheme = StepScheme.parse(cfg.flow.scheme)
    tilted, info = find_minimizer(omega, op, params, potential, scheme, cfg.minimize.snapshot_every)
    birkhoff = birkhoff_check(tilted, cfg.minimize.window)
    trail_ok = all(birkhoff_check(s, cfg.minimize.window).ok for s in info.snapshots)
    save_field(tilted.p, run.out / "periodic_part.csv")
    save_field(tilted.p.with_values(tilted.full_values()), run.out / "minimizer.csv")
    curve = ["t,energy,residual"] + [f"{t!r},{e!r},{r!r}" for (t, e), (_, r) in
                                      zip(info.energy_curve, info.residual_curve)]
    run.write_text("descent.csv", "\n".join(curve) + "\n")
    payload = {
        "omega": str(omega),
        "N": period,
        "converged": info.converged,
        "residual": info.residual,
        "steps": info.steps,
        "time": info.time,
        "energy": info.energy,
        "energy_per_cell": info.energy / op.grid.volume,
        "birkhoff_ok": birkhoff.ok,
        "birkhoff_along_descent": trail_ok,
        "osc_Q": oscillation(tilted, np.full(op.grid.dim, 0.5), 1.0),
        "sup_p": correction_sup(tilted),
    }
    run.write_json("minimize.json", payload)
    run.report(payload, [
        f"omega={omega} N={period}: residual {info.residual:.3e} after {info.steps} steps "
        f"(converged={info.converged})",
        f"Birkhoff final={birkhoff.ok} along descent={trail_ok}",
    ])
    return EXIT_OK if info.converged and birkhoff.ok and trail_ok else EXIT_FAILED


def read_omegas(path) -> list[RotationVector]:
    out = []
    for line in Path(path).read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if line and line.lower() != "omega":
            out.append(RotationVector.parse(line))
    return out


def cmd_sweep(run: Run, golden: bool, omegas_file) -> int:
    cfg = run.config
    if omegas_file:
        omegas = read_omegas(omegas_file)
    elif golden or not cfg.sweep.omegas:
        omegas = [RotationVector(w.numerators + (0,) * (cfg.grid.d - 1), w.denominator)
                  for w in golden_convergents(cfg.sweep.levels)]
    else:
        omegas = [RotationVector.parse(w) for w in cfg.sweep.omegas.split(";")]
    for w in omegas:
        _tilted_period(cfg, w)
    params = cfg.build_params(t_end=cfg.minimize.t_end)
    report = sweep(omegas, lambda N: cfg.build_operator(N), params, cfg.build_potential(),
                   window=cfg.minimize.window, cube_side=cfg.sweep.cube_side)
    run.write_text("sweep.csv", report.to_csv())
    fields_dir = run.out / "fields"
    fields_dir.mkdir(exist_ok=True)
    for row in report.rows:
        if row.minimizer is not None:
            tag = str(row.omega).replace(",", "_").replace("/", "over")
            save_field(row.minimizer.p, fields_dir / f"p_{tag}.csv")
    rows = [{"omega": str(r.omega), "N": r.N, "residual": _finite_or_none(r.residual), "birkhoff_ok": r.birkhoff_ok,
             "osc_Q": _finite_or_none(r.osc_q), "sup_p": _finite_or_none(r.sup_p),
             "energy_per_cell": _finite_or_none(r.energy_per_cell), "converged": r.converged, "error": r.error}
            for r in report.rows]
    payload = {"rows": rows, "all_converged": all(r.converged for r in report.rows)}
    run.write_json("sweep.json", payload)
    run.report(payload, [report.to_csv().rstrip()])
    return EXIT_OK if payload["all_converged"] and all(r.birkhoff_ok for r in report.rows) else EXIT_FAILED


# -- argument handling -----------------------------------------------------


def _common(parser: argparse.ArgumentParser, suppress: bool):
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", default=default, help="INI file with [grid], [operator], ... sections")
    parser.add_argument("--seed", type=int, default=default, help="random seed (64-bit integer)")
    parser.add_argument("--out", default=default, help="output directory")
    parser.add_argument("--json", action="store_true", default=argparse.SUPPRESS if suppress else False,
                        help="print the report as JSON")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fracflow", description=__doc__.splitlines()[0])
    _common(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify", help="operator identities, quadrature oracles, smoothing and positivity")
    _common(p, suppress=True)
    p.add_argument("--only", help="comma-separated suite names")
    p.add_argument("--tolerance", type=float, help="override every tolerance")

    p = sub.add_parser("flow", help="evolve one initial state")
    _common(p, suppress=True)
    p.add_argument("--u0", help="random | zero | constant:<c> | expr:<f(x)> | <field.csv>")
    p.add_argument("--t-end", type=float)

    p = sub.add_parser("compare", help="comparison principle on random ordered pairs")
    _common(p, suppress=True)
    p.add_argument("--pairs", type=int)
    p.add_argument("--horizon", type=float)
    p.add_argument("--exploratory", action="store_true", default=None)

    p = sub.add_parser("minimize", help="plane-like minimizer at a rational rotation vector")
    _common(p, suppress=True)
    p.add_argument("--omega", help="q1,...,qd/N")

    p = sub.add_parser("sweep", help="minimizers along a sequence of rotation vectors")
    _common(p, suppress=True)
    p.add_argument("--golden", action="store_true", help="use convergents of the golden mean")
    p.add_argument("--levels", type=int)
    p.add_argument("--omegas", help="file with one rotation vector per line")
    return parser


def resolve_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    overrides = {
        ("run", "seed"): args.seed,
        ("run", "out"): args.out,
        ("verify", "only"): getattr(args, "only", None),
        ("verify", "tolerance"): getattr(args, "tolerance", None),
        ("flow", "u0"): getattr(args, "u0", None),
        ("flow", "t_end"): getattr(args, "t_end", None),
        ("compare", "pairs"): getattr(args, "pairs", None),
        ("compare", "horizon"): getattr(args, "horizon", None),
        ("compare", "exploratory"): getattr(args, "exploratory", None),
        ("minimize", "omega"): getattr(args, "omega", None),
        ("sweep", "levels"): getattr(args, "levels", None),
    }
    for (section, key), value in overrides.items():
        if value is not None:
            setattr(getattr(cfg, section), key, value)
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        cfg.resolved_gamma()
        run = Run(args.command, cfg, args.json)
        run.manifest()
        if args.command == "verify":
            return cmd_verify(run)
        if args.command == "flow":
            return cmd_flow(run)
        if args.command == "compare":
            return cmd_compare(run)
        if args.command == "minimize":
            return cmd_minimize(run)
        return cmd_sweep(run, args.golden, args.omegas)
    except (ValueError, OSError) as exc:
        print(f"fracflow {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
