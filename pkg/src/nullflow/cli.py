"""``nullflow`` command line: synth, simulate, verify and audit a scenario.

Exit codes: 0 all checks pass, 1 a check failed, 2 bad input, 3 numerical
abort.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import flowfield as ff
from .flow import NumericalAbort, evolve, evolve_position
from .frames import FrameError, integrate_curve
from .scenario import ScenarioError, builtin_names, load_scenario
from . import verify as vf

EXIT_OK, EXIT_FAIL, EXIT_INPUT, EXIT_ABORT = 0, 1, 2, 3


def _out_dir(args, scenario) -> Path:
    out = Path(args.out or scenario.output)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _say(msg: str) -> None:
    print(msg, flush=True)


def cmd_synth(args, sc) -> int:
    curve = integrate_curve(sc.kind, sc.curvatures, sc.frame0, sc.origin,
                            (0.0, sc.length), sc.du)
    out = _out_dir(args, sc)
    curve.to_csv(out / "curve.csv")
    _say(f"{sc.name}: {len(curve)} samples, max frame residual {curve.max_residual():.3e}")
    _say(f"wrote {out / 'curve.csv'}")
    return EXIT_OK


def cmd_simulate(args, sc) -> int:
    grid = evolve(sc, mode=args.mode)
    out = _out_dir(args, sc)
    grid.to_csv(out / "grid.csv")
    grid.to_binary(out / "grid.bin")
    lengths = grid.total_lengths()
    drift = grid.arclength_drift()
    with open(out / "drift.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "length", "relative_drift"])
        for row in zip(grid.t, lengths, drift):
            w.writerow([format(x, ".17g") for x in row])
    worst = float(np.max(np.abs(drift)))
    _say(f"{sc.name}: {len(grid.t)} time slices x {len(grid.u)} samples, "
         f"max |relative length drift| {worst:.3e}")
    status = EXIT_OK
    if sc.max_drift is not None and worst > sc.max_drift:
        _say(f"FAIL: drift {worst:.3e} exceeds max_drift {sc.max_drift:g}")
        status = EXIT_FAIL
    if sc.min_drift is not None and worst < sc.min_drift:
        _say(f"FAIL: drift {worst:.3e} below min_drift {sc.min_drift:g}")
        status = EXIT_FAIL
    return status


def _position_grids(sc, levels):
    grids = []
    for lvl in range(levels):
        du, dt = sc.du / 2 ** lvl, sc.dt / 2 ** lvl
        grids.append(evolve_position(sc.kind, sc.curvatures, sc.frame0, sc.origin, sc.flow,
                                     sc.length, du, dt, int(round(sc.duration / dt)), sc.gauge))
    return grids


def run_verify(sc, levels: int, mode: str = "transport") -> list:
    """Every check for a scenario, as a list of reports."""
    setup = sc.transport_setup()
    grids = setup.grids(levels) if mode == "transport" else _position_grids(sc, levels)
    reports = vf.evaluate_all(grids, tolerance=sc.tolerance, min_order=sc.min_order,
                              variant_choice=sc.variant)
    reports.append(vf.check_speed_rate(sc.kind, sc.curvatures, sc.frame0, sc.origin, sc.flow,
                                       sc.length, sc.speed_du, levels=levels, h=sc.speed_h))
    reports.append(vf.cross_check_modes(setup))
    return reports


def cmd_verify(args, sc) -> int:
    levels = args.refinements or sc.refinements
    mode = args.mode or "transport"
    reports = run_verify(sc, levels, mode)
    counted = [r for r in reports if r.selected]
    ok = all(r.status != vf.FAIL for r in counted)
    out = _out_dir(args, sc)
    meta = {"scenario": sc.name, "kind": sc.kind.value, "mode": mode, "refinements": levels,
            "variant_choice": sc.variant, "pass": ok}
    (out / "report.json").write_text(vf.reports_to_json(reports, **meta))
    table = vf.format_table(reports)
    (out / "report.txt").write_text(table)
    _say(table.rstrip())
    failed = [r.name + (f" [{r.variant}]" if r.variant else "") for r in counted
              if r.status == vf.FAIL]
    _say(f"{sc.name}: {'PASS' if ok else 'FAIL'}" + (f" ({', '.join(failed)})" if failed else ""))
    return EXIT_OK if ok else EXIT_FAIL


def cmd_audit(args, sc) -> int:
    levels = args.refinements or sc.refinements
    audit = vf.sign_audit(seed=sc.seed, runs=sc.audit_runs, levels=levels,
                          tolerance=sc.tolerance, min_order=sc.min_order)
    out = _out_dir(args, sc)
    (out / "audit.json").write_text(vf.audit_to_json(audit))
    table = vf.audit_table(audit)
    (out / "audit.txt").write_text(table)
    _say(table.rstrip())
    decided = all(e["winner"] is not None for e in audit["identities"]
                  if e["name"] in vf.AUDITED)
    _say(f"audit seed {sc.seed}: {'every disputed display has one winner' if decided else 'undecided'}")
    return EXIT_OK if decided else EXIT_FAIL


COMMANDS = {"synth": cmd_synth, "simulate": cmd_simulate, "verify": cmd_verify, "audit": cmd_audit}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="nullflow",
        description="Synthesize, evolve and verify partially null and pseudo null curve flows.",
        epilog="built-in scenarios: " + ", ".join(builtin_names()),
    )
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--scenario", required=True,
                   help="scenario file, or the name of a built-in scenario")
    p.add_argument("--out", help="output directory (default: the scenario's 'output' key)")
    p.add_argument("--refinements", type=int, help="number of grid refinements (>= 3)")
    p.add_argument("--mode", choices=("transport", "position"), help="evolution mode override")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.refinements is not None and args.refinements < 3:
        print("error: --refinements must be at least 3", file=sys.stderr)
        return EXIT_INPUT
    try:
        sc = load_scenario(args.scenario)
    except ScenarioError as exc:
        for e in exc.errors:
            print(f"error: {exc.source}: {e}", file=sys.stderr)
        return EXIT_INPUT
    except (FileNotFoundError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    try:
        return COMMANDS[args.command](args, sc)
    except (NumericalAbort, FrameError, ff.EvalError) as exc:
        print(f"error: scenario {sc.name} ({args.command}): numerical abort: {exc}",
              file=sys.stderr)
        return EXIT_ABORT
    except ValueError as exc:
        print(f"error: scenario {sc.name} ({args.command}): {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
