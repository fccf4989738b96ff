"""Command line: ``funnelctl check|normalform|simulate <scenario>``.

Exit codes: 0 pass, 1 check failure, 2 funnel violation, 3 numerical stall,
4 input error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from .controller import FunnelViolation, funnel_jet
from .normalform import NormalFormError, check_assumptions, extract_blocks
from .ode import IntegrationStalled
from .scenario import Scenario, ScenarioError, load_scenario
from .simulator import Trace, integrate

EXIT_OK, EXIT_CHECK, EXIT_FUNNEL, EXIT_STALL, EXIT_INPUT = 0, 1, 2, 3, 4


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_atomic(path, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _emit(text: str, out) -> None:
    if out:
        write_atomic(out, text)
    else:
        sys.stdout.write(text)


def cmd_check(scenario: Scenario, grid_points: int | None = None):
    """Assumption report on the scenario horizon; exit code 0 iff all checks pass."""
    n = grid_points or scenario.sim.check_grid_points
    grid = np.linspace(0.0, scenario.sim.t_end, n)
    report = check_assumptions(scenario.plant, scenario.relative_degree, grid, alpha=scenario.sim.alpha,
                               weight_method=scenario.weight.method, weight_matrix=scenario.weight.matrix)
    return report, EXIT_OK if report.passed else EXIT_CHECK


def cmd_normalform(scenario: Scenario, t: float = 0.0):
    return extract_blocks(scenario.plant, t, scenario.r)


def _windows(times: np.ndarray, mask: np.ndarray) -> list:
    out, start = [], None
    for t, on in zip(times, mask):
        if on and start is None:
            start = t
        if not on and start is not None:
            out.append([float(start), float(prev)])
            start = None
        prev = t
    if start is not None:
        out.append([float(start), float(times[-1])])
    return out


def _window_mask(trace: Trace, e: dict) -> np.ndarray:
    t_to = e.get("t_to", trace.t[-1])
    return (trace.t >= e["t_from"] - 1e-12) & (trace.t <= t_to + 1e-12)


def evaluate_expectations(trace: Trace, expectations) -> list:
    results = []
    for e in expectations:
        sel = _window_mask(trace, e)
        vals = np.abs(trace.ueff[sel, e["actuator"]])
        peak = float(vals.max()) if vals.size else float("nan")
        kind = e["kind"]
        if kind == "ueff_bound":
            ok = vals.size > 0 and peak <= e["max_abs"]
        elif kind == "ueff_below":
            ok = vals.size > 0 and peak < e["max_abs"]
        else:
            ok = vals.size > 0 and peak >= e["min_abs"]
        results.append({**e, "observed_max_abs": peak, "passed": bool(ok)})
    return results


def build_summary(scenario: Scenario, trace: Trace, report=None) -> dict:
    """Observables of the run: funnel distances, extrema, saturation windows, verdicts."""
    plant = scenario.plant
    phi = np.array([[funnel_jet(f, t, 0).value for f in scenario.funnels] for t in trace.t])
    dist = 1.0 / phi - trace.enorm
    sat_windows = {}
    for i, g in enumerate(plant.nonlinearity):
        if g.kind in ("saturation", "gated_saturation"):
            mask = np.array([g.saturating(t, u) for t, u in zip(trace.t, trace.u[:, i])])
            sat_windows[str(i)] = _windows(trace.t, mask)
    expectations = evaluate_expectations(trace, scenario.expectations)
    summary = {
        "scenario": scenario.name,
        "samples": int(trace.t.size),
        "t_end": float(trace.t[-1]),
        "max_margin": trace.margin.max(axis=0).tolist(),
        "min_boundary_distance": dist.min(axis=0).tolist(),
        "max_gain": trace.k.max(axis=0).tolist(),
        "max_norm_u": float(np.linalg.norm(trace.u, axis=1).max()),
        "max_norm_x": float(np.linalg.norm(trace.x, axis=1).max()),
        "max_abs_ueff": np.abs(trace.ueff).max(axis=0).tolist(),
        "saturation_windows": sat_windows,
        "expectations": expectations,
        "all_margins_below_one": bool(np.all(trace.margin < 1.0)),
    }
    if report is not None:
        summary["assumptions"] = report.to_dict()
    summary["passed"] = summary["all_margins_below_one"] and all(e["passed"] for e in expectations)
    return summary


def cmd_simulate(scenario: Scenario, out_csv=None, out_summary=None, rtol=None, atol=None) -> int:
    changes = {k: v for k, v in (("rtol", rtol), ("atol", atol)) if v is not None}
    if changes:
        scenario = scenario.with_sim(**changes)
    report, code = cmd_check(scenario)
    if code != EXIT_OK and not scenario.sim.override_checks:
        _emit(json.dumps(_jsonable({"error": "assumption check failed", "assumptions": report.to_dict()}),
                         indent=2) + "\n", out_summary)
        return EXIT_CHECK
    try:
        trace = integrate(scenario)
    except FunnelViolation as exc:
        record = {"error": "funnel violation", "index": exc.index, "t": exc.t, "margin": exc.margin}
        partial = getattr(exc, "trace", None)
        if out_csv and partial is not None and partial.t.size:
            write_atomic(out_csv, partial.to_csv())
        _emit(json.dumps(_jsonable(record), indent=2) + "\n", out_summary)
        return EXIT_FUNNEL
    except IntegrationStalled as exc:
        record = {"error": "integration stalled", "t": exc.t, "step": exc.h}
        _emit(json.dumps(_jsonable(record), indent=2) + "\n", out_summary)
        return EXIT_STALL
    if out_csv:
        write_atomic(out_csv, trace.to_csv())
    summary = build_summary(scenario, trace, report)
    _emit(json.dumps(_jsonable(summary), indent=2) + "\n", out_summary)
    return EXIT_OK if summary["passed"] else EXIT_CHECK


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="funnelctl", description="Fault tolerant funnel control toolkit")
    sub = ap.add_subparsers(dest="command", required=True)
    c = sub.add_parser("check", help="check structural assumptions on the scenario horizon")
    c.add_argument("scenario")
    c.add_argument("--out")
    c.add_argument("--grid", type=int, help="number of uniform grid points")
    nf = sub.add_parser("normalform", help="emit U, U^-1 and normal-form blocks at one time")
    nf.add_argument("scenario")
    nf.add_argument("--time", type=float, default=0.0)
    nf.add_argument("--out")
    s = sub.add_parser("simulate", help="run the closed loop and write trace and summary")
    s.add_argument("scenario")
    s.add_argument("--out", help="trace CSV path")
    s.add_argument("--summary", help="summary JSON path (default stdout)")
    s.add_argument("--rtol", type=float)
    s.add_argument("--atol", type=float)
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        scenario = load_scenario(args.scenario)
        if args.command == "check":
            report, code = cmd_check(scenario, args.grid)
            _emit(json.dumps(_jsonable(report.to_dict()), indent=2) + "\n", args.out)
            return code
        if args.command == "normalform":
            try:
                nf = cmd_normalform(scenario, args.time)
            except NormalFormError as exc:
                print(f"error: {exc} (t={args.time})", file=sys.stderr)
                return EXIT_CHECK
            _emit(json.dumps(_jsonable(nf.to_dict()), indent=2) + "\n", args.out)
            return EXIT_OK
        return cmd_simulate(scenario, args.out, args.summary, args.rtol, args.atol)
    except ScenarioError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
