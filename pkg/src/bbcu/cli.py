"""Command-line entry point: ``bbcu run|analyze|roa <scenario>``.

Exit codes: 0 success, 2 configuration error, 3 numeric failure,
4 a runtime safety check failed.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import analysis, roa
from .config import ScenarioSpec, load_spec
from .control import ControllerState
from .errors import BBCUError, ConfigError, HypothesisError, InfeasibleError, NumericError
from .plant import dynamic_matrix_u1, equilibrium
from .sim import SimTrace, run_closed_loop
from .supervisor import Supervisor

__all__ = ["main", "run_scenario", "analyze_config", "scenario_roa_table", "initial_condition",
           "RunResult", "SafetyBreach"]

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_BREACH = 0, 2, 3, 4


class SafetyBreach(BBCUError):
    """A runtime invariant (ROA gate safety, gain saturation) was violated."""


@dataclass
class RunResult:
    spec: ScenarioSpec
    trace: SimTrace
    roa_table: dict
    breaches: list


def scenario_roa_table(spec: ScenarioSpec) -> dict:
    r = spec.roa
    return roa.build_roa_table(
        spec.plant, spec.gains.gamma2, r.loads, r.currents, spec.box, spec.gains.K_max,
        shift=r.shift, grid_res=r.grid_res, n_random=r.n_random, seed=r.seed,
    )


def initial_condition(spec: ScenarioSpec):
    """Initial state and gain; default is the current-loop steady state at the first load."""
    p0 = spec.plant.with_load(spec.load.segments[0].R_D)
    if spec.initial_state is None:
        ss = analysis.mode1_steady_state(spec.gains.x1_ref, p0)
        x0 = (ss.x1_star, ss.x2_star, ss.x3_star)
    else:
        x0 = tuple(spec.initial_state)
    return np.array(x0, dtype=float), spec.initial_k


def run_scenario(spec: ScenarioSpec, roa_table: dict | None = None) -> RunResult:
    if roa_table is None:
        roa_table = scenario_roa_table(spec)
    sup = Supervisor(spec.supervisor, roa_table, spec.plant, spec.gains)
    x0, k0 = initial_condition(spec)
    trace = run_closed_loop(spec.plant, spec.load, spec.gains, spec.sim, x0, sup, k0=k0)
    breaches = []
    for e in trace.events:
        if e.to_mode == 2 and e.reason != "ramp" and e.contained is False:
            breaches.append(f"t = {e.t:.6f} s: state outside the ROA of the entered set-point")
    if np.any(np.abs(trace["k"]) > spec.gains.K_max * (1 + 1e-12)):
        breaches.append("|k| exceeded K_max")
    return RunResult(spec, trace, roa_table, breaches)


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (complex, np.complexfloating)):
        return [_jsonable(v.real), _jsonable(v.imag)]
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else str(v)
    return v


def _theorem1(box, spec, p):
    try:
        c = analysis.theorem1_constants(box, spec.gains.x1_ref, spec.gains.gamma1, p, spec.gains.K_max)
    except HypothesisError as exc:
        return {"hypothesis_violation": exc.failed}
    out = {k: getattr(c, k) for k in (
        "psi1", "psi2", "psi3", "K_max_bound", "gamma1_bound", "a_of_gamma1",
        "b_of_gamma1", "nu", "c", "omega", "cylinder_radius", "valid", "failed")}
    if c.omega > 0:
        s0 = analysis.max_sigma_over_box(box, spec.gains.K_max)
        out["sigma0_worst"] = s0
        out["t_reach_bound"] = analysis.reaching_time_bound(s0, c.omega)
    return out


def _mode2_reaching(box, spec, p, I_OL):
    law = spec.gains.mode2_law(I_OL, p)
    try:
        w = analysis.reaching_rate(box, ControllerState(0.0, law, spec.gains.K_max), p)
    except InfeasibleError as exc:
        return {"unavailable": str(exc)}
    s0 = analysis.max_sigma_over_box(box, spec.gains.K_max)
    return {"omega": w, "sigma0_worst": s0, "t_reach_bound": s0 / w}


def analyze_config(spec: ScenarioSpec, roa_table: dict | None = None) -> dict:
    """Constants, bounds, validity flags and eigenvalues for a scenario."""
    g = spec.gains
    p0 = spec.plant.with_load(spec.load.segments[0].R_D)
    rep = {"scenario": spec.name, "load_first": p0.R_D}
    A1 = dynamic_matrix_u1(p0)
    rep["plant"] = {
        "equilibrium_u0": list(equilibrium(0, p0)),
        "equilibrium_u1": list(equilibrium(1, p0)),
        "eig_u1": analysis.cubic_roots(np.poly(A1)),
    }
    m1 = {}
    try:
        m1["k_inf"] = analysis.k_infinity_current(g.x1_ref, p0)
        ss = analysis.mode1_steady_state(g.x1_ref, p0)
        m1["steady_state"] = [ss.k_star, ss.x2_star, ss.x3_star]
    except InfeasibleError as exc:
        m1["error"] = str(exc)
    m1["default_box"] = _theorem1(spec.box, spec, p0)
    m1["operating_box"] = _theorem1(spec.box_mode1, spec, p0)
    rep["mode1"] = m1

    rows = []
    lam_min = math.inf
    for r_d in spec.roa.loads:
        p = spec.plant.with_load(r_d)
        for i_ol in spec.roa.currents:
            x2_ref = analysis.voltage_reference(i_ol, p)
            row = {"R_D": r_d, "I_OL": i_ol, "x2_ref": x2_ref,
                   "x2_ref_bound": analysis.x2_reference_bound(p)}
            row["x2_ref_ok"] = x2_ref < row["x2_ref_bound"]
            try:
                row["k_inf"] = analysis.k_infinity_voltage(x2_ref, p)
                c = analysis.theorem2_constants(x2_ref, g.gamma2, p, spec.box_mode2, g.K_max)
            except InfeasibleError as exc:
                row["error"] = str(exc)
                rows.append(row)
                continue
            row.update({k: getattr(c, k) for k in (
                "DeltaE", "regime", "regime_threshold", "hypothesis_ok", "gamma2_hat",
                "gamma_c1", "gamma_plus", "gamma2_bound", "gamma2_reaching_bound",
                "a0", "a10", "a11", "a20", "a21", "a3", "p_roots", "valid", "failed")})
            A = analysis.mode2_dynamic_matrix(c.steady.k_star, x2_ref, c.steady.x3_star, g.gamma2, p)
            eig = analysis.cubic_roots(analysis.mode2_char_poly(c))
            row["eigenvalues"] = eig
            row["hurwitz"] = analysis.routh_hurwitz_cubic(analysis.mode2_char_poly(c))
            row["spectral_abscissa"] = float(np.max(np.linalg.eigvals(A).real))
            lam_min = min(lam_min, -row["spectral_abscissa"])
            row["reaching"] = _mode2_reaching(spec.box_mode2, spec, p, i_ol)
            rows.append(row)
    rep["mode2"] = rows
    # time for the slowest linear mode to decay to 10 %
    rep["settling_90pct_estimate"] = math.log(10.0) / lam_min if lam_min > 0 else math.inf
    rep["dwell_configured"] = spec.supervisor.dwell
    rep["notes"] = [
        "a11 reads the unlabelled resistance in its L/R term as R_L (dimensional match)",
        "reaching bounds hold only while the state stays in the stated box",
    ]
    if roa_table is not None:
        rep["roa"] = [{"R_D": r, "I_OL": i, "c": e.level, "lambda_star": e.meta["lambda_star"],
                       "center": e.lyap.center} for (r, i), e in sorted(roa_table.items())]
    return _jsonable(rep)


def _write_roa(table, out: Path):
    roa.roa_table_csv(table, out / "roa_table.csv")
    for (r, i), e in sorted(table.items()):
        if e.level > 0:
            roa.projection_csv(roa.project_roa(e, ("x3", "k")), ("x3", "k"),
                               out / f"roa_x3_k_RD{r:g}_IOL{i:g}.csv")


def _cmd_run(spec, out: Path):
    table = scenario_roa_table(spec)
    res = run_scenario(spec, table)
    res.trace.to_csv(out / "trace.csv")
    res.trace.events_to_csv(out / "modes.csv")
    _write_roa(table, out)
    (out / "analysis.json").write_text(json.dumps(analyze_config(spec, table), indent=2) + "\n")
    for e in res.trace.events:
        print(f"t={e.t:.6f} {e.from_mode}->{e.to_mode} {e.reason} IOL={e.I_OL_active:g} {e.gate_verdict}")
    if res.breaches:
        raise SafetyBreach("; ".join(res.breaches))


def _cmd_analyze(spec, out: Path):
    rep = analyze_config(spec)
    text = json.dumps(rep, indent=2) + "\n"
    (out / "analysis.json").write_text(text)
    sys.stdout.write(text)


def _cmd_roa(spec, out: Path):
    table = scenario_roa_table(spec)
    _write_roa(table, out)
    sys.stdout.write(roa.roa_table_csv(table))


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="bbcu", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=("run", "analyze", "roa"))
    ap.add_argument("spec", help="scenario file or built-in name (scenario1, scenario2)")
    ap.add_argument("--out", help="output directory (default: [output] directory)")
    ap.add_argument("--seed", type=int, help="seed for ROA sampling")
    ap.add_argument("--stride", type=int, help="record every n-th control sample")
    args = ap.parse_args(argv)
    try:
        if args.stride is not None and args.stride < 1:
            raise ConfigError("--stride must be positive")
        spec = load_spec(args.spec).with_overrides(args.seed, args.stride, args.out)
        out = Path(spec.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        {"run": _cmd_run, "analyze": _cmd_analyze, "roa": _cmd_roa}[args.command](spec, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except SafetyBreach as exc:
        print(f"safety check failed: {exc}", file=sys.stderr)
        return EXIT_BREACH
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
