"""Command-line entry point: ``run``, ``sweep`` and ``verify``.

Exit codes: 0 when every enabled verdict passes, 2 when a verdict fails,
1 on configuration, solver or I/O errors.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import itertools
import json
import logging
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import assumptions as asm
from .analysis import WindowTooShort, fit_decay, predicted_exponent
from .config import RunConfig, from_dict, parse_config, with_overrides
from .energy import balance_residual, check_monotone, cumulative_dissipation
from .lyapunov import (LyapunovParams, TuningError, check_g_monotone, equivalence_bounds,
                       functional_series, tune_mu)
from .model import ConfigError, Grid, State, initial_state
from .solver import NonConvergence, oracle_run, run_simulation, step_jacobian, step_residual

log = logging.getLogger("dnlab")

EXIT_OK, EXIT_ERROR, EXIT_VERDICT = 0, 1, 2
CSV_HEADER = ("t", "E", "kinetic", "potential", "dissipation_cum", "balance_residual",
              "H_over_lambda", "G_over_lambda", "cross_term", "F_diff", "newton_iters")
BALANCE_RTOL = 1e-8
ORACLE_RTOL = 1e-3
JACOBIAN_RTOL = 1e-6
SWEEP_CAP = 1000
SOLVER_ERRORS = (NonConvergence, FloatingPointError, np.linalg.LinAlgError)


def _fmt(x) -> str:
    return f"{float(x):.17g}"


def jsonable(obj):
    """Recursively convert to plain JSON types; NaN becomes null, infinities strings."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return None
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x + 0.0
    return obj


def dump_json(obj) -> str:
    return json.dumps(jsonable(obj), sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def trajectory_csv(traj, series) -> str:
    cum = cumulative_dissipation(traj)
    _, bal = balance_residual(traj)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    cols = (traj.t, traj.energy, traj.kinetic, traj.potential, cum, bal,
            series["H_over_lambda"], series["G_over_lambda"], traj.cross, series["F_diff"])
    for k in range(len(traj)):
        writer.writerow([_fmt(c[k]) for c in cols] + [int(traj.newton_iters[k])])
    return buf.getvalue()


def _lyapunov_block(cfg: RunConfig, traj, weights):
    ly, ex = cfg.lyapunov, cfg.spec.exponents
    base = LyapunovParams.from_exponents(ex, ly.mu if ly.mu is not None else 1e-2, ly.nu, ly.c4)
    if ly.auto_tune:
        try:
            tuned = tune_mu(traj, base, weights)
        except TuningError as exc:
            return {"passed": False, "error": str(exc)}, base
        params, eq, mono, tried = tuned.params, tuned.equivalence, tuned.monotone, tuned.tried
    else:
        params = base
        eq = equivalence_bounds(traj, params, weights)
        mono = check_g_monotone(traj, params, weights)
        tried = []
    block = {"mu": params.mu, "nu": params.nu, "auto_tuned": ly.auto_tune,
             "k1_emp": eq.k1_emp, "k2_emp": eq.k2_emp, "equivalence": eq.to_dict(),
             "g_monotone": mono.to_dict(), "violations": len(mono.violations) + eq.violations,
             "tried": tried, "passed": bool(eq.passed and mono.passed)}
    return block, params


def _decay_block(cfg: RunConfig, traj, weights):
    kw = {"window_fraction": cfg.analysis.window_fraction}
    if cfg.spec.exponents.m > cfg.spec.exponents.ell:
        kw["slope_tolerance"] = cfg.analysis.slope_tolerance
    try:
        fit = fit_decay(traj, weights, **kw)
    except WindowTooShort as exc:
        return {"status": asm.SKIPPED, "note": str(exc)}
    out = fit.to_dict()
    out["status"] = asm.PASS if fit.passed else asm.FAIL
    return out


def execute_run(cfg: RunConfig):
    """Full pipeline for one configuration; returns ``(summary, csv_text)``.

    Raises the solver's exceptions unchanged so callers can map them to exit 1.
    """
    spec = cfg.spec
    start = time.perf_counter()
    traj = run_simulation(spec)
    report, weights = asm.verify_assumptions(spec, cfg.sample_count, cfg.seed, cfg.rho_conj,
                                             horizon=max(spec.t_end, 1.0))
    lyap, params = _lyapunov_block(cfg, traj, weights)
    series = functional_series(traj, params, weights)
    decay = _decay_block(cfg, traj, weights)
    mono = check_monotone(traj)
    e0 = float(traj.energy[0])
    bal_max, _ = balance_residual(traj)
    bal_ok = bal_max <= BALANCE_RTOL * max(e0, np.finfo(float).tiny)
    verdicts = {
        "energy_monotone": asm.PASS if mono.passed else asm.FAIL,
        "energy_balance": asm.PASS if bal_ok else asm.FAIL,
        "assumptions": asm.PASS if report.passed else asm.FAIL,
        "lyapunov": asm.PASS if lyap["passed"] else asm.FAIL,
        "decay_fit": decay["status"],
    }
    summary = {
        "config": cfg.raw,
        "config_hash": cfg.config_hash,
        "energy": {"head": traj.energy[:5].tolist(), "tail": traj.energy[-5:].tolist(),
                   "initial": e0, "final": float(traj.energy[-1]),
                   "monotonicity": mono.to_dict(), "balance_residual_max": bal_max,
                   "balance_residual_rel": bal_max / e0 if e0 > 0 else 0.0},
        "decay_fit": decay,
        "assumptions": report.to_dict(),
        "lyapunov": lyap,
        "solver": {"status": traj.status, "steps": len(traj) - 1,
                   "total_newton_iters": int(traj.newton_iters.sum()),
                   "retries": traj.retries, "t_final": float(traj.t[-1])},
        "verdicts": verdicts,
        "passed": all(v != asm.FAIL for v in verdicts.values()),
        "wall_time": time.perf_counter() - start,
    }
    return summary, trajectory_csv(traj, series)


def _prepare_out(out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    probe = out / ".write_probe"
    probe.write_text("")
    probe.unlink()


def _load(args) -> RunConfig:
    cfg = parse_config(args.config)
    if args.seed is not None:
        cfg = with_overrides(cfg, seed=args.seed)
    return cfg


def cmd_run(args) -> int:
    cfg = _load(args)
    out = Path(args.out)
    _prepare_out(out)
    summary, text = execute_run(cfg)
    (out / cfg.csv).write_text(text, encoding="utf-8")
    (out / cfg.summary).write_text(dump_json(summary), encoding="utf-8")
    for name, status in sorted(summary["verdicts"].items()):
        log.info("%-16s %s", name, status)
    return EXIT_OK if summary["passed"] else EXIT_VERDICT


def _axis(text, default):
    if text is None:
        return [default]
    return [float(x) for x in text.split(",") if x.strip()]


def sweep_grid(cfg: RunConfig, ell=None, m=None, q=None, b0=None):
    ex = cfg.spec.exponents
    axes = [_axis(ell, ex.ell), _axis(m, ex.m), _axis(q, ex.q), _axis(b0, cfg.spec.damping.b0)]
    size = math.prod(len(a) for a in axes)
    if size > SWEEP_CAP:
        raise ConfigError(f"sweep grid has {size} combinations (cap {SWEEP_CAP})")
    return list(itertools.product(*axes))


def _sweep_one(job):
    idx, raw, combo, out = job
    ell, m, q, b0 = combo
    row = {"ell": ell, "m": m, "q": q, "b0": b0, "predicted_exponent": float("nan"),
           "fitted_slope": float("nan"), "verdict": "ERROR"}
    try:
        row["predicted_exponent"] = predicted_exponent(ell, m)
    except ValueError:
        pass
    combo_dir = Path(out) / f"combo_{idx:04d}"
    try:
        base = from_dict(raw)
        cfg = with_overrides(base, **{"exponents.ell": ell, "exponents.m": m, "exponents.q": q,
                                      "damping.b0": b0})
        summary, text = execute_run(cfg)
    except (ConfigError, *SOLVER_ERRORS, ValueError) as exc:
        combo_dir.mkdir(parents=True, exist_ok=True)
        (combo_dir / "summary.json").write_text(dump_json({"combo": row, "error": str(exc)}),
                                                encoding="utf-8")
        row["error"] = str(exc)
        return row
    combo_dir.mkdir(parents=True, exist_ok=True)
    (combo_dir / cfg.csv).write_text(text, encoding="utf-8")
    (combo_dir / cfg.summary).write_text(dump_json(summary), encoding="utf-8")
    row["fitted_slope"] = summary["decay_fit"].get("fitted_slope", float("nan"))
    row["verdict"] = asm.PASS if summary["passed"] else asm.FAIL
    return row


def write_rates(rows, path: Path) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["ell", "m", "q", "b0", "predicted_exponent", "fitted_slope", "verdict"])
    for r in rows:
        writer.writerow([_fmt(r["ell"]), _fmt(r["m"]), _fmt(r["q"]), _fmt(r["b0"]),
                         _fmt(r["predicted_exponent"]),
                         _fmt(r["fitted_slope"]) if r["fitted_slope"] is not None else "nan",
                         r["verdict"]])
    path.write_text(buf.getvalue(), encoding="utf-8")


def cmd_sweep(args) -> int:
    cfg = _load(args)
    combos = sweep_grid(cfg, args.ell, args.m, args.q, args.b0)
    if not combos:
        log.info("empty sweep grid, nothing to do")
        return EXIT_OK
    out = Path(args.out)
    _prepare_out(out)
    jobs = [(i, cfg.raw, c, str(out)) for i, c in enumerate(combos)]
    workers = max(1, int(args.workers or 1))
    if workers == 1:
        rows = [_sweep_one(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_one, jobs))
    write_rates(rows, out / "rates.csv")
    for r in rows:
        if "error" in r:
            log.warning("combo ell=%g m=%g q=%g b0=%g failed: %s",
                        r["ell"], r["m"], r["q"], r["b0"], r["error"])
    return EXIT_OK if all(r["verdict"] == asm.PASS for r in rows) else EXIT_VERDICT


def jacobian_check(cfg: RunConfig, n: int = 16, seed: int = 0) -> asm.Check:
    """Central finite differences of the step residual against the analytic Jacobian."""
    spec = dataclasses.replace(cfg.spec, grid=Grid(n, cfg.spec.grid.length))
    rng = np.random.default_rng(seed)
    s0 = initial_state(spec)
    state = State(0.0, s0.u + 0.1 * rng.standard_normal(n), 0.5 * rng.standard_normal(n))
    w = state.w + 0.1 * rng.standard_normal(n)
    dt = spec.dt
    jac = step_jacobian(w, state, dt, spec)
    fd = np.empty_like(jac)
    step = 1e-6
    for i in range(n):
        e = np.zeros(n)
        e[i] = step
        fd[:, i] = (step_residual(w + e, state, dt, spec)
                    - step_residual(w - e, state, dt, spec)) / (2 * step)
    err = float(np.max(np.abs(fd - jac)) / max(np.max(np.abs(jac)), 1e-300))
    ok = err <= JACOBIAN_RTOL
    return asm.Check(asm.PASS if ok else asm.FAIL, {"relative_error": err, "n": n})


def oracle_check(cfg: RunConfig, dt: float = 1e-4) -> asm.Check:
    """Backward Euler against the refined explicit oracle on a small instance."""
    spec = dataclasses.replace(cfg.spec, grid=Grid(32, cfg.spec.grid.length), t_end=1.0, dt=dt)
    imp = run_simulation(spec)
    orc = oracle_run(spec, refinement=100)
    k = min(len(imp), len(orc))
    e0 = float(orc.energy[0])
    err = float(np.max(np.abs(imp.energy[:k] - orc.energy[:k])))
    rel = err / e0 if e0 > 0 else err
    ok = rel <= ORACLE_RTOL
    return asm.Check(asm.PASS if ok else asm.FAIL,
                     {"max_energy_gap_rel": rel, "n": 32, "t_end": 1.0, "dt": dt,
                      "refinement": 100})


def execute_verify(cfg: RunConfig):
    spec = cfg.spec
    start = time.perf_counter()
    warnings = []
    ex = spec.exponents
    if spec.eps_reg == 0.0 and (ex.ell != 2.0 or ex.m < 2.0 or ex.q < 2.0):
        warnings.append("eps_reg = 0 with non-quadratic exponents: the power maps are not "
                        "smooth at 0 and Newton may fail")
    report, weights = asm.verify_assumptions(spec, cfg.sample_count, cfg.seed, cfg.rho_conj,
                                             horizon=max(spec.t_end, 1.0))
    checks = dict(report.checks)
    checks["jacobian"] = jacobian_check(cfg, seed=cfg.seed)
    try:
        checks["oracle"] = oracle_check(cfg)
    except SOLVER_ERRORS as exc:
        if not warnings:
            raise
        checks["oracle"] = asm.Check(asm.FAIL, note=f"solver error: {exc}")
    passed = all(c.status != asm.FAIL for c in checks.values())
    summary = {
        "config": cfg.raw,
        "config_hash": cfg.config_hash,
        "checks": {k: v.to_dict() for k, v in sorted(checks.items())},
        "profiles": report.profiles,
        "sample_count": report.sample_count,
        "warnings": warnings,
        "verdicts": {k: v.status for k, v in sorted(checks.items())},
        "passed": passed,
        "wall_time": time.perf_counter() - start,
    }
    return summary


def cmd_verify(args) -> int:
    cfg = _load(args)
    out = Path(args.out)
    _prepare_out(out)
    summary = execute_verify(cfg)
    for w in summary["warnings"]:
        log.warning(w)
    (out / cfg.summary).write_text(dump_json(summary), encoding="utf-8")
    return EXIT_OK if summary["passed"] else EXIT_VERDICT


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dnlab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in (("run", "simulate, check assumptions, tune and fit"),
                           ("sweep", "run a cartesian grid over ell, m, q, b0"),
                           ("verify", "assumption checks plus solver self-tests")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", required=True, help="JSON configuration file")
        p.add_argument("--out", default=".", help="output directory (default: .)")
        p.add_argument("--workers", type=int, default=1, help="parallel sweep workers")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("-v", "--verbose", action="store_true")
        if name == "sweep":
            for axis in ("ell", "m", "q", "b0"):
                p.add_argument(f"--{axis}", default=None,
                               help=f"comma-separated {axis} values (default: config value)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    handler = {"run": cmd_run, "sweep": cmd_sweep, "verify": cmd_verify}[args.command]
    try:
        return handler(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
    except SOLVER_ERRORS as exc:
        print(f"solver error: {exc}", file=sys.stderr)
    except asm.DegenerateSampleError as exc:
        print(f"assumption sampling error: {exc}", file=sys.stderr)
    return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
