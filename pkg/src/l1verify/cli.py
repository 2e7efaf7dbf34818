"""Command-line front end.

    l1verify verify CONFIG
    l1verify sweep CONFIG --param T --from 2.2 --to 2.4 --count 21
    l1verify trace CONFIG
    l1verify bench [--alpha 1 --X 1 --T 2.3]

Exit status: 0 certified, 1 not certified, 2 configuration or computation
error.  Outputs go to ``--output-dir``, else ``$L1VERIFY_OUTPUT_DIR``, else
the working directory; ``[outputs]`` entries in the config name the files.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import synthetic, vehicle_bench  # noqa: F401  (registries)
from .config import RunConfig, load_config
from .errors import BranchInapplicable, ConfigError, StageError, VerificationError
from .extremal import integrate_reference_extremal
from .pipeline import CONDITIONS, verify

OUTPUT_ENV = "L1VERIFY_OUTPUT_DIR"
EXIT_CERTIFIED, EXIT_NOT_CERTIFIED, EXIT_ERROR = 0, 1, 2
DEFAULT_FILES = {"report": "report.json", "sweep": "sweep.csv", "extremal": "extremal.csv",
                 "switching": "switching.csv", "clarke": "clarke.csv",
                 "bench": "bench.json", "probe": "probe.csv"}
SWEEP_COLUMNS = (["value", "status"] + [f"{c}_margin" for c in CONDITIONS]
                 + ["clarke_margin", "clarke_best_margin", "verdict", "error"])


def output_dir(arg) -> Path:
    base = Path(arg) if arg else Path(os.environ.get(OUTPUT_ENV, "."))
    base.mkdir(parents=True, exist_ok=True)
    return base


def output_path(cfg: RunConfig | None, key: str, base: Path) -> Path:
    name = (cfg.outputs.get(key) if cfg is not None else None) or DEFAULT_FILES[key]
    path = Path(name)
    return path if path.is_absolute() else base / path


def _write_json(path: Path, data) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return "inf" if v == float("inf") else f"{v:.12g}"
    return str(v)


# -- verify ---------------------------------------------------------------------------

def resolve(cfg: RunConfig):
    """Problem and schedule; schedule failures are reported as the ``schedule`` stage."""
    problem = cfg.build_problem()
    try:
        schedule = cfg.resolve_schedule()
    except BranchInapplicable:
        raise
    except VerificationError as exc:
        raise StageError("schedule", exc) from exc
    return problem, schedule


def run_verify(cfg: RunConfig):
    problem, schedule = resolve(cfg)
    return verify(problem, schedule, cfg.options, config=cfg.echo())


def cmd_verify(args) -> int:
    cfg = load_config(args.config)
    report = run_verify(cfg)
    path = output_path(cfg, "report", output_dir(args.output_dir))
    _write_json(path, report.to_dict(include_timings=args.timings))
    print(report.verdict)
    print(f"report: {path}")
    return EXIT_CERTIFIED if report.certified else EXIT_NOT_CERTIFIED


# -- sweep ----------------------------------------------------------------------------

def sweep_row(cfg: RunConfig, param: str, value: float) -> dict:
    """One verification per value; failures become rows, never exceptions."""
    row = {k: None for k in SWEEP_COLUMNS}
    row["value"] = value
    try:
        report = run_verify(cfg.with_value(param, value))
    except BranchInapplicable as exc:
        row.update(status="branch-inapplicable", verdict="branch-inapplicable", error=str(exc))
        return row
    except StageError as exc:
        if isinstance(exc.cause, BranchInapplicable):
            row.update(status="branch-inapplicable", verdict="branch-inapplicable",
                       error=str(exc))
        else:
            row.update(status="error", verdict="error", error=str(exc))
        return row
    except (VerificationError, ValueError, ArithmeticError) as exc:
        row.update(status="error", verdict="error", error=f"{type(exc).__name__}: {exc}")
        return row
    for cid in CONDITIONS:
        a = report.condition(cid)
        if a is not None:
            row[f"{cid}_margin"] = float("inf") if a.get("margin_infinite") else a["margin"]
    if report.clarke is not None:
        row["clarke_margin"] = report.clarke["margin"]
        row["clarke_best_margin"] = report.clarke["best_margin"]
    row["status"] = "ok"
    row["verdict"] = "certified" if report.certified else "not-certified:" + "+".join(
        report.failing)
    return row


def sweep_values(start: float, stop: float, count: int) -> list:
    if count <= 0 or start > stop:
        return []
    return np.linspace(start, stop, count).tolist()


def run_sweep(cfg: RunConfig, param: str, values, jobs: int = 1) -> list:
    if param != "T" and param not in cfg.parameters:
        raise ConfigError(f"unknown sweep parameter {param!r}; use T or one of "
                          f"{sorted(cfg.parameters)}")
    if jobs > 1 and len(values) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(sweep_row, [cfg] * len(values), [param] * len(values), values))
    return [sweep_row(cfg, param, v) for v in values]


def write_sweep_csv(stream, rows, param: str) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow([param] + SWEEP_COLUMNS[1:])
    for row in rows:
        writer.writerow([_fmt(row[k]) for k in SWEEP_COLUMNS])


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    rows = run_sweep(cfg, args.param, sweep_values(args.start, args.stop, args.count), args.jobs)
    path = output_path(cfg, "sweep", output_dir(args.output_dir))
    with path.open("w") as fh:
        write_sweep_csv(fh, rows, args.param)
    bad = sum(r["verdict"] != "certified" for r in rows)
    print(f"{len(rows)} rows, {len(rows) - bad} certified; table: {path}")
    return EXIT_CERTIFIED if bad == 0 else EXIT_NOT_CERTIFIED


# -- trace ----------------------------------------------------------------------------

SWITCHING_COLUMNS = ["t", "arc", "tag", "u1F1_minus_abs_psi", "abs_psi_minus_abs_F1",
                     "u3F1_minus_abs_psi"]


def write_switching_csv(stream, path, samples_per_piece: int = 50, digits: int = 12) -> None:
    """The three maximality slacks along every piece (piece endpoints included)."""
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(SWITCHING_COLUMNS)
    T = path.schedule.T
    for piece in path.pieces:
        count = max(2, int(np.ceil(samples_per_piece * (piece.t1 - piece.t0) / T)) + 1)
        ts, zs = piece.trajectory.sample(count)
        n = path.n
        for t, z in zip(ts, zs):
            x, p = z[:n], z[n:]
            F1 = float(p @ path.problem.f1(x))
            apsi = abs(path.problem.psi(x))
            vals = (path.schedule.u1 * F1 - apsi, apsi - abs(F1), path.schedule.u3 * F1 - apsi)
            writer.writerow([f"{t:.{digits}g}", piece.family, piece.tag]
                            + [f"{v:.{digits}g}" for v in vals])


def write_clarke_csv(stream, clarke: dict, digits: int = 12) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(["a", "sigma_min_switch1", "sigma_min_switch2"])
    for a, s1, s2 in zip(clarke["grid"], clarke["switch1_curve"], clarke["switch2_curve"]):
        writer.writerow([f"{a:.{digits}g}", f"{s1:.{digits}g}", f"{s2:.{digits}g}"])


def cmd_trace(args) -> int:
    cfg = load_config(args.config)
    base = output_dir(args.output_dir)
    problem, schedule = resolve(cfg)
    try:
        path = integrate_reference_extremal(problem, schedule, rtol=cfg.options.rtol,
                                            atol=cfg.options.atol, strict=False)
    except VerificationError as exc:
        raise StageError("extremal", exc) from exc
    written = []
    target = output_path(cfg, "extremal", base)
    with target.open("w") as fh:
        path.write_csv(fh, args.samples, tag_column="tag")
    written.append(target)
    target = output_path(cfg, "switching", base)
    with target.open("w") as fh:
        write_switching_csv(fh, path, args.samples)
    written.append(target)
    report = verify(problem, schedule, cfg.options, config=cfg.echo())
    if report.clarke is not None:
        target = output_path(cfg, "clarke", base)
        with target.open("w") as fh:
            write_clarke_csv(fh, report.clarke)
        written.append(target)
    else:
        print(f"clarke curves skipped: {report.skipped.get('clarke', 'disabled')}")
    for w in written:
        print(f"wrote {w}")
    return EXIT_CERTIFIED if report.certified else EXIT_NOT_CERTIFIED


# -- bench ----------------------------------------------------------------------------

def run_bench(alpha: float, X: float, T: float | None, probe_count: int = 9,
              probe_radius: float = 1e-2) -> dict:
    if T is None:
        T = 0.5 * (vehicle_bench.t_min(alpha, X) + vehicle_bench.t_lim(alpha, X))
    inst = vehicle_bench.VehicleInstance(alpha, X, T)
    orc = vehicle_bench.oracle(inst)
    shot = vehicle_bench.shoot(inst)
    s = shot.schedule
    report = vehicle_bench.end_to_end_verify(inst)
    probe = vehicle_bench.perturbation_probe(inst, radius=probe_radius, count=probe_count)
    return {"instance": {"alpha": alpha, "X": X, "T": T}, "oracle": orc.to_dict(),
            "shooting": {"tau1": s.tau1, "tau2": s.tau2, "lambda0": list(s.lambda0),
                         "iterations": shot.iterations, "residual": shot.residual_norm,
                         "tau_error": max(abs(s.tau1 - orc.tau1), abs(s.tau2 - orc.tau2)),
                         "lambda_rel_error": max(abs(s.lambda0[0] - orc.p1) / abs(orc.p1),
                                                 abs(s.lambda0[1] - orc.p2_0) / abs(orc.p2_0))},
            "verification": report.to_dict(), "probe": probe}


def cmd_bench(args) -> int:
    base = output_dir(args.output_dir)
    out = run_bench(args.alpha, args.X, args.T, args.probe_count, args.probe_radius)
    probe = out.pop("probe")
    out["probe"] = {k: v for k, v in probe.to_dict().items() if k != "rows"}
    _write_json(base / DEFAULT_FILES["bench"], out)
    with (base / DEFAULT_FILES["probe"]).open("w") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["d1", "d2", "feasible", "cost", "difference", "terminal_gap", "reason"])
        for r in probe.rows:
            writer.writerow([_fmt(r["d1"]), _fmt(r["d2"]), int(r["feasible"]),
                             _fmt(r.get("cost")), _fmt(r.get("difference")),
                             _fmt(r.get("terminal_gap")), r.get("reason", "")])
    v = out["verification"]
    print(f"T={out['instance']['T']:.10g}  {v['verdict']}")
    print(f"shooting: tau error {out['shooting']['tau_error']:.2e}, "
          f"lambda rel error {out['shooting']['lambda_rel_error']:.2e}")
    print(f"probe: min difference {probe.min_difference:.3e}, "
          f"quadratic coefficient {probe.quadratic_coefficient:.4g}")
    print(f"wrote {base / DEFAULT_FILES['bench']} and {base / DEFAULT_FILES['probe']}")
    return EXIT_CERTIFIED if v["certified"] and probe.passed else EXIT_NOT_CERTIFIED


# -- entry point ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="l1verify", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--output-dir", default=None,
                       help=f"output directory (default ${OUTPUT_ENV} or cwd)")

    p = sub.add_parser("verify", help="verify one candidate and write a JSON report")
    p.add_argument("config")
    p.add_argument("--timings", action="store_true", help="include stage timings in the report")
    common(p)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("sweep", help="verify over a range of one parameter, CSV table")
    p.add_argument("config")
    p.add_argument("--param", required=True)
    p.add_argument("--from", dest="start", type=float, required=True)
    p.add_argument("--to", dest="stop", type=float, required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--jobs", type=int, default=1, help="worker processes for the rows")
    common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("trace", help="dump extremal, switching functions and Clarke curves")
    p.add_argument("config")
    p.add_argument("--samples", type=int, default=200, help="samples per unit of horizon")
    common(p)
    p.set_defaults(func=cmd_trace)

    p = sub.add_parser("bench", help="vehicle benchmark: oracle, shooting, verification, probe")
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--X", type=float, default=1.0)
    p.add_argument("--T", type=float, default=None, help="default: middle of (T_min, T_lim)")
    p.add_argument("--probe-count", type=int, default=9)
    p.add_argument("--probe-radius", type=float, default=1e-2)
    common(p)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
    except VerificationError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
    except (ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
    return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
