"""Command-line front end: ``ganirl {verify, train, gradcheck}``.

Exit codes: 0 success, 1 a check failed or training diverged, 2 usage or
configuration error. Every output file except the runtime fields of
summary.json is a pure function of (arguments, config, seed).
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import re
import sys
import time

import numpy as np

from . import equivalence, gradcheck
from .config import ConfigFileError, build_ebm_config, build_train_config, load_config
from .ebm import EBM_METRIC_COLUMNS, mode_seeking_experiment, train_ebm_gan, train_ebm_ml
from .gan import train_gan_irl
from .gcl import train_gcl, train_maxent_exact
from .mdp import ConfigError
from .training import METRIC_COLUMNS, SCHEMA_VERSION

TRAIN_KINDS = ("gan-irl", "gcl", "maxent-exact", "ebm-gan", "ebm-ml", "mode-seeking")
EBM_KINDS = ("ebm-gan", "ebm-ml", "mode-seeking")
DEFAULT_OUT = "ganirl-out"


class UsageError(Exception):
    pass


# -- output helpers ---------------------------------------------------------


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, (np.floating, float)):
        v = float(value)
        return v if np.isfinite(v) else str(v)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, np.bool_):
        return bool(value)
    return value


def write_json(path: str, payload) -> None:
    with open(path, "w") as fh:
        json.dump(_jsonable(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_metrics(path: str, rows: list[dict], columns) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("schema_version",) + tuple(columns))
        for row in rows:
            writer.writerow([SCHEMA_VERSION] + [repr(row[c]) if isinstance(row[c], float) else row[c] for c in columns])


def write_theta(path: str, trace: list[np.ndarray]) -> None:
    width = len(trace[0]) if trace else 0
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["iteration"] + [f"theta_{i}" for i in range(width)])
        for it, theta in enumerate(trace):
            writer.writerow([it] + [repr(float(v)) for v in theta])


def read_theta(path: str) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return np.array([[float(v) for v in row[1:]] for row in rows[1:]])


def compare_reference(out_theta: str, reference_dir: str) -> dict:
    ref_path = os.path.join(reference_dir, "theta.csv")
    if not os.path.exists(ref_path):
        raise UsageError(f"reference run has no theta.csv: {ref_path}")
    mine, ref = read_theta(out_theta), read_theta(ref_path)
    n = min(len(mine), len(ref))
    if n == 0 or mine.shape[1:] != ref.shape[1:]:
        return {"dir": reference_dir, "iterations_compared": 0, "max_theta_divergence": None, "same_length": False}
    per_iter = np.max(np.abs(mine[:n] - ref[:n]), axis=1)
    return {
        "dir": reference_dir,
        "iterations_compared": int(n),
        "same_length": len(mine) == len(ref),
        "max_theta_divergence": float(per_iter.max()),
        "worst_iteration": int(per_iter.argmax()),
    }


# -- commands --------------------------------------------------------------


def _parse_worlds(text: str):
    worlds = []
    for part in text.split(","):
        m = re.fullmatch(r"\s*(\d+)x(\d+):(\d+)\s*", part)
        if not m:
            raise UsageError(f"bad world {part!r}; expected WIDTHxHEIGHT:HORIZON, e.g. 3x3:5")
        worlds.append(tuple(int(g) for g in m.groups()))
    return tuple(worlds)


def cmd_verify(args) -> int:
    t0 = time.perf_counter()
    worlds = _parse_worlds(args.worlds)
    tolerances = {}
    if args.tol is not None:
        tolerances = {1: args.tol, 2: args.tol, 3: args.tol}
    for fact in (1, 2, 3):
        override = getattr(args, f"tol_fact{fact}")
        if override is not None:
            tolerances[fact] = override
    seed0 = args.seed or 0
    reports = equivalence.sweep(args.seeds, worlds, equivalence.REGIMES, args.samples, tolerances,
                                args.perturb_bias, first_seed=seed0)
    if args.include_ebm:
        reports += equivalence.ebm_sweep(args.seeds, args.samples, tolerances)
    controls = equivalence.negative_controls(seed0, worlds, args.samples)

    failed = [r for r in reports if not r.passed]
    controls_ok = not any(r.passed for r in controls)
    ok = not failed and controls_ok
    os.makedirs(args.out, exist_ok=True)
    write_json(os.path.join(args.out, "residuals.json"), {
        "schema_version": SCHEMA_VERSION,
        "reports": [r.to_dict() for r in reports],
        "negative_controls": [r.to_dict() for r in controls],
    })
    by_fact = {
        str(f): {
            g: max((r.residual for r in reports if r.fact == f and r.regime == g), default=None)
            for g in equivalence.REGIMES
        }
        for f in (1, 2, 3)
    }
    write_json(os.path.join(args.out, "summary.json"), {
        "schema_version": SCHEMA_VERSION,
        "command": "verify",
        "seeds": args.seeds,
        "seed": seed0,
        "worlds": args.worlds,
        "perturb_bias": args.perturb_bias,
        "n_reports": len(reports),
        "n_failed": len(failed),
        "max_residual": by_fact,
        "negative_controls_failed_as_expected": controls_ok,
        "pass": ok,
        "residuals_file": os.path.join(args.out, "residuals.json"),
        "runtime_seconds": time.perf_counter() - t0,
    })
    print(f"verify: {len(reports) - len(failed)}/{len(reports)} reports pass; "
          f"negative controls {'fail as expected' if controls_ok else 'UNEXPECTEDLY PASS'}")
    for r in failed[:10]:
        print(f"  FAIL fact {r.fact} {r.regime} {r.context.get('world')} seed {r.context.get('seed')}: "
              f"residual {r.residual:.3e} > {r.tolerance:.1e}")
    return 0 if ok else 1


def _run_training(kind: str, run):
    """(report, metric columns, extra summary fields, extra metric files)."""
    if kind in EBM_KINDS:
        cfg = build_ebm_config(run)
        if kind == "ebm-gan":
            return train_ebm_gan(cfg), EBM_METRIC_COLUMNS, {}, {}
        if kind == "ebm-ml":
            return train_ebm_ml(cfg), EBM_METRIC_COLUMNS, {}, {}
        result = mode_seeking_experiment(cfg)
        ml = result.reports["ml"]
        return result.reports["adversarial"], EBM_METRIC_COLUMNS, result.summary(), {"metrics_ml.csv": ml.rows}
    cfg = build_train_config(run)
    trainer = {"gan-irl": train_gan_irl, "gcl": train_gcl, "maxent-exact": train_maxent_exact}[kind]
    report = trainer(cfg)
    extra = {}
    if kind != "maxent-exact":
        extra["oracle_final_kl"] = train_maxent_exact(cfg).final_kl
    return report, METRIC_COLUMNS, extra, {}


def cmd_train(args) -> int:
    t0 = time.perf_counter()
    run = load_config(args.config, seed=args.seed)
    expected = "ebm" if args.kind in EBM_KINDS else "trajectory"
    if run.family != expected:
        need = "[ebm]" if expected == "ebm" else "[world]/[cost]/[train]"
        raise ConfigFileError(args.config, None, f"train {args.kind} needs a config with {need} sections")
    report, columns, extra, extra_metrics = _run_training(args.kind, run)

    os.makedirs(args.out, exist_ok=True)
    metrics_path = os.path.join(args.out, "metrics.csv")
    theta_path = os.path.join(args.out, "theta.csv")
    write_metrics(metrics_path, report.rows, columns)
    for name, rows in extra_metrics.items():
        write_metrics(os.path.join(args.out, name), rows, columns)
    write_theta(theta_path, report.theta_trace)
    with open(os.path.join(args.out, "config.cfg"), "w") as fh:
        fh.write(run.echo())

    last = report.rows[-1] if report.rows else {}
    summary = {
        "schema_version": SCHEMA_VERSION,
        "command": "train",
        "kind": args.kind,
        "config": run.echo(),
        "config_values": run.values,
        "config_hash": run.content_hash(),
        "config_source": args.config,
        "seed": run.seed,
        "metrics_file": metrics_path,
        "theta_file": theta_path,
        "iterations_completed": len(report.rows),
        "final_kl": report.final_kl,
        "final_disc_loss": last.get("disc_loss"),
        "final_gen_loss": last.get("gen_loss"),
        "final_log_z": last.get("log_z"),
        "final_params": report.final_params,
        "final_b": report.final_b,
        "converged": report.converged,
        "diverged": report.diverged,
        "error": report.error,
        **{k: v for k, v in report.extra.items() if k != "generator_probs"},
        **extra,
        "runtime_seconds": time.perf_counter() - t0,
    }
    if args.reference:
        summary["reference"] = compare_reference(theta_path, args.reference)
    write_json(os.path.join(args.out, "summary.json"), summary)
    print(f"train {args.kind}: {len(report.rows)} iterations, final KL {report.final_kl:.3e}"
          + (f", ERROR {report.error}" if report.error else ""))
    if "reference" in summary and summary["reference"]["max_theta_divergence"] is not None:
        print(f"  max theta divergence vs {args.reference}: {summary['reference']['max_theta_divergence']:.3e}")
    return 1 if report.diverged else 0


def cmd_gradcheck(args) -> int:
    tol = gradcheck.DEFAULT_TOL if args.tol is None else args.tol
    if args.family != "all" and args.family not in gradcheck.FAMILIES:
        raise UsageError(f"unknown gradient family {args.family!r}; choose from all, {', '.join(gradcheck.FAMILIES)}")
    results = gradcheck.run_gradcheck(args.family, args.trials, args.h, tol, args.seed or 0)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.family:15s} worst rel err {r.worst:.2e} (trial {r.worst_trial}) h={r.h:g}")
    failed = [r for r in results if not r.passed]
    if failed:
        worst = max(failed, key=lambda r: r.worst)
        print(f"worst offender: {worst.family} trial {worst.worst_trial}, inputs {worst.worst_inputs}")
        if args.h < 1e-8:
            print(f"note: h={args.h:g} is below the rounding floor; central differences lose precision")
    os.makedirs(args.out, exist_ok=True)
    write_json(os.path.join(args.out, "gradcheck.json"), {
        "schema_version": SCHEMA_VERSION,
        "h": args.h,
        "tol": tol,
        "results": [r.to_dict() for r in results],
        "pass": not failed,
    })
    return 0 if not failed else 1


# -- argument parsing --------------------------------------------------------


def _add_globals(parser, suppress: bool) -> None:
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--seed", type=int, default=default, help="base seed (overrides the config file)")
    parser.add_argument("--out", default=argparse.SUPPRESS if suppress else DEFAULT_OUT, help="output directory")
    parser.add_argument("--tol", type=float, default=default, help="tolerance override")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ganirl", description="GAN / MaxEnt IRL / EBM equivalence toolkit")
    _add_globals(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    verify = sub.add_parser("verify", help="randomized equivalence sweep")
    _add_globals(verify, suppress=True)
    verify.add_argument("--seeds", type=int, default=50, help="seeds per world and regime")
    verify.add_argument("--samples", type=int, default=200, help="demo and generator batch size (empirical regime)")
    verify.add_argument("--worlds", default="2x2:3,3x3:5", help="comma-separated WIDTHxHEIGHT:HORIZON")
    verify.add_argument("--perturb-bias", type=float, default=0.0, help="offset the fact-2 bias (negative control)")
    verify.add_argument("--include-ebm", action="store_true", help="also run the 64-point energy domain")
    for fact in (1, 2, 3):
        verify.add_argument(f"--tol-fact{fact}", type=float, default=None)

    train = sub.add_parser("train", help="run one training configuration")
    _add_globals(train, suppress=True)
    train.add_argument("kind", choices=TRAIN_KINDS)
    train.add_argument("--config", required=True, help="INI config file")
    train.add_argument("--reference", help="directory of another run to compare theta iterates against")

    grad = sub.add_parser("gradcheck", help="finite-difference gradient checks")
    _add_globals(grad, suppress=True)
    grad.add_argument("--family", default="all", help=f"all or one of: {', '.join(gradcheck.FAMILIES)}")
    grad.add_argument("--trials", type=int, default=gradcheck.DEFAULT_TRIALS)
    grad.add_argument("--h", type=float, default=gradcheck.DEFAULT_H)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "seeds", 1) < 1 or getattr(args, "samples", 1) < 1 or getattr(args, "trials", 1) < 1:
        parser.error("counts must be positive")
    handlers = {"verify": cmd_verify, "train": cmd_train, "gradcheck": cmd_gradcheck}
    try:
        return handlers[args.command](args)
    except (UsageError, ConfigError) as exc:
        print(f"ganirl: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"ganirl: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
