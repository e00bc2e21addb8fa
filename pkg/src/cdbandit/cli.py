"""Command-line front end.

Subcommands: ``run``, ``detect-eval``, ``constants``, ``fit``,
``trace-validate``.  Exit codes: 0 success, 1 invalid input, 2 I/O failure.
Machine-readable results are ``key=value`` lines with shortest round-trip
float formatting.
"""
from __future__ import annotations

import argparse
import math
import sys
import warnings
from pathlib import Path

import numpy as np

from .bench import compare, run_experiment
from .bounds import (
    BoundBranchError,
    LambdaUndefinedError,
    c1_constant,
    log_c1_constant,
    c2_constant,
    compute_mgf_roots,
    prop1_bounds,
    theorem3_bounds,
    tuned_params,
)
from .config import PRESETS, build_environment, format_value, parse_config
from .detect import DetectorParams, estimate_detection_metrics
from .env import TraceFormatError, count_breakpoints, from_segments, load_trace, summarize
from .factory import ConfigError
from .fit import fit_power_law

__all__ = ["main", "build_parser"]

EXIT_OK, EXIT_INVALID, EXIT_IO = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    # bad flags are validation errors
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _kv(out, key, value):
    out.write(f"{key}={'' if value is None else format_value(value)}\n")


def _warn(msg):
    print(f"warning: {msg}", file=sys.stderr)


# --------------------------------------------------------------------- run


def _provenance(cfg) -> str:
    # worker count and output location do not change results, so they stay
    # out of the file headers to keep outputs byte-identical
    keep = {k: v for k, v in cfg.experiment.items() if k not in ("workers", "output")}
    saved, cfg.experiment = cfg.experiment, keep
    try:
        return cfg.to_ini()
    finally:
        cfg.experiment = saved


def _write_trace(path: Path, trace, header: str):
    rows = [f"{t},{format_value(m)},{format_value(s)}"
            for t, m, s in zip(range(1, trace.T + 1), trace.mean.tolist(), trace.se.tolist())]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(header)
        fh.write("t,mean_regret,se\n")
        fh.write("\n".join(rows))
        fh.write("\n")


def _summary_lines(cfg, traces, table) -> list[str]:
    lines = [f"T={cfg.T}", f"trials={cfg.trials}", f"seed={cfg.seed}",
             f"policies={','.join(p['name'] for p in cfg.policies)}"]
    for row in table.rows:
        tr = traces[row.name]
        pre = f"policy.{row.name}."
        f = row.fit
        lines += [
            f"{pre}final_mean={format_value(row.final_mean)}",
            f"{pre}final_se={format_value(row.final_se)}",
            f"{pre}fit_a={format_value(f.a)}",
            f"{pre}fit_b={format_value(f.b)}",
            f"{pre}fit_c={format_value(f.c)}",
            f"{pre}fit_residual_norm={format_value(f.residual_norm)}",
            f"{pre}fit_converged={format_value(f.converged)}",
            f"{pre}fit_degenerate={format_value(f.degenerate)}",
            f"{pre}mean_alarms={format_value(float(tr.alarms.mean()))}",
            f"{pre}mean_suboptimal_plays={format_value(tr.suboptimal_plays.mean(axis=0).tolist())}",
        ]
    for (a, b), v in table.ratios.items():
        lines.append(f"ratio.{a}/{b}={format_value(v)}")
    return lines


def cmd_run(args) -> int:
    cfg = parse_config(
        path=args.config,
        preset=args.preset,
        overrides={"T": args.T, "trials": args.trials, "seed": args.seed, "output": args.output,
                   "workers": args.workers, "gamma_T": args.gamma_T},
        env_overrides={"kind": args.env, "K": args.K, "delta": args.delta, "beta": args.beta,
                       "means": args.means, "path": args.trace},
        detector_overrides={"epsilon": args.epsilon, "M": args.M, "h": args.h, "alpha": args.alpha,
                            "xi": args.xi},
        policies=args.policy,
    )
    if args.dry_run:
        sys.stdout.write(cfg.to_ini())
        return EXIT_OK
    env, K, T, gamma_T = build_environment(cfg)
    out_dir = Path(cfg.output)
    out_dir.mkdir(parents=True, exist_ok=True)
    header = "# cdbandit run\n" + "".join(f"# {ln}\n" if ln else "#\n" for ln in _provenance(cfg).splitlines())
    traces = {}
    for spec in cfg.policies:
        tr = run_experiment(env, spec, cfg.trials, cfg.seed, name=spec["name"], workers=cfg.workers)
        traces[spec["name"]] = tr
        _write_trace(out_dir / f"trace_{spec['name']}.csv", tr, header)
    table = compare(traces)
    with open(out_dir / "summary.txt", "w", encoding="utf-8", newline="\n") as fh:
        fh.write(header)
        fh.write("\n".join(_summary_lines(cfg, traces, table)) + "\n")
    print(table.to_text())
    print(f"\nwrote {len(traces)} trace files and summary.txt to {out_dir}")
    return EXIT_OK


# ------------------------------------------------------------- detect-eval


def _detector_defaults(args):
    det = dict(PRESETS[args.preset]["detector"]) if args.preset else {"epsilon": 0.1, "M": 100, "h": 50.0}
    for k in ("epsilon", "M", "h"):
        v = getattr(args, k)
        if v is not None:
            det[k] = v
    return det


def cmd_detect_eval(args) -> int:
    det = _detector_defaults(args)
    problems = []
    if args.T < 2:
        problems.append(f"--T must be >= 2, got {args.T}")
    if args.fa_T < 1:
        problems.append(f"--fa-T must be >= 1, got {args.fa_T}")
    if args.trials < 1:
        problems.append(f"--trials must be >= 1, got {args.trials}")
    for name in ("pre", "post"):
        if not 0 <= getattr(args, name) <= 1:
            problems.append(f"--{name} must lie in [0, 1]")
    try:
        params = DetectorParams(float(det["epsilon"]), int(det["M"]), float(det["h"]))
    except ValueError as exc:
        problems.append(str(exc))
    change = args.change if args.change is not None else args.T // 2 + 1
    if not 1 <= change <= args.T:
        problems.append(f"--change must lie in 1..{args.T}")
    if problems:
        raise ConfigError(problems)

    out = sys.stdout
    eps, M, h = params.epsilon, params.M, params.h
    for k, v in (("detector", args.detector), ("epsilon", eps), ("M", M), ("h", h), ("pre_mean", args.pre),
                 ("post_mean", args.post), ("change_slot", change), ("T", args.T), ("fa_T", args.fa_T),
                 ("trials", args.trials), ("seed", args.seed)):
        _kv(out, k, v)

    dm = estimate_detection_metrics(args.detector, params, args.pre, args.post, change, args.T, args.trials,
                                    args.seed)
    fm = estimate_detection_metrics(args.detector, params, args.pre, args.pre, None, args.fa_T, args.trials,
                                    args.seed + 1)
    _kv(out, "empirical_mean_delay", dm.mean_delay)
    _kv(out, "empirical_mean_delay_detected", dm.mean_delay_detected)
    _kv(out, "empirical_misses", dm.misses)
    _kv(out, "empirical_false_alarms_before_change", dm.false_alarms)
    _kv(out, "empirical_false_alarms", fm.false_alarms)

    # per-stream bounds evaluated at the exact pre-change estimate
    p1_delay = p1_fa = None
    try:
        pb = prop1_bounds(args.pre, args.pre, args.post, eps, h, args.fa_T)
        p1_delay, p1_fa = pb.delay_bound, pb.false_alarm_bound
    except (ValueError, ArithmeticError) as exc:
        _warn(f"per-stream bounds unavailable: {exc}")
    _kv(out, "prop1_delay_bound", p1_delay)
    _kv(out, "prop1_false_alarm_bound", p1_fa)

    C1, _, _ = c1_constant(eps, M)
    _, fa_bound = theorem3_bounds(eps, M, h, args.fa_T)
    _kv(out, "theorem3_C1", C1)
    _kv(out, "theorem3_false_alarm_bound", fa_bound)

    lam = args.lam
    if lam is None:
        segs = [(1, [args.pre])] + ([(change, [args.post])] if args.post != args.pre and change > 1 else [])
        lam = summarize(from_segments(1, args.T, segs), eps, M).lam
    C2 = delay_bound = th = None
    if lam is None:
        _kv(out, "lambda", "undefined")
        _warn("lambda undefined (every mean +/- epsilon lies on the 1/M grid); lambda-dependent columns left blank")
    else:
        _kv(out, "lambda", lam)
        try:
            C2 = c2_constant(eps, M, lam)
            delay_bound, _ = theorem3_bounds(eps, M, h, args.fa_T, lam)
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always")
                th = tuned_params(args.fa_T, args.gamma_T, args.K, C1, C2)
            for w in caught:
                _warn(str(w.message))
        except (ValueError, LambdaUndefinedError) as exc:
            _warn(str(exc))
    _kv(out, "theorem3_C2", C2)
    _kv(out, "theorem3_delay_bound", delay_bound)
    _kv(out, "tuned_h", th.h if th else None)
    _kv(out, "tuned_alpha", th.alpha if th else None)
    _kv(out, "tuned_alpha_clamped", th.alpha_clamped if th else None)
    return EXIT_OK


# --------------------------------------------------------------- constants


def cmd_constants(args) -> int:
    det = _detector_defaults(args)
    eps, M = float(det["epsilon"]), det["M"]
    out = sys.stdout
    C1, C1m, C1p = c1_constant(eps, M)
    logs = log_c1_constant(eps, M)
    _kv(out, "epsilon", eps)
    _kv(out, "M", M)
    _kv(out, "C1", C1)
    _kv(out, "C1_minus", C1m)
    _kv(out, "C1_plus", C1p)
    for key, v in zip(("log_C1", "log_C1_minus", "log_C1_plus"), logs):
        _kv(out, key, v)
    C2 = None
    if args.lam is None:
        _kv(out, "lambda", None)
    else:
        _kv(out, "lambda", args.lam)
        C2 = c2_constant(eps, M, args.lam)
    _kv(out, "C2", C2)
    if args.T is not None:
        h = float(det["h"])
        delay, fa = theorem3_bounds(eps, M, h, args.T, args.lam)
        _kv(out, "h", h)
        _kv(out, "T", args.T)
        _kv(out, "delay_bound", delay)
        _kv(out, "false_alarm_bound", fa)
        if C2 is not None:
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always")
                th = tuned_params(args.T, args.gamma_T, args.K, C1, C2)
            for w in caught:
                _warn(str(w.message))
            _kv(out, "tuned_h", th.h)
            _kv(out, "tuned_alpha", th.alpha)
            _kv(out, "tuned_alpha_raw", th.alpha_raw)
            _kv(out, "tuned_alpha_clamped", th.alpha_clamped)
    if args.u0 is not None:
        u0_hat = args.u0 if args.u0_hat is None else args.u0_hat
        roots = compute_mgf_roots(args.u0, u0_hat, eps)
        for k in ("r_minus", "r_plus", "r_hat_minus", "r_hat_plus"):
            _kv(out, k, getattr(roots, k))
        _kv(out, "r", roots.r)
    return EXIT_OK


# --------------------------------------------------------------------- fit


def _read_series(path, column):
    header, rows = None, []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            cells = [c.strip() for c in line.split(",")]
            if header is None and not rows:
                try:
                    [float(c) for c in cells]
                except ValueError:
                    header = cells
                    continue
            rows.append((lineno, cells))
    if header is not None:
        if column is None:
            column = "mean_regret" if "mean_regret" in header else header[-1]
        if column not in header:
            raise ConfigError(f"column {column!r} not in header {header}")
        idx = header.index(column)
    else:
        idx = int(column) if column is not None else -1
    vals = []
    for lineno, cells in rows:
        try:
            vals.append(float(cells[idx]))
        except (ValueError, IndexError):
            raise ConfigError(f"line {lineno}: cannot read a number from column {column!r}") from None
    return np.array(vals)


def cmd_fit(args) -> int:
    y = _read_series(args.path, args.column)
    res = fit_power_law(y)
    out = sys.stdout
    _kv(out, "points", len(y))
    for k in ("a", "b", "c", "residual_norm", "converged", "degenerate"):
        _kv(out, k, getattr(res, k))
    return EXIT_OK


# ---------------------------------------------------------- trace-validate


def cmd_trace_validate(args) -> int:
    sched = load_trace(args.path, args.T, delimiter=args.delimiter)
    out = sys.stdout
    _kv(out, "K", sched.K)
    _kv(out, "T", sched.T)
    _kv(out, "segments", sched.num_segments)
    _kv(out, "breakpoints", count_breakpoints(sched))
    if args.epsilon is not None and args.M is not None:
        s = summarize(sched, args.epsilon, args.M)
        _kv(out, "lambda", "undefined" if s.lam is None else s.lam)
        _kv(out, "per_arm_delta", list(s.per_arm_delta))
    print("valid", file=sys.stderr)
    return EXIT_OK


# ------------------------------------------------------------------ parser


def _h_value(s):
    return math.inf if s.strip().lower() in ("inf", "+inf", "infinity") else float(s)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="cdbandit", description="Change-detection bandit experiments and detector bounds.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("run", help="run a regret experiment and write trace/summary files")
    r.add_argument("--config", help="INI experiment file")
    r.add_argument("--preset", choices=sorted(PRESETS))
    # values stay strings so that validation can report every bad one at once
    for flag, dest in (("--T", "T"), ("--trials", "trials"), ("--seed", "seed"), ("--workers", "workers"),
                       ("--gamma-T", "gamma_T"), ("--K", "K"), ("--delta", "delta"), ("--beta", "beta"),
                       ("--epsilon", "epsilon"), ("--M", "M"), ("--h", "h"), ("--alpha", "alpha"),
                       ("--xi", "xi")):
        r.add_argument(flag, dest=dest)
    r.add_argument("--env", choices=("flipping", "switching", "stationary", "trace"))
    r.add_argument("--means", help="comma-separated arm means (stationary environment)")
    r.add_argument("--trace", help="trace file (trace environment)")
    r.add_argument("--output", help="output directory (default: $CDBANDIT_OUTPUT or ./cdbandit-out)")
    r.add_argument("--policy", action="append", help="policy name or kind; repeat to select several")
    r.add_argument("--dry-run", action="store_true", help="validate and print the resolved config only")
    r.set_defaults(func=cmd_run)

    def detector_flags(sp):
        sp.add_argument("--preset", choices=sorted(PRESETS), help="take epsilon, M, h from a preset")
        sp.add_argument("--epsilon", type=float)
        sp.add_argument("--M", type=int)
        sp.add_argument("--h", type=_h_value)
        sp.add_argument("--lambda", dest="lam", type=float, help="grid gap lambda")
        sp.add_argument("--K", type=int, default=2)
        sp.add_argument("--gamma-T", dest="gamma_T", type=int, default=1)

    d = sub.add_parser("detect-eval", help="empirical detection delay / false alarms vs bounds")
    detector_flags(d)
    d.add_argument("--detector", choices=("cusum", "pht", "pht-gated"), default="cusum")
    d.add_argument("--pre", type=float, default=0.5)
    d.add_argument("--post", type=float, default=0.8)
    d.add_argument("--change", type=int, help="change slot (default T//2+1)")
    d.add_argument("--T", type=int, default=10_000, help="stream length for the delay run")
    d.add_argument("--fa-T", dest="fa_T", type=int, default=100_000, help="stream length for the false-alarm run")
    d.add_argument("--trials", type=int, default=500)
    d.add_argument("--seed", type=int, default=0)
    d.set_defaults(func=cmd_detect_eval)

    c = sub.add_parser("constants", help="bound constants, tuned (h, alpha) and log-MGF roots")
    detector_flags(c)
    c.add_argument("--T", type=int)
    c.add_argument("--u0", type=float)
    c.add_argument("--u0-hat", dest="u0_hat", type=float)
    c.set_defaults(func=cmd_constants)

    f = sub.add_parser("fit", help="fit a*t^b + c to a regret series")
    f.add_argument("path")
    f.add_argument("--column", help="column name (header files) or index")
    f.set_defaults(func=cmd_fit)

    t = sub.add_parser("trace-validate", help="parse a ground-truth trace file")
    t.add_argument("path")
    t.add_argument("--T", type=int, required=True)
    t.add_argument("--delimiter", default=",")
    t.add_argument("--epsilon", type=float)
    t.add_argument("--M", type=int)
    t.set_defaults(func=cmd_trace_validate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print("invalid configuration:", file=sys.stderr)
        for prob in exc.problems:
            print(f"  - {prob}", file=sys.stderr)
        return EXIT_INVALID
    except TraceFormatError as exc:
        print(f"invalid trace: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, BoundBranchError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
