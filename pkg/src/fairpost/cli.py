"""Command-line entry point: ``fairpost {stats,equalize,verify}``.

Exit codes: 0 success, 2 input error, 3 infeasible or not equalized within
tolerance, 4 verification failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from fractions import Fraction
from pathlib import Path

from . import __version__
from .deferral import (compose_with_blind_rule, conditional_profile_gap, deferrals_to_csv,
                       policies_to_json, strategy_match_group, strategy_pointwise_min)
from .errors import FairpostError, InfeasibleError, InputError
from .ingest import IngestConfig, load_csv, recalibrate
from .mass_averaging import apply_kernel, calibration_residual, equalize_by_mass_averaging
from .metrics import EqualizationReport, assert_equalized, stats_empirical, stats_family, stats_to_csv
from .oracle import GridSpec, run_suite
from .profiles import family_to_json, tv_distance, validate_calibration
from .thresholding import (ThresholdRule, apply_deferring_threshold, apply_threshold,
                           equalize_npv, equalize_ppv, equalize_ppv_npv_deferring, npv_range,
                           ppv_range)

EXIT_OK, EXIT_INPUT, EXIT_INFEASIBLE, EXIT_VERIFY = 0, 2, 3, 4
MODES = ("ppv", "npv", "ppv-npv-defer", "ap-defer", "mass-average")


def _num(x):
    return float(x) if isinstance(x, Fraction) else x


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return _num(obj)


def _write(out, name, text, written):
    out.mkdir(parents=True, exist_ok=True)
    (out / name).write_text(text, encoding="utf-8")
    written.append(name)


def _dump(doc):
    return json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n"


def _bucket_arg(text):
    if text in ("identity", "decile"):
        return text
    try:
        return tuple(float(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(
            "--bucket takes identity, decile, or comma-separated edges") from None


def _config(args):
    groups = tuple(g.strip() for g in args.groups.split(",")) if args.groups else None
    return IngestConfig(score_col=args.score_col, label_col=args.label_col,
                        group_col=args.group_col, groups=groups, bucket=args.bucket,
                        min_bucket_count=args.min_bucket_count, max_bad_rows=args.max_bad_rows)


def _config_echo(args):
    skip = {"func"}
    return {k: (list(v) if isinstance(v, tuple) else v)
            for k, v in sorted(vars(args).items()) if k not in skip}


def _load(args):
    cfg = _config(args)
    ds = load_csv(args.input, cfg)
    return recalibrate(ds, cfg), cfg


def _blind_rule(threshold):
    return apply_threshold(ThresholdRule(threshold, 1))


def _stats_doc(stats):
    return {str(g): s.to_dict() for g, s in stats.items()}


def _finish(args, report, written, started):
    report["outputs"] = sorted(written + ["report.json"])
    if not args.no_timestamp:
        report["wall_clock_seconds"] = round(time.perf_counter() - started, 6)
        report["timestamp"] = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    _write(Path(args.out), "report.json", _dump(report), [])


def cmd_stats(args):
    started = time.perf_counter()
    (ds, cal, fam), _ = _load(args)
    written = []
    out = Path(args.out)
    rule = _blind_rule(args.threshold)
    stats = stats_empirical(ds, rule, axis=args.axis)
    calib = validate_calibration(ds)
    groups = list(fam)
    tv = {f"{a}|{b}": tv_distance(fam[a], fam[b])
          for i, a in enumerate(groups) for b in groups[i + 1:]}
    report = {
        "command": "stats", "version": __version__, "config": _config_echo(args),
        "group_counts": ds.group_counts, "dropped_missing_labels": ds.dropped_labels,
        "base_rates": {g: float(r) for g, r in ds.base_rates().items()},
        "calibration_max_deviation": calib.max_deviation,
        "tv_distance": tv, "stats": _stats_doc(stats),
    }
    if args.seed is not None:
        report["stats_sampled"] = _stats_doc(
            stats_empirical(ds, rule, mode="sampled", seed=args.seed, axis=args.axis))
    _write(out, "profiles.json", family_to_json(fam, indent=2) + "\n", written)
    _write(out, "profiles_calibrated.json", family_to_json(cal, indent=2) + "\n", written)
    _write(out, "stats.csv", stats_to_csv(stats), written)
    _finish(args, report, written, started)
    for g, n in ds.group_counts.items():
        s = stats[g]
        print(f"{g}: n={n} base_rate={float(s.base_rate):.4f} "
              f"ppv={_fmt(s.ppv)} npv={_fmt(s.npv)} fpr={_fmt(s.fpr)} fnr={_fmt(s.fnr)}")
    for pair, d in tv.items():
        print(f"tv[{pair}] = {float(d):.4f}")
    return EXIT_OK


def _fmt(x):
    return "n/a" if x is None else f"{float(x):.4f}"


def _parse_targets(text, n):
    if text is None:
        return None
    parts = [float(x) for x in text.split(",")]
    if len(parts) != n:
        raise InputError(f"--target expects {n} comma-separated value(s)")
    return parts


def _midpoint(lo, hi):
    return (lo + hi) / 2


def _threshold_deferrals(fam, hard):
    rows = ["group,score,mass,deferred_mass,retained_mass"]
    for g, ap in fam.items():
        for s, p in ap.items():
            d = p * hard.outcome(s, g).defer
            rows.append(f"{g},{float(s)!r},{float(p)!r},{float(d)!r},{float(p - d)!r}")
    return "\n".join(rows) + "\n"


def _group_deferral(fam, hard):
    return {g: sum(p * hard.outcome(s, g).defer for s, p in ap.items()) for g, ap in fam.items()}


def cmd_equalize(args):
    started = time.perf_counter()
    (ds, cal, fam), _ = _load(args)
    out = Path(args.out)
    written = []
    blind = _blind_rule(args.threshold)
    before = stats_empirical(ds, blind, axis="bucket")
    counts = ds.group_counts
    report = {"command": "equalize", "mode": args.mode, "version": __version__,
              "config": _config_echo(args), "group_counts": counts,
              "before": _stats_doc(before)}
    tol = args.tolerance

    if args.mode in ("ppv", "npv"):
        rng = ppv_range(fam) if args.mode == "ppv" else npv_range(fam)
        (target,) = _parse_targets(args.target, 1) or [_midpoint(*rng)]
        rule = (equalize_ppv if args.mode == "ppv" else equalize_npv)(fam, target)
        hard = apply_threshold(rule)
        after = stats_empirical(ds, hard, axis="bucket")
        check = assert_equalized(after, [args.mode], tol)
        report.update(target=target, reachable_range=list(rng), rule=rule.to_dicts())
        _write(out, "rule.json", rule.to_json(indent=2) + "\n", written)
        deferral = {g: 0.0 for g in fam}
    elif args.mode == "ppv-npv-defer":
        targets = _parse_targets(args.target, 2) or [_midpoint(*ppv_range(fam)),
                                                     _midpoint(*npv_range(fam))]
        trace = []
        rule = equalize_ppv_npv_deferring(fam, targets[0], targets[1], trace=trace)
        hard = apply_deferring_threshold(rule)
        after = stats_empirical(ds, hard, axis="bucket")
        check = assert_equalized(after, ["ppv", "npv"], tol)
        deferral = _group_deferral(fam, hard)
        report.update(targets=targets, rule=rule.to_dicts(),
                      repairs=sum(1 for e in trace if e["event"] == "repair"))
        _write(out, "rule.json", rule.to_json(indent=2) + "\n", written)
        _write(out, "deferrals.csv", _threshold_deferrals(fam, hard), written)
    elif args.mode == "ap-defer":
        strategy = args.strategy or "min"
        if strategy == "min":
            policies = strategy_pointwise_min(fam)
        elif strategy.startswith("match:"):
            anchor = strategy.split(":", 1)[1]
            if anchor not in fam:
                raise InputError(f"unknown anchor group {anchor!r}; have {', '.join(fam)}")
            policies = strategy_match_group(fam, anchor)
        else:
            raise InputError("--strategy must be 'min' or 'match:<group>'")
        hard = compose_with_blind_rule(policies, blind)
        after = stats_empirical(ds, hard, axis="bucket")
        gap = float(conditional_profile_gap(fam, policies))
        metric_gaps = assert_equalized(after, ["ppv", "npv", "cfpr", "cfnr"], tol)
        check = EqualizationReport(gap <= tol, {"conditional_profile": gap}, (), tol)
        deferral = {g: p.delta for g, p in policies.items()}
        report.update(strategy=strategy, conditional_profile_gap=gap,
                      metric_gaps=metric_gaps.to_dict(),
                      policy=[p.to_dict() for p in policies.values()])
        _write(out, "policy.json", policies_to_json(policies, indent=2) + "\n", written)
        _write(out, "deferrals.csv", deferrals_to_csv(fam, policies), written)
    else:  # mass-average
        sol = equalize_by_mass_averaging(cal, tolerance=tol)
        averaged = apply_kernel(cal, sol.kernel)
        after = stats_family(averaged, _blind_rule(args.threshold))
        check = assert_equalized(after, ["ppv", "npv", "fpr", "fnr"], tol)
        report.update(cost=sol.cost, calibration_residual=calibration_residual(cal, sol.kernel))
        _write(out, "kernel.json", sol.kernel.to_json(indent=2) + "\n", written)
        deferral = {g: 0.0 for g in cal}

    weights = {g: Fraction(n) for g, n in counts.items()}
    total = sum(weights[g] * Fraction(deferral[g]) for g in deferral) / sum(weights.values())
    report.update(after=_stats_doc(after), equalization=check.to_dict(),
                  deferral_rates={g: float(d) for g, d in deferral.items()},
                  total_deferral=float(total))
    _write(out, "stats.csv", stats_to_csv(after), written)
    _write(out, "profiles.json", family_to_json(fam, indent=2) + "\n", written)
    _finish(args, report, written, started)

    print(f"mode={args.mode} total_deferral={float(total):.4f}")
    for f, g in check.gaps.items():
        print(f"gap[{f}] = {g:.3g} (tolerance {tol:g})")
    if not check.ok:
        print("equalization not achieved within tolerance", file=sys.stderr)
        return EXIT_INFEASIBLE
    return EXIT_OK


def cmd_verify(args):
    started = time.perf_counter()
    grid = GridSpec(args.grid_resolution)
    reports = run_suite(args.claims or ["all"], grid, seed=args.seed or 0)
    for r in reports:
        print(f"{'PASS' if r.verdict else 'FAIL'} {r.claim}")
    doc = {"command": "verify", "version": __version__, "config": _config_echo(args),
           "claims": [r.to_dict() for r in reports]}
    _finish(args, doc, [], started)
    return EXIT_OK if all(r.verdict for r in reports) else EXIT_VERIFY


def _add_io(p):
    p.add_argument("--input", required=True, help="CSV file with a header row")
    p.add_argument("--score-col", default="decile_score")
    p.add_argument("--label-col", default="two_year_recid")
    p.add_argument("--group-col", default="race")
    p.add_argument("--groups", help="comma-separated groups to keep (default: all)")
    p.add_argument("--bucket", type=_bucket_arg, default="identity",
                   help="identity, decile, or comma-separated bucket edges")
    p.add_argument("--min-bucket-count", type=int, default=1)
    p.add_argument("--max-bad-rows", type=int, default=0)
    p.add_argument("--threshold", type=float, default=0.5,
                   help="group-blind reference threshold on the bucket axis")


def _add_common(p):
    p.add_argument("--seed", type=int)
    p.add_argument("--out", default="fairpost-out")
    p.add_argument("--no-timestamp", action="store_true")


def build_parser():
    parser = argparse.ArgumentParser(prog="fairpost", description="Post-process calibrated scores into fair hard classifiers.")
    parser.add_argument("--version", action="version", version=f"fairpost {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stats", help="per-group profiles and statistics")
    _add_io(p)
    _add_common(p)
    p.add_argument("--axis", choices=("bucket", "calibrated", "raw"), default="bucket")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("equalize", help="build an equalizing rule or deferral policy")
    _add_io(p)
    _add_common(p)
    p.add_argument("--mode", choices=MODES, required=True)
    p.add_argument("--target", help="target value (ppv-npv-defer: 'ppv,npv')")
    p.add_argument("--strategy", help="ap-defer strategy: min or match:<group>")
    p.add_argument("--tolerance", type=float, default=1e-9)
    p.set_defaults(func=cmd_equalize)

    p = sub.add_parser("verify", help="run brute-force checks of the constructions")
    p.add_argument("claims", nargs="*", help="claim ids, or 'all'")
    p.add_argument("--grid-resolution", type=float, default=1e-3)
    _add_common(p)
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (InputError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except FairpostError as exc:
        print(f"failed: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE


if __name__ == "__main__":
    sys.exit(main())
