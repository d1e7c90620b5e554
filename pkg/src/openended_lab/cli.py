"""Command-line experiment runner.

One executable, seven subcommands: describe, dist, extract, offline-eval,
tune, online-eval, report. All randomness flows from the single --seed
flag; identical invocations on identical inputs produce hash-equal output
files. Wall-clock timings are therefore never written into the primary
artifacts: they go to a timing.json sidecar (the one exception is tune's
ranking, whose tie-break is classify time by contract).

Exit codes: 0 success, 2 usage error, 3 data error, 4 degenerate input.
"""

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from .descriptor import (
    GoodParams,
    entropy,
    good_descriptor,
    order_matrices,
    project,
    reference_frame,
    variance,
)
from .errors import LabError, ParseError, exit_code_for
from .feature_io import (
    expand_grid,
    extract_dataset,
    load_experiment_config,
    load_features,
    protocol_config_from_dict,
    recognizer_config_from_dict,
)
from .metrics import METRIC_NAMES, distance, normalize_l1
from .offline_eval import confusion_csv, cross_validate, grid_search, report_to_dict
from .pointcloud import load_cloud
from .teacher_sim import RecognizerAgent, run_protocol, run_repeats

DEFAULT_THREADS_ENV = "OPENENDED_LAB_THREADS"


def _threads_default():
    raw = os.environ.get(DEFAULT_THREADS_ENV)
    if raw is None:
        return 1
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _write_text(path, text):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _write_json(path, doc):
    _write_text(path, json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _print_json(doc):
    print(json.dumps(doc, indent=2, sort_keys=True))


def _row_text(vector):
    return ",".join(repr(float(x)) for x in vector)


def _read_row(path):
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                try:
                    return np.array([float(c) for c in line.split(",")], dtype=np.float64)
                except ValueError:
                    raise ParseError(1, f"{path}: not a CSV row of numbers") from None
    raise ParseError(0, f"{path}: no data row found")


def _load_any_dataset(path, bins, force_frame):
    """A dataset argument may be a cloud directory or a feature CSV."""
    if os.path.isdir(path):
        ds, skips, describe_time = extract_dataset(path, GoodParams(bins, force_frame))
        return ds, skips, describe_time
    return load_features(path), [], 0.0


def _recognizer_from_args(args, config_doc=None):
    doc = dict((config_doc or {}).get("recognizer", {}))
    for field, attr in (
        ("bins", "bins"),
        ("metric_h", "metric_h"),
        ("metric_d", "metric_d"),
        ("w", "w"),
        ("k", "k"),
    ):
        val = getattr(args, attr, None)
        if val is not None:
            doc[field] = val
    return recognizer_config_from_dict(doc)


def _cmd_describe(args):
    cloud = load_cloud(args.input)
    params = GoodParams(bins=args.bins, force_frame=args.force_frame)
    hist = good_descriptor(cloud, params)
    row = _row_text(hist)
    if args.out:
        _write_text(args.out, row + "\n")
    doc = {
        "input": args.input,
        "bins": args.bins,
        "length": int(hist.size),
        "dropped_rows": cloud.dropped_rows,
    }
    if args.explain or args.json:
        frame = reference_frame(cloud, force=args.force_frame)
        mats = order_matrices([project(cloud, frame, p, args.bins) for p in ("XoY", "XoZ", "YoZ")])
        doc["plane_order"] = [
            {"plane": m.plane, "entropy": entropy(m), "variance": variance(m)} for m in mats
        ]
        if args.explain:
            doc["matrices"] = {m.plane: m.bins.tolist() for m in mats}
    if args.json:
        doc["histogram"] = [float(x) for x in hist]
        _print_json(doc)
    else:
        if not args.out:
            print(row)
        if args.explain:
            for entry in doc["plane_order"]:
                print(f"# {entry['plane']}: entropy={entry['entropy']!r} variance={entry['variance']!r}")
    return 0


def _cmd_dist(args):
    a = normalize_l1(_read_row(args.a))
    b = normalize_l1(_read_row(args.b))
    names = METRIC_NAMES if args.metric == "all" else (args.metric,)
    values = {name: distance(name, a, b) for name in names}
    if args.json:
        _print_json({"a": args.a, "b": args.b, "distances": values})
    else:
        for name in names:
            print(f"{name},{values[name]!r}")
    return 0


def _cmd_extract(args):
    params = GoodParams(bins=args.bins, force_frame=args.force_frame)
    ds, skips, describe_time = extract_dataset(args.dataset, params, out_path=args.out)
    doc = {
        "out": args.out,
        "views": len(ds.views),
        "categories": list(ds.categories),
        "skipped": len(skips),
    }
    if args.json:
        _print_json(doc)
    else:
        print(f"wrote {doc['views']} views, {len(doc['categories'])} categories, "
              f"{doc['skipped']} skipped -> {args.out}")
    return 0


def _cmd_offline_eval(args):
    config_doc = load_experiment_config(args.config) if args.config else {}
    cfg = _recognizer_from_args(args, config_doc)
    ds, skips, describe_time = _load_any_dataset(args.dataset, cfg.bins, args.force_frame)
    report = cross_validate(ds, cfg, k_folds=args.folds, seed=args.seed, describe_time=describe_time)
    os.makedirs(args.out, exist_ok=True)
    _write_json(os.path.join(args.out, "report.json"), report_to_dict(report, include_timing=False))
    _write_text(os.path.join(args.out, "confusion.csv"), confusion_csv(report))
    _write_json(
        os.path.join(args.out, "timing.json"),
        {
            "mean_describe_time": report.mean_describe_time,
            "mean_classify_time": report.mean_classify_time,
        },
    )
    doc = {
        "instance_accuracy": report.instance_accuracy,
        "class_accuracy": report.class_accuracy,
        "views": len(ds.views),
        "out": args.out,
    }
    if args.json:
        _print_json(doc)
    else:
        print(f"instance_accuracy={report.instance_accuracy:.6f} "
              f"class_accuracy={report.class_accuracy:.6f} ({len(ds.views)} views)")
    return 0


def _config_tag(cfg):
    """Echo format for a ranked config, e.g. [GOOD, bhattacharyya, K=1, 30bins]."""
    if cfg.w == 0.0:
        return f"[{cfg.descriptor.upper()}, {cfg.metric_h}, K={cfg.k}, {cfg.bins}bins]"
    if cfg.w == 1.0:
        return f"[deep, {cfg.metric_d}, K={cfg.k}]"
    return (
        f"[{cfg.descriptor.upper()}+deep, {cfg.metric_h}+{cfg.metric_d}, "
        f"w={cfg.w}, K={cfg.k}, {cfg.bins}bins]"
    )


def _cmd_tune(args):
    grid_doc = load_experiment_config(args.grid)
    grid = expand_grid(grid_doc)
    ds, _, _ = _load_any_dataset(args.dataset, grid[0].bins, args.force_frame)
    result = grid_search(ds, grid, k_folds=args.folds, seed=args.seed)
    os.makedirs(args.out, exist_ok=True)
    lines = ["rank,descriptor,bins,metric_h,metric_d,w,k,class_accuracy,instance_accuracy,mean_classify_time"]
    ranking_doc = []
    for rank, rep in enumerate(result.reports, start=1):
        c = rep.config
        lines.append(
            f"{rank},{c.descriptor},{c.bins},{c.metric_h},{c.metric_d},{c.w!r},{c.k},"
            f"{rep.class_accuracy!r},{rep.instance_accuracy!r},{rep.mean_classify_time!r}"
        )
        ranking_doc.append(report_to_dict(rep))
    _write_text(os.path.join(args.out, "ranking.csv"), "\n".join(lines) + "\n")
    _write_json(
        os.path.join(args.out, "ranking.json"),
        {
            "ranking": ranking_doc,
            "failures": [
                {"grid_index": gi, "config": report_to_dict_config(c), "error": err}
                for gi, c, err in result.failures
            ],
        },
    )
    if not result.reports:
        print("every grid cell failed", file=sys.stderr)
        return 3
    best = result.reports[0]
    doc = {
        "best": _config_tag(best.config),
        "class_accuracy": best.class_accuracy,
        "instance_accuracy": best.instance_accuracy,
        "evaluated": len(result.reports),
        "failed": len(result.failures),
        "out": args.out,
    }
    if args.json:
        _print_json(doc)
    else:
        print(f"best: {doc['best']} class_accuracy={best.class_accuracy:.6f} "
              f"instance_accuracy={best.instance_accuracy:.6f} "
              f"({doc['evaluated']} evaluated, {doc['failed']} failed)")
    return 0


def report_to_dict_config(cfg):
    return {
        "descriptor": cfg.descriptor,
        "bins": cfg.bins,
        "metric_h": cfg.metric_h,
        "metric_d": cfg.metric_d,
        "w": cfg.w,
        "k": cfg.k,
    }


def _curves_csv(report):
    lines = ["iteration,n,window_accuracy,global_accuracy,stored_instances"]
    for it, n, wacc, gacc, stored in report.curve:
        lines.append(f"{it},{n},{wacc!r},{gacc!r},{stored}")
    return "\n".join(lines) + "\n"


def _log_csv(report):
    lines = ["iteration,action,category,predicted,correct,reused"]
    for rec in report.log:
        corr = "" if rec.correct is None else str(int(rec.correct))
        lines.append(
            f"{rec.iteration},{rec.action},{rec.category},{rec.predicted},{corr},{int(rec.reused)}"
        )
    return "\n".join(lines) + "\n"


def _cmd_online_eval(args):
    config_doc = load_experiment_config(args.config) if args.config else {}
    rec_cfg = _recognizer_from_args(args, config_doc)
    proto_doc = dict(config_doc.get("protocol", {}))
    for field, attr in (
        ("tau", "tau"),
        ("intro_views", "intro_views"),
        ("window_factor", "window_factor"),
        ("stall_budget", "stall_budget"),
    ):
        val = getattr(args, attr, None)
        if val is not None:
            proto_doc[field] = val
    proto_doc["seed"] = args.seed
    if args.no_reuse:
        proto_doc["allow_reuse"] = False
    proto_cfg = protocol_config_from_dict(proto_doc)

    source = args.features or args.dataset
    ds, _, _ = _load_any_dataset(source, rec_cfg.bins, args.force_frame)
    reports, rows, summary = run_repeats(ds, proto_cfg, rec_cfg, args.repeats)
    base = reports[0]
    os.makedirs(args.out, exist_ok=True)
    _write_text(os.path.join(args.out, "curves.csv"), _curves_csv(base))
    _write_text(os.path.join(args.out, "log.csv"), _log_csv(base))
    _write_json(
        os.path.join(args.out, "summary.json"),
        {
            "recognizer": report_to_dict_config(rec_cfg),
            "protocol": {
                "tau": proto_cfg.tau,
                "intro_views": proto_cfg.intro_views,
                "window_factor": proto_cfg.window_factor,
                "stall_budget": proto_cfg.stall_budget,
                "seed": proto_cfg.seed,
                "allow_reuse": proto_cfg.allow_reuse,
            },
            "repeats": rows,
            "summary": summary,
            "per_n": [list(r) for r in base.per_n],
            "termination": base.termination,
            "categories_learned": base.categories_learned,
            "global_accuracy": base.global_accuracy,
            "total_asks": base.total_asks,
            "stored_instances": base.stored_instances,
        },
    )
    doc = {
        "termination": base.termination,
        "categories_learned": base.categories_learned,
        "global_accuracy": base.global_accuracy,
        "total_asks": base.total_asks,
        "stored_instances": base.stored_instances,
        "avg_instance_accuracy": summary["avg_instance_accuracy"],
        "std_instance_accuracy": summary["std_instance_accuracy"],
        "out": args.out,
    }
    if args.json:
        _print_json(doc)
    else:
        print(f"{base.termination}: learned {base.categories_learned} categories in "
              f"{base.total_asks} asks, global_accuracy={base.global_accuracy:.6f}, "
              f"stored={base.stored_instances} "
              f"(repeats={args.repeats}, avg={summary['avg_instance_accuracy']:.6f}"
              f"+-{summary['std_instance_accuracy']:.6f})")
    return 0


def _cmd_report(args):
    import matplotlib

    matplotlib.use("Agg")
    import base64

    import matplotlib.pyplot as plt

    with open(args.curves, encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().splitlines() if ln]
    header = lines[0].split(",")
    expected = ["iteration", "n", "window_accuracy", "global_accuracy", "stored_instances"]
    if header != expected:
        raise ParseError(1, f"curves file must have columns {expected}")
    rows = [ln.split(",") for ln in lines[1:]]
    it = [int(r[0]) for r in rows]
    n = [int(r[1]) for r in rows]
    wacc = [float(r[2]) for r in rows]
    gacc = [float(r[3]) for r in rows]
    stored = [int(r[4]) for r in rows]

    os.makedirs(args.out, exist_ok=True)
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(8, 8), sharex=True)
    ax1.plot(it, wacc, label="window accuracy", color="tab:blue")
    ax1.plot(it, gacc, label="global accuracy", color="tab:orange")
    ax1.set_ylabel("accuracy")
    ax1.set_ylim(-0.02, 1.02)
    ax1.legend(loc="lower right")
    ax1.grid(alpha=0.3)
    ax2.plot(it, stored, label="stored instances", color="tab:green")
    ax2b = ax2.twinx()
    ax2b.plot(it, n, label="categories", color="tab:red", linestyle="--")
    ax2.set_xlabel("ask iteration")
    ax2.set_ylabel("stored instances")
    ax2b.set_ylabel("categories introduced")
    ax2.grid(alpha=0.3)
    fig.tight_layout()
    png_path = os.path.join(args.out, "curves.png")
    fig.savefig(png_path, dpi=120)
    plt.close(fig)

    with open(png_path, "rb") as fh:
        b64 = base64.b64encode(fh.read()).decode("ascii")
    summary_rows = ""
    if args.summary:
        with open(args.summary, encoding="utf-8") as fh:
            sdoc = json.load(fh)
        flat = {
            "termination": sdoc.get("termination"),
            "categories_learned": sdoc.get("categories_learned"),
            "global_accuracy": sdoc.get("global_accuracy"),
            "total_asks": sdoc.get("total_asks"),
            "stored_instances": sdoc.get("stored_instances"),
        }
        summary_rows = "".join(
            f"<tr><td>{k}</td><td>{v}</td></tr>" for k, v in flat.items() if v is not None
        )
    html = (
        "<!DOCTYPE html><html><head><meta charset='utf-8'>"
        "<title>protocol run report</title>"
        "<style>body{font-family:sans-serif;margin:2em}table{border-collapse:collapse}"
        "td{border:1px solid #999;padding:4px 10px}</style></head><body>"
        "<h1>Protocol run report</h1>"
        f"<p>{len(it)} ask iterations, {max(n) if n else 0} categories introduced.</p>"
        + (f"<table>{summary_rows}</table>" if summary_rows else "")
        + f"<img alt='curves' src='data:image/png;base64,{b64}'/>"
        "</body></html>"
    )
    _write_text(os.path.join(args.out, "report.html"), html)
    if args.json:
        _print_json({"out": args.out, "png": png_path, "html": os.path.join(args.out, "report.html")})
    else:
        print(f"wrote {png_path} and report.html")
    return 0


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--json", action="store_true", help="machine-readable stdout")
    common.add_argument("--seed", type=int, default=0, help="single seed for all randomness")
    common.add_argument(
        "--threads",
        type=int,
        default=_threads_default(),
        help=f"parallelism hint (env {DEFAULT_THREADS_ENV}); never changes outputs",
    )
    common.add_argument("--version", action="version", version=f"%(prog)s {__version__}")

    parser = argparse.ArgumentParser(
        prog="openended-lab",
        description="Open-ended 3D object category learning experiments.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("describe", parents=[common], help="describe one cloud file")
    p.add_argument("--input", required=True, help=".pcd or .ply cloud file")
    p.add_argument("--bins", type=int, default=30)
    p.add_argument("--force-frame", action="store_true")
    p.add_argument("--explain", action="store_true", help="also print plane ordering and matrices")
    p.add_argument("--out", help="write the histogram row to this file")
    p.set_defaults(func=_cmd_describe)

    p = sub.add_parser("dist", parents=[common], help="distance between two histogram rows")
    p.add_argument("--metric", default="all", help="metric name or 'all'")
    p.add_argument("--a", required=True, help="CSV row file")
    p.add_argument("--b", required=True, help="CSV row file")
    p.set_defaults(func=_cmd_dist)

    p = sub.add_parser("extract", parents=[common], help="describe a dataset tree to a feature CSV")
    p.add_argument("--dataset", required=True, help="root dir: <category>/<instance>/<view>.pcd")
    p.add_argument("--bins", type=int, default=30)
    p.add_argument("--force-frame", action="store_true")
    p.add_argument("--out", required=True, help="feature CSV path")
    p.set_defaults(func=_cmd_extract)

    def add_recognizer_flags(p):
        p.add_argument("--bins", type=int, default=None)
        p.add_argument("--metric-h", dest="metric_h", default=None)
        p.add_argument("--metric-d", dest="metric_d", default=None)
        p.add_argument("--w", type=float, default=None)
        p.add_argument("--k", type=int, default=None)
        p.add_argument("--force-frame", action="store_true")
        p.add_argument("--config", help="JSON experiment config (flags override)")

    p = sub.add_parser("offline-eval", parents=[common], help="stratified K-fold evaluation")
    p.add_argument("--dataset", required=True, help="cloud dir or feature CSV")
    add_recognizer_flags(p)
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_offline_eval)

    p = sub.add_parser("tune", parents=[common], help="grid search over recognizer configs")
    p.add_argument("--dataset", required=True, help="cloud dir or feature CSV")
    p.add_argument("--grid", required=True, help="JSON grid file")
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--force-frame", action="store_true")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_tune)

    p = sub.add_parser("online-eval", parents=[common], help="simulated-teacher protocol run")
    p.add_argument("--features", help="feature CSV")
    p.add_argument("--dataset", help="cloud dir (alternative to --features)")
    add_recognizer_flags(p)
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--intro-views", dest="intro_views", type=int, default=None)
    p.add_argument("--window-factor", dest="window_factor", type=int, default=None)
    p.add_argument("--stall-budget", dest="stall_budget", type=int, default=None)
    p.add_argument("--no-reuse", action="store_true", help="terminate when a pool runs dry")
    p.add_argument("--repeats", type=int, default=1)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_online_eval)

    p = sub.add_parser("report", parents=[common], help="render curves.csv to PNG + HTML")
    p.add_argument("--curves", required=True, help="curves.csv from online-eval")
    p.add_argument("--summary", help="summary.json from online-eval")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_report)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code is not None else 0
    if getattr(args, "threads", 1) < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return 2
    if args.command == "online-eval" and not (args.features or args.dataset):
        print("error: online-eval needs --features or --dataset", file=sys.stderr)
        return 2
    if getattr(args, "repeats", 1) < 1:
        print("error: --repeats must be >= 1", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except LabError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exit_code_for(exc)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


def console():
    sys.exit(main())


if __name__ == "__main__":
    console()
