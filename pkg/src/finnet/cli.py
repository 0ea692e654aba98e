"""Single entry point: ``fn`` with ingest, serve, taxonomy, stats, eval, and
cost subcommands.

Configuration precedence is flags > environment (FN_BIND, FN_STORE,
FN_TAXONOMY, FN_TOKEN, FN_LOG_LEVEL) > config file (key=value lines) >
defaults. Exit codes: 0 success, 1 validation error, 2 I/O error; errors go
to stderr as one JSON object per line. Subcommand imports are lazy so short
arithmetic commands stay fast.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sqlite3
import sys
from dataclasses import dataclass
from typing import Optional, Sequence

DEFAULT_BIND = "127.0.0.1:8423"
DEFAULT_STORE = "finnet.db"

_ENV_KEYS = {
    "bind": "FN_BIND",
    "store": "FN_STORE",
    "taxonomy": "FN_TAXONOMY",
    "token": "FN_TOKEN",
    "log_level": "FN_LOG_LEVEL",
}


class CliValidationError(Exception):
    pass


@dataclass
class Config:
    store: str = DEFAULT_STORE
    taxonomy: str = ""
    bind: str = DEFAULT_BIND
    token: Optional[str] = None
    log_level: str = "warning"


def resolve_config(args: argparse.Namespace, env: dict) -> Config:
    config = Config()
    file_values: dict[str, str] = {}
    config_path = getattr(args, "config", None) or env.get("FN_CONFIG")
    if config_path:
        try:
            text = open(config_path, encoding="utf-8").read()
        except OSError as exc:
            raise CliValidationError(f"cannot read config file: {exc}") from exc
        for raw in text.splitlines():
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise CliValidationError(f"config line not key=value: {raw!r}")
            file_values[key.strip()] = value.strip()
    for name in ("store", "taxonomy", "bind", "token", "log_level"):
        if name in file_values:
            setattr(config, name, file_values[name])
        if env.get(_ENV_KEYS[name]):
            setattr(config, name, env[_ENV_KEYS[name]])
        flag = getattr(args, name, None)
        if flag:
            setattr(config, name, flag)
    return config


def _emit_error(exc: Exception) -> None:
    payload = {"error": type(exc).__name__, "message": str(exc)}
    field = getattr(exc, "field", None)
    if field:
        payload["field"] = field
    sys.stderr.write(json.dumps(payload, sort_keys=True) + "\n")


def _common_flags() -> argparse.ArgumentParser:
    # Shared by the main parser and every subparser so global flags work on
    # either side of the subcommand; SUPPRESS keeps subparsers from
    # clobbering values parsed before it.
    common = argparse.ArgumentParser(add_help=False)
    add = common.add_argument
    kw = dict(default=argparse.SUPPRESS)
    add("--config", help="key=value config file", **kw)
    add("--store", help="catalog store path (env FN_STORE)", **kw)
    add("--taxonomy", help="taxonomy file (env FN_TAXONOMY)", **kw)
    add("--bind", help="host:port for serve (env FN_BIND)", **kw)
    add("--token", help="bearer token for writes (env FN_TOKEN)", **kw)
    add("--log-level", dest="log_level", help="logging level", **kw)
    return common


class _SubParser(argparse.ArgumentParser):
    """Subcommand parser that always carries the shared global flags."""

    def __init__(self, **kwargs):
        parents = list(kwargs.pop("parents", []))
        super().__init__(parents=parents + [_common_flags()], **kwargs)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fn",
        description="Taxonomy-aware catalog for localized marine imagery.",
        parents=[_common_flags()],
    )
    sub = parser.add_subparsers(dest="command", parser_class=_SubParser)

    p_ingest = sub.add_parser("ingest", help="ingest a localization CSV")
    p_ingest.add_argument("csv", help="CSV file in the documented column order")
    p_ingest.add_argument("--meta", help="collection .meta sidecar (key=value)")
    p_ingest.add_argument("--dry-run", action="store_true",
                          help="parse and report without writing")

    sub.add_parser("serve", help="run the REST service")

    p_tax = sub.add_parser("taxonomy", help="inspect the concept tree")
    tax_sub = p_tax.add_subparsers(dest="tax_command", required=True)
    tax_sub.add_parser("validate", help="load and validate the tree")
    p_resolve = tax_sub.add_parser("resolve", help="resolve a concept name")
    p_resolve.add_argument("name")
    p_desc = tax_sub.add_parser("descendants", help="list descendant concepts")
    p_desc.add_argument("name")
    p_label = tax_sub.add_parser("label", help="rank label for a concept")
    p_label.add_argument("name")
    p_label.add_argument("--rank", required=True)

    p_stats = sub.add_parser("stats", help="dataset statistics (CSV to stdout)")
    stats_sub = p_stats.add_subparsers(dest="stats_command", required=True)
    stats_sub.add_parser("instances", help="localizations-per-image histogram")
    p_conc = stats_sub.add_parser("concepts", help="concepts-per-image histogram")
    p_conc.add_argument("--rank", required=True)
    stats_sub.add_parser("sizes", help="relative instance size histogram")
    p_cov = stats_sub.add_parser("coverage", help="sample images for coverage review")
    p_cov.add_argument("--concept", required=True)
    p_cov.add_argument("--rank")
    p_cov.add_argument("-n", type=int, default=50)
    p_cov.add_argument("--seed", type=int, default=0)
    p_avg = stats_sub.add_parser("avgimage", help="pixel-wise average image")
    p_avg.add_argument("sources", nargs="+", help="image files or URLs")
    p_avg.add_argument("--out", required=True, help="output PNG path")
    p_avg.add_argument("--size", type=int, default=128,
                       help="square output size in pixels")
    p_avg.add_argument("--cache-dir", default=".finnet-cache",
                       help="download cache for URL sources")

    p_eval = sub.add_parser("eval", help="score detector output")
    eval_sub = p_eval.add_subparsers(dest="eval_command", required=True)
    p_boxes = eval_sub.add_parser("boxes", help="confusion matrix from box CSVs")
    p_boxes.add_argument("--pred", required=True)
    p_boxes.add_argument("--truth", required=True)
    p_boxes.add_argument("--iou", type=float, default=0.5)
    p_boxes.add_argument("--score", type=float, default=0.0,
                         help="drop predictions scoring below this")
    p_act = eval_sub.add_parser("activity", help="temporal activity report")
    p_act.add_argument("--pred", required=True, action="append",
                       help="detection or segment CSV (repeat per video)")
    p_act.add_argument("--truth", required=True, action="append",
                       help="segment CSV (repeat per video)")
    p_act.add_argument("--window", type=float, default=10.0,
                       help="gap-filling window in seconds")
    p_act.add_argument("--score", type=float, default=0.5,
                       help="detection score threshold")
    p_act.add_argument("--duration", type=float,
                       help="total footage seconds (default: observed span)")

    p_cost = sub.add_parser("cost", help="annotation cost arithmetic")
    cost_sub = p_cost.add_subparsers(dest="cost_command")
    p_expert = cost_sub.add_parser("expert", help="expert per-image costing")
    p_expert.add_argument("--mid", type=float, required=True)
    p_expert.add_argument("--benthic", type=float, required=True)
    p_expert.add_argument("--mid-rate", type=float, default=1.0)
    p_expert.add_argument("--benthic-rate", type=float, default=3.0)
    p_cost.add_argument("--hours", type=float)
    p_cost.add_argument("--images", type=float)
    p_cost.add_argument("--iph", type=float, help="images labeled per hour")
    p_cost.add_argument("--redundancy", type=float, default=1.0)
    p_cost.add_argument("--rate", type=float, help="hourly rate")

    return parser


def _load_tree(config: Config):
    from .taxonomy import load_taxonomy

    if not config.taxonomy:
        raise CliValidationError(
            "a taxonomy file is required (--taxonomy or FN_TAXONOMY)"
        )
    return load_taxonomy(config.taxonomy)


def _open_store(config: Config, tree=None):
    from .catalog import CatalogStore

    return CatalogStore(config.store, tree=tree)


def _cmd_ingest(args, config: Config) -> int:
    from .ingest import ingest_upload

    tree = _load_tree(config)
    store = _open_store(config, tree)
    data = open(args.csv, "rb").read()
    meta = open(args.meta, "rb").read() if args.meta else None
    report, uuid, counts = ingest_upload(store, tree, data, meta,
                                         dry_run=args.dry_run)
    print(json.dumps({
        "dry_run": args.dry_run,
        "collection": uuid,
        "images": counts[0],
        "localizations": counts[1],
        **report.to_dict(),
    }, indent=2, sort_keys=True))
    return 1 if report.errors else 0


def _cmd_serve(args, config: Config) -> int:
    from .api import ServeConfig, serve

    serve(ServeConfig(
        bind=config.bind,
        store_path=config.store,
        taxonomy_path=config.taxonomy,
        token=config.token,
    ))
    return 0


def _cmd_taxonomy(args, config: Config) -> int:
    from .taxonomy import Rank

    tree = _load_tree(config)
    if args.tax_command == "validate":
        print(json.dumps({"nodes": len(tree), "root": tree.root.name}))
        return 0
    node = tree.resolve(args.name)
    if args.tax_command == "resolve":
        print(json.dumps({
            "name": node.name,
            "rank": node.rank.value,
            "parent": node.parent.name if node.parent else None,
            "aliases": sorted(node.aliases),
        }, sort_keys=True))
    elif args.tax_command == "descendants":
        for name in sorted(tree.descendant_names(node)):
            print(name)
    elif args.tax_command == "label":
        print(tree.rank_label(node, Rank.parse(args.rank)))
    return 0


def _print_histogram_csv(hist) -> None:
    print("bin_start,bin_end,count,percent")
    for i, count in enumerate(hist.counts):
        print(f"{hist.edges[i]:g},{hist.edges[i + 1]:g},{count},"
              f"{hist.percent[i]:.6f}")


def _cmd_stats(args, config: Config) -> int:
    from . import stats as stats_mod
    from .taxonomy import Rank

    tree = _load_tree(config)
    store = _open_store(config, tree)
    snapshot = store.snapshot()
    if args.stats_command == "instances":
        _print_histogram_csv(stats_mod.instances_per_image(snapshot))
    elif args.stats_command == "concepts":
        rank = Rank.parse(args.rank)
        _print_histogram_csv(stats_mod.concepts_per_image(snapshot, tree, rank))
    elif args.stats_command == "sizes":
        dist = stats_mod.relative_size_distribution(snapshot)
        _print_histogram_csv(dist.histogram)
        if dist.excluded:
            sys.stderr.write(
                f"excluded {dist.excluded} localizations with unknown "
                f"image dimensions\n"
            )
    elif args.stats_command == "coverage":
        rank = Rank.parse(args.rank) if args.rank else None
        sample = stats_mod.coverage_sample(snapshot, tree, args.concept,
                                           rank=rank, n=args.n, seed=args.seed)
        print("image_uuid,image_url,localizations")
        for img in sample:
            print(f"{img.record.uuid},{img.record.image_url},"
                  f"{len(img.localizations)}")
    elif args.stats_command == "avgimage":
        sources: list = []
        urls = [s for s in args.sources if s.startswith(("http://", "https://"))]
        sources.extend(s for s in args.sources if s not in urls)
        if urls:
            sources.extend(stats_mod.gather_pixels(urls, args.cache_dir))
        avg = stats_mod.average_image(sources, size=(args.size, args.size))
        with open(args.out, "wb") as fh:
            fh.write(avg.to_png_bytes())
        print(json.dumps({"out": args.out, "n": avg.n,
                          "size": [avg.width, avg.height]}))
    return 0


def _cmd_eval(args, config: Config) -> int:
    from . import evaluation as ev

    if args.eval_command == "boxes":
        pred_frames = ev.read_detections_csv(open(args.pred, "rb").read())
        truth_frames = ev.read_detections_csv(open(args.truth, "rb").read())
        truths_by_t = {t: [(d.bbox, d.label) for d in dets]
                       for t, dets in truth_frames}
        labels = sorted(
            {d.label for _, dets in pred_frames for d in dets}
            | {d.label for _, dets in truth_frames for d in dets}
        )
        matrix = ev.ConfusionMatrix(labels)
        times = sorted(set(truths_by_t) | {t for t, _ in pred_frames})
        preds_by_t = dict(pred_frames)
        for t in times:
            preds = [d for d in preds_by_t.get(t, []) if d.score >= args.score]
            truths = truths_by_t.get(t, [])
            result = ev.match_detections(preds, truths, iou_threshold=args.iou)
            frame_matrix = ev.confusion_matrix(preds, truths, result, labels)
            matrix.counts += frame_matrix.counts
        sys.stdout.write(matrix.to_csv())
        return 0

    # activity: one --pred/--truth pair per video
    if len(args.pred) != len(args.truth):
        raise CliValidationError("--pred and --truth must be given in pairs")
    per_video = []
    all_pred: list[ev.Segment] = []
    all_truth: list[ev.Segment] = []
    span = 0.0
    for pred_path, truth_path in zip(args.pred, args.truth):
        pred_data = open(pred_path, "rb").read()
        if ev.sniff_segments(pred_data):
            pred_segments = ev.read_segments_csv(pred_data)
            signal_span = max((s.end for s in pred_segments), default=0.0)
        else:
            frames = ev.read_detections_csv(pred_data)
            signal = ev.activity_signal(frames, score_threshold=args.score)
            pred_segments = ev.smooth_and_segment(signal, window=args.window)
            signal_span = signal.times[-1] if signal.times else 0.0
        truth_data = open(truth_path, "rb").read()
        if not ev.sniff_segments(truth_data):
            raise CliValidationError(f"truth file {truth_path} must be a segment CSV")
        truth_segments = ev.read_segments_csv(truth_data)
        per_video.append(ev.temporal_iou(pred_segments, truth_segments))
        all_pred.extend(pred_segments)
        all_truth.extend(truth_segments)
        span += max(signal_span, max((s.end for s in truth_segments), default=0.0))
    duration = args.duration if args.duration else span
    recall = ev.event_recall(all_pred, all_truth)
    report = {
        "videos": len(per_video),
        "temporal_iou_per_video": per_video,
        "temporal_iou_mean": sum(per_video) / len(per_video),
        "temporal_iou_pooled": ev.temporal_iou(all_pred, all_truth),
        "event_recall": recall if recall is not None else "undefined",
        "effort_reduction": ev.effort_reduction(all_pred, duration),
        "total_duration_s": duration,
        "window_s": args.window,
    }
    print(json.dumps(report, indent=2, sort_keys=True))
    return 0


def _cmd_cost(args, config: Config) -> int:
    from . import costmodel

    if getattr(args, "cost_command", None) == "expert":
        print(costmodel.expert_cost(args.mid, args.benthic,
                                    args.mid_rate, args.benthic_rate))
        return 0
    if args.rate is None:
        raise CliValidationError("--rate is required")
    if args.hours is not None:
        hours = args.hours
    elif args.images is not None and args.iph is not None:
        hours = costmodel.estimate_hours(args.images, args.iph, args.redundancy)
    else:
        raise CliValidationError("give --hours, or --images with --iph")
    print(costmodel.estimate_cost(hours, args.rate))
    return 0


_COMMANDS = {
    "ingest": _cmd_ingest,
    "serve": _cmd_serve,
    "taxonomy": _cmd_taxonomy,
    "stats": _cmd_stats,
    "eval": _cmd_eval,
    "cost": _cmd_cost,
}


def run(argv: Optional[Sequence[str]] = None,
        env: Optional[dict] = None) -> int:
    """Parse and dispatch; returns the process exit code."""
    env = dict(os.environ) if env is None else env
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code not in (0, None) else 0
    if not args.command:
        parser.print_help()
        return 1
    try:
        config = resolve_config(args, env)
        logging.basicConfig(level=config.log_level.upper())
        return _COMMANDS[args.command](args, config)
    except OSError as exc:
        _emit_error(exc)
        return 2
    except sqlite3.Error as exc:  # unopenable/corrupt store
        _emit_error(exc)
        return 2
    except Exception as exc:  # domain validation errors: exit 1
        from .catalog import CatalogError
        from .costmodel import CostModelError
        from .evaluation import EvalError
        from .ingest import IngestError
        from .stats import StatsError
        from .taxonomy import TaxonomyError

        known = (CliValidationError, CatalogError, CostModelError, EvalError,
                 IngestError, StatsError, TaxonomyError, ValueError)
        if isinstance(exc, known):
            _emit_error(exc)
            return 1
        raise


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
