"""Command line interface: ``ecoserv <subcommand> ...``.

Exit status: 0 ok, 1 internal error, 2 missing input, 3 validation failure.
Each subcommand prints a JSON stage summary on stdout.
"""

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict

from ._validation import ValidationError
from .forest import ForestParams, ModelFormatError
from .raster_io import RasterFormatError
from . import pipeline

EXIT_INTERNAL, EXIT_MISSING, EXIT_INVALID = 1, 2, 3

log = logging.getLogger("ecoserv")


class _Parser(argparse.ArgumentParser):
    # bad arguments are a validation failure, not argparse's default status 2
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _region(text):
    try:
        parts = [int(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError("region must be x0,y0,x1,y1") from None
    if len(parts) != 4:
        raise argparse.ArgumentTypeError("region must be x0,y0,x1,y1")
    return tuple(parts)


def _forest_args(p):
    p.add_argument("--n-trees", type=int, default=None)
    p.add_argument("--max-depth", type=int, default=None)
    p.add_argument("--min-leaf", type=int, default=None)
    p.add_argument("--mtry", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)


def _forest_params(args, base=None):
    doc = dict(base or asdict(ForestParams(seed=42)))
    for key in ("n_trees", "max_depth", "min_leaf", "mtry", "seed"):
        value = getattr(args, key, None)
        if value is not None:
            doc[key] = value
    return doc


def build_parser():
    parser = _Parser(
        prog="ecoserv", description="Superpixel soft-classification ecosystem-service maps")
    parser.add_argument("--threads", type=int, default=None,
                        help="cap on worker threads (default: available cores)")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic scene from a JSON spec")
    p.add_argument("spec")
    p.add_argument("--out", required=True)

    p = sub.add_parser("segment", help="SNIC superpixels")
    p.add_argument("--raster", required=True)
    p.add_argument("--k", type=int, default=5000)
    p.add_argument("--compactness", type=float, default=pipeline.DEFAULT_COMPACTNESS)
    p.add_argument("--out", required=True)

    p = sub.add_parser("features", help="per-superpixel moment features")
    p.add_argument("--raster", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="fit the random forest")
    p.add_argument("--features", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--points", required=True)
    p.add_argument("--classes", required=True)
    p.add_argument("--out", required=True)
    _forest_args(p)

    p = sub.add_parser("predict", help="ensemble class probabilities per superpixel")
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--classes", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("score", help="apply the supply matrix")
    p.add_argument("--matrix", required=True)
    p.add_argument("--mode", choices=pipeline.ALL_MODES, default="soft")
    p.add_argument("--proba")
    p.add_argument("--labels")
    p.add_argument("--truth", help="land-use label raster (pixel mode)")
    p.add_argument("--out", required=True)

    p = sub.add_parser("render", help="grey PNG of one score band")
    p.add_argument("--scores", required=True)
    p.add_argument("--service")
    p.add_argument("--lo", type=float, required=True)
    p.add_argument("--hi", type=float, required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("hist", help="sample score maps and compare histograms")
    p.add_argument("scores", nargs="+", metavar="LABEL=PATH")
    p.add_argument("--service", required=True)
    p.add_argument("--n", type=int, default=3000)
    p.add_argument("--bins", type=int, default=21)
    p.add_argument("--lo", type=float, default=0.0)
    p.add_argument("--hi", type=float, default=2.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--region", type=_region, help="x0,y0,x1,y1 (half-open)")
    p.add_argument("--out", required=True)

    p = sub.add_parser("pipeline", help="run every stage from a run config")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.add_argument("--k", type=int)
    p.add_argument("--compactness", type=float)
    _forest_args(p)

    p = sub.add_parser("verify-bundle", help="regenerate and check the reference bundle")
    p.add_argument("--bundle", help="bundle directory (default: the packaged one)")
    p.add_argument("--seed", type=int, help="override the scene seed")
    return parser


def _n_jobs(args):
    return args.threads if args.threads else (os.cpu_count() or 1)


def _labelled_paths(items):
    out = {}
    for item in items:
        label, sep, path = item.partition("=")
        if not sep:
            label, path = os.path.splitext(os.path.basename(item))[0], item
        out[label] = path
    return out


def dispatch(args):
    c = args.command
    if c == "synth":
        return pipeline.stage_synth(args.spec, args.out)
    if c == "segment":
        return pipeline.stage_segment(args.raster, args.out, args.k, args.compactness)
    if c == "features":
        return pipeline.stage_features(args.raster, args.labels, args.out)
    if c == "train":
        return pipeline.stage_train(args.features, args.labels, args.points, args.classes,
                                    args.out, ForestParams(**_forest_params(args)),
                                    n_jobs=_n_jobs(args))
    if c == "predict":
        return pipeline.stage_predict(args.model, args.features, args.classes, args.out)
    if c == "score":
        return pipeline.stage_score(args.matrix, args.out, args.mode, args.proba,
                                    args.labels, args.truth)
    if c == "render":
        return pipeline.stage_render(args.scores, args.service, args.lo, args.hi, args.out)
    if c == "hist":
        return pipeline.stage_hist(_labelled_paths(args.scores), args.service, args.out,
                                   args.n, args.bins, args.lo, args.hi, args.seed, args.region)
    if c == "pipeline":
        if not os.path.exists(args.config):
            raise FileNotFoundError(f"missing input: {args.config}")
        cfg = pipeline.RunConfig.from_json(args.config)
        if args.k is not None:
            cfg.k = args.k
        if args.compactness is not None:
            cfg.compactness = args.compactness
        cfg.forest = _forest_params(args, cfg.forest)
        cfg.validate()
        manifest, summaries = pipeline.run_pipeline(cfg, out_dir=args.out, n_jobs=_n_jobs(args))
        return {"stage": "pipeline", "config_hash": manifest["config_hash"],
                "stages": summaries, "artifacts": manifest["artifacts"]}
    if c == "verify-bundle":
        from .bundle import verify_bundle
        report = verify_bundle(args.bundle, seed=args.seed)
        failed = [r for r in report if not r.passed]
        summary = {"stage": "verify-bundle", "passed": not failed,
                   "checks": [asdict(r) for r in report]}
        if failed:
            raise BundleMismatch(summary)
        return summary
    raise AssertionError(c)


class BundleMismatch(Exception):
    def __init__(self, summary):
        super().__init__("reference bundle verification failed")
        self.summary = summary


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        summary = dispatch(args)
    except FileNotFoundError as exc:
        print(f"ecoserv: error: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except BundleMismatch as exc:
        print(json.dumps(exc.summary, indent=2))
        for r in exc.summary["checks"]:
            if not r["passed"]:
                print(f"ecoserv: check failed: {r['name']}: {r['detail']}", file=sys.stderr)
        return EXIT_INVALID
    except (ValidationError, RasterFormatError, ModelFormatError) as exc:
        print(f"ecoserv: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001
        log.debug("internal error", exc_info=True)
        print(f"ecoserv: internal error: {exc!r}", file=sys.stderr)
        return EXIT_INTERNAL
    print(json.dumps(summary, indent=2, default=str))
    return 0


if __name__ == "__main__":
    sys.exit(main())
