"""Command-line entry point.

Subcommands: fit (landmark file to curve + mask), cost (analytic sweep
tables), demo (synthetic forward pass with shape trace), gradcheck
(finite-difference suites), eval (classification or surface metrics),
gen (seeded synthetic inputs). Every command is deterministic given its
inputs and seed. Exit codes: 0 success, 1 validation or usage error,
2 numeric failure.
"""

from __future__ import annotations

import argparse
import importlib.resources
import json
import sys

import numpy as np

from . import cost as cost_mod
from . import gradcheck as gc_mod
from . import metrics as metrics_mod
from . import model as model_mod
from . import synth as synth_mod
from .curvefit import (anatomy_feature, curve_to_json, read_landmarks_csv,
                       write_pgm)
from .errors import (ConfigurationError, DegenerateInputError, DimensionError,
                     FittingError, RadixnetError, UsageError)
from .tensor import Tensor

GOLDEN_RESOURCE = "golden_demo.json"
_VALIDATION_ERRORS = (UsageError, ConfigurationError, DimensionError)
_NUMERIC_ERRORS = (FittingError, DegenerateInputError)


def _parse_pair(text: str, what: str) -> tuple[int, int]:
    parts = text.lower().split("x")
    if len(parts) != 2:
        raise UsageError(f"{what} must look like HxW, got {text!r}")
    try:
        return int(parts[0]), int(parts[1])
    except ValueError:
        raise UsageError(f"{what} must be integers, got {text!r}")


def _parse_size(text: str) -> tuple[int, int, int]:
    parts = text.lower().split("x")
    if len(parts) != 3:
        raise UsageError(f"size must look like CxHxW, got {text!r}")
    try:
        c, h, w = (int(p) for p in parts)
    except ValueError:
        raise UsageError(f"size must be integers, got {text!r}")
    return c, h, w


# ------------------------------------------------------------------ fit

def cmd_fit(args) -> int:
    landmarks = read_landmarks_csv(args.landmarks)
    h, w = _parse_pair(args.size, "--size")
    feature, curve, angle = anatomy_feature(landmarks, (h, w),
                                            degree=args.delta)
    text = curve_to_json(curve, angle)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    if args.mask:
        write_pgm(feature.mask * 255, args.mask)
    names = [chr(ord("a") + i) for i in range(args.delta + 1)]
    pretty = ", ".join(f"{n}={float(c)!r}"
                       for n, c in zip(names, curve.coefficients))
    print(f"degree {args.delta} coefficients: {pretty}")
    print(f"rotation angle: {float(angle)!r} rad")
    return 0


# ------------------------------------------------------------------ cost

def cmd_cost(args) -> int:
    if args.paper_rows:
        sizes = (cost_mod.TABLE_VII_SIZES if args.paper_rows == "vii"
                 else cost_mod.TABLE_VIII_SIZES)
    elif args.sizes:
        sizes = [_parse_size(s) for s in args.sizes]
    else:
        raise UsageError("cost needs --paper-rows or --sizes")
    variants = [v.strip() for v in args.variants.split(",") if v.strip()]
    unit = _parse_pair(args.unit, "--unit")
    reports = cost_mod.sweep(sizes, variants=variants, unit=unit,
                             bottleneck=args.phi)
    print(cost_mod.format_table(reports))
    if args.csv:
        cost_mod.write_csv(reports, args.csv)
    return 0


# ------------------------------------------------------------------ demo

def _load_config(path: str | None) -> model_mod.ModelConfig:
    if path is None:
        return model_mod.DEFAULT_CONFIG
    with open(path) as fh:
        return model_mod.config_from_json(fh.read())


def cmd_demo(args) -> int:
    cfg = _load_config(args.config)
    if args.theta is not None:
        import dataclasses
        cfg = dataclasses.replace(cfg, fusion_blocks=args.theta)
    params = model_mod.init_model_params(cfg, seed=args.seed)
    x = Tensor(np.ones((cfg.in_channels, *cfg.input_size)))
    trace: list = []
    scores = model_mod.forward_classify(x, cfg, params, ablate=args.ablate,
                                        trace=trace)
    print(f"input: {'x'.join(map(str, x.shape))}")
    for name, shape in trace[:-1]:
        print(f"{name}: {'x'.join(map(str, shape))}")
    vals = [float(v) for v in scores.data]
    print("scores: [" + ", ".join(repr(v) for v in vals) + "]")
    if args.golden:
        ref = json.loads(importlib.resources.files("radixnet")
                         .joinpath(GOLDEN_RESOURCE).read_text())
        if args.seed != ref["seed"] or args.config or args.ablate \
                or args.theta is not None:
            raise UsageError(
                "--golden applies to the default config, default seed,"
                " no ablation or overrides")
        worst = max(abs(a - b) / max(1.0, abs(a), abs(b))
                    for a, b in zip(vals, ref["scores"]))
        if worst > 1e-12:
            print(f"golden check FAILED: max rel diff {worst!r}")
            return 2
        print("golden check passed")
    return 0


# -------------------------------------------------------------- gradcheck

def cmd_gradcheck(args) -> int:
    results = gc_mod.run_scope(args.scope, seed=args.seed, corrupt=args.corrupt)
    failed = [r for r in results if not r.passed()]
    for r in results:
        status = "PASS" if r.passed() else "FAIL"
        print(f"{r.name}: max rel err {r.max_rel_error:.3e} {status}")
    print(f"{args.scope}: {len(results) - len(failed)}/{len(results)} groups"
          f" within {gc_mod.TOLERANCE:g}")
    return 0 if not failed else 2


# ------------------------------------------------------------------ eval

def _print_metric_rows(rows: list[tuple[str, float]], csv_path: str | None):
    width = max(len(n) for n, _ in rows)
    for name, value in rows:
        print(f"{name.ljust(width)}  {value:.6f}")
    if csv_path:
        with open(csv_path, "w") as fh:
            fh.write("metric,value\n")
            for name, value in rows:
                fh.write(f"{name},{value!r}\n")


def cmd_eval(args) -> int:
    if args.seg:
        seg = metrics_mod.read_pointset_csv(args.seg[0], spacing=args.spacing)
        gt = metrics_mod.read_pointset_csv(args.seg[1], spacing=args.spacing)
        rows = [("ASD_mm", metrics_mod.asd(seg, gt)),
                ("HD95_mm", metrics_mod.hd95(seg, gt))]
        _print_metric_rows(rows, args.csv)
        return 0
    if not args.predictions:
        raise UsageError("eval needs a predictions CSV or --seg A B")
    y_true, y_pred, scores = metrics_mod.read_predictions_csv(args.predictions)
    k = scores.shape[1]
    cls = metrics_mod.classification_metrics(y_true, y_pred, k)
    auc = metrics_mod.roc_auc(y_true, scores, k)
    rows = [("ACC", cls["acc"]), ("AUC", auc), ("SEN", cls["sen"]),
            ("SPC", cls["spc"]), ("F1", cls["f1"])]
    _print_metric_rows(rows, args.csv)
    if args.compare:
        _, _, other = metrics_mod.read_predictions_csv(args.compare)
        if other.shape != scores.shape:
            raise UsageError(
                f"--compare table shape {other.shape} does not match"
                f" {scores.shape}")
        for c in range(k):
            p = metrics_mod.paired_t_test_one_tail(scores[:, c], other[:, c])
            print(f"t-test class {c}: p={p!r}")
    return 0


# ------------------------------------------------------------------- gen

def cmd_gen(args) -> int:
    rng = np.random.default_rng(args.seed)
    if args.kind == "landmarks":
        case = synth_mod.synthetic_landmark_case(rng, size=args.size,
                                                 noise=args.noise)
        synth_mod.write_landmarks_csv(args.out, case.landmarks)
        if args.truth:
            synth_mod.write_pointset_csv(args.truth, case.true_points)
        print(f"wrote {args.out}")
        return 0
    y_true, y_pred, scores = synth_mod.random_predictions(
        rng, args.n, classes=args.classes, accuracy=args.accuracy)
    synth_mod.write_predictions_csv(args.out, y_true, y_pred, scores)
    print(f"wrote {args.out}")
    return 0


# ----------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="radixnet",
        description="Curve-fit segmentation, grouped-attention cost model,"
                    " synthetic forward passes and evaluation metrics.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit a boundary polynomial to a landmark CSV")
    p.add_argument("landmarks")
    p.add_argument("--delta", type=int, default=2, help="polynomial degree")
    p.add_argument("--out", help="curve JSON output path (default: stdout)")
    p.add_argument("--mask", help="optional PGM mask output path")
    p.add_argument("--size", default="128x128", help="mask dims HxW")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("cost", help="analytic FLOP / memory sweep")
    p.add_argument("--paper-rows", choices=("vii", "viii"),
                   help="preset row sets from the published comparison tables")
    p.add_argument("--sizes", nargs="+", help="sizes as CxHxW")
    p.add_argument("--unit", default="8x8", help="attention unit HxW")
    p.add_argument("--phi", type=int, default=4, help="bottleneck factor")
    p.add_argument("--variants", default="mhsa,gmhsa")
    p.add_argument("--csv", help="also write rows to this CSV")
    p.set_defaults(func=cmd_cost)

    p = sub.add_parser("demo", help="synthetic forward pass with shape trace")
    p.add_argument("--config", help="model config JSON path")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--theta", type=int,
                   help="override the fusion block count")
    p.add_argument("--ablate", choices=model_mod.ABLATIONS)
    p.add_argument("--golden", action="store_true",
                   help="compare scores against the recorded regression values")
    p.set_defaults(func=cmd_demo)

    p = sub.add_parser("gradcheck", help="finite-difference gradient suites")
    p.add_argument("scope", choices=sorted(gc_mod.SCOPES))
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--corrupt", help="damage this group's gradient (negative control)")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("eval", help="classification or surface metrics")
    p.add_argument("predictions", nargs="?",
                   help="CSV: true_label,pred_label,score_0..score_{K-1}")
    p.add_argument("--compare",
                   help="second predictions CSV for a paired one-tail t-test")
    p.add_argument("--seg", nargs=2, metavar=("SEG", "GT"),
                   help="two point-set CSVs for ASD / HD95")
    p.add_argument("--spacing", type=float, default=1.0, help="mm per pixel")
    p.add_argument("--csv", help="also write metrics to this CSV")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gen", help="seeded synthetic inputs")
    p.add_argument("kind", choices=("landmarks", "predictions"))
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--noise", type=float, default=1.5,
                   help="landmark y noise (pixels)")
    p.add_argument("--size", type=int, default=128, help="image side (pixels)")
    p.add_argument("--truth", help="also write the true boundary point set")
    p.add_argument("--n", type=int, default=60, help="prediction rows")
    p.add_argument("--classes", type=int, default=3)
    p.add_argument("--accuracy", type=float, default=0.8)
    p.set_defaults(func=cmd_gen)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except _NUMERIC_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except _VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except RadixnetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
