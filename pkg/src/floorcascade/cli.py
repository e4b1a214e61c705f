"""Command-line entry point: ``floorcascade <command> [options]``.

Result JSON goes to stdout, logs to stderr. Failures print a JSON error
object on stderr and exit 2 (bad input) or 3 (internal invariant violation).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from .core import load_plan, plan_from_dict, plan_to_dict, rasterize
from .errors import BadConfig, FloorplanError, InvariantViolation
from .raster import AugmentConfig, augment, normalize_plan
from .weights import ModelConfig, WeightBundle, init_weights

log = logging.getLogger("floorcascade")


def _read_json(source: str) -> dict:
    if source == "-":
        return json.load(sys.stdin)
    with open(source, encoding="utf-8") as fh:
        return json.load(fh)


def _emit(doc, out: str | None = None) -> None:
    text = json.dumps(doc, sort_keys=False)
    if out:
        Path(out).write_text(text, encoding="utf-8")
    sys.stdout.write(text + "\n")


def read_config(path: str) -> dict[str, str]:
    """``key = value`` lines; ``#`` comments, blank lines and ``[section]`` headers are ignored."""
    cfg = {}
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line or line.startswith("["):
            continue
        if "=" not in line:
            raise FloorplanError(f"config line without '=': {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        cfg[key.replace("-", "_")] = value.strip('"').strip("'")
    return cfg


# --------------------------------------------------------------------------
# commands


def cmd_synth(args) -> None:
    from .synth import gen_synthetic

    partial, full = gen_synthetic(args.seed, args.rooms, args.doors, args.canvas)
    if args.full_out:
        Path(args.full_out).write_text(json.dumps(plan_to_dict(full)), encoding="utf-8")
    _emit(plan_to_dict(partial), args.out)


def cmd_rasterize(args) -> None:
    from .render import export_raster

    plan = plan_from_dict(_read_json(args.input))
    frame = None
    if args.regime != "none":
        plan, frame = normalize_plan(plan, args.regime)
    stack = rasterize(plan, visible_only=args.visible_only)
    if args.augment:
        stack = augment(stack, AugmentConfig(seed=args.seed))
    files = []
    if args.out_dir:
        files = [str(p) for p in export_raster(stack, args.out_dir, plan.id)]
    doc = {"plan": plan_to_dict(plan),
           "raster": {"width": stack.width, "height": stack.height,
                      "pixel_counts": stack.pixel_counts(), "files": files}}
    if frame is not None:
        doc["frame"] = frame.to_dict()
    _emit(doc)


def _model_config(args) -> ModelConfig:
    return ModelConfig(decoder_layers=args.decoder_layers)


def cmd_infer(args) -> None:
    from .pipeline import infer

    plan = plan_from_dict(_read_json(args.input))
    cfg = _model_config(args)
    if args.weights:
        weights = WeightBundle.load(args.weights, cfg)
    else:
        log.info("no weights given; using seeded random weights (seed %d)", args.seed)
        weights = init_weights(cfg, args.seed)
    doc = infer(plan, weights)
    if args.figure:
        from .render import plot_floorplan

        plot_floorplan(plan_from_dict(doc), args.figure, title=f"{plan.id} (prediction)")
    _emit(doc, args.out)


def cmd_init_weights(args) -> None:
    weights = init_weights(_model_config(args), args.seed)
    blob = weights.save(args.out)
    _emit({"manifest": args.out, "blob": str(blob), "tensors": len(weights.names())})


def cmd_loss(args) -> None:
    from .pipeline import cascade_losses

    pred = _read_json(args.pred)
    gt = load_plan(args.gt)
    _emit(cascade_losses(pred, gt))


def _eval_rows(args) -> list[dict]:
    from .pipeline import evaluate_docs

    pred_dir, gt_dir = Path(args.pred), Path(args.gt)
    rows = []
    for pred_path in sorted(pred_dir.glob("*.json")):
        gt_path = gt_dir / pred_path.name
        if not gt_path.exists():
            raise FloorplanError(f"no ground truth for {pred_path.name} in {gt_dir}")
        doc = evaluate_docs(_read_json(str(pred_path)), load_plan(gt_path), args.align,
                            args.exhaustive, args.objective)
        row = {"id": pred_path.stem}
        for part in ("room", "door"):
            rep = doc[part + "s"]
            row.update({f"{part}_precision": rep["precision"], f"{part}_recall": rep["recall"],
                        f"{part}_f1": rep["f1"]})
        rows.append(row)
    return rows


CSV_FIELDS = ["id", "room_precision", "room_recall", "room_f1", "door_precision", "door_recall", "door_f1"]


def write_eval_csv(rows: list[dict], path: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_FIELDS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (f"{v:.4f}" if isinstance(v, float) else v) for k, v in row.items()})
        if rows:
            avg = {k: sum(r[k] for r in rows) / len(rows) for k in CSV_FIELDS[1:]}
            writer.writerow({"id": "average", **{k: f"{v:.4f}" for k, v in avg.items()}})


def cmd_eval(args) -> None:
    from .pipeline import evaluate_docs

    if Path(args.pred).is_dir():
        rows = _eval_rows(args)
        if args.csv:
            write_eval_csv(rows, args.csv)
        if args.figure:
            from .render import plot_metrics

            plot_metrics(rows, args.figure)
        _emit({"samples": rows, "csv": args.csv, "figure": args.figure})
        return
    _emit(evaluate_docs(_read_json(args.pred), load_plan(args.gt), args.align,
                        args.exhaustive, args.objective))


def cmd_refine(args) -> None:
    from .core import Component, connected_components
    from .refine import REFINERS, polygonize, refine_iterate
    from .render import render_svg

    plan = plan_from_dict(_read_json(args.input))
    refined = refine_iterate(plan, REFINERS[args.refiner], args.steps)
    comps = []
    for c in refined.components:
        if c.mask is not None and len(connected_components(c.mask)) == 1:
            try:
                c = Component(c.type, c.visible, polygon=tuple(polygonize(c.mask)), score=c.score)
            except FloorplanError:
                pass  # weakly simple outline; keep the mask
        comps.append(c)
    refined = refined.with_components(comps)
    if args.svg:
        Path(args.svg).write_text(render_svg(refined), encoding="utf-8")
    _emit(plan_to_dict(refined), args.out)


def cmd_render(args) -> None:
    from .render import plot_floorplan, render_svg

    plan = plan_from_dict(_read_json(args.input))
    svg = render_svg(plan)
    if args.out:
        Path(args.out).write_text(svg, encoding="utf-8")
    else:
        sys.stdout.write(svg)
    if args.png:
        plot_floorplan(plan, args.png)


# --------------------------------------------------------------------------
# parser


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise BadConfig(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="floorcascade", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="key=value file; explicit flags take precedence")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic (partial, full) floorplan pair")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rooms", type=int, default=6)
    p.add_argument("--doors", type=int, default=7)
    p.add_argument("--canvas", type=int, default=256)
    p.add_argument("--out", help="also write the partial plan here")
    p.add_argument("--full-out", help="write the full (ground-truth) plan here")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("rasterize", help="rasterize a plan to PGM channels and a composite PPM")
    p.add_argument("--input", default="-")
    p.add_argument("--out-dir")
    p.add_argument("--regime", choices=["train", "test", "none"], default="none")
    p.add_argument("--visible-only", action="store_true")
    p.add_argument("--augment", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_rasterize)

    p = sub.add_parser("infer", help="run the encoder and decoder cascades on a partial plan")
    p.add_argument("--input", default="-")
    p.add_argument("--weights", help="weight manifest JSON; random weights when omitted")
    p.add_argument("--out")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--decoder-layers", type=int, default=2)
    p.add_argument("--figure", help="PNG rendering of the assembled prediction")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("init-weights", help="write a seeded random weight bundle")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--decoder-layers", type=int, default=2)
    p.set_defaults(func=cmd_init_weights)

    p = sub.add_parser("loss", help="per-cascade losses of a prediction against ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.set_defaults(func=cmd_loss)

    p = sub.add_parser("eval", help="room/door precision, recall and F1")
    p.add_argument("--pred", required=True, help="prediction JSON, or a directory for batch mode")
    p.add_argument("--gt", required=True)
    p.add_argument("--align", action="store_true", help="search translations for the best F1")
    p.add_argument("--exhaustive", action="store_true", help="visit every translation")
    p.add_argument("--objective", choices=["mean", "rooms"], default="mean")
    p.add_argument("--csv", help="batch mode: per-sample CSV with an average row")
    p.add_argument("--figure", help="batch mode: PNG bar chart of the averages")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("refine", help="post-refinement heuristics and vector output")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--steps", type=int, default=1)
    p.add_argument("--refiner", choices=["identity", "morph"], default="identity")
    p.add_argument("--out")
    p.add_argument("--svg")
    p.set_defaults(func=cmd_refine)

    p = sub.add_parser("render", help="render a plan as SVG")
    p.add_argument("--input", default="-")
    p.add_argument("--out")
    p.add_argument("--png")
    p.set_defaults(func=cmd_render)
    return parser


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if not args.config:
        return args
    cfg = read_config(args.config)
    sub = parser._subparsers._group_actions[0].choices[args.command]
    known = {a.dest: a for a in sub._actions}
    defaults = {}
    for key, value in cfg.items():
        if key in known:
            action = known[key]
            if action.type is not None:
                value = action.type(value)
            elif isinstance(action.const, bool):
                value = value.lower() in ("1", "true", "yes", "on")
            defaults[key] = value
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = _apply_config(parser, argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
        args.func(args)
        return 0
    except SystemExit as exc:
        return int(exc.code or 0)
    except FloorplanError as exc:
        _fail(exc.code, str(exc))
        return exc.exit_code
    except (OSError, json.JSONDecodeError, KeyError, ValueError) as exc:
        _fail(type(exc).__name__, str(exc))
        return 2
    except AssertionError as exc:
        _fail(InvariantViolation.code, str(exc))
        return 3


def _fail(code: str, message: str) -> None:
    sys.stderr.write(json.dumps({"error": code, "message": message}) + "\n")


if __name__ == "__main__":
    raise SystemExit(main())
