"""Command-line entry point.

Subcommands: attack, grid, transfer, correlate, train-ref, eval, plus the
utility commands make-corpus (procedural desk corpus) and logits (score a
single PNG; this is also the loopback command used as an external-adapter
target).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import corpus as corpus_mod
from . import harness
from .classifier import ReferenceClassifier, load_weights, save_weights, train_reference


def _parse_attack_params(pairs: list[str]) -> dict:
    params = {}
    for pair in pairs:
        if "=" not in pair:
            raise SystemExit(f"--param expects key=value, got {pair!r}")
        key, value = pair.split("=", 1)
        try:
            parsed = json.loads(value)
        except json.JSONDecodeError:
            parsed = value
        params[key] = parsed
    return params


def _cmd_attack(args) -> int:
    overrides = {}
    for key in ("corpus_dir", "depth_dir", "attack", "classifier", "output_dir",
                "synthetic_depth", "model_id", "seed", "parallelism", "max_images"):
        value = getattr(args, key)
        if value is not None:
            overrides[key] = value
    if args.param:
        overrides["attack_params"] = _parse_attack_params(args.param)
    if args.config:
        cfg = harness.RunConfig.from_json(args.config, overrides)
    else:
        missing = [k for k in ("corpus_dir", "attack", "classifier", "output_dir")
                   if k not in overrides]
        if missing:
            raise SystemExit(f"missing required flags (or --config): {missing}")
        cfg = harness.RunConfig(**overrides)
    run_dir = harness.run_attack_batch(cfg)
    summary = json.loads((run_dir / "summary.json").read_text())
    print(f"run written to {run_dir}")
    print(f"  images:                    {summary['n_images']} "
          f"({summary['n_failures']} failures)")
    print(f"  success rate (overall):    {summary['success_rate_overall']:.4f}")
    sr_ic = summary["success_rate_initially_correct"]
    print(f"  success rate (init-corr.): "
          f"{'n/a' if sr_ic is None else f'{sr_ic:.4f}'}")
    return 0


def _cmd_grid(args) -> int:
    a_values = [float(v) for v in args.a_values.split(",")]
    b_values = [float(v) for v in args.b_values.split(",")]
    out = harness.emit_haze_grid(args.image, args.depth, a_values, b_values,
                                 args.out, synthetic_kind=args.synthetic_depth)
    print(f"grid written to {out}")
    return 0


def _cmd_transfer(args) -> int:
    specs = harness.load_adapter_specs(args.adapters)
    table = harness.transfer_report(args.runs, specs, args.out_csv, args.out_json)
    print(table.to_csv(), end="")
    if table.errors:
        print(f"note: {sum(len(v) for v in table.errors.values())} cell(s) absent "
              "due to adapter errors (see JSON output)", file=sys.stderr)
    return 0


def _cmd_correlate(args) -> int:
    labels, matrix = harness.correlation_report(args.runs, args.out_csv, args.out_png)
    print(harness.metrics.correlation_to_csv(labels, matrix), end="")
    return 0


def _cmd_train_ref(args) -> int:
    items = corpus_mod.load_corpus(args.corpus_dir)
    if args.max_images is not None:
        items = items[:args.max_images]
    examples = corpus_mod.load_examples(items)
    report = train_reference(examples, seed=args.seed, epochs=args.epochs,
                             lr=args.lr, batch_size=args.batch_size,
                             input_size=args.input_size, lr_decay=args.lr_decay)
    save_weights(report.weights, args.out)
    print(f"trained on {len(examples)} images; "
          f"final training accuracy {report.final_train_accuracy:.4f}")
    print(f"weights written to {args.out}")
    return 0


def _cmd_eval(args) -> int:
    clf = ReferenceClassifier(load_weights(args.weights),
                              model_id=Path(args.weights).stem)
    report = harness.evaluate_corpus(args.corpus_dir, clf, args.max_images)
    print(f"accuracy of {report['model_id']} on {report['n_images']} images: "
          f"{report['accuracy']:.4f}")
    if args.out:
        Path(args.out).write_text(json.dumps(report, indent=2, sort_keys=True))
        print(f"report written to {args.out}")
    return 0


def _cmd_make_corpus(args) -> int:
    items = corpus_mod.make_corpus(args.out, args.per_class, seed=args.seed,
                                   size=args.size)
    print(f"wrote {len(items)} images ({args.per_class} per class) to {args.out}")
    return 0


def _cmd_logits(args) -> int:
    clf = ReferenceClassifier(load_weights(args.weights))
    print(json.dumps(list(clf.logits_for_file(args.image))))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hazeattack",
        description="Haze synthesis, haze-parameter attacks, and evaluation tools")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("attack", help="run a batch attack over a corpus")
    p.add_argument("--config", help="JSON run config (flags override its fields)")
    p.add_argument("--corpus-dir", dest="corpus_dir")
    p.add_argument("--depth-dir", dest="depth_dir")
    p.add_argument("--attack", choices=harness.ATTACK_NAMES)
    p.add_argument("--weights", dest="classifier")
    p.add_argument("--out", dest="output_dir")
    p.add_argument("--synthetic-depth", dest="synthetic_depth",
                   help="fallback depth kind when no PFM matches an image")
    p.add_argument("--model-id", dest="model_id")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--parallelism", type=int, default=None)
    p.add_argument("--max-images", dest="max_images", type=int, default=None)
    p.add_argument("--param", action="append", default=[],
                   help="attack parameter override, key=value (repeatable)")
    p.set_defaults(func=_cmd_attack)

    p = sub.add_parser("grid", help="render a homogeneous-haze parameter grid")
    p.add_argument("--image", required=True)
    p.add_argument("--depth", default=None, help="PFM depth map (optional)")
    p.add_argument("--a-values", dest="a_values", default="0.8,0.9,1.0")
    p.add_argument("--b-values", dest="b_values", default="0.05,0.10,0.15,0.20")
    p.add_argument("--synthetic-depth", dest="synthetic_depth", default="v-ramp")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_grid)

    p = sub.add_parser("transfer", help="evaluate saved runs under external models")
    p.add_argument("--runs", nargs="+", required=True)
    p.add_argument("--adapters", required=True,
                   help="JSON list of adapter specs: [{id, command, n_classes}]")
    p.add_argument("--out-csv", dest="out_csv", required=True)
    p.add_argument("--out-json", dest="out_json", required=True)
    p.set_defaults(func=_cmd_transfer)

    p = sub.add_parser("correlate", help="IoU correlation matrix of saved runs")
    p.add_argument("--runs", nargs="+", required=True)
    p.add_argument("--out-csv", dest="out_csv", required=True)
    p.add_argument("--out-png", dest="out_png", default=None)
    p.set_defaults(func=_cmd_correlate)

    p = sub.add_parser("train-ref", help="train the reference CNN on a corpus")
    p.add_argument("--corpus-dir", dest="corpus_dir", required=True)
    p.add_argument("--out", required=True, help="weight file to write")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=60)
    p.add_argument("--lr", type=float, default=0.03)
    p.add_argument("--lr-decay", dest="lr_decay", type=float, default=0.08)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=16)
    p.add_argument("--input-size", dest="input_size", type=int, default=32)
    p.add_argument("--max-images", dest="max_images", type=int, default=None)
    p.set_defaults(func=_cmd_train_ref)

    p = sub.add_parser("eval", help="clean accuracy of a weight file on a corpus")
    p.add_argument("--corpus-dir", dest="corpus_dir", required=True)
    p.add_argument("--weights", required=True)
    p.add_argument("--max-images", dest="max_images", type=int, default=None)
    p.add_argument("--out", default=None, help="optional JSON report path")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("make-corpus", help="generate the procedural desk corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--per-class", dest="per_class", type=int, default=30)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--size", type=int, default=64)
    p.set_defaults(func=_cmd_make_corpus)

    p = sub.add_parser("logits", help="print JSON class scores for one PNG")
    p.add_argument("--weights", required=True)
    p.add_argument("image")
    p.set_defaults(func=_cmd_logits)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
