"""Command-line entry points.

``egbench run`` executes a JSON experiment config; ``egbench attack``
assembles a single-attack experiment from flags; ``egbench oracle
shapley`` prints exact Shapley attributions for one sample (a test
utility, exponential in the feature count). Exit codes: 0 success,
2 configuration error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import json
import sys

from .explain import exact_shapley
from .harness import (
    ConfigError,
    build_dataset,
    emit_report,
    load_config,
    parse_config,
    run_experiment,
)
from .models import load_weights


def _parse_kv_spec(body: str, context: str) -> dict:
    out = {}
    for part in body.split(","):
        if not part:
            continue
        if "=" not in part:
            raise ConfigError(f"{context}: expected key=value, got {part!r}")
        key, value = part.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def _parse_dataset_arg(text: str) -> dict:
    if text.startswith("synthetic:"):
        kv = _parse_kv_spec(text[len("synthetic:"):], "synthetic dataset")
        spec = {"kind": "synthetic"}
        for key in ("d", "classes", "n_per_class", "seed"):
            if key in kv:
                spec[key] = int(kv.pop(key))
        if "separation" in kv:
            spec["separation"] = float(kv.pop("separation"))
        if kv:
            raise ConfigError(f"synthetic dataset: unknown keys {sorted(kv)}")
        return spec
    if text.startswith("idx:"):
        parts = text[len("idx:"):].split(",")
        if len(parts) != 2:
            raise ConfigError("idx dataset spec is idx:IMAGES_PATH,LABELS_PATH")
        return {"kind": "idx", "images": parts[0], "labels": parts[1]}
    if text.startswith("csv:"):
        parts = text[len("csv:"):].split(",")
        if len(parts) != 2:
            raise ConfigError("csv dataset spec is csv:PATH,LABEL_COLUMN")
        return {"kind": "csv", "path": parts[0], "label_column": parts[1]}
    raise ConfigError(f"unknown dataset spec {text!r} (use synthetic:, idx:, or csv:)")


def _parse_model_arg(text: str) -> dict:
    if text.startswith("fixture:"):
        kv = _parse_kv_spec(text[len("fixture:"):], "fixture model")
        spec = {"kind": "fixture"}
        if "hidden" in kv:
            spec["hidden"] = [int(h) for h in kv.pop("hidden").split("x")]
        for key in ("epochs", "seed"):
            if key in kv:
                spec[key] = int(kv.pop(key))
        if "lr" in kv:
            spec["lr"] = float(kv.pop("lr"))
        if kv:
            raise ConfigError(f"fixture model: unknown keys {sorted(kv)}")
        return spec
    return {"kind": "weights", "path": text}


def _run_and_emit(cfg) -> int:
    if cfg.output_dir is None:
        raise ConfigError("no output directory: set output_dir in the config or pass --out")
    report = run_experiment(cfg)
    paths = emit_report(report, cfg.output_dir)
    for block in report.attacks:
        print(f"{block['name']} {block['norm']} eps={block['eps']}: "
              f"initial={_fmt(block['initial_evasion_rate'])} "
              f"eg={_fmt(block['eg_evasion_rate'])} "
              f"pert_change={_fmt(block['avg_perturbation_change'])}")
    print(f"report written to {paths['report']}")
    return 0


def _fmt(value) -> str:
    return "n/a" if value is None else f"{value:.4f}"


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    if args.out is not None:
        cfg.output_dir = args.out
    return _run_and_emit(cfg)


def _cmd_attack(args) -> int:
    doc = {
        "dataset": _parse_dataset_arg(args.dataset),
        "model": _parse_model_arg(args.model),
        "attacks": [{"name": args.attack, "norm": args.norm, "eps": args.eps}],
        "runs": args.runs,
        "seed": args.seed,
        "workers": args.workers,
        "output_dir": args.out,
    }
    if args.samples is not None:
        doc["sample_count"] = args.samples
    return _run_and_emit(parse_config(doc))


def _cmd_oracle_shapley(args) -> int:
    model = load_weights(args.model)
    dataset = build_dataset(_parse_dataset_arg(args.dataset))
    if not (0 <= args.sample_index < dataset.n):
        raise ConfigError(f"sample index {args.sample_index} out of range "
                          f"[0, {dataset.n})")
    x = dataset.sample(args.sample_index)
    y = dataset.label(args.sample_index)
    explanation = exact_shapley(model, x, y, masking_baseline=args.baseline)
    print(json.dumps({
        "sample_index": args.sample_index,
        "label": y,
        "weights": explanation.weights.tolist(),
        "intercept": explanation.intercept,
    }, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="egbench",
                                     description="Explanation-guided evasion benchmark")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment config")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out", default=None, help="override the config's output_dir")
    p_run.set_defaults(handler=_cmd_run)

    p_attack = sub.add_parser("attack", help="run one attack assembled from flags")
    p_attack.add_argument("--attack", required=True)
    p_attack.add_argument("--norm", default="linf")
    p_attack.add_argument("--eps", type=float, default=0.3)
    p_attack.add_argument("--dataset", required=True,
                          help="synthetic:k=v,... | idx:IMAGES,LABELS | csv:PATH,LABEL")
    p_attack.add_argument("--model", required=True,
                          help="weights.json path or fixture:hidden=32x32,epochs=50,...")
    p_attack.add_argument("--seed", type=int, default=0)
    p_attack.add_argument("--runs", type=int, default=1)
    p_attack.add_argument("--out", required=True)
    p_attack.add_argument("--workers", type=int, default=1)
    p_attack.add_argument("--samples", type=int, default=None,
                          help="limit the number of samples")
    p_attack.set_defaults(handler=_cmd_attack)

    p_oracle = sub.add_parser("oracle", help="test oracles")
    oracle_sub = p_oracle.add_subparsers(dest="oracle_kind", required=True)
    p_shap = oracle_sub.add_parser("shapley", help="exact Shapley values for one sample")
    p_shap.add_argument("--model", required=True, help="weights.json path")
    p_shap.add_argument("--dataset", required=True)
    p_shap.add_argument("--sample-index", type=int, required=True)
    p_shap.add_argument("--baseline", type=float, default=0.0)
    p_shap.set_defaults(handler=_cmd_oracle_shapley)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failures map to a distinct exit code
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
