"""Batch experiment orchestration.

Parses a strict JSON experiment config, loads (or trains) the model and
dataset, and runs baseline attack -> explanation -> boost per correctly
classified sample, optionally repeating the explanation+boost stage k
times to measure stability. Per-sample randomness is keyed by
(master seed, run id, sample index, stage), so results are byte-identical
across repeat runs and worker counts.
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .attacks import ATTACKS, AttackConfig, AttackResult, norm_name
from .boost import BoostConfig, eg_boost
from .data import Dataset, load_csv, load_idx, make_synthetic
from .explain import ExplainerConfig, kernel_explain
from .metrics import RunTrace, avg_perturbation_change, k_stability, kl_stability
from .models import (
    FixtureSpec,
    ModelHandle,
    evaluate_accuracy,
    load_weights,
    predict,
    predict_batch,
    train_fixture,
)
from .rng import stable_seed

REPORT_VERSION = 1


class ConfigError(ValueError):
    """Invalid experiment configuration (CLI exit code 2)."""


class ExperimentError(RuntimeError):
    """Failure during a run, attributed to (sample_index, stage)."""


def _require_keys(entry: dict, allowed: set[str], required: set[str], context: str):
    unknown = set(entry) - allowed
    if unknown:
        raise ConfigError(f"{context}: unknown keys {sorted(unknown)}")
    missing = required - set(entry)
    if missing:
        raise ConfigError(f"{context}: missing keys {sorted(missing)}")


_BOOST_OPTION_KEYS = ("max_iter", "delta_scale", "reduction_factor", "scan_order", "delta_policy")
_EXPLAINER_KEYS = ("num_coalitions", "masking_baseline", "kernel")


@dataclass
class ExperimentConfig:
    """Validated experiment description; see ``load_config``."""

    dataset: dict
    model: dict
    attacks: list[tuple[str, AttackConfig]]
    explainer: ExplainerConfig = ExplainerConfig()
    boost_options: dict = field(default_factory=dict)
    runs: int = 1
    kl_top_l: int = 10
    sample_count: int | None = None
    seed: int = 0
    workers: int = 1
    output_dir: str | None = None
    strict: bool = True

    def __post_init__(self):
        if self.runs < 1:
            raise ConfigError("runs must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.kl_top_l < 1:
            raise ConfigError("kl_top_l must be >= 1")


_TOP_LEVEL_KEYS = {"dataset", "model", "attacks", "explainer", "boost", "runs",
                   "kl_top_l", "sample_count", "seed", "workers", "output_dir", "strict"}


def parse_config(doc: dict) -> ExperimentConfig:
    """Build an ExperimentConfig from a parsed JSON document; unknown keys
    anywhere are errors to protect against silent typos."""
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a JSON object")
    _require_keys(doc, _TOP_LEVEL_KEYS, {"dataset", "model", "attacks"}, "config")

    dataset = _validate_dataset_spec(doc["dataset"])
    model = _validate_model_spec(doc["model"])

    raw_attacks = doc["attacks"]
    if isinstance(raw_attacks, dict):
        raw_attacks = [raw_attacks]
    if not isinstance(raw_attacks, list) or not raw_attacks:
        raise ConfigError("attacks must be a non-empty list")
    attack_field_names = {f.name for f in fields(AttackConfig)}
    attacks = []
    for k, entry in enumerate(raw_attacks):
        if not isinstance(entry, dict) or "name" not in entry:
            raise ConfigError(f"attacks[{k}]: each attack needs a 'name'")
        name = entry["name"]
        if name not in ATTACKS:
            raise ConfigError(f"attacks[{k}]: unknown attack {name!r}, "
                              f"expected one of {sorted(ATTACKS)}")
        params = {key: value for key, value in entry.items() if key != "name"}
        unknown = set(params) - attack_field_names
        if unknown:
            raise ConfigError(f"attacks[{k}] ({name}): unknown keys {sorted(unknown)}")
        try:
            attacks.append((name, AttackConfig(**params)))
        except ValueError as exc:
            raise ConfigError(f"attacks[{k}] ({name}): {exc}") from exc

    explainer_doc = doc.get("explainer", {})
    _require_keys(explainer_doc, set(_EXPLAINER_KEYS), set(), "explainer")
    try:
        explainer = ExplainerConfig(**explainer_doc)
    except ValueError as exc:
        raise ConfigError(f"explainer: {exc}") from exc

    boost_doc = doc.get("boost", {})
    _require_keys(boost_doc, set(_BOOST_OPTION_KEYS), set(), "boost")

    try:
        return ExperimentConfig(
            dataset=dataset,
            model=model,
            attacks=attacks,
            explainer=explainer,
            boost_options=dict(boost_doc),
            runs=int(doc.get("runs", 1)),
            kl_top_l=int(doc.get("kl_top_l", 10)),
            sample_count=doc.get("sample_count"),
            seed=int(doc.get("seed", 0)),
            workers=int(doc.get("workers", 1)),
            output_dir=doc.get("output_dir"),
            strict=bool(doc.get("strict", True)),
        )
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    return parse_config(doc)


def _require_file(path, context: str):
    if not Path(path).is_file():
        raise ConfigError(f"{context}: referenced file {path} does not exist")


def _validate_dataset_spec(spec: dict) -> dict:
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ConfigError("dataset spec needs a 'kind'")
    kind = spec["kind"]
    if kind == "synthetic":
        _require_keys(spec, {"kind", "seed", "d", "n_per_class", "classes", "separation"},
                      {"kind", "d", "classes"}, "dataset(synthetic)")
    elif kind == "idx":
        _require_keys(spec, {"kind", "images", "labels"}, {"kind", "images", "labels"},
                      "dataset(idx)")
        _require_file(spec["images"], "dataset(idx)")
        _require_file(spec["labels"], "dataset(idx)")
    elif kind == "csv":
        _require_keys(spec, {"kind", "path", "label_column", "lb", "ub"},
                      {"kind", "path", "label_column"}, "dataset(csv)")
        _require_file(spec["path"], "dataset(csv)")
    else:
        raise ConfigError(f"unknown dataset kind {kind!r}")
    return dict(spec)


def _validate_model_spec(spec: dict) -> dict:
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ConfigError("model spec needs a 'kind'")
    kind = spec["kind"]
    if kind == "weights":
        _require_keys(spec, {"kind", "path"}, {"kind", "path"}, "model(weights)")
        _require_file(spec["path"], "model(weights)")
    elif kind == "fixture":
        _require_keys(spec, {"kind", "hidden", "epochs", "lr", "seed"}, {"kind"},
                      "model(fixture)")
    else:
        raise ConfigError(f"unknown model kind {kind!r}")
    return dict(spec)


def build_dataset(spec: dict) -> Dataset:
    kind = spec["kind"]
    if kind == "synthetic":
        return make_synthetic(seed=int(spec.get("seed", 0)), d=int(spec["d"]),
                              n_per_class=int(spec.get("n_per_class", 50)),
                              classes=int(spec["classes"]),
                              separation=float(spec.get("separation", 6.0)))
    if kind == "idx":
        return load_idx(spec["images"], spec["labels"])
    return load_csv(spec["path"], spec["label_column"],
                    lb=float(spec.get("lb", 0.0)), ub=float(spec.get("ub", 1.0)))


def build_model(spec: dict, dataset: Dataset) -> tuple[ModelHandle, dict]:
    if spec["kind"] == "weights":
        model = load_weights(spec["path"])
        if model.input_dim != dataset.d:
            raise ConfigError(f"model input_dim {model.input_dim} != dataset dim {dataset.d}")
        return model, {"kind": "weights", "path": str(spec["path"])}
    hidden = tuple(int(h) for h in spec.get("hidden", (32, 32)))
    num_classes = int(dataset.y.max()) + 1
    fixture = FixtureSpec(dataset.d, num_classes, hidden)
    epochs = int(spec.get("epochs", 50))
    lr = float(spec.get("lr", 0.1))
    seed = int(spec.get("seed", 0))
    model = train_fixture(fixture, dataset, epochs=epochs, lr=lr, seed=seed)
    info = {"kind": "fixture", "hidden": list(hidden), "epochs": epochs, "lr": lr,
            "seed": seed, "train_accuracy": evaluate_accuracy(model, dataset)}
    return model, info


@dataclass
class SampleOutcome:
    index: int
    baseline: AttackResult
    runs: list  # (ExplanationVector, BoostRecord, post_label) per run
    elapsed_seconds: float


def _process_sample(model: ModelHandle, dataset: Dataset, index: int, name: str,
                    attack_cfg: AttackConfig, cfg: ExperimentConfig) -> SampleOutcome:
    started = time.perf_counter()
    x = dataset.sample(index)
    y = dataset.label(index)
    stage = f"attack:{name}"
    try:
        per_sample = replace(attack_cfg, seed=stable_seed(cfg.seed, 0, index, stage))
        baseline = ATTACKS[name](model, x, y, per_sample)
        run_outputs = []
        for run_id in range(cfg.runs):
            stage = "explain"
            explainer = replace(cfg.explainer, seed=stable_seed(cfg.seed, run_id, index, stage))
            explanation = kernel_explain(model, x, y, explainer)
            stage = "boost"
            boost_cfg = BoostConfig(norm=attack_cfg.norm, eps=attack_cfg.eps,
                                    seed=stable_seed(cfg.seed, run_id, index, stage),
                                    **cfg.boost_options)
            record = eg_boost(model, x, baseline.x_adv, explanation, boost_cfg)
            post_label = predict(model, record.x_boost)
            run_outputs.append((explanation, record, post_label))
    except Exception as exc:
        raise ExperimentError(f"sample {index}, stage {stage}: {exc}") from exc
    return SampleOutcome(index, baseline, run_outputs, time.perf_counter() - started)


def _attack_block(model: ModelHandle, dataset: Dataset, attacked: list[int],
                  name: str, attack_cfg: AttackConfig, cfg: ExperimentConfig,
                  skipped: int) -> tuple[dict, list[dict]]:
    outcomes: dict[int, SampleOutcome] = {}
    errors: list[str] = []

    def work(i: int):
        try:
            return _process_sample(model, dataset, i, name, attack_cfg, cfg)
        except ExperimentError as exc:
            if cfg.strict:
                raise
            return str(exc)

    if cfg.workers == 1:
        results = [work(i) for i in attacked]
    else:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(work, attacked))
    for i, outcome in zip(attacked, results):
        if isinstance(outcome, str):
            errors.append(outcome)
        else:
            outcomes[i] = outcome

    ordered = [outcomes[i] for i in sorted(outcomes)]
    n_attacked = len(ordered)
    total = dataset.n

    block: dict = {
        "name": name,
        "norm": norm_name(attack_cfg.norm),
        "eps": attack_cfg.eps,
        "initial_evasion_rate": None,
        "eg_evasion_rate": None,
        "avg_perturbation_change": None,
        "k_stability": None,
        "kl_stability": None,
        "per_sample_seconds": None,
        "skipped": skipped,
        "denominators": {"attacked": n_attacked, "total": total},
        "rates_vs_total": {"initial": None, "eg": None},
        "pert_change_excluded": 0,
        "delta_policy": cfg.boost_options.get("delta_policy", "probed"),
        "cw_projected": True,
        "errors": errors,
        "config": _attack_config_echo(attack_cfg),
    }
    if name == "mim":
        block["mim_gradient_mode"] = attack_cfg.mim_gradient_mode

    trace_rows: list[dict] = []
    if not ordered:
        return block, trace_rows

    base_success = [o.baseline.success for o in ordered]
    run0 = [o.runs[0][1] for o in ordered]
    n_baseline = [o.baseline.perturbed_count for o in ordered]

    block["initial_evasion_rate"] = float(np.mean(base_success))
    block["eg_evasion_rate"] = float(np.mean([r.success for r in run0]))
    block["rates_vs_total"] = {
        "initial": float(np.sum(base_success)) / total,
        "eg": float(np.sum([r.success for r in run0])) / total,
    }
    block["pert_change_excluded"] = int(sum(1 for nb in n_baseline if nb == 0))
    if block["pert_change_excluded"] < n_attacked:
        block["avg_perturbation_change"] = avg_perturbation_change(run0, n_baseline)
    block["per_sample_seconds"] = float(np.mean([o.elapsed_seconds for o in ordered]))

    if cfg.runs > 1:
        traces = [
            RunTrace(
                run_id=r,
                predictions=tuple(o.runs[r][2] for o in ordered),
                boost_records=tuple(o.runs[r][1] for o in ordered),
                explanations=tuple(o.runs[r][0] for o in ordered),
            )
            for r in range(cfg.runs)
        ]
        block["k_stability"] = k_stability(traces)
        block["kl_stability"] = kl_stability(traces, l=min(cfg.kl_top_l, dataset.d))

    for o in ordered:
        record = o.runs[0][1]
        trace_rows.append({
            "attack": name,
            "norm": block["norm"],
            "sample_index": o.index,
            "baseline_success": int(o.baseline.success),
            "boost_success": int(record.success),
            "N_c": record.n_added,
            "N_nc": record.n_eliminated,
            "N_baseline": o.baseline.perturbed_count,
            "delta_norm": o.baseline.delta_norm,
        })
    return block, trace_rows


def _attack_config_echo(cfg: AttackConfig) -> dict:
    echo = {}
    for f in fields(AttackConfig):
        value = getattr(cfg, f.name)
        if f.name == "norm":
            value = norm_name(value)
        echo[f.name] = value
    return echo


@dataclass
class ExperimentReport:
    """Aggregated results plus the per-sample trace rows used by
    ``emit_report``; only ``version``/``config``/``attacks`` are part of
    the JSON document."""

    version: int
    config: dict
    attacks: list[dict]
    traces: list[list[dict]]

    def to_json_dict(self) -> dict:
        return {"version": self.version, "config": self.config, "attacks": self.attacks}

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True, indent=2)


def run_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    """Execute every attack block of the experiment.

    Samples the model misclassifies outright are skipped: they cannot be
    evaded in any meaningful sense and would inflate every rate. Both the
    attacked and total denominators are reported.
    """
    dataset = build_dataset(cfg.dataset)
    if cfg.sample_count is not None:
        dataset = dataset.take(int(cfg.sample_count))
    model, model_info = build_model(cfg.model, dataset)

    clean_predictions = predict_batch(model, dataset.X)
    attacked = [i for i in range(dataset.n) if clean_predictions[i] == dataset.y[i]]
    skipped = dataset.n - len(attacked)

    blocks, traces = [], []
    for name, attack_cfg in cfg.attacks:
        block, rows = _attack_block(model, dataset, attacked, name, attack_cfg, cfg, skipped)
        blocks.append(block)
        traces.append(rows)

    config_echo = {
        "dataset": cfg.dataset,
        "model": model_info,
        "attacks": [dict(_attack_config_echo(a), name=n) for n, a in cfg.attacks],
        "explainer": {"num_coalitions": cfg.explainer.num_coalitions,
                      "masking_baseline": cfg.explainer.masking_baseline,
                      "kernel": cfg.explainer.kernel},
        "boost": dict(cfg.boost_options),
        "runs": cfg.runs,
        "kl_top_l": cfg.kl_top_l,
        "sample_count": cfg.sample_count,
        "seed": cfg.seed,
        "workers": cfg.workers,
        "strict": cfg.strict,
    }
    return ExperimentReport(REPORT_VERSION, config_echo, blocks, traces)


_SUMMARY_COLUMNS = ("attack", "norm", "eps", "initial_evasion_rate", "eg_evasion_rate",
                    "avg_perturbation_change", "k_stability", "kl_stability",
                    "per_sample_seconds", "skipped", "attacked", "total")
_TRACE_COLUMNS = ("attack", "norm", "sample_index", "baseline_success", "boost_success",
                  "N_c", "N_nc", "N_baseline", "delta_norm")


def emit_report(report: ExperimentReport, out_dir) -> dict[str, Path]:
    """Write report.json, summary.csv (one row per attack block), and the
    per-sample trace.csv. Emission is pure serialization: re-emitting the
    same report produces identical files."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        report_path = out / "report.json"
        report_path.write_text(report.to_json() + "\n")

        summary_path = out / "summary.csv"
        lines = [",".join(_SUMMARY_COLUMNS)]
        for block in report.attacks:
            row = [block["name"], block["norm"], repr(block["eps"]),
                   _csv_cell(block["initial_evasion_rate"]),
                   _csv_cell(block["eg_evasion_rate"]),
                   _csv_cell(block["avg_perturbation_change"]),
                   _csv_cell(block["k_stability"]),
                   _csv_cell(block["kl_stability"]),
                   _csv_cell(block["per_sample_seconds"]),
                   str(block["skipped"]),
                   str(block["denominators"]["attacked"]),
                   str(block["denominators"]["total"])]
            lines.append(",".join(row))
        summary_path.write_text("\n".join(lines) + "\n")

        trace_path = out / "trace.csv"
        lines = [",".join(_TRACE_COLUMNS)]
        for rows in report.traces:
            for row in rows:
                lines.append(",".join(
                    repr(row[c]) if isinstance(row[c], float) else str(row[c])
                    for c in _TRACE_COLUMNS))
        trace_path.write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise ExperimentError(f"cannot write report under {out}: {exc}") from exc
    return {"report": report_path, "summary": summary_path, "trace": trace_path}


def _csv_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)
