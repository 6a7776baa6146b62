"""Command-line entry point: ``xai-idps <command> [flags]``.

Settings come from built-in defaults, then an optional YAML ``--config``
file, then explicit flags.  Every artifact is written under ``--out`` and
carries the fingerprint of the effective configuration.

Exit codes: 0 ok, 2 configuration or validation error, 3 missing
prerequisite artifact, 4 internal invariant violation.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Sequence

import numpy as np
import yaml

from . import attribution, idps_sim, synth, zero_day_eval
from .data_ingest import (
    EncoderSpec,
    RawTable,
    apply_encoder,
    fit_encoder,
    load_nslkdd,
    load_unsw,
    stratified_split,
    summarize,
)
from .errors import InvariantViolation, MissingArtifact, ValidationError
from .learners import MODEL_NAMES, from_document, predict_labels, to_document, train_model

log = logging.getLogger("xai_idps")

EXIT_OK, EXIT_CONFIG, EXIT_MISSING, EXIT_INVARIANT = 0, 2, 3, 4
COMMANDS = ("ingest", "train", "explain", "select", "ablate", "zeroday", "simulate", "report", "sample")


_INT_KEYS = ("k", "seed", "budget", "background", "n_permutations", "repetitions", "nodes", "events", "rows")


@dataclass
class RunConfig:
    dataset: str | None = None
    dataset_kind: str = "auto"
    model: str = "random_subspace"
    models: object = field(default_factory=lambda: list(MODEL_NAMES))
    target: str = "binary"
    k: int = 15
    tau: float | None = None
    seed: int = 0
    budget: int = 200
    background: int = 100
    n_permutations: int = 10
    test_fraction: float = 0.3
    repetitions: int = 5
    selection_model: str = "random_subspace"
    known: list = field(default_factory=lambda: ["Normal", "DoS", "Fuzzers"])
    unseen: str = "Backdoor"
    features: str = "selected"
    max_false_alarm: float = 0.10
    nodes: int = 3
    feed: str | None = None
    events: int = 100
    rows: int = 28000
    out: str = "out"

    def __post_init__(self):
        for name in _INT_KEYS:
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int):
                raise ValidationError(f"{name} must be an integer, got {value!r}")
        for name in ("test_fraction", "max_false_alarm") + (("tau",) if self.tau is not None else ()):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ValidationError(f"{name} must be a number, got {value!r}")
        for name in ("dataset", "feed"):
            if getattr(self, name) is not None and not isinstance(getattr(self, name), str):
                raise ValidationError(f"{name} must be a path")
        if not isinstance(self.known, list) or not all(isinstance(c, str) for c in self.known):
            raise ValidationError("known must be a list of class names")
        if not isinstance(self.models, (list, dict)):
            raise ValidationError("models must be a list of names or a mapping of name to hyperparameters")
        if self.dataset_kind not in ("auto", "unsw", "nslkdd"):
            raise ValidationError("dataset_kind must be auto, unsw or nslkdd")
        if self.target not in ("binary", "multiclass"):
            raise ValidationError("target must be binary or multiclass")
        if self.features not in ("selected", "all"):
            raise ValidationError("features must be selected or all")
        if self.model not in MODEL_NAMES:
            raise ValidationError(f"unknown model {self.model!r}")
        zero_day_eval.normalize_models(self.models)
        if self.k < 1:
            raise ValidationError("k must be >= 1")
        if self.tau is not None and not 0.0 <= self.tau <= 1.0:
            raise ValidationError("tau must lie in [0, 1]")

    @classmethod
    def build(cls, file_values: dict | None = None, overrides: dict | None = None) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        merged = {}
        for source in (file_values or {}, overrides or {}):
            unknown = sorted(set(source) - known)
            if unknown:
                raise ValidationError(f"unknown configuration keys: {', '.join(unknown)}")
            merged.update({k: v for k, v in source.items() if v is not None})
        return cls(**merged)

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def fingerprint(self) -> str:
        # the output location does not change results
        return zero_day_eval.fingerprint({k: v for k, v in self.to_dict().items() if k != "out"})


def load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            doc = yaml.safe_load(fh)
    except OSError as exc:
        raise ValidationError(f"cannot read config {path}: {exc.strerror}") from None
    except yaml.YAMLError as exc:
        raise ValidationError(f"config {path} is not valid YAML: {exc}") from None
    if doc is None:
        return {}
    if not isinstance(doc, dict):
        raise ValidationError("config file must hold a mapping of keys to values")
    return doc


# --------------------------------------------------------------------------
# helpers


def _out(cfg: RunConfig) -> Path:
    path = Path(cfg.out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_json(path: Path, doc: dict, cfg: RunConfig) -> None:
    doc = {**doc, "fingerprint": cfg.fingerprint}
    path.write_text(json.dumps(doc, indent=1, sort_keys=True, default=_jsonable) + "\n", encoding="utf-8")


def _jsonable(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _read_json(path: Path, made_by: str) -> dict:
    if not path.exists():
        raise MissingArtifact(f"{path} not found; run '{made_by}' first")
    return json.loads(path.read_text(encoding="utf-8"))


def _detect_kind(path: str) -> str:
    with open(path, encoding="utf-8") as fh:
        first = fh.readline()
    return "unsw" if "attack_cat" in first else "nslkdd"


def load_dataset(cfg: RunConfig) -> RawTable:
    if not cfg.dataset:
        raise ValidationError("no dataset given (use --dataset or the 'dataset' config key)")
    if not Path(cfg.dataset).is_file():
        raise ValidationError(f"dataset {cfg.dataset} does not exist")
    kind = cfg.dataset_kind if cfg.dataset_kind != "auto" else _detect_kind(cfg.dataset)
    return load_unsw(cfg.dataset) if kind == "unsw" else load_nslkdd(cfg.dataset, categories=True)


def _targets(cfg: RunConfig, X) -> np.ndarray:
    return zero_day_eval.binary_targets(X) if cfg.target == "binary" else np.asarray(X.labels)


def _prepared(cfg: RunConfig):
    table = load_dataset(cfg)
    train_t, test_t = stratified_split(table, cfg.test_fraction, cfg.seed)
    return train_t, test_t


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


# --------------------------------------------------------------------------
# commands


def cmd_ingest(cfg: RunConfig) -> dict:
    summary = summarize(load_dataset(cfg))
    _write_json(_out(cfg) / "summary.json", summary, cfg)
    return summary


def cmd_train(cfg: RunConfig) -> dict:
    train_t, test_t = _prepared(cfg)
    encoder = fit_encoder(train_t)
    A, B = apply_encoder(train_t, encoder), apply_encoder(test_t, encoder)
    model = train_model(cfg.model, A, _targets(cfg, A), seed=cfg.seed)
    truth = _targets(cfg, B)
    cm = zero_day_eval.ConfusionMatrix.from_labels(truth, predict_labels(model, B))
    out = _out(cfg)
    _write_json(out / "encoder.json", encoder.to_dict(), cfg)
    _write_json(out / "model.json", to_document(model), cfg)
    metrics = {"model": cfg.model, "target": cfg.target, "train_rows": len(A), "test_rows": len(B),
               "accuracy": zero_day_eval.accuracy(cm), "confusion": cm.to_dict()}
    _write_json(out / "metrics.json", metrics, cfg)
    return metrics


def _load_trained(cfg: RunConfig):
    out = Path(cfg.out)
    encoder = EncoderSpec.from_dict(_read_json(out / "encoder.json", "train"))
    model = from_document(_read_json(out / "model.json", "train"))
    return encoder, model


def cmd_explain(cfg: RunConfig) -> dict:
    encoder, model = _load_trained(cfg)
    train_t, _ = _prepared(cfg)
    A = apply_encoder(train_t, encoder)
    if model.n_features != len(A.feature_names):
        raise ValidationError("trained model does not match the dataset's encoded width")
    mode = attribution.ANOMALY if cfg.target == "binary" else attribution.PATTERN
    bg = attribution.make_background(A, cfg.background, cfg.seed)
    explanations = attribution.explain_dataset(model, A, bg, mode, cfg.budget, cfg.seed, cfg.n_permutations)
    for e in explanations:
        if abs(e.residual) > 1e-6:
            raise InvariantViolation(f"attributions of row {e.row} do not add up (residual {e.residual})")
    ranking = attribution.rank_features(explanations, A.feature_names, A.feature_sources, mode)
    out = _out(cfg)
    _write_json(out / "explanations.json", json.loads(attribution.explanations_to_json(explanations, A.feature_names)), cfg)
    _write_json(out / "ranking.json", ranking.to_dict(), cfg)
    rows = [[n, repr(float(v)), cfg.fingerprint] for n, v in ranking.items]
    (out / "ranking.csv").write_text(_csv_text(["feature", "mean_abs_shap", "fingerprint"], rows), encoding="utf-8")
    return {"explained": len(explanations), "mode": mode, "top": ranking.names[: cfg.k]}


def _ranking_from(doc: dict) -> attribution.FeatureRanking:
    return attribution.FeatureRanking(doc["mode"], tuple((r["feature"], float(r["mean_abs_shap"])) for r in doc["ranking"]))


def cmd_select(cfg: RunConfig) -> dict:
    ranking = _ranking_from(_read_json(Path(cfg.out) / "ranking.json", "explain"))
    top = attribution.select_top_k(ranking, cfg.k)
    values = dict(ranking.items)
    out = _out(cfg)
    rows = [[i + 1, name, repr(values[name]), cfg.fingerprint] for i, name in enumerate(top)]
    (out / "selected.csv").write_text(_csv_text(["rank", "feature", "mean_abs_shap", "fingerprint"], rows),
                                      encoding="utf-8")
    doc = {"k": cfg.k, "mode": ranking.mode, "selected": top}
    _write_json(out / "selected.json", doc, cfg)
    return doc


def cmd_ablate(cfg: RunConfig) -> dict:
    report = zero_day_eval.run_ablation(
        load_dataset(cfg), cfg.models, k=cfg.k, seed=cfg.seed, budget=cfg.budget,
        test_fraction=cfg.test_fraction, background=cfg.background, n_permutations=cfg.n_permutations,
        repetitions=cfg.repetitions, selection_model=cfg.selection_model, target=cfg.target)
    report.fingerprint = cfg.fingerprint
    out = _out(cfg)
    _write_json(out / "ablation.json", report.to_dict(), cfg)
    (out / "fig7_accuracy.csv").write_text(report.fig7_csv(), encoding="utf-8")
    (out / "fig8_ablation.csv").write_text(report.fig8_csv(), encoding="utf-8")
    return report.to_dict(timing=False)


def cmd_zeroday(cfg: RunConfig) -> dict:
    attributes = None
    if cfg.features == "selected":
        attributes = _read_json(Path(cfg.out) / "selected.json", "select")["selected"]
    split = zero_day_eval.build_openset_split(load_dataset(cfg), cfg.known, cfg.unseen, cfg.test_fraction, cfg.seed)
    models = zero_day_eval.normalize_models(cfg.models)
    if cfg.model not in models:
        models[cfg.model] = {}
    report, fitted = zero_day_eval.evaluate_openset(split, cfg.tau, models, cfg.seed, attributes,
                                                    max_false_alarm=cfg.max_false_alarm, return_models=True)
    report.fingerprint = cfg.fingerprint
    out = _out(cfg)
    _write_json(out / "zeroday.json", report.to_dict(), cfg)
    (out / "fig6_detection.csv").write_text(report.fig6_csv(), encoding="utf-8")
    detector = idps_sim.Detector.from_models(fitted[cfg.model])
    _write_json(out / "detector.json", detector.to_dict(), cfg)
    return report.to_dict()


def cmd_simulate(cfg: RunConfig) -> dict:
    out = Path(cfg.out)
    detector = idps_sim.Detector.from_dict(_read_json(out / "detector.json", "zeroday"))
    if cfg.feed:
        if not Path(cfg.feed).is_file():
            raise ValidationError(f"feed {cfg.feed} does not exist")
        feeds = idps_sim.load_feed(cfg.feed)
    else:
        feeds = idps_sim.events_from_table(load_dataset(cfg), cfg.events, cfg.seed)
    summary = idps_sim.run_simulation(feeds, detector, cfg.nodes, cfg.tau, _out(cfg) / "alerts.jsonl",
                                      config_fingerprint=cfg.fingerprint)
    _write_json(out / "simulation.json", summary.to_dict(), cfg)
    return summary.to_dict()


def cmd_report(cfg: RunConfig) -> dict:
    out = Path(cfg.out)
    parts = {}
    for name in ("summary", "metrics", "selected", "ablation", "zeroday", "simulation"):
        path = out / f"{name}.json"
        if path.exists():
            parts[name] = json.loads(path.read_text(encoding="utf-8"))
    if "ablation" not in parts and "zeroday" not in parts:
        raise MissingArtifact(f"no ablation.json or zeroday.json in {out}; run 'ablate' or 'zeroday' first")
    doc = {"config": cfg.to_dict(), **parts}
    _write_json(_out(cfg) / "report.json", doc, cfg)
    return {"sections": sorted(parts)}


def cmd_sample(cfg: RunConfig) -> dict:
    out = _out(cfg)
    unsw = out / "unsw_sample.csv"
    kdd = out / "nslkdd_sample.txt"
    synth.write_unsw(unsw, n_rows=cfg.rows, seed=cfg.seed)
    synth.write_nslkdd(kdd, seed=cfg.seed)
    doc = {"unsw": str(unsw), "nslkdd": str(kdd), "rows": cfg.rows}
    _write_json(out / "sample.json", doc, cfg)
    return doc


HANDLERS = {
    "ingest": cmd_ingest, "train": cmd_train, "explain": cmd_explain, "select": cmd_select,
    "ablate": cmd_ablate, "zeroday": cmd_zeroday, "simulate": cmd_simulate, "report": cmd_report,
    "sample": cmd_sample,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="xai-idps", description="Explainable zero-day intrusion detection pipeline.")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", help="YAML file of configuration keys")
    parser.add_argument("--dataset", help="UNSW-NB15 CSV or NSL-KDD text file")
    parser.add_argument("--model", choices=MODEL_NAMES, help="learner to train (also narrows the model list)")
    parser.add_argument("--k", type=int, help="number of attributes to keep")
    parser.add_argument("--tau", type=float, help="novelty threshold; omitted means calibrate")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--out", help="output directory")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    overrides = {"dataset": args.dataset, "k": args.k, "tau": args.tau, "seed": args.seed, "out": args.out}
    if args.model:
        overrides["model"] = args.model
        overrides["models"] = [args.model]
    try:
        cfg = RunConfig.build(load_config_file(args.config), overrides)
        result = HANDLERS[args.command](cfg)
    except MissingArtifact as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except InvariantViolation as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(json.dumps(result, indent=1, sort_keys=True, default=_jsonable))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
