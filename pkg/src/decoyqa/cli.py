"""Command-line entry point: ``decoyqa <subcommand> [options]``.

Exit status is 0 on success, 1 on usage errors and 2 on data errors; every
failure prints one ``decoyqa: error: <kind>: <message>`` line on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .dbn import DbnHyperparams, FeatureSetMismatch, ModelFileError, load_model, save_model
from .evaluation import EvaluationError, emit_report, evaluate_scores, rank_dataset
from .features.normalize import FEATURE_SETS, UnknownFeatureError
from .features.physchem import FeatureError
from .pipeline import (
    DataError,
    QaDataset,
    build_dataset,
    build_dataset_from_manifest,
    cross_validate,
    predict_records,
    read_feature_table,
    train_final,
    write_feature_table,
)
from .structure import StructureError, compare_structures, read_pdb

log = logging.getLogger("decoyqa")

SUBCOMMANDS = ("features", "label", "train", "cv", "predict", "rank", "evaluate", "synth")
EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2

_HP_FLAGS = {
    "n1": int, "n2": int, "learning_rate": float, "weight_cost": float,
    "finetune_weight_cost": float, "momentum_switch_epoch": int, "cd_k": int,
    "pretrain_epochs": int, "finetune_max_iters": int, "batch_size": int,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


@dataclass
class RunConfig:
    subcommand: str
    out: Path
    inputs: dict[str, Optional[Path]] = field(default_factory=dict)
    model_path: Optional[Path] = None
    feature_set: str = "selected9"
    hyperparams: DbnHyperparams = field(default_factory=DbnHyperparams)
    seed: int = 0
    jobs: int = 1
    verbosity: int = 0
    options: dict = field(default_factory=dict)

    def validate(self) -> None:
        if self.subcommand not in SUBCOMMANDS:
            raise UsageError(f"unknown subcommand {self.subcommand!r}")
        if self.feature_set not in FEATURE_SETS:
            raise UsageError(f"unknown feature set {self.feature_set!r}")
        if self.jobs < 1:
            raise UsageError("--jobs must be >= 1")
        for name, path in [*self.inputs.items(), ("model", self.model_path)]:
            if path is not None and not path.exists():
                raise DataError(f"{name} not found: {path}")
        if self.out.exists() and not self.out.is_dir():
            raise UsageError(f"--out is not a directory: {self.out}")


def _build_parser() -> _Parser:
    parser = _Parser(prog="decoyqa", description="Protein model quality assessment with a DBN.")
    parser.add_argument("--version", action="version", version=f"decoyqa {__version__}")
    sub = parser.add_subparsers(dest="subcommand", parser_class=_Parser)

    def common(p, *, seed=True, jobs=False):
        p.add_argument("--out", type=Path, default=Path("."), help="output directory")
        p.add_argument("-v", "--verbose", action="count", default=0)
        if seed:
            p.add_argument("--seed", type=int, default=0)
        if jobs:
            p.add_argument("--jobs", type=int, default=os.cpu_count() or 1)

    def training(p):
        p.add_argument("--feature-set", choices=sorted(FEATURE_SETS), default="selected9")
        for name, typ in _HP_FLAGS.items():
            p.add_argument("--" + name.replace("_", "-"), type=typ, default=None)

    p = sub.add_parser("features", help="extract the raw feature table from decoy structures")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--models", type=Path, help="directory with one sub-directory per target")
    src.add_argument("--manifest", type=Path, help="JSON dataset manifest")
    p.add_argument("--natives", type=Path)
    p.add_argument("--external-scores", type=Path)
    p.add_argument("--predictions-dir", type=Path)
    common(p, seed=False, jobs=True)

    p = sub.add_parser("label", help="GDT-TS, TM-score and RMSD of decoys against natives")
    p.add_argument("--models", type=Path, required=True)
    p.add_argument("--natives", type=Path, required=True)
    common(p, seed=False, jobs=True)

    for name, text in (("train", "train the final model"), ("cv", "k-fold cross-validation")):
        p = sub.add_parser(name, help=text)
        p.add_argument("--features-tsv", type=Path, required=True)
        training(p)
        if name == "cv":
            p.add_argument("--folds", type=int, default=5)
        common(p)

    for name, text in (("predict", "score every model"), ("rank", "rank each target's pool")):
        p = sub.add_parser(name, help=text)
        p.add_argument("--model", type=Path, required=True)
        p.add_argument("--features-tsv", type=Path, required=True)
        common(p, seed=False)

    p = sub.add_parser("evaluate", help="per-target correlation, loss and selection metrics")
    p.add_argument("--features-tsv", type=Path, required=True, help="table carrying true labels")
    how = p.add_mutually_exclusive_group(required=True)
    how.add_argument("--model", type=Path)
    how.add_argument("--predictions", type=Path, help="TSV from `predict` or `cv`")
    common(p, seed=False)

    p = sub.add_parser("synth", help="write a synthetic dataset")
    p.add_argument("--targets", type=int, default=50)
    p.add_argument("--decoys", type=int, default=30)
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--missing-rate", type=float, default=0.02)
    p.add_argument("--structures", action="store_true",
                   help="also write a small PDB pool with predictions and external scores")
    common(p)
    return parser


def parse_config(argv: Sequence[str]) -> RunConfig:
    parser = _build_parser()
    if not argv:
        raise UsageError("missing subcommand")
    if argv[0] not in SUBCOMMANDS and not argv[0].startswith("-"):
        raise UsageError(f"unknown subcommand {argv[0]!r}")
    ns = parser.parse_args(list(argv))
    if ns.subcommand is None:
        raise UsageError("missing subcommand")
    seed = getattr(ns, "seed", 0)
    overrides = {k: getattr(ns, k) for k in _HP_FLAGS if getattr(ns, k, None) is not None}
    try:
        hp = DbnHyperparams(seed=seed, **overrides)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    input_names = ("models", "manifest", "natives", "external_scores", "predictions_dir",
                   "features_tsv", "predictions")
    inputs = {k: getattr(ns, k) for k in input_names if getattr(ns, k, None) is not None}
    skip = set(input_names) | set(_HP_FLAGS) | {"subcommand", "out", "verbose", "seed", "jobs",
                                                "model", "feature_set"}
    config = RunConfig(
        subcommand=ns.subcommand, out=ns.out, inputs=inputs, model_path=getattr(ns, "model", None),
        feature_set=getattr(ns, "feature_set", "selected9"), hyperparams=hp, seed=seed,
        jobs=getattr(ns, "jobs", 1), verbosity=ns.verbose,
        options={k: v for k, v in vars(ns).items() if k not in skip},
    )
    config.validate()
    return config


def _write(config: RunConfig, name: str, text: str) -> Path:
    path = config.out / name
    path.write_text(text)
    log.info("wrote %s", path)
    return path


def _score_lines(scores: dict) -> str:
    lines = ["target_id\tmodel_id\tscore"]
    lines += [f"{t}\t{m}\t{s!r}" for (t, m), s in sorted(scores.items())]
    return "\n".join(lines) + "\n"


def _read_scores(path: Path) -> dict[tuple[str, str], float]:
    scores = {}
    with open(path) as fh:
        header = fh.readline().rstrip("\n").split("\t")
        if header[:3] != ["target_id", "model_id", "score"]:
            raise DataError(f"{path}: expected header target_id, model_id, score")
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            t, m, s = line.rstrip("\n").split("\t")[:3]
            try:
                scores[(t, m)] = float(s)
            except ValueError:
                raise DataError(f"{path}:{lineno}: bad score {s!r}") from None
    return scores


def _cmd_features(config: RunConfig) -> None:
    if "manifest" in config.inputs:
        ds = build_dataset_from_manifest(config.inputs["manifest"], jobs=config.jobs)
    else:
        ds = build_dataset(config.inputs["models"], config.inputs.get("natives"),
                           config.inputs.get("external_scores"), config.inputs.get("predictions_dir"),
                           jobs=config.jobs)
    write_feature_table(ds, config.out / "features.tsv")
    lines = ["target_id\tmodel_id\tstage\treason"]
    lines += [f"{f.target_id}\t{f.model_id}\t{f.stage}\t{f.reason}" for f in ds.failures]
    _write(config, "failures.tsv", "\n".join(lines) + "\n")


def _cmd_label(config: RunConfig) -> None:
    models_root, natives = config.inputs["models"], config.inputs["natives"]
    lines = ["target_id\tmodel_id\tgdt_ts\ttm_score\trmsd"]
    n_ok = 0
    for target_dir in sorted(p for p in models_root.iterdir() if p.is_dir()):
        native_path = next((natives / n for n in (f"{target_dir.name}.pdb", target_dir.name)
                            if (natives / n).is_file()), None)
        if native_path is None:
            log.warning("no native for %s", target_dir.name)
            continue
        native = read_pdb(native_path, target_dir.name)
        for decoy_path in sorted(p for p in target_dir.iterdir() if p.is_file()):
            try:
                res = compare_structures(read_pdb(decoy_path, target_dir.name), native)
            except StructureError as exc:
                log.warning("%s: %s", decoy_path.name, exc)
                continue
            lines.append(f"{target_dir.name}\t{decoy_path.stem}\t{res.gdt_ts!r}\t"
                         f"{res.tm_score!r}\t{res.rmsd!r}")
            n_ok += 1
    if not n_ok:
        raise DataError("zero usable decoys")
    _write(config, "labels.tsv", "\n".join(lines) + "\n")


def _cmd_train(config: RunConfig) -> None:
    ds = read_feature_table(config.inputs["features_tsv"])
    model = train_final(ds, config.hyperparams, config.feature_set)
    save_model(model, config.out / "model.dbn")
    _write(config, "train.json", json.dumps(model.metadata, indent=2, sort_keys=True) + "\n")


def _cmd_cv(config: RunConfig) -> None:
    ds = read_feature_table(config.inputs["features_tsv"])
    result = cross_validate(ds, config.hyperparams, config.feature_set, k=config.options["folds"],
                            seed=config.seed)
    _write(config, "cv.json", json.dumps(result.to_dict(), indent=2, sort_keys=True) + "\n")
    _write(config, "cv_predictions.tsv", _score_lines(result.predictions))


def _load(config: RunConfig) -> tuple:
    model = load_model(config.model_path)
    return model, read_feature_table(config.inputs["features_tsv"])


def _cmd_predict(config: RunConfig) -> None:
    model, ds = _load(config)
    _write(config, "predictions.tsv", _score_lines(predict_records(model, ds.records())))


def _cmd_rank(config: RunConfig) -> None:
    model, ds = _load(config)
    lines = []
    for ranking in rank_dataset(predict_records(model, ds.records())):
        for i, (model_id, score) in enumerate(ranking.ranked, start=1):
            lines.append(f"{ranking.target_id}\t{i}\t{model_id}\t{score!r}")
    _write(config, "ranking.tsv", "\n".join(lines) + "\n")


def _cmd_evaluate(config: RunConfig) -> None:
    ds: QaDataset = read_feature_table(config.inputs["features_tsv"])
    if config.model_path is not None:
        scores = predict_records(load_model(config.model_path), ds.records())
    else:
        scores = _read_scores(config.inputs["predictions"])
    report = evaluate_scores(scores, ds.labeled_only())
    emit_report(report, config.out / "report.csv", "csv")
    emit_report(report, config.out / "report.json", "json")


def _cmd_synth(config: RunConfig) -> None:
    from .synth import synthesize_feature_table, synthesize_structures

    opts = config.options
    ds = synthesize_feature_table(opts["targets"], opts["decoys"], seed=config.seed,
                                  noise=opts["noise"], missing_rate=opts["missing_rate"])
    write_feature_table(ds, config.out / "features.tsv")
    if opts["structures"]:
        synthesize_structures(config.out / "structures", seed=config.seed)


_COMMANDS = {
    "features": _cmd_features, "label": _cmd_label, "train": _cmd_train, "cv": _cmd_cv,
    "predict": _cmd_predict, "rank": _cmd_rank, "evaluate": _cmd_evaluate, "synth": _cmd_synth,
}

_DATA_ERRORS = (DataError, StructureError, FeatureError, UnknownFeatureError, ModelFileError,
                EvaluationError, FeatureSetMismatch, OSError)


def _fail(kind: str, message: str) -> None:
    message = " ".join(str(message).split())
    print(f"decoyqa: error: {kind}: {message}", file=sys.stderr)


def run(argv: Optional[Sequence[str]] = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        config = parse_config(argv)
    except UsageError as exc:
        print(_build_parser().format_usage().rstrip(), file=sys.stderr)
        _fail("usage", exc)
        return EXIT_USAGE
    except _DATA_ERRORS as exc:
        _fail("data", exc)
        return EXIT_DATA
    logging.basicConfig(level=logging.WARNING - 10 * min(config.verbosity, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config.out.mkdir(parents=True, exist_ok=True)
        _COMMANDS[config.subcommand](config)
    except _DATA_ERRORS as exc:
        _fail("data", exc)
        return EXIT_DATA
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
