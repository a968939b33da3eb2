"""Labeled datasets, target-level cross-validation and final model training."""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Optional, Sequence, Union

import numpy as np

from .dbn import DbnHyperparams, DbnModel, train_dbn
from .features.normalize import (
    ALL16,
    EXTERNAL,
    KNOWN_FEATURES,
    NormalizationBounds,
    UnknownFeatureError,
    feature_matrix,
    feature_names,
    fit_normalization,
)
from .features.physchem import FeatureError, SequencePredictions, physchem_features, read_predictions
from .structure import StructureError, compare_structures, read_pdb

log = logging.getLogger(__name__)

LABEL_COLUMNS = ("gdt_ts", "tm_score", "rmsd")
ID_COLUMNS = ("target_id", "model_id")

PathLike = Union[str, Path]


class DataError(ValueError):
    """Input data cannot support the requested operation."""


class FoldError(DataError):
    pass


@dataclass
class ModelRecord:
    target_id: str
    model_id: str
    raw_features: dict[str, Optional[float]]
    true_gdt_ts: Optional[float] = None
    true_tm_score: Optional[float] = None
    true_rmsd: Optional[float] = None

    def __post_init__(self):
        for name, value in (("gdt_ts", self.true_gdt_ts), ("tm_score", self.true_tm_score)):
            if value is not None and not 0.0 <= value <= 1.0:
                raise DataError(f"{self.model_id}: {name} {value} outside [0, 1]")
        if self.true_rmsd is not None and self.true_rmsd < 0:
            raise DataError(f"{self.model_id}: negative rmsd {self.true_rmsd}")

    @property
    def labeled(self) -> bool:
        return self.true_gdt_ts is not None


@dataclass
class DecoyFailure:
    target_id: str
    model_id: str
    stage: str
    reason: str


@dataclass
class QaDataset:
    targets: dict[str, list[ModelRecord]]
    failures: list[DecoyFailure] = field(default_factory=list)
    provenance: list[str] = field(default_factory=list)

    def __post_init__(self):
        seen = set()
        for records in self.targets.values():
            for r in records:
                key = (r.target_id, r.model_id)
                if key in seen:
                    raise DataError(f"duplicate record {r.target_id}/{r.model_id}")
                seen.add(key)

    @property
    def target_ids(self) -> list[str]:
        return sorted(self.targets)

    def records(self, target_ids: Optional[Iterable[str]] = None) -> Iterator[ModelRecord]:
        for t in (self.target_ids if target_ids is None else target_ids):
            yield from self.targets[t]

    def __len__(self) -> int:
        return sum(len(v) for v in self.targets.values())

    def subset(self, target_ids: Iterable[str]) -> "QaDataset":
        return QaDataset({t: list(self.targets[t]) for t in target_ids},
                         provenance=list(self.provenance))

    def labeled_only(self) -> "QaDataset":
        kept = {t: [r for r in rs if r.labeled] for t, rs in self.targets.items()}
        dropped = len(self) - sum(len(v) for v in kept.values())
        if dropped:
            log.warning("excluding %d unlabeled record(s)", dropped)
        kept = {t: rs for t, rs in kept.items() if rs}
        if not kept:
            raise DataError("no labeled records")
        return QaDataset(kept, list(self.failures), list(self.provenance))


# ---------------------------------------------------------------------------
# tables


def _fmt(value: Optional[float]) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return ""
    return repr(float(value))


def _parse_cell(cell: str, where: str) -> Optional[float]:
    cell = cell.strip()
    if not cell or cell.lower() in ("na", "nan", "none"):
        return None
    try:
        return float(cell)
    except ValueError:
        raise DataError(f"{where}: not a number: {cell!r}") from None


def read_external_scores(path: PathLike) -> dict[tuple[str, str], dict[str, Optional[float]]]:
    """Read a ``target_id  model_id  <feature>...`` TSV of external scores."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh, delimiter="\t")
        header = next(reader, None)
        if header is None or tuple(header[:2]) != ID_COLUMNS:
            raise DataError(f"{path}: header must start with target_id, model_id")
        names = header[2:]
        unknown = [n for n in names if n not in EXTERNAL]
        if unknown:
            raise UnknownFeatureError(f"{path}: unknown feature column(s): {', '.join(unknown)}")
        scores = {}
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            row = row + [""] * (len(header) - len(row))
            scores[(row[0], row[1])] = {
                n: _parse_cell(c, f"{path}:{lineno}") for n, c in zip(names, row[2:])
            }
    return scores


def write_feature_table(dataset: QaDataset, path: PathLike) -> None:
    """Raw feature cache: ids, all sixteen raw columns, then the three labels."""
    lines = ["\t".join([*ID_COLUMNS, *ALL16, *LABEL_COLUMNS])]
    for r in dataset.records():
        cells = [r.target_id, r.model_id]
        cells += [_fmt(r.raw_features.get(n)) for n in ALL16]
        cells += [_fmt(r.true_gdt_ts), _fmt(r.true_tm_score), _fmt(r.true_rmsd)]
        lines.append("\t".join(cells))
    Path(path).write_text("\n".join(lines) + "\n")


def read_feature_table(path: PathLike) -> QaDataset:
    with open(path, newline="") as fh:
        reader = csv.reader(fh, delimiter="\t")
        header = next(reader, None)
        if header is None or tuple(header[:2]) != ID_COLUMNS:
            raise DataError(f"{path}: header must start with target_id, model_id")
        cols = header[2:]
        unknown = [c for c in cols if c not in KNOWN_FEATURES and c not in LABEL_COLUMNS]
        if unknown:
            raise UnknownFeatureError(f"{path}: unknown feature column(s): {', '.join(unknown)}")
        targets: dict[str, list[ModelRecord]] = {}
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            row = row + [""] * (len(header) - len(row))
            values = {c: _parse_cell(v, f"{path}:{lineno}") for c, v in zip(cols, row[2:])}
            raw = {c: v for c, v in values.items() if c in KNOWN_FEATURES}
            targets.setdefault(row[0], []).append(ModelRecord(
                row[0], row[1], raw, values.get("gdt_ts"), values.get("tm_score"),
                values.get("rmsd"),
            ))
    if not targets:
        raise DataError(f"{path}: no records")
    return QaDataset(targets, provenance=[f"feature table {Path(path).name}"])


# ---------------------------------------------------------------------------
# building from structures


@dataclass(frozen=True)
class _DecoyTask:
    target_id: str
    decoy_path: str
    native_path: Optional[str]
    predictions: Optional[SequencePredictions]
    external: Optional[dict]


def _process_decoy(task: _DecoyTask):
    model_id = Path(task.decoy_path).stem
    failures = []
    try:
        model = read_pdb(task.decoy_path, target_id=task.target_id)
    except (StructureError, OSError, UnicodeDecodeError) as exc:
        return None, [DecoyFailure(task.target_id, model_id, "parse", str(exc))]

    raw: dict[str, Optional[float]] = {}
    try:
        raw.update(physchem_features(model, task.predictions))
    except (FeatureError, StructureError) as exc:
        failures.append(DecoyFailure(task.target_id, model_id, "features", str(exc)))
        try:
            raw.update(physchem_features(model, None))
        except (FeatureError, StructureError) as exc2:
            failures.append(DecoyFailure(task.target_id, model_id, "features", str(exc2)))
    if task.external is None:
        failures.append(DecoyFailure(task.target_id, model_id, "external", "no external scores"))
    else:
        raw.update(task.external)

    gdt = tm = rmsd = None
    if task.native_path is not None:
        try:
            native = read_pdb(task.native_path, target_id=task.target_id)
            res = compare_structures(model, native)
            gdt, tm, rmsd = res.gdt_ts, res.tm_score, res.rmsd
        except (StructureError, OSError) as exc:
            failures.append(DecoyFailure(task.target_id, model_id, "label", str(exc)))
    return ModelRecord(task.target_id, model_id, raw, gdt, tm, rmsd), failures


def _decoy_files(directory: Path) -> list[Path]:
    return sorted(p for p in directory.iterdir() if p.is_file() and not p.name.startswith("."))


def _native_for(native_dir: Optional[Path], target_id: str) -> Optional[Path]:
    if native_dir is None:
        return None
    for name in (f"{target_id}.pdb", f"{target_id}.ent", target_id):
        if (native_dir / name).is_file():
            return native_dir / name
    return None


def _run_tasks(tasks: list[_DecoyTask], jobs: int, failures: list[DecoyFailure],
               provenance: list[str]) -> QaDataset:
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_process_decoy, tasks, chunksize=4))
    else:
        results = [_process_decoy(t) for t in tasks]
    targets: dict[str, list[ModelRecord]] = {}
    for record, fails in results:
        failures.extend(fails)
        if record is not None:
            targets.setdefault(record.target_id, []).append(record)
    for f in failures:
        log.info("decoy %s/%s %s: %s", f.target_id, f.model_id, f.stage, f.reason)
    if not targets:
        raise DataError("zero usable decoys")
    return QaDataset(targets, failures, provenance)


def build_dataset(model_dirs: Union[PathLike, Sequence[PathLike]],
                  native_dir: Optional[PathLike] = None,
                  external_scores_tsv: Optional[PathLike] = None,
                  predictions_dir: Optional[PathLike] = None,
                  jobs: int = 1) -> QaDataset:
    """Extract features (and labels, where natives exist) for every decoy.

    ``model_dirs`` is either a directory holding one sub-directory per target,
    or a list of target directories; the directory name is the target id.
    """
    if isinstance(model_dirs, (str, Path)):
        root = Path(model_dirs)
        dirs = sorted(p for p in root.iterdir() if p.is_dir())
    else:
        dirs = [Path(p) for p in model_dirs]
    native_root = Path(native_dir) if native_dir else None
    external = read_external_scores(external_scores_tsv) if external_scores_tsv else {}

    tasks = []
    failures: list[DecoyFailure] = []
    for d in dirs:
        target_id = d.name
        preds = None
        if predictions_dir:
            try:
                preds = read_predictions(predictions_dir, target_id)
            except FeatureError as exc:
                failures.append(DecoyFailure(target_id, "*", "predictions", str(exc)))
        native = _native_for(native_root, target_id)
        for path in _decoy_files(d):
            tasks.append(_DecoyTask(target_id, str(path), str(native) if native else None,
                                    preds, external.get((target_id, path.stem))))
    prov = [f"models={','.join(str(d) for d in dirs)}", f"natives={native_dir}",
            f"external_scores={external_scores_tsv}", f"predictions={predictions_dir}"]
    return _run_tasks(tasks, jobs, failures, prov)


def build_dataset_from_manifest(manifest_path: PathLike, jobs: int = 1) -> QaDataset:
    """Build from a JSON manifest.

    Layout::

        {"external_scores": "scores.tsv",
         "targets": [{"target_id": "T1", "decoys": ["m1.pdb", ...],
                      "native": "T1.pdb", "ss": "T1.ss", "acc": "T1.acc"}]}

    Relative paths resolve against the manifest's directory; ``native``,
    ``ss``/``acc`` and ``external_scores`` are optional.
    """
    manifest_path = Path(manifest_path)
    base = manifest_path.parent
    manifest = json.loads(manifest_path.read_text())

    def resolve(p):
        return None if p is None else str((base / p) if not Path(p).is_absolute() else Path(p))

    external = read_external_scores(resolve(manifest["external_scores"])) \
        if manifest.get("external_scores") else {}
    tasks, failures = [], []
    for entry in manifest["targets"]:
        target_id = entry["target_id"]
        preds = None
        if entry.get("ss") and entry.get("acc"):
            ss = "".join(Path(resolve(entry["ss"])).read_text().split()).upper()
            acc = "".join(Path(resolve(entry["acc"])).read_text().split()).lower()
            try:
                preds = SequencePredictions(ss, tuple(c == "e" for c in acc))
            except FeatureError as exc:
                failures.append(DecoyFailure(target_id, "*", "predictions", str(exc)))
        for decoy in entry["decoys"]:
            path = resolve(decoy)
            tasks.append(_DecoyTask(target_id, path, resolve(entry.get("native")), preds,
                                    external.get((target_id, Path(path).stem))))
    return _run_tasks(tasks, jobs, failures, [f"manifest {manifest_path.name}"])


# ---------------------------------------------------------------------------
# cross-validation


def kfold_split(dataset: Union[QaDataset, Sequence[str]], k: int = 5, seed: int = 0) -> list[list[str]]:
    """Shuffle targets with ``seed`` and deal them into ``k`` folds.

    All models of a target stay together; fold sizes differ by at most one.
    """
    ids = dataset.target_ids if isinstance(dataset, QaDataset) else sorted(dataset)
    if k < 2:
        raise FoldError("need at least 2 folds")
    if len(ids) < k:
        raise FoldError(f"fewer targets than folds: {len(ids)} targets, k={k}")
    order = np.random.default_rng(seed).permutation(len(ids))
    return [sorted(ids[i] for i in chunk) for chunk in np.array_split(order, k)]


def mean_absolute_error(predictions: Sequence[float], labels: Sequence[float]) -> float:
    p = np.asarray(predictions, dtype=float)
    y = np.asarray(labels, dtype=float)
    if p.shape != y.shape or p.size == 0:
        raise ValueError("predictions and labels must be non-empty and equal length")
    return float(np.mean(np.abs(p - y)))


def train_on_records(records: Sequence[ModelRecord], hp: DbnHyperparams,
                     feature_set: str = "selected9") -> DbnModel:
    """Fit normalization on ``records`` only, then pretrain and fine-tune."""
    feature_names(feature_set)
    if not records:
        raise DataError("no training records")
    columns = {n: [r.raw_features.get(n) for r in records] for n in ALL16}
    bounds = fit_normalization(columns)
    x = feature_matrix([r.raw_features for r in records], bounds, feature_set)
    y = np.array([r.true_gdt_ts for r in records], dtype=float)
    return train_dbn(x, y, hp, feature_set=feature_set, bounds=bounds)


def predict_records(model: DbnModel, records: Iterable[ModelRecord]) -> dict[tuple[str, str], float]:
    records = list(records)
    x = feature_matrix([r.raw_features for r in records], model.bounds, model.feature_set)
    scores = model.predict_matrix(x) if len(records) else np.zeros(0)
    return {(r.target_id, r.model_id): float(s) for r, s in zip(records, scores)}


@dataclass
class CvResult:
    fold_maes: list[float]
    mean_mae: float
    folds: list[list[str]]
    fold_metadata: list[dict]
    hyperparams: DbnHyperparams
    feature_set: str
    predictions: dict[tuple[str, str], float] = field(default_factory=dict)
    models: list[DbnModel] = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {
            "feature_set": self.feature_set,
            "folds": self.folds,
            "fold_maes": self.fold_maes,
            "mean_mae": self.mean_mae,
            "fold_metadata": self.fold_metadata,
            "hyperparams": dataclasses.asdict(self.hyperparams),
        }


def cross_validate(dataset: QaDataset, hp: DbnHyperparams = DbnHyperparams(),
                   feature_set: str = "selected9", k: int = 5,
                   seed: Optional[int] = None) -> CvResult:
    """Target-level k-fold CV; each fold's normalization and weights see training folds only."""
    data = dataset.labeled_only()
    folds = kfold_split(data, k, hp.seed if seed is None else seed)
    maes, meta, models = [], [], []
    predictions: dict[tuple[str, str], float] = {}
    for i, held_out in enumerate(folds):
        train_ids = [t for j, f in enumerate(folds) if j != i for t in f]
        model = train_on_records(list(data.records(train_ids)), hp, feature_set)
        test = list(data.records(held_out))
        scores = predict_records(model, test)
        predictions.update(scores)
        mae = mean_absolute_error([scores[(r.target_id, r.model_id)] for r in test],
                                  [r.true_gdt_ts for r in test])
        maes.append(mae)
        meta.append({"fold": i, "n_train": model.metadata["n_train"], "n_test": len(test),
                     "mae": mae, **{k_: v for k_, v in model.metadata.items() if k_ != "n_train"}})
        models.append(model)
        log.info("fold %d/%d: MAE %.4f", i + 1, len(folds), mae)
    return CvResult(maes, float(np.mean(maes)), folds, meta, hp, feature_set, predictions, models)


def train_final(dataset: QaDataset, hp: DbnHyperparams = DbnHyperparams(),
                feature_set: str = "selected9") -> DbnModel:
    data = dataset.labeled_only()
    return train_on_records(list(data.records()), hp, feature_set)


__all__ = [
    "CvResult", "DataError", "DecoyFailure", "FoldError", "ModelRecord", "NormalizationBounds",
    "QaDataset", "build_dataset", "build_dataset_from_manifest", "cross_validate", "kfold_split",
    "mean_absolute_error", "predict_records", "read_external_scores", "read_feature_table",
    "train_final", "train_on_records", "write_feature_table",
]
