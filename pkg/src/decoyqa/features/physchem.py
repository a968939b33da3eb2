"""Structure-derived quality scores: surface, exposure, secondary structure, compactness."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from ..structure import ProteinModel, ca_distance_matrix
from .dssp import assign_secondary_structure
from .sasa import compute_sasa
from .tables import ResidueTable, residue_table

NONPOLAR = frozenset("AVLIPFMWGC")
EXPOSED_RSA = 0.25
CA_SPACING = 3.8


class FeatureError(ValueError):
    pass


@dataclass(frozen=True)
class SequencePredictions:
    """Sequence-based predictions ingested from external predictors."""

    predicted_ss: str
    predicted_rsa_exposed: tuple[bool, ...]

    def __post_init__(self):
        if set(self.predicted_ss) - set("HEC"):
            raise FeatureError("predicted secondary structure must use H/E/C only")
        if len(self.predicted_ss) != len(self.predicted_rsa_exposed):
            raise FeatureError(
                f"prediction lengths differ: ss={len(self.predicted_ss)} "
                f"acc={len(self.predicted_rsa_exposed)}"
            )

    def __len__(self) -> int:
        return len(self.predicted_ss)


def read_predictions(directory, target_id: str) -> Optional[SequencePredictions]:
    """Load ``<target>.ss`` and ``<target>.acc``; None if either file is missing."""
    directory = Path(directory)
    ss_path, acc_path = directory / f"{target_id}.ss", directory / f"{target_id}.acc"
    if not (ss_path.is_file() and acc_path.is_file()):
        return None
    ss = "".join(ss_path.read_text().split()).upper()
    acc = "".join(acc_path.read_text().split()).lower()
    if set(acc) - set("eb"):
        raise FeatureError(f"{acc_path.name}: accessibility must use e/b only")
    return SequencePredictions(ss, tuple(ch == "e" for ch in acc))


def write_predictions(directory, target_id: str, preds: SequencePredictions) -> None:
    directory = Path(directory)
    (directory / f"{target_id}.ss").write_text(preds.predicted_ss + "\n")
    acc = "".join("e" if x else "b" for x in preds.predicted_rsa_exposed)
    (directory / f"{target_id}.acc").write_text(acc + "\n")


def _clamp(x: float) -> float:
    return float(min(1.0, max(0.0, x)))


def surface_scores(model: ProteinModel, residue_sasa: np.ndarray,
                   table: ResidueTable) -> dict[str, float]:
    seq = model.sequence
    total = float(residue_sasa.sum())
    max_sasa = np.array([table.max_sasa_of(a) for a in seq])
    mass = np.array([table.mass_of(a) for a in seq])
    exposed = residue_sasa / max_sasa > EXPOSED_RSA
    nonpolar = np.array([a in NONPOLAR for a in seq])
    return {
        "SU": _clamp(residue_sasa[nonpolar].sum() / total) if total > 0 else 0.0,
        "EM": _clamp(mass[exposed].sum() / mass.sum()),
        "ES": _clamp(total / max_sasa.sum()),
    }


def ss_agreement(assigned: str, predicted: str) -> tuple[float, float]:
    """Return (overall match fraction, match fraction over predicted H/E)."""
    if len(assigned) != len(predicted):
        raise FeatureError(f"length mismatch: assigned {len(assigned)}, predicted {len(predicted)}")
    same = [a == p for a, p in zip(assigned, predicted)]
    ss = sum(same) / len(same) if same else 0.0
    regular = [s for s, p in zip(same, predicted) if p in "HE"]
    sp = sum(regular) / len(regular) if regular else 1.0
    return ss, sp


def euclidean_compact(model: ProteinModel) -> float:
    """1 minus mean pairwise CA distance over (3.8 A x residue count), clamped."""
    dist = ca_distance_matrix(model)
    n = len(model)
    mean = dist[np.triu_indices(n, k=1)].mean()
    return _clamp(1.0 - _clamp(mean / (CA_SPACING * n)))


def physchem_features(model: ProteinModel, preds: Optional[SequencePredictions],
                      table: Optional[ResidueTable] = None) -> dict[str, Optional[float]]:
    """The seven structure-derived scores, each in [0, 1].

    SA, SS and SP need ``preds``; without them they come back as None
    (absent). EC is None for single-residue models.
    """
    table = table or residue_table()
    _, residue_sasa = compute_sasa(model)
    out: dict[str, Optional[float]] = dict(surface_scores(model, residue_sasa, table))
    out["EC"] = euclidean_compact(model) if len(model) >= 2 else None

    if preds is None:
        out.update(SA=None, SS=None, SP=None)
    else:
        if len(preds) != len(model):
            raise FeatureError(
                f"{model.model_id}: predictions cover {len(preds)} residues, model has {len(model)}"
            )
        rsa = residue_sasa / np.array([table.max_sasa_of(a) for a in model.sequence])
        exposed = rsa > EXPOSED_RSA
        out["SA"] = float(np.mean(exposed == np.array(preds.predicted_rsa_exposed)))
        ss, sp = ss_agreement(assign_secondary_structure(model), preds.predicted_ss)
        out["SS"], out["SP"] = ss, sp
    return {k: out[k] for k in ("SU", "EM", "ES", "SA", "SS", "SP", "EC")}
