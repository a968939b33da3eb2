"""Synthetic decoy pools for end-to-end runs without external scorers.

Two generators:

* :func:`synthesize_feature_table` draws a latent quality per decoy and emits
  raw feature columns that are monotone noisy functions of it, with the
  latent quality as the GDT-TS label.
* :func:`synthesize_structures` writes small PDB pools (native + perturbed
  decoys), sequence-prediction files and an external-score table, for
  exercising the structure-based path.
"""

from __future__ import annotations

from pathlib import Path
from typing import Optional

import numpy as np

from .backbone import build_backbone, format_pdb
from .features.normalize import ALL16, EXTERNAL_ORIENTATION, LOWER_BETTER
from .features.physchem import SequencePredictions, write_predictions
from .pipeline import ModelRecord, QaDataset

# (offset, scale) of each raw column as a function of the noisy latent; energies
# are scaled by chain length like real statistical potentials.
_EXTERNAL_SCALE = {
    "RF_CB_SRS_OD": (40.0, 120.0),
    "DFIRE2": (-150.0, -400.0),
    "Dope": (-60.0, -90.0),
    "GOAP": (-80.0, -160.0),
    "OPUS": (-2.0, -6.0),
    "RWplus": (-90.0, -140.0),
    "ProQ2": (0.1, 0.8),
    "ModelEvaluator": (0.05, 0.9),
    "Qprob": (0.1, 0.7),
}


def synthesize_feature_table(n_targets: int = 50, n_decoys: int = 30, seed: int = 0,
                             noise: float = 0.1, missing_rate: float = 0.02) -> QaDataset:
    """Labeled dataset whose features track a hidden per-decoy quality.

    Every feature is ``g(q + noise * eps + offset_t)`` for a random monotone
    ``g`` (power warp, then an affine map to the feature's raw scale; the
    map is decreasing for lower-is-better energies). ``offset_t`` is a small
    per-target shift shared by the target's decoys.
    """
    rng = np.random.default_rng(seed)
    warp = {name: rng.uniform(0.7, 1.4) for name in ALL16}
    targets: dict[str, list[ModelRecord]] = {}
    for t in range(n_targets):
        target_id = f"T{t + 1:04d}"
        length = int(rng.integers(60, 300))
        base = rng.uniform(0.25, 0.65)
        quality = np.clip(base + rng.normal(0.0, 0.15, n_decoys), 0.02, 0.98)
        offsets = {name: rng.normal(0.0, 0.03) for name in ALL16}
        records = []
        for d in range(n_decoys):
            q = float(quality[d])
            raw: dict[str, Optional[float]] = {}
            for name in ALL16:
                z = float(np.clip(q + noise * rng.normal() + offsets[name], 0.0, 1.0)) ** warp[name]
                if name in EXTERNAL_ORIENTATION:
                    lo, span = _EXTERNAL_SCALE[name]
                    value = lo + span * z
                    if EXTERNAL_ORIENTATION[name] == LOWER_BETTER and span > 0:
                        value = lo + span * (1.0 - z)
                    if name in ("Dope", "GOAP", "RWplus", "DFIRE2"):
                        value *= length / 100.0
                else:
                    value = 0.15 + 0.7 * z
                raw[name] = None if rng.random() < missing_rate else float(value)
            tm = float(np.clip(q ** 1.1 + rng.normal(0.0, 0.02), 0.01, 1.0))
            rmsd = float(max(0.0, 1.0 + 18.0 * (1.0 - q) + rng.normal(0.0, 0.5)))
            records.append(ModelRecord(target_id, f"{target_id}_D{d + 1:03d}", raw, q, tm, rmsd))
        targets[target_id] = records
    prov = [f"synthetic feature table: targets={n_targets} decoys={n_decoys} seed={seed} "
            f"noise={noise} missing_rate={missing_rate}"]
    return QaDataset(targets, provenance=prov)


_AA = "ACDEFGHIKLMNPQRSTVWY"


def _native_torsions(rng: np.random.Generator, length: int):
    """Alternating helix/strand/loop segments; returns phi, psi (deg) and H/E/C labels."""
    phi, psi, labels = [], [], []
    while len(phi) < length:
        kind = rng.choice(["H", "E", "C"], p=[0.45, 0.3, 0.25])
        size = int(rng.integers(4, 12))
        for _ in range(size):
            if kind == "H":
                phi.append(-57.0), psi.append(-47.0)
            elif kind == "E":
                phi.append(-120.0), psi.append(130.0)
            else:
                phi.append(rng.uniform(-160, -60)), psi.append(rng.uniform(-60, 160))
            labels.append(kind)
    return np.array(phi[:length]), np.array(psi[:length]), "".join(labels[:length])


def synthesize_structures(out_dir, n_targets: int = 3, n_decoys: int = 5, length: int = 40,
                          seed: int = 0) -> dict:
    """Write ``models/<target>/*.pdb``, ``natives/<target>.pdb``, predictions and scores.

    Decoys are the native backbone rebuilt from increasingly perturbed
    torsions, so quality falls with decoy index. Returns the written paths.
    """
    out = Path(out_dir)
    rng = np.random.default_rng(seed)
    paths = {"models": out / "models", "natives": out / "natives",
             "predictions": out / "predictions", "external_scores": out / "external_scores.tsv"}
    for key in ("models", "natives", "predictions"):
        paths[key].mkdir(parents=True, exist_ok=True)
    score_lines = ["\t".join(["target_id", "model_id", *EXTERNAL_ORIENTATION])]
    for t in range(n_targets):
        target_id = f"S{t + 1:03d}"
        seq = "".join(rng.choice(list(_AA), size=length))
        phi, psi, labels = _native_torsions(rng, length)
        native = build_backbone(seq, phi, psi, model_id=target_id, target_id=target_id)
        (paths["natives"] / f"{target_id}.pdb").write_text(format_pdb(native))
        exposed = tuple(bool(rng.random() < 0.5) for _ in range(length))
        write_predictions(paths["predictions"], target_id, SequencePredictions(labels, exposed))
        target_dir = paths["models"] / target_id
        target_dir.mkdir(exist_ok=True)
        for d in range(n_decoys):
            sigma = 4.0 + 12.0 * d
            decoy = build_backbone(seq, phi + rng.normal(0, sigma, length),
                                   psi + rng.normal(0, sigma, length),
                                   model_id=f"{target_id}_D{d + 1:02d}", target_id=target_id)
            (target_dir / f"{decoy.model_id}.pdb").write_text(format_pdb(decoy))
            quality = 1.0 / (1.0 + d)
            cells = []
            for name, orientation in EXTERNAL_ORIENTATION.items():
                value = quality + rng.normal(0, 0.05)
                cells.append(repr(-value if orientation == LOWER_BETTER else value))
            score_lines.append("\t".join([target_id, decoy.model_id, *cells]))
    paths["external_scores"].write_text("\n".join(score_lines) + "\n")
    return paths
