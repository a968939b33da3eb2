import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from decoyqa.backbone import build_backbone
from decoyqa.features.dssp import assign_secondary_structure
from decoyqa.features.physchem import (
    FeatureError, SequencePredictions, euclidean_compact, physchem_features, read_predictions,
    ss_agreement, write_predictions,
)

from conftest import ca_model


def test_matching_ss_strings_score_one(helix12):
    assigned = assign_secondary_structure(helix12)
    preds = SequencePredictions(assigned, (True,) * 12)
    feats = physchem_features(helix12, preds)
    assert feats["SS"] == 1.0 and feats["SP"] == 1.0


def test_all_helix_prediction_on_coil_scores_zero():
    extended = build_backbone("A" * 12, 180, 180)
    feats = physchem_features(extended, SequencePredictions("H" * 12, (True,) * 12))
    assert feats["SS"] == 0.0 and feats["SP"] == 0.0


def test_ss_agreement_fractions():
    assert ss_agreement("HHCC", "HECC") == (0.75, 0.5)
    assert ss_agreement("HHCC", "CCCC") == (0.5, 1.0)
    with pytest.raises(FeatureError):
        ss_agreement("HH", "H")


def test_all_nonpolar_surface_is_one():
    # every residue nonpolar, so every exposed residue is nonpolar
    model = build_backbone("AVLIGAVLIG", -57, -47)
    assert physchem_features(model, None)["SU"] == 1.0


def test_all_polar_surface_is_zero():
    model = build_backbone("DEKRSTNQDE", 180, 180)
    feats = physchem_features(model, None)
    assert feats["SU"] == 0.0
    assert feats["EM"] == 1.0  # extended chain, everything exposed


def test_compactness_two_residues():
    # mean distance 3.8 over 3.8 * 2 -> 0.5
    assert euclidean_compact(ca_model([[0, 0, 0], [3.8, 0, 0]])) == pytest.approx(0.5)


def test_missing_predictions_are_absent(helix12):
    feats = physchem_features(helix12, None)
    assert feats["SA"] is None and feats["SS"] is None and feats["SP"] is None
    assert all(0.0 <= feats[k] <= 1.0 for k in ("SU", "EM", "ES", "EC"))


def test_prediction_length_mismatch(helix12):
    with pytest.raises(FeatureError):
        physchem_features(helix12, SequencePredictions("H" * 11, (True,) * 11))


def test_rigid_motion_invariance(helix12):
    preds = SequencePredictions("CHHHHHHHHHHC", tuple(i % 2 == 0 for i in range(12)))
    base = physchem_features(helix12, preds)
    for seed in range(3):
        rot = Rotation.random(random_state=seed).as_matrix()
        moved = physchem_features(helix12.transformed(rot, np.array([-3.0, 11.0, 4.0])), preds)
        for key, value in base.items():
            assert moved[key] == pytest.approx(value, abs=1e-12)


def test_prediction_files_round_trip(tmp_path):
    preds = SequencePredictions("HHEC", (True, False, False, True))
    write_predictions(tmp_path, "T1", preds)
    assert read_predictions(tmp_path, "T1") == preds
    assert read_predictions(tmp_path, "T2") is None


def test_invalid_prediction_alphabet():
    with pytest.raises(FeatureError):
        SequencePredictions("HXC", (True, True, True))
