"""Per-model quality features and their normalization."""

from .dssp import assign_secondary_structure, hbond_energies, hbond_energy
from .normalize import (
    ALL16,
    EXTERNAL,
    EXTERNAL_ORIENTATION,
    FEATURE_SETS,
    PHYSCHEM,
    SELECTED9,
    FeatureVector,
    NormalizationBounds,
    UnknownFeatureError,
    assemble_feature_vector,
    feature_matrix,
    feature_names,
    fit_normalization,
)
from .physchem import (
    FeatureError,
    SequencePredictions,
    physchem_features,
    read_predictions,
    write_predictions,
)
from .sasa import compute_sasa, shrake_rupley, sphere_points

__all__ = [
    "ALL16", "EXTERNAL", "EXTERNAL_ORIENTATION", "FEATURE_SETS", "PHYSCHEM", "SELECTED9",
    "FeatureError", "FeatureVector", "NormalizationBounds", "SequencePredictions",
    "UnknownFeatureError", "assemble_feature_vector", "assign_secondary_structure",
    "compute_sasa", "feature_matrix", "feature_names", "fit_normalization",
    "hbond_energies", "hbond_energy", "physchem_features", "read_predictions",
    "shrake_rupley", "sphere_points", "write_predictions",
]
