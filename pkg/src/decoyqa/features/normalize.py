"""Feature naming, min-max normalization and feature-vector assembly."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional

import numpy as np

log = logging.getLogger(__name__)

PHYSCHEM = ("SU", "EM", "ES", "SA", "SS", "SP", "EC")
HIGHER_BETTER = "higher_better"
LOWER_BETTER = "lower_better"
EXTERNAL_ORIENTATION = {
    "RF_CB_SRS_OD": LOWER_BETTER,
    "DFIRE2": LOWER_BETTER,
    "Dope": LOWER_BETTER,
    "GOAP": LOWER_BETTER,
    "OPUS": LOWER_BETTER,
    "RWplus": LOWER_BETTER,
    "ProQ2": HIGHER_BETTER,
    "ModelEvaluator": HIGHER_BETTER,
    "Qprob": HIGHER_BETTER,
}
EXTERNAL = tuple(EXTERNAL_ORIENTATION)

ALL16 = ("SU", "EM", "ES", "SA", "RF_CB_SRS_OD", "DFIRE2", "Dope", "GOAP", "OPUS",
         "ProQ2", "RWplus", "ModelEvaluator", "SS", "SP", "EC", "Qprob")
SELECTED9 = ("SU", "Dope", "GOAP", "OPUS", "RWplus", "ModelEvaluator", "SP", "EC", "Qprob")
FEATURE_SETS = {"all16": ALL16, "selected9": SELECTED9}
KNOWN_FEATURES = frozenset(ALL16)
MISSING_VALUE = 0.5


class UnknownFeatureError(KeyError):
    def __str__(self) -> str:
        return str(self.args[0])


def feature_names(feature_set: str) -> tuple[str, ...]:
    try:
        return FEATURE_SETS[feature_set]
    except KeyError:
        raise ValueError(
            f"unknown feature set {feature_set!r}; expected one of {sorted(FEATURE_SETS)}"
        ) from None


def _check_names(names: Iterable[str]) -> None:
    unknown = [n for n in names if n not in KNOWN_FEATURES]
    if unknown:
        raise UnknownFeatureError(f"unknown feature column(s): {', '.join(unknown)}")


def _is_missing(value) -> bool:
    return value is None or (isinstance(value, float) and math.isnan(value))


@dataclass(frozen=True)
class FeatureBound:
    low: float
    high: float
    orientation: str

    def scale(self, raw: float) -> float:
        x = (raw - self.low) / (self.high - self.low)
        if self.orientation == LOWER_BETTER:
            x = 1.0 - x
        return min(1.0, max(0.0, x))


@dataclass(frozen=True)
class NormalizationBounds:
    """Per-feature (min, max, orientation) for the external scores."""

    bounds: dict[str, FeatureBound] = field(default_factory=dict)
    dropped: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "bounds": {k: [b.low, b.high, b.orientation] for k, b in sorted(self.bounds.items())},
            "dropped": list(self.dropped),
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "NormalizationBounds":
        return cls(
            {k: FeatureBound(float(v[0]), float(v[1]), str(v[2])) for k, v in data["bounds"].items()},
            tuple(data.get("dropped", ())),
        )


def fit_normalization(table: Mapping[str, Iterable[Optional[float]]]) -> NormalizationBounds:
    """Learn min/max for every external score column of a raw feature table.

    ``table`` maps column name to raw values (None/NaN for missing).
    Structure-derived columns are accepted and skipped, since they are
    already on [0, 1]. Columns with fewer than two distinct values are
    dropped with a warning.
    """
    _check_names(table)
    bounds, dropped = {}, []
    for name in EXTERNAL:
        if name not in table:
            continue
        values = np.array([v for v in table[name] if not _is_missing(v)], dtype=float)
        if values.size == 0 or values.min() == values.max():
            log.warning("feature %s is constant or empty in training data; dropped", name)
            dropped.append(name)
            continue
        bounds[name] = FeatureBound(float(values.min()), float(values.max()),
                                    EXTERNAL_ORIENTATION[name])
    return NormalizationBounds(bounds, tuple(dropped))


@dataclass(frozen=True)
class FeatureVector:
    values: dict[str, float]
    present: dict[str, bool]
    feature_set: str

    def as_array(self) -> np.ndarray:
        return np.array([self.values[n] for n in feature_names(self.feature_set)], dtype=float)


def assemble_feature_vector(raw: Mapping[str, Optional[float]], bounds: NormalizationBounds,
                            feature_set: str = "selected9") -> FeatureVector:
    """Normalize ``raw`` scores and restrict them to ``feature_set``.

    Missing features, and external features without fitted bounds, become
    0.5 with ``present=False``.
    """
    _check_names(raw)
    values, present = {}, {}
    for name in feature_names(feature_set):
        value = raw.get(name)
        if _is_missing(value) or not math.isfinite(value):
            values[name], present[name] = MISSING_VALUE, False
        elif name in EXTERNAL_ORIENTATION:
            bound = bounds.bounds.get(name)
            if bound is None:
                values[name], present[name] = MISSING_VALUE, False
            else:
                values[name], present[name] = bound.scale(float(value)), True
        else:
            values[name], present[name] = min(1.0, max(0.0, float(value))), True
    return FeatureVector(values, present, feature_set)


def feature_matrix(rows: Iterable[Mapping[str, Optional[float]]], bounds: NormalizationBounds,
                   feature_set: str) -> np.ndarray:
    names = feature_names(feature_set)
    out = [assemble_feature_vector(r, bounds, feature_set).as_array() for r in rows]
    return np.array(out, dtype=float).reshape(-1, len(names))
