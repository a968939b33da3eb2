"""Per-residue lookup tables shipped with the package.

``DECOYQA_DATA_DIR`` may point at a directory holding replacement copies of
the TSV files.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path

DATA_DIR_ENV = "DECOYQA_DATA_DIR"
TABLE_FORMAT_VERSION = 1


@dataclass(frozen=True)
class ResidueTable:
    max_sasa: dict[str, float]
    mass: dict[str, float]

    def max_sasa_of(self, code: str) -> float:
        return self.max_sasa.get(code, self.max_sasa["X"])

    def mass_of(self, code: str) -> float:
        return self.mass.get(code, self.mass["X"])


def _read_text(name: str) -> str:
    override = os.environ.get(DATA_DIR_ENV)
    if override:
        return (Path(override) / name).read_text()
    return resources.files("decoyqa").joinpath("data", name).read_text()


@lru_cache(maxsize=None)
def _load(text: str) -> ResidueTable:
    lines = text.splitlines()
    header = [ln for ln in lines if ln.startswith("#")]
    version = next((int(ln.rsplit(" ", 1)[1]) for ln in header if "format version" in ln), None)
    if version != TABLE_FORMAT_VERSION:
        raise ValueError(f"residue table format version {version}, expected {TABLE_FORMAT_VERSION}")
    rows = csv.DictReader((ln for ln in lines if not ln.startswith("#")), delimiter="\t")
    max_sasa, mass = {}, {}
    for row in rows:
        max_sasa[row["code"]] = float(row["max_sasa"])
        mass[row["code"]] = float(row["mass"])
    if "X" not in max_sasa:
        raise ValueError("residue table lacks the fallback row 'X'")
    return ResidueTable(max_sasa, mass)


def residue_table() -> ResidueTable:
    return _load(_read_text("residue_properties.tsv"))
