"""Three-state secondary structure from backbone hydrogen bonds.

A reduced DSSP: electrostatic H-bond energies between backbone C=O and N-H
groups, alpha helices from consecutive i -> i+4 turns, strands from bridge
patterns. Everything else is coil.
"""

from __future__ import annotations

import numpy as np

from ..structure import ProteinModel

HBOND_CUTOFF = -0.5  # kcal/mol
_COUPLING = 0.084 * 332.0
_NH_LENGTH = 1.0
_MAX_PEPTIDE_BOND = 2.5


def hbond_energy(o, c, n, h) -> float:
    """Energy (kcal/mol) of the bond between acceptor C=O and donor N-H."""
    r_on = np.linalg.norm(np.asarray(o) - n)
    r_ch = np.linalg.norm(np.asarray(c) - h)
    r_oh = np.linalg.norm(np.asarray(o) - h)
    r_cn = np.linalg.norm(np.asarray(c) - n)
    return float(_COUPLING * (1.0 / r_on + 1.0 / r_ch - 1.0 / r_oh - 1.0 / r_cn))


def _backbone(model: ProteinModel):
    n = len(model)
    xyz = {name: np.full((n, 3), np.nan) for name in ("N", "CA", "C", "O")}
    for i, res in enumerate(model.residues):
        for name in xyz:
            atom = res.atom(name)
            if atom is not None:
                xyz[name][i] = atom
    complete = np.all([np.all(np.isfinite(a), axis=1) for a in xyz.values()], axis=0)
    return xyz, complete


def amide_hydrogens(model: ProteinModel) -> np.ndarray:
    """Reconstructed amide H positions; NaN where no donor exists.

    H sits 1.0 A from N along the direction of the preceding C=O bond,
    reversed. The first residue, prolines and residues after a chain break
    get no hydrogen.
    """
    xyz, complete = _backbone(model)
    h = np.full((len(model), 3), np.nan)
    for i in range(1, len(model)):
        if not (complete[i] and complete[i - 1]) or model.residues[i].name == "PRO":
            continue
        if model.residues[i].chain != model.residues[i - 1].chain:
            continue
        if np.linalg.norm(xyz["C"][i - 1] - xyz["N"][i]) > _MAX_PEPTIDE_BOND:
            continue
        co = xyz["C"][i - 1] - xyz["O"][i - 1]
        h[i] = xyz["N"][i] + _NH_LENGTH * co / np.linalg.norm(co)
    return h


def hbond_energies(model: ProteinModel) -> np.ndarray:
    """Matrix ``E[i, j]``: energy of C=O(i) accepting from N-H(j).

    Pairs closer than two residues in sequence, and pairs without a donor
    hydrogen, are set to 0.
    """
    xyz, complete = _backbone(model)
    h = amide_hydrogens(model)
    n = len(model)
    o, c = xyz["O"][:, None, :], xyz["C"][:, None, :]
    nn, hh = xyz["N"][None, :, :], h[None, :, :]
    with np.errstate(invalid="ignore"):
        energy = _COUPLING * (
            1.0 / np.linalg.norm(o - nn, axis=2)
            + 1.0 / np.linalg.norm(c - hh, axis=2)
            - 1.0 / np.linalg.norm(o - hh, axis=2)
            - 1.0 / np.linalg.norm(c - nn, axis=2)
        )
    idx = np.arange(n)
    near = np.abs(idx[:, None] - idx[None, :]) < 2
    valid = complete[:, None] & np.all(np.isfinite(h), axis=1)[None, :] & ~near
    return np.where(valid & np.isfinite(energy), energy, 0.0)


def assign_secondary_structure(model: ProteinModel) -> str:
    """Return an H/E/C string with one letter per residue."""
    n = len(model)
    if n < 3:
        return "C" * n
    hb = hbond_energies(model) < HBOND_CUTOFF

    def bond(i: int, j: int) -> bool:
        return 0 <= i < n and 0 <= j < n and bool(hb[i, j])

    ss = ["C"] * n
    turn4 = [bond(i, i + 4) for i in range(n)]
    for i in range(1, n):
        if turn4[i - 1] and turn4[i]:
            for k in range(i, min(i + 4, n)):
                ss[k] = "H"

    for i in range(1, n - 1):
        for j in range(i + 3, n - 1):
            parallel = (bond(i - 1, j) and bond(j, i + 1)) or (bond(j - 1, i) and bond(i, j + 1))
            antiparallel = (bond(i, j) and bond(j, i)) or (bond(i - 1, j + 1) and bond(j - 1, i + 1))
            if parallel or antiparallel:
                for k in (i, j):
                    if ss[k] != "H":
                        ss[k] = "E"
    return "".join(ss)
