"""PDB parsing and superposition-based structure comparison.

Coordinates are in Angstrom throughout. Superpositions map the *mobile*
(model) coordinates onto the *reference* (native) frame as
``x @ rotation.T + translation``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

log = logging.getLogger(__name__)

__all__ = [
    "AlignmentResult",
    "PdbParseError",
    "ProteinModel",
    "Residue",
    "StructureError",
    "ca_distance_matrix",
    "compare_structures",
    "gdt_ts",
    "global_fractions",
    "kabsch_superpose",
    "parse_pdb",
    "read_pdb",
    "tm_d0",
    "tm_score",
    "tm_terms",
]

GDT_CUTOFFS = (1.0, 2.0, 4.0, 8.0)
SEED_FRAGMENT_LENGTHS = (3, 5, 7)
MAX_REFINE_ROUNDS = 20

THREE_TO_ONE = {
    "ALA": "A", "ARG": "R", "ASN": "N", "ASP": "D", "CYS": "C",
    "GLN": "Q", "GLU": "E", "GLY": "G", "HIS": "H", "ILE": "I",
    "LEU": "L", "LYS": "K", "MET": "M", "PHE": "F", "PRO": "P",
    "SER": "S", "THR": "T", "TRP": "W", "TYR": "Y", "VAL": "V",
    # common modified residues written as ATOM records
    "MSE": "M", "HSD": "H", "HSE": "H", "HSP": "H", "HIE": "H",
    "HID": "H", "HIP": "H", "CYX": "C", "SEC": "C", "PYL": "K",
}


class StructureError(ValueError):
    """Raised for structures that cannot be compared or measured."""


class PdbParseError(StructureError):
    """Raised when PDB text cannot be turned into a model."""

    def __init__(self, message: str, line_number: Optional[int] = None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


@dataclass(frozen=True, eq=False)
class Residue:
    name: str
    chain: str
    seqnum: int
    icode: str
    atom_names: tuple[str, ...]
    elements: tuple[str, ...]
    coords: np.ndarray  # (n_atoms, 3)

    @property
    def key(self) -> tuple[str, int, str]:
        return (self.chain, self.seqnum, self.icode)

    @property
    def one_letter(self) -> str:
        return THREE_TO_ONE.get(self.name, "X")

    def atom(self, name: str) -> Optional[np.ndarray]:
        try:
            return self.coords[self.atom_names.index(name)]
        except ValueError:
            return None


@dataclass(frozen=True, eq=False)
class ProteinModel:
    model_id: str
    target_id: str
    residues: tuple[Residue, ...]
    dropped_residues: int = 0

    @property
    def sequence(self) -> str:
        return "".join(r.one_letter for r in self.residues)

    def __len__(self) -> int:
        return len(self.residues)

    def keys(self) -> list[tuple[str, int, str]]:
        return [r.key for r in self.residues]

    def ca_coords(self) -> np.ndarray:
        return np.array([r.atom("CA") for r in self.residues], dtype=float).reshape(-1, 3)

    def atom_table(self) -> tuple[np.ndarray, list[str], np.ndarray]:
        """Flatten atoms into ``(coords, elements, residue_index)``."""
        coords = [r.coords for r in self.residues]
        elements: list[str] = []
        owner = []
        for i, r in enumerate(self.residues):
            elements.extend(r.elements)
            owner.extend([i] * len(r.elements))
        xyz = np.vstack(coords) if coords else np.zeros((0, 3))
        return xyz, elements, np.asarray(owner, dtype=int)

    def transformed(self, rotation: np.ndarray, translation: np.ndarray) -> "ProteinModel":
        """Return a copy with every atom moved by ``x @ R.T + t``."""
        rot = np.asarray(rotation, dtype=float)
        t = np.asarray(translation, dtype=float)
        residues = tuple(
            Residue(r.name, r.chain, r.seqnum, r.icode, r.atom_names, r.elements,
                    r.coords @ rot.T + t)
            for r in self.residues
        )
        return ProteinModel(self.model_id, self.target_id, residues, self.dropped_residues)


@dataclass(frozen=True)
class AlignmentResult:
    rotation: np.ndarray
    translation: np.ndarray
    rmsd: float
    tm_score: Optional[float] = None
    d0: Optional[float] = None
    gdt_ts: Optional[float] = None
    per_threshold_fractions: Optional[dict[float, float]] = None
    n_aligned: int = 0


# ---------------------------------------------------------------------------
# parsing


def _element_of(atom_name_field: str, element_field: str) -> str:
    element = element_field.strip().upper()
    if element:
        return element
    name = atom_name_field.strip().lstrip("0123456789")
    return name[:1].upper() if name else ""


def parse_pdb(pdb_text: str, model_id: str = "", target_id: str = "") -> ProteinModel:
    """Parse ATOM records of the first MODEL block into a :class:`ProteinModel`.

    HETATM records and hydrogens are skipped, alternate locations other than
    blank or ``'A'`` are discarded, and residues without a CA atom are
    dropped (their count is kept in ``dropped_residues``).
    """
    order: list[tuple[str, int, str]] = []
    partial: dict[tuple[str, int, str], dict] = {}
    seen_model = False

    for lineno, line in enumerate(pdb_text.splitlines(), start=1):
        record = line[:6]
        if record.startswith("MODEL"):
            if seen_model:
                break
            seen_model = True
            continue
        if record.startswith("ENDMDL"):
            break
        if not record.startswith("ATOM"):
            continue
        if len(line) < 54:
            raise PdbParseError("truncated ATOM record", lineno)
        altloc = line[16]
        if altloc not in (" ", "A"):
            continue
        atom_name = line[12:16].strip()
        element = _element_of(line[12:16], line[76:78] if len(line) >= 78 else "")
        if element in ("H", "D"):
            continue
        try:
            xyz = (float(line[30:38]), float(line[38:46]), float(line[46:54]))
        except ValueError:
            raise PdbParseError("malformed coordinate field", lineno) from None
        if not all(math.isfinite(c) for c in xyz):
            raise PdbParseError("non-finite coordinate", lineno)
        try:
            seqnum = int(line[22:26])
        except ValueError:
            raise PdbParseError("malformed residue number", lineno) from None
        key = (line[21].strip(), seqnum, line[26].strip())
        res = partial.get(key)
        if res is None:
            res = {"name": line[17:20].strip(), "atoms": {}}
            partial[key] = res
            order.append(key)
        # first occurrence wins for duplicated atom names
        res["atoms"].setdefault(atom_name, (element, xyz))

    residues = []
    dropped = 0
    for key in order:
        res = partial[key]
        if "CA" not in res["atoms"]:
            dropped += 1
            continue
        names = tuple(res["atoms"])
        residues.append(Residue(
            name=res["name"],
            chain=key[0],
            seqnum=key[1],
            icode=key[2],
            atom_names=names,
            elements=tuple(res["atoms"][n][0] for n in names),
            coords=np.array([res["atoms"][n][1] for n in names], dtype=float),
        ))
    if not residues:
        raise PdbParseError("no parsable residues")
    if dropped:
        log.warning("%s: dropped %d residue(s) without CA", model_id or "<model>", dropped)
    return ProteinModel(model_id, target_id, tuple(residues), dropped)


def read_pdb(path, target_id: str = "") -> ProteinModel:
    from pathlib import Path

    path = Path(path)
    return parse_pdb(path.read_text(), model_id=path.stem, target_id=target_id)


# ---------------------------------------------------------------------------
# geometry


def ca_distance_matrix(model: ProteinModel) -> np.ndarray:
    if len(model) < 2:
        raise StructureError("degenerate chain: need at least 2 residues")
    ca = model.ca_coords()
    diff = ca[:, None, :] - ca[None, :, :]
    return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))


def _as_points(coords) -> np.ndarray:
    pts = np.asarray(coords, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise StructureError("coordinates must be an (n, 3) array")
    if not np.all(np.isfinite(pts)):
        raise StructureError("coordinates must be finite")
    return pts


def _batched_kabsch(mobile: np.ndarray, reference: np.ndarray, weights: np.ndarray):
    """Weighted Kabsch fits for a stack of 0/1 weight rows.

    ``weights`` has shape (S, n); returns rotations (S, 3, 3) and
    translations (S, 3).
    """
    wsum = weights.sum(axis=1)
    pm = weights @ mobile / wsum[:, None]
    qm = weights @ reference / wsum[:, None]
    cov = np.einsum("si,ij,ik->sjk", weights, mobile, reference)
    cov -= wsum[:, None, None] * pm[:, :, None] * qm[:, None, :]
    u, _, vt = np.linalg.svd(cov)
    v = np.transpose(vt, (0, 2, 1))
    ut = np.transpose(u, (0, 2, 1))
    sign = np.sign(np.linalg.det(v @ ut))
    sign[sign == 0] = 1.0
    v[:, :, 2] *= sign[:, None]
    rot = v @ ut
    trans = qm - np.einsum("sjk,sk->sj", rot, pm)
    return rot, trans


def kabsch_superpose(mobile, reference) -> AlignmentResult:
    """Least-squares rigid superposition of ``mobile`` onto ``reference``.

    Reflections are excluded by flipping the axis of the smallest singular
    value when the optimal orthogonal matrix would have determinant -1.
    """
    p = _as_points(mobile)
    q = _as_points(reference)
    if len(p) != len(q):
        raise StructureError(f"length mismatch: {len(p)} vs {len(q)} points")
    if len(p) < 3:
        raise StructureError("need at least 3 points to superpose")
    rot, trans = _batched_kabsch(p, q, np.ones((1, len(p))))
    rot, trans = rot[0], trans[0]
    moved = p @ rot.T + trans
    rmsd = float(np.sqrt(np.mean(np.sum((moved - q) ** 2, axis=1))))
    return AlignmentResult(rotation=rot, translation=trans, rmsd=rmsd, n_aligned=len(p))


def tm_d0(length: int) -> float:
    """TM-score distance scale for a native of ``length`` residues (0.5 floor)."""
    if length <= 21:
        return 0.5
    return max(0.5, 1.24 * (length - 15) ** (1.0 / 3.0) - 1.8)


def tm_terms(distances, d0: float) -> np.ndarray:
    """Per-pair TM-score contributions ``1 / (1 + (d / d0)^2)``."""
    d = np.asarray(distances, dtype=float)
    return 1.0 / (1.0 + (d / d0) ** 2)


def _matched_ca(model: ProteinModel, native: ProteinModel) -> tuple[np.ndarray, np.ndarray, int]:
    if len(native) < 3:
        raise StructureError("native must have at least 3 residues")
    index = {k: i for i, k in enumerate(model.keys())}
    pairs = [(index[k], j) for j, k in enumerate(native.keys()) if k in index]
    if len(pairs) < 3:
        raise StructureError(
            f"no common residues: {len(pairs)} residue(s) shared by model and native"
        )
    mi, ni = (np.array(x, dtype=int) for x in zip(*pairs))
    return model.ca_coords()[mi], native.ca_coords()[ni], len(native)


def _seed_masks(n: int) -> np.ndarray:
    """Global fit plus every contiguous fragment of length 3, 5 and 7."""
    rows = [np.ones(n, dtype=bool)]
    for size in SEED_FRAGMENT_LENGTHS:
        for start in range(0, n - size + 1):
            m = np.zeros(n, dtype=bool)
            m[start:start + size] = True
            rows.append(m)
    return np.array(rows)


def _distances(mobile: np.ndarray, reference: np.ndarray, rot: np.ndarray, trans: np.ndarray):
    moved = np.einsum("sjk,ik->sij", rot, mobile) + trans[:, None, :]
    return np.sqrt(np.sum((moved - reference[None]) ** 2, axis=2))


def _refine(mobile, reference, seeds, select, score):
    """Iteratively re-superpose each seed on its selected subset.

    ``select(dist)`` picks the next subset from distances, ``score(dist)``
    gives the per-seed objective. Returns the best score seen and the
    superposition that achieved it.
    """
    masks = seeds.copy()
    active = np.ones(len(masks), dtype=bool)
    best = -np.inf
    best_rt = (np.eye(3), np.zeros(3))
    for _ in range(MAX_REFINE_ROUNDS):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        rot, trans = _batched_kabsch(mobile, reference, masks[idx].astype(float))
        dist = _distances(mobile, reference, rot, trans)
        values = score(dist)
        top = int(np.argmax(values))
        if values[top] > best:
            best = float(values[top])
            best_rt = (rot[top], trans[top])
        new = select(dist)
        changed = np.any(new != masks[idx], axis=1) & (new.sum(axis=1) >= 3)
        masks[idx[changed]] = new[changed]
        active[idx[~changed]] = False
    return best, best_rt


def _tm_search(mobile, reference, length):
    d0 = tm_d0(length)
    d_search = min(max(d0, 4.5), 8.0)
    best, (rot, trans) = _refine(
        mobile, reference, _seed_masks(len(mobile)),
        select=lambda d: d < d_search,
        score=lambda d: np.sum(tm_terms(d, d0), axis=1) / length,
    )
    return min(best, 1.0), d0, rot, trans


def _gdt_search(mobile, reference, length):
    seeds = _seed_masks(len(mobile))
    fractions = {}
    for cutoff in GDT_CUTOFFS:
        count, _ = _refine(
            mobile, reference, seeds,
            select=lambda d, c=cutoff: d <= c,
            score=lambda d, c=cutoff: np.sum(d <= c, axis=1).astype(float),
        )
        fractions[cutoff] = count / length
    return float(np.mean(list(fractions.values()))), fractions


def tm_score(model: ProteinModel, native: ProteinModel) -> AlignmentResult:
    """TM-score of ``model`` against ``native``, normalized by native length.

    Residues are matched by (chain, seqnum, insertion code); unmatched native
    residues still count toward the length.
    """
    mobile, reference, length = _matched_ca(model, native)
    base = kabsch_superpose(mobile, reference)
    tm, d0, rot, trans = _tm_search(mobile, reference, length)
    return AlignmentResult(rot, trans, base.rmsd, tm_score=tm, d0=d0, n_aligned=len(mobile))


def gdt_ts(model: ProteinModel, native: ProteinModel) -> AlignmentResult:
    """GDT-TS from a fragment-seeded superposition search.

    Each cutoff (1, 2, 4, 8 A) is maximized independently; fractions are
    taken over the native length.
    """
    mobile, reference, length = _matched_ca(model, native)
    base = kabsch_superpose(mobile, reference)
    gdt, fractions = _gdt_search(mobile, reference, length)
    return AlignmentResult(base.rotation, base.translation, base.rmsd, gdt_ts=gdt,
                           per_threshold_fractions=fractions, n_aligned=len(mobile))


def compare_structures(model: ProteinModel, native: ProteinModel) -> AlignmentResult:
    """RMSD, TM-score and GDT-TS in one pass (shares residue matching)."""
    mobile, reference, length = _matched_ca(model, native)
    base = kabsch_superpose(mobile, reference)
    tm, d0, rot, trans = _tm_search(mobile, reference, length)
    gdt, fractions = _gdt_search(mobile, reference, length)
    return AlignmentResult(rot, trans, base.rmsd, tm_score=tm, d0=d0, gdt_ts=gdt,
                           per_threshold_fractions=fractions, n_aligned=len(mobile))


def global_fractions(model_xyz: Sequence, native_xyz: Sequence,
                     cutoffs: Iterable[float] = GDT_CUTOFFS) -> dict[float, float]:
    """Per-cutoff fractions under the plain global Kabsch fit."""
    fit = kabsch_superpose(model_xyz, native_xyz)
    p = _as_points(model_xyz)
    d = np.linalg.norm(p @ fit.rotation.T + fit.translation - _as_points(native_xyz), axis=1)
    return {c: float(np.mean(d <= c)) for c in cutoffs}
