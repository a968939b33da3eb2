"""Shrake-Rupley solvent accessible surface area."""

from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree

from ..structure import ProteinModel

ELEMENT_RADII = {"C": 1.7, "N": 1.55, "O": 1.52, "S": 1.8}
DEFAULT_RADIUS = 1.7


def sphere_points(n: int) -> np.ndarray:
    """Unit vectors on a golden-section spiral; deterministic for a given ``n``."""
    k = np.arange(n, dtype=float) + 0.5
    z = 1.0 - 2.0 * k / n
    r = np.sqrt(1.0 - z * z)
    theta = np.pi * (3.0 - np.sqrt(5.0)) * k
    return np.column_stack([r * np.cos(theta), r * np.sin(theta), z])


def atom_radii(elements) -> np.ndarray:
    return np.array([ELEMENT_RADII.get(e, DEFAULT_RADIUS) for e in elements], dtype=float)


def principal_frame(coords) -> np.ndarray:
    """Right-handed principal-axis frame (columns) of a point cloud.

    Axis signs follow the third moment along each axis, so the frame turns
    with the structure under rigid motion. Degenerate clouds get identity.
    """
    xyz = np.asarray(coords, dtype=float).reshape(-1, 3)
    if len(xyz) < 3:
        return np.eye(3)
    centered = xyz - xyz.mean(axis=0)
    evals, evecs = np.linalg.eigh(centered.T @ centered)
    scale = max(evals[-1], 1e-300)
    if np.min(np.diff(evals)) < 1e-9 * scale:
        return np.eye(3)
    for k in range(2):
        skew = np.sum((centered @ evecs[:, k]) ** 3)
        if skew < 0:
            evecs[:, k] = -evecs[:, k]
    evecs[:, 2] = np.cross(evecs[:, 0], evecs[:, 1])
    return evecs


def shrake_rupley(coords, radii, probe_radius: float = 1.4, n_points: int = 960,
                  orientation=None) -> np.ndarray:
    """Per-atom accessible area (A^2) for spheres at ``coords`` with ``radii``.

    Parameters
    ----------
    coords : array, shape (n_atoms, 3)
    radii : array, shape (n_atoms,)
        Van der Waals radii; the probe radius is added internally.
    probe_radius : float
    n_points : int
        Sample points per atom sphere.
    orientation : array, shape (3, 3), optional
        Rotation applied to the sample lattice (identity when omitted).

    Returns
    -------
    areas : array, shape (n_atoms,)
    """
    xyz = np.asarray(coords, dtype=float).reshape(-1, 3)
    ext = np.asarray(radii, dtype=float) + probe_radius
    areas = np.zeros(len(xyz))
    if len(xyz) == 0:
        return areas
    unit = sphere_points(n_points)
    if orientation is not None:
        unit = unit @ np.asarray(orientation, dtype=float).T
    tree = cKDTree(xyz)
    for i in range(len(xyz)):
        nbrs = [j for j in tree.query_ball_point(xyz[i], ext[i] + ext.max()) if j != i]
        nbrs = [j for j in nbrs if np.linalg.norm(xyz[j] - xyz[i]) < ext[i] + ext[j]]
        points = xyz[i] + ext[i] * unit
        if nbrs:
            nb = np.asarray(sorted(nbrs))
            d2 = np.sum((points[:, None, :] - xyz[nb][None, :, :]) ** 2, axis=2)
            buried = np.any(d2 < ext[nb][None, :] ** 2, axis=1)
            accessible = n_points - int(buried.sum())
        else:
            accessible = n_points
        areas[i] = accessible / n_points * 4.0 * np.pi * ext[i] ** 2
    return areas


def compute_sasa(model: ProteinModel, probe_radius: float = 1.4,
                 n_points: int = 960) -> tuple[np.ndarray, np.ndarray]:
    """Per-atom and per-residue SASA of ``model``.

    The sample lattice is aligned with the model's principal axes, so the
    result does not depend on where the model sits in space. Returns
    ``(atom_sasa, residue_sasa)``; atoms are in
    :meth:`ProteinModel.atom_table` order.
    """
    xyz, elements, owner = model.atom_table()
    atom_sasa = shrake_rupley(xyz, atom_radii(elements), probe_radius, n_points,
                              orientation=principal_frame(xyz))
    residue_sasa = np.zeros(len(model))
    np.add.at(residue_sasa, owner, atom_sasa)
    return atom_sasa, residue_sasa
