import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from decoyqa.features.sasa import compute_sasa, principal_frame, shrake_rupley, sphere_points
from decoyqa.structure import ProteinModel, Residue

PROBE = 1.4


def test_isolated_carbon_matches_sphere_area():
    area = shrake_rupley([[0.0, 0.0, 0.0]], [1.7], PROBE, 960)[0]
    exact = 4 * np.pi * (1.7 + PROBE) ** 2
    assert exact == pytest.approx(120.76, abs=0.01)
    assert abs(area - exact) / exact < 0.02


def test_distant_pair_each_full_sphere():
    sep = 2 * (1.7 + PROBE) + 0.01
    areas = shrake_rupley([[0, 0, 0], [sep, 0, 0]], [1.7, 1.7])
    np.testing.assert_allclose(areas, 4 * np.pi * (1.7 + PROBE) ** 2)


def test_enclosed_atom_has_zero_area():
    shell = 2.0 * sphere_points(30)
    coords = np.vstack([[0.0, 0.0, 0.0], shell])
    areas = shrake_rupley(coords, [1.7] * 31)
    assert areas[0] == 0.0


def test_sphere_points_are_unit_and_deterministic():
    a, b = sphere_points(960), sphere_points(960)
    np.testing.assert_array_equal(a, b)
    np.testing.assert_allclose(np.linalg.norm(a, axis=1), 1.0)
    assert abs(a.mean(axis=0)).max() < 1e-2


def _random_structure(rng):
    n = int(rng.integers(4, 14))
    coords = rng.uniform(0, 8, size=(n, 3))
    elements = list(rng.choice(["C", "N", "O", "S"], size=n))
    owners = np.sort(rng.integers(0, max(1, n // 2), size=n))
    residues = []
    for k, i in enumerate(np.unique(owners)):
        idx = np.flatnonzero(owners == i)
        names = ["CA"] + [f"X{j}" for j in range(1, len(idx))]
        residues.append(Residue("ALA", "A", k + 1, "", tuple(names),
                                tuple(elements[j] for j in idx), coords[idx]))
    return ProteinModel("r", "T", tuple(residues)), coords, elements


def test_additivity_and_removal_monotonicity_on_random_structures():
    rng = np.random.default_rng(2024)
    for _ in range(50):
        model, coords, elements = _random_structure(rng)
        atom, residue = compute_sasa(model)
        assert abs(atom.sum() - residue.sum()) <= 1e-6

        radii = [{"C": 1.7, "N": 1.55, "O": 1.52, "S": 1.8}[e] for e in elements]
        frame = principal_frame(coords)
        base = shrake_rupley(coords, radii, orientation=frame)
        for k in range(len(coords)):
            keep = [i for i in range(len(coords)) if i != k]
            after = shrake_rupley(coords[keep], [radii[i] for i in keep], orientation=frame)
            assert np.all(after >= base[keep])


def test_model_sasa_is_rigid_motion_invariant(helix12):
    _, before = compute_sasa(helix12)
    for seed in range(3):
        rot = Rotation.random(random_state=seed).as_matrix()
        _, after = compute_sasa(helix12.transformed(rot, np.array([5.0, -7.0, 2.0])))
        np.testing.assert_allclose(after, before, rtol=0, atol=1e-12)
