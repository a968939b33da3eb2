"""Build idealized backbones from torsion angles and write PDB text.

Used for synthetic structure pools and geometric test fixtures.
"""

from __future__ import annotations

import numpy as np

from .structure import THREE_TO_ONE, ProteinModel, Residue

ONE_TO_THREE = {v: k for k, v in THREE_TO_ONE.items() if len(k) == 3 and k not in
                ("MSE", "HSD", "HSE", "HSP", "HIE", "HID", "HIP", "CYX", "SEC", "PYL")}

# Engh & Huber style ideal geometry
N_CA, CA_C, C_N, C_O, CA_CB = 1.458, 1.525, 1.329, 1.231, 1.530
ANG_N_CA_C = np.radians(111.2)
ANG_CA_C_N = np.radians(116.2)
ANG_C_N_CA = np.radians(121.7)
ANG_CA_C_O = np.radians(120.5)
ANG_N_CA_CB = np.radians(110.5)
TORSION_CB = np.radians(-122.6)


def place_atom(a, b, c, bond: float, angle: float, torsion: float) -> np.ndarray:
    """Position of atom D with |CD| = bond, angle BCD and torsion ABCD (radians)."""
    bc = c - b
    bc /= np.linalg.norm(bc)
    n = np.cross(b - a, bc)
    n /= np.linalg.norm(n)
    m = np.cross(n, bc)
    local = np.array([-bond * np.cos(angle),
                      bond * np.sin(angle) * np.cos(torsion),
                      bond * np.sin(angle) * np.sin(torsion)])
    return c + local[0] * bc + local[1] * m + local[2] * n


def build_backbone(sequence: str, phi, psi, omega=180.0, *, model_id: str = "model",
                   target_id: str = "target", chain: str = "A") -> ProteinModel:
    """Chain of N, CA, C, O (+CB for non-glycine) from torsions in degrees.

    ``phi``, ``psi`` and ``omega`` may be scalars or per-residue sequences.
    """
    n = len(sequence)
    phi = np.radians(np.broadcast_to(np.asarray(phi, dtype=float), (n,)))
    psi = np.radians(np.broadcast_to(np.asarray(psi, dtype=float), (n,)))
    omega = np.radians(np.broadcast_to(np.asarray(omega, dtype=float), (n,)))

    N = [np.zeros(3)]
    CA = [np.array([N_CA, 0.0, 0.0])]
    C = [CA[0] + CA_C * np.array([-np.cos(ANG_N_CA_C), np.sin(ANG_N_CA_C), 0.0])]
    for i in range(1, n):
        N.append(place_atom(N[i - 1], CA[i - 1], C[i - 1], C_N, ANG_CA_C_N, psi[i - 1]))
        CA.append(place_atom(CA[i - 1], C[i - 1], N[i], N_CA, ANG_C_N_CA, omega[i - 1]))
        C.append(place_atom(C[i - 1], N[i], CA[i], CA_C, ANG_N_CA_C, phi[i]))

    residues = []
    for i, aa in enumerate(sequence):
        o = place_atom(N[i], CA[i], C[i], C_O, ANG_CA_C_O, psi[i] + np.pi)
        names = ["N", "CA", "C", "O"]
        coords = [N[i], CA[i], C[i], o]
        if aa != "G":
            names.append("CB")
            coords.append(place_atom(C[i], N[i], CA[i], CA_CB, ANG_N_CA_CB, TORSION_CB))
        residues.append(Residue(
            name=ONE_TO_THREE.get(aa, "UNK"), chain=chain, seqnum=i + 1, icode="",
            atom_names=tuple(names), elements=tuple(x[0] for x in names),
            coords=np.array(coords),
        ))
    return ProteinModel(model_id, target_id, tuple(residues))


def format_pdb(model: ProteinModel) -> str:
    """Fixed-width ATOM records for ``model`` followed by END."""
    lines = []
    serial = 1
    for r in model.residues:
        for name, element, (x, y, z) in zip(r.atom_names, r.elements, r.coords):
            padded = f" {name:<3}" if len(name) < 4 else name
            lines.append(
                f"ATOM  {serial:5d} {padded:<4} {r.name:>3} {r.chain or ' ':1}"
                f"{r.seqnum:4d}{r.icode or ' ':1}   {x:8.3f}{y:8.3f}{z:8.3f}"
                f"{1.0:6.2f}{0.0:6.2f}          {element:>2}"
            )
            serial += 1
    lines.append("END")
    return "\n".join(lines) + "\n"
