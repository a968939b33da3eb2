import numpy as np
import pytest

from decoyqa.backbone import build_backbone
from decoyqa.structure import ProteinModel, Residue


def ca_model(xyz, model_id="m", target_id="T", names=None) -> ProteinModel:
    """CA-only model from an (n, 3) array, numbered 1..n on chain A."""
    xyz = np.asarray(xyz, dtype=float)
    names = names or ["ALA"] * len(xyz)
    residues = tuple(
        Residue(names[i], "A", i + 1, "", ("CA",), ("C",), xyz[i:i + 1].copy())
        for i in range(len(xyz))
    )
    return ProteinModel(model_id, target_id, residues)


def random_chain(rng, n, step=3.8):
    """Random-walk CA trace with roughly protein-like spacing."""
    steps = rng.normal(size=(n, 3))
    steps *= step / np.linalg.norm(steps, axis=1, keepdims=True)
    return np.cumsum(steps, axis=0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def helix12():
    return build_backbone("A" * 12, -57.0, -47.0, model_id="helix", target_id="H")


_ACCEPTANCE: list[str] = []


@pytest.fixture
def criterion():
    """Record one acceptance line (PASS/FAIL plus measured values) and print it."""

    def record(name: str, ok: bool, detail: str) -> bool:
        line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
        _ACCEPTANCE.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
