import numpy as np
import pytest

from qunravel import ProjectorFamily, validate_family


def random_unitary(rng, m):
    z = rng.standard_normal((m, m)) + 1j * rng.standard_normal((m, m))
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def rotated_family(seed, block_sizes, omega=1.0):
    """Random-basis family with the given projector ranks."""
    rng = np.random.default_rng(seed)
    m = sum(block_sizes)
    u = random_unitary(rng, m)
    projectors = []
    start = 0
    for size in block_sizes:
        block = u[:, start : start + size]
        projectors.append(block @ block.conj().T)
        start += size
    eigenvalues = np.arange(len(block_sizes), dtype=float)
    return validate_family(projectors, eigenvalues, omega)


def random_state(seed, m):
    rng = np.random.default_rng(seed)
    vec = rng.standard_normal(m) + 1j * rng.standard_normal(m)
    return vec / np.linalg.norm(vec)


@pytest.fixture
def two_level() -> ProjectorFamily:
    return validate_family(
        [np.diag([1.0, 0.0]), np.diag([0.0, 1.0])], [0.0, 1.0], omega=1.0
    )


@pytest.fixture
def psi_unbalanced() -> np.ndarray:
    return np.array([np.sqrt(0.3), np.sqrt(0.7)], dtype=complex)
