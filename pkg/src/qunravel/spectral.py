"""States, density matrices, and spectral projector families.

The measured observable enters all dynamics only through its spectral data:
a family of orthogonal projectors ``P_0..P_N`` with distinct spectral values
``nu_n`` and level energies ``eps_n = omega * nu_n``.  This module validates
that data, computes occupation probabilities of a pure state across the
family, and implements the two textbook measurement maps as checkable
operations: block dephasing of a density matrix (the ensemble-level map) and
the distance of a pure state from the nearest spectral subspace (the
individual-state map).

All container types are immutable after construction; the wrapped numpy
arrays are marked read-only.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionMismatch,
    DuplicateEigenvalue,
    NotComplete,
    NotIdempotent,
    NotOrthogonal,
    ZeroState,
)
from .jsonio import complex_to_pairs, pairs_to_complex

#: absolute operator-norm tolerance for structural validation
DEFAULT_TOL = 1e-10

#: states with norm below this are rejected as numerically zero
ZERO_NORM_TOL = 1e-12

#: spectral values closer than this are considered degenerate
EIGENVALUE_GROUP_TOL = 1e-8


def _readonly(a):
    a = np.array(a)
    a.setflags(write=False)
    return a


def _opnorm(a):
    """Spectral (operator 2-) norm."""
    return float(np.linalg.norm(a, ord=2))


@dataclass(frozen=True)
class PureState:
    """Unit vector in C^m describing an individual system."""

    amplitudes: np.ndarray
    tol: float = field(default=1e-8, repr=False, compare=False)

    def __post_init__(self):
        vec = np.asarray(self.amplitudes, dtype=complex)
        if vec.ndim != 1 or vec.size == 0:
            raise ValueError("state amplitudes must form a nonempty 1-d vector")
        if not np.all(np.isfinite(vec.view(float))):
            raise ValueError("state amplitudes must be finite")
        nrm = np.linalg.norm(vec)
        if nrm < ZERO_NORM_TOL:
            raise ZeroState(f"state norm {nrm:.3e} below {ZERO_NORM_TOL:.1e}")
        if abs(nrm - 1.0) > self.tol:
            raise ValueError(f"state norm {nrm!r} deviates from 1 by more than {self.tol}")
        object.__setattr__(self, "amplitudes", _readonly(vec))

    @classmethod
    def normalized(cls, vec) -> "PureState":
        """Build a unit state from any nonzero vector."""
        vec = np.asarray(vec, dtype=complex)
        nrm = np.linalg.norm(vec)
        if nrm < ZERO_NORM_TOL:
            raise ZeroState(f"cannot normalize vector with norm {nrm:.3e}")
        return cls(vec / nrm)

    @property
    def dim(self) -> int:
        return self.amplitudes.shape[0]


@dataclass(frozen=True)
class DensityMatrix:
    """Positive trace-one Hermitian matrix describing an ensemble."""

    entries: np.ndarray
    tol: float = field(default=1e-8, repr=False, compare=False)

    def __post_init__(self):
        mat = np.asarray(self.entries, dtype=complex)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1] or mat.shape[0] == 0:
            raise ValueError("density matrix must be square and nonempty")
        if _opnorm(mat - mat.conj().T) > self.tol:
            raise ValueError("density matrix is not Hermitian within tolerance")
        tr = np.trace(mat).real
        if abs(tr - 1.0) > self.tol:
            raise ValueError(f"density matrix trace {tr!r} deviates from 1")
        smallest = float(np.linalg.eigvalsh(0.5 * (mat + mat.conj().T)).min())
        if smallest < -self.tol:
            raise ValueError(f"density matrix has negative eigenvalue {smallest:.3e}")
        object.__setattr__(self, "entries", _readonly(mat))

    @classmethod
    def from_pure(cls, psi) -> "DensityMatrix":
        vec = psi.amplitudes if isinstance(psi, PureState) else np.asarray(psi, dtype=complex)
        n2 = float(np.vdot(vec, vec).real)
        if n2 < ZERO_NORM_TOL**2:
            raise ZeroState("cannot project onto a zero vector")
        return cls(np.outer(vec, vec.conj()) / n2)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]


@dataclass(frozen=True)
class ProjectorFamily:
    """Spectral data of the measured observable.

    Attributes
    ----------
    projectors : ndarray, shape (N+1, m, m)
        Orthogonal projectors, mutually orthogonal and summing to identity.
    eigenvalues : ndarray, shape (N+1,)
        Distinct real spectral values, one per projector.
    omega : float
        Angular frequency scale; level energies are ``omega * eigenvalues``.
    tol : float
        Absolute operator-norm tolerance used for validation.
    """

    projectors: np.ndarray
    eigenvalues: np.ndarray
    omega: float = 1.0
    tol: float = field(default=DEFAULT_TOL, repr=False, compare=False)

    def __post_init__(self):
        proj = np.asarray(self.projectors, dtype=complex)
        vals = np.asarray(self.eigenvalues, dtype=float)
        if proj.ndim != 3 or proj.shape[1] != proj.shape[2]:
            raise DimensionMismatch("projectors must be a stack of square matrices of equal size")
        if proj.shape[0] == 0:
            raise ValueError("a projector family needs at least one projector")
        if vals.ndim != 1 or vals.shape[0] != proj.shape[0]:
            raise ValueError("need exactly one spectral value per projector")
        if not (np.isfinite(self.omega) and self.omega > 0):
            raise ValueError("omega must be a positive real frequency")
        tol = self.tol
        for n in range(proj.shape[0]):
            p = proj[n]
            herm = _opnorm(p - p.conj().T)
            if herm > tol:
                raise NotIdempotent(
                    f"projector {n} is not Hermitian: residual {herm:.3e} > {tol:.1e}",
                    indices=(n, n),
                    residual=herm,
                )
            idem = _opnorm(p @ p - p)
            if idem > tol:
                raise NotIdempotent(
                    f"projector {n} is not idempotent: residual {idem:.3e} > {tol:.1e}",
                    indices=(n, n),
                    residual=idem,
                )
        for k in range(proj.shape[0]):
            for l in range(k + 1, proj.shape[0]):
                cross = _opnorm(proj[k] @ proj[l])
                if cross > tol:
                    raise NotOrthogonal(
                        f"projectors {k} and {l} overlap: residual {cross:.3e} > {tol:.1e}",
                        indices=(k, l),
                        residual=cross,
                    )
        closure = _opnorm(proj.sum(axis=0) - np.eye(proj.shape[1]))
        if closure > tol:
            raise NotComplete(
                f"projectors do not sum to identity: residual {closure:.3e} > {tol:.1e}",
                residual=closure,
            )
        for k in range(vals.shape[0]):
            for l in range(k + 1, vals.shape[0]):
                gap = abs(vals[k] - vals[l])
                if gap <= EIGENVALUE_GROUP_TOL:
                    raise DuplicateEigenvalue(
                        f"spectral values {k} and {l} coincide (gap {gap:.3e})",
                        indices=(k, l),
                        residual=gap,
                    )
        object.__setattr__(self, "projectors", _readonly(proj))
        object.__setattr__(self, "eigenvalues", _readonly(vals))
        object.__setattr__(self, "omega", float(self.omega))

    @property
    def dim(self) -> int:
        """Hilbert space dimension m."""
        return self.projectors.shape[1]

    @property
    def size(self) -> int:
        """Number of projectors, N+1."""
        return self.projectors.shape[0]

    @property
    def energies(self) -> np.ndarray:
        """Level energies omega * nu_n (hbar = 1)."""
        return self.omega * self.eigenvalues

    def hamiltonian(self) -> np.ndarray:
        """H = sum_n energies[n] * P_n."""
        return np.einsum("n,nij->ij", self.energies, self.projectors)

    def observable(self) -> np.ndarray:
        """The measured operator sum_n nu_n * P_n."""
        return np.einsum("n,nij->ij", self.eigenvalues, self.projectors)


def validate_family(matrices, eigenvalues, omega: float = 1.0, tol: float = DEFAULT_TOL) -> ProjectorFamily:
    """Validate explicit projector matrices into a :class:`ProjectorFamily`.

    Checks run in a fixed order (projector structure, mutual orthogonality,
    completeness, distinct spectral values) and the first violation is raised;
    the input is never repaired.
    """
    matrices = [np.asarray(p, dtype=complex) for p in matrices]
    if not matrices:
        raise ValueError("a projector family needs at least one projector")
    m = matrices[0].shape
    for n, p in enumerate(matrices):
        if p.ndim != 2 or p.shape[0] != p.shape[1]:
            raise DimensionMismatch(f"projector {n} is not square: shape {p.shape}")
        if p.shape != m:
            raise DimensionMismatch(f"projector {n} has shape {p.shape}, expected {m}")
    return ProjectorFamily(np.stack(matrices), np.asarray(eigenvalues, dtype=float), omega, tol)


def family_from_observable(
    observable, omega: float = 1.0, group_tol: float = EIGENVALUE_GROUP_TOL, tol: float = DEFAULT_TOL
) -> ProjectorFamily:
    """Diagonalize a Hermitian operator into a projector family.

    Eigenvalues within ``group_tol`` of each other are merged into a single
    (higher-rank) projector, so degenerate levels keep their full subspaces.
    """
    obs = np.asarray(observable, dtype=complex)
    if obs.ndim != 2 or obs.shape[0] != obs.shape[1]:
        raise DimensionMismatch("observable must be a square matrix")
    if _opnorm(obs - obs.conj().T) > tol:
        raise ValueError("observable must be Hermitian")
    vals, vecs = np.linalg.eigh(obs)
    groups = []
    start = 0
    for i in range(1, len(vals) + 1):
        if i == len(vals) or vals[i] - vals[start] > group_tol:
            groups.append((start, i))
            start = i
    projectors = []
    spectrum = []
    for a, b in groups:
        block = vecs[:, a:b]
        projectors.append(block @ block.conj().T)
        spectrum.append(float(vals[a:b].mean()))
    return validate_family(projectors, spectrum, omega, tol)


def _state_vector(psi) -> np.ndarray:
    vec = psi.amplitudes if isinstance(psi, PureState) else np.asarray(psi, dtype=complex)
    if vec.ndim != 1:
        raise ValueError("expected a 1-d state vector")
    return vec


def occupation(psi, family: ProjectorFamily) -> np.ndarray:
    """Occupation probabilities p_n = <psi, P_n psi> / <psi, psi>.

    Raises :class:`ZeroState` for a numerically vanishing input vector.
    """
    vec = _state_vector(psi)
    if vec.shape[0] != family.dim:
        raise DimensionMismatch(f"state dim {vec.shape[0]} != family dim {family.dim}")
    n2 = float(np.vdot(vec, vec).real)
    if n2 < ZERO_NORM_TOL**2:
        raise ZeroState(f"state norm {np.sqrt(n2):.3e} below {ZERO_NORM_TOL:.1e}")
    proj = np.einsum("nij,j->ni", family.projectors, vec)
    return np.einsum("i,ni->n", vec.conj(), proj).real / n2


def pair_occupation(psi, family: ProjectorFamily, k: int, n: int) -> float:
    """<psi, P_k P_n psi> / <psi, psi>.

    Equals ``occupation(psi)[n]`` for ``k == n`` and vanishes otherwise; the
    identity is exercised by the test suite rather than assumed here.
    """
    if not (0 <= k < family.size and 0 <= n < family.size):
        raise IndexError(f"projector indices ({k}, {n}) outside 0..{family.size - 1}")
    vec = _state_vector(psi)
    if vec.shape[0] != family.dim:
        raise DimensionMismatch(f"state dim {vec.shape[0]} != family dim {family.dim}")
    n2 = float(np.vdot(vec, vec).real)
    if n2 < ZERO_NORM_TOL**2:
        raise ZeroState(f"state norm {np.sqrt(n2):.3e} below {ZERO_NORM_TOL:.1e}")
    return float(np.vdot(vec, family.projectors[k] @ (family.projectors[n] @ vec)).real / n2)


def dephase(rho, family: ProjectorFamily) -> DensityMatrix:
    """Block-diagonal part sum_n P_n rho P_n of a density matrix.

    The result commutes with every projector and preserves all block traces
    Tr(rho P_n); applying the map twice gives the same matrix.
    """
    mat = rho.entries if isinstance(rho, DensityMatrix) else np.asarray(rho, dtype=complex)
    if mat.shape != (family.dim, family.dim):
        raise DimensionMismatch(f"density shape {mat.shape} != ({family.dim}, {family.dim})")
    out = np.einsum("nij,jk,nlk->il", family.projectors, mat, family.projectors.conj())
    return DensityMatrix(out)


def luders_residual(psi, family: ProjectorFamily) -> tuple[int, float]:
    """Dominant spectral subspace and the distance from it.

    Returns ``(n_star, r)`` with ``n_star = argmax_n p_n`` (ties broken by the
    smallest index) and ``r = ||psi - P_{n_star} psi||`` for the normalized
    input.  ``r`` tends to zero exactly when the state settles into the range
    of one projector; ``r**2 = 1 - max_n p_n``.
    """
    vec = _state_vector(psi)
    p = occupation(vec, family)
    n_star = int(np.argmax(p))
    unit = vec / np.linalg.norm(vec)
    residual = float(np.linalg.norm(unit - family.projectors[n_star] @ unit))
    return n_star, residual


def offdiag_block_norm(rho, family: ProjectorFamily) -> float:
    """sum_{k != l} ||P_k rho P_l||_F, the coherence left between spectral blocks."""
    mat = rho.entries if isinstance(rho, DensityMatrix) else np.asarray(rho, dtype=complex)
    if mat.shape != (family.dim, family.dim):
        raise DimensionMismatch(f"density shape {mat.shape} != ({family.dim}, {family.dim})")
    total = 0.0
    for k in range(family.size):
        left = family.projectors[k] @ mat
        for l in range(family.size):
            if k == l:
                continue
            total += float(np.linalg.norm(left @ family.projectors[l]))
    return total


def family_to_json_dict(family: ProjectorFamily) -> dict:
    """JSON document with the shared complex-pair convention."""
    return {
        "dim": family.dim,
        "omega": family.omega,
        "eigenvalues": [float(v) for v in family.eigenvalues],
        "projectors": complex_to_pairs(family.projectors),
    }


def family_from_json_dict(doc: dict, tol: float = DEFAULT_TOL) -> ProjectorFamily:
    proj = pairs_to_complex(doc["projectors"])
    fam = validate_family(list(proj), doc["eigenvalues"], float(doc.get("omega", 1.0)), tol)
    if "dim" in doc and int(doc["dim"]) != fam.dim:
        raise DimensionMismatch(f"declared dim {doc['dim']} != projector dim {fam.dim}")
    return fam
