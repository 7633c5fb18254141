"""Deterministic ensemble-level evolution of density matrices.

The generator is fixed by the projector family: a commutator with the level
Hamiltonian plus a dissipator whose jump operators are the projectors
themselves,

    d rho/dt = sum_n { -i eps_n [P_n, rho] - (P_n rho + rho P_n)/2 + P_n rho P_n }.

Because the projectors are complete this simplifies to
``-i [H, rho] - rho + sum_n P_n rho P_n``, which is what the right-hand side
below evaluates.  The equation acts block-wise: diagonal blocks P_k rho P_k
are constant, off-diagonal blocks decay as exp((-i(eps_k - eps_l) - 1) t).
That closed form ships as :func:`analytic_solution` and doubles as the test
oracle for the fixed-step integrator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, UnstableStep
from .spectral import DensityMatrix, ProjectorFamily, _readonly

#: recorded density matrices must satisfy trace/positivity to this tolerance
PATH_TOL = 1e-9


@dataclass(frozen=True)
class MasterEvolutionConfig:
    """Fixed-step integration window for the ensemble equation."""

    dt: float
    t_final: float
    record_stride: int = 1

    def __post_init__(self):
        if not (np.isfinite(self.dt) and self.dt > 0):
            raise ValueError("dt must be positive")
        if not (np.isfinite(self.t_final) and self.t_final > 0):
            raise ValueError("t_final must be positive")
        if self.dt > self.t_final:
            raise ValueError("dt must not exceed t_final")
        if int(self.record_stride) != self.record_stride or self.record_stride < 1:
            raise ValueError("record_stride must be a positive integer")
        object.__setattr__(self, "record_stride", int(self.record_stride))

    @property
    def n_steps(self) -> int:
        return int(round(self.t_final / self.dt))


@dataclass(frozen=True)
class DensityPath:
    """Recorded density matrices along a fixed-step integration."""

    times: np.ndarray
    states: np.ndarray  # (T, m, m) complex, aligned with times

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        states = np.asarray(self.states, dtype=complex)
        if times.ndim != 1 or states.ndim != 3 or states.shape[0] != times.shape[0]:
            raise ValueError("times and states must align")
        if times.shape[0] > 1 and not np.all(np.diff(times) > 0):
            raise ValueError("times must be strictly increasing")
        object.__setattr__(self, "times", _readonly(times))
        object.__setattr__(self, "states", _readonly(states))

    def density_matrices(self):
        """Iterate the recorded states as validated :class:`DensityMatrix` values."""
        for mat in self.states:
            yield DensityMatrix(mat, tol=1e2 * PATH_TOL)


def _density_entries(rho, family: ProjectorFamily) -> np.ndarray:
    mat = rho.entries if isinstance(rho, DensityMatrix) else np.asarray(rho, dtype=complex)
    if mat.shape != (family.dim, family.dim):
        raise DimensionMismatch(f"density shape {mat.shape} != ({family.dim}, {family.dim})")
    return mat


def lindblad_rhs(rho, family: ProjectorFamily) -> np.ndarray:
    """Time derivative of the ensemble state; traceless and Hermitian."""
    mat = _density_entries(rho, family)
    h = family.hamiltonian()
    dephased = np.einsum("nij,jk,nlk->il", family.projectors, mat, family.projectors.conj())
    return -1j * (h @ mat - mat @ h) - mat + dephased


def _record_slots(n_steps: int, stride: int) -> np.ndarray:
    """Global step indices that get recorded (always includes 0 and n_steps)."""
    idx = np.arange(0, n_steps + 1, stride)
    if idx[-1] != n_steps:
        idx = np.append(idx, n_steps)
    return idx


def evolve_density(rho0, family: ProjectorFamily, cfg: MasterEvolutionConfig) -> DensityPath:
    """Classical fixed-step RK4 integration of :func:`lindblad_rhs`.

    State accumulation uses Kahan compensation so that at small ``dt`` the
    recorded error stays at the scheme's truncation level instead of the
    float64 summation floor.  Every recorded state is checked for trace one
    and positivity to ``PATH_TOL``; a violation raises :class:`UnstableStep`
    with the failing time attached.
    """
    mat = _density_entries(rho0, family).copy()
    guard = cfg.dt * float(np.abs(family.energies).max())
    if guard >= 0.1:
        raise UnstableStep(
            f"dt * max|energy| = {guard:.3g} >= 0.1; reduce the step size", time=0.0
        )
    h = family.hamiltonian()
    proj = family.projectors
    dt = cfg.dt
    n_steps = cfg.n_steps

    def rhs(r):
        dephased = np.einsum("nij,jk,nlk->il", proj, r, proj.conj())
        return -1j * (h @ r - r @ h) - r + dephased

    slots = _record_slots(n_steps, cfg.record_stride)
    times = slots * dt
    states = np.empty((slots.shape[0], family.dim, family.dim), dtype=complex)
    comp = np.zeros_like(mat)
    slot = 0

    def check_and_store(step_index, r):
        nonlocal slot
        tr = np.trace(r).real
        if abs(tr - 1.0) > PATH_TOL:
            raise UnstableStep(
                f"trace drifted to {tr!r} at t = {step_index * dt:.6g}", time=step_index * dt
            )
        low = float(np.linalg.eigvalsh(0.5 * (r + r.conj().T)).min())
        if low < -PATH_TOL:
            raise UnstableStep(
                f"eigenvalue {low:.3e} below -{PATH_TOL:.1e} at t = {step_index * dt:.6g}",
                time=step_index * dt,
            )
        states[slot] = r
        slot += 1

    check_and_store(0, mat)
    next_rec = 1
    for s in range(1, n_steps + 1):
        k1 = rhs(mat)
        k2 = rhs(mat + (0.5 * dt) * k1)
        k3 = rhs(mat + (0.5 * dt) * k2)
        k4 = rhs(mat + dt * k3)
        inc = (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        # Kahan-compensated accumulation of the per-step increments
        y = inc - comp
        t = mat + y
        comp = (t - mat) - y
        mat = t
        if next_rec < slots.shape[0] and s == slots[next_rec]:
            check_and_store(s, mat)
            next_rec += 1
    return DensityPath(times, states)


def analytic_solution(rho0, family: ProjectorFamily, t: float) -> DensityMatrix:
    """Exact block-decay solution of the ensemble equation at time ``t``.

    Diagonal blocks of the initial state are unchanged; the block between
    levels k and l picks up the factor exp((-i(eps_k - eps_l) - 1) t).
    """
    mat = _density_entries(rho0, family)
    if not np.isfinite(t) or t < 0:
        raise ValueError("t must be a nonnegative time")
    energies = family.energies
    proj = family.projectors
    out = np.zeros_like(mat)
    for k in range(family.size):
        left = proj[k] @ mat
        for l in range(family.size):
            block = left @ proj[l]
            if k == l:
                out += block
            else:
                out += np.exp((-1j * (energies[k] - energies[l]) - 1.0) * t) * block
    return DensityMatrix(out, tol=1e-8)


def density_path_to_csv(path: DensityPath, fh) -> None:
    """Write ``t, re(rho_ij), im(rho_ij)`` (row-major) with 17 significant digits."""
    m = path.states.shape[1]
    header = ["t"]
    for i in range(m):
        for j in range(m):
            header.append(f"re_rho_{i}_{j}")
            header.append(f"im_rho_{i}_{j}")
    fh.write(",".join(header) + "\n")
    for t, state in zip(path.times, path.states):
        cells = [f"{t:.17g}"]
        for i in range(m):
            for j in range(m):
                cells.append(f"{state[i, j].real:.17g}")
                cells.append(f"{state[i, j].imag:.17g}")
        fh.write(",".join(cells) + "\n")
