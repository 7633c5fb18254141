"""Stochastic pure-state dynamics driven by one Brownian channel per projector.

Two discretizations of the same diffusion are provided.  The default is an
Euler-Maruyama step of the explicit-drift form

    dpsi = sum_n [ -i eps_n P_n psi - p_n^2 psi / 2 + p_n P_n psi - P_n psi / 2 ] dt
         + sum_n (p_n - P_n) psi dB_n,

with p_n the occupation probabilities of the current state.  The
cross-validation scheme is a Heun (predictor-corrector midpoint) rule on the
circle-product form, whose per-channel increment is

    dk_n = (1 - 2 p_n) dt + dB_n,     dpsi = sum_n [ -i eps_n P_n psi dt
                                              + (p_n - P_n) psi dk_n ].

Both conserve the norm exactly in continuous time; the integrator optionally
renormalizes after every step (default) so recorded states stay unit vectors.

The occupation probabilities themselves satisfy a closed, drift-free
diffusion, dp_n = 2 sum_k (p_k p_n - delta_kn p_n) dB_k, integrated by
:func:`simulate_reduced` from the same noise stream so the two descriptions
can be coupled pathwise.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import DimensionMismatch, NotASimplexPoint, UnstableStep, ZeroState
from .master import _record_slots
from .noise import NoiseSource
from .spectral import ProjectorFamily, PureState, ZERO_NORM_TOL, _readonly, occupation

#: post-step norm below this (before renormalization) aborts the trajectory
STEP_NORM_TOL = 1e-6


class Scheme(enum.Enum):
    ITO_EULER_MARUYAMA = "ito_euler_maruyama"
    STRATONOVICH_HEUN = "stratonovich_heun"


@dataclass(frozen=True)
class TrajectoryConfig:
    """Integration window and scheme for one stochastic trajectory."""

    dt: float
    t_final: float
    scheme: Scheme = Scheme.ITO_EULER_MARUYAMA
    renormalize_each_step: bool = True
    collapse_epsilon: float = 1e-4
    record_stride: int = 1

    def __post_init__(self):
        if not (np.isfinite(self.dt) and 0 < self.dt <= 1e-2):
            raise ValueError("dt must lie in (0, 1e-2] for diffusion accuracy")
        if not (np.isfinite(self.t_final) and self.t_final > 0):
            raise ValueError("t_final must be positive")
        if self.dt > self.t_final:
            raise ValueError("dt must not exceed t_final")
        n = self.t_final / self.dt
        if abs(n - round(n)) > 1e-9 * max(1.0, n):
            raise ValueError("t_final must be an integer multiple of dt")
        if not 0 < self.collapse_epsilon < 0.5:
            raise ValueError("collapse_epsilon must lie in (0, 1/2)")
        if int(self.record_stride) != self.record_stride or self.record_stride < 1:
            raise ValueError("record_stride must be a positive integer")
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        object.__setattr__(self, "record_stride", int(self.record_stride))

    @property
    def n_steps(self) -> int:
        return int(round(self.t_final / self.dt))


@dataclass(frozen=True)
class TrajectoryPath:
    """Recorded states and occupations for one noise realization.

    ``verdict`` is the index of the spectral subspace the trajectory settled
    into, or ``None`` when undecided at ``t_final``.  A verdict requires
    ``1 - p_n(t_final) <= collapse_epsilon``; ``verdict_time`` is then the
    earliest recorded time at which that inequality already held.
    """

    times: np.ndarray
    states: np.ndarray  # (T, m) complex
    occupations: np.ndarray  # (T, N+1)
    verdict: int | None
    verdict_time: float | None

    def __post_init__(self):
        object.__setattr__(self, "times", _readonly(np.asarray(self.times, dtype=float)))
        object.__setattr__(self, "states", _readonly(np.asarray(self.states, dtype=complex)))
        object.__setattr__(self, "occupations", _readonly(np.asarray(self.occupations, dtype=float)))

    @property
    def collapsed(self) -> bool:
        return self.verdict is not None

    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.states, axis=1)


@dataclass(frozen=True)
class ReducedPath:
    """Occupation path from the reduced (state-free) diffusion."""

    times: np.ndarray
    occupations: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "times", _readonly(np.asarray(self.times, dtype=float)))
        object.__setattr__(self, "occupations", _readonly(np.asarray(self.occupations, dtype=float)))


def _state_vector(psi) -> np.ndarray:
    vec = psi.amplitudes if isinstance(psi, PureState) else np.asarray(psi, dtype=complex)
    if vec.ndim != 1:
        raise ValueError("expected a 1-d state vector")
    return vec


def ito_drift(psi, family: ProjectorFamily) -> np.ndarray:
    """Deterministic part of the explicit-drift form at state psi."""
    vec = _state_vector(psi)
    p = occupation(vec, family)
    proj = np.einsum("nij,j->ni", family.projectors, vec)
    coef = p - 0.5 - 1j * family.energies
    return np.einsum("n,ni->i", coef, proj) - 0.5 * float(p @ p) * vec


def diffusion_vectors(psi, family: ProjectorFamily) -> np.ndarray:
    """Per-channel noise directions (p_n - P_n) psi, stacked (N+1, m)."""
    vec = _state_vector(psi)
    p = occupation(vec, family)
    proj = np.einsum("nij,j->ni", family.projectors, vec)
    return p[:, None] * vec[None, :] - proj


def step(psi, family: ProjectorFamily, dB, cfg: TrajectoryConfig) -> np.ndarray:
    """One integration step with explicit increments dB (variance dt each).

    Reference (non-batched) implementation of both schemes; raises
    :class:`ZeroState` when the pre-renormalization norm falls below
    ``STEP_NORM_TOL``, which signals an unstable step size.
    """
    vec = _state_vector(psi)
    db = np.asarray(dB, dtype=float)
    if db.shape != (family.size,):
        raise DimensionMismatch(f"need {family.size} increments, got shape {db.shape}")
    if not np.all(np.isfinite(db)):
        raise ValueError("noise increments must be finite")
    dt = cfg.dt
    if cfg.scheme is Scheme.ITO_EULER_MARUYAMA:
        out = vec + ito_drift(vec, family) * dt + db @ diffusion_vectors(vec, family)
    else:

        def increment(v):
            p = occupation(v, family)
            proj = np.einsum("nij,j->ni", family.projectors, v)
            dk = (1.0 - 2.0 * p) * dt + db
            return float(p @ dk) * v + np.einsum("n,ni->i", -1j * family.energies * dt - dk, proj)

        g1 = increment(vec)
        g2 = increment(vec + g1)
        out = vec + 0.5 * (g1 + g2)
    nrm = np.linalg.norm(out)
    if nrm < STEP_NORM_TOL:
        raise ZeroState(f"post-step norm {nrm:.3e} below {STEP_NORM_TOL:.1e}; reduce dt")
    if cfg.renormalize_each_step:
        out = out / nrm
    return out


def _check_guard(family: ProjectorFamily, cfg: TrajectoryConfig) -> None:
    guard = cfg.dt * float(np.abs(family.energies).max())
    if guard >= 0.1:
        raise UnstableStep(f"dt * max|energy| = {guard:.3g} >= 0.1; reduce the step size", time=0.0)


def _kernel_for(scheme: Scheme):
    return _kernels.ito_chunk if scheme is Scheme.ITO_EULER_MARUYAMA else _kernels.heun_chunk


def _noise_chunk_len(batch: int, channels: int) -> int:
    # keep per-chunk noise under ~32 MB of float64
    return max(1, min(4096, (4 << 20) // max(1, batch * channels)))


def _drive_batch(psi0_vec, family, cfg, streams=None, increments=None):
    """Advance a batch of trajectories; returns (times, p_rec, psi_rec, fail_step).

    Exactly one of ``streams`` (list of NoiseSource) and ``increments``
    (single-trajectory array of shape (n_steps, N+1), already scaled to
    variance dt) must be given.
    """
    if (streams is None) == (increments is None):
        raise ValueError("provide either streams or increments")
    n_steps = cfg.n_steps
    C = family.size
    m = family.dim
    if increments is not None:
        increments = np.ascontiguousarray(increments, dtype=float)
        if increments.shape != (n_steps, C):
            raise DimensionMismatch(
                f"increments shape {increments.shape} != ({n_steps}, {C})"
            )
        batch = 1
    else:
        batch = len(streams)
    slots = _record_slots(n_steps, cfg.record_stride)
    times = slots * cfg.dt
    psi = np.tile(psi0_vec, (batch, 1)).astype(complex)
    p_rec = np.empty((batch, slots.shape[0], C), dtype=float)
    psi_rec = np.empty((batch, slots.shape[0], m), dtype=complex)
    fail_step = np.full(batch, -1, dtype=np.int64)
    p_rec[:, 0, :] = occupation(psi0_vec, family)[None, :]
    psi_rec[:, 0, :] = psi0_vec[None, :]
    kernel = _kernel_for(cfg.scheme)
    proj = np.ascontiguousarray(family.projectors)
    energies = np.ascontiguousarray(family.energies)
    gens = [s.generator() for s in streams] if streams is not None else None
    sqrt_dt = np.sqrt(cfg.dt)
    chunk = _noise_chunk_len(batch, C)
    offset = 0
    while offset < n_steps:
        k = min(chunk, n_steps - offset)
        if increments is not None:
            dB = increments[offset : offset + k][None, :, :]
        else:
            dB = np.empty((batch, k, C))
            for i, g in enumerate(gens):
                dB[i] = g.standard_normal((k, C))
            dB *= sqrt_dt
        kernel(
            psi, proj, energies, np.ascontiguousarray(dB), cfg.dt,
            cfg.renormalize_each_step, cfg.record_stride, offset, n_steps,
            p_rec, psi_rec, fail_step,
        )
        offset += k
    return times, p_rec, psi_rec, fail_step


def _verdict_from_occupations(p_path, times, collapse_epsilon):
    """Collapse verdict for one recorded occupation path (T, N+1)."""
    p_final = p_path[-1]
    n_star = int(np.argmax(p_final))
    if 1.0 - p_final[n_star] > collapse_epsilon:
        return None, None
    held = 1.0 - p_path[:, n_star] <= collapse_epsilon
    first = int(np.argmax(held))
    return n_star, float(times[first])


def simulate(psi0, family: ProjectorFamily, cfg: TrajectoryConfig, noise: NoiseSource | None = None,
             *, increments=None) -> TrajectoryPath:
    """Integrate one trajectory from a normalized initial state.

    Noise comes from ``noise`` (one reproducible stream) or, for coupling
    experiments, from an explicit ``increments`` array of shape
    ``(n_steps, N+1)`` holding the dB values.
    """
    vec = _state_vector(psi0)
    if vec.shape[0] != family.dim:
        raise DimensionMismatch(f"state dim {vec.shape[0]} != family dim {family.dim}")
    nrm = np.linalg.norm(vec)
    if nrm < ZERO_NORM_TOL:
        raise ZeroState("initial state has vanishing norm")
    if abs(nrm - 1.0) > 1e-8:
        raise ValueError("initial state must be normalized")
    _check_guard(family, cfg)
    if noise is not None and noise.channels != family.size:
        raise DimensionMismatch(f"noise channels {noise.channels} != projector count {family.size}")
    streams = [noise] if increments is None else None
    times, p_rec, psi_rec, fail_step = _drive_batch(
        vec, family, cfg, streams=streams, increments=increments
    )
    if fail_step[0] >= 0:
        t_fail = fail_step[0] * cfg.dt
        raise ZeroState(f"trajectory norm collapsed at t = {t_fail:.6g}; reduce dt")
    verdict, verdict_time = _verdict_from_occupations(p_rec[0], times, cfg.collapse_epsilon)
    return TrajectoryPath(times, psi_rec[0], p_rec[0], verdict, verdict_time)


def simulate_reduced(p0, family: ProjectorFamily, cfg: TrajectoryConfig,
                     noise: NoiseSource | None = None, *, increments=None) -> ReducedPath:
    """Integrate the drift-free occupation diffusion on the probability simplex.

    Uses the same Euler-Maruyama increments as :func:`simulate` when driven
    from the same stream, so the two paths can be compared realization by
    realization.  Per step the update is clamped to [0, 1] and renormalized to
    sum one, since only the continuous-time flow preserves the simplex.
    """
    p = np.asarray(p0, dtype=float).copy()
    if p.shape != (family.size,):
        raise NotASimplexPoint(f"expected {family.size} occupation entries, got shape {p.shape}")
    if np.any(p < -1e-12) or abs(p.sum() - 1.0) > 1e-9:
        raise NotASimplexPoint(f"occupations {p} are not a probability vector")
    p = np.clip(p, 0.0, 1.0)
    p /= p.sum()
    _check_guard(family, cfg)
    n_steps = cfg.n_steps
    C = family.size
    if increments is not None:
        increments = np.asarray(increments, dtype=float)
        if increments.shape != (n_steps, C):
            raise DimensionMismatch(f"increments shape {increments.shape} != ({n_steps}, {C})")
    else:
        if noise is None:
            raise ValueError("provide either a noise source or increments")
        if noise.channels != C:
            raise DimensionMismatch(f"noise channels {noise.channels} != projector count {C}")
    slots = _record_slots(n_steps, cfg.record_stride)
    times = slots * cfg.dt
    rec = np.empty((slots.shape[0], C), dtype=float)
    rec[0] = p
    gen = noise.generator() if increments is None else None
    sqrt_dt = np.sqrt(cfg.dt)
    chunk = _noise_chunk_len(1, C)
    offset = 0
    slot = 1
    while offset < n_steps:
        k = min(chunk, n_steps - offset)
        if increments is not None:
            dB = increments[offset : offset + k]
        else:
            dB = gen.standard_normal((k, C)) * sqrt_dt
        for s in range(k):
            db = dB[s]
            p = p + 2.0 * p * (float(p @ db) - db)
            p = np.clip(p, 0.0, 1.0)
            p /= p.sum()
            g = offset + s + 1
            if g % cfg.record_stride == 0 or g == n_steps:
                rec[slot] = p
                slot += 1
        offset += k
    return ReducedPath(times, rec)


def trajectory_to_csv(path: TrajectoryPath, fh) -> None:
    """Write t, p_0..p_N, psi_norm plus the verdict columns (17 digits)."""
    C = path.occupations.shape[1]
    header = ["t"] + [f"p_{n}" for n in range(C)] + ["psi_norm", "verdict", "verdict_time"]
    fh.write(",".join(header) + "\n")
    verdict = -1 if path.verdict is None else path.verdict
    vtime = "nan" if path.verdict_time is None else f"{path.verdict_time:.17g}"
    norms = path.norms()
    for idx in range(path.times.shape[0]):
        cells = [f"{path.times[idx]:.17g}"]
        cells.extend(f"{v:.17g}" for v in path.occupations[idx])
        cells.append(f"{norms[idx]:.17g}")
        cells.append(str(verdict))
        cells.append(vtime)
        fh.write(",".join(cells) + "\n")


def save_states(path: TrajectoryPath, file) -> None:
    """Binary dump (npz) of the full recorded states for ensemble-style post-processing."""
    np.savez(file, times=path.times, states=path.states)
