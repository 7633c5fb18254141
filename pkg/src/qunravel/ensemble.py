"""Monte Carlo ensembles of trajectories and the statistical checks on them.

The driver runs M independent trajectories (stream indices 0..M-1 of one
master seed), accumulating per-time statistics: channel means with standard
errors, the contraction diagnostic h_n(t) = mean of p_n (1 - p_n), the
ensemble density matrix E[|psi><psi|], its off-diagonal block norm, the
collapse histogram, and a bucketed distribution of min(p_n, 1 - p_n) used to
classify trajectories against a vertex-distance threshold.

Work is split into fixed batches of 1000 trajectories.  Batches are
independent, partial statistics are reduced in batch order, and every
trajectory owns a counter-based stream keyed by its index, so the report is
bit-identical for any worker count or scheduling order.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import __version__ as _version
from .errors import (
    GridMismatch,
    InsufficientSamples,
    QunravelError,
    TooManyUndecided,
)
from .jsonio import complex_to_pairs
from .master import DensityPath
from .noise import NOISE_ALGORITHM, NoiseSource
from .spectral import ProjectorFamily, ZERO_NORM_TOL, _readonly, occupation, offdiag_block_norm
from .stats import ChiSquareVerdict, chi_square_verdict
from .trajectory import TrajectoryConfig, _drive_batch, _state_vector, _verdict_from_occupations

#: trajectories per unit of work; fixed so results never depend on worker count
BATCH_SIZE = 1000

#: ensemble runs abort when more than this fraction of trajectories fails
MAX_FAILURE_FRACTION = 1e-3

#: undecided fraction beyond which the collapse histogram test refuses to run
MAX_UNDECIDED_FRACTION = 5e-3


def _default_dichotomy_edges() -> np.ndarray:
    decades = 10.0 ** np.arange(-10, -1)
    edges = np.concatenate([np.outer(decades, [1.0, 2.0, 5.0]).ravel(), [0.1, 0.2, 0.5]])
    return np.sort(edges)

#: 1-2-5 grid of vertex-distance thresholds resolved by the report
DICHOTOMY_EDGES = _default_dichotomy_edges()


@dataclass(frozen=True)
class EnsembleReport:
    """Aggregated statistics of M trajectories on a common time grid."""

    M: int
    times: np.ndarray
    mean_p: np.ndarray  # (T, N+1)
    stderr_p: np.ndarray
    h: np.ndarray  # (T, N+1) mean of p (1 - p)
    stderr_h: np.ndarray
    collapse_counts: np.ndarray  # (N+1,) settled trajectories per outcome
    undecided: int
    ensemble_rho: np.ndarray  # (T, m, m)
    offdiag_norm: np.ndarray  # (T,)
    dichotomy_edges: np.ndarray
    dichotomy_counts: np.ndarray  # (T, N+1, len(edges)+1)
    verdicts: np.ndarray  # (M,) channel, -1 undecided, -2 failed
    verdict_times: np.ndarray  # (M,) nan where not collapsed
    final_p: np.ndarray  # (M, N+1) occupations at t_final (nan for failures)
    failed_streams: tuple
    metadata: dict

    def __post_init__(self):
        for name in (
            "times", "mean_p", "stderr_p", "h", "stderr_h", "collapse_counts",
            "ensemble_rho", "offdiag_norm", "dichotomy_edges", "dichotomy_counts",
            "verdicts", "verdict_times", "final_p",
        ):
            object.__setattr__(self, name, _readonly(np.asarray(getattr(self, name))))
        total = int(self.collapse_counts.sum()) + self.undecided + len(self.failed_streams)
        if total != self.M:
            raise ValueError(f"verdict bookkeeping off: {total} != M = {self.M}")

    @property
    def effective_M(self) -> int:
        """Trajectories that completed integration."""
        return self.M - len(self.failed_streams)


def _ensemble_batch(psi0_vec, family, cfg, master_seed, lo, hi, edges):
    """Partial statistics for trajectories lo..hi-1 (one fixed batch)."""
    streams = [NoiseSource(master_seed, i, family.size) for i in range(lo, hi)]
    times, p_rec, psi_rec, fail_step = _drive_batch(psi0_vec, family, cfg, streams=streams)
    B = hi - lo
    ok = fail_step < 0
    C = family.size
    T = times.shape[0]
    verdicts = np.full(B, -2, dtype=np.int64)
    verdict_times = np.full(B, np.nan)
    collapse = np.zeros(C, dtype=np.int64)
    undecided = 0
    for b in range(B):
        if not ok[b]:
            continue
        n_star, v_time = _verdict_from_occupations(p_rec[b], times, cfg.collapse_epsilon)
        if n_star is None:
            verdicts[b] = -1
            undecided += 1
        else:
            verdicts[b] = n_star
            verdict_times[b] = v_time
            collapse[n_star] += 1
    p_ok = p_rec[ok]
    psi_ok = psi_rec[ok]
    sum_p = p_ok.sum(axis=0)
    sum_p2 = (p_ok**2).sum(axis=0)
    h_vals = p_ok * (1.0 - p_ok)
    sum_h = h_vals.sum(axis=0)
    sum_h2 = (h_vals**2).sum(axis=0)
    # ensemble state is the mean projection onto each trajectory's ray
    norm2 = np.einsum("bti,bti->bt", psi_ok.conj(), psi_ok).real
    weighted = psi_ok / norm2[:, :, None]
    sum_rho = np.einsum("bti,btj->tij", weighted, psi_ok.conj())
    min_p = np.minimum(p_ok, 1.0 - p_ok)
    flat = np.searchsorted(edges, min_p.reshape(-1), side="left")
    n_buckets = edges.shape[0] + 1
    grid = np.broadcast_to(
        (np.arange(T)[:, None] * C + np.arange(C)[None, :])[None, :, :], min_p.shape
    ).reshape(-1)
    counts = np.bincount(grid * n_buckets + flat, minlength=T * C * n_buckets)
    counts = counts.reshape(T, C, n_buckets)
    final_p = np.full((B, C), np.nan)
    final_p[ok] = p_rec[ok, -1, :]
    fails = [(lo + b, int(fail_step[b])) for b in range(B) if not ok[b]]
    return {
        "sum_p": sum_p,
        "sum_p2": sum_p2,
        "sum_h": sum_h,
        "sum_h2": sum_h2,
        "sum_rho": sum_rho,
        "counts": counts,
        "collapse": collapse,
        "undecided": undecided,
        "verdicts": verdicts,
        "verdict_times": verdict_times,
        "final_p": final_p,
        "fails": fails,
        "times": times,
    }


def run_ensemble(psi0, family: ProjectorFamily, cfg: TrajectoryConfig, M: int,
                 master_seed: int, workers: int = 1) -> EnsembleReport:
    """Run M trajectories with stream indices 0..M-1 and aggregate statistics.

    The report is a deterministic function of (psi0, family, cfg, M,
    master_seed); ``workers`` only sets the process pool size.
    """
    if M < 2:
        raise ValueError("need at least two trajectories")
    if workers < 1:
        raise ValueError("workers must be >= 1")
    vec = _state_vector(psi0)
    nrm = np.linalg.norm(vec)
    if nrm < ZERO_NORM_TOL or abs(nrm - 1.0) > 1e-8:
        raise ValueError("initial state must be normalized")
    edges = DICHOTOMY_EDGES.copy()
    bounds = [(lo, min(lo + BATCH_SIZE, M)) for lo in range(0, M, BATCH_SIZE)]
    args = [(vec, family, cfg, master_seed, lo, hi, edges) for lo, hi in bounds]
    if workers == 1 or len(bounds) == 1:
        partials = [_ensemble_batch(*a) for a in args]
    else:
        # warm the compiled kernels before forking so children inherit them
        _ensemble_batch(vec, family, TrajectoryConfig(cfg.dt, cfg.dt, cfg.scheme,
                                                      cfg.renormalize_each_step,
                                                      cfg.collapse_epsilon, 1),
                        master_seed, 0, 1, edges)
        with ProcessPoolExecutor(max_workers=workers) as pool:
            partials = list(pool.map(_ensemble_batch, *zip(*args)))
    times = partials[0]["times"]
    T, C = partials[0]["sum_p"].shape
    sum_p = np.zeros((T, C))
    sum_p2 = np.zeros((T, C))
    sum_h = np.zeros((T, C))
    sum_h2 = np.zeros((T, C))
    sum_rho = np.zeros((T, family.dim, family.dim), dtype=complex)
    counts = np.zeros((T, C, edges.shape[0] + 1), dtype=np.int64)
    collapse = np.zeros(C, dtype=np.int64)
    undecided = 0
    fails = []
    verdicts = []
    verdict_times = []
    final_p = []
    for part in partials:
        sum_p += part["sum_p"]
        sum_p2 += part["sum_p2"]
        sum_h += part["sum_h"]
        sum_h2 += part["sum_h2"]
        sum_rho += part["sum_rho"]
        counts += part["counts"]
        collapse += part["collapse"]
        undecided += part["undecided"]
        fails.extend(part["fails"])
        verdicts.append(part["verdicts"])
        verdict_times.append(part["verdict_times"])
        final_p.append(part["final_p"])
    if len(fails) > MAX_FAILURE_FRACTION * M:
        failed_ids = [s for s, _ in fails]
        raise QunravelError(
            f"{len(fails)} of {M} trajectories failed (streams {failed_ids[:10]}...)"
        )
    m_eff = M - len(fails)
    mean_p = sum_p / m_eff
    var_p = np.maximum(sum_p2 - sum_p**2 / m_eff, 0.0) / (m_eff - 1)
    stderr_p = np.sqrt(var_p / m_eff)
    mean_h = sum_h / m_eff
    var_h = np.maximum(sum_h2 - sum_h**2 / m_eff, 0.0) / (m_eff - 1)
    stderr_h = np.sqrt(var_h / m_eff)
    rho = sum_rho / m_eff
    offdiag = np.array([offdiag_block_norm(rho[t], family) for t in range(T)])
    metadata = {
        "library_version": _version,
        "rng_algorithm": NOISE_ALGORITHM,
        "master_seed": int(master_seed),
        "M": int(M),
        "workers": int(workers),
        "batch_size": BATCH_SIZE,
        "config": {
            "dt": cfg.dt,
            "t_final": cfg.t_final,
            "scheme": cfg.scheme.value,
            "renormalize_each_step": cfg.renormalize_each_step,
            "collapse_epsilon": cfg.collapse_epsilon,
            "record_stride": cfg.record_stride,
        },
    }
    return EnsembleReport(
        M=M,
        times=times,
        mean_p=mean_p,
        stderr_p=stderr_p,
        h=mean_h,
        stderr_h=stderr_h,
        collapse_counts=collapse,
        undecided=undecided,
        ensemble_rho=rho,
        offdiag_norm=offdiag,
        dichotomy_edges=edges,
        dichotomy_counts=counts,
        verdicts=np.concatenate(verdicts),
        verdict_times=np.concatenate(verdict_times),
        final_p=np.concatenate(final_p),
        failed_streams=tuple(fails),
        metadata=metadata,
    )


@dataclass(frozen=True)
class HBoundResult:
    """Ceiling check h_n(t) <= h_n(0) / (1 + 4 h_n(0) t) + 3 stderr."""

    passed: bool
    times: np.ndarray
    bound: np.ndarray
    margin: np.ndarray  # bound - h, per time and channel


def h_bound_check(report: EnsembleReport, stderr_factor: float = 3.0) -> HBoundResult:
    """Check the closed-form decay ceiling of the contraction diagnostic.

    The diagnostic obeys dh/dt <= -4 h^2, so the comparison solution gives
    h(t) <= h(0) / (1 + 4 h(0) t); the check allows ``stderr_factor`` standard
    errors of estimation noise on top.
    """
    if report.effective_M < 1000:
        raise InsufficientSamples(f"need >= 1000 trajectories, have {report.effective_M}")
    h0 = report.h[0]
    bound = h0[None, :] / (1.0 + 4.0 * h0[None, :] * report.times[:, None])
    bound = bound + stderr_factor * report.stderr_h
    margin = bound - report.h
    return HBoundResult(bool(np.all(margin >= 0.0)), report.times, bound, margin)


def classify_all(report: EnsembleReport, epsilons) -> np.ndarray:
    """Fractions of trajectories farther than epsilon(t) from both vertices.

    For each recorded time t and channel n, returns the fraction with
    min(p_n, 1 - p_n) > epsilon(t): the empirical probability that the
    settled/unsettled dichotomy fails at that threshold.  ``epsilons`` is a
    scalar or a per-time array; values must sit on the report's resolved
    threshold grid.
    """
    T, C, _ = report.dichotomy_counts.shape
    eps = np.broadcast_to(np.asarray(epsilons, dtype=float), (T,))
    edges = report.dichotomy_edges
    idx = np.empty(T, dtype=int)
    for t in range(T):
        j = int(np.argmin(np.abs(edges - eps[t])))
        if abs(edges[j] - eps[t]) > max(1e-12, 1e-9 * eps[t]):
            raise ValueError(
                f"epsilon {eps[t]!r} is not on the resolved grid; nearest edge {edges[j]!r}"
            )
        idx[t] = j
    fractions = np.empty((T, C))
    for t in range(T):
        fractions[t] = report.dichotomy_counts[t, :, idx[t] + 1 :].sum(axis=1)
    return fractions / report.effective_M


@dataclass(frozen=True)
class VonNeumannCheck:
    """Distances between the trajectory ensemble and the deterministic evolution."""

    times: np.ndarray
    frobenius_distance: np.ndarray  # ||rho_ens(t) - rho_master(t)||_F
    ensemble_offdiag: np.ndarray  # off-diagonal block norm of the ensemble state


def von_neumann_check(report: EnsembleReport, family: ProjectorFamily,
                      lindblad_path: DensityPath) -> VonNeumannCheck:
    """Compare the ensemble state against the deterministic path on a shared grid."""
    if report.times.shape != lindblad_path.times.shape or not np.allclose(
        report.times, lindblad_path.times, rtol=0.0, atol=1e-9
    ):
        raise GridMismatch("ensemble and density-path time grids differ")
    diff = report.ensemble_rho - lindblad_path.states
    frob = np.linalg.norm(diff.reshape(diff.shape[0], -1), axis=1)
    return VonNeumannCheck(report.times, frob, report.offdiag_norm.copy())


def born_rule_test(report: EnsembleReport, psi0, family: ProjectorFamily,
                   significance: float = 0.01) -> ChiSquareVerdict:
    """Chi-square of the collapse histogram against the initial occupations.

    Undecided trajectories are excluded (the expected counts scale with the
    decided total) but more than 0.5% of them aborts with
    :class:`TooManyUndecided`.
    """
    m_eff = report.effective_M
    if report.undecided > MAX_UNDECIDED_FRACTION * m_eff:
        raise TooManyUndecided(
            f"{report.undecided} of {m_eff} trajectories undecided "
            f"(> {MAX_UNDECIDED_FRACTION:.1%})"
        )
    p0 = occupation(_state_vector(psi0), family)
    decided = m_eff - report.undecided
    expected = decided * p0
    return chi_square_verdict(report.collapse_counts, expected, significance)


def report_to_json_dict(report: EnsembleReport) -> dict:
    """Two-part JSON document: run metadata and the numeric payload."""
    data = {
        "times": report.times.tolist(),
        "mean_p": report.mean_p.tolist(),
        "stderr_p": report.stderr_p.tolist(),
        "h": report.h.tolist(),
        "stderr_h": report.stderr_h.tolist(),
        "collapse_counts": report.collapse_counts.tolist(),
        "undecided": report.undecided,
        "ensemble_rho": complex_to_pairs(report.ensemble_rho),
        "offdiag_norm": report.offdiag_norm.tolist(),
        "dichotomy_edges": report.dichotomy_edges.tolist(),
        "dichotomy_counts": report.dichotomy_counts.tolist(),
        "failed_streams": [list(f) for f in report.failed_streams],
    }
    return {"metadata": report.metadata, "data": data}


def timeseries_csv(report: EnsembleReport, fh) -> None:
    C = report.mean_p.shape[1]
    header = ["t"]
    for tag in ("mean_p", "stderr_p", "h", "stderr_h"):
        header.extend(f"{tag}_{n}" for n in range(C))
    header.append("offdiag_norm")
    fh.write(",".join(header) + "\n")
    for t in range(report.times.shape[0]):
        cells = [f"{report.times[t]:.17g}"]
        for arr in (report.mean_p, report.stderr_p, report.h, report.stderr_h):
            cells.extend(f"{v:.17g}" for v in arr[t])
        cells.append(f"{report.offdiag_norm[t]:.17g}")
        fh.write(",".join(cells) + "\n")


def trajectories_csv(report: EnsembleReport, fh) -> None:
    C = report.final_p.shape[1]
    header = ["stream_index", "verdict", "verdict_time"] + [f"p_final_{n}" for n in range(C)]
    fh.write(",".join(header) + "\n")
    for i in range(report.M):
        cells = [str(i), str(int(report.verdicts[i])), f"{report.verdict_times[i]:.17g}"]
        cells.extend(f"{v:.17g}" for v in report.final_p[i])
        fh.write(",".join(cells) + "\n")
