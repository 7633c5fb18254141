"""Repeated indirect probing of a photon-number register.

A two-level probe prepared in ``psi_in`` precesses by a number-dependent
unitary U(n) while crossing the cavity and is then measured projectively
(outcomes +1/-1 with projectors pi_plus/pi_minus).  Tracing the probe out
leaves a simple update rule for the field coefficients: outcome +/- rescales
``c_n`` by ``||pi_+- U(n) psi_in||`` and renormalizes.  Repeating the probe
drives the coefficient vector into a single number state, and the long-run
frequency of +1 outcomes identifies which one.

Post-update phases are dropped (set to zero): the rescaling factors are taken
real nonnegative, so round-trips are not phase-faithful by design.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__ as _version
from . import _kernels
from .errors import DimensionMismatch, ImpossibleOutcome, UnresolvedRuns
from .jsonio import complex_to_pairs, pairs_to_complex
from .noise import NOISE_ALGORITHM, NoiseSource
from .spectral import _readonly, validate_family
from .stats import ChiSquareVerdict, chi_square_verdict

#: a run counts as purified when max_n |c_n|^2 reaches this
PURIFIED_THRESHOLD = 1.0 - 1e-6

#: runs per unit of work; fixed so results never depend on worker count
BATCH_SIZE = 1000


@dataclass(frozen=True)
class CavityState:
    """Coefficient vector (c_0..c_N) of the photon field."""

    coefficients: np.ndarray
    tol: float = field(default=1e-8, repr=False, compare=False)

    def __post_init__(self):
        c = np.asarray(self.coefficients, dtype=complex)
        if c.ndim != 1 or c.size == 0:
            raise ValueError("coefficients must form a nonempty vector")
        total = float(np.vdot(c, c).real)
        if abs(total - 1.0) > self.tol:
            raise ValueError(f"coefficient weights sum to {total!r}, not 1")
        object.__setattr__(self, "coefficients", _readonly(c))

    @property
    def levels(self) -> int:
        return self.coefficients.shape[0]

    def weights(self) -> np.ndarray:
        """|c_n|^2 per photon number."""
        c = self.coefficients
        return c.real**2 + c.imag**2


@dataclass(frozen=True)
class ProbeModel:
    """Probe preparation, number-dependent propagators, and detector projectors."""

    psi_in: np.ndarray
    unitaries: np.ndarray  # (N+1, 2, 2)
    pi_plus: np.ndarray
    pi_minus: np.ndarray
    tol: float = field(default=1e-10, repr=False, compare=False)

    def __post_init__(self):
        psi = np.asarray(self.psi_in, dtype=complex)
        us = np.asarray(self.unitaries, dtype=complex)
        pp = np.asarray(self.pi_plus, dtype=complex)
        pm = np.asarray(self.pi_minus, dtype=complex)
        if psi.shape != (2,):
            raise DimensionMismatch("psi_in must be a 2-vector")
        if abs(np.linalg.norm(psi) - 1.0) > 1e-8:
            raise ValueError("psi_in must be normalized")
        if us.ndim != 3 or us.shape[1:] != (2, 2) or us.shape[0] == 0:
            raise DimensionMismatch("unitaries must be a stack of 2x2 matrices")
        eye = np.eye(2)
        for n in range(us.shape[0]):
            if np.linalg.norm(us[n].conj().T @ us[n] - eye, ord=2) > self.tol:
                raise ValueError(f"propagator {n} is not unitary within tolerance")
        # detector projectors must form a complete orthogonal pair
        validate_family([pp, pm], [1.0, -1.0], omega=1.0, tol=self.tol)
        object.__setattr__(self, "psi_in", _readonly(psi))
        object.__setattr__(self, "unitaries", _readonly(us))
        object.__setattr__(self, "pi_plus", _readonly(pp))
        object.__setattr__(self, "pi_minus", _readonly(pm))

    @property
    def levels(self) -> int:
        return self.unitaries.shape[0]

    def response_amplitudes(self) -> tuple[np.ndarray, np.ndarray]:
        """(w_plus, w_minus) with w_pm[n] = ||pi_pm U(n) psi_in||."""
        rotated = np.einsum("nij,j->ni", self.unitaries, self.psi_in)
        wp = np.linalg.norm(np.einsum("ij,nj->ni", self.pi_plus, rotated), axis=1)
        wm = np.linalg.norm(np.einsum("ij,nj->ni", self.pi_minus, rotated), axis=1)
        return wp, wm

    def f_plus(self) -> np.ndarray:
        """Per-number frequency of the +1 outcome, <U(n) psi, pi_+ U(n) psi>."""
        wp, _ = self.response_amplitudes()
        return wp**2


def default_probe_model(levels: int = 3) -> ProbeModel:
    """Rotation-by-n probes: U(n) = exp(-i theta_n sigma_y / 2), theta_n = n pi / 3.

    With ``psi_in = e_0`` and ``pi_+ = |e_0><e_0|`` the per-number response is
    f_+(n) = cos^2(n pi / 6), distinct for n = 0..5, so up to six photon
    numbers are identifiable.
    """
    if levels < 1:
        raise ValueError("need at least one photon-number level")
    thetas = np.arange(levels) * (np.pi / 3.0)
    us = np.empty((levels, 2, 2), dtype=complex)
    for n, th in enumerate(thetas):
        c, s = np.cos(th / 2.0), np.sin(th / 2.0)
        us[n] = np.array([[c, -s], [s, c]])
    return ProbeModel(
        psi_in=np.array([1.0, 0.0], dtype=complex),
        unitaries=us,
        pi_plus=np.diag([1.0, 0.0]).astype(complex),
        pi_minus=np.diag([0.0, 1.0]).astype(complex),
    )


def _check_levels(cav: CavityState, probe: ProbeModel) -> None:
    if cav.levels != probe.levels:
        raise DimensionMismatch(
            f"cavity has {cav.levels} levels but probe model has {probe.levels}"
        )


def outcome_probabilities(cav: CavityState, probe: ProbeModel) -> tuple[float, float]:
    """(p_plus, p_minus) for the next probe, weighted over photon numbers."""
    _check_levels(cav, probe)
    wp, wm = probe.response_amplitudes()
    q = cav.weights()
    return float(q @ wp**2), float(q @ wm**2)


def update_after_outcome(cav: CavityState, probe: ProbeModel, outcome: int) -> CavityState:
    """Field coefficients after observing ``outcome`` (+1 or -1)."""
    _check_levels(cav, probe)
    if outcome not in (1, -1):
        raise ValueError("outcome must be +1 or -1")
    wp, wm = probe.response_amplitudes()
    w = wp if outcome == 1 else wm
    scaled = cav.coefficients * w
    z2 = float(np.vdot(scaled, scaled).real)
    if z2 < 1e-14:
        raise ImpossibleOutcome(f"outcome {outcome:+d} has probability {z2:.3e}")
    return CavityState(scaled / np.sqrt(z2))


@dataclass(frozen=True)
class ProbeRunRecord:
    """Outcome sequence and running +1 frequency of one probe run."""

    outcomes: np.ndarray  # (K,) values +1/-1
    running_f_plus: np.ndarray  # (K,)
    coefficient_history: np.ndarray | None  # (K+1, N+1) complex, optional
    inferred_n: int | None

    def __post_init__(self):
        object.__setattr__(self, "outcomes", _readonly(np.asarray(self.outcomes, dtype=np.int8)))
        object.__setattr__(
            self, "running_f_plus", _readonly(np.asarray(self.running_f_plus, dtype=float))
        )
        if self.coefficient_history is not None:
            object.__setattr__(
                self, "coefficient_history",
                _readonly(np.asarray(self.coefficient_history, dtype=complex)),
            )


def run_probe_sequence(cav0: CavityState, probe: ProbeModel, K: int, noise: NoiseSource,
                       track_coefficients: bool = True) -> ProbeRunRecord:
    """Sample K probe outcomes, updating the field state after each.

    ``inferred_n`` is the dominant photon number at the end when its weight
    reaches the purification threshold, else ``None``.
    """
    if K < 1:
        raise ValueError("need at least one probe")
    _check_levels(cav0, probe)
    wp, wm = probe.response_amplitudes()
    fp = wp**2
    uniforms = noise.generator().random(K)
    c = np.asarray(cav0.coefficients, dtype=complex).copy()
    outcomes = np.empty(K, dtype=np.int8)
    running = np.empty(K)
    history = np.empty((K + 1, cav0.levels), dtype=complex) if track_coefficients else None
    if history is not None:
        history[0] = c
    plus = 0
    for k in range(K):
        q = c.real**2 + c.imag**2
        p_plus = float(q @ fp)
        if uniforms[k] < p_plus:
            outcomes[k] = 1
            plus += 1
            w = wp
        else:
            outcomes[k] = -1
            w = wm
        scaled = c * w
        z2 = float(np.vdot(scaled, scaled).real)
        if z2 < 1e-28:
            raise ImpossibleOutcome(f"outcome {outcomes[k]:+d} at probe {k} has zero probability")
        c = scaled / np.sqrt(z2)
        running[k] = plus / (k + 1)
        if history is not None:
            history[k + 1] = c
    q = c.real**2 + c.imag**2
    top = int(np.argmax(q))
    inferred = top if q[top] >= PURIFIED_THRESHOLD else None
    return ProbeRunRecord(outcomes, running, history, inferred)


@dataclass(frozen=True)
class PurificationReport:
    """Histogram of inferred photon numbers over repeated probe runs."""

    repeats: int
    probes: int
    histogram: np.ndarray  # (N+1,) resolved runs per inferred number
    unresolved: int
    inferred: np.ndarray  # (R,) inferred n, -1 unresolved
    f_plus: np.ndarray  # (R,) final +1 frequency per run
    expected_f_plus: np.ndarray  # (N+1,) per-number response
    chi_square: ChiSquareVerdict
    metadata: dict

    def __post_init__(self):
        for name in ("histogram", "inferred", "f_plus", "expected_f_plus"):
            object.__setattr__(self, name, _readonly(np.asarray(getattr(self, name))))


def _probe_batch(weights0, wp, wm, K, master_seed, lo, hi):
    """plus counts and final amplitude magnitudes for runs lo..hi-1."""
    B = hi - lo
    C = weights0.shape[0]
    amps = np.tile(np.sqrt(weights0), (B, 1))
    plus = np.zeros(B, dtype=np.int64)
    fail = np.full(B, -1, dtype=np.int64)
    gens = [NoiseSource(master_seed, r, 1).generator() for r in range(lo, hi)]
    chunk = max(1, min(8192, (4 << 20) // max(1, B)))
    done = 0
    while done < K:
        k = min(chunk, K - done)
        uniforms = np.empty((B, k))
        for i, g in enumerate(gens):
            uniforms[i] = g.random(k)
        _kernels.probe_chunk(amps, wp, wm, uniforms, plus, fail, done)
        done += k
    return plus, amps, fail


def purification_experiment(cav0: CavityState, probe: ProbeModel, K: int, R: int,
                            master_seed: int, workers: int = 1,
                            significance: float = 0.01) -> PurificationReport:
    """R independent probe runs of K probes each, with per-run noise streams.

    The histogram of inferred photon numbers is chi-square tested against the
    initial weights |c_n(0)|^2 scaled to the resolved-run total.  More than 1%
    unresolved runs raises :class:`UnresolvedRuns` (increase K).
    """
    if R < 100:
        raise ValueError("need at least 100 repeats")
    if K < 1:
        raise ValueError("need at least one probe per run")
    _check_levels(cav0, probe)
    wp, wm = probe.response_amplitudes()
    weights0 = cav0.weights()
    bounds = [(lo, min(lo + BATCH_SIZE, R)) for lo in range(0, R, BATCH_SIZE)]
    args = [(weights0, wp, wm, K, master_seed, lo, hi) for lo, hi in bounds]
    if workers == 1 or len(bounds) == 1:
        partials = [_probe_batch(*a) for a in args]
    else:
        _probe_batch(weights0, wp, wm, 1, master_seed, 0, 1)  # compile before forking
        with ProcessPoolExecutor(max_workers=workers) as pool:
            partials = list(pool.map(_probe_batch, *zip(*args)))
    plus = np.concatenate([p[0] for p in partials])
    amps = np.concatenate([p[1] for p in partials])
    fail = np.concatenate([p[2] for p in partials])
    if np.any(fail >= 0):
        bad = np.nonzero(fail >= 0)[0]
        raise ImpossibleOutcome(f"runs {bad[:10].tolist()} hit a zero-probability branch")
    weights_final = amps**2
    top = np.argmax(weights_final, axis=1)
    resolved = weights_final[np.arange(R), top] >= PURIFIED_THRESHOLD
    inferred = np.where(resolved, top, -1).astype(np.int64)
    unresolved = int(R - resolved.sum())
    if unresolved > 0.01 * R:
        raise UnresolvedRuns(
            f"{unresolved} of {R} runs not purified after {K} probes; choose K larger"
        )
    histogram = np.bincount(top[resolved], minlength=probe.levels)
    expected = resolved.sum() * weights0
    verdict = chi_square_verdict(histogram, expected, significance)
    metadata = {
        "library_version": _version,
        "rng_algorithm": NOISE_ALGORITHM,
        "master_seed": int(master_seed),
        "probes": int(K),
        "repeats": int(R),
        "workers": int(workers),
        "batch_size": BATCH_SIZE,
    }
    return PurificationReport(
        repeats=R,
        probes=K,
        histogram=histogram,
        unresolved=unresolved,
        inferred=inferred,
        f_plus=plus / K,
        expected_f_plus=probe.f_plus(),
        chi_square=verdict,
        metadata=metadata,
    )


def purification_report_to_json_dict(report: PurificationReport) -> dict:
    data = {
        "histogram": report.histogram.tolist(),
        "unresolved": report.unresolved,
        "inferred": report.inferred.tolist(),
        "f_plus": report.f_plus.tolist(),
        "expected_f_plus": report.expected_f_plus.tolist(),
        "chi_square": {
            "statistic": report.chi_square.statistic,
            "dof": report.chi_square.dof,
            "threshold": report.chi_square.threshold,
            "p_value": report.chi_square.p_value,
            "passed": report.chi_square.passed,
        },
    }
    return {"metadata": report.metadata, "data": data}


def probe_record_to_csv(record: ProbeRunRecord, fh) -> None:
    """Write step, outcome, f_plus and the per-number weights (17 digits)."""
    if record.coefficient_history is None:
        raise ValueError("record was produced without coefficient tracking")
    levels = record.coefficient_history.shape[1]
    header = ["step", "outcome", "f_plus"] + [f"weight_{n}" for n in range(levels)]
    fh.write(",".join(header) + "\n")
    hist = record.coefficient_history
    for k in range(record.outcomes.shape[0]):
        weights = hist[k + 1].real ** 2 + hist[k + 1].imag ** 2
        cells = [str(k), str(int(record.outcomes[k])), f"{record.running_f_plus[k]:.17g}"]
        cells.extend(f"{w:.17g}" for w in weights)
        fh.write(",".join(cells) + "\n")


def probe_model_to_json_dict(probe: ProbeModel) -> dict:
    return {
        "psi_in": complex_to_pairs(probe.psi_in),
        "unitaries": complex_to_pairs(probe.unitaries),
        "pi_plus": complex_to_pairs(probe.pi_plus),
        "pi_minus": complex_to_pairs(probe.pi_minus),
    }


def probe_model_from_json_dict(doc: dict) -> ProbeModel:
    return ProbeModel(
        psi_in=pairs_to_complex(doc["psi_in"]),
        unitaries=pairs_to_complex(doc["unitaries"]),
        pi_plus=pairs_to_complex(doc["pi_plus"]),
        pi_minus=pairs_to_complex(doc["pi_minus"]),
    )


def cavity_state_to_json_dict(cav: CavityState) -> dict:
    return {"coefficients": complex_to_pairs(cav.coefficients)}


def cavity_state_from_json_dict(doc: dict) -> CavityState:
    return CavityState(pairs_to_complex(doc["coefficients"]))
