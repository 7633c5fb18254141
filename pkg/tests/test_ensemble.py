import numpy as np
import pytest

from qunravel import (
    GridMismatch,
    InsufficientSamples,
    MasterEvolutionConfig,
    NoiseSource,
    TooManyUndecided,
    TrajectoryConfig,
    born_rule_test,
    classify_all,
    evolve_density,
    h_bound_check,
    run_ensemble,
    simulate,
    von_neumann_check,
)
from qunravel.ensemble import report_to_json_dict, timeseries_csv, trajectories_csv
from qunravel.jsonio import canonical_dumps
from qunravel.spectral import DensityMatrix

SEED = 424242


@pytest.fixture(scope="module")
def small_report():
    """Shared M=2000 run on the unbalanced two-level instance, t <= 2."""
    from qunravel import validate_family

    family = validate_family([np.diag([1.0, 0.0]), np.diag([0.0, 1.0])], [0.0, 1.0])
    psi = np.array([np.sqrt(0.3), np.sqrt(0.7)], dtype=complex)
    cfg = TrajectoryConfig(dt=1e-3, t_final=2.0, record_stride=100)
    return family, psi, cfg, run_ensemble(psi, family, cfg, 2000, SEED, workers=1)


class TestRunEnsemble:
    def test_precollapsed_ensemble(self, two_level):
        psi = np.array([1.0, 0.0], dtype=complex)
        cfg = TrajectoryConfig(dt=1e-3, t_final=0.1, record_stride=10)
        report = run_ensemble(psi, two_level, cfg, 50, 7, workers=1)
        assert report.collapse_counts.tolist() == [50, 0]
        assert report.undecided == 0
        assert np.allclose(report.h, 0.0, atol=1e-12)

    def test_bookkeeping(self, small_report):
        _, _, _, report = small_report
        assert report.collapse_counts.sum() + report.undecided + len(report.failed_streams) == report.M
        assert report.effective_M == report.M

    def test_mean_rows_sum_to_one(self, small_report):
        _, _, _, report = small_report
        total = report.mean_p.sum(axis=1)
        slack = 3.0 * report.stderr_p.sum(axis=1) + 1e-12
        assert np.all(np.abs(total - 1.0) <= slack)

    def test_martingale_conservation(self, small_report):
        _, _, _, report = small_report
        p0 = report.mean_p[0]
        for t in range(report.times.shape[0]):
            band = 4.0 * report.stderr_p[t] + 1e-12
            assert np.all(np.abs(report.mean_p[t] - p0) <= band)

    def test_ensemble_rho_is_state_like(self, small_report):
        _, _, _, report = small_report
        for rho in report.ensemble_rho:
            assert np.linalg.norm(rho - rho.conj().T) < 1e-12
            assert np.trace(rho).real == pytest.approx(1.0, abs=1e-9)
            assert np.linalg.eigvalsh(rho).min() > -1e-6

    def test_matches_single_trajectories(self, small_report):
        family, psi, cfg, report = small_report
        for stream in (0, 1234, 1999):
            path = simulate(psi, family, cfg, NoiseSource(SEED, stream, 2))
            assert np.array_equal(report.final_p[stream], path.occupations[-1])
            expected = -1 if path.verdict is None else path.verdict
            assert report.verdicts[stream] == expected

    def test_worker_invariance(self, two_level, psi_unbalanced):
        cfg = TrajectoryConfig(dt=1e-3, t_final=0.5, record_stride=50)
        a = run_ensemble(psi_unbalanced, two_level, cfg, 2500, 5, workers=1)
        b = run_ensemble(psi_unbalanced, two_level, cfg, 2500, 5, workers=4)
        assert canonical_dumps(report_to_json_dict(a)["data"]) == canonical_dumps(
            report_to_json_dict(b)["data"]
        )
        assert np.array_equal(a.final_p, b.final_p)
        assert np.array_equal(a.verdicts, b.verdicts)

    def test_input_validation(self, two_level, psi_unbalanced):
        cfg = TrajectoryConfig(dt=1e-3, t_final=0.01)
        with pytest.raises(ValueError):
            run_ensemble(psi_unbalanced, two_level, cfg, 1, 0)
        with pytest.raises(ValueError):
            run_ensemble(np.array([1.0, 1.0]), two_level, cfg, 10, 0)
        with pytest.raises(ValueError):
            run_ensemble(psi_unbalanced, two_level, cfg, 10, 0, workers=0)


class TestHBound:
    def test_requires_enough_samples(self, two_level, psi_unbalanced):
        cfg = TrajectoryConfig(dt=1e-3, t_final=0.01)
        report = run_ensemble(psi_unbalanced, two_level, cfg, 100, 1, workers=1)
        with pytest.raises(InsufficientSamples):
            h_bound_check(report)

    def test_ceiling_holds(self, small_report):
        _, _, _, report = small_report
        result = h_bound_check(report)
        assert result.passed, f"min margin {result.margin.min()}"
        # spot-check the closed form: h0 / (1 + 4 h0 t) at t = 1
        h0 = report.h[0, 0]
        t_idx = int(np.argmin(np.abs(report.times - 1.0)))
        expected = h0 / (1.0 + 4.0 * h0 * 1.0) + 3.0 * report.stderr_h[t_idx, 0]
        assert result.bound[t_idx, 0] == pytest.approx(expected, rel=1e-12)

    def test_trivial_for_collapsed_start(self, two_level):
        psi = np.array([1.0, 0.0], dtype=complex)
        cfg = TrajectoryConfig(dt=1e-3, t_final=0.1, record_stride=10)
        report = run_ensemble(psi, two_level, cfg, 1000, 3, workers=1)
        assert h_bound_check(report).passed


class TestClassifyAll:
    def test_half_threshold_never_violated(self, small_report):
        _, _, _, report = small_report
        fractions = classify_all(report, 0.5)
        assert np.allclose(fractions, 0.0)

    def test_initial_state_fails_tight_threshold(self, small_report):
        _, _, _, report = small_report
        fractions = classify_all(report, 0.01)
        assert np.allclose(fractions[0], 1.0)  # deterministic start, min(p, 1-p) = 0.3

    def test_fraction_decreases_in_time(self, small_report):
        _, _, _, report = small_report
        fractions = classify_all(report, 0.01)
        slack = 3.0 / np.sqrt(report.M)
        for t in range(1, fractions.shape[0]):
            assert np.all(fractions[t] <= fractions[t - 1] + slack)

    def test_off_grid_epsilon_rejected(self, small_report):
        _, _, _, report = small_report
        with pytest.raises(ValueError):
            classify_all(report, 0.0137)


class TestVonNeumannCheck:
    def test_distances_start_at_zero_and_shrink(self, small_report):
        family, psi, cfg, report = small_report
        rho0 = DensityMatrix.from_pure(psi)
        path = evolve_density(rho0, family, MasterEvolutionConfig(cfg.dt, cfg.t_final, cfg.record_stride))
        check = von_neumann_check(report, family, path)
        assert check.frobenius_distance[0] < 1e-12
        assert check.ensemble_offdiag[0] == pytest.approx(
            2.0 * abs(rho0.entries[0, 1]), abs=1e-12
        )
        # statistical floor at M = 2000
        assert check.frobenius_distance.max() < 5.0 / np.sqrt(report.M) + 10.0 * cfg.dt
        assert check.ensemble_offdiag[-1] < check.ensemble_offdiag[0]

    def test_grid_mismatch_rejected(self, small_report):
        family, psi, _, report = small_report
        rho0 = DensityMatrix.from_pure(psi)
        other = evolve_density(rho0, family, MasterEvolutionConfig(1e-3, 1.0, 100))
        with pytest.raises(GridMismatch):
            von_neumann_check(report, family, other)


class TestBornRule:
    def test_degenerate_expected_counts_auto_pass(self, two_level):
        psi = np.array([0.0, 1.0], dtype=complex)
        cfg = TrajectoryConfig(dt=1e-3, t_final=0.1, record_stride=10)
        report = run_ensemble(psi, two_level, cfg, 200, 9, workers=1)
        verdict = born_rule_test(report, psi, two_level)
        assert verdict.passed and verdict.dof == 0

    def test_unbalanced_start_passes(self, two_level, psi_unbalanced):
        cfg = TrajectoryConfig(dt=1e-3, t_final=12.0, record_stride=1000)
        report = run_ensemble(psi_unbalanced, two_level, cfg, 3000, 11, workers=1)
        verdict = born_rule_test(report, psi_unbalanced, two_level)
        assert verdict.passed
        assert verdict.expected[0] == pytest.approx(0.3 * (report.M - report.undecided), rel=1e-9)

    def test_too_many_undecided(self, two_level, psi_unbalanced):
        # at t_final = 1 most trajectories are still far from a vertex
        cfg = TrajectoryConfig(dt=1e-3, t_final=1.0, record_stride=100)
        report = run_ensemble(psi_unbalanced, two_level, cfg, 500, 13, workers=1)
        with pytest.raises(TooManyUndecided):
            born_rule_test(report, psi_unbalanced, two_level)

    def test_three_level_uniform_start_hits_thirds(self):
        from qunravel import validate_family

        family = validate_family(
            [np.diag([1.0, 0.0, 0.0]), np.diag([0.0, 1.0, 0.0]), np.diag([0.0, 0.0, 1.0])],
            [0.0, 1.0, 2.0],
        )
        psi = np.ones(3, dtype=complex) / np.sqrt(3.0)
        cfg = TrajectoryConfig(dt=1e-3, t_final=15.0, record_stride=1500)
        report = run_ensemble(psi, family, cfg, 1500, 17, workers=1)
        verdict = born_rule_test(report, psi, family)
        assert verdict.passed
        decided = report.M - report.undecided
        assert np.allclose(verdict.expected, decided / 3.0, rtol=1e-12)


class TestSerialization:
    def test_json_payload_structure(self, small_report):
        _, _, _, report = small_report
        doc = report_to_json_dict(report)
        assert set(doc) == {"metadata", "data"}
        meta = doc["metadata"]
        assert meta["master_seed"] == SEED
        assert "philox" in meta["rng_algorithm"]
        assert meta["config"]["dt"] == 1e-3
        data = doc["data"]
        assert len(data["times"]) == report.times.shape[0]
        canonical_dumps(doc)  # must be JSON-encodable deterministically

    def test_csv_outputs(self, small_report, tmp_path):
        _, _, _, report = small_report
        ts = tmp_path / "timeseries.csv"
        tr = tmp_path / "trajectories.csv"
        with open(ts, "w") as fh:
            timeseries_csv(report, fh)
        with open(tr, "w") as fh:
            trajectories_csv(report, fh)
        head = ts.read_text().splitlines()
        assert head[0].startswith("t,mean_p_0,mean_p_1,stderr_p_0")
        assert len(head) == 1 + report.times.shape[0]
        rows = tr.read_text().splitlines()
        assert rows[0] == "stream_index,verdict,verdict_time,p_final_0,p_final_1"
        assert len(rows) == 1 + report.M
