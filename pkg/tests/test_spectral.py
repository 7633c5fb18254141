import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qunravel import (
    DensityMatrix,
    DimensionMismatch,
    DuplicateEigenvalue,
    NotComplete,
    NotIdempotent,
    NotOrthogonal,
    PureState,
    ZeroState,
    dephase,
    family_from_json_dict,
    family_from_observable,
    family_to_json_dict,
    luders_residual,
    occupation,
    pair_occupation,
    validate_family,
)
from qunravel.spectral import offdiag_block_norm

from conftest import random_state, rotated_family

seeds = st.integers(0, 2**32 - 1)


class TestValidateFamily:
    def test_identity_family(self):
        fam = validate_family([np.eye(2)], [0.0])
        assert fam.dim == 2 and fam.size == 1

    def test_standard_basis_projectors(self):
        fam = validate_family([np.diag([1.0, 0.0]), np.diag([0.0, 1.0])], [0.0, 1.0], omega=1.0)
        assert np.allclose(fam.energies, [0.0, 1.0])

    def test_overlapping_projectors_rejected(self):
        with pytest.raises(NotOrthogonal) as err:
            validate_family([np.diag([1.0, 0.0]), np.diag([1.0, 0.0])], [0.0, 1.0])
        assert err.value.indices == (0, 1)
        assert err.value.residual > 0.9

    def test_incomplete_family_rejected(self):
        with pytest.raises(NotComplete):
            validate_family([np.diag([1.0, 0.0])], [0.0])

    def test_non_projector_rejected(self):
        with pytest.raises(NotIdempotent) as err:
            validate_family([0.5 * np.eye(2), 0.5 * np.eye(2)], [0.0, 1.0])
        assert err.value.indices == (0, 0)

    def test_non_hermitian_rejected(self):
        bad = np.array([[1.0, 1.0], [0.0, 0.0]])
        with pytest.raises(NotIdempotent):
            validate_family([bad, np.eye(2) - bad], [0.0, 1.0])

    def test_duplicate_eigenvalues_rejected(self):
        with pytest.raises(DuplicateEigenvalue):
            validate_family([np.diag([1.0, 0.0]), np.diag([0.0, 1.0])], [1.0, 1.0])

    def test_shape_mismatch(self):
        with pytest.raises(DimensionMismatch):
            validate_family([np.eye(2), np.eye(3)], [0.0, 1.0])

    def test_omega_must_be_positive(self):
        with pytest.raises(ValueError):
            validate_family([np.eye(2)], [0.0], omega=0.0)

    def test_projectors_are_read_only(self, two_level):
        with pytest.raises(ValueError):
            two_level.projectors[0, 0, 0] = 5.0


class TestFromObservable:
    def test_degenerate_levels_grouped(self):
        obs = np.diag([2.0, 2.0, 5.0]).astype(complex)
        fam = family_from_observable(obs, omega=3.0)
        assert fam.size == 2
        assert np.allclose(sorted(fam.eigenvalues), [2.0, 5.0])
        ranks = [int(round(np.trace(p).real)) for p in fam.projectors]
        assert sorted(ranks) == [1, 2]
        assert np.allclose(fam.observable(), obs)

    def test_rotated_observable_recovered(self):
        fam = rotated_family(7, (1, 2))
        obs = fam.observable()
        back = family_from_observable(obs)
        assert np.allclose(back.observable(), obs, atol=1e-9)


class TestOccupation:
    def test_eigenstate(self, two_level):
        p = occupation(np.array([1.0, 0.0], dtype=complex), two_level)
        assert np.allclose(p, [1.0, 0.0])

    def test_born_weights(self, two_level, psi_unbalanced):
        assert np.allclose(occupation(psi_unbalanced, two_level), [0.3, 0.7], atol=1e-12)

    def test_matches_quadratic_form_oracle(self):
        fam = rotated_family(11, (1, 1, 1))
        psi = random_state(3, 3)
        p = occupation(psi, fam)
        # independent entry-by-entry evaluation of <psi, P_n psi>
        for n in range(fam.size):
            expected = 0.0
            for i in range(3):
                for j in range(3):
                    expected += (np.conj(psi[i]) * fam.projectors[n, i, j] * psi[j]).real
            assert p[n] == pytest.approx(expected, abs=1e-12)

    def test_zero_state_rejected(self, two_level):
        with pytest.raises(ZeroState):
            occupation(np.zeros(2, dtype=complex), two_level)

    def test_dimension_mismatch(self, two_level):
        with pytest.raises(DimensionMismatch):
            occupation(np.ones(3) / np.sqrt(3), two_level)

    @settings(max_examples=40, deadline=None)
    @given(seed=seeds, blocks=st.sampled_from([(1, 1), (1, 2), (2, 1, 1), (3, 2)]))
    def test_sums_to_one(self, seed, blocks):
        fam = rotated_family(seed, blocks)
        psi = random_state(seed + 1, fam.dim)
        p = occupation(psi, fam)
        assert np.all(p >= -1e-12) and np.all(p <= 1.0 + 1e-12)
        assert abs(p.sum() - 1.0) <= 10 * np.finfo(float).eps * fam.dim


class TestPairOccupation:
    def test_diagonal_entry(self, two_level, psi_unbalanced):
        assert pair_occupation(psi_unbalanced, two_level, 0, 0) == pytest.approx(0.3, abs=1e-12)

    def test_cross_entry_vanishes(self, two_level, psi_unbalanced):
        assert pair_occupation(psi_unbalanced, two_level, 0, 1) == pytest.approx(0.0, abs=1e-12)

    def test_matches_occupation(self, two_level):
        psi = random_state(5, 2)
        assert pair_occupation(psi, two_level, 1, 1) == pytest.approx(
            occupation(psi, two_level)[1], abs=1e-12
        )

    @settings(max_examples=30, deadline=None)
    @given(seed=seeds)
    def test_kronecker_identity(self, seed):
        fam = rotated_family(seed, (1, 2, 1))
        psi = random_state(seed + 2, fam.dim)
        p = occupation(psi, fam)
        for k in range(fam.size):
            for n in range(fam.size):
                expected = p[n] if k == n else 0.0
                assert pair_occupation(psi, fam, k, n) == pytest.approx(expected, abs=1e-10)

    def test_index_out_of_range(self, two_level, psi_unbalanced):
        with pytest.raises(IndexError):
            pair_occupation(psi_unbalanced, two_level, 0, 2)


class TestDephase:
    def test_offdiagonal_removed(self, two_level):
        rho = np.full((2, 2), 0.5, dtype=complex)
        out = dephase(rho, two_level)
        assert np.allclose(out.entries, np.diag([0.5, 0.5]))

    def test_block_diagonal_fixed_point(self, two_level):
        rho = np.diag([0.25, 0.75]).astype(complex)
        assert np.allclose(dephase(rho, two_level).entries, rho)

    def test_rank_two_block_preserved(self):
        fam = validate_family(
            [np.diag([1.0, 1.0, 0.0]), np.diag([0.0, 0.0, 1.0])], [0.0, 1.0]
        )
        rng = np.random.default_rng(0)
        z = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
        rho = z @ z.conj().T
        rho /= np.trace(rho).real
        out = dephase(rho, fam).entries
        # direct block computation: inner 2x2 block intact, cross entries zeroed
        assert np.allclose(out[:2, :2], rho[:2, :2])
        assert np.allclose(out[2, 2], rho[2, 2])
        assert np.allclose(out[:2, 2], 0.0) and np.allclose(out[2, :2], 0.0)

    def test_dimension_mismatch(self, two_level):
        with pytest.raises(DimensionMismatch):
            dephase(np.eye(3) / 3.0, two_level)

    @settings(max_examples=30, deadline=None)
    @given(seed=seeds)
    def test_idempotent_trace_positive_commuting(self, seed):
        fam = rotated_family(seed, (2, 1))
        rng = np.random.default_rng(seed + 3)
        z = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
        rho = z @ z.conj().T
        rho /= np.trace(rho).real
        once = dephase(rho, fam)
        twice = dephase(once, fam)
        assert np.allclose(once.entries, twice.entries, atol=1e-12)
        assert np.trace(once.entries).real == pytest.approx(1.0, abs=1e-12)
        assert np.linalg.eigvalsh(once.entries).min() >= -1e-12
        for n in range(fam.size):
            p = fam.projectors[n]
            comm = p @ once.entries - once.entries @ p
            assert np.linalg.norm(comm) < 1e-10
            assert np.trace(once.entries @ p).real == pytest.approx(
                np.trace(rho @ p).real, abs=1e-11
            )
        assert offdiag_block_norm(once, fam) < 1e-10


class TestLudersResidual:
    def test_already_collapsed(self, two_level):
        n_star, residual = luders_residual(np.array([0.0, 1.0], dtype=complex), two_level)
        assert n_star == 1 and residual == pytest.approx(0.0, abs=1e-12)

    def test_partial_state(self, two_level, psi_unbalanced):
        n_star, residual = luders_residual(psi_unbalanced, two_level)
        assert n_star == 1
        assert residual == pytest.approx(np.sqrt(0.3), abs=1e-12)

    def test_tie_breaks_to_smallest_index(self, two_level):
        psi = np.array([1.0, 1.0], dtype=complex) / np.sqrt(2.0)
        n_star, residual = luders_residual(psi, two_level)
        assert n_star == 0
        assert residual == pytest.approx(np.sqrt(0.5), abs=1e-12)

    @settings(max_examples=30, deadline=None)
    @given(seed=seeds)
    def test_residual_squared_complements_max(self, seed):
        fam = rotated_family(seed, (1, 1, 2))
        psi = random_state(seed + 4, fam.dim)
        _, residual = luders_residual(psi, fam)
        assert residual**2 == pytest.approx(1.0 - occupation(psi, fam).max(), abs=1e-10)


class TestTypes:
    def test_pure_state_normalization_enforced(self):
        with pytest.raises(ValueError):
            PureState(np.array([1.0, 1.0]))
        state = PureState.normalized([1.0, 1.0])
        assert np.linalg.norm(state.amplitudes) == pytest.approx(1.0)
        with pytest.raises(ZeroState):
            PureState.normalized([0.0, 0.0])

    def test_density_matrix_invariants_enforced(self):
        with pytest.raises(ValueError):
            DensityMatrix(np.diag([0.8, 0.8]))
        with pytest.raises(ValueError):
            DensityMatrix(np.array([[1.5, 0.0], [0.0, -0.5]]))
        rho = DensityMatrix.from_pure(np.array([1.0, 1.0]) / np.sqrt(2.0))
        assert np.trace(rho.entries).real == pytest.approx(1.0)


class TestFamilyJson:
    def test_round_trip(self):
        fam = rotated_family(21, (1, 2))
        doc = family_to_json_dict(fam)
        back = family_from_json_dict(doc)
        assert back.dim == fam.dim and back.omega == fam.omega
        assert np.allclose(back.projectors, fam.projectors)
        assert np.allclose(back.eigenvalues, fam.eigenvalues)

    def test_declared_dim_checked(self, two_level):
        doc = family_to_json_dict(two_level)
        doc["dim"] = 5
        with pytest.raises(DimensionMismatch):
            family_from_json_dict(doc)
