import itertools
from fractions import Fraction
from math import comb

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mpodyn import oracle
from mpodyn.models import SIGMA_Z, annihilator_local, identity_local, sigma_z_local
from mpodyn.operator_space import GRAND_CANONICAL, embed_factor, lift_product_operator
from mpodyn.projector import (
    OccupancyCount,
    _lambda_sq,
    omega,
    project_operator,
    projector_osee,
    projector_superstate,
    uniform_fock_superposition,
)


def brute_count(d, n, L):
    """Enumeration oracle for the occupancy count."""
    return sum(
        1 for occ in itertools.product(range(d), repeat=L) if sum(occ) == n
    )


class TestOmega:
    def test_binomial_reduction(self):
        assert omega(2, 3, 5) == 10

    def test_unconstrained_reduction(self):
        assert omega(5, 2, 2) == 3
        assert omega(5, 2, 2) == comb(2 + 2 - 1, 2)

    def test_infeasible(self):
        assert omega(2, 3, 2) == 0

    def test_base_case(self):
        assert omega(3, 0, 0) == 1
        assert omega(3, 1, 0) == 0

    @given(st.integers(2, 5), st.integers(0, 8), st.integers(0, 6))
    @settings(max_examples=60, deadline=None)
    def test_matches_enumeration(self, d, n, L):
        assert omega(d, n, L) == brute_count(d, n, L)

    @given(st.integers(0, 12))
    @settings(max_examples=30, deadline=None)
    def test_spin_case_is_binomial(self, n):
        for L in range(13):
            assert omega(2, n, L) == (comb(L, n) if n <= L else 0)

    def test_memo_table_object(self):
        counter = OccupancyCount(3)
        assert counter.count(2, 4) == 10
        assert (2, 4) in counter.memo


class TestLambdaWeights:
    @given(st.integers(2, 4), st.integers(1, 6), st.integers(2, 8))
    @settings(max_examples=40, deadline=None)
    def test_exact_normalization(self, d, N, L):
        if N > L * (d - 1):
            return
        for m in range(1, L):
            total = sum(_lambda_sq(d, N, L, m, l) for l in range(N + 1))
            assert total == Fraction(1)


class TestUniformSuperposition:
    def test_single_pair(self):
        psi = uniform_fock_superposition(1, 2, 2)
        v = psi.to_statevector()
        want = np.zeros(4)
        want[[1, 2]] = 2**-0.5
        assert np.max(np.abs(v - want)) < 1e-14

    def test_zero_particles(self):
        psi = uniform_fock_superposition(0, 4, 2)
        assert psi.max_bond_dimension() == 1
        assert np.allclose(psi.to_statevector(), oracle.fock_statevector([0] * 4, 2))

    def test_uniform_amplitudes_with_cap(self):
        psi = uniform_fock_superposition(2, 4, 3)
        v = psi.to_statevector()
        nz = np.abs(v) > 1e-14
        assert nz.sum() == omega(3, 2, 4)
        assert np.allclose(v[nz], omega(3, 2, 4) ** -0.5)
        # and the support is exactly the two-particle sector
        assert np.array_equal(nz, oracle.sector_indicator(4, 3, 2))

    def test_canonical_form_and_chi(self):
        psi = uniform_fock_superposition(3, 6, 2)
        psi.assert_canonical()
        assert psi.max_bond_dimension() == 4  # N + 1 at a central bond
        for m in range(7):
            assert psi.bond_dimension(m) <= 4

    def test_infeasible_raises(self):
        with pytest.raises(ValueError, match="infeasible"):
            uniform_fock_superposition(3, 2, 2)

    def test_default_local_dimension(self):
        psi = uniform_fock_superposition(2, 3)
        assert psi.site_dims == [3, 3, 3]


class TestProjectorSuperstate:
    @pytest.mark.parametrize("L,d", [(2, 2), (3, 2), (4, 2), (3, 3), (4, 3)])
    def test_matches_sector_indicator(self, L, d):
        for N in range(L * (d - 1) + 1):
            ps = projector_superstate(N, L, d)
            want = np.diag(oracle.sector_indicator(L, d, N).astype(float))
            assert np.max(np.abs(ps.densify() - want)) < 1e-12
            assert ps.in_charge == N
            assert ps.delta_n == 0

    def test_vacuum_projector(self):
        ps = projector_superstate(0, 2, 2)
        assert np.allclose(ps.densify(), np.diag([1.0, 0, 0, 0]))

    def test_completeness(self):
        L, d = 4, 3
        total = sum(projector_superstate(N, L, d).densify() for N in range(L * (d - 1) + 1))
        assert np.max(np.abs(total - np.eye(d**L))) < 1e-12

    def test_idempotent_and_orthogonal(self):
        L, d = 5, 2
        mats = [projector_superstate(N, L, d).densify() for N in range(L + 1)]
        for i, P in enumerate(mats):
            assert np.max(np.abs(P @ P - P)) < 1e-12
            for Q in mats[i + 1 :]:
                assert np.max(np.abs(P @ Q)) < 1e-12

    def test_hs_norm_is_sqrt_count(self):
        ps = projector_superstate(2, 5, 2)
        assert abs(ps.hs_norm() - omega(2, 2, 5) ** 0.5) < 1e-12


class TestProjectOperator:
    def test_identity_factors_give_projector(self):
        L, d, N = 3, 2, 1
        s = project_operator([identity_local(d)] * L, N)
        want = np.diag(oracle.sector_indicator(L, d, N).astype(float))
        assert np.max(np.abs(s.densify() - want)) < 1e-12

    def test_sigma_z_sandwich(self):
        s = project_operator(embed_factor(sigma_z_local(), 1, 2), 1)
        # basis order (site 1 fastest): |00>, |10>, |01>, |11>
        want = np.diag([0.0, 1.0, -1.0, 0.0])
        assert np.max(np.abs(s.densify() - want)) < 1e-12

    def test_annihilator_on_vacuum_sector_is_zero(self):
        s = project_operator(embed_factor(annihilator_local(2), 1, 3), 0)
        assert s.is_zero

    def test_superstate_input_matches_dense(self, rng):
        L, d, N = 4, 2, 2
        lifted = lift_product_operator(embed_factor(sigma_z_local(), 2, L))
        s = project_operator(lifted, N)
        P = np.diag(oracle.sector_indicator(L, d, N).astype(float))
        want = P @ oracle.site_operator(SIGMA_Z, 2, L) @ P
        assert np.max(np.abs(s.densify() - want)) < 1e-10

    def test_superstate_input_charged_operator(self):
        L, d, N = 3, 3, 2
        lifted = lift_product_operator(embed_factor(annihilator_local(d), 2, L))
        s = project_operator(lifted, N)
        assert s.delta_n == 1
        assert s.in_charge == N
        P_in = np.diag(oracle.sector_indicator(L, d, N).astype(float))
        P_out = np.diag(oracle.sector_indicator(L, d, N - 1).astype(float))
        amat = np.diag(np.sqrt(np.arange(1.0, d)), k=1)
        want = P_out @ oracle.site_operator(amat, 2, L) @ P_in
        assert np.max(np.abs(s.densify() - want)) < 1e-10

    def test_hermitian_in_hermitian_out(self):
        s = project_operator(embed_factor(sigma_z_local(), 2, 4), 2)
        dense = s.densify()
        assert np.max(np.abs(dense - dense.conj().T)) < 1e-12


class TestProjectorOsee:
    def test_single_particle_pair(self):
        assert abs(projector_osee(1, 2, 2, 1) - 1.0) < 1e-12

    def test_matches_superstate_profile(self):
        for N, L, d in [(1, 4, 2), (2, 4, 2), (2, 5, 3)]:
            ps = projector_superstate(N, L, d)
            profile = ps.osee_profile()
            for m in range(1, L):
                assert abs(projector_osee(N, L, d, m) - profile[m - 1]) < 1e-12

    def test_bounded_by_log(self):
        for N in range(1, 21):
            assert projector_osee(N, 40, 2, 20) <= np.log2(N + 1) + 1e-12

    def test_half_filling_peak_and_symmetry(self):
        L = 40
        vals = [projector_osee(N, L, 2, L // 2) for N in range(1, L)]
        mid = L // 2 - 1
        assert np.argmax(vals) == mid
        for k in range(1, L // 2):
            assert abs(vals[mid - k] - vals[mid + k]) < 1e-12

    def test_bond_out_of_range(self):
        with pytest.raises(ValueError):
            projector_osee(1, 4, 2, 4)
