import numpy as np
import pytest

from mpodyn.charge_tensor import ChargeMismatchError, TruncationPolicy, ZeroNormError
from mpodyn.mps_core import CanonicalMps, add, from_fock, load_mps, save_mps
from mpodyn.models import BondGate
from mpodyn.charge_tensor import ChargeIndex
from mpodyn.projector import uniform_fock_superposition
from mpodyn import oracle

from conftest import random_charge_mps, random_conserving_gate

UNRESTRICTED = TruncationPolicy(None, 0.0)


class TestFromFock:
    def test_basic_product_state(self):
        psi = from_fock([0, 1, 0, 1], 2)
        assert psi.total_charge == 2
        assert psi.max_bond_dimension() == 1
        assert all(len(lam) == 1 for lam in psi.lambdas)

    def test_vacuum_has_zero_entropy(self):
        psi = from_fock([0, 0, 0], 2)
        assert psi.total_charge == 0
        assert psi.entropy_profile() == [0.0, 0.0]

    def test_boson_occupation(self):
        psi = from_fock([0, 2, 0], 3)
        assert psi.total_charge == 2
        assert psi.max_bond_dimension() == 1

    def test_occupation_out_of_range(self):
        with pytest.raises(ValueError, match="local dimension exceeded"):
            from_fock([0, 2], 2)


class TestSchmidtSpectrum:
    def test_product_state_single_value(self):
        psi = from_fock([1, 0, 1], 2)
        spec = psi.schmidt_spectrum(1)
        assert np.allclose(spec.values, [1.0])
        assert spec.charges[0] == 1  # one particle left of the bond

    def test_bell_pair(self):
        psi = uniform_fock_superposition(1, 2, 2)
        spec = psi.schmidt_spectrum(1)
        assert np.allclose(spec.values, [2**-0.5, 2**-0.5])
        assert set(spec.charges) == {0, 1}

    def test_uniform_two_particle_spins(self):
        # enumeration oracle: lambda^2 at bond 2 of L=4, d=2 is (1,4,1)/6
        psi = uniform_fock_superposition(2, 4, 2)
        spec = psi.schmidt_spectrum(2)
        assert np.allclose(np.sort(spec.values**2), np.sort([1 / 6, 4 / 6, 1 / 6]))

    def test_bond_out_of_range(self):
        psi = from_fock([0, 1], 2)
        with pytest.raises(ValueError):
            psi.schmidt_spectrum(2)


class TestEntropy:
    def test_product_state(self):
        assert from_fock([1, 0], 2).entanglement_entropy(1) == 0.0

    def test_equal_pair_is_one_bit(self):
        psi = uniform_fock_superposition(1, 2, 2)
        assert abs(psi.entanglement_entropy(1) - 1.0) < 1e-12

    def test_direct_evaluation(self):
        p = np.array([1 / 6, 4 / 6, 1 / 6])
        expected = float(-np.sum(p * np.log2(p)))
        psi = uniform_fock_superposition(2, 4, 2)
        assert abs(psi.entanglement_entropy(2) - expected) < 1e-12
        assert abs(expected - 1.2516) < 1e-4

    def test_bounded_by_log_chi(self, rng):
        psi = random_charge_mps(5, 2, [0, 1, 0, 1, 0], rng)
        for m in range(1, 5):
            assert psi.entanglement_entropy(m) <= np.log2(psi.bond_dimension(m)) + 1e-12


class TestGateApplication:
    def test_identity_gate_keeps_lambdas(self, rng):
        psi = random_charge_mps(4, 2, [0, 1, 1, 0], rng)
        before = psi.schmidt_spectrum(2).values
        ident = BondGate(np.eye(4, dtype=complex), ChargeIndex.occupation(2))
        rec = psi.apply_two_site_gate(2, ident, UNRESTRICTED)
        assert abs(rec.nu - 1.0) < 1e-12
        assert rec.discarded_weight < 1e-12
        assert np.allclose(np.sort(psi.schmidt_spectrum(2).values), np.sort(before))

    def test_swap_gate_on_fock(self):
        swap = np.zeros((4, 4), dtype=complex)
        for i in range(2):
            for j in range(2):
                swap[j * 2 + i, i * 2 + j] = 1.0
        psi = from_fock([0, 1], 2)
        psi.apply_two_site_gate(1, BondGate(swap, ChargeIndex.occupation(2)), UNRESTRICTED)
        out = psi.to_statevector()
        assert np.allclose(out, oracle.fock_statevector([1, 0], 2))

    def test_random_gates_match_dense_oracle(self, rng):
        L, d = 6, 2
        occ = [0, 1, 1, 0, 1, 0]
        psi = from_fock(occ, d)
        vec = oracle.fock_statevector(occ, d)
        for _ in range(2):
            for m in range(1, L):
                g = random_conserving_gate(d, rng)
                psi.apply_two_site_gate(m, g, UNRESTRICTED)
                vec = oracle.two_site_operator(g.dense, m, L, d) @ vec
        psi.assert_canonical()
        assert np.max(np.abs(psi.to_statevector() - vec)) < 1e-10

    def test_generic_and_banded_paths_agree(self, rng):
        occ = [0, 1, 1, 0]
        g = random_conserving_gate(2, rng)
        fast = from_fock(occ, 2)
        slow = from_fock(occ, 2)
        fast.apply_two_site_gate(2, g, UNRESTRICTED)
        slow.apply_two_site_gate(2, g.tensor, UNRESTRICTED)
        assert np.max(np.abs(fast.to_statevector() - slow.to_statevector())) < 1e-12

    def test_banded_path_thread_determinism(self, rng, monkeypatch):
        occ = [0, 1, 1, 0, 1]
        g = random_conserving_gate(2, rng)
        a = random_charge_mps(5, 2, occ, rng)
        b = a.copy()
        a.apply_two_site_gate(3, g, UNRESTRICTED)
        monkeypatch.setenv("MPODYN_THREADS", "3")
        b.apply_two_site_gate(3, g, UNRESTRICTED)
        assert np.array_equal(a.to_statevector(), b.to_statevector())

    def test_non_conserving_gate_rejected(self):
        rot = np.kron(np.array([[0, 1], [1, 0]], dtype=complex), np.eye(2))
        with pytest.raises(ChargeMismatchError, match="charge mismatch"):
            BondGate(rot, ChargeIndex.occupation(2))

    def test_charge_constant_under_gates(self, rng):
        psi = random_charge_mps(4, 3, [1, 2, 0, 1], rng)
        assert psi.total_charge == 4
        psi.apply_two_site_gate(2, random_conserving_gate(3, rng), UNRESTRICTED)
        assert psi.total_charge == 4
        assert psi.bond_index(4).charges == (4,)

    def test_truncation_never_increases_lambda(self, rng):
        psi = random_charge_mps(6, 2, [1, 0, 1, 0, 1, 0], rng)
        g = random_conserving_gate(2, rng)
        full = psi.copy()
        full.apply_two_site_gate(3, g, UNRESTRICTED)
        cut = psi.copy()
        rec = cut.apply_two_site_gate(3, g, TruncationPolicy(2, 0.0))
        assert rec.nu <= 1.0 + 1e-12
        assert rec.chi_used <= 2
        assert abs(rec.nu**2 + rec.discarded_weight**2 - 1.0) < 1e-10

    def test_annihilation_raises(self):
        # projector-style non-unitary gate that kills the state outright
        proj = np.zeros((4, 4), dtype=complex)
        proj[0, 0] = 1.0  # keeps only |00>
        psi = from_fock([1, 1], 2)
        gate = BondGate(proj, ChargeIndex.occupation(2))
        with pytest.raises(ZeroNormError, match="state annihilated"):
            psi.apply_two_site_gate(1, gate, UNRESTRICTED)


class TestInnerProduct:
    def test_self_overlap_is_one(self, rng):
        psi = random_charge_mps(5, 2, [1, 0, 1, 0, 0], rng)
        assert abs(psi.inner_product(psi) - 1.0) < 1e-10

    def test_orthogonal_fock_states(self):
        a = from_fock([0, 1, 1], 2)
        b = from_fock([1, 1, 0], 2)
        assert a.inner_product(b) == 0.0

    def test_against_dense(self, rng):
        a = random_charge_mps(5, 2, [1, 0, 1, 0, 0], rng)
        b = random_charge_mps(5, 2, [0, 1, 0, 0, 1], rng)
        dense = np.vdot(a.to_statevector(), b.to_statevector())
        assert abs(a.inner_product(b) - dense) < 1e-10

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="shape mismatch"):
            from_fock([0, 1], 2).inner_product(from_fock([0, 1, 0], 2))


class TestAdd:
    def test_sum_matches_dense(self, rng):
        a = random_charge_mps(4, 2, [0, 1, 0, 1], rng)
        b = random_charge_mps(4, 2, [1, 0, 0, 1], rng)
        total, norm = add(a, b, 0.3, 0.7 + 0.1j)
        dense = 0.3 * a.to_statevector() + (0.7 + 0.1j) * b.to_statevector()
        assert abs(norm - np.linalg.norm(dense)) < 1e-10
        got = total.to_statevector() * norm
        assert np.max(np.abs(got - dense)) < 1e-10

    def test_charge_mismatch(self, rng):
        a = from_fock([0, 1], 2)
        b = from_fock([1, 1], 2)
        with pytest.raises(ChargeMismatchError):
            add(a, b)


class TestReversibility:
    def test_gate_then_inverse(self, rng):
        psi = random_charge_mps(5, 2, [0, 1, 1, 0, 1], rng)
        ref = psi.to_statevector()
        g = random_conserving_gate(2, rng)
        inv = BondGate(g.dense.conj().T, ChargeIndex.occupation(2))
        psi.apply_two_site_gate(2, g, UNRESTRICTED)
        psi.apply_two_site_gate(2, inv, UNRESTRICTED)
        assert np.max(np.abs(psi.to_statevector() - ref)) < 1e-10


class TestSerialization:
    def test_round_trip(self, rng, tmp_path):
        psi = random_charge_mps(5, 3, [0, 2, 1, 0, 1], rng)
        path = tmp_path / "state.npz"
        save_mps(str(path), psi)
        back = load_mps(str(path))
        assert back.total_charge == psi.total_charge
        assert np.max(np.abs(back.to_statevector() - psi.to_statevector())) < 1e-14
