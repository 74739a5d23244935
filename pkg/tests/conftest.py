import numpy as np
import pytest

from mpodyn.charge_tensor import ChargeIndex, TruncationPolicy
from mpodyn.models import BondGate, _blockwise_expm
from mpodyn.mps_core import from_fock


def random_conserving_gate(d: int, rng: np.random.Generator, scale: float = 1.0) -> BondGate:
    """Random two-site unitary that conserves total occupation."""
    D = d * d
    occ = np.arange(d)
    charges = (occ[:, None] + occ[None, :]).ravel()
    h = np.zeros((D, D), dtype=np.complex128)
    for q in np.unique(charges):
        idx = np.where(charges == q)[0]
        blk = rng.normal(size=(len(idx), len(idx))) + 1j * rng.normal(size=(len(idx), len(idx)))
        blk = 0.5 * (blk + blk.conj().T)
        h[np.ix_(idx, idx)] = blk
    dense = _blockwise_expm(h * scale, charges, 1.0)
    return BondGate(dense, ChargeIndex.occupation(d))


def random_charge_mps(L: int, d: int, occupations, rng: np.random.Generator, n_layers: int = 3):
    """Charge-definite state built by random conserving gates on a Fock state."""
    psi = from_fock(occupations, d)
    policy = TruncationPolicy(None, 1e-14)
    for _ in range(n_layers):
        for m in range(1, L):
            psi.apply_two_site_gate(m, random_conserving_gate(d, rng), policy)
    return psi


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)
