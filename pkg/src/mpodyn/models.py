"""Lattice models, their two-site bond gates, and the doubled-space gates.

Spin-1/2 sites use the occupation dictionary |0> = spin down, |1> = spin up,
so sigma^z = diag(-1, +1) and magnetization conservation becomes particle
number conservation.  Two-site dense matrices are indexed with the left
site as the slow (most significant) index, matching ``numpy.kron`` order.

Gate exponentials are computed per charge block by Hermitian
eigendecomposition, which keeps every block exactly unitary.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .charge_tensor import (
    IN,
    OUT,
    ChargeIndex,
    ChargeMismatchError,
    SymmetricTensor,
)
from .operator_space import (
    BRUTE,
    LocalOperator,
    layout_perm,
    super_site_index,
)

SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=np.complex128)
SIGMA_Y = np.array([[0.0, 1.0j], [-1.0j, 0.0]], dtype=np.complex128)
SIGMA_Z = np.array([[-1.0, 0.0], [0.0, 1.0]], dtype=np.complex128)


def boson_annihilator(d: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1.0, d)), k=1).astype(np.complex128)


def number_matrix(d: int) -> np.ndarray:
    return np.diag(np.arange(d, dtype=np.float64)).astype(np.complex128)


def sigma_z_local() -> LocalOperator:
    return LocalOperator(2, SIGMA_Z, 0)


def number_local(d: int) -> LocalOperator:
    return LocalOperator(d, number_matrix(d), 0)


def annihilator_local(d: int) -> LocalOperator:
    return LocalOperator(d, boson_annihilator(d), 1)


def creator_local(d: int) -> LocalOperator:
    return LocalOperator(d, boson_annihilator(d).conj().T, -1)


def identity_local(d: int) -> LocalOperator:
    return LocalOperator(d, np.eye(d), 0)


@dataclass(frozen=True)
class ModelSpec:
    """Model family plus couplings; ``d`` is the local dimension."""

    kind: str
    L: int
    d: int
    delta: float = 0.0
    hopping: float = 1.0
    interaction: float = 0.0

    def __post_init__(self):
        if self.kind not in ("xxz", "bose_hubbard"):
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.d < 2 or self.L < 2:
            raise ValueError("need d >= 2 and L >= 2")

    @classmethod
    def xxz(cls, L: int, delta: float) -> "ModelSpec":
        return cls("xxz", L, 2, delta=delta)

    @classmethod
    def bose_hubbard(cls, L: int, d: int, interaction: float, hopping: float = 1.0) -> "ModelSpec":
        return cls("bose_hubbard", L, d, hopping=hopping, interaction=interaction)


def bond_hamiltonian(spec: ModelSpec, m: int) -> np.ndarray:
    """Dense two-site term for bond m (1..L-1), Hermitian and number conserving.

    On-site pieces of the boson model are split half-and-half onto the
    adjoining bonds; boundary bonds absorb the orphaned halves of the edge
    sites.
    """
    if not 1 <= m <= spec.L - 1:
        raise ValueError("bond out of range")
    d = spec.d
    if spec.kind == "xxz":
        h = -0.5 * (
            np.kron(SIGMA_X, SIGMA_X)
            + np.kron(SIGMA_Y, SIGMA_Y)
            + spec.delta * np.kron(SIGMA_Z, SIGMA_Z)
        )
        return h
    a = boson_annihilator(d)
    hop = -spec.hopping * (np.kron(a.conj().T, a) + np.kron(a, a.conj().T))
    n = np.arange(d, dtype=np.float64)
    onsite = np.diag(0.5 * spec.interaction * n * (n - 1)).astype(np.complex128)
    w_left = 1.0 if m == 1 else 0.5
    w_right = 1.0 if m == spec.L - 1 else 0.5
    return hop + w_left * np.kron(onsite, np.eye(d)) + w_right * np.kron(np.eye(d), onsite)


@dataclass
class GateBand:
    """Gate restricted to one two-site charge value.

    ``pairs`` lists the participating (sector1, sector2) combinations with
    their offset inside the band's fused basis (sector1 slow, then the
    in-sector positions in C order); ``matrix`` is the dense gate block on
    that basis.
    """

    pairs: list[tuple[int, int, int]]
    dim: int
    matrix: np.ndarray
    offset_of: dict[tuple[int, int], int]


class BondGate:
    """Two-site gate with charge-conserving block structure.

    ``tensor`` has legs (out1 IN, out2 IN, in1 OUT, in2 OUT) so it contracts
    directly with the state's physical legs; ``dense`` is the full matrix
    with the left site as the slow index.
    """

    def __init__(self, dense: np.ndarray, index: ChargeIndex, perm: np.ndarray | None = None):
        self.dense = np.asarray(dense, dtype=np.complex128)
        self.index = index
        self.perm = np.arange(index.dim, dtype=np.intp) if perm is None else perm
        D = index.dim
        if self.dense.shape != (D * D, D * D):
            raise ValueError("gate matrix has wrong shape")
        self.tensor = _gate_tensor(self.dense, index, perm)
        self._bands: dict[int, GateBand] | None = None

    @property
    def d(self) -> int:
        return self.index.dim

    def band_table(self) -> dict[int, GateBand]:
        """Per two-site charge, the fused pair basis and the dense gate block."""
        if self._bands is not None:
            return self._bands
        index, perm = self.index, self.perm
        D = index.dim
        offsets = index.offsets()
        bands: dict[int, dict] = {}
        for s1 in range(index.nsectors):
            for s2 in range(index.nsectors):
                q = index.charges[s1] + index.charges[s2]
                b = bands.setdefault(q, {"pairs": [], "idx": [], "dim": 0})
                off = b["dim"]
                b["pairs"].append((s1, s2, off))
                d1, d2 = index.dims[s1], index.dims[s2]
                for a in range(d1):
                    k1 = perm[offsets[s1] + a]
                    for c in range(d2):
                        k2 = perm[offsets[s2] + c]
                        b["idx"].append(k1 * D + k2)
                b["dim"] += d1 * d2
        table = {}
        for q, b in bands.items():
            idx = np.array(b["idx"], dtype=np.intp)
            table[q] = GateBand(
                pairs=b["pairs"],
                dim=b["dim"],
                matrix=self.dense[np.ix_(idx, idx)],
                offset_of={(s1, s2): off for s1, s2, off in b["pairs"]},
            )
        self._bands = table
        return table


def _gate_tensor(dense: np.ndarray, index: ChargeIndex, perm: np.ndarray | None, atol: float = 1e-12) -> SymmetricTensor:
    """Block decomposition of a two-site matrix over the given leg grading.

    Entries that violate charge conservation raise ``ChargeMismatchError``.
    ``perm`` maps sector-layout positions to dense basis positions.
    """
    D = index.dim
    if perm is None:
        perm = np.arange(D, dtype=np.intp)
    g4 = dense.reshape(D, D, D, D)  # (out1, out2, in1, in2) in dense basis order
    offsets = index.offsets()
    blocks: dict[tuple[int, int, int, int], np.ndarray] = {}
    placed_sq = 0.0
    nsec = index.nsectors
    sel = [perm[offsets[s] : offsets[s] + index.dims[s]] for s in range(nsec)]
    for s1 in range(nsec):
        for s2 in range(nsec):
            for s3 in range(nsec):
                for s4 in range(nsec):
                    q = index.charges[s1] + index.charges[s2] - index.charges[s3] - index.charges[s4]
                    sub = g4[np.ix_(sel[s1], sel[s2], sel[s3], sel[s4])]
                    if q != 0:
                        if np.max(np.abs(sub)) > atol:
                            raise ChargeMismatchError("charge mismatch")
                        continue
                    if not np.any(sub):
                        continue
                    blocks[(s1, s2, s3, s4)] = sub
                    placed_sq += float(np.sum(np.abs(sub) ** 2))
    total_sq = float(np.sum(np.abs(dense) ** 2))
    if abs(placed_sq - total_sq) > max(atol * total_sq, atol):
        raise ChargeMismatchError("charge mismatch")
    return SymmetricTensor(
        (index, index, index, index), (IN, IN, OUT, OUT), blocks, 0
    )


def _blockwise_expm(h: np.ndarray, charges: np.ndarray, dt_fraction: float) -> np.ndarray:
    """exp(-i h t) for a Hermitian charge-conserving matrix, per charge block."""
    D = h.shape[0]
    out = np.zeros_like(h)
    for q in np.unique(charges):
        idx = np.where(charges == q)[0]
        sub = h[np.ix_(idx, idx)]
        w, v = np.linalg.eigh(sub)
        out[np.ix_(idx, idx)] = (v * np.exp(-1j * w * dt_fraction)) @ v.conj().T
    return out


def bond_gate(spec: ModelSpec, m: int, dt_fraction: float) -> BondGate:
    """Unitary exp(-i H_bond dt) for bond m."""
    if not np.isfinite(dt_fraction):
        raise ValueError("dt_fraction must be finite")
    d = spec.d
    h = bond_hamiltonian(spec, m)
    occ = np.arange(d)
    charges = (occ[:, None] + occ[None, :]).ravel()  # two-site total occupation
    dense = _blockwise_expm(h, charges, dt_fraction)
    return BondGate(dense, ChargeIndex.occupation(d))


def super_gate(gate: BondGate, mode: str, qbase: int | None = None) -> BondGate:
    """Lift a bond gate to the doubled space: conjugation on the out-chain.

    Acting on a lifted operator reproduces Heisenberg conjugation
    g^dagger O g; the in- and out-chain factors act independently, so the
    particle-number difference (and, in canonical mode, both chain numbers)
    is preserved.
    """
    d = gate.d
    u4 = gate.dense.reshape(d, d, d, d)
    sg = np.einsum("jkyz,ilxw->yxzwjikl", u4, u4.conj())
    # axes now (y1, x1, y2, x2, j1, i1, j2, i2): new pairs then old pairs
    D2 = d * d
    sg = sg.reshape(D2, D2, D2, D2).reshape(D2 * D2, D2 * D2)
    index = super_site_index(d, mode, qbase)
    perm = layout_perm(d, mode)
    return BondGate(sg, index, perm)


@lru_cache(maxsize=None)
def _cached_bond_gate(spec: ModelSpec, m: int, dt_fraction: float) -> BondGate:
    return bond_gate(spec, m, dt_fraction)


@lru_cache(maxsize=None)
def _cached_super_gate(spec: ModelSpec, m: int, dt_fraction: float, mode: str, qbase: int | None) -> BondGate:
    return super_gate(_cached_bond_gate(spec, m, dt_fraction), mode, qbase)
