"""Operators as states over doubled sites (the superstate mapping).

An operator O = sum o_{x,y} |x><y| is stored as an MPS over super-sites of
dimension d*d; the basis state of one super-site is the pair
(in occupation j, out occupation i) with dense position k = j*d + i (the
in/upper label varies slower).  Three charge labelings of the same space
implement the three conservation modes:

* ``brute``            - single charge-0 sector, no symmetry used;
* ``grand_canonical``  - per-site charge j - i, so the chain conserves the
                         particle-number difference between the chains;
* ``canonical``        - per-site pair (j, i) packed into one integer
                         j*qbase + i, making both chain numbers definite.

Superstates are stored normalized; a scalar ``prefactor`` carries the
Hilbert-Schmidt norm so truncation logic can assume unit norm throughout.
The Hermitian conjugate of a charge-definite operator flips the sign of
its particle-number change (delta_n), pinned by densify tests.
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
    ZeroNormError,
    scale_axis,
)
from . import mps_core
from .mps_core import CanonicalMps

BRUTE = "brute"
GRAND_CANONICAL = "grand_canonical"
CANONICAL = "canonical"

MODES = (BRUTE, GRAND_CANONICAL, CANONICAL)


def default_qbase(L: int, d: int) -> int:
    """Packing base for canonical-mode charges; large enough that per-chain
    particle counts never collide under addition."""
    return 2 * L * (d - 1) + 3


@lru_cache(maxsize=None)
def super_site_states(d: int, mode: str) -> tuple[tuple[tuple[int, int], ...], ...]:
    """Per charge sector, the (in j, out i) pairs in layout order."""
    if mode == BRUTE:
        return (tuple((j, i) for j in range(d) for i in range(d)),)
    if mode == GRAND_CANONICAL:
        out = []
        for c in range(-(d - 1), d):
            out.append(tuple((j, j - c) for j in range(d) if 0 <= j - c < d))
        return tuple(out)
    if mode == CANONICAL:
        return tuple(((j, i),) for j in range(d) for i in range(d))
    raise ValueError(f"unknown mode {mode!r}")


def super_site_index(d: int, mode: str, qbase: int | None = None) -> ChargeIndex:
    states = super_site_states(d, mode)
    if mode == BRUTE:
        return ChargeIndex(((0, d * d),))
    if mode == GRAND_CANONICAL:
        return ChargeIndex(tuple((c, d - abs(c)) for c in range(-(d - 1), d)))
    if qbase is None:
        raise ValueError("canonical mode requires qbase")
    return ChargeIndex(tuple((j * qbase + i, 1) for ((j, i),) in states))


@lru_cache(maxsize=None)
def layout_perm(d: int, mode: str) -> np.ndarray:
    """Map sector-layout position -> dense super index k = j*d + i."""
    flat = [j * d + i for sec in super_site_states(d, mode) for (j, i) in sec]
    return np.array(flat, dtype=np.intp)


def bond_charge_delta(mode: str, k: int) -> int:
    """Shift of accumulated bond charge when an out-chain operator removes
    k particles at one site."""
    if mode == BRUTE:
        return 0
    if mode == GRAND_CANONICAL:
        return k
    return -k  # canonical packing: low component is the out-chain count


@dataclass(frozen=True)
class LocalOperator:
    """Single-site operator with a definite (or mixed) particle-number change.

    ``entries[x][y]`` is <x|op|y>; when ``delta_n`` is an integer k the only
    nonzero entries satisfy y - x = k (the operator removes k particles).
    """

    d: int
    entries: np.ndarray
    delta_n: int | None

    def __post_init__(self):
        ent = np.asarray(self.entries, dtype=np.complex128)
        if ent.shape != (self.d, self.d):
            raise ValueError("entries must be d x d")
        object.__setattr__(self, "entries", ent)
        if self.delta_n is not None:
            for x in range(self.d):
                for y in range(self.d):
                    if y - x != self.delta_n and ent[x, y] != 0:
                        raise ChargeMismatchError("charge mismatch")

    @classmethod
    def from_matrix(cls, entries) -> "LocalOperator":
        ent = np.asarray(entries, dtype=np.complex128)
        d = ent.shape[0]
        diffs = {y - x for x in range(d) for y in range(d) if ent[x, y] != 0}
        if len(diffs) == 0:
            delta = 0
        elif len(diffs) == 1:
            delta = diffs.pop()
        else:
            delta = None
        return cls(d, ent, delta)

    def hs_norm(self) -> float:
        return float(np.linalg.norm(self.entries))

    def dagger(self) -> "LocalOperator":
        delta = None if self.delta_n is None else -self.delta_n
        return LocalOperator(self.d, self.entries.conj().T, delta)

    def is_identity(self, atol: float = 1e-14) -> bool:
        return bool(np.allclose(self.entries, np.eye(self.d), atol=atol))


class SuperState:
    """An operator represented as a canonical MPS over doubled sites."""

    def __init__(
        self,
        mps: CanonicalMps | None,
        L: int,
        d: int,
        mode: str,
        delta_n: int | None,
        prefactor: complex,
        in_charge: int | None = None,
        qbase: int | None = None,
    ):
        if mode not in MODES:
            raise ValueError(f"unknown mode {mode!r}")
        if mode == CANONICAL and qbase is None:
            qbase = default_qbase(L, d)
        self.mps = mps
        self.L = L
        self.d = d
        self.mode = mode
        self.delta_n = delta_n
        self.prefactor = complex(prefactor)
        self.in_charge = in_charge
        self.qbase = qbase

    @classmethod
    def zero(cls, L, d, mode, delta_n=0, in_charge=None, qbase=None) -> "SuperState":
        return cls(None, L, d, mode, delta_n, 0.0, in_charge, qbase)

    @property
    def is_zero(self) -> bool:
        return self.mps is None or self.prefactor == 0.0

    def hs_norm(self) -> float:
        return abs(self.prefactor)

    def copy(self) -> "SuperState":
        return SuperState(
            None if self.mps is None else self.mps.copy(),
            self.L,
            self.d,
            self.mode,
            self.delta_n,
            self.prefactor,
            self.in_charge,
            self.qbase,
        )

    def phys_index(self) -> ChargeIndex:
        return super_site_index(self.d, self.mode, self.qbase)

    def osee_profile(self) -> list[float]:
        """Entanglement entropy of the superstate at each interior bond."""
        if self.is_zero:
            return [0.0] * (self.L - 1)
        return self.mps.entropy_profile()

    def site_dense_k(self, m: int) -> np.ndarray:
        """Site tensor as a dense (chi_l, d*d, chi_r) array in k = j*d+i order."""
        t = self.mps.site_tensor_dense(m)
        perm = layout_perm(self.d, self.mode)
        out = np.empty_like(t)
        out[:, perm, :] = t
        return out

    def site_dense_pair(self, m: int) -> np.ndarray:
        """Site tensor as (chi_l, d_in, d_out, chi_r)."""
        t = self.site_dense_k(m)
        return t.reshape(t.shape[0], self.d, self.d, t.shape[2])

    def densify(self) -> np.ndarray:
        """Dense operator matrix, occupation basis, site 1 fastest-varying."""
        d, L = self.d, self.L
        if d ** (2 * L) > 2**22:
            raise ValueError("operator too large to densify")
        if self.is_zero:
            return np.zeros((d**L, d**L), dtype=np.complex128)
        perms = [layout_perm(d, self.mode)] * L
        vec = self.mps.to_statevector(site_perms=perms)
        arr = vec.reshape((d, d) * L)  # axes (j_L, i_L, ..., j_1, i_1)
        perm = list(range(1, 2 * L, 2)) + list(range(0, 2 * L, 2))
        return arr.transpose(perm).reshape(d**L, d**L) * self.prefactor


def identity_superstate(L: int, d: int, mode: str = GRAND_CANONICAL) -> SuperState:
    """Superstate of the identity operator: a product of local Bell-like pairs.

    Bond dimension 1, zero entanglement between sites; the unnormalized
    trace convention gives Hilbert-Schmidt norm d**(L/2), carried by the
    prefactor.
    """
    if L < 1 or d < 2:
        raise ValueError("need L >= 1 and d >= 2")
    if mode == CANONICAL:
        raise ValueError("identity is not definite in a single input-number sector")
    phys = super_site_index(d, mode)
    states = super_site_states(d, mode)
    vec = np.zeros(phys.dims[phys.position(0)], dtype=np.complex128)
    sec = phys.position(0)
    for pos, (j, i) in enumerate(states[sec]):
        if j == i:
            vec[pos] = 1.0 / np.sqrt(d)
    gammas = []
    lambdas = []
    triv = ChargeIndex.trivial(0)
    for m in range(L):
        blk = vec.reshape(1, -1, 1)
        gammas.append(SymmetricTensor((triv, phys, triv), (IN, IN, OUT), {(0, sec, 0): blk}, 0))
        if m < L - 1:
            lambdas.append({0: np.array([1.0])})
    mps = CanonicalMps(gammas, lambdas, total_charge=0)
    return SuperState(mps, L, d, mode, 0, d ** (L / 2.0))


def lift_product_operator(
    factors: list[LocalOperator], mode: str = GRAND_CANONICAL
) -> SuperState:
    """Superstate of a product operator; always bond dimension 1.

    In the symmetric modes every factor must carry a definite particle-number
    change; mixed factors are only representable without charge labels.
    """
    if not factors:
        raise ValueError("need at least one factor")
    d = factors[0].d
    if any(f.d != d for f in factors):
        raise ValueError("shape mismatch")
    if mode == CANONICAL:
        raise ValueError("use project_operator to build input-number definite operators")
    if mode == GRAND_CANONICAL and any(f.delta_n is None for f in factors):
        raise ChargeMismatchError("indefinite charge")

    L = len(factors)
    phys = super_site_index(d, mode)
    states = super_site_states(d, mode)
    prefactor = 1.0
    gammas = []
    lambdas = []
    acc = 0
    for m, f in enumerate(factors):
        nf = f.hs_norm()
        if nf == 0.0:
            delta = sum(g.delta_n or 0 for g in factors)
            return SuperState.zero(L, d, mode, delta)
        prefactor *= nf
        left = ChargeIndex.trivial(acc)
        if mode == GRAND_CANONICAL:
            sec = phys.position(f.delta_n)
            acc += f.delta_n
        else:
            sec = 0
        right = ChargeIndex.trivial(acc)
        vec = np.zeros(phys.dims[sec], dtype=np.complex128)
        for pos, (j, i) in enumerate(states[sec]):
            vec[pos] = f.entries[i, j] / nf
        gammas.append(
            SymmetricTensor(
                (left, phys, right), (IN, IN, OUT), {(0, sec, 0): vec.reshape(1, -1, 1)}, 0
            )
        )
        if m < L - 1:
            lambdas.append({acc: np.array([1.0])})
    delta = sum(f.delta_n or 0 for f in factors) if mode == GRAND_CANONICAL else None
    if mode == BRUTE:
        deltas = [f.delta_n for f in factors]
        delta = sum(deltas) if all(x is not None for x in deltas) else None
    mps = CanonicalMps(gammas, lambdas, total_charge=acc)
    return SuperState(mps, L, d, mode, delta, prefactor)


def embed_factor(op: LocalOperator, site: int, L: int) -> list[LocalOperator]:
    """Per-site factor list with ``op`` at ``site`` (1-based), identity elsewhere."""
    ident = LocalOperator(op.d, np.eye(op.d), 0)
    factors = [ident] * L
    factors[site - 1] = op
    return factors


def add(a: SuperState, b: SuperState) -> SuperState:
    """Operator sum; bond dimension at most the sum of the operands'."""
    if a.L != b.L or a.d != b.d or a.mode != b.mode:
        raise ValueError("shape mismatch")
    if a.delta_n != b.delta_n or a.in_charge != b.in_charge:
        raise ChargeMismatchError("charge mismatch")
    if a.is_zero:
        return b.copy()
    if b.is_zero:
        return a.copy()
    try:
        mps, norm = mps_core.add(a.mps, b.mps, a.prefactor, b.prefactor)
    except ZeroNormError:
        return SuperState.zero(a.L, a.d, a.mode, a.delta_n, a.in_charge, a.qbase)
    return SuperState(mps, a.L, a.d, a.mode, a.delta_n, norm, a.in_charge, a.qbase)


def _shift_bond_labels(mps: CanonicalMps, first_bond: int, delta: int) -> CanonicalMps:
    """Shift the charge labels of bonds >= first_bond by delta (relabel only)."""
    if delta == 0:
        return mps
    gammas = []
    for m in range(1, mps.L + 1):
        g = mps.gammas[m - 1]
        left = g.indices[0].shifted(delta) if m - 1 >= first_bond else g.indices[0]
        right = g.indices[2].shifted(delta) if m >= first_bond else g.indices[2]
        gammas.append(
            SymmetricTensor((left, g.indices[1], right), g.directions, dict(g.blocks), 0)
        )
    lambdas = []
    for b in range(1, mps.L):
        lam = mps.lambdas[b - 1]
        lambdas.append({q + delta: v for q, v in lam.items()} if b >= first_bond else lam)
    total = mps.total_charge
    if total is not None:
        total += delta
    return CanonicalMps(gammas, lambdas, total)


def apply_out_chain(op: LocalOperator, m: int, s: SuperState) -> SuperState:
    """Compose a single-site operator onto the out-chain at site m (1-based).

    The densified result is ``op_at_m @ densify(s)``; the particle-number
    change grows by the operator's.
    """
    if op.d != s.d:
        raise ValueError("shape mismatch")
    k = op.delta_n
    if s.mode != BRUTE and k is None:
        raise ChargeMismatchError("indefinite charge")
    new_delta = None if (s.delta_n is None or k is None) else s.delta_n + k
    if s.is_zero:
        return SuperState.zero(s.L, s.d, s.mode, new_delta, s.in_charge, s.qbase)

    d = s.d
    phys = s.phys_index()
    states = super_site_states(d, s.mode)
    state_pos = {sec: {ji: p for p, ji in enumerate(lst)} for sec, lst in enumerate(states)}

    g = s.mps.gammas[m - 1]
    new_blocks: dict[tuple[int, int, int], np.ndarray] = {}
    for key, blk in g.blocks.items():
        sec = key[1]
        for pos, (j, i) in enumerate(states[sec]):
            for x in range(d):
                amp = op.entries[x, i]
                if amp == 0:
                    continue
                # locate (j, x) in the mode's grading
                tgt_sec, tgt_pos = None, None
                for sec2 in range(len(states)):
                    p2 = state_pos[sec2].get((j, x))
                    if p2 is not None:
                        tgt_sec, tgt_pos = sec2, p2
                        break
                nkey = (key[0], tgt_sec, key[2])
                if nkey not in new_blocks:
                    new_blocks[nkey] = np.zeros(
                        (blk.shape[0], phys.dims[tgt_sec], blk.shape[2]), dtype=np.complex128
                    )
                new_blocks[nkey][:, tgt_pos, :] += amp * blk[:, pos, :]

    # the right bond of site m and every later bond pick up the charge shift;
    # _shift_bond_labels relabels them, after which every block satisfies the
    # selection rule again (new phys charge = old + shift)
    delta_bond = bond_charge_delta(s.mode, k or 0)
    new_site = SymmetricTensor((g.indices[0], phys, g.indices[2]), g.directions, new_blocks, 0)
    work = s.mps.copy()
    work.gammas[m - 1] = new_site
    work = _shift_bond_labels(work, m, delta_bond)
    work.gammas[m - 1].validate()

    site_tensors = [
        scale_axis(work.gammas[i - 1], 2, work.lambda_at(i)) if i < work.L else work.gammas[i - 1]
        for i in range(1, work.L + 1)
    ]
    try:
        new_mps, factor = mps_core.canonicalize(site_tensors)
    except ZeroNormError:
        return SuperState.zero(s.L, s.d, s.mode, new_delta, s.in_charge, s.qbase)
    return SuperState(
        new_mps, s.L, s.d, s.mode, new_delta, s.prefactor * factor, s.in_charge, s.qbase
    )


def hs_trace_pair(a: SuperState, b: SuperState) -> complex:
    """Tr[A^dagger B] as the superstate inner product; works across modes."""
    if a.L != b.L or a.d != b.d:
        raise ValueError("shape mismatch")
    if a.is_zero or b.is_zero:
        return 0.0 + 0.0j
    env = np.ones((1, 1), dtype=np.complex128)
    for m in range(1, a.L + 1):
        ta = a.site_dense_k(m)
        tb = b.site_dense_k(m)
        env = np.einsum("ab,akc,bkd->cd", env, ta.conj(), tb)
    return complex(np.conj(a.prefactor) * b.prefactor * env[0, 0])


def expectation_in_state(s: SuperState, psi: CanonicalMps) -> complex:
    """<psi|O|psi>: in-chain contracts with |psi>, out-chain with <psi|."""
    if s.L != psi.L or psi.site_dims != [s.d] * s.L:
        raise ValueError("shape mismatch")
    if s.is_zero:
        return 0.0 + 0.0j
    env = np.ones((1, 1, 1), dtype=np.complex128)
    for m in range(1, s.L + 1):
        so = s.site_dense_pair(m)  # (alpha, j, i, alpha')
        tp = psi.site_tensor_dense(m)
        env = np.einsum("xab,xjiy,aic,bjd->ycd", env, so, tp.conj(), tp)
    return complex(s.prefactor * env[0, 0, 0])


def _merged_pair_index(
    ix_t: ChargeIndex, ix_o: ChargeIndex, combine
) -> tuple[ChargeIndex, dict[tuple[int, int], tuple[int, int]]]:
    """Bond index of a composed chain: sector pairs grouped by combined charge.

    Returns the merged index and, per (t-sector, o-sector) pair, the target
    (merged sector position, offset inside it).
    """
    pairs = []
    for pt, (qt, dt) in enumerate(ix_t.sectors):
        for po, (qo, do) in enumerate(ix_o.sectors):
            pairs.append((combine(qt, qo), pt, po, dt * do))
    charges = sorted({q for q, _, _, _ in pairs})
    dims = {q: 0 for q in charges}
    placement: dict[tuple[int, int], tuple[int, int]] = {}
    for q, pt, po, size in sorted(pairs, key=lambda e: (e[0], e[1], e[2])):
        placement[(pt, po)] = (charges.index(q), dims[q])
        dims[q] += size
    merged = ChargeIndex(tuple((q, dims[q]) for q in charges))
    return merged, placement


def out_chain_compose(op_s: SuperState, target: SuperState) -> SuperState:
    """Compose an operator MPO onto the out-chain of ``target``: result = op . target.

    ``op_s`` must carry a definite particle-number change (grand-canonical
    labels); the result keeps the target's mode and input charge.
    """
    if op_s.L != target.L or op_s.d != target.d:
        raise ValueError("shape mismatch")
    if op_s.mode != GRAND_CANONICAL:
        raise ChargeMismatchError("indefinite charge")
    new_delta = None
    if target.delta_n is not None and op_s.delta_n is not None:
        new_delta = target.delta_n + op_s.delta_n
    if op_s.is_zero or target.is_zero:
        return SuperState.zero(
            target.L, target.d, target.mode, new_delta, target.in_charge, target.qbase
        )

    d, L, mode = target.d, target.L, target.mode
    if mode == BRUTE:
        combine = lambda qt, qo: 0
    elif mode == GRAND_CANONICAL:
        combine = lambda qt, qo: qt + qo
    else:
        combine = lambda qt, qo: qt - qo

    phys = super_site_index(d, mode, target.qbase)
    states = super_site_states(d, mode)
    state_pos = {}
    for sec, lst in enumerate(states):
        for p, ji in enumerate(lst):
            state_pos[ji] = (sec, p)

    site_tensors = []
    left_ix, left_place = _merged_pair_index(
        target.mps.bond_index(0), op_s.mps.bond_index(0), combine
    )
    for m in range(1, L + 1):
        dt = target.site_dense_pair(m)  # (a, j, i, b)
        do = op_s.site_dense_pair(m)  # (c, i, x, e)
        comp = np.einsum("ajib,cixe->acjxbe", dt, do)
        na, nc = comp.shape[0], comp.shape[1]
        nb, ne = comp.shape[4], comp.shape[5]
        comp = comp.reshape(na * nc, d, d, nb * ne)

        right_ix, right_place = _merged_pair_index(
            target.mps.bond_index(m), op_s.mps.bond_index(m), combine
        )
        t_ix_l = target.mps.bond_index(m - 1)
        o_ix_l = op_s.mps.bond_index(m - 1)
        t_ix_r = target.mps.bond_index(m)
        o_ix_r = op_s.mps.bond_index(m)
        t_off_l, o_off_l = t_ix_l.offsets(), o_ix_l.offsets()
        t_off_r, o_off_r = t_ix_r.offsets(), o_ix_r.offsets()

        blocks: dict[tuple[int, int, int], np.ndarray] = {}
        placed_sq = 0.0
        for (pt, po), (lsec, loff) in left_place.items():
            rows = (
                np.arange(t_off_l[pt], t_off_l[pt] + t_ix_l.dims[pt])[:, None] * o_ix_l.dim
                + np.arange(o_off_l[po], o_off_l[po] + o_ix_l.dims[po])[None, :]
            ).ravel()
            for (pt2, po2), (rsec, roff) in right_place.items():
                cols = (
                    np.arange(t_off_r[pt2], t_off_r[pt2] + t_ix_r.dims[pt2])[:, None]
                    * o_ix_r.dim
                    + np.arange(o_off_r[po2], o_off_r[po2] + o_ix_r.dims[po2])[None, :]
                ).ravel()
                sub = comp[np.ix_(rows, np.arange(d), np.arange(d), cols)]
                if not np.any(sub):
                    continue
                ql = left_ix.charges[lsec]
                qr = right_ix.charges[rsec]
                for j in range(d):
                    for x in range(d):
                        piece = sub[:, j, x, :]
                        if not np.any(piece):
                            continue
                        psec, ppos = state_pos[(j, x)]
                        if qr - ql - phys.charges[psec] != 0:
                            if np.max(np.abs(piece)) > 1e-10:
                                raise ChargeMismatchError("charge mismatch")
                            continue
                        key = (lsec, psec, rsec)
                        if key not in blocks:
                            blocks[key] = np.zeros(
                                (left_ix.dims[lsec], phys.dims[psec], right_ix.dims[rsec]),
                                dtype=np.complex128,
                            )
                        blocks[key][
                            loff : loff + len(rows), ppos, roff : roff + len(cols)
                        ] = piece
                        placed_sq += float(np.sum(np.abs(piece) ** 2))
        total_sq = float(np.sum(np.abs(comp) ** 2))
        if total_sq > 0 and abs(placed_sq - total_sq) > 1e-9 * total_sq + 1e-14:
            raise ChargeMismatchError("charge mismatch")
        site_tensors.append(
            SymmetricTensor((left_ix, phys, right_ix), (IN, IN, OUT), blocks, 0)
        )
        left_ix, left_place = right_ix, right_place

    try:
        new_mps, factor = mps_core.canonicalize(site_tensors)
    except ZeroNormError:
        return SuperState.zero(L, d, mode, new_delta, target.in_charge, target.qbase)
    return SuperState(
        new_mps,
        L,
        d,
        mode,
        new_delta,
        target.prefactor * op_s.prefactor * factor,
        target.in_charge,
        target.qbase,
    )
