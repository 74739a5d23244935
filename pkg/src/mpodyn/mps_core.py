"""Canonical (Vidal) matrix product states over charge-graded sites.

A state of L sites is stored as per-site Gamma tensors with legs
(bond-in, physical, bond-out) and per-interior-bond singular value vectors
grouped by bond charge.  Bond charges count accumulated physical charge
from the left, so the leftmost bond is a trivial charge-0 sector and the
rightmost carries the total charge of a charge-definite state.

Open boundaries only: the outer bonds are one-dimensional.  Singular
values below ``LAMBDA_FLOOR`` are dropped outright; restoring Vidal form
after a two-site update divides by the outer singular values and this
floor keeps that division stable.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .charge_tensor import (
    IN,
    OUT,
    ChargeIndex,
    ChargeMismatchError,
    Spectrum,
    SymmetricTensor,
    TruncationPolicy,
    ZeroNormError,
    THREADS_ENV,
    _svd_dense,
    block_svd,
    contract,
    dense_axis_values,
    global_truncation,
    scale_axis,
)

LAMBDA_FLOOR = 1e-14


@dataclass
class TruncationRecord:
    """Bookkeeping for a single two-site update: post-truncation norm and loss."""

    bond: int
    nu: float
    discarded_weight: float
    chi_used: int


class CanonicalMps:
    """Vidal-form MPS: Gamma tensors plus charge-labelled bond spectra.

    ``lambdas[m-1]`` holds the singular values of interior bond ``m``
    (1-based, between sites m and m+1) as a mapping charge -> descending
    values; the grouping matches the sector order of the adjacent bond
    legs.
    """

    def __init__(
        self,
        gammas: list[SymmetricTensor],
        lambdas: list[dict[int, np.ndarray]],
        total_charge: int | None = None,
    ):
        if len(lambdas) != len(gammas) - 1:
            raise ValueError("need exactly one singular vector per interior bond")
        self.gammas = gammas
        self.lambdas = [
            {int(q): np.asarray(v, dtype=np.float64) for q, v in lam.items()}
            for lam in lambdas
        ]
        self.total_charge = total_charge

    @property
    def L(self) -> int:
        return len(self.gammas)

    @property
    def phys_indices(self) -> list[ChargeIndex]:
        return [g.indices[1] for g in self.gammas]

    @property
    def site_dims(self) -> list[int]:
        return [ix.dim for ix in self.phys_indices]

    def bond_index(self, m: int) -> ChargeIndex:
        """ChargeIndex of bond m (0..L); outer bonds are one-dimensional."""
        if m == 0:
            return self.gammas[0].indices[0]
        return self.gammas[m - 1].indices[2]

    def lambda_at(self, m: int) -> dict[int, np.ndarray]:
        """Singular values at bond m (0..L); outer bonds return a unit weight."""
        if m == 0 or m == self.L:
            ix = self.bond_index(m)
            return {ix.charges[0]: np.array([1.0])}
        return self.lambdas[m - 1]

    def bond_dimension(self, m: int) -> int:
        return self.bond_index(m).dim

    def max_bond_dimension(self) -> int:
        return max(self.bond_dimension(m) for m in range(self.L + 1))

    def copy(self) -> "CanonicalMps":
        return CanonicalMps(
            [g.copy() for g in self.gammas],
            [{q: v.copy() for q, v in lam.items()} for lam in self.lambdas],
            self.total_charge,
        )

    # -- spectra and entropies ------------------------------------------------

    def schmidt_spectrum(self, m: int) -> Spectrum:
        """Charge-labelled Schmidt values across interior bond m (1..L-1)."""
        if not 1 <= m <= self.L - 1:
            raise ValueError("bond out of range")
        return Spectrum.from_dict(self.lambdas[m - 1])

    def entanglement_entropy(self, m: int) -> float:
        return self.schmidt_spectrum(m).entropy()

    def entropy_profile(self) -> list[float]:
        return [self.entanglement_entropy(m) for m in range(1, self.L)]

    # -- gate application -----------------------------------------------------

    def apply_two_site_gate(self, m, gate, policy: TruncationPolicy) -> TruncationRecord:
        """Apply a charge-conserving two-site gate at bond m (1..L-1), in place.

        Builds the outer-weighted two-site tensor, applies the gate,
        re-splits with a blockwise truncated SVD and restores Vidal form.
        The state is renormalized; the returned record carries the
        pre-normalization kept norm ``nu`` and the discarded weight.
        """
        if not 1 <= m <= self.L - 1:
            raise ValueError("bond out of range")
        tensor = gate.tensor if hasattr(gate, "tensor") else gate
        if tensor.total_charge != 0:
            raise ChargeMismatchError("charge mismatch")
        g1, g2 = self.gammas[m - 1], self.gammas[m]
        if (
            tensor.indices[2].sectors != g1.indices[1].sectors
            or tensor.indices[3].sectors != g2.indices[1].sectors
        ):
            raise ChargeMismatchError("charge mismatch")
        if hasattr(gate, "band_table"):
            return self._apply_gate_banded(m, gate, policy)

        lam_l = self.lambda_at(m - 1)
        lam_c = self.lambda_at(m)
        lam_r = self.lambda_at(m + 1)

        left = scale_axis(scale_axis(g1, 0, lam_l), 2, lam_c)
        right = scale_axis(g2, 2, lam_r) if m + 1 < self.L else g2
        theta = contract(left, right, [(2, 0)])  # (l, p1, p2, r)

        theta = contract(tensor, theta, [(2, 1), (3, 2)])  # (p1', p2', l, r)
        theta = theta.transpose((2, 0, 1, 3))

        floor = max(policy.singular_value_floor, LAMBDA_FLOOR)
        eff = TruncationPolicy(policy.chi_max, floor)
        try:
            res = block_svd(theta, (0, 1), eff, normalize=True)
        except ZeroNormError as exc:
            raise ZeroNormError("state annihilated") from exc

        new_g1 = scale_axis(res.left, 0, lam_l, inverse=True)
        new_g2 = scale_axis(res.right, 2, lam_r, inverse=True) if m + 1 < self.L else res.right

        self.gammas[m - 1] = new_g1
        self.gammas[m] = new_g2
        self.lambdas[m - 1] = res.spectrum.to_dict()
        return TruncationRecord(
            bond=m,
            nu=res.kept_norm,
            discarded_weight=res.discarded_norm,
            chi_used=len(res.spectrum),
        )

    def _apply_gate_banded(self, m, gate, policy: TruncationPolicy) -> TruncationRecord:
        """Fast two-site update: the gate acts as one dense block per
        two-site charge band, avoiding per-block dispatch when the grading
        is fine (many small sectors)."""
        g1, g2 = self.gammas[m - 1], self.gammas[m]
        lam_l = self.lambda_at(m - 1)
        lam_c = self.lambda_at(m)
        lam_r = self.lambda_at(m + 1)
        left = scale_axis(scale_axis(g1, 0, lam_l), 2, lam_c)
        right = scale_axis(g2, 2, lam_r) if m + 1 < self.L else g2

        phys1, phys2 = g1.indices[1], g2.indices[1]
        lix, rix = g1.indices[0], g2.indices[2]
        bands = gate.band_table()

        right_by_c: dict[int, list] = {}
        for key, blk in right.blocks.items():
            right_by_c.setdefault(key[0], []).append((key, blk))

        # two-site tensor as per-(left sector, right sector) slabs over the
        # fused pair basis of the matching charge band
        slabs: dict[tuple[int, int], np.ndarray] = {}
        for key1 in sorted(left.blocks):
            l_sec, p1, _c = key1
            blk1 = left.blocks[key1]
            for key2, blk2 in sorted(right_by_c.get(key1[2], ()), key=lambda e: e[0]):
                _, p2, r_sec = key2
                band = bands[rix.charges[r_sec] - lix.charges[l_sec]]
                off = band.offset_of[(p1, p2)]
                d1, d2 = phys1.dims[p1], phys2.dims[p2]
                contrib = np.tensordot(blk1, blk2, axes=(2, 0))
                skey = (l_sec, r_sec)
                slab = slabs.get(skey)
                if slab is None:
                    slab = np.zeros(
                        (blk1.shape[0], band.dim, blk2.shape[2]), dtype=np.complex128
                    )
                    slabs[skey] = slab
                slab[:, off : off + d1 * d2, :] += contrib.reshape(
                    blk1.shape[0], d1 * d2, blk2.shape[2]
                )
        if not slabs:
            raise ZeroNormError("state annihilated")

        # split the gated slabs into one matrix per new bond charge
        pieces = []
        row_sets: dict[int, set] = {}
        col_sets: dict[int, set] = {}
        for skey in sorted(slabs):
            l_sec, r_sec = skey
            band = bands[rix.charges[r_sec] - lix.charges[l_sec]]
            gated = np.tensordot(band.matrix, slabs[skey], axes=(1, 1)).transpose(1, 0, 2)
            l_dim, r_dim = gated.shape[0], gated.shape[2]
            for s1, s2, off in band.pairs:
                d1, d2 = phys1.dims[s1], phys2.dims[s2]
                piece = gated[:, off : off + d1 * d2, :]
                if not piece.any():
                    continue
                qn = lix.charges[l_sec] + phys1.charges[s1]
                pieces.append((qn, (l_sec, s1), (s2, r_sec), piece.reshape(l_dim, d1, d2, r_dim)))
                row_sets.setdefault(qn, set()).add((l_sec, s1))
                col_sets.setdefault(qn, set()).add((s2, r_sec))

        mats: dict[int, np.ndarray] = {}
        row_layout: dict[int, dict] = {}
        col_layout: dict[int, dict] = {}
        for qn in sorted(row_sets):
            roff, acc = {}, 0
            for l_sec, s1 in sorted(row_sets[qn]):
                roff[(l_sec, s1)] = acc
                acc += lix.dims[l_sec] * phys1.dims[s1]
            coff, cacc = {}, 0
            for s2, r_sec in sorted(col_sets[qn]):
                coff[(s2, r_sec)] = cacc
                cacc += phys2.dims[s2] * rix.dims[r_sec]
            row_layout[qn] = roff
            col_layout[qn] = coff
            mats[qn] = np.zeros((acc, cacc), dtype=np.complex128)
        for qn, rkey, ckey, piece in pieces:
            nr = piece.shape[0] * piece.shape[1]
            nc = piece.shape[2] * piece.shape[3]
            ro = row_layout[qn][rkey]
            co = col_layout[qn][ckey]
            mats[qn][ro : ro + nr, co : co + nc] = piece.reshape(nr, nc)

        floor = max(policy.singular_value_floor, LAMBDA_FLOOR)
        eff = TruncationPolicy(policy.chi_max, floor)
        qns = sorted(mats)
        nthreads = int(os.environ.get(THREADS_ENV, "1") or "1")
        if nthreads > 1 and len(qns) > 1:
            with ThreadPoolExecutor(max_workers=nthreads) as pool:
                svds = dict(zip(qns, pool.map(lambda q: _svd_dense(mats[q]), qns)))
        else:
            svds = {qn: _svd_dense(mats[qn]) for qn in qns}
        try:
            keep_count, kept_norm, discarded_norm = global_truncation(
                {qn: svds[qn][1] for qn in svds}, eff
            )
        except ZeroNormError as exc:
            raise ZeroNormError("state annihilated") from exc

        kept_charges = sorted(keep_count)
        bond = ChargeIndex(tuple((q, keep_count[q]) for q in kept_charges))
        bond_pos = {q: i for i, q in enumerate(kept_charges)}
        new_lam = {q: svds[q][1][: keep_count[q]] / kept_norm for q in kept_charges}

        g1_blocks: dict[tuple[int, int, int], np.ndarray] = {}
        g2_blocks: dict[tuple[int, int, int], np.ndarray] = {}
        for q in kept_charges:
            u, _s, vh = svds[q]
            k = keep_count[q]
            for (l_sec, s1), ro in row_layout[q].items():
                nr = lix.dims[l_sec] * phys1.dims[s1]
                part = u[ro : ro + nr, :k]
                if not part.any():
                    continue
                g1_blocks[(l_sec, s1, bond_pos[q])] = part.reshape(
                    lix.dims[l_sec], phys1.dims[s1], k
                )
            for (s2, r_sec), co in col_layout[q].items():
                nc = phys2.dims[s2] * rix.dims[r_sec]
                part = vh[:k, co : co + nc]
                if not part.any():
                    continue
                g2_blocks[(bond_pos[q], s2, r_sec)] = part.reshape(
                    k, phys2.dims[s2], rix.dims[r_sec]
                )

        new_g1 = SymmetricTensor((lix, phys1, bond), (IN, IN, OUT), g1_blocks, 0)
        new_g2 = SymmetricTensor((bond, phys2, rix), (IN, IN, OUT), g2_blocks, 0)
        new_g1 = scale_axis(new_g1, 0, lam_l, inverse=True)
        if m + 1 < self.L:
            new_g2 = scale_axis(new_g2, 2, lam_r, inverse=True)
        self.gammas[m - 1] = new_g1
        self.gammas[m] = new_g2
        self.lambdas[m - 1] = new_lam
        return TruncationRecord(
            bond=m,
            nu=kept_norm,
            discarded_weight=discarded_norm,
            chi_used=sum(keep_count.values()),
        )

    # -- dense views -----------------------------------------------------------

    def site_tensor_dense(self, m: int, absorb_right: bool = True) -> np.ndarray:
        """Dense (chi_l, D, chi_r) view of site m (1..L), sector-layout ordering.

        With ``absorb_right`` the bond singular values to the right are
        multiplied in, so the chain product of these tensors is the state.
        """
        g = self.gammas[m - 1]
        dense = g.densify()
        if absorb_right and m < self.L:
            w = dense_axis_values(g.indices[2], self.lambda_at(m))
            dense = dense * w[None, None, :]
        return dense

    def to_statevector(self, site_perms=None) -> np.ndarray:
        """Dense state with site 1 as the fastest-varying index.

        ``site_perms`` optionally maps each site's sector-layout order to a
        physical basis order (used by doubled-site states).
        """
        dim = int(np.prod(self.site_dims))
        if dim > 2**22:
            raise ValueError("state too large to densify")
        vec = np.ones((1, 1), dtype=np.complex128)
        for m in range(1, self.L + 1):
            t = self.site_tensor_dense(m)
            if site_perms is not None:
                perm = site_perms[m - 1]
                inv = np.argsort(perm)
                t = t[:, inv, :]
            # vec: (prefix, chi); new index varies slower than the prefix
            vec = np.einsum("pa,akb->kpb", vec, t).reshape(-1, t.shape[2])
        return vec[:, 0]

    # -- overlaps ---------------------------------------------------------------

    def inner_product(self, other: "CanonicalMps") -> complex:
        """<self|other>; exact 0 when total charges are definite and differ."""
        if self.L != other.L or self.site_dims != other.site_dims:
            raise ValueError("shape mismatch")
        if (
            self.total_charge is not None
            and other.total_charge is not None
            and self.total_charge != other.total_charge
        ):
            return 0.0 + 0.0j
        env = np.ones((1, 1), dtype=np.complex128)
        for m in range(1, self.L + 1):
            ta = self.site_tensor_dense(m)
            tb = other.site_tensor_dense(m)
            env = np.einsum("ab,akc,bkd->cd", env, ta.conj(), tb)
        return complex(env[0, 0])

    def norm(self) -> float:
        return float(np.sqrt(abs(self.inner_product(self))))

    def assert_canonical(self, atol: float = 1e-8) -> None:
        """Verify bond normalization and the left/right orthogonality conditions."""
        for m in range(1, self.L):
            total = sum(np.sum(v**2) for v in self.lambdas[m - 1].values())
            if abs(total - 1.0) > 1e-10:
                raise AssertionError(f"bond {m}: sum lambda^2 = {total}")
        for m in range(1, self.L + 1):
            g = self.site_tensor_dense(m, absorb_right=False)
            wl = dense_axis_values(self.bond_index(m - 1), self.lambda_at(m - 1))
            a = g * wl[:, None, None]
            right_env = np.einsum("akb,akc->bc", a.conj(), a)
            if not np.allclose(right_env, np.eye(a.shape[2]), atol=atol):
                raise AssertionError(f"site {m}: right orthogonality violated")
            wr = dense_axis_values(self.bond_index(m), self.lambda_at(m))
            b = g * wr[None, None, :]
            left_env = np.einsum("akc,bkc->ab", b, b.conj())
            if not np.allclose(left_env, np.eye(b.shape[0]), atol=atol):
                raise AssertionError(f"site {m}: left orthogonality violated")


def from_fock(occupations: list[int], d: int) -> CanonicalMps:
    """Product (Fock) state; bond dimension one everywhere."""
    occupations = [int(j) for j in occupations]
    if any(j < 0 or j >= d for j in occupations):
        raise ValueError("local dimension exceeded")
    phys = ChargeIndex.occupation(d)
    gammas = []
    lambdas = []
    acc = 0
    for i, j in enumerate(occupations):
        left = ChargeIndex.trivial(acc)
        acc += j
        right = ChargeIndex.trivial(acc)
        blk = np.ones((1, 1, 1), dtype=np.complex128)
        gammas.append(
            SymmetricTensor((left, phys, right), (IN, IN, OUT), {(0, j, 0): blk}, 0)
        )
        if i < len(occupations) - 1:
            lambdas.append({acc: np.array([1.0])})
    return CanonicalMps(gammas, lambdas, total_charge=acc)


def canonicalize(
    site_tensors: list[SymmetricTensor],
    policy: TruncationPolicy | None = None,
) -> tuple[CanonicalMps, float]:
    """Bring an arbitrary (bond-in, phys, bond-out) chain to Vidal form.

    Returns the canonical state and the norm of the input chain.  Raises
    ``ZeroNormError`` if the chain represents the zero vector.
    """
    if policy is None:
        policy = TruncationPolicy(None, LAMBDA_FLOOR)
    eff = TruncationPolicy(policy.chi_max, max(policy.singular_value_floor, LAMBDA_FLOOR))
    L = len(site_tensors)
    tensors = [t.copy() for t in site_tensors]

    total_charge = None
    right_ix = tensors[-1].indices[2]
    if right_ix.nsectors == 1:
        total_charge = right_ix.charges[0]

    if L == 1:
        nrm = tensors[0].norm()
        if nrm < 1e-300:
            raise ZeroNormError("zero norm")
        return CanonicalMps([tensors[0].scale(1.0 / nrm)], [], total_charge), nrm

    # right-to-left sweep: make sites 2..L right-isometric
    for m in range(L - 1, 0, -1):
        res = block_svd(tensors[m], (0,), TruncationPolicy(None, LAMBDA_FLOOR), normalize=False)
        tensors[m] = res.right
        carry = scale_axis(res.left, 1, res.spectrum.to_dict())
        tensors[m - 1] = contract(tensors[m - 1], carry, [(2, 0)])

    # left-to-right sweep: extract Schmidt spectra and Gamma tensors
    gammas: list[SymmetricTensor] = []
    lambdas: list[dict[int, np.ndarray]] = []
    norm_val = None
    prev_lam: dict[int, np.ndarray] | None = None
    for m in range(L - 1):
        res = block_svd(tensors[m], (0, 1), eff, normalize=False)
        if norm_val is None:
            norm_val = float(np.sqrt(res.kept_norm**2 + res.discarded_norm**2))
            if norm_val < 1e-300:
                raise ZeroNormError("zero norm")
        lam = {q: v / norm_val for q, v in res.spectrum.to_dict().items()}
        gamma = res.left if prev_lam is None else scale_axis(res.left, 0, prev_lam, inverse=True)
        gammas.append(gamma)
        lambdas.append(lam)
        carry = scale_axis(res.right, 0, res.spectrum.to_dict())
        tensors[m + 1] = contract(carry, tensors[m + 1], [(1, 0)])
        prev_lam = lam

    last = tensors[L - 1].scale(1.0 / norm_val)
    last = scale_axis(last, 0, prev_lam, inverse=True)
    gammas.append(last)
    return CanonicalMps(gammas, lambdas, total_charge), norm_val


def _bond_direct_sum(ix_a: ChargeIndex, ix_b: ChargeIndex):
    """Merged ChargeIndex plus per-sector embedding offsets for each operand."""
    charges = sorted(set(ix_a.charges) | set(ix_b.charges))
    dims_a = dict(ix_a.sectors)
    dims_b = dict(ix_b.sectors)
    sectors = tuple((q, dims_a.get(q, 0) + dims_b.get(q, 0)) for q in charges)
    merged = ChargeIndex(sectors)
    off_a = {q: 0 for q in charges}
    off_b = {q: dims_a.get(q, 0) for q in charges}
    return merged, off_a, off_b


def add(
    a: CanonicalMps,
    b: CanonicalMps,
    coeff_a: complex = 1.0,
    coeff_b: complex = 1.0,
    policy: TruncationPolicy | None = None,
) -> tuple[CanonicalMps, float]:
    """coeff_a * |a> + coeff_b * |b>, recanonicalized.

    Returns the normalized sum and its norm.  Operands must share the
    physical grading and, when definite, the total charge.
    """
    if a.L != b.L or [ix.sectors for ix in a.phys_indices] != [
        ix.sectors for ix in b.phys_indices
    ]:
        raise ValueError("shape mismatch")
    if (
        a.total_charge is not None
        and b.total_charge is not None
        and a.total_charge != b.total_charge
    ):
        raise ChargeMismatchError("charge mismatch")

    L = a.L
    site_tensors = []
    for m in range(1, L + 1):
        ta = scale_axis(a.gammas[m - 1], 2, a.lambda_at(m)) if m < L else a.gammas[m - 1]
        tb = scale_axis(b.gammas[m - 1], 2, b.lambda_at(m)) if m < L else b.gammas[m - 1]
        if m == 1:
            ta = ta.scale(coeff_a)
            tb = tb.scale(coeff_b)
        left_ix, la, lb = (
            (ta.indices[0], None, None)
            if m == 1
            else _bond_direct_sum(ta.indices[0], tb.indices[0])
        )
        right_ix, ra, rb = (
            (ta.indices[2], None, None)
            if m == L
            else _bond_direct_sum(ta.indices[2], tb.indices[2])
        )
        blocks: dict[tuple[int, int, int], np.ndarray] = {}

        def _embed(src: SymmetricTensor, loff, roff):
            for key, blk in src.blocks.items():
                lq = src.indices[0].charges[key[0]]
                rq = src.indices[2].charges[key[2]]
                lpos = left_ix.position(lq)
                rpos = right_ix.position(rq)
                nkey = (lpos, key[1], rpos)
                if nkey not in blocks:
                    blocks[nkey] = np.zeros(
                        (left_ix.dims[lpos], src.indices[1].dims[key[1]], right_ix.dims[rpos]),
                        dtype=np.complex128,
                    )
                l0 = 0 if loff is None else loff[lq]
                r0 = 0 if roff is None else roff[rq]
                blocks[nkey][
                    l0 : l0 + blk.shape[0], :, r0 : r0 + blk.shape[2]
                ] += blk

        _embed(ta, la, ra)
        _embed(tb, lb, rb)
        site_tensors.append(
            SymmetricTensor((left_ix, ta.indices[1], right_ix), (IN, IN, OUT), blocks, 0)
        )
    return canonicalize(site_tensors, policy)


# -- serialization ---------------------------------------------------------------


def save_mps(path: str, mps: CanonicalMps) -> None:
    """Write a self-describing .npz checkpoint of the state.

    The container holds one array per stored block (named ``g{site}/{key}``),
    one per bond spectrum sector (``lam{bond}/{charge}``), and a JSON header
    with the charge layout.  See README for the format notes.
    """
    meta = {
        "L": mps.L,
        "total_charge": mps.total_charge,
        "indices": [
            {
                "sectors": [list(s) for s in g.indices[i].sectors],
                "direction": g.directions[i],
            }
            for g in mps.gammas
            for i in range(3)
        ],
        "block_keys": [[list(k) for k in sorted(g.blocks)] for g in mps.gammas],
        "lambda_charges": [sorted(lam) for lam in mps.lambdas],
    }
    arrays = {"__meta__": np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)}
    for m, g in enumerate(mps.gammas):
        for k in sorted(g.blocks):
            arrays[f"g{m}/{','.join(map(str, k))}"] = g.blocks[k]
    for m, lam in enumerate(mps.lambdas):
        for q in sorted(lam):
            arrays[f"lam{m}/{q}"] = lam[q]
    np.savez_compressed(path, **arrays)


def load_mps(path: str) -> CanonicalMps:
    with np.load(path) as data:
        meta = json.loads(bytes(data["__meta__"]).decode())
        L = meta["L"]
        gammas = []
        for m in range(L):
            idx = []
            for i in range(3):
                entry = meta["indices"][3 * m + i]
                idx.append(ChargeIndex(tuple(tuple(s) for s in entry["sectors"])))
            dirs = tuple(meta["indices"][3 * m + i]["direction"] for i in range(3))
            blocks = {
                tuple(k): data[f"g{m}/{','.join(map(str, k))}"]
                for k in meta["block_keys"][m]
            }
            gammas.append(SymmetricTensor(tuple(idx), dirs, blocks, 0))
        lambdas = [
            {q: data[f"lam{m}/{q}"] for q in meta["lambda_charges"][m]}
            for m in range(L - 1)
        ]
    return CanonicalMps(gammas, lambdas, meta["total_charge"])
