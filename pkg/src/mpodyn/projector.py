"""Fixed particle-number projectors and their exact entanglement profile.

The uniform superposition of all N-particle Fock states has a closed-form
canonical MPS: the squared Schmidt value of finding l particles left of a
bond is a ratio of occupancy counts, and the site tensors follow from the
conditional probabilities.  Mapping every site through |j> -> |j><j| turns
that state into the projector onto the N-particle sector, whose bond
dimension is at most N + 1 and whose entanglement entropy is bounded by
log2(N + 1).

All counts are exact big integers; ratios are formed with ``fractions``
and converted to floats only at the end, so large systems do not lose
precision to cancellation.
"""

from __future__ import annotations

from fractions import Fraction
from functools import lru_cache

import numpy as np

from .charge_tensor import IN, OUT, ChargeIndex, SymmetricTensor
from .mps_core import CanonicalMps
from .operator_space import (
    CANONICAL,
    GRAND_CANONICAL,
    LocalOperator,
    SuperState,
    apply_out_chain,
    default_qbase,
    out_chain_compose,
    super_site_index,
)


class OccupancyCount:
    """Number of ways to place n indistinguishable particles on L sites with
    at most d-1 per site; memoized exact integers."""

    def __init__(self, d: int):
        if d < 2:
            raise ValueError("need d >= 2")
        self.d = d
        self.memo: dict[tuple[int, int], int] = {}

    def count(self, n: int, L: int) -> int:
        if n < 0 or L < 0:
            return 0
        if L == 0:
            return 1 if n == 0 else 0
        key = (n, L)
        cached = self.memo.get(key)
        if cached is not None:
            return cached
        total = sum(self.count(n - j, L - 1) for j in range(min(n, self.d - 1) + 1))
        self.memo[key] = total
        return total


@lru_cache(maxsize=None)
def _counter(d: int) -> OccupancyCount:
    return OccupancyCount(d)


def omega(d: int, n: int, L: int) -> int:
    """Exact occupancy count Omega_d(n, L); 0 for infeasible n."""
    if d < 2 or L < 0 or n < 0:
        if n < 0:
            return 0
        raise ValueError("need d >= 2 and L >= 0")
    return _counter(d).count(n, L)


def _lambda_sq(d: int, N: int, L: int, m: int, l: int) -> Fraction:
    """Probability of l particles left of bond m in the uniform N-particle state."""
    return Fraction(omega(d, l, m) * omega(d, N - l, L - m), omega(d, N, L))


def _feasible(d: int, N: int, L: int, m: int) -> list[int]:
    return [
        l
        for l in range(N + 1)
        if omega(d, l, m) > 0 and omega(d, N - l, L - m) > 0
    ]


def uniform_fock_superposition(N: int, L: int, d: int | None = None) -> CanonicalMps:
    """Normalized equal superposition of all N-particle Fock states.

    With no local cap desired pass d = N + 1 (the default).  Bond charges
    count particles to the left, so the bond dimension is the number of
    feasible counts, at most N + 1.
    """
    if d is None:
        d = N + 1
    if N < 0 or N > L * (d - 1):
        raise ValueError("infeasible particle number")
    phys = ChargeIndex.occupation(d)
    gammas = []
    lambdas = []
    prev = [0]
    for m in range(1, L + 1):
        cur = _feasible(d, N, L, m)
        left = ChargeIndex(tuple((l, 1) for l in prev))
        right = ChargeIndex(tuple((r, 1) for r in cur))
        blocks = {}
        for lpos, l in enumerate(prev):
            for rpos, r in enumerate(cur):
                j = r - l
                if j < 0 or j > d - 1:
                    continue
                # squared site amplitude: conditional probability ratio
                num = omega(d, N, L)
                den = omega(d, N - l, L - m + 1) * omega(d, r, m)
                if den == 0:
                    continue
                g2 = Fraction(num, den)
                val = float(np.sqrt(float(g2)))
                blocks[(lpos, j, rpos)] = np.array([[[val]]], dtype=np.complex128)
        gammas.append(SymmetricTensor((left, phys, right), (IN, IN, OUT), blocks, 0))
        if m < L:
            lambdas.append(
                {l: np.array([float(np.sqrt(float(_lambda_sq(d, N, L, m, l))))]) for l in cur}
            )
        prev = cur
    return CanonicalMps(gammas, lambdas, total_charge=N)


def projector_superstate(N: int, L: int, d: int, mode: str = CANONICAL) -> SuperState:
    """Superstate of the projector onto the N-particle sector.

    The diagonal map |j> -> |j><j| applied to the uniform superposition;
    the stored prefactor sqrt(Omega_d(N, L)) is its Hilbert-Schmidt norm.
    In canonical mode every bond keeps one sector per particle count; in
    the weaker gradings the counts collapse onto fewer charge labels.
    """
    state = uniform_fock_superposition(N, L, d)
    qbase = default_qbase(L, d) if mode == CANONICAL else None
    phys = super_site_index(d, mode, qbase)

    def bond_label(l: int) -> int:
        if mode == CANONICAL:
            return l * qbase + l
        return 0

    def phys_sector(j: int) -> tuple[int, int]:
        # position of the diagonal pair (j, j) inside the mode's grading
        if mode == CANONICAL:
            return phys.position(j * qbase + j), 0
        if mode == GRAND_CANONICAL:
            return phys.position(0), j
        return 0, j * d + j

    def merge_bond(ix: ChargeIndex):
        """New ChargeIndex plus (new position, offset) per old sector position."""
        groups: dict[int, int] = {}
        place: list[tuple[int, int]] = []
        for q, dim in ix.sectors:
            label = bond_label(q)
            place.append((label, groups.get(label, 0)))
            groups[label] = groups.get(label, 0) + dim
        charges = sorted(groups)
        merged = ChargeIndex(tuple((c, groups[c]) for c in charges))
        pos_of = {c: i for i, c in enumerate(charges)}
        return merged, [(pos_of[label], off) for label, off in place]

    gammas = []
    bond_maps = [merge_bond(state.bond_index(m)) for m in range(L + 1)]
    for m, g in enumerate(state.gammas, start=1):
        left, lmap = bond_maps[m - 1]
        right, rmap = bond_maps[m]
        blocks: dict[tuple[int, int, int], np.ndarray] = {}
        for (lpos, j, rpos), blk in g.blocks.items():
            sec, pos = phys_sector(j)
            nl, loff = lmap[lpos]
            nr, roff = rmap[rpos]
            key = (nl, sec, nr)
            if key not in blocks:
                blocks[key] = np.zeros(
                    (left.dims[nl], phys.dims[sec], right.dims[nr]), dtype=np.complex128
                )
            blocks[key][loff, pos, roff] = blk[0, 0, 0]
        gammas.append(SymmetricTensor((left, phys, right), (IN, IN, OUT), blocks, 0))

    lambdas = []
    for b in range(1, L):
        merged, bmap = bond_maps[b]
        vals = {q: np.zeros(dim) for q, dim in merged.sectors}
        for old_pos, (q, _) in enumerate(state.bond_index(b).sectors):
            npos, off = bmap[old_pos]
            label = merged.charges[npos]
            vals[label][off] = state.lambdas[b - 1][q][0]
        lambdas.append(vals)

    mps = CanonicalMps(gammas, lambdas, total_charge=bond_label(N))
    return SuperState(
        mps,
        L,
        d,
        mode,
        delta_n=0,
        prefactor=float(np.sqrt(omega(d, N, L))),
        in_charge=N if mode == CANONICAL else None,
        qbase=qbase,
    )


def project_operator(op, N: int, L: int | None = None, d: int | None = None) -> SuperState:
    """Sandwich an operator between fixed-number projectors: P_{N-dn} op P_N.

    ``op`` is either a per-site factor list or a grand-canonical SuperState.
    An infeasible output sector yields the flagged zero superstate rather
    than an error.
    """
    if isinstance(op, SuperState):
        L, d = op.L, op.d
        delta = op.delta_n
        if delta is None:
            raise ValueError("indefinite charge")
        if N < 0 or N > L * (d - 1) or N - delta < 0 or N - delta > L * (d - 1):
            return SuperState.zero(L, d, CANONICAL, delta, N, default_qbase(L, d))
        return out_chain_compose(op, projector_superstate(N, L, d))

    factors: list[LocalOperator] = list(op)
    L = len(factors)
    d = factors[0].d
    if any(f.delta_n is None for f in factors):
        raise ValueError("indefinite charge")
    delta = sum(f.delta_n for f in factors)
    if N < 0 or N > L * (d - 1) or N - delta < 0 or N - delta > L * (d - 1):
        return SuperState.zero(L, d, CANONICAL, delta, N, default_qbase(L, d))
    result = projector_superstate(N, L, d)
    for m, f in enumerate(factors, start=1):
        if f.is_identity():
            continue
        result = apply_out_chain(f, m, result)
        if result.is_zero:
            break
    return result


def projector_osee(N: int, L: int, d: int, m: int) -> float:
    """Entanglement entropy of the projector superstate across bond m,
    evaluated directly from the exact Schmidt weights."""
    if not 1 <= m <= L - 1:
        raise ValueError("bond out of range")
    total = 0.0
    for l in range(N + 1):
        p = _lambda_sq(d, N, L, m, l)
        if p > 0:
            pf = float(p)
            total -= pf * np.log2(pf)
    return float(total)
