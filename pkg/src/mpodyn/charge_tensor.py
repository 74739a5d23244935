"""Block-sparse tensors graded by a single additive U(1) charge.

Every tensor leg carries a :class:`ChargeIndex` (ordered charge sectors) and
a direction flag ("in" or "out").  A dense block may be nonzero only when

    sum(charges of outgoing legs) - sum(charges of incoming legs) == total_charge

All other entries are exactly zero and never stored.  Blocks are complex
double precision, row-major.

``block_svd`` matricizes a tensor along a leg bipartition and decomposes it
charge block by charge block.  The new bond sector label equals the net
charge entering through the row legs ("particles to the left of the cut"),
so the left factor always has total charge zero and the right factor
inherits the input's total charge.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

IN = "in"
OUT = "out"

THREADS_ENV = "MPODYN_THREADS"


class ChargeMismatchError(ValueError):
    """Charge structures of the operands are incompatible."""


class ZeroNormError(ValueError):
    """The operation requires a tensor with nonzero norm."""


@dataclass(frozen=True)
class ChargeIndex:
    """Ordered list of (charge, dimension) sectors labelling one tensor leg."""

    sectors: tuple[tuple[int, int], ...]

    def __post_init__(self):
        charges = [q for q, _ in self.sectors]
        if any(b <= a for a, b in zip(charges, charges[1:])):
            raise ChargeMismatchError("sector charges must be strictly increasing")
        if any(dim < 1 for _, dim in self.sectors):
            raise ValueError("sector dimensions must be >= 1")

    @classmethod
    def occupation(cls, d: int) -> "ChargeIndex":
        """Physical leg of a site with occupations 0..d-1, one state per charge."""
        return cls(tuple((j, 1) for j in range(d)))

    @classmethod
    def trivial(cls, charge: int = 0) -> "ChargeIndex":
        return cls(((charge, 1),))

    @property
    def charges(self) -> tuple[int, ...]:
        return tuple(q for q, _ in self.sectors)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(dim for _, dim in self.sectors)

    @property
    def dim(self) -> int:
        return sum(self.dims)

    @property
    def nsectors(self) -> int:
        return len(self.sectors)

    def offsets(self) -> tuple[int, ...]:
        """Dense offset of each sector when the leg is laid out sector by sector."""
        out, acc = [], 0
        for _, dim in self.sectors:
            out.append(acc)
            acc += dim
        return tuple(out)

    def position(self, charge: int) -> int:
        for pos, (q, _) in enumerate(self.sectors):
            if q == charge:
                return pos
        raise KeyError(f"no sector with charge {charge}")

    def shifted(self, delta: int) -> "ChargeIndex":
        return ChargeIndex(tuple((q + delta, dim) for q, dim in self.sectors))


def _sign(direction: str) -> int:
    if direction == OUT:
        return 1
    if direction == IN:
        return -1
    raise ValueError(f"unknown direction {direction!r}")


@dataclass
class SymmetricTensor:
    """Charge-conserving block-sparse tensor.

    ``blocks`` maps per-leg sector positions to dense complex arrays whose
    shape matches the selected sector dimensions.  Tensors are treated as
    immutable values after construction.
    """

    indices: tuple[ChargeIndex, ...]
    directions: tuple[str, ...]
    blocks: dict[tuple[int, ...], np.ndarray]
    total_charge: int = 0

    def __post_init__(self):
        if len(self.indices) != len(self.directions):
            raise ValueError("one direction flag per index required")
        self.indices = tuple(self.indices)
        self.directions = tuple(self.directions)
        self.blocks = {
            key: np.ascontiguousarray(np.asarray(blk, dtype=np.complex128))
            for key, blk in self.blocks.items()
        }

    @property
    def ndim(self) -> int:
        return len(self.indices)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(ix.dim for ix in self.indices)

    def key_charge(self, key: tuple[int, ...]) -> int:
        return sum(
            _sign(dr) * ix.charges[pos]
            for ix, dr, pos in zip(self.indices, self.directions, key)
        )

    def validate(self, atol: float = 0.0) -> None:
        """Check shapes and the charge selection rule for every stored block."""
        for key, blk in self.blocks.items():
            if len(key) != self.ndim:
                raise ChargeMismatchError("charge mismatch")
            want = tuple(ix.dims[pos] for ix, pos in zip(self.indices, key))
            if blk.shape != want:
                raise ChargeMismatchError(
                    f"block {key} has shape {blk.shape}, sectors require {want}"
                )
            if self.key_charge(key) != self.total_charge:
                raise ChargeMismatchError("charge mismatch")

    def copy(self) -> "SymmetricTensor":
        return SymmetricTensor(
            self.indices,
            self.directions,
            {k: blk.copy() for k, blk in self.blocks.items()},
            self.total_charge,
        )

    def conj(self) -> "SymmetricTensor":
        """Complex conjugate; flips leg directions and negates the total charge."""
        flipped = tuple(IN if d == OUT else OUT for d in self.directions)
        return SymmetricTensor(
            self.indices,
            flipped,
            {k: blk.conj() for k, blk in self.blocks.items()},
            -self.total_charge,
        )

    def transpose(self, perm: tuple[int, ...]) -> "SymmetricTensor":
        return SymmetricTensor(
            tuple(self.indices[p] for p in perm),
            tuple(self.directions[p] for p in perm),
            {
                tuple(key[p] for p in perm): np.transpose(blk, perm)
                for key, blk in self.blocks.items()
            },
            self.total_charge,
        )

    def scale(self, factor: complex) -> "SymmetricTensor":
        return SymmetricTensor(
            self.indices,
            self.directions,
            {k: blk * factor for k, blk in self.blocks.items()},
            self.total_charge,
        )

    def norm(self) -> float:
        return float(
            np.sqrt(sum(np.sum(np.abs(blk) ** 2) for blk in self.blocks.values()))
        )

    def densify(self) -> np.ndarray:
        """Dense array with every leg laid out sector by sector (charge ascending)."""
        out = np.zeros(self.shape, dtype=np.complex128)
        offs = [ix.offsets() for ix in self.indices]
        for key, blk in self.blocks.items():
            sl = tuple(
                slice(offs[a][pos], offs[a][pos] + self.indices[a].dims[pos])
                for a, pos in enumerate(key)
            )
            out[sl] = blk
        return out


def scale_axis(
    t: SymmetricTensor,
    axis: int,
    sector_values: dict[int, np.ndarray],
    inverse: bool = False,
) -> SymmetricTensor:
    """Multiply (or divide) block slices along ``axis`` by per-sector weights."""
    index = t.indices[axis]
    blocks = {}
    for key, blk in t.blocks.items():
        q = index.charges[key[axis]]
        vec = np.asarray(sector_values[q], dtype=np.float64)
        shape = [1] * t.ndim
        shape[axis] = len(vec)
        w = vec.reshape(shape)
        blocks[key] = blk / w if inverse else blk * w
    return SymmetricTensor(t.indices, t.directions, blocks, t.total_charge)


def contract(
    a: SymmetricTensor,
    b: SymmetricTensor,
    pairs: list[tuple[int, int]],
) -> SymmetricTensor:
    """Contract ``a`` with ``b`` over the given leg pairs.

    Paired legs must carry identical sector lists with opposite direction
    flags.  Free legs of ``a`` come first in the result, then free legs of
    ``b``; the result charge is the sum of the operand charges.
    """
    for ia, ib in pairs:
        if a.indices[ia].sectors != b.indices[ib].sectors:
            raise ChargeMismatchError("charge mismatch")
        if _sign(a.directions[ia]) + _sign(b.directions[ib]) != 0:
            raise ChargeMismatchError("paired legs must have opposite directions")

    a_axes = [ia for ia, _ in pairs]
    b_axes = [ib for _, ib in pairs]
    a_free = [i for i in range(a.ndim) if i not in a_axes]
    b_free = [i for i in range(b.ndim) if i not in b_axes]

    by_paired: dict[tuple[int, ...], list[tuple[int, ...]]] = {}
    for kb in b.blocks:
        by_paired.setdefault(tuple(kb[i] for i in b_axes), []).append(kb)

    out_blocks: dict[tuple[int, ...], np.ndarray] = {}
    for ka in sorted(a.blocks):
        lookup = tuple(ka[i] for i in a_axes)
        partners = by_paired.get(lookup)
        if not partners:
            continue
        blk_a = a.blocks[ka]
        for kb in sorted(partners):
            res = np.tensordot(blk_a, b.blocks[kb], axes=(a_axes, b_axes))
            key = tuple(ka[i] for i in a_free) + tuple(kb[i] for i in b_free)
            if key in out_blocks:
                out_blocks[key] = out_blocks[key] + res
            else:
                out_blocks[key] = res

    return SymmetricTensor(
        tuple(a.indices[i] for i in a_free) + tuple(b.indices[i] for i in b_free),
        tuple(a.directions[i] for i in a_free) + tuple(b.directions[i] for i in b_free),
        out_blocks,
        a.total_charge + b.total_charge,
    )


@dataclass(frozen=True)
class TruncationPolicy:
    """Bond truncation budget: hard cap on kept values plus an absolute floor.

    ``chi_max=None`` means no cap.
    """

    chi_max: int | None = None
    singular_value_floor: float = 0.0

    def __post_init__(self):
        if self.chi_max is not None and self.chi_max < 1:
            raise ValueError("chi_max must be >= 1")
        if self.singular_value_floor < 0:
            raise ValueError("singular_value_floor must be >= 0")


@dataclass(frozen=True)
class Spectrum:
    """Charge-labelled singular values, stored per sector, descending within."""

    sectors: tuple[tuple[int, np.ndarray], ...]

    def __post_init__(self):
        object.__setattr__(
            self,
            "sectors",
            tuple(
                (int(q), np.asarray(v, dtype=np.float64)) for q, v in self.sectors
            ),
        )

    @classmethod
    def from_dict(cls, d: dict[int, np.ndarray]) -> "Spectrum":
        return cls(tuple(sorted((q, np.asarray(v)) for q, v in d.items())))

    def to_dict(self) -> dict[int, np.ndarray]:
        return {q: v.copy() for q, v in self.sectors}

    def _global_order(self) -> list[tuple[float, int, int]]:
        entries = []
        for q, vals in self.sectors:
            for pos, v in enumerate(vals):
                entries.append((v, q, pos))
        # descending value; ties broken by lower charge, then in-sector order
        entries.sort(key=lambda e: (-e[0], e[1], e[2]))
        return entries

    @property
    def values(self) -> np.ndarray:
        """All values in global descending order."""
        return np.array([v for v, _, _ in self._global_order()], dtype=np.float64)

    @property
    def charges(self) -> np.ndarray:
        """Charge label of each value, aligned with :attr:`values`."""
        return np.array([q for _, q, _ in self._global_order()], dtype=np.int64)

    def __len__(self) -> int:
        return sum(len(v) for _, v in self.sectors)

    def sum_sq(self) -> float:
        return float(sum(np.sum(v**2) for _, v in self.sectors))

    def entropy(self) -> float:
        """Von Neumann entropy in bits of the squared values."""
        p = np.concatenate([v**2 for _, v in self.sectors]) if self.sectors else np.array([])
        p = p[p > 0]
        if p.size == 0:
            return 0.0
        return max(0.0, float(-np.sum(p * np.log2(p))))

    def as_index(self) -> ChargeIndex:
        return ChargeIndex(tuple((q, len(v)) for q, v in self.sectors))


@dataclass(frozen=True)
class SvdResult:
    """Outcome of a blockwise truncated SVD.

    ``spectrum`` is normalized to unit square sum when requested;
    ``kept_norm`` is the pre-normalization 2-norm of the kept values and
    ``discarded_norm`` the 2-norm of everything dropped, so
    ``left @ diag(spectrum * kept_norm) @ right`` reconstructs the truncated
    input.
    """

    left: SymmetricTensor
    spectrum: Spectrum
    right: SymmetricTensor
    discarded_norm: float
    kept_norm: float


def global_truncation(
    values_by_q: dict[int, np.ndarray], policy: TruncationPolicy
) -> tuple[dict[int, int], float, float]:
    """Pick the globally largest singular values across charge blocks.

    Values tied at the cutoff are kept lowest charge first, then by
    in-sector order, so the result is deterministic.  Returns kept counts
    per charge, the kept 2-norm, and the discarded 2-norm.
    """
    entries = []
    for q in sorted(values_by_q):
        for pos, v in enumerate(values_by_q[q]):
            entries.append((float(v), q, pos))
    entries.sort(key=lambda e: (-e[0], e[1], e[2]))

    floor = policy.singular_value_floor
    n_above = sum(1 for v, _, _ in entries if v >= floor and v > 0.0)
    n_keep = n_above if policy.chi_max is None else min(policy.chi_max, n_above)
    kept = entries[:n_keep]
    dropped = entries[n_keep:]

    kept_norm = float(np.sqrt(sum(v * v for v, _, _ in kept)))
    discarded_norm = float(np.sqrt(sum(v * v for v, _, _ in dropped)))
    if n_keep == 0 or kept_norm == 0.0:
        raise ZeroNormError("zero norm after truncation")

    keep_count: dict[int, int] = {}
    for _, q, pos in kept:
        # ties are kept in sector order, so kept positions always form a prefix
        keep_count[q] = max(keep_count.get(q, 0), pos + 1)
    return keep_count, kept_norm, discarded_norm


def _svd_dense(mat: np.ndarray):
    try:
        return np.linalg.svd(mat, full_matrices=False)
    except np.linalg.LinAlgError:
        # gesdd can fail to converge on rare inputs; gesvd is slower but robust
        from scipy.linalg import svd as scipy_svd

        return scipy_svd(mat, full_matrices=False, lapack_driver="gesvd")


def block_svd(
    t: SymmetricTensor,
    row_axes: tuple[int, ...],
    policy: TruncationPolicy,
    normalize: bool = True,
) -> SvdResult:
    """Truncated SVD of ``t`` matricized with ``row_axes`` as rows.

    Each charge block of the matricized tensor is decomposed independently
    (optionally in parallel, see the ``MPODYN_THREADS`` environment
    variable); the kept values are the globally largest
    ``min(chi_max, available)`` across all blocks.  Values tied at the
    cutoff are kept lowest charge first, then by in-sector order, which
    makes the truncation deterministic.
    """
    row_axes = tuple(row_axes)
    col_axes = tuple(i for i in range(t.ndim) if i not in row_axes)
    if not row_axes or not col_axes:
        raise ValueError("row/column grouping must be a bipartition of the legs")

    if not t.blocks or all(not np.any(blk) for blk in t.blocks.values()):
        raise ZeroNormError("zero norm")

    row_sign = [(-_sign(t.directions[a])) for a in row_axes]

    groups: dict[int, dict] = {}
    for key in sorted(t.blocks):
        if t.key_charge(key) != t.total_charge:
            raise ChargeMismatchError("charge mismatch")
        rk = tuple(key[a] for a in row_axes)
        ck = tuple(key[a] for a in col_axes)
        q = sum(s * t.indices[a].charges[p] for s, a, p in zip(row_sign, row_axes, rk))
        g = groups.setdefault(q, {"rows": {}, "cols": {}, "entries": []})
        if rk not in g["rows"]:
            g["rows"][rk] = int(np.prod([t.indices[a].dims[p] for a, p in zip(row_axes, rk)]))
        if ck not in g["cols"]:
            g["cols"][ck] = int(np.prod([t.indices[a].dims[p] for a, p in zip(col_axes, ck)]))
        g["entries"].append((rk, ck, key))

    def _decompose(q: int):
        g = groups[q]
        row_combos = sorted(g["rows"])
        col_combos = sorted(g["cols"])
        roff, acc = {}, 0
        for rk in row_combos:
            roff[rk] = acc
            acc += g["rows"][rk]
        nrows = acc
        coff, acc = {}, 0
        for ck in col_combos:
            coff[ck] = acc
            acc += g["cols"][ck]
        ncols = acc
        mat = np.zeros((nrows, ncols), dtype=np.complex128)
        for rk, ck, key in g["entries"]:
            blk = np.transpose(t.blocks[key], row_axes + col_axes)
            mat[
                roff[rk] : roff[rk] + g["rows"][rk],
                coff[ck] : coff[ck] + g["cols"][ck],
            ] = blk.reshape(g["rows"][rk], g["cols"][ck])
        u, s, vh = _svd_dense(mat)
        return q, (u, s, vh, roff, coff, row_combos, col_combos, g)

    qs = sorted(groups)
    nthreads = int(os.environ.get(THREADS_ENV, "1") or "1")
    if nthreads > 1 and len(qs) > 1:
        with ThreadPoolExecutor(max_workers=nthreads) as pool:
            decomposed = dict(pool.map(_decompose, qs))
    else:
        decomposed = dict(_decompose(q) for q in qs)

    keep_count, kept_norm, discarded_norm = global_truncation(
        {q: decomposed[q][1] for q in qs}, policy
    )

    kept_charges = sorted(keep_count)
    bond = ChargeIndex(tuple((q, keep_count[q]) for q in kept_charges))
    bond_pos = {q: i for i, q in enumerate(kept_charges)}

    scale = 1.0 / kept_norm if normalize else 1.0
    spec_sectors = []
    left_blocks: dict[tuple[int, ...], np.ndarray] = {}
    right_blocks: dict[tuple[int, ...], np.ndarray] = {}
    for q in kept_charges:
        u, s, vh, roff, coff, row_combos, col_combos, g = decomposed[q]
        k = keep_count[q]
        spec_sectors.append((q, s[:k] * scale))
        for rk in row_combos:
            part = u[roff[rk] : roff[rk] + g["rows"][rk], :k]
            if not np.any(part):
                continue
            dims = tuple(t.indices[a].dims[p] for a, p in zip(row_axes, rk))
            left_blocks[rk + (bond_pos[q],)] = part.reshape(dims + (k,))
        for ck in col_combos:
            part = vh[:k, coff[ck] : coff[ck] + g["cols"][ck]]
            if not np.any(part):
                continue
            dims = tuple(t.indices[a].dims[p] for a, p in zip(col_axes, ck))
            right_blocks[(bond_pos[q],) + ck] = part.reshape((k,) + dims)

    left = SymmetricTensor(
        tuple(t.indices[a] for a in row_axes) + (bond,),
        tuple(t.directions[a] for a in row_axes) + (OUT,),
        left_blocks,
        0,
    )
    right = SymmetricTensor(
        (bond,) + tuple(t.indices[a] for a in col_axes),
        (IN,) + tuple(t.directions[a] for a in col_axes),
        right_blocks,
        t.total_charge,
    )
    return SvdResult(left, Spectrum(tuple(spec_sectors)), right, discarded_norm, kept_norm)


def dense_axis_values(index: ChargeIndex, values: dict[int, np.ndarray]) -> np.ndarray:
    """Concatenate per-sector weight vectors in the leg's sector layout."""
    parts = []
    for q, dim in index.sectors:
        v = np.asarray(values[q], dtype=np.float64)
        if len(v) != dim:
            raise ChargeMismatchError("charge mismatch")
        parts.append(v)
    return np.concatenate(parts) if parts else np.array([])
