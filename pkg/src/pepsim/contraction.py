"""Contraction of 2D networks to a scalar.

A one-layer network is a grid (list of rows) of order-4 tensors with axes
``(up, left, down, right)``; boundary-facing legs have extent 1. A two-layer
network is a pair of PEPS grids (order-5 sites, physical axis first) read as
``<bra|ket>``.

Boundary MPS tensors carry their open (downward) legs first, then
``(left, right)``: ``(q, l, r)`` for one layer and ``(qb, qk, l, r)`` when the
bra and ket legs are kept apart. MPO tensors are ``(up, down, left, right)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import tensor as tc
from .decomposition import ImplicitOperator, RsvdConfig, TruncationPolicy, einsumsvd

FAMILIES = ("exact", "bmps", "ibmps", "two-layer-ibmps")
DEFAULT_BUDGET = 2 ** 27


class ResourceError(MemoryError):
    """A contraction would exceed its memory budget."""

    def __init__(self, message, required: int):
        super().__init__(message)
        self.required = required


class ContractFamilyError(ValueError):
    pass


@dataclass(frozen=True)
class ContractOption:
    family: str = "two-layer-ibmps"
    max_rank: int = 16
    cutoff: float = 1e-14
    rsvd: RsvdConfig = field(default_factory=RsvdConfig)
    canonicalize: bool = True
    budget: int = DEFAULT_BUDGET

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown contraction family {self.family!r}")
        if self.max_rank < 1:
            raise ValueError("max_rank must be >= 1")

    @property
    def policy(self) -> TruncationPolicy:
        return TruncationPolicy(self.max_rank, self.cutoff)

    @property
    def strategy(self) -> str:
        return "exact" if self.family == "bmps" else "implicit-rsvd"

    @property
    def seed(self) -> int:
        return self.rsvd.seed

    def with_seed(self, seed: int) -> "ContractOption":
        return replace(self, rsvd=replace(self.rsvd, seed=seed))


class Mps:
    def __init__(self, tensors):
        self.tensors = list(tensors)
        for a, b in zip(self.tensors, self.tensors[1:]):
            if a.shape[-1] != b.shape[-2]:
                raise tc.ShapeError(f"bond mismatch {a.shape} / {b.shape}")

    def __len__(self):
        return len(self.tensors)

    def __getitem__(self, i):
        return self.tensors[i]

    @property
    def bonds(self) -> list[int]:
        return [t.shape[-1] for t in self.tensors[:-1]]

    def to_dense(self) -> np.ndarray:
        """Open legs of all sites, in site order (small chains only)."""
        out = np.ones((1,), dtype=tc.DTYPE)
        for t in self.tensors:
            out = np.tensordot(out, t, axes=([-1], [-2]))
        return out.reshape(out.shape[:-1])


class Mpo:
    def __init__(self, tensors):
        self.tensors = list(tensors)
        for a, b in zip(self.tensors, self.tensors[1:]):
            if a.shape[3] != b.shape[2]:
                raise tc.ShapeError(f"bond mismatch {a.shape} / {b.shape}")

    def __len__(self):
        return len(self.tensors)

    def __getitem__(self, i):
        return self.tensors[i]


# ---------------------------------------------------------------------------
# grid helpers

def transpose_grid(grid):
    """Mirror a one-layer grid across its diagonal (rows become columns)."""
    nr, nc = len(grid), len(grid[0])
    return [[grid[i][j].transpose(1, 0, 3, 2) for i in range(nr)] for j in range(nc)]


def flip_grid(grid):
    """Turn a one-layer grid upside down (up and down legs swap)."""
    return [[t.transpose(2, 1, 0, 3) for t in row] for row in reversed(grid)]


def flip_sites(sites):
    """Upside-down view of a PEPS site grid."""
    return [[t.transpose(0, 3, 2, 1, 4) for t in row] for row in reversed(sites)]


def merge_layers(bra_sites, ket_sites):
    """Fuse ``conj(bra)`` and ``ket`` over physical legs into a one-layer grid."""
    out = []
    for brow, krow in zip(bra_sites, ket_sites):
        row = []
        for b, k in zip(brow, krow):
            t = tc.contract("sabcd,sefgh->aebfcgdh", b.conj(), k)
            s = t.shape
            row.append(t.reshape(s[0] * s[1], s[2] * s[3], s[4] * s[5], s[6] * s[7]))
        out.append(row)
    return out


def _check_grid(grid):
    if not grid or not grid[0]:
        raise tc.ShapeError("empty grid")
    nc = len(grid[0])
    for row in grid:
        if len(row) != nc:
            raise tc.ShapeError("ragged grid")
        for t in row:
            if t.ndim != 4:
                raise ContractFamilyError(
                    f"one-layer contraction needs order-4 sites, got order {t.ndim}; "
                    "project or pair physical indices first")


# ---------------------------------------------------------------------------
# exact

def exact_requirement(grid) -> int:
    """Largest boundary tensor held by :func:`contract_exact`."""
    nc = len(grid[0])
    downs = [1] * nc
    peak = 1
    for row in grid:
        h = 1
        for j, t in enumerate(row):
            h = t.shape[3]
            downs[j] = t.shape[2]
            peak = max(peak, h * math.prod(downs))
    return peak


def contract_exact(grid, budget: int = DEFAULT_BUDGET) -> complex:
    """Row-by-row contraction with no truncation.

    The boundary is one dense tensor over the downward legs of the rows
    absorbed so far; sites are folded in one at a time.
    """
    _check_grid(grid)
    need = exact_requirement(grid)
    if need > budget:
        raise ResourceError(f"exact contraction needs {need} elements (budget {budget})", need)
    nc = len(grid[0])
    boundary = np.ones((1,) * nc, dtype=tc.DTYPE)
    for row in grid:
        boundary = boundary[None]
        for j, t in enumerate(row):
            # boundary axes: (h, d_0 .. d_{nc-1}); absorb site j
            boundary = np.tensordot(boundary, t, axes=([0, j + 1], [1, 0]))
            boundary = np.moveaxis(boundary, [-2, -1], [j + 1, 0])
            tc._record("contract", 2 * boundary.size * t.shape[0] * t.shape[1], boundary.size)
        boundary = boundary.reshape(boundary.shape[1:])
    return complex(boundary.reshape(-1)[0]) if boundary.size == 1 else complex(boundary.sum())


# ---------------------------------------------------------------------------
# boundary MPS steps

def _absorb(option: ContractOption, row_index: int) -> str:
    if not option.canonicalize:
        return "both"
    return "right" if row_index % 2 == 0 else "left"


def _rsvd_for(option: ContractOption, path) -> RsvdConfig:
    return replace(option.rsvd, seed=tc.derive_seed(option.rsvd.seed, *path))


def _one_layer_row(mps: Mps, mpo: Mpo, option: ContractOption, absorb: str, path) -> Mps:
    n = len(mps)
    if len(mpo) != n:
        raise tc.ShapeError(f"MPS has {n} sites but MPO has {len(mpo)}")
    for i in range(n):
        if mps[i].shape[0] != mpo[i].shape[0]:
            raise tc.ShapeError(f"site {i}: MPS open leg {mps[i].shape[0]} vs MPO up leg {mpo[i].shape[0]}")
    s0, o0 = mps[0], mpo[0]
    v = tc.contract("pab,pwef->wbf", s0, o0)
    v = v.reshape(v.shape[0], 1, v.shape[1], v.shape[2])
    out = []
    for i in range(1, n):
        op = ImplicitOperator([v, mps[i], mpo[i]], ["xLbe", "pbc", "pwef"], "xL", "wcf")
        t1, t2 = einsumsvd(op, option.policy, option.strategy,
                           _rsvd_for(option, tuple(path) + (i,)), absorb_to=absorb)
        out.append(t1)
        v = t2.transpose(1, 0, 2, 3)
    out.append(v.reshape(v.shape[0], v.shape[1], 1))
    return Mps(out)


def _two_layer_row(mps: Mps, bra_row, ket_row, option: ContractOption, absorb: str, path) -> Mps:
    """Absorb one row of ``<bra|ket>`` without fusing bra and ket sites.

    ``bra_row`` must already be complex conjugated.
    """
    n = len(mps)
    v = tc.contract("uvac,sugwi,svhzj->wzcij", mps[0], bra_row[0], ket_row[0])
    v = v.reshape(v.shape[:2] + (1,) + v.shape[2:])
    out = []
    for i in range(1, n):
        op = ImplicitOperator([v, mps[i], bra_row[i], ket_row[i]],
                              ["xyLbgh", "uvbc", "sugwi", "svhzj"], "xyL", "wzcij")
        t1, t2 = einsumsvd(op, option.policy, option.strategy,
                           _rsvd_for(option, tuple(path) + (i,)), absorb_to=absorb)
        out.append(t1)
        v = t2.transpose(1, 2, 0, 3, 4, 5)
    out.append(v.reshape(v.shape[:3] + (1,)))
    return Mps(out)


def approx_apply_mpo(s: Mps, o: Mpo, option: ContractOption, absorb: str | None = None,
                     path=("mpo",)) -> Mps:
    """Zip an MPO into an MPS left to right, truncating every new bond to ``m``."""
    if option.family == "exact":
        option = replace(option, family="bmps", max_rank=2 ** 62)
    return _one_layer_row(s, o, option, absorb or ("right" if option.canonicalize else "both"), path)


def row_as_mps(row) -> Mps:
    return Mps([t.reshape(t.shape[1], t.shape[2], t.shape[3]).transpose(1, 0, 2) for t in row])


def row_as_mpo(row) -> Mpo:
    return Mpo([t.transpose(0, 2, 1, 3) for t in row])


def trivial_mps(ncol: int, legs: int = 1) -> Mps:
    return Mps([np.ones((1,) * (legs + 2), dtype=tc.DTYPE) for _ in range(ncol)])


def contract_chain(s: Mps) -> complex:
    """Close an MPS whose open legs all have extent 1."""
    vec = np.ones((1,), dtype=tc.DTYPE)
    for t in s.tensors:
        if math.prod(t.shape[:-2]) != 1:
            raise tc.ShapeError("chain still has open legs")
        m = t.reshape(t.shape[-2], t.shape[-1])
        tc._record("contract", 2 * m.size, m.shape[1])
        vec = vec @ m
    return complex(vec.sum())


def one_layer_boundaries(grid, option: ContractOption, tag: str = "top", upto: int | None = None):
    """Boundary MPS after absorbing rows ``0..k-1`` for ``k = 1..upto``.

    Entry ``k`` of the result is the boundary below row ``k-1``; entry 0 is
    the trivial boundary above the grid.
    """
    nr, nc = len(grid), len(grid[0])
    upto = nr if upto is None else upto
    out = [trivial_mps(nc)]
    for i in range(upto):
        mps = _one_layer_row(out[-1], row_as_mpo(grid[i]), option, _absorb(option, i), (tag, i))
        out.append(mps)
    return out


def two_layer_boundaries(bra_sites, ket_sites, option: ContractOption, tag: str = "top",
                         upto: int | None = None):
    nr, nc = len(ket_sites), len(ket_sites[0])
    upto = nr if upto is None else upto
    out = [trivial_mps(nc, legs=2)]
    for i in range(upto):
        bra_row = [t.conj() for t in bra_sites[i]]
        mps = _two_layer_row(out[-1], bra_row, ket_sites[i], option, _absorb(option, i), (tag, i))
        out.append(mps)
    return out


# ---------------------------------------------------------------------------
# one-layer drivers

def contract_bmps(grid, option: ContractOption) -> complex:
    """Boundary-MPS contraction: first row as MPS, later rows zipped in as MPOs."""
    _check_grid(grid)
    s = row_as_mps(grid[0])
    for i in range(1, len(grid)):
        s = _one_layer_row(s, row_as_mpo(grid[i]), option, _absorb(option, i), ("top", i))
    return contract_chain(s)


def contract_ibmps(grid, option: ContractOption) -> complex:
    return contract_bmps(grid, replace(option, family="ibmps"))


def contract_one_layer(grid, option: ContractOption) -> complex:
    if option.family == "exact":
        return contract_exact(grid, option.budget)
    if option.family == "bmps":
        return contract_bmps(grid, option)
    return contract_ibmps(grid, option)


def contract_two_layer(bra_sites, ket_sites, option: ContractOption) -> complex:
    """``<bra|ket>`` keeping the two layers apart until each einsumsvd."""
    if len(bra_sites) != len(ket_sites) or len(bra_sites[0]) != len(ket_sites[0]):
        raise tc.ShapeError("bra and ket grids differ")
    option = replace(option, family="two-layer-ibmps") if option.family == "exact" else option
    s = two_layer_boundaries(bra_sites, ket_sites, option)[-1]
    return contract_chain(s)


def inner(bra_sites, ket_sites, option: ContractOption) -> complex:
    """Dispatch ``<bra|ket>`` over the contraction families."""
    if len(bra_sites) != len(ket_sites) or len(bra_sites[0]) != len(ket_sites[0]):
        raise tc.ShapeError("bra and ket grids differ")
    if option.family == "two-layer-ibmps":
        return contract_two_layer(bra_sites, ket_sites, option)
    return contract_one_layer(merge_layers(bra_sites, ket_sites), option)


# ---------------------------------------------------------------------------
# bands

_LETTERS = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz"


def band_column(carry: np.ndarray, top_t: np.ndarray, column, bottom_t: np.ndarray) -> np.ndarray:
    """Absorb one column of a strip into the carry tensor.

    ``carry`` has one leg per horizontal line of the strip, ordered top
    boundary, row layers, bottom boundary. ``column`` holds, per row, either
    an order-4 site or a ``(bra_conj, ket)`` pair of order-5 sites.
    """
    two = isinstance(column[0], tuple)
    layers = 2 if two else 1
    width = 2 + layers * len(column)
    letters = iter(_LETTERS)
    left = [next(letters) for _ in range(width)]
    right = [next(letters) for _ in range(width)]
    ups = [next(letters) for _ in range(layers)]
    tensors = [top_t]
    labels = ["".join(ups) + left[0] + right[0]]
    slot = 1
    for site in column:
        downs = [next(letters) for _ in range(layers)]
        if two:
            s1 = next(letters)
            tensors += [site[0], site[1]]
            labels += [s1 + ups[0] + left[slot] + downs[0] + right[slot],
                       s1 + ups[1] + left[slot + 1] + downs[1] + right[slot + 1]]
        else:
            tensors.append(site)
            labels.append(ups[0] + left[slot] + downs[0] + right[slot])
        slot += layers
        ups = downs
    tensors.append(bottom_t)
    labels.append("".join(ups) + left[-1] + right[-1])
    cur, lab = carry, "".join(left)
    for t, tl in zip(tensors, labels):
        # absorb one tensor at a time; the fixed order keeps the carry small
        out = "".join(c for c in lab + tl if (lab + tl).count(c) == 1)
        cur, lab = tc.contract(f"{lab},{tl}->{out}", cur, t), out
    return np.einsum(f"{lab}->{''.join(right)}", cur)


def _band_columns(rows, c):
    if isinstance(rows[0], tuple):
        return [(r[0][c], r[1][c]) for r in rows]
    return [r[c] for r in rows]


def _band_width(rows) -> int:
    return 2 + (2 if isinstance(rows[0], tuple) else 1) * len(rows)


def _mirror(t: np.ndarray) -> np.ndarray:
    """Swap the left and right legs of a boundary or site tensor."""
    if t.ndim == 5:
        return t.transpose(0, 1, 4, 3, 2)
    axes = list(range(t.ndim))
    axes[-2], axes[-1] = axes[-1], axes[-2]
    return t.transpose(axes)


def contract_band(top: Mps, rows, bottom: Mps) -> complex:
    """Exact contraction of a strip: boundary, one or more rows, boundary.

    ``rows`` entries are either one-layer rows (order-4 sites) or
    ``(bra_row_conj, ket_row)`` pairs of PEPS rows. ``top`` open legs attach
    to the first row's up legs, ``bottom`` open legs to the last row's down
    legs. The strip is swept left to right carrying one tensor over the
    horizontal legs.
    """
    carry = np.ones((1,) * _band_width(rows), dtype=tc.DTYPE)
    for c in range(len(top)):
        carry = band_column(carry, top[c], _band_columns(rows, c), bottom[c])
    return complex(carry.reshape(-1)[0])


class BandEnvironment:
    """Left and right partial contractions of a strip, for local insertions.

    ``value(c0, columns)`` contracts the strip with columns ``c0, c0+1, ...``
    replaced by ``columns`` while every other column is taken from the
    stored environments.
    """

    def __init__(self, top: Mps, rows, bottom: Mps):
        self.top, self.rows, self.bottom = top, rows, bottom
        nc = len(top)
        ones = np.ones((1,) * _band_width(rows), dtype=tc.DTYPE)
        self.lefts = [ones]
        for c in range(nc - 1):
            self.lefts.append(band_column(self.lefts[-1], top[c], _band_columns(rows, c), bottom[c]))
        self.rights = [ones]
        for c in range(nc - 1, 0, -1):
            col = [tuple(_mirror(x) for x in s) if isinstance(s, tuple) else _mirror_site(s)
                   for s in _band_columns(rows, c)]
            self.rights.append(band_column(self.rights[-1], _mirror(top[c]), col, _mirror(bottom[c])))
        self.rights.reverse()  # rights[c]: columns c+1.. folded, facing column c

    def value(self, c0: int, columns) -> complex:
        carry = self.lefts[c0]
        for k, col in enumerate(columns):
            c = c0 + k
            carry = band_column(carry, self.top[c], col, self.bottom[c])
        right = self.rights[c0 + len(columns) - 1]
        tc._record("contract", 2 * carry.size, 1)
        return complex(np.sum(carry * right))

    def column(self, c: int):
        return _band_columns(self.rows, c)


def _mirror_site(t: np.ndarray) -> np.ndarray:
    # one-layer site (up, left, down, right)
    return t.transpose(0, 3, 2, 1)


def report(family: str, m: int, counter: tc.Counter, seed: int, value: complex) -> dict:
    """Instrumentation record for one contraction."""
    return {
        "family": family,
        "m": int(m),
        "flops": int(counter.flops),
        "peak_intermediate_elements": int(counter.peak_elements),
        "seed": int(seed),
        "value_re": float(np.real(value)),
        "value_im": float(np.imag(value)),
    }
