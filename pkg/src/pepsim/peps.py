"""PEPS quantum states on a rectangular lattice.

Every site is an order-5 tensor with axes ``(physical, up, left, down,
right)``; legs on the lattice boundary have extent 1. States are treated as
immutable: gate applications return a new :class:`PepsState` that shares the
untouched site tensors with the old one.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import gates as G
from . import tensor as tc
from .contraction import ContractOption, contract_one_layer, inner
from .decomposition import (ImplicitOperator, TruncationPolicy, einsumsvd,
                            gram_orthogonalize)

AXES = "physical,up,left,down,right"
UP, LEFT, DOWN, RIGHT = 1, 2, 3, 4
STRATEGIES = ("direct-einsumsvd", "qr-svd", "qr-svd-gram")
FORMAT_VERSION = 1


class RoutingError(ValueError):
    pass


@dataclass(frozen=True)
class UpdateOption:
    """How two-site gates are applied.

    ``policy=None`` keeps every non-negligible singular value, which can
    grow the shared bond up to ``d**2`` times its old extent.
    """

    policy: TruncationPolicy | None = None
    strategy: str = "qr-svd-gram"

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown update strategy {self.strategy!r}")

    @classmethod
    def rank(cls, max_rank: int, strategy: str = "qr-svd-gram") -> "UpdateOption":
        return cls(TruncationPolicy(max_rank), strategy)


@dataclass(frozen=True)
class Gate:
    matrix: np.ndarray
    sites: tuple

    def __post_init__(self):
        sites = tuple(tuple(int(x) for x in s) for s in self.sites)
        object.__setattr__(self, "sites", sites)
        m = np.asarray(self.matrix, dtype=complex)
        if m.ndim == 2 and len(sites) == 2:
            d = math.isqrt(m.shape[0])
            m = m.reshape(d, d, d, d)
        object.__setattr__(self, "matrix", m)
        if len(sites) not in (1, 2):
            raise ValueError("gates act on one or two sites")
        if m.ndim != 2 * len(sites) or len(set(m.shape)) != 1:
            raise tc.ShapeError(f"gate tensor of shape {m.shape} does not fit {len(sites)} sites")

    @property
    def arity(self) -> int:
        return len(self.sites)


@dataclass(frozen=True)
class PepsState:
    sites: tuple = field(repr=False)

    def __post_init__(self):
        grid = tuple(tuple(tc.as_tensor(t) for t in row) for row in self.sites)
        object.__setattr__(self, "sites", grid)
        nr, nc = len(grid), len(grid[0]) if grid else 0
        if nr == 0 or nc == 0 or any(len(row) != nc for row in grid):
            raise tc.ShapeError("sites must form a non-empty rectangular grid")
        d = grid[0][0].shape[0]
        for i, row in enumerate(grid):
            for j, t in enumerate(row):
                if t.ndim != 5:
                    raise tc.ShapeError(f"site {(i, j)} has order {t.ndim}, expected 5")
                if t.shape[0] != d:
                    raise tc.ShapeError("physical dimension differs between sites")
                if (i == 0 and t.shape[UP] != 1) or (i == nr - 1 and t.shape[DOWN] != 1) \
                        or (j == 0 and t.shape[LEFT] != 1) or (j == nc - 1 and t.shape[RIGHT] != 1):
                    raise tc.ShapeError(f"boundary leg of site {(i, j)} is not extent 1")
                if j + 1 < nc and t.shape[RIGHT] != row[j + 1].shape[LEFT]:
                    raise tc.ShapeError(f"horizontal bond mismatch at {(i, j)}")
                if i + 1 < nr and t.shape[DOWN] != grid[i + 1][j].shape[UP]:
                    raise tc.ShapeError(f"vertical bond mismatch at {(i, j)}")

    @property
    def nrow(self) -> int:
        return len(self.sites)

    @property
    def ncol(self) -> int:
        return len(self.sites[0])

    @property
    def phys_dim(self) -> int:
        return self.sites[0][0].shape[0]

    @property
    def nsites(self) -> int:
        return self.nrow * self.ncol

    def __getitem__(self, site) -> np.ndarray:
        i, j = site
        return self.sites[i][j]

    def replace_sites(self, updates: dict) -> "PepsState":
        grid = [list(row) for row in self.sites]
        for (i, j), t in updates.items():
            grid[i][j] = t
        return PepsState(grid)

    def bond(self, a, b) -> int:
        (i1, j1), (i2, j2) = sorted([tuple(a), tuple(b)])
        if i1 == i2 and j2 == j1 + 1:
            return self.sites[i1][j1].shape[RIGHT]
        if j1 == j2 and i2 == i1 + 1:
            return self.sites[i1][j1].shape[DOWN]
        raise RoutingError(f"{a} and {b} are not neighbours")

    def max_bond(self) -> int:
        return max(max(t.shape[1:]) for row in self.sites for t in row)

    def scaled(self, factor: complex) -> "PepsState":
        """Multiply the whole state by ``factor`` (spread evenly over sites)."""
        per = complex(factor) ** (1.0 / self.nsites)
        return PepsState([[t * per for t in row] for row in self.sites])


# ---------------------------------------------------------------------------
# construction

def computational_basis_state(nrow: int, ncol: int, bits, d: int = 2) -> PepsState:
    bits = list(bits)
    if len(bits) != nrow * ncol:
        raise ValueError(f"expected {nrow * ncol} bits, got {len(bits)}")
    grid = []
    for i in range(nrow):
        row = []
        for j in range(ncol):
            b = int(bits[i * ncol + j])
            if not 0 <= b < d:
                raise ValueError(f"bit {b} out of range for physical dimension {d}")
            t = np.zeros((d, 1, 1, 1, 1), dtype=tc.DTYPE)
            t[b] = 1.0
            row.append(t)
        grid.append(row)
    return PepsState(grid)


def computational_zeros(nrow: int, ncol: int, d: int = 2) -> PepsState:
    return computational_basis_state(nrow, ncol, [0] * (nrow * ncol), d)


def product_state(vectors, nrow: int, ncol: int) -> PepsState:
    """Product state from one local vector per site (row-major)."""
    grid = [[tc.as_tensor(vectors[i * ncol + j]).reshape(-1, 1, 1, 1, 1) for j in range(ncol)]
            for i in range(nrow)]
    return PepsState(grid)


def random_product_state(nrow: int, ncol: int, seed: int, d: int = 2) -> PepsState:
    vecs = []
    for k in range(nrow * ncol):
        v = tc.random_tensor((d,), tc.derive_seed(seed, "product", k))
        vecs.append(v / np.linalg.norm(v))
    return product_state(vecs, nrow, ncol)


def random_peps(nrow: int, ncol: int, bond: int, seed: int, d: int = 2) -> PepsState:
    """Random entries in [-1,1]+i[-1,1], every interior bond of extent ``bond``."""
    grid = []
    for i in range(nrow):
        row = []
        for j in range(ncol):
            shape = (d, 1 if i == 0 else bond, 1 if j == 0 else bond,
                     1 if i == nrow - 1 else bond, 1 if j == ncol - 1 else bond)
            row.append(tc.random_tensor(shape, tc.derive_seed(seed, "site", i, j)))
        grid.append(row)
    return PepsState(grid)


# ---------------------------------------------------------------------------
# gates

def _check_site(state: PepsState, site):
    i, j = site
    if not (0 <= i < state.nrow and 0 <= j < state.ncol):
        raise IndexError(f"site {site} outside {state.nrow}x{state.ncol} grid")


def apply_one_site(state: PepsState, gate: Gate) -> PepsState:
    if gate.arity != 1:
        raise ValueError("apply_one_site needs a one-site gate")
    site = gate.sites[0]
    _check_site(state, site)
    t = tc.contract("ij,jabcd->iabcd", gate.matrix, state[site])
    return state.replace_sites({site: t})


def _split_site(t: np.ndarray, bond_axis: int, strategy: str):
    """Factor a site into Q over its three spectator legs and R over (phys, bond).

    Returns ``q`` with axes ``(spectators..., k)`` and ``r`` with axes
    ``(k, phys, bond)``. When the spectator legs are too small for a thin
    QR the site is kept whole (``q`` is the identity).
    """
    spectators = [a for a in (UP, LEFT, DOWN, RIGHT) if a != bond_axis]
    m = t.transpose(spectators + [0, bond_axis])
    rows = math.prod(m.shape[:3])
    cols = m.shape[3] * m.shape[4]
    if rows <= cols:
        q = np.eye(rows, dtype=tc.DTYPE).reshape(m.shape[:3] + (rows,))
        return q, m.reshape((rows,) + m.shape[3:])
    if strategy == "qr-svd-gram":
        return gram_orthogonalize(m, 3)
    return tc.qr(m, 3)


def _restore(q_or_t: np.ndarray, bond_axis: int) -> np.ndarray:
    """Inverse of the spectator-first layout: ``(spec..., phys, bond)`` to site order."""
    spectators = [a for a in (UP, LEFT, DOWN, RIGHT) if a != bond_axis]
    order = spectators + [0, bond_axis]
    return q_or_t.transpose(np.argsort(order))


def _orient(state: PepsState, gate: Gate):
    a, b = gate.sites
    (i1, j1), (i2, j2) = a, b
    g = gate.matrix
    if (i1, j1) == (i2, j2):
        raise RoutingError("a two-site gate needs two distinct sites")
    if abs(i1 - i2) + abs(j1 - j2) != 1:
        raise RoutingError(f"sites {a} and {b} are not lattice neighbours; use apply_distant")
    if (i2, j2) < (i1, j1):
        a, b = b, a
        g = g.transpose(1, 0, 3, 2)
    axis_a, axis_b = (RIGHT, LEFT) if a[0] == b[0] else (DOWN, UP)
    return a, b, g, axis_a, axis_b


def _update_pair(ta, tb, g, axis_a, axis_b, policy, strategy, absorb_to="both"):
    """Gate two oriented sites and re-split; returns the new sites and bond weights."""
    if strategy == "direct-einsumsvd":
        ma = ta.transpose([x for x in (UP, LEFT, DOWN, RIGHT) if x != axis_a] + [0, axis_a])
        mb = tb.transpose([x for x in (UP, LEFT, DOWN, RIGHT) if x != axis_b] + [0, axis_b])
        op = ImplicitOperator([g, ma, mb], ["ijkl", "abcks", "defls"], "abci", "defj")
        ua, vb, triple = einsumsvd(op, policy, "exact", absorb_to=absorb_to, return_triple=True)
        return _restore(ua, axis_a), _restore(np.moveaxis(vb, 0, -1), axis_b), triple.S

    qa, ra = _split_site(ta, axis_a, strategy)
    qb, rb = _split_site(tb, axis_b, strategy)
    op = ImplicitOperator([g, ra, rb], ["ijkl", "pks", "qls"], "pi", "qj")
    u, v, triple = einsumsvd(op, policy, "exact", absorb_to=absorb_to, return_triple=True)
    new_a = tc.contract("abcp,pin->abcin", qa, u)
    new_b = tc.contract("abcq,nqj->abcjn", qb, v)
    return _restore(new_a, axis_a), _restore(new_b, axis_b), triple.S


def apply_two_site(state: PepsState, gate: Gate, option: UpdateOption | None = None) -> PepsState:
    """Apply a gate on neighbouring sites and re-split the shared bond.

    The ``qr-svd`` strategies first peel the spectator legs off both sites,
    refactor only the small ``R`` factors with the gate, then reattach.
    """
    option = option or UpdateOption()
    if gate.arity != 2:
        raise ValueError("apply_two_site needs a two-site gate")
    for s in gate.sites:
        _check_site(state, s)
    a, b, g, axis_a, axis_b = _orient(state, gate)
    ta, tb = state[a], state[b]
    policy = option.policy or TruncationPolicy(state.phys_dim ** 2 * ta.shape[axis_a])
    new_a, new_b, _ = _update_pair(ta, tb, g, axis_a, axis_b, policy, option.strategy)
    return state.replace_sites({a: new_a, b: new_b})


def _swap_path(a, b):
    """Lattice path moving ``a`` next to ``b``: along the row first, then the column."""
    (i, j), (ti, tj) = a, b
    path = [(i, j)]
    while j != tj and not (i == ti and abs(j - tj) == 1):
        j += 1 if tj > j else -1
        path.append((i, j))
    while abs(i - ti) + abs(j - tj) > 1:
        i += 1 if ti > i else -1
        path.append((i, j))
    return path


def apply_distant(state: PepsState, gate: Gate, option: UpdateOption | None = None) -> PepsState:
    """Apply a two-site gate on arbitrary sites by routing with SWAP gates."""
    if gate.arity != 2:
        raise ValueError("apply_distant needs a two-site gate")
    a, b = gate.sites
    if a == b:
        raise RoutingError("a two-site gate needs two distinct sites")
    for s in gate.sites:
        _check_site(state, s)
    path = _swap_path(a, b)
    for p, q in zip(path, path[1:]):
        state = apply_two_site(state, Gate(G.SWAP, (p, q)), option)
    state = apply_two_site(state, Gate(gate.matrix, (path[-1], b)), option)
    for p, q in reversed(list(zip(path, path[1:]))):
        state = apply_two_site(state, Gate(G.SWAP, (p, q)), option)
    return state


def apply_gate(state: PepsState, gate: Gate, option: UpdateOption | None = None) -> PepsState:
    if gate.arity == 1:
        return apply_one_site(state, gate)
    (i1, j1), (i2, j2) = gate.sites
    if abs(i1 - i2) + abs(j1 - j2) == 1:
        return apply_two_site(state, gate, option)
    return apply_distant(state, gate, option)


def apply_batch(state: PepsState, gates, option: UpdateOption | None = None) -> PepsState:
    """Apply gates with pairwise disjoint supports (any order gives the same state)."""
    seen: set = set()
    for g in gates:
        if seen & set(g.sites):
            raise ValueError("gates in a batch must act on disjoint sites")
        seen |= set(g.sites)
    for g in gates:
        state = apply_gate(state, g, option)
    return state


# ---------------------------------------------------------------------------
# bond-weighted (simple update) evolution

WEIGHT_FLOOR = 1e-12
_LEG = {(0, 1): RIGHT, (0, -1): LEFT, (1, 0): DOWN, (-1, 0): UP}


def _edge(a, b):
    return (tuple(a), tuple(b)) if tuple(a) < tuple(b) else (tuple(b), tuple(a))


def unit_weights(state: PepsState) -> dict:
    """All-ones weights on every interior bond, keyed by the sorted site pair."""
    w = {}
    for i in range(state.nrow):
        for j in range(state.ncol):
            if j + 1 < state.ncol:
                w[(i, j), (i, j + 1)] = np.ones(state[i, j].shape[RIGHT])
            if i + 1 < state.nrow:
                w[(i, j), (i + 1, j)] = np.ones(state[i, j].shape[DOWN])
    return w


def _scale_legs(t: np.ndarray, site, weights: dict, skip, power: float) -> np.ndarray:
    i, j = site
    for (di, dj), axis in _LEG.items():
        other = (i + di, j + dj)
        if other == skip:
            continue
        lam = weights.get(_edge(site, other))
        if lam is None:
            continue
        lam = np.maximum(lam, WEIGHT_FLOOR) ** power
        shape = [1] * 5
        shape[axis] = lam.size
        t = t * lam.reshape(shape)
    return t


def absorb_weights(state: PepsState, weights: dict) -> PepsState:
    """Ordinary PEPS from weighted form: ``sqrt(weight)`` goes to each end of a bond."""
    return PepsState([[_scale_legs(state[i, j], (i, j), weights, None, 0.5)
                       for j in range(state.ncol)] for i in range(state.nrow)])


def apply_two_site_weighted(state: PepsState, weights: dict, gate: Gate,
                            option: UpdateOption | None = None):
    """Neighbour gate in weighted form; returns ``(state, weights)``.

    The weights around both sites stand in for their environment while the
    shared bond is truncated; the kept singular values (unit max) become the
    new weight of that bond.
    """
    option = option or UpdateOption()
    if gate.arity != 2:
        raise ValueError("apply_two_site_weighted needs a two-site gate")
    for s in gate.sites:
        _check_site(state, s)
    a, b, g, axis_a, axis_b = _orient(state, gate)
    e = _edge(a, b)
    ta = _scale_legs(state[a], a, weights, b, 1.0)
    tb = _scale_legs(state[b], b, weights, a, 1.0)
    lam = np.maximum(weights[e], WEIGHT_FLOOR)
    shape = [1] * 5
    shape[axis_a] = lam.size
    ta = ta * lam.reshape(shape)
    policy = option.policy or TruncationPolicy(state.phys_dim ** 2 * ta.shape[axis_a])
    new_a, new_b, s = _update_pair(ta, tb, g, axis_a, axis_b, policy, option.strategy, absorb_to="none")
    new_a = _scale_legs(new_a, a, weights, b, -1.0)
    new_b = _scale_legs(new_b, b, weights, a, -1.0)
    weights = dict(weights)
    weights[e] = s / s[0]
    return state.replace_sites({a: new_a, b: new_b}), weights


def apply_gate_weighted(state: PepsState, weights: dict, gate: Gate,
                        option: UpdateOption | None = None):
    """Any one- or two-site gate in weighted form (distant pairs routed by SWAPs)."""
    if gate.arity == 1:
        return apply_one_site(state, gate), weights
    a, b = gate.sites
    if a == b:
        raise RoutingError("a two-site gate needs two distinct sites")
    if abs(a[0] - b[0]) + abs(a[1] - b[1]) == 1:
        return apply_two_site_weighted(state, weights, gate, option)
    for s in gate.sites:
        _check_site(state, s)
    path = _swap_path(a, b)
    steps = list(zip(path, path[1:]))
    for p, q in steps:
        state, weights = apply_two_site_weighted(state, weights, Gate(G.SWAP, (p, q)), option)
    state, weights = apply_two_site_weighted(state, weights, Gate(gate.matrix, (path[-1], b)), option)
    for p, q in reversed(steps):
        state, weights = apply_two_site_weighted(state, weights, Gate(G.SWAP, (p, q)), option)
    return state, weights


# ---------------------------------------------------------------------------
# contraction entry points

def project(state: PepsState, bits):
    """One-layer grid ``<bits|`` applied site by site."""
    bits = list(bits)
    if len(bits) != state.nsites:
        raise ValueError(f"expected {state.nsites} bits")
    return [[state.sites[i][j][int(bits[i * state.ncol + j])] for j in range(state.ncol)]
            for i in range(state.nrow)]


def amplitude(state: PepsState, bits, option: ContractOption | None = None) -> complex:
    option = option or ContractOption(family="exact")
    return contract_one_layer(project(state, bits), option)


def inner_product(bra: PepsState, ket: PepsState, option: ContractOption | None = None) -> complex:
    if (bra.nrow, bra.ncol, bra.phys_dim) != (ket.nrow, ket.ncol, ket.phys_dim):
        raise tc.ShapeError("bra and ket live on different grids")
    option = option or ContractOption(family="exact")
    return inner(bra.sites, ket.sites, option)


def norm(state: PepsState, option: ContractOption | None = None) -> float:
    return float(np.sqrt(max(inner_product(state, state, option).real, 0.0)))


# ---------------------------------------------------------------------------
# persistence

def save(state: PepsState, path) -> None:
    """Write a state to an ``.npz`` container.

    The archive holds a ``header`` JSON document (format version, grid shape,
    physical dimension, axis convention) and one complex128 array per site
    named ``site_<row>_<col>``.
    """
    header = {"format": "pepsim-peps", "version": FORMAT_VERSION, "nrow": state.nrow,
              "ncol": state.ncol, "phys_dim": state.phys_dim, "axes": AXES}
    arrays = {f"site_{i}_{j}": state.sites[i][j] for i in range(state.nrow) for j in range(state.ncol)}
    with open(path, "wb") as fh:
        np.savez(fh, header=np.frombuffer(json.dumps(header).encode(), dtype=np.uint8), **arrays)


def load(path) -> PepsState:
    with np.load(path, allow_pickle=False) as data:
        header = json.loads(bytes(data["header"]).decode())
        if header.get("format") != "pepsim-peps" or header.get("axes") != AXES:
            raise ValueError(f"{path} is not a pepsim state file")
        grid = [[data[f"site_{i}_{j}"] for j in range(header["ncol"])] for i in range(header["nrow"])]
    return PepsState(grid)
