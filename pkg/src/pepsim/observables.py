"""Local-term observables and their expectation values on PEPS states.

An :class:`Observable` is a sum of terms, each a coefficient times an
operator on one or two lattice sites. Expectation values are summed term by
term; with the row cache the top and bottom boundary MPS of the sandwich
``<psi|psi>`` are computed once and every term then costs one exact
contraction of a narrow band of rows.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, replace

import numpy as np

from . import contraction as ct
from . import gates as G
from . import tensor as tc
from .peps import Gate, PepsState, UpdateOption, apply_gate

HERMITIAN_TOL = 1e-12
IMAG_TOL = 1e-8


class NonHermitianError(ValueError):
    pass


@dataclass(frozen=True)
class LocalTerm:
    coefficient: complex
    sites: tuple
    operator: np.ndarray
    label: str | None = None

    def __post_init__(self):
        sites = tuple(tuple(int(x) for x in s) for s in self.sites)
        if len(sites) not in (1, 2):
            raise ValueError("terms act on one or two sites")
        if len(sites) == 2 and sites[0] == sites[1]:
            raise ValueError("two-site term on a single site")
        op = np.asarray(self.operator, dtype=complex)
        if op.ndim == 2 and len(sites) == 2:
            d = math.isqrt(op.shape[0])
            op = op.reshape(d, d, d, d)
        if op.ndim != 2 * len(sites) or len(set(op.shape)) != 1:
            raise tc.ShapeError(f"operator of shape {op.shape} does not fit {len(sites)} sites")
        object.__setattr__(self, "sites", sites)
        object.__setattr__(self, "operator", op)
        object.__setattr__(self, "coefficient", complex(self.coefficient))

    @property
    def dim(self) -> int:
        return self.operator.shape[0]

    def matrix(self) -> np.ndarray:
        """``coefficient * operator`` as a ``d**k x d**k`` matrix."""
        n = self.dim ** len(self.sites)
        return self.coefficient * self.operator.reshape(n, n)

    def is_hermitian(self, tol: float = HERMITIAN_TOL) -> bool:
        m = self.matrix()
        return bool(np.linalg.norm(m - m.conj().T) < tol)

    def products(self):
        """Split into ``[(A1, B1), ...]`` with the term equal to ``sum_k A_k (x) B_k``.

        One-site terms give ``[(A,)]``. The coefficient is folded into the
        first factor.
        """
        if len(self.sites) == 1:
            return [(self.coefficient * self.operator,)]
        d = self.dim
        m = self.operator.transpose(0, 2, 1, 3).reshape(d * d, d * d)
        u, s, vh = np.linalg.svd(m)
        keep = s > 1e-14 * max(s[0], 1e-300)
        out = []
        for k in np.flatnonzero(keep):
            a = (self.coefficient * s[k] * u[:, k]).reshape(d, d)
            b = vh[k].reshape(d, d)
            out.append((a, b))
        return out


@dataclass(frozen=True)
class Observable:
    terms: tuple = ()
    hermitian: bool = True

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        if self.hermitian:
            for t in self.terms:
                if not t.is_hermitian():
                    raise NonHermitianError(f"term on {t.sites} is not Hermitian")

    def __len__(self):
        return len(self.terms)

    def __add__(self, other: "Observable") -> "Observable":
        return Observable(self.terms + other.terms, self.hermitian and other.hermitian)

    def scaled(self, alpha: complex) -> "Observable":
        herm = self.hermitian and complex(alpha).imag == 0
        return Observable(tuple(replace(t, coefficient=alpha * t.coefficient) for t in self.terms), herm)

    def check_grid(self, nrow: int, ncol: int):
        for t in self.terms:
            for (i, j) in t.sites:
                if not (0 <= i < nrow and 0 <= j < ncol):
                    raise IndexError(f"term site {(i, j)} outside {nrow}x{ncol} grid")


def pauli_term(coefficient, *factors) -> LocalTerm:
    """``pauli_term(0.5, ("X", (0, 0)), ("X", (0, 1)))``."""
    names = [f[0] for f in factors]
    sites = [f[1] for f in factors]
    ops = [G.PAULI[n] for n in names]
    op = ops[0] if len(ops) == 1 else G.kron2(ops[0], ops[1])
    return LocalTerm(coefficient, sites, op, label="".join(names))


def neighbour_pairs(nrow: int, ncol: int):
    """Horizontal pairs row-major, then vertical pairs row-major."""
    h = [((i, j), (i, j + 1)) for i in range(nrow) for j in range(ncol - 1)]
    v = [((i, j), (i + 1, j)) for i in range(nrow - 1) for j in range(ncol)]
    return h + v


def diagonal_pairs(nrow: int, ncol: int):
    out = []
    for i in range(nrow - 1):
        for j in range(ncol - 1):
            out.append(((i, j), (i + 1, j + 1)))
            out.append(((i, j + 1), (i + 1, j)))
    return out


def build_j1j2(nrow: int, ncol: int, j1=(1.0, 1.0, 1.0), j2=(0.0, 0.0, 0.0),
               h=(0.0, 0.0, 0.0), keep_zero: bool = True) -> Observable:
    """Heisenberg model with nearest (``j1``) and diagonal (``j2``) couplings and a field ``h``.

    Each triple gives the ``(x, y, z)`` components; Pauli matrices are used
    without a factor 1/2. With ``keep_zero`` every term is listed even when
    its coefficient vanishes.
    """
    if nrow < 1 or ncol < 1:
        raise ValueError("grid must be positive")
    terms = []
    for pairs, coup in ((neighbour_pairs(nrow, ncol), j1), (diagonal_pairs(nrow, ncol), j2)):
        for a, b in pairs:
            for p, c in zip("XYZ", coup):
                if keep_zero or c != 0:
                    terms.append(pauli_term(c, (p, a), (p, b)))
    for i in range(nrow):
        for j in range(ncol):
            for p, c in zip("XYZ", h):
                if keep_zero or c != 0:
                    terms.append(pauli_term(c, (p, (i, j))))
    return Observable(terms)


# ---------------------------------------------------------------------------
# text format

_FACTOR = re.compile(r"^([IXYZ])@\((\d+),(\d+)\)$")
_RAW = re.compile(r"^RAW@\((\d+),(\d+)\)(?:;\((\d+),(\d+)\))?$")


def _fmt_complex(z: complex) -> str:
    z = complex(z)
    return repr(z.real) if z.imag == 0 else repr(z)


def format_observable(obs: Observable) -> str:
    """One term per line: ``coeff  P@(r,c) [P@(r,c)]``.

    Terms whose operator is not a Pauli product are written as
    ``coeff  RAW@(r,c)[;(r,c)]  v0 v1 ...`` with the operator entries in C
    order, each a Python complex literal.
    """
    lines = []
    for t in obs.terms:
        coeff = _fmt_complex(t.coefficient)
        paulis = _as_paulis(t)
        if paulis is not None:
            body = " ".join(f"{p}@({i},{j})" for p, (i, j) in zip(paulis, t.sites))
        else:
            where = ";".join(f"({i},{j})" for i, j in t.sites)
            vals = " ".join(repr(complex(v)) for v in t.operator.reshape(-1))
            body = f"RAW@{where} {vals}"
        lines.append(f"{coeff}  {body}")
    return "\n".join(lines) + ("\n" if lines else "")


def _as_paulis(t: LocalTerm):
    if t.dim != 2:
        return None
    if t.label and len(t.label) == len(t.sites) and all(c in G.PAULI for c in t.label):
        ops = [G.PAULI[c] for c in t.label]
        ref = ops[0] if len(ops) == 1 else G.kron2(*ops)
        if np.array_equal(ref, t.operator):
            return t.label
    return None


def parse_observable(text: str, hermitian: bool = True) -> Observable:
    terms = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        try:
            coeff = complex(parts[0])
        except ValueError:
            raise ValueError(f"line {lineno}: bad coefficient {parts[0]!r}") from None
        if coeff.imag == 0:
            coeff = float(coeff.real)
        raw = _RAW.match(parts[1]) if len(parts) > 1 else None
        if raw:
            g = raw.groups()
            sites = [(int(g[0]), int(g[1]))] + ([(int(g[2]), int(g[3]))] if g[2] is not None else [])
            vals = np.array([complex(v) for v in parts[2:]])
            n = round(len(vals) ** (1 / (2 * len(sites))))
            if n ** (2 * len(sites)) != len(vals):
                raise ValueError(f"line {lineno}: {len(vals)} operator entries do not form a square operator")
            terms.append(LocalTerm(coeff, sites, vals.reshape((n,) * (2 * len(sites)))))
            continue
        factors = []
        for tok in parts[1:]:
            m = _FACTOR.match(tok)
            if not m:
                raise ValueError(f"line {lineno}: cannot parse factor {tok!r}")
            factors.append((m.group(1), (int(m.group(2)), int(m.group(3)))))
        if not 1 <= len(factors) <= 2:
            raise ValueError(f"line {lineno}: terms need one or two factors")
        terms.append(pauli_term(coeff, *factors))
    return Observable(terms, hermitian)


# ---------------------------------------------------------------------------
# Trotter grouping

def _support_kind(sites):
    if len(sites) == 1:
        return 0
    (i1, j1), (i2, j2) = sites
    if i1 == i2 and abs(j1 - j2) == 1:
        return 1
    if j1 == j2 and abs(i1 - i2) == 1:
        return 2
    if abs(i1 - i2) == 1 and abs(j1 - j2) == 1:
        return 3
    return 4


def trotter_groups(obs: Observable):
    """Local Hamiltonians ``H_j`` as ``(sites, matrix)``, one per distinct support.

    Terms sharing a support are summed. Order: one-site terms, horizontal
    pairs, vertical pairs, diagonal pairs, other pairs; row-major within
    each class. Two-site matrices are on ``(sites[0], sites[1])``.
    """
    groups: dict = {}
    for t in obs.terms:
        sites = t.sites
        m = t.matrix()
        if len(sites) == 2 and sites[1] < sites[0]:
            d = t.dim
            m = m.reshape(d, d, d, d).transpose(1, 0, 3, 2).reshape(d * d, d * d)
            sites = (sites[1], sites[0])
        if sites in groups:
            groups[sites] = groups[sites] + m
        else:
            groups[sites] = m
    return sorted(groups.items(), key=lambda kv: (_support_kind(kv[0]), kv[0]))


def exp_hermitian(m: np.ndarray, scale: float) -> np.ndarray:
    """``exp(scale * m)`` for a Hermitian matrix by eigendecomposition."""
    lam, v = tc.eigh(m, tol=1e-8)
    return (v * np.exp(scale * lam)) @ v.conj().T


# ---------------------------------------------------------------------------
# expectation values

def _ket_with(ket_sites, factors, sites):
    rows = [list(r) for r in ket_sites]
    for op, (i, j) in zip(factors, sites):
        rows[i][j] = tc.contract("st,tabcd->sabcd", op, rows[i][j])
    return rows


class RowCache:
    """Top and bottom boundary MPS of ``<psi|psi>`` for every row cut.

    ``tops[k]`` holds rows ``0..k-1``; ``bottoms[k]`` holds the last ``k``
    rows (built on the upside-down grid, so its open legs face up into the
    state). Entries are identical to what an uncached contraction computes
    at the same cut, because seeds depend only on the structural position.
    """

    def __init__(self, state: PepsState, option: ct.ContractOption, build: bool = True):
        self.state = state
        self.option = option
        self.two_layer = option.family == "two-layer-ibmps"
        self.tops = None
        self.bottoms = None
        self.sweeps = 0
        self.bands = 0
        self._envs: dict = {}
        if build:
            self.tops = self.top(state.nrow)
            self.bottoms = self.bottom(state.nrow - 1)

    def _merged(self):
        return ct.merge_layers(self.state.sites, self.state.sites)

    def top(self, upto: int):
        if self.tops is not None and upto < len(self.tops):
            return self.tops[: upto + 1]
        self.sweeps += 1
        if self.two_layer:
            return ct.two_layer_boundaries(self.state.sites, self.state.sites, self.option, "top", upto)
        return ct.one_layer_boundaries(self._merged(), self.option, "top", upto)

    def bottom(self, upto: int):
        if self.bottoms is not None and upto < len(self.bottoms):
            return self.bottoms[: upto + 1]
        self.sweeps += 1
        flipped = ct.flip_sites(self.state.sites)
        if self.two_layer:
            return ct.two_layer_boundaries(flipped, flipped, self.option, "bottom", upto)
        return ct.one_layer_boundaries(ct.merge_layers(flipped, flipped), self.option, "bottom", upto)

    def norm_sq(self) -> complex:
        return ct.contract_chain(self.top(self.state.nrow)[-1])

    def _rows(self, lo: int, hi: int, ket_sites):
        bra = self.state.sites
        if self.two_layer:
            return [([t.conj() for t in bra[i]], ket_sites[i]) for i in range(lo, hi + 1)]
        return ct.merge_layers(bra[lo:hi + 1], ket_sites[lo:hi + 1])

    def _bounds(self, lo: int, hi: int):
        nr = self.state.nrow
        return self.top(lo)[lo], self.bottom(nr - 1 - hi)[nr - 1 - hi]

    def band(self, lo: int, hi: int, ket_sites) -> complex:
        """Contract rows ``lo..hi`` of ``<psi|ket>`` between the boundaries."""
        top, bottom = self._bounds(lo, hi)
        self.bands += 1
        return ct.contract_band(top, self._rows(lo, hi, ket_sites), bottom)

    def environment(self, lo: int, hi: int) -> ct.BandEnvironment:
        key = (lo, hi)
        if key not in self._envs:
            top, bottom = self._bounds(lo, hi)
            self._envs[key] = ct.BandEnvironment(top, self._rows(lo, hi, self.state.sites), bottom)
        return self._envs[key]

    def local(self, term_sites, factors) -> complex:
        """Band value with ``factors`` applied on ``term_sites``, using stored environments."""
        rows = [s[0] for s in term_sites]
        cols = [s[1] for s in term_sites]
        lo, hi, c0, c1 = min(rows), max(rows), min(cols), max(cols)
        env = self.environment(lo, hi)
        ket = _ket_with(self.state.sites, factors, term_sites)
        band_rows = self._rows(lo, hi, ket)
        columns = [ct._band_columns(band_rows, c) for c in range(c0, c1 + 1)]
        self.bands += 1
        return env.value(c0, columns)


def term_values(state: PepsState, obs: Observable, option: ct.ContractOption | None = None,
                use_cache: bool = True):
    """Unnormalized ``<psi|H_i|psi>`` for every term, and ``<psi|psi>``.

    Returns ``(values, norm_sq, stats)`` where ``stats`` counts full sweeps
    and band contractions.
    """
    option = option or ct.ContractOption()
    obs.check_grid(state.nrow, state.ncol)
    ket = state.sites
    values = np.zeros(len(obs.terms), dtype=complex)
    if option.family == "exact":
        norm_sq = ct.contract_exact(ct.merge_layers(ket, ket), option.budget)
        for k, t in enumerate(obs.terms):
            for factors in t.products():
                grid = ct.merge_layers(ket, _ket_with(ket, factors, t.sites))
                values[k] += ct.contract_exact(grid, option.budget)
        return values, norm_sq, {"full_contractions": len(obs.terms) + 1, "bands": 0}

    if use_cache:
        cache = RowCache(state, option)
        norm_sq = cache.norm_sq()
    else:
        cache = RowCache(state, option, build=False)
        norm_sq = cache.norm_sq()
    for k, t in enumerate(obs.terms):
        rows = [s[0] for s in t.sites]
        lo, hi = min(rows), max(rows)
        for factors in t.products():
            if use_cache:
                values[k] += cache.local(t.sites, factors)
            else:
                values[k] += cache.band(lo, hi, _ket_with(ket, factors, t.sites))
    return values, norm_sq, {"sweeps": cache.sweeps, "bands": cache.bands}


def expectation(state: PepsState, obs: Observable, option: ct.ContractOption | None = None,
                use_cache: bool = True, normalized: bool = True, allow_complex: bool = False):
    """``<psi|H|psi> / <psi|psi>`` (or the raw sum with ``normalized=False``).

    Terms are summed in index order. Unless ``allow_complex`` is set the
    observable must be Hermitian and the result is returned as a float; an
    imaginary part above ``1e-8`` (relative) raises :class:`NonHermitianError`.
    """
    if not obs.terms:
        return 0.0
    if not obs.hermitian and not allow_complex:
        raise NonHermitianError("observable is not flagged Hermitian; pass allow_complex=True")
    values, norm_sq, _ = term_values(state, obs, option, use_cache)
    total = complex(math.fsum(values.real), math.fsum(values.imag))
    if normalized:
        total = total / norm_sq
    if allow_complex:
        return total
    if abs(total.imag) > IMAG_TOL * max(1.0, abs(total.real)):
        raise NonHermitianError(f"expectation has imaginary part {total.imag:.3e}")
    return float(total.real)


def expectation_trotter(state: PepsState, obs: Observable, tau: float,
                        option: ct.ContractOption | None = None,
                        update: UpdateOption | None = None) -> float:
    """First-order estimate ``(<psi|prod_j exp(tau H_j)|psi> - <psi|psi>) / (tau <psi|psi>)``.

    Needs one two-layer contraction for the product and one for the norm;
    the error is O(tau).
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    option = option or ct.ContractOption()
    if not obs.terms:
        return 0.0
    phi = state
    for sites, m in trotter_groups(obs):
        g = exp_hermitian(m, tau)
        phi = apply_gate(phi, Gate(g, sites), update)
    num = ct.inner(state.sites, phi.sites, option)
    den = ct.inner(state.sites, state.sites, option)
    return float(((num - den) / (tau * den)).real)


def gate_count_with_cache(n: int, obs: Observable, use_cache: bool = True):
    """``(full_sweeps, band_contractions)`` charged to one expectation evaluation.

    With the cache: two full sweeps (top and bottom) and one band per
    term. Without: one full contraction per term and no bands.
    """
    if use_cache:
        return 2, len(obs.terms)
    return len(obs.terms), 0
