"""Dense state-vector simulator used as the exact reference.

Qubit ``k`` is lattice site ``(k // ncol, k % ncol)``; amplitudes are stored
as an order-N tensor with one axis per site, row-major, so the flat index of
a bit string has site ``(0, 0)`` as its most significant digit.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import tensor as tc
from .contraction import ResourceError
from .observables import Observable, exp_hermitian, trotter_groups
from .peps import Gate, PepsState

DEFAULT_BUDGET = 2 ** 20


@dataclass(frozen=True)
class StateVector:
    nrow: int
    ncol: int
    amps: np.ndarray
    d: int = 2

    def __post_init__(self):
        a = np.asarray(self.amps, dtype=tc.DTYPE).reshape((self.d,) * (self.nrow * self.ncol))
        if not np.all(np.isfinite(a)):
            raise tc.NumericalError("non-finite amplitude")
        object.__setattr__(self, "amps", a)

    @property
    def nqubits(self) -> int:
        return self.nrow * self.ncol

    @property
    def vector(self) -> np.ndarray:
        return self.amps.reshape(-1)

    def norm(self) -> float:
        return float(np.linalg.norm(self.vector))

    def normalized(self) -> "StateVector":
        return StateVector(self.nrow, self.ncol, self.amps / self.norm(), self.d)

    def qubit(self, site) -> int:
        i, j = site
        if not (0 <= i < self.nrow and 0 <= j < self.ncol):
            raise IndexError(f"site {site} outside {self.nrow}x{self.ncol} grid")
        return i * self.ncol + j


def _check_budget(n: int, d: int, budget: int):
    if d ** n > budget:
        raise ResourceError(f"{d}**{n} amplitudes exceed budget {budget}", d ** n)


def zeros(nrow: int, ncol: int, d: int = 2, budget: int = DEFAULT_BUDGET) -> StateVector:
    _check_budget(nrow * ncol, d, budget)
    v = np.zeros(d ** (nrow * ncol), dtype=tc.DTYPE)
    v[0] = 1.0
    return StateVector(nrow, ncol, v, d)


def from_peps(state: PepsState, budget: int = DEFAULT_BUDGET) -> StateVector:
    """Contract every virtual bond of a PEPS, leaving the physical legs open."""
    nr, nc, d = state.nrow, state.ncol, state.phys_dim
    _check_budget(state.nsites, d, budget)
    # t: (phys so far, down legs of the frontier (nc of them), pending right leg)
    t = np.ones((1,) * (nc + 2), dtype=tc.DTYPE)
    for i in range(nr):
        for j in range(nc):
            s = state.sites[i][j]
            t = np.moveaxis(t, [1 + j, nc + 1], [-2, -1])
            p = t.shape[0]
            mid = t.shape[1:-2]
            t = t.reshape(p, -1, t.shape[-2], t.shape[-1])
            # s: (phys, up, left, down, right)
            t = np.einsum("pfuh,suhdr->psfdr", t, s, optimize=True)
            t = t.reshape((p * d,) + mid + (s.shape[3], s.shape[4]))
            order = list(range(1, 1 + j)) + [nc] + list(range(1 + j, nc)) + [nc + 1]
            t = t.transpose([0] + order)
        t = t.reshape(t.shape[0], *t.shape[1:-1], 1)
    return StateVector(nr, nc, t.reshape(-1), d)


def apply_gate(sv: StateVector, gate: Gate) -> StateVector:
    qs = [sv.qubit(s) for s in gate.sites]
    if len(set(qs)) != len(qs):
        raise ValueError("gate targets collide")
    k = len(qs)
    g = gate.matrix
    out = np.tensordot(g, sv.amps, axes=(list(range(k, 2 * k)), qs))
    out = np.moveaxis(out, list(range(k)), qs)
    return StateVector(sv.nrow, sv.ncol, out, sv.d)


def apply_matrix(sv: StateVector, sites, m: np.ndarray) -> StateVector:
    k = len(sites)
    return apply_gate(sv, Gate(np.asarray(m).reshape((sv.d,) * (2 * k)), sites))


def inner(a: StateVector, b: StateVector) -> complex:
    return complex(np.vdot(a.vector, b.vector))


def fidelity(a: StateVector, b: StateVector) -> float:
    return abs(inner(a, b)) ** 2 / (a.norm() ** 2 * b.norm() ** 2)


def apply_observable(sv: StateVector, obs: Observable) -> np.ndarray:
    out = np.zeros_like(sv.amps)
    for t in obs.terms:
        out += apply_matrix(sv, t.sites, t.matrix()).amps
    return out


def expectation(sv: StateVector, obs: Observable, normalized: bool = True) -> float:
    hv = apply_observable(sv, obs)
    val = np.vdot(sv.amps.reshape(-1), hv.reshape(-1))
    if normalized:
        val = val / np.vdot(sv.vector, sv.vector)
    return float(val.real)


def hamiltonian_matrix(obs: Observable, nrow: int, ncol: int, d: int = 2) -> sp.csr_matrix:
    """Sparse ``d**N x d**N`` matrix of an observable, qubit order as above."""
    n = nrow * ncol
    dim = d ** n
    h = sp.csr_matrix((dim, dim), dtype=complex)
    for t in obs.terms:
        qs = [i * ncol + j for i, j in t.sites]
        factors = t.products()
        for prod in factors:
            ops = dict(zip(qs, prod))
            mats = []
            run = 0
            for q in range(n):
                if q in ops:
                    if run:
                        mats.append(sp.identity(d ** run, dtype=complex, format="csr"))
                        run = 0
                    mats.append(sp.csr_matrix(ops[q]))
                else:
                    run += 1
            if run:
                mats.append(sp.identity(d ** run, dtype=complex, format="csr"))
            m = mats[0]
            for x in mats[1:]:
                m = sp.kron(m, x, format="csr")
            h = h + m
    return h.tocsr()


def ground_energy(obs: Observable, nrow: int, ncol: int, d: int = 2) -> float:
    h = hamiltonian_matrix(obs, nrow, ncol, d)
    if h.shape[0] <= 64:
        return float(np.linalg.eigvalsh(h.toarray())[0])
    val = spla.eigsh(h, k=1, which="SA", return_eigenvectors=False)
    return float(val[0])


def trotter_step(sv: StateVector, obs: Observable, tau: float, groups=None) -> StateVector:
    """One first-order step ``prod_j exp(-tau H_j)``, ordered as :func:`trotter_groups`."""
    groups = trotter_groups(obs) if groups is None else groups
    for sites, m in groups:
        sv = apply_matrix(sv, sites, exp_hermitian(m, -tau))
    return sv.normalized()


def exact_ite(sv: StateVector, obs: Observable, tau: float, steps: int, mode: str = "trotter"):
    """Imaginary-time evolution; returns the final state and the energy after each step.

    ``mode="trotter"`` uses the same term order as the PEPS driver;
    ``mode="exact"`` applies the full ``exp(-tau H)`` each step.
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    energies = []
    if mode == "trotter":
        groups = trotter_groups(obs)
        for _ in range(steps):
            sv = trotter_step(sv, obs, tau, groups)
            energies.append(expectation(sv, obs))
    elif mode == "exact":
        h = hamiltonian_matrix(obs, sv.nrow, sv.ncol, sv.d)
        v = sv.vector / np.linalg.norm(sv.vector)
        for _ in range(steps):
            v = spla.expm_multiply(-tau * h, v)
            v = v / np.linalg.norm(v)
            energies.append(float(np.vdot(v, h @ v).real))
        sv = StateVector(sv.nrow, sv.ncol, v, sv.d)
    else:
        raise ValueError(f"unknown ITE mode {mode!r}")
    return sv, np.array(energies)
