"""Application drivers: imaginary time evolution, VQE and random circuits."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from . import contraction as ct
from . import gates as G
from . import observables as obsmod
from . import peps as P
from . import tensor as tc
from .observables import Observable

OPTIMIZERS = ("COBYLA", "Nelder-Mead")
ITE_UPDATES = ("weighted", "plain")


class ConfigError(ValueError):
    pass


def _contract_option(family: str, m: int, seed: int) -> ct.ContractOption:
    return ct.ContractOption(family=family, max_rank=m).with_seed(seed)


def normalize_sites(state: P.PepsState, sites) -> P.PepsState:
    """Rescale the given site tensors to unit Frobenius norm (keeps ITE finite)."""
    return state.replace_sites({s: state[s] / np.linalg.norm(state[s]) for s in sites})


# ---------------------------------------------------------------------------
# imaginary time evolution

@dataclass(frozen=True)
class IteConfig:
    nrow: int
    ncol: int
    hamiltonian: Observable
    tau: float = 0.05
    steps: int = 150
    r: int = 2
    m: int = 4
    family: str = "two-layer-ibmps"
    seed: int = 0
    record_every: int = 1
    strategy: str = "qr-svd-gram"
    update: str = "weighted"

    def __post_init__(self):
        if self.update not in ITE_UPDATES:
            raise ConfigError(f"unknown ITE update {self.update!r}")
        if self.tau <= 0:
            raise ConfigError("tau must be positive")
        if self.r < 1 or self.m < 1:
            raise ConfigError("ranks must be >= 1")
        if self.steps < 0 or self.record_every < 1:
            raise ConfigError("steps must be >= 0 and record_every >= 1")
        if self.family not in ct.FAMILIES:
            raise ConfigError(f"unknown contraction family {self.family!r}")


@dataclass
class IteResult:
    steps: list
    energies: list
    state: P.PepsState = field(repr=False)

    @property
    def final_energy(self) -> float:
        return self.energies[-1]


def ite_initial_state(cfg: IteConfig) -> P.PepsState:
    return P.random_product_state(cfg.nrow, cfg.ncol, tc.derive_seed(cfg.seed, "ite-init"))


def ite_step(state: P.PepsState, groups, tau: float, update: P.UpdateOption,
             weights: dict | None = None):
    """One first-order Trotter step. With ``weights`` the bond-weighted update is
    used and ``(state, weights)`` is returned; otherwise just the state."""
    for sites, m in groups:
        gate = P.Gate(obsmod.exp_hermitian(m, -tau), sites)
        try:
            if weights is None:
                state = P.apply_gate(state, gate, update)
            else:
                state, weights = P.apply_gate_weighted(state, weights, gate, update)
        except tc.NumericalError as exc:
            raise tc.NumericalError(f"gate on {sites}: {exc}") from exc
        state = normalize_sites(state, sites)
    return state if weights is None else (state, weights)


def run_ite(cfg: IteConfig, state: P.PepsState | None = None) -> IteResult:
    """TEBD in imaginary time with per-site energy recorded every ``record_every`` steps.

    The start is a random product state derived from ``cfg.seed``. Energies
    are Rayleigh quotients per site. The ``weighted`` update keeps a weight
    vector on every bond (unit weights at the start) and hands back the state
    with the weights absorbed.
    """
    state = ite_initial_state(cfg) if state is None else state
    groups = obsmod.trotter_groups(cfg.hamiltonian)
    update = P.UpdateOption.rank(cfg.r, cfg.strategy)
    weights = P.unit_weights(state) if cfg.update == "weighted" else None
    steps, energies = [], []
    n = cfg.nrow * cfg.ncol

    def physical():
        return state if weights is None else P.absorb_weights(state, weights)

    for k in range(1, cfg.steps + 1):
        try:
            out = ite_step(state, groups, cfg.tau, update, weights)
        except (tc.NumericalError, ArithmeticError) as exc:
            raise tc.NumericalError(f"ITE step {k}: {exc}") from exc
        state, weights = out if weights is not None else (out, None)
        if k % cfg.record_every == 0 or k == cfg.steps:
            opt = _contract_option(cfg.family, cfg.m, tc.derive_seed(cfg.seed, "ite-energy", k))
            energies.append(obsmod.expectation(physical(), cfg.hamiltonian, opt, allow_complex=True).real / n)
            steps.append(k)
    return IteResult(steps, energies, physical())


# ---------------------------------------------------------------------------
# VQE

@dataclass(frozen=True)
class VqeConfig:
    nrow: int
    ncol: int
    hamiltonian: Observable
    layers: int = 1
    theta: tuple | None = None
    optimizer: str = "COBYLA"
    max_evals: int = 200
    tol: float = 1e-4
    r: int = 2
    m: int = 4
    family: str = "two-layer-ibmps"
    seed: int = 0

    def __post_init__(self):
        if self.layers < 0:
            raise ConfigError("layers must be >= 0")
        if self.theta is not None:
            object.__setattr__(self, "theta", tuple(float(x) for x in self.theta))
            if len(self.theta) != self.nparams:
                raise ConfigError(f"theta has {len(self.theta)} entries, ansatz needs {self.nparams}")
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(f"unknown optimizer {self.optimizer!r}; choose from {OPTIMIZERS}")
        if self.r < 1 or self.m < 1 or self.max_evals < 1:
            raise ConfigError("ranks and max_evals must be >= 1")

    @property
    def nparams(self) -> int:
        return self.layers * self.nrow * self.ncol


@dataclass
class VqeResult:
    best_energy: float
    best_theta: list
    energies: list
    best_so_far: list
    message: str


def initial_theta(cfg: VqeConfig) -> np.ndarray:
    if cfg.theta is not None:
        return np.array(cfg.theta)
    return tc.rng(tc.derive_seed(cfg.seed, "vqe-theta")).uniform(-np.pi, np.pi, cfg.nparams)


def ansatz_state(nrow: int, ncol: int, theta, layers: int, update: P.UpdateOption) -> P.PepsState:
    """``layers`` rounds of Ry on every site then CNOT on every neighbour pair.

    Starts from all zeros. Rotations go row-major; CNOTs run over
    horizontal pairs row-major, then vertical pairs, control on the
    upper/left site.
    """
    state = P.computational_zeros(nrow, ncol)
    theta = np.asarray(theta, dtype=float).reshape(layers, nrow * ncol) if layers else ()
    pairs = obsmod.neighbour_pairs(nrow, ncol)
    for layer in theta:
        for k, t in enumerate(layer):
            state = P.apply_one_site(state, P.Gate(G.ry(t), [(k // ncol, k % ncol)]))
        for a, b in pairs:
            state = P.apply_two_site(state, P.Gate(G.CNOT, (a, b)), update)
    return state


def run_vqe(cfg: VqeConfig) -> VqeResult:
    update = P.UpdateOption.rank(cfg.r)
    n = cfg.nrow * cfg.ncol
    energies: list = []
    best = {"e": math.inf, "theta": None}

    def objective(theta):
        state = ansatz_state(cfg.nrow, cfg.ncol, theta, cfg.layers, update)
        opt = _contract_option(cfg.family, cfg.m, tc.derive_seed(cfg.seed, "vqe-energy"))
        e = obsmod.expectation(state, cfg.hamiltonian, opt, allow_complex=True).real / n
        energies.append(e)
        if e < best["e"]:
            best["e"], best["theta"] = e, np.array(theta, dtype=float)
        return e

    x0 = initial_theta(cfg)
    if cfg.nparams == 0:
        objective(x0)
        message = "no parameters"
    else:
        if cfg.optimizer == "COBYLA":
            options = {"maxiter": cfg.max_evals, "rhobeg": 0.5}
            res = minimize(objective, x0, method="COBYLA", tol=cfg.tol, options=options)
        else:
            options = {"maxfev": cfg.max_evals, "xatol": cfg.tol, "fatol": cfg.tol}
            res = minimize(objective, x0, method="Nelder-Mead", options=options)
        message = str(res.message)
    return VqeResult(best["e"], [float(x) for x in best["theta"]], energies,
                     list(np.minimum.accumulate(energies)), message)


# ---------------------------------------------------------------------------
# random quantum circuits

@dataclass(frozen=True)
class RqcConfig:
    nrow: int
    ncol: int
    depth: int = 8
    seed: int = 0

    def __post_init__(self):
        if self.depth < 0:
            raise ConfigError("depth must be >= 0")
        if self.nrow < 1 or self.ncol < 1:
            raise ConfigError("grid must be positive")


def rqc_gates(cfg: RqcConfig):
    """Layers of gates: a random one-site gate per site, and after every
    fourth layer an iSWAP on every neighbour pair.

    One-site gates are drawn uniformly from sqrt(X), sqrt(Y), sqrt(W),
    never repeating the previous gate on the same site.
    """
    g = tc.rng(tc.derive_seed(cfg.seed, "rqc"))
    last = {}
    layers = []
    for layer in range(cfg.depth):
        gates = []
        for i in range(cfg.nrow):
            for j in range(cfg.ncol):
                choices = [k for k in range(len(G.RQC_GATES)) if k != last.get((i, j))]
                k = choices[int(g.integers(len(choices)))]
                last[(i, j)] = k
                gates.append(P.Gate(G.RQC_GATES[k], [(i, j)]))
        if (layer + 1) % 4 == 0:
            gates += [P.Gate(G.ISWAP, pair) for pair in obsmod.neighbour_pairs(cfg.nrow, cfg.ncol)]
        layers.append(gates)
    return layers


def expected_rqc_bond(depth: int) -> int:
    return 4 ** (depth // 4)


def run_rqc(cfg: RqcConfig, max_bond: int = 256) -> P.PepsState:
    """Exact evolution of the circuit; raises ResourceError past ``max_bond``."""
    need = expected_rqc_bond(cfg.depth)
    if need > max_bond:
        raise ct.ResourceError(f"exact RQC needs bond {need} > {max_bond}", need)
    state = P.computational_zeros(cfg.nrow, cfg.ncol)
    for gates in rqc_gates(cfg):
        for gate in gates:
            state = P.apply_gate(state, gate)
    return state


def rqc_error_sweep(cfg: RqcConfig, ms, bits=None, families=("bmps", "ibmps"), state=None) -> dict:
    """Relative error of one amplitude per contraction family and truncation rank."""
    state = run_rqc(cfg) if state is None else state
    bits = [0] * state.nsites if bits is None else list(bits)
    exact = P.amplitude(state, bits, ct.ContractOption(family="exact"))
    out = {"bits": bits, "exact_re": exact.real, "exact_im": exact.imag, "m": list(ms)}
    for fam in families:
        errs = []
        for m in ms:
            opt = _contract_option(fam, m, tc.derive_seed(cfg.seed, "rqc-amp"))
            val = P.amplitude(state, bits, opt)
            errs.append(abs(val - exact) / abs(exact))
        out[fam] = errs
    return out
