import numpy as np
import pytest

from pepsim import gates as G
from pepsim import observables as O
from pepsim import peps as P
from pepsim import statevector as SV
from pepsim.contraction import ResourceError


def test_zeros_and_basis_from_peps():
    sv = SV.zeros(2, 2)
    assert sv.vector[0] == 1 and sv.norm() == 1
    bits = [1, 0, 0, 1]
    v = SV.from_peps(P.computational_basis_state(2, 2, bits)).amps
    assert v[tuple(bits)] == 1 and np.count_nonzero(v) == 1


def test_from_peps_matches_amplitudes():
    s = P.random_peps(2, 3, 2, 0)
    sv = SV.from_peps(s)
    for bits in ([0] * 6, [1, 0, 1, 1, 0, 1], [1] * 6):
        assert np.isclose(sv.amps[tuple(bits)], P.amplitude(s, bits), rtol=1e-10)


def test_hadamard_and_bell():
    sv = SV.apply_gate(SV.zeros(2, 2), P.Gate(G.H, [(0, 0)]))
    assert np.isclose(sv.amps[0, 0, 0, 0], 1 / np.sqrt(2)) and np.isclose(sv.amps[1, 0, 0, 0], 1 / np.sqrt(2))
    sv = SV.apply_gate(sv, P.Gate(G.CNOT, [(0, 0), (1, 0)]))
    assert np.isclose(sv.amps[1, 0, 1, 0], 1 / np.sqrt(2))
    # control is the first listed site
    sv2 = SV.apply_gate(SV.apply_gate(SV.zeros(1, 2), P.Gate(G.X, [(0, 1)])), P.Gate(G.CNOT, [(0, 1), (0, 0)]))
    assert np.isclose(sv2.amps[1, 1], 1)


def test_unitaries_preserve_norm():
    rng = np.random.default_rng(1)
    sv = SV.zeros(2, 3)
    for _ in range(10):
        a, b = rng.choice(6, 2, replace=False)
        g = P.Gate(G.ISWAP, [divmod(int(a), 3), divmod(int(b), 3)])
        sv = SV.apply_gate(SV.apply_gate(sv, P.Gate(G.SQRT_W, [divmod(int(a), 3)])), g)
    assert np.isclose(sv.norm(), 1, atol=1e-12)


def test_colliding_targets():
    with pytest.raises(ValueError):
        SV.apply_gate(SV.zeros(1, 2), P.Gate(G.CNOT, [(0, 0), (0, 0)]))


def test_budget():
    with pytest.raises(ResourceError):
        SV.zeros(5, 5, budget=2 ** 20)


def test_expectation_of_paulis():
    sv = SV.apply_gate(SV.zeros(1, 2), P.Gate(G.H, [(0, 0)]))
    h = O.Observable([O.pauli_term(1.0, ("X", (0, 0))), O.pauli_term(0.5, ("Z", (0, 1)))])
    assert np.isclose(SV.expectation(sv, h), 1.5)


def test_hamiltonian_matrix_matches_apply():
    h = O.build_j1j2(2, 2, (1, 1, 1), (0.5, 0.5, 0.5), (0.2, 0.2, 0.2))
    s = SV.from_peps(P.random_peps(2, 2, 2, 3))
    hm = SV.hamiltonian_matrix(h, 2, 2)
    assert np.allclose(hm @ s.vector, SV.apply_observable(s, h).reshape(-1))
    assert np.allclose(hm.toarray(), hm.toarray().conj().T)


def test_ground_energy_heisenberg_pair():
    # XX+YY+ZZ on two qubits: singlet at -3
    h = O.build_j1j2(1, 2, (1, 1, 1))
    assert np.isclose(SV.ground_energy(h, 1, 2), -3.0)


def test_exact_ite_reaches_ground_state():
    h = O.build_j1j2(2, 2, (1, 1, 1), h=(0.2, 0.2, 0.2))
    start = SV.from_peps(P.random_product_state(2, 2, 4))
    e0 = SV.ground_energy(h, 2, 2)
    _, es = SV.exact_ite(start, h, 0.1, 300, mode="exact")
    assert np.all(np.diff(es) <= 1e-12)
    assert abs(es[-1] - e0) < 1e-8
    _, et = SV.exact_ite(start, h, 0.01, 600)
    assert abs(et[-1] - e0) < 0.05


def test_trotter_step_matches_peps_ite_without_truncation():
    h = O.build_j1j2(2, 2, (1, 1, 1), (0.5, 0.5, 0.5), (0.2, 0.2, 0.2))
    s = P.random_product_state(2, 2, 5)
    sv = SV.from_peps(s)
    groups = O.trotter_groups(h)
    for _ in range(3):
        sv = SV.trotter_step(sv, h, 0.05, groups)
        for sites, m in groups:
            s = P.apply_gate(s, P.Gate(O.exp_hermitian(m, -0.05), sites))
    assert SV.fidelity(SV.from_peps(s), sv) > 1 - 1e-10


def test_ite_rejects_bad_arguments():
    h = O.build_j1j2(1, 2)
    with pytest.raises(ValueError):
        SV.exact_ite(SV.zeros(1, 2), h, -0.1, 3)
    with pytest.raises(ValueError):
        SV.exact_ite(SV.zeros(1, 2), h, 0.1, 3, mode="rk4")
