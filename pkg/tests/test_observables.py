import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pepsim import contraction as ct
from pepsim import gates as G
from pepsim import observables as O
from pepsim import peps as P
from pepsim import statevector as SV


def test_j1j2_term_counts():
    h = O.build_j1j2(4, 4, (1, 1, 1), (0.5, 0.5, 0.5), (0.2, 0.2, 0.2))
    # 24 neighbour + 18 diagonal pairs, 3 Paulis each, plus 3 field terms per site
    assert len(h) == 3 * 24 + 3 * 18 + 3 * 16
    sparse = O.build_j1j2(2, 2, (1, 0, 0), keep_zero=False)
    assert len(sparse) == 4
    assert {t.label for t in sparse.terms} == {"XX"}


def test_non_hermitian_rejected():
    with pytest.raises(O.NonHermitianError):
        O.Observable([O.LocalTerm(1j, [(0, 0)], G.Z)])
    obs = O.Observable([O.LocalTerm(1j, [(0, 0)], G.Z)], hermitian=False)
    s = P.computational_zeros(1, 2)
    with pytest.raises(O.NonHermitianError):
        O.expectation(s, obs, ct.ContractOption("exact"))
    assert O.expectation(s, obs, ct.ContractOption("exact"), allow_complex=True) == 1j


def test_term_validation():
    with pytest.raises(ValueError):
        O.LocalTerm(1.0, [(0, 0), (0, 0)], np.eye(4))
    with pytest.raises(Exception):
        O.LocalTerm(1.0, [(0, 0)], np.ones((2, 3)))
    h = O.Observable([O.pauli_term(1.0, ("Z", (5, 5)))])
    with pytest.raises(IndexError):
        O.expectation(P.computational_zeros(2, 2), h)


def test_products_reconstruct_term():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    t = O.LocalTerm(0.7, [(0, 0), (0, 1)], a + a.conj().T)
    total = sum(np.kron(x, y) for x, y in t.products())
    assert np.allclose(total, t.matrix())


def test_basis_state_expectations():
    s = P.computational_basis_state(2, 2, [0, 1, 1, 0])
    h = O.Observable([O.pauli_term(1.0, ("Z", (0, 0))), O.pauli_term(1.0, ("Z", (0, 1))),
                      O.pauli_term(2.0, ("Z", (0, 0)), ("Z", (1, 0)))])
    for fam in ("exact", "bmps", "two-layer-ibmps"):
        assert np.isclose(O.expectation(s, h, ct.ContractOption(fam, max_rank=4)), 1 - 1 - 2)


@pytest.mark.parametrize("family", ["exact", "bmps", "ibmps", "two-layer-ibmps"])
def test_expectation_matches_oracle(family):
    s = P.random_peps(3, 3, 2, 1)
    h = O.build_j1j2(3, 3, (1.0, 0.8, 1.2), (0.5, 0.5, 0.5), (0.2, 0.1, 0.3))
    ref = SV.expectation(SV.from_peps(s), h)
    val = O.expectation(s, h, ct.ContractOption(family, max_rank=64))
    assert abs(val - ref) < 1e-8 * max(1, abs(ref))


def test_cache_matches_uncached():
    s = P.random_peps(4, 3, 2, 2)
    h = O.build_j1j2(4, 3, (1, 1, 1), (0, 0, 0), (0, 0, 0.4), keep_zero=False)
    opt = ct.ContractOption("two-layer-ibmps", max_rank=3).with_seed(5)
    a = O.expectation(s, h, opt, use_cache=True, allow_complex=True)
    b = O.expectation(s, h, opt, use_cache=False, allow_complex=True)
    assert abs(a - b) < 1e-10 * abs(b)


def test_cache_counters():
    s = P.random_peps(3, 3, 2, 3)
    h = O.build_j1j2(3, 3, (0, 0, 1), keep_zero=False)
    opt = ct.ContractOption("two-layer-ibmps", max_rank=8)
    _, _, cached = O.term_values(s, h, opt, use_cache=True)
    _, _, plain = O.term_values(s, h, opt, use_cache=False)
    assert cached["sweeps"] == 2
    assert plain["sweeps"] > cached["sweeps"]
    assert O.gate_count_with_cache(9, h, True) == (2, len(h))
    assert O.gate_count_with_cache(9, h, False) == (len(h), 0)


def test_hermitian_expectation_is_real():
    s = P.random_peps(2, 3, 2, 4)
    h = O.build_j1j2(2, 3, (1, 1, 1), (0.5, 0.5, 0.5), (0.2, 0.2, 0.2))
    val = O.expectation(s, h, ct.ContractOption("exact"), allow_complex=True)
    assert abs(val.imag) < 1e-12 * abs(val)


def test_linearity_and_scaling():
    s = P.random_peps(2, 2, 2, 5)
    a = O.build_j1j2(2, 2, (1, 0, 0))
    b = O.build_j1j2(2, 2, (0, 0, 0), h=(0, 0, 1))
    opt = ct.ContractOption("exact")
    ea, eb = O.expectation(s, a, opt), O.expectation(s, b, opt)
    assert np.isclose(O.expectation(s, a + b, opt), ea + eb)
    assert np.isclose(O.expectation(s, a.scaled(-3.0), opt), -3 * ea)
    raw = O.expectation(s, a, opt, normalized=False)
    assert np.isclose(raw, ea * P.norm(s) ** 2)


def test_trotter_expectation_first_order():
    s = P.random_peps(2, 2, 2, 6)
    h = O.build_j1j2(2, 2, (1, 1, 1), h=(0.3, 0, 0.2), keep_zero=False)
    ref = SV.expectation(SV.from_peps(s), h)
    opt = ct.ContractOption("two-layer-ibmps", max_rank=64)
    errs = [abs(O.expectation_trotter(s, h, tau, opt) - ref) for tau in (1e-2, 1e-3)]
    assert errs[1] < errs[0] and errs[1] < 0.05


def test_trotter_groups_order_and_sum():
    h = O.build_j1j2(2, 2, (1, 1, 1), (0.5, 0.5, 0.5), (0.2, 0.2, 0.2))
    groups = O.trotter_groups(h)
    kinds = [O._support_kind(s) for s, _ in groups]
    assert kinds == sorted(kinds)
    assert len(groups) == 4 + 2 + 2 + 2
    hm = SV.hamiltonian_matrix(h, 2, 2).toarray()
    grouped = O.Observable([O.LocalTerm(1.0, s, m) for s, m in groups])
    assert np.allclose(SV.hamiltonian_matrix(grouped, 2, 2).toarray(), hm)


def test_text_roundtrip():
    h = O.build_j1j2(2, 3, (1, 1, 1), (0.5, 0, 0.5), (0.2, 0.2, 0.2))
    rng = np.random.default_rng(7)
    a = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    h = h + O.Observable([O.LocalTerm(0.25, [(1, 2), (0, 1)], a + a.conj().T)])
    text = O.format_observable(h)
    back = O.parse_observable(text)
    assert len(back) == len(h)
    for x, y in zip(h.terms, back.terms):
        assert x.sites == y.sites and np.array_equal(x.matrix(), y.matrix())
    assert O.format_observable(back) == text


def test_parse_errors_name_line():
    with pytest.raises(ValueError, match="line 2"):
        O.parse_observable("1.0 Z@(0,0)\n1.0 Q@(0,0)\n")
    with pytest.raises(ValueError, match="line 1"):
        O.parse_observable("abc Z@(0,0)\n")
    assert len(O.parse_observable("# comment\n\n0.5 X@(0,0) X@(0,1)  # tail\n")) == 1


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2 ** 31), st.floats(-2, 2), st.floats(-2, 2))
def test_expectation_oracle_property(seed, jz, hx):
    s = P.random_peps(2, 2, 2, seed)
    h = O.build_j1j2(2, 2, (1, 1, jz), (0.3, 0.3, 0.3), (hx, 0, 0))
    ref = SV.expectation(SV.from_peps(s), h)
    val = O.expectation(s, h, ct.ContractOption("two-layer-ibmps", max_rank=16))
    assert abs(val - ref) < 1e-8 * max(1, abs(ref))
