import numpy as np
import pytest

from pepsim import gates as G
from pepsim import peps as P
from pepsim import statevector as SV
from pepsim import tensor as tc
from pepsim.contraction import ContractOption
from pepsim.decomposition import TruncationPolicy


def random_unitary(d, seed):
    q, r = np.linalg.qr(tc.random_tensor((d, d), seed))
    return q * (np.diag(r) / abs(np.diag(r)))


def test_basis_state_amplitudes():
    bits = [0, 1, 1, 0, 1, 0]
    s = P.computational_basis_state(2, 3, bits)
    assert s.max_bond() == 1
    assert P.amplitude(s, bits) == 1
    assert P.amplitude(s, [0] * 6) == 0
    with pytest.raises(ValueError):
        P.computational_basis_state(2, 3, [0] * 5)


def test_site_validation():
    good = P.random_peps(2, 2, 2, 0)
    with pytest.raises(tc.ShapeError):
        good.replace_sites({(0, 0): np.ones((2, 1, 1, 3, 2))})
    with pytest.raises(tc.ShapeError):
        good.replace_sites({(0, 0): np.ones((2, 2, 1, 2, 2))})
    with pytest.raises(tc.ShapeError):
        P.PepsState([[np.ones((2, 1, 1, 1))]])
    assert good.bond((0, 0), (0, 1)) == 2
    with pytest.raises(P.RoutingError):
        good.bond((0, 0), (1, 1))


def test_one_site_gate_matches_oracle():
    s = P.random_peps(2, 2, 2, 1)
    u = random_unitary(2, 3)
    out = P.apply_gate(s, P.Gate(u, [(1, 0)]))
    ref = SV.apply_gate(SV.from_peps(s), P.Gate(u, [(1, 0)]))
    assert np.allclose(SV.from_peps(out).vector, ref.vector)
    assert out.max_bond() == s.max_bond()


@pytest.mark.parametrize("strategy", P.STRATEGIES)
@pytest.mark.parametrize("pair", [((0, 0), (0, 1)), ((1, 1), (0, 1)), ((1, 2), (1, 1)), ((0, 2), (1, 2))])
def test_two_site_gate_exact_rank(strategy, pair):
    s = P.random_peps(2, 3, 2, 4)
    g = P.Gate(random_unitary(4, 5), pair)
    out = P.apply_gate(s, g, P.UpdateOption(strategy=strategy))
    ref = SV.apply_gate(SV.from_peps(s), g)
    assert SV.fidelity(SV.from_peps(out), ref) > 1 - 1e-12
    assert np.allclose(SV.from_peps(out).vector, ref.vector, atol=1e-10 * ref.norm())
    assert out.bond(*pair) <= 4 * s.bond(*pair)


def test_strategies_agree_under_truncation():
    s = P.random_peps(2, 2, 3, 6)
    g = P.Gate(random_unitary(4, 7), [(0, 0), (0, 1)])
    vecs = []
    for strategy in P.STRATEGIES:
        out = P.apply_gate(s, g, P.UpdateOption.rank(2, strategy))
        assert out.bond((0, 0), (0, 1)) == 2
        vecs.append(SV.from_peps(out).vector)
    for v in vecs[1:]:
        assert np.allclose(v, vecs[0], atol=1e-8 * np.linalg.norm(vecs[0]))


def test_product_state_entangling_gate_bond_grows_to_two():
    s = P.computational_zeros(2, 2)
    s = P.apply_gate(s, P.Gate(G.H, [(0, 0)]))
    s = P.apply_gate(s, P.Gate(G.CNOT, [(0, 0), (0, 1)]))
    assert s.bond((0, 0), (0, 1)) == 2
    sv = SV.from_peps(s).vector.reshape(2, 2, 2, 2)
    assert np.isclose(sv[0, 0, 0, 0], 1 / np.sqrt(2)) and np.isclose(sv[1, 1, 0, 0], 1 / np.sqrt(2))


def test_distant_gate_via_swaps():
    s = P.random_peps(3, 3, 1, 8)
    g = P.Gate(random_unitary(4, 9), [(0, 0), (2, 2)])
    out = P.apply_gate(s, g, P.UpdateOption())
    ref = SV.apply_gate(SV.from_peps(s), g)
    assert SV.fidelity(SV.from_peps(out), ref) > 1 - 1e-12
    diag = P.Gate(random_unitary(4, 10), [(1, 1), (0, 2)])
    out2 = P.apply_gate(out, diag, P.UpdateOption())
    assert SV.fidelity(SV.from_peps(out2), SV.apply_gate(ref, diag)) > 1 - 1e-12


def test_routing_errors():
    s = P.computational_zeros(2, 2)
    with pytest.raises(P.RoutingError):
        P.apply_distant(s, P.Gate(G.CNOT, [(0, 0), (0, 0)]))
    with pytest.raises(IndexError):
        P.apply_gate(s, P.Gate(G.CNOT, [(0, 0), (0, 5)]))


def test_unitary_preserves_norm():
    s = P.random_peps(2, 3, 2, 11)
    n0 = P.norm(s)
    for k, pair in enumerate([((0, 0), (0, 1)), ((0, 1), (1, 1)), ((1, 0), (0, 2))]):
        s = P.apply_gate(s, P.Gate(random_unitary(4, 20 + k), pair))
    s = P.apply_gate(s, P.Gate(random_unitary(2, 30), [(1, 2)]))
    assert np.isclose(P.norm(s), n0, rtol=1e-10)


def test_apply_batch_disjoint_only():
    s = P.computational_zeros(2, 2)
    batch = [P.Gate(G.H, [(0, 0)]), P.Gate(G.CNOT, [(1, 0), (1, 1)])]
    assert SV.fidelity(SV.from_peps(P.apply_batch(s, batch)),
                       SV.from_peps(P.apply_batch(s, batch[::-1]))) > 1 - 1e-14
    with pytest.raises(ValueError):
        P.apply_batch(s, [P.Gate(G.H, [(0, 0)]), P.Gate(G.CNOT, [(0, 0), (0, 1)])])


def test_inner_product_and_norm_match_oracle():
    a = P.random_peps(2, 3, 2, 12)
    b = P.random_peps(2, 3, 2, 13)
    va, vb = SV.from_peps(a), SV.from_peps(b)
    assert np.isclose(P.inner_product(a, b), SV.inner(va, vb), rtol=1e-10)
    approx = P.inner_product(a, b, ContractOption("two-layer-ibmps", max_rank=64))
    assert np.isclose(approx, SV.inner(va, vb), rtol=1e-8)
    assert np.isclose(P.norm(a), va.norm(), rtol=1e-10)


def test_amplitude_families_agree():
    s = P.random_peps(3, 3, 2, 14)
    bits = [1, 0, 1, 1, 0, 0, 1, 0, 1]
    ref = SV.from_peps(s).amps[tuple(bits)]
    for fam in ("exact", "bmps", "ibmps"):
        val = P.amplitude(s, bits, ContractOption(fam, max_rank=16))
        assert abs(val - ref) <= 1e-9 * abs(ref)


def test_scaled_state():
    s = P.random_peps(2, 2, 2, 15)
    assert np.allclose(SV.from_peps(s.scaled(-2.0)).vector, -2.0 * SV.from_peps(s).vector)


def test_save_load_roundtrip(tmp_path):
    s = P.random_peps(2, 3, 3, 16)
    path = tmp_path / "state.npz"
    P.save(s, path)
    t = P.load(path)
    for i in range(2):
        for j in range(3):
            assert np.array_equal(s[i, j], t[i, j])
    np.savez(tmp_path / "bad.npz", header=np.frombuffer(b'{"format": "x"}', dtype=np.uint8))
    with pytest.raises(ValueError):
        P.load(tmp_path / "bad.npz")


def test_update_option_validation():
    with pytest.raises(ValueError):
        P.UpdateOption(strategy="nope")
    assert P.UpdateOption.rank(3).policy == TruncationPolicy(3)


@pytest.mark.parametrize("strategy", P.STRATEGIES)
def test_weighted_update_exact_without_truncation(strategy):
    s = P.random_product_state(3, 3, 17)
    w = P.unit_weights(s)
    ref = SV.from_peps(s)
    pairs = [((0, 0), (0, 1)), ((0, 1), (1, 1)), ((1, 1), (1, 2)), ((2, 0), (1, 1)), ((0, 2), (2, 2))]
    for k, pair in enumerate(pairs):
        g = P.Gate(random_unitary(4, 40 + k), pair)
        s, w = P.apply_gate_weighted(s, w, g, P.UpdateOption(strategy=strategy))
        ref = SV.apply_gate(ref, g)
    s, w = P.apply_gate_weighted(s, w, P.Gate(G.H, [(2, 1)]))
    ref = SV.apply_gate(ref, P.Gate(G.H, [(2, 1)]))
    assert SV.fidelity(SV.from_peps(P.absorb_weights(s, w)), ref) > 1 - 1e-10
    for lam in w.values():
        assert lam[0] == 1.0 and np.all(np.diff(lam) <= 0)


def test_weighted_update_respects_rank():
    s = P.random_product_state(2, 2, 18)
    w = P.unit_weights(s)
    for k in range(6):
        pair = [((0, 0), (0, 1)), ((0, 1), (1, 1)), ((1, 1), (1, 0)), ((1, 0), (0, 0))][k % 4]
        s, w = P.apply_gate_weighted(s, w, P.Gate(random_unitary(4, 50 + k), pair), P.UpdateOption.rank(2))
    assert s.max_bond() <= 2
    assert all(lam.size <= 2 for lam in w.values())
    assert np.isfinite(P.norm(P.absorb_weights(s, w)))
