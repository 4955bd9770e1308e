"""Approximate simulation of 2D quantum states with PEPS."""
from .contraction import (ContractOption, Mpo, Mps, ResourceError, approx_apply_mpo, contract_bmps,
                          contract_exact, contract_ibmps, contract_one_layer, contract_two_layer, inner)
from .decomposition import (ImplicitOperator, RsvdConfig, TruncationPolicy, einsumsvd,
                            gram_orthogonalize, randomized_svd)
from .observables import (LocalTerm, Observable, RowCache, build_j1j2, expectation,
                          expectation_trotter, format_observable, gate_count_with_cache,
                          parse_observable, pauli_term)
from .peps import (Gate, PepsState, UpdateOption, absorb_weights, amplitude, apply_distant, apply_gate,
                   apply_gate_weighted, apply_one_site, apply_two_site, computational_basis_state, computational_zeros, inner_product, norm,
                   random_peps, random_product_state, unit_weights)
from .tensor import Backend, counting, get_backend, set_backend

__all__ = [
    "Backend", "ContractOption", "Gate", "ImplicitOperator", "LocalTerm", "Mpo", "Mps", "Observable",
    "PepsState", "ResourceError", "RowCache", "RsvdConfig", "TruncationPolicy", "UpdateOption",
    "absorb_weights", "amplitude", "apply_distant", "apply_gate", "apply_gate_weighted", "apply_one_site", "apply_two_site", "approx_apply_mpo",
    "build_j1j2", "computational_basis_state", "computational_zeros", "contract_bmps", "contract_exact",
    "contract_ibmps", "contract_one_layer", "contract_two_layer", "counting", "einsumsvd", "expectation",
    "expectation_trotter", "format_observable", "gate_count_with_cache", "get_backend",
    "gram_orthogonalize", "inner", "inner_product", "norm", "parse_observable", "pauli_term",
    "random_peps", "random_product_state", "randomized_svd", "set_backend", "unit_weights",
]
