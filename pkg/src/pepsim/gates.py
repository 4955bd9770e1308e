"""Standard one- and two-qubit gate tensors.

Two-qubit gates are returned as ``(2, 2, 2, 2)`` tensors with the two output
indices first: ``g[i1, i2, j1, j2] = <i1 i2| G |j1 j2>``.
"""
import numpy as np

I = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)

PAULI = {"I": I, "X": X, "Y": Y, "Z": Z}


def two_site(matrix) -> np.ndarray:
    """Reshape a 4x4 matrix on (q1 q2) into the (out1, out2, in1, in2) tensor."""
    return np.asarray(matrix, dtype=complex).reshape(2, 2, 2, 2)


def to_matrix(gate: np.ndarray) -> np.ndarray:
    d = gate.shape[0]
    return gate.reshape(d * d, d * d)


CNOT = two_site([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]])
SWAP = two_site([[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]])
ISWAP = two_site([[1, 0, 0, 0], [0, 0, 1j, 0], [0, 1j, 0, 0], [0, 0, 0, 1]])


def ry(theta: float) -> np.ndarray:
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return np.array([[c, -s], [s, c]], dtype=complex)


def kron2(a, b) -> np.ndarray:
    return two_site(np.kron(a, b))


def _sqrt_rotation(axis) -> np.ndarray:
    # exp(-i pi/4 P): a pi/2 rotation about the unit axis P
    return (I - 1j * axis) / np.sqrt(2)


SQRT_X = _sqrt_rotation(X)
SQRT_Y = _sqrt_rotation(Y)
SQRT_W = _sqrt_rotation((X + Y) / np.sqrt(2))
RQC_GATES = (SQRT_X, SQRT_Y, SQRT_W)
