"""Dense complex tensors and the small kernel set everything else is built on.

Tensors are plain ``numpy.ndarray`` objects of dtype ``complex128`` stored in
C order (last index fastest). Kernels never mutate their inputs.

Every contraction and factorization reports work to the active
:class:`Counter` (see :func:`counting`), which is how the cost claims of the
contraction algorithms are checked without relying on wall time.
"""
from __future__ import annotations

import contextlib
import contextvars
import functools
import math
import zlib
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
import scipy.linalg

DTYPE = np.complex128


class ShapeError(ValueError):
    """Raised when labels or extents of a contraction do not line up."""


class NumericalError(ArithmeticError):
    """Raised when a dense factorization fails to converge."""


class ValidationError(ValueError):
    """Raised when an input violates a kernel precondition."""


# ---------------------------------------------------------------------------
# backend

@dataclass
class Backend:
    """Execution engine description.

    Only the numpy engine exists; the record is what callers (and the CLI)
    configure, so a different engine can be slotted in behind the same
    functions later.
    """

    name: str = "numpy"
    threads: int | None = None
    strict_deterministic: bool = False

    @contextlib.contextmanager
    def activate(self):
        limit = 1 if self.strict_deterministic else self.threads
        if limit is None:
            yield self
            return
        from threadpoolctl import threadpool_limits

        with threadpool_limits(limits=limit):
            yield self


_backend = Backend()


def get_backend() -> Backend:
    return _backend


def set_backend(backend: Backend) -> None:
    global _backend
    _backend = backend


# ---------------------------------------------------------------------------
# instrumentation

@dataclass
class Counter:
    flops: int = 0
    peak_elements: int = 0
    calls: dict = field(default_factory=dict)
    by_kind: dict = field(default_factory=dict)

    def add(self, kind: str, flops: int, elements: int = 0) -> None:
        self.flops += int(flops)
        self.calls[kind] = self.calls.get(kind, 0) + 1
        self.by_kind[kind] = self.by_kind.get(kind, 0) + int(flops)
        if elements > self.peak_elements:
            self.peak_elements = int(elements)


_counters: contextvars.ContextVar[tuple] = contextvars.ContextVar("pepsim_counters", default=())


@contextlib.contextmanager
def counting():
    """Collect flops and the largest intermediate produced inside the block.

    Blocks nest; an inner block's work is also charged to the outer ones.
    """
    counter = Counter()
    token = _counters.set(_counters.get() + (counter,))
    try:
        yield counter
    finally:
        _counters.reset(token)


def _record(kind: str, flops: int, elements: int = 0) -> None:
    for c in _counters.get():
        c.add(kind, flops, elements)


# All counts use one convention: a multiply-add is two flops, whether the
# operands are real or complex, matching the contraction count.

def svd_flops(rows: int, cols: int) -> int:
    """R-SVD count for a thin SVD with both factors (Golub & Van Loan)."""
    big, small = max(rows, cols), min(rows, cols)
    return 6 * big * small * small + 20 * small ** 3


def qr_flops(rows: int, cols: int) -> int:
    """Householder QR (2mn^2 - 2n^3/3) plus forming the thin Q (same again)."""
    return max(4 * rows * cols * cols - (4 * cols ** 3) // 3, rows * cols)


def eigh_flops(n: int) -> int:
    return 9 * n ** 3


# ---------------------------------------------------------------------------
# construction

def as_tensor(data) -> np.ndarray:
    t = np.asarray(data, dtype=DTYPE)
    if t.ndim == 0:
        return t
    if any(s < 1 for s in t.shape):
        raise ShapeError(f"all extents must be >= 1, got shape {t.shape}")
    return np.ascontiguousarray(t)


def rng(seed: int) -> np.random.Generator:
    """Philox-4x64 counter-based generator keyed by a 64-bit seed."""
    return np.random.Generator(np.random.Philox(int(seed) % 2 ** 64))


def random_tensor(shape, seed: int) -> np.ndarray:
    """Real and imaginary parts independently uniform on [-1, 1].

    The real parts are drawn first (C order), then the imaginary parts, from
    a Philox stream keyed by ``seed``.
    """
    shape = tuple(int(s) for s in shape)
    g = rng(seed)
    re = g.uniform(-1.0, 1.0, size=shape)
    im = g.uniform(-1.0, 1.0, size=shape)
    return (re + 1j * im).astype(DTYPE)


def derive_seed(seed: int, *path) -> int:
    """Deterministic child seed for a structural position.

    Path items may be ints or strings; strings are folded through CRC32 so
    the result does not depend on Python's randomized ``hash``.
    """
    words = [int(seed) % 2 ** 32, (int(seed) >> 32) % 2 ** 32]
    for item in path:
        if isinstance(item, str):
            words.append(zlib.crc32(item.encode()))
        else:
            words.append(int(item) % 2 ** 32)
    state = np.random.SeedSequence(words).generate_state(2, dtype=np.uint32)
    return int(state[0]) | (int(state[1]) << 32)


# ---------------------------------------------------------------------------
# reshaping

def matricize(t: np.ndarray, split: int) -> np.ndarray:
    rows = math.prod(t.shape[:split])
    return t.reshape(rows, -1)


def fold(m: np.ndarray, row_shape, col_shape) -> np.ndarray:
    return m.reshape(tuple(row_shape) + tuple(col_shape))


# ---------------------------------------------------------------------------
# contraction

def parse_spec(spec: str, n_inputs: int | None = None) -> tuple[list[str], str]:
    spec = spec.replace(" ", "")
    if "->" not in spec:
        raise ShapeError(f"contraction spec needs an explicit output: {spec!r}")
    lhs, out = spec.split("->")
    inputs = lhs.split(",")
    if n_inputs is not None and len(inputs) != n_inputs:
        raise ShapeError(f"spec has {len(inputs)} inputs but {n_inputs} tensors were given")
    return inputs, out


def _extents(inputs, tensors) -> dict[str, int]:
    dims: dict[str, int] = {}
    for labels, t in zip(inputs, tensors):
        if len(labels) != t.ndim:
            raise ShapeError(f"labels {labels!r} do not match tensor of order {t.ndim}")
        for lab, ext in zip(labels, t.shape):
            if dims.setdefault(lab, ext) != ext:
                raise ShapeError(f"label {lab!r} has extents {dims[lab]} and {ext}")
    return dims


def _pairwise(a, la: str, b, lb: str, keep: set[str], dims) -> tuple[np.ndarray, str]:
    out = "".join(dict.fromkeys(c for c in la + lb if c in keep))
    size = math.prod(dims[c] for c in out) if out else 1
    work = math.prod(dims[c] for c in set(la + lb))
    _record("contract", 2 * work, size)
    summed = [c for c in la if c in lb and c not in keep]
    batch = [c for c in la if c in lb and c in keep]
    if batch or len(set(la)) != len(la) or len(set(lb)) != len(lb):
        return np.einsum(f"{la},{lb}->{out}", a, b, optimize=True), out
    res = np.tensordot(a, b, axes=([la.index(c) for c in summed], [lb.index(c) for c in summed]))
    lab = "".join(c for c in la if c not in summed) + "".join(c for c in lb if c not in summed)
    # labels only in one operand and not kept are summed away first
    drop = [i for i, c in enumerate(lab) if c not in keep]
    if drop:
        res = res.sum(axis=tuple(drop))
        lab = "".join(c for c in lab if c in keep)
    if lab != out:
        res = res.transpose([lab.index(c) for c in out])
    return res, out


def contract_path(inputs: list[str], output: str, dims: dict[str, int]) -> list[tuple[int, int]]:
    key = (tuple(inputs), output, tuple(sorted(dims.items())))
    return list(_cached_path(key))


@functools.lru_cache(maxsize=4096)
def _cached_path(key) -> tuple:
    inputs, output, dims = list(key[0]), key[1], dict(key[2])
    return tuple(_greedy_path(inputs, output, dims))


def _greedy_path(inputs: list[str], output: str, dims: dict[str, int]) -> list[tuple[int, int]]:
    """Greedy pair order: always merge the pair with the smallest result.

    Pairs sharing a label are preferred over outer products; ties go to the
    lowest indices, so the path is a pure function of the network shape.
    """
    labels = list(inputs)
    path = []
    while len(labels) > 1:
        best = None
        for i, j in combinations(range(len(labels)), 2):
            rest = set(output).union(*(labels[k] for k in range(len(labels)) if k not in (i, j)))
            out = set(labels[i] + labels[j]) & rest
            size = math.prod(dims[c] for c in out) if out else 1
            shared = bool(set(labels[i]) & set(labels[j]))
            key = (not shared, size)
            if best is None or key < best[0]:
                best = (key, i, j, "".join(dict.fromkeys(c for c in labels[i] + labels[j] if c in rest)))
        _, i, j, merged = best
        path.append((i, j))
        labels = [lab for k, lab in enumerate(labels) if k not in (i, j)] + [merged]
    return path


def contract(spec: str, *tensors) -> np.ndarray:
    """Einstein-summation contraction of any number of tensors.

    Two or fewer inputs map to one ``einsum`` call. Larger networks are
    contracted pairwise along :func:`contract_path`. Each pairwise step
    charges ``2 * prod(extents of every label involved)`` flops.
    """
    tensors = [np.asarray(t) for t in tensors]
    inputs, output = parse_spec(spec, len(tensors))
    dims = _extents(inputs, tensors)
    for c in output:
        if c not in dims:
            raise ShapeError(f"output label {c!r} does not appear in any input")
    if len(set(output)) != len(output):
        raise ShapeError(f"output label repeated in {output!r}")

    if len(tensors) == 1:
        work = math.prod(dims[c] for c in set(inputs[0])) if inputs[0] else 1
        size = math.prod(dims[c] for c in output) if output else 1
        _record("contract", 2 * work, size)
        return np.einsum(f"{inputs[0]}->{output}", tensors[0])

    labels = list(inputs)
    arrays = list(tensors)
    for i, j in contract_path(labels, output, dims):
        rest = set(output).union(*(labels[k] for k in range(len(labels)) if k not in (i, j)))
        merged, lab = _pairwise(arrays[i], labels[i], arrays[j], labels[j], rest, dims)
        arrays = [a for k, a in enumerate(arrays) if k not in (i, j)] + [merged]
        labels = [x for k, x in enumerate(labels) if k not in (i, j)] + [lab]
    (result,), (lab,) = arrays, labels
    if lab != output:
        result = np.einsum(f"{lab}->{output}", result)
    return result


# ---------------------------------------------------------------------------
# factorizations

def _fix_phases(u: np.ndarray, vh: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # largest-magnitude entry of each left vector made real positive
    idx = np.argmax(np.abs(u), axis=0)
    pivots = u[idx, np.arange(u.shape[1])]
    phase = np.ones_like(pivots)
    nz = np.abs(pivots) > 0
    phase[nz] = pivots[nz] / np.abs(pivots[nz])
    return u * phase.conj(), vh * phase[:, None]


def svd(t: np.ndarray, split: int):
    """Thin SVD of ``t`` unfolded as (first ``split`` axes) x (the rest).

    Returns ``U`` with shape ``row_shape + (k,)``, the singular values ``S``
    (non-increasing, zeros kept) and ``V`` with shape ``(k,) + col_shape``,
    so that ``U * S @ V`` refolds to ``t``.
    """
    t = np.asarray(t)
    if not 1 <= split < t.ndim:
        raise ValidationError(f"split must lie in [1, {t.ndim - 1}], got {split}")
    row_shape, col_shape = t.shape[:split], t.shape[split:]
    m = matricize(t, split)
    try:
        u, s, vh = scipy.linalg.svd(m, full_matrices=False, lapack_driver="gesdd", check_finite=False)
    except (np.linalg.LinAlgError, ValueError):
        try:
            u, s, vh = scipy.linalg.svd(m, full_matrices=False, lapack_driver="gesvd")
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise NumericalError(f"SVD did not converge for tensor of shape {t.shape}") from exc
    _record("svd", svd_flops(*m.shape), u.size + vh.size)
    u, vh = _fix_phases(u, vh)
    k = s.shape[0]
    return u.reshape(row_shape + (k,)), s, vh.reshape((k,) + col_shape)


def qr(t: np.ndarray, split: int):
    """Thin QR; ``Q`` has shape ``row_shape + (k,)`` and ``R`` ``(k,) + col_shape``."""
    t = np.asarray(t)
    if not 1 <= split < t.ndim:
        raise ValidationError(f"split must lie in [1, {t.ndim - 1}], got {split}")
    row_shape, col_shape = t.shape[:split], t.shape[split:]
    m = matricize(t, split)
    q, r = np.linalg.qr(m, mode="reduced")
    _record("qr", qr_flops(*m.shape), q.size)
    k = q.shape[1]
    return q.reshape(row_shape + (k,)), r.reshape((k,) + col_shape)


def eigh(m: np.ndarray, tol: float = 1e-10):
    """Eigen-decomposition of a Hermitian matrix, eigenvalues descending.

    A tensor of even order is read as a square matrix over its first and
    second halves. The input is symmetrized after the Hermiticity check.
    """
    m = np.asarray(m)
    if m.ndim != 2:
        if m.ndim % 2:
            raise ValidationError(f"cannot read order-{m.ndim} tensor as a square matrix")
        m = matricize(m, m.ndim // 2)
    if m.shape[0] != m.shape[1]:
        raise ValidationError(f"matrix is not square: {m.shape}")
    scale = max(np.abs(m).max(initial=0.0), 1.0)
    if np.abs(m - m.conj().T).max(initial=0.0) > tol * scale:
        raise ValidationError("matrix is not Hermitian within tolerance")
    h = (m + m.conj().T) / 2
    w, x = np.linalg.eigh(h)
    _record("eigh", eigh_flops(h.shape[0]), x.size)
    return w[::-1].copy(), np.ascontiguousarray(x[:, ::-1])
