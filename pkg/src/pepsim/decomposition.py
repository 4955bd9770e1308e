"""Contract-and-refactor (``einsumsvd``) and the factorizations behind it.

A small tensor network whose open labels are split into a row group and a
column group is a linear map. :func:`einsumsvd` replaces it by two tensors
joined by a single truncated bond, either by materializing the map and
running a dense SVD or by randomized SVD that only ever applies the network
(and its adjoint) to thin blocks of vectors.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import tensor as tc
from .tensor import ShapeError, ValidationError

GRAM_EPS = 1e-12

_FREE_LABELS = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz"


class DegenerateInputError(ValueError):
    pass


@dataclass(frozen=True)
class TruncationPolicy:
    max_rank: int
    cutoff: float = 1e-14

    def __post_init__(self):
        if self.max_rank < 1:
            raise ValueError("max_rank must be >= 1")
        if self.cutoff < 0:
            raise ValueError("cutoff must be non-negative")

    def rank(self, s: np.ndarray) -> int:
        """Number of singular values to keep (at least one)."""
        if s.size == 0:
            return 1
        kept = int(np.count_nonzero(s > self.cutoff * s[0])) if s[0] > 0 else 1
        return max(1, min(self.max_rank, kept))


@dataclass(frozen=True)
class RsvdConfig:
    niter: int = 2
    oversampling: int | None = None
    seed: int = 0
    orthogonalize: str = "qr"

    def __post_init__(self):
        if self.niter < 0:
            raise ValueError("niter must be >= 0")
        if self.oversampling is not None and self.oversampling < 0:
            raise ValueError("oversampling must be >= 0")
        if self.orthogonalize not in ("qr", "gram"):
            raise ValueError(f"unknown orthogonalization {self.orthogonalize!r}")

    def extra(self, rank: int) -> int:
        if self.oversampling is not None:
            return self.oversampling
        return max(5, math.ceil(0.1 * rank))


@dataclass
class SvdTriple:
    U: np.ndarray
    S: np.ndarray
    V: np.ndarray
    clamped: bool = False
    info: dict = field(default_factory=dict)

    @property
    def rank(self) -> int:
        return self.S.shape[0]


class ImplicitOperator:
    """An uncontracted network read as a map from column labels to row labels.

    ``labels`` holds one label string per tensor. Every label that occurs once
    across the network is open and must appear in exactly one of
    ``row_labels`` / ``col_labels``.
    """

    def __init__(self, tensors, labels, row_labels: str, col_labels: str):
        self.tensors = [np.asarray(t) for t in tensors]
        self.labels = list(labels)
        self.row_labels = row_labels
        self.col_labels = col_labels
        if len(self.tensors) != len(self.labels):
            raise ShapeError("one label string per tensor is required")
        self.dims = tc._extents(self.labels, self.tensors)
        counts: dict[str, int] = {}
        for lab in self.labels:
            for c in lab:
                counts[c] = counts.get(c, 0) + 1
        open_labels = {c for c, n in counts.items() if n == 1}
        groups = set(row_labels) | set(col_labels)
        if set(row_labels) & set(col_labels):
            raise ShapeError("row and column labels overlap")
        if open_labels != groups:
            raise ShapeError(
                f"open labels {sorted(open_labels)} do not match row+column groups {sorted(groups)}"
            )
        if not row_labels or not col_labels:
            raise ShapeError("both label groups must be non-empty")
        used = set("".join(self.labels))
        self._rank_label = next(c for c in _FREE_LABELS if c not in used)

    @classmethod
    def from_matrix(cls, m) -> "ImplicitOperator":
        return cls([tc.as_tensor(m)], ["ij"], "i", "j")

    @property
    def row_shape(self) -> tuple[int, ...]:
        return tuple(self.dims[c] for c in self.row_labels)

    @property
    def col_shape(self) -> tuple[int, ...]:
        return tuple(self.dims[c] for c in self.col_labels)

    @property
    def shape(self) -> tuple[int, int]:
        return math.prod(self.row_shape), math.prod(self.col_shape)

    def _spec(self, extra: str, out: str) -> str:
        return ",".join(self.labels + [extra]) + "->" + out

    def apply(self, q: np.ndarray) -> np.ndarray:
        """Apply to ``q`` of shape ``col_shape + (k,)``; returns ``row_shape + (k,)``."""
        q = np.asarray(q)
        if q.shape[:-1] != self.col_shape:
            raise ShapeError(f"expected block of shape {self.col_shape} + (k,), got {q.shape}")
        k = self._rank_label
        return tc.contract(self._spec(self.col_labels + k, self.row_labels + k), *self.tensors, q)

    def adjoint_apply(self, p: np.ndarray) -> np.ndarray:
        """Apply the conjugate transpose to ``p`` of shape ``row_shape + (k,)``."""
        p = np.asarray(p)
        if p.shape[:-1] != self.row_shape:
            raise ShapeError(f"expected block of shape {self.row_shape} + (k,), got {p.shape}")
        k = self._rank_label
        out = tc.contract(self._spec(self.row_labels + k, self.col_labels + k),
                          *[t.conj() for t in self.tensors], p)
        return out

    def materialize(self) -> np.ndarray:
        """Dense tensor with axes ``row_labels + col_labels``."""
        return tc.contract(",".join(self.labels) + "->" + self.row_labels + self.col_labels,
                           *self.tensors)


def _as_operator(a, split=None) -> ImplicitOperator:
    if isinstance(a, ImplicitOperator):
        return a
    a = tc.as_tensor(a)
    if split is None:
        raise ValueError("split is required for a dense tensor")
    labs = _FREE_LABELS[: a.ndim]
    return ImplicitOperator([a], [labs], labs[:split], labs[split:])


# ---------------------------------------------------------------------------

def gram_orthogonalize(a, split: int | None = None):
    """QR factors of a tall tensor from the eigen-decomposition of its Gram matrix.

    ``a`` is a tensor split as (first ``split`` axes) x (rest), or an
    :class:`ImplicitOperator`. Returns ``Q`` with ``a``'s row shape plus a
    trailing bond of the column size, and ``R`` with shape
    ``(k,) + col_shape``. Only the small Gram matrix is ever unfolded.

    Squaring the condition number costs roughly half the working digits.
    Eigenvalues below ``GRAM_EPS * max`` are clamped; when that happens the
    eigen route cannot produce an isometry, so a Householder QR of the
    unfolded tensor is returned instead.
    """
    if isinstance(a, ImplicitOperator):
        cols = math.prod(a.col_shape)
        eye = np.eye(cols, dtype=tc.DTYPE).reshape(a.col_shape + (cols,))
        dense = a.apply(eye)
        split = len(a.row_shape)
        a = dense.reshape(a.row_shape + a.col_shape)
    else:
        a = tc.as_tensor(a)
        if split is None or not 1 <= split < a.ndim:
            raise ValidationError(f"split must lie in [1, {a.ndim - 1}]")
    row_shape, col_shape = a.shape[:split], a.shape[split:]
    rows, cols = math.prod(row_shape), math.prod(col_shape)
    if rows < cols:
        raise ValidationError(f"row extent {rows} is smaller than column extent {cols}")

    rl = _FREE_LABELS[:split]
    cl = _FREE_LABELS[split: a.ndim]
    cl2 = _FREE_LABELS[a.ndim: a.ndim + len(cl)]
    g = tc.contract(f"{rl}{cl},{rl}{cl2}->{cl}{cl2}", a.conj(), a).reshape(cols, cols)
    lam, x = tc.eigh(g, tol=1e-8)
    lam_max = lam[0]
    if not lam_max > 0:
        raise DegenerateInputError("Gram matrix is zero; input has no range")
    floor = GRAM_EPS * lam_max
    if lam[-1] < floor:
        q, r = tc.qr(a, split)
        return q, r
    sq = np.sqrt(lam)
    r = (sq[:, None] * x.conj().T).reshape((cols,) + col_shape)
    p = (x / sq[None, :]).reshape(col_shape + (cols,))
    q = tc.contract(f"{rl}{cl},{cl}Z->{rl}Z", a, p)
    return q, r


def orthogonalize(y: np.ndarray, method: str = "qr") -> np.ndarray:
    """Orthonormal basis for the range of ``y`` read as ``y.shape[:-1] x y.shape[-1]``."""
    if method == "gram":
        q, _ = gram_orthogonalize(y, y.ndim - 1)
    else:
        q, _ = tc.qr(y, y.ndim - 1)
    return q


def randomized_svd(op: ImplicitOperator, policy: TruncationPolicy, cfg: RsvdConfig | None = None) -> SvdTriple:
    """Truncated SVD of an implicit operator by orthogonal (power) iteration.

    Works on blocks of ``max_rank + oversampling`` vectors, clamped to the
    smaller operator dimension, and truncates back to ``policy`` at the end.
    """
    cfg = cfg or RsvdConfig()
    op = _as_operator(op)
    nrows, ncols = op.shape
    target = policy.max_rank + cfg.extra(policy.max_rank)
    limit = min(nrows, ncols)
    clamped = policy.max_rank > limit
    width = min(target, limit)

    q = tc.random_tensor(op.col_shape + (width,), cfg.seed)
    p = orthogonalize(op.apply(q), cfg.orthogonalize)
    for _ in range(cfg.niter):
        q = orthogonalize(op.adjoint_apply(p), cfg.orthogonalize)
        p = orthogonalize(op.apply(q), cfg.orthogonalize)
    # B = P* A, as a (width,) + col_shape tensor
    b = np.moveaxis(op.adjoint_apply(p).conj(), -1, 0)
    ut, s, v = tc.svd(b, 1)
    k = policy.rank(s)
    nr = len(op.row_shape)
    rl = _FREE_LABELS[:nr]
    u = tc.contract(f"{rl}y,yz->{rl}z", p, ut[:, :k])
    return SvdTriple(u, s[:k].copy(), v[:k], clamped=clamped,
                     info={"width": width, "requested": policy.max_rank})


def exact_svd(op: ImplicitOperator, policy: TruncationPolicy) -> SvdTriple:
    op = _as_operator(op)
    dense = op.materialize()
    u, s, v = tc.svd(dense, len(op.row_shape))
    k = policy.rank(s)
    return SvdTriple(u[..., :k], s[:k].copy(), v[:k], clamped=policy.max_rank > s.shape[0],
                     info={"discarded": s[k:].copy()})


def absorb(triple: SvdTriple, how: str = "both") -> tuple[np.ndarray, np.ndarray]:
    u, s, v = triple.U, triple.S, triple.V
    vshape = (-1,) + (1,) * (v.ndim - 1)
    if how == "both":
        w = np.sqrt(s)
        return u * w, v * w.reshape(vshape)
    if how == "left":
        return u * s, v
    if how == "right":
        return u, v * s.reshape(vshape)
    if how == "none":
        return u, v
    raise ValueError(f"unknown absorption {how!r}")


def einsumsvd(network: ImplicitOperator, policy: TruncationPolicy, strategy: str = "exact",
              rsvd: RsvdConfig | None = None, absorb_to: str = "both",
              return_triple: bool = False):
    """Contract ``network`` and split it into ``T1 (row..., k)`` and ``T2 (k, col...)``.

    ``strategy`` is ``"exact"`` (materialize, dense SVD) or ``"implicit-rsvd"``.
    Singular values are split as ``sqrt(S)`` on each side by default;
    ``absorb_to="left"`` or ``"right"`` puts them wholly on one factor, and
    ``"none"`` leaves both factors isometric.
    """
    if strategy == "exact":
        triple = exact_svd(network, policy)
    elif strategy == "implicit-rsvd":
        triple = randomized_svd(network, policy, rsvd)
    else:
        raise ValueError(f"unknown einsumsvd strategy {strategy!r}")
    t1, t2 = absorb(triple, absorb_to)
    if return_triple:
        return t1, t2, triple
    return t1, t2
