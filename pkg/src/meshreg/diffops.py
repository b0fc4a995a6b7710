"""Sparse difference operators and penalty-operator assembly.

Everything here produces :class:`SparseBandedMatrix` instances: plain
iterated difference matrices, window-averaging matrices, width-normalized
difference operators for irregular meshes, and the stacked multi-axis
penalty operator used by the multivariate solver.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .mesh import Mesh, TensorMesh


@dataclass(frozen=True, eq=False)
class SparseBandedMatrix:
    """Row-compressed sparse matrix with an optional banded annotation.

    ``bandwidth`` bounds the number of consecutive columns spanned by the
    nonzeros of any row.  When set, it gates the fast banded factorization
    path in the solver; ``None`` means "treat as general sparse".
    """

    matrix: sparse.csr_array
    bandwidth: int | None = None

    def __post_init__(self):
        mat = self.matrix
        if not sparse.issparse(mat):
            mat = sparse.csr_array(np.atleast_2d(np.asarray(mat, dtype=float)))
        if mat.format != "csr":
            mat = sparse.csr_array(mat)
        mat.sum_duplicates()
        mat.sort_indices()
        object.__setattr__(self, "matrix", mat)
        if self.bandwidth is not None:
            if self.bandwidth < 1:
                raise ValueError("bandwidth must be a positive integer")
            span = self._max_row_span()
            if span > self.bandwidth:
                raise ValueError(
                    f"row span {span} exceeds declared bandwidth {self.bandwidth}"
                )

    def _max_row_span(self) -> int:
        indptr, indices = self.matrix.indptr, self.matrix.indices
        counts = np.diff(indptr)
        nonempty = counts > 0
        if not np.any(nonempty):
            return 0
        first = indices[indptr[:-1][nonempty]]
        last = indices[indptr[1:][nonempty] - 1]
        return int(np.max(last - first + 1))

    @property
    def rows(self) -> int:
        return self.matrix.shape[0]

    @property
    def cols(self) -> int:
        return self.matrix.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape

    @property
    def nnz(self) -> int:
        return self.matrix.nnz

    def entries(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Triplets (rows, cols, values) sorted by (row, col)."""
        coo = self.matrix.tocoo()
        return coo.row, coo.col, coo.data

    def tocsr(self) -> sparse.csr_array:
        return self.matrix

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()

    def transpose(self) -> "SparseBandedMatrix":
        # Transposing does not preserve the per-row span bound in general.
        return SparseBandedMatrix(sparse.csr_array(self.matrix.T))

    @property
    def T(self) -> "SparseBandedMatrix":
        return self.transpose()

    def __matmul__(self, other):
        if isinstance(other, SparseBandedMatrix):
            return SparseBandedMatrix(sparse.csr_array(self.matrix @ other.matrix))
        return self.matrix @ other

    def __rmul__(self, scalar) -> "SparseBandedMatrix":
        return SparseBandedMatrix(
            sparse.csr_array(self.matrix * float(scalar)), self.bandwidth
        )

    @staticmethod
    def from_triplets(rows, cols, values, shape, bandwidth=None) -> "SparseBandedMatrix":
        mat = sparse.csr_array(
            (np.asarray(values, dtype=float), (np.asarray(rows), np.asarray(cols))),
            shape=shape,
        )
        return SparseBandedMatrix(mat, bandwidth)


@dataclass(frozen=True)
class PenaltySpec:
    """Collection of difference multi-indices plus the norm order.

    ``orders`` holds one multi-index per penalized derivative.  For a single
    covariate there is exactly one order ``(r,)`` with the convention that
    smoothness order r penalizes differences of order r + 1 (r = 0 is the
    fused lasso).  With two or more covariates each multi-index is the
    literal per-axis difference order, e.g. ``{(1,1),(1,0),(0,1)}`` for the
    first-order collection.

    ``ell`` is the norm order; ``math.inf`` selects the sup form, which is
    supported for evaluation only (the solver handles ell = 1).
    """

    orders: tuple[tuple[int, ...], ...]
    ell: float = 1.0

    def __post_init__(self):
        orders = tuple(tuple(int(v) for v in r) for r in self.orders)
        object.__setattr__(self, "orders", orders)
        if not orders:
            raise ValueError("PenaltySpec needs at least one multi-index")
        p = len(orders[0])
        if p < 1 or any(len(r) != p for r in orders):
            raise ValueError("all multi-indices must share the same length p >= 1")
        if any(v < 0 for r in orders for v in r):
            raise ValueError("difference orders must be non-negative")
        if p == 1 and len(orders) != 1:
            raise ValueError("univariate penalties take exactly one order")
        if not (self.ell >= 1.0):
            raise ValueError(f"norm order ell must be >= 1, got {self.ell}")

    @property
    def dimension(self) -> int:
        return len(self.orders[0])

    def max_interp_order(self) -> int:
        """Largest interpolation order k admitted with this penalty.

        Univariate: k <= r.  Multivariate: k <= S' where S' is the largest
        isotropic (all-axes-equal) order in the collection.
        """
        if self.dimension == 1:
            return self.orders[0][0]
        iso = [r[0] for r in self.orders if len(set(r)) == 1 and r[0] >= 1]
        return max(iso) if iso else 0


def difference_matrix(n: int, r: int) -> SparseBandedMatrix:
    """Unnormalized r-th order difference matrix of shape (n - r, n).

    Row i carries the alternating binomial pattern ``(-1)^(r-t) * C(r, t)``
    at columns i..i+r, so the operator equals the r-fold product of
    first-difference matrices.
    """
    if r < 1:
        raise ValueError(f"difference order must be >= 1, got {r}")
    if n <= r:
        raise ValueError(f"need n > r, got n={n}, r={r}")
    coeff = np.array(
        [(-1.0) ** (r - t) * math.comb(r, t) for t in range(r + 1)], dtype=float
    )
    rows = n - r
    data = np.tile(coeff, rows)
    indices = (np.arange(rows)[:, None] + np.arange(r + 1)[None, :]).ravel()
    indptr = np.arange(rows + 1) * (r + 1)
    mat = sparse.csr_array((data, indices, indptr), shape=(rows, n))
    return SparseBandedMatrix(mat, bandwidth=r + 1)


def averaging_matrix(n: int, k: int) -> SparseBandedMatrix:
    """Window-mean matrix of shape (n - k, n): 1/(k+1) over k+1 columns.

    ``k = 0`` gives the identity.
    """
    if k < 0:
        raise ValueError(f"window order must be >= 0, got {k}")
    if n <= k:
        raise ValueError(f"need n > k, got n={n}, k={k}")
    rows = n - k
    data = np.full(rows * (k + 1), 1.0 / (k + 1))
    indices = (np.arange(rows)[:, None] + np.arange(k + 1)[None, :]).ravel()
    indptr = np.arange(rows + 1) * (k + 1)
    mat = sparse.csr_array((data, indices, indptr), shape=(rows, n))
    return SparseBandedMatrix(mat, bandwidth=k + 1)


def normalized_difference_matrix(mesh: Mesh, r: int, ell: float) -> SparseBandedMatrix:
    """Width-normalized difference operator for the smoothness-r penalty.

    Returns the (m - r - 1) x m matrix B such that ``sum |(B f)_i|^ell``
    is the Riemann approximation of the integral of ``|f^(r+1)|^ell`` over
    the mesh.  The construction alternates first-difference matrices with
    diagonal normalizers built from differences of adjacent window means of
    the knots, then applies the Riemann weights to the power 1/ell on the
    left.  On a regular mesh with width d this collapses to
    ``d^(1/ell - r - 1)`` times the plain (r+1)-difference matrix.
    """
    if r < 0:
        raise ValueError(f"smoothness order must be >= 0, got {r}")
    m = mesh.size
    if m < r + 2:
        raise ValueError(f"mesh of {m} points is too small for order r={r}")
    if not (ell >= 1.0):
        raise ValueError(f"norm order ell must be >= 1, got {ell}")

    pts = mesh.points
    op = None
    steps = None
    for t in range(r + 1):
        d1 = difference_matrix(m - t, 1).tocsr()
        means = averaging_matrix(m, t).tocsr() @ pts
        steps = d1 @ means
        # Positive for strictly increasing knots; Mesh guarantees that.
        assert np.all(steps > 0.0), "normalizer hit a non-increasing mesh"
        scaled = sparse.csr_array(sparse.diags_array(1.0 / steps) @ d1)
        op = scaled if op is None else sparse.csr_array(scaled @ op)
    if math.isfinite(ell):
        op = sparse.csr_array(sparse.diags_array(steps ** (1.0 / ell)) @ op)
    return SparseBandedMatrix(sparse.csr_array(op), bandwidth=r + 2)


def multivariate_penalty_operator(
    tmesh: TensorMesh, spec: PenaltySpec
) -> SparseBandedMatrix:
    """Stacked penalty operator over a regular tensor mesh.

    One block per multi-index: the per-axis difference matrices (normalized
    by the axis width to the difference order) are combined as a Kronecker
    product in axis order, acting on the row-major vectorization of the
    grid values, and the whole block is scaled once by
    ``(width_1 * ... * width_p) ** (1/ell)``.  Blocks are stacked
    vertically in the order the multi-indices are listed.
    """
    p = tmesh.ndim
    if spec.dimension != p:
        raise ValueError(
            f"penalty dimension {spec.dimension} does not match mesh dimension {p}"
        )
    for ax in tmesh.axes:
        if not ax.is_regular:
            raise ValueError("multivariate penalty operators require regular axes")
    deltas = np.array([float(ax.widths[0]) for ax in tmesh.axes])
    for r in spec.orders:
        for j, rj in enumerate(r):
            if tmesh.dims[j] < rj + 1:
                raise ValueError(
                    f"axis {j} with {tmesh.dims[j]} points is too small for order {rj}"
                )
    if math.isinf(spec.ell):
        weight = 1.0
    else:
        weight = float(np.prod(deltas)) ** (1.0 / spec.ell)

    blocks = []
    for r in spec.orders:
        factors = []
        for j, rj in enumerate(r):
            if rj == 0:
                factors.append(sparse.eye_array(tmesh.dims[j], format="csr"))
            else:
                factors.append(
                    difference_matrix(tmesh.dims[j], rj).tocsr() / deltas[j] ** rj
                )
        block = factors[0]
        for fac in factors[1:]:
            block = sparse.kron(block, fac, format="csr")
        blocks.append(sparse.csr_array(block) * weight)
    stacked = sparse.csr_array(sparse.vstack(blocks, format="csr"))
    bandwidth = spec.orders[0][0] + 1 if p == 1 else None
    return SparseBandedMatrix(stacked, bandwidth=bandwidth)


def penalty_null_basis(mesh: Mesh | TensorMesh, spec: PenaltySpec) -> np.ndarray:
    """Orthonormal basis for the null space of the penalty operator.

    The operators built here annihilate exactly the grid evaluations of the
    monomials whose exponent vector ``a`` satisfies, for every multi-index
    in the collection, ``a_j < r_j`` along at least one axis.  Enumerating
    those monomials and orthonormalizing their grid evaluations gives the
    null space directly, without a dense decomposition.
    """
    if isinstance(mesh, Mesh):
        axes_pts = [mesh.points]
        # Univariate convention: smoothness r penalizes (r+1)-differences.
        orders = [(spec.orders[0][0] + 1,)]
    else:
        axes_pts = [ax.points for ax in mesh.axes]
        orders = list(spec.orders)

    # Scaled coordinates keep the Vandermonde columns well conditioned.
    scaled = []
    for pts in axes_pts:
        lo, hi = pts[0], pts[-1]
        scaled.append((2.0 * pts - (lo + hi)) / (hi - lo))

    dims = [pts.size for pts in axes_pts]
    kept = []
    for a in itertools.product(*(range(d) for d in dims)):
        if all(any(a[j] < r[j] for j in range(len(a))) for r in orders):
            kept.append(a)
    if not kept:
        raise ValueError("penalty operator has a trivial null space")

    cols = []
    for a in kept:
        vec = np.ones(1)
        for j, aj in enumerate(a):
            vec = np.kron(vec, scaled[j] ** aj)
        cols.append(vec)
    basis = np.column_stack(cols)
    q, _ = np.linalg.qr(basis)
    return q
