"""Sparse interpolation matrices from mesh fitted values to observations.

Each scheme produces an n x M linear operator O whose row i holds the
weights that combine mesh values into a fitted value at observation i.
The moving local polynomial (MLP) is the workhorse: sparse, banded in one
dimension, and exact on polynomials up to the requested degree.  A
truncated-power spline scheme and a rising-polynomial design are provided
as dense cross-checks.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .diffops import SparseBandedMatrix
from .errors import OutOfDomainError, SingularDesignError, SingularNeighborhoodError
from .mesh import Mesh, TensorMesh

MLP_SCHEME = "moving-local-polynomial"
SPLINE_SCHEME = "natural-spline"


@dataclass(frozen=True, eq=False)
class InterpolationPlan:
    """An interpolation matrix plus the neighborhoods that produced it.

    ``neighborhoods[i]`` lists the mesh indices (flat, row-major for tensor
    meshes) whose fitted values enter observation i.  Rows sum to one, so
    constants are reproduced exactly.
    """

    order: int
    scheme: str
    matrix: SparseBandedMatrix
    neighborhoods: list[np.ndarray]

    @property
    def n_obs(self) -> int:
        return self.matrix.rows

    def apply(self, values: np.ndarray) -> np.ndarray:
        """Interpolate mesh values (flattened row-major if needed)."""
        return self.matrix @ np.asarray(values, dtype=float).ravel(order="C")


def _floor_indices(points: np.ndarray, xs: np.ndarray, what: str) -> np.ndarray:
    """0-based index of the nearest knot at or left of each x.

    Left-closed convention: an x at an interior knot floors to that knot.
    Raises OutOfDomainError for anything outside the mesh range.
    """
    bad = (xs < points[0]) | (xs > points[-1])
    if np.any(bad):
        i = int(np.argmax(bad))
        raise OutOfDomainError(
            f"{what}[{i}]={xs[i]} outside the mesh range [{points[0]}, {points[-1]}]"
        )
    return np.searchsorted(points, xs, side="right") - 1


def mlp_matrix(xs, mesh: Mesh, k: int) -> InterpolationPlan:
    """Moving local polynomial interpolation matrix of order k.

    An x in cell j is fitted from the degree-k polynomial through knots
    j..j+k (shifted left at the right edge), giving k+1 consecutive
    nonzeros per row and a banded overall matrix.
    """
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    if k < 0:
        raise ValueError(f"interpolation order must be >= 0, got {k}")
    m = mesh.size
    if m < k + 1:
        raise ValueError(f"mesh of {m} points cannot support order k={k}")
    pts = mesh.points
    n = xs.size
    # Window anchored at the floor knot keeps the matrix interpolatory at
    # mesh points (an x equal to d_j gets weight 1 on d_j for every k).
    starts = np.minimum(_floor_indices(pts, xs, "x"), m - 1 - k)
    offsets = np.arange(k + 1)
    nbr = starts[:, None] + offsets[None, :]

    if k == 0:
        weights = np.ones((n, 1))
    else:
        local = pts[nbr]                                   # (n, k+1)
        span = local[:, -1] - local[:, 0]
        u = (local - xs[:, None]) / span[:, None]
        vand = u[:, :, None] ** offsets[None, None, :]     # V[i, a, t] = u_a^t
        rhs = np.zeros((n, k + 1))
        rhs[:, 0] = 1.0                                    # monomials at u = 0
        try:
            weights = np.linalg.solve(np.transpose(vand, (0, 2, 1)), rhs[..., None])
        except np.linalg.LinAlgError as err:
            raise SingularNeighborhoodError(str(err)) from None
        weights = weights[..., 0]

    mat = sparse.csr_array(
        (weights.ravel(), nbr.ravel(), np.arange(n + 1) * (k + 1)), shape=(n, m)
    )
    plan_matrix = SparseBandedMatrix(mat, bandwidth=k + 2)
    return InterpolationPlan(
        order=k,
        scheme=MLP_SCHEME,
        matrix=plan_matrix,
        neighborhoods=[row for row in nbr],
    )


def _simplex_exponents(p: int, k: int) -> np.ndarray:
    """All exponent vectors a >= 0 with sum(a) <= k, graded, constant first."""
    expo = [a for a in itertools.product(range(k + 1), repeat=p) if sum(a) <= k]
    expo.sort(key=lambda a: (sum(a), a))
    return np.array(expo, dtype=int)


def mlp_matrix_multivariate(X, tmesh: TensorMesh, k: int) -> InterpolationPlan:
    """Moving local polynomial over a tensor mesh.

    The neighborhood of an observation is the lattice simplex anchored at
    the containing cell's lower corner: grid offsets t >= 0 with
    sum(t) <= k, shifted inward at upper boundaries.  That gives exactly
    C(k+p, p) points, which are unisolvent for total-degree-k polynomials,
    so the local system is always invertible.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    p = tmesh.ndim
    if X.shape[1] != p:
        raise ValueError(f"observations have {X.shape[1]} columns, mesh has {p} axes")
    if k < 0:
        raise ValueError(f"interpolation order must be >= 0, got {k}")
    for j, ax in enumerate(tmesh.axes):
        if ax.size < k + 1:
            raise ValueError(f"axis {j} with {ax.size} points cannot support k={k}")

    n = X.shape[0]
    dims = tmesh.dims
    starts = np.empty((n, p), dtype=int)
    for j, ax in enumerate(tmesh.axes):
        floors = _floor_indices(ax.points, X[:, j], f"x{j + 1}")
        starts[:, j] = np.minimum(floors, dims[j] - 1 - k)

    expo = _simplex_exponents(p, k)        # doubles as the offset lattice
    L = expo.shape[0]
    grid_idx = starts[:, None, :] + expo[None, :, :]       # (n, L, p)
    flat_idx = np.ravel_multi_index(
        tuple(grid_idx[:, :, j] for j in range(p)), dims, order="C"
    )

    if k == 0:
        weights = np.ones((n, 1))
    else:
        scale = np.array([ax.widths.mean() for ax in tmesh.axes])
        coords = np.stack(
            [tmesh.axes[j].points[grid_idx[:, :, j]] for j in range(p)], axis=-1
        )                                                  # (n, L, p)
        u = (coords - X[:, None, :]) / scale[None, None, :]
        # Psi[i, a, b] = prod_j u[i, a, j] ** expo[b, j]
        psi = np.ones((n, L, L))
        for j in range(p):
            psi *= u[:, :, j, None] ** expo[None, None, :, j]
        rhs = np.zeros((n, L))
        rhs[:, 0] = 1.0
        try:
            weights = np.linalg.solve(np.transpose(psi, (0, 2, 1)), rhs[..., None])
        except np.linalg.LinAlgError as err:
            raise SingularNeighborhoodError(str(err)) from None
        weights = weights[..., 0]

    order = np.argsort(flat_idx, axis=1)
    flat_sorted = np.take_along_axis(flat_idx, order, axis=1)
    w_sorted = np.take_along_axis(weights, order, axis=1)
    mat = sparse.csr_array(
        (w_sorted.ravel(), flat_sorted.ravel(), np.arange(n + 1) * L),
        shape=(n, tmesh.size),
    )
    return InterpolationPlan(
        order=k,
        scheme=MLP_SCHEME,
        matrix=SparseBandedMatrix(mat),
        neighborhoods=[row for row in flat_sorted],
    )


def _spline_basis(xs: np.ndarray, mesh: Mesh, k: int) -> np.ndarray:
    """Evaluate the truncated-power spline basis at xs (columns = basis)."""
    m = mesh.size
    lo, hi = mesh.lo, mesh.hi
    z = (xs - lo) / (hi - lo)
    knots = (mesh.points - lo) / (hi - lo)
    # Interior knot window chosen so the design stays square (m columns):
    # k+1 polynomial columns plus m-k-1 truncated powers.
    first = k // 2 + 1
    inner = knots[first : first + (m - k - 1)]
    cols = [z**t for t in range(k + 1)]
    for t in inner:
        cols.append(np.maximum(z - t, 0.0) ** k if k > 0 else (z >= t).astype(float))
    return np.column_stack(cols)


def spline_matrix(xs, mesh: Mesh, k: int) -> InterpolationPlan:
    """Dense interpolation matrix from a truncated-power spline basis.

    Exactly interpolates at the mesh points (rows for x = d_j are unit
    vectors).  The construction keeps the design square for k <= 3; the
    basis counts do not line up beyond that, so larger k is rejected.
    """
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    if k < 0:
        raise ValueError(f"interpolation order must be >= 0, got {k}")
    if k > 3:
        raise ValueError("spline interpolation is supported for k <= 3")
    m = mesh.size
    if m <= k + 1:
        raise ValueError(f"mesh of {m} points cannot support order k={k}")
    _floor_indices(mesh.points, xs, "x")                   # domain check only

    design = _spline_basis(mesh.points, mesh, k)           # m x m
    cond = np.linalg.cond(design)
    if not np.isfinite(cond) or cond > 1e12:
        raise SingularDesignError(
            f"spline design condition {cond:.3e} exceeds 1e12 for m={m}, k={k}"
        )
    tilde = _spline_basis(xs, mesh, k)                     # n x m
    omat = np.linalg.solve(design.T, tilde.T).T
    plan_matrix = SparseBandedMatrix(sparse.csr_array(omat))
    all_idx = np.arange(m)
    return InterpolationPlan(
        order=k,
        scheme=SPLINE_SCHEME,
        matrix=plan_matrix,
        neighborhoods=[all_idx for _ in range(xs.size)],
    )


def rising_polynomial_values(mesh: Mesh, K: int, xs) -> np.ndarray:
    """Evaluate the order-K rising polynomial basis at arbitrary points.

    The basis is 1, x, ..., x^K followed by the paired truncated-power
    differences ``(x - t_{q+1})^k_+ - (x - t_q)^k_+`` over the anchor knots
    t_q = d_{1+qK}; the pairing makes each column flat to the left of its
    anchors, hence "rising".
    """
    m = mesh.size
    if K < 1:
        raise ValueError(f"basis order must be >= 1, got {K}")
    Q, rem = divmod(m - 1, K)
    if rem != 0 or Q < 1:
        raise ValueError(f"mesh size {m} is not 1 + Q*{K} for an integer Q >= 1")
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    anchors = mesh.points[K::K]                            # t_1 .. t_Q, t_Q = d_m
    cols = [xs**t for t in range(K + 1)]
    for q in range(Q - 1):
        for kk in range(1, K + 1):
            cols.append(
                np.maximum(xs - anchors[q + 1], 0.0) ** kk
                - np.maximum(xs - anchors[q], 0.0) ** kk
            )
    return np.column_stack(cols)


def rising_polynomial_design(mesh: Mesh, K: int) -> np.ndarray:
    """The m x m rising polynomial design evaluated at the mesh points."""
    return rising_polynomial_values(mesh, K, mesh.points)
