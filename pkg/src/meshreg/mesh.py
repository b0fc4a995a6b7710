"""Univariate meshes and tensor-product grids.

A mesh is an ordered set of knot locations over the covariate domain; fitted
values at the knots are the optimization parameters everywhere else in the
toolkit.  Meshes are immutable after construction and safe to share between
concurrent fits.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import OutOfDomainError

#: Relative tolerance used to classify a mesh as regular (evenly spaced).
REGULARITY_RTOL = 1e-12


@dataclass(frozen=True, eq=False)
class Mesh:
    """Strictly increasing grid ``d_1 < ... < d_m`` with cached bin widths.

    Attributes
    ----------
    points : ndarray, shape (m,)
        Knot locations in covariate units, strictly increasing, m >= 2.
    widths : ndarray, shape (m - 1,)
        Bin widths ``points[j+1] - points[j]``, all positive.
    is_regular : bool
        True when all widths agree to ``REGULARITY_RTOL`` relative to the
        total span.  Regular meshes unlock simplified penalty operators.
    """

    points: np.ndarray
    widths: np.ndarray
    is_regular: bool

    @property
    def size(self) -> int:
        return self.points.size

    @property
    def lo(self) -> float:
        return float(self.points[0])

    @property
    def hi(self) -> float:
        return float(self.points[-1])


def mesh_from_points(points: Sequence[float]) -> Mesh:
    """Build a mesh from arbitrary knot locations.

    Points are sorted; duplicates are rejected because every downstream
    formula divides by the bin widths.
    """
    pts = np.sort(np.asarray(points, dtype=float).ravel())
    if pts.size < 2:
        raise ValueError(f"a mesh needs at least 2 points, got {pts.size}")
    if not np.all(np.isfinite(pts)):
        raise ValueError("mesh points must be finite")
    widths = np.diff(pts)
    if np.any(widths <= 0.0):
        raise ValueError("duplicate mesh points: knots must be distinct")
    span = pts[-1] - pts[0]
    is_regular = bool(np.max(np.abs(widths - widths[0])) <= REGULARITY_RTOL * span)
    return Mesh(points=pts, widths=widths, is_regular=is_regular)


def regular_mesh(a: float, b: float, m: int) -> Mesh:
    """Evenly spaced mesh of ``m`` points over ``[a, b]``."""
    if not a < b:
        raise ValueError(f"need a < b, got a={a}, b={b}")
    if m < 2:
        raise ValueError(f"a mesh needs at least 2 points, got m={m}")
    pts = np.linspace(float(a), float(b), int(m))
    # Reuse the generic constructor so widths are bit-identical to a
    # round-trip through mesh_from_points.
    return mesh_from_points(pts)


def locate_cell(mesh: Mesh, x: float) -> int:
    """Return the 1-based cell index j with ``d_j <= x <= d_{j+1}``.

    Cells are left-closed: an x exactly at an interior knot belongs to the
    cell on its right.  Observations outside ``[d_1, d_m]`` are a hard
    error; extrapolation is undefined.
    """
    pts = mesh.points
    if x < pts[0] or x > pts[-1]:
        raise OutOfDomainError(
            f"x={x} outside the mesh range [{pts[0]}, {pts[-1]}]"
        )
    j = int(np.searchsorted(pts, x, side="right"))
    return min(j, pts.size - 1)


@dataclass(frozen=True, eq=False)
class TensorMesh:
    """Tensor product of per-covariate meshes.

    Grid functions over a TensorMesh are stored as p-dimensional arrays of
    shape ``dims`` and vectorized row-major (C order) when a flat layout is
    needed.
    """

    axes: tuple[Mesh, ...]
    dims: tuple[int, ...]

    @property
    def ndim(self) -> int:
        return len(self.axes)

    @property
    def size(self) -> int:
        total = 1
        for d in self.dims:
            total *= d
        return total

    def grid_coordinates(self) -> np.ndarray:
        """All grid points as a (size, ndim) array in row-major order."""
        grids = np.meshgrid(*(ax.points for ax in self.axes), indexing="ij")
        return np.column_stack([g.ravel(order="C") for g in grids])


def tensor_mesh(axes: Sequence[Mesh]) -> TensorMesh:
    """Build a TensorMesh from one mesh per covariate."""
    axes = tuple(axes)
    if not axes:
        raise ValueError("a tensor mesh needs at least one axis")
    if not all(isinstance(ax, Mesh) for ax in axes):
        raise TypeError("tensor_mesh expects Mesh instances")
    dims = tuple(ax.size for ax in axes)
    total = 1
    for d in dims:
        total *= d
    if total > np.iinfo(np.intp).max:
        raise ValueError(f"grid size {total} is not representable")
    return TensorMesh(axes=axes, dims=dims)
