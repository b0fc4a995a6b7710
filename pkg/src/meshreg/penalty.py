"""Penalty evaluation on mesh functions.

``penalty_value`` is the semantic reference for every penalty in the
toolkit: the matrix operators in :mod:`meshreg.diffops` must reproduce it.
The univariate path routes through the width-normalized difference matrix
(so regular and irregular meshes agree by construction); the multivariate
path iterates normalized axis differences directly on the grid tensor and
never touches the stacked operator, keeping the two routes independent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .diffops import PenaltySpec, normalized_difference_matrix
from .mesh import Mesh, TensorMesh


@dataclass(frozen=True, eq=False)
class MeshFunction:
    """Fitted values on a mesh: a vector for one covariate, a p-tensor
    (row-major) for several."""

    values: np.ndarray
    mesh: Mesh | TensorMesh

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if isinstance(self.mesh, Mesh):
            vals = vals.ravel(order="C")
            if vals.size != self.mesh.size:
                raise ValueError(
                    f"{vals.size} values for a mesh of {self.mesh.size} points"
                )
        else:
            if vals.shape != self.mesh.dims:
                if vals.size != self.mesh.size:
                    raise ValueError(
                        f"values of shape {vals.shape} do not fit grid {self.mesh.dims}"
                    )
                vals = vals.reshape(self.mesh.dims, order="C")
        if not np.all(np.isfinite(vals)):
            raise ValueError("mesh function values must be finite")
        object.__setattr__(self, "values", vals)

    def vec(self) -> np.ndarray:
        """Row-major flattening of the fitted values."""
        return self.values.ravel(order="C")


def _axis_differences(values: np.ndarray, orders, deltas) -> np.ndarray:
    out = values
    for j, rj in enumerate(orders):
        for _ in range(rj):
            out = np.diff(out, axis=j) / deltas[j]
    return out


def penalty_value(f: MeshFunction, spec: PenaltySpec) -> float:
    """Evaluate the discretized penalty of a mesh function.

    Finite ell: the width-weighted sum of |normalized differences|^ell,
    summed over the multi-index collection.  ell = inf: the sup of the
    absolute normalized differences over the collection.
    """
    mesh = f.mesh
    if isinstance(mesh, Mesh):
        if spec.dimension != 1:
            raise ValueError("univariate mesh function with multivariate penalty")
        r = spec.orders[0][0]
        op = normalized_difference_matrix(mesh, r, spec.ell)
        diffs = op @ f.vec()
        if math.isinf(spec.ell):
            return float(np.max(np.abs(diffs)))
        return float(np.sum(np.abs(diffs) ** spec.ell))

    if spec.dimension != mesh.ndim:
        raise ValueError(
            f"penalty dimension {spec.dimension} does not match mesh dimension {mesh.ndim}"
        )
    for ax in mesh.axes:
        if not ax.is_regular:
            raise ValueError("multivariate penalties require regular axes")
    deltas = [float(ax.widths[0]) for ax in mesh.axes]
    for r in spec.orders:
        for j, rj in enumerate(r):
            if mesh.dims[j] < rj + 1:
                raise ValueError(
                    f"axis {j} with {mesh.dims[j]} points is too small for order {rj}"
                )

    if math.isinf(spec.ell):
        sup = 0.0
        for r in spec.orders:
            diffs = _axis_differences(f.values, r, deltas)
            sup = max(sup, float(np.max(np.abs(diffs))))
        return sup

    cell = float(np.prod(deltas))
    total = 0.0
    for r in spec.orders:
        diffs = _axis_differences(f.values, r, deltas)
        total += cell * float(np.sum(np.abs(diffs) ** spec.ell))
    return total
