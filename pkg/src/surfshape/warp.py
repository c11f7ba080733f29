"""Exact thin-plate-spline warping between corresponded 3D point sets.

The interpolant minimizes integrated second-derivative bending energy over
R^3; its radial basis is phi(z) = -z / (8 pi). Side conditions on the
non-affine coefficients (zero column sums, orthogonality to the source
coordinates) keep the affine part identifiable.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist, pdist

from .mesh import SurfaceMesh


def radial_basis(z: np.ndarray) -> np.ndarray:
    """Optimal 3D interpolation kernel phi(z) = -z / (8 pi)."""
    return -np.asarray(z, dtype=float) / (8.0 * np.pi)


@dataclass(frozen=True)
class WarpField:
    """Fitted warp: control points, non-affine coefficients beta1 (J, 3), affine
    coefficients beta2 (4, 3, first row translation), and the bending energy."""

    control_points: np.ndarray
    beta1: np.ndarray
    beta2: np.ndarray
    bending_energy: float
    bending_energy_by_coordinate: np.ndarray


def fit_tps(source: np.ndarray, target: np.ndarray, ridge: float = 0.0) -> WarpField:
    """Fit the warp carrying ``source`` points exactly onto ``target`` points.

    Solves the extended (J+4) x (J+4) system with the affine block Q = (1 X).
    ``ridge`` adds a diagonal term to the kernel block for ill-conditioned
    inputs, trading exact interpolation for stability (default 0: exact).
    """
    x = np.asarray(source, dtype=float)
    y = np.asarray(target, dtype=float)
    if x.ndim != 2 or x.shape[1] != 3 or x.shape != y.shape:
        raise ValueError(f"source and target must both be (J, 3); got {x.shape} and {y.shape}")
    j = x.shape[0]
    if j < 5:
        raise ValueError("need at least 5 control points")
    if pdist(x).min() < 1e-9:
        raise ValueError("duplicate source points make the kernel matrix singular")

    q = np.hstack([np.ones((j, 1)), x])
    if np.linalg.matrix_rank(q, tol=None) < 4:
        raise ValueError("source points are coplanar; the affine block is rank-deficient")

    s = radial_basis(cdist(x, x))
    if ridge:
        s = s + ridge * np.eye(j)
    system = np.zeros((j + 4, j + 4))
    system[:j, :j] = s
    system[:j, j:] = q
    system[j:, :j] = q.T
    rhs = np.vstack([y, np.zeros((4, 3))])
    try:
        solution = np.linalg.solve(system, rhs)
    except np.linalg.LinAlgError:
        raise ValueError("warp system is singular; check control point configuration") from None
    beta1 = solution[:j]
    beta2 = solution[j:]
    # tr(Y^T Be Y) coordinate by coordinate; exact zero is only reached up to rounding
    per_coordinate = np.maximum(np.einsum("jd,jd->d", y, beta1), 0.0)
    return WarpField(
        control_points=x,
        beta1=beta1,
        beta2=beta2,
        bending_energy=float(per_coordinate.sum()),
        bending_energy_by_coordinate=per_coordinate,
    )


def apply_warp(field: WarpField, points: np.ndarray) -> np.ndarray:
    """Evaluate the warp rowwise: y(x) = sum_j phi(||x - x_j||) beta1_j + (1, x) beta2."""
    pts = np.asarray(points, dtype=float)
    squeeze = pts.ndim == 1
    pts = np.atleast_2d(pts)
    if pts.shape[1] != 3:
        raise ValueError("points must be (M, 3)")
    kernel = radial_basis(cdist(pts, field.control_points))
    out = kernel @ field.beta1 + np.hstack([np.ones((pts.shape[0], 1)), pts]) @ field.beta2
    return out[0] if squeeze else out


def warp_template(template: SurfaceMesh, model_source: np.ndarray, model_target: np.ndarray) -> SurfaceMesh:
    """Carry a (typically high-resolution) template along the warp that maps the
    embedded model points ``model_source`` exactly onto ``model_target``."""
    field = fit_tps(model_source, model_target)
    return template.with_vertices(apply_warp(field, template.vertices))
