"""Weighted ordinary and generalized Procrustes registration.

The fit criterion is a surface integral approximated by area-weighted vertex
sums, so densely and unevenly triangulated surfaces register the same way the
underlying continuous surfaces would.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .mesh import AreaWeights, ShapeSample, SurfaceMesh, triangle_areas, validate_correspondence, vertex_areas

SIZE_CONSTRAINTS = ("unit_area", "initial_mean_area")


@dataclass(frozen=True)
class SimilarityTransform:
    """y = scale * x @ rotation + translation, applied to row-vector coordinates."""

    scale: float
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=float)
        t = np.asarray(self.translation, dtype=float)
        if r.shape != (3, 3):
            raise ValueError("rotation must be 3x3")
        if t.shape != (3,):
            raise ValueError("translation must be a 3-vector")
        if not np.allclose(r.T @ r, np.eye(3), atol=1e-8):
            raise ValueError("rotation is not orthogonal")
        if self.scale <= 0:
            raise ValueError("scale must be positive")
        object.__setattr__(self, "scale", float(self.scale))
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "SimilarityTransform":
        return cls(1.0, np.eye(3), np.zeros(3))

    def apply(self, shape: np.ndarray) -> np.ndarray:
        return self.scale * np.asarray(shape, dtype=float) @ self.rotation + self.translation

    def inverse(self) -> "SimilarityTransform":
        inv_scale = 1.0 / self.scale
        return SimilarityTransform(inv_scale, self.rotation.T, -inv_scale * self.translation @ self.rotation.T)

    def rescaled(self, factor: float) -> "SimilarityTransform":
        """The transform followed by a uniform scaling about the origin."""
        return SimilarityTransform(self.scale * factor, self.rotation, self.translation * factor)


class OpaFit(NamedTuple):
    transform: SimilarityTransform
    fitted: np.ndarray
    rss: float


@dataclass(frozen=True)
class GpaResult:
    """Generalized Procrustes output: mean shape, aligned shapes, per-shape transforms."""

    mean: np.ndarray
    aligned: np.ndarray
    transforms: tuple[SimilarityTransform, ...]
    mean_weights: AreaWeights
    iterations: int
    objective_trace: np.ndarray
    converged: bool


def apply_similarity(shape: np.ndarray, transform: SimilarityTransform) -> np.ndarray:
    """Apply a similarity transform to a (J, 3) shape."""
    return transform.apply(shape)


def _check_pair(source: np.ndarray, target: np.ndarray, weights: AreaWeights) -> None:
    if source.shape != target.shape or source.ndim != 2 or source.shape[1] != 3:
        raise ValueError(f"shapes must both be (J, 3); got {source.shape} and {target.shape}")
    if weights.weights.shape[0] != source.shape[0]:
        raise ValueError("weight vector length does not match the shapes")


def weighted_opa(
    source: np.ndarray,
    target: np.ndarray,
    weights: AreaWeights,
    allow_scaling: bool = True,
    allow_reflection: bool = False,
) -> OpaFit:
    """Fit ``source`` onto ``target`` minimizing the area-weighted squared misfit.

    Minimizes sum_j a_j ||target_j - s R^T source_j - t||^2 over similarity
    parameters. ``weights`` should come from the target surface. With
    ``allow_reflection`` the orthogonal part may have determinant -1.

    Returns the transform, the fitted source in the target frame, and the
    weighted residual sum of squares.
    """
    source = np.asarray(source, dtype=float)
    target = np.asarray(target, dtype=float)
    _check_pair(source, target, weights)
    a = weights.weights
    total = a.sum()
    if total <= 0:
        raise ValueError("weights sum to zero")
    if np.array_equal(source, target):
        # the optimum is the exact identity; the SVD route would leave rounding noise
        return OpaFit(SimilarityTransform.identity(), target.copy(), 0.0)

    centroid_x = a @ source / total
    centroid_y = a @ target / total
    xc = source - centroid_x
    yc = target - centroid_y

    cross_cov = xc.T @ (a[:, None] * yc)  # X^T A Y, 3x3
    u, s, vt = np.linalg.svd(cross_cov)
    if s[0] <= 0 or s[1] <= s[0] * 1e-12:
        raise ValueError("degenerate configuration: points are collinear or coincident")
    signs = np.ones(3)
    if not allow_reflection and np.linalg.det(u @ vt) < 0:
        signs[2] = -1.0
    rotation = (u * signs) @ vt

    if allow_scaling:
        scale = float(signs @ s) / float(np.einsum("j,jk,jk->", a, xc, xc))
        if scale <= 0:
            raise ValueError("degenerate configuration: non-positive scale")
    else:
        scale = 1.0

    translation = centroid_y - scale * centroid_x @ rotation
    transform = SimilarityTransform(scale, rotation, translation)
    fitted = transform.apply(source)
    rss = float(np.einsum("j,jk,jk->", a, target - fitted, target - fitted))
    return OpaFit(transform, fitted, rss)


def _surface_area(vertices: np.ndarray, triangles: np.ndarray) -> float:
    tri = vertices[triangles]
    cross = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    return float(0.5 * np.linalg.norm(cross, axis=1).sum())


def weighted_gpa(
    sample: ShapeSample,
    max_iter: int = 100,
    tol: float = 1e-10,
    size_constraint: str = "unit_area",
    allow_scaling: bool = True,
    weight_overrides: dict[int, float] | None = None,
) -> GpaResult:
    """Register a cohort to a common mean by iterated weighted OPA.

    Each iteration re-estimates the mean as the average of the aligned shapes,
    rescales it to the size constraint, recomputes its area weights, and
    re-fits every shape onto it. Stops when the relative change of the
    weighted objective falls below ``tol`` or the objective reaches
    rounding-noise level. Because the weights are recomputed from the evolving
    mean, successive trace entries evaluate slightly different criteria; on
    noisy cohorts the trace can wobble a few orders above machine precision
    even though the state converges to an order-independent fixed point.
    """
    if size_constraint not in SIZE_CONSTRAINTS:
        raise ValueError(f"size_constraint must be one of {SIZE_CONSTRAINTS}")
    if sample.n_shapes < 2:
        raise ValueError("generalized registration needs at least two shapes")
    report = validate_correspondence(sample)
    if not report.ok:
        raise ValueError("sample fails correspondence validation: " + "; ".join(report.problems))
    if max_iter < 1:
        raise ValueError("max_iter must be at least 1")

    triangles = sample.meshes[0].triangles
    shapes = sample.vertex_array()

    mean = shapes[0].copy()
    init_weights = vertex_areas(sample.meshes[0], weight_overrides)
    mean -= init_weights.weights @ mean / init_weights.total_area
    initial_area = _surface_area(mean, triangles)
    target_area = 1.0 if size_constraint == "unit_area" else initial_area
    mean *= np.sqrt(target_area / initial_area)

    trace: list[float] = []
    fits: list[OpaFit] = []
    converged = False
    previous = np.inf
    for _ in range(max_iter):
        mean_mesh = sample.meshes[0].with_vertices(mean)
        weights = vertex_areas(mean_mesh, weight_overrides)
        fits = [weighted_opa(x, mean, weights, allow_scaling=allow_scaling) for x in shapes]
        objective = float(sum(f.rss for f in fits))
        trace.append(objective)
        noise_floor = 1e-24 * len(shapes) * float(np.einsum("j,jk,jk->", weights.weights, mean, mean))
        if objective <= noise_floor or (
            np.isfinite(previous) and abs(previous - objective) <= tol * max(previous, np.finfo(float).tiny)
        ):
            converged = True
            break
        previous = objective
        mean = np.mean([f.fitted for f in fits], axis=0)
        # re-anchor translation: the rescale below would otherwise compound any
        # centroid offset geometrically across iterations
        new_weights = vertex_areas(sample.meshes[0].with_vertices(mean), weight_overrides)
        mean -= new_weights.weights @ mean / new_weights.total_area
        mean *= np.sqrt(target_area / _surface_area(mean, triangles))

    # Final common rescale: keeps mean == average(aligned) exactly while
    # restoring the size constraint that the last averaging perturbed.
    aligned = np.stack([f.fitted for f in fits])
    factor = float(np.sqrt(target_area / _surface_area(aligned.mean(axis=0), triangles)))
    aligned *= factor
    mean = aligned.mean(axis=0)
    transforms = tuple(f.transform.rescaled(factor) for f in fits)
    mean_weights = vertex_areas(sample.meshes[0].with_vertices(mean), weight_overrides)
    return GpaResult(
        mean=mean,
        aligned=aligned,
        transforms=transforms,
        mean_weights=mean_weights,
        iterations=len(trace),
        objective_trace=np.asarray(trace),
        converged=converged,
    )


def vec(shape: np.ndarray) -> np.ndarray:
    """Stack a (J, 3) matrix column-wise into a length-3J vector (x block, y block, z block)."""
    shape = np.asarray(shape, dtype=float)
    if shape.ndim != 2 or shape.shape[1] != 3:
        raise ValueError(f"expected a (J, 3) matrix, got {shape.shape}")
    return shape.reshape(-1, order="F")


def vec_inverse(v: np.ndarray) -> np.ndarray:
    """Exact inverse of :func:`vec`: reassemble a length-3J vector into (J, 3)."""
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.size % 3:
        raise ValueError(f"expected a length-3J vector, got shape {v.shape}")
    return v.reshape(v.size // 3, 3, order="F")


def tangent_coordinates(aligned: np.ndarray | Sequence[np.ndarray], mean: np.ndarray) -> np.ndarray:
    """Approximate tangent coordinates vec(X_i - mean), one row per shape."""
    mean = np.asarray(mean, dtype=float)
    aligned = np.asarray(aligned, dtype=float)
    if aligned.ndim == 2:
        aligned = aligned[None]
    if aligned.shape[1:] != mean.shape:
        raise ValueError(f"aligned shapes {aligned.shape[1:]} do not match mean {mean.shape}")
    deviations = aligned - mean
    return deviations.transpose(0, 2, 1).reshape(aligned.shape[0], -1)
