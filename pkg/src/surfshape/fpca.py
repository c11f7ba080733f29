"""Functional principal component analysis under the area-weighted inner product.

The weighted problem is reduced to ordinary PCA by the isometry that scales
every coordinate slot of vertex j by sqrt(a_j); eigenfunctions come back
orthonormal under <u, v>_A = sum_j a_j u_j . v_j.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mesh import AreaWeights
from .registration import vec, vec_inverse


@dataclass(frozen=True)
class FpcaModel:
    """Fitted component model: mean shape, weights, eigenfunctions (rows), eigenvalues.

    ``explained`` holds cumulative explained-variance fractions relative to the
    total weighted variance, so truncated models report fractions of the full
    spectrum. ``warnings`` records fit-time adjustments such as rank truncation.
    """

    mean: np.ndarray
    weights: AreaWeights
    eigenfunctions: np.ndarray
    eigenvalues: np.ndarray
    explained: np.ndarray
    n_samples: int
    total_variance: float
    warnings: tuple[str, ...] = ()

    def __post_init__(self):
        lam = np.asarray(self.eigenvalues, dtype=float)
        if (lam < 0).any() or (np.diff(lam) > 0).any():
            raise ValueError("eigenvalues must be non-negative and non-increasing")
        e = np.asarray(self.eigenfunctions, dtype=float)
        if e.ndim != 2 or e.shape[0] != lam.size:
            raise ValueError("eigenfunctions must be (K, 3J) with one row per eigenvalue")
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=float))
        object.__setattr__(self, "eigenfunctions", e)
        object.__setattr__(self, "eigenvalues", lam)
        object.__setattr__(self, "explained", np.asarray(self.explained, dtype=float))

    @property
    def n_components(self) -> int:
        return self.eigenvalues.size


@dataclass(frozen=True)
class GrandTour:
    """A seeded random walk through component space rendered as a shape sequence."""

    frames: np.ndarray  # (n_frames, J, 3)
    z_vectors: np.ndarray  # (n_stops, p) standard-normal draws behind the stops
    stop_indices: np.ndarray  # frame index of each stop
    seed: int | None


def _stacked_weights(weights: AreaWeights, n_entries: int) -> np.ndarray:
    w = weights.stacked
    if w.size != n_entries:
        raise ValueError(f"weights are for {w.size // 3} vertices, data has {n_entries // 3}")
    return w


def fit_fpca(
    tangent: np.ndarray,
    weights: AreaWeights,
    k: int | float = 0.80,
    mean_shape: np.ndarray | None = None,
) -> FpcaModel:
    """Fit area-weighted principal components to tangent coordinates (n, 3J).

    ``k`` selects components: an int keeps that many (truncated to the
    available rank, with a warning recorded on the model), a fraction in (0, 1)
    keeps the smallest K whose cumulative explained variance reaches it.
    ``mean_shape`` is the (J, 3) shape the tangent coordinates deviate from;
    it becomes the model mean used by scores/reconstruct.
    """
    tangent = np.asarray(tangent, dtype=float)
    if tangent.ndim != 2:
        raise ValueError("tangent must be (n, 3J)")
    n, m = tangent.shape
    if n < 2:
        raise ValueError("need at least two samples")
    if m % 3:
        raise ValueError("tangent row length must be 3J")
    w = _stacked_weights(weights, m)
    sqrt_w = np.sqrt(w)
    # zero-weight vertices carry no variance; keep their eigenfunction entries at 0
    inv_sqrt_w = np.divide(1.0, sqrt_w, out=np.zeros_like(sqrt_w), where=sqrt_w > 0)

    if mean_shape is None:
        mean_shape = np.zeros((m // 3, 3))
    mean_shape = np.asarray(mean_shape, dtype=float)
    if mean_shape.shape != (m // 3, 3):
        raise ValueError(f"mean_shape must be ({m // 3}, 3)")

    scaled = (tangent - tangent.mean(axis=0)) * sqrt_w
    _, singular, vt = np.linalg.svd(scaled, full_matrices=False)
    eigenvalues = singular**2 / (n - 1)
    total_variance = float(eigenvalues.sum())
    rank = int(np.count_nonzero(singular > singular[0] * 1e-12)) if singular.size and singular[0] > 0 else 0

    warnings: list[str] = []
    if isinstance(k, (bool,)) or not isinstance(k, (int, float, np.integer, np.floating)):
        raise ValueError("k must be a component count or a variance fraction in (0, 1)")
    if isinstance(k, (float, np.floating)) and 0 < k < 1:
        if total_variance <= 0:
            raise ValueError("no variance in the sample")
        fractions = np.cumsum(eigenvalues[:rank]) / total_variance
        keep = int(np.searchsorted(fractions, k - 1e-12) + 1)
        keep = min(keep, rank)
    else:
        keep = int(k)
        if keep < 1:
            raise ValueError("component count must be positive")
        if keep > rank:
            warnings.append(f"requested {keep} components but rank is {rank}; truncated")
            keep = rank
    if keep == 0:
        raise ValueError("no variance in the sample")

    eigenfunctions = vt[:keep] * inv_sqrt_w
    # deterministic sign: the largest-magnitude entry of each eigenfunction is positive
    flip = np.take_along_axis(
        eigenfunctions, np.argmax(np.abs(eigenfunctions), axis=1)[:, None], axis=1
    )[:, 0] < 0
    eigenfunctions[flip] *= -1.0

    explained = np.cumsum(eigenvalues[:keep]) / total_variance if total_variance > 0 else np.zeros(keep)
    return FpcaModel(
        mean=mean_shape,
        weights=weights,
        eigenfunctions=eigenfunctions,
        eigenvalues=eigenvalues[:keep],
        explained=explained,
        n_samples=n,
        total_variance=total_variance,
        warnings=tuple(warnings),
    )


def scores(model: FpcaModel, shape: np.ndarray) -> np.ndarray:
    """Component scores of a shape registered to the model mean: <vec(shape - mean), e_k>_A."""
    shape = np.asarray(shape, dtype=float)
    if shape.shape != model.mean.shape:
        raise ValueError(f"shape {shape.shape} does not match model mean {model.mean.shape}")
    t = vec(shape - model.mean)
    return model.eigenfunctions @ (model.weights.stacked * t)


def scores_matrix(model: FpcaModel, shapes: np.ndarray) -> np.ndarray:
    """Scores for a stack of (n, J, 3) shapes, one row per shape."""
    shapes = np.asarray(shapes, dtype=float)
    return np.stack([scores(model, s) for s in shapes])


def scores_from_tangent(model: FpcaModel, tangent: np.ndarray) -> np.ndarray:
    """Scores for tangent-coordinate rows (n, 3J) already relative to the model mean."""
    tangent = np.atleast_2d(np.asarray(tangent, dtype=float))
    return tangent @ (model.eigenfunctions * model.weights.stacked).T


def reconstruct(model: FpcaModel, score_vector: np.ndarray) -> np.ndarray:
    """Shape with the given component scores: mean + vec^-1(sum_k s_k e_k)."""
    s = np.asarray(score_vector, dtype=float)
    if s.shape != (model.n_components,):
        raise ValueError(f"expected {model.n_components} scores, got shape {s.shape}")
    return model.mean + vec_inverse(model.eigenfunctions.T @ s)


def component_shape(model: FpcaModel, k: int, c: float) -> np.ndarray:
    """Shape c standard deviations along component k (1-based): mean + c sqrt(lambda_k) e_k."""
    if not 1 <= k <= model.n_components:
        raise ValueError(f"component {k} outside 1..{model.n_components}")
    displacement = c * np.sqrt(model.eigenvalues[k - 1]) * model.eigenfunctions[k - 1]
    return model.mean + vec_inverse(displacement)


def grand_tour(
    model: FpcaModel,
    p: int,
    n_stops: int,
    seed: int | None = None,
    frames_per_leg: int = 9,
    z_vectors: np.ndarray | None = None,
) -> GrandTour:
    """Random tour of the first ``p`` components: normal stops joined by linear interpolation.

    ``z_vectors`` overrides the random draws (test hook and replay); otherwise
    ``n_stops`` p-vectors are drawn from a seeded generator. Interpolation is
    linear in tangent space with ``frames_per_leg`` shapes strictly between
    consecutive stops.
    """
    if not 1 <= p <= model.n_components:
        raise ValueError(f"p must be in 1..{model.n_components}")
    if n_stops < 1:
        raise ValueError("need at least one stop")
    if frames_per_leg < 0:
        raise ValueError("frames_per_leg must be non-negative")
    if z_vectors is None:
        rng = np.random.default_rng(seed)
        z = rng.standard_normal((n_stops, p))
    else:
        z = np.asarray(z_vectors, dtype=float)
        if z.shape != (n_stops, p):
            raise ValueError(f"z_vectors must be ({n_stops}, {p})")

    displacements = (z * np.sqrt(model.eigenvalues[:p])) @ model.eigenfunctions[:p]
    stops = [model.mean + vec_inverse(d) for d in displacements]
    frames: list[np.ndarray] = [stops[0]]
    stop_indices = [0]
    for a, b in zip(stops[:-1], stops[1:]):
        for step in range(1, frames_per_leg + 1):
            t = step / (frames_per_leg + 1)
            frames.append((1 - t) * a + t * b)
        frames.append(b)
        stop_indices.append(len(frames) - 1)
    return GrandTour(
        frames=np.stack(frames),
        z_vectors=z,
        stop_indices=np.asarray(stop_indices, dtype=np.intp),
        seed=seed,
    )


def variability_map(aligned: np.ndarray) -> np.ndarray:
    """Per-vertex log-determinant of the 3x3 covariance of aligned positions.

    Vertices whose covariance is singular (e.g. duplicated data) get -inf so
    the map stays renderable after range clamping.
    """
    aligned = np.asarray(aligned, dtype=float)
    if aligned.ndim != 3 or aligned.shape[2] != 3:
        raise ValueError("aligned must be (n, J, 3)")
    n = aligned.shape[0]
    if n < 4:
        raise ValueError("need at least 4 shapes for a per-vertex covariance")
    # offsetting by the first shape keeps identical cohorts exactly singular
    rel = aligned - aligned[0]
    centered = rel - rel.mean(axis=0)
    cov = np.einsum("njk,njl->jkl", centered, centered) / (n - 1)
    det = np.linalg.det(cov)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(det > 0, np.log(np.where(det > 0, det, 1.0)), -np.inf)
    return out
