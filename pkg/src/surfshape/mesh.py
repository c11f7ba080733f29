"""Triangle mesh geometry: area weights, normals, correspondence, difference fields.

Meshes are corresponded: vertex j means the same surface location on every
shape in a sample, and all shapes in a sample share one triangulation.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

DifferenceMode = str  # one of "x", "y", "z", "normal", "signed_euclidean"

_DIFFERENCE_MODES = ("x", "y", "z", "normal", "signed_euclidean")


def _as_vertices(vertices) -> np.ndarray:
    v = np.asarray(vertices, dtype=float)
    if v.ndim != 2 or v.shape[1] != 3:
        raise ValueError(f"vertices must be (J, 3), got {v.shape}")
    return v


def _as_triangles(triangles) -> np.ndarray:
    t = np.asarray(triangles, dtype=np.intp)
    if t.ndim != 2 or t.shape[1] != 3:
        raise ValueError(f"triangles must be (T, 3), got {t.shape}")
    return t


@dataclass(frozen=True)
class SurfaceMesh:
    """A triangulated surface: (J, 3) vertex coordinates in mm plus (T, 3) index triples.

    ``regions`` optionally names vertex subsets (region name -> sorted index array)
    used for sub-region scores and reports.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    regions: dict[str, np.ndarray] | None = None

    def __post_init__(self):
        v = _as_vertices(self.vertices)
        t = _as_triangles(self.triangles)
        if v.shape[0] < 3:
            raise ValueError(f"mesh needs at least 3 vertices, got {v.shape[0]}")
        if t.shape[0] < 1:
            raise ValueError("mesh needs at least 1 triangle")
        if t.min() < 0 or t.max() >= v.shape[0]:
            raise ValueError("triangle index out of range")
        degenerate = (t[:, 0] == t[:, 1]) | (t[:, 1] == t[:, 2]) | (t[:, 0] == t[:, 2])
        if degenerate.any():
            raise ValueError(f"triangle {int(np.flatnonzero(degenerate)[0])} repeats a vertex index")
        regions = None
        if self.regions is not None:
            regions = {}
            for name, idx in self.regions.items():
                idx = np.asarray(idx, dtype=np.intp)
                if idx.size and (idx.min() < 0 or idx.max() >= v.shape[0]):
                    raise ValueError(f"region {name!r} references a vertex outside [0, {v.shape[0]})")
                regions[name] = np.unique(idx)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)
        object.__setattr__(self, "regions", regions)

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]

    def with_vertices(self, vertices) -> "SurfaceMesh":
        """Same topology and regions, new coordinates."""
        return SurfaceMesh(_as_vertices(vertices), self.triangles, self.regions)


@dataclass(frozen=True)
class AreaWeights:
    """Per-vertex surface areas (mm^2): the diagonal of the weighting matrix.

    ``total_area`` is the sum of the weights; without overrides it equals the
    total triangle area of the surface.
    """

    weights: np.ndarray
    total_area: float

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1:
            raise ValueError("weights must be 1-D")
        if (w < 0).any():
            raise ValueError("area weights must be non-negative")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "total_area", float(self.total_area))

    @classmethod
    def from_weights(cls, weights) -> "AreaWeights":
        w = np.asarray(weights, dtype=float)
        return cls(w, float(w.sum()))

    @property
    def stacked(self) -> np.ndarray:
        """Length-3J weight vector matching the vec() stacking (x block, y block, z block)."""
        return np.concatenate([self.weights, self.weights, self.weights])


@dataclass(frozen=True)
class BilateralPairing:
    """Left/right vertex correspondence: an involution on vertex indices.

    ``pair[j]`` is the mirror partner of vertex j; midline vertices are the
    fixed points. ``plane_normal`` is the unit normal of the nominal symmetry
    plane (through the origin).
    """

    pair: np.ndarray
    plane_normal: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0]))

    def __post_init__(self):
        p = np.asarray(self.pair, dtype=np.intp)
        if p.ndim != 1:
            raise ValueError("pair must be a 1-D index array")
        j = np.arange(p.size)
        if p.min() < 0 or p.max() >= p.size:
            raise ValueError("pairing index out of range")
        if not np.array_equal(p[p], j):
            bad = int(np.flatnonzero(p[p] != j)[0])
            raise ValueError(f"pairing is not an involution at vertex {bad}")
        n = np.asarray(self.plane_normal, dtype=float)
        norm = np.linalg.norm(n)
        if n.shape != (3,) or norm == 0:
            raise ValueError("plane_normal must be a nonzero 3-vector")
        object.__setattr__(self, "pair", p)
        object.__setattr__(self, "plane_normal", n / norm)

    @property
    def midline(self) -> np.ndarray:
        """Indices of vertices fixed by the involution."""
        return np.flatnonzero(self.pair == np.arange(self.pair.size))


@dataclass(frozen=True)
class ShapeSample:
    """A cohort of corresponded shapes with optional group labels and bilateral pairing."""

    meshes: tuple[SurfaceMesh, ...]
    labels: tuple[str, ...] | None = None
    pairing: BilateralPairing | None = None

    def __post_init__(self):
        meshes = tuple(self.meshes)
        if len(meshes) < 1:
            raise ValueError("a sample needs at least one shape")
        if self.labels is not None:
            labels = tuple(str(l) for l in self.labels)
            if len(labels) != len(meshes):
                raise ValueError(f"{len(labels)} labels for {len(meshes)} shapes")
            object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "meshes", meshes)

    @property
    def n_shapes(self) -> int:
        return len(self.meshes)

    @property
    def n_vertices(self) -> int:
        return self.meshes[0].n_vertices

    def vertex_array(self) -> np.ndarray:
        """All shapes stacked as (n, J, 3)."""
        return np.stack([m.vertices for m in self.meshes])


@dataclass(frozen=True)
class CorrespondenceReport:
    """Outcome of validate_correspondence: empty problem list means OK."""

    problems: tuple[str, ...]

    @property
    def ok(self) -> bool:
        return not self.problems


def triangle_areas(mesh: SurfaceMesh) -> np.ndarray:
    """Per-triangle areas (half cross-product norm)."""
    tri = mesh.vertices[mesh.triangles]
    cross = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    return 0.5 * np.linalg.norm(cross, axis=1)


def vertex_areas(mesh: SurfaceMesh, overrides: Mapping[int, float] | None = None) -> AreaWeights:
    """Area weight per vertex: one third of the area of each incident triangle.

    ``overrides`` replaces the computed weight at the given vertices (used for
    curve points carried in the model as ordinary vertices).

    Raises
    ------
    ValueError
        If every triangle has zero area.
    """
    areas = triangle_areas(mesh)
    if not (areas > 0).any():
        raise ValueError("zero-area surface")
    w = np.zeros(mesh.n_vertices)
    share = areas / 3.0
    for c in range(3):
        np.add.at(w, mesh.triangles[:, c], share)
    if overrides:
        for j, value in overrides.items():
            if not 0 <= j < mesh.n_vertices:
                raise ValueError(f"weight override references vertex {j} outside [0, {mesh.n_vertices})")
            if value < 0:
                raise ValueError(f"weight override for vertex {j} is negative")
            w[j] = value
    return AreaWeights(w, float(w.sum()))


def vertex_normals(mesh: SurfaceMesh) -> np.ndarray:
    """Unit outward normals: area-weighted average of incident triangle normals.

    Raises
    ------
    ValueError
        If a vertex has no incident triangle or its averaged normal vanishes.
    """
    tri = mesh.vertices[mesh.triangles]
    # cross product = 2 * area * unit normal, which is exactly the area weighting
    cross = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    normals = np.zeros_like(mesh.vertices)
    incident = np.zeros(mesh.n_vertices, dtype=np.intp)
    for c in range(3):
        np.add.at(normals, mesh.triangles[:, c], cross)
        np.add.at(incident, mesh.triangles[:, c], 1)
    if (incident == 0).any():
        raise ValueError(f"vertex {int(np.flatnonzero(incident == 0)[0])} has no incident triangle")
    lengths = np.linalg.norm(normals, axis=1)
    if (lengths == 0).any():
        raise ValueError(f"vertex {int(np.flatnonzero(lengths == 0)[0])} has a degenerate normal")
    return normals / lengths[:, None]


def validate_correspondence(sample: ShapeSample) -> CorrespondenceReport:
    """Check that every shape shares the first shape's vertex count and triangulation
    and carries finite coordinates."""
    problems: list[str] = []
    ref = sample.meshes[0]
    for i, mesh in enumerate(sample.meshes):
        if mesh.n_vertices != ref.n_vertices:
            problems.append(f"shape {i}: vertex count {mesh.n_vertices} != {ref.n_vertices}")
        elif not np.array_equal(mesh.triangles, ref.triangles):
            problems.append(f"shape {i}: triangle list differs from shape 0")
        bad = ~np.isfinite(mesh.vertices)
        if bad.any():
            j = int(np.flatnonzero(bad.any(axis=1))[0])
            problems.append(f"shape {i}: non-finite coordinate at vertex {j}")
    return CorrespondenceReport(tuple(problems))


def shape_difference_field(base: SurfaceMesh, other: SurfaceMesh, mode: DifferenceMode) -> np.ndarray:
    """Per-vertex scalar difference field (mm) from ``base`` to ``other``.

    Modes: ``x``/``y``/``z`` coordinate differences, ``normal`` projection of the
    displacement on base's vertex normal, ``signed_euclidean`` distance signed by
    that projection.
    """
    if mode not in _DIFFERENCE_MODES:
        raise ValueError(f"unknown difference mode {mode!r}; expected one of {_DIFFERENCE_MODES}")
    if other.n_vertices != base.n_vertices or not np.array_equal(other.triangles, base.triangles):
        raise ValueError("meshes are not in correspondence")
    delta = other.vertices - base.vertices
    if mode in ("x", "y", "z"):
        return delta[:, ("x", "y", "z").index(mode)].copy()
    projection = np.einsum("jk,jk->j", delta, vertex_normals(base))
    if mode == "normal":
        return projection
    distance = np.linalg.norm(delta, axis=1)
    sign = np.where(projection < 0, -1.0, 1.0)
    return distance * sign
