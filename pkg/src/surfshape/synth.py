"""Synthetic cohorts with planted ground truth.

The base surface is an octahedron-subdivision sphere (optionally stretched to
an ellipsoid or superellipsoid), built so that reflection in the x = 0 plane
maps the vertex set onto itself bitwise-exactly; the bilateral pairing is
found by coordinate lookup, not by nearest-neighbour search. Cohorts add
planted area-orthonormal deformation modes, optional group shifts, optional
mirror-breaking displacement, noise, and nuisance similarity transforms.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mesh import AreaWeights, BilateralPairing, ShapeSample, SurfaceMesh, vertex_areas, vertex_normals
from .registration import SimilarityTransform, vec_inverse

_BASES = ("sphere", "ellipsoid", "superellipsoid")

_OCTAHEDRON_VERTICES = np.array(
    [
        [1.0, 0.0, 0.0],
        [-1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, -1.0, 0.0],
        [0.0, 0.0, 1.0],
        [0.0, 0.0, -1.0],
    ]
)
_OCTAHEDRON_FACES = np.array(
    [
        [0, 2, 4],
        [2, 1, 4],
        [1, 3, 4],
        [3, 0, 4],
        [2, 0, 5],
        [1, 2, 5],
        [3, 1, 5],
        [0, 3, 5],
    ],
    dtype=np.intp,
)


@dataclass(frozen=True)
class SynthConfig:
    """Recipe for a synthetic cohort; every draw is determined by ``seed``."""

    base: str = "sphere"
    resolution: int = 2
    radii: tuple[float, float, float] = (1.0, 1.0, 1.0)
    exponent: float = 1.0
    n_modes: int = 3
    eigen_spectrum: tuple[float, ...] = (0.05, 0.02, 0.01)
    n_shapes: int = 20
    group_sizes: tuple[int, int] | None = None
    group_shift_component: int | None = None  # 1-based planted mode index
    group_shift_sd: float = 0.0
    asymmetry_magnitude: float = 0.0
    noise_sd: float = 0.0
    nuisance_rotation_deg: float = 0.0
    nuisance_translation: float = 0.0
    nuisance_log_scale: float = 0.0
    standardize_scores: bool = False
    seed: int | None = None

    def __post_init__(self):
        if self.base not in _BASES:
            raise ValueError(f"base must be one of {_BASES}")
        if self.resolution < 2:
            raise ValueError("resolution must be at least 2 subdivisions")
        if self.n_modes < 0:
            raise ValueError("n_modes must be non-negative")
        spectrum = tuple(float(s) for s in self.eigen_spectrum)
        if len(spectrum) != self.n_modes:
            raise ValueError("eigen_spectrum length must equal n_modes")
        if any(s <= 0 for s in spectrum):
            raise ValueError("eigen_spectrum entries must be positive")
        if any(a <= b for a, b in zip(spectrum, spectrum[1:])):
            raise ValueError("eigen_spectrum must be strictly decreasing")
        if self.group_shift_component is not None and not 1 <= self.group_shift_component <= self.n_modes:
            raise ValueError("group_shift_component outside the planted modes")
        object.__setattr__(self, "eigen_spectrum", spectrum)

    @property
    def n_total(self) -> int:
        return sum(self.group_sizes) if self.group_sizes else self.n_shapes


@dataclass(frozen=True)
class SynthGroundTruth:
    """Everything planted into a synthetic cohort, for recovery checks."""

    modes: np.ndarray  # (K, 3J), A-orthonormal on the base mesh
    spectrum: np.ndarray
    z: np.ndarray  # (n, K) standard-normal draws behind the shapes
    labels: tuple[str, ...] | None
    shift_component: int | None
    shift_sd: float
    asymmetry_field: np.ndarray | None  # (3J,) common mirror-breaking displacement
    transforms: tuple[SimilarityTransform, ...]
    base_mesh: SurfaceMesh
    pairing: BilateralPairing
    seed: int | None


def subdivided_vertex_count(resolution: int) -> int:
    """Vertices of the octahedron sphere after ``resolution`` subdivisions: 4^(r+1) + 2."""
    return 4 ** (resolution + 1) + 2


def _subdivide_octasphere(resolution: int) -> tuple[np.ndarray, np.ndarray]:
    vertices = [v for v in _OCTAHEDRON_VERTICES]
    faces = _OCTAHEDRON_FACES
    for _ in range(resolution):
        midpoint_cache: dict[tuple[int, int], int] = {}

        def midpoint(i: int, j: int) -> int:
            key = (i, j) if i < j else (j, i)
            if key not in midpoint_cache:
                m = 0.5 * (vertices[i] + vertices[j])
                m = m / np.linalg.norm(m)
                midpoint_cache[key] = len(vertices)
                vertices.append(m)
            return midpoint_cache[key]

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces.extend([(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)])
        faces = np.asarray(new_faces, dtype=np.intp)
    return np.asarray(vertices) + 0.0, faces  # +0.0 turns -0.0 into +0.0 for exact mirror lookups


def _pairing_from_coordinates(vertices: np.ndarray) -> BilateralPairing:
    index = {v.tobytes(): i for i, v in enumerate(vertices)}
    mirrored = vertices * np.array([-1.0, 1.0, 1.0]) + 0.0
    pair = np.empty(vertices.shape[0], dtype=np.intp)
    for i, m in enumerate(mirrored):
        j = index.get(m.tobytes())
        if j is None:
            raise ValueError(f"vertex {i} has no exact mirror partner")
        pair[i] = j
    return BilateralPairing(pair, np.array([1.0, 0.0, 0.0]))


def synth_base_mesh(config: SynthConfig) -> tuple[SurfaceMesh, BilateralPairing]:
    """Mirror-symmetric base surface with exact vertex pairing across x = 0.

    Regions ``upper`` (z >= 0) and ``lower`` (z < 0) are attached for
    sub-region scores.
    """
    unit, faces = _subdivide_octasphere(config.resolution)
    if config.base == "superellipsoid":
        shaped = np.sign(unit) * np.abs(unit) ** config.exponent
    else:
        shaped = unit
    vertices = shaped * np.asarray(config.radii, dtype=float) + 0.0
    regions = {
        "upper": np.flatnonzero(vertices[:, 2] >= 0),
        "lower": np.flatnonzero(vertices[:, 2] < 0),
    }
    mesh = SurfaceMesh(vertices, faces, regions)
    return mesh, _pairing_from_coordinates(vertices)


_SMOOTH_FIELDS = (
    lambda x, y, z: z,
    lambda x, y, z: y,
    lambda x, y, z: x,
    lambda x, y, z: x * y,
    lambda x, y, z: y * z,
    lambda x, y, z: z * x,
    lambda x, y, z: x * x - y * y,
    lambda x, y, z: 2 * z * z - x * x - y * y,
    lambda x, y, z: x * y * z,
    lambda x, y, z: x * (x * x - 3 * y * y),
    lambda x, y, z: y * (y * y - 3 * z * z),
    lambda x, y, z: z * (z * z - 3 * x * x),
)


def _similarity_directions(base: np.ndarray) -> np.ndarray:
    """Tangent directions of translations, rotations and scaling at the base shape."""
    j = base.shape[0]
    directions = []
    for axis in range(3):
        t = np.zeros((j, 3))
        t[:, axis] = 1.0
        directions.append(t)
    generators = (
        np.array([[0.0, 1, 0], [-1, 0, 0], [0, 0, 0]]),
        np.array([[0.0, 0, 1], [0, 0, 0], [-1, 0, 0]]),
        np.array([[0.0, 0, 0], [0, 0, 1], [0, -1, 0]]),
    )
    directions.extend(base @ g for g in generators)
    directions.append(base.copy())
    return np.stack([d.reshape(-1, order="F") for d in directions])


def planted_modes(mesh: SurfaceMesh, weights: AreaWeights, n_modes: int) -> np.ndarray:
    """A-orthonormal low-frequency displacement modes, orthogonal to the similarity
    directions so alignment does not eat the planted variation."""
    if n_modes > len(_SMOOTH_FIELDS):
        raise ValueError(f"at most {len(_SMOOTH_FIELDS)} planted modes are available")
    if n_modes == 0:
        return np.zeros((0, 3 * mesh.n_vertices))
    w = weights.stacked
    normals = vertex_normals(mesh)
    unit = mesh.vertices / np.linalg.norm(mesh.vertices, axis=1)[:, None]
    x, y, z = unit.T

    basis = list(_similarity_directions(mesh.vertices))
    for u in basis:
        u /= np.sqrt(u @ (w * u))
    # Gram-Schmidt within the basis itself first
    ortho: list[np.ndarray] = []
    for u in basis:
        for v in ortho:
            u = u - (v @ (w * u)) * v
        norm = np.sqrt(u @ (w * u))
        if norm > 1e-10:
            ortho.append(u / norm)
    n_nuisance = len(ortho)

    for h in _SMOOTH_FIELDS:
        if len(ortho) - n_nuisance == n_modes:
            break
        u = (h(x, y, z)[:, None] * normals).reshape(-1, order="F")
        scale = np.sqrt(u @ (w * u))
        for v in ortho:
            u = u - (v @ (w * u)) * v
        norm = np.sqrt(u @ (w * u))
        if norm > 1e-8 * scale:
            ortho.append(u / norm)
    modes = np.stack(ortho[n_nuisance:])
    if modes.shape[0] < n_modes:
        raise ValueError("could not construct enough independent planted modes")
    return modes


def _standardize(z: np.ndarray) -> np.ndarray:
    """Exact empirical standardization: zero mean, identity covariance (ddof=1)."""
    n = z.shape[0]
    centered = z - z.mean(axis=0)
    q, _ = np.linalg.qr(centered)
    return q * np.sqrt(n - 1)


def _random_transform(rng: np.random.Generator, config: SynthConfig) -> SimilarityTransform:
    angle = np.radians(config.nuisance_rotation_deg) * rng.uniform(-1.0, 1.0)
    axis = rng.standard_normal(3)
    axis /= np.linalg.norm(axis)
    k = np.array(
        [
            [0.0, -axis[2], axis[1]],
            [axis[2], 0.0, -axis[0]],
            [-axis[1], axis[0], 0.0],
        ]
    )
    rotation = np.eye(3) + np.sin(angle) * k + (1 - np.cos(angle)) * (k @ k)
    translation = rng.uniform(-config.nuisance_translation, config.nuisance_translation, 3)
    scale = float(np.exp(rng.uniform(-config.nuisance_log_scale, config.nuisance_log_scale)))
    return SimilarityTransform(scale, rotation, translation)


def _asymmetry_field(mesh: SurfaceMesh, magnitude: float) -> np.ndarray:
    """Smooth one-sided bump (off the midline) along the vertex normals."""
    unit = mesh.vertices / np.linalg.norm(mesh.vertices, axis=1)[:, None]
    center = np.array([1.0, 0.5, 0.3])
    center /= np.linalg.norm(center)
    bump = np.exp(-np.sum((unit - center) ** 2, axis=1) / 0.5)
    return magnitude * (bump[:, None] * vertex_normals(mesh)).reshape(-1, order="F")


def synth_cohort(config: SynthConfig) -> tuple[ShapeSample, SynthGroundTruth]:
    """Generate a cohort of shapes with planted modes, recording all ground truth.

    Each shape is base + planted-mode displacement (+ group shift for the
    second group) (+ common asymmetry field) + iid noise, then hit with a
    random nuisance similarity transform. ``standardize_scores`` forces the
    mode draws to have exactly zero mean and identity covariance so the
    planted spectrum is recoverable to numerical precision.
    """
    mesh, pairing = synth_base_mesh(config)
    weights = vertex_areas(mesh)
    modes = planted_modes(mesh, weights, config.n_modes)
    spectrum = np.asarray(config.eigen_spectrum)
    rng = np.random.default_rng(config.seed)

    n = config.n_total
    z = rng.standard_normal((n, config.n_modes))
    if config.standardize_scores:
        if n <= config.n_modes:
            raise ValueError("standardization needs more shapes than modes")
        z = _standardize(z)

    labels: tuple[str, ...] | None = None
    shift = np.zeros((n, 1))
    if config.group_sizes is not None:
        n_a, n_b = config.group_sizes
        if n_a < 1 or n_b < 1:
            raise ValueError("both group sizes must be positive")
        labels = ("A",) * n_a + ("B",) * n_b
        shift[n_a:] = 1.0

    tangent = (z * np.sqrt(spectrum)) @ modes
    if config.group_shift_component is not None and config.group_shift_sd:
        k = config.group_shift_component - 1
        tangent += shift * (config.group_shift_sd * np.sqrt(spectrum[k])) * modes[k]
    asym = None
    if config.asymmetry_magnitude:
        asym = _asymmetry_field(mesh, config.asymmetry_magnitude)
        tangent += asym

    meshes = []
    transforms = []
    for i in range(n):
        verts = mesh.vertices + vec_inverse(tangent[i])
        if config.noise_sd:
            verts = verts + rng.normal(0.0, config.noise_sd, verts.shape)
        transform = _random_transform(rng, config)
        transforms.append(transform)
        meshes.append(mesh.with_vertices(transform.apply(verts)))

    sample = ShapeSample(tuple(meshes), labels=labels, pairing=pairing)
    truth = SynthGroundTruth(
        modes=modes,
        spectrum=spectrum,
        z=z,
        labels=labels,
        shift_component=config.group_shift_component,
        shift_sd=config.group_shift_sd,
        asymmetry_field=asym,
        transforms=tuple(transforms),
        base_mesh=mesh,
        pairing=pairing,
        seed=config.seed,
    )
    return sample, truth
