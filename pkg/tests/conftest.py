"""Shared helpers for the test suite."""
from __future__ import annotations

import numpy as np

import surfshape as ss


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniform-ish random rotation via QR of a Gaussian matrix, det +1."""
    q, r = np.linalg.qr(rng.standard_normal((3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 2] *= -1
    return q


def sphere_mesh(resolution: int = 2) -> ss.SurfaceMesh:
    mesh, _ = ss.synth_base_mesh(ss.SynthConfig(resolution=resolution))
    return mesh


def sphere_with_pairing(resolution: int = 2):
    return ss.synth_base_mesh(ss.SynthConfig(resolution=resolution))


def bumpy_mesh(rng: np.random.Generator, resolution: int = 2, amplitude: float = 0.05) -> ss.SurfaceMesh:
    """Randomly perturbed sphere: generic non-degenerate geometry."""
    mesh = sphere_mesh(resolution)
    return mesh.with_vertices(mesh.vertices + amplitude * rng.standard_normal(mesh.vertices.shape))


def flat_square_mesh() -> ss.SurfaceMesh:
    """Unit square in the z=0 plane, counterclockwise seen from +z."""
    vertices = np.array([[0.0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]])
    triangles = np.array([[0, 1, 2], [0, 2, 3]])
    return ss.SurfaceMesh(vertices, triangles)


def weighted_a_norm(weights: ss.AreaWeights, v: np.ndarray) -> float:
    w = weights.stacked
    return float(np.sqrt(v @ (w * v)))


def principal_angles(weights: ss.AreaWeights, basis_a: np.ndarray, basis_b: np.ndarray) -> np.ndarray:
    """Principal angles between two spans of (K, 3J) rows under the A inner product."""
    sw = np.sqrt(weights.stacked)
    qa, _ = np.linalg.qr((basis_a * sw).T)
    qb, _ = np.linalg.qr((basis_b * sw).T)
    cosines = np.linalg.svd(qa.T @ qb, compute_uv=False)
    return np.arccos(np.clip(cosines, -1.0, 1.0))
