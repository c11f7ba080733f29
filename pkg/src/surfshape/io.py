"""File formats: OBJ meshes, painted ascii PLY, JSON models, CSV sidecars.

Everything is ASCII and deterministic (identical inputs give byte-identical
output) so artifacts can be golden-tested. Exact conventions live in
FORMATS.md at the repository root.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .fpca import FpcaModel
from .individual import ControlModel
from .mesh import AreaWeights, BilateralPairing, SurfaceMesh

SCHEMA_VERSION = 1

# diverging palette endpoints (low / neutral / high), and the sequential pair
DIVERGING_LOW = (59, 76, 192)
DIVERGING_NEUTRAL = (221, 221, 221)
DIVERGING_HIGH = (180, 4, 38)
SEQUENTIAL_LOW = (247, 251, 255)
SEQUENTIAL_HIGH = (8, 48, 107)


@dataclass(frozen=True)
class ColorMap:
    """Scalar-to-RGB mapping with a pinned palette.

    ``diverging`` runs low colour -> neutral grey -> high colour with
    ``reference`` at the neutral point; ``sequential`` interpolates the
    sequential pair. Values outside [lo, hi] are clamped.
    """

    kind: str
    lo: float
    hi: float
    reference: float = 0.0

    def __post_init__(self):
        if self.kind not in ("diverging", "sequential"):
            raise ValueError("kind must be 'diverging' or 'sequential'")
        if not self.lo < self.hi:
            raise ValueError("require lo < hi")
        if self.kind == "diverging" and not self.lo <= self.reference <= self.hi:
            raise ValueError("reference must lie inside [lo, hi] for diverging maps")

    def rgb(self, values: np.ndarray) -> tuple[np.ndarray, int]:
        """Map values to (n, 3) uint8 colours; also return how many were clamped."""
        v = np.asarray(values, dtype=float)
        clamped = int(((v < self.lo) | (v > self.hi)).sum())
        v = np.clip(v, self.lo, self.hi)
        if self.kind == "sequential":
            t = (v - self.lo) / (self.hi - self.lo)
            lo = np.array(SEQUENTIAL_LOW, dtype=float)
            hi = np.array(SEQUENTIAL_HIGH, dtype=float)
            colors = lo + t[:, None] * (hi - lo)
        else:
            low = np.array(DIVERGING_LOW, dtype=float)
            mid = np.array(DIVERGING_NEUTRAL, dtype=float)
            high = np.array(DIVERGING_HIGH, dtype=float)
            below_span = self.reference - self.lo
            above_span = self.hi - self.reference
            t_below = (v - self.lo) / below_span if below_span > 0 else np.ones_like(v)
            t_above = (v - self.reference) / above_span if above_span > 0 else np.zeros_like(v)
            colors = np.where(
                (v <= self.reference)[:, None],
                low + np.clip(t_below, 0, 1)[:, None] * (mid - low),
                mid + np.clip(t_above, 0, 1)[:, None] * (high - mid),
            )
        return np.rint(colors).astype(np.uint8), clamped


def read_mesh(path) -> SurfaceMesh:
    """Read a triangulated OBJ (v/f records only; other record types are skipped).

    Isolated vertices are rejected: they would silently get zero area weight.
    """
    vertices: list[list[float]] = []
    faces: list[list[int]] = []
    with open(path, "r", encoding="ascii") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if parts[0] == "v":
                if len(parts) != 4:
                    raise ValueError(f"{path}: line {lineno}: vertex needs 3 coordinates")
                try:
                    vertices.append([float(p) for p in parts[1:]])
                except ValueError:
                    raise ValueError(f"{path}: line {lineno}: malformed vertex coordinate") from None
            elif parts[0] == "f":
                refs = parts[1:]
                if len(refs) != 3:
                    raise ValueError(f"{path}: line {lineno}: non-triangular face")
                try:
                    idx = [int(r.split("/")[0]) for r in refs]
                except ValueError:
                    raise ValueError(f"{path}: line {lineno}: malformed face index") from None
                if any(i < 1 for i in idx):
                    raise ValueError(f"{path}: line {lineno}: face indices must be positive")
                faces.append([i - 1 for i in idx])
    if not vertices:
        raise ValueError(f"{path}: no vertices")
    if not faces:
        raise ValueError(f"{path}: no faces")
    v = np.asarray(vertices)
    t = np.asarray(faces, dtype=np.intp)
    if t.max() >= v.shape[0]:
        raise ValueError(f"{path}: face references vertex {int(t.max()) + 1} but only {v.shape[0]} exist")
    used = np.zeros(v.shape[0], dtype=bool)
    used[t.ravel()] = True
    if not used.all():
        raise ValueError(f"{path}: vertex {int(np.flatnonzero(~used)[0])} appears in no triangle")
    return SurfaceMesh(v, t)


def write_mesh(mesh: SurfaceMesh, path) -> None:
    """Write the OBJ subset emitted by this tool (9 significant digits)."""
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        for x, y, z in mesh.vertices:
            fh.write(f"v {x:.9g} {y:.9g} {z:.9g}\n")
        for a, b, c in mesh.triangles:
            fh.write(f"f {a + 1} {b + 1} {c + 1}\n")


def write_painted_mesh(mesh: SurfaceMesh, field: np.ndarray, cmap: ColorMap, path) -> int:
    """Write an ascii PLY with per-vertex colours; returns the clamped-value count.

    The clamp count is also recorded in a header comment, echoing plots that
    truncate exceptional values.
    """
    field = np.asarray(field, dtype=float)
    if field.shape != (mesh.n_vertices,):
        raise ValueError(f"field length {field.shape} does not match {mesh.n_vertices} vertices")
    colors, clamped = cmap.rgb(field)
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("ply\nformat ascii 1.0\n")
        fh.write(f"comment clamped {clamped}\n")
        fh.write(f"element vertex {mesh.n_vertices}\n")
        fh.write("property float x\nproperty float y\nproperty float z\n")
        fh.write("property uchar red\nproperty uchar green\nproperty uchar blue\n")
        fh.write(f"element face {mesh.n_triangles}\n")
        fh.write("property list uchar int vertex_indices\nend_header\n")
        for (x, y, z), (r, g, b) in zip(mesh.vertices, colors):
            fh.write(f"{x:.9g} {y:.9g} {z:.9g} {r} {g} {b}\n")
        for a, b, c in mesh.triangles:
            fh.write(f"3 {a} {b} {c}\n")
    return clamped


def _fpca_payload(model: FpcaModel) -> dict:
    return {
        "mean": model.mean.tolist(),
        "weights": model.weights.weights.tolist(),
        "weights_total_area": model.weights.total_area,
        "eigenfunctions": model.eigenfunctions.tolist(),
        "eigenvalues": model.eigenvalues.tolist(),
        "explained": model.explained.tolist(),
        "n_samples": model.n_samples,
        "total_variance": model.total_variance,
        "warnings": list(model.warnings),
    }


_FPCA_FIELDS = (
    "mean",
    "weights",
    "weights_total_area",
    "eigenfunctions",
    "eigenvalues",
    "explained",
    "n_samples",
    "total_variance",
    "warnings",
)
_CONTROL_FIELDS = (
    "fpca",
    "p",
    "chi2_threshold",
    "nu",
    "q95",
    "control_d",
    "control_r",
    "triangles",
    "control_asymmetry",
    "warnings",
)


def _require(payload: dict, fields, path) -> None:
    for name in fields:
        if name not in payload:
            raise ValueError(f"{path}: missing field {name!r}")


def _fpca_from_payload(payload: dict, path) -> FpcaModel:
    _require(payload, _FPCA_FIELDS, path)
    weights = AreaWeights(np.asarray(payload["weights"], dtype=float), float(payload["weights_total_area"]))
    return FpcaModel(
        mean=np.asarray(payload["mean"], dtype=float),
        weights=weights,
        eigenfunctions=np.asarray(payload["eigenfunctions"], dtype=float),
        eigenvalues=np.asarray(payload["eigenvalues"], dtype=float),
        explained=np.asarray(payload["explained"], dtype=float),
        n_samples=int(payload["n_samples"]),
        total_variance=float(payload["total_variance"]),
        warnings=tuple(payload["warnings"]),
    )


def save_model(model: FpcaModel | ControlModel, path) -> None:
    """Serialize a component or control model to the JSON schema (version 1)."""
    if isinstance(model, ControlModel):
        doc = {
            "schema_version": SCHEMA_VERSION,
            "kind": "control",
            "fpca": _fpca_payload(model.fpca),
            "p": model.p,
            "chi2_threshold": model.chi2_threshold,
            "nu": model.nu.tolist(),
            "q95": model.q95,
            "control_d": model.control_d.tolist(),
            "control_r": model.control_r.tolist(),
            "triangles": np.asarray(model.triangles).tolist(),
            "control_asymmetry": (
                None
                if model.control_asymmetry is None
                else {k: v.tolist() for k, v in sorted(model.control_asymmetry.items())}
            ),
            "warnings": list(model.warnings),
        }
    elif isinstance(model, FpcaModel):
        doc = {"schema_version": SCHEMA_VERSION, "kind": "fpca", **_fpca_payload(model)}
    else:
        raise TypeError(f"cannot serialize {type(model).__name__}")
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        json.dump(doc, fh, sort_keys=True, indent=2)
        fh.write("\n")


def load_model(path) -> FpcaModel | ControlModel:
    """Load a model written by :func:`save_model`, validating schema and invariants."""
    try:
        with open(path, "r", encoding="ascii") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as err:
        raise ValueError(f"{path}: truncated or malformed model file: {err}") from None
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(
            f"{path}: schema version {doc.get('schema_version')!r} is not supported (expected {SCHEMA_VERSION})"
        )
    kind = doc.get("kind")
    if kind == "fpca":
        return _fpca_from_payload(doc, path)
    if kind == "control":
        _require(doc, _CONTROL_FIELDS, path)
        asym = doc["control_asymmetry"]
        return ControlModel(
            fpca=_fpca_from_payload(doc["fpca"], path),
            p=int(doc["p"]),
            chi2_threshold=float(doc["chi2_threshold"]),
            nu=np.asarray(doc["nu"], dtype=float),
            q95=float(doc["q95"]),
            control_d=np.asarray(doc["control_d"], dtype=float),
            control_r=np.asarray(doc["control_r"], dtype=float),
            triangles=np.asarray(doc["triangles"], dtype=np.intp),
            control_asymmetry=(
                None if asym is None else {k: np.asarray(v, dtype=float) for k, v in asym.items()}
            ),
            warnings=tuple(doc["warnings"]),
        )
    raise ValueError(f"{path}: unknown model kind {kind!r}")


def _read_csv_rows(path, expected_columns: int):
    with open(path, "r", encoding="ascii", newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != expected_columns:
                raise ValueError(f"{path}: line {lineno}: expected {expected_columns} columns")
            yield lineno, [cell.strip() for cell in row]


def read_regions(path, n_vertices: int) -> dict[str, np.ndarray]:
    """Read a vertex_index,region_name CSV into a region map (header optional)."""
    regions: dict[str, list[int]] = {}
    for lineno, (idx_text, name) in _read_csv_rows(path, 2):
        if lineno == 1 and idx_text == "vertex_index":
            continue
        try:
            idx = int(idx_text)
        except ValueError:
            raise ValueError(f"{path}: line {lineno}: vertex index {idx_text!r} is not an integer") from None
        if not 0 <= idx < n_vertices:
            raise ValueError(f"{path}: line {lineno}: vertex {idx} outside [0, {n_vertices})")
        regions.setdefault(name, []).append(idx)
    return {name: np.unique(np.asarray(idx, dtype=np.intp)) for name, idx in regions.items()}


def write_regions(regions: dict[str, np.ndarray], path) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("vertex_index,region_name\n")
        for name in sorted(regions):
            for idx in np.asarray(regions[name], dtype=np.intp):
                fh.write(f"{int(idx)},{name}\n")


def read_pairing(path, n_vertices: int, plane_normal=(1.0, 0.0, 0.0)) -> BilateralPairing:
    """Read an index,mirror_index CSV into a BilateralPairing (header optional).

    Unlisted vertices default to midline (self-paired); the involution is
    validated on construction.
    """
    pair = np.arange(n_vertices, dtype=np.intp)
    for lineno, (a_text, b_text) in _read_csv_rows(path, 2):
        if lineno == 1 and a_text == "index":
            continue
        try:
            a, b = int(a_text), int(b_text)
        except ValueError:
            raise ValueError(f"{path}: line {lineno}: indices must be integers") from None
        for value in (a, b):
            if not 0 <= value < n_vertices:
                raise ValueError(f"{path}: line {lineno}: vertex {value} outside [0, {n_vertices})")
        pair[a] = b
    try:
        return BilateralPairing(pair, np.asarray(plane_normal, dtype=float))
    except ValueError as err:
        raise ValueError(f"{path}: {err}") from None


def write_pairing(pairing: BilateralPairing, path) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("index,mirror_index\n")
        for a, b in enumerate(pairing.pair):
            fh.write(f"{a},{int(b)}\n")


def read_weight_overrides(path, n_vertices: int) -> dict[int, float]:
    """Read a vertex_index,weight CSV of per-vertex area-weight overrides.

    Used for curve points carried as ordinary vertices whose area weight is
    set externally (e.g. to the average of the surface points).
    """
    overrides: dict[int, float] = {}
    for lineno, (idx_text, weight_text) in _read_csv_rows(path, 2):
        if lineno == 1 and idx_text == "vertex_index":
            continue
        try:
            idx = int(idx_text)
            weight = float(weight_text)
        except ValueError:
            raise ValueError(f"{path}: line {lineno}: expected integer index and numeric weight") from None
        if not 0 <= idx < n_vertices:
            raise ValueError(f"{path}: line {lineno}: vertex {idx} outside [0, {n_vertices})")
        if weight < 0:
            raise ValueError(f"{path}: line {lineno}: weight must be non-negative")
        overrides[idx] = weight
    return overrides


def read_labels(path) -> dict[str, str]:
    """Read a filename,label CSV keyed by mesh filename (header optional)."""
    labels: dict[str, str] = {}
    for lineno, (name, label) in _read_csv_rows(path, 2):
        if lineno == 1 and name == "filename":
            continue
        if name in labels:
            raise ValueError(f"{path}: line {lineno}: duplicate filename {name!r}")
        labels[name] = label
    return labels


def write_labels(labels: dict[str, str], path) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("filename,label\n")
        for name in sorted(labels):
            fh.write(f"{name},{labels[name]}\n")


def load_mesh_directory(directory) -> tuple[list[str], list[SurfaceMesh]]:
    """Load all .obj meshes in a directory, lexicographic filename order."""
    directory = Path(directory)
    names = sorted(p.name for p in directory.glob("*.obj"))
    if not names:
        raise ValueError(f"{directory}: no .obj meshes found")
    return names, [read_mesh(directory / name) for name in names]
