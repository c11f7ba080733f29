"""Individual-level assessment: bilateral asymmetry, closest controls, integrated reports.

Asymmetry compares a shape with its Procrustes-matched mirror image. The
closest-control construction shrinks an individual toward the control mean
until it sits on the control population's 95% boundary, separately in
component space (chi-square ellipsoid) and in the residual space left over
by the components.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .chi2 import chi_square_quantile
from .fpca import FpcaModel, fit_fpca, scores_from_tangent
from .mesh import (
    AreaWeights,
    BilateralPairing,
    ShapeSample,
    SurfaceMesh,
    shape_difference_field,
    vertex_areas,
)
from .registration import (
    SimilarityTransform,
    tangent_coordinates,
    vec,
    vec_inverse,
    weighted_gpa,
    weighted_opa,
)


@dataclass(frozen=True)
class AsymmetryReport:
    """Asymmetry scores (mm) for a shape: global, per region, and per vertex."""

    global_score: float
    region_scores: dict[str, float]
    matched_reflection: np.ndarray
    per_vertex_distance: np.ndarray
    control_percentiles: dict[str, float] | None = None


@dataclass(frozen=True)
class ControlModel:
    """Control-population model for closest-control assessment.

    Components are fitted on controls only; ``nu`` holds per-vertex standard
    deviations of control residual lengths, ``q95`` the 95th percentile of the
    controls' standardized residual scores, and ``chi2_threshold`` the 95%
    chi-square bound for the component-space Mahalanobis distance.
    """

    fpca: FpcaModel
    p: int
    chi2_threshold: float
    nu: np.ndarray
    q95: float
    control_d: np.ndarray
    control_r: np.ndarray
    triangles: np.ndarray
    control_asymmetry: dict[str, np.ndarray] | None = None
    warnings: tuple[str, ...] = ()

    def mean_mesh(self) -> SurfaceMesh:
        return SurfaceMesh(self.fpca.mean, self.triangles)


@dataclass(frozen=True)
class ClosestControlResult:
    """Closest-control decomposition of one case against a ControlModel."""

    d: float
    alpha1: float
    r: float
    alpha2: float
    cc_p: np.ndarray
    cc: np.ndarray
    within_component_range: bool
    within_residual_range: bool
    scores: np.ndarray
    aligned_case: np.ndarray
    transform: SimilarityTransform


@dataclass(frozen=True)
class AssessmentArtifact:
    """A mesh to emit with the assessment document; painted when a field is attached."""

    mesh: SurfaceMesh
    field: np.ndarray | None = None


@dataclass(frozen=True)
class AssessmentDocument:
    """Machine-readable integrated assessment plus the meshes backing its figures."""

    document: dict
    artifacts: dict[str, AssessmentArtifact]


def reflect_relabel(shape: np.ndarray, pairing: BilateralPairing) -> np.ndarray:
    """Mirror a shape through the pairing's plane and swap left/right vertex labels."""
    shape = np.asarray(shape, dtype=float)
    if shape.ndim != 2 or shape.shape != (pairing.pair.size, 3):
        raise ValueError(f"shape must be ({pairing.pair.size}, 3), got {shape.shape}")
    n = pairing.plane_normal
    reflected = shape - 2.0 * np.outer(shape @ n, n)
    return reflected[pairing.pair]


def asymmetry_score(
    mesh: SurfaceMesh,
    pairing: BilateralPairing,
    region: np.ndarray | None = None,
    allow_scaling: bool = True,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Asymmetry of a surface: RMS distance to its matched mirror image (mm).

    The mirror image is reflected, relabelled and Procrustes-matched onto the
    original. The squared distances are averaged with area weights taken from
    the surface halfway between the shape and its matched reflection, then
    square-rooted so the score is on the coordinate scale. ``region``
    restricts the average to a vertex subset (registration stays global).

    Returns (score, matched reflection, per-vertex distance field).
    """
    x = mesh.vertices
    mirrored = reflect_relabel(x, pairing)
    target_weights = vertex_areas(mesh)
    # the configuration is already reflected, so leave the orthogonal part free
    fit = weighted_opa(mirrored, x, target_weights, allow_scaling=allow_scaling, allow_reflection=True)
    matched = fit.fitted
    halfway = mesh.with_vertices(0.5 * (x + matched))
    a = vertex_areas(halfway).weights
    sq = np.einsum("jk,jk->j", x - matched, x - matched)
    if region is not None:
        region = np.asarray(region, dtype=np.intp)
        if region.size == 0:
            raise ValueError("region is empty")
        if region.min() < 0 or region.max() >= mesh.n_vertices:
            raise ValueError("region references a vertex outside the mesh")
        a_sel, sq_sel = a[region], sq[region]
    else:
        a_sel, sq_sel = a, sq
    denom = a_sel.sum()
    if denom <= 0:
        raise ValueError("region has zero surface area")
    score = float(np.sqrt(a_sel @ sq_sel / denom))
    return score, matched, np.sqrt(sq)


def empirical_percentile(value: float, reference: np.ndarray) -> float:
    """Percentile of ``value`` in an empirical distribution, interpolating linearly
    between order statistics."""
    ref = np.sort(np.asarray(reference, dtype=float))
    if ref.size == 0:
        raise ValueError("empty reference sample")
    if ref.size == 1:
        return 50.0 if value == ref[0] else (0.0 if value < ref[0] else 100.0)
    return float(np.interp(value, ref, np.linspace(0.0, 100.0, ref.size)))


def asymmetry_report(
    mesh: SurfaceMesh,
    pairing: BilateralPairing,
    regions: dict[str, np.ndarray] | None = None,
    control_scores: dict[str, np.ndarray] | None = None,
    allow_scaling: bool = True,
    register_per_region: bool = False,
) -> AsymmetryReport:
    """Global plus per-region asymmetry scores, optionally placed against controls.

    By default one global registration is shared by all regions;
    ``register_per_region`` instead re-matches the mirror image using each
    region's own vertices and weights.
    """
    if regions is None:
        regions = mesh.regions or {}
    global_score, matched, field = asymmetry_score(mesh, pairing, allow_scaling=allow_scaling)
    region_scores: dict[str, float] = {}
    for name, idx in regions.items():
        if register_per_region:
            region_scores[name] = _region_registered_score(mesh, pairing, idx, allow_scaling)
        else:
            region_scores[name], _, _ = _restricted_score(mesh, matched, idx)
    percentiles = None
    if control_scores is not None:
        percentiles = {}
        if "global" in control_scores:
            percentiles["global"] = empirical_percentile(global_score, control_scores["global"])
        for name, score in region_scores.items():
            if name in control_scores:
                percentiles[name] = empirical_percentile(score, control_scores[name])
    return AsymmetryReport(
        global_score=global_score,
        region_scores=region_scores,
        matched_reflection=matched,
        per_vertex_distance=field,
        control_percentiles=percentiles,
    )


def _restricted_score(mesh: SurfaceMesh, matched: np.ndarray, region) -> tuple[float, np.ndarray, np.ndarray]:
    x = mesh.vertices
    halfway = mesh.with_vertices(0.5 * (x + matched))
    a = vertex_areas(halfway).weights
    region = np.asarray(region, dtype=np.intp)
    sq = np.einsum("jk,jk->j", x - matched, x - matched)
    denom = a[region].sum()
    if denom <= 0:
        raise ValueError("region has zero surface area")
    return float(np.sqrt(a[region] @ sq[region] / denom)), matched, np.sqrt(sq)


def _region_registered_score(mesh, pairing, region, allow_scaling) -> float:
    region = np.asarray(region, dtype=np.intp)
    x = mesh.vertices
    mirrored = reflect_relabel(x, pairing)
    full_weights = vertex_areas(mesh).weights
    w = np.zeros_like(full_weights)
    w[region] = full_weights[region]
    fit = weighted_opa(
        mirrored, x, AreaWeights.from_weights(w), allow_scaling=allow_scaling, allow_reflection=True
    )
    halfway = mesh.with_vertices(0.5 * (x + fit.fitted))
    a = vertex_areas(halfway).weights
    sq = np.einsum("jk,jk->j", x - fit.fitted, x - fit.fitted)
    denom = a[region].sum()
    if denom <= 0:
        raise ValueError("region has zero surface area")
    return float(np.sqrt(a[region] @ sq[region] / denom))


def _residual_lengths(tangent_rows: np.ndarray, model: FpcaModel, score_rows: np.ndarray) -> np.ndarray:
    """Per-vertex Euclidean lengths of the residual after removing the component fit."""
    residual = tangent_rows - score_rows @ model.eigenfunctions
    n, m = residual.shape
    per_vertex = residual.reshape(n, 3, m // 3).transpose(0, 2, 1)
    return np.linalg.norm(per_vertex, axis=2)


def sanitize_residual_sds(nu: np.ndarray, tiny: float) -> tuple[np.ndarray, tuple[str, ...]]:
    """Replace degenerate per-vertex residual sds so standardization never divides by ~0.

    Vertices whose sd is at or below ``tiny`` get the minimum non-degenerate
    sd; if every vertex is degenerate the sds become 1 (unstandardized
    lengths). Returns the cleaned sds and any warnings raised.
    """
    degenerate = nu <= tiny
    if not degenerate.any():
        return nu, ()
    positive = nu[~degenerate]
    if positive.size == 0:
        return np.ones_like(nu), ("controls have no residual variation; nu set to 1",)
    message = (
        f"{int(degenerate.sum())} vertices had no residual variation; "
        "replaced by the minimum positive value"
    )
    return np.where(degenerate, positive.min(), nu), (message,)


def fit_control_model(
    controls: ShapeSample,
    variance_threshold: float = 0.80,
    pairing: BilateralPairing | None = None,
    regions: dict[str, np.ndarray] | None = None,
    max_iter: int = 100,
    tol: float = 1e-10,
) -> ControlModel:
    """Fit the closest-control machinery on a control cohort.

    Controls are registered internally; the component count is the smallest
    one explaining at least ``variance_threshold`` of the weighted variance.
    When a bilateral pairing is available (argument or sample attribute),
    control asymmetry score distributions are recorded for percentile lookups.
    """
    if controls.n_shapes < 5:
        raise ValueError("need at least 5 control shapes")
    gpa = weighted_gpa(controls, max_iter=max_iter, tol=tol)
    tangent = tangent_coordinates(gpa.aligned, gpa.mean)
    model = fit_fpca(tangent, gpa.mean_weights, k=variance_threshold, mean_shape=gpa.mean)
    p = model.n_components
    threshold = chi_square_quantile(p, 0.95)

    score_rows = scores_from_tangent(model, tangent)
    d = np.einsum("nk,k->n", score_rows**2, 1.0 / model.eigenvalues)
    lengths = _residual_lengths(tangent, model, score_rows)
    nu = lengths.std(axis=0, ddof=1)

    # residual sds at alignment-rounding scale are degenerate, not informative
    tiny = 1e-12 * np.sqrt(model.total_variance / model.mean.shape[0])
    nu, warnings = sanitize_residual_sds(nu, tiny)
    r = (lengths / nu).mean(axis=1)
    q95 = float(np.percentile(r, 95.0))

    pairing = pairing if pairing is not None else controls.pairing
    control_asym = None
    if pairing is not None:
        if regions is None:
            regions = controls.meshes[0].regions or {}
        control_asym = {"global": np.empty(controls.n_shapes)}
        for name in regions:
            control_asym[name] = np.empty(controls.n_shapes)
        for i, mesh in enumerate(controls.meshes):
            report = asymmetry_report(mesh, pairing, regions)
            control_asym["global"][i] = report.global_score
            for name, value in report.region_scores.items():
                control_asym[name][i] = value
        control_asym = {name: np.sort(v) for name, v in control_asym.items()}

    return ControlModel(
        fpca=model,
        p=p,
        chi2_threshold=threshold,
        nu=nu,
        q95=q95,
        control_d=d,
        control_r=r,
        triangles=controls.meshes[0].triangles,
        control_asymmetry=control_asym,
        warnings=tuple(warnings),
    )


def assess_individual(model: ControlModel, case: SurfaceMesh) -> ClosestControlResult:
    """Closest-control assessment of one case against a fitted control model.

    The case is registered onto the control mean, scored in the control
    component space, and shrunk (component scores toward zero, residual toward
    the mean) exactly as far as needed to reach the controls' 95% ranges.
    """
    if case.n_vertices != model.fpca.mean.shape[0]:
        raise ValueError(
            f"case has {case.n_vertices} vertices, control model expects {model.fpca.mean.shape[0]}"
        )
    fit = weighted_opa(case.vertices, model.fpca.mean, model.fpca.weights, allow_scaling=True)
    aligned = fit.fitted
    tangent = vec(aligned - model.fpca.mean)[None, :]
    v = scores_from_tangent(model.fpca, tangent)[0]

    d = float(v**2 @ (1.0 / model.fpca.eigenvalues))
    within_components = d <= model.chi2_threshold
    alpha1 = 1.0 if within_components else float(np.sqrt(model.chi2_threshold / d))
    cc_p = model.fpca.mean + vec_inverse((alpha1 * v) @ model.fpca.eigenfunctions)

    residual = vec_inverse(tangent[0] - v @ model.fpca.eigenfunctions)
    lengths = np.linalg.norm(residual, axis=1)
    r = float((lengths / model.nu).mean())
    within_residual = r <= model.q95
    alpha2 = 1.0 if within_residual else float(model.q95 / r)
    cc = cc_p + alpha2 * residual

    return ClosestControlResult(
        d=d,
        alpha1=alpha1,
        r=r,
        alpha2=alpha2,
        cc_p=cc_p,
        cc=cc,
        within_component_range=bool(within_components),
        within_residual_range=bool(within_residual),
        scores=v,
        aligned_case=aligned,
        transform=fit.transform,
    )


def integrated_assessment(
    model: ControlModel,
    pre: SurfaceMesh,
    post: SurfaceMesh,
    pairing: BilateralPairing,
    regions: dict[str, np.ndarray] | None = None,
) -> AssessmentDocument:
    """Bundle asymmetry and closest-control findings for pre/post shapes.

    The document is plain JSON-serializable data; artifacts carry the aligned
    case, its closest control, and painted difference/asymmetry fields for
    each time point.
    """
    if regions is None:
        regions = pre.regions or {}
    document: dict = {
        "schema_version": 1,
        "regions": sorted(regions),
        "chi2_threshold": model.chi2_threshold,
        "q95": model.q95,
        "p": model.p,
        "timepoints": {},
    }
    artifacts: dict[str, AssessmentArtifact] = {}
    for name, mesh in (("pre", pre), ("post", post)):
        asym = asymmetry_report(mesh, pairing, regions, control_scores=model.control_asymmetry)
        cc = assess_individual(model, mesh)
        case_mesh = mesh.with_vertices(cc.aligned_case)
        cc_mesh = mesh.with_vertices(cc.cc)
        normal_field = shape_difference_field(case_mesh, cc_mesh, "normal")
        entry = {
            "asymmetry": {
                "global": _score_entry(asym.global_score, asym.control_percentiles, "global"),
                "regions": {
                    r: _score_entry(asym.region_scores[r], asym.control_percentiles, r)
                    for r in sorted(regions)
                },
            },
            "closest_control": {
                "d": cc.d,
                "alpha1": cc.alpha1,
                "r": cc.r,
                "alpha2": cc.alpha2,
                "within_component_range": cc.within_component_range,
                "within_residual_range": cc.within_residual_range,
            },
            "difference_to_closest_control": {
                "normal_min": float(normal_field.min()),
                "normal_max": float(normal_field.max()),
                "normal_rms": float(np.sqrt(np.mean(normal_field**2))),
            },
        }
        document["timepoints"][name] = entry
        artifacts[f"{name}_case"] = AssessmentArtifact(case_mesh)
        artifacts[f"{name}_closest_control"] = AssessmentArtifact(cc_mesh)
        artifacts[f"{name}_vs_closest_control_normal"] = AssessmentArtifact(case_mesh, normal_field)
        artifacts[f"{name}_asymmetry_distance"] = AssessmentArtifact(mesh, asym.per_vertex_distance)
    return AssessmentDocument(document=document, artifacts=artifacts)


def _score_entry(score: float, percentiles: dict[str, float] | None, key: str) -> dict:
    entry = {"score": score}
    if percentiles is not None and key in percentiles:
        entry["control_percentile"] = percentiles[key]
    return entry
