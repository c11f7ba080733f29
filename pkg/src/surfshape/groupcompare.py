"""Two-group inference in component spaces.

Global Hotelling T2 and per-component t statistics get their reference
distributions from label permutations, either with components fixed by a
label-blind PCA or re-derived from the pooled within-group covariance for
every permutation (the group-shape-space variant).
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .fpca import FpcaModel
from .mesh import AreaWeights
from .registration import vec_inverse

PERMUTATION_MODES = ("tangent_pca", "group_shape_space")

_CHUNK = 128  # permutations per evaluation batch

COMPONENT_P_VALUE_CAVEAT = (
    "per-component p-values are calibrated against the null hypothesis that "
    "all component means are identical simultaneously, not component-wise nulls"
)


@dataclass(frozen=True)
class GroupTestReport:
    """Permutation-test outcome for a two-group comparison on p components."""

    group_names: tuple[str, str]
    mode: str
    n_components: int
    global_stat: float
    component_stats: np.ndarray
    global_p: float
    component_p: np.ndarray
    bonferroni_alpha: float
    significant: tuple[int, ...]  # 1-based component indices
    n_perm: int
    seed: int | None
    permuted_global: np.ndarray
    permuted_components: np.ndarray
    note: str = COMPONENT_P_VALUE_CAVEAT

    def permuted_quartiles(self) -> dict[str, np.ndarray]:
        """(25%, 50%, 75%) of the permutation draws, for box-style displays."""
        q = (25.0, 50.0, 75.0)
        return {
            "global": np.percentile(self.permuted_global, q),
            "components": np.percentile(self.permuted_components, q, axis=0).T,
        }


@dataclass(frozen=True)
class SubspaceEffect:
    """Simultaneous +/- movement along a component subset, scaled to a common contour."""

    components: tuple[int, ...]
    plus_shape: np.ndarray
    minus_shape: np.ndarray
    multiplier: float


def _split_groups(scores_a: np.ndarray, scores_b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    a = np.atleast_2d(np.asarray(scores_a, dtype=float))
    b = np.atleast_2d(np.asarray(scores_b, dtype=float))
    if a.shape[1] != b.shape[1]:
        raise ValueError("score matrices disagree on the number of components")
    return a, b


def pooled_covariance(scores_a: np.ndarray, scores_b: np.ndarray) -> np.ndarray:
    a, b = _split_groups(scores_a, scores_b)
    na, nb = a.shape[0], b.shape[0]
    if na + nb < a.shape[1] + 2:
        raise ValueError("too few samples for the pooled covariance")
    ca = a - a.mean(axis=0)
    cb = b - b.mean(axis=0)
    return (ca.T @ ca + cb.T @ cb) / (na + nb - 2)


def hotelling_t2(scores_a: np.ndarray, scores_b: np.ndarray) -> float:
    """Two-sample Hotelling T2 on component scores with the pooled covariance."""
    a, b = _split_groups(scores_a, scores_b)
    na, nb = a.shape[0], b.shape[0]
    diff = a.mean(axis=0) - b.mean(axis=0)
    cov = pooled_covariance(a, b)
    try:
        solved = np.linalg.solve(cov, diff)
    except np.linalg.LinAlgError:
        raise ValueError("pooled covariance singular; reduce p") from None
    cond = np.linalg.cond(cov)
    if not np.isfinite(cond) or cond > 1e12:
        raise ValueError("pooled covariance singular; reduce p")
    return float(diff @ solved / (1.0 / na + 1.0 / nb))


def component_t(scores_a: np.ndarray, scores_b: np.ndarray, component: int) -> float:
    """Classical pooled two-sample t statistic on one component (1-based)."""
    a, b = _split_groups(scores_a, scores_b)
    if not 1 <= component <= a.shape[1]:
        raise ValueError(f"component {component} outside 1..{a.shape[1]}")
    xa = a[:, component - 1]
    xb = b[:, component - 1]
    na, nb = xa.size, xb.size
    pooled_var = (((xa - xa.mean()) ** 2).sum() + ((xb - xb.mean()) ** 2).sum()) / (na + nb - 2)
    if pooled_var <= 0:
        raise ValueError(f"component {component} has zero pooled variance")
    return float((xa.mean() - xb.mean()) / np.sqrt(pooled_var * (1.0 / na + 1.0 / nb)))


def _group_masks(labels) -> tuple[np.ndarray, tuple[str, str]]:
    labels = np.asarray(labels)
    names = np.unique(labels)
    if names.size != 2:
        raise ValueError(f"need exactly two groups, got {names.size}")
    mask_a = labels == names[0]
    if not mask_a.any() or mask_a.all():
        raise ValueError("both groups must be nonempty")
    return mask_a, (str(names[0]), str(names[1]))


def _batched_stats(scores: np.ndarray, masks_a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """sqrt(T2/p) and |t_l| for every row of group-a membership masks."""
    n, p = scores.shape
    na = int(masks_a[0].sum())
    nb = n - na
    inv_sizes = 1.0 / na + 1.0 / nb
    total_sum = scores.sum(axis=0)
    total_scatter = scores.T @ scores

    sums_a = masks_a.astype(float) @ scores
    means_a = sums_a / na
    means_b = (total_sum - sums_a) / nb
    diffs = means_a - means_b

    outer_a = np.einsum("ri,rj->rij", means_a, means_a)
    outer_b = np.einsum("ri,rj->rij", means_b, means_b)
    scatter = total_scatter - na * outer_a - nb * outer_b
    cov = scatter / (n - 2)
    try:
        solved = np.linalg.solve(cov, diffs[..., None])[..., 0]
    except np.linalg.LinAlgError:
        raise ValueError("pooled covariance singular; reduce p") from None
    t2 = np.einsum("ri,ri->r", diffs, solved) / inv_sizes

    pooled_sd = np.sqrt(np.einsum("rii->ri", cov))
    if (pooled_sd <= 0).any():
        raise ValueError("a component has zero pooled variance")
    t_abs = np.abs(diffs / (pooled_sd * np.sqrt(inv_sizes)))
    return np.sqrt(t2 / p), t_abs


def _within_group_eigen_stats(
    coords: np.ndarray, masks_a: np.ndarray, p: int
) -> tuple[np.ndarray, np.ndarray]:
    """Group-shape-space statistics: eigenbasis of the pooled within-group covariance
    recomputed per permutation (per mask row)."""
    n = coords.shape[0]
    na = int(masks_a[0].sum())
    nb = n - na
    inv_sizes = 1.0 / na + 1.0 / nb
    globals_out = np.empty(masks_a.shape[0])
    comps_out = np.empty((masks_a.shape[0], p))
    for r, mask in enumerate(masks_a):
        mean_a = coords[mask].mean(axis=0)
        mean_b = coords[~mask].mean(axis=0)
        within = coords - np.where(mask[:, None], mean_a, mean_b)
        singular_vals, vt = np.linalg.svd(within, full_matrices=False)[1:]
        lam = singular_vals**2 / (n - 2)
        if lam.size < p or lam[p - 1] <= lam[0] * 1e-12:
            raise ValueError(f"pooled within-group covariance has rank below p={p}")
        proj = (mean_a - mean_b) @ vt[:p].T
        t = proj / np.sqrt(lam[:p] * inv_sizes)
        comps_out[r] = np.abs(t)
        globals_out[r] = np.sqrt(float(t @ t) / p)
    return globals_out, comps_out


def permutation_test(
    tangent: np.ndarray,
    labels,
    p: int,
    weights: AreaWeights | None = None,
    n_perm: int = 500,
    seed: int | None = None,
    mode: str = "tangent_pca",
    bonferroni_alpha: float | None = None,
    threads: int = 1,
) -> GroupTestReport:
    """Two-group permutation test on the first ``p`` components of ``tangent`` data.

    ``tangent_pca`` fixes components by a label-blind weighted PCA and permutes
    labels over the resulting scores; ``group_shape_space`` re-extracts the
    leading eigenvectors of the pooled within-group covariance for every
    permutation. Empirical p-values use (1 + exceedances) / (1 + n_perm).
    """
    if mode not in PERMUTATION_MODES:
        raise ValueError(f"mode must be one of {PERMUTATION_MODES}")
    if n_perm < 1:
        raise ValueError("n_perm must be at least 1")
    tangent = np.asarray(tangent, dtype=float)
    if tangent.ndim != 2:
        raise ValueError("tangent must be (n, 3J) or (n, p)")
    n = tangent.shape[0]
    mask_a, group_names = _group_masks(labels)
    if p < 1:
        raise ValueError("p must be at least 1")
    if n < p + 2:
        raise ValueError("too few samples for p components")

    if weights is not None:
        w = weights.stacked
        if w.size != tangent.shape[1]:
            raise ValueError("weights do not match tangent dimension")
        data = tangent * np.sqrt(w)
    else:
        data = tangent

    rng = np.random.default_rng(seed)
    na = int(mask_a.sum())
    perm_masks = np.zeros((n_perm, n), dtype=bool)
    for r in range(n_perm):
        perm_masks[r, rng.permutation(n)[:na]] = True

    centered = data - data.mean(axis=0)
    # all group mean differences and within-group covariances live in the span
    # of the centered rows; reduce once so per-permutation work is O(n^2)
    u, s, _ = np.linalg.svd(centered, full_matrices=False)
    rank = int(np.count_nonzero(s > s[0] * 1e-12)) if s.size and s[0] > 0 else 0
    coords = u[:, :rank] * s[:rank]

    if mode == "tangent_pca":
        if rank < p:
            raise ValueError(f"data rank {rank} is below p={p}")
        scores = _pca_scores(coords, p)
        stats = lambda masks: _batched_stats(scores, masks)  # noqa: E731
    else:
        stats = lambda masks: _within_group_eigen_stats(coords, masks, p)  # noqa: E731

    observed_global, observed_comps = (x[0] for x in stats(mask_a[None, :]))
    # fixed-size chunks keep BLAS batch shapes (and therefore rounding) identical
    # however many threads evaluate them; reduction stays in permutation order
    chunks = [perm_masks[i : i + _CHUNK] for i in range(0, n_perm, _CHUNK)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(stats, chunks))
    else:
        parts = [stats(c) for c in chunks]
    permuted_global = np.concatenate([g for g, _ in parts])
    permuted_comps = np.concatenate([c for _, c in parts])

    global_p = float((1 + (permuted_global >= observed_global).sum()) / (1 + n_perm))
    component_p = (1 + (permuted_comps >= observed_comps).sum(axis=0)) / (1 + n_perm)
    alpha = 0.05 / p if bonferroni_alpha is None else float(bonferroni_alpha)
    significant = tuple(int(i + 1) for i in np.flatnonzero(component_p < alpha))

    return GroupTestReport(
        group_names=group_names,
        mode=mode,
        n_components=p,
        global_stat=float(observed_global),
        component_stats=observed_comps,
        global_p=global_p,
        component_p=component_p,
        bonferroni_alpha=alpha,
        significant=significant,
        n_perm=n_perm,
        seed=seed,
        permuted_global=permuted_global,
        permuted_components=permuted_comps,
    )


def _pca_scores(coords: np.ndarray, p: int) -> np.ndarray:
    """Scores on the first p label-blind principal components of reduced coordinates."""
    _, s, vt = np.linalg.svd(coords - coords.mean(axis=0), full_matrices=False)
    return (coords - coords.mean(axis=0)) @ vt[:p].T


def align_component_signs(
    model: FpcaModel,
    score_rows: np.ndarray,
    labels,
    reference_group: str,
) -> tuple[FpcaModel, np.ndarray]:
    """Flip eigenfunctions (and score columns) so the reference group's mean score
    is the higher one on every component."""
    score_rows = np.asarray(score_rows, dtype=float)
    labels = np.asarray(labels)
    ref_mask = labels == reference_group
    if not ref_mask.any():
        raise ValueError(f"no samples labelled {reference_group!r}")
    if ref_mask.all():
        raise ValueError("reference group covers the whole sample")
    diff = score_rows[ref_mask].mean(axis=0) - score_rows[~ref_mask].mean(axis=0)
    flip = diff < 0
    eigenfunctions = model.eigenfunctions.copy()
    eigenfunctions[flip] *= -1.0
    adjusted_scores = score_rows.copy()
    adjusted_scores[:, flip] *= -1.0
    return replace(model, eigenfunctions=eigenfunctions), adjusted_scores


def combined_effect_shape(model: FpcaModel, significant, c: float = 2.0) -> SubspaceEffect:
    """Simultaneous movement of +/- c sqrt(lambda_k)/sqrt(q) along each significant
    component (1-based indices), landing on the same normal contour as single-component
    +/- c displays."""
    components = tuple(sorted(int(k) for k in significant))
    if not components:
        raise ValueError("significant component set is empty")
    if components[0] < 1 or components[-1] > model.n_components:
        raise ValueError(f"components outside 1..{model.n_components}")
    q = len(components)
    idx = np.asarray(components) - 1
    displacement = (c * np.sqrt(model.eigenvalues[idx]) / np.sqrt(q)) @ model.eigenfunctions[idx]
    offset = vec_inverse(displacement)
    return SubspaceEffect(
        components=components,
        plus_shape=model.mean + offset,
        minus_shape=model.mean - offset,
        multiplier=c,
    )


def affine_nonaffine_split(
    aligned: np.ndarray, mean: np.ndarray, weights: AreaWeights | None = None
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Split aligned shapes into affine fits of the mean and non-affine residual shapes.

    Regresses each shape on the mean, X_i = mean @ alpha_i + residual, and
    returns (affine shapes, non-affine shapes, coefficients). The default is
    the plain least-squares regression, whose residuals are column-orthogonal
    to the mean; passing area ``weights`` switches to the area-weighted
    regression (orthogonality then holds in the weighted inner product).
    """
    aligned = np.asarray(aligned, dtype=float)
    mean = np.asarray(mean, dtype=float)
    if aligned.ndim != 3 or aligned.shape[1:] != mean.shape:
        raise ValueError("aligned must be (n, J, 3) matching the mean")
    if weights is None:
        design = mean
    else:
        if weights.weights.shape[0] != mean.shape[0]:
            raise ValueError("weights do not match the mean's vertex count")
        design = weights.weights[:, None] * mean
    gram = design.T @ mean
    if np.linalg.cond(gram) > 1e12:
        raise ValueError("mean shape is planar-degenerate; affine regression is singular")
    alphas = np.linalg.solve(gram, np.einsum("jk,njl->nkl", design, aligned))
    affine = np.einsum("jk,nkl->njl", mean, alphas)
    nonaffine = mean + (aligned - affine)
    return affine, nonaffine, alphas
