"""Command-line front end: one subcommand per pipeline stage.

Every run writes its artifacts plus a manifest.json recording the tool
version, resolved options, and seed; identical options and seed give
byte-identical artifacts (only the manifest timestamp differs). Options can
come from a flat ``key = value`` config file via --config, with command-line
flags taking precedence.

Exit codes: 0 success, 2 validation error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from contextlib import contextmanager
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .fpca import fit_fpca, grand_tour, scores_from_tangent
from .groupcompare import affine_nonaffine_split, permutation_test
from .individual import asymmetry_report, fit_control_model, integrated_assessment
from .io import (
    ColorMap,
    load_mesh_directory,
    load_model,
    read_labels,
    read_mesh,
    read_pairing,
    read_regions,
    read_weight_overrides,
    save_model,
    write_labels,
    write_mesh,
    write_painted_mesh,
    write_pairing,
    write_regions,
)
from .mesh import ShapeSample, SurfaceMesh, shape_difference_field
from .registration import tangent_coordinates, weighted_gpa
from .synth import SynthConfig, synth_cohort
from .warp import fit_tps, apply_warp

THREADS_ENV = "SURFSHAPE_THREADS"


class ValidationFailure(Exception):
    """Bad inputs or options; maps to exit code 2."""


@contextmanager
def validation_phase():
    """Everything raised while loading/validating inputs is a validation failure."""
    try:
        yield
    except ValidationFailure:
        raise
    except Exception as err:
        raise ValidationFailure(str(err)) from err


def _threads() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ValidationFailure(f"{THREADS_ENV} must be an integer, got {raw!r}") from None


def parse_config_file(path) -> dict[str, str]:
    """Flat ``key = value`` config; '#' starts a comment; keys use - or _."""
    values: dict[str, str] = {}
    with open(path, "r", encoding="ascii") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValidationFailure(f"{path}: line {lineno}: expected key = value")
            key, value = line.split("=", 1)
            values[key.strip().replace("-", "_")] = value.strip()
    return values


def _parse_bool(text: str) -> bool:
    lowered = text.lower()
    if lowered in ("true", "1", "yes", "on"):
        return True
    if lowered in ("false", "0", "no", "off"):
        return False
    raise ValidationFailure(f"expected a boolean, got {text!r}")


def merge_config(args: argparse.Namespace, parser: argparse.ArgumentParser, config: dict[str, str]) -> None:
    """Fill options not given on the command line from the config file."""
    actions = {a.dest: a for a in parser._actions if a.dest not in ("help", "config")}
    unknown = set(config) - set(actions)
    if unknown:
        raise ValidationFailure(f"unknown config keys: {', '.join(sorted(unknown))}")
    for key, text in config.items():
        action = actions[key]
        if getattr(args, key) != action.default:
            continue  # command line wins
        if isinstance(action, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
            setattr(args, key, _parse_bool(text))
        elif action.type is not None:
            try:
                setattr(args, key, action.type(text))
            except ValueError as err:
                raise ValidationFailure(f"config key {key}: {err}") from None
        else:
            setattr(args, key, text)


def require(args: argparse.Namespace, *names: str) -> None:
    missing = [n for n in names if getattr(args, n) is None]
    if missing:
        raise ValidationFailure("missing required options: " + ", ".join("--" + n.replace("_", "-") for n in missing))


def _comma_floats(text: str) -> tuple[float, ...]:
    return tuple(float(p) for p in text.split(","))


def _comma_ints(text: str) -> tuple[int, ...]:
    return tuple(int(p) for p in text.split(","))


def _out_dir(args) -> Path:
    require(args, "out")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def write_manifest(out: Path, command: str, args: argparse.Namespace) -> None:
    options = {}
    for key, value in sorted(vars(args).items()):
        if key in ("handler", "command", "config"):
            continue
        options[key] = str(value) if isinstance(value, Path) else value
    doc = {
        "tool": "surfshape",
        "version": __version__,
        "command": command,
        "created_at": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "options": options,
        "seed": options.get("seed"),
    }
    with open(out / "manifest.json", "w", encoding="ascii", newline="\n") as fh:
        json.dump(doc, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _json_dump(doc, path) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        json.dump(doc, fh, sort_keys=True, indent=2, default=_json_default)
        fh.write("\n")


def _json_default(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.floating, np.integer, np.bool_)):
        return value.item()
    raise TypeError(f"cannot serialize {type(value).__name__}")


def _load_cohort(args) -> tuple[list[str], ShapeSample]:
    require(args, "meshes")
    names, meshes = load_mesh_directory(args.meshes)
    labels = None
    if getattr(args, "labels", None):
        table = read_labels(args.labels)
        missing = [n for n in names if n not in table]
        if missing:
            raise ValidationFailure(f"labels file misses entries for: {', '.join(missing)}")
        labels = tuple(table[n] for n in names)
    return names, ShapeSample(tuple(meshes), labels=labels)


def _run_gpa(sample: ShapeSample, args):
    overrides = None
    if getattr(args, "weight_overrides", None):
        with validation_phase():
            overrides = read_weight_overrides(args.weight_overrides, sample.n_vertices)
    return weighted_gpa(
        sample,
        max_iter=args.max_iter,
        tol=args.tol,
        size_constraint=args.size_constraint,
        allow_scaling=not args.rigid,
        weight_overrides=overrides,
    )


def _add_gpa_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--max-iter", type=int, default=100, help="GPA iteration cap")
    parser.add_argument("--tol", type=float, default=1e-10, help="relative objective change to stop")
    parser.add_argument(
        "--size-constraint",
        choices=("unit_area", "initial_mean_area"),
        default="unit_area",
        help="mean-surface size constraint",
    )
    parser.add_argument("--rigid", action="store_true", help="rigid registration (no scaling)")
    parser.add_argument(
        "--weight-overrides", type=Path, default=None,
        help="vertex_index,weight CSV replacing computed area weights (curve points)",
    )


# ---------------------------------------------------------------- subcommands


def cmd_register(args) -> None:
    with validation_phase():
        out = _out_dir(args)
        names, sample = _load_cohort(args)
    result = _run_gpa(sample, args)
    aligned_dir = out / "aligned"
    aligned_dir.mkdir(exist_ok=True)
    for name, verts in zip(names, result.aligned):
        write_mesh(sample.meshes[0].with_vertices(verts), aligned_dir / name)
    write_mesh(sample.meshes[0].with_vertices(result.mean), out / "mean.obj")
    with open(out / "transforms.csv", "w", encoding="ascii", newline="\n") as fh:
        fh.write("filename,scale," + ",".join(f"r{i}{j}" for i in range(3) for j in range(3)) + ",tx,ty,tz\n")
        for name, t in zip(names, result.transforms):
            cells = [f"{t.scale:.17g}"]
            cells += [f"{v:.17g}" for v in t.rotation.ravel()]
            cells += [f"{v:.17g}" for v in t.translation]
            fh.write(name + "," + ",".join(cells) + "\n")
    with open(out / "objective.csv", "w", encoding="ascii", newline="\n") as fh:
        fh.write("iteration,objective\n")
        for i, value in enumerate(result.objective_trace, start=1):
            fh.write(f"{i},{value:.17g}\n")
    write_manifest(out, "register", args)
    print(f"registered {len(names)} shapes in {result.iterations} iterations (converged={result.converged})")


def cmd_pca(args) -> None:
    with validation_phase():
        out = _out_dir(args)
        names, sample = _load_cohort(args)
        if args.components is not None and args.variance is not None:
            raise ValidationFailure("give either --components or --variance, not both")
        k = args.components if args.components is not None else (args.variance or 0.80)
    gpa = _run_gpa(sample, args)
    tangent = tangent_coordinates(gpa.aligned, gpa.mean)
    model = fit_fpca(tangent, gpa.mean_weights, k=k, mean_shape=gpa.mean)
    save_model(model, out / "model.json")
    write_mesh(sample.meshes[0].with_vertices(gpa.mean), out / "mean.obj")
    score_rows = scores_from_tangent(model, tangent)
    with open(out / "scores.csv", "w", encoding="ascii", newline="\n") as fh:
        fh.write("filename," + ",".join(f"pc{k + 1}" for k in range(model.n_components)) + "\n")
        for name, row in zip(names, score_rows):
            fh.write(name + "," + ",".join(f"{v:.17g}" for v in row) + "\n")
    write_manifest(out, "pca", args)
    print(f"fitted {model.n_components} components explaining {model.explained[-1]:.1%} of variance")


def cmd_tour(args) -> None:
    with validation_phase():
        out = _out_dir(args)
        require(args, "model", "topology")
        model = load_model(args.model)
        topology = read_mesh(args.topology)
        if topology.n_vertices != model.mean.shape[0]:
            raise ValidationFailure("topology mesh does not match the model's vertex count")
        p = args.components if args.components is not None else model.n_components
    tour = grand_tour(model, p=p, n_stops=args.stops, seed=args.seed, frames_per_leg=args.frames_per_leg)
    for i, frame in enumerate(tour.frames):
        write_mesh(topology.with_vertices(frame), out / f"tour_{i:04d}.obj")
    _json_dump(
        {
            "n_frames": int(tour.frames.shape[0]),
            "stop_indices": tour.stop_indices,
            "z_vectors": tour.z_vectors,
            "seed": args.seed,
            "components": p,
        },
        out / "tour.json",
    )
    write_manifest(out, "tour", args)
    print(f"wrote {tour.frames.shape[0]} tour frames")


def cmd_compare(args) -> None:
    with validation_phase():
        out = _out_dir(args)
        require(args, "labels", "p")
        names, sample = _load_cohort(args)
        if sample.labels is None:
            raise ValidationFailure("compare needs a labels file")
    gpa = _run_gpa(sample, args)
    tangent = tangent_coordinates(gpa.aligned, gpa.mean)
    report = permutation_test(
        tangent,
        sample.labels,
        p=args.p,
        weights=gpa.mean_weights,
        n_perm=args.n_perm,
        seed=args.seed,
        mode=args.mode,
        bonferroni_alpha=args.bonferroni,
        threads=_threads(),
    )
    quartiles = report.permuted_quartiles()
    _json_dump(
        {
            "groups": list(report.group_names),
            "mode": report.mode,
            "n_components": report.n_components,
            "global_stat": report.global_stat,
            "global_p": report.global_p,
            "component_stats": report.component_stats,
            "component_p": report.component_p,
            "bonferroni_alpha": report.bonferroni_alpha,
            "significant_components": list(report.significant),
            "n_perm": report.n_perm,
            "seed": report.seed,
            "permuted_quartiles": {"global": quartiles["global"], "components": quartiles["components"]},
            "note": report.note,
        },
        out / "report.json",
    )
    with open(out / "report.csv", "w", encoding="ascii", newline="\n") as fh:
        fh.write("component,statistic,p_value,significant\n")
        fh.write(f"global,{report.global_stat:.17g},{report.global_p:.17g},\n")
        for i in range(report.n_components):
            flag = "true" if (i + 1) in report.significant else "false"
            fh.write(f"{i + 1},{report.component_stats[i]:.17g},{report.component_p[i]:.17g},{flag}\n")
    write_manifest(out, "compare", args)
    print(
        f"global statistic {report.global_stat:.4g} (p={report.global_p:.4g}); "
        f"significant components: {list(report.significant) or 'none'}"
    )


def cmd_split_affine(args) -> None:
    with validation_phase():
        out = _out_dir(args)
        names, sample = _load_cohort(args)
    gpa = _run_gpa(sample, args)
    affine, nonaffine, alphas = affine_nonaffine_split(gpa.aligned, gpa.mean)
    for sub, stack in (("affine", affine), ("nonaffine", nonaffine)):
        directory = out / sub
        directory.mkdir(exist_ok=True)
        for name, verts in zip(names, stack):
            write_mesh(sample.meshes[0].with_vertices(verts), directory / name)
    write_mesh(sample.meshes[0].with_vertices(gpa.mean), out / "mean.obj")
    _json_dump({"filenames": names, "coefficients": alphas}, out / "coefficients.json")
    write_manifest(out, "split-affine", args)
    print(f"split {len(names)} shapes into affine and non-affine parts")


def cmd_asymmetry(args) -> None:
    with validation_phase():
        out = _out_dir(args)
        require(args, "meshes", "pairing")
        names, meshes = load_mesh_directory(args.meshes)
        pairing = read_pairing(args.pairing, meshes[0].n_vertices)
        regions = read_regions(args.regions, meshes[0].n_vertices) if args.regions else {}
    rows = []
    for name, mesh in zip(names, meshes):
        report = asymmetry_report(
            mesh,
            pairing,
            regions,
            allow_scaling=not args.rigid,
            register_per_region=args.per_region_registration,
        )
        rows.append((name, "global", report.global_score))
        rows.extend((name, region, report.region_scores[region]) for region in sorted(report.region_scores))
        field = report.per_vertex_distance
        hi = float(field.max())
        cmap = ColorMap("sequential", lo=0.0, hi=hi if hi > 0 else 1.0)
        write_painted_mesh(mesh, field, cmap, out / f"{Path(name).stem}_asymmetry.ply")
        write_mesh(mesh.with_vertices(report.matched_reflection), out / f"{Path(name).stem}_reflection.obj")
    with open(out / "asymmetry.csv", "w", encoding="ascii", newline="\n") as fh:
        fh.write("filename,region,score_mm\n")
        for name, region, score in rows:
            fh.write(f"{name},{region},{score:.17g}\n")
    write_manifest(out, "asymmetry", args)
    print(f"scored {len(names)} shapes")


def cmd_assess(args) -> None:
    with validation_phase():
        out = _out_dir(args)
        require(args, "pre", "post", "pairing")
        if (args.controls is None) == (args.model is None):
            raise ValidationFailure("give exactly one of --controls or --model")
        pre = read_mesh(args.pre)
        post = read_mesh(args.post)
        pairing = read_pairing(args.pairing, pre.n_vertices)
        regions = read_regions(args.regions, pre.n_vertices) if args.regions else {}
    if args.controls is not None:
        _, control_meshes = load_mesh_directory(args.controls)
        controls = ShapeSample(tuple(control_meshes), pairing=pairing)
        model = fit_control_model(controls, variance_threshold=args.variance or 0.80, regions=regions)
        save_model(model, out / "control_model.json")
    else:
        model = load_model(args.model)
    assessment = integrated_assessment(model, pre, post, pairing, regions)
    _json_dump(assessment.document, out / "assessment.json")
    for name, artifact in sorted(assessment.artifacts.items()):
        if artifact.field is None:
            write_mesh(artifact.mesh, out / f"{name}.obj")
        else:
            span = float(np.abs(artifact.field).max())
            if name.endswith("_normal"):
                cmap = ColorMap("diverging", lo=-(span or 1.0), hi=span or 1.0, reference=0.0)
            else:
                cmap = ColorMap("sequential", lo=0.0, hi=span or 1.0)
            write_painted_mesh(artifact.mesh, artifact.field, cmap, out / f"{name}.ply")
    write_manifest(out, "assess", args)
    print("assessment written")


def cmd_warp(args) -> None:
    with validation_phase():
        out = _out_dir(args)
        require(args, "source", "target", "template")
        source = read_mesh(args.source)
        target = read_mesh(args.target)
        template = read_mesh(args.template)
        if source.n_vertices != target.n_vertices:
            raise ValidationFailure("source and target must have the same vertex count")
    field = fit_tps(source.vertices, target.vertices, ridge=args.ridge)
    warped = template.with_vertices(apply_warp(field, template.vertices))
    write_mesh(warped, out / "warped.obj")
    _json_dump(
        {
            "bending_energy": field.bending_energy,
            "bending_energy_by_coordinate": field.bending_energy_by_coordinate,
            "n_control_points": int(field.control_points.shape[0]),
        },
        out / "warp.json",
    )
    write_manifest(out, "warp", args)
    print(f"warped template ({field.bending_energy:.6g} bending energy)")


def cmd_simulate(args) -> None:
    with validation_phase():
        out = _out_dir(args)
        group_sizes = tuple(args.group_sizes) if args.group_sizes else None
        if group_sizes is not None and len(group_sizes) != 2:
            raise ValidationFailure("--group-sizes needs exactly two comma-separated counts")
        radii = args.radii if args.radii else (1.0, 1.0, 1.0)
        if len(radii) != 3:
            raise ValidationFailure("--radii needs three comma-separated values")
        spectrum = args.spectrum if args.spectrum else (0.05, 0.02, 0.01)
        config = SynthConfig(
            base=args.base,
            resolution=args.resolution,
            radii=radii,
            exponent=args.exponent,
            n_modes=len(spectrum),
            eigen_spectrum=spectrum,
            n_shapes=args.n_shapes,
            group_sizes=group_sizes,
            group_shift_component=args.shift_component,
            group_shift_sd=args.shift_sd,
            asymmetry_magnitude=args.asymmetry,
            noise_sd=args.noise_sd,
            nuisance_rotation_deg=args.nuisance_rotation,
            nuisance_translation=args.nuisance_translation,
            nuisance_log_scale=args.nuisance_log_scale,
            standardize_scores=args.standardize,
            seed=args.seed,
        )
    sample, truth = synth_cohort(config)
    mesh_dir = out / "meshes"
    mesh_dir.mkdir(exist_ok=True)
    names = [f"shape_{i:03d}.obj" for i in range(sample.n_shapes)]
    for name, mesh in zip(names, sample.meshes):
        write_mesh(mesh, mesh_dir / name)
    write_mesh(truth.base_mesh, out / "base.obj")
    write_pairing(truth.pairing, out / "pairing.csv")
    write_regions(truth.base_mesh.regions or {}, out / "regions.csv")
    if sample.labels is not None:
        write_labels(dict(zip(names, sample.labels)), out / "labels.csv")
    _json_dump(
        {
            "spectrum": truth.spectrum,
            "modes": truth.modes,
            "z": truth.z,
            "labels": list(truth.labels) if truth.labels else None,
            "shift_component": truth.shift_component,
            "shift_sd": truth.shift_sd,
            "seed": truth.seed,
            "transforms": [
                {"scale": t.scale, "rotation": t.rotation, "translation": t.translation}
                for t in truth.transforms
            ],
        },
        out / "ground_truth.json",
    )
    write_manifest(out, "simulate", args)
    print(f"simulated {sample.n_shapes} shapes with {config.n_modes} planted modes")


def cmd_diff(args) -> None:
    with validation_phase():
        out = _out_dir(args)
        base = read_mesh(args.base)
        other = read_mesh(args.other)
    field = shape_difference_field(base, other, args.mode)
    with open(out / "difference.csv", "w", encoding="ascii", newline="\n") as fh:
        fh.write("vertex_index,value_mm\n")
        for i, value in enumerate(field):
            fh.write(f"{i},{value:.17g}\n")
    span = float(np.abs(field).max())
    lo = args.lo if args.lo is not None else -(span or 1.0)
    hi = args.hi if args.hi is not None else (span or 1.0)
    cmap = ColorMap("diverging", lo=lo, hi=hi, reference=args.reference)
    clamped = write_painted_mesh(base, field, cmap, out / "difference.ply")
    write_manifest(out, "diff", args)
    print(f"wrote difference field ({clamped} values clamped)")


# ---------------------------------------------------------------- wiring


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="surfshape", description=__doc__)
    parser.add_argument("--version", action="version", version=f"surfshape {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="subcommand")

    def add(name: str, handler, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(handler=handler)
        p.add_argument("--config", type=Path, default=None, help="flat key = value option file")
        p.add_argument("--out", type=Path, default=None, help="output directory")
        return p

    p = add("register", cmd_register, "generalized Procrustes registration of a mesh cohort")
    p.add_argument("--meshes", type=Path, default=None, help="directory of .obj shapes")
    _add_gpa_options(p)

    p = add("pca", cmd_pca, "functional principal components of a registered cohort")
    p.add_argument("--meshes", type=Path, default=None)
    p.add_argument("--components", type=int, default=None, help="fixed component count")
    p.add_argument("--variance", type=float, default=None, help="explained-variance fraction rule")
    _add_gpa_options(p)

    p = add("tour", cmd_tour, "grand tour shape sequence from a fitted model")
    p.add_argument("--model", type=Path, default=None, help="model.json from pca")
    p.add_argument("--topology", type=Path, default=None, help="mesh supplying the triangulation")
    p.add_argument("--components", type=int, default=None, help="tour dimensionality (default: all)")
    p.add_argument("--stops", type=int, default=5)
    p.add_argument("--frames-per-leg", type=int, default=9)
    p.add_argument("--seed", type=int, default=None)

    p = add("compare", cmd_compare, "two-group permutation comparison")
    p.add_argument("--meshes", type=Path, default=None)
    p.add_argument("--labels", type=Path, default=None, help="filename,label CSV")
    p.add_argument("--p", type=int, default=None, help="number of components")
    p.add_argument("--n-perm", type=int, default=500)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--mode", choices=("tangent_pca", "group_shape_space"), default="tangent_pca")
    p.add_argument("--bonferroni", type=float, default=None, help="override the 0.05/p threshold")
    _add_gpa_options(p)

    p = add("split-affine", cmd_split_affine, "affine/non-affine decomposition of a cohort")
    p.add_argument("--meshes", type=Path, default=None)
    _add_gpa_options(p)

    p = add("asymmetry", cmd_asymmetry, "bilateral asymmetry scores")
    p.add_argument("--meshes", type=Path, default=None)
    p.add_argument("--pairing", type=Path, default=None, help="index,mirror_index CSV")
    p.add_argument("--regions", type=Path, default=None, help="vertex_index,region_name CSV")
    p.add_argument("--rigid", action="store_true", help="match the mirror image without scaling")
    p.add_argument("--per-region-registration", action="store_true")

    p = add("assess", cmd_assess, "integrated pre/post assessment against controls")
    p.add_argument("--controls", type=Path, default=None, help="directory of control .obj shapes")
    p.add_argument("--model", type=Path, default=None, help="previously fitted control_model.json")
    p.add_argument("--pre", type=Path, default=None)
    p.add_argument("--post", type=Path, default=None)
    p.add_argument("--pairing", type=Path, default=None)
    p.add_argument("--regions", type=Path, default=None)
    p.add_argument("--variance", type=float, default=None, help="control component rule (default 0.80)")

    p = add("warp", cmd_warp, "thin-plate-spline warp of a template")
    p.add_argument("--source", type=Path, default=None, help="model points to warp from")
    p.add_argument("--target", type=Path, default=None, help="model points to warp onto")
    p.add_argument("--template", type=Path, default=None, help="mesh carried along the warp")
    p.add_argument("--ridge", type=float, default=0.0)

    p = add("simulate", cmd_simulate, "synthetic cohort with planted ground truth")
    p.add_argument("--base", choices=("sphere", "ellipsoid", "superellipsoid"), default="sphere")
    p.add_argument("--resolution", type=int, default=2)
    p.add_argument("--radii", type=_comma_floats, default=None, help="rx,ry,rz")
    p.add_argument("--exponent", type=float, default=1.0)
    p.add_argument("--spectrum", type=_comma_floats, default=None, help="planted eigenvalues, decreasing")
    p.add_argument("--n-shapes", type=int, default=20)
    p.add_argument("--group-sizes", type=_comma_ints, default=None, help="nA,nB")
    p.add_argument("--shift-component", type=int, default=None)
    p.add_argument("--shift-sd", type=float, default=0.0)
    p.add_argument("--asymmetry", type=float, default=0.0)
    p.add_argument("--noise-sd", type=float, default=0.0)
    p.add_argument("--nuisance-rotation", type=float, default=0.0, help="degrees")
    p.add_argument("--nuisance-translation", type=float, default=0.0)
    p.add_argument("--nuisance-log-scale", type=float, default=0.0)
    p.add_argument("--standardize", action="store_true", help="exactly standardize mode draws")
    p.add_argument("--seed", type=int, default=None)

    p = add("diff", cmd_diff, "painted difference field between two corresponded meshes")
    p.add_argument("base", type=Path)
    p.add_argument("other", type=Path)
    p.add_argument("--mode", choices=("x", "y", "z", "normal", "signed_euclidean"), default="normal")
    p.add_argument("--lo", type=float, default=None)
    p.add_argument("--hi", type=float, default=None)
    p.add_argument("--reference", type=float, default=0.0)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "command", None) is None:
        parser.print_help()
        return 2
    try:
        if args.config is not None:
            subparser = _find_subparser(parser, args.command)
            merge_config(args, subparser, parse_config_file(args.config))
        args.handler(args)
        return 0
    except ValidationFailure as err:
        print(f"error: validation: {err}", file=sys.stderr)
        return 2
    except OSError as err:
        print(f"error: validation: {err}", file=sys.stderr)
        return 2
    except Exception as err:  # numerical failures from the pipeline
        print(f"error: numerical: {err}", file=sys.stderr)
        return 3


def _find_subparser(parser: argparse.ArgumentParser, command: str) -> argparse.ArgumentParser:
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[command]
    raise RuntimeError("subparser registry missing")


if __name__ == "__main__":
    sys.exit(main())
