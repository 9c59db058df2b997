"""Command-line front end.

Every command writing a file also writes ``<output>.manifest.json`` holding
the resolved parameters, the geometry fingerprint and the exact argv, so
``rprbox replay <manifest>`` regenerates byte-identical outputs.

Exit codes: 0 success, 1 validation/domain error, 2 I/O error.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import math
import sys
from pathlib import Path
from typing import Sequence

from rprbox import __version__
from rprbox.boxsearch import (
    BoxQuery,
    BoxSearchError,
    HJParams,
    box_from_report,
    box_report,
    build_box,
)
from rprbox.kinematics import (
    DegenerateLegError,
    JointVector,
    KinematicsError,
    Pose,
    direct_kinematics,
    inverse_kinematics,
    leg_angles,
    leg_lines_det,
)
from rprbox.model import GeometryError, read_geometry
from rprbox.singularity import (
    SliceDiagnostics,
    SliceSpec,
    SweepSpec,
    SingularityCloud,
    compute_slice,
    export_cloud,
    load_cloud_csv,
    singularity_residual,
    sweep_surface,
)
from rprbox.workspace import DET_FLOOR, NEAR_SINGULAR, cube_image, export_samples

EXIT_OK, EXIT_DOMAIN, EXIT_IO = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2), which we reserve for I/O
        raise UsageError(message)


def _floats(text: str, n: int) -> tuple[float, ...]:
    try:
        values = tuple(float(v) for v in text.split(","))
    except ValueError:
        raise UsageError(f"expected {n} comma-separated numbers, got {text!r}") from None
    if len(values) != n or not all(math.isfinite(v) for v in values):
        raise UsageError(f"expected {n} comma-separated finite numbers, got {text!r}")
    return values


def _range(text: str) -> tuple[float, float, float]:
    try:
        start, end, step = (float(v) for v in text.split(":"))
    except ValueError:
        raise UsageError(f"expected start:end:step, got {text!r}") from None
    if not step > 0:
        raise UsageError("rho1 step must be positive")
    if not end > start >= 0:
        raise UsageError("need end > start >= 0")
    return start, end, step


def _domain(text: str) -> tuple[tuple[float, float], ...]:
    try:
        parts = [tuple(float(v) for v in axis.split(":")) for axis in text.split(",")]
    except ValueError:
        raise UsageError(f"expected lo:hi,lo:hi,lo:hi, got {text!r}") from None
    if len(parts) != 3 or any(len(p) != 2 for p in parts):
        raise UsageError(f"expected lo:hi,lo:hi,lo:hi, got {text!r}")
    return tuple(parts)  # type: ignore[return-value]


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _dumps(data) -> str:
    return json.dumps(data, indent=2, sort_keys=True) + "\n"


def _write(path: Path, data: bytes) -> None:
    path.write_bytes(data)


def _write_manifest(output: Path, command: str, argv, params: dict, inputs, outputs, fingerprint=""):
    manifest = {
        "command": command,
        "argv": list(argv),
        "parameters": params,
        "geometry_fingerprint": fingerprint,
        "version": __version__,
        "inputs": {str(p): _sha256(Path(p)) for p in inputs},
        "outputs": {str(p): _sha256(Path(p)) for p in outputs},
    }
    Path(f"{output}.manifest.json").write_text(_dumps(manifest), encoding="utf-8")


def _slice_spec(args, rho1: float) -> SliceSpec:
    try:
        return SliceSpec(
            rho1=rho1,
            n_theta1=args.n_theta1,
            n_alpha=args.n_alpha,
            tol_root=args.tol_root,
            rho_bounds=(args.rho_min, args.rho_max),
            scan=args.scan,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _gnuplot(path: Path, body: str) -> None:
    Path(f"{path}.gp").write_text(body, encoding="utf-8")


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------


def cmd_slice(args, argv) -> int:
    geom = read_geometry(args.geometry)
    if not (math.isfinite(args.rho1) and args.rho1 >= 0):
        raise UsageError("--rho1 must be a non-negative number")
    spec = _slice_spec(args, args.rho1)
    diag = SliceDiagnostics()
    pts = compute_slice(geom, spec, diag)
    out = Path(args.output)
    _write(out, export_cloud(SingularityCloud(slices=[pts])))
    if args.gnuplot:
        _gnuplot(
            out,
            f"set datafile separator ','\nset xlabel 'rho2'\nset ylabel 'rho3'\n"
            f"set title 'singular configurations, rho1 = {args.rho1:g}'\n"
            f"plot '{out.name}' every ::1 using 2:3 with dots notitle\n",
        )
    params = {"slice": dataclasses.asdict(spec), "diagnostics": dataclasses.asdict(diag)}
    _write_manifest(out, "slice", argv, params, [args.geometry], [out], geom.fingerprint())
    print(f"{len(pts)} singular points -> {out}", file=sys.stderr)
    return EXIT_OK


def cmd_sweep(args, argv) -> int:
    geom = read_geometry(args.geometry)
    start, end, step = _range(args.rho1)
    template = _slice_spec(args, start)
    try:
        spec = SweepSpec(start, end, step, template)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    cloud = sweep_surface(geom, spec, workers=args.threads)
    out = Path(args.output)
    outputs = [out]
    _write(out, export_cloud(cloud, "csv"))
    if not args.no_ply and len(cloud):
        ply = out.with_suffix(".ply")
        _write(ply, export_cloud(cloud, "ply"))
        outputs.append(ply)
    if args.gnuplot:
        _gnuplot(
            out,
            "set datafile separator ','\nset xlabel 'rho1'\nset ylabel 'rho2'\nset zlabel 'rho3'\n"
            f"splot '{out.name}' every ::1 using 1:2:3 with dots notitle\n",
        )
    params = {
        "sweep": {"rho1_start": start, "rho1_end": end, "rho1_step": step},
        "slice": dataclasses.asdict(template),
        "domain": [list(b) for b in spec.domain()],
        "points": len(cloud),
        "cloud_fingerprint": cloud.fingerprint(),
        "diagnostics": dataclasses.asdict(cloud.diagnostics),
    }
    params["slice"].pop("rho1")
    _write_manifest(out, "sweep", argv, params, [args.geometry], outputs, geom.fingerprint())
    print(f"{len(cloud)} singular points in {len(cloud.slices)} slices -> {out}", file=sys.stderr)
    return EXIT_OK


def _cloud_manifest(path: Path) -> dict:
    mpath = Path(f"{path}.manifest.json")
    if not mpath.exists():
        return {}
    return json.loads(mpath.read_text(encoding="utf-8"))


def cmd_maxbox(args, argv) -> int:
    cloud_path = Path(args.cloud)
    cloud = load_cloud_csv(cloud_path)
    manifest = _cloud_manifest(cloud_path)
    if args.domain:
        domain = _domain(args.domain)
    elif "domain" in manifest.get("parameters", {}):
        domain = tuple(tuple(b) for b in manifest["parameters"]["domain"])
    elif len(cloud):
        pts = cloud.joints
        domain = tuple((float(pts[:, i].min()), float(pts[:, i].max())) for i in range(3))
    else:
        raise UsageError("empty cloud and no --domain given")
    try:
        params = HJParams(args.initial_step, args.reduction, args.min_step, args.max_iters)
        query = BoxQuery(JointVector(*_floats(args.center, 3)), domain, args.security, params)
    except BoxSearchError as exc:
        raise UsageError(str(exc)) from None
    box = build_box(cloud, query)
    report = box_report(
        box,
        query,
        {
            "geometry_fingerprint": manifest.get("geometry_fingerprint", ""),
            "sweep": manifest.get("parameters", {}).get("sweep"),
            "cloud_file": str(cloud_path),
        },
    )
    text = _dumps(report)
    if args.output:
        out = Path(args.output)
        out.write_text(text, encoding="utf-8")
        _write_manifest(
            out,
            "maxbox",
            argv,
            {"query": report["center0"], "security": args.security, "optimizer": report["optimizer"],
             "domain": report["domain"]},
            [cloud_path],
            [out],
            report["geometry_fingerprint"],
        )
    else:
        sys.stdout.write(text)
    print(
        f"d_min = {box.d_min:.6g} at {tuple(box.center)}, half-width {box.half_width:.6g}",
        file=sys.stderr,
    )
    return EXIT_OK


def cmd_image(args, argv) -> int:
    geom = read_geometry(args.geometry)
    report = json.loads(Path(args.box).read_text(encoding="utf-8"))
    expected = report.get("geometry_fingerprint")
    if expected and expected != geom.fingerprint():
        raise GeometryError(
            f"box was computed for geometry {expected}, not {geom.fingerprint()}"
        )
    if args.n_per_axis < 2:
        raise UsageError("--n-per-axis must be >= 2")
    box = box_from_report(report)
    image = cube_image(geom, box, args.n_per_axis)
    samples = image.samples
    out = Path(args.output)
    outputs = [out]
    _write(out, export_samples(samples, "csv"))
    if args.ply:
        ply = out.with_suffix(".ply")
        _write(ply, export_samples(samples, "ply"))
        outputs.append(ply)
    if args.gnuplot:
        _gnuplot(
            out,
            "set datafile separator ','\nset xlabel 'x'\nset ylabel 'y'\nset zlabel 'alpha'\n"
            f"splot '{out.name}' every ::1 using 1:2:3 with dots title 'image', "
            f"'{out.name}' every ::1 using 1:2:(0) with dots title 'xy projection'\n",
        )
    params = {
        "n_per_axis": args.n_per_axis,
        "limits": [list(lim) for lim in box.limits],
        "groups": {("+" if k > 0 else "-"): len(v) for k, v in sorted(image.groups.items())},
        "violations": len(image.violations),
        "ik_failures": len(image.ik_failures),
        "near_singular": image.near_singular,
    }
    _write_manifest(out, "image", argv, params, [args.geometry, args.box], outputs, geom.fingerprint())
    print(f"{len(samples)} samples in {len(image.groups)} aspect groups -> {out}", file=sys.stderr)
    if image.violations:
        print(f"{len(image.violations)} singular samples inside the box", file=sys.stderr)
        return EXIT_DOMAIN
    return EXIT_OK


def _pose_report(geom, pose: Pose) -> dict:
    entry = {"pose": list(pose)}
    try:
        angles = leg_angles(geom, pose)
    except DegenerateLegError as exc:
        entry["degenerate_leg"] = exc.leg
        entry["message"] = str(exc)
        return entry
    det = leg_lines_det(geom, angles)
    entry.update(
        leg_angles=list(angles),
        residual=singularity_residual(geom, angles),
        det=det,
        singular=abs(det) <= DET_FLOOR,
        near_singular=abs(det) < NEAR_SINGULAR,
    )
    return entry


def cmd_check(args, argv) -> int:
    geom = read_geometry(args.geometry)
    report: dict = {"geometry_fingerprint": geom.fingerprint()}
    if args.pose:
        x, y, alpha = _floats(args.pose, 3)
        if args.degrees:
            alpha = math.radians(alpha)
        pose = Pose(x, y, alpha)
        q = inverse_kinematics(geom, pose)
        report.update(_pose_report(geom, pose))
        report["joints"] = list(q)
    else:
        q = JointVector(*_floats(args.joints, 3))
        if min(q) < 0:
            raise UsageError("leg lengths must be non-negative")
        report["joints"] = list(q)
    report["assembly_modes"] = [_pose_report(geom, p) for p in direct_kinematics(geom, q)]
    text = _dumps(report)
    if args.output:
        out = Path(args.output)
        out.write_text(text, encoding="utf-8")
        _write_manifest(out, "check", argv, {"pose": args.pose, "joints": args.joints,
                                            "degrees": args.degrees}, [args.geometry], [out],
                        geom.fingerprint())
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_replay(args, argv) -> int:
    manifest = json.loads(Path(args.manifest).read_text(encoding="utf-8"))
    code = main(manifest["argv"])
    if code != EXIT_OK:
        return code
    mismatched = [p for p, digest in manifest["outputs"].items() if _sha256(Path(p)) != digest]
    for p in mismatched:
        print(f"output differs from manifest: {p}", file=sys.stderr)
    return EXIT_DOMAIN if mismatched else EXIT_OK


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------


def _add_grid_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--n-theta1", type=int, default=720)
    p.add_argument("--n-alpha", type=int, default=720)
    p.add_argument("--tol-root", type=float, default=1e-10)
    p.add_argument("--rho-min", type=float, default=1e-9, help="lower filter on rho2, rho3")
    p.add_argument("--rho-max", type=float, default=60.0, help="upper filter on rho2, rho3")
    p.add_argument("--scan", choices=("theta1", "alpha"), default="theta1",
                   help="outer scan variable (the other is root-bracketed)")
    p.add_argument("--gnuplot", action="store_true", help="also write <output>.gp")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rprbox", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"rprbox {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("slice", help="singular curves in the (rho2, rho3) plane at fixed rho1")
    p.add_argument("geometry")
    p.add_argument("--rho1", type=float, required=True)
    p.add_argument("-o", "--output", default="slice.csv")
    _add_grid_flags(p)
    p.set_defaults(func=cmd_slice)

    p = sub.add_parser("sweep", help="stack slices into a joint-space singularity cloud")
    p.add_argument("geometry")
    p.add_argument("--rho1", default="0:50:0.5", help="start:end:step")
    p.add_argument("-o", "--output", default="cloud.csv")
    p.add_argument("--no-ply", action="store_true")
    p.add_argument("--threads", type=int, default=1)
    _add_grid_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("maxbox", help="maximal singularity-free cube around a start point")
    p.add_argument("cloud")
    p.add_argument("--center", required=True, help="rho1,rho2,rho3")
    p.add_argument("--security", type=float, default=0.1)
    p.add_argument("--initial-step", type=float, default=1.0)
    p.add_argument("--reduction", type=float, default=0.5)
    p.add_argument("--min-step", type=float, default=0.125)
    p.add_argument("--max-iters", type=int, default=10000)
    p.add_argument("--domain", help="lo:hi,lo:hi,lo:hi (default: from the cloud manifest)")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_maxbox)

    p = sub.add_parser("image", help="direct-kinematics image of a box report")
    p.add_argument("geometry")
    p.add_argument("box")
    p.add_argument("--n-per-axis", type=int, default=25)
    p.add_argument("-o", "--output", default="workspace.csv")
    p.add_argument("--ply", action="store_true", help="also write an (x, y, alpha) PLY")
    p.add_argument("--gnuplot", action="store_true")
    p.set_defaults(func=cmd_image)

    p = sub.add_parser("check", help="singularity diagnostics for one pose or joint vector")
    p.add_argument("geometry")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--pose", help="x,y,alpha")
    group.add_argument("--joints", help="rho1,rho2,rho3")
    p.add_argument("--degrees", action="store_true", help="alpha in --pose is in degrees")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    p.add_argument("manifest")
    p.set_defaults(func=cmd_replay)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
        return args.func(args, argv)
    except UsageError as exc:
        print(f"rprbox: usage error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except OSError as exc:
        print(f"rprbox: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (GeometryError, KinematicsError, BoxSearchError, ValueError) as exc:
        print(f"rprbox: error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
