"""Command-line front end.

Every subcommand reads its inputs, validates paths before computing, and
writes deterministic files.  On failure one JSON line goes to stderr:

    {"error": "<kind>", "exit": <code>, "message": "..."}
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .boundary import BoundaryCurve, BoundaryError
from .mesh import MeshError, mesh_obj, read_mesh
from .metrics import DEFAULT_EPSILON, MetricError, MetricReport, evaluate, voxelize_mesh
from .pipeline import PipelineError, SurfCutParams, extract_boundary, march, surface_from_boundary
from .pipeline import surfcut as run_surfcut
from .pipeline import surfcut_auto
from .ridge import RidgeError
from .synth import KINDS, SynthError, read_gt, write_dataset, write_manifest
from .valley import ValleyError
from .volume import SeedPoint, VolumeError, read_svol, svol_bytes

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_USAGE = 2
EXIT_PATH = 3
EXIT_INPUT = 4
EXIT_PARAM = 5
EXIT_COMPUTE = 6

EXIT_HELP = f"""\
exit codes:
  {EXIT_OK}  success
  {EXIT_INTERNAL}  unexpected internal error
  {EXIT_USAGE}  bad command line (unknown flag, missing argument)
  {EXIT_PATH}  input file missing or output location not writable
  {EXIT_INPUT}  malformed input file (volume, boundary, mesh or ground truth)
  {EXIT_PARAM}  parameter out of range (seed outside volume, T <= 0, ...)
  {EXIT_COMPUTE}  extraction failed (no usable ridge loop, degenerate cut, ...)
"""


class CliError(Exception):
    def __init__(self, kind: str, code: int, message: str):
        super().__init__(message)
        self.kind, self.code = kind, code


def _fail_line(kind: str, code: int, message: str) -> str:
    return json.dumps({"error": kind, "exit": code, "message": message}, sort_keys=True)


class _Formatter(argparse.ArgumentDefaultsHelpFormatter, argparse.RawDescriptionHelpFormatter):
    """Show defaults, keep the exit-code table as written."""

    def _get_help_string(self, action):
        if action.required:
            return action.help
        return super()._get_help_string(action)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(_fail_line("usage", EXIT_USAGE, message), file=sys.stderr)
        sys.exit(EXIT_USAGE)


# --- argument types ---------------------------------------------------------

def _point(text: str) -> SeedPoint:
    try:
        i, j, k = (int(t) for t in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected voxel indices x,y,z, got {text!r}")
    return SeedPoint(i, j, k)


def _input(path: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise CliError("path", EXIT_PATH, f"input file not found: {p}")
    return p


def _output(path: str | Path, is_dir: bool = False) -> Path:
    p = Path(path)
    parent = p if is_dir else p.parent
    if is_dir:
        if p.exists() and not p.is_dir():
            raise CliError("path", EXIT_PATH, f"output directory is a file: {p}")
        try:
            p.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise CliError("path", EXIT_PATH, f"cannot create {p}: {exc}")
    elif not parent.is_dir():
        raise CliError("path", EXIT_PATH, f"output directory does not exist: {parent}")
    return p


def _read_json(path: Path):
    try:
        return json.loads(path.read_text())
    except (ValueError, UnicodeDecodeError) as exc:
        raise CliError("input", EXIT_INPUT, f"{path}: not valid JSON ({exc})")


def _load_volume(path: str):
    try:
        return read_svol(_input(path))
    except VolumeError as exc:
        raise CliError("input", EXIT_INPUT, f"{path}: {exc}")


def _load_boundary(path: str) -> BoundaryCurve:
    p = _input(path)
    try:
        return BoundaryCurve.from_json(_read_json(p))
    except (KeyError, TypeError, ValueError, BoundaryError) as exc:
        raise CliError("input", EXIT_INPUT, f"{path}: not a boundary file ({exc})")


def _params(args) -> SurfCutParams:
    try:
        return SurfCutParams(delta_D=args.delta_D, T=args.T, rho=args.rho,
                             max_fronts=args.max_fronts, phi_scale=args.phi_scale,
                             **({"max_seeds": args.max_seeds} if hasattr(args, "max_seeds") else {}))
    except ValueError as exc:
        raise CliError("param", EXIT_PARAM, str(exc))


def _check_seed(p: SeedPoint, vol) -> None:
    try:
        p.check_inside(vol.dims)
    except VolumeError as exc:
        raise CliError("param", EXIT_PARAM, str(exc))


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _boundary_json(bc: BoundaryCurve) -> str:
    return json.dumps(bc.to_json(), sort_keys=True, separators=(",", ":")) + "\n"


# --- subcommands ------------------------------------------------------------

def cmd_fmm(args) -> dict:
    phi = _load_volume(args.phi)
    out = _output(args.out, is_dir=True)
    _check_seed(args.point, phi)
    params = _params(args)
    res = march(phi, args.point, params)
    U, UE = res.volumes()
    (out / "U.svol").write_bytes(svol_bytes(U))
    (out / "UE.svol").write_bytes(svol_bytes(UE))
    return {"U": str(out / "U.svol"), "UE": str(out / "UE.svol"),
            "max_accepted": round(float(res.max_accepted), 6)}


def cmd_extract_boundary(args) -> dict:
    phi = _load_volume(args.phi)
    out = _output(args.out)
    _check_seed(args.point, phi)
    params = _params(args)
    res = march(phi, args.point, params)
    bc, curves, levels, status, cut = extract_boundary(res, params)
    bc.meta.update(status=status)
    out.write_text(_boundary_json(bc))
    return {"boundary": str(out), "status": status, "n_curves": len(curves)}


def cmd_extract_surface(args) -> dict:
    phi = _load_volume(args.phi)
    bc = _load_boundary(args.boundary)
    out = _output(args.out)
    _check_seed(args.point, phi)
    params = _params(args)
    res = march(phi, args.point, params)
    mesh = surface_from_boundary(res, bc)
    out.write_text(mesh_obj(mesh))
    return {"surface": str(out), "n_quads": mesh.n_quads}


def cmd_surfcut(args) -> dict:
    phi = _load_volume(args.phi)
    out = _output(args.out, is_dir=True)
    _check_seed(args.point, phi)
    bc, mesh, hooks = run_surfcut(phi, args.point, _params(args))
    (out / "boundary.json").write_text(_boundary_json(bc))
    (out / "surface.obj").write_text(mesh_obj(mesh))
    return {"boundary": str(out / "boundary.json"), "surface": str(out / "surface.obj"),
            "status": hooks.status, "n_curves": len(hooks.curves), "n_quads": mesh.n_quads}


def cmd_auto(args) -> dict:
    phi = _load_volume(args.phi)
    out = _output(args.out, is_dir=True)
    if args.threads < 1:
        raise CliError("param", EXIT_PARAM, f"threads must be >= 1, got {args.threads}")
    results = surfcut_auto(phi, _params(args), threads=args.threads)
    index = []
    for n, (seed, bc, mesh) in enumerate(results):
        b, s = f"boundary_{n:02d}.json", f"surface_{n:02d}.obj"
        (out / b).write_text(_boundary_json(bc))
        (out / s).write_text(mesh_obj(mesh))
        index.append({"seed": [int(c) for c in seed], "boundary": b, "surface": s,
                      "status": bc.meta.get("status", "")})
    (out / "auto.json").write_text(_dump({"surfaces": index}))
    return {"n_surfaces": len(index), "index": str(out / "auto.json")}


def cmd_synth(args) -> dict:
    out = _output(args.out, is_dir=True)
    try:
        entry = write_dataset(out, args.kind, args.dims, sigma=args.sigma,
                              rng_seed=args.seed, name=args.name)
    except (SynthError, VolumeError) as exc:
        raise CliError("param", EXIT_PARAM, str(exc))
    write_manifest(out / "manifest.json", [entry])
    return {"volume": str(out / entry["volume"]), "gt": str(out / entry["gt"]),
            "manifest": str(out / "manifest.json")}


def cmd_eval(args) -> dict:
    gt_path = _input(args.gt)
    try:
        gt = read_gt(gt_path)
    except (KeyError, TypeError, ValueError) as exc:
        raise CliError("input", EXIT_INPUT, f"{args.gt}: not a ground-truth file ({exc})")
    surface = boundary = None
    for path in [args.result] + ([args.boundary] if args.boundary else []):
        p = _input(path)
        if p.suffix.lower() == ".json" and "lattice" in _read_json(p):
            boundary = _load_boundary(path)
            continue
        try:
            surface = read_mesh(p)
        except (MeshError, KeyError, TypeError, ValueError) as exc:
            raise CliError("input", EXIT_INPUT, f"{path}: not a mesh ({exc})")
    if args.out:
        _output(args.out)
    if args.epsilon <= 0:
        raise CliError("param", EXIT_PARAM, f"epsilon must be > 0, got {args.epsilon}")
    try:
        s = evaluate(voxelize_mesh(surface), gt.surface_voxels, args.epsilon) if surface else None
        b = evaluate(boundary.voxels(), gt.boundary_voxels, args.epsilon) if boundary else None
    except MetricError as exc:
        raise CliError("input", EXIT_INPUT, str(exc))
    report = MetricReport(s, b, args.epsilon)
    text = report.to_text() if args.format == "text" else report.to_json()
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return {}


# --- parser -----------------------------------------------------------------

def _add_params(p, seeds: bool = False):
    d = SurfCutParams()
    g = p.add_argument_group("pipeline parameters")
    g.add_argument("--delta-D", dest="delta_D", type=float, default=d.delta_D,
                   help="front level increment")
    g.add_argument("--T", dest="T", type=float, default=d.T,
                   help="stop when cut cost per cut edge falls below T")
    g.add_argument("--rho", type=float, default=d.rho, help="additive regulariser on phi")
    g.add_argument("--max-fronts", type=int, default=d.max_fronts,
                   help="give up (degraded) after this many fronts")
    g.add_argument("--phi-scale", type=float, default=d.phi_scale,
                   help="phi is multiplied by this before marching")
    if seeds:
        g.add_argument("--max-seeds", type=int, default=d.max_seeds,
                       help="number of proposed seeds")


def build_parser() -> argparse.ArgumentParser:
    fmt = _Formatter
    ap = _Parser(prog="surfcut", formatter_class=argparse.RawDescriptionHelpFormatter,
                 description="Surface extraction with a free boundary from a 3D cost volume.",
                 epilog=EXIT_HELP)
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, fn, help_):
        p = sub.add_parser(name, help=help_, description=help_, formatter_class=fmt,
                           epilog=EXIT_HELP)
        p.set_defaults(func=fn)
        p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
        return p

    p = add("fmm", cmd_fmm, "weighted distance U and path length UE from a seed")
    p.add_argument("--phi", required=True, help="cost volume (.svol)")
    p.add_argument("--point", required=True, type=_point, help="seed voxel x,y,z")
    p.add_argument("--out", default=".", help="directory for U.svol and UE.svol")
    _add_params(p)

    p = add("extract-boundary", cmd_extract_boundary, "boundary loop from a seed")
    p.add_argument("--phi", required=True, help="cost volume (.svol)")
    p.add_argument("--point", required=True, type=_point, help="seed voxel x,y,z")
    p.add_argument("--out", default="boundary.json", help="boundary JSON")
    _add_params(p)

    p = add("extract-surface", cmd_extract_surface, "surface spanning a given boundary")
    p.add_argument("--phi", required=True, help="cost volume (.svol)")
    p.add_argument("--boundary", required=True, help="boundary JSON")
    p.add_argument("--point", required=True, type=_point, help="seed voxel x,y,z")
    p.add_argument("--out", default="surface.obj", help="mesh (.obj)")
    _add_params(p)

    p = add("surfcut", cmd_surfcut, "full pipeline: boundary and surface from a seed")
    p.add_argument("--phi", required=True, help="cost volume (.svol)")
    p.add_argument("--point", required=True, type=_point, help="seed voxel x,y,z")
    p.add_argument("--out", default=".", help="directory for boundary.json and surface.obj")
    _add_params(p)

    p = add("auto", cmd_auto, "run from automatically proposed seeds, drop duplicates")
    p.add_argument("--phi", required=True, help="cost volume (.svol)")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--threads", type=int, default=1, help="worker threads")
    _add_params(p, seeds=True)

    p = add("synth", cmd_synth, "generate a synthetic volume and its ground truth")
    p.add_argument("--kind", required=True, choices=[k.replace("_", "-") for k in KINDS])
    p.add_argument("--dims", type=int, default=100, help="cube side in voxels")
    p.add_argument("--sigma", type=float, default=0.1, help="Gaussian noise level")
    p.add_argument("--seed", type=int, default=0, help="random seed")
    p.add_argument("--name", default="", help="file name prefix")
    p.add_argument("--out", default=".", help="output directory")

    p = add("eval", cmd_eval, "precision, recall, F and GT coverage against ground truth")
    p.add_argument("--result", required=True, help="mesh (.obj or .json) or boundary JSON")
    p.add_argument("--boundary", help="optional boundary JSON scored alongside --result")
    p.add_argument("--gt", required=True, help="ground-truth JSON from synth")
    p.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON, help="distance tolerance")
    p.add_argument("--format", choices=["json", "text"], default="json", help="report format")
    p.add_argument("--out", help="write the report here instead of stdout")
    return ap


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        info = args.func(args)
    except CliError as exc:
        print(_fail_line(exc.kind, exc.code, str(exc)), file=sys.stderr)
        return exc.code
    except (PipelineError, BoundaryError, RidgeError, ValleyError) as exc:
        print(_fail_line("compute", EXIT_COMPUTE, f"{type(exc).__name__}: {exc}"), file=sys.stderr)
        return EXIT_COMPUTE
    except OSError as exc:
        print(_fail_line("path", EXIT_PATH, str(exc)), file=sys.stderr)
        return EXIT_PATH
    except Exception as exc:  # last resort, still machine-readable
        print(_fail_line("internal", EXIT_INTERNAL, f"{type(exc).__name__}: {exc}"),
              file=sys.stderr)
        return EXIT_INTERNAL
    if info and args.verbose:
        print(json.dumps(info, sort_keys=True), file=sys.stderr)
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
