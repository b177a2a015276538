"""Command line front end: decompose, stipple, simulate, mesh, pipeline.

Every stage reads and extends ``manifest.json`` in the output directory.
Paths in the manifest are relative to that directory, so a finished output
directory can be moved and any downstream stage re-run from it alone.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import tempfile
import warnings
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .decomposer import (
    DecompositionResult,
    EnergyWeights,
    SolverOptions,
    decompose,
)
from .raster import load_channel, load_image, save_channel, save_rgb
from .spraysim import SprayParams, simulate_alpha, simulate_composite
from .stencilmesh import PlateParams, build_stencil_plate, build_wall, validate_mesh, write_stl
from .stippler import EmptyDensityError, LloydOptions, Stippling, stipple

MANIFEST = "manifest.json"
STAGE_DECOMPOSE, STAGE_STIPPLE = 0, 1

DEFAULTS = {
    "seed": 0,
    "layers": 3,
    "gamma_data": 1.0,
    "gamma_smooth": 0.05,
    "gamma_sparse": 0.05,
    "max_outer_iters": 50,
    "outer_tol": 1e-4,
    "qp_max_iters": 500,
    "qp_grad_tol": 1e-6,
    "background_restarts": True,
    "dots": 5000,
    "lloyd_iters": 100,
    "move_tol": 0.5,
    "scale": 0.01,
    "hole_radius": 0.05,
    "height": [7.0],
    "prefactor": 1.0,
    "truncation_sigmas": 4.0,
    "thickness": 0.2,
    "hole_segments": 32,
    "margin": 0.5,
    "clearance": 0.02,
    "wall_heights": [1.0],
}


class StageError(RuntimeError):
    pass


# -- small helpers -----------------------------------------------------------

def derive_seed(root: int, stage: int, layer: int = 0) -> int:
    """Independent per-stage, per-layer seed from the root seed."""
    ss = np.random.SeedSequence(root, spawn_key=(stage, layer))
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def fmt_num(v: float) -> str:
    """Filename tag for a float: 7 -> '7.0', 0.25 -> '0.25'."""
    return repr(float(v))


def _write_json_atomic(path: Path, data) -> None:
    text = json.dumps(data, indent=1, sort_keys=True) + "\n"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".manifest-")
    with os.fdopen(fd, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def load_manifest(out: Path) -> dict:
    path = out / MANIFEST
    if not path.is_file():
        raise StageError(f"no manifest at {path}")
    return json.loads(path.read_text())


def save_manifest(out: Path, manifest: dict) -> None:
    manifest["digests"] = {
        name: sha256_file(out / name)
        for name in sorted(_artifact_names(manifest))
    }
    _write_json_atomic(out / MANIFEST, manifest)


def _artifact_names(m: dict):
    names = list(m.get("decompose", {}).get("layers", []))
    for rec in m.get("stipple", {}).get("layers", []):
        if rec["file"]:
            names.append(rec["file"])
    sim = m.get("simulate", {})
    for run in sim.get("runs", []):
        names.extend(f for f in run["alpha_files"] if f)
        names.append(run["composite"])
    mesh = m.get("mesh", {})
    names.extend(p["file"] for p in mesh.get("plates", []) if p["file"])
    names.extend(w["file"] for w in mesh.get("walls", []))
    return names


# -- stages (operate on an in-memory manifest) -------------------------------

def run_decompose(input_png: Path, cfg: dict, out: Path) -> dict:
    if not input_png.is_file():
        raise StageError(f"input not found: {input_png}")
    X = load_image(input_png)
    weights = EnergyWeights(cfg["gamma_data"], cfg["gamma_smooth"], cfg["gamma_sparse"])
    opts = SolverOptions(
        max_outer_iters=cfg["max_outer_iters"],
        outer_tol=cfg["outer_tol"],
        qp_max_iters=cfg["qp_max_iters"],
        qp_grad_tol=cfg["qp_grad_tol"],
        rng_seed=derive_seed(cfg["seed"], STAGE_DECOMPOSE),
        background_restarts=cfg["background_restarts"],
    )
    res = decompose(X, cfg["layers"], weights, opts)
    out.mkdir(parents=True, exist_ok=True)
    names = []
    for i, a in enumerate(res.stack, start=1):
        name = f"layer_{i:02d}.png"
        save_channel(a, out / name)
        names.append(name)
    last = res.energy_trace[-1]
    print(f"E_data={last.e_data:.6g} E_smooth={last.e_smooth:.6g} "
          f"E_sparse={last.e_sparse:.6g} E_total={last.e_total:.6g}")
    H, W = res.stack.shape[1:]
    return {
        "version": __version__,
        "seed": cfg["seed"],
        "input": {"path": str(input_png), "sha256": sha256_file(input_png)},
        "canvas": {"width": W, "height": H},
        "decompose": {
            "layers": names,
            "palette": [[float(c) for c in row] for row in res.palette],
            "weights": asdict(weights),
            "solver": asdict(opts),
            "background_start": res.background_start,
            "energy_trace": [r._asdict() for r in res.energy_trace],
        },
    }


def _load_stack(out: Path, m: dict) -> np.ndarray:
    return np.stack([load_channel(out / f) for f in m["decompose"]["layers"]])


def run_stipple(m: dict, cfg: dict, out: Path) -> dict:
    stack = _load_stack(out, m)
    if cfg["dots"] < 1:
        raise StageError("--dots must be >= 1")
    records = []
    for i, a in enumerate(stack, start=1):
        opts = LloydOptions(cfg["lloyd_iters"], cfg["move_tol"], derive_seed(cfg["seed"], STAGE_STIPPLE, i))
        try:
            st = stipple(a, cfg["dots"], opts, cfg["scale"])
        except EmptyDensityError:
            warnings.warn(f"layer {i} is empty; no stippling written", stacklevel=2)
            records.append({"layer": i, "file": None, "n_points": 0, "empty": True})
            continue
        name = f"stippling_layer_{i:02d}.json"
        st.save(out / name)
        records.append({"layer": i, "file": name, "n_points": len(st), "empty": False,
                        "lloyd_iterations": len(st.energy_trace) - 1})
        print(f"layer {i}: {len(st)} dots, {len(st.energy_trace) - 1} Lloyd iterations")
    m["stipple"] = {
        "dots": cfg["dots"],
        "scale_cm_per_px": cfg["scale"],
        "lloyd": {"max_iters": cfg["lloyd_iters"], "move_tol": cfg["move_tol"]},
        "layers": records,
    }
    return m


def _load_stipplings(out: Path, m: dict) -> list:
    if "stipple" not in m:
        raise StageError("manifest has no stipplings; run 'stipple' first")
    sts = []
    for rec in m["stipple"]["layers"]:
        if rec["file"] is None:
            sts.append(None)
            continue
        path = out / rec["file"]
        if not path.is_file():
            raise StageError(f"missing stippling file: {path}")
        sts.append(Stippling.load(path))
    return sts


def run_simulate(m: dict, cfg: dict, out: Path) -> dict:
    sts = _load_stipplings(out, m)
    stack = _load_stack(out, m)
    decomp = DecompositionResult(stack, np.array(m["decompose"]["palette"]))
    W, H = m["canvas"]["width"], m["canvas"]["height"]
    runs = []
    for h in cfg["height"]:
        params = SprayParams(cfg["hole_radius"], h, cfg["prefactor"], cfg["scale"],
                             cfg["truncation_sigmas"])
        tag = fmt_num(h)
        alpha_files = []
        for i, st in enumerate(sts, start=1):
            if st is None:
                alpha_files.append(None)
                continue
            name = f"sim_alpha_layer_{i:02d}_h{tag}.png"
            save_channel(simulate_alpha(st, params, canvas=(W, H)), out / name)
            alpha_files.append(name)
        comp = f"composite_h{tag}.png"
        save_rgb(simulate_composite(decomp, sts, params), out / comp)
        runs.append({"height": float(h), "alpha_files": alpha_files, "composite": comp})
        print(f"h={tag}: wrote {comp}")
    m["simulate"] = {
        "radius_cm": cfg["hole_radius"],
        "prefactor": cfg["prefactor"],
        "truncation_sigmas": cfg["truncation_sigmas"],
        "runs": runs,
    }
    return m


def run_mesh(m: dict, cfg: dict, out: Path) -> dict:
    sts = _load_stipplings(out, m)
    W, H = m["canvas"]["width"], m["canvas"]["height"]
    scale = m["stipple"]["scale_cm_per_px"]
    plates, walls = [], []
    for i, st in enumerate(sts, start=1):
        if st is None:
            plates.append({"layer": i, "file": None})
            continue
        params = PlateParams(cfg["thickness"], cfg["hole_radius"], cfg["hole_segments"],
                             cfg["margin"], 1.0, cfg["clearance"])
        mesh = build_stencil_plate(st, params)
        report = validate_mesh(mesh)
        if not report.is_valid:
            raise StageError(f"plate for layer {i} failed validation: {report}")
        name = f"stencil_layer_{i:02d}.stl"
        write_stl(mesh, out / name)
        plates.append({"layer": i, "file": name, "triangles": int(len(mesh.triangles)),
                       "genus": report.genus, "volume_cm3": report.signed_volume_cm3})
    canvas = Stippling(np.zeros((0, 2)), W, H, scale)
    for wh in cfg["wall_heights"]:
        params = PlateParams(cfg["thickness"], cfg["hole_radius"], cfg["hole_segments"],
                             cfg["margin"], wh, cfg["clearance"])
        mesh = build_wall(canvas, params)
        report = validate_mesh(mesh)
        if not report.is_valid:
            raise StageError(f"wall of height {wh} failed validation: {report}")
        name = f"wall_h{fmt_num(wh)}.stl"
        write_stl(mesh, out / name)
        walls.append({"height_cm": float(wh), "file": name, "triangles": int(len(mesh.triangles))})
    m["mesh"] = {
        "plate": {"thickness_cm": cfg["thickness"], "hole_radius_cm": cfg["hole_radius"],
                  "hole_segments": cfg["hole_segments"], "margin_cm": cfg["margin"],
                  "fit_clearance_cm": cfg["clearance"]},
        "plates": plates,
        "walls": walls,
    }
    print(f"wrote {sum(p['file'] is not None for p in plates)} plates, {len(walls)} walls")
    return m


# -- argument parsing --------------------------------------------------------

def _pos_int(s):
    v = int(s)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _float_list(s):
    try:
        vals = [float(t) for t in s.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad number list: {s!r}") from exc
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _add_common(p):
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("--seed", type=int, help="root random seed")
    p.add_argument("--config", type=Path, help="JSON file of option defaults (flags override)")


def _add_decompose(p):
    p.add_argument("--layers", type=_pos_int, help="number of alpha layers L")
    p.add_argument("--gamma-data", type=float)
    p.add_argument("--gamma-smooth", type=float)
    p.add_argument("--gamma-sparse", type=float)
    p.add_argument("--max-outer-iters", type=_pos_int)
    p.add_argument("--outer-tol", type=float)
    p.add_argument("--qp-max-iters", type=_pos_int)
    p.add_argument("--qp-grad-tol", type=float)
    p.add_argument("--no-restarts", dest="background_restarts", action="store_false",
                   help="run only the largest-cluster background start")


def _add_stipple(p):
    p.add_argument("--dots", type=_pos_int, help="dots per layer")
    p.add_argument("--lloyd-iters", type=_pos_int)
    p.add_argument("--move-tol", type=float)
    p.add_argument("--scale", type=float, help="cm per pixel")


def _add_simulate(p):
    p.add_argument("--height", type=_float_list, help="comma list of nozzle heights h")
    p.add_argument("--prefactor", type=float)
    p.add_argument("--truncation-sigmas", type=float)
    p.add_argument("--hole-radius", type=float, help="hole radius in cm")


def _add_mesh(p, radius=True):
    p.add_argument("--thickness", type=float)
    p.add_argument("--hole-segments", type=_pos_int)
    p.add_argument("--margin", type=float)
    p.add_argument("--clearance", type=float)
    p.add_argument("--wall-heights", type=_float_list, help="comma list of wall heights in cm")
    if radius:
        p.add_argument("--hole-radius", type=float, help="hole radius in cm")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stencilforge", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    sd = argparse.SUPPRESS

    p = sub.add_parser("decompose", argument_default=sd, help="image -> alpha layers + palette")
    p.add_argument("input", type=Path)
    _add_common(p)
    _add_decompose(p)

    for name, helptext, adders in [
        ("stipple", "layers -> stipplings", [_add_stipple]),
        ("simulate", "stipplings -> simulated spray composites", [_add_simulate]),
        ("mesh", "stipplings -> stencil plate and wall STLs", [lambda q: _add_mesh(q, True)]),
    ]:
        p = sub.add_parser(name, argument_default=sd, help=helptext)
        p.add_argument("manifest", type=Path, help="manifest.json (or its directory)")
        _add_common(p)
        for add in adders:
            add(p)

    p = sub.add_parser("pipeline", argument_default=sd, help="run all stages")
    p.add_argument("input", type=Path)
    _add_common(p)
    _add_decompose(p)
    _add_stipple(p)
    _add_simulate(p)
    _add_mesh(p, radius=False)
    return parser


def resolve_config(ns: argparse.Namespace, parser) -> tuple[dict, set]:
    """Defaults, then the JSON config file, then explicit flags.

    Also returns the set of keys the user set by file or flag.
    """
    cfg = dict(DEFAULTS)
    explicit = set()
    given = vars(ns).copy()
    cfg_path = given.pop("config", None)
    if cfg_path is not None:
        try:
            extra = json.loads(Path(cfg_path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            parser.error(f"cannot read config {cfg_path}: {exc}")
        unknown = set(extra) - set(DEFAULTS)
        if unknown:
            parser.error(f"unknown config keys: {', '.join(sorted(unknown))}")
        cfg.update(extra)
        explicit |= set(extra)
    cfg.update(given)
    explicit |= set(given)
    for key in ("height", "wall_heights"):
        if not isinstance(cfg[key], list):
            cfg[key] = [float(cfg[key])]
    if int(cfg["layers"]) < 1:
        parser.error("layers must be >= 1")
    if int(cfg["dots"]) < 1:
        parser.error("dots must be >= 1")
    return cfg, explicit


def _manifest_dir(path: Path) -> Path:
    return path if path.is_dir() else path.parent


def main(argv=None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    command = ns.command
    del ns.command
    cfg, explicit = resolve_config(ns, parser)
    try:
        if command in ("decompose", "pipeline"):
            out = Path(cfg.get("out") or ".")
            m = run_decompose(Path(cfg["input"]), cfg, out)
            if command == "pipeline":
                m = run_stipple(m, cfg, out)
                m = run_simulate(m, cfg, out)
                m = run_mesh(m, cfg, out)
                m["pipeline"] = {k: v for k, v in sorted(cfg.items())
                                 if k not in ("out", "input")}
            save_manifest(out, m)
        else:
            src = _manifest_dir(Path(cfg["manifest"]))
            out = Path(cfg.get("out") or src)
            m = load_manifest(src)
            if "seed" not in explicit:
                cfg["seed"] = m["seed"]
            if out.resolve() != src.resolve():
                raise StageError("--out must be the manifest's directory for downstream stages")
            stage = {"stipple": run_stipple, "simulate": run_simulate, "mesh": run_mesh}[command]
            m = stage(m, cfg, out)
            save_manifest(out, m)
    except (StageError, ValueError, OSError, RuntimeError) as exc:
        print(f"stencilforge {command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
