"""Command line interface.

Subcommands:
  tessellate  full pipeline: partition, patches, projection, weld, export
  mc          Marching Cubes baseline to a mesh file
  compare     matched-detail benchmark (CSV + markdown table)
  metrics     quality report for any OBJ/PLY mesh

Runs are driven by a YAML config file; any config key can be overridden on
the command line with ``--set dotted.path=value``, and the common ones have
dedicated flags.  Exit codes: 0 success, 1 configuration or field parse
error, 2 completed with rejected cells.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np
import yaml

from . import bench as bench_mod
from .field import (FieldError, ParseError, ScalarField, builtin_field,
                    field_from_expr)
from .mc import GridSpec, marching_cubes
from .mesh import export_mesh, import_mesh, manifold_audit, write_ply
from .partition import Plane, cell_from_planes
from .pipeline import (OctreeSpec, PipelineError, TessellationOptions,
                       tessellate)
from .projection import ProjectionConfig
from .quality import quality_report


class ConfigError(Exception):
    pass


DEFAULT_CONFIG = {
    "field": {},
    "partition": {},
    "base": "corners",
    "resolution": 4,
    "projection": {
        "angle_threshold": 80.0,
        "max_march_distance": 2.0,
        "march_step": None,
    },
    "threads": 1,
    "output": {"path": "out.obj", "format": None, "report": None},
    "mc": {"spacing": 0.1, "box": None},
    "compare": {"levels": [0.02, 0.008, 0.003], "csv": "compare.csv",
                "markdown": None, "repetitions": 5},
}


def _deep_update(base: dict, extra: dict) -> dict:
    for key, value in extra.items():
        if isinstance(value, dict) and isinstance(base.get(key), dict):
            _deep_update(base[key], value)
        else:
            base[key] = value
    return base


def _set_dotted(cfg: dict, dotted: str, raw: str) -> None:
    keys = dotted.split(".")
    target = cfg
    for k in keys[:-1]:
        target = target.setdefault(k, {})
        if not isinstance(target, dict):
            raise ConfigError(f"cannot override {dotted!r}: {k!r} is a scalar")
    target[keys[-1]] = yaml.safe_load(raw)


def load_config(path: str | None, overrides, flags: dict) -> dict:
    cfg = yaml.safe_load(yaml.safe_dump(DEFAULT_CONFIG))  # deep copy
    if path is not None:
        loaded = yaml.safe_load(Path(path).read_text())
        if not isinstance(loaded, dict):
            raise ConfigError("config file must hold a mapping")
        _deep_update(cfg, loaded)
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, _, value = item.partition("=")
        _set_dotted(cfg, key.strip(), value)
    for dotted, value in flags.items():
        if value is not None:
            _set_dotted(cfg, dotted, str(value))
    return cfg


def field_from_config(cfg: dict) -> ScalarField:
    section = cfg.get("field") or {}
    expr = section.get("expr")
    builtin = section.get("builtin")
    if expr and builtin:
        raise ConfigError("field: give either expr or builtin, not both")
    if expr:
        return field_from_expr(expr)
    if builtin:
        if isinstance(builtin, str):
            name, params = builtin, {}
        else:
            params = dict(builtin)
            name = params.pop("name", None)
            if name is None:
                raise ConfigError("field.builtin needs a name")
        if name == "blend":
            parts = params.pop("fields", None)
            if not parts:
                raise ConfigError("blend builtin needs a fields list")
            sub = [field_from_config({"field": p}) for p in parts]
            return builtin_field("blend", fields=sub, **params)
        return builtin_field(name, **params)
    raise ConfigError("config must define field.expr or field.builtin")


def partition_from_config(cfg: dict):
    section = cfg.get("partition") or {}
    octree = section.get("octree")
    cells = section.get("cells")
    if octree and cells:
        raise ConfigError("partition: give either octree or cells, not both")
    if octree:
        try:
            lo = tuple(float(v) for v in octree["min"])
            hi = tuple(float(v) for v in octree["max"])
        except KeyError as exc:
            raise ConfigError(f"partition.octree missing {exc}") from exc
        return OctreeSpec(lo, hi, int(octree.get("max_depth", 8)),
                          int(octree.get("samples_per_axis", 8)))
    if cells:
        out = []
        for spec in cells:
            planes = [Plane.from_coeffs(c) for c in spec["planes"]]
            out.append(cell_from_planes(planes))
        return out
    raise ConfigError("config must define partition.octree or partition.cells")


def options_from_config(cfg: dict) -> TessellationOptions:
    proj = cfg.get("projection") or {}
    step = proj.get("march_step")
    return TessellationOptions(
        base=cfg.get("base", "corners"),
        resolution=int(cfg.get("resolution", 4)),
        projection=ProjectionConfig(
            max_march_distance=float(proj.get("max_march_distance", 2.0)),
            march_step=None if step in (None, "null") else float(step),
            angle_threshold=float(proj.get("angle_threshold", 80.0)),
        ),
        threads=int(cfg.get("threads", 1)),
    )


def _write_output(mesh, cfg: dict, field=None) -> None:
    out = cfg.get("output") or {}
    path = Path(out.get("path", "out.obj"))
    fmt = out.get("format") or path.suffix.lstrip(".") or "obj"
    path.parent.mkdir(parents=True, exist_ok=True)
    report_path = out.get("report")
    if report_path:
        report = quality_report(mesh, field)
        Path(report_path).write_text(report.to_text())
        mesh = type(mesh)(mesh.positions, mesh.triangles,
                          dict(mesh.channels, **report.channels()), mesh.normals)
    export_mesh(mesh, path, fmt)


def cmd_tessellate(args) -> int:
    cfg = load_config(args.config, args.set, {
        "field.expr": args.field,
        "field.builtin": args.builtin,
        "partition.octree.max_depth": args.octree_depth,
        "resolution": args.resolution,
        "base": args.base,
        "projection.angle_threshold": args.angle_threshold,
        "threads": args.threads,
        "output.path": args.out,
        "output.format": args.format,
    })
    field = field_from_config(cfg)
    partition = partition_from_config(cfg)
    result = tessellate(field, partition, options_from_config(cfg))
    _write_output(result.mesh, cfg, field)
    print(f"accepted {len(result.accepted)} patches, "
          f"{result.mesh.vertex_count} vertices, "
          f"{result.mesh.triangle_count} triangles")
    for outcome in result.rejected:
        print(f"rejected {outcome.label}: {outcome.reason}", file=sys.stderr)
    return 0 if result.all_accepted else 2


def cmd_mc(args) -> int:
    cfg = load_config(args.config, args.set, {
        "field.expr": args.field,
        "field.builtin": args.builtin,
        "mc.spacing": args.spacing,
        "output.path": args.out,
        "output.format": args.format,
    })
    field = field_from_config(cfg)
    mc_cfg = cfg.get("mc") or {}
    box = mc_cfg.get("box")
    if box is None:
        octree = (cfg.get("partition") or {}).get("octree")
        if octree is None:
            raise ConfigError("mc needs mc.box or partition.octree bounds")
        box = [octree["min"], octree["max"]]
    spec = GridSpec.from_box(box[0], box[1], float(mc_cfg.get("spacing", 0.1)))
    mesh = marching_cubes(field, spec)
    if int(mc_cfg.get("fairing_iterations", 0)) > 0:
        from .mc import laplacian_fairing
        mesh = laplacian_fairing(mesh, int(mc_cfg["fairing_iterations"]),
                                 float(mc_cfg.get("fairing_step", 0.5)))
    _write_output(mesh, cfg, field)
    audit = manifold_audit(mesh)
    print(f"marching cubes: {mesh.vertex_count} vertices, "
          f"{mesh.triangle_count} triangles, closed={audit.closed}")
    return 0


def cmd_compare(args) -> int:
    cfg = load_config(args.config, args.set, {
        "field.expr": args.field,
        "field.builtin": args.builtin,
        "threads": args.threads,
    })
    if args.levels:
        cfg["compare"]["levels"] = [float(x) for x in args.levels.split(",")]
    if args.csv:
        cfg["compare"]["csv"] = args.csv
    if args.markdown:
        cfg["compare"]["markdown"] = args.markdown
    field = field_from_config(cfg)
    octree = (cfg.get("partition") or {}).get("octree")
    if octree is None:
        raise ConfigError("compare needs partition.octree bounds")
    comp = cfg["compare"]
    rows = bench_mod.run_benchmark(
        field, (octree["min"], octree["max"]), comp["levels"],
        options_from_config(cfg),
        max_depth=int(octree.get("max_depth", 8)),
        samples_per_axis=int(octree.get("samples_per_axis", 8)),
        repetitions=int(comp.get("repetitions", 5)))
    csv_text = bench_mod.rows_to_csv(rows)
    Path(comp["csv"]).write_text(csv_text)
    md = bench_mod.rows_to_markdown(rows)
    if comp.get("markdown"):
        Path(comp["markdown"]).write_text(md)
    print(md, end="")
    return 0 if all(r.status == "ok" for r in rows) else 2


def cmd_metrics(args) -> int:
    mesh = import_mesh(args.mesh)
    field = None
    if args.field or args.builtin or args.config:
        cfg = load_config(args.config, args.set, {
            "field.expr": args.field,
            "field.builtin": args.builtin,
        })
        field = field_from_config(cfg)
    report = quality_report(mesh, field)
    text = report.to_text()
    if args.report:
        Path(args.report).write_text(text)
    else:
        print(text, end="")
    if args.ply_out:
        colored = type(mesh)(mesh.positions, mesh.triangles,
                             dict(mesh.channels, **report.channels()),
                             mesh.normals)
        write_ply(colored, args.ply_out, color_channel=args.channel)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="isotess",
        description="Tessellate implicit surfaces into near-isotropic meshes")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="YAML config file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override any config key by dotted path")
        p.add_argument("--field", help="implicit field as a DSL expression")
        p.add_argument("--builtin", help="builtin field name")

    t = sub.add_parser("tessellate", help="run the projection pipeline")
    common(t)
    t.add_argument("--octree-depth", type=int, dest="octree_depth")
    t.add_argument("--resolution", type=int)
    t.add_argument("--base", choices=["corners", "transfinite"])
    t.add_argument("--angle-threshold", type=float, dest="angle_threshold")
    t.add_argument("--threads", type=int)
    t.add_argument("--out")
    t.add_argument("--format", choices=["obj", "ply"])
    t.set_defaults(func=cmd_tessellate)

    m = sub.add_parser("mc", help="marching cubes baseline")
    common(m)
    m.add_argument("--spacing", type=float)
    m.add_argument("--out")
    m.add_argument("--format", choices=["obj", "ply"])
    m.set_defaults(func=cmd_mc)

    c = sub.add_parser("compare", help="benchmark projection vs marching cubes")
    common(c)
    c.add_argument("--levels", help="comma-separated chordal error targets")
    c.add_argument("--csv")
    c.add_argument("--markdown")
    c.add_argument("--threads", type=int)
    c.set_defaults(func=cmd_compare)

    q = sub.add_parser("metrics", help="quality report for an OBJ/PLY mesh")
    common(q)
    q.add_argument("mesh", help="mesh file to analyze")
    q.add_argument("--report", help="write the report here instead of stdout")
    q.add_argument("--ply-out", dest="ply_out", help="write a colorized PLY")
    q.add_argument("--channel", default="mean_curvature")
    q.set_defaults(func=cmd_metrics)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ParseError, FieldError, PipelineError,
            FileNotFoundError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
