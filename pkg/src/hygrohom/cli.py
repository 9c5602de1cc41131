"""Command-line interface: ``hygrohom <command> ...``.

Exit status is 0 on success, 1 when a computation or input file fails and
2 for usage errors.  Set ``HYGROHOM_LOG`` (e.g. ``DEBUG``) for log output.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from hygrohom import __version__

log = logging.getLogger("hygrohom")

_PHYSICS = {"mech": "mechanical", "thermal": "thermal", "moisture": "moisture"}


def _fmt(x: float) -> str:
    return f"{x:.9g}"


def _materials_arg(text: str):
    """``PHASE=E,nu`` (isotropic), ``PHASE=k`` (transport) or a JSON file path."""
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected PHASE=VALUES, got {text!r}")
    phase, values = text.split("=", 1)
    try:
        nums = [float(v) for v in values.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"non-numeric material values in {text!r}") from None
    return phase, nums


def _add_mesh_args(p: argparse.ArgumentParser):
    p.add_argument("--mesh", type=Path, required=True, help="Gmsh 2.2 ASCII mesh file")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hygrohom",
        description="Multiscale homogenisation and hygro-thermal degradation of textile composites.",
        epilog="Exit status: 0 success, 1 computation or input error, 2 usage error. "
        "Set HYGROHOM_LOG=DEBUG for log output.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--threads", type=int, metavar="N", help="maximum worker threads (default: config value or 1)")
    # accept --threads after the subcommand too, without clobbering a global value
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--threads", type=int, metavar="N", default=argparse.SUPPRESS, help=argparse.SUPPRESS)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    p = sub.add_parser("homogenize", parents=[common], help="effective stiffness, conductivity or diffusivity of an RVE")
    _add_mesh_args(p)
    p.add_argument("--bc", choices=["dirichlet", "periodic", "neumann"], default="periodic")
    p.add_argument("--physics", choices=sorted(_PHYSICS), default="mech")
    p.add_argument(
        "--material",
        action="append",
        type=_materials_arg,
        default=[],
        metavar="PHASE=VALUES",
        help="mech: PHASE=E,nu or PHASE=E_p,E_z,nu_p,nu_z,G_pz; thermal/moisture: PHASE=k (repeatable)",
    )
    p.add_argument("--materials-json", type=Path, help="JSON object of phase -> material entry (config format)")
    p.add_argument("--order", type=int, choices=[1, 2], default=2)
    p.add_argument("--output", type=Path, help="also write a JSON report here")

    p = sub.add_parser("transient", parents=[common], help="macro transient conduction/diffusion from a config file")
    p.add_argument("config", type=Path)
    p.add_argument("--output-dir", type=Path, help="override the config's output_dir")

    p = sub.add_parser("degrade-fit", parents=[common], help="fit the degradation model to experiment CSV data")
    p.add_argument("csv", type=Path, help="CSV with header temperature_C,time_days,G_GPa")
    p.add_argument("--g0", type=float, required=True, help="dry modulus G0 in GPa")
    p.add_argument("--tg-celsius", type=float, required=True, help="glass-transition temperature in deg C")
    p.add_argument("--exclude", type=float, action="append", default=[], metavar="TEMP_C",
                   help="drop the series at this temperature (repeatable)")
    p.add_argument("--output", type=Path, help="also write a JSON fit report here")

    p = sub.add_parser("directions", parents=[common], help="yarn fibre directions from potential flow")
    p.add_argument("config", type=Path)
    p.add_argument("--output-dir", type=Path, help="override the config's output_dir")

    p = sub.add_parser("fe2", parents=[common], help="full one-way coupled multiscale run")
    p.add_argument("config", type=Path)
    p.add_argument("--output-dir", type=Path, help="override the config's output_dir")
    p.add_argument("--no-mechanics", action="store_true", help="run transport and damage stages only")

    p = sub.add_parser("mesh-gen", parents=[common], help="write a generated structured mesh")
    p.add_argument("kind", choices=["box", "laminate", "cylinder", "l_prism"])
    p.add_argument("--divisions", type=int, nargs=3, default=[4, 4, 4], metavar=("NX", "NY", "NZ"))
    p.add_argument("--lengths", type=float, nargs=3, default=[1.0, 1.0, 1.0], metavar=("LX", "LY", "LZ"))
    p.add_argument("--layers", type=int, default=1, help="laminate: layers per phase")
    p.add_argument("--radius", type=float, default=0.3, help="cylinder: yarn radius")
    p.add_argument("--axis", type=int, choices=[0, 1, 2], default=2, help="cylinder: yarn axis")
    p.add_argument("--n-per-leg", type=int, default=4, help="l_prism: cells per leg")
    p.add_argument("--output", "-o", type=Path, required=True)
    return parser


def _homogenize(args) -> int:
    from hygrohom.config import mechanical_material, transport_value
    from hygrohom.homogenisation import homogenise_conductivity, homogenise_stiffness
    from hygrohom.materials import IsotropicElastic, TransverselyIsotropic
    from hygrohom.mesh import parse_mesh

    mesh = parse_mesh(args.mesh)
    physics = _PHYSICS[args.physics]
    mats: dict = {}
    if args.materials_json:
        data = json.loads(args.materials_json.read_text())
        for k, v in data.items():
            mats[k] = mechanical_material(v) if physics == "mechanical" else transport_value(v)
    for phase, nums in args.material:
        if physics == "mechanical":
            if len(nums) == 2:
                mats[phase] = IsotropicElastic(*nums)
            elif len(nums) == 5:
                mats[phase] = TransverselyIsotropic(*nums)
            else:
                raise ValueError(f"phase {phase}: give E,nu or E_p,E_z,nu_p,nu_z,G_pz")
        else:
            if len(nums) != 1:
                raise ValueError(f"phase {phase}: give a single coefficient")
            mats[phase] = nums[0]
    if not mats:
        raise ValueError("no materials given; use --material or --materials-json")
    if physics == "mechanical":
        tensor = homogenise_stiffness(mesh, args.bc, mats, args.order)
    else:
        tensor = homogenise_conductivity(mesh, args.bc, mats, args.order, kind=physics)
    print(tensor.report())
    if args.output:
        report = {
            "kind": tensor.kind,
            "bc": tensor.bc.value,
            "order": tensor.order,
            "tensor": [[float(_fmt(v)) for v in row] for row in tensor.values],
            "max_residual": tensor.max_residual,
            "hill_mandel_gap": tensor.max_hill_mandel_gap,
            "strain_average_gap": tensor.max_strain_average_gap,
        }
        args.output.write_text(json.dumps(report, indent=2) + "\n")
    return 0


def _transient(args) -> int:
    from hygrohom.config import TRANSIENT_SCHEMA, build_mesh, load_config, transport_value
    from hygrohom.transient import TransientProblem, run_transient

    cfg = load_config(args.config, TRANSIENT_SCHEMA)
    base = cfg["_base_dir"]
    mesh = build_mesh(cfg["mesh"], base)
    k = cfg["conductivity"]
    k = {p: transport_value(v) for p, v in k.items()} if isinstance(k, dict) else transport_value(k)
    problem = TransientProblem(
        mesh, k, cfg.get("capacity", 1.0), cfg.get("fixed", {}), cfg.get("flux", {}), cfg.get("time_scale", 1.0)
    )
    out = args.output_dir or (Path(base, cfg["output_dir"]) if "output_dir" in cfg else None)
    name = cfg.get("name", "field")
    run = run_transient(
        problem,
        cfg["initial"],
        cfg["dt"],
        cfg["t_end"],
        cfg.get("snapshot_stride", 1),
        cfg.get("steady_tolerance", 1e-8),
        cfg.get("stop_at_steady", False),
        cfg.get("probes", {}),
        out,
        name,
    )
    print(f"final_time: {_fmt(run.final.time)}")
    print(f"steady_time: {'none' if run.steady_time is None else _fmt(run.steady_time)}")
    print(f"field_range: {_fmt(run.final.field.min())} {_fmt(run.final.field.max())}")
    for pname, vals in run.probe_values.items():
        print(f"probe {pname}: {_fmt(vals[-1])}")
    return 0


def _degrade_fit(args) -> int:
    from hygrohom.degradation import KELVIN_OFFSET, fit_degradation, read_experiments

    series = read_experiments(args.csv, exclude=args.exclude)
    if not series:
        raise ValueError(f"{args.csv}: no data rows")
    report = fit_degradation(series, args.g0, args.tg_celsius + KELVIN_OFFSET, excluded=tuple(args.exclude))
    print(report.text())
    if args.output:
        args.output.write_text(json.dumps(report.as_dict(), indent=2) + "\n")
    return 0


def _directions(args) -> int:
    from hygrohom.config import DIRECTIONS_SCHEMA, build_mesh, load_config
    from hygrohom.vtk import write_vtk
    from hygrohom.yarn import solve_all_yarn_directions

    cfg = load_config(args.config, DIRECTIONS_SCHEMA)
    base = cfg["_base_dir"]
    mesh = build_mesh(cfg["mesh"], base)
    fields = solve_all_yarn_directions(
        mesh, [(y["phase"], y["inlet"], y["outlet"]) for y in cfg["yarns"]], workers=args.threads or 1
    )
    for f in fields:
        mean = f.vectors.mean(axis=0)
        print(
            f"yarn {mesh.phase_label(f.phase)}: elements={len(f.elements)} "
            f"inlet_flux={_fmt(f.inlet_flux)} outlet_flux={_fmt(f.outlet_flux)} "
            f"mean_direction={_fmt(mean[0])} {_fmt(mean[1])} {_fmt(mean[2])}"
        )
    out = args.output_dir or (Path(base, cfg["output_dir"]) if "output_dir" in cfg else None)
    if out is not None:
        directions = np.zeros((mesh.n_elements, 3))
        phi = np.full(mesh.n_nodes, -1.0)
        for f in fields:
            directions[f.elements] = f.vectors
            phi[f.node_map] = f.potential
        path = write_vtk(Path(out) / "directions.vtk", mesh, {"potential": phi}, {"direction": directions})
        print(f"wrote {path}")
    return 0


def _fe2(args) -> int:
    from hygrohom.config import FE2_SCHEMA, load_config
    from hygrohom.fe2 import run_fe2

    cfg = load_config(args.config, FE2_SCHEMA)
    if args.threads is not None:
        cfg["threads"] = args.threads
    result = run_fe2(cfg, output_dir=args.output_dir, mechanics=False if args.no_mechanics else None)
    s = result.summary()
    print(f"steps: {s['n_steps']}  final_time: {_fmt(s['final_time'])}")
    print(f"damage_range: {_fmt(s['damage_range'][0])} {_fmt(s['damage_range'][1])}")
    if s["cache"]:
        c = s["cache"]
        print(f"rve_cache: hits={c['hits']} misses={c['misses']} entries={c['entries']}")
    for name in result.probes:
        h = result.probe_history(name)
        line = f"probe {name}: T={_fmt(h['T'][-1])} c={_fmt(h['c'][-1])} w={_fmt(h['w'][-1])}"
        if "u" in h:
            line += " u=" + " ".join(_fmt(x) for x in h["u"][-1])
        print(line)
    return 0


def _mesh_gen(args) -> int:
    from hygrohom.mesh import (
        generate_box_mesh,
        generate_cylinder_rve,
        generate_l_prism,
        generate_laminate_rve,
        write_mesh,
    )

    if args.kind == "box":
        mesh = generate_box_mesh(args.divisions, args.lengths)
    elif args.kind == "laminate":
        mesh = generate_laminate_rve(args.layers, args.divisions, 2, args.lengths)
    elif args.kind == "cylinder":
        mesh = generate_cylinder_rve(args.divisions, args.radius, args.axis, args.lengths)
    else:
        mesh = generate_l_prism(args.n_per_leg)
    write_mesh(mesh, args.output)
    print(f"wrote {args.output}: {mesh.n_nodes} nodes, {mesh.n_elements} tetrahedra")
    return 0


_COMMANDS = {
    "homogenize": _homogenize,
    "transient": _transient,
    "degrade-fit": _degrade_fit,
    "directions": _directions,
    "fe2": _fe2,
    "mesh-gen": _mesh_gen,
}


def main(argv=None) -> int:
    level = os.environ.get("HYGROHOM_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads is not None and args.threads < 1:
        parser.error("--threads must be at least 1")
    try:
        return _COMMANDS[args.command](args)
    except (OSError, ValueError, KeyError, RuntimeError, ArithmeticError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"hygrohom {args.command}: error: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
