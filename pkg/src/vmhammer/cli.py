"""Command-line front end.

Exit status: 0 for success (valid mapping, MITIGATED verdict), 1 for
domain-negative results (invalid mapping, infeasible plan, NOT_MITIGATED
under --expect-mitigated, matrix slots with errors), 2 for usage, IO, and
parse errors. Successful commands print JSON (or the documented matrix table)
on stdout; errors print a machine-readable object on stderr.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

from . import __version__
from .dram import HammerParams
from .harness import (
    AttackReport,
    ScenarioError,
    TraceError,
    builtin_matrix,
    format_trace,
    load_matrix_scenarios,
    load_scenario,
    matrix_summary,
    parse_size,
    parse_trace,
    pack_layout,
    replay_trace,
    report_to_json,
    run_attack,
    run_matrix,
    synth_trace,
)
from .layout import PlanError, check_layout, plan_citadel, plan_siloz
from .mapping import (
    COORD_KINDS,
    AddressMapping,
    DramCoordinate,
    MappingError,
    builtin_mappings,
    default_geometry,
    load_mapping,
    validate,
)

USAGE_ERROR = 2
DOMAIN_ERROR = 1


def _resolve_mapping(spec: str) -> AddressMapping:
    """A mapping argument is a preset name or a mapping-file path."""
    presets = builtin_mappings(default_geometry())
    if spec in presets:
        return presets[spec]
    if os.path.exists(spec):
        return load_mapping(spec)
    raise MappingError(
        f"{spec!r} is neither a preset ({', '.join(sorted(presets))}) nor a file"
    )


def _emit(args, text: str) -> None:
    if getattr(args, "output", None):
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _emit_json(args, data: dict) -> None:
    _emit(args, json.dumps(data, indent=2, sort_keys=True) + "\n")


def _error(exc: Exception) -> None:
    payload = {"error": {"type": type(exc).__name__, "message": str(exc)}}
    sys.stderr.write(json.dumps(payload, sort_keys=True) + "\n")


def _scenario_overrides(scenario, args):
    """Apply global CLI overrides on top of a loaded scenario."""
    h = scenario.hammer
    hammer = HammerParams(
        hc_first=args.hc_first if args.hc_first is not None else h.hc_first,
        flip_probability=h.flip_probability,
        blast_radius=h.blast_radius,
        deterministic_mode=True if args.deterministic else h.deterministic_mode,
        rng_seed=args.seed if args.seed is not None else h.rng_seed,
    )
    scenario = dataclasses.replace(scenario, hammer=hammer)
    if args.hammer_count is not None:
        scenario = dataclasses.replace(scenario, hammer_count=args.hammer_count)
    return scenario


# -- subcommands -----------------------------------------------------------------


def cmd_validate_map(args) -> int:
    mapping = _resolve_mapping(args.mapping)
    report = validate(mapping)
    _emit_json(args, report.to_dict())
    return 0 if report.valid else DOMAIN_ERROR


def cmd_translate(args) -> int:
    mapping = _resolve_mapping(args.mapping)
    geo = mapping.geometry
    digits = max(1, (geo.address_width + 3) // 4)
    if ":" in args.address:
        parts = args.address.split(":")
        if len(parts) != 6:
            raise ValueError(
                "coordinate must be channel:rank:bankgroup:bank:row:column"
            )
        coord = DramCoordinate(*(int(p, 0) for p in parts))
        pa = mapping.coord_to_pa(coord)
    else:
        pa = int(args.address, 16)
        coord = mapping.pa_to_coord(pa)
    _emit_json(
        args,
        {"pa": f"0x{pa:0{digits}x}", "coordinate": coord.to_dict(geo)},
    )
    return 0


def cmd_plan(args) -> int:
    mapping = _resolve_mapping(args.mapping)
    sizes = [parse_size(s) for s in args.sizes.split(",") if s]
    if not sizes:
        raise ValueError("--sizes must list at least one VM size")
    if args.mitigation == "siloz":
        plan = plan_siloz(mapping, sizes)
        payload = plan.to_dict(max(1, (mapping.geometry.address_width + 3) // 4))
    elif args.mitigation == "citadel":
        layout = plan_citadel(mapping, sizes, args.guard_rows)
        payload = layout.to_dict(max(1, (mapping.geometry.address_width + 3) // 4))
    else:
        layout = pack_layout(mapping, tuple(sizes))
        violations = check_layout(layout, mapping.geometry)
        if violations:
            raise PlanError("; ".join(violations))
        payload = layout.to_dict(max(1, (mapping.geometry.address_width + 3) // 4))
    _emit_json(args, payload)
    return 0


def cmd_attack(args) -> int:
    scenario = load_scenario(args.scenario)
    scenario = _scenario_overrides(scenario, args)
    report = run_attack(scenario)
    _emit(args, report_to_json(report))
    if args.expect_mitigated and report.verdict != "MITIGATED":
        return DOMAIN_ERROR
    return 0


MARKS = {"MITIGATED": "✓", "NOT_MITIGATED": "✗", "ERROR": "!"}


def _render_table(summary: dict) -> str:
    labels: list[str] = []
    for row in summary.values():
        for label in row:
            if label not in labels:
                labels.append(label)
    width = max([len("mitigation")] + [len(m) for m in summary])
    lines = ["  ".join(["mitigation".ljust(width)] + labels)]
    for mitigation, row in summary.items():
        cells = [MARKS.get(row.get(label, ""), "?").center(len(label)) for label in labels]
        lines.append("  ".join([mitigation.ljust(width)] + cells))
    return "\n".join(lines) + "\n"


def cmd_matrix(args) -> int:
    if args.path:
        scenarios = load_matrix_scenarios(args.path)
        scenarios = [_scenario_overrides(s, args) for s in scenarios]
    else:
        scenarios = builtin_matrix(
            hc_first=args.hc_first if args.hc_first is not None else 50_000,
            deterministic=True,
            rng_seed=args.seed if args.seed is not None else 0,
            hammer_count=args.hammer_count,
        )
    reports = run_matrix(scenarios)
    summary = matrix_summary(reports)
    if args.table:
        _emit(args, _render_table(summary))
    else:
        payload = {
            "summary": summary,
            "reports": [
                r.to_dict() if isinstance(r, AttackReport) else r for r in reports
            ],
        }
        _emit_json(args, payload)
    failed = any(not isinstance(r, AttackReport) for r in reports)
    return DOMAIN_ERROR if failed else 0


def cmd_replay_trace(args) -> int:
    mapping = _resolve_mapping(args.mapping)
    with open(args.trace, "r", encoding="utf-8") as fh:
        trace = parse_trace(fh.read())
    params = HammerParams(
        hc_first=args.hc_first if args.hc_first is not None else 50_000,
        flip_probability=args.flip_probability,
        blast_radius=args.blast_radius,
        deterministic_mode=args.deterministic,
        rng_seed=args.seed if args.seed is not None else 0,
    )
    stats, flips = replay_trace(trace, mapping, params, refresh_every=args.refresh_every)
    geo = mapping.geometry
    digits = max(1, (geo.address_width + 3) // 4)
    _emit_json(
        args,
        {
            "stats": stats.to_dict(),
            "flips": [f.to_dict(geo, digits) for f in flips],
        },
    )
    return 0


def cmd_gen_trace(args) -> int:
    kwargs: dict = {"limit": args.limit}
    if args.kind == "sequential":
        kwargs.update(base_pa=args.base, count=args.count)
    elif args.kind == "strided":
        if args.stride is None:
            raise ValueError("strided traces need --stride")
        kwargs.update(base_pa=args.base, stride=args.stride, count=args.count)
    elif args.kind == "matvec":
        if args.rows is None or args.cols is None:
            raise ValueError("matvec traces need --rows and --cols")
        kwargs.update(rows=args.rows, cols=args.cols, base_pa=args.base)
    else:  # toggle
        if args.mask is None:
            raise ValueError("toggle traces need --mask")
        kwargs.update(base_pa=args.base, mask=args.mask, count=args.count)
    trace = synth_trace(args.kind, **kwargs)
    _emit(args, format_trace(trace))
    return 0


# -- parser ------------------------------------------------------------------------


def _hex_int(text: str) -> int:
    return int(text, 0)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--output", help="write the result to a file instead of stdout")
    common.add_argument("--seed", type=int, default=None, help="RNG seed override")
    common.add_argument(
        "--deterministic", action="store_true", help="force deterministic flip mode"
    )
    common.add_argument("--hc-first", type=int, default=None, dest="hc_first",
                        help="activation threshold override")
    common.add_argument("--hammer-count", type=int, default=None, dest="hammer_count",
                        help="activations per aggressor override")

    parser = argparse.ArgumentParser(
        prog="vmhammer",
        description="DRAM address-mapping and RowHammer mitigation workbench",
    )
    parser.add_argument("--version", action="version", version=f"vmhammer {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate-map", parents=[common],
                       help="check a mapping for invertibility")
    p.add_argument("mapping", help="preset name or mapping file")
    p.set_defaults(func=cmd_validate_map)

    p = sub.add_parser("translate", parents=[common],
                       help="translate a PA (hex) or coordinate (ch:rk:bg:bank:row:col)")
    p.add_argument("mapping")
    p.add_argument("address")
    p.set_defaults(func=cmd_translate)

    p = sub.add_parser("plan", parents=[common], help="plan a VM layout")
    p.add_argument("mitigation", choices=["none", "siloz", "citadel"])
    p.add_argument("mapping")
    p.add_argument("--sizes", required=True, help="comma-separated VM sizes (e.g. 16MiB,16MiB)")
    p.add_argument("--guard-rows", type=int, default=1, dest="guard_rows",
                   help="guard rows between VMs (citadel)")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("attack", parents=[common], help="run one attack scenario file")
    p.add_argument("scenario")
    p.add_argument("--expect-mitigated", action="store_true",
                   help="exit 1 unless the verdict is MITIGATED")
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("matrix", parents=[common],
                       help="run a scenario matrix (default: built-in 3x3 grid)")
    p.add_argument("path", nargs="?", help="scenario matrix file or directory")
    p.add_argument("--table", action="store_true", help="print the verdict grid as text")
    p.set_defaults(func=cmd_matrix)

    p = sub.add_parser("replay-trace", parents=[common], help="replay an access trace")
    p.add_argument("trace")
    p.add_argument("mapping")
    p.add_argument("--refresh-every", type=int, default=100_000, dest="refresh_every",
                   help="activations per refresh window")
    p.add_argument("--flip-probability", type=float, default=1e-4, dest="flip_probability")
    p.add_argument("--blast-radius", type=int, default=1, dest="blast_radius")
    p.set_defaults(func=cmd_replay_trace)

    p = sub.add_parser("gen-trace", parents=[common], help="synthesize an access trace")
    p.add_argument("kind", choices=["sequential", "strided", "matvec", "toggle"])
    p.add_argument("--base", type=_hex_int, default=0)
    p.add_argument("--count", type=int, default=1024)
    p.add_argument("--stride", type=_hex_int, default=None)
    p.add_argument("--rows", type=int, default=None)
    p.add_argument("--cols", type=int, default=None)
    p.add_argument("--mask", type=_hex_int, default=None)
    p.add_argument("--limit", type=_hex_int, default=None,
                   help="reject traces reaching past this address")
    p.set_defaults(func=cmd_gen_trace)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        code = exc.code
        if code in (0, None):
            return 0
        return USAGE_ERROR
    try:
        return args.func(args)
    except PlanError as exc:
        _error(exc)
        return DOMAIN_ERROR
    except (MappingError, ScenarioError, TraceError, ValueError, OSError) as exc:
        _error(exc)
        return USAGE_ERROR


if __name__ == "__main__":
    raise SystemExit(main())
