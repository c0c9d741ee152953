"""Attack scenarios, verdict reports, and trace replay.

run_attack wires the pieces together: build (or plan) a layout, seed a check
pattern into every row a hammered aggressor can reach, hammer, then classify
each recorded bitflip by the owning region. The verdict is MITIGATED exactly
when no flip lands in victim-owned memory.
"""

from __future__ import annotations

import bisect
import hashlib
import json
import os
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .dram import BitflipRecord, HammerParams, SimState, Stats
from .layout import (
    AggressorSite,
    MemoryLayout,
    Region,
    check_layout,
    classify_pa,
    find_aggressors,
    plan_citadel,
    plan_siloz,
    row_footprint,
)
from .mapping import (
    AddressMapping,
    DramCoordinate,
    Geometry,
    builtin_mappings,
    default_geometry,
    load_mapping,
)

__all__ = [
    "MITIGATED",
    "NOT_MITIGATED",
    "MITIGATIONS",
    "ScenarioError",
    "TraceError",
    "Scenario",
    "AttackReport",
    "AccessTrace",
    "run_attack",
    "run_matrix",
    "replay_trace",
    "parse_trace",
    "format_trace",
    "sequential_trace",
    "strided_trace",
    "matvec_trace",
    "toggle_trace",
    "synth_trace",
    "parse_size",
    "pack_layout",
    "scenario_from_dict",
    "load_scenario",
    "load_matrix_scenarios",
    "builtin_matrix",
    "matrix_summary",
    "report_to_json",
]

MITIGATED = "MITIGATED"
NOT_MITIGATED = "NOT_MITIGATED"
MITIGATIONS = ("none", "siloz", "citadel")

RowTuple = tuple[int, int, int, int, int]


class ScenarioError(ValueError):
    """Ill-formed or unrunnable scenario."""


class TraceError(ValueError):
    """Malformed trace file."""


def parse_size(value) -> int:
    """Parse a byte count: int, decimal/hex string, or KiB/MiB/GiB suffix."""
    if isinstance(value, bool):
        raise ScenarioError(f"not a size: {value!r}")
    if isinstance(value, int):
        return value
    text = str(value).strip()
    try:
        for suffix, factor in (("KiB", 1 << 10), ("MiB", 1 << 20), ("GiB", 1 << 30)):
            if text.endswith(suffix):
                return int(text[: -len(suffix)]) * factor
        return int(text, 0)
    except ValueError:
        raise ScenarioError(f"not a size: {value!r}") from None


@dataclass(frozen=True)
class Scenario:
    """One attack configuration against a two-sided VM layout."""

    mapping: AddressMapping
    hammer: HammerParams
    vm_sizes: tuple[int, ...]
    mitigation: str = "none"
    guard_global_rows: int = 1
    attacker_vm: str = "vm1"
    victim_vm: str = "vm0"
    hammer_count: int | None = None  # None means hc_first + 1000
    refresh_every: int = 100_000
    aggressor_selection: str | tuple[int, ...] = "all"
    check_pattern: int = 0xAA
    label: str = "inline"

    def __post_init__(self) -> None:
        if self.mitigation not in MITIGATIONS:
            raise ScenarioError(f"unknown mitigation {self.mitigation!r}")
        if not self.vm_sizes:
            raise ScenarioError("vm_sizes must name at least one VM")
        if self.attacker_vm == self.victim_vm:
            raise ScenarioError("attacker_vm and victim_vm must differ")
        if self.hammer_count is not None and self.hammer_count < 1:
            raise ScenarioError(f"hammer_count must be >= 1, got {self.hammer_count}")
        if self.refresh_every < 1:
            raise ScenarioError(f"refresh_every must be >= 1, got {self.refresh_every}")
        if not 0 <= self.check_pattern <= 0xFF:
            raise ScenarioError(f"check_pattern must be a byte, got {self.check_pattern}")
        if isinstance(self.aggressor_selection, str):
            if self.aggressor_selection not in ("all", "first"):
                raise ScenarioError(
                    f"aggressor_selection must be 'all', 'first', or a row list, "
                    f"got {self.aggressor_selection!r}"
                )
        else:
            if not self.aggressor_selection:
                raise ScenarioError("explicit aggressor_selection must list rows")

    @property
    def effective_hammer_count(self) -> int:
        if self.hammer_count is not None:
            return self.hammer_count
        return self.hammer.hc_first + 1000

    def canonical_dict(self) -> dict:
        selection = self.aggressor_selection
        return {
            "mapping": self.mapping.to_dict(),
            "hammer": {
                "hc_first": self.hammer.hc_first,
                "flip_probability": self.hammer.flip_probability,
                "blast_radius": self.hammer.blast_radius,
                "deterministic_mode": self.hammer.deterministic_mode,
                "rng_seed": self.hammer.rng_seed,
            },
            "mitigation": self.mitigation,
            "guard_global_rows": self.guard_global_rows,
            "vm_sizes": list(self.vm_sizes),
            "attacker_vm": self.attacker_vm,
            "victim_vm": self.victim_vm,
            "hammer_count": self.effective_hammer_count,
            "refresh_every": self.refresh_every,
            "aggressor_selection": list(selection) if not isinstance(selection, str) else selection,
            "check_pattern": self.check_pattern,
            "label": self.label,
        }

    def hash(self) -> str:
        canon = json.dumps(self.canonical_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()


def scenario_from_dict(data: dict, base_dir: str | None = None) -> Scenario:
    """Build a Scenario from a parsed scenario file.

    The mapping may be a preset name, a mapping-file path (relative to the
    scenario file), or an inline geometry+functions object. A top-level
    geometry object applies to preset names only.
    """
    if not isinstance(data, dict):
        raise ScenarioError("scenario must be an object")
    if "mapping" not in data:
        raise ScenarioError("scenario is missing the mapping field")
    spec = data["mapping"]
    if isinstance(spec, dict):
        if "geometry" not in spec or "functions" not in spec:
            raise ScenarioError("inline mapping needs geometry and functions")
        mapping = AddressMapping.build(
            Geometry.from_dict(spec["geometry"]), spec["functions"]
        )
        label = data.get("label", "inline")
    elif isinstance(spec, str):
        geometry = (
            Geometry.from_dict(data["geometry"]) if "geometry" in data else default_geometry()
        )
        try:
            presets = builtin_mappings(geometry)
        except Exception:
            presets = {}
        if spec in presets:
            mapping = presets[spec]
            label = data.get("label", spec)
        else:
            path = spec if os.path.isabs(spec) or base_dir is None else os.path.join(base_dir, spec)
            mapping = load_mapping(path)
            label = data.get("label", os.path.splitext(os.path.basename(path))[0])
    else:
        raise ScenarioError(f"mapping must be a name, path, or object, got {spec!r}")
    hammer_in = data.get("hammer", {})
    if not isinstance(hammer_in, dict):
        raise ScenarioError("hammer must be an object")
    try:
        hammer = HammerParams(
            hc_first=hammer_in.get("hc_first", 50_000),
            flip_probability=hammer_in.get("flip_probability", 1e-4),
            blast_radius=hammer_in.get("blast_radius", 1),
            deterministic_mode=hammer_in.get("deterministic_mode", False),
            rng_seed=hammer_in.get("rng_seed", 0),
        )
    except ValueError as exc:
        raise ScenarioError(str(exc)) from None
    if "vm_sizes" not in data:
        raise ScenarioError("scenario is missing vm_sizes")
    sizes = tuple(parse_size(s) for s in data["vm_sizes"])
    selection = data.get("aggressor_selection", "all")
    if isinstance(selection, list):
        selection = tuple(int(r) for r in selection)
    return Scenario(
        mapping=mapping,
        hammer=hammer,
        vm_sizes=sizes,
        mitigation=data.get("mitigation", "none"),
        guard_global_rows=int(data.get("guard_global_rows", 1)),
        attacker_vm=data.get("attacker_vm", "vm1"),
        victim_vm=data.get("victim_vm", "vm0"),
        hammer_count=data.get("hammer_count"),
        refresh_every=int(data.get("refresh_every", 100_000)),
        aggressor_selection=selection,
        check_pattern=int(data.get("check_pattern", 0xAA)),
        label=label,
    )


def load_scenario(path: str) -> Scenario:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ScenarioError(
                f"{path}: not valid JSON at line {exc.lineno}: {exc.msg}"
            ) from None
    return scenario_from_dict(data, base_dir=os.path.dirname(os.path.abspath(path)))


# -- layout construction --------------------------------------------------------


def pack_layout(mapping: AddressMapping, vm_sizes: tuple[int, ...]) -> MemoryLayout:
    """Unmitigated baseline: VMs packed back-to-back from PA 0."""
    regions = []
    pos = 0
    for i, size in enumerate(vm_sizes):
        regions.append(Region(f"vm{i}", pos, size))
        pos += size
    return MemoryLayout(tuple(regions))


def _build_layout(scenario: Scenario):
    siloz_plan = None
    if scenario.mitigation == "none":
        layout = pack_layout(scenario.mapping, scenario.vm_sizes)
    elif scenario.mitigation == "siloz":
        siloz_plan = plan_siloz(scenario.mapping, list(scenario.vm_sizes))
        layout = siloz_plan.layout
    else:
        layout = plan_citadel(
            scenario.mapping, list(scenario.vm_sizes), scenario.guard_global_rows
        )
    violations = check_layout(layout, scenario.mapping.geometry)
    if violations:
        raise ScenarioError("planned layout is malformed: " + "; ".join(violations))
    return layout, siloz_plan


# -- aggressor fallback and selection --------------------------------------------


def _boundary_fallback(
    mapping: AddressMapping, layout: MemoryLayout, attacker_vm: str, victim_vm: str
) -> list[AggressorSite]:
    """Nearest attacker rows to the victim footprint, same subarray preferred.

    Used when the mitigation leaves no attacker row adjacent to a victim row;
    the attack then hammers across the isolation boundary anyway.
    """
    return list(_boundary_fallback_cached(mapping, layout, attacker_vm, victim_vm))


@lru_cache(maxsize=64)
def _boundary_fallback_cached(
    mapping: AddressMapping, layout: MemoryLayout, attacker_vm: str, victim_vm: str
) -> tuple[AggressorSite, ...]:
    geo = mapping.geometry
    attacker_rows = row_footprint(mapping, layout.region_of(attacker_vm)).rows
    victim_rows = row_footprint(mapping, layout.region_of(victim_vm)).rows
    victims_by_bt: dict[tuple, list[int]] = {}
    for ch, rk, bg, bk, row in victim_rows:
        victims_by_bt.setdefault((ch, rk, bg, bk), []).append(row)
    for rows in victims_by_bt.values():
        rows.sort()
    all_victim_indices = sorted({rt[4] for rt in victim_rows})

    def nearest(candidates: list[int], row: int) -> tuple[int, int]:
        i = bisect.bisect_left(candidates, row)
        around = candidates[max(0, i - 1) : i + 1]
        return min((abs(row - v), v) for v in around)

    ranked = []
    for ch, rk, bg, bk, row in sorted(attacker_rows):
        candidates = victims_by_bt.get((ch, rk, bg, bk)) or all_victim_indices
        dist, vrow = nearest(candidates, row)
        same_sub = 0 if geo.subarray_of(vrow) == geo.subarray_of(row) else 1
        ranked.append(((same_sub, dist), (ch, rk, bg, bk, row)))
    best = min(key for key, _ in ranked)
    sites = []
    for key, (ch, rk, bg, bk, row) in ranked:
        if key != best:
            continue
        coord = DramCoordinate(ch, rk, bg, bk, row, 0)
        sites.append(AggressorSite(mapping.coord_to_pa(coord), coord, ()))
    return tuple(sites)


def _select_aggressors(
    sites: list[AggressorSite], selection: str | tuple[int, ...]
) -> list[AggressorSite]:
    if selection == "all":
        return sites
    if selection == "first":
        return sites[:1]
    wanted = set(selection)
    chosen = [s for s in sites if s.coord.row in wanted]
    if not chosen:
        raise ScenarioError(
            f"aggressor_selection rows {sorted(wanted)} are not candidate aggressors"
        )
    return chosen


# -- pattern seeding --------------------------------------------------------------


@lru_cache(maxsize=32)
def _column_pa_deltas(mapping: AddressMapping) -> tuple[int, ...]:
    width = mapping.geometry.coord_width("column")
    return tuple(
        mapping.coord_to_pa(DramCoordinate(0, 0, 0, 0, 0, 1 << i)) for i in range(width)
    )


def row_pa_array(mapping: AddressMapping, row_tuple: RowTuple) -> np.ndarray:
    """Physical addresses of every byte of one row, indexed by column."""
    ch, rk, bg, bk, row = row_tuple
    base = mapping.coord_to_pa(DramCoordinate(ch, rk, bg, bk, row, 0))
    out = np.zeros(mapping.geometry.columns, dtype=np.int64)
    filled = 1
    for delta in _column_pa_deltas(mapping):
        out[filled : 2 * filled] = out[:filled] ^ delta
        filled *= 2
    return out ^ base


def _reachable_rows(
    geometry: Geometry, sites: list[AggressorSite], blast_radius: int
) -> list[RowTuple]:
    """Rows a hammered aggressor can flip: same bank tuple and subarray,
    within the blast radius. These are the rows worth pattern-seeding."""
    rows: set[RowTuple] = set()
    for site in sites:
        row = site.coord.row
        sub = geometry.subarray_of(row)
        for delta in range(-blast_radius, blast_radius + 1):
            victim = row + delta
            if delta == 0 or not 0 <= victim < geometry.rows:
                continue
            if geometry.subarray_of(victim) != sub:
                continue
            rows.add(site.coord.bank_tuple + (victim,))
    return sorted(rows)


def seed_pattern(
    state: SimState, rows: list[RowTuple], pattern: int
) -> None:
    for rt in rows:
        for pa in row_pa_array(state.mapping, rt).tolist():
            state.write_byte(pa, pattern)


def sweep_rows(state: SimState, rows: list[RowTuple]) -> dict[int, int]:
    """Read back seeded rows; report bytes by PA (for post-hoc flip checks)."""
    observed = {}
    for rt in rows:
        for pa in row_pa_array(state.mapping, rt).tolist():
            observed[pa] = state.read_byte(pa)
    return observed


# -- the attack itself -------------------------------------------------------------


@dataclass
class AttackReport:
    scenario: Scenario
    layout: MemoryLayout
    siloz_groups: dict | None
    aggressors: tuple[AggressorSite, ...]
    boundary_fallback: bool
    seeded_rows: tuple[RowTuple, ...]
    flips: tuple[BitflipRecord, ...]
    flip_owners: tuple[str, ...]
    ownership_histogram: dict[str, int]
    verdict: str
    stats: Stats
    tool_version: str = field(default="")

    def to_dict(self) -> dict:
        geo = self.scenario.mapping.geometry
        digits = max(1, (geo.address_width + 3) // 4)
        out = {
            "tool": {"name": "vmhammer", "version": self.tool_version},
            "scenario": self.scenario.canonical_dict(),
            "scenario_hash": self.scenario.hash(),
            "verdict": self.verdict,
            "layout": self.layout.to_dict(digits),
            "aggressors": [a.to_dict(geo, digits) for a in self.aggressors],
            "boundary_fallback": self.boundary_fallback,
            "seeded_rows": [list(rt) for rt in self.seeded_rows],
            "flips": [
                dict(f.to_dict(geo, digits), owner=owner)
                for f, owner in zip(self.flips, self.flip_owners)
            ],
            "ownership_histogram": dict(sorted(self.ownership_histogram.items())),
            "stats": self.stats.to_dict(),
        }
        if self.siloz_groups is not None:
            out["siloz"] = self.siloz_groups
        return out


def report_to_json(report: AttackReport | dict) -> str:
    data = report.to_dict() if isinstance(report, AttackReport) else report
    return json.dumps(data, indent=2, sort_keys=True) + "\n"


def run_attack(scenario: Scenario) -> AttackReport:
    """Plan, seed, hammer, classify. Deterministic for equal scenarios."""
    from . import __version__

    layout, siloz_plan = _build_layout(scenario)
    owners = {f"vm{i}" for i in range(len(scenario.vm_sizes))}
    for vm in (scenario.attacker_vm, scenario.victim_vm):
        if vm not in owners:
            raise ScenarioError(f"{vm!r} is not one of the planned VMs {sorted(owners)}")
    blast = scenario.hammer.blast_radius
    sites = find_aggressors(
        scenario.mapping, layout, scenario.attacker_vm, scenario.victim_vm, blast
    )
    fallback = False
    if not sites:
        if scenario.mitigation == "none":
            raise ScenarioError(
                "no attacker row is adjacent to the victim; nothing to hammer"
            )
        sites = _boundary_fallback(
            scenario.mapping, layout, scenario.attacker_vm, scenario.victim_vm
        )
        fallback = True
    selected = _select_aggressors(sites, scenario.aggressor_selection)
    state = SimState(scenario.mapping, scenario.hammer)
    seeded = _reachable_rows(scenario.mapping.geometry, selected, blast)
    seed_pattern(state, seeded, scenario.check_pattern)
    issued = 0
    for site in selected:
        for _ in range(scenario.effective_hammer_count):
            state.activate_row(site.coord)
            issued += 1
            if issued % scenario.refresh_every == 0:
                state.refresh()
    flips = tuple(state.collect_flips())
    flip_owners = tuple(classify_pa(layout, f.pa) for f in flips)
    histogram: dict[str, int] = {}
    for owner in flip_owners:
        histogram[owner] = histogram.get(owner, 0) + 1
    verdict = MITIGATED if histogram.get(scenario.victim_vm, 0) == 0 else NOT_MITIGATED
    return AttackReport(
        scenario=scenario,
        layout=layout,
        siloz_groups=siloz_plan.to_dict() if siloz_plan is not None else None,
        aggressors=tuple(selected),
        boundary_fallback=fallback,
        seeded_rows=tuple(seeded),
        flips=flips,
        flip_owners=flip_owners,
        ownership_histogram=histogram,
        verdict=verdict,
        stats=state.stats,
        tool_version=__version__,
    )


def run_matrix(scenarios: list[Scenario]) -> list[AttackReport | dict]:
    """Run scenarios independently; errors land in the failing slot."""
    out: list[AttackReport | dict] = []
    for i, scenario in enumerate(scenarios):
        try:
            out.append(run_attack(scenario))
        except Exception as exc:  # keep the matrix going; error is data here
            out.append(
                {
                    "index": i,
                    "label": getattr(scenario, "label", "?"),
                    "mitigation": getattr(scenario, "mitigation", "?"),
                    "error": {"type": type(exc).__name__, "message": str(exc)},
                }
            )
    return out


def matrix_summary(reports: list[AttackReport | dict]) -> dict:
    """Verdict grid keyed by mitigation, then mapping label."""
    grid: dict[str, dict[str, str]] = {}
    for report in reports:
        if isinstance(report, AttackReport):
            mit = report.scenario.mitigation
            label = report.scenario.label
            cell = report.verdict
        else:
            mit = str(report.get("mitigation", "?"))
            label = str(report.get("label", "?"))
            cell = "ERROR"
        grid.setdefault(mit, {})[label] = cell
    return grid


def builtin_matrix(
    hc_first: int = 50_000,
    deterministic: bool = True,
    rng_seed: int = 0,
    flip_probability: float = 1e-4,
    hammer_count: int | None = None,
    mitigations: tuple[str, ...] = MITIGATIONS,
    mapping_names: tuple[str, ...] = ("simple", "bank-xor", "bank-xor-noncontig-row"),
    vm_size_overrides: dict[str, tuple[int, ...]] | None = None,
) -> list[Scenario]:
    """The default mitigation/mapping grid over the built-in presets.

    VM pairs are sized per mitigation so each planner's behavior is visible:
    8 MiB adjacent VMs for the unmitigated baseline, 16 MiB for subarray-group
    isolation, 256 MiB with one guard row for guard-row isolation.
    """
    presets = builtin_mappings(default_geometry())
    sizes: dict[str, tuple[int, ...]] = {
        "none": (8 << 20, 8 << 20),
        "siloz": (16 << 20, 16 << 20),
        "citadel": (256 << 20, 256 << 20),
    }
    if vm_size_overrides:
        sizes.update(vm_size_overrides)
    hammer = HammerParams(
        hc_first=hc_first,
        flip_probability=flip_probability,
        deterministic_mode=deterministic,
        rng_seed=rng_seed,
    )
    scenarios = []
    for mitigation in mitigations:
        for name in mapping_names:
            scenarios.append(
                Scenario(
                    mapping=presets[name],
                    hammer=hammer,
                    vm_sizes=sizes[mitigation],
                    mitigation=mitigation,
                    guard_global_rows=1,
                    attacker_vm="vm1",
                    victim_vm="vm0",
                    hammer_count=hammer_count,
                    refresh_every=100_000,
                    aggressor_selection="first",
                    label=name,
                )
            )
    return scenarios


def load_matrix_scenarios(path: str) -> list[Scenario]:
    """Scenarios from a {"scenarios": [...]} file or a directory of *.json."""
    if os.path.isdir(path):
        scenarios = []
        for name in sorted(os.listdir(path)):
            if name.endswith(".json"):
                scenarios.append(load_scenario(os.path.join(path, name)))
        if not scenarios:
            raise ScenarioError(f"{path}: no *.json scenario files")
        return scenarios
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ScenarioError(
                f"{path}: not valid JSON at line {exc.lineno}: {exc.msg}"
            ) from None
    if not isinstance(data, dict) or "scenarios" not in data:
        raise ScenarioError(f"{path}: expected an object with a scenarios array")
    base = os.path.dirname(os.path.abspath(path))
    return [scenario_from_dict(entry, base) for entry in data["scenarios"]]


# -- traces -------------------------------------------------------------------------

TraceOp = tuple[str, int, "int | None"]


@dataclass(frozen=True)
class AccessTrace:
    entries: tuple[TraceOp, ...]

    def __len__(self) -> int:
        return len(self.entries)


def parse_trace(text: str) -> AccessTrace:
    """Parse trace lines: 'R <hex-pa>' or 'W <hex-pa> <hex-byte>', # comments."""
    entries = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        kind = parts[0].upper()
        try:
            if kind == "R" and len(parts) == 2:
                entries.append(("read", int(parts[1], 16), None))
            elif kind == "W" and len(parts) == 3:
                data = int(parts[2], 16)
                if not 0 <= data <= 0xFF:
                    raise ValueError
                entries.append(("write", int(parts[1], 16), data))
            else:
                raise ValueError
        except ValueError:
            raise TraceError(f"line {lineno}: malformed trace entry {raw.strip()!r}") from None
    return AccessTrace(tuple(entries))


def format_trace(trace: AccessTrace) -> str:
    lines = []
    for kind, pa, data in trace.entries:
        if kind == "read":
            lines.append(f"R 0x{pa:x}")
        else:
            lines.append(f"W 0x{pa:x} 0x{data:02x}")
    return "\n".join(lines) + "\n"


def _check_limit(pas, limit: int | None) -> None:
    if limit is None:
        return
    worst = max(pas)
    if worst >= limit or min(pas) < 0:
        raise ValueError(
            f"trace overflows the region: pa 0x{worst:x} not below 0x{limit:x}"
        )


def sequential_trace(base_pa: int, count: int, limit: int | None = None) -> AccessTrace:
    """count reads of consecutive byte addresses starting at base_pa."""
    pas = [base_pa + i for i in range(count)]
    _check_limit(pas, limit)
    return AccessTrace(tuple(("read", pa, None) for pa in pas))


def strided_trace(
    base_pa: int, stride: int, count: int, limit: int | None = None
) -> AccessTrace:
    """count reads spaced stride bytes apart."""
    pas = [base_pa + i * stride for i in range(count)]
    _check_limit(pas, limit)
    return AccessTrace(tuple(("read", pa, None) for pa in pas))


def matvec_trace(
    rows: int,
    cols: int,
    base_pa: int,
    element_size: int = 8,
    limit: int | None = None,
) -> AccessTrace:
    """Read pattern of a row-major matrix-vector product.

    The matrix lives at base_pa, the vector directly after it. The matrix is
    streamed once; the vector is re-read for every matrix row. Per element the
    order is matrix read, then vector read (one read per element).
    """
    vector_base = base_pa + rows * cols * element_size
    entries = []
    for i in range(rows):
        for j in range(cols):
            entries.append(("read", base_pa + (i * cols + j) * element_size, None))
            entries.append(("read", vector_base + j * element_size, None))
    _check_limit([pa for _, pa, _ in entries], limit)
    return AccessTrace(tuple(entries))


def toggle_trace(
    base_pa: int, mask: int, count: int, limit: int | None = None
) -> AccessTrace:
    """count reads alternating between base_pa and base_pa ^ mask.

    With mask covering a bank-xor input bit plus a row bit, the two addresses
    conflict in one bank under a direct bank mapping but land in different
    banks under an xor mapping, exposing hit-rate differences between the two.
    """
    pas = [base_pa ^ (mask if i & 1 else 0) for i in range(count)]
    _check_limit(pas, limit)
    return AccessTrace(tuple(("read", pa, None) for pa in pas))


def synth_trace(kind: str, limit: int | None = None, **kwargs) -> AccessTrace:
    """Dispatcher over the trace synthesizers by kind name."""
    makers = {
        "sequential": sequential_trace,
        "strided": strided_trace,
        "matvec": matvec_trace,
        "toggle": toggle_trace,
    }
    if kind not in makers:
        raise ValueError(f"unknown trace kind {kind!r}; pick from {sorted(makers)}")
    return makers[kind](limit=limit, **kwargs)


def replay_trace(
    trace: AccessTrace,
    mapping: AddressMapping,
    params: HammerParams,
    refresh_every: int = 100_000,
) -> tuple[Stats, list[BitflipRecord]]:
    """Drive every trace access through a fresh state; refresh by activations."""
    if refresh_every < 1:
        raise ValueError(f"refresh_every must be >= 1, got {refresh_every}")
    state = SimState(mapping, params)
    since_refresh = 0
    for kind, pa, data in trace.entries:
        before = state.stats.activations
        state.access(pa, kind, data)
        since_refresh += state.stats.activations - before
        if since_refresh >= refresh_every:
            state.refresh()
            since_refresh = 0
    return state.stats, state.collect_flips()
