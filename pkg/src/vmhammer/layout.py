"""VM memory layouts over physical address space, and mitigation planners.

A layout is a list of disjoint regions, each owned by a VM, by the hypervisor,
or marked unused. Planners place VMs so that an attacker VM cannot disturb a
victim VM: plan_siloz gives every VM disjoint (bank tuple, subarray) sets,
plan_citadel leaves whole guard rows between row-contiguous allocations.

Footprints (which row of which bank a region touches) are computed exactly for
any validated linear mapping by splitting the region into aligned power-of-two
blocks and enumerating each block's image as an affine GF(2) span.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np

from .mapping import AddressMapping, DramCoordinate, Geometry, stride_free_of

__all__ = [
    "UNUSED",
    "HYPERVISOR",
    "UNALLOCATED",
    "Region",
    "MemoryLayout",
    "RowFootprint",
    "SilozPlan",
    "AggressorSite",
    "PlanError",
    "check_layout",
    "classify_pa",
    "row_footprint",
    "plan_siloz",
    "plan_citadel",
    "find_aggressors",
    "load_layout",
    "row_granularity",
    "row_chunk_stride",
    "group_stride",
]

UNUSED = "unused"
HYPERVISOR = "hypervisor"
UNALLOCATED = "unallocated"
RESERVED_OWNERS = (UNUSED, HYPERVISOR)

BankTuple = tuple[int, int, int, int]
RowTuple = tuple[int, int, int, int, int]


class PlanError(ValueError):
    """No layout satisfying the requested mitigation exists."""


@dataclass(frozen=True)
class Region:
    owner: str
    start_pa: int
    size: int

    @property
    def end_pa(self) -> int:
        return self.start_pa + self.size

    def contains(self, pa: int) -> bool:
        return self.start_pa <= pa < self.end_pa

    def to_dict(self, pa_digits: int = 8) -> dict:
        return {
            "owner": self.owner,
            "start_pa": f"0x{self.start_pa:0{pa_digits}x}",
            "size": self.size,
        }


@dataclass(frozen=True)
class MemoryLayout:
    regions: tuple[Region, ...]

    def vm_owners(self) -> list[str]:
        seen = []
        for region in self.regions:
            if region.owner not in RESERVED_OWNERS and region.owner not in seen:
                seen.append(region.owner)
        return seen

    def region_of(self, owner: str) -> Region:
        for region in self.regions:
            if region.owner == owner:
                return region
        raise KeyError(f"no region owned by {owner!r}")

    def to_dict(self, pa_digits: int = 8) -> dict:
        return {"regions": [r.to_dict(pa_digits) for r in self.regions]}


def classify_pa(layout: MemoryLayout, pa: int) -> str:
    """Owner of the byte at pa: a VM id, unused, hypervisor, or unallocated."""
    for region in layout.regions:
        if region.contains(pa):
            return region.owner
    return UNALLOCATED


def check_layout(layout: MemoryLayout, geometry: Geometry) -> list[str]:
    """Structural violations of a layout, as human-readable strings.

    Checks bounds, row-granularity alignment (multiples of ``columns``, one
    bank's row worth), pairwise disjointness, and duplicate VM owners. An
    empty list means the layout is well formed.
    """
    violations = []
    total = geometry.total_bytes
    gran = geometry.columns
    for i, region in enumerate(layout.regions):
        label = f"regions[{i}] ({region.owner})"
        if region.size <= 0:
            violations.append(f"{label}: size must be positive, got {region.size}")
            continue
        if region.start_pa % gran or region.size % gran:
            violations.append(
                f"{label}: start 0x{region.start_pa:x}/size 0x{region.size:x} "
                f"not aligned to the 0x{gran:x}-byte row granularity"
            )
        if region.start_pa < 0 or region.end_pa > total:
            violations.append(
                f"{label}: [0x{region.start_pa:x}, 0x{region.end_pa:x}) exceeds "
                f"the 0x{total:x}-byte address space"
            )
    ordered = sorted(
        (r for r in layout.regions if r.size > 0), key=lambda r: (r.start_pa, r.end_pa)
    )
    for a, b in zip(ordered, ordered[1:]):
        if b.start_pa < a.end_pa:
            violations.append(
                f"regions overlap: {a.owner} [0x{a.start_pa:x}, 0x{a.end_pa:x}) and "
                f"{b.owner} [0x{b.start_pa:x}, 0x{b.end_pa:x})"
            )
    seen: set[str] = set()
    for region in layout.regions:
        if region.owner == UNUSED:
            continue
        if region.owner in seen:
            violations.append(f"duplicate owner: {region.owner}")
        seen.add(region.owner)
    return violations


# -- footprints ---------------------------------------------------------------


def row_granularity(mapping: AddressMapping) -> int:
    """Largest power-of-two PA stride whose aligned blocks stay in one row tuple."""
    return stride_free_of(mapping, ("channel", "rank", "bankgroup", "bank", "row"))


def row_chunk_stride(mapping: AddressMapping) -> int:
    """Largest stride whose aligned blocks keep the row index constant."""
    return stride_free_of(mapping, ("row",))


def group_stride(mapping: AddressMapping) -> int:
    """Largest stride whose aligned blocks stay inside one subarray group."""
    geo = mapping.geometry
    sub_lo = geo.rows_per_subarray.bit_length() - 1
    used = 0
    for mask in mapping.masks[4][sub_lo:]:  # row masks above the in-subarray bits
        used |= mask
    if used == 0:
        return geo.total_bytes
    return 1 << ((used & -used).bit_length() - 1)


def _pack_widths(geometry: Geometry) -> tuple[int, int, int, int]:
    return (
        geometry.ranks.bit_length() - 1,
        geometry.bankgroups.bit_length() - 1,
        geometry.banks.bit_length() - 1,
        geometry.rows.bit_length() - 1,
    )


def _pack_row_tuple(geometry: Geometry, coord: DramCoordinate) -> int:
    rank_w, bg_w, bank_w, row_w = _pack_widths(geometry)
    packed = coord.channel
    packed = (packed << rank_w) | coord.rank
    packed = (packed << bg_w) | coord.bankgroup
    packed = (packed << bank_w) | coord.bank
    packed = (packed << row_w) | coord.row
    return packed


def _unpack_row_tuple(geometry: Geometry, packed: int) -> RowTuple:
    rank_w, bg_w, bank_w, row_w = _pack_widths(geometry)
    row = packed & ((1 << row_w) - 1)
    packed >>= row_w
    bank = packed & ((1 << bank_w) - 1)
    packed >>= bank_w
    bg = packed & ((1 << bg_w) - 1)
    packed >>= bg_w
    rank = packed & ((1 << rank_w) - 1)
    channel = packed >> rank_w
    return (channel, rank, bg, bank, row)


@lru_cache(maxsize=32)
def _row_tuple_deltas(mapping: AddressMapping) -> tuple[int, ...]:
    """Packed row-tuple image of each single-bit physical address."""
    geo = mapping.geometry
    deltas = []
    for j in range(geo.address_width):
        coord = mapping.pa_to_coord(1 << j)
        deltas.append(_pack_row_tuple(geo, coord))
    return tuple(deltas)


def _reduce_basis(vectors: list[int]) -> list[int]:
    basis: list[int] = []
    for v in vectors:
        for b in basis:
            v = min(v, v ^ b)
        if v:
            basis.append(v)
            basis.sort(reverse=True)
    return basis


def _aligned_blocks(start: int, size: int) -> list[tuple[int, int]]:
    """Split [start, start+size) into (base, log2size) aligned blocks."""
    blocks = []
    pos, end = start, start + size
    while pos < end:
        k = (pos & -pos).bit_length() - 1 if pos else (end - pos).bit_length()
        while (1 << k) > end - pos:
            k -= 1
        blocks.append((pos, k))
        pos += 1 << k
    return blocks


@dataclass(frozen=True)
class RowFootprint:
    """Exact set of row tuples a PA region touches."""

    geometry: Geometry
    packed: frozenset[int]

    # cached_property writes the instance dict directly, so it coexists with
    # frozen; neither property participates in equality or hashing
    @cached_property
    def rows(self) -> frozenset[RowTuple]:
        return frozenset(_unpack_row_tuple(self.geometry, p) for p in self.packed)

    @cached_property
    def groups(self) -> frozenset[tuple[BankTuple, int]]:
        geo = self.geometry
        out = set()
        for p in self.packed:
            ch, rk, bg, bk, row = _unpack_row_tuple(geo, p)
            out.add(((ch, rk, bg, bk), geo.subarray_of(row)))
        return frozenset(out)

    def row_indices(self) -> frozenset[int]:
        geo = self.geometry
        return frozenset(_unpack_row_tuple(geo, p)[4] for p in self.packed)


def _region_packed_rows(mapping: AddressMapping, start: int, size: int) -> set[int]:
    geo = mapping.geometry
    if size <= 0:
        return set()
    if start < 0 or start + size > geo.total_bytes:
        raise ValueError(
            f"region [0x{start:x}, 0x{start + size:x}) exceeds the address space"
        )
    deltas = _row_tuple_deltas(mapping)
    packed: set[int] = set()
    for base, k in _aligned_blocks(start, size):
        anchor = _pack_row_tuple(geo, mapping.pa_to_coord(base))
        basis = _reduce_basis([deltas[j] for j in range(k)])
        span = np.zeros(1 << len(basis), dtype=np.int64)
        size_so_far = 1
        for b in basis:
            span[size_so_far : 2 * size_so_far] = span[:size_so_far] ^ b
            size_so_far *= 2
        packed.update((span ^ anchor).tolist())
    return packed


@lru_cache(maxsize=64)
def row_footprint(mapping: AddressMapping, region: Region) -> RowFootprint:
    """Exact footprint of a region under a validated mapping."""
    packed = _region_packed_rows(mapping, region.start_pa, region.size)
    return RowFootprint(mapping.geometry, frozenset(packed))


# -- planners -----------------------------------------------------------------


def _check_vm_sizes(mapping: AddressMapping, vm_sizes: list[int], unit: int) -> None:
    geo = mapping.geometry
    if not vm_sizes:
        raise PlanError("no VM sizes given")
    for i, size in enumerate(vm_sizes):
        if size <= 0 or size % unit:
            raise PlanError(
                f"vm{i} size 0x{size:x} must be a positive multiple of 0x{unit:x}"
            )
    if sum(vm_sizes) > geo.total_bytes:
        raise PlanError(
            f"requested 0x{sum(vm_sizes):x} bytes exceed the 0x{geo.total_bytes:x}-byte space"
        )


@dataclass(frozen=True)
class SilozPlan:
    layout: MemoryLayout
    groups: dict[str, frozenset[tuple[BankTuple, int]]]
    contained: dict[str, bool]

    def to_dict(self, pa_digits: int = 8) -> dict:
        return {
            "layout": self.layout.to_dict(pa_digits),
            "groups": {
                vm: sorted(
                    [":".join(str(x) for x in bt), sub] for bt, sub in groups
                )
                for vm, groups in self.groups.items()
            },
            "contained": dict(self.contained),
        }


def plan_siloz(mapping: AddressMapping, vm_sizes: list[int]) -> SilozPlan:
    """Greedy subarray-group isolation: ascending PA, lowest feasible start.

    Every VM gets one contiguous PA range whose (bank tuple, subarray) set is
    disjoint from every other VM's. A VM whose range stays inside a single
    subarray group is reported as contained.
    """
    geo = mapping.geometry
    gran = max(row_granularity(mapping), geo.columns)
    _check_vm_sizes(mapping, vm_sizes, geo.columns)
    stride = max(group_stride(mapping), gran)
    placed: list[Region] = []
    groups: dict[str, frozenset] = {}
    contained: dict[str, bool] = {}
    used_groups: set[tuple[BankTuple, int]] = set()
    for i, size in enumerate(vm_sizes):
        owner = f"vm{i}"
        candidates = set(range(0, geo.total_bytes, stride))
        for region in placed:
            end = region.end_pa
            candidates.add((end + gran - 1) // gran * gran)
        start = None
        chosen_groups: frozenset | None = None
        for cand in sorted(candidates):
            if cand + size > geo.total_bytes:
                continue
            if any(cand < r.end_pa and r.start_pa < cand + size for r in placed):
                continue
            fp_groups = RowFootprint(
                geo, frozenset(_region_packed_rows(mapping, cand, size))
            ).groups
            if fp_groups & used_groups:
                continue
            start = cand
            chosen_groups = fp_groups
            break
        if start is None:
            raise PlanError(
                f"cannot place {owner} (0x{size:x} bytes) in a free subarray-group set; "
                f"group granularity is 0x{stride:x} bytes"
            )
        region = Region(owner, start, size)
        placed.append(region)
        used_groups |= chosen_groups
        groups[owner] = chosen_groups
        contained[owner] = len({sub for _, sub in chosen_groups}) == 1
    layout = MemoryLayout(tuple(sorted(placed, key=lambda r: r.start_pa)))
    return SilozPlan(layout, groups, contained)


@lru_cache(maxsize=8)
def _chunk_rows(mapping: AddressMapping) -> np.ndarray:
    """Row index of every aligned row-chunk, built by XOR doubling."""
    geo = mapping.geometry
    stride = row_chunk_stride(mapping)
    n = geo.total_bytes // stride
    rows = np.zeros(n, dtype=np.int64)
    filled = 1
    while filled < n:
        delta = mapping.pa_to_coord(filled * stride).row
        rows[filled : 2 * filled] = rows[:filled] ^ delta
        filled *= 2
    rows.setflags(write=False)
    return rows


def plan_citadel(
    mapping: AddressMapping, vm_sizes: list[int], guard_global_rows: int
) -> MemoryLayout:
    """Row-contiguous VM ranges separated by whole unused guard rows.

    Walks PA space in row-chunks (the largest stride keeping the row index
    constant). Each VM takes the lowest chunk window whose row indices form a
    contiguous range lying strictly more than guard_global_rows above the
    previous VM's highest row. Chunks skipped between consecutive VM ranges
    (the guard rows plus any stragglers of earlier rows) are marked unused;
    guard-row chunks that are not between the VM ranges stay unallocated.
    """
    geo = mapping.geometry
    if guard_global_rows < 1:
        raise PlanError(
            f"guard_global_rows must be >= 1, got {guard_global_rows}"
        )
    stride = row_chunk_stride(mapping)
    if stride < geo.columns:
        raise PlanError(
            "mapping routes row bits below the column width "
            f"(row chunk 0x{stride:x} < 0x{geo.columns:x}); global rows are not "
            "representable as whole row-aligned chunks"
        )
    _check_vm_sizes(mapping, vm_sizes, stride)
    rows = _chunk_rows(mapping)
    n_chunks = len(rows)
    regions: list[Region] = []
    pos = 0
    prev_hi = -1 - guard_global_rows  # so the first VM needs min_row > -1
    for i, size in enumerate(vm_sizes):
        owner = f"vm{i}"
        n = size // stride
        cand = pos
        bound = prev_hi + guard_global_rows
        while True:
            if cand + n > n_chunks:
                raise PlanError(
                    f"cannot place {owner}: no chunk window clears guard rows "
                    f"{prev_hi + 1}..{bound} (offending row {bound})"
                )
            window = rows[cand : cand + n]
            below = np.nonzero(window <= bound)[0]
            if below.size:
                cand += int(below[-1]) + 1
                continue
            distinct = np.unique(window)
            if int(distinct[-1]) - int(distinct[0]) + 1 != len(distinct):
                cand += 1
                continue
            break
        if cand > pos:
            regions.append(Region(UNUSED, pos * stride, (cand - pos) * stride))
        regions.append(Region(owner, cand * stride, size))
        pos = cand + n
        prev_hi = int(rows[cand : cand + n].max())
    return MemoryLayout(tuple(regions))


# -- aggressor discovery -------------------------------------------------------


@dataclass(frozen=True)
class AggressorSite:
    """An attacker-owned row adjacent to victim rows, with a representative PA."""

    pa: int
    coord: DramCoordinate
    victim_rows: tuple[int, ...]

    def to_dict(self, geometry: Geometry, pa_digits: int) -> dict:
        return {
            "pa": f"0x{self.pa:0{pa_digits}x}",
            "coord": self.coord.to_dict(geometry),
            "victim_rows": list(self.victim_rows),
        }


def find_aggressors(
    mapping: AddressMapping,
    layout: MemoryLayout,
    attacker_vm: str,
    victim_vm: str,
    blast_radius: int,
) -> list[AggressorSite]:
    """Attacker rows within blast radius of a victim row, exhaustively.

    Adjacency requires the same bank tuple and the same subarray, and a row
    distance of 1..blast_radius (a row shared by both VMs is not adjacency).
    Each site carries a representative PA at column 0 of the aggressor row.
    """
    return list(_find_aggressors(mapping, layout, attacker_vm, victim_vm, blast_radius))


@lru_cache(maxsize=64)
def _find_aggressors(
    mapping: AddressMapping,
    layout: MemoryLayout,
    attacker_vm: str,
    victim_vm: str,
    blast_radius: int,
) -> tuple[AggressorSite, ...]:
    geo = mapping.geometry
    attacker_rows = row_footprint(mapping, layout.region_of(attacker_vm)).rows
    victim_rows = row_footprint(mapping, layout.region_of(victim_vm)).rows
    sites = []
    for ch, rk, bg, bk, row in sorted(attacker_rows):
        sub = geo.subarray_of(row)
        victims = []
        for delta in range(-blast_radius, blast_radius + 1):
            v = row + delta
            if delta == 0 or not 0 <= v < geo.rows:
                continue
            if geo.subarray_of(v) != sub:
                continue
            if (ch, rk, bg, bk, v) in victim_rows:
                victims.append(v)
        if victims:
            coord = DramCoordinate(ch, rk, bg, bk, row, 0)
            sites.append(
                AggressorSite(mapping.coord_to_pa(coord), coord, tuple(sorted(victims)))
            )
    return tuple(sites)


# -- layout files --------------------------------------------------------------


def load_layout(path: str) -> MemoryLayout:
    """Load a layout file: {"regions": [{owner, start_pa (hex), size}, ...]}."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValueError(
                f"{path}: not valid JSON at line {exc.lineno}: {exc.msg}"
            ) from None
    if not isinstance(data, dict) or "regions" not in data:
        raise ValueError(f"{path}: top level must be an object with a regions array")
    regions = []
    for i, entry in enumerate(data["regions"]):
        try:
            owner = entry["owner"]
            start = entry["start_pa"]
            size = entry["size"]
        except (TypeError, KeyError) as exc:
            raise ValueError(f"{path}: regions[{i}] missing field {exc}") from None
        start_pa = int(start, 16) if isinstance(start, str) else int(start)
        regions.append(Region(str(owner), start_pa, int(size)))
    return MemoryLayout(tuple(regions))
