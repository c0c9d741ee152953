"""DRAM address mappings as GF(2)-linear functions of physical-address bits.

A mapping assigns every DRAM coordinate bit (channel, rank, bankgroup, bank,
row, column, all LSB-first) an XOR of physical-address bits. Validation checks
that the stacked bit matrix is invertible, which is exactly the condition for
the mapping to be a bijection between physical addresses and coordinates; the
inverse matrix then gives the exact coordinate-to-address translation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Mapping

from . import gf2

__all__ = [
    "COORD_KINDS",
    "MappingError",
    "Geometry",
    "DramCoordinate",
    "AddressMapping",
    "ValidationReport",
    "validate",
    "parse_mapping",
    "load_mapping",
    "default_geometry",
    "builtin_mappings",
    "stride_free_of",
]

# Fixed coordinate order used for matrix rows and coordinate-vector packing.
COORD_KINDS = ("channel", "rank", "bankgroup", "bank", "row", "column")

GEOMETRY_FIELDS = (
    "channels",
    "ranks",
    "bankgroups",
    "banks",
    "rows",
    "columns",
    "rows_per_subarray",
)


class MappingError(ValueError):
    """Malformed or non-invertible mapping definition."""


def _log2(value: int) -> int:
    return value.bit_length() - 1


@dataclass(frozen=True)
class Geometry:
    """Power-of-two extents of one DRAM configuration.

    ``columns`` counts bytes per row per bank; ``rows_per_subarray`` splits the
    row space of every bank into equally sized subarrays.
    """

    channels: int
    ranks: int
    bankgroups: int
    banks: int
    rows: int
    columns: int
    rows_per_subarray: int

    def __post_init__(self) -> None:
        for name in GEOMETRY_FIELDS:
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool):
                raise MappingError(f"geometry.{name} must be an integer, got {value!r}")
            if value < 1 or value & (value - 1):
                raise MappingError(
                    f"geometry.{name} must be a power-of-two count >= 1, got {value}"
                )
        if self.rows_per_subarray > self.rows:
            raise MappingError(
                f"geometry.rows_per_subarray ({self.rows_per_subarray}) "
                f"cannot exceed rows ({self.rows})"
            )

    @property
    def total_bytes(self) -> int:
        return (
            self.channels
            * self.ranks
            * self.bankgroups
            * self.banks
            * self.rows
            * self.columns
        )

    @property
    def address_width(self) -> int:
        return _log2(self.total_bytes)

    @property
    def subarray_count(self) -> int:
        return self.rows // self.rows_per_subarray

    @property
    def bank_tuple_count(self) -> int:
        return self.channels * self.ranks * self.bankgroups * self.banks

    def extent(self, kind: str) -> int:
        return {
            "channel": self.channels,
            "rank": self.ranks,
            "bankgroup": self.bankgroups,
            "bank": self.banks,
            "row": self.rows,
            "column": self.columns,
        }[kind]

    def coord_width(self, kind: str) -> int:
        return _log2(self.extent(kind))

    def subarray_of(self, row: int) -> int:
        return row // self.rows_per_subarray

    def to_dict(self) -> dict:
        return {name: getattr(self, name) for name in GEOMETRY_FIELDS}

    @classmethod
    def from_dict(cls, data: Mapping) -> "Geometry":
        missing = [name for name in GEOMETRY_FIELDS if name not in data]
        if missing:
            raise MappingError(f"geometry is missing fields: {', '.join(missing)}")
        extra = [name for name in data if name not in GEOMETRY_FIELDS]
        if extra:
            raise MappingError(f"geometry has unknown fields: {', '.join(extra)}")
        return cls(**{name: data[name] for name in GEOMETRY_FIELDS})


@dataclass(frozen=True, order=True)
class DramCoordinate:
    channel: int
    rank: int
    bankgroup: int
    bank: int
    row: int
    column: int

    @property
    def bank_tuple(self) -> tuple[int, int, int, int]:
        return (self.channel, self.rank, self.bankgroup, self.bank)

    def subarray(self, geometry: Geometry) -> int:
        return geometry.subarray_of(self.row)

    def to_dict(self, geometry: Geometry | None = None) -> dict:
        out = {kind: getattr(self, kind) for kind in COORD_KINDS}
        if geometry is not None:
            out["subarray"] = self.subarray(geometry)
        return out


def _normalize_function(
    kind: str, bits: Iterable[Iterable[int]], width: int, address_width: int
) -> tuple[tuple[int, ...], ...]:
    out = []
    for pos, term in enumerate(bits):
        try:
            indices = sorted(set(int(b) for b in term))
        except (TypeError, ValueError):
            raise MappingError(
                f"functions.{kind}[{pos}] must be an array of bit indices"
            ) from None
        if not indices:
            raise MappingError(f"functions.{kind}[{pos}] is an empty XOR set")
        if indices[0] < 0 or indices[-1] >= address_width:
            raise MappingError(
                f"functions.{kind}[{pos}] references bit {indices[-1] if indices[-1] >= address_width else indices[0]}, "
                f"outside the {address_width}-bit address"
            )
        out.append(tuple(indices))
    if len(out) != width:
        raise MappingError(
            f"functions.{kind} defines {len(out)} output bits, geometry needs {width}"
        )
    return tuple(out)


@dataclass(frozen=True)
class AddressMapping:
    """Geometry plus one XOR function per coordinate output bit.

    ``bit_functions`` is indexed like COORD_KINDS; each entry lists, LSB-first,
    the XOR set of physical-address bit indices producing that coordinate bit.
    """

    geometry: Geometry
    bit_functions: tuple[tuple[tuple[int, ...], ...], ...]

    @classmethod
    def build(
        cls, geometry: Geometry, functions: Mapping[str, Iterable[Iterable[int]]]
    ) -> "AddressMapping":
        unknown = [k for k in functions if k not in COORD_KINDS]
        if unknown:
            raise MappingError(f"functions has unknown coordinates: {', '.join(sorted(unknown))}")
        per_kind = []
        for kind in COORD_KINDS:
            width = geometry.coord_width(kind)
            if kind not in functions:
                if width:
                    raise MappingError(
                        f"functions.{kind} is required (extent {geometry.extent(kind)})"
                    )
                per_kind.append(())
                continue
            per_kind.append(
                _normalize_function(kind, functions[kind], width, geometry.address_width)
            )
        return cls(geometry, tuple(per_kind))

    def function(self, kind: str) -> tuple[tuple[int, ...], ...]:
        return self.bit_functions[COORD_KINDS.index(kind)]

    @cached_property
    def masks(self) -> tuple[tuple[int, ...], ...]:
        """Per kind, per output bit, the XOR set as a PA-bit mask."""
        return tuple(
            tuple(sum(1 << b for b in term) for term in fn) for fn in self.bit_functions
        )

    @cached_property
    def matrix_rows(self) -> tuple[int, ...]:
        """Forward matrix rows in COORD_KINDS order, LSB-first within a kind."""
        return tuple(mask for kind_masks in self.masks for mask in kind_masks)

    @cached_property
    def _coord_offsets(self) -> tuple[int, ...]:
        offsets = []
        pos = 0
        for kind in COORD_KINDS:
            offsets.append(pos)
            pos += self.geometry.coord_width(kind)
        return tuple(offsets)

    @cached_property
    def _inverse_rows(self) -> tuple[int, ...]:
        width = self.geometry.address_width
        rows = self.matrix_rows
        if len(rows) != width:
            raise MappingError(
                f"mapping has {len(rows)} output bits, address width is {width}"
            )
        _, inverse, _ = gf2.analyze(list(rows), width)
        if inverse is None:
            raise MappingError("mapping is not invertible; validate() it first")
        return tuple(inverse)

    def pa_to_coord(self, pa: int) -> DramCoordinate:
        total = self.geometry.total_bytes
        if not 0 <= pa < total:
            raise ValueError(f"pa 0x{pa:x} outside [0, 0x{total:x})")
        values = []
        for kind_masks in self.masks:
            value = 0
            for i, mask in enumerate(kind_masks):
                value |= gf2.parity(pa & mask) << i
            values.append(value)
        return DramCoordinate(*values)

    def coord_to_pa(self, coord: DramCoordinate) -> int:
        geo = self.geometry
        vec = 0
        for offset, kind in zip(self._coord_offsets, COORD_KINDS):
            value = getattr(coord, kind)
            if not 0 <= value < geo.extent(kind):
                raise ValueError(f"{kind} {value} outside [0, {geo.extent(kind)})")
            vec |= value << offset
        pa = 0
        for j, mask in enumerate(self._inverse_rows):
            pa |= gf2.parity(vec & mask) << j
        return pa

    def coord_from_parts(
        self, bank_tuple: tuple[int, int, int, int], row: int, column: int = 0
    ) -> DramCoordinate:
        ch, rk, bg, bk = bank_tuple
        return DramCoordinate(ch, rk, bg, bk, row, column)

    def to_dict(self) -> dict:
        functions = {}
        for kind, fn in zip(COORD_KINDS, self.bit_functions):
            if fn:
                functions[kind] = [list(term) for term in fn]
        return {"geometry": self.geometry.to_dict(), "functions": functions}


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of the invertibility check of a mapping."""

    valid: bool
    address_width: int
    output_bits: int
    rank: int | None
    error: str | None
    witness: tuple[tuple[str, int], ...] | None
    inverse_rows: tuple[int, ...] | None

    def to_dict(self) -> dict:
        out: dict = {
            "valid": self.valid,
            "address_width": self.address_width,
            "output_bits": self.output_bits,
            "rank": self.rank,
        }
        if self.error is not None:
            out["error"] = self.error
        if self.witness is not None:
            out["witness"] = [{"coordinate": k, "bit": b} for k, b in self.witness]
        if self.inverse_rows is not None:
            out["inverse_rows"] = [f"0x{m:x}" for m in self.inverse_rows]
        return out


def _bit_labels(mapping: AddressMapping) -> list[tuple[str, int]]:
    labels = []
    for kind in COORD_KINDS:
        for i in range(len(mapping.function(kind))):
            labels.append((kind, i))
    return labels


def validate(mapping: AddressMapping) -> ValidationReport:
    """Check invertibility; report rank and a dependency witness on failure.

    The width comparison runs before any rank computation: a mapping whose
    output bit count differs from the address width is rejected outright.
    """
    width = mapping.geometry.address_width
    rows = mapping.matrix_rows
    if len(rows) != width:
        return ValidationReport(
            valid=False,
            address_width=width,
            output_bits=len(rows),
            rank=None,
            error=f"{len(rows)} output bits do not cover the {width}-bit address space",
            witness=None,
            inverse_rows=None,
        )
    rank, inverse, dependency = gf2.analyze(list(rows), width)
    if inverse is None:
        labels = _bit_labels(mapping)
        witness = tuple(
            labels[p] for p in range(len(rows)) if dependency is not None and (dependency >> p) & 1
        )
        return ValidationReport(
            valid=False,
            address_width=width,
            output_bits=len(rows),
            rank=rank,
            error=f"rank {rank} of {width}: output bits are linearly dependent",
            witness=witness or None,
            inverse_rows=None,
        )
    return ValidationReport(
        valid=True,
        address_width=width,
        output_bits=len(rows),
        rank=rank,
        error=None,
        witness=None,
        inverse_rows=tuple(inverse),
    )


def parse_mapping(text: str) -> AddressMapping:
    """Parse a JSON mapping definition (geometry + functions)."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MappingError(
            f"not valid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from None
    if not isinstance(data, dict):
        raise MappingError("top level must be an object")
    if "geometry" not in data:
        raise MappingError("missing top-level field: geometry")
    if "functions" not in data:
        raise MappingError("missing top-level field: functions")
    if not isinstance(data["geometry"], dict):
        raise MappingError("geometry must be an object")
    if not isinstance(data["functions"], dict):
        raise MappingError("functions must be an object")
    geometry = Geometry.from_dict(data["geometry"])
    return AddressMapping.build(geometry, data["functions"])


def load_mapping(path: str) -> AddressMapping:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_mapping(fh.read())


def default_geometry() -> Geometry:
    """4 GiB single-channel DDR4-style shape.

    1 channel, 1 rank, 4 bank groups, 2 banks, 65536 rows of 8 KiB,
    512-row subarrays (128 subarrays per bank).
    """
    return Geometry(
        channels=1,
        ranks=1,
        bankgroups=4,
        banks=2,
        rows=65536,
        columns=8192,
        rows_per_subarray=512,
    )


def builtin_mappings(geometry: Geometry | None = None) -> dict[str, AddressMapping]:
    """The three built-in mapping presets.

    All presets share f_column = pa bits 12..0 and f_bankgroup = pa bits 14..13
    and differ in how bank and row are derived:

      simple                  bank = pa31, row = pa30..15
      bank-xor                bank = pa31 ^ pa6, row = pa30..15
      bank-xor-noncontig-row  bank = pa21 ^ pa6, row = pa31..22,20..15

    Only defined for geometries with the default bit widths (13 column bits,
    2 bankgroup bits, 1 bank bit, 16 row bits, no channel or rank bits).
    """
    geometry = geometry if geometry is not None else default_geometry()
    widths = {kind: geometry.coord_width(kind) for kind in COORD_KINDS}
    needed = {"channel": 0, "rank": 0, "bankgroup": 2, "bank": 1, "row": 16, "column": 13}
    if widths != needed:
        raise MappingError(
            "presets require a geometry with bit widths "
            f"{needed}, got {widths}"
        )
    column = [[b] for b in range(13)]
    bankgroup = [[13], [14]]
    contiguous_row = [[b] for b in range(15, 31)]
    noncontig_row = [[b] for b in range(15, 21)] + [[b] for b in range(22, 32)]
    return {
        "simple": AddressMapping.build(
            geometry,
            {"column": column, "bankgroup": bankgroup, "bank": [[31]], "row": contiguous_row},
        ),
        "bank-xor": AddressMapping.build(
            geometry,
            {"column": column, "bankgroup": bankgroup, "bank": [[31, 6]], "row": contiguous_row},
        ),
        "bank-xor-noncontig-row": AddressMapping.build(
            geometry,
            {"column": column, "bankgroup": bankgroup, "bank": [[21, 6]], "row": noncontig_row},
        ),
    }


def stride_free_of(mapping: AddressMapping, kinds: Iterable[str]) -> int:
    """Largest power-of-two stride whose aligned blocks keep ``kinds`` constant.

    Returns 2**k where no PA bit below k feeds any listed coordinate; aligned
    blocks of that size therefore never straddle a change in those coordinates.
    """
    used = 0
    for kind in kinds:
        for mask in mapping.masks[COORD_KINDS.index(kind)]:
            used |= mask
    if used == 0:
        return mapping.geometry.total_bytes
    low = (used & -used).bit_length() - 1
    return 1 << low
