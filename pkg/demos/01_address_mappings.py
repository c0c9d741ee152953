"""Tour of GF(2)-linear address mappings: translation, presets, validation.

Run as: python3 demos/01_address_mappings.py
"""

from vmhammer import builtin_mappings, default_geometry
from vmhammer.mapping import AddressMapping, validate


def show_translation(name, mapping, pa):
    coord = mapping.pa_to_coord(pa)
    back = mapping.coord_to_pa(coord)
    print(f"  {name:>26}: 0x{pa:08x} -> {coord.to_dict(mapping.geometry)} -> 0x{back:08x}")


def main():
    geometry = default_geometry()
    print(f"geometry: {geometry.to_dict()}")
    print(f"address width {geometry.address_width} bits, "
          f"{geometry.bank_tuple_count} bank tuples, "
          f"{geometry.subarray_count} subarrays per bank\n")

    presets = builtin_mappings(geometry)
    print("the same physical address lands in different places per mapping:")
    for pa in (0x00012345, 0x80000040):
        for name, mapping in presets.items():
            show_translation(name, mapping, pa)
        print()

    print("each preset is a full-rank bit matrix, so translation inverts exactly:")
    for name, mapping in presets.items():
        report = validate(mapping)
        print(f"  {name:>26}: valid={report.valid} rank={report.rank}")

    # feeding one PA bit to two coordinate bits collapses the rank
    broken_fns = presets["simple"].to_dict()["functions"]
    broken_fns["bank"] = [[15]]  # PA bit 15 already drives row bit 0
    broken = AddressMapping.build(geometry, broken_fns)
    report = validate(broken)
    witness = [(kind, bit) for kind, bit in report.witness]
    print(f"\nduplicated PA bit 15: valid={report.valid}, "
          f"dependent coordinate bits {witness}")


if __name__ == "__main__":
    main()
