"""Trace replay as a performance proxy: row-buffer behavior per mapping.

Run as: python3 demos/04_row_buffer_traces.py
"""

from vmhammer import builtin_mappings
from vmhammer.dram import HammerParams
from vmhammer.harness import matvec_trace, replay_trace, toggle_trace

PARAMS = HammerParams(hc_first=50_000, deterministic_mode=True)


def replay_all(label, trace, presets):
    print(f"{label} ({len(trace)} accesses):")
    for name, mapping in presets.items():
        stats, _ = replay_trace(trace, mapping, PARAMS)
        rate = stats.row_buffer_hits / stats.accesses
        print(f"  {name:>26}: activations {stats.activations:>5}, "
              f"hit rate {rate:6.1%}")
    print()


def main():
    presets = builtin_mappings()

    # a dense matrix-vector product streams the matrix and re-reads the vector
    replay_all("matvec 64x64", matvec_trace(rows=64, cols=64, base_pa=0), presets)

    # adversarial pattern: toggling PA bits 6 and 15 ping-pongs between two
    # rows of one bank under the direct mapping, but bit 6 feeds the xor bank
    # hash, so the same pattern splits across two banks and mostly hits
    replay_all("toggle bits 6+15", toggle_trace(0x80000000, 0x8040, 1024), presets)

    # same pattern, shifted off the xor input: now every mapping conflicts
    replay_all("toggle bit 15 only", toggle_trace(0x80000000, 0x8000, 1024), presets)


if __name__ == "__main__":
    main()
