"""Bit-packed linear algebra over GF(2).

A matrix is a list of Python ints, one per row; bit i of a row is the entry
in column i. Python ints are unbounded, so any width works.
"""

from __future__ import annotations

__all__ = ["parity", "rank", "analyze"]


def parity(x: int) -> int:
    """Parity (XOR-fold) of the set bits of x."""
    return x.bit_count() & 1


def rank(rows: list[int], width: int) -> int:
    """Rank of the matrix over GF(2)."""
    r, _, _ = analyze(rows, width)
    return r


def analyze(rows: list[int], width: int) -> tuple[int, list[int] | None, int | None]:
    """Gauss-Jordan elimination with row tracking.

    Returns (rank, inverse, dependency):
      inverse     when the rows form an invertible width x width matrix, the
                  inverse as row masks: bit p of inverse[c] set means input
                  row p participates in the combination producing unit
                  vector e_c; else None.
      dependency  when the rows are linearly dependent, a mask over input row
                  indices whose rows XOR to zero; else None.
    """
    n = len(rows)
    work = list(rows)
    combo = [1 << i for i in range(n)]  # combo[i] tracks which inputs sum into work[i]
    pivot_row_of_col: dict[int, int] = {}
    r = 0
    for col in range(width):
        piv = next((i for i in range(r, n) if (work[i] >> col) & 1), None)
        if piv is None:
            continue
        work[r], work[piv] = work[piv], work[r]
        combo[r], combo[piv] = combo[piv], combo[r]
        for i in range(n):
            if i != r and (work[i] >> col) & 1:
                work[i] ^= work[r]
                combo[i] ^= combo[r]
        pivot_row_of_col[col] = r
        r += 1
        if r == n:
            break
    if r < n:
        dep = next(combo[i] for i in range(n) if work[i] == 0)
        return r, None, dep
    if n != width:
        return r, None, None
    inverse = [combo[pivot_row_of_col[c]] for c in range(width)]
    return r, inverse, None
