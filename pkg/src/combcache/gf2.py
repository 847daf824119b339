"""GF(2) elimination on int bitsets."""

from __future__ import annotations


def reduce_rows(rows) -> dict[int, int]:
    """Fully reduced echelon basis, keyed by pivot (lowest set bit)."""
    basis: dict[int, int] = {}
    for row in rows:
        row = reduce_vector(row, basis)
        if not row:
            continue
        pivot = (row & -row).bit_length() - 1
        for p, b in basis.items():
            if b >> pivot & 1:
                basis[p] = b ^ row
        basis[pivot] = row
    return basis


def reduce_vector(vec: int, basis: dict[int, int]) -> int:
    for p, b in basis.items():
        if vec >> p & 1:
            vec ^= b
    return vec


def rank(rows) -> int:
    return len(reduce_rows(rows))


def in_span(vec: int, basis: dict[int, int]) -> bool:
    return reduce_vector(vec, basis) == 0


def solve(rows: list[int], rhs: list[int], n: int) -> list[int] | None:
    """Unique solution of ``A x = b`` over GF(2), else ``None``.

    ``rows[i]`` holds the coefficient bits of equation ``i``; the right-hand
    side rides along in bit ``n``.
    """
    basis = reduce_rows(r | (b << n) for r, b in zip(rows, rhs))
    if len(basis) != n or any(p >= n for p in basis):
        return None
    return [basis[p] >> n & 1 for p in range(n)]
