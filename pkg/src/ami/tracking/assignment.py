"""Optimal gated linear sum assignment.

Solves min-cost one-to-one matching between rows and columns of a cost
matrix, where entries above a gate threshold are forbidden. Among all
partial assignments using only allowed pairs, the solver returns the one
that (1) has maximum cardinality, (2) minimizes total cost among those,
and (3) breaks remaining ties by the lexicographically smallest sorted
(row, col) match list.

The solver is a shortest-augmenting-path method in the Jonker-Volgenant
family with rectangular support, run in exact rational arithmetic so the
returned match set is bit-for-bit reproducible and agrees exactly with
exhaustive enumeration. Gating and tie-breaking are folded into a
composite edge cost:

- forbidden edges cost (BIG, 1) with BIG larger than any achievable real
  total, so optimal solutions use as few forbidden edges as possible
  (equivalently: maximum allowed cardinality);
- allowed edges cost (c_ij, 1 - 2^-(i*m+j+1)); the secondary component
  makes the optimum unique and selects the lexicographically smallest
  match list among cost ties.

Costs are float inputs; they are converted to exact fractions, so no
floating-point round-off can reorder candidate solutions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from ami.errors import InputError

__all__ = ["Assignment", "assign"]

_ZERO = (Fraction(0), Fraction(0))


@dataclass(frozen=True)
class Assignment:
    """Result of a gated assignment.

    matches is sorted by row index; unmatched lists are ascending.
    """

    matches: list[tuple[int, int]]
    unmatched_rows: list[int]
    unmatched_cols: list[int]


def _add(a: tuple[Fraction, Fraction], b: tuple[Fraction, Fraction]):
    return (a[0] + b[0], a[1] + b[1])


def _sub(a: tuple[Fraction, Fraction], b: tuple[Fraction, Fraction]):
    return (a[0] - b[0], a[1] - b[1])


def _augmenting_path_solve(cost: list[list[tuple[Fraction, Fraction]]]) -> list[int]:
    """Exact successive-shortest-augmenting-path assignment.

    ``cost`` must be nr x nc with nr <= nc, entries >= (0, 0).
    Returns col4row: the column matched to each row.
    """
    nr = len(cost)
    nc = len(cost[0])
    u = [_ZERO] * nr
    v = [_ZERO] * nc
    col4row = [-1] * nr
    row4col = [-1] * nc

    for cur_row in range(nr):
        shortest: list[tuple[Fraction, Fraction] | None] = [None] * nc
        path = [-1] * nc
        scanned_rows = [False] * nr
        scanned_cols = [False] * nc
        remaining = list(range(nc))
        min_val = _ZERO
        i = cur_row
        sink = -1

        while sink == -1:
            scanned_rows[i] = True
            lowest: tuple[Fraction, Fraction] | None = None
            index = -1
            for it, j in enumerate(remaining):
                r = _add(min_val, _sub(_sub(cost[i][j], u[i]), v[j]))
                if shortest[j] is None or r < shortest[j]:
                    path[j] = i
                    shortest[j] = r
                sj = shortest[j]
                if (
                    lowest is None
                    or sj < lowest
                    or (sj == lowest and row4col[j] == -1)
                ):
                    lowest = sj
                    index = it
            min_val = lowest  # type: ignore[assignment]
            j = remaining.pop(index)
            if row4col[j] == -1:
                sink = j
            else:
                i = row4col[j]
            scanned_cols[j] = True

        u[cur_row] = _add(u[cur_row], min_val)
        for ii in range(nr):
            if scanned_rows[ii] and ii != cur_row:
                u[ii] = _add(u[ii], _sub(min_val, shortest[col4row[ii]]))
        for jj in range(nc):
            if scanned_cols[jj]:
                v[jj] = _sub(v[jj], _sub(min_val, shortest[jj]))

        jj = sink
        while True:
            ii = path[jj]
            row4col[jj] = ii
            col4row[ii], jj = jj, col4row[ii]
            if ii == cur_row:
                break

    return col4row


def assign(
    costs: np.ndarray | Sequence[Sequence[float]],
    gate: float = 1.0,
) -> Assignment:
    """Optimally match rows to columns with entries above ``gate`` forbidden.

    Maximizes match count over allowed pairs, minimizes total cost among
    those, and resolves exact ties by the lexicographically smallest
    sorted (row, col) list. Forbidden pairs are never matched, even if
    that leaves rows or columns unmatched.

    Raises InputError on NaN, infinite, or negative entries.
    """
    if math.isnan(gate):
        raise InputError("gate must not be NaN")
    matrix = np.asarray(costs, dtype=float)
    if matrix.size == 0:
        n = matrix.shape[0] if matrix.ndim >= 1 else 0
        m = matrix.shape[1] if matrix.ndim == 2 else 0
        return Assignment([], list(range(n)), list(range(m)))
    if matrix.ndim != 2:
        raise InputError(f"cost matrix must be 2-D, got shape {matrix.shape}")
    if np.isnan(matrix).any():
        raise InputError("cost matrix contains NaN")
    if not np.isfinite(matrix).all():
        raise InputError("cost matrix contains non-finite values")
    if (matrix < 0).any():
        raise InputError("cost matrix contains negative values")

    n, m = matrix.shape
    allowed = matrix <= gate
    big = Fraction(1)
    for i in range(n):
        for j in range(m):
            if allowed[i, j]:
                big += Fraction(float(matrix[i, j]))

    composite: list[list[tuple[Fraction, Fraction]]] = []
    for i in range(n):
        row = []
        for j in range(m):
            if allowed[i, j]:
                idx = i * m + j + 1
                row.append(
                    (Fraction(float(matrix[i, j])), 1 - Fraction(1, 2**idx))
                )
            else:
                row.append((big, Fraction(1)))
        composite.append(row)

    if n <= m:
        col4row = _augmenting_path_solve(composite)
        pairs = [(i, col4row[i]) for i in range(n)]
    else:
        transposed = [[composite[i][j] for i in range(n)] for j in range(m)]
        row4col = _augmenting_path_solve(transposed)
        pairs = [(row4col[j], j) for j in range(m)]

    matches = sorted((i, j) for i, j in pairs if allowed[i, j])
    matched_rows = {i for i, _ in matches}
    matched_cols = {j for _, j in matches}
    return Assignment(
        matches=matches,
        unmatched_rows=[i for i in range(n) if i not in matched_rows],
        unmatched_cols=[j for j in range(m) if j not in matched_cols],
    )
