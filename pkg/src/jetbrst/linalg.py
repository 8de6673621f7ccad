"""Exact sparse Gauss-Jordan elimination over the rationals."""

from __future__ import annotations

from fractions import Fraction


class SingularMatrix(ValueError):
    def __init__(self, message, free_columns=(), dependent_rows=()):
        super().__init__(message)
        self.free_columns = list(free_columns)
        self.dependent_rows = list(dependent_rows)


def sparse_inverse(rows: list, columns: list) -> dict:
    """Invert a square matrix given as sparse rows ``{column: coeff}``.

    Returns ``{column: {row_index: coeff}}`` so that, if row i encodes
    ``y_i = sum_c rows[i][c] * x_c``, then ``x_c = sum_i inv[c][i] * y_i``.
    """
    n = len(rows)
    colset = set(columns)
    A = []
    for r in rows:
        extra = set(r) - colset
        if extra:
            raise ValueError(f"row uses columns outside the block: {sorted(map(str, extra))[:3]}")
        A.append({c: Fraction(v) for c, v in r.items() if v})
    B = [{i: Fraction(1)} for i in range(n)]
    pivot_row = {}          # column -> row index
    holders: dict = {}      # column -> rows (pivot rows) containing it
    dependent = []
    for i in range(n):
        a, b = A[i], B[i]
        for c in [c for c in a if c in pivot_row]:
            f = a.get(c)
            if not f:
                continue
            p = pivot_row[c]
            _axpy(a, A[p], -f)
            _axpy(b, B[p], -f)
        if not a:
            dependent.append(i)
            continue
        c = min(a, key=lambda col: (len(holders.get(col, ())), str(col)))
        inv = 1 / a[c]
        for k in a:
            a[k] *= inv
        for k in b:
            b[k] *= inv
        for p in list(holders.get(c, ())):
            f = A[p].get(c)
            if f:
                _axpy(A[p], a, -f)
                _axpy(B[p], b, -f)
                for k in a:
                    if k in A[p]:
                        holders.setdefault(k, set()).add(p)
                    else:
                        holders.get(k, set()).discard(p)
        pivot_row[c] = i
        for k in a:
            holders.setdefault(k, set()).add(i)
    free = [c for c in columns if c not in pivot_row]
    if dependent or free or n != len(columns):
        raise SingularMatrix("block is not invertible", free, dependent)
    return {c: B[p] for c, p in pivot_row.items()}


def _axpy(y: dict, x: dict, f: Fraction):
    for k, v in x.items():
        nv = y.get(k, 0) + f * v
        if nv:
            y[k] = nv
        else:
            y.pop(k, None)


def invert(dense: list) -> list:
    """Inverse of a dense square matrix of rationals."""
    n = len(dense)
    rows = [{j: Fraction(v) for j, v in enumerate(r) if v} for r in dense]
    inv = sparse_inverse(rows, list(range(n)))
    return [[inv[c].get(i, Fraction(0)) for i in range(n)] for c in range(n)]
