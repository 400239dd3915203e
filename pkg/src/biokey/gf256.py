"""Arithmetic in GF(2^8) with reducing polynomial x^8+x^4+x^3+x^2+1 (0x11D).

Scalar helpers work on Python ints; ``MUL`` is a full 256x256 product table
used to vectorise row operations over byte arrays.
"""
from __future__ import annotations

import numpy as np

from .errors import BiokeyError

POLY = 0x11D
GENERATOR = 2

EXP = [0] * 512
LOG = [0] * 256

_x = 1
for _i in range(255):
    EXP[_i] = _x
    LOG[_x] = _i
    _x <<= 1
    if _x & 0x100:
        _x ^= POLY
for _i in range(255, 512):
    EXP[_i] = EXP[_i - 255]
del _x, _i


def gf_mul(a: int, b: int) -> int:
    if a == 0 or b == 0:
        return 0
    return EXP[LOG[a] + LOG[b]]


def gf_inv(a: int) -> int:
    if a == 0:
        raise BiokeyError("division-by-zero", "gf_inv(0)")
    return EXP[255 - LOG[a]]


def gf_div(a: int, b: int) -> int:
    if b == 0:
        raise BiokeyError("division-by-zero", f"gf_div({a}, 0)")
    if a == 0:
        return 0
    return EXP[LOG[a] + 255 - LOG[b]]


def gf_pow(a: int, e: int) -> int:
    if e == 0:
        return 1
    if a == 0:
        return 0
    return EXP[(LOG[a] * e) % 255]


def _build_table() -> np.ndarray:
    logs = np.array(LOG, dtype=np.int64)
    exps = np.array(EXP, dtype=np.uint8)
    table = exps[logs[:, None] + logs[None, :]]
    table[0, :] = 0
    table[:, 0] = 0
    return table


MUL = _build_table()


def mat_mul(a: list[list[int]], b: list[list[int]]) -> list[list[int]]:
    cols = len(b[0])
    out = []
    for row in a:
        acc = [0] * cols
        for i, coef in enumerate(row):
            if coef:
                brow = b[i]
                for j in range(cols):
                    acc[j] ^= gf_mul(coef, brow[j])
        out.append(acc)
    return out


def mat_inv(m: list[list[int]]) -> list[list[int]]:
    """Gauss-Jordan inverse of a square matrix; raises ``singular-matrix``."""
    n = len(m)
    work = [list(row) + [int(i == j) for j in range(n)] for i, row in enumerate(m)]
    for col in range(n):
        pivot = next((r for r in range(col, n) if work[r][col]), None)
        if pivot is None:
            raise BiokeyError("singular-matrix")
        work[col], work[pivot] = work[pivot], work[col]
        inv_p = gf_inv(work[col][col])
        work[col] = [gf_mul(v, inv_p) for v in work[col]]
        for r in range(n):
            f = work[r][col]
            if r != col and f:
                pr = work[col]
                work[r] = [v ^ gf_mul(f, p) for v, p in zip(work[r], pr)]
    return [row[n:] for row in work]


def mat_apply(m: list[list[int]], rows: np.ndarray) -> np.ndarray:
    """Multiply a coefficient matrix by a stack of byte rows (shape ``(k, L)``)."""
    out = np.zeros((len(m), rows.shape[1]), dtype=np.uint8)
    for i, coefs in enumerate(m):
        acc = out[i]
        for c, row in zip(coefs, rows):
            if c:
                acc ^= MUL[c][row]
    return out
