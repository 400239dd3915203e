"""Systematic Reed-Solomon erasure coding over GF(256).

The coding matrix is the (n+k) x n Vandermonde matrix ``V[i][j] = i**j``
multiplied by the inverse of its top n x n block, so the first n rows are
the identity and encoding leaves the data shards untouched. Any n of the
n+k rows form an invertible matrix, which is what makes erasure recovery
work.

Only erasures (known positions) are handled, not errors.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Mapping, Sequence

import numpy as np

from .errors import BiokeyError
from .gf256 import gf_pow, mat_apply, mat_inv, mat_mul


@lru_cache(maxsize=512)
def _coding_matrix(n: int, k: int) -> tuple[tuple[int, ...], ...]:
    if n + k > 256:
        raise BiokeyError("field-exhausted", f"n+k={n + k} exceeds 256")
    vander = [[gf_pow(i, j) for j in range(n)] for i in range(n + k)]
    top_inv = mat_inv(vander[:n])
    return tuple(tuple(row) for row in mat_mul(vander, top_inv))


def coding_matrix(n: int, k: int) -> list[list[int]]:
    return [list(r) for r in _coding_matrix(n, k)]


@dataclass(frozen=True)
class ShardSet:
    shard_len: int
    data_count: int
    parity_count: int
    shards: tuple[bytes | None, ...]

    @property
    def present(self) -> dict[int, bytes]:
        return {i: s for i, s in enumerate(self.shards) if s is not None}

    def without(self, *indices: int) -> "ShardSet":
        drop = set(indices)
        return ShardSet(
            self.shard_len,
            self.data_count,
            self.parity_count,
            tuple(None if i in drop else s for i, s in enumerate(self.shards)),
        )


def _stack(shards: Sequence[bytes]) -> np.ndarray:
    return np.frombuffer(b"".join(shards), dtype=np.uint8).reshape(len(shards), -1)


def parity_rows(data: Sequence[bytes], k: int) -> list[bytes]:
    n = len(data)
    if k == 0:
        return []
    rows = coding_matrix(n, k)[n:]
    return [r.tobytes() for r in mat_apply(rows, _stack(data))]


def rs_encode(data: Sequence[bytes], k: int) -> ShardSet:
    n = len(data)
    if n < 1:
        raise BiokeyError("bad-params", "need at least one data shard")
    if k < 0:
        raise BiokeyError("bad-params", "negative parity count")
    if n + k > 256:
        raise BiokeyError("field-exhausted", f"n+k={n + k} exceeds 256")
    length = len(data[0])
    if any(len(d) != length for d in data):
        raise BiokeyError("bad-params", "data shards differ in length")
    data = [bytes(d) for d in data]
    return ShardSet(length, n, k, tuple(data + parity_rows(data, k)))


def rs_reconstruct(present: Mapping[int, bytes] | ShardSet, n: int, k: int) -> list[bytes]:
    """Recover the n data shards from any n of the n+k coded shards.

    ``present`` maps shard index (0..n+k-1) to its bytes. When more than n
    shards are supplied the lowest indices are used.
    """
    if isinstance(present, ShardSet):
        present = present.present
    bad = [i for i in present if not 0 <= i < n + k]
    if bad:
        raise BiokeyError("bad-params", f"shard index out of range: {bad}")
    if len(present) < n:
        raise BiokeyError("insufficient-shards", f"have {len(present)}, need {n}")
    chosen = sorted(present)[:n]
    if chosen == list(range(n)):
        return [bytes(present[i]) for i in chosen]
    matrix = coding_matrix(n, k)
    sub = [matrix[i] for i in chosen]
    try:
        decode = mat_inv(sub)
    except BiokeyError as exc:  # pragma: no cover - Vandermonde rows are independent
        raise AssertionError("singular decode matrix") from exc
    out = mat_apply(decode, _stack([present[i] for i in chosen]))
    return [r.tobytes() for r in out]
