"""Byte-wise Shamir secret sharing over GF(256).

Each byte of the secret is the constant term of its own random polynomial of
degree ``k - 1``; share ``i`` holds the evaluations at ``x = i``.
"""
from __future__ import annotations

import base64
import hashlib
import hmac
import json
import os
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

from .errors import BiokeyError
from .gf256 import MUL, gf_div, gf_mul

SHARE_VERSION = 1
RID_LEN = 16


def share_checksum(rid: bytes, x: int, payload: bytes) -> bytes:
    return hashlib.sha256(rid + bytes([x]) + payload).digest()


@dataclass(frozen=True)
class Share:
    rid: bytes
    x: int
    n: int
    k: int
    payload: bytes
    checksum: bytes

    @property
    def valid(self) -> bool:
        return hmac.compare_digest(share_checksum(self.rid, self.x, self.payload), self.checksum)

    def to_dict(self) -> dict:
        return {
            "v": SHARE_VERSION,
            "rid": self.rid.hex(),
            "x": self.x,
            "n": self.n,
            "k": self.k,
            "payload": base64.b64encode(self.payload).decode("ascii"),
            "sum": base64.b64encode(self.checksum).decode("ascii"),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))

    @classmethod
    def from_dict(cls, d: dict) -> "Share":
        try:
            if d["v"] != SHARE_VERSION:
                raise ValueError(f"unsupported share version {d['v']!r}")
            rid = bytes.fromhex(d["rid"])
            if len(rid) != RID_LEN:
                raise ValueError("rid must be 16 bytes")
            share = cls(
                rid,
                int(d["x"]),
                int(d["n"]),
                int(d["k"]),
                base64.b64decode(d["payload"], validate=True),
                base64.b64decode(d["sum"], validate=True),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise BiokeyError("bad-share", str(exc)) from None
        if not (1 <= share.x <= 255 and 1 <= share.k <= share.n <= 255):
            raise BiokeyError("bad-share", "share parameters out of range")
        return share

    @classmethod
    def from_json(cls, text: str | bytes) -> "Share":
        try:
            return cls.from_dict(json.loads(text))
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise BiokeyError("bad-share", str(exc)) from None


def _make(rid: bytes, x: int, n: int, k: int, payload: bytes) -> Share:
    return Share(rid, x, n, k, payload, share_checksum(rid, x, payload))


def split(secret: bytes, n: int, k: int, rng: Callable[[int], bytes] = os.urandom) -> list[Share]:
    if not secret:
        raise BiokeyError("bad-params", "secret must be nonempty")
    if not 1 <= k <= n <= 255:
        raise BiokeyError("bad-params", f"need 1 <= k <= n <= 255, got n={n} k={k}")
    rid = rng(RID_LEN)
    length = len(secret)
    coeffs = np.frombuffer(rng((k - 1) * length), dtype=np.uint8).reshape(k - 1, length)
    base = np.frombuffer(bytes(secret), dtype=np.uint8)
    shares = []
    for x in range(1, n + 1):
        # Horner from the highest coefficient down to the secret byte
        acc = np.zeros(length, dtype=np.uint8)
        for row in coeffs[::-1]:
            acc = MUL[x][acc] ^ row
        acc = MUL[x][acc] ^ base
        shares.append(_make(rid, x, n, k, acc.tobytes()))
    return shares


def lagrange_at_zero(xs: list[int]) -> list[int]:
    weights = []
    for i, xi in enumerate(xs):
        num, den = 1, 1
        for j, xj in enumerate(xs):
            if i != j:
                num = gf_mul(num, xj)
                den = gf_mul(den, xi ^ xj)
        weights.append(gf_div(num, den))
    return weights


def recover(shares: Iterable[Share]) -> bytes:
    shares = list(shares)
    if not shares:
        raise BiokeyError("below-threshold", "no shares")
    for s in shares:
        if not s.valid:
            raise BiokeyError("corrupt-share", f"share x={s.x} fails its checksum")
    first = shares[0]
    by_x: dict[int, Share] = {}
    for s in shares:
        if s.rid != first.rid:
            raise BiokeyError("mixed-sets", "shares belong to different recovery ids")
        if (s.n, s.k, len(s.payload)) != (first.n, first.k, len(first.payload)):
            raise BiokeyError("mixed-sets", f"share x={s.x} disagrees on n, k or length")
        prev = by_x.setdefault(s.x, s)
        if prev.payload != s.payload:
            raise BiokeyError("mixed-sets", f"two different shares claim x={s.x}")
    if len(by_x) < first.k:
        raise BiokeyError("below-threshold", f"have {len(by_x)} distinct shares, need {first.k}")
    xs = sorted(by_x)[: first.k]
    weights = lagrange_at_zero(xs)
    out = np.zeros(len(first.payload), dtype=np.uint8)
    for w, x in zip(weights, xs):
        out ^= MUL[w][np.frombuffer(by_x[x].payload, dtype=np.uint8)]
    return out.tobytes()
