"""Cartesian block transformation, enrollment and matching.

The template plane is cut into an ``H x W`` grid of blocks numbered 1..N in
row-major order. A random 0/1 matrix ``M`` with exactly one 1 per column
maps block ``j`` to block ``f(j)`` (the row of that 1), so ``C' = C . M``
for ``C = [1..N]``. Several blocks may land on the same target, which is
what makes the stored template non-invertible without the source blocks.

Coordinates are snapped to the quarter-pixel lattice and block origins are
integers, so moving a point between blocks and back is exact in floating
point.
"""
from __future__ import annotations

import base64
import hashlib
import hmac
import json
import math
import os
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .bundle import RecoveryBundle, build_recovery_bundle, hash_minutia, recover_master_hash, to_fixed
from .errors import BiokeyError, MatchFailure
from .template import Bounds, Kind, Minutia, MinutiaTemplate

REGISTERED_VERSION = 1
DEFAULT_GRID = (4, 4)
MATCH_THRESHOLD = 12.0
MIN_MINUTIAE = 12
MIN_PAIR_FRACTION = 0.5
SALT_LEN = 16


def normalize_bounds(bounds: Bounds, h: int, w: int) -> tuple[int, int, int, int]:
    """Snap bounds outward to integers so every cell has integer width and height."""
    min_x, min_y = math.floor(bounds[0]), math.floor(bounds[1])
    cw = max(1, math.ceil((bounds[2] - min_x) / w))
    ch = max(1, math.ceil((bounds[3] - min_y) / h))
    return (min_x, min_y, min_x + w * cw, min_y + h * ch)


@dataclass(frozen=True)
class TransformParams:
    bounds: tuple[int, int, int, int]
    h: int
    w: int
    mapping: tuple[int, ...]
    seed: int | None = field(default=None, compare=False)

    def __post_init__(self):
        n = self.h * self.w
        if n < 4:
            raise BiokeyError("grid-too-small", f"{self.h}x{self.w} has fewer than 4 blocks")
        if len(self.mapping) != n or not all(1 <= t <= n for t in self.mapping):
            raise BiokeyError("bad-params", "mapping must list one target block in 1..N per block")
        if tuple(self.bounds) != normalize_bounds(self.bounds, self.h, self.w):
            raise BiokeyError("bad-params", "bounds must be integer and divisible by the grid")

    @property
    def n_blocks(self) -> int:
        return self.h * self.w

    @property
    def cell(self) -> tuple[int, int]:
        return ((self.bounds[2] - self.bounds[0]) // self.w, (self.bounds[3] - self.bounds[1]) // self.h)

    @property
    def matrix(self) -> np.ndarray:
        n = self.n_blocks
        m = np.zeros((n, n), dtype=np.uint8)
        m[np.array(self.mapping) - 1, np.arange(n)] = 1
        return m

    @classmethod
    def from_matrix(cls, matrix, h: int, w: int, bounds: Bounds) -> "TransformParams":
        m = np.asarray(matrix)
        n = h * w
        if m.shape != (n, n) or not np.isin(m, (0, 1)).all() or not (m.sum(axis=0) == 1).all():
            raise BiokeyError("bad-params", "matrix must be N x N 0/1 with one 1 per column")
        mapping = tuple(int(np.flatnonzero(m[:, j])[0]) + 1 for j in range(n))
        return cls(normalize_bounds(bounds, h, w), h, w, mapping)

    def target(self, block: int) -> int:
        return self.mapping[block - 1]

    def origin(self, block: int) -> tuple[int, int]:
        cw, ch = self.cell
        row, col = divmod(block - 1, self.w)
        return (self.bounds[0] + col * cw, self.bounds[1] + row * ch)

    def to_dict(self) -> dict:
        return {
            "H": self.h,
            "W": self.w,
            "bounds": list(self.bounds),
            "seed-omitted": True,
            "M": list(self.mapping),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TransformParams":
        try:
            return cls(tuple(int(b) for b in d["bounds"]), int(d["H"]), int(d["W"]), tuple(int(t) for t in d["M"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise BiokeyError("bad-template", f"bad params: {exc}") from None


def transform_blocks(c: Sequence[int], params: TransformParams) -> list[int]:
    """Row vector product ``C . M`` (block relabelling as a matrix product)."""
    return [int(v) for v in np.asarray(c, dtype=np.int64) @ params.matrix.astype(np.int64)]


def block_of(point: tuple[float, float], params: TransformParams) -> int:
    """1-based row-major block index.

    Cells are closed on their upper edge, so a point on a shared boundary
    belongs to the lower-numbered block. Points outside the bounds are
    clamped to the nearest edge block.
    """
    cw, ch = params.cell
    col = math.ceil((point[0] - params.bounds[0]) / cw) - 1
    row = math.ceil((point[1] - params.bounds[1]) / ch) - 1
    col = min(max(col, 0), params.w - 1)
    row = min(max(row, 0), params.h - 1)
    return row * params.w + col + 1


def generate_transform(seed: int, h: int, w: int, bounds: Bounds) -> TransformParams:
    n = h * w
    if n < 4:
        raise BiokeyError("grid-too-small", f"{h}x{w} has fewer than 4 blocks")
    rng = np.random.default_rng(seed)
    mapping = tuple(int(t) for t in rng.integers(1, n + 1, size=n))
    return TransformParams(normalize_bounds(bounds, h, w), h, w, mapping, seed)


@dataclass(frozen=True)
class TransformedMinutia:
    x: float
    y: float
    kind: Kind
    target_block: int
    source_block: int | None = None
    slot: int | None = None


def _snap(v: float, lo: float, hi: float) -> float:
    return min(max(to_fixed(v) / 4.0, lo), hi)


def canonical_point(m: Minutia, params: TransformParams) -> Minutia:
    """Quarter-pixel snapped and clamped into the transform bounds."""
    b = params.bounds
    return Minutia(_snap(m.x, b[0], b[2]), _snap(m.y, b[1], b[3]), Kind(m.kind))


def _move(m: Minutia, params: TransformParams) -> tuple[int, int, float, float]:
    src = block_of((m.x, m.y), params)
    dst = params.target(src)
    (sx, sy), (tx, ty) = params.origin(src), params.origin(dst)
    return src, dst, m.x + (tx - sx), m.y + (ty - sy)


def apply_transform(tmpl: MinutiaTemplate, params: TransformParams, keep_source: bool = False) -> list[TransformedMinutia]:
    out = []
    for m in tmpl.minutiae:
        m = canonical_point(m, params)
        src, dst, x, y = _move(m, params)
        out.append(TransformedMinutia(x, y, m.kind, dst, src if keep_source else None))
    return out


def reverse_point(p: TransformedMinutia, claimed_source: int, params: TransformParams) -> tuple[float, float]:
    if params.target(claimed_source) != p.target_block:
        raise BiokeyError(
            "block-claim-mismatch",
            f"block {claimed_source} maps to {params.target(claimed_source)}, not {p.target_block}",
        )
    (sx, sy), (tx, ty) = params.origin(claimed_source), params.origin(p.target_block)
    return (p.x + (sx - tx), p.y + (sy - ty))


def _b64(b: bytes) -> str:
    return base64.b64encode(b).decode("ascii")


def _unb64(s: str, length: int) -> bytes:
    raw = base64.b64decode(s, validate=True)
    if len(raw) != length:
        raise ValueError(f"expected {length} bytes")
    return raw


def verifier_digest(salt: bytes, master_hash: bytes) -> bytes:
    return hashlib.sha256(b"verify" + salt + master_hash).digest()


@dataclass(frozen=True)
class RegisteredTemplate:
    """Stored enrollment: transformed minutiae, transform, parity and verifier.

    Holds no source blocks, no original-space minutiae and no master hash.
    """

    transformed: tuple[TransformedMinutia, ...]
    params: TransformParams
    bundle: RecoveryBundle
    verifier_salt: bytes
    verifier: bytes
    kdf_salt: bytes

    def check(self, master_hash: bytes) -> bool:
        return hmac.compare_digest(verifier_digest(self.verifier_salt, master_hash), self.verifier)

    def to_dict(self) -> dict:
        return {
            "v": REGISTERED_VERSION,
            "params": self.params.to_dict(),
            "minutiae": [
                {"x": t.x, "y": t.y, "kind": t.kind.letter, "tb": t.target_block, "slot": t.slot}
                for t in self.transformed
            ],
            "bundle": self.bundle.to_dict(),
            "verifier_salt": _b64(self.verifier_salt),
            "verifier": _b64(self.verifier),
            "kdf_salt": _b64(self.kdf_salt),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))

    @classmethod
    def from_dict(cls, d: dict) -> "RegisteredTemplate":
        if d.get("v") != REGISTERED_VERSION:
            raise BiokeyError("bad-template", f"unsupported registered template version {d.get('v')!r}")
        params = TransformParams.from_dict(d.get("params", {}))
        try:
            transformed = tuple(
                TransformedMinutia(float(t["x"]), float(t["y"]), Kind.from_letter(t["kind"]), int(t["tb"]), None, int(t["slot"]))
                for t in d["minutiae"]
            )
            bundle = RecoveryBundle.from_dict(d["bundle"])
            vsalt = _unb64(d["verifier_salt"], SALT_LEN)
            verifier = _unb64(d["verifier"], 32)
            ksalt = _unb64(d["kdf_salt"], SALT_LEN)
        except (KeyError, TypeError, ValueError) as exc:
            raise BiokeyError("bad-template", str(exc)) from None
        if bundle.n_blocks != params.n_blocks:
            raise BiokeyError("bad-template", "bundle block count differs from grid")
        return cls(transformed, params, bundle, vsalt, verifier, ksalt)

    @classmethod
    def from_json(cls, text: str) -> "RegisteredTemplate":
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise BiokeyError("bad-template", str(exc)) from None


def register(
    tmpl: MinutiaTemplate,
    seed: int,
    h: int = DEFAULT_GRID[0],
    w: int = DEFAULT_GRID[1],
    *,
    min_minutiae: int = MIN_MINUTIAE,
    rho_block: float = 0.5,
    rho_overall: float = 0.5,
    rng: Callable[[int], bytes] = os.urandom,
) -> tuple[RegisteredTemplate, bytes]:
    """Enroll a template. Returns ``(registered, master_hash)``.

    The master hash is the key material; it is returned to the caller and
    not kept in the registered template.
    """
    params = generate_transform(seed, h, w, tmpl.bounds)
    points = sorted({canonical_point(m, params) for m in tmpl.minutiae})
    if len(points) < min_minutiae:
        raise BiokeyError("insufficient-minutiae", f"{len(points)} < {min_minutiae}")

    per_block: dict[int, list[tuple[bytes, Minutia]]] = {}
    for m in points:
        per_block.setdefault(block_of((m.x, m.y), params), []).append((hash_minutia(m), m))
    for entries in per_block.values():
        entries.sort()

    bundle, master = build_recovery_bundle(
        {b: [h_ for h_, _ in e] for b, e in per_block.items()},
        params.n_blocks,
        rho_block,
        rho_overall,
    )
    # blocks whose parity alone rebuilds them, plus empty blocks, are public
    free = sum(1 for bp in bundle.blocks if len(bp.parity) >= bp.m)
    if free + len(bundle.overall_parity) >= params.n_blocks:
        raise BiokeyError(
            "weak-enrollment",
            f"{free} of {params.n_blocks} blocks are derivable from stored parity; "
            "the key would not depend on the fingerprint",
        )

    stored = []
    for b, entries in per_block.items():
        for slot, (_, m) in enumerate(entries):
            _, dst, x, y = _move(m, params)
            stored.append(TransformedMinutia(x, y, m.kind, dst, None, slot))
    stored.sort(key=lambda t: (t.target_block, t.x, t.y, t.kind, t.slot))

    vsalt, ksalt = rng(SALT_LEN), rng(SALT_LEN)
    reg = RegisteredTemplate(tuple(stored), params, bundle, vsalt, verifier_digest(vsalt, master), ksalt)
    return reg, master


def pair_minutiae(
    stored: Sequence[TransformedMinutia],
    candidate: Sequence[TransformedMinutia],
    tau: float = MATCH_THRESHOLD,
) -> list[tuple[int, int]]:
    """Greedy one-to-one pairing inside each target block.

    Pairs need equal kind and distance at most ``tau``; shortest distances
    are taken first. Returns ``(stored_index, candidate_index)`` pairs.
    """
    by_block: dict[int, list[int]] = {}
    for ci, c in enumerate(candidate):
        by_block.setdefault(c.target_block, []).append(ci)
    edges = []
    for si, s in enumerate(stored):
        for ci in by_block.get(s.target_block, ()):
            c = candidate[ci]
            if c.kind != s.kind:
                continue
            d = math.hypot(s.x - c.x, s.y - c.y)
            if d <= tau:
                edges.append((d, si, ci))
    edges.sort()
    used_s, used_c, pairs = set(), set(), []
    for _, si, ci in edges:
        if si in used_s or ci in used_c:
            continue
        used_s.add(si)
        used_c.add(ci)
        pairs.append((si, ci))
    return pairs


def match_and_recover(
    reg: RegisteredTemplate,
    candidate: MinutiaTemplate,
    tau: float = MATCH_THRESHOLD,
    min_pair_fraction: float = MIN_PAIR_FRACTION,
) -> bytes:
    """Regenerate the master hash from a candidate template.

    A candidate must pair with at least ``min_pair_fraction`` of the stored
    minutiae before any reconstruction is attempted. Without this gate a
    handful of chance pairings is enough, because each pairing reverses the
    stored minutia exactly whenever the claimed source block is right.

    Raises :class:`MatchFailure` with code ``"recovery-failed"`` or
    ``"no-match"``.
    """
    params = reg.params
    cand = apply_transform(candidate, params, keep_source=True)
    pairs = pair_minutiae(reg.transformed, cand, tau)
    needed = math.ceil(min_pair_fraction * len(reg.transformed))
    if len(pairs) < needed:
        raise MatchFailure("no-match", f"{len(pairs)} of {len(reg.transformed)} stored minutiae paired, need {needed}")
    known: dict[int, list[tuple[int, bytes]]] = {}
    for si, ci in pairs:
        s, src = reg.transformed[si], cand[ci].source_block
        x, y = reverse_point(s, src, params)
        if s.slot is None:
            continue
        known.setdefault(src, []).append((s.slot, hash_minutia(Minutia(x, y, s.kind))))
    return recover_master_hash(known, reg.bundle, accept=reg.check)


def with_params(reg: RegisteredTemplate, params: TransformParams) -> RegisteredTemplate:
    return replace(reg, params=params)
