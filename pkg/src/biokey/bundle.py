"""Minutia hashing and the two-level recovery bundle.

Each pre-transform block ``b`` holds ``m_b`` minutiae. Their SHA-256 hashes,
sorted bytewise, are the data shards of a per-block Reed-Solomon code with
``p_b`` parity shards. Each block is summarised by a block digest, and the
``N`` block digests are the data shards of an overall code with ``P``
parity shards. The master hash is the digest of all block digests.

Only parity is stored. Matching later yields some of the minutia hashes,
possibly including wrong ones (see ``recover_master_hash``).
"""
from __future__ import annotations

import base64
import hashlib
import math
import struct
from dataclasses import dataclass
from itertools import combinations, product
from typing import Callable, Iterable, Mapping, Sequence

from .errors import BiokeyError, MatchFailure
from .rs import parity_rows, rs_reconstruct
from .template import Kind, Minutia

DIGEST_LEN = 32
EMPTY_BLOCK_DIGEST = hashlib.sha256(b"BLK0").digest()

RHO_BLOCK = 0.5
RHO_OVERALL = 0.5

# search caps keep impostor attempts cheap
MAX_BLOCK_SUBSETS = 256
MAX_OVERALL_ATTEMPTS = 512


def to_fixed(v: float) -> int:
    """Quarter-pixel fixed point used for hashing and transform arithmetic."""
    return int(round(4.0 * v))


def hash_minutia(m: Minutia) -> bytes:
    enc = b"MIN1" + struct.pack(">ii", to_fixed(m.x), to_fixed(m.y)) + bytes([int(Kind(m.kind))])
    return hashlib.sha256(enc).digest()


def block_digest(hashes: Sequence[bytes]) -> bytes:
    if not hashes:
        return EMPTY_BLOCK_DIGEST
    return hashlib.sha256(b"BLK1" + b"".join(hashes)).digest()


def master_digest(block_digests: Sequence[bytes]) -> bytes:
    return hashlib.sha256(b"ALL1" + b"".join(block_digests)).digest()


def block_parity_count(m: int, rho: float = RHO_BLOCK) -> int:
    if m == 0:
        return 0
    return max(1, math.ceil(rho * m))


@dataclass(frozen=True)
class BlockParity:
    m: int
    parity: tuple[bytes, ...]


@dataclass(frozen=True)
class RecoveryBundle:
    blocks: tuple[BlockParity, ...]
    overall_parity: tuple[bytes, ...]

    @property
    def n_blocks(self) -> int:
        return len(self.blocks)

    def to_dict(self) -> dict:
        enc = lambda b: base64.b64encode(b).decode("ascii")  # noqa: E731
        return {
            "blocks": [{"m": b.m, "parity": [enc(p) for p in b.parity]} for b in self.blocks],
            "overall_parity": [enc(p) for p in self.overall_parity],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RecoveryBundle":
        try:
            blocks = tuple(
                BlockParity(int(b["m"]), tuple(_b64_digest(p) for p in b["parity"]))
                for b in d["blocks"]
            )
            overall = tuple(_b64_digest(p) for p in d["overall_parity"])
        except (KeyError, TypeError, ValueError) as exc:
            raise BiokeyError("bad-template", f"bad bundle: {exc}") from None
        return cls(blocks, overall)


def _b64_digest(s: str) -> bytes:
    raw = base64.b64decode(s, validate=True)
    if len(raw) != DIGEST_LEN:
        raise ValueError("parity shard must be 32 bytes")
    return raw


def build_recovery_bundle(
    per_block_hashes: Mapping[int, Sequence[bytes]],
    n_blocks: int,
    rho_block: float = RHO_BLOCK,
    rho_overall: float = RHO_OVERALL,
) -> tuple[RecoveryBundle, bytes]:
    """Build parity for blocks ``1..n_blocks``; returns ``(bundle, master_hash)``.

    Hashes are sorted inside each block, so input order does not matter.
    """
    extra = set(per_block_hashes) - set(range(1, n_blocks + 1))
    if extra:
        raise BiokeyError("bad-params", f"block index out of range: {sorted(extra)}")
    blocks = []
    digests = []
    for b in range(1, n_blocks + 1):
        hashes = sorted(per_block_hashes.get(b, ()))
        p = block_parity_count(len(hashes), rho_block)
        blocks.append(BlockParity(len(hashes), tuple(parity_rows(hashes, p)) if hashes else ()))
        digests.append(block_digest(hashes))
    overall = parity_rows(digests, math.ceil(rho_overall * n_blocks))
    return RecoveryBundle(tuple(blocks), tuple(overall)), master_digest(digests)


def _ascending(hashes: Sequence[bytes]) -> bool:
    return all(a < b for a, b in zip(hashes, hashes[1:]))


def _decode_block(bp: BlockParity, obs: Iterable[tuple[int, bytes]]) -> tuple[list[bytes], bool]:
    """Candidate block digests for one block.

    Returns ``([digest], True)`` when a reconstruction is confirmed by a spare
    parity shard (or used no observations at all), otherwise a possibly empty
    list of unconfirmed candidates and ``False``.
    """
    m, parity = bp.m, list(bp.parity)
    if m == 0:
        return [EMPTY_BLOCK_DIGEST], True
    p = len(parity)
    obs = sorted({(s, h) for s, h in obs if 0 <= s < m and len(h) == DIGEST_LEN})
    unconfirmed: list[bytes] = []
    tried = 0
    for size in range(min(len(obs), m), max(m - p, 0) - 1, -1):
        for combo in combinations(obs, size):
            if len({s for s, _ in combo}) != size:
                continue
            tried += 1
            if tried > MAX_BLOCK_SUBSETS:
                return unconfirmed, False
            present = dict(combo)
            present.update({m + i: par for i, par in enumerate(parity)})
            data = rs_reconstruct(present, m, p)
            if not _ascending(data):
                continue
            spare = size + p - m
            if spare > 0:
                if parity_rows(data, p) == parity:
                    return [block_digest(data)], True
            elif size == 0:
                return [block_digest(data)], True
            else:
                d = block_digest(data)
                if d not in unconfirmed:
                    unconfirmed.append(d)
    return unconfirmed, False


def recover_master_hash(
    known: Mapping[int, Iterable[tuple[int, bytes]]],
    bundle: RecoveryBundle,
    accept: Callable[[bytes], bool] | None = None,
) -> bytes:
    """Rebuild the master hash from partially known minutia hashes.

    ``known`` maps block number (1-based) to ``(shard_index, hash)`` pairs.
    Pairs may be wrong or conflicting: a block is trusted when a spare parity
    shard confirms its reconstruction, and blocks that cannot be rebuilt
    become erasures of the overall code. Unconfirmed block candidates are
    tried in combinations, and ``accept`` (typically a verifier check)
    decides between them.

    Raises ``MatchFailure("recovery-failed")`` when not enough shards are
    available, and ``MatchFailure("no-match")`` when reconstructions were
    possible but ``accept`` rejected all of them.
    """
    n = bundle.n_blocks
    overall = list(bundle.overall_parity)
    big_p = len(overall)
    trusted: dict[int, bytes] = {}
    options: dict[int, list[bytes]] = {}
    for idx, bp in enumerate(bundle.blocks):
        cands, ok = _decode_block(bp, known.get(idx + 1, ()))
        if ok:
            trusted[idx] = cands[0]
        elif cands:
            options[idx] = cands

    if len(trusted) + len(options) + big_p < n:
        raise MatchFailure("recovery-failed", f"{n - len(trusted) - len(options)} blocks lost, {big_p} parity")

    attempts = 0
    consistent = 0
    opt_blocks = sorted(options)
    for drop in range(len(opt_blocks) + 1):
        if len(trusted) + len(opt_blocks) - drop + big_p < n:
            break
        for dropped in combinations(opt_blocks, drop):
            included = [b for b in opt_blocks if b not in dropped]
            for choice in product(*(options[b] for b in included)):
                attempts += 1
                if attempts > MAX_OVERALL_ATTEMPTS:
                    return _give_up(consistent)
                present = dict(trusted)
                present.update(zip(included, choice))
                known_count = len(present)
                present.update({n + i: par for i, par in enumerate(overall)})
                data = rs_reconstruct(present, n, big_p)
                if known_count + big_p > n:
                    if parity_rows(data, big_p) != overall:
                        continue
                    if any(data[b] != d for b, d in present.items() if b < n):
                        continue
                consistent += 1
                master = master_digest(data)
                if accept is None or accept(master):
                    return master
    return _give_up(consistent)


def _give_up(consistent: int):
    if consistent:
        raise MatchFailure("no-match", "no reconstruction passed verification")
    raise MatchFailure("recovery-failed", "no consistent reconstruction")
