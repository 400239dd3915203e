import hashlib
import math
import random

import pytest

from biokey.bundle import (
    EMPTY_BLOCK_DIGEST,
    RecoveryBundle,
    block_digest,
    block_parity_count,
    build_recovery_bundle,
    hash_minutia,
    master_digest,
    recover_master_hash,
)
from biokey.errors import MatchFailure
from biokey.template import Kind, Minutia

# sha256sum over 4D494E31 00000028 00000028 00
GOLDEN_ENDING_10_10 = bytes.fromhex("a83ecdb5c157da322b369745c338fef950eb53b912482f3f7daf2b1f1d278300")
# sha256sum over "BLK0"
GOLDEN_EMPTY_BLOCK = bytes.fromhex("e70b4d067b77aece04d1ff7a1520714244d8052128a570f9fbfee81dd884748c")


def _hashes(rnd, count):
    return [rnd.randbytes(32) for _ in range(count)]


def _known(per_block, drop=None):
    """Observations as a matcher produces them: (sorted position, hash)."""
    drop = drop or {}
    out = {}
    for b, hs in per_block.items():
        sorted_hs = sorted(hs)
        out[b] = [(i, h) for i, h in enumerate(sorted_hs) if i not in drop.get(b, ())]
    return out


def test_minutia_hash_golden():
    assert hash_minutia(Minutia(10.0, 10.0, Kind.ENDING)) == GOLDEN_ENDING_10_10


def test_minutia_hash_is_deterministic_and_kind_sensitive():
    m = Minutia(12.3, 45.6, Kind.ENDING)
    assert hash_minutia(m) == hash_minutia(Minutia(12.3, 45.6, Kind.ENDING))
    assert hash_minutia(m) != hash_minutia(Minutia(12.3, 45.6, Kind.BIFURCATION))


def test_quarter_pixel_encoding():
    assert hash_minutia(Minutia(10.1, 10.0, Kind.ENDING)) == GOLDEN_ENDING_10_10
    assert hash_minutia(Minutia(10.25, 10.0, Kind.ENDING)) != GOLDEN_ENDING_10_10


def test_empty_block_sentinel():
    assert EMPTY_BLOCK_DIGEST == GOLDEN_EMPTY_BLOCK
    assert block_digest([]) == GOLDEN_EMPTY_BLOCK


def test_all_empty_bundle():
    bundle, master = build_recovery_bundle({}, 9)
    assert master == hashlib.sha256(b"ALL1" + GOLDEN_EMPTY_BLOCK * 9).digest()
    assert all(b.m == 0 and b.parity == () for b in bundle.blocks)
    assert len(bundle.overall_parity) == 5


def test_parity_sizes():
    assert block_parity_count(0) == 0
    assert block_parity_count(1) == 1
    assert block_parity_count(5) == 3
    assert block_parity_count(6, 0.25) == 2
    rnd = random.Random(1)
    per_block = {b: _hashes(rnd, b % 5) for b in range(1, 17)}
    bundle, _ = build_recovery_bundle(per_block, 16)
    for b, bp in enumerate(bundle.blocks, start=1):
        assert bp.m == b % 5
        assert len(bp.parity) == block_parity_count(b % 5)
    assert len(bundle.overall_parity) == math.ceil(0.5 * 16)


def test_input_order_does_not_matter():
    rnd = random.Random(2)
    per_block = {b: _hashes(rnd, 4) for b in range(1, 5)}
    shuffled = {b: list(reversed(hs)) for b, hs in per_block.items()}
    assert build_recovery_bundle(per_block, 4) == build_recovery_bundle(shuffled, 4)


def test_master_is_digest_of_block_digests():
    rnd = random.Random(3)
    per_block = {1: _hashes(rnd, 3), 3: _hashes(rnd, 2)}
    _, master = build_recovery_bundle(per_block, 4)
    digests = [block_digest(sorted(per_block.get(b, []))) for b in range(1, 5)]
    assert master == master_digest(digests)


def test_every_hash_affects_master():
    rnd = random.Random(4)
    per_block = {b: _hashes(rnd, 3) for b in range(1, 5)}
    _, master = build_recovery_bundle(per_block, 4)
    for b in per_block:
        for i in range(3):
            mutated = {k: list(v) for k, v in per_block.items()}
            h = bytearray(mutated[b][i])
            h[rnd.randrange(32)] ^= 1 << rnd.randrange(8)
            mutated[b][i] = bytes(h)
            assert build_recovery_bundle(mutated, 4)[1] != master


def test_bundle_serialisation_round_trip():
    rnd = random.Random(5)
    bundle, _ = build_recovery_bundle({b: _hashes(rnd, b) for b in range(1, 5)}, 4)
    assert RecoveryBundle.from_dict(bundle.to_dict()) == bundle


def test_all_known():
    rnd = random.Random(6)
    per_block = {b: _hashes(rnd, 4) for b in range(1, 5)}
    bundle, master = build_recovery_bundle(per_block, 4)
    assert recover_master_hash(_known(per_block), bundle) == master


def test_one_block_entirely_unknown():
    rnd = random.Random(7)
    per_block = {b: _hashes(rnd, 4) for b in range(1, 5)}
    bundle, master = build_recovery_bundle(per_block, 4)
    known = _known(per_block)
    del known[2]
    assert recover_master_hash(known, bundle) == master


def test_block_boundary_both_sides():
    # m=4, p=2: two missing hashes are recoverable inside the block, three
    # are not and the block falls back on the overall code (P=2 for N=4)
    rnd = random.Random(8)
    per_block = {b: _hashes(rnd, 4) for b in range(1, 5)}
    bundle, master = build_recovery_bundle(per_block, 4)
    assert recover_master_hash(_known(per_block, {1: {0, 3}, 2: {1, 2}, 3: {0, 1}, 4: {2, 3}}), bundle) == master
    # three blocks each three short: only two can be carried by overall parity
    lost3 = {1: {0, 1, 2}, 2: {0, 1, 2}, 3: {0, 1, 2}}
    with pytest.raises(MatchFailure) as exc:
        recover_master_hash(_known(per_block, lost3), bundle)
    assert exc.value.code == "recovery-failed"
    lost2 = {1: {0, 1, 2}, 2: {0, 1, 2}}
    assert recover_master_hash(_known(per_block, lost2), bundle) == master


def test_nothing_known():
    rnd = random.Random(9)
    per_block = {b: _hashes(rnd, 4) for b in range(1, 5)}
    bundle, _ = build_recovery_bundle(per_block, 4)
    with pytest.raises(MatchFailure) as exc:
        recover_master_hash({}, bundle)
    assert exc.value.code == "recovery-failed"


def test_wrong_observations_are_outvoted():
    rnd = random.Random(10)
    per_block = {b: _hashes(rnd, 6) for b in range(1, 5)}
    bundle, master = build_recovery_bundle(per_block, 4)
    known = _known(per_block, {1: {5}})
    known[1].append((5, rnd.randbytes(32)))  # a collision-style wrong hash
    known[3][0] = (0, rnd.randbytes(32))
    assert recover_master_hash(known, bundle) == master


def test_accept_callback_decides():
    rnd = random.Random(11)
    per_block = {b: _hashes(rnd, 4) for b in range(1, 5)}
    bundle, master = build_recovery_bundle(per_block, 4)
    with pytest.raises(MatchFailure) as exc:
        recover_master_hash(_known(per_block), bundle, accept=lambda m: False)
    assert exc.value.code == "no-match"
    assert recover_master_hash(_known(per_block), bundle, accept=lambda m: m == master) == master


def test_randomised_round_trip_within_budget():
    rnd = random.Random(12)
    for _ in range(40):
        per_block = {b: _hashes(rnd, rnd.randint(0, 7)) for b in range(1, 17)}
        bundle, master = build_recovery_bundle(per_block, 16)
        big_p = len(bundle.overall_parity)
        gone = set(rnd.sample(range(1, 17), rnd.randint(0, big_p)))
        drop = {}
        for b, hs in per_block.items():
            p = block_parity_count(len(hs))
            drop[b] = set(rnd.sample(range(len(hs)), min(len(hs), rnd.randint(0, p))))
        known = {b: obs for b, obs in _known(per_block, drop).items() if b not in gone}
        assert recover_master_hash(known, bundle) == master
