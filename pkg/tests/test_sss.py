import itertools
import random

import pytest

from biokey.errors import BiokeyError
from biokey.sss import Share, recover, split

import oracles


def scripted_rng(*chunks):
    """Hands out the given byte strings in order (recovery id first, then coefficients)."""
    queue = list(chunks)

    def rng(k):
        out = queue.pop(0)
        assert len(out) == k
        return out

    return rng


def test_threshold_one_copies_the_secret():
    for s in split(b"secret", 5, 1):
        assert s.payload == b"secret"


def test_two_of_two_by_hand():
    rid = bytes(16)
    for secret, a in [(0x53, 0x07), (0x00, 0xFF), (0xA5, 0x80)]:
        s1, s2 = split(bytes([secret]), 2, 2, scripted_rng(rid, bytes([a])))
        assert s1.payload == bytes([secret ^ oracles.gf_mul(a, 1)])
        assert s2.payload == bytes([secret ^ oracles.gf_mul(a, 2)])


def test_payloads_match_polynomial_oracle():
    rnd = random.Random(1)
    secret = rnd.randbytes(5)
    coeffs = rnd.randbytes(2 * 5)
    shares = split(secret, 6, 3, scripted_rng(bytes(16), coeffs))
    for s in shares:
        expect = [oracles.poly_eval([secret[i], coeffs[i], coeffs[5 + i]], s.x) for i in range(5)]
        assert list(s.payload) == expect


def test_subset_recovery():
    secret = random.Random(2).randbytes(64)
    shares = split(secret, 6, 3)
    assert recover([shares[1], shares[4], shares[5]]) == secret
    assert recover(shares) == secret


def test_every_threshold_subset_recovers_and_smaller_ones_refuse():
    secret = b"package"
    shares = split(secret, 6, 4)
    for combo in itertools.combinations(shares, 4):
        assert recover(combo) == secret
    for combo in itertools.combinations(shares, 3):
        with pytest.raises(BiokeyError) as exc:
            recover(combo)
        assert exc.value.code == "below-threshold"


def test_single_share_reveals_nothing():
    # 1-byte secrets, k=2, n=3: every secret is consistent with every observed
    # byte of any one share. The 256 byte positions carry all 256 secrets at once.
    all_secrets = bytes(range(256))
    seen = {x: [set() for _ in range(256)] for x in (1, 2, 3)}
    for a in range(256):
        for share in split(all_secrets, 3, 2, scripted_rng(bytes(16), bytes([a]) * 256)):
            for s, y in enumerate(share.payload):
                seen[share.x][y].add(s)
    for x in (1, 2, 3):
        assert all(len(secrets) == 256 for secrets in seen[x])


def test_corrupt_share_is_named():
    shares = split(b"abc", 4, 2)
    bad = Share(shares[2].rid, 3, 4, 2, b"abd", shares[2].checksum)
    with pytest.raises(BiokeyError) as exc:
        recover([shares[0], bad])
    assert exc.value.code == "corrupt-share"
    assert "x=3" in str(exc.value)


def test_mixed_sets():
    a, b = split(b"abc", 3, 2), split(b"abc", 3, 2)
    with pytest.raises(BiokeyError) as exc:
        recover([a[0], b[1]])
    assert exc.value.code == "mixed-sets"


def test_bad_parameters():
    for n, k in [(3, 4), (0, 0), (256, 2), (3, 0)]:
        with pytest.raises(BiokeyError) as exc:
            split(b"x", n, k)
        assert exc.value.code == "bad-params"
    with pytest.raises(BiokeyError):
        split(b"", 3, 2)


def test_share_json_round_trip():
    s = split(b"hello", 3, 2)[1]
    assert Share.from_json(s.to_json()) == s
    d = s.to_dict()
    assert set(d) == {"v", "rid", "x", "n", "k", "payload", "sum"}
    for bad in ("{", '{"v": 1}', s.to_json().replace('"x":2', '"x":0')):
        with pytest.raises(BiokeyError) as exc:
            Share.from_json(bad)
        assert exc.value.code == "bad-share"


def test_randomised_round_trips():
    rnd = random.Random(3)
    for _ in range(1000):
        n = rnd.randint(1, 12)
        k = rnd.randint(1, n)
        secret = rnd.randbytes(rnd.randint(1, 4096))
        shares = split(secret, n, k)
        assert recover(rnd.sample(shares, k)) == secret
