import base64
import json
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from biokey.cancelable import (
    RegisteredTemplate,
    TransformedMinutia,
    TransformParams,
    apply_transform,
    block_of,
    canonical_point,
    generate_transform,
    match_and_recover,
    register,
    reverse_point,
    transform_blocks,
    with_params,
)
from biokey.errors import BiokeyError, MatchFailure
from biokey.synth import PerturbModel, generate_template, perturb
from biokey.template import Kind, Minutia, MinutiaTemplate

# the 4x4 matrix for a 2x2 grid: rows 0000 / 0100 / 1001 / 0010
PAPER_MATRIX = [[0, 0, 0, 0], [0, 1, 0, 0], [1, 0, 0, 1], [0, 0, 1, 0]]
SQUARE = (0, 0, 100, 100)


def paper_params():
    return TransformParams.from_matrix(PAPER_MATRIX, 2, 2, SQUARE)


def fixed_rng(seed):
    r = random.Random(seed)
    return lambda k: r.randbytes(k)


def test_block_numbering():
    p = TransformParams(SQUARE, 2, 2, (1, 2, 3, 4))
    assert block_of((10, 10), p) == 1
    assert block_of((60, 10), p) == 2
    assert block_of((60, 60), p) == 4
    p = TransformParams((0, 0, 120, 90), 3, 4, tuple(range(1, 13)))
    assert block_of((35, 40), p) == 6


def test_boundary_goes_to_lower_block_and_outside_is_clamped():
    p = TransformParams(SQUARE, 2, 2, (1, 2, 3, 4))
    assert block_of((50, 10), p) == 1
    assert block_of((10, 50), p) == 1
    assert block_of((50.25, 50.25), p) == 4
    assert block_of((-5, -5), p) == 1
    assert block_of((500, 500), p) == 4
    assert block_of((0, 0), p) == 1


def test_paper_matrix_product():
    p = paper_params()
    assert p.mapping == (3, 2, 4, 3)
    assert transform_blocks([1, 2, 3, 4], p) == [3, 2, 4, 3]
    assert (p.matrix == np.array(PAPER_MATRIX)).all()


def test_identity_matrix():
    p = TransformParams.from_matrix(np.eye(4, dtype=int), 2, 2, SQUARE)
    assert transform_blocks([1, 2, 3, 4], p) == [1, 2, 3, 4]
    tmpl = MinutiaTemplate((Minutia(10, 10, Kind.ENDING), Minutia(70.5, 20.25, Kind.BIFURCATION)), SQUARE)
    assert [(t.x, t.y) for t in apply_transform(tmpl, p)] == [(10, 10), (70.5, 20.25)]


def test_seeded_generation_is_deterministic():
    a = generate_transform(42, 2, 2, SQUARE)
    b = generate_transform(42, 2, 2, SQUARE)
    assert a.mapping == b.mapping
    assert (a.matrix.sum(axis=0) == 1).all()


def test_grid_too_small():
    with pytest.raises(BiokeyError) as exc:
        generate_transform(1, 1, 3, SQUARE)
    assert exc.value.code == "grid-too-small"


def test_bad_matrix_rejected():
    two_in_column = [[1, 0, 0, 0], [1, 1, 0, 0], [0, 0, 1, 0], [0, 0, 0, 1]]
    empty_column = [[0, 0, 0, 0], [0, 1, 0, 0], [0, 0, 1, 0], [0, 0, 0, 1]]
    for bad in (two_in_column, empty_column, [[2, 0, 0, 0]] + PAPER_MATRIX[1:]):
        with pytest.raises(BiokeyError):
            TransformParams.from_matrix(bad, 2, 2, SQUARE)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**63 - 1), h=st.integers(2, 6), w=st.integers(2, 6))
def test_one_target_per_column(seed, h, w):
    p = generate_transform(seed, h, w, (0, 0, 300, 300))
    m = p.matrix
    assert (m.sum(axis=0) == 1).all()
    out = transform_blocks(range(1, h * w + 1), p)
    assert all(1 <= v <= h * w for v in out)


def test_apply_moves_by_block_origins():
    p = paper_params()
    tmpl = MinutiaTemplate((Minutia(10, 10, Kind.ENDING),), SQUARE)
    (t,) = apply_transform(tmpl, p, keep_source=True)
    assert (t.x, t.y, t.target_block, t.source_block) == (10, 60, 3, 1)


def test_two_blocks_collide_with_offsets_kept():
    p = paper_params()
    tmpl = MinutiaTemplate((Minutia(10, 20, Kind.ENDING), Minutia(70, 80, Kind.ENDING)), SQUARE)
    a, b = apply_transform(tmpl, p, keep_source=True)
    assert a.target_block == b.target_block == 3
    assert (a.x, a.y) == (10, 70)
    assert (b.x, b.y) == (20, 80)
    assert (a.source_block, b.source_block) == (1, 4)


def test_source_block_only_when_asked():
    p = paper_params()
    tmpl = MinutiaTemplate((Minutia(10, 10, Kind.ENDING),), SQUARE)
    assert apply_transform(tmpl, p)[0].source_block is None


def test_reverse_claims():
    p = paper_params()
    t = TransformedMinutia(10, 60, Kind.ENDING, 3)
    assert reverse_point(t, 1, p) == (10, 10)
    assert reverse_point(t, 4, p) == (60, 60)
    with pytest.raises(BiokeyError) as exc:
        reverse_point(t, 2, p)
    assert exc.value.code == "block-claim-mismatch"


def test_round_trip_is_exact():
    rnd = np.random.default_rng(0)
    p = generate_transform(7, 4, 4, (0, 0, 300, 300))
    pts = rnd.uniform(0, 300, size=(2000, 2))
    tmpl = MinutiaTemplate(tuple(Minutia(float(x), float(y), Kind.ENDING) for x, y in pts), (0, 0, 300, 300))
    for m, t in zip(tmpl.minutiae, apply_transform(tmpl, p, keep_source=True)):
        c = canonical_point(m, p)
        assert reverse_point(t, t.source_block, p) == (c.x, c.y)


def test_lattice_points_are_returned_unchanged():
    p = generate_transform(8, 3, 3, (0, 0, 90, 90))
    pts = [Minutia(x / 4, y / 4, Kind.BIFURCATION) for x, y in [(0, 0), (37, 121), (360, 360), (120, 121)]]
    tmpl = MinutiaTemplate(tuple(pts), (0, 0, 90, 90))
    for m, t in zip(pts, apply_transform(tmpl, p, keep_source=True)):
        assert reverse_point(t, t.source_block, p) == (m.x, m.y)


def test_register_rejects_small_templates():
    tmpl = generate_template(np.random.default_rng(1), count=11)
    with pytest.raises(BiokeyError) as exc:
        register(tmpl, 1)
    assert exc.value.code == "insufficient-minutiae"


def test_register_refuses_parity_only_keys():
    tmpl = generate_template(np.random.default_rng(1), count=16)
    with pytest.raises(BiokeyError) as exc:
        register(tmpl, 1)
    assert exc.value.code == "weak-enrollment"


def test_same_seed_same_enrollment():
    tmpl = generate_template(np.random.default_rng(2))
    a, ma = register(tmpl, 5, rng=fixed_rng(1))
    b, mb = register(tmpl, 5, rng=fixed_rng(2))
    assert ma == mb
    assert a.transformed == b.transformed
    assert a.params == b.params
    assert a.bundle == b.bundle
    assert a.verifier_salt != b.verifier_salt
    assert a.kdf_salt != b.kdf_salt


def test_different_seeds_both_recover():
    tmpl = generate_template(np.random.default_rng(3))
    a, ma = register(tmpl, 1)
    b, mb = register(tmpl, 2)
    assert a.params.mapping != b.params.mapping
    assert a.transformed != b.transformed
    assert match_and_recover(a, tmpl) == ma
    assert match_and_recover(b, tmpl) == mb


def test_stored_form_hides_sources_and_master():
    tmpl = generate_template(np.random.default_rng(4))
    reg, master = register(tmpl, 9)
    d = reg.to_dict()
    text = json.dumps(d)
    assert all(set(m) == {"x", "y", "kind", "tb", "slot"} for m in d["minutiae"])
    assert master.hex() not in text
    assert base64.b64encode(master).decode() not in text
    assert "source" not in text
    assert d["params"]["seed-omitted"] is True


def test_no_original_coordinates_without_fixed_blocks():
    rng = np.random.default_rng(5)
    tmpl = generate_template(rng)
    for seed in range(200):
        reg, _ = register(tmpl, seed)
        if any(reg.params.target(j) == j for j in range(1, 17)):
            continue
        stored = {(m.x, m.y) for m in reg.transformed}
        originals = {(c.x, c.y) for c in (canonical_point(m, reg.params) for m in tmpl.minutiae)}
        assert not stored & originals
        return
    pytest.fail("no fixed-point free mapping in 200 seeds")


def test_registered_json_round_trip():
    tmpl = generate_template(np.random.default_rng(6))
    reg, master = register(tmpl, 10)
    again = RegisteredTemplate.from_json(reg.to_json())
    assert again == reg
    assert again.to_json() == reg.to_json()
    assert match_and_recover(again, tmpl) == master


def test_bad_registered_json():
    with pytest.raises(BiokeyError) as exc:
        RegisteredTemplate.from_json('{"v": 2}')
    assert exc.value.code == "bad-template"


def test_self_match():
    tmpl = generate_template(np.random.default_rng(7))
    reg, master = register(tmpl, 11)
    assert match_and_recover(reg, tmpl) == master


def test_noisy_genuine_match():
    rng = np.random.default_rng(8)
    ok = 0
    for _ in range(20):
        tmpl = generate_template(rng)
        try:
            reg, master = register(tmpl, int(rng.integers(2**32)))
        except BiokeyError:
            continue
        probe = perturb(tmpl, PerturbModel(jitter_sigma=3.0, delete_rate=0.2), rng)
        try:
            ok += match_and_recover(reg, probe) == master
        except MatchFailure:
            pass
    assert ok >= 18


def test_impostor_is_rejected():
    rng = np.random.default_rng(9)
    reg, _ = register(generate_template(rng), 12)
    for _ in range(50):
        with pytest.raises(MatchFailure) as exc:
            match_and_recover(reg, generate_template(rng))
        assert exc.value.code == "no-match"


def test_swapped_params_fail():
    tmpl = generate_template(np.random.default_rng(10))
    a, _ = register(tmpl, 100)
    b, _ = register(tmpl, 200)
    with pytest.raises(MatchFailure):
        match_and_recover(with_params(a, b.params), tmpl)
