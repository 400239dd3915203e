import itertools
import json
import math

import numpy as np
import pytest

from biokey.errors import BiokeyError
from biokey.template import Kind, Minutia, MinutiaTemplate
from biokey.synth import (
    EvalParams,
    PerturbModel,
    generate_template,
    perturb,
    rayleigh_mean,
    run_evaluation,
)


def test_generated_points_are_separated():
    t = generate_template(np.random.default_rng(0), count=30, bounds=(0, 0, 100, 100))
    assert len(t) == 30
    for a, b in itertools.combinations(t.minutiae, 2):
        assert math.hypot(a.x - b.x, a.y - b.y) >= 6.0
    assert all(0 <= m.x <= 100 and 0 <= m.y <= 100 for m in t.minutiae)


def test_generation_is_deterministic():
    a = generate_template(np.random.default_rng(5))
    b = generate_template(np.random.default_rng(5))
    assert a == b


def test_overcrowded_placement_fails():
    with pytest.raises(BiokeyError) as exc:
        generate_template(np.random.default_rng(0), count=500, bounds=(0, 0, 50, 50))
    assert exc.value.code == "placement-failed"


def test_zero_model_is_identity():
    t = generate_template(np.random.default_rng(1))
    assert perturb(t, PerturbModel(), np.random.default_rng(2)) == t


def test_delete_everything():
    t = generate_template(np.random.default_rng(1))
    assert len(perturb(t, PerturbModel(delete_rate=1.0), np.random.default_rng(2))) == 0


def test_jitter_displacement_is_rayleigh():
    xy = np.random.default_rng(1).uniform(0, 3000, size=(10_000, 2))
    t = MinutiaTemplate(tuple(Minutia(float(x), float(y), Kind.ENDING) for x, y in xy), (0, 0, 3000, 3000))
    p = perturb(t, PerturbModel(jitter_sigma=2.0), np.random.default_rng(3))
    d = [math.hypot(a.x - b.x, a.y - b.y) for a, b in zip(t.minutiae, p.minutiae)]
    assert abs(np.mean(d) - rayleigh_mean(2.0)) < 0.05 * rayleigh_mean(2.0)


def test_bad_models():
    for kw in ({"jitter_sigma": -1}, {"delete_rate": 1.5}, {"spurious_rate": 1.0}, {"type_flip_rate": -0.1}):
        with pytest.raises(BiokeyError):
            PerturbModel(**kw)


def test_noiseless_trials_all_accept():
    r = run_evaluation(EvalParams(), PerturbModel(), 100, seed=4, impostor_trials=0)
    assert r.genuine_accept_rate == 1.0
    assert r.enroll_failures == 0


def test_evaluation_is_reproducible():
    m = PerturbModel(jitter_sigma=2.0, delete_rate=0.2, spurious_rate=0.1)
    a = run_evaluation(EvalParams(), m, 20, seed=9, impostor_trials=20)
    b = run_evaluation(EvalParams(), m, 20, seed=9, impostor_trials=20)
    assert a.to_json() == b.to_json()
    d = json.loads(a.to_json())
    assert d["seed"] == 9 and d["genuine_trials"] == 20


def test_accept_rate_falls_with_deletions():
    rates = [
        run_evaluation(EvalParams(), PerturbModel(jitter_sigma=1.0, delete_rate=dr), 60, seed=2, impostor_trials=0).genuine_accept_rate
        for dr in (0.1, 0.4, 0.7)
    ]
    assert rates[0] >= rates[1] >= rates[2]
    assert rates[0] > rates[2]


def test_params_are_reported():
    r = run_evaluation(EvalParams(grid=(3, 3)), PerturbModel(), 2, seed=1, impostor_trials=1)
    assert r.to_dict()["params"]["grid"] == [3, 3]
