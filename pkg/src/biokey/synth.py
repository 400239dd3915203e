"""Synthetic templates, perturbation models and the genuine/impostor harness.

Real fingerprint corpora are not bundled, so accuracy is measured on
synthetic minutiae sets. A second impression of a finger is modelled as
Gaussian jitter, random deletions, kind flips and spurious insertions.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .cancelable import DEFAULT_GRID, MATCH_THRESHOLD, match_and_recover, register
from .errors import BiokeyError
from .template import Bounds, Kind, Minutia, MinutiaTemplate

MIN_SEPARATION = 6.0
MAX_REJECTIONS = 10_000
DEFAULT_COUNT = 48
DEFAULT_BOUNDS: Bounds = (0.0, 0.0, 300.0, 300.0)


def generate_template(
    rng: np.random.Generator,
    count: int = DEFAULT_COUNT,
    bounds: Bounds = DEFAULT_BOUNDS,
    min_separation: float = MIN_SEPARATION,
) -> MinutiaTemplate:
    if count < 1:
        raise BiokeyError("bad-params", "count must be at least 1")
    pts: list[tuple[float, float]] = []
    rejections = 0
    while len(pts) < count:
        x = rng.uniform(bounds[0], bounds[2])
        y = rng.uniform(bounds[1], bounds[3])
        if all((x - px) ** 2 + (y - py) ** 2 >= min_separation**2 for px, py in pts):
            pts.append((float(x), float(y)))
            continue
        rejections += 1
        if rejections >= MAX_REJECTIONS:
            raise BiokeyError("placement-failed", f"placed {len(pts)} of {count} after {rejections} rejections")
    kinds = rng.integers(0, 2, size=count)
    return MinutiaTemplate(tuple(Minutia(x, y, Kind(int(k))) for (x, y), k in zip(pts, kinds)), bounds)


@dataclass(frozen=True)
class PerturbModel:
    jitter_sigma: float = 0.0
    delete_rate: float = 0.0
    spurious_rate: float = 0.0
    type_flip_rate: float = 0.0

    def __post_init__(self):
        if self.jitter_sigma < 0:
            raise BiokeyError("bad-params", "jitter_sigma must be >= 0")
        for name in ("delete_rate", "spurious_rate", "type_flip_rate"):
            v = getattr(self, name)
            if not 0.0 <= v < 1.0 and not (name == "delete_rate" and v == 1.0):
                raise BiokeyError("bad-params", f"{name} must lie in [0, 1)")


def perturb(tmpl: MinutiaTemplate, model: PerturbModel, rng: np.random.Generator) -> MinutiaTemplate:
    """Simulate a second impression.

    Spurious minutiae are Poisson distributed with mean
    ``spurious_rate * len(tmpl)`` and placed uniformly in the bounds.
    """
    n = len(tmpl)
    if n == 0:
        return tmpl
    xy = np.array([(m.x, m.y) for m in tmpl.minutiae], dtype=float)
    kinds = np.array([int(m.kind) for m in tmpl.minutiae])
    if model.jitter_sigma > 0:
        xy = xy + rng.normal(0.0, model.jitter_sigma, size=xy.shape)
    if model.type_flip_rate > 0:
        kinds = np.where(rng.random(n) < model.type_flip_rate, 1 - kinds, kinds)
    keep = rng.random(n) >= model.delete_rate if model.delete_rate > 0 else np.ones(n, dtype=bool)
    out = [Minutia(float(x), float(y), Kind(int(k))) for (x, y), k, kp in zip(xy, kinds, keep) if kp]
    if model.spurious_rate > 0:
        b = tmpl.bounds
        for _ in range(rng.poisson(model.spurious_rate * n)):
            out.append(
                Minutia(float(rng.uniform(b[0], b[2])), float(rng.uniform(b[1], b[3])), Kind(int(rng.integers(0, 2))))
            )
    return MinutiaTemplate(tuple(out), tmpl.bounds)


@dataclass(frozen=True)
class EvalParams:
    grid: tuple[int, int] = DEFAULT_GRID
    tau: float = MATCH_THRESHOLD
    rho_block: float = 0.5
    rho_overall: float = 0.5
    count: int = DEFAULT_COUNT
    bounds: Bounds = DEFAULT_BOUNDS


@dataclass
class EvalReport:
    seed: int
    genuine_trials: int
    impostor_trials: int
    genuine_accepts: int
    false_accepts: int
    enroll_failures: int
    params: dict = field(default_factory=dict)
    model: dict = field(default_factory=dict)
    genuine_failure_codes: dict = field(default_factory=dict)

    @property
    def genuine_accept_rate(self) -> float:
        return self.genuine_accepts / self.genuine_trials if self.genuine_trials else 0.0

    @property
    def false_accept_rate(self) -> float:
        return self.false_accepts / self.impostor_trials if self.impostor_trials else 0.0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["genuine_accept_rate"] = self.genuine_accept_rate
        d["false_accept_rate"] = self.false_accept_rate
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def summary(self) -> str:
        rows = [
            ("genuine trials", str(self.genuine_trials)),
            ("genuine accept rate", f"{self.genuine_accept_rate:.4f}"),
            ("impostor trials", str(self.impostor_trials)),
            ("false accept rate", f"{self.false_accept_rate:.4f}"),
            ("enrollment retries", str(self.enroll_failures)),
            ("seed", str(self.seed)),
        ]
        width = max(len(k) for k, _ in rows)
        return "\n".join(f"{k:<{width}}  {v}" for k, v in rows)


def _enroll_fresh(rng: np.random.Generator, params: EvalParams, counter: list[int]):
    """Draw templates until one enrolls; refused enrollments are counted."""
    while True:
        tmpl = generate_template(rng, params.count, params.bounds)
        seed = int(rng.integers(0, 2**63))
        try:
            reg, master = register(
                tmpl,
                seed,
                *params.grid,
                rho_block=params.rho_block,
                rho_overall=params.rho_overall,
                rng=lambda k: rng.bytes(k),
            )
        except BiokeyError as exc:
            if exc.code not in ("weak-enrollment", "insufficient-minutiae"):
                raise
            counter[0] += 1
            continue
        return tmpl, reg, master


def run_evaluation(
    params: EvalParams,
    model: PerturbModel,
    trials: int,
    seed: int = 0,
    impostor_trials: int | None = None,
) -> EvalReport:
    """Genuine and impostor acceptance rates.

    Every trial draws from its own stream spawned off ``seed``, so a report
    is reproducible from ``(seed, params, model, trials)``.
    """
    if trials < 1:
        raise BiokeyError("bad-params", "trials must be at least 1")
    impostor_trials = trials if impostor_trials is None else impostor_trials
    streams = np.random.SeedSequence(seed).spawn(trials + impostor_trials)
    refused = [0]
    accepts = 0
    fail_codes: dict[str, int] = {}
    for ss in streams[:trials]:
        rng = np.random.default_rng(ss)
        tmpl, reg, master = _enroll_fresh(rng, params, refused)
        probe = perturb(tmpl, model, rng)
        try:
            ok = match_and_recover(reg, probe, params.tau) == master
        except BiokeyError as exc:
            fail_codes[exc.code] = fail_codes.get(exc.code, 0) + 1
            ok = False
        accepts += ok
    false_accepts = 0
    for ss in streams[trials:]:
        rng = np.random.default_rng(ss)
        _, reg, _ = _enroll_fresh(rng, params, refused)
        other = generate_template(rng, params.count, params.bounds)
        try:
            match_and_recover(reg, other, params.tau)
            false_accepts += 1
        except BiokeyError:
            pass
    p = asdict(params)
    p["grid"] = list(params.grid)
    p["bounds"] = list(params.bounds)
    return EvalReport(
        seed=seed,
        genuine_trials=trials,
        impostor_trials=impostor_trials,
        genuine_accepts=accepts,
        false_accepts=false_accepts,
        enroll_failures=refused[0],
        params=p,
        model=asdict(model),
        genuine_failure_codes=fail_codes,
    )


def rayleigh_mean(sigma: float) -> float:
    return sigma * math.sqrt(math.pi / 2)


def stripe_image(shape=(128, 128), period: float = 8.0, angle: float = 0.0, phase: float = 0.0) -> np.ndarray:
    """Parallel dark ridges running along ``angle`` (radians, x towards y)."""
    ys, xs = np.mgrid[0 : shape[0], 0 : shape[1]].astype(float)
    across = -xs * math.sin(angle) + ys * math.cos(angle)
    return np.round(127.5 + 127.5 * np.cos(2 * math.pi * (across - phase) / period)).astype(np.uint8)


def ring_image(shape=(256, 256), center=None, period: float = 8.0) -> np.ndarray:
    """Concentric dark ridges round ``center`` (x, y)."""
    cx, cy = center if center is not None else (shape[1] / 2, shape[0] / 2)
    ys, xs = np.mgrid[0 : shape[0], 0 : shape[1]].astype(float)
    r = np.hypot(xs - cx, ys - cy)
    return np.round(127.5 + 127.5 * np.cos(2 * math.pi * r / period)).astype(np.uint8)


def salt_and_pepper(img: np.ndarray, rate: float, rng: np.random.Generator) -> np.ndarray:
    out = img.copy()
    hit = rng.random(img.shape) < rate
    out[hit] = np.where(rng.random(int(hit.sum())) < 0.5, 0, 255)
    return out


def fingerprint_image(
    rng: np.random.Generator,
    shape=(256, 256),
    count: int = 8,
    period: float = 9.0,
    min_separation: float = 40.0,
) -> tuple[np.ndarray, list[tuple[float, float]]]:
    """Ring pattern with ``count`` planted minutiae.

    Each minutia is a unit phase singularity added to the radial ridge
    phase: one ridge splits into two around it, which thins to a bifurcation
    on one polarity and an ending on the other. Returns the image and the
    planted (x, y) positions.
    """
    h, w = shape
    cx, cy = w / 2, h / 2
    pts: list[tuple[float, float]] = []
    rejections = 0
    while len(pts) < count:
        x, y = rng.uniform(0.2 * w, 0.8 * w), rng.uniform(0.2 * h, 0.8 * h)
        far = math.hypot(x - cx, y - cy) >= min_separation / 2
        if far and all(math.hypot(x - px, y - py) >= min_separation for px, py in pts):
            pts.append((float(x), float(y)))
            continue
        rejections += 1
        if rejections >= MAX_REJECTIONS:
            raise BiokeyError("placement-failed", f"placed {len(pts)} of {count}")
    ys, xs = np.mgrid[0:h, 0:w].astype(float)
    phase = 2 * math.pi * np.hypot(xs - cx, ys - cy) / period
    for (px, py), sign in zip(pts, rng.choice([-1, 1], size=count)):
        phase += sign * np.arctan2(ys - py, xs - px)
    return np.round(127.5 + 127.5 * np.cos(phase)).astype(np.uint8), pts
