"""Fingerprint image to aligned minutiae template.

Pipeline: block orientation field, Gabor enhancement tuned per block to
ridge orientation and wavelength, sign binarisation, thinning, neighbour
count minutiae detection, Poincare core detection and rotation about the
chosen core.

Image coordinates: ``x`` is the column, ``y`` the row (growing downwards).
Orientation angles are in ``[0, pi)`` measured from the +x axis towards +y.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage, signal
from skimage.morphology import thin

from .errors import BiokeyError
from .template import Kind, Minutia, MinutiaTemplate, points_bounds


@dataclass(frozen=True)
class EnhancementConfig:
    block_size: int = 16
    gabor_sigma_x: float = 4.0
    gabor_sigma_y: float = 4.0
    threshold: float = 0.0
    ridges_dark: bool = True
    median_size: int = 3
    min_block_std: float = 8.0
    min_wavelength: float = 3.0
    max_wavelength: float = 25.0
    angle_bins: int = 16
    border_margin: int = 8
    min_ridge_len: int = 6
    align_margin: float = 8.0
    max_unusable_fraction: float = 0.5


@dataclass(frozen=True)
class OrientationField:
    block_size: int
    angles: np.ndarray
    coherence: np.ndarray | None = field(default=None, compare=False)

    @property
    def grid_h(self) -> int:
        return self.angles.shape[0]

    @property
    def grid_w(self) -> int:
        return self.angles.shape[1]


def as_gray(img) -> np.ndarray:
    a = np.asarray(img)
    if a.ndim != 2 or a.size == 0:
        raise BiokeyError("bad-image", "expected a nonempty 2-D grayscale array")
    return a


def load_image(path: str | Path) -> np.ndarray:
    """Read an 8-bit grayscale image (PGM P5, PNG, or anything Pillow opens)."""
    try:
        with Image.open(path) as im:
            return np.asarray(im.convert("L"), dtype=np.uint8)
    except (OSError, ValueError) as exc:
        raise BiokeyError("bad-image", f"{path}: {exc}") from None


def _gradients(img: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # 2x2 differences: unlike central differences they see period-2 stripes
    f = img.astype(np.float64)
    f = np.pad(f, ((0, 1), (0, 1)), mode="edge")
    gx = 0.5 * ((f[:-1, 1:] - f[:-1, :-1]) + (f[1:, 1:] - f[1:, :-1]))
    gy = 0.5 * ((f[1:, :-1] - f[:-1, :-1]) + (f[1:, 1:] - f[:-1, 1:]))
    return gx, gy


def _block_sum(a: np.ndarray, bs: int) -> np.ndarray:
    gh, gw = -(-a.shape[0] // bs), -(-a.shape[1] // bs)
    p = np.zeros((gh * bs, gw * bs))
    p[: a.shape[0], : a.shape[1]] = a
    return p.reshape(gh, bs, gw, bs).sum(axis=(1, 3))


def estimate_orientation_field(img, block_size: int = 16) -> OrientationField:
    """Least-squares ridge orientation per block from image gradients."""
    img = as_gray(img)
    if block_size < 4:
        raise BiokeyError("bad-params", "block size must be at least 4")
    if img.shape[0] < block_size or img.shape[1] < block_size:
        raise BiokeyError("image-too-small", f"{img.shape[1]}x{img.shape[0]} smaller than one {block_size}px block")
    gx, gy = _gradients(img)
    gxx = _block_sum(gx * gx, block_size)
    gyy = _block_sum(gy * gy, block_size)
    gxy = _block_sum(gx * gy, block_size)
    # gradient direction is normal to the ridges
    theta = 0.5 * np.arctan2(2 * gxy, gxx - gyy) + np.pi / 2
    theta = np.mod(theta, np.pi)
    theta[theta >= np.pi] = 0.0
    energy = gxx + gyy
    coh = np.divide(np.hypot(gxx - gyy, 2 * gxy), energy, out=np.zeros_like(energy), where=energy > 0)
    return OrientationField(block_size, theta, coh)


def smooth_orientation_field(fld: OrientationField, sigma: float = 1.0) -> OrientationField:
    """Gaussian smoothing of the doubled-angle vector field."""
    c = ndimage.gaussian_filter(np.cos(2 * fld.angles), sigma, mode="nearest")
    s = ndimage.gaussian_filter(np.sin(2 * fld.angles), sigma, mode="nearest")
    theta = np.mod(0.5 * np.arctan2(s, c), np.pi)
    theta[theta >= np.pi] = 0.0
    return OrientationField(fld.block_size, theta, fld.coherence)


def _block_view(img: np.ndarray, r: int, c: int, bs: int, pad: int) -> tuple[np.ndarray, int, int]:
    y0, x0 = max(0, r * bs - pad), max(0, c * bs - pad)
    y1, x1 = min(img.shape[0], (r + 1) * bs + pad), min(img.shape[1], (c + 1) * bs + pad)
    return img[y0:y1, x0:x1], y0, x0


def _ridge_wavelength(patch: np.ndarray, theta: float, lo: float, hi: float) -> float | None:
    """Mean peak spacing of the intensity profile across the ridges."""
    ys, xs = np.mgrid[0 : patch.shape[0], 0 : patch.shape[1]]
    u = -xs * math.sin(theta) + ys * math.cos(theta)
    bins = np.round(u - u.min()).astype(int).ravel()
    counts = np.bincount(bins)
    sums = np.bincount(bins, weights=patch.astype(np.float64).ravel())
    ok = counts > 0
    profile = np.interp(np.arange(len(counts)), np.flatnonzero(ok), sums[ok] / counts[ok])
    profile = ndimage.gaussian_filter1d(profile, 1.0)
    if profile.std() < 1e-6:
        return None
    peaks, _ = signal.find_peaks(profile, distance=max(2, int(lo)), prominence=0.25 * profile.std())
    if len(peaks) < 2:
        return None
    wl = (peaks[-1] - peaks[0]) / (len(peaks) - 1)
    return float(wl) if lo <= wl <= hi else None


def _gabor_kernel(theta: float, wavelength: float, sx: float, sy: float) -> np.ndarray:
    half = int(math.ceil(3 * max(sx, sy)))
    ys, xs = np.mgrid[-half : half + 1, -half : half + 1].astype(np.float64)
    across = -xs * math.sin(theta) + ys * math.cos(theta)
    along = xs * math.cos(theta) + ys * math.sin(theta)
    env = np.exp(-0.5 * (across**2 / sx**2 + along**2 / sy**2))
    k = env * np.cos(2 * math.pi * across / wavelength)
    return k - env * (k.sum() / env.sum())  # remove the DC response


def enhance_and_thin(img, fld: OrientationField, cfg: EnhancementConfig | None = None) -> np.ndarray:
    """Gabor-enhance, binarise on the response sign and thin to 1-px ridges.

    Returns a boolean array, ``True`` on ridge pixels. Low-variance blocks are
    treated as background and left empty.
    """
    cfg = cfg or EnhancementConfig()
    img = as_gray(img).astype(np.float64)
    bs = fld.block_size
    if (fld.grid_h, fld.grid_w) != (-(-img.shape[0] // bs), -(-img.shape[1] // bs)):
        raise BiokeyError("bad-params", "orientation field does not match the image")
    if cfg.median_size > 1:
        img = ndimage.median_filter(img, size=cfg.median_size, mode="nearest")

    gh, gw = fld.grid_h, fld.grid_w
    fg = np.zeros((gh, gw), dtype=bool)
    wl = np.full((gh, gw), np.nan)
    for r in range(gh):
        for c in range(gw):
            block, _, _ = _block_view(img, r, c, bs, 0)
            if block.std() < cfg.min_block_std:
                continue
            fg[r, c] = True
            patch, _, _ = _block_view(img, r, c, bs, bs // 2)
            w = _ridge_wavelength(patch, float(fld.angles[r, c]), cfg.min_wavelength, cfg.max_wavelength)
            if w is not None:
                wl[r, c] = w
    out = np.zeros(img.shape, dtype=bool)
    if not fg.any():
        return out
    valid = fg & ~np.isnan(wl)
    if (fg & ~valid).sum() > cfg.max_unusable_fraction * fg.sum():
        raise BiokeyError("unusable-image", f"ridge frequency failed in {(fg & ~valid).sum()} of {fg.sum()} blocks")
    wl[fg & ~valid] = np.median(wl[valid])

    fg_pix = np.kron(fg, np.ones((bs, bs), dtype=bool))[: img.shape[0], : img.shape[1]]
    norm = (img - img[fg_pix].mean()) / (img[fg_pix].std() + 1e-9)
    norm[~fg_pix] = 0.0

    # each block blends the two nearest angle bins so that small orientation
    # changes move the response continuously instead of switching kernels
    step = math.pi / cfg.angle_bins
    pos = fld.angles / step
    lo_bin = np.floor(pos).astype(int)
    frac = pos - lo_bin
    wbin = np.round(np.where(fg, wl, 0)).astype(int)
    weights: dict[tuple[int, int], np.ndarray] = {}
    for r, c in zip(*np.nonzero(fg)):
        for a, wt in ((lo_bin[r, c] % cfg.angle_bins, 1.0 - frac[r, c]), ((lo_bin[r, c] + 1) % cfg.angle_bins, frac[r, c])):
            if wt <= 0:
                continue
            key = (int(a), int(wbin[r, c]))
            weights.setdefault(key, np.zeros((gh, gw)))[r, c] += wt
    response = np.zeros(img.shape)
    for (a, w), wmap in sorted(weights.items()):
        kern = _gabor_kernel(a * step, w, cfg.gabor_sigma_x, cfg.gabor_sigma_y)
        filt = signal.fftconvolve(norm, kern, mode="same")
        response += np.kron(wmap, np.ones((bs, bs)))[: img.shape[0], : img.shape[1]] * filt
    ridge = response < -cfg.threshold if cfg.ridges_dark else response > cfg.threshold
    return thin(ridge & fg_pix)


_NEIGHBOURS = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]


def neighbour_count(skel: np.ndarray) -> np.ndarray:
    s = np.asarray(skel, dtype=bool)
    k = np.ones((3, 3), dtype=np.int32)
    k[1, 1] = 0
    return np.where(s, ndimage.convolve(s.astype(np.int32), k, mode="constant"), 0)


def _trace(s: np.ndarray, nb: np.ndarray, start: tuple[int, int], limit: int) -> tuple[int, tuple[int, int] | None]:
    """Walk from an ending until another feature pixel or ``limit`` steps.

    Returns ``(steps, feature_pixel)``; ``feature_pixel`` is ``None`` when the
    ridge is at least ``limit`` long.
    """
    h, w = s.shape
    prev, cur = None, start
    for steps in range(1, limit + 1):
        nxt = [
            (cur[0] + dr, cur[1] + dc)
            for dr, dc in _NEIGHBOURS
            if 0 <= cur[0] + dr < h and 0 <= cur[1] + dc < w and s[cur[0] + dr, cur[1] + dc] and (cur[0] + dr, cur[1] + dc) != prev
        ]
        if not nxt:
            return steps, cur
        prev, cur = cur, nxt[0]
        if nb[cur] != 2:
            return steps, cur
    return limit, None


def detect_minutiae(skel, margin: int = 8, min_ridge_len: int = 6) -> list[Minutia]:
    """Ridge endings (one ridge neighbour) and bifurcations (three).

    Pixels within ``margin`` of the border are ignored. An ending whose ridge
    reaches another feature in fewer than ``min_ridge_len`` steps is a spur:
    it is dropped together with the feature it runs into.
    """
    s = np.asarray(skel, dtype=bool)
    nb = neighbour_count(s)
    endings = set(zip(*np.nonzero(nb == 1)))
    # a junction often thins to a small clump of branch pixels; one minutia each
    labels, count = ndimage.label(nb == 3, structure=np.ones((3, 3)))
    dropped_labels: set[int] = set()
    drop: set[tuple[int, int]] = set()
    if min_ridge_len > 0:
        for e in sorted(endings):
            steps, hit = _trace(s, nb, e, min_ridge_len)
            if hit is not None and steps < min_ridge_len:
                drop.add(e)
                drop.add(hit)
                # the hit may be a crowded pixel just beside the branch clump
                r0, c0 = hit
                near = labels[max(r0 - 1, 0) : r0 + 2, max(c0 - 1, 0) : c0 + 2]
                dropped_labels.update(int(v) for v in np.unique(near) if v)
    h, w = s.shape

    def inside(r, c):
        return margin <= r < h - margin and margin <= c < w - margin

    out = [Minutia(float(c), float(r), Kind.ENDING) for r, c in endings - drop if inside(r, c)]
    if count:
        centres = ndimage.center_of_mass(np.ones_like(labels), labels, range(1, count + 1))
        for lab, (r, c) in enumerate(centres, start=1):
            if lab not in dropped_labels and inside(r, c):
                out.append(Minutia(float(c), float(r), Kind.BIFURCATION))
    return sorted(out, key=lambda m: (m.y, m.x, m.kind))


class CoreKind(enum.Enum):
    WHORL = "whorl"
    LOOP = "loop"
    DELTA = "delta"


_CORE_TARGET = {CoreKind.WHORL: 2 * math.pi, CoreKind.LOOP: math.pi, CoreKind.DELTA: -math.pi}
_CORE_PRIORITY = [CoreKind.WHORL, CoreKind.LOOP, CoreKind.DELTA]

# closed walk round the 8 neighbours, in order of increasing atan2(dy, dx)
_RING = [(0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1), (-1, 0), (-1, 1)]


@dataclass(frozen=True)
class CorePoint:
    x: float
    y: float
    kind: CoreKind
    theta: float
    index: float = 0.0
    cell: tuple[int, int] = (0, 0)


def wrap_half_pi(d):
    """Map an angle difference into (-pi/2, pi/2]."""
    return np.pi / 2 - np.mod(np.pi / 2 - d, np.pi)


def poincare_sums(fld: OrientationField) -> np.ndarray:
    """Sum of wrapped orientation differences round each interior cell (NaN on the rim)."""
    a = fld.angles
    gh, gw = a.shape
    out = np.full((gh, gw), np.nan)
    if gh < 3 or gw < 3:
        return out
    ring = [a[1 + dr : gh - 1 + dr, 1 + dc : gw - 1 + dc] for dr, dc in _RING]
    ring.append(ring[0])
    out[1:-1, 1:-1] = sum(wrap_half_pi(b - q) for q, b in zip(ring, ring[1:]))
    return out


def classify_index(value: float, eps: float = 0.3) -> CoreKind | None:
    for kind, target in _CORE_TARGET.items():
        if abs(value - target) < eps:
            return kind
    return None


def detect_core_points(fld: OrientationField, eps: float = 0.3) -> list[CorePoint]:
    """Poincare singular points.

    A singular point inside one cell also disturbs the rings of its
    neighbours, which pass through that cell, so 8-connected detections are
    merged. Each cluster reports its highest-priority kind (whorl, loop,
    delta) at the centroid of the cells of that kind.
    """
    sums = poincare_sums(fld)
    kinds = np.full(sums.shape, None, dtype=object)
    for r, c in zip(*np.nonzero(~np.isnan(sums))):
        kinds[r, c] = classify_index(float(sums[r, c]), eps)
    labels, n = ndimage.label(kinds != None, structure=np.ones((3, 3)))  # noqa: E711
    bs = fld.block_size
    cores = []
    for lab in range(1, n + 1):
        cells = list(zip(*np.nonzero(labels == lab)))
        kind = next(k for k in _CORE_PRIORITY if any(kinds[rc] is k for rc in cells))
        chosen = [rc for rc in cells if kinds[rc] is kind]
        cr = sum(r for r, _ in chosen) / len(chosen)
        cc = sum(c for _, c in chosen) / len(chosen)
        rep = min(chosen, key=lambda rc: ((rc[0] - cr) ** 2 + (rc[1] - cc) ** 2, rc))
        cores.append(
            CorePoint(
                x=(cc + 0.5) * bs,
                y=(cr + 0.5) * bs,
                kind=kind,
                theta=float(fld.angles[rep]),
                index=float(sums[rep]),
                cell=(int(rep[0]), int(rep[1])),
            )
        )
    return cores


def select_core(cores: list[CorePoint], image_shape: tuple[int, int]) -> CorePoint | None:
    """Whorl before loop before delta; ties go to the core nearest the image centre."""
    if not cores:
        return None
    cy, cx = image_shape[0] / 2, image_shape[1] / 2
    return min(cores, key=lambda p: (_CORE_PRIORITY.index(p.kind), (p.x - cx) ** 2 + (p.y - cy) ** 2))


def align_minutiae(minutiae, core: CorePoint | None, margin: float = 8.0) -> MinutiaTemplate:
    """Rotate minutiae about the core by its orientation angle.

    ``x' = cos(t)(x - cx) + sin(t)(y - cy)``,
    ``y' = -sin(t)(x - cx) + cos(t)(y - cy)``. With no core, the minutiae
    centroid and ``t = 0`` are used.
    """
    minutiae = list(minutiae)
    if not minutiae:
        return MinutiaTemplate((), (0.0, 0.0, 0.0, 0.0))
    if core is None:
        cx = sum(m.x for m in minutiae) / len(minutiae)
        cy = sum(m.y for m in minutiae) / len(minutiae)
        theta = 0.0
    else:
        cx, cy, theta = core.x, core.y, core.theta
    ct, st = math.cos(theta), math.sin(theta)
    out = [
        Minutia(ct * (m.x - cx) + st * (m.y - cy), -st * (m.x - cx) + ct * (m.y - cy), m.kind)
        for m in minutiae
    ]
    return MinutiaTemplate(tuple(out), points_bounds(out, margin))


def skeletonize(img, cfg: EnhancementConfig | None = None) -> tuple[np.ndarray, OrientationField]:
    """Thinned ridge map plus the smoothed orientation field it was built from.

    Orientation is estimated on the median-filtered image, since impulse
    noise otherwise dominates the squared gradients.
    """
    cfg = cfg or EnhancementConfig()
    img = as_gray(img)
    clean = ndimage.median_filter(img, size=cfg.median_size, mode="nearest") if cfg.median_size > 1 else img
    fld = smooth_orientation_field(estimate_orientation_field(clean, cfg.block_size))
    return enhance_and_thin(img, fld, cfg), fld


def extract_template(img, cfg: EnhancementConfig | None = None) -> MinutiaTemplate:
    """Full image-to-template pipeline."""
    cfg = cfg or EnhancementConfig()
    img = as_gray(img)
    skel, fld = skeletonize(img, cfg)
    minutiae = detect_minutiae(skel, cfg.border_margin, cfg.min_ridge_len)
    core = select_core(detect_core_points(fld), img.shape)
    return align_minutiae(minutiae, core, cfg.align_margin)
