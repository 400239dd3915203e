"""Minutiae and aligned minutiae templates, plus their JSON form."""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass

from .errors import BiokeyError

TEMPLATE_VERSION = 1


class Kind(enum.IntEnum):
    ENDING = 0
    BIFURCATION = 1

    @property
    def letter(self) -> str:
        return "E" if self is Kind.ENDING else "B"

    @classmethod
    def from_letter(cls, s: str) -> "Kind":
        try:
            return {"E": cls.ENDING, "B": cls.BIFURCATION}[s]
        except KeyError:
            raise BiokeyError("bad-template", f"unknown minutia kind {s!r}") from None


@dataclass(frozen=True, order=True)
class Minutia:
    x: float
    y: float
    kind: Kind


Bounds = tuple[float, float, float, float]


@dataclass(frozen=True)
class MinutiaTemplate:
    """Aligned minutiae with the rectangle ``(min_x, min_y, max_x, max_y)`` they live in.

    Exact duplicates are dropped on construction.
    """

    minutiae: tuple[Minutia, ...]
    bounds: Bounds

    def __post_init__(self):
        seen: dict[tuple, Minutia] = {}
        for m in self.minutiae:
            seen.setdefault((m.x, m.y, m.kind), m)
        object.__setattr__(self, "minutiae", tuple(seen.values()))
        object.__setattr__(self, "bounds", tuple(float(b) for b in self.bounds))

    def __len__(self) -> int:
        return len(self.minutiae)

    @classmethod
    def from_points(cls, minutiae, bounds=None, margin: float = 0.0) -> "MinutiaTemplate":
        minutiae = tuple(minutiae)
        if bounds is None:
            bounds = points_bounds(minutiae, margin)
        return cls(minutiae, bounds)

    def to_dict(self) -> dict:
        return {
            "v": TEMPLATE_VERSION,
            "bounds": list(self.bounds),
            "minutiae": [{"x": m.x, "y": m.y, "kind": m.kind.letter} for m in self.minutiae],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))

    @classmethod
    def from_dict(cls, d: dict) -> "MinutiaTemplate":
        if d.get("v") != TEMPLATE_VERSION:
            raise BiokeyError("bad-template", f"unsupported template version {d.get('v')!r}")
        try:
            pts = tuple(
                Minutia(float(m["x"]), float(m["y"]), Kind.from_letter(m["kind"]))
                for m in d["minutiae"]
            )
            bounds = tuple(float(b) for b in d["bounds"])
        except (KeyError, TypeError, ValueError) as exc:
            raise BiokeyError("bad-template", str(exc)) from None
        if len(bounds) != 4:
            raise BiokeyError("bad-template", "bounds must have four entries")
        return cls(pts, bounds)

    @classmethod
    def from_json(cls, text: str) -> "MinutiaTemplate":
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise BiokeyError("bad-template", str(exc)) from None


def points_bounds(minutiae, margin: float = 0.0) -> Bounds:
    if not minutiae:
        return (0.0, 0.0, 0.0, 0.0)
    xs = [m.x for m in minutiae]
    ys = [m.y for m in minutiae]
    return (min(xs) - margin, min(ys) - margin, max(xs) + margin, max(ys) + margin)
