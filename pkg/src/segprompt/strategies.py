"""Prompt sampling strategies.

A :class:`StrategySpec` declares one way of turning a ground-truth mask into
a prompt (labeled points and/or a bounding box); :func:`build_prompt` executes
it with a seeded random stream.  Specs have a canonical textual form used in
config files and records:

    points:k=50                 k positive points, no box
    points+box:k=10             k positive points plus the tight box
    box                         tight bounding box only
    box:jitter=0.2              box enlarged by 20% of each axis extent
    box:jitter=0.2,random=true  per-border enlargement drawn from [0, 20%]
    negmix:k=100,neg=0.5,box=false
                                mixed positive/negative points, optional box
    center                      one positive point at the tight box's center
    centroid                    one positive point at the mask centroid
    quad4                       one random foreground point per quadrant

Grammar: ``name`` or ``name:key=value[,key=value...]``.  Keys are ``k``
(point count, integer >= 1), ``jitter`` (fraction in [0, 1)), ``neg``
(negative fraction in [0, 1)), ``box`` (true/false), ``random`` (true/false,
only with ``jitter``).  ``parse_strategy`` and ``StrategySpec.canonical``
round-trip.

Point polarity contract: every positive point lies on ground-truth
foreground and every negative point on background, with one documented
exception: ``center`` sends the raw box-center pixel with positive polarity
even when that pixel is background.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import NamedTuple

import numpy as np

from .errors import (
    EmptyMaskError,
    InsufficientBackgroundError,
    InsufficientForegroundError,
    StrategyParseError,
)
from .masks import BBox, BinaryMask, box_center, centroid, quadrant_partition, tight_bbox
from .rng import SeededRng


class StrategyKind(Enum):
    POSITIVE_POINTS = "points"
    BOX_ONLY = "box"
    POINTS_PLUS_BOX = "points+box"
    JITTERED_BOX = "box+jitter"
    NEGATIVE_MIX = "negmix"
    BOX_CENTER = "center"
    CENTROID = "centroid"
    QUADRANT_SAMPLE = "quad4"


_POINT_KINDS = {StrategyKind.POSITIVE_POINTS, StrategyKind.POINTS_PLUS_BOX, StrategyKind.NEGATIVE_MIX}


class PromptPoint(NamedTuple):
    x: int
    y: int
    positive: bool


@dataclass(frozen=True)
class Prompt:
    """One unit of segmenter input: an optional box plus labeled points.

    Never empty: a box is present or at least one point is.  Positive points
    lie on the foreground of the mask they were sampled from and negative
    points on its background, except points produced by the ``center``
    strategy, which carry positive polarity regardless of what lies under
    the box center.
    """

    box: BBox | None
    points: tuple[PromptPoint, ...] = ()

    def __post_init__(self):
        if self.box is None and not self.points:
            raise ValueError("a prompt needs a box or at least one point")

    @property
    def positive_points(self) -> tuple[PromptPoint, ...]:
        return tuple(p for p in self.points if p.positive)

    @property
    def negative_points(self) -> tuple[PromptPoint, ...]:
        return tuple(p for p in self.points if not p.positive)


@dataclass(frozen=True)
class StrategySpec:
    kind: StrategyKind
    k_points: int | None = None
    jitter_pct: float = 0.0
    negative_fraction: float = 0.0
    with_box: bool = False
    jitter_random: bool = field(default=False)

    def __post_init__(self):
        if self.kind in _POINT_KINDS:
            if self.k_points is None or self.k_points < 1:
                raise StrategyParseError(f"{self.kind.value} needs k >= 1, got {self.k_points}")
        elif self.k_points is not None:
            raise StrategyParseError(f"{self.kind.value} takes no point count")
        if not 0.0 <= self.jitter_pct < 1.0:
            raise StrategyParseError(f"jitter must be in [0, 1), got {self.jitter_pct}")
        if not 0.0 <= self.negative_fraction < 1.0:
            raise StrategyParseError(f"neg must be in [0, 1), got {self.negative_fraction}")
        if self.jitter_pct and self.kind is not StrategyKind.JITTERED_BOX:
            raise StrategyParseError(f"{self.kind.value} takes no jitter")
        if self.jitter_random and self.kind is not StrategyKind.JITTERED_BOX:
            raise StrategyParseError("random=true is only valid with box:jitter=...")
        if self.negative_fraction and self.kind is not StrategyKind.NEGATIVE_MIX:
            raise StrategyParseError(f"{self.kind.value} takes no negative fraction")

    def canonical(self) -> str:
        """Canonical strategy string; parse_strategy round-trips it."""
        k = self.kind
        if k is StrategyKind.POSITIVE_POINTS:
            return f"points:k={self.k_points}"
        if k is StrategyKind.POINTS_PLUS_BOX:
            return f"points+box:k={self.k_points}"
        if k is StrategyKind.BOX_ONLY:
            return "box"
        if k is StrategyKind.JITTERED_BOX:
            s = f"box:jitter={_fmt(self.jitter_pct)}"
            if self.jitter_random:
                s += ",random=true"
            return s
        if k is StrategyKind.NEGATIVE_MIX:
            return (
                f"negmix:k={self.k_points},neg={_fmt(self.negative_fraction)},"
                f"box={'true' if self.with_box else 'false'}"
            )
        return {StrategyKind.BOX_CENTER: "center", StrategyKind.CENTROID: "centroid",
                StrategyKind.QUADRANT_SAMPLE: "quad4"}[k]

    def __str__(self) -> str:
        return self.canonical()


def _fmt(x: float) -> str:
    return format(x, "g")


def _parse_bool(key: str, raw: str) -> bool:
    if raw in ("true", "false"):
        return raw == "true"
    raise StrategyParseError(f"{key} must be true or false, got {raw!r}")


def parse_strategy(text: str) -> StrategySpec:
    """Parse a canonical strategy string (see module docstring for grammar)."""
    text = text.strip()
    name, _, tail = text.partition(":")
    params: dict[str, str] = {}
    if tail:
        for item in tail.split(","):
            key, eq, value = item.partition("=")
            if not eq or not key or not value:
                raise StrategyParseError(f"bad parameter {item!r} in {text!r}")
            if key in params:
                raise StrategyParseError(f"duplicate parameter {key!r} in {text!r}")
            params[key] = value

    def take_int(key: str) -> int:
        raw = params.pop(key, None)
        if raw is None:
            raise StrategyParseError(f"{name!r} requires {key}= in {text!r}")
        try:
            return int(raw)
        except ValueError:
            raise StrategyParseError(f"{key} must be an integer, got {raw!r}") from None

    def take_float(key: str, default: float | None = None) -> float:
        raw = params.pop(key, None)
        if raw is None:
            if default is None:
                raise StrategyParseError(f"{name!r} requires {key}= in {text!r}")
            return default
        try:
            return float(raw)
        except ValueError:
            raise StrategyParseError(f"{key} must be a number, got {raw!r}") from None

    try:
        if name == "points":
            spec = StrategySpec(StrategyKind.POSITIVE_POINTS, k_points=take_int("k"))
        elif name == "points+box":
            spec = StrategySpec(StrategyKind.POINTS_PLUS_BOX, k_points=take_int("k"), with_box=True)
        elif name == "box":
            if not params:
                spec = StrategySpec(StrategyKind.BOX_ONLY, with_box=True)
            else:
                jitter = take_float("jitter")
                rand = _parse_bool("random", params.pop("random", "false"))
                spec = StrategySpec(
                    StrategyKind.JITTERED_BOX, jitter_pct=jitter, with_box=True, jitter_random=rand
                )
        elif name == "negmix":
            k = take_int("k")
            neg = take_float("neg")
            box = _parse_bool("box", params.pop("box", "false"))
            spec = StrategySpec(
                StrategyKind.NEGATIVE_MIX, k_points=k, negative_fraction=neg, with_box=box
            )
        elif name == "center":
            spec = StrategySpec(StrategyKind.BOX_CENTER)
        elif name == "centroid":
            spec = StrategySpec(StrategyKind.CENTROID)
        elif name == "quad4":
            spec = StrategySpec(StrategyKind.QUADRANT_SAMPLE)
        else:
            raise StrategyParseError(f"unknown strategy {name!r}")
    except StrategyParseError:
        raise
    if params:
        raise StrategyParseError(f"unexpected parameters {sorted(params)} in {text!r}")
    return spec


def _flat_to_points(flat: np.ndarray, picks: list[int], width: int, positive: bool) -> list[PromptPoint]:
    out = []
    for i in picks:
        f = int(flat[i])
        out.append(PromptPoint(f % width, f // width, positive))
    return out


def sample_positive_points(mask: BinaryMask, k: int, rng: SeededRng) -> list[PromptPoint]:
    """k distinct foreground pixels, uniform without replacement."""
    flat = np.flatnonzero(mask.pixels.ravel())
    if flat.size < k:
        raise InsufficientForegroundError(k, int(flat.size))
    picks = rng.sample_indices(int(flat.size), k)
    return _flat_to_points(flat, picks, mask.width, positive=True)


def sample_negative_points(mask: BinaryMask, k: int, rng: SeededRng) -> list[PromptPoint]:
    """k distinct background pixels, uniform without replacement."""
    flat = np.flatnonzero(~mask.pixels.ravel())
    if flat.size < k:
        raise InsufficientBackgroundError(k, int(flat.size))
    picks = rng.sample_indices(int(flat.size), k)
    return _flat_to_points(flat, picks, mask.width, positive=False)


def jittered_bbox(box: BBox, pct: float, image_w: int, image_h: int) -> BBox:
    """Enlarge each border outward by round(pct * axis extent), then clamp.

    Rounding is Python's round-half-to-even.  The result always contains the
    input box and never leaves the image.
    """
    dx = round(pct * box.extent_x)
    dy = round(pct * box.extent_y)
    return BBox(
        max(box.x_min - dx, 0),
        max(box.y_min - dy, 0),
        min(box.x_max + dx, image_w - 1),
        min(box.y_max + dy, image_h - 1),
    )


def jittered_bbox_random(box: BBox, pct: float, image_w: int, image_h: int, rng: SeededRng) -> BBox:
    """Randomized variant: each border moves outward by round(u * extent)
    with an independent u ~ Uniform[0, pct), drawn in order left, top,
    right, bottom."""
    dl = round(rng.uniform(0.0, pct) * box.extent_x)
    dt = round(rng.uniform(0.0, pct) * box.extent_y)
    dr = round(rng.uniform(0.0, pct) * box.extent_x)
    db = round(rng.uniform(0.0, pct) * box.extent_y)
    return BBox(
        max(box.x_min - dl, 0),
        max(box.y_min - dt, 0),
        min(box.x_max + dr, image_w - 1),
        min(box.y_max + db, image_h - 1),
    )


def quadrant_sample(mask: BinaryMask, rng: SeededRng) -> list[PromptPoint]:
    """One uniformly sampled foreground pixel per non-empty quadrant.

    Quadrants are visited in fixed order (top-left, top-right, bottom-left,
    bottom-right); empty ones are skipped and consume no random draws, so
    between 1 and 4 positive points come back.
    """
    if mask.foreground_count() == 0:
        raise EmptyMaskError("quadrant_sample needs at least one foreground pixel")
    points = []
    for view in quadrant_partition(mask):
        flat = np.flatnonzero(view.pixels.ravel())
        if flat.size == 0:
            continue
        f = int(flat[rng.randbelow(int(flat.size))])
        points.append(PromptPoint(f % mask.width, f // mask.width, True))
    return points


def negative_mix_counts(k: int, negative_fraction: float) -> tuple[int, int]:
    """(positives, negatives) for a k-point mixed prompt.

    Negatives get floor(k * fraction); positives take the remainder, so on
    an odd split the extra point is positive.  The fraction is interpreted
    as the exact decimal it was written as.
    """
    n_neg = int(Fraction(str(negative_fraction)) * k)
    return k - n_neg, n_neg


def build_prompt(spec: StrategySpec, gt: BinaryMask, rng: SeededRng) -> Prompt:
    """Materialize one prompt for a ground-truth mask.

    Random draws are consumed in a fixed documented order per kind (points
    before anything else; positives before negatives), so prompts are a pure
    function of (spec, gt, rng stream).
    """
    if gt.foreground_count() == 0:
        raise EmptyMaskError("cannot build a prompt for an empty mask")
    kind = spec.kind
    if kind is StrategyKind.POSITIVE_POINTS:
        return Prompt(box=None, points=tuple(sample_positive_points(gt, spec.k_points, rng)))
    if kind is StrategyKind.BOX_ONLY:
        return Prompt(box=tight_bbox(gt))
    if kind is StrategyKind.POINTS_PLUS_BOX:
        points = sample_positive_points(gt, spec.k_points, rng)
        return Prompt(box=tight_bbox(gt), points=tuple(points))
    if kind is StrategyKind.JITTERED_BOX:
        tight = tight_bbox(gt)
        if spec.jitter_random:
            box = jittered_bbox_random(tight, spec.jitter_pct, gt.width, gt.height, rng)
        else:
            box = jittered_bbox(tight, spec.jitter_pct, gt.width, gt.height)
        return Prompt(box=box)
    if kind is StrategyKind.NEGATIVE_MIX:
        n_pos, n_neg = negative_mix_counts(spec.k_points, spec.negative_fraction)
        points = sample_positive_points(gt, n_pos, rng)
        if n_neg:
            points += sample_negative_points(gt, n_neg, rng)
        box = tight_bbox(gt) if spec.with_box else None
        return Prompt(box=box, points=tuple(points))
    if kind is StrategyKind.BOX_CENTER:
        # Sent as-is with positive polarity even if the pixel is background.
        c = box_center(tight_bbox(gt))
        return Prompt(box=None, points=(PromptPoint(c.x, c.y, True),))
    if kind is StrategyKind.CENTROID:
        c = centroid(gt)
        return Prompt(box=None, points=(PromptPoint(c.x, c.y, True),))
    if kind is StrategyKind.QUADRANT_SAMPLE:
        return Prompt(box=None, points=tuple(quadrant_sample(gt, rng)))
    raise AssertionError(f"unhandled strategy kind {kind}")
