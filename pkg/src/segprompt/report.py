"""Reporting: summary tables, effort-vs-performance scatter data, boxplot
summaries and prompt overlay images.

Everything here is a pure function of the records plus flags; emitted
Markdown/CSV/SVG bytes are identical across runs and platforms.  Scores are
carried as fractions and formatted as percent with three decimals only at
the output boundary.
"""

from __future__ import annotations

import csv
import dataclasses
import io
from pathlib import Path

import numpy as np

from .errors import MissingEffortScoreError, NoOkRecordsError
from .masks import BBox, BinaryMask
from .metrics import five_number_summary, improvement_pct
from .runner import STATUS_OK, EvalRecord
from .strategies import Prompt, StrategyKind, parse_strategy

SUMMARY_VERSION = "#segprompt-summary v1"
SCATTER_VERSION = "#segprompt-scatter v1"

COLOR_POSITIVE = (255, 0, 0)
COLOR_NEGATIVE = (0, 0, 255)
COLOR_BOX = (0, 255, 255)
COLOR_CONTOUR = (255, 255, 0)


@dataclasses.dataclass(frozen=True)
class SummaryRow:
    strategy: str
    n: int
    mean_iou: float
    mean_dice: float
    dice_five_number: tuple[float, float, float, float, float]
    improvement_iou: float | None = None
    improvement_dice: float | None = None


def _baseline_for(strategy: str) -> str | None:
    """The matching no-box strategy string, if this strategy is a with-box
    variant that has one (points+box:k=K pairs with points:k=K, negmix with
    box=true pairs with the same negmix with box=false)."""
    spec = parse_strategy(strategy)
    if spec.kind is StrategyKind.POINTS_PLUS_BOX:
        return f"points:k={spec.k_points}"
    if spec.kind is StrategyKind.NEGATIVE_MIX and spec.with_box:
        return dataclasses.replace(spec, with_box=False).canonical()
    return None


def summarize(records: list[EvalRecord]) -> list[SummaryRow]:
    """Per-strategy means over ok records, in first-appearance order.

    A strategy that appears but has no ok record raises NoOkRecordsError;
    rows whose no-box counterpart is present gain improvement columns.
    """
    by_strategy: dict[str, list[EvalRecord]] = {}
    for rec in records:
        by_strategy.setdefault(rec.strategy, []).append(rec)
    means: dict[str, tuple[float, float, list[float], int]] = {}
    for strategy, recs in by_strategy.items():
        ok = [r for r in recs if r.status == STATUS_OK]
        if not ok:
            raise NoOkRecordsError(strategy)
        dices = [r.dice for r in ok]
        ious = [r.iou for r in ok]
        means[strategy] = (float(np.mean(ious)), float(np.mean(dices)), dices, len(ok))
    rows = []
    for strategy in by_strategy:
        mean_iou, mean_dice, dices, n = means[strategy]
        imp_iou = imp_dice = None
        baseline = _baseline_for(strategy)
        if baseline is not None and baseline in means:
            base_iou, base_dice, _, _ = means[baseline]
            if base_iou > 0:
                imp_iou = improvement_pct(base_iou, mean_iou)
            if base_dice > 0:
                imp_dice = improvement_pct(base_dice, mean_dice)
        rows.append(SummaryRow(
            strategy=strategy,
            n=n,
            mean_iou=mean_iou,
            mean_dice=mean_dice,
            dice_five_number=tuple(five_number_summary(dices)),
            improvement_iou=imp_iou,
            improvement_dice=imp_dice,
        ))
    return rows


def _pct(x: float) -> str:
    return f"{x * 100:.3f}"


def format_markdown(rows: list[SummaryRow]) -> str:
    out = [
        "| Strategy | N | IoU (%) | Dice (%) | Dice min/Q1/median/Q3/max (%) "
        "| Improvement IoU (%) | Improvement Dice (%) |",
        "|:--|--:|--:|--:|:--|--:|--:|",
    ]
    for r in rows:
        five = "/".join(_pct(v) for v in r.dice_five_number)
        imp_iou = f"{r.improvement_iou:+.3f}" if r.improvement_iou is not None else "-"
        imp_dice = f"{r.improvement_dice:+.3f}" if r.improvement_dice is not None else "-"
        out.append(
            f"| {r.strategy} | {r.n} | {_pct(r.mean_iou)} | {_pct(r.mean_dice)} "
            f"| {five} | {imp_iou} | {imp_dice} |"
        )
    return "\n".join(out) + "\n"


def format_csv(rows: list[SummaryRow]) -> str:
    buf = io.StringIO()
    buf.write(SUMMARY_VERSION + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([
        "strategy", "n", "iou_pct", "dice_pct",
        "dice_min_pct", "dice_q1_pct", "dice_median_pct", "dice_q3_pct", "dice_max_pct",
        "imp_iou_pct", "imp_dice_pct",
    ])
    for r in rows:
        writer.writerow([
            r.strategy, r.n, _pct(r.mean_iou), _pct(r.mean_dice),
            *(_pct(v) for v in r.dice_five_number),
            "" if r.improvement_iou is None else f"{r.improvement_iou:.3f}",
            "" if r.improvement_dice is None else f"{r.improvement_dice:.3f}",
        ])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# Effort scatter.

_DEFAULT_EFFORT_BY_KIND = {
    StrategyKind.BOX_ONLY: 1,
    StrategyKind.JITTERED_BOX: 1,
    StrategyKind.POSITIVE_POINTS: 2,
    StrategyKind.POINTS_PLUS_BOX: 3,
    StrategyKind.BOX_CENTER: 3,
    StrategyKind.CENTROID: 3,
    StrategyKind.QUADRANT_SAMPLE: 4,
    StrategyKind.NEGATIVE_MIX: 4,
}


def default_effort(rows: list[SummaryRow]) -> dict[str, float]:
    """Ordinal effort per strategy: drawing a box is cheapest (1), clicking
    points costs more (2), combining or deriving placements more still (3),
    and strategies needing per-quadrant or polarity decisions most (4)."""
    return {
        r.strategy: float(_DEFAULT_EFFORT_BY_KIND[parse_strategy(r.strategy).kind])
        for r in rows
    }


def load_effort_map(path: Path) -> dict[str, float]:
    try:
        import tomllib
    except ImportError:
        import tomli as tomllib

    with open(path, "rb") as fh:
        raw = tomllib.load(fh)
    table = raw.get("effort", raw)
    out = {}
    for key, value in table.items():
        if not isinstance(value, (int, float)):
            raise MissingEffortScoreError(f"effort for {key!r} must be a number")
        out[key] = float(value)
    return out


@dataclasses.dataclass(frozen=True)
class ScatterPoint:
    strategy: str
    effort: float
    dice_dev_pct: float


def scatter_data(rows: list[SummaryRow], effort: dict[str, float] | None = None) -> list[ScatterPoint]:
    """Per-strategy deviation of mean Dice (percent) from the grand mean of
    the row means, against effort.  Deviations sum to zero by construction.
    """
    if effort is None:
        effort = default_effort(rows)
    missing = [r.strategy for r in rows if r.strategy not in effort]
    if missing:
        raise MissingEffortScoreError(f"no effort score for {missing[0]!r}")
    grand = float(np.mean([r.mean_dice for r in rows]))
    points = [
        ScatterPoint(r.strategy, effort[r.strategy], (r.mean_dice - grand) * 100.0)
        for r in rows
    ]
    points.sort(key=lambda p: (p.effort, p.strategy))
    return points


def format_scatter_csv(points: list[ScatterPoint]) -> str:
    buf = io.StringIO()
    buf.write(SCATTER_VERSION + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["strategy", "effort", "dice_dev_pct"])
    for p in points:
        writer.writerow([p.strategy, f"{p.effort:g}", f"{p.dice_dev_pct:.3f}"])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# Minimal SVG emitters.  No plotting dependency; every coordinate is
# formatted with two decimals so output bytes are platform-independent.

_SVG_W, _SVG_H = 480.0, 320.0
_ML, _MR, _MT, _MB = 60.0, 15.0, 15.0, 45.0


def _f(x: float) -> str:
    return f"{x:.2f}"


def _svg_header(width: float, height: float) -> str:
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_f(width)}" '
        f'height="{_f(height)}" viewBox="0 0 {_f(width)} {_f(height)}">'
    )


def render_scatter_svg(points: list[ScatterPoint]) -> str:
    """Self-contained scatter of dice deviation vs effort with a dashed
    zero line; each marker carries its strategy name as a tooltip."""
    if not points:
        raise ValueError("no scatter points to render")
    efforts = [p.effort for p in points]
    devs = [p.dice_dev_pct for p in points]
    x_lo, x_hi = min(efforts) - 0.5, max(efforts) + 0.5
    m = max(1e-6, max(abs(d) for d in devs)) * 1.15
    y_lo, y_hi = -m, m
    plot_w = _SVG_W - _ML - _MR
    plot_h = _SVG_H - _MT - _MB

    def sx(x: float) -> float:
        return _ML + (x - x_lo) / (x_hi - x_lo) * plot_w

    def sy(y: float) -> float:
        return _MT + (y_hi - y) / (y_hi - y_lo) * plot_h

    parts = [_svg_header(_SVG_W, _SVG_H)]
    parts.append(
        f'<rect x="{_f(_ML)}" y="{_f(_MT)}" width="{_f(plot_w)}" height="{_f(plot_h)}" '
        'fill="none" stroke="black" stroke-width="1"/>'
    )
    zero = sy(0.0)
    parts.append(
        f'<line x1="{_f(_ML)}" y1="{_f(zero)}" x2="{_f(_ML + plot_w)}" y2="{_f(zero)}" '
        'stroke="gray" stroke-width="1" stroke-dasharray="4 3"/>'
    )
    for tick in sorted({p.effort for p in points}):
        x = sx(tick)
        parts.append(
            f'<line x1="{_f(x)}" y1="{_f(_MT + plot_h)}" x2="{_f(x)}" '
            f'y2="{_f(_MT + plot_h + 5)}" stroke="black" stroke-width="1"/>'
        )
        parts.append(
            f'<text x="{_f(x)}" y="{_f(_MT + plot_h + 18)}" font-size="11" '
            f'text-anchor="middle">{tick:g}</text>'
        )
    for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
        y_val = y_lo + frac * (y_hi - y_lo)
        y = sy(y_val)
        parts.append(
            f'<line x1="{_f(_ML - 5)}" y1="{_f(y)}" x2="{_f(_ML)}" y2="{_f(y)}" '
            'stroke="black" stroke-width="1"/>'
        )
        parts.append(
            f'<text x="{_f(_ML - 8)}" y="{_f(y + 4)}" font-size="11" '
            f'text-anchor="end">{y_val:.2f}</text>'
        )
    parts.append(
        f'<text x="{_f(_ML + plot_w / 2)}" y="{_f(_SVG_H - 8)}" font-size="12" '
        'text-anchor="middle">effort (ordinal)</text>'
    )
    parts.append(
        f'<text x="12" y="{_f(_MT + plot_h / 2)}" font-size="12" text-anchor="middle" '
        f'transform="rotate(-90 12 {_f(_MT + plot_h / 2)})">dice deviation (%)</text>'
    )
    for p in points:
        parts.append(
            f'<circle cx="{_f(sx(p.effort))}" cy="{_f(sy(p.dice_dev_pct))}" r="4" '
            f'fill="steelblue" stroke="black" stroke-width="0.5">'
            f'<title>{p.strategy}: {p.dice_dev_pct:+.3f}</title></circle>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def render_boxplot_svg(rows: list[SummaryRow]) -> str:
    """One five-number box (percent scale) per strategy, whiskers to min
    and max, median as a heavy line."""
    if not rows:
        raise ValueError("no rows to render")
    slot = 64.0
    width = _ML + _MR + slot * len(rows)
    plot_w = width - _ML - _MR
    plot_h = _SVG_H - _MT - _MB
    values = [v * 100 for r in rows for v in r.dice_five_number]
    lo, hi = min(values), max(values)
    span = max(hi - lo, 1e-6)
    lo, hi = lo - 0.05 * span, hi + 0.05 * span

    def sy(v: float) -> float:
        return _MT + (hi - v) / (hi - lo) * plot_h

    parts = [_svg_header(width, _SVG_H)]
    parts.append(
        f'<rect x="{_f(_ML)}" y="{_f(_MT)}" width="{_f(plot_w)}" height="{_f(plot_h)}" '
        'fill="none" stroke="black" stroke-width="1"/>'
    )
    for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
        v = lo + frac * (hi - lo)
        y = sy(v)
        parts.append(
            f'<line x1="{_f(_ML - 5)}" y1="{_f(y)}" x2="{_f(_ML)}" y2="{_f(y)}" '
            'stroke="black" stroke-width="1"/>'
        )
        parts.append(
            f'<text x="{_f(_ML - 8)}" y="{_f(y + 4)}" font-size="11" '
            f'text-anchor="end">{v:.2f}</text>'
        )
    for i, r in enumerate(rows):
        cx = _ML + slot * (i + 0.5)
        half = 18.0
        mn, q1, med, q3, mx = (v * 100 for v in r.dice_five_number)
        parts.append(
            f'<line x1="{_f(cx)}" y1="{_f(sy(mn))}" x2="{_f(cx)}" y2="{_f(sy(mx))}" '
            'stroke="black" stroke-width="1"/>'
        )
        for v in (mn, mx):
            parts.append(
                f'<line x1="{_f(cx - half / 2)}" y1="{_f(sy(v))}" x2="{_f(cx + half / 2)}" '
                f'y2="{_f(sy(v))}" stroke="black" stroke-width="1"/>'
            )
        parts.append(
            f'<rect x="{_f(cx - half)}" y="{_f(sy(q3))}" width="{_f(2 * half)}" '
            f'height="{_f(sy(q1) - sy(q3))}" fill="lightsteelblue" stroke="black" '
            'stroke-width="1"/>'
        )
        parts.append(
            f'<line x1="{_f(cx - half)}" y1="{_f(sy(med))}" x2="{_f(cx + half)}" '
            f'y2="{_f(sy(med))}" stroke="black" stroke-width="2"/>'
        )
        parts.append(
            f'<text x="{_f(cx)}" y="{_f(_MT + plot_h + 16)}" font-size="9" '
            f'text-anchor="middle">{r.strategy}</text>'
        )
    parts.append(
        f'<text x="12" y="{_f(_MT + plot_h / 2)}" font-size="12" text-anchor="middle" '
        f'transform="rotate(-90 12 {_f(_MT + plot_h / 2)})">dice (%)</text>'
    )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


# ---------------------------------------------------------------------------
# Prompt overlays.


def _to_rgb(image: np.ndarray) -> np.ndarray:
    if image.dtype == np.uint16:
        base = (image >> 8).astype(np.uint8)
    else:
        base = image.astype(np.uint8)
    return np.stack([base, base, base], axis=-1)


def _contour(gt: BinaryMask) -> np.ndarray:
    """Foreground pixels with a background 4-neighbor or on the image edge."""
    fg = gt.pixels
    padded = np.zeros((fg.shape[0] + 2, fg.shape[1] + 2), dtype=bool)
    padded[1:-1, 1:-1] = fg
    interior = (
        padded[:-2, 1:-1] & padded[2:, 1:-1] & padded[1:-1, :-2] & padded[1:-1, 2:]
    )
    return fg & ~interior


def _draw_box(rgb: np.ndarray, box: BBox, color) -> None:
    rgb[box.y_min, box.x_min:box.x_max + 1] = color
    rgb[box.y_max, box.x_min:box.x_max + 1] = color
    rgb[box.y_min:box.y_max + 1, box.x_min] = color
    rgb[box.y_min:box.y_max + 1, box.x_max] = color


def _draw_marker(rgb: np.ndarray, x: int, y: int, color) -> None:
    h, w = rgb.shape[:2]
    rgb[max(y - 1, 0):min(y + 1, h - 1) + 1, max(x - 1, 0):min(x + 1, w - 1) + 1] = color


def render_overlay(image: np.ndarray, prompt: Prompt, gt: BinaryMask, out_path: Path) -> None:
    """Write a PNG of the grayscale patch with the ground-truth contour
    (yellow), the prompt box (cyan), positive markers (red) and negative
    markers (blue), painted in that order so markers stay visible."""
    from PIL import Image

    rgb = _to_rgb(image)
    rgb[_contour(gt)] = COLOR_CONTOUR
    if prompt.box is not None:
        _draw_box(rgb, prompt.box, COLOR_BOX)
    for p in prompt.points:
        _draw_marker(rgb, p.x, p.y, COLOR_POSITIVE if p.positive else COLOR_NEGATIVE)
    Image.fromarray(rgb, mode="RGB").save(out_path)
