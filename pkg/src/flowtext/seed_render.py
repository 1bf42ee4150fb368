"""Seed-frame text rendering: region choice, glyph rasterisation, compositing.

Placement is a simplified take on depth/segmentation-guided placement: a
random flat entity (low depth coefficient of variation) hosts the text in
its largest free axis-aligned rectangle, with bounded rotation and corner
jitter. Compositing is plain alpha-over.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage

from .compose import composite
from .errors import (
    InputContractError,
    PlacementFailedError,
    RenderFailedError,
    UnsupportedCharacterError,
)
from .font import BitmapFont
from .geometry import quad_homography
from .propagation import TextMap
from .sampling import SegmentationMap

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class DepthMap:
    depth: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.depth, dtype=np.float64)
        if d.ndim != 2:
            raise InputContractError(f"depth must be 2-D, got shape {d.shape}")
        if d.size and (not np.all(np.isfinite(d)) or d.min() <= 0):
            raise InputContractError("depth values must be finite and > 0")
        d = d.copy()
        d.setflags(write=False)
        object.__setattr__(self, "depth", d)

    @property
    def height(self) -> int:
        return self.depth.shape[0]

    @property
    def width(self) -> int:
        return self.depth.shape[1]


@dataclass(frozen=True, eq=False)
class Placement:
    entity_id: int
    quad: np.ndarray  # (4, 2): top-left, top-right, bottom-right, bottom-left of the text
    scale: float  # rendered text height in pixels

    def area(self) -> float:
        return quad_area(self.quad)


@dataclass(frozen=True)
class PlacementParams:
    min_area: int = 200
    max_depth_cov: float = 0.15
    max_rotation: float = 15.0
    perspective_jitter: float = 0.08
    min_text_height: float = 8.0
    min_quad_area: float = 64.0
    fill_range: Tuple[float, float] = (0.6, 0.95)
    # pixels kept free around an existing quad
    gap: int = 2


@dataclass(frozen=True)
class TextStyle:
    color: Optional[Tuple[float, float, float]] = None
    rasterizer: object = field(default_factory=BitmapFont)
    min_contrast: float = 0.25
    supersample: int = 4


@dataclass
class RenderedText:
    text: str
    text_map: TextMap
    placement: Placement

    @property
    def entity_id(self) -> int:
        return self.placement.entity_id


def quad_area(quad) -> float:
    q = np.asarray(quad, dtype=float)
    x, y = q[:, 0], q[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def quad_mask(quad, height: int, width: int) -> np.ndarray:
    """Pixels whose centres lie inside (or on) a convex quad."""
    q = np.asarray(quad, dtype=float)
    ys, xs = np.mgrid[0:height, 0:width].astype(np.float64)
    signs = []
    for i in range(4):
        ax, ay = q[i]
        bx, by = q[(i + 1) % 4]
        signs.append((bx - ax) * (ys - ay) - (by - ay) * (xs - ax))
    s = np.stack(signs)
    return np.all(s >= -1e-9, axis=0) | np.all(s <= 1e-9, axis=0)


def largest_rectangle(mask: np.ndarray) -> Optional[Tuple[int, int, int, int]]:
    """Largest all-True axis-aligned rectangle as inclusive ``(x0, y0, x1, y1)``."""
    h, w = mask.shape
    heights = np.zeros(w, dtype=np.int64)
    best, best_area = None, 0
    for y in range(h):
        heights = np.where(mask[y], heights + 1, 0)
        stack: List[int] = []
        for x in range(w + 1):
            cur = heights[x] if x < w else 0
            while stack and heights[stack[-1]] >= cur:
                top = stack.pop()
                ht = heights[top]
                left = stack[-1] + 1 if stack else 0
                area = ht * (x - left)
                if area > best_area:
                    best_area = area
                    best = (left, y - ht + 1, x - 1, y)
            stack.append(x)
    return best


def depth_cov(depth: DepthMap, mask: np.ndarray) -> float:
    vals = depth.depth[mask]
    return float(vals.std() / vals.mean())


def eligible_entities(segm: SegmentationMap, depth: DepthMap, params: PlacementParams) -> List[int]:
    ids, counts = np.unique(segm.ids, return_counts=True)
    out = []
    for i, c in zip(ids.tolist(), counts.tolist()):
        if i == 0 or c < params.min_area:
            continue
        if depth_cov(depth, segm.ids == i) <= params.max_depth_cov:
            out.append(i)
    return out


def bitmap_aspect(text_len: int) -> float:
    """Width/height of a line in the built-in 5x7 font."""
    return (6 * text_len - 1) / 7.0


def select_placement(
    segm: SegmentationMap,
    depth: DepthMap,
    text_len: int,
    rng,
    params: PlacementParams = PlacementParams(),
    aspect: Optional[float] = None,
    occupied: Optional[np.ndarray] = None,
    exclude: Sequence[int] = (),
) -> Placement:
    """Pick a flat entity and a rotated, jittered quad inside its free area."""
    if (segm.height, segm.width) != (depth.height, depth.width):
        raise InputContractError("segmentation and depth dimensions differ")
    rng = np.random.default_rng(rng)
    aspect = bitmap_aspect(text_len) if aspect is None else aspect
    candidates = [e for e in eligible_entities(segm, depth, params) if e not in set(exclude)]
    if not candidates:
        raise PlacementFailedError("no flat entity region large enough")
    entity = int(candidates[rng.integers(len(candidates))])

    free = segm.ids == entity
    if occupied is not None:
        free &= ~occupied
    rect = largest_rectangle(free)
    if rect is None:
        raise PlacementFailedError(f"entity {entity} has no free pixels")
    x0, y0, x1, y1 = rect
    bw, bh = float(x1 - x0), float(y1 - y0)

    theta = math.radians(rng.uniform(-params.max_rotation, params.max_rotation))
    fill = rng.uniform(*params.fill_range)
    c, s = abs(math.cos(theta)), abs(math.sin(theta))
    h = fill * min(bw / (aspect * c + s), bh / (aspect * s + c))
    if h < params.min_text_height:
        # an upright box uses the free rectangle best
        theta, c, s = 0.0, 1.0, 0.0
        h = min(bw / aspect, bh)
    if h < params.min_text_height:
        raise PlacementFailedError(
            f"entity {entity}: free box {bw:.0f}x{bh:.0f} px too small for text aspect {aspect:.2f}"
        )
    w = aspect * h
    ex = 0.5 * (w * c + h * s)
    ey = 0.5 * (w * s + h * c)
    cx = rng.uniform(x0 + ex, max(x0 + ex, x1 - ex))
    cy = rng.uniform(y0 + ey, max(y0 + ey, y1 - ey))

    corners = np.array([[-w / 2, -h / 2], [w / 2, -h / 2], [w / 2, h / 2], [-w / 2, h / 2]])
    ct, st = math.cos(theta), math.sin(theta)
    rot = corners @ np.array([[ct, st], [-st, ct]])
    # shrinking each corner toward the centre keeps the quad convex and inside the box
    shrink = 1.0 - rng.uniform(0.0, params.perspective_jitter, size=(4, 1))
    quad = np.array([cx, cy]) + rot * shrink
    if quad_area(quad) < params.min_quad_area:
        raise PlacementFailedError(f"entity {entity}: quad area below {params.min_quad_area}")
    return Placement(entity_id=entity, quad=quad, scale=h)


def _color_distance(a, b) -> float:
    return float(np.linalg.norm(np.subtract(a, b)) / math.sqrt(3.0))


def choose_color(mean_color, style: TextStyle, rng) -> np.ndarray:
    """Text colour at least ``style.min_contrast`` away from ``mean_color``."""
    if style.color is not None and _color_distance(style.color, mean_color) >= style.min_contrast:
        return np.asarray(style.color, dtype=float)
    for _ in range(50):
        cand = rng.uniform(0.0, 1.0, size=3)
        if _color_distance(cand, mean_color) >= style.min_contrast:
            return cand
    # the farthest cube corner is always at least 0.5 away
    return np.where(np.asarray(mean_color) < 0.5, 1.0, 0.0)


def coverage_in_quad(bitmap: np.ndarray, quad, height: int, width: int, supersample: int = 4) -> np.ndarray:
    """Anti-aliased alpha of ``bitmap`` stretched onto ``quad`` (frame-sized)."""
    bh, bw = bitmap.shape
    rect = np.array([[0.0, 0.0], [bw, 0.0], [bw, bh], [0.0, bh]])
    to_glyph = quad_homography(quad, rect)
    q = np.asarray(quad, dtype=float)
    xa = max(0, int(math.floor(q[:, 0].min())) - 1)
    xb = min(width - 1, int(math.ceil(q[:, 0].max())) + 1)
    ya = max(0, int(math.floor(q[:, 1].min())) - 1)
    yb = min(height - 1, int(math.ceil(q[:, 1].max())) + 1)
    alpha = np.zeros((height, width))
    if xa > xb or ya > yb:
        return alpha
    ys, xs = np.mgrid[ya : yb + 1, xa : xb + 1].astype(np.float64)
    offs = (np.arange(supersample) + 0.5) / supersample - 0.5
    acc = np.zeros_like(xs)
    m = to_glyph.m
    for oy in offs:
        for ox in offs:
            sx, sy = xs + ox, ys + oy
            wz = m[2, 0] * sx + m[2, 1] * sy + m[2, 2]
            u = (m[0, 0] * sx + m[0, 1] * sy + m[0, 2]) / wz
            v = (m[1, 0] * sx + m[1, 1] * sy + m[1, 2]) / wz
            inside = (u >= 0) & (u < bw) & (v >= 0) & (v < bh)
            iu = np.clip(np.floor(u).astype(np.intp), 0, bw - 1)
            iv = np.clip(np.floor(v).astype(np.intp), 0, bh - 1)
            acc += np.where(inside, bitmap[iv, iu], 0.0)
    alpha[ya : yb + 1, xa : xb + 1] = acc / supersample**2
    return np.clip(alpha, 0.0, 1.0)


def rasterize_text(text: str, placement: Placement, style: TextStyle, frame: np.ndarray, rng=None) -> TextMap:
    """Render ``text`` fronto-parallel and warp it onto the placement quad."""
    if not text:
        raise ValueError("text must be non-empty")
    frame = np.asarray(frame, dtype=float)
    height, width = frame.shape[:2]
    bitmap = style.rasterizer.render(text)
    alpha = coverage_in_quad(bitmap, placement.quad, height, width, style.supersample)
    under = alpha > 0
    mean_color = frame[under].mean(axis=0) if under.any() else frame.reshape(-1, 3).mean(axis=0)
    color = choose_color(mean_color, style, np.random.default_rng(rng))
    rgba = np.empty((height, width, 4))
    rgba[..., :3] = color
    rgba[..., 3] = alpha
    return TextMap(rgba)


def render_seed(
    frame: np.ndarray,
    texts: Sequence[str],
    segm: SegmentationMap,
    depth: DepthMap,
    rng,
    style: TextStyle = TextStyle(),
    params: PlacementParams = PlacementParams(),
) -> Tuple[np.ndarray, List[RenderedText]]:
    """Place and draw every text that fits; returns the composited frame and the layers.

    Texts go on distinct entities while any remain, then share entities
    without overlapping. Texts that cannot be placed are skipped.
    """
    if not texts:
        raise ValueError("texts must be non-empty")
    frame = np.asarray(frame, dtype=float)
    height, width = frame.shape[:2]
    if (segm.height, segm.width) != (height, width):
        raise InputContractError("segmentation and frame dimensions differ")
    rng = np.random.default_rng(rng)
    occupied = np.zeros((height, width), dtype=bool)
    used: List[int] = []
    rendered: List[RenderedText] = []
    for text in texts:
        try:
            bitmap = style.rasterizer.render(text)
        except UnsupportedCharacterError as exc:
            log.warning("skipping %r: %s", text, exc)
            continue
        aspect = bitmap.shape[1] / bitmap.shape[0]
        placement = None
        for exclude in ([used, ()] if used else [()]):
            try:
                placement = select_placement(segm, depth, len(text), rng, params, aspect, occupied, exclude)
                break
            except PlacementFailedError as exc:
                reason = exc
        if placement is None:
            log.info("skipping %r: %s", text, reason)
            continue
        t_map = rasterize_text(text, placement, style, frame, rng)
        rendered.append(RenderedText(text=text, text_map=t_map, placement=placement))
        used.append(placement.entity_id)
        occupied |= ndimage.binary_dilation(quad_mask(placement.quad, height, width), iterations=params.gap)
    if not rendered:
        raise RenderFailedError("no text could be placed on the seed frame")
    return composite(frame, [r.text_map for r in rendered]), rendered
