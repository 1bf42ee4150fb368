"""Text flow propagation: carry a seed-frame text layer to every other frame.

For each target frame the seed text pixels are chained through the
adjacent-frame flows, filtered by displacement statistics and by the
entity's segmentation, and the surviving pairs are fitted with a RANSAC
homography. The text layer is then warped, masked by the entity and
motion-blurred along the mean text motion.

Homographies are stored target -> seed: warping evaluates the seed layer at
``H(q)`` for every target pixel ``q``, and seed geometry moves to the target
through ``H^-1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence

import numpy as np
from scipy import ndimage

from .errors import FitFailedError, InputContractError
from .flow import FlowField, chain_points, forward_sequence, reversed_sequence
from .geometry import Homography, RansacParams, invert, ransac_homography
from .sampling import SegmentationMap, flow_mask, segm_hits, text_points

# statuses recorded per frame
OK = "ok"
SEED = "seed"
FEW_SAMPLES = "few_samples"
FIT_FAILED = "fit_failed"
HIDDEN = "hidden"


@dataclass(frozen=True, eq=False)
class TextMap:
    """RGBA text layer (H, W, 4): straight colour in [0, 1] plus coverage alpha."""

    rgba: np.ndarray

    def __post_init__(self):
        rgba = np.array(self.rgba, dtype=np.float64)
        if rgba.ndim != 3 or rgba.shape[2] != 4:
            raise InputContractError(f"text map must be (H, W, 4), got {rgba.shape}")
        a = rgba[..., 3]
        if a.size and (a.min() < 0.0 or a.max() > 1.0):
            raise InputContractError("text alpha must lie in [0, 1]")
        rgba.setflags(write=False)
        object.__setattr__(self, "rgba", rgba)

    @classmethod
    def zeros(cls, width: int, height: int) -> "TextMap":
        return cls(np.zeros((height, width, 4)))

    @property
    def height(self) -> int:
        return self.rgba.shape[0]

    @property
    def width(self) -> int:
        return self.rgba.shape[1]

    @property
    def alpha(self) -> np.ndarray:
        return self.rgba[..., 3]

    @property
    def rgb(self) -> np.ndarray:
        return self.rgba[..., :3]

    def mass(self) -> float:
        return float(self.alpha.sum())

    def is_empty(self) -> bool:
        return not np.any(self.alpha > 0)


@dataclass(frozen=True)
class PropagationParams:
    min_samples: int = 32
    blur_alpha: float = 0.25
    ransac: RansacParams = field(default_factory=RansacParams)
    stride: int = 2
    rng_seed: int = 0

    def __post_init__(self):
        if self.min_samples < 4:
            raise ValueError("min_samples must be >= 4")
        if self.blur_alpha < 0:
            raise ValueError("blur_alpha must be >= 0")
        if self.stride < 1:
            raise ValueError("stride must be >= 1")


@dataclass
class FrameEstimate:
    text_map: TextMap
    homography: Optional[Homography]
    sample_count: int
    status: str
    visibility: float
    # target-frame positions of the fitted sample set, for previews
    sample_points: np.ndarray

    @property
    def lost(self) -> bool:
        return self.homography is None


@dataclass
class PropagationResult:
    seed_index: int
    text_maps: List[TextMap]
    homographies: List[Optional[Homography]]
    lost: List[bool]
    sample_counts: List[int]
    visibility: List[float]
    status: List[str]
    sample_points: List[np.ndarray]


# ---------------------------------------------------------------------------
# image operations


def _snap(coords: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    # projective round-off must not leak bilinear weight onto neighbours
    r = np.rint(coords)
    return np.where(np.abs(coords - r) < tol, r, coords)


def warp_text_map(t_map: TextMap, h: Homography) -> TextMap:
    """Inverse-map warp: target pixel ``q`` takes the seed layer's value at ``h(q)``."""
    hh, ww = t_map.height, t_map.width
    # colour off the reachable region carries no coverage; keep the seed's
    out = np.array(t_map.rgba)
    out[..., 3] = 0.0
    region = _reachable_region(t_map.alpha, h)
    if region is None:
        return TextMap(out)
    x0, y0, x1, y1 = region
    ys, xs = np.mgrid[y0:y1, x0:x1].astype(np.float64)
    m = h.m
    w = m[2, 0] * xs + m[2, 1] * ys + m[2, 2]
    valid = np.abs(w) > 1e-12
    w = np.where(valid, w, 1.0)
    sx = _snap((m[0, 0] * xs + m[0, 1] * ys + m[0, 2]) / w)
    sy = _snap((m[1, 0] * xs + m[1, 1] * ys + m[1, 2]) / w)
    far = ~valid | ~np.isfinite(sx) | ~np.isfinite(sy)
    # keep map_coordinates away from inf
    sx = np.where(far, -10.0, np.clip(sx, -10.0, ww + 10.0))
    sy = np.where(far, -10.0, np.clip(sy, -10.0, hh + 10.0))
    coords = np.stack([sy, sx])
    for c in range(3):
        out[y0:y1, x0:x1, c] = ndimage.map_coordinates(t_map.rgba[..., c], coords, order=1, mode="nearest")
    a = ndimage.map_coordinates(t_map.alpha, coords, order=1, mode="grid-constant", cval=0.0)
    a[far] = 0.0
    out[y0:y1, x0:x1, 3] = np.clip(a, 0.0, 1.0)
    return TextMap(out)


def _reachable_region(alpha: np.ndarray, h: Homography):
    """Target box ``(x0, y0, x1, y1)``, exclusive ends, outside which the warp has no alpha.

    Bilinear sampling reaches one pixel past the seed support, so the support
    box grown by one is mapped to the target. When that box straddles the
    horizon of ``h^-1`` its image is unbounded and the whole frame is used.
    """
    hh, ww = alpha.shape
    rows = np.flatnonzero(alpha.any(axis=1))
    if rows.size == 0:
        return None
    cols = np.flatnonzero(alpha.any(axis=0))
    bx0, bx1 = cols[0] - 1.0, cols[-1] + 1.0
    by0, by1 = rows[0] - 1.0, rows[-1] + 1.0
    corners = np.array([[bx0, by0, 1.0], [bx1, by0, 1.0], [bx1, by1, 1.0], [bx0, by1, 1.0]])
    img = corners @ invert(h).m.T
    w = img[:, 2]
    if not (np.all(w > 1e-12) or np.all(w < -1e-12)):
        return 0, 0, ww, hh
    # w is affine, so one sign at the corners holds on the whole box and its image is their hull
    xy = img[:, :2] / w[:, None]
    if not np.all(np.isfinite(xy)):
        return 0, 0, ww, hh
    x0 = int(np.clip(np.floor(xy[:, 0].min()) - 1, 0, ww))
    x1 = int(np.clip(np.ceil(xy[:, 0].max()) + 2, 0, ww))
    y0 = int(np.clip(np.floor(xy[:, 1].min()) - 1, 0, hh))
    y1 = int(np.clip(np.ceil(xy[:, 1].max()) + 2, 0, hh))
    if x0 >= x1 or y0 >= y1:
        return None
    return x0, y0, x1, y1


def occlusion_mask(t_map: TextMap, segm: SegmentationMap, entity_id: int) -> TextMap:
    """Zero the alpha wherever the entity is not visible; colour is untouched."""
    if (segm.height, segm.width) != (t_map.height, t_map.width):
        raise InputContractError("segmentation and text map dimensions differ")
    out = np.array(t_map.rgba)
    out[..., 3] = np.where(segm.ids == entity_id, out[..., 3], 0.0)
    return TextMap(out)


def blur_length(mean_flow, alpha: float) -> int:
    mag = math.hypot(float(mean_flow[0]), float(mean_flow[1]))
    return max(1, int(math.floor(alpha * mag + 0.5)))


def motion_blur_kernel(mean_flow, alpha: float) -> np.ndarray:
    """Uniform line kernel of ``round(alpha * |v|)`` taps along ``v``.

    Taps sit at integer multiples of the unit direction, starting
    ``(L - 1) // 2`` steps behind the centre; off-grid taps are split
    bilinearly over their four neighbours. The kernel is odd-sized with the
    zero offset at its centre.
    """
    length = blur_length(mean_flow, alpha)
    if length == 1:
        return np.ones((1, 1))
    vx, vy = float(mean_flow[0]), float(mean_flow[1])
    norm = math.hypot(vx, vy)
    dx, dy = vx / norm, vy / norm
    steps = np.arange(length) - (length - 1) // 2
    ox, oy = steps * dx, steps * dy
    r = int(math.ceil(max(np.abs(ox).max(), np.abs(oy).max()))) + 1
    k = np.zeros((2 * r + 1, 2 * r + 1))
    wt = 1.0 / length
    for x, y in zip(_snap(ox + r), _snap(oy + r)):
        x0, y0 = int(math.floor(x)), int(math.floor(y))
        fx, fy = x - x0, y - y0
        k[y0, x0] += wt * (1 - fx) * (1 - fy)
        if fx:
            k[y0, x0 + 1] += wt * fx * (1 - fy)
        if fy:
            k[y0 + 1, x0] += wt * (1 - fx) * fy
        if fx and fy:
            k[y0 + 1, x0 + 1] += wt * fx * fy
    return k


def motion_blur(t_map: TextMap, mean_flow, alpha: float) -> TextMap:
    """Smear the layer along ``mean_flow``; a pixel at ``p`` spreads to ``p + offset``."""
    k = motion_blur_kernel(mean_flow, alpha)
    if k.shape == (1, 1):
        return t_map
    a = t_map.alpha
    a_blur = ndimage.convolve(a, k, mode="constant", cval=0.0)
    out = np.empty_like(t_map.rgba)
    covered = a_blur > 1e-12
    for c in range(3):
        # colour is averaged with coverage weights so transparent pixels do not bleed in
        premul = ndimage.convolve(t_map.rgba[..., c] * a, k, mode="constant", cval=0.0)
        out[..., c] = np.where(covered, premul / np.where(covered, a_blur, 1.0), t_map.rgba[..., c])
    out[..., :3] = np.clip(out[..., :3], 0.0, 1.0)
    out[..., 3] = np.clip(a_blur, 0.0, 1.0)
    return TextMap(out)


def propagate_quad(seed_quad, h: Homography) -> np.ndarray:
    """Move seed-frame corners into the target frame (``h`` maps target -> seed)."""
    quad = np.asarray(seed_quad, dtype=float).reshape(4, 2)
    return invert(h).apply_points(quad)


# ---------------------------------------------------------------------------
# propagation


class _Direction:
    """Trajectories of every seed text point along one temporal direction."""

    def __init__(self, points: np.ndarray, flows: Sequence[FlowField], segms: Sequence[SegmentationMap], entity_id: int):
        self.points = points
        self.positions, self.alive = chain_points(flows, points.astype(float))
        hits = segm_hits(self.positions, self.alive, segms, entity_id)
        self.on_entity = np.logical_and.accumulate(hits, axis=0)

    def sample_mask(self, step: int) -> np.ndarray:
        pos = self.positions[step]
        mags = np.linalg.norm(pos - self.positions[0], axis=1)
        return flow_mask(mags, self.alive[step]) & self.on_entity[step]


def _zero_estimate(t_map: TextMap, count: int, status: str) -> FrameEstimate:
    return FrameEstimate(
        text_map=TextMap.zeros(t_map.width, t_map.height),
        homography=None,
        sample_count=count,
        status=status,
        visibility=0.0,
        sample_points=np.zeros((0, 2)),
    )


def _estimate(t_map, direction: _Direction, step: int, target_index: int, segm_k, entity_id, params) -> FrameEstimate:
    keep = direction.sample_mask(step)
    count = int(keep.sum())
    if count <= params.min_samples:
        return _zero_estimate(t_map, count, FEW_SAMPLES)
    p_t = direction.positions[0][keep]
    p_k = direction.positions[step][keep]
    rng = np.random.default_rng([params.rng_seed, target_index])
    try:
        h, _ = ransac_homography((p_k, p_t), params.ransac, rng)
    except FitFailedError:
        return _zero_estimate(t_map, count, FIT_FAILED)
    warped = warp_text_map(t_map, h)
    masked = occlusion_mask(warped, segm_k, entity_id)
    pre, post = warped.mass(), masked.mass()
    if post <= 0.0:
        return _zero_estimate(t_map, count, HIDDEN)
    mean_flow = (p_k - p_t).mean(axis=0) / step
    blurred = motion_blur(masked, mean_flow, params.blur_alpha)
    return FrameEstimate(
        text_map=blurred,
        homography=h,
        sample_count=count,
        status=OK,
        visibility=min(1.0, post / pre),
        sample_points=p_k,
    )


def _check_inputs(t_map: TextMap, flows_fwd, flows_bwd, segms, seed_index: int):
    n = len(segms)
    if not 0 <= seed_index < n:
        raise InputContractError(f"seed index {seed_index} outside 0..{n - 1}")
    for s in segms:
        if (s.height, s.width) != (t_map.height, t_map.width):
            raise InputContractError("segmentation and text map dimensions differ")
    for f in list(flows_fwd or []) + list(flows_bwd or []):
        if f is not None and (f.height, f.width) != (t_map.height, t_map.width):
            raise InputContractError("flow and text map dimensions differ")


def _seed_estimate(t_map: TextMap, points: np.ndarray) -> FrameEstimate:
    return FrameEstimate(
        text_map=t_map,
        homography=Homography.identity(),
        sample_count=len(points),
        status=SEED,
        visibility=1.0,
        sample_points=points.astype(float),
    )


def propagate_one(
    t_map: TextMap,
    seed_index: int,
    target_index: int,
    flows_fwd,
    flows_bwd,
    segms: Sequence[SegmentationMap],
    entity_id: int,
    params: PropagationParams = PropagationParams(),
) -> FrameEstimate:
    """Estimate the text layer of one target frame from the seed frame."""
    _check_inputs(t_map, flows_fwd, flows_bwd, segms, seed_index)
    if not 0 <= target_index < len(segms):
        raise InputContractError(f"target index {target_index} outside 0..{len(segms) - 1}")
    points = text_points(t_map.alpha, params.stride)
    if target_index == seed_index:
        return _seed_estimate(t_map, points)
    if target_index > seed_index:
        flows = forward_sequence(flows_fwd, seed_index, target_index)
        seg_seq = list(segms[seed_index : target_index + 1])
    else:
        flows = reversed_sequence(flows_bwd, seed_index, target_index)
        seg_seq = list(segms[target_index : seed_index + 1])[::-1]
    direction = _Direction(points, flows, seg_seq, entity_id)
    step = abs(target_index - seed_index)
    return _estimate(t_map, direction, step, target_index, segms[target_index], entity_id, params)


def propagate_all(
    t_map: TextMap,
    seed_index: int,
    flows_fwd,
    flows_bwd,
    segms: Sequence[SegmentationMap],
    entity_id: int,
    params: PropagationParams = PropagationParams(),
) -> PropagationResult:
    """Forward propagation for frames after the seed, backward for frames before."""
    _check_inputs(t_map, flows_fwd, flows_bwd, segms, seed_index)
    n = len(segms)
    points = text_points(t_map.alpha, params.stride)
    estimates: List[Optional[FrameEstimate]] = [None] * n
    estimates[seed_index] = _seed_estimate(t_map, points)

    if seed_index < n - 1:
        fwd = _Direction(
            points,
            forward_sequence(flows_fwd, seed_index, n - 1),
            list(segms[seed_index:]),
            entity_id,
        )
        for k in range(seed_index + 1, n):
            estimates[k] = _estimate(t_map, fwd, k - seed_index, k, segms[k], entity_id, params)
    if seed_index > 0:
        bwd = _Direction(
            points,
            reversed_sequence(flows_bwd, seed_index, 0),
            list(segms[: seed_index + 1])[::-1],
            entity_id,
        )
        for k in range(seed_index - 1, -1, -1):
            estimates[k] = _estimate(t_map, bwd, seed_index - k, k, segms[k], entity_id, params)

    return PropagationResult(
        seed_index=seed_index,
        text_maps=[e.text_map for e in estimates],
        homographies=[e.homography for e in estimates],
        lost=[e.lost for e in estimates],
        sample_counts=[e.sample_count for e in estimates],
        visibility=[e.visibility for e in estimates],
        status=[e.status for e in estimates],
        sample_points=[e.sample_points for e in estimates],
    )


def with_seed(params: PropagationParams, rng_seed: int) -> PropagationParams:
    return replace(params, rng_seed=rng_seed)
