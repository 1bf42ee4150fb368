"""Synthetic planar scenes with analytically known motion.

A single textured planar entity moves under a per-frame homography
``G_i`` (frame 0 -> frame i). Flow fields are sampled at pixel centres from
the closed-form motion, so any error seen downstream is interpolation or
deliberately injected noise.

Injected outliers are anchored to the plane: the plane is cut into square
cells and a random fraction of cells gets uniform garbage flow in every
frame, the way a flow estimator keeps failing on the same surface patch.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .flow import FlowField
from .geometry import Homography, invert, rotation_about
from .sampling import SegmentationMap
from .seed_render import DepthMap

MOTIONS = ("static", "translate", "rotate", "perspective")


@dataclass(frozen=True)
class SceneSpec:
    n: int = 10
    width: int = 320
    height: int = 240
    motion: str = "static"
    velocity: Tuple[float, float] = (3.0, 0.0)  # translate, px/frame
    omega: float = 2.0  # rotate, degrees/frame about the frame centre
    # perspective: per-frame increments of (a00-1, a01, a02, a10, a11-1, a12, a20, a21)
    sweep: Tuple[float, ...] = (0.004, 0.002, 1.0, -0.002, 0.003, 0.5, 2e-5, -1e-5)
    palindrome: bool = False  # motion runs out to the middle frame and back
    entity_quad: Optional[Tuple[Tuple[float, float], ...]] = None  # frame-0 footprint
    entity_id: int = 1
    occluder: Optional[Tuple[int, int, int, int]] = None  # x0, y0, x1, y1 inclusive
    occluded_frames: Tuple[int, ...] = ()
    occluder_id: int = 2
    noise: float = 0.0
    outlier_fraction: float = 0.0
    outlier_cell: int = 8

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("a scene needs at least one frame")
        if self.motion not in MOTIONS:
            raise ValueError(f"motion must be one of {MOTIONS}, got {self.motion!r}")
        if len(self.sweep) != 8:
            raise ValueError("sweep needs 8 values")
        if not 0.0 <= self.outlier_fraction <= 1.0:
            raise ValueError("outlier_fraction must lie in [0, 1]")
        if self.noise < 0:
            raise ValueError("noise must be >= 0")

    @classmethod
    def from_dict(cls, d: dict) -> "SceneSpec":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown scene spec keys: {sorted(unknown)}")
        d = dict(d)
        for key in ("velocity", "sweep", "occluder", "occluded_frames"):
            if d.get(key) is not None:
                d[key] = tuple(d[key])
        if d.get("entity_quad") is not None:
            d["entity_quad"] = tuple(tuple(map(float, c)) for c in d["entity_quad"])
        return cls(**d)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def footprint(self) -> np.ndarray:
        if self.entity_quad is not None:
            return np.asarray(self.entity_quad, dtype=float)
        w, h = self.width, self.height
        return np.array([[0.25 * w, 0.25 * h], [0.75 * w, 0.25 * h], [0.75 * w, 0.75 * h], [0.25 * w, 0.75 * h]])


@dataclass
class Scene:
    spec: SceneSpec
    frames: List[np.ndarray]  # float RGB in [0, 1]
    flows_fwd: List[FlowField]  # flows_fwd[i]: frame i -> i + 1
    flows_bwd: List[FlowField]  # flows_bwd[i]: frame i + 1 -> i
    segms: List[SegmentationMap]
    depths: List[DepthMap]
    truth: List[Homography]  # frame 0 -> frame i

    @property
    def n(self) -> int:
        return len(self.frames)


def motion_time(spec: SceneSpec, i: int) -> int:
    return min(i, spec.n - 1 - i) if spec.palindrome else i


def motion_homography(spec: SceneSpec, tau: float) -> Homography:
    """Frame 0 -> frame at motion time ``tau``."""
    cx, cy = (spec.width - 1) / 2.0, (spec.height - 1) / 2.0
    if spec.motion == "static":
        return Homography.identity()
    if spec.motion == "translate":
        return Homography.translation(spec.velocity[0] * tau, spec.velocity[1] * tau)
    if spec.motion == "rotate":
        return rotation_about(cx, cy, spec.omega * tau)
    d = np.asarray(spec.sweep, dtype=float) * tau
    p = np.array([[1 + d[0], d[1], d[2]], [d[3], 1 + d[4], d[5]], [d[6], d[7], 1.0]])
    to_c = Homography.translation(-cx, -cy)
    return Homography.translation(cx, cy) @ Homography(p) @ to_c


def truth_homographies(spec: SceneSpec) -> List[Homography]:
    return [motion_homography(spec, motion_time(spec, i)) for i in range(spec.n)]


def relative_truth(truth: Sequence[Homography], seed_index: int, target_index: int) -> Homography:
    """Seed frame -> target frame."""
    return truth[target_index] @ invert(truth[seed_index])


def _grid(width: int, height: int) -> np.ndarray:
    ys, xs = np.mgrid[0:height, 0:width].astype(np.float64)
    return np.stack([xs.ravel(), ys.ravel()], axis=1)


def _inside_convex(pts: np.ndarray, quad: np.ndarray) -> np.ndarray:
    signs = []
    for i in range(4):
        a, b = quad[i], quad[(i + 1) % 4]
        signs.append((b[0] - a[0]) * (pts[:, 1] - a[1]) - (b[1] - a[1]) * (pts[:, 0] - a[0]))
    s = np.stack(signs)
    return np.all(s >= 0, axis=0) | np.all(s <= 0, axis=0)


def _texture(plane: np.ndarray) -> np.ndarray:
    u, v = plane[:, 0], plane[:, 1]
    r = 0.45 + 0.2 * np.sin(u / 5.0) + 0.15 * np.cos(v / 7.0)
    g = 0.4 + 0.2 * np.cos((u + v) / 9.0)
    b = 0.35 + 0.15 * np.sin(v / 4.0) * np.cos(u / 11.0)
    return np.clip(np.stack([r, g, b], axis=1), 0.0, 1.0)


def occluder_visible(spec: SceneSpec, i: int) -> bool:
    return spec.occluder is not None and i in set(spec.occluded_frames)


def _occluder_mask(spec: SceneSpec, pts: np.ndarray) -> np.ndarray:
    x0, y0, x1, y1 = spec.occluder
    return (pts[:, 0] >= x0) & (pts[:, 0] <= x1) & (pts[:, 1] >= y0) & (pts[:, 1] <= y1)


def _bad_cells(spec: SceneSpec, rng) -> np.ndarray:
    return rng.random((256, 256)) < spec.outlier_fraction


def _perturb(spec: SceneSpec, flow: np.ndarray, plane: np.ndarray, bad_table: np.ndarray, rng) -> np.ndarray:
    if spec.noise > 0:
        flow = flow + rng.normal(0.0, spec.noise, size=flow.shape)
    if spec.outlier_fraction > 0:
        cell = np.floor(plane / spec.outlier_cell).astype(np.int64) % bad_table.shape[0]
        bad = bad_table[cell[:, 1], cell[:, 0]]
        junk = rng.uniform(-20.0, 20.0, size=flow.shape)
        flow = np.where(bad[:, None], junk, flow)
    return flow


def generate(spec: SceneSpec, rng=None) -> Scene:
    rng = np.random.default_rng(rng)
    w, h = spec.width, spec.height
    pts = _grid(w, h)
    truth = truth_homographies(spec)
    inv_truth = [invert(g) for g in truth]
    quad = spec.footprint()
    bad_table = _bad_cells(spec, rng)

    background = np.empty((h * w, 3))
    background[:, 0] = 0.2 + 0.5 * pts[:, 0] / max(w - 1, 1)
    background[:, 1] = 0.3 + 0.4 * pts[:, 1] / max(h - 1, 1)
    background[:, 2] = 0.6
    bg_depth = 1.0 + 6.0 * pts[:, 0] / max(w - 1, 1) + 3.0 * pts[:, 1] / max(h - 1, 1)

    frames, segms, depths = [], [], []
    planes = []
    for i in range(spec.n):
        plane = inv_truth[i].apply_points(pts)
        planes.append(plane)
        on = _inside_convex(plane, quad)
        rgb = background.copy()
        rgb[on] = _texture(plane[on])
        ids = np.where(on, spec.entity_id, 0)
        depth = np.where(on, 2.0, bg_depth)
        if occluder_visible(spec, i):
            occ = _occluder_mask(spec, pts)
            rgb[occ] = 0.5
            ids = np.where(occ, spec.occluder_id, ids)
            depth = np.where(occ, 1.0, depth)
        frames.append(rgb.reshape(h, w, 3))
        segms.append(SegmentationMap(ids.reshape(h, w)))
        depths.append(DepthMap(depth.reshape(h, w)))

    flows_fwd, flows_bwd = [], []
    for i in range(spec.n - 1):
        step = truth[i + 1] @ inv_truth[i]
        fwd = step.apply_points(pts) - pts
        flows_fwd.append(FlowField(_perturb(spec, fwd, planes[i], bad_table, rng).reshape(h, w, 2)))
        back = truth[i] @ inv_truth[i + 1]
        bwd = back.apply_points(pts) - pts
        flows_bwd.append(FlowField(_perturb(spec, bwd, planes[i + 1], bad_table, rng).reshape(h, w, 2)))

    return Scene(
        spec=spec,
        frames=frames,
        flows_fwd=flows_fwd,
        flows_bwd=flows_bwd,
        segms=segms,
        depths=depths,
        truth=truth,
    )

