"""Dense optical flow fields, point mapping and trajectory chaining."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import EmptyInputError, InputContractError, OutOfBoundsError


@dataclass(frozen=True, eq=False)
class FlowField:
    """Per-pixel ``(u, v)`` displacement, stored as an (H, W, 2) float array.

    Pixel ``(x, y)`` has its centre at continuous coordinate ``(x, y)``.
    """

    data: np.ndarray

    def __post_init__(self):
        data = np.array(self.data, dtype=np.float64)
        if data.ndim != 3 or data.shape[2] != 2:
            raise InputContractError(f"flow data must be (H, W, 2), got {data.shape}")
        if not np.all(np.isfinite(data)):
            bad = np.argwhere(~np.isfinite(data))[0]
            raise InputContractError(f"non-finite flow at pixel (x={bad[1]}, y={bad[0]})")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @classmethod
    def constant(cls, width: int, height: int, u: float, v: float) -> "FlowField":
        data = np.empty((height, width, 2))
        data[..., 0] = u
        data[..., 1] = v
        return cls(data)

    @classmethod
    def zeros(cls, width: int, height: int) -> "FlowField":
        return cls(np.zeros((height, width, 2)))

    def in_bounds(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=float).reshape(-1, 2)
        return (
            (pts[:, 0] >= 0)
            & (pts[:, 0] <= self.width - 1)
            & (pts[:, 1] >= 0)
            & (pts[:, 1] <= self.height - 1)
        )

    def sample(self, pts: np.ndarray) -> np.ndarray:
        """Bilinear samples at in-bounds points (N, 2); no bounds check."""
        pts = np.asarray(pts, dtype=float).reshape(-1, 2)
        x, y = pts[:, 0], pts[:, 1]
        x0 = np.floor(x).astype(np.intp)
        y0 = np.floor(y).astype(np.intp)
        x0 = np.clip(x0, 0, self.width - 1)
        y0 = np.clip(y0, 0, self.height - 1)
        x1 = np.minimum(x0 + 1, self.width - 1)
        y1 = np.minimum(y0 + 1, self.height - 1)
        fx = (x - x0)[:, None]
        fy = (y - y0)[:, None]
        d = self.data
        top = d[y0, x0] * (1 - fx) + d[y0, x1] * fx
        bottom = d[y1, x0] * (1 - fx) + d[y1, x1] * fx
        return top * (1 - fy) + bottom * fy


def sample_flow(f: FlowField, p) -> Tuple[float, float]:
    pt = np.asarray(p, dtype=float).reshape(1, 2)
    if not np.all(np.isfinite(pt)) or not f.in_bounds(pt)[0]:
        raise OutOfBoundsError(f"point {tuple(pt[0])} outside {f.width}x{f.height} field")
    u, v = f.sample(pt)[0]
    return float(u), float(v)


def map_point(f: FlowField, p_t) -> Tuple[float, float]:
    """Position in the next frame: ``p_t + F(p_t)``."""
    u, v = sample_flow(f, p_t)
    return float(p_t[0]) + u, float(p_t[1]) + v


@dataclass(frozen=True, eq=False)
class Trajectory:
    points: np.ndarray  # (steps + 1, 2)
    alive: np.ndarray  # (steps + 1,) bool, monotone non-increasing

    def __len__(self):
        return len(self.points)


def _check_dims(flows: Sequence[FlowField]):
    if flows and any(f.data.shape != flows[0].data.shape for f in flows):
        raise InputContractError("flow fields in a chain must share dimensions")


def chain_points(flows: Sequence[FlowField], pts) -> Tuple[np.ndarray, np.ndarray]:
    """Chain many points through successive fields at once.

    Returns ``positions`` (S+1, N, 2) and ``alive`` (S+1, N). A point dies at
    the first position outside the image and is frozen there.
    """
    flows = list(flows)
    _check_dims(flows)
    pts = np.asarray(pts, dtype=float).reshape(-1, 2)
    positions = np.empty((len(flows) + 1, len(pts), 2))
    alive = np.empty((len(flows) + 1, len(pts)), dtype=bool)
    positions[0] = pts
    if flows:
        alive[0] = flows[0].in_bounds(pts)
    else:
        alive[0] = np.all(np.isfinite(pts), axis=1)
    for i, f in enumerate(flows):
        cur = positions[i].copy()
        ok = alive[i]
        if ok.any():
            cur[ok] = cur[ok] + f.sample(cur[ok])
        positions[i + 1] = cur
        alive[i + 1] = ok & f.in_bounds(cur)
    return positions, alive


def chain(flows: Sequence[FlowField], p_t) -> Trajectory:
    positions, alive = chain_points(flows, [p_t])
    return Trajectory(points=positions[:, 0, :], alive=alive[:, 0])


def population_stats(values) -> Tuple[float, float]:
    """Mean and population standard deviation of a set of magnitudes."""
    m = [float(v) for v in np.asarray(values, dtype=float).ravel()]
    if not m:
        raise EmptyInputError("magnitude statistics need at least one point")
    lo, hi = min(m), max(m)
    if lo == hi:
        return lo, 0.0
    n = len(m)
    mu = math.fsum(m) / n
    mu = min(max(mu, lo), hi)
    sigma = math.sqrt(math.fsum((v - mu) ** 2 for v in m) / n)
    return mu, sigma


def magnitude_stats(f: FlowField, points) -> Tuple[float, float]:
    """``(mu, sigma)`` of ``||F(p)||`` over in-bounds points."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(pts) == 0:
        raise EmptyInputError("magnitude statistics need at least one point")
    if not f.in_bounds(pts).all():
        raise OutOfBoundsError("all points must lie inside the field")
    return population_stats(np.linalg.norm(f.sample(pts), axis=1))


def reversed_sequence(
    flows_bwd: Sequence[Optional[FlowField]], seed_index: int, target_index: int
) -> List[FlowField]:
    """Backward fields ordered for chaining from ``seed_index`` down to ``target_index``.

    ``flows_bwd[i]`` maps frame ``i + 1`` onto frame ``i``.
    """
    if target_index > seed_index:
        raise InputContractError("backward chaining needs target_index <= seed_index")
    out = []
    for i in range(seed_index - 1, target_index - 1, -1):
        if i < 0 or i >= len(flows_bwd) or flows_bwd[i] is None:
            raise InputContractError(f"missing backward flow for frame {i + 1} -> {i}")
        out.append(flows_bwd[i])
    return out


def forward_sequence(
    flows_fwd: Sequence[Optional[FlowField]], seed_index: int, target_index: int
) -> List[FlowField]:
    """Forward fields ``flows_fwd[seed] ... flows_fwd[target - 1]``."""
    if target_index < seed_index:
        raise InputContractError("forward chaining needs target_index >= seed_index")
    out = []
    for i in range(seed_index, target_index):
        if i >= len(flows_fwd) or flows_fwd[i] is None:
            raise InputContractError(f"missing forward flow for frame {i} -> {i + 1}")
        out.append(flows_fwd[i])
    return out
