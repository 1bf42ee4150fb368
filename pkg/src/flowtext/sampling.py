"""Correspondence point sets: text pixels, flow-magnitude and segmentation filters.

A point set is an ``(N, 2)`` int64 array of ``(x, y)`` seed-frame pixels with
no duplicates, kept in raster order (by ``y`` then ``x``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .errors import InputContractError
from .flow import population_stats

_KEY = np.int64(1) << 32


@dataclass(frozen=True, eq=False)
class SegmentationMap:
    """Per-pixel instance ids, 0 is background."""

    ids: np.ndarray

    def __post_init__(self):
        ids = np.asarray(self.ids)
        if ids.ndim != 2:
            raise InputContractError(f"segmentation must be 2-D, got shape {ids.shape}")
        if ids.size and (not np.issubdtype(ids.dtype, np.integer) or ids.min() < 0):
            raise InputContractError("segmentation ids must be non-negative integers")
        ids = ids.astype(np.int64, copy=True)
        ids.setflags(write=False)
        object.__setattr__(self, "ids", ids)

    @property
    def height(self) -> int:
        return self.ids.shape[0]

    @property
    def width(self) -> int:
        return self.ids.shape[1]

    def mask(self, entity_id: int) -> np.ndarray:
        return self.ids == entity_id


def point_set(points) -> np.ndarray:
    """Canonical form: int64, deduplicated, raster order."""
    pts = np.asarray(points, dtype=np.int64).reshape(-1, 2)
    if len(pts) == 0:
        return np.zeros((0, 2), dtype=np.int64)
    keys = np.unique(_keys(pts))
    return np.stack([keys % _KEY, keys // _KEY], axis=1)


def _keys(pts: np.ndarray) -> np.ndarray:
    return pts[:, 1].astype(np.int64) * _KEY + pts[:, 0].astype(np.int64)


def text_points(alpha: np.ndarray, stride: int = 1) -> np.ndarray:
    """Pixels with ``alpha > 0`` on the ``stride`` grid (stride 1 keeps all)."""
    if stride < 1:
        raise ValueError("stride must be >= 1")
    alpha = np.asarray(alpha)
    if alpha.ndim == 3:
        alpha = alpha[..., 3]
    grid = np.zeros(alpha.shape, dtype=bool)
    grid[::stride, ::stride] = True
    ys, xs = np.nonzero((alpha > 0) & grid)
    return np.stack([xs, ys], axis=1).astype(np.int64)


def sigma_band(values) -> np.ndarray:
    """``mu - sigma <= v <= mu + sigma``, decided exactly.

    Floats settle every value clearly inside or outside the band; values
    within rounding distance of an edge are re-decided in rational
    arithmetic, so points sitting exactly on ``mu +- sigma`` are kept.
    """
    v = np.asarray(values, dtype=float)
    if len(v) == 0:
        return np.zeros(0, dtype=bool)
    top = float(np.abs(v).max())
    if top == 0.0:
        return np.ones(len(v), dtype=bool)
    # power-of-two rescale is exact and keeps squares clear of underflow
    u = np.ldexp(v, -math.frexp(top)[1])
    mu, sigma = population_stats(u)
    dev = np.abs(u - mu)
    tol = 1e-9
    keep = dev <= sigma
    edge = np.abs(dev - sigma) <= tol
    if edge.any():
        q = [Fraction(float(x)) for x in v]
        mu_q = sum(q, Fraction(0)) / len(q)
        var_q = sum(((x - mu_q) ** 2 for x in q), Fraction(0)) / len(q)
        for i in np.flatnonzero(edge):
            keep[i] = (q[i] - mu_q) ** 2 <= var_q
    return keep


def flow_mask(magnitudes: np.ndarray, alive=None) -> np.ndarray:
    """Keep magnitudes inside ``[mu - sigma, mu + sigma]``; dead points never pass.

    Statistics are computed over the live points only.
    """
    magnitudes = np.asarray(magnitudes, dtype=float)
    keep = np.ones(len(magnitudes), dtype=bool) if alive is None else np.asarray(alive, bool).copy()
    if not keep.any():
        return keep
    keep[keep] = sigma_band(magnitudes[keep])
    return keep


def flow_constrained(points, magnitudes, alive=None) -> np.ndarray:
    """Subset of ``points`` whose displacement magnitude lies within one sigma of the mean."""
    points = np.asarray(points, dtype=np.int64).reshape(-1, 2)
    if len(points) == 0:
        return points
    if len(magnitudes) != len(points):
        raise InputContractError("one magnitude per point is required")
    return points[flow_mask(magnitudes, alive)]


def round_half_away(x: np.ndarray) -> np.ndarray:
    return (np.sign(x) * np.floor(np.abs(x) + 0.5)).astype(np.intp)


def segm_hits(positions: np.ndarray, alive: np.ndarray, segms: Sequence[SegmentationMap], entity_id: int) -> np.ndarray:
    """Per-step flag: point is alive and sits on ``entity_id`` (nearest pixel).

    ``positions`` is (S+1, N, 2), one row per frame in chaining order.
    """
    if len(segms) != len(positions):
        raise InputContractError(f"{len(positions)} trajectory steps but {len(segms)} segmentation maps")
    hits = np.zeros(alive.shape, dtype=bool)
    for i, segm in enumerate(segms):
        ok = alive[i]
        if not ok.any():
            continue
        px = round_half_away(positions[i, ok, 0])
        py = round_half_away(positions[i, ok, 1])
        inside = (px >= 0) & (px < segm.width) & (py >= 0) & (py < segm.height)
        on = np.zeros(len(px), dtype=bool)
        on[inside] = segm.ids[py[inside], px[inside]] == entity_id
        hits[i, ok] = on
    return hits


def segm_mask(positions, alive, segms, entity_id) -> np.ndarray:
    """Points on the entity at every step of their trajectory."""
    return segm_hits(np.asarray(positions, float), np.asarray(alive, bool), segms, entity_id).all(axis=0)


def segm_constrained(points, positions, alive, segms, entity_id) -> np.ndarray:
    points = np.asarray(points, dtype=np.int64).reshape(-1, 2)
    positions = np.asarray(positions, dtype=float)
    if positions.shape[1] != len(points):
        raise InputContractError("trajectories must align with points")
    return points[segm_mask(positions, alive, segms, entity_id)]


def intersect(a, b, c) -> np.ndarray:
    """Exact set intersection of three point sets, returned in canonical form."""
    ka = np.unique(_keys(np.asarray(a, np.int64).reshape(-1, 2)))
    kb = np.unique(_keys(np.asarray(b, np.int64).reshape(-1, 2)))
    kc = np.unique(_keys(np.asarray(c, np.int64).reshape(-1, 2)))
    keys = np.intersect1d(np.intersect1d(ka, kb, assume_unique=True), kc, assume_unique=True)
    return np.stack([keys % _KEY, keys // _KEY], axis=1) if len(keys) else np.zeros((0, 2), np.int64)
