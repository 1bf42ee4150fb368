"""Planar projective geometry: homographies, DLT estimation and RANSAC."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from .errors import (
    DegenerateError,
    FitFailedError,
    InsufficientDataError,
    PointAtInfinityError,
)

_INF_EPS = 1e-12


def normalize_matrix(m: np.ndarray) -> np.ndarray:
    """Canonical scale: divide by m22 when usable, else by the Frobenius norm."""
    m = np.asarray(m, dtype=float)
    if abs(m[2, 2]) > _INF_EPS:
        return m / m[2, 2]
    m = m / np.linalg.norm(m)
    # fix the sign so equal matrices compare equal
    flat = m.ravel()
    pivot = flat[np.argmax(np.abs(flat))]
    return m if pivot > 0 else -m


def _is_singular(m: np.ndarray) -> bool:
    scale = np.linalg.norm(m)
    if not np.isfinite(scale) or scale == 0.0:
        return True
    return abs(np.linalg.det(m / scale)) < 1e-12


@dataclass(frozen=True, eq=False)
class Homography:
    """Nonsingular 3x3 projective transform, stored in canonical scale."""

    m: np.ndarray

    def __post_init__(self):
        m = np.array(self.m, dtype=float)
        if m.shape != (3, 3) or not np.all(np.isfinite(m)):
            raise DegenerateError(f"homography must be a finite 3x3 matrix, got shape {m.shape}")
        if _is_singular(m):
            raise DegenerateError("homography matrix is singular")
        m = normalize_matrix(m)
        m.setflags(write=False)
        object.__setattr__(self, "m", m)

    @classmethod
    def identity(cls) -> "Homography":
        return cls(np.eye(3))

    @classmethod
    def translation(cls, tx: float, ty: float) -> "Homography":
        return cls(np.array([[1.0, 0.0, tx], [0.0, 1.0, ty], [0.0, 0.0, 1.0]]))

    def __matmul__(self, other: "Homography") -> "Homography":
        """Composition: ``(a @ b)(p) == a(b(p))``."""
        return Homography(self.m @ other.m)

    def __repr__(self):
        rows = ", ".join("[" + ", ".join(f"{v:.6g}" for v in row) + "]" for row in self.m)
        return f"Homography([{rows}])"

    def apply(self, p) -> Tuple[float, float]:
        return apply_homography(self, p)

    def apply_points(self, pts) -> np.ndarray:
        return apply_points(self, pts)

    def inverse(self) -> "Homography":
        return invert(self)

    def tolist(self):
        return self.m.tolist()


def apply_homography(h: Homography, p) -> Tuple[float, float]:
    """Map a single point through ``h``."""
    x, y = float(p[0]), float(p[1])
    m = h.m
    w = m[2, 0] * x + m[2, 1] * y + m[2, 2]
    if abs(w) < _INF_EPS:
        raise PointAtInfinityError(f"point ({x}, {y}) maps to infinity")
    return (
        (m[0, 0] * x + m[0, 1] * y + m[0, 2]) / w,
        (m[1, 0] * x + m[1, 1] * y + m[1, 2]) / w,
    )


def apply_points(h: Homography, pts) -> np.ndarray:
    """Vectorised :func:`apply_homography` over an (N, 2) array."""
    pts = np.asarray(pts, dtype=float).reshape(-1, 2)
    m = h.m
    w = pts @ m[2, :2] + m[2, 2]
    if np.any(np.abs(w) < _INF_EPS):
        raise PointAtInfinityError("at least one point maps to infinity")
    x = (pts @ m[0, :2] + m[0, 2]) / w
    y = (pts @ m[1, :2] + m[1, 2]) / w
    return np.stack([x, y], axis=1)


def _apply_unchecked(m: np.ndarray, pts: np.ndarray) -> np.ndarray:
    # scoring path: points at infinity become inf and simply fail the threshold
    w = pts @ m[2, :2] + m[2, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.stack([(pts @ m[0, :2] + m[0, 2]) / w, (pts @ m[1, :2] + m[1, 2]) / w], axis=1)
    out[~np.isfinite(out)] = np.inf
    return out


def invert(h: Homography) -> Homography:
    try:
        inv = np.linalg.inv(h.m)
    except np.linalg.LinAlgError as exc:
        raise DegenerateError("cannot invert a singular homography") from exc
    return Homography(inv)


@dataclass(frozen=True)
class Correspondence:
    src: Tuple[float, float]
    dst: Tuple[float, float]

    def __post_init__(self):
        if not (np.all(np.isfinite(self.src)) and np.all(np.isfinite(self.dst))):
            raise ValueError("correspondence points must be finite")


def _as_arrays(corrs) -> Tuple[np.ndarray, np.ndarray]:
    """Accept a list of Correspondence or a (src, dst) pair of (N, 2) arrays."""
    if isinstance(corrs, tuple) and len(corrs) == 2 and not isinstance(corrs[0], Correspondence):
        src, dst = (np.asarray(a, dtype=float).reshape(-1, 2) for a in corrs)
    else:
        corrs = list(corrs)
        src = np.array([c.src for c in corrs], dtype=float).reshape(-1, 2)
        dst = np.array([c.dst for c in corrs], dtype=float).reshape(-1, 2)
    if src.shape != dst.shape:
        raise InsufficientDataError("src and dst must hold the same number of points")
    return src, dst


def hartley_normalization(pts: np.ndarray) -> np.ndarray:
    """Similarity moving the centroid to the origin with mean distance sqrt(2)."""
    c = pts.mean(axis=0)
    d = np.sqrt(((pts - c) ** 2).sum(axis=1)).mean()
    if d <= 0.0 or not np.isfinite(d):
        raise DegenerateError("all points coincide")
    s = math.sqrt(2.0) / d
    return np.array([[s, 0.0, -s * c[0]], [0.0, s, -s * c[1]], [0.0, 0.0, 1.0]])


def _dlt_matrix(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    n = len(src)
    x, y = src[:, 0], src[:, 1]
    u, v = dst[:, 0], dst[:, 1]
    one, zero = np.ones(n), np.zeros(n)
    a = np.empty((2 * n, 9))
    a[0::2] = np.stack([x, y, one, zero, zero, zero, -u * x, -u * y, -u], axis=1)
    a[1::2] = np.stack([zero, zero, zero, x, y, one, -v * x, -v * y, -v], axis=1)
    return a


def estimate_dlt(corrs) -> Homography:
    """Least-squares homography mapping ``src`` onto ``dst``.

    Points are Hartley-normalised on both sides before solving ``A h = 0``
    by SVD; the result is denormalised and returned in canonical scale.
    """
    src, dst = _as_arrays(corrs)
    if len(src) < 4:
        raise InsufficientDataError(f"need at least 4 correspondences, got {len(src)}")
    t_src = hartley_normalization(src)
    t_dst = hartley_normalization(dst)
    src_n = src @ t_src[:2, :2].T + t_src[:2, 2]
    dst_n = dst @ t_dst[:2, :2].T + t_dst[:2, 2]
    a = _dlt_matrix(src_n, dst_n)
    _, s, vt = np.linalg.svd(a)
    if s[7] < 1e-9 * s[0]:
        raise DegenerateError("correspondence system is rank deficient")
    hn = vt[-1].reshape(3, 3)
    m = np.linalg.inv(t_dst) @ hn @ t_src
    return Homography(m)


@dataclass(frozen=True)
class RansacParams:
    inlier_threshold: float = 2.0
    max_iterations: int = 2000
    confidence: float = 0.995
    # None means max(8, N/4) for N correspondences
    min_inliers: Optional[int] = None
    refit_rounds: int = 10

    def __post_init__(self):
        if not self.inlier_threshold > 0:
            raise ValueError("inlier_threshold must be > 0")
        if not 0.0 < self.confidence < 1.0:
            raise ValueError("confidence must lie in (0, 1)")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.refit_rounds < 1:
            raise ValueError("refit_rounds must be >= 1")
        if self.min_inliers is not None and self.min_inliers < 4:
            raise ValueError("min_inliers must be >= 4")

    def resolved_min_inliers(self, n: int) -> int:
        if self.min_inliers is not None:
            return self.min_inliers
        return max(8, int(math.ceil(n / 4)))


def symmetric_transfer_distance(m: np.ndarray, src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """Mean of forward and backward reprojection distances, in pixels."""
    m_inv = np.linalg.inv(m)
    fwd = np.linalg.norm(_apply_unchecked(m, src) - dst, axis=1)
    bwd = np.linalg.norm(_apply_unchecked(m_inv, dst) - src, axis=1)
    d = 0.5 * (fwd + bwd)
    d[~np.isfinite(d)] = np.inf
    return d


def _has_collinear_triple(pts: np.ndarray, tol: float = 1.0) -> bool:
    p = pts.tolist()
    for i, j, k in ((0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)):
        a, b, c = p[i], p[j], p[k]
        # distance of each vertex from the line through the other two
        cross = abs((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
        longest = max(math.dist(a, b), math.dist(a, c), math.dist(b, c))
        if longest == 0.0 or cross / longest < tol:
            return True
    return False


def _iteration_bound(inlier_ratio: float, confidence: float, sample_size: int = 4) -> float:
    good = inlier_ratio ** sample_size
    if good >= 1.0:
        return 0.0
    if good <= 0.0:
        return math.inf
    return math.log(1.0 - confidence) / math.log(1.0 - good)


def ransac_homography(corrs, params: RansacParams = RansacParams(), rng=None):
    """Robustly fit ``src -> dst``; returns ``(Homography, inlier_flags)``.

    ``rng`` may be a ``numpy.random.Generator`` or an integer seed; the same
    seed always yields the same result.
    """
    src, dst = _as_arrays(corrs)
    n = len(src)
    min_inliers = params.resolved_min_inliers(n)
    if n < max(4, min_inliers):
        raise FitFailedError(f"{n} correspondences, need at least {max(4, min_inliers)}")
    rng = np.random.default_rng(rng)

    best_count = 0
    best_flags = None
    needed = math.inf
    it = 0
    while it < params.max_iterations and it < needed:
        it += 1
        idx = rng.choice(n, size=4, replace=False)
        s4, d4 = src[idx], dst[idx]
        if _has_collinear_triple(s4) or _has_collinear_triple(d4):
            continue
        try:
            h = estimate_dlt((s4, d4))
        except (DegenerateError, InsufficientDataError):
            continue
        flags = symmetric_transfer_distance(h.m, src, dst) < params.inlier_threshold
        count = int(flags.sum())
        if count > best_count:
            best_count, best_flags = count, flags
            needed = _iteration_bound(count / n, params.confidence)

    if best_flags is None or best_count < min_inliers:
        raise FitFailedError(f"best consensus {best_count} < required {min_inliers}")
    # refit on the consensus until it stops changing
    flags = best_flags
    for _ in range(params.refit_rounds):
        try:
            h = estimate_dlt((src[flags], dst[flags]))
        except DegenerateError as exc:
            raise FitFailedError("consensus set is degenerate") from exc
        new_flags = symmetric_transfer_distance(h.m, src, dst) < params.inlier_threshold
        if int(new_flags.sum()) < min_inliers:
            raise FitFailedError("refit lost consensus")
        if np.array_equal(new_flags, flags):
            break
        flags = new_flags
    return h, flags


def collinearity_residual(a, b, c) -> float:
    """Sine of the angle at ``a`` spanned by ``b`` and ``c`` (0 for collinear)."""
    ab = np.subtract(b, a)
    ac = np.subtract(c, a)
    cross = ab[0] * ac[1] - ab[1] * ac[0]
    return abs(float(cross)) / (float(np.hypot(*ab)) * float(np.hypot(*ac)))


def rotation_about(cx: float, cy: float, degrees: float) -> Homography:
    th = math.radians(degrees)
    c, s = math.cos(th), math.sin(th)
    return Homography(
        np.array(
            [
                [c, -s, cx - c * cx + s * cy],
                [s, c, cy - s * cx - c * cy],
                [0.0, 0.0, 1.0],
            ]
        )
    )


def quad_homography(src_quad: Sequence, dst_quad: Sequence) -> Homography:
    """Exact homography taking four corners onto four corners."""
    return estimate_dlt((np.asarray(src_quad, float), np.asarray(dst_quad, float)))
