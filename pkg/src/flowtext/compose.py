"""Alpha-over compositing of text layers onto frames."""

from __future__ import annotations

from typing import Sequence

import numpy as np


def composite(frame: np.ndarray, maps: Sequence) -> np.ndarray:
    """Lay ``maps`` over ``frame`` in order (later maps on top).

    ``frame`` is float RGB in [0, 1]; each map exposes ``rgba`` (H, W, 4).
    Pixels where every alpha is zero come back bit-identical.
    """
    out = np.array(frame, dtype=np.float64)
    for m in maps:
        rgba = m.rgba
        if rgba.shape[:2] != out.shape[:2]:
            raise ValueError("text map and frame dimensions differ")
        a = rgba[..., 3:4]
        hit = a[..., 0] > 0
        if not hit.any():
            continue
        blended = rgba[..., :3] * a + out * (1.0 - a)
        out[hit] = blended[hit]
    return np.clip(out, 0.0, 1.0)
