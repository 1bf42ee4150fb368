"""Job reports (JSON + CSV + timeline figure) and preview overlays."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .io_formats import to_uint8, write_json  # noqa: E402

# no version string or timestamp in the PNG, so reruns are byte-identical
_PNG_META = {"Software": None}

CSV_COLUMNS = [
    "track_id", "transcription", "frame", "status", "sample_count", "visibility", "lost",
    "x1", "y1", "x2", "y2", "x3", "y3", "x4", "y4",
]


def tracks_csv(result) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for track, prop in zip(result.tracks, result.propagations):
        for e in track.frames:
            k = e.index - 1
            coords = [""] * 8 if e.quad is None else [f"{v:.2f}" for v in np.asarray(e.quad).ravel()]
            w.writerow([
                track.track_id, track.transcription, e.index, prop.status[k], prop.sample_counts[k],
                f"{e.visibility:.6f}", int(e.lost), *coords,
            ])
    return buf.getvalue()


def plot_timeline(result, path, min_samples: Optional[int] = None) -> None:
    """Per-track visibility and sample count against frame number."""
    fig, (ax_v, ax_s) = plt.subplots(2, 1, figsize=(7, 5), sharex=True)
    n = len(result.frames)
    x = np.arange(1, n + 1)
    for track, prop in zip(result.tracks, result.propagations):
        label = f"{track.track_id}: {track.transcription}"
        ax_v.plot(x, [e.visibility for e in track.frames], marker="o", label=label)
        ax_s.plot(x, prop.sample_counts, marker="s", label=label)
        lost = [e.index for e in track.frames if e.lost]
        if lost:
            ax_v.scatter(lost, [0.0] * len(lost), marker="x", color="k", zorder=3)
    if min_samples is not None:
        ax_s.axhline(min_samples, color="gray", ls="--", lw=1, label="N")
    ax_v.axvline(result.seed_index + 1, color="gray", ls=":", lw=1)
    ax_s.axvline(result.seed_index + 1, color="gray", ls=":", lw=1)
    ax_v.set_ylabel("visibility")
    ax_v.set_ylim(-0.05, 1.05)
    ax_s.set_ylabel("|S|")
    ax_s.set_xlabel("frame")
    ax_v.legend(fontsize=7, loc="lower left")
    ax_v.set_title(f"{result.video_id or 'video'} (seed frame {result.seed_index + 1})")
    fig.tight_layout()
    fig.savefig(path, dpi=80, metadata=_PNG_META)
    plt.close(fig)


def write_report(result, out_dir, min_samples: Optional[int] = None) -> None:
    out = Path(out_dir)
    write_json(result.report(), out / "report.json")
    if result.status != "ok":
        return
    (out / "tracks.csv").write_text(tracks_csv(result), encoding="utf-8")
    plot_timeline(result, out / "report.png", min_samples)


# ---------------------------------------------------------------------------
# preview


@dataclass
class Overlay:
    """What the preview draws on one frame."""

    frame: int  # 1-based
    quads: List[np.ndarray]  # tracked quads only
    lost: List[int]  # track ids lost on this frame
    samples: List[np.ndarray]  # fitted sample positions per tracked text
    flow_points: np.ndarray  # (M, 2) arrow tails
    flow_vectors: np.ndarray  # (M, 2)


def build_overlays(result, flows_fwd: Sequence, frames: Sequence[int], grid: int = 24) -> List[Overlay]:
    """Overlay specs for the 0-based ``frames``; flow arrows come from the forward field."""
    out = []
    n = len(result.frames)
    for k in frames:
        quads, lost, samples = [], [], []
        for track, prop in zip(result.tracks, result.propagations):
            e = track.frames[k]
            if e.lost:
                lost.append(track.track_id)
            else:
                quads.append(np.asarray(e.quad))
                samples.append(prop.sample_points[k])
        if k < n - 1 and flows_fwd:
            f = flows_fwd[k]
            ys, xs = np.mgrid[grid // 2 : f.height : grid, grid // 2 : f.width : grid]
            pts = np.stack([xs.ravel(), ys.ravel()], axis=1).astype(float)
            vec = f.data[ys.ravel(), xs.ravel()]
        else:
            pts, vec = np.zeros((0, 2)), np.zeros((0, 2))
        out.append(Overlay(k + 1, quads, lost, samples, pts, vec))
    return out


def render_overlay(frame: np.ndarray, ov: Overlay, path) -> None:
    h, w = frame.shape[:2]
    fig = plt.figure(figsize=(w / 100.0, h / 100.0), dpi=100)
    ax = fig.add_axes([0, 0, 1, 1])
    ax.imshow(to_uint8(frame), interpolation="nearest")
    if len(ov.flow_points):
        ax.quiver(
            ov.flow_points[:, 0], ov.flow_points[:, 1], ov.flow_vectors[:, 0], ov.flow_vectors[:, 1],
            color="cyan", angles="xy", scale_units="xy", scale=1.0, width=0.003,
        )
    for pts in ov.samples:
        if len(pts):
            ax.scatter(pts[:, 0], pts[:, 1], s=1, c="yellow", linewidths=0)
    for q in ov.quads:
        closed = np.vstack([q, q[:1]])
        ax.plot(closed[:, 0], closed[:, 1], color="red", lw=1)
    if ov.lost:
        ax.text(4, 14, "LOST " + ",".join(map(str, ov.lost)), color="red", fontsize=9, weight="bold")
    ax.set_xlim(-0.5, w - 0.5)
    ax.set_ylim(h - 0.5, -0.5)
    ax.axis("off")
    fig.savefig(path, dpi=100, metadata=_PNG_META)
    plt.close(fig)
