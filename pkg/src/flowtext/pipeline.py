"""End-to-end synthesis for one video: seed draw, render, propagate, composite, annotate."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .compose import composite
from .errors import InputContractError, PointAtInfinityError, RenderFailedError
from .flow import FlowField
from .io_formats import FrameEntry, TrackAnnotation
from .propagation import PropagationParams, PropagationResult, propagate_all, propagate_quad, with_seed
from .sampling import SegmentationMap
from .seed_render import DepthMap, PlacementParams, RenderedText, TextStyle, render_seed

__all__ = ["SynthesisJob", "JobResult", "run", "composite", "draw_seed_index", "track_seed"]

log = logging.getLogger(__name__)


@dataclass
class SynthesisJob:
    frames: Sequence[np.ndarray]  # float RGB in [0, 1]
    flows_fwd: Sequence[FlowField]
    flows_bwd: Sequence[FlowField]
    segms: Sequence[SegmentationMap]
    # one per frame, since the seed frame is not known up front
    depths: Sequence[DepthMap]
    words: Sequence[str]
    num_texts: int = 3
    params: PropagationParams = field(default_factory=PropagationParams)
    style: TextStyle = field(default_factory=TextStyle)
    placement: PlacementParams = field(default_factory=PlacementParams)
    rng_seed: int = 0
    seed_index: Optional[int] = None  # 0-based; None draws it
    video_id: str = ""
    workers: int = 1

    def check(self) -> None:
        n = len(self.frames)
        if n == 0:
            raise InputContractError("job has no frames")
        if len(self.flows_fwd) != n - 1 or len(self.flows_bwd) != n - 1:
            raise InputContractError(
                f"need {n - 1} forward and backward flows, got {len(self.flows_fwd)} and {len(self.flows_bwd)}"
            )
        if len(self.segms) != n or len(self.depths) != n:
            raise InputContractError(f"need {n} segmentation and depth maps")
        h, w = np.asarray(self.frames[0]).shape[:2]
        for i, fr in enumerate(self.frames):
            if np.asarray(fr).shape != (h, w, 3):
                raise InputContractError(f"frame {i + 1} has shape {np.asarray(fr).shape}, expected {(h, w, 3)}")
        for kind, seq in (("flow_fwd", self.flows_fwd), ("flow_bwd", self.flows_bwd), ("segm", self.segms), ("depth", self.depths)):
            for i, obj in enumerate(seq):
                if (obj.height, obj.width) != (h, w):
                    raise InputContractError(f"{kind} {i + 1} is {obj.width}x{obj.height}, frames are {w}x{h}")
        if not self.words:
            raise InputContractError("word list is empty")
        if self.num_texts < 1:
            raise InputContractError("num_texts must be >= 1")
        if self.seed_index is not None and not 0 <= self.seed_index < n:
            raise InputContractError(f"seed index {self.seed_index} outside 0..{n - 1}")


@dataclass
class JobResult:
    video_id: str
    status: str  # "ok" or "skipped"
    seed_index: int
    frames: List[np.ndarray]
    tracks: List[TrackAnnotation]
    rendered: List[RenderedText]
    propagations: List[PropagationResult]
    reason: str = ""

    def report(self) -> dict:
        lost = [sum(e.lost for e in t.frames) for t in self.tracks]
        return {
            "video_id": self.video_id,
            "status": self.status,
            "reason": self.reason,
            "n_frames": len(self.frames),
            "seed_frame": self.seed_index + 1,
            "placed": len(self.tracks),
            "lost_frames": int(sum(lost)),
            "tracks": [
                {
                    "track_id": t.track_id,
                    "transcription": t.transcription,
                    "entity_id": r.entity_id,
                    "lost_frames": n_lost,
                    "mean_visibility": round(float(np.mean([e.visibility for e in t.frames])), 6),
                }
                for t, r, n_lost in zip(self.tracks, self.rendered, lost)
            ],
        }


def draw_seed_index(n: int, rng) -> int:
    """Uniform seed frame, keeping ceil(n/10) frames clear at both ends for n >= 10."""
    margin = math.ceil(n / 10) if n >= 10 else 0
    return int(rng.integers(margin, n - margin))


def track_seed(rng_seed: int, track: int) -> int:
    """Independent RANSAC seed per text so tracks can run in any order."""
    return int(np.random.SeedSequence([rng_seed, track]).generate_state(1)[0])


def _annotate(track_id: int, rt: RenderedText, res: PropagationResult) -> TrackAnnotation:
    entries = []
    for k, h in enumerate(res.homographies):
        quad = None
        if h is not None:
            try:
                quad = propagate_quad(rt.placement.quad, h)
            except PointAtInfinityError:
                quad = None
            if quad is not None and not np.all(np.isfinite(quad)):
                quad = None
        if quad is None:
            entries.append(FrameEntry(index=k + 1, quad=None, visibility=0.0, lost=True))
        else:
            vis = float(min(1.0, max(0.0, res.visibility[k])))
            entries.append(FrameEntry(index=k + 1, quad=quad, visibility=vis, lost=False))
    return TrackAnnotation(track_id=track_id, transcription=rt.text, frames=entries)


def run(job: SynthesisJob) -> JobResult:
    job.check()
    n = len(job.frames)
    rng = np.random.default_rng(job.rng_seed)
    t = draw_seed_index(n, rng) if job.seed_index is None else job.seed_index
    k = min(job.num_texts, len(job.words))
    texts = [job.words[i] for i in rng.choice(len(job.words), size=k, replace=False)]
    frames = [np.asarray(f, dtype=np.float64) for f in job.frames]
    log.info("video %s: seed frame %d, texts %s", job.video_id or "?", t + 1, texts)

    try:
        _, rendered = render_seed(frames[t], texts, job.segms[t], job.depths[t], rng, job.style, job.placement)
    except RenderFailedError as exc:
        log.warning("video %s skipped: %s", job.video_id or "?", exc)
        return JobResult(job.video_id, "skipped", t, [], [], [], [], reason=str(exc))

    def prop(i: int) -> PropagationResult:
        rt = rendered[i]
        params = with_seed(job.params, track_seed(job.rng_seed, i))
        return propagate_all(rt.text_map, t, job.flows_fwd, job.flows_bwd, job.segms, rt.entity_id, params)

    if job.workers > 1 and len(rendered) > 1:
        with ThreadPoolExecutor(max_workers=job.workers) as pool:
            results = list(pool.map(prop, range(len(rendered))))
    else:
        results = [prop(i) for i in range(len(rendered))]

    out_frames = [composite(frames[i], [r.text_maps[i] for r in results]) for i in range(n)]
    tracks = [_annotate(i + 1, rt, res) for i, (rt, res) in enumerate(zip(rendered, results))]
    return JobResult(job.video_id, "ok", t, out_frames, tracks, rendered, results)

