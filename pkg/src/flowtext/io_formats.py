"""Readers and writers for every on-disk artifact.

Dataset layout (one video per root)::

    root/frames/000001.png     8-bit RGB
    root/segm/000001.png       16-bit single-channel instance ids
    root/depth/000001.pfm      little-endian PFM, positive reals
    root/flow_fwd/000001.flo   frame 1 -> frame 2 (named by the earlier frame)
    root/flow_bwd/000001.flo   frame 2 -> frame 1

Frame numbers start at 000001 and are contiguous.
"""

from __future__ import annotations

import json
import re
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

import numpy as np
from PIL import Image

from .errors import ContentError, FormatError, InputContractError
from .flow import FlowField
from .geometry import Homography
from .sampling import SegmentationMap
from .seed_render import DepthMap

FLO_MAGIC = 202021.25
STREAMS = ("frames", "segm", "depth", "flow_fwd", "flow_bwd")
_SUFFIX = {"frames": ".png", "segm": ".png", "depth": ".pfm", "flow_fwd": ".flo", "flow_bwd": ".flo"}
_NAME = re.compile(r"^(\d{6})\.(png|pfm|flo)$")


def frame_name(index: int, suffix: str) -> str:
    """File name for 0-based ``index``."""
    return f"{index + 1:06d}{suffix}"


# ---------------------------------------------------------------------------
# Middlebury .flo


def read_flo(path) -> FlowField:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < 12:
        raise FormatError(f"{path}: truncated header ({len(raw)} bytes)")
    (magic,) = struct.unpack("<f", raw[:4])
    if magic != FLO_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {FLO_MAGIC}")
    width, height = struct.unpack("<ii", raw[4:12])
    if width <= 0 or height <= 0:
        raise FormatError(f"{path}: invalid dimensions {width}x{height}")
    expected = 12 + 8 * width * height
    if len(raw) != expected:
        raise FormatError(f"{path}: {len(raw)} bytes, expected {expected} for {width}x{height}")
    data = np.frombuffer(raw, dtype="<f4", offset=12).reshape(height, width, 2)
    bad = ~np.isfinite(data)
    if bad.any():
        y, x, c = np.argwhere(bad)[0]
        raise ContentError(f"{path}: non-finite flow component {'uv'[c]} at pixel (x={x}, y={y})")
    return FlowField(data.astype(np.float64))


def write_flo(field_: FlowField, path) -> None:
    data = np.asarray(field_.data if isinstance(field_, FlowField) else field_)
    if data.ndim != 3 or data.shape[2] != 2:
        raise InputContractError(f"flow must be (H, W, 2), got {data.shape}")
    data32 = data.astype("<f4")
    bad = ~np.isfinite(data32)
    if bad.any():
        y, x, c = np.argwhere(bad)[0]
        raise ContentError(f"refusing to write non-finite flow component {'uv'[c]} at pixel (x={x}, y={y})")
    h, w = data.shape[:2]
    with open(path, "wb") as f:
        f.write(struct.pack("<f", FLO_MAGIC))
        f.write(struct.pack("<ii", w, h))
        f.write(data32.tobytes())


# ---------------------------------------------------------------------------
# PFM depth


def write_pfm(depth, path) -> None:
    d = np.asarray(depth.depth if isinstance(depth, DepthMap) else depth)
    if d.ndim != 2:
        raise InputContractError(f"depth must be 2-D, got {d.shape}")
    d32 = d.astype("<f4")
    if not np.all(np.isfinite(d32)) or (d32.size and d32.min() <= 0):
        raise ContentError("depth values must be finite and > 0")
    h, w = d.shape
    with open(path, "wb") as f:
        f.write(f"Pf\n{w} {h}\n-1.0\n".encode("ascii"))
        # PFM stores rows bottom to top
        f.write(np.ascontiguousarray(d32[::-1]).tobytes())


def read_pfm(path) -> np.ndarray:
    path = Path(path)
    raw = path.read_bytes()
    parts = raw.split(b"\n", 3)
    if len(parts) < 4 or parts[0] not in (b"Pf", b"PF"):
        raise FormatError(f"{path}: not a PFM file")
    channels = 1 if parts[0] == b"Pf" else 3
    try:
        w, h = (int(v) for v in parts[1].split())
        scale = float(parts[2])
    except ValueError as exc:
        raise FormatError(f"{path}: malformed PFM header") from exc
    if w <= 0 or h <= 0 or scale == 0:
        raise FormatError(f"{path}: malformed PFM header")
    body = parts[3]
    if len(body) != 4 * w * h * channels:
        raise FormatError(f"{path}: {len(body)} data bytes, expected {4 * w * h * channels}")
    dtype = "<f4" if scale < 0 else ">f4"
    data = np.frombuffer(body, dtype=dtype).reshape(h, w, channels)[::-1]
    return data[..., 0] if channels == 1 else data


def read_depth(path) -> DepthMap:
    data = read_pfm(path)
    if data.ndim != 2:
        raise FormatError(f"{path}: depth must be single-channel (Pf)")
    bad = ~np.isfinite(data) | (data <= 0)
    if bad.any():
        y, x = np.argwhere(bad)[0]
        raise ContentError(f"{path}: invalid depth {data[y, x]!r} at pixel (x={x}, y={y})")
    return DepthMap(data.astype(np.float64))


def write_depth(depth: DepthMap, path) -> None:
    write_pfm(depth, path)


# ---------------------------------------------------------------------------
# segmentation and frames


def write_segm(segm, path) -> None:
    ids = np.asarray(segm.ids if isinstance(segm, SegmentationMap) else segm)
    if ids.size and (ids.min() < 0 or ids.max() > 65535):
        raise ContentError("instance ids must fit in 16 bits (0..65535)")
    Image.fromarray(ids.astype(np.uint16)).save(path, format="PNG")


def read_segm(path) -> SegmentationMap:
    path = Path(path)
    try:
        with Image.open(path) as img:
            img.load()
            if img.mode not in ("I;16", "I;16B", "I;16L", "I", "L"):
                raise FormatError(f"{path}: segmentation must be single-channel, got mode {img.mode}")
            ids = np.array(img)
    except (OSError, SyntaxError) as exc:
        raise FormatError(f"{path}: cannot decode image ({exc})") from exc
    if ids.size and (ids.min() < 0 or ids.max() > 65535):
        raise ContentError(f"{path}: ids outside 0..65535")
    return SegmentationMap(ids.astype(np.int64))


def to_uint8(frame: np.ndarray) -> np.ndarray:
    return np.rint(np.clip(np.asarray(frame, dtype=np.float64), 0.0, 1.0) * 255.0).astype(np.uint8)


def write_frame(frame: np.ndarray, path) -> None:
    """Float RGB in [0, 1] (or uint8) to an 8-bit RGB PNG."""
    arr = np.asarray(frame)
    if arr.dtype != np.uint8:
        arr = to_uint8(arr)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise InputContractError(f"frame must be (H, W, 3), got {arr.shape}")
    Image.fromarray(arr, mode="RGB").save(path, format="PNG")


def read_frame(path) -> np.ndarray:
    """8-bit RGB PNG to float RGB in [0, 1]."""
    path = Path(path)
    try:
        with Image.open(path) as img:
            img.load()
            if img.mode != "RGB":
                raise FormatError(f"{path}: frame must be 8-bit RGB, got mode {img.mode}")
            arr = np.array(img)
    except (OSError, SyntaxError) as exc:
        raise FormatError(f"{path}: cannot decode image ({exc})") from exc
    return arr.astype(np.float64) / 255.0


# ---------------------------------------------------------------------------
# annotations


def _num(v: float) -> str:
    s = f"{v:.2f}"
    return "0.00" if s == "-0.00" else s


def dumps_annotations(video_id: str, seed_frame: int, tracks) -> str:
    """JSON text with a fixed key order and 2-decimal coordinates.

    ``tracks`` items expose ``track_id``, ``transcription`` and ``frames``;
    frame entries expose ``index``, ``quad`` (None when lost),
    ``visibility`` and ``lost``.
    """
    lines = ["{", f'  "video_id": {json.dumps(video_id)},', f'  "seed_frame": {int(seed_frame)},']
    if not tracks:
        lines.append('  "tracks": []')
    else:
        lines.append('  "tracks": [')
        tracks = sorted(tracks, key=lambda t: t.track_id)
        for ti, t in enumerate(tracks):
            lines.append("    {")
            lines.append(f'      "track_id": {int(t.track_id)},')
            lines.append(f'      "transcription": {json.dumps(t.transcription, ensure_ascii=False)},')
            lines.append('      "frames": [')
            for fi, e in enumerate(t.frames):
                if e.quad is None:
                    quad = "null"
                else:
                    quad = "[" + ", ".join(f"[{_num(x)}, {_num(y)}]" for x, y in np.asarray(e.quad)) + "]"
                vis = json.dumps(round(float(e.visibility), 6))
                lost = "true" if e.lost else "false"
                sep = "," if fi < len(t.frames) - 1 else ""
                lines.append(
                    f'        {{"index": {int(e.index)}, "quad": {quad}, "visibility": {vis}, "lost": {lost}}}{sep}'
                )
            lines.append("      ]")
            lines.append("    }" + ("," if ti < len(tracks) - 1 else ""))
        lines.append("  ]")
    lines.append("}")
    return "\n".join(lines) + "\n"


def write_annotations(annotations, path, video_id: str = "", seed_frame: int = 0) -> None:
    """``annotations`` is either a list of tracks or an :class:`AnnotationDoc`."""
    if isinstance(annotations, AnnotationDoc):
        video_id, seed_frame, tracks = annotations.video_id, annotations.seed_frame, annotations.tracks
    else:
        tracks = annotations
    Path(path).write_text(dumps_annotations(video_id, seed_frame, tracks), encoding="utf-8")


@dataclass
class FrameEntry:
    index: int  # 1-based frame number
    quad: Optional[np.ndarray]  # None when lost
    visibility: float
    lost: bool

    def __post_init__(self):
        if not 0.0 <= self.visibility <= 1.0:
            raise ValueError(f"visibility {self.visibility} outside [0, 1]")
        if self.lost:
            if self.visibility != 0.0:
                raise ValueError("a lost frame must have visibility 0")
        elif self.quad is None or not np.all(np.isfinite(self.quad)):
            raise ValueError(f"frame {self.index}: tracked frame needs a finite quad")


@dataclass
class TrackAnnotation:
    track_id: int
    transcription: str
    frames: List[FrameEntry] = field(default_factory=list)


@dataclass
class AnnotationDoc:
    video_id: str
    seed_frame: int  # 1-based
    tracks: List[TrackAnnotation]


def read_annotations(path) -> AnnotationDoc:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})") from exc
    try:
        if list(doc) != ["video_id", "seed_frame", "tracks"]:
            raise FormatError(f"{path}: top-level keys must be video_id, seed_frame, tracks")
        tracks = []
        for t in doc["tracks"]:
            frames = []
            for e in t["frames"]:
                quad = None if e["quad"] is None else np.asarray(e["quad"], dtype=float).reshape(4, 2)
                frames.append(FrameEntry(int(e["index"]), quad, float(e["visibility"]), bool(e["lost"])))
            tracks.append(TrackAnnotation(int(t["track_id"]), str(t["transcription"]), frames))
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{path}: malformed annotation document ({exc!r})") from exc
    return AnnotationDoc(str(doc["video_id"]), int(doc["seed_frame"]), tracks)


# ---------------------------------------------------------------------------
# truth homographies and JSON helpers


def write_truth(truth, path) -> None:
    doc = {"frames": [{"index": i + 1, "homography": h.m.tolist()} for i, h in enumerate(truth)]}
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def read_truth(path) -> List[Homography]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    return [Homography(np.array(f["homography"], dtype=float)) for f in doc["frames"]]


def write_json(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=False) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# dataset layout


@dataclass
class Finding:
    path: str
    problem: str
    expected: str = ""
    actual: str = ""

    def line(self) -> str:
        extra = ""
        if self.expected or self.actual:
            extra = f" (expected {self.expected}, got {self.actual})"
        return f"{self.path}: {self.problem}{extra}"


@dataclass
class Dataset:
    root: Path
    frames: List[np.ndarray]
    flows_fwd: List[FlowField]
    flows_bwd: List[FlowField]
    segms: List[SegmentationMap]
    depths: List[DepthMap]

    @property
    def n(self) -> int:
        return len(self.frames)

    @property
    def video_id(self) -> str:
        return self.root.name


def _numbered(directory: Path, suffix: str) -> List[int]:
    out = []
    for p in directory.iterdir():
        m = _NAME.match(p.name)
        if m and p.suffix == suffix:
            out.append(int(m.group(1)))
    return sorted(out)


def _image_size(path: Path):
    with Image.open(path) as img:
        return img.size  # (w, h)


def validate_layout(root) -> List[Finding]:
    """Every contract violation found under ``root``; empty means valid."""
    root = Path(root)
    findings: List[Finding] = []
    if not root.is_dir():
        return [Finding(str(root), "dataset root is not a directory")]
    present = {}
    for stream in STREAMS:
        d = root / stream
        if not d.is_dir():
            findings.append(Finding(str(d), f"missing stream directory (layout contract: root must contain {', '.join(STREAMS)})"))
            present[stream] = None
        else:
            present[stream] = _numbered(d, _SUFFIX[stream])
    frames = present["frames"]
    if frames is None:
        return findings
    n = len(frames)
    if n == 0:
        findings.append(Finding(str(root / "frames"), "no frames found"))
        return findings
    if frames != list(range(1, n + 1)):
        findings.append(
            Finding(str(root / "frames"), "frame numbers must be contiguous from 000001", f"1..{n}", f"{frames[:3]}...")
        )
    expected = {"frames": n, "segm": n, "depth": n, "flow_fwd": n - 1, "flow_bwd": n - 1}
    for stream in STREAMS[1:]:
        got = present[stream]
        if got is None:
            continue
        want = list(range(1, expected[stream] + 1))
        for i in sorted(set(want) - set(got)):
            contract = "every adjacent frame pair needs both flow files" if stream.startswith("flow") else "one file per frame"
            findings.append(Finding(str(root / stream / f"{i:06d}{_SUFFIX[stream]}"), f"missing file (layout contract: {contract})"))
        for i in sorted(set(got) - set(want)):
            findings.append(Finding(str(root / stream / f"{i:06d}{_SUFFIX[stream]}"), "unexpected extra file"))

    size = None
    for i in frames:
        p = root / "frames" / f"{i:06d}.png"
        try:
            arr = read_frame(p)
        except (FormatError, ContentError) as exc:
            findings.append(Finding(str(p), f"undecodable: {exc}"))
            continue
        wh = (arr.shape[1], arr.shape[0])
        if size is None:
            size = wh
        elif wh != size:
            findings.append(Finding(str(p), "frame dimensions differ", f"{size[0]}x{size[1]}", f"{wh[0]}x{wh[1]}"))
    readers = {"segm": read_segm, "depth": read_depth, "flow_fwd": read_flo, "flow_bwd": read_flo}
    for stream, reader in readers.items():
        for i in present[stream] or []:
            p = root / stream / f"{i:06d}{_SUFFIX[stream]}"
            try:
                obj = reader(p)
            except (FormatError, ContentError, InputContractError) as exc:
                findings.append(Finding(str(p), f"undecodable: {exc}"))
                continue
            wh = (obj.width, obj.height)
            if size is not None and wh != size:
                findings.append(Finding(str(p), "dimensions differ from frames", f"{size[0]}x{size[1]}", f"{wh[0]}x{wh[1]}"))
    return findings


def load_dataset(root) -> Dataset:
    """Read and cross-check a whole layout; the first violation raises."""
    root = Path(root)
    findings = validate_layout(root)
    if findings:
        raise InputContractError(findings[0].line())
    n = len(_numbered(root / "frames", ".png"))
    frames = [read_frame(root / "frames" / frame_name(i, ".png")) for i in range(n)]
    segms = [read_segm(root / "segm" / frame_name(i, ".png")) for i in range(n)]
    depths = [read_depth(root / "depth" / frame_name(i, ".pfm")) for i in range(n)]
    fwd = [read_flo(root / "flow_fwd" / frame_name(i, ".flo")) for i in range(n - 1)]
    bwd = [read_flo(root / "flow_bwd" / frame_name(i, ".flo")) for i in range(n - 1)]
    return Dataset(root, frames, fwd, bwd, segms, depths)


def write_dataset(root, frames, flows_fwd, flows_bwd, segms, depths) -> None:
    root = Path(root)
    for stream in STREAMS:
        (root / stream).mkdir(parents=True, exist_ok=True)
    for i, fr in enumerate(frames):
        write_frame(fr, root / "frames" / frame_name(i, ".png"))
    for i, s in enumerate(segms):
        write_segm(s, root / "segm" / frame_name(i, ".png"))
    for i, d in enumerate(depths):
        write_depth(d, root / "depth" / frame_name(i, ".pfm"))
    for i, f in enumerate(flows_fwd):
        write_flo(f, root / "flow_fwd" / frame_name(i, ".flo"))
    for i, f in enumerate(flows_bwd):
        write_flo(f, root / "flow_bwd" / frame_name(i, ".flo"))


def write_scene(scene, root) -> None:
    """Emit a generated scene as a dataset layout plus ``truth.json``."""
    write_dataset(root, scene.frames, scene.flows_fwd, scene.flows_bwd, scene.segms, scene.depths)
    write_truth(scene.truth, Path(root) / "truth.json")
