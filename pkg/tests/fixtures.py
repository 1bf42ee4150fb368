"""Random valid fixtures and a corpus of malformed files for the readers."""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np
from PIL import Image

from flowtext.errors import ContentError, FormatError
from flowtext.io_formats import (
    FrameEntry,
    TrackAnnotation,
    read_annotations,
    read_depth,
    read_flo,
    read_frame,
    read_segm,
)


def random_tracks(rng, n_frames=None, n_tracks=None):
    n_frames = int(rng.integers(1, 12)) if n_frames is None else n_frames
    n_tracks = int(rng.integers(0, 4)) if n_tracks is None else n_tracks
    tracks = []
    for t in range(n_tracks):
        frames = []
        for k in range(n_frames):
            if rng.random() < 0.2:
                frames.append(FrameEntry(k + 1, None, 0.0, True))
            else:
                quad = np.round(rng.uniform(-50, 500, size=(4, 2)), 2)
                frames.append(FrameEntry(k + 1, quad, float(rng.uniform(0, 1)), False))
        word = "".join(chr(c) for c in rng.integers(0x41, 0x5B, size=int(rng.integers(1, 9))))
        tracks.append(TrackAnnotation(t + 1, word + ('"é' if t == 1 else ""), frames))
    return tracks


def _flo_bytes(w, h, data, magic=202021.25):
    return struct.pack("<f", magic) + struct.pack("<ii", w, h) + np.asarray(data, "<f4").tobytes()


def _pfm_bytes(header: bytes, data: np.ndarray):
    return header + np.asarray(data, "<f4").tobytes()


def malformed_corpus(root) -> list:
    """``(name, reader, path, expected_error)`` for every malformed fixture."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    items = []

    def add(name, reader, payload, err):
        p = root / name
        if isinstance(payload, Image.Image):
            payload.save(p, format="PNG")
        else:
            p.write_bytes(payload)
        items.append((name, reader, p, err))

    ok = np.zeros((2, 3, 2))
    add("magic_zero.flo", read_flo, _flo_bytes(3, 2, ok, magic=0.0), FormatError)
    add("magic_other.flo", read_flo, _flo_bytes(3, 2, ok, magic=1.0), FormatError)
    add("empty.flo", read_flo, b"", FormatError)
    add("short_header.flo", read_flo, struct.pack("<f", 202021.25) + b"\x01\x00", FormatError)
    add("truncated.flo", read_flo, _flo_bytes(3, 2, ok)[:-4], FormatError)
    add("trailing.flo", read_flo, _flo_bytes(3, 2, ok) + b"\x00" * 8, FormatError)
    add("negative_dims.flo", read_flo, _flo_bytes(-3, 2, ok), FormatError)
    add("zero_dims.flo", read_flo, _flo_bytes(0, 0, np.zeros(0)), FormatError)
    nan = ok.copy()
    nan[1, 2, 0] = np.nan
    add("nan.flo", read_flo, _flo_bytes(3, 2, nan), ContentError)
    inf = ok.copy()
    inf[0, 1, 1] = -np.inf
    add("inf.flo", read_flo, _flo_bytes(3, 2, inf), ContentError)

    d = np.ones((2, 3))
    add("bad_magic.pfm", read_depth, _pfm_bytes(b"P5\n3 2\n-1.0\n", d), FormatError)
    add("bad_dims.pfm", read_depth, _pfm_bytes(b"Pf\nx 2\n-1.0\n", d), FormatError)
    add("zero_scale.pfm", read_depth, _pfm_bytes(b"Pf\n3 2\n0\n", d), FormatError)
    add("truncated.pfm", read_depth, _pfm_bytes(b"Pf\n3 2\n-1.0\n", d)[:-2], FormatError)
    add("no_header.pfm", read_depth, b"Pf", FormatError)
    add("color.pfm", read_depth, _pfm_bytes(b"PF\n3 2\n-1.0\n", np.ones((2, 3, 3))), FormatError)
    add("zero_depth.pfm", read_depth, _pfm_bytes(b"Pf\n3 2\n-1.0\n", np.zeros((2, 3))), ContentError)
    neg = d.copy()
    neg[0, 0] = -2.0
    add("negative_depth.pfm", read_depth, _pfm_bytes(b"Pf\n3 2\n-1.0\n", neg), ContentError)
    nan_d = d.copy()
    nan_d[1, 1] = np.nan
    add("nan_depth.pfm", read_depth, _pfm_bytes(b"Pf\n3 2\n-1.0\n", nan_d), ContentError)

    add("rgb_segm.png", read_segm, Image.new("RGB", (3, 2)), FormatError)
    add("garbage_segm.png", read_segm, b"\x89PNG\r\n\x1a\nnot really", FormatError)
    add("empty_segm.png", read_segm, b"", FormatError)
    add("gray_frame.png", read_frame, Image.new("L", (3, 2)), FormatError)
    add("rgba_frame.png", read_frame, Image.new("RGBA", (3, 2)), FormatError)
    add("garbage_frame.png", read_frame, b"GIF89a....", FormatError)

    add("not_json.json", read_annotations, b"{video_id: 1", FormatError)
    add("wrong_keys.json", read_annotations, b'{"tracks": [], "video_id": "a", "seed_frame": 1}', FormatError)
    add("missing_key.json", read_annotations, b'{"video_id": "a", "seed_frame": 1}', FormatError)
    frame = '{"index": 1, "quad": %s, "visibility": %s, "lost": %s}'
    doc = '{"video_id": "a", "seed_frame": 1, "tracks": [{"track_id": 1, "transcription": "x", "frames": [%s]}]}'
    add("short_quad.json", read_annotations, (doc % (frame % ("[[0, 0], [1, 1]]", "1.0", "false"))).encode(), FormatError)
    add("lost_visible.json", read_annotations, (doc % (frame % ("null", "0.5", "true"))).encode(), FormatError)
    add("null_quad_tracked.json", read_annotations, (doc % (frame % ("null", "1.0", "false"))).encode(), FormatError)
    add("visibility_range.json", read_annotations, (doc % (frame % ("[[0,0],[1,0],[1,1],[0,1]]", "1.5", "false"))).encode(), FormatError)
    add("bad_utf8.json", read_annotations, b'{"video_id": "\xff"}', FormatError)
    return items
