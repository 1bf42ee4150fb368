"""Command-line driver: synth, preview, gen-testdata, validate.

Settings resolve as command-line flag, then config file, then built-in
default. Log verbosity comes from FLOWTEXT_LOG (error, warn, info, debug).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import zlib
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import List, Optional

from .errors import FlowTextError
from .geometry import RansacParams
from .io_formats import (
    AnnotationDoc,
    frame_name,
    load_dataset,
    validate_layout,
    write_annotations,
    write_frame,
    write_scene,
)
from .pipeline import SynthesisJob, run
from .propagation import PropagationParams
from .report import build_overlays, render_overlay, write_report
from .scene_gen import SceneSpec, generate

log = logging.getLogger("flowtext")

DEFAULT_WORDS = ["FLOW", "TEXT", "VIDEO", "FRAME", "SCENE", "TRACK", "OPEN", "EXIT", "CAFE", "HOTEL", "PARK", "STOP"]

# name: (type, default, range text, check)
SETTINGS = {
    "root": (str, None, "existing dataset directory", None),
    "out": (str, "out", "directory, created if missing", None),
    "words": (str, None, "UTF-8 file, one word per line; built-in list if unset", None),
    "num_texts": (int, 3, ">= 1", lambda v: v >= 1),
    "seed_frame": (int, None, "1..n; random if unset", lambda v: v >= 1),
    "min_samples": (int, 32, ">= 4", lambda v: v >= 4),
    "alpha": (float, 0.25, ">= 0", lambda v: v >= 0),
    "stride": (int, 2, ">= 1", lambda v: v >= 1),
    "rng_seed": (int, 0, ">= 0", lambda v: v >= 0),
    "jobs": (int, 1, ">= 1", lambda v: v >= 1),
    "ransac_threshold": (float, 2.0, "> 0 px", lambda v: v > 0),
    "ransac_iterations": (int, 2000, ">= 1", lambda v: v >= 1),
    "ransac_confidence": (float, 0.995, "(0, 1)", lambda v: 0 < v < 1),
}


class CliError(Exception):
    pass


def _setup_logging() -> None:
    level = {"error": logging.ERROR, "warn": logging.WARNING, "warning": logging.WARNING,
             "info": logging.INFO, "debug": logging.DEBUG}.get(os.environ.get("FLOWTEXT_LOG", "warn").lower(), logging.WARNING)
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s", force=True)


def _add_settings(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", metavar="PATH", help="PATH, default none; JSON object whose keys are the long flag names with underscores")
    for name, (typ, default, rng, _) in SETTINGS.items():
        flag = "--" + name.replace("_", "-")
        meta = {str: "PATH", int: "INT", float: "FLOAT"}[typ]
        shown = "unset" if default is None else default
        p.add_argument(flag, dest=name, type=typ, default=None, metavar=meta,
                       help=f"{meta}, default {shown}, range {rng}")


def resolve(args: argparse.Namespace) -> dict:
    """Merge flags over config file over defaults, then range-check."""
    conf = {}
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.is_file():
            raise CliError(f"config file not found: {path}")
        try:
            conf = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise CliError(f"{path}: invalid JSON ({exc})") from exc
        if not isinstance(conf, dict):
            raise CliError(f"{path}: config must be a JSON object")
        unknown = set(conf) - set(SETTINGS)
        if unknown:
            raise CliError(f"{path}: unknown keys {sorted(unknown)}")
    out = {}
    for name, (typ, default, rng, check) in SETTINGS.items():
        v = getattr(args, name, None)
        if v is None:
            v = conf.get(name, default)
        if v is not None:
            try:
                v = typ(v)
            except (TypeError, ValueError) as exc:
                raise CliError(f"{name}: cannot parse {v!r} as {typ.__name__}") from exc
            if check is not None and not check(v):
                raise CliError(f"{name}={v} outside allowed range {rng}")
        out[name] = v
    if out["root"] is None:
        raise CliError("--root is required (flag or config)")
    if not Path(out["root"]).is_dir():
        raise CliError(f"dataset root not found: {out['root']}")
    if out["words"] is not None and not Path(out["words"]).is_file():
        raise CliError(f"words file not found: {out['words']}")
    return out


def read_words(path: Optional[str]) -> List[str]:
    if path is None:
        return list(DEFAULT_WORDS)
    words = [w.strip() for w in Path(path).read_text(encoding="utf-8").splitlines()]
    words = [w for w in words if w]
    if not words:
        raise CliError(f"{path}: no words")
    return words


def video_roots(root: Path) -> List[Path]:
    """``root`` itself if it is a dataset, else its dataset subdirectories."""
    if (root / "frames").is_dir():
        return [root]
    subs = sorted(p for p in root.iterdir() if p.is_dir() and (p / "frames").is_dir())
    if not subs:
        raise CliError(f"{root}: no frames/ directory and no dataset subdirectories")
    return subs


def make_job(cfg: dict, root: Path, rng_seed: int) -> SynthesisJob:
    findings = validate_layout(root)
    if findings:
        raise CliError("; ".join(f.line() for f in findings))
    ds = load_dataset(root)
    seed_index = None
    if cfg["seed_frame"] is not None:
        if not 1 <= cfg["seed_frame"] <= ds.n:
            raise CliError(f"--seed-frame {cfg['seed_frame']} outside 1..{ds.n}")
        seed_index = cfg["seed_frame"] - 1
    ransac = RansacParams(
        inlier_threshold=cfg["ransac_threshold"],
        max_iterations=cfg["ransac_iterations"],
        confidence=cfg["ransac_confidence"],
    )
    params = PropagationParams(min_samples=cfg["min_samples"], blur_alpha=cfg["alpha"], stride=cfg["stride"], ransac=ransac)
    return SynthesisJob(
        frames=ds.frames,
        flows_fwd=ds.flows_fwd,
        flows_bwd=ds.flows_bwd,
        segms=ds.segms,
        depths=ds.depths,
        words=read_words(cfg["words"]),
        num_texts=cfg["num_texts"],
        params=params,
        rng_seed=rng_seed,
        seed_index=seed_index,
        video_id=ds.video_id,
    )


def _video_seed(cfg: dict, root: Path, multi: bool) -> int:
    # each video of a multi-video root gets its own stream, independent of --jobs
    if not multi:
        return cfg["rng_seed"]
    return (cfg["rng_seed"] * 1_000_003 + zlib.crc32(root.name.encode("utf-8"))) % 2**32


def synth_one(cfg: dict, root: Path, out: Path, multi: bool) -> str:
    job = make_job(cfg, root, _video_seed(cfg, root, multi))
    result = run(job)
    out.mkdir(parents=True, exist_ok=True)
    if result.status == "ok":
        (out / "frames_out").mkdir(exist_ok=True)
        for i, fr in enumerate(result.frames):
            write_frame(fr, out / "frames_out" / frame_name(i, ".png"))
        doc = AnnotationDoc(result.video_id, result.seed_index + 1, result.tracks)
        write_annotations(doc, out / "annotations.json")
    write_report(result, out, cfg["min_samples"])
    return result.status


def _synth_worker(task):
    cfg, root, out, multi = task
    _setup_logging()
    return synth_one(cfg, Path(root), Path(out), multi)


def cmd_synth(cfg: dict) -> int:
    root, out = Path(cfg["root"]), Path(cfg["out"])
    roots = video_roots(root)
    multi = roots != [root]
    tasks = [(cfg, str(r), str(out / r.name if multi else out), multi) for r in roots]
    if cfg["jobs"] > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=cfg["jobs"]) as pool:
            statuses = list(pool.map(_synth_worker, tasks))
    else:
        statuses = [synth_one(cfg, Path(r), Path(o), m) for _, r, o, m in tasks]
    for r, s in zip(roots, statuses):
        log.info("%s: %s", r, s)
    return 0


def parse_range(text: str, n: int):
    try:
        a, b = text.split(":")
        start, end = int(a) if a else 1, int(b) if b else n
    except ValueError as exc:
        raise CliError(f"--frames must look like START:END, got {text!r}") from exc
    if not 1 <= start <= end <= n:
        raise CliError(f"--frames {text} outside video range 1..{n}")
    return start, end


def cmd_preview(cfg: dict, frames: Optional[str]) -> int:
    root, out = Path(cfg["root"]), Path(cfg["out"])
    roots = video_roots(root)
    for r in roots:
        job = make_job(cfg, r, _video_seed(cfg, r, len(roots) > 1))
        start, end = parse_range(frames or ":", len(job.frames))
        result = run(job)
        dest = (out / r.name if len(roots) > 1 else out) / "preview_out"
        dest.mkdir(parents=True, exist_ok=True)
        if result.status != "ok":
            log.warning("%s: nothing to preview (%s)", r, result.reason)
            continue
        for ov in build_overlays(result, job.flows_fwd, range(start - 1, end)):
            render_overlay(result.frames[ov.frame - 1], ov, dest / frame_name(ov.frame - 1, ".png"))
    return 0


def cmd_gen_testdata(spec_path: str, out_dir: str, rng_seed: int) -> int:
    path = Path(spec_path)
    if not path.is_file():
        raise CliError(f"spec file not found: {path}")
    try:
        spec = SceneSpec.from_dict(json.loads(path.read_text(encoding="utf-8")))
    except (json.JSONDecodeError, TypeError, ValueError) as exc:
        raise CliError(f"{path}: invalid scene spec ({exc})") from exc
    scene = generate(spec, rng_seed)
    write_scene(scene, out_dir)
    return 0


def cmd_validate(root: str) -> int:
    findings = validate_layout(root)
    if not findings:
        print(f"OK: {root} satisfies the dataset layout contract", file=sys.stderr)
        return 0
    width = max(len(f.path) for f in findings)
    print(f"{'file':<{width}}  problem", file=sys.stderr)
    for f in findings:
        detail = f.problem
        if f.expected or f.actual:
            detail += f" [expected {f.expected}, actual {f.actual}]"
        print(f"{f.path:<{width}}  {detail}", file=sys.stderr)
    print(f"FAILED: {len(findings)} finding(s)", file=sys.stderr)
    return 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="flowtext", description="Synthesize text-tracking videos by flow-driven text propagation.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="render, propagate and annotate text for a dataset")
    _add_settings(p)

    p = sub.add_parser("preview", help="like synth, but draw quads, samples and flow into preview_out/")
    _add_settings(p)
    p.add_argument("--frames", metavar="START:END", help="START:END, default all frames, range 1-based inclusive within 1..n")

    p = sub.add_parser("gen-testdata", help="write a synthetic scene as a dataset layout plus truth.json")
    p.add_argument("spec", metavar="SPEC", help="PATH, JSON scene spec")
    p.add_argument("out_dir", metavar="OUT", help="PATH, output dataset directory")
    p.add_argument("--rng-seed", dest="rng_seed", type=int, default=0, metavar="INT", help="INT, default 0, range >= 0")

    p = sub.add_parser("validate", help="check a dataset directory against the layout contract")
    p.add_argument("root", metavar="ROOT", help="PATH, dataset directory")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        if args.command == "synth":
            return cmd_synth(resolve(args))
        if args.command == "preview":
            return cmd_preview(resolve(args), args.frames)
        if args.command == "gen-testdata":
            return cmd_gen_testdata(args.spec, args.out_dir, args.rng_seed)
        return cmd_validate(args.root)
    except (CliError, FlowTextError, OSError) as exc:
        print(f"flowtext {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
