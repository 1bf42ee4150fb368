"""Flow-driven synthesis of scene-text tracking videos."""

from .compose import composite
from .flow import FlowField, chain, map_point
from .geometry import Homography, RansacParams, apply_homography, estimate_dlt, invert, ransac_homography
from .pipeline import JobResult, SynthesisJob, run
from .propagation import PropagationParams, TextMap, propagate_all, propagate_one, propagate_quad
from .sampling import SegmentationMap, flow_constrained, segm_constrained
from .scene_gen import SceneSpec, generate
from .seed_render import DepthMap, render_seed

__version__ = "0.1.0"

__all__ = [
    "DepthMap",
    "FlowField",
    "Homography",
    "JobResult",
    "PropagationParams",
    "RansacParams",
    "SceneSpec",
    "SegmentationMap",
    "SynthesisJob",
    "TextMap",
    "apply_homography",
    "chain",
    "composite",
    "estimate_dlt",
    "flow_constrained",
    "generate",
    "invert",
    "map_point",
    "propagate_all",
    "propagate_one",
    "propagate_quad",
    "ransac_homography",
    "render_seed",
    "run",
    "segm_constrained",
]
