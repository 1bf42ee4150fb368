import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flowtext.errors import InputContractError
from flowtext.flow import FlowField
from flowtext.geometry import Homography, invert
from flowtext.propagation import (
    FEW_SAMPLES,
    PropagationParams,
    TextMap,
    motion_blur,
    motion_blur_kernel,
    occlusion_mask,
    propagate_all,
    propagate_one,
    propagate_quad,
    warp_text_map,
)
from flowtext.sampling import SegmentationMap, text_points
from flowtext.scene_gen import SceneSpec, generate, relative_truth
from flowtext.seed_render import Placement, TextStyle, rasterize_text
from oracles import apply_scalar, smear_single_pixel

QUAD = np.array([[110, 100], [210, 100], [210, 130], [110, 130.0]])


def text_on(scene, seed, quad=QUAD, text="HELLO"):
    return rasterize_text(text, Placement(1, quad, 30.0), TextStyle(color=(0.9, 0.1, 0.1)), scene.frames[seed])


def corner_rms(h, seed_quad, truth):
    got = propagate_quad(seed_quad, h)
    want = truth.apply_points(seed_quad)
    return float(np.sqrt(np.mean(np.sum((got - want) ** 2, axis=1))))


# --- TextMap ---------------------------------------------------------------------


def test_text_map_alpha_range():
    bad = np.zeros((2, 2, 4))
    bad[0, 0, 3] = 1.5
    with pytest.raises(InputContractError):
        TextMap(bad)


# --- warp / mask / blur -------------------------------------------------------


def test_warp_identity_exact(rng):
    t = TextMap(rng.uniform(0, 1, size=(20, 30, 4)))
    assert np.array_equal(warp_text_map(t, Homography.identity()).rgba, t.rgba)


def test_warp_translation_shifts_layer(rng):
    t = TextMap(rng.uniform(0, 1, size=(20, 30, 4)))
    out = warp_text_map(t, Homography.translation(-5, -2))  # target -> seed
    assert np.allclose(out.rgba[2:, 5:], t.rgba[:-2, :-5])
    assert np.all(out.alpha[:2] == 0) and np.all(out.alpha[:, :5] == 0)


@given(seed=st.integers(0, 1000))
@settings(max_examples=30, deadline=None)
def test_warped_alpha_in_unit_range(seed):
    from conftest import random_homography

    rng = np.random.default_rng(seed)
    t = TextMap(rng.uniform(0, 1, size=(24, 32, 4)))
    out = warp_text_map(t, Homography(random_homography(rng, center=(16, 12))))
    assert out.alpha.min() >= 0.0 and out.alpha.max() <= 1.0


def _alpha_oracle(alpha, m, x, y):
    sx, sy = apply_scalar(m, x, y)
    x0, y0 = math.floor(sx), math.floor(sy)
    acc = 0.0
    for dx, dy in ((0, 0), (1, 0), (0, 1), (1, 1)):
        px, py = x0 + dx, y0 + dy
        if 0 <= py < len(alpha) and 0 <= px < len(alpha[0]):
            acc += alpha[py][px] * (1 - abs(sx - px)) * (1 - abs(sy - py))
    return acc


@pytest.mark.parametrize("seed", range(5))
def test_warp_alpha_matches_scalar_oracle(seed):
    rng = np.random.default_rng(seed)
    rgba = np.zeros((30, 40, 4))
    rgba[10:18, 12:25] = rng.uniform(0, 1, size=(8, 13, 4))
    m = np.array([[1.0, 0.05, -3.0], [-0.04, 0.95, 2.0], [1e-3, -5e-4, 1.0]]) + rng.normal(0, 0.01, (3, 3)) * [[1, 1, 50], [1, 1, 50], [0.01, 0.01, 0]]
    out = warp_text_map(TextMap(rgba), Homography(m))
    alpha = rgba[..., 3].tolist()
    hm = Homography(m).m.tolist()
    for y in range(30):
        for x in range(40):
            assert out.alpha[y, x] == pytest.approx(_alpha_oracle(alpha, hm, x, y), abs=1e-9)


def test_occlusion_full_entity(rng):
    t = TextMap(rng.uniform(0, 1, size=(8, 8, 4)))
    assert np.array_equal(occlusion_mask(t, SegmentationMap(np.ones((8, 8), int)), 1).rgba, t.rgba)


def test_occlusion_entity_absent(rng):
    t = TextMap(rng.uniform(0, 1, size=(8, 8, 4)))
    out = occlusion_mask(t, SegmentationMap(np.zeros((8, 8), int)), 1)
    assert out.mass() == 0.0
    assert np.array_equal(out.rgb, t.rgb)


def test_occlusion_half_frame_pixel_scan():
    scene = generate(SceneSpec(), 0)
    t = text_on(scene, 0)
    ids = np.zeros((240, 320), int)
    ids[:, :160] = 1
    out = occlusion_mask(t, SegmentationMap(ids), 1)
    want = 0.0
    for y in range(240):
        for x in range(160):
            want += t.alpha[y, x]
    assert out.mass() == pytest.approx(want, rel=1e-12)


def test_blur_zero_velocity_identity(rng):
    t = TextMap(rng.uniform(0, 1, size=(10, 10, 4)))
    assert motion_blur(t, (0.0, 0.0), 0.25) is t


def test_blur_four_tap_smear():
    rgba = np.zeros((9, 15, 4))
    rgba[4, 7] = [0.2, 0.4, 0.6, 1.0]
    out = motion_blur(TextMap(rgba), (8.0, 0.0), 0.5)
    # L = 4 taps at offsets -1..2 along +x
    want = smear_single_pixel((9, 15), 7, 4, [(d, 0, 0.25) for d in (-1, 0, 1, 2)])
    assert np.abs(out.alpha - np.array(want)).max() < 1e-6
    assert np.count_nonzero(out.alpha) == 4
    assert np.allclose(out.rgb[4, 6:10], [0.2, 0.4, 0.6])


@given(a=st.floats(0, 2), vx=st.floats(-30, 30), vy=st.floats(-30, 30))
@settings(max_examples=100, deadline=None)
def test_kernel_mass_one(a, vx, vy):
    assert abs(motion_blur_kernel((vx, vy), a).sum() - 1.0) < 1e-9


def test_blur_preserves_mass(rng):
    rgba = np.zeros((40, 40, 4))
    rgba[15:25, 15:25] = rng.uniform(0, 1, size=(10, 10, 4))
    t = TextMap(rgba)
    out = motion_blur(t, (7.0, -5.0), 0.6)
    assert out.mass() == pytest.approx(t.mass(), abs=1e-6)


# --- propagate_quad -------------------------------------------------------------


def test_quad_identity():
    assert np.array_equal(propagate_quad(QUAD, Homography.identity()), QUAD)


def test_quad_translation():
    # stored direction is target -> seed, so a +12 px motion is translation(-12, 0)
    assert np.allclose(propagate_quad(QUAD, Homography.translation(-12, 0)), QUAD + [12, 0])


# --- propagate_one ----------------------------------------------------------------


def test_propagate_static_identity():
    scene = generate(SceneSpec(), 0)
    t = text_on(scene, 3)
    est = propagate_one(t, 3, 8, scene.flows_fwd, scene.flows_bwd, scene.segms, 1)
    assert np.abs(est.homography.m - np.eye(3)).max() < 1e-6
    assert np.abs(est.text_map.rgba - t.rgba).max() < 1e-6
    assert est.visibility == 1.0


def test_propagate_translation_four_ahead():
    scene = generate(SceneSpec(motion="translate", velocity=(3.0, 0.0)), 0)
    t = text_on(scene, 2)
    est = propagate_one(t, 2, 6, scene.flows_fwd, scene.flows_bwd, scene.segms, 1)
    # seed -> target is the inverse of the stored matrix
    fwd = invert(est.homography)
    assert np.abs(fwd.m - Homography.translation(12, 0).m).max() < 0.5
    assert np.abs(est.text_map.rgba[..., 3][:, 12:] - t.alpha[:, :-12]).max() < 2e-2
    shifted_rgb = est.text_map.rgb[:, 12:][t.alpha[:, :-12] > 0]
    assert np.abs(shifted_rgb - t.rgb[:, :-12][t.alpha[:, :-12] > 0]).max() < 2e-2


def test_propagate_entity_vanishes():
    scene = generate(SceneSpec(motion="translate"), 0)
    segms = list(scene.segms)
    segms[3] = SegmentationMap(np.zeros((240, 320), int))
    t = text_on(scene, 1)
    params = PropagationParams()
    est = propagate_one(t, 1, 4, scene.flows_fwd, scene.flows_bwd, segms, 1, params)
    assert est.lost and est.text_map.is_empty()
    assert est.sample_count <= params.min_samples
    assert est.status == FEW_SAMPLES


def test_propagate_bad_target():
    scene = generate(SceneSpec(n=3), 0)
    with pytest.raises(InputContractError):
        propagate_one(text_on(scene, 0), 0, 5, scene.flows_fwd, scene.flows_bwd, scene.segms, 1)


def test_propagate_missing_backward_flow():
    scene = generate(SceneSpec(n=4, motion="translate"), 0)
    with pytest.raises(InputContractError):
        propagate_one(text_on(scene, 2), 2, 0, scene.flows_fwd, [None] * 3, scene.segms, 1)


# --- propagate_all ----------------------------------------------------------------


def test_propagate_all_single_frame():
    scene = generate(SceneSpec(n=1), 0)
    t = text_on(scene, 0)
    res = propagate_all(t, 0, [], [], scene.segms, 1)
    assert len(res.text_maps) == 1 and res.text_maps[0] is t
    assert np.array_equal(res.homographies[0].m, np.eye(3))


def test_propagate_all_static():
    scene = generate(SceneSpec(), 0)
    t = text_on(scene, 4)
    res = propagate_all(t, 4, scene.flows_fwd, scene.flows_bwd, scene.segms, 1)
    assert not any(res.lost)
    for m in res.text_maps:
        assert np.abs(m.rgba - t.rgba).max() < 1e-6


def test_propagate_all_rotation_matches_truth():
    scene = generate(SceneSpec(motion="rotate", omega=2.0), 0)
    seed = 4
    t = text_on(scene, seed)
    res = propagate_all(t, seed, scene.flows_fwd, scene.flows_bwd, scene.segms, 1)
    assert not any(res.lost)
    for k, h in enumerate(res.homographies):
        assert corner_rms(h, QUAD, relative_truth(scene.truth, seed, k)) < 1.0


def test_lost_iff_no_homography_iff_empty_map():
    spec = SceneSpec(motion="translate", velocity=(4, 0), occluder=(60, 40, 280, 220), occluded_frames=(7,))
    scene = generate(spec, 0)
    t = text_on(scene, 2)
    res = propagate_all(t, 2, scene.flows_fwd, scene.flows_bwd, scene.segms, 1)
    assert any(res.lost)
    for lost, h, m in zip(res.lost, res.homographies, res.text_maps):
        assert lost == (h is None) == m.is_empty()


def test_few_samples_branch_tiny_text():
    scene = generate(SceneSpec(motion="translate"), 0)
    quad = np.array([[150, 110], [160, 110], [160, 118], [150, 118.0]])
    t = text_on(scene, 1, quad=quad, text="I")
    params = PropagationParams(min_samples=400)
    n_pts = len(text_points(t.alpha, params.stride))
    assert n_pts <= params.min_samples
    res = propagate_all(t, 1, scene.flows_fwd, scene.flows_bwd, scene.segms, 1, params)
    for k in range(scene.n):
        if k == 1:
            continue
        assert res.lost[k] and res.text_maps[k].is_empty() and res.sample_counts[k] <= 400


def test_ftfp_btfp_mirror_on_palindrome():
    spec = SceneSpec(n=11, motion="perspective", palindrome=True)
    scene = generate(spec, 0)
    seed = 5
    quad = np.array([[130, 105], [200, 105], [200, 135], [130, 135.0]])
    t = text_on(scene, seed, quad=quad)
    res = propagate_all(t, seed, scene.flows_fwd, scene.flows_bwd, scene.segms, 1)
    for d in range(1, 6):
        a, b = res.homographies[seed + d], res.homographies[seed - d]
        assert np.abs(a.m - b.m).max() < 1e-3


def test_deterministic_given_seed():
    spec = SceneSpec(motion="rotate", noise=0.5, outlier_fraction=0.3)
    scene = generate(spec, 3)
    t = text_on(scene, 4)
    a = propagate_all(t, 4, scene.flows_fwd, scene.flows_bwd, scene.segms, 1, PropagationParams(rng_seed=9))
    b = propagate_all(t, 4, scene.flows_fwd, scene.flows_bwd, scene.segms, 1, PropagationParams(rng_seed=9))
    for x, y in zip(a.text_maps, b.text_maps):
        assert np.array_equal(x.rgba, y.rgba)


def test_params_validation():
    with pytest.raises(ValueError):
        PropagationParams(min_samples=3)
    with pytest.raises(ValueError):
        PropagationParams(blur_alpha=-0.1)


def test_flow_field_dims_checked():
    scene = generate(SceneSpec(n=2), 0)
    with pytest.raises(InputContractError):
        propagate_all(text_on(scene, 0), 0, [FlowField.zeros(10, 10)], scene.flows_bwd, scene.segms, 1)
