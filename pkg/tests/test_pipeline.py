import numpy as np
import pytest

from flowtext.compose import composite
from flowtext.errors import InputContractError
from flowtext.pipeline import SynthesisJob, draw_seed_index, run
from flowtext.propagation import PropagationParams, TextMap
from flowtext.scene_gen import SceneSpec, generate
from flowtext.seed_render import render_seed
from oracles import over

WORDS = ["HELLO", "WORLD", "FLOW"]


def job_for(scene, **kw):
    return SynthesisJob(scene.frames, scene.flows_fwd, scene.flows_bwd, scene.segms, scene.depths, kw.pop("words", WORDS), **kw)


# --- composite ------------------------------------------------------------------------


def test_composite_no_maps(rng):
    frame = rng.uniform(0, 1, size=(5, 6, 3))
    assert np.array_equal(composite(frame, []), frame)


def test_composite_opaque(rng):
    frame = rng.uniform(0, 1, size=(5, 6, 3))
    rgba = np.zeros((5, 6, 4))
    rgba[1:3, 2:4] = [0.1, 0.7, 0.3, 1.0]
    out = composite(frame, [TextMap(rgba)])
    assert np.array_equal(out[1:3, 2:4], np.broadcast_to([0.1, 0.7, 0.3], (2, 2, 3)))
    mask = np.ones((5, 6), bool)
    mask[1:3, 2:4] = False
    assert np.array_equal(out[mask], frame[mask])


def test_composite_two_half_transparent_over_oracle():
    frame = np.full((1, 1, 3), 0.2)
    a = np.array([[[0.9, 0.1, 0.5, 0.5]]])
    b = np.array([[[0.3, 0.8, 0.0, 0.5]]])
    out = composite(frame, [TextMap(a), TextMap(b)])
    want = over([0.3, 0.8, 0.0], 0.5, over([0.9, 0.1, 0.5], 0.5, [0.2, 0.2, 0.2]))
    assert out[0, 0].tolist() == pytest.approx(want, abs=1e-12)


def test_composite_dims():
    with pytest.raises(ValueError):
        composite(np.zeros((2, 2, 3)), [TextMap(np.zeros((3, 3, 4)))])


# --- run ----------------------------------------------------------------------------


def test_seed_draw_excludes_ends():
    rng = np.random.default_rng(0)
    draws = {draw_seed_index(10, rng) for _ in range(500)}
    assert draws == set(range(1, 9))
    assert {draw_seed_index(25, rng) for _ in range(2000)} == set(range(3, 22))
    assert {draw_seed_index(4, rng) for _ in range(200)} == {0, 1, 2, 3}


def test_single_frame_job_matches_render_seed():
    scene = generate(SceneSpec(n=1), 0)
    res = run(job_for(scene, num_texts=2))
    rng = np.random.default_rng(0)
    assert rng.integers(0, 1) == 0  # the seed draw consumes one value
    texts = [WORDS[i] for i in rng.choice(3, size=2, replace=False)]
    seed_out, rendered = render_seed(scene.frames[0], texts, scene.segms[0], scene.depths[0], rng)
    assert np.array_equal(res.frames[0], seed_out)
    assert [t.transcription for t in res.tracks] == [r.text for r in rendered]
    assert all(len(t.frames) == 1 for t in res.tracks)


def test_static_scene_identical_quads():
    scene = generate(SceneSpec(), 0)
    res = run(job_for(scene, num_texts=1))
    (track,) = res.tracks
    assert len(track.frames) == 10 and [e.index for e in track.frames] == list(range(1, 11))
    q0 = np.round(track.frames[0].quad, 2)
    for e in track.frames:
        assert not e.lost and e.visibility == 1.0
        assert np.array_equal(np.round(e.quad, 2), q0)


def test_occlusion_scene_follows_timeline():
    spec = SceneSpec(motion="translate", velocity=(2.0, 0.0), occluder=(40, 30, 290, 210), occluded_frames=(5, 6, 7))
    scene = generate(spec, 0)
    params = PropagationParams()
    res = run(job_for(scene, num_texts=1, seed_index=2, params=params))
    (track,) = res.tracks
    counts = res.propagations[0].sample_counts
    for e in track.frames:
        k = e.index - 1
        if k in spec.occluded_frames:
            assert e.lost and e.visibility == 0.0
        elif k != 2:
            # tracked iff the sample set is larger than N
            assert e.lost == (counts[k] <= params.min_samples)
    assert not any(track.frames[k].lost for k in range(5))


def test_pixels_without_text_untouched():
    scene = generate(SceneSpec(motion="rotate"), 0)
    res = run(job_for(scene, num_texts=2))
    for k, out in enumerate(res.frames):
        covered = np.zeros(out.shape[:2], bool)
        for p in res.propagations:
            covered |= p.text_maps[k].alpha > 0
        assert np.array_equal(out[~covered], scene.frames[k][~covered])


def test_annotation_invariants():
    spec = SceneSpec(motion="translate", velocity=(4, 0), occluder=(0, 0, 319, 239), occluded_frames=(8,))
    scene = generate(spec, 0)
    res = run(job_for(scene, num_texts=3, seed_index=3))
    assert len(res.tracks) == len(res.rendered)
    for t in res.tracks:
        assert [e.index for e in t.frames] == list(range(1, scene.n + 1))
        for e in t.frames:
            assert 0.0 <= e.visibility <= 1.0
            if e.lost:
                assert e.visibility == 0.0 and e.quad is None
            else:
                assert np.all(np.isfinite(e.quad))
    assert res.tracks[0].frames[8].lost


def test_run_deterministic():
    scene = generate(SceneSpec(motion="perspective", noise=0.3, outlier_fraction=0.2), 1)
    a, b = run(job_for(scene, rng_seed=5)), run(job_for(scene, rng_seed=5))
    assert all(np.array_equal(x, y) for x, y in zip(a.frames, b.frames))
    for ta, tb in zip(a.tracks, b.tracks):
        for ea, eb in zip(ta.frames, tb.frames):
            assert ea.lost == eb.lost and ea.visibility == eb.visibility
            assert (ea.quad is None and eb.quad is None) or np.array_equal(ea.quad, eb.quad)


def test_workers_do_not_change_output():
    scene = generate(SceneSpec(motion="rotate"), 0)
    a = run(job_for(scene, rng_seed=2))
    b = run(job_for(scene, rng_seed=2, workers=3))
    assert all(np.array_equal(x, y) for x, y in zip(a.frames, b.frames))


def test_render_failure_skips_job():
    scene = generate(SceneSpec(n=3, width=40, height=30, entity_quad=((1, 1), (5, 1), (5, 5), (1, 5))), 0)
    res = run(job_for(scene))
    assert res.status == "skipped" and res.tracks == [] and res.reason
    assert res.report()["placed"] == 0


def test_job_contract():
    scene = generate(SceneSpec(n=3), 0)
    with pytest.raises(InputContractError):
        run(SynthesisJob(scene.frames, scene.flows_fwd[:1], scene.flows_bwd, scene.segms, scene.depths, WORDS))
    with pytest.raises(InputContractError):
        run(job_for(scene, words=[]))
    with pytest.raises(InputContractError):
        run(job_for(scene, seed_index=3))


def test_report_counts():
    spec = SceneSpec(motion="translate", occluder=(0, 0, 319, 239), occluded_frames=(9,))
    res = run(job_for(generate(spec, 0), num_texts=2, seed_index=4))
    rep = res.report()
    assert rep["placed"] == 2 and rep["seed_frame"] == 5
    assert rep["lost_frames"] == sum(e.lost for t in res.tracks for e in t.frames) >= 2
