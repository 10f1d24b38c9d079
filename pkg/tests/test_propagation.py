import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import sparse

from nrfprop.flow import FlowMatrix, build_flow
from nrfprop.imaging import morphological_close
from nrfprop.propagation import (
    PropagationConfig,
    baseline_masks,
    binarize,
    importance_map,
    init_scores,
    process_video,
    propagate,
    refine,
    run_video,
)
from nrfprop.superpixel import SuperpixelGrid
from oracles import iterative_refine
from synthetic import distractor_video, textured_frame


def _flow(dense):
    dense = np.asarray(dense, float)
    return FlowMatrix(sparse.csr_matrix(dense), dense.sum(axis=1) == 0)


def test_init_scores_examples():
    grid = SuperpixelGrid.from_labels(np.array([[0, 0, 1, 1], [0, 0, 1, 1]]))
    np.testing.assert_allclose(init_scores(np.full((2, 4), 0.3), grid), [0.3, 0.3])
    values = np.array([[1.0, 0.0, 1, 1], [1.0, 0.0, 1, 1]])
    np.testing.assert_allclose(init_scores(values, grid), [0.5, 1.0])
    with pytest.raises(ValueError):
        init_scores(np.zeros((2, 3)), grid)


def test_init_scores_match_pixel_loop():
    rng = np.random.default_rng(0)
    values = rng.random((8, 8))
    labels = np.zeros((8, 8), int)
    labels[:4, 4:] = 1
    labels[4:, :4] = 2
    labels[4:, 4:] = 3
    scores = init_scores(values, SuperpixelGrid.from_labels(labels))
    for s in range(4):
        total, count = 0.0, 0
        for y in range(8):
            for x in range(8):
                if labels[y, x] == s:
                    total += values[y, x]
                    count += 1
        assert scores[s] == pytest.approx(total / count)


def test_propagate_examples():
    scores = np.array([0.1, 0.5, 0.9])
    np.testing.assert_allclose(propagate(_flow(np.eye(3)), scores), scores)
    np.testing.assert_allclose(propagate(_flow(np.full((2, 3), 1 / 3)), scores), [0.5, 0.5])
    zero = _flow([[0, 0, 0], [0, 1, 0]])
    np.testing.assert_allclose(propagate(zero, scores), [0.0, 0.5])
    with pytest.raises(ValueError):
        propagate(_flow(np.eye(3)), np.ones(4))


def test_propagate_matches_dense_product():
    rng = np.random.default_rng(1)
    dense = rng.random((10, 12)) * (rng.random((10, 12)) < 0.3)
    scores = rng.random(12)
    expected = [sum(dense[i, j] * scores[j] for j in range(12)) for i in range(10)]
    np.testing.assert_allclose(propagate(_flow(dense), scores), expected)


def test_refine_examples():
    own = np.array([0.2, 0.9])
    props = [np.array([0.5, 0.1]), np.array([0.4, 0.3]), np.array([0.0, 1.0]), np.array([1, 1])]
    np.testing.assert_array_equal(refine(own, props, 0.0), own)
    expected = (own + 0.5 * np.sum(props, axis=0)) / 3.0
    np.testing.assert_allclose(refine(own, props, 0.5), expected)
    np.testing.assert_allclose(refine(own, props, math.inf), np.mean(props, axis=0), atol=1e-15)
    np.testing.assert_array_equal(refine(own, [], 0.5), own)
    with pytest.raises(ValueError):
        refine(own, [np.ones(3)], 0.5)


def test_refine_with_unit_weight_is_plain_average():
    rng = np.random.default_rng(2)
    own = rng.random(7)
    props = [rng.random(7) for _ in range(3)]
    np.testing.assert_allclose(refine(own, props, 1.0), (own + sum(props)) / 4)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 50), st.integers(0, 4),
       st.sampled_from([0.0, 0.25, 0.5, 2.0, 7.5]))
def test_refine_minimizes_objective_and_stays_in_range(seed, n, m, lam):
    rng = np.random.default_rng(seed)
    own = rng.random(n)
    props = [rng.random(n) for _ in range(m)]
    out = refine(own, props, lam)
    assert np.all((out >= 0) & (out <= 1))
    np.testing.assert_allclose(out, iterative_refine(own, props, lam), rtol=0, atol=1e-8)


def test_importance_map_examples():
    grid = SuperpixelGrid.from_labels(np.array([[0, 1], [1, 1]]))
    np.testing.assert_allclose(importance_map(grid, np.ones(2), np.zeros(2)), 1.0)
    np.testing.assert_allclose(importance_map(grid, np.ones(2), np.ones(2)), 0.0)
    out = importance_map(grid, np.array([0.8, 0.0]), np.array([0.25, 0.0]))
    np.testing.assert_allclose(out, [[0.6, 0.0], [0.0, 0.0]])
    with pytest.raises(ValueError):
        importance_map(grid, np.ones(3), np.ones(3))


def test_binarize_examples():
    values = np.array([[0.9, 0.181], [0.179, 0.5]])
    # threshold is 0.2 * 0.9 = 0.18
    np.testing.assert_array_equal(binarize(values, 0.2), [[True, True], [False, True]])
    assert binarize(np.full((3, 3), 0.4), 0.2).all()
    assert not binarize(np.zeros((3, 3)), 0.2).any()
    with pytest.raises(ValueError):
        binarize(values, 0.0)


def test_config_validation():
    with pytest.raises(ValueError):
        PropagationConfig(threshold_ratio=1.5)
    with pytest.raises(ValueError):
        PropagationConfig(lambda_c=-1)
    with pytest.raises(ValueError):
        PropagationConfig(flow_mode="dense")
    assert PropagationConfig(lambda_c=math.inf).to_dict()["lambda_c"] == "inf"
    assert PropagationConfig(spaces=["hsv", "rgb"]).spaces == ("rgb", "hsv")


SMALL = PropagationConfig(superpixels=60)


def _tiny_video(num, seed=0):
    frame = textured_frame(40, 56, seed)
    rng = np.random.default_rng(seed)
    fg = np.clip(rng.random((40, 56)) * 0.3 + np.pad(np.ones((16, 16)), ((12, 12), (20, 20))) * 0.6, 0, 1)
    bg = 1 - fg
    return [frame] * num, [fg] * num, [bg] * num


def test_single_frame_video_is_thresholded_initialization():
    frames, fgs, bgs = _tiny_video(1)
    result = process_video(frames, fgs, bgs, SMALL)
    state = result.states[0]
    imp = importance_map(state.grid, state.fg, state.bg)
    expected = morphological_close(binarize(imp, 0.2), 3)
    np.testing.assert_array_equal(result.masks[0], expected)
    assert result.frames[0].keyframes == []


def _two_region_video(num):
    # flat object/background colors and maps constant on each region: every
    # reversible neighborhood carries one score, so propagation cannot move it
    frame = np.empty((48, 64, 3))
    frame[:] = (0.1, 0.3, 0.8)
    frame[12:36, 16:40] = (0.9, 0.2, 0.1)
    fg = np.where(frame[..., 0] > 0.5, 0.9, 0.1)
    return [frame] * num, [fg] * num, [1 - fg] * num


def test_identical_frames_are_a_fixed_point():
    frames, fgs, bgs = _two_region_video(12)
    single = run_video(frames[:1], fgs[:1], bgs[:1], SMALL)[0]
    result = process_video(frames, fgs, bgs, SMALL)
    for fr, state in zip(result.frames, result.states):
        np.testing.assert_allclose(fr.fg, state.fg, atol=1e-12)
        np.testing.assert_allclose(fr.bg, state.bg, atol=1e-12)
    for mask in result.masks:
        np.testing.assert_array_equal(mask, single)


def test_maps_are_resampled_to_frame_size():
    frames, fgs, bgs = _tiny_video(2)
    small_fg = [f[::2, ::2] for f in fgs]
    small_bg = [b[::2, ::2] for b in bgs]
    masks = run_video(frames, small_fg, small_bg, SMALL)
    assert masks[0].shape == (40, 56)


def test_misaligned_inputs_rejected():
    frames, fgs, bgs = _tiny_video(3)
    with pytest.raises(ValueError):
        run_video(frames, fgs[:2], bgs, SMALL)
    with pytest.raises(ValueError):
        run_video([], [], [], SMALL)


def test_flicker_distractor_is_suppressed():
    frames, fgs, bgs, gts, distractor = distractor_video()
    result = process_video(frames, fgs, bgs)
    base = baseline_masks(frames, fgs, bgs)
    for t in (9, 10):
        state, fr = result.states[t], result.frames[t]
        hit = np.unique(state.grid.labels[distractor])
        assert np.all(fr.fg[hit] < state.fg[hit])
        assert np.all(fr.bg[hit] > state.bg[hit])
        assert base[t][distractor].mean() > 0.75
        assert not result.masks[t][distractor].any()
        assert result.masks[t][gts[t]].mean() > 0.95


def test_cosine_mode_runs():
    frames, fgs, bgs = _tiny_video(6)
    cfg = PropagationConfig(superpixels=60, flow_mode="cosine", k0=5)
    masks = run_video(frames, fgs, bgs, cfg)
    assert len(masks) == 6


def test_flows_kept_on_request():
    frames, fgs, bgs = _tiny_video(6)
    result = process_video(frames, fgs, bgs, SMALL, keep_flows=True)
    fr = result.frames[0]
    assert sorted(fr.flows) == fr.keyframes == [5]
    for v, flow in fr.flows.items():
        assert flow.rows == result.states[0].grid.count
        assert flow.cols == result.states[v].grid.count


def test_build_flow_on_real_superpixels_is_stochastic():
    frames, fgs, bgs = _tiny_video(2)
    result = process_video(frames, fgs, bgs, SMALL)
    a, b = result.states
    flow = build_flow(a.features, b.features, 15)
    np.testing.assert_allclose(flow.row_sums[~flow.zero_rows], 1.0, atol=1e-9)
