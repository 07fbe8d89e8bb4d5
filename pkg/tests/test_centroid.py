import numpy as np
import pytest

from deturb.centroid import (
    CentroidParams,
    average_flow,
    correction_step,
    initial_centroid,
    iterate_centroid,
    register_and_average,
    restore_sequence,
)
from deturb.flow import HSParams
from deturb.grid import rmse, temporal_mean, warp, zero_flow
from deturb.simulate import SimParams, simulate_sequence, synthetic_scene

FAST_HS = HSParams(pyramid_levels=2, max_iters=300)


def smooth_image(height, width, cx):
    yy, xx = np.mgrid[0:height, 0:width].astype(float)
    return 0.2 + 0.6 * np.exp(-((xx - cx) ** 2 + (yy - height / 2) ** 2) / (2 * 8.0**2))


# --- average_flow -----------------------------------------------------------

def test_average_flow_of_copies(rng):
    f = rng.uniform(-1, 1, (5, 5, 2))
    assert np.allclose(average_flow([f, f]), f, atol=1e-15)


def test_average_flow_symmetry(rng):
    f = rng.uniform(-1, 1, (5, 5, 2))
    assert np.allclose(average_flow([f, -f]), 0.0, atol=1e-15)


def test_average_flow_matches_loop_oracle(rng):
    flows = [rng.uniform(-2, 2, (4, 6, 2)) for _ in range(3)]
    out = average_flow(flows)
    for y in range(4):
        for x in range(6):
            for c in range(2):
                expect = (flows[0][y, x, c] + flows[1][y, x, c] + flows[2][y, x, c]) / 3.0
                assert out[y, x, c] == pytest.approx(expect, abs=1e-15)


def test_average_flow_linearity(rng):
    const = rng.uniform(-1, 1, (4, 4, 2))
    gs = [rng.uniform(-1, 1, (4, 4, 2)) for _ in range(4)]
    lhs = average_flow([const + g for g in gs])
    rhs = const + average_flow(gs)
    assert np.max(np.abs(lhs - rhs)) <= 1e-12 * max(1.0, np.max(np.abs(rhs)))


def test_average_flow_errors(rng):
    with pytest.raises(ValueError):
        average_flow([])
    with pytest.raises(ValueError):
        average_flow([zero_flow(4, 4), zero_flow(5, 5)])


# --- initial_centroid --------------------------------------------------------

def test_initial_centroid_identical_frames(rng):
    img = rng.uniform(0, 1, (16, 16))
    out = initial_centroid([img] * 4, CentroidParams(hs=FAST_HS))
    assert np.array_equal(out, img)


def test_initial_centroid_translation_pair():
    a = smooth_image(48, 48, 20.0)
    b = smooth_image(48, 48, 22.0)  # 2 px translation of a
    out = initial_centroid([a, b], CentroidParams(hs=HSParams(pyramid_levels=3)))
    oracle = smooth_image(48, 48, 21.0)  # analytic 1 px translation
    assert rmse(out[8:-8, 8:-8], oracle[8:-8, 8:-8]) < 0.05


def test_initial_centroid_beats_reference_on_simulator():
    truth = synthetic_scene(48, 48, seed=2)
    frames, _ = simulate_sequence(
        truth, SimParams(n_frames=6, amplitude=1.5, flow_smoothness=3.0, blur_sigma=0.0, noise_sigma=0.0, seed=5)
    )
    params = CentroidParams(hs=FAST_HS)
    out = initial_centroid(frames, params)
    assert rmse(out, truth) < rmse(frames[0], truth)


def test_reference_index_validated(rng):
    frames = [rng.uniform(0, 1, (8, 8)) for _ in range(3)]
    with pytest.raises(ValueError):
        initial_centroid(frames, CentroidParams(hs=FAST_HS, reference_index=3))


# --- correction_step ----------------------------------------------------------

def test_correction_step_fixed_point(rng):
    q = rng.uniform(0, 1, (16, 16))
    out, norm = correction_step(q, [q] * 3, CentroidParams(hs=FAST_HS))
    assert norm == 0.0
    assert np.array_equal(out, q)


def test_correction_step_symmetric_pair_near_zero():
    mid = smooth_image(48, 48, 21.0)
    plus = smooth_image(48, 48, 22.0)
    minus = smooth_image(48, 48, 20.0)
    _, norm = correction_step(mid, [plus, minus], CentroidParams(hs=HSParams(pyramid_levels=3)))
    assert norm < 0.05


def test_correction_step_positive_on_turbulence():
    truth = synthetic_scene(40, 40, seed=9)
    frames, _ = simulate_sequence(
        truth, SimParams(n_frames=5, amplitude=1.0, flow_smoothness=3.0, blur_sigma=0.5, noise_sigma=0.005, seed=11)
    )
    _, norm = correction_step(frames[0], frames, CentroidParams(hs=FAST_HS))
    assert norm > 0.0


# --- iterate_centroid ----------------------------------------------------------

def test_iterate_identical_frames_terminates_with_zero(rng):
    img = rng.uniform(0, 1, (12, 12))
    out, norms = iterate_centroid([img] * 3, CentroidParams(hs=FAST_HS, max_corrections=5))
    assert norms == [0.0]
    assert np.array_equal(out, img)


def test_iterate_records_single_entry_trace():
    truth = synthetic_scene(24, 24, seed=4)
    frames, _ = simulate_sequence(
        truth, SimParams(n_frames=3, amplitude=0.8, flow_smoothness=2.0, blur_sigma=0.0, noise_sigma=0.0, seed=6)
    )
    _, norms = iterate_centroid(frames, CentroidParams(hs=FAST_HS, max_corrections=1))
    assert len(norms) == 1


def test_iterate_norms_decrease_on_simulator():
    truth = synthetic_scene(48, 48, seed=8)
    frames, _ = simulate_sequence(
        truth, SimParams(n_frames=6, amplitude=1.5, flow_smoothness=3.0, blur_sigma=0.5, noise_sigma=0.005, seed=3)
    )
    _, norms = iterate_centroid(
        frames, CentroidParams(hs=FAST_HS, max_corrections=5, correction_tol=1e-9)
    )
    assert len(norms) == 5
    assert norms[1] < norms[0]


# --- register_and_average -------------------------------------------------------

def test_register_identical_frames(rng):
    img = rng.uniform(0, 1, (14, 14))
    registered, mean = register_and_average([img] * 4, img, CentroidParams(hs=FAST_HS))
    assert len(registered) == 4
    assert np.array_equal(mean, img)


def test_register_pulls_translated_frame_onto_target():
    c = smooth_image(48, 48, 21.0)
    frame = smooth_image(48, 48, 23.0)
    registered, _ = register_and_average(
        [frame, frame], c, CentroidParams(hs=HSParams(pyramid_levels=3))
    )
    assert rmse(registered[0][8:-8, 8:-8], c[8:-8, 8:-8]) < 0.05


def test_registered_mean_beats_temporal_mean_on_simulator():
    truth = synthetic_scene(64, 64, seed=10)
    frames, _ = simulate_sequence(
        truth, SimParams(n_frames=8, amplitude=2.0, flow_smoothness=4.0, blur_sigma=1.0, noise_sigma=0.01, seed=21)
    )
    params = CentroidParams(hs=HSParams(pyramid_levels=3), max_corrections=5, correction_tol=1e-6)
    result = restore_sequence(frames, params)
    assert rmse(result.registered_mean, truth) < rmse(temporal_mean(frames), truth)


def test_registered_mean_permutation_invariant(rng):
    truth = synthetic_scene(32, 32, seed=12)
    frames, _ = simulate_sequence(
        truth, SimParams(n_frames=4, amplitude=1.0, flow_smoothness=3.0, blur_sigma=0.0, noise_sigma=0.0, seed=13)
    )
    c = initial_centroid(frames, CentroidParams(hs=FAST_HS))
    _, mean_fwd = register_and_average(frames, c, CentroidParams(hs=FAST_HS))
    _, mean_rev = register_and_average(frames[::-1], c, CentroidParams(hs=FAST_HS))
    assert np.allclose(mean_fwd, mean_rev, atol=1e-12)


# --- full restoration -------------------------------------------------------------

def test_full_pipeline_identity_on_identical_frames(rng):
    img = rng.uniform(0, 1, (16, 16))
    result = restore_sequence([img] * 4, CentroidParams(hs=FAST_HS))
    assert np.array_equal(result.centroid, img)
    assert np.array_equal(result.registered_mean, img)
    assert result.correction_norms == [0.0]


def test_dump_dir_writes_stage_images(tmp_path, rng):
    img = rng.uniform(0, 1, (12, 12))
    iterate_centroid([img] * 3, CentroidParams(hs=FAST_HS, max_corrections=2), dump_dir=tmp_path)
    assert (tmp_path / "stage_0.png").exists()
    assert (tmp_path / "stage_1.png").exists()


def test_params_validation():
    with pytest.raises(ValueError):
        CentroidParams(max_corrections=0)
    with pytest.raises(ValueError):
        CentroidParams(correction_tol=0.0)
    with pytest.raises(ValueError):
        CentroidParams(reference_index=-1)
