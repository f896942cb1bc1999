import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from vslam.eval.synthetic import SyntheticScene, generate_synthetic, render_image
from vslam.features import FeatureParams, MatchParams, detect_and_describe, hamming, hamming_matrix, match, match_descriptors
from vslam.features.orb import FeatureFrame

descriptor = st.binary(min_size=32, max_size=32).map(lambda b: np.frombuffer(b, dtype=np.uint8).copy())


def popcount_oracle(a, b):
    return sum(bin(x ^ y).count("1") for x, y in zip(a.tolist(), b.tolist()))


@given(descriptor, descriptor)
def test_hamming_matches_bit_count(a, b):
    assert hamming(a, b) == popcount_oracle(a, b)
    assert hamming(a, b) == hamming(b, a)


@given(descriptor, st.integers(0, 255))
def test_hamming_edge_cases(a, bit):
    assert hamming(a, a) == 0
    assert hamming(a, ~a) == 256
    b = a.copy()
    b[bit // 8] ^= 1 << (bit % 8)
    assert hamming(a, b) == 1


def test_hamming_matrix_agrees_with_pairwise(rng):
    a = rng.integers(0, 256, (7, 32), dtype=np.uint8)
    b = rng.integers(0, 256, (5, 32), dtype=np.uint8)
    M = hamming_matrix(a, b)
    assert M.shape == (7, 5)
    assert all(M[i, j] == popcount_oracle(a[i], b[j]) for i in range(7) for j in range(5))


def _frame(desc):
    n = len(desc)
    return FeatureFrame(np.zeros((n, 2)), np.zeros(n), np.zeros(n), np.ones(n), desc, np.tile([0, 0, 1.0], (n, 1)))


def test_self_match_is_identity(rng):
    f = _frame(rng.integers(0, 256, (40, 32), dtype=np.uint8))
    pairs = match(f, f)
    np.testing.assert_array_equal(pairs, np.stack([np.arange(40)] * 2, axis=1))


def test_far_descriptor_sets_do_not_match():
    a = np.zeros((5, 32), np.uint8)
    b = np.full((5, 32), 255, np.uint8)
    assert len(match_descriptors(a, b)) == 0


def test_mask_and_ratio_are_honored(rng):
    a = rng.integers(0, 256, (10, 32), dtype=np.uint8)
    mask = np.ones((10, 10), bool)
    mask[3, 3] = False
    pairs = match_descriptors(a, a, mask=mask)
    assert 3 not in pairs[:, 0]
    # a twin descriptor in b makes the ratio test reject the row
    b = np.concatenate([a, a[:1]])
    assert 0 not in match_descriptors(a, b, MatchParams(ratio=0.9))[:, 0]


def test_two_view_matches_are_mostly_true():
    ds = generate_synthetic(SyntheticScene(preset="orbit", n_frames=60, seed=5, outlier_rate=0.1))
    a, b = ds.frames[0], ds.frames[1]
    pairs = match(a, b, MatchParams(ratio=0.8))
    la, lb = ds.labels[0][pairs[:, 0]], ds.labels[1][pairs[:, 1]]
    assert len(pairs) > 100
    assert np.mean((la == lb) & (la >= 0)) >= 0.9


def test_uniform_image_has_no_keypoints():
    assert len(detect_and_describe(np.full((160, 200), 90, np.uint8))) == 0


def _square_image():
    img = np.full((160, 200), 40, np.uint8)
    img[50:110, 60:140] = 220
    return img


def test_square_corners_are_found():
    f = detect_and_describe(_square_image(), FeatureParams(max_keypoints=50))
    corners = np.array([[60, 50], [139, 50], [60, 109], [139, 109]], float)
    d = np.linalg.norm(f.uv[:, None, :] - corners[None], axis=2)
    near = d.min(axis=1) <= 3.0
    assert len(f) >= 4
    assert near.all()
    assert len(set(d.argmin(axis=1)[near].tolist())) == 4


def test_rotation_turns_keypoint_angles():
    ds = generate_synthetic(SyntheticScene(preset="orbit", n_frames=4, seed=9))
    img = render_image(ds, 0)[40:440, 120:520]
    a = detect_and_describe(img, FeatureParams(max_keypoints=500))
    b = detect_and_describe(np.rot90(img), FeatureParams(max_keypoints=500))
    # np.rot90 maps (u, v) -> (v, W - 1 - u)
    W = img.shape[1]
    moved = np.stack([a.uv[:, 1], W - 1 - a.uv[:, 0]], axis=1)
    d = np.linalg.norm(moved[:, None] - b.uv[None], axis=2)
    j = d.argmin(axis=1)
    same = (d.min(axis=1) < 0.5) & (a.octave == b.octave[j])
    assert same.sum() >= 50
    diff = np.angle(np.exp(1j * (b.angle[j[same]] - a.angle[same])))
    # image rows point down, so a counter-clockwise turn of the picture reads as -90 degrees
    err = np.abs(np.angle(np.exp(1j * (np.abs(diff) - np.pi / 2))))
    assert np.median(err) < 0.15


def test_detection_is_deterministic():
    img = _square_image()
    a, b = detect_and_describe(img), detect_and_describe(img)
    np.testing.assert_array_equal(a.uv, b.uv)
    np.testing.assert_array_equal(a.descriptors, b.descriptors)


def test_bad_feature_params():
    with pytest.raises(ValueError):
        FeatureParams(scale_factor=1.0)


def test_descriptors_survive_a_one_pixel_shift():
    # coarse octaves see the shift as a sub-pixel one; without a low-pass
    # before resampling their descriptors decorrelate almost completely
    from scipy.spatial import cKDTree

    ds = generate_synthetic(SyntheticScene(preset="orbit", n_frames=300, seed=1, n_landmarks=600))
    img = render_image(ds, 0, noise=0.0)
    moved = np.full_like(img, 128)
    moved[:, 1:] = img[:, :-1]
    a, b = detect_and_describe(img), detect_and_describe(moved)
    for o in range(FeatureParams().num_levels):
        ia, ib = np.flatnonzero(a.octave == o), np.flatnonzero(b.octave == o)
        dist, j = cKDTree(b.uv[ib]).query(a.uv[ia] + [1.0, 0.0])
        pairs = dist < 1.5 * 1.2**o
        d = hamming_matrix(a.descriptors[ia[pairs]], b.descriptors[ib[j[pairs]]]).diagonal()
        assert pairs.mean() > 0.7
        assert np.median(d) <= (0 if o == 0 else 48), (o, np.median(d))
