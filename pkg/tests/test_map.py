import threading
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vslam.eval.synthetic import SyntheticScene, default_camera, generate_synthetic
from vslam.features.orb import FeatureFrame
from vslam.geometry import SE3Pose
from vslam.map import (
    DuplicateLinkError,
    Keyframe,
    KeyframeCullPolicy,
    MapDatabase,
    MapError,
    MapFrozenError,
    PlaceIndex,
    RWLock,
    Vocabulary,
    bow_score,
    default_vocabulary,
    train_vocabulary,
)

CAM = default_camera("perspective")


def features(rng, n=40):
    uv = rng.uniform([0, 0], [CAM.width, CAM.height], (n, 2))
    return FeatureFrame.from_keypoints(CAM, uv, np.zeros(n), np.zeros(n), np.ones(n), rng.integers(0, 256, (n, 32), dtype=np.uint8))


def add_kf(m, rng, n=40, links=None):
    kf = Keyframe(m.new_keyframe_id(), float(m.new_keyframe_id()), SE3Pose.identity(), features(rng, n), links)
    return m.insert_keyframe(kf).id


def test_first_keyframe_is_root(rng):
    m = MapDatabase([CAM])
    k = add_kf(m, rng)
    assert m.root == k and m.parent[k] is None and m.covisible(k) == []


def test_shared_landmarks_give_covisibility_weight(rng):
    m = MapDatabase([CAM])
    a, b = add_kf(m, rng), add_kf(m, rng)
    for i in range(17):
        m.add_landmark([0, 0, 5.0], {a: i, b: i + 1})
    assert m.covisibility[a][b] == 17 == m.covisibility[b][a]
    assert m.parent[b] == a
    m.audit()


def test_duplicate_links_are_refused(rng):
    m = MapDatabase([CAM])
    a = add_kf(m, rng)
    lm = m.add_landmark([0, 0, 5.0], {a: 0})
    with pytest.raises(DuplicateLinkError):
        m.add_observation(a, 1, lm)
    with pytest.raises(DuplicateLinkError):
        m.add_landmark([0, 0, 5.0], {a: 0})
    with pytest.raises(MapError):
        m.add_landmark([0, 0, 5.0], {})


ops = st.lists(st.tuples(st.sampled_from(["kf", "lm", "obs", "unobs", "rmkf", "rmlm", "fuse"]), st.integers(0, 10**6)), max_size=60)


@settings(max_examples=40)
@given(ops)
def test_random_edits_keep_covisibility_consistent(seq):
    rng = np.random.default_rng(0)
    m = MapDatabase([CAM])
    add_kf(m, rng)
    for op, r in seq:
        kfs, lms = sorted(m.keyframes), sorted(m.landmarks)
        if op == "kf":
            add_kf(m, rng)
        elif op == "lm":
            chosen = [kfs[(r + j) % len(kfs)] for j in range(1 + r % 3)]
            obs = {}
            for k in set(chosen):
                free = np.nonzero(m.keyframes[k].landmark_ids < 0)[0]
                if len(free):
                    obs[k] = int(free[r % len(free)])
            if obs:
                m.add_landmark(rng.normal(size=3), obs)
        elif op == "obs" and lms:
            lm = lms[r % len(lms)]
            k = kfs[r % len(kfs)]
            free = np.nonzero(m.keyframes[k].landmark_ids < 0)[0]
            if k not in m.landmarks[lm].observations and len(free):
                m.add_observation(k, int(free[0]), lm)
        elif op == "unobs" and lms:
            lm = lms[r % len(lms)]
            k = sorted(m.landmarks[lm].observations)[r % len(m.landmarks[lm].observations)]
            m.remove_observation(k, lm)
        elif op == "rmkf" and len(kfs) > 1:
            m.remove_keyframe(kfs[1 + r % (len(kfs) - 1)])
        elif op == "rmlm" and lms:
            m.remove_landmark(lms[r % len(lms)])
        elif op == "fuse" and len(lms) > 1:
            m.replace_landmark(lms[r % len(lms)], lms[(r + 1) % len(lms)])
    m.audit()
    assert m.recount_covisibility() == {k: dict(v) for k, v in m.covisibility.items()}


def test_landmark_without_observers_disappears(rng):
    m = MapDatabase([CAM])
    a, b = add_kf(m, rng), add_kf(m, rng)
    kept = m.add_landmark([0, 0, 5.0], {a: 0, b: 0})
    gone = m.add_landmark([0, 0, 5.0], {b: 1})
    assert m.cull_landmarks(b) == []
    m.remove_keyframe(b)
    assert gone not in m.landmarks and kept in m.landmarks
    assert m.keyframes[a].landmark_ids[0] == kept
    m.audit()


def test_redundant_keyframe_is_culled(rng):
    m = MapDatabase([CAM])
    ids = [add_kf(m, rng) for _ in range(5)]
    # keyframe 2 sees only landmarks that keyframes 0, 1, 3 and 4 also see
    for i in range(20):
        m.add_landmark(rng.normal(size=3), {k: i for k in ids})
    for k in (0, 1, 3, 4):
        for i in range(20, 30):
            m.add_landmark(rng.normal(size=3), {k: i})
    assert m.cull_keyframes(ids, KeyframeCullPolicy()) == [2]
    m.audit()


def test_graveyard_reanchors_removed_keyframes(rng):
    m = MapDatabase([CAM])
    a, b = add_kf(m, rng), add_kf(m, rng)
    m.add_landmark([0, 0, 5.0], {a: 0, b: 0})
    m.set_pose(b, SE3Pose.exp([0.1, 0, 0, 0, 0.2, 0]))
    want = m.keyframe_pose(b).matrix()
    m.remove_keyframe(b)
    np.testing.assert_allclose(m.keyframe_pose(b).matrix(), want, atol=1e-12)


def test_frozen_map_refuses_writes(rng):
    m = MapDatabase([CAM])
    a = add_kf(m, rng)
    m.frozen = True
    v = m.version
    with pytest.raises(MapFrozenError):
        m.add_landmark([0, 0, 1.0], {a: 0})
    assert m.version == v


def test_version_counts_writes(rng):
    m = MapDatabase([CAM])
    v0 = m.version
    a = add_kf(m, rng)
    m.add_landmark([0, 0, 1.0], {a: 0})
    assert m.version == v0 + 2


# -- lock --------------------------------------------------------------------


def test_rwlock_excludes_writers_from_readers():
    lock = RWLock()
    log = []

    def reader():
        with lock.read():
            log.append("r+")
            time.sleep(0.05)
            log.append("r-")

    def writer():
        time.sleep(0.01)
        with lock.write():
            log.append("w")

    ts = [threading.Thread(target=reader), threading.Thread(target=reader), threading.Thread(target=writer)]
    for t in ts:
        t.start()
    for t in ts:
        t.join()
    assert log.index("w") > max(i for i, x in enumerate(log) if x == "r-") - 0
    with lock.write():
        with lock.write():
            with lock.read():
                pass


# -- place recognition ---------------------------------------------------------


@pytest.fixture(scope="module")
def square_frames():
    ds = generate_synthetic(SyntheticScene(preset="square-loop", n_frames=120, heading_deg=90, seed=4, laps=1.25))
    return ds


@pytest.mark.parametrize("voc", [default_vocabulary(), None], ids=["bow", "voting"])
def test_self_query_ranks_first_and_exclusion(voc, square_frames):
    index = PlaceIndex(voc)
    for k in range(0, 96, 8):
        index.add(k, square_frames.frames[k].descriptors)
    q = square_frames.frames[40].descriptors
    assert index.query(q)[0][0] == 40
    assert index.query(q, exclude=range(0, 96, 8)) == []


@pytest.mark.parametrize("voc", [default_vocabulary(), None], ids=["bow", "voting"])
def test_revisit_is_retrieved(voc, square_frames):
    index = PlaceIndex(voc)
    for k in range(0, 96, 4):
        index.add(k, square_frames.frames[k].descriptors)
    # frame 100 revisits the start of the lap (1.25 laps over 120 frames)
    top = [k for k, _ in index.query(square_frames.frames[100].descriptors, exclude=range(60, 96), top_k=3)]
    assert 4 in top or 0 in top or 8 in top


def test_vocabulary_file_round_trip(tmp_path, rng):
    # each training image draws from its own cluster, so words carry non-zero IDF
    centers = rng.integers(0, 256, (5, 32), dtype=np.uint8)

    def noise(c):
        return c ^ (rng.random((200, 32)) < 0.02).astype(np.uint8) * rng.integers(1, 256, (200, 32), dtype=np.uint8)

    voc = train_vocabulary([noise(c) for c in centers], branching=4, depth=2)
    voc.save(tmp_path / "v.bin")
    again = Vocabulary.load(tmp_path / "v.bin")
    assert again.to_bytes() == voc.to_bytes()
    d = noise(centers[0])[:50]
    a = voc.bow(d)
    assert a
    assert bow_score(a, again.bow(d)) == pytest.approx(1.0)
    assert bow_score(a, {}) == 0.0
