"""Frame-to-map tracking: bootstrap, motion model, local map, relocalization."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from ..features.matching import MatchParams, match_descriptors
from ..features.orb import FeatureFrame
from ..geometry.multiview import (
    InitializationError,
    RelocalizationError,
    estimate_relative_pose_ransac,
    solve_pnp_ransac,
)
from ..geometry.transforms import SE3Pose
from ..map.database import MapDatabase
from ..map.entities import Keyframe
from ..optim.common import OptimizationError, SolverConfig
from ..optim.motion import solve_motion_only
from .mapping import bundle_adjust
from .search import IndexedFrame, search_by_projection
from .types import FrameResult, PipelineParams, TrackingState

# search windows in pixels, converted to angles with the camera's pixel angle
MOTION_RADIUS_PX = (15.0, 40.0)
LOCAL_MAP_RADIUS_PX = 4.0
MIN_MOTION_MATCHES = 20
RELOC_MIN_INLIERS = 50
RELOC_CANDIDATES = 5
WEAK_TRACKING_RATIO = 0.25  # below this share of the reference, insert even behind a busy mapper


class Frame:
    """One input frame while it is being tracked."""

    def __init__(self, index, timestamp, features: FeatureFrame):
        self.index = index
        self.timestamp = timestamp
        self.features = features
        self.indexed = IndexedFrame(features)
        self.lm_ids = np.full(len(features), -1, dtype=np.int64)
        self.pose: SE3Pose | None = None

    def matched(self):
        idx = np.nonzero(self.lm_ids >= 0)[0]
        return idx, self.lm_ids[idx]


@dataclass
class _TrajectoryEntry:
    timestamp: float
    ref_kf: int
    rel: SE3Pose  # frame pose relative to the reference keyframe


@dataclass
class TrackerStatus:
    state: TrackingState = TrackingState.NOT_INITIALIZED
    ref_kf: int | None = None
    last_kf: int | None = None
    last_kf_frame: int = -1
    velocity: SE3Pose | None = None
    trajectory: list = field(default_factory=list)


class Tracker:
    """Estimates a pose for every frame against the shared map."""

    def __init__(self, m: MapDatabase, params: PipelineParams, camera_id=0):
        self.map = m
        self.params = params
        self.camera_id = camera_id
        self.camera = m.cameras[camera_id]
        self.pix = self.camera.pixel_angle
        self.status = TrackerStatus()
        self.last: Frame | None = None
        self.init_ref: Frame | None = None
        self.localization_only = False
        self._pending = None
        self.motion_cfg = SolverConfig(max_iterations=10, huber_delta=params.huber_delta(self.pix))

    # -- helpers ----------------------------------------------------------
    @property
    def state(self):
        return self.status.state

    def _rng(self, frame, tag):
        return np.random.default_rng([self.params.seed, frame.index, tag])

    def _sigmas(self, features, idx):
        return self.pix * features.scale_factor ** features.octave[idx].astype(float)

    def _optimize(self, frame: Frame, pose0: SE3Pose):
        """Motion-only BA on the frame's current matches; drops outliers."""
        idx, ids = frame.matched()
        if len(idx) < 3:
            return None, 0
        P, _ = self.map.landmark_arrays(ids)
        try:
            res = solve_motion_only(pose0, P, frame.features.bearings[idx], self._sigmas(frame.features, idx), self.motion_cfg)
        except OptimizationError:
            return None, 0
        frame.lm_ids[idx[~res.inliers]] = -1
        return res.pose, int(res.inliers.sum())

    def _search(self, frame, pose, ids, radius_px, ratio=0.8):
        ids = np.asarray(ids, dtype=np.int64)
        P, D = self.map.landmark_arrays(ids)
        rows, kp, in_view = search_by_projection(
            frame.indexed, self.camera, pose, P, D, radius_px * self.pix,
            self.params.match.max_hamming, ratio, taken=frame.lm_ids >= 0,
        )  # fmt: skip
        frame.lm_ids[kp] = ids[rows]
        return len(rows), ids[in_view]

    def _live(self, ids):
        return np.array([i for i in np.asarray(ids).tolist() if i in self.map.landmarks], dtype=np.int64)

    # -- bootstrap ----------------------------------------------------------
    def initialize(self, frame: Frame):
        """Two-view bootstrap against the stored reference frame.

        Returns the two new keyframe ids or None.
        """
        p = self.params
        ref = self.init_ref
        if ref is None or len(ref.features) < p.two_view.min_inliers:
            self.init_ref = frame
            return None
        pairs = match_descriptors(ref.features.descriptors, frame.features.descriptors, MatchParams(0.9, p.match.max_hamming))
        if len(pairs) < p.two_view.min_inliers:
            self.init_ref = frame
            return None
        b1 = ref.features.bearings[pairs[:, 0]]
        b2 = frame.features.bearings[pairs[:, 1]]
        try:
            tv = estimate_relative_pose_ransac(b1, b2, p.two_view, self._rng(frame, 0))
        except InitializationError:
            # degenerate motion keeps the reference; a weak match set replaces it
            if len(pairs) < 2 * p.two_view.min_inliers:
                self.init_ref = frame
            return None
        good = np.nonzero(tv.triangulated)[0]
        m = self.map
        kf0 = Keyframe(m.new_keyframe_id(), ref.timestamp, SE3Pose.identity(), ref.features, camera_id=self.camera_id)
        with m.lock.write():
            m.insert_keyframe(kf0)
            kf1 = Keyframe(m.new_keyframe_id(), frame.timestamp, tv.pose, frame.features, camera_id=self.camera_id)
            m.insert_keyframe(kf1)
            for g in good:
                m.add_landmark(tv.points[g], {kf0.id: int(pairs[g, 0]), kf1.id: int(pairs[g, 1])})
            cfg = SolverConfig(max_iterations=self.params.ba_iterations, huber_delta=self.params.huber_delta(self.pix))
            bundle_adjust(m, sorted(m.keyframes), [], cfg)
            depth = m.median_depth(kf0.id)
            if not np.isfinite(depth) or depth <= 0 or len(m.landmarks) < p.two_view.min_inliers:
                self._reset_map()
                self.init_ref = frame
                return None
            s = 1.0 / depth
            m.set_pose(kf1.id, SE3Pose(kf1.pose.q, kf1.pose.t * s))
            ids = sorted(m.landmarks)
            m.set_positions(ids, [m.landmarks[i].position * s for i in ids])
        st = self.status
        st.state = TrackingState.TRACKING
        st.ref_kf = st.last_kf = kf1.id
        st.last_kf_frame = frame.index
        st.velocity = None
        st.trajectory.append(_TrajectoryEntry(ref.timestamp, kf0.id, SE3Pose.identity()))
        st.trajectory.append(_TrajectoryEntry(frame.timestamp, kf1.id, SE3Pose.identity()))
        frame.pose = m.keyframes[kf1.id].pose
        frame.lm_ids = kf1.landmark_ids.copy()
        self.init_ref = None
        return kf0.id, kf1.id

    def _reset_map(self):
        m = self.map
        for k in sorted(m.keyframes, reverse=True):
            if k != m.root:
                m.remove_keyframe(k)
        for i in sorted(m.landmarks):
            m.remove_landmark(i)
        if m.keyframes:
            root = m.root
            m.index.remove(root)
            del m.keyframes[root], m.covisibility[root], m.parent[root]
        m.graveyard.clear()

    # -- tracking -----------------------------------------------------------
    def _track_motion(self, frame: Frame):
        """Project the last frame's and reference keyframe's landmarks."""
        last = self.last
        st = self.status
        pred = last.pose if st.velocity is None else st.velocity @ last.pose
        _, last_ids = last.matched()
        cand = set(self._live(last_ids).tolist())
        if st.ref_kf in self.map.keyframes:
            cand |= set(self.map.keyframe_landmarks(st.ref_kf).tolist())
        cand = np.array(sorted(cand), dtype=np.int64)
        for radius in MOTION_RADIUS_PX:
            frame.lm_ids[:] = -1
            n, _ = self._search(frame, pred, cand, radius, ratio=0.9)
            if n >= MIN_MOTION_MATCHES:
                pose, inl = self._optimize(frame, pred)
                if pose is not None and inl >= MIN_MOTION_MATCHES // 2:
                    return pose
        return None

    def _track_robust(self, frame: Frame):
        """Wide matching fallback: descriptor matching to the local map plus PnP."""
        m = self.map
        st = self.status
        if st.ref_kf not in m.keyframes:
            return None
        kfs = m.local_keyframes(st.ref_kf, cap=10)
        ids = np.array(sorted({int(i) for k in kfs for i in m.keyframe_landmarks(k)}), dtype=np.int64)
        return self._pnp_against(frame, ids, tag=1)

    def _pnp_against(self, frame: Frame, ids, tag):
        if len(ids) < 10:
            return None
        P, D = self.map.landmark_arrays(ids)
        pairs = match_descriptors(frame.features.descriptors, D, self.params.match)
        if len(pairs) < 15:
            return None
        try:
            pose, inl = solve_pnp_ransac(
                frame.features.bearings[pairs[:, 0]], P[pairs[:, 1]], self.params.pnp(self.pix), self._rng(frame, tag)
            )
        except RelocalizationError:
            return None
        frame.lm_ids[:] = -1
        frame.lm_ids[pairs[inl, 0]] = ids[pairs[inl, 1]]
        pose, n = self._optimize(frame, pose)
        return pose if n >= 15 else None

    def _track_local_map(self, frame: Frame, pose: SE3Pose):
        """Refine against the capped local map; returns (pose, inliers, matches)."""
        m = self.map
        _, ids = frame.matched()
        counts = Counter()
        for i in ids.tolist():
            for k in m.landmarks[i].observations:
                counts[k] += 1
        if not counts:
            return pose, 0, 0
        seeds = [k for k, _ in sorted(counts.items(), key=lambda x: (-x[1], x[0]))]
        ref = seeds[0]
        self.status.ref_kf = ref
        local = m.local_keyframes(ref, self.params.local_map_cap, seeds)
        local_ids = np.array(sorted({int(i) for k in local for i in m.keyframe_landmarks(k)} - set(ids.tolist())), dtype=np.int64)
        _, in_view = self._search(frame, pose, local_ids, LOCAL_MAP_RADIUS_PX)
        matches = int((frame.lm_ids >= 0).sum())
        pose2, n = self._optimize(frame, pose)
        if pose2 is None:
            return pose, 0, matches
        if not self.localization_only:
            # counters are written once the read lock is released
            _, inl_ids = frame.matched()
            self._pending = (np.concatenate([ids, in_view]), inl_ids)
        return pose2, n, matches

    def relocalize(self, frame: Frame):
        """Place recognition then PnP against each candidate's landmarks."""
        m = self.map
        if not m.keyframes:
            return None
        for k, _ in m.index.query(frame.features.descriptors, top_k=RELOC_CANDIDATES):
            frame.lm_ids[:] = -1
            pose = self._pnp_against(frame, m.keyframe_landmarks(k), tag=2 + k)
            if pose is None:
                continue
            self.status.ref_kf = k
            pose, n, _ = self._track_local_map(frame, pose)
            if n >= RELOC_MIN_INLIERS:
                return pose
        frame.lm_ids[:] = -1
        return None

    def track(self, frame: Frame) -> FrameResult:
        """Pose for ``frame``; does not insert keyframes."""
        self._pending = None
        with self.map.lock.read():
            result = self._track(frame)
        if self._pending is not None and result.tracked:
            with self.map.lock.write():
                self.map.increase_visible(self._pending[0])
                self.map.increase_found(self._pending[1])
        self._pending = None
        return result

    def _track(self, frame: Frame) -> FrameResult:
        st = self.status
        pose = None
        if st.state is TrackingState.TRACKING and self.last is not None and self.last.pose is not None:
            pose = self._track_motion(frame)
            if pose is None:
                frame.lm_ids[:] = -1
                pose = self._track_robust(frame)
        if pose is None:
            pose = self.relocalize(frame)
            if pose is not None:
                st.velocity = None
            inliers = int((frame.lm_ids >= 0).sum()) if pose is not None else 0
            matches = inliers
        else:
            pose, inliers, matches = self._track_local_map(frame, pose)
        if pose is None or inliers < self.params.tracking_min_inliers:
            frame.pose = None
            frame.lm_ids[:] = -1
            st.state = TrackingState.LOST
            st.velocity = None
            self.last = frame
            return FrameResult(frame.timestamp, None, st.state, matches, 0, map_version=self.map.version)
        frame.pose = pose
        if self.last is not None and self.last.pose is not None and st.state is TrackingState.TRACKING:
            st.velocity = pose @ self.last.pose.inverse()
        st.state = TrackingState.TRACKING
        ref_pose = self.map.keyframes[st.ref_kf].pose
        st.trajectory.append(_TrajectoryEntry(frame.timestamp, st.ref_kf, pose @ ref_pose.inverse()))
        _, ids = frame.matched()
        self.last = frame
        return FrameResult(
            frame.timestamp, pose, st.state, max(matches, inliers), inliers,
            landmark_ids=ids.copy(), map_version=self.map.version,
        )  # fmt: skip

    # -- keyframes ----------------------------------------------------------
    def need_new_keyframe(self, frame: Frame, mapping_paused=False, mapping_busy=False) -> bool:
        st = self.status
        if self.localization_only or mapping_paused or frame.pose is None or st.state is not TrackingState.TRACKING:
            return False
        m = self.map
        n_tracked = int((frame.lm_ids >= 0).sum())
        min_obs = 3 if len(m.keyframes) > 2 else 2
        ref_ids = m.keyframe_landmarks(st.ref_kf)
        n_ref = sum(len(m.landmarks[i].observations) >= min_obs for i in ref_ids.tolist())
        since = frame.index - st.last_kf_frame
        last_kf = m.keyframes.get(st.last_kf)
        moved = last_kf is not None and np.linalg.norm(frame.pose.center - last_kf.center) > 1e-9
        p = self.params
        if since >= p.kf_max_interval and moved:
            return True
        if mapping_busy and n_tracked >= WEAK_TRACKING_RATIO * n_ref:
            return False
        return n_tracked < p.kf_tracked_ratio * n_ref and n_tracked > p.kf_min_tracked

    def make_keyframe(self, frame: Frame) -> Keyframe:
        m = self.map
        with m.lock.write():
            links = frame.lm_ids.copy()
            links[[i >= 0 and int(i) not in m.landmarks for i in links.tolist()]] = -1
            kf = Keyframe(m.new_keyframe_id(), frame.timestamp, frame.pose, frame.features, links, self.camera_id)
            m.insert_keyframe(kf)
        st = self.status
        st.last_kf = kf.id
        st.last_kf_frame = frame.index
        st.ref_kf = kf.id
        st.trajectory[-1] = _TrajectoryEntry(frame.timestamp, kf.id, SE3Pose.identity())
        return kf

    def refresh_after_correction(self):
        """Re-anchor the last pose after the map moved under it (loop closure)."""
        st = self.status
        if self.last is None or self.last.pose is None or not st.trajectory:
            return
        e = st.trajectory[-1]
        self.last.pose = e.rel @ self.map.keyframe_pose(e.ref_kf)

    def trajectory(self):
        from ..eval.ate import Trajectory

        entries = self.status.trajectory
        poses = [e.rel @ self.map.keyframe_pose(e.ref_kf) for e in entries]
        return Trajectory(np.array([e.timestamp for e in entries]), poses)
