"""Local mapping: landmark creation, fusion, local bundle adjustment, culling."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..features.matching import MatchParams, match_descriptors
from ..geometry.multiview import triangulate_many
from ..map.database import KeyframeCullPolicy, LandmarkCullPolicy, MapDatabase
from ..optim.ba import BAProblem, solve_local_ba
from ..optim.common import OptimizationError, SolverConfig
from .search import IndexedFrame, epipolar_mask, search_by_projection
from .types import PipelineParams

TRIANGULATION_NEIGHBORS = 10
FUSE_NEIGHBORS = 10
FUSE_RADIUS_PX = 3.0
LOCAL_BA_WINDOW = 15
CHI2_2DOF = 2.447  # sqrt of the 95% chi-square quantile, two degrees of freedom
MIN_BASELINE_RATIO = 0.01


@dataclass
class MappingReport:
    keyframe: int
    new_landmarks: int = 0
    fused: int = 0
    culled_landmarks: list = field(default_factory=list)
    culled_keyframes: list = field(default_factory=list)
    ba_outliers: int = 0


def sigmas_of(features, idx, pix):
    return pix * features.scale_factor ** features.octave[idx].astype(float)


def bundle_adjust(m: MapDatabase, variable, fixed, cfg: SolverConfig, landmark_ids=None):
    """BA over ``variable`` keyframes and the landmarks they observe.

    Other keyframes observing those landmarks join as fixed poses, as do the
    ones listed in ``fixed``. Writes poses and positions back and returns the
    (keyframe, landmark) observations whose whitened error exceeds the
    chi-square gate.
    """
    with m.lock.read():
        variable = [k for k in variable if k in m.keyframes]
        if landmark_ids is None:
            landmark_ids = sorted({int(i) for k in variable for i in m.keyframe_landmarks(k)})
        landmark_ids = [i for i in landmark_ids if i in m.landmarks]
        observers = sorted({k for i in landmark_ids for k in m.landmarks[i].observations})
        kf_ids = sorted(set(variable) | set(observers) | {k for k in fixed if k in m.keyframes})
        if not kf_ids or not landmark_ids:
            return []
        var = set(variable)
        is_fixed = np.array([k not in var for k in kf_ids])
        if not is_fixed.any():
            is_fixed[kf_ids.index(m.root) if m.root in kf_ids else 0] = True
        kf_row = {k: r for r, k in enumerate(kf_ids)}
        lm_row = {i: r for r, i in enumerate(landmark_ids)}
        cam, pt, bear, sig, keys = [], [], [], [], []
        for k in kf_ids:
            kf = m.keyframes[k]
            idx, ids = kf.linked()
            sel = np.array([i in lm_row for i in ids.tolist()], dtype=bool)
            idx, ids = idx[sel], ids[sel]
            cam.append(np.full(len(idx), kf_row[k]))
            pt.append(np.array([lm_row[i] for i in ids.tolist()], dtype=np.int64))
            bear.append(kf.features.bearings[idx])
            sig.append(sigmas_of(kf.features, idx, m.cameras[kf.camera_id].pixel_angle))
            keys += [(k, i) for i in ids.tolist()]
        P, _ = m.landmark_arrays(landmark_ids)
        prob = BAProblem(
            [m.keyframes[k].pose for k in kf_ids], is_fixed, P,
            np.concatenate(cam), np.concatenate(pt), np.concatenate(bear), np.concatenate(sig),
        )  # fmt: skip
    try:
        res = solve_local_ba(prob, cfg)
    except OptimizationError:
        return []
    with m.lock.write():
        for r, k in enumerate(kf_ids):
            if not is_fixed[r] and k in m.keyframes:
                m.set_pose(k, res.poses[r])
        alive = [r for r, i in enumerate(landmark_ids) if i in m.landmarks]
        m.set_positions([landmark_ids[r] for r in alive], res.points[alive])
    bad = np.nonzero(~(res.errors <= CHI2_2DOF))[0]
    return [keys[j] for j in bad.tolist()]


class LocalMapper:
    def __init__(self, m: MapDatabase, params: PipelineParams):
        self.map = m
        self.params = params
        self.recent: list[int] = []
        self.ba_cfg = None

    def _cfg(self, pix):
        return SolverConfig(
            max_iterations=min(self.params.ba_iterations, 10),
            huber_delta=self.params.huber_delta(pix),
            cost_tol=1e-6,
        )

    def process(self, kf_id) -> MappingReport:
        """Full mapping step for a newly inserted keyframe."""
        m = self.map
        rep = MappingReport(kf_id)
        if kf_id not in m.keyframes:
            return rep
        pix = m.camera(m.keyframes[kf_id]).pixel_angle
        with m.lock.write():
            for i in m.keyframe_landmarks(kf_id).tolist():
                if len(m.landmarks[i].observations) <= 6:
                    m.update_descriptor(i)
            rep.culled_landmarks = m.cull_landmarks(kf_id, LandmarkCullPolicy(), self.recent)
            keep = set(m.landmarks)
            self.recent = [i for i in self.recent if i in keep and kf_id - m.landmarks[i].first_keyframe < 3]
        new = self.triangulate(kf_id)
        self.recent += new
        rep.new_landmarks = len(new)
        rep.fused = self.fuse(kf_id)
        outliers = bundle_adjust(m, [kf_id] + m.best_covisible(kf_id, LOCAL_BA_WINDOW - 1), [], self._cfg(pix))
        with m.lock.write():
            for k, i in outliers:
                if i in m.landmarks and k in m.landmarks[i].observations:
                    m.remove_observation(k, i)
        rep.ba_outliers = len(outliers)
        rep.culled_keyframes = m.cull_keyframes(m.best_covisible(kf_id, 20), KeyframeCullPolicy(), protect={kf_id})
        return rep

    # -- new landmarks ------------------------------------------------------
    def triangulate(self, kf_id):
        m = self.map
        with m.lock.read():
            kf = m.keyframes[kf_id]
            cam = m.camera(kf)
            pix = cam.pixel_angle
            depth = m.median_depth(kf_id)
            neighbors = m.best_covisible(kf_id, TRIANGULATION_NEIGHBORS)
        created = []
        for n in neighbors:
            with m.lock.read():
                if n not in m.keyframes or kf_id not in m.keyframes:
                    continue
                other = m.keyframes[n]
                baseline = np.linalg.norm(kf.center - other.center)
                if not np.isfinite(depth) or baseline < MIN_BASELINE_RATIO * depth:
                    continue
                free1 = np.nonzero(kf.landmark_ids < 0)[0]
                free2 = np.nonzero(other.landmark_ids < 0)[0]
                if len(free1) == 0 or len(free2) == 0:
                    continue
                b1 = kf.features.bearings[free1]
                b2 = other.features.bearings[free2]
                s1 = sigmas_of(kf.features, free1, pix)
                s2 = sigmas_of(other.features, free2, m.camera(other).pixel_angle)
                mask = epipolar_mask(kf.pose, other.pose, b1, b2, 3.0 * max(s1.max(), s2.max()))
                pairs = match_descriptors(
                    kf.features.descriptors[free1], other.features.descriptors[free2],
                    MatchParams(ratio=0.8, max_hamming=self.params.match.max_hamming), mask,
                )  # fmt: skip
                if len(pairs) == 0:
                    continue
                i1, i2 = pairs[:, 0], pairs[:, 1]
                X, ok = triangulate_many(kf.pose, other.pose, b1[i1], b2[i2], self.params.two_view.min_parallax_deg)
                ok &= _gate(kf.pose, X, b1[i1], s1[i1]) & _gate(other.pose, X, b2[i2], s2[i2])
            with m.lock.write():
                for j in np.nonzero(ok)[0]:
                    a, b = int(free1[i1[j]]), int(free2[i2[j]])
                    if n not in m.keyframes or kf.landmark_ids[a] >= 0 or other.landmark_ids[b] >= 0:
                        continue
                    created.append(m.add_landmark(X[j], {kf_id: a, n: b}))
        return created

    # -- duplicates ---------------------------------------------------------
    def fuse(self, kf_id):
        """Project landmarks between the keyframe and its neighbors; merge duplicates."""
        m = self.map
        with m.lock.read():
            neighbors = m.best_covisible(kf_id, FUSE_NEIGHBORS)
            second = {k for n in neighbors for k in m.best_covisible(n, 5)} - {kf_id} - set(neighbors)
            targets = neighbors + sorted(second)
        n_fused = 0
        own = m.keyframe_landmarks(kf_id)
        for t in targets:
            n_fused += self._fuse_into(t, own)
        pool = sorted({int(i) for t in targets if t in m.keyframes for i in m.keyframe_landmarks(t)})
        n_fused += self._fuse_into(kf_id, np.array(pool, dtype=np.int64))
        with m.lock.write():
            for i in m.keyframe_landmarks(kf_id).tolist():
                if len(m.landmarks[i].observations) <= 6:
                    m.update_descriptor(i)
        return n_fused

    def _fuse_into(self, kf_id, ids):
        m = self.map
        with m.lock.write():
            if kf_id not in m.keyframes:
                return 0
            ids = np.array([i for i in np.asarray(ids).tolist() if i in m.landmarks and kf_id not in m.landmarks[i].observations], dtype=np.int64)
            if len(ids) == 0:
                return 0
            kf = m.keyframes[kf_id]
            cam = m.camera(kf)
            P, D = m.landmark_arrays(ids)
            rows, kps, _ = search_by_projection(
                IndexedFrame(kf.features), cam, kf.pose, P, D, FUSE_RADIUS_PX * cam.pixel_angle,
                self.params.match.max_hamming, ratio=1.0,
            )  # fmt: skip
            n = 0
            for r, kp in zip(rows.tolist(), kps.tolist()):
                lm = int(ids[r])
                if lm not in m.landmarks or kf_id in m.landmarks[lm].observations:
                    continue
                cur = int(kf.landmark_ids[kp])
                if cur < 0:
                    m.add_observation(kf_id, kp, lm)
                elif cur != lm:
                    a, b = (cur, lm) if len(m.landmarks[cur].observations) < len(m.landmarks[lm].observations) else (lm, cur)
                    m.replace_landmark(a, b)
                else:
                    continue
                n += 1
            return n


def _gate(pose, X, bearings, sigmas):
    pc = pose.apply(X)
    nrm = np.linalg.norm(pc, axis=1)
    cosang = np.sum(pc * bearings, axis=1) / np.maximum(nrm, 1e-300)
    ang = np.arccos(np.clip(cosang, -1.0, 1.0))
    return (ang <= CHI2_2DOF * sigmas) & (cosang > 0)
