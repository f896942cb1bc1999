"""Loop detection, Sim3 verification and map-wide correction."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..features.matching import MatchParams, match_descriptors
from ..geometry.multiview import estimate_sim3_ransac
from ..map.database import MapDatabase, sim3_of
from ..optim.common import OptimizationError, SolverConfig
from ..optim.posegraph import Sim3Edge, solve_pose_graph_sim3
from .mapping import bundle_adjust
from .search import IndexedFrame, search_by_projection
from .types import PipelineParams

MIN_KEYFRAMES = 10
LOOP_GAP = 10  # keyframes between two accepted loops
SCORE_RATIO = 0.5  # candidate floor relative to the best covisible neighbor
CANDIDATES = 3
GUIDED_RADIUS_PX = 10.0
FUSE_RADIUS_PX = 4.0
MIN_GUIDED_MATCHES = 40


@dataclass
class LoopReport:
    keyframe: int
    match: int
    inliers: int
    matches: int
    scale: float
    corrected: int = 0


class LoopCloser:
    def __init__(self, m: MapDatabase, params: PipelineParams):
        self.map = m
        self.params = params
        self.last_loop_kf = -(10**9)
        self.reports: list[LoopReport] = []

    def candidates(self, kf_id):
        """Place-recognition candidates for ``kf_id`` outside its covisible set."""
        m = self.map
        with m.lock.read():
            kf = m.keyframes[kf_id]
            near = m.covisible(kf_id)
            if not near:
                return []
            best = max(m.index.score(kf.bow if kf.bow else kf.features.descriptors, n) for n, _ in near)
            exclude = {kf_id} | {n for n, _ in near}
            vec = kf.bow if kf.bow else None
            return m.index.query(kf.features.descriptors, exclude, SCORE_RATIO * best, CANDIDATES, vec)

    def process(self, kf_id) -> LoopReport | None:
        m = self.map
        if not self.params.loop_enabled or kf_id not in m.keyframes:
            return None
        if len(m.keyframes) < MIN_KEYFRAMES or kf_id - self.last_loop_kf < LOOP_GAP:
            return None
        for cand, _ in self.candidates(kf_id):
            found = self.verify(kf_id, cand)
            if found is not None:
                S, inliers, matches = found
                report = LoopReport(kf_id, cand, inliers, matches, S.s)
                report.corrected = self.correct(kf_id, cand, S)
                self.last_loop_kf = kf_id
                self.reports.append(report)
                return report
        return None

    # -- verification -------------------------------------------------------
    def verify(self, kf_id, cand_id):
        """Sim3 from camera ``cand_id`` to camera ``kf_id``, or None."""
        m = self.map
        p = self.params
        with m.lock.read():
            if cand_id not in m.keyframes:
                return None
            K, C = m.keyframes[kf_id], m.keyframes[cand_id]
            cam = m.camera(K)
            pix = cam.pixel_angle
            iK, lK = K.linked()
            iC, lC = C.linked()
            pairs = match_descriptors(K.features.descriptors[iK], C.features.descriptors[iC], MatchParams(0.75, p.match.max_hamming))
            if len(pairs) < p.loop_min_inliers:
                return None
            PK, _ = m.landmark_arrays(lK[pairs[:, 0]])
            PC, _ = m.landmark_arrays(lC[pairs[:, 1]])
            X1, X2 = K.pose.apply(PK), C.pose.apply(PC)
            b1 = K.features.bearings[iK[pairs[:, 0]]]
            b2 = C.features.bearings[iC[pairs[:, 1]]]
            rng = np.random.default_rng([p.seed, kf_id, cand_id, 7])
            found = estimate_sim3_ransac(X1, X2, b1, b2, p.sim3(pix), rng)
            if found is None:
                return None
            S, inl = found
            S_kw = S @ C.pose.to_sim3()
            ids = self._loop_side(cand_id)
            P, D = m.landmark_arrays(ids)
            rows, _, _ = search_by_projection(
                IndexedFrame(K.features), cam, S_kw, P, D, GUIDED_RADIUS_PX * pix, p.match.max_hamming, ratio=0.9
            )
            if len(rows) < MIN_GUIDED_MATCHES:
                return None
            return S, int(inl.sum()), len(rows)

    def _loop_side(self, cand_id):
        m = self.map
        kfs = [cand_id] + m.best_covisible(cand_id, 10)
        return np.array(sorted({int(i) for k in kfs for i in m.keyframe_landmarks(k)}), dtype=np.int64)

    # -- correction ---------------------------------------------------------
    def correct(self, kf_id, cand_id, S):
        """Snap the current neighborhood onto the loop, fuse, then spread the fix."""
        m = self.map
        p = self.params
        with m.lock.write():
            K, C = m.keyframes[kf_id], m.keyframes[cand_id]
            S_kw = S @ C.pose.to_sim3()
            conn = [kf_id] + [k for k, _ in m.covisible(kf_id)]
            conn_set = set(conn)
            old = {k: sim3_of(kf) for k, kf in m.keyframes.items()}
            new = {}
            for k in conn:
                rel = m.keyframes[k].pose @ K.pose.inverse()
                new[k] = (rel.to_sim3() @ S_kw).inverse()
            owners = {}
            for k in conn:
                for i in m.keyframe_landmarks(k).tolist():
                    if i not in owners:
                        ref = m.landmarks[i].ref_keyframe
                        owners[i] = ref if ref in conn_set else k
            loop_ids = [i for i in self._loop_side(cand_id).tolist() if not conn_set & set(m.landmarks[i].observations)]
            pre_edges = m.essential_edges(p.essential_min_weight)
            before = {k: set(m.covisibility[k]) for k in conn}

            m.apply_corrections({k: new[k] @ old[k].inverse() for k in conn}, owners)
            for k in conn:
                self._fuse_loop(k, np.array(loop_ids, dtype=np.int64))
            m.add_loop_edge(kf_id, cand_id)

            links = {(min(a, b), max(a, b)) for a in conn if a in m.keyframes for b in set(m.covisibility[a]) - before[a] - conn_set}
            links.add((min(kf_id, cand_id), max(kf_id, cand_id)))
            init = {k: new.get(k, old[k]) for k in m.keyframes}
            edges = [Sim3Edge(a, b, old[a].inverse() @ old[b]) for a, b in pre_edges if a in m.keyframes and b in m.keyframes]
            edges += [Sim3Edge(a, b, init[a].inverse() @ init[b]) for a, b in sorted(links)]
            cfg = SolverConfig(max_iterations=p.posegraph_iterations, huber_delta=1e12)
            try:
                res = solve_pose_graph_sim3(init, edges, {cand_id}, cfg)
            except OptimizationError:
                return len(conn)
            m.apply_corrections({k: res.nodes[k] @ init[k].inverse() for k in init})
        pix = m.camera(m.keyframes[kf_id]).pixel_angle
        cfg = SolverConfig(max_iterations=p.ba_iterations, huber_delta=p.huber_delta(pix), cost_tol=1e-9)
        outliers = bundle_adjust(m, sorted(m.keyframes), [], cfg)
        with m.lock.write():
            for k, i in outliers:
                if i in m.landmarks and k in m.landmarks[i].observations:
                    m.remove_observation(k, i)
        return len(conn)

    def _fuse_loop(self, kf_id, ids):
        m = self.map
        ids = np.array([i for i in ids.tolist() if i in m.landmarks and kf_id not in m.landmarks[i].observations], dtype=np.int64)
        if len(ids) == 0:
            return
        kf = m.keyframes[kf_id]
        cam = m.camera(kf)
        P, D = m.landmark_arrays(ids)
        rows, kps, _ = search_by_projection(
            IndexedFrame(kf.features), cam, kf.pose, P, D, FUSE_RADIUS_PX * cam.pixel_angle, self.params.match.max_hamming, 1.0
        )
        for r, kp in zip(rows.tolist(), kps.tolist()):
            lm = int(ids[r])
            if lm not in m.landmarks or kf_id in m.landmarks[lm].observations:
                continue
            cur = int(kf.landmark_ids[kp])
            if cur < 0:
                m.add_observation(kf_id, kp, lm)
            elif cur != lm:
                m.replace_landmark(cur, lm)
