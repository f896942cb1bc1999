"""The shared map: entities, covisibility graph, spanning tree and place index."""

from __future__ import annotations

import functools
from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from ..camera import CameraModel
from ..geometry.transforms import SE3Pose, Sim3Transform
from .entities import Keyframe, Landmark, representative_descriptor
from .place import PlaceIndex
from .rwlock import RWLock

LOCAL_MAP_CAP = 60


class MapError(RuntimeError):
    pass


class DuplicateLinkError(MapError):
    pass


class MapFrozenError(MapError):
    """A write was attempted while the map is read-only."""


class MapIntegrityError(MapError):
    pass


@dataclass(frozen=True)
class LandmarkCullPolicy:
    min_found_ratio: float = 0.25
    min_observations: int = 2
    grace_keyframes: int = 2


@dataclass(frozen=True)
class KeyframeCullPolicy:
    redundant_fraction: float = 0.9
    min_other_observers: int = 3


def _writes(method):
    @functools.wraps(method)
    def wrapper(self, *args, **kwargs):
        with self.lock.write():
            if self.frozen:
                raise MapFrozenError(f"map is read-only; {method.__name__} refused")
            self.version += 1
            return method(self, *args, **kwargs)

    return wrapper


class MapDatabase:
    def __init__(self, cameras=(), place_index: PlaceIndex | None = None):
        self.cameras: list[CameraModel] = list(cameras)
        self.keyframes: dict[int, Keyframe] = {}
        self.landmarks: dict[int, Landmark] = {}
        self.covisibility: dict[int, dict[int, int]] = {}
        self.parent: dict[int, int | None] = {}
        self.loop_edges: set[tuple[int, int]] = set()
        self.index = place_index or PlaceIndex()
        self.next_keyframe_id = 0
        self.next_landmark_id = 0
        self.lock = RWLock()
        self.version = 0
        self.frozen = False
        # removed keyframe -> (surviving parent, pose relative to it); lets
        # callers re-anchor anything expressed relative to a culled keyframe
        self.graveyard: dict[int, tuple[int, SE3Pose]] = {}

    # -- reads ------------------------------------------------------------
    def __len__(self):
        return len(self.keyframes)

    @property
    def root(self):
        return next(iter(self.keyframes), None)

    def camera(self, kf: Keyframe) -> CameraModel:
        return self.cameras[kf.camera_id]

    def covisible(self, kf_id, min_weight=1):
        """Neighbors as (id, weight), strongest first, ties by id."""
        items = [(k, w) for k, w in self.covisibility.get(kf_id, {}).items() if w >= min_weight]
        return sorted(items, key=lambda x: (-x[1], x[0]))

    def best_covisible(self, kf_id, n):
        return [k for k, _ in self.covisible(kf_id)[:n]]

    def children(self, kf_id):
        return sorted(k for k, p in self.parent.items() if p == kf_id)

    def keyframe_landmarks(self, kf_id):
        ids = self.keyframes[kf_id].landmark_ids
        return ids[ids >= 0]

    def local_keyframes(self, ref_id, cap=LOCAL_MAP_CAP, seeds=()):
        """Up to ``cap`` keyframes around ``ref_id``, covisibility-strongest first.

        ``seeds`` (e.g. keyframes sharing landmarks with the current frame) are
        taken right after the reference; then neighbors of the set are added
        by descending weight.
        """
        out = [ref_id]
        seen = {ref_id}
        for k in seeds:
            if k in self.keyframes and k not in seen and len(out) < cap:
                out.append(k)
                seen.add(k)
        frontier = list(out)
        while frontier and len(out) < cap:
            pool = {}
            for k in frontier:
                for n, w in self.covisibility.get(k, {}).items():
                    if n not in seen:
                        pool[n] = max(pool.get(n, 0), w)
            nxt = [n for n, _ in sorted(pool.items(), key=lambda x: (-x[1], x[0]))][: cap - len(out)]
            out.extend(nxt)
            seen.update(nxt)
            frontier = nxt
        return out

    def landmark_arrays(self, ids):
        ids = np.asarray(ids, dtype=np.int64)
        if len(ids) == 0:
            return np.zeros((0, 3)), np.zeros((0, 32), np.uint8)
        P = np.stack([self.landmarks[i].position for i in ids.tolist()])
        D = np.stack([self.landmarks[i].descriptor for i in ids.tolist()])
        return P, D

    def median_depth(self, kf_id):
        kf = self.keyframes[kf_id]
        ids = self.keyframe_landmarks(kf_id)
        if len(ids) == 0:
            return float("nan")
        P, _ = self.landmark_arrays(ids)
        return float(np.median(kf.pose.apply(P)[:, 2] if self.camera(kf).kind == "perspective" else np.linalg.norm(kf.pose.apply(P), axis=1)))

    # -- writes -----------------------------------------------------------
    @_writes
    def add_camera(self, camera: CameraModel) -> int:
        self.cameras.append(camera)
        return len(self.cameras) - 1

    def new_keyframe_id(self):
        return self.next_keyframe_id

    @_writes
    def insert_keyframe(self, kf: Keyframe) -> Keyframe:
        """Insert a keyframe whose ``landmark_ids`` may reference existing landmarks."""
        if kf.id in self.keyframes or kf.id < self.next_keyframe_id:
            raise MapError(f"keyframe id {kf.id} already used")
        if not 0 <= kf.camera_id < len(self.cameras):
            raise MapError(f"keyframe camera {kf.camera_id} not registered")
        links = kf.landmark_ids.copy()
        missing = [int(i) for i in links[links >= 0] if int(i) not in self.landmarks]
        if missing:
            raise MapError(f"keyframe links unknown landmarks {missing[:5]}")
        if len(np.unique(links[links >= 0])) != int((links >= 0).sum()):
            raise DuplicateLinkError("keyframe links one landmark from two keypoints")
        self.next_keyframe_id = kf.id + 1
        self.keyframes[kf.id] = kf
        self.covisibility[kf.id] = {}
        kf.landmark_ids[:] = -1
        for idx in np.nonzero(links >= 0)[0]:
            self._link(kf.id, int(idx), int(links[idx]))
        nb = self.covisible(kf.id)
        if len(self.keyframes) == 1:
            self.parent[kf.id] = None
        elif nb:
            self.parent[kf.id] = nb[0][0]
        else:
            self.parent[kf.id] = max(k for k in self.keyframes if k != kf.id)
        kf.bow = self.index.add(kf.id, kf.features.descriptors)
        return kf

    def _link(self, kf_id, kp_idx, lm_id):
        kf = self.keyframes[kf_id]
        lm = self.landmarks[lm_id]
        if kf.landmark_ids[kp_idx] >= 0:
            raise DuplicateLinkError(f"keypoint {kp_idx} of keyframe {kf_id} already linked")
        if kf_id in lm.observations:
            raise DuplicateLinkError(f"landmark {lm_id} already observed by keyframe {kf_id}")
        for other in lm.observations:
            row = self.covisibility[other]
            row[kf_id] = row.get(kf_id, 0) + 1
            self.covisibility[kf_id][other] = self.covisibility[kf_id].get(other, 0) + 1
        lm.observations[kf_id] = kp_idx
        kf.landmark_ids[kp_idx] = lm_id

    def _unlink(self, kf_id, lm_id):
        lm = self.landmarks[lm_id]
        kp = lm.observations.pop(kf_id)
        self.keyframes[kf_id].landmark_ids[kp] = -1
        for other in lm.observations:
            for a, b in ((kf_id, other), (other, kf_id)):
                row = self.covisibility[a]
                row[b] -= 1
                if row[b] == 0:
                    del row[b]
        if lm.ref_keyframe == kf_id and lm.observations:
            lm.ref_keyframe = min(lm.observations)

    @_writes
    def add_landmark(self, position, observations: dict, descriptor=None) -> int:
        """Create a landmark observed at ``observations`` (keyframe id -> keypoint)."""
        if not observations:
            raise MapError("a landmark needs at least one observation")
        for k, i in observations.items():
            if k not in self.keyframes:
                raise MapError(f"unknown keyframe {k}")
            if self.keyframes[k].landmark_ids[i] >= 0:
                raise DuplicateLinkError(f"keypoint {i} of keyframe {k} already linked")
        lm_id = self.next_landmark_id
        self.next_landmark_id += 1
        first = min(observations)
        if descriptor is None:
            descriptor = representative_descriptor(
                [self.keyframes[k].features.descriptors[i] for k, i in sorted(observations.items())]
            )
        self.landmarks[lm_id] = Landmark(lm_id, position, descriptor, first, max(observations))
        for k, i in sorted(observations.items()):
            self._link(k, int(i), lm_id)
        return lm_id

    @_writes
    def add_observation(self, kf_id, kp_idx, lm_id):
        if kf_id not in self.keyframes or lm_id not in self.landmarks:
            raise MapError(f"unknown keyframe {kf_id} or landmark {lm_id}")
        self._link(kf_id, int(kp_idx), lm_id)

    @_writes
    def remove_observation(self, kf_id, lm_id):
        self._unlink(kf_id, lm_id)
        if not self.landmarks[lm_id].observations:
            del self.landmarks[lm_id]

    @_writes
    def remove_landmark(self, lm_id):
        for k in sorted(self.landmarks[lm_id].observations):
            self._unlink(k, lm_id)
        del self.landmarks[lm_id]

    @_writes
    def update_descriptor(self, lm_id):
        lm = self.landmarks[lm_id]
        lm.descriptor = representative_descriptor(
            [self.keyframes[k].features.descriptors[i] for k, i in sorted(lm.observations.items())]
        )

    @_writes
    def replace_landmark(self, old_id, new_id):
        """Fuse ``old_id`` into ``new_id``; observations move where possible."""
        if old_id == new_id:
            return
        old = self.landmarks[old_id]
        new = self.landmarks[new_id]
        for k, i in sorted(old.observations.items()):
            self._unlink(k, old_id)
            if k not in new.observations:
                self._link(k, i, new_id)
        new.found += old.found
        new.visible += old.visible
        del self.landmarks[old_id]

    @_writes
    def set_pose(self, kf_id, pose: SE3Pose):
        self.keyframes[kf_id].pose = pose

    @_writes
    def set_position(self, lm_id, position):
        self.landmarks[lm_id].position = np.array(position, dtype=float).reshape(3)

    @_writes
    def set_positions(self, ids, positions):
        for i, p in zip(np.asarray(ids).tolist(), np.asarray(positions, dtype=float)):
            self.landmarks[i].position = p.copy()

    @_writes
    def increase_visible(self, ids, n=1):
        for i in np.asarray(ids).tolist():
            if i in self.landmarks:
                self.landmarks[i].visible += n

    @_writes
    def increase_found(self, ids, n=1):
        for i in np.asarray(ids).tolist():
            if i in self.landmarks:
                self.landmarks[i].found += n

    @_writes
    def add_loop_edge(self, a, b):
        self.loop_edges.add((min(a, b), max(a, b)))

    @_writes
    def apply_corrections(self, corrections: dict, owners: dict | None = None):
        """Move keyframes by world-frame similarities ``{kf id: W}``.

        Each corrected keyframe's camera-to-world transform becomes W N. A
        landmark moves with the correction of ``owners[landmark id]`` when
        given, otherwise with that of its reference keyframe.
        """
        for kf_id, W in corrections.items():
            kf = self.keyframes[kf_id]
            kf.pose = (kf.pose.to_sim3() @ W.inverse()).to_se3()
        for lm in self.landmarks.values():
            W = corrections.get(lm.ref_keyframe if owners is None else owners.get(lm.id))
            if W is not None:
                lm.position = W.apply(lm.position[None])[0]

    @_writes
    def remove_keyframe(self, kf_id):
        if kf_id == self.root:
            raise MapError("the root keyframe cannot be removed")
        kf = self.keyframes[kf_id]
        for lm_id in sorted(set(kf.landmark_ids[kf.landmark_ids >= 0].tolist())):
            self._unlink(kf_id, lm_id)
            if not self.landmarks[lm_id].observations:
                del self.landmarks[lm_id]
        new_parent = self.parent[kf_id]
        self.graveyard[kf_id] = (new_parent, kf.pose @ self.keyframes[new_parent].pose.inverse())
        for c in self.children(kf_id):
            self.parent[c] = new_parent
        del self.parent[kf_id]
        for other in list(self.covisibility.pop(kf_id)):
            self.covisibility[other].pop(kf_id, None)
        self.loop_edges = {e for e in self.loop_edges if kf_id not in e}
        self.index.remove(kf_id)
        del self.keyframes[kf_id]

    def cull_landmarks(self, current_kf_id, policy=LandmarkCullPolicy(), candidates=None):
        """Remove unreliable landmarks; returns removed ids in ascending order."""
        with self.lock.write():
            ids = sorted(self.landmarks) if candidates is None else sorted(set(candidates) & set(self.landmarks))
            bad = []
            for i in ids:
                lm = self.landmarks[i]
                aged = current_kf_id - lm.first_keyframe >= policy.grace_keyframes
                if lm.found_ratio < policy.min_found_ratio or (aged and len(lm.observations) < policy.min_observations):
                    bad.append(i)
            for i in bad:
                self.remove_landmark(i)
            return bad

    def redundant_fraction(self, kf_id, min_other_observers=3):
        ids = self.keyframe_landmarks(kf_id)
        if len(ids) == 0:
            return 0.0
        n = sum(len(self.landmarks[i].observations) - 1 >= min_other_observers for i in ids.tolist())
        return n / len(ids)

    def cull_keyframes(self, candidates, policy=KeyframeCullPolicy(), protect=()):
        """Remove redundant keyframes among ``candidates``; returns removed ids."""
        with self.lock.write():
            protect = set(protect) | {self.root} | {k for e in self.loop_edges for k in e}
            removed = []
            for k in sorted(set(candidates)):
                if k in protect or k not in self.keyframes:
                    continue
                if self.redundant_fraction(k, policy.min_other_observers) >= policy.redundant_fraction:
                    self.remove_keyframe(k)
                    removed.append(k)
            return removed

    def keyframe_pose(self, kf_id) -> SE3Pose:
        """Pose of a live keyframe, or the re-anchored pose of a removed one."""
        rel = SE3Pose.identity()
        while kf_id not in self.keyframes:
            kf_id, r = self.graveyard[kf_id]
            rel = rel @ r
        return rel @ self.keyframes[kf_id].pose

    # -- integrity --------------------------------------------------------
    def recount_covisibility(self):
        """Covisibility from scratch by pairwise landmark intersection."""
        sets = {k: set(self.keyframe_landmarks(k).tolist()) for k in self.keyframes}
        out = {k: {} for k in self.keyframes}
        ids = sorted(sets)
        for a_i, a in enumerate(ids):
            for b in ids[a_i + 1 :]:
                w = len(sets[a] & sets[b])
                if w:
                    out[a][b] = w
                    out[b][a] = w
        return out

    def audit(self):
        """Raise :class:`MapIntegrityError` listing every broken invariant."""
        problems = []
        for k, kf in self.keyframes.items():
            for idx in np.nonzero(kf.landmark_ids >= 0)[0]:
                lm = self.landmarks.get(int(kf.landmark_ids[idx]))
                if lm is None:
                    problems.append(f"keyframe {k} keypoint {idx} links a deleted landmark")
                elif lm.observations.get(k) != idx:
                    problems.append(f"keyframe {k} keypoint {idx} link not mirrored by landmark {lm.id}")
        for i, lm in self.landmarks.items():
            if not lm.observations:
                problems.append(f"landmark {i} has no observations")
            for k, idx in lm.observations.items():
                if k not in self.keyframes:
                    problems.append(f"landmark {i} observed by deleted keyframe {k}")
                elif self.keyframes[k].landmark_ids[idx] != i:
                    problems.append(f"landmark {i} observation ({k}, {idx}) not mirrored")
            if lm.ref_keyframe not in lm.observations and lm.observations:
                problems.append(f"landmark {i} reference keyframe {lm.ref_keyframe} does not observe it")
        if self.recount_covisibility() != {k: dict(v) for k, v in self.covisibility.items()}:
            problems.append("covisibility differs from a recount")
        problems += self._tree_problems()
        if problems:
            raise MapIntegrityError("; ".join(problems[:10]))

    def _tree_problems(self):
        if not self.keyframes:
            return []
        if set(self.parent) != set(self.keyframes):
            return ["spanning tree nodes differ from keyframes"]
        roots = [k for k, p in self.parent.items() if p is None]
        if roots != [self.root]:
            return [f"spanning tree roots {roots}, expected [{self.root}]"]
        kids = defaultdict(list)
        for k, p in self.parent.items():
            if p is not None:
                kids[p].append(k)
        seen, stack = set(), [self.root]
        while stack:
            n = stack.pop()
            if n in seen:
                return ["spanning tree has a cycle"]
            seen.add(n)
            stack.extend(kids[n])
        if seen != set(self.keyframes):
            return ["spanning tree is not connected"]
        return []

    def spanning_tree_edges(self):
        return sorted((p, k) for k, p in self.parent.items() if p is not None)

    def essential_edges(self, min_weight=100):
        """Spanning tree, strong covisibility and loop edges as sorted (a, b), a < b."""
        edges = {(min(a, b), max(a, b)) for a, b in self.spanning_tree_edges()}
        for a, row in self.covisibility.items():
            for b, w in row.items():
                if a < b and w >= min_weight:
                    edges.add((a, b))
        edges |= self.loop_edges
        return sorted(edges)

    def rebuild_index(self, place_index: PlaceIndex):
        self.index = place_index
        for k in sorted(self.keyframes):
            self.keyframes[k].bow = place_index.add(k, self.keyframes[k].features.descriptors)

    def checksum_state(self):
        """Tuple capturing poses, positions and links, for equality checks."""
        kfs = tuple(
            (k, kf.pose.q.tobytes(), kf.pose.t.tobytes(), kf.landmark_ids.tobytes()) for k, kf in sorted(self.keyframes.items())
        )
        lms = tuple((i, lm.position.tobytes(), lm.descriptor.tobytes()) for i, lm in sorted(self.landmarks.items()))
        return kfs, lms, tuple(self.spanning_tree_edges()), tuple(sorted(self.loop_edges))


def sim3_of(kf: Keyframe) -> Sim3Transform:
    """Camera-to-world similarity of a keyframe (scale 1)."""
    return kf.pose.inverse().to_sim3()
