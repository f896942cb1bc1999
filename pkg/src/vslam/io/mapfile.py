"""MessagePack map files.

Top-level document (a map with these keys, in this order):

``version``        unsigned int, currently 1
``cameras``        list of camera records (``kind`` plus the model's fields)
``keyframes``      list sorted by id: ``id``, ``timestamp``, ``camera``,
                   ``pose`` {``t``: 3 x f64, ``q``: 4 x f64 w-first},
                   ``scale_factor``, ``keypoints`` [[u, v, octave, angle]],
                   ``descriptors`` [32-byte bin], ``links`` [[keypoint, landmark]]
``landmarks``      list sorted by id: ``id``, ``position`` 3 x f64,
                   ``descriptor`` 32-byte bin, ``ref_keyframe``, ``first_keyframe``
``loop_edges``     [[a, b]] with a < b, sorted
``spanning_tree``  [[keyframe, parent]] for every non-root keyframe, sorted
``next_ids``       [next keyframe id, next landmark id]

World->camera poses; floats are always encoded as f64.
"""

from __future__ import annotations

import os
from pathlib import Path

import msgpack
import numpy as np

from ..camera import camera_from_dict
from ..features.orb import FeatureFrame
from ..geometry.transforms import SE3Pose
from ..map.database import MapDatabase, MapIntegrityError
from ..map.entities import Keyframe, Landmark
from ..map.place import PlaceIndex

FORMAT_VERSION = 1
TOP_LEVEL = ("version", "cameras", "keyframes", "landmarks", "loop_edges", "spanning_tree", "next_ids")


class MapFormatError(ValueError):
    """Malformed map document; the message names the offending field path."""


class MapVersionError(MapFormatError):
    pass


def _floats(a):
    return [float(x) for x in np.asarray(a, dtype=float).ravel()]


def map_to_document(m: MapDatabase) -> dict:
    with m.lock.read():
        cams = [{k: (float(v) if isinstance(v, float) else v) for k, v in c.to_dict().items()} for c in m.cameras]
        kfs = []
        for k in sorted(m.keyframes):
            kf = m.keyframes[k]
            f = kf.features
            idx = np.nonzero(kf.landmark_ids >= 0)[0]
            kfs.append(
                {
                    "id": int(k),
                    "timestamp": float(kf.timestamp),
                    "camera": int(kf.camera_id),
                    "pose": {"t": _floats(kf.pose.t), "q": _floats(kf.pose.q)},
                    "scale_factor": float(f.scale_factor),
                    "keypoints": [
                        [float(u), float(v), int(o), float(a)]
                        for (u, v), o, a in zip(f.uv.tolist(), f.octave.tolist(), f.angle.tolist())
                    ],
                    "descriptors": [bytes(d) for d in f.descriptors],
                    "links": [[int(i), int(kf.landmark_ids[i])] for i in idx],
                }
            )
        lms = [
            {
                "id": int(i),
                "position": _floats(lm.position),
                "descriptor": bytes(lm.descriptor),
                "ref_keyframe": int(lm.ref_keyframe),
                "first_keyframe": int(lm.first_keyframe),
            }
            for i, lm in sorted(m.landmarks.items())
        ]
        return {
            "version": FORMAT_VERSION,
            "cameras": cams,
            "keyframes": kfs,
            "landmarks": lms,
            "loop_edges": [[int(a), int(b)] for a, b in sorted(m.loop_edges)],
            "spanning_tree": [[int(k), int(p)] for p, k in sorted((p, k) for k, p in m.parent.items() if p is not None)],
            "next_ids": [int(m.next_keyframe_id), int(m.next_landmark_id)],
        }


def encode_map(m: MapDatabase) -> bytes:
    return msgpack.packb(map_to_document(m), use_bin_type=True)


def save_map(m: MapDatabase, path):
    """Write ``m`` atomically (temp file + rename)."""
    path = Path(path)
    data = encode_map(m)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


# -- decoding -------------------------------------------------------------


def _need(obj, key, typ, path):
    if not isinstance(obj, dict):
        raise MapFormatError(f"{path}: expected a map")
    if key not in obj:
        raise MapFormatError(f"{path}.{key}: missing")
    val = obj[key]
    if typ is float and isinstance(val, int) and not isinstance(val, bool):
        raise MapFormatError(f"{path}.{key}: expected float, got int")
    if not isinstance(val, typ) or (typ is int and isinstance(val, bool)):
        raise MapFormatError(f"{path}.{key}: expected {getattr(typ, '__name__', typ)}, got {type(val).__name__}")
    return val


def _vector(obj, key, n, path):
    v = _need(obj, key, list, path)
    if len(v) != n or not all(isinstance(x, float) for x in v):
        raise MapFormatError(f"{path}.{key}: expected {n} floats")
    return np.array(v, dtype=float)


def _bin32(val, path):
    if not isinstance(val, bytes) or len(val) != 32:
        raise MapFormatError(f"{path}: expected 32 raw bytes")
    return np.frombuffer(val, dtype=np.uint8)


def document_to_map(doc, vocabulary=None) -> MapDatabase:
    if not isinstance(doc, dict):
        raise MapFormatError("<root>: expected a map")
    version = _need(doc, "version", int, "<root>")
    if version != FORMAT_VERSION:
        raise MapVersionError(f"map format version {version} not supported (expected {FORMAT_VERSION})")
    for key in TOP_LEVEL:
        if key not in doc:
            raise MapFormatError(f"{key}: missing")
    extra = set(doc) - set(TOP_LEVEL)
    if extra:
        raise MapFormatError(f"{sorted(extra)[0]}: unknown top-level field")

    cameras = []
    for i, c in enumerate(_need(doc, "cameras", list, "<root>")):
        try:
            cameras.append(camera_from_dict(c))
        except (ValueError, TypeError) as exc:
            raise MapFormatError(f"cameras[{i}]: {exc}") from None
    m = MapDatabase(cameras, PlaceIndex(vocabulary))

    kf_docs = _need(doc, "keyframes", list, "<root>")
    pending_links = []
    for n, kd in enumerate(kf_docs):
        p = f"keyframes[{n}]"
        kid = _need(kd, "id", int, p)
        ts = _need(kd, "timestamp", float, p)
        cam_id = _need(kd, "camera", int, p)
        if not 0 <= cam_id < len(cameras):
            raise MapFormatError(f"{p}.camera: no camera {cam_id}")
        pose_d = _need(kd, "pose", dict, p)
        pose = SE3Pose(_vector(pose_d, "q", 4, p + ".pose"), _vector(pose_d, "t", 3, p + ".pose"))
        sf = _need(kd, "scale_factor", float, p)
        kps = _need(kd, "keypoints", list, p)
        descs = _need(kd, "descriptors", list, p)
        if len(descs) != len(kps):
            raise MapFormatError(f"{p}.descriptors: {len(descs)} entries for {len(kps)} keypoints")
        uv = np.zeros((len(kps), 2))
        octave = np.zeros(len(kps), dtype=np.int64)
        angle = np.zeros(len(kps))
        for j, kp in enumerate(kps):
            if (
                not isinstance(kp, list)
                or len(kp) != 4
                or not all(isinstance(kp[c], float) for c in (0, 1, 3))
                or not isinstance(kp[2], int)
            ):
                raise MapFormatError(f"{p}.keypoints[{j}]: expected [u, v, octave, angle]")
            uv[j] = kp[0], kp[1]
            octave[j] = kp[2]
            angle[j] = kp[3]
        D = np.stack([_bin32(d, f"{p}.descriptors[{j}]") for j, d in enumerate(descs)]) if descs else np.zeros((0, 32), np.uint8)
        cam = cameras[cam_id]
        feats = FeatureFrame.from_keypoints(cam, uv, octave, angle, np.zeros(len(uv)), D, sf)
        links = _need(kd, "links", list, p)
        for j, ln in enumerate(links):
            if not (isinstance(ln, list) and len(ln) == 2 and all(isinstance(x, int) for x in ln)):
                raise MapFormatError(f"{p}.links[{j}]: expected [keypoint, landmark]")
            if not 0 <= ln[0] < len(kps):
                raise MapFormatError(f"{p}.links[{j}]: keypoint {ln[0]} out of range")
        if kid in m.keyframes:
            raise MapFormatError(f"{p}.id: duplicate keyframe id {kid}")
        m.keyframes[kid] = Keyframe(kid, ts, pose, feats, None, cam_id)
        m.covisibility[kid] = {}
        pending_links.append((kid, links, p))

    for n, ld in enumerate(_need(doc, "landmarks", list, "<root>")):
        p = f"landmarks[{n}]"
        lid = _need(ld, "id", int, p)
        pos = _vector(ld, "position", 3, p)
        desc = _bin32(_need(ld, "descriptor", bytes, p), p + ".descriptor")
        ref = _need(ld, "ref_keyframe", int, p)
        first = _need(ld, "first_keyframe", int, p)
        if lid in m.landmarks:
            raise MapFormatError(f"{p}.id: duplicate landmark id {lid}")
        m.landmarks[lid] = Landmark(lid, pos, desc.copy(), ref, first)

    for kid, links, p in pending_links:
        for j, (kp, lid) in enumerate(links):
            if lid not in m.landmarks:
                raise MapFormatError(f"{p}.links[{j}]: unknown landmark {lid}")
            try:
                m._link(kid, kp, lid)
            except Exception as exc:
                raise MapFormatError(f"{p}.links[{j}]: {exc}") from None

    for n, e in enumerate(_need(doc, "loop_edges", list, "<root>")):
        if not (isinstance(e, list) and len(e) == 2 and all(x in m.keyframes for x in e if isinstance(x, int))):
            raise MapFormatError(f"loop_edges[{n}]: expected [a, b] of known keyframes")
        m.loop_edges.add((min(e), max(e)))
    if m.keyframes:
        m.parent = {k: None for k in m.keyframes}
        for n, e in enumerate(_need(doc, "spanning_tree", list, "<root>")):
            if not (isinstance(e, list) and len(e) == 2 and e[0] in m.keyframes and e[1] in m.keyframes):
                raise MapFormatError(f"spanning_tree[{n}]: expected [keyframe, parent] of known keyframes")
            m.parent[e[0]] = e[1]
    ids = _need(doc, "next_ids", list, "<root>")
    if len(ids) != 2 or not all(isinstance(x, int) for x in ids):
        raise MapFormatError("next_ids: expected [keyframe, landmark]")
    m.next_keyframe_id, m.next_landmark_id = ids
    try:
        m.audit()
    except MapIntegrityError as exc:
        raise MapFormatError(f"<root>: decoded map fails integrity audit: {exc}") from None
    for k in sorted(m.keyframes):
        kf = m.keyframes[k]
        kf.bow = m.index.add(k, kf.features.descriptors)
    return m


def decode_map(data: bytes, vocabulary=None) -> MapDatabase:
    try:
        doc = msgpack.unpackb(data, raw=False, strict_map_key=False)
    except Exception as exc:
        raise MapFormatError(f"<root>: not a valid MessagePack document ({exc})") from None
    return document_to_map(doc, vocabulary)


def load_map(path, vocabulary=None) -> MapDatabase:
    data = Path(path).read_bytes()
    return decode_map(data, vocabulary)
