"""The SLAM system: tracking plus mapping plus loop closing behind one API."""

from __future__ import annotations

import queue
import threading
from pathlib import Path

import numpy as np

from ..features.orb import FeatureFrame, detect_and_describe
from ..io.config import Config
from ..io.mapfile import load_map as _load_map
from ..io.mapfile import save_map as _save_map
from ..map.database import MapDatabase, MapError
from ..map.place import PlaceIndex
from ..map.vocabulary import Vocabulary, default_vocabulary
from .loop import LoopCloser, LoopReport
from .mapping import LocalMapper
from .tracking import Frame, Tracker
from .types import FrameResult, Mode, PipelineParams, TrackingState

MAX_QUEUED_KEYFRAMES = 3


class TimestampError(ValueError):
    """Frames must arrive with strictly increasing timestamps."""


class ModeError(MapError):
    pass


class System:
    """Monocular SLAM over one camera.

    ``stepped=True`` runs mapping and loop closing synchronously after each
    frame, which makes runs bit-reproducible. Otherwise they run on two
    worker threads fed by queues while tracking stays on the caller's thread.
    """

    def __init__(self, config: Config, vocabulary: Vocabulary | None = None, camera=None, stepped=True):
        self.config = config
        self.params = PipelineParams.from_config(config)
        self.camera = camera if camera is not None else config.camera()
        self.vocabulary = vocabulary if vocabulary is not None else default_vocabulary()
        self.stepped = stepped
        self.mode = Mode.MAPPING
        self.frames_fed = 0
        self.last_timestamp = -np.inf
        self._attach(MapDatabase([self.camera], PlaceIndex(self.vocabulary)))
        self._threads = []
        self._global = threading.Lock()  # held by a mapping step or a loop correction
        self._corrected = threading.Event()
        self._loop_busy = threading.Event()
        self._errors = []
        if not stepped:
            self._start_workers()

    @classmethod
    def create(cls, config: Config, vocabulary: Vocabulary | None = None, **kw) -> "System":
        return cls(config, vocabulary, **kw)

    def _attach(self, m: MapDatabase):
        self.map = m
        self.tracker = Tracker(m, self.params)
        self.mapper = LocalMapper(m, self.params)
        self.looper = LoopCloser(m, self.params)

    @property
    def state(self) -> TrackingState:
        return self.tracker.state

    @property
    def loop_reports(self) -> list[LoopReport]:
        return self.looper.reports

    # -- frames ---------------------------------------------------------------
    def features_for(self, image) -> FeatureFrame:
        return detect_and_describe(np.asarray(image), self.params.feature, self.camera)

    def feed_frame(self, frame, timestamp) -> FrameResult:
        """Track one image (2-D array) or precomputed FeatureFrame."""
        timestamp = float(timestamp)
        if not timestamp > self.last_timestamp:
            raise TimestampError(f"timestamp {timestamp!r} does not follow {self.last_timestamp!r}")
        self._raise_worker_errors()
        self.last_timestamp = timestamp
        features = frame if isinstance(frame, FeatureFrame) else self.features_for(frame)
        f = Frame(self.frames_fed, timestamp, features)
        self.frames_fed += 1
        if self._corrected.is_set():
            self._corrected.clear()
            self.tracker.refresh_after_correction()

        tr = self.tracker
        if tr.state is TrackingState.NOT_INITIALIZED and self.mode is Mode.MAPPING and not self.map.keyframes:
            return self._initialize(f)
        result = tr.track(f)
        if tr.need_new_keyframe(f, mapping_paused=self._mapping_paused(), mapping_busy=self._mapping_busy()):
            kf = tr.make_keyframe(f)
            result.keyframe_inserted = True
            result.keyframe_id = kf.id
            self._dispatch(kf.id)
        result.map_version = self.map.version
        return result

    track_frame = feed_frame

    def _initialize(self, f: Frame) -> FrameResult:
        ids = self.tracker.initialize(f)
        if ids is None:
            return FrameResult(f.timestamp, None, TrackingState.NOT_INITIALIZED, map_version=self.map.version)
        self.tracker.last = f
        self.mapper.recent = sorted(self.map.landmarks)
        self._dispatch(ids[1])
        _, lm = f.matched()
        n = len(lm)
        return FrameResult(
            f.timestamp, f.pose, TrackingState.TRACKING, n, n, True, ids[1], lm.copy(), self.map.version
        )

    def _mapping_paused(self):
        # keyframes queue up behind a busy mapper, but not behind a loop correction or a long backlog
        if self.stepped:
            return False
        return self._loop_busy.is_set() or self._map_q.qsize() >= MAX_QUEUED_KEYFRAMES

    def _mapping_busy(self):
        return not self.stepped and (self._global.locked() or self._map_q.qsize() > 0)

    def _dispatch(self, kf_id):
        if self.stepped:
            self._map_step(kf_id)
        else:
            self._map_q.put(kf_id)

    def _map_step(self, kf_id):
        with self._global:
            self.mapper.process(kf_id)
            report = self.looper.process(kf_id)
        if report is not None:
            if self.stepped:
                self.tracker.refresh_after_correction()
            else:
                self._corrected.set()
        return report

    # -- concurrent mode ----------------------------------------------------
    def _start_workers(self):
        self._map_q = queue.Queue()
        self._loop_q = queue.Queue()
        self._threads = [
            threading.Thread(target=self._mapping_worker, name="vslam-mapping", daemon=True),
            threading.Thread(target=self._loop_worker, name="vslam-loop", daemon=True),
        ]
        for t in self._threads:
            t.start()

    def _mapping_worker(self):
        while (kf := self._map_q.get()) is not None:
            try:
                with self._global:
                    self.mapper.process(kf)
                self._loop_q.put(kf)
            except Exception as exc:  # surfaced on the caller's thread
                self._errors.append(exc)
        self._loop_q.put(None)

    def _loop_worker(self):
        while (kf := self._loop_q.get()) is not None:
            try:
                with self._global:
                    self._loop_busy.set()
                    try:
                        report = self.looper.process(kf)
                    finally:
                        self._loop_busy.clear()
                if report is not None:
                    self._corrected.set()
            except Exception as exc:
                self._errors.append(exc)

    def _raise_worker_errors(self):
        if self._errors:
            raise RuntimeError("background stage failed") from self._errors[0]

    def _drain(self):
        if self._threads:
            self._map_q.put(None)
            for t in self._threads:
                t.join()
            self._threads = []
            self._raise_worker_errors()

    # -- maps and modes -------------------------------------------------------
    def save_map(self, path):
        _save_map(self.map, Path(path))

    def load_map(self, path):
        """Replace the current map; tracking then starts by relocalizing."""
        m = _load_map(Path(path), self.vocabulary)
        if not m.cameras:
            raise ModeError("loaded map has no camera")
        self._attach(m)
        self.tracker.status.state = TrackingState.LOST
        self.mode = Mode.MAPPING
        return m

    def set_mode(self, mode) -> Mode:
        mode = Mode(mode)
        if mode is Mode.LOCALIZATION_ONLY:
            if not self.map.keyframes:
                raise ModeError("localization-only mode needs a map; load or build one first")
            with self.map.lock.write():
                self.map.frozen = True
            if self.tracker.state is TrackingState.NOT_INITIALIZED:
                self.tracker.status.state = TrackingState.LOST
        else:
            with self.map.lock.write():
                self.map.frozen = False
        self.tracker.localization_only = mode is Mode.LOCALIZATION_ONLY
        self.mode = mode
        return mode

    def shutdown(self):
        """Stop background stages and return the trajectory of tracked frames."""
        self._drain()
        return self.tracker.trajectory()


def create_system(config: Config, vocabulary: Vocabulary | None = None, **kw) -> System:
    return System(config, vocabulary, **kw)
