"""Identity association and per-sequence orchestration.

Each frame runs the same loop: predict every live trajectory forward, build
the IoU matrix between detections and predictions, solve the assignment on
cost 1 - IoU, gate it, then update matched tracks, spawn new ones from
unmatched detections, and age unmatched tracks toward termination. A track
survives up to delta_max consecutive misses as "temporary" before it is
terminated for good; terminated tracks are kept for bookkeeping but never
revived.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

from . import assignment, kalman
from .dataio import SequenceManifest, TrackingResult
from .errors import BackendError, DegenerateState, FrameOrder
from .geometry import BBox, iou_matrix
from .kalman import KalmanState, NoiseConfig
from .perception import DetectorBackend


class Status(str, enum.Enum):
    ACTIVE = "active"
    TEMPORARY = "temporary"
    TERMINATED = "terminated"


@dataclass(frozen=True)
class TrackerConfig:
    tau_iou: float = 0.3        # association gate on prediction/detection overlap
    delta_max: int = 30         # max consecutive misses before termination
    emit_temporary: bool = False
    min_hits: int = 1           # matches required before a track is emitted

    def __post_init__(self):
        if not 0.0 <= self.tau_iou <= 1.0:
            raise ValueError("tau_iou must be in [0, 1]")
        if self.delta_max < 1:
            raise ValueError("delta_max must be >= 1")
        if self.min_hits < 1:
            raise ValueError("min_hits must be >= 1")


@dataclass
class Trajectory:
    track_id: int
    state: KalmanState
    status: Status
    missing_count: int = 0
    hits: int = 1
    history: list[tuple[int, BBox, Status]] = field(default_factory=list)

    @property
    def live(self) -> bool:
        return self.status is not Status.TERMINATED


class Tracker:
    """Mutable per-sequence association state; one instance per sequence."""

    def __init__(self, cfg: TrackerConfig = TrackerConfig(), noise: NoiseConfig = NoiseConfig()):
        self.cfg = cfg
        self.noise = noise
        self.trajectories: list[Trajectory] = []
        self._next_id = 1
        self._last_frame = 0

    def _live(self) -> list[Trajectory]:
        return [t for t in self.trajectories if t.live]

    def step(self, detections: list[BBox], frame: int) -> list[tuple[int, BBox]]:
        """Advance one frame; returns the emitted (id, box) set for this frame."""
        if frame <= self._last_frame:
            raise FrameOrder(f"frame {frame} not after previous frame {self._last_frame}")
        self._last_frame = frame
        cfg = self.cfg
        detections = [d for d in detections if d.area > 0.0]  # zero-area boxes cannot seed a filter

        live = self._live()
        predicted: list[BBox | None] = []
        for t in live:
            t.state = kalman.predict(t.state, self.noise)
            try:
                predicted.append(kalman.state_to_box(t.state))
            except DegenerateState:
                predicted.append(None)  # collapsed prediction: unmatchable this frame

        pred_boxes = [b if b is not None else BBox(0, 0, 0, 0) for b in predicted]
        m = iou_matrix(detections, pred_boxes)
        a = assignment.gate(assignment.solve(1.0 - m), m, cfg.tau_iou)

        emitted: list[tuple[int, BBox]] = []
        for di, tj in a.pairs:
            t = live[tj]
            box = detections[di]
            t.state = kalman.update(t.state, box, self.noise)
            t.status = Status.ACTIVE
            t.missing_count = 0
            t.hits += 1
            t.history.append((frame, box, Status.ACTIVE))
            if t.hits >= cfg.min_hits:
                emitted.append((t.track_id, box))

        for di in a.unmatched_rows:
            box = detections[di]
            t = Trajectory(
                track_id=self._next_id,
                state=kalman.init_from_box(box, self.noise),
                status=Status.ACTIVE,
            )
            self._next_id += 1
            t.history.append((frame, box, Status.ACTIVE))
            self.trajectories.append(t)
            if t.hits >= cfg.min_hits:
                emitted.append((t.track_id, box))

        for tj in a.unmatched_cols:
            t = live[tj]
            t.missing_count += 1
            t.status = Status.TERMINATED if t.missing_count > cfg.delta_max else Status.TEMPORARY
            coasted = predicted[tj]
            if coasted is not None:
                t.history.append((frame, coasted, t.status))
                if t.status is Status.TEMPORARY and cfg.emit_temporary and t.hits >= cfg.min_hits:
                    emitted.append((t.track_id, coasted))

        emitted.sort()
        return emitted


def run_sequence(
    detector: DetectorBackend,
    seq: SequenceManifest,
    query: str,
    cfg: TrackerConfig = TrackerConfig(),
    noise: NoiseConfig = NoiseConfig(),
) -> TrackingResult:
    """Track a whole sequence; per-frame backend failures become warnings, not aborts."""
    tracker = Tracker(cfg, noise)
    result = TrackingResult(name=seq.name, dims=seq.dims, frame_count=seq.frame_count)
    for frame in range(1, seq.frame_count + 1):
        try:
            detections = [d.box for d in detector.detect(frame, query)]
        except BackendError as exc:
            detections = []
            result.warnings.append(f"frame {frame}: {exc}")
        for tid, box in tracker.step(detections, frame):
            result.add(frame, tid, box)
    return result
