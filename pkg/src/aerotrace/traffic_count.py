"""Vehicle counting over grayscale frame sequences.

Pipeline: per-pixel stability-counting background subtraction produces a
foreground mask; 8-connected components become detections (tight box +
center); a constant-velocity Kalman tracker with IOU-gated Hungarian
association follows each object; a track is counted when its center path
properly crosses the virtual counting line, at most once per direction.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy import ndimage

from .assignment import hungarian
from .errors import AerotraceError, DataError, EmptyInput
from .fseq import iter_fseq_frames, parse_chunk_start
from .series import UTC, TimeSeries, floor_to

log = logging.getLogger(__name__)

HOUR_S = 3600

DIR_UP = 1
DIR_DOWN = -1


class DimensionMismatch(DataError):
    pass


class NonFiniteState(AerotraceError):
    pass


@dataclass(frozen=True)
class CountParams:
    pixel_threshold: int = 16
    min_stability: int = 15
    min_area: int = 150
    iou_gate: float = 0.3
    max_age: int = 5
    min_hits: int = 3


# ---------------------------------------------------------------------------
# Background subtraction

class BackgroundModel:
    """Stability-counting subtractor.

    Per pixel: an intensity within ``pixel_threshold`` of the running
    candidate increments its stability counter, anything else restarts the
    candidate; once a candidate has stayed stable for ``min_stability``
    frames it is promoted to background. Foreground is any pixel deviating
    from a defined background by more than the threshold. A global
    illumination step therefore floods the mask until the new level has
    proven stable.
    """

    def __init__(self, width: int, height: int,
                 pixel_threshold: int = 16, min_stability: int = 15):
        self.width = width
        self.height = height
        self.pixel_threshold = int(pixel_threshold)
        self.min_stability = int(min_stability)
        self.candidate = np.zeros((height, width), dtype=np.int16)
        self.stability = np.zeros((height, width), dtype=np.int32)
        self.background = np.zeros((height, width), dtype=np.int16)
        self.has_background = np.zeros((height, width), dtype=bool)
        self._primed = False

    def update(self, frame: np.ndarray) -> np.ndarray:
        if frame.shape != (self.height, self.width):
            raise DimensionMismatch(
                f"frame is {frame.shape}, model expects {(self.height, self.width)}")
        f = frame.astype(np.int16)
        if not self._primed:
            self.candidate = f.copy()
            self._primed = True
        stable = np.abs(f - self.candidate) <= self.pixel_threshold
        self.stability = np.where(stable, self.stability + 1, 0)
        self.candidate = np.where(stable, self.candidate, f)
        promote = self.stability >= self.min_stability
        self.background = np.where(promote, self.candidate, self.background)
        self.has_background |= promote
        return self.has_background & (np.abs(f - self.background) > self.pixel_threshold)


# ---------------------------------------------------------------------------
# Detections

@dataclass(frozen=True)
class Detection:
    """Tight bounding box (x, y, w, h) and component pixel count."""

    box: tuple[int, int, int, int]
    area: int

    @property
    def center(self) -> tuple[float, float]:
        x, y, w, h = self.box
        return (x + (w - 1) / 2.0, y + (h - 1) / 2.0)


_EIGHT_CONNECTED = np.ones((3, 3), dtype=int)


def extract_detections(mask: np.ndarray, min_area: int = 150) -> list[Detection]:
    """8-connected components with at least ``min_area`` pixels, top-left order."""
    labels, n_labels = ndimage.label(mask, structure=_EIGHT_CONNECTED)
    if n_labels == 0:
        return []
    counts = np.bincount(labels.ravel())
    dets = []
    for lab, sl in enumerate(ndimage.find_objects(labels), start=1):
        area = int(counts[lab])
        if area < min_area:
            continue
        y, x = sl[0].start, sl[1].start
        h, w = sl[0].stop - y, sl[1].stop - x
        dets.append(Detection(box=(x, y, w, h), area=area))
    dets.sort(key=lambda d: (d.box[1], d.box[0], d.box[3], d.box[2]))
    return dets


def iou(a: Sequence[float], b: Sequence[float]) -> float:
    """Intersection over union of two (x, y, w, h) boxes; 0 when disjoint."""
    ax, ay, aw, ah = a
    bx, by, bw, bh = b
    ix = max(0.0, min(ax + aw, bx + bw) - max(ax, bx))
    iy = max(0.0, min(ay + ah, by + bh) - max(ay, by))
    inter = ix * iy
    union = aw * ah + bw * bh - inter
    return inter / union if union > 0 else 0.0


# ---------------------------------------------------------------------------
# Kalman filter (constant-velocity model on center/area/aspect)

# State: (cx, cy, s, r, v_cx, v_cy, v_s); measurement: (cx, cy, s, r)
F_MAT = np.eye(7)
F_MAT[0, 4] = F_MAT[1, 5] = F_MAT[2, 6] = 1.0
H_MAT = np.eye(4, 7)
R_MAT = np.diag([1.0, 1.0, 10.0, 10.0])
P0_MAT = np.diag([10.0, 10.0, 10.0, 10.0, 1e4, 1e4, 1e4])
Q_MAT = np.diag([1.0, 1.0, 1.0, 1.0, 0.01, 0.01, 1e-4])


def kf_predict(x: np.ndarray, P: np.ndarray,
               F: np.ndarray = F_MAT, Q: np.ndarray = Q_MAT) -> tuple[np.ndarray, np.ndarray]:
    x2 = F @ x
    P2 = F @ P @ F.T + Q
    return x2, (P2 + P2.T) / 2.0


def kf_update(x: np.ndarray, P: np.ndarray, z: np.ndarray,
              H: np.ndarray = H_MAT, R: np.ndarray = R_MAT) -> tuple[np.ndarray, np.ndarray]:
    y = z - H @ x
    S = H @ P @ H.T + R
    K = np.linalg.solve(S, H @ P).T  # P H' S^-1, using symmetry of P and S
    x2 = x + K @ y
    ikh = np.eye(x.size) - K @ H
    P2 = ikh @ P @ ikh.T + K @ R @ K.T  # Joseph form keeps P symmetric PSD
    return x2, (P2 + P2.T) / 2.0


def measurement_from_box(box: Sequence[float]) -> np.ndarray:
    x, y, w, h = box
    return np.array([x + (w - 1) / 2.0, y + (h - 1) / 2.0, float(w) * h, w / float(h)])


def box_from_state(x: np.ndarray) -> tuple[float, float, float, float]:
    s, r = max(float(x[2]), 1e-6), max(float(x[3]), 1e-6)
    w = math.sqrt(s * r)
    h = s / w
    return (float(x[0]) - (w - 1) / 2.0, float(x[1]) - (h - 1) / 2.0, w, h)


class Track:
    """One tracked object: Kalman state, lifecycle counters, center history."""

    def __init__(self, track_id: int, detection: Detection):
        self.id = track_id
        self.x = np.zeros(7)
        self.x[:4] = measurement_from_box(detection.box)
        self.P = P0_MAT.copy()
        self.hits = 1
        self.misses = 0
        self.history: list[tuple[float, float]] = [detection.center]
        self.counted_up = False
        self.counted_down = False
        self.pending: list[tuple[int, int]] = []  # (frame index, direction)
        self._checked = 1  # history prefix already scanned for crossings

    def predict(self) -> tuple[float, float, float, float]:
        if self.x[2] + self.x[6] <= 0:
            self.x[6] = 0.0  # do not let area velocity drive the scale negative
        self.x, self.P = kf_predict(self.x, self.P)
        if not np.isfinite(self.x).all():
            raise NonFiniteState(f"track {self.id} diverged")
        return box_from_state(self.x)

    def update(self, detection: Detection) -> None:
        self.x, self.P = kf_update(self.x, self.P, measurement_from_box(detection.box))
        if not np.isfinite(self.x).all():
            raise NonFiniteState(f"track {self.id} diverged")
        self.hits += 1
        self.misses = 0
        self.history.append(detection.center)


@dataclass
class StepStats:
    matched: int = 0
    created: int = 0
    removed: int = 0


class SortTracker:
    """Tracking-by-detection: predict, associate by IOU, update, age out."""

    def __init__(self, params: CountParams = CountParams()):
        self.params = params
        self.tracks: list[Track] = []
        self._next_id = 1

    def step(self, detections: list[Detection]) -> StepStats:
        stats = StepStats()
        predicted = [t.predict() for t in self.tracks]

        matches: list[tuple[int, int]] = []
        if detections and self.tracks:
            iou_mat = np.array([[iou(d.box, p) for p in predicted] for d in detections])
            pairs = hungarian(1.0 - iou_mat)
            matches = [(d, t) for d, t in pairs if iou_mat[d, t] >= self.params.iou_gate]

        matched_d = {d for d, _ in matches}
        matched_t = {t for _, t in matches}
        for d, t in matches:
            self.tracks[t].update(detections[d])
        stats.matched = len(matches)

        for i, track in enumerate(self.tracks):
            if i not in matched_t:
                track.misses += 1
        before = len(self.tracks)
        self.tracks = [t for t in self.tracks if t.misses <= self.params.max_age]
        stats.removed = before - len(self.tracks)

        for d, det in enumerate(detections):
            if d not in matched_d:
                self.tracks.append(Track(self._next_id, det))
                self._next_id += 1
                stats.created += 1
        return stats


# ---------------------------------------------------------------------------
# Line crossings

@dataclass(frozen=True)
class CountLine:
    """Directed segment; its direction vector defines the up/down sides."""

    p1: tuple[float, float]
    p2: tuple[float, float]

    def __post_init__(self) -> None:
        if self.p1 == self.p2:
            raise DataError("counting line endpoints must be distinct")

    def side(self, p: tuple[float, float]) -> float:
        dx, dy = self.p2[0] - self.p1[0], self.p2[1] - self.p1[1]
        return dx * (p[1] - self.p1[1]) - dy * (p[0] - self.p1[0])


def segment_crossing(line: CountLine, p: tuple[float, float],
                     q: tuple[float, float]) -> int | None:
    """Direction of a proper crossing of the line segment by p->q, else None.

    Returns DIR_UP when the move ends on the line's positive side, DIR_DOWN
    for the other way. Touches (an endpoint exactly on the other segment) do
    not count.
    """
    sp, sq = line.side(p), line.side(q)
    if sp == 0 or sq == 0 or (sp > 0) == (sq > 0):
        return None
    dx, dy = q[0] - p[0], q[1] - p[1]
    t1 = dx * (line.p1[1] - p[1]) - dy * (line.p1[0] - p[0])
    t2 = dx * (line.p2[1] - p[1]) - dy * (line.p2[0] - p[0])
    if t1 == 0 or t2 == 0 or (t1 > 0) == (t2 > 0):
        return None
    return DIR_UP if sq > 0 else DIR_DOWN


def count_crossings(history: Sequence[tuple[float, float]],
                    line: CountLine) -> list[tuple[int, int]]:
    """Crossing events along a center path as (step index, direction) pairs.

    Each path yields at most one event per direction, so a center dithering
    across the line cannot inflate the count.
    """
    events: list[tuple[int, int]] = []
    seen_up = seen_down = False
    for i in range(1, len(history)):
        d = segment_crossing(line, history[i - 1], history[i])
        if d == DIR_UP and not seen_up:
            events.append((i, DIR_UP))
            seen_up = True
        elif d == DIR_DOWN and not seen_down:
            events.append((i, DIR_DOWN))
            seen_down = True
    return events


# ---------------------------------------------------------------------------
# Whole-video counting

@dataclass(frozen=True)
class HourlyCounts:
    hours: tuple[datetime, ...]
    up: tuple[int, ...]
    down: tuple[int, ...]

    @property
    def total(self) -> tuple[int, ...]:
        return tuple(u + d for u, d in zip(self.up, self.down))

    def total_series(self) -> TimeSeries:
        return TimeSeries(self.hours, tuple(float(t) for t in self.total))


class VehicleCounter:
    """Stateful per-video pipeline feeding frames through subtraction,
    detection, tracking, and line counting.

    Crossing events are noted as soon as a track's newest path segment
    crosses the line but only released to the tally once the track has
    accumulated ``min_hits`` updates, so short-lived noise never counts.
    """

    def __init__(self, line: CountLine, params: CountParams = CountParams()):
        self.line = line
        self.params = params
        self.bg: BackgroundModel | None = None
        self.tracker = SortTracker(params)
        self.events: list[tuple[int, int]] = []  # (frame index, direction)

    def process(self, frame: np.ndarray, frame_idx: int) -> None:
        if self.bg is None:
            h, w = frame.shape
            self.bg = BackgroundModel(w, h, self.params.pixel_threshold,
                                      self.params.min_stability)
        mask = self.bg.update(frame)
        detections = extract_detections(mask, self.params.min_area)
        self.tracker.step(detections)
        for track in self.tracker.tracks:
            while track._checked < len(track.history):
                i = track._checked
                d = segment_crossing(self.line, track.history[i - 1], track.history[i])
                if d == DIR_UP and not track.counted_up:
                    track.counted_up = True
                    track.pending.append((frame_idx, DIR_UP))
                elif d == DIR_DOWN and not track.counted_down:
                    track.counted_down = True
                    track.pending.append((frame_idx, DIR_DOWN))
                track._checked += 1
            if track.hits >= self.params.min_hits and track.pending:
                self.events.extend(track.pending)
                track.pending.clear()


def count_frames(frames: Iterable[np.ndarray], line: CountLine,
                 start: datetime, fps: float,
                 params: CountParams = CountParams()) -> HourlyCounts:
    """Count line crossings over a frame stream and bucket them per UTC hour."""
    counter = VehicleCounter(line, params)
    n = 0
    for idx, frame in enumerate(frames):
        counter.process(frame, idx)
        n = idx + 1
    if n == 0:
        raise EmptyInput("no frames to count")
    first_hour = floor_to(start, HOUR_S)
    last_hour = floor_to(start + timedelta(seconds=(n - 1) / fps), HOUR_S)
    n_hours = int((last_hour - first_hour).total_seconds()) // HOUR_S + 1
    up = [0] * n_hours
    down = [0] * n_hours
    for idx, direction in counter.events:
        ts = start + timedelta(seconds=idx / fps)
        slot = int((floor_to(ts, HOUR_S) - first_hour).total_seconds()) // HOUR_S
        if direction == DIR_UP:
            up[slot] += 1
        else:
            down[slot] += 1
    hours = tuple(first_hour + timedelta(hours=k) for k in range(n_hours))
    return HourlyCounts(hours=hours, up=tuple(up), down=tuple(down))


def count_video(path: str | Path, line: CountLine,
                params: CountParams = CountParams(),
                start: datetime | None = None) -> HourlyCounts:
    """Count crossings in an FSEQ file; frame times are start + index / fps.

    The chunk start comes from the ``<node>_YYYYMMDD_HHMMSS.fseq`` file name
    unless given explicitly; unparsable names fall back to the epoch.
    """
    info, frames = iter_fseq_frames(path)
    if start is None:
        start = parse_chunk_start(str(path))
        if start is None:
            start = datetime.fromtimestamp(0, tz=UTC)
            log.warning("%s: no timestamp in file name, counting from epoch", path)
    return count_frames(frames, line, start, info.fps, params)
