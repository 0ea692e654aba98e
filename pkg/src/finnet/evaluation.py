"""Detector scoring against expert annotations.

Two families of operations: spatial (greedy IoU matching of box proposals and
confusion matrices with an explicit background row/column) and temporal
(per-frame detections smoothed into activity segments, compared by temporal
IoU, event recall, and annotator effort reduction).

All operations are pure; batch evaluation parallelizes per video.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from . import kernels
from .catalog import BoundingBox, ValidationError

BACKGROUND = "background"

DETECTION_CSV_COLUMNS = ("frame_time_s", "x", "y", "width", "height", "label", "score")
SEGMENT_CSV_COLUMNS = ("start_s", "end_s")

DEFAULT_IOU_THRESHOLD = 0.5
DEFAULT_SCORE_THRESHOLD = 0.5
DEFAULT_SMOOTHING_WINDOW_S = 10.0


class EvalError(Exception):
    pass


@dataclass(frozen=True)
class Detection:
    bbox: BoundingBox
    label: str
    score: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise EvalError(f"detection score out of [0, 1]: {self.score}")


def iou_box(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection area over union area; 0 for disjoint or touching boxes."""
    ix = min(a.x + a.width, b.x + b.width) - max(a.x, b.x)
    iy = min(a.y + a.height, b.y + b.height) - max(a.y, b.y)
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    union = a.area() + b.area() - inter
    return inter / union if union > 0 else 0.0


@dataclass
class MatchResult:
    matches: list[tuple[int, int, float]]  # (pred index, truth index, IoU)
    unmatched_preds: list[int]
    unmatched_truths: list[int]


def match_detections(
    preds: Sequence[Detection],
    truths: Sequence[tuple[BoundingBox, str]],
    iou_threshold: float = DEFAULT_IOU_THRESHOLD,
) -> MatchResult:
    """Greedy one-to-one matching.

    Predictions are visited by descending score; each claims the unclaimed
    truth with the highest IoU >= threshold. Pairing is label-agnostic (label
    agreement is scored in the confusion matrix). Ties are deterministic:
    equal scores are broken by higher best-IoU then input order, and equal
    IoUs by truth input order.
    """
    if not 0.0 < iou_threshold <= 1.0:
        raise EvalError(f"iou_threshold must be in (0, 1], got {iou_threshold}")
    if not preds or not truths:
        return MatchResult([], list(range(len(preds))), list(range(len(truths))))

    pa = np.array([[d.bbox.x, d.bbox.y, d.bbox.width, d.bbox.height] for d in preds])
    ta = np.array([[b.x, b.y, b.width, b.height] for b, _ in truths])
    iou = kernels.iou_matrix(pa, ta)

    scores = np.array([d.score for d in preds])
    best_iou = iou.max(axis=1)
    n = len(preds)
    order = np.lexsort((np.arange(n), -best_iou, -scores))
    pred_to_truth = kernels.greedy_match(iou, order, iou_threshold)

    matches = [(i, int(j), float(iou[i, j]))
               for i, j in enumerate(pred_to_truth) if j >= 0]
    matched_truths = {j for _, j, _ in matches}
    return MatchResult(
        matches=matches,
        unmatched_preds=[i for i, j in enumerate(pred_to_truth) if j < 0],
        unmatched_truths=[j for j in range(len(truths)) if j not in matched_truths],
    )


class ConfusionMatrix:
    """Counts indexed [truth label][prediction label] over an ordered label
    list plus a distinguished ``background``.

    The background row holds false positives (predictions with no matched
    truth); the background column holds false negatives (truths with no
    matched prediction). The background/background cell is identically zero.
    """

    def __init__(self, labels: Sequence[str]):
        if BACKGROUND in labels:
            raise EvalError(f"label list must not contain {BACKGROUND!r}")
        if len(set(labels)) != len(labels):
            raise EvalError("duplicate labels in label list")
        self.labels = tuple(labels)
        self._index = {lab: i for i, lab in enumerate(self.labels)}
        self._index[BACKGROUND] = len(self.labels)
        self.counts = np.zeros((len(self.labels) + 1, len(self.labels) + 1),
                               dtype=np.int64)

    def _idx(self, label: str) -> int:
        try:
            return self._index[label]
        except KeyError:
            raise EvalError(f"label not in declared label list: {label!r}") from None

    def __getitem__(self, key: tuple[str, str]) -> int:
        truth, pred = key
        return int(self.counts[self._idx(truth), self._idx(pred)])

    def add_match(self, truth_label: str, pred_label: str) -> None:
        self.counts[self._idx(truth_label), self._idx(pred_label)] += 1

    def add_unmatched_pred(self, pred_label: str) -> None:
        self.counts[self._idx(BACKGROUND), self._idx(pred_label)] += 1

    def add_unmatched_truth(self, truth_label: str) -> None:
        self.counts[self._idx(truth_label), self._idx(BACKGROUND)] += 1

    @property
    def total_predictions(self) -> int:
        return int(self.counts[:, :len(self.labels)].sum())

    @property
    def total_truths(self) -> int:
        return int(self.counts[:len(self.labels), :].sum())

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["truth\\prediction", *self.labels, BACKGROUND])
        for i, lab in enumerate((*self.labels, BACKGROUND)):
            writer.writerow([lab, *self.counts[i].tolist()])
        return buf.getvalue()


def confusion_matrix(
    preds: Sequence[Detection],
    truths: Sequence[tuple[BoundingBox, str]],
    result: MatchResult,
    labels: Sequence[str],
) -> ConfusionMatrix:
    """Tally a match result: matched pairs by (truth label, pred label),
    unmatched predictions into the background row, unmatched truths into the
    background column."""
    matrix = ConfusionMatrix(labels)
    for pred_i, truth_j, _ in result.matches:
        matrix.add_match(truths[truth_j][1], preds[pred_i].label)
    for pred_i in result.unmatched_preds:
        matrix.add_unmatched_pred(preds[pred_i].label)
    for truth_j in result.unmatched_truths:
        matrix.add_unmatched_truth(truths[truth_j][1])
    return matrix


# --- temporal activity -------------------------------------------------


@dataclass(frozen=True)
class Segment:
    start: float
    end: float

    def __post_init__(self):
        if not self.end > self.start:
            raise EvalError(f"segment end must exceed start: [{self.start}, {self.end}]")

    @property
    def duration(self) -> float:
        return self.end - self.start


def normalize_segments(segments: Sequence[Segment]) -> list[Segment]:
    """Sorted, pairwise disjoint, non-adjacent (touching segments merge)."""
    if not segments:
        return []
    ordered = sorted(segments, key=lambda s: (s.start, s.end))
    merged = [ordered[0]]
    for seg in ordered[1:]:
        last = merged[-1]
        if seg.start <= last.end:
            if seg.end > last.end:
                merged[-1] = Segment(last.start, seg.end)
        else:
            merged.append(seg)
    return merged


def total_duration(segments: Sequence[Segment]) -> float:
    return sum(s.duration for s in normalize_segments(segments))


@dataclass(frozen=True)
class ActivitySignal:
    """Binary activity sampled at strictly increasing frame timestamps."""

    times: tuple[float, ...]
    active: tuple[bool, ...]

    def __post_init__(self):
        if len(self.times) != len(self.active):
            raise EvalError("times and active must have equal length")
        for prev, cur in zip(self.times, self.times[1:]):
            if cur <= prev:
                raise EvalError(f"unordered timestamps: {prev} then {cur}")


def activity_signal(
    frames: Sequence[tuple[float, Sequence[Detection]]],
    score_threshold: float = DEFAULT_SCORE_THRESHOLD,
) -> ActivitySignal:
    """A frame is active iff any detection scores at or above the threshold."""
    times = tuple(t for t, _ in frames)
    active = tuple(any(d.score >= score_threshold for d in dets)
                   for _, dets in frames)
    return ActivitySignal(times, active)


def close_gaps(signal: ActivitySignal, window: float) -> ActivitySignal:
    """Binary closing on the active set: any inactive gap strictly shorter
    than ``window`` between two active frames becomes active. Endpoints are
    never extended, and closing twice equals closing once."""
    if window <= 0:
        raise EvalError(f"window must be > 0, got {window}")
    active = list(signal.active)
    on = [i for i, a in enumerate(active) if a]
    for a, b in zip(on, on[1:]):
        if b > a + 1 and signal.times[b] - signal.times[a] < window:
            for k in range(a + 1, b):
                active[k] = True
    return ActivitySignal(signal.times, tuple(active))


def smooth_and_segment(
    signal: ActivitySignal,
    window: float = DEFAULT_SMOOTHING_WINDOW_S,
) -> list[Segment]:
    """Close sub-window gaps, then emit one segment per contiguous active run.

    A run of two or more frames spans [first active time, last active time].
    An isolated single active frame has no extent on the frame grid, so it is
    given the local inter-frame interval: half the gap to each neighboring
    frame (one-sided at the signal boundary). A signal consisting of a single
    frame has no time base at all and yields no segment.
    """
    closed = close_gaps(signal, window)
    times = closed.times
    n = len(times)
    segments: list[Segment] = []
    i = 0
    while i < n:
        if not closed.active[i]:
            i += 1
            continue
        j = i
        while j + 1 < n and closed.active[j + 1]:
            j += 1
        if j > i:
            segments.append(Segment(times[i], times[j]))
        else:
            before = times[i] - times[i - 1] if i > 0 else None
            after = times[i + 1] - times[i] if i + 1 < n else None
            if before is None:
                before = after
            if after is None:
                after = before
            if before is not None:
                segments.append(Segment(times[i] - before / 2.0,
                                        times[i] + after / 2.0))
        i = j + 1
    return normalize_segments(segments)


def _intersection_duration(a: list[Segment], b: list[Segment]) -> float:
    total = 0.0
    i = j = 0
    while i < len(a) and j < len(b):
        lo = max(a[i].start, b[j].start)
        hi = min(a[i].end, b[j].end)
        if hi > lo:
            total += hi - lo
        if a[i].end < b[j].end:
            i += 1
        else:
            j += 1
    return total


def temporal_iou(a: Sequence[Segment], b: Sequence[Segment]) -> float:
    """Overlap duration divided by the duration active in either list;
    two empty lists agree perfectly (1.0)."""
    na, nb = normalize_segments(a), normalize_segments(b)
    inter = _intersection_duration(na, nb)
    union = total_duration(list(na) + list(nb))
    if union == 0.0:
        return 1.0
    return inter / union


def event_recall(pred: Sequence[Segment],
                 truth: Sequence[Segment]) -> Optional[float]:
    """Fraction of truth segments overlapped (nonzero) by at least one
    predicted segment. Undefined (None) when there are no truth segments."""
    nt = normalize_segments(truth)
    if not nt:
        return None
    np_ = normalize_segments(pred)
    hit = sum(
        1 for t in nt
        if any(min(t.end, p.end) > max(t.start, p.start) for p in np_)
    )
    return hit / len(nt)


def effort_reduction(pred: Sequence[Segment], total: float) -> float:
    """1 - (flagged duration / total footage duration)."""
    flagged = total_duration(pred)
    if total <= 0:
        raise EvalError(f"total duration must be > 0, got {total}")
    if flagged > total * (1 + 1e-12):
        raise EvalError(
            f"flagged duration {flagged} exceeds total duration {total}"
        )
    return 1.0 - flagged / total


# --- CSV formats --------------------------------------------------------


def read_detections_csv(data: Union[bytes, str]) -> list[tuple[float, list[Detection]]]:
    """Parse `frame_time_s,x,y,width,height,label,score` rows into
    time-ordered frames (rows grouped by identical timestamp). An empty score
    cell means 1.0 (expert truth boxes carry no confidence)."""
    text = data.decode("utf-8") if isinstance(data, bytes) else data
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != list(DETECTION_CSV_COLUMNS):
        raise EvalError(
            f"detection CSV must have columns {','.join(DETECTION_CSV_COLUMNS)}"
        )
    frames: dict[float, list[Detection]] = {}
    for lineno, row in enumerate(reader, start=2):
        try:
            t = float(row["frame_time_s"])
            bbox = BoundingBox(float(row["x"]), float(row["y"]),
                               float(row["width"]), float(row["height"]))
            bbox.validate()
            score = float(row["score"]) if (row["score"] or "").strip() else 1.0
            det = Detection(bbox=bbox, label=(row["label"] or "").strip(), score=score)
        except (TypeError, ValueError, ValidationError) as exc:
            raise EvalError(f"detection CSV line {lineno}: {exc}") from None
        frames.setdefault(t, []).append(det)
    return [(t, frames[t]) for t in sorted(frames)]


def read_segments_csv(data: Union[bytes, str]) -> list[Segment]:
    text = data.decode("utf-8") if isinstance(data, bytes) else data
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != list(SEGMENT_CSV_COLUMNS):
        raise EvalError(
            f"segment CSV must have columns {','.join(SEGMENT_CSV_COLUMNS)}"
        )
    segments = []
    for lineno, row in enumerate(reader, start=2):
        try:
            segments.append(Segment(float(row["start_s"]), float(row["end_s"])))
        except (TypeError, ValueError) as exc:
            raise EvalError(f"segment CSV line {lineno}: {exc}") from None
    return segments


def sniff_segments(data: Union[bytes, str]) -> bool:
    """True when the file is in segment format (vs detection format)."""
    text = data.decode("utf-8") if isinstance(data, bytes) else data
    first = text.splitlines()[0] if text.splitlines() else ""
    return [c.strip() for c in first.split(",")] == list(SEGMENT_CSV_COLUMNS)


def write_segments_csv(segments: Sequence[Segment]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SEGMENT_CSV_COLUMNS)
    for seg in normalize_segments(segments):
        writer.writerow([repr(seg.start), repr(seg.end)])
    return buf.getvalue()
