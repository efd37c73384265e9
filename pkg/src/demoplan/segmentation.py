"""Per-frame activity classification and run-based segmentation.

The classifier is a closed decision table over the hand state variables.
Segmentation merges equal labels into maximal runs, a debounce window
rejects label blips shorter than the window.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

from .grounding import HandSymState, SymbolicState

logger = logging.getLogger(__name__)

DEFAULT_DEBOUNCE = 3


class ActivityLabel(str, Enum):
    IDLE = "IdleMotion"
    REACH = "Reach"
    PUT = "Put"
    TAKE = "Take"
    STACK = "Stack"


def classify(hand: HandSymState) -> ActivityLabel:
    """Activity of one hand state.

    actedOn implies a moving hand; the stationary combination cannot be
    produced by the grounding rules and is classified as if moving.
    """
    if hand.actedOn is not None:
        if not hand.handMove:
            logger.warning("actedOn with a stationary hand, treating as moving")
        return ActivityLabel.STACK if hand.inHand is not None else ActivityLabel.REACH
    if hand.inHand is not None:
        return ActivityLabel.PUT if hand.handMove else ActivityLabel.TAKE
    return ActivityLabel.IDLE


@dataclass(frozen=True)
class ActivitySegment:
    """A maximal run of one activity, indices into the state list, inclusive."""

    hand: str
    label: ActivityLabel
    start: int
    end: int

    def __post_init__(self) -> None:
        if self.start > self.end:
            raise ValueError(f"segment start {self.start} after end {self.end}")


def _runs(labels: list[ActivityLabel]) -> list[tuple[ActivityLabel, int, int]]:
    runs = []
    start = 0
    for i in range(1, len(labels) + 1):
        if i == len(labels) or labels[i] != labels[start]:
            runs.append((labels[start], start, i - 1))
            start = i
    return runs


def debounce_labels(labels: list[ActivityLabel], debounce: int) -> list[ActivityLabel]:
    """Reject runs shorter than the debounce window.

    Frames of a rejected run keep the preceding committed label; the
    first run is always committed since there is nothing to fall back to.
    """
    if debounce < 1:
        raise ValueError("debounce must be >= 1")
    smoothed: list[ActivityLabel] = []
    committed: ActivityLabel | None = None
    for label, start, end in _runs(labels):
        length = end - start + 1
        if committed is None or length >= debounce:
            committed = label
        smoothed.extend([committed] * length)
    return smoothed


def segment(
    states: list[SymbolicState],
    debounce: int = DEFAULT_DEBOUNCE,
) -> list[ActivitySegment]:
    """Partition every hand's state sequence into labelled segments."""
    if not states:
        return []
    segments: list[ActivitySegment] = []
    for hand in sorted(states[0].hands):
        raw = [classify(state.hands[hand]) for state in states]
        smoothed = debounce_labels(raw, debounce)
        for label, start, end in _runs(smoothed):
            segments.append(ActivitySegment(hand, label, start, end))
    return segments


def labels_per_state(
    segments: list[ActivitySegment], n_states: int
) -> dict[str, list[ActivityLabel]]:
    """Expand segments back into one label per state index per hand."""
    out: dict[str, list[ActivityLabel]] = {}
    for seg in segments:
        lane = out.setdefault(seg.hand, [None] * n_states)  # type: ignore[list-item]
        for i in range(seg.start, seg.end + 1):
            lane[i] = seg.label
    for hand, lane in out.items():
        missing = [i for i, v in enumerate(lane) if v is None]
        if missing:
            raise ValueError(f"segments for {hand} do not cover states {missing[:5]}")
    return out


# Sidecar files index segments by trace frame; state k describes frame k+1.

def segments_to_json(segments: list[ActivitySegment]) -> list[dict]:
    return [
        {
            "hand": seg.hand,
            "label": seg.label.value,
            "start_frame": seg.start + 1,
            "end_frame": seg.end + 1,
        }
        for seg in segments
    ]


def segments_from_json(doc: list[dict]) -> list[ActivitySegment]:
    return [
        ActivitySegment(
            hand=item["hand"],
            label=ActivityLabel(item["label"]),
            start=item["start_frame"] - 1,
            end=item["end_frame"] - 1,
        )
        for item in doc
    ]


def write_segments(segments: list[ActivitySegment], path: str | Path) -> None:
    Path(path).write_text(json.dumps(segments_to_json(segments), indent=2) + "\n")


def read_segments(path: str | Path) -> list[ActivitySegment]:
    return segments_from_json(json.loads(Path(path).read_text()))
