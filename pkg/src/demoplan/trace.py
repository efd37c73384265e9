"""Demonstration traces: timed frames of hand and object tracking data.

Traces are stored as JSON Lines, one frame per line:

    {"t": 1.2345,
     "hands": {"Right_hand": {"pos": [x, y, z], "open": true, "held": null}},
     "objects": {"Cube_red1": [x, y, z], "table1": [x, y, z]},
     "contacts": [["Cube_red1", "table1"]]}
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .ontology import CUBE, HAND, EnvironmentRegistry


class TraceError(Exception):
    """Malformed or semantically invalid trace data.

    Carries the 1-based line number of the offending frame when known.
    """

    def __init__(self, message: str, line: int | None = None) -> None:
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


@dataclass(frozen=True)
class HandSample:
    """One hand at one instant: position in metres, finger state, held cube."""

    pos: tuple[float, float, float]
    open: bool
    held: str | None


@dataclass(frozen=True)
class DemoFrame:
    t: float
    hands: dict[str, HandSample]
    objects: dict[str, tuple[float, float, float]]
    contacts: frozenset[frozenset[str]]


@dataclass
class DemoTrace:
    frames: list[DemoFrame]
    registry: EnvironmentRegistry
    sample_rate_hz: float

    def __len__(self) -> int:
        return len(self.frames)


def _as_vec(value, what: str, line: int | None) -> tuple[float, float, float]:
    if (
        not isinstance(value, (list, tuple))
        or len(value) != 3
        or not all(isinstance(v, (int, float)) for v in value)
    ):
        raise TraceError(f"{what} must be a 3-element number list, got {value!r}", line)
    return (float(value[0]), float(value[1]), float(value[2]))


def frame_from_json(doc: dict, registry: EnvironmentRegistry, line: int | None = None) -> DemoFrame:
    """Validate one frame document against the registry."""
    if not isinstance(doc, dict):
        raise TraceError("frame must be a JSON object", line)
    for key in ("t", "hands", "objects", "contacts"):
        if key not in doc:
            raise TraceError(f"frame missing {key!r}", line)
    if not isinstance(doc["t"], (int, float)):
        raise TraceError(f"timestamp must be a number, got {doc['t']!r}", line)

    hands: dict[str, HandSample] = {}
    for name, sample in doc["hands"].items():
        if name not in registry or not registry.types.is_subtype(registry.type_of(name), HAND):
            raise TraceError(f"unknown hand instance: {name}", line)
        if not isinstance(sample, dict):
            raise TraceError(f"hand sample for {name} must be an object", line)
        held = sample.get("held")
        if held is not None:
            if held not in registry or not registry.types.is_subtype(registry.type_of(held), CUBE):
                raise TraceError(f"held object {held!r} is not a known cube", line)
            if sample.get("open"):
                raise TraceError(f"hand {name} cannot be open while holding {held}", line)
        hands[name] = HandSample(
            pos=_as_vec(sample.get("pos"), f"hand {name} pos", line),
            open=bool(sample.get("open")),
            held=held,
        )

    objects: dict[str, tuple[float, float, float]] = {}
    for name, pos in doc["objects"].items():
        if name not in registry:
            raise TraceError(f"unknown object instance: {name}", line)
        objects[name] = _as_vec(pos, f"object {name} pos", line)

    contacts: set[frozenset[str]] = set()
    for pair in doc["contacts"]:
        if not isinstance(pair, (list, tuple)) or len(pair) != 2:
            raise TraceError(f"contact must be a pair, got {pair!r}", line)
        a, b = pair
        for name in (a, b):
            if name not in registry:
                raise TraceError(f"contact names unknown instance: {name}", line)
            if name not in objects and name not in hands:
                raise TraceError(f"contact instance {name} has no position in frame", line)
        if a == b:
            raise TraceError(f"contact pairs an instance with itself: {a}", line)
        contacts.add(frozenset((a, b)))

    return DemoFrame(float(doc["t"]), hands, objects, frozenset(contacts))


def read_trace(path: str | Path, registry: EnvironmentRegistry) -> DemoTrace:
    """Read a JSON Lines trace file, reporting errors with line numbers."""
    frames: list[DemoFrame] = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            raw = raw.strip()
            if not raw:
                continue
            try:
                doc = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise TraceError(f"invalid JSON: {exc.msg}", lineno) from exc
            frame = frame_from_json(doc, registry, lineno)
            if frames and frame.t <= frames[-1].t:
                raise TraceError(
                    f"timestamp {frame.t} does not increase over {frames[-1].t}", lineno
                )
            frames.append(frame)
    if len(frames) < 2:
        raise TraceError(f"trace has {len(frames)} frames, need at least 2")
    rate = (len(frames) - 1) / (frames[-1].t - frames[0].t)
    return DemoTrace(frames, registry, rate)


def write_trace(trace: DemoTrace, path: str | Path) -> None:
    with open(path, "w") as fh:
        for frame in trace.frames:
            fh.write(json.dumps(frame_to_json(frame)) + "\n")


def frame_to_json(frame: DemoFrame) -> dict:
    return {
        "t": frame.t,
        "hands": {
            name: {"pos": list(s.pos), "open": s.open, "held": s.held}
            for name, s in sorted(frame.hands.items())
        },
        "objects": {name: list(p) for name, p in sorted(frame.objects.items())},
        "contacts": sorted(sorted(pair) for pair in frame.contacts),
    }


def hand_velocity(trace: DemoTrace, hand: str, index: int) -> np.ndarray:
    """Backward finite-difference velocity of a hand at a frame, in m/s."""
    if index <= 0 or index >= len(trace.frames):
        raise TraceError(f"velocity undefined at frame index {index}")
    cur, prev = trace.frames[index], trace.frames[index - 1]
    if hand not in cur.hands or hand not in prev.hands:
        raise TraceError(f"hand {hand} missing around frame index {index}")
    dt = cur.t - prev.t
    p1 = np.asarray(cur.hands[hand].pos)
    p0 = np.asarray(prev.hands[hand].pos)
    return (p1 - p0) / dt


def hand_speed(trace: DemoTrace, hand: str, index: int) -> float:
    return float(np.linalg.norm(hand_velocity(trace, hand, index)))


def distance(a: tuple[float, float, float], b: tuple[float, float, float]) -> float:
    return math.dist(a, b)
