"""Symbolic grounding: map tracked frames onto hand and environment state.

Each grounded frame summarises one hand with five state variables
(handMove, handOpen, inHand, actedOn, graspable) and the environment
with contact and support relations (inTouch, onTop) over cubes and
tables. Hands never take part in the environment relations.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .ontology import CUBE, HAND, TABLE, EnvironmentRegistry
from .trace import DemoTrace, hand_velocity

# A hand sitting essentially on an object has no usable approach
# direction; treat it as moving toward the object.
_ZERO_DIST = 1e-9


@dataclass(frozen=True)
class GroundingConfig:
    """Distance and motion thresholds for the grounding rules."""

    acted_on_dist: float = 0.16
    graspable_dist: float = 0.10
    move_speed: float = 0.10
    approach_cosine: float = 0.5

    @staticmethod
    def from_file(path: str | Path) -> "GroundingConfig":
        doc = json.loads(Path(path).read_text())
        known = {f for f in GroundingConfig.__dataclass_fields__}
        bad = set(doc) - known
        if bad:
            raise ValueError(f"unknown grounding config keys: {sorted(bad)}")
        return GroundingConfig(**doc)


@dataclass(frozen=True)
class HandSymState:
    handMove: bool
    handOpen: bool
    inHand: str | None
    actedOn: str | None
    graspable: str | None

    def __post_init__(self) -> None:
        if self.actedOn is not None and not self.handMove:
            raise ValueError("actedOn requires a moving hand")
        if self.inHand is not None and self.handOpen:
            raise ValueError("a held cube requires a closed hand")


@dataclass(frozen=True)
class EnvSymState:
    in_touch: frozenset[frozenset[str]]
    on_top: frozenset[tuple[str, str]]

    def __post_init__(self) -> None:
        for above, below in self.on_top:
            if frozenset((above, below)) not in self.in_touch:
                raise ValueError(f"onTop({above}, {below}) without contact")


@dataclass(frozen=True)
class SymbolicState:
    t: float
    hands: dict[str, HandSymState]
    env: EnvSymState

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SymbolicState):
            return NotImplemented
        return self.t == other.t and self.hands == other.hands and self.env == other.env


def _nearest_cube(
    hand_pos: np.ndarray,
    candidates: dict[str, np.ndarray],
    max_dist: float,
) -> tuple[str, float] | None:
    """Closest candidate within max_dist, ties broken by name."""
    best: tuple[float, str] | None = None
    for name in sorted(candidates):
        d = float(np.linalg.norm(candidates[name] - hand_pos))
        if d < max_dist and (best is None or d < best[0]):
            best = (d, name)
    if best is None:
        return None
    return best[1], best[0]


def ground_env(frame_objects, contacts, registry: EnvironmentRegistry) -> EnvSymState:
    """Contact and support relations over cubes and tables only."""
    things = {
        name
        for name in frame_objects
        if registry.types.is_subtype(registry.type_of(name), CUBE)
        or registry.types.is_subtype(registry.type_of(name), TABLE)
    }
    in_touch = frozenset(
        pair for pair in contacts if all(member in things for member in pair)
    )
    on_top = set()
    for pair in in_touch:
        a, b = sorted(pair)
        za, zb = frame_objects[a][2], frame_objects[b][2]
        if za > zb:
            on_top.add((a, b))
        elif zb > za:
            on_top.add((b, a))
    return EnvSymState(in_touch, frozenset(on_top))


def ground_frame(
    trace: DemoTrace, index: int, config: GroundingConfig | None = None
) -> SymbolicState:
    """Ground one frame; needs index >= 1 for the velocity estimate."""
    config = config or GroundingConfig()
    if index < 1 or index >= len(trace.frames):
        raise ValueError(f"frame index {index} cannot be grounded (need 1..{len(trace.frames) - 1})")
    frame = trace.frames[index]
    registry = trace.registry

    cube_pos = {
        name: np.asarray(pos)
        for name, pos in frame.objects.items()
        if registry.types.is_subtype(registry.type_of(name), CUBE)
    }

    hands: dict[str, HandSymState] = {}
    for hand, sample in frame.hands.items():
        velocity = hand_velocity(trace, hand, index)
        speed = float(np.linalg.norm(velocity))
        moving = speed > config.move_speed
        hand_pos = np.asarray(sample.pos)

        acted_on: str | None = None
        if moving:
            approached = {}
            for name, pos in cube_pos.items():
                if name == sample.held:
                    continue
                offset = pos - hand_pos
                d = float(np.linalg.norm(offset))
                if d >= config.acted_on_dist:
                    continue
                if d < _ZERO_DIST:
                    approached[name] = pos
                    continue
                cosine = float(np.dot(velocity, offset) / (speed * d))
                if cosine > config.approach_cosine:
                    approached[name] = pos
            found = _nearest_cube(hand_pos, approached, config.acted_on_dist)
            acted_on = found[0] if found else None

        found = _nearest_cube(hand_pos, cube_pos, config.graspable_dist)
        graspable = found[0] if found else None

        hands[hand] = HandSymState(
            handMove=moving,
            handOpen=sample.open,
            inHand=sample.held,
            actedOn=acted_on,
            graspable=graspable,
        )

    env = ground_env(frame.objects, frame.contacts, registry)
    return SymbolicState(frame.t, hands, env)


def ground_trace(
    trace: DemoTrace, config: GroundingConfig | None = None
) -> list[SymbolicState]:
    """Ground every frame from index 1 onward."""
    config = config or GroundingConfig()
    return [ground_frame(trace, i, config) for i in range(1, len(trace.frames))]


def env_of_frame(trace: DemoTrace, index: int) -> EnvSymState:
    """Environment relations of any frame, including index 0."""
    frame = trace.frames[index]
    return ground_env(frame.objects, frame.contacts, trace.registry)


def states_to_json(states: list[SymbolicState]) -> list[dict]:
    out = []
    for i, state in enumerate(states):
        out.append(
            {
                "frame": i + 1,
                "t": state.t,
                "hands": {
                    name: {
                        "handMove": h.handMove,
                        "handOpen": h.handOpen,
                        "inHand": h.inHand,
                        "actedOn": h.actedOn,
                        "graspable": h.graspable,
                    }
                    for name, h in sorted(state.hands.items())
                },
                "env": {
                    "inTouch": sorted(sorted(pair) for pair in state.env.in_touch),
                    "onTop": sorted(list(pair) for pair in state.env.on_top),
                },
            }
        )
    return out
