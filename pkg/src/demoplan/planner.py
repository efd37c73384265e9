"""Grounding, optimal search, and plan validation.

Operators are grounded over a registry into precompiled atom sets, then
states are packed into integer bitmasks for the search. min_cost mode is
uniform-cost search and provably optimal; min_length uses unit weights;
greedy orders the frontier by unsatisfied goal literals and trades
optimality for speed. Validation replays a plan step by step, optionally
under mutex world semantics where a newly acquired actedOn or graspable
displaces the hand's previous one.
"""

from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass

from .model import (
    NEQ,
    Atom,
    GroundAction,
    Literal,
    OperatorLibrary,
    PlanningProblem,
    WorldState,
    applicable,
    apply_action,
)
from .ontology import EnvironmentRegistry

MUTEX_PREDICATES = ("actedOn", "graspable")

MODES = ("min_cost", "min_length", "greedy")


class PlannerError(Exception):
    """Invalid planning input or an exhausted expansion budget."""


@dataclass(frozen=True)
class Plan:
    steps: tuple[GroundAction, ...]
    total_cost: int
    total_length: int


@dataclass(frozen=True)
class ValidationReport:
    valid: bool
    failing_step: int | None
    reason: str


def ground(library: OperatorLibrary, registry: EnvironmentRegistry) -> list[GroundAction]:
    """Every type- and neq-respecting binding of every operator.

    Universal revocations are expanded over the registry's cubes into
    plain deletes; deleting an absent atom is a no-op, so the expansion
    is equivalent to the conditional form.
    """
    cubes = registry.cubes
    actions: list[GroundAction] = []
    for op in library:
        if op.cost is None:
            raise PlannerError(f"operator {op.name} has no cost; assign costs first")
        domains = [registry.of_type(type_name) for _, type_name in op.params]
        names = [name for name, _ in op.params]
        for combo in itertools.product(*domains):
            binding = dict(zip(names, combo))
            if any(
                binding.get(l.args[0], l.args[0]) == binding.get(l.args[1], l.args[1])
                for l in op.preconditions
                if l.pred == NEQ
            ):
                continue
            pre_pos = frozenset(
                l.substitute(binding).atom
                for l in op.preconditions
                if l.positive and l.pred != NEQ
            )
            pre_neg = frozenset(
                l.substitute(binding).atom for l in op.preconditions if not l.positive
            )
            add = frozenset(
                l.substitute(binding).atom for l in op.effects if l.positive
            )
            delete = {
                l.substitute(binding).atom for l in op.effects if not l.positive
            }
            for rev in op.revokes:
                hand = binding.get(rev.hand, rev.hand)
                keep = binding.get(rev.keep, rev.keep)
                for cube in cubes:
                    if cube != keep:
                        delete.add((rev.pred, (hand, cube)))
            actions.append(
                GroundAction(
                    name=op.name,
                    activity=op.activity,
                    args=tuple(combo),
                    pre_pos=pre_pos,
                    pre_neg=pre_neg,
                    add=add,
                    delete=frozenset(delete),
                    cost=op.cost,
                )
            )
    actions.sort(key=lambda a: (a.name, a.args))
    return actions


class _Masks:
    """Bitmask compilation of atoms shared by one solve call."""

    def __init__(self) -> None:
        self.index: dict[Atom, int] = {}

    def mask(self, atoms) -> int:
        m = 0
        for atom in atoms:
            i = self.index.get(atom)
            if i is None:
                i = self.index[atom] = len(self.index)
            m |= 1 << i
        return m


def solve(
    problem: PlanningProblem,
    actions: list[GroundAction],
    mode: str = "min_cost",
    max_expansions: int | None = None,
) -> Plan | None:
    """Search for a plan; None means the goal is unreachable."""
    if mode not in MODES:
        raise PlannerError(f"unknown mode {mode!r}, expected one of {MODES}")
    actions = sorted(actions, key=lambda a: (a.name, a.args))

    masks = _Masks()
    init = masks.mask(problem.init)
    goal_pos = masks.mask(l.atom for l in problem.goal if l.positive)
    goal_neg = masks.mask(l.atom for l in problem.goal if not l.positive)
    compiled = [
        (masks.mask(a.pre_pos), masks.mask(a.pre_neg), masks.mask(a.add), masks.mask(a.delete))
        for a in actions
    ]
    weights = [1 if mode == "min_length" else a.cost for a in actions]

    def reached(state: int) -> bool:
        return state & goal_pos == goal_pos and not state & goal_neg

    def rebuild(state: int) -> Plan:
        indices: list[int] = []
        while True:
            prev = parent[state]
            if prev is None:
                break
            state, action_index = prev
            indices.append(action_index)
        steps = tuple(actions[i] for i in reversed(indices))
        return Plan(steps, sum(s.cost for s in steps), len(steps))

    def unsatisfied(state: int) -> int:
        return bin(goal_pos & ~state).count("1") + bin(goal_neg & state).count("1")

    parent: dict[int, tuple[int, int] | None] = {init: None}
    best_g = {init: 0}
    counter = itertools.count()
    priority = unsatisfied(init) if mode == "greedy" else 0
    heap = [(priority, next(counter), 0, init)]
    expansions = 0
    while heap:
        _, _, g, state = heapq.heappop(heap)
        if g > best_g.get(state, g):
            continue
        if reached(state):
            return rebuild(state)
        expansions += 1
        if max_expansions is not None and expansions > max_expansions:
            raise PlannerError(f"gave up after {max_expansions} expansions")
        for i, (pp, pn, add, dl) in enumerate(compiled):
            if state & pp != pp or state & pn:
                continue
            nxt = (state & ~dl) | add
            ng = g + weights[i]
            if mode == "greedy":
                if nxt in parent:
                    continue
                parent[nxt] = (state, i)
                best_g[nxt] = ng
                heapq.heappush(heap, (unsatisfied(nxt), next(counter), ng, nxt))
            elif ng < best_g.get(nxt, ng + 1):
                best_g[nxt] = ng
                parent[nxt] = (state, i)
                heapq.heappush(heap, (ng, next(counter), ng, nxt))
    return None


def validate(
    problem: PlanningProblem, plan: Plan, mutex: bool = False
) -> ValidationReport:
    """Replay a plan from the problem's initial state."""
    registry = problem.registry
    for step in plan.steps:
        for arg in step.args:
            if arg not in registry:
                raise PlannerError(f"plan step {step} names unknown instance {arg!r}")

    state: WorldState = frozenset(problem.init)
    for i, step in enumerate(plan.steps):
        if not applicable(state, step):
            missing = sorted(f"{p}{list(a)}" for p, a in step.pre_pos - state)
            blocking = sorted(f"{p}{list(a)}" for p, a in step.pre_neg & state)
            detail = "; ".join(
                part
                for part in (
                    f"missing {', '.join(missing)}" if missing else "",
                    f"blocked by {', '.join(blocking)}" if blocking else "",
                )
                if part
            )
            return ValidationReport(False, i, f"step {i} ({step}): {detail}")
        before = state
        state = apply_action(state, step)
        if mutex:
            revoked = set()
            for pred, args in step.add:
                if pred in MUTEX_PREDICATES and (pred, args) not in before:
                    hand, kept = args
                    revoked |= {
                        (p, a)
                        for p, a in state
                        if p == pred and a[0] == hand and a[1] != kept
                    }
            state = frozenset(state - revoked)
    if problem.satisfied(state):
        return ValidationReport(True, None, "ok")
    unmet = [str(l) for l in problem.goal if (l.atom in state) != l.positive]
    return ValidationReport(False, None, f"goal not reached: {', '.join(unmet)}")


def compare_cost_modes(
    problem: PlanningProblem, actions: list[GroundAction]
) -> tuple[Plan, Plan, float]:
    """Cost-optimal vs length-optimal plans and the percent cost saving."""
    cost_plan = solve(problem, actions, "min_cost")
    length_plan = solve(problem, actions, "min_length")
    if cost_plan is None or length_plan is None:
        raise PlannerError("cost mode comparison needs a solvable problem")
    baseline = length_plan.total_cost
    if baseline == 0:
        return cost_plan, length_plan, 0.0
    improvement = 100.0 * (baseline - cost_plan.total_cost) / baseline
    return cost_plan, length_plan, improvement


def tabletop_init(registry: EnvironmentRegistry) -> WorldState:
    """All cubes flat on the table, hands open, still, and empty."""
    table = registry.table
    atoms: set[Atom] = {("handOpen", (hand,)) for hand in registry.hands}
    for cube in registry.cubes:
        atoms.add(("inTouch", (cube, table)))
        atoms.add(("inTouch", (table, cube)))
        atoms.add(("onTop", (cube, table)))
    return frozenset(atoms)


def standard_goals(registry: EnvironmentRegistry) -> dict[str, tuple[Literal, ...]]:
    """The four benchmark stacking goals over the registry's first four
    cubes in name order: single stack, 2-tower, 4-tower, two 2-towers."""
    cubes = registry.cubes
    if len(cubes) < 4:
        raise PlannerError(f"benchmark goals need four cubes, registry has {len(cubes)}")
    c0, c1, c2, c3 = cubes[:4]

    def on(above: str, below: str) -> Literal:
        return Literal("onTop", (above, below))

    return {
        "goal1": (on(c1, c0),),
        "goal2": (on(c1, c0), on(c2, c1)),
        "goal3": (on(c1, c0), on(c2, c1), on(c3, c2)),
        "goal4": (on(c1, c0), on(c3, c2)),
    }


def plan_to_json(plan: Plan, report: ValidationReport | None = None) -> dict:
    doc: dict = {
        "steps": [
            {"name": s.name, "args": list(s.args), "cost": s.cost} for s in plan.steps
        ],
        "total_cost": plan.total_cost,
        "total_length": plan.total_length,
    }
    if report is not None:
        doc["validation"] = {
            "valid": report.valid,
            "failing_step": report.failing_step,
            "reason": report.reason,
        }
    return doc
