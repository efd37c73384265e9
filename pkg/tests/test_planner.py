"""Tests for planner.py."""

from collections import Counter

import pytest

from demoplan.model import (
    LearnedOperator,
    Literal,
    OperatorLibrary,
    PlanningProblem,
)
from demoplan.ontology import EnvironmentRegistry, ObjectInstance
from demoplan.oplearn import assign_costs
from demoplan.planner import (
    Plan,
    PlannerError,
    compare_cost_modes,
    ground,
    plan_to_json,
    solve,
    standard_goals,
    tabletop_init,
    validate,
)
from demoplan.segmentation import ActivityLabel

GRIPPER = "Robot_gripper"


def pick(actions, name, *args):
    """The unique ground action with this name and argument tuple."""
    matches = [a for a in actions if a.name == name and a.args == args]
    assert len(matches) == 1, f"{name}{args} matched {len(matches)} actions"
    return matches[0]


def goal_problem(registry, *literals):
    return PlanningProblem(registry, tabletop_init(registry), tuple(literals))


def test_ground_counts(single_careful_library, exec_registry):
    """One hand and four cubes give the expected binding counts per shape."""
    actions = ground(single_careful_library, exec_registry)
    counts = Counter(a.name for a in actions)
    assert counts == {
        "Reach": 4,
        "Take": 4,
        "Put": 4,
        "Stack": 12,
        "IdleMotion": 12,
    }
    assert len(actions) == 36
    assert actions == sorted(actions, key=lambda a: (a.name, a.args))
    # neq preconditions prune the diagonal, never a mixed pair
    for action in actions:
        if action.name == "Stack":
            assert action.args[1] != action.args[2]


def test_ground_skips_cubeless_registry(single_careful_library):
    """No cubes, no Stack bindings; every learned shape mentions a cube."""
    registry = EnvironmentRegistry(
        "execution",
        [ObjectInstance(GRIPPER, "Hand"), ObjectInstance("high_table", "Table")],
    )
    actions = ground(single_careful_library, registry)
    assert [a for a in actions if a.name == "Stack"] == []
    assert actions == []


def test_ground_requires_costs(exec_registry):
    library = OperatorLibrary(
        [
            LearnedOperator(
                activity=ActivityLabel.REACH,
                config_index=1,
                params=(("?Hand1", "Hand"),),
                preconditions=frozenset({Literal("handOpen", ("?Hand1",))}),
                effects=frozenset({Literal("handMove", ("?Hand1",))}),
                count=1,
            )
        ]
    )
    with pytest.raises(PlannerError, match="has no cost"):
        ground(library, exec_registry)


def test_satisfied_goal_yields_empty_plan(exec_actions, exec_registry):
    problem = goal_problem(exec_registry, Literal("handOpen", (GRIPPER,)))
    plan = solve(problem, exec_actions)
    assert plan == Plan((), 0, 0)
    report = validate(problem, plan)
    assert report.valid and report.failing_step is None


def test_unreachable_goal_returns_none(combined_library):
    """A cube on itself; two cubes keep the exhaustive search instant."""
    registry = EnvironmentRegistry(
        "execution",
        [
            ObjectInstance(GRIPPER, "Hand"),
            ObjectInstance("Cube_blue3", "Wooden_cube"),
            ObjectInstance("Cube_green3", "Wooden_cube"),
            ObjectInstance("high_table", "Table"),
        ],
    )
    problem = goal_problem(registry, Literal("onTop", ("Cube_blue3", "Cube_blue3")))
    assert solve(problem, ground(combined_library, registry)) is None


def test_expansion_budget(exec_actions, exec_registry):
    problem = goal_problem(exec_registry, *standard_goals(exec_registry)["goal3"])
    with pytest.raises(PlannerError, match="gave up after 3 expansions"):
        solve(problem, exec_actions, max_expansions=3)


def test_unknown_mode(exec_actions, exec_registry):
    problem = goal_problem(exec_registry, Literal("handOpen", (GRIPPER,)))
    with pytest.raises(PlannerError, match="unknown mode 'best'"):
        solve(problem, exec_actions, mode="best")


def test_all_modes_return_sound_plans(exec_actions, exec_registry):
    """Every mode must replay cleanly; only min_cost promises optimality."""
    problem = goal_problem(exec_registry, *standard_goals(exec_registry)["goal3"])
    costs = {}
    for mode in ("min_cost", "min_length", "greedy"):
        plan = solve(problem, exec_actions, mode)
        assert plan is not None
        assert plan.total_cost == sum(step.cost for step in plan.steps)
        assert plan.total_length == len(plan.steps)
        assert validate(problem, plan).valid
        costs[mode] = plan.total_cost
    assert costs["min_cost"] <= costs["min_length"]
    assert costs["min_cost"] <= costs["greedy"]


def test_cost_mode_comparison():
    """Two observations of the same activity, one dominant and one rare.

    Length-optimal search ties at one step and keeps the first action in
    name order; cost-optimal search switches to the cheap configuration.
    """

    def put(config_index, count):
        return LearnedOperator(
            activity=ActivityLabel.PUT,
            config_index=config_index,
            params=(("?Hand1", "Hand"), ("?Wooden_cube1", "Wooden_cube")),
            preconditions=frozenset(
                {Literal("graspable", ("?Hand1", "?Wooden_cube1"))}
            ),
            effects=frozenset({Literal("inHand", ("?Hand1", "?Wooden_cube1"))}),
            count=count,
        )

    registry = EnvironmentRegistry(
        "execution",
        [
            ObjectInstance(GRIPPER, "Hand"),
            ObjectInstance("Cube_red3", "Wooden_cube"),
            ObjectInstance("high_table", "Table"),
        ],
    )
    problem = PlanningProblem(
        registry,
        frozenset({("graspable", (GRIPPER, "Cube_red3"))}),
        (Literal("inHand", (GRIPPER, "Cube_red3")),),
    )

    skewed = assign_costs(OperatorLibrary([put(1, 1), put(2, 9)]))
    assert [(op.name, op.cost) for op in skewed] == [("Put", 90), ("Put2", 10)]
    cost_plan, length_plan, improvement = compare_cost_modes(
        problem, ground(skewed, registry)
    )
    assert [s.name for s in cost_plan.steps] == ["Put2"]
    assert cost_plan.total_cost == 10
    assert [s.name for s in length_plan.steps] == ["Put"]
    assert length_plan.total_cost == 90
    assert improvement == pytest.approx(100.0 * 80 / 90)

    balanced = assign_costs(OperatorLibrary([put(1, 5), put(2, 5)]))
    assert all(op.cost == 50 for op in balanced)
    _, _, flat = compare_cost_modes(problem, ground(balanced, registry))
    assert flat == 0.0

    impossible = PlanningProblem(
        registry, frozenset(), (Literal("onTop", ("Cube_red3", "Cube_red3")),)
    )
    with pytest.raises(PlannerError, match="needs a solvable problem"):
        compare_cost_modes(impossible, ground(skewed, registry))


def test_mutex_replay_rejects_stale_contact(exec_actions, exec_registry):
    """Closed-world replay accepts a reach-elsewhere-then-take sequence
    that mutex semantics must reject: the second reach displaces the
    hand's contact with the first cube, so the take has lost its support."""
    steps = (
        pick(exec_actions, "Reach", GRIPPER, "Cube_blue3"),
        pick(exec_actions, "Reach4", GRIPPER, "Cube_green3"),
        pick(exec_actions, "Take", GRIPPER, "Cube_blue3"),
    )
    plan = Plan(steps, sum(s.cost for s in steps), len(steps))
    problem = goal_problem(exec_registry, Literal("inHand", (GRIPPER, "Cube_blue3")))

    assert validate(problem, plan).valid
    report = validate(problem, plan, mutex=True)
    assert not report.valid
    assert report.failing_step == 2
    assert "missing actedOn" in report.reason
    assert "graspable" in report.reason


def test_repaired_library_passes_mutex(repaired_library, exec_registry):
    problem = goal_problem(exec_registry, Literal("inHand", (GRIPPER, "Cube_blue3")))
    plan = solve(problem, ground(repaired_library, exec_registry))
    assert plan is not None
    assert validate(problem, plan, mutex=True).valid


def test_validate_rejects_unknown_instance(exec_actions, exec_registry):
    import dataclasses

    ghost = dataclasses.replace(
        pick(exec_actions, "Reach", GRIPPER, "Cube_blue3"),
        args=(GRIPPER, "Cube_missing"),
    )
    problem = goal_problem(exec_registry, Literal("handOpen", (GRIPPER,)))
    with pytest.raises(PlannerError, match="unknown instance 'Cube_missing'"):
        validate(problem, Plan((ghost,), ghost.cost, 1))


def test_validate_reports_missing_atoms(exec_actions, exec_registry):
    take = pick(exec_actions, "Take", GRIPPER, "Cube_blue3")
    problem = goal_problem(exec_registry, Literal("inHand", (GRIPPER, "Cube_blue3")))
    report = validate(problem, Plan((take,), take.cost, 1))
    assert not report.valid
    assert report.failing_step == 0
    assert report.reason.startswith("step 0 (Take(Robot_gripper, Cube_blue3)):")
    assert "missing" in report.reason


def test_tabletop_init(exec_registry):
    init = tabletop_init(exec_registry)
    assert ("handOpen", (GRIPPER,)) in init
    for cube in exec_registry.cubes:
        assert ("onTop", (cube, "high_table")) in init
        assert ("inTouch", (cube, "high_table")) in init
        assert ("inTouch", ("high_table", cube)) in init
    assert len(init) == 1 + 3 * len(exec_registry.cubes)


def test_standard_goals(exec_registry):
    goals = standard_goals(exec_registry)
    on = lambda a, b: Literal("onTop", (a, b))
    assert goals["goal1"] == (on("Cube_green3", "Cube_blue3"),)
    assert goals["goal2"] == goals["goal1"] + (on("Cube_red3", "Cube_green3"),)
    assert goals["goal3"] == goals["goal2"] + (on("Cube_yellow3", "Cube_red3"),)
    assert goals["goal4"] == (
        on("Cube_green3", "Cube_blue3"),
        on("Cube_yellow3", "Cube_red3"),
    )

    one_cube = EnvironmentRegistry(
        "execution",
        [
            ObjectInstance(GRIPPER, "Hand"),
            ObjectInstance("Cube_red3", "Wooden_cube"),
            ObjectInstance("high_table", "Table"),
        ],
    )
    with pytest.raises(PlannerError, match="need four cubes"):
        standard_goals(one_cube)


def test_plan_to_json(exec_actions, exec_registry):
    reach = pick(exec_actions, "Reach", GRIPPER, "Cube_blue3")
    plan = Plan((reach,), reach.cost, 1)
    doc = plan_to_json(plan)
    assert doc == {
        "steps": [
            {"name": "Reach", "args": [GRIPPER, "Cube_blue3"], "cost": reach.cost}
        ],
        "total_cost": reach.cost,
        "total_length": 1,
    }
    problem = goal_problem(exec_registry, Literal("actedOn", (GRIPPER, "Cube_blue3")))
    with_report = plan_to_json(plan, validate(problem, plan))
    assert with_report["validation"] == {
        "valid": True,
        "failing_step": None,
        "reason": "ok",
    }
