"""Object type hierarchy and environment registries.

The tabletop world is described by a small type tree rooted at ``Thing``
(hands, wooden cubes, tables) plus a registry of named object instances
for one environment, either the demonstration side or the execution side.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

THING = "Thing"
HAND = "Hand"
CUBE = "Wooden_cube"
TABLE = "Table"

BUILTIN_TYPES: dict[str, str | None] = {
    THING: None,
    HAND: THING,
    CUBE: THING,
    TABLE: THING,
}

ROLES = ("demonstration", "execution")


class OntologyError(Exception):
    """Base error for type hierarchy and registry problems."""


class UnknownTypeError(OntologyError):
    """A type name that is not declared in the hierarchy."""


class RegistryError(OntologyError):
    """A structurally invalid environment registry."""


@dataclass(frozen=True)
class ObjectType:
    name: str
    parent: str | None


@dataclass(frozen=True)
class ObjectInstance:
    name: str
    type_name: str


class TypeHierarchy:
    """Tree of object types rooted at ``Thing``.

    User-declared types may extend the tree anywhere under the root, the
    four built-in types are always present.
    """

    def __init__(self, extra_types: list[ObjectType] | None = None) -> None:
        self._parent: dict[str, str | None] = dict(BUILTIN_TYPES)
        for t in extra_types or []:
            if t.name in self._parent:
                raise RegistryError(f"duplicate type declaration: {t.name}")
            if t.parent is None or t.parent not in self._parent:
                raise UnknownTypeError(
                    f"type {t.name} declares unknown parent {t.parent!r}"
                )
            self._parent[t.name] = t.parent

    def __contains__(self, name: str) -> bool:
        return name in self._parent

    @property
    def type_names(self) -> list[str]:
        return sorted(self._parent)

    def is_subtype(self, a: str, b: str) -> bool:
        """True iff ``a`` equals ``b`` or ``b`` is an ancestor of ``a``."""
        for name in (a, b):
            if name not in self._parent:
                raise UnknownTypeError(f"unknown type: {name}")
        cur: str | None = a
        while cur is not None:
            if cur == b:
                return True
            cur = self._parent[cur]
        return False


@dataclass
class EnvironmentRegistry:
    """Named instances of one environment plus its type hierarchy."""

    role: str
    instances: list[ObjectInstance]
    types: TypeHierarchy = field(default_factory=TypeHierarchy)

    def __post_init__(self) -> None:
        if self.role not in ROLES:
            raise RegistryError(f"unknown registry role: {self.role!r}")
        seen: set[str] = set()
        for inst in self.instances:
            if inst.name in seen:
                raise RegistryError(f"duplicate instance name: {inst.name}")
            seen.add(inst.name)
            if inst.type_name not in self.types:
                raise UnknownTypeError(
                    f"instance {inst.name} has unknown type {inst.type_name}"
                )
        tables = self.of_type(TABLE)
        if len(tables) != 1:
            raise RegistryError(
                f"registry must contain exactly one Table instance, found {len(tables)}"
            )

    def __contains__(self, name: str) -> bool:
        return any(inst.name == name for inst in self.instances)

    def type_of(self, name: str) -> str:
        for inst in self.instances:
            if inst.name == name:
                return inst.type_name
        raise RegistryError(f"unknown instance: {name}")

    def of_type(self, type_name: str) -> list[str]:
        """Instance names whose type is a subtype of ``type_name``, sorted."""
        return sorted(
            inst.name
            for inst in self.instances
            if self.types.is_subtype(inst.type_name, type_name)
        )

    @property
    def hands(self) -> list[str]:
        return self.of_type(HAND)

    @property
    def cubes(self) -> list[str]:
        return self.of_type(CUBE)

    @property
    def table(self) -> str:
        return self.of_type(TABLE)[0]

    def to_json(self) -> dict:
        doc: dict = {
            "role": self.role,
            "instances": [
                {"name": i.name, "type": i.type_name} for i in self.instances
            ],
        }
        extra = [
            {"name": n, "parent": p}
            for n, p in sorted(self.types._parent.items())
            if n not in BUILTIN_TYPES
        ]
        if extra:
            doc["types"] = extra
        return doc


def load_registry(path: str | Path) -> EnvironmentRegistry:
    """Load a registry from a JSON file, validating structure and types."""
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise RegistryError(f"registry {path} is not valid JSON: {exc}") from exc
    return registry_from_json(doc)


def registry_from_json(doc: dict) -> EnvironmentRegistry:
    if not isinstance(doc, dict):
        raise RegistryError("registry document must be a JSON object")
    for key in ("role", "instances"):
        if key not in doc:
            raise RegistryError(f"registry document missing {key!r}")
    extra = [
        ObjectType(t.get("name", ""), t.get("parent"))
        for t in doc.get("types", [])
    ]
    hierarchy = TypeHierarchy(extra)
    instances = []
    for item in doc["instances"]:
        if not isinstance(item, dict) or "name" not in item or "type" not in item:
            raise RegistryError(f"malformed instance entry: {item!r}")
        instances.append(ObjectInstance(item["name"], item["type"]))
    return EnvironmentRegistry(doc["role"], instances, hierarchy)


def save_registry(registry: EnvironmentRegistry, path: str | Path) -> None:
    Path(path).write_text(json.dumps(registry.to_json(), indent=2, sort_keys=True) + "\n")


def demonstration_registry() -> EnvironmentRegistry:
    """The recording setup: two tracked hands, eight cubes, one table."""
    cubes = [
        f"Cube_{color}{i}" for i in (1, 2) for color in ("red", "green", "yellow", "blue")
    ]
    instances = [
        ObjectInstance("Right_hand", HAND),
        ObjectInstance("Left_hand", HAND),
        *[ObjectInstance(c, CUBE) for c in cubes],
        ObjectInstance("table1", TABLE),
    ]
    return EnvironmentRegistry("demonstration", instances)


def execution_registry() -> EnvironmentRegistry:
    """The robot setup: one gripper, four cubes, one table."""
    instances = [
        ObjectInstance("Robot_gripper", HAND),
        *[
            ObjectInstance(f"Cube_{color}3", CUBE)
            for color in ("green", "yellow", "blue", "red")
        ],
        ObjectInstance("high_table", TABLE),
    ]
    return EnvironmentRegistry("execution", instances)
