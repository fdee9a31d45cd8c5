"""Object classes, dynamic property set and per-class applicability masks."""

from __future__ import annotations

import enum
from dataclasses import dataclass

PROPERTIES: tuple[str, ...] = ("isOpen", "isToggled", "isBroken", "isSliced", "isDirty", "isFilled")
D = len(PROPERTIES)
PROP_INDEX = {name: i for i, name in enumerate(PROPERTIES)}


class ActionKind(str, enum.Enum):
    MOVE = "MoveStep"
    ROTATE = "Rotate"
    PICKUP = "Pickup"
    PUT = "Put"
    OPEN = "Open"
    CLOSE = "Close"
    TOGGLE_ON = "ToggleOn"
    TOGGLE_OFF = "ToggleOff"
    SLICE = "Slice"
    SCAN = "Scan"


ALL_SKILLS = frozenset(ActionKind)
MANIPULATIONS = frozenset(
    {
        ActionKind.PICKUP,
        ActionKind.PUT,
        ActionKind.OPEN,
        ActionKind.CLOSE,
        ActionKind.TOGGLE_ON,
        ActionKind.TOGGLE_OFF,
        ActionKind.SLICE,
    }
)


@dataclass(frozen=True)
class ObjectClass:
    name: str
    applicable: frozenset[str] = frozenset()
    receptacle: bool = False
    pickupable: bool = False
    horizon: int = 30  # camera pitch (deg) needed to manipulate
    perishable: bool = False

    @property
    def openable(self) -> bool:
        return "isOpen" in self.applicable

    @property
    def toggleable(self) -> bool:
        return "isToggled" in self.applicable

    @property
    def sliceable(self) -> bool:
        return "isSliced" in self.applicable

    def mask(self) -> tuple[int, ...]:
        return tuple(int(p in self.applicable) for p in PROPERTIES)


def _c(name, props=(), **kw) -> ObjectClass:
    return ObjectClass(name, frozenset(props), **kw)


CATALOG: dict[str, ObjectClass] = {
    c.name: c
    for c in (
        _c("Fridge", ["isOpen"], receptacle=True, horizon=0),
        _c("Cabinet", ["isOpen"], receptacle=True),
        _c("Microwave", ["isOpen", "isToggled"], receptacle=True, horizon=0),
        _c("Box", ["isOpen"], receptacle=True, horizon=45),
        _c("Table", receptacle=True),
        _c("CounterTop", receptacle=True),
        _c("Shelf", receptacle=True, horizon=15),
        _c("Sofa", receptacle=True, horizon=45),
        _c("Desk", receptacle=True),
        _c("GarbageCan", receptacle=True, horizon=60),
        _c("TV", ["isToggled", "isBroken"], horizon=0),
        _c("Lamp", ["isToggled", "isBroken"], horizon=15),
        _c("CoffeeMachine", ["isToggled"]),
        _c("Laptop", ["isOpen", "isToggled", "isBroken"], pickupable=True),
        _c("CellPhone", ["isToggled", "isBroken"], pickupable=True),
        _c("Apple", ["isSliced"], pickupable=True, perishable=True),
        _c("Tomato", ["isSliced"], pickupable=True, perishable=True),
        _c("Bread", ["isSliced"], pickupable=True, perishable=True),
        _c("Lettuce", ["isSliced"], pickupable=True, perishable=True),
        _c("Mug", ["isDirty", "isFilled", "isBroken"], pickupable=True),
        _c("Plate", ["isDirty", "isBroken"], pickupable=True),
        _c("Book", ["isOpen"], pickupable=True),
        _c("Knife", pickupable=True),
        _c("TennisRacket", pickupable=True, horizon=45),
        _c("Pillow", pickupable=True),
        _c("Towel", pickupable=True, horizon=45),
    )
}

_UNKNOWN = ObjectClass("Unknown")


def object_class(name: str) -> ObjectClass:
    return CATALOG.get(name, _UNKNOWN)
