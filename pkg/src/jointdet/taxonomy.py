"""Two-level class scheme: global categories over named subclasses.

The first classification stage distinguishes {light, sign, background};
the second stage picks a subclass, which only exists for the two
non-background categories.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence


class GlobalClass(Enum):
    LIGHT = "light"
    SIGN = "sign"
    BACKGROUND = "background"


# Fixed global-logit order used by the classification head.
GLOBAL_ORDER = (GlobalClass.LIGHT, GlobalClass.SIGN, GlobalClass.BACKGROUND)
GLOBAL_INDEX = {g: i for i, g in enumerate(GLOBAL_ORDER)}

DEFAULT_LIGHT_COUNT = 5
DEFAULT_SIGN_COUNT = 45


@dataclass(frozen=True)
class Taxonomy:
    """Immutable subclass list with its subclass -> global mapping."""

    names: tuple[str, ...]
    globals_: tuple[GlobalClass, ...]

    @property
    def num_subclasses(self) -> int:
        return len(self.names)

    def global_of(self, subclass_index: int) -> GlobalClass:
        """Owning global class of a subclass index in [0, K)."""
        if not 0 <= subclass_index < len(self.globals_):
            raise ValueError(
                f"subclass index {subclass_index} out of range [0, {len(self.globals_)})"
            )
        return self.globals_[subclass_index]

    def count(self, global_class: GlobalClass) -> int:
        return sum(1 for g in self.globals_ if g is global_class)

    def subclasses_of(self, global_class: GlobalClass) -> tuple[int, ...]:
        """Subclass indices belonging to one global class, in taxonomy order."""
        return tuple(i for i, g in enumerate(self.globals_) if g is global_class)

    def to_spec(self) -> list[tuple[str, str]]:
        return [(name, g.value) for name, g in zip(self.names, self.globals_)]


def build_taxonomy(spec: Iterable[tuple[str, GlobalClass | str]]) -> Taxonomy:
    """Validate and freeze an ordered (name, global class) listing.

    Rejects duplicate names, subclasses assigned to BACKGROUND, and global
    classes with no subclass at all.
    """
    names: list[str] = []
    globals_: list[GlobalClass] = []
    for name, global_class in spec:
        if isinstance(global_class, str):
            global_class = GlobalClass(global_class)
        if global_class is GlobalClass.BACKGROUND:
            raise ValueError(f"subclass {name!r} assigned to BACKGROUND")
        if name in names:
            raise ValueError(f"duplicate subclass name {name!r}")
        names.append(name)
        globals_.append(global_class)
    if not names:
        raise ValueError("taxonomy needs at least one subclass")
    present = set(globals_)
    for required in (GlobalClass.LIGHT, GlobalClass.SIGN):
        if required not in present:
            raise ValueError(f"taxonomy needs at least one {required.value} subclass")
    return Taxonomy(names=tuple(names), globals_=tuple(globals_))


def default_taxonomy(
    light_count: int = DEFAULT_LIGHT_COUNT, sign_count: int = DEFAULT_SIGN_COUNT
) -> Taxonomy:
    """Generic synthetic taxonomy: light_0..light_4 plus sign_0..sign_44."""
    spec: list[tuple[str, GlobalClass]] = []
    spec += [(f"light_{i}", GlobalClass.LIGHT) for i in range(light_count)]
    spec += [(f"sign_{i}", GlobalClass.SIGN) for i in range(sign_count)]
    return build_taxonomy(spec)


def taxonomy_from_spec(spec: Sequence[Sequence[str]]) -> Taxonomy:
    """Rebuild a taxonomy from its serialized (name, global) listing."""
    return build_taxonomy((name, GlobalClass(value)) for name, value in spec)
