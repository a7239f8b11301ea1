"""Provenance lattice for integer shape values.

Every scalar and tensor dimension flowing through a symbolic forward pass
carries a taint: untainted (BOT), one of three base labels (MODEL_CONFIG,
NUM_TOKS, NUM_REQS), or a MIX whose component map records which concrete
factor values contributed which label.  The combination operator implements
five rules:

    absorption     BOT x t            -> t
    preservation   t x t              -> t       (same label / equal mix)
    conflict       l1 x l2 (l1 != l2) -> MIX{v1: l1, v2: l2}
    extend         MIX(H) x l         -> MIX(H + {v: l})
    merge          MIX(H1) x MIX(H2)  -> MIX(H1 + H2)

Conflict and extend need the operands' concrete values so the component map
can record them; callers pass those alongside.  Mix component maps reject a
value carrying two different labels at construction time.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional

from .errors import MixValueConflict, UnknownComponent


class TaintLabel(enum.Enum):
    MODEL_CONFIG = "MC"
    NUM_TOKS = "NT"
    NUM_REQS = "NR"

    @property
    def code(self) -> str:
        return self.value


_LABEL_BY_CODE = {label.value: label for label in TaintLabel}

MODEL_CONFIG = TaintLabel.MODEL_CONFIG
NUM_TOKS = TaintLabel.NUM_TOKS
NUM_REQS = TaintLabel.NUM_REQS

WORKLOAD_LABELS = frozenset({NUM_TOKS, NUM_REQS})


@dataclass(frozen=True)
class Taint:
    """Base class; concrete variants are Bot, Base, and Mix."""

    def is_bot(self) -> bool:
        return isinstance(self, _Bot)

    def is_base(self) -> bool:
        return isinstance(self, Base)

    def is_mix(self) -> bool:
        return isinstance(self, Mix)

    def labels(self) -> frozenset[TaintLabel]:
        """Label set, i.e. the projection onto the underlying lattice."""
        if isinstance(self, Base):
            return frozenset({self.label})
        if isinstance(self, Mix):
            return frozenset(lbl for _, lbl in self.components)
        return frozenset()


@dataclass(frozen=True)
class _Bot(Taint):
    def __repr__(self) -> str:
        return "BOT"


@dataclass(frozen=True)
class Base(Taint):
    label: TaintLabel

    def __repr__(self) -> str:
        return self.label.code


@dataclass(frozen=True)
class Mix(Taint):
    # Ascending by component value; canonical order makes serialization
    # deterministic and hashing stable.
    components: tuple[tuple[int, TaintLabel], ...]

    def __repr__(self) -> str:
        inner = ",".join(f"{v}:{l.code}" for v, l in self.components)
        return f"MIX{{{inner}}}"

    def component_map(self) -> dict[int, TaintLabel]:
        return dict(self.components)


BOT = _Bot()


def mix_from(entries: Mapping[int, TaintLabel] | Iterable[tuple[int, TaintLabel]]) -> Taint:
    """Build a normalized Mix; a single entry collapses to Base.

    Raises MixValueConflict if one value maps to two labels.
    """
    merged: dict[int, TaintLabel] = {}
    pairs = entries.items() if isinstance(entries, Mapping) else entries
    for value, label in pairs:
        if value < 1:
            raise ValueError(f"mix component values must be positive, got {value}")
        prior = merged.get(value)
        if prior is not None and prior is not label:
            raise MixValueConflict(
                f"value {value} assigned both {prior.code} and {label.code}"
            )
        merged[value] = label
    if not merged:
        raise ValueError("mix requires at least one component")
    if len(merged) == 1:
        ((_, label),) = merged.items()
        return Base(label)
    return Mix(tuple(sorted(merged.items())))


def combine(
    t1: Taint,
    t2: Taint,
    v1: Optional[int] = None,
    v2: Optional[int] = None,
) -> Taint:
    """Apply the five propagation rules to a pair of taints.

    v1/v2 are the operands' concrete values, required whenever the result
    records a new component (conflict and extend).
    """
    if t1.is_bot():
        return t2
    if t2.is_bot():
        return t1
    if t1 == t2:
        return t1
    if isinstance(t1, Base) and isinstance(t2, Base):
        if t1.label is t2.label:
            return t1
        if v1 is None or v2 is None:
            raise ValueError("conflict rule needs both concrete values")
        return mix_from([(v1, t1.label), (v2, t2.label)])
    if isinstance(t1, Mix) and isinstance(t2, Base):
        if v2 is None:
            raise ValueError("extend rule needs the base operand's value")
        return mix_from(list(t1.components) + [(v2, t2.label)])
    if isinstance(t1, Base) and isinstance(t2, Mix):
        return combine(t2, t1, v2, v1)
    assert isinstance(t1, Mix) and isinstance(t2, Mix)
    return mix_from(list(t1.components) + list(t2.components))


def split(mix: Taint, known_value: int) -> tuple[Taint, Taint]:
    """Recover (component, residual) from a mix by one known factor value."""
    if not isinstance(mix, Mix):
        raise UnknownComponent(f"split requires a MIX taint, got {mix!r}")
    cmap = mix.component_map()
    if known_value not in cmap:
        raise UnknownComponent(f"value {known_value} not in {mix!r}")
    component = Base(cmap[known_value])
    rest = [(v, l) for v, l in mix.components if v != known_value]
    return component, mix_from(rest)


def reevaluate(
    mix: Taint, substitutions: Mapping[TaintLabel, int]
) -> tuple[int, Taint]:
    """Recompute a mixed dimension for new workload values.

    Workload-labelled components take their substituted value, MODEL_CONFIG
    components keep their original one; the new size is the product.  The
    result keeps a Mix carrying the substituted values, except that size-1
    workload components are normalized away when exactly one component would
    remain (preserving provenance for repeated sweeps otherwise).
    """
    if not isinstance(mix, Mix):
        raise ValueError("reevaluate requires a MIX taint")
    for label in substitutions:
        if label not in WORKLOAD_LABELS:
            raise ValueError(f"substitutions may only cover workload labels, got {label}")
    new_entries: list[tuple[int, TaintLabel]] = []
    size = 1
    for value, label in mix.components:
        new_value = substitutions.get(label, value) if label in WORKLOAD_LABELS else value
        size *= new_value
        new_entries.append((new_value, label))
    # Same (value, label) pairs collapse; conflicting labels on one value raise.
    deduped: dict[int, TaintLabel] = {}
    for value, label in new_entries:
        prior = deduped.get(value)
        if prior is not None and prior is not label:
            raise MixValueConflict(
                f"reevaluate collided value {value} between {prior.code} and {label.code}"
            )
        deduped[value] = label
    survivors = [
        (v, l) for v, l in deduped.items() if not (v == 1 and l in WORKLOAD_LABELS)
    ]
    if len(survivors) == 1:
        return size, mix_from(survivors)
    return size, mix_from(deduped)


# --- textual form used inside trace JSON ------------------------------------
#
# Grammar: "BOT" | "MC" | "NT" | "NR" | "MIX{<v>:<code>,...}" with component
# values ascending.  Round-trips bit-exactly.


def taint_to_str(taint: Taint) -> str:
    return repr(taint)


def taint_from_str(text: str) -> Taint:
    if text == "BOT":
        return BOT
    if text in _LABEL_BY_CODE:
        return Base(_LABEL_BY_CODE[text])
    if text.startswith("MIX{") and text.endswith("}"):
        body = text[4:-1]
        entries = []
        for part in body.split(","):
            value_str, _, code = part.partition(":")
            if code not in _LABEL_BY_CODE:
                raise ValueError(f"bad taint label code in {text!r}")
            entries.append((int(value_str), _LABEL_BY_CODE[code]))
        values = [v for v, _ in entries]
        if values != sorted(values) or len(entries) < 2:
            raise ValueError(f"non-canonical mix serialization {text!r}")
        taint = mix_from(entries)
        if not isinstance(taint, Mix):
            raise ValueError(f"non-canonical mix serialization {text!r}")
        return taint
    raise ValueError(f"unparseable taint {text!r}")


class TaintRegistry:
    """Global map from concrete integer values to their source taints.

    Conflicting registrations move the value into the collision set, after
    which lookups report it as unknown; the tracer resolves collisions by
    retracing with a different dummy batch.
    """

    def __init__(self) -> None:
        self._entries: dict[int, Taint] = {}
        self._collisions: set[int] = set()

    def register(self, value: int, taint: Taint) -> bool:
        """Record value -> taint; returns True when a collision was detected."""
        if value < 1:
            raise ValueError(f"registry values must be positive, got {value}")
        if taint.is_bot():
            raise ValueError("BOT is never registered")
        if value in self._collisions:
            return True
        existing = self._entries.get(value)
        if existing is None:
            self._entries[value] = taint
            return False
        if existing == taint:
            return False
        del self._entries[value]
        self._collisions.add(value)
        return True

    def lookup(self, value: int) -> Optional[Taint]:
        """Stored taint, or None for absent or collided values."""
        return self._entries.get(value)

    @property
    def entries(self) -> dict[int, Taint]:
        return dict(self._entries)

    @property
    def collisions(self) -> frozenset[int]:
        return frozenset(self._collisions)

    def snapshot(self) -> dict:
        return {
            "entries": {str(v): taint_to_str(t) for v, t in sorted(self._entries.items())},
            "collisions": sorted(self._collisions),
        }

    @classmethod
    def from_snapshot(cls, data: dict) -> "TaintRegistry":
        reg = cls()
        for value_str, taint_str in data.get("entries", {}).items():
            reg._entries[int(value_str)] = taint_from_str(taint_str)
        reg._collisions = set(data.get("collisions", []))
        return reg
