"""Instrument taxonomy: GM percussion keys 35-81 folded into 26 classes.

The 26-class table is compiled-in (it is the normative vocabulary and must
not drift via config) but exportable to JSON for auditing. The reduction
from 26 classes to a smaller evaluation taxonomy ships as a JSON file and
is fully user-replaceable.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from . import DrumpipeError

GM_KEY_MIN = 35
GM_KEY_MAX = 81
NUM_CLASSES = 26

# Reserved group value marking a class as intentionally excluded.
DROPPED = "dropped"

# GM percussion key -> 26-class instrument id. Acoustically equivalent
# keys (e.g. Crash Cymbal / Crash Cymbal 2) share an id.
_KEY_TO_ID: dict[int, int] = {
    35: 0,   # Acoustic Bass Drum
    36: 1,   # Bass Drum 1
    37: 2,   # Side Stick
    38: 3,   # Acoustic Snare
    39: 4,   # Hand Clap
    40: 5,   # Electric Snare
    41: 6,   # Floor Tom
    42: 7,   # Closed Hi Hat
    43: 6,   # High Floor Tom -> Floor Tom
    44: 8,   # Pedal Hi-Hat
    45: 6,   # Low Tom -> Floor Tom
    46: 9,   # Open Hi-Hat
    47: 10,  # Low Mid Tom -> Mid Tom
    48: 10,  # High Mid Tom -> Mid Tom
    49: 11,  # Crash Cymbal
    50: 12,  # High Tom
    51: 13,  # Ride Cymbal
    52: 14,  # Chinese Cymbal
    53: 13,  # Ride Bell -> Ride Cymbal
    54: 15,  # Tambourine
    55: 16,  # Splash Cymbal
    56: 17,  # Cowbell
    57: 11,  # Crash Cymbal 2 -> Crash Cymbal
    58: 18,  # Vibraslap
    59: 13,  # Ride Cymbal 2 -> Ride Cymbal
    60: 19,  # Hi Bongo -> Congas & Timbales
    61: 19,  # Low Bongo
    62: 19,  # Mute Hi Conga
    63: 19,  # Open Hi Conga
    64: 19,  # Low Conga
    65: 19,  # High Timbale
    66: 19,  # Low Timbale
    67: 17,  # High Agogo -> Cowbell
    68: 17,  # Low Agogo -> Cowbell
    69: 20,  # Cabasa -> Shaker
    70: 20,  # Maracas -> Shaker
    71: 21,  # Short Whistle -> Whistle
    72: 21,  # Long Whistle -> Whistle
    73: 22,  # Short Guiro -> Guiro
    74: 22,  # Long Guiro -> Guiro
    75: 23,  # Claves
    76: 23,  # Hi Wood Block -> Claves
    77: 23,  # Low Wood Block -> Claves
    78: 24,  # Mute Cuica -> Cuica
    79: 24,  # Open Cuica -> Cuica
    80: 25,  # Mute Triangle -> Triangle
    81: 25,  # Open Triangle -> Triangle
}

CLASS_NAMES: tuple[str, ...] = (
    "Acoustic Bass Drum",   # 0
    "Bass Drum 1",          # 1
    "Side Stick",           # 2
    "Acoustic Snare",       # 3
    "Hand Clap",            # 4
    "Electric Snare",       # 5
    "Floor Tom",            # 6
    "Closed Hi Hat",        # 7
    "Pedal Hi-Hat",         # 8
    "Open Hi-Hat",          # 9
    "Mid Tom",              # 10
    "Crash Cymbal",         # 11
    "High Tom",             # 12
    "Ride Cymbal",          # 13
    "Chinese Cymbal",       # 14
    "Tambourine",           # 15
    "Splash Cymbal",        # 16
    "Cowbell",              # 17
    "Vibraslap",            # 18
    "Congas & Timbales",    # 19
    "Shaker",               # 20
    "Whistle",              # 21
    "Guiro",                # 22
    "Claves",               # 23
    "Cuica",                # 24
    "Triangle",             # 25
)


class UnknownKeyError(DrumpipeError, ValueError):
    """GM key outside the percussion range [35, 81]."""


class ReductionMapError(DrumpipeError, ValueError):
    """Reduction map fails validation (missing/duplicate/unknown ids)."""


@dataclass(frozen=True)
class InstrumentClass:
    id: int
    name: str
    source_keys: frozenset[int]


def _build_classes() -> tuple[InstrumentClass, ...]:
    keys_by_id: dict[int, set[int]] = {i: set() for i in range(NUM_CLASSES)}
    for key, cid in _KEY_TO_ID.items():
        keys_by_id[cid].add(key)
    return tuple(
        InstrumentClass(i, CLASS_NAMES[i], frozenset(keys_by_id[i]))
        for i in range(NUM_CLASSES)
    )


CLASSES: tuple[InstrumentClass, ...] = _build_classes()


def map_key(gm_key: int) -> int:
    """Map a GM percussion key to its 26-class instrument id.

    Raises UnknownKeyError for keys outside [35, 81].
    """
    try:
        return _KEY_TO_ID[gm_key]
    except KeyError:
        raise UnknownKeyError(
            f"GM key {gm_key} outside percussion range [{GM_KEY_MIN}, {GM_KEY_MAX}]"
        ) from None


def class_name(instrument_id: int) -> str:
    if not 0 <= instrument_id < NUM_CLASSES:
        raise ValueError(f"instrument id {instrument_id} outside [0, {NUM_CLASSES - 1}]")
    return CLASS_NAMES[instrument_id]


def export_vocab_json(path: str | Path) -> None:
    """Write the compiled-in taxonomy as an auditable JSON array."""
    payload = [
        {"id": c.id, "name": c.name, "source_keys": sorted(c.source_keys)}
        for c in CLASSES
    ]
    Path(path).write_text(json.dumps(payload, indent=2) + "\n")


@dataclass(frozen=True)
class ReductionMap:
    """Grouping of the 26 instrument ids into a reduced evaluation taxonomy.

    Every id maps to a reduced label or to the literal group "dropped";
    silent absence is rejected at load time. `presentation` optionally folds
    reduced labels into report columns (e.g. CY and RD into "CY+RD").
    """

    groups: dict[int, str]
    presentation: dict[str, str] = field(default_factory=dict)
    name: str = ""

    def __post_init__(self) -> None:
        problems = []
        seen = set(self.groups)
        for i in range(NUM_CLASSES):
            if i not in seen:
                problems.append(f"id {i} unassigned")
        for i in sorted(seen - set(range(NUM_CLASSES))):
            problems.append(f"unknown id {i}")
        for label, column in self.presentation.items():
            # Idempotence: folding a column again must be a no-op.
            if self.presentation.get(column, column) != column:
                problems.append(
                    f"presentation column {column!r} (from {label!r}) is itself remapped"
                )
        if problems:
            raise ReductionMapError("invalid reduction map: " + "; ".join(problems))

    @property
    def labels(self) -> tuple[str, ...]:
        """Reduced labels in first-appearance (id) order, excluding dropped."""
        out: list[str] = []
        for i in range(NUM_CLASSES):
            label = self.groups[i]
            if label != DROPPED and label not in out:
                out.append(label)
        return tuple(out)

    @property
    def columns(self) -> tuple[str, ...]:
        """Presentation columns in first-appearance order."""
        out: list[str] = []
        for label in self.labels:
            column = self.presentation.get(label)
            if column is not None and column not in out:
                out.append(column)
        return tuple(out)

    def column_of(self, label: str) -> str | None:
        return self.presentation.get(label)

    @property
    def map_id(self) -> str:
        """Stable identifier for report compatibility checks."""
        if self.name:
            return self.name
        canon = json.dumps(
            {"groups": {str(k): v for k, v in sorted(self.groups.items())},
             "presentation": dict(sorted(self.presentation.items()))},
            sort_keys=True,
        )
        return hashlib.sha256(canon.encode()).hexdigest()[:12]

    def to_dict(self) -> dict:
        out: dict = {"groups": {str(k): v for k, v in sorted(self.groups.items())}}
        if self.presentation:
            out["presentation"] = dict(self.presentation)
        if self.name:
            out["name"] = self.name
        return out


def reduce(instrument_id: int, rmap: ReductionMap) -> str | None:
    """Reduced label for a 26-class id, or None when explicitly dropped."""
    if not 0 <= instrument_id < NUM_CLASSES:
        raise ReductionMapError(f"instrument id {instrument_id} outside [0, {NUM_CLASSES - 1}]")
    label = rmap.groups[instrument_id]
    return None if label == DROPPED else label


def load_reduction_map(path: str | Path) -> ReductionMap:
    """Load and validate a reduction map from JSON.

    Expected document: {"groups": {"<id>": "<label>"}, "presentation": {...}}.
    Duplicate ids are impossible to express in JSON objects and are instead
    caught here when groups come as a list of [id, label] pairs.
    """
    raw = json.loads(Path(path).read_text())
    if not isinstance(raw, dict) or "groups" not in raw:
        raise ReductionMapError(f"{path}: expected an object with a 'groups' key")
    groups_raw = raw["groups"]
    groups: dict[int, str] = {}
    if isinstance(groups_raw, dict):
        items = groups_raw.items()
    elif isinstance(groups_raw, list):
        items = groups_raw
    else:
        raise ReductionMapError(f"{path}: 'groups' must be an object or a pair list")
    dupes = []
    for key, label in items:
        try:
            cid = int(key)
        except (TypeError, ValueError):
            raise ReductionMapError(f"{path}: non-integer id {key!r}") from None
        if cid in groups:
            dupes.append(cid)
        groups[cid] = str(label)
    if dupes:
        raise ReductionMapError(
            f"{path}: duplicate id assignment for " + ", ".join(str(d) for d in sorted(set(dupes)))
        )
    presentation = {str(k): str(v) for k, v in raw.get("presentation", {}).items()}
    name = str(raw.get("name", ""))
    return ReductionMap(groups=groups, presentation=presentation, name=name)


def default_reduction_map() -> ReductionMap:
    """The bundled 8-group evaluation taxonomy (see packaged reduction_default.json)."""
    with resources.files("drumpipe").joinpath("data/reduction_default.json").open() as fh:
        raw = json.load(fh)
    groups = {int(k): str(v) for k, v in raw["groups"].items()}
    return ReductionMap(
        groups=groups,
        presentation={str(k): str(v) for k, v in raw.get("presentation", {}).items()},
        name=str(raw.get("name", "")),
    )


def identity_reduction_map() -> ReductionMap:
    """Each id its own group; useful for full-vocabulary scoring."""
    return ReductionMap(
        groups={i: str(i) for i in range(NUM_CLASSES)}, presentation={}, name="identity-26"
    )


def dense_reduction(rmap: ReductionMap) -> tuple[dict[int, int | None], tuple[str, ...]]:
    """Map 26-class ids onto dense reduced ids 0..k-1 (None when dropped).

    Lets the synthesis/tokenization pipeline run on a reduced vocabulary:
    the returned label tuple gives the reduced id order.
    """
    labels = rmap.labels
    index = {label: i for i, label in enumerate(labels)}
    mapping: dict[int, int | None] = {}
    for cid in range(NUM_CLASSES):
        label = rmap.groups[cid]
        mapping[cid] = None if label == DROPPED else index[label]
    return mapping, labels
