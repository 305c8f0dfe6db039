"""Standard MIDI File parsing and fixed-length segment extraction.

Reads SMF types 0 and 1 directly (raw bytes, running status, variable
length deltas), converts ticks to seconds through the full tempo map with
exact integer accumulation, and keeps only percussion note-ons (channel 10,
zero-indexed 9). GM keys outside [35, 81] are counted and dropped rather
than rejected; velocity-0 note-ons are treated as note-offs and discarded.
"""

from __future__ import annotations

from bisect import bisect_right
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import DrumpipeError
from .vocab import GM_KEY_MAX, GM_KEY_MIN, NUM_CLASSES, map_key

SEGMENT_SECONDS = 2.56
DEFAULT_TEMPO_USPB = 500_000  # 120 BPM until the first tempo event

_META_TEMPO = 0x51
_META_END_OF_TRACK = 0x2F


class MidiParseError(DrumpipeError, ValueError):
    """Malformed SMF content; carries the offending byte offset."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


@dataclass(frozen=True)
class DrumEvent:
    time_s: float
    instrument: int
    velocity: int


@dataclass(frozen=True)
class EventSequence:
    """Time-ordered percussion onsets; every time lies in [0, duration_s)."""

    events: tuple[DrumEvent, ...]
    duration_s: float

    def __post_init__(self) -> None:
        prev = None
        for ev in self.events:
            if not 0 <= ev.instrument < NUM_CLASSES:
                raise ValueError(f"instrument {ev.instrument} outside [0, {NUM_CLASSES - 1}]")
            if not 1 <= ev.velocity <= 127:
                raise ValueError(f"velocity {ev.velocity} outside [1, 127]")
            if ev.time_s < 0:
                raise ValueError(f"negative event time {ev.time_s}")
            if ev.time_s >= self.duration_s:
                raise ValueError(f"event time {ev.time_s} >= duration {self.duration_s}")
            key = (ev.time_s, ev.instrument)
            if prev is not None and key < prev:
                raise ValueError("events not sorted by (time_s, instrument)")
            prev = key

    @classmethod
    def from_events(cls, events, duration_s: float) -> "EventSequence":
        ordered = tuple(sorted(events, key=lambda e: (e.time_s, e.instrument)))
        return cls(events=ordered, duration_s=duration_s)

    def __len__(self) -> int:
        return len(self.events)


@dataclass(frozen=True)
class Segment:
    """A fixed-length window of an EventSequence, re-based to its own start."""

    source_file: str
    offset_s: float
    length_s: float
    events: EventSequence


@dataclass
class MidiScan:
    """Per-file parse summary for corpus reports."""

    path: str
    events: EventSequence
    dropped_keys: Counter = field(default_factory=Counter)
    tempo_change_count: int = 0

    @property
    def event_count(self) -> int:
        return len(self.events)

    @property
    def dropped_count(self) -> int:
        return sum(self.dropped_keys.values())

    def to_dict(self) -> dict:
        return {
            "path": self.path,
            "event_count": self.event_count,
            "duration_s": self.events.duration_s,
            "tempo_changes": self.tempo_change_count,
            "dropped_key_count": self.dropped_count,
            "dropped_keys": {str(k): v for k, v in sorted(self.dropped_keys.items())},
        }


class TempoMap:
    """Piecewise-constant tempo; tick-to-seconds with exact integer sums."""

    def __init__(self, ppq: int, changes: list[tuple[int, int]]):
        self.ppq = ppq
        ticks = [0]
        uspb = [DEFAULT_TEMPO_USPB]
        for tick, us in sorted(changes, key=lambda c: c[0]):
            if tick == ticks[-1]:
                uspb[-1] = us
            else:
                ticks.append(tick)
                uspb.append(us)
        self._ticks = ticks
        self._uspb = uspb
        cum = [0]
        for i in range(1, len(ticks)):
            cum.append(cum[-1] + (ticks[i] - ticks[i - 1]) * uspb[i - 1])
        self._cum_ustick = cum  # exact python ints
        self._den = ppq * 1_000_000

    def seconds(self, tick: int) -> float:
        i = bisect_right(self._ticks, tick) - 1
        numerator = self._cum_ustick[i] + (tick - self._ticks[i]) * self._uspb[i]
        return numerator / self._den


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def need(self, n: int, what: str) -> None:
        if self.pos + n > len(self.data):
            raise MidiParseError(f"truncated file while reading {what}", self.pos)

    def take(self, n: int, what: str) -> bytes:
        self.need(n, what)
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u8(self, what: str = "byte") -> int:
        return self.take(1, what)[0]

    def u16(self, what: str) -> int:
        return int.from_bytes(self.take(2, what), "big")

    def u32(self, what: str) -> int:
        return int.from_bytes(self.take(4, what), "big")

    def varlen(self, what: str) -> int:
        value = 0
        for _ in range(4):
            b = self.u8(what)
            value = (value << 7) | (b & 0x7F)
            if not b & 0x80:
                return value
        raise MidiParseError(f"variable-length {what} exceeds 4 bytes", self.pos)


def _parse_track(r: _Reader, track_end: int, notes: list, tempos: list) -> int:
    """Consume one MTrk body; returns the track's final absolute tick."""
    abs_tick = 0
    running: int | None = None
    while r.pos < track_end:
        abs_tick += r.varlen("delta time")
        status_offset = r.pos
        b0 = r.u8("event status")
        if b0 == 0xFF:
            running = None
            mtype = r.u8("meta type")
            mlen = r.varlen("meta length")
            mdata = r.take(mlen, "meta data")
            if mtype == _META_TEMPO:
                if mlen != 3:
                    raise MidiParseError(f"tempo meta event with length {mlen}", status_offset)
                tempos.append((abs_tick, int.from_bytes(mdata, "big")))
            elif mtype == _META_END_OF_TRACK:
                r.pos = track_end
                return abs_tick
            continue
        if b0 in (0xF0, 0xF7):
            running = None
            r.take(r.varlen("sysex length"), "sysex data")
            continue
        if b0 & 0x80:
            status = b0
            running = status
            d1 = r.u8("data byte")
        else:
            if running is None:
                raise MidiParseError("data byte with no running status", status_offset)
            status = running
            d1 = b0
        if d1 & 0x80:
            raise MidiParseError(f"invalid data byte 0x{d1:02x}", r.pos - 1)
        kind = status & 0xF0
        if kind in (0x80, 0x90, 0xA0, 0xB0, 0xE0):
            d2 = r.u8("data byte")
            if d2 & 0x80:
                raise MidiParseError(f"invalid data byte 0x{d2:02x}", r.pos - 1)
            if kind == 0x90 and (status & 0x0F) == 9 and d2 > 0:
                notes.append((abs_tick, d1, d2))
        # kinds 0xC0/0xD0 carry a single data byte, already consumed
    if r.pos > track_end:
        raise MidiParseError("track event overruns its chunk", r.pos)
    return abs_tick


def scan_midi(path: str | Path) -> MidiScan:
    """Parse an SMF and return percussion events plus parse statistics."""
    path = Path(path)
    r = _Reader(path.read_bytes())
    if r.take(4, "header magic") != b"MThd":
        raise MidiParseError("not an SMF file: missing MThd magic", 0)
    header_len = r.u32("header length")
    if header_len < 6:
        raise MidiParseError(f"header chunk length {header_len} < 6", 4)
    fmt = r.u16("format")
    ntrks = r.u16("track count")
    division = r.u16("division")
    r.take(header_len - 6, "header padding")
    if fmt == 2:
        raise MidiParseError("SMF type 2 is unsupported", 8)
    if fmt not in (0, 1):
        raise MidiParseError(f"unknown SMF format {fmt}", 8)
    if division & 0x8000:
        raise MidiParseError("SMPTE time division is unsupported", 12)
    if division == 0:
        raise MidiParseError("zero ticks-per-quarter division", 12)

    notes: list[tuple[int, int, int]] = []  # (tick, key, velocity)
    tempos: list[tuple[int, int]] = []
    final_ticks: list[int] = []
    for _ in range(ntrks):
        chunk_offset = r.pos
        if r.take(4, "track magic") != b"MTrk":
            raise MidiParseError("expected MTrk chunk", chunk_offset)
        tlen = r.u32("track length")
        track_end = r.pos + tlen
        if track_end > len(r.data):
            raise MidiParseError(f"track chunk length {tlen} overruns file", chunk_offset + 4)
        final_ticks.append(_parse_track(r, track_end, notes, tempos))

    tempo_map = TempoMap(division, tempos)
    dropped: Counter = Counter()
    events = []
    for tick, key, velocity in notes:
        if GM_KEY_MIN <= key <= GM_KEY_MAX:
            events.append(DrumEvent(tempo_map.seconds(tick), map_key(key), velocity))
        else:
            dropped[key] += 1

    duration = tempo_map.seconds(max(final_ticks)) if final_ticks else 0.0
    if events:
        last = max(e.time_s for e in events)
        if last >= duration:
            duration = last + 1e-9  # keep the strict times < duration invariant
    seq = EventSequence.from_events(events, duration)
    return MidiScan(path=str(path), events=seq, dropped_keys=dropped,
                    tempo_change_count=len(tempos))


def parse_midi(path: str | Path) -> EventSequence:
    """Percussion EventSequence of an SMF file (see scan_midi for statistics)."""
    return scan_midi(path).events


def cut_segment(seq: EventSequence, offset_s: float,
                length_s: float = SEGMENT_SECONDS,
                source_file: str = "") -> Segment:
    """Half-open window [offset, offset+length) re-based to start at zero.

    Sequences shorter than the window are padded with trailing silence (the
    segment is still `length_s` long); the offset must satisfy
    0 <= offset <= max(0, duration - length).
    """
    max_offset = max(0.0, seq.duration_s - length_s)
    if not 0.0 <= offset_s <= max_offset:
        raise ValueError(f"offset {offset_s} outside [0, {max_offset}]")
    kept = []
    for ev in seq.events:
        t = ev.time_s - offset_s
        if 0.0 <= t < length_s:
            kept.append(DrumEvent(t, ev.instrument, ev.velocity))
    return Segment(
        source_file=source_file,
        offset_s=offset_s,
        length_s=length_s,
        events=EventSequence.from_events(kept, length_s),
    )


def sample_segments(seq: EventSequence, count: int, rng_seed: int,
                    length_s: float = SEGMENT_SECONDS,
                    source_file: str = "") -> list[Segment]:
    """`count` segments at offsets drawn uniformly over the valid range."""
    if count < 0:
        raise ValueError("count must be >= 0")
    max_offset = max(0.0, seq.duration_s - length_s)
    rng = np.random.default_rng(rng_seed)
    offsets = rng.uniform(0.0, max_offset, size=count) if max_offset > 0 else np.zeros(count)
    return [cut_segment(seq, float(o), length_s, source_file) for o in offsets]
