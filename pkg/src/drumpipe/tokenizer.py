"""Bidirectional codec between event sequences and integer token sequences.

Token id space is contiguous: PAD/BOS/EOS, then time tokens on a 10 ms
grid, then the 26 instrument tokens, then (optionally) the 127 velocity
levels. Each onset encodes as (time, instrument[, velocity]); time tokens
are non-decreasing and may repeat for simultaneous events.

The default grid has 245 time steps while the audio window is 2.56 s
(256 steps): onsets that quantize past the last step clamp onto it and are
counted, and `time_token_count=256` makes the grid cover the window
exactly. Both are supported deliberately.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from . import DrumpipeError
from .midi import DrumEvent, EventSequence, Segment
from .vocab import NUM_CLASSES

DEFAULT_TIME_TOKENS = 245
TIME_RESOLUTION_S = 0.010
VELOCITY_LEVELS = 127
DEFAULT_DECODE_VELOCITY = 100

PAD_ID = 0
BOS_ID = 1
EOS_ID = 2
_NUM_SPECIALS = 3


class TokenDecodeError(DrumpipeError, ValueError):
    """Token stream violates the grammar; carries the offending index."""

    def __init__(self, message: str, index: int):
        super().__init__(f"{message} (token index {index})")
        self.index = index


@dataclass(frozen=True)
class TokenVocabulary:
    time_token_count: int = DEFAULT_TIME_TOKENS
    time_resolution_s: float = TIME_RESOLUTION_S
    instrument_count: int = NUM_CLASSES
    velocity_enabled: bool = True
    velocity_levels: int = VELOCITY_LEVELS

    @property
    def time_base(self) -> int:
        return _NUM_SPECIALS

    @property
    def instrument_base(self) -> int:
        return self.time_base + self.time_token_count

    @property
    def velocity_base(self) -> int:
        return self.instrument_base + self.instrument_count

    @property
    def size(self) -> int:
        n = _NUM_SPECIALS + self.time_token_count + self.instrument_count
        if self.velocity_enabled:
            n += self.velocity_levels
        return n

    def time_token(self, step: int) -> int:
        return self.time_base + step

    def instrument_token(self, instrument_id: int) -> int:
        return self.instrument_base + instrument_id

    def velocity_token(self, velocity: int) -> int:
        return self.velocity_base + (velocity - 1)

    def quantize_time(self, time_s: float) -> tuple[int, bool]:
        """Round-half-up onto the grid; returns (step, clamped)."""
        step = math.floor(time_s / self.time_resolution_s + 0.5)
        if step >= self.time_token_count:
            return self.time_token_count - 1, True
        return step, False

    def to_dict(self) -> dict:
        return {
            "time_token_count": self.time_token_count,
            "time_resolution_s": self.time_resolution_s,
            "instrument_count": self.instrument_count,
            "velocity_enabled": self.velocity_enabled,
            "velocity_levels": self.velocity_levels,
            "specials": {"pad": PAD_ID, "bos": BOS_ID, "eos": EOS_ID},
            "time_base": self.time_base,
            "instrument_base": self.instrument_base,
            "velocity_base": self.velocity_base if self.velocity_enabled else None,
            "size": self.size,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "TokenVocabulary":
        return cls(
            time_token_count=int(raw.get("time_token_count", DEFAULT_TIME_TOKENS)),
            time_resolution_s=float(raw.get("time_resolution_s", TIME_RESOLUTION_S)),
            instrument_count=int(raw.get("instrument_count", NUM_CLASSES)),
            velocity_enabled=bool(raw.get("velocity_enabled", True)),
            velocity_levels=int(raw.get("velocity_levels", VELOCITY_LEVELS)),
        )


def save_vocabulary(vocab: TokenVocabulary, path: str | Path) -> None:
    Path(path).write_text(json.dumps(vocab.to_dict(), indent=2) + "\n")


def load_vocabulary(path: str | Path) -> TokenVocabulary:
    return TokenVocabulary.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class TokenSequence:
    ids: tuple[int, ...]
    vocabulary: TokenVocabulary
    clamped_events: int = field(default=0, compare=False)


def encode(segment: Segment | EventSequence, vocab: TokenVocabulary) -> TokenSequence:
    """Tokenize a segment's onsets, sorted by (quantized time, instrument)."""
    events = segment.events.events if isinstance(segment, Segment) else segment.events
    quantized = []
    clamped = 0
    for ev in events:
        step, was_clamped = vocab.quantize_time(ev.time_s)
        clamped += was_clamped
        quantized.append((step, ev.instrument, ev.velocity))
    quantized.sort(key=lambda q: (q[0], q[1]))

    ids = [BOS_ID]
    for step, instrument, velocity in quantized:
        ids.append(vocab.time_token(step))
        ids.append(vocab.instrument_token(instrument))
        if vocab.velocity_enabled:
            ids.append(vocab.velocity_token(velocity))
    ids.append(EOS_ID)
    return TokenSequence(ids=tuple(ids), vocabulary=vocab, clamped_events=clamped)


def _classify_token(vocab: TokenVocabulary, token: int) -> tuple[str, int]:
    if token in (PAD_ID, BOS_ID, EOS_ID):
        return ("special", token)
    if vocab.time_base <= token < vocab.instrument_base:
        return ("time", token - vocab.time_base)
    if vocab.instrument_base <= token < vocab.velocity_base:
        return ("instrument", token - vocab.instrument_base)
    if vocab.velocity_enabled and vocab.velocity_base <= token < vocab.size:
        return ("velocity", token - vocab.velocity_base + 1)
    return ("unknown", token)


def _decode(tokens: TokenSequence, collect_issues: bool):
    vocab = tokens.vocabulary
    ids = tokens.ids
    issues: list[str] = []

    def problem(message: str, index: int) -> None:
        if collect_issues:
            issues.append(f"{message} (token index {index})")
        else:
            raise TokenDecodeError(message, index)

    if not ids or ids[0] != BOS_ID:
        problem("sequence must begin with BOS", 0)
    if not ids or ids[-1] != EOS_ID:
        problem("sequence must end with EOS", max(len(ids) - 1, 0))

    events: list[DrumEvent] = []
    current_step: int | None = None
    pending: tuple[int, int] | None = None  # (step, instrument) awaiting velocity
    last_step = -1
    body = ids[1:-1] if len(ids) >= 2 and ids[0] == BOS_ID and ids[-1] == EOS_ID else ids

    def flush(index: int) -> None:
        nonlocal pending
        if pending is None:
            return
        step, instrument = pending
        pending = None
        if vocab.velocity_enabled:
            problem("instrument token missing its velocity token", index)
        else:
            events.append(DrumEvent(step * vocab.time_resolution_s, instrument,
                                    DEFAULT_DECODE_VELOCITY))

    offset = 1 if body is not ids else 0
    for i, token in enumerate(body):
        index = i + offset
        kind, value = _classify_token(vocab, token)
        if kind == "time":
            flush(index)
            if value < last_step:
                problem(f"time token {value} decreases from {last_step}", index)
            last_step = max(last_step, value)
            current_step = value
        elif kind == "instrument":
            flush(index)
            if current_step is None:
                problem("instrument token with no preceding time token", index)
                continue
            if value >= vocab.instrument_count:
                problem(f"instrument id {value} outside vocabulary", index)
                continue
            pending = (current_step, value)
            if not vocab.velocity_enabled:
                flush(index)
        elif kind == "velocity":
            if pending is None:
                problem("velocity token with no preceding instrument token", index)
                continue
            step, instrument = pending
            pending = None
            events.append(DrumEvent(step * vocab.time_resolution_s, instrument, value))
        elif kind == "special":
            problem(f"unexpected special token {token}", index)
        else:
            problem(f"unknown token id {token}", index)
    flush(len(ids) - 1)

    duration = vocab.time_token_count * vocab.time_resolution_s
    seq = EventSequence.from_events(events, duration)
    return seq, issues


def decode(tokens: TokenSequence) -> EventSequence:
    """Strict inverse of encode; raises TokenDecodeError on grammar violations."""
    seq, _ = _decode(tokens, collect_issues=False)
    return seq


def decode_lenient(tokens: TokenSequence) -> tuple[EventSequence, list[str]]:
    """Best-effort decoding for model output: skips bad tokens, reports them."""
    return _decode(tokens, collect_issues=True)


def write_tokens_jsonl(path: str | Path, rows: list[tuple[str, TokenSequence]]) -> None:
    """One {"segment_id", "ids"} object per line."""
    with open(path, "w") as fh:
        for segment_id, tokens in rows:
            fh.write(json.dumps({"segment_id": segment_id, "ids": list(tokens.ids)}) + "\n")
