"""Fixed-dimension audio embedding store.

On-disk interchange format (the bit-exact contract with the extractor):

  embeddings.manifest.json
      {"dimension": d, "count": n, "encoder": "...",      # encoder optional
       "entries": [{"sample_id", "audio_path", "gold_label" (optional/null),
                    "duration_s", "embedding_offset"}, ...]}
  embeddings.f32
      flat little-endian float32 array of n*d values; each entry's
      embedding_offset is a byte offset into it, aligned to whole vectors.

Entries carrying a gold_label form the gold (seed) set; the rest are the
unlabeled set. The store is read-only after load.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import DrumpipeError
from .vocab import NUM_CLASSES


class StoreFormatError(DrumpipeError, ValueError):
    """Manifest/blob structural problem (sizes, offsets, schema)."""


class StoreDataError(DrumpipeError, ValueError):
    """Bad embedding content (NaN/Inf, duplicate or unknown sample ids)."""


@dataclass(frozen=True)
class ManifestEntry:
    sample_id: str
    audio_path: str
    gold_label: int | None
    duration_s: float
    embedding_offset: int


class EmbeddingStore:
    """Validated, immutable collection of sample embeddings."""

    def __init__(self, dimension: int, entries: list[ManifestEntry], blob: np.ndarray,
                 encoder: str | None = None):
        self.dimension = dimension
        self.entries = list(entries)
        self.encoder = encoder
        self._blob = blob  # float32, shape (count * dimension,)
        self._index = {e.sample_id: e for e in self.entries}

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def sample_ids(self) -> list[str]:
        return [e.sample_id for e in self.entries]

    @property
    def gold_entries(self) -> list[ManifestEntry]:
        return [e for e in self.entries if e.gold_label is not None]

    @property
    def unlabeled_entries(self) -> list[ManifestEntry]:
        return [e for e in self.entries if e.gold_label is None]

    def entry(self, sample_id: str) -> ManifestEntry:
        try:
            return self._index[sample_id]
        except KeyError:
            raise StoreDataError(f"unknown sample id {sample_id!r}") from None

    def get_embedding(self, sample_id: str) -> np.ndarray:
        """The stored float32 vector, copied; bit-stable across calls."""
        e = self.entry(sample_id)
        start = e.embedding_offset // 4
        return self._blob[start : start + self.dimension].copy()

    def embeddings_for(self, entries: list[ManifestEntry]) -> np.ndarray:
        """Stacked float32 matrix (len(entries), dimension) in given order."""
        out = np.empty((len(entries), self.dimension), dtype=np.float32)
        for i, e in enumerate(entries):
            start = e.embedding_offset // 4
            out[i] = self._blob[start : start + self.dimension]
        return out


def _require(condition: bool, exc_cls, message: str) -> None:
    if not condition:
        raise exc_cls(message)


def load_store(manifest_path: str | Path, blob_path: str | Path) -> EmbeddingStore:
    """Load and validate the manifest + blob pair."""
    manifest_path = Path(manifest_path)
    blob_path = Path(blob_path)
    try:
        raw = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise StoreFormatError(f"{manifest_path}: not valid JSON ({exc})") from None
    _require(isinstance(raw, dict), StoreFormatError, f"{manifest_path}: expected a JSON object")
    for field in ("dimension", "count", "entries"):
        _require(field in raw, StoreFormatError, f"{manifest_path}: missing {field!r}")
    dimension = int(raw["dimension"])
    count = int(raw["count"])
    _require(dimension > 0, StoreFormatError, "dimension must be positive")
    _require(count >= 0, StoreFormatError, "count must be non-negative")
    entries_raw = raw["entries"]
    _require(isinstance(entries_raw, list) and len(entries_raw) == count, StoreFormatError,
             f"{manifest_path}: entry list length != count")

    blob_bytes = blob_path.read_bytes()
    expected = count * dimension * 4
    _require(
        len(blob_bytes) == expected, StoreFormatError,
        f"{blob_path}: blob is {len(blob_bytes)} bytes, expected {expected} "
        f"(count {count} x dimension {dimension} x 4)",
    )
    blob = np.frombuffer(blob_bytes, dtype="<f4")

    vec_bytes = dimension * 4
    entries: list[ManifestEntry] = []
    seen_ids: set[str] = set()
    seen_offsets: set[int] = set()
    for item in entries_raw:
        sid = str(item["sample_id"])
        _require(sid not in seen_ids, StoreDataError, f"duplicate sample id {sid!r}")
        seen_ids.add(sid)
        gold = item.get("gold_label")
        if gold is not None:
            gold = int(gold)
            _require(0 <= gold < NUM_CLASSES, StoreDataError,
                     f"{sid!r}: gold_label {gold} outside [0, {NUM_CLASSES - 1}]")
        offset = int(item["embedding_offset"])
        _require(offset % vec_bytes == 0, StoreFormatError,
                 f"{sid!r}: embedding_offset {offset} not aligned to {vec_bytes}-byte vectors")
        _require(0 <= offset <= expected - vec_bytes, StoreFormatError,
                 f"{sid!r}: embedding slice [{offset}, {offset + vec_bytes}) outside blob")
        _require(offset not in seen_offsets, StoreFormatError,
                 f"{sid!r}: embedding_offset {offset} already claimed")
        seen_offsets.add(offset)
        entries.append(ManifestEntry(
            sample_id=sid,
            audio_path=str(item.get("audio_path", "")),
            gold_label=gold,
            duration_s=float(item.get("duration_s", 0.0)),
            embedding_offset=offset,
        ))

    for e in entries:
        start = e.embedding_offset // 4
        vec = blob[start : start + dimension]
        if not np.all(np.isfinite(vec)):
            raise StoreDataError(f"non-finite embedding component in sample {e.sample_id!r}")

    encoder = raw.get("encoder")
    return EmbeddingStore(dimension, entries, blob, encoder=str(encoder) if encoder else None)


def write_store(store: EmbeddingStore, manifest_path: str | Path, blob_path: str | Path) -> None:
    """Serialize a store back to the interchange format (byte-exact roundtrip)."""
    blob = np.zeros(len(store) * store.dimension, dtype="<f4")
    for e in store.entries:
        start = e.embedding_offset // 4
        blob[start : start + store.dimension] = store.get_embedding(e.sample_id)
    Path(blob_path).write_bytes(blob.tobytes())

    manifest: dict = {"dimension": store.dimension, "count": len(store)}
    if store.encoder:
        manifest["encoder"] = store.encoder
    manifest["entries"] = [
        {
            "sample_id": e.sample_id,
            "audio_path": e.audio_path,
            "gold_label": e.gold_label,
            "duration_s": e.duration_s,
            "embedding_offset": e.embedding_offset,
        }
        for e in store.entries
    ]
    Path(manifest_path).write_text(json.dumps(manifest, indent=2) + "\n")
