"""Batch extraction into the embedding-store interchange format.

Output contract (consumed by the drumpipe pipeline):
  <prefix>.manifest.json  {"dimension", "count", "encoder", "entries": [...]}
  <prefix>.f32            flat little-endian float32, count x dimension

Preprocessing (peak normalization, pad/crop length, resampling) is recorded
in the manifest so libraries built with different settings are never mixed.
Unreadable files are skipped with a logged reason and listed in the
manifest, never silently dropped.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from . import ExtractorError
from .encoders import DEFAULT_ENCODER, get_encoder

log = logging.getLogger(__name__)

AUDIO_SUFFIXES = {".wav"}


@dataclass
class ExtractionJob:
    inputs: list[Path]
    out_prefix: Path
    encoder_id: str = DEFAULT_ENCODER
    batch_size: int = 32
    gold_labels: dict[str, int] = field(default_factory=dict)

    @classmethod
    def from_dir(cls, input_dir: str | Path, out_prefix: str | Path, **kwargs) -> "ExtractionJob":
        root = Path(input_dir)
        if not root.is_dir():
            raise ExtractorError(f"input directory {input_dir!r} does not exist")
        inputs = sorted(p for p in root.rglob("*") if p.suffix.lower() in AUDIO_SUFFIXES)
        return cls(inputs=inputs, out_prefix=Path(out_prefix), **kwargs)


def _load_mono(path: Path) -> tuple[np.ndarray, int]:
    rate, data = wavfile.read(path)
    if data.ndim == 2:
        data = data.mean(axis=1)
    if data.dtype == np.int16:
        data = data / 32768.0
    elif data.dtype == np.int32:
        data = data / 2147483648.0
    elif data.dtype == np.uint8:
        data = (data.astype(np.float64) - 128.0) / 128.0
    data = np.asarray(data, dtype=np.float64)
    if not np.all(np.isfinite(data)):
        raise ExtractorError("non-finite samples")
    if data.shape[0] == 0:
        raise ExtractorError("empty audio")
    return data, int(rate)


def _resample_linear(audio: np.ndarray, src_rate: int, dst_rate: int) -> np.ndarray:
    if src_rate == dst_rate:
        return audio
    n_out = int(round(audio.shape[0] * dst_rate / src_rate))
    positions = np.arange(n_out) * (src_rate / dst_rate)
    return np.interp(positions, np.arange(audio.shape[0]), audio)


def preprocess(audio: np.ndarray, src_rate: int, encoder) -> np.ndarray:
    """Resample to the encoder rate, peak-normalize, pad/crop to its length."""
    audio = _resample_linear(audio, src_rate, encoder.sample_rate)
    peak = np.max(np.abs(audio))
    if peak > 0:
        audio = audio / peak
    n = encoder.expected_samples
    if audio.shape[0] >= n:
        return audio[:n]
    padded = np.zeros(n, dtype=np.float64)
    padded[: audio.shape[0]] = audio
    return padded


def extract(job: ExtractionJob) -> dict:
    """Run the encoder over the job's files; returns the manifest dict."""
    encoder = get_encoder(job.encoder_id)
    seen_ids: set[str] = set()
    prepared: list[tuple[str, Path, float]] = []
    batch_audio: list[np.ndarray] = []
    skipped: list[dict] = []

    for path in job.inputs:
        try:
            audio, rate = _load_mono(path)
        except Exception as exc:
            log.warning("skipping %s: %s", path, exc)
            skipped.append({"audio_path": str(path), "reason": str(exc)})
            continue
        sample_id = path.stem
        if sample_id in seen_ids:
            sample_id = f"{path.parent.name}__{path.stem}"
        suffix = 1
        base_id = sample_id
        while sample_id in seen_ids:
            sample_id = f"{base_id}-{suffix}"
            suffix += 1
        seen_ids.add(sample_id)
        prepared.append((sample_id, path, audio.shape[0] / rate))
        batch_audio.append(preprocess(audio, rate, encoder))

    vectors = np.empty((len(prepared), encoder.dimension), dtype=np.float32)
    for start in range(0, len(prepared), job.batch_size):
        chunk = batch_audio[start : start + job.batch_size]
        encoded = encoder.encode_batch(chunk)
        if encoded.shape != (len(chunk), encoder.dimension):
            raise ExtractorError(
                f"encoder returned shape {encoded.shape}, "
                f"expected ({len(chunk)}, {encoder.dimension})")
        vectors[start : start + len(chunk)] = encoded
    if not np.all(np.isfinite(vectors)):
        raise ExtractorError("encoder produced non-finite embedding components")

    out_prefix = job.out_prefix
    out_prefix.parent.mkdir(parents=True, exist_ok=True)
    blob_path = out_prefix.with_suffix(".f32")
    blob_path.write_bytes(np.ascontiguousarray(vectors, dtype="<f4").tobytes())

    entries = []
    for i, (sample_id, path, duration) in enumerate(prepared):
        entries.append({
            "sample_id": sample_id,
            "audio_path": str(path.resolve()),
            "gold_label": job.gold_labels.get(sample_id),
            "duration_s": duration,
            "embedding_offset": i * encoder.dimension * 4,
        })
    manifest = {
        "dimension": encoder.dimension,
        "count": len(entries),
        "encoder": encoder.encoder_id,
        "preprocessing": {
            "sample_rate": encoder.sample_rate,
            "expected_samples": encoder.expected_samples,
            "loudness": "peak-normalized",
            "resampler": "linear",
        },
        "entries": entries,
        "skipped": skipped,
    }
    manifest_path = out_prefix.parent / f"{out_prefix.name}.manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2) + "\n")
    return manifest


def output_paths(out_prefix: str | Path) -> tuple[Path, Path]:
    prefix = Path(out_prefix)
    return prefix.parent / f"{prefix.name}.manifest.json", prefix.with_suffix(".f32")
