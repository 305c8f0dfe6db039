"""Shared fixtures: synthetic embedding stores, one-shot WAVs, MIDI corpora."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest

from drumpipe import embed_store
from drumpipe.synth import AudioBuffer, save_wav
from drumpipe.vocab import CLASS_NAMES

from smf_util import write_smf

# Classes used by the small end-to-end corpus, with one GM key each.
FIXTURE_CLASSES = (0, 3, 7, 9, 11, 13)
FIXTURE_KEYS = {0: 35, 3: 38, 7: 42, 9: 46, 11: 49, 13: 51}


def write_store_files(dir_path: Path, vectors: np.ndarray, gold_labels,
                      sample_ids=None, audio_paths=None, encoder=None,
                      prefix: str = "embeddings"):
    """Write a manifest + blob pair; returns (manifest_path, blob_path)."""
    dir_path.mkdir(parents=True, exist_ok=True)
    n, d = vectors.shape
    if sample_ids is None:
        sample_ids = [f"s{i:04d}" for i in range(n)]
    if audio_paths is None:
        audio_paths = [f"{sid}.wav" for sid in sample_ids]
    blob_path = dir_path / f"{prefix}.f32"
    blob_path.write_bytes(np.ascontiguousarray(vectors, dtype="<f4").tobytes())
    manifest = {
        "dimension": d,
        "count": n,
        "entries": [
            {"sample_id": sample_ids[i], "audio_path": str(audio_paths[i]),
             "gold_label": gold_labels[i], "duration_s": 0.25,
             "embedding_offset": i * d * 4}
            for i in range(n)
        ],
    }
    if encoder:
        manifest["encoder"] = encoder
    manifest_path = dir_path / f"{prefix}.manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2))
    return manifest_path, blob_path


@pytest.fixture
def store_factory(tmp_path):
    def build(vectors, gold_labels, **kwargs):
        manifest, blob = write_store_files(tmp_path / "store", np.asarray(vectors, dtype=np.float32),
                                           gold_labels, **kwargs)
        return embed_store.load_store(manifest, blob)
    return build


def class_anchors(n_classes: int, dim: int, seed: int = 42) -> np.ndarray:
    """Well-separated unit vectors, one per class."""
    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    return q[:n_classes].astype(np.float32)


def make_one_shot(class_id: int, variant: int, sample_rate: int = 16000,
                  duration_s: float = 0.12) -> AudioBuffer:
    """Deterministic decaying tone; frequency keyed by class, detuned per variant."""
    n = int(duration_s * sample_rate)
    t = np.arange(n) / sample_rate
    freq = 80.0 + 60.0 * class_id + 7.0 * variant
    env = np.exp(-t / 0.03)
    rng = np.random.default_rng(1000 * class_id + variant)
    wave = 0.6 * np.sin(2 * np.pi * freq * t) * env
    wave += 0.05 * rng.standard_normal(n) * env
    return AudioBuffer(wave.astype(np.float32), sample_rate)


@pytest.fixture
def fixture_corpus(tmp_path):
    """5 MIDI files + 30 one-shots + synthetic embeddings, ready for the CLI."""
    root = tmp_path / "corpus"
    samples_dir = root / "samples"
    midi_dir = root / "midi"
    samples_dir.mkdir(parents=True)
    midi_dir.mkdir(parents=True)

    # 30 one-shots: 5 variants per fixture class; filenames carry class names.
    sample_ids, audio_paths, true_labels = [], [], []
    for class_id in FIXTURE_CLASSES:
        for variant in range(5):
            sid = f"c{class_id:02d}v{variant}"
            rate = 16000 if variant % 2 == 0 else 44100
            path = samples_dir / f"{CLASS_NAMES[class_id]} {variant + 1:02d}.wav"
            save_wav(make_one_shot(class_id, variant, rate), path)
            sample_ids.append(sid)
            audio_paths.append(path)
            true_labels.append(class_id)

    # Embeddings: anchor per class + small noise; first 3 variants are gold.
    anchors = class_anchors(26, 16)
    rng = np.random.default_rng(7)
    vectors = np.empty((len(sample_ids), 16), dtype=np.float32)
    gold_labels = []
    for i, class_id in enumerate(true_labels):
        vectors[i] = anchors[class_id] + 0.05 * rng.standard_normal(16).astype(np.float32)
        gold_labels.append(class_id if i % 5 < 3 else None)
    manifest, blob = write_store_files(root / "emb", vectors, gold_labels,
                                       sample_ids=sample_ids, audio_paths=audio_paths)

    # 5 MIDI files, ~8 s each, one tempo change, notes on fixture keys.
    keys = [FIXTURE_KEYS[c] for c in FIXTURE_CLASSES]
    for f in range(5):
        events = [("tempo", 0, 500_000), ("tempo", 1920, 400_000 + 20_000 * f)]
        tick = 0
        note_rng = np.random.default_rng(100 + f)
        for _ in range(30):
            tick += int(note_rng.integers(120, 480))
            key = keys[int(note_rng.integers(0, len(keys)))]
            velocity = int(note_rng.integers(50, 127))
            events.append(("note", tick, key, velocity))
        write_smf(midi_dir / f"track{f}.mid", 480, [events], end_tick=tick + 480)

    return {
        "root": root,
        "samples_dir": samples_dir,
        "midi_dir": midi_dir,
        "manifest": manifest,
        "blob": blob,
        "sample_ids": sample_ids,
        "true_labels": true_labels,
        "gold_labels": gold_labels,
    }
