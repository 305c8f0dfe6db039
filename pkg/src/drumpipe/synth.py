"""One-shot sample synthesis and log-mel feature extraction.

Renders event segments by placing velocity-scaled one-shot samples at their
onsets (optionally blending two same-class samples per event), then turns
audio into log-mel features on the same 10 ms hop grid as the tokenizer.
All mixing and interpolation accumulates in float64 and casts to float32 at
the edge, which makes endpoint/idempotence/superposition properties exact.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from . import DrumpipeError, PIPELINE_VERSION
from . import kernels
from .curator import LabeledSample, load_library
from .midi import SEGMENT_SECONDS, Segment
from .tokenizer import TokenVocabulary, encode, write_tokens_jsonl
from .vocab import CLASS_NAMES

DEFAULT_SAMPLE_RATE = 16_000


class AudioDataError(DrumpipeError, ValueError):
    """Non-finite samples or malformed audio input."""


class SampleRateMismatchError(DrumpipeError, ValueError):
    pass


class RenderError(DrumpipeError, RuntimeError):
    """Rendering cannot proceed (e.g. empty pool for a needed instrument)."""


@dataclass(frozen=True)
class AudioBuffer:
    """Mono float32 audio."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self) -> None:
        s = self.samples
        if s.ndim != 1:
            raise AudioDataError(f"expected mono 1-D audio, got shape {s.shape}")
        if s.dtype != np.float32:
            object.__setattr__(self, "samples", s.astype(np.float32))
        if not np.all(np.isfinite(self.samples)):
            raise AudioDataError("audio contains non-finite samples")

    @property
    def duration_s(self) -> float:
        return self.samples.shape[0] / self.sample_rate

    def peak(self) -> float:
        return float(np.max(np.abs(self.samples))) if self.samples.size else 0.0


def load_wav(path: str | Path) -> AudioBuffer:
    """Read a WAV file as mono float32 in [-1, 1]."""
    rate, data = wavfile.read(path)
    if data.ndim == 2:
        data = data.mean(axis=1)
    if data.dtype == np.int16:
        data = data / 32768.0
    elif data.dtype == np.int32:
        data = data / 2147483648.0
    elif data.dtype == np.uint8:
        data = (data.astype(np.float64) - 128.0) / 128.0
    return AudioBuffer(np.asarray(data, dtype=np.float32), int(rate))


def save_wav(buffer: AudioBuffer, path: str | Path) -> None:
    """Write 16-bit PCM (RIFF) deterministically.

    Scale matches load_wav (x * 32768, clipped at full scale) so a
    save/load roundtrip stays within half a quantization step.
    """
    scaled = np.round(buffer.samples.astype(np.float64) * 32768.0)
    pcm = np.clip(scaled, -32768, 32767).astype(np.int16)
    wavfile.write(str(path), buffer.sample_rate, pcm)


def resample(buffer: AudioBuffer, target_rate: int) -> AudioBuffer:
    """Windowed-sinc rate conversion (see drumpipe.kernels)."""
    if buffer.sample_rate == target_rate:
        return buffer
    out = kernels.resample(buffer.samples.astype(np.float64), buffer.sample_rate, target_rate)
    return AudioBuffer(out.astype(np.float32), target_rate)


def interpolate(x1: AudioBuffer, x2: AudioBuffer, alpha: float) -> AudioBuffer:
    """Sample-wise alpha*x1 + (1-alpha)*x2; the shorter buffer is zero-padded."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha {alpha} outside [0, 1]")
    if x1.sample_rate != x2.sample_rate:
        raise SampleRateMismatchError(
            f"sample rates differ: {x1.sample_rate} vs {x2.sample_rate}")
    n = max(x1.samples.shape[0], x2.samples.shape[0])
    a = np.zeros(n, dtype=np.float64)
    b = np.zeros(n, dtype=np.float64)
    a[: x1.samples.shape[0]] = x1.samples
    b[: x2.samples.shape[0]] = x2.samples
    return AudioBuffer((alpha * a + (1.0 - alpha) * b).astype(np.float32), x1.sample_rate)


@dataclass(frozen=True)
class KitSample:
    sample_id: str
    class_id: int
    buffer: AudioBuffer


class SamplerKit:
    """Per-class pools of one-shot samples, immutable after load."""

    def __init__(self, samples: list[KitSample], sample_rate: int = DEFAULT_SAMPLE_RATE):
        self.sample_rate = sample_rate
        self.pools: dict[int, list[KitSample]] = {}
        self._by_id: dict[str, KitSample] = {}
        for s in samples:
            if s.buffer.sample_rate != sample_rate:
                raise SampleRateMismatchError(
                    f"kit sample {s.sample_id!r} at {s.buffer.sample_rate} Hz, kit at {sample_rate} Hz")
            self.pools.setdefault(s.class_id, []).append(s)
            self._by_id[s.sample_id] = s

    @classmethod
    def from_samples(cls, entries: list[LabeledSample],
                     sample_rate: int = DEFAULT_SAMPLE_RATE,
                     base_dir: str | Path | None = None) -> "SamplerKit":
        """Load labeled samples' audio, resampling each one-shot to the kit rate."""
        root = Path(base_dir) if base_dir is not None else Path(".")
        loaded = []
        for entry in entries:
            audio_path = Path(entry.audio_path)
            if not audio_path.is_absolute():
                audio_path = root / audio_path
            buf = resample(load_wav(audio_path), sample_rate)
            loaded.append(KitSample(entry.sample_id, entry.class_id, buf))
        return cls(loaded, sample_rate)

    @classmethod
    def from_library(cls, library_path: str | Path,
                     sample_rate: int = DEFAULT_SAMPLE_RATE,
                     base_dir: str | Path | None = None) -> "SamplerKit":
        """Load library.jsonl entries; relative audio paths resolve next to it."""
        library_path = Path(library_path)
        root = Path(base_dir) if base_dir is not None else library_path.parent
        return cls.from_samples(load_library(library_path), sample_rate, root)

    def pool(self, class_id: int) -> list[KitSample]:
        pool = self.pools.get(class_id, [])
        if not pool:
            raise RenderError(
                f"no samples for instrument {class_id} ({CLASS_NAMES[class_id]})")
        return pool

    def sample(self, sample_id: str) -> KitSample:
        try:
            return self._by_id[sample_id]
        except KeyError:
            raise RenderError(f"unknown kit sample {sample_id!r}") from None


@dataclass(frozen=True)
class EventChoice:
    """Recorded per-event sampling decision, sufficient to replay a render."""

    sample_id: str
    partner_id: str | None = None
    alpha: float | None = None

    def to_dict(self) -> dict:
        return {"sample_id": self.sample_id, "partner_id": self.partner_id,
                "alpha": self.alpha}

    @classmethod
    def from_dict(cls, raw: dict) -> "EventChoice":
        return cls(sample_id=raw["sample_id"], partner_id=raw.get("partner_id"),
                   alpha=raw.get("alpha"))


@dataclass(frozen=True)
class RenderResult:
    audio: AudioBuffer
    choices: tuple[EventChoice, ...]
    gain: float  # multiplier applied after mixing (1.0 unless peak-normalized)


def _choice_audio(kit: SamplerKit, choice: EventChoice) -> np.ndarray:
    base = kit.sample(choice.sample_id).buffer
    if choice.partner_id is None:
        return base.samples.astype(np.float64)
    partner = kit.sample(choice.partner_id).buffer
    return interpolate(base, partner, choice.alpha).samples.astype(np.float64)


def render(segment: Segment, kit: SamplerKit,
           rng: np.random.Generator | None = None,
           augment_prob: float = 0.5,
           choices: list[EventChoice] | None = None) -> RenderResult:
    """Mix one-shots at the segment's onsets into a fixed-length buffer.

    With `choices` given the render is a deterministic replay; otherwise the
    generator draws a pool sample per event (and, with probability
    `augment_prob`, a same-class partner and blend coefficient). Events are
    scaled by velocity/127; audio that runs past the window is truncated;
    if the mix peaks above 1 the whole buffer is rescaled and the gain
    recorded.
    """
    events = segment.events.events
    if choices is None:
        if rng is None:
            raise ValueError("render needs either an rng or explicit choices")
        drawn = []
        for ev in events:
            pool = kit.pool(ev.instrument)
            pick = pool[int(rng.integers(0, len(pool)))]
            if rng.random() < augment_prob:
                partner = pool[int(rng.integers(0, len(pool)))]
                drawn.append(EventChoice(pick.sample_id, partner.sample_id,
                                         float(rng.random())))
            else:
                drawn.append(EventChoice(pick.sample_id))
        choices = drawn
    elif len(choices) != len(events):
        raise RenderError(f"{len(choices)} choices for {len(events)} events")

    n_out = int(round(segment.length_s * kit.sample_rate))
    mix = np.zeros(n_out, dtype=np.float64)
    placed = []
    for ev, choice in zip(events, choices):
        data = _choice_audio(kit, choice)
        start = int(math.floor(ev.time_s * kit.sample_rate + 0.5))
        placed.append((start, data, ev.velocity / 127.0))
    kernels.mix_events(mix, placed)

    gain = 1.0
    peak = float(np.max(np.abs(mix))) if n_out else 0.0
    if peak > 1.0:
        gain = 1.0 / peak
        mix *= gain
    return RenderResult(AudioBuffer(mix.astype(np.float32), kit.sample_rate),
                        tuple(choices), gain)


@dataclass(frozen=True)
class MelConfig:
    n_fft: int = 2048
    hop_length: int = 160
    n_mels: int = 128
    fmin_hz: float = 20.0
    fmax_hz: float = 7600.0
    log_floor: float = 1e-5

    def to_dict(self) -> dict:
        return {"n_fft": self.n_fft, "hop_length": self.hop_length,
                "n_mels": self.n_mels, "fmin_hz": self.fmin_hz,
                "fmax_hz": self.fmax_hz, "log_floor": self.log_floor}

    @classmethod
    def from_dict(cls, raw: dict) -> "MelConfig":
        return cls(**{k: raw[k] for k in cls().to_dict() if k in raw})


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


_FILTERBANK_CACHE: dict[tuple, np.ndarray] = {}


def mel_filterbank(sample_rate: int, config: MelConfig) -> np.ndarray:
    """Triangular filters (n_mels, n_fft//2+1), unit peak per band."""
    key = (sample_rate, config.n_fft, config.n_mels, config.fmin_hz, config.fmax_hz)
    cached = _FILTERBANK_CACHE.get(key)
    if cached is not None:
        return cached
    fft_freqs = np.fft.rfftfreq(config.n_fft, 1.0 / sample_rate)
    mel_points = np.linspace(hz_to_mel(config.fmin_hz), hz_to_mel(config.fmax_hz),
                             config.n_mels + 2)
    hz_points = mel_to_hz(mel_points)
    bank = np.zeros((config.n_mels, fft_freqs.shape[0]))
    for m in range(config.n_mels):
        lo, center, hi = hz_points[m], hz_points[m + 1], hz_points[m + 2]
        rising = (fft_freqs - lo) / (center - lo)
        falling = (hi - fft_freqs) / (hi - center)
        bank[m] = np.maximum(0.0, np.minimum(rising, falling))
    _FILTERBANK_CACHE[key] = bank
    return bank


def _stft_magnitude(x: np.ndarray, n_fft: int, hop: int) -> np.ndarray:
    """Magnitude STFT with frames centered at i*hop; ceil(n/hop) frames."""
    n = x.shape[0]
    n_frames = -(-n // hop)
    pad = n_fft // 2
    padded = np.concatenate([np.zeros(pad), x.astype(np.float64), np.zeros(pad)])
    windows = np.lib.stride_tricks.sliding_window_view(padded, n_fft)[::hop][:n_frames]
    hann = 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n_fft) / n_fft)
    return np.abs(np.fft.rfft(windows * hann, axis=1))


def mel_features(audio: AudioBuffer, config: MelConfig | None = None) -> np.ndarray:
    """Log-magnitude mel spectrogram, shape (ceil(n/hop) frames, n_mels).

    A 2.56 s buffer at 16 kHz with the default 160-sample hop yields
    256 frames; silence maps every cell to log(log_floor).
    """
    config = config or MelConfig()
    if audio.samples.shape[0] == 0:
        raise AudioDataError("cannot compute features of empty audio")
    magnitude = _stft_magnitude(audio.samples, config.n_fft, config.hop_length)
    bank = mel_filterbank(audio.sample_rate, config)
    mel = magnitude @ bank.T
    return np.log(np.maximum(mel, config.log_floor)).astype(np.float32)


@dataclass
class RenderOptions:
    seed: int = 0
    augment_prob: float = 0.5
    write_wav: bool = True
    write_mel: bool = True
    write_onsets: bool = True
    mel: MelConfig = field(default_factory=MelConfig)
    token_vocab: TokenVocabulary = field(default_factory=TokenVocabulary)
    workers: int = 1
    manifest_extra: dict = field(default_factory=dict)


def _render_one(index: int, segment: Segment, kit: SamplerKit, options: RenderOptions):
    rng = np.random.Generator(np.random.PCG64(
        np.random.SeedSequence(entropy=options.seed, spawn_key=(index,))))
    result = render(segment, kit, rng=rng, augment_prob=options.augment_prob)
    mel = mel_features(result.audio, options.mel) if options.write_mel else None
    tokens = encode(segment, options.token_vocab)
    return result, mel, tokens


def render_dataset(segments: list[Segment], kit: SamplerKit,
                   out_dir: str | Path, options: RenderOptions | None = None) -> dict:
    """Render segments into a shard directory; returns the shard index.

    Emits per segment (by flag): 16-bit WAV, row-major float32 mel features,
    an onset TSV; plus tokens.jsonl and shard.json recording every random
    choice so the shard is exactly reproducible. Any render error removes
    the partial outputs before propagating.
    """
    options = options or RenderOptions()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    created: list[Path] = []

    def emit(path: Path, data: bytes) -> None:
        path.write_bytes(data)
        created.append(path)

    try:
        if options.workers > 1:
            with ThreadPoolExecutor(max_workers=options.workers) as pool:
                rendered = list(pool.map(
                    lambda iseg: _render_one(iseg[0], iseg[1], kit, options),
                    enumerate(segments)))
        else:
            rendered = [_render_one(i, seg, kit, options) for i, seg in enumerate(segments)]

        records = []
        token_rows = []
        for i, (segment, (result, mel, tokens)) in enumerate(zip(segments, rendered)):
            seg_id = f"seg-{i:05d}"
            files: dict[str, str] = {}
            if options.write_wav:
                wav_path = out_dir / f"{seg_id}.wav"
                save_wav(result.audio, wav_path)
                created.append(wav_path)
                files["wav"] = wav_path.name
            if options.write_mel:
                mel_path = out_dir / f"{seg_id}.mel.f32"
                emit(mel_path, np.ascontiguousarray(mel, dtype="<f4").tobytes())
                files["mel"] = mel_path.name
            if options.write_onsets:
                onset_path = out_dir / f"{seg_id}.onsets.tsv"
                lines = [f"{ev.time_s:.9f}\t{ev.instrument}\t{ev.velocity}"
                         for ev in segment.events.events]
                emit(onset_path, ("\n".join(lines) + ("\n" if lines else "")).encode())
                files["onsets"] = onset_path.name
            token_rows.append((seg_id, tokens))
            records.append({
                "id": seg_id,
                "midi_source": segment.source_file,
                "offset_s": segment.offset_s,
                "gain": result.gain,
                "clamped_tokens": tokens.clamped_events,
                "sample_choices": [c.to_dict() for c in result.choices],
                "files": files,
            })

        tokens_path = out_dir / "tokens.jsonl"
        write_tokens_jsonl(tokens_path, token_rows)
        created.append(tokens_path)

        index = {
            "pipeline_version": PIPELINE_VERSION,
            "seed": options.seed,
            "sample_rate": kit.sample_rate,
            "augment_prob": options.augment_prob,
            "segment_seconds": SEGMENT_SECONDS,
            "mel_config": options.mel.to_dict(),
            "tokenizer": options.token_vocab.to_dict(),
            "segments": records,
        }
        if options.manifest_extra:
            index.update(options.manifest_extra)
        shard_path = out_dir / "shard.json"
        shard_path.write_text(json.dumps(index, indent=2, sort_keys=False) + "\n")
        created.append(shard_path)
        return index
    except Exception:
        for path in created:
            path.unlink(missing_ok=True)
        raise


def load_shard(shard_dir: str | Path) -> dict:
    return json.loads((Path(shard_dir) / "shard.json").read_text())


def replay_segment(shard_dir: str | Path, record: dict, segment: Segment,
                   kit: SamplerKit) -> RenderResult:
    """Re-render one shard entry from its recorded choices."""
    choices = [EventChoice.from_dict(c) for c in record["sample_choices"]]
    return render(segment, kit, choices=choices)
