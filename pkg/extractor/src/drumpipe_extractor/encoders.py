"""Audio encoders behind a common batch interface.

`dsp-mel-v1` is the default: a self-contained, fully deterministic encoder
(log-mel statistics through a fixed random projection) that needs no model
weights. `clap-htsat-unfused` wraps the pretrained contrastive audio encoder
via transformers and is available wherever its weights can be loaded.
"""

from __future__ import annotations

import numpy as np

from . import EncoderUnavailableError, ExtractorError


class DspMelEncoder:
    """Deterministic DSP encoder: pooled log-mel statistics, fixed projection.

    Bit-stable across runs by construction: no learned weights, a seeded
    projection matrix, and pure-numpy single-threaded math.
    """

    encoder_id = "dsp-mel-v1"
    sample_rate = 16_000
    expected_samples = 16_000  # inputs are padded/cropped to 1.0 s
    dimension = 512

    _N_FFT = 1024
    _HOP = 256
    _N_MELS = 64
    _LOG_FLOOR = 1e-5

    def __init__(self) -> None:
        rng = np.random.default_rng(0x5EED)
        stats_dim = 3 * self._N_MELS
        self._projection = rng.standard_normal((stats_dim, self.dimension)) / np.sqrt(stats_dim)
        self._filterbank = self._build_filterbank()

    def _build_filterbank(self) -> np.ndarray:
        def hz_to_mel(f):
            return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)

        def mel_to_hz(m):
            return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)

        freqs = np.fft.rfftfreq(self._N_FFT, 1.0 / self.sample_rate)
        points = mel_to_hz(np.linspace(hz_to_mel(20.0), hz_to_mel(7600.0), self._N_MELS + 2))
        bank = np.zeros((self._N_MELS, freqs.shape[0]))
        for m in range(self._N_MELS):
            lo, center, hi = points[m], points[m + 1], points[m + 2]
            bank[m] = np.maximum(0.0, np.minimum((freqs - lo) / (center - lo),
                                                 (hi - freqs) / (hi - center)))
        return bank

    def _log_mel(self, audio: np.ndarray) -> np.ndarray:
        n = audio.shape[0]
        n_frames = 1 + (n - self._N_FFT) // self._HOP
        window = 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(self._N_FFT) / self._N_FFT)
        frames = np.lib.stride_tricks.sliding_window_view(audio, self._N_FFT)[:: self._HOP]
        frames = frames[:n_frames]
        spectrum = np.abs(np.fft.rfft(frames * window, axis=1))
        mel = spectrum @ self._filterbank.T
        return np.log(np.maximum(mel, self._LOG_FLOOR))

    def encode_batch(self, batch: list[np.ndarray]) -> np.ndarray:
        out = np.empty((len(batch), self.dimension), dtype=np.float32)
        for i, audio in enumerate(batch):
            mel = self._log_mel(audio.astype(np.float64))
            stats = np.concatenate([mel.mean(axis=0), mel.std(axis=0), mel.max(axis=0)])
            out[i] = (stats @ self._projection).astype(np.float32)
        return out


class ClapEncoder:
    """Pretrained contrastive audio encoder (lazy-loaded via transformers)."""

    encoder_id = "clap-htsat-unfused"
    sample_rate = 48_000
    expected_samples = 48_000 * 7
    dimension = 512

    _CHECKPOINT = "laion/clap-htsat-unfused"

    def __init__(self) -> None:
        self._model = None
        self._processor = None

    def _load(self) -> None:
        if self._model is not None:
            return
        try:
            import torch
            from transformers import ClapModel, ClapProcessor
        except ImportError as exc:
            raise EncoderUnavailableError(
                f"encoder {self.encoder_id!r} needs transformers+torch: {exc}") from None
        try:
            self._model = ClapModel.from_pretrained(self._CHECKPOINT).eval()
            self._processor = ClapProcessor.from_pretrained(self._CHECKPOINT)
        except Exception as exc:
            raise EncoderUnavailableError(
                f"cannot load {self._CHECKPOINT!r} (weights unavailable?): {exc}") from None
        self._torch = torch

    def encode_batch(self, batch: list[np.ndarray]) -> np.ndarray:
        self._load()
        inputs = self._processor(audios=[a.astype(np.float32) for a in batch],
                                 sampling_rate=self.sample_rate, return_tensors="pt")
        with self._torch.no_grad():
            features = self._model.get_audio_features(**inputs)
        return features.cpu().numpy().astype(np.float32)


_REGISTRY = {
    DspMelEncoder.encoder_id: DspMelEncoder,
    ClapEncoder.encoder_id: ClapEncoder,
}

DEFAULT_ENCODER = DspMelEncoder.encoder_id


def available_encoders() -> list[str]:
    return sorted(_REGISTRY)


def get_encoder(encoder_id: str):
    try:
        return _REGISTRY[encoder_id]()
    except KeyError:
        raise ExtractorError(
            f"unknown encoder {encoder_id!r}; available: {', '.join(available_encoders())}"
        ) from None
