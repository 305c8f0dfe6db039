"""Rendering, interpolation, mel features, and shard determinism."""

import json

import numpy as np
import pytest

from drumpipe import synth
from drumpipe.midi import DrumEvent, EventSequence, Segment
from drumpipe.synth import (
    AudioBuffer, AudioDataError, EventChoice, KitSample, MelConfig,
    RenderError, RenderOptions, SamplerKit, SampleRateMismatchError,
    interpolate, load_wav, mel_features, render, render_dataset, save_wav,
)

from conftest import make_one_shot

SR = 16000


def make_segment(events, length=2.56):
    return Segment(source_file="f.mid", offset_s=0.0, length_s=length,
                   events=EventSequence.from_events(events, length))


def make_kit(class_variants: dict[int, int], amplitude=1.0) -> SamplerKit:
    samples = []
    for class_id, count in class_variants.items():
        for variant in range(count):
            buf = make_one_shot(class_id, variant, SR)
            if amplitude != 1.0:
                buf = AudioBuffer(buf.samples * np.float32(amplitude), SR)
            samples.append(KitSample(f"c{class_id}v{variant}", class_id, buf))
    return SamplerKit(samples, SR)


# ---------------------------------------------------------------- buffers


def test_audio_buffer_rejects_nan():
    bad = np.zeros(8, dtype=np.float32)
    bad[3] = np.nan
    with pytest.raises(AudioDataError):
        AudioBuffer(bad, SR)


def test_wav_roundtrip(tmp_path):
    buf = make_one_shot(3, 0, SR)
    path = tmp_path / "x.wav"
    save_wav(buf, path)
    loaded = load_wav(path)
    assert loaded.sample_rate == SR
    np.testing.assert_allclose(loaded.samples, buf.samples, rtol=0, atol=0.5 / 32768 + 1e-7)


def test_wav_write_deterministic(tmp_path):
    buf = make_one_shot(5, 1, SR)
    save_wav(buf, tmp_path / "a.wav")
    save_wav(buf, tmp_path / "b.wav")
    assert (tmp_path / "a.wav").read_bytes() == (tmp_path / "b.wav").read_bytes()


# ---------------------------------------------------------------- interpolate


def test_interpolate_endpoints_exact():
    x1 = make_one_shot(0, 0, SR)
    x2 = make_one_shot(0, 1, SR)
    np.testing.assert_array_equal(interpolate(x1, x2, 1.0).samples, x1.samples)
    np.testing.assert_array_equal(interpolate(x1, x2, 0.0).samples, x2.samples)


def test_interpolate_idempotent_on_equal_inputs():
    x = make_one_shot(2, 0, SR)
    for alpha in (0.0, 0.1, 0.3, 0.5, 0.7, 0.999, 1.0):
        np.testing.assert_array_equal(interpolate(x, x, alpha).samples, x.samples)


def test_interpolate_pads_shorter():
    a = AudioBuffer(np.ones(10, dtype=np.float32), SR)
    b = AudioBuffer(np.ones(4, dtype=np.float32), SR)
    out = interpolate(a, b, 0.5)
    assert out.samples.shape[0] == 10
    np.testing.assert_array_equal(out.samples[:4], np.ones(4, dtype=np.float32))
    np.testing.assert_array_equal(out.samples[4:], np.full(6, 0.5, dtype=np.float32))


def test_interpolate_rate_mismatch():
    a = AudioBuffer(np.ones(4, dtype=np.float32), 16000)
    b = AudioBuffer(np.ones(4, dtype=np.float32), 22050)
    with pytest.raises(SampleRateMismatchError):
        interpolate(a, b, 0.5)


def test_interpolate_alpha_range():
    x = make_one_shot(0, 0, SR)
    with pytest.raises(ValueError):
        interpolate(x, x, 1.2)


def test_interpolate_peak_bound_random():
    rng = np.random.default_rng(2)
    for _ in range(500):
        n1, n2 = int(rng.integers(1, 64)), int(rng.integers(1, 64))
        x1 = AudioBuffer(rng.uniform(-1, 1, n1).astype(np.float32), SR)
        x2 = AudioBuffer(rng.uniform(-1, 1, n2).astype(np.float32), SR)
        alpha = float(rng.random())
        out = interpolate(x1, x2, alpha)
        assert out.peak() <= max(x1.peak(), x2.peak())


# ---------------------------------------------------------------- render


def test_render_empty_segment_exact_zeros():
    kit = make_kit({0: 1})
    result = render(make_segment([]), kit, rng=np.random.default_rng(0))
    assert result.audio.samples.shape[0] == int(round(2.56 * SR))
    assert not result.audio.samples.any()
    assert result.gain == 1.0


def test_render_unit_impulse_identity():
    impulse = np.zeros(100, dtype=np.float32)
    impulse[0] = 1.0
    kit = SamplerKit([KitSample("imp", 4, AudioBuffer(impulse, SR))], SR)
    seg = make_segment([DrumEvent(0.0, 4, 127)])
    result = render(seg, kit, rng=np.random.default_rng(0), augment_prob=0.0)
    out = result.audio.samples
    np.testing.assert_array_equal(out[:100], impulse)
    assert not out[100:].any()
    assert result.gain == 1.0


def test_render_superposition():
    kit = make_kit({0: 2, 3: 2}, amplitude=0.1)
    e1 = DrumEvent(0.25, 0, 90)
    e2 = DrumEvent(0.30, 3, 70)  # overlaps e1's tail
    c1 = EventChoice("c0v0")
    c2 = EventChoice("c3v1", "c3v0", 0.4)
    a = render(make_segment([e1]), kit, choices=[c1]).audio.samples
    b = render(make_segment([e2]), kit, choices=[c2]).audio.samples
    both = render(make_segment([e1, e2]), kit, choices=[c1, c2]).audio.samples
    np.testing.assert_allclose(a.astype(np.float64) + b.astype(np.float64),
                               both.astype(np.float64), atol=1e-6)


def test_render_velocity_monotonic_rms():
    kit = make_kit({0: 1}, amplitude=0.2)
    last = -1.0
    for velocity in (1, 16, 64, 100, 127):
        seg = make_segment([DrumEvent(0.0, 0, velocity)])
        out = render(seg, kit, choices=[EventChoice("c0v0")]).audio.samples
        rms = float(np.sqrt(np.mean(out.astype(np.float64) ** 2)))
        assert rms >= last
        last = rms


def test_render_missing_pool_fails_loudly():
    kit = make_kit({0: 1})
    seg = make_segment([DrumEvent(0.0, 13, 100)])
    with pytest.raises(RenderError, match="Ride Cymbal"):
        render(seg, kit, rng=np.random.default_rng(0))


def test_render_truncates_past_window():
    long = AudioBuffer(np.ones(SR, dtype=np.float32) * 0.5, SR)
    kit = SamplerKit([KitSample("long", 0, long)], SR)
    seg = make_segment([DrumEvent(2.55, 0, 127)])
    result = render(seg, kit, choices=[EventChoice("long")])
    n = result.audio.samples.shape[0]
    assert n == int(round(2.56 * SR))
    assert result.audio.samples[n - 1] != 0.0


def test_render_peak_normalization_records_gain():
    loud = AudioBuffer(np.full(64, 0.9, dtype=np.float32), SR)
    kit = SamplerKit([KitSample("loud", 0, loud)], SR)
    seg = make_segment([DrumEvent(0.0, 0, 127), DrumEvent(0.0, 0, 127)])
    result = render(seg, kit, choices=[EventChoice("loud"), EventChoice("loud")])
    assert result.gain == pytest.approx(1.0 / 1.8)
    assert result.audio.peak() <= 1.0


def test_render_choices_length_mismatch():
    kit = make_kit({0: 1})
    with pytest.raises(RenderError):
        render(make_segment([DrumEvent(0.0, 0, 100)]), kit, choices=[])


def test_render_seeded_reproducible():
    kit = make_kit({0: 3, 3: 3})
    seg = make_segment([DrumEvent(0.1, 0, 80), DrumEvent(0.5, 3, 90)])
    a = render(seg, kit, rng=np.random.default_rng(42))
    b = render(seg, kit, rng=np.random.default_rng(42))
    assert a.choices == b.choices
    np.testing.assert_array_equal(a.audio.samples, b.audio.samples)


# ---------------------------------------------------------------- mel


def test_mel_shape_2_56s():
    audio = AudioBuffer(np.zeros(int(2.56 * SR), dtype=np.float32), SR)
    assert mel_features(audio).shape == (256, 128)


def test_mel_zero_input_hits_floor():
    audio = AudioBuffer(np.zeros(int(2.56 * SR), dtype=np.float32), SR)
    mel = mel_features(audio)
    assert np.all(mel == np.float32(np.log(1e-5)))


def test_mel_sine_band_argmax():
    t = np.arange(int(2.56 * SR)) / SR
    sine = (0.5 * np.sin(2 * np.pi * 440.0 * t)).astype(np.float32)
    mel = mel_features(AudioBuffer(sine, SR))

    # independent triangle-response oracle at 440 Hz
    cfg = MelConfig()
    points = np.linspace(synth.hz_to_mel(cfg.fmin_hz), synth.hz_to_mel(cfg.fmax_hz),
                         cfg.n_mels + 2)
    hz = synth.mel_to_hz(points)
    responses = [
        max(0.0, min((440.0 - hz[m]) / (hz[m + 1] - hz[m]),
                     (hz[m + 2] - 440.0) / (hz[m + 2] - hz[m + 1])))
        for m in range(cfg.n_mels)
    ]
    oracle_band = int(np.argmax(responses))
    assert np.all(mel.argmax(axis=1) == oracle_band)


def test_mel_amplitude_doubling_adds_log2():
    rng = np.random.default_rng(8)
    x = (0.05 * rng.standard_normal(int(2.56 * SR))).astype(np.float32)
    m1 = mel_features(AudioBuffer(x, SR))
    m2 = mel_features(AudioBuffer((x.astype(np.float64) * 2.0).astype(np.float32), SR))
    floor = np.log(1e-5)
    mask = (m1 > floor + 1e-6) & (m2 > floor + 1e-6)
    assert mask.any()
    np.testing.assert_allclose((m2 - m1)[mask], np.log(2.0), atol=1e-5)


def test_mel_empty_audio_error():
    with pytest.raises(AudioDataError):
        mel_features(AudioBuffer(np.zeros(0, dtype=np.float32), SR))


def test_mel_frame_count_follows_hop():
    audio = AudioBuffer(np.zeros(SR, dtype=np.float32), SR)  # 1 s
    assert mel_features(audio).shape == (100, 128)


# ---------------------------------------------------------------- shards


def two_segments():
    return [
        make_segment([DrumEvent(0.1, 0, 100), DrumEvent(1.5, 3, 80)]),
        make_segment([DrumEvent(0.4, 3, 127)]),
    ]


def shard_bytes(shard_dir):
    return {p.name: p.read_bytes() for p in sorted(shard_dir.iterdir())}


def test_shard_rerun_byte_identical(tmp_path):
    kit = make_kit({0: 3, 3: 3})
    options = RenderOptions(seed=9, augment_prob=0.7)
    render_dataset(two_segments(), kit, tmp_path / "a", options)
    render_dataset(two_segments(), kit, tmp_path / "b", options)
    a, b = shard_bytes(tmp_path / "a"), shard_bytes(tmp_path / "b")
    assert a.keys() == b.keys()
    for name in a:
        assert a[name] == b[name], name


def test_shard_contents(tmp_path):
    kit = make_kit({0: 2, 3: 2})
    index = render_dataset(two_segments(), kit, tmp_path / "s",
                           RenderOptions(seed=1, manifest_extra={"config": {"x": 1}}))
    assert len(index["segments"]) == 2
    rec = index["segments"][0]
    assert rec["id"] == "seg-00000"
    assert len(rec["sample_choices"]) == 2
    for name in ("seg-00000.wav", "seg-00000.mel.f32", "seg-00000.onsets.tsv",
                 "tokens.jsonl", "shard.json"):
        assert (tmp_path / "s" / name).exists()
    mel = np.frombuffer((tmp_path / "s" / "seg-00000.mel.f32").read_bytes(), dtype="<f4")
    assert mel.shape[0] == 256 * 128
    loaded = json.loads((tmp_path / "s" / "shard.json").read_text())
    assert loaded["config"] == {"x": 1}


def test_shard_replay_reproduces_features(tmp_path):
    kit = make_kit({0: 3, 3: 3})
    segments = two_segments()
    render_dataset(segments, kit, tmp_path / "s", RenderOptions(seed=5, augment_prob=1.0))
    index = synth.load_shard(tmp_path / "s")
    for record, segment in zip(index["segments"], segments):
        replayed = synth.replay_segment(tmp_path / "s", record, segment, kit)
        mel = mel_features(replayed.audio)
        stored = np.frombuffer(
            (tmp_path / "s" / record["files"]["mel"]).read_bytes(), dtype="<f4"
        ).reshape(mel.shape)
        np.testing.assert_allclose(mel, stored, atol=1e-6)
        assert replayed.gain == record["gain"]


def test_shard_workers_schedule_independent(tmp_path):
    kit = make_kit({0: 3, 3: 3})
    segments = two_segments() * 4
    render_dataset(segments, kit, tmp_path / "w1", RenderOptions(seed=3, workers=1))
    render_dataset(segments, kit, tmp_path / "w4", RenderOptions(seed=3, workers=4))
    a, b = shard_bytes(tmp_path / "w1"), shard_bytes(tmp_path / "w4")
    assert a.keys() == b.keys()
    for name in a:
        assert a[name] == b[name], name


def test_empty_shard_valid(tmp_path):
    kit = make_kit({0: 1})
    index = render_dataset([], kit, tmp_path / "s", RenderOptions())
    assert index["segments"] == []
    assert (tmp_path / "s" / "shard.json").exists()
    assert (tmp_path / "s" / "tokens.jsonl").exists()


def test_shard_error_cleans_partial_output(tmp_path):
    kit = make_kit({0: 1})  # class 13 missing
    segments = [make_segment([DrumEvent(0.1, 0, 100)]),
                make_segment([DrumEvent(0.2, 13, 100)])]
    out = tmp_path / "s"
    with pytest.raises(RenderError):
        render_dataset(segments, kit, out, RenderOptions())
    leftovers = list(out.iterdir()) if out.exists() else []
    assert leftovers == []


def test_resample_preserves_sine():
    t = np.arange(22050) / 22050
    sine = AudioBuffer(np.sin(2 * np.pi * 500 * t).astype(np.float32), 22050)
    out = synth.resample(sine, SR)
    assert out.sample_rate == SR
    t2 = np.arange(out.samples.shape[0]) / SR
    ideal = np.sin(2 * np.pi * 500 * t2)
    core = slice(200, -200)
    assert np.max(np.abs(out.samples[core] - ideal[core])) < 1e-3
