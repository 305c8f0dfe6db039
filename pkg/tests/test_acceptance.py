"""Acceptance suite: one test per pipeline-level criterion.

Run with `pytest tests/test_acceptance.py -v -s` to see one pass line per
criterion; every tolerance is pinned here.
"""

import json
import math
import shutil
import time

import numpy as np
import pytest

from drumpipe import cli, embed_store, tokenizer, vocab
from drumpipe import eval as evalmod
from drumpipe.curator import classify_all, compute_centroids
from drumpipe.midi import DrumEvent, EventSequence, Segment, cut_segment, parse_midi
from drumpipe.synth import (
    AudioBuffer, EventChoice, KitSample, RenderOptions, SamplerKit, interpolate,
    mel_features, render, render_dataset,
)

from conftest import make_one_shot, write_store_files
from smf_util import tick_seconds_oracle, write_smf
from test_curator import brute_force_classify
from test_eval import brute_force_match_count


def _passed(name: str) -> None:
    print(f"[PASS] {name}")


def make_segment(events, length=2.56):
    return Segment(source_file="", offset_s=0.0, length_s=length,
                   events=EventSequence.from_events(events, length))


# ---------------------------------------------------------------------------
# Criterion: curator oracle equivalence, 50 random instances, < 10 s total
# ---------------------------------------------------------------------------

def test_curator_oracle_equivalence(tmp_path):
    started = time.perf_counter()
    rng = np.random.default_rng(2024)
    for instance in range(50):
        n_classes = int(rng.integers(2, 27))
        dim = int(rng.integers(4, 65))
        n_gold = int(rng.integers(n_classes, n_classes + 40))
        n_unlabeled = int(rng.integers(10, max(11, 500 - n_gold)))

        gold_classes = [int(rng.integers(0, n_classes)) for _ in range(n_gold)]
        for cid in range(n_classes):
            if cid not in gold_classes:
                gold_classes.append(cid)
        total = len(gold_classes) + n_unlabeled
        assert total <= 500 + n_classes
        vectors = rng.standard_normal((total, dim)).astype(np.float32)
        labels = gold_classes + [None] * n_unlabeled
        manifest, blob = write_store_files(tmp_path / f"i{instance}", vectors, labels)
        store = embed_store.load_store(manifest, blob)

        results = classify_all(store, compute_centroids(store))

        gold_vectors = {}
        for e in store.gold_entries:
            gold_vectors.setdefault(e.gold_label, []).append(
                store.get_embedding(e.sample_id).astype(float).tolist())
        unlabeled = [store.get_embedding(e.sample_id).astype(float).tolist()
                     for e in store.unlabeled_entries]
        expected = brute_force_classify(gold_vectors, unlabeled)

        for got, (exp_class, exp_conf, exp_scores) in zip(results, expected):
            assert got.assigned_class == exp_class
            assert abs(got.confidence - exp_conf) <= 1e-5
            for cid, s in exp_scores.items():
                assert abs(got.scores[cid] - s) <= 1e-5
    elapsed = time.perf_counter() - started
    assert elapsed < 10.0, f"took {elapsed:.2f}s"
    _passed(f"curator oracle equivalence: 50 instances, argmax exact, "
            f"scores within 1e-5, {elapsed:.2f}s < 10s")


# ---------------------------------------------------------------------------
# Criterion: Algorithm-level invariants (scale, permutation, confidence bound)
# ---------------------------------------------------------------------------

def test_algorithm_invariants(tmp_path):
    rng = np.random.default_rng(55)

    # scale invariance of assignment for lambda in {1e-3, 1, 1e3}
    dim = 24
    gold_labels = [i % 8 for i in range(40)]
    base = rng.standard_normal((40 + 120, dim)).astype(np.float32)
    labels = gold_labels + [None] * 120
    manifest, blob = write_store_files(tmp_path / "scale_base", base, labels)
    store = embed_store.load_store(manifest, blob)
    centroids = compute_centroids(store)
    baseline = classify_all(store, centroids)
    for lam in (1e-3, 1.0, 1e3):
        scaled = base.astype(np.float64).copy()
        scaled[40:] *= lam
        m2, b2 = write_store_files(tmp_path / f"scale_{lam}",
                                   scaled.astype(np.float32), labels)
        scaled_results = classify_all(embed_store.load_store(m2, b2), centroids)
        for a, b in zip(baseline, scaled_results):
            assert a.assigned_class == b.assigned_class

    # centroid permutation invariance at 1e-6 relative tolerance
    vectors = rng.standard_normal((60, dim)).astype(np.float32)
    perm_labels = [i % 4 for i in range(60)]
    m3, b3 = write_store_files(tmp_path / "perm_fwd", vectors, perm_labels)
    fwd = compute_centroids(embed_store.load_store(m3, b3))
    order = rng.permutation(60)
    m4, b4 = write_store_files(tmp_path / "perm_shuf", vectors[order],
                               [perm_labels[i] for i in order])
    shuf = compute_centroids(embed_store.load_store(m4, b4))
    np.testing.assert_allclose(fwd.matrix, shuf.matrix, rtol=1e-6)

    # confidence bound on 10,000 random vectors
    big = rng.standard_normal((10_000, dim)).astype(np.float32)
    m5, b5 = write_store_files(tmp_path / "bound", big, [None] * 10_000)
    results = classify_all(embed_store.load_store(m5, b5), centroids)
    assert len(results) == 10_000
    for r in results:
        assert -1.0 <= r.confidence <= 1.0
    _passed("algorithm invariants: scale-invariant assignment (1e-3/1/1e3), "
            "centroid permutation invariance (1e-6 rel), "
            "confidence in [-1,1] on 10,000 vectors")


# ---------------------------------------------------------------------------
# Criterion: vocabulary table and reduction totality
# ---------------------------------------------------------------------------

def test_vocabulary_table_and_reduction():
    from test_vocab import KEY_TABLE
    assert len(KEY_TABLE) == 47
    for key, instrument_id in KEY_TABLE:
        assert vocab.map_key(key) == instrument_id
    rmap = vocab.default_reduction_map()
    assert set(rmap.groups) == set(range(26))
    with pytest.raises(vocab.ReductionMapError):
        vocab.ReductionMap(groups={i: "G" for i in range(25)})  # id 25 missing
    _passed("vocabulary: all 47 keys map per the table; reduction totality enforced")


# ---------------------------------------------------------------------------
# Criterion: tokenizer roundtrip on 1,000 random segments, all four configs
# ---------------------------------------------------------------------------

def test_tokenizer_roundtrip_1000_segments():
    rng = np.random.default_rng(314)
    segments = []
    for _ in range(1000):
        n = int(rng.integers(0, 24))
        events = [DrumEvent(float(rng.uniform(0.0, 2.555)), int(rng.integers(0, 26)),
                            int(rng.integers(1, 128)))
                  for _ in range(n)]
        segments.append(make_segment(events))

    assert tokenizer.TokenVocabulary().size == 401
    assert tokenizer.TokenVocabulary(velocity_enabled=False).size == 274

    for time_tokens in (245, 256):
        for velocity_enabled in (True, False):
            v = tokenizer.TokenVocabulary(time_token_count=time_tokens,
                                          velocity_enabled=velocity_enabled)
            total_clamped = 0
            for seg in segments:
                tokens = tokenizer.encode(seg, v)
                decoded = tokenizer.decode(tokens)
                events = seg.events.events
                assert len(decoded.events) == len(events)
                got = sorted((e.instrument, e.velocity if velocity_enabled else None)
                             for e in decoded.events)
                want = sorted((e.instrument, e.velocity if velocity_enabled else None)
                              for e in events)
                assert got == want
                expected_clamps = sum(
                    math.floor(e.time_s / 0.010 + 0.5) >= time_tokens for e in events)
                assert tokens.clamped_events == expected_clamps
                total_clamped += tokens.clamped_events
                ordered = sorted(events, key=lambda e: (
                    math.floor(e.time_s / 0.010 + 0.5), e.instrument))
                for orig, dec in zip(ordered, decoded.events):
                    if math.floor(orig.time_s / 0.010 + 0.5) < time_tokens:
                        assert abs(orig.time_s - dec.time_s) <= 0.005 + 1e-12
            if time_tokens == 256:
                assert total_clamped == 0  # lossless grid over [0, 2.555)
            else:
                assert total_clamped > 0  # clamping occurred and was counted
    _passed("tokenizer roundtrip: 1,000 segments x 4 configs, max error <= 5 ms, "
            "245 clamps counted, 256 lossless, sizes 401/274")


# ---------------------------------------------------------------------------
# Criterion: MIDI timing vs integration oracle; window partition property
# ---------------------------------------------------------------------------

def test_midi_timing_and_partition(tmp_path):
    rng = np.random.default_rng(99)
    for trial in range(15):
        ppq = int(rng.choice([96, 240, 480, 960]))
        n_changes = int(rng.integers(1, 6))
        ticks = np.sort(rng.choice(np.arange(1, 30_000), n_changes, replace=False))
        changes = [(int(t), int(rng.integers(150_000, 2_000_000))) for t in ticks]
        note_ticks = np.sort(rng.choice(np.arange(1, 60_000), 30, replace=False))
        events = [("tempo", t, u) for t, u in changes]
        events += [("note", int(t), 38, 90) for t in note_ticks]
        path = tmp_path / f"t{trial}.mid"
        write_smf(path, ppq, [events])
        seq = parse_midi(path)
        assert len(seq) == 30
        for ev, tick in zip(seq.events, note_ticks):
            assert abs(ev.time_s - tick_seconds_oracle(int(tick), ppq, changes)) < 1e-9

    window = 2.56
    for _ in range(100):
        duration = float(rng.uniform(3.0, 40.0))
        n = int(rng.integers(0, 80))
        events = [DrumEvent(float(t), int(rng.integers(0, 26)), int(rng.integers(1, 128)))
                  for t in rng.uniform(0, duration, n)]
        seq = EventSequence.from_events(events, duration)
        k = int(duration / window)
        restored = []
        for i in range(k):
            seg = cut_segment(seq, i * window)
            restored += [(e.time_s + seg.offset_s, e.instrument, e.velocity)
                         for e in seg.events.events]
        covered = [(e.time_s, e.instrument, e.velocity) for e in seq.events
                   if e.time_s - k * window < 0.0]
        assert len(restored) == len(covered)
        for got, want in zip(sorted(restored), sorted(covered)):
            assert got[1:] == want[1:]
            assert abs(got[0] - want[0]) < 1e-12
    _passed("MIDI timing: 1-5 tempo changes within 1e-9 s of the integration "
            "oracle; window partition holds on 100 random corpora")


# ---------------------------------------------------------------------------
# Criterion: synthesis properties and shard determinism
# ---------------------------------------------------------------------------

def test_synthesis_properties(tmp_path):
    rng = np.random.default_rng(606)
    sr = 16000

    # interpolation endpoints exact + peak bound on 10,000 random pairs
    for _ in range(10_000):
        n1, n2 = int(rng.integers(1, 48)), int(rng.integers(1, 48))
        x1 = AudioBuffer(rng.uniform(-1, 1, n1).astype(np.float32), sr)
        x2 = AudioBuffer(rng.uniform(-1, 1, n2).astype(np.float32), sr)
        alpha = float(rng.random())
        assert interpolate(x1, x2, alpha).peak() <= max(x1.peak(), x2.peak())
    x1 = AudioBuffer(rng.uniform(-1, 1, 64).astype(np.float32), sr)
    x2 = AudioBuffer(rng.uniform(-1, 1, 80).astype(np.float32), sr)
    np.testing.assert_array_equal(interpolate(x1, x2, 1.0).samples[:64], x1.samples)
    np.testing.assert_array_equal(interpolate(x1, x2, 0.0).samples, x2.samples)

    # kit for the rendering checks
    samples = [KitSample(f"c{c}v{v}", c,
                         AudioBuffer(make_one_shot(c, v, sr).samples * np.float32(0.2), sr))
               for c in (0, 3, 7) for v in range(2)]
    kit = SamplerKit(samples, sr)

    # empty segment renders exact zeros
    empty = render(make_segment([]), kit, rng=np.random.default_rng(0))
    assert not empty.audio.samples.any()
    assert mel_features(empty.audio).shape == (256, 128)

    # superposition within 1e-6 under fixed choices
    for _ in range(25):
        n = int(rng.integers(2, 10))
        events = sorted(
            (DrumEvent(float(rng.uniform(0, 2.5)), int(rng.choice([0, 3, 7])),
                       int(rng.integers(1, 128))) for _ in range(n)),
            key=lambda e: (e.time_s, e.instrument))
        choices = []
        for ev in events:
            pool = kit.pool(ev.instrument)
            pick = pool[int(rng.integers(0, len(pool)))]
            if rng.random() < 0.5:
                partner = pool[int(rng.integers(0, len(pool)))]
                choices.append(EventChoice(pick.sample_id, partner.sample_id,
                                           float(rng.random())))
            else:
                choices.append(EventChoice(pick.sample_id))
        split = int(rng.integers(1, n))
        a = render(make_segment(events[:split]), kit, choices=choices[:split])
        b = render(make_segment(events[split:]), kit, choices=choices[split:])
        both = render(make_segment(events), kit, choices=choices)
        assert a.gain == b.gain == both.gain == 1.0
        np.testing.assert_allclose(
            a.audio.samples.astype(np.float64) + b.audio.samples.astype(np.float64),
            both.audio.samples.astype(np.float64), atol=1e-6)
        assert mel_features(both.audio).shape == (256, 128)

    # fixed-seed shard reruns byte-identical
    segments = [make_segment([DrumEvent(0.2, 0, 100), DrumEvent(1.1, 3, 90)]),
                make_segment([DrumEvent(0.9, 7, 70)])]
    out = tmp_path / "shard"
    snapshots = []
    for _ in range(2):
        render_dataset(segments, kit, out, RenderOptions(seed=77, augment_prob=0.6))
        snapshots.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
        shutil.rmtree(out)
    assert snapshots[0].keys() == snapshots[1].keys()
    for name in snapshots[0]:
        assert snapshots[0][name] == snapshots[1][name], name
    _passed("synthesis: superposition 1e-6, interpolation endpoints exact, "
            "peak bound on 10,000 pairs, empty renders zero, mel 256x128, "
            "fixed-seed shard byte-identical")


# ---------------------------------------------------------------------------
# Criterion: eval matcher optimality, fixtures, micro-average, swap symmetry
# ---------------------------------------------------------------------------

def test_eval_criteria():
    rng = np.random.default_rng(41)

    # matcher equals exhaustive maximum matching on 1,000 random instances
    for _ in range(1000):
        n_ref, n_est = int(rng.integers(0, 13)), int(rng.integers(0, 13))
        ref = sorted(rng.uniform(0, 3, n_ref).tolist())
        est = sorted(rng.uniform(0, 3, n_est).tolist())
        tol = float(rng.uniform(0.01, 0.4))
        tp, fp, fn = evalmod.match_onsets(ref, est, tol)
        assert tp == brute_force_match_count(ref, est, tol)
        assert tp + fn == len(ref) and tp + fp == len(est)

    # perfect and shifted fixtures; onsets spaced > 3*tol so a +2*tol shift
    # cannot accidentally match a neighboring same-class onset
    rmap = vocab.default_reduction_map()
    fixtures = []
    for _ in range(10):
        n = int(rng.integers(3, 20))
        times = np.cumsum(rng.uniform(0.25, 0.6, n))
        fixtures.append(EventSequence.from_events(
            [DrumEvent(float(t), int(rng.integers(0, 26)), 100) for t in times],
            float(times[-1] + 1.0)))
    for seq in fixtures:
        assert evalmod.score(seq, seq, rmap, 0.05).sum.f1 == 1.0
        shifted = EventSequence.from_events(
            [DrumEvent(e.time_s + 0.1, e.instrument, e.velocity) for e in seq.events],
            seq.duration_s + 0.2)
        assert evalmod.score(seq, shifted, rmap, 0.05).sum.f1 == 0.0

    # micro-average hand arithmetic to 1e-12
    pooled = evalmod.ClassStats(2, 1, 1) + evalmod.ClassStats(3, 0, 1)
    expected = 2 * (5 / 6) * (5 / 7) / ((5 / 6) + (5 / 7))
    assert abs(pooled.f1 - expected) <= 1e-12
    assert abs(pooled.f1 - 10 / 13) <= 1e-12

    # swap symmetry on 100 random pairs
    for _ in range(100):
        n, m = int(rng.integers(0, 15)), int(rng.integers(0, 15))
        ref = EventSequence.from_events(
            [DrumEvent(float(t), int(i), 100) for t, i in
             sorted(zip(rng.uniform(0, 5, n), rng.integers(0, 26, n)))], 6.0)
        est = EventSequence.from_events(
            [DrumEvent(float(t), int(i), 100) for t, i in
             sorted(zip(rng.uniform(0, 5, m), rng.integers(0, 26, m)))], 6.0)
        fwd = evalmod.score(ref, est, rmap, 0.07)
        rev = evalmod.score(est, ref, rmap, 0.07)
        assert fwd.sum.precision == rev.sum.recall
        assert fwd.sum.recall == rev.sum.precision
        assert fwd.sum.f1 == rev.sum.f1
    _passed("eval: matcher optimal on 1,000 instances, perfect F1=1.0 and "
            "shifted F1=0.0 fixtures, micro-average to 1e-12, swap symmetry")


# ---------------------------------------------------------------------------
# Criterion: pipeline smoke, curate -> render -> tokenize -> evaluate < 60 s
# ---------------------------------------------------------------------------

def test_pipeline_smoke(fixture_corpus, tmp_path):
    started = time.perf_counter()
    cur = tmp_path / "cur"
    assert cli.main(["curate", "--manifest", str(fixture_corpus["manifest"]),
                     "--blob", str(fixture_corpus["blob"]), "--out", str(cur)]) == 0
    shard = tmp_path / "shard"
    assert cli.main(["render", "--library", str(cur / "library.jsonl"),
                     "--midi-dir", str(fixture_corpus["midi_dir"]),
                     "--out", str(shard), "--segments-per-file", "2",
                     "--seed", "5"]) == 0
    tok = tmp_path / "tok"
    assert cli.main(["tokenize", "--midi-dir", str(fixture_corpus["midi_dir"]),
                     "--out", str(tok)]) == 0
    ev = tmp_path / "eval"
    assert cli.main(["evaluate", "--ref", str(shard), "--est", str(shard),
                     "--out", str(ev), "--csv"]) == 0
    elapsed = time.perf_counter() - started

    summary = json.loads((ev / "summary.json").read_text())
    assert summary["sum"]["f1"] == 1.0
    assert elapsed < 60.0, f"pipeline took {elapsed:.1f}s"
    assert (shard / "shard.json").exists()
    assert (tok / "tokens.jsonl").exists()
    _passed(f"pipeline smoke: curate->render->tokenize->evaluate in "
            f"{elapsed:.1f}s < 60s, self-evaluation SUM F1 = 1.0")
