"""Pipeline orchestration: curate, render, tokenize, evaluate, stats.

One JSON config drives everything; flags override file values; every output
artifact embeds the resolved config, seed, and pipeline version. Exit codes:
0 ok, 1 user error, 2 internal error.
"""

from __future__ import annotations

import argparse
import json
import sys
import traceback
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import DrumpipeError, PIPELINE_VERSION
from . import curator, embed_store, midi, synth, tokenizer, vocab
from . import eval as evalmod
from .config import MODE_CENTROID, MODE_NAME, PipelineConfig

EXIT_OK = 0
EXIT_USER = 1
EXIT_INTERNAL = 2

MIDI_SUFFIXES = {".mid", ".midi"}
ANNOTATION_SUFFIXES = {".tsv", ".txt"}


class UserError(DrumpipeError):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad flags; the pipeline reserves 2 for
    # internal faults, so user mistakes are rerouted to exit code 1.
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UserError(message)


def _provenance(cfg: PipelineConfig) -> dict:
    return {"pipeline_version": PIPELINE_VERSION, "seed": cfg.seed,
            "config": cfg.to_dict()}


def _resolve_config(args: argparse.Namespace) -> PipelineConfig:
    cfg = PipelineConfig.load(args.config) if args.config else PipelineConfig()
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "workers", None) is not None:
        cfg.workers = args.workers
    for attr, target in (
        ("manifest", ("paths", "embeddings_manifest")),
        ("blob", ("paths", "embeddings_blob")),
        ("library", ("paths", "library")),
        ("midi_dir", ("paths", "midi_dir")),
        ("out", ("paths", "out_dir")),
        ("mode", ("curation", "mode")),
        ("threshold", ("curation", "threshold")),
        ("augment_prob", ("synth", "augment_prob")),
        ("sample_rate", ("synth", "sample_rate")),
        ("time_tokens", ("vocabulary", "time_token_count")),
        ("tolerance", ("eval", "tolerance_s")),
        ("mapping", ("eval", "mapping_file")),
    ):
        value = getattr(args, attr, None)
        if value is not None:
            setattr(getattr(cfg, target[0]), target[1], value)
    if getattr(args, "no_velocity", False):
        cfg.vocabulary.velocity_enabled = False
    if getattr(args, "no_wav", False):
        cfg.synth.write_wav = False
    return cfg


def _reduction_from(source: str) -> vocab.ReductionMap:
    if source in ("", "default"):
        return vocab.default_reduction_map()
    return vocab.load_reduction_map(source)


def _midi_files(midi_dir: str) -> list[Path]:
    root = Path(midi_dir)
    if not root.is_dir():
        raise UserError(f"MIDI directory {midi_dir!r} does not exist")
    return sorted(p for p in root.rglob("*") if p.suffix.lower() in MIDI_SUFFIXES)


def _file_seed(base_seed: int, index: int) -> int:
    return int(np.random.SeedSequence(entropy=base_seed, spawn_key=(index,)).generate_state(1)[0])


# ---------------------------------------------------------------- curate


def cmd_curate(cfg: PipelineConfig, args: argparse.Namespace) -> int:
    paths = cfg.paths
    if not paths.embeddings_manifest or not paths.embeddings_blob:
        raise UserError("curate needs --manifest and --blob (or config paths)")
    store = embed_store.load_store(paths.embeddings_manifest, paths.embeddings_blob)

    mode = cfg.curation.mode
    if mode == MODE_CENTROID:
        centroids = curator.compute_centroids(store)
        results = curator.classify_all(store, centroids)
        provenance = curator.PROVENANCE_CENTROID
    elif mode == MODE_NAME:
        results = [curator.classify_by_name(e.audio_path, e.sample_id)
                   for e in store.unlabeled_entries]
        provenance = curator.PROVENANCE_NAME
    else:
        raise UserError(f"unknown curation mode {mode!r} (expected centroid or name)")

    accepted, rejected = curator.filter_by_confidence(results, cfg.curation.threshold)
    library = curator.build_library(store, accepted, provenance)

    out_dir = Path(paths.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    curator.export_library(library, out_dir / "library.jsonl")
    vocab.export_vocab_json(out_dir / "vocab.json")
    report = curator.classification_report(results, accepted, rejected,
                                           gold_count=len(store.gold_entries))
    report.update(_provenance(cfg))
    report["mode"] = mode
    (out_dir / "classification_report.json").write_text(json.dumps(report, indent=2) + "\n")
    print(f"curate: {len(library)} samples "
          f"({len(store.gold_entries)} gold + {len(accepted)} {provenance}, "
          f"{len(rejected)} rejected) -> {out_dir / 'library.jsonl'}")
    return EXIT_OK


# ---------------------------------------------------------------- render


def _relabel_segment(segment: midi.Segment, mapping: dict[int, int | None]) -> midi.Segment:
    events = []
    for ev in segment.events.events:
        dense = mapping[ev.instrument]
        if dense is not None:
            events.append(midi.DrumEvent(ev.time_s, dense, ev.velocity))
    return midi.Segment(
        source_file=segment.source_file, offset_s=segment.offset_s,
        length_s=segment.length_s,
        events=midi.EventSequence.from_events(events, segment.length_s))


def _collect_segments(cfg: PipelineConfig, per_file: int, drop_empty: bool) -> list[midi.Segment]:
    files = _midi_files(cfg.paths.midi_dir)
    if not files:
        raise UserError(f"no .mid/.midi files under {cfg.paths.midi_dir!r}")
    segments: list[midi.Segment] = []
    for index, path in enumerate(files):
        seq = midi.parse_midi(path)
        for seg in midi.sample_segments(seq, per_file, _file_seed(cfg.seed, index),
                                        source_file=str(path)):
            if drop_empty and len(seg.events) == 0:
                continue
            segments.append(seg)
    return segments


def cmd_render(cfg: PipelineConfig, args: argparse.Namespace) -> int:
    if not cfg.paths.library:
        raise UserError("render needs --library (or config paths.library)")
    segments = _collect_segments(cfg, args.segments_per_file, args.drop_empty)

    entries = curator.load_library(cfg.paths.library)
    instrument_count = vocab.NUM_CLASSES
    reduction_info = None
    if args.reduce_map is not None:
        rmap = _reduction_from(args.reduce_map)
        mapping, labels = vocab.dense_reduction(rmap)
        entries = [replace(e, class_id=mapping[e.class_id]) for e in entries
                   if mapping[e.class_id] is not None]
        segments = [_relabel_segment(s, mapping) for s in segments]
        instrument_count = len(labels)
        reduction_info = {"mapping_id": rmap.map_id, "labels": list(labels)}

    kit = synth.SamplerKit.from_samples(entries, cfg.synth.sample_rate,
                                        base_dir=Path(cfg.paths.library).parent)
    token_vocab = tokenizer.TokenVocabulary(
        time_token_count=cfg.vocabulary.time_token_count,
        velocity_enabled=cfg.vocabulary.velocity_enabled,
        instrument_count=instrument_count)
    extra = _provenance(cfg)
    if reduction_info:
        extra["reduction"] = reduction_info
    options = synth.RenderOptions(
        seed=cfg.seed, augment_prob=cfg.synth.augment_prob,
        write_wav=cfg.synth.write_wav, mel=cfg.synth.mel,
        token_vocab=token_vocab, workers=cfg.workers, manifest_extra=extra)

    out_dir = Path(cfg.paths.out_dir)
    index = synth.render_dataset(segments, kit, out_dir, options)
    tokenizer.save_vocabulary(token_vocab, out_dir / "tokenizer.json")
    print(f"render: {len(index['segments'])} segments -> {out_dir}")
    return EXIT_OK


# ---------------------------------------------------------------- tokenize


def cmd_tokenize(cfg: PipelineConfig, args: argparse.Namespace) -> int:
    files = _midi_files(cfg.paths.midi_dir)
    if not files:
        raise UserError(f"no .mid/.midi files under {cfg.paths.midi_dir!r}")
    token_vocab = tokenizer.TokenVocabulary(
        time_token_count=cfg.vocabulary.time_token_count,
        velocity_enabled=cfg.vocabulary.velocity_enabled)
    rows = []
    clamped = 0
    for path in files:
        seq = midi.parse_midi(path)
        window_count = max(1, int(seq.duration_s / midi.SEGMENT_SECONDS))
        for w in range(window_count):
            seg = midi.cut_segment(seq, w * midi.SEGMENT_SECONDS, source_file=str(path))
            if args.drop_empty and len(seg.events) == 0:
                continue
            tokens = tokenizer.encode(seg, token_vocab)
            clamped += tokens.clamped_events
            rows.append((f"{path.stem}-w{w:04d}", tokens))

    out_dir = Path(cfg.paths.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    tokenizer.write_tokens_jsonl(out_dir / "tokens.jsonl", rows)
    tokenizer.save_vocabulary(token_vocab, out_dir / "tokenizer.json")
    run = _provenance(cfg)
    run.update({"files": len(files), "windows": len(rows), "clamped_events": clamped})
    (out_dir / "run.json").write_text(json.dumps(run, indent=2) + "\n")
    print(f"tokenize: {len(rows)} windows from {len(files)} files -> {out_dir}")
    return EXIT_OK


# ---------------------------------------------------------------- evaluate


def _event_files(directory: str | Path) -> dict[str, Path]:
    root = Path(directory)
    if not root.is_dir():
        raise UserError(f"directory {directory!r} does not exist")
    out: dict[str, Path] = {}
    for p in sorted(root.iterdir()):
        if p.suffix.lower() in MIDI_SUFFIXES | ANNOTATION_SUFFIXES:
            stem = p.name[: -len("".join(p.suffixes))] if p.suffixes else p.stem
            out[stem] = p
    return out


def _load_events(path: Path, label_map: dict[str, int] | None) -> midi.EventSequence:
    if path.suffix.lower() in MIDI_SUFFIXES:
        return midi.parse_midi(path)
    return evalmod.load_annotations(path, label_map)


def cmd_evaluate(cfg: PipelineConfig, args: argparse.Namespace) -> int:
    rmap = _reduction_from(cfg.eval.mapping_file)
    label_map = None
    if args.label_map:
        label_map = {str(k): int(v) for k, v in json.loads(Path(args.label_map).read_text()).items()}

    ref_files = _event_files(args.ref)
    est_files = _event_files(args.est)
    if not ref_files:
        raise UserError(f"no reference files in {args.ref!r}")
    missing = sorted(set(ref_files) - set(est_files))
    if missing:
        raise UserError(f"estimates missing for: {', '.join(missing)}")

    out_dir = Path(cfg.paths.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    reports = []
    for stem, ref_path in ref_files.items():
        ref_seq = _load_events(ref_path, label_map)
        est_seq = _load_events(est_files[stem], label_map)
        report = evalmod.score(ref_seq, est_seq, rmap, cfg.eval.tolerance_s)
        evalmod.write_report_json(report, out_dir / f"report-{stem}.json",
                                  extra={"track": stem})
        reports.append(report)

    summary = evalmod.aggregate_reports(reports)
    evalmod.write_report_json(summary, out_dir / "summary.json",
                              extra={**_provenance(cfg), "tracks": len(reports)})
    if args.csv:
        evalmod.write_columns_csv(summary, out_dir / "summary.csv")
    print(f"evaluate: {len(reports)} tracks, SUM F1 = {summary.sum.f1:.4f} -> {out_dir}")
    return EXIT_OK


# ---------------------------------------------------------------- stats


def cmd_stats(cfg: PipelineConfig, args: argparse.Namespace) -> int:
    payload: dict = dict(_provenance(cfg))
    if args.midi_dir:
        scans = [midi.scan_midi(p) for p in _midi_files(args.midi_dir)]
        payload["midi"] = {
            "files": len(scans),
            "total_events": sum(s.event_count for s in scans),
            "total_dropped_keys": sum(s.dropped_count for s in scans),
            "per_file": [s.to_dict() for s in scans],
        }
    if args.library:
        entries = curator.load_library(args.library)
        per_class = {str(cid): 0 for cid in range(vocab.NUM_CLASSES)}
        by_provenance: dict[str, int] = {}
        for e in entries:
            per_class[str(e.class_id)] = per_class.get(str(e.class_id), 0) + 1
            by_provenance[e.provenance] = by_provenance.get(e.provenance, 0) + 1
        payload["library"] = {
            "total": len(entries),
            "per_class": per_class,
            "by_provenance": by_provenance,
        }
    if not args.midi_dir and not args.library:
        raise UserError("stats needs --midi-dir and/or --library")
    text = json.dumps(payload, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n")
        print(f"stats -> {args.out}")
    else:
        print(text)
    return EXIT_OK


# ---------------------------------------------------------------- wiring


def build_parser() -> _Parser:
    parser = _Parser(prog="drumpipe",
                     description="Drum transcription data pipeline")
    parser.add_argument("--version", action="version",
                        version=f"drumpipe {PIPELINE_VERSION}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", type=Path, help="pipeline config JSON")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--workers", type=int)
        sp.add_argument("--out", help="output directory")

    p = sub.add_parser("curate", help="build a labeled one-shot library")
    common(p)
    p.add_argument("--manifest", help="embeddings manifest JSON")
    p.add_argument("--blob", help="embeddings float32 blob")
    p.add_argument("--mode", choices=[MODE_CENTROID, MODE_NAME])
    p.add_argument("--threshold", type=float, help="confidence acceptance threshold")
    p.set_defaults(func=cmd_curate)

    p = sub.add_parser("render", help="render audio/feature shards from MIDI")
    common(p)
    p.add_argument("--library", help="library.jsonl path")
    p.add_argument("--midi-dir", dest="midi_dir")
    p.add_argument("--segments-per-file", type=int, default=4)
    p.add_argument("--augment-prob", dest="augment_prob", type=float)
    p.add_argument("--sample-rate", dest="sample_rate", type=int)
    p.add_argument("--time-tokens", dest="time_tokens", type=int)
    p.add_argument("--no-velocity", dest="no_velocity", action="store_true")
    p.add_argument("--no-wav", dest="no_wav", action="store_true")
    p.add_argument("--drop-empty", action="store_true",
                   help="skip segments with no drum events")
    p.add_argument("--reduce-map", dest="reduce_map",
                   help="reduction JSON ('default' for the bundled 8-group map); "
                        "relabels both library and events onto the reduced vocabulary")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("tokenize", help="tokenize MIDI into training token files")
    common(p)
    p.add_argument("--midi-dir", dest="midi_dir")
    p.add_argument("--time-tokens", dest="time_tokens", type=int)
    p.add_argument("--no-velocity", dest="no_velocity", action="store_true")
    p.add_argument("--drop-empty", action="store_true")
    p.set_defaults(func=cmd_tokenize)

    p = sub.add_parser("evaluate", help="score estimates against references")
    common(p)
    p.add_argument("--ref", required=True, help="reference dir (.mid/.midi/.tsv/.txt)")
    p.add_argument("--est", required=True, help="estimate dir")
    p.add_argument("--mapping", help="reduction map JSON (default: bundled 8-group map)")
    p.add_argument("--tolerance", type=float, help="onset tolerance in seconds")
    p.add_argument("--label-map", dest="label_map",
                   help="JSON mapping annotation labels to instrument ids")
    p.add_argument("--csv", action="store_true", help="also write summary.csv")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("stats", help="corpus / library statistics")
    common(p)
    p.add_argument("--midi-dir", dest="midi_dir")
    p.add_argument("--library")
    p.set_defaults(func=cmd_stats)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = _resolve_config(args)
        return args.func(cfg, args)
    except SystemExit as exc:  # --help / --version
        return EXIT_OK if exc.code in (0, None) else EXIT_USER
    except UserError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER
    except (DrumpipeError, OSError, json.JSONDecodeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER
    except Exception:
        traceback.print_exc()
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
