"""Single JSON pipeline configuration shared by all CLI subcommands.

Every field has a default; CLI flags override file values; a copy of the
resolved config travels inside each output artifact for provenance.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .eval import DEFAULT_TOLERANCE_S
from .synth import DEFAULT_SAMPLE_RATE, MelConfig
from .tokenizer import DEFAULT_TIME_TOKENS

MODE_CENTROID = "centroid"
MODE_NAME = "name"


@dataclass
class PathsConfig:
    embeddings_manifest: str = ""
    embeddings_blob: str = ""
    library: str = ""
    midi_dir: str = ""
    samples_dir: str = ""
    out_dir: str = "out"


@dataclass
class VocabularyConfig:
    time_token_count: int = DEFAULT_TIME_TOKENS
    velocity_enabled: bool = True


@dataclass
class SynthConfig:
    sample_rate: int = DEFAULT_SAMPLE_RATE
    augment_prob: float = 0.5
    write_wav: bool = True
    mel: MelConfig = field(default_factory=MelConfig)


@dataclass
class CurationConfig:
    threshold: float = -1.0
    mode: str = MODE_CENTROID


@dataclass
class EvalConfig:
    tolerance_s: float = DEFAULT_TOLERANCE_S
    mapping_file: str = ""  # empty selects the bundled default reduction


@dataclass
class PipelineConfig:
    paths: PathsConfig = field(default_factory=PathsConfig)
    vocabulary: VocabularyConfig = field(default_factory=VocabularyConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)
    curation: CurationConfig = field(default_factory=CurationConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    seed: int = 0
    workers: int = 1

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, raw: dict) -> "PipelineConfig":
        cfg = cls()
        paths = raw.get("paths", {})
        cfg.paths = PathsConfig(**{k: v for k, v in paths.items()
                                   if k in PathsConfig().__dict__})
        vocab = raw.get("vocabulary", {})
        cfg.vocabulary = VocabularyConfig(**{k: v for k, v in vocab.items()
                                             if k in VocabularyConfig().__dict__})
        synth_raw = dict(raw.get("synth", {}))
        mel = MelConfig.from_dict(synth_raw.pop("mel", {}))
        cfg.synth = SynthConfig(mel=mel, **{k: v for k, v in synth_raw.items()
                                            if k in ("sample_rate", "augment_prob", "write_wav")})
        curation = raw.get("curation", {})
        cfg.curation = CurationConfig(**{k: v for k, v in curation.items()
                                         if k in CurationConfig().__dict__})
        eval_raw = raw.get("eval", {})
        cfg.eval = EvalConfig(**{k: v for k, v in eval_raw.items()
                                 if k in EvalConfig().__dict__})
        cfg.seed = int(raw.get("seed", 0))
        cfg.workers = int(raw.get("workers", 1))
        return cfg

    @classmethod
    def load(cls, path: str | Path) -> "PipelineConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")
