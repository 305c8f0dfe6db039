"""Audio-embedding extraction for one-shot sample libraries.

Runs a pretrained (or built-in deterministic) audio encoder over a batch of
files and writes the `embeddings.manifest.json` + `embeddings.f32` pair
consumed by the drumpipe curation pipeline.
"""

__version__ = "0.1.0"


class ExtractorError(Exception):
    """Base class for extractor failures."""


class EncoderUnavailableError(ExtractorError):
    """The requested encoder cannot run in this environment."""
