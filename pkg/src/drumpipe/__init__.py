"""Data pipeline for drum transcription.

Curates a labeled one-shot drum sample library from embeddings, renders
synthetic training audio from MIDI, tokenizes event sequences, and scores
transcriptions with onset-tolerance F1.
"""

__version__ = "0.1.0"

PIPELINE_VERSION = __version__


class DrumpipeError(Exception):
    """Base class for all errors raised by this package."""
