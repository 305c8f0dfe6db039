"""Semi-supervised one-shot sample labeling.

Class prototypes are the arithmetic means of the gold-set embeddings
(accumulated in float64, no per-vector normalization). Unlabeled samples
get the class of the most cosine-similar prototype; the winning similarity
is kept as a per-sample confidence in [-1, 1]. A filename-based fallback
classifier (normalized edit distance against class names) covers corpora
without embeddings.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import DrumpipeError
from . import kernels
from .embed_store import EmbeddingStore, ManifestEntry
from .vocab import CLASS_NAMES, NUM_CLASSES

log = logging.getLogger(__name__)

PROVENANCE_GOLD = "gold"
PROVENANCE_CENTROID = "centroid-classified"
PROVENANCE_NAME = "name-classified"


class EmptyGoldError(DrumpipeError, ValueError):
    """No gold-labeled samples to build prototypes from."""


class DegenerateVectorError(DrumpipeError, ValueError):
    """A zero-norm vector has no direction to compare."""


class CuratorConfigError(DrumpipeError, ValueError):
    """Store/centroid mismatch or other configuration problem."""


@dataclass(frozen=True)
class CentroidSet:
    """Per-class mean embeddings for every gold-populated class.

    `matrix` rows align with `class_ids`; classes listed in
    `missing_classes` had no gold samples and are excluded from
    classification targets.
    """

    class_ids: tuple[int, ...]
    matrix: np.ndarray  # float64, shape (len(class_ids), dimension)
    class_counts: dict[int, int]
    missing_classes: tuple[int, ...]

    @property
    def dimension(self) -> int:
        return self.matrix.shape[1]

    def centroid(self, class_id: int) -> np.ndarray:
        return self.matrix[self.class_ids.index(class_id)]


@dataclass(frozen=True)
class ClassificationResult:
    sample_id: str
    assigned_class: int
    confidence: float
    scores: np.ndarray  # float64, shape (26,); NaN where no centroid exists


@dataclass(frozen=True)
class LabeledSample:
    sample_id: str
    audio_path: str
    class_id: int
    confidence: float
    provenance: str


def compute_centroids(store: EmbeddingStore) -> CentroidSet:
    """Average each class's gold embeddings into a prototype vector."""
    gold = store.gold_entries
    if not gold:
        raise EmptyGoldError("store has no gold-labeled samples")
    by_class: dict[int, list[ManifestEntry]] = {}
    for e in gold:
        by_class.setdefault(e.gold_label, []).append(e)

    class_ids = tuple(sorted(by_class))
    matrix = np.empty((len(class_ids), store.dimension), dtype=np.float64)
    counts: dict[int, int] = {}
    for row, cid in enumerate(class_ids):
        vecs = store.embeddings_for(by_class[cid]).astype(np.float64)
        matrix[row] = vecs.mean(axis=0)
        counts[cid] = len(by_class[cid])
    missing = tuple(i for i in range(NUM_CLASSES) if i not in by_class)
    for cid in missing:
        log.warning("class %d (%s) has no gold samples; excluded from targets",
                    cid, CLASS_NAMES[cid])
    return CentroidSet(class_ids=class_ids, matrix=matrix,
                       class_counts=counts, missing_classes=missing)


def cosine_score(u: np.ndarray, v: np.ndarray) -> float:
    """Cosine of the angle between two vectors, clipped to [-1, 1]."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise CuratorConfigError(f"dimension mismatch: {u.shape} vs {v.shape}")
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        raise DegenerateVectorError("zero-norm vector has no cosine similarity")
    return float(np.clip(float(u @ v) / (nu * nv), -1.0, 1.0))


def classify_all(store: EmbeddingStore, centroids: CentroidSet) -> list[ClassificationResult]:
    """Score every unlabeled sample against every prototype.

    Results follow manifest order. Ties on the maximum score resolve to the
    lowest class id.
    """
    if centroids.matrix.shape[0] == 0:
        raise EmptyGoldError("centroid set is empty")
    if store.dimension != centroids.dimension:
        raise CuratorConfigError(
            f"store dimension {store.dimension} != centroid dimension {centroids.dimension}")
    unlabeled = store.unlabeled_entries
    if not unlabeled:
        return []

    cmat = centroids.matrix
    cnorms = np.linalg.norm(cmat, axis=1)
    if np.any(cnorms == 0.0):
        bad = centroids.class_ids[int(np.argmax(cnorms == 0.0))]
        raise DegenerateVectorError(f"centroid for class {bad} has zero norm")

    umat = store.embeddings_for(unlabeled).astype(np.float64)
    unorms = np.linalg.norm(umat, axis=1)
    if np.any(unorms == 0.0):
        bad = unlabeled[int(np.argmax(unorms == 0.0))].sample_id
        raise DegenerateVectorError(f"sample {bad!r} has a zero-norm embedding")

    sims = (umat / unorms[:, None]) @ (cmat / cnorms[:, None]).T
    np.clip(sims, -1.0, 1.0, out=sims)

    col_of_class = {cid: col for col, cid in enumerate(centroids.class_ids)}
    results: list[ClassificationResult] = []
    for i, entry in enumerate(unlabeled):
        scores = np.full(NUM_CLASSES, np.nan)
        for cid, col in col_of_class.items():
            scores[cid] = sims[i, col]
        # nanargmax returns the first (= lowest id) position on exact ties
        assigned = int(np.nanargmax(scores))
        results.append(ClassificationResult(
            sample_id=entry.sample_id,
            assigned_class=assigned,
            confidence=float(scores[assigned]),
            scores=scores,
        ))
    return results


def filter_by_confidence(
    results: list[ClassificationResult], threshold: float,
) -> tuple[list[ClassificationResult], list[ClassificationResult]]:
    """Split results into (accepted, rejected) at `threshold` (inclusive)."""
    if not -1.0 <= threshold <= 1.0:
        raise ValueError(f"threshold {threshold} outside [-1, 1]")
    accepted = [r for r in results if r.confidence >= threshold]
    rejected = [r for r in results if r.confidence < threshold]
    return accepted, rejected


_NON_ALNUM = re.compile(r"[^a-z0-9\s]|_")
_DIGITS = re.compile(r"[0-9]+")
_SPACES = re.compile(r"\s+")


def normalize_name(text: str) -> str:
    """Lowercase; drop digits, extension-style punctuation; collapse spaces."""
    text = text.lower()
    text = _DIGITS.sub("", text)
    text = _NON_ALNUM.sub(" ", text)
    return _SPACES.sub(" ", text).strip()


def normalized_distance(a: str, b: str) -> float:
    """Levenshtein distance divided by the longer length (0 when both empty)."""
    longest = max(len(a), len(b))
    if longest == 0:
        return 0.0
    return kernels.levenshtein(a, b) / longest


_NORMALIZED_CLASS_NAMES = tuple(normalize_name(n) for n in CLASS_NAMES)


def classify_by_name(audio_path: str | Path, sample_id: str | None = None) -> ClassificationResult:
    """Assign the class whose name is edit-closest to the filename or parent dir.

    The filename stem and the parent directory name are normalized and
    scored separately against every class name; the better candidate wins.
    Confidence is 1 minus the best normalized distance.
    """
    p = Path(audio_path)
    candidates = [normalize_name(p.stem)]
    if p.parent.name:
        candidates.append(normalize_name(p.parent.name))

    scores = np.empty(NUM_CLASSES, dtype=np.float64)
    for cid, cname in enumerate(_NORMALIZED_CLASS_NAMES):
        best = min(normalized_distance(cand, cname) for cand in candidates)
        scores[cid] = 1.0 - best
    assigned = int(np.argmax(scores))  # first occurrence = lowest id on ties
    return ClassificationResult(
        sample_id=sample_id if sample_id is not None else p.stem,
        assigned_class=assigned,
        confidence=float(scores[assigned]),
        scores=scores,
    )


def build_library(
    store: EmbeddingStore,
    accepted: list[ClassificationResult],
    provenance: str = PROVENANCE_CENTROID,
) -> list[LabeledSample]:
    """Gold samples (confidence 1 by convention) plus accepted classifications."""
    library = [
        LabeledSample(e.sample_id, e.audio_path, e.gold_label, 1.0, PROVENANCE_GOLD)
        for e in store.gold_entries
    ]
    entry_of = {e.sample_id: e for e in store.entries}
    for r in accepted:
        e = entry_of[r.sample_id]
        library.append(LabeledSample(r.sample_id, e.audio_path, r.assigned_class,
                                     r.confidence, provenance))
    return library


def export_library(samples: list[LabeledSample], path: str | Path) -> None:
    """Write one LabeledSample JSON object per line, preserving order."""
    if not samples:
        raise ValueError("refusing to export an empty library")
    with open(path, "w") as fh:
        for s in samples:
            fh.write(json.dumps({
                "sample_id": s.sample_id,
                "audio_path": s.audio_path,
                "class": s.class_id,
                "confidence": s.confidence,
                "provenance": s.provenance,
            }) + "\n")


def load_library(path: str | Path) -> list[LabeledSample]:
    samples = []
    with open(path) as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            raw = json.loads(line)
            try:
                samples.append(LabeledSample(
                    sample_id=str(raw["sample_id"]),
                    audio_path=str(raw["audio_path"]),
                    class_id=int(raw["class"]),
                    confidence=float(raw["confidence"]),
                    provenance=str(raw["provenance"]),
                ))
            except KeyError as exc:
                raise DrumpipeError(f"{path}:{line_no}: missing field {exc}") from None
    return samples


CONFIDENCE_BINS = 20


def classification_report(
    results: list[ClassificationResult],
    accepted: list[ClassificationResult],
    rejected: list[ClassificationResult],
    gold_count: int,
) -> dict:
    """Audit summary: per-class counts and confidence histograms (20 bins over [-1, 1])."""
    edges = np.linspace(-1.0, 1.0, CONFIDENCE_BINS + 1)
    per_class: dict[str, dict] = {}
    for cid in range(NUM_CLASSES):
        confs = [r.confidence for r in results if r.assigned_class == cid]
        hist, _ = np.histogram(confs, bins=edges)
        per_class[str(cid)] = {
            "name": CLASS_NAMES[cid],
            "count": len(confs),
            "confidence_histogram": hist.tolist(),
        }
    all_hist, _ = np.histogram([r.confidence for r in results], bins=edges)
    return {
        "classified": len(results),
        "accepted": len(accepted),
        "rejected": len(rejected),
        "gold": gold_count,
        "library_size": gold_count + len(accepted),
        "bin_edges": edges.tolist(),
        "confidence_histogram": all_hist.tolist(),
        "per_class": per_class,
        "rejected_samples": [
            {"sample_id": r.sample_id, "assigned_class": r.assigned_class,
             "confidence": r.confidence,
             "scores": [None if np.isnan(s) else float(s) for s in r.scores]}
            for r in rejected
        ],
    }
