"""Cross-modality retrieval evaluation: feature extraction, CMC, and mAP.

Ranking is by cosine similarity, descending, with ties broken by ascending
tracklet id so results are deterministic. A query whose identity never
appears in the gallery is excluded from both curves and counted in the
report. No same-camera filtering is applied.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import Dataset, Tracklet
from .errors import DataError, ParseError
from .tensor import Tensor, no_grad


@dataclass
class GalleryIndex:
    features: np.ndarray       # [G, D], rows unit-norm
    identities: np.ndarray     # [G]
    modalities: np.ndarray     # [G]
    tracklet_ids: np.ndarray   # [G]


@dataclass
class RetrievalReport:
    cmc: np.ndarray            # [G], nondecreasing
    mean_ap: float
    direction: str
    num_queries: int
    num_skipped: int
    ranked_ids: list = field(default_factory=list)

    def rank(self, k: int) -> float:
        return float(self.cmc[min(k, len(self.cmc)) - 1])


def extract_features(model, dataset: Dataset, tracklets: list[Tracklet],
                     use_hub_feature: bool = False,
                     batch_size: int = 16) -> GalleryIndex:
    """One unit-normalized row per tracklet, in the given order."""
    feats = []
    with no_grad():
        for start in range(0, len(tracklets), batch_size):
            chunk = tracklets[start:start + batch_size]
            frames = np.stack([dataset.load_frames(t) for t in chunk])
            seq, hub_seq, _ = model.forward(Tensor(frames))
            out = hub_seq if (use_hub_feature and hub_seq is not None) else seq
            feats.append(out.data)
    features = np.concatenate(feats, axis=0) if feats else np.zeros((0, 1))
    norms = np.linalg.norm(features, axis=1, keepdims=True)
    features = features / np.maximum(norms, 1e-12)
    return GalleryIndex(
        features=features,
        identities=np.asarray([t.identity for t in tracklets]),
        modalities=np.asarray([t.modality for t in tracklets]),
        tracklet_ids=np.asarray([t.tracklet_id for t in tracklets]),
    )


def evaluate(queries: GalleryIndex, gallery: GalleryIndex,
             direction: str = "", keep_rankings: bool = False) -> RetrievalReport:
    """CMC and mAP of queries against a modality-disjoint gallery."""
    if set(queries.modalities) & set(gallery.modalities):
        raise DataError("query and gallery modalities overlap")
    g = len(gallery.tracklet_ids)
    sims = queries.features @ gallery.features.T
    cmc_hits = np.zeros(g)
    aps = []
    skipped = 0
    ranked_ids = []
    for qi in range(len(queries.tracklet_ids)):
        # lexsort: last key is primary, so similarity first, then id.
        order = np.lexsort((gallery.tracklet_ids, -sims[qi]))
        if keep_rankings:
            ranked_ids.append(gallery.tracklet_ids[order].tolist())
        hits = gallery.identities[order] == queries.identities[qi]
        if not hits.any():
            skipped += 1
            continue
        first = int(np.argmax(hits))
        cmc_hits[first:] += 1.0
        positions = np.flatnonzero(hits)
        # Sequential sums keep the arithmetic bit-identical to a plain
        # enumeration of the definition.
        precisions = [(k + 1) / (rank + 1) for k, rank in enumerate(positions)]
        aps.append(sum(precisions) / len(precisions))
    evaluated = len(aps)
    if evaluated == 0:
        raise DataError("no query identity appears in the gallery")
    return RetrievalReport(
        cmc=cmc_hits / evaluated,
        mean_ap=sum(aps) / evaluated,
        direction=direction,
        num_queries=evaluated,
        num_skipped=skipped,
        ranked_ids=ranked_ids,
    )


def save_report(report: RetrievalReport, json_path, csv_path) -> None:
    """Metrics as JSON text plus the CMC curve as rank,value lines."""
    payload = {
        "direction": report.direction,
        "rank1": report.rank(1),
        "rank5": report.rank(5),
        "rank10": report.rank(10),
        "map": report.mean_ap,
        "num_queries": report.num_queries,
        "num_skipped": report.num_skipped,
    }
    Path(json_path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    lines = ["rank,value"]
    for i, value in enumerate(report.cmc, start=1):
        lines.append(f"{i},{float(value)!r}")
    Path(csv_path).write_text("\n".join(lines) + "\n")


def load_cmc_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """Parse a CMC curve CSV, reporting the offending line on failure."""
    ranks, values = [], []
    text = Path(path).read_text().splitlines()
    for lineno, line in enumerate(text, start=1):
        if lineno == 1:
            if line.strip() != "rank,value":
                raise ParseError(f"{path}:{lineno}: expected 'rank,value' header")
            continue
        if not line.strip():
            continue
        parts = line.split(",")
        try:
            if len(parts) != 2:
                raise ValueError
            ranks.append(int(parts[0]))
            values.append(float(parts[1]))
        except ValueError:
            raise ParseError(f"{path}:{lineno}: malformed CMC row {line!r}") from None
    return np.asarray(ranks), np.asarray(values)
