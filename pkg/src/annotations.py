"""Human stereo-quality ratings: CSV loading and per-pair averaging."""
from __future__ import annotations

from dataclasses import dataclass
import logging
from pathlib import Path

import pandas as pd

from src.errors import AnnotationError

LOGGER = logging.getLogger(__name__)

REQUIRED_COLUMNS = ("pair_id", "annotator_id", "score")
MIN_SCORE, MAX_SCORE = 1, 10
MIN_ANNOTATORS = 2


@dataclass
class AnnotationSet:
    """One row per (pair_id, annotator_id) with an integer score in [1, 10]."""

    entries: pd.DataFrame

    def __post_init__(self) -> None:
        self.entries = _validated(self.entries)

    @classmethod
    def from_records(cls, rows: list[dict]) -> "AnnotationSet":
        return cls(pd.DataFrame(rows, columns=list(REQUIRED_COLUMNS)))

    @property
    def pair_ids(self) -> list[str]:
        return sorted(self.entries["pair_id"].unique())

    def __len__(self) -> int:
        return len(self.entries)

    def mean_scores(self, min_annotators: int = MIN_ANNOTATORS) -> pd.Series:
        """Average score per pair_id, sorted by pair_id."""
        grouped = self.entries.groupby("pair_id", sort=True)["score"]
        counts = grouped.count()
        short = counts[counts < min_annotators]
        if not short.empty:
            preview = ", ".join(short.index[:10])
            raise AnnotationError(
                f"{len(short)} pairs have fewer than {min_annotators} annotators: {preview}"
            )
        return grouped.mean().astype(float)


def _validated(frame: pd.DataFrame) -> pd.DataFrame:
    missing = [col for col in REQUIRED_COLUMNS if col not in frame.columns]
    if missing:
        raise AnnotationError(f"annotation table lacks columns: {', '.join(missing)}")

    table = frame.loc[:, list(REQUIRED_COLUMNS)].copy()
    if table.isna().any().any():
        raise AnnotationError("annotation table has empty cells")
    table["pair_id"] = table["pair_id"].astype(str).str.strip()
    table["annotator_id"] = table["annotator_id"].astype(str).str.strip()

    scores = pd.to_numeric(table["score"], errors="coerce")
    if scores.isna().any() or (scores != scores.round()).any():
        raise AnnotationError("scores must be integers")
    if ((scores < MIN_SCORE) | (scores > MAX_SCORE)).any():
        raise AnnotationError(f"scores must lie in [{MIN_SCORE}, {MAX_SCORE}]")
    table["score"] = scores.astype(int)

    if table.duplicated(subset=["pair_id", "annotator_id"]).any():
        raise AnnotationError("an annotator rated the same pair more than once")
    return table.reset_index(drop=True)


def load_annotations(path: str | Path) -> AnnotationSet:
    csv_path = Path(path)
    if not csv_path.exists():
        raise FileNotFoundError(f"Annotation file not found: {csv_path}")
    frame = pd.read_csv(csv_path, dtype={"pair_id": str, "annotator_id": str})
    annotations = AnnotationSet(frame)
    LOGGER.info("Loaded %d ratings for %d pairs from %s", len(annotations), len(annotations.pair_ids), csv_path)
    return annotations


__all__ = ["AnnotationSet", "load_annotations"]
