"""Dataset curation: pair records, JSON Lines manifests, frame ingest and partitioning."""
from __future__ import annotations

from collections import defaultdict
from dataclasses import asdict, dataclass, field, replace
from datetime import datetime, timezone
import json
import logging
import os
from pathlib import Path
import tempfile
from typing import Iterable

import numpy as np
import pandas as pd

from src.errors import (
    EmptyDirectoryError,
    InsufficientRecordsError,
    InvalidParamsError,
    ManifestError,
    OddWidthError,
)
from src.imgcore import load_image, resize, save_image, split_side_by_side

LOGGER = logging.getLogger(__name__)

TOOL_VERSION = "0.3.0"
SCHEMA_VERSION = 1

CATEGORIES: tuple[str, ...] = ("indoor", "outdoor", "animation", "simple", "complex", "unlabeled")
SPLITS: tuple[str, ...] = ("train", "test")
FRAME_SUFFIXES = {".png", ".jpg", ".jpeg"}


@dataclass(frozen=True)
class PairRecord:
    pair_id: str
    left_path: str
    right_path: str
    category: str = "unlabeled"
    split: str = "train"
    source_id: str = ""
    frame_index: int = 0
    disparity_path: str | None = None


@dataclass
class DatasetManifest:
    records: list[PairRecord]
    created_at: str = field(default_factory=lambda: datetime.now(timezone.utc).isoformat(timespec="seconds"))
    tool_version: str = TOOL_VERSION

    def by_id(self) -> dict[str, PairRecord]:
        return {record.pair_id: record for record in self.records}

    def select(self, splits: Iterable[str]) -> list[PairRecord]:
        wanted = set(splits)
        return [record for record in self.records if record.split in wanted]


# ---------- MANIFEST I/O ----------

def _resolve(path: str, base: Path) -> str:
    candidate = Path(path)
    return str(candidate if candidate.is_absolute() else base / candidate)


def write_manifest(path: str | Path, manifest: DatasetManifest) -> Path:
    """Write JSON Lines (header line, then one record per line) via write-then-rename."""
    out_path = Path(path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    header = {
        "schema_version": SCHEMA_VERSION,
        "created_at": manifest.created_at,
        "tool_version": manifest.tool_version,
    }
    lines = [json.dumps(header)] + [json.dumps(asdict(record)) for record in manifest.records]

    fd, tmp_name = tempfile.mkstemp(prefix=f".{out_path.name}.", dir=out_path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")
        os.replace(tmp_name, out_path)
    except BaseException:
        Path(tmp_name).unlink(missing_ok=True)
        raise
    LOGGER.info("Wrote manifest with %d records to %s", len(manifest.records), out_path)
    return out_path


def read_manifest(path: str | Path) -> DatasetManifest:
    """Read a manifest; relative file paths resolve against the manifest's directory."""
    manifest_path = Path(path)
    base = manifest_path.parent
    try:
        lines = [line for line in manifest_path.read_text(encoding="utf-8").splitlines() if line.strip()]
    except FileNotFoundError as exc:
        raise ManifestError(f"Manifest not found: {manifest_path}") from exc
    if not lines:
        raise ManifestError(f"Manifest is empty: {manifest_path}")

    try:
        header = json.loads(lines[0])
        rows = [json.loads(line) for line in lines[1:]]
    except json.JSONDecodeError as exc:
        raise ManifestError(f"Malformed manifest line in {manifest_path}: {exc}") from exc

    version = header.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ManifestError(f"Unsupported manifest schema_version {version!r} in {manifest_path}")

    records: list[PairRecord] = []
    for row in rows:
        try:
            record = PairRecord(**row)
        except TypeError as exc:
            raise ManifestError(f"Bad record in {manifest_path}: {row}") from exc
        disparity = _resolve(record.disparity_path, base) if record.disparity_path else None
        records.append(
            replace(
                record,
                left_path=_resolve(record.left_path, base),
                right_path=_resolve(record.right_path, base),
                disparity_path=disparity,
            )
        )
    return DatasetManifest(
        records=records,
        created_at=str(header.get("created_at", "")),
        tool_version=str(header.get("tool_version", TOOL_VERSION)),
    )


def validate_manifest(manifest: DatasetManifest, check_files: bool = True) -> None:
    seen: set[str] = set()
    problems: list[str] = []
    for record in manifest.records:
        if record.pair_id in seen:
            problems.append(f"duplicate pair_id {record.pair_id}")
        seen.add(record.pair_id)
        if record.category not in CATEGORIES:
            problems.append(f"{record.pair_id}: unknown category {record.category!r}")
        if record.split not in SPLITS:
            problems.append(f"{record.pair_id}: unknown split {record.split!r}")
        if check_files:
            for path in (record.left_path, record.right_path, record.disparity_path):
                if path and not Path(path).exists():
                    problems.append(f"{record.pair_id}: missing file {path}")

    splits_by_source: dict[str, set[str]] = defaultdict(set)
    for record in manifest.records:
        splits_by_source[record.source_id].add(record.split)
    for source, splits in sorted(splits_by_source.items()):
        if len(splits) > 1:
            problems.append(f"source {source!r} appears in both train and test")

    if problems:
        raise ManifestError("; ".join(problems[:20]))


# ---------- INGEST ----------

def _frame_files(frame_dir: Path) -> list[Path]:
    if not frame_dir.is_dir():
        raise EmptyDirectoryError(f"Frame directory not found: {frame_dir}")
    frames = sorted(p for p in frame_dir.iterdir() if p.suffix.lower() in FRAME_SUFFIXES)
    if not frames:
        raise EmptyDirectoryError(f"No PNG/JPEG frames in {frame_dir}")
    return frames


def ingest_frames(
    frame_dir: str | Path,
    out_dir: str | Path,
    source_id: str,
    sample_stride: int = 8,
    target_w: int = 480,
    target_h: int = 540,
    category: str = "unlabeled",
) -> list[PairRecord]:
    """Sample every stride-th SBS frame, resize to (2*target_w)x(target_h), split and save the views."""
    if sample_stride < 1:
        raise InvalidParamsError(f"sample_stride must be >= 1, got {sample_stride}")
    if category not in CATEGORIES:
        raise ManifestError(f"unknown category {category!r}")
    frames = _frame_files(Path(frame_dir))
    target_dir = Path(out_dir)

    records: list[PairRecord] = []
    for index in range(0, len(frames), sample_stride):
        frame = load_image(frames[index])
        if frame.shape[1] % 2:
            raise OddWidthError(f"{frames[index]} has odd width {frame.shape[1]}; not a side-by-side frame")
        left, right = split_side_by_side(resize(frame, 2 * target_w, target_h))

        pair_id = f"{source_id}-{index:06d}"
        left_path = save_image(target_dir / f"{pair_id}_L.png", left)
        right_path = save_image(target_dir / f"{pair_id}_R.png", right)
        records.append(
            PairRecord(
                pair_id=pair_id,
                left_path=str(left_path.resolve()),
                right_path=str(right_path.resolve()),
                category=category,
                split="train",
                source_id=source_id,
                frame_index=index,
            )
        )
    LOGGER.info("Ingested %d of %d frames from %s (stride %d)", len(records), len(frames), frame_dir, sample_stride)
    return records


# ---------- PARTITION ----------

def partition(manifest: DatasetManifest, per_category_test: int, seed: int = 42) -> DatasetManifest:
    """Seeded, source-disjoint test sampling of per_category_test records per category.

    Whole sources are moved to test while they fit the quota. When no whole
    source fits the remainder, the smallest overflowing source contributes its
    earliest frames and its other frames are dropped from the manifest, so a
    source never ends up in both splits.
    """
    if per_category_test < 0:
        raise InsufficientRecordsError(f"per_category_test must be >= 0, got {per_category_test}")
    rng = np.random.default_rng(seed)

    by_category: dict[str, list[PairRecord]] = defaultdict(list)
    for record in manifest.records:
        by_category[record.category].append(record)
    for category, records in sorted(by_category.items()):
        if len(records) < per_category_test:
            raise InsufficientRecordsError(
                f"category {category!r} has {len(records)} records, {per_category_test} requested for test"
            )

    test_sources: set[str] = set()
    test_ids: set[str] = set()
    if per_category_test > 0:
        for category, records in sorted(by_category.items()):
            forced = [r for r in records if r.source_id in test_sources]
            test_ids.update(r.pair_id for r in forced)
            remaining = per_category_test - len(forced)
            if remaining < 0:
                LOGGER.warning(
                    "Category %s gets %d test records from sources already in test (quota %d)",
                    category, len(forced), per_category_test,
                )

            groups: dict[str, list[PairRecord]] = defaultdict(list)
            for record in records:
                if record.source_id not in test_sources:
                    groups[record.source_id].append(record)
            order = [str(s) for s in rng.permutation(sorted(groups))] if groups else []

            for source in order:
                if remaining <= 0:
                    break
                if len(groups[source]) <= remaining:
                    remaining -= len(groups[source])
                    test_sources.add(source)
                    test_ids.update(r.pair_id for r in groups[source])

            if remaining > 0:
                leftovers = [s for s in order if s not in test_sources]
                if not leftovers:
                    raise InsufficientRecordsError(f"category {category!r} cannot fill its test quota")
                source = min(leftovers, key=lambda s: (len(groups[s]), order.index(s)))
                chosen = sorted(groups[source], key=lambda r: (r.frame_index, r.pair_id))[:remaining]
                test_sources.add(source)
                test_ids.update(r.pair_id for r in chosen)
                LOGGER.warning(
                    "Source %s split for category %s: %d frames to test, %d dropped",
                    source, category, len(chosen), len(groups[source]) - len(chosen),
                )

    kept: list[PairRecord] = []
    dropped = 0
    for record in manifest.records:
        if record.pair_id in test_ids:
            kept.append(replace(record, split="test"))
        elif record.source_id in test_sources:
            dropped += 1
        else:
            kept.append(replace(record, split="train"))
    if dropped:
        LOGGER.warning("Dropped %d records whose source straddles the split", dropped)
    return DatasetManifest(records=kept, tool_version=manifest.tool_version)


def category_stats(manifest: DatasetManifest) -> pd.DataFrame:
    """Pair counts per category and split, with totals."""
    frame = pd.DataFrame(
        [(record.category, record.split) for record in manifest.records],
        columns=["category", "split"],
    )
    table = pd.crosstab(frame["category"], frame["split"], margins=True, margins_name="total")
    return table.reindex(columns=[c for c in (*SPLITS, "total") if c in table.columns], fill_value=0)


__all__ = [
    "CATEGORIES",
    "SPLITS",
    "PairRecord",
    "DatasetManifest",
    "write_manifest",
    "read_manifest",
    "validate_manifest",
    "ingest_frames",
    "partition",
    "category_stats",
]
