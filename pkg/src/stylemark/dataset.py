"""Landmark-annotated image manifests: ingestion, validation, splitting, persistence.

A manifest file is UTF-8 line-delimited JSON. The first line is a header::

    {"tag": "Train", "seed": 7, "landmark_count": 48, "parent": null}

and every following line is one record::

    {"id": "cat_001", "image_path": "images/cat_001.png", "width": 64,
     "height": 64, "split": "train", "landmarks": [[x, y], ...],
     "mask_path": null, "lineage": null}

Image and mask paths are resolved relative to the manifest file. Manifests
are immutable after load; every operation that changes content returns a
new manifest.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator, Optional, Sequence

import numpy as np

from .errors import ManifestParseError, RecordValidationError, StylemarkError

DEFAULT_LANDMARK_COUNT = 48


class Split(str, Enum):
    TRAIN = "train"
    TEST = "test"
    DERIVED = "derived"


@dataclass(frozen=True)
class Landmark:
    """One annotated point in image coordinates (origin top-left, y down)."""

    x: float
    y: float
    index: int


class LandmarkSet:
    """Ordered set of landmarks backed by an (N, 2) float64 array.

    Indices are implicit (row i is landmark i) unless an explicit index
    array is supplied, which only exists so that malformed annotations can
    be represented and reported by validation.
    """

    __slots__ = ("xy", "indices")

    def __init__(self, xy: np.ndarray, indices: Optional[np.ndarray] = None):
        arr = np.asarray(xy, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[1] != 2:
            raise ValueError(f"landmarks must be (N, 2), got {arr.shape}")
        self.xy = arr
        self.xy.setflags(write=False)
        if indices is None:
            self.indices = np.arange(len(arr))
        else:
            self.indices = np.asarray(indices, dtype=np.int64)
        self.indices.setflags(write=False)

    @classmethod
    def from_landmarks(cls, points: Sequence[Landmark]) -> "LandmarkSet":
        xy = np.array([[p.x, p.y] for p in points], dtype=np.float64)
        idx = np.array([p.index for p in points], dtype=np.int64)
        return cls(xy, idx)

    def __len__(self) -> int:
        return len(self.xy)

    def __iter__(self) -> Iterator[Landmark]:
        for (x, y), i in zip(self.xy, self.indices):
            yield Landmark(float(x), float(y), int(i))

    def __getitem__(self, i: int) -> Landmark:
        x, y = self.xy[i]
        return Landmark(float(x), float(y), int(self.indices[i]))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, LandmarkSet):
            return NotImplemented
        return (
            self.xy.shape == other.xy.shape
            and np.array_equal(self.xy, other.xy)
            and np.array_equal(self.indices, other.indices)
        )

    def __repr__(self) -> str:
        return f"LandmarkSet(n={len(self)})"

    def violations(self, expected_count: Optional[int] = None) -> list[str]:
        """Invariant check: finite coordinates, indices exactly 0..N-1 in order."""
        out = []
        if expected_count is not None and len(self) != expected_count:
            out.append(f"expected {expected_count} landmarks, got {len(self)}")
        if not np.all(np.isfinite(self.xy)):
            out.append("non-finite coordinate")
        if len(np.unique(self.indices)) != len(self.indices):
            out.append("index not unique")
        elif not np.array_equal(self.indices, np.arange(len(self))):
            out.append("indices are not 0..N-1 in order")
        return out

    def to_list(self) -> list[list[float]]:
        return [[float(x), float(y)] for x, y in self.xy]


@dataclass(frozen=True)
class Lineage:
    """Provenance link from a derived record to its parent.

    ``transform`` holds the six affine coefficients (a, b, tx, c, d, ty) in
    row-major order of the 2x3 matrix that maps parent coordinates into this
    record's frame, when the derivation was geometric.
    """

    parent_id: str
    transform_id: str
    transform: Optional[tuple[float, ...]] = None

    def to_dict(self) -> dict:
        d: dict = {"parent_id": self.parent_id, "transform_id": self.transform_id}
        if self.transform is not None:
            d["transform"] = [float(v) for v in self.transform]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Lineage":
        t = d.get("transform")
        return cls(
            parent_id=d["parent_id"],
            transform_id=d["transform_id"],
            transform=tuple(float(v) for v in t) if t is not None else None,
        )


@dataclass(frozen=True)
class ImageRecord:
    """One image plus its landmark annotation and provenance."""

    id: str
    image_path: str
    landmarks: LandmarkSet
    width: int
    height: int
    split: Split = Split.TRAIN
    mask_path: Optional[str] = None
    lineage: Optional[Lineage] = None

    def to_dict(self) -> dict:
        d: dict = {
            "id": self.id,
            "image_path": self.image_path,
            "width": self.width,
            "height": self.height,
            "split": self.split.value,
            "landmarks": self.landmarks.to_list(),
        }
        if self.mask_path is not None:
            d["mask_path"] = self.mask_path
        if self.lineage is not None:
            d["lineage"] = self.lineage.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ImageRecord":
        try:
            landmarks = LandmarkSet(np.array(d["landmarks"], dtype=np.float64))
            lineage = d.get("lineage")
            return cls(
                id=str(d["id"]),
                image_path=str(d["image_path"]),
                landmarks=landmarks,
                width=int(d["width"]),
                height=int(d["height"]),
                split=Split(d["split"]),
                mask_path=d.get("mask_path"),
                lineage=Lineage.from_dict(lineage) if lineage else None,
            )
        except (KeyError, TypeError, ValueError) as e:
            raise ManifestParseError(f"bad record line: {e}") from e


def validate_record(record: ImageRecord, landmark_count: Optional[int] = None) -> list[str]:
    """Return the list of violated invariants (empty list means OK).

    Bounds follow the half-open convention: a coordinate is valid when it
    lies in [0, width) x [0, height).
    """
    violations = []
    if not record.id:
        violations.append("empty id")
    if record.width <= 0 or record.height <= 0:
        violations.append("non-positive image dimensions")
    violations.extend(record.landmarks.violations(landmark_count))
    xy = record.landmarks.xy
    if len(xy) and np.all(np.isfinite(xy)):
        x, y = xy[:, 0], xy[:, 1]
        if np.any(x < 0) or np.any(x >= record.width) or np.any(y < 0) or np.any(y >= record.height):
            bad = int(np.argmax((x < 0) | (x >= record.width) | (y < 0) | (y >= record.height)))
            violations.append(
                f"landmark {bad} out of bounds: ({x[bad]:g}, {y[bad]:g}) "
                f"not in [0, {record.width}) x [0, {record.height})"
            )
    return violations


@dataclass
class DatasetManifest:
    """Ordered collection of records plus provenance metadata.

    ``root`` is the directory relative paths resolve against. It is set at
    load/creation time and is not serialized.
    """

    records: list[ImageRecord]
    seed: int
    tag: str
    parent: Optional[str] = None
    landmark_count: int = DEFAULT_LANDMARK_COUNT
    root: Path = field(default_factory=Path.cwd, compare=False, repr=False)

    def __post_init__(self):
        if not self.tag:
            raise StylemarkError("manifest tag must be nonempty")
        self.root = Path(self.root)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[ImageRecord]:
        return iter(self.records)

    def ids(self) -> list[str]:
        return [r.id for r in self.records]

    def by_id(self) -> dict[str, ImageRecord]:
        return {r.id: r for r in self.records}

    def resolve(self, relative: str) -> Path:
        return (self.root / relative).resolve()

    def image_path(self, record: ImageRecord) -> Path:
        return self.resolve(record.image_path)

    def mask_path(self, record: ImageRecord) -> Optional[Path]:
        return self.resolve(record.mask_path) if record.mask_path else None

    def validate(self) -> None:
        """Raise RecordValidationError on the first invalid record (fail fast)."""
        seen: set[str] = set()
        for rec in self.records:
            violations = validate_record(rec, self.landmark_count)
            if rec.id in seen:
                violations.append("duplicate record id in manifest")
            seen.add(rec.id)
            if violations:
                raise RecordValidationError(rec.id, violations)

    def with_records(self, records: Iterable[ImageRecord], tag: Optional[str] = None,
                     seed: Optional[int] = None, parent: Optional[str] = None) -> "DatasetManifest":
        return DatasetManifest(
            records=list(records),
            seed=self.seed if seed is None else seed,
            tag=self.tag if tag is None else tag,
            parent=parent,
            landmark_count=self.landmark_count,
            root=self.root,
        )


def load_manifest(path: str | Path) -> DatasetManifest:
    """Load and validate a manifest file.

    Any malformed line raises ManifestParseError; any invalid record raises
    RecordValidationError naming the record. Records are never silently
    skipped.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ManifestParseError(f"cannot read {path}: {e}") from e
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ManifestParseError(f"{path}: empty manifest file")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as e:
        raise ManifestParseError(f"{path}: bad header line: {e}") from e
    for key in ("tag", "seed", "landmark_count"):
        if key not in header:
            raise ManifestParseError(f"{path}: header missing {key!r}")
    records = []
    for lineno, line in enumerate(lines[1:], start=2):
        try:
            d = json.loads(line)
        except json.JSONDecodeError as e:
            raise ManifestParseError(f"{path}:{lineno}: bad record line: {e}") from e
        records.append(ImageRecord.from_dict(d))
    manifest = DatasetManifest(
        records=records,
        seed=int(header["seed"]),
        tag=str(header["tag"]),
        parent=header.get("parent"),
        landmark_count=int(header["landmark_count"]),
        root=path.resolve().parent,
    )
    manifest.validate()
    return manifest


def _relativize(rel_path: str, old_root: Path, new_root: Path) -> str:
    if old_root.resolve() == new_root.resolve():
        return rel_path
    absolute = (old_root / rel_path).resolve()
    return os.path.relpath(absolute, new_root.resolve())


def save_manifest(manifest: DatasetManifest, path: str | Path) -> None:
    """Write a manifest; load_manifest(path) reproduces an equal manifest.

    Paths are rewritten relative to the destination so records stay
    resolvable wherever the file lands. Serialization is byte-deterministic
    for equal inputs.
    """
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise StylemarkError(f"cannot create {path.parent}: {e}") from e
    new_root = path.resolve().parent
    header: dict = {
        "tag": manifest.tag,
        "seed": int(manifest.seed),
        "landmark_count": int(manifest.landmark_count),
    }
    if manifest.parent is not None:
        header["parent"] = manifest.parent
    out = [json.dumps(header, separators=(",", ":"), ensure_ascii=False)]
    for rec in manifest.records:
        d = rec.to_dict()
        d["image_path"] = _relativize(rec.image_path, manifest.root, new_root)
        if rec.mask_path is not None:
            d["mask_path"] = _relativize(rec.mask_path, manifest.root, new_root)
        out.append(json.dumps(d, separators=(",", ":"), ensure_ascii=False))
    try:
        path.write_text("\n".join(out) + "\n", encoding="utf-8")
    except OSError as e:
        raise StylemarkError(f"cannot write {path}: {e}") from e


def split_dataset(manifest: DatasetManifest, n_train: int, n_test: int,
                  seed: int) -> tuple[DatasetManifest, DatasetManifest]:
    """Seeded uniform shuffle split into disjoint Train/Test manifests.

    Deterministic for fixed (manifest, seed); the same inputs always yield
    byte-identical manifests on save.
    """
    if n_train < 0 or n_test < 0:
        raise StylemarkError("split sizes must be nonnegative")
    if n_train + n_test > len(manifest.records):
        raise StylemarkError(
            f"insufficient records: need {n_train + n_test}, have {len(manifest.records)}"
        )
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(manifest.records))
    train_records = [
        replace(manifest.records[i], split=Split.TRAIN) for i in order[:n_train]
    ]
    test_records = [
        replace(manifest.records[i], split=Split.TEST) for i in order[n_train:n_train + n_test]
    ]
    train = manifest.with_records(train_records, tag="Train", seed=seed, parent=manifest.tag)
    test = manifest.with_records(test_records, tag="Test", seed=seed, parent=manifest.tag)
    return train, test


def union_manifests(tag: str, parts: Sequence[DatasetManifest]) -> DatasetManifest:
    """Concatenate manifests; record ids must stay unique across parts."""
    if not parts:
        raise StylemarkError("union of zero manifests")
    counts = {p.landmark_count for p in parts}
    if len(counts) != 1:
        raise StylemarkError(f"landmark counts differ across union parts: {sorted(counts)}")
    base = parts[0]
    records = []
    for part in parts:
        for rec in part.records:
            img = _relativize(rec.image_path, part.root, base.root)
            mask = _relativize(rec.mask_path, part.root, base.root) if rec.mask_path else None
            records.append(replace(rec, image_path=img, mask_path=mask))
    out = base.with_records(records, tag=tag, parent="+".join(p.tag for p in parts))
    seen: set[str] = set()
    for rec in out.records:
        if rec.id in seen:
            raise RecordValidationError(rec.id, ["duplicate record id in union"])
        seen.add(rec.id)
    return out


def stable_seed(*parts: object) -> int:
    """Stable 64-bit seed derived from the given parts.

    Uses blake2b rather than hash() so values survive across processes and
    Python versions; this is what makes scheduling order irrelevant.
    """
    import hashlib

    key = "\x1f".join(str(p) for p in parts).encode("utf-8")
    digest = hashlib.blake2b(key, digest_size=8).digest()
    return int.from_bytes(digest, "big")


def nonfinite_guard(value: float, what: str) -> float:
    if not math.isfinite(value):
        raise StylemarkError(f"{what} is not finite: {value}")
    return value
