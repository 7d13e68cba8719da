"""Landmark-accuracy metrics: NME, failure rate, per-region NME, mask IoU.

NME for one image is ``100 * mean_i(||pred_i - gt_i||_2) / d`` where d is a
per-image normalization constant evaluated on the ground truth. The
normalizer is swappable because no single convention is universal; the
default is the diagonal of the ground-truth landmark bounding box, which
puts typical errors on a 0-100 percent scale and pairs naturally with a
failure threshold of 10.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from .dataset import DatasetManifest, LandmarkSet
from .errors import ManifestParseError, MetricError
from .geometry import BinaryMask

FAILURE_THRESHOLD_DEFAULT = 10.0


@dataclass(frozen=True)
class Normalizer:
    """Per-image normalization constant for NME.

    kind is one of:
      - "bbox_diagonal": diagonal of the ground-truth landmark bbox
      - "inter_landmark": distance between ground-truth landmarks i and j
      - "fixed": a constant value
    """

    kind: str = "bbox_diagonal"
    i: Optional[int] = None
    j: Optional[int] = None
    value: Optional[float] = None

    def __post_init__(self):
        if self.kind == "inter_landmark":
            if self.i is None or self.j is None or self.i == self.j:
                raise MetricError("inter_landmark normalizer needs distinct indices i, j")
        elif self.kind == "fixed":
            if self.value is None or self.value <= 0:
                raise MetricError("fixed normalizer needs a positive value")
        elif self.kind != "bbox_diagonal":
            raise MetricError(f"unknown normalizer kind {self.kind!r}")

    def resolve(self, gt: LandmarkSet) -> float:
        if self.kind == "fixed":
            return float(self.value)  # type: ignore[arg-type]
        xy = gt.xy
        if self.kind == "bbox_diagonal":
            extent = xy.max(axis=0) - xy.min(axis=0)
            d = float(np.hypot(extent[0], extent[1]))
        else:
            d = float(np.linalg.norm(xy[self.i] - xy[self.j]))
        if not math.isfinite(d) or d <= 0:
            raise MetricError(f"zero normalizer: {self.kind} resolved to {d}")
        return d

    def to_dict(self) -> dict:
        d: dict = {"kind": self.kind}
        if self.kind == "inter_landmark":
            d["i"], d["j"] = self.i, self.j
        elif self.kind == "fixed":
            d["value"] = self.value
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "Normalizer":
        return cls(kind=d.get("kind", "bbox_diagonal"), i=d.get("i"), j=d.get("j"),
                   value=d.get("value"))


@dataclass(frozen=True)
class RegionMap:
    """Named disjoint landmark-index groups (ears, eyes, ...)."""

    regions: dict[str, tuple[int, ...]]

    def __post_init__(self):
        seen: set[int] = set()
        for name, idx in self.regions.items():
            if not idx:
                raise MetricError(f"region {name!r} is empty")
            s = set(idx)
            if s & seen:
                raise MetricError(f"region {name!r} overlaps another region")
            seen |= s

    @classmethod
    def from_file(cls, path: str | Path) -> "RegionMap":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls({name: tuple(int(i) for i in idx) for name, idx in data.items()})

    def names(self) -> list[str]:
        return list(self.regions)


def _check_pair(pred: LandmarkSet, gt: LandmarkSet) -> None:
    if len(pred) != len(gt):
        raise MetricError(f"landmark count mismatch: pred {len(pred)} vs gt {len(gt)}")
    if len(gt) == 0:
        raise MetricError("empty landmark sets")


def nme(pred: LandmarkSet, gt: LandmarkSet,
        norm: Normalizer = Normalizer()) -> float:
    """Normalized mean error in percent."""
    _check_pair(pred, gt)
    d = norm.resolve(gt)
    errors = np.linalg.norm(pred.xy - gt.xy, axis=1)
    return float(100.0 * errors.mean() / d)


def per_region_nme(pred: LandmarkSet, gt: LandmarkSet, regions: RegionMap,
                   norm: Normalizer = Normalizer()) -> dict[str, float]:
    """NME restricted to each region's indices, same d as the full-set NME."""
    _check_pair(pred, gt)
    d = norm.resolve(gt)
    errors = np.linalg.norm(pred.xy - gt.xy, axis=1)
    out = {}
    for name, idx in regions.regions.items():
        sel = np.asarray(idx, dtype=np.int64)
        if sel.max() >= len(gt):
            raise MetricError(f"region {name!r} references landmark {sel.max()} "
                              f"but only {len(gt)} exist")
        out[name] = float(100.0 * errors[sel].mean() / d)
    return out


def failure_rate(per_image: Sequence[float], threshold: float) -> tuple[int, float]:
    """(count, fraction) of entries strictly above the threshold."""
    if threshold <= 0:
        raise MetricError(f"threshold must be positive, got {threshold}")
    values = list(per_image)
    if not values:
        raise MetricError("failure rate of an empty list")
    count = sum(1 for v in values if v > threshold)
    return count, count / len(values)


def mask_iou(a: BinaryMask, b: BinaryMask) -> float:
    """Intersection over union of two binary masks of equal size."""
    if (a.width, a.height) != (b.width, b.height):
        raise MetricError(
            f"mask dimensions differ: {a.width}x{a.height} vs {b.width}x{b.height}"
        )
    inter = int(np.logical_and(a.bits, b.bits).sum())
    union = int(np.logical_or(a.bits, b.bits).sum())
    if union == 0:
        raise MetricError("IoU undefined: both masks are empty")
    return inter / union


@dataclass
class MetricsReport:
    """Aggregated metrics for one experiment configuration."""

    config_tag: str
    per_image: dict[str, float]
    nme: float
    fr_count: int
    fr_fraction: float
    threshold: float
    per_region: Optional[dict[str, float]] = None
    iou: Optional[float] = None

    def to_dict(self) -> dict:
        d: dict = {
            "config_tag": self.config_tag,
            "nme": self.nme,
            "fr_count": self.fr_count,
            "fr_fraction": self.fr_fraction,
            "threshold": self.threshold,
            "per_image": {k: self.per_image[k] for k in sorted(self.per_image)},
        }
        if self.per_region is not None:
            d["per_region"] = self.per_region
        if self.iou is not None:
            d["iou"] = self.iou
        return d

    def save(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(
            json.dumps(self.to_dict(), indent=2, sort_keys=False) + "\n",
            encoding="utf-8",
        )

    @classmethod
    def load(cls, path: str | Path) -> "MetricsReport":
        d = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(
            config_tag=d["config_tag"],
            per_image=dict(d["per_image"]),
            nme=d["nme"],
            fr_count=d["fr_count"],
            fr_fraction=d["fr_fraction"],
            threshold=d["threshold"],
            per_region=d.get("per_region"),
            iou=d.get("iou"),
        )


def aggregate(tag: str, per_image: Mapping[str, float],
              threshold: float = FAILURE_THRESHOLD_DEFAULT,
              per_region: Optional[Mapping[str, Mapping[str, float]]] = None,
              ious: Optional[Mapping[str, float]] = None) -> MetricsReport:
    """Reduce per-image values into a MetricsReport (macro-average, id order).

    ``per_region`` maps image id to that image's region NMEs; ``ious`` maps
    image id to that image's mask IoU. Reductions iterate ids in sorted
    order so parallel producers cannot change the result.
    """
    if not per_image:
        raise MetricError("aggregate of an empty per-image map")
    ids = sorted(per_image)
    values = [float(per_image[i]) for i in ids]
    count, fraction = failure_rate(values, threshold)
    region_means: Optional[dict[str, float]] = None
    if per_region:
        names: list[str] = list(next(iter(per_region.values())).keys())
        region_means = {}
        for name in names:
            region_means[name] = float(
                np.mean([per_region[i][name] for i in ids if i in per_region])
            )
    iou_mean = float(np.mean([ious[i] for i in sorted(ious)])) if ious else None
    return MetricsReport(
        config_tag=tag,
        per_image={i: float(per_image[i]) for i in ids},
        nme=float(np.mean(values)),
        fr_count=count,
        fr_fraction=fraction,
        threshold=threshold,
        per_region=region_means,
        iou=iou_mean,
    )


class PredictionSet:
    """Predicted landmarks keyed by image id.

    Persisted in the same line-delimited format as manifests: a header line
    ``{"kind": "predictions", "gt_manifest": ..., "landmark_count": N}``
    followed by one ``{"id", "landmarks"}`` object per line.
    """

    def __init__(self, entries: Mapping[str, LandmarkSet],
                 gt_manifest: str = "", landmark_count: Optional[int] = None):
        self.entries = dict(entries)
        self.gt_manifest = gt_manifest
        if landmark_count is None and self.entries:
            landmark_count = len(next(iter(self.entries.values())))
        self.landmark_count = landmark_count or 0
        for rid, lms in self.entries.items():
            if len(lms) != self.landmark_count:
                raise MetricError(
                    f"prediction {rid!r} has {len(lms)} landmarks, "
                    f"expected {self.landmark_count}"
                )

    def __len__(self) -> int:
        return len(self.entries)

    def __getitem__(self, rid: str) -> LandmarkSet:
        return self.entries[rid]

    def __contains__(self, rid: str) -> bool:
        return rid in self.entries

    def save(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        header = {
            "kind": "predictions",
            "gt_manifest": self.gt_manifest,
            "landmark_count": self.landmark_count,
        }
        lines = [json.dumps(header, separators=(",", ":"))]
        for rid in sorted(self.entries):
            lines.append(json.dumps(
                {"id": rid, "landmarks": self.entries[rid].to_list()},
                separators=(",", ":"),
            ))
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "PredictionSet":
        path = Path(path)
        lines = [ln for ln in path.read_text(encoding="utf-8").splitlines() if ln.strip()]
        if not lines:
            raise ManifestParseError(f"{path}: empty prediction file")
        try:
            header = json.loads(lines[0])
            if header.get("kind") != "predictions":
                raise ManifestParseError(f"{path}: not a prediction file")
            entries = {}
            for line in lines[1:]:
                d = json.loads(line)
                entries[str(d["id"])] = LandmarkSet(np.array(d["landmarks"], dtype=np.float64))
        except (json.JSONDecodeError, KeyError, ValueError) as e:
            raise ManifestParseError(f"{path}: {e}") from e
        return cls(entries, gt_manifest=header.get("gt_manifest", ""),
                   landmark_count=header.get("landmark_count"))


def score_predictions(predictions: PredictionSet, gt: DatasetManifest,
                      norm: Normalizer = Normalizer()) -> dict[str, float]:
    """Per-image NME for every ground-truth record; missing ids are an error."""
    out = {}
    for rec in gt.records:
        if rec.id not in predictions:
            raise MetricError(f"missing prediction for record {rec.id!r}")
        out[rec.id] = nme(predictions[rec.id], rec.landmarks, norm)
    return out
