"""Pluggable landmark detectors and the built-in mean-shape baseline.

The baseline fits the pointwise mean of centroid/scale-normalized training
shapes and predicts by dropping that shape into each record's ground-truth
landmark bbox (centroid to bbox center, unit RMS radius to half the bbox
diagonal). It never reads pixels, which makes it a deterministic exerciser
for the evaluation pipeline rather than a fair detector; stylized pixels
can only influence its scores through annotation geometry.
"""

from __future__ import annotations

import shlex
import subprocess
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .dataset import DatasetManifest, LandmarkSet, save_manifest
from .errors import DetectorError, ProtocolError
from .metrics import PredictionSet


@dataclass(frozen=True)
class MeanShapeModel:
    """Mean landmark shape in a canonical frame (centroid 0, RMS radius 1)."""

    mean_shape: np.ndarray  # (N, 2)

    def __post_init__(self):
        object.__setattr__(self, "mean_shape", np.asarray(self.mean_shape, dtype=np.float64))

    @property
    def landmark_count(self) -> int:
        return len(self.mean_shape)


def _normalize_shape(xy: np.ndarray) -> np.ndarray:
    centered = xy - xy.mean(axis=0)
    rms = float(np.sqrt((centered ** 2).sum(axis=1).mean()))
    if rms <= 1e-12:
        raise DetectorError("degenerate shape: zero RMS radius")
    return centered / rms


def _align_rotation(shape: np.ndarray, reference: np.ndarray) -> np.ndarray:
    """Optimal rotation of a normalized shape onto the reference (Kabsch)."""
    h = shape.T @ reference
    u, _, vt = np.linalg.svd(h)
    d = np.sign(np.linalg.det(u @ vt))
    r = u @ np.diag([1.0, d]) @ vt
    return shape @ r


def fit_mean_shape(train: DatasetManifest, procrustes: bool = False) -> MeanShapeModel:
    """Average the normalized training shapes.

    Each shape is translated to centroid zero and scaled to RMS radius one;
    with ``procrustes`` every shape is additionally rotated onto the first
    shape before averaging. The mean is re-normalized so the model itself
    satisfies the canonical-frame invariant.
    """
    if not train.records:
        raise DetectorError("cannot fit a mean shape on an empty manifest")
    shapes = []
    reference: Optional[np.ndarray] = None
    for rec in train.records:
        shape = _normalize_shape(rec.landmarks.xy)
        if procrustes:
            if reference is None:
                reference = shape
            else:
                shape = _align_rotation(shape, reference)
        shapes.append(shape)
    counts = {s.shape[0] for s in shapes}
    if len(counts) != 1:
        raise DetectorError(f"inconsistent landmark counts in train set: {sorted(counts)}")
    mean = np.mean(shapes, axis=0)
    return MeanShapeModel(mean_shape=_normalize_shape(mean))


def predict(model: MeanShapeModel, landmarks: LandmarkSet) -> LandmarkSet:
    """Place the mean shape into the record's landmark bbox frame."""
    xy = landmarks.xy
    if len(xy) != model.landmark_count:
        raise DetectorError(
            f"record has {len(xy)} landmarks, model expects {model.landmark_count}"
        )
    lo = xy.min(axis=0)
    hi = xy.max(axis=0)
    diag = float(np.hypot(*(hi - lo)))
    if diag <= 1e-12:
        raise DetectorError("degenerate bbox: all landmarks identical")
    center = (lo + hi) / 2.0
    placed = center + model.mean_shape * (diag / 2.0)
    return LandmarkSet(placed)


@dataclass(frozen=True)
class DetectorBackend:
    """Builtin mean-shape detector or an external prediction command.

    External detectors are invoked once per manifest as
    ``detector_cmd <manifest_path> <output_predictions_path>`` and must
    write a prediction file covering every record; exit 0 means success.
    """

    kind: str = "mean-shape"
    command: str = ""
    procrustes: bool = False

    @classmethod
    def parse(cls, selector: str, procrustes: bool = False) -> "DetectorBackend":
        if selector == "mean-shape":
            return cls(kind="mean-shape", procrustes=procrustes)
        if selector.startswith("external:"):
            return cls(kind="external", command=selector[len("external:"):])
        raise DetectorError(f"unknown detector selector {selector!r}")


def evaluate(backend: DetectorBackend, manifest: DatasetManifest,
             model: Optional[MeanShapeModel] = None,
             workdir: Optional[Path] = None) -> PredictionSet:
    """Produce one prediction per record in the manifest."""
    if backend.kind == "mean-shape":
        if model is None:
            raise DetectorError("builtin detector needs a fitted model")
        entries = {rec.id: predict(model, rec.landmarks) for rec in manifest.records}
        return PredictionSet(entries, gt_manifest=manifest.tag,
                             landmark_count=manifest.landmark_count)
    return _evaluate_external(backend, manifest, workdir)


def _evaluate_external(backend: DetectorBackend, manifest: DatasetManifest,
                       workdir: Optional[Path]) -> PredictionSet:
    with tempfile.TemporaryDirectory(dir=workdir) as tmp:
        tmp_path = Path(tmp)
        manifest_path = tmp_path / "eval.jsonl"
        predictions_path = tmp_path / "predictions.jsonl"
        save_manifest(manifest, manifest_path)
        argv = shlex.split(backend.command) + [str(manifest_path), str(predictions_path)]
        try:
            proc = subprocess.run(argv, capture_output=True, text=True)
        except OSError as e:
            raise DetectorError(f"cannot launch detector {argv[0]!r}: {e}") from e
        if proc.returncode != 0:
            raise DetectorError(
                f"detector exited with code {proc.returncode}: {proc.stderr.strip()}"
            )
        if not predictions_path.exists():
            raise ProtocolError("detector", f"no prediction file at {predictions_path}")
        predictions = PredictionSet.load(predictions_path)
        for rec in manifest.records:
            if rec.id not in predictions:
                raise ProtocolError("detector", f"missing prediction for record {rec.id!r}")
        return predictions
