"""Declarative experiment configurations and deterministic orchestration.

A configuration names its training-set expression (unions over the
original set, stylized replacements, supervised-selection variants, and a
rotation control), the test source, the style backend, and every seed the
pipeline consumes. Running one executes split, optional face cropping,
ranking/selection, pairing, style jobs, detector fitting, and evaluation,
persisting every derived manifest with lineage. Reruns with the same seeds
reproduce all artifacts byte for byte with the classical backends.
"""

from __future__ import annotations

import json
import logging
import re
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .dataset import (
    DatasetManifest,
    ImageRecord,
    Lineage,
    save_manifest,
    stable_seed,
    split_dataset,
    union_manifests,
    validate_record,
)
from .detector import DetectorBackend, fit_mean_shape, evaluate
from .errors import PipelineError, StylemarkError
from .geometry import crop_image, apply_transform, hull_mask, landmark_bbox, rotate_augment
from .images import load_image, load_mask, save_image
from .metrics import (
    MetricsReport,
    Normalizer,
    RegionMap,
    aggregate,
    mask_iou,
    per_region_nme,
    score_predictions,
)
from .report import PlotSpec, TableRow, emit_plot, emit_table
from .selection import Pairing, StylePool, assign_styles, make_test_st, rank_by_nme, sst_select
from .style import StyleRunOutcome, jobs_from_pairs, run_jobs

log = logging.getLogger(__name__)

_SST_RE = re.compile(r"^TrainSST\((\d+)\)$")
TRAIN_SOURCES = ("Train", "TrainST", "TrainRotated")


@dataclass(frozen=True)
class Seeds:
    split: int = 7
    pairing: int = 11
    rotation: int = 13

    def to_dict(self) -> dict:
        return {"split": self.split, "pairing": self.pairing, "rotation": self.rotation}

    @classmethod
    def from_dict(cls, d: dict) -> "Seeds":
        return cls(**{k: int(v) for k, v in d.items()})


@dataclass
class ExperimentConfig:
    name: str
    train_source: tuple[str, ...] = ("Train",)
    test_source: str = "Test"
    backend: str = "color-stat"
    detector: str = "mean-shape"
    preprocessing: str = "CF-ST"
    seeds: Seeds = field(default_factory=Seeds)
    n_train: int = 500
    n_test: int = 100
    normalizer: Normalizer = field(default_factory=Normalizer)
    region_map: Optional[RegionMap] = None
    failure_threshold: float = 10.0
    margin: float = 0.10
    forbid_self: bool = True
    parallelism: int = 1
    rotation_range: float = 30.0
    kind: str = "train-eval"
    study_pairs: int = 30

    def __post_init__(self):
        if self.kind not in ("train-eval", "preprocessing-study"):
            raise StylemarkError(f"unknown experiment kind {self.kind!r}")
        if self.test_source not in ("Test", "TestST"):
            raise StylemarkError(f"unknown test source {self.test_source!r}")
        if self.preprocessing not in ("CF-ST", "FB-ST"):
            raise StylemarkError(f"unknown preprocessing {self.preprocessing!r}")
        for token in self.train_source:
            if token not in TRAIN_SOURCES and not _SST_RE.match(token):
                raise StylemarkError(f"unknown train source {token!r}")

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "kind": self.kind,
            "train_source": list(self.train_source),
            "test_source": self.test_source,
            "backend": self.backend,
            "detector": self.detector,
            "preprocessing": self.preprocessing,
            "seeds": self.seeds.to_dict(),
            "n_train": self.n_train,
            "n_test": self.n_test,
            "normalizer": self.normalizer.to_dict(),
            "region_map": dict(self.region_map.regions) if self.region_map else None,
            "failure_threshold": self.failure_threshold,
            "margin": self.margin,
            "forbid_self": self.forbid_self,
            "parallelism": self.parallelism,
            "rotation_range": self.rotation_range,
            "study_pairs": self.study_pairs,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        if "seeds" in d:
            d["seeds"] = Seeds.from_dict(d["seeds"])
        if d.get("normalizer"):
            d["normalizer"] = Normalizer.from_dict(d["normalizer"])
        region = d.get("region_map")
        if region:
            d["region_map"] = RegionMap(
                {name: tuple(int(i) for i in idx) for name, idx in region.items()}
            )
        else:
            d["region_map"] = None
        if "train_source" in d:
            d["train_source"] = tuple(d["train_source"])
        return cls(**d)

    def save(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=2) + "\n",
                        encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass
class StudyReport:
    """Cropped-face vs full-frame preprocessing comparison."""

    n_pairs: int
    modes: dict[str, dict]  # mode -> {"mean_iou": float, "loss_checkpoints": {...}}

    def to_dict(self) -> dict:
        return {"n_pairs": self.n_pairs, "modes": self.modes}


@dataclass
class ExperimentResult:
    name: str
    report: Optional[MetricsReport]
    study: Optional[StudyReport]
    provenance: list[str]
    wall_time: float
    out_dir: Path


def builtin_configs(n_train: int = 500, n_test: int = 100,
                    backend: str = "color-stat", seeds: Seeds = Seeds(),
                    parallelism: int = 1,
                    region_map: Optional[RegionMap] = None) -> list[ExperimentConfig]:
    """The standard sweep: replacement, selection, augmentation, controls.

    Returns twelve configurations: the baseline evaluated on the original
    and stylized test sets, full stylized replacement, supervised
    replacement at pool sizes 1/10/250, the rotation control, the four
    augmentation unions, and the cropped-vs-full preprocessing study.
    """
    base = dict(backend=backend, seeds=seeds, n_train=n_train, n_test=n_test,
                parallelism=parallelism, region_map=region_map)
    configs = [
        ExperimentConfig(name="Baseline", train_source=("Train",), **base),
        ExperimentConfig(name="Baseline-TestST", train_source=("Train",),
                         test_source="TestST", **base),
        ExperimentConfig(name="TrainST", train_source=("TrainST",), **base),
        ExperimentConfig(name="TrainSST(1)", train_source=("TrainSST(1)",), **base),
        ExperimentConfig(name="TrainSST(10)", train_source=("TrainSST(10)",), **base),
        ExperimentConfig(name="TrainSST(250)", train_source=("TrainSST(250)",), **base),
        ExperimentConfig(name="Train+TrainRotated",
                         train_source=("Train", "TrainRotated"), **base),
        ExperimentConfig(name="Train+TrainST", train_source=("Train", "TrainST"), **base),
        ExperimentConfig(name="Train+TrainSST(1)",
                         train_source=("Train", "TrainSST(1)"), **base),
        ExperimentConfig(name="Train+TrainSST(10)",
                         train_source=("Train", "TrainSST(10)"), **base),
        ExperimentConfig(name="Train+TrainSST(250)",
                         train_source=("Train", "TrainSST(250)"), **base),
        ExperimentConfig(name="CFST-vs-FBST", kind="preprocessing-study", **base),
    ]
    return configs


def crop_manifest(manifest: DatasetManifest, margin: float, out_dir: Path,
                  tag: str) -> DatasetManifest:
    """Crop every record to its landmark square; ids are preserved.

    Writes cropped images under ``out_dir`` and returns a manifest rooted
    there whose lineage stores the exact translation used, so original
    coordinates remain recoverable.
    """
    out_dir = Path(out_dir).resolve()
    images_dir = out_dir / "images"
    images_dir.mkdir(parents=True, exist_ok=True)
    records = []
    for rec in manifest.records:
        image = load_image(manifest.image_path(rec))
        box = landmark_bbox(rec.landmarks, margin)
        cropped, transform = crop_image(image, box)
        rel = f"images/{rec.id}.png"
        save_image(cropped, images_dir / f"{rec.id}.png")
        landmarks = apply_transform(rec.landmarks, transform)
        records.append(replace(
            rec,
            image_path=rel,
            landmarks=landmarks,
            width=cropped.shape[1],
            height=cropped.shape[0],
            mask_path=None,
            lineage=Lineage(
                parent_id=rec.id,
                transform_id=f"crop:margin={margin:g}",
                transform=transform.coefficients(),
            ),
        ))
    out = DatasetManifest(
        records=records,
        seed=manifest.seed,
        tag=tag,
        parent=manifest.tag,
        landmark_count=manifest.landmark_count,
        root=out_dir,
    )
    out.validate()
    return out


def build_rotated(train: DatasetManifest, rotation_seed: int, rotation_range: float,
                  out_dir: Path, tag: str = "TrainRotated") -> DatasetManifest:
    """One rotated duplicate per training image, seeded uniform angle.

    Records whose landmarks leave the canvas are dropped with a warning;
    silent exclusion would corrupt downstream cardinality accounting, so
    the drop count is logged explicitly.
    """
    out_dir = Path(out_dir).resolve()
    images_dir = out_dir / "images"
    images_dir.mkdir(parents=True, exist_ok=True)
    records = []
    dropped = 0
    for rec in train.records:
        rng = np.random.default_rng(stable_seed(rotation_seed, "rotate", rec.id))
        angle = float(rng.uniform(-rotation_range, rotation_range))
        image = load_image(train.image_path(rec))
        new_id = f"{rec.id}::rot"
        rel = f"images/{new_id}.png"
        derived, pixels = rotate_augment(rec, image, angle, new_id=new_id,
                                         new_image_path=rel)
        violations = validate_record(derived, train.landmark_count)
        if violations:
            dropped += 1
            log.warning("dropping rotated %s (angle %.2f): %s",
                        rec.id, angle, "; ".join(violations))
            continue
        save_image(pixels, images_dir / f"{new_id}.png")
        records.append(derived)
    if dropped:
        log.warning("rotation augmentation dropped %d/%d records",
                    dropped, len(train.records))
    return DatasetManifest(
        records=records,
        seed=rotation_seed,
        tag=tag,
        parent=train.tag,
        landmark_count=train.landmark_count,
        root=out_dir,
    )


def _stylize(pairing: Pairing, contents: DatasetManifest, styles: DatasetManifest,
             config: ExperimentConfig, workdir: Path, tag: str) -> StyleRunOutcome:
    jobs = jobs_from_pairs(pairing.pairs, contents, styles,
                           global_seed=pairing.seed, job_prefix=tag)
    return run_jobs(jobs, config.backend, config.parallelism, workdir, tag,
                    contents, styles)


def _full_pool(train: DatasetManifest) -> StylePool:
    return StylePool(n=len(train.records), members=tuple(train.ids()))


def _sst_pool(train: DatasetManifest, n: int, config: ExperimentConfig) -> StylePool:
    """Rank training images by the baseline detector's own accuracy on them."""
    backend = DetectorBackend.parse(config.detector)
    model = fit_mean_shape(train) if backend.kind == "mean-shape" else None
    predictions = evaluate(backend, train, model=model)
    ranked = rank_by_nme(predictions, train, config.normalizer)
    return sst_select(ranked, n)


def _build_train_set(config: ExperimentConfig, train: DatasetManifest,
                     workdir: Path) -> DatasetManifest:
    parts = []
    for token in config.train_source:
        if token == "Train":
            parts.append(train)
            continue
        if token == "TrainRotated":
            parts.append(build_rotated(train, config.seeds.rotation,
                                       config.rotation_range, workdir))
            continue
        m = _SST_RE.match(token)
        if token == "TrainST":
            pool = _full_pool(train)
        elif m:
            pool = _sst_pool(train, int(m.group(1)), config)
        else:
            raise StylemarkError(f"unknown train source {token!r}")
        pairing = assign_styles(train, pool, config.seeds.pairing, config.forbid_self)
        outcome = _stylize(pairing, train, train, config, workdir, token)
        parts.append(outcome.manifest)
    if len(parts) == 1:
        return parts[0]
    return union_manifests("+".join(config.train_source), parts)


def _build_test_set(config: ExperimentConfig, train: DatasetManifest,
                    test: DatasetManifest, workdir: Path) -> DatasetManifest:
    if config.test_source == "Test":
        return test
    pairing = make_test_st(test, train, config.seeds.pairing)
    outcome = _stylize(pairing, test, train, config, workdir, "TestST")
    return outcome.manifest


def _stage(name: str):
    """Tag failures with the pipeline stage that raised them."""
    class _StageContext:
        def __enter__(self):
            return self

        def __exit__(self, exc_type, exc, tb):
            if exc is not None and isinstance(exc, Exception) \
                    and not isinstance(exc, PipelineError):
                raise PipelineError(name, exc) from exc
            return False

    return _StageContext()


def run(config: ExperimentConfig, root: DatasetManifest,
        out_dir: str | Path) -> ExperimentResult:
    """Execute one configuration end to end, persisting every artifact."""
    started = time.monotonic()
    out_dir = Path(out_dir) / config.name
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "resolved_config.json").write_text(
        json.dumps(config.to_dict(), indent=2) + "\n", encoding="utf-8"
    )
    if config.kind == "preprocessing-study":
        return _run_study(config, root, out_dir, started)

    with _stage("split"):
        train0, test0 = split_dataset(root, config.n_train, config.n_test,
                                      config.seeds.split)
    with _stage("preprocess"):
        if config.preprocessing == "CF-ST":
            train = crop_manifest(train0, config.margin, out_dir / "cropped_train",
                                  tag="Train")
            test = crop_manifest(test0, config.margin, out_dir / "cropped_test",
                                 tag="Test")
        else:
            train, test = train0, test0
    with _stage("build-train-set"):
        train_set = _build_train_set(config, train, out_dir)
    with _stage("build-test-set"):
        test_set = _build_test_set(config, train, test, out_dir)
    with _stage("persist-manifests"):
        manifests_dir = out_dir / "manifests"
        save_manifest(train_set, manifests_dir / "train_set.jsonl")
        save_manifest(test_set, manifests_dir / "test_set.jsonl")
    with _stage("detect"):
        backend = DetectorBackend.parse(config.detector)
        model = fit_mean_shape(train_set) if backend.kind == "mean-shape" else None
        predictions = evaluate(backend, test_set, model=model)
    with _stage("score"):
        per_image = score_predictions(predictions, test_set, config.normalizer)
        per_region = None
        if config.region_map is not None:
            gt_by_id = test_set.by_id()
            per_region = {
                rid: per_region_nme(predictions[rid], gt_by_id[rid].landmarks,
                                    config.region_map, config.normalizer)
                for rid in sorted(per_image)
            }
        report = aggregate(config.name, per_image, config.failure_threshold,
                           per_region=per_region)
    with _stage("persist-report"):
        reports_dir = out_dir / "reports"
        reports_dir.mkdir(parents=True, exist_ok=True)
        report.save(reports_dir / "metrics.json")
        predictions.save(reports_dir / "predictions.jsonl")
        if report.per_region:
            spec = PlotSpec(
                kind="bar_per_region",
                series={config.name: [report.per_region[r] for r in report.per_region]},
                labels=list(report.per_region),
                output_path=out_dir / "plots" / "per_region.png",
                title="NME by region",
            )
            emit_plot(spec)
    wall = time.monotonic() - started
    provenance = [root.tag, train_set.tag, test_set.tag]
    return ExperimentResult(name=config.name, report=report, study=None,
                            provenance=provenance, wall_time=wall, out_dir=out_dir)


def _record_mask(manifest: DatasetManifest, rec: ImageRecord):
    if rec.mask_path:
        return load_mask(manifest.mask_path(rec))
    return hull_mask(rec.landmarks, rec.width, rec.height)


def _run_study(config: ExperimentConfig, root: DatasetManifest, out_dir: Path,
               started: float) -> ExperimentResult:
    """Run the same seeded pairs through both preprocessing modes.

    Structural preservation is scored as IoU between each content's mask
    and its stylized output's mask. Without externally supplied
    segmentation masks both sides fall back to the landmark hull proxy,
    which the classical backends preserve exactly; the comparison becomes
    informative when an external backend and real masks are plugged in.
    Loss checkpoints are collected from backends that emit loss curves.
    """
    with _stage("split"):
        train0, _ = split_dataset(root, config.n_train, config.n_test,
                                  config.seeds.split)
    rng = np.random.default_rng(stable_seed(config.seeds.pairing, "study"))
    ids = train0.ids()
    n_pairs = min(config.study_pairs, len(ids))
    content_ids = [ids[i] for i in rng.choice(len(ids), size=n_pairs, replace=False)]
    pairs = []
    for cid in content_ids:
        others = [i for i in ids if i != cid]
        style_id = others[int(rng.integers(len(others)))] if others else cid
        pairs.append((cid, style_id))

    modes: dict[str, dict] = {}
    loss_series: dict[str, list] = {}
    for mode in ("CF-ST", "FB-ST"):
        with _stage(f"study-{mode}"):
            if mode == "CF-ST":
                prepared = crop_manifest(train0, config.margin,
                                         out_dir / "cropped_train", tag="Train")
            else:
                prepared = train0
            pairing = Pairing(pairs=tuple(pairs), seed=config.seeds.pairing,
                              pool_tag="study")
            outcome = _stylize(pairing, prepared, prepared, config,
                               out_dir / mode.lower(), f"study-{mode}")
            by_id = prepared.by_id()
            ious = []
            for result, rec in zip(outcome.results, outcome.manifest.records):
                content = by_id[rec.lineage.parent_id]
                ious.append(mask_iou(_record_mask(prepared, content),
                                     _record_mask(outcome.manifest, rec)))
            checkpoints = {}
            curves = [r.loss_curve for r in outcome.results if r.loss_curve]
            for epoch in (1000, 4000):
                totals = [c.total_at(epoch) for c in curves]
                totals = [t for t in totals if t is not None]
                checkpoints[str(epoch)] = float(np.mean(totals)) if totals else None
            if curves:
                loss_series[mode] = [(e, t) for (e, t, *_rest) in curves[0].rows]
            modes[mode] = {
                "mean_iou": float(np.mean(ious)) if ious else None,
                "loss_checkpoints": checkpoints,
                "n_failed": len(outcome.failures),
            }
    study = StudyReport(n_pairs=n_pairs, modes=modes)
    reports_dir = out_dir / "reports"
    reports_dir.mkdir(parents=True, exist_ok=True)
    (reports_dir / "study.json").write_text(
        json.dumps(study.to_dict(), indent=2) + "\n", encoding="utf-8"
    )
    if loss_series:
        emit_plot(PlotSpec(kind="line_loss", series=loss_series,
                           output_path=out_dir / "plots" / "loss_curves.png",
                           title="Loss by epoch"))
    wall = time.monotonic() - started
    return ExperimentResult(name=config.name, report=None, study=study,
                            provenance=[root.tag, "Train"], wall_time=wall,
                            out_dir=out_dir)


def compare(results: Sequence[ExperimentResult]) -> list[TableRow]:
    """NME/FR table with degradation and retention relative to the baseline.

    Degradation is 100 * (nme - baseline) / baseline; retention is
    100 * baseline / nme, capped at 100 for configurations at or better
    than the baseline.
    """
    scored = [r for r in results if r.report is not None]
    baseline = next((r for r in scored if r.name == "Baseline"), None)
    if baseline is None:
        raise StylemarkError("comparison requires a result named 'Baseline'")
    base_nme = baseline.report.nme
    rows = []
    for r in scored:
        nme_val = r.report.nme
        delta = 100.0 * (nme_val - base_nme) / base_nme
        retention = min(100.0 * base_nme / nme_val, 100.0) if nme_val > 0 else 100.0
        rows.append(TableRow(
            configuration=r.name,
            nme=nme_val,
            fr=r.report.fr_count,
            delta_pct=delta,
            retention_pct=retention,
        ))
    return rows


def run_sweep(configs: Sequence[ExperimentConfig], root: DatasetManifest,
              out_dir: str | Path) -> list[ExperimentResult]:
    """Run every config, then emit the comparison table and summary plot."""
    out_dir = Path(out_dir)
    results = [run(cfg, root, out_dir) for cfg in configs]
    scored = [r for r in results if r.report is not None]
    if any(r.name == "Baseline" for r in scored):
        rows = compare(results)
        emit_table(rows, out_dir / "comparison")
        emit_plot(PlotSpec(
            kind="bar_nme_fr",
            series={"nme": [r.nme for r in rows],
                    "fr": [float(r.fr) for r in rows]},
            labels=[r.configuration for r in rows],
            output_path=out_dir / "comparison_nme_fr.png",
            title="NME and FR by configuration",
        ))
    return results
