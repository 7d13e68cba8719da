"""Style-transfer backends and the deterministic job scheduler.

Two classical backends run in-process so the whole pipeline works without
any neural engine: per-channel statistics transfer in a decorrelated
opponent log-color space, and per-channel histogram matching. Heavier
engines plug in through a file-based protocol: the scheduler writes
``jobs/<job_id>/job.manifest`` (JSON with content_path, style_path,
output_path, params, seed), invokes ``backend_cmd <manifest>`` once, and
expects the stylized image at output_path plus an optional ``loss.csv``
with header ``epoch,total,appearance,structure,identity``. Exit 0 means
success; anything else fails the job with diagnostics from stderr.

Whatever the backend does to pixels, landmark coordinates are copied from
the content record untouched. Downstream selection and metrics exist to
measure the consequences of that choice; this module never edits
annotations.
"""

from __future__ import annotations

import json
import logging
import math
import shlex
import subprocess
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .dataset import (
    DatasetManifest,
    ImageRecord,
    LandmarkSet,
    Lineage,
    Split,
    stable_seed,
)
from .errors import (
    AllJobsFailedError,
    BackendError,
    LossCurveError,
    ProtocolError,
    StylemarkError,
)
from .geometry import AffineTransform
from .images import load_image, save_image

log = logging.getLogger(__name__)

LOSS_CSV_HEADER = "epoch,total,appearance,structure,identity"

# Opponent log-color transform (RGB -> LMS cone space -> log -> lab-like
# opponent axes). Matching means and variances per axis here moves color
# statistics without the hue drift that raw-RGB matching produces.
_RGB_TO_LMS = np.array([
    [0.3811, 0.5783, 0.0402],
    [0.1967, 0.7244, 0.0782],
    [0.0241, 0.1288, 0.8444],
])
_LMS_TO_RGB = np.linalg.inv(_RGB_TO_LMS)
_LMS_TO_OPP = np.diag([1 / np.sqrt(3), 1 / np.sqrt(6), 1 / np.sqrt(2)]) @ np.array([
    [1.0, 1.0, 1.0],
    [1.0, 1.0, -2.0],
    [1.0, -1.0, 0.0],
])
_OPP_TO_LMS = np.linalg.inv(_LMS_TO_OPP)
_LOG_FLOOR = 1e-6


def _to_opponent(rgb: np.ndarray) -> np.ndarray:
    lms = np.maximum(rgb @ _RGB_TO_LMS.T, _LOG_FLOOR)
    return np.log10(lms) @ _LMS_TO_OPP.T


def _from_opponent(opp: np.ndarray) -> np.ndarray:
    lms = np.power(10.0, opp @ _OPP_TO_LMS.T)
    return lms @ _LMS_TO_RGB.T


def color_stat_transfer(content: np.ndarray, style: np.ndarray) -> np.ndarray:
    """Match per-channel mean and std to the style image, geometry untouched.

    Statistics are matched in the opponent log-color space. A zero-variance
    channel (in style or content) falls back to a pure mean shift. uint8
    input yields clipped uint8 output; float input returns the unclipped
    float result so statistics stay exactly checkable.
    """
    if content.size == 0 or style.size == 0:
        raise StylemarkError("empty image")
    quantize = content.dtype == np.uint8
    c = content.reshape(-1, 3).astype(np.float64)
    s = style.reshape(-1, 3).astype(np.float64)
    if quantize:
        c = c / 255.0
        s = s / 255.0
    c_opp = _to_opponent(c)
    s_opp = _to_opponent(s)
    c_mean, c_std = c_opp.mean(axis=0), c_opp.std(axis=0)
    s_mean, s_std = s_opp.mean(axis=0), s_opp.std(axis=0)
    scale = np.where((c_std > 1e-12) & (s_std > 1e-12), s_std / np.maximum(c_std, 1e-12), 1.0)
    out_opp = (c_opp - c_mean) * scale + s_mean
    out = _from_opponent(out_opp).reshape(content.shape)
    if quantize:
        return np.clip(np.rint(out * 255.0), 0, 255).astype(np.uint8)
    return out


def _match_channel(source: np.ndarray, template: np.ndarray) -> np.ndarray:
    src_values, src_inverse, src_counts = np.unique(
        source.ravel(), return_inverse=True, return_counts=True
    )
    tmpl_values, tmpl_counts = np.unique(template.ravel(), return_counts=True)
    src_quantiles = np.cumsum(src_counts) / source.size
    tmpl_quantiles = np.cumsum(tmpl_counts) / template.size
    mapped = np.interp(src_quantiles, tmpl_quantiles, tmpl_values)
    return mapped[src_inverse].reshape(source.shape)


def histogram_match(content: np.ndarray, style: np.ndarray) -> np.ndarray:
    """Per-channel empirical CDF matching (discrete quantile mapping)."""
    if content.size == 0 or style.size == 0:
        raise StylemarkError("empty image")
    quantize = content.dtype == np.uint8
    out = np.empty(content.shape, dtype=np.float64)
    for ch in range(content.shape[2]):
        out[:, :, ch] = _match_channel(
            content[:, :, ch].astype(np.float64), style[:, :, ch].astype(np.float64)
        )
    if quantize:
        return np.clip(np.rint(out), 0, 255).astype(np.uint8)
    return out


@dataclass(frozen=True)
class LossCurve:
    """Training-loss trajectory: (epoch, total, appearance, structure, identity)."""

    rows: tuple[tuple[int, float, float, float, float], ...]

    def __post_init__(self):
        last_epoch = None
        for row in self.rows:
            epoch, *values = row
            if last_epoch is not None and epoch <= last_epoch:
                raise LossCurveError(f"non-monotone epochs: {last_epoch} then {epoch}")
            last_epoch = epoch
            for v in values:
                if not math.isfinite(v) or v < 0:
                    raise LossCurveError(f"loss value {v} at epoch {epoch} is invalid")

    def final_total(self) -> float:
        if not self.rows:
            raise LossCurveError("empty loss curve")
        return self.rows[-1][1]

    def total_at(self, epoch: int) -> Optional[float]:
        for row in self.rows:
            if row[0] == epoch:
                return row[1]
        return None


def parse_loss_curve(path: str | Path) -> LossCurve:
    """Parse a loss.csv; violations are errors, never silently repaired."""
    path = Path(path)
    try:
        raw = path.read_text(encoding="utf-8")
    except OSError as e:
        raise LossCurveError(f"cannot read {path}: {e}") from e
    lines = [ln.strip() for ln in raw.splitlines()]
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    if not lines:
        raise LossCurveError(f"{path}: empty loss curve file")
    if lines[0].replace(" ", "") != LOSS_CSV_HEADER:
        raise LossCurveError(f"{path}: expected header {LOSS_CSV_HEADER!r}, got {lines[0]!r}")
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != 5:
            raise LossCurveError(f"{path}:{lineno}: expected 5 fields, got {len(parts)}")
        try:
            epoch = int(parts[0])
            values = tuple(float(p) for p in parts[1:])
        except ValueError as e:
            raise LossCurveError(f"{path}:{lineno}: {e}") from e
        rows.append((epoch, *values))
    if not rows:
        raise LossCurveError(f"{path}: loss curve has a header but no rows")
    return LossCurve(rows=tuple(rows))


@dataclass(frozen=True)
class StyleJob:
    """One content/style pairing handed to a backend."""

    job_id: str
    content: ImageRecord
    style: ImageRecord
    seed: int
    params: dict = field(default_factory=dict)
    allow_self: bool = False

    def __post_init__(self):
        if self.content.id == self.style.id and not self.allow_self:
            raise StylemarkError(
                f"job {self.job_id!r}: self-styling {self.content.id!r} requires allow_self"
            )


@dataclass
class StyleResult:
    """Output of one style job; landmarks always equal the content's."""

    job_id: str
    output_image_path: Path
    landmarks: LandmarkSet
    backend_id: str
    wall_time: float
    loss_curve: Optional[LossCurve] = None


@dataclass
class JobFailure:
    job_id: str
    error: str


@dataclass
class StyleRunOutcome:
    results: list[StyleResult]
    manifest: DatasetManifest
    failures: list[JobFailure]


class Backend:
    """Backend interface: stylize one prepared job directory."""

    backend_id = "abstract"

    def run(self, job: StyleJob, job_dir: Path, content_path: Path, style_path: Path,
            output_path: Path, timeout: Optional[float]) -> Optional[LossCurve]:
        raise NotImplementedError


class _ClassicalBackend(Backend):
    def __init__(self, backend_id: str, fn: Callable[[np.ndarray, np.ndarray], np.ndarray]):
        self.backend_id = backend_id
        self._fn = fn

    def run(self, job, job_dir, content_path, style_path, output_path, timeout):
        content = load_image(content_path)
        style = load_image(style_path)
        save_image(self._fn(content, style), output_path)
        return None


class ExternalBackend(Backend):
    """Subprocess backend speaking the job.manifest protocol."""

    def __init__(self, command: str):
        if not command.strip():
            raise StylemarkError("external backend command is empty")
        self.command = command
        self.backend_id = f"external:{command}"

    def run(self, job, job_dir, content_path, style_path, output_path, timeout):
        manifest_path = job_dir / "job.manifest"
        argv = shlex.split(self.command) + [str(manifest_path)]
        try:
            proc = subprocess.run(
                argv, capture_output=True, text=True, timeout=timeout,
            )
        except subprocess.TimeoutExpired as e:
            raise BackendError(job.job_id, f"timed out after {timeout}s",
                               stderr=(e.stderr or "")) from e
        except OSError as e:
            raise BackendError(job.job_id, f"cannot launch {argv[0]!r}: {e}") from e
        if proc.returncode != 0:
            raise BackendError(
                job.job_id,
                f"backend exited with code {proc.returncode}",
                stderr=proc.stderr,
            )
        if not output_path.exists():
            raise ProtocolError(job.job_id, f"backend wrote no output image at {output_path}")
        loss_path = job_dir / "loss.csv"
        return parse_loss_curve(loss_path) if loss_path.exists() else None


def make_backend(selector: str) -> Backend:
    """Parse a backend selector: color-stat | hist-match | external:<cmd>."""
    if selector == "color-stat":
        return _ClassicalBackend("color-stat", color_stat_transfer)
    if selector == "hist-match":
        return _ClassicalBackend("hist-match", histogram_match)
    if selector.startswith("external:"):
        return ExternalBackend(selector[len("external:"):])
    raise StylemarkError(f"unknown backend selector {selector!r}")


def _write_job_manifest(job: StyleJob, job_dir: Path, content_path: Path,
                        style_path: Path, output_path: Path) -> Path:
    manifest_path = job_dir / "job.manifest"
    payload = {
        "job_id": job.job_id,
        "content_path": str(content_path),
        "style_path": str(style_path),
        "output_path": str(output_path),
        "params": job.params,
        "seed": int(job.seed),
    }
    manifest_path.write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return manifest_path


def run_external(job: StyleJob, backend_cmd: str, jobs_root: Path,
                 content_root: Path, style_root: Path,
                 timeout: Optional[float] = None) -> StyleResult:
    """Run one job through an external backend command."""
    backend = ExternalBackend(backend_cmd)
    return _run_one(job, backend, Path(jobs_root), Path(content_root),
                    Path(style_root), timeout)


def _run_one(job: StyleJob, backend: Backend, jobs_root: Path, content_root: Path,
             style_root: Path, timeout: Optional[float]) -> StyleResult:
    job_dir = jobs_root / job.job_id
    job_dir.mkdir(parents=True, exist_ok=True)
    content_path = (content_root / job.content.image_path).resolve()
    style_path = (style_root / job.style.image_path).resolve()
    if not content_path.exists():
        raise ProtocolError(job.job_id, f"content image missing: {content_path}")
    if not style_path.exists():
        raise ProtocolError(job.job_id, f"style image missing: {style_path}")
    output_path = job_dir / "output.png"
    _write_job_manifest(job, job_dir, content_path, style_path, output_path)
    started = time.monotonic()
    loss_curve = backend.run(job, job_dir, content_path, style_path, output_path, timeout)
    wall = time.monotonic() - started
    if not output_path.exists():
        raise ProtocolError(job.job_id, f"no output image at {output_path}")
    return StyleResult(
        job_id=job.job_id,
        output_image_path=output_path,
        landmarks=job.content.landmarks,
        backend_id=backend.backend_id,
        wall_time=wall,
        loss_curve=loss_curve,
    )


def jobs_from_pairs(pairs: Sequence[tuple[str, str]], contents: DatasetManifest,
                    styles: DatasetManifest, global_seed: int,
                    params: Optional[dict] = None,
                    job_prefix: str = "job") -> list[StyleJob]:
    """Build StyleJobs from (content_id, style_id) pairs.

    Per-job seeds are a stable hash of (global seed, content id, style id),
    so neither scheduling nor pair order can change any job's randomness.
    """
    content_by_id = contents.by_id()
    style_by_id = styles.by_id()
    jobs = []
    for k, (content_id, style_id) in enumerate(pairs):
        if content_id not in content_by_id:
            raise StylemarkError(f"unknown content id {content_id!r}")
        if style_id not in style_by_id:
            raise StylemarkError(f"unknown style id {style_id!r}")
        jobs.append(StyleJob(
            job_id=f"{job_prefix}-{k:05d}",
            content=content_by_id[content_id],
            style=style_by_id[style_id],
            seed=stable_seed(global_seed, content_id, style_id),
            params=dict(params or {}),
            allow_self=content_id == style_id,
        ))
    return jobs


def run_jobs(jobs: Sequence[StyleJob], backend: Backend | str, parallelism: int,
             workdir: str | Path, tag: str, contents: DatasetManifest,
             styles: Optional[DatasetManifest] = None,
             timeout: Optional[float] = None) -> StyleRunOutcome:
    """Execute all jobs and assemble the derived manifest.

    Failures are isolated per job and reported, not fatal; only an all-fail
    run raises. Results and records are reduced in job-id order, so the
    outcome is identical at any parallelism level for deterministic
    backends.
    """
    if parallelism < 1:
        raise StylemarkError(f"parallelism must be >= 1, got {parallelism}")
    if isinstance(backend, str):
        backend = make_backend(backend)
    styles = styles if styles is not None else contents
    workdir = Path(workdir).resolve()
    jobs_root = workdir / "jobs"
    jobs_root.mkdir(parents=True, exist_ok=True)
    jobs = sorted(jobs, key=lambda j: j.job_id)

    results: dict[str, StyleResult] = {}
    failures: dict[str, JobFailure] = {}

    def _execute(job: StyleJob):
        try:
            return job.job_id, _run_one(job, backend, jobs_root, contents.root,
                                        styles.root, timeout), None
        except Exception as e:  # isolate any per-job failure
            return job.job_id, None, JobFailure(job_id=job.job_id, error=str(e))

    if parallelism == 1 or len(jobs) <= 1:
        outcomes = [_execute(j) for j in jobs]
    else:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            outcomes = list(pool.map(_execute, jobs))
    for job_id, result, failure in outcomes:
        if failure is not None:
            log.warning("style job %s failed: %s", job_id, failure.error)
            failures[job_id] = failure
        else:
            results[job_id] = result

    if jobs and not results:
        raise AllJobsFailedError(
            f"all {len(jobs)} style jobs failed; first error: "
            f"{failures[sorted(failures)[0]].error}"
        )

    job_by_id = {j.job_id: j for j in jobs}
    records = []
    for job_id in sorted(results):
        job = job_by_id[job_id]
        result = results[job_id]
        rel_output = result.output_image_path.relative_to(workdir.resolve())
        records.append(ImageRecord(
            id=f"{job.content.id}::{job_id}",
            image_path=str(rel_output),
            landmarks=result.landmarks,
            width=job.content.width,
            height=job.content.height,
            split=Split.DERIVED,
            mask_path=None,
            lineage=Lineage(
                parent_id=job.content.id,
                transform_id=f"style:{job_id}:{job.style.id}",
                transform=AffineTransform.identity().coefficients(),
            ),
        ))
    manifest = DatasetManifest(
        records=records,
        seed=contents.seed,
        tag=tag,
        parent=contents.tag,
        landmark_count=contents.landmark_count,
        root=workdir.resolve(),
    )
    ordered_results = [results[i] for i in sorted(results)]
    ordered_failures = [failures[i] for i in sorted(failures)]
    if ordered_failures:
        log.warning("style run %s: %d/%d jobs failed", tag, len(ordered_failures), len(jobs))
    return StyleRunOutcome(results=ordered_results, manifest=manifest,
                           failures=ordered_failures)
