"""Exception hierarchy shared by all stylemark modules."""

from __future__ import annotations


class StylemarkError(Exception):
    """Base class for all toolkit errors."""


class ManifestParseError(StylemarkError):
    """A manifest or prediction file could not be parsed."""


class RecordValidationError(StylemarkError):
    """A record violated manifest invariants.

    Carries the offending record id and the list of violations so callers
    can report exactly what failed.
    """

    def __init__(self, record_id: str, violations: list[str]):
        self.record_id = record_id
        self.violations = list(violations)
        detail = "; ".join(violations)
        super().__init__(f"record {record_id!r}: {detail}")


class GeometryError(StylemarkError):
    """Degenerate or singular geometric input."""


class MetricError(StylemarkError):
    """A metric could not be evaluated (zero normalizer, shape mismatch, ...)."""


class LossCurveError(StylemarkError):
    """A loss curve file was malformed or violated monotonicity."""


class BackendError(StylemarkError):
    """An external backend process failed (nonzero exit or timeout)."""

    def __init__(self, job_id: str, message: str, stderr: str = ""):
        self.job_id = job_id
        self.stderr = stderr
        super().__init__(f"job {job_id!r}: {message}")


class ProtocolError(StylemarkError):
    """A backend violated the file-based job protocol."""

    def __init__(self, job_id: str, message: str):
        self.job_id = job_id
        super().__init__(f"job {job_id!r}: {message}")


class AllJobsFailedError(StylemarkError):
    """Every job in a style run failed."""


class SelectionError(StylemarkError):
    """Ranking or pairing preconditions were violated."""


class DetectorError(StylemarkError):
    """Detector fitting or prediction failed."""


class PipelineError(StylemarkError):
    """An experiment stage failed; wraps the original error with a stage tag."""

    def __init__(self, stage: str, cause: Exception):
        self.stage = stage
        self.cause = cause
        super().__init__(f"[{stage}] {cause}")
