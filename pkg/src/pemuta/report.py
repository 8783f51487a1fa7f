"""Reply parsing, holistic aggregation, and report rendering.

Model replies must carry exactly one fenced JSON block with the six dimension
entries (score + justification), an optional model-stated holistic, and
optional feedback. The holistic score recorded in a report is always the
weighted sum of the six dimension scores under the recorded weight profile;
a model-stated holistic is only kept as a discrepancy note in provenance.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Mapping

from .rubric import Dimension, Score, ScoreOutOfRange, WeightProfile

REPORT_SCHEMA_VERSION = 1

# Tolerance for the stored holistic score against the recomputed weighted sum.
HOLISTIC_TOLERANCE = 1e-9

_FENCE_RE = re.compile(r"```(?:json)?[ \t]*\n(.*?)```", re.DOTALL)


class ReportError(Exception):
    """Base class for reply-parsing and report errors."""


class NoStructuredBlock(ReportError):
    def __init__(self, reason: str = "no fenced JSON block found"):
        self.reason = reason
        super().__init__(reason)


class MissingDimension(ReportError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"reply block is missing dimension {name!r}")


class DuplicateDimension(ReportError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"reply block repeats dimension {name!r}")


@dataclass(frozen=True)
class DimensionAssessment:
    dimension: Dimension
    score: Score
    justification: str


@dataclass(frozen=True)
class ParsedReply:
    """The validated content of one model reply."""

    assessments: tuple[DimensionAssessment, ...]
    model_holistic: float | None = None
    feedback: str = ""


@dataclass(frozen=True)
class HolisticOnlyResult:
    """Outcome of the standard (baseline) prompt: a single overall score."""

    source_id: str
    holistic: Score
    provenance: Mapping


@dataclass(frozen=True)
class AssessmentReport:
    source_id: str
    assessments: tuple[DimensionAssessment, ...]
    holistic: Score
    feedback: str
    provenance: Mapping

    def __post_init__(self):
        dims = [a.dimension for a in self.assessments]
        if len(dims) != len(set(dims)) or set(dims) != set(Dimension):
            raise ValueError("report needs exactly one assessment per dimension")
        profile_raw = self.provenance.get("weight_profile")
        if profile_raw is not None:
            profile = WeightProfile.from_dict(profile_raw)
            expected = aggregate_holistic(
                {a.dimension: a.score for a in self.assessments}, profile
            )
            if abs(expected.value - self.holistic.value) > HOLISTIC_TOLERANCE:
                raise ValueError(
                    f"holistic {self.holistic.value!r} deviates from the weighted "
                    f"sum {expected.value!r}"
                )

    def score_of(self, dimension: Dimension) -> Score:
        for a in self.assessments:
            if a.dimension is dimension:
                return a.score
        raise KeyError(dimension)


# ---------------------------------------------------------------------------
# Reply parsing
# ---------------------------------------------------------------------------

class _DuplicateKey(Exception):
    def __init__(self, key: str):
        self.key = key


def _pairs_hook(pairs):
    seen = set()
    for key, _ in pairs:
        if key in seen:
            raise _DuplicateKey(key)
        seen.add(key)
    return dict(pairs)


_DIMENSION_KEYS = {dim.value for dim in Dimension}


def _extract_block(text: str) -> dict:
    """First fenced block that parses as a JSON object; typed error otherwise."""
    for match in _FENCE_RE.finditer(text):
        try:
            payload = json.loads(match.group(1), object_pairs_hook=_pairs_hook)
        except _DuplicateKey as exc:
            if exc.key in _DIMENSION_KEYS:
                raise DuplicateDimension(exc.key) from None
            raise NoStructuredBlock(f"duplicate key {exc.key!r} in reply block") from None
        except json.JSONDecodeError:
            continue
        if isinstance(payload, dict):
            return payload
    raise NoStructuredBlock()


def _require_number(value, name: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise NoStructuredBlock(f"{name} must be a number, got {value!r}")
    return float(value)


def _score_from(value, name: str) -> Score:
    number = _require_number(value, f"score for {name}")
    try:
        return Score(number)
    except ScoreOutOfRange:
        raise ScoreOutOfRange(number, name) from None


def parse_reply(text: str, mode) -> ParsedReply:
    """Parse a model reply for the given prompt mode.

    Composite and staged-synthesis replies yield six dimension assessments
    plus optional holistic and feedback; standard-mode replies carry only
    the holistic number. Every reply either parses or raises exactly one
    typed error.
    """
    mode_value = getattr(mode, "value", mode)
    block = _extract_block(text)
    if mode_value == "standard":
        if "holistic" not in block:
            raise MissingDimension("holistic")
        return ParsedReply(
            assessments=(),
            model_holistic=_score_from(block["holistic"], "holistic").value,
        )

    assessments: list[DimensionAssessment] = []
    for dim in Dimension:
        if dim.value not in block:
            raise MissingDimension(dim.value)
        entry = block[dim.value]
        if not isinstance(entry, dict) or "score" not in entry:
            raise NoStructuredBlock(
                f"entry for {dim.value} must be an object with a score"
            )
        justification = entry.get("justification", "")
        if not isinstance(justification, str) or not justification.strip():
            raise NoStructuredBlock(f"entry for {dim.value} lacks a justification")
        assessments.append(
            DimensionAssessment(
                dimension=dim,
                score=_score_from(entry["score"], dim.value),
                justification=justification.strip(),
            )
        )
    model_holistic = None
    if "holistic" in block:
        model_holistic = _require_number(block["holistic"], "holistic")
    feedback = block.get("feedback", "")
    if not isinstance(feedback, str):
        raise NoStructuredBlock("feedback must be a string")
    return ParsedReply(
        assessments=tuple(assessments),
        model_holistic=model_holistic,
        feedback=feedback.strip(),
    )


def parse_dimension_reply(text: str, dimension: Dimension) -> DimensionAssessment:
    """Parse a staged-mode reply that evaluates a single dimension."""
    block = _extract_block(text)
    if dimension.value not in block:
        raise MissingDimension(dimension.value)
    entry = block[dimension.value]
    if not isinstance(entry, dict) or "score" not in entry:
        raise NoStructuredBlock(f"entry for {dimension.value} must be an object with a score")
    justification = entry.get("justification", "")
    if not isinstance(justification, str) or not justification.strip():
        raise NoStructuredBlock(f"entry for {dimension.value} lacks a justification")
    return DimensionAssessment(
        dimension=dimension,
        score=_score_from(entry["score"], dimension.value),
        justification=justification.strip(),
    )


def parse_feedback_reply(text: str) -> str:
    """Parse the synthesis reply, which carries only formative feedback."""
    block = _extract_block(text)
    feedback = block.get("feedback")
    if not isinstance(feedback, str) or not feedback.strip():
        raise NoStructuredBlock("synthesis reply lacks a feedback string")
    return feedback.strip()


# ---------------------------------------------------------------------------
# Aggregation
# ---------------------------------------------------------------------------

def aggregate_holistic(
    scores: Mapping[Dimension, Score], profile: WeightProfile
) -> Score:
    """Weighted sum of the six dimension scores under the given profile."""
    total = sum(profile[dim] * scores[dim].value for dim in Dimension)
    # Weights sum to 1 only within tolerance; shave the resulting dust so the
    # provably-in-range result also passes the Score range check.
    if -1e-6 <= total < 0.0:
        total = 0.0
    elif 10.0 < total <= 10.0 + 1e-6:
        total = 10.0
    return Score(total)


def finalize_report(
    parsed: ParsedReply,
    profile: WeightProfile,
    provenance: Mapping,
    source_id: str,
) -> AssessmentReport:
    """Attach the computed holistic score and provenance to a parsed reply.

    A model-stated holistic never overrides the computed one; its absolute
    deviation is recorded in provenance instead.
    """
    if not parsed.assessments:
        raise ReportError(
            "holistic-only replies cannot form a dimension report; "
            "store them as HolisticOnlyResult"
        )
    holistic = aggregate_holistic(
        {a.dimension: a.score for a in parsed.assessments}, profile
    )
    prov = dict(provenance)
    prov["weight_profile"] = profile.to_dict()
    if parsed.model_holistic is not None:
        prov["model_stated_holistic"] = parsed.model_holistic
        prov["holistic_discrepancy"] = abs(parsed.model_holistic - holistic.value)
    return AssessmentReport(
        source_id=source_id,
        assessments=parsed.assessments,
        holistic=holistic,
        feedback=parsed.feedback,
        provenance=prov,
    )


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------

def render(report: AssessmentReport, format: str = "json") -> bytes:
    if format == "json":
        payload = {
            "schema_version": REPORT_SCHEMA_VERSION,
            "source_id": report.source_id,
            "assessments": [
                {
                    "dimension": a.dimension.value,
                    "score": a.score.value,
                    "justification": a.justification,
                }
                for a in report.assessments
            ],
            "holistic": report.holistic.value,
            "feedback": report.feedback,
            "provenance": dict(report.provenance),
        }
        return json.dumps(
            payload, sort_keys=True, ensure_ascii=False, separators=(",", ":")
        ).encode("utf-8")
    if format == "markdown":
        lines = [f"# Assessment report: {report.source_id}", "", "## Dimension evaluations", ""]
        by_dim = {a.dimension: a for a in report.assessments}
        for dim in Dimension:
            a = by_dim[dim]
            lines.append(f"### {dim.display_name}: {a.score.value:.1f}")
            lines.append("")
            lines.append(a.justification)
            lines.append("")
        lines.append(f"## Holistic score: {report.holistic.value:.1f}")
        lines.append("")
        lines.append("## Formative feedback")
        lines.append("")
        lines.append(report.feedback if report.feedback else "(none)")
        lines.append("")
        return "\n".join(lines).encode("utf-8")
    raise ValueError(f"unknown report format {format!r}")


def report_from_json(data: bytes | str) -> AssessmentReport:
    """Inverse of render(report, "json")."""
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    try:
        payload = json.loads(data)
    except json.JSONDecodeError as exc:
        raise ReportError(f"invalid report JSON: {exc.msg}") from None
    try:
        if payload["schema_version"] != REPORT_SCHEMA_VERSION:
            raise ReportError(f"unsupported schema_version {payload['schema_version']!r}")
        assessments = tuple(
            DimensionAssessment(
                dimension=Dimension(a["dimension"]),
                score=Score(a["score"]),
                justification=a["justification"],
            )
            for a in payload["assessments"]
        )
        return AssessmentReport(
            source_id=payload["source_id"],
            assessments=assessments,
            holistic=Score(payload["holistic"]),
            feedback=payload["feedback"],
            provenance=payload["provenance"],
        )
    except ReportError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ReportError(f"malformed report payload: {exc}") from None


def render_holistic_only(result: HolisticOnlyResult) -> bytes:
    """Canonical JSON for a standard-mode outcome."""
    payload = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "source_id": result.source_id,
        "holistic": result.holistic.value,
        "holistic_only": True,
        "provenance": dict(result.provenance),
    }
    return json.dumps(
        payload, sort_keys=True, ensure_ascii=False, separators=(",", ":")
    ).encode("utf-8")
