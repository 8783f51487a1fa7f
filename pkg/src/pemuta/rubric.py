"""Scoring rubric: the six assessment dimensions, the 0-10 score scale, and
the weight profiles used to aggregate dimension scores into a holistic one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Mapping

SCORE_MIN = 0.0
SCORE_MAX = 10.0

# Weight profiles must sum to exactly 1 up to float rounding noise.
WEIGHT_SUM_TOLERANCE = 1e-9


class RubricError(ValueError):
    """Base class for rubric validation failures."""


class ScoreOutOfRange(RubricError):
    def __init__(self, value, name: str | None = None):
        self.value = value
        self.name = name
        label = f" for {name}" if name else ""
        super().__init__(f"score{label} must be a number in [0, 10], got {value!r}")


class WeightOutOfRange(RubricError):
    def __init__(self, dimension: "Dimension", value: float):
        self.dimension = dimension
        self.value = value
        super().__init__(f"weight for {dimension.value} must be in [0, 1], got {value!r}")


class WeightsDoNotSumToOne(RubricError):
    def __init__(self, total: float):
        self.total = total
        super().__init__(f"weights must sum to 1 within {WEIGHT_SUM_TOLERANCE}, got {total!r}")


class MissingDimension(RubricError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"missing dimension: {name}")


class Dimension(str, Enum):
    """The six assessment dimensions, in canonical order."""

    STRUCTURE = "structure"
    LOGIC = "logic"
    ORIGINALITY = "originality"
    WRITING = "writing"
    PROFICIENCY = "proficiency"
    RIGOR = "rigor"

    @property
    def display_name(self) -> str:
        return self.value.capitalize()

    @property
    def aspects(self) -> str:
        """Prompt-facing description of what this dimension evaluates."""
        return _ASPECTS[self]


# The first four dimensions are the core quality indicators; the last two
# (proficiency, rigor) are supporting indicators.
CORE_DIMENSIONS = (
    Dimension.STRUCTURE,
    Dimension.LOGIC,
    Dimension.ORIGINALITY,
    Dimension.WRITING,
)
SUPPORTING_DIMENSIONS = (Dimension.PROFICIENCY, Dimension.RIGOR)

_ASPECTS: dict[Dimension, str] = {
    Dimension.STRUCTURE: (
        "organization of chapters, coherence across sections, and smooth "
        "transitions between parts of the thesis"
    ),
    Dimension.LOGIC: (
        "consistency among research questions, methodology, evidence, and "
        "conclusions, and the clarity of reasoning and argument"
    ),
    Dimension.ORIGINALITY: (
        "original perspectives, novel research questions, and theoretical or "
        "methodological innovation"
    ),
    Dimension.WRITING: (
        "clarity, grammatical accuracy, academic tone, and adherence to "
        "disciplinary writing conventions"
    ),
    Dimension.PROFICIENCY: (
        "application of course knowledge, use of technical terminology, "
        "problem-solving with disciplinary understanding, and use of "
        "field-specific tools"
    ),
    Dimension.RIGOR: (
        "source reliability, citation accuracy and format, and compliance "
        "with academic ethics"
    ),
}


@dataclass(frozen=True)
class Score:
    """A rating on the 0-10 scale. Construction enforces the range."""

    value: float

    def __post_init__(self):
        try:
            v = float(self.value)
        except (TypeError, ValueError):
            raise ScoreOutOfRange(self.value) from None
        if math.isnan(v) or not (SCORE_MIN <= v <= SCORE_MAX):
            raise ScoreOutOfRange(self.value)
        object.__setattr__(self, "value", v)

    def __float__(self) -> float:
        return self.value


@dataclass(frozen=True)
class WeightProfile:
    """Aggregation weights, one per dimension, each in [0, 1], summing to 1."""

    weights: Mapping[Dimension, float]

    def __post_init__(self):
        resolved: dict[Dimension, float] = {}
        for dim in Dimension:
            if dim not in self.weights:
                raise MissingDimension(dim.value)
            w = float(self.weights[dim])
            if math.isnan(w) or not (0.0 <= w <= 1.0):
                raise WeightOutOfRange(dim, self.weights[dim])
            resolved[dim] = w
        extras = set(self.weights) - set(resolved)
        if extras:
            raise MissingDimension(f"unknown weight keys: {sorted(str(e) for e in extras)}")
        total = sum(resolved.values())
        if abs(total - 1.0) > WEIGHT_SUM_TOLERANCE:
            raise WeightsDoNotSumToOne(total)
        object.__setattr__(self, "weights", resolved)

    def __getitem__(self, dimension: Dimension) -> float:
        return self.weights[dimension]

    def items(self):
        return self.weights.items()

    def to_dict(self) -> dict[str, float]:
        """Flat serializable form keyed by dimension name."""
        return {dim.value: self.weights[dim] for dim in Dimension}

    @classmethod
    def from_dict(cls, raw: Mapping[str, float]) -> "WeightProfile":
        weights: dict[Dimension, float] = {}
        for key, value in raw.items():
            try:
                dim = Dimension(key.lower())
            except ValueError:
                raise MissingDimension(f"unknown dimension name: {key!r}") from None
            weights[dim] = value
        return cls(weights)


def uniform_profile() -> WeightProfile:
    """Equal weight (1/6) on every dimension. The default."""
    return WeightProfile({dim: 1.0 / 6.0 for dim in Dimension})


def core_weighted_profile() -> WeightProfile:
    """0.2 on each core dimension, 0.1 on each supporting one."""
    weights = {dim: 0.2 for dim in CORE_DIMENSIONS}
    weights.update({dim: 0.1 for dim in SUPPORTING_DIMENSIONS})
    return WeightProfile(weights)


def custom_profile(weights: Mapping[Dimension, float]) -> WeightProfile:
    """Validate a caller-supplied weight map into a profile."""
    return WeightProfile(dict(weights))
