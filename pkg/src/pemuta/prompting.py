"""Prompt construction for every assessment mode.

Three bundle builders cover the prompt variants: a composite prompt carrying
the full two-stage instructions, per-dimension staged prompts plus a
feedback-synthesis builder, and the single-instruction holistic baseline.
Few-shot exemplar blocks and the examiner persona preamble are toggled by
PromptConfig. Templates live in text files with named placeholders so the
rubric wording can be localized; the template directory is config-overridable.
"""

from __future__ import annotations

import hashlib
import json
import random
import re
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import TYPE_CHECKING, Callable, Mapping, Sequence

from .llmclient import Message, estimate_tokens
from .reconstruct import ReconstructedDocument
from .rubric import Dimension, Score, WeightProfile, uniform_profile

if TYPE_CHECKING:
    from .report import DimensionAssessment

DEFAULT_PERSONA = (
    "You are a university professor responsible for evaluating students' "
    "submitted undergraduate thesis."
)

# Marker prefix shared by every rendered exemplar block; tests and humans
# count exemplars by it.
EXEMPLAR_MARKER = "Example evaluation"

_TEMPLATE_NAMES = (
    "composite.txt",
    "dimension_item.txt",
    "staged.txt",
    "synthesis.txt",
    "standard.txt",
    "reply_format_full.txt",
    "reply_format_dimension.txt",
    "reply_format_holistic.txt",
    "reply_format_feedback.txt",
)

_PLACEHOLDER_RE = re.compile(r"\{\{(\w+)\}\}")


class PromptError(Exception):
    """Base class for prompt-construction errors."""


class InvalidPromptConfig(PromptError):
    pass


class MissingScore(PromptError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"exemplar record is missing a score for {name}")


class PoolTooSmall(PromptError):
    def __init__(self, requested: int, available: int):
        self.requested = requested
        self.available = available
        super().__init__(
            f"requested {requested} exemplars but only {available} are eligible"
        )


class DocumentTooLarge(PromptError):
    def __init__(self, estimated_tokens: int, budget: int):
        self.estimated_tokens = estimated_tokens
        self.budget = budget
        super().__init__(
            f"prompt estimated at {estimated_tokens} tokens exceeds the "
            f"{budget}-token context budget"
        )


class PromptMode(str, Enum):
    COMPOSITE = "composite"
    STAGED = "staged"
    STANDARD = "standard"


@dataclass(frozen=True)
class PromptConfig:
    mode: PromptMode = PromptMode.COMPOSITE
    use_role_play: bool = True
    shot_count: int = 2
    weight_profile: WeightProfile = field(default_factory=uniform_profile)
    random_seed: int = 0
    persona_text: str = DEFAULT_PERSONA
    context_budget_tokens: int = 120_000
    template_dir: Path | None = None

    def __post_init__(self):
        if self.shot_count < 0:
            raise InvalidPromptConfig("shot_count must be >= 0")
        if self.mode is PromptMode.STANDARD and self.shot_count != 0:
            raise InvalidPromptConfig("standard mode forces shot_count = 0")
        if self.use_role_play and not self.persona_text.strip():
            raise InvalidPromptConfig("role play requires non-empty persona_text")
        if self.context_budget_tokens < 1:
            raise InvalidPromptConfig("context budget must be positive")


@dataclass(frozen=True)
class Exemplar:
    source_id: str
    dimension_scores: Mapping[Dimension, Score]
    holistic: Score
    formatted_text: str


@dataclass(frozen=True)
class PromptBundle:
    messages: tuple[Message, ...]
    mode: PromptMode
    provenance_hash: str

    @property
    def system_message(self) -> Message | None:
        for m in self.messages:
            if m.role == "system":
                return m
        return None

    @property
    def user_content(self) -> str:
        return "\n".join(m.content for m in self.messages if m.role == "user")


# ---------------------------------------------------------------------------
# Templates
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TemplateSet:
    texts: Mapping[str, str]
    digest: str

    def render(self, name: str, values: Mapping[str, str]) -> str:
        template = self.texts[name]

        def _sub(match: re.Match) -> str:
            key = match.group(1)
            if key not in values:
                raise PromptError(f"template {name} uses unknown placeholder {{{{{key}}}}}")
            return values[key]

        return _PLACEHOLDER_RE.sub(_sub, template)


def load_templates(template_dir: Path | None = None) -> TemplateSet:
    texts: dict[str, str] = {}
    if template_dir is None:
        root = resources.files("pemuta").joinpath("templates")
        for name in _TEMPLATE_NAMES:
            texts[name] = root.joinpath(name).read_text(encoding="utf-8")
    else:
        for name in _TEMPLATE_NAMES:
            path = Path(template_dir) / name
            if not path.exists():
                raise PromptError(f"template directory is missing {name}")
            texts[name] = path.read_text(encoding="utf-8")
    digest = hashlib.sha256(
        "\x00".join(f"{name}\x01{texts[name]}" for name in sorted(texts)).encode("utf-8")
    ).hexdigest()
    return TemplateSet(texts=texts, digest=digest)


# ---------------------------------------------------------------------------
# Exemplars
# ---------------------------------------------------------------------------

def format_score(value: float) -> str:
    """Render a stored score verbatim with at least one decimal: 8 -> 8.0."""
    text = f"{value:.10g}"
    return text if "." in text else text + ".0"


def format_exemplar(record) -> Exemplar:
    """Render a scored record into the rationale-free exemplar text block.

    The block lists the six dimension scores then the stored holistic score,
    verbatim, with no justification prose.
    """
    scores: dict[Dimension, Score] = {}
    for dim in Dimension:
        value = record.dimension_scores.get(dim)
        if value is None:
            raise MissingScore(dim.value)
        scores[dim] = value
    if record.holistic is None:
        raise MissingScore("holistic")
    lines = [f"{dim.display_name}: {format_score(scores[dim].value)}" for dim in Dimension]
    lines.append(f"Holistic: {format_score(record.holistic.value)}")
    return Exemplar(
        source_id=record.id,
        dimension_scores=scores,
        holistic=record.holistic,
        formatted_text="\n".join(lines),
    )


def select_exemplars(
    pool: Sequence, k: int, seed: int, exclude_id: str | None = None
) -> list[Exemplar]:
    """Deterministically sample k exemplars from the record pool.

    The excluded id never appears; sampling depends only on the passed seed.
    """
    eligible = [r for r in pool if exclude_id is None or r.id != exclude_id]
    if k > len(eligible):
        raise PoolTooSmall(k, len(eligible))
    if k == 0:
        return []
    rng = random.Random(seed)
    return [format_exemplar(r) for r in rng.sample(eligible, k)]


def _exemplar_section(exemplars: Sequence[Exemplar]) -> str:
    if not exemplars:
        return ""
    parts = ["Score-only example evaluations in the expected format:"]
    for i, ex in enumerate(exemplars, 1):
        parts.append(f"{EXEMPLAR_MARKER} {i}:\n{ex.formatted_text}")
    return "\n\n".join(parts) + "\n\n"


# ---------------------------------------------------------------------------
# Bundle builders
# ---------------------------------------------------------------------------

def role_preamble(config: PromptConfig) -> Message:
    """The persona-setting system message; only used when role play is on."""
    if not config.use_role_play:
        raise InvalidPromptConfig("role_preamble requires use_role_play")
    return Message(role="system", content=config.persona_text)


def _provenance_hash(
    config: PromptConfig,
    doc_id: str,
    exemplar_ids: Sequence[str],
    template_digest: str,
    builder: str,
) -> str:
    payload = json.dumps(
        {
            "builder": builder,
            "mode": config.mode.value,
            "role_play": config.use_role_play,
            "shot_count": config.shot_count,
            "weights": config.weight_profile.to_dict(),
            "seed": config.random_seed,
            "persona": config.persona_text,
            "budget": config.context_budget_tokens,
            "document": doc_id,
            "exemplars": list(exemplar_ids),
            "templates": template_digest,
        },
        sort_keys=True,
        ensure_ascii=False,
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def _assemble(
    config: PromptConfig,
    user_content: str,
    doc_id: str,
    exemplar_ids: Sequence[str],
    template_digest: str,
    builder: str,
) -> PromptBundle:
    messages: list[Message] = []
    if config.use_role_play:
        messages.append(role_preamble(config))
    messages.append(Message(role="user", content=user_content))
    total = estimate_tokens("".join(m.content for m in messages))
    if total > config.context_budget_tokens:
        raise DocumentTooLarge(total, config.context_budget_tokens)
    return PromptBundle(
        messages=tuple(messages),
        mode=config.mode,
        provenance_hash=_provenance_hash(
            config, doc_id, exemplar_ids, template_digest, builder
        ),
    )


def build_composite_prompt(
    doc: ReconstructedDocument,
    config: PromptConfig,
    exemplars: Sequence[Exemplar] = (),
    templates: TemplateSet | None = None,
) -> PromptBundle:
    """One bundle holding, in order: the two-stage instructions, exemplar
    blocks, then the document flat text."""
    if config.mode is not PromptMode.COMPOSITE:
        raise InvalidPromptConfig(f"composite builder got mode {config.mode.value}")
    tset = templates or load_templates(config.template_dir)
    items = "\n".join(
        tset.render(
            "dimension_item.txt",
            {"dimension_name": dim.display_name, "aspects": dim.aspects},
        ).rstrip()
        for dim in Dimension
    )
    content = tset.render(
        "composite.txt",
        {
            "dimension_instructions": items,
            "reply_format": tset.texts["reply_format_full.txt"].strip(),
            "exemplars": _exemplar_section(exemplars),
            "document": doc.flat_text(),
        },
    )
    return _assemble(
        config, content, doc.source_id, [e.source_id for e in exemplars], tset.digest, "composite"
    )


@dataclass(frozen=True)
class StagePrompts:
    """The six per-dimension bundles plus the feedback-synthesis builder."""

    dimension_bundles: Mapping[Dimension, PromptBundle]
    build_synthesis: Callable[[Sequence["DimensionAssessment"]], PromptBundle]


def build_stage_prompts(
    doc: ReconstructedDocument,
    config: PromptConfig,
    exemplars: Sequence[Exemplar] = (),
    templates: TemplateSet | None = None,
) -> StagePrompts:
    """Bundles for the two-stage protocol: each dimension is assessed in its
    own call, and the synthesis builder turns the six parsed evaluations into
    a final bundle that asks only for formative feedback (the holistic score
    is computed, never asked for)."""
    if config.mode is not PromptMode.STAGED:
        raise InvalidPromptConfig(f"staged builder got mode {config.mode.value}")
    tset = templates or load_templates(config.template_dir)
    exemplar_ids = [e.source_id for e in exemplars]
    bundles: dict[Dimension, PromptBundle] = {}
    for dim in Dimension:
        reply_format = tset.render(
            "reply_format_dimension.txt", {"dimension_key": dim.value}
        ).strip()
        content = tset.render(
            "staged.txt",
            {
                "dimension_name": dim.display_name,
                "aspects": dim.aspects,
                "reply_format": reply_format,
                "exemplars": _exemplar_section(exemplars),
                "document": doc.flat_text(),
            },
        )
        bundles[dim] = _assemble(
            config, content, doc.source_id, exemplar_ids, tset.digest, f"staged:{dim.value}"
        )

    def build_synthesis(assessments: Sequence["DimensionAssessment"]) -> PromptBundle:
        listed = "\n".join(
            f"{a.dimension.display_name}: {format_score(a.score.value)} - {a.justification}"
            for a in assessments
        )
        content = tset.render(
            "synthesis.txt",
            {
                "assessments": listed,
                "reply_format": tset.texts["reply_format_feedback.txt"].strip(),
            },
        )
        return _assemble(config, content, doc.source_id, exemplar_ids, tset.digest, "synthesis")

    return StagePrompts(dimension_bundles=bundles, build_synthesis=build_synthesis)


def build_standard_prompt(
    doc: ReconstructedDocument,
    config: PromptConfig,
    templates: TemplateSet | None = None,
) -> PromptBundle:
    """The holistic baseline: one instruction, the reply stanza, the thesis."""
    if config.mode is not PromptMode.STANDARD:
        raise InvalidPromptConfig(f"standard builder got mode {config.mode.value}")
    tset = templates or load_templates(config.template_dir)
    content = tset.render(
        "standard.txt",
        {
            "reply_format": tset.texts["reply_format_holistic.txt"].strip(),
            "document": doc.flat_text(),
        },
    )
    return _assemble(config, content, doc.source_id, [], tset.digest, "standard")
