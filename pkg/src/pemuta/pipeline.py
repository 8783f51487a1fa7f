"""End-to-end assessment of one document: build prompts, call the client,
parse the reply, and finalize the report.

Exemplar sampling is reseeded per thesis from (run seed, thesis id) so a run
is reproducible record by record. When a reply lacks the demanded structured
block, one automatic re-ask is attempted before the error surfaces.
"""

from __future__ import annotations

import hashlib
from pathlib import Path
from typing import Sequence

from .layout import parse_layout_stream
from .llmclient import ChatClient, ChatRequest, Message
from .prompting import (
    Exemplar,
    PromptBundle,
    PromptConfig,
    PromptMode,
    TemplateSet,
    build_composite_prompt,
    build_stage_prompts,
    build_standard_prompt,
    load_templates,
    select_exemplars,
)
from .report import (
    AssessmentReport,
    HolisticOnlyResult,
    NoStructuredBlock,
    ParsedReply,
    finalize_report,
    parse_dimension_reply,
    parse_feedback_reply,
    parse_reply,
)
from .reconstruct import ReconstructedDocument, from_json, reconstruct
from .rubric import Dimension, Score

REASK_INSTRUCTION = "Reply only with the fenced json block in the required format."


def derive_seed(run_seed: int, thesis_id: str) -> int:
    """Stable per-thesis sampling seed from the run seed and document id."""
    digest = hashlib.sha256(f"{run_seed}:{thesis_id}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def document_id_for(path: Path) -> str:
    """Source id from a document or layout file name."""
    name = Path(path).name
    for suffix in (".doc.json", ".layout.jsonl"):
        if name.endswith(suffix):
            return name[: -len(suffix)]
    return Path(path).stem


def load_document(path: str | Path) -> ReconstructedDocument:
    """Load a `.doc.json` document, or reconstruct one from `.layout.jsonl`."""
    path = Path(path)
    if path.name.endswith(".doc.json"):
        return from_json(path.read_bytes())
    if path.name.endswith(".layout.jsonl"):
        stream = parse_layout_stream(path.read_bytes(), source_id=document_id_for(path))
        return reconstruct(stream)
    raise ValueError(f"unsupported document file {path.name!r} (expected .doc.json or .layout.jsonl)")


def _chat_with_reask(client: ChatClient, bundle: PromptBundle, model_id: str, parse):
    """Call the provider and parse; on a missing structured block, re-ask
    once with the same prompt plus a reply-only instruction."""
    request = ChatRequest(model_id=model_id, messages=bundle.messages)
    response = client.chat(request)
    try:
        return parse(response.content)
    except NoStructuredBlock:
        retry = ChatRequest(
            model_id=model_id,
            messages=bundle.messages
            + (
                Message(role="assistant", content=response.content),
                Message(role="user", content=REASK_INSTRUCTION),
            ),
        )
        return parse(client.chat(retry).content)


def assess_document(
    doc: ReconstructedDocument,
    config: PromptConfig,
    client: ChatClient,
    model_id: str,
    pool: Sequence = (),
    templates: TemplateSet | None = None,
) -> AssessmentReport | HolisticOnlyResult:
    """Run one thesis through the configured prompting protocol."""
    tset = templates or load_templates(config.template_dir)
    thesis_seed = derive_seed(config.random_seed, doc.source_id)
    exemplars: list[Exemplar] = []
    if config.shot_count > 0:
        exemplars = select_exemplars(
            pool, config.shot_count, thesis_seed, exclude_id=doc.source_id
        )
    provenance = {
        "source_id": doc.source_id,
        "model_id": model_id,
        "mode": config.mode.value,
        "shot_count": config.shot_count,
        "role_play": config.use_role_play,
        "weight_profile": config.weight_profile.to_dict(),
        "seeds": {"run": config.random_seed, "thesis": thesis_seed},
        "template_hash": tset.digest,
        "exemplar_ids": [e.source_id for e in exemplars],
    }

    if config.mode is PromptMode.STANDARD:
        bundle = build_standard_prompt(doc, config, templates=tset)
        parsed = _chat_with_reask(
            client, bundle, model_id, lambda text: parse_reply(text, PromptMode.STANDARD)
        )
        return HolisticOnlyResult(
            source_id=doc.source_id,
            holistic=Score(parsed.model_holistic),
            provenance=provenance,
        )

    if config.mode is PromptMode.COMPOSITE:
        bundle = build_composite_prompt(doc, config, exemplars, templates=tset)
        parsed = _chat_with_reask(
            client, bundle, model_id, lambda text: parse_reply(text, PromptMode.COMPOSITE)
        )
        return finalize_report(parsed, config.weight_profile, provenance, doc.source_id)

    # Staged: six dimension calls, then a synthesis call for feedback only.
    stage = build_stage_prompts(doc, config, exemplars, templates=tset)
    assessments = []
    for dim in Dimension:
        assessments.append(
            _chat_with_reask(
                client,
                stage.dimension_bundles[dim],
                model_id,
                lambda text, dim=dim: parse_dimension_reply(text, dim),
            )
        )
    synthesis_bundle = stage.build_synthesis(assessments)
    feedback = _chat_with_reask(client, synthesis_bundle, model_id, parse_feedback_reply)
    parsed = ParsedReply(assessments=tuple(assessments), feedback=feedback)
    return finalize_report(parsed, config.weight_profile, provenance, doc.source_id)
