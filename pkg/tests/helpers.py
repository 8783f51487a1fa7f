"""Builders for end-to-end tests: tiny fixture datasets, randomized valid
documents, and mock scripts."""

from __future__ import annotations

import json
import random
from pathlib import Path

from pemuta.layout import ElementKind
from pemuta.reconstruct import (
    DocumentStats,
    Paragraph,
    Placeholder,
    ReconstructedDocument,
    Section,
    SectionLabel,
    to_json,
)
from pemuta.rubric import Dimension

# Per-record dimension scores; all <= 8.9 so a +1.0 shift stays on-scale,
# and the uniform-mean holistic varies record to record (PCC stays defined).
DATASET_SCORES = {
    "t01": [8.0, 8.5, 7.5, 8.0, 8.5, 8.8],
    "t02": [7.0, 7.5, 8.0, 7.0, 8.0, 8.5],
    "t03": [8.5, 8.0, 8.5, 7.5, 8.8, 8.9],
    "t04": [6.5, 7.0, 7.5, 6.5, 7.5, 8.0],
    "t05": [8.8, 8.6, 8.2, 8.4, 8.9, 8.7],
    "t06": [7.5, 8.0, 7.0, 7.5, 8.5, 8.0],
    "t07": [8.2, 7.8, 8.6, 7.9, 8.3, 8.1],
    "t08": [7.8, 8.2, 7.2, 8.1, 8.0, 8.6],
}


def tiny_document(doc_id: str) -> ReconstructedDocument:
    return ReconstructedDocument(
        source_id=doc_id,
        title=f"Thesis {doc_id}: A Compact Study",
        sections=(
            Section(
                label=SectionLabel.OTHER,
                heading_text="Overview",
                blocks=(
                    Paragraph(
                        f"Document {doc_id} investigates a small but complete research "
                        "question and reports a single experiment."
                    ),
                ),
            ),
        ),
        stats=DocumentStats(pages=1, elements_in=3, furniture_removed=0, placeholders_inserted=0),
    )


def uniform_holistic(scores: list[float]) -> float:
    return sum(scores) / len(scores)


def write_dataset(root: Path, ids=None) -> Path:
    """Write per-record doc.json files plus a manifest; returns manifest path."""
    ids = list(ids or DATASET_SCORES)
    docs_dir = root / "docs"
    docs_dir.mkdir(parents=True, exist_ok=True)
    rows = ["id,doc_path,structure,logic,originality,writing,proficiency,rigor,holistic"]
    for doc_id in ids:
        scores = DATASET_SCORES[doc_id]
        (docs_dir / f"{doc_id}.doc.json").write_bytes(to_json(tiny_document(doc_id)))
        holistic = uniform_holistic(scores)
        rows.append(
            f"{doc_id},docs/{doc_id}.doc.json," + ",".join(str(s) for s in scores) + f",{holistic}"
        )
    manifest = root / "dataset.csv"
    manifest.write_text("\n".join(rows) + "\n", encoding="utf-8")
    return manifest


def reply_block(scores: list[float], holistic: float | None = None, feedback: str = "Keep revising.") -> str:
    payload = {
        dim.value: {
            "score": score,
            "justification": f"The {dim.value} of this thesis supports the grade.",
        }
        for dim, score in zip(Dimension, scores)
    }
    if holistic is not None:
        payload["holistic"] = holistic
    payload["feedback"] = feedback
    return "```json\n" + json.dumps(payload) + "\n```"


def random_document(rng: random.Random) -> ReconstructedDocument:
    """A structurally valid document with randomized sections, paragraphs,
    and placeholders; used for serialization round-trip checks."""
    words = [
        "analysis", "thesis", "model", "figure", "结果", "方法", "robust",
        "latent", "corpus", "metric", "review", "chapter",
    ]

    def sentence() -> str:
        return " ".join(rng.choice(words) for _ in range(rng.randint(1, 8))) + "."

    counters = {k: 0 for k in (ElementKind.FIGURE, ElementKind.TABLE, ElementKind.EQUATION)}
    sections = []
    for _ in range(rng.randint(1, 5)):
        blocks = []
        for _ in range(rng.randint(0, 6)):
            if rng.random() < 0.3:
                kind = rng.choice(list(counters))
                counters[kind] += 1
                caption = sentence() if rng.random() < 0.7 else None
                blocks.append(Placeholder(kind=kind, ref_id=counters[kind], caption=caption))
            else:
                blocks.append(Paragraph(sentence()))
        label = rng.choice(list(SectionLabel))
        sections.append(Section(label=label, heading_text=sentence(), blocks=tuple(blocks)))
    return ReconstructedDocument(
        source_id=f"doc-{rng.randint(0, 10**6)}",
        title=sentence(),
        sections=tuple(sections),
        stats=DocumentStats(
            pages=rng.randint(1, 90),
            elements_in=rng.randint(1, 4000),
            furniture_removed=rng.randint(0, 300),
            placeholders_inserted=sum(counters.values()),
        ),
    )


def write_echo_script(path: Path, shift: float = 0.0, ids=None) -> Path:
    """Mock script answering each record's prompts with its expert scores
    (optionally shifted); matching keys on the unique document title."""
    ids = list(ids or DATASET_SCORES)
    entries = []
    for doc_id in ids:
        scores = [s + shift for s in DATASET_SCORES[doc_id]]
        entries.append(
            {
                "match": {"contains": f"Thesis {doc_id}:"},
                "reply": reply_block(scores, holistic=uniform_holistic(scores)),
            }
        )
    path.write_text(json.dumps(entries, indent=1), encoding="utf-8")
    return path
