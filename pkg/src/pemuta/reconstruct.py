"""Semantic document reconstruction.

Turns a furniture-classified layout stream into a section-structured document:
section boundaries are detected from canonical headings and numeric patterns,
fragmented lines are merged into paragraphs using spacing, indentation, and
punctuation cues, and non-textual elements become inline placeholders that
keep their captions. The result serializes to a canonical JSON document and a
flat text rendering for prompt embedding.
"""

from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Sequence, Union

from .layout import (
    ElementKind,
    FURNITURE_KINDS,
    LayoutElement,
    LayoutStream,
    NON_TEXTUAL_KINDS,
    classify_furniture,
)


class ReconstructError(Exception):
    """Base class for reconstruction errors."""


class EmptyDocument(ReconstructError):
    def __init__(self, source_id: str = ""):
        self.source_id = source_id
        super().__init__(f"document {source_id!r} has no body text after furniture removal")


class SchemaViolation(ReconstructError):
    def __init__(self, reason: str):
        self.reason = reason
        super().__init__(reason)


class SectionLabel(str, Enum):
    ABSTRACT = "abstract"
    TOC = "toc"
    NUMBERED = "numbered-section"
    REFERENCES = "references"
    APPENDIX = "appendix"
    ACKNOWLEDGMENTS = "acknowledgments"
    OTHER = "other"


# Canonical headings and the labels they map to, keyed by casefolded,
# whitespace-collapsed text. Extensible via ReconstructConfig.
DEFAULT_CANONICAL_TITLES: dict[str, SectionLabel] = {
    "abstract": SectionLabel.ABSTRACT,
    "摘要": SectionLabel.ABSTRACT,
    "contents": SectionLabel.TOC,
    "table of contents": SectionLabel.TOC,
    "目录": SectionLabel.TOC,
    "introduction": SectionLabel.OTHER,
    "related work": SectionLabel.OTHER,
    "conclusion": SectionLabel.OTHER,
    "references": SectionLabel.REFERENCES,
    "参考文献": SectionLabel.REFERENCES,
    "bibliography": SectionLabel.REFERENCES,
    "acknowledgments": SectionLabel.ACKNOWLEDGMENTS,
    "acknowledgements": SectionLabel.ACKNOWLEDGMENTS,
    "致谢": SectionLabel.ACKNOWLEDGMENTS,
    "appendix": SectionLabel.APPENDIX,
}

_NUMBERED_HEADING_RE = re.compile(r"^(\d+(?:\.\d+)*)\s+\S")

# Sentence-final punctuation, Latin and CJK.
_TERMINAL_PUNCTUATION = frozenset(".!?。！？")

_WS_RE = re.compile(r"\s+")


@dataclass(frozen=True)
class ReconstructConfig:
    """Tunable reconstruction thresholds.

    The paragraph-break thresholds follow typographic convention: a vertical
    gap beyond gap_break_factor times the modal line pitch, or a fresh
    indent of more than indent_break_em em after a finished sentence,
    starts a new paragraph.
    """

    gap_break_factor: float = 1.8
    indent_break_em: float = 1.0
    canonical_titles: Mapping[str, SectionLabel] = field(
        default_factory=lambda: dict(DEFAULT_CANONICAL_TITLES)
    )


@dataclass(frozen=True)
class SectionBoundary:
    """A detected section heading, pointing into LayoutStream.elements."""

    element_index: int
    label: SectionLabel
    heading_text: str
    number_path: tuple[int, ...] = ()

    def __post_init__(self):
        if self.label is SectionLabel.NUMBERED:
            if not self.number_path or any(n < 1 for n in self.number_path):
                raise ValueError(
                    f"numbered section needs a positive dotted path, got {self.number_path!r}"
                )


@dataclass(frozen=True)
class Paragraph:
    text: str

    def __post_init__(self):
        if self.text != self.text.strip() or not self.text:
            raise ValueError("paragraph text must be non-empty and stripped")
        if len(self.text.splitlines()) > 1:
            raise ValueError("paragraph text must not contain line breaks")


@dataclass(frozen=True)
class Placeholder:
    kind: ElementKind
    ref_id: int
    caption: str | None = None

    def __post_init__(self):
        if self.kind not in NON_TEXTUAL_KINDS:
            raise ValueError(f"placeholder kind must be figure/table/equation, got {self.kind}")
        if self.ref_id < 1:
            raise ValueError(f"ref_id must be >= 1, got {self.ref_id}")

    def render(self) -> str:
        tag = self.kind.value.upper()
        if self.kind is ElementKind.EQUATION or not self.caption:
            return f"[{tag} {self.ref_id}]"
        return f"[{tag} {self.ref_id}: {self.caption}]"


Block = Union[Paragraph, Placeholder]


@dataclass(frozen=True)
class Section:
    label: SectionLabel
    heading_text: str
    blocks: tuple[Block, ...]


@dataclass(frozen=True)
class DocumentStats:
    pages: int
    elements_in: int
    furniture_removed: int
    placeholders_inserted: int


@dataclass(frozen=True)
class ReconstructedDocument:
    source_id: str
    title: str
    sections: tuple[Section, ...]
    stats: DocumentStats

    def __post_init__(self):
        seen: dict[ElementKind, int] = {}
        for section in self.sections:
            for block in section.blocks:
                if isinstance(block, Placeholder):
                    last = seen.get(block.kind, 0)
                    if block.ref_id != last + 1:
                        raise ValueError(
                            f"{block.kind.value} ref_ids must be 1..n in reading order, "
                            f"got {block.ref_id} after {last}"
                        )
                    seen[block.kind] = block.ref_id

    def flat_text(self) -> str:
        """Plain-text rendering embedded in prompts: sections separated by
        blank lines, placeholders inline."""
        chunks: list[str] = []
        if self.title:
            chunks.append(self.title)
        for section in self.sections:
            lines: list[str] = []
            if section.heading_text:
                lines.append(section.heading_text)
            for block in section.blocks:
                lines.append(block.text if isinstance(block, Paragraph) else block.render())
            if lines:
                chunks.append("\n".join(lines))
        return "\n\n".join(chunks) + "\n"


# ---------------------------------------------------------------------------
# Section detection
# ---------------------------------------------------------------------------

def _collapse_ws(text: str) -> str:
    return _WS_RE.sub(" ", text).strip()


def _modal_body_font_size(lines: Sequence[LayoutElement]) -> float:
    # Mode over rounded sizes; ties resolved toward the smaller size since
    # body text never outsizes its headings.
    sizes = Counter(round(el.font_size, 1) for el in lines if el.font_size)
    if not sizes:
        return 0.0
    best = max(sizes.items(), key=lambda kv: (kv[1], -kv[0]))
    return best[0]


def _heading_match(
    text: str, titles: Mapping[str, SectionLabel]
) -> tuple[SectionLabel, tuple[int, ...]] | None:
    collapsed = _collapse_ws(text)
    label = titles.get(collapsed.casefold())
    if label is not None:
        return label, ()
    m = _NUMBERED_HEADING_RE.match(collapsed)
    if m:
        path = tuple(int(part) for part in m.group(1).split("."))
        if all(n >= 1 for n in path):
            return SectionLabel.NUMBERED, path
    return None


def detect_sections(
    stream: LayoutStream, config: ReconstructConfig | None = None
) -> list[SectionBoundary]:
    """Find section headings among the stream's body text lines.

    A line is a boundary when it matches a canonical title (case-insensitive,
    whitespace collapsed) or a dotted numeric heading pattern, and it is
    visually emphasized: larger than the modal body font size, or bold.
    """
    cfg = config or ReconstructConfig()
    body = [el for el in stream.elements if el.kind is ElementKind.TEXT_LINE]
    modal_size = _modal_body_font_size(body)
    boundaries: list[SectionBoundary] = []
    for idx, el in enumerate(stream.elements):
        if el.kind is not ElementKind.TEXT_LINE:
            continue
        match = _heading_match(el.text, cfg.canonical_titles)
        if match is None:
            continue
        emphasized = bool(el.font_bold) or (
            el.font_size is not None and round(el.font_size, 1) > modal_size
        )
        if not emphasized:
            continue
        label, path = match
        boundaries.append(
            SectionBoundary(
                element_index=idx,
                label=label,
                heading_text=_collapse_ws(el.text),
                number_path=path,
            )
        )
    return boundaries


# ---------------------------------------------------------------------------
# Paragraph merging
# ---------------------------------------------------------------------------

def _modal_line_pitch(lines: Sequence[LayoutElement]) -> float | None:
    deltas = Counter()
    for prev, cur in zip(lines, lines[1:]):
        if prev.page == cur.page:
            delta = round(cur.bbox[1] - prev.bbox[1], 1)
            if delta > 0:
                deltas[delta] += 1
    if not deltas:
        return None
    best = max(deltas.items(), key=lambda kv: (kv[1], -kv[0]))
    return best[0]


def _dehyphenate_join(left: str, right: str) -> str:
    # A word split across lines ends in a hyphen after a letter; rejoin it.
    if len(left) >= 2 and left.endswith("-") and left[-2].isalpha():
        return left[:-1] + right
    return left + " " + right


def merge_paragraphs(
    lines: Sequence[LayoutElement], config: ReconstructConfig | None = None
) -> list[Paragraph]:
    """Merge the reading-ordered text lines of one section into paragraphs.

    Consecutive lines join unless the vertical gap exceeds
    gap_break_factor x modal line pitch, or the previous line ends a
    sentence and the next one is freshly indented past the section's left
    margin by more than indent_break_em em.
    """
    cfg = config or ReconstructConfig()
    paragraphs, _ = _merge_with_spans(list(lines), list(range(len(lines))), cfg)
    return paragraphs


# ---------------------------------------------------------------------------
# Placeholder placement
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SectionDraft:
    """A section before placeholder insertion: paragraphs plus the stream
    index spans they were merged from."""

    label: SectionLabel
    heading_text: str
    span: tuple[int, int]  # [start, end) element-index range of the section
    paragraphs: tuple[Paragraph, ...]
    paragraph_spans: tuple[tuple[int, int], ...]  # (first, last) element index


def place_placeholders(
    stream: LayoutStream, sections: Sequence[SectionDraft]
) -> list[Section]:
    """Insert one placeholder per figure/table/equation element, at the block
    position nearest its bbox in reading order, numbering each kind 1..n."""
    counters: dict[ElementKind, int] = {kind: 0 for kind in NON_TEXTUAL_KINDS}
    placed: list[Section] = []
    for draft in sections:
        inserts: list[tuple[int, int, Placeholder]] = []  # (slot, stream idx, block)
        start, end = draft.span
        for idx in range(start, end):
            el = stream.elements[idx]
            if el.kind not in NON_TEXTUAL_KINDS:
                continue
            counters[el.kind] += 1
            marker = Placeholder(kind=el.kind, ref_id=counters[el.kind], caption=el.caption)
            slot = 0
            for first, last in draft.paragraph_spans:
                if last < idx:
                    slot += 1
                elif first < idx:
                    # The element interleaves a paragraph's lines; attach it to
                    # the nearer side rather than splitting the paragraph.
                    if (idx - first) >= (last - idx):
                        slot += 1
                    break
                else:
                    break
            inserts.append((slot, idx, marker))
        blocks: list[Block] = list(draft.paragraphs)
        for slot, _, marker in sorted(inserts, key=lambda t: (t[0], t[1]), reverse=True):
            blocks.insert(slot, marker)
        placed.append(Section(draft.label, draft.heading_text, tuple(blocks)))
    return placed


# ---------------------------------------------------------------------------
# Full reconstruction
# ---------------------------------------------------------------------------

def _pick_title(stream: LayoutStream) -> tuple[str, int | None]:
    best: LayoutElement | None = None
    best_idx: int | None = None
    for idx, el in enumerate(stream.elements):
        if el.kind is not ElementKind.TEXT_LINE or el.page != 1:
            continue
        if best is None or (el.font_size or 0) > (best.font_size or 0):
            best, best_idx = el, idx
    if best is None:
        return "", None
    return _collapse_ws(best.text), best_idx


def _build_drafts(
    stream: LayoutStream,
    boundaries: Sequence[SectionBoundary],
    title_idx: int | None,
    config: ReconstructConfig,
) -> list[SectionDraft]:
    spans: list[tuple[SectionLabel, str, int, int]] = []
    first_start = boundaries[0].element_index if boundaries else len(stream.elements)
    if first_start > 0:
        spans.append((SectionLabel.OTHER, "", 0, first_start))
    for i, boundary in enumerate(boundaries):
        end = boundaries[i + 1].element_index if i + 1 < len(boundaries) else len(stream.elements)
        spans.append((boundary.label, boundary.heading_text, boundary.element_index, end))

    heading_indexes = {b.element_index for b in boundaries}
    drafts: list[SectionDraft] = []
    for label, heading, start, end in spans:
        line_indexes = [
            idx
            for idx in range(start, end)
            if stream.elements[idx].kind is ElementKind.TEXT_LINE
            and idx not in heading_indexes
            and idx != title_idx
        ]
        paragraphs: list[Paragraph] = []
        paragraph_spans: list[tuple[int, int]] = []
        if line_indexes:
            paragraphs, paragraph_spans = _merge_with_spans(
                [stream.elements[i] for i in line_indexes], line_indexes, config
            )
        has_nontext = any(
            stream.elements[idx].kind in NON_TEXTUAL_KINDS for idx in range(start, end)
        )
        if not paragraphs and not has_nontext and not heading:
            continue
        drafts.append(
            SectionDraft(
                label=label,
                heading_text=heading,
                span=(start, end),
                paragraphs=tuple(paragraphs),
                paragraph_spans=tuple(paragraph_spans),
            )
        )
    return drafts


def _merge_with_spans(
    lines: Sequence[LayoutElement],
    indexes: Sequence[int],
    config: ReconstructConfig,
) -> tuple[list[Paragraph], list[tuple[int, int]]]:
    """merge_paragraphs plus the (first, last) stream index of each paragraph."""
    kept = [(el, idx) for el, idx in zip(lines, indexes) if _collapse_ws(el.text)]
    if not kept:
        return [], []
    pitch = _modal_line_pitch([el for el, _ in kept])
    left_margin = min(el.bbox[0] for el, _ in kept)
    paragraphs: list[Paragraph] = []
    spans: list[tuple[int, int]] = []
    current = _collapse_ws(kept[0][0].text)
    span_start = span_last = kept[0][1]
    prev = kept[0][0]
    for el, idx in kept[1:]:
        text = _collapse_ws(el.text)
        breaks = False
        if prev.page == el.page and pitch is not None:
            if (el.bbox[1] - prev.bbox[1]) > config.gap_break_factor * pitch:
                breaks = True
        if not breaks and current and current[-1] in _TERMINAL_PUNCTUATION:
            em = el.font_size or 0.0
            if em > 0 and (el.bbox[0] - left_margin) > config.indent_break_em * em:
                breaks = True
        if breaks:
            paragraphs.append(Paragraph(current))
            spans.append((span_start, span_last))
            current = text
            span_start = idx
        else:
            current = _dehyphenate_join(current, text)
        span_last = idx
        prev = el
    paragraphs.append(Paragraph(current))
    spans.append((span_start, span_last))
    return paragraphs, spans


def reconstruct(
    stream: LayoutStream, config: ReconstructConfig | None = None
) -> ReconstructedDocument:
    """Classify furniture, detect sections, merge paragraphs, and place
    placeholders; the composition is deterministic for identical input."""
    cfg = config or ReconstructConfig()
    classified = classify_furniture(stream)
    if not any(el.kind is ElementKind.TEXT_LINE for el in classified.elements):
        raise EmptyDocument(stream.source_id)
    title, title_idx = _pick_title(classified)
    boundaries = detect_sections(classified, cfg)
    drafts = _build_drafts(classified, boundaries, title_idx, cfg)
    sections = place_placeholders(classified, drafts)
    stats = DocumentStats(
        pages=classified.page_count,
        elements_in=len(stream.elements),
        furniture_removed=sum(
            1 for el in classified.elements if el.kind in FURNITURE_KINDS
        ),
        placeholders_inserted=sum(
            1 for el in classified.elements if el.kind in NON_TEXTUAL_KINDS
        ),
    )
    return ReconstructedDocument(
        source_id=classified.source_id, title=title, sections=tuple(sections), stats=stats
    )


# ---------------------------------------------------------------------------
# Canonical JSON serialization
# ---------------------------------------------------------------------------

def _block_payload(block: Block) -> dict:
    if isinstance(block, Paragraph):
        return {"type": "paragraph", "text": block.text}
    return {
        "type": "placeholder",
        "kind": block.kind.value,
        "ref_id": block.ref_id,
        "caption": block.caption,
    }


def to_json(doc: ReconstructedDocument) -> bytes:
    """Canonical serialization: sorted keys, compact separators, UTF-8.
    Byte-stable for equal documents."""
    payload = {
        "source_id": doc.source_id,
        "title": doc.title,
        "sections": [
            {
                "label": section.label.value,
                "heading_text": section.heading_text,
                "blocks": [_block_payload(b) for b in section.blocks],
            }
            for section in doc.sections
        ],
        "stats": {
            "pages": doc.stats.pages,
            "elements_in": doc.stats.elements_in,
            "furniture_removed": doc.stats.furniture_removed,
            "placeholders_inserted": doc.stats.placeholders_inserted,
        },
    }
    return json.dumps(payload, sort_keys=True, ensure_ascii=False, separators=(",", ":")).encode(
        "utf-8"
    )


def _require(condition: bool, reason: str):
    if not condition:
        raise SchemaViolation(reason)


def from_json(data: bytes | str) -> ReconstructedDocument:
    """Parse a canonical document serialization; SchemaViolation on any defect."""
    if isinstance(data, bytes):
        try:
            data = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise SchemaViolation(f"not valid UTF-8: {exc}") from None
    try:
        payload = json.loads(data)
    except json.JSONDecodeError as exc:
        raise SchemaViolation(f"invalid JSON: {exc.msg}") from None
    _require(isinstance(payload, dict), "document must be a JSON object")
    _require(
        set(payload) == {"source_id", "title", "sections", "stats"},
        f"unexpected document keys: {sorted(payload)}",
    )
    _require(isinstance(payload["source_id"], str), "source_id must be a string")
    _require(isinstance(payload["title"], str), "title must be a string")
    _require(isinstance(payload["sections"], list), "sections must be a list")
    stats_raw = payload["stats"]
    _require(isinstance(stats_raw, dict), "stats must be an object")
    _require(
        set(stats_raw)
        == {"pages", "elements_in", "furniture_removed", "placeholders_inserted"},
        f"unexpected stats keys: {sorted(stats_raw)}",
    )
    for key, value in stats_raw.items():
        _require(
            isinstance(value, int) and not isinstance(value, bool) and value >= 0,
            f"stats.{key} must be a non-negative integer",
        )

    sections: list[Section] = []
    try:
        for raw in payload["sections"]:
            _require(isinstance(raw, dict), "section must be an object")
            _require(
                set(raw) == {"label", "heading_text", "blocks"},
                f"unexpected section keys: {sorted(raw)}",
            )
            label = SectionLabel(raw["label"])
            _require(isinstance(raw["heading_text"], str), "heading_text must be a string")
            blocks: list[Block] = []
            _require(isinstance(raw["blocks"], list), "blocks must be a list")
            for b in raw["blocks"]:
                _require(isinstance(b, dict) and "type" in b, "block must be a typed object")
                if b["type"] == "paragraph":
                    _require(set(b) == {"type", "text"}, "bad paragraph keys")
                    _require(isinstance(b["text"], str), "paragraph text must be a string")
                    blocks.append(Paragraph(b["text"]))
                elif b["type"] == "placeholder":
                    _require(set(b) == {"type", "kind", "ref_id", "caption"}, "bad placeholder keys")
                    _require(
                        isinstance(b["ref_id"], int) and not isinstance(b["ref_id"], bool),
                        "ref_id must be an integer",
                    )
                    _require(
                        b["caption"] is None or isinstance(b["caption"], str),
                        "caption must be a string or null",
                    )
                    blocks.append(
                        Placeholder(
                            kind=ElementKind(b["kind"]), ref_id=b["ref_id"], caption=b["caption"]
                        )
                    )
                else:
                    raise SchemaViolation(f"unknown block type {b['type']!r}")
            sections.append(Section(label, raw["heading_text"], tuple(blocks)))
        return ReconstructedDocument(
            source_id=payload["source_id"],
            title=payload["title"],
            sections=tuple(sections),
            stats=DocumentStats(
                pages=stats_raw["pages"],
                elements_in=stats_raw["elements_in"],
                furniture_removed=stats_raw["furniture_removed"],
                placeholders_inserted=stats_raw["placeholders_inserted"],
            ),
        )
    except ValueError as exc:
        raise SchemaViolation(str(exc)) from None
