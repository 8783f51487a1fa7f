"""Layout interchange format and page-furniture classification.

The interchange contract is one UTF-8 JSON record per line (`.layout.jsonl`),
each a flat object with keys `page`, `kind`, `bbox`, `text`, `font_size`,
`font_bold`, `caption`. Lines starting with `#` are comment records written by
extraction adapters and are skipped. Coordinates are PDF points with the
origin at the page top-left and y increasing downward; extractors that use a
bottom-left origin must convert before emitting records.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, replace
from enum import Enum
from typing import Iterable

# Furniture classification thresholds. The repetition fraction is chosen to
# survive title pages and chapter openers; the bbox tolerance absorbs small
# extractor jitter between pages.
REPETITION_PAGE_FRACTION = 0.6
CENTER_TOLERANCE_PTS = 5.0


class LayoutError(Exception):
    """Base class for layout-stream errors."""


class MalformedRecord(LayoutError):
    def __init__(self, line_no: int, reason: str):
        self.line_no = line_no
        self.reason = reason
        super().__init__(f"line {line_no}: {reason}")


class EmptyStream(LayoutError):
    def __init__(self, source_id: str = ""):
        self.source_id = source_id
        super().__init__(f"layout stream {source_id!r} contains no elements")


class ElementKind(str, Enum):
    TEXT_LINE = "text-line"
    FIGURE = "figure"
    TABLE = "table"
    EQUATION = "equation"
    HEADER = "header"
    FOOTER = "footer"
    PAGE_NUMBER = "page-number"
    UNKNOWN = "unknown"


FURNITURE_KINDS = frozenset(
    {ElementKind.HEADER, ElementKind.FOOTER, ElementKind.PAGE_NUMBER}
)
NON_TEXTUAL_KINDS = frozenset(
    {ElementKind.FIGURE, ElementKind.TABLE, ElementKind.EQUATION}
)

# Kinds eligible for furniture re-labeling (input furniture stays as-is).
_RELABELABLE_KINDS = frozenset({ElementKind.TEXT_LINE, ElementKind.UNKNOWN})
_CLUSTERABLE_KINDS = _RELABELABLE_KINDS | FURNITURE_KINDS


@dataclass(frozen=True)
class LayoutElement:
    """One positioned fragment extracted from a PDF page."""

    page: int
    kind: ElementKind
    bbox: tuple[float, float, float, float]
    text: str = ""
    font_size: float | None = None
    font_bold: bool | None = None
    caption: str | None = None

    def __post_init__(self):
        x0, y0, x1, y1 = self.bbox
        if not (x0 < x1 and y0 < y1):
            raise ValueError(f"degenerate bbox {self.bbox!r}: needs x0 < x1 and y0 < y1")
        if self.page < 1:
            raise ValueError(f"page must be >= 1, got {self.page}")
        if self.kind is ElementKind.TEXT_LINE:
            if not self.text:
                raise ValueError("text-line element requires non-empty text")
            if self.font_size is None or self.font_size <= 0:
                raise ValueError("text-line element requires font_size > 0")

    @property
    def center(self) -> tuple[float, float]:
        x0, y0, x1, y1 = self.bbox
        return ((x0 + x1) / 2.0, (y0 + y1) / 2.0)


@dataclass(frozen=True)
class LayoutStream:
    """An ordered stream of layout elements for one source document.

    Order is page-major, then top-to-bottom by y0, ties broken by x0.
    """

    source_id: str
    page_count: int
    elements: tuple[LayoutElement, ...]

    def __post_init__(self):
        if self.page_count < 1:
            raise ValueError(f"page_count must be >= 1, got {self.page_count}")
        for el in self.elements:
            if el.page > self.page_count:
                raise ValueError(
                    f"element on page {el.page} exceeds page_count {self.page_count}"
                )
        object.__setattr__(self, "elements", tuple(self.elements))


_REQUIRED_KEYS = {"page", "kind", "bbox"}
_OPTIONAL_KEYS = {"text", "font_size", "font_bold", "caption"}


def _element_from_record(record: dict) -> LayoutElement:
    unknown = set(record) - _REQUIRED_KEYS - _OPTIONAL_KEYS
    if unknown:
        raise ValueError(f"unknown keys {sorted(unknown)}")
    missing = _REQUIRED_KEYS - set(record)
    if missing:
        raise ValueError(f"missing keys {sorted(missing)}")
    page = record["page"]
    if not isinstance(page, int) or isinstance(page, bool):
        raise ValueError(f"page must be an integer, got {page!r}")
    try:
        kind = ElementKind(record["kind"])
    except ValueError:
        raise ValueError(f"unknown kind {record['kind']!r}") from None
    bbox = record["bbox"]
    if (
        not isinstance(bbox, list)
        or len(bbox) != 4
        or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in bbox)
    ):
        raise ValueError(f"bbox must be a 4-element array of numbers, got {bbox!r}")
    text = record.get("text", "")
    if not isinstance(text, str):
        raise ValueError(f"text must be a string, got {text!r}")
    font_size = record.get("font_size")
    if font_size is not None and (
        not isinstance(font_size, (int, float)) or isinstance(font_size, bool)
    ):
        raise ValueError(f"font_size must be a number, got {font_size!r}")
    font_bold = record.get("font_bold")
    if font_bold is not None and not isinstance(font_bold, bool):
        raise ValueError(f"font_bold must be a boolean, got {font_bold!r}")
    caption = record.get("caption")
    if caption is not None and not isinstance(caption, str):
        raise ValueError(f"caption must be a string, got {caption!r}")
    return LayoutElement(
        page=page,
        kind=kind,
        bbox=tuple(float(v) for v in bbox),
        text=text,
        font_size=None if font_size is None else float(font_size),
        font_bold=font_bold,
        caption=caption,
    )


def parse_layout_stream(raw: str | bytes, source_id: str = "") -> LayoutStream:
    """Parse line-delimited layout records into a normalized stream.

    Blank lines and `#` comment lines are skipped. Element order in the
    result is deterministic for identical input bytes.

    Raises MalformedRecord (with the offending line number) or EmptyStream.
    """
    if isinstance(raw, bytes):
        try:
            raw = raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise MalformedRecord(0, f"input is not valid UTF-8: {exc}") from None
    elements: list[LayoutElement] = []
    # Records are delimited by newlines only: JSON may legally carry other
    # Unicode line boundaries (U+2028 etc.) unescaped inside strings.
    for line_no, line in enumerate(raw.split("\n"), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        try:
            record = json.loads(stripped)
        except json.JSONDecodeError as exc:
            raise MalformedRecord(line_no, f"invalid JSON: {exc.msg}") from None
        if not isinstance(record, dict):
            raise MalformedRecord(line_no, "record must be a JSON object")
        try:
            elements.append(_element_from_record(record))
        except ValueError as exc:
            raise MalformedRecord(line_no, str(exc)) from None
    if not elements:
        raise EmptyStream(source_id)
    elements.sort(key=lambda el: (el.page, el.bbox[1], el.bbox[0]))
    page_count = max(el.page for el in elements)
    return LayoutStream(source_id=source_id, page_count=page_count, elements=tuple(elements))


_WS_RE = re.compile(r"\s+")
_DIGIT_RUN_RE = re.compile(r"\d+")

# A line that is nothing but pagination: a decimal integer, a Roman numeral
# (front matter), or an "N / M" counter.
_PAGE_NUMBER_RES = (
    re.compile(r"^\d+$"),
    re.compile(r"^[ivxlcdm]+$", re.IGNORECASE),
    re.compile(r"^\d+\s*/\s*\d+$"),
)


def _normalize_for_repetition(text: str) -> str:
    # Digit runs collapse to a sentinel so running headers that embed chapter
    # or page numbers still cluster together ("Chapter 9" with "Chapter 10").
    collapsed = _WS_RE.sub(" ", text).strip()
    return _DIGIT_RUN_RE.sub("#", collapsed)


def is_page_number_text(text: str) -> bool:
    trimmed = text.strip()
    if not trimmed:
        return False
    return any(rx.match(trimmed) for rx in _PAGE_NUMBER_RES)


def classify_furniture(stream: LayoutStream) -> LayoutStream:
    """Re-kind repeated page decoration to header/footer/page-number.

    An element is furniture when its normalized text repeats at a
    near-identical position on at least REPETITION_PAGE_FRACTION of the
    pages (and on more than one page), or when its text is purely a page
    number. Elements are never added, removed, or reordered; idempotent.
    """
    if not stream.elements:
        return stream

    # Cluster candidate elements by normalized text, then by bbox center.
    clusters: dict[str, list[list[int]]] = {}
    for idx, el in enumerate(stream.elements):
        if el.kind not in _CLUSTERABLE_KINDS:
            continue
        key = _normalize_for_repetition(el.text)
        if not key:
            continue
        cx, cy = el.center
        placed = False
        for cluster in clusters.setdefault(key, []):
            ax, ay = stream.elements[cluster[0]].center
            if abs(cx - ax) <= CENTER_TOLERANCE_PTS and abs(cy - ay) <= CENTER_TOLERANCE_PTS:
                cluster.append(idx)
                placed = True
                break
        if not placed:
            clusters[key].append([idx])

    y_top = min(el.bbox[1] for el in stream.elements)
    y_bottom = max(el.bbox[3] for el in stream.elements)
    y_mid = (y_top + y_bottom) / 2.0

    new_kinds: dict[int, ElementKind] = {}

    def _furniture_kind(indices: list[int]) -> ElementKind:
        first = stream.elements[indices[0]]
        if is_page_number_text(first.text):
            return ElementKind.PAGE_NUMBER
        mean_cy = sum(stream.elements[i].center[1] for i in indices) / len(indices)
        return ElementKind.HEADER if mean_cy < y_mid else ElementKind.FOOTER

    for groups in clusters.values():
        for cluster in groups:
            pages = {stream.elements[i].page for i in cluster}
            repeats = len(pages) >= 2 and len(pages) >= REPETITION_PAGE_FRACTION * stream.page_count
            pure_number = is_page_number_text(stream.elements[cluster[0]].text)
            if not (repeats or pure_number):
                continue
            kind = _furniture_kind(cluster)
            for i in cluster:
                if stream.elements[i].kind in _RELABELABLE_KINDS:
                    new_kinds[i] = kind

    if not new_kinds:
        return stream
    elements = tuple(
        replace(el, kind=new_kinds[i]) if i in new_kinds else el
        for i, el in enumerate(stream.elements)
    )
    return LayoutStream(stream.source_id, stream.page_count, elements)


def body_text_lines(stream: LayoutStream) -> Iterable[tuple[int, LayoutElement]]:
    """Indexes and elements of non-furniture text lines, in stream order."""
    for idx, el in enumerate(stream.elements):
        if el.kind is ElementKind.TEXT_LINE:
            yield idx, el
