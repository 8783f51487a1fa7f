from __future__ import annotations

import json
from pathlib import Path

import pytest

from pemuta.layout import LayoutElement, LayoutStream, ElementKind

FIXTURES = Path(__file__).parent / "fixtures"
LAYOUT_FIXTURES = FIXTURES / "layout"
GOLDEN = FIXTURES / "golden"
REPLIES = FIXTURES / "replies"

FIXTURE_NAMES = [
    "three_sections",
    "placeholders",
    "cjk",
    "hyphen_indent",
    "furniture_heavy",
]


def text_line(
    page: int,
    y0: float,
    text: str,
    x0: float = 72.0,
    font_size: float = 10.5,
    bold: bool = False,
    height: float = 11.0,
    width: float = 400.0,
) -> LayoutElement:
    return LayoutElement(
        page=page,
        kind=ElementKind.TEXT_LINE,
        bbox=(x0, y0, x0 + width, y0 + height),
        text=text,
        font_size=font_size,
        font_bold=bold,
    )


def stream_of(elements, source_id="test", page_count=None) -> LayoutStream:
    pages = page_count or max(el.page for el in elements)
    ordered = sorted(elements, key=lambda el: (el.page, el.bbox[1], el.bbox[0]))
    return LayoutStream(source_id=source_id, page_count=pages, elements=tuple(ordered))


@pytest.fixture
def layout_fixture_bytes():
    def _load(name: str) -> bytes:
        return (LAYOUT_FIXTURES / f"{name}.layout.jsonl").read_bytes()

    return _load


def _acceptance_items(terminalreporter):
    lines = []
    for outcome in ("passed", "failed"):
        for report in terminalreporter.stats.get(outcome, []):
            if getattr(report, "when", "call") != "call":
                continue
            if "acceptance" in report.keywords:
                name = report.nodeid.split("::")[-1]
                lines.append((name, outcome.upper()))
    return lines


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    items = _acceptance_items(terminalreporter)
    if not items:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome in sorted(items):
        terminalreporter.write_line(f"{outcome:>6}  {name}")
