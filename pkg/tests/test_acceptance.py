"""Release acceptance criteria.

Each test here is one gate; the terminal summary prints a PASS/FAIL line per
criterion (see conftest). Everything runs offline against the scripted mock
provider; no criterion may depend on a live endpoint.
"""

from __future__ import annotations

import csv
import random
import time

import numpy as np
import pytest
from click.testing import CliRunner
from scipy import stats as scipy_stats

from pemuta.cli import cli
from pemuta.evalharness import ScoreSeries, mae, mse, pcc
from pemuta.layout import classify_furniture, is_page_number_text, parse_layout_stream
from pemuta.llmclient import ChatClient, MockProvider, PacingPolicy, ScriptEntry
from pemuta.prompting import (
    EXEMPLAR_MARKER,
    InvalidPromptConfig,
    PromptConfig,
    PromptMode,
    build_composite_prompt,
    build_stage_prompts,
    build_standard_prompt,
    select_exemplars,
)
from pemuta.reconstruct import Paragraph, from_json, reconstruct, to_json
from pemuta.report import aggregate_holistic, report_from_json
from pemuta.rubric import (
    Dimension,
    Score,
    WeightProfile,
    core_weighted_profile,
    uniform_profile,
)

from conftest import FIXTURE_NAMES, GOLDEN, LAYOUT_FIXTURES
from helpers import random_document, write_dataset, write_echo_script
from test_pipeline import POOL

pytestmark = pytest.mark.acceptance

DIMENSION_MEANS = [8.20, 8.31, 8.36, 8.15, 9.05, 8.83]
PUBLISHED_HOLISTIC_MEAN = 8.39


def test_weighted_aggregation_consistency_with_dataset_means():
    scores = {dim: Score(v) for dim, v in zip(Dimension, DIMENSION_MEANS)}
    core = aggregate_holistic(scores, core_weighted_profile()).value
    assert core == pytest.approx(8.392, abs=1e-12)
    assert abs(core - PUBLISHED_HOLISTIC_MEAN) < 0.01
    # Uniform weights do NOT reproduce the published mean: the aggregation is
    # genuinely weight-sensitive.
    uniform = aggregate_holistic(scores, uniform_profile()).value
    assert uniform == pytest.approx(8.4833, abs=1e-4)
    assert abs(uniform - PUBLISHED_HOLISTIC_MEAN) >= 0.01


def test_metric_oracle_suite():
    rng = random.Random(20250811)
    for _ in range(1000):
        n = rng.randint(1, 100)
        truth = [rng.uniform(0.0, 10.0) for _ in range(n)]
        pred = [rng.uniform(0.0, 10.0) for _ in range(n)]
        s = ScoreSeries("holistic", tuple(zip(truth, pred)))
        y, p = np.asarray(truth), np.asarray(pred)
        assert mae(s) == pytest.approx(float(np.mean(np.abs(y - p))), abs=1e-9)
        assert mse(s) == pytest.approx(float(np.mean((y - p) ** 2)), abs=1e-9)
        if n >= 2:
            got = pcc(s)
            if float(np.std(y)) == 0.0 or float(np.std(p)) == 0.0:
                assert got is None
            else:
                expected = float(scipy_stats.pearsonr(y, p).statistic)
                assert got == pytest.approx(expected, abs=1e-9)

    # Affine invariance, sign flip, and the degenerate zero-variance case.
    truth = [rng.uniform(0, 10) for _ in range(60)]
    pred = [rng.uniform(0, 10) for _ in range(60)]
    base = pcc(ScoreSeries("holistic", tuple(zip(truth, pred))))
    for a, b in ((2.0, 1.0), (0.25, -3.0), (7.5, 0.0)):
        moved = pcc(ScoreSeries("holistic", tuple(zip(truth, [a * v + b for v in pred]))))
        assert moved == pytest.approx(base, abs=1e-9)
    flipped = pcc(ScoreSeries("holistic", tuple(zip(truth, [-v for v in pred]))))
    assert flipped == pytest.approx(-base, abs=1e-9)
    assert pcc(ScoreSeries("holistic", tuple((t, 4.2) for t in truth))) is None


def test_aggregation_properties():
    rng = random.Random(97)
    for _ in range(10_000):
        values = {dim: rng.uniform(0.0, 10.0) for dim in Dimension}
        raw = [rng.uniform(0.01, 1.0) for _ in Dimension]
        total = sum(raw)
        profile = WeightProfile({dim: w / total for dim, w in zip(Dimension, raw)})
        scores = {dim: Score(v) for dim, v in values.items()}
        holistic = aggregate_holistic(scores, profile).value

        # Bounds: the weighted sum stays inside the score envelope.
        assert min(values.values()) - 1e-9 <= holistic <= max(values.values()) + 1e-9

        # Strict monotonicity in any positively weighted dimension.
        bump_dim = rng.choice(list(Dimension))
        if values[bump_dim] < 9.5:
            bumped = dict(scores)
            bumped[bump_dim] = Score(values[bump_dim] + 0.5)
            assert aggregate_holistic(bumped, profile).value > holistic

        # Linearity under uniform scaling of all six scores.
        c = rng.uniform(0.05, 1.0)
        scaled = {dim: Score(values[dim] * c) for dim in Dimension}
        assert aggregate_holistic(scaled, profile).value == pytest.approx(
            c * holistic, abs=1e-9
        )

        # Permutation invariance of paired (score, weight).
        order = list(Dimension)
        rng.shuffle(order)
        permuted_profile = WeightProfile(
            {dim: profile[src] for dim, src in zip(Dimension, order)}
        )
        permuted_scores = {dim: scores[src] for dim, src in zip(Dimension, order)}
        assert aggregate_holistic(permuted_scores, permuted_profile).value == pytest.approx(
            holistic, abs=1e-9
        )


def _furniture_leaks(stream, doc) -> list[str]:
    classified = classify_furniture(stream)
    furniture_texts = {
        el.text.strip()
        for el in classified.elements
        if el.kind.value in ("header", "footer", "page-number") and el.text.strip()
    }
    paragraphs = [
        b.text for s in doc.sections for b in s.blocks if isinstance(b, Paragraph)
    ]
    leaks = []
    for text in furniture_texts:
        for para in paragraphs:
            if is_page_number_text(text):
                if text in para.split():
                    leaks.append(text)
            elif text in para:
                leaks.append(text)
    return leaks


def test_reconstruction_golden_suite():
    assert len(FIXTURE_NAMES) >= 5
    for name in FIXTURE_NAMES:
        raw = (LAYOUT_FIXTURES / f"{name}.layout.jsonl").read_bytes()
        stream = parse_layout_stream(raw, source_id=name)
        doc = reconstruct(stream)
        # Byte-stable golden serialization.
        assert to_json(doc) == (GOLDEN / f"{name}.doc.json").read_bytes(), name
        # Furniture never leaks into paragraph text.
        assert _furniture_leaks(stream, doc) == [], name
        # One placeholder per non-textual element.
        nontextual = sum(
            1 for el in stream.elements if el.kind.value in ("figure", "table", "equation")
        )
        placed = sum(
            1 for s in doc.sections for b in s.blocks if not isinstance(b, Paragraph)
        )
        assert placed == nontextual == doc.stats.placeholders_inserted, name

    rng = random.Random(31337)
    for _ in range(1000):
        doc = random_document(rng)
        assert from_json(to_json(doc)) == doc


def test_end_to_end_determinism_with_mock_provider(tmp_path):
    write_dataset(tmp_path, ids=["t01"])
    script = write_echo_script(tmp_path / "echo.json", ids=["t01"])
    runner = CliRunner()
    blobs = []
    for run in ("first", "second"):
        result = runner.invoke(
            cli,
            [
                "assess", str(tmp_path / "docs" / "t01.doc.json"),
                "--provider", "mock", "--script", str(script),
                "--mode", "composite", "--shots", "2", "--role-play",
                "--min-interval", "0", "--seed", "7",
                "--out", str(tmp_path / run),
            ],
        )
        assert result.exit_code == 0, result.output
        blobs.append((tmp_path / run / "t01.report.json").read_bytes())
    assert blobs[0] == blobs[1]

    report = report_from_json(blobs[0])
    profile = WeightProfile.from_dict(report.provenance["weight_profile"])
    recomputed = aggregate_holistic(
        {a.dimension: a.score for a in report.assessments}, profile
    )
    assert abs(report.holistic.value - recomputed.value) <= 1e-9


def _holistic_rows(results_csv) -> dict[str, dict]:
    rows = {}
    with open(results_csv, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            if row["target"] == "holistic":
                rows[row["config"]] = row
    return rows


def test_ablation_matrix_shape_and_mock_metrics(tmp_path):
    manifest = write_dataset(tmp_path)
    echo = write_echo_script(tmp_path / "echo.json")
    runner = CliRunner()

    result = runner.invoke(
        cli,
        [
            "ablate", str(manifest), "--suite", "both",
            "--provider", "mock", "--script", str(echo),
            "--min-interval", "0", "--out", str(tmp_path / "echo_run"),
        ],
    )
    assert result.exit_code == 0, result.output

    # Component suite: exactly the four toggle rows, in order.
    components = _holistic_rows(tmp_path / "echo_run" / "results_components.csv")
    assert list(components) == ["standard", "hier+role", "hier+fewshot", "full"]
    md = (tmp_path / "echo_run" / "results_components.md").read_text(encoding="utf-8")
    toggle_table = md.split("Per-dimension means:")[0]
    toggle_marks = [
        line.split("|")[2:5]
        for line in toggle_table.splitlines()
        if line.startswith("| standard") or line.startswith("| hier") or line.startswith("| full")
    ]
    assert [[m.strip() for m in marks] for marks in toggle_marks] == [
        ["-", "-", "-"],
        ["x", "x", "-"],
        ["x", "-", "x"],
        ["x", "x", "x"],
    ]

    # Shot suite: the 0/1/2/3 sweep.
    shots = _holistic_rows(tmp_path / "echo_run" / "results_shots.csv")
    assert list(shots) == ["0-shot", "1-shot", "2-shot", "3-shot"]

    # Echo script: zero error on every row of both suites.
    for stem in ("results_components.csv", "results_shots.csv"):
        with open(tmp_path / "echo_run" / stem, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        assert rows
        for row in rows:
            assert float(row["mae"]) == pytest.approx(0.0, abs=1e-9), row
            assert float(row["mse"]) == pytest.approx(0.0, abs=1e-9), row

    # Constant +1.0 shift: unit errors with perfect correlation on holistic.
    shifted = write_echo_script(tmp_path / "shift.json", shift=1.0)
    result = runner.invoke(
        cli,
        [
            "ablate", str(manifest), "--suite", "components",
            "--provider", "mock", "--script", str(shifted),
            "--min-interval", "0", "--out", str(tmp_path / "shift_run"),
        ],
    )
    assert result.exit_code == 0, result.output
    for row in _holistic_rows(tmp_path / "shift_run" / "results_components.csv").values():
        assert float(row["mae"]) == pytest.approx(1.0, abs=1e-9)
        assert float(row["mse"]) == pytest.approx(1.0, abs=1e-9)
        assert float(row["pcc"]) == pytest.approx(1.0, abs=1e-9)


def test_prompt_structure_conformance():
    from helpers import tiny_document

    doc = tiny_document("conformance-check")
    combos = [
        (mode, role, shots)
        for mode in PromptMode
        for role in (True, False)
        for shots in (0, 2)
    ]
    checked = 0
    for mode, role, shots in combos:
        try:
            config = PromptConfig(
                mode=mode, use_role_play=role, shot_count=shots, random_seed=1
            )
        except InvalidPromptConfig:
            assert mode is PromptMode.STANDARD and shots > 0
            continue
        exemplars = select_exemplars(POOL, shots, seed=1)
        if mode is PromptMode.COMPOSITE:
            bundles = [build_composite_prompt(doc, config, exemplars)]
        elif mode is PromptMode.STAGED:
            bundles = list(build_stage_prompts(doc, config, exemplars).dimension_bundles.values())
        else:
            bundles = [build_standard_prompt(doc, config)]
        for bundle in bundles:
            # System message present iff role play is on.
            assert (bundle.system_message is not None) == role
            # Exemplar block count equals the shot count.
            assert bundle.user_content.count(EXEMPLAR_MARKER) == shots
            # Dimension instructions present iff the mode is not standard.
            has_instructions = any(dim.aspects in bundle.user_content for dim in Dimension)
            assert has_instructions == (mode is not PromptMode.STANDARD)
            # The document text appears exactly once.
            assert bundle.user_content.count(doc.title) == 1
        checked += 1
    assert checked == 10  # 12 combos minus the two rejected standard+shots ones


def test_pacing_contract():
    dispatch_times = []

    class Recorder:
        provider_id = "recorder"

        def complete(self, request):
            dispatch_times.append(time.monotonic())
            return MockProvider([ScriptEntry(lambda r: True, "ok")]).complete(request)

    client = ChatClient(Recorder(), PacingPolicy(min_interval=0.2, max_retries=0))
    from pemuta.llmclient import ChatRequest, Message

    for _ in range(5):
        client.chat(ChatRequest(model_id="m", messages=(Message("user", "hi"),)))
    gaps = [b - a for a, b in zip(dispatch_times, dispatch_times[1:])]
    assert len(gaps) == 4
    for gap in gaps:
        assert gap >= 0.2 - 1e-3
        assert gap <= 0.2 + 0.05  # stated timing tolerance
