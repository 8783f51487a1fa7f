"""Evaluation harness: expert-annotated datasets, accuracy metrics, dataset
statistics, and the ablation config matrix.

The dataset manifest is a delimited text file with one record per row:
`id, doc_path, structure, logic, originality, writing, proficiency, rigor,
holistic`. Records whose ids belong to the exemplar pool are excluded from
every metric series. Matrix runs checkpoint per-record predictions to disk so
interrupted live runs resume without re-querying the provider.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Mapping, Sequence

from .llmclient import LlmClientError
from .prompting import PromptConfig, PromptError, PromptMode
from .report import AssessmentReport, HolisticOnlyResult, ReportError
from .rubric import Dimension, Score, ScoreOutOfRange

logger = logging.getLogger(__name__)

HOLISTIC_TARGET = "holistic"

# Evaluation targets, in output order: the six dimensions then holistic.
TARGETS = tuple(dim.value for dim in Dimension) + (HOLISTIC_TARGET,)


class EvalError(Exception):
    """Base class for harness errors."""


class EmptySeries(EvalError):
    pass


class TooFewPoints(EvalError):
    pass


class EmptyDataset(EvalError):
    pass


class ManifestError(EvalError):
    def __init__(self, line_no: int, reason: str):
        self.line_no = line_no
        self.reason = reason
        super().__init__(f"manifest line {line_no}: {reason}")


@dataclass(frozen=True)
class DatasetRecord:
    """One expert-annotated thesis: a document reference plus seven scores."""

    id: str
    doc_path: Path | None
    dimension_scores: Mapping[Dimension, Score]
    holistic: Score | None

    def truth(self, target: str) -> float:
        if target == HOLISTIC_TARGET:
            if self.holistic is None:
                raise KeyError(target)
            return self.holistic.value
        return self.dimension_scores[Dimension(target)].value


@dataclass(frozen=True)
class ScoreSeries:
    """Paired (truth, prediction) values for one target."""

    target: str
    pairs: tuple[tuple[float, float], ...]

    def __post_init__(self):
        object.__setattr__(self, "pairs", tuple((float(y), float(p)) for y, p in self.pairs))
        if not self.pairs:
            raise EmptySeries(f"series for {self.target} is empty")

    @property
    def n(self) -> int:
        return len(self.pairs)


def mae(series: ScoreSeries) -> float:
    """Mean absolute difference between truth and prediction."""
    return sum(abs(y - p) for y, p in series.pairs) / series.n


def mse(series: ScoreSeries) -> float:
    """Mean squared difference; penalizes larger errors more heavily."""
    return sum((y - p) ** 2 for y, p in series.pairs) / series.n


def pcc(series: ScoreSeries) -> float | None:
    """Pearson correlation between truth and prediction.

    Returns None (undefined) when either side has zero variance; raises
    TooFewPoints below two pairs.
    """
    if series.n < 2:
        raise TooFewPoints(f"PCC needs at least 2 pairs, got {series.n}")
    ys = [y for y, _ in series.pairs]
    ps = [p for _, p in series.pairs]
    # A constant side means zero variance; detect it by equality, since the
    # centered square sums can carry float dust instead of an exact zero.
    if all(v == ys[0] for v in ys) or all(v == ps[0] for v in ps):
        return None
    y_mean = sum(ys) / len(ys)
    p_mean = sum(ps) / len(ps)
    syy = sum((y - y_mean) ** 2 for y in ys)
    spp = sum((p - p_mean) ** 2 for p in ps)
    if syy == 0.0 or spp == 0.0:
        return None
    syp = sum((y - y_mean) * (p - p_mean) for y, p in series.pairs)
    return syp / math.sqrt(syy * spp)


@dataclass(frozen=True)
class TargetStats:
    mean: float
    std: float
    min: float
    max: float
    n: int
    degenerate: bool = False  # single observation: std is reported as 0


def _sample_stats(values: Sequence[float]) -> TargetStats:
    n = len(values)
    mean = sum(values) / n
    if n == 1:
        return TargetStats(mean=mean, std=0.0, min=values[0], max=values[0], n=1, degenerate=True)
    var = sum((v - mean) ** 2 for v in values) / (n - 1)
    return TargetStats(mean=mean, std=math.sqrt(var), min=min(values), max=max(values), n=n)


def dataset_stats(records: Sequence[DatasetRecord]) -> dict[str, TargetStats]:
    """Per-target sample statistics (n-1 standard deviation) over the dataset."""
    if not records:
        raise EmptyDataset("no records to summarize")
    stats: dict[str, TargetStats] = {}
    for target in TARGETS:
        values = []
        for record in records:
            try:
                values.append(record.truth(target))
            except KeyError:
                continue
        if values:
            stats[target] = _sample_stats(values)
    return stats


# ---------------------------------------------------------------------------
# Manifest loading
# ---------------------------------------------------------------------------

_MANIFEST_COLUMNS = 9


def load_manifest(path: str | Path) -> list[DatasetRecord]:
    """Read a dataset manifest. A header row starting with `id` is skipped;
    doc_path cells are resolved relative to the manifest's directory and may
    be empty (score-only exemplar records)."""
    path = Path(path)
    base = path.parent
    records: list[DatasetRecord] = []
    with path.open(newline="", encoding="utf-8") as fh:
        for line_no, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            cells = [cell.strip() for cell in row]
            if line_no == 1 and cells[0].lower() == "id":
                continue
            if len(cells) != _MANIFEST_COLUMNS:
                raise ManifestError(
                    line_no, f"expected {_MANIFEST_COLUMNS} columns, got {len(cells)}"
                )
            record_id = cells[0]
            if not record_id:
                raise ManifestError(line_no, "empty record id")
            doc_path = base / cells[1] if cells[1] else None
            try:
                scores = {
                    dim: Score(float(cells[2 + i])) for i, dim in enumerate(Dimension)
                }
                holistic = Score(float(cells[8]))
            except (ValueError, ScoreOutOfRange) as exc:
                raise ManifestError(line_no, str(exc)) from None
            records.append(
                DatasetRecord(
                    id=record_id,
                    doc_path=doc_path,
                    dimension_scores=scores,
                    holistic=holistic,
                )
            )
    if not records:
        raise EmptyDataset(f"manifest {path} holds no records")
    return records


# ---------------------------------------------------------------------------
# Ablation presets
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MatrixConfig:
    """One labeled row of a config matrix, with its toggle columns."""

    label: str
    config: PromptConfig
    toggles: Mapping[str, bool] = field(default_factory=dict)


def component_presets(base: PromptConfig) -> list[MatrixConfig]:
    """The four-row component ablation: the bare baseline, then hierarchical
    instructions combined with role play and few-shot exemplars."""

    def variant(mode: PromptMode, role: bool, shots: int) -> PromptConfig:
        return replace(base, mode=mode, use_role_play=role, shot_count=shots)

    return [
        MatrixConfig(
            label="standard",
            config=variant(PromptMode.STANDARD, False, 0),
            toggles={"H-P": False, "R-P": False, "F-S": False},
        ),
        MatrixConfig(
            label="hier+role",
            config=variant(PromptMode.COMPOSITE, True, 0),
            toggles={"H-P": True, "R-P": True, "F-S": False},
        ),
        MatrixConfig(
            label="hier+fewshot",
            config=variant(PromptMode.COMPOSITE, False, 2),
            toggles={"H-P": True, "R-P": False, "F-S": True},
        ),
        MatrixConfig(
            label="full",
            config=variant(PromptMode.COMPOSITE, True, 2),
            toggles={"H-P": True, "R-P": True, "F-S": True},
        ),
    ]


def shot_sweep_presets(
    base: PromptConfig, shot_counts: Sequence[int] = (0, 1, 2, 3)
) -> list[MatrixConfig]:
    """Exemplar-count sweep on top of hierarchical + role-play prompting."""
    return [
        MatrixConfig(
            label=f"{k}-shot",
            config=replace(base, mode=PromptMode.COMPOSITE, use_role_play=True, shot_count=k),
            toggles={"shots": bool(k)},
        )
        for k in shot_counts
    ]


# ---------------------------------------------------------------------------
# Config matrix runner
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TargetMetrics:
    mean: float
    std: float
    mae: float
    mse: float
    pcc: float | None
    n: int

    def __post_init__(self):
        if self.mae**2 > self.mse + 1e-9:
            raise ValueError(f"MAE^2 {self.mae**2!r} exceeds MSE {self.mse!r}")


@dataclass(frozen=True)
class EvalResult:
    """Metrics for one config over the dataset, plus run provenance."""

    label: str
    toggles: Mapping[str, bool]
    targets: Mapping[str, TargetMetrics]
    provenance: Mapping
    failures: Mapping[str, str]
    complete: bool


PredictionMap = dict[str, float]  # target -> predicted value


def predictions_from_result(result: AssessmentReport | HolisticOnlyResult) -> PredictionMap:
    if isinstance(result, HolisticOnlyResult):
        return {HOLISTIC_TARGET: result.holistic.value}
    preds = {a.dimension.value: a.score.value for a in result.assessments}
    preds[HOLISTIC_TARGET] = result.holistic.value
    return preds


def _metrics_for(series: ScoreSeries) -> TargetMetrics:
    preds = [p for _, p in series.pairs]
    stats = _sample_stats(preds)
    return TargetMetrics(
        mean=stats.mean,
        std=stats.std,
        mae=mae(series),
        mse=mse(series),
        pcc=pcc(series) if series.n >= 2 else None,
        n=series.n,
    )


def run_config_matrix(
    records: Sequence[DatasetRecord],
    configs: Sequence[MatrixConfig],
    assess: Callable[[DatasetRecord, PromptConfig], AssessmentReport | HolisticOnlyResult],
    exemplar_pool_ids: Sequence[str] = (),
    checkpoint_dir: Path | None = None,
    report_sink: Callable[[str, str, AssessmentReport | HolisticOnlyResult], None] | None = None,
) -> list[EvalResult]:
    """Assess every non-exemplar record under each config and pair the
    predictions with the expert scores.

    `assess` runs one record under one config (the pipeline wires it to a
    client); per-record failures are recorded without aborting the matrix.
    `report_sink(config_label, record_id, outcome)` receives each fresh
    assessment, e.g. to persist per-record reports.
    """
    pool_ids = set(exemplar_pool_ids)
    eligible = [r for r in records if r.id not in pool_ids]
    if not eligible:
        raise EmptyDataset("every record belongs to the exemplar pool")

    results: list[EvalResult] = []
    for matrix_config in configs:
        failures: dict[str, str] = {}
        predictions: dict[str, PredictionMap] = {}
        for record in eligible:
            checkpoint = None
            if checkpoint_dir is not None:
                checkpoint = checkpoint_dir / matrix_config.label / f"{record.id}.json"
            if checkpoint is not None and checkpoint.exists():
                predictions[record.id] = json.loads(checkpoint.read_text(encoding="utf-8"))
                logger.info("%s/%s: resumed from checkpoint", matrix_config.label, record.id)
                continue
            try:
                outcome = assess(record, matrix_config.config)
            except (LlmClientError, PromptError, ReportError, EvalError, OSError) as exc:
                failures[record.id] = type(exc).__name__
                logger.warning(
                    "%s/%s: assessment failed (%s)",
                    matrix_config.label,
                    record.id,
                    type(exc).__name__,
                )
                continue
            logger.info("%s/%s: assessed", matrix_config.label, record.id)
            preds = predictions_from_result(outcome)
            predictions[record.id] = preds
            if report_sink is not None:
                report_sink(matrix_config.label, record.id, outcome)
            if checkpoint is not None:
                checkpoint.parent.mkdir(parents=True, exist_ok=True)
                checkpoint.write_text(
                    json.dumps(preds, sort_keys=True), encoding="utf-8"
                )

        target_metrics: dict[str, TargetMetrics] = {}
        for target in TARGETS:
            pairs = [
                (record.truth(target), predictions[record.id][target])
                for record in eligible
                if record.id in predictions and target in predictions[record.id]
            ]
            if pairs:
                target_metrics[target] = _metrics_for(ScoreSeries(target, tuple(pairs)))

        results.append(
            EvalResult(
                label=matrix_config.label,
                toggles=dict(matrix_config.toggles),
                targets=target_metrics,
                provenance={
                    "label": matrix_config.label,
                    "mode": matrix_config.config.mode.value,
                    "role_play": matrix_config.config.use_role_play,
                    "shot_count": matrix_config.config.shot_count,
                    "weight_profile": matrix_config.config.weight_profile.to_dict(),
                    "seed": matrix_config.config.random_seed,
                    "excluded_exemplar_ids": sorted(pool_ids),
                    "records_assessed": sorted(predictions),
                },
                failures=failures,
                complete=not failures,
            )
        )
    return results


# ---------------------------------------------------------------------------
# Results serialization
# ---------------------------------------------------------------------------

def _format_cell(value: float | None) -> str:
    return "" if value is None else f"{value:.4f}"


def write_results_csv(results: Sequence[EvalResult], path: Path):
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["config", "target", "n", "mean", "std", "mae", "mse", "pcc"])
        for result in results:
            for target in TARGETS:
                metrics = result.targets.get(target)
                if metrics is None:
                    continue
                writer.writerow(
                    [
                        result.label,
                        target,
                        metrics.n,
                        _format_cell(metrics.mean),
                        _format_cell(metrics.std),
                        _format_cell(metrics.mae),
                        _format_cell(metrics.mse),
                        _format_cell(metrics.pcc),
                    ]
                )


def _toggle_mark(value: bool) -> str:
    return "x" if value else "-"


def results_markdown(results: Sequence[EvalResult], title: str) -> str:
    """Pretty tables: holistic metrics with toggle columns, then the
    per-dimension mean table."""
    lines = [f"## {title}", ""]
    toggle_names: list[str] = []
    for result in results:
        for name in result.toggles:
            if name not in toggle_names:
                toggle_names.append(name)
    header = ["Config"] + toggle_names + ["MEAN", "Std", "MAE", "MSE", "PCC", "N"]
    lines.append("| " + " | ".join(header) + " |")
    lines.append("|" + "---|" * len(header))
    for result in results:
        h = result.targets.get(HOLISTIC_TARGET)
        row = [result.label]
        row += [_toggle_mark(result.toggles.get(name, False)) for name in toggle_names]
        if h is None:
            row += ["-"] * 6
        else:
            row += [
                f"{h.mean:.2f}",
                f"{h.std:.2f}",
                f"{h.mae:.2f}",
                f"{h.mse:.2f}",
                "-" if h.pcc is None else f"{h.pcc:.2f}",
                str(h.n),
            ]
        if not result.complete:
            row[0] += " (incomplete)"
        lines.append("| " + " | ".join(row) + " |")
    lines.append("")

    dim_targets = [t for t in TARGETS if t != HOLISTIC_TARGET]
    if any(t in result.targets for result in results for t in dim_targets):
        lines.append("Per-dimension means:")
        lines.append("")
        header = ["Config"] + [Dimension(t).display_name for t in dim_targets]
        lines.append("| " + " | ".join(header) + " |")
        lines.append("|" + "---|" * len(header))
        for result in results:
            row = [result.label]
            for t in dim_targets:
                metrics = result.targets.get(t)
                row.append("-" if metrics is None else f"{metrics.mean:.2f}")
            lines.append("| " + " | ".join(row) + " |")
        lines.append("")
    return "\n".join(lines)


def stats_markdown(stats: Mapping[str, TargetStats]) -> str:
    """Dataset score statistics in a dimension-by-row table."""
    lines = [
        "| Target | MEAN | Std | Min | Max | N |",
        "|---|---|---|---|---|---|",
    ]
    for target in TARGETS:
        s = stats.get(target)
        if s is None:
            continue
        name = "Holistic" if target == HOLISTIC_TARGET else Dimension(target).display_name
        std = f"{s.std:.2f}" + (" (single record)" if s.degenerate else "")
        lines.append(
            f"| {name} | {s.mean:.2f} | {std} | {s.min:.1f} | {s.max:.1f} | {s.n} |"
        )
    return "\n".join(lines) + "\n"
