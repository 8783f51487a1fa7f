"""Command-line surface for batch operation.

Subcommands: `ingest` (layout jsonl -> doc.json + flat text), `assess`
(document -> report), `evaluate` (manifest -> results tables under one
config), `ablate` (preset config matrix), and `stats` (manifest -> score
statistics). Every run writes a provenance file with the resolved
configuration, template hash, and seeds; all outputs land under --out.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path
from typing import Sequence

import click

from . import evalharness, pipeline
from .evalharness import (
    DatasetRecord,
    EvalError,
    MatrixConfig,
    component_presets,
    dataset_stats,
    load_manifest,
    run_config_matrix,
    shot_sweep_presets,
    stats_markdown,
    write_results_csv,
)
from .layout import LayoutError, parse_layout_stream
from .llmclient import (
    ChatClient,
    LlmClientError,
    PacingPolicy,
    load_mock_script,
    provider_from_env,
)
from .prompting import (
    PromptConfig,
    PromptError,
    PromptMode,
    load_templates,
)
from .reconstruct import ReconstructError, reconstruct, to_json
from .report import (
    HolisticOnlyResult,
    ReportError,
    render,
    render_holistic_only,
)
from .rubric import RubricError, WeightProfile, core_weighted_profile, uniform_profile

_PIPELINE_ERRORS = (
    LayoutError,
    ReconstructError,
    PromptError,
    LlmClientError,
    ReportError,
    EvalError,
    RubricError,
    OSError,
    ValueError,
)


def _fail(exc: Exception):
    click.echo(f"error: {type(exc).__name__}: {exc}", err=True)
    sys.exit(1)


def _load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(raw, dict):
        raise ValueError("config file must hold a JSON object")
    return raw


def _resolved(ctx: click.Context, name: str, file_config: dict):
    """Flag value unless it was defaulted and the config file pins it."""
    value = ctx.params[name]
    source = ctx.get_parameter_source(name)
    if source == click.core.ParameterSource.DEFAULT and name in file_config:
        return file_config[name]
    return value


def _weights_from(spec: str) -> WeightProfile:
    if spec == "uniform":
        return uniform_profile()
    if spec == "core":
        return core_weighted_profile()
    raw = json.loads(Path(spec).read_text(encoding="utf-8"))
    return WeightProfile.from_dict(raw)


def _prompt_config(ctx: click.Context, file_config: dict) -> PromptConfig:
    return PromptConfig(
        mode=PromptMode(_resolved(ctx, "mode", file_config)),
        use_role_play=_resolved(ctx, "role_play", file_config),
        shot_count=_resolved(ctx, "shots", file_config),
        weight_profile=_weights_from(_resolved(ctx, "weights", file_config)),
        random_seed=_resolved(ctx, "seed", file_config),
        context_budget_tokens=_resolved(ctx, "context_budget", file_config),
        template_dir=_maybe_path(_resolved(ctx, "template_dir", file_config)),
    )


def _maybe_path(value) -> Path | None:
    return Path(value) if value else None


def _build_client(ctx: click.Context, file_config: dict) -> tuple[ChatClient, str]:
    provider_name = _resolved(ctx, "provider", file_config)
    policy = PacingPolicy(min_interval=_resolved(ctx, "min_interval", file_config))
    if provider_name == "mock":
        script = _resolved(ctx, "script", file_config)
        if not script:
            raise click.UsageError("--provider mock requires --script")
        provider = load_mock_script(script)
        model_id = _resolved(ctx, "model", file_config) or "mock-model"
    else:
        provider, env_model = provider_from_env()
        model_id = _resolved(ctx, "model", file_config) or env_model
    return ChatClient(provider, policy), model_id


def _load_pool(pool_path: str | None) -> list[DatasetRecord]:
    if pool_path:
        return load_manifest(pool_path)
    from importlib import resources

    with resources.as_file(
        resources.files("pemuta").joinpath("data/exemplar_pool.csv")
    ) as packaged:
        return load_manifest(packaged)


def _write_provenance(out_dir: Path, payload: dict):
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "provenance.json").write_text(
        json.dumps(payload, sort_keys=True, indent=2, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )


def _run_provenance(ctx: click.Context, command: str, config: PromptConfig, extra: dict) -> dict:
    templates = load_templates(config.template_dir)
    payload = {
        "command": command,
        "mode": config.mode.value,
        "role_play": config.use_role_play,
        "shot_count": config.shot_count,
        "weight_profile": config.weight_profile.to_dict(),
        "seed": config.random_seed,
        "context_budget_tokens": config.context_budget_tokens,
        "template_hash": templates.digest,
        "min_interval": ctx.params.get("min_interval"),
        "provider": ctx.params.get("provider"),
        "model": ctx.params.get("model"),
    }
    payload.update(extra)
    return payload


def _prompt_options(fn):
    options = [
        click.option(
            "--mode",
            type=click.Choice([m.value for m in PromptMode]),
            default=PromptMode.COMPOSITE.value,
            show_default=True,
            help="Prompting protocol.",
        ),
        click.option("--shots", type=click.IntRange(min=0), default=2, show_default=True),
        click.option("--role-play/--no-role-play", "role_play", default=True, show_default=True),
        click.option(
            "--weights",
            default="uniform",
            show_default=True,
            help="uniform, core, or a path to a JSON weight map.",
        ),
        click.option("--min-interval", type=float, default=30.0, show_default=True),
        click.option("--seed", type=int, default=0, show_default=True),
        click.option(
            "--context-budget", type=int, default=120_000, show_default=True,
            help="Prompt token budget; oversized documents fail loudly.",
        ),
        click.option("--template-dir", default=None, help="Override the prompt template directory."),
        click.option(
            "--provider",
            type=click.Choice(["openai", "mock"]),
            default="openai",
            show_default=True,
        ),
        click.option("--script", default=None, help="Mock provider script (JSON)."),
        click.option("--model", default=None, help="Model id (default: PEMUTA_MODEL)."),
        click.option("--pool", default=None, help="Exemplar pool manifest (default: packaged)."),
        click.option("--config", "config_file", default=None, help="JSON config file with defaults."),
        click.option("--out", default="out", show_default=True, help="Output directory."),
    ]
    for option in reversed(options):
        fn = option(fn)
    return fn


@click.group()
def cli():
    """Multi-granular thesis assessment pipeline."""


@cli.command()
@click.argument("layout_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", default="out", show_default=True, help="Output directory.")
def ingest(layout_file: str, out: str):
    """Reconstruct a structured document from a LAYOUT_FILE (.layout.jsonl)."""
    try:
        source_id = pipeline.document_id_for(Path(layout_file))
        stream = parse_layout_stream(Path(layout_file).read_bytes(), source_id=source_id)
        doc = reconstruct(stream)
        out_dir = Path(out)
        out_dir.mkdir(parents=True, exist_ok=True)
        doc_path = out_dir / f"{source_id}.doc.json"
        doc_path.write_bytes(to_json(doc))
        (out_dir / f"{source_id}.txt").write_text(doc.flat_text(), encoding="utf-8")
        _write_provenance(
            out_dir,
            {
                "command": "ingest",
                "input": str(layout_file),
                "source_id": source_id,
                "stats": {
                    "pages": doc.stats.pages,
                    "elements_in": doc.stats.elements_in,
                    "furniture_removed": doc.stats.furniture_removed,
                    "placeholders_inserted": doc.stats.placeholders_inserted,
                },
            },
        )
        click.echo(f"wrote {doc_path}")
    except _PIPELINE_ERRORS as exc:
        _fail(exc)


@cli.command()
@click.argument("document", type=click.Path(exists=True, dir_okay=False))
@_prompt_options
@click.pass_context
def assess(ctx: click.Context, document: str, **_kwargs):
    """Assess one DOCUMENT (.doc.json or .layout.jsonl) into a report."""
    try:
        file_config = _load_config_file(ctx.params["config_file"])
        config = _prompt_config(ctx, file_config)
        client, model_id = _build_client(ctx, file_config)
        pool = _load_pool(_resolved(ctx, "pool", file_config))
        doc = pipeline.load_document(document)
        result = pipeline.assess_document(doc, config, client, model_id, pool=pool)
        out_dir = Path(ctx.params["out"])
        out_dir.mkdir(parents=True, exist_ok=True)
        if isinstance(result, HolisticOnlyResult):
            (out_dir / f"{doc.source_id}.report.json").write_bytes(
                render_holistic_only(result)
            )
            click.echo(f"holistic score: {result.holistic.value:.1f}")
        else:
            (out_dir / f"{doc.source_id}.report.json").write_bytes(render(result, "json"))
            (out_dir / f"{doc.source_id}.report.md").write_bytes(render(result, "markdown"))
            click.echo(f"holistic score: {result.holistic.value:.1f}")
        _write_provenance(
            out_dir,
            _run_provenance(
                ctx, "assess", config, {"input": str(document), "model": model_id}
            ),
        )
    except _PIPELINE_ERRORS as exc:
        _fail(exc)


def _assess_closure(client: ChatClient, model_id: str, pool):
    templates_cache = {}

    def _assess(record: DatasetRecord, config: PromptConfig):
        if record.doc_path is None:
            raise EvalError(f"record {record.id} has no document path")
        doc = pipeline.load_document(record.doc_path)
        key = config.template_dir
        if key not in templates_cache:
            templates_cache[key] = load_templates(config.template_dir)
        return pipeline.assess_document(
            doc, config, client, model_id, pool=pool, templates=templates_cache[key]
        )

    return _assess


def _report_sink(reports_dir: Path, nest_by_label: bool):
    def _sink(label: str, record_id: str, outcome):
        target_dir = reports_dir / label if nest_by_label else reports_dir
        target_dir.mkdir(parents=True, exist_ok=True)
        if isinstance(outcome, HolisticOnlyResult):
            (target_dir / f"{record_id}.json").write_bytes(render_holistic_only(outcome))
        else:
            (target_dir / f"{record_id}.json").write_bytes(render(outcome, "json"))

    return _sink


def _emit_matrix(results, out_dir: Path, title: str, stem: str):
    out_dir.mkdir(parents=True, exist_ok=True)
    write_results_csv(results, out_dir / f"{stem}.csv")
    (out_dir / f"{stem}.md").write_text(
        evalharness.results_markdown(results, title), encoding="utf-8"
    )
    click.echo(f"wrote {out_dir / (stem + '.csv')}")


@cli.command()
@click.argument("manifest", type=click.Path(exists=True, dir_okay=False))
@_prompt_options
@click.pass_context
def evaluate(ctx: click.Context, manifest: str, **_kwargs):
    """Assess every record in MANIFEST under one config; emit metric tables."""
    try:
        file_config = _load_config_file(ctx.params["config_file"])
        config = _prompt_config(ctx, file_config)
        client, model_id = _build_client(ctx, file_config)
        pool = _load_pool(_resolved(ctx, "pool", file_config))
        records = load_manifest(manifest)
        out_dir = Path(ctx.params["out"])
        results = run_config_matrix(
            records,
            [MatrixConfig(label="run", config=config)],
            _assess_closure(client, model_id, pool),
            exemplar_pool_ids=[r.id for r in pool],
            checkpoint_dir=out_dir / "checkpoints" / model_id,
            report_sink=_report_sink(out_dir / "reports", nest_by_label=False),
        )
        _emit_matrix(results, out_dir, "Evaluation results", "results")
        _write_provenance(
            out_dir,
            _run_provenance(
                ctx,
                "evaluate",
                config,
                {"manifest": str(manifest), "model": model_id,
                 "excluded_exemplar_ids": sorted(r.id for r in pool)},
            ),
        )
        if any(not r.complete for r in results):
            for result in results:
                for record_id, error in result.failures.items():
                    click.echo(f"record {record_id} failed: {error}", err=True)
            sys.exit(1)
    except _PIPELINE_ERRORS as exc:
        _fail(exc)


@cli.command()
@click.argument("manifest", type=click.Path(exists=True, dir_okay=False))
@click.option(
    "--suite",
    type=click.Choice(["components", "shots", "both"]),
    default="both",
    show_default=True,
)
@_prompt_options
@click.pass_context
def ablate(ctx: click.Context, manifest: str, suite: str, **_kwargs):
    """Run the preset ablation matrix over MANIFEST."""
    try:
        file_config = _load_config_file(ctx.params["config_file"])
        base = _prompt_config(ctx, file_config)
        client, model_id = _build_client(ctx, file_config)
        pool = _load_pool(_resolved(ctx, "pool", file_config))
        records = load_manifest(manifest)
        out_dir = Path(ctx.params["out"])
        pool_ids = [r.id for r in pool]
        assess_one = _assess_closure(client, model_id, pool)

        suites: list[tuple[str, str, Sequence[MatrixConfig]]] = []
        if suite in ("components", "both"):
            suites.append(("components", "Component ablation", component_presets(base)))
        if suite in ("shots", "both"):
            suites.append(("shots", "Few-shot exemplar sweep", shot_sweep_presets(base)))
        incomplete = False
        for stem, title, configs in suites:
            results = run_config_matrix(
                records,
                configs,
                assess_one,
                exemplar_pool_ids=pool_ids,
                checkpoint_dir=out_dir / "checkpoints" / model_id / stem,
                report_sink=_report_sink(out_dir / "reports", nest_by_label=True),
            )
            _emit_matrix(results, out_dir, title, f"results_{stem}")
            incomplete = incomplete or any(not r.complete for r in results)
        _write_provenance(
            out_dir,
            _run_provenance(
                ctx,
                "ablate",
                base,
                {"manifest": str(manifest), "suite": suite, "model": model_id,
                 "excluded_exemplar_ids": sorted(pool_ids)},
            ),
        )
        if incomplete:
            click.echo("matrix incomplete: some records failed", err=True)
            sys.exit(1)
    except _PIPELINE_ERRORS as exc:
        _fail(exc)


@cli.command()
@click.argument("manifest", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", default=None, help="Also write stats.md under this directory.")
def stats(manifest: str, out: str | None):
    """Score statistics (mean/std/min/max) per dimension and holistic."""
    try:
        table = stats_markdown(dataset_stats(load_manifest(manifest)))
        click.echo(table, nl=False)
        if out:
            out_dir = Path(out)
            out_dir.mkdir(parents=True, exist_ok=True)
            (out_dir / "stats.md").write_text(table, encoding="utf-8")
            _write_provenance(out_dir, {"command": "stats", "manifest": str(manifest)})
    except _PIPELINE_ERRORS as exc:
        _fail(exc)


def main():
    cli(prog_name="pemuta")


if __name__ == "__main__":
    main()
