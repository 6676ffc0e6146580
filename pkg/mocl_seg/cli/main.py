"""
Main CLI application.

Entry point for the mocl-seg command.
"""

from __future__ import annotations

import json
from collections.abc import Iterator
from contextlib import contextmanager
from pathlib import Path
from typing import Annotated

import typer

import mocl_seg
from mocl_seg.cli.context import CliContext, ExitCode, exit_code_for
from mocl_seg.cli.output import OutputAdapter, OutputFormat, get_output_adapter
from mocl_seg.core.errors import MoclSegError
from mocl_seg.core.logs import configure_logging

app = typer.Typer(
    name="mocl-seg",
    help="Nucleus segmentation from weak box labels with corrective refinement",
    add_completion=False,
    no_args_is_help=True,
)


def version_callback(value: bool) -> None:
    """Print version and exit."""
    if value:
        typer.echo(f"mocl-seg {mocl_seg.__version__}")
        raise typer.Exit()


@app.callback()
def main(
    version: Annotated[
        bool,
        typer.Option(
            "--version",
            "-V",
            help="Show version and exit",
            callback=version_callback,
            is_eager=True,
        ),
    ] = False,
    log_level: Annotated[
        str | None,
        typer.Option("--log-level", help="Log level (default: MOCL_SEG_LOG_LEVEL or INFO)"),
    ] = None,
) -> None:
    """Nucleus segmentation from weak box labels with corrective refinement."""
    configure_logging(log_level)


# =============================================================================
# Shared options and helpers
# =============================================================================

ConfigOption = Annotated[
    Path | None,
    typer.Option("--config", "-c", help="Experiment config (YAML or TOML)"),
]
SetOption = Annotated[
    list[str] | None,
    typer.Option("--set", help="Override a config value, e.g. --set train.epochs=5"),
]
ForceOption = Annotated[
    bool,
    typer.Option("--force", help="Re-run stages whose outputs already exist"),
]
FormatOption = Annotated[
    str,
    typer.Option("--format", "-f", help="Output format: terminal, json"),
]
OutOption = Annotated[
    Path | None,
    typer.Option("--output-file", "-o", help="Write rendered output to file"),
]
ColorOption = Annotated[
    bool,
    typer.Option("--color/--no-color", help="Enable/disable colored output"),
]

BACKEND_ALIASES = {"checkpoint": "torchscript"}


@contextmanager
def guarded() -> Iterator[None]:
    """Report errors on stderr and exit with 2 (validation) or 3 (stage failure)."""
    try:
        yield
    except (MoclSegError, OSError, ValueError) as e:
        typer.echo(f"Error: {e}", err=True)
        raise typer.Exit(exit_code_for(e)) from None


def _adapter(ctx: CliContext) -> OutputAdapter:
    try:
        output_format = OutputFormat(ctx.format)
    except ValueError:
        typer.echo(f"Unknown format: {ctx.format}", err=True)
        typer.echo("Available formats: terminal, json", err=True)
        raise typer.Exit(ExitCode.VALIDATION) from None
    return get_output_adapter(output_format, color=ctx.color)


def _emit(ctx: CliContext, rendered: str) -> None:
    if ctx.output_file:
        ctx.output_file.parent.mkdir(parents=True, exist_ok=True)
        ctx.output_file.write_text(rendered + "\n", encoding="utf-8")
        typer.echo(f"Output written to {ctx.output_file}", err=True)
    else:
        typer.echo(rendered)


def _run_stages(ctx: CliContext, until: str) -> None:
    from mocl_seg.core.pipeline import load_config, load_run_report, run_pipeline

    adapter = _adapter(ctx)
    with guarded():
        config = load_config(ctx.config_file, ctx.overrides)
        record = run_pipeline(config, force=ctx.force, until=until)
        rendered = adapter.render_run(record)
        if until == "eval":
            rendered += "\n" + adapter.render_metrics(load_run_report(config.output_dir))
    _emit(ctx, rendered)


# =============================================================================
# Data
# =============================================================================


@app.command()
def synth(
    config: ConfigOption = None,
    set_: SetOption = None,
    out_dir: Annotated[
        Path | None,
        typer.Option("--out-dir", help="Dataset directory (default: data.root)"),
    ] = None,
    n_patches: Annotated[int | None, typer.Option("--n", help="Number of patches")] = None,
    seed: Annotated[int | None, typer.Option("--seed", help="Generator seed")] = None,
    format: FormatOption = "terminal",
    output: OutOption = None,
) -> None:
    """Generate the synthetic image/IF/mask dataset."""
    from mocl_seg.core.data import generate_synthetic_dataset
    from mocl_seg.core.pipeline import load_config

    ctx = CliContext(config_file=config, overrides=set_ or [], format=format, output_file=output)
    adapter = _adapter(ctx)
    with guarded():
        cfg = load_config(ctx.config_file, ctx.overrides)
        manifest = generate_synthetic_dataset(
            out_dir or cfg.data.root,
            n_patches if n_patches is not None else cfg.synthetic.n_patches,
            classes=cfg.synthetic.classes,
            seed=seed if seed is not None else cfg.synthetic.seed,
            image_size=cfg.synthetic.image_size,
        )
    _emit(ctx, adapter.render_manifest(manifest))


# =============================================================================
# Pipeline stages
# =============================================================================

ManifestOption = Annotated[
    Path | None,
    typer.Option("--manifest", help="Dataset manifest (sets data.root and data.manifest)"),
]
RunDirOption = Annotated[
    Path | None,
    typer.Option("--out", help="Run directory (sets output_dir)"),
]
ModelCheckpointOption = Annotated[
    Path | None,
    typer.Option("--checkpoint", help="Existing model checkpoint directory or checkpoint.pt"),
]


def stage_overrides(
    manifest: Path | None, out: Path | None, values: dict[str, object] | None = None
) -> list[str]:
    """`key.path=value` overrides for the options given on a stage command."""
    items = dict(values or {})
    if manifest is not None:
        path = manifest.resolve()
        items["data.root"] = path.parent
        items["data.manifest"] = path.name
    if out is not None:
        items["output_dir"] = out
    return [
        f"{key}={json.dumps(str(value) if isinstance(value, Path) else value)}"
        for key, value in items.items()
        if value is not None
    ]


def _stage(
    until: str,
    flags: list[str],
    config: Path | None,
    set_: list[str] | None,
    force: bool,
    format: str,
    output: Path | None,
    color: bool,
) -> None:
    """Run the stages up to `until`; command flags apply after --set overrides."""
    ctx = CliContext(
        config_file=config,
        overrides=[*(set_ or []), *flags],
        format=format,
        output_file=output,
        color=color,
        force=force,
    )
    _run_stages(ctx, until)


@app.command()
def prepare(
    config: ConfigOption = None,
    set_: SetOption = None,
    manifest: ManifestOption = None,
    out: RunDirOption = None,
    force: ForceOption = False,
    format: FormatOption = "terminal",
    output: OutOption = None,
    color: ColorOption = True,
) -> None:
    """Load the manifest, split it and subsample the training set."""
    flags = stage_overrides(manifest, out)
    _stage("prepare", flags, config, set_, force, format, output, color)


@app.command()
def annotate(
    config: ConfigOption = None,
    set_: SetOption = None,
    manifest: ManifestOption = None,
    out: RunDirOption = None,
    backend: Annotated[
        str | None,
        typer.Option(
            "--backend", help="Box-prompt backend: builtin, checkpoint (TorchScript), sam-hf"
        ),
    ] = None,
    checkpoint: Annotated[
        Path | None, typer.Option("--checkpoint", help="Backend checkpoint")
    ] = None,
    force: ForceOption = False,
    format: FormatOption = "terminal",
    output: OutOption = None,
    color: ColorOption = True,
) -> None:
    """Produce training labels (complete masks or box prompts)."""
    architecture = BACKEND_ALIASES.get(backend, backend) if backend is not None else None
    flags = stage_overrides(
        manifest,
        out,
        {"annotation.backend.architecture": architecture, "annotation.checkpoint": checkpoint},
    )
    _stage("annotate", flags, config, set_, force, format, output, color)


@app.command()
def train(
    config: ConfigOption = None,
    set_: SetOption = None,
    manifest: ManifestOption = None,
    out: RunDirOption = None,
    force: ForceOption = False,
    format: FormatOption = "terminal",
    output: OutOption = None,
    color: ColorOption = True,
) -> None:
    """Train adapters and decoder on the produced labels."""
    flags = stage_overrides(manifest, out)
    _stage("train", flags, config, set_, force, format, output, color)


@app.command()
def refine(
    config: ConfigOption = None,
    set_: SetOption = None,
    manifest: ManifestOption = None,
    out: RunDirOption = None,
    checkpoint: ModelCheckpointOption = None,
    k: Annotated[int | None, typer.Option("--k", help="Hardest pixels per map")] = None,
    eps_floor: Annotated[
        float | None, typer.Option("--eps-floor", help="Weight floor of the corrective loss")
    ] = None,
    force: ForceOption = False,
    format: FormatOption = "terminal",
    output: OutOption = None,
    color: ColorOption = True,
) -> None:
    """Refine the trained model (or --checkpoint) with the corrective loss."""
    flags = stage_overrides(
        manifest,
        out,
        {"checkpoint": checkpoint, "mocl.k": k, "mocl.eps_floor": eps_floor},
    )
    if checkpoint is not None:
        flags += ["checkpoint_stage=train", "mocl.enabled=true"]
    _stage("refine", flags, config, set_, force, format, output, color)


@app.command(name="eval")
def evaluate(
    config: ConfigOption = None,
    set_: SetOption = None,
    manifest: ManifestOption = None,
    out: RunDirOption = None,
    checkpoint: ModelCheckpointOption = None,
    split: Annotated[
        str | None, typer.Option("--split", help="Split to evaluate: train, val, test")
    ] = None,
    force: ForceOption = False,
    format: FormatOption = "terminal",
    output: OutOption = None,
    color: ColorOption = True,
) -> None:
    """Evaluate the final model (or --checkpoint as is); runs any missing earlier stage."""
    flags = stage_overrides(manifest, out, {"checkpoint": checkpoint, "eval_split": split})
    if checkpoint is not None:
        flags.append("checkpoint_stage=refine")
    _stage("eval", flags, config, set_, force, format, output, color)


# =============================================================================
# Comparison and reporting
# =============================================================================


@app.command()
def compare(
    paths: Annotated[
        list[Path] | None,
        typer.Argument(help="metrics.json files or run directories; the first is the reference"),
    ] = None,
    reports: Annotated[
        list[Path] | None,
        typer.Option("--reports", "-r", help="Report to compare, before any positional ones"),
    ] = None,
    metric: Annotated[
        list[str] | None,
        typer.Option("--metric", "-m", help="Metric to compare (repeatable)"),
    ] = None,
    mode: Annotated[
        str, typer.Option("--mode", help="Wilcoxon mode: auto, exact, approx")
    ] = "auto",
    format: FormatOption = "terminal",
    output: OutOption = None,
) -> None:
    """Paired Wilcoxon tests of runs against the first one."""
    from mocl_seg.core.metrics import MetricsReport, WilcoxonMode, compare_reports
    from mocl_seg.core.pipeline.report import TABLE_METRICS

    ctx = CliContext(format=format, output_file=output)
    adapter = _adapter(ctx)
    inputs = [*(reports or []), *(paths or [])]
    with guarded():
        loaded: dict[str, MetricsReport] = {}
        for path in inputs:
            file = path / "metrics.json" if path.is_dir() else path
            name = path.name if path.is_dir() else path.parent.name or path.name
            if name in loaded:
                name = str(path)
            loaded[name] = MetricsReport.load(file)
        comparisons = []
        for name in metric or list(TABLE_METRICS):
            comparisons += compare_reports(loaded, name, mode=WilcoxonMode(mode))
    _emit(ctx, adapter.render_comparisons(comparisons))


@app.command()
def matrix(
    matrix_file: Annotated[Path, typer.Argument(help="Matrix file (YAML)")],
    set_: SetOption = None,
    reference: Annotated[
        str | None, typer.Option("--reference", help="Reference run (default: from file)")
    ] = None,
    force: ForceOption = False,
    format: FormatOption = "terminal",
    output: OutOption = None,
    color: ColorOption = True,
) -> None:
    """Run an experiment matrix and write the comparison table and plots."""
    from mocl_seg.core.pipeline import load_matrix_config, run_matrix

    ctx = CliContext(format=format, output_file=output, color=color, force=force)
    adapter = _adapter(ctx)
    with guarded():
        configs, file_reference, out_dir = load_matrix_config(matrix_file, set_ or [])
        result = run_matrix(configs, out_dir, reference or file_reference, force=ctx.force)
    _emit(ctx, adapter.render_matrix(result))


@app.command()
def report(
    runs: Annotated[list[Path], typer.Argument(help="Finished run directories")],
    out_dir: Annotated[
        Path, typer.Option("--out-dir", help="Directory for tables and plots")
    ] = Path("report"),
    format: FormatOption = "terminal",
    output: OutOption = None,
) -> None:
    """Write results_table.{json,csv} and metric plots for finished runs."""
    from mocl_seg.core.pipeline import emit_report, rows_from_runs

    ctx = CliContext(format=format, output_file=output)
    adapter = _adapter(ctx)
    with guarded():
        rows = rows_from_runs(runs)
        paths = emit_report(rows, out_dir)
    _emit(ctx, adapter.render_rows(rows))
    for path in paths:
        typer.echo(f"wrote {path}", err=True)


# =============================================================================
# CLI Entry Point
# =============================================================================


def run() -> None:
    """Run the CLI application."""
    app()


if __name__ == "__main__":
    run()
