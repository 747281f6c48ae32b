"""Command-line interface.

Exit codes: 0 on success, 1 for invalid inputs or configs, 2 for runtime
failures, 3 when the run finished but some repetitions diverged (results
are partial yet usable).
"""

from __future__ import annotations

import dataclasses
import logging
import warnings
from pathlib import Path

import click

from . import __version__
from .data import export_csv, generate_synthetic
from .errors import DegenerateStatisticError, StageError, StreamrankError, ValidationError
from .evaluation import ScoreMatrix
from .experiment import (
    RunConfig,
    load_archive,
    load_preset,
    preset_names,
    run_experiment,
)
from .stats import (
    CRITICAL_MODES,
    friedman_chi2,
    friedman_test,
    nemenyi_test,
    rank_score_matrix,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_RUNTIME = 2
EXIT_DIVERGED = 3


@click.group(name="streamrank")
@click.version_option(__version__, prog_name="streamrank")
@click.option("-v", "--verbose", is_flag=True, help="Enable debug logging.")
def cli(verbose: bool) -> None:
    """Benchmark online linear regressors and rank them with significance tests."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )


@cli.command("generate-data")
@click.option(
    "--spec",
    "spec_name",
    required=True,
    help="Synthetic dataset name from the bundled synthetic_benchmark preset (e.g. DS1).",
)
@click.option(
    "--out",
    "out_path",
    type=click.Path(dir_okay=False, path_type=Path),
    default=None,
    help="Output CSV path (default: <spec>.csv).",
)
@click.option("--seed", type=int, default=None, help="Override the preset's generator seed.")
def generate_data(spec_name: str, out_path: Path | None, seed: int | None) -> int:
    """Materialize one of the bundled synthetic datasets as a CSV file."""
    preset = load_preset("synthetic_benchmark")
    by_name = {d.name.lower(): d for d in preset.datasets if d.synthetic is not None}
    entry = by_name.get(spec_name.lower())
    if entry is None:
        raise ValidationError(
            f"unknown synthetic spec {spec_name!r}; available: {sorted(d.upper() for d in by_name)}"
        )
    spec = entry.synthetic
    if seed is not None:
        spec = dataclasses.replace(spec, seed=seed)
    dataset = generate_synthetic(spec, name=entry.name)
    target = out_path if out_path is not None else Path(f"{entry.name.lower()}.csv")
    export_csv(dataset, target)
    click.echo(
        f"wrote {dataset.n_points} rows x {dataset.n_dims + 1} columns "
        f"({dataset.n_dims} features + target) to {target}"
    )
    return EXIT_OK


def _report_directory(config_echo: dict) -> Path:
    out = config_echo.get("output", {}).get("directory", "results")
    name = config_echo.get("name", "run")
    return Path(out) / f"{name}_report"


def _write_reports(archive, out_dir: Path | None) -> None:
    from .report import write_report_files

    directory = out_dir if out_dir is not None else _report_directory(archive.config)
    outputs = write_report_files(archive, directory)
    for label in sorted(outputs):
        click.echo(f"{label}: {outputs[label]}")


@cli.command()
@click.option(
    "--config",
    "config_path",
    type=click.Path(dir_okay=False, path_type=Path),
    default=None,
    help="Run config YAML.",
)
@click.option(
    "--preset",
    "preset_name",
    default=None,
    help=f"Bundled preset name instead of --config (one of: {', '.join(preset_names())}).",
)
@click.option(
    "--archive",
    "archive_path",
    type=click.Path(dir_okay=False, path_type=Path),
    default=None,
    help="Where to write the results archive (default: <output dir>/<name>.archive.json).",
)
@click.option("--report", "with_report", is_flag=True, help="Also render report files.")
@click.option(
    "--out",
    "out_dir",
    type=click.Path(file_okay=False, path_type=Path),
    default=None,
    help="Report directory when --report is given.",
)
@click.option("--workers", type=int, default=1, show_default=True, help="Parallel worker processes.")
def run(
    config_path: Path | None,
    preset_name: str | None,
    archive_path: Path | None,
    with_report: bool,
    out_dir: Path | None,
    workers: int,
) -> int:
    """Execute a benchmark run and write its archive (optionally plus reports)."""
    if (config_path is None) == (preset_name is None):
        raise ValidationError("pass exactly one of --config or --preset")
    config = RunConfig.from_yaml(config_path) if config_path else load_preset(preset_name)
    if archive_path is None:
        archive_path = config.output_dir / f"{config.name}.archive.json"
    archive = run_experiment(config, workers=workers, archive_path=archive_path)
    click.echo(f"archive: {archive_path}")
    for message in archive.warnings:
        click.echo(f"warning: {message}", err=True)
    if with_report:
        _write_reports(archive, out_dir)
    if archive.any_divergence:
        click.echo("warning: some repetitions diverged; results are partial", err=True)
        return EXIT_DIVERGED
    return EXIT_OK


@cli.command()
@click.option(
    "--scores",
    "scores_path",
    required=True,
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    help="Score grid CSV: header 'model,<dataset>,...', one row per model.",
)
@click.option(
    "--alpha",
    "alphas",
    multiple=True,
    type=float,
    default=(0.05, 0.1),
    show_default=True,
    help="Significance level; repeat for several.",
)
@click.option(
    "--critical-mode",
    type=click.Choice(CRITICAL_MODES),
    default="exact",
    show_default=True,
    help="How the F critical value is obtained.",
)
def stats(scores_path: Path, alphas: tuple[float, ...], critical_mode: str) -> int:
    """Run the significance analysis on a standalone score grid CSV."""
    matrix = ScoreMatrix.from_csv(scores_path)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        ranking = rank_score_matrix(matrix)
        chi2 = friedman_chi2(ranking.average_ranks, ranking.k, ranking.n_datasets)
        results = []
        for alpha in alphas:
            try:
                results.append(friedman_test(ranking, alpha=alpha, critical_mode=critical_mode))
            except DegenerateStatisticError as error:
                click.echo(f"warning: alpha={alpha:g}: {error}", err=True)
        nemenyi = nemenyi_test(ranking, alphas=tuple(alphas))
    seen = set()
    for record in caught:
        message = str(record.message)
        if message not in seen:
            seen.add(message)
            click.echo(f"warning: {message}", err=True)

    click.echo(f"models: {ranking.k}, datasets: {ranking.n_datasets}")
    for model, avg in zip(ranking.model_names, ranking.average_ranks):
        click.echo(f"average rank {model}: {avg:g}")
    click.echo(f"chi2 = {chi2:.4f}")
    if results:
        first = results[0]
        click.echo(f"F = {first.ff:.4f} (df1={first.df1}, df2={first.df2})")
    for result in results:
        decision = "reject" if result.reject else "retain"
        click.echo(
            f"alpha={result.alpha:g}: critical value {result.critical_value:.4f} "
            f"({result.critical_mode}) -> {decision}"
        )
    for alpha in alphas:
        click.echo(f"CD(alpha={alpha:g}) = {nemenyi.cd[alpha]:.4f}")
    names = nemenyi.model_names
    for i in range(len(names)):
        for j in range(i + 1, len(names)):
            holds = [a for a in alphas if nemenyi.verdicts[a][i, j]]
            verdict = (
                "significant at " + ", ".join(f"alpha={a:g}" for a in holds)
                if holds
                else "not significant"
            )
            click.echo(f"{names[i]} vs {names[j]}: diff={nemenyi.diffs[i, j]:.4g} -> {verdict}")
    dropped = bool(matrix.diverged.any())
    return EXIT_DIVERGED if dropped else EXIT_OK


@cli.command()
@click.option(
    "--archive",
    "archive_path",
    required=True,
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    help="Results archive written by 'run'.",
)
@click.option(
    "--out",
    "out_dir",
    type=click.Path(file_okay=False, path_type=Path),
    default=None,
    help="Report directory (default: <output dir>/<name>_report).",
)
def report(archive_path: Path, out_dir: Path | None) -> int:
    """Render the markdown report, score CSV, and diagrams from an archive."""
    archive = load_archive(archive_path)
    _write_reports(archive, out_dir)
    return EXIT_OK


@cli.command()
@click.option(
    "--archive",
    "archive_path",
    required=True,
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    help="Results archive written by 'run'.",
)
@click.option("--alpha", type=float, default=0.05, show_default=True)
@click.option(
    "--out",
    "out_path",
    type=click.Path(dir_okay=False, path_type=Path),
    default=Path("cd_diagram.svg"),
    show_default=True,
)
def diagram(archive_path: Path, alpha: float, out_path: Path) -> int:
    """Render just the critical-difference diagram from an archive."""
    from .report import cd_diagram, display_name

    archive = load_archive(archive_path)
    if archive.ranking is None or archive.nemenyi is None:
        raise ValidationError("archive holds no ranking; re-run the experiment first")
    cd = None
    for known, value in archive.nemenyi.cd.items():
        if abs(known - alpha) < 1e-12:
            cd = value
    if cd is None:
        raise ValidationError(
            f"alpha={alpha:g} not in archive; stored levels: "
            f"{sorted(archive.nemenyi.cd)}"
        )
    labels = [display_name(m) for m in archive.ranking.model_names]
    cd_diagram(
        archive.ranking.average_ranks,
        labels,
        cd,
        out_path,
        title=f"Average ranks (CD at alpha={alpha:g})",
    )
    click.echo(f"diagram: {out_path}")
    return EXIT_OK


def main(argv=None) -> int:
    """Entry point translating exceptions into the documented exit codes."""
    try:
        result = cli.main(args=argv, standalone_mode=False)
    except ValidationError as error:
        click.echo(f"error: {error}", err=True)
        return EXIT_INVALID
    except StageError as error:
        click.echo(f"error: {error}", err=True)
        return EXIT_INVALID if error.stage == "config" else EXIT_RUNTIME
    except StreamrankError as error:
        click.echo(f"error: {error}", err=True)
        return EXIT_RUNTIME
    except click.UsageError as error:
        error.show()
        return EXIT_INVALID
    except click.ClickException as error:
        error.show()
        return error.exit_code
    except click.exceptions.Exit as leave:  # --help / --version
        return leave.exit_code
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return EXIT_INVALID
    return int(result) if isinstance(result, int) else EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
