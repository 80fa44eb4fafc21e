"""Command-line entry points.

Every stage of the pipeline is a subcommand driven by one JSON config:

    hac-refine phantom    --config cfg.json     generate a synthetic cohort
    hac-refine preprocess --config cfg.json     crop/resample/normalize
    hac-refine uncertainty --config cfg.json    ensemble NSD gating report
    hac-refine refine     --config cfg.json     hybrid AC on flagged cases
    hac-refine evaluate   --config cfg.json     DSC/precision/recall CSV
    hac-refine pipeline   --config cfg.json     all four stages in order

Exit codes: 0 clean, 1 when any per-case error was recorded, 2 on
config/usage problems.
"""

import sys

import click

from . import pipeline as stages
from .config import load_config
from .errors import ConfigError, HacRefineError


def _common(fn):
    fn = click.option("--config", "config_path", required=True,
                      type=click.Path(exists=True, dir_okay=False),
                      help="JSON pipeline configuration.")(fn)
    fn = click.option("--jobs", type=int, default=None,
                      help="Worker threads (default: available parallelism).")(fn)
    fn = click.option("--verbose", is_flag=True, help="Per-case progress lines.")(fn)
    return fn


@click.group()
def main():
    """Ensemble fusion, uncertainty gating and hybrid active-contour
    refinement for PET/CT tumor segmentations."""


def _run(stage_fn, stage_name, config_path, jobs, verbose):
    try:
        cfg = load_config(config_path)
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(2)
    try:
        errors = stage_fn(cfg, jobs=jobs, verbose=verbose)
        stages.write_error_report(errors, cfg)
    except HacRefineError as exc:
        # cohort-level failures (empty input, unreadable tables) are usage errors
        click.echo(f"{stage_name}: {exc}", err=True)
        sys.exit(2)
    if errors:
        click.echo(f"{stage_name}: {len(errors)} case error(s)", err=True)
        sys.exit(1)
    click.echo(f"{stage_name}: ok")


@main.command()
@_common
def phantom(config_path, jobs, verbose):
    """Generate synthetic PET/CT/gt/ensemble cases into the input dir."""
    _run(stages.run_phantom, "phantom", config_path, jobs, verbose)


@main.command()
@_common
def preprocess(config_path, jobs, verbose):
    """Bounding-box crop, isotropic resample, per-modality z-score."""
    _run(stages.run_preprocess, "preprocess", config_path, jobs, verbose)


@main.command()
@_common
def uncertainty(config_path, jobs, verbose):
    """Fuse the ensemble and write the NSD-based uncertainty report."""
    _run(stages.run_uncertainty, "uncertainty", config_path, jobs, verbose)


@main.command()
@_common
def refine(config_path, jobs, verbose):
    """Refine flagged cases with the hybrid active-contour solver."""
    _run(stages.run_refine, "refine", config_path, jobs, verbose)


@main.command()
@_common
def evaluate(config_path, jobs, verbose):
    """Score refined masks against ground truth."""
    _run(stages.run_evaluate, "evaluate", config_path, jobs, verbose)


@main.command()
@_common
def pipeline(config_path, jobs, verbose):
    """preprocess, uncertainty, refine and evaluate in sequence."""
    _run(stages.run_pipeline, "pipeline", config_path, jobs, verbose)


if __name__ == "__main__":
    main()
