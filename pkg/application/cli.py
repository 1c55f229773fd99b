import sys
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import click
from pydantic import ValidationError

from application.core.config import PROFILE_ALIASES, PROFILES, RunConfig, load_run_config
from application.core.errors import HIBError
from application.core.logging import get_logger, setup_logging

logger = get_logger(__name__)

USAGE_EXIT_CODE = 2


@dataclass(frozen=True)
class CliOptions:
    config_file:    Optional[str]
    profile:        Optional[str]
    overrides:      Dict[str, str]


def _parse_overrides(values: Tuple[str, ...], threads: Optional[int]) -> Dict[str, str]:
    overrides = {}
    for item in values:
        key, sep, value = item.partition("=")
        if not sep or not key.strip():
            raise click.BadParameter(f"expected KEY=VALUE, got '{item}'", param_hint="--set")
        overrides[key.strip()] = value.strip()
    if threads is not None:
        overrides["THREADS"] = str(threads)
    return overrides


def _resolve(ctx: click.Context) -> RunConfig:
    options: CliOptions = ctx.obj
    try:
        config = load_run_config(options.config_file, options.profile, options.overrides)
    except ValidationError as e:
        click.echo(f"Invalid configuration:\n{e}", err=True)
        ctx.exit(USAGE_EXIT_CODE)
    except HIBError as e:
        click.echo(f"Cannot load configuration: {e}", err=True)
        ctx.exit(e.exit_code)
    setup_logging(config, to_file=True)
    return config


def _run(ctx: click.Context, command, *args, **kwargs):
    """Run a command; pipeline errors map to their family's exit code."""
    config = _resolve(ctx)
    try:
        return command(config, *args, **kwargs)
    except HIBError as e:
        logger.exception(f"{command.__name__} failed: {type(e).__name__}: {e}")
        ctx.exit(e.exit_code)
    except ValidationError as e:
        # typed views reject combinations a single key cannot (e.g. odd BATCH_SIZE)
        click.echo(f"Invalid configuration:\n{e}", err=True)
        ctx.exit(USAGE_EXIT_CODE)


@click.group()
@click.option("--config", "config_file", type=click.Path(dir_okay=False), default=None,
              help="Flat KEY=VALUE configuration file.")
@click.option("--profile", type=click.Choice(sorted([*PROFILES, *PROFILE_ALIASES])), default=None,
              help="Shipped preset applied before the config file.")
@click.option("--set", "overrides", multiple=True, metavar="KEY=VALUE",
              help="Override one configuration key; repeatable.")
@click.option("--threads", type=click.IntRange(min=1), default=None,
              help="Evaluation worker threads (default 1).")
@click.pass_context
def cli(ctx: click.Context, config_file, profile, overrides, threads):
    """Hedged instance embeddings on N-digit MNIST."""
    ctx.obj = CliOptions(config_file, profile, _parse_overrides(overrides, threads))


@cli.command()
@click.pass_context
def synth(ctx: click.Context):
    """Compose the N-digit dataset from MNIST IDX files."""
    from application.commands import cmd_synth
    _run(ctx, cmd_synth)


@cli.command()
@click.option("--resume", is_flag=True, help="Continue from OUTPUT_DIR/checkpoint.bin.")
@click.pass_context
def train(ctx: click.Context, resume: bool):
    """Train one embedding model."""
    from application.commands import cmd_train
    _run(ctx, cmd_train, resume=resume)


@cli.command(name="eval")
@click.pass_context
def evaluate(ctx: click.Context):
    """Evaluate a checkpoint: verification, KNN and uncertainty correlation."""
    from application.commands import cmd_eval
    _run(ctx, cmd_eval)


@cli.command()
@click.pass_context
def scatter(ctx: click.Context):
    """Export test-set embeddings as CSV (and SVG for D = 2)."""
    from application.commands import cmd_scatter
    _run(ctx, cmd_scatter)


@cli.command()
@click.pass_context
def sweep(ctx: click.Context):
    """Train and evaluate across KL weights or contrastive losses."""
    from application.commands import cmd_sweep
    _run(ctx, cmd_sweep)


def main() -> None:
    try:
        cli(standalone_mode=True)
    except KeyError as e:
        click.echo(str(e), err=True)
        sys.exit(USAGE_EXIT_CODE)
