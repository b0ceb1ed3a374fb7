"""
Command-line group, shared options and run manifests.

Every subcommand runs inside ``SetGenGroup.invoke`` which turns escaping
errors into a one-line ``error: <kind>: <message>`` on stderr and the exit
code the error class declares.
"""
import logging
import os
import time
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional

import click

from setgen import __version__, create_app
from setgen.errors import SetGenError
from setgen.models.results import RunManifest
from setgen.utils.hashing import hash_tree

logger = logging.getLogger(__name__)

DATA_ERROR_EXIT = 3


class SetGenGroup(click.Group):
    """Click group mapping SETGen errors to exit codes."""

    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except SetGenError as e:
            click.echo(f'error: {e.kind}: {e}', err=True)
            ctx.exit(e.exit_code)
        except (OSError, ValueError) as e:
            click.echo(f'error: data: {e}', err=True)
            ctx.exit(DATA_ERROR_EXIT)


@dataclass
class RunContext:
    """Per-invocation state shared by the subcommands."""

    app: object
    threads: int
    global_argv: List[str] = field(default_factory=list)
    timings: Dict[str, float] = field(default_factory=dict)
    started: float = field(default_factory=time.perf_counter)

    @property
    def config(self):
        return self.app.config


def parse_size(ctx, param, value):
    """Click callback turning '64,64' into (64, 64)."""
    if value is None:
        return None
    try:
        dims = tuple(int(part) for part in value.split(',') if part.strip())
    except ValueError:
        raise click.BadParameter(f'expected comma-separated integers, got {value!r}')
    if len(dims) not in (2, 3):
        raise click.BadParameter(f'expected 2 or 3 sizes, got {len(dims)}')
    return dims


def command_argv(ctx: click.Context) -> List[str]:
    """Rebuild the argument vector of the current subcommand from its parsed options."""
    run = ctx.find_object(RunContext)
    argv = list(run.global_argv) if run else []
    argv.append(ctx.info_name)
    for param in ctx.command.params:
        if not isinstance(param, click.Option):
            continue
        value = ctx.params.get(param.name)
        if value is None or value is False:
            continue
        flag = param.opts[0]
        if param.is_flag:
            argv.append(flag)
        elif isinstance(value, tuple):
            argv.extend([flag, ','.join(str(v) for v in value)])
        else:
            argv.extend([flag, str(value)])
    return argv


def _output_hashes(outputs: Iterable[str]) -> Dict[str, str]:
    existing = [p for p in outputs if os.path.exists(p)]
    return hash_tree(existing) if existing else {}


def write_manifest(ctx: click.Context, path: str, inputs: Iterable[str] = (),
                   outputs: Iterable[str] = (), seeds: Optional[Dict[str, int]] = None) -> RunManifest:
    """
    Record the finished run next to its outputs.

    Args:
        ctx: Click context of the subcommand
        path: Manifest file to write
        inputs: Input paths as given
        outputs: Output files or directories; each file is fingerprinted
        seeds: Seeds the command used

    Returns:
        RunManifest: the written manifest
    """
    run = ctx.find_object(RunContext)
    timings = dict(run.timings)
    timings['total'] = time.perf_counter() - run.started
    manifest = RunManifest(
        subcommand=ctx.info_name,
        argv=command_argv(ctx),
        config=dict(run.config, THREADS=run.threads),
        seeds=dict(seeds or {}),
        inputs=sorted(inputs),
        outputs=_output_hashes(outputs),
        timings=timings,
        tool_version=__version__,
    )
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    manifest.write(path)
    logger.info(f'Run manifest written to {path}')
    return manifest


@click.group(cls=SetGenGroup)
@click.option('--config', 'config_name', envvar='SETGEN_ENV', default=None,
              type=click.Choice(['development', 'production', 'testing']),
              help='Configuration profile (default: production)')
@click.option('--threads', type=click.IntRange(min=1), envvar='SETGEN_THREADS', default=None,
              help='Worker threads for per-subject work (default 1)')
@click.version_option(__version__, prog_name='setgen')
@click.pass_context
def cli(ctx, config_name, threads):
    """Scalable group template generation on synthetic or NIfTI volumes."""
    app = create_app(config_name)
    threads = threads if threads is not None else app.config['THREADS']
    global_argv = []
    if config_name:
        global_argv += ['--config', config_name]
    global_argv += ['--threads', str(threads)]
    ctx.obj = RunContext(app, threads, global_argv)
