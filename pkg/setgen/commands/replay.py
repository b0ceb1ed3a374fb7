"""
Replay a recorded run from its manifest.
"""
import click

from setgen.commands.base import cli
from setgen.errors import DataFormatError
from setgen.models.results import RunManifest


@cli.command('replay')
@click.argument('manifest_path', type=click.Path(exists=True, dir_okay=False))
@click.pass_context
def replay_command(ctx, manifest_path):
    """Re-run the command recorded in MANIFEST_PATH with the same arguments."""
    manifest = RunManifest.read(manifest_path)
    if not manifest.argv or 'replay' in manifest.argv:
        raise DataFormatError(f'{manifest_path} does not record a replayable command',
                              path=manifest_path)
    click.echo(f'Replaying: setgen {" ".join(manifest.argv)}', err=True)
    code = cli.main(args=list(manifest.argv), prog_name='setgen', standalone_mode=False)
    if code:
        ctx.exit(code)
