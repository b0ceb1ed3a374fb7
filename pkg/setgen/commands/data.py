"""
Data commands: phantom generation and slice export.
"""
import os

import click

from setgen.commands.base import cli, parse_size, write_manifest
from setgen.models.geometry import IntegrationConfig
from setgen.models.volume import PhantomConfig
from setgen.services.phantom_service import gen_phantoms
from setgen.services.volume_io_service import export_slice, read_nifti1, read_volume, write_dataset
from setgen.utils.timing import timed

MANIFEST_NAME = 'run_manifest.json'


@cli.command('gen-phantoms')
@click.option('--out', required=True, type=click.Path(file_okay=False), help='Output directory')
@click.option('--n', 'n_subjects', default=16, show_default=True, type=click.IntRange(min=2),
              help='Number of subjects')
@click.option('--size', default='64,64', show_default=True, callback=parse_size,
              help='Spatial size, e.g. 64,64 or 32,32,32')
@click.option('--labels', 'n_labels', default=4, show_default=True, type=click.IntRange(min=1),
              help='Number of labeled regions')
@click.option('--magnitude', default=3.0, show_default=True, type=float,
              help='Peak velocity magnitude in voxels')
@click.option('--noise', default=0.02, show_default=True, type=float,
              help='Intensity noise bound')
@click.option('--smoothness', default=6.0, show_default=True, type=float,
              help='Gaussian sigma of the random velocity fields')
@click.option('--seed', default=0, show_default=True, type=int)
@click.pass_context
def gen_phantoms_command(ctx, out, n_subjects, size, n_labels, magnitude, noise, smoothness, seed):
    """Generate a synthetic group with a known center."""
    run = ctx.obj
    cfg = PhantomConfig(n_subjects=n_subjects, spatial_dims=size, n_labels=n_labels,
                        smoothness=smoothness, magnitude=magnitude, noise=noise, seed=seed)
    with timed('generate', run.timings):
        phantoms = gen_phantoms(cfg, IntegrationConfig.from_config(run.config))
    with timed('write', run.timings):
        write_dataset(out, phantoms.group, phantoms.center, cfg.to_dict())
    outputs = [os.path.join(out, name) for name in sorted(os.listdir(out)) if name != MANIFEST_NAME]
    write_manifest(ctx, os.path.join(out, MANIFEST_NAME), outputs=outputs, seeds={'phantoms': seed})
    click.echo(f'Wrote {n_subjects} subjects to {out}')


def _read_intensities(path):
    if path.endswith('.nii'):
        return read_nifti1(path).intensities
    return read_volume(path).data


@cli.command('slice')
@click.option('--volume', 'volume_path', required=True, type=click.Path(exists=True, dir_okay=False),
              help='Raw image volume or .nii file')
@click.option('--axis', default='z', show_default=True, type=click.Choice(['x', 'y', 'z']))
@click.option('--index', type=int, default=None,
              help='Slice index along --axis (default: middle slice)')
@click.option('--out', required=True, type=click.Path(dir_okay=False), help='Output .pgm file')
@click.pass_context
def slice_command(ctx, volume_path, axis, index, out):
    """Export one slice of a volume as a binary PGM."""
    volume = _read_intensities(volume_path)
    if index is None and volume.ndim == 3:
        index = volume.shape['xyz'.index(axis)] // 2
    directory = os.path.dirname(out)
    if directory:
        os.makedirs(directory, exist_ok=True)
    export_slice(volume, axis, index if index is not None else 0, out)
    write_manifest(ctx, f'{out}.manifest.json', inputs=[volume_path], outputs=[out])
    click.echo(f'Wrote {out}')
