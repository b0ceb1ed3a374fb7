"""
Template commands: build, evaluate and compare group templates.
"""
import os

import click

from setgen.commands.base import cli, write_manifest
from setgen.errors import ConfigError
from setgen.models.checkpoint import load_checkpoint
from setgen.models.regnet import RegNetParams
from setgen.models.results import TemplateMethod
from setgen.models.vae import VAEParams
from setgen.services.metrics_service import (compare_methods, evaluate, write_comparison,
                                             write_per_label, write_report)
from setgen.services.template_service import PipelineOptions, build_template
from setgen.services.volume_io_service import (expand_inputs, load_group, read_subject,
                                               read_template_result, write_template_result)
from setgen.utils.timing import timed

METHODS = [m.value for m in TemplateMethod]


def _load_reg(path):
    return RegNetParams.from_checkpoint(load_checkpoint(path, 'regnet'))


def _load_vae(path):
    return VAEParams.from_checkpoint(load_checkpoint(path, 'vae')) if path else None


def _group(inputs, labels):
    image_paths = expand_inputs(inputs)
    label_paths = expand_inputs(labels) if labels else None
    return load_group(image_paths, label_paths), image_paths + (label_paths or [])


def _options(ctx) -> PipelineOptions:
    return PipelineOptions.from_config(ctx.obj.config, ctx.obj.threads)


@cli.command('template')
@click.option('--inputs', required=True, help='Glob of subject image volumes')
@click.option('--vae', 'vae_path', type=click.Path(exists=True, dir_okay=False), default=None,
              help='Trained VAE checkpoint (required for setgen methods)')
@click.option('--reg', 'reg_path', required=True, type=click.Path(exists=True, dir_okay=False),
              help='Registration checkpoint')
@click.option('--out', required=True, type=click.Path(file_okay=False), help='Output directory')
@click.option('--refine', is_flag=True, help='Apply one warped-subject averaging step')
@click.option('--method', type=click.Choice(METHODS), default='setgen', show_default=True)
@click.option('--ave-iters', type=click.IntRange(min=0), default=None,
              help='Iterations of the ave baseline (default: AVE_ITERATIONS)')
@click.pass_context
def template_command(ctx, inputs, vae_path, reg_path, out, refine, method, ave_iters):
    """Generate a group template and register every subject to it."""
    method = TemplateMethod.parse(method)
    if refine:
        if method is not TemplateMethod.SETGEN:
            raise ConfigError(f'--refine applies to setgen, not {method.value}', field='refine')
        method = TemplateMethod.SETGEN_PLUS
    group, input_paths = _group(inputs, None)
    reg = _load_reg(reg_path)
    vae = _load_vae(vae_path)
    iters = ave_iters if ave_iters is not None else ctx.obj.config['AVE_ITERATIONS']
    with timed('template', ctx.obj.timings):
        result = build_template(method, group, reg, vae, _options(ctx), iters)
    written = write_template_result(out, result)
    write_manifest(ctx, os.path.join(out, 'run_manifest.json'),
                   inputs=input_paths + [p for p in (vae_path, reg_path) if p],
                   outputs=list(written.values()) + [os.path.join(out, 'template.json')])
    click.echo(f'Wrote {result.method.value} template for {len(group)} subjects to {out}')


def _per_label_path(report_path):
    return os.path.splitext(report_path)[0] + '_per_label.csv'


@cli.command('eval')
@click.option('--inputs', required=True, help='Glob of subject image volumes')
@click.option('--labels', default=None, help='Glob of subject label volumes')
@click.option('--template', 'template_dir', required=True,
              type=click.Path(exists=True, file_okay=False), help='Template directory')
@click.option('--reg', 'reg_path', required=True, type=click.Path(exists=True, dir_okay=False),
              help='Registration checkpoint')
@click.option('--report', 'report_path', required=True, type=click.Path(dir_okay=False),
              help='Report JSON path; per-label Dice goes to <report>_per_label.csv')
@click.option('--ground-truth', type=click.Path(exists=True, dir_okay=False), default=None,
              help='Known center image for template MSE')
@click.option('--normalized', is_flag=True, help='Also report per-voxel normalized displacement')
@click.pass_context
def eval_command(ctx, inputs, labels, template_dir, reg_path, report_path, ground_truth, normalized):
    """Score a template: pairwise Dice, centrality and average displacement."""
    group, input_paths = _group(inputs, labels)
    result = read_template_result(template_dir)
    truth = read_subject(ground_truth, subject_id='center') if ground_truth else None
    with timed('evaluate', ctx.obj.timings):
        report = evaluate(group, result, _load_reg(reg_path), _options(ctx), normalized, truth)
    write_report(report, report_path)
    csv_path = _per_label_path(report_path)
    write_per_label(report, csv_path)
    write_manifest(ctx, f'{report_path}.manifest.json',
                   inputs=input_paths + [template_dir, reg_path] + ([ground_truth] if ground_truth else []),
                   outputs=[report_path, csv_path])
    dice = 'n/a' if report.dice is None else f'{report.dice:.4f}'
    click.echo(f'dice={dice} centrality={report.centrality:.4f} avg_disp={report.avg_disp:.4f}')


@cli.command('compare')
@click.option('--inputs', required=True, help='Glob of subject image volumes')
@click.option('--labels', default=None, help='Glob of subject label volumes')
@click.option('--vae', 'vae_path', type=click.Path(exists=True, dir_okay=False), default=None,
              help='Trained VAE checkpoint (needed for setgen methods)')
@click.option('--reg', 'reg_path', required=True, type=click.Path(exists=True, dir_okay=False),
              help='Registration checkpoint')
@click.option('--methods', default=','.join(METHODS), show_default=True,
              help='Comma-separated template methods')
@click.option('--ave-iters', type=click.IntRange(min=0), default=None,
              help='Iterations of the ave baseline (default: AVE_ITERATIONS)')
@click.option('--ground-truth', type=click.Path(exists=True, dir_okay=False), default=None,
              help='Known center image for template MSE')
@click.option('--normalized', is_flag=True, help='Also report per-voxel normalized displacement')
@click.option('--out', required=True, type=click.Path(file_okay=False), help='Output directory')
@click.pass_context
def compare_command(ctx, inputs, labels, vae_path, reg_path, methods, ave_iters, ground_truth,
                    normalized, out):
    """Build and score templates with several methods; write JSON and CSV summaries."""
    chosen = [TemplateMethod.parse(m.strip()) for m in methods.split(',') if m.strip()]
    if not chosen:
        raise ConfigError('no methods given', field='methods')
    group, input_paths = _group(inputs, labels)
    truth = read_subject(ground_truth, subject_id='center') if ground_truth else None
    iters = ave_iters if ave_iters is not None else ctx.obj.config['AVE_ITERATIONS']
    with timed('compare', ctx.obj.timings):
        reports = compare_methods(group, _load_vae(vae_path), _load_reg(reg_path), chosen,
                                  _options(ctx), iters, normalized, truth)
    json_path = os.path.join(out, 'comparison.json')
    csv_path = os.path.join(out, 'comparison.csv')
    write_comparison(reports, json_path, csv_path)
    write_manifest(ctx, os.path.join(out, 'run_manifest.json'),
                   inputs=input_paths + [p for p in (vae_path, reg_path) if p],
                   outputs=[json_path, csv_path])
    for report in reports:
        click.echo(f'{report.method}: dice={report.dice} centrality={report.centrality:.4f} '
                   f'avg_disp={report.avg_disp:.4f}')
