"""
Training commands: registration pretraining and siamese VAE training.
"""
import click

from setgen.commands.base import cli, write_manifest
from setgen.errors import GeometryError
from setgen.models.checkpoint import load_checkpoint
from setgen.models.geometry import IntegrationConfig
from setgen.models.params import init_params
from setgen.models.regnet import RegNetArch, RegNetParams
from setgen.models.vae import VAEArch
from setgen.services.loss_service import ABLATION_PRESETS, LossWeights
from setgen.services.training_service import TrainConfig, pretrain_registration, train_siamese
from setgen.services.volume_io_service import load_dataset
from setgen.utils.timing import timed


def _log_path(checkpoint, log):
    return log or f'{checkpoint}.log.jsonl'


@cli.command('pretrain-reg')
@click.option('--data', required=True, type=click.Path(exists=True, file_okay=False),
              help='Dataset directory of *_image.raw subjects')
@click.option('--iters', type=click.IntRange(min=1), default=None,
              help='Adam iterations (default: PRETRAIN_ITERS)')
@click.option('--seed', default=0, show_default=True, type=int)
@click.option('--lr', type=float, default=None, help='Learning rate (default: REG_LEARNING_RATE)')
@click.option('--smoothness', type=float, default=None,
              help='Velocity gradient weight (default: REG_SMOOTHNESS)')
@click.option('--log', type=click.Path(dir_okay=False), default=None,
              help='JSON-lines log (default: <out>.log.jsonl)')
@click.option('--out', required=True, type=click.Path(dir_okay=False), help='Checkpoint path')
@click.pass_context
def pretrain_reg_command(ctx, data, iters, seed, lr, smoothness, log, out):
    """Pretrain the registration network on random subject pairs."""
    config = ctx.obj.config
    group = load_dataset(data)
    arch = RegNetArch.from_config(config, group.geometry.spatial_dims)
    params = init_params(arch, seed)
    log_path = _log_path(out, log)
    with timed('pretrain', ctx.obj.timings):
        result = pretrain_registration(
            group, params,
            iters=iters if iters is not None else config['PRETRAIN_ITERS'],
            seed=seed,
            lr=lr if lr is not None else config['REG_LEARNING_RATE'],
            smoothness=smoothness if smoothness is not None else config['REG_SMOOTHNESS'],
            integration=IntegrationConfig.from_config(config),
            n_validation=config['REG_VALIDATION_PAIRS'],
            log_path=log_path,
            checkpoint_path=out,
            log_every=config['LOG_EVERY'],
        )
    write_manifest(ctx, f'{out}.manifest.json', inputs=[data], outputs=[out, log_path],
                   seeds={'init': seed, 'pairs': seed})
    ratio = result.stats.get('validation_ratio')
    click.echo(f'Wrote {out}' + (f' (validation MSE ratio {ratio:.4f})' if ratio is not None else ''))


def _weights(config, ablation, overrides) -> LossWeights:
    weights = LossWeights.from_config(config)
    if ablation:
        weights = LossWeights.for_ablation(ablation, weights)
    explicit = {term: value for term, value in overrides.items() if value is not None}
    if explicit:
        weights = LossWeights(**dict(weights.to_dict(), **explicit))
    return weights


@cli.command('train')
@click.option('--data', required=True, type=click.Path(exists=True, file_okay=False),
              help='Dataset directory of *_image.raw subjects')
@click.option('--reg', 'reg_path', required=True, type=click.Path(exists=True, dir_okay=False),
              help='Pretrained registration checkpoint')
@click.option('--epochs', type=click.IntRange(min=1), default=None, help='Default: EPOCHS')
@click.option('--pairs-per-epoch', type=click.IntRange(min=1), default=None,
              help='Default: PAIRS_PER_EPOCH')
@click.option('--lambda1', type=float, default=None, help='Reconstruction weight')
@click.option('--lambda2', type=float, default=None, help='KL weight')
@click.option('--lambda3', type=float, default=None, help='Displacement symmetry weight')
@click.option('--lambda4', type=float, default=None, help='Template similarity weight')
@click.option('--lambda5', type=float, default=None, help='Warped-pair similarity weight')
@click.option('--ablation', type=click.Choice(sorted(ABLATION_PRESETS)), default=None,
              help='Loss preset; explicit --lambdaN values still apply')
@click.option('--similarity', default=None, help='Similarity plugin (default: SIMILARITY)')
@click.option('--seed', default=0, show_default=True, type=int)
@click.option('--log', type=click.Path(dir_okay=False), default=None,
              help='JSON-lines log (default: <out>.log.jsonl)')
@click.option('--out', required=True, type=click.Path(dir_okay=False), help='VAE checkpoint path')
@click.pass_context
def train_command(ctx, data, reg_path, epochs, pairs_per_epoch, lambda1, lambda2, lambda3,
                  lambda4, lambda5, ablation, similarity, seed, log, out):
    """Train the VAE template generator through the frozen registration network."""
    app = ctx.obj.app
    config = app.config
    group = load_dataset(data)
    reg_checkpoint = load_checkpoint(reg_path, 'regnet')
    reg = RegNetParams.from_checkpoint(reg_checkpoint)
    if reg.arch.input_shape != group.geometry.spatial_dims:
        raise GeometryError(f'registration network expects {reg.arch.input_shape}, '
                            f'data is {group.geometry.spatial_dims}', dimension='spatial')

    weights = _weights(config, ablation, {'sim': lambda1, 'kl': lambda2, 'even': lambda3,
                                          'temp': lambda4, 'warped': lambda5})
    overrides = {'seed': seed, 'weights': weights}
    if epochs is not None:
        overrides['epochs'] = epochs
    if pairs_per_epoch is not None:
        overrides['pairs_per_epoch'] = pairs_per_epoch
    cfg = TrainConfig.from_config(config, app.similarity(similarity), **overrides)

    vae = init_params(VAEArch.from_config(config, group.geometry.spatial_dims), seed)
    log_path = _log_path(out, log)
    with timed('train', ctx.obj.timings):
        train_siamese(group, vae, reg, cfg, log_path=log_path, checkpoint_path=out,
                      reg_fingerprint=reg_checkpoint.fingerprint())
    write_manifest(ctx, f'{out}.manifest.json', inputs=[data, reg_path], outputs=[out, log_path],
                   seeds={'init': seed, 'pairs': seed, 'latent': seed})
    click.echo(f'Wrote {out}')
