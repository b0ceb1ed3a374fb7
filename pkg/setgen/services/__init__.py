"""
Service layer: deformation, losses, optimization, training, templates,
metrics, phantoms and volume I/O.
"""
from setgen.services.deformation_service import (
    compose, integrate_svf, invert, register_to_template, warp, warp_labels,
)
from setgen.services.metrics_service import (
    avg_disp, centrality, compare_methods, evaluate, pairwise_dice, template_mse,
)
from setgen.services.phantom_service import gen_phantoms
from setgen.services.template_service import (
    PipelineOptions, build_template, generate_template, refine_template, register_group,
)
from setgen.services.training_service import TrainConfig, pretrain_registration, train_siamese

__all__ = [
    'avg_disp',
    'build_template',
    'centrality',
    'compare_methods',
    'compose',
    'evaluate',
    'gen_phantoms',
    'generate_template',
    'integrate_svf',
    'invert',
    'pairwise_dice',
    'PipelineOptions',
    'pretrain_registration',
    'refine_template',
    'register_group',
    'register_to_template',
    'template_mse',
    'train_siamese',
    'TrainConfig',
    'warp',
    'warp_labels',
]
