"""
Data models and network definitions.
"""
from setgen.models.geometry import (
    VolumeGeometry, VelocityField, DisplacementField, DeformationField, IntegrationConfig
)
from setgen.models.volume import SubjectVolume, SubjectGroup, PhantomConfig, VolumeKind
from setgen.models.params import ParamSet, init_params
from setgen.models.checkpoint import ModelCheckpoint, load_checkpoint, save_checkpoint
from setgen.models.vae import (
    VAEArch, VAEParams, EncoderParams, DecoderParams, LatentCode, encode, decode
)
from setgen.models.regnet import RegNetArch, RegNetParams, predict_velocity
from setgen.models.results import (
    TemplateMethod, SubjectRegistration, TemplateResult, GroupEvalReport, RunManifest
)

__all__ = [
    'VolumeGeometry', 'VelocityField', 'DisplacementField', 'DeformationField',
    'IntegrationConfig',
    'SubjectVolume', 'SubjectGroup', 'PhantomConfig', 'VolumeKind',
    'ParamSet', 'init_params',
    'ModelCheckpoint', 'load_checkpoint', 'save_checkpoint',
    'VAEArch', 'VAEParams', 'EncoderParams', 'DecoderParams', 'LatentCode', 'encode', 'decode',
    'RegNetArch', 'RegNetParams', 'predict_velocity',
    'TemplateMethod', 'SubjectRegistration', 'TemplateResult', 'GroupEvalReport', 'RunManifest',
]
