"""
Metrics service: group-level quality of a template and its registrations.

Group reductions sum in sorted order so a report
is a function of the subject multiset, not of the subject order.
"""
import csv
import io
import json
import logging
import os
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from setgen.errors import ConfigError, GeometryError
from setgen.models.geometry import DisplacementField
from setgen.models.regnet import RegNetParams
from setgen.models.results import GroupEvalReport, TemplateMethod, TemplateResult
from setgen.models.vae import VAEParams
from setgen.models.volume import SubjectGroup, SubjectVolume
from setgen.services.template_service import DEFAULT_OPTIONS, PipelineOptions, build_template, register_group
from setgen.utils.reductions import ordered_mean
from setgen.utils.timing import timed

logger = logging.getLogger(__name__)

COMPARISON_COLUMNS = ['method', 'dice', 'centrality', 'avg_disp', 'runtime_seconds']


@dataclass(frozen=True)
class DiceSummary:
    mean: float
    per_label: Dict[str, float]


def _label_union(label_maps: Sequence[np.ndarray]) -> List[int]:
    ids = set()
    for labels in label_maps:
        ids.update(int(v) for v in np.unique(labels) if v != 0)
    return sorted(ids)


def pairwise_dice(label_maps: Sequence[np.ndarray], label_ids: Optional[Sequence[int]] = None) -> DiceSummary:
    """
    Mean Dice overlap over all ordered subject pairs (i, j), the diagonal
    included, and over every label.

    A label absent from both maps of a pair scores 1; absent from exactly one
    it scores 0.

    Args:
        label_maps: Integer label maps of identical shape, at least two
        label_ids: Labels to score; defaults to the non-zero labels present

    Returns:
        DiceSummary: overall mean and the mean per label id
    """
    if len(label_maps) < 2:
        raise ValueError(f'pairwise Dice needs at least 2 label maps, got {len(label_maps)}')
    shape = np.shape(label_maps[0])
    for labels in label_maps[1:]:
        if np.shape(labels) != shape:
            raise GeometryError(f'label maps disagree in shape: {shape} vs {np.shape(labels)}',
                                dimension='spatial')
    ids = list(label_ids) if label_ids is not None else _label_union(label_maps)
    if not ids:
        raise ValueError('no non-zero labels to score')

    flat = np.stack([np.asarray(labels).reshape(-1) for labels in label_maps])
    n = flat.shape[0]
    per_label = {}
    for label in ids:
        masks = (flat == label).astype(np.int64)
        counts = masks.sum(axis=1)
        overlap = masks @ masks.T
        denom = counts[:, None] + counts[None, :]
        with np.errstate(invalid='ignore', divide='ignore'):
            scores = np.where(denom == 0, 1.0, 2.0 * overlap / np.maximum(denom, 1))
        per_label[str(label)] = float(np.sort(scores.reshape(-1)).sum() / (n * n))
    overall = float(np.sort(np.array(list(per_label.values()))).sum() / len(per_label))
    return DiceSummary(overall, per_label)


def _field_array(field) -> np.ndarray:
    if isinstance(field, DisplacementField):
        return field.numpy()[0]
    return np.asarray(field, dtype=np.float64)


def centrality(fields: Sequence) -> float:
    """L2 norm of the voxelwise mean displacement over the group."""
    if not fields:
        raise ValueError('centrality needs at least one displacement field')
    return float(np.linalg.norm(ordered_mean([_field_array(f) for f in fields])))


def avg_disp(fields: Sequence) -> float:
    """Mean over subjects of the L2 norm of each displacement field."""
    if not fields:
        raise ValueError('avg_disp needs at least one displacement field')
    norms = [np.array(np.linalg.norm(_field_array(f))) for f in fields]
    return float(ordered_mean(norms))


def normalize_by_voxels(value: float, num_voxels: int) -> float:
    return value / float(np.sqrt(num_voxels))


def template_mse(template: np.ndarray, reference: np.ndarray) -> float:
    template, reference = np.asarray(template, np.float64), np.asarray(reference, np.float64)
    if template.shape != reference.shape:
        raise GeometryError(f'template {template.shape} vs reference {reference.shape}',
                            dimension='spatial')
    return float(np.mean((template - reference) ** 2))


def _reference_scores(group: SubjectGroup, template: np.ndarray,
                      ground_truth: SubjectVolume) -> Tuple[float, float]:
    reference = ground_truth.intensities
    best = min(template_mse(s.intensities, reference) for s in group)
    return template_mse(template, reference), best


def evaluate(group: SubjectGroup, result: TemplateResult, reg: Optional[RegNetParams] = None,
             options: PipelineOptions = DEFAULT_OPTIONS, normalized: bool = False,
             ground_truth: Optional[SubjectVolume] = None) -> GroupEvalReport:
    """
    Score a template result on its group.

    Registrations missing from ``result`` (or lacking warped labels while the
    group has labels) are recomputed with ``reg``.

    Args:
        group: The subjects the template was built from
        result: Template and, optionally, per-subject registrations
        reg: Registration network, needed when registrations must be recomputed
        options: Integration, field convention and thread count
        normalized: Also report centrality and avg_disp divided by sqrt(voxels)
        ground_truth: Known center; adds template and best-subject MSE

    Returns:
        GroupEvalReport
    """
    timings = {}
    with timed('evaluate', timings):
        registrations = result.registrations
        needs_labels = group.has_labels and any(r.warped_labels is None for r in registrations)
        if not registrations or needs_labels:
            if reg is None:
                raise ConfigError('registrations are missing and no registration network was given',
                                  field='reg')
            registrations = register_group(group, result.template, reg, options)
        displacements = [r.displacement for r in registrations]
        report = GroupEvalReport(
            method=result.method.value,
            group_size=len(group),
            label_count=0,
            dice=None,
            per_label_dice={},
            centrality=centrality(displacements),
            avg_disp=avg_disp(displacements),
            runtime_seconds=0.0,
        )
        if group.has_labels and len(group) >= 2:
            label_ids = group.label_ids()
            summary = pairwise_dice([r.warped_labels for r in registrations], label_ids)
            report.dice, report.per_label_dice = summary.mean, summary.per_label
            report.label_count = len(label_ids)
            report.unregistered_dice = pairwise_dice([s.labels for s in group], label_ids).mean
        if normalized:
            voxels = group.geometry.num_voxels
            report.normalized_centrality = normalize_by_voxels(report.centrality, voxels)
            report.normalized_avg_disp = normalize_by_voxels(report.avg_disp, voxels)
        if ground_truth is not None:
            report.template_mse, report.best_subject_mse = _reference_scores(
                group, result.template, ground_truth)
    report.runtime_seconds = float(result.provenance.get('runtime_seconds', 0.0)) + timings['evaluate']
    logger.info(f'{report.method}: dice={report.dice} centrality={report.centrality:.4g} '
                f'avg_disp={report.avg_disp:.4g}')
    return report


def compare_methods(group: SubjectGroup, vae: Optional[VAEParams], reg: RegNetParams,
                    methods: Sequence = tuple(TemplateMethod), options: PipelineOptions = DEFAULT_OPTIONS,
                    ave_iters: int = 6, normalized: bool = False,
                    ground_truth: Optional[SubjectVolume] = None) -> List[GroupEvalReport]:
    """Build and evaluate a template with every method, in the given order."""
    reports = []
    for method in methods:
        method = TemplateMethod.parse(method)
        timings = {}
        with timed(method.value, timings):
            result = build_template(method, group, reg, vae, options, ave_iters)
        result.provenance['runtime_seconds'] = timings[method.value]
        reports.append(evaluate(group, result, reg, options, normalized, ground_truth))
    return reports


def _write_text(path: str, text: str) -> None:
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    tmp = f'{path}.tmp'
    with open(tmp, 'w', encoding='utf-8', newline='') as f:
        f.write(text)
    os.replace(tmp, path)


def write_report(report: GroupEvalReport, path: str) -> None:
    _write_text(path, report.to_json())


def per_label_csv(report: GroupEvalReport) -> str:
    output = io.StringIO()
    writer = csv.DictWriter(output, fieldnames=['label', 'dice'], lineterminator='\n')
    writer.writeheader()
    for label in sorted(report.per_label_dice, key=int):
        writer.writerow({'label': label, 'dice': f'{report.per_label_dice[label]:.6f}'})
    return output.getvalue()


def write_per_label(report: GroupEvalReport, path: str) -> None:
    _write_text(path, per_label_csv(report))


def comparison_csv(reports: Sequence[GroupEvalReport]) -> str:
    output = io.StringIO()
    writer = csv.DictWriter(output, fieldnames=COMPARISON_COLUMNS, lineterminator='\n')
    writer.writeheader()
    for report in reports:
        writer.writerow({
            'method': report.method,
            'dice': '' if report.dice is None else f'{report.dice:.6f}',
            'centrality': f'{report.centrality:.6f}',
            'avg_disp': f'{report.avg_disp:.6f}',
            'runtime_seconds': f'{report.runtime_seconds:.3f}',
        })
    return output.getvalue()


def write_comparison(reports: Sequence[GroupEvalReport], json_path: str, csv_path: str) -> None:
    _write_text(json_path, json.dumps([r.to_dict() for r in reports], indent=2, sort_keys=True))
    _write_text(csv_path, comparison_csv(reports))
