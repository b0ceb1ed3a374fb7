"""
Result records: registrations, templates, evaluation reports and run manifests.
"""
import enum
import json
import os
import platform
import sys
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from typing import Any, Dict, List, Optional

import numpy as np

from setgen.errors import DataFormatError


class TemplateMethod(enum.Enum):
    """How a template was produced."""
    SETGEN = 'setgen'
    SETGEN_PLUS = 'setgen+'
    AVE = 'ave'
    NAIVE_AVERAGE = 'naive-average'

    @classmethod
    def parse(cls, value) -> 'TemplateMethod':
        if isinstance(value, cls):
            return value
        try:
            return cls(value)
        except ValueError:
            choices = ', '.join(m.value for m in cls)
            raise DataFormatError(f'unknown template method {value!r}; choose from {choices}')


@dataclass
class SubjectRegistration:
    """
    One subject registered to a template.

    ``deformation`` maps template space to subject space (template warped by
    it resembles the subject); ``inverse`` maps subject to template and
    ``displacement`` is ``inverse - id``, the subject-to-template flow.
    """

    subject_id: str
    velocity: np.ndarray
    deformation: np.ndarray
    inverse: np.ndarray
    displacement: np.ndarray
    warped_image: np.ndarray
    warped_labels: Optional[np.ndarray] = None


@dataclass
class TemplateResult:
    template: np.ndarray
    method: TemplateMethod
    registrations: List[SubjectRegistration] = field(default_factory=list)
    provenance: Dict[str, Any] = field(default_factory=dict)

    @property
    def has_fields(self) -> bool:
        return bool(self.registrations)

    def displacements(self) -> List[np.ndarray]:
        return [r.displacement for r in self.registrations]

    def warped_labels(self) -> List[np.ndarray]:
        return [r.warped_labels for r in self.registrations if r.warped_labels is not None]


@dataclass
class GroupEvalReport:
    """Pairwise Dice, Centrality and AvgDisp of one template method on one group."""

    method: str
    group_size: int
    label_count: int
    dice: Optional[float]
    per_label_dice: Dict[str, float]
    centrality: float
    avg_disp: float
    runtime_seconds: float
    normalized_centrality: Optional[float] = None
    normalized_avg_disp: Optional[float] = None
    template_mse: Optional[float] = None
    best_subject_mse: Optional[float] = None
    unregistered_dice: Optional[float] = None

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'GroupEvalReport':
        return cls(**data)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> 'GroupEvalReport':
        return cls.from_dict(json.loads(text))


@dataclass
class RunManifest:
    """Everything needed to reproduce one CLI run."""

    subcommand: str
    argv: List[str]
    config: Dict[str, Any]
    seeds: Dict[str, int] = field(default_factory=dict)
    inputs: List[str] = field(default_factory=list)
    outputs: Dict[str, str] = field(default_factory=dict)
    timings: Dict[str, float] = field(default_factory=dict)
    tool_version: str = ''
    python_version: str = field(default_factory=lambda: sys.version.split()[0])
    platform: str = field(default_factory=platform.platform)
    finished_at: str = ''

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'RunManifest':
        return cls(**data)

    def write(self, path: str) -> None:
        """Write atomically; stamps ``finished_at``."""
        self.finished_at = datetime.now(timezone.utc).isoformat()
        tmp_path = f'{path}.tmp'
        with open(tmp_path, 'w') as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True, default=str)
        os.replace(tmp_path, path)

    @classmethod
    def read(cls, path: str) -> 'RunManifest':
        try:
            with open(path) as f:
                return cls.from_dict(json.load(f))
        except (OSError, json.JSONDecodeError, TypeError) as e:
            raise DataFormatError(f'cannot read run manifest {path}: {e}', path=path)
