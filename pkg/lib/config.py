"""
Experiment configuration: one JSON document validated with pydantic.

Unknown fields are rejected everywhere; the document carries a version.
"""
import json
import logging
from enum import Enum
from pathlib import Path
from typing import Annotated, List, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from diffusion.schedule import NoiseSchedule, build_linear_schedule
from denoising.denoiser import OFF_MANIFOLD_MODES, CountDenoiser, Denoiser, OracleDenoiser, fit_count_denoiser
from denoising.templates import Template, TemplateSet
from diffusion.grid import TokenGrid
from lib.errors import ConfigurationError
from sampling.sampler import SamplerConfig, Strategy
from toybench.datasets import make_majority_dataset, make_pairs_dataset, make_template_dataset

logger = logging.getLogger(__name__)

CONFIG_VERSION = 1


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ScheduleConfig(StrictModel):
    T: int = Field(ge=1)
    K: int = Field(ge=1)
    eps_beta: float = Field(default=0.0, ge=0.0, lt=1.0)

    def build(self) -> NoiseSchedule:
        return build_linear_schedule(self.T, self.K, self.eps_beta)


class FileDataset(StrictModel):
    kind: Literal["file"] = "file"
    path: str

    @field_validator("path")
    @classmethod
    def path_must_exist(cls, v: str) -> str:
        if not Path(v).exists():
            raise ValueError(f"template set file not found: {v}")
        return v

    def build(self) -> TemplateSet:
        return TemplateSet.load(self.path)


class PairsDataset(StrictModel):
    kind: Literal["pairs"] = "pairs"

    def build(self) -> TemplateSet:
        return make_pairs_dataset()


class GeneratedDataset(StrictModel):
    kind: Literal["generated"] = "generated"
    h: int = Field(ge=1)
    w: int = Field(ge=1)
    n_templates: int = Field(ge=1)
    n_classes: int = Field(default=1, ge=1)
    seed: int = 0
    constant_position: Optional[int] = Field(default=None, ge=0)
    k: Optional[int] = Field(default=None, ge=1)

    def build(self) -> TemplateSet:
        if self.k is None:
            raise ConfigurationError("generated dataset needs k")
        return make_template_dataset(self.k, self.h, self.w, self.n_templates, self.n_classes,
                                     self.seed, self.constant_position)


class MajorityDataset(StrictModel):
    kind: Literal["majority"] = "majority"
    width: int = Field(default=3, ge=1)

    def build(self) -> TemplateSet:
        return make_majority_dataset(self.width)


class InlineTemplate(StrictModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    tokens: List[int]
    label: int = Field(default=1, ge=1, alias="class")
    weight: float = Field(default=1.0, gt=0.0)


class InlineDataset(StrictModel):
    kind: Literal["inline"] = "inline"
    k: int = Field(ge=1)
    h: int = Field(ge=1)
    w: int = Field(ge=1)
    classes: int = Field(default=1, ge=1)
    templates: List[InlineTemplate] = Field(min_length=1)

    def build(self) -> TemplateSet:
        items = [Template(TokenGrid(self.h, self.w, t.tokens), t.label, t.weight) for t in self.templates]
        return TemplateSet(k=self.k, h=self.h, w=self.w, classes=self.classes, templates=items)


DatasetConfig = Annotated[
    Union[FileDataset, PairsDataset, GeneratedDataset, MajorityDataset, InlineDataset],
    Field(discriminator="kind"),
]


class DenoiserKind(str, Enum):
    ORACLE = "oracle"
    COUNT = "count"


class DenoiserConfig(StrictModel):
    """
    oracle: exact posterior over the dataset (off_manifold: raise or nearest).
    count: count tables, loaded from path when it exists, otherwise fitted.
    """
    kind: DenoiserKind = DenoiserKind.ORACLE
    off_manifold: str = "raise"
    n_draws: int = Field(default=100_000, ge=1)
    drop_frac: float = Field(default=0.1, ge=0.0, le=1.0)
    seed: int = 0
    path: Optional[str] = None

    @field_validator("off_manifold")
    @classmethod
    def known_mode(cls, v: str) -> str:
        if v not in OFF_MANIFOLD_MODES:
            raise ValueError(f"off_manifold must be one of {OFF_MANIFOLD_MODES}")
        return v

    def fit(self, templates: TemplateSet, schedule: NoiseSchedule) -> CountDenoiser:
        return fit_count_denoiser(templates, schedule, self.n_draws, self.drop_frac,
                                  np.random.default_rng(self.seed))

    def build(self, templates: TemplateSet, schedule: NoiseSchedule) -> Denoiser:
        if self.kind == DenoiserKind.ORACLE:
            return OracleDenoiser(templates, schedule, off_manifold=self.off_manifold)
        if self.path and Path(self.path).exists():
            logger.info(f"Loading count denoiser from {self.path}")
            return CountDenoiser.load(self.path, schedule)
        return self.fit(templates, schedule)


class EvaluationConfig(StrictModel):
    n_samples: int = Field(default=1000, ge=1)
    # conditioning label; 0 is the NULL condition
    label: int = Field(default=1, ge=0)


class OutputConfig(StrictModel):
    csv: Optional[str] = None
    trace: Optional[str] = None
    samples: Optional[str] = None


class SweepConfig(StrictModel):
    """Axis lists; the sweep runs their cross product with n_seeds paired replicates."""
    strategy: List[Strategy] = Field(default_factory=lambda: [Strategy.FEWER_TOKEN])
    delta_z: List[int] = Field(default_factory=lambda: [1])
    s: List[float] = Field(default_factory=lambda: [0.0])
    r: List[float] = Field(default_factory=lambda: [1.0])
    inference_steps: List[Optional[int]] = Field(default_factory=lambda: [None])
    n_seeds: int = Field(default=1, ge=1)

    @model_validator(mode="after")
    def axes_not_empty(self) -> "SweepConfig":
        for name in ("strategy", "delta_z", "s", "r", "inference_steps"):
            if not getattr(self, name):
                raise ValueError(f"sweep axis '{name}' is empty")
        return self


class ExperimentConfig(StrictModel):
    version: Literal[1] = CONFIG_VERSION
    schedule: ScheduleConfig
    dataset: DatasetConfig
    denoiser: DenoiserConfig = Field(default_factory=DenoiserConfig)
    sampler: SamplerConfig = Field(default_factory=SamplerConfig)
    evaluation: EvaluationConfig = Field(default_factory=EvaluationConfig)
    output: OutputConfig = Field(default_factory=OutputConfig)
    sweep: Optional[SweepConfig] = None

    @model_validator(mode="after")
    def check_vocabulary(self) -> "ExperimentConfig":
        if isinstance(self.dataset, GeneratedDataset) and self.dataset.k is None:
            self.dataset.k = self.schedule.K
        if isinstance(self.dataset, InlineDataset) and self.dataset.k != self.schedule.K:
            raise ValueError(f"dataset k={self.dataset.k} differs from schedule K={self.schedule.K}")
        return self

    def build_templates(self) -> TemplateSet:
        """The dataset, checked against the schedule's vocabulary."""
        templates = self.dataset.build()
        if templates.k != self.schedule.K:
            raise ConfigurationError(f"dataset K={templates.k} differs from schedule K={self.schedule.K}")
        return templates

    @classmethod
    def load(cls, path: Union[str, Path]) -> "ExperimentConfig":
        """
        Read and validate a config file.

        Raises:
            ConfigurationError: file missing or not valid JSON
            ValidationError: fields missing, unknown or out of range
        """
        path = Path(path)
        if not path.exists():
            raise ConfigurationError(f"config file not found: {path}")
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise ConfigurationError(f"config {path} is not valid JSON: {e}")
        return cls.model_validate(data)


__all__ = [
    "CONFIG_VERSION",
    "ScheduleConfig",
    "DenoiserKind",
    "DenoiserConfig",
    "EvaluationConfig",
    "OutputConfig",
    "SweepConfig",
    "ExperimentConfig",
    "ValidationError",
]
