"""
Trend experiments: matrices of sampler settings run with paired seeds.

Every cell of an experiment reuses the same replicate seeds, so
differences between cells are not confounded by sampling noise in the
seed choice. Every cell carries base_seed as its sampler seed, and
replicate r draws chain i from default_rng([sampler.seed + r, i]).
"""
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field

from diffusion.grid import TokenGrid, mask_token
from diffusion.schedule import NoiseSchedule, build_linear_schedule
from diffusion.transition import sample_forward_batch
from denoising.denoiser import Denoiser, OracleDenoiser, fit_count_denoiser
from denoising.guidance import GuidanceConfig, NullMode
from denoising.templates import TemplateSet
from lib.errors import ConfigurationError
from sampling.sampler import DiffusionSampler, SamplerConfig, Strategy, purity_scores
from sampling.selection import Selection, select_top_k, select_uniform, select_weighted
from toybench.datasets import make_majority_dataset, make_pairs_dataset, make_template_dataset
from toybench.metrics import MetricsReport, evaluate

logger = logging.getLogger(__name__)


class TrendKind(str, Enum):
    STEP_COUNT = "step_count"
    GUIDANCE_SWEEP = "guidance_sweep"
    PURITY_AB = "purity_ab"
    PARALLEL_VS_SEQUENTIAL = "parallel_vs_sequential"
    GUIDANCE_VARIANTS = "guidance_variants"


class TrendConfig(BaseModel):
    """Replication and model settings shared by every trend experiment."""
    model_config = ConfigDict(extra="forbid")

    n_seeds: int = Field(default=20, ge=1)
    n_samples: int = Field(default=400, ge=1)
    base_seed: int = 0
    jobs: int = Field(default=1, ge=1)
    cond: int = Field(default=1, ge=0)

    # step_count / purity_ab: K=8, 4x4, 16 templates, oracle denoiser
    grid_k: int = Field(default=8, ge=1)
    grid_side: int = Field(default=4, ge=1)
    n_templates: int = Field(default=16, ge=1)
    dataset_seed: int = 0
    delta_zs: List[int] = Field(default_factory=lambda: [16, 4, 1])
    purity_delta_z: int = Field(default=4, ge=1)
    purity_scale: float = Field(default=1.0, ge=0.0)

    # guidance_sweep / guidance_variants: majority dataset, count denoiser
    majority_width: int = Field(default=3, ge=1)
    fit_draws: int = Field(default=100_000, ge=1)
    drop_frac: float = Field(default=0.1, ge=0.0, le=1.0)
    fit_seed: int = 0
    scales: List[float] = Field(default_factory=lambda: [0.0, 1.0, 3.0, 5.0])
    variant_scale: float = Field(default=3.0, ge=0.0)

    # parallel_vs_sequential: AA/BB pairs, oracle denoiser
    pairs_T: int = Field(default=4, ge=1)


@dataclass(frozen=True)
class TrendCell:
    """One sampler setting of an experiment."""
    sampler: SamplerConfig
    denoiser: Denoiser

    def echo(self) -> Dict[str, Any]:
        cfg = self.sampler
        return {
            "strategy": cfg.strategy.value,
            "delta_z": cfg.delta_z,
            "s": cfg.guidance.scale,
            "r": cfg.purity_scale,
            "inference_steps": cfg.inference_steps,
            "selection": cfg.selection.value,
            "null_mode": cfg.guidance.null_mode.value,
        }


def run_cell(cell: TrendCell, templates: TemplateSet, schedule: NoiseSchedule, cond: int,
             n_samples: int, seed: int, jobs: int = 1) -> MetricsReport:
    """Sample n_samples chains for one cell and one replicate seed, then evaluate."""
    sampler = DiffusionSampler(cell.denoiser, schedule, cell.sampler)
    traces = sampler.run_chains(cond, [[seed, i] for i in range(n_samples)], jobs=jobs)
    return evaluate([t.final for t in traces], templates, cond, seed=seed, config=cell.echo())


def _oracle_grid_setup(config: TrendConfig) -> Tuple[TemplateSet, NoiseSchedule, OracleDenoiser]:
    side = config.grid_side
    templates = make_template_dataset(config.grid_k, side, side, config.n_templates,
                                      seed=config.dataset_seed)
    schedule = build_linear_schedule(side * side, config.grid_k)
    return templates, schedule, OracleDenoiser(templates, schedule, off_manifold="nearest")


def _majority_setup(config: TrendConfig, drop_frac: float):
    templates = make_majority_dataset(config.majority_width)
    schedule = build_linear_schedule(config.majority_width, templates.k)
    rng = np.random.default_rng(config.fit_seed)
    denoiser = fit_count_denoiser(templates, schedule, config.fit_draws, drop_frac, rng)
    return templates, schedule, denoiser


def build_cells(kind: TrendKind, config: TrendConfig) -> Tuple[TemplateSet, NoiseSchedule, List[TrendCell]]:
    """
    Dataset, schedule and sampler cells of an experiment.

    Args:
        kind: Which trend to reproduce
        config: Experiment settings

    Returns:
        (templates, schedule, cells)
    """
    kind = TrendKind(kind)

    if kind == TrendKind.STEP_COUNT:
        templates, schedule, oracle = _oracle_grid_setup(config)
        if not config.delta_zs:
            raise ConfigurationError("delta_zs must not be empty")
        cells = [TrendCell(SamplerConfig(strategy=Strategy.FEWER_TOKEN, delta_z=dz), oracle)
                 for dz in config.delta_zs]

    elif kind == TrendKind.PURITY_AB:
        templates, schedule, oracle = _oracle_grid_setup(config)
        dz = config.purity_delta_z
        cells = [
            TrendCell(SamplerConfig(strategy=Strategy.FEWER_TOKEN, delta_z=dz), oracle),
            TrendCell(SamplerConfig(strategy=Strategy.PURITY, delta_z=dz, purity_scale=config.purity_scale,
                                    selection=Selection.WEIGHTED), oracle),
            TrendCell(SamplerConfig(strategy=Strategy.PURITY, delta_z=dz, purity_scale=config.purity_scale,
                                    selection=Selection.TOP_K), oracle),
        ]

    elif kind == TrendKind.PARALLEL_VS_SEQUENTIAL:
        templates = make_pairs_dataset()
        schedule = build_linear_schedule(config.pairs_T, templates.k)
        oracle = OracleDenoiser(templates, schedule)
        cells = [
            TrendCell(SamplerConfig(strategy=Strategy.FAST, inference_steps=1), oracle),
            TrendCell(SamplerConfig(strategy=Strategy.VANILLA), oracle),
            TrendCell(SamplerConfig(strategy=Strategy.FEWER_TOKEN, delta_z=1), oracle),
        ]

    elif kind == TrendKind.GUIDANCE_SWEEP:
        if not config.scales:
            raise ConfigurationError("scales must not be empty")
        templates, schedule, denoiser = _majority_setup(config, config.drop_frac)
        cells = [
            TrendCell(SamplerConfig(strategy=Strategy.FEWER_TOKEN, delta_z=1,
                                    guidance=GuidanceConfig(scale=s, null_mode=NullMode.LEARNABLE)), denoiser)
            for s in config.scales
        ]

    else:
        templates, schedule, denoiser = _majority_setup(config, config.drop_frac)
        s = config.variant_scale
        cells = [
            TrendCell(SamplerConfig(strategy=Strategy.FEWER_TOKEN, delta_z=1), denoiser),
            TrendCell(SamplerConfig(strategy=Strategy.FEWER_TOKEN, delta_z=1,
                                    guidance=GuidanceConfig(scale=s, null_mode=NullMode.ZERO_SHOT)), denoiser),
            TrendCell(SamplerConfig(strategy=Strategy.FEWER_TOKEN, delta_z=1,
                                    guidance=GuidanceConfig(scale=s, null_mode=NullMode.LEARNABLE)), denoiser),
        ]

    cells = [TrendCell(cell.sampler.model_copy(update={"seed": config.base_seed}), cell.denoiser)
             for cell in cells]
    return templates, schedule, cells


def run_trend_experiment(kind: TrendKind, config: Optional[TrendConfig] = None) -> List[MetricsReport]:
    """
    Run every cell of an experiment over config.n_seeds paired replicates.

    Args:
        kind: step_count, guidance_sweep, purity_ab, parallel_vs_sequential
            or guidance_variants
        config: Experiment settings (defaults when None)

    Returns:
        Reports ordered by cell, then by replicate; report.config carries
        the cell settings, the kind and the replicate index
    """
    config = config or TrendConfig()
    kind = TrendKind(kind)
    templates, schedule, cells = build_cells(kind, config)
    logger.info(f"trend {kind.value}: {len(cells)} cell(s) x {config.n_seeds} seed(s) x {config.n_samples} sample(s)")

    reports = []
    for cell in cells:
        for replicate in range(config.n_seeds):
            seed = cell.sampler.seed + replicate
            report = run_cell(cell, templates, schedule, config.cond, config.n_samples, seed, config.jobs)
            report.config.update({"kind": kind.value, "replicate": replicate})
            reports.append(report)
        logger.info(f"cell {cell.echo()} done")
    return reports


def reports_frame(reports: Sequence[MetricsReport]) -> pd.DataFrame:
    """Reports as a DataFrame: CSV row columns plus the echoed cell settings."""
    rows = []
    for report in reports:
        row = dict(report.config)
        row.update(report.to_row())
        rows.append(row)
    return pd.DataFrame(rows)


def _corrupted_states(templates: TemplateSet, schedule: NoiseSchedule, t: int, n_states: int,
                      rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    m = rng.choice(len(templates), size=n_states, p=templates.weights)
    clean = templates.tokens[m]
    noisy = sample_forward_batch(clean, np.full(n_states, t), schedule, rng)
    return clean, noisy, templates.labels[m]


def purity_accuracy_table(denoiser: Denoiser, templates: TemplateSet, schedule: NoiseSchedule,
                          timesteps: Sequence[int], n_states: int = 200, seed: int = 0,
                          n_bins: int = 10) -> pd.DataFrame:
    """
    Top-1 accuracy of masked positions binned by purity.

    States are forward corruptions of templates; predictions are
    conditioned on each template's own class.

    Args:
        denoiser: Clean-token predictor
        templates: Data distribution
        schedule: Noise schedule
        timesteps: Timesteps to score
        n_states: Corrupted states per timestep
        seed: Random seed
        n_bins: Equal-width purity bins over [0, 1]

    Returns:
        DataFrame with columns t, purity_low, purity_high, n, accuracy
    """
    rng = np.random.default_rng(seed)
    K = schedule.K
    records = []
    for t in timesteps:
        clean, noisy, labels = _corrupted_states(templates, schedule, int(t), n_states, rng)
        for x0, xt, y in zip(clean, noisy, labels):
            grid = TokenGrid(templates.h, templates.w, xt)
            masked = np.flatnonzero(xt == mask_token(K))
            if masked.size == 0:
                continue
            probs = denoiser.predict(grid, int(t), int(y))
            scores = purity_scores(probs)[masked]
            hits = probs[masked].argmax(axis=1) + 1 == x0[masked]
            records.extend({"t": int(t), "purity": p, "correct": c} for p, c in zip(scores, hits))

    frame = pd.DataFrame(records, columns=["t", "purity", "correct"])
    edges = np.linspace(0.0, 1.0, n_bins + 1)
    frame["bin"] = pd.cut(frame["purity"], edges, include_lowest=True)
    table = (frame.groupby(["t", "bin"], observed=True)["correct"]
             .agg(n="size", accuracy="mean").reset_index())
    table["purity_low"] = [b.left for b in table["bin"]]
    table["purity_high"] = [b.right for b in table["bin"]]
    return table[["t", "purity_low", "purity_high", "n", "accuracy"]]


def selection_accuracy(denoiser: Denoiser, templates: TemplateSet, schedule: NoiseSchedule,
                       seeds: Sequence[int], t: Optional[int] = None, n_states: int = 200,
                       delta_z: int = 1, selection: Selection = Selection.TOP_K) -> pd.DataFrame:
    """
    Top-1 accuracy of purity-selected against uniformly selected masked positions.

    For each seed, n_states corrupted states at timestep t are drawn; in
    each, delta_z masked positions are picked by purity and, independently,
    uniformly, and the argmax prediction at the picked positions is scored.

    Returns:
        DataFrame with columns seed, purity_acc, uniform_acc
    """
    t = schedule.T if t is None else int(t)
    K = schedule.K
    rows = []
    for seed in seeds:
        rng = np.random.default_rng(seed)
        clean, noisy, labels = _corrupted_states(templates, schedule, t, n_states, rng)
        purity_hits, uniform_hits = [], []
        for x0, xt, y in zip(clean, noisy, labels):
            masked = np.flatnonzero(xt == mask_token(K))
            if masked.size == 0:
                continue
            probs = denoiser.predict(TokenGrid(templates.h, templates.w, xt), t, int(y))
            correct = probs.argmax(axis=1) + 1 == x0
            scores = purity_scores(probs)[masked]
            if selection == Selection.TOP_K:
                by_purity = select_top_k(masked, scores, delta_z)
            else:
                by_purity = select_weighted(masked, scores, delta_z, rng)
            by_chance = select_uniform(masked, delta_z, rng)
            purity_hits.extend(correct[by_purity])
            uniform_hits.extend(correct[by_chance])
        rows.append({
            "seed": int(seed),
            "purity_acc": float(np.mean(purity_hits)) if purity_hits else float("nan"),
            "uniform_acc": float(np.mean(uniform_hits)) if uniform_hits else float("nan"),
        })
    return pd.DataFrame(rows, columns=["seed", "purity_acc", "uniform_acc"])
