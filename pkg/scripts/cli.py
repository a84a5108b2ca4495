#!/usr/bin/env python3
"""
Command-line driver for the toy diffusion engine.

    python -m scripts.cli schedule --T 4 --K 2 --eps-beta 0.1
    python -m scripts.cli fit config.json
    python -m scripts.cli sample config.json --jobs 4
    python -m scripts.cli eval config.json --samples samples.jsonl
    python -m scripts.cli sweep config.json

Existing output files are refused unless --overwrite is given; eval only appends.
Exit codes: 0 success, 2 configuration error, 3 sampling failure.
"""
import argparse
import itertools
import logging
import os
import sys
from typing import List, Optional

import pandas as pd
from pydantic import ValidationError

# Add parent directory to path
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from diffusion.schedule import build_linear_schedule
from lib.config import DenoiserKind, ExperimentConfig
from lib.errors import ConfigurationError, SamplingFailure, ToyDiffusionError
from lib.settings import get_default_jobs, get_log_level
from lib.storage import get_storage
from sampling.sampler import DiffusionSampler, SamplerConfig
from toybench.metrics import REPORT_COLUMNS, evaluate

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SAMPLING = 3


def _sampler_echo(cfg: SamplerConfig) -> dict:
    return {
        "strategy": cfg.strategy.value,
        "delta_z": cfg.delta_z,
        "s": cfg.guidance.scale,
        "r": cfg.purity_scale,
    }


def _require(value: Optional[str], what: str) -> str:
    if not value:
        raise ConfigurationError(f"no {what} given (flag or config output section)")
    return value


def cmd_schedule_inspect(args: argparse.Namespace) -> int:
    """Emit the schedule CSV to stdout or a file."""
    schedule = build_linear_schedule(args.T, args.K, args.eps_beta)
    if args.out:
        schedule.to_csv(get_storage().claim(args.out, args.overwrite))
        logger.info(f"Wrote schedule (T={args.T}, K={args.K}) to {args.out}")
    else:
        sys.stdout.write(schedule.to_csv())
    return EXIT_OK


def cmd_fit(args: argparse.Namespace) -> int:
    """Fit a count denoiser and write it as JSON."""
    config = ExperimentConfig.load(args.config)
    if config.denoiser.kind != DenoiserKind.COUNT:
        raise ConfigurationError("fit requires denoiser.kind = 'count'")
    out = _require(args.out or config.denoiser.path, "denoiser output path")
    path = get_storage().claim(out, args.overwrite)

    schedule = config.schedule.build()
    templates = config.build_templates()
    denoiser = config.denoiser.fit(templates, schedule)
    denoiser.save(path)

    print(f"Fitted count denoiser: {denoiser.n_draws} draws, drop_frac={denoiser.drop_frac:g}")
    print(f"  Table: {denoiser.counts.shape} (T, C+1, K+1, K) = {denoiser.counts.size} cells")
    print(f"  Saved to {out}")
    return EXIT_OK


def cmd_sample(args: argparse.Namespace) -> int:
    """Run n_samples chains; chain i uses seed sampler.seed + i."""
    config = ExperimentConfig.load(args.config)
    out = _require(args.out or config.output.samples, "samples output path")
    trace_path = args.trace or config.output.trace
    storage = get_storage()
    storage.claim(out, args.overwrite)
    if trace_path:
        storage.claim(trace_path, args.overwrite)

    schedule = config.schedule.build()
    templates = config.build_templates()
    denoiser = config.denoiser.build(templates, schedule)
    sampler = DiffusionSampler(denoiser, schedule, config.sampler)

    n = config.evaluation.n_samples
    base = config.sampler.seed
    logger.info(f"Sampling {n} chain(s) with strategy {config.sampler.strategy.value}")
    traces = sampler.run_chains(config.evaluation.label, [base + i for i in range(n)], jobs=args.jobs)

    storage.save_samples(out, [t.final for t in traces])
    if trace_path:
        storage.save_traces(trace_path, traces)
    restarts = sum(t.restarts for t in traces)
    if restarts:
        logger.warning(f"{restarts} chain restart(s) after off-manifold states")
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    """Evaluate a samples file and append one report row."""
    config = ExperimentConfig.load(args.config)
    samples_path = _require(args.samples or config.output.samples, "samples file")
    storage = get_storage()
    samples = storage.load_samples(samples_path)
    templates = config.build_templates()

    report = evaluate(samples, templates, config.evaluation.label, seed=config.sampler.seed,
                      config=_sampler_echo(config.sampler))
    frame = pd.DataFrame([report.to_row()], columns=REPORT_COLUMNS)

    csv_path = args.csv or config.output.csv
    if csv_path:
        storage.append_rows(csv_path, frame)
        logger.info(f"Appended report row to {csv_path}")
    else:
        frame.to_csv(sys.stdout, index=False, float_format="%.17g", lineterminator="\n")
    return EXIT_OK


def sweep_configs(config: ExperimentConfig) -> List[SamplerConfig]:
    """Cross product of the sweep axes applied on top of the base sampler config."""
    if config.sweep is None:
        raise ConfigurationError("config has no 'sweep' section")
    axes = config.sweep
    cells = []
    for strategy, dz, s, r, steps in itertools.product(axes.strategy, axes.delta_z, axes.s, axes.r,
                                                       axes.inference_steps):
        data = config.sampler.model_dump()
        data.update(strategy=strategy, delta_z=dz, purity_scale=r, inference_steps=steps)
        data["guidance"] = {**data["guidance"], "scale": s}
        cells.append(SamplerConfig.model_validate(data))
    return cells


def cmd_sweep(args: argparse.Namespace) -> int:
    """One CSV row per (cell, replicate); replicate k uses paired seeds [sampler.seed + k, i]."""
    config = ExperimentConfig.load(args.config)
    csv_path = _require(args.csv or config.output.csv, "CSV output path")
    cells = sweep_configs(config)
    get_storage().claim(csv_path, args.overwrite)

    schedule = config.schedule.build()
    templates = config.build_templates()
    denoiser = config.denoiser.build(templates, schedule)
    n = config.evaluation.n_samples
    label = config.evaluation.label

    rows = []
    for cell in cells:
        sampler = DiffusionSampler(denoiser, schedule, cell)
        for replicate in range(config.sweep.n_seeds):
            seed = cell.seed + replicate
            traces = sampler.run_chains(label, [[seed, i] for i in range(n)], jobs=args.jobs)
            report = evaluate([t.final for t in traces], templates, label, seed=seed,
                              config=_sampler_echo(cell))
            rows.append(report.to_row())
        logger.info(f"Cell {_sampler_echo(cell)} done")

    get_storage().write_frame(csv_path, pd.DataFrame(rows, columns=REPORT_COLUMNS))
    logger.info(f"Wrote {len(rows)} sweep row(s) to {csv_path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Discrete mask-and-replace diffusion on toy token grids")
    parser.add_argument("-v", "--verbose", action="store_true", help="Log at DEBUG level")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("schedule", help="Print the noise schedule as CSV")
    p.add_argument("--T", type=int, required=True, help="Number of diffusion steps")
    p.add_argument("--K", type=int, required=True, help="Vocabulary size excluding MASK")
    p.add_argument("--eps-beta", type=float, default=0.0, help="Replace-noise level in [0, 1)")
    p.add_argument("--out", help="Write to this file instead of stdout")
    p.add_argument("--overwrite", action="store_true", help="Replace an existing output file")
    p.set_defaults(func=cmd_schedule_inspect)

    p = sub.add_parser("fit", help="Fit a count denoiser")
    p.add_argument("config", help="Experiment config (JSON)")
    p.add_argument("--out", help="Denoiser file (default: denoiser.path)")
    p.add_argument("--overwrite", action="store_true", help="Replace an existing denoiser file")
    p.set_defaults(func=cmd_fit)

    for name, func, text in (("sample", cmd_sample, "Run sampling chains"),
                             ("sweep", cmd_sweep, "Run a parameter sweep")):
        p = sub.add_parser(name, help=text)
        p.add_argument("config", help="Experiment config (JSON)")
        p.add_argument("--jobs", type=int, default=None, help="Worker threads (default: TOYDIFF_JOBS or 1)")
        if name == "sample":
            p.add_argument("--out", help="Samples file (default: output.samples)")
            p.add_argument("--trace", help="Trace file (default: output.trace)")
        else:
            p.add_argument("--csv", help="CSV file (default: output.csv)")
        p.add_argument("--overwrite", action="store_true", help="Replace existing output files")
        p.set_defaults(func=func)

    p = sub.add_parser("eval", help="Evaluate a samples file")
    p.add_argument("config", help="Experiment config (JSON)")
    p.add_argument("--samples", help="Samples file (default: output.samples)")
    p.add_argument("--csv", help="CSV file to append to (default: output.csv, else stdout)")
    p.set_defaults(func=cmd_eval)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    try:
        level = logging.DEBUG if args.verbose else get_log_level()
        logging.basicConfig(level=level, format='%(asctime)s - %(levelname)s - %(message)s')
        if getattr(args, "jobs", 0) is None:
            args.jobs = get_default_jobs()
        if getattr(args, "jobs", 1) < 1:
            raise ConfigurationError(f"--jobs must be >= 1, got {args.jobs}")
        return args.func(args)
    except (ConfigurationError, ValidationError) as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except SamplingFailure as e:
        print(f"sampling failed: {e}", file=sys.stderr)
        return EXIT_SAMPLING
    except ToyDiffusionError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_SAMPLING


if __name__ == "__main__":
    sys.exit(main())
