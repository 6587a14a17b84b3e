"""Ablation suites: train matched configurations, compare the metric table.

Each suite row is a named transformation of the base setup.  Rows share
the dataset; each (row, seed) pair trains from scratch with that seed and
is scored on the test split.  Cells report mean and standard deviation
across seeds when several seeds run, and across test samples otherwise.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .dataset import DatasetManifest
from .losses import FeatureExtractor
from .metrics import SsimParams
from .train import TrainSetup, train
from .evaluation import evaluate_generator

__all__ = ["SUITES", "AblationRow", "AblationReport", "suite_rows", "run_ablation_suite"]

HEADLINE_METRICS = ("mae", "psnr", "ms_ssim", "fid")


def _with_ablation(name: str) -> Callable[[TrainSetup], TrainSetup]:
    def apply(setup: TrainSetup) -> TrainSetup:
        return dataclasses.replace(setup, train=dataclasses.replace(setup.train, ablation=name))

    return apply


def _with_weights(**kw) -> Callable[[TrainSetup], TrainSetup]:
    def apply(setup: TrainSetup) -> TrainSetup:
        weights = dataclasses.replace(setup.train.loss_weights, **kw)
        return dataclasses.replace(
            setup, train=dataclasses.replace(setup.train, ablation="full", loss_weights=weights)
        )

    return apply


SUITES: dict[str, list[tuple[str, Callable[[TrainSetup], TrainSetup]]]] = {
    "architecture": [
        ("U-Net", _with_ablation("variant_unet")),
        ("ResU-Net", _with_ablation("variant_resunet")),
        ("DenseU-Net", _with_ablation("full")),
    ],
    "adversarial": [
        ("Remove D", _with_ablation("no_discriminator")),
        ("Ours", _with_ablation("full")),
    ],
    "losses": [
        ("Adversarial+KL", _with_weights(lambda1=0.0, lambda2=0.0)),
        ("Adversarial+KL+L1", _with_weights(lambda2=0.0)),
        ("Ours", _with_ablation("full")),
    ],
    "dimensionality": [
        ("2D", _with_ablation("mode_2d")),
        ("3D", _with_ablation("full")),
    ],
}


def suite_rows(suite: str) -> list[tuple[str, Callable[[TrainSetup], TrainSetup]]]:
    if suite not in SUITES:
        raise ValueError(f"unknown suite {suite!r}, expected one of {sorted(SUITES)}")
    return SUITES[suite]


@dataclass
class AblationRow:
    label: str
    per_seed: list[dict]
    cells: dict[str, dict]


@dataclass
class AblationReport:
    suite: str
    seeds: list[int]
    rows: list[AblationRow]


def _aggregate(per_seed: list[dict], reports: list) -> dict[str, dict]:
    cells = {}
    for metric in HEADLINE_METRICS:
        if len(per_seed) > 1:
            values = np.asarray([row[metric] for row in per_seed], dtype=np.float64)
            cells[metric] = {
                "mean": float(values.mean()),
                "std": float(values.std(ddof=1)),
            }
        else:
            cells[metric] = dict(reports[0].summary[metric])
    return cells


def run_ablation_suite(
    manifest: DatasetManifest,
    base_setup: TrainSetup,
    rows: list[tuple[str, Callable[[TrainSetup], TrainSetup]]],
    seeds: list[int] | None = None,
    params: SsimParams | None = None,
    extractor: FeatureExtractor | None = None,
    eval_seed: int = 0,
    scale_mode: str = "normalized",
    suite: str = "custom",
    progress=None,
) -> AblationReport:
    """Train and evaluate every (row, seed) combination on shared data."""
    if not rows:
        raise ValueError("need at least one ablation row")
    seeds = list(seeds) if seeds else [base_setup.train.seed]
    params = params or SsimParams()
    extractor = extractor or FeatureExtractor(base_setup.feature_channels, base_setup.feature_seed)

    out_rows = []
    for label, transform in rows:
        per_seed = []
        reports = []
        for seed in seeds:
            setup = transform(base_setup)
            setup = dataclasses.replace(setup, train=dataclasses.replace(setup.train, seed=seed))
            if progress is not None:
                progress(f"training {label!r} (seed {seed})")
            result = train(manifest, setup, out_dir=None, validate=False)
            evaluation = evaluate_generator(
                result.state.generator,
                manifest,
                "test",
                params=params,
                extractor=extractor,
                eval_seed=eval_seed,
                scale_mode=scale_mode,
            )
            reports.append(evaluation.report)
            per_seed.append(
                {
                    "seed": seed,
                    **{metric: evaluation.report.summary[metric]["mean"] for metric in HEADLINE_METRICS},
                }
            )
        out_rows.append(AblationRow(label=label, per_seed=per_seed, cells=_aggregate(per_seed, reports)))
    return AblationReport(suite=suite, seeds=seeds, rows=out_rows)
