"""Command-line entry point.

Verbs: ``gen-data``, ``train``, ``synth``, ``eval``, ``ablate``.  Exit
codes are stable for scripting: 0 success, 1 usage or configuration
error, 2 runtime or data error.  Commands never mutate their inputs, and
every run directory receives the effective configuration first.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import __version__
from .ablation import SUITES, run_ablation_suite, suite_rows
from .config import ConfigError, load_config
from .dataset import MANIFEST_NAME, OutputConflictError, generate_dataset, load_manifest
from .evaluation import evaluate_generator
from .losses import FeatureExtractor
from .report import write_ablation_report, write_diff_maps, write_json, write_metric_report, write_run_report
from .train import NonFiniteLossError, load_checkpoint, synthesize, train
from .volume import VolumeError, load_volume, save_volume

__all__ = ["main", "build_parser"]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems via exit code 1."""

    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _add_common(p: argparse.ArgumentParser, out_help: str):
    p.add_argument("--config", type=Path, default=None, help="JSON run configuration")
    p.add_argument("--seed", type=int, default=None, help="override the configured master seed")
    p.add_argument("--out", type=Path, required=True, help=out_help)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="volsynth", description=__doc__)
    parser.add_argument("--version", action="version", version=f"volsynth {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-data", help="generate a seeded phantom dataset")
    _add_common(p, "dataset output directory")
    p.add_argument("--force", action="store_true", help="overwrite outputs that differ")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train on a generated dataset")
    _add_common(p, "run output directory")
    p.add_argument("--data", type=Path, required=True, help="dataset directory or manifest path")
    p.add_argument("--resume", action="store_true", help="continue from the run's checkpoint")
    p.add_argument("--ablation", default=None, help="override the configured ablation preset")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("synth", help="synthesize a target volume from a source volume")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--input", type=Path, required=True, help="source .vol file")
    p.add_argument("--out", type=Path, required=True, help="output .vol path")
    group = p.add_mutually_exclusive_group()
    group.add_argument("--z-seed", type=int, default=None, help="sample the latent from this seed")
    group.add_argument("--z-zero", action="store_true", help="use the zero latent vector")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset split")
    _add_common(p, "report output directory")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--manifest", type=Path, required=True, help="dataset directory or manifest path")
    p.add_argument("--split", choices=("train", "val", "test"), default="test")
    p.add_argument("--diff-maps", action="store_true", help="emit per-sample difference maps")
    p.add_argument(
        "--identity",
        action="store_true",
        help="sanity mode: score the real targets against themselves",
    )
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="train and compare ablation configurations")
    _add_common(p, "report output directory")
    p.add_argument("--data", type=Path, required=True, help="dataset directory or manifest path")
    p.add_argument("--suite", required=True, choices=sorted(SUITES), help="ablation suite to run")
    p.add_argument("--seeds", default=None, help="comma-separated training seeds (default: config seed)")
    p.set_defaults(func=cmd_ablate)

    return parser


def cmd_gen_data(args) -> int:
    cfg = load_config(args.config, args.seed)
    data = cfg.data
    manifest = generate_dataset(
        args.out,
        n_samples=data["n_samples"],
        shape=tuple(data["shape"]),
        structure_count=data["structure_count"],
        seed=cfg.seed,
        folds=data["folds"],
        fold_index=data["fold_index"],
        force=args.force,
    )
    print(f"wrote {len(manifest.samples)} sample pairs to {args.out} ({MANIFEST_NAME})")
    return 0


def cmd_train(args) -> int:
    cfg = load_config(args.config, args.seed)
    if args.ablation is not None:
        import dataclasses

        from .train import ABLATIONS

        if args.ablation not in ABLATIONS:
            raise UsageError(f"unknown ablation {args.ablation!r}, expected one of {ABLATIONS}")
        cfg.setup = dataclasses.replace(
            cfg.setup, train=dataclasses.replace(cfg.setup.train, ablation=args.ablation)
        )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "effective_config.json", cfg.effective())
    manifest = load_manifest(args.data)
    result = train(manifest, cfg.setup, out_dir=out, resume=args.resume)
    write_run_report(result, out)
    final = result.state.history[-1] if result.state.history else None
    if final is not None:
        print(
            f"trained {result.state.step} steps; "
            f"final l1={final.l1:.4f} adv={final.g_adv:.4f} d={final.d_loss:.4f}"
        )
    return 0


def cmd_synth(args) -> int:
    state, setup = load_checkpoint(args.checkpoint)
    source = load_volume(args.input)
    if args.z_seed is not None:
        out_vol = synthesize(state.generator, source, z_mode="sample", z_seed=args.z_seed)
    else:
        out_vol = synthesize(state.generator, source, z_mode="zero")
    save_volume(out_vol, args.out)
    print(str(args.out))
    return 0


def cmd_eval(args) -> int:
    cfg = load_config(args.config, args.seed)
    state, setup = load_checkpoint(args.checkpoint)
    manifest = load_manifest(args.manifest)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "effective_config.json", cfg.effective())
    extractor = FeatureExtractor(cfg.setup.feature_channels, cfg.setup.feature_seed)
    evaluation = evaluate_generator(
        state.generator,
        manifest,
        args.split,
        params=cfg.metric_params,
        extractor=extractor,
        eval_seed=cfg.seed,
        scale_mode=cfg.scale_mode,
        z_mode=cfg.eval_z,
        identity=args.identity,
    )
    write_metric_report(evaluation.report, out)
    if args.diff_maps:
        write_diff_maps(evaluation.reals, evaluation.fakes, evaluation.sample_ids, out / "diff_maps")
    r = evaluation.report
    print(f"mae={r.mae:.4f} psnr={r.psnr:.3f} ms_ssim={r.ms_ssim:.4f} fid={r.fid:.4f}")
    return 0


def cmd_ablate(args) -> int:
    cfg = load_config(args.config, args.seed)
    manifest = load_manifest(args.data)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "effective_config.json", cfg.effective())
    seeds = None
    if args.seeds:
        try:
            seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
        except ValueError as exc:
            raise UsageError(f"--seeds must be comma-separated integers: {exc}") from exc
    extractor = FeatureExtractor(cfg.setup.feature_channels, cfg.setup.feature_seed)
    report = run_ablation_suite(
        manifest,
        cfg.setup,
        suite_rows(args.suite),
        seeds=seeds,
        params=cfg.metric_params,
        extractor=extractor,
        eval_seed=cfg.seed,
        scale_mode=cfg.scale_mode,
        suite=args.suite,
        progress=lambda msg: print(msg, file=sys.stderr),
    )
    write_ablation_report(report, out)
    print((out / "ablation.md").read_text("utf-8"), end="")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NonFiniteLossError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (VolumeError, OutputConflictError, FileNotFoundError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
