"""Command-line entry point: ``uwrestore <subcommand> ...``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import pipeline
from .config import RunConfig
from .grid import emit_grid
from .imaging import list_images
from .quality import evaluate
from .restoration.network import VARIANTS
from .restoration.train import load_restorer
from .translation.model import DA_ABLATIONS

log = logging.getLogger("uwrestore")

# operation named in the error message when a subcommand fails
STAGES = {
    "synthesize": "formation.synthesize_underwater",
    "train-da": "translation.train_step",
    "gen-dataset": "datasetgen.generate_adapted_dataset",
    "train-restore": "restoration.train_restorer",
    "restore": "restoration.restore",
    "evaluate": "quality.evaluate",
    "grid": "harness.emit_grid",
    "ablate": "harness.ablate",
    "toy-corpus": "harness.toy_corpus",
    "pipeline": "harness.pipeline",
    "config": "harness.config",
}


def _load_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    overrides = list(args.set or [])
    if args.seed is not None:
        overrides.append(f"run.seed={args.seed}")
    if getattr(args, "device", None):
        overrides.append(f"run.device={args.device}")
    return cfg.with_overrides(overrides)


def cmd_synthesize(args, cfg):
    _, synthetic = pipeline.synthesize(cfg, args.rgbd, args.out)
    print(f"wrote {len(synthetic)} synthetic image(s) to {args.out}; {len(synthetic.errors)} entr(ies) skipped")


def cmd_train_da(args, cfg):
    over = []
    if args.batch is not None:
        over.append(f"translation.batch_size={args.batch}")
    if args.ablation:
        over += [f"translation.{k}={v!r}" for k, v in DA_ABLATIONS[args.ablation].items()]
    cfg = cfg.with_overrides(over)
    steps = args.steps if args.steps is not None else cfg.translation.steps
    synth = list_images(args.synthetic)
    real = list_images(args.real)
    _, last = pipeline.train_translation(cfg, synth, real, args.out, steps=steps, resume=args.resume, progress_every=100)
    print(f"trained to step {steps}; checkpoint {Path(args.out) / pipeline.TRANSLATION_CKPT}")
    if last:
        print(f"generator_loss {last['generator_loss']:.6f} discriminator_loss {last['discriminator_loss']:.6f}")


def cmd_gen_dataset(args, cfg):
    over = []
    if args.k is not None:
        over.append(f"datasetgen.styles_per_image={args.k}")
    if args.stratify:
        over.append("datasetgen.stratify=true")
    cfg = cfg.with_overrides(over)
    pairs = pipeline.gen_dataset(cfg, args.checkpoint, args.rgbd, args.real, args.out)
    print(f"wrote {len(pairs)} adapted pair(s) and {Path(args.out) / 'pairs.csv'}")


def cmd_train_restore(args, cfg):
    over = []
    if args.epochs is not None:
        over.append(f"restoration_train.epochs={args.epochs}")
    cfg = cfg.with_overrides(over)
    pipeline.train_restore(cfg, args.pairs, args.out, variant=args.variant)
    print(f"checkpoint {Path(args.out) / pipeline.RESTORER_CKPT}")


def cmd_restore(args, cfg):
    net, _ = load_restorer(args.checkpoint, cfg.run.device)
    written = pipeline.restore_path(net, args.input, args.out)
    print(f"restored {len(written)} image(s)")


def cmd_evaluate(args, cfg):
    report = evaluate(args.outputs, args.truth, cfg.quality, args.method, args.dataset, cfg.hash())
    out = report.write(args.out or args.outputs)
    for w in report.warnings:
        print(f"warning: {w}", file=sys.stderr)
    means = report.means
    print(f"wrote {out}")
    print("__mean__ " + " ".join(f"{k}={v:.4f}" for k, v in means.items()))


def cmd_grid(args, cfg):
    columns = []
    for spec in args.column:
        if "=" not in spec:
            raise ValueError(f"--column expects LABEL=DIR, got {spec!r}")
        label, folder = spec.split("=", 1)
        paths = list_images(folder, recursive=False)
        if args.images:
            wanted = args.images.split(",")
            by_stem = {p.stem: p for p in paths}
            paths = [by_stem.get(s, Path(folder) / f"{s}.png") for s in wanted]
        columns.append((label, paths))
    path, warnings = emit_grid(columns, args.out, args.tile_height)
    for w in warnings:
        print(f"warning: {w}", file=sys.stderr)
    print(f"wrote {path}")


def cmd_ablate(args, cfg):
    if args.variants:
        variants = [v.strip() for v in args.variants.split(",") if v.strip()]
        bad = [v for v in variants if v not in VARIANTS]
        if bad:
            raise ValueError(f"unknown restoration variant(s) {bad}; choose from {list(VARIANTS)}")
        if not args.pairs:
            raise ValueError("--pairs is required for restoration ablations")
        reports = pipeline.ablate_restoration(cfg, args.pairs, args.test, args.truth, args.out, variants)
    else:
        names = [v.strip() for v in args.da_variants.split(",") if v.strip()]
        if not (args.rgbd and args.real):
            raise ValueError("--rgbd and --real are required for translation ablations")
        reports = pipeline.ablate_translation(cfg, args.rgbd, args.real, args.test, args.truth, args.out, names)
    for label, rep in reports.items():
        print(f"{label}: " + " ".join(f"{k}={v:.4f}" for k, v in rep.means.items()))
    print(f"wrote {Path(args.out) / 'ablation_report.csv'}")


def cmd_toy_corpus(args, cfg):
    from .toy import write_toy_corpus

    paths = write_toy_corpus(args.out, args.rgbd_count, args.real_count, args.size, cfg.run.seed)
    pipeline.toy_config(cfg.run.seed).save(Path(args.out) / "toy.ini")
    print(f"rgbd: {paths['rgbd']}\nreal: {paths['real']}\nconfig: {Path(args.out) / 'toy.ini'}")


def cmd_pipeline(args, cfg):
    result = pipeline.run_pipeline(cfg, args.rgbd, args.real, args.out, args.test, args.truth)
    if "report" in result:
        print(result["report"].format_table())
    print(f"outputs in {args.out}")


def cmd_config(args, cfg):
    text = cfg.to_text()
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run config file (INI)")
    common.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE", help="override one config key")
    common.add_argument("--seed", type=int)
    common.add_argument("--device", help="torch device, e.g. cpu or cuda")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="uwrestore", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synthesize", parents=[common], help="render synthetic underwater images from RGB-D")
    s.add_argument("--rgbd", required=True, help="directory with rgb/ and depth/")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synthesize)

    s = sub.add_parser("train-da", parents=[common], help="train the synthetic->real translation model")
    s.add_argument("--synthetic", required=True, help="directory of synthetic underwater images")
    s.add_argument("--real", required=True, help="directory of real underwater images")
    s.add_argument("--out", required=True)
    s.add_argument("--steps", type=int)
    s.add_argument("--batch", type=int)
    s.add_argument("--ablation", choices=list(DA_ABLATIONS))
    s.add_argument("--resume", action="store_true")
    s.set_defaults(func=cmd_train_da)

    s = sub.add_parser("gen-dataset", parents=[common], help="build the domain-adapted paired dataset")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--rgbd", required=True)
    s.add_argument("--real", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--k", type=int, help="styles per synthetic image")
    s.add_argument("--stratify", action="store_true")
    s.set_defaults(func=cmd_gen_dataset)

    s = sub.add_parser("train-restore", parents=[common], help="train the restoration network")
    s.add_argument("--pairs", required=True, help="pairs.csv from gen-dataset")
    s.add_argument("--out", required=True)
    s.add_argument("--epochs", type=int)
    s.add_argument("--variant", choices=VARIANTS)
    s.set_defaults(func=cmd_train_restore)

    s = sub.add_parser("restore", parents=[common], help="restore an image or a directory")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--input", required=True)
    s.add_argument("--out", help="output directory (default: next to the inputs)")
    s.set_defaults(func=cmd_restore)

    s = sub.add_parser("evaluate", parents=[common], help="PSNR/SSIM/UCIQE/UIQM report")
    s.add_argument("--outputs", required=True)
    s.add_argument("--truth")
    s.add_argument("--out", help="report directory (default: --outputs)")
    s.add_argument("--method", default="")
    s.add_argument("--dataset", default="")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("grid", parents=[common], help="comparison grid, one column per method")
    s.add_argument("--column", action="append", required=True, metavar="LABEL=DIR")
    s.add_argument("--images", help="comma-separated stems to include, in order")
    s.add_argument("--tile-height", type=int, default=128)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_grid)

    s = sub.add_parser("ablate", parents=[common], help="variant sweeps with a merged report")
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--variants", help=f"restoration variants, from {','.join(VARIANTS)}")
    g.add_argument("--da-variants", help=f"translation ablations, from {','.join(DA_ABLATIONS)}")
    s.add_argument("--pairs")
    s.add_argument("--rgbd")
    s.add_argument("--real")
    s.add_argument("--test", required=True)
    s.add_argument("--truth")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_ablate)

    s = sub.add_parser("toy-corpus", parents=[common], help="write a procedural toy corpus and toy.ini")
    s.add_argument("--out", required=True)
    s.add_argument("--rgbd-count", type=int, default=10)
    s.add_argument("--real-count", type=int, default=10)
    s.add_argument("--size", type=int, default=64)
    s.set_defaults(func=cmd_toy_corpus)

    s = sub.add_parser("pipeline", parents=[common], help="run every stage end to end")
    s.add_argument("--rgbd", required=True)
    s.add_argument("--real", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--test")
    s.add_argument("--truth")
    s.set_defaults(func=cmd_pipeline)

    s = sub.add_parser("config", parents=[common], help="print the effective config")
    s.add_argument("--out")
    s.set_defaults(func=cmd_config)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    where = STAGES[args.command]
    try:
        cfg = _load_config(args)
        args.func(args, cfg)
    except pipeline.StageError as exc:
        print(f"error [{exc.where}]: {exc.message}", file=sys.stderr)
        return 1
    except Exception as exc:
        print(f"error [{where}]: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
