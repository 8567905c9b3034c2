"""Stage drivers shared by the CLI: training loops over files, inference, ablations and the full pipeline."""

from __future__ import annotations

import csv
import logging
from dataclasses import replace
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from . import losses
from .config import RunConfig, seed_everything
from .datasetgen import (
    build_manifest,
    generate_adapted_dataset,
    generate_synthetic_set,
    load_pairs,
    write_synthetic_set,
)
from .formation import builtin_water_types
from .imaging import list_images, read_rgb, write_rgb
from .quality import MEAN_ID, MetricReport, evaluate
from .restoration.network import VARIANT_LABELS, RestoreNet, restore_array
from .restoration.train import load_restorer, train_restorer
from .translation.model import (
    DA_ABLATIONS,
    TrainingLog,
    TranslationBundle,
    TranslationTrainer,
    load_bundle,
    save_bundle,
    train_step,
)

log = logging.getLogger(__name__)

TRANSLATION_CKPT = "translation.trb"
RESTORER_CKPT = "restorer.rsn"


class StageError(RuntimeError):
    """A pipeline stage failed; ``where`` names the module and operation."""

    def __init__(self, where: str, message: str):
        super().__init__(f"{where}: {message}")
        self.where = where
        self.message = message


def toy_config(seed: int = 0) -> RunConfig:
    """Desk-scale settings for the procedural toy corpus."""
    return RunConfig().with_overrides(
        [
            f"run.seed={seed}",
            "losses.perceptual_on_missing=random",
            "translation.image_size=32",
            "translation.dim=16",
            "translation.mlp_dim=64",
            "translation.dis_dim=16",
            "translation.dis_n_layer=3",
            "translation.lr=0.0004",
            "translation.steps=200",
            "translation.checkpoint_every=100",
            "datasetgen.min_translation_steps=0",
            "restoration.depth=3",
            "restoration.base_width=16",
            "restoration.cab_per_scale=1",
            "restoration.attention_reduction=4",
            "restoration_train.epochs=2",
            "restoration_train.crop_size=32",
        ]
    )


# --------------------------------------------------------------------------
# Translation training on image folders
# --------------------------------------------------------------------------


class ImagePool:
    """Images resized so the short side equals ``size``, kept as uint8 in memory."""

    def __init__(self, paths, size: int):
        self.size = size
        self.paths = [Path(p) for p in paths]
        if not self.paths:
            raise ValueError("image pool is empty")
        self.images = [self._load(p) for p in self.paths]

    def _load(self, path):
        with Image.open(path) as im:
            im = im.convert("RGB")
            scale = self.size / min(im.size)
            if scale != 1.0:
                im = im.resize((max(self.size, round(im.width * scale)), max(self.size, round(im.height * scale))), Image.BICUBIC)
            return np.asarray(im, dtype=np.uint8)

    def __len__(self):
        return len(self.images)

    def batch(self, rng: np.random.Generator, n: int) -> torch.Tensor:
        idx = rng.choice(len(self.images), size=n, replace=len(self.images) < n)
        out = []
        for i in idx:
            img = self.images[i]
            h, w = img.shape[:2]
            y = int(rng.integers(0, h - self.size + 1))
            x = int(rng.integers(0, w - self.size + 1))
            crop = img[y : y + self.size, x : x + self.size]
            if rng.random() < 0.5:
                crop = crop[:, ::-1]
            out.append(crop.transpose(2, 0, 1))
        return torch.from_numpy(np.ascontiguousarray(out, dtype=np.float32) / 255.0)


def train_translation(
    cfg: RunConfig,
    synthetic_paths,
    real_paths,
    out_dir,
    steps: int | None = None,
    resume: bool = False,
    progress_every: int = 0,
) -> tuple[TranslationBundle, dict]:
    """Train the adaptation model; writes translation_log.csv and translation.trb under ``out_dir``.

    Batches for step ``n`` are drawn from a generator seeded by ``(seed, n)``,
    so resumed runs see the same batches as uninterrupted ones.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    seed = cfg.run.seed
    seed_everything(seed, cfg.run.deterministic)
    tcfg = cfg.translation
    steps = tcfg.steps if steps is None else steps
    ckpt = out / TRANSLATION_CKPT
    if resume and ckpt.exists():
        bundle, trainer, _ = load_bundle(ckpt, cfg.losses, cfg.run.device)
    else:
        bundle = TranslationBundle(tcfg).to(cfg.run.device)
        trainer = TranslationTrainer(bundle, cfg.losses, seed)
    pool_S = ImagePool(synthetic_paths, tcfg.image_size)
    pool_R = ImagePool(real_paths, tcfg.image_size)
    tlog = TrainingLog(out / "translation_log.csv", append=resume)
    last: dict = {}
    snapshot = cfg.to_text()
    while bundle.step < steps:
        rng = np.random.default_rng([seed, bundle.step])
        x_S = pool_S.batch(rng, tcfg.batch_size).to(cfg.run.device)
        x_R = pool_R.batch(rng, tcfg.batch_size).to(cfg.run.device)
        step = bundle.step
        last = train_step(trainer, x_S, x_R)
        tlog.append(step, last)
        if progress_every and step % progress_every == 0:
            log.info("translation step %d: G %.4f D %.4f", step, last["generator_loss"], last["discriminator_loss"])
        if tcfg.checkpoint_every and bundle.step % tcfg.checkpoint_every == 0:
            save_bundle(ckpt, bundle, trainer, snapshot)
    save_bundle(ckpt, bundle, trainer, snapshot)
    return bundle, last


# --------------------------------------------------------------------------
# Stage wrappers
# --------------------------------------------------------------------------


def synthesize(cfg: RunConfig, rgbd_root, out_dir):
    manifest = build_manifest(rgbd_root, seed=cfg.run.seed)
    types = builtin_water_types(cfg.formation.water_config or None, cfg.formation.labels())
    synthetic = generate_synthetic_set(
        manifest, types, cfg.run.seed, cfg.formation.assignment, cfg.formation.ambient_jitter
    )
    if not synthetic.items:
        raise ValueError("no RGB-D entries with depth maps found")
    Path(out_dir).mkdir(parents=True, exist_ok=True)
    manifest.write(Path(out_dir) / "manifest.tsv")
    write_synthetic_set(synthetic, out_dir)
    return manifest, synthetic


def gen_dataset(cfg: RunConfig, checkpoint, rgbd_root, real_root, out_dir):
    bundle, _, _ = load_bundle(checkpoint, cfg.losses, cfg.run.device)
    manifest = build_manifest(rgbd_root, seed=cfg.run.seed)
    types = builtin_water_types(cfg.formation.water_config or None, cfg.formation.labels())
    synthetic = generate_synthetic_set(
        manifest, types, cfg.run.seed, cfg.formation.assignment, cfg.formation.ambient_jitter
    )
    real = build_manifest(real_root, seed=cfg.run.seed)
    dg = cfg.datasetgen
    pairs = generate_adapted_dataset(
        bundle,
        synthetic,
        real,
        k=dg.styles_per_image,
        seed=cfg.run.seed,
        stratify=dg.stratify,
        min_steps=dg.min_translation_steps,
        out_dir=out_dir,
    )
    return pairs


def train_restore(cfg: RunConfig, pairs_csv, out_dir, variant: str | None = None) -> RestoreNet:
    seed_everything(cfg.run.seed, cfg.run.deterministic)
    net_cfg = cfg.restoration if variant is None else replace(cfg.restoration, variant=variant)
    net = RestoreNet(net_cfg).to(cfg.run.device)
    extractor = None
    if cfg.restoration_train.lambda_perceptual > 0:
        extractor = losses.load_vgg_features(cfg.losses, seed=cfg.run.seed)
        if extractor is not None:
            extractor = extractor.to(cfg.run.device)
    train_cfg = cfg.restoration_train
    if extractor is None and train_cfg.lambda_perceptual > 0:
        train_cfg = replace(train_cfg, lambda_perceptual=0.0)
    train_restorer(
        net, load_pairs(pairs_csv), train_cfg, cfg.run.seed, extractor, cfg.losses, out_dir, cfg.to_text()
    )
    return net


def restore_path(net: RestoreNet, source, out_dir=None) -> list[Path]:
    """Restore one image or every image in a directory.

    Without ``out_dir`` outputs are written next to the inputs as ``<stem>_restored.png``;
    with it they keep the input stem so they can be scored against ground truth.
    """
    source = Path(source)
    inputs = [source] if source.is_file() else list_images(source, recursive=False)
    if not inputs:
        raise ValueError(f"no images found at {source}")
    written = []
    for p in inputs:
        dest = Path(out_dir) / f"{p.stem}.png" if out_dir is not None else p.with_name(f"{p.stem}_restored.png")
        write_rgb(dest, restore_array(net, read_rgb(p)))
        written.append(dest)
    return written


def merge_reports(reports: dict, out_path) -> Path:
    """One CSV holding every method's rows, a ``method`` column first, each with its mean row."""
    has_truth = all(r.has_truth for r in reports.values())
    cols = MetricReport([], has_truth).columns
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method"] + cols)
        for label, rep in reports.items():
            for row in rep.rows:
                w.writerow([label, row["image_id"]] + [repr(float(row[c])) for c in cols[1:]])
            means = rep.means
            w.writerow([label, MEAN_ID] + [repr(float(means[c])) for c in cols[1:]])
    return out_path


def ablate_restoration(cfg: RunConfig, pairs_csv, test_dir, truth_dir, out_dir, variants) -> dict:
    """Train one restorer per variant and score each on the test images."""
    out = Path(out_dir)
    reports = {}
    for v in variants:
        label = VARIANT_LABELS[v]
        vdir = out / v
        net = train_restore(cfg, pairs_csv, vdir, variant=v)
        restore_path(net, test_dir, vdir / "restored")
        reports[label] = evaluate(
            vdir / "restored", truth_dir, cfg.quality, method=label, run_config_hash=cfg.hash()
        )
        reports[label].write(vdir)
    merge_reports(reports, out / "ablation_report.csv")
    return reports


def ablate_translation(cfg: RunConfig, rgbd_root, real_root, test_dir, truth_dir, out_dir, names) -> dict:
    """Full pipeline per translation-objective ablation, scored by the resulting restorer."""
    out = Path(out_dir)
    reports = {}
    for name in names:
        if name not in DA_ABLATIONS:
            raise ValueError(f"unknown translation ablation {name!r}; choose from {list(DA_ABLATIONS)}")
        sub = cfg.with_overrides([f"translation.{k}={v!r}" for k, v in DA_ABLATIONS[name].items()])
        vdir = out / name.replace("+", "_plus_")
        run_pipeline(sub, rgbd_root, real_root, vdir, test_dir=None)
        net, _ = load_restorer(vdir / "restore" / RESTORER_CKPT, cfg.run.device)
        restore_path(net, test_dir, vdir / "restored")
        reports[name] = evaluate(vdir / "restored", truth_dir, cfg.quality, method=name, run_config_hash=sub.hash())
        reports[name].write(vdir)
    merge_reports(reports, out / "ablation_report.csv")
    return reports


def run_pipeline(cfg: RunConfig, rgbd_root, real_root, out_dir, test_dir=None, truth_dir=None) -> dict:
    """synthesize -> train-da -> gen-dataset -> train-restore [-> restore -> evaluate]."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg.save(out / "run.ini")
    try:
        _, synthetic = synthesize(cfg, rgbd_root, out / "synthetic")
    except Exception as exc:
        raise StageError("formation.synthesize_underwater", str(exc)) from exc
    try:
        real_paths = list_images(real_root)
        synth_paths = list_images(out / "synthetic" / "underwater")
        _, last = train_translation(cfg, synth_paths, real_paths, out / "translation")
    except Exception as exc:
        raise StageError("translation.train_step", str(exc)) from exc
    try:
        gen_dataset(cfg, out / "translation" / TRANSLATION_CKPT, rgbd_root, real_root, out / "dataset")
    except Exception as exc:
        raise StageError("datasetgen.generate_adapted_dataset", str(exc)) from exc
    try:
        net = train_restore(cfg, out / "dataset" / "pairs.csv", out / "restore")
    except Exception as exc:
        raise StageError("restoration.train_restorer", str(exc)) from exc
    result = {"translation": last, "restorer": net}
    if test_dir is not None:
        try:
            restore_path(net, test_dir, out / "restored")
            report = evaluate(out / "restored", truth_dir, cfg.quality, method="Ours", run_config_hash=cfg.hash())
            report.write(out)
        except Exception as exc:
            raise StageError("quality.evaluate", str(exc)) from exc
        result["report"] = report
    return result
