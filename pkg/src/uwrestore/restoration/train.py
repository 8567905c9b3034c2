"""Composite restoration loss, learning-rate schedule and the training loop."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np
import torch

from .. import losses
from ..checkpoint import load_archive, save_archive
from .network import RestoreNet, RestoreNetConfig, restore

log = logging.getLogger(__name__)

CHECKPOINT_TAG = b"RSN1"
LOG_COLUMNS = ("epoch", "step", "lr", "loss", "charbonnier", "perceptual", "edge")


@dataclass
class RestoreTrainConfig:
    epochs: int = 75
    batch_size: int = 4
    crop_size: int = 256
    lr: float = 3e-4
    lr_halve_every: int = 10
    flip_prob: float = 0.5
    lambda_perceptual: float = 0.5
    lambda_edge: float = 0.5
    max_steps: int = 0  # 0 = no limit
    checkpoint_every_epoch: bool = True

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.crop_size < 1:
            raise ValueError("epochs, batch_size and crop_size must be >= 1")
        if self.lr_halve_every < 1:
            raise ValueError("lr_halve_every must be >= 1")
        if self.lambda_perceptual < 0 or self.lambda_edge < 0:
            raise ValueError("loss weights must be >= 0")
        if not 0.0 <= self.flip_prob <= 1.0:
            raise ValueError("flip_prob must lie in [0, 1]")


def lr_for_epoch(epoch: int, base: float = 3e-4, halve_every: int = 10) -> float:
    return base * 0.5 ** (epoch // halve_every)


def restoration_loss(
    restored: torch.Tensor,
    truth: torch.Tensor,
    lambda_perceptual: float = 0.5,
    lambda_edge: float = 0.5,
    extractor=None,
    loss_cfg: losses.LossConfig = losses.DEFAULT_LOSS,
):
    """Charbonnier + lambda_perceptual * perceptual + lambda_edge * edge; returns (loss, breakdown)."""
    char = losses.charbonnier(restored, truth, loss_cfg)
    total = char
    parts = {"charbonnier": char}
    if lambda_perceptual > 0:
        perc = losses.perceptual_loss(restored, truth, extractor)
        total = total + lambda_perceptual * perc
        parts["perceptual"] = perc
    else:
        parts["perceptual"] = torch.zeros((), dtype=char.dtype)
    if lambda_edge > 0:
        edge = losses.edge_loss(restored, truth, loss_cfg)
        total = total + lambda_edge * edge
        parts["edge"] = edge
    else:
        parts["edge"] = torch.zeros((), dtype=char.dtype)
    return total, {k: float(v.detach()) for k, v in parts.items()}


class NonFiniteLoss(FloatingPointError):
    pass


def _fit(img: np.ndarray, size: int) -> np.ndarray:
    h, w = img.shape[:2]
    ph, pw = max(0, size - h), max(0, size - w)
    if ph or pw:
        mode = "reflect" if ph < h and pw < w else "edge"
        img = np.pad(img, ((0, ph), (0, pw), (0, 0)), mode=mode)
    return img


def sample_patch(inp, truth, size, rng: np.random.Generator, flip_prob=0.5):
    """Aligned random crop of both images with independent horizontal and vertical flips."""
    inp, truth = _fit(inp, size), _fit(truth, size)
    h, w = inp.shape[:2]
    y = int(rng.integers(0, h - size + 1))
    x = int(rng.integers(0, w - size + 1))
    a = inp[y : y + size, x : x + size]
    b = truth[y : y + size, x : x + size]
    if rng.random() < flip_prob:
        a, b = a[:, ::-1], b[:, ::-1]
    if rng.random() < flip_prob:
        a, b = a[::-1], b[::-1]
    return a, b


def _batch(pairs, idx, size, rng, flip_prob):
    xs, ys = [], []
    for i in idx:
        a, b = sample_patch(pairs[i][0], pairs[i][1], size, rng, flip_prob)
        xs.append(a.transpose(2, 0, 1))
        ys.append(b.transpose(2, 0, 1))
    return torch.from_numpy(np.ascontiguousarray(xs, dtype=np.float32)), torch.from_numpy(
        np.ascontiguousarray(ys, dtype=np.float32)
    )


@dataclass
class TrainResult:
    net: RestoreNet
    history: list
    lr_by_epoch: dict
    steps: int


def train_restorer(
    net: RestoreNet,
    pairs,
    cfg: RestoreTrainConfig | None = None,
    seed: int = 0,
    extractor=None,
    loss_cfg: losses.LossConfig = losses.DEFAULT_LOSS,
    out_dir=None,
    run_config: str = "",
) -> TrainResult:
    """Train on a sequence of (input, truth) float HWC arrays.

    With ``out_dir`` set, a per-step CSV log and an RSN1 checkpoint per epoch are written there.
    """
    cfg = cfg or RestoreTrainConfig()
    pairs = list(pairs)
    if not pairs:
        raise ValueError("restoration dataset is empty")
    for k, (a, b) in enumerate(pairs):
        if a.shape != b.shape:
            raise ValueError(f"pair {k}: input {a.shape} and truth {b.shape} differ")
    lam_p = cfg.lambda_perceptual
    if lam_p > 0 and extractor is None:
        extractor = losses.load_vgg_features(loss_cfg, seed=seed)
        if extractor is None:
            lam_p = 0.0
    torch.manual_seed(seed)
    rng = np.random.default_rng(seed)
    device = next(net.parameters()).device
    opt = torch.optim.Adam(net.parameters(), lr=cfg.lr)
    out = Path(out_dir) if out_dir is not None else None
    writer = None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        fh = open(out / "restore_log.csv", "w", newline="")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(LOG_COLUMNS)
    history, lr_by_epoch, step = [], {}, 0
    net.train()
    try:
        for epoch in range(cfg.epochs):
            lr = lr_for_epoch(epoch, cfg.lr, cfg.lr_halve_every)
            lr_by_epoch[epoch] = lr
            for group in opt.param_groups:
                group["lr"] = lr
            order = rng.permutation(len(pairs))
            for start in range(0, len(order), cfg.batch_size):
                x, y = _batch(pairs, order[start : start + cfg.batch_size], cfg.crop_size, rng, cfg.flip_prob)
                x, y = x.to(device), y.to(device)
                _, restored = restore(net, x)
                loss, parts = restoration_loss(restored, y, lam_p, cfg.lambda_edge, extractor, loss_cfg)
                if not math.isfinite(float(loss.detach())):
                    raise NonFiniteLoss(f"non-finite restoration loss at step {step} (epoch {epoch})")
                opt.zero_grad(set_to_none=True)
                loss.backward()
                opt.step()
                row = {"epoch": epoch, "step": step, "lr": lr, "loss": float(loss.detach()), **parts}
                history.append(row)
                if writer is not None:
                    writer.writerow([row["epoch"], row["step"]] + [repr(float(row[c])) for c in LOG_COLUMNS[2:]])
                step += 1
                if cfg.max_steps and step >= cfg.max_steps:
                    break
            if out is not None and cfg.checkpoint_every_epoch:
                save_restorer(out / "restorer.rsn", net, opt, epoch + 1, run_config)
            if cfg.max_steps and step >= cfg.max_steps:
                break
    finally:
        if writer is not None:
            fh.close()
    net.eval()
    if out is not None:
        save_restorer(out / "restorer.rsn", net, opt, len(lr_by_epoch), run_config)
    return TrainResult(net, history, lr_by_epoch, step)


def save_restorer(path, net: RestoreNet, opt=None, epoch: int = 0, run_config: str = "") -> None:
    save_archive(
        path,
        CHECKPOINT_TAG,
        {
            "net_config": asdict(net.cfg),
            "run_config": run_config,
            "epoch": int(epoch),
            "weights": net.state_dict(),
            "optimizer": opt.state_dict() if opt is not None else None,
        },
    )


def load_restorer(path, device="cpu"):
    """Return (net, payload) from an RSN1 archive."""
    payload = load_archive(path, CHECKPOINT_TAG)
    known = {f.name for f in fields(RestoreNetConfig)}
    net = RestoreNet(RestoreNetConfig(**{k: v for k, v in payload["net_config"].items() if k in known}))
    net.load_state_dict(payload["weights"])
    net.to(device).eval()
    return net, payload
