"""Multimodal synthetic <-> real underwater translation model and its training objective.

Domain ``S`` is synthetic underwater, domain ``R`` is real underwater.  Each
domain has a content encoder, a style encoder and an AdaIN decoder; each has
a multi-scale discriminator.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import torch
import torch.nn as nn

from .. import losses
from ..checkpoint import load_archive, save_archive
from .networks import MLP, ContentEncoder, Decoder, MsImageDis, StyleEncoder, init_weights

DOMAINS = ("S", "R")
TERM_FAMILIES = ("content", "style", "img", "adv", "edge", "ssim")
TERM_NAMES = tuple(f"{fam}_{d}" for fam in TERM_FAMILIES for d in DOMAINS)
CHECKPOINT_TAG = b"TRB1"


@dataclass
class TranslationConfig:
    image_size: int = 128
    dim: int = 64
    style_dim: int = 8
    n_downsample: int = 2
    n_res: int = 4
    style_n_down: int = 4
    mlp_dim: int = 256
    dis_dim: int = 64
    dis_n_layer: int = 4
    dis_scales: int = 3
    gan_type: str = "vanilla"  # vanilla | lsgan
    lambda_content: float = 1.0
    lambda_style: float = 1.0
    lambda_img: float = 1.0
    lambda_adv: float = 5.0
    lambda_ssim: float = 3.0
    lambda_edge: float = 50.0
    style_sampling: str = "encoded"  # encoded | prior
    lr: float = 1e-4
    beta1: float = 0.5
    beta2: float = 0.999
    weight_decay: float = 0.0
    batch_size: int = 4
    steps: int = 100000
    checkpoint_every: int = 10000

    def __post_init__(self):
        for name in ("lambda_content", "lambda_style", "lambda_img", "lambda_adv", "lambda_ssim", "lambda_edge"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.gan_type not in ("vanilla", "lsgan"):
            raise ValueError(f"unknown gan_type {self.gan_type!r}")
        if self.style_sampling not in ("encoded", "prior"):
            raise ValueError(f"unknown style_sampling {self.style_sampling!r}")

    @property
    def downsample_factor(self) -> int:
        return 2**self.n_downsample

    def weight(self, family: str) -> float:
        return getattr(self, f"lambda_{family}")


# loss-ablation presets matching the supplementary study
DA_ABLATIONS = {
    "Baseline": {"lambda_edge": 0.0, "lambda_ssim": 0.0},
    "Baseline+Edge": {"lambda_ssim": 0.0},
    "Ours": {},
}


@dataclass
class LatentPair:
    content: torch.Tensor
    style: torch.Tensor


class DomainAutoencoder(nn.Module):
    def __init__(self, cfg: TranslationConfig, in_dim=3):
        super().__init__()
        self.enc_content = ContentEncoder(cfg.n_downsample, cfg.n_res, in_dim, cfg.dim)
        self.enc_style = StyleEncoder(cfg.style_n_down, in_dim, cfg.dim, cfg.style_dim)
        self.dec = Decoder(cfg.n_downsample, cfg.n_res, self.enc_content.output_dim, in_dim)
        self.mlp = MLP(cfg.style_dim, self.dec.num_adain_params, cfg.mlp_dim, 3)

    def encode(self, x):
        return self.enc_content(x), self.enc_style(x)

    def decode(self, content, style):
        return self.dec(content, self.mlp(style))


class TranslationBundle(nn.Module):
    """Both domain autoencoders and both discriminators."""

    def __init__(self, cfg: TranslationConfig | None = None):
        super().__init__()
        self.cfg = cfg or TranslationConfig()
        self.gen = nn.ModuleDict({d: DomainAutoencoder(self.cfg) for d in DOMAINS})
        self.dis = nn.ModuleDict(
            {d: MsImageDis(3, self.cfg.dis_dim, self.cfg.dis_n_layer, self.cfg.dis_scales) for d in DOMAINS}
        )
        init_weights(self.gen, "kaiming")
        init_weights(self.dis, "gaussian")
        self.step = 0

    @property
    def content_dim(self) -> int:
        return self.gen["S"].enc_content.output_dim

    def generator_parameters(self):
        return list(self.gen.parameters())

    def discriminator_parameters(self):
        return list(self.dis.parameters())

    def swapped(self) -> "TranslationBundle":
        """A bundle sharing these modules with the roles of S and R exchanged."""
        other = TranslationBundle.__new__(TranslationBundle)
        nn.Module.__init__(other)
        other.cfg = self.cfg
        other.gen = nn.ModuleDict({"S": self.gen["R"], "R": self.gen["S"]})
        other.dis = nn.ModuleDict({"S": self.dis["R"], "R": self.dis["S"]})
        other.step = self.step
        return other


def _check_domain(domain):
    if domain not in DOMAINS:
        raise ValueError(f"domain must be one of {DOMAINS}, got {domain!r}")


def _batched(image: torch.Tensor) -> torch.Tensor:
    if image.dim() == 3:
        image = image.unsqueeze(0)
    if image.dim() != 4 or image.shape[1] != 3:
        raise ValueError(f"expected an RGB image tensor (N, 3, H, W), got {tuple(image.shape)}")
    return image


def encode(bundle: TranslationBundle, image: torch.Tensor, domain: str) -> LatentPair:
    _check_domain(domain)
    x = _batched(image)
    f = bundle.cfg.downsample_factor
    if x.shape[-2] % f or x.shape[-1] % f:
        raise ValueError(f"spatial dims {tuple(x.shape[-2:])} are not divisible by the downsample factor {f}")
    c, s = bundle.gen[domain].encode(x)
    return LatentPair(c, s)


def decode(bundle: TranslationBundle, latent: LatentPair, domain: str) -> torch.Tensor:
    _check_domain(domain)
    c, s = latent.content, latent.style
    if c.dim() != 4 or c.shape[1] != bundle.content_dim:
        raise ValueError(f"content code must be (N, {bundle.content_dim}, h, w), got {tuple(c.shape)}")
    if s.dim() != 2 or s.shape[1] != bundle.cfg.style_dim:
        raise ValueError(f"style code must be (N, {bundle.cfg.style_dim}), got {tuple(s.shape)}")
    if s.shape[0] != c.shape[0]:
        raise ValueError("content and style batch sizes differ")
    return bundle.gen[domain].decode(c, s)


def translate(bundle: TranslationBundle, image: torch.Tensor, from_domain: str, style_source: torch.Tensor) -> torch.Tensor:
    """Re-render ``image`` in the other domain using the style of ``style_source``."""
    _check_domain(from_domain)
    target = "R" if from_domain == "S" else "S"
    content = encode(bundle, image, from_domain).content
    style = encode(bundle, style_source, target).style
    if style.shape[0] != content.shape[0]:
        if style.shape[0] != 1:
            raise ValueError("style_source batch must be 1 or match the image batch")
        style = style.expand(content.shape[0], -1)
    return decode(bundle, LatentPair(content, style), target)


# --------------------------------------------------------------------------
# Objective
# --------------------------------------------------------------------------


class LossTermError(ValueError):
    pass


class NonFiniteLoss(FloatingPointError):
    pass


def _term(name, fn, *args):
    try:
        return fn(*args)
    except ValueError as exc:
        raise LossTermError(f"{name}: {exc}") from exc


def generator_pass(bundle: TranslationBundle, x_S: torch.Tensor, x_R: torch.Tensor, generator=None) -> dict:
    """Encode, reconstruct and cross-translate both batches."""
    if x_S.shape != x_R.shape:
        raise ValueError(f"batches must share a shape, got {tuple(x_S.shape)} and {tuple(x_R.shape)}")
    if x_S.shape[0] == 0:
        raise ValueError("empty batch")
    cfg = bundle.cfg
    lat_S = encode(bundle, x_S, "S")
    lat_R = encode(bundle, x_R, "R")
    if cfg.style_sampling == "prior":
        s_S = torch.randn(lat_S.style.shape, generator=generator, dtype=x_S.dtype).to(x_S.device)
        s_R = torch.randn(lat_R.style.shape, generator=generator, dtype=x_S.dtype).to(x_S.device)
    else:
        s_S, s_R = lat_S.style, lat_R.style
    fw = {
        "x_S": x_S,
        "x_R": x_R,
        "c_S": lat_S.content,
        "c_R": lat_R.content,
        "s_S": s_S,
        "s_R": s_R,
        "rec_S": decode(bundle, lat_S, "S"),
        "rec_R": decode(bundle, lat_R, "R"),
        "x_SR": decode(bundle, LatentPair(lat_S.content, s_R), "R"),
        "x_RS": decode(bundle, LatentPair(lat_R.content, s_S), "S"),
    }
    rt_SR = encode(bundle, fw["x_SR"], "R")
    rt_RS = encode(bundle, fw["x_RS"], "S")
    fw["c_S_rt"], fw["s_R_rt"] = rt_SR.content, rt_SR.style
    fw["c_R_rt"], fw["s_S_rt"] = rt_RS.content, rt_RS.style
    return fw


def _adv_g(dis, fake, gan_type):
    return sum(losses.gen_adv_loss(out, gan_type) for out in dis(fake))


def _adv_d(dis, real, fake, gan_type):
    return sum(losses.disc_loss(r, f, gan_type) for r, f in zip(dis(real), dis(fake)))


def generator_terms(bundle: TranslationBundle, fw: dict, loss_cfg: losses.LossConfig = losses.DEFAULT_LOSS) -> dict:
    """Raw (unweighted) generator-side terms, keyed by ``TERM_NAMES``.

    The ``_R`` terms belong to the S->R direction and the ``_S`` terms to R->S.
    """
    gt = bundle.cfg.gan_type
    t = {}
    t["content_R"] = _term("content_R", losses.latent_recon_loss, fw["c_S_rt"], fw["c_S"])
    t["content_S"] = _term("content_S", losses.latent_recon_loss, fw["c_R_rt"], fw["c_R"])
    t["style_R"] = _term("style_R", losses.latent_recon_loss, fw["s_R_rt"], fw["s_R"])
    t["style_S"] = _term("style_S", losses.latent_recon_loss, fw["s_S_rt"], fw["s_S"])
    t["img_S"] = _term("img_S", losses.identity_image_loss, fw["rec_S"], fw["x_S"])
    t["img_R"] = _term("img_R", losses.identity_image_loss, fw["rec_R"], fw["x_R"])
    t["adv_R"] = _term("adv_R", _adv_g, bundle.dis["R"], fw["x_SR"], gt)
    t["adv_S"] = _term("adv_S", _adv_g, bundle.dis["S"], fw["x_RS"], gt)
    t["edge_R"] = _term("edge_R", losses.edge_loss, fw["x_SR"], fw["x_S"], loss_cfg)
    t["edge_S"] = _term("edge_S", losses.edge_loss, fw["x_RS"], fw["x_R"], loss_cfg)
    t["ssim_R"] = _term("ssim_R", losses.ssim_loss, fw["x_SR"], fw["x_S"])
    t["ssim_S"] = _term("ssim_S", losses.ssim_loss, fw["x_RS"], fw["x_R"])
    return {k: t[k] for k in TERM_NAMES}


def weighted_generator_loss(cfg: TranslationConfig, terms: dict) -> torch.Tensor:
    total = 0.0
    for name, value in terms.items():
        family = name.rsplit("_", 1)[0]
        total = total + cfg.weight(family) * value
    return total


def discriminator_loss(bundle: TranslationBundle, fw: dict) -> torch.Tensor:
    gt = bundle.cfg.gan_type
    d_R = _term("dis_R", _adv_d, bundle.dis["R"], fw["x_R"], fw["x_SR"].detach(), gt)
    d_S = _term("dis_S", _adv_d, bundle.dis["S"], fw["x_S"], fw["x_RS"].detach(), gt)
    return d_R + d_S


def total_objective(bundle, batch_S, batch_R, loss_cfg: losses.LossConfig = losses.DEFAULT_LOSS, generator=None):
    """Return (generator_loss, discriminator_loss, breakdown) for one pair of batches."""
    fw = generator_pass(bundle, batch_S, batch_R, generator)
    terms = generator_terms(bundle, fw, loss_cfg)
    g_loss = weighted_generator_loss(bundle.cfg, terms)
    d_loss = discriminator_loss(bundle, fw)
    return g_loss, d_loss, {k: float(v.detach()) for k, v in terms.items()}


# --------------------------------------------------------------------------
# Training
# --------------------------------------------------------------------------


def _check_finite(name, value):
    v = float(value.detach()) if torch.is_tensor(value) else float(value)
    if not math.isfinite(v):
        raise NonFiniteLoss(f"non-finite loss term {name!r}: {v}")


class TranslationTrainer:
    """Holds the optimizers and step counter for a bundle."""

    def __init__(self, bundle: TranslationBundle, loss_cfg: losses.LossConfig = losses.DEFAULT_LOSS, seed: int = 0):
        cfg = bundle.cfg
        self.bundle = bundle
        self.loss_cfg = loss_cfg
        betas = (cfg.beta1, cfg.beta2)
        self.gen_opt = torch.optim.Adam(bundle.generator_parameters(), lr=cfg.lr, betas=betas, weight_decay=cfg.weight_decay)
        self.dis_opt = torch.optim.Adam(bundle.discriminator_parameters(), lr=cfg.lr, betas=betas, weight_decay=cfg.weight_decay)
        self.noise = torch.Generator().manual_seed(seed)

    @property
    def step(self) -> int:
        return self.bundle.step

    def state_dict(self):
        return {
            "gen_opt": self.gen_opt.state_dict(),
            "dis_opt": self.dis_opt.state_dict(),
            "noise": self.noise.get_state(),
        }

    def load_state_dict(self, state):
        self.gen_opt.load_state_dict(state["gen_opt"])
        self.dis_opt.load_state_dict(state["dis_opt"])
        self.noise.set_state(state["noise"])


def train_step(trainer: TranslationTrainer, batch_S: torch.Tensor, batch_R: torch.Tensor) -> dict:
    """One alternating update: discriminators first, then encoders and decoders.

    Returns the breakdown plus ``generator_loss`` and ``discriminator_loss``.
    """
    bundle = trainer.bundle
    bundle.train()
    fw = generator_pass(bundle, batch_S, batch_R, trainer.noise)

    trainer.dis_opt.zero_grad(set_to_none=True)
    d_loss = discriminator_loss(bundle, fw)
    _check_finite("discriminator_loss", d_loss)
    d_loss.backward()
    trainer.dis_opt.step()

    trainer.gen_opt.zero_grad(set_to_none=True)
    bundle.dis.requires_grad_(False)
    try:
        terms = generator_terms(bundle, fw, trainer.loss_cfg)
        for name, value in terms.items():
            _check_finite(name, value)
        g_loss = weighted_generator_loss(bundle.cfg, terms)
        g_loss.backward()
    finally:
        bundle.dis.requires_grad_(True)
    trainer.gen_opt.step()
    bundle.step += 1

    out = {k: float(v.detach()) for k, v in terms.items()}
    out["generator_loss"] = float(g_loss.detach())
    out["discriminator_loss"] = float(d_loss.detach())
    return out


LOG_COLUMNS = ("step",) + TERM_NAMES + ("generator_loss", "discriminator_loss")


class TrainingLog:
    """Append-only CSV with one row per training step."""

    def __init__(self, path, append: bool = True):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        if not append or not self.path.exists() or self.path.stat().st_size == 0:
            with open(self.path, "w", newline="") as fh:
                csv.writer(fh, lineterminator="\n").writerow(LOG_COLUMNS)

    def append(self, step: int, row: dict) -> None:
        with open(self.path, "a", newline="") as fh:
            csv.writer(fh, lineterminator="\n").writerow([step] + [repr(float(row[c])) for c in LOG_COLUMNS[1:]])


# --------------------------------------------------------------------------
# Checkpoints
# --------------------------------------------------------------------------


def save_bundle(path, bundle: TranslationBundle, trainer: TranslationTrainer | None = None, run_config: str = "") -> None:
    payload = {
        "translation_config": asdict(bundle.cfg),
        "run_config": run_config,
        "step": bundle.step,
        "weights": bundle.state_dict(),
        "optimizer": trainer.state_dict() if trainer is not None else None,
    }
    save_archive(path, CHECKPOINT_TAG, payload)


def load_bundle(path, loss_cfg: losses.LossConfig = losses.DEFAULT_LOSS, device="cpu"):
    """Return (bundle, trainer, run_config_text) from a TRB1 archive."""
    payload = load_archive(path, CHECKPOINT_TAG)
    known = {f.name for f in fields(TranslationConfig)}
    cfg = TranslationConfig(**{k: v for k, v in payload["translation_config"].items() if k in known})
    bundle = TranslationBundle(cfg)
    bundle.load_state_dict(payload["weights"])
    bundle.step = int(payload["step"])
    bundle.to(device)
    trainer = TranslationTrainer(bundle, loss_cfg)
    if payload.get("optimizer") is not None:
        trainer.load_state_dict(payload["optimizer"])
    return bundle, trainer, payload.get("run_config", "")
