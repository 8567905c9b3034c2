"""Differentiable loss terms for domain translation and restoration training."""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass
from pathlib import Path

import torch
import torch.nn as nn
import torch.nn.functional as F

from .quality import SSIM_SIGMA, SSIM_WINDOW, gaussian_kernel1d, ssim_torch

log = logging.getLogger(__name__)

LAPLACIAN_3X3 = ((0.0, 1.0, 0.0), (1.0, -4.0, 1.0), (0.0, 1.0, 0.0))
PROB_GUARD = 1e-7

VGG16_FILE = "vgg16-397923af.pth"
VGG16_URL = "https://download.pytorch.org/models/vgg16-397923af.pth"
# torchvision names weight files by the leading hex digits of their sha256
VGG16_SHA256_PREFIX = "397923af"
# relu2_2 and relu3_3 in torchvision's vgg16().features
VGG16_TAPS = (8, 15)
IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


@dataclass
class LossConfig:
    epsilon: float = 1e-4
    gaussian_sigma: float = 1.0
    gaussian_kernel: int = 5
    reduction: str = "mean"
    perceptual_cache_dir: str = "~/.cache/uwrestore"
    perceptual_sha256_prefix: str = VGG16_SHA256_PREFIX
    perceptual_on_missing: str = "error"  # error | disable | random

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be > 0")
        if self.gaussian_kernel < 3 or self.gaussian_kernel % 2 == 0:
            raise ValueError("gaussian_kernel must be odd and >= 3")
        if not self.gaussian_sigma > 0:
            raise ValueError("gaussian_sigma must be > 0")
        if self.reduction not in ("mean", "sum"):
            raise ValueError(f"unknown reduction {self.reduction!r}")
        if self.perceptual_on_missing not in ("error", "disable", "random"):
            raise ValueError(f"unknown perceptual_on_missing {self.perceptual_on_missing!r}")


DEFAULT_LOSS = LossConfig()


def _same_shape(a: torch.Tensor, b: torch.Tensor) -> None:
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")


def _reduce(x: torch.Tensor, reduction: str) -> torch.Tensor:
    return x.sum() if reduction == "sum" else x.mean()


def _nchw(x: torch.Tensor) -> torch.Tensor:
    if x.dim() == 2:
        return x[None, None]
    if x.dim() == 3:
        return x[None]
    if x.dim() == 4:
        return x
    raise ValueError(f"expected a 2-D, 3-D or 4-D image tensor, got {x.dim()}-D")


def charbonnier(a: torch.Tensor, b: torch.Tensor, cfg: LossConfig = DEFAULT_LOSS) -> torch.Tensor:
    _same_shape(a, b)
    eps = cfg.epsilon
    v = torch.hypot(a - b, torch.full_like(a, eps))
    if cfg.reduction == "mean":
        # averaging the excess keeps the floor at exactly eps when a == b
        return eps + (v - eps).mean()
    return v.sum()


def log_edges(x: torch.Tensor, cfg: LossConfig = DEFAULT_LOSS) -> torch.Tensor:
    """Gaussian smoothing followed by the 3x3 discrete Laplacian, reflect-padded."""
    x = _nchw(x)
    k = cfg.gaussian_kernel
    pad = k // 2
    if min(x.shape[-2:]) <= pad:
        raise ValueError(f"image {tuple(x.shape[-2:])} is too small for a {k}x{k} reflect-padded kernel")
    c = x.shape[1]
    g = gaussian_kernel1d(k, cfg.gaussian_sigma, dtype=x.dtype, device=x.device)
    g2 = torch.outer(g, g).expand(c, 1, k, k)
    smooth = F.conv2d(F.pad(x, (pad,) * 4, mode="reflect"), g2, groups=c)
    lap = torch.tensor(LAPLACIAN_3X3, dtype=x.dtype, device=x.device).expand(c, 1, 3, 3)
    return F.conv2d(F.pad(smooth, (1,) * 4, mode="reflect"), lap, groups=c)


def edge_loss(a: torch.Tensor, b: torch.Tensor, cfg: LossConfig = DEFAULT_LOSS) -> torch.Tensor:
    _same_shape(a, b)
    return charbonnier(log_edges(a, cfg), log_edges(b, cfg), cfg)


def ssim_loss(a: torch.Tensor, b: torch.Tensor, window: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> torch.Tensor:
    _same_shape(a, b)
    return 1.0 - ssim_torch(_nchw(a), _nchw(b), window=window, sigma=sigma)


def latent_recon_loss(code_rt: torch.Tensor, code_orig: torch.Tensor) -> torch.Tensor:
    """L1 between a re-encoded latent code and the code it was decoded from."""
    _same_shape(code_rt, code_orig)
    return torch.mean(torch.abs(code_rt - code_orig))


def identity_image_loss(reconstructed: torch.Tensor, original: torch.Tensor) -> torch.Tensor:
    _same_shape(reconstructed, original)
    return torch.mean(torch.abs(reconstructed - original))


# --------------------------------------------------------------------------
# Adversarial terms
# --------------------------------------------------------------------------


def _guard_prob(p: torch.Tensor, name: str) -> torch.Tensor:
    if not torch.isfinite(p).all():
        raise ValueError(f"{name} contains non-finite values")
    if (p < 0).any() or (p > 1).any():
        raise ValueError(f"{name} must be probabilities in [0, 1]")
    return p.clamp(PROB_GUARD, 1.0 - PROB_GUARD)


def adversarial_objective(d_real: torch.Tensor, d_fake: torch.Tensor) -> torch.Tensor:
    """mean log D(real) + mean log(1 - D(fake)); the discriminator maximizes this."""
    real = _guard_prob(d_real, "D(real)")
    fake = _guard_prob(d_fake, "D(fake)")
    return torch.log(real).mean() + torch.log1p(-fake).mean()


def adversarial_loss_d(d_real: torch.Tensor, d_fake: torch.Tensor) -> torch.Tensor:
    return -adversarial_objective(d_real, d_fake)


def adversarial_loss_g(d_fake: torch.Tensor) -> torch.Tensor:
    """Non-saturating generator loss -log D(fake)."""
    return -torch.log(_guard_prob(d_fake, "D(fake)")).mean()


def lsgan_loss_d(real_out: torch.Tensor, fake_out: torch.Tensor) -> torch.Tensor:
    return torch.mean((real_out - 1.0) ** 2) + torch.mean(fake_out**2)


def lsgan_loss_g(fake_out: torch.Tensor) -> torch.Tensor:
    return torch.mean((fake_out - 1.0) ** 2)


def disc_loss(real_logits: torch.Tensor, fake_logits: torch.Tensor, gan_type: str = "vanilla") -> torch.Tensor:
    """Discriminator loss from raw (pre-activation) outputs."""
    if gan_type == "lsgan":
        return lsgan_loss_d(real_logits, fake_logits)
    return adversarial_loss_d(torch.sigmoid(real_logits), torch.sigmoid(fake_logits))


def gen_adv_loss(fake_logits: torch.Tensor, gan_type: str = "vanilla") -> torch.Tensor:
    if gan_type == "lsgan":
        return lsgan_loss_g(fake_logits)
    return adversarial_loss_g(torch.sigmoid(fake_logits))


# --------------------------------------------------------------------------
# Perceptual term
# --------------------------------------------------------------------------


class PerceptualUnavailable(RuntimeError):
    pass


class VGGFeatures(nn.Module):
    """Frozen VGG-16 trunk up to relu3_3, returning the tapped activations."""

    def __init__(self, state_dict=None, taps=VGG16_TAPS):
        super().__init__()
        from torchvision.models import vgg16

        net = vgg16(weights=None)
        if state_dict is not None:
            net.load_state_dict(state_dict)
        self.taps = tuple(taps)
        self.body = net.features[: max(self.taps) + 1]
        self.register_buffer("mean", torch.tensor(IMAGENET_MEAN).view(1, 3, 1, 1))
        self.register_buffer("std", torch.tensor(IMAGENET_STD).view(1, 3, 1, 1))
        self.requires_grad_(False)
        self.eval()

    def train(self, mode: bool = True):
        # always inference mode
        return super().train(False)

    def forward(self, x: torch.Tensor) -> list[torch.Tensor]:
        x = (_nchw(x) - self.mean.to(x.dtype)) / self.std.to(x.dtype)
        feats = []
        for i, layer in enumerate(self.body):
            x = layer(x)
            if i in self.taps:
                feats.append(x)
        return feats


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _weight_candidates(cache_dir) -> list[Path]:
    paths = [Path(cache_dir).expanduser() / VGG16_FILE]
    try:
        paths.append(Path(torch.hub.get_dir()) / "checkpoints" / VGG16_FILE)
    except Exception:  # pragma: no cover - hub dir unavailable
        pass
    return paths


def load_vgg_features(cfg: LossConfig = DEFAULT_LOSS, seed: int = 0) -> VGGFeatures | None:
    """Load the pretrained extractor from the cache, honouring ``perceptual_on_missing``.

    Returns ``None`` when the term is disabled.
    """
    for path in _weight_candidates(cfg.perceptual_cache_dir):
        if path.is_file():
            digest = _sha256(path)
            if not digest.startswith(cfg.perceptual_sha256_prefix):
                raise PerceptualUnavailable(
                    f"{path}: checksum {digest[:16]}... does not match pinned prefix {cfg.perceptual_sha256_prefix}"
                )
            return VGGFeatures(torch.load(path, map_location="cpu", weights_only=True))
    where = Path(cfg.perceptual_cache_dir).expanduser() / VGG16_FILE
    if cfg.perceptual_on_missing == "disable":
        log.warning("VGG-16 weights not found at %s; perceptual loss disabled (weight 0)", where)
        return None
    if cfg.perceptual_on_missing == "random":
        log.warning("VGG-16 weights not found at %s; using a randomly initialised extractor (seed %d)", where, seed)
        with torch.random.fork_rng():
            torch.manual_seed(seed)
            return VGGFeatures()
    raise PerceptualUnavailable(
        f"VGG-16 weights not found. Download {VGG16_URL} to {where}, "
        "or set losses.perceptual_on_missing = disable to drop the perceptual term."
    )


def perceptual_loss(a: torch.Tensor, b: torch.Tensor, extractor: nn.Module) -> torch.Tensor:
    """Sum over tapped layers of the mean squared feature difference."""
    _same_shape(a, b)
    if extractor is None:
        raise PerceptualUnavailable("perceptual loss requested without a feature extractor")
    fa = extractor(a)
    fb = extractor(b)
    return sum(torch.mean((x - y) ** 2) for x, y in zip(fa, fb))
