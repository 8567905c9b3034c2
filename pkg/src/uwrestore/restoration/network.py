"""Residual U-Net with channel-attention blocks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from ..imaging import hwc_to_tensor, tensor_to_hwc

VARIANTS = ("full", "no_cal", "simple_unet")
# Table 2 row labels for each variant
VARIANT_LABELS = {"simple_unet": "Ours(simple U-Net)", "no_cal": "Ours(w/o CAL)", "full": "Ours"}


@dataclass
class RestoreNetConfig:
    depth: int = 4
    base_width: int = 32
    cab_per_scale: int = 2
    attention_reduction: int = 8
    variant: str = "full"

    def __post_init__(self):
        if self.depth < 2:
            raise ValueError("depth must be >= 2")
        if self.base_width < 8:
            raise ValueError("base_width must be >= 8")
        if self.cab_per_scale < 1:
            raise ValueError("cab_per_scale must be >= 1")
        if self.attention_reduction < 1 or self.base_width % self.attention_reduction:
            raise ValueError("attention_reduction must divide base_width")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")

    def width(self, scale: int) -> int:
        return self.base_width * 2**scale

    @property
    def pad_factor(self) -> int:
        return 2 ** (self.depth - 1)


class ChannelAttention(nn.Module):
    """Per-channel sigmoid gate computed from globally average-pooled features."""

    def __init__(self, channels, reduction):
        super().__init__()
        if channels % reduction:
            raise ValueError(f"{channels} channels not divisible by reduction {reduction}")
        self.squeeze = nn.Conv2d(channels, channels // reduction, 1)
        self.excite = nn.Conv2d(channels // reduction, channels, 1)

    def gate(self, x):
        y = F.adaptive_avg_pool2d(x, 1)
        return torch.sigmoid(self.excite(F.relu(self.squeeze(y))))

    def forward(self, x):
        return x * self.gate(x)


class CAB(nn.Module):
    """conv -> act -> conv, channel attention, residual skip.

    ``no_cal`` drops the gate; ``simple_unet`` drops the gate and the skip.
    """

    def __init__(self, channels, reduction, mode="full"):
        super().__init__()
        if mode not in VARIANTS:
            raise ValueError(f"unknown CAB mode {mode!r}")
        if channels % reduction:
            raise ValueError(f"{channels} channels not divisible by reduction {reduction}")
        self.channels = channels
        self.mode = mode
        self.conv1 = nn.Conv2d(channels, channels, 3, padding=1)
        self.act = nn.PReLU()
        self.conv2 = nn.Conv2d(channels, channels, 3, padding=1)
        self.attention = ChannelAttention(channels, reduction) if mode == "full" else None

    def forward(self, x):
        y = self.conv2(self.act(self.conv1(x)))
        if self.mode == "simple_unet":
            return y
        if self.attention is not None:
            y = self.attention(y)
        return x + y


def cab_forward(block: CAB, features: torch.Tensor) -> torch.Tensor:
    if features.dim() != 4 or features.shape[1] != block.channels:
        raise ValueError(f"expected (N, {block.channels}, H, W) features, got {tuple(features.shape)}")
    return block(features)


class Downsample(nn.Module):
    def __init__(self, cin, cout):
        super().__init__()
        self.conv = nn.Conv2d(cin, cout, 3, padding=1)

    def forward(self, x):
        return self.conv(F.interpolate(x, scale_factor=0.5, mode="bilinear", align_corners=False))


class Upsample(nn.Module):
    """Bilinear resize to the skip tensor's size, then a convolution."""

    def __init__(self, cin, cout):
        super().__init__()
        self.conv = nn.Conv2d(cin, cout, 3, padding=1)

    def forward(self, x, size):
        return self.conv(F.interpolate(x, size=size, mode="bilinear", align_corners=False))


class RestoreNet(nn.Module):
    def __init__(self, cfg: RestoreNetConfig | None = None, zero_tail: bool = True):
        super().__init__()
        self.cfg = cfg = cfg or RestoreNetConfig()
        r, mode = cfg.attention_reduction, cfg.variant

        def stage(ch):
            return nn.Sequential(*(CAB(ch, r, mode) for _ in range(cfg.cab_per_scale)))

        self.head = nn.Conv2d(3, cfg.width(0), 3, padding=1)
        self.enc = nn.ModuleList(stage(cfg.width(i)) for i in range(cfg.depth))
        self.down = nn.ModuleList(Downsample(cfg.width(i), cfg.width(i + 1)) for i in range(cfg.depth - 1))
        self.skip = nn.ModuleList(CAB(cfg.width(i), r, mode) for i in range(cfg.depth - 1))
        self.up = nn.ModuleList(Upsample(cfg.width(i + 1), cfg.width(i)) for i in range(cfg.depth - 1))
        self.dec = nn.ModuleList(stage(cfg.width(i)) for i in range(cfg.depth - 1))
        self.tail = nn.Conv2d(cfg.width(0), 3, 3, padding=1)
        if zero_tail:
            nn.init.zeros_(self.tail.weight)
            nn.init.zeros_(self.tail.bias)

    def residual(self, x):
        feats = []
        y = self.head(x)
        for i in range(self.cfg.depth):
            y = self.enc[i](y)
            if i < self.cfg.depth - 1:
                feats.append(y)
                y = self.down[i](y)
        for i in reversed(range(self.cfg.depth - 1)):
            skip = feats[i]
            y = self.up[i](y, skip.shape[-2:]) + self.skip[i](skip)
            y = self.dec[i](y)
        return self.tail(y)

    def forward(self, x):
        return restore(self, x)[1]


def _pad(x, factor):
    h, w = x.shape[-2:]
    ph, pw = (-h) % factor, (-w) % factor
    if ph == 0 and pw == 0:
        return x
    mode = "reflect" if ph < h and pw < w else "replicate"
    return F.pad(x, (0, pw, 0, ph), mode=mode)


def restore(net: RestoreNet, image: torch.Tensor):
    """Return (residual, restored) with restored = image + residual, unclamped."""
    x = image.unsqueeze(0) if image.dim() == 3 else image
    if x.dim() != 4 or x.shape[1] != 3:
        raise ValueError(f"expected an RGB tensor (N, 3, H, W), got {tuple(image.shape)}")
    h, w = x.shape[-2:]
    residual = net.residual(_pad(x, net.cfg.pad_factor))[..., :h, :w]
    restored = x + residual
    if image.dim() == 3:
        return residual[0], restored[0]
    return residual, restored


@torch.no_grad()
def restore_array(net: RestoreNet, image: np.ndarray) -> np.ndarray:
    """Restore an (H, W, 3) float image; the result is clamped to [0, 1]."""
    net.eval()
    param = next(net.parameters())
    x = hwc_to_tensor(image).to(device=param.device, dtype=param.dtype)
    _, y = restore(net, x)
    return np.clip(tensor_to_hwc(y), 0.0, 1.0)


def has_transposed_conv(module: nn.Module) -> bool:
    return any(isinstance(m, nn.modules.conv._ConvTransposeNd) for m in module.modules())
