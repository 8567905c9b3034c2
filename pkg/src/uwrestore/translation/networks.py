"""Encoder, AdaIN decoder and multi-scale discriminator building blocks."""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F


class LayerNorm(nn.Module):
    """Per-sample normalisation over (C, H, W) with a per-channel affine."""

    def __init__(self, num_features, eps=1e-5):
        super().__init__()
        self.eps = eps
        self.gamma = nn.Parameter(torch.ones(num_features))
        self.beta = nn.Parameter(torch.zeros(num_features))

    def forward(self, x):
        flat = x.flatten(1)
        mean = flat.mean(1).view(-1, 1, 1, 1)
        std = flat.std(1).view(-1, 1, 1, 1)
        x = (x - mean) / (std + self.eps)
        return x * self.gamma.view(1, -1, 1, 1) + self.beta.view(1, -1, 1, 1)


class AdaptiveInstanceNorm2d(nn.Module):
    """Instance norm whose affine (scale, shift) is supplied per sample at call time."""

    def __init__(self, num_features, eps=1e-5):
        super().__init__()
        self.num_features = num_features
        self.eps = eps

    def forward(self, x, scale, shift):
        mean = x.mean(dim=(2, 3), keepdim=True)
        var = x.var(dim=(2, 3), keepdim=True, unbiased=False)
        x = (x - mean) / torch.sqrt(var + self.eps)
        return x * scale[:, :, None, None] + shift[:, :, None, None]


def _norm(kind, dim):
    if kind == "in":
        return nn.InstanceNorm2d(dim)
    if kind == "ln":
        return LayerNorm(dim)
    if kind == "none":
        return None
    raise ValueError(f"unknown norm {kind!r}")


def _activation(kind):
    return {
        "relu": nn.ReLU(),
        "lrelu": nn.LeakyReLU(0.2),
        "tanh": nn.Tanh(),
        "sigmoid": nn.Sigmoid(),
        "none": None,
    }[kind]


class Conv2dBlock(nn.Module):
    def __init__(self, in_dim, out_dim, kernel, stride, padding, norm="none", activation="relu", pad_type="reflect"):
        super().__init__()
        self.pad = nn.ReflectionPad2d(padding) if pad_type == "reflect" else nn.ZeroPad2d(padding)
        self.conv = nn.Conv2d(in_dim, out_dim, kernel, stride)
        self.norm = _norm(norm, out_dim)
        self.act = _activation(activation)

    def forward(self, x):
        x = self.conv(self.pad(x))
        if self.norm is not None:
            x = self.norm(x)
        if self.act is not None:
            x = self.act(x)
        return x


class ResBlock(nn.Module):
    def __init__(self, dim, norm="in", activation="relu"):
        super().__init__()
        self.block = nn.Sequential(
            Conv2dBlock(dim, dim, 3, 1, 1, norm=norm, activation=activation),
            Conv2dBlock(dim, dim, 3, 1, 1, norm=norm, activation="none"),
        )

    def forward(self, x):
        return x + self.block(x)


class AdaINResBlock(nn.Module):
    """Residual block with AdaIN after each convolution; consumes 4*dim style parameters."""

    def __init__(self, dim, activation="relu"):
        super().__init__()
        self.dim = dim
        self.conv1 = Conv2dBlock(dim, dim, 3, 1, 1, activation="none")
        self.norm1 = AdaptiveInstanceNorm2d(dim)
        self.act = _activation(activation)
        self.conv2 = Conv2dBlock(dim, dim, 3, 1, 1, activation="none")
        self.norm2 = AdaptiveInstanceNorm2d(dim)

    @property
    def num_params(self):
        return 4 * self.dim

    def forward(self, x, params):
        d = self.dim
        s1, b1, s2, b2 = params[:, :d], params[:, d : 2 * d], params[:, 2 * d : 3 * d], params[:, 3 * d :]
        y = self.act(self.norm1(self.conv1(x), s1, b1))
        y = self.norm2(self.conv2(y), s2, b2)
        return x + y


class MLP(nn.Module):
    def __init__(self, in_dim, out_dim, hidden, n_layers=3, activation="relu"):
        super().__init__()
        layers = [nn.Linear(in_dim, hidden), _activation(activation)]
        for _ in range(n_layers - 2):
            layers += [nn.Linear(hidden, hidden), _activation(activation)]
        layers.append(nn.Linear(hidden, out_dim))
        self.model = nn.Sequential(*layers)

    def forward(self, x):
        return self.model(x.flatten(1))


class ContentEncoder(nn.Module):
    def __init__(self, n_down, n_res, in_dim, dim):
        super().__init__()
        layers = [Conv2dBlock(in_dim, dim, 7, 1, 3, norm="in")]
        for _ in range(n_down):
            layers.append(Conv2dBlock(dim, 2 * dim, 4, 2, 1, norm="in"))
            dim *= 2
        layers += [ResBlock(dim, norm="in") for _ in range(n_res)]
        self.model = nn.Sequential(*layers)
        self.output_dim = dim

    def forward(self, x):
        return self.model(x)


class StyleEncoder(nn.Module):
    def __init__(self, n_down, in_dim, dim, style_dim):
        super().__init__()
        layers = [Conv2dBlock(in_dim, dim, 7, 1, 3)]
        for i in range(n_down):
            # channels double for the first two downsamplings only
            out = dim * 2 if i < 2 else dim
            layers.append(Conv2dBlock(dim, out, 4, 2, 1))
            dim = out
        layers += [nn.AdaptiveAvgPool2d(1), nn.Conv2d(dim, style_dim, 1)]
        self.model = nn.Sequential(*layers)

    def forward(self, x):
        return self.model(x).flatten(1)


class Decoder(nn.Module):
    """AdaIN residual blocks, then nearest-neighbour upsampling back to image resolution."""

    def __init__(self, n_up, n_res, dim, out_dim):
        super().__init__()
        self.res = nn.ModuleList(AdaINResBlock(dim) for _ in range(n_res))
        ups = []
        for _ in range(n_up):
            ups += [nn.Upsample(scale_factor=2, mode="nearest"), Conv2dBlock(dim, dim // 2, 5, 1, 2, norm="ln")]
            dim //= 2
        ups.append(Conv2dBlock(dim, out_dim, 7, 1, 3, activation="sigmoid"))
        self.up = nn.Sequential(*ups)

    @property
    def num_adain_params(self):
        return sum(b.num_params for b in self.res)

    def split_params(self, params):
        out, i = [], 0
        for block in self.res:
            out.append(params[:, i : i + block.num_params])
            i += block.num_params
        return out

    def forward(self, content, adain_params):
        x = content
        for block, p in zip(self.res, self.split_params(adain_params)):
            x = block(x, p)
        return self.up(x)


class MsImageDis(nn.Module):
    """Multi-scale PatchGAN discriminator; returns one logit map per scale."""

    def __init__(self, in_dim, dim=64, n_layer=4, num_scales=3, activation="lrelu"):
        super().__init__()
        self.num_scales = num_scales
        self.downsample = nn.AvgPool2d(3, stride=2, padding=1, count_include_pad=False)
        self.cnns = nn.ModuleList(self._make_net(in_dim, dim, n_layer, activation) for _ in range(num_scales))

    @staticmethod
    def _make_net(in_dim, dim, n_layer, activation):
        layers = [Conv2dBlock(in_dim, dim, 4, 2, 1, activation=activation)]
        for _ in range(n_layer - 1):
            layers.append(Conv2dBlock(dim, dim * 2, 4, 2, 1, activation=activation))
            dim *= 2
        layers.append(nn.Conv2d(dim, 1, 1))
        return nn.Sequential(*layers)

    def forward(self, x):
        outs = []
        for net in self.cnns:
            outs.append(net(x))
            x = self.downsample(x)
        return outs


def init_weights(module, kind="kaiming"):
    for m in module.modules():
        if isinstance(m, (nn.Conv2d, nn.Linear)):
            if kind == "kaiming":
                nn.init.kaiming_normal_(m.weight, a=0, mode="fan_in")
            elif kind == "gaussian":
                nn.init.normal_(m.weight, 0.0, 0.02)
            if m.bias is not None:
                nn.init.zeros_(m.bias)


def pad_to_multiple(x, factor):
    """Reflect-pad (N, C, H, W) on the bottom/right so H and W divide ``factor``."""
    h, w = x.shape[-2:]
    ph, pw = (-h) % factor, (-w) % factor
    if ph == 0 and pw == 0:
        return x
    mode = "reflect" if ph < h and pw < w else "replicate"
    return F.pad(x, (0, pw, 0, ph), mode=mode)
