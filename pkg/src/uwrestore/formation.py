"""Synthetic underwater image formation from clean RGB-D input.

Each channel is attenuated by a per-channel transmission map
``t_c = exp(-beta_c * depth_scale * d)`` and the lost light is replaced by the
ambient (veiling) light:  ``I_c = J_c * t_c + A_c * (1 - t_c)``.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path

import numpy as np

# largest floating-point overshoot outside [0, 1] that is silently repaired
CLIP_TOLERANCE = 1e-6
WATER_KEYS = ("beta_r", "beta_g", "beta_b", "ambient_r", "ambient_g", "ambient_b", "depth_scale")


@dataclass(frozen=True)
class SceneSample:
    """Clean RGB image (H, W, 3) in [0, 1] and aligned depth (H, W) in meters."""

    clean: np.ndarray
    depth: np.ndarray
    sample_id: str = ""

    def __post_init__(self):
        clean = np.asarray(self.clean, dtype=np.float64)
        depth = np.asarray(self.depth, dtype=np.float64)
        if clean.ndim != 3 or clean.shape[2] != 3:
            raise ValueError(f"clean must be (H, W, 3), got {clean.shape}")
        if depth.shape != clean.shape[:2]:
            raise ValueError(f"depth shape {depth.shape} does not match image {clean.shape[:2]}")
        _check_depth(depth)
        if clean.min() < 0.0 or clean.max() > 1.0:
            raise ValueError("clean image values must lie in [0, 1]")
        object.__setattr__(self, "clean", clean)
        object.__setattr__(self, "depth", depth)


@dataclass(frozen=True)
class WaterParams:
    beta: tuple[float, float, float]
    ambient: tuple[float, float, float]
    label: str
    depth_scale: float = 1.0

    def __post_init__(self):
        beta = tuple(float(b) for b in self.beta)
        ambient = tuple(float(a) for a in self.ambient)
        if len(beta) != 3 or len(ambient) != 3:
            raise ValueError("beta and ambient must have three components")
        if any(not np.isfinite(b) or b < 0 for b in beta):
            raise ValueError(f"{self.label}: attenuation coefficients must be finite and >= 0")
        if any(not 0.0 <= a <= 1.0 for a in ambient):
            raise ValueError(f"{self.label}: ambient light must lie in [0, 1]")
        if not (np.isfinite(self.depth_scale) and self.depth_scale > 0):
            raise ValueError(f"{self.label}: depth_scale must be > 0")
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "ambient", ambient)
        object.__setattr__(self, "depth_scale", float(self.depth_scale))


def _check_depth(depth: np.ndarray) -> None:
    if not np.all(np.isfinite(depth)):
        raise ValueError("depth contains non-finite values")
    if depth.size and depth.min() < 0:
        raise ValueError("depth contains negative values")


def transmission_map(depth: np.ndarray, params: WaterParams, shape=None) -> np.ndarray:
    """Per-pixel, per-channel transmission in (0, 1], shape (H, W, 3).

    ``shape`` optionally names the (H, W) the depth must match.
    """
    depth = np.asarray(depth, dtype=np.float64)
    if depth.ndim != 2:
        raise ValueError(f"depth must be 2-D, got shape {depth.shape}")
    if shape is not None and tuple(shape[:2]) != depth.shape:
        raise ValueError(f"depth shape {depth.shape} does not match image {tuple(shape[:2])}")
    _check_depth(depth)
    beta = np.asarray(params.beta, dtype=np.float64)
    return np.exp(-(depth[..., None] * params.depth_scale) * beta)


def synthesize_underwater(sample: SceneSample, params: WaterParams) -> np.ndarray:
    """Degrade ``sample.clean`` into an underwater image in [0, 1]."""
    t = transmission_map(sample.depth, params, shape=sample.clean.shape)
    ambient = np.asarray(params.ambient, dtype=np.float64)
    out = sample.clean * t + ambient * (1.0 - t)
    lo, hi = out.min(), out.max()
    if lo < -CLIP_TOLERANCE or hi > 1.0 + CLIP_TOLERANCE:
        raise ValueError(f"formation output left [0, 1] by more than {CLIP_TOLERANCE}: [{lo}, {hi}]")
    return np.clip(out, 0.0, 1.0)


def jitter_ambient(params: WaterParams, rng: np.random.Generator, amount: float = 0.05) -> WaterParams:
    """Return a copy with each ambient component shifted by U(-amount, amount), kept in [0, 1]."""
    shift = rng.uniform(-amount, amount, size=3)
    ambient = np.clip(np.asarray(params.ambient) + shift, 0.0, 1.0)
    return replace(params, ambient=tuple(float(a) for a in ambient))


def _default_config_text() -> str:
    return resources.files("uwrestore").joinpath("data/water_types.ini").read_text()


def parse_water_config(text: str) -> list[WaterParams]:
    parser = configparser.ConfigParser()
    parser.read_string(text)
    out = []
    for label in parser.sections():
        sec = parser[label]
        missing = [k for k in WATER_KEYS if k not in sec and k != "depth_scale"]
        if missing:
            raise ValueError(f"water type [{label}] is missing keys: {', '.join(missing)}")
        out.append(
            WaterParams(
                beta=(sec.getfloat("beta_r"), sec.getfloat("beta_g"), sec.getfloat("beta_b")),
                ambient=(sec.getfloat("ambient_r"), sec.getfloat("ambient_g"), sec.getfloat("ambient_b")),
                label=sec.get("label", label),
                depth_scale=sec.getfloat("depth_scale", 1.0),
            )
        )
    return out


def format_water_config(types: list[WaterParams]) -> str:
    parser = configparser.ConfigParser()
    for wp in types:
        parser[wp.label] = {
            "beta_r": repr(wp.beta[0]),
            "beta_g": repr(wp.beta[1]),
            "beta_b": repr(wp.beta[2]),
            "ambient_r": repr(wp.ambient[0]),
            "ambient_g": repr(wp.ambient[1]),
            "ambient_b": repr(wp.ambient[2]),
            "depth_scale": repr(wp.depth_scale),
        }
    import io

    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


def builtin_water_types(config_path=None, labels=None) -> list[WaterParams]:
    """Shipped water types, with per-key overrides from ``config_path``.

    A section in the override file whose label matches a shipped type
    replaces only the keys it names; unknown labels add new types.
    """
    types = {wp.label: wp for wp in parse_water_config(_default_config_text())}
    if config_path is not None:
        parser = configparser.ConfigParser()
        with open(Path(config_path)) as fh:
            parser.read_file(fh)
        for label in parser.sections():
            sec = parser[label]
            base = types.get(label)
            if base is None:
                types.update({wp.label: wp for wp in parse_water_config(_section_text(label, sec))})
                continue
            beta = [sec.getfloat(f"beta_{c}", base.beta[i]) for i, c in enumerate("rgb")]
            ambient = [sec.getfloat(f"ambient_{c}", base.ambient[i]) for i, c in enumerate("rgb")]
            types[label] = WaterParams(
                beta=tuple(beta),
                ambient=tuple(ambient),
                label=label,
                depth_scale=sec.getfloat("depth_scale", base.depth_scale),
            )
    result = list(types.values())
    if labels is not None:
        wanted = list(labels)
        unknown = set(wanted) - set(types)
        if unknown:
            raise KeyError(f"unknown water types: {sorted(unknown)}")
        result = [types[label] for label in wanted]
    return result


def _section_text(label, sec) -> str:
    lines = [f"[{label}]"] + [f"{k} = {v}" for k, v in sec.items()]
    return "\n".join(lines) + "\n"
