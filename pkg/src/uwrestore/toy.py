"""Procedural toy corpora for smoke runs and tests."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .imaging import write_depth, write_rgb


def toy_scene(rng: np.random.Generator, size: int = 64):
    """Random clean scene of rectangles and discs over a gradient, with a planar depth map."""
    yy, xx = np.mgrid[0:size, 0:size] / max(size - 1, 1)
    base = rng.uniform(0.2, 0.9, size=3)
    tilt = rng.uniform(-0.3, 0.3, size=3)
    img = np.clip(base + tilt * yy[..., None], 0, 1)
    for _ in range(int(rng.integers(2, 5))):
        color = rng.uniform(0, 1, size=3)
        if rng.random() < 0.5:
            y0, x0 = rng.integers(0, size // 2, size=2)
            h, w = rng.integers(size // 8, size // 2, size=2)
            img[y0 : y0 + h, x0 : x0 + w] = color
        else:
            cy, cx = rng.uniform(0, 1, size=2)
            r = rng.uniform(0.08, 0.25)
            img[(yy - cy) ** 2 + (xx - cx) ** 2 < r * r] = color
    near, far = rng.uniform(0.5, 2.0), rng.uniform(3.0, 10.0)
    depth = near + (far - near) * (1.0 - yy) * rng.uniform(0.7, 1.0) + 0.3 * xx
    return img, depth


def toy_underwater(rng: np.random.Generator, size: int = 64):
    """Stand-in for a real underwater photo: a toy scene under a random blue-green cast with noise."""
    from .formation import SceneSample, WaterParams, synthesize_underwater

    img, depth = toy_scene(rng, size)
    beta = (rng.uniform(0.3, 0.6), rng.uniform(0.05, 0.15), rng.uniform(0.05, 0.2))
    ambient = (rng.uniform(0.0, 0.15), rng.uniform(0.4, 0.7), rng.uniform(0.4, 0.8))
    out = synthesize_underwater(SceneSample(img, depth), WaterParams(beta, ambient, "toy"))
    return np.clip(out + rng.normal(0, 0.01, out.shape), 0, 1)


def write_toy_corpus(root, n_rgbd: int = 10, n_real: int = 10, size: int = 64, seed: int = 0) -> dict:
    """Write ``root/rgbd/{rgb,depth}`` and ``root/real`` and return their paths."""
    root = Path(root)
    rng = np.random.default_rng(seed)
    rgb_dir, depth_dir, real_dir = root / "rgbd" / "rgb", root / "rgbd" / "depth", root / "real"
    for d in (rgb_dir, depth_dir, real_dir):
        d.mkdir(parents=True, exist_ok=True)
    for i in range(n_rgbd):
        img, depth = toy_scene(rng, size)
        write_rgb(rgb_dir / f"scene_{i:04d}.png", img)
        write_depth(depth_dir / f"scene_{i:04d}.uwd", depth)
    for i in range(n_real):
        write_rgb(real_dir / f"real_{i:04d}.png", toy_underwater(rng, size))
    return {"rgbd": root / "rgbd", "real": real_dir}
