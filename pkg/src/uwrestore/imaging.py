"""Image and depth-map file I/O.

RGB images are handled as float64 arrays of shape (H, W, 3) in [0, 1].
Depth maps are float64 arrays of shape (H, W) in meters.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np
from PIL import Image

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff")
DEPTH_MAGIC = b"UWD1"
DEPTH_HEADER = struct.Struct("<4sIII")
# 16-bit depth PNGs store millimeters
DEPTH_PNG_SCALE = 1000.0


def read_rgb(path) -> np.ndarray:
    with Image.open(path) as im:
        im = im.convert("RGB")
        arr = np.asarray(im, dtype=np.uint8)
    return arr.astype(np.float64) / 255.0


def to_uint8(img: np.ndarray) -> np.ndarray:
    return np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)


def write_rgb(path, img: np.ndarray) -> None:
    """Write a float [0,1] (or uint8) RGB array as a lossless PNG."""
    if img.dtype != np.uint8:
        img = to_uint8(img)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(img, mode="RGB").save(path, format="PNG")


def read_depth(path, png_scale: float = DEPTH_PNG_SCALE) -> np.ndarray:
    """Read a depth map in meters from a 16-bit PNG or a raw UWD1 file."""
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == DEPTH_MAGIC:
        return _read_uwd1(path)
    with Image.open(path) as im:
        arr = np.asarray(im)
    if arr.ndim != 2:
        raise ValueError(f"{path}: depth PNG must be single-channel, got shape {arr.shape}")
    return arr.astype(np.float64) / png_scale


def _read_uwd1(path: Path) -> np.ndarray:
    data = path.read_bytes()
    if len(data) < DEPTH_HEADER.size:
        raise ValueError(f"{path}: truncated UWD1 header")
    magic, height, width, _reserved = DEPTH_HEADER.unpack_from(data)
    expected = DEPTH_HEADER.size + 4 * height * width
    if len(data) != expected:
        raise ValueError(f"{path}: UWD1 payload is {len(data)} bytes, expected {expected}")
    arr = np.frombuffer(data, dtype="<f4", offset=DEPTH_HEADER.size)
    return arr.reshape(height, width).astype(np.float64)


def write_depth(path, depth: np.ndarray) -> None:
    """Write depth (meters) as a UWD1 file: 16-byte header then float32 rows."""
    depth = np.asarray(depth, dtype="<f4")
    if depth.ndim != 2:
        raise ValueError(f"depth must be 2-D, got shape {depth.shape}")
    h, w = depth.shape
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(DEPTH_HEADER.pack(DEPTH_MAGIC, h, w, 0))
        fh.write(depth.tobytes(order="C"))


def write_depth_png(path, depth: np.ndarray, png_scale: float = DEPTH_PNG_SCALE) -> None:
    mm = np.round(np.asarray(depth) * png_scale)
    if mm.min() < 0 or mm.max() > 65535:
        raise ValueError("depth out of range for 16-bit PNG")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(mm.astype(np.uint16)).save(path, format="PNG")


def list_images(root, recursive: bool = True) -> list[Path]:
    root = Path(root)
    pattern = "**/*" if recursive else "*"
    return sorted(p for p in root.glob(pattern) if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES)


def hwc_to_tensor(img: np.ndarray, dtype=None):
    import torch

    t = torch.from_numpy(np.ascontiguousarray(img.transpose(2, 0, 1)))
    return t.to(dtype or torch.float32)


def tensor_to_hwc(t) -> np.ndarray:
    return t.detach().cpu().double().numpy().transpose(1, 2, 0)
