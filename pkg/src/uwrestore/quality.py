"""Full-reference (PSNR, SSIM) and no-reference (UCIQE, UIQM) image quality metrics.

The SSIM core is written in torch so the training losses and the reported
metric share one implementation.
"""

from __future__ import annotations

import csv
import datetime as _dt
import hashlib
import io
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from scipy import ndimage

from .imaging import list_images, read_rgb

log = logging.getLogger(__name__)

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03

UCIQE_COEFFS = (0.4680, 0.2745, 0.2576)
UIQM_COEFFS = (0.0282, 0.2953, 3.5753)
# PLIP constants for the logAMEE contrast measure
PLIP_GAMMA = 1026.0
PLIP_K = 1026.0


@dataclass
class QualityConfig:
    uciqe_variant: str = "yang2015"  # yang2015 | uint8_lab
    uciqe_c1: float = UCIQE_COEFFS[0]
    uciqe_c2: float = UCIQE_COEFFS[1]
    uciqe_c3: float = UCIQE_COEFFS[2]
    uciqe_percentile: float = 0.01
    uiqm_variant: str = "panetta"  # panetta | rgb_blocks
    uiqm_c1: float = UIQM_COEFFS[0]
    uiqm_c2: float = UIQM_COEFFS[1]
    uiqm_c3: float = UIQM_COEFFS[2]
    uiqm_block: int = 10
    uiqm_trim: float = 0.1
    uiqm_eme_offset: float = 1.0
    ssim_window: int = SSIM_WINDOW
    ssim_sigma: float = SSIM_SIGMA


# --------------------------------------------------------------------------
# SSIM (torch core)
# --------------------------------------------------------------------------


def gaussian_kernel1d(size: int, sigma: float, dtype=torch.float64, device=None) -> torch.Tensor:
    x = torch.arange(size, dtype=dtype, device=device) - (size - 1) / 2.0
    g = torch.exp(-(x**2) / (2.0 * sigma**2))
    return g / g.sum()


def _blur_valid(x: torch.Tensor, g: torch.Tensor) -> torch.Tensor:
    c = x.shape[1]
    kh = g.view(1, 1, -1, 1).expand(c, 1, -1, 1)
    kw = g.view(1, 1, 1, -1).expand(c, 1, 1, -1)
    return F.conv2d(F.conv2d(x, kh, groups=c), kw, groups=c)


def ssim_map(
    a: torch.Tensor,
    b: torch.Tensor,
    window: int = SSIM_WINDOW,
    sigma: float = SSIM_SIGMA,
    data_range: float = 1.0,
    k1: float = SSIM_K1,
    k2: float = SSIM_K2,
) -> torch.Tensor:
    """Per-window SSIM for (N, C, H, W) tensors, valid windows only."""
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")
    if a.dim() != 4:
        raise ValueError(f"expected (N, C, H, W), got {tuple(a.shape)}")
    if a.shape[-1] < window or a.shape[-2] < window:
        raise ValueError(f"image {tuple(a.shape[-2:])} is smaller than the {window}x{window} SSIM window")
    g = gaussian_kernel1d(window, sigma, dtype=a.dtype, device=a.device)
    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2
    mu_a = _blur_valid(a, g)
    mu_b = _blur_valid(b, g)
    var_a = _blur_valid(a * a, g) - mu_a**2
    var_b = _blur_valid(b * b, g) - mu_b**2
    cov = _blur_valid(a * b, g) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    return num / den


def ssim_torch(a: torch.Tensor, b: torch.Tensor, **kw) -> torch.Tensor:
    """Mean SSIM over windows, channels and batch; accepts (C,H,W) or (N,C,H,W)."""
    if a.dim() == 3:
        a, b = a.unsqueeze(0), b.unsqueeze(0)
    return ssim_map(a, b, **kw).mean()


def _as_nchw(img: np.ndarray) -> torch.Tensor:
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[..., None]
    return torch.from_numpy(np.ascontiguousarray(arr.transpose(2, 0, 1)))[None]


def ssim(a: np.ndarray, b: np.ndarray, window: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> float:
    """SSIM of two (H, W[, C]) images in [0, 1]."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    with torch.no_grad():
        return float(ssim_torch(_as_nchw(a), _as_nchw(b), window=window, sigma=sigma))


def psnr(a: np.ndarray, b: np.ndarray, max_val: float = 1.0) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(max_val**2 / mse)


# --------------------------------------------------------------------------
# UCIQE
# --------------------------------------------------------------------------


def _check_rgb(img) -> np.ndarray:
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"expected an RGB image of shape (H, W, 3), got {arr.shape}")
    return arr


def _std(x: np.ndarray) -> float:
    # constant inputs give exactly zero, not summation round-off
    if x.size == 0 or np.ptp(x) == 0:
        return 0.0
    return float(np.std(x))


def _percentile_spread(lum: np.ndarray, frac: float) -> float:
    """Mean of the top ``frac`` of values minus mean of the bottom ``frac``."""
    flat = np.sort(lum.ravel())
    n = max(1, int(math.ceil(frac * flat.size)))
    return float(flat[-n:].mean() - flat[:n].mean())


def uciqe_components(img, cfg: QualityConfig | None = None) -> dict:
    """Chroma spread, luminance contrast and mean saturation of an RGB image."""
    cfg = cfg or QualityConfig()
    rgb = np.clip(_check_rgb(img), 0.0, 1.0)
    if cfg.uciqe_variant == "yang2015":
        from skimage.color import rgb2lab

        lab = rgb2lab(rgb)
        lum = lab[..., 0] / 100.0
        chroma = np.hypot(lab[..., 1], lab[..., 2]) / 100.0
        denom = np.hypot(chroma, lum)
        sat = np.divide(chroma, denom, out=np.zeros_like(chroma), where=denom > 0)
        chroma_std = _std(chroma)
        contrast = _percentile_spread(lum, cfg.uciqe_percentile)
    elif cfg.uciqe_variant == "uint8_lab":
        # 8-bit OpenCV Lab scaled by 1/255, as in common evaluation scripts
        import cv2

        u8 = np.round(rgb * 255.0).astype(np.uint8)
        lab = cv2.cvtColor(u8, cv2.COLOR_RGB2LAB).astype(np.float64) / 255.0
        lum = lab[..., 0]
        chroma = np.hypot(lab[..., 1], lab[..., 2])
        denom = np.hypot(chroma, lum)
        sat = np.divide(chroma, denom, out=np.zeros_like(chroma), where=denom > 0)
        mean_c = chroma.mean()
        if np.ptp(chroma) == 0:
            chroma_std = 0.0
        else:
            ratio = np.divide(mean_c, chroma, out=np.ones_like(chroma), where=chroma > 0)
            chroma_std = float(np.sqrt(np.mean(np.abs(1.0 - ratio**2))))
        contrast = _percentile_spread(lum, cfg.uciqe_percentile)
    else:
        raise ValueError(f"unknown UCIQE variant {cfg.uciqe_variant!r}")
    return {"chroma_std": chroma_std, "contrast": contrast, "saturation": float(sat.mean())}


def uciqe(img, cfg: QualityConfig | None = None) -> float:
    cfg = cfg or QualityConfig()
    c = uciqe_components(img, cfg)
    return cfg.uciqe_c1 * c["chroma_std"] + cfg.uciqe_c2 * c["contrast"] + cfg.uciqe_c3 * c["saturation"]


# --------------------------------------------------------------------------
# UIQM
# --------------------------------------------------------------------------


def _trimmed_mean(x: np.ndarray, alpha: float) -> float:
    x = np.sort(x.ravel())
    k = x.size
    lo = int(math.ceil(alpha * k))
    hi = int(math.floor(alpha * k))
    kept = x[lo : k - hi]
    return float(kept.mean()) if kept.size else float(x.mean())


def uicm(img, alpha: float = 0.1) -> float:
    """Colorfulness from alpha-trimmed opponent-channel statistics (0-255 scale)."""
    rgb = _check_rgb(img) * 255.0
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    rg = r - g
    yb = (r + g) / 2.0 - b
    mu_rg = _trimmed_mean(rg, alpha)
    mu_yb = _trimmed_mean(yb, alpha)
    var_rg = float(np.mean((rg - mu_rg) ** 2))
    var_yb = float(np.mean((yb - mu_yb) ** 2))
    return -0.0268 * math.hypot(mu_rg, mu_yb) + 0.1586 * math.sqrt(var_rg + var_yb)


def _blocks(x: np.ndarray, size: int) -> np.ndarray:
    """Tile (H, W[, C]) into non-overlapping size x size blocks, shape (k2, k1, size*size[*C])."""
    k2, k1 = x.shape[0] // size, x.shape[1] // size
    if k1 == 0 or k2 == 0:
        raise ValueError(f"image {x.shape[:2]} is smaller than the {size}x{size} block")
    x = x[: k2 * size, : k1 * size]
    rest = x.shape[2:]
    x = x.reshape(k2, size, k1, size, *rest).swapaxes(1, 2)
    return x.reshape(k2, k1, -1)


def eme(x: np.ndarray, size: int, offset: float = 1.0) -> float:
    """Measure of enhancement: mean over blocks of 2*log((max + offset) / (min + offset)).

    ``offset`` keeps blocks whose minimum is zero (flat regions beside sharp
    edges) finite instead of dropping them.
    """
    blk = _blocks(x, size)
    mx = blk.max(axis=-1)
    mn = blk.min(axis=-1)
    return float(2.0 * np.log((mx + offset) / (mn + offset)).sum() / mx.size)


def _sobel_mag(ch: np.ndarray) -> np.ndarray:
    mag = np.hypot(ndimage.sobel(ch, axis=0), ndimage.sobel(ch, axis=1))
    peak = mag.max()
    return mag * (255.0 / peak) if peak > 0 else mag


def uism(img, block: int = 10, offset: float = 1.0) -> float:
    """Sharpness: luminance-weighted EME of each channel's edge-weighted image."""
    rgb = _check_rgb(img) * 255.0
    weights = (0.299, 0.587, 0.114)
    total = 0.0
    for c in range(3):
        ch = rgb[..., c]
        total += weights[c] * eme(_sobel_mag(ch) * ch, block, offset)
    return total


def _plip_sub(a, b):
    return PLIP_K * (a - b) / (PLIP_K - b)


def _plip_add(a, b):
    return a + b - a * b / PLIP_GAMMA


def uiconm(img, block: int = 10, variant: str = "panetta") -> float:
    """Contrast: logAMEE of block max/min ratios."""
    rgb = _check_rgb(img) * 255.0
    if variant == "panetta":
        lum = rgb @ np.array([0.299, 0.587, 0.114])
        blk = _blocks(lum, block)
        mx, mn = blk.max(axis=-1), blk.min(axis=-1)
        top, bot = _plip_sub(mx, mn), _plip_add(mx, mn)
    elif variant == "rgb_blocks":
        blk = _blocks(rgb, block)
        mx, mn = blk.max(axis=-1), blk.min(axis=-1)
        top, bot = mx - mn, mx + mn
    else:
        raise ValueError(f"unknown UIQM variant {variant!r}")
    ok = (top > 0) & (bot > 0)
    rho = np.zeros_like(mx)
    rho[ok] = top[ok] / bot[ok]
    terms = np.zeros_like(mx)
    terms[ok] = rho[ok] * np.log(rho[ok])
    return float(-terms.sum() / mx.size)


def uiqm_components(img, cfg: QualityConfig | None = None) -> dict:
    cfg = cfg or QualityConfig()
    return {
        "uicm": uicm(img, cfg.uiqm_trim),
        "uism": uism(img, cfg.uiqm_block, cfg.uiqm_eme_offset),
        "uiconm": uiconm(img, cfg.uiqm_block, cfg.uiqm_variant),
    }


def uiqm(img, cfg: QualityConfig | None = None) -> float:
    cfg = cfg or QualityConfig()
    c = uiqm_components(img, cfg)
    return cfg.uiqm_c1 * c["uicm"] + cfg.uiqm_c2 * c["uism"] + cfg.uiqm_c3 * c["uiconm"]


# --------------------------------------------------------------------------
# Batch evaluation
# --------------------------------------------------------------------------

MEAN_ID = "__mean__"


@dataclass
class MetricReport:
    rows: list[dict]
    has_truth: bool
    metadata: dict = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    @property
    def columns(self) -> list[str]:
        cols = ["image_id"]
        if self.has_truth:
            cols += ["psnr", "ssim"]
        return cols + ["uciqe", "uiqm"]

    @property
    def means(self) -> dict:
        out = {}
        for col in self.columns[1:]:
            vals = [r[col] for r in self.rows]
            out[col] = float(np.mean(vals)) if vals else math.nan
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.columns)
        for r in self.rows:
            writer.writerow([r["image_id"]] + [_fmt(r[c]) for c in self.columns[1:]])
        m = self.means
        writer.writerow([MEAN_ID] + [_fmt(m[c]) for c in self.columns[1:]])
        return buf.getvalue()

    def write(self, out_dir) -> Path:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        path = out_dir / "report.csv"
        path.write_text(self.to_csv())
        meta = dict(self.metadata, warnings=self.warnings)
        (out_dir / "report.meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
        return path

    def format_table(self) -> str:
        cols = self.columns
        w = max([len(cols[0]), len(MEAN_ID)] + [len(r["image_id"]) for r in self.rows])
        lines = [f"{cols[0]:<{w}}  " + "  ".join(f"{c:>10}" for c in cols[1:])]
        for r in self.rows + [dict(self.means, image_id=MEAN_ID)]:
            lines.append(f"{r['image_id']:<{w}}  " + "  ".join(f"{r[c]:>10.4f}" for c in cols[1:]))
        return "\n".join(lines)


def _fmt(v: float) -> str:
    return repr(float(v))


def read_report_csv(path) -> tuple[list[dict], dict]:
    """Parse a report.csv back into (rows, mean_row)."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    parsed = [{k: (v if k == "image_id" else float(v)) for k, v in r.items()} for r in rows]
    means = [r for r in parsed if r["image_id"] == MEAN_ID]
    return [r for r in parsed if r["image_id"] != MEAN_ID], (means[0] if means else {})


def config_hash(cfg) -> str:
    blob = json.dumps(asdict(cfg), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def evaluate(
    outputs_dir,
    truth_dir=None,
    cfg: QualityConfig | None = None,
    method: str = "",
    dataset: str = "",
    run_config_hash: str | None = None,
) -> MetricReport:
    """Score every image under ``outputs_dir``; rows sorted by image id (file stem)."""
    cfg = cfg or QualityConfig()
    for d in (outputs_dir, truth_dir):
        if d is not None and not Path(d).is_dir():
            raise FileNotFoundError(f"not a directory: {d}")
    outputs = {p.stem: p for p in list_images(outputs_dir, recursive=False)}
    warnings = []
    truths = None
    if truth_dir is not None:
        truths = {p.stem: p for p in list_images(truth_dir, recursive=False)}
        missing = sorted(set(outputs) - set(truths))
        extra = sorted(set(truths) - set(outputs))
        if missing:
            warnings.append(f"no ground truth for: {', '.join(missing)}")
        if extra:
            warnings.append(f"ground truth without output: {', '.join(extra)}")
        for w in warnings:
            log.warning(w)
    rows = []
    for stem in sorted(outputs):
        if truths is not None and stem not in truths:
            continue
        img = read_rgb(outputs[stem])
        row = {"image_id": stem}
        if truths is not None:
            ref = read_rgb(truths[stem])
            if ref.shape != img.shape:
                warnings.append(f"{stem}: shape {img.shape} differs from ground truth {ref.shape}; skipped")
                log.warning(warnings[-1])
                continue
            row["psnr"] = psnr(img, ref)
            row["ssim"] = ssim(img, ref, window=cfg.ssim_window, sigma=cfg.ssim_sigma)
        row["uciqe"] = uciqe(img, cfg)
        row["uiqm"] = uiqm(img, cfg)
        rows.append(row)
    meta = {
        "method": method,
        "dataset": dataset,
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        "config_hash": run_config_hash or config_hash(cfg),
    }
    return MetricReport(rows=rows, has_truth=truths is not None, metadata=meta, warnings=warnings)
