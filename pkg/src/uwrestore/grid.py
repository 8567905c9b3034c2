"""Comparison grids: one labeled column per method, one row per test image."""

from __future__ import annotations

import json
import logging
from pathlib import Path

from PIL import Image, ImageDraw, ImageFont
from PIL.PngImagePlugin import PngInfo

log = logging.getLogger(__name__)

BACKGROUND = (255, 255, 255)
PLACEHOLDER = (128, 128, 128)
LABEL_HEIGHT = 20
GAP = 4


def _tile(path, height: int, warnings: list) -> Image.Image:
    try:
        with Image.open(path) as im:
            im = im.convert("RGB")
            width = max(1, round(im.width * height / im.height))
            return im.resize((width, height), Image.BICUBIC)
    except (OSError, ValueError) as exc:
        warnings.append(f"{path}: {exc}; placeholder used")
        log.warning(warnings[-1])
        tile = Image.new("RGB", (height, height), PLACEHOLDER)
        draw = ImageDraw.Draw(tile)
        draw.line((0, 0, height - 1, height - 1), fill=(0, 0, 0))
        draw.line((0, height - 1, height - 1, 0), fill=(0, 0, 0))
        return tile


def emit_grid(columns, out_path, tile_height: int = 128) -> tuple[Path, list[str]]:
    """Compose ``[(label, [image paths...]), ...]`` into a PNG and return (path, warnings).

    Each (label, paths) entry becomes a column; the i-th path of every column
    lands in grid row i.  Labels are also stored verbatim in the PNG text chunk
    ``labels`` as a JSON list, and the layout in ``grid``.
    """
    columns = [(str(label), list(paths)) for label, paths in columns]
    if not columns:
        raise ValueError("no columns to draw")
    n_rows = max(len(p) for _, p in columns)
    warnings: list[str] = []
    tiles = [[_tile(p, tile_height, warnings) for p in paths] for _, paths in columns]
    font = ImageFont.load_default()
    col_w = []
    for (label, _), col in zip(columns, tiles):
        text_w = int(ImageDraw.Draw(Image.new("RGB", (1, 1))).textlength(label, font=font)) + 4
        col_w.append(max([t.width for t in col] + [text_w, 1]))
    width = sum(col_w) + GAP * (len(columns) + 1)
    height = LABEL_HEIGHT + n_rows * (tile_height + GAP) + GAP
    canvas = Image.new("RGB", (width, height), BACKGROUND)
    draw = ImageDraw.Draw(canvas)
    x = GAP
    for (label, _), col, w in zip(columns, tiles, col_w):
        draw.text((x + 2, 4), label, fill=(0, 0, 0), font=font)
        for r, tile in enumerate(col):
            canvas.paste(tile, (x + (w - tile.width) // 2, LABEL_HEIGHT + GAP + r * (tile_height + GAP)))
        x += w + GAP
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    info = PngInfo()
    info.add_text("labels", json.dumps([label for label, _ in columns]))
    info.add_text("grid", json.dumps({"rows": n_rows, "columns": len(columns)}))
    canvas.save(out_path, format="PNG", pnginfo=info)
    return out_path, warnings
