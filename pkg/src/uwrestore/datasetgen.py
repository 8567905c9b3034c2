"""Corpus manifests and construction of the domain-adapted paired dataset."""

from __future__ import annotations

import csv
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .formation import SceneSample, WaterParams, jitter_ambient, synthesize_underwater
from .imaging import hwc_to_tensor, list_images, read_depth, read_rgb, tensor_to_hwc, write_rgb
from .translation.model import LatentPair, TranslationBundle, decode, encode
from .translation.networks import pad_to_multiple

log = logging.getLogger(__name__)

PAIRS_COLUMNS = ("adapted_path", "truth_path", "source_id", "water_type", "style_id", "seed")
MANIFEST_COLUMNS = ("id", "image", "depth", "source", "split")


@dataclass(frozen=True)
class ManifestEntry:
    id: str
    image: Path
    depth: Path | None
    source: str
    split: str = "train"


@dataclass
class CorpusManifest:
    entries: list
    seed: int
    skipped: list = field(default_factory=list)  # (path, reason)

    def __len__(self):
        return len(self.entries)

    @property
    def skip_count(self) -> int:
        return len(self.skipped)

    def by_id(self) -> dict:
        return {e.id: e for e in self.entries}

    def split(self, tag: str) -> "CorpusManifest":
        return CorpusManifest([e for e in self.entries if e.split == tag], self.seed)

    def write(self, path) -> None:
        """Tab-separated, one entry per line: id, image, depth ('-' if none), source, split."""
        with open(path, "w") as fh:
            fh.write(f"# seed={self.seed}\n")
            fh.write("# " + "\t".join(MANIFEST_COLUMNS) + "\n")
            for e in self.entries:
                fh.write("\t".join([e.id, str(e.image), str(e.depth) if e.depth else "-", e.source, e.split]) + "\n")

    @classmethod
    def read(cls, path) -> "CorpusManifest":
        seed, entries = 0, []
        for line in Path(path).read_text().splitlines():
            if line.startswith("# seed="):
                seed = int(line.split("=", 1)[1])
            if not line.strip() or line.startswith("#"):
                continue
            id_, image, depth, source, split = line.split("\t")
            entries.append(ManifestEntry(id_, Path(image), None if depth == "-" else Path(depth), source, split))
        return cls(entries, seed)


def _find_depth(depth_dir: Path, stem: str):
    for p in sorted(depth_dir.glob(stem + ".*")):
        if p.is_file():
            return p
    return None


def _scan_root(root: Path, source: str):
    """Yield (id, image, depth) for one root; ``rgb/`` + ``depth/`` layouts are paired by stem."""
    rgb_dir, depth_dir = root / "rgb", root / "depth"
    if rgb_dir.is_dir() and depth_dir.is_dir():
        for img in list_images(rgb_dir):
            rel = img.relative_to(rgb_dir).with_suffix("")
            yield f"{source}/{rel.as_posix()}", img, _find_depth(depth_dir / rel.parent, rel.name)
    else:
        for img in list_images(root):
            yield f"{source}/{img.relative_to(root).with_suffix('').as_posix()}", img, None


def _parse_root(spec) -> tuple[str, Path]:
    # "tag=path" names the source explicitly; otherwise the directory name is used
    text = str(spec)
    if "=" in text and not Path(text).exists():
        tag, path = text.split("=", 1)
        return tag, Path(path)
    path = Path(text)
    return path.resolve().name, path


def build_manifest(roots, seed: int = 0, val_fraction: float = 0.0, check_decode: bool = True) -> CorpusManifest:
    """Scan image roots into a manifest; undecodable files are skipped and counted."""
    if isinstance(roots, (str, Path)):
        roots = [roots]
    if not 0.0 <= val_fraction < 1.0:
        raise ValueError("val_fraction must lie in [0, 1)")
    found, skipped = [], []
    for spec in roots:
        source, root = _parse_root(spec)
        if not source:
            raise ValueError(f"empty source tag for {root}")
        if not root.is_dir():
            raise FileNotFoundError(f"corpus root {root} is not a directory")
        for id_, img, depth in _scan_root(root, source):
            if check_decode:
                try:
                    read_rgb(img)
                    if depth is not None:
                        read_depth(depth)
                except Exception as exc:
                    skipped.append((img, f"{type(exc).__name__}: {exc}"))
                    continue
            found.append(ManifestEntry(id_, img, depth, source))
    if skipped:
        log.warning("skipped %d unreadable file(s)", len(skipped))
    if not found:
        raise ValueError(f"empty corpus: no readable images under {[str(r) for r in roots]}")
    found.sort(key=lambda e: e.id)
    order = np.random.default_rng(seed).permutation(len(found))
    n_val = int(round(val_fraction * len(found)))
    entries = [
        ManifestEntry(found[i].id, found[i].image, found[i].depth, found[i].source, "val" if rank < n_val else "train")
        for rank, i in enumerate(order)
    ]
    return CorpusManifest(entries, seed, skipped)


# --------------------------------------------------------------------------
# Synthetic generation
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SyntheticItem:
    """One (clean source, water type) combination; images are rendered on demand."""

    id: str
    entry: ManifestEntry
    params: WaterParams

    @property
    def source_id(self) -> str:
        return self.entry.id

    @property
    def water_type(self) -> str:
        return self.params.label

    def clean(self) -> np.ndarray:
        return read_rgb(self.entry.image)

    def sample(self) -> SceneSample:
        return SceneSample(self.clean(), read_depth(self.entry.depth), self.entry.id)

    def underwater(self) -> np.ndarray:
        return synthesize_underwater(self.sample(), self.params)


@dataclass
class SyntheticSet:
    items: list
    errors: list = field(default_factory=list)  # (entry id, message)

    def __len__(self):
        return len(self.items)


def _safe_name(text: str) -> str:
    return text.replace("/", "__").replace("\\", "__")


def generate_synthetic_set(
    manifest: CorpusManifest,
    water_types,
    seed: int = 0,
    assignment: str = "round_robin",
    ambient_jitter: float = 0.0,
) -> SyntheticSet:
    """Pair each RGB-D entry with water types.

    ``round_robin`` gives one water type per source (seeded starting offset),
    ``product`` gives every source every type.  Entries without depth are
    reported in ``errors`` and skipped.
    """
    water_types = list(water_types)
    if not water_types:
        raise ValueError("at least one water type is required")
    if assignment not in ("round_robin", "product"):
        raise ValueError(f"unknown assignment {assignment!r}")
    offset = int(np.random.default_rng(seed).integers(len(water_types)))
    items, errors = [], []
    for i, entry in enumerate(manifest.entries):
        if entry.depth is None:
            errors.append((entry.id, "missing depth map"))
            continue
        if assignment == "product":
            chosen = water_types
        else:
            chosen = [water_types[(i + offset) % len(water_types)]]
        for wp in chosen:
            if ambient_jitter > 0:
                wp = jitter_ambient(wp, np.random.default_rng([seed, i, water_types.index(wp)]), ambient_jitter)
            items.append(SyntheticItem(f"{_safe_name(entry.id)}__{wp.label}", entry, wp))
    if errors:
        log.warning("%d entr(ies) without depth skipped", len(errors))
    return SyntheticSet(items, errors)


def write_synthetic_set(synthetic: SyntheticSet, out_dir) -> Path:
    """Write underwater/ and clean/ PNGs plus synthetic.csv; returns the CSV path."""
    out = Path(out_dir)
    rows = []
    for item in synthetic.items:
        uw = out / "underwater" / f"{item.id}.png"
        clean = out / "clean" / f"{item.id}.png"
        write_rgb(uw, item.underwater())
        write_rgb(clean, item.clean())
        rows.append([uw.relative_to(out).as_posix(), clean.relative_to(out).as_posix(), item.source_id, item.water_type])
    path = out / "synthetic.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["underwater_path", "clean_path", "source_id", "water_type"])
        w.writerows(rows)
    if synthetic.errors:
        with open(out / "synthetic_errors.txt", "w") as fh:
            fh.writelines(f"{eid}\t{msg}\n" for eid, msg in synthetic.errors)
    return path


# --------------------------------------------------------------------------
# Domain-adapted pairs
# --------------------------------------------------------------------------


@dataclass
class AdaptedPair:
    adapted: np.ndarray | None
    truth: np.ndarray | None
    source_id: str
    water_type: str
    style_id: str
    adapted_path: Path | None = None
    truth_path: Path | None = None


def assign_styles(n_items: int, real: CorpusManifest, k: int, seed: int, stratify: bool = False) -> list:
    """Style image ids for each synthetic item, a function of (manifest, k, seed, index) only."""
    if k < 1:
        raise ValueError("k must be >= 1")
    ids = [e.id for e in real.entries]
    if len(ids) < k:
        raise ValueError(f"real manifest has {len(ids)} image(s), fewer than k={k}")
    groups = defaultdict(list)
    for e in real.entries:
        groups[e.source].append(e.id)
    tags = sorted(groups)
    out = []
    for i in range(n_items):
        rng = np.random.default_rng([seed, i])
        if not stratify or len(tags) == 1:
            out.append([ids[j] for j in rng.choice(len(ids), size=k, replace=False)])
            continue
        # cycle through a shuffled tag order, drawing without replacement inside each tag
        pools = {t: list(rng.permutation(groups[t])) for t in tags}
        order = [tags[j] for j in rng.permutation(len(tags))]
        picked, j = [], 0
        while len(picked) < k:
            tag = order[j % len(order)]
            if pools[tag]:
                picked.append(str(pools[tag].pop()))
            j += 1
        out.append(picked)
    return out


def _to_batch(img: np.ndarray, factor: int, device="cpu"):
    x = hwc_to_tensor(img)[None].to(device)
    h, w = x.shape[-2:]
    return pad_to_multiple(x, factor), (h, w)


@torch.no_grad()
def generate_adapted_dataset(
    bundle: TranslationBundle,
    synthetic: SyntheticSet,
    real: CorpusManifest,
    k: int = 6,
    seed: int = 0,
    stratify: bool = False,
    min_steps: int = 0,
    out_dir=None,
    keep_arrays: bool | None = None,
) -> list:
    """Translate every synthetic image with ``k`` sampled real styles.

    When ``out_dir`` is given, writes adapted/, truth/ and pairs.csv there and,
    unless ``keep_arrays`` is set, drops the image arrays from the returned pairs.
    """
    if bundle.step < min_steps:
        raise ValueError(f"translation bundle has {bundle.step} training steps, fewer than the required {min_steps}")
    styles = assign_styles(len(synthetic.items), real, k, seed, stratify)
    if keep_arrays is None:
        keep_arrays = out_dir is None
    entries = real.by_id()
    factor = bundle.cfg.downsample_factor
    device = next(bundle.parameters()).device
    style_cache: dict = {}
    bundle.eval()

    def style_of(style_id):
        if style_id not in style_cache:
            x, _ = _to_batch(read_rgb(entries[style_id].image), factor, device)
            style_cache[style_id] = encode(bundle, x, "R").style[0]
        return style_cache[style_id]

    out = Path(out_dir) if out_dir is not None else None
    rows, pairs = [], []
    for item, chosen in zip(synthetic.items, styles):
        truth = item.clean()
        x, (h, w) = _to_batch(item.underwater(), factor, device)
        content = encode(bundle, x, "S").content
        codes = torch.stack([style_of(s) for s in chosen])
        fakes = decode(bundle, LatentPair(content.expand(len(chosen), -1, -1, -1), codes), "R")[..., :h, :w]
        for style_id, fake in zip(chosen, fakes):
            adapted = np.clip(tensor_to_hwc(fake), 0.0, 1.0)
            pair = AdaptedPair(adapted, truth, item.source_id, item.water_type, style_id)
            if out is not None:
                name = f"{item.id}__{_safe_name(style_id)}.png"
                pair.adapted_path = out / "adapted" / name
                pair.truth_path = out / "truth" / name
                write_rgb(pair.adapted_path, adapted)
                write_rgb(pair.truth_path, truth)
                rows.append(
                    [
                        pair.adapted_path.relative_to(out).as_posix(),
                        pair.truth_path.relative_to(out).as_posix(),
                        item.source_id,
                        item.water_type,
                        style_id,
                        seed,
                    ]
                )
                if not keep_arrays:
                    pair.adapted = pair.truth = None
            pairs.append(pair)
    if out is not None:
        with open(out / "pairs.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(PAIRS_COLUMNS)
            w.writerows(rows)
    return pairs


def load_pairs(pairs_csv) -> list:
    """(adapted, truth) float arrays listed in a pairs.csv, paths relative to its directory."""
    pairs_csv = Path(pairs_csv)
    base = pairs_csv.parent
    out = []
    with open(pairs_csv, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append((read_rgb(base / row["adapted_path"]), read_rgb(base / row["truth_path"])))
    if not out:
        raise ValueError(f"{pairs_csv} lists no pairs")
    return out
