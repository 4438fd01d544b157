"""A finite synthetic image world ("GlyphWorld") with exact oracles.

The world is an exhaustive list of (label, image, probability) entries, so
the label posterior and the image-completion distribution conditioned on
any glimpse history are computable exactly by enumeration.  Generated
worlds place class-specific glyph blobs on a flat background, jitter them
per variant, add per-variant dither, and stamp a "confuser" region that is
pixel-identical across every entry (guaranteeing that uninformative
glimpse locations exist).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import json
import numpy as np

from .core import (
    Categorical,
    ConfigError,
    GlimpseGrid,
    GlimpseHistory,
    Image,
    InconsistentHistoryError,
    SeededRng,
)
from . import storage

MATCH_TOL = 1e-9  # absorbs float32 round-trips through the bank format


@dataclass
class WorldConfig:
    k: int = 10                 # classes
    m: int = 4                  # variants per class
    h: int = 32
    w: int = 32
    g: int = 8
    s: int = 4
    blobs: int = 3              # glyph blobs per class template
    blob_size: int = 7
    jitter: int = 1             # per-variant blob displacement, pixels
    noise: float = 0.08         # per-variant dither amplitude
    confuser: tuple = None      # (x0, y0, width, height); default = top-left cell
    twin_variant: bool = True   # duplicate the last variant across class pairs
    seed: int = 0

    def validate(self):
        if min(self.k, self.m, self.h, self.w, self.g, self.s, self.blobs, self.blob_size) < 1:
            raise ConfigError("all world dimensions must be positive")
        if self.g > min(self.h, self.w):
            raise ConfigError(f"glimpse size {self.g} exceeds image {self.h}x{self.w}")
        if (self.w - self.g) % self.s or (self.h - self.g) % self.s:
            # not fatal, but the trailing pixels would be unreachable
            pass
        if self.blob_size > min(self.h, self.w):
            raise ConfigError("blob larger than image")
        if self.jitter < 0 or self.noise < 0:
            raise ConfigError("jitter and noise must be non-negative")
        cx, cy, cw, ch = self.confuser_rect()
        if cx < 0 or cy < 0 or cx + cw > self.w or cy + ch > self.h:
            raise ConfigError(f"confuser region {(cx, cy, cw, ch)} outside image")

    def confuser_rect(self):
        if self.confuser is None:
            return (0, 0, self.g, self.g)
        return tuple(int(v) for v in self.confuser)


@dataclass(frozen=True)
class WorldEntry:
    label: int
    image: Image
    prob: float


class FiniteWorld:
    """Exhaustive (label, image, prob) triples plus the glimpse design grid."""

    def __init__(self, entries, k: int, grid: GlimpseGrid):
        if len(entries) < k:
            raise ConfigError("need at least one entry per class")
        probs = np.array([e.prob for e in entries], dtype=np.float64)
        if probs.min() < 0 or abs(probs.sum() - 1.0) > 1e-12:
            raise ConfigError("entry probabilities must be >= 0 and sum to 1")
        labels = {e.label for e in entries}
        if labels - set(range(k)) or len(labels) != k:
            raise ConfigError("every class in 0..k-1 must appear at least once")
        for e in entries:
            if (e.image.h, e.image.w) != (grid.h, grid.w):
                raise ConfigError("all entry images must share the grid dimensions")
        self.entries = tuple(entries)
        self.k = k
        self.grid = grid
        # stacked pixels for vectorized history matching
        self._stack = np.stack([e.image.pixels for e in entries])
        self._probs = probs
        self._labels = np.array([e.label for e in entries], dtype=np.int64)

    def __len__(self):
        return len(self.entries)

    def match_mask(self, hist: GlimpseHistory, tol: float = MATCH_TOL) -> np.ndarray:
        """Boolean mask of entries consistent with every glimpse in ``hist``."""
        ok = np.ones(len(self.entries), dtype=bool)
        for loc, patch in hist.steps:
            crop = self._stack[:, loc.ay : loc.ay + loc.g, loc.ax : loc.ax + loc.g]
            diff = np.abs(crop - patch[None]).reshape(len(self.entries), -1).max(axis=1)
            ok &= diff <= tol
        return ok


def build_world(cfg: WorldConfig) -> FiniteWorld:
    """Generate a GlyphWorld deterministically from its config seed."""
    cfg.validate()
    rng = SeededRng(cfg.seed)
    gen = rng.gen
    cx, cy, cw, ch = cfg.confuser_rect()
    confuser = gen.uniform(0.2, 0.8, size=(ch, cw))

    bs = cfg.blob_size
    def anchor_ok(x, y):
        # keep jittered blobs clear of the confuser so class signal survives
        jx0, jy0 = x - cfg.jitter, y - cfg.jitter
        jx1, jy1 = x + bs + cfg.jitter, y + bs + cfg.jitter
        return jx1 <= cx or jx0 >= cx + cw or jy1 <= cy or jy0 >= cy + ch

    # one dither field per variant index, shared by every class: background
    # pixels identify the variant but never the label, so class information
    # lives only in the glyph blobs
    dithers = [cfg.noise * gen.uniform(-1.0, 1.0, size=(cfg.h, cfg.w))
               for _ in range(cfg.m)]

    # blob anchor positions are shared by all classes; the class determines
    # only the pixel pattern inside each blob.  Background cells therefore
    # carry no class evidence at all (not even blob-absence evidence), so
    # the informative glimpse locations are the same small set everywhere.
    anchors = []
    tries = 0
    while len(anchors) < cfg.blobs:
        x = int(gen.integers(0, cfg.w - bs + 1))
        y = int(gen.integers(0, cfg.h - bs + 1))
        tries += 1
        if tries > 10000:
            raise ConfigError("cannot place glyph blobs outside the confuser region")
        if not anchor_ok(x, y):
            continue
        anchors.append((x, y))

    templates = [[gen.uniform(0.5, 1.0, size=(bs, bs)) for _ in range(cfg.blobs)]
                 for _ in range(cfg.k)]

    entries = []
    prob = 1.0 / (cfg.k * cfg.m)
    for k in range(cfg.k):
        patterns = templates[k]
        for m in range(cfg.m):
            img = dithers[m].copy()
            for (x, y), pat in zip(anchors, patterns):
                jx = x + int(gen.integers(-cfg.jitter, cfg.jitter + 1)) if cfg.jitter else x
                jy = y + int(gen.integers(-cfg.jitter, cfg.jitter + 1)) if cfg.jitter else y
                jx = min(max(jx, 0), cfg.w - bs)
                jy = min(max(jy, 0), cfg.h - bs)
                img[jy : jy + bs, jx : jx + bs] = pat
            img = np.clip(img, 0.0, 1.0)
            img[cy : cy + ch, cx : cx + cw] = confuser
            # snap to the float32 grid so GLB1 round-trips are bit-exact
            img = img.astype(np.float32).astype(np.float64)
            entries.append(WorldEntry(label=k, image=Image(img), prob=prob))

    if cfg.twin_variant and cfg.m >= 2:
        # make the last variant of every odd class a pixel copy of the last
        # variant of the preceding class: those images are genuinely
        # ambiguous (posterior 1/2 each even fully observed), which pins the
        # attainable accuracy below 1 and keeps convergence measurements off
        # the degenerate all-correct ceiling
        for k in range(1, cfg.k, 2):
            i = k * cfg.m + cfg.m - 1
            j = (k - 1) * cfg.m + cfg.m - 1
            entries[i] = WorldEntry(label=k, image=entries[j].image, prob=prob)

    grid = GlimpseGrid(cfg.h, cfg.w, cfg.g, cfg.s)
    return FiniteWorld(entries, cfg.k, grid)


def two_entry_pixel_world(h=8, w=8, g=2, s=2, pixel=(5, 5), background=0.5,
                          lo=0.2, hi=0.8) -> FiniteWorld:
    """Two equiprobable classes whose images differ in exactly one pixel.

    Only the glimpses covering ``pixel`` are informative; handy for
    constructed-separability tests and demos.
    """
    base = np.full((h, w), background)
    a = base.copy()
    b = base.copy()
    py, px = pixel
    a[py, px] = lo
    b[py, px] = hi
    grid = GlimpseGrid(h, w, g, s)
    entries = [
        WorldEntry(0, Image(a), 0.5),
        WorldEntry(1, Image(b), 0.5),
    ]
    return FiniteWorld(entries, 2, grid)


@dataclass(frozen=True)
class DatasetItem:
    id: int
    image: Image
    label: int


@dataclass
class LabeledDataset:
    items: list
    split: str
    k: int

    def __post_init__(self):
        ids = [it.id for it in self.items]
        if len(set(ids)) != len(ids):
            raise ConfigError(f"duplicate ids in split {self.split!r}")
        for it in self.items:
            if not (0 <= it.label < self.k):
                raise ConfigError(f"label {it.label} outside 0..{self.k - 1}")

    def __len__(self):
        return len(self.items)

    def subset(self, n: int) -> "LabeledDataset":
        return LabeledDataset(self.items[:n], self.split, self.k)


def sample_dataset(world: FiniteWorld, n: int, rng: SeededRng,
                   split: str = "train") -> LabeledDataset:
    """Draw n i.i.d. (label, image) pairs from the world's entry distribution."""
    items = []
    if n:
        idx = rng.gen.choice(len(world.entries), size=n, p=world._probs)
        items = [
            DatasetItem(id=i, image=world.entries[j].image, label=world.entries[j].label)
            for i, j in enumerate(idx)
        ]
    return LabeledDataset(items, split, world.k)


def exact_posterior(world: FiniteWorld, hist: GlimpseHistory,
                    tol: float = MATCH_TOL) -> Categorical:
    """Label posterior by enumeration under the exact-crop observation model."""
    ok = world.match_mask(hist, tol)
    total = world._probs[ok].sum() if ok.any() else 0.0
    if total <= 0.0:
        raise InconsistentHistoryError("glimpse history matches no world entry")
    probs = np.bincount(world._labels[ok], weights=world._probs[ok], minlength=world.k)
    return Categorical(probs / total)


def exact_completion(world: FiniteWorld, hist: GlimpseHistory,
                     tol: float = MATCH_TOL) -> list:
    """All entries consistent with ``hist`` as (Image, weight), renormalized."""
    ok = world.match_mask(hist, tol)
    total = world._probs[ok].sum() if ok.any() else 0.0
    if total <= 0.0:
        raise InconsistentHistoryError("glimpse history matches no world entry")
    return [
        (world.entries[i].image, world._probs[i] / total)
        for i in np.flatnonzero(ok)
    ]


def save_world(world: FiniteWorld, stem: str):
    """Write ``<stem>.glb`` (entry images) and ``<stem>.json`` (manifest)."""
    images = np.stack([e.image.pixels for e in world.entries])
    storage.write_bank(stem + ".glb", images, world.grid.g, world.grid.s)
    manifest = {
        "k": world.k,
        "split": "world",
        "entries": [{"label": e.label, "prob": e.prob} for e in world.entries],
    }
    storage.atomic_write_text(stem + ".json", storage.canonical_json(manifest))


def load_world(stem: str) -> FiniteWorld:
    images, g, s, _, _ = storage.read_bank(stem + ".glb")
    with open(stem + ".json") as fh:
        manifest = json.load(fh)
    entries = [
        WorldEntry(label=int(m["label"]), image=Image(np.clip(img, 0.0, 1.0)), prob=float(m["prob"]))
        for m, img in zip(manifest["entries"], images)
    ]
    grid = GlimpseGrid(images.shape[1], images.shape[2], g, s)
    return FiniteWorld(entries, int(manifest["k"]), grid)


def save_dataset(ds: LabeledDataset, stem: str, g: int, s: int):
    images = np.stack([it.image.pixels for it in ds.items]) if ds.items else np.zeros((0, 1, 1))
    storage.write_bank(stem + ".glb", images, g, s)
    n = max(len(ds.items), 1)
    manifest = {
        "k": ds.k,
        "split": ds.split,
        "entries": [
            {"id": it.id, "label": it.label, "prob": 1.0 / n} for it in ds.items
        ],
    }
    storage.atomic_write_text(stem + ".json", storage.canonical_json(manifest))


def load_dataset(stem: str) -> LabeledDataset:
    images, _, _, _, _ = storage.read_bank(stem + ".glb")
    with open(stem + ".json") as fh:
        manifest = json.load(fh)
    items = [
        DatasetItem(id=int(m["id"]), image=Image(np.clip(img, 0.0, 1.0)), label=int(m["label"]))
        for m, img in zip(manifest["entries"], images)
    ]
    return LabeledDataset(items, manifest["split"], int(manifest["k"]))
