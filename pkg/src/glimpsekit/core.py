"""Foundational numeric types: images, glimpse geometry, categorical
distributions, masked embeddings, and a seedable deterministic RNG.

Conventions used throughout the package:

- images are 2-D float64 arrays with values in [0, 1], row-major;
- a glimpse is a contiguous g x g patch anchored at the top-left pixel
  (gx * s, gy * s) of a stride-s grid, always fully inside the image;
- entropies are in nats.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class ConfigError(ValueError):
    """A configuration value is invalid or inconsistent."""


class InconsistentHistoryError(ValueError):
    """A glimpse history matches no entry of a finite world."""


class NumericError(ValueError):
    """A numeric result is unusable (NaN, underflow, ...)."""


class StorageError(RuntimeError):
    """An image store cannot provide a requested item."""


class ArtifactHashError(RuntimeError):
    """A pipeline artifact does not match its recorded provenance."""


class SeededRng:
    """Deterministic random source: same seed, same stream, everywhere.

    Thin wrapper over numpy's PCG64 so that every stochastic operation in
    the package draws from an explicitly seeded generator.  Instances are
    single-owner: share the seed, not the object.
    """

    def __init__(self, seed: int):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.gen = np.random.Generator(np.random.PCG64(self.seed))

    def derive(self, tag: int) -> "SeededRng":
        """Child generator with seed = seed XOR tag (used per image id)."""
        return SeededRng(self.seed ^ (int(tag) & 0xFFFFFFFFFFFFFFFF))

    def __repr__(self):
        return f"SeededRng(seed={self.seed})"


@dataclass(frozen=True)
class Image:
    """A grayscale image: H x W float64 pixels in [0, 1]."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.ascontiguousarray(self.pixels, dtype=np.float64)
        if px.ndim != 2:
            raise ValueError(f"image must be 2-D, got shape {px.shape}")
        if px.size == 0:
            raise ValueError("image must be non-empty")
        if px.min() < 0.0 or px.max() > 1.0:
            raise ValueError("pixel values must lie in [0, 1]")
        px.flags.writeable = False
        object.__setattr__(self, "pixels", px)

    @property
    def h(self) -> int:
        return self.pixels.shape[0]

    @property
    def w(self) -> int:
        return self.pixels.shape[1]


@dataclass(frozen=True)
class GlimpseLocation:
    """Grid cell (gx, gy) of a stride-s grid of g x g glimpses.

    The resolved pixel anchor (top-left of the patch) is (gx*s, gy*s);
    the patch must lie fully inside any image it is applied to.
    """

    gx: int
    gy: int
    g: int
    s: int

    def __post_init__(self):
        if self.gx < 0 or self.gy < 0:
            raise ValueError("grid indices must be non-negative")
        if self.g < 1 or self.s < 1:
            raise ValueError("glimpse size and stride must be positive")

    @property
    def ax(self) -> int:
        """Pixel column of the patch's top-left corner."""
        return self.gx * self.s

    @property
    def ay(self) -> int:
        """Pixel row of the patch's top-left corner."""
        return self.gy * self.s

    def pixel_indices(self, width: int) -> np.ndarray:
        """Flat row-major indices of the g x g pixels this glimpse covers."""
        rows = np.arange(self.ay, self.ay + self.g)
        cols = np.arange(self.ax, self.ax + self.g)
        return (rows[:, None] * width + cols[None, :]).ravel()


class GlimpseGrid:
    """The design set L: every in-bounds glimpse location for (H, W, g, s)."""

    def __init__(self, h: int, w: int, g: int, s: int):
        if g < 1 or s < 1:
            raise ConfigError("glimpse size and stride must be positive")
        if g > h or g > w:
            raise ConfigError(f"glimpse size {g} exceeds image dims {h}x{w}")
        self.h, self.w, self.g, self.s = h, w, g, s
        self.nx = (w - g) // s + 1
        self.ny = (h - g) // s + 1
        self.locations = tuple(
            GlimpseLocation(gx, gy, g, s)
            for gy in range(self.ny)
            for gx in range(self.nx)
        )

    def __len__(self):
        return len(self.locations)

    def __iter__(self):
        return iter(self.locations)

    def __eq__(self, other):
        return (
            isinstance(other, GlimpseGrid)
            and (self.h, self.w, self.g, self.s) == (other.h, other.w, other.g, other.s)
        )

    def index_of(self, loc: GlimpseLocation) -> int:
        """Row-major index of a location in the grid."""
        if loc.g != self.g or loc.s != self.s:
            raise ValueError("location geometry does not match grid")
        if not (0 <= loc.gx < self.nx and 0 <= loc.gy < self.ny):
            raise ValueError(f"location ({loc.gx},{loc.gy}) outside {self.nx}x{self.ny} grid")
        return loc.gy * self.nx + loc.gx

    def location(self, index: int) -> GlimpseLocation:
        return self.locations[index]

    def __repr__(self):
        return f"GlimpseGrid({self.h}x{self.w}, g={self.g}, s={self.s}, {self.nx}x{self.ny})"


@dataclass(frozen=True)
class GlimpseHistory:
    """Ordered (location, patch) pairs observed so far.  Immutable; use
    ``append`` to extend."""

    steps: tuple = ()

    def append(self, loc: GlimpseLocation, patch: np.ndarray) -> "GlimpseHistory":
        return GlimpseHistory(self.steps + ((loc, patch),))

    @property
    def locations(self) -> list:
        return [loc for loc, _ in self.steps]

    @property
    def patches(self) -> list:
        return [patch for _, patch in self.steps]

    def __len__(self):
        return len(self.steps)


EMPTY_HISTORY = GlimpseHistory()


@dataclass(frozen=True)
class Categorical:
    """Normalized probability vector over class labels."""

    probs: np.ndarray

    def __post_init__(self):
        p = np.ascontiguousarray(self.probs, dtype=np.float64)
        if p.ndim != 1 or p.size == 0:
            raise ValueError("probs must be a non-empty vector")
        if p.min() < 0.0:
            raise ValueError("probabilities must be non-negative")
        if abs(p.sum() - 1.0) > 1e-9:
            raise ValueError(f"probabilities must sum to 1, got {p.sum()!r}")
        p.flags.writeable = False
        object.__setattr__(self, "probs", p)

    @property
    def k(self) -> int:
        return self.probs.size


@dataclass(frozen=True)
class MaskedEmbedding:
    """Value/mask channel pair encoding which pixels a history observed.

    ``mask`` is 1 exactly on pixels covered by some glimpse; ``value`` is
    the image there and 0 elsewhere.  Shape (H, W) each.
    """

    value: np.ndarray
    mask: np.ndarray

    def features(self) -> np.ndarray:
        """Flattened [value; mask] vector of length 2*H*W."""
        return np.concatenate([self.value.ravel(), self.mask.ravel()])


def fovea(image: Image, loc: GlimpseLocation) -> np.ndarray:
    """Extract the g x g patch anchored at ``loc``.  Pure; copies pixels.

    Raises ValueError if the patch would leave the image.
    """
    g = loc.g
    if loc.ay + g > image.h or loc.ax + g > image.w:
        raise ValueError(
            f"glimpse at ({loc.gx},{loc.gy}) with g={g}, s={loc.s} "
            f"exceeds image bounds {image.h}x{image.w}"
        )
    return image.pixels[loc.ay : loc.ay + g, loc.ax : loc.ax + g].copy()


def fovea_multi(image: Image, locs) -> list:
    """Apply ``fovea`` to each location, preserving order."""
    return [fovea(image, loc) for loc in locs]


def history_from(image: Image, locs) -> GlimpseHistory:
    """Build a history by extracting every patch in ``locs`` from ``image``."""
    hist = EMPTY_HISTORY
    for loc in locs:
        hist = hist.append(loc, fovea(image, loc))
    return hist


def footprint_mask(h: int, w: int, locs) -> np.ndarray:
    """Boolean (H, W) union of the patch footprints of ``locs``."""
    mask = np.zeros((h, w), dtype=bool)
    for loc in locs:
        if loc.ay + loc.g > h or loc.ax + loc.g > w:
            raise ValueError(f"glimpse at ({loc.gx},{loc.gy}) exceeds {h}x{w} image")
        mask[loc.ay : loc.ay + loc.g, loc.ax : loc.ax + loc.g] = True
    return mask


def masked_embedding(image: Image, locs) -> MaskedEmbedding:
    """Value/mask embedding of the pixels covered by ``locs``.

    Invariant to permutations and duplications of the location list.
    """
    mask = footprint_mask(image.h, image.w, locs)
    maskf = mask.astype(np.float64)
    return MaskedEmbedding(value=image.pixels * maskf, mask=maskf)


def entropy_rows(probs: np.ndarray) -> np.ndarray:
    """Shannon entropy in nats of each row of a (B, K) probability array.

    Uses the 0*log(0) = 0 convention.  This is the single entropy code
    path for the whole package; the scalar ``entropy`` delegates here.
    """
    p = np.asarray(probs, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0.0, p * np.log(p), 0.0)
    return -terms.sum(axis=-1)


def entropy(c) -> float:
    """Shannon entropy (nats) of a categorical distribution.

    Accepts a ``Categorical`` or a raw probability vector; raw input is
    validated (non-negative, sums to 1 within 1e-9).
    """
    if isinstance(c, Categorical):
        p = c.probs
    else:
        p = np.ascontiguousarray(c, dtype=np.float64)
        if p.ndim != 1 or p.min() < 0.0 or abs(p.sum() - 1.0) > 1e-9:
            raise ValueError("entropy requires a normalized probability vector")
    return float(entropy_rows(p[None, :])[0])
