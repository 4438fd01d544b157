"""Sequential experimental design over glimpse locations.

At each step the expected posterior entropy (EPE) of every candidate
location is estimated by averaging the classifier's output entropy over
sampled image completions, with every patch (history and candidate)
re-extracted from each completion.  The argmin location is taken, its
true glimpse observed, and the process repeats, yielding a near-optimal
glimpse sequence for one image.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .core import (
    ConfigError,
    EMPTY_HISTORY,
    GlimpseGrid,
    GlimpseHistory,
    GlimpseLocation,
    Image,
    NumericError,
    SeededRng,
    entropy_rows,
    footprint_mask,
    fovea,
    history_from,
)
from .avp import MaskedLinearAvp
from . import storage


@dataclass
class EpeMap:
    """Per-location EPE estimates on the design grid (nats)."""

    values: np.ndarray   # (ny, nx), row-major over gy then gx
    counts: np.ndarray   # (ny, nx) Monte Carlo sample counts
    t: int               # history length at evaluation time
    grid: GlimpseGrid

    def __post_init__(self):
        if self.values.shape != (self.grid.ny, self.grid.nx):
            raise ValueError(f"map shape {self.values.shape} does not match grid {self.grid}")


def _completion_stack(completions) -> np.ndarray:
    if isinstance(completions, np.ndarray):
        return completions
    return np.stack([c.pixels if isinstance(c, Image) else np.asarray(c, dtype=np.float64)
                     for c in completions])


def estimate_epe(avp, completions, hist: GlimpseHistory, candidate: GlimpseLocation,
                 weights=None) -> float:
    """Expected posterior entropy of taking ``candidate`` after ``hist``.

    Every location in hist + candidate is re-foveated on each completion
    image; the classifier entropy is averaged with ``weights`` (uniform
    when None, i.e. the plain Monte Carlo estimator).
    """
    stack = _completion_stack(completions)
    if stack.shape[0] == 0:
        raise ValueError("need at least one completion")
    locs = hist.locations + [candidate]
    if hasattr(avp, "probs"):
        # batched path: identical observations as per-completion histories,
        # since every patch is re-extracted from the same completion image
        m, h, w = stack.shape
        mask = footprint_mask(h, w, locs).ravel().astype(np.float64)
        probs = avp.probs(stack.reshape(m, -1) * mask, mask[None, :])
        ents = entropy_rows(probs)
    else:
        ents = np.empty(stack.shape[0])
        for n in range(stack.shape[0]):
            h = history_from(Image(np.clip(stack[n], 0.0, 1.0)), locs)
            ents[n] = entropy_rows(avp.classify(h).probs[None])[0]
    if weights is None:
        return float(ents.mean())
    weights = np.asarray(weights, dtype=np.float64)
    return float(weights @ ents)


def _epe_map_linear(avp: MaskedLinearAvp, stack: np.ndarray, hist: GlimpseHistory,
                    grid: GlimpseGrid, weights) -> np.ndarray:
    """Vectorized EPE map for the linear model.

    Candidate logits decompose into a shared history term plus the
    contribution of the candidate's newly observed pixels, so the grid
    search costs one small GEMM per candidate.
    """
    m, h, w = stack.shape
    p = h * w
    flat = stack.reshape(m, p)
    a_val, a_mask = avp.a[:, :p], avp.a[:, p:]
    base_mask = footprint_mask(h, w, hist.locations).ravel()
    base_vals = flat * base_mask
    base_logits = base_vals @ a_val.T + (a_mask[:, base_mask].sum(axis=1) + avp.b)
    if weights is None:
        weights = np.full(m, 1.0 / m)
    out = np.empty(len(grid))
    for ci, loc in enumerate(grid.locations):
        new = loc.pixel_indices(w)
        new = new[~base_mask[new]]
        if new.size:
            logits = base_logits + flat[:, new] @ a_val[:, new].T + a_mask[:, new].sum(axis=1)
        else:
            logits = base_logits
        zs = logits - logits.max(axis=1, keepdims=True)
        e = np.exp(zs)
        probs = e / e.sum(axis=1, keepdims=True)
        out[ci] = weights @ entropy_rows(probs)
    return out


def epe_map(avp, completions, hist: GlimpseHistory, grid: GlimpseGrid,
            weights=None) -> EpeMap:
    """EPE at every grid location, reusing one completion set (common
    random numbers across candidates)."""
    stack = _completion_stack(completions)
    if isinstance(avp, MaskedLinearAvp):
        flat = _epe_map_linear(avp, stack, hist, grid, weights)
    else:
        flat = np.array([
            estimate_epe(avp, stack, hist, loc, weights) for loc in grid.locations
        ])
    values = flat.reshape(grid.ny, grid.nx)
    counts = np.full((grid.ny, grid.nx), stack.shape[0], dtype=np.int64)
    return EpeMap(values=values, counts=counts, t=len(hist), grid=grid)


def select_location(m: EpeMap) -> GlimpseLocation:
    """Argmin of the map; ties broken by smallest row-major grid index."""
    flat = m.values.ravel()
    if flat.size == 0:
        raise ValueError("empty EPE map")
    if np.isnan(flat).any():
        raise NumericError("EPE map contains NaN")
    return m.grid.location(int(np.argmin(flat)))


@dataclass
class SupervisionRecord:
    """One image's annotation: T ordered glimpse locations and their kind."""

    id: int
    kind: str
    locs: list
    maps: list = None

    @property
    def t(self) -> int:
        return len(self.locs)


def annotate_sequence(image: Image, t_steps: int, avp, completer, grid: GlimpseGrid,
                      n_completions: int, rng: SeededRng, image_id: int = 0,
                      keep_maps: bool = False, kind: str = "nogs") -> SupervisionRecord:
    """Greedy sequential design: per step, sample completions, build the
    EPE map, take its argmin, and observe the true glimpse there."""
    if t_steps < 1:
        raise ValueError("t_steps must be >= 1")
    hist = EMPTY_HISTORY
    locs = []
    maps = [] if keep_maps else None
    for step in range(t_steps):
        try:
            comps, weights = completer.complete(image, hist, n_completions, rng)
            m = epe_map(avp, comps, hist, grid, weights)
        except Exception as exc:
            raise RuntimeError(f"annotation failed at step {step + 1}: {exc}") from exc
        loc = select_location(m)
        locs.append(loc)
        hist = hist.append(loc, fovea(image, loc))
        if keep_maps:
            maps.append(m)
    return SupervisionRecord(id=image_id, kind=kind, locs=locs, maps=maps)


@dataclass
class HeuristicSaliency:
    """Image-independent location distribution log p(l) = C - EPE(l)/gamma."""

    log_probs: np.ndarray  # (ny, nx)
    inv_gamma: float
    c: float
    grid: GlimpseGrid

    def sample(self, t_steps: int, rng: SeededRng) -> list:
        p = np.exp(self.log_probs.ravel())
        idx = rng.gen.choice(p.size, size=t_steps, p=p / p.sum())
        return [self.grid.location(int(i)) for i in idx]


def heuristic_saliency(avp, completer, grid: GlimpseGrid, inv_gamma: float,
                       n_completions: int, rng: SeededRng) -> HeuristicSaliency:
    """Tempered softmin of the empty-history EPE map."""
    if inv_gamma <= 0:
        raise ValueError("inverse temperature must be positive")
    comps, weights = completer.complete(None, EMPTY_HISTORY, n_completions, rng)
    m = epe_map(avp, comps, EMPTY_HISTORY, grid, weights)
    scaled = -inv_gamma * m.values.ravel()
    hi = scaled.max()
    c = -(hi + np.log(np.exp(scaled - hi).sum()))
    return HeuristicSaliency(log_probs=(scaled + c).reshape(m.values.shape),
                             inv_gamma=inv_gamma, c=float(c), grid=grid)


def _annotate_chunk(args):
    items, t_steps, avp, completer, grid, n_completions, base_seed, keep_maps = args
    rng = SeededRng(base_seed)
    out = []
    for image_id, image in items:
        out.append(annotate_sequence(image, t_steps, avp, completer, grid, n_completions,
                                     rng.derive(image_id), image_id=image_id,
                                     keep_maps=keep_maps))
    return out


def make_supervision_set(dataset, kind: str, count: int, t_steps: int, grid: GlimpseGrid,
                         avp=None, completer=None, n_completions: int = 200,
                         rng: SeededRng = None, inv_gamma: float = 1.0,
                         fixed_locs=None, keep_maps: bool = False,
                         workers: int = 1) -> list:
    """Annotate the first ``count`` images of ``dataset``.

    kind="nogs" runs the sequential design per image (parallelizable, one
    derived seed per image id); kind="heuristic" draws T i.i.d. locations
    per image from the empty-history saliency; kind="handcrafted" applies
    one fixed location list to every image.
    """
    if count > len(dataset):
        raise ConfigError(f"count {count} exceeds dataset size {len(dataset)}")
    items = dataset.items[:count]

    if kind == "handcrafted":
        if fixed_locs is None or len(fixed_locs) != t_steps:
            raise ConfigError("handcrafted supervision needs exactly T locations")
        locs = [loc if isinstance(loc, GlimpseLocation)
                else GlimpseLocation(int(loc[0]), int(loc[1]), grid.g, grid.s)
                for loc in fixed_locs]
        for loc in locs:
            grid.index_of(loc)  # bounds check
        return [SupervisionRecord(id=it.id, kind="hgs", locs=list(locs)) for it in items]

    if kind == "heuristic":
        sal = heuristic_saliency(avp, completer, grid, inv_gamma, n_completions, rng)
        tag = f"h{inv_gamma:g}"
        return [
            SupervisionRecord(id=it.id, kind=tag,
                              locs=sal.sample(t_steps, rng.derive(it.id)))
            for it in items
        ]

    if kind != "nogs":
        raise ConfigError(f"unknown supervision kind {kind!r}")

    if workers > 1 and len(items) > 1:
        chunks = np.array_split(np.arange(len(items)), workers)
        args = [
            ([(items[i].id, items[i].image) for i in chunk], t_steps, avp, completer,
             grid, n_completions, rng.seed, keep_maps)
            for chunk in chunks if len(chunk)
        ]
        records = []
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for part in pool.map(_annotate_chunk, args):
                records.extend(part)
        return records
    return [
        annotate_sequence(it.image, t_steps, avp, completer, grid, n_completions,
                          rng.derive(it.id), image_id=it.id, keep_maps=keep_maps)
        for it in items
    ]


def save_records(records, path):
    """Supervision records as JSON lines: {"id","kind","t","locs"}."""
    lines = []
    for r in records:
        lines.append(storage.canonical_json(
            {"id": r.id, "kind": r.kind, "t": r.t,
             "locs": [[loc.gx, loc.gy] for loc in r.locs]}
        ))
    storage.atomic_write_text(path, "\n".join(lines) + ("\n" if lines else ""))


def load_records(path, grid: GlimpseGrid) -> list:
    records = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            d = json.loads(line)
            locs = [GlimpseLocation(int(gx), int(gy), grid.g, grid.s) for gx, gy in d["locs"]]
            if len(locs) != d["t"]:
                raise ValueError(f"record {d['id']}: t={d['t']} but {len(locs)} locations")
            records.append(SupervisionRecord(id=int(d["id"]), kind=d["kind"], locs=locs))
    return records


def export_heatmap(m: EpeMap, csv_path, pgm_path):
    """Write the map as a CSV of raw values and a normalized P5 PGM
    (darker = lower EPE; constant maps render all-white)."""
    rows = ["gx,gy,epe,n"]
    for gy in range(m.grid.ny):
        for gx in range(m.grid.nx):
            rows.append(f"{gx},{gy},{float(m.values[gy, gx])!r},{int(m.counts[gy, gx])}")
    storage.atomic_write_text(csv_path, "\n".join(rows) + "\n")

    lo, hi = float(m.values.min()), float(m.values.max())
    if hi > lo:
        scaled = np.rint(255.0 * (m.values - lo) / (hi - lo))
    else:
        scaled = np.full_like(m.values, 255.0)
    body = scaled.clip(0, 255).astype(np.uint8).tobytes()
    header = f"P5\n{m.grid.nx} {m.grid.ny}\n255\n".encode("ascii")
    storage.atomic_write_bytes(pgm_path, header + body)


def read_heatmap_csv(path, grid: GlimpseGrid) -> EpeMap:
    values = np.zeros((grid.ny, grid.nx))
    counts = np.zeros((grid.ny, grid.nx), dtype=np.int64)
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "gx,gy,epe,n":
            raise ValueError(f"unexpected heatmap CSV header {header!r}")
        for line in fh:
            gx, gy, epe, n = line.strip().split(",")
            values[int(gy), int(gx)] = float(epe)
            counts[int(gy), int(gx)] = int(n)
    return EpeMap(values=values, counts=counts, t=0, grid=grid)
