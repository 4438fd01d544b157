"""Hard visual attention network with partially supervised training.

A small recurrent network takes T glimpses of an image and classifies it.
Locations come from a categorical policy over the design grid.  On
unsupervised examples the location head is trained by REINFORCE on 0/1
classification reward with a learned per-step baseline; on supervised
examples the network is teacher-forced through a recorded glimpse
sequence and the location log-likelihood becomes an ordinary
differentiable loss.  All gradients are computed analytically with
hand-rolled backpropagation through time.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import ConfigError, GlimpseGrid, Image, SeededRng
from .optim import AdamState, adam_update

PARAM_ORDER = ("w_e", "b_e", "w_h", "w_x", "b_h", "w_l", "b_l",
               "w_c", "b_c", "w_b", "c_b", "h0")
HEAD_PARAMS = ("w_l", "b_l", "w_b", "c_b")


@dataclass
class TrainConfig:
    t: int = 5
    batch_size: int = 64
    lr: float = 1e-3
    lr_decay: float = 1.0         # per-epoch multiplicative decay
    sup_fraction: float = 0.5     # supervised share of each minibatch
    baseline_weight: float = 1.0
    epochs: int = 60
    eval_every: int = 1
    eval_episodes: int = 4
    reinforce_through_core: bool = False
    pretrain_epochs: int = 0      # phase 1: fixed location distribution
    pretrain_location_probs: object = None  # (n_loc,) table; None = uniform
    freeze_after_pretrain: bool = False

    def validate(self):
        if self.batch_size < 1 or self.t < 1 or self.epochs < 0:
            raise ConfigError("batch size and T must be >= 1, epochs >= 0")
        if not 0.0 <= self.sup_fraction <= 1.0:
            raise ConfigError("sup_fraction must lie in [0, 1]")


class AttentionParams:
    """All weights of the attention network, as named float64 arrays."""

    def __init__(self, k: int, grid: GlimpseGrid, d_e: int = 32, d_h: int = 64,
                 arrays: dict = None):
        self.k = k
        self.grid = grid
        self.d_e = d_e
        self.d_h = d_h
        g2 = grid.g * grid.g
        n_loc = len(grid)
        shapes = {
            "w_e": (d_e, g2 + 2), "b_e": (d_e,),
            "w_h": (d_h, d_h), "w_x": (d_h, d_e), "b_h": (d_h,),
            "w_l": (n_loc, d_h), "b_l": (n_loc,),
            "w_c": (k, d_h), "b_c": (k,),
            "w_b": (d_h,), "c_b": (1,),
            "h0": (d_h,),
        }
        if arrays is None:
            arrays = {name: np.zeros(shape) for name, shape in shapes.items()}
        for name, shape in shapes.items():
            a = np.asarray(arrays[name], dtype=np.float64).reshape(shape)
            if not np.isfinite(a).all():
                raise ValueError(f"parameter {name!r} contains non-finite values")
            setattr(self, name, a)

    @classmethod
    def init_random(cls, k: int, grid: GlimpseGrid, d_e: int = 32, d_h: int = 64,
                    rng: SeededRng = None) -> "AttentionParams":
        gen = rng.gen
        p = cls(k, grid, d_e, d_h)
        for name in ("w_e", "w_h", "w_x", "w_l", "w_c"):
            w = getattr(p, name)
            bound = 1.0 / np.sqrt(w.shape[1])
            w[...] = gen.uniform(-bound, bound, size=w.shape)
        return p

    def as_dict(self) -> dict:
        return {name: getattr(self, name) for name in PARAM_ORDER}

    def copy(self) -> "AttentionParams":
        return AttentionParams(self.k, self.grid, self.d_e, self.d_h,
                               {n: getattr(self, n).copy() for n in PARAM_ORDER})

    def zeros_like_grads(self) -> dict:
        return {name: np.zeros_like(getattr(self, name)) for name in PARAM_ORDER}

    @property
    def n_loc(self) -> int:
        return len(self.grid)


def _norm_coords(grid: GlimpseGrid) -> np.ndarray:
    """(n_loc, 2) table of grid coordinates normalized to [-1, 1]."""
    out = np.zeros((len(grid), 2))
    for i, loc in enumerate(grid.locations):
        out[i, 0] = 2.0 * loc.gx / (grid.nx - 1) - 1.0 if grid.nx > 1 else 0.0
        out[i, 1] = 2.0 * loc.gy / (grid.ny - 1) - 1.0 if grid.ny > 1 else 0.0
    return out


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def _sample_rows(probs: np.ndarray, gen) -> np.ndarray:
    cdf = np.cumsum(probs, axis=1)
    cdf[:, -1] = 1.0
    u = gen.random(probs.shape[0])
    return (u[:, None] < cdf).argmax(axis=1)


def _extract_patches(images: np.ndarray, loc_idx: np.ndarray, grid: GlimpseGrid) -> np.ndarray:
    """(B, g, g) patches at per-example grid indices."""
    b = images.shape[0]
    gx = loc_idx % grid.nx
    gy = loc_idx // grid.nx
    ax = gx * grid.s
    ay = gy * grid.s
    rr = ay[:, None, None] + np.arange(grid.g)[None, :, None]
    cc = ax[:, None, None] + np.arange(grid.g)[None, None, :]
    return images[np.arange(b)[:, None, None], rr, cc]


@dataclass
class Rollout:
    """Everything one forward pass produced (and backprop will need)."""

    h: np.ndarray            # (B, T+1, d_h) hidden states, h[:,0] = h0
    locs: np.ndarray         # (B, T) grid indices
    loc_logps: np.ndarray    # (B, T) log pi(l_t | h_{t-1})
    loc_probs: np.ndarray    # (B, T, n_loc)
    patches: np.ndarray      # (B, T, g*g)
    inputs: np.ndarray       # (B, T, g*g + 2)
    emb: np.ndarray          # (B, T, d_e)
    class_probs: np.ndarray  # (B, K)
    baselines: np.ndarray    # (B, T) from h_{t-1}
    mode: str


def rollout_batch(params: AttentionParams, images: np.ndarray, t_steps: int,
                  mode: str, forced: np.ndarray = None, rng: SeededRng = None,
                  location_probs: np.ndarray = None) -> Rollout:
    """Run the network for T steps on a batch of images.

    mode="sampled" draws locations from the policy (requires rng);
    mode="forced" follows the given (B, T) location indices and consumes
    no randomness; mode="external" samples from a fixed ``location_probs``
    table instead of the policy (used for pretraining).
    """
    if mode not in ("sampled", "forced", "external"):
        raise ValueError(f"unknown rollout mode {mode!r}")
    if (forced is not None) != (mode == "forced"):
        raise ValueError("forced locations must be supplied iff mode='forced'")
    grid = params.grid
    b = images.shape[0]
    g2 = grid.g * grid.g
    coords = _norm_coords(grid)

    h = np.empty((b, t_steps + 1, params.d_h))
    h[:, 0] = params.h0
    locs = np.empty((b, t_steps), dtype=np.int64)
    loc_logps = np.empty((b, t_steps))
    loc_probs = np.empty((b, t_steps, params.n_loc))
    patches = np.empty((b, t_steps, g2))
    inputs = np.empty((b, t_steps, g2 + 2))
    emb = np.empty((b, t_steps, params.d_e))
    baselines = np.empty((b, t_steps))

    if mode == "external":
        ext_cdf = np.cumsum(np.asarray(location_probs, dtype=np.float64))
        ext_cdf[-1] = 1.0

    hp = h[:, 0]
    for t in range(t_steps):
        logits = hp @ params.w_l.T + params.b_l
        lsm = _log_softmax(logits)
        pi = np.exp(lsm)
        if mode == "sampled":
            li = _sample_rows(pi, rng.gen)
        elif mode == "external":
            li = np.searchsorted(ext_cdf, rng.gen.random(b)).astype(np.int64)
        else:
            li = np.asarray(forced[:, t], dtype=np.int64)
            if li.min() < 0 or li.max() >= params.n_loc:
                raise ValueError("forced location index outside the design grid")
        locs[:, t] = li
        loc_probs[:, t] = pi
        loc_logps[:, t] = lsm[np.arange(b), li]
        baselines[:, t] = hp @ params.w_b + params.c_b[0]
        pat = _extract_patches(images, li, grid).reshape(b, g2)
        patches[:, t] = pat
        inputs[:, t, :g2] = pat
        inputs[:, t, g2:] = coords[li]
        e = np.tanh(inputs[:, t] @ params.w_e.T + params.b_e)
        emb[:, t] = e
        hp = np.tanh(hp @ params.w_h.T + e @ params.w_x.T + params.b_h)
        h[:, t + 1] = hp

    class_probs = np.exp(_log_softmax(hp @ params.w_c.T + params.b_c))
    return Rollout(h=h, locs=locs, loc_logps=loc_logps, loc_probs=loc_probs,
                   patches=patches, inputs=inputs, emb=emb, class_probs=class_probs,
                   baselines=baselines, mode=mode)


def rollout(params: AttentionParams, image: Image, t_steps: int, mode: str,
            forced_locs=None, rng: SeededRng = None) -> Rollout:
    """Single-image rollout; forced_locs is a list of GlimpseLocation."""
    forced = None
    if forced_locs is not None:
        forced = np.array([[params.grid.index_of(l) for l in forced_locs]], dtype=np.int64)
    return rollout_batch(params, image.pixels[None], t_steps, mode, forced, rng)


def _backprop(params: AttentionParams, ro: Rollout, dlogits_c: np.ndarray,
              dloc_logits_h: np.ndarray = None, dloc_logits_stop: np.ndarray = None,
              through_core: bool = False) -> dict:
    """Shared BPTT.

    dlogits_c: (B, K) gradient at the class logits.
    dloc_logits_h: (B, T, n_loc) location-logit gradient that flows into
        the hidden state (supervised NLL term).
    dloc_logits_stop: same shape, applied to the location head only
        (REINFORCE term); flows into the core only if through_core.
    """
    g = {name: np.zeros_like(getattr(params, name)) for name in PARAM_ORDER}
    t_steps = ro.locs.shape[1]
    h_t = ro.h[:, t_steps]
    g["w_c"] += dlogits_c.T @ h_t
    g["b_c"] += dlogits_c.sum(axis=0)
    dh = dlogits_c @ params.w_c
    for t in range(t_steps, 0, -1):
        h_cur = ro.h[:, t]
        h_prev = ro.h[:, t - 1]
        delta = dh * (1.0 - h_cur * h_cur)
        g["w_h"] += delta.T @ h_prev
        g["w_x"] += delta.T @ ro.emb[:, t - 1]
        g["b_h"] += delta.sum(axis=0)
        de = delta @ params.w_x
        dpre = de * (1.0 - ro.emb[:, t - 1] ** 2)
        g["w_e"] += dpre.T @ ro.inputs[:, t - 1]
        g["b_e"] += dpre.sum(axis=0)
        dh = delta @ params.w_h
        if dloc_logits_h is not None:
            dl = dloc_logits_h[:, t - 1]
            g["w_l"] += dl.T @ h_prev
            g["b_l"] += dl.sum(axis=0)
            dh = dh + dl @ params.w_l
        if dloc_logits_stop is not None:
            dl = dloc_logits_stop[:, t - 1]
            g["w_l"] += dl.T @ h_prev
            g["b_l"] += dl.sum(axis=0)
            if through_core:
                dh = dh + dl @ params.w_l
    g["h0"] += dh.sum(axis=0)
    return g


def _onehot(idx: np.ndarray, k: int) -> np.ndarray:
    out = np.zeros((idx.shape[0], k))
    out[np.arange(idx.shape[0]), idx] = 1.0
    return out


def loss_unsupervised(params: AttentionParams, images: np.ndarray, labels: np.ndarray,
                      t_steps: int, rng: SeededRng, baseline_weight: float = 1.0,
                      through_core: bool = False) -> tuple:
    """Sampled rollout: class cross-entropy through the network, REINFORCE
    with the learned baseline for the location head, squared-error
    baseline fit.  Returns (stats, batch-mean grads)."""
    b = images.shape[0]
    ro = rollout_batch(params, images, t_steps, "sampled", rng=rng)
    pred = ro.class_probs.argmax(axis=1)
    reward = (pred == labels).astype(np.float64)

    dlogits_c = (ro.class_probs - _onehot(labels, params.k)) / b

    adv = reward[:, None] - ro.baselines          # (B, T)
    dloc = np.empty_like(ro.loc_probs)
    for t in range(t_steps):
        oh = _onehot(ro.locs[:, t], params.n_loc)
        dloc[:, t] = -adv[:, t][:, None] * (oh - ro.loc_probs[:, t]) / b
    grads = _backprop(params, ro, dlogits_c, dloc_logits_stop=dloc,
                      through_core=through_core)

    bdiff = ro.baselines - reward[:, None]        # d/db of (b - R)^2 -> 2*bdiff
    coeff = 2.0 * baseline_weight / b
    for t in range(t_steps):
        grads["w_b"] += coeff * (bdiff[:, t][:, None] * ro.h[:, t]).sum(axis=0)
    grads["c_b"] += coeff * bdiff.sum(keepdims=True).reshape(1)

    xent = float(-np.log(np.maximum(ro.class_probs[np.arange(b), labels], 1e-300)).mean())
    stats = {
        "xent": xent,
        "accuracy": float(reward.mean()),
        "reward": float(reward.mean()),
        "baseline_mse": float((bdiff ** 2).mean()),
        "loc_nll": float("nan"),
        "loss": xent,
    }
    return stats, grads


def loss_supervised(params: AttentionParams, images: np.ndarray, labels: np.ndarray,
                    forced: np.ndarray, t_steps: int) -> tuple:
    """Teacher-forced rollout: class cross-entropy plus location negative
    log-likelihood, fully differentiable (locations are constants)."""
    if forced.shape[1] != t_steps:
        raise ValueError(f"supervision length {forced.shape[1]} != T={t_steps}")
    b = images.shape[0]
    ro = rollout_batch(params, images, t_steps, "forced", forced=forced)

    dlogits_c = (ro.class_probs - _onehot(labels, params.k)) / b
    dloc = np.empty_like(ro.loc_probs)
    for t in range(t_steps):
        dloc[:, t] = (ro.loc_probs[:, t] - _onehot(forced[:, t], params.n_loc)) / b
    grads = _backprop(params, ro, dlogits_c, dloc_logits_h=dloc)

    xent = float(-np.log(np.maximum(ro.class_probs[np.arange(b), labels], 1e-300)).mean())
    loc_nll = float(-ro.loc_logps.sum(axis=1).mean())
    acc = float((ro.class_probs.argmax(axis=1) == labels).mean())
    stats = {"xent": xent, "loc_nll": loc_nll, "loss": xent + loc_nll,
             "accuracy": acc, "reward": acc, "baseline_mse": float("nan")}
    return stats, grads


@dataclass
class EvalResult:
    accuracy: float
    xent: float
    freq: np.ndarray  # (T, ny, nx), normalized per step


def evaluate(params: AttentionParams, dataset, t_steps: int, rng: SeededRng,
             episodes: int = 1, batch_size: int = 512) -> EvalResult:
    """Sampled-rollout accuracy plus per-step location visit frequencies."""
    if len(dataset) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    images = np.stack([it.image.pixels for it in dataset.items])
    labels = np.array([it.label for it in dataset.items], dtype=np.int64)
    grid = params.grid
    counts = np.zeros((t_steps, len(grid)))
    correct = 0
    xent_sum = 0.0
    total = 0
    for _ in range(episodes):
        for i in range(0, len(labels), batch_size):
            img = images[i : i + batch_size]
            lab = labels[i : i + batch_size]
            ro = rollout_batch(params, img, t_steps, "sampled", rng=rng)
            correct += int((ro.class_probs.argmax(axis=1) == lab).sum())
            xent_sum += float(-np.log(
                np.maximum(ro.class_probs[np.arange(len(lab)), lab], 1e-300)).sum())
            for t in range(t_steps):
                counts[t] += np.bincount(ro.locs[:, t], minlength=len(grid))
            total += len(lab)
    freq = (counts / total).reshape(t_steps, grid.ny, grid.nx)
    return EvalResult(accuracy=correct / total, xent=xent_sum / total, freq=freq)


def train(params: AttentionParams, dataset, sup_records, cfg: TrainConfig,
          adam: AdamState, rng: SeededRng, val_dataset=None) -> tuple:
    """Partially supervised training.

    Each minibatch holds round(sup_fraction * B) supervised examples
    (drawn from the annotated subset, cycling) and unsupervised examples
    drawn from the rest of the dataset.  With no supervision records this
    reduces exactly, draw for draw, to plain REINFORCE training.

    Returns (params, metrics) where metrics is a list of per-epoch row
    dicts (epoch, split, accuracy, xent, loc_nll, iters) plus counters.
    """
    cfg.validate()
    by_id = {it.id: it for it in dataset.items}
    sup_items = []
    for r in sup_records or []:
        if r.id not in by_id:
            raise ConfigError(f"supervision record id {r.id} not in dataset")
        it = by_id[r.id]
        sup_items.append((it.image.pixels, it.label,
                          np.array([params.grid.index_of(l) for l in r.locs], dtype=np.int64)))
    sup_ids = {r.id for r in sup_records or []}
    unsup_items = [it for it in dataset.items if it.id not in sup_ids]

    images = np.stack([it.image.pixels for it in unsup_items]) if unsup_items else None
    labels = np.array([it.label for it in unsup_items], dtype=np.int64)
    sup_images = np.stack([x[0] for x in sup_items]) if sup_items else None
    sup_labels = np.array([x[1] for x in sup_items], dtype=np.int64)
    sup_locs = np.stack([x[2] for x in sup_items]) if sup_items else None

    use_sup = bool(sup_items) and cfg.sup_fraction > 0.0
    n_sup_per_batch = int(round(cfg.sup_fraction * cfg.batch_size)) if use_sup else 0
    n_unsup_per_batch = cfg.batch_size - n_sup_per_batch
    if n_unsup_per_batch == 0 and not use_sup:
        raise ConfigError("batch has neither supervised nor unsupervised slots")

    sup_rng = rng.derive(0x5F3759DF)
    sup_queue = []

    def next_sup(n):
        nonlocal sup_queue
        picks = []
        while len(picks) < n:
            if not sup_queue:
                sup_queue = list(sup_rng.gen.permutation(len(sup_items)))
            picks.append(sup_queue.pop())
        return np.array(picks, dtype=np.int64)

    metrics = []
    counters = {"reinforce_batches": 0, "supervised_batches": 0, "iters": 0}
    eval_rng = rng.derive(0xE7A1)

    def run_eval(epoch):
        if val_dataset is None:
            return
        res = evaluate(params, val_dataset, cfg.t, eval_rng, cfg.eval_episodes)
        metrics.append({"epoch": epoch, "split": "val", "accuracy": res.accuracy,
                        "xent": res.xent, "loc_nll": float("nan"),
                        "iters": counters["iters"]})

    for epoch in range(1, cfg.epochs + 1):
        adam.lr = cfg.lr * cfg.lr_decay ** (epoch - 1)
        pretrain = epoch <= cfg.pretrain_epochs
        frozen = cfg.freeze_after_pretrain and cfg.pretrain_epochs > 0 and not pretrain
        if n_unsup_per_batch > 0 and unsup_items:
            order = rng.gen.permutation(len(unsup_items))
            spans = range(0, len(order), n_unsup_per_batch)
        else:
            order = np.zeros(0, dtype=np.int64)
            spans = range(max(1, (len(sup_items) + cfg.batch_size - 1) // cfg.batch_size))

        ep_stats = []
        for span in spans:
            idx = order[span : span + n_unsup_per_batch] if len(order) else np.zeros(0, dtype=np.int64)
            n_u = len(idx)
            n_s = n_sup_per_batch if use_sup and not pretrain else 0
            if n_u == 0 and n_s == 0:
                n_s = min(cfg.batch_size, len(sup_items)) if use_sup and not pretrain else 0
                if n_s == 0 and not pretrain:
                    continue
            total = n_u + n_s
            grads = params.zeros_like_grads()
            row = {}
            if n_u:
                if pretrain:
                    stats_u, g_u = _loss_pretrain(params, images[idx], labels[idx], cfg, rng,
                                                  cfg.pretrain_location_probs)
                else:
                    stats_u, g_u = loss_unsupervised(
                        params, images[idx], labels[idx], cfg.t, rng,
                        cfg.baseline_weight, cfg.reinforce_through_core)
                    counters["reinforce_batches"] += 1
                for name in grads:
                    grads[name] += (n_u / total) * g_u[name]
                row.update(stats_u)
            if n_s:
                pick = next_sup(n_s)
                stats_s, g_s = loss_supervised(params, sup_images[pick], sup_labels[pick],
                                               sup_locs[pick], cfg.t)
                counters["supervised_batches"] += 1
                for name in grads:
                    grads[name] += (n_s / total) * g_s[name]
                row["loc_nll"] = stats_s["loc_nll"]
                if not n_u:
                    row.update(stats_s)
            if frozen:
                grads = {name: grads[name] for name in HEAD_PARAMS}
            adam_update(params.as_dict(), grads, adam)
            counters["iters"] += 1
            ep_stats.append(row)

        agg = {}
        for k in ("accuracy", "xent", "loc_nll"):
            vals = np.array([s.get(k, float("nan")) for s in ep_stats], dtype=float)
            agg[k] = float(np.nanmean(vals)) if np.isfinite(vals).any() else float("nan")
        metrics.append({"epoch": epoch, "split": "train", **agg,
                        "iters": counters["iters"]})
        if cfg.eval_every and epoch % cfg.eval_every == 0:
            run_eval(epoch)

    return params, {"rows": metrics, **counters}


def _loss_pretrain(params: AttentionParams, images, labels, cfg: TrainConfig,
                   rng: SeededRng, location_probs: np.ndarray = None) -> tuple:
    """Class cross-entropy only, with locations from a fixed distribution."""
    b = images.shape[0]
    if location_probs is None:
        location_probs = np.full(params.n_loc, 1.0 / params.n_loc)
    ro = rollout_batch(params, images, cfg.t, "external", rng=rng,
                       location_probs=location_probs)
    dlogits_c = (ro.class_probs - _onehot(labels, params.k)) / b
    grads = _backprop(params, ro, dlogits_c)
    xent = float(-np.log(np.maximum(ro.class_probs[np.arange(b), labels], 1e-300)).mean())
    acc = float((ro.class_probs.argmax(axis=1) == labels).mean())
    return {"xent": xent, "accuracy": acc, "loc_nll": float("nan"), "loss": xent}, grads


def iterations_to_within(metrics_rows, delta: float = 0.01) -> int:
    """Update count at which validation accuracy first comes within
    ``delta`` of its best over the run."""
    val = [(row["iters"], row["accuracy"]) for row in metrics_rows
           if row["split"] == "val" and np.isfinite(row["accuracy"])]
    if not val:
        raise ValueError("no validation rows in metrics")
    best = max(acc for _, acc in val)
    for iters, acc in val:
        if acc >= best - delta - 1e-12:
            return iters
    return val[-1][0]


def write_metrics_csv(metrics_rows, path):
    from . import storage

    lines = ["epoch,split,accuracy,xent,loc_nll,iters"]
    for row in metrics_rows:
        lines.append("{epoch},{split},{accuracy!r},{xent!r},{loc_nll!r},{iters}".format(**row))
    storage.atomic_write_text(path, "\n".join(lines) + "\n")


def save_attention(params: AttentionParams, path):
    from . import storage

    grid = params.grid
    header = {"k": params.k, "d_e": params.d_e, "d_h": params.d_h,
              "h": grid.h, "w": grid.w, "g": grid.g, "s": grid.s}
    storage.write_blocks(path, header, [getattr(params, n) for n in PARAM_ORDER])


def load_attention(path) -> AttentionParams:
    from . import storage

    def shapes(h):
        grid = GlimpseGrid(h["h"], h["w"], h["g"], h["s"])
        g2 = h["g"] * h["g"]
        n_loc = grid.nx * grid.ny
        return [
            (h["d_e"], g2 + 2), (h["d_e"],),
            (h["d_h"], h["d_h"]), (h["d_h"], h["d_e"]), (h["d_h"],),
            (n_loc, h["d_h"]), (n_loc,),
            (h["k"], h["d_h"]), (h["k"],),
            (h["d_h"],), (1,), (h["d_h"],),
        ]

    header, blocks = storage.read_blocks(path, shapes)
    grid = GlimpseGrid(header["h"], header["w"], header["g"], header["s"])
    arrays = dict(zip(PARAM_ORDER, blocks))
    return AttentionParams(header["k"], grid, header["d_e"], header["d_h"], arrays)
