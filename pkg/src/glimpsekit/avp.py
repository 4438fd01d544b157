"""Attentional variational posterior models.

Two implementations of the same duck-typed interface:

- ``ExactPosteriorAvp`` wraps a finite world's enumeration oracle;
- ``MaskedLinearAvp`` is a trainable linear-softmax classifier over the
  [value; mask] features of a masked embedding.

Both expose ``classify(history) -> Categorical`` and a batched
``probs(values, masks) -> (B, K)`` used by the experimental-design search.
"""

from __future__ import annotations

import json

import numpy as np

from .core import (
    Categorical,
    GlimpseGrid,
    GlimpseHistory,
    Image,
    SeededRng,
    fovea,
    history_from,
    masked_embedding,
)
from .optim import AdamState, adam_update
from .world import MATCH_TOL, FiniteWorld, LabeledDataset, exact_posterior
from . import storage


def softmax_rows(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


class ExactPosteriorAvp:
    """The enumeration oracle behind the shared classifier interface."""

    def __init__(self, world: FiniteWorld, tol: float = MATCH_TOL):
        self.world = world
        self.tol = tol
        self.k = world.k
        self.h = world.grid.h
        self.w = world.grid.w
        self._flat = world._stack.reshape(len(world), -1)

    def classify(self, hist: GlimpseHistory) -> Categorical:
        return exact_posterior(self.world, hist, self.tol)

    def probs(self, values: np.ndarray, masks: np.ndarray) -> np.ndarray:
        """Exact posteriors for a batch of masked observations.

        ``masks`` may be a single (1, P) row shared by the whole batch.
        """
        out = np.empty((values.shape[0], self.k))
        pw = self.world._probs
        labels = self.world._labels
        shared = masks.shape[0] == 1
        m = masks[0] > 0.5
        sub = self._flat[:, m] if shared else None
        for i in range(values.shape[0]):
            if not shared:
                m = masks[i] > 0.5
                sub = self._flat[:, m]
            ok = (np.abs(sub - values[i, m]) <= self.tol).all(axis=1)
            w = pw[ok]
            p = np.bincount(labels[ok], weights=w, minlength=self.k)
            out[i] = p / p.sum()
        return out


class MaskedLinearAvp:
    """Linear softmax over [value; mask] features of the masked embedding.

    Logits are ``A @ [value; mask] + b`` with A of shape (K, 2*H*W); the
    output is permutation-invariant in the glimpse history because the
    embedding is.
    """

    def __init__(self, k: int, h: int, w: int, a: np.ndarray = None,
                 b: np.ndarray = None, epochs_trained: int = 0):
        self.k, self.h, self.w = k, h, w
        p = h * w
        self.a = np.zeros((k, 2 * p)) if a is None else np.asarray(a, dtype=np.float64)
        self.b = np.zeros(k) if b is None else np.asarray(b, dtype=np.float64)
        if self.a.shape != (k, 2 * p) or self.b.shape != (k,):
            raise ValueError(
                f"weight shapes {self.a.shape}/{self.b.shape} do not match k={k}, h={h}, w={w}"
            )
        if not (np.isfinite(self.a).all() and np.isfinite(self.b).all()):
            raise ValueError("model weights must be finite")
        self.epochs_trained = epochs_trained

    def copy(self) -> "MaskedLinearAvp":
        return MaskedLinearAvp(self.k, self.h, self.w, self.a.copy(), self.b.copy(),
                               self.epochs_trained)

    def params(self) -> dict:
        return {"a": self.a, "b": self.b}

    def probs(self, values: np.ndarray, masks: np.ndarray) -> np.ndarray:
        p = self.h * self.w
        logits = values @ self.a[:, :p].T + masks @ self.a[:, p:].T + self.b
        return softmax_rows(logits)

    def classify(self, hist: GlimpseHistory) -> Categorical:
        emb = self._embed(hist)
        probs = self.probs(emb.value.reshape(1, -1), emb.mask.reshape(1, -1))[0]
        return Categorical(probs)

    def _embed(self, hist: GlimpseHistory):
        canvas = np.zeros((self.h, self.w))
        mask = np.zeros((self.h, self.w))
        for loc, patch in hist.steps:
            canvas[loc.ay : loc.ay + loc.g, loc.ax : loc.ax + loc.g] = patch
            mask[loc.ay : loc.ay + loc.g, loc.ax : loc.ax + loc.g] = 1.0
        from .core import MaskedEmbedding

        return MaskedEmbedding(value=canvas * mask, mask=mask)


def avp_training_batch(source, t_max: int, grid: GlimpseGrid, batch: int,
                       rng: SeededRng) -> list:
    """Sample (history, label) pairs with t ~ U{1..T} and i.i.d. uniform
    locations, the weighting used for posterior-network training."""
    if batch < 1:
        raise ValueError("batch must be >= 1")
    gen = rng.gen
    out = []
    for _ in range(batch):
        if isinstance(source, FiniteWorld):
            e = source.entries[gen.choice(len(source.entries), p=source._probs)]
            image, label = e.image, e.label
        elif isinstance(source, LabeledDataset):
            it = source.items[int(gen.integers(0, len(source.items)))]
            image, label = it.image, it.label
        else:
            raise TypeError(f"cannot sample training batch from {type(source)!r}")
        t = int(gen.integers(1, t_max + 1))
        locs = [grid.location(int(i)) for i in gen.integers(0, len(grid), size=t)]
        out.append((history_from(image, locs), label))
    return out


def _features(model: MaskedLinearAvp, batch) -> tuple:
    x = np.empty((len(batch), 2 * model.h * model.w))
    y = np.empty(len(batch), dtype=np.int64)
    for i, (hist, label) in enumerate(batch):
        x[i] = model._embed(hist).features()
        y[i] = label
    return x, y


def avp_loss_and_grad(model: MaskedLinearAvp, batch) -> tuple:
    """Mean cross-entropy of the batch and its exact analytic gradients."""
    if not batch:
        raise ValueError("batch must be non-empty")
    x, y = _features(model, batch)
    logits = x @ model.a.T + model.b
    probs = softmax_rows(logits)
    n = len(batch)
    eps_free = probs[np.arange(n), y]
    loss = float(-np.log(np.maximum(eps_free, 1e-300)).mean())
    dlogits = probs.copy()
    dlogits[np.arange(n), y] -= 1.0
    dlogits /= n
    return loss, {"a": dlogits.T @ x, "b": dlogits.sum(axis=0)}


def avp_validation_xent(model: MaskedLinearAvp, batch) -> float:
    x, y = _features(model, batch)
    probs = softmax_rows(x @ model.a.T + model.b)
    return float(-np.log(np.maximum(probs[np.arange(len(batch)), y], 1e-300)).mean())


def avp_train(model: MaskedLinearAvp, train: LabeledDataset, val: LabeledDataset,
              t_max: int, grid: GlimpseGrid, epochs: int, batch_size: int,
              adam: AdamState, rng: SeededRng) -> tuple:
    """Train by sampled-history cross-entropy; return the checkpoint with
    the lowest validation cross-entropy plus the per-epoch metric list.

    The validation histories are drawn once so the selection criterion is
    comparable across epochs.  Train and val splits must be distinct
    objects; the caller is responsible for keeping the to-be-annotated
    images out of ``train``.
    """
    if len(train) == 0 or len(val) == 0:
        raise ValueError("train and val splits must be non-empty")
    if train is val or train.split == val.split:
        raise ValueError("train and val must be disjoint splits")

    val_batch = avp_training_batch(val, t_max, grid, len(val), rng.derive(0xA11))
    best = model.copy()
    best_xent = avp_validation_xent(model, val_batch)
    history = [{"epoch": 0, "train_loss": float("nan"), "val_xent": best_xent}]
    iters = max(1, len(train) // batch_size)
    for epoch in range(1, epochs + 1):
        losses = []
        for _ in range(iters):
            batch = avp_training_batch(train, t_max, grid, batch_size, rng)
            loss, grads = avp_loss_and_grad(model, batch)
            adam_update(model.params(), grads, adam)
            losses.append(loss)
        model.epochs_trained += 1
        val_xent = avp_validation_xent(model, val_batch)
        history.append({"epoch": epoch, "train_loss": float(np.mean(losses)),
                        "val_xent": val_xent})
        if val_xent < best_xent:
            best_xent = val_xent
            best = model.copy()
    return best, history


def save_avp(model: MaskedLinearAvp, path):
    header = {"k": model.k, "h": model.h, "w": model.w,
              "epochs_trained": model.epochs_trained}
    storage.write_blocks(path, header, [model.a, model.b])


def load_avp(path) -> MaskedLinearAvp:
    def shapes(h):
        return [(h["k"], 2 * h["h"] * h["w"]), (h["k"],)]

    header, (a, b) = storage.read_blocks(path, shapes)
    return MaskedLinearAvp(header["k"], header["h"], header["w"], a, b,
                           int(header.get("epochs_trained", 0)))
