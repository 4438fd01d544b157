"""Stochastic image completion by PCA-compressed retrieval.

Given glimpses of a source image, candidate completions are drawn from an
image bank in two stages: a cheap proposal computed entirely from PCA
codes (never touching raw pixels), then an exact-likelihood reweighting
of the proposed images under a Gaussian relaxation of the observation
model.  The bank stores only the PCA mean, components, and per-image
codes, so proposal scoring costs O(N * L) rather than O(N * P).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ConfigError, GlimpseHistory, Image, NumericError, SeededRng, fovea
from .world import FiniteWorld, exact_completion
from . import storage


@dataclass
class CompletionParams:
    """Knobs of the two-stage sampler.

    ``sigma_q`` may be a float (pixel units on the [0, 1] scale) or the
    string ``"adaptive"`` to tune it per proposal by effective sample
    size.  ``schedule="doubling"`` doubles the stds with every observed
    glimpse (sigma * 2**t).
    """

    k1: int = 1000
    k2: int = 200
    sigma_p: float = 80.0 / 255.0
    sigma_q: object = "adaptive"
    schedule: str = "fixed"
    resampling: str = "multinomial"

    def validate(self):
        if self.k2 < 1 or self.k1 < self.k2:
            raise ConfigError(f"need k1 >= k2 >= 1, got k1={self.k1}, k2={self.k2}")
        if self.sigma_p <= 0:
            raise ConfigError("sigma_p must be positive")
        if self.sigma_q != "adaptive" and float(self.sigma_q) <= 0:
            raise ConfigError("sigma_q must be positive or 'adaptive'")
        if self.schedule not in ("fixed", "doubling"):
            raise ConfigError(f"unknown sigma schedule {self.schedule!r}")
        if self.resampling not in ("multinomial", "systematic"):
            raise ConfigError(f"unknown resampling scheme {self.resampling!r}")

    def sigma_p_at(self, t: int) -> float:
        return self.sigma_p * (2.0 ** t if self.schedule == "doubling" else 1.0)

    def sigma_q_at(self, t: int):
        if self.sigma_q == "adaptive":
            return None
        return float(self.sigma_q) * (2.0 ** t if self.schedule == "doubling" else 1.0)


@dataclass
class PcaBank:
    """PCA-compressed retrieval database: mean, components, and codes.

    ``z`` holds one code row per candidate; with flip augmentation the
    second half of the rows are codes of horizontally mirrored images and
    candidate index i >= n_data refers to the mirror of image i - n_data.
    """

    n_data: int
    h: int
    w: int
    l_pca: int
    mu: np.ndarray       # (P,)
    components: np.ndarray  # (L, P), rows orthonormal
    z: np.ndarray        # (n_candidates, L)
    flip: bool = False

    @property
    def p(self) -> int:
        return self.h * self.w

    @property
    def n_candidates(self) -> int:
        return self.z.shape[0]

    def encode(self, pixels: np.ndarray) -> np.ndarray:
        return self.components @ (pixels.ravel() - self.mu)


def pca_fit(images, l_pca: int, flip: bool = False, degenerate: str = "reduce") -> PcaBank:
    """Fit a mean-centered PCA bank to (N, H, W) images.

    Components are the top eigenvectors of the empirical covariance with
    a deterministic sign convention (the largest-magnitude element of
    each row is made positive).  If the covariance rank is below
    ``l_pca`` the dimension is reduced (or a ConfigError raised, per
    ``degenerate``).
    """
    x = np.stack([im.pixels if isinstance(im, Image) else np.asarray(im, dtype=np.float64)
                  for im in images])
    n, h, w = x.shape
    if not 1 <= l_pca:
        raise ConfigError("l_pca must be >= 1")
    if n < 1:
        raise ConfigError("bank must contain at least one image")
    if degenerate not in ("reduce", "error"):
        raise ConfigError(f"unknown degenerate policy {degenerate!r}")
    flat = x.reshape(n, -1)
    mu = flat.mean(axis=0)
    xc = flat - mu
    cov = (xc.T @ xc) / n
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1]
    eigvals = eigvals[order]
    eigvecs = eigvecs[:, order]
    tol = max(eigvals[0], 0.0) * 1e-10 + 1e-18
    rank = int((eigvals > tol).sum())
    l_eff = min(l_pca, flat.shape[1])
    if l_eff > rank:
        if degenerate == "error":
            raise ConfigError(f"l_pca={l_pca} exceeds covariance rank {rank}")
        l_eff = max(rank, 0)
    comps = eigvecs[:, :l_eff].T.copy()  # (L, P)
    for row in comps:
        j = int(np.argmax(np.abs(row)))
        if row[j] < 0:
            row *= -1.0
    z = xc @ comps.T
    if flip:
        z_flip = (x[:, :, ::-1].reshape(n, -1) - mu) @ comps.T
        z = np.vstack([z, z_flip])
    return PcaBank(n_data=n, h=h, w=w, l_pca=l_eff, mu=mu, components=comps,
                   z=z, flip=flip)


def obs_indices(locs, width: int) -> np.ndarray:
    """Flat pixel indices of the concatenated patches at ``locs``."""
    if not locs:
        return np.zeros(0, dtype=np.int64)
    return np.concatenate([loc.pixel_indices(width) for loc in locs])


def slice_reconstruct(bank: PcaBank, code: np.ndarray, locs) -> list:
    """Patches of the PCA reconstruction restricted to ``locs``.

    Equals cropping the full reconstruction mu + W^T z; only the selected
    component columns are touched.
    """
    out = []
    for loc in locs:
        idx = loc.pixel_indices(bank.w)
        vals = bank.mu[idx] + code @ bank.components[:, idx]
        out.append(vals.reshape(loc.g, loc.g))
    return out


@dataclass
class AdaptiveSigmaResult:
    sigma_q: float
    ess: float
    converged: bool


def effective_sample_size(log_w: np.ndarray) -> float:
    w = np.exp(log_w - log_w.max())
    s = w.sum()
    return float(s * s / np.square(w).sum())


def _ess_at(sq_dists: np.ndarray, sigma: float) -> float:
    d = sq_dists - sq_dists.min()
    return effective_sample_size(-d / (2.0 * max(sigma, 1e-150) ** 2))


def adaptive_sigma_q(sq_dists: np.ndarray, target: int, max_iters: int = 50) -> AdaptiveSigmaResult:
    """Tune the proposal std so the candidate-weight ESS lands near the
    number of samples to be drawn (within [0.8, 1.25] x target).

    ESS is non-decreasing in sigma; a doubling search brackets the band
    and bisection refines it.  If the band is unreachable (degenerate
    distances), the sigma achieving maximal ESS is returned, flagged.
    """
    sq_dists = np.asarray(sq_dists, dtype=np.float64)
    lo_t, hi_t = 0.8 * target, 1.25 * target
    sigma = float(np.sqrt(max(sq_dists.mean(), 1e-30)))
    ess = _ess_at(sq_dists, sigma)
    if lo_t <= ess <= hi_t:
        return AdaptiveSigmaResult(sigma, ess, True)

    lo = hi = sigma
    iters = 0
    if ess < lo_t:
        # grow until the band is reached or ESS stops improving
        while iters < max_iters:
            iters += 1
            hi *= 2.0
            ess = _ess_at(sq_dists, hi)
            if ess >= lo_t:
                break
        if ess < lo_t:
            return AdaptiveSigmaResult(hi, ess, False)
        if ess <= hi_t:
            return AdaptiveSigmaResult(hi, ess, True)
    else:
        while iters < max_iters:
            iters += 1
            lo /= 2.0
            ess = _ess_at(sq_dists, lo)
            if ess <= hi_t:
                break
        if ess > hi_t:
            # every sigma gives too many effective samples; flat weights
            return AdaptiveSigmaResult(sigma, _ess_at(sq_dists, sigma), False)
        if ess >= lo_t:
            return AdaptiveSigmaResult(lo, ess, True)

    while iters < max_iters:
        iters += 1
        mid = 0.5 * (lo + hi)
        ess = _ess_at(sq_dists, mid)
        if lo_t <= ess <= hi_t:
            return AdaptiveSigmaResult(mid, ess, True)
        if ess < lo_t:
            lo = mid
        else:
            hi = mid
    return AdaptiveSigmaResult(hi, _ess_at(sq_dists, hi), False)


def _resample(log_w: np.ndarray, n: int, gen, scheme: str) -> np.ndarray:
    w = np.exp(log_w - log_w.max())
    total = w.sum()
    if not np.isfinite(total) or total <= 0.0:
        raise NumericError("resampling weights vanished despite log-domain normalization")
    p = w / total
    if scheme == "systematic":
        c = np.cumsum(p)
        c[-1] = 1.0
        u = (gen.random() + np.arange(n)) / n
        return np.searchsorted(c, u).astype(np.int64)
    return gen.choice(len(p), size=n, p=p)


@dataclass
class ProposalResult:
    indices: np.ndarray      # (K1,) candidate indices
    log_weights: np.ndarray  # (K1,) relative log proposal weights of those indices
    sigma_q: float
    ess: float
    adaptive_converged: bool


def sample_proposal(bank: PcaBank, image: Image, locs, params: CompletionParams,
                    rng: SeededRng) -> ProposalResult:
    """Stage one: score every candidate in code space and draw K1 of them.

    The observations are *reconstructed* from the full source image
    (mu + W^T W (I - mu) at the observed pixels) so that proposal and
    candidate approximations live in the same subspace.
    """
    params.validate()
    if not locs:
        raise ValueError("sample_proposal requires at least one observed glimpse")
    if params.k1 > bank.n_candidates:
        raise ConfigError(f"k1={params.k1} exceeds {bank.n_candidates} candidates")
    idx = obs_indices(locs, bank.w)
    z_query = bank.encode(image.pixels)
    comp_obs = bank.components[:, idx]          # (L, C)
    y_hat = bank.mu[idx] + z_query @ comp_obs   # (C,)
    y_cand = bank.mu[idx] + bank.z @ comp_obs   # (n_cand, C)
    d = np.square(y_cand - y_hat).sum(axis=1)

    t = len(locs)
    sigma_q = params.sigma_q_at(t)
    ess = None
    converged = True
    if sigma_q is None:
        res = adaptive_sigma_q(d, params.k1)
        sigma_q, ess, converged = res.sigma_q, res.ess, res.converged
    log_w1 = -(d - d.min()) / (2.0 * sigma_q**2)
    if ess is None:
        ess = effective_sample_size(log_w1)
    indices = _resample(log_w1, params.k1, rng.gen, params.resampling)
    return ProposalResult(indices=indices, log_weights=log_w1[indices],
                          sigma_q=float(sigma_q), ess=float(ess),
                          adaptive_converged=converged)


@dataclass
class CompletionSample:
    images: np.ndarray            # (K2, H, W)
    indices: np.ndarray           # (K2,) candidate indices
    proposal: ProposalResult = None
    log_w2: np.ndarray = None     # (K1,) importance log weights before resampling


def sample_images(bank: PcaBank, store, image, locs, params: CompletionParams,
                  rng: SeededRng) -> CompletionSample:
    """Stage two: load the proposed images, reweight by the exact Gaussian
    likelihood of the true observations, and resample K2 of them.

    With no observations this reduces to K2 uniform draws from the bank.
    """
    params.validate()
    gen = rng.gen
    if not locs:
        indices = gen.integers(0, bank.n_candidates, size=params.k2)
        images = np.stack([store.load(int(i)) for i in indices])
        return CompletionSample(images=images, indices=indices)

    prop = sample_proposal(bank, image, locs, params, rng)
    loaded = np.stack([store.load(int(i)) for i in prop.indices])
    idx = obs_indices(locs, bank.w)
    y_true = np.concatenate([fovea(image, loc).ravel() for loc in locs])
    y_k = loaded.reshape(len(loaded), -1)[:, idx]
    d_p = np.square(y_k - y_true).sum(axis=1)
    sigma_p = params.sigma_p_at(len(locs))
    log_exact = -(d_p - d_p.min()) / (2.0 * sigma_p**2)
    log_w2 = log_exact - prop.log_weights
    choice = _resample(log_w2, params.k2, gen, params.resampling)
    return CompletionSample(images=loaded[choice], indices=prop.indices[choice],
                            proposal=prop, log_w2=log_w2)


class ExactCompleter:
    """Finite-world completion oracle behind the completer interface.

    ``mode="exhaustive"`` returns every consistent entry with its exact
    weight; ``mode="sample"`` draws n entries from that distribution with
    uniform weights, mimicking a Monte Carlo completer.
    """

    def __init__(self, world: FiniteWorld, mode: str = "exhaustive"):
        if mode not in ("exhaustive", "sample"):
            raise ConfigError(f"unknown exact completer mode {mode!r}")
        self.world = world
        self.mode = mode

    def complete(self, image, hist: GlimpseHistory, n: int, rng: SeededRng):
        pairs = exact_completion(self.world, hist)
        images = np.stack([im.pixels for im, _ in pairs])
        weights = np.array([w for _, w in pairs])
        if self.mode == "exhaustive":
            return images, weights
        idx = rng.gen.choice(len(weights), size=n, p=weights)
        return images[idx], np.full(n, 1.0 / n)


class RetrievalCompleter:
    """PCA retrieval completion behind the completer interface."""

    def __init__(self, bank: PcaBank, store, params: CompletionParams):
        self.bank = bank
        self.store = store
        self.params = params

    def complete(self, image, hist: GlimpseHistory, n: int, rng: SeededRng):
        params = CompletionParams(k1=self.params.k1, k2=n, sigma_p=self.params.sigma_p,
                                  sigma_q=self.params.sigma_q, schedule=self.params.schedule,
                                  resampling=self.params.resampling)
        sample = sample_images(self.bank, self.store, image, hist.locations, params, rng)
        return sample.images, np.full(len(sample.images), 1.0 / len(sample.images))


def save_pca_bank(bank: PcaBank, path):
    header = {"n": bank.n_data, "p": bank.p, "l": bank.l_pca, "flip": bank.flip,
              "h": bank.h, "w": bank.w}
    storage.write_blocks(path, header, [bank.mu, bank.components, bank.z])


def load_pca_bank(path) -> PcaBank:
    def shapes(h):
        ncand = h["n"] * (2 if h["flip"] else 1)
        return [(h["p"],), (h["l"], h["p"]), (ncand, h["l"])]

    header, (mu, comps, z) = storage.read_blocks(path, shapes)
    return PcaBank(n_data=header["n"], h=header["h"], w=header["w"], l_pca=header["l"],
                   mu=mu, components=comps, z=z, flip=bool(header["flip"]))
