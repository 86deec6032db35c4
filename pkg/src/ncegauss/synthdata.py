"""Synthetic base distributions and augmentation channels for positive pairs.

Three base laws are supported: i.i.d. Laplace(0,1) vectors, an isotropic
Gaussian mixture with fixed random means, and sparse binary vectors.  An
AugmentationChannel turns base rows into two correlated views: linear
Gaussian mixing plus optional jitter, zero-entry bit flips, or fresh
redraws from the same mixture component.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ._util import derive_rng

DATASET_KINDS = ("laplace", "gmm", "sparse_binary")
CHANNEL_KINDS = ("gaussian_mix", "bit_flip", "component_resample")

GMM_MEAN_SCALE = 3.0  # component means are i.i.d. N(0, GMM_MEAN_SCALE^2) entries


@dataclass
class Dataset:
    """Matrix of base samples plus the metadata needed to regenerate it."""

    samples: np.ndarray  # (n, d_data) float64
    kind: str
    seed: int
    density: Optional[float] = None  # sparse_binary only
    gmm_means: Optional[np.ndarray] = None  # (k, d_data), gmm only
    gmm_labels: Optional[np.ndarray] = None  # (n,) component of each row, gmm only

    @property
    def n(self) -> int:
        return self.samples.shape[0]

    @property
    def d_data(self) -> int:
        return self.samples.shape[1]


@dataclass
class Jitter:
    """Per-coordinate view perturbations, applied as noise -> dropout -> scale."""

    noise_std: float = 0.0
    dropout_p: float = 0.0
    log_scale_std: float = 0.0

    def __post_init__(self):
        if self.noise_std < 0 or self.log_scale_std < 0:
            raise ValueError("jitter stds must be >= 0")
        if not 0.0 <= self.dropout_p <= 1.0:
            raise ValueError("dropout_p must be in [0, 1]")

    @property
    def enabled(self) -> bool:
        return self.noise_std > 0 or self.dropout_p > 0 or self.log_scale_std > 0


@dataclass
class AugmentationChannel:
    kind: str
    mix_coefficient: float = 1.0  # A in [0, 1], gaussian_mix only
    jitter: Jitter = field(default_factory=Jitter)
    flip_fraction: float = 0.0  # bit_flip only

    def __post_init__(self):
        if self.kind not in CHANNEL_KINDS:
            raise ValueError(f"unknown channel kind {self.kind!r}")
        if not 0.0 <= self.mix_coefficient <= 1.0:
            raise ValueError("mix_coefficient must be in [0, 1]")
        if not 0.0 <= self.flip_fraction <= 1.0:
            raise ValueError("flip_fraction must be in [0, 1]")


@dataclass
class PairBatch:
    """Two conditionally independent views of the same base rows."""

    view_a: np.ndarray
    view_b: np.ndarray
    base_ids: np.ndarray

    def __post_init__(self):
        if self.view_a.shape != self.view_b.shape:
            raise ValueError("views must have identical shapes")


def sample_laplace(n: int, d_data: int, seed) -> Dataset:
    """n i.i.d. rows of Laplace(0, 1) entries (variance 2 per coordinate)."""
    _check_counts(n, d_data)
    rng = derive_rng(seed)
    samples = rng.laplace(0.0, 1.0, size=(n, d_data))
    return Dataset(samples=samples, kind="laplace", seed=_seed_int(seed))


def sample_gmm(n: int, d_data: int, k: int, seed) -> Dataset:
    """Equally weighted isotropic Gaussian mixture with fixed random means.

    Component means are drawn once from a dedicated sub-stream of `seed`
    and stored on the Dataset so regeneration and component_resample are
    exactly reproducible.  Unit covariance is shared by all components.
    """
    _check_counts(n, d_data)
    if k < 1:
        raise ValueError("k must be >= 1")
    means_rng = derive_rng(seed, 1)
    means = GMM_MEAN_SCALE * means_rng.standard_normal((k, d_data))
    rng = derive_rng(seed, 2)
    labels = rng.integers(0, k, size=n)
    samples = means[labels] + rng.standard_normal((n, d_data))
    return Dataset(
        samples=samples,
        kind="gmm",
        seed=_seed_int(seed),
        gmm_means=means,
        gmm_labels=labels,
    )


def sample_sparse_binary(n: int, d_data: int, density: float = 0.01, seed=0) -> Dataset:
    """i.i.d. Bernoulli(density) entries in {0, 1}."""
    _check_counts(n, d_data)
    if not 0.0 < density < 1.0:
        raise ValueError("density must be in (0, 1)")
    rng = derive_rng(seed)
    samples = (rng.random((n, d_data)) < density).astype(np.float64)
    return Dataset(samples=samples, kind="sparse_binary", seed=_seed_int(seed), density=density)


def augment_pair(dataset: Dataset, channel: AugmentationChannel, batch_ids, seed) -> PairBatch:
    """Draw two conditionally independent views for each base row.

    gaussian_mix: view = A*x + sqrt(1-A^2)*eps, then jitter.
    bit_flip: each zero entry flips to one with prob. flip_fraction, then jitter.
    component_resample: fresh draw from the row's mixture component, then jitter.
    """
    if channel.kind == "bit_flip" and dataset.kind != "sparse_binary":
        raise ValueError("bit_flip channel requires a sparse_binary dataset")
    if channel.kind == "component_resample" and dataset.kind != "gmm":
        raise ValueError("component_resample channel requires a gmm dataset")
    ids = np.asarray(batch_ids, dtype=np.int64)
    base = dataset.samples[ids]
    rng = derive_rng(seed)
    views = []
    for _ in range(2):
        if channel.kind == "gaussian_mix":
            a = channel.mix_coefficient
            # additive jitter noise folds into the mixing noise: both are
            # independent Gaussians added before dropout, so one draw with
            # combined variance has the identical law
            std = np.sqrt(max(0.0, 1.0 - a * a) + channel.jitter.noise_std**2)
            view = a * base
            if std > 0:
                view = view + std * rng.standard_normal(base.shape)
        elif channel.kind == "bit_flip":
            view = base.copy()
            if channel.flip_fraction > 0:
                flips = rng.random(base.shape) < channel.flip_fraction
                view[np.logical_and(flips, base == 0.0)] = 1.0
            view = _apply_additive_noise(view, channel.jitter, rng)
        else:  # component_resample
            means = dataset.gmm_means[dataset.gmm_labels[ids]]
            view = means + rng.standard_normal(base.shape)
            view = _apply_additive_noise(view, channel.jitter, rng)
        if channel.jitter.dropout_p > 0:
            keep = rng.random(view.shape) >= channel.jitter.dropout_p
            view = view * keep
        if channel.jitter.log_scale_std > 0:
            view = view * np.exp(channel.jitter.log_scale_std * rng.standard_normal(view.shape))
        views.append(view)
    return PairBatch(view_a=views[0], view_b=views[1], base_ids=ids)


def _apply_additive_noise(view, jitter: Jitter, rng) -> np.ndarray:
    if jitter.noise_std > 0:
        view = view + jitter.noise_std * rng.standard_normal(view.shape)
    return view


def _check_counts(n, d_data):
    if n < 1 or d_data < 1:
        raise ValueError("n and d_data must be >= 1")


def _seed_int(seed) -> int:
    if isinstance(seed, np.random.SeedSequence):
        ent = seed.entropy
        return int(ent if np.isscalar(ent) else ent[0])
    if isinstance(seed, np.random.Generator):
        return -1  # unseeded handle; regeneration contract does not apply
    return int(seed)
