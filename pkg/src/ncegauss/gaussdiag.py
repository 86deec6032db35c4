"""Coordinate-wise Gaussianity diagnostics for embedding matrices.

Coefficient of variation of norms, Anderson-Darling and D'Agostino-Pearson
tests per coordinate with pass fractions, negative-pair cosine statistics,
ZCA whitening, and the input-vs-embedding likelihood correlation probe.
"""

import json
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import stats
from scipy.special import ndtr

from ._util import pair_indices
from .synthdata import Dataset

AD_THRESHOLD = 0.752  # 5% critical value of the adjusted statistic, params estimated
DP_ALPHA = 0.05
PASS_FRACTION_FLOOR = 0.85
MAX_NEG_PAIRS = 1_000_000


@dataclass
class DiagnosticsReport:
    cv: float
    mean_norm: float
    ad_avg: float
    ad_pass_fraction: float
    dp_avg_p: float
    dp_pass_fraction: float
    alignment_mean: float
    alignment_se: float
    neg_cos_mean: float
    neg_cos_std: float
    mean_vector_norm: float
    plateau_residual: float
    degenerate_coordinates: int
    gaussian_verdict: bool

    _FIELDS = (
        "cv", "mean_norm", "ad_avg", "ad_pass_fraction", "dp_avg_p",
        "dp_pass_fraction", "alignment_mean", "alignment_se", "neg_cos_mean",
        "neg_cos_std", "mean_vector_norm", "plateau_residual",
        "degenerate_coordinates", "gaussian_verdict",
    )

    def to_dict(self) -> dict:
        out = {}
        for name in self._FIELDS:
            val = getattr(self, name)
            if isinstance(val, (np.floating, np.integer)):
                val = val.item()
            out[name] = val
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def cv_norms(z: np.ndarray) -> float:
    """Population std of row norms divided by their mean."""
    z = np.asarray(z, dtype=np.float64)
    if z.shape[0] < 2:
        raise ValueError("need at least 2 rows")
    norms = np.linalg.norm(z, axis=1)
    mean = norms.mean()
    if mean == 0.0:
        raise ValueError("mean norm is zero")
    return float(norms.std() / mean)


def anderson_darling(x: np.ndarray) -> float:
    """Adjusted A^2 statistic against a normal with estimated mean/variance.

    Returns A*^2 = A^2 (1 + 0.75/n + 2.25/n^2); compare against
    AD_THRESHOLD = 0.752 for a 5% test.  Degenerate (constant) input
    yields +inf.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    n = x.size
    if n < 8:
        raise ValueError("need at least 8 observations")
    s = x.std(ddof=1)
    if not np.isfinite(s) or s == 0.0:
        return np.inf
    w = np.sort((x - x.mean()) / s)
    z = np.clip(ndtr(w), 1e-300, 1.0 - 1e-16)
    i = np.arange(1, n + 1)
    a2 = -n - np.mean((2 * i - 1) * (np.log(z) + np.log1p(-z[::-1])))
    return float(a2 * (1.0 + 0.75 / n + 2.25 / n**2))


def dagostino_pearson(x: np.ndarray) -> float:
    """p-value of the K^2 omnibus test (chi-square with 2 dof)."""
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.size < 20:
        raise ValueError("need at least 20 observations")
    if x.std() == 0.0:
        raise ValueError("degenerate variance")
    return float(stats.normaltest(x).pvalue)


def negative_cosine_stats(normalized: np.ndarray, max_pairs: int = MAX_NEG_PAIRS):
    """Mean/std/mean-abs cosine over a deterministic subsample of i<j pairs."""
    u = np.asarray(normalized, dtype=np.float64)
    i, j = pair_indices(u.shape[0], max_pairs)
    cos = np.empty(i.size)
    block = max(1, (1 << 24) // max(1, u.shape[1]))
    for lo in range(0, i.size, block):
        hi = min(i.size, lo + block)
        cos[lo:hi] = np.sum(u[i[lo:hi]] * u[j[lo:hi]], axis=1)
    return float(cos.mean()), float(cos.std()), float(np.abs(cos).mean())


def coordinate_report(z: np.ndarray, normalized: np.ndarray, eta2: float = None,
                      pairs=None) -> DiagnosticsReport:
    """Full diagnostic battery over an embedding matrix.

    AD/DP run on each coordinate of z (raw embeddings); negative-pair
    cosine statistics come from the normalized rows; alignment and the
    plateau residual are filled when positive pairs / eta2 are supplied.
    """
    z = np.asarray(z, dtype=np.float64)
    if z.shape[0] < 20:
        raise ValueError("need at least 20 rows")
    n, d = z.shape
    ad_stats = np.empty(d)
    dp_pvals = np.empty(d)
    degenerate = 0
    for jdx in range(d):
        col = z[:, jdx]
        if col.std() == 0.0 or not np.all(np.isfinite(col)):
            ad_stats[jdx] = np.inf
            dp_pvals[jdx] = 0.0
            degenerate += 1
            continue
        ad_stats[jdx] = anderson_darling(col)
        dp_pvals[jdx] = dagostino_pearson(col)
    ad_avg = float(ad_stats.mean())
    ad_pass = float(np.mean(ad_stats < AD_THRESHOLD))
    dp_avg = float(dp_pvals.mean())
    dp_pass = float(np.mean(dp_pvals > DP_ALPHA))

    norms = np.linalg.norm(z, axis=1)
    mean_norm = float(norms.mean())
    cv = float(norms.std() / mean_norm) if mean_norm > 0 else np.nan

    neg_mean, neg_std, _ = negative_cosine_stats(normalized)
    mean_vec = np.mean(np.asarray(normalized, dtype=np.float64), axis=0)

    alignment_mean = np.nan
    alignment_se = np.nan
    if pairs is not None:
        u, v = pairs
        dots = np.sum(np.asarray(u) * np.asarray(v), axis=1)
        alignment_mean = float(dots.mean())
        alignment_se = float(dots.std(ddof=1) / np.sqrt(dots.size))
    plateau_residual = alignment_mean - eta2 if eta2 is not None else np.nan

    verdict = bool(
        ad_avg < AD_THRESHOLD
        and dp_avg > DP_ALPHA
        and ad_pass >= PASS_FRACTION_FLOOR
        and dp_pass >= PASS_FRACTION_FLOOR
    )
    return DiagnosticsReport(
        cv=cv,
        mean_norm=mean_norm,
        ad_avg=ad_avg,
        ad_pass_fraction=ad_pass,
        dp_avg_p=dp_avg,
        dp_pass_fraction=dp_pass,
        alignment_mean=alignment_mean,
        alignment_se=alignment_se,
        neg_cos_mean=neg_mean,
        neg_cos_std=neg_std,
        mean_vector_norm=float(np.linalg.norm(mean_vec)),
        plateau_residual=plateau_residual,
        degenerate_coordinates=degenerate,
        gaussian_verdict=verdict,
    )


def whiten(z: np.ndarray) -> np.ndarray:
    """ZCA transform: center, then multiply by the inverse symmetric
    square root of the sample covariance (ridge 1e-8 added if singular)."""
    z = np.asarray(z, dtype=np.float64)
    n, d = z.shape
    if d > n:
        raise ValueError("whitening needs n >= d")
    zc = z - z.mean(axis=0)
    cov = zc.T @ zc / n
    evals, evecs = np.linalg.eigh(cov)
    if evals.min() <= 1e-12 * evals.max():
        warnings.warn("singular covariance: adding 1e-8 ridge")
        evals = evals + 1e-8
    w = evecs @ ((1.0 / np.sqrt(evals))[:, None] * evecs.T)
    return zc @ w


def likelihood_correlation(inputs: Dataset, z: np.ndarray) -> float:
    """Pearson correlation of per-row input and embedding log-likelihoods.

    Inputs are scored under Laplace(0,1); embeddings under a Gaussian with
    fitted mean and diagonal covariance.
    """
    if inputs.kind != "laplace":
        raise ValueError("likelihood_correlation requires a laplace dataset")
    z = np.asarray(z, dtype=np.float64)
    x = inputs.samples
    if x.shape[0] != z.shape[0]:
        raise ValueError("row-count mismatch between inputs and embeddings")
    var = z.var(axis=0)
    if np.any(var == 0.0):
        raise ValueError("degenerate embedding variance")
    ll_x = -x.shape[1] * np.log(2.0) - np.abs(x).sum(axis=1)
    zc = z - z.mean(axis=0)
    ll_z = -0.5 * np.sum(np.log(2.0 * np.pi * var)) - 0.5 * np.sum(zc * zc / var, axis=1)
    return float(np.corrcoef(ll_x, ll_z)[0, 1])
