"""Sampling and convergence checks on the unit sphere.

Uniform and von Mises-Fisher sampling, scaled coordinate projections, the
total-variation rate bound 2(k+3)/(d-k-3) for Gaussian convergence of
projections, and empirical KS / histogram-TV distances to the standard
normal.  Quadrature helpers evaluate vMF moments and KL divergence from
the 1-d radial marginal.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import integrate
from scipy.special import ndtr

from ._util import derive_rng

UNIT_TOL = 1e-9
TV_GRID_LO, TV_GRID_HI, TV_GRID_BINS = -5.0, 5.0, 100


@dataclass
class SphereSample:
    points: np.ndarray  # (n, d), unit rows
    law: str  # "uniform" | "vmf"
    kappa: float = 0.0
    direction: Optional[np.ndarray] = None  # vmf only

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]


def sample_uniform_sphere(n: int, d: int, seed=0) -> SphereSample:
    """Normalized i.i.d. standard normal rows."""
    if d < 2:
        raise ValueError("d must be >= 2")
    rng = derive_rng(seed)
    g = rng.standard_normal((n, d))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    return SphereSample(points=g, law="uniform")


def sample_vmf(n: int, d: int, kappa: float, direction: np.ndarray, seed=0) -> SphereSample:
    """von Mises-Fisher sample via Wood's rejection sampler.

    kappa=0 degenerates to the uniform law.  The cosine w against the
    mean direction is drawn by rejection from a transformed Beta
    proposal; the tangential part is uniform on the orthogonal sphere,
    and a Householder reflection rotates the pole onto `direction`.
    """
    if kappa < 0:
        raise ValueError("kappa must be >= 0")
    mu = np.asarray(direction, dtype=np.float64)
    if mu.shape != (d,) or abs(np.linalg.norm(mu) - 1.0) > 1e-6:
        raise ValueError("direction must be a unit vector of length d")
    rng = derive_rng(seed)
    w = _sample_vmf_cosines(n, d, kappa, rng)
    # tangent directions uniform on S^{d-2} inside the pole's orthogonal complement
    g = rng.standard_normal((n, d - 1))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    points = np.empty((n, d))
    points[:, :-1] = np.sqrt(np.maximum(0.0, 1.0 - w * w))[:, None] * g
    points[:, -1] = w
    points = _reflect_pole(points, mu)
    points /= np.linalg.norm(points, axis=1, keepdims=True)
    return SphereSample(points=points, law="vmf", kappa=kappa, direction=mu)


def _sample_vmf_cosines(n: int, d: int, kappa: float, rng) -> np.ndarray:
    dm = d - 1
    b = dm / (np.sqrt(4.0 * kappa * kappa + dm * dm) + 2.0 * kappa)
    x = (1.0 - b) / (1.0 + b)
    c = kappa * x + dm * np.log(1.0 - x * x)
    out = np.empty(0)
    while out.size < n:
        m = max(64, int(1.3 * (n - out.size)))
        z = rng.beta(dm / 2.0, dm / 2.0, size=m)
        w = (1.0 - (1.0 + b) * z) / (1.0 - (1.0 - b) * z)
        u = rng.random(m)
        ok = kappa * w + dm * np.log(1.0 - x * w) - c >= np.log(u)
        out = np.concatenate([out, w[ok]])
    return out[:n]


def _reflect_pole(points: np.ndarray, mu: np.ndarray) -> np.ndarray:
    """Householder reflection taking e_d to mu, applied to each row."""
    e = np.zeros_like(mu)
    e[-1] = 1.0
    h = e - mu
    norm = np.linalg.norm(h)
    if norm < 1e-12:
        return points
    h /= norm
    return points - 2.0 * np.outer(points @ h, h)


def project_scaled(sample: SphereSample, k: int) -> np.ndarray:
    """First k coordinates of each row, scaled by sqrt(d)."""
    d = sample.d
    if not 1 <= k <= d - 4:
        raise ValueError("need 1 <= k <= d - 4")
    return np.sqrt(d) * sample.points[:, :k]


def tv_rate_bound(k: int, d: int) -> float:
    """Total-variation bound 2(k+3)/(d-k-3) for sqrt(d)-scaled k-projections."""
    if not 1 <= k <= d - 4:
        raise ValueError("need 1 <= k <= d - 4")
    return 2.0 * (k + 3) / (d - k - 3)


def ks_to_standard_normal(x: np.ndarray) -> float:
    """Kolmogorov-Smirnov distance of a sample to N(0, 1) (fixed params)."""
    x = np.sort(np.asarray(x, dtype=np.float64))
    n = x.size
    cdf = ndtr(x)
    up = np.arange(1, n + 1) / n - cdf
    lo = cdf - np.arange(0, n) / n
    return float(max(up.max(), lo.max()))


def empirical_gauss_distance(projected: np.ndarray) -> dict:
    """KS and histogram-TV distances of a scaled projection to N(0, I_k).

    ks is the max per-coordinate KS distance to N(0,1).  tv_hist is half
    the L1 gap between the empirical histogram and the Gaussian cell
    masses on a fixed 100-bin-per-axis grid over [-5, 5]^k (k <= 2), with
    out-of-range mass counted as one extra cell.
    """
    projected = np.atleast_2d(np.asarray(projected, dtype=np.float64))
    if projected.ndim != 2:
        raise ValueError("projected must be (n, k)")
    n, k = projected.shape
    if n < 1000:
        import warnings

        warnings.warn("fewer than 1000 samples: distance estimates are unstable")
    ks = max(ks_to_standard_normal(projected[:, j]) for j in range(k))
    result = {"ks": ks}
    if k <= 2:
        result["tv_hist"] = _tv_histogram(projected)
    else:
        result["tv_hist"] = np.nan
    return result


def _tv_histogram(projected: np.ndarray) -> float:
    n, k = projected.shape
    edges = np.linspace(TV_GRID_LO, TV_GRID_HI, TV_GRID_BINS + 1)
    cell = ndtr(edges[1:]) - ndtr(edges[:-1])
    if k == 1:
        hist, _ = np.histogram(projected[:, 0], bins=edges)
        gauss = cell
    else:
        hist, _, _ = np.histogram2d(projected[:, 0], projected[:, 1], bins=(edges, edges))
        hist = hist.ravel()
        gauss = np.outer(cell, cell).ravel()
    emp = hist / n
    tv = 0.5 * np.abs(emp - gauss).sum()
    tv += 0.5 * abs((1.0 - emp.sum()) - (1.0 - gauss.sum()))
    return float(tv)


def scaled_projection_grid(n: int, d_grid, k: int, seed=0, chunk: int = 65536) -> dict:
    """Scaled k-projections of uniform sphere samples, coupled across d.

    One pool of N(0,1) variables is shared by all dimensions in d_grid:
    for each d the projection uses the same first k coordinates and the
    norm of the first d columns, so distance metrics vary smoothly in d
    (common random numbers).  Returns {d: (n, k) array}; memory stays at
    chunk * max(d_grid) floats.
    """
    d_grid = sorted(set(int(d) for d in d_grid))
    d_max = d_grid[-1]
    if not 1 <= k <= min(d_grid) - 4:
        raise ValueError("need 1 <= k <= min(d) - 4")
    rng = derive_rng(seed)
    out = {d: np.empty((n, k)) for d in d_grid}
    done = 0
    while done < n:
        m = min(chunk, n - done)
        g = rng.standard_normal((m, d_max))
        sq = g * g
        lead = g[:, :k]
        prev_d, acc = 0, np.zeros(m)
        for d in d_grid:
            acc = acc + sq[:, prev_d:d].sum(axis=1)
            prev_d = d
            out[d][done:done + m] = np.sqrt(d) * lead / np.sqrt(acc)[:, None]
        done += m
    return out


# ---------------------------------------------------------------------------
# vMF quadrature: moments and KL from the 1-d cosine marginal.
# Under vMF(kappa) the cosine t against the mean direction has density
# proportional to exp(kappa*t) (1-t^2)^((d-3)/2) on [-1, 1]; kappa=0 gives
# the uniform-sphere marginal.  Given t the tangential part is uniform for
# both laws, so KL(vMF || uniform) equals the KL of the t-marginals.
# ---------------------------------------------------------------------------


def _vmf_log_density_t(t, d, kappa):
    return kappa * t + 0.5 * (d - 3) * np.log1p(-t * t)


def _vmf_t_normalizer(d: int, kappa: float) -> float:
    val, _ = integrate.quad(
        lambda t: np.exp(_vmf_log_density_t(t, d, kappa)), -1.0, 1.0, limit=200)
    return val


def vmf_mean_resultant(d: int, kappa: float) -> float:
    """E[<u, direction>] for vMF(kappa) on S^{d-1}, by quadrature."""
    if kappa == 0:
        return 0.0
    z = _vmf_t_normalizer(d, kappa)
    val, _ = integrate.quad(
        lambda t: t * np.exp(_vmf_log_density_t(t, d, kappa)) / z, -1.0, 1.0, limit=200)
    return float(val)


def vmf_kl_uniform(d: int, kappa: float) -> float:
    """KL(vMF(kappa) || uniform) on S^{d-1}, by quadrature of the t-marginal."""
    if kappa == 0:
        return 0.0
    zk = _vmf_t_normalizer(d, kappa)
    z0 = _vmf_t_normalizer(d, 0.0)
    # log ratio of densities: kappa*t - log(zk/z0)
    mean_t = vmf_mean_resultant(d, kappa)
    return float(kappa * mean_t - np.log(zk / z0))
