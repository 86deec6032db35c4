"""Contrastive losses and the population functionals they estimate.

Implements the empirical InfoNCE loss with analytic gradients, the
alignment / uniformity-potential decomposition of its large-batch limit,
a Kozachenko-Leonenko entropy estimator, the entropy-and-norm regularized
objective, and the mean-shift surrogate used to probe plateau behavior.
"""

import json
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import digamma, gammaln

UNIT_TOL = 1e-6
_ROW_BLOCK_ELEMS = 1 << 25  # cap on scratch logits: rows_per_block * N


@dataclass
class LossParams:
    """Temperature and regularization constants.

    alpha is always stored as exactly 1/tau; beta=0 recovers plain InfoNCE.
    ball_radius is the radius of the norm-constraint set B (inf = all of R^d).
    """

    tau: float
    beta: float = 0.0
    lam: float = 1.0
    ball_radius: float = np.inf

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError("tau must be > 0")
        if self.beta < 0:
            raise ValueError("beta must be >= 0")
        if self.lam <= 0:
            raise ValueError("lambda must be > 0")
        if self.ball_radius <= 0:
            raise ValueError("ball_radius must be > 0")
        self.alpha = 1.0 / self.tau


@dataclass
class LossReport:
    """One evaluation of the decomposed objective."""

    infonce: float
    alignment: float
    uniformity_potential: float
    entropy_estimate: float
    mean_sq_norm: float
    regularized_j: float

    def to_json(self) -> str:
        return json.dumps({
            "infonce": self.infonce,
            "alignment": self.alignment,
            "uniformity_potential": self.uniformity_potential,
            "entropy_estimate": self.entropy_estimate,
            "mean_sq_norm": self.mean_sq_norm,
            "regularized_j": self.regularized_j,
        })


def _check_unit_rows(*mats):
    for m in mats:
        norms = np.linalg.norm(m, axis=1)
        if np.max(np.abs(norms - 1.0)) > UNIT_TOL:
            raise ValueError("rows must be unit-norm within 1e-6")


def infonce_loss(u: np.ndarray, v: np.ndarray, tau: float) -> float:
    """Mean over anchors of -log softmax of the positive logit.

    logits[i, j] = <u_i, v_j> / tau; row maxima are subtracted before
    exponentiation.  Large batches are processed in row blocks so the
    full logit matrix is never materialized (fixed block size keeps the
    floating-point reduction order deterministic).
    """
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape or u.ndim != 2 or u.shape[0] < 1:
        raise ValueError("u and v must be equal-shape (N, d) with N >= 1")
    _check_unit_rows(u, v)
    n = u.shape[0]
    block = max(1, _ROW_BLOCK_ELEMS // n)
    total = 0.0
    for lo in range(0, n, block):
        hi = min(n, lo + block)
        logits = (u[lo:hi] @ v.T) / tau
        mx = logits.max(axis=1, keepdims=True)
        lse = np.log(np.exp(logits - mx).sum(axis=1)) + mx[:, 0]
        pos = np.sum(u[lo:hi] * v[lo:hi], axis=1) / tau
        total += float(np.sum(lse - pos))
    return total / n


def infonce_grad(u: np.ndarray, v: np.ndarray, tau: float):
    """Gradients of infonce_loss w.r.t. the u and v rows as free points."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape or u.ndim != 2:
        raise ValueError("u and v must be equal-shape (N, d)")
    _check_unit_rows(u, v)
    n = u.shape[0]
    logits = (u @ v.T) / tau
    logits -= logits.max(axis=1, keepdims=True)
    p = np.exp(logits)
    p /= p.sum(axis=1, keepdims=True)
    # dL/dlogits = (softmax - I) / N
    d_logits = p.copy()
    d_logits[np.arange(n), np.arange(n)] -= 1.0
    d_logits /= n
    grad_u = d_logits @ v / tau
    grad_v = d_logits.T @ u / tau
    return grad_u, grad_v


def alignment_term(u: np.ndarray, v: np.ndarray) -> float:
    """Mean inner product of positive pairs."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ValueError("u and v must have equal shapes")
    _check_unit_rows(u, v)
    return float(np.mean(np.sum(u * v, axis=1)))


def uniformity_potential(u: np.ndarray, alpha: float) -> float:
    """V-statistic estimate of E_u log E_v exp(alpha <u, v>).

    The inner mean keeps the self term j=i (O(1/N) bias, consistent with
    the plain nested-expectation estimator).
    """
    u = np.asarray(u, dtype=np.float64)
    if u.ndim != 2 or u.shape[0] < 2:
        raise ValueError("need at least 2 rows")
    _check_unit_rows(u)
    n = u.shape[0]
    block = max(1, _ROW_BLOCK_ELEMS // n)
    total = 0.0
    for lo in range(0, n, block):
        hi = min(n, lo + block)
        g = alpha * (u[lo:hi] @ u.T)
        mx = g.max(axis=1, keepdims=True)
        total += float(np.sum(np.log(np.exp(g - mx).mean(axis=1)) + mx[:, 0]))
    return total / n


def entropy_estimate(z: np.ndarray, k: int = 3) -> float:
    """Kozachenko-Leonenko k-NN differential entropy (Euclidean balls).

    H ~= psi(n) - psi(k) + log V_d + (d/n) sum_i log eps_i, with eps_i the
    distance to the k-th neighbor.  Duplicate rows are dithered by 1e-12
    with a warning (the estimator needs a nonatomic law).
    """
    z = np.asarray(z, dtype=np.float64)
    n, d = z.shape
    if n < d + 2:
        raise ValueError("need n >= d + 2 samples")
    eps = _knn_distances(z, k)
    if np.any(eps == 0.0):
        warnings.warn("duplicate rows: dithering by 1e-12 for entropy estimate")
        dither = np.random.default_rng(0).standard_normal(z.shape) * 1e-12
        eps = _knn_distances(z + dither, k)
    log_vd = (d / 2.0) * np.log(np.pi) - gammaln(d / 2.0 + 1.0)
    return float(digamma(n) - digamma(k) + log_vd + d * np.mean(np.log(eps)))


def _knn_distances(z: np.ndarray, k: int) -> np.ndarray:
    """Distance to the k-th nearest neighbor (excluding self) per row."""
    n, d = z.shape
    if d <= 10 and n > 4096:
        tree = cKDTree(z)
        dist, _ = tree.query(z, k=k + 1)
        return dist[:, k]
    sq = np.sum(z * z, axis=1)
    block = max(1, _ROW_BLOCK_ELEMS // (8 * n))
    out = np.empty(n)
    for lo in range(0, n, block):
        hi = min(n, lo + block)
        d2 = sq[lo:hi, None] + sq[None, :] - 2.0 * (z[lo:hi] @ z.T)
        np.maximum(d2, 0.0, out=d2)
        out[lo:hi] = np.sqrt(np.partition(d2, k, axis=1)[:, k])
    return out


def entropy_gradient(z: np.ndarray, k: int = 3):
    """Gradient of entropy_estimate w.r.t. z with the k-NN graph held fixed.

    Returns (H, dH/dz).  Each pair (i, j*) with j* the k-th neighbor of i
    contributes (d/n) * (z_i - z_j*) / ||z_i - z_j*||^2 to row i and its
    negation to row j*.
    """
    z = np.asarray(z, dtype=np.float64)
    n, d = z.shape
    if n < d + 2:
        raise ValueError("need n >= d + 2 samples")
    sq = np.sum(z * z, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (z @ z.T)
    np.fill_diagonal(d2, np.inf)
    nbr = np.argpartition(d2, k - 1, axis=1)[:, :k]
    kth = nbr[np.arange(n), np.argmax(d2[np.arange(n)[:, None], nbr], axis=1)]
    diff = z - z[kth]
    eps2 = np.sum(diff * diff, axis=1)
    if np.any(eps2 == 0.0):
        raise ValueError("duplicate rows: entropy gradient undefined")
    log_vd = (d / 2.0) * np.log(np.pi) - gammaln(d / 2.0 + 1.0)
    h = float(digamma(n) - digamma(k) + log_vd + (d / 2.0) * np.mean(np.log(eps2)))
    contrib = (d / n) * diff / eps2[:, None]
    grad = contrib.copy()
    np.subtract.at(grad, kth, contrib)
    return h, grad


def regularized_objective(u: np.ndarray, v: np.ndarray, z: np.ndarray,
                          params: LossParams) -> LossReport:
    """Full decomposed report: J = Phi - alpha*align + beta*(-H + lam*E||Z||^2)."""
    z = np.asarray(z, dtype=np.float64)
    if np.isfinite(params.ball_radius):
        norms = np.linalg.norm(z, axis=1)
        if np.any(norms > params.ball_radius * (1 + 1e-12)):
            raise ValueError("raw embeddings fall outside the constraint ball")
    loss = infonce_loss(u, v, params.tau)
    align = alignment_term(u, v)
    phi = uniformity_potential(u, params.alpha)
    h = entropy_estimate(z)
    msn = float(np.mean(np.sum(z * z, axis=1)))
    j = phi - params.alpha * align + params.beta * (-h + params.lam * msn)
    return LossReport(
        infonce=loss,
        alignment=align,
        uniformity_potential=phi,
        entropy_estimate=h,
        mean_sq_norm=msn,
        regularized_j=j,
    )


def kl_to_gaussian(entropy: float, mean_sq_norm: float, d: int, lam: float) -> float:
    """KL(rho || N(0, (2 lam)^-1 I_d)) from entropy and second moment.

    Valid for the unconstrained case B = R^d, where the normalizer is
    closed-form: the KL equals -H + lam*E||Z||^2 + (d/2) log(pi/lam).
    """
    return -entropy + lam * mean_sq_norm + (d / 2.0) * np.log(np.pi / lam)


def surrogate_jq(u: np.ndarray, alpha: float, eta2: float) -> float:
    """Plateau surrogate: Phi_hat(u, alpha) - alpha*(1 - eta2)*||mean row||^2."""
    if not 0.0 <= eta2 <= 1.0:
        raise ValueError("eta2 must be in [0, 1]")
    phi = uniformity_potential(u, alpha)
    m = np.mean(np.asarray(u, dtype=np.float64), axis=0)
    return phi - alpha * (1.0 - eta2) * float(m @ m)
