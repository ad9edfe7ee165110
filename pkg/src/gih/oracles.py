"""Closed-form reference geometries for models where the expectation is tractable.

These are pure functions; Monte-Carlo cross-checks live in the tests and the
``verify-theorems`` experiment.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .tensor import NotPositiveDefiniteError, SeededRng, as_symmetric, cholesky, sym_eig

A7_BRACKET = np.array([[1.0, 1.0, 0.0], [1.0, 2.0, 1.0], [0.0, 1.0, 1.0]])
A7_DIRECTIONS = np.array([[1.0, 2.0, 1.0], [-1.0, 0.0, 1.0], [1.0, -1.0, 1.0]])
A7_BRACKET_EIGENVALUES = np.array([3.0, 1.0, 0.0])


@dataclass(frozen=True)
class ConvIndexMaps:
    """Patch-extraction operators of a convolution.

    ``maps[j]`` is a binary ``D x K`` matrix with ``patch_j = maps[j].T @ x``
    for flat channel-major inputs; ``K = C * kh * kw``.
    """

    input_shape: tuple
    kernel: int
    stride: int = 1
    padding: int = 0

    @property
    def maps(self) -> np.ndarray:
        return _index_maps(tuple(self.input_shape), self.kernel, self.stride, self.padding)

    @property
    def n_patches(self) -> int:
        return self.maps.shape[0]

    def overlap(self, j1: int, j2: int) -> np.ndarray:
        """``M_j1 M_j2^T``: ones where coordinate pairs share a kernel slot."""
        m = self.maps
        return m[j1] @ m[j2].T

    def receptive_counts(self) -> np.ndarray:
        m = self.maps
        return np.einsum("jdk,jdk->d", m, m)


def _canonical_shape(shape: tuple) -> tuple[int, int, int, bool]:
    if len(shape) == 1:
        return 1, 1, shape[0], True
    if len(shape) == 2:
        return shape[0], 1, shape[1], True
    if len(shape) == 3:
        return shape[0], shape[1], shape[2], False
    raise ValueError(f"bad input shape {shape}")


def _index_maps(shape: tuple, kernel: int, stride: int, padding: int) -> np.ndarray:
    c, h, w, one_d = _canonical_shape(shape)
    kh, kw = (1, kernel) if one_d else (kernel, kernel)
    ph, pw = (0, padding) if one_d else (padding, padding)
    ho = (h + 2 * ph - kh) // stride + 1
    wo = (w + 2 * pw - kw) // stride + 1
    if kernel < 1 or stride < 1 or ho < 1 or wo < 1:
        raise ValueError(f"kernel {kernel} does not fit input {shape}")
    dim, K = c * h * w, c * kh * kw
    maps = np.zeros((ho * wo, dim, K))
    for oi in range(ho):
        for oj in range(wo):
            j = oi * wo + oj
            for ch in range(c):
                for a in range(kh):
                    for b in range(kw):
                        r, s = oi * stride + a - ph, oj * stride + b - pw
                        if 0 <= r < h and 0 <= s < w:
                            maps[j, (ch * h + r) * w + s, (ch * kh + a) * kw + b] = 1.0
    return maps


def oracle_mlp_identity(n: int, sigma_phi: float, sigma_omega: float, dim: int) -> np.ndarray:
    """Geometry of ``sum_i w_i relu(phi_i^T x)``: sigma_w^2 n sigma_phi^2 / 2 times identity."""
    if n < 0:
        raise ValueError("width must be non-negative")
    return sigma_omega**2 * n * sigma_phi**2 / 2.0 * np.eye(dim)


def oracle_convpool_G(input_shape: tuple, kernel: int, stride: int, n: int, sigma_omega: float,
                      sigma_phi: float, padding: int = 0) -> np.ndarray:
    """Linear conv (n channels) + global average pooling + linear readout.

    Gradient is ``(1/k) sum_j M_j sum_c w_c phi_c``, so the geometry is
    ``n sigma_w^2 sigma_phi^2 / k^2 * sum_{j1, j2} M_j1 M_j2^T`` with k patches.
    """
    maps = _index_maps(tuple(input_shape), kernel, stride, padding)
    k = maps.shape[0]
    total = maps.sum(axis=0)
    return n * sigma_omega**2 * sigma_phi**2 / k**2 * (total @ total.T)


class LemmaCheck(NamedTuple):
    analytic: np.ndarray
    mc: np.ndarray


def oracle_lemma_normalized_gaussian(dim: int, n_samples: int, seed: int = 0, chunk: int = 100_000) -> LemmaCheck:
    """E[d d^T / |d|^2] for standard Gaussian d is I / D; MC estimate alongside."""
    if dim < 2:
        raise ValueError("dimension must be at least 2")
    gen = SeededRng(seed).generator()
    acc = np.zeros((dim, dim))
    left = n_samples
    while left > 0:
        b = min(chunk, left)
        d = gen.standard_normal((b, dim))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        acc += d.T @ d
        left -= b
    mc = acc / n_samples
    return LemmaCheck(np.eye(dim) / dim, 0.5 * (mc + mc.T))


def oracle_linear_regression_delta(s, sigma_theta: float) -> np.ndarray:
    """Symmetrized evolution for f = theta^T x under SSE flow: -2 sigma^2 S."""
    return -2.0 * sigma_theta**2 * as_symmetric(s, tol=1e-8)


class CorollaryCheck(NamedTuple):
    lower: np.ndarray  # (k, k, K, K) per-pair lower bounds in kernel space
    upper: np.ndarray
    mc: np.ndarray  # per-pair MC estimates of E[theta theta^T / (s_j1 s_j2)]
    g_mc: np.ndarray  # implied input-space geometry
    sandwich_ok: bool
    worst_margin: float


def verify_corollary_bounds(input_shape: tuple, kernel: int, patch_covariances: Sequence[np.ndarray] | np.ndarray,
                            n_models: int, seed: int = 0, stride: int = 1) -> CorollaryCheck:
    """Simulate f = (1/k) sum_j theta^T M_j^T x / s_j(theta), s_j = sqrt(theta^T C_j theta).

    Each pair term E[theta theta^T / (s_j1 s_j2)] is checked against
    ``I / (K sqrt(l_j1 l_j2))`` with eigenvalue extremes of C_j1, C_j2
    (``l = max`` for the lower bound, ``min`` for the upper), in the Loewner
    order with tolerance 1e-2 times the upper bound's Frobenius norm. The
    1/K factor is the normalized-Gaussian second moment. The model assumes
    zero-mean data, so C_j is the patch covariance; that assumption is not
    checked here.
    """
    maps = _index_maps(tuple(input_shape), kernel, stride, 0)
    k, _, K = maps.shape
    covs = np.asarray(patch_covariances, dtype=np.float64)
    if covs.ndim == 2:
        covs = np.broadcast_to(covs, (k, K, K))
    if covs.shape != (k, K, K):
        raise ValueError(f"need {k} patch covariances of size {K}x{K}")
    lam_min, lam_max = np.empty(k), np.empty(k)
    for j in range(k):
        try:
            cholesky(covs[j])
        except NotPositiveDefiniteError:
            raise ValueError(f"patch covariance {j} is not positive definite") from None
        w = sym_eig(covs[j]).values
        lam_max[j], lam_min[j] = w[0], w[-1]

    gen = SeededRng(seed).generator()
    mc = np.zeros((k, k, K, K))
    left, chunk = n_models, 50_000
    while left > 0:
        b = min(chunk, left)
        theta = gen.standard_normal((b, K))
        scale = np.sqrt(np.einsum("nk,jkl,nl->jn", theta, covs, theta))
        z = theta[None, :, :] / scale[:, :, None]  # (k, b, K)
        mc += np.einsum("anp,bnq->abpq", z, z)
        left -= b
    mc /= n_models
    eye = np.eye(K) / K
    lower = eye[None, None] / np.sqrt(np.outer(lam_max, lam_max))[:, :, None, None]
    upper = eye[None, None] / np.sqrt(np.outer(lam_min, lam_min))[:, :, None, None]

    worst = np.inf
    for a in range(k):
        for b in range(k):
            tol = 1e-2 * np.linalg.norm(upper[a, b])
            sym = 0.5 * (mc[a, b] + mc[a, b].T)
            lo = np.linalg.eigvalsh(sym - lower[a, b])[0] + tol
            hi = np.linalg.eigvalsh(upper[a, b] - sym)[0] + tol
            worst = min(worst, lo, hi)
    g_mc = np.einsum("adp,abpq,beq->de", maps, mc, maps) / k**2
    return CorollaryCheck(lower, upper, mc, 0.5 * (g_mc + g_mc.T), bool(worst >= 0), float(worst))


class AppendixExample(NamedTuple):
    g: np.ndarray
    eigenvalues: np.ndarray
    directions: np.ndarray  # unnormalized eigen-directions, rows


def oracle_appendix_example(sigma_theta: float) -> AppendixExample:
    """Geometry of f = 1/2 [t1, t1 + t2, t2] x with t ~ N(0, sigma^2 I).

    The gradient is the bracket row, so G = sigma^2 / 4 times the 3x3
    overlap matrix [[1,1,0],[1,2,1],[0,1,1]] (eigenvalues 3, 1, 0 before
    scaling).
    """
    if not sigma_theta > 0:
        raise ValueError("sigma_theta must be positive")
    c = sigma_theta**2 / 4.0
    return AppendixExample(c * A7_BRACKET, c * A7_BRACKET_EIGENVALUES, A7_DIRECTIONS.copy())
