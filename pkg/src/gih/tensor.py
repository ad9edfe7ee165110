"""Dense linear algebra and seeded randomness used by every estimator.

Matrices are plain ``float64`` numpy arrays. Symmetric inputs are validated
against a relative tolerance and then symmetrized exactly.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

SYM_TOL = 1e-12
PSD_CLIP = 1e-8

_MASK64 = (1 << 64) - 1


class NotPositiveDefiniteError(np.linalg.LinAlgError):
    pass


class UndefinedCorrelationError(ValueError):
    pass


class EigenDecomposition(NamedTuple):
    values: np.ndarray  # descending
    vectors: np.ndarray  # columns


def _finite(a: np.ndarray, what: str = "matrix") -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{what} has non-finite entries")
    return a


def as_symmetric(a, tol: float = SYM_TOL) -> np.ndarray:
    """Validate ``a`` as a symmetric matrix and return its exact symmetrization."""
    a = _finite(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
        raise ValueError(f"expected a non-empty square matrix, got shape {a.shape}")
    scale = max(1.0, float(np.linalg.norm(a)))
    if np.max(np.abs(a - a.T)) > tol * scale:
        raise ValueError("matrix is not symmetric")
    return 0.5 * (a + a.T)


# ---------------------------------------------------------------------------
# eigensolver


def _round_robin(n: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Pairings for one parallel Jacobi sweep; every index pair appears once."""
    m = n + (n % 2)
    players = list(range(m))
    rounds = []
    for _ in range(m - 1):
        p = np.array([players[i] for i in range(m // 2)])
        q = np.array([players[m - 1 - i] for i in range(m // 2)])
        keep = (p < n) & (q < n)
        lo, hi = np.minimum(p, q)[keep], np.maximum(p, q)[keep]
        rounds.append((lo, hi))
        players = [players[0]] + [players[-1]] + players[1:-1]
    return rounds


def jacobi_eig(a, tol: float = 1e-15, max_sweeps: int = 60) -> tuple[np.ndarray, np.ndarray]:
    """Cyclic Jacobi with round-robin ordering.

    Each round applies ``n/2`` disjoint rotations at once, so a round is a
    handful of vectorized row/column updates instead of ``n/2`` Python steps.
    Returns unsorted ``(eigenvalues, eigenvectors)``.
    """
    a = np.array(a, dtype=np.float64, copy=True)
    n = a.shape[0]
    v = np.eye(n)
    if n == 1:
        return a.diagonal().copy(), v
    rounds = _round_robin(n)
    norm = np.linalg.norm(a)
    if norm == 0.0:
        return np.zeros(n), v
    target = tol * norm
    for _ in range(max_sweeps):
        off = np.linalg.norm(a - np.diag(a.diagonal()))
        if off <= target:
            break
        for p_all, q_all in rounds:
            apq = a[p_all, q_all]
            active = np.abs(apq) > 1e-300
            if not np.any(active):
                continue
            p, q, apq = p_all[active], q_all[active], apq[active]
            app, aqq = a[p, p], a[q, q]
            theta = (aqq - app) / (2.0 * apq)
            sgn = np.where(theta >= 0.0, 1.0, -1.0)
            with np.errstate(over="ignore", divide="ignore"):
                t = sgn / (np.abs(theta) + np.sqrt(theta * theta + 1.0))
                t = np.where(np.isfinite(theta * theta), t, 0.5 / theta)
            c = 1.0 / np.sqrt(t * t + 1.0)
            s = t * c

            ap, aq = a[:, p], a[:, q]
            a[:, p] = c * ap - s * aq
            a[:, q] = s * ap + c * aq
            ap, aq = a[p, :], a[q, :]
            a[p, :] = c[:, None] * ap - s[:, None] * aq
            a[q, :] = s[:, None] * ap + c[:, None] * aq
            a[p, q] = 0.0
            a[q, p] = 0.0
            vp, vq = v[:, p], v[:, q]
            v[:, p] = c * vp - s * vq
            v[:, q] = s * vp + c * vq
    return a.diagonal().copy(), v


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def sym_eig(a, method: str = "auto") -> EigenDecomposition:
    """Eigendecomposition of a symmetric matrix, eigenvalues descending.

    ``method`` is ``"jacobi"``, ``"lapack"`` or ``"auto"`` (Jacobi up to
    dimension 256, LAPACK ``eigh`` beyond). Each eigenvector is signed so its
    largest-magnitude component is positive.
    """
    a = as_symmetric(a)
    if method == "auto":
        method = "jacobi" if a.shape[0] <= 256 else "lapack"
    if method == "jacobi":
        w, v = jacobi_eig(a)
    elif method == "lapack":
        w, v = np.linalg.eigh(a)
    else:
        raise ValueError(f"unknown eigensolver {method!r}")
    order = np.argsort(-w, kind="stable")
    return EigenDecomposition(w[order], _fix_signs(v[:, order]))


# ---------------------------------------------------------------------------
# factorizations and bases


def cholesky(a) -> np.ndarray:
    """Lower-triangular ``L`` with ``L @ L.T == a``."""
    a = as_symmetric(a)
    n = a.shape[0]
    L = np.zeros_like(a)
    for j in range(n):
        row = L[j, :j]
        d = a[j, j] - row @ row
        if not d > 0.0:
            raise NotPositiveDefiniteError(f"non-positive pivot {d:.3g} at column {j}")
        L[j, j] = np.sqrt(d)
        if j + 1 < n:
            L[j + 1 :, j] = (a[j + 1 :, j] - L[j + 1 :, :j] @ row) / L[j, j]
    return L


def gram_schmidt(vectors: Sequence[np.ndarray] | np.ndarray, drop_tol: float = 1e-10) -> np.ndarray:
    """Orthonormalize in order, dropping vectors whose residual norm is below ``drop_tol``.

    Returns an array with one basis vector per row (possibly zero rows).
    """
    vecs = [np.asarray(v, dtype=np.float64) for v in vectors]
    if not vecs:
        return np.zeros((0, 0))
    dim = vecs[0].shape[0]
    basis: list[np.ndarray] = []
    for v in vecs:
        if v.shape != (dim,):
            raise ValueError("all vectors must share one dimension")
        r = v.copy()
        if basis:
            q = np.array(basis)
            # two passes of classical GS keep orthogonality near machine precision
            r -= q.T @ (q @ r)
            r -= q.T @ (q @ r)
        nrm = np.linalg.norm(r)
        if nrm < drop_tol:
            continue
        basis.append(r / nrm)
    return np.array(basis) if basis else np.zeros((0, dim))


def frobenius_corr(a, b) -> float:
    """Normalized Frobenius inner product ``tr(a.T b) / (|a|_F |b|_F)``."""
    a = _finite(a)
    b = _finite(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise UndefinedCorrelationError("correlation with a zero matrix is undefined")
    c = float(np.sum(a * b) / (na * nb))
    return min(1.0, max(-1.0, c))


# ---------------------------------------------------------------------------
# randomness


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


@dataclass(frozen=True)
class SeededRng:
    """Counter-based stream handle: Philox keyed by ``(seed, stream)``.

    Identical handles give identical sequences; ``child`` derives new streams
    without touching the parent, so parallel replicas never share state.
    """

    seed: int
    stream: int = 0

    def generator(self) -> np.random.Generator:
        key = np.array([self.seed & _MASK64, self.stream & _MASK64], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))

    def child(self, *path: int) -> "SeededRng":
        s = self.stream
        for p in path:
            s = _splitmix64(s ^ _splitmix64(int(p) & _MASK64))
        return SeededRng(self.seed, s)


def sqrt_psd(cov) -> np.ndarray:
    """Factor ``B`` with ``B @ B.T == cov`` after clipping tiny negative eigenvalues."""
    cov = as_symmetric(cov)
    w, v = sym_eig(cov)
    lam_max = max(float(w[0]), 0.0)
    if w[-1] < -PSD_CLIP * max(lam_max, 1e-300):
        raise ValueError(f"covariance is not PSD (min eigenvalue {w[-1]:.3g})")
    return v * np.sqrt(np.clip(w, 0.0, None))


def gaussian_sample(rng: SeededRng, cov, n: int, dim: int | None = None) -> np.ndarray:
    """Draw ``n`` zero-mean Gaussian rows.

    ``cov`` is a covariance matrix or a scalar variance (then ``dim`` is required).
    """
    gen = rng.generator()
    if np.ndim(cov) == 0:
        if dim is None:
            raise ValueError("isotropic sampling needs dim")
        var = float(cov)
        if var < 0:
            raise ValueError("variance must be non-negative")
        return np.sqrt(var) * gen.standard_normal((n, dim))
    factor = sqrt_psd(cov)
    z = gen.standard_normal((n, factor.shape[1]))
    return z @ factor.T


# ---------------------------------------------------------------------------
# serialization


def write_matrix_csv(path, a) -> None:
    a = np.atleast_2d(_finite(a))
    with open(path, "w", encoding="ascii") as fh:
        for row in a:
            fh.write(",".join(repr(float(x)) for x in row) + "\n")


def read_matrix_csv(path) -> np.ndarray:
    rows = [
        [float(tok) for tok in line.split(",")]
        for line in Path(path).read_text(encoding="ascii").splitlines()
        if line.strip()
    ]
    return np.array(rows, dtype=np.float64)


def write_matrix_bin(path, a) -> None:
    """Little-endian ``u64 rows, u64 cols`` header, then row-major float64."""
    a = np.atleast_2d(_finite(a))
    rows, cols = a.shape
    with open(path, "wb") as fh:
        fh.write(struct.pack("<QQ", rows, cols))
        fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def read_matrix_bin(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < 16:
        raise ValueError("truncated matrix header")
    rows, cols = struct.unpack("<QQ", raw[:16])
    body = raw[16:]
    if len(body) != 8 * rows * cols:
        raise ValueError(f"expected {rows}x{cols} payload, got {len(body)} bytes")
    return np.frombuffer(body, dtype="<f8").reshape(rows, cols).astype(np.float64)
