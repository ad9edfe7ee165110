"""Monte-Carlo estimates of the average input-space geometry and its evolution.

Replica ``i`` of an estimate draws its parameters from stream ``child(i, 0)``
and its probes from ``child(i, 1)`` of the estimate's seed. Replicas are
processed in fixed-size chunks whose partial sums are added in replica
order, so results do not depend on the number of worker threads.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, NamedTuple

import numpy as np

from . import nn
from .data import Dataset
from .tensor import (
    SeededRng,
    as_symmetric,
    cholesky,
    frobenius_corr,
    gram_schmidt,
    read_matrix_bin,
    sqrt_psd,
    sym_eig,
    write_matrix_bin,
)

CHUNK = 32
DEFAULT_REG = 1e-6
DEFAULT_EPS = 1e-4


def default_threads() -> int:
    try:
        return max(1, int(os.environ.get("GIH_THREADS", "1")))
    except ValueError:
        return 1


# ---------------------------------------------------------------------------
# probing and sources


@dataclass(frozen=True)
class ProbingSpec:
    """Where input gradients are evaluated.

    ``kind`` is ``"isotropic"`` (N(0, sigma^2 I)), ``"covariance"`` (N(0, cov))
    or ``"empirical"`` (rows of ``data`` drawn with replacement).
    """

    kind: str = "isotropic"
    sigma: float = 1.0
    n_probes: int = 1
    cov: np.ndarray | None = field(default=None, compare=False, repr=False)
    data: np.ndarray | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.n_probes < 1:
            raise ValueError("n_probes must be >= 1")
        if self.kind == "isotropic" and not self.sigma > 0:
            raise ValueError("probing std must be positive")
        if self.kind == "covariance" and self.cov is None:
            raise ValueError("covariance probing needs cov")
        if self.kind == "empirical" and self.data is None:
            raise ValueError("empirical probing needs data")
        if self.kind not in ("isotropic", "covariance", "empirical"):
            raise ValueError(f"unknown probing kind {self.kind!r}")
        if self.kind == "covariance":
            object.__setattr__(self, "_factor", sqrt_psd(self.cov))

    def sample(self, rng: SeededRng, dim: int) -> np.ndarray:
        gen = rng.generator()
        if self.kind == "isotropic":
            return self.sigma * gen.standard_normal((self.n_probes, dim))
        if self.kind == "covariance":
            factor = self._factor
            return gen.standard_normal((self.n_probes, factor.shape[1])) @ factor.T
        idx = gen.integers(0, self.data.shape[0], self.n_probes)
        return np.asarray(self.data, dtype=np.float64)[idx]

    def describe(self) -> dict:
        d = {"kind": self.kind, "n_probes": self.n_probes}
        if self.kind == "isotropic":
            d["sigma"] = self.sigma
        return d


def default_probing(spec: nn.ModelSpec, n_probes: int = 1) -> ProbingSpec:
    """Unit std for ReLU networks, 1e-4 when any GELU is present."""
    return ProbingSpec("isotropic", 1e-4 if _has_gelu(spec.layers) else 1.0, n_probes)


def _has_gelu(layers) -> bool:
    for layer in layers:
        if isinstance(layer, nn.GELU):
            return True
        if isinstance(layer, nn.ResidualBlock) and _has_gelu(layer.layers):
            return True
    return False


@dataclass(frozen=True)
class FreshInit:
    n_models: int
    seed: int = 0


@dataclass(frozen=True)
class Ensemble:
    """Given parameter vectors (rows); probes come from ``seed``."""

    params: np.ndarray = field(compare=False)
    seed: int = 0

    @property
    def n_models(self) -> int:
        return self.params.shape[0]


def _resolve_source(source) -> FreshInit | Ensemble:
    if isinstance(source, (FreshInit, Ensemble)):
        return source
    if isinstance(source, np.ndarray):
        return Ensemble(np.atleast_2d(source))
    raise TypeError("param source must be FreshInit, Ensemble or an (N, P) array")


def _chunk_params(net: nn.Net, src, start: int, stop: int) -> np.ndarray:
    if isinstance(src, FreshInit):
        return nn.init_ensemble(net, src.seed, stop - start, start)
    return np.asarray(src.params[start:stop], dtype=np.float64)


def _chunk_probes(probing: ProbingSpec, seed: int, start: int, stop: int, dim: int) -> np.ndarray:
    base = SeededRng(seed)
    return np.stack([probing.sample(nn.replica_rng(base, i).child(1), dim) for i in range(start, stop)])


def _reduce(n: int, work: Callable[[int, int], np.ndarray], threads: int | None, chunk: int = CHUNK):
    bounds = [(a, min(a + chunk, n)) for a in range(0, n, chunk)]
    threads = default_threads() if threads is None else max(1, int(threads))
    if threads == 1 or len(bounds) == 1:
        parts = [work(a, b) for a, b in bounds]
    else:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(lambda ab: work(*ab), bounds))
    total = parts[0].copy()
    for p in parts[1:]:
        total += p
    return total


# ---------------------------------------------------------------------------
# snapshots


@dataclass
class GeometrySnapshot:
    g: np.ndarray
    t: int
    n_models: int
    probing: ProbingSpec
    seed: int | None = None

    def save(self, directory, name: str = "G") -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        write_matrix_bin(d / f"{name}.bin", self.g)
        meta = {"t": self.t, "n_models": self.n_models, "probing": self.probing.describe(),
                "seed": self.seed, "dim": int(self.g.shape[0])}
        (d / f"{name}.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, directory, name: str = "G") -> "GeometrySnapshot":
        d = Path(directory)
        g = read_matrix_bin(d / f"{name}.bin")
        meta = json.loads((d / f"{name}.json").read_text())
        pr = meta["probing"]
        probing = ProbingSpec(pr["kind"], pr.get("sigma", 1.0), pr["n_probes"]) if pr["kind"] == "isotropic" \
            else ProbingSpec("isotropic", 1.0, pr["n_probes"])
        return cls(g, meta["t"], meta["n_models"], probing, meta.get("seed"))


@dataclass
class EvolutionEstimate:
    delta: np.ndarray
    n_models: int
    probing: ProbingSpec
    eps: float


def estimate_avg_geometry(spec, source, probing: ProbingSpec | None = None, t: int = 0,
                          threads: int | None = None) -> GeometrySnapshot:
    """Average of grad_x f grad_x f^T over models and probes."""
    net = nn._net(spec)
    src = _resolve_source(source)
    if src.n_models < 1:
        raise ValueError("need at least one model")
    probing = probing or default_probing(net.spec)
    dim = net.input_dim

    def work(a, b):
        params = _chunk_params(net, src, a, b)
        x = _chunk_probes(probing, src.seed, a, b, dim)
        g = net.input_grads(params, x).reshape(-1, dim)
        return g.T @ g

    total = _reduce(src.n_models, work, threads)
    g = as_symmetric(0.5 * (total + total.T) / (src.n_models * probing.n_probes), tol=1e-8)
    return GeometrySnapshot(g, t, src.n_models, probing, src.seed)


def sse_velocity(net: nn.Net, params: np.ndarray, X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Gradient-flow direction -sum_mu grad_theta f(x_mu) (f(x_mu) - y_mu) per model."""
    _, g = net.param_grads(params, X[None], lambda out: out - y[None, :])
    return -g


def estimate_geometry_evolution(spec, dataset: Dataset, probing: ProbingSpec | None = None,
                                n_models: int = 1000, eps: float = DEFAULT_EPS, seed: int = 0,
                                params: np.ndarray | None = None, antithetic: bool = False,
                                threads: int | None = None) -> EvolutionEstimate:
    """Estimate D + D^T with D = E[(mixed derivative along theta-dot) grad_x f^T].

    theta-dot is the full-batch SSE gradient flow on ``dataset``. Parameters
    are a fresh initialization ensemble unless ``params`` is given. With
    ``antithetic`` each replica is paired with its copy whose readout layer is
    negated (same probes); for a zero-mean symmetric readout this leaves the
    expectation unchanged and cancels the label term of the residual, which
    otherwise dominates the variance.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    net = nn._net(spec)
    probing = probing or default_probing(net.spec)
    src = Ensemble(np.atleast_2d(params), seed) if params is not None else FreshInit(n_models, seed)
    X, y = dataset.X, dataset.y
    dim = net.input_dim
    readout = net.readout_slice() if antithetic else None

    def one(p, x):
        v = sse_velocity(net, p, X, y)
        mixed = net.mixed_dvp(p, x, v, eps, allow_zero=True).reshape(-1, dim)
        g = net.input_grads(p, x).reshape(-1, dim)
        return mixed.T @ g

    def work(a, b):
        p = _chunk_params(net, src, a, b)
        x = _chunk_probes(probing, seed, a, b, dim)
        out = one(p, x)
        if readout is not None:
            p = p.copy()
            p[:, readout] *= -1.0
            out = 0.5 * (out + one(p, x))
        return out

    d = _reduce(src.n_models, work, threads) / (src.n_models * probing.n_probes)
    return EvolutionEstimate(d + d.T, src.n_models, probing, eps)


# ---------------------------------------------------------------------------
# analysis operators


def data_covariance(dataset) -> np.ndarray:
    """Unnormalized, uncentered second moment sum_mu x_mu x_mu^T."""
    X = getattr(dataset, "X", dataset)
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    s = X.T @ X
    return 0.5 * (s + s.T)


def geometric_velocity(g_t, g_prev) -> float:
    return 1.0 - frobenius_corr(g_t, g_prev)


def flip_spectrum(g) -> np.ndarray:
    """Same eigenvectors, eigenvalues assigned in reverse order."""
    w, v = sym_eig(g)
    out = (v * w[::-1]) @ v.T
    return 0.5 * (out + out.T)


class GIHBasis(NamedTuple):
    basis: np.ndarray  # rows, orthonormal, in priority order
    eigenvalues: np.ndarray


def _solve_lower(L: np.ndarray, b: np.ndarray) -> np.ndarray:
    n = L.shape[0]
    x = np.zeros_like(b, dtype=np.float64)
    for i in range(n):
        x[i] = (b[i] - L[i, :i] @ x[:i]) / L[i, i]
    return x


def _solve_upper(U: np.ndarray, b: np.ndarray) -> np.ndarray:
    n = U.shape[0]
    x = np.zeros_like(b, dtype=np.float64)
    for i in range(n - 1, -1, -1):
        x[i] = (b[i] - U[i, i + 1 :] @ x[i + 1 :]) / U[i, i]
    return x


def generalized_gih_basis(g, s, lambda_reg: float = DEFAULT_REG) -> GIHBasis:
    """Solve S v = lambda (G + reg I) v, order by descending lambda, orthonormalize.

    The ridge is ``lambda_reg * tr(G) / D`` so it scales with G.
    """
    g = as_symmetric(g, tol=1e-8)
    s = as_symmetric(s, tol=1e-8)
    if not lambda_reg > 0:
        raise ValueError("lambda_reg must be positive")
    dim = g.shape[0]
    ridge = lambda_reg * np.trace(g) / dim
    if not ridge > 0:
        ridge = lambda_reg
    L = cholesky(g + ridge * np.eye(dim))
    # whitened problem L^-1 S L^-T w = lambda w, then v = L^-T w
    a = _solve_lower(L, _solve_lower(L, s).T)
    w, u = sym_eig(0.5 * (a + a.T))
    v = _solve_upper(L.T, u)
    v = v / np.linalg.norm(v, axis=0)
    return GIHBasis(gram_schmidt(list(v.T)), w)


def project_out_features(dataset, basis, k: int):
    """Apply Q_k = I - sum_{i<k} v_i v_i^T to every sample."""
    basis = np.atleast_2d(np.asarray(basis, dtype=np.float64))
    X = getattr(dataset, "X", dataset)
    dim = np.shape(X)[1]
    if not 0 <= k <= dim:
        raise ValueError(f"k must be in [0, {dim}]")
    if k > basis.shape[0]:
        raise ValueError("basis has fewer than k vectors")
    v = basis[:k]
    if k and np.max(np.abs(v @ v.T - np.eye(k))) > 1e-8:
        raise ValueError("basis is not orthonormal")
    Xp = np.asarray(X, dtype=np.float64) - (np.asarray(X) @ v.T) @ v
    if isinstance(dataset, Dataset):
        return dataset.with_inputs(Xp, projected_k=k)
    return Xp


def explained_variance(s, basis) -> np.ndarray:
    basis = np.atleast_2d(np.asarray(basis, dtype=np.float64))
    return np.einsum("ij,jk,ik->i", basis, np.asarray(s), basis)


def variance_matched_cutoff(s, target_basis, k: int, candidate_basis) -> int:
    """Smallest k' whose candidate directions explain at least the target's top-k variance."""
    s = as_symmetric(s, tol=1e-8)
    if k <= 0:
        return 0
    target = float(np.sum(explained_variance(s, np.asarray(target_basis)[:k])))
    cum = np.cumsum(explained_variance(s, candidate_basis))
    slack = 1e-12 * max(1.0, abs(float(np.trace(s))))
    hit = np.flatnonzero(cum >= target - slack)
    dim = s.shape[0]
    return int(min(hit[0] + 1, dim)) if hit.size else dim


def sample_scores(X, g) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    norms = np.linalg.norm(X, axis=1)
    if np.any(norms == 0):
        raise ValueError("cannot score a zero vector")
    Z = X / norms[:, None]
    return np.einsum("ij,jk,ik->i", Z, np.asarray(g), Z)


def sample_score(x, g) -> float:
    return float(sample_scores(np.asarray(x)[None, :], g)[0])


def prune_samples(dataset: Dataset, g, fraction: float, mode: str = "score", seed: int = 0) -> Dataset:
    """Drop floor(fraction * m) samples: lowest scores first, or a uniform subset."""
    if not 0 <= fraction < 1:
        raise ValueError("fraction must be in [0, 1)")
    m = dataset.m
    n_drop = int(math.floor(fraction * m + 1e-9))
    if n_drop == 0:
        return dataset.subset(np.arange(m))
    if mode == "score":
        scores = sample_scores(dataset.X, g)
        drop = np.lexsort((np.arange(m), scores))[:n_drop]
    elif mode == "random":
        drop = SeededRng(seed).child(5).generator().permutation(m)[:n_drop]
    else:
        raise ValueError(f"unknown pruning mode {mode!r}")
    keep = np.setdiff1d(np.arange(m), drop)
    out = dataset.subset(keep)
    out.meta["pruned"] = {"mode": mode, "fraction": fraction, "removed": n_drop}
    return out
