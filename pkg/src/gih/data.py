"""Synthetic binary classification datasets and CIFAR-10 ingestion."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .tensor import SeededRng, gaussian_sample, gram_schmidt, read_matrix_bin, sym_eig, write_matrix_bin

ANIMAL_CLASSES = (2, 3, 4, 5, 6, 7)  # bird, cat, deer, dog, frog, horse
CIFAR_SIDE = 32
CIFAR_RECORD = 1 + 3 * CIFAR_SIDE * CIFAR_SIDE
CIFAR_RECORDS_PER_FILE = 10000
CIFAR_TRAIN_FILES = tuple(f"data_batch_{i}.bin" for i in range(1, 6))
CIFAR_TEST_FILES = ("test_batch.bin",)
LABEL_KINDS = ("linear", "quadratic", "sinusoidal")


class DegenerateLabelingError(ValueError):
    pass


class CifarFormatError(ValueError):
    pass


@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.float64)
        if self.X.ndim != 2 or self.X.shape[0] < 1:
            raise ValueError(f"X must be a non-empty m x D matrix, got {self.X.shape}")
        if self.y.shape != (self.X.shape[0],):
            raise ValueError("need one label per sample")
        if not np.all(np.isfinite(self.X)):
            raise ValueError("X has non-finite entries")
        if not np.all(np.abs(self.y) == 1.0):
            raise ValueError("labels must be +-1")

    @property
    def m(self) -> int:
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(self.X[idx], self.y[idx], dict(self.meta))

    def with_inputs(self, X: np.ndarray, **meta) -> "Dataset":
        return Dataset(X, self.y.copy(), {**self.meta, **meta})


def train_test_split(ds: Dataset, n_test: int) -> tuple[Dataset, Dataset]:
    """Last ``n_test`` samples form the test split (generators already randomize order)."""
    if not 0 < n_test < ds.m:
        raise ValueError("n_test must leave both splits non-empty")
    cut = ds.m - n_test
    return ds.subset(np.arange(cut)), ds.subset(np.arange(cut, ds.m))


def save_dataset(ds: Dataset, directory, name: str = "data") -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    write_matrix_bin(d / f"{name}.X.bin", ds.X)
    (d / f"{name}.y.csv").write_text("".join(f"{int(v)}\n" for v in ds.y))
    (d / f"{name}.meta.json").write_text(json.dumps(ds.meta, indent=2, sort_keys=True, default=_jsonable) + "\n")


def load_dataset(directory, name: str = "data") -> Dataset:
    d = Path(directory)
    X = read_matrix_bin(d / f"{name}.X.bin")
    y = np.array([float(t) for t in (d / f"{name}.y.csv").read_text().split()])
    meta = json.loads((d / f"{name}.meta.json").read_text())
    return Dataset(X, y, meta)


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(f"cannot serialize {type(o).__name__}")


# ---------------------------------------------------------------------------
# directions


def check_orthonormal(vectors, tol: float = 1e-8) -> np.ndarray:
    v = np.atleast_2d(np.asarray(vectors, dtype=np.float64))
    gram = v @ v.T
    if np.max(np.abs(gram - np.eye(v.shape[0]))) > tol:
        raise ValueError("directions must be orthonormal")
    return v


def random_directions(dim: int, r: int, seed: int) -> np.ndarray:
    """``r`` orthonormal directions (rows) drawn uniformly at random."""
    if not 1 <= r <= dim:
        raise ValueError("need 1 <= r <= dim")
    z = SeededRng(seed).generator().standard_normal((r, dim))
    basis = gram_schmidt(z)
    if basis.shape[0] != r:
        raise ValueError("failed to draw independent directions")
    return basis


def _complement_noise(gen, m: int, dim: int, sigma: float, dirs: np.ndarray) -> np.ndarray:
    z = gen.standard_normal((m, dim))
    return sigma * (z - (z @ dirs.T) @ dirs)


def _balanced_labels(m: int) -> np.ndarray:
    return np.where(np.arange(m) % 2 == 0, 1.0, -1.0)


# ---------------------------------------------------------------------------
# generators


def gen_circles(dim: int, u1, u2, r_plus: float, r_minus: float, m: int, sigma_noise: float,
                seed: int) -> Dataset:
    """Two concentric circles in span(u1, u2) with isotropic noise in the complement."""
    dirs = check_orthonormal([u1, u2])
    if r_plus == r_minus:
        raise ValueError("radii must differ")
    if sigma_noise < 0:
        raise ValueError("noise scale must be non-negative")
    gen = SeededRng(seed).generator()
    y = _balanced_labels(m)
    phi = gen.uniform(0.0, 2 * np.pi, m)
    r = np.where(y > 0, r_plus, r_minus)
    X = (r * np.cos(phi))[:, None] * dirs[0] + (r * np.sin(phi))[:, None] * dirs[1]
    X = X + _complement_noise(gen, m, dim, sigma_noise, dirs)
    meta = {"generator": "circles", "seed": seed, "r_plus": r_plus, "r_minus": r_minus,
            "sigma_noise": sigma_noise, "directions": dirs}
    return Dataset(X, y, meta)


def label_function(kind: str, proj: np.ndarray, b: float) -> np.ndarray:
    """``sgn(p + b)``, ``sgn(p^2 + b)`` or ``sgn(sin(p) + b)`` with sgn(0) = +1."""
    if kind == "linear":
        z = proj + b
    elif kind == "quadratic":
        z = proj**2 + b
    elif kind == "sinusoidal":
        z = np.sin(proj) + b
    else:
        raise ValueError(f"unknown label kind {kind!r}")
    return np.where(z >= 0, 1.0, -1.0)


def _check_labels(y: np.ndarray) -> np.ndarray:
    if np.all(y == y[0]):
        raise DegenerateLabelingError("labeling puts every sample in one class")
    return y


def _channel_slices(dim: int, channels: int) -> list[slice]:
    if dim % channels:
        raise ValueError("input dimension is not divisible by the channel count")
    step = dim // channels
    return [slice(c * step, (c + 1) * step) for c in range(channels)]


def channel_stats(X: np.ndarray, channels: int = 1) -> np.ndarray:
    """Per-channel (mean, std) computed over all samples and positions, shape ``(channels, 2)``."""
    out = []
    for sl in _channel_slices(X.shape[1], channels):
        block = X[:, sl]
        out.append((block.mean(), block.std()))
    return np.array(out)


def standardize_channels(X: np.ndarray, stats: np.ndarray) -> np.ndarray:
    Z = np.empty_like(X)
    for (mu, sd), sl in zip(stats, _channel_slices(X.shape[1], len(stats))):
        Z[:, sl] = (X[:, sl] - mu) / (sd if sd > 0 else 1.0)
    return Z


def gaussian_base(cov, m: int, seed: int, dim: int | None = None) -> np.ndarray:
    return gaussian_sample(SeededRng(seed).child(7), cov, m, dim)


def gen_direction_labeled(base, u, b: float = 0.0, kind: str = "linear", label_noise_ratio: float = 0.2,
                          seed: int = 0, channels: int = 1, stats: np.ndarray | None = None) -> Dataset:
    """Relabel ``base`` inputs by a function of their projection on ``u``.

    Labels are computed on ``x + eta`` where ``eta`` has per-channel variance
    ``label_noise_ratio`` times that channel's variance; inputs stay untouched.
    For the sinusoidal kind the noisy inputs are standardized per channel
    first, with ``stats`` (from :func:`channel_stats`) taken from the base
    itself unless supplied, e.g. from a training split.
    """
    X = base.X if isinstance(base, Dataset) else np.asarray(base, dtype=np.float64)
    u = check_orthonormal(u)[0]
    if label_noise_ratio < 0:
        raise ValueError("label noise ratio must be non-negative")
    own = channel_stats(X, channels)
    noisy = X
    if label_noise_ratio > 0:
        gen = SeededRng(seed).child(3).generator()
        eta = gen.standard_normal(X.shape)
        for (_, sd), sl in zip(own, _channel_slices(X.shape[1], channels)):
            eta[:, sl] *= np.sqrt(label_noise_ratio) * sd
        noisy = X + eta
    if kind == "sinusoidal":
        stats = own if stats is None else np.asarray(stats)
        noisy = standardize_channels(noisy, stats)
    y = _check_labels(label_function(kind, noisy @ u, b))
    meta = {"generator": "direction-labeled", "kind": kind, "b": b, "seed": seed,
            "label_noise_ratio": label_noise_ratio, "channels": channels, "direction": u}
    if kind == "sinusoidal":
        meta["channel_stats"] = stats
    return Dataset(X.copy(), y, meta)


def gen_isotropic_margin(dim: int, u, epsilon: float, sigma: float = 1.0, kind: str = "linear",
                         b: float = 0.0, m: int = 1000, seed: int = 0) -> Dataset:
    """``x = epsilon * alpha * u + omega`` with omega ~ N(0, sigma^2 (I - u u^T))."""
    u = check_orthonormal(u)
    if not (epsilon > 0 and sigma > 0):
        raise ValueError("epsilon and sigma must be positive")
    gen = SeededRng(seed).generator()
    alpha = gen.standard_normal(m)
    X = epsilon * alpha[:, None] * u[0] + _complement_noise(gen, m, dim, sigma, u)
    y = _check_labels(label_function(kind, X @ u[0], b))
    meta = {"generator": "isotropic-margin", "kind": kind, "epsilon": epsilon, "sigma": sigma,
            "b": b, "seed": seed, "direction": u[0]}
    return Dataset(X, y, meta)


def gen_sbh(dim: int, u1, u2, u3, epsilon: float, r_plus: float, r_minus: float, sigma_omega: float,
            m: int, seed: int) -> Dataset:
    """A linear cue on u1 plus a radial cue in span(u2, u3)."""
    dirs = check_orthonormal([u1, u2, u3])
    if r_plus == r_minus:
        raise ValueError("radii must differ")
    gen = SeededRng(seed).generator()
    y = np.where(gen.random(m) < 0.5, 1.0, -1.0)
    ab = gen.standard_normal((m, 2))
    z = ab @ dirs[1:]
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    z *= np.where(y > 0, r_plus, r_minus)[:, None]
    X = epsilon * y[:, None] * dirs[0] + z + _complement_noise(gen, m, dim, sigma_omega, dirs)
    meta = {"generator": "sbh", "epsilon": epsilon, "r_plus": r_plus, "r_minus": r_minus,
            "sigma_omega": sigma_omega, "seed": seed, "directions": dirs}
    return Dataset(X, _check_labels(y), meta)


def gen_covariance_gaussian(cov, m: int, seed: int) -> Dataset:
    """Inputs ~ N(0, cov / |cov|_2) with i.i.d. uniform random labels."""
    cov = np.asarray(cov, dtype=np.float64)
    top = float(sym_eig(cov).values[0])
    if not top > 0:
        raise ValueError("covariance must have a positive eigenvalue")
    rng = SeededRng(seed)
    X = gaussian_sample(rng.child(0), cov / top, m)
    y = np.where(rng.child(1).generator().random(m) < 0.5, 1.0, -1.0)
    return Dataset(X, _check_labels(y), {"generator": "covariance-gaussian", "seed": seed})


# ---------------------------------------------------------------------------
# CIFAR-10


def read_cifar_file(path) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(labels uint8 (n,), pixels uint8 (n, 3072))`` from one binary batch."""
    raw = Path(path).read_bytes()
    if len(raw) != CIFAR_RECORD * CIFAR_RECORDS_PER_FILE:
        raise CifarFormatError(
            f"{path}: expected {CIFAR_RECORDS_PER_FILE} records of {CIFAR_RECORD} bytes, got {len(raw)} bytes"
        )
    rec = np.frombuffer(raw, dtype=np.uint8).reshape(CIFAR_RECORDS_PER_FILE, CIFAR_RECORD)
    labels = rec[:, 0]
    if labels.max() > 9:
        raise CifarFormatError(f"{path}: label byte out of range")
    return labels.copy(), rec[:, 1:].copy()


def cifar2_label(label) -> np.ndarray:
    return np.where(np.isin(label, ANIMAL_CLASSES), 1.0, -1.0)


def downsample_area(pixels: np.ndarray, side: int, src: int = CIFAR_SIDE, channels: int = 3) -> np.ndarray:
    """Average non-overlapping blocks, keeping channel-major flat layout."""
    if src % side:
        raise ValueError(f"side {side} must divide {src}")
    f = src // side
    img = pixels.reshape(-1, channels, side, f, side, f)
    return img.mean(axis=(3, 5)).reshape(pixels.shape[0], -1)


def load_cifar2(path, per_class: int, downsample: int | None = 16, seed: int = 0,
                split: str = "train") -> Dataset:
    """Balanced animal / non-animal subset of CIFAR-10, pixels in [0, 1]."""
    names = CIFAR_TRAIN_FILES if split == "train" else CIFAR_TEST_FILES
    root = Path(path)
    missing = [n for n in names if not (root / n).is_file()]
    if missing:
        raise FileNotFoundError(f"CIFAR-10 files missing under {root}: {', '.join(missing)}")
    parts = [read_cifar_file(root / n) for n in names]
    labels = np.concatenate([p[0] for p in parts])
    pixels = np.concatenate([p[1] for p in parts])
    y_all = cifar2_label(labels)
    gen = SeededRng(seed).child(11).generator()
    chosen = []
    for cls in (1.0, -1.0):
        idx = np.flatnonzero(y_all == cls)
        if per_class > idx.size:
            raise ValueError(f"only {idx.size} samples available per class")
        chosen.append(np.sort(gen.choice(idx, per_class, replace=False)))
    # interleave classes so any prefix stays balanced
    order = np.stack(chosen, axis=1).reshape(-1)
    X = pixels[order].astype(np.float64) / 255.0
    if downsample and downsample != CIFAR_SIDE:
        X = downsample_area(X, downsample)
    side = downsample or CIFAR_SIDE
    meta = {"generator": "cifar2", "split": split, "per_class": per_class, "seed": seed,
            "channels": 3, "side": side}
    return Dataset(X, y_all[order], meta)


def cifar_available(path) -> bool:
    root = Path(path) if path else None
    return bool(root) and all((root / n).is_file() for n in CIFAR_TRAIN_FILES + CIFAR_TEST_FILES)


def describe(ds: Dataset) -> str:
    pos = int(np.sum(ds.y > 0))
    return f"{ds.meta.get('generator', 'dataset')}: m={ds.m} D={ds.dim} (+1: {pos}, -1: {ds.m - pos})"


def stack(datasets: Sequence[Dataset]) -> Dataset:
    return Dataset(np.vstack([d.X for d in datasets]), np.concatenate([d.y for d in datasets]),
                   dict(datasets[0].meta))
