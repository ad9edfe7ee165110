"""Mini-batch SGD with momentum, run as vectorized ensembles.

Run ``r`` of an ensemble with master seed ``s`` initializes from the same
stream as replica ``r`` of a fresh-init geometry estimate with seed ``s``, and
shuffles from its own stream. All runs step in lockstep through identical
batch sizes, so an ensemble of one reproduces a single run exactly.
"""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import nn
from .data import Dataset
from .geometry import Ensemble, GeometrySnapshot, ProbingSpec, estimate_avg_geometry, geometric_velocity
from .tensor import SeededRng, write_matrix_bin

EVAL_BATCH = 256
LOSSES = ("sse", "bce")


class DivergenceError(FloatingPointError):
    def __init__(self, epoch: int, run: int | None = None):
        where = f" in run {run}" if run is not None else ""
        super().__init__(f"training diverged at epoch {epoch}{where}")
        self.epoch = epoch
        self.run = run


@dataclass(frozen=True)
class OptimizerConfig:
    lr: float = 0.1
    momentum: float = 0.9
    batch_size: int = 128  # 0 means full batch
    epochs: int = 10
    weight_decay: float = 0.0
    loss: str = "bce"

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError("learning rate must be positive")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must be in [0, 1)")
        if self.epochs < 1 or self.batch_size < 0:
            raise ValueError("need epochs >= 1 and batch_size >= 0")
        if self.loss not in LOSSES:
            raise ValueError(f"loss must be one of {LOSSES}")

    @classmethod
    def from_dict(cls, d: dict) -> "OptimizerConfig":
        return cls(**d)


@dataclass
class Trajectory:
    seed: int
    run: int
    snapshots: dict[int, np.ndarray] = field(default_factory=dict)
    epochs: list[int] = field(default_factory=list)
    train_acc: list[float] = field(default_factory=list)
    test_acc: list[float] = field(default_factory=list)
    loss: list[float] = field(default_factory=list)

    @property
    def final_params(self) -> np.ndarray:
        return self.snapshots[max(self.snapshots)]

    def save(self, directory, velocity: Sequence[float] | None = None) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        for ep, p in sorted(self.snapshots.items()):
            write_matrix_bin(d / f"params_{ep:05d}.bin", p[None, :])
        with open(d / "metrics.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "train_acc", "test_acc", "loss", "velocity"])
            for i, ep in enumerate(self.epochs):
                vel = "" if velocity is None else repr(float(velocity[i]))
                w.writerow([ep, repr(self.train_acc[i]), repr(self.test_acc[i]), repr(self.loss[i]), vel])


# ---------------------------------------------------------------------------
# losses


def loss_and_dlogit(kind: str, logits: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-sample loss and its derivative with respect to the logit."""
    if kind == "sse":
        r = logits - y
        return 0.5 * r * r, r
    z = -y * logits
    # log(1 + e^z) and its derivative -y * sigmoid(z), both overflow-safe
    loss = np.logaddexp(0.0, z)
    sig = np.exp(-np.logaddexp(0.0, -z))
    return loss, -y * sig


def _batched_logits(net: nn.Net, params: np.ndarray, X: np.ndarray) -> np.ndarray:
    out = [net.forward(params, X[None, a : a + EVAL_BATCH]) for a in range(0, X.shape[0], EVAL_BATCH)]
    return np.concatenate(out, axis=1)


def accuracy_from_logits(logits: np.ndarray, y: np.ndarray) -> np.ndarray:
    pred = np.where(logits >= 0, 1.0, -1.0)
    return np.mean(pred == y, axis=-1)


def evaluate(spec, params, dataset: Dataset) -> float | np.ndarray:
    """Fraction of samples with sign(logit) == y; a zero logit predicts +1.

    ``params`` may be one vector (returns a float) or an ``(N, P)`` stack.
    """
    net = nn._net(spec)
    p = np.asarray(params, dtype=np.float64)
    acc = accuracy_from_logits(_batched_logits(net, np.atleast_2d(p), dataset.X), dataset.y)
    return float(acc[0]) if p.ndim == 1 else acc


def full_gradient(spec, params, dataset: Dataset, loss: str = "sse") -> np.ndarray:
    """Mean per-sample loss gradient over the whole dataset, per model."""
    net = nn._net(spec)
    p = np.atleast_2d(np.asarray(params, dtype=np.float64))
    _, g = net.param_grads(p, dataset.X[None], lambda out: loss_and_dlogit(loss, out, dataset.y[None])[1])
    return g / dataset.m


# ---------------------------------------------------------------------------
# training


def run_rng(master_seed: int, run: int) -> SeededRng:
    return nn.replica_rng(SeededRng(master_seed), run)


def train_ensemble(spec, dataset: Dataset, opt: OptimizerConfig, n_runs: int = 1,
                   snapshot_epochs: Sequence[int] = (), master_seed: int = 0, test: Dataset | None = None,
                   init: np.ndarray | None = None) -> list[Trajectory]:
    """Train ``n_runs`` independent models in lockstep.

    Metrics are recorded for epoch 0 (before training) and after every
    epoch. Parameters are stored at ``snapshot_epochs``.
    """
    net = nn._net(spec)
    if n_runs < 1:
        raise ValueError("need at least one run")
    snaps = sorted(set(int(e) for e in snapshot_epochs))
    if snaps and (snaps[0] < 0 or snaps[-1] > opt.epochs):
        raise ValueError(f"snapshot epochs must lie in [0, {opt.epochs}]")
    params = nn.init_ensemble(net, master_seed, n_runs) if init is None else np.array(init, dtype=np.float64)
    if params.shape != (n_runs, net.n_params):
        raise ValueError("init has the wrong shape")
    vel = np.zeros_like(params)
    X, y = dataset.X, dataset.y
    m = dataset.m
    bs = m if opt.batch_size == 0 else min(opt.batch_size, m)
    trajs = [Trajectory(master_seed, r) for r in range(n_runs)]
    rngs = [run_rng(master_seed, r) for r in range(n_runs)]

    def record(epoch: int):
        logits = _batched_logits(net, params, X)
        loss, _ = loss_and_dlogit(opt.loss, logits, y[None])
        mean_loss = loss.mean(axis=1)
        if not np.all(np.isfinite(mean_loss)):
            bad = int(np.flatnonzero(~np.isfinite(mean_loss))[0])
            raise DivergenceError(epoch, bad)
        tr = accuracy_from_logits(logits, y)
        te = evaluate(net, params, test) if test is not None else np.full(n_runs, np.nan)
        for r, t in enumerate(trajs):
            t.epochs.append(epoch)
            t.train_acc.append(float(tr[r]))
            t.test_acc.append(float(te[r]))
            t.loss.append(float(mean_loss[r]))
            if epoch in snaps:
                t.snapshots[epoch] = params[r].copy()

    record(0)
    for epoch in range(1, opt.epochs + 1):
        if bs == m:
            orders = np.broadcast_to(np.arange(m), (n_runs, m))
        else:
            orders = np.stack([g.child(2, epoch).generator().permutation(m) for g in rngs])
        for a in range(0, m, bs):
            idx = orders[:, a : a + bs]
            yb = y[idx]
            _, g = net.param_grads(params, X[idx], lambda out: loss_and_dlogit(opt.loss, out, yb)[1])
            g /= idx.shape[1]
            if opt.weight_decay:
                g += opt.weight_decay * params
            if not np.all(np.isfinite(g)):
                bad = int(np.flatnonzero(~np.all(np.isfinite(g), axis=1))[0])
                raise DivergenceError(epoch, bad)
            vel = opt.momentum * vel - opt.lr * g
            params = params + vel
        record(epoch)
    return trajs


def train(spec, dataset: Dataset, opt: OptimizerConfig, snapshot_epochs: Sequence[int] = (0,),
          seed: int = 0, test: Dataset | None = None) -> Trajectory:
    return train_ensemble(spec, dataset, opt, 1, snapshot_epochs, seed, test)[0]


def trajectory_geometry(spec, dataset: Dataset, opt: OptimizerConfig, n_runs: int = 25,
                        snapshot_epochs: Sequence[int] = (0,), probing: ProbingSpec | None = None,
                        master_seed: int = 0, test: Dataset | None = None,
                        threads: int | None = None) -> tuple[list[GeometrySnapshot], list[Trajectory]]:
    """Average geometry over ``n_runs`` trained models at each snapshot epoch."""
    trajs = train_ensemble(spec, dataset, opt, n_runs, snapshot_epochs, master_seed, test)
    out = []
    for ep in sorted(set(int(e) for e in snapshot_epochs)):
        stack = np.stack([t.snapshots[ep] for t in trajs])
        out.append(estimate_avg_geometry(spec, Ensemble(stack, master_seed), probing, t=ep, threads=threads))
    return out, trajs


def velocities(snapshots: Sequence[GeometrySnapshot]) -> np.ndarray:
    """Geometric velocity between consecutive snapshots (first entry 0)."""
    out = [0.0]
    for prev, cur in zip(snapshots[:-1], snapshots[1:]):
        out.append(geometric_velocity(cur.g, prev.g))
    return np.array(out)


def config_dict(opt: OptimizerConfig) -> dict:
    return asdict(opt)
