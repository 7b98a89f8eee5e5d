"""Centralized training reference, K-sweep evaluation, confidence intervals.

evaluate() runs one eval-mode forward pass per test sample and reports, for
every K up to K_max, the top-K accuracy and (when per-sample beam powers are
available) the throughput ratio of the best pair inside the predicted set
against the true optimum. Both curves are non-decreasing in K and reach 1.0
at K = C_t * C_r.
"""

import csv
import json
from dataclasses import dataclass, field

import numpy as np
from scipy import stats as scipy_stats

from . import nn
from .errors import NumericError
from .fedavg import predict_proba, preprocess_dataset

__all__ = [
    "CentralTrainConfig",
    "EvalReport",
    "train_centralized",
    "evaluate",
    "monte_carlo",
    "REFERENCE_RESULTS",
]

# Published reference points for the two architectures this package is
# benchmarked against (centralized training on the ray-traced benchmark);
# kept as static constants for report context only.
REFERENCE_RESULTS = {
    "compact_2d": {
        "top10_accuracy": 0.9117,
        "top10_accuracy_ci95": 0.0028,
        "top10_throughput_ratio": 0.9478,
        "top10_throughput_ratio_ci95": 0.0061,
        "flops": 1.72e6,
        "params": 7462,
    },
    "baseline_3d": {
        "top10_accuracy": 0.8392,
        "top10_accuracy_ci95": 0.0093,
        "top10_throughput_ratio": 0.8615,
        "top10_throughput_ratio_ci95": 0.0082,
        "flops": 179.01e6,
        "params": 403677,
    },
}


@dataclass
class CentralTrainConfig:
    epochs: int = 20
    batch_size: int = 16
    lr: float = 1e-3
    lr_drop_factor: float = 0.1
    lr_drop_epoch: int = 10  # epochs after this 0-based index use lr * factor
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("need at least one epoch")
        if self.batch_size < 2:
            raise ValueError("batch size must be >= 2 (batch statistics)")
        if self.lr <= 0:
            raise ValueError("learning rate must be positive")


def train_centralized(cfg, spec, ds_train, grid, log_every=None):
    """Adam training with per-epoch reshuffling and a stepped LR drop.

    Deterministic per cfg.seed (one derived stream for the weight init, one
    for the shuffles). Non-finite loss aborts with the epoch/batch indices.
    Returns (theta, bn_state).
    """
    if len(ds_train) == 0:
        raise ValueError("training dataset is empty")
    inputs, labels = preprocess_dataset(ds_train, grid)
    init_seq, shuffle_seq = np.random.SeedSequence(cfg.seed).spawn(2)
    theta, bn_state = nn.init_params(spec, init_seq)
    shuffle_rng = np.random.default_rng(shuffle_seq)
    adam = nn.AdamState.zeros(theta.shape[0])

    n = len(labels)
    for epoch in range(cfg.epochs):
        lr = cfg.lr * (cfg.lr_drop_factor if epoch >= cfg.lr_drop_epoch else 1.0)
        order = shuffle_rng.permutation(n)
        epoch_loss = 0.0
        n_batches = 0
        for b, start in enumerate(range(0, n, cfg.batch_size)):
            idx = order[start : start + cfg.batch_size]
            loss, grad = nn.loss_and_grad(spec, theta, bn_state, inputs[idx], labels[idx])
            if not np.isfinite(loss):
                raise NumericError(f"training diverged at epoch {epoch}, batch {b}")
            adam, theta = nn.adam_step(adam, theta, grad, lr)
            epoch_loss += loss
            n_batches += 1
        if log_every and (epoch + 1) % log_every == 0:
            print(f"epoch {epoch + 1}/{cfg.epochs}: mean loss {epoch_loss / n_batches:.4f}")
    return theta, bn_state


@dataclass
class EvalReport:
    """Per-K metric curves plus model complexity for one evaluation pass."""

    k_values: np.ndarray
    accuracy: np.ndarray
    throughput: np.ndarray | None
    param_count: int
    flops: int
    n_samples: int
    seeds: dict = field(default_factory=dict)
    ci95: dict = field(default_factory=dict)

    def __post_init__(self):
        if np.any(np.diff(self.accuracy) < 0):
            raise ValueError("accuracy must be non-decreasing in K")
        if self.throughput is not None and np.any(np.diff(self.throughput) < -1e-12):
            raise ValueError("throughput ratio must be non-decreasing in K")

    def accuracy_at(self, k):
        return float(self.accuracy[k - 1])

    def throughput_at(self, k):
        if self.throughput is None:
            return None
        return float(self.throughput[k - 1])

    def to_dict(self):
        return {
            "k": [int(k) for k in self.k_values],
            "accuracy": [float(a) for a in self.accuracy],
            "throughput_ratio": None if self.throughput is None
            else [float(r) for r in self.throughput],
            "param_count": int(self.param_count),
            "flops": int(self.flops),
            "n_samples": int(self.n_samples),
            "seeds": self.seeds,
            "ci95": self.ci95,
            "reference": REFERENCE_RESULTS,
        }

    def to_json(self, path):
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)

    def write_sweep_csv(self, path):
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["k", "accuracy", "throughput_ratio"])
            for i, k in enumerate(self.k_values):
                ratio = "NA" if self.throughput is None else f"{self.throughput[i]:.6f}"
                w.writerow([int(k), f"{self.accuracy[i]:.6f}", ratio])


def evaluate(theta, bn_state, spec, ds_test, grid, k_max=None):
    """Accuracy and throughput-ratio curves for K = 1..k_max.

    The throughput curve is None when any test sample lacks beam powers.
    """
    if len(ds_test) == 0:
        raise ValueError("test dataset is empty")
    n_classes = spec.n_classes
    k_max = n_classes if k_max is None else min(k_max, n_classes)
    inputs, labels = preprocess_dataset(ds_test, grid)
    probs = predict_proba(spec, theta, bn_state, inputs)
    if probs.shape[1] != n_classes:
        raise ValueError(f"model emits {probs.shape[1]} classes, dataset has {n_classes}")

    order = np.argsort(-probs, axis=1, kind="stable")
    ranks = np.argmax(order == labels[:, None], axis=1)
    accuracy = np.array([np.mean(ranks < k) for k in range(1, k_max + 1)])

    throughput = None
    rows = ds_test.power_rows()
    if all(r is not None for r in rows):
        flat = np.stack(rows)
        ordered_powers = np.take_along_axis(flat, order, axis=1)
        best_in_prefix = np.maximum.accumulate(ordered_powers[:, :k_max], axis=1)
        denom = np.sum(np.log2(1.0 + flat.max(axis=1)))
        if denom == 0.0:
            throughput = np.ones(k_max)
        else:
            numer = np.sum(np.log2(1.0 + best_in_prefix), axis=0)
            throughput = numer / denom

    return EvalReport(
        k_values=np.arange(1, k_max + 1),
        accuracy=accuracy,
        throughput=throughput,
        param_count=nn.count_params(spec),
        flops=nn.count_flops(spec),
        n_samples=len(ds_test),
    )


def monte_carlo(run, n_runs=10, base_seed=0):
    """Mean and 95% Student-t half-width per metric over independent runs.

    `run` maps a seed to a dict of scalar metrics; run i gets base_seed + i.
    Returns {metric: (mean, half_width)}.
    """
    if n_runs < 2:
        raise ValueError("need at least two runs for a confidence interval")
    results = [run(base_seed + i) for i in range(n_runs)]
    metrics = {}
    for key in results[0]:
        values = np.array([r[key] for r in results], dtype=np.float64)
        mean = float(np.mean(values))
        sd = float(np.std(values, ddof=1))
        half = float(scipy_stats.t.ppf(0.975, n_runs - 1) * sd / np.sqrt(n_runs))
        metrics[key] = (mean, half)
    return metrics
