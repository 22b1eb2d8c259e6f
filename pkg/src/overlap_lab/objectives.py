"""Synthetic distributed objectives with analytically known constants.

Two families are provided.  QuadraticEnsemble gives every worker a quadratic
bowl with a shared diagonal Hessian but its own center, so smoothness,
gradient diversity and the global optimum are all available in closed form.
LogisticEnsemble is a regularised binary-classification objective over
per-worker datasets; its constants are only bounded, not exact, which is why
bound checking is restricted to the quadratic family.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import RngStream, as_param_vector, split_rng

__all__ = [
    "Constants",
    "QuadraticEnsemble",
    "LogisticEnsemble",
    "make_quadratic",
    "make_cluster_data",
    "binary_labels",
    "load_ensemble",
]


@dataclass(frozen=True)
class Constants:
    """Problem constants used by the convergence analysis.

    smoothness      L such that every local gradient is L-Lipschitz
    grad_diversity  mean squared deviation of local from global gradients
    f_inf           infimum of the global objective
    exact           True when all three are exact rather than bounds/absent
    """

    smoothness: float
    grad_diversity: float | None
    f_inf: float | None
    exact: bool


@dataclass
class QuadraticEnsemble:
    """Per-worker quadratics F_i(x) = 0.5 (x - c_i)^T A (x - c_i), A diagonal.

    All workers share the Hessian diagonal; heterogeneity enters only through
    the centers.  Stochastic gradients add Gaussian noise with per-coordinate
    variance sigma^2 / d, so the expected squared noise norm is sigma^2
    exactly.
    """

    hessian: np.ndarray   # (d,) positive diagonal
    centers: np.ndarray   # (m, d)
    sigma: float

    def __post_init__(self):
        self.hessian = np.asarray(self.hessian, dtype=np.float64)
        self.centers = np.asarray(self.centers, dtype=np.float64)
        if self.hessian.ndim != 1 or self.centers.ndim != 2:
            raise ValueError("hessian must be (d,), centers must be (m, d)")
        if self.centers.shape[1] != self.hessian.shape[0]:
            raise ValueError("centers and hessian dimension mismatch")
        if not np.all(self.hessian > 0.0):
            raise ValueError("hessian diagonal must be positive")
        if self.sigma < 0.0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")

    @property
    def m(self) -> int:
        return self.centers.shape[0]

    @property
    def d(self) -> int:
        return self.hessian.shape[0]

    @property
    def noise_scale(self) -> float:
        """Per-coordinate standard deviation of the gradient noise."""
        return self.sigma / np.sqrt(self.d)

    def _check_worker(self, worker: int):
        if not 0 <= worker < self.m:
            raise IndexError(f"worker {worker} out of range for m={self.m}")

    def local_value(self, worker: int, x: np.ndarray) -> float:
        self._check_worker(worker)
        diff = x - self.centers[worker]
        return 0.5 * float(np.dot(self.hessian * diff, diff))

    def local_grad(self, worker: int, x: np.ndarray) -> np.ndarray:
        """Exact gradient of worker's objective."""
        self._check_worker(worker)
        x = as_param_vector(x)
        if x.shape[0] != self.d:
            raise ValueError(f"expected dimension {self.d}, got {x.shape[0]}")
        return self.hessian * (x - self.centers[worker])

    def stochastic_grad(self, worker: int, x: np.ndarray,
                        gen: np.random.Generator) -> np.ndarray:
        """Local gradient plus Gaussian noise drawn from the worker's stream."""
        g = self.local_grad(worker, x)
        return g + gen.standard_normal(self.d) * self.noise_scale

    def global_grad(self, x: np.ndarray) -> np.ndarray:
        """Gradient of the mean objective, exact and noise free."""
        x = as_param_vector(x)
        return self.hessian * (x - self.centers.mean(axis=0))

    def objective_value(self, x: np.ndarray) -> float:
        diffs = x - self.centers
        return 0.5 * float(np.mean(np.sum(self.hessian * diffs * diffs, axis=1)))

    def constants(self) -> Constants:
        """Exact smoothness, gradient diversity, and optimum value."""
        c_bar = self.centers.mean(axis=0)
        dev = self.hessian * (self.centers - c_bar)
        kappa_sq = float(np.mean(np.sum(dev * dev, axis=1)))
        return Constants(
            smoothness=float(self.hessian.max()),
            grad_diversity=kappa_sq,
            f_inf=self.objective_value(c_bar),
            exact=True,
        )

    def to_config(self) -> dict:
        return {
            "type": "quadratic",
            "hessian": self.hessian.tolist(),
            "centers": self.centers.tolist(),
            "sigma": self.sigma,
        }

    @classmethod
    def from_config(cls, cfg: dict) -> "QuadraticEnsemble":
        return cls(
            hessian=np.array(cfg["hessian"], dtype=np.float64),
            centers=np.array(cfg["centers"], dtype=np.float64),
            sigma=float(cfg["sigma"]),
        )


def make_quadratic(m: int, d: int, spread: float, condition: float,
                   sigma: float, rng: RngStream) -> QuadraticEnsemble:
    """Draw a quadratic ensemble: Hessian diagonal log-uniform on
    [1, condition], centers i.i.d. Gaussian with standard deviation `spread`.

    The same seed with a larger spread yields the same centers scaled up, so
    gradient diversity scales exactly with spread^2.
    """
    if m < 1 or d < 1:
        raise ValueError("m and d must be >= 1")
    if condition < 1.0:
        raise ValueError(f"condition must be >= 1, got {condition}")
    if spread < 0.0:
        raise ValueError(f"spread must be >= 0, got {spread}")
    gen_h = split_rng(rng, 0, "hessian").generator()
    hessian = np.exp(gen_h.uniform(0.0, np.log(condition), size=d))
    gen_c = split_rng(rng, 0, "centers").generator()
    centers = gen_c.standard_normal((m, d)) * spread
    return QuadraticEnsemble(hessian=hessian, centers=centers, sigma=sigma)


def _sigmoid(t: np.ndarray) -> np.ndarray:
    # Branch on sign to avoid overflow in exp.
    out = np.empty_like(t)
    pos = t >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-t[pos]))
    e = np.exp(t[~pos])
    out[~pos] = e / (1.0 + e)
    return out


@dataclass
class LogisticEnsemble:
    """Regularised logistic regression over per-worker datasets.

    Each design row already carries a trailing constant-one column for the
    intercept, so rows live in the model dimension d.  The local objective is
    the mean sample loss plus (l2 / 2) ||x||^2; stochastic gradients draw a
    with-replacement minibatch from the worker's own dataset.
    """

    designs: list[np.ndarray]   # worker i: (n_i, d) rows incl. bias column
    labels: list[np.ndarray]    # worker i: (n_i,) entries in {-1, +1}
    l2: float
    batch_size: int

    def __post_init__(self):
        if len(self.designs) != len(self.labels) or not self.designs:
            raise ValueError("designs and labels must be non-empty and aligned")
        self.designs = [np.asarray(a, dtype=np.float64) for a in self.designs]
        self.labels = [np.asarray(y, dtype=np.float64) for y in self.labels]
        d = self.designs[0].shape[1]
        for a, y in zip(self.designs, self.labels):
            if a.ndim != 2 or a.shape[1] != d or a.shape[0] != y.shape[0]:
                raise ValueError("inconsistent worker dataset shapes")
            if not np.all(np.abs(y) == 1.0):
                raise ValueError("labels must be +1 or -1")
        if not self.l2 > 0.0:
            raise ValueError(f"l2 must be > 0, got {self.l2}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")

    @property
    def m(self) -> int:
        return len(self.designs)

    @property
    def d(self) -> int:
        return self.designs[0].shape[1]

    def _check_worker(self, worker: int):
        if not 0 <= worker < self.m:
            raise IndexError(f"worker {worker} out of range for m={self.m}")

    @classmethod
    def from_worker_data(cls, features: list[np.ndarray], labels: list[np.ndarray],
                         l2: float, batch_size: int) -> "LogisticEnsemble":
        """Build from raw (n_i, d-1) feature blocks, appending the bias column."""
        designs = []
        for f in features:
            f = np.asarray(f, dtype=np.float64)
            designs.append(np.hstack([f, np.ones((f.shape[0], 1))]))
        return cls(designs=designs, labels=list(labels), l2=l2,
                   batch_size=batch_size)

    def _grad_on(self, rows: np.ndarray, y: np.ndarray, x: np.ndarray) -> np.ndarray:
        margins = y * (rows @ x)
        p = _sigmoid(-margins)
        data_grad = -(rows.T @ (y * p)) / rows.shape[0]
        return data_grad + self.l2 * x

    def local_value(self, worker: int, x: np.ndarray) -> float:
        self._check_worker(worker)
        margins = self.labels[worker] * (self.designs[worker] @ x)
        loss = float(np.mean(np.logaddexp(0.0, -margins)))
        return loss + 0.5 * self.l2 * float(np.dot(x, x))

    def local_grad(self, worker: int, x: np.ndarray) -> np.ndarray:
        """Full-batch gradient of worker's regularised objective."""
        self._check_worker(worker)
        x = as_param_vector(x)
        return self._grad_on(self.designs[worker], self.labels[worker], x)

    def stochastic_grad(self, worker: int, x: np.ndarray,
                        gen: np.random.Generator) -> np.ndarray:
        """Minibatch gradient, sampling with replacement from the worker data."""
        self._check_worker(worker)
        x = as_param_vector(x)
        rows_all = self.designs[worker]
        idx = gen.integers(0, rows_all.shape[0], size=self.batch_size)
        return self._grad_on(rows_all[idx], self.labels[worker][idx], x)

    def global_grad(self, x: np.ndarray) -> np.ndarray:
        grads = [self.local_grad(i, x) for i in range(self.m)]
        return np.mean(grads, axis=0)

    def objective_value(self, x: np.ndarray) -> float:
        return float(np.mean([self.local_value(i, x) for i in range(self.m)]))

    def constants(self) -> Constants:
        """Conservative constants: L is an upper bound (logistic curvature is
        at most ||row||^2 / 4 plus the regulariser); diversity and optimum
        are not available in closed form."""
        row_sq = max(float(np.max(np.sum(a * a, axis=1))) for a in self.designs)
        return Constants(
            smoothness=self.l2 + row_sq / 4.0,
            grad_diversity=None,
            f_inf=None,
            exact=False,
        )

    def to_config(self) -> dict:
        return {
            "type": "logistic",
            "designs": [a.tolist() for a in self.designs],
            "labels": [y.tolist() for y in self.labels],
            "l2": self.l2,
            "batch_size": self.batch_size,
        }

    @classmethod
    def from_config(cls, cfg: dict) -> "LogisticEnsemble":
        return cls(
            designs=[np.array(a, dtype=np.float64) for a in cfg["designs"]],
            labels=[np.array(y, dtype=np.float64) for y in cfg["labels"]],
            l2=float(cfg["l2"]),
            batch_size=int(cfg["batch_size"]),
        )


def make_cluster_data(n: int, dim: int, num_classes: int, class_sep: float,
                      rng: RngStream) -> tuple[np.ndarray, np.ndarray]:
    """Synthetic classification data: one unit-covariance Gaussian cluster
    per class, cluster centers drawn N(0, class_sep^2 I).

    Returns (features (n, dim), class ids (n,)); ids cycle 0..num_classes-1
    so class counts are balanced up to one sample.
    """
    if n < 1 or dim < 1:
        raise ValueError("n and dim must be >= 1")
    if num_classes < 2:
        raise ValueError(f"num_classes must be >= 2, got {num_classes}")
    if class_sep < 0.0:
        raise ValueError(f"class_sep must be >= 0, got {class_sep}")
    centers = split_rng(rng, 0, "centers").generator().standard_normal(
        (num_classes, dim)) * class_sep
    class_ids = np.arange(n) % num_classes
    features = centers[class_ids] + split_rng(rng, 0, "noise").generator(
    ).standard_normal((n, dim))
    return features, class_ids


def binary_labels(class_ids: np.ndarray) -> np.ndarray:
    """Collapse class ids to +/-1 targets: +1 for even ids, -1 for odd."""
    return np.where(np.asarray(class_ids) % 2 == 0, 1.0, -1.0)


def load_ensemble(path: str | Path):
    """Load a serialised ensemble of either family from JSON."""
    cfg = json.loads(Path(path).read_text())
    if cfg.get("type") == "quadratic":
        return QuadraticEnsemble.from_config(cfg)
    if cfg.get("type") == "logistic":
        return LogisticEnsemble.from_config(cfg)
    raise ValueError(f"unknown ensemble type {cfg.get('type')!r}")
