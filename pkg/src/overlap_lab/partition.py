"""Dataset partitioning across workers: shuffled IID splits and label-skewed
splits in which each worker is dominated by one class.

The skewed scheme assigns every worker a dominant class round-robin and fills
a fixed quota from that class first, then tops the worker up from the shuffled
remainder.  Quotas that cannot be met from the dominant class are recorded as
shortfalls and covered by the remainder, so worker sizes always come out equal.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import RngStream, split_rng

__all__ = ["PartitionPlan", "iid_partition", "label_skew_partition"]


@dataclass
class PartitionPlan:
    """Disjoint assignment of sample indices to workers, with audit fields."""

    assignments: list[np.ndarray]
    n_samples: int
    scheme: str
    dominant_class: list[int] | None = None
    shortfall: list[int] | None = None

    def __post_init__(self):
        self.assignments = [np.asarray(a, dtype=np.int64) for a in self.assignments]
        flat = np.concatenate(self.assignments) if self.assignments else np.array([], dtype=np.int64)
        if flat.size and (flat.min() < 0 or flat.max() >= self.n_samples):
            raise ValueError("assignment index out of range")
        if np.unique(flat).size != flat.size:
            raise ValueError("assignments overlap")

    @property
    def m(self) -> int:
        return len(self.assignments)

    def sizes(self) -> list[int]:
        return [int(a.size) for a in self.assignments]

    def to_config(self) -> dict:
        cfg = {
            "scheme": self.scheme,
            "n_samples": self.n_samples,
            "assignments": [a.tolist() for a in self.assignments],
        }
        if self.dominant_class is not None:
            cfg["dominant_class"] = self.dominant_class
        if self.shortfall is not None:
            cfg["shortfall"] = self.shortfall
        return cfg

    @classmethod
    def from_config(cls, cfg: dict) -> "PartitionPlan":
        return cls(
            assignments=[np.array(a, dtype=np.int64) for a in cfg["assignments"]],
            n_samples=int(cfg["n_samples"]),
            scheme=str(cfg["scheme"]),
            dominant_class=cfg.get("dominant_class"),
            shortfall=cfg.get("shortfall"),
        )

    def save(self, path: str | Path):
        Path(path).write_text(json.dumps(self.to_config(), indent=2) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "PartitionPlan":
        return cls.from_config(json.loads(Path(path).read_text()))


def iid_partition(n_samples: int, m: int, rng: RngStream) -> PartitionPlan:
    """Shuffle all indices and split into m near-equal contiguous chunks.

    Chunk sizes differ by at most one; the first (n mod m) workers take the
    extra sample.
    """
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    if n_samples < m:
        raise ValueError(f"need at least one sample per worker: n={n_samples}, m={m}")
    gen = split_rng(rng, 0, "partition").generator()
    perm = gen.permutation(n_samples)
    base, extra = divmod(n_samples, m)
    assignments, start = [], 0
    for i in range(m):
        size = base + (1 if i < extra else 0)
        assignments.append(perm[start:start + size])
        start += size
    return PartitionPlan(assignments=assignments, n_samples=n_samples, scheme="iid")


def label_skew_partition(labels: np.ndarray, m: int, n_total: int, n_skew: int,
                         rng: RngStream) -> PartitionPlan:
    """Give each worker n_total samples, n_skew of them from a dominant class.

    Dominant classes rotate round-robin through the sorted class values, so
    worker i is dominated by class i mod C.  Dominant draws are without
    replacement from that class's shuffled pool; if the pool runs dry the
    shortfall is recorded and covered from the shuffled global remainder,
    which also supplies the n_total - n_skew generic samples.
    """
    labels = np.asarray(labels)
    n = labels.shape[0]
    if labels.ndim != 1 or n == 0:
        raise ValueError("labels must be a non-empty 1-D array")
    if not 0 <= n_skew <= n_total:
        raise ValueError(f"need 0 <= n_skew <= n_total, got {n_skew} > {n_total}")
    if m * n_total > n:
        raise ValueError(f"m * n_total = {m * n_total} exceeds n = {n}")

    classes = [c for c in np.unique(labels)]
    gen = split_rng(rng, 0, "partition").generator()
    pools = {}
    for c in classes:
        idx = np.flatnonzero(labels == c)
        pools[c] = list(gen.permutation(idx))

    assignments = [[] for _ in range(m)]
    dominant, shortfall = [], []
    for i in range(m):
        c = classes[i % len(classes)]
        dominant.append(int(c))
        take = min(n_skew, len(pools[c]))
        assignments[i].extend(pools[c][:take])
        pools[c] = pools[c][take:]
        shortfall.append(n_skew - take)

    remainder = np.array([j for c in classes for j in pools[c]], dtype=np.int64)
    remainder = list(gen.permutation(remainder)) if remainder.size else []
    for i in range(m):
        need = n_total - n_skew + shortfall[i]
        assignments[i].extend(remainder[:need])
        remainder = remainder[need:]

    return PartitionPlan(
        assignments=[np.array(a, dtype=np.int64) for a in assignments],
        n_samples=n,
        scheme="label_skew",
        dominant_class=dominant,
        shortfall=shortfall,
    )
