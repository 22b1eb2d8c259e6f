"""Shared primitives: parameter vectors, seeded RNG streams, run hyperparameters.

Everything downstream works on 1-D float64 numpy arrays.  Randomness is
organised as named streams derived from a single root seed, so that any run
can be replayed bit for bit and per-worker streams stay independent of the
order in which they are consumed.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "axpy",
    "as_param_vector",
    "RngStream",
    "split_rng",
    "HyperParams",
    "MetricsRecord",
    "THEOREM_LR",
]

# Marker accepted in place of a numeric step size: resolve eta from the
# convergence analysis (see analysis.bound_step_size) using the objective's
# smoothness constant.
THEOREM_LR = "theorem"


def as_param_vector(values) -> np.ndarray:
    """Coerce to a finite 1-D float64 array, rejecting anything else."""
    x = np.asarray(values, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError(f"parameter vector must be 1-D, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("parameter vector contains non-finite entries")
    return x


def axpy(a: float, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Return a*x + y for matching 1-D vectors.

    This is the only vector kernel the update rules compose; keeping it in
    one place pins down the floating-point evaluation order.
    """
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {y.shape}")
    return a * x + y


def _purpose_words(purpose: str) -> list[int]:
    # Stable 64-bit digest of the purpose tag, split into two uint32 words so
    # it can feed SeedSequence entropy on any platform.
    digest = hashlib.sha256(purpose.encode("utf-8")).digest()
    lo = int.from_bytes(digest[0:4], "little")
    hi = int.from_bytes(digest[4:8], "little")
    return [lo, hi]


@dataclass(frozen=True)
class RngStream:
    """A named, replayable random stream: (seed, worker, purpose).

    Streams with distinct (worker, purpose) ids are statistically
    independent.  `generator()` materialises a fresh counter-based generator
    positioned at the start of the stream, so two calls with identical ids
    yield identical draws.
    """

    seed: int
    worker: int = 0
    purpose: str = "root"

    def __post_init__(self):
        if self.worker < 0:
            raise ValueError(f"worker index must be >= 0, got {self.worker}")

    def generator(self) -> np.random.Generator:
        entropy = [self.seed & 0xFFFFFFFFFFFFFFFF, self.worker]
        entropy += _purpose_words(self.purpose)
        seq = np.random.SeedSequence(entropy)
        return np.random.Generator(np.random.Philox(seq))


def split_rng(root: RngStream, worker: int, purpose: str) -> RngStream:
    """Derive the (worker, purpose) child stream of a root stream."""
    if root.purpose != "root":
        raise ValueError("streams are split only from the root stream")
    return RngStream(seed=root.seed, worker=worker, purpose=purpose)


@dataclass(frozen=True)
class HyperParams:
    """Validated bundle of run parameters shared by every algorithm.

    eta may be a positive float or the marker string "theorem", in which
    case the driver resolves it from the smoothness constant of the
    objective and the iteration budget.
    """

    m: int
    d: int
    tau: int
    alpha: float
    eta: float | str
    K: int
    seed: int
    beta: float = 0.0
    mu: float = 0.0

    def __post_init__(self):
        if self.m < 1:
            raise ValueError(f"m must be >= 1, got {self.m}")
        if self.d < 1:
            raise ValueError(f"d must be >= 1, got {self.d}")
        if self.tau < 1:
            raise ValueError(f"tau must be >= 1, got {self.tau}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if isinstance(self.eta, str):
            if self.eta != THEOREM_LR:
                raise ValueError(f"eta must be a positive float or '{THEOREM_LR}'")
        elif not self.eta > 0.0:
            raise ValueError(f"eta must be > 0, got {self.eta}")
        if not 0.0 <= self.beta < 1.0:
            raise ValueError(f"beta must lie in [0, 1), got {self.beta}")
        if not 0.0 <= self.mu < 1.0:
            raise ValueError(f"mu must lie in [0, 1), got {self.mu}")
        if self.K < 1:
            raise ValueError(f"K must be >= 1, got {self.K}")

    def root_stream(self) -> RngStream:
        return RngStream(seed=self.seed)


@dataclass
class MetricsRecord:
    """One per-step measurement row.

    Objective, gradient norm and consensus distance are evaluated at the
    iterate entering step k; wall time is the simulated completion time of
    step k, and comm_bytes / idle_s are the amounts charged to step k.
    """

    k: int
    wall_time_s: float
    objective: float
    grad_norm_sq: float
    consensus_dist: float
    comm_bytes: float = 0.0
    idle_s: float = 0.0
