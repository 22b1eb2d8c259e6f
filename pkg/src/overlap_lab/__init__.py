"""Local-update SGD with an overlapped anchor average.

Workers take tau local stochastic-gradient steps between collectives; at
each round boundary they are pulled part way toward an anchor model whose
refresh (a cluster-wide average) overlaps the next round's compute, so the
anchor every worker reads is one round stale.  The package bundles the
update rules and several baselines, synthetic quadratic and logistic
objectives with known constants, data partitioners, a wall-clock simulator
for the communication schedule, the convergence ceiling with its step-size
and budget rules, and a CLI for runs, sweeps, self-checks and
ceiling comparisons.
"""

from .algorithms import (
    AlgorithmKind,
    BLOCKING_KINDS,
    OVERLAPPED_KINDS,
    ClusterState,
    RunResult,
    run_training,
)
from .analysis import (
    BoundInputs,
    bound_rhs,
    bound_step_size,
    bound_terms,
    deviation_coefficient,
    min_iterations,
    rate_slope,
    run_bound_check,
)
from .core import THEOREM_LR, HyperParams, MetricsRecord, RngStream, split_rng
from .mixing import build_P, fixed_vector, run_matrix_reference, spectral_deviation
from .objectives import (
    LogisticEnsemble,
    QuadraticEnsemble,
    load_ensemble,
    make_cluster_data,
    make_quadratic,
)
from .partition import PartitionPlan, iid_partition, label_skew_partition
from .simulator import Schedule, TimingModel, comm_compute_ratio, simulate

__version__ = "0.1.0"

__all__ = [
    "AlgorithmKind",
    "BLOCKING_KINDS",
    "OVERLAPPED_KINDS",
    "ClusterState",
    "RunResult",
    "run_training",
    "BoundInputs",
    "bound_rhs",
    "bound_step_size",
    "bound_terms",
    "deviation_coefficient",
    "min_iterations",
    "rate_slope",
    "run_bound_check",
    "THEOREM_LR",
    "HyperParams",
    "MetricsRecord",
    "RngStream",
    "split_rng",
    "build_P",
    "fixed_vector",
    "run_matrix_reference",
    "spectral_deviation",
    "LogisticEnsemble",
    "QuadraticEnsemble",
    "load_ensemble",
    "make_cluster_data",
    "make_quadratic",
    "PartitionPlan",
    "iid_partition",
    "label_skew_partition",
    "Schedule",
    "TimingModel",
    "comm_compute_ratio",
    "simulate",
    "__version__",
]
