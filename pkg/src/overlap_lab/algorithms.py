"""Per-node update rules and the training driver.

All algorithms share the same skeleton: every worker takes tau local
stochastic-gradient steps, then a round-end action couples the workers.  The
anchored overlap scheme pulls each worker toward an anchor model that is one
round stale (the refresh of the anchor is a collective average that overlaps
the next round's compute), optionally smoothing the anchor with a momentum
buffer.  Synchronous SGD, periodic averaging, delta-consistent overlap
(cocod) and an elastic-averaging baseline (easgd) round out the comparison
set.

Simulated wall-clock time never feeds back into the optimisation state, so a
run's trajectory depends only on the hyperparameters and seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .core import HyperParams, MetricsRecord, RngStream, as_param_vector, split_rng
from .objectives import QuadraticEnsemble

__all__ = [
    "AlgorithmKind",
    "BLOCKING_KINDS",
    "OVERLAPPED_KINDS",
    "ClusterState",
    "CocodState",
    "local_step",
    "pullback",
    "anchor_average",
    "anchor_momentum_update",
    "sync_sgd_step",
    "local_sgd_round",
    "cocod_round",
    "easgd_round",
    "RunResult",
    "run_training",
    "DIVERGENCE_CAP",
]

# Objective values above this (or any non-finite state) end a run with
# status "diverged".
DIVERGENCE_CAP = 1e12


class AlgorithmKind(str, Enum):
    SYNC_SGD = "sync_sgd"
    LOCAL_SGD = "local_sgd"
    ANCHOR_OVERLAP = "anchor_overlap"
    ANCHOR_OVERLAP_MOMENTUM = "anchor_overlap_momentum"
    COCOD = "cocod"
    EASGD = "easgd"


# Kinds whose round-end coupling must finish before anyone proceeds, versus
# kinds whose collective runs behind the following round's compute.
BLOCKING_KINDS = frozenset(
    {AlgorithmKind.SYNC_SGD, AlgorithmKind.LOCAL_SGD, AlgorithmKind.EASGD}
)
OVERLAPPED_KINDS = frozenset(
    {AlgorithmKind.ANCHOR_OVERLAP, AlgorithmKind.ANCHOR_OVERLAP_MOMENTUM,
     AlgorithmKind.COCOD}
)

_ANCHOR_KINDS = frozenset(
    {AlgorithmKind.ANCHOR_OVERLAP, AlgorithmKind.ANCHOR_OVERLAP_MOMENTUM}
)


@dataclass
class ClusterState:
    """Models held by the cluster: one row per worker plus the anchor.

    anchor_momentum is the anchor's velocity buffer; local_momenta hold the
    per-worker Nesterov buffers and stay exactly zero while mu = 0.
    """

    workers: np.ndarray          # (m, d)
    anchor: np.ndarray           # (d,)
    anchor_momentum: np.ndarray  # (d,)
    local_momenta: np.ndarray    # (m, d)
    step: int = 0

    @classmethod
    def initial(cls, m: int, init: np.ndarray) -> "ClusterState":
        """All workers and the anchor start from the same point."""
        init = as_param_vector(init)
        d = init.shape[0]
        return cls(
            workers=np.tile(init, (m, 1)),
            anchor=init.copy(),
            anchor_momentum=np.zeros(d),
            local_momenta=np.zeros((m, d)),
        )

    @property
    def m(self) -> int:
        return self.workers.shape[0]

    @property
    def d(self) -> int:
        return self.workers.shape[1]

    def consensus(self) -> bool:
        return bool(np.all(self.workers == self.workers[0]))


@dataclass
class CocodState:
    """Extra cocod bookkeeping: round-start snapshots and the average of the
    previous round's end models (the one whose communication is in flight)."""

    round_start: np.ndarray  # (m, d)
    stale_avg: np.ndarray    # (d,)


def _local_step_all(workers, momenta, grads, eta, mu):
    # Canonical local update, vectorised over workers.  Nesterov form:
    # buf <- mu buf + g; x <- x - eta (g + mu buf).
    if mu > 0.0:
        momenta *= mu
        momenta += grads
        workers -= eta * (grads + mu * momenta)
    else:
        workers -= eta * grads


def local_step(state: ClusterState, worker: int, g: np.ndarray, eta: float,
               mu: float = 0.0):
    """One stochastic-gradient step on a single worker."""
    if not 0 <= worker < state.m:
        raise IndexError(f"worker {worker} out of range for m={state.m}")
    g = np.asarray(g, dtype=np.float64)
    if g.shape != (state.d,):
        raise ValueError(f"gradient shape {g.shape} != ({state.d},)")
    row = state.workers[worker:worker + 1]
    buf = state.local_momenta[worker:worker + 1]
    _local_step_all(row, buf, g[None, :], eta, mu)


def pullback(state: ClusterState, alpha: float):
    """Blend every worker toward the anchor: x <- (1-alpha) x + alpha z.

    The convex form is exact at both ends: alpha=0 leaves workers untouched
    and alpha=1 copies the anchor bit for bit.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    state.workers[:] = (1.0 - alpha) * state.workers + alpha * state.anchor


def anchor_average(state: ClusterState):
    """Refresh the anchor with the mean of the (post-pullback) workers.

    Worker rows are reduced in ascending index order every time, so replays
    reproduce the same bits.
    """
    state.anchor[:] = np.mean(state.workers, axis=0)


def anchor_momentum_update(state: ClusterState, beta: float):
    """Momentum form of the anchor refresh.

    v <- beta v + (mean(workers) - z); z <- z + v.  At beta = 0 the update
    collapses to the plain average; that branch writes the average directly
    so the reduction is exact in floating point, not just in exact
    arithmetic.
    """
    if not 0.0 <= beta < 1.0:
        raise ValueError(f"beta must lie in [0, 1), got {beta}")
    avg = np.mean(state.workers, axis=0)
    if beta == 0.0:
        state.anchor_momentum[:] = avg - state.anchor
        state.anchor[:] = avg
    else:
        state.anchor_momentum[:] = beta * state.anchor_momentum + (avg - state.anchor)
        state.anchor[:] = state.anchor + state.anchor_momentum


def _average_all(state: ClusterState):
    avg = np.mean(state.workers, axis=0)
    state.workers[:] = avg
    state.anchor[:] = avg


def sync_sgd_step(state: ClusterState, grads: np.ndarray, eta: float,
                  mu: float = 0.0):
    """One fully synchronous step: per-worker gradient steps followed by an
    exact average.  Workers must agree bit for bit on entry."""
    if not state.consensus():
        raise ValueError("sync step requires identical worker models on entry")
    grads = np.asarray(grads, dtype=np.float64)
    if grads.shape != state.workers.shape:
        raise ValueError(f"gradient block shape {grads.shape} != {state.workers.shape}")
    _local_step_all(state.workers, state.local_momenta, grads, eta, mu)
    _average_all(state)


def local_sgd_round(state: ClusterState, grad_fn, eta: float, tau: int,
                    mu: float = 0.0):
    """tau local steps per worker, then plain model averaging."""
    for _ in range(tau):
        for i in range(state.m):
            local_step(state, i, grad_fn(i, state.workers[i]), eta, mu)
    _average_all(state)


def cocod_round(state: ClusterState, cocod: CocodState, grad_fn, eta: float,
                tau: int, mu: float = 0.0):
    """One delta-consistent overlapped round.

    Workers restart from the in-flight average of the previous round's end
    models plus their own accumulated local delta; the average of this
    round's end models becomes the next round's in-flight value.
    """
    for _ in range(tau):
        for i in range(state.m):
            local_step(state, i, grad_fn(i, state.workers[i]), eta, mu)
    _apply_cocod_restart(state, cocod)


def _apply_cocod_restart(state: ClusterState, cocod: CocodState):
    new_stale = np.mean(state.workers, axis=0)
    state.workers[:] = cocod.stale_avg + (state.workers - cocod.round_start)
    cocod.stale_avg = new_stale
    cocod.round_start = state.workers.copy()


def easgd_round(state: ClusterState, grad_fn, eta: float, tau: int,
                alpha: float, center_step: float, mu: float = 0.0):
    """Elastic-averaging round: local steps, symmetric pull of workers toward
    the center and of the center toward the pre-pull worker average."""
    _check_center_step(center_step, state.m)
    for _ in range(tau):
        for i in range(state.m):
            local_step(state, i, grad_fn(i, state.workers[i]), eta, mu)
    _apply_easgd_coupling(state, alpha, center_step)


def _check_center_step(center_step: float, m: int):
    if not center_step > 0.0:
        raise ValueError(f"center step must be > 0, got {center_step}")
    # Stability guard on the center update.
    if center_step * m >= 1.0:
        raise ValueError(
            f"center step {center_step} with m={m} violates center_step * m < 1"
        )


def _apply_easgd_coupling(state: ClusterState, alpha: float, center_step: float):
    pre_mean = np.mean(state.workers, axis=0)
    pullback(state, alpha)
    state.anchor[:] = state.anchor + center_step * (pre_mean - state.anchor)


@dataclass
class RunResult:
    """Outcome of one training run."""

    status: str                  # "completed" or "diverged"
    records: list[MetricsRecord]
    avg_grad_norm: float         # mean of ||grad F(y_k)||^2 over evaluated steps
    final_objective: float
    min_objective: float
    steps_done: int
    diverged_at: int | None
    state: ClusterState
    schedule: object | None = None
    trace_y: np.ndarray | None = None
    trace_mean_grad: np.ndarray | None = None
    stacked_states: np.ndarray | None = None

    @property
    def diverged(self) -> bool:
        return self.status == "diverged"


def _resolve_eta(hp: HyperParams, ensemble) -> float:
    if not isinstance(hp.eta, str):
        return float(hp.eta)
    from .analysis import bound_step_size

    return bound_step_size(ensemble.constants().smoothness, hp.m, hp.K)


def _eval_point(kind: AlgorithmKind, workers: np.ndarray, anchor: np.ndarray,
                alpha: float) -> np.ndarray:
    if kind in _ANCHOR_KINDS:
        return (1.0 - alpha) * np.mean(workers, axis=0) + alpha * anchor
    if kind is AlgorithmKind.SYNC_SGD:
        # Consensus is exact, so the common model is the iterate.
        return workers[0]
    return np.mean(workers, axis=0)


def run_training(kind: AlgorithmKind, hp: HyperParams, ensemble,
                 init: np.ndarray, *, metrics_sink=None, stride: int = 1,
                 timing=None, easgd_center_step: float | None = None,
                 reset_local_momentum: bool = False, record_trace: bool = False,
                 record_states: bool = False, sync_hook=None) -> RunResult:
    """Run one algorithm for K steps and collect per-step measurements.

    Objective, gradient norm and consensus distance are evaluated at the
    iterate entering each step, matching the average the convergence bound
    controls.  When a timing model is given, the simulated schedule supplies
    wall-clock, idle and byte columns; it never alters the trajectory.
    Non-finite models or objective values beyond DIVERGENCE_CAP end the run
    early with status "diverged" and the offending step index.
    """
    kind = AlgorithmKind(kind)
    if kind is AlgorithmKind.SYNC_SGD and hp.tau != 1:
        raise ValueError("sync_sgd runs with tau=1; use local_sgd for tau>1")
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    init = as_param_vector(init)
    if init.shape[0] != hp.d:
        raise ValueError(f"init dimension {init.shape[0]} != d={hp.d}")

    m, d, tau, alpha, beta, mu, K = (hp.m, hp.d, hp.tau, hp.alpha, hp.beta,
                                     hp.mu, hp.K)
    eta = _resolve_eta(hp, ensemble)
    state = ClusterState.initial(m, init)
    cocod = CocodState(round_start=state.workers.copy(), stale_avg=init.copy())
    center_step = easgd_center_step
    if kind is AlgorithmKind.EASGD:
        if center_step is None:
            center_step = 0.9 / m
        _check_center_step(center_step, m)

    root = hp.root_stream()
    gens = [split_rng(root, i, "noise").generator() for i in range(m)]

    schedule = None
    if timing is not None:
        from .simulator import simulate

        rounds = max(1, -(-K // tau))
        schedule = simulate(kind, timing, rounds, tau, m,
                            split_rng(root, 0, "timing"))

    quad = isinstance(ensemble, QuadraticEnsemble)
    if quad:
        hessian, centers, noise_scale = (ensemble.hessian, ensemble.centers,
                                         ensemble.noise_scale)
        noise_block = np.empty((m, d))

    workers, anchor = state.workers, state.anchor
    grads = np.empty((m, d))
    records: list[MetricsRecord] = []
    trace_y = np.empty((K + 1, d)) if record_trace else None
    trace_g = np.empty((K, d)) if record_trace else None
    stacked = np.empty((K + 1, d, m + 1)) if record_states else None

    lhs_sum = 0.0
    steps_eval = 0
    min_obj = np.inf
    last_obj = np.nan
    status, diverged_at = "completed", None

    def snapshot(slot):
        stacked[slot, :, :m] = workers.T
        stacked[slot, :, m] = anchor

    if record_states:
        snapshot(0)

    for k in range(K):
        y = _eval_point(kind, workers, anchor, alpha)
        obj = ensemble.objective_value(y)
        gg = ensemble.global_grad(y)
        grad_norm_sq = float(gg @ gg)
        if not (obj < DIVERGENCE_CAP) or not np.isfinite(grad_norm_sq):
            status, diverged_at = "diverged", k
            break
        lhs_sum += grad_norm_sq
        steps_eval += 1
        min_obj = min(min_obj, obj)
        last_obj = obj
        if record_trace:
            trace_y[k] = y

        if k % stride == 0:
            sync_step = (k + 1) % tau == 0
            r = k // tau
            wall = idle = 0.0
            comm_bytes = 0.0
            if schedule is not None:
                wall = float(schedule.step_wall[k])
                if sync_step:
                    idle = float(schedule.round_idle[r])
                    comm_bytes = float(schedule.round_bytes[r])
            diff = workers - y
            rec = MetricsRecord(
                k=k,
                wall_time_s=wall,
                objective=obj,
                grad_norm_sq=grad_norm_sq,
                consensus_dist=float(np.sum(diff * diff)) / m,
                comm_bytes=comm_bytes,
                idle_s=idle,
            )
            records.append(rec)
            if metrics_sink is not None:
                metrics_sink(rec)

        if quad:
            for i in range(m):
                noise_block[i] = gens[i].standard_normal(d)
            np.multiply(hessian, workers - centers, out=grads)
            grads += noise_block * noise_scale
        else:
            for i in range(m):
                grads[i] = ensemble.stochastic_grad(i, workers[i], gens[i])
        if record_trace:
            trace_g[k] = np.mean(grads, axis=0)

        if kind is AlgorithmKind.SYNC_SGD:
            sync_sgd_step(state, grads, eta, mu)
        else:
            _local_step_all(workers, state.local_momenta, grads, eta, mu)
            if (k + 1) % tau == 0:
                if sync_hook is not None:
                    anchor_read = anchor.copy()
                if kind is AlgorithmKind.LOCAL_SGD:
                    _average_all(state)
                elif kind is AlgorithmKind.ANCHOR_OVERLAP:
                    pullback(state, alpha)
                    anchor_average(state)
                elif kind is AlgorithmKind.ANCHOR_OVERLAP_MOMENTUM:
                    pullback(state, alpha)
                    anchor_momentum_update(state, beta)
                elif kind is AlgorithmKind.COCOD:
                    _apply_cocod_restart(state, cocod)
                elif kind is AlgorithmKind.EASGD:
                    _apply_easgd_coupling(state, alpha, center_step)
                if reset_local_momentum and mu > 0.0:
                    state.local_momenta[:] = 0.0
                if sync_hook is not None:
                    sync_hook(step=k, anchor_read=anchor_read,
                              anchor_written=anchor.copy())
        state.step = k + 1
        if record_states:
            snapshot(k + 1)
        if not np.all(np.isfinite(workers)):
            status, diverged_at = "diverged", k + 1
            break

    if status == "completed":
        y = _eval_point(kind, workers, anchor, alpha)
        final_obj = ensemble.objective_value(y)
        if record_trace:
            trace_y[K] = y
        if not (final_obj < DIVERGENCE_CAP):
            status, diverged_at = "diverged", K
            final_obj = last_obj
    else:
        final_obj = last_obj

    done = steps_eval if status == "diverged" else K
    return RunResult(
        status=status,
        records=records,
        avg_grad_norm=lhs_sum / steps_eval if steps_eval else np.nan,
        final_objective=float(final_obj),
        min_objective=float(min_obj),
        steps_done=done,
        diverged_at=diverged_at,
        state=state,
        schedule=schedule,
        trace_y=trace_y if (record_trace and status == "completed") else
        (trace_y[:steps_eval] if record_trace else None),
        trace_mean_grad=trace_g if (record_trace and status == "completed") else
        (trace_g[:steps_eval] if record_trace else None),
        stacked_states=stacked,
    )
